//! ELU and ReLU responses and derivatives, plus batch normalization in train
//! and eval mode.

use elu_tv_denoise::layers::{
    batchnorm_forward, batchnorm_infer, elu, elu_grad, BatchNormState, EluParams, Mode,
};
use elu_tv_denoise::tensor::{Shape, Tensor};

fn main() -> elu_tv_denoise::Result<()> {
    println!("{:>6} {:>10} {:>10} {:>10} {:>10} {:>6}", "x", "elu(1)", "elu'(1)", "elu(0.1)", "elu'(0.1)", "relu");
    for i in -8..=4 {
        let x = i as f64 * 0.5;
        let (a, b) = (EluParams::new(1.0)?.alpha(), EluParams::new(0.1)?.alpha());
        println!(
            "{x:>6.2} {:>10.5} {:>10.5} {:>10.5} {:>10.5} {:>6.2}",
            elu(x, a),
            elu_grad(x, a),
            elu(x, b),
            elu_grad(x, b),
            x.max(0.0)
        );
    }

    let x = Tensor::from_fn(Shape::new(4, 2, 3, 3), |n, c, i, j| (n as f64 - 1.5) * (c + 1) as f64 + 0.1 * (i * 3 + j) as f64);
    let mut bn = BatchNormState::<f64>::new(2);
    let y = batchnorm_forward(&x, &mut bn)?;
    for c in 0..2 {
        let vals: Vec<f64> = (0..4).flat_map(|n| y.plane(n, c).to_vec()).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        println!("bn train channel {c}: mean {mean:+.2e} var {var:.6}");
    }
    for _ in 0..100 {
        batchnorm_forward(&x, &mut bn)?;
    }
    bn.mode = Mode::Eval;
    let e = batchnorm_infer(&x, &bn)?;
    let rms = (e.sub(&y)?.sum_squares() / x.shape().len() as f64).sqrt();
    println!("running mean {:?} running var {:?}", bn.running_mean, bn.running_var);
    println!("eval vs train rms after warmup: {rms:.2e}");
    Ok(())
}
