//! Same-padded convolution, its backward pass and kernel rotation on a tiny
//! example, checked against the adjoint identity ⟨conv(u, f), g⟩ = ⟨u, ∂u⟩.

use elu_tv_denoise::conv::{conv2d_backward, conv2d_forward, rotate180, Filter};
use elu_tv_denoise::tensor::{Shape, Tensor};

fn show(label: &str, t: &Tensor<f64>) {
    let s = t.shape();
    println!("{label} {s}");
    for i in 0..s.h {
        let row: Vec<String> = (0..s.w).map(|j| format!("{:7.3}", t.get(0, 0, i, j))).collect();
        println!("  {}", row.join(" "));
    }
}

fn main() -> elu_tv_denoise::Result<()> {
    let u = Tensor::from_fn(Shape::new(1, 1, 5, 5), |_, _, i, j| (i * 5 + j) as f64 / 24.0);
    let laplace = Filter::single(&[0.0, 1.0, 0.0, 1.0, -4.0, 1.0, 0.0, 1.0, 0.0], 0.0)?;
    let sobel = Filter::single(&[-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0], 0.0)?;

    show("input", &u);
    show("laplacian (zero padded)", &conv2d_forward(&u, &laplace, 1)?);
    show("sobel-x", &conv2d_forward(&u, &sobel, 1)?);
    show("sobel-x rotated 180", rotate180(&sobel).weights());

    let g = Tensor::from_fn(u.shape(), |_, _, i, j| ((i + 2 * j) % 3) as f64 - 1.0);
    let (gu, gf) = conv2d_backward(&u, &sobel, &g, 1)?;
    let lhs = conv2d_forward(&u, &sobel, 1)?.dot(&g)?;
    let rhs = u.dot(&gu)?;
    println!("adjoint: <conv(u,f),g> = {lhs:.12}  <u,grad_u> = {rhs:.12}");
    show("filter gradient", gf.weights());
    println!("bias gradient = {:?}", gf.bias());
    Ok(())
}
