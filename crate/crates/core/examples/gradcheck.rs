//! Finite-difference verification of every backward pass, in double precision.
//!
//!     cargo run --release --example gradcheck [seeds]

use elu_tv_denoise::gradcheck::{run, Scope};

fn main() -> elu_tv_denoise::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(3);
    let mut worst = std::collections::BTreeMap::<String, (f64, f64)>::new();
    for seed in 0..seeds {
        for r in run(Scope::All, seed, false)? {
            let e = worst.entry(r.name.clone()).or_insert((0.0, r.tolerance));
            e.0 = e.0.max(r.max_rel_err);
        }
    }
    println!("{:<18} {:>12} {:>8}", "check", "max rel err", "tol");
    for (name, (err, tol)) in &worst {
        println!("{name:<18} {err:>12.3e} {tol:>8.0e} {}", if err <= tol { "ok" } else { "FAIL" });
    }
    let corrupted = run(Scope::Layer, 0, true)?;
    println!("negative control: {} of {} corrupted checks rejected", corrupted.iter().filter(|r| !r.passed()).count(), corrupted.len());
    Ok(())
}
