//! Ulam discretization of the perturbed transfer operator, its leading
//! eigenvalue and the Green-Kubo variance.

use asclt_lab::spectral::{green_kubo_sigma2, EigenCurve, GreenKuboMethod};
use asclt_lab::systems::{Observable, System};

fn main() -> asclt_lab::Result<()> {
    let sys = System::doubling();
    let f = Observable::cosine(1);
    let ts: Vec<f64> = (0..=10).map(|i| 0.1 * i as f64).collect();
    let curve = EigenCurve::compute(&sys, &f, &ts, 1024)?;
    for ((t, l), g) in curve.t.iter().zip(&curve.lambda).zip(&curve.gap) {
        println!(
            "t = {t:.1}: lambda = {:.6} {:+.2e}i, 1 - t^2/4 = {:.6}, |l2/l1| ~ {g:.3}",
            l.re,
            l.im,
            1.0 - t * t / 4.0
        );
    }
    // Evaluate at the exact node: interpolating lambda and raising it to the
    // n-th power amplifies the interpolation error n-fold.
    let n = 10_000u64;
    let t = 1.0 / (n as f64).sqrt();
    let l = EigenCurve::compute(&sys, &f, &[t], 4096)?.lambda[0];
    println!("lambda(1/sqrt(n))^n = {:.5}, exp(-1/4) = {:.5}", l.powu(n as u32).re, (-0.25f64).exp());

    let gk = green_kubo_sigma2(&sys, &Observable::fourier(vec![(1, 1.0), (2, 1.0)]), 40, GreenKuboMethod::UlamPowers { grid: 2048 })?;
    println!("Green-Kubo sigma^2 of cos(2 pi x) + cos(4 pi x): {:.6} +- {:.1e}", gk.sigma2, gk.stderr);
    Ok(())
}
