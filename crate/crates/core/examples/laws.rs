//! Target laws: characteristic functions, distribution functions, samplers
//! and Kolmogorov-Smirnov distances.

use asclt_lab::laws::{ks_sample, stable_from_tails, TargetLaw};
use asclt_lab::rng::replica_rng;

fn main() -> asclt_lab::Result<()> {
    // Pareto tails P(Z > x) = x^-1.5 give this stable limit.
    let stable = stable_from_tails(1.5, 1.0, 0.0)?;
    let gauss = TargetLaw::gaussian(0.5)?;
    println!("stable law: {stable:?}");
    for x in [-4.0, -1.0, 0.0, 1.0, 4.0] {
        println!(
            "x = {x:>5}: F_stable = {:.6}, F_gauss = {:.6}",
            stable.try_cdf(x)?,
            gauss.try_cdf(x)?
        );
    }
    for t in [0.5, 1.0, 2.0] {
        let phi = stable.char_fn(t);
        println!("phi({t}) = {:.6} {:+.6}i", phi.re, phi.im);
    }

    let mut rng = replica_rng(7, 0);
    let mut draws: Vec<f64> = (0..200_000).map(|_| stable.sample(&mut rng)).collect();
    let table = stable.fast_cdf()?;
    println!("KS(sampler, CDF) over 2e5 draws: {:.5}", ks_sample(&mut draws, &table)?);
    Ok(())
}
