//! First-return map of the doubling map on [1/2, 1): Kac's formula and a
//! lift of the central limit theorem.

use asclt_lab::inducing::{kac_check, lift_experiment, InducedSystem, ReturnSet};
use asclt_lab::laws::{ks_sample, TargetLaw};
use asclt_lab::renorm::RenormSeq;
use asclt_lab::systems::{Observable, System};

fn main() -> asclt_lab::Result<()> {
    let ind = InducedSystem::new(System::doubling(), ReturnSet::cylinders(1, vec![1])?)?;
    let kac = kac_check(&ind, 200_000, 5)?;
    println!(
        "mean return time {:.4}, m(Y) {:.3}, product {:.4} +- {:.4}",
        kac.mean_phi, kac.m_y, kac.product, kac.stderr
    );
    for k in 1..=6 {
        println!(
            "P(phi = {k}) = {:.4} (exact {:.4})",
            kac.counts[k - 1] as f64 / kac.n_returns as f64,
            0.5f64.powi(k as i32)
        );
    }

    let law = TargetLaw::gaussian(0.5)?;
    let lift = lift_experiment(&ind, &Observable::cosine(1), &RenormSeq::sqrt(), 4096, 2000, 6, &[2.0], &[100, 1000])?;
    println!(
        "KS induced {:.4}, KS direct {:.4}",
        ks_sample(&mut lift.induced.clone(), &law)?,
        ks_sample(&mut lift.direct.clone(), &law)?
    );
    Ok(())
}
