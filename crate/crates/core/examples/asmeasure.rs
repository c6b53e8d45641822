//! Log-averaged empirical measure along one doubling-map orbit.

use asclt_lab::asmeasure::{build_log_measure, DEFAULT_CLIP};
use asclt_lab::laws::TargetLaw;
use asclt_lab::orbits::{run_orbit, CheckpointGrid};
use asclt_lab::renorm::RenormSeq;
use asclt_lab::rng::replica_rng;
use asclt_lab::systems::{Observable, System};

fn main() -> asclt_lab::Result<()> {
    let sys = System::doubling();
    let f = Observable::cosine(1);
    let seq = RenormSeq::sqrt();
    let law = TargetLaw::gaussian(0.5)?;
    let n = 1_000_000;
    let orbit = run_orbit(&sys, &f, n, replica_rng(3, 0), &CheckpointGrid::explicit(vec![])?, true)?;
    let traj = orbit.trajectory.expect("trajectory requested");
    for m in [1_000u64, 10_000, 100_000, 1_000_000] {
        let measure = build_log_measure(traj.iter().copied(), &seq, m, DEFAULT_CLIP)?;
        let (mean, var) = measure.moments();
        println!(
            "N = {m:>8}: KS = {:.4}, mean = {mean:+.4}, variance = {var:.4}",
            measure.ks_to(&law)?
        );
    }
    Ok(())
}
