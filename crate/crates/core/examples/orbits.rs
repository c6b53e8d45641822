//! Replica Birkhoff sums, their checkpoints and the tight-maxima profile.

use asclt_lab::orbits::{replica_orbits, tight_maxima_profile, CheckpointGrid};
use asclt_lab::renorm::RenormSeq;
use asclt_lab::systems::{Observable, System};

fn main() -> asclt_lab::Result<()> {
    let sys = System::doubling();
    let f = Observable::cosine(1);
    let grid = CheckpointGrid::explicit(vec![100, 1_000, 10_000, 100_000])?;
    let runs = replica_orbits(&sys, &f, 100_000, 500, 11, &grid)?;
    let seq = RenormSeq::sqrt();

    let first = &runs[0];
    for c in first.checkpoints() {
        println!("k = {:>6}: S_k = {:+9.3}, max |S_j| = {:8.3}", c.k, c.sum, c.running_max);
    }
    for row in tight_maxima_profile(&runs, &seq, &[1.0, 2.0, 3.0])? {
        println!("n = {:>6}, c = {}: P(max > c sqrt(n)) = {:.3}", row.n, row.c, row.prob);
    }
    Ok(())
}
