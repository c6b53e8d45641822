//! The three systems and a few observables evaluated along short orbits.

use asclt_lab::rng::replica_rng;
use asclt_lab::systems::{Alphabet, Observable, System};

fn main() -> asclt_lab::Result<()> {
    let systems = [
        System::doubling(),
        System::bernoulli(Alphabet::Finite { probs: vec![0.25, 0.75] }, 0.5)?,
        System::lsv(0.3)?,
    ];
    let f = Observable::cosine(1);
    for sys in &systems {
        let mut p = sys.sample_invariant(replica_rng(1, 0));
        print!("{:<16}", sys.name());
        for _ in 0..6 {
            print!(" x={:.4} f={:+.4} |", sys.coordinate(&p), f.eval(sys, &p));
            sys.step(&mut p);
        }
        println!();
    }

    // Symbolic doubling keeps full precision far past 53 steps.
    let sys = System::doubling();
    let mut p = sys.sample_invariant(replica_rng(2, 0));
    for _ in 0..1000 {
        sys.step(&mut p);
    }
    println!("doubling coordinate after 1000 steps: {:.12}", sys.coordinate(&p));
    Ok(())
}
