//! Martingale-coboundary decomposition `f = h - g + g∘T`, exactly in Fourier
//! coefficients and approximately on an Ulam grid of the LSV map.

use asclt_lab::martingale::{gordin_decompose, reverse_md_asclt, MdGenerator, Representation, ReverseMdStream};
use asclt_lab::systems::{Observable, System};

fn main() -> asclt_lab::Result<()> {
    let sys = System::doubling();
    let f = Observable::fourier(vec![(1, 1.0), (2, 1.0)]);
    let exact = gordin_decompose(&sys, &f, 0, Representation::FourierExact)?;
    println!("g = {:?}", exact.g.coefficients());
    println!("h = {:?}", exact.h.coefficients());
    println!("E h^2 = {}, identity residual = {:.1e}", exact.h_second_moment(), exact.identity_residual(10_000, 1));

    let lsv = System::lsv(0.3)?;
    let grid = gordin_decompose(&lsv, &Observable::identity(), 2000, Representation::UlamGrid { grid: 2048 })?;
    println!(
        "LSV grid: K = {}, Neumann defect = {:.1e}, int |Lh| = {:.1e}, E h^2 = {:.5}",
        grid.k_truncation,
        grid.neumann_defect(),
        grid.transfer_of_h_l1(),
        grid.h_second_moment()
    );

    let stream = ReverseMdStream {
        generator: MdGenerator::Dynamical { system: sys, h: exact.h.observable() },
        zeta: exact.h_second_moment(),
    };
    for s in reverse_md_asclt(&stream, 100_000, 4, 9)? {
        println!("seed {}: KS = {:.4}, quadratic variation {:?}", s.seed_index, s.ks, s.quadratic_variation.last());
    }
    Ok(())
}
