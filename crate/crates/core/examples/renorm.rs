//! Normalizing sequences: `sqrt(n)`, a logarithmic correction, and the
//! stable-domain solution of `n L(B_n) = B_n^p`.

use asclt_lab::renorm::{solve_bn, RenormSeq, SlowVar};

fn main() -> asclt_lab::Result<()> {
    let plain = RenormSeq::sqrt();
    let corrected = RenormSeq::new(0.5, SlowVar::LogPower { exponent: 0.5 })?;
    println!("{:>10} {:>14} {:>18} {:>14}", "n", "sqrt(n)", "sqrt(n log n)", "B_n (p=1.5)");
    for e in 1..=7 {
        let n = 10u64.pow(e);
        let stable = solve_bn(1.5, &SlowVar::one(), n)?;
        println!(
            "{:>10} {:>14.4} {:>18.4} {:>14.4}",
            n,
            plain.eval(n),
            corrected.eval(n),
            stable
        );
    }
    Ok(())
}
