//! Ruin probability of the compound Poisson risk model with exponential claims,
//! computed from the renewal equation and compared with the closed form.

use mapruin::kernel::KernelContext;
use mapruin::{fixtures, renewal};

fn main() -> Result<(), mapruin::error::Error> {
    let model = fixtures::classical();
    let ctx = KernelContext::new(&model)?;
    let table = renewal::solve_hitting(&ctx, 10.0, 0.01)?;
    println!("{:>6} {:>14} {:>14}", "x", "psi(x)", "0.5 e^{-x/2}");
    for x in [0.0, 1.0, 2.0, 5.0, 10.0] {
        let k = table.index_of(x);
        println!("{x:>6} {:>14.8} {:>14.8}", table.psi[k][(0, 0)], 0.5 * (-0.5 * x).exp());
    }
    Ok(())
}
