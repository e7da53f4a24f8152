//! Hitting probabilities of the mixed model on a grid, their convergence to the
//! exponential asymptote, and a Richardson check of the grid error.

use mapruin::kernel::KernelContext;
use mapruin::{fixtures, renewal};

fn main() -> Result<(), mapruin::error::Error> {
    let model = fixtures::mixed();
    let ctx = KernelContext::new(&model)?;
    let table = renewal::solve_hitting(&ctx, 14.0, 0.01)?;
    let asym = renewal::asymptotics(&ctx)?;
    for x in [0.0, 1.0, 2.0, 5.0, 10.0, 14.0] {
        let k = table.index_of(x);
        let scaled = &table.psi[k] * (asym.alpha * x).exp();
        println!("x = {x:>4}: row sums {:.6?}, e^(alpha x) Psi_00 = {:.6}", table.row_sums(k).as_slice(), scaled[(0, 0)]);
    }
    println!("limit Psi_00 prefactor = {:.6}", asym.prefactor_full[(0, 0)]);
    let m = renewal::asymptote_match(&table, &asym)?;
    println!("asymptote match over x >= {}: relative deviation {:.2e}", m.from_x, m.max_rel);
    let r = renewal::richardson(&ctx, 4.0, 0.04)?;
    println!("grid halving differences {:.2e}, {:.2e} (ratio {:.2})", r.coarse, r.fine, r.ratio());
    Ok(())
}
