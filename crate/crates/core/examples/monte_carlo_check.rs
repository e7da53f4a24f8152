//! Cross-check of the renewal solution against direct simulation, with
//! simultaneous 99% Clopper–Pearson intervals.

use mapruin::kernel::KernelContext;
use mapruin::{fixtures, renewal, simulator};

fn main() -> Result<(), mapruin::error::Error> {
    let model = fixtures::mixed();
    let table = renewal::solve_hitting(&KernelContext::new(&model)?, 5.0, 0.01)?;
    let levels = [1.0, 2.0, 5.0];
    let n = model.n();
    let conf = simulator::bonferroni(0.99, n * n * levels.len());
    for i in 0..n {
        let counts = simulator::estimate_hitting(&model, &levels, i, 100_000, 42)?;
        for (l, &x) in levels.iter().enumerate() {
            for j in 0..n {
                let e = counts.estimate(l, j, conf);
                let exact = table.psi[table.index_of(x)][(i, j)];
                let tag = if e.contains(exact) { "ok" } else { "MISS" };
                println!("Psi_{i}{j}({x}) = {exact:.5}  MC [{:.5}, {:.5}] {tag}", e.lower, e.upper);
            }
        }
    }
    Ok(())
}
