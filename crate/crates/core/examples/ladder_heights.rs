//! First-passage matrices of the mixed three-state model and the law of the
//! ascending ladder height from each falling state.

use mapruin::fixtures;
use mapruin::ladder::{self, LadderHeights};

fn main() -> Result<(), mapruin::error::Error> {
    let model = fixtures::mixed();
    let sol = ladder::solve_ladder(&model)?;
    println!("K = {}L = {}k- = {}", sol.k, sol.l, sol.kminus()?);
    println!("residual {:.2e} after {} sweeps", sol.residual, sol.iterations);
    let heights = LadderHeights::new(&model, &sol)?;
    for &i in &model.partition().minus {
        println!("start {i}: total mass per entry state {:?}", heights.total(i)?.as_slice());
        for x in [0.0, 0.5, 1.0, 2.0] {
            println!("  J(x = {x}) = {:?}", heights.cdf(i, x)?.as_slice());
        }
    }
    Ok(())
}
