//! Stationary buffer content of a fluid queue driven by the on/off source:
//! exact tail coefficients against a Loynes-type simulation.

use mapruin::{fixtures, renewal, simulator};

fn main() -> Result<(), mapruin::error::Error> {
    let model = fixtures::onoff();
    let tail = renewal::fluid_tail(&model)?;
    println!("alpha = {}, c = {:?}", tail.alpha, tail.coefficients.as_slice());
    for x in [0.5, 2.0, 4.0] {
        let est = simulator::estimate_fluid_tail(&model, x, 100.0, 50_000, 1)?;
        for (i, e) in est.per_state.iter().enumerate() {
            let exact = tail.coefficients[i] * (-tail.alpha * x).exp();
            println!("P(V > {x}, M = {i}): exact {exact:.5}, simulated {:.5} ± {:.5}", e.value, e.std_error);
        }
    }
    Ok(())
}
