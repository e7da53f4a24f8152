//! Level-crossing duality for a model without jumps: both sides of the
//! identity and the stationary crossing probability a+/a-.

use mapruin::kernel::KernelContext;
use mapruin::{fixtures, renewal, simulator};

fn main() -> Result<(), mapruin::error::Error> {
    let model = fixtures::onoff();
    let t = renewal::solve_hitting(&KernelContext::new(&model)?, 0.0, 0.01)?;
    println!("a+/a- = {}", renewal::rate_ratio(&model)?);
    println!("from Psi(0): {}", renewal::crossing_start_probability(&model, &t.psi[0])?);
    let r = simulator::check_duality_nojump(&model, 100_000, 3)?;
    for p in &r.pairs {
        println!("i = {}, k = {}: {:.5} vs {:.5} (z = {:+.2})", p.falling, p.rising, p.left, p.right, p.z);
    }
    println!("simulated: {:.5} (z = {:+.2})", r.crossing_start.value, r.crossing_z);
    Ok(())
}
