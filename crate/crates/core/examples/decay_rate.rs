//! The decay rate α as the positive root of the Perron eigenvalue κ(θ), and
//! the asymptotic prefactors of the hitting probabilities.

use mapruin::kernel::KernelContext;
use mapruin::{fixtures, renewal, spectral};

fn main() -> Result<(), mapruin::error::Error> {
    let model = fixtures::mixed();
    let alpha = spectral::decay_rate(&model)?;
    for k in 0..=6 {
        let theta = alpha * k as f64 / 4.0;
        if theta < model.theta_max() {
            println!("kappa({theta:.4}) = {:+.6}", spectral::kappa(&model, theta)?);
        }
    }
    let a = renewal::asymptotics(&KernelContext::new(&model)?)?;
    println!("alpha = {}", a.alpha);
    println!("eta(alpha) = {}, eta(0) = {}", a.eta_alpha, a.eta_zero);
    println!("lim e^(alpha x) Psi(x) = {}", a.prefactor_full);
    println!("row totals {:?}", a.prefactor_total.as_slice());
    Ok(())
}
