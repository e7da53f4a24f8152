//! Hitting probabilities `Ψ(x)` from the Markov renewal equation
//! `Ψ(x) = Ḡ(x) + ∫_0^x H(dy) Ψ(x - y)`, their exponential asymptotics, and
//! the stationary fluid-queue tail.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::KernelContext;
use crate::ladder;
use crate::linalg;
use crate::model::MapModel;
use crate::spectral::{self, SpectralPoint};

#[derive(Debug, Clone)]
pub struct HittingTable {
    pub step: f64,
    pub grid: Vec<f64>,
    /// `Ψ(x_k)` in original state numbering.
    pub psi: Vec<DMatrix<f64>>,
}

impl HittingTable {
    pub fn xmax(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    pub fn row_sums(&self, k: usize) -> DVector<f64> {
        let p = &self.psi[k];
        DVector::from_fn(p.nrows(), |i, _| p.row(i).sum())
    }

    /// Index of the grid point nearest to `x`.
    pub fn index_of(&self, x: f64) -> usize {
        ((x / self.step).round() as usize).min(self.grid.len() - 1)
    }
}

/// Small dense row-major helpers for the convolution loop.
fn matmul_acc(acc: &mut [f64], a: &[f64], b: &[f64], n: usize) {
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                acc[i * n + j] += aik * b[k * n + j];
            }
        }
    }
}

fn to_flat(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    (0..n * n).map(|idx| m[(idx / n, idx % n)]).collect()
}

fn from_flat(v: &[f64], n: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, n, v)
}

/// Number of steps for a grid `0, h, …, xmax`.
pub fn grid_steps(xmax: f64, h: f64) -> Result<usize> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::BadGrid(format!("step h = {h} must be positive")));
    }
    if !(xmax >= 0.0 && xmax.is_finite()) {
        return Err(Error::BadGrid(format!("xmax = {xmax} must be nonnegative")));
    }
    let steps = (xmax / h).round();
    if (steps * h - xmax).abs() > 1e-9 * xmax.max(h) {
        return Err(Error::BadGrid(format!("xmax = {xmax} is not a multiple of h = {h}")));
    }
    Ok(steps as usize)
}

/// Trapezoidal Stieltjes discretization with exact kernel increments:
///
/// ```text
/// Ψ_k = Ḡ_k + Σ_{m<k} (H_{m+1} - H_m) (Ψ_{k-m} + Ψ_{k-m-1}) / 2
/// ```
///
/// The `m = 0` term involves `Ψ_k` itself (the kernel density is positive at
/// 0), so each step solves `(I - ΔH_0/2) Ψ_k = …`.
pub fn solve_hitting(ctx: &KernelContext, xmax: f64, h: f64) -> Result<HittingTable> {
    let steps = grid_steps(xmax, h)?;
    let n = ctx.model().n();
    let nn = n * n;
    let grid: Vec<f64> = (0..=steps).map(|k| k as f64 * h).collect();
    let hvals: Vec<DMatrix<f64>> = grid.iter().map(|&x| ctx.h_at(x)).collect();
    let mut dh = vec![0.0; steps * nn];
    for m in 0..steps {
        dh[m * nn..(m + 1) * nn].copy_from_slice(&to_flat(&(&hvals[m + 1] - &hvals[m])));
    }
    let mut psi = vec![0.0; (steps + 1) * nn];
    psi[..nn].copy_from_slice(&to_flat(&ctx.gbar_at(0.0)));
    // s_j = Ψ_j + Ψ_{j-1}
    let mut sums = vec![0.0; (steps + 1) * nn];
    let lu = if steps > 0 {
        let dh0 = from_flat(&dh[..nn], n);
        Some((DMatrix::identity(n, n) - dh0 * 0.5).lu())
    } else {
        None
    };
    let mut acc = vec![0.0; nn];
    for k in 1..=steps {
        acc.copy_from_slice(&to_flat(&ctx.gbar_at(grid[k])));
        let half_prev: Vec<f64> = psi[(k - 1) * nn..k * nn].iter().map(|x| 0.5 * x).collect();
        matmul_acc(&mut acc, &dh[..nn], &half_prev, n);
        for m in 1..k {
            let j = k - m;
            let half: Vec<f64> = sums[j * nn..(j + 1) * nn].iter().map(|x| 0.5 * x).collect();
            matmul_acc(&mut acc, &dh[m * nn..(m + 1) * nn], &half, n);
        }
        let sol = lu
            .as_ref()
            .unwrap()
            .solve(&from_flat(&acc, n))
            .ok_or(Error::SingularSolve("renewal step"))?;
        psi[k * nn..(k + 1) * nn].copy_from_slice(&to_flat(&sol));
        for idx in 0..nn {
            sums[k * nn + idx] = psi[k * nn + idx] + psi[(k - 1) * nn + idx];
        }
    }
    let psi = (0..=steps).map(|k| from_flat(&psi[k * nn..(k + 1) * nn], n)).collect();
    Ok(HittingTable { step: h, grid, psi })
}

/// Differences between successive grid halvings on the common grid.
#[derive(Debug, Clone)]
pub struct RichardsonReport {
    /// `max |Ψ_h - Ψ_{h/2}|`
    pub coarse: f64,
    /// `max |Ψ_{h/2} - Ψ_{h/4}|`
    pub fine: f64,
}

impl RichardsonReport {
    /// Close to 4 for a second-order scheme.
    pub fn ratio(&self) -> f64 {
        self.coarse / self.fine
    }
}

pub fn richardson(ctx: &KernelContext, xmax: f64, h: f64) -> Result<RichardsonReport> {
    let t1 = solve_hitting(ctx, xmax, h)?;
    let t2 = solve_hitting(ctx, xmax, h / 2.0)?;
    let t4 = solve_hitting(ctx, xmax, h / 4.0)?;
    let diff = |a: &HittingTable, b: &HittingTable, stride: usize| {
        a.psi
            .iter()
            .enumerate()
            .map(|(k, p)| linalg::sup_norm(&(p - &b.psi[k * stride])))
            .fold(0.0, f64::max)
    };
    Ok(RichardsonReport { coarse: diff(&t1, &t2, 2), fine: diff(&t2, &t4, 2) })
}

/// `P(τ₀⁺ < ∞)` when the start is drawn from falling states with weights
/// proportional to `|v(i)| π(i)` (the law of the state at a stationary
/// down-crossing of a level).
pub fn crossing_start_probability(model: &MapModel, psi0: &DMatrix<f64>) -> Result<f64> {
    let pi = model.stationary_dist()?;
    let v = model.v();
    let minus = &model.partition().minus;
    let a_minus: f64 = minus.iter().map(|&i| -v[i] * pi[i]).sum();
    Ok(minus.iter().map(|&i| -v[i] * pi[i] / a_minus * psi0.row(i).sum()).sum())
}

/// `a⁺/a⁻ = Σ_{S+} π_i v_i / Σ_{S-} π_i |v_i|`.
pub fn rate_ratio(model: &MapModel) -> Result<f64> {
    let pi = model.stationary_dist()?;
    let v = model.v();
    let up: f64 = (0..model.n()).filter(|&i| v[i] > 0.0).map(|i| pi[i] * v[i]).sum();
    let down: f64 = (0..model.n()).filter(|&i| v[i] < 0.0).map(|i| -pi[i] * v[i]).sum();
    Ok(up / down)
}

#[derive(Debug, Clone)]
pub struct AsymptoticChecks {
    /// `|ν Ĥ(α) - ν|`
    pub nu_invariance: f64,
    /// `|Ĥ(α) h - h|`
    pub h_invariance: f64,
    /// `|ν⁻ (-Δ_v⁻)^{-1} k⁻ - α|`
    pub nu_kminus: f64,
    /// `max_i |(Δ_h^{-1} Ĥ(α) Δ_h e)_i - 1|`
    pub twisted_row_sums: f64,
    /// `|prefactor_full - (1/η_α) h ν Ĝ(α)|`
    pub transform_route: f64,
    /// `|prefactor_full e - prefactor_total|`
    pub full_vs_total: f64,
}

#[derive(Debug, Clone)]
pub struct AsymptoticResult {
    pub alpha: f64,
    pub point: SpectralPoint,
    pub nu: DVector<f64>,
    pub eta_alpha: f64,
    pub eta_zero: f64,
    pub gamma: DMatrix<f64>,
    /// `lim e^{αx} Ψ(x)`
    pub prefactor_full: DMatrix<f64>,
    /// `lim e^{αx} Ψ(x) e`
    pub prefactor_total: DVector<f64>,
    /// `lim e^{αx} P(M(τ_x⁺) = j, Y(τ_x⁺) = x)` for `j` in `S+` (columns in `S+` order).
    pub prefactor_continuous: DMatrix<f64>,
    pub checks: AsymptoticChecks,
}

/// `ν = -μ T(α)^{-1} Δ_v`.
pub fn nu_vector(ctx: &KernelContext, point: &SpectralPoint) -> Result<DVector<f64>> {
    let tinv = ctx.t_inverse(point.theta)?;
    let v = ctx.model().v();
    let row = -(point.mu.transpose() * tinv);
    Ok(DVector::from_fn(v.len(), |j, _| row[j] * v[j]))
}

pub fn asymptotics(ctx: &KernelContext) -> Result<AsymptoticResult> {
    let m = ctx.model();
    let part = m.partition();
    let (n, mm) = (m.n(), part.minus.len());
    let v = m.v();
    let eta_zero = m.mean_drift()?;
    let alpha = spectral::decay_rate(m)?;
    let lad = ctx.ladder();
    let kminus = lad.kminus.as_ref().ok_or(Error::DriftNonNegative { drift: eta_zero })?;
    let point = spectral::perron(m, alpha, Some(kminus))?;
    let (mu, h) = (&point.mu, &point.h);
    let eta_alpha = spectral::kappa_prime(m, &point)?;
    let gen = m.generator();
    let pi = m.stationary_dist()?;

    let mut drift_m = m.jump_mean_matrix();
    for i in 0..n {
        drift_m[(i, i)] += v[i];
    }
    let pi_minus = DVector::from_iterator(mm, part.minus.iter().map(|&i| pi[i]));
    let kpi = kminus * pi_minus.transpose();
    let fund = linalg::inverse(&(&kpi - &lad.k), "k⁻π⁻ - K").map_err(|_| Error::SingularBlock("k⁻π⁻ - K"))?;
    let g = lad.il(part, n);
    let shifted = DMatrix::identity(mm, mm) * alpha - &kpi;
    let gamma_minus = -(kminus * pi.transpose()) * &drift_m - shifted * fund * g * &gen / alpha;
    let mut gamma = DMatrix::zeros(n, n);
    for (a, &i) in part.minus.iter().enumerate() {
        gamma.set_row(i, &gamma_minus.row(a));
    }

    let weights = mu.transpose() * (&gamma - &gen / alpha);
    let prefactor_full = h * weights / eta_alpha;
    let mu_k: f64 = part.minus.iter().zip(kminus.iter()).map(|(&i, &k)| mu[i] * k).sum();
    let prefactor_total = h * (-eta_zero * mu_k / eta_alpha);
    let cont = DVector::from_fn(part.plus.len(), |b, _| {
        let j = part.plus[b];
        let minus_part: f64 = part.minus.iter().enumerate().map(|(a, &i)| mu[i] * lad.l[(a, b)]).sum();
        (mu[j] - minus_part) * v[j]
    });
    let prefactor_continuous = h * cont.transpose() / eta_alpha;

    let nu = nu_vector(ctx, &point)?;
    let hh = ctx.h_hat(alpha)?;
    let gt = ctx.gbar_transform(alpha)?;
    let via_transform = h * (nu.transpose() * gt) / eta_alpha;
    let nu_k: f64 = part.minus.iter().zip(kminus.iter()).map(|(&i, &k)| nu[i] * k / v[i].abs()).sum();
    let hh_h = &hh * h;
    let full_sums = DVector::from_fn(n, |i, _| prefactor_full.row(i).sum());
    let checks = AsymptoticChecks {
        nu_invariance: (nu.transpose() * &hh - nu.transpose()).amax(),
        h_invariance: (&hh_h - h).amax(),
        nu_kminus: (nu_k - alpha).abs(),
        twisted_row_sums: (0..n).map(|i| (hh_h[i] / h[i] - 1.0).abs()).fold(0.0, f64::max),
        transform_route: linalg::sup_norm(&(&prefactor_full - via_transform)),
        full_vs_total: (full_sums - &prefactor_total).amax(),
    };
    Ok(AsymptoticResult {
        alpha,
        point,
        nu,
        eta_alpha,
        eta_zero,
        gamma,
        prefactor_full,
        prefactor_total,
        prefactor_continuous,
        checks,
    })
}

#[derive(Debug, Clone)]
pub struct MatchReport {
    /// First level of the window that was checked (last tenth of the grid).
    pub from_x: f64,
    /// `max |e^{αx} Ψ_ij(x) - P_ij|`
    pub max_abs: f64,
    /// Same, relative to `|P_ij|` for entries above 1e-3 of the largest entry
    /// and to the largest entry otherwise.
    pub max_rel: f64,
    /// Whether the window maximum shrinks along the window.
    pub monotone: bool,
}

pub fn asymptote_match(table: &HittingTable, asym: &AsymptoticResult) -> Result<MatchReport> {
    let needed = 5.0 / asym.alpha;
    if table.xmax() < needed * (1.0 - 1e-9) {
        return Err(Error::HorizonTooShort { xmax: table.xmax(), needed });
    }
    let pf = &asym.prefactor_full;
    let scale = linalg::sup_norm(pf);
    let last = table.grid.len() - 1;
    let start = last - last / 10;
    let mut max_abs: f64 = 0.0;
    let mut max_rel: f64 = 0.0;
    let mut prev = f64::INFINITY;
    let mut monotone = true;
    for k in start..=last {
        let x = table.grid[k];
        let dev = table.psi[k].map(|p| p) * (asym.alpha * x).exp() - pf;
        let here = linalg::sup_norm(&dev);
        if here > prev + 1e-12 {
            monotone = false;
        }
        prev = here;
        max_abs = max_abs.max(here);
        for (d, p) in dev.iter().zip(pf.iter()) {
            let denom = if p.abs() >= 1e-3 * scale { p.abs() } else { scale };
            max_rel = max_rel.max(d.abs() / denom);
        }
    }
    Ok(MatchReport { from_x: table.grid[start], max_abs, max_rel, monotone })
}

#[derive(Debug, Clone)]
pub struct FluidTail {
    pub alpha: f64,
    /// `c_i` with `e^{αx} P(V > x, M = i) → c_i`.
    pub coefficients: DVector<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub beta: DVector<f64>,
    /// `|β⁻ Q|`
    pub beta_residual: f64,
    /// Residual of the column-form equation for `(Q, R)`.
    pub residual: f64,
}

/// Stationary tail of the reflected process `V(t) = Y(t) - inf_{u≤t} Y(u)`.
pub fn fluid_tail(model: &MapModel) -> Result<FluidTail> {
    let eta_zero = model.mean_drift()?;
    if eta_zero >= 0.0 {
        return Err(Error::DriftNonNegative { drift: eta_zero });
    }
    let sol = ladder::solve_column_equation(model)?;
    let mm = sol.q.nrows();
    // β Q = 0, β e = 1
    let mut a = DMatrix::zeros(mm + 1, mm);
    a.view_mut((0, 0), (mm, mm)).copy_from(&sol.q.transpose());
    a.row_mut(mm).fill(1.0);
    let mut rhs = DVector::zeros(mm + 1);
    rhs[mm] = 1.0;
    let beta = a.svd(true, true).solve(&rhs, 1e-300).map_err(|_| Error::SingularSolve("β⁻"))?;
    let beta_residual = (beta.transpose() * &sol.q).amax();
    let alpha = spectral::decay_rate(model)?;
    let point = spectral::perron(model, alpha, None)?;
    let eta_alpha = spectral::kappa_prime(model, &point)?;
    let minus = &model.partition().minus;
    let beta_h: f64 = minus.iter().zip(beta.iter()).map(|(&i, &b)| b * point.h[i]).sum();
    let coefficients = point.mu.map(|mu_i| -eta_zero * mu_i * beta_h / eta_alpha);
    Ok(FluidTail { alpha, coefficients, q: sol.q, r: sol.r, beta, beta_residual, residual: sol.residual })
}
