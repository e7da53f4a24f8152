//! Semi-Markov kernel `H`, overshoot kernel `Ḡ` and their transforms.
//!
//! `H_ij(x)` is the probability that the first "ladder epoch" `ξ₀⁺` happens
//! with the level in `[0, x]` and the chain in `j`; `Ḡ_ij(x)` prices the first
//! passage over `x` happening before that epoch. Both have closed forms in
//! terms of the ladder pair `(K, L)`. All `n×n` outputs use the original state
//! numbering.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::ladder::{self, JumpTransforms, LadderSolution};
use crate::linalg;
use crate::model::MapModel;

pub struct KernelContext {
    model: MapModel,
    ladder: LadderSolution,
    g: DMatrix<f64>,
    jt: JumpTransforms,
    at_zero: DMatrix<f64>,
}

impl KernelContext {
    pub fn new(model: &MapModel) -> Result<Self> {
        let ladder = ladder::solve_ladder(model)?;
        Self::with_ladder(model, ladder)
    }

    pub fn with_ladder(model: &MapModel, ladder: LadderSolution) -> Result<Self> {
        let g = ladder.il(model.partition(), model.n());
        let jt = JumpTransforms::new(model, &ladder.k)?;
        let at_zero = jt.row_form(&g, |t| t.tail_integral(0.0));
        Ok(KernelContext { model: model.clone(), ladder, g, jt, at_zero })
    }

    pub fn model(&self) -> &MapModel {
        &self.model
    }

    pub fn ladder(&self) -> &LadderSolution {
        &self.ladder
    }

    fn n(&self) -> usize {
        self.model.n()
    }

    /// `c(k)/v(k)` for `k` in `S+`.
    fn q(&self, k: usize) -> f64 {
        self.model.rate(k) / self.model.v()[k]
    }

    /// `(I, L)` row of minus state number `a`, restricted to `S+` columns: `L_ak`.
    fn l_entries(&self, a: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.model.partition().plus.iter().enumerate().map(move |(b, &k)| (k, self.ladder.l[(a, b)]))
    }

    /// `H(x)`.
    pub fn h_at(&self, x: f64) -> DMatrix<f64> {
        let n = self.n();
        let mut out = DMatrix::zeros(n, n);
        if x <= 0.0 {
            return out;
        }
        let m = &self.model;
        let part = m.partition();
        let v = m.v();
        for &i in &part.plus {
            for j in 0..n {
                out[(i, j)] = m.u_smoothed(i, j, self.q(i), x) / m.rate(i);
            }
        }
        if !part.minus.is_empty() {
            let jumps = &self.at_zero - self.jt.row_form(&self.g, |t| t.tail_integral(x));
            for (a, &i) in part.minus.iter().enumerate() {
                for j in 0..n {
                    let cont: f64 = self
                        .l_entries(a)
                        .map(|(k, lak)| lak * v[k] / m.rate(k) * m.u_smoothed(k, j, self.q(k), x))
                        .sum();
                    out[(i, j)] = (jumps[(a, j)] + cont) / v[i].abs();
                }
            }
        }
        out
    }

    /// `dH/dx` at `y > 0`.
    pub fn h_density(&self, y: f64) -> DMatrix<f64> {
        let n = self.n();
        let mut out = DMatrix::zeros(n, n);
        if y < 0.0 {
            return out;
        }
        let m = &self.model;
        let part = m.partition();
        let v = m.v();
        for &i in &part.plus {
            for j in 0..n {
                out[(i, j)] = m.u_exp_convolution(i, j, self.q(i), y) / v[i];
            }
        }
        if !part.minus.is_empty() {
            let w = self.jt.row_form(&self.g, |t| t.tail(y));
            for (a, &i) in part.minus.iter().enumerate() {
                for j in 0..n {
                    let cont: f64 =
                        self.l_entries(a).map(|(k, lak)| lak * m.u_exp_convolution(k, j, self.q(k), y)).sum();
                    out[(i, j)] = (w[(a, j)] + cont) / v[i].abs();
                }
            }
        }
        out
    }

    /// `Ḡ(x)`: probability of passing `x` before the first ladder epoch, by the entering state.
    pub fn gbar_at(&self, x: f64) -> DMatrix<f64> {
        let n = self.n();
        let x = x.max(0.0);
        let mut out = DMatrix::zeros(n, n);
        let m = &self.model;
        let part = m.partition();
        let v = m.v();
        // jumps out of a rising state k that land above x: U_kj(∞)(1 - e^{-q x}) - smoothed
        let over = |k: usize, j: usize| {
            let q = self.q(k);
            m.u_total(k, j) * -(-q * x).exp_m1() - m.u_smoothed(k, j, q, x)
        };
        for &i in &part.plus {
            let q = self.q(i);
            for j in 0..n {
                let stay = if i == j { (-q * x).exp() } else { 0.0 };
                out[(i, j)] = stay + over(i, j) / m.rate(i);
            }
        }
        if !part.minus.is_empty() {
            let tail = self.jt.row_form(&self.g, |t| t.tail_integral(x));
            for (a, &i) in part.minus.iter().enumerate() {
                for j in 0..n {
                    let direct = if v[j] > 0.0 { self.g[(a, j)] * v[j] * (-self.q(j) * x).exp() } else { 0.0 };
                    let via: f64 = self.l_entries(a).map(|(k, lak)| lak * v[k] / m.rate(k) * over(k, j)).sum();
                    out[(i, j)] = (tail[(a, j)] + direct + via) / v[i].abs();
                }
            }
        }
        out
    }

    /// Upper end of the admissible `θ` range for `Ĥ(θ)`: the smaller of the
    /// jump mgf abscissa and `min c(i)/v(i)` over `S+`.
    pub fn theta_bound(&self) -> f64 {
        let part = self.model.partition();
        part.plus.iter().map(|&k| self.q(k)).fold(self.model.theta_max(), f64::min)
    }

    fn check_theta(&self, theta: f64) -> Result<()> {
        let bound = self.theta_bound();
        if !(theta >= 0.0 && theta < bound) {
            return Err(Error::DomainExceeded { theta, bound });
        }
        Ok(())
    }

    /// `Ĥ(θ) = ∫ e^{θy} H(dy)`, integrated in closed form.
    pub fn h_hat(&self, theta: f64) -> Result<DMatrix<f64>> {
        self.check_theta(theta)?;
        let n = self.n();
        let m = &self.model;
        let part = m.partition();
        let v = m.v();
        let mut out = DMatrix::zeros(n, n);
        for &i in &part.plus {
            let denom = m.rate(i) - theta * v[i];
            for j in 0..n {
                out[(i, j)] = m.u_hat(i, j, theta)? / denom;
            }
        }
        if !part.minus.is_empty() {
            let tw = self.jt.row_form(&self.g, |t| t.twisted_tail_transform(theta));
            for (a, &i) in part.minus.iter().enumerate() {
                for j in 0..n {
                    let mut cont = 0.0;
                    for (k, lak) in self.l_entries(a) {
                        cont += lak * m.u_hat(k, j, theta)? / (self.q(k) - theta);
                    }
                    out[(i, j)] = (tw[(a, j)] + cont) / v[i].abs();
                }
            }
        }
        Ok(out)
    }

    /// `T(θ)`:
    ///
    /// ```text
    /// T⁻⁻ = (θI - K)^{-1}    T⁻⁺ = (θI - K)^{-1} L + L Δ_v⁺ (Δ_{c-θv}⁺)^{-1}
    /// T⁺⁻ = 0               T⁺⁺ = -Δ_v⁺ (Δ_{c-θv}⁺)^{-1}
    /// ```
    pub fn t_of_theta(&self, theta: f64) -> Result<DMatrix<f64>> {
        self.check_theta(theta)?;
        let part = self.model.partition();
        let (mm, n) = (part.minus.len(), self.n());
        let v = self.model.v();
        let res = linalg::inverse(&(DMatrix::identity(mm, mm) * theta - &self.ladder.k), "θI - K")
            .map_err(|_| Error::SingularBlock("θI - K"))?;
        let scaled_l = DMatrix::from_fn(mm, part.plus.len(), |a, b| {
            let k = part.plus[b];
            self.ladder.l[(a, b)] * v[k] / (self.model.rate(k) - theta * v[k])
        });
        let tmp = &res * &self.ladder.l + scaled_l;
        let mut t = DMatrix::zeros(n, n);
        for (a, &i) in part.minus.iter().enumerate() {
            for (a2, &j) in part.minus.iter().enumerate() {
                t[(i, j)] = res[(a, a2)];
            }
            for (b, &j) in part.plus.iter().enumerate() {
                t[(i, j)] = tmp[(a, b)];
            }
        }
        for &k in &part.plus {
            t[(k, k)] = -v[k] / (self.model.rate(k) - theta * v[k]);
        }
        Ok(t)
    }

    /// `T(θ)^{-1}` in closed form (no inversion, so also defined where `θI - K` is singular):
    ///
    /// ```text
    /// [ θI - K    L Δ_{c-θv}⁺ (Δ_v⁺)^{-1} + (θI - K) L ]
    /// [ 0         -Δ_{c-θv}⁺ (Δ_v⁺)^{-1}               ]
    /// ```
    pub fn t_inverse(&self, theta: f64) -> Result<DMatrix<f64>> {
        self.check_theta(theta)?;
        let part = self.model.partition();
        let (mm, n) = (part.minus.len(), self.n());
        let v = self.model.v();
        let shifted = DMatrix::identity(mm, mm) * theta - &self.ladder.k;
        let scaled_l = DMatrix::from_fn(mm, part.plus.len(), |a, b| {
            let k = part.plus[b];
            self.ladder.l[(a, b)] * (self.model.rate(k) - theta * v[k]) / v[k]
        });
        let tmp = scaled_l + &shifted * &self.ladder.l;
        let mut t = DMatrix::zeros(n, n);
        for (a, &i) in part.minus.iter().enumerate() {
            for (a2, &j) in part.minus.iter().enumerate() {
                t[(i, j)] = shifted[(a, a2)];
            }
            for (b, &j) in part.plus.iter().enumerate() {
                t[(i, j)] = tmp[(a, b)];
            }
        }
        for &k in &part.plus {
            t[(k, k)] = -(self.model.rate(k) - theta * v[k]) / v[k];
        }
        Ok(t)
    }

    /// `Ĥ(θ) = I - Δ_v^{-1} T(θ) A(θ)`, the factorization route.
    pub fn h_hat_factorized(&self, theta: f64) -> Result<DMatrix<f64>> {
        let t = self.t_of_theta(theta)?;
        let a = self.model.a_of_theta(theta)?;
        let n = self.n();
        let mut x = t * a;
        for (i, mut row) in x.row_iter_mut().enumerate() {
            row /= self.model.v()[i];
        }
        Ok(DMatrix::identity(n, n) - x)
    }

    /// Sup-norm of `T(θ)^{-1} Δ_v (I - Ĥ(θ)) - A(θ)`, with `Ĥ` from the direct route.
    pub fn wiener_hopf_residual(&self, theta: f64) -> Result<f64> {
        let n = self.n();
        let hh = self.h_hat(theta)?;
        let mut x = DMatrix::identity(n, n) - hh;
        for (i, mut row) in x.row_iter_mut().enumerate() {
            row *= self.model.v()[i];
        }
        let lhs = self.t_inverse(theta)? * x;
        Ok(linalg::sup_norm(&(lhs - self.model.a_of_theta(theta)?)))
    }

    /// `∫_0^∞ e^{αx} Ḡ(x) dx` in closed form at the decay rate `α`.
    pub fn gbar_transform(&self, alpha: f64) -> Result<DMatrix<f64>> {
        let m = &self.model;
        let part = m.partition();
        let (mm, n) = (part.minus.len(), self.n());
        let v = m.v();
        let a = m.a_of_theta(alpha)?;
        let gen = m.generator();
        let diff = &a - &gen;
        let mut out = DMatrix::zeros(n, n);
        for &i in &part.plus {
            let s = alpha * (m.rate(i) - alpha * v[i]);
            for j in 0..n {
                out[(i, j)] = diff[(i, j)] / s;
            }
        }
        if mm == 0 {
            return Ok(out);
        }
        let k = &self.ladder.k;
        let kminus = self.ladder.kminus.as_ref().ok_or(Error::SingularBlock("k⁻ undefined for positive drift"))?;
        let pi = m.stationary_dist()?;
        let pi_minus = DVector::from_iterator(mm, part.minus.iter().map(|&i| pi[i]));
        let kpi = kminus * pi_minus.transpose();
        let res = linalg::inverse(&(DMatrix::identity(mm, mm) * alpha - k), "αI - K")
            .map_err(|_| Error::SingularBlock("αI - K"))?;
        let fund = linalg::inverse(&(&kpi - k), "k⁻π⁻ - K").map_err(|_| Error::SingularBlock("k⁻π⁻ - K"))?;
        let mut p = DMatrix::zeros(mm, n);
        for (a_, _) in part.minus.iter().enumerate() {
            for (b, &kk) in part.plus.iter().enumerate() {
                p[(a_, kk)] = self.ladder.l[(a_, b)] * v[kk] / (m.rate(kk) - alpha * v[kk]);
            }
        }
        let mut drift_m = m.jump_mean_matrix();
        for i in 0..n {
            drift_m[(i, i)] += v[i];
        }
        let g = &self.g;
        let x = &res * g * &a + p * &diff - &kpi * g * drift_m - fund * g * &gen;
        for (a_, &i) in part.minus.iter().enumerate() {
            for j in 0..n {
                out[(i, j)] = -x[(a_, j)] / (alpha * v[i]);
            }
        }
        Ok(out)
    }

    /// Points where `H` and `Ḡ` have kinks or jumps in their derivative (atom locations).
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.model.jumps().flat_map(|(_, _, _, f)| f.atoms().collect::<Vec<_>>()).collect();
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.dedup();
        b
    }

    /// A level beyond which `e^{θy}` times the kernel density (and `Ḡ`) is below
    /// roughly `e^{-45}` of its scale.
    pub fn truncation(&self, theta: f64) -> f64 {
        let rate = self.theta_bound() - theta;
        let atom = self.breakpoints().last().copied().unwrap_or(0.0);
        atom + 45.0 / rate
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::quad;
    use crate::spectral;

    fn close(a: &DMatrix<f64>, b: &DMatrix<f64>, rel: f64) -> bool {
        a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= rel * y.abs() + 1e-14)
    }

    #[test]
    fn classical_closed_forms() {
        let ctx = KernelContext::new(&fixtures::classical()).unwrap();
        assert_eq!(ctx.h_at(0.0)[(0, 0)], 0.0);
        for y in [0.2, 1.0, 4.0] {
            assert!((ctx.h_density(y)[(0, 0)] - 0.5 * (-y as f64).exp()).abs() < 1e-14);
            assert!((ctx.gbar_at(y)[(0, 0)] - 0.5 * (-y as f64).exp()).abs() < 1e-14);
            assert!((ctx.h_at(y)[(0, 0)] - 0.5 * (1.0 - (-y as f64).exp())).abs() < 1e-14);
        }
        assert!((ctx.h_hat(0.0).unwrap()[(0, 0)] - 0.5).abs() < 1e-14);
        assert!((ctx.h_hat(0.5).unwrap()[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((ctx.gbar_transform(0.5).unwrap()[(0, 0)] - 1.0).abs() < 1e-13);
    }

    #[test]
    fn onoff_rising_row_and_gbar() {
        let m = fixtures::onoff();
        let ctx = KernelContext::new(&m).unwrap();
        let big = ctx.h_at(200.0);
        // rising state: embedded jump-chain row
        assert!((big[(1, 0)] - 1.0).abs() < 1e-12 && big[(1, 1)].abs() < 1e-15);
        for x in [0.0, 0.7, 3.0] {
            assert!((ctx.gbar_at(x)[(1, 1)] - (-2.0 * x as f64).exp()).abs() < 1e-14);
        }
        assert!((ctx.gbar_at(0.0)[(0, 1)] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn random_model_kernel_properties() {
        for seed in [0, 3, 6] {
            let m = fixtures::random_model(seed);
            let ctx = KernelContext::new(&m).unwrap();
            let n = m.n();
            let breaks = ctx.breakpoints();
            // monotonicity of H and Ḡ
            let mut prev_h = ctx.h_at(0.0);
            let mut prev_g = ctx.gbar_at(0.0);
            assert_eq!(prev_h, DMatrix::zeros(n, n));
            for k in 1..60 {
                let x = 0.1 * k as f64;
                let (h, g) = (ctx.h_at(x), ctx.gbar_at(x));
                assert!(h.iter().zip(prev_h.iter()).all(|(a, b)| *a >= b - 1e-14), "seed {seed} x {x}");
                // entries of rising rows can grow from 0, the row mass cannot
                for i in 0..n {
                    assert!(g.row(i).sum() <= prev_g.row(i).sum() + 1e-14, "seed {seed} x {x}");
                }
                assert!(h.iter().all(|&e| (-1e-15..=1.0).contains(&e)));
                prev_h = h;
                prev_g = g;
            }
            // density integrates to H
            for x in [0.4, 1.7, 5.0] {
                let num = quad::integrate_matrix(|y| ctx.h_density(y), 0.0, x, &breaks, 1e-12);
                assert!(linalg::sup_norm(&(num - ctx.h_at(x))) < 1e-9, "seed {seed} x {x}");
            }
            // H(∞) total mass
            let total = ctx.h_hat(0.0).unwrap();
            let far = ctx.h_at(ctx.truncation(0.0));
            assert!(linalg::sup_norm(&(&total - &far)) < 1e-12);
            assert!((0..n).all(|i| total.row(i).sum() <= 1.0 + 1e-12));
            assert!((0..n).any(|i| total.row(i).sum() < 1.0 - 1e-6));
            for &i in &m.partition().plus {
                for j in 0..n {
                    assert!((total[(i, j)] - m.u_total(i, j) / m.rate(i)).abs() < 1e-14);
                }
            }
            // Ḡ at 0 on falling rows is the total ladder mass
            let lh = ladder::LadderHeights::new(&m, ctx.ladder()).unwrap();
            for &i in &m.partition().minus {
                let g0 = ctx.gbar_at(0.0);
                let tot = lh.total(i).unwrap();
                for j in 0..n {
                    assert!((g0[(i, j)] - tot[j]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn transforms_match_quadrature_and_factorization() {
        for seed in [2, 5] {
            let m = fixtures::random_model(seed);
            let ctx = KernelContext::new(&m).unwrap();
            let breaks = ctx.breakpoints();
            let alpha = spectral::decay_rate(&m).unwrap();
            for theta in [0.3 * alpha, alpha, 0.5 * (alpha + ctx.theta_bound())] {
                let hh = ctx.h_hat(theta).unwrap();
                let num = quad::integrate_matrix(
                    |y| ctx.h_density(y) * (theta * y).exp(),
                    0.0,
                    ctx.truncation(theta),
                    &breaks,
                    1e-11,
                );
                assert!(close(&hh, &num, 1e-7), "seed {seed} θ {theta}");
                assert!(ctx.wiener_hopf_residual(theta).unwrap() < 1e-9);
                let fact = ctx.h_hat_factorized(theta).unwrap();
                assert!(linalg::sup_norm(&(fact - &hh)) < 1e-9);
            }
            let gt = ctx.gbar_transform(alpha).unwrap();
            let num = quad::integrate_matrix(
                |x| ctx.gbar_at(x) * (alpha * x).exp(),
                0.0,
                ctx.truncation(alpha),
                &breaks,
                1e-11,
            );
            assert!(close(&gt, &num, 1e-7), "seed {seed}\n{gt}\n{num}");
        }
    }

    #[test]
    fn domain_guard() {
        let ctx = KernelContext::new(&fixtures::onoff()).unwrap();
        assert!(matches!(ctx.h_hat(2.0), Err(Error::DomainExceeded { .. })));
        assert!(matches!(ctx.h_hat(-0.1), Err(Error::DomainExceeded { .. })));
        // K = 0 makes T(0) singular while T(0)^{-1} stays defined
        assert!(matches!(ctx.t_of_theta(0.0), Err(Error::SingularBlock(_))));
        assert!(ctx.wiener_hopf_residual(0.0).unwrap() < 1e-12);
    }
}
