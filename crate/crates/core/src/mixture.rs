//! Jump-size laws: finite mixtures of atoms, exponentials and Erlangs.
//!
//! Every integral the ladder and kernel computations need against a jump law
//! has a closed form for this family, both scalar (mean, mgf, cdf,
//! exponential smoothing) and with a matrix exponential weight `e^{yK}`.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::special;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JumpKind {
    Atom { location: f64 },
    Exponential { rate: f64 },
    Erlang { shape: u32, rate: f64 },
}

impl JumpKind {
    /// (shape, rate) for the absolutely continuous kinds.
    fn erlang_params(&self) -> Option<(u32, f64)> {
        match *self {
            JumpKind::Atom { .. } => None,
            JumpKind::Exponential { rate } => Some((1, rate)),
            JumpKind::Erlang { shape, rate } => Some((shape, rate)),
        }
    }

    fn mean(&self) -> f64 {
        match *self {
            JumpKind::Atom { location } => location,
            JumpKind::Exponential { rate } => 1.0 / rate,
            JumpKind::Erlang { shape, rate } => shape as f64 / rate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureComponent {
    pub weight: f64,
    pub kind: JumpKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpMixture {
    components: Vec<MixtureComponent>,
}

impl JumpMixture {
    pub fn new(components: Vec<MixtureComponent>) -> std::result::Result<Self, String> {
        if components.is_empty() {
            return Err("mixture has no components".into());
        }
        let mut total = 0.0;
        for c in &components {
            if !(c.weight.is_finite() && c.weight >= 0.0) {
                return Err(format!("weight {} is not a probability", c.weight));
            }
            total += c.weight;
            match c.kind {
                JumpKind::Atom { location } => {
                    if !(location.is_finite() && location > 0.0) {
                        return Err(format!("atom location {location} must be finite and > 0"));
                    }
                }
                JumpKind::Exponential { rate } => {
                    if !(rate.is_finite() && rate > 0.0) {
                        return Err(format!("exponential rate {rate} must be finite and > 0"));
                    }
                }
                JumpKind::Erlang { shape, rate } => {
                    if shape == 0 {
                        return Err("erlang shape must be >= 1".into());
                    }
                    if !(rate.is_finite() && rate > 0.0) {
                        return Err(format!("erlang rate {rate} must be finite and > 0"));
                    }
                }
            }
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(format!("weights sum to {total}, not 1"));
        }
        Ok(JumpMixture { components })
    }

    pub fn exponential(rate: f64) -> Self {
        Self::single(JumpKind::Exponential { rate })
    }

    pub fn atom(location: f64) -> Self {
        Self::single(JumpKind::Atom { location })
    }

    pub fn erlang(shape: u32, rate: f64) -> Self {
        Self::single(JumpKind::Erlang { shape, rate })
    }

    fn single(kind: JumpKind) -> Self {
        JumpMixture::new(vec![MixtureComponent { weight: 1.0, kind }]).expect("valid single-component mixture")
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    /// Smallest rate over the exponential and Erlang components; `+inf` for atoms only.
    pub fn abscissa(&self) -> f64 {
        self.components
            .iter()
            .filter_map(|c| c.kind.erlang_params().map(|(_, r)| r))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.weight * c.kind.mean()).sum()
    }

    fn check_theta(&self, theta: f64) -> Result<()> {
        let abscissa = self.abscissa();
        if theta >= abscissa {
            return Err(Error::AbscissaExceeded { theta, abscissa });
        }
        Ok(())
    }

    /// `E e^{θY}`.
    pub fn mgf(&self, theta: f64) -> Result<f64> {
        self.check_theta(theta)?;
        Ok(self
            .components
            .iter()
            .map(|c| {
                c.weight
                    * match c.kind {
                        JumpKind::Atom { location } => (theta * location).exp(),
                        _ => {
                            let (k, r) = c.kind.erlang_params().unwrap();
                            (r / (r - theta)).powi(k as i32)
                        }
                    }
            })
            .sum())
    }

    /// `d/dθ E e^{θY}`.
    pub fn mgf_deriv(&self, theta: f64) -> Result<f64> {
        self.check_theta(theta)?;
        Ok(self
            .components
            .iter()
            .map(|c| {
                c.weight
                    * match c.kind {
                        JumpKind::Atom { location } => location * (theta * location).exp(),
                        _ => {
                            let (k, r) = c.kind.erlang_params().unwrap();
                            k as f64 * (r / (r - theta)).powi(k as i32) / (r - theta)
                        }
                    }
            })
            .sum())
    }

    /// `P(Y <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        self.components
            .iter()
            .map(|c| {
                c.weight
                    * match c.kind {
                        JumpKind::Atom { location } => (location <= x) as u8 as f64,
                        _ => {
                            let (k, r) = c.kind.erlang_params().unwrap();
                            special::gamma_p(k, r * x)
                        }
                    }
            })
            .sum()
    }

    /// `P(Y > x)`, computed without cancellation.
    pub fn survival(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 1.0;
        }
        self.components
            .iter()
            .map(|c| {
                c.weight
                    * match c.kind {
                        JumpKind::Atom { location } => (location > x) as u8 as f64,
                        _ => {
                            let (k, r) = c.kind.erlang_params().unwrap();
                            special::gamma_q(k, r * x)
                        }
                    }
            })
            .sum()
    }

    /// `∫_{[0,x]} e^{-q(x-y)} F(dy)` for `q > 0`.
    pub fn exp_convolution(&self, q: f64, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        self.components
            .iter()
            .map(|c| {
                c.weight
                    * match c.kind {
                        JumpKind::Atom { location } => {
                            if location <= x {
                                (-q * (x - location)).exp()
                            } else {
                                0.0
                            }
                        }
                        _ => {
                            let (k, r) = c.kind.erlang_params().unwrap();
                            special::erlang_exp_convolution(k, r, q, x)
                        }
                    }
            })
            .sum()
    }

    /// Points where the law has an atom.
    pub fn atoms(&self) -> impl Iterator<Item = f64> + '_ {
        self.components.iter().filter_map(|c| match c.kind {
            JumpKind::Atom { location } => Some(location),
            _ => None,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = self.components.last().unwrap();
        for c in &self.components {
            acc += c.weight;
            if u < acc {
                chosen = c;
                break;
            }
        }
        match chosen.kind {
            JumpKind::Atom { location } => location,
            _ => {
                let (k, r) = chosen.kind.erlang_params().unwrap();
                (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln() / r).sum()
            }
        }
    }

    /// `∫_w^∞ e^{(y-w)K} F(dy)`; an atom at exactly `w` contributes the identity.
    pub fn matrix_tail(&self, w: f64, k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(MatrixTransforms::new(self, k)?.tail(w))
    }
}

enum CachedComponent {
    Atom { weight: f64, location: f64 },
    Erlang { weight: f64, shape: u32, rate: f64, resolvent_powers: Vec<DMatrix<f64>> },
}

/// Matrix-weighted integrals of one jump law against a fixed ML matrix `K`,
/// with the resolvent powers `(λI - K)^{-(m+1)}` precomputed.
pub struct MatrixTransforms {
    dim: usize,
    k: DMatrix<f64>,
    comps: Vec<CachedComponent>,
}

impl MatrixTransforms {
    pub fn new(f: &JumpMixture, k: &DMatrix<f64>) -> Result<Self> {
        let abscissa = f.abscissa();
        if abscissa.is_finite() {
            let sa = linalg::spectral_abscissa(k);
            if sa >= abscissa {
                return Err(Error::SpectralClash { abscissa: sa, rate: abscissa });
            }
        }
        Self::new_unchecked(f, k)
    }

    /// Same as [`MatrixTransforms::new`] for callers that already checked the
    /// spectral abscissa of `k` against every rate of `f`.
    pub(crate) fn new_unchecked(f: &JumpMixture, k: &DMatrix<f64>) -> Result<Self> {
        let dim = k.nrows();
        let id = DMatrix::<f64>::identity(dim, dim);
        let mut comps = Vec::with_capacity(f.components.len());
        for c in &f.components {
            match c.kind {
                JumpKind::Atom { location } => comps.push(CachedComponent::Atom { weight: c.weight, location }),
                _ => {
                    let (shape, rate) = c.kind.erlang_params().unwrap();
                    let r = linalg::inverse(&(&id * rate - k), "resolvent (λI - K)")?;
                    let mut powers = Vec::with_capacity(shape as usize);
                    let mut p = r.clone();
                    for _ in 0..shape {
                        powers.push(p.clone());
                        p = &p * &r;
                    }
                    comps.push(CachedComponent::Erlang { weight: c.weight, shape, rate, resolvent_powers: powers });
                }
            }
        }
        Ok(MatrixTransforms { dim, k: k.clone(), comps })
    }

    /// `∫_w^∞ e^{(y-w)K} F(dy)`.
    pub fn tail(&self, w: f64) -> DMatrix<f64> {
        let mut out = DMatrix::<f64>::zeros(self.dim, self.dim);
        for c in &self.comps {
            match c {
                CachedComponent::Atom { weight, location } => {
                    if *location > w {
                        out += linalg::expm(&(&self.k * (location - w))) * *weight;
                    } else if *location == w {
                        out += DMatrix::<f64>::identity(self.dim, self.dim) * *weight;
                    }
                }
                CachedComponent::Erlang { weight, shape, rate, resolvent_powers } => {
                    // e^{-λw} λ^k Σ_m w^{k-1-m}/(k-1-m)! R^{m+1}
                    let base = weight * (rate.powi(*shape as i32)) * (-rate * w).exp();
                    for (m, rp) in resolvent_powers.iter().enumerate() {
                        let n = *shape - 1 - m as u32;
                        let coef = if n == 0 { 1.0 } else { w.powi(n as i32) / special::factorial(n) };
                        out += rp * (base * coef);
                    }
                }
            }
        }
        out
    }

    /// `∫_0^∞ e^{yK} F(dy)`.
    pub fn transform(&self) -> DMatrix<f64> {
        self.tail(0.0)
    }

    /// `∫_x^∞ [∫_w^∞ e^{(y-w)K} F(dy)] dw`.
    pub fn tail_integral(&self, x: f64) -> DMatrix<f64> {
        let mut out = DMatrix::<f64>::zeros(self.dim, self.dim);
        for c in &self.comps {
            match c {
                CachedComponent::Atom { weight, location } => {
                    if *location > x {
                        out += linalg::expm_integral(&self.k, location - x) * *weight;
                    }
                }
                CachedComponent::Erlang { weight, shape, rate, resolvent_powers } => {
                    let base = weight * rate.powi(*shape as i32);
                    for (m, rp) in resolvent_powers.iter().enumerate() {
                        let n = *shape - 1 - m as u32;
                        out += rp * (base * special::upper_poly_exp(n, *rate, x));
                    }
                }
            }
        }
        out
    }

    /// `∫_0^∞ e^{θw} [∫_w^∞ e^{(y-w)K} F(dy)] dw` for `θ` below every rate.
    pub fn twisted_tail_transform(&self, theta: f64) -> DMatrix<f64> {
        let mut out = DMatrix::<f64>::zeros(self.dim, self.dim);
        for c in &self.comps {
            match c {
                CachedComponent::Atom { weight, location } => {
                    out += linalg::expm_twisted_integral(&self.k, theta, *location) * *weight;
                }
                CachedComponent::Erlang { weight, shape, rate, resolvent_powers } => {
                    let base = weight * rate.powi(*shape as i32);
                    for (m, rp) in resolvent_powers.iter().enumerate() {
                        let n = *shape - 1 - m as u32;
                        out += rp * (base / (rate - theta).powi(n as i32 + 1));
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mix(parts: &[(f64, JumpKind)]) -> JumpMixture {
        JumpMixture::new(parts.iter().map(|&(weight, kind)| MixtureComponent { weight, kind }).collect()).unwrap()
    }

    #[test]
    fn exponential_mgf_and_derivative() {
        let f = JumpMixture::exponential(1.0);
        assert!((f.mgf(0.5).unwrap() - 2.0).abs() < 1e-15);
        assert!((f.mgf_deriv(0.5).unwrap() - 4.0).abs() < 1e-14);
        let eps = 1e-6;
        let fd = (f.mgf(0.5 + eps).unwrap() - f.mgf(0.5 - eps).unwrap()) / (2.0 * eps);
        assert!((fd - 4.0).abs() < 1e-6);
        assert!(matches!(f.mgf(1.0), Err(Error::AbscissaExceeded { .. })));
    }

    #[test]
    fn atom_and_erlang_moments() {
        let a = JumpMixture::atom(2.0);
        assert_eq!(a.mgf(0.0).unwrap(), 1.0);
        assert_eq!(a.mean(), 2.0);
        assert_eq!(a.abscissa(), f64::INFINITY);
        assert!((JumpMixture::erlang(2, 3.0).mean() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_mixtures() {
        let bad = |parts: Vec<MixtureComponent>| JumpMixture::new(parts).is_err();
        assert!(bad(vec![]));
        assert!(bad(vec![MixtureComponent { weight: 0.5, kind: JumpKind::Atom { location: 1.0 } }]));
        assert!(bad(vec![MixtureComponent { weight: 1.0, kind: JumpKind::Atom { location: 0.0 } }]));
        assert!(bad(vec![MixtureComponent { weight: 1.0, kind: JumpKind::Exponential { rate: -1.0 } }]));
        assert!(bad(vec![MixtureComponent { weight: 1.0, kind: JumpKind::Erlang { shape: 0, rate: 1.0 } }]));
    }

    #[test]
    fn scalar_matrix_tail_examples() {
        let zero = DMatrix::<f64>::zeros(1, 1);
        let t = JumpMixture::exponential(3.0).matrix_tail(0.0, &zero).unwrap();
        assert!((t[(0, 0)] - 1.0).abs() < 1e-15);
        let t = JumpMixture::exponential(2.0).matrix_tail(1.0, &zero).unwrap();
        assert!((t[(0, 0)] - (-2.0f64).exp()).abs() < 1e-15);
        let t = JumpMixture::atom(3.0).matrix_tail(1.0, &DMatrix::from_element(1, 1, -1.0)).unwrap();
        assert!((t[(0, 0)] - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn spectral_clash_detected() {
        let k = DMatrix::from_element(1, 1, 2.5);
        assert!(matches!(
            JumpMixture::exponential(2.0).matrix_tail(0.0, &k),
            Err(Error::SpectralClash { .. })
        ));
    }

    // Gauss-Legendre on [a,b] split into panels; independent of the closed forms.
    fn quad(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
        const X: [f64; 5] = [0.0, -0.5384693101056831, 0.5384693101056831, -0.906179845938664, 0.906179845938664];
        const W: [f64; 5] = [0.5688888888888889, 0.47862867049936647, 0.47862867049936647, 0.23692688505618908, 0.23692688505618908];
        let h = (b - a) / panels as f64;
        let mut s = 0.0;
        for p in 0..panels {
            let lo = a + p as f64 * h;
            for i in 0..5 {
                s += W[i] * f(lo + 0.5 * h * (X[i] + 1.0));
            }
        }
        s * 0.5 * h
    }

    fn density(kind: JumpKind, y: f64) -> f64 {
        let (k, r) = kind.erlang_params().unwrap();
        r.powi(k as i32) * y.powi(k as i32 - 1) * (-r * y).exp() / special::factorial(k - 1)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]
        // 1x1 matrix tail against direct quadrature of ∫_w^∞ e^{(y-w)K} F(dy)
        #[test]
        fn one_by_one_tail_matches_quadrature(
            kk in -2.0f64..0.5, rate in 0.8f64..4.0, shape in 1u32..4, w in 0.0f64..3.0,
            loc in 0.1f64..4.0, p in 0.0f64..1.0,
        ) {
            let f = mix(&[(p, JumpKind::Erlang { shape, rate }), (1.0 - p, JumpKind::Atom { location: loc })]);
            let k = DMatrix::from_element(1, 1, kk);
            let got = f.matrix_tail(w, &k).unwrap()[(0, 0)];
            let kind = JumpKind::Erlang { shape, rate };
            let upper = w + 60.0 / (rate - kk);
            let cont = quad(|y| (kk * (y - w)).exp() * density(kind, y), w, upper, 400);
            let atom = if loc >= w { (kk * (loc - w)).exp() } else { 0.0 };
            let want = p * cont + (1.0 - p) * atom;
            prop_assert!((got - want).abs() <= 1e-8 * want.abs().max(1e-300) + 1e-14, "{} vs {}", got, want);
        }

        #[test]
        fn mgf_normalized_and_derivative_is_mean(rate in 0.5f64..5.0, shape in 1u32..5, loc in 0.1f64..3.0, p in 0.0f64..1.0) {
            let f = mix(&[(p, JumpKind::Erlang { shape, rate }), (1.0 - p, JumpKind::Atom { location: loc })]);
            prop_assert!((f.mgf(0.0).unwrap() - 1.0).abs() < 1e-14);
            let h = 1e-6;
            let fd = (f.mgf(h).unwrap() - f.mgf(-h).unwrap()) / (2.0 * h);
            prop_assert!((fd - f.mean()).abs() <= 1e-6 * f.mean());
            prop_assert!((f.mgf_deriv(0.0).unwrap() - f.mean()).abs() <= 1e-12 * f.mean());
        }
    }

    #[test]
    fn tail_integral_and_twisted_transform_match_quadrature() {
        let f = mix(&[
            (0.3, JumpKind::Atom { location: 1.2 }),
            (0.5, JumpKind::Erlang { shape: 3, rate: 2.5 }),
            (0.2, JumpKind::Exponential { rate: 1.5 }),
        ]);
        let k = DMatrix::from_row_slice(2, 2, &[-0.9, 0.4, 0.3, -0.3]);
        let mt = MatrixTransforms::new(&f, &k).unwrap();
        for x in [0.0, 0.4, 2.0] {
            let ti = mt.tail_integral(x);
            let mut num = DMatrix::<f64>::zeros(2, 2);
            // split at the atom so each panel integrand is smooth
            let pieces: Vec<(f64, f64)> = if x < 1.2 { vec![(x, 1.2), (1.2, 40.0)] } else { vec![(x, 40.0)] };
            for (a, b) in pieces {
                for i in 0..2 {
                    for j in 0..2 {
                        num[(i, j)] += quad(|w| mt.tail(w)[(i, j)], a, b, 400);
                    }
                }
            }
            assert!(linalg::sup_norm(&(ti - num)) < 1e-9, "x={x}");
        }
        let th = 0.6;
        let tw = mt.twisted_tail_transform(th);
        let mut num = DMatrix::<f64>::zeros(2, 2);
        for (a, b) in [(0.0, 1.2), (1.2, 60.0)] {
            for i in 0..2 {
                for j in 0..2 {
                    num[(i, j)] += quad(|w| (th * w).exp() * mt.tail(w)[(i, j)], a, b, 600);
                }
            }
        }
        assert!(linalg::sup_norm(&(tw - num)) < 1e-8);
    }

    #[test]
    fn exp_convolution_with_atom() {
        let f = JumpMixture::atom(1.0);
        assert_eq!(f.exp_convolution(2.0, 0.5), 0.0);
        assert!((f.exp_convolution(2.0, 1.5) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn sampling_mean() {
        use rand::SeedableRng;
        let f = mix(&[(0.4, JumpKind::Atom { location: 2.0 }), (0.6, JumpKind::Erlang { shape: 2, rate: 4.0 })]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 200_000;
        let m: f64 = (0..n).map(|_| f.sample(&mut rng)).sum::<f64>() / n as f64;
        // mean 1.1, sd < 1; 4 sigma
        assert!((m - f.mean()).abs() < 4.0 / (n as f64).sqrt());
    }
}
