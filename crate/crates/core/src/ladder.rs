//! Ascending ladder objects.
//!
//! `K` (|S-|×|S-|) and `L` (|S-|×|S+|) are the minimal solution of
//!
//! ```text
//! -K (I, L) = ∫_0^∞ e^{uK} (I, L) (C(du) + D(du)) Δ_v^{-1}
//! ```
//!
//! `(I, L)` is stored as an |S-|×n matrix whose columns follow the original
//! state numbering, so products with `C` and `D` need no permutation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::mixture::MatrixTransforms;
use crate::model::{MapModel, Partition};

const STEP_TOL: f64 = 1e-13;
// after STEP_TOL is reached, keep going while the step still shrinks
const EXTRA_SWEEPS: usize = 200;
const MAX_ITER: usize = 100_000;

#[derive(Debug, Clone)]
pub struct LadderSolution {
    pub k: DMatrix<f64>,
    pub l: DMatrix<f64>,
    /// Right null vector of `K` with `π⁻ k⁻ = 1`; absent when the drift is positive.
    pub kminus: Option<DVector<f64>>,
    pub qdual: DMatrix<f64>,
    pub rdual: DMatrix<f64>,
    pub residual: f64,
    pub iterations: usize,
}

impl LadderSolution {
    /// `(I, L)` with columns in original state order.
    pub fn il(&self, part: &Partition, n: usize) -> DMatrix<f64> {
        il_matrix(part, n, &self.l)
    }

    pub fn kminus(&self) -> Result<&DVector<f64>> {
        self.kminus.as_ref().ok_or(Error::DriftPositive { drift: f64::NAN })
    }
}

pub(crate) fn il_matrix(part: &Partition, n: usize, l: &DMatrix<f64>) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(part.minus.len(), n);
    for (a, &i) in part.minus.iter().enumerate() {
        g[(a, i)] = 1.0;
    }
    for (b, &j) in part.plus.iter().enumerate() {
        g.column_mut(j).copy_from(&l.column(b));
    }
    g
}

/// `(I; R)` with rows in original state order.
fn ir_matrix(part: &Partition, n: usize, r: &DMatrix<f64>) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(n, part.minus.len());
    for (a, &i) in part.minus.iter().enumerate() {
        g[(i, a)] = 1.0;
    }
    for (b, &j) in part.plus.iter().enumerate() {
        g.row_mut(j).copy_from(&r.row(b));
    }
    g
}

/// The matrix-weighted jump integrals of every `(i, j)` with `D_ij > 0`,
/// against one fixed matrix.
pub struct JumpTransforms {
    n: usize,
    dim: usize,
    pairs: Vec<(usize, usize, f64, MatrixTransforms)>,
}

impl JumpTransforms {
    pub fn new(model: &MapModel, k: &DMatrix<f64>) -> Result<Self> {
        let rate = model.theta_max();
        if rate.is_finite() && k.nrows() > 0 {
            let sa = linalg::spectral_abscissa(k);
            if sa >= rate {
                return Err(Error::SpectralClash { abscissa: sa, rate });
            }
        }
        let pairs = model
            .jumps()
            .map(|(i, j, d, f)| Ok((i, j, d, MatrixTransforms::new_unchecked(f, k)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(JumpTransforms { n: model.n(), dim: k.nrows(), pairs })
    }

    /// Column `j` of the result is `Σ_r D_rj M_rj g_r`, where `g_r` is column `r` of `g`
    /// and `M_rj` is `part` applied to the transforms of `F_rj`.
    pub fn row_form(&self, g: &DMatrix<f64>, part: impl Fn(&MatrixTransforms) -> DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim, self.n);
        for (r, j, d, mt) in &self.pairs {
            let col = part(mt) * g.column(*r) * *d;
            let mut dst = out.column_mut(*j);
            dst += col;
        }
        out
    }

    /// Row `i` of the result is `Σ_r D_ir g_{r·} M_ir`.
    pub fn column_form(&self, g: &DMatrix<f64>, part: impl Fn(&MatrixTransforms) -> DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, self.dim);
        for (i, r, d, mt) in &self.pairs {
            let row = g.row(*r) * part(mt) * *d;
            let mut dst = out.row_mut(*i);
            dst += row;
        }
        out
    }
}

#[derive(Default)]
struct Stopping {
    last: Option<f64>,
    extra: usize,
}

impl Stopping {
    fn done(&mut self, step: f64) -> bool {
        if step >= STEP_TOL {
            return false;
        }
        let stalled = self.last.is_some_and(|last| step >= last);
        self.last = Some(step);
        self.extra += 1;
        step == 0.0 || stalled || self.extra > EXTRA_SWEEPS
    }
}

fn initial_k(model: &MapModel) -> DMatrix<f64> {
    let v = model.v();
    let diag: Vec<f64> = model.partition().minus.iter().map(|&i| model.c()[(i, i)] / v[i].abs()).collect();
    linalg::diag(&diag)
}

/// Minimal solution `(K, L)` by monotone substitution.
pub fn solve_ladder(model: &MapModel) -> Result<LadderSolution> {
    let part = model.partition();
    let (m, p, n) = (part.minus.len(), part.plus.len(), model.n());
    if m == 0 {
        return Err(Error::EmptyMinus);
    }
    let (c, v) = (model.c(), model.v());
    let mut k = initial_k(model);
    let mut l = DMatrix::zeros(m, p);
    let mut stop = Stopping::default();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let g = il_matrix(part, n, &l);
        let gc = &g * c;
        let b = &gc + JumpTransforms::new(model, &k)?.row_form(&g, |t| t.transform());
        let k_new = DMatrix::from_fn(m, m, |r, a| b[(r, part.minus[a])] / v[part.minus[a]].abs());
        let mut l_new = DMatrix::zeros(m, p);
        if p > 0 {
            let b = gc + JumpTransforms::new(model, &k_new)?.row_form(&g, |t| t.transform());
            for (col, &j) in part.plus.iter().enumerate() {
                // (q_j I - K) L_j = (B_j - C_jj L_j) / v_j
                let rhs = (b.column(j) - l.column(col) * c[(j, j)]) / v[j];
                let q = model.rate(j) / v[j];
                let lhs = DMatrix::identity(m, m) * q - &k_new;
                l_new.set_column(col, &linalg::solve(&lhs, &rhs.into_owned(), "L column update")?);
            }
        }
        let step = linalg::sup_norm(&(&k_new - &k)).max(linalg::sup_norm(&(&l_new - &l)));
        k = k_new;
        l = l_new;
        if stop.done(step) {
            break;
        }
        if iterations >= MAX_ITER || !step.is_finite() {
            return Err(Error::NoConvergence { what: "ladder substitution", iterations });
        }
    }
    let residual = ladder_residual(model, &k, &l)?;
    let kminus = match k_eigenvector(model, &k) {
        Ok(x) => Some(x),
        Err(Error::DriftPositive { .. }) => None,
        Err(e) => return Err(e),
    };
    let (qdual, rdual) = dual_ladder(model, &k, &l)?;
    Ok(LadderSolution { k, l, kminus, qdual, rdual, residual, iterations })
}

/// Sup-norm residual of the ladder equation at `(K, L)`.
pub fn ladder_residual(model: &MapModel, k: &DMatrix<f64>, l: &DMatrix<f64>) -> Result<f64> {
    let part = model.partition();
    let g = il_matrix(part, model.n(), l);
    let mut rhs = &g * model.c() + JumpTransforms::new(model, k)?.row_form(&g, |t| t.transform());
    for (j, mut col) in rhs.column_iter_mut().enumerate() {
        col /= model.v()[j];
    }
    Ok(linalg::sup_norm(&(k * &g + rhs)))
}

/// `max(|π⁻ K|, |π⁻ L - π⁺|)`.
pub fn pi_relation_residual(model: &MapModel, k: &DMatrix<f64>, l: &DMatrix<f64>) -> Result<f64> {
    let part = model.partition();
    let pi = model.stationary_dist()?;
    let pm = DVector::from_iterator(part.minus.len(), part.minus.iter().map(|&i| pi[i])).transpose();
    let pp = DVector::from_iterator(part.plus.len(), part.plus.iter().map(|&i| pi[i])).transpose();
    let a = (&pm * k).amax();
    let b = if pp.is_empty() { 0.0 } else { (&pm * l - pp).amax() };
    Ok(a.max(b))
}

/// `k⁻ > 0` with `K k⁻ = 0` and `π⁻ k⁻ = 1`.
pub fn k_eigenvector(model: &MapModel, k: &DMatrix<f64>) -> Result<DVector<f64>> {
    let drift = model.mean_drift()?;
    if drift > 0.0 {
        return Err(Error::DriftPositive { drift });
    }
    let part = model.partition();
    let pi = model.stationary_dist()?;
    let m = part.minus.len();
    let mut a = DMatrix::zeros(m + 1, m);
    a.view_mut((0, 0), (m, m)).copy_from(k);
    for (col, &i) in part.minus.iter().enumerate() {
        a[(m, col)] = pi[i];
    }
    let mut b = DVector::zeros(m + 1);
    b[m] = 1.0;
    let x = a.svd(true, true).solve(&b, 1e-300).map_err(|_| Error::SingularSolve("k eigenvector"))?;
    if x.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::SingularSolve("k eigenvector"));
    }
    Ok(x)
}

/// `Q̃ = Δ_{π⁻}^{-1} Kᵀ Δ_{π⁻}` and `R̃ = Δ_{π⁺}^{-1} Lᵀ Δ_{π⁻}`.
pub fn dual_ladder(model: &MapModel, k: &DMatrix<f64>, l: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let part = model.partition();
    let pi = model.stationary_dist()?;
    let (pm, pp) = (&part.minus, &part.plus);
    let q = DMatrix::from_fn(pm.len(), pm.len(), |a, b| k[(b, a)] * pi[pm[b]] / pi[pm[a]]);
    let r = DMatrix::from_fn(pp.len(), pm.len(), |b, a| l[(a, b)] * pi[pm[a]] / pi[pp[b]]);
    Ok((q, r))
}

/// Solution of the column-oriented equation
///
/// ```text
/// -(I; R) Q = Δ_v^{-1} ∫_0^∞ (C(du) + D(du)) (I; R) e^{uQ}
/// ```
///
/// by the same substitution scheme. On the dual model this yields the dual
/// ladder pair; on the model itself it gives the matrices of the stationary
/// fluid-queue tail.
#[derive(Debug, Clone)]
pub struct ColumnSolution {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub residual: f64,
    pub iterations: usize,
}

pub fn solve_column_equation(model: &MapModel) -> Result<ColumnSolution> {
    let part = model.partition();
    let (m, p, n) = (part.minus.len(), part.plus.len(), model.n());
    if m == 0 {
        return Err(Error::EmptyMinus);
    }
    let (c, v) = (model.c(), model.v());
    let mut q = initial_k(model);
    let mut r = DMatrix::zeros(p, m);
    let mut stop = Stopping::default();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let g = ir_matrix(part, n, &r);
        let cg = c * &g;
        let b = &cg + JumpTransforms::new(model, &q)?.column_form(&g, |t| t.transform());
        let q_new = DMatrix::from_fn(m, m, |a, col| b[(part.minus[a], col)] / v[part.minus[a]].abs());
        let mut r_new = DMatrix::zeros(p, m);
        if p > 0 {
            let b = cg + JumpTransforms::new(model, &q_new)?.column_form(&g, |t| t.transform());
            for (row, &j) in part.plus.iter().enumerate() {
                // R_j (q_j I - Q) = (B_j - C_jj R_j) / v_j, solved transposed
                let rhs = ((b.row(j) - r.row(row) * c[(j, j)]) / v[j]).transpose();
                let qj = model.rate(j) / v[j];
                let lhs = (DMatrix::identity(m, m) * qj - &q_new).transpose();
                let x = linalg::solve(&lhs, &rhs, "R row update")?;
                r_new.set_row(row, &x.transpose());
            }
        }
        let step = linalg::sup_norm(&(&q_new - &q)).max(linalg::sup_norm(&(&r_new - &r)));
        q = q_new;
        r = r_new;
        if stop.done(step) {
            break;
        }
        if iterations >= MAX_ITER || !step.is_finite() {
            return Err(Error::NoConvergence { what: "column-form substitution", iterations });
        }
    }
    let residual = column_residual(model, &q, &r)?;
    Ok(ColumnSolution { q, r, residual, iterations })
}

pub fn column_residual(model: &MapModel, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<f64> {
    let g = ir_matrix(model.partition(), model.n(), r);
    let mut rhs = model.c() * &g + JumpTransforms::new(model, q)?.column_form(&g, |t| t.transform());
    for (i, mut row) in rhs.row_iter_mut().enumerate() {
        row /= model.v()[i];
    }
    Ok(linalg::sup_norm(&(&g * q + rhs)))
}

/// Joint law of `(M(τ₀⁺), Y(τ₀⁺))` from states in `S-`:
///
/// ```text
/// J_ij(x) = (1/|v_i|) ( ∫_0^x Σ_r D_rj [∫_w^∞ e^{(y-w)K} F_rj(dy) (I,L)_{·r}]_i dw + 1(j∈S+) L_ij v_j )
/// ```
///
/// The `dw` integral is evaluated in closed form.
pub struct LadderHeights<'a> {
    model: &'a MapModel,
    g: DMatrix<f64>,
    jt: JumpTransforms,
    at_zero: DMatrix<f64>,
}

impl<'a> LadderHeights<'a> {
    pub fn new(model: &'a MapModel, ladder: &LadderSolution) -> Result<Self> {
        let g = ladder.il(model.partition(), model.n());
        let jt = JumpTransforms::new(model, &ladder.k)?;
        let at_zero = jt.row_form(&g, |t| t.tail_integral(0.0));
        Ok(LadderHeights { model, g, jt, at_zero })
    }

    /// `(J_ij(x))_j` for a state `i` in `S-`.
    pub fn cdf(&self, i: usize, x: f64) -> Result<DVector<f64>> {
        let part = self.model.partition();
        let a = part.minus_pos(i).ok_or(Error::NotMinusState { state: i })?;
        let x = x.max(0.0);
        let jumps = &self.at_zero - self.jt.row_form(&self.g, |t| t.tail_integral(x));
        let v = self.model.v();
        Ok(DVector::from_fn(self.model.n(), |j, _| {
            let cont = if v[j] > 0.0 { self.g[(a, j)] * v[j] } else { 0.0 };
            (jumps[(a, j)] + cont) / v[i].abs()
        }))
    }

    /// `(J_ij(∞))_j`.
    pub fn total(&self, i: usize) -> Result<DVector<f64>> {
        let part = self.model.partition();
        let a = part.minus_pos(i).ok_or(Error::NotMinusState { state: i })?;
        let v = self.model.v();
        Ok(DVector::from_fn(self.model.n(), |j, _| {
            let cont = if v[j] > 0.0 { self.g[(a, j)] * v[j] } else { 0.0 };
            (self.at_zero[(a, j)] + cont) / v[i].abs()
        }))
    }

    /// The `dw` integrand at `w`: row `a` of `Σ_r D_rj ∫_w^∞ e^{(y-w)K} F_rj(dy) (I,L)_{·r}`.
    pub fn integrand(&self, w: f64) -> DMatrix<f64> {
        self.jt.row_form(&self.g, |t| t.tail(w))
    }
}

/// `J_ij(x)`.
pub fn ladder_height(model: &MapModel, ladder: &LadderSolution, i: usize, j: usize, x: f64) -> Result<f64> {
    Ok(LadderHeights::new(model, ladder)?.cdf(i, x)?[j])
}
