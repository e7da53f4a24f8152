//! The Markov additive process: drift rates `v`, no-jump rates `C`, jump
//! rates `D` and the jump laws `F_ij` attached to every positive `D_ij`.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, ModelIssue, Result};
use crate::linalg;
use crate::mixture::{JumpKind, JumpMixture, MixtureComponent};

const ROW_TOL: f64 = 1e-10;

/// States with negative and positive drift rate, each in ascending order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub minus: Vec<usize>,
    pub plus: Vec<usize>,
}

impl Partition {
    /// Position of `state` inside `minus`.
    pub fn minus_pos(&self, state: usize) -> Option<usize> {
        self.minus.iter().position(|&s| s == state)
    }

    pub fn plus_pos(&self, state: usize) -> Option<usize> {
        self.plus.iter().position(|&s| s == state)
    }

    /// Block ordering: `S-` first, then `S+`.
    pub fn order(&self) -> Vec<usize> {
        self.minus.iter().chain(self.plus.iter()).copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapModel {
    v: DVector<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
    jumps: BTreeMap<(usize, usize), JumpMixture>,
    partition: Partition,
}

impl MapModel {
    /// Validates and builds a model, collecting every problem found.
    pub fn new(
        v: Vec<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        jumps: Vec<((usize, usize), JumpMixture)>,
    ) -> Result<MapModel> {
        let n = v.len();
        let mut issues = Vec::new();
        if n == 0 {
            issues.push(ModelIssue::BadRates { reason: "model has no states".into() });
            return Err(Error::InvalidModel(issues));
        }
        if c.shape() != (n, n) || d.shape() != (n, n) {
            issues.push(ModelIssue::BadRates {
                reason: format!("C is {:?} and D is {:?}, expected ({n}, {n})", c.shape(), d.shape()),
            });
            return Err(Error::InvalidModel(issues));
        }
        for (i, &vi) in v.iter().enumerate() {
            if !vi.is_finite() {
                issues.push(ModelIssue::BadRates { reason: format!("v[{i}] is not finite") });
            } else if vi == 0.0 {
                issues.push(ModelIssue::ZeroRate { state: i });
            }
        }
        for i in 0..n {
            for j in 0..n {
                let (cij, dij) = (c[(i, j)], d[(i, j)]);
                if !cij.is_finite() || !dij.is_finite() {
                    issues.push(ModelIssue::BadRates { reason: format!("entry ({i},{j}) is not finite") });
                    continue;
                }
                if i != j && cij < 0.0 {
                    issues.push(ModelIssue::BadRates { reason: format!("C[{i}][{j}] = {cij} is negative") });
                }
                if dij < 0.0 {
                    issues.push(ModelIssue::BadRates { reason: format!("D[{i}][{j}] = {dij} is negative") });
                }
            }
        }
        for i in 0..n {
            let out: f64 = (0..n).filter(|&j| j != i).map(|j| c[(i, j)]).sum::<f64>() + d.row(i).sum();
            let defect = c[(i, i)] + out;
            if defect.abs() > ROW_TOL || !defect.is_finite() {
                issues.push(ModelIssue::NonConservativeRows { row: i, defect });
            }
        }
        let mut map = BTreeMap::new();
        for ((from, to), f) in jumps {
            if from >= n || to >= n {
                issues.push(ModelIssue::BadMixture { from, to, reason: "state index out of range".into() });
                continue;
            }
            if d[(from, to)] <= 0.0 {
                issues.push(ModelIssue::BadMixture { from, to, reason: "jump law given but D is zero".into() });
                continue;
            }
            if map.insert((from, to), f).is_some() {
                issues.push(ModelIssue::BadMixture { from, to, reason: "jump law given twice".into() });
            }
        }
        for i in 0..n {
            for j in 0..n {
                if d[(i, j)] > 0.0 && !map.contains_key(&(i, j)) {
                    issues.push(ModelIssue::BadMixture { from: i, to: j, reason: "D > 0 but no jump law".into() });
                }
            }
        }
        if issues.is_empty() {
            let unreachable = not_strongly_connected(&(&c + &d));
            if !unreachable.is_empty() {
                issues.push(ModelIssue::Reducible { unreachable });
            }
        }
        if !issues.is_empty() {
            return Err(Error::InvalidModel(issues));
        }
        let minus = (0..n).filter(|&i| v[i] < 0.0).collect();
        let plus = (0..n).filter(|&i| v[i] > 0.0).collect();
        Ok(MapModel { v: DVector::from_vec(v), c, d, jumps: map, partition: Partition { minus, plus } })
    }

    pub fn n(&self) -> usize {
        self.v.len()
    }

    pub fn v(&self) -> &DVector<f64> {
        &self.v
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn jump(&self, i: usize, j: usize) -> Option<&JumpMixture> {
        self.jumps.get(&(i, j))
    }

    /// `(i, j, D_ij, F_ij)` for every jump transition.
    pub fn jumps(&self) -> impl Iterator<Item = (usize, usize, f64, &JumpMixture)> + '_ {
        self.jumps.iter().map(|(&(i, j), f)| (i, j, self.d[(i, j)], f))
    }

    pub fn has_jumps(&self) -> bool {
        !self.jumps.is_empty()
    }

    /// Total event rate `c(i) = -C_ii`.
    pub fn rate(&self, i: usize) -> f64 {
        -self.c[(i, i)]
    }

    pub fn generator(&self) -> DMatrix<f64> {
        &self.c + &self.d
    }

    /// `U_ij(∞) = 1(i≠j) C_ij + D_ij`.
    pub fn u_total(&self, i: usize, j: usize) -> f64 {
        let c = if i != j { self.c[(i, j)] } else { 0.0 };
        c + self.d[(i, j)]
    }

    /// `U_ij([0, x])`.
    pub fn u_cdf(&self, i: usize, j: usize, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        let c = if i != j { self.c[(i, j)] } else { 0.0 };
        c + self.jump(i, j).map_or(0.0, |f| self.d[(i, j)] * f.cdf(x))
    }

    /// `∫_{[0,x]} e^{-q(x-y)} U_ij(dy)`.
    pub fn u_exp_convolution(&self, i: usize, j: usize, q: f64, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        let c = if i != j { self.c[(i, j)] * (-q * x).exp() } else { 0.0 };
        c + self.jump(i, j).map_or(0.0, |f| self.d[(i, j)] * f.exp_convolution(q, x))
    }

    /// `∫_{[0,x]} (1 - e^{-q(x-y)}) U_ij(dy)`.
    pub fn u_smoothed(&self, i: usize, j: usize, q: f64, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let c = if i != j { -self.c[(i, j)] * (-q * x).exp_m1() } else { 0.0 };
        c + self.jump(i, j).map_or(0.0, |f| {
            self.d[(i, j)] * (f.cdf(x) - f.exp_convolution(q, x))
        })
    }

    /// `∫ e^{θy} U_ij(dy)`.
    pub fn u_hat(&self, i: usize, j: usize, theta: f64) -> Result<f64> {
        let c = if i != j { self.c[(i, j)] } else { 0.0 };
        Ok(c + match self.jump(i, j) {
            Some(f) => self.d[(i, j)] * f.mgf(theta)?,
            None => 0.0,
        })
    }

    /// Minimum mgf abscissa over all jump laws (`+inf` when there are none).
    pub fn theta_max(&self) -> f64 {
        self.jumps.values().map(|f| f.abscissa()).fold(f64::INFINITY, f64::min)
    }

    /// `D̂(θ) = ∫ e^{θy} D(dy)`.
    pub fn d_hat(&self, theta: f64) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.n(), self.n());
        for (i, j, dij, f) in self.jumps() {
            out[(i, j)] = dij * f.mgf(theta)?;
        }
        Ok(out)
    }

    /// `D̂'(θ) = ∫ y e^{θy} D(dy)`.
    pub fn d_hat_deriv(&self, theta: f64) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.n(), self.n());
        for (i, j, dij, f) in self.jumps() {
            out[(i, j)] = dij * f.mgf_deriv(theta)?;
        }
        Ok(out)
    }

    /// `∫ y D(dy)`.
    pub fn jump_mean_matrix(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n(), self.n());
        for (i, j, dij, f) in self.jumps() {
            out[(i, j)] = dij * f.mean();
        }
        out
    }

    /// Stationary distribution of the background chain `C + D`.
    pub fn stationary_dist(&self) -> Result<DVector<f64>> {
        let n = self.n();
        let q = self.generator();
        // π Q = 0 with the last balance equation replaced by π e = 1
        let mut a = q.transpose();
        a.row_mut(n - 1).fill(1.0);
        let mut b = DVector::zeros(n);
        b[n - 1] = 1.0;
        let mut pi = linalg::solve(&a, &b, "stationary distribution")?;
        // one step of iterative refinement
        let r = &b - &a * &pi;
        pi += linalg::solve(&a, &r, "stationary distribution")?;
        let scale = linalg::sup_norm(&q).max(1.0);
        let resid = (pi.transpose() * &q).amax() / scale;
        if resid > 1e-12 || pi.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::SingularSolve("stationary distribution"));
        }
        Ok(pi)
    }

    /// `E Y(1) = π Δ_v e + π (∫ y D(dy)) e`.
    pub fn mean_drift(&self) -> Result<f64> {
        let pi = self.stationary_dist()?;
        let jm = self.jump_mean_matrix();
        Ok((0..self.n()).map(|i| pi[i] * (self.v[i] + jm.row(i).sum())).sum())
    }

    /// Time-reversed model: `C̃ = Δ_π^{-1} Cᵀ Δ_π`, same for `D`, `F̃_ij = F_ji`, same `v`.
    pub fn dual_model(&self) -> Result<MapModel> {
        let pi = self.stationary_dist()?;
        let n = self.n();
        let rev = |m: &DMatrix<f64>| DMatrix::from_fn(n, n, |i, j| if i == j { m[(i, i)] } else { pi[j] * m[(j, i)] / pi[i] });
        let mut c = rev(&self.c);
        let d = rev(&self.d);
        // re-impose the row identity exactly so rounding cannot fail validation
        for i in 0..n {
            let out: f64 = (0..n).filter(|&j| j != i).map(|j| c[(i, j)]).sum::<f64>() + d.row(i).sum();
            c[(i, i)] = -out;
        }
        let jumps = self.jumps.iter().map(|(&(i, j), f)| ((j, i), f.clone())).collect();
        MapModel::new(self.v.iter().copied().collect(), c, d, jumps)
    }

    /// `A(θ) = C + D̂(θ) + θ Δ_v`.
    pub fn a_of_theta(&self, theta: f64) -> Result<DMatrix<f64>> {
        let mut a = &self.c + self.d_hat(theta)?;
        for i in 0..self.n() {
            a[(i, i)] += theta * self.v[i];
        }
        Ok(a)
    }

    pub fn from_toml_str(text: &str) -> Result<MapModel> {
        let file: ModelFile = toml::from_str(text).map_err(|e| Error::Parse(e.message().to_string()))?;
        file.into_model()
    }

    pub fn from_path(path: &Path) -> Result<MapModel> {
        let text = std::fs::read_to_string(path)?;
        MapModel::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&ModelFile::from_model(self)).expect("model serializes")
    }
}

/// States that are not in the same strongly connected class as state 0.
fn not_strongly_connected(q: &DMatrix<f64>) -> Vec<usize> {
    let n = q.nrows();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for j in 0..n {
                let w = if forward { q[(i, j)] } else { q[(j, i)] };
                if i != j && w > 0.0 && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen
    };
    let (fwd, bwd) = (reach(true), reach(false));
    (0..n).filter(|&i| !(fwd[i] && bwd[i])).collect()
}

/// On-disk model description.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub states: usize,
    pub v: Vec<f64>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    pub d: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub jumps: Vec<JumpFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpFile {
    pub from: usize,
    pub to: usize,
    pub mixture: Vec<ComponentFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentFile {
    pub weight: f64,
    pub kind: String,
    pub params: ParamsFile,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<u32>,
}

impl ModelFile {
    pub fn into_model(self) -> Result<MapModel> {
        let n = self.states;
        let mut issues = Vec::new();
        if self.v.len() != n {
            issues.push(ModelIssue::BadRates { reason: format!("v has {} entries, states = {n}", self.v.len()) });
        }
        let matrix = |name: &str, rows: &[Vec<f64>], issues: &mut Vec<ModelIssue>| {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                issues.push(ModelIssue::BadRates { reason: format!("{name} must be {n}x{n}") });
                return DMatrix::zeros(n, n);
            }
            DMatrix::from_fn(n, n, |i, j| rows[i][j])
        };
        let c = matrix("C", &self.c, &mut issues);
        let d = matrix("D", &self.d, &mut issues);
        let mut jumps = Vec::new();
        for j in self.jumps {
            let mut comps = Vec::new();
            let mut bad = None;
            for comp in &j.mixture {
                match component_kind(comp) {
                    Ok(kind) => comps.push(MixtureComponent { weight: comp.weight, kind }),
                    Err(reason) => bad = Some(reason),
                }
            }
            let mixture = match bad {
                Some(reason) => Err(reason),
                None => JumpMixture::new(comps),
            };
            match mixture {
                Ok(f) => jumps.push(((j.from, j.to), f)),
                Err(reason) => issues.push(ModelIssue::BadMixture { from: j.from, to: j.to, reason }),
            }
        }
        if !issues.is_empty() {
            return Err(Error::InvalidModel(issues));
        }
        MapModel::new(self.v, c, d, jumps)
    }

    pub fn from_model(m: &MapModel) -> ModelFile {
        let rows = |a: &DMatrix<f64>| (0..m.n()).map(|i| a.row(i).iter().copied().collect()).collect();
        ModelFile {
            states: m.n(),
            v: m.v.iter().copied().collect(),
            c: rows(&m.c),
            d: rows(&m.d),
            jumps: m
                .jumps
                .iter()
                .map(|(&(from, to), f)| JumpFile {
                    from,
                    to,
                    mixture: f.components().iter().map(component_file).collect(),
                })
                .collect(),
        }
    }
}

fn component_kind(c: &ComponentFile) -> std::result::Result<JumpKind, String> {
    let p = &c.params;
    let need = |x: Option<f64>, name: &str| x.ok_or_else(|| format!("{} component needs params.{name}", c.kind));
    let kind = match c.kind.as_str() {
        "atom" => JumpKind::Atom { location: need(p.location, "location")? },
        "exponential" => JumpKind::Exponential { rate: need(p.rate, "rate")? },
        "erlang" => JumpKind::Erlang {
            shape: p.shape.ok_or("erlang component needs params.shape")?,
            rate: need(p.rate, "rate")?,
        },
        other => return Err(format!("unknown component kind '{other}' (atom, exponential, erlang)")),
    };
    let extra = match kind {
        JumpKind::Atom { .. } => p.rate.is_some() || p.shape.is_some(),
        JumpKind::Exponential { .. } => p.location.is_some() || p.shape.is_some(),
        JumpKind::Erlang { .. } => p.location.is_some(),
    };
    if extra {
        return Err(format!("{} component has parameters that do not apply to it", c.kind));
    }
    Ok(kind)
}

fn component_file(c: &MixtureComponent) -> ComponentFile {
    let (kind, params) = match c.kind {
        JumpKind::Atom { location } => ("atom", ParamsFile { location: Some(location), ..Default::default() }),
        JumpKind::Exponential { rate } => ("exponential", ParamsFile { rate: Some(rate), ..Default::default() }),
        JumpKind::Erlang { shape, rate } => {
            ("erlang", ParamsFile { rate: Some(rate), shape: Some(shape), ..Default::default() })
        }
    };
    ComponentFile { weight: c.weight, kind: kind.into(), params }
}
