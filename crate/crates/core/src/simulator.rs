//! Monte Carlo oracle: direct simulation of `(M(t), Y(t))` and estimators for
//! hitting probabilities, ladder heights, the no-jump duality identity and the
//! stationary buffer tail.
//!
//! Replication `r` of an estimator draws from `ChaCha8Rng::seed_from_u64(seed ^ r)`
//! on a stream number that identifies the estimator, so results do not depend on
//! scheduling and are bit-for-bit reproducible.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{Beta, ContinuousCDF};

use crate::error::{Error, Result};
use crate::mixture::JumpMixture;
use crate::model::MapModel;
use crate::spectral;

/// Probability mass that the hitting estimators may lose by abandoning paths
/// that fell far below the target.
pub const TRUNCATION_EPS: f64 = 1e-6;

const MAX_EVENTS: usize = 10_000_000;

mod stream {
    pub const HITTING: u64 = 1;
    pub const LADDER: u64 = 2;
    pub const DUALITY_LEFT: u64 = 3;
    pub const DUALITY_RIGHT: u64 = 4;
    pub const CROSSING_START: u64 = 5;
    pub const FLUID: u64 = 6;
}

fn replication_rng(seed: u64, stream: u64, r: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ r);
    rng.set_stream(stream);
    rng
}

fn exp1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    -(1.0 - rng.random::<f64>()).ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathEvent {
    pub time: f64,
    pub from: usize,
    pub to: usize,
    /// Zero for transitions without a jump.
    pub jump: f64,
    /// Level right after the transition.
    pub level: f64,
}

struct Move<'a> {
    cum: f64,
    to: usize,
    law: Option<&'a JumpMixture>,
}

/// Embedded jump chain of a model, ready for sampling.
pub struct Sampler<'a> {
    model: &'a MapModel,
    moves: Vec<Vec<Move<'a>>>,
}

impl<'a> Sampler<'a> {
    pub fn new(model: &'a MapModel) -> Self {
        let n = model.n();
        let moves = (0..n)
            .map(|i| {
                let rate = model.rate(i);
                let mut acc = 0.0;
                let mut out = Vec::new();
                for j in 0..n {
                    if j != i && model.c()[(i, j)] > 0.0 {
                        acc += model.c()[(i, j)] / rate;
                        out.push(Move { cum: acc, to: j, law: None });
                    }
                    if model.d()[(i, j)] > 0.0 {
                        acc += model.d()[(i, j)] / rate;
                        out.push(Move { cum: acc, to: j, law: model.jump(i, j) });
                    }
                }
                out
            })
            .collect();
        Sampler { model, moves }
    }

    pub fn model(&self) -> &MapModel {
        self.model
    }

    /// Holding time in `state` and the transition that ends it.
    pub fn step<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> (f64, usize, f64) {
        let hold = exp1(rng) / self.model.rate(state);
        let moves = &self.moves[state];
        let u: f64 = rng.random::<f64>() * moves.last().map_or(1.0, |m| m.cum);
        let m = moves.iter().find(|m| u < m.cum).unwrap_or_else(|| moves.last().unwrap());
        let jump = m.law.map_or(0.0, |f| f.sample(rng));
        (hold, m.to, jump)
    }

    fn stationary_state<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        weights.len() - 1
    }
}

/// All events up to time `horizon` of a path started at level 0 in `start`.
pub fn simulate_path<R: Rng + ?Sized>(model: &MapModel, start: usize, rng: &mut R, horizon: f64) -> Vec<PathEvent> {
    let sampler = Sampler::new(model);
    let (mut t, mut y, mut s) = (0.0, 0.0, start);
    let mut events = Vec::new();
    loop {
        let (hold, to, jump) = sampler.step(s, rng);
        if t + hold > horizon {
            return events;
        }
        t += hold;
        y += model.v()[s] * hold + jump;
        events.push(PathEvent { time: t, from: s, to, jump, level: y });
        s = to;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub reps: u64,
    pub confidence: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Estimate {
    /// Binomial proportion with a Clopper–Pearson interval.
    pub fn proportion(successes: u64, reps: u64, confidence: f64) -> Estimate {
        let n = reps as f64;
        let p = successes as f64 / n;
        let tail = 0.5 * (1.0 - confidence);
        let k = successes as f64;
        let lower = if successes == 0 {
            0.0
        } else {
            Beta::new(k, n - k + 1.0).map(|b| b.inverse_cdf(tail)).unwrap_or(0.0)
        };
        let upper = if successes == reps {
            1.0
        } else {
            Beta::new(k + 1.0, n - k).map(|b| b.inverse_cdf(1.0 - tail)).unwrap_or(1.0)
        };
        Estimate { value: p, std_error: (p * (1.0 - p) / n).sqrt(), reps, confidence, lower, upper }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    /// `(value - x) / std_error`; infinite when the sample is degenerate and differs from `x`.
    pub fn z_score(&self, x: f64) -> f64 {
        let d = self.value - x;
        if d == 0.0 {
            0.0
        } else {
            d / self.std_error
        }
    }
}

/// Simultaneous coverage: each of `family` intervals gets level `1 - (1 - confidence)/family`.
pub fn bonferroni(confidence: f64, family: usize) -> f64 {
    1.0 - (1.0 - confidence) / family as f64
}

fn check_drift(model: &MapModel) -> Result<f64> {
    let drift = model.mean_drift()?;
    if drift >= 0.0 {
        return Err(Error::DriftNonNegative { drift });
    }
    Ok(drift)
}

/// Depth below the next target from which the target is reached with
/// probability at most `eps`: `P ≤ (max h/min h) e^{-α depth}` for the
/// right Perron vector `h` at `α`.
pub fn truncation_depth(model: &MapModel, eps: f64) -> Result<f64> {
    check_drift(model)?;
    let alpha = spectral::decay_rate(model)?;
    let p = spectral::perron(model, alpha, None)?;
    let ratio = p.h.max() / p.h.min();
    Ok(((1.0 / eps).ln() + ratio.ln()) / alpha)
}

/// Counts for one start state: `hits[l][j]` paths that first entered
/// `[levels[l], ∞)` in state `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct HittingCounts {
    pub levels: Vec<f64>,
    pub hits: Vec<Vec<u64>>,
    pub reps: u64,
    /// Upper bound on the probability lost per level to truncation.
    pub truncation_bias: f64,
}

impl HittingCounts {
    pub fn estimate(&self, level: usize, j: usize, confidence: f64) -> Estimate {
        Estimate::proportion(self.hits[level][j], self.reps, confidence)
    }

    pub fn never(&self, level: usize) -> Estimate {
        let hit: u64 = self.hits[level].iter().sum();
        Estimate::proportion(self.reps - hit, self.reps, 0.99)
    }
}

/// First entry states into each of `levels` (ascending, nonnegative) for one path from level 0.
fn hitting_run<R: Rng + ?Sized>(
    sampler: &Sampler,
    start: usize,
    levels: &[f64],
    depth: f64,
    rng: &mut R,
    out: &mut [Option<usize>],
) {
    let v = sampler.model().v();
    let (mut y, mut s, mut k) = (0.0, start, 0);
    // a rising start enters [0, ∞) at time 0
    while k < levels.len() && v[s] > 0.0 && levels[k] <= 0.0 {
        out[k] = Some(s);
        k += 1;
    }
    let mut events = 0;
    while k < levels.len() {
        let (hold, to, jump) = sampler.step(s, rng);
        y += v[s] * hold;
        while k < levels.len() && v[s] > 0.0 && y >= levels[k] {
            out[k] = Some(s);
            k += 1;
        }
        y += jump;
        while k < levels.len() && y >= levels[k] {
            out[k] = Some(to);
            k += 1;
        }
        s = to;
        events += 1;
        if k < levels.len() && (y < levels[k] - depth || events > MAX_EVENTS) {
            return;
        }
    }
}

/// Estimates `Ψ_ij(x)` for every `x` in `levels` from one set of paths per start state.
pub fn estimate_hitting(model: &MapModel, levels: &[f64], start: usize, reps: u64, seed: u64) -> Result<HittingCounts> {
    if levels.iter().any(|&x| !(x >= 0.0 && x.is_finite())) || levels.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("levels must be finite, nonnegative and ascending".into()));
    }
    if start >= model.n() || reps == 0 {
        return Err(Error::InvalidArgument(format!("start state {start}, reps {reps}")));
    }
    let depth = truncation_depth(model, TRUNCATION_EPS)?;
    let sampler = Sampler::new(model);
    let (n, nl) = (model.n(), levels.len());
    let hits = (0..reps)
        .into_par_iter()
        .fold(
            || (vec![0u64; nl * n], vec![None; nl]),
            |(mut acc, mut out), r| {
                let mut rng = replication_rng(seed, stream::HITTING, r);
                out.iter_mut().for_each(|o| *o = None);
                hitting_run(&sampler, start, levels, depth, &mut rng, &mut out);
                for (l, o) in out.iter().enumerate() {
                    if let Some(j) = o {
                        acc[l * n + j] += 1;
                    }
                }
                (acc, out)
            },
        )
        .map(|(acc, _)| acc)
        .reduce(|| vec![0u64; nl * n], |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect());
    Ok(HittingCounts {
        levels: levels.to_vec(),
        hits: hits.chunks(n).map(|c| c.to_vec()).collect(),
        reps,
        truncation_bias: TRUNCATION_EPS,
    })
}

/// Ladder heights `Y(τ₀⁺)` sorted by entry state, from paths started at level 0 in a falling state.
#[derive(Debug, Clone, PartialEq)]
pub struct LadderSample {
    pub start: usize,
    pub reps: u64,
    pub heights: Vec<Vec<f64>>,
    pub truncation_bias: f64,
}

impl LadderSample {
    pub fn mass(&self, j: usize) -> f64 {
        self.heights[j].len() as f64 / self.reps as f64
    }

    /// Paths that never returned to level 0.
    pub fn defective_mass(&self) -> f64 {
        1.0 - (0..self.heights.len()).map(|j| self.mass(j)).sum::<f64>()
    }

    /// `sup_x |F̂_j(x) - J(x)|` for the sub-distribution `F̂_j(x) = P̂(M(τ₀⁺) = j, Y(τ₀⁺) ≤ x)`.
    /// `cdf` must be continuous on `(0, ∞)`; its value at 0 may include an atom.
    pub fn sup_distance(&self, j: usize, cdf: impl Fn(f64) -> f64, total: f64) -> f64 {
        let n = self.reps as f64;
        let hs = &self.heights[j];
        let mut worst = (hs.len() as f64 / n - total).abs();
        // empirical value just before the first point is 0
        let mut left = 0.0;
        let mut idx = 0;
        while idx < hs.len() {
            let x = hs[idx];
            let mut end = idx;
            while end < hs.len() && hs[end] == x {
                end += 1;
            }
            let model_at = cdf(x);
            let model_left = if x == 0.0 { 0.0 } else { model_at };
            let right = end as f64 / n;
            worst = worst.max((right - model_at).abs()).max((left - model_left).abs());
            left = right;
            idx = end;
        }
        worst.max((left - total).abs())
    }
}

/// Dvoretzky–Kiefer–Wolfowitz half-width for `reps` samples at `confidence`.
pub fn dkw_band(reps: u64, confidence: f64) -> f64 {
    ((2.0 / (1.0 - confidence)).ln() / (2.0 * reps as f64)).sqrt()
}

pub fn estimate_ladder(model: &MapModel, start: usize, reps: u64, seed: u64) -> Result<LadderSample> {
    if model.v().get(start).is_none_or(|&v| v > 0.0) {
        return Err(Error::NotMinusState { state: start });
    }
    let depth = truncation_depth(model, TRUNCATION_EPS)?;
    let sampler = Sampler::new(model);
    let v = model.v();
    let n = model.n();
    let runs: Vec<Option<(usize, f64)>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = replication_rng(seed, stream::LADDER, r);
            let (mut y, mut s) = (0.0, start);
            for _ in 0..MAX_EVENTS {
                let (hold, to, jump) = sampler.step(s, &mut rng);
                y += v[s] * hold;
                if v[s] > 0.0 && y >= 0.0 {
                    return Some((s, 0.0));
                }
                y += jump;
                if y >= 0.0 {
                    return Some((to, y));
                }
                s = to;
                if y < -depth {
                    return None;
                }
            }
            None
        })
        .collect();
    let mut heights = vec![Vec::new(); n];
    for (j, y) in runs.into_iter().flatten() {
        heights[j].push(y);
    }
    for h in &mut heights {
        h.sort_by(f64::total_cmp);
    }
    Ok(LadderSample { start, reps, heights, truncation_bias: TRUNCATION_EPS })
}

/// One side-by-side comparison of two estimates of the same quantity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedCheck {
    pub falling: usize,
    pub rising: usize,
    pub left: f64,
    pub right: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualityReport {
    /// `-v(i) P(M(0)=i, M(τ₀⁺)=k)` vs `v(k) P(M̃(0)=k, M̃(τ̃₀⁻)=i)`, `M(0) ~ π`, for `i ∈ S-`, `k ∈ S+`.
    pub pairs: Vec<PairedCheck>,
    /// `P(τ₀⁺ < ∞)` started at a stationary down-crossing.
    pub crossing_start: Estimate,
    /// `a⁺/a⁻`.
    pub rate_ratio: f64,
    pub crossing_z: f64,
    pub reps: u64,
}

impl DualityReport {
    pub fn max_abs_z(&self) -> f64 {
        self.pairs.iter().map(|p| p.z.abs()).fold(self.crossing_z.abs(), f64::max)
    }
}

/// First-passage state of `Y` into `[0, ∞)` (`up`) or `(-∞, 0]` (`!up`) for a no-jump model,
/// from level 0. A start moving in the target direction passes at time 0.
fn crossing_run<R: Rng + ?Sized>(sampler: &Sampler, start: usize, up: bool, rng: &mut R, depth: f64) -> Option<usize> {
    let v = sampler.model().v();
    let sign = if up { 1.0 } else { -1.0 };
    if sign * v[start] > 0.0 {
        return Some(start);
    }
    let (mut y, mut s) = (0.0, start);
    for _ in 0..MAX_EVENTS {
        let (hold, to, _) = sampler.step(s, rng);
        y += sign * v[s] * hold;
        if y >= 0.0 {
            return Some(s);
        }
        if y < -depth {
            return None;
        }
        s = to;
    }
    None
}

/// Both sides of the level-crossing identity for a model without jumps, from stationary starts.
pub fn check_duality_nojump(model: &MapModel, reps: u64, seed: u64) -> Result<DualityReport> {
    if model.has_jumps() {
        return Err(Error::HasJumps);
    }
    let pi = model.stationary_dist()?;
    let v = model.v();
    let drift = model.mean_drift()?;
    let depth = if drift < 0.0 { truncation_depth(model, TRUNCATION_EPS)? } else { f64::INFINITY };
    let dual = model.dual_model()?;
    // the dual's upward excursions end a.s. only when its drift is nonpositive
    let dual_depth = if drift > 0.0 {
        let flipped = MapModel::new(v.iter().map(|x| -x).collect(), dual.c().clone(), dual.d().clone(), vec![])?;
        truncation_depth(&flipped, TRUNCATION_EPS)?
    } else {
        f64::INFINITY
    };
    let n = model.n();
    let sampler = Sampler::new(model);
    let dual_sampler = Sampler::new(&dual);
    let weights: Vec<f64> = pi.iter().copied().collect();
    let tally = |stream: u64, sampler: &Sampler, up: bool, depth: f64| -> Vec<u64> {
        (0..reps)
            .into_par_iter()
            .fold(
                || vec![0u64; n * n],
                |mut acc, r| {
                    let mut rng = replication_rng(seed, stream, r);
                    let s0 = Sampler::stationary_state(&weights, &mut rng);
                    if let Some(j) = crossing_run(sampler, s0, up, &mut rng, depth) {
                        acc[s0 * n + j] += 1;
                    }
                    acc
                },
            )
            .reduce(|| vec![0u64; n * n], |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect())
    };
    let left = tally(stream::DUALITY_LEFT, &sampler, true, depth);
    let right = tally(stream::DUALITY_RIGHT, &dual_sampler, false, dual_depth);
    let nr = reps as f64;
    let mut pairs = Vec::new();
    for i in (0..n).filter(|&i| v[i] < 0.0) {
        for k in (0..n).filter(|&k| v[k] > 0.0) {
            let (p1, p2) = (left[i * n + k] as f64 / nr, right[k * n + i] as f64 / nr);
            let (c1, c2) = (-v[i], v[k]);
            let se = ((c1 * c1 * p1 * (1.0 - p1) + c2 * c2 * p2 * (1.0 - p2)) / nr).sqrt();
            let diff = c1 * p1 - c2 * p2;
            let z = if diff == 0.0 { 0.0 } else { diff / se };
            pairs.push(PairedCheck { falling: i, rising: k, left: c1 * p1, right: c2 * p2, z });
        }
    }

    let a_minus: f64 = (0..n).filter(|&i| v[i] < 0.0).map(|i| -v[i] * pi[i]).sum();
    let a_plus: f64 = (0..n).filter(|&i| v[i] > 0.0).map(|i| v[i] * pi[i]).sum();
    let crossing_weights: Vec<f64> = (0..n).map(|i| if v[i] < 0.0 { -v[i] * pi[i] / a_minus } else { 0.0 }).collect();
    let hits: u64 = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = replication_rng(seed, stream::CROSSING_START, r);
            let s0 = Sampler::stationary_state(&crossing_weights, &mut rng);
            crossing_run(&sampler, s0, true, &mut rng, depth).is_some() as u64
        })
        .sum();
    let crossing_start = Estimate::proportion(hits, reps, 0.99);
    let rate_ratio = (a_plus / a_minus).min(1.0);
    let crossing_z = crossing_start.z_score(rate_ratio);
    Ok(DualityReport { pairs, crossing_start, rate_ratio: a_plus / a_minus, crossing_z, reps })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluidTailEstimate {
    pub level: f64,
    pub horizon: f64,
    /// `P(V(T) > x, M(T) = i)` from an empty buffer with `M(0) ~ π`.
    pub per_state: Vec<Estimate>,
    /// Bound on `P(V(∞) > x) - P(V(T) > x)` from the supermartingale
    /// `e^{θY(t)} h_θ(M(t))` of the time-reversed process, optimized over `θ ∈ (0, α)`.
    pub horizon_bias: f64,
}

/// `P(V > x, M = i)` for the reflected process `V(t) = Y(t) - inf_{u≤t} Y(u)` at time `horizon`.
pub fn estimate_fluid_tail(model: &MapModel, x: f64, horizon: f64, reps: u64, seed: u64) -> Result<FluidTailEstimate> {
    check_drift(model)?;
    if !(horizon > 0.0) || !(x >= 0.0) {
        return Err(Error::InvalidArgument(format!("level {x}, horizon {horizon}")));
    }
    let pi = model.stationary_dist()?;
    let weights: Vec<f64> = pi.iter().copied().collect();
    let sampler = Sampler::new(model);
    let v = model.v();
    let n = model.n();
    let counts = (0..reps)
        .into_par_iter()
        .fold(
            || vec![0u64; n],
            |mut acc, r| {
                let mut rng = replication_rng(seed, stream::FLUID, r);
                let mut s = Sampler::stationary_state(&weights, &mut rng);
                let (mut t, mut buf) = (0.0, 0.0f64);
                loop {
                    let (hold, to, jump) = sampler.step(s, &mut rng);
                    let dt = hold.min(horizon - t);
                    buf = (buf + v[s] * dt).max(0.0);
                    if t + hold >= horizon {
                        break;
                    }
                    t += hold;
                    buf += jump;
                    s = to;
                }
                if buf > x {
                    acc[s] += 1;
                }
                acc
            },
        )
        .reduce(|| vec![0u64; n], |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect());
    let per_state = counts.iter().map(|&c| Estimate::proportion(c, reps, 0.99)).collect();
    Ok(FluidTailEstimate { level: x, horizon, per_state, horizon_bias: horizon_bias(model, x, horizon)? })
}

fn horizon_bias(model: &MapModel, x: f64, horizon: f64) -> Result<f64> {
    let dual = model.dual_model()?;
    let alpha = spectral::decay_rate(&dual)?;
    let mut best = 1.0f64;
    for k in 1..200 {
        let theta = alpha * k as f64 / 200.0;
        let p = spectral::perron(&dual, theta, None)?;
        let bound = p.h.max() / p.h.min() * (p.kappa * horizon - theta * x).exp();
        best = best.min(bound);
    }
    Ok(best)
}

/// Long-run fraction of time in each state along one path.
pub fn occupancy<R: Rng + ?Sized>(model: &MapModel, start: usize, rng: &mut R, horizon: f64) -> DVector<f64> {
    let sampler = Sampler::new(model);
    let mut occ = DVector::zeros(model.n());
    let (mut t, mut s) = (0.0, start);
    while t < horizon {
        let (hold, to, _) = sampler.step(s, rng);
        occ[s] += hold.min(horizon - t);
        t += hold;
        s = to;
    }
    occ / horizon
}
