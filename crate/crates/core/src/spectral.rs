//! Perron root `κ(θ)` of `A(θ) = C + D̂(θ) + θΔ_v`, its eigenvectors and the
//! positive root `α` of `κ`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::MapModel;

const POWER_TOL: f64 = 1e-13;
const POWER_MAX: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// `(μ)⁻ k⁻ = 1`, then `μ h = 1`.
    KMinus,
    /// `μ e = 1`, then `μ h = 1`.
    Sum,
}

#[derive(Debug, Clone)]
pub struct SpectralPoint {
    pub theta: f64,
    pub kappa: f64,
    /// Left eigenvector, stored as a column.
    pub mu: DVector<f64>,
    pub h: DVector<f64>,
    pub normalization: Normalization,
}

impl SpectralPoint {
    /// `max(|μA - κμ|, |Ah - κh|)`.
    pub fn residual(&self, a: &DMatrix<f64>) -> f64 {
        let left = (a.transpose() * &self.mu - &self.mu * self.kappa).amax();
        let right = (a * &self.h - &self.h * self.kappa).amax();
        left.max(right)
    }
}

pub fn a_of_theta(model: &MapModel, theta: f64) -> Result<DMatrix<f64>> {
    model.a_of_theta(theta)
}

fn power_iteration(b: &DMatrix<f64>) -> DVector<f64> {
    let n = b.nrows();
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..POWER_MAX {
        let mut y = b * &x;
        let s = y.sum();
        y /= s;
        let diff = (&y - &x).amax();
        x = y;
        if diff < POWER_TOL {
            break;
        }
    }
    x
}

fn inverse_iteration(a: &DMatrix<f64>, sigma: f64, mut x: DVector<f64>) -> Option<DVector<f64>> {
    let n = a.nrows();
    let lu = (a - DMatrix::identity(n, n) * sigma).lu();
    for _ in 0..3 {
        let mut y = lu.solve(&x)?;
        let s = y.sum();
        if !s.is_finite() || s == 0.0 {
            return None;
        }
        y /= s;
        x = y;
    }
    Some(x)
}

/// Dominant eigenpair of an irreducible ML matrix with positive eigenvectors.
pub fn perron_of(a: &DMatrix<f64>) -> Result<(f64, DVector<f64>, DVector<f64>)> {
    let n = a.nrows();
    if n == 1 {
        return Ok((a[(0, 0)], DVector::from_element(1, 1.0), DVector::from_element(1, 1.0)));
    }
    let s = 1.0 + (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    let b = a + DMatrix::identity(n, n) * s;
    let h0 = power_iteration(&b);
    let mu0 = power_iteration(&b.transpose());
    let k0 = mu0.dot(&(a * &h0)) / mu0.dot(&h0);
    let sigma = k0 + 1e-10 * (1.0 + k0.abs());
    let fail = || Error::NoConvergence { what: "Perron eigenpair", iterations: POWER_MAX };
    let h = inverse_iteration(a, sigma, h0).ok_or_else(fail)?;
    let mu = inverse_iteration(&a.transpose(), sigma, mu0).ok_or_else(fail)?;
    if h.iter().chain(mu.iter()).any(|&x| !(x > 0.0)) {
        return Err(fail());
    }
    let kappa = mu.dot(&(a * &h)) / mu.dot(&h);
    Ok((kappa, mu, h))
}

/// Perron root and eigenvectors of `A(θ)`, normalized by `kminus` when given.
pub fn perron(model: &MapModel, theta: f64, kminus: Option<&DVector<f64>>) -> Result<SpectralPoint> {
    let a = model.a_of_theta(theta)?;
    let (kappa, mut mu, mut h) = perron_of(&a)?;
    let normalization = match kminus {
        Some(k) => {
            let minus = &model.partition().minus;
            let s: f64 = minus.iter().zip(k.iter()).map(|(&i, &kk)| mu[i] * kk).sum();
            mu /= s;
            Normalization::KMinus
        }
        None => {
            let s = mu.sum();
            mu /= s;
            Normalization::Sum
        }
    };
    h /= mu.dot(&h);
    Ok(SpectralPoint { theta, kappa, mu, h, normalization })
}

pub fn kappa(model: &MapModel, theta: f64) -> Result<f64> {
    Ok(perron_of(&model.a_of_theta(theta)?)?.0)
}

/// `κ'(θ) = μ (Δ_v + D̂'(θ)) h` for a point with `μ h = 1`.
pub fn kappa_prime(model: &MapModel, point: &SpectralPoint) -> Result<f64> {
    let mut m = model.d_hat_deriv(point.theta)?;
    for i in 0..model.n() {
        m[(i, i)] += model.v()[i];
    }
    Ok(point.mu.dot(&(m * &point.h)))
}

/// Unique `α > 0` with `κ(α) = 0`, by bisection on the convex `κ`.
pub fn decay_rate(model: &MapModel) -> Result<f64> {
    let drift = model.mean_drift()?;
    if drift >= 0.0 {
        return Err(Error::DriftNonNegative { drift });
    }
    let theta_max = model.theta_max();
    let mut lo = 1e-8;
    let mut hi;
    if theta_max.is_finite() {
        hi = theta_max * (1.0 - 1e-8);
        if kappa(model, hi)? <= 0.0 {
            return Err(Error::NoRoot { searched_to: hi });
        }
    } else {
        hi = 1.0;
        while kappa(model, hi)? <= 0.0 {
            lo = hi;
            hi *= 2.0;
            if hi > 1e6 {
                return Err(Error::NoRoot { searched_to: hi });
            }
        }
    }
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if kappa(model, mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
