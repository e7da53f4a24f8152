//! Dense matrix helpers: the matrix exponential and a few integrals of it.
//!
//! `expm` is scaling-and-squaring with diagonal Padé approximants of degree
//! 3, 5, 7, 9 or 13, chosen from the 1-norm (Higham 2005). The integrals
//! `∫ e^{sA} ds` and `∫ e^{A(t-s)} e^{θ s} ds` use Van Loan's block trick, so
//! they stay well defined when `A` is singular.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const THETA_3: f64 = 1.495585217958292e-2;
const THETA_5: f64 = 2.539398330063230e-1;
const THETA_7: f64 = 9.504178996162932e-1;
const THETA_9: f64 = 2.097847961257068;
const THETA_13: f64 = 5.371920351148152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

pub fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn sup_norm(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Matrix exponential `e^A`.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if n == 1 {
        return DMatrix::from_element(1, 1, a[(0, 0)].exp());
    }
    let nrm = norm1(a);
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    if nrm <= THETA_3 {
        return pade_low(a, &a2, &id, &B3);
    }
    if nrm <= THETA_5 {
        return pade_low(a, &a2, &id, &B5);
    }
    if nrm <= THETA_7 {
        return pade_low(a, &a2, &id, &B7);
    }
    if nrm <= THETA_9 {
        return pade_low(a, &a2, &id, &B9);
    }
    let s = if nrm > THETA_13 {
        (nrm / THETA_13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scale = 2f64.powi(-s);
    let a1 = a * scale;
    let a2 = &a1 * &a1;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &B13;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]) + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1];
    let u = &a1 * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]) + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];
    let mut r = pade_solve(&u, &v);
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

fn pade_low(a: &DMatrix<f64>, a2: &DMatrix<f64>, id: &DMatrix<f64>, b: &[f64]) -> DMatrix<f64> {
    // even powers feed V, odd powers (times A) feed U
    let m = b.len() - 1;
    let mut u_inner = id * b[1];
    let mut v = id * b[0];
    let mut p = id.clone();
    let mut k = 2;
    while k <= m {
        p = &p * a2;
        v += &p * b[k];
        if k + 1 <= m {
            u_inner += &p * b[k + 1];
        }
        k += 2;
    }
    let u = a * u_inner;
    pade_solve(&u, &v)
}

fn pade_solve(u: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let p = v + u;
    let q = v - u;
    q.lu().solve(&p).expect("Padé denominator is nonsingular for scaled arguments")
}

/// `∫_0^t e^{sA} ds`, valid for singular `A`.
pub fn expm_integral(a: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let mut big = DMatrix::<f64>::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(&(a * t));
    for i in 0..n {
        big[(i, n + i)] = t;
    }
    expm(&big).view((0, n), (n, n)).into_owned()
}

/// `∫_0^t e^{A(t-s)} e^{θ s} ds`.
pub fn expm_twisted_integral(a: &DMatrix<f64>, theta: f64, t: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let mut big = DMatrix::<f64>::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(&(a * t));
    for i in 0..n {
        big[(i, n + i)] = t;
        big[(n + i, n + i)] = theta * t;
    }
    expm(&big).view((0, n), (n, n)).into_owned()
}

pub fn inverse(a: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    if a.nrows() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let inv = a.clone().lu().try_inverse().ok_or(Error::SingularSolve(what))?;
    if inv.iter().any(|x| !x.is_finite()) || sup_norm(&inv) * sup_norm(a) > 1e14 {
        return Err(Error::SingularSolve(what));
    }
    Ok(inv)
}

pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>, what: &'static str) -> Result<DVector<f64>> {
    let x = a.clone().lu().solve(b).ok_or(Error::SingularSolve(what))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSolve(what));
    }
    Ok(x)
}

/// Largest real part over the eigenvalues of a square matrix.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn diag(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(v))
}

/// Submatrix with the given row and column index lists, in that order.
pub fn select(a: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| a[(rows[r], cols[c])])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn taylor_expm(a: &DMatrix<f64>) -> DMatrix<f64> {
        // scaling + long Taylor series; independent of the Padé path
        let n = a.nrows();
        let s = 8;
        let b = a / 2f64.powi(s);
        let mut term = DMatrix::<f64>::identity(n, n);
        let mut sum = term.clone();
        for k in 1..40 {
            term = &term * &b / k as f64;
            sum += &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn scalar_and_diagonal() {
        for x in [-30.0, -2.0, -1e-3, 0.0, 0.7, 3.5] {
            let e = expm(&DMatrix::from_element(1, 1, x));
            assert!((e[(0, 0)] - f64::exp(x)).abs() <= 1e-13 * f64::exp(x).max(1.0));
            let d = expm(&diag(&[x, 0.5 * x, -x]));
            assert!((d[(1, 1)] - (0.5 * x).exp()).abs() <= 1e-12 * (0.5 * x).exp().max(1.0));
            assert!(d[(0, 1)].abs() < 1e-14);
        }
    }

    #[test]
    fn generator_rows_sum_to_one() {
        let q = DMatrix::from_row_slice(3, 3, &[-3.0, 2.0, 1.0, 0.5, -1.0, 0.5, 4.0, 0.0, -4.0]);
        for t in [0.01, 0.3, 2.0, 25.0] {
            let p = expm(&(&q * t));
            for i in 0..3 {
                let s: f64 = p.row(i).iter().sum();
                assert!((s - 1.0).abs() < 1e-13, "t={t} row {i} sum {s}");
                assert!(p.row(i).iter().all(|&x| x >= -1e-15));
            }
        }
    }

    #[test]
    fn agrees_with_taylor_oracle() {
        let a = DMatrix::from_row_slice(3, 3, &[-1.2, 0.4, 0.3, 0.9, -2.5, 1.1, 0.0, 0.7, -0.4]);
        for t in [0.001, 0.1, 0.9, 2.0, 7.0] {
            let e = expm(&(&a * t));
            let o = taylor_expm(&(&a * t));
            assert!(sup_norm(&(e - o)) < 1e-13, "t={t}");
        }
    }

    #[test]
    fn integral_of_singular_generator() {
        // A = [[-1,1],[0,0]]: ∫_0^t e^{sA} ds has entries t - (1-e^{-t}) in (0,1) and t in (1,1)
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, 0.0]);
        let t = 1.7;
        let i = expm_integral(&a, t);
        assert!((i[(0, 0)] - (1.0 - (-t).exp())).abs() < 1e-13);
        assert!((i[(0, 1)] - (t - (1.0 - (-t).exp()))).abs() < 1e-13);
        assert!((i[(1, 1)] - t).abs() < 1e-13);
        assert!(i[(1, 0)].abs() < 1e-14);
    }

    #[test]
    fn twisted_integral_scalar() {
        // ∫_0^t e^{k(t-s)} e^{θ s} ds = (e^{θ t} - e^{k t})/(θ - k)
        let (k, th, t) = (-0.8, 0.3, 2.2);
        let r = expm_twisted_integral(&DMatrix::from_element(1, 1, k), th, t);
        let exact = ((th * t).exp() - (k * t).exp()) / (th - k);
        assert!((r[(0, 0)] - exact).abs() < 1e-13);
    }
}
