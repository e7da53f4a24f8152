//! Adaptive Gauss–Kronrod (7/15) quadrature for scalar and matrix integrands.
//!
//! Used to cross-check the closed-form integrals of the kernel and ladder
//! modules; integrands with known kinks should be split with `breaks`.

use nalgebra::DMatrix;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &mut impl FnMut(f64) -> DMatrix<f64>, a: f64, b: f64) -> (DMatrix<f64>, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = &fc * WGK[7];
    let mut gauss = &fc * WG[3];
    for k in 0..7 {
        let dx = h * XGK[k];
        let s = f(c - dx) + f(c + dx);
        kron += &s * WGK[k];
        if k % 2 == 1 {
            gauss += &s * WG[k / 2];
        }
    }
    let err = (&kron - &gauss).amax() * h.abs();
    (kron * h, err)
}

/// `∫_a^b f` entrywise, splitting at `breaks` and bisecting until the
/// estimated absolute error is below `tol`.
pub fn integrate_matrix(
    mut f: impl FnMut(f64) -> DMatrix<f64>,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: f64,
) -> DMatrix<f64> {
    let mut pts: Vec<f64> = std::iter::once(a)
        .chain(breaks.iter().copied().filter(|&x| x > a && x < b))
        .chain(std::iter::once(b))
        .collect();
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.dedup();
    let mut stack: Vec<(f64, f64, DMatrix<f64>, f64)> = Vec::new();
    for w in pts.windows(2) {
        let (val, err) = gk15(&mut f, w[0], w[1]);
        stack.push((w[0], w[1], val, err));
    }
    let mut total: Option<DMatrix<f64>> = None;
    let mut iterations = 0;
    while let Some((lo, hi, val, err)) = stack.pop() {
        iterations += 1;
        // local tolerance proportional to the interval share
        let local = tol * (hi - lo) / (b - a);
        if err <= local.max(1e-15 * val.amax()) || hi - lo < 1e-12 * (b - a) || iterations > 200_000 {
            total = Some(match total {
                Some(t) => t + val,
                None => val,
            });
            continue;
        }
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        stack.push((lo, mid, v1, e1));
        stack.push((mid, hi, v2, e2));
    }
    total.expect("at least one panel")
}

pub fn integrate(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, breaks: &[f64], tol: f64) -> f64 {
    integrate_matrix(|x| DMatrix::from_element(1, 1, f(x)), a, b, breaks, tol)[(0, 0)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_and_exponential() {
        let v = integrate(|x| x.powi(5) - 2.0 * x, 0.0, 2.0, &[], 1e-13);
        assert!((v - (64.0 / 6.0 - 4.0)).abs() < 1e-12);
        let v = integrate(|x| (-3.0 * x).exp(), 0.0, 20.0, &[], 1e-13);
        assert!((v - (1.0 - (-60.0f64).exp()) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn kink_with_break() {
        let v = integrate(|x| (x - 0.3).abs(), 0.0, 1.0, &[0.3], 1e-13);
        assert!((v - (0.045 + 0.245)).abs() < 1e-14);
    }
}
