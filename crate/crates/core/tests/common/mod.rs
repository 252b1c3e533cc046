//! Independent numeric oracles for the integration and acceptance suites.
//! Everything here is deliberately written without touching the library's
//! own linear algebra or special functions.

/// Determinant by recursive cofactor expansion along the first row.
pub fn det_cofactor(a: &[f64], n: usize) -> f64 {
    assert_eq!(a.len(), n * n);
    if n == 0 {
        return 1.0;
    }
    if n == 1 {
        return a[0];
    }
    if n == 2 {
        return a[0] * a[3] - a[1] * a[2];
    }
    let mut det = 0.0;
    let mut minor = vec![0.0; (n - 1) * (n - 1)];
    for col in 0..n {
        let mut m = 0;
        for i in 1..n {
            for j in 0..n {
                if j == col {
                    continue;
                }
                minor[m] = a[i * n + j];
                m += 1;
            }
        }
        let sign = if col % 2 == 0 { 1.0 } else { -1.0 };
        det += sign * a[col] * det_cofactor(&minor, n - 1);
    }
    det
}

/// Eigenvalues of a symmetric matrix via cyclic Jacobi rotations,
/// ascending.
pub fn jacobi_eigenvalues(a_in: &[f64], n: usize) -> Vec<f64> {
    assert_eq!(a_in.len(), n * n);
    let mut a = a_in.to_vec();
    for _sweep in 0..100 {
        let mut off: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[i * n + j] * a[i * n + j];
            }
        }
        if off.sqrt() < 1e-14 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eigs: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    eigs.sort_by(f64::total_cmp);
    eigs
}

/// Solve `w * exp(w) = x` on the principal branch by bisection.
pub fn lambert_bisect(x: f64) -> f64 {
    let (mut lo, mut hi) = (-1.0_f64, 20.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid * mid.exp() > x {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[allow(dead_code)]
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
