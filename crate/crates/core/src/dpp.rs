//! Performance-conditioned DPP kernel and its log-determinant loss.
//!
//! The kernel for a generated batch couples an RBF similarity with
//! per-sample conditioning qualities: `L[i,j] = k(x_i, x_j) * (q_i q_j)^g`
//! plus a diagonal jitter. The loss `-log det(L) / n` rewards batches that
//! are simultaneously diverse (spread in design space) and well conditioned
//! (high quality). The log-determinant differentiates through its Cholesky
//! factorization with the inverse-matrix rule.

use std::cell::Cell;

use crate::error::Error;
use crate::linalg;
use crate::tensor::Tensor;

/// Quality floor applied before exponentiation; keeps the kernel diagonal
/// positive when a score reaches zero.
pub const QUALITY_FLOOR: f64 = 1e-6;

/// Default diagonal regularizer.
pub const DEFAULT_JITTER: f64 = 1e-6;

/// Maximum x10 jitter escalations before giving up on a factorization.
pub const MAX_ESCALATIONS: usize = 3;

/// Eigenvalue floor inside the diversity loss. Eigenvalues below it
/// contribute a constant (zero gradient), which bounds the repulsion
/// between near-duplicate samples at `1/floor` so the conditioning
/// gradient through the quality terms is never drowned out.
pub const EIGEN_FLOOR: f64 = 1e-4;

/// RBF similarity matrix `K[i,j] = exp(-|x_i - x_j|^2 / (2 bw^2))`,
/// differentiable with respect to the points.
pub fn rbf_kernel(points: &Tensor, bandwidth: f64) -> Tensor {
    assert!(points.rows() > 0, "rbf_kernel: empty batch");
    assert!(bandwidth > 0.0, "rbf_kernel: bandwidth {bandwidth} must be > 0");
    let n = points.rows();
    // |x_i - x_j|^2 = s_i + s_j - 2 <x_i, x_j>, all built from graph ops so
    // gradients flow back into the points.
    let sq = points.square().row_sums();
    let ones_row = Tensor::constant(1, n, vec![1.0; n]);
    let ones_col = Tensor::constant(n, 1, vec![1.0; n]);
    let si = sq.matmul(&ones_row);
    let sj = ones_col.matmul(&sq.transpose());
    let cross = points.matmul(&points.transpose()).scale(-2.0);
    let dist2 = si.add(&sj).add(&cross);
    dist2.scale(-0.5 / (bandwidth * bandwidth)).exp()
}

/// Positive semi-definite kernel for one generated batch.
#[derive(Debug)]
pub struct DppBatchKernel {
    /// `n x n` kernel including the diagonal jitter.
    pub matrix: Tensor,
    /// The unit-diagonal similarity factor `K`.
    pub similarity: Tensor,
    /// Quality column after flooring, before exponentiation.
    pub quality: Tensor,
    pub size: usize,
    pub quality_exponent: f64,
    pub bandwidth: f64,
    pub jitter: f64,
    /// Eigenvalue floor for the similarity part of [`pcd_loss`].
    pub eigen_floor: f64,
    /// Jitter escalations consumed by the most recent factorization.
    pub escalations: Cell<usize>,
}

/// Assemble the conditioned kernel from points and quality scores.
///
/// Qualities are floored at [`QUALITY_FLOOR`] before exponentiation and must
/// lie in [0, 1]; the flooring clamp keeps gradients finite at zero score.
pub fn build_kernel(
    points: &Tensor,
    quality: &Tensor,
    quality_exponent: f64,
    bandwidth: f64,
    jitter: f64,
) -> Result<DppBatchKernel, Error> {
    let n = points.rows();
    assert!(n > 0, "build_kernel: empty batch");
    assert_eq!(quality.rows(), n, "build_kernel: quality rows != batch rows");
    assert_eq!(quality.cols(), 1, "build_kernel: quality must be a column");
    {
        let q = quality.values();
        if let Some(bad) = q.iter().find(|v| !(**v >= 0.0 && **v <= 1.0 + 1e-12)) {
            return Err(Error::Contract(format!(
                "build_kernel: quality {bad} outside [0, 1]"
            )));
        }
    }
    let floored = quality.clamp(QUALITY_FLOOR, 1.0);
    let v = floored.powf_const(quality_exponent);
    let similarity = rbf_kernel(points, bandwidth);
    let quality_outer = v.matmul(&v.transpose());
    let mut diag = vec![0.0; n * n];
    for i in 0..n {
        diag[i * n + i] = jitter;
    }
    let matrix = similarity.mul(&quality_outer).add(&Tensor::constant(n, n, diag));
    Ok(DppBatchKernel {
        matrix,
        similarity,
        quality: floored,
        size: n,
        quality_exponent,
        bandwidth,
        jitter,
        eigen_floor: EIGEN_FLOOR,
        escalations: Cell::new(0),
    })
}

/// Differentiable `log det` of the kernel via Cholesky.
///
/// On factorization failure the diagonal jitter escalates x10 up to
/// [`MAX_ESCALATIONS`] times (recorded on the kernel); if the matrix is
/// still not positive definite a singular-kernel error is returned. The
/// backward rule is `d logdet / dL = L^-1`.
pub fn logdet_psd(kernel: &DppBatchKernel) -> Result<Tensor, Error> {
    let n = kernel.size;
    let base = if kernel.jitter > 0.0 { kernel.jitter } else { DEFAULT_JITTER };
    let values = kernel.matrix.to_values();
    let mut attempt = values.clone();
    for escalation in 0..=MAX_ESCALATIONS {
        if escalation > 0 {
            let extra = base * 10f64.powi(escalation as i32) - base * 10f64.powi(escalation as i32 - 1);
            for i in 0..n {
                attempt[i * n + i] += extra;
            }
        }
        if let Some(l) = linalg::cholesky_lower(&attempt, n) {
            kernel.escalations.set(escalation);
            let logdet = linalg::logdet_from_cholesky(&l, n);
            let inverse = linalg::spd_inverse_from_cholesky(&l, n);
            let out = Tensor::custom_op(
                1,
                1,
                vec![logdet],
                "logdet",
                &kernel.matrix,
                move |dc, dx| {
                    for (g, inv) in dx.iter_mut().zip(&inverse) {
                        *g += dc[0] * inv;
                    }
                },
            );
            return Ok(out);
        }
    }
    Err(Error::SingularKernel { attempts: MAX_ESCALATIONS })
}

/// Floored eigenvalue log-sum of a symmetric PSD tensor:
/// `sum_i ln(max(lambda_i, floor))`, with gradient
/// `sum_{lambda_k > floor} v_k v_k^T / lambda_k`.
///
/// Eigenvalues below the floor contribute a constant, which bounds the
/// repulsion between near-duplicate rows at `1/floor`.
fn floored_eigen_logdet(matrix: &Tensor, floor: f64) -> Result<Tensor, Error> {
    let n = matrix.rows();
    let (lambda, vectors) = linalg::sym_eigen(&matrix.to_values(), n);
    if lambda.iter().any(|l| !l.is_finite()) {
        return Err(Error::Numeric {
            op: "eigen_logdet",
            detail: "non-finite eigenvalue in the batch kernel".into(),
        });
    }
    let value = lambda.iter().map(|l| l.max(floor).ln()).sum::<f64>();
    Ok(Tensor::custom_op(
        1,
        1,
        vec![value],
        "eigen_logdet",
        matrix,
        move |dc, dx| {
            for (k, &l) in lambda.iter().enumerate() {
                if l <= floor {
                    continue;
                }
                let coeff = dc[0] / l;
                for i in 0..n {
                    let vi = vectors[i * n + k];
                    if vi == 0.0 {
                        continue;
                    }
                    let row = &mut dx[i * n..(i + 1) * n];
                    for (slot, vj) in row.iter_mut().zip(vectors.iter().skip(k).step_by(n)) {
                        *slot += coeff * vi * vj;
                    }
                }
            }
        },
    ))
}

/// Conditioned diversity loss `-log det(L)/n`, computed in the factored
/// form of the quality/diversity decomposition:
///
/// `log det(L) = 2 g * sum_i ln(q_i) + log det(K)`
///
/// with the similarity log-determinant taken as a floored eigenvalue sum
/// ([`EIGEN_FLOOR`]). The two sides are exactly equal for a well-conditioned
/// kernel (and zero jitter); the factored form keeps the conditioning
/// gradient `2 g / q_i` alive even when the similarity factor is nearly
/// singular, where the assembled kernel's jitter-dominated eigenvalues
/// would swallow it.
pub fn pcd_loss(kernel: &DppBatchKernel) -> Result<Tensor, Error> {
    let n = kernel.size;
    let quality_part = kernel.quality.ln().sum().scale(2.0 * kernel.quality_exponent);
    let similarity_part = floored_eigen_logdet(&kernel.similarity, kernel.eigen_floor)?;
    Ok(quality_part.add(&similarity_part).scale(-1.0 / n as f64))
}
