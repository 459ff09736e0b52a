use rand::{Rng, SeedableRng};
use serde::Serialize;

use crate::compression::{compress_block, CompressedMatrix, CompressionParams};
use crate::error::{Error, Result};
use crate::geometry::Hierarchy;
use crate::kernels::{vandermonde_dense, KernelFamily, KernelSpec};
use crate::linalg::Matrix;
use crate::samplets::SampletBasis;
use crate::scalar::Scalar;
use crate::solver::{cg_solve, level_kernels, Preconditioner, SolveConfig};

/// Largest block handed to the dense symmetric eigensolver.
pub const DENSE_EIGEN_LIMIT: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionRow {
    pub level: usize,
    pub n: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub cond: f64,
    /// `dense` or `lanczos`.
    pub method: &'static str,
}

/// Extremal eigenvalues of a symmetric matrix via a dense eigensolver.
pub fn dense_extremal_eigenvalues<T: Scalar>(m: &Matrix<T>) -> Result<(f64, f64)> {
    if m.rows() != m.cols() || m.rows() == 0 {
        return Err(Error::InvalidInput("need a nonempty square matrix".into()));
    }
    if m.rows() > DENSE_EIGEN_LIMIT {
        return Err(Error::EigenBudget {
            n: m.rows(),
            limit: DENSE_EIGEN_LIMIT,
        });
    }
    let eig = nalgebra::SymmetricEigen::new(m.to_nalgebra());
    let min = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let max = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((min, max))
}

/// Spectral condition numbers of the natural-basis diagonal blocks
/// `K_{l,l} = [Φ_l(x_i − x_j)]` for the requested (one-based) levels.
pub fn condition_report<T: Scalar>(
    hierarchy: &Hierarchy<T>,
    family: KernelFamily,
    levels: &[usize],
) -> Result<Vec<ConditionRow>> {
    let specs = level_kernels(hierarchy, family)?;
    levels
        .iter()
        .map(|&l| {
            if l == 0 || l > hierarchy.num_levels() {
                return Err(Error::InvalidInput(format!("no level {l}")));
            }
            let x = hierarchy.level(l - 1);
            if x.len() > DENSE_EIGEN_LIMIT {
                return Err(Error::EigenBudget {
                    n: x.len(),
                    limit: DENSE_EIGEN_LIMIT,
                }
                .at_level(l));
            }
            let k = vandermonde_dense(&specs[l - 1], x, x)?;
            let (lo, hi) = dense_extremal_eigenvalues(&k)?;
            Ok(row(l, x.len(), lo, hi, "dense"))
        })
        .collect()
}

fn row(level: usize, n: usize, lo: f64, hi: f64, method: &'static str) -> ConditionRow {
    ConditionRow {
        level,
        n,
        lambda_min: lo,
        lambda_max: hi,
        cond: hi / lo,
        method,
    }
}

/// Largest Ritz value of `steps` Lanczos iterations with full
/// reorthogonalization.
fn lanczos_max(
    n: usize,
    steps: usize,
    seed: u64,
    mut apply: impl FnMut(&[f64]) -> Result<Vec<f64>>,
) -> Result<f64> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
    let norm = crate::scalar::norm2(&v);
    v.iter_mut().for_each(|x| *x /= norm);
    let mut basis: Vec<Vec<f64>> = vec![v];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    for j in 0..steps.min(n) {
        let mut w = apply(&basis[j])?;
        let a = crate::scalar::dot(&w, &basis[j]);
        alpha.push(a);
        // full reorthogonalization, twice for stability
        for _ in 0..2 {
            for q in &basis {
                let c = crate::scalar::dot(&w, q);
                w.iter_mut().zip(q).for_each(|(x, &y)| *x -= c * y);
            }
        }
        let b = crate::scalar::norm2(&w);
        if b <= 1e-12 * a.abs().max(1e-300) || j + 1 == steps.min(n) {
            break;
        }
        beta.push(b);
        w.iter_mut().for_each(|x| *x /= b);
        basis.push(w);
    }
    let k = alpha.len();
    let t = nalgebra::DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    Ok(nalgebra::SymmetricEigen::new(t)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Extremal eigenvalue estimates of a sparse SPD matrix: Lanczos on `A` for
/// `λ_max` and on `A^{-1}` (applied by conjugate gradients) for `λ_min`.
pub fn lanczos_extremal_eigenvalues<T: Scalar>(
    a: &CompressedMatrix<T>,
    steps: usize,
) -> Result<(f64, f64)> {
    let n = a.nrows();
    let to_t = |v: &[f64]| v.iter().map(|&x| T::of(x)).collect::<Vec<T>>();
    let to_f = |v: Vec<T>| v.into_iter().map(|x| x.as_f64()).collect::<Vec<f64>>();
    let hi = lanczos_max(n, steps, 1, |v| Ok(to_f(a.matvec(&to_t(v))?)))?;
    let inner = SolveConfig {
        cg_tol: 1e-10,
        max_iters: 100 * n.max(10),
        preconditioner: Preconditioner::Diagonal,
    };
    let inv_hi = lanczos_max(n, steps, 2, |v| Ok(to_f(cg_solve(a, &to_t(v), &inner)?.x)))?;
    Ok((1.0 / inv_hi, hi))
}

/// Condition estimates for levels too large for the dense eigensolver, using
/// the samplet-compressed diagonal block.
pub fn condition_report_iterative<T: Scalar>(
    hierarchy: &Hierarchy<T>,
    family: KernelFamily,
    levels: &[usize],
    q: usize,
    compression: CompressionParams<T>,
    steps: usize,
) -> Result<Vec<ConditionRow>> {
    let specs: Vec<KernelSpec<T>> = level_kernels(hierarchy, family)?;
    levels
        .iter()
        .map(|&l| {
            if l == 0 || l > hierarchy.num_levels() {
                return Err(Error::InvalidInput(format!("no level {l}")));
            }
            let x = hierarchy.level(l - 1);
            let basis = SampletBasis::new(x, q);
            let m = compress_block(&specs[l - 1], &basis, &basis, compression)
                .map_err(|e| e.at_level(l))?;
            let (lo, hi) = lanczos_extremal_eigenvalues(&m, steps).map_err(|e| e.at_level(l))?;
            Ok(row(l, x.len(), lo, hi, "lanczos"))
        })
        .collect()
}
