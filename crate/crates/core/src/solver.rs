//! Multiscale residual correction in samplet coordinates.
//!
//! Level `l` solves `K^Σ_{l,l} c^Σ_l = T_l f_l − Σ_{l'<l} K^Σ_{l,l'} c^Σ_{l'}`
//! with conjugate gradients, i.e. block forward substitution on the lower
//! block-triangular system. Coefficients are handed back in natural
//! coordinates, `c_l = T_l^T c^Σ_l`, so evaluating the interpolant
//! `s_L = Σ_l Σ_i c_{l,i} Φ_l(· − x_{l,i})` needs no samplet machinery.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::compression::{compress_block, CompressedMatrix, CompressionParams};
use crate::error::{Error, Result};
use crate::geometry::{Hierarchy, PointSet};
use crate::kernels::{vandermonde_dense, KernelFamily, KernelSpec};
use crate::linalg::{cholesky, cholesky_solve};
use crate::samplets::{default_leaf_capacity, ClusterTree, SampletBasis};
use crate::scalar::{dot, Scalar};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preconditioner {
    #[default]
    None,
    #[serde(rename = "diag")]
    Diagonal,
}

impl std::str::FromStr for Preconditioner {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "diag" | "diagonal" => Ok(Self::Diagonal),
            other => Err(Error::Config(format!(
                "unknown preconditioner '{other}'; expected none or diag"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveConfig {
    /// Relative residual target.
    pub cg_tol: f64,
    pub max_iters: usize,
    pub preconditioner: Preconditioner,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            cg_tol: 1e-6,
            max_iters: 10_000,
            preconditioner: Preconditioner::None,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cg_tol > 0.0 && self.cg_tol < 1.0) {
            return Err(Error::InvalidInput(format!(
                "cg_tol must lie in (0,1), got {}",
                self.cg_tol
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidInput("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct CgOutcome<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Conjugate gradients from a zero start.
///
/// Without preconditioning the iteration stops once `‖b − Ax‖₂ ≤ tol ‖b‖₂`.
/// With the diagonal preconditioner `D` the stopping rule uses the
/// `D^{-1}`-norm instead: `sqrt(rᵀD⁻¹r) ≤ tol · sqrt(bᵀD⁻¹b)`.
pub fn cg_solve<T: Scalar>(
    a: &CompressedMatrix<T>,
    b: &[T],
    cfg: &SolveConfig,
) -> Result<CgOutcome<T>> {
    if a.nrows() != a.ncols() {
        return Err(Error::InvalidInput(format!(
            "CG needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if b.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: b.len(),
        });
    }
    let inv_diag = match cfg.preconditioner {
        Preconditioner::None => None,
        Preconditioner::Diagonal => {
            let d = a.diagonal();
            if let Some((row, &value)) = d.iter().enumerate().find(|(_, &v)| !(v > T::zero())) {
                return Err(Error::BadDiagonal {
                    row,
                    value: value.as_f64(),
                });
            }
            Some(d.iter().map(|&v| T::one() / v).collect::<Vec<_>>())
        }
    };
    cg(
        |x, y| a.matvec_into(x, y).expect("shapes checked"),
        inv_diag.as_deref(),
        b,
        cfg,
    )
}

fn cg<T: Scalar>(
    mut apply: impl FnMut(&[T], &mut [T]),
    inv_diag: Option<&[T]>,
    b: &[T],
    cfg: &SolveConfig,
) -> Result<CgOutcome<T>> {
    cfg.validate()?;
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("right-hand side is not finite".into()));
    }
    let n = b.len();
    let precondition = |r: &[T], z: &mut [T]| match inv_diag {
        Some(d) => z
            .iter_mut()
            .zip(r)
            .zip(d)
            .for_each(|((z, &r), &d)| *z = r * d),
        None => z.copy_from_slice(r),
    };

    let mut x = vec![T::zero(); n];
    let mut r = b.to_vec();
    let mut z = vec![T::zero(); n];
    precondition(&r, &mut z);
    let mut rz = dot(&r, &z);
    let norm_b = rz.as_f64().sqrt();
    if norm_b == 0.0 {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut p = z.clone();
    let mut ap = vec![T::zero(); n];
    let mut best = (1.0, x.clone());
    for k in 1..=cfg.max_iters {
        apply(&p, &mut ap);
        let curvature = dot(&p, &ap);
        if !(curvature > T::zero()) {
            return Err(Error::NotPositiveDefinite {
                iteration: k,
                curvature: curvature.as_f64(),
            });
        }
        let alpha = rz / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        precondition(&r, &mut z);
        let rz_next = dot(&r, &z);
        let rel = rz_next.as_f64().max(0.0).sqrt() / norm_b;
        if rel <= cfg.cg_tol {
            return Ok(CgOutcome {
                x,
                iterations: k,
                relative_residual: rel,
            });
        }
        if rel < best.0 {
            best = (rel, x.clone());
        }
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NotConverged {
        iterations: cfg.max_iters,
        relative_residual: best.0,
        best_iterate: best.1.iter().map(|v| v.as_f64()).collect(),
    })
}

/// Parameters of the samplet discretization shared by all blocks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SystemParams<T> {
    /// Polynomial degree; samplets have `q + 1` vanishing moments.
    pub q: usize,
    pub compression: CompressionParams<T>,
    /// Cluster tree leaf size; `None` selects `max(m_q, 8)`.
    pub leaf_capacity: Option<usize>,
}

/// Wall-clock seconds per assembly phase.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct AssemblyTimings {
    pub basis: f64,
    pub assembly: f64,
}

/// Samplet bases and compressed blocks `K^Σ_{l,l'}`, `l' <= l`.
#[derive(Clone, Debug)]
pub struct MultiscaleSystem<T> {
    hierarchy: Hierarchy<T>,
    specs: Vec<KernelSpec<T>>,
    bases: Vec<SampletBasis<T>>,
    /// `blocks[l][l']` for `l' <= l` (zero-based).
    blocks: Vec<Vec<CompressedMatrix<T>>>,
    params: SystemParams<T>,
    pub timings: AssemblyTimings,
}

/// Per-level kernels `δ_l^{-d} Φ(·/δ_l)` with `δ_l` from the hierarchy.
pub fn level_kernels<T: Scalar>(
    hierarchy: &Hierarchy<T>,
    family: KernelFamily,
) -> Result<Vec<KernelSpec<T>>> {
    hierarchy
        .scales()
        .iter()
        .map(|&delta| KernelSpec::new(family, delta, hierarchy.dim()))
        .collect()
}

impl<T: Scalar> MultiscaleSystem<T> {
    pub fn assemble(
        hierarchy: Hierarchy<T>,
        family: KernelFamily,
        params: SystemParams<T>,
    ) -> Result<Self> {
        let specs = level_kernels(&hierarchy, family)?;
        Self::assemble_with_kernels(hierarchy, specs, params)
    }

    /// Row block `l` couples level-`l` sites with the kernel of column level
    /// `l'`, so every block of a column uses `specs[l']`.
    pub fn assemble_with_kernels(
        hierarchy: Hierarchy<T>,
        specs: Vec<KernelSpec<T>>,
        params: SystemParams<T>,
    ) -> Result<Self> {
        Self::assemble_observed(hierarchy, specs, params, |_, _, _| {})
    }

    /// Like [`assemble_with_kernels`](Self::assemble_with_kernels), calling
    /// `observe(l, l', block)` as each block is finished.
    pub fn assemble_observed(
        hierarchy: Hierarchy<T>,
        specs: Vec<KernelSpec<T>>,
        params: SystemParams<T>,
        mut observe: impl FnMut(usize, usize, &CompressedMatrix<T>),
    ) -> Result<Self> {
        if specs.len() != hierarchy.num_levels() {
            return Err(Error::DimensionMismatch {
                expected: hierarchy.num_levels(),
                found: specs.len(),
            });
        }
        let dim = hierarchy.dim();
        let leaf = params
            .leaf_capacity
            .unwrap_or_else(|| default_leaf_capacity(dim, params.q));
        if leaf == 0 {
            return Err(Error::InvalidInput("leaf capacity must be positive".into()));
        }
        let start = Instant::now();
        let bases: Vec<SampletBasis<T>> = hierarchy
            .levels()
            .iter()
            .map(|x| SampletBasis::build(ClusterTree::new(x, leaf), params.q))
            .collect();
        let basis_secs = start.elapsed().as_secs_f64();

        let start = Instant::now();
        let mut blocks = Vec::with_capacity(bases.len());
        for l in 0..bases.len() {
            let mut row = Vec::with_capacity(l + 1);
            for lp in 0..=l {
                let mut m = compress_block(&specs[lp], &bases[l], &bases[lp], params.compression)
                    .map_err(|e| e.at_level(l + 1))?;
                m.origin.row_level = l + 1;
                m.origin.col_level = lp + 1;
                observe(l + 1, lp + 1, &m);
                row.push(m);
            }
            blocks.push(row);
        }
        let assembly_secs = start.elapsed().as_secs_f64();
        Ok(Self {
            hierarchy,
            specs,
            bases,
            blocks,
            params,
            timings: AssemblyTimings {
                basis: basis_secs,
                assembly: assembly_secs,
            },
        })
    }

    pub fn hierarchy(&self) -> &Hierarchy<T> {
        &self.hierarchy
    }

    pub fn kernels(&self) -> &[KernelSpec<T>] {
        &self.specs
    }

    pub fn bases(&self) -> &[SampletBasis<T>] {
        &self.bases
    }

    pub fn params(&self) -> &SystemParams<T> {
        &self.params
    }

    pub fn num_levels(&self) -> usize {
        self.blocks.len()
    }

    /// Zero-based block `K^Σ_{l,l'}`; panics unless `l' <= l`.
    pub fn block(&self, l: usize, lp: usize) -> &CompressedMatrix<T> {
        &self.blocks[l][lp]
    }

    /// Stored entries over the whole block row `l` as a percentage of its
    /// dense size.
    pub fn row_nnz_percent(&self, l: usize) -> f64 {
        let nnz: usize = self.blocks[l].iter().map(|b| b.nnz()).sum();
        let cols: usize = self.blocks[l].iter().map(|b| b.ncols()).sum();
        100.0 * nnz as f64 / (self.blocks[l][0].nrows() as f64 * cols as f64)
    }

    pub fn interpolant(&self, coefficients: Vec<Vec<T>>) -> Result<Interpolant<T>> {
        Interpolant::new(
            self.specs.clone(),
            self.hierarchy.levels().to_vec(),
            coefficients,
        )
    }
}

/// Outcome of one level of the forward substitution.
#[derive(Clone, Debug)]
pub struct LevelSolve<T> {
    /// `c_l` in natural coordinates (original point order).
    pub coefficients: Vec<T>,
    /// Residual `f − s_{l−1}` at the level's sites, natural coordinates.
    pub residual: Vec<T>,
    pub iterations: usize,
    pub relative_residual: f64,
    pub diag_nnz_percent: f64,
    pub row_nnz_percent: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default)]
pub struct SolveReport<T> {
    pub levels: Vec<LevelSolve<T>>,
    pub seconds: f64,
}

impl<T: Scalar> SolveReport<T> {
    pub fn coefficients(&self) -> Vec<Vec<T>> {
        self.levels.iter().map(|l| l.coefficients.clone()).collect()
    }

    pub fn iterations(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.iterations).collect()
    }
}

/// Forward substitution over all levels; `values[l]` holds `f` at the sites
/// of level `l` in original order.
pub fn multiscale_solve<T: Scalar>(
    system: &MultiscaleSystem<T>,
    values: &[Vec<T>],
    cfg: &SolveConfig,
) -> Result<SolveReport<T>> {
    match multiscale_solve_partial(system, values, cfg) {
        (report, None) => Ok(report),
        (_, Some(e)) => Err(e),
    }
}

/// Like [`multiscale_solve`], but keeps the levels completed before a failure.
pub fn multiscale_solve_partial<T: Scalar>(
    system: &MultiscaleSystem<T>,
    values: &[Vec<T>],
    cfg: &SolveConfig,
) -> (SolveReport<T>, Option<Error>) {
    let mut report = SolveReport::default();
    let mut err = None;
    if let Err(e) = cfg.validate() {
        return (report, Some(e));
    }
    if values.len() != system.num_levels() {
        let e = Error::DimensionMismatch {
            expected: system.num_levels(),
            found: values.len(),
        };
        return (report, Some(e));
    }
    let start = Instant::now();
    let mut transformed: Vec<Vec<T>> = Vec::new();
    for l in 0..system.num_levels() {
        match solve_level(system, l, &values[l], &transformed, cfg) {
            Ok((level, c_sigma)) => {
                report.levels.push(level);
                transformed.push(c_sigma);
            }
            Err(e) => {
                err = Some(e.at_level(l + 1));
                break;
            }
        }
    }
    report.seconds = start.elapsed().as_secs_f64();
    (report, err)
}

fn solve_level<T: Scalar>(
    system: &MultiscaleSystem<T>,
    l: usize,
    f: &[T],
    previous: &[Vec<T>],
    cfg: &SolveConfig,
) -> Result<(LevelSolve<T>, Vec<T>)> {
    let start = Instant::now();
    let basis = &system.bases[l];
    let mut rhs = basis.forward_transform(f)?;
    let mut tmp = vec![T::zero(); rhs.len()];
    for (lp, c) in previous.iter().enumerate() {
        system.blocks[l][lp].matvec_into(c, &mut tmp)?;
        rhs.iter_mut().zip(&tmp).for_each(|(r, &t)| *r -= t);
    }
    let diag = &system.blocks[l][l];
    let out = cg_solve(diag, &rhs, cfg)?;
    let level = LevelSolve {
        coefficients: basis.inverse_transform(&out.x)?,
        residual: basis.inverse_transform(&rhs)?,
        iterations: out.iterations,
        relative_residual: out.relative_residual,
        diag_nnz_percent: diag.nnz_percent(),
        row_nnz_percent: system.row_nnz_percent(l),
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok((level, out.x))
}

/// Reference solution of the same telescoping scheme with dense natural-basis
/// matrices and Cholesky factorizations. Quadratic memory, cubic time.
pub fn dense_multiscale_solve<T: Scalar>(
    specs: &[KernelSpec<T>],
    sites: &[PointSet<T>],
    values: &[Vec<T>],
) -> Result<Vec<Vec<T>>> {
    if specs.len() != sites.len() || values.len() != sites.len() {
        return Err(Error::DimensionMismatch {
            expected: sites.len(),
            found: specs.len().min(values.len()),
        });
    }
    let mut coeffs: Vec<Vec<T>> = Vec::with_capacity(sites.len());
    for l in 0..sites.len() {
        if values[l].len() != sites[l].len() {
            return Err(Error::DimensionMismatch {
                expected: sites[l].len(),
                found: values[l].len(),
            });
        }
        let mut rhs = values[l].clone();
        for lp in 0..l {
            let k = vandermonde_dense(&specs[lp], &sites[l], &sites[lp])?;
            let y = k.matvec(&coeffs[lp]);
            rhs.iter_mut().zip(&y).for_each(|(r, &v)| *r -= v);
        }
        let k = vandermonde_dense(&specs[l], &sites[l], &sites[l])?;
        let chol = cholesky(&k)
            .ok_or(Error::NotPositiveDefinite {
                iteration: 0,
                curvature: f64::NAN,
            })
            .map_err(|e| e.at_level(l + 1))?;
        coeffs.push(cholesky_solve(&chol, &rhs));
    }
    Ok(coeffs)
}

/// `s_L(x) = Σ_l Σ_i c_{l,i} Φ_l(x − x_{l,i})`.
#[derive(Clone, Debug)]
pub struct Interpolant<T> {
    specs: Vec<KernelSpec<T>>,
    trees: Vec<ClusterTree<T>>,
    /// Coefficients per level in tree order.
    coefficients: Vec<Vec<T>>,
}

const EVAL_LEAF: usize = 32;

impl<T: Scalar> Interpolant<T> {
    pub fn new(
        specs: Vec<KernelSpec<T>>,
        sites: Vec<PointSet<T>>,
        coefficients: Vec<Vec<T>>,
    ) -> Result<Self> {
        if specs.len() != sites.len() || coefficients.len() != sites.len() {
            return Err(Error::DimensionMismatch {
                expected: sites.len(),
                found: coefficients.len(),
            });
        }
        let mut trees = Vec::with_capacity(sites.len());
        let mut local = Vec::with_capacity(sites.len());
        for ((x, c), spec) in sites.iter().zip(&coefficients).zip(&specs) {
            if c.len() != x.len() {
                return Err(Error::DimensionMismatch {
                    expected: x.len(),
                    found: c.len(),
                });
            }
            if x.dim() != spec.dim() {
                return Err(Error::DimensionMismatch {
                    expected: spec.dim(),
                    found: x.dim(),
                });
            }
            let tree = ClusterTree::new(x, EVAL_LEAF);
            local.push(tree.to_tree_order(c));
            trees.push(tree);
        }
        Ok(Self {
            specs,
            trees,
            coefficients: local,
        })
    }

    pub fn num_levels(&self) -> usize {
        self.specs.len()
    }

    /// Contribution `w_l` of one level (zero-based). With `tail_tol`, clusters
    /// farther than the kernel's tail radius are skipped.
    pub fn evaluate_level(
        &self,
        l: usize,
        points: &PointSet<T>,
        tail_tol: Option<T>,
    ) -> Result<Vec<T>> {
        let spec = &self.specs[l];
        if points.dim() != spec.dim() {
            return Err(Error::DimensionMismatch {
                expected: spec.dim(),
                found: points.dim(),
            });
        }
        let tree = &self.trees[l];
        let c = &self.coefficients[l];
        let cutoff = tail_tol.map(|t| spec.tail_radius(t));
        let d = spec.dim();
        let mut stack = Vec::new();
        Ok(points
            .iter()
            .map(|x| {
                let mut s = T::zero();
                stack.clear();
                stack.push(0usize);
                while let Some(i) = stack.pop() {
                    let node = tree.node(i);
                    if let Some(r) = cutoff {
                        if node.bbox.distance_to_point(x) > r {
                            continue;
                        }
                    }
                    match node.children {
                        Some([a, b]) => {
                            stack.push(b);
                            stack.push(a);
                        }
                        None => {
                            let coords = tree.node_coords(i);
                            for (k, y) in coords.chunks_exact(d).enumerate() {
                                s += c[node.begin + k] * spec.eval_unchecked(x, y);
                            }
                        }
                    }
                }
                s
            })
            .collect())
    }

    /// Cumulative interpolants `s_1, …, s_L` at the points.
    pub fn evaluate_cumulative(
        &self,
        points: &PointSet<T>,
        tail_tol: Option<T>,
    ) -> Result<Vec<Vec<T>>> {
        let mut acc = vec![T::zero(); points.len()];
        let mut out = Vec::with_capacity(self.num_levels());
        for l in 0..self.num_levels() {
            let w = self.evaluate_level(l, points, tail_tol)?;
            acc.iter_mut().zip(&w).for_each(|(a, &v)| *a += v);
            out.push(acc.clone());
        }
        Ok(out)
    }

    /// `s_L` by direct summation over all sites.
    pub fn evaluate(&self, points: &PointSet<T>) -> Result<Vec<T>> {
        Ok(self
            .evaluate_cumulative(points, None)?
            .pop()
            .unwrap_or_else(|| vec![T::zero(); points.len()]))
    }
}

/// `s_L` at `points` by direct summation.
pub fn evaluate_interpolant<T: Scalar>(
    specs: &[KernelSpec<T>],
    hierarchy: &Hierarchy<T>,
    coefficients: &[Vec<T>],
    points: &PointSet<T>,
) -> Result<Vec<T>> {
    Interpolant::new(
        specs.to_vec(),
        hierarchy.levels().to_vec(),
        coefficients.to_vec(),
    )?
    .evaluate(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::grid_points;
    use crate::linalg::Matrix;
    use crate::scalar::norm2;
    use rand::{Rng, SeedableRng};

    fn tight() -> SolveConfig {
        SolveConfig {
            cg_tol: 1e-12,
            ..SolveConfig::default()
        }
    }

    fn exact_params(q: usize) -> SystemParams<f64> {
        SystemParams {
            q,
            compression: CompressionParams::exact(),
            leaf_capacity: None,
        }
    }

    #[test]
    fn identity_in_one_step() {
        let a = CompressedMatrix::from_dense(&Matrix::<f64>::identity(5), 0.0);
        let b = vec![1.0, -2.0, 3.0, 0.5, 0.0];
        let out = cg_solve(&a, &b, &SolveConfig::default()).unwrap();
        assert_eq!(out.iterations, 1);
        assert_eq!(out.x, b);
    }

    #[test]
    fn diagonal_system() {
        let a = CompressedMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (1, 1, 4.0)]).unwrap();
        for pre in [Preconditioner::None, Preconditioner::Diagonal] {
            let cfg = SolveConfig {
                preconditioner: pre,
                ..tight()
            };
            let out: CgOutcome<f64> = cg_solve(&a, &[1.0, 4.0], &cfg).unwrap();
            assert!(out.iterations <= 2);
            assert!((out.x[0] - 1.0).abs() < 1e-12 && (out.x[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn random_spd_matches_direct_solve() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let b = Matrix::from_fn(50, 50, |_, _| rng.gen::<f64>() - 0.5);
        let mut a = b.tr_matmul(&b);
        for i in 0..50 {
            a[(i, i)] += 0.5;
        }
        let rhs: Vec<f64> = (0..50).map(|_| rng.gen::<f64>()).collect();
        let oracle = a
            .to_nalgebra()
            .cholesky()
            .unwrap()
            .solve(&nalgebra::DVector::from_vec(rhs.clone()));
        let sparse = CompressedMatrix::from_dense(&a, 0.0);
        for pre in [Preconditioner::None, Preconditioner::Diagonal] {
            let cfg = SolveConfig {
                cg_tol: 1e-10,
                preconditioner: pre,
                ..SolveConfig::default()
            };
            let x = cg_solve(&sparse, &rhs, &cfg).unwrap().x;
            let err: f64 = x
                .iter()
                .zip(oracle.iter())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(err <= 1e-5 * oracle.norm());
        }
    }

    #[test]
    fn solver_failures_are_reported() {
        let indefinite =
            CompressedMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (1, 1, -1.0)]).unwrap();
        assert!(matches!(
            cg_solve(&indefinite, &[0.0, 1.0], &SolveConfig::default()),
            Err(Error::NotPositiveDefinite { .. })
        ));
        let cfg = SolveConfig {
            preconditioner: Preconditioner::Diagonal,
            ..SolveConfig::default()
        };
        assert!(matches!(
            cg_solve(&indefinite, &[0.0, 1.0], &cfg),
            Err(Error::BadDiagonal { row: 1, .. })
        ));
        let a = CompressedMatrix::from_dense(
            &Matrix::from_fn(30, 30, |i, j| 1.0 / (1 + i + j) as f64),
            0.0,
        );
        let cfg = SolveConfig {
            cg_tol: 1e-14,
            max_iters: 3,
            ..SolveConfig::default()
        };
        match cg_solve(&a, &vec![1.0; 30], &cfg) {
            Err(Error::NotConverged {
                iterations,
                best_iterate,
                relative_residual,
            }) => {
                assert_eq!(iterations, 3);
                assert_eq!(best_iterate.len(), 30);
                assert!(relative_residual < 1.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_data_gives_zero_coefficients() {
        let h = Hierarchy::<f64>::grid(2, 3, 0.5).unwrap();
        let sys = MultiscaleSystem::assemble(
            h.clone(),
            KernelFamily::Matern32,
            SystemParams {
                q: 2,
                compression: CompressionParams::new(2.0, 1e-6),
                leaf_capacity: None,
            },
        )
        .unwrap();
        let zeros: Vec<Vec<f64>> = h.cardinalities().iter().map(|&n| vec![0.0; n]).collect();
        let report = multiscale_solve(&sys, &zeros, &SolveConfig::default()).unwrap();
        for level in &report.levels {
            assert!(level.iterations <= 1);
            assert!(level.coefficients.iter().all(|&c| c == 0.0));
        }
        let s = sys.interpolant(report.coefficients()).unwrap();
        assert!(s
            .evaluate(&grid_points(2, 4).unwrap())
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn single_level_matches_dense_solve() {
        let h = Hierarchy::new(vec![grid_points(2, 4).unwrap()], vec![1.0 / 16.0], 0.5).unwrap();
        let sys =
            MultiscaleSystem::assemble(h.clone(), KernelFamily::Matern32, exact_params(2)).unwrap();
        let f: Vec<f64> = h
            .level(0)
            .iter()
            .map(|p| (3.0 * p[0]).sin() + p[1] * p[1])
            .collect();
        let report = multiscale_solve(&sys, &[f.clone()], &tight()).unwrap();
        let dense = dense_multiscale_solve(sys.kernels(), h.levels(), &[f.clone()]).unwrap();
        let c = &report.levels[0].coefficients;
        let diff: f64 = c
            .iter()
            .zip(&dense[0])
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(diff <= 1e-8 * norm2(&dense[0]), "{diff}");
        let at_sites = sys
            .interpolant(report.coefficients())
            .unwrap()
            .evaluate(h.level(0))
            .unwrap();
        for (s, v) in at_sites.iter().zip(&f) {
            assert!((s - v).abs() < 1e-8);
        }
    }

    #[test]
    fn forward_substitution_solves_triangular_system() {
        let h = Hierarchy::<f64>::grid(2, 3, 0.7).unwrap();
        let sys =
            MultiscaleSystem::assemble(h.clone(), KernelFamily::Matern52, exact_params(1)).unwrap();
        let values: Vec<Vec<f64>> = h
            .levels()
            .iter()
            .map(|x| x.iter().map(|p| (p[0] - 0.3).exp() * p[1]).collect())
            .collect();
        let c = dense_multiscale_solve(sys.kernels(), h.levels(), &values).unwrap();
        // block row l of the natural-basis system: Σ_{l'<=l} K_{l,l'} c_{l'} = f_l
        for l in 0..3 {
            let mut lhs = vec![0.0; values[l].len()];
            for lp in 0..=l {
                let k = vandermonde_dense(&sys.kernels()[lp], h.level(l), h.level(lp)).unwrap();
                lhs.iter_mut()
                    .zip(k.matvec(&c[lp]))
                    .for_each(|(a, b)| *a += b);
            }
            let res: f64 = lhs
                .iter()
                .zip(&values[l])
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(res <= 1e-10 * norm2(&values[l]));
        }
        let report = multiscale_solve(&sys, &values, &tight()).unwrap();
        for (mine, oracle) in report.coefficients().iter().zip(&c) {
            let d: f64 = mine
                .iter()
                .zip(oracle)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(d <= 1e-6 * norm2(oracle));
        }
    }

    #[test]
    fn pruned_evaluation_matches_direct() {
        let h = Hierarchy::<f64>::grid(2, 3, 0.5).unwrap();
        let specs = level_kernels(&h, KernelFamily::Matern12).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let c: Vec<Vec<f64>> = h
            .cardinalities()
            .iter()
            .map(|&n| (0..n).map(|_| rng.gen()).collect())
            .collect();
        let s = Interpolant::new(specs.clone(), h.levels().to_vec(), c.clone()).unwrap();
        let pts = grid_points(2, 5).unwrap();
        let direct = s.evaluate(&pts).unwrap();
        let pruned = s
            .evaluate_cumulative(&pts, Some(1e-16))
            .unwrap()
            .pop()
            .unwrap();
        for (a, b) in direct.iter().zip(&pruned) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
        let via_fn = evaluate_interpolant(&specs, &h, &c, &pts).unwrap();
        assert_eq!(via_fn, direct);
    }

    #[test]
    fn unit_coefficient_reproduces_kernel() {
        let x = grid_points::<f64>(2, 2).unwrap();
        let spec = KernelSpec::new(KernelFamily::Matern32, 0.3, 2).unwrap();
        let mut c = vec![0.0; x.len()];
        c[4] = 1.0;
        let s = Interpolant::new(vec![spec], vec![x.clone()], vec![c]).unwrap();
        let pts = grid_points(2, 3).unwrap();
        for (v, p) in s.evaluate(&pts).unwrap().iter().zip(pts.iter()) {
            assert!((v - spec.eval(p, x.point(4)).unwrap()).abs() < 1e-15);
        }
        assert!(Interpolant::new(vec![spec], vec![x], vec![vec![0.0; 3]]).is_err());
    }

    #[test]
    fn scaling_the_kernel_leaves_the_interpolant_unchanged() {
        let h = Hierarchy::<f64>::grid(2, 3, 0.5).unwrap();
        let specs = level_kernels(&h, KernelFamily::Matern32).unwrap();
        let scaled: Vec<_> = specs.iter().map(|s| s.scaled_by(7.0)).collect();
        let values: Vec<Vec<f64>> = h
            .levels()
            .iter()
            .map(|x| x.iter().map(|p| p[0] * p[1] + 1.0).collect())
            .collect();
        let pts = grid_points(2, 5).unwrap();
        let a = evaluate_interpolant(
            &specs,
            &h,
            &dense_multiscale_solve(&specs, h.levels(), &values).unwrap(),
            &pts,
        )
        .unwrap();
        let b = evaluate_interpolant(
            &scaled,
            &h,
            &dense_multiscale_solve(&scaled, h.levels(), &values).unwrap(),
            &pts,
        )
        .unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() <= 1e-10 * u.abs().max(1e-300));
        }
    }
}
