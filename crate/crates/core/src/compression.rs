//! Samplet-compressed kernel blocks.
//!
//! A block `K^Σ = T_row K T_col^T` is computed by a single sweep over the row
//! cluster tree. Every row leaf evaluates the kernel against the (non-negligible
//! part of the) column point set and pushes the result through the column
//! two-scale transforms; every row node then applies its own local transform to
//! the stacked scaling rows of its children. Entries belonging to admissible
//! cluster pairs are discarded a priori, the rest are thresholded against `κ`.
//!
//! The transform is exact: the only approximation besides the cutoff and `κ`
//! is that kernel values below `tail_tol` times the peak (far beyond the
//! kernel's effective support) are treated as zero.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{vandermonde_dense, KernelSpec};
use crate::linalg::Matrix;
use crate::samplets::{BoundingBox, SampletBasis};
use crate::scalar::Scalar;

/// `dist(a, b) >= ρ max(diam a, diam b)` on bounding boxes. Touching or
/// overlapping boxes are never admissible.
pub fn admissible<T: Scalar>(a: &BoundingBox<T>, b: &BoundingBox<T>, rho: T) -> bool {
    let dist = a.distance(b);
    dist > T::zero() && dist >= rho * a.diam().max(b.diam())
}

/// Compression parameters of one block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompressionParams<T> {
    /// Admissibility parameter; `None` keeps every cluster pair.
    pub rho: Option<T>,
    /// Absolute threshold: entries with `|v| <= κ` are dropped.
    pub kappa: T,
    /// Kernel values below `tail_tol` times the peak are treated as zero;
    /// `None` evaluates the kernel everywhere.
    pub tail_tol: Option<T>,
}

impl<T: Scalar> CompressionParams<T> {
    pub const DEFAULT_TAIL_TOL: f64 = 1e-16;

    pub fn new(rho: T, kappa: T) -> Self {
        Self {
            rho: Some(rho),
            kappa,
            tail_tol: Some(T::of(Self::DEFAULT_TAIL_TOL)),
        }
    }

    /// No cutoff, no threshold, no tail pruning: `T K T^T` up to rounding.
    pub fn exact() -> Self {
        Self {
            rho: None,
            kappa: T::zero(),
            tail_tol: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if let Some(rho) = self.rho {
            if !(rho > T::zero()) {
                return Err(Error::InvalidInput(format!(
                    "rho must be positive, got {rho}"
                )));
            }
        }
        if !(self.kappa >= T::zero()) {
            return Err(Error::InvalidInput(format!(
                "kappa must be nonnegative, got {}",
                self.kappa
            )));
        }
        if let Some(t) = self.tail_tol {
            if !(t > T::zero() && t < T::one()) {
                return Err(Error::InvalidInput(format!(
                    "tail tolerance must lie in (0,1), got {t}"
                )));
            }
        }
        Ok(())
    }
}

/// Where a block came from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct BlockOrigin {
    pub row_level: usize,
    pub col_level: usize,
    pub kappa: f64,
    pub rho: Option<f64>,
    pub q: usize,
}

/// Sparse matrix in compressed-row storage with sorted, unique column indices.
#[derive(Clone, Debug)]
pub struct CompressedMatrix<T> {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
    pub origin: BlockOrigin,
}

impl<T: Scalar> CompressedMatrix<T> {
    /// Builds from coordinate triplets. Duplicates are rejected.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        mut entries: Vec<(usize, usize, T)>,
    ) -> Result<Self> {
        entries.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0; nrows + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        for (k, &(i, j, v)) in entries.iter().enumerate() {
            if i >= nrows || j >= ncols {
                return Err(Error::InvalidInput(format!(
                    "entry ({i},{j}) outside a {nrows}x{ncols} matrix"
                )));
            }
            if k > 0 && entries[k - 1].0 == i && entries[k - 1].1 == j {
                return Err(Error::InvalidInput(format!("duplicate entry ({i},{j})")));
            }
            row_ptr[i + 1] += 1;
            col_idx.push(j);
            values.push(v);
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
            origin: BlockOrigin::default(),
        })
    }

    /// Keeps the entries of a dense matrix with `|v| > kappa`.
    pub fn from_dense(m: &Matrix<T>, kappa: T) -> Self {
        let mut entries = Vec::new();
        for i in 0..m.rows() {
            for (j, &v) in m.row(i).iter().enumerate() {
                if v.abs() > kappa {
                    entries.push((i, j, v));
                }
            }
        }
        Self::from_triplets(m.rows(), m.cols(), entries).expect("dense entries are unique")
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `100 nnz / (nrows ncols)`.
    pub fn nnz_percent(&self) -> f64 {
        if self.nrows * self.ncols == 0 {
            return 0.0;
        }
        100.0 * self.nnz() as f64 / (self.nrows as f64 * self.ncols as f64)
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(T::zero(), |k| vals[k])
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.nrows.min(self.ncols))
            .map(|i| self.get(i, i))
            .collect()
    }

    /// `y = A x`, rows accumulated in fixed order.
    pub fn matvec(&self, x: &[T]) -> Result<Vec<T>> {
        let mut y = vec![T::zero(); self.nrows];
        self.matvec_into(x, &mut y)?;
        Ok(y)
    }

    pub fn matvec_into(&self, x: &[T], y: &mut [T]) -> Result<()> {
        if x.len() != self.ncols {
            return Err(Error::DimensionMismatch {
                expected: self.ncols,
                found: x.len(),
            });
        }
        if y.len() != self.nrows {
            return Err(Error::DimensionMismatch {
                expected: self.nrows,
                found: y.len(),
            });
        }
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols
                .iter()
                .zip(vals)
                .fold(T::zero(), |acc, (&j, &v)| acc + v * x[j]);
        }
        Ok(())
    }

    pub fn to_dense(&self) -> Matrix<T> {
        let mut m = Matrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }

    pub fn frobenius_norm(&self) -> T {
        crate::scalar::norm2(&self.values)
    }

    /// Pattern and values agree with the transpose up to `rel_tol` relative to
    /// the largest entry.
    pub fn is_symmetric(&self, rel_tol: T) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        let scale = self.values.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
        self.triplets().all(|(i, j, v)| {
            let (cols, vals) = self.row(j);
            match cols.binary_search(&i) {
                Ok(k) => (vals[k] - v).abs() <= rel_tol * scale,
                Err(_) => false,
            }
        })
    }

    /// Writes `row col value` lines sorted by row, then column.
    pub fn write_pattern(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for (i, j, v) in self.triplets() {
            writeln!(w, "{i} {j} {:.17e}", v.as_f64())?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Rows of a partially transformed block: for each active column node, the
/// columns of its global coordinates.
struct RowBlock<T> {
    /// Active column nodes, ascending.
    nodes: Vec<usize>,
    /// Column offset of each active node inside `data`.
    starts: Vec<usize>,
    data: Matrix<T>,
}

struct Sweep<'a, T> {
    spec: &'a KernelSpec<T>,
    rows: &'a SampletBasis<T>,
    cols: &'a SampletBasis<T>,
    params: CompressionParams<T>,
    cutoff: Option<T>,
    symmetric: bool,
    entries: Vec<(usize, usize, T)>,
}

impl<T: Scalar> Sweep<'_, T> {
    fn active(&self, row_box: &BoundingBox<T>, col_node: usize) -> bool {
        match self.cutoff {
            None => true,
            Some(r) => row_box.distance(&self.cols.tree().node(col_node).bbox) <= r,
        }
    }

    /// Post-order sweep over the column tree for the Diracs of one row leaf.
    /// Returns the scaling part of column node `b` and records its samplet part.
    fn column_sweep(
        &self,
        row_box: &BoundingBox<T>,
        row_coords: &[T],
        b: usize,
        out: &mut Vec<(usize, Matrix<T>)>,
    ) -> Option<Matrix<T>> {
        if !self.active(row_box, b) {
            return None;
        }
        let tree = self.cols.tree();
        let node = tree.node(b);
        let nr = row_coords.len() / tree.dim();
        let input = match node.children {
            None => {
                let mut data = vec![T::zero(); nr * node.len()];
                self.spec
                    .fill_block(row_coords, tree.node_coords(b), &mut data);
                Matrix::from_row_major(nr, node.len(), data)
            }
            Some([c1, c2]) => {
                let w1 = self.cols.transform(c1).n_scaling;
                let w2 = self.cols.transform(c2).n_scaling;
                let s1 = self.column_sweep(row_box, row_coords, c1, out);
                let s2 = self.column_sweep(row_box, row_coords, c2, out);
                if s1.is_none() && s2.is_none() {
                    // Parent is active but both children are not: contributions
                    // are below the tail tolerance.
                    return None;
                }
                let mut m = Matrix::zeros(nr, w1 + w2);
                for (part, off) in [(s1, 0), (s2, w1)] {
                    if let Some(p) = part {
                        for i in 0..nr {
                            m.row_mut(i)[off..off + p.cols()].copy_from_slice(p.row(i));
                        }
                    }
                }
                m
            }
        };
        let t = self.cols.transform(b);
        let full = input.matmul(&t.q);
        if b == 0 {
            out.push((0, full.clone()));
        } else if t.n_samplets > 0 {
            out.push((b, full.columns(t.n_scaling..t.input_dim())));
        }
        Some(full.columns(0..t.n_scaling))
    }

    fn leaf_block(&self, a: usize) -> RowBlock<T> {
        let tree = self.rows.tree();
        let node = tree.node(a);
        let coords = tree.node_coords(a);
        let mut parts = Vec::new();
        self.column_sweep(&node.bbox, coords, 0, &mut parts);
        parts.sort_unstable_by_key(|p| p.0);
        let nr = node.len();
        let mut nodes = Vec::with_capacity(parts.len());
        let mut starts = Vec::with_capacity(parts.len());
        let mut width = 0;
        for (b, m) in &parts {
            nodes.push(*b);
            starts.push(width);
            width += m.cols();
        }
        let mut data = Matrix::zeros(nr, width);
        for ((_, m), &s) in parts.iter().zip(&starts) {
            for i in 0..nr {
                data.row_mut(i)[s..s + m.cols()].copy_from_slice(m.row(i));
            }
        }
        RowBlock {
            nodes,
            starts,
            data,
        }
    }

    /// Stacks the scaling rows of two children over the union of their
    /// active column nodes.
    fn stack(&self, top: RowBlock<T>, bottom: RowBlock<T>) -> RowBlock<T> {
        let mut nodes: Vec<usize> = top.nodes.iter().chain(&bottom.nodes).copied().collect();
        nodes.sort_unstable();
        nodes.dedup();
        let mut starts = Vec::with_capacity(nodes.len());
        let mut width = 0;
        for &b in &nodes {
            starts.push(width);
            width += self.cols.node_coordinates(b).len();
        }
        let rows = top.data.rows() + bottom.data.rows();
        let mut data = Matrix::zeros(rows, width);
        let mut row0 = 0;
        for part in [&top, &bottom] {
            for (k, &b) in part.nodes.iter().enumerate() {
                let dst = starts[nodes.binary_search(&b).expect("node in union")];
                let len = self.cols.node_coordinates(b).len();
                let src = part.starts[k];
                for i in 0..part.data.rows() {
                    data.row_mut(row0 + i)[dst..dst + len]
                        .copy_from_slice(&part.data.row(i)[src..src + len]);
                }
            }
            row0 += part.data.rows();
        }
        RowBlock {
            nodes,
            starts,
            data,
        }
    }

    /// Transforms the rows of node `a`, emits its samplet rows and returns the
    /// scaling rows for the parent.
    fn row_sweep(&mut self, a: usize) -> RowBlock<T> {
        let node = self.rows.tree().node(a);
        let input = match node.children {
            None => self.leaf_block(a),
            Some([c1, c2]) => {
                let top = self.row_sweep(c1);
                let bottom = self.row_sweep(c2);
                self.stack(top, bottom)
            }
        };
        let t = self.rows.transform(a);
        let y = t.q.tr_matmul(&input.data);
        let first_emitted = if a == 0 { 0 } else { t.n_scaling };
        for r in first_emitted..t.input_dim() {
            let global_row = if r < t.n_scaling {
                r
            } else {
                t.offset + r - t.n_scaling
            };
            self.emit(a, global_row, y.row(r), &input);
        }
        let scaling = Matrix::from_fn(t.n_scaling, y.cols(), |i, j| y[(i, j)]);
        RowBlock {
            nodes: input.nodes,
            starts: input.starts,
            data: scaling,
        }
    }

    fn emit(&mut self, a: usize, global_row: usize, values: &[T], layout: &RowBlock<T>) {
        let row_box = &self.rows.tree().node(a).bbox;
        for (k, &b) in layout.nodes.iter().enumerate() {
            if let Some(rho) = self.params.rho {
                if admissible(row_box, &self.cols.tree().node(b).bbox, rho) {
                    continue;
                }
            }
            let coords = self.cols.node_coordinates(b);
            let src = &values[layout.starts[k]..layout.starts[k] + coords.len()];
            for (j, &v) in coords.zip(src) {
                if self.symmetric && j > global_row {
                    continue;
                }
                if v.abs() > self.params.kappa {
                    self.entries.push((global_row, j, v));
                }
            }
        }
    }
}

/// `K^Σ = T_row K T_col^T` restricted to non-admissible cluster pairs and
/// thresholded. When both bases are the same object the block is treated as a
/// diagonal block: only the lower triangle is computed and then mirrored, so
/// the result is exactly symmetric.
pub fn compress_block<T: Scalar>(
    spec: &KernelSpec<T>,
    basis_row: &SampletBasis<T>,
    basis_col: &SampletBasis<T>,
    params: CompressionParams<T>,
) -> Result<CompressedMatrix<T>> {
    params.validate()?;
    for b in [basis_row, basis_col] {
        if b.tree().dim() != spec.dim() {
            return Err(Error::DimensionMismatch {
                expected: spec.dim(),
                found: b.tree().dim(),
            });
        }
    }
    let symmetric = std::ptr::eq(basis_row, basis_col);
    let mut sweep = Sweep {
        spec,
        rows: basis_row,
        cols: basis_col,
        params,
        cutoff: params.tail_tol.map(|t| spec.tail_radius(t)),
        symmetric,
        entries: Vec::new(),
    };
    sweep.row_sweep(0);
    let mut entries = sweep.entries;
    if symmetric {
        let mirrored: Vec<_> = entries
            .iter()
            .filter(|&&(i, j, _)| i != j)
            .map(|&(i, j, v)| (j, i, v))
            .collect();
        entries.extend(mirrored);
    }
    let mut m = CompressedMatrix::from_triplets(basis_row.len(), basis_col.len(), entries)?;
    m.origin = BlockOrigin {
        row_level: 0,
        col_level: 0,
        kappa: params.kappa.as_f64(),
        rho: params.rho.map(|r| r.as_f64()),
        q: basis_row.degree(),
    };
    Ok(m)
}

/// Dense reference `T_row K T_col^T` built from the dense Vandermonde matrix.
/// Quadratic memory; meant for verification.
pub fn dense_samplet_block<T: Scalar>(
    spec: &KernelSpec<T>,
    basis_row: &SampletBasis<T>,
    basis_col: &SampletBasis<T>,
) -> Result<Matrix<T>> {
    let rows = crate::geometry::PointSet::new(spec.dim(), original_coords(basis_row))?;
    let cols = crate::geometry::PointSet::new(spec.dim(), original_coords(basis_col))?;
    let k = vandermonde_dense(spec, &rows, &cols)?;
    // T_row K, column by column
    let mut left = Matrix::zeros(k.rows(), k.cols());
    for j in 0..k.cols() {
        let col = basis_row.forward_transform(&k.column(j))?;
        for (i, v) in col.into_iter().enumerate() {
            left[(i, j)] = v;
        }
    }
    // (T_row K) T_col^T, row by row
    let mut out = Matrix::zeros(k.rows(), k.cols());
    for i in 0..k.rows() {
        let row = basis_col.forward_transform(left.row(i))?;
        out.row_mut(i).copy_from_slice(&row);
    }
    Ok(out)
}

fn original_coords<T: Scalar>(basis: &SampletBasis<T>) -> Vec<T> {
    let tree = basis.tree();
    let d = tree.dim();
    let mut out = vec![T::zero(); tree.len() * d];
    for (pos, &orig) in tree.order().iter().enumerate() {
        out[orig * d..(orig + 1) * d].copy_from_slice(tree.point(pos));
    }
    out
}

/// `‖reference − M‖_F / ‖reference‖_F`.
pub fn compression_error<T: Scalar>(reference: &Matrix<T>, m: &CompressedMatrix<T>) -> Result<T> {
    if reference.rows() != m.nrows() || reference.cols() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: reference.rows() * reference.cols(),
            found: m.nrows() * m.ncols(),
        });
    }
    let norm = reference.frobenius_norm();
    if norm == T::zero() {
        return Err(Error::ZeroReference);
    }
    let mut diff = reference.clone();
    for (i, j, v) in m.triplets() {
        diff[(i, j)] -= v;
    }
    Ok(diff.frobenius_norm() / norm)
}
