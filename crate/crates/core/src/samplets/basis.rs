//! Orthonormal samplet basis with vanishing moments.
//!
//! Construction is bottom-up over the cluster tree. At a leaf, the moment
//! matrix of the local Dirac measures is factorized as `M^T = Q R`; the
//! first `min(n, m_q)` columns of `Q` span the moment range and become the
//! leaf's scaling distributions, the remaining columns are orthogonal to every
//! moment row and hence annihilate all polynomials of degree `<= q`. At an
//! internal node the children's scaling distributions take the role of the
//! Diracs: their moments are shifted to the parent's midpoint and factorized
//! again. The root's scaling distributions form the coarsest level.
//!
//! Global coordinates are ordered as: root scaling distributions, then the
//! samplets of each node in breadth-first node order.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::geometry::PointSet;
use crate::linalg::{householder_qr, Matrix};
use crate::scalar::Scalar;

use super::tree::ClusterTree;

/// Exponents of all monomials of total degree `<= q` in `dim` variables,
/// graded lexicographically (degree first, then descending in the first
/// variable).
pub fn monomial_exponents(dim: usize, q: usize) -> Vec<Vec<u32>> {
    fn with_degree(dim: usize, deg: u32) -> Vec<Vec<u32>> {
        if dim == 1 {
            return vec![vec![deg]];
        }
        let mut out = Vec::new();
        for first in (0..=deg).rev() {
            for mut rest in with_degree(dim - 1, deg - first) {
                rest.insert(0, first);
                out.push(rest);
            }
        }
        out
    }
    (0..=q as u32)
        .flat_map(|deg| with_degree(dim, deg))
        .collect()
}

/// `m_q = C(q + d, d)`.
pub fn moment_count(dim: usize, q: usize) -> usize {
    let mut c = 1usize;
    for i in 1..=dim {
        c = c * (q + i) / i;
    }
    c
}

/// `max(m_q, 8)`.
pub fn default_leaf_capacity(dim: usize, q: usize) -> usize {
    moment_count(dim, q).max(8)
}

#[inline]
fn monomial<T: Scalar>(alpha: &[u32], x: &[T], center: &[T]) -> T {
    alpha
        .iter()
        .zip(x.iter().zip(center))
        .fold(T::one(), |acc, (&a, (&xi, &ci))| {
            acc * (xi - ci).powi(a as i32)
        })
}

/// Moment matrix of a node (`m_q x n`): column `i` holds every monomial of
/// degree `<= q` evaluated at the node's `i`-th point, shifted to the node's
/// bounding-box midpoint.
pub fn cluster_moments<T: Scalar>(tree: &ClusterTree<T>, node: usize, q: usize) -> Matrix<T> {
    let exps = monomial_exponents(tree.dim(), q);
    let center = tree.node(node).bbox.midpoint();
    let coords = tree.node_coords(node);
    let n = tree.node(node).len();
    Matrix::from_fn(exps.len(), n, |a, i| {
        monomial(
            &exps[a],
            &coords[i * tree.dim()..(i + 1) * tree.dim()],
            &center,
        )
    })
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

/// Matrix re-expressing moments about `old` as moments about `new`:
/// `(x - new)^a = sum_{b <= a} C(a, b) (old - new)^(a - b) (x - old)^b`.
fn moment_shift<T: Scalar>(exps: &[Vec<u32>], old: &[T], new: &[T]) -> Matrix<T> {
    let t: Vec<T> = old.iter().zip(new).map(|(&o, &n)| o - n).collect();
    Matrix::from_fn(exps.len(), exps.len(), |a, b| {
        let (alpha, beta) = (&exps[a], &exps[b]);
        if alpha.iter().zip(beta).any(|(x, y)| y > x) {
            return T::zero();
        }
        alpha
            .iter()
            .zip(beta)
            .zip(&t)
            .fold(T::one(), |acc, ((&x, &y), &tk)| {
                acc * T::of(binomial(x, y)) * tk.powi((x - y) as i32)
            })
    })
}

/// Local two-scale transform of one cluster.
#[derive(Clone, Debug)]
pub struct NodeTransform<T> {
    /// Orthogonal `input x input` matrix; its columns are the node's scaling
    /// distributions followed by its samplets, written in the input basis
    /// (point Diracs at a leaf, children's scaling distributions otherwise).
    pub q: Matrix<T>,
    pub n_scaling: usize,
    pub n_samplets: usize,
    /// Global coordinate of the node's first samplet.
    pub offset: usize,
}

impl<T> NodeTransform<T> {
    pub fn input_dim(&self) -> usize {
        self.n_scaling + self.n_samplets
    }
}

#[derive(Clone, Debug)]
pub struct SampletBasis<T> {
    tree: ClusterTree<T>,
    q: usize,
    m_q: usize,
    nodes: Vec<NodeTransform<T>>,
}

impl<T: Scalar> SampletBasis<T> {
    /// Tree with the default leaf capacity, then the basis.
    pub fn new(points: &PointSet<T>, q: usize) -> Self {
        let tree = ClusterTree::new(points, default_leaf_capacity(points.dim(), q));
        Self::build(tree, q)
    }

    pub fn build(tree: ClusterTree<T>, q: usize) -> Self {
        let dim = tree.dim();
        let exps = monomial_exponents(dim, q);
        let m_q = exps.len();
        let count = tree.nodes().len();
        let mut moments: Vec<Option<Matrix<T>>> = vec![None; count];
        let mut transforms: Vec<Option<NodeTransform<T>>> = vec![None; count];

        for i in (0..count).rev() {
            let node = tree.node(i);
            let local_moments = match node.children {
                None => cluster_moments(&tree, i, q),
                Some(children) => {
                    let center = node.bbox.midpoint();
                    let blocks: Vec<Matrix<T>> = children
                        .iter()
                        .map(|&c| {
                            let shift = moment_shift(&exps, &tree.node(c).bbox.midpoint(), &center);
                            shift.matmul(moments[c].as_ref().expect("child processed first"))
                        })
                        .collect();
                    let width: usize = blocks.iter().map(|b| b.cols()).sum();
                    let mut m = Matrix::zeros(m_q, width);
                    let mut col = 0;
                    for b in &blocks {
                        for r in 0..m_q {
                            for j in 0..b.cols() {
                                m[(r, col + j)] = b[(r, j)];
                            }
                        }
                        col += b.cols();
                    }
                    for &c in &children {
                        moments[c] = None;
                    }
                    m
                }
            };
            let input = local_moments.cols();
            let (qmat, r) = householder_qr(&local_moments.transpose());
            let n_scaling = input.min(m_q);
            // moments of scaling distribution k are row k of R
            moments[i] = Some(Matrix::from_fn(m_q, n_scaling, |a, k| r[(k, a)]));
            transforms[i] = Some(NodeTransform {
                q: qmat,
                n_scaling,
                n_samplets: input - n_scaling,
                offset: 0,
            });
        }

        let mut nodes: Vec<NodeTransform<T>> = transforms
            .into_iter()
            .map(|t| t.expect("every node built"))
            .collect();
        let mut next = nodes[0].n_scaling;
        for t in nodes.iter_mut() {
            t.offset = next;
            next += t.n_samplets;
        }
        debug_assert_eq!(next, tree.len());
        Self {
            tree,
            q,
            m_q,
            nodes,
        }
    }

    pub fn tree(&self) -> &ClusterTree<T> {
        &self.tree
    }

    /// Polynomial degree `q`; samplets have `q + 1` vanishing moments.
    pub fn degree(&self) -> usize {
        self.q
    }

    pub fn moment_count(&self) -> usize {
        self.m_q
    }

    pub fn len(&self) -> usize {
        self.tree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.is_empty()
    }

    pub fn transforms(&self) -> &[NodeTransform<T>] {
        &self.nodes
    }

    pub fn transform(&self, node: usize) -> &NodeTransform<T> {
        &self.nodes[node]
    }

    pub fn root_scaling_count(&self) -> usize {
        self.nodes[0].n_scaling
    }

    /// Contiguous global coordinates owned by a node: its samplets, plus the
    /// coarsest scaling distributions for the root.
    pub fn node_coordinates(&self, node: usize) -> Range<usize> {
        let t = &self.nodes[node];
        if node == 0 {
            0..t.offset + t.n_samplets
        } else {
            t.offset..t.offset + t.n_samplets
        }
    }

    /// Samplet coordinates of a node (excluding root scaling distributions).
    pub fn samplet_coordinates(&self, node: usize) -> Range<usize> {
        let t = &self.nodes[node];
        t.offset..t.offset + t.n_samplets
    }

    /// Owning node of every global coordinate.
    pub fn coordinate_owners(&self) -> Vec<usize> {
        let mut owner = vec![0; self.len()];
        for i in 0..self.nodes.len() {
            for c in self.node_coordinates(i) {
                owner[c] = i;
            }
        }
        owner
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: n,
            });
        }
        Ok(())
    }

    /// `T v` for `v` given in original point order.
    pub fn forward_transform(&self, v: &[T]) -> Result<Vec<T>> {
        self.check_len(v.len())?;
        let local = self.tree.to_tree_order(v);
        let mut out = vec![T::zero(); v.len()];
        let mut scaling: Vec<Vec<T>> = vec![Vec::new(); self.nodes.len()];
        for i in (0..self.nodes.len()).rev() {
            let node = self.tree.node(i);
            let input: Vec<T> = match node.children {
                None => local[node.begin..node.end].to_vec(),
                Some([a, b]) => {
                    let mut x = std::mem::take(&mut scaling[a]);
                    x.extend(std::mem::take(&mut scaling[b]));
                    x
                }
            };
            let t = &self.nodes[i];
            let coeffs = t.q.tr_matvec(&input);
            out[t.offset..t.offset + t.n_samplets].copy_from_slice(&coeffs[t.n_scaling..]);
            scaling[i] = coeffs[..t.n_scaling].to_vec();
        }
        let root = &self.nodes[0];
        out[..root.n_scaling].copy_from_slice(&scaling[0]);
        Ok(out)
    }

    /// `T^T w`, returned in original point order.
    pub fn inverse_transform(&self, w: &[T]) -> Result<Vec<T>> {
        self.check_len(w.len())?;
        let mut local = vec![T::zero(); w.len()];
        let mut scaling: Vec<Vec<T>> = vec![Vec::new(); self.nodes.len()];
        scaling[0] = w[..self.nodes[0].n_scaling].to_vec();
        for i in 0..self.nodes.len() {
            let t = &self.nodes[i];
            let mut coeffs = std::mem::take(&mut scaling[i]);
            coeffs.extend_from_slice(&w[t.offset..t.offset + t.n_samplets]);
            let input = t.q.matvec(&coeffs);
            let node = self.tree.node(i);
            match node.children {
                None => local[node.begin..node.end].copy_from_slice(&input),
                Some([a, b]) => {
                    let split = self.nodes[a].n_scaling;
                    scaling[a] = input[..split].to_vec();
                    scaling[b] = input[split..].to_vec();
                }
            }
        }
        Ok(self.tree.to_original_order(&local))
    }

    /// Dense `T` (row `k` is basis element `k` in original point order).
    /// Intended for small bases and verification.
    pub fn dense_transform(&self) -> Matrix<T> {
        let n = self.len();
        let mut t = Matrix::zeros(n, n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e[j] = T::one();
            let col = self.forward_transform(&e).expect("length matches");
            for (i, &c) in col.iter().enumerate() {
                t[(i, j)] = c;
            }
            e[j] = T::zero();
        }
        t
    }
}
