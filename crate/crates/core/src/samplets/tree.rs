//! Balanced binary cluster tree over a point set.

use std::fmt::Write as _;

use crate::geometry::PointSet;
use crate::scalar::Scalar;

/// Axis-aligned box.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundingBox<T> {
    pub min: Vec<T>,
    pub max: Vec<T>,
}

impl<T: Scalar> BoundingBox<T> {
    pub fn new(min: Vec<T>, max: Vec<T>) -> Self {
        assert_eq!(min.len(), max.len());
        Self { min, max }
    }

    /// Tight box around the given points (flat coordinate buffer).
    fn around(dim: usize, coords: &[T]) -> Self {
        let mut min = coords[..dim].to_vec();
        let mut max = coords[..dim].to_vec();
        for p in coords.chunks_exact(dim).skip(1) {
            for k in 0..dim {
                min[k] = min[k].min(p[k]);
                max[k] = max[k].max(p[k]);
            }
        }
        Self { min, max }
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Length of the box diagonal.
    pub fn diam(&self) -> T {
        crate::scalar::distance(&self.min, &self.max)
    }

    pub fn midpoint(&self) -> Vec<T> {
        let half = T::of(0.5);
        self.min
            .iter()
            .zip(&self.max)
            .map(|(&a, &b)| half * (a + b))
            .collect()
    }

    /// Euclidean distance between two boxes (zero when they intersect).
    pub fn distance(&self, other: &BoundingBox<T>) -> T {
        let mut s = T::zero();
        for k in 0..self.dim() {
            let gap = (other.min[k] - self.max[k])
                .max(self.min[k] - other.max[k])
                .max(T::zero());
            s += gap * gap;
        }
        s.sqrt()
    }

    pub fn distance_to_point(&self, p: &[T]) -> T {
        let mut s = T::zero();
        for k in 0..self.dim() {
            let gap = (self.min[k] - p[k]).max(p[k] - self.max[k]).max(T::zero());
            s += gap * gap;
        }
        s.sqrt()
    }

    pub fn contains(&self, p: &[T]) -> bool {
        (0..self.dim()).all(|k| self.min[k] <= p[k] && p[k] <= self.max[k])
    }

    fn longest_axis(&self) -> usize {
        let mut best = 0;
        let mut len = self.max[0] - self.min[0];
        for k in 1..self.dim() {
            let l = self.max[k] - self.min[k];
            if l > len {
                best = k;
                len = l;
            }
        }
        best
    }
}

#[derive(Clone, Debug)]
pub struct ClusterNode<T> {
    /// Index range `[begin, end)` in tree order.
    pub begin: usize,
    pub end: usize,
    pub bbox: BoundingBox<T>,
    pub level: usize,
    pub parent: Option<usize>,
    pub children: Option<[usize; 2]>,
}

impl<T> ClusterNode<T> {
    pub fn len(&self) -> usize {
        self.end - self.begin
    }

    pub fn is_empty(&self) -> bool {
        self.begin == self.end
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

/// Binary tree from recursive median splits along the longest box edge.
///
/// Nodes are stored in breadth-first order, so a node's children always have
/// larger indices than the node itself and node 0 is the root.
#[derive(Clone, Debug)]
pub struct ClusterTree<T> {
    dim: usize,
    leaf_capacity: usize,
    nodes: Vec<ClusterNode<T>>,
    /// `order[p]` is the original index of the point at tree position `p`.
    order: Vec<usize>,
    /// `position[i]` is the tree position of original point `i`.
    position: Vec<usize>,
    /// Coordinates in tree order.
    coords: Vec<T>,
}

impl<T: Scalar> ClusterTree<T> {
    pub fn new(points: &PointSet<T>, leaf_capacity: usize) -> Self {
        assert!(leaf_capacity >= 1, "leaf capacity must be positive");
        assert!(!points.is_empty(), "cannot build a tree over no points");
        let dim = points.dim();
        let n = points.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut nodes = vec![ClusterNode {
            begin: 0,
            end: n,
            bbox: BoundingBox::around(dim, points.coords()),
            level: 0,
            parent: None,
            children: None,
        }];

        let mut i = 0;
        while i < nodes.len() {
            let (begin, end, level) = (nodes[i].begin, nodes[i].end, nodes[i].level);
            if end - begin > leaf_capacity {
                let axis = nodes[i].bbox.longest_axis();
                order[begin..end].sort_by(|&a, &b| {
                    points.point(a)[axis]
                        .partial_cmp(&points.point(b)[axis])
                        .expect("finite coordinates")
                        .then(a.cmp(&b))
                });
                let mid = begin + (end - begin) / 2;
                let first = nodes.len();
                for (b, e) in [(begin, mid), (mid, end)] {
                    let sub: Vec<T> = order[b..e]
                        .iter()
                        .flat_map(|&p| points.point(p).iter().copied())
                        .collect();
                    nodes.push(ClusterNode {
                        begin: b,
                        end: e,
                        bbox: BoundingBox::around(dim, &sub),
                        level: level + 1,
                        parent: Some(i),
                        children: None,
                    });
                }
                nodes[i].children = Some([first, first + 1]);
            }
            i += 1;
        }

        let mut position = vec![0; n];
        for (p, &orig) in order.iter().enumerate() {
            position[orig] = p;
        }
        let coords = order
            .iter()
            .flat_map(|&p| points.point(p).iter().copied())
            .collect();
        Self {
            dim,
            leaf_capacity,
            nodes,
            order,
            position,
            coords,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn leaf_capacity(&self) -> usize {
        self.leaf_capacity
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn nodes(&self) -> &[ClusterNode<T>] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &ClusterNode<T> {
        &self.nodes[i]
    }

    pub fn root(&self) -> &ClusterNode<T> {
        &self.nodes[0]
    }

    /// Tree position -> original index.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Original index -> tree position.
    pub fn position(&self) -> &[usize] {
        &self.position
    }

    /// Coordinates of the point at tree position `p`.
    #[inline]
    pub fn point(&self, p: usize) -> &[T] {
        &self.coords[p * self.dim..(p + 1) * self.dim]
    }

    /// Coordinates of all points of node `i`, in tree order.
    #[inline]
    pub fn node_coords(&self, i: usize) -> &[T] {
        let n = &self.nodes[i];
        &self.coords[n.begin * self.dim..n.end * self.dim]
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.level).max().unwrap_or(0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].is_leaf())
    }

    /// Reorders a vector given in original point order into tree order.
    pub fn to_tree_order<V: Copy>(&self, v: &[V]) -> Vec<V> {
        self.order.iter().map(|&i| v[i]).collect()
    }

    /// Inverse of [`Self::to_tree_order`].
    pub fn to_original_order<V: Copy + Default>(&self, v: &[V]) -> Vec<V> {
        let mut out = vec![V::default(); v.len()];
        for (p, &orig) in self.order.iter().enumerate() {
            out[orig] = v[p];
        }
        out
    }

    /// Nearest point to `p`, skipping original index `exclude`.
    /// Returns the original index and the distance.
    pub fn nearest(&self, p: &[T], exclude: Option<usize>) -> Option<(usize, T)> {
        let mut best: Option<(usize, T)> = None;
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            let node = &self.nodes[i];
            let lower = node.bbox.distance_to_point(p);
            if let Some((_, d)) = best {
                if lower >= d {
                    continue;
                }
            }
            match node.children {
                None => {
                    for pos in node.begin..node.end {
                        let orig = self.order[pos];
                        if Some(orig) == exclude {
                            continue;
                        }
                        let d = crate::scalar::distance(self.point(pos), p);
                        if best.map_or(true, |(_, bd)| d < bd) {
                            best = Some((orig, d));
                        }
                    }
                }
                Some([a, b]) => {
                    let da = self.nodes[a].bbox.distance_to_point(p);
                    let db = self.nodes[b].bbox.distance_to_point(p);
                    // visit the closer child first
                    if da <= db {
                        stack.push(b);
                        stack.push(a);
                    } else {
                        stack.push(a);
                        stack.push(b);
                    }
                }
            }
        }
        best
    }

    /// Indented text dump, one node per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            let n = &self.nodes[i];
            let _ = writeln!(
                out,
                "{:indent$}node {} level {} [{}, {}) diam {:e}",
                "",
                i,
                n.level,
                n.begin,
                n.end,
                n.bbox.diam(),
                indent = 2 * n.level
            );
            if let Some([a, b]) = n.children {
                stack.push(b);
                stack.push(a);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::grid_points;

    fn line(n: usize) -> PointSet<f64> {
        PointSet::new(1, (0..n).map(|i| i as f64).collect()).unwrap()
    }

    #[test]
    fn single_point_is_a_leaf() {
        let t = ClusterTree::new(&line(1), 4);
        assert_eq!(t.nodes().len(), 1);
        assert!(t.root().is_leaf());
        assert_eq!((t.root().begin, t.root().end), (0, 1));
    }

    #[test]
    fn collinear_points_split_evenly() {
        let t = ClusterTree::new(&line(16), 2);
        assert_eq!(t.depth(), 3);
        let leaves: Vec<_> = t.leaves().collect();
        assert_eq!(leaves.len(), 8);
        assert!(leaves.iter().all(|&l| t.node(l).len() == 2));
    }

    #[test]
    fn grid_root_box_is_unit_square() {
        let t = ClusterTree::new(&grid_points::<f64>(2, 3).unwrap(), 8);
        assert_eq!(t.root().bbox.min, vec![0.0, 0.0]);
        assert_eq!(t.root().bbox.max, vec![1.0, 1.0]);
    }

    #[test]
    fn structure_invariants() {
        let pts = grid_points::<f64>(2, 4).unwrap();
        let cap = 5;
        let t = ClusterTree::new(&pts, cap);
        let n = pts.len() as f64;
        let bound = (n / cap as f64).log2().ceil() as usize + 1;
        assert!(t.depth() <= bound);
        for (i, node) in t.nodes().iter().enumerate() {
            for p in node.begin..node.end {
                assert!(node.bbox.contains(t.point(p)));
            }
            match node.children {
                None => assert!(node.len() <= cap),
                Some([a, b]) => {
                    assert!(node.len() > cap);
                    assert!(a > i && b > i);
                    assert_eq!(t.node(a).begin, node.begin);
                    assert_eq!(t.node(a).end, t.node(b).begin);
                    assert_eq!(t.node(b).end, node.end);
                }
            }
        }
        let mut seen = t.order().to_vec();
        seen.sort_unstable();
        assert_eq!(seen, (0..pts.len()).collect::<Vec<_>>());
        for i in 0..pts.len() {
            assert_eq!(t.order()[t.position()[i]], i);
        }
    }

    #[test]
    fn nearest_matches_brute_force() {
        let pts = grid_points::<f64>(2, 3).unwrap();
        let t = ClusterTree::new(&pts, 4);
        for q in [[0.33, 0.71], [-1.0, 0.2], [0.5, 0.5]] {
            let (idx, d) = t.nearest(&q, None).unwrap();
            let brute = (0..pts.len())
                .map(|i| crate::scalar::distance(pts.point(i), &q))
                .fold(f64::INFINITY, f64::min);
            assert_eq!(d, brute);
            assert_eq!(crate::scalar::distance(pts.point(idx), &q), brute);
        }
        let (_, d) = t.nearest(pts.point(10), Some(10)).unwrap();
        assert!((d - 0.125).abs() < 1e-15);
    }

    #[test]
    fn box_distance() {
        let a = BoundingBox::new(vec![0.0, 0.0], vec![1.0, 1.0]);
        let b = BoundingBox::new(vec![4.0, 0.5], vec![5.0, 2.0]);
        assert_eq!(a.distance(&b), 3.0);
        assert_eq!(a.distance(&a), 0.0);
        assert!((a.diam() - 2f64.sqrt()).abs() < 1e-15);
    }
}
