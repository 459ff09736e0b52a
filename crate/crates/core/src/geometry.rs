//! Data sites, multiscale hierarchies and the two geometric quantities the
//! method is parameterized by: fill distance and separation radius.

use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::samplets::ClusterTree;
use crate::scalar::Scalar;

/// Leaf size used for the nearest-neighbour trees behind the distance queries.
const SEARCH_LEAF: usize = 16;

/// Ordered set of pairwise distinct, finite points in `R^dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet<T> {
    dim: usize,
    coords: Vec<T>,
}

impl<T: Scalar> PointSet<T> {
    /// Builds a point set from a flat coordinate buffer (`dim` values per point).
    pub fn new(dim: usize, coords: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        if coords.len() % dim != 0 {
            return Err(Error::InvalidInput(format!(
                "{} coordinates do not split into points of dimension {dim}",
                coords.len()
            )));
        }
        if let Some(pos) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "point {} has a non-finite coordinate",
                pos / dim
            )));
        }
        let set = Self { dim, coords };
        if let Some((a, b)) = set.find_duplicate() {
            return Err(Error::InvalidInput(format!("points {a} and {b} coincide")));
        }
        Ok(set)
    }

    pub fn from_points(dim: usize, points: &[Vec<T>]) -> Result<Self> {
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.len(),
                });
            }
        }
        Self::new(dim, points.iter().flatten().copied().collect())
    }

    fn find_duplicate(&self) -> Option<(usize, usize)> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| {
            self.point(a)
                .partial_cmp(self.point(b))
                .expect("finite coordinates")
        });
        idx.windows(2)
            .find(|w| self.point(w[0]) == self.point(w[1]))
            .map(|w| (w[0].min(w[1]), w[0].max(w[1])))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[T] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    pub fn iter(&self) -> impl Iterator<Item = &[T]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    /// Points at the given indices, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let coords = indices
            .iter()
            .flat_map(|&i| self.point(i).iter().copied())
            .collect();
        Self::new(self.dim, coords)
    }

    /// Reads the plain-text cloud format: one point per line, fields separated
    /// by whitespace or commas, `#` starts a comment line.
    pub fn read_text(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let (dim, rows) = parse_rows(&text, path)?;
        Self::new(dim, rows.into_iter().flatten().map(T::of).collect())
    }

    pub fn write_text(&self, path: impl AsRef<Path>) -> Result<()> {
        use std::io::Write;
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        for p in self.iter() {
            let line: Vec<String> = p.iter().map(|c| format!("{}", c.as_f64())).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

/// Splits a text table into rows of equally many decimal fields.
pub(crate) fn parse_rows(text: &str, path: &Path) -> Result<(usize, Vec<Vec<f64>>)> {
    let mut dim = None;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields = trimmed
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>().map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    message: format!("bad number '{s}': {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        match dim {
            None => dim = Some(fields.len()),
            Some(d) if d != fields.len() => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    message: format!("expected {d} fields, found {}", fields.len()),
                })
            }
            _ => {}
        }
        rows.push(fields);
    }
    match dim {
        Some(d) if d > 0 => Ok((d, rows)),
        _ => Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "no data lines".into(),
        }),
    }
}

/// Tensor grid on `[lo, hi]^dim` with `n + 1` nodes per axis, lexicographic order
/// (first coordinate slowest).
fn tensor_grid<T: Scalar>(dim: usize, n: usize, lo: T, hi: T) -> Vec<T> {
    let per_axis = n + 1;
    let total = per_axis.pow(dim as u32);
    let axis: Vec<T> = (0..per_axis)
        .map(|i| lo + (hi - lo) * T::of_usize(i) / T::of_usize(n))
        .collect();
    let mut coords = Vec::with_capacity(total * dim);
    for flat in 0..total {
        let mut rem = flat;
        let mut p = vec![T::zero(); dim];
        for k in (0..dim).rev() {
            p[k] = axis[rem % per_axis];
            rem /= per_axis;
        }
        coords.extend(p);
    }
    coords
}

/// Regular grid on `[0,1]^dim` with spacing `2^-level`.
pub fn grid_points<T: Scalar>(dim: usize, level: u32) -> Result<PointSet<T>> {
    if !(1..=3).contains(&dim) {
        return Err(Error::InvalidInput(format!(
            "grid dimension {dim} not in 1..=3"
        )));
    }
    if level == 0 {
        return Err(Error::InvalidInput("grid level must be at least 1".into()));
    }
    let n = 1usize << level;
    PointSet::new(dim, tensor_grid(dim, n, T::zero(), T::one()))
}

/// Grid with spacing `2^-(level+1)` on `[-1/2,1/2]^2` without the open
/// quadrant where both coordinates are strictly positive.
pub fn lshape_points<T: Scalar>(level: u32) -> Result<PointSet<T>> {
    if level == 0 {
        return Err(Error::InvalidInput("grid level must be at least 1".into()));
    }
    let n = 1usize << (level + 1);
    let half = T::of(0.5);
    let coords: Vec<T> = tensor_grid(2, n, -half, half)
        .chunks_exact(2)
        .filter(|p| !(p[0] > T::zero() && p[1] > T::zero()))
        .flatten()
        .copied()
        .collect();
    PointSet::new(2, coords)
}

/// Half the minimum pairwise distance.
pub fn separation_radius<T: Scalar>(x: &PointSet<T>) -> Result<T> {
    if x.len() < 2 {
        return Err(Error::InvalidInput(
            "separation radius needs at least two points".into(),
        ));
    }
    let tree = ClusterTree::new(x, SEARCH_LEAF);
    let min = (0..x.len())
        .map(|i| {
            tree.nearest(x.point(i), Some(i))
                .expect("another point exists")
                .1
        })
        .fold(T::infinity(), T::min);
    Ok(T::of(0.5) * min)
}

/// Largest distance from a candidate point to its nearest site in `x`.
pub fn fill_distance<T: Scalar>(x: &PointSet<T>, candidates: &PointSet<T>) -> Result<T> {
    if x.is_empty() || candidates.is_empty() {
        return Err(Error::InvalidInput(
            "fill distance needs nonempty site and candidate sets".into(),
        ));
    }
    if x.dim() != candidates.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            found: candidates.dim(),
        });
    }
    let tree = ClusterTree::new(x, SEARCH_LEAF);
    Ok(candidates
        .iter()
        .map(|c| tree.nearest(c, None).expect("nonempty").1)
        .fold(T::zero(), T::max))
}

/// Largest nearest-neighbour distance within `x`; the mesh-size stand-in when
/// the candidate set holds no point outside `x`. A single point gets 1.
fn nearest_neighbour_spacing<T: Scalar>(x: &PointSet<T>) -> T {
    if x.len() < 2 {
        return T::one();
    }
    let tree = ClusterTree::new(x, SEARCH_LEAF);
    (0..x.len())
        .map(|i| {
            tree.nearest(x.point(i), Some(i))
                .expect("another point exists")
                .1
        })
        .fold(T::zero(), T::max)
}

/// Index sets of random subsamples with `N_l = base * factor^(l-1)`.
///
/// Randomness comes from ChaCha8 seeded with `seed`. In nested mode one
/// shuffle is drawn and level `l` keeps its first `N_l` indices; otherwise
/// every level is an independent draw without replacement. Indices are
/// returned in ascending order.
pub fn subsample_indices(
    cloud_len: usize,
    base: usize,
    factor: usize,
    num_levels: usize,
    nested: bool,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if base == 0 || factor == 0 || num_levels == 0 {
        return Err(Error::InvalidInput(
            "base, factor and level count must be positive".into(),
        ));
    }
    let mut sizes = Vec::with_capacity(num_levels);
    let mut n = base;
    for l in 1..=num_levels {
        if n > cloud_len {
            return Err(Error::InsufficientPoints {
                level: l,
                required: n,
                available: cloud_len,
            });
        }
        sizes.push(n);
        n = n.saturating_mul(factor);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let selections = if nested {
        let mut perm: Vec<usize> = (0..cloud_len).collect();
        perm.shuffle(&mut rng);
        sizes
            .iter()
            .map(|&n| {
                let mut s = perm[..n].to_vec();
                s.sort_unstable();
                s
            })
            .collect()
    } else {
        sizes
            .iter()
            .map(|&n| {
                let mut s = index::sample(&mut rng, cloud_len, n).into_vec();
                s.sort_unstable();
                s
            })
            .collect()
    };
    Ok(selections)
}

/// Nested or non-nested sequence of point sets with per-level mesh sizes and
/// kernel scales `delta_l = gamma * h_l`.
///
/// The `h_l` entering the scales is normally the mesh size itself; see
/// [`with_scale_meshes`](Self::with_scale_meshes) for decoupling the two.
#[derive(Clone, Debug)]
pub struct Hierarchy<T> {
    levels: Vec<PointSet<T>>,
    mesh_sizes: Vec<T>,
    scale_meshes: Vec<T>,
    coupling: T,
    scales: Vec<T>,
}

impl<T: Scalar> Hierarchy<T> {
    pub fn new(levels: Vec<PointSet<T>>, mesh_sizes: Vec<T>, coupling: T) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidInput(
                "hierarchy needs at least one level".into(),
            ));
        }
        if levels.len() != mesh_sizes.len() {
            return Err(Error::InvalidInput(format!(
                "{} levels but {} mesh sizes",
                levels.len(),
                mesh_sizes.len()
            )));
        }
        if !(coupling > T::zero() && coupling.is_finite()) {
            return Err(Error::InvalidInput("coupling must be positive".into()));
        }
        let dim = levels[0].dim();
        for (l, set) in levels.iter().enumerate() {
            if set.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: set.dim(),
                });
            }
            if !(mesh_sizes[l] > T::zero() && mesh_sizes[l].is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "mesh size of level {} must be positive",
                    l + 1
                )));
            }
            if l > 0 {
                if set.len() < levels[l - 1].len() {
                    return Err(Error::InvalidInput(format!(
                        "level {} has fewer points than level {l}",
                        l + 1
                    )));
                }
                if mesh_sizes[l] > mesh_sizes[l - 1] {
                    return Err(Error::InvalidInput(format!(
                        "mesh size increases from level {l} to level {}",
                        l + 1
                    )));
                }
            }
        }
        let scales = mesh_sizes.iter().map(|&h| coupling * h).collect();
        Ok(Self {
            levels,
            scale_meshes: mesh_sizes.clone(),
            mesh_sizes,
            coupling,
            scales,
        })
    }

    /// Replaces the `h_l` used for the kernel scales while keeping the
    /// reported mesh sizes, e.g. `2^-l` on L-shape grids whose spacing is
    /// `2^-(l+1)`.
    pub fn with_scale_meshes(mut self, meshes: Vec<T>) -> Result<Self> {
        if meshes.len() != self.levels.len() {
            return Err(Error::InvalidInput(format!(
                "{} levels but {} scale meshes",
                self.levels.len(),
                meshes.len()
            )));
        }
        if meshes.iter().any(|&h| !(h > T::zero() && h.is_finite())) {
            return Err(Error::InvalidInput("scale meshes must be positive".into()));
        }
        self.scales = meshes.iter().map(|&h| self.coupling * h).collect();
        self.scale_meshes = meshes;
        Ok(self)
    }

    /// Nested grids on the unit cube, levels `1..=num_levels`, `h_l = 2^-l`.
    pub fn grid(dim: usize, num_levels: usize, coupling: T) -> Result<Self> {
        let levels = (1..=num_levels as u32)
            .map(|l| grid_points(dim, l))
            .collect::<Result<Vec<_>>>()?;
        let h = (1..=num_levels as i32)
            .map(|l| T::of(2f64.powi(-l)))
            .collect();
        Self::new(levels, h, coupling)
    }

    /// Nested L-shape grids, `h_l = 2^-(l+1)` (the grid spacing).
    pub fn lshape(num_levels: usize, coupling: T) -> Result<Self> {
        let levels = (1..=num_levels as u32)
            .map(lshape_points)
            .collect::<Result<Vec<_>>>()?;
        let h = (1..=num_levels as i32)
            .map(|l| T::of(2f64.powi(-(l + 1))))
            .collect();
        Self::new(levels, h, coupling)
    }

    /// Random subsamples of a cloud with `N_l = base * factor^(l-1)`; see
    /// [`subsample_indices`] for the selection rule. Mesh sizes are fill
    /// distances with the whole cloud as candidate set.
    pub fn subsample(
        cloud: &PointSet<T>,
        base: usize,
        factor: usize,
        num_levels: usize,
        nested: bool,
        seed: u64,
        coupling: T,
    ) -> Result<Self> {
        let selections = subsample_indices(cloud.len(), base, factor, num_levels, nested, seed)?;
        Self::from_selections(cloud, &selections, coupling)
    }

    /// Levels given as index lists into `cloud`.
    pub fn from_selections(
        cloud: &PointSet<T>,
        selections: &[Vec<usize>],
        coupling: T,
    ) -> Result<Self> {
        let levels = selections
            .iter()
            .map(|s| cloud.subset(s))
            .collect::<Result<Vec<_>>>()?;
        let h = levels
            .iter()
            .map(|set| {
                let h = fill_distance(set, cloud)?;
                if h > T::zero() {
                    Ok(h)
                } else {
                    // the level is the whole cloud
                    Ok(nearest_neighbour_spacing(set))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(levels, h, coupling)
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn dim(&self) -> usize {
        self.levels[0].dim()
    }

    /// Zero-based access: `level(0)` is `X_1`.
    pub fn level(&self, l: usize) -> &PointSet<T> {
        &self.levels[l]
    }

    pub fn levels(&self) -> &[PointSet<T>] {
        &self.levels
    }

    pub fn mesh_sizes(&self) -> &[T] {
        &self.mesh_sizes
    }

    pub fn coupling(&self) -> T {
        self.coupling
    }

    pub fn scales(&self) -> &[T] {
        &self.scales
    }

    pub fn scale_meshes(&self) -> &[T] {
        &self.scale_meshes
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.len()).collect()
    }

    /// Keeps the first `num_levels` levels.
    pub fn truncated(&self, num_levels: usize) -> Result<Self> {
        let n = num_levels.min(self.num_levels());
        Self::new(
            self.levels[..n].to_vec(),
            self.mesh_sizes[..n].to_vec(),
            self.coupling,
        )?
        .with_scale_meshes(self.scale_meshes[..n].to_vec())
    }
}
