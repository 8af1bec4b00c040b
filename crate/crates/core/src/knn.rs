//! Thin k-nearest-neighbour index over 3-D points.

use std::num::NonZeroUsize;

use kiddo::immutable::float::kdtree::ImmutableKdTree;
use kiddo::SquaredEuclidean;

use crate::geometry::Vec3;

pub struct KnnIndex {
    tree: ImmutableKdTree<f64, u64, 3, 32>,
    len: usize,
}

impl KnnIndex {
    pub fn new(points: &[Vec3]) -> Self {
        let raw: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        Self {
            tree: ImmutableKdTree::new_from_slice(&raw),
            len: points.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Up to `k` nearest points as `(index, squared distance)`, ordered by
    /// distance then index.
    pub fn nearest(&self, query: &Vec3, k: usize) -> Vec<(usize, f64)> {
        let Some(n) = NonZeroUsize::new(k.min(self.len)) else {
            return Vec::new();
        };
        let mut out: Vec<(usize, f64)> = self
            .tree
            .nearest_n::<SquaredEuclidean>(&[query.x, query.y, query.z], n)
            .into_iter()
            .map(|nn| (nn.item as usize, nn.distance))
            .collect();
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        out
    }

    /// The `k` nearest neighbours of indexed point `i`, itself excluded.
    pub fn neighbors_of(&self, points: &[Vec3], i: usize, k: usize) -> Vec<(usize, f64)> {
        let mut out = self.nearest(&points[i], k + 1);
        match out.iter().position(|&(j, _)| j == i) {
            Some(pos) => {
                out.remove(pos);
            }
            // Enough duplicates of point i to crowd it out of its own query.
            None => {
                out.truncate(k);
            }
        }
        out.truncate(k);
        out
    }

    /// Nearest point and its squared distance.
    pub fn nearest_one(&self, query: &Vec3) -> (usize, f64) {
        let nn = self
            .tree
            .nearest_one::<SquaredEuclidean>(&[query.x, query.y, query.z]);
        (nn.item as usize, nn.distance)
    }
}

/// Nearest-neighbour index over target points augmented with a scaled
/// scalar feature, i.e. the metric `|x - y|^2 + (lambda (u - v))^2`.
///
/// Once the scaled feature spread drops below `NEGLIGIBLE` of the point
/// extent it can no longer change a match, and a collapsed fourth axis
/// makes the tree slow, so the index falls back to positions alone.
pub enum JointIndex {
    Joint {
        tree: ImmutableKdTree<f64, u64, 4, 32>,
        scale: f64,
    },
    Spatial(KnnIndex),
}

const NEGLIGIBLE: f64 = 1e-9;

impl JointIndex {
    pub fn new(points: &[Vec3], features: &[f64], scale: f64) -> Self {
        let spread = |v: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
            (hi - lo).max(0.0)
        };
        let extent = spread(&mut points.iter().map(|p| p.x))
            .max(spread(&mut points.iter().map(|p| p.y)))
            .max(spread(&mut points.iter().map(|p| p.z)));
        let feature = scale * spread(&mut features.iter().copied());
        if feature <= NEGLIGIBLE * extent {
            return Self::Spatial(KnnIndex::new(points));
        }
        let raw: Vec<[f64; 4]> = points
            .iter()
            .zip(features)
            .map(|(p, v)| [p.x, p.y, p.z, scale * v])
            .collect();
        Self::Joint {
            tree: ImmutableKdTree::new_from_slice(&raw),
            scale,
        }
    }

    pub fn nearest_one(&self, query: &Vec3, feature: f64) -> usize {
        match self {
            Self::Joint { tree, scale } => {
                tree.nearest_one::<SquaredEuclidean>(&[query.x, query.y, query.z, scale * feature])
                    .item as usize
            }
            Self::Spatial(index) => index.nearest_one(query).0,
        }
    }
}
