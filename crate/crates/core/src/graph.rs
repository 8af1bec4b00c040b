//! k-NN graphs with Gaussian edge weights, polynomial graph filters and the
//! point response intensity.
//!
//! Each point is linked to its `k` nearest neighbours. The per-point
//! threshold `tau_i` is the distance to the k-th neighbour, and edge weights
//! are `exp(-|x_i - x_j|^2 / sigma_i^2)` with `sigma_i^2 = tau_i^2 / 2`, so
//! every weight lies in `[exp(-2), 1]`. The graph is directed: `W_ij` uses
//! the threshold of the source point `i`.

use nalgebra::SVector;

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Vec3};
use crate::knn::KnnIndex;

pub const DEFAULT_K: usize = 10;

/// Directed weighted adjacency in compressed row form.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<f64>,
    degrees: Vec<f64>,
    tau: Vec<f64>,
    sigma_sq: Vec<f64>,
}

impl NeighborGraph {
    /// Graph from explicit weighted adjacency lists. Thresholds are set to
    /// the largest edge length of each row.
    pub fn from_edges(points: &[Vec3], rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        if rows.len() != points.len() {
            return Err(Error::invalid("one adjacency row per point is required"));
        }
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        offsets.push(0);
        let mut targets = Vec::new();
        let mut weights = Vec::new();
        let mut tau = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            let mut t: f64 = 0.0;
            for &(j, w) in row {
                if j >= points.len() || j == i {
                    return Err(Error::invalid(format!("bad edge {i} -> {j}")));
                }
                if !(w > 0.0 && w <= 1.0) {
                    return Err(Error::invalid(format!("edge weight {w} outside (0, 1]")));
                }
                t = t.max((points[i] - points[j]).norm());
                targets.push(j);
                weights.push(w);
            }
            tau.push(t);
            offsets.push(targets.len());
        }
        let degrees = (0..rows.len())
            .map(|i| weights[offsets[i]..offsets[i + 1]].iter().sum())
            .collect();
        let sigma_sq = tau.iter().map(|t| t * t / 2.0).collect();
        Ok(Self {
            offsets,
            targets,
            weights,
            degrees,
            tau,
            sigma_sq,
        })
    }

    pub fn len(&self) -> usize {
        self.degrees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degrees.is_empty()
    }

    /// Neighbour indices of point `i`, nearest first.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Edge weights of point `i`, aligned with [`Self::neighbors`].
    pub fn weights(&self, i: usize) -> &[f64] {
        &self.weights[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn edges(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.neighbors(i).iter().copied().zip(self.weights(i).iter().copied())
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn sigma_sq(&self) -> &[f64] {
        &self.sigma_sq
    }
}

/// Builds the k-NN graph of a cloud.
pub fn build_graph(cloud: &PointCloud, k: usize) -> Result<NeighborGraph> {
    build_graph_points(cloud.positions(), k)
}

pub fn build_graph_points(points: &[Vec3], k: usize) -> Result<NeighborGraph> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if points.len() < k + 1 {
        return Err(Error::invalid(format!(
            "graph with k = {k} needs at least {} points, got {}",
            k + 1,
            points.len()
        )));
    }
    let index = KnnIndex::new(points);
    let n = points.len();
    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    let mut targets = Vec::with_capacity(n * k);
    let mut weights = Vec::with_capacity(n * k);
    let mut degrees = Vec::with_capacity(n);
    let mut tau = Vec::with_capacity(n);
    let mut sigma_sq = Vec::with_capacity(n);
    let mut degenerate = Vec::new();

    for i in 0..n {
        let nn = index.neighbors_of(points, i, k);
        let tau_sq = nn.last().map_or(0.0, |&(_, d2)| d2);
        if tau_sq <= 0.0 {
            degenerate.push(i);
        }
        let s2 = tau_sq / 2.0;
        let mut deg = 0.0;
        for &(j, d2) in &nn {
            let w = if s2 > 0.0 { (-d2 / s2).exp() } else { 1.0 };
            targets.push(j);
            weights.push(w);
            deg += w;
        }
        offsets.push(targets.len());
        degrees.push(deg);
        tau.push(tau_sq.sqrt());
        sigma_sq.push(s2);
    }

    if !degenerate.is_empty() {
        return Err(Error::DegenerateNeighborhood {
            indices: degenerate,
            reason: format!("all {k} nearest neighbours coincide with the point"),
        });
    }
    Ok(NeighborGraph {
        offsets,
        targets,
        weights,
        degrees,
        tau,
        sigma_sq,
    })
}

/// Graph shift operator used by a filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shift {
    /// `D^-1 W`
    Transition,
    /// `D - W`
    Laplacian,
}

/// Polynomial graph filter `h(A) = sum_l h_l A^l`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphFilter {
    coefficients: Vec<f64>,
}

impl GraphFilter {
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::invalid("graph filter needs at least one coefficient"));
        }
        Ok(Self { coefficients })
    }

    /// High-pass `I - D^-1 W`.
    pub fn haar() -> Self {
        Self {
            coefficients: vec![1.0, -1.0],
        }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }
}

fn shift_once<const D: usize>(
    graph: &NeighborGraph,
    signal: &[SVector<f64, D>],
    shift: Shift,
) -> Vec<SVector<f64, D>> {
    (0..graph.len())
        .map(|i| {
            let acc: SVector<f64, D> = graph
                .edges(i)
                .fold(SVector::zeros(), |acc, (j, w)| acc + signal[j] * w);
            match shift {
                Shift::Transition => acc / graph.degrees[i],
                Shift::Laplacian => signal[i] * graph.degrees[i] - acc,
            }
        })
        .collect()
}

/// Applies `filter` to a per-point signal using sparse neighbour sums.
pub fn apply_filter<const D: usize>(
    filter: &GraphFilter,
    graph: &NeighborGraph,
    signal: &[SVector<f64, D>],
    shift: Shift,
) -> Result<Vec<SVector<f64, D>>> {
    if signal.len() != graph.len() {
        return Err(Error::invalid(format!(
            "signal has {} entries for a {}-node graph",
            signal.len(),
            graph.len()
        )));
    }
    if shift == Shift::Transition && filter.coefficients.len() > 1 {
        let isolated: Vec<usize> = (0..graph.len()).filter(|&i| graph.degrees[i] <= 0.0).collect();
        if !isolated.is_empty() {
            return Err(Error::DegenerateNeighborhood {
                indices: isolated,
                reason: "zero degree under the transition shift".into(),
            });
        }
    }
    let (h0, rest) = filter.coefficients.split_first().expect("non-empty filter");
    let mut out: Vec<SVector<f64, D>> = signal.iter().map(|s| s * *h0).collect();
    let mut power = signal.to_vec();
    for h in rest {
        power = shift_once(graph, &power, shift);
        for (o, p) in out.iter_mut().zip(&power) {
            *o += p * *h;
        }
    }
    Ok(out)
}

/// Squared norm of the Haar-filtered positions at every point.
pub fn response_intensity(cloud: &PointCloud, graph: &NeighborGraph) -> Result<Vec<f64>> {
    response_intensity_points(cloud.positions(), graph)
}

pub fn response_intensity_points(points: &[Vec3], graph: &NeighborGraph) -> Result<Vec<f64>> {
    let filtered = apply_filter(&GraphFilter::haar(), graph, points, Shift::Transition)?;
    Ok(filtered.iter().map(|v| v.norm_squared()).collect())
}
