//! Voxel-grid downsampling with the grid corner at the bounding-box minimum.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Vec3};

/// Replaces the points of each occupied voxel of side `step` by their
/// centroid. Normals, if present, are averaged and renormalized; a voxel
/// whose normals cancel drops normals for the whole cloud. Output order
/// follows the first point seen in each voxel.
pub fn voxel_downsample(cloud: &PointCloud, step: f64) -> Result<PointCloud> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::invalid(format!("voxel step must be positive, got {step}")));
    }
    if cloud.is_empty() {
        return Err(Error::invalid("cannot downsample an empty cloud"));
    }
    let (min, _) = cloud.bounding_box();
    let mut slot: HashMap<[i64; 3], usize> = HashMap::new();
    let mut sums: Vec<(Vec3, Vec3, usize)> = Vec::new();
    let normals = cloud.normals();
    for (i, p) in cloud.positions().iter().enumerate() {
        let key = [0, 1, 2].map(|a| ((p[a] - min[a]) / step).floor() as i64);
        let idx = *slot.entry(key).or_insert_with(|| {
            sums.push((Vec3::zeros(), Vec3::zeros(), 0));
            sums.len() - 1
        });
        let s = &mut sums[idx];
        s.0 += p;
        if let Some(n) = normals {
            s.1 += n[i];
        }
        s.2 += 1;
    }
    let positions = sums.iter().map(|(p, _, c)| p / *c as f64).collect();
    let out = PointCloud::new(positions)?;
    if normals.is_none() {
        return Ok(out);
    }
    let averaged: Option<Vec<Vec3>> = sums
        .iter()
        .map(|(_, n, _)| {
            let norm = n.norm();
            (norm > 1e-12).then(|| n / norm)
        })
        .collect();
    match averaged {
        Some(n) => out.with_normals(n),
        None => Ok(out),
    }
}
