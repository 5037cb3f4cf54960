//! Cosine-geometry summaries of a set of document vectors.

use crate::embed::{cosine_distance_unchecked, DocVector};

use super::FeatureError;

pub const PERCENTILES: [u32; 5] = [5, 25, 50, 75, 95];

/// Radius of the Gonzalez center count.
pub const CENTER_RADIUS: f64 = 0.5;

/// Nearest-rank percentiles: the p-th percentile is the sorted value at
/// one-based rank `ceil(p/100 * n)`. Empty input gives zeros.
pub fn percentiles(values: &[f64], ps: &[u32; 5]) -> [f64; 5] {
    let mut out = [0.0; 5];
    if values.is_empty() {
        return out;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    for (slot, &p) in out.iter_mut().zip(ps) {
        let rank = (p as usize * n).div_ceil(100).max(1);
        *slot = sorted[rank.min(n) - 1];
    }
    out
}

/// Greedy farthest-point center count: start at index 0 and keep adding
/// the point farthest from the chosen centers (lowest index on ties)
/// while that distance exceeds `radius`.
pub fn gonzalez_center_count_by<F>(n: usize, radius: f64, dist: F) -> Result<usize, FeatureError>
where
    F: Fn(usize, usize) -> f64,
{
    if n == 0 {
        return Err(FeatureError::EmptyPointSet);
    }
    let mut nearest: Vec<f64> = (0..n).map(|i| dist(0, i)).collect();
    let mut centers = 1;
    loop {
        let (far, far_dist) = nearest
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &d)| if d > best.1 { (i, d) } else { best });
        if far_dist <= radius {
            return Ok(centers);
        }
        centers += 1;
        for (i, slot) in nearest.iter_mut().enumerate() {
            let d = dist(far, i);
            if d < *slot {
                *slot = d;
            }
        }
        nearest[far] = 0.0;
    }
}

pub fn gonzalez_center_count(vectors: &[Vec<f64>], radius: f64) -> Result<usize, FeatureError> {
    gonzalez_center_count_by(vectors.len(), radius, |i, j| {
        cosine_distance_unchecked(&vectors[i], &vectors[j])
    })
}

/// Twelve values: diameter, center count at radius 0.5, five pairwise
/// distance percentiles, five distance-to-centroid percentiles.
pub fn features_geom(vectors: &[DocVector]) -> Result<[f64; 12], FeatureError> {
    if vectors.is_empty() {
        return Err(FeatureError::EmptyPointSet);
    }
    let dim = vectors[0].vector.len();
    if let Some(bad) = vectors.iter().find(|v| v.vector.len() != dim) {
        return Err(FeatureError::DimensionMismatch(dim, bad.vector.len()));
    }
    let points: Vec<Vec<f64>> = vectors.iter().map(|v| v.vector.clone()).collect();
    let n = points.len();

    let mut pairwise = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            pairwise.push(cosine_distance_unchecked(&points[i], &points[j]));
        }
    }
    let diameter = pairwise.iter().copied().fold(0.0, f64::max);
    let dist = |i: usize, j: usize| {
        if i == j {
            0.0
        } else {
            let (a, b) = (i.min(j), i.max(j));
            // index of (a, b) in the row-major upper triangle
            pairwise[a * (2 * n - a - 1) / 2 + (b - a - 1)]
        }
    };
    let centers = gonzalez_center_count_by(n, CENTER_RADIUS, dist)?;

    let mut centroid = vec![0.0; dim];
    for p in &points {
        for (c, x) in centroid.iter_mut().zip(p) {
            *c += x;
        }
    }
    centroid.iter_mut().for_each(|c| *c /= n as f64);
    let to_centroid: Vec<f64> = points
        .iter()
        .map(|p| cosine_distance_unchecked(p, &centroid))
        .collect();

    let mut out = [0.0; 12];
    out[0] = diameter;
    out[1] = centers as f64;
    out[2..7].copy_from_slice(&percentiles(&pairwise, &PERCENTILES));
    out[7..12].copy_from_slice(&percentiles(&to_centroid, &PERCENTILES));
    Ok(out)
}
