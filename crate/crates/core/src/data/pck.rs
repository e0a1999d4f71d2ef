use crate::bitcore::DenseTensor;
use crate::error::{Error, Result};

use super::synth::{bbox_diagonal, HeatmapGeometry};

/// Default PCK threshold as a fraction of the figure's bounding-box diagonal.
pub const PCK_THRESHOLD: f64 = 0.1;

/// Image-space location of each heatmap's maximum (first one on ties).
pub fn argmax_landmarks(heatmaps: &DenseTensor<f32>, geom: HeatmapGeometry) -> Result<Vec<Vec<(f64, f64)>>> {
    let (n, l, h, w) = heatmaps.dims4()?;
    let plane = h * w;
    Ok((0..n)
        .map(|i| {
            (0..l)
                .map(|k| {
                    let v = &heatmaps.data()[(i * l + k) * plane..][..plane];
                    let best = (0..plane).fold(0, |b, j| if v[j] > v[b] { j } else { b });
                    geom.to_image(((best % w) as f64, (best / w) as f64))
                })
                .collect()
        })
        .collect())
}

fn check_threshold(threshold_frac: f64) -> Result<()> {
    if !(threshold_frac > 0.0) {
        return Err(Error::invalid("PCK threshold must be positive"));
    }
    Ok(())
}

/// Percentage of predicted points within `threshold_frac` × bbox diagonal of
/// the ground truth.
pub fn pck_points(pred: &[Vec<(f64, f64)>], gt: &[Vec<(f64, f64)>], threshold_frac: f64) -> Result<f64> {
    check_threshold(threshold_frac)?;
    if pred.is_empty() || pred.len() != gt.len() {
        return Err(Error::invalid(format!("{} predictions for {} samples", pred.len(), gt.len())));
    }
    let (mut hits, mut total) = (0usize, 0usize);
    for (p, g) in pred.iter().zip(gt) {
        if p.len() != g.len() {
            return Err(Error::shape("landmark count mismatch"));
        }
        let thr = threshold_frac * bbox_diagonal(g);
        for (a, b) in p.iter().zip(g) {
            total += 1;
            if ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt() <= thr {
                hits += 1;
            }
        }
    }
    Ok(100.0 * hits as f64 / total as f64)
}

pub fn pck(pred_heatmaps: &DenseTensor<f32>, gt: &[Vec<(f64, f64)>], threshold_frac: f64, geom: HeatmapGeometry) -> Result<f64> {
    check_threshold(threshold_frac)?;
    if pred_heatmaps.is_empty() {
        return Err(Error::invalid("empty predictions"));
    }
    pck_points(&argmax_landmarks(pred_heatmaps, geom)?, gt, threshold_frac)
}

/// Expected PCK of a predictor whose argmax is uniform over heatmap cells.
pub fn random_pck_baseline(gt: &[Vec<(f64, f64)>], threshold_frac: f64, geom: HeatmapGeometry, h: usize, w: usize) -> Result<f64> {
    check_threshold(threshold_frac)?;
    let (mut acc, mut total) = (0.0, 0usize);
    for g in gt {
        let thr = threshold_frac * bbox_diagonal(g);
        for p in g {
            let inside = (0..h * w)
                .filter(|&c| {
                    let q = geom.to_image(((c % w) as f64, (c / w) as f64));
                    ((q.0 - p.0).powi(2) + (q.1 - p.1).powi(2)).sqrt() <= thr
                })
                .count();
            acc += inside as f64 / (h * w) as f64;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::invalid("no landmarks"));
    }
    Ok(100.0 * acc / total as f64)
}
