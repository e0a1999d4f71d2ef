use rand::Rng;

use crate::bitcore::DenseTensor;
use crate::data::{render_heatmaps, HeatmapGeometry, HeatmapSample, FLIP_PAIRS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentSpec {
    pub flip_prob: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    pub max_rotation_deg: f64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        AugmentSpec { flip_prob: 0.5, scale_min: 0.75, scale_max: 1.25, max_rotation_deg: 30.0 }
    }
}

/// One drawn transform: optional mirror, then scale and rotation about the
/// image center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineParams {
    pub flip: bool,
    pub scale: f64,
    pub rotation_deg: f64,
}

impl AugmentSpec {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> AffineParams {
        AffineParams {
            flip: rng.random_bool(self.flip_prob.clamp(0.0, 1.0)),
            scale: rng.random_range(self.scale_min..=self.scale_max),
            rotation_deg: rng.random_range(-self.max_rotation_deg..=self.max_rotation_deg),
        }
    }
}

impl AffineParams {
    /// Where a source point lands in the output image of side `size`.
    pub fn apply(&self, p: (f64, f64), size: usize) -> (f64, f64) {
        let c = (size as f64 - 1.0) / 2.0;
        let x = if self.flip { 2.0 * c - p.0 } else { p.0 };
        let (s, r) = (self.scale, self.rotation_deg.to_radians());
        let (dx, dy) = (x - c, p.1 - c);
        (c + s * (r.cos() * dx - r.sin() * dy), c + s * (r.sin() * dx + r.cos() * dy))
    }

    pub fn invert(&self, q: (f64, f64), size: usize) -> (f64, f64) {
        let c = (size as f64 - 1.0) / 2.0;
        let (s, r) = (self.scale, self.rotation_deg.to_radians());
        let (dx, dy) = ((q.0 - c) / s, (q.1 - c) / s);
        let x = c + r.cos() * dx + r.sin() * dy;
        let y = c - r.sin() * dx + r.cos() * dy;
        (if self.flip { 2.0 * c - x } else { x }, y)
    }
}

fn bilinear(plane: &[f32], size: usize, p: (f64, f64)) -> f32 {
    let max = (size - 1) as f64;
    let (x, y) = (p.0.clamp(0.0, max), p.1.clamp(0.0, max));
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(size - 1), (y0 + 1).min(size - 1));
    let (fx, fy) = ((x - x0 as f64) as f32, (y - y0 as f64) as f32);
    let at = |i: usize, j: usize| plane[i * size + j];
    let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
    let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Warps image and landmarks together and re-renders the heatmaps. A flip
/// also exchanges left/right landmark identities.
pub fn augment(sample: &HeatmapSample, params: &AffineParams, sigma: f64, geom: HeatmapGeometry) -> Result<HeatmapSample> {
    let (c, h, w) = match *sample.image.shape() {
        [c, h, w] if h == w => (c, h, w),
        ref s => return Err(Error::shape(format!("expected square [C, S, S] image, got {s:?}"))),
    };
    if !(params.scale > 0.0) {
        return Err(Error::invalid("scale must be positive"));
    }
    let mut image = DenseTensor::zeros(&[c, h, w]);
    for ch in 0..c {
        let src = &sample.image.data()[ch * h * w..][..h * w];
        let dst = &mut image.data_mut()[ch * h * w..][..h * w];
        for (i, v) in dst.iter_mut().enumerate() {
            *v = bilinear(src, h, params.invert(((i % w) as f64, (i / w) as f64), h));
        }
    }
    let mut landmarks: Vec<(f64, f64)> = sample.landmarks.iter().map(|&p| params.apply(p, h)).collect();
    if params.flip {
        for &(a, b) in &FLIP_PAIRS {
            if b < landmarks.len() {
                landmarks.swap(a, b);
            }
        }
    }
    let hm = sample.heatmaps.shape()[1];
    let heatmaps = render_heatmaps(&landmarks, hm, sigma, geom);
    Ok(HeatmapSample { image, landmarks, heatmaps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sampled_ranges() {
        let spec = AugmentSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..2000 {
            let p = spec.sample(&mut rng);
            assert!((-30.0..=30.0).contains(&p.rotation_deg));
            assert!((0.75..=1.25).contains(&p.scale));
        }
    }

    #[test]
    fn inverse_round_trips() {
        let p = AffineParams { flip: true, scale: 1.2, rotation_deg: -17.0 };
        let q = p.apply((10.0, 40.0), 64);
        let back = p.invert(q, 64);
        assert!((back.0 - 10.0).abs() < 1e-9 && (back.1 - 40.0).abs() < 1e-9);
    }

    #[test]
    fn bright_dot_follows_its_landmark() {
        let size = 64;
        let geom = HeatmapGeometry::new(size, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let src = (rng.random_range(20.0..44.0f64).round(), rng.random_range(20.0..44.0f64).round());
            let image = DenseTensor::from_fn(&[1, size, size], |i| {
                let d2 = ((i % size) as f64 - src.0).powi(2) + ((i / size) as f64 - src.1).powi(2);
                (-d2 / 8.0).exp() as f32
            });
            let sample = HeatmapSample {
                image,
                landmarks: vec![src],
                heatmaps: render_heatmaps(&[src], 16, 1.0, geom),
            };
            let params = AugmentSpec::default().sample(&mut rng);
            let out = augment(&sample, &params, 1.0, geom).unwrap();
            let data = out.image.data();
            let best = (0..data.len()).fold(0, |b, j| if data[j] > data[b] { j } else { b });
            let (bx, by) = ((best % size) as f64, (best / size) as f64);
            let expect = params.apply(src, size);
            assert!((bx - expect.0).abs() <= 1.0 && (by - expect.1).abs() <= 1.0, "{params:?}");
            assert_eq!(out.landmarks[0], expect);
        }
    }
}
