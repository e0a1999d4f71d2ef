//! Synthetic stick-figure landmark data and a small glyph classification set.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::bitcore::serial::{read_dense, write_dense, ByteReader};
use crate::bitcore::DenseTensor;
use crate::error::{Error, Result};

use super::idx::LabelledImages;

pub const LANDMARK_NAMES: [&str; 5] = ["head", "left_hand", "right_hand", "left_foot", "right_foot"];

/// Landmark index pairs exchanged by a horizontal flip.
pub const FLIP_PAIRS: [(usize, usize); 2] = [(1, 2), (3, 4)];

/// Smallest landmark bounding-box diagonal, as a fraction of the image side.
pub const MIN_FIGURE_DIAG: f64 = 36.0 / 64.0;

/// Maps between image pixel coordinates and heatmap cell coordinates.
/// Pixel and cell centers sit at integer coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatmapGeometry {
    pub stride: f64,
    pub offset: f64,
}

impl HeatmapGeometry {
    pub fn new(image_size: usize, heatmap_size: usize) -> Self {
        let stride = image_size as f64 / heatmap_size as f64;
        HeatmapGeometry { stride, offset: (stride - 1.0) / 2.0 }
    }

    pub fn to_heatmap(&self, p: (f64, f64)) -> (f64, f64) {
        ((p.0 - self.offset) / self.stride, (p.1 - self.offset) / self.stride)
    }

    pub fn to_image(&self, h: (f64, f64)) -> (f64, f64) {
        (h.0 * self.stride + self.offset, h.1 * self.stride + self.offset)
    }
}

/// One rendered figure.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapSample {
    /// `[1, S, S]` in `[0, 1]`.
    pub image: DenseTensor<f32>,
    /// Image coordinates `(x, y)`.
    pub landmarks: Vec<(f64, f64)>,
    /// `[L, S/r, S/r]` Gaussian maps.
    pub heatmaps: DenseTensor<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseDataset {
    pub images: DenseTensor<f32>,
    pub heatmaps: DenseTensor<f32>,
    pub landmarks: Vec<Vec<(f64, f64)>>,
    pub sigma: f64,
    pub geometry: HeatmapGeometry,
}

impl PoseDataset {
    pub fn len(&self) -> usize {
        self.landmarks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.landmarks.is_empty()
    }

    pub fn num_landmarks(&self) -> usize {
        self.heatmaps.shape()[1]
    }

    pub fn image_size(&self) -> usize {
        self.images.shape()[2]
    }

    pub fn heatmap_size(&self) -> usize {
        self.heatmaps.shape()[2]
    }

    pub fn sample(&self, i: usize) -> Result<HeatmapSample> {
        let image = self.images.batch_slice(i, i + 1)?;
        let heatmaps = self.heatmaps.batch_slice(i, i + 1)?;
        Ok(HeatmapSample {
            image: image.clone().reshape(&image.shape()[1..])?,
            landmarks: self.landmarks[i].clone(),
            heatmaps: heatmaps.clone().reshape(&heatmaps.shape()[1..])?,
        })
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Ok(PoseDataset {
            images: self.images.gather(indices)?,
            heatmaps: self.heatmaps.gather(indices)?,
            landmarks: indices.iter().map(|&i| self.landmarks[i].clone()).collect(),
            sigma: self.sigma,
            geometry: self.geometry,
        })
    }

    /// Writes images, heatmaps, landmarks and metadata as four BNT1 tensors.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        write_dense(&mut out, &self.images)?;
        write_dense(&mut out, &self.heatmaps)?;
        let l = self.num_landmarks();
        let flat = self.landmarks.iter().flatten().flat_map(|&(x, y)| [x as f32, y as f32]).collect();
        write_dense(&mut out, &DenseTensor::new(vec![self.len(), l, 2], flat)?)?;
        let meta = vec![self.sigma as f32, self.geometry.stride as f32, self.geometry.offset as f32];
        write_dense(&mut out, &DenseTensor::new(vec![3], meta)?)?;
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let mut r = ByteReader::new(&bytes);
        let images = read_dense(&mut r)?;
        let heatmaps = read_dense(&mut r)?;
        let lm = read_dense(&mut r)?;
        let meta = read_dense(&mut r)?;
        if r.remaining() != 0 {
            return Err(Error::format(r.position(), "trailing bytes after dataset"));
        }
        let (n, l) = match (lm.shape(), heatmaps.shape()) {
            ([n, l, 2], [hn, hl, _, _]) if n == hn && l == hl && images.shape().first() == Some(n) => (*n, *l),
            _ => return Err(Error::format(0, "inconsistent dataset tensors")),
        };
        if meta.len() != 3 {
            return Err(Error::format(0, "bad dataset metadata"));
        }
        let d = lm.data();
        let landmarks = (0..n)
            .map(|i| (0..l).map(|j| (f64::from(d[(i * l + j) * 2]), f64::from(d[(i * l + j) * 2 + 1]))).collect())
            .collect();
        let m = meta.data();
        Ok(PoseDataset {
            images,
            heatmaps,
            landmarks,
            sigma: f64::from(m[0]),
            geometry: HeatmapGeometry { stride: f64::from(m[1]), offset: f64::from(m[2]) },
        })
    }
}

/// Gaussian maps with peak 1 centered on each landmark.
pub fn render_heatmaps(landmarks: &[(f64, f64)], size: usize, sigma: f64, geom: HeatmapGeometry) -> DenseTensor<f32> {
    let mut out = DenseTensor::zeros(&[landmarks.len(), size, size]);
    let denom = 2.0 * sigma * sigma;
    for (k, &p) in landmarks.iter().enumerate() {
        let (hx, hy) = geom.to_heatmap(p);
        let plane = &mut out.data_mut()[k * size * size..][..size * size];
        for i in 0..size {
            for j in 0..size {
                let d2 = (j as f64 - hx).powi(2) + (i as f64 - hy).powi(2);
                plane[i * size + j] = (-d2 / denom).exp() as f32;
            }
        }
    }
    out
}

fn dist_to_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 == 0.0 { 0.0 } else { (((p.0 - a.0) * vx + (p.1 - a.1) * vy) / len2).clamp(0.0, 1.0) };
    ((p.0 - a.0 - t * vx).powi(2) + (p.1 - a.1 - t * vy).powi(2)).sqrt()
}

struct Figure {
    segments: Vec<((f64, f64), (f64, f64))>,
    head: (f64, f64),
    head_radius: f64,
    landmarks: [(f64, f64); 5],
}

fn limb(rng: &mut ChaCha8Rng, from: (f64, f64), deg: (f64, f64), bend: f64, l1: f64, l2: f64) -> [(f64, f64); 2] {
    let a = rng.random_range(deg.0..deg.1) * PI / 180.0;
    let b = a + rng.random_range(-bend..bend) * PI / 180.0;
    let mid = (from.0 + l1 * a.cos(), from.1 + l1 * a.sin());
    [mid, (mid.0 + l2 * b.cos(), mid.1 + l2 * b.sin())]
}

/// Figure in a unit frame of 64 px, before placement.
fn pose_figure(rng: &mut ChaCha8Rng) -> Figure {
    let s = rng.random_range(0.85..1.15);
    let lean = rng.random_range(-0.3..0.3f64);
    let neck = (0.0, 0.0);
    let torso = 14.0 * s;
    let hip = (torso * lean.sin(), torso * lean.cos());
    let head_radius = 4.0 * s;
    let head = (-head_radius * 1.3 * lean.sin(), -head_radius * 1.3 * lean.cos());
    // Angles in image coordinates (y down): 90° points straight down.
    let [le, lh] = limb(rng, neck, (100.0, 250.0), 60.0, 9.0 * s, 8.0 * s);
    let [re, rh] = limb(rng, neck, (-70.0, 80.0), 60.0, 9.0 * s, 8.0 * s);
    let [lk, lf] = limb(rng, hip, (95.0, 135.0), 30.0, 11.0 * s, 10.0 * s);
    let [rk, rf] = limb(rng, hip, (45.0, 85.0), 30.0, 11.0 * s, 10.0 * s);
    Figure {
        segments: vec![(neck, hip), (neck, le), (le, lh), (neck, re), (re, rh), (hip, lk), (lk, lf), (hip, rk), (rk, rf)],
        head,
        head_radius,
        landmarks: [head, lh, rh, lf, rf],
    }
}

fn bbox(points: &[(f64, f64)]) -> (f64, f64, f64, f64) {
    points.iter().fold((f64::MAX, f64::MAX, f64::MIN, f64::MIN), |(x0, y0, x1, y1), &(x, y)| {
        (x0.min(x), y0.min(y), x1.max(x), y1.max(y))
    })
}

/// Diagonal of the landmark bounding box.
pub fn bbox_diagonal(points: &[(f64, f64)]) -> f64 {
    let (x0, y0, x1, y1) = bbox(points);
    ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt()
}

fn render_sample(rng: &mut ChaCha8Rng, num_landmarks: usize, size: usize, hm_size: usize, sigma: f64) -> HeatmapSample {
    let k = size as f64 / 64.0;
    let margin = 4.0 * k;
    let fig = loop {
        let mut fig = pose_figure(rng);
        let scale = |p: (f64, f64)| (p.0 * k, p.1 * k);
        fig.segments.iter_mut().for_each(|(a, b)| (*a, *b) = (scale(*a), scale(*b)));
        fig.head = scale(fig.head);
        fig.head_radius *= k;
        fig.landmarks.iter_mut().for_each(|p| *p = scale(*p));
        let mut extent: Vec<(f64, f64)> = fig.segments.iter().flat_map(|&(a, b)| [a, b]).collect();
        extent.push((fig.head.0 - fig.head_radius, fig.head.1 - fig.head_radius));
        extent.push((fig.head.0 + fig.head_radius, fig.head.1 + fig.head_radius));
        let (x0, y0, x1, y1) = bbox(&extent);
        let room = (size as f64 - 1.0 - 2.0 * margin - (x1 - x0), size as f64 - 1.0 - 2.0 * margin - (y1 - y0));
        if room.0 < 0.0 || room.1 < 0.0 || bbox_diagonal(&fig.landmarks) < MIN_FIGURE_DIAG * size as f64 {
            continue;
        }
        let dx = margin - x0 + rng.random_range(0.0..=room.0);
        let dy = margin - y0 + rng.random_range(0.0..=room.1);
        let shift = |p: (f64, f64)| (p.0 + dx, p.1 + dy);
        fig.segments.iter_mut().for_each(|(a, b)| (*a, *b) = (shift(*a), shift(*b)));
        fig.head = shift(fig.head);
        // Stored landmarks are exactly representable in f32 so caching is lossless.
        fig.landmarks.iter_mut().for_each(|p| {
            let q = shift(*p);
            *p = (q.0 as f32 as f64, q.1 as f32 as f64);
        });
        break fig;
    };
    let noise = Normal::new(0.0, 0.04).expect("valid std");
    let half_width = 1.1 * k;
    let image = DenseTensor::from_fn(&[1, size, size], |i| {
        let p = ((i % size) as f64, (i / size) as f64);
        let limb = fig.segments.iter().map(|&(a, b)| dist_to_segment(p, a, b)).fold(f64::MAX, f64::min);
        let head = ((p.0 - fig.head.0).powi(2) + (p.1 - fig.head.1).powi(2)).sqrt() - fig.head_radius;
        let ink = (1.0 - (limb - half_width)).clamp(0.0, 1.0).max((1.0 - head).clamp(0.0, 1.0));
        (0.1 + 0.8 * ink + noise.sample(rng)).clamp(0.0, 1.0) as f32
    });
    let landmarks = fig.landmarks[..num_landmarks].to_vec();
    let heatmaps = render_heatmaps(&landmarks, hm_size, sigma, HeatmapGeometry::new(size, hm_size));
    HeatmapSample { image, landmarks, heatmaps }
}

/// Renders `n` stick figures. Landmarks are taken in [`LANDMARK_NAMES`] order.
pub fn synth_pose_dataset(n: usize, seed: u64, num_landmarks: usize, image_size: usize, heatmap_size: usize, sigma: f64) -> Result<PoseDataset> {
    if n == 0 {
        return Err(Error::invalid("dataset size must be positive"));
    }
    if num_landmarks == 0 || num_landmarks > LANDMARK_NAMES.len() {
        return Err(Error::invalid(format!("landmarks must be in 1..={}", LANDMARK_NAMES.len())));
    }
    if image_size < 16 || heatmap_size == 0 || image_size % heatmap_size != 0 {
        return Err(Error::invalid("image size must be >= 16 and a multiple of the heatmap size"));
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid("sigma must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(n * image_size * image_size);
    let mut heatmaps = Vec::with_capacity(n * num_landmarks * heatmap_size * heatmap_size);
    let mut landmarks = Vec::with_capacity(n);
    for _ in 0..n {
        let s = render_sample(&mut rng, num_landmarks, image_size, heatmap_size, sigma);
        images.extend_from_slice(s.image.data());
        heatmaps.extend_from_slice(s.heatmaps.data());
        landmarks.push(s.landmarks);
    }
    Ok(PoseDataset {
        images: DenseTensor::new(vec![n, 1, image_size, image_size], images)?,
        heatmaps: DenseTensor::new(vec![n, num_landmarks, heatmap_size, heatmap_size], heatmaps)?,
        landmarks,
        sigma,
        geometry: HeatmapGeometry::new(image_size, heatmap_size),
    })
}

/// 28×28 glyphs in ten classes: class `c` is a bar at angle `18c` degrees
/// plus a dot whose position also depends on the class. Jittered and noisy.
pub fn synth_glyphs(n: usize, seed: u64) -> Result<LabelledImages> {
    if n == 0 {
        return Err(Error::invalid("dataset size must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.05).expect("valid std");
    let mut data = Vec::with_capacity(n * 784);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let c = rng.random_range(0..10u8);
        let ang = (f64::from(c) * 18.0 + rng.random_range(-6.0..6.0)) * PI / 180.0;
        let center = (13.5 + rng.random_range(-2.0..2.0), 13.5 + rng.random_range(-2.0..2.0));
        let half = rng.random_range(7.0..10.0);
        let a = (center.0 - half * ang.cos(), center.1 - half * ang.sin());
        let b = (center.0 + half * ang.cos(), center.1 + half * ang.sin());
        let dot_ang = f64::from(c) * 2.0 * PI / 10.0;
        let dot = (13.5 + 9.0 * dot_ang.cos(), 13.5 + 9.0 * dot_ang.sin());
        for i in 0..784 {
            let p = ((i % 28) as f64, (i / 28) as f64);
            let bar = (1.5 - dist_to_segment(p, a, b)).clamp(0.0, 1.0);
            let d = ((p.0 - dot.0).powi(2) + (p.1 - dot.1).powi(2)).sqrt();
            let blob = (2.0 - d).clamp(0.0, 1.0);
            data.push((bar.max(blob) + noise.sample(&mut rng)).clamp(0.0, 1.0) as f32);
        }
        labels.push(c);
    }
    Ok(LabelledImages { images: DenseTensor::new(vec![n, 1, 28, 28], data)?, labels })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let a = synth_pose_dataset(6, 3, 5, 64, 16, 1.0).unwrap();
        let b = synth_pose_dataset(6, 3, 5, 64, 16, 1.0).unwrap();
        let c = synth_pose_dataset(6, 4, 5, 64, 16, 1.0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn heatmap_peaks_track_landmarks() {
        let d = synth_pose_dataset(40, 11, 5, 64, 16, 1.0).unwrap();
        let hm = d.heatmap_size();
        for (i, lms) in d.landmarks.iter().enumerate() {
            assert!(bbox_diagonal(lms) >= MIN_FIGURE_DIAG * 64.0);
            for (k, &p) in lms.iter().enumerate() {
                let plane = &d.heatmaps.data()[(i * 5 + k) * hm * hm..][..hm * hm];
                assert!(plane.iter().all(|&v| (0.0..=1.0).contains(&v)));
                let arg = (0..plane.len()).fold(0, |b, j| if plane[j] > plane[b] { j } else { b });
                let (hx, hy) = d.geometry.to_heatmap(p);
                assert!(((arg % hm) as f64 - hx).abs() <= 1.0 && ((arg / hm) as f64 - hy).abs() <= 1.0);
            }
        }
        assert!(d.images.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn cache_round_trip() {
        let d = synth_pose_dataset(3, 9, 4, 32, 8, 1.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.bnt");
        d.save(&path).unwrap();
        assert_eq!(PoseDataset::load(&path).unwrap(), d);
    }

    #[test]
    fn geometry_inverts() {
        let g = HeatmapGeometry::new(64, 16);
        let p = (17.25, 40.5);
        let q = g.to_image(g.to_heatmap(p));
        assert!((q.0 - p.0).abs() < 1e-12 && (q.1 - p.1).abs() < 1e-12);
        assert_eq!(g.to_image((0.0, 0.0)), (1.5, 1.5));
    }

    #[test]
    fn glyph_labels_in_range() {
        let g = synth_glyphs(50, 1).unwrap();
        assert_eq!(g.images.shape(), &[50, 1, 28, 28]);
        assert!(g.labels.iter().all(|&l| l < 10));
    }
}
