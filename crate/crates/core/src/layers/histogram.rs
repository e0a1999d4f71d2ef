use crate::real::Real;

/// Equal-width histogram over `[min, max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub min: f64,
    pub max: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn bin_width(&self) -> f64 {
        (self.max - self.min) / self.counts.len() as f64
    }
}

/// Distribution of a layer's weights, e.g. to see how far they sit from the
/// sign boundary at 0.
pub fn weight_histogram<T: Real>(values: &[T], bins: usize) -> Histogram {
    let bins = bins.max(1);
    let (mut lo, mut hi) = values
        .iter()
        .map(|v| v.f64())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if values.is_empty() {
        (lo, hi) = (0.0, 0.0);
    }
    let mut counts = vec![0usize; bins];
    let width = (hi - lo) / bins as f64;
    for v in values {
        let b = if width > 0.0 { ((v.f64() - lo) / width) as usize } else { 0 };
        counts[b.min(bins - 1)] += 1;
    }
    Histogram { min: lo, max: hi, counts }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_sum_to_len() {
        let v: Vec<f32> = (0..1000).map(|i| (i as f32 * 0.37).sin()).collect();
        let h = weight_histogram(&v, 17);
        assert_eq!(h.total(), 1000);
        assert_eq!(weight_histogram(&[1.0f64; 5], 4).counts, vec![5, 0, 0, 0]);
    }
}
