use crate::bitcore::DenseTensor;
use crate::error::{Error, Result};
use crate::real::Real;

/// Predictions are clamped to `[BCE_CLAMP, 1 − BCE_CLAMP]`.
pub const BCE_CLAMP: f64 = 1e-7;

/// Weight of the feature-matching term in distillation.
pub const FEATURE_MATCH_WEIGHT: f64 = 0.1;

/// Binary cross-entropy between predicted and target heatmaps, averaged over
/// every element. Returns the loss and its gradient w.r.t. `pred`.
pub fn bce_heatmap_loss<T: Real>(pred: &DenseTensor<T>, target: &DenseTensor<T>) -> Result<(T, DenseTensor<T>)> {
    pred.expect_same_shape(target)?;
    if let Some(i) = target.data().iter().position(|&p| !(p >= T::zero() && p <= T::one())) {
        return Err(Error::invalid(format!("target element {i} outside [0, 1]")));
    }
    pred.ensure_finite()?;
    let (lo, hi) = (T::of(BCE_CLAMP), T::one() - T::of(BCE_CLAMP));
    let count = T::of(pred.len().max(1) as f64);
    let mut loss = T::zero();
    let grad = pred.zip_map(target, |q, p| {
        let qc = q.max(lo).min(hi);
        loss -= p * qc.ln() + (T::one() - p) * (T::one() - qc).ln();
        if q < lo || q > hi {
            T::zero()
        } else {
            ((T::one() - p) / (T::one() - qc) - p / qc) / count
        }
    })?;
    Ok((loss / count, grad))
}

pub fn softmax<T: Real>(logits: &DenseTensor<T>) -> Result<DenseTensor<T>> {
    let k = match logits.shape() {
        [_, k] if *k > 0 => *k,
        s => return Err(Error::shape(format!("expected [N, K] logits, got {s:?}"))),
    };
    let mut out = logits.clone();
    for row in out.data_mut().chunks_mut(k) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut z = T::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        row.iter_mut().for_each(|v| *v /= z);
    }
    Ok(out)
}

/// Cross-entropy against soft targets (rows summing to 1), mean over the batch.
pub fn soft_target_ce<T: Real>(logits: &DenseTensor<T>, targets: &DenseTensor<T>) -> Result<(T, DenseTensor<T>)> {
    logits.expect_same_shape(targets)?;
    logits.ensure_finite()?;
    let probs = softmax(logits)?;
    let (n, k) = (logits.shape()[0], logits.shape()[1]);
    let mut loss = T::zero();
    for (lrow, trow) in logits.data().chunks(k).zip(targets.data().chunks(k)) {
        let m = lrow.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = m + lrow.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
        loss += trow.iter().zip(lrow).map(|(&t, &l)| t * (lse - l)).sum::<T>();
    }
    let inv = T::one() / T::of(n as f64);
    let grad = probs.zip_map(targets, |p, t| (p - t) * inv)?;
    Ok((loss * inv, grad))
}

pub fn one_hot<T: Real>(labels: &[usize], k: usize) -> Result<DenseTensor<T>> {
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::invalid(format!("label {bad} outside {k} classes")));
    }
    let mut t = DenseTensor::zeros(&[labels.len(), k]);
    for (i, &l) in labels.iter().enumerate() {
        t.data_mut()[i * k + l] = T::one();
    }
    Ok(t)
}

/// Log-sum-exp stabilized softmax cross-entropy, mean over the batch.
pub fn softmax_ce_loss<T: Real>(logits: &DenseTensor<T>, labels: &[usize]) -> Result<(T, DenseTensor<T>)> {
    let k = match logits.shape() {
        [n, k] if *n == labels.len() => *k,
        s => return Err(Error::shape(format!("{s:?} logits for {} labels", labels.len()))),
    };
    soft_target_ce(logits, &one_hot(labels, k)?)
}

/// Supervision target of a distillation loss.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a, T> {
    Heatmaps(&'a DenseTensor<T>),
    Labels(&'a [usize]),
}

/// `gt_weight · L(student, target) + (1 − gt_weight) · L(student, teacher)`.
///
/// Heatmaps use BCE with the teacher's heatmaps as soft labels; logits use
/// cross-entropy with the teacher's softmax as soft targets. The teacher
/// output is a plain tensor, so no gradient reaches it.
pub fn distill_loss<T: Real>(
    student: &DenseTensor<T>,
    teacher: &DenseTensor<T>,
    target: Target<'_, T>,
    gt_weight: f64,
) -> Result<(T, DenseTensor<T>)> {
    if !(0.0..=1.0).contains(&gt_weight) {
        return Err(Error::invalid(format!("gt weight {gt_weight} outside [0, 1]")));
    }
    student.expect_same_shape(teacher)?;
    let ((l_gt, g_gt), (l_soft, g_soft)) = match target {
        Target::Heatmaps(t) => (bce_heatmap_loss(student, t)?, bce_heatmap_loss(student, teacher)?),
        Target::Labels(l) => (softmax_ce_loss(student, l)?, soft_target_ce(student, &softmax(teacher)?)?),
    };
    let (a, b) = (T::of(gt_weight), T::of(1.0 - gt_weight));
    let grad = g_gt.zip_map(&g_soft, |x, y| a * x + b * y)?;
    Ok((a * l_gt + b * l_soft, grad))
}

/// Mean squared difference between student and teacher feature maps.
pub fn feature_match_loss<T: Real>(student: &DenseTensor<T>, teacher: &DenseTensor<T>) -> Result<(T, DenseTensor<T>)> {
    student.expect_same_shape(teacher)?;
    let count = T::of(student.len().max(1) as f64);
    let mut loss = T::zero();
    let grad = student.zip_map(teacher, |s, t| {
        loss += (s - t) * (s - t);
        T::of(2.0) * (s - t) / count
    })?;
    Ok((loss / count, grad))
}
