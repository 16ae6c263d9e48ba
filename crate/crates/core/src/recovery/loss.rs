use super::config::LossKind;

/// Indices of the `size` largest entries, lowest index first among ties.
pub fn exclusion_set(values: &[f64], size: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.truncate(size);
    idx.sort_unstable();
    idx
}

/// Scores a pseudo label. The exclusion set is recomputed from `label` on
/// every call.
pub fn label_loss(label: &[f64], kind: LossKind, exclusion_size: usize, loss_scale: f64) -> f64 {
    loss_with_slope(label, None, kind, exclusion_size, loss_scale).0
}

/// Loss and, when `slope` (dŷ/dλ) is given, dL/dλ. The exclusion set is held
/// fixed for the derivative, which is exact away from ties.
pub(crate) fn loss_with_slope(
    label: &[f64],
    slope: Option<&[f64]>,
    kind: LossKind,
    exclusion_size: usize,
    loss_scale: f64,
) -> (f64, f64) {
    match kind {
        LossKind::NegativityPenalty => {
            let loss = label.iter().map(|v| v.abs()).sum::<f64>() - 1.0;
            let d = slope
                .map(|s| label.iter().zip(s).map(|(v, dv)| v.signum() * dv).sum())
                .unwrap_or(0.0);
            (loss, d)
        }
        LossKind::Variance | LossKind::SquareSum => {
            let excluded = exclusion_set(label, exclusion_size);
            let kept: Vec<usize> = (0..label.len()).filter(|i| !excluded.contains(i)).collect();
            if kept.is_empty() {
                return (0.0, 0.0);
            }
            let m = kept.len() as f64;
            let center = if kind == LossKind::Variance {
                kept.iter().map(|&i| label[i]).sum::<f64>() / m
            } else {
                0.0
            };
            let loss = kept.iter().map(|&i| (label[i] - center).powi(2)).sum::<f64>() / m;
            // Σ(ŷ_i - μ) = 0 over the kept set, so μ's own slope drops out.
            let d = slope
                .map(|s| 2.0 / m * kept.iter().map(|&i| (label[i] - center) * s[i]).sum::<f64>())
                .unwrap_or(0.0);
            (loss_scale * loss, loss_scale * d)
        }
    }
}
