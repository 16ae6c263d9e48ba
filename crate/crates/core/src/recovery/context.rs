use crate::error::{Error, Result};
use crate::tensor::{dot, matvec_slice, softmax_slice, Tensor};
use crate::victim::{max_l1_row, GradientCapture, LayerSpec};

use super::config::{LossKind, RecoveryConfig};
use super::loss::loss_with_slope;

/// Everything needed to turn a scalar λ into a pseudo label.
///
/// The candidate feature is `λ·g_r`, so the logits are `λ·(W g_r) + b`; the
/// product `W g_r` is computed once here.
#[derive(Debug, Clone)]
pub struct PseudoLabelContext {
    row: usize,
    feature_row: Tensor,
    coe: f64,
    ratios: Vec<f64>,
    direction: Vec<f64>,
    bias: Option<Vec<f64>>,
    loss: LossKind,
    exclusion_size: usize,
    loss_scale: f64,
    threshold: f64,
    noise_variance: f64,
}

/// Builds the search context from the last-layer weight gradient.
///
/// The pivot row is the one with the largest absolute sum. The ratio
/// `c_i = <g_i, g_r> / <g_r, g_r>` equals the entry-wise quotient `g_i / g_r`
/// for an exact rank-one gradient and stays defined when the gradient is
/// noisy.
pub fn build_context(
    capture: &GradientCapture,
    last_layer: &LayerSpec,
    config: &RecoveryConfig,
) -> Result<PseudoLabelContext> {
    let grad = capture.last_weight_grad();
    if grad.shape() != last_layer.weight.shape() {
        return Err(Error::Shape(format!(
            "last-layer gradient {:?} does not match weight {:?}",
            grad.shape(),
            last_layer.weight.shape()
        )));
    }
    let row = max_l1_row(grad);
    let g_r = grad.row(row);
    let norm_sq = dot(g_r, g_r);
    if norm_sq == 0.0 {
        return Err(Error::Domain(
            "last-layer gradient is identically zero".into(),
        ));
    }
    let classes = grad.rows();
    let mut ratios = Vec::with_capacity(classes);
    let mut residual = 0.0;
    for i in 0..classes {
        if i == row {
            ratios.push(1.0);
            continue;
        }
        let gi = grad.row(i);
        let c = dot(gi, g_r) / norm_sq;
        residual += gi.iter().zip(g_r).map(|(a, b)| (a - c * b).powi(2)).sum::<f64>();
        ratios.push(c);
    }
    let noise_variance = residual / ((classes - 1) * grad.cols()) as f64;
    let direction = matvec_slice(&last_layer.weight, g_r)?;
    Ok(PseudoLabelContext {
        row,
        feature_row: Tensor::vector(g_r.to_vec()),
        coe: config.coe,
        ratios,
        direction,
        bias: last_layer.bias.as_ref().map(|b| b.data().to_vec()),
        loss: config.loss,
        exclusion_size: config.exclusion_size,
        loss_scale: config.loss_scale,
        threshold: config.threshold,
        noise_variance,
    })
}

impl PseudoLabelContext {
    pub fn row(&self) -> usize {
        self.row
    }

    /// Unscaled gradient row `g_r`.
    pub fn feature_row(&self) -> &Tensor {
        &self.feature_row
    }

    /// `coe · g_r`, the row the gradient optimizer parametrizes.
    pub fn scaled_row(&self) -> Tensor {
        self.feature_row.scaled(self.coe)
    }

    pub fn coe(&self) -> f64 {
        self.coe
    }

    pub fn ratios(&self) -> &[f64] {
        &self.ratios
    }

    pub fn class_count(&self) -> usize {
        self.ratios.len()
    }

    pub fn exclusion_size(&self) -> usize {
        self.exclusion_size
    }

    pub fn loss_kind(&self) -> LossKind {
        self.loss
    }

    pub fn loss_scale(&self) -> f64 {
        self.loss_scale
    }

    /// Per-entry variance of the part of the gradient that is not explained
    /// by a rank-one `(p - y) xᵀ` structure.
    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    /// Acceptance level for the scaled loss: the configured threshold plus
    /// the allowance for measured gradient noise.
    pub fn acceptance_threshold(&self, noise_tolerance: f64) -> f64 {
        self.threshold + noise_tolerance * self.loss_scale * self.noise_variance
    }

    /// Candidate feature `λ·g_r`.
    pub fn feature(&self, lambda: f64) -> Tensor {
        self.feature_row.scaled(lambda)
    }

    fn probabilities(&self, lambda: f64) -> Vec<f64> {
        let logits: Vec<f64> = match &self.bias {
            Some(b) => self.direction.iter().zip(b).map(|(u, b)| lambda * u + b).collect(),
            None => self.direction.iter().map(|u| lambda * u).collect(),
        };
        softmax_slice(&logits)
    }

    fn label_values(&self, lambda: f64) -> Vec<f64> {
        self.probabilities(lambda)
            .iter()
            .zip(&self.ratios)
            .map(|(p, c)| p - c / lambda)
            .collect()
    }

    /// `ŷ_i = softmax(λ·W g_r + b)_i - c_i / λ`.
    pub fn pseudo_label(&self, lambda: f64) -> Result<Tensor> {
        check_lambda(lambda)?;
        Ok(Tensor::vector(self.label_values(lambda)))
    }

    /// Scaled loss at λ; infinite at λ = 0.
    pub fn loss_at(&self, lambda: f64) -> f64 {
        if lambda == 0.0 || !lambda.is_finite() {
            return f64::INFINITY;
        }
        let (loss, _) = loss_with_slope(
            &self.label_values(lambda),
            None,
            self.loss,
            self.exclusion_size,
            self.loss_scale,
        );
        if loss.is_nan() {
            f64::INFINITY
        } else {
            loss
        }
    }

    fn label_and_slope(&self, lambda: f64) -> (Vec<f64>, Vec<f64>) {
        let p = self.probabilities(lambda);
        let mean_u: f64 = p.iter().zip(&self.direction).map(|(p, u)| p * u).sum();
        let label: Vec<f64> = p.iter().zip(&self.ratios).map(|(p, c)| p - c / lambda).collect();
        // dp_i/dλ = p_i (u_i - Σ p_j u_j); d(-c_i/λ)/dλ = c_i / λ²
        let slope: Vec<f64> = p
            .iter()
            .zip(&self.direction)
            .zip(&self.ratios)
            .map(|((p, u), c)| p * (u - mean_u) + c / (lambda * lambda))
            .collect();
        (label, slope)
    }

    /// Analytic dŷ/dλ, entry by entry.
    pub fn pseudo_label_slope(&self, lambda: f64) -> Result<Tensor> {
        check_lambda(lambda)?;
        Ok(Tensor::vector(self.label_and_slope(lambda).1))
    }

    /// Scaled loss and its derivative with respect to λ.
    pub fn loss_and_derivative(&self, lambda: f64) -> Result<(f64, f64)> {
        check_lambda(lambda)?;
        let (label, slope) = self.label_and_slope(lambda);
        Ok(loss_with_slope(
            &label,
            Some(&slope),
            self.loss,
            self.exclusion_size,
            self.loss_scale,
        ))
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda == 0.0 || !lambda.is_finite() {
        return Err(Error::Domain(format!("λ must be finite and non-zero, got {lambda}")));
    }
    Ok(())
}

/// Free-function form of [`PseudoLabelContext::pseudo_label`].
pub fn pseudo_label(ctx: &PseudoLabelContext, lambda: f64) -> Result<Tensor> {
    ctx.pseudo_label(lambda)
}

/// Analytic dL/dλ of the scaled label loss.
pub fn loss_derivative(ctx: &PseudoLabelContext, lambda: f64) -> Result<f64> {
    ctx.loss_and_derivative(lambda).map(|(_, d)| d)
}
