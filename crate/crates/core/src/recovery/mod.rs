//! Label and feature recovery from last-layer gradients.
//!
//! Recovery reduces to a one-dimensional search: for a scalar λ the
//! candidate feature is `λ·g_r` and the pseudo label is
//! `softmax(W λ g_r + b) - c/λ`. The ground truth sits at
//! `λ* = 1 / (p_r - y_r)`, where the pseudo label has the exact shape of
//! the augmented label and the label loss reaches zero.

mod baseline;
mod config;
mod context;
mod loss;
mod mixup;
mod search;

pub use baseline::{idlg_baseline, IdlgOutcome};
pub use config::{LossKind, RecoveryConfig, SearchStrategy};
pub use context::{build_context, loss_derivative, pseudo_label, PseudoLabelContext};
pub use loss::{exclusion_set, label_loss};
pub use mixup::{extract_mixup, MixupEstimate};
pub use search::{search_gradient, search_pso};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngHandle;
use crate::tensor::{dot, Tensor};
use crate::victim::{GradientCapture, MlpModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryStatus {
    Success,
    /// All-zero gradient: the model already predicts the one-hot label
    /// perfectly, so the prediction is the label.
    DegenerateOneHotResolved,
    /// Two opposite non-zero rows: a saturated wrong prediction on a one-hot
    /// label. Either row could be the label.
    DegenerateOneHotAmbiguous,
    BoundExceeded,
    Failed,
}

impl RecoveryStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RecoveryStatus::Success => "success",
            RecoveryStatus::DegenerateOneHotResolved => "degenerate_one_hot_resolved",
            RecoveryStatus::DegenerateOneHotAmbiguous => "degenerate_one_hot_ambiguous",
            RecoveryStatus::BoundExceeded => "bound_exceeded",
            RecoveryStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub lambda: f64,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct RecoveryResult {
    pub status: RecoveryStatus,
    /// Feature scale; on failure, the best point the search visited.
    pub lambda: Option<f64>,
    pub label: Tensor,
    /// Recovered last-layer input `λ·g_r`.
    pub feature: Tensor,
    pub loss: f64,
    /// Pivot row of the last-layer gradient, when one exists.
    pub row: Option<usize>,
    /// Competing labels for [`RecoveryStatus::DegenerateOneHotAmbiguous`].
    pub candidates: Vec<Tensor>,
    pub trace: Option<Vec<TracePoint>>,
}

impl RecoveryResult {
    pub fn is_success(&self) -> bool {
        self.status == RecoveryStatus::Success
    }
}

fn one_hot(class: usize, classes: usize) -> Tensor {
    let mut v = vec![0.0; classes];
    v[class] = 1.0;
    Tensor::vector(v)
}

/// Relative tolerance for recognising the two-opposite-rows pattern.
const OPPOSITE_ROW_TOLERANCE: f64 = 1e-9;

/// Full recovery: degenerate one-hot handling, then the configured search
/// strategy.
pub fn recover(
    capture: &GradientCapture,
    model: &MlpModel,
    config: &RecoveryConfig,
    rng: &mut RngHandle,
) -> Result<RecoveryResult> {
    config.validate()?;
    let grad = capture.last_weight_grad();
    let classes = grad.rows();
    let features = grad.cols();
    if grad.shape() != model.last_layer().weight.shape() {
        return Err(Error::Shape(format!(
            "capture gradient {:?} does not match last layer {:?}",
            grad.shape(),
            model.last_layer().weight.shape()
        )));
    }
    // rows so small that their squared norm underflows carry no usable
    // direction and count as zero
    let nonzero: Vec<usize> = (0..classes)
        .filter(|&r| dot(grad.row(r), grad.row(r)) > 0.0)
        .collect();
    if nonzero.is_empty() {
        let label = one_hot(capture.prediction, classes);
        return Ok(RecoveryResult {
            status: RecoveryStatus::DegenerateOneHotResolved,
            lambda: None,
            label,
            feature: Tensor::zeros(&[features]),
            loss: 0.0,
            row: None,
            candidates: Vec::new(),
            trace: None,
        });
    }
    if let [i, j] = nonzero[..] {
        // relative to the rows themselves: saturated captures can be tiny
        let scale = grad
            .row(i)
            .iter()
            .chain(grad.row(j))
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let opposite = grad
            .row(i)
            .iter()
            .zip(grad.row(j))
            .all(|(a, b)| (a + b).abs() <= OPPOSITE_ROW_TOLERANCE * scale);
        if opposite {
            let candidates = vec![one_hot(i, classes), one_hot(j, classes)];
            return Ok(RecoveryResult {
                status: RecoveryStatus::DegenerateOneHotAmbiguous,
                lambda: None,
                label: candidates[0].clone(),
                feature: Tensor::zeros(&[features]),
                loss: f64::INFINITY,
                row: None,
                candidates,
                trace: None,
            });
        }
    }

    let ctx = build_context(capture, model.last_layer(), config)?;
    let gradient = match config.strategy {
        SearchStrategy::PsoOnly => None,
        _ => Some(search_gradient(&ctx, config)),
    };
    if let Some(r) = &gradient {
        if r.is_success() || config.strategy == SearchStrategy::GradientOnly {
            return Ok(r.clone());
        }
    }
    let mut swarm = search_pso(&ctx, config, rng);
    if let Some(g) = gradient {
        if swarm.status == RecoveryStatus::Failed && g.status == RecoveryStatus::BoundExceeded {
            swarm.status = RecoveryStatus::BoundExceeded;
        }
        if !swarm.is_success() && g.loss < swarm.loss {
            swarm = RecoveryResult {
                status: swarm.status,
                ..g
            };
        }
    }
    Ok(swarm)
}

/// Samples the scaled loss on `steps` evenly spaced λ in `[lo, hi]`,
/// skipping λ = 0.
pub fn loss_landscape(ctx: &PseudoLabelContext, lo: f64, hi: f64, steps: usize) -> Result<Vec<TracePoint>> {
    if steps == 0 || !lo.is_finite() || !hi.is_finite() || hi < lo {
        return Err(Error::Argument(format!(
            "invalid λ grid [{lo}, {hi}] with {steps} steps"
        )));
    }
    let points: Vec<TracePoint> = (0..steps)
        .map(|k| {
            if steps == 1 {
                lo
            } else {
                lo + (hi - lo) * k as f64 / (steps - 1) as f64
            }
        })
        .filter(|&l| l != 0.0)
        .map(|lambda| TracePoint {
            lambda,
            loss: ctx.loss_at(lambda),
        })
        .collect();
    if points.is_empty() {
        return Err(Error::Argument("λ grid contains no non-zero point".into()));
    }
    Ok(points)
}

/// Maximal runs of a uniform λ grid on which the pseudo label is a valid
/// distribution (every entry in `[0, 1]`) yet differs from `truth` by more
/// than `min_distance` in L1. Runs are `(first λ, last λ)` of consecutive
/// qualifying grid points; a run of one point has zero length.
///
/// A non-empty result shows that validity alone does not identify the
/// label: some other property (the shape the loss enforces) is needed.
pub fn ambiguity_intervals(
    ctx: &PseudoLabelContext,
    truth: &[f64],
    lo: f64,
    hi: f64,
    steps: usize,
    min_distance: f64,
) -> Result<Vec<(f64, f64)>> {
    let grid = loss_landscape(ctx, lo, hi, steps)?;
    let mut runs = Vec::new();
    let mut current: Option<(f64, f64)> = None;
    let mut previous_lambda = f64::NAN;
    for p in grid {
        let label = ctx.pseudo_label(p.lambda)?;
        let valid = label.data().iter().all(|v| (0.0..=1.0).contains(v));
        let distance = crate::metrics::l_r(label.data(), truth)?;
        // λ = 0 is skipped by the grid; a run never spans it
        let adjacent = previous_lambda.signum() == p.lambda.signum();
        previous_lambda = p.lambda;
        match (valid && distance > min_distance, current.as_mut()) {
            (true, Some(run)) if adjacent => run.1 = p.lambda,
            (true, _) => {
                runs.extend(current.take());
                current = Some((p.lambda, p.lambda));
            }
            (false, _) => runs.extend(current.take()),
        }
    }
    runs.extend(current);
    Ok(runs)
}
