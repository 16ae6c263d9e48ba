use serde::{Deserialize, Serialize};

use crate::tensor::dot;
use crate::victim::{max_l1_row, GradientCapture};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdlgOutcome {
    Class(usize),
    Ambiguous,
}

/// Sign rule for one-hot labels: the label row is the one whose gradient
/// points against every other row.
///
/// Each row's sign is taken relative to the largest row, via `<g_i, g_r>`,
/// so the rule does not depend on the sign pattern of the layer input.
/// Rows that are exactly zero oppose nothing. When zero or several rows
/// qualify the outcome is ambiguous.
pub fn idlg_baseline(capture: &GradientCapture) -> IdlgOutcome {
    let grad = capture.last_weight_grad();
    let reference = grad.row(max_l1_row(grad));
    let signs: Vec<f64> = (0..grad.rows())
        .map(|i| {
            let s = dot(grad.row(i), reference);
            if s == 0.0 {
                0.0
            } else {
                s.signum()
            }
        })
        .collect();
    let qualifying: Vec<usize> = (0..signs.len())
        .filter(|&j| {
            signs[j] != 0.0
                && signs
                    .iter()
                    .enumerate()
                    .all(|(l, &s)| l == j || s != signs[j])
        })
        .collect();
    match qualifying[..] {
        [j] => IdlgOutcome::Class(j),
        _ => IdlgOutcome::Ambiguous,
    }
}
