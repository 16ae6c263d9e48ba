use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::loss::exclusion_set;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixupEstimate {
    /// Class carrying the larger share.
    pub class_a: usize,
    pub class_b: usize,
    /// Share of `class_a` above the background level.
    pub coefficient: f64,
}

/// Reads the two mixed classes and the mixing coefficient off a recovered
/// mixup label. Ties between the two top entries go to the lower index.
pub fn extract_mixup(label: &Tensor) -> Result<MixupEstimate> {
    let values = label.data();
    if values.len() < 2 {
        return Err(Error::IllFormedMixup("need at least two classes".into()));
    }
    let top = exclusion_set(values, 2);
    let (first, second) = if values[top[1]] > values[top[0]] {
        (top[1], top[0])
    } else {
        (top[0], top[1])
    };
    let rest: Vec<f64> = (0..values.len())
        .filter(|i| !top.contains(i))
        .map(|i| values[i])
        .collect();
    let (background, spread) = if rest.is_empty() {
        (0.0, 0.0)
    } else {
        let mean = rest.iter().sum::<f64>() / rest.len() as f64;
        let var = rest.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / rest.len() as f64;
        (mean, var.sqrt())
    };
    let margin = values[second] - background;
    if !(margin > 10.0 * spread) {
        return Err(Error::IllFormedMixup(format!(
            "second class sits {margin:e} above a background with spread {spread:e}"
        )));
    }
    let coefficient = values[first] - background;
    if !(coefficient > 0.0 && coefficient < 1.0 + 1e-9) {
        return Err(Error::IllFormedMixup(format!(
            "coefficient {coefficient} outside (0, 1)"
        )));
    }
    Ok(MixupEstimate {
        class_a: first,
        class_b: second,
        coefficient: coefficient.min(1.0),
    })
}
