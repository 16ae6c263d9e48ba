use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngHandle;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    OneHot,
    Smoothing,
    Mixup,
}

impl LabelKind {
    /// Number of top entries left out of the label-distribution loss.
    pub fn exclusion_size(self) -> usize {
        match self {
            LabelKind::OneHot | LabelKind::Smoothing => 1,
            LabelKind::Mixup => 2,
        }
    }
}

/// How a label vector was produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Augmentation {
    OneHot {
        class: usize,
    },
    Smoothing {
        class: usize,
        epsilon: f64,
    },
    Mixup {
        class_a: usize,
        class_b: usize,
        coefficient: f64,
    },
}

/// A (possibly soft) training label together with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedLabel {
    values: Vec<f64>,
    pub augmentation: Augmentation,
}

impl AugmentedLabel {
    pub fn one_hot(class: usize, classes: usize) -> Result<Self> {
        check_class(class, classes)?;
        let mut values = vec![0.0; classes];
        values[class] = 1.0;
        Ok(Self {
            values,
            augmentation: Augmentation::OneHot { class },
        })
    }

    /// `(1 - ε)·onehot + (ε / C)·1`.
    pub fn smoothing(class: usize, epsilon: f64, classes: usize) -> Result<Self> {
        check_class(class, classes)?;
        if !(0.0..1.0).contains(&epsilon) {
            return Err(Error::Argument(format!(
                "smoothing probability {epsilon} outside [0, 1)"
            )));
        }
        let background = epsilon / classes as f64;
        let mut values = vec![background; classes];
        values[class] = 1.0 - epsilon + background;
        Ok(Self {
            values,
            augmentation: Augmentation::Smoothing { class, epsilon },
        })
    }

    /// `a·onehot_a + (1 - a)·onehot_b` for two different classes.
    pub fn mixup(class_a: usize, class_b: usize, coefficient: f64, classes: usize) -> Result<Self> {
        check_class(class_a, classes)?;
        check_class(class_b, classes)?;
        if class_a == class_b {
            return Err(Error::Argument(
                "mixup needs two different classes".into(),
            ));
        }
        if !(0.0..=1.0).contains(&coefficient) {
            return Err(Error::Argument(format!(
                "mixup coefficient {coefficient} outside [0, 1]"
            )));
        }
        let mut values = vec![0.0; classes];
        values[class_a] = coefficient;
        values[class_b] = 1.0 - coefficient;
        Ok(Self {
            values,
            augmentation: Augmentation::Mixup {
                class_a,
                class_b,
                coefficient,
            },
        })
    }

    pub fn kind(&self) -> LabelKind {
        match self.augmentation {
            Augmentation::OneHot { .. } => LabelKind::OneHot,
            Augmentation::Smoothing { .. } => LabelKind::Smoothing,
            Augmentation::Mixup { .. } => LabelKind::Mixup,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::vector(self.values.clone())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Class with the largest label mass (lowest index on ties).
    pub fn top_class(&self) -> usize {
        crate::tensor::argmax(&self.values)
    }
}

fn check_class(class: usize, classes: usize) -> Result<()> {
    if classes < 2 {
        return Err(Error::Argument("need at least two classes".into()));
    }
    if class >= classes {
        return Err(Error::Argument(format!(
            "class {class} out of range for {classes} classes"
        )));
    }
    Ok(())
}

/// Draws an augmented label: ε ~ U(0, 0.5) for smoothing, a ~ U(0, 1) for
/// mixup. `classes[0]` is the primary class; mixup uses `classes[1]` as the
/// second one.
pub fn make_label(
    kind: LabelKind,
    classes: &[usize],
    rng: &mut RngHandle,
    class_count: usize,
) -> Result<AugmentedLabel> {
    let first = *classes
        .first()
        .ok_or_else(|| Error::Argument("no class given".into()))?;
    match kind {
        LabelKind::OneHot => AugmentedLabel::one_hot(first, class_count),
        LabelKind::Smoothing => {
            let eps = rng.uniform(0.0, 0.5);
            AugmentedLabel::smoothing(first, eps, class_count)
        }
        LabelKind::Mixup => {
            let second = *classes
                .get(1)
                .ok_or_else(|| Error::Argument("mixup needs two classes".into()))?;
            if second == first {
                return Err(Error::Argument("mixup needs two different classes".into()));
            }
            let a = rng.uniform_open(0.0, 1.0);
            AugmentedLabel::mixup(first, second, a, class_count)
        }
    }
}

/// `a·x1 + (1 - a)·x2`.
pub fn mix_inputs(x1: &Tensor, x2: &Tensor, a: f64) -> Result<Tensor> {
    if x1.shape() != x2.shape() {
        return Err(Error::Shape(format!(
            "cannot mix {:?} with {:?}",
            x1.shape(),
            x2.shape()
        )));
    }
    let data = x1
        .data()
        .iter()
        .zip(x2.data())
        .map(|(u, v)| a * u + (1.0 - a) * v)
        .collect();
    Tensor::new(x1.shape().to_vec(), data)
}
