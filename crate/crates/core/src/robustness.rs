//! Additive gradient noise in the style of differential-privacy defences,
//! and the noise sweep that measures how label recovery degrades under it.

use std::fmt;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{is_correct, l_r, l_s, DEFAULT_LR_TOLERANCE};
use crate::recovery::{recover, RecoveryConfig, SearchStrategy};
use crate::rng::RngHandle;
use crate::victim::{GradientCapture, Instance, MlpModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    Gaussian,
    Laplace,
}

impl fmt::Display for NoiseFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseFamily::Gaussian => "gaussian",
            NoiseFamily::Laplace => "laplace",
        })
    }
}

/// Zero-centred noise. `scale` is the standard deviation for Gaussian noise
/// and the scale parameter `b` for Laplace noise (standard deviation `√2·b`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub family: NoiseFamily,
    pub scale: f64,
}

impl NoiseSpec {
    pub fn new(family: NoiseFamily, scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::Argument(format!("noise scale must be positive, got {scale}")));
        }
        Ok(Self { family, scale })
    }

    pub fn draw(&self, rng: &mut RngHandle) -> f64 {
        match self.family {
            NoiseFamily::Gaussian => self.scale * rng.normal(),
            NoiseFamily::Laplace => rng.laplace(self.scale),
        }
    }
}

/// Copy of `capture` with i.i.d. noise on every entry of the last-layer
/// weight gradient.
pub fn perturb(capture: &GradientCapture, spec: &NoiseSpec, rng: &mut RngHandle) -> GradientCapture {
    perturb_layers(capture, spec, rng, false)
}

/// As [`perturb`]; with `all_layers` the noise also hits every other weight
/// and bias gradient.
pub fn perturb_layers(capture: &GradientCapture, spec: &NoiseSpec, rng: &mut RngHandle, all_layers: bool) -> GradientCapture {
    let mut out = capture.clone();
    let last = out.layer_count() - 1;
    for l in 0..out.layer_count() {
        if l != last && !all_layers {
            continue;
        }
        for v in out.weight_grads[l].data_mut() {
            *v += spec.draw(rng);
        }
        if all_layers {
            if let Some(b) = out.bias_grads[l].as_mut() {
                for v in b.data_mut() {
                    *v += spec.draw(rng);
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub family: NoiseFamily,
    pub scale: f64,
    pub accuracy: f64,
    pub mean_ls: f64,
    pub mean_lr: f64,
    pub instances: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
}

pub const SWEEP_CSV_HEADER: &str = "family,scale,accuracy,mean_Ls,mean_Lr";

impl SweepReport {
    pub fn point(&self, family: NoiseFamily, scale: f64) -> Option<&SweepPoint> {
        self.points.iter().find(|p| p.family == family && p.scale == scale)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(SWEEP_CSV_HEADER);
        s.push('\n');
        for p in &self.points {
            s.push_str(&format!(
                "{},{:e},{},{:e},{:e}\n",
                p.family, p.scale, p.accuracy, p.mean_ls, p.mean_lr
            ));
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv().as_bytes()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SweepOptions {
    pub all_layers: bool,
    pub lr_tolerance: Option<f64>,
}

/// Runs PSO-only recovery on noisy copies of every instance for each
/// `(family, scale)` pair. Instance work runs on the current rayon pool; each
/// instance draws from its own derived generator, so results do not depend
/// on scheduling.
pub fn noise_sweep(
    instances: &[Instance],
    model: &MlpModel,
    scales: &[f64],
    families: &[NoiseFamily],
    config: &RecoveryConfig,
    rng: &RngHandle,
    options: SweepOptions,
) -> Result<SweepReport> {
    if instances.is_empty() {
        return Err(Error::Argument("noise sweep needs at least one instance".into()));
    }
    let config = RecoveryConfig {
        strategy: SearchStrategy::PsoOnly,
        ..config.clone()
    };
    let tolerance = options.lr_tolerance.unwrap_or(DEFAULT_LR_TOLERANCE);
    let mut report = SweepReport::default();
    let mut point_index = 0u64;
    for &family in families {
        for &scale in scales {
            let spec = NoiseSpec::new(family, scale)?;
            let base = rng.derive(point_index);
            point_index += 1;
            let outcomes: Vec<(bool, Option<f64>, f64)> = instances
                .par_iter()
                .enumerate()
                .map(|(k, inst)| {
                    let mut local = base.derive(k as u64);
                    let noisy = perturb_layers(&inst.capture, &spec, &mut local, options.all_layers);
                    let result = recover(&noisy, model, &config, &mut local)?;
                    let ls = match (result.lambda, result.row) {
                        (Some(lambda), Some(r)) => {
                            let p = inst.probabilities();
                            Some(l_s(lambda, 1.0 / (p[r] - inst.label.values()[r])))
                        }
                        _ => None,
                    };
                    let lr = l_r(result.label.data(), inst.label.values())?;
                    Ok((is_correct(&result, &inst.label, tolerance), ls, lr))
                })
                .collect::<Result<_>>()?;
            let n = outcomes.len() as f64;
            let ls: Vec<f64> = outcomes.iter().filter_map(|o| o.1).collect();
            report.points.push(SweepPoint {
                family,
                scale,
                accuracy: outcomes.iter().filter(|o| o.0).count() as f64 / n,
                mean_ls: if ls.is_empty() {
                    f64::NAN
                } else {
                    ls.iter().sum::<f64>() / ls.len() as f64
                },
                mean_lr: outcomes.iter().map(|o| o.2).sum::<f64>() / n,
                instances: outcomes.len(),
            });
        }
    }
    Ok(report)
}
