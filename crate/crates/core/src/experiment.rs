//! Batch experiments: victim synthesis, recovery runs, reconstruction,
//! noise sweeps and landscape traces, with their on-disk artifacts.
//!
//! Layout under the output directory:
//!
//! ```text
//! manifest.json                  run manifest (config echo, seed, counts)
//! model/                         victim model (see MlpModel::save)
//! instances/inst_00000/          one captured example per directory
//! report.json, per_instance.csv  attack
//! reconstruct/                   reconstructed inputs + reconstruct.csv
//! sweep.csv                      noise sweep
//! trace.csv                      λ-loss landscape
//! ```
//!
//! Everything random is drawn from generators derived from the config seed
//! per work item, so results do not depend on `jobs` or scheduling.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{is_correct, l_r, l_s, psnr, ssim, DEFAULT_LR_TOLERANCE};
use crate::reconstruct::{bias_attack, reconstruct_input, write_image};
use crate::recovery::{
    build_context, extract_mixup, idlg_baseline, loss_landscape, recover, IdlgOutcome, MixupEstimate,
    RecoveryConfig, RecoveryStatus,
};
use crate::rng::{RngHandle, RNG_ALGORITHM};
use crate::robustness::{noise_sweep, NoiseFamily, SweepOptions, SweepReport};
use crate::tensor::{write_tensor, Tensor};
use crate::victim::{
    make_label, mix_inputs, read_json, train, write_json, Activation, Augmentation, AugmentedLabel, BlobSource,
    Instance, LabelKind, MlpModel, DEFAULT_BLOB_SPREAD,
};

pub const ARTIFACT_VERSION: &str = "1";
pub const RUN_MANIFEST: &str = "manifest.json";

// stream indices for RngHandle::derive on the root generator
const STREAM_MODEL: u64 = 0;
const STREAM_TRAIN: u64 = 1;
const STREAM_INSTANCES: u64 = 2;
const STREAM_ATTACK: u64 = 3;
const STREAM_SWEEP: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VictimConfig {
    /// Input width, hidden widths, class count.
    pub dims: Vec<usize>,
    pub bias: bool,
    pub activation: Activation,
    /// Multiplier on the default ±1/√fan_in initialisation. Large values
    /// saturate the softmax and produce degenerate one-hot gradients.
    pub weight_scale: f64,
    /// Inputs are blob samples in `[0, input_scale]`. For a single-layer
    /// victim the input is the feature the attack recovers; 2.0 puts its
    /// norm in the range of ResNet-18 penultimate features.
    pub input_scale: f64,
    pub train_epochs: usize,
    pub train_samples: usize,
    pub train_lr: f64,
    pub blob_spread: f64,
}

impl Default for VictimConfig {
    fn default() -> Self {
        Self {
            dims: vec![256, 10],
            bias: false,
            activation: Activation::Relu,
            weight_scale: 1.0,
            input_scale: 1.0,
            train_epochs: 0,
            train_samples: 500,
            train_lr: 0.003,
            blob_spread: DEFAULT_BLOB_SPREAD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub families: Vec<NoiseFamily>,
    pub scales: Vec<f64>,
    pub all_layers: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            families: vec![NoiseFamily::Gaussian, NoiseFamily::Laplace],
            scales: vec![1e-4, 1e-3, 1e-2, 1e-1],
            all_layers: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceConfig {
    pub instance: usize,
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            instance: 0,
            lo: -10.0,
            hi: 10.0,
            steps: 2001,
        }
    }
}

/// Everything a run needs. Every field has a default, so `{}` is a valid
/// config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub victim: VictimConfig,
    pub augmentation: LabelKind,
    pub instances: usize,
    /// The exclusion size is always taken from `augmentation`.
    pub recovery: RecoveryConfig,
    pub lr_tolerance: f64,
    pub noise: NoiseConfig,
    pub trace: TraceConfig,
    /// `[channels, height, width]`; when set, reconstructions are also
    /// written as PGM/PPM images.
    pub image: Option<[usize; 3]>,
    pub seed: u64,
    pub out: PathBuf,
    /// Worker threads; 0 means one per core.
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            victim: VictimConfig::default(),
            augmentation: LabelKind::Smoothing,
            instances: 100,
            recovery: RecoveryConfig::default(),
            lr_tolerance: DEFAULT_LR_TOLERANCE,
            noise: NoiseConfig::default(),
            trace: TraceConfig::default(),
            image: None,
            seed: 0,
            out: PathBuf::from("run"),
            jobs: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let dims = &self.victim.dims;
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config("victim.dims needs at least two positive widths".into()));
        }
        if *dims.last().unwrap() < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        if !(self.victim.weight_scale > 0.0) || !(self.victim.input_scale > 0.0) || !(self.victim.train_lr > 0.0) {
            return Err(Error::Config("weight_scale, input_scale and train_lr must be positive".into()));
        }
        if let Some([c, h, w]) = self.image {
            if c * h * w != dims[0] || !(c == 1 || c == 3) {
                return Err(Error::Config(format!(
                    "image {c}x{h}x{w} does not match input width {}",
                    dims[0]
                )));
            }
        }
        if self.noise.scales.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config("noise scales must be positive".into()));
        }
        self.recovery_config().validate()
    }

    /// Recovery settings with the exclusion size of the augmentation.
    pub fn recovery_config(&self) -> RecoveryConfig {
        RecoveryConfig {
            exclusion_size: self.augmentation.exclusion_size(),
            ..self.recovery.clone()
        }
    }

    fn root_rng(&self) -> RngHandle {
        RngHandle::new(self.seed)
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))
    }
}

/// A victim plus its captured instances, in memory.
#[derive(Debug, Clone)]
pub struct Generated {
    pub model: MlpModel,
    pub instances: Vec<Instance>,
}

/// Builds (and optionally trains) the victim and the data source it was
/// trained on.
pub fn build_victim(config: &ExperimentConfig) -> Result<(MlpModel, BlobSource)> {
    let v = &config.victim;
    let root = config.root_rng();
    let mut rng = root.derive(STREAM_MODEL);
    let mut model = MlpModel::random(&v.dims, v.bias, v.activation, &mut rng)?;
    if v.weight_scale != 1.0 {
        for layer in model.layers_mut() {
            layer.weight = layer.weight.scaled(v.weight_scale);
            if let Some(b) = layer.bias.as_mut() {
                *b = b.scaled(v.weight_scale);
            }
        }
    }
    let classes = *v.dims.last().unwrap();
    let source = BlobSource::new(v.dims[0], classes, v.blob_spread, &mut rng)?.with_scale(v.input_scale);
    if v.train_epochs > 0 {
        // train on the same augmentation that will be attacked, as a client
        // using smoothing or mixup would
        let mut rng = root.derive(STREAM_TRAIN);
        let data = (0..v.train_samples)
            .map(|_| draw_example(classes, &source, config.augmentation, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        model = train(&model, &data, v.train_epochs, v.train_lr, &mut rng)?;
    }
    Ok((model, source))
}

/// Draws one labelled example: classes, augmented label and input.
pub fn draw_example(
    classes: usize,
    source: &BlobSource,
    kind: LabelKind,
    rng: &mut RngHandle,
) -> Result<(Tensor, AugmentedLabel)> {
    let a = rng.index(classes);
    let b = (a + 1 + rng.index(classes - 1)) % classes;
    let label = make_label(kind, &[a, b], rng, classes)?;
    let input = match label.augmentation {
        Augmentation::Mixup { coefficient, .. } => {
            let xa = source.sample(a, rng);
            let xb = source.sample(b, rng);
            mix_inputs(&xa, &xb, coefficient)?
        }
        _ => source.sample(a, rng),
    };
    Ok((input, label))
}

/// Draws an example and captures the victim's gradients on it.
pub fn make_instance(
    model: &MlpModel,
    source: &BlobSource,
    kind: LabelKind,
    rng: &mut RngHandle,
) -> Result<Instance> {
    let (input, label) = draw_example(model.class_count(), source, kind, rng)?;
    Instance::new(model, input, label)
}

/// In-memory equivalent of [`cmd_gen`].
pub fn generate(config: &ExperimentConfig) -> Result<Generated> {
    config.validate()?;
    let (model, source) = build_victim(config)?;
    let base = config.root_rng().derive(STREAM_INSTANCES);
    let instances = config.pool()?.install(|| {
        (0..config.instances)
            .into_par_iter()
            .map(|k| make_instance(&model, &source, config.augmentation, &mut base.derive(k as u64)))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(Generated { model, instances })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub seed: u64,
    pub rng: String,
    pub instances: Vec<String>,
    pub config: ExperimentConfig,
}

pub fn instance_dir(out: &Path, index: usize) -> PathBuf {
    out.join("instances").join(format!("inst_{index:05}"))
}

/// Synthesizes the victim and instances and writes them under `config.out`.
pub fn cmd_gen(config: &ExperimentConfig) -> Result<RunManifest> {
    let generated = generate(config)?;
    let out = &config.out;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    generated.model.save(out.join("model"))?;
    let mut names = Vec::with_capacity(generated.instances.len());
    for (k, inst) in generated.instances.iter().enumerate() {
        let dir = instance_dir(out, k);
        inst.save(&dir)?;
        names.push(format!("instances/inst_{k:05}"));
    }
    let manifest = RunManifest {
        artifact_version: ARTIFACT_VERSION.into(),
        seed: config.seed,
        rng: RNG_ALGORITHM.into(),
        instances: names,
        config: config.clone(),
    };
    write_json(&out.join(RUN_MANIFEST), &manifest)?;
    Ok(manifest)
}

/// Reads back what [`cmd_gen`] wrote.
pub fn load_generated(out: &Path) -> Result<Generated> {
    let manifest: RunManifest = read_json(&out.join(RUN_MANIFEST))?;
    let model = MlpModel::load(out.join("model"))?;
    let instances = manifest
        .instances
        .iter()
        .map(|rel| Instance::load(out.join(rel), &model))
        .collect::<Result<Vec<_>>>()?;
    Ok(Generated { model, instances })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub index: usize,
    pub augmentation: Augmentation,
    pub status: RecoveryStatus,
    pub lambda: Option<f64>,
    /// `1/(p_r - y_r)` for the row the search used (or the max-L1 row).
    pub lambda_oracle: f64,
    pub l_r: f64,
    pub l_s: Option<f64>,
    pub correct: bool,
    pub loss: f64,
    pub mixup: Option<MixupEstimate>,
    pub idlg: Option<IdlgOutcome>,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub instances: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub mean_lr: f64,
    pub median_lr: f64,
    pub status_counts: BTreeMap<String, usize>,
}

impl Aggregates {
    pub fn from_records(records: &[InstanceRecord]) -> Self {
        let n = records.len();
        let correct = records.iter().filter(|r| r.correct).count();
        let mut lr: Vec<f64> = records.iter().map(|r| r.l_r).collect();
        lr.sort_by(f64::total_cmp);
        let median_lr = match n {
            0 => f64::NAN,
            _ if n % 2 == 1 => lr[n / 2],
            _ => 0.5 * (lr[n / 2 - 1] + lr[n / 2]),
        };
        let mut status_counts = BTreeMap::new();
        for r in records {
            *status_counts.entry(r.status.as_str().to_string()).or_insert(0) += 1;
        }
        Self {
            instances: n,
            correct,
            accuracy: if n == 0 { f64::NAN } else { correct as f64 / n as f64 },
            mean_lr: if n == 0 { f64::NAN } else { lr.iter().sum::<f64>() / n as f64 },
            median_lr,
            status_counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub artifact_version: String,
    pub seed: u64,
    pub rng: String,
    pub config: ExperimentConfig,
    pub aggregates: Aggregates,
    pub records: Vec<InstanceRecord>,
}

pub const PER_INSTANCE_HEADER: &str = "index,kind,status,lambda,lambda_oracle,L_r,L_s,correct,loss,elapsed_ms";

impl RunReport {
    pub fn per_instance_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        let mut s = String::from(PER_INSTANCE_HEADER);
        s.push('\n');
        for r in &self.records {
            let kind = match r.augmentation {
                Augmentation::OneHot { .. } => "one_hot",
                Augmentation::Smoothing { .. } => "smoothing",
                Augmentation::Mixup { .. } => "mixup",
            };
            s.push_str(&format!(
                "{},{},{},{},{:e},{:e},{},{},{:e},{:.3}\n",
                r.index,
                kind,
                r.status.as_str(),
                opt(r.lambda),
                r.lambda_oracle,
                r.l_r,
                opt(r.l_s),
                r.correct,
                r.loss,
                r.elapsed_ms
            ));
        }
        s
    }
}

fn oracle_for_row(inst: &Instance, row: Option<usize>) -> f64 {
    match row {
        Some(r) => {
            let p = inst.probabilities();
            1.0 / (p[r] - inst.label.values()[r])
        }
        None => inst.oracle_lambda(),
    }
}

/// Recovers one instance and scores it.
pub fn attack_instance(
    index: usize,
    inst: &Instance,
    model: &MlpModel,
    recovery: &RecoveryConfig,
    tolerance: f64,
    rng: &mut RngHandle,
) -> Result<InstanceRecord> {
    let start = Instant::now();
    let result = recover(&inst.capture, model, recovery, rng)?;
    let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    let lambda_oracle = oracle_for_row(inst, result.row);
    let mixup = match (inst.label.augmentation, result.is_success()) {
        (Augmentation::Mixup { .. }, true) => extract_mixup(&result.label).ok(),
        _ => None,
    };
    let idlg = matches!(inst.label.augmentation, Augmentation::OneHot { .. }).then(|| idlg_baseline(&inst.capture));
    Ok(InstanceRecord {
        index,
        augmentation: inst.label.augmentation,
        status: result.status,
        lambda: result.lambda,
        lambda_oracle,
        l_r: l_r(result.label.data(), inst.label.values())?,
        l_s: result.lambda.map(|l| l_s(l, lambda_oracle)),
        correct: is_correct(&result, &inst.label, tolerance),
        loss: result.loss,
        mixup,
        idlg,
        elapsed_ms,
    })
}

/// In-memory equivalent of [`cmd_attack`]. Rows are ordered by instance
/// index whatever the completion order.
pub fn attack(generated: &Generated, config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let recovery = config.recovery_config();
    let base = config.root_rng().derive(STREAM_ATTACK);
    let records = config.pool()?.install(|| {
        generated
            .instances
            .par_iter()
            .enumerate()
            .map(|(k, inst)| {
                attack_instance(
                    k,
                    inst,
                    &generated.model,
                    &recovery,
                    config.lr_tolerance,
                    &mut base.derive(k as u64),
                )
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(RunReport {
        artifact_version: ARTIFACT_VERSION.into(),
        seed: config.seed,
        rng: RNG_ALGORITHM.into(),
        config: config.clone(),
        aggregates: Aggregates::from_records(&records),
        records,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs recovery over the generated instances in `config.out`; writes
/// `report.json` and `per_instance.csv`.
pub fn cmd_attack(config: &ExperimentConfig) -> Result<RunReport> {
    let generated = load_generated(&config.out)?;
    let report = attack(&generated, config)?;
    write_json(&config.out.join("report.json"), &report)?;
    write_text(&config.out.join("per_instance.csv"), &report.per_instance_csv())?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionRecord {
    pub index: usize,
    pub status: RecoveryStatus,
    /// False when recovery failed or a dead layer stopped the inversion.
    pub reconstructed: bool,
    pub dead_layer: Option<usize>,
    pub max_abs_error: Option<f64>,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    /// Max deviation between the analytic path and the bias-ratio path for
    /// the first layer, when the victim has biases.
    pub bias_path_deviation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructReport {
    pub records: Vec<ReconstructionRecord>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

pub const RECONSTRUCT_HEADER: &str = "index,status,reconstructed,dead_layer,max_abs_error,psnr,ssim,bias_path_deviation";

impl ReconstructReport {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        let mut s = String::from(RECONSTRUCT_HEADER);
        s.push('\n');
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.index,
                r.status.as_str(),
                r.reconstructed,
                r.dead_layer.map(|d| d.to_string()).unwrap_or_default(),
                opt(r.max_abs_error),
                opt(r.psnr),
                opt(r.ssim),
                opt(r.bias_path_deviation),
            ));
        }
        s
    }
}

fn image_view(t: &Tensor, image: Option<[usize; 3]>) -> Result<Tensor> {
    match image {
        Some([1, h, w]) => t.clone().reshaped(vec![h, w]),
        Some([c, h, w]) => t.clone().reshaped(vec![c, h, w]),
        None => Ok(t.clone()),
    }
}

/// Recovers and then analytically inverts every instance. Returns the
/// per-instance records and the reconstructed inputs (None where the
/// inversion did not complete).
pub fn reconstruct_all(
    generated: &Generated,
    config: &ExperimentConfig,
) -> Result<(ReconstructReport, Vec<Option<Tensor>>)> {
    config.validate()?;
    let recovery = config.recovery_config();
    let base = config.root_rng().derive(STREAM_ATTACK);
    let model = &generated.model;
    let rows = config.pool()?.install(|| {
        generated
            .instances
            .par_iter()
            .enumerate()
            .map(|(k, inst)| -> Result<(ReconstructionRecord, Option<Tensor>)> {
                let result = recover(&inst.capture, model, &recovery, &mut base.derive(k as u64))?;
                let mut rec = ReconstructionRecord {
                    index: k,
                    status: result.status,
                    reconstructed: false,
                    dead_layer: None,
                    max_abs_error: None,
                    psnr: None,
                    ssim: None,
                    bias_path_deviation: None,
                };
                if !result.is_success() || result.lambda.is_none() {
                    return Ok((rec, None));
                }
                let x = match reconstruct_input(model, &inst.capture, &result) {
                    Ok(r) => r.input,
                    Err(Error::PartialReconstruction { dead_layer, .. }) => {
                        rec.dead_layer = Some(dead_layer);
                        return Ok((rec, None));
                    }
                    Err(e) => return Err(e),
                };
                rec.reconstructed = true;
                rec.max_abs_error = Some(x.max_abs_diff(&inst.input));
                let truth = image_view(&inst.input, config.image)?;
                let guess = image_view(&x, config.image)?;
                rec.psnr = Some(psnr(&guess, &truth, 1.0)?);
                rec.ssim = Some(ssim(&guess, &truth)?);
                if let Some(Some(Ok(b))) = bias_attack(&inst.capture).into_iter().next() {
                    rec.bias_path_deviation = Some(b.max_abs_diff(&x));
                }
                Ok((rec, Some(x)))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let (records, inputs): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let done: Vec<&ReconstructionRecord> = records.iter().filter(|r| r.reconstructed).collect();
    let mean = |f: fn(&ReconstructionRecord) -> f64| {
        if done.is_empty() {
            f64::NAN
        } else {
            done.iter().map(|r| f(r)).sum::<f64>() / done.len() as f64
        }
    };
    let report = ReconstructReport {
        mean_psnr: mean(|r| r.psnr.unwrap()),
        mean_ssim: mean(|r| r.ssim.unwrap()),
        records,
    };
    Ok((report, inputs))
}

/// Writes reconstructed inputs (`recon_00000.gtn`, plus `.pgm`/`.ppm` when
/// an image shape is configured) and `reconstruct.csv` / `reconstruct.json`
/// under `out/reconstruct/`.
pub fn cmd_reconstruct(config: &ExperimentConfig) -> Result<ReconstructReport> {
    let generated = load_generated(&config.out)?;
    let (report, inputs) = reconstruct_all(&generated, config)?;
    let dir = config.out.join("reconstruct");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for (k, x) in inputs.iter().enumerate() {
        let Some(x) = x else { continue };
        write_tensor(dir.join(format!("recon_{k:05}.gtn")), x)?;
        if let Some([c, h, w]) = config.image {
            let ext = if c == 1 { "pgm" } else { "ppm" };
            write_image(dir.join(format!("recon_{k:05}.{ext}")), x, c, h, w)?;
        }
    }
    write_text(&dir.join("reconstruct.csv"), &report.to_csv())?;
    write_json(&dir.join("reconstruct.json"), &report)?;
    Ok(report)
}

/// PSO-only recovery under additive gradient noise for every configured
/// `(family, scale)`; writes `sweep.csv`.
pub fn cmd_sweep(config: &ExperimentConfig) -> Result<SweepReport> {
    let generated = load_generated(&config.out)?;
    let report = sweep(&generated, config)?;
    report.write_csv(config.out.join("sweep.csv"))?;
    Ok(report)
}

/// In-memory equivalent of [`cmd_sweep`].
pub fn sweep(generated: &Generated, config: &ExperimentConfig) -> Result<SweepReport> {
    config.validate()?;
    if config.noise.scales.is_empty() || config.noise.families.is_empty() || generated.instances.is_empty() {
        return Ok(SweepReport::default());
    }
    let rng = config.root_rng().derive(STREAM_SWEEP);
    let options = SweepOptions {
        all_layers: config.noise.all_layers,
        lr_tolerance: Some(config.lr_tolerance),
    };
    config.pool()?.install(|| {
        noise_sweep(
            &generated.instances,
            &generated.model,
            &config.noise.scales,
            &config.noise.families,
            &config.recovery_config(),
            &rng,
            options,
        )
    })
}

pub const TRACE_HEADER: &str = "lambda,scaled_loss";

/// Landscape of the configured trace instance as CSV text.
pub fn trace_csv(generated: &Generated, config: &ExperimentConfig) -> Result<String> {
    config.validate()?;
    let t = &config.trace;
    let inst = generated.instances.get(t.instance).ok_or_else(|| {
        Error::Argument(format!(
            "trace instance {} out of range ({} instances)",
            t.instance,
            generated.instances.len()
        ))
    })?;
    let ctx = build_context(&inst.capture, generated.model.last_layer(), &config.recovery_config())?;
    let points = loss_landscape(&ctx, t.lo, t.hi, t.steps)?;
    let mut s = String::from(TRACE_HEADER);
    s.push('\n');
    for p in points {
        s.push_str(&format!("{:e},{:e}\n", p.lambda, p.loss));
    }
    Ok(s)
}

/// Samples the λ-loss landscape of one instance; writes `trace.csv`.
pub fn cmd_trace(config: &ExperimentConfig) -> Result<PathBuf> {
    let generated = load_generated(&config.out)?;
    let text = trace_csv(&generated, config)?;
    let path = config.out.join("trace.csv");
    write_text(&path, &text)?;
    Ok(path)
}
