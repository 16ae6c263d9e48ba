//! The two search engines over λ: a one-dimensional quasi-Newton descent with
//! a negative-side restart, and a windowed particle swarm sweep.

use crate::rng::RngHandle;

use super::config::RecoveryConfig;
use super::context::PseudoLabelContext;
use super::{RecoveryResult, RecoveryStatus, TracePoint};

/// Loss oracle that optionally records every evaluated point.
pub(crate) struct Evaluator<'a> {
    pub ctx: &'a PseudoLabelContext,
    pub trace: Option<Vec<TracePoint>>,
}

impl<'a> Evaluator<'a> {
    pub fn new(ctx: &'a PseudoLabelContext, record: bool) -> Self {
        Self {
            ctx,
            trace: record.then(Vec::new),
        }
    }

    fn loss(&mut self, lambda: f64) -> f64 {
        let loss = self.ctx.loss_at(lambda);
        self.record(lambda, loss);
        loss
    }

    fn loss_and_slope(&mut self, lambda: f64) -> (f64, f64) {
        match self.ctx.loss_and_derivative(lambda) {
            Ok((l, d)) if l.is_finite() => {
                self.record(lambda, l);
                (l, d)
            }
            _ => {
                self.record(lambda, f64::INFINITY);
                (f64::INFINITY, f64::NAN)
            }
        }
    }

    fn record(&mut self, lambda: f64, loss: f64) {
        if let Some(t) = self.trace.as_mut() {
            t.push(TracePoint { lambda, loss });
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Descent {
    pub lambda: f64,
    pub loss: f64,
    pub accepted: bool,
    pub exceeded: bool,
}

pub(crate) struct DescentLimits {
    pub steps: usize,
    /// Stop as soon as the loss drops below this level.
    pub accept: Option<f64>,
    /// Give up once |λ| exceeds this.
    pub bound: Option<f64>,
    /// Never leave this λ interval.
    pub window: Option<(f64, f64)>,
}

/// Monotone quasi-Newton descent in `t = λ / coe`.
///
/// The curvature comes from the secant of the last two derivatives; without
/// a usable (positive) curvature the step is `-lr·g / max(1, |g|)`. Every
/// step is backtracked until it satisfies the Armijo condition, never crosses
/// λ = 0 and stays inside the window, so accepted losses never increase.
pub(crate) fn descend(
    ev: &mut Evaluator<'_>,
    start: f64,
    limits: &DescentLimits,
    config: &RecoveryConfig,
) -> Descent {
    let coe = config.coe;
    let mut t = start / coe;
    let (mut f, d) = ev.loss_and_slope(coe * t);
    let mut g = coe * d;
    let mut previous: Option<(f64, f64)> = None;
    let mut out = Descent {
        lambda: coe * t,
        loss: f,
        accepted: false,
        exceeded: false,
    };
    for _ in 0..limits.steps {
        if limits.accept.is_some_and(|a| f < a) {
            out.accepted = true;
            break;
        }
        if limits.bound.is_some_and(|b| (coe * t).abs() > b) {
            out.exceeded = true;
            break;
        }
        if !g.is_finite() || g == 0.0 {
            break;
        }
        let curvature = previous
            .map(|(tp, gp)| (g - gp) / (t - tp))
            .filter(|h| *h > 0.0 && h.is_finite());
        let mut step = match curvature {
            Some(h) => -g / h,
            None => -config.lr * g / g.abs().max(1.0),
        };
        let mut next = None;
        for _ in 0..64 {
            let tn = t + step;
            let crosses_zero = tn == 0.0 || tn.signum() != t.signum();
            let outside = limits
                .window
                .is_some_and(|(lo, hi)| coe * tn < lo || coe * tn > hi);
            if crosses_zero || outside {
                step *= 0.5;
                continue;
            }
            let (fn_, dn) = ev.loss_and_slope(coe * tn);
            if fn_ <= f + 1e-4 * g * step {
                next = Some((tn, fn_, coe * dn));
                break;
            }
            step *= 0.5;
        }
        let Some((mut tn, mut fn_, mut gn)) = next else {
            break;
        };
        // slope flipped: a minimum lies between t and tn, and it may sit in a
        // narrow piece the step jumped over; pull back while that helps
        if gn.signum() != g.signum() {
            for _ in 0..32 {
                step *= 0.5;
                let (fh, dh) = ev.loss_and_slope(coe * (t + step));
                if fh >= fn_ {
                    break;
                }
                (tn, fn_, gn) = (t + step, fh, coe * dh);
            }
        }
        previous = Some((t, g));
        t = tn;
        f = fn_;
        g = gn;
        out.lambda = coe * t;
        out.loss = f;
    }
    if limits.accept.is_some_and(|a| f < a) {
        out.accepted = true;
    }
    out
}

/// Polishes an accepted point until the loss stops decreasing.
fn polish(ev: &mut Evaluator<'_>, point: Descent, window: Option<(f64, f64)>, config: &RecoveryConfig) -> Descent {
    let refined = descend(
        ev,
        point.lambda,
        &DescentLimits {
            steps: 100,
            accept: None,
            bound: None,
            window,
        },
        config,
    );
    if refined.loss <= point.loss {
        Descent {
            accepted: point.accepted,
            ..refined
        }
    } else {
        point
    }
}

/// Gradient-based search: `iteration / 2` steps from `+initial`, then the
/// remaining budget from `-initial`.
pub fn search_gradient(ctx: &PseudoLabelContext, config: &RecoveryConfig) -> RecoveryResult {
    let mut ev = Evaluator::new(ctx, config.record_trace);
    let accept = ctx.acceptance_threshold(config.noise_tolerance);
    let half = config.iteration / 2;
    let sides = [(config.initial, half), (-config.initial, config.iteration - half)];
    let mut best: Option<Descent> = None;
    let mut exceeded = false;
    for (start, steps) in sides {
        let run = descend(
            &mut ev,
            start,
            &DescentLimits {
                steps,
                accept: Some(accept),
                bound: Some(config.bound),
                window: None,
            },
            config,
        );
        if run.accepted {
            let run = if config.refine {
                polish(&mut ev, run, Some((-config.bound, config.bound)), config)
            } else {
                run
            };
            return ctx_result(ctx, RecoveryStatus::Success, Some(run.lambda), ev.trace);
        }
        exceeded |= run.exceeded;
        if best.is_none_or(|b| run.loss < b.loss) {
            best = Some(run);
        }
    }
    let status = if exceeded {
        RecoveryStatus::BoundExceeded
    } else {
        RecoveryStatus::Failed
    };
    ctx_result(ctx, status, best.map(|b| b.lambda), ev.trace)
}

/// One particle swarm run over `[lo, hi]`; returns the best point.
fn swarm(ev: &mut Evaluator<'_>, lo: f64, hi: f64, config: &RecoveryConfig, rng: &mut RngHandle) -> Descent {
    let span = hi - lo;
    let n = config.pop;
    let mut x: Vec<f64> = (0..n).map(|_| rng.uniform(lo, hi)).collect();
    let mut v: Vec<f64> = (0..n).map(|_| rng.uniform(-span, span)).collect();
    let mut best_x = x.clone();
    let mut best_f: Vec<f64> = x.iter().map(|&xi| ev.loss(xi)).collect();
    let mut g = (0..n).fold(0, |b, i| if best_f[i] < best_f[b] { i } else { b });
    let (mut gx, mut gf) = (best_x[g], best_f[g]);
    for _ in 0..config.max_iter {
        for i in 0..n {
            let r1 = rng.uniform(0.0, 1.0);
            let r2 = rng.uniform(0.0, 1.0);
            v[i] = config.inertia * v[i]
                + config.cognitive * r1 * (best_x[i] - x[i])
                + config.social * r2 * (gx - x[i]);
            x[i] = (x[i] + v[i]).clamp(lo, hi);
            let f = ev.loss(x[i]);
            if f < best_f[i] {
                best_f[i] = f;
                best_x[i] = x[i];
            }
        }
        g = (0..n).fold(g, |b, i| if best_f[i] < best_f[b] { i } else { b });
        if best_f[g] < gf {
            gx = best_x[g];
            gf = best_f[g];
        }
    }
    Descent {
        lambda: gx,
        loss: gf,
        accepted: false,
        exceeded: false,
    }
}

/// Windowed PSO sweep: windows `[lower - 0.3, upper]` of width `interval`
/// walk from `initial` up to `bound`, each followed by its mirror
/// `[-upper - 0.3, -lower]` when the positive side fails.
pub fn search_pso(ctx: &PseudoLabelContext, config: &RecoveryConfig, rng: &mut RngHandle) -> RecoveryResult {
    let mut ev = Evaluator::new(ctx, config.record_trace);
    let accept = ctx.acceptance_threshold(config.noise_tolerance);
    let mut best: Option<Descent> = None;
    let mut lower = config.initial.abs();
    let mut upper = lower + config.interval;
    while lower < config.bound {
        // the last window is clipped to the bound rather than dropped
        let upper_c = upper.min(config.bound);
        for (lo, hi) in [(lower - 0.3, upper_c), (-upper_c - 0.3, -lower)] {
            let mut found = swarm(&mut ev, lo, hi, config, rng);
            if config.refine && found.loss.is_finite() {
                found = polish(&mut ev, found, Some((lo, hi)), config);
            }
            if found.loss < accept {
                return ctx_result(ctx, RecoveryStatus::Success, Some(found.lambda), ev.trace);
            }
            if best.is_none_or(|b| found.loss < b.loss) {
                best = Some(found);
            }
        }
        lower = upper;
        upper += config.interval;
    }
    ctx_result(ctx, RecoveryStatus::Failed, best.map(|b| b.lambda), ev.trace)
}

pub(crate) fn ctx_result(
    ctx: &PseudoLabelContext,
    status: RecoveryStatus,
    lambda: Option<f64>,
    trace: Option<Vec<TracePoint>>,
) -> RecoveryResult {
    let classes = ctx.class_count();
    let (label, feature, loss) = match lambda.filter(|l| *l != 0.0 && l.is_finite()) {
        Some(l) => (
            ctx.pseudo_label(l).expect("non-zero λ"),
            ctx.feature(l),
            ctx.loss_at(l),
        ),
        None => (
            crate::Tensor::zeros(&[classes]),
            crate::Tensor::zeros(&[ctx.feature_row().len()]),
            f64::INFINITY,
        ),
    };
    RecoveryResult {
        status,
        lambda,
        label,
        feature,
        loss,
        row: Some(ctx.row()),
        candidates: Vec::new(),
        trace,
    }
}
