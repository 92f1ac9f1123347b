//! The impulsive observer: a system copy per detectability window, local
//! estimates of the observable error per mode, and a correction applied at
//! the end of every window.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::linalg::{norm2, Vector};
use crate::modeobs::{design_gain, Gain, GainTarget, ImpulseNoise, ModeObsData};
use crate::simulator::{solve_homogeneous, solve_with_input, InputSolveOptions, SimResult, SwitchedSystem};
use crate::trajectory::PwsTrajectory;
use crate::windowing::{eps_max, mode_table, Budget, Certificate, Uniformity, Window, WindowData};

/// Luenberger accuracy used when the error budget cannot be met and the
/// configuration does not insist on it.
pub const FALLBACK_EPS: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub enum GainPolicy {
    /// Poles per mode index; ignored for modes without a smooth observable part.
    Poles(Vec<Vec<f64>>),
    /// Fixed accuracy of every smooth estimate.
    TargetEps(f64),
    /// Accuracy derived from each window's error budget.
    Budget,
}

#[derive(Clone, Debug, PartialEq)]
pub enum NoiseConfig {
    Off,
    Multiplicative { eps: f64, seed: u64 },
}

impl NoiseConfig {
    pub fn model(&self) -> ImpulseNoise {
        match self {
            NoiseConfig::Off => ImpulseNoise::off(),
            NoiseConfig::Multiplicative { eps, seed } => ImpulseNoise::multiplicative(*eps, *seed),
        }
    }

    pub fn eps(&self) -> f64 {
        match self {
            NoiseConfig::Off => 0.0,
            NoiseConfig::Multiplicative { eps, .. } => *eps,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ObserverConfig {
    pub windows: Vec<(usize, usize)>,
    pub alpha_hat: f64,
    pub gain: GainPolicy,
    pub noise: NoiseConfig,
    pub delay: f64,
    pub xhat0: Vector,
    /// Reject runs whose local accuracies exceed the error budget.
    pub strict_budget: bool,
    pub grid_step: Option<f64>,
}

impl ObserverConfig {
    pub fn new(windows: Vec<(usize, usize)>, xhat0: Vector) -> Self {
        ObserverConfig {
            windows,
            alpha_hat: 0.9,
            gain: GainPolicy::Budget,
            noise: NoiseConfig::Off,
            delay: 0.0,
            xhat0,
            strict_budget: true,
            grid_step: None,
        }
    }
}

/// Consecutive windows covering one period each.
pub fn periodic_windows(sys: &SwitchedSystem) -> Result<Vec<(usize, usize)>> {
    let per = sys
        .periodic_info()
        .ok_or_else(|| Error::Config("periodic windows need a periodic switching signal".into()))?;
    let len = per.cycle.len();
    Ok((0..per.repeats).map(|i| (i * len, (i + 1) * len)).collect())
}

#[derive(Clone, Debug)]
pub struct Correction {
    pub p: usize,
    pub q: usize,
    pub t: f64,
    pub xi: Vector,
    pub xi_left: Vector,
    /// Copy state `xhat(t_q^-)` before and after subtracting `xi`.
    pub before: Vector,
    pub after: Vector,
}

#[derive(Clone, Debug)]
pub struct ErrorEntry {
    pub t: f64,
    /// `xhat(t^-) - x(t^-)` before and after the correction at `t`.
    pub before: Vector,
    pub after: Vector,
    /// Largest sampled `|xhat - x|` inside the preceding window.
    pub peak: f64,
}

#[derive(Clone, Debug)]
pub struct ZhatEntry {
    pub k: usize,
    pub mode: usize,
    pub zhat: Vector,
    pub ideal: Option<Vector>,
}

#[derive(Clone, Debug)]
pub struct WindowReport {
    pub p: usize,
    pub q: usize,
    pub certificate: Certificate,
    pub budget: Option<Budget>,
    /// Guaranteed `eps_k` of every local estimate in the window.
    pub eps: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ObserverRun {
    pub xhat: PwsTrajectory,
    pub yhat: PwsTrajectory,
    pub corrections: Vec<Correction>,
    pub error_log: Vec<ErrorEntry>,
    pub zhat_log: Vec<ZhatEntry>,
    pub reports: Vec<WindowReport>,
    pub warnings: Vec<String>,
}

impl ObserverRun {
    /// `xhat(t_q^-)` after the correction at `t_q`; for other times the
    /// left limit of the copy.
    pub fn corrected_left(&self, t: f64) -> Result<Vector> {
        match self.corrections.iter().find(|c| c.t == t) {
            Some(c) => Ok(c.after.clone()),
            None => self.xhat.eval_left(t),
        }
    }

    pub fn uniformity(&self) -> Uniformity {
        Uniformity::of(&self.reports.iter().map(|r| r.certificate).collect::<Vec<_>>())
    }
}

fn validate(sys: &SwitchedSystem, cfg: &ObserverConfig) -> Result<()> {
    if cfg.windows.is_empty() {
        return Err(Error::Config("no windows".into()));
    }
    if cfg.xhat0.len() != sys.n() {
        return Err(Error::Dimension(format!("xhat0 has {} entries, n = {}", cfg.xhat0.len(), sys.n())));
    }
    let mut expect = 0;
    for &(p, q) in &cfg.windows {
        if p != expect || q <= p {
            return Err(Error::Config(format!("window [{p}, {q}) does not continue at interval {expect}")));
        }
        expect = q;
    }
    if expect != sys.interval_count() {
        return Err(Error::Config(format!(
            "windows end at interval {expect}, switching signal has {}",
            sys.interval_count()
        )));
    }
    if !(cfg.alpha_hat > 0.0 && cfg.alpha_hat < 1.0) {
        return Err(Error::Config(format!("alpha_hat {} outside (0, 1)", cfg.alpha_hat)));
    }
    if !(cfg.delay >= 0.0) {
        return Err(Error::Config(format!("delay {} must be nonnegative", cfg.delay)));
    }
    for &(p, q) in &cfg.windows {
        if cfg.delay >= sys.t(q) - sys.t(p) {
            return Err(Error::Config(format!("delay {} not shorter than window [{p}, {q})", cfg.delay)));
        }
    }
    if let NoiseConfig::Multiplicative { eps, .. } = cfg.noise {
        if !(eps >= 0.0) {
            return Err(Error::Config(format!("noise level {eps} must be nonnegative")));
        }
    }
    Ok(())
}

struct Gains {
    cache: HashMap<(usize, u64, u64), Gain>,
}

impl Gains {
    fn get(&mut self, mode: usize, data: &ModeObsData, target: &GainTarget, tau: f64) -> Result<Gain> {
        let key = match target {
            GainTarget::TargetEps(e) => (mode, tau.to_bits(), e.to_bits()),
            GainTarget::Poles(_) => (mode, tau.to_bits(), u64::MAX),
        };
        if let Some(g) = self.cache.get(&key) {
            return Ok(g.clone());
        }
        let g = design_gain(data, target, tau)?;
        self.cache.insert(key, g.clone());
        Ok(g)
    }
}

fn simulate_copy(
    sys: &SwitchedSystem,
    x0: &Vector,
    u: Option<&PwsTrajectory>,
    a: f64,
    b: f64,
    grid_step: Option<f64>,
) -> Result<SimResult> {
    match u {
        Some(u) if sys.n_u() > 0 => {
            let opts = InputSolveOptions { grid_step, ..Default::default() };
            solve_with_input(sys, x0, u, a, b, &opts)
        }
        _ => solve_homogeneous(sys, x0, a, b),
    }
}

fn peak_error(copy: &PwsTrajectory, truth: &PwsTrajectory, a: f64, b: f64) -> Result<f64> {
    let mut peak = 0.0f64;
    for seg in copy.segments() {
        if seg.end <= a || seg.start >= b {
            continue;
        }
        for j in 0..20 {
            let t = seg.start + (seg.end - seg.start) * j as f64 / 20.0;
            peak = peak.max((seg.eval(t) - truth.eval(t)?).norm());
        }
        peak = peak.max((seg.eval(seg.end) - truth.eval_left(seg.end)?).norm());
    }
    Ok(peak)
}

/// Runs the observer over all configured windows. `truth` enables the error
/// and ideal-estimate logs.
pub fn run(
    sys: &SwitchedSystem,
    u: Option<&PwsTrajectory>,
    y: &PwsTrajectory,
    cfg: &ObserverConfig,
    truth: Option<&PwsTrajectory>,
) -> Result<ObserverRun> {
    validate(sys, cfg)?;
    if y.dim() != sys.n_y() || y.start() > 0.0 || y.end() < sys.horizon() {
        return Err(Error::Config(format!(
            "output signal on [{}, {}) of dim {} does not cover the horizon {} with dim {}",
            y.start(),
            y.end(),
            y.dim(),
            sys.horizon(),
            sys.n_y()
        )));
    }
    let table = mode_table(sys)?;
    let mut warnings: Vec<String> = table.iter().flat_map(|d| d.warnings.clone()).collect();
    for m in sys.modes() {
        warnings.extend(m.dec().warnings.iter().cloned());
    }
    let mut gains = Gains { cache: HashMap::new() };
    let mut noise = cfg.noise.model();
    let noise_eps = cfg.noise.eps();

    let n = sys.n();
    let mut segments = Vec::new();
    let mut impulses = Vec::new();
    let mut ysegments = Vec::new();
    let mut yimpulses = Vec::new();
    let mut corrections = Vec::new();
    let mut error_log = Vec::new();
    let mut zhat_log = Vec::new();
    let mut reports = Vec::new();
    let mut xhat_minus = cfg.xhat0.clone();

    if let Some(x) = truth {
        let e0 = &xhat_minus - x.eval_left(sys.t(cfg.windows[0].0))?;
        error_log.push(ErrorEntry { t: sys.t(cfg.windows[0].0), before: e0.clone(), after: e0, peak: 0.0 });
    }

    for &(p, q) in &cfg.windows {
        let full = WindowData::build(&Window::new(sys, &table, p, q)?)?;
        let used = if cfg.delay > 0.0 {
            WindowData::build(&full.window.truncated(cfg.delay)?)?
        } else {
            full.clone()
        };
        let cert = full.detect_certificate()?;
        let cert_used = if cfg.delay > 0.0 {
            let np = used.chain[0].basis();
            let alpha = norm2(&(full.transition() * np));
            Certificate { alpha, mconst: cert.mconst, detectable: alpha < 1.0 }
        } else {
            cert
        };
        if !cert_used.detectable {
            return Err(Error::NotDetectable { p, q, alpha: cert_used.alpha });
        }

        // local accuracy targets
        let c = used.budget_constant_with(full.transition());
        let budget = eps_max(c, cert_used.alpha, cfg.alpha_hat).map(|e| Budget { c, eps_max: e });
        let budget_note = |detail: String| -> Result<String> {
            if cfg.strict_budget {
                Err(Error::Budget { p, q, detail })
            } else {
                Ok(format!("window [{p}, {q}): {detail}"))
            }
        };
        if budget.is_none() {
            warnings.push(budget_note(format!(
                "alpha_hat {} is not above alpha {:.6}",
                cfg.alpha_hat, cert_used.alpha
            ))?);
        }

        let copy = simulate_copy(sys, &xhat_minus, u, sys.t(p), sys.t(q), cfg.grid_step)?;
        let ywin = y.restrict(sys.t(p), sys.t(q))?;
        let ye = PwsTrajectory::combine(&[(1.0, &copy.y), (-1.0, &ywin)])?;

        let mut zhat = Vec::with_capacity(used.len());
        let mut eps_used = Vec::with_capacity(used.len());
        for i in 0..used.len() {
            let k = p + i;
            let data = &used.window.data[i];
            let (t_k, tau) = (used.window.starts[i], used.window.taus[i]);
            let target = match &cfg.gain {
                GainPolicy::Poles(per_mode) => {
                    let poles = per_mode.get(sys.mode_index(k)).cloned().unwrap_or_default();
                    GainTarget::Poles(poles)
                }
                GainPolicy::TargetEps(e) => GainTarget::TargetEps(*e),
                GainPolicy::Budget => {
                    let need = budget.and_then(|b| data.required_eps_diff(b.eps_max, noise_eps));
                    match need {
                        Some(e) if e.is_finite() => GainTarget::TargetEps(e),
                        Some(_) => GainTarget::TargetEps(FALLBACK_EPS),
                        None => {
                            if budget.is_some() {
                                warnings.push(budget_note(format!(
                                    "impulse noise {noise_eps} alone exceeds the budget at interval {k}"
                                ))?);
                            }
                            GainTarget::TargetEps(FALLBACK_EPS)
                        }
                    }
                }
            };
            let gain = if data.r_diff() == 0 {
                design_gain(data, &target, tau)?
            } else {
                gains.get(sys.mode_index(k), data, &target, tau)?
            };
            let zd = data.estimate_zdiff(&gain, &ye, t_k, t_k + tau, cfg.grid_step)?;
            let zi = data.extract_zimp(&ye.impulse_at(t_k)?, &mut noise)?;
            let z = data.compose_zhat(&zd, &zi)?;
            let eps_k = data.effective_eps(gain.bound, noise_eps);
            if let Some(b) = budget {
                if eps_k > b.eps_max {
                    warnings.push(budget_note(format!(
                        "accuracy {eps_k:.3e} at interval {k} exceeds eps_max {:.3e}",
                        b.eps_max
                    ))?);
                }
            }
            eps_used.push(eps_k);
            let ideal = match truth {
                Some(x) => {
                    let e = if i == 0 { &xhat_minus - x.eval_left(t_k)? } else { copy.x.eval_left(t_k)? - x.eval_left(t_k)? };
                    Some(data.ideal_z(&e))
                }
                None => None,
            };
            zhat_log.push(ZhatEntry { k, mode: sys.mode_index(k), zhat: z.clone(), ideal });
            zhat.push(z);
        }

        let xi_left = used.correction_left(&zhat)?;
        let xi = full.transition() * &xi_left;
        let t_q = sys.t(q);
        let before = copy.final_state();
        let after = &before - &xi;
        if let Some(x) = truth {
            let xt = x.eval_left(t_q)?;
            let peak = peak_error(&copy.x, x, sys.t(p), t_q)?;
            error_log.push(ErrorEntry { t: t_q, before: &before - &xt, after: &after - &xt, peak });
        }
        corrections.push(Correction { p, q, t: t_q, xi, xi_left, before, after: after.clone() });
        reports.push(WindowReport { p, q, certificate: cert_used, budget, eps: eps_used });

        segments.extend(copy.x.segments().iter().cloned());
        impulses.extend(copy.x.impulses().iter().cloned());
        ysegments.extend(copy.y.segments().iter().cloned());
        yimpulses.extend(copy.y.impulses().iter().cloned());
        xhat_minus = after;
    }

    Ok(ObserverRun {
        xhat: PwsTrajectory::new(n, segments, impulses, Some(cfg.xhat0.clone()))?,
        yhat: PwsTrajectory::new(sys.n_y(), ysegments, yimpulses, None)?,
        corrections,
        error_log,
        zhat_log,
        reports,
        warnings,
    })
}

/// [`run`] with the local data of each window taken from `[t_p, t_q - delta)`
/// and the correction propagated over the full window.
pub fn run_delayed(
    sys: &SwitchedSystem,
    u: Option<&PwsTrajectory>,
    y: &PwsTrajectory,
    cfg: &ObserverConfig,
    delta: f64,
    truth: Option<&PwsTrajectory>,
) -> Result<ObserverRun> {
    let mut cfg = cfg.clone();
    cfg.delay = delta;
    run(sys, u, y, &cfg, truth)
}
