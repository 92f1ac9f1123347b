//! Scenario files: JSON description of a switched system, its switching
//! signal, detectability windows and observer options.

use serde::{Deserialize, Serialize};

use crate::linalg::{mat_from_rows, Mat, Vector};
use crate::observer::{periodic_windows, GainPolicy, NoiseConfig, ObserverConfig};
use crate::simulator::{Mode, SwitchedSystem};

pub type Rows = Vec<Vec<f64>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub n: usize,
    #[serde(default)]
    pub u: usize,
    pub y: usize,
    pub modes: Vec<ModeSpec>,
    pub switching: Switching,
    #[serde(default = "default_windows")]
    pub windows: Windows,
    pub x0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xhat0: Option<Vec<f64>>,
    /// Constant plant input; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<Vec<f64>>,
    #[serde(default)]
    pub observer: ObserverSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(rename = "E")]
    pub e: Rows,
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Rows>,
    #[serde(rename = "C")]
    pub c: Rows,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Rows>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Switching {
    /// `times[k]` ends interval `k`.
    Explicit { modes: Vec<usize>, times: Vec<f64> },
    Periodic { cycle: Vec<(usize, f64)>, repeats: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Windows {
    Named(String),
    List(Vec<(usize, usize)>),
}

fn default_windows() -> Windows {
    Windows::Named("periodic".into())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainSpec {
    Budget,
    Poles(Vec<Vec<f64>>),
    TargetEps(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    Off,
    Multiplicative { eps: f64, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverSpec {
    #[serde(default = "default_alpha_hat")]
    pub alpha_hat: f64,
    #[serde(default = "default_gain")]
    pub gain: GainSpec,
    #[serde(default = "default_noise")]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub delay: f64,
    #[serde(default = "default_true")]
    pub strict_budget: bool,
}

fn default_alpha_hat() -> f64 {
    0.9
}

fn default_gain() -> GainSpec {
    GainSpec::Budget
}

fn default_noise() -> NoiseSpec {
    NoiseSpec::Off
}

fn default_true() -> bool {
    true
}

impl Default for ObserverSpec {
    fn default() -> Self {
        ObserverSpec {
            alpha_hat: default_alpha_hat(),
            gain: default_gain(),
            noise: default_noise(),
            delay: 0.0,
            strict_budget: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_grid_step")]
    pub grid_step: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

fn default_grid_step() -> f64 {
    0.01
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { grid_step: default_grid_step(), dir: None }
    }
}

/// One schema problem, named by the path of the offending field.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario, Vec<Violation>> {
    let sc: Scenario = serde_json::from_str(text).map_err(|e| {
        vec![Violation {
            path: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        }]
    })?;
    let v = sc.violations();
    if v.is_empty() {
        Ok(sc)
    } else {
        Err(v)
    }
}

fn check_shape(out: &mut Vec<Violation>, path: String, m: &Rows, rows: usize, cols: usize) {
    if m.len() != rows {
        out.push(Violation { path, message: format!("expected {rows} rows, found {}", m.len()) });
        return;
    }
    for (i, r) in m.iter().enumerate() {
        if r.len() != cols {
            out.push(Violation {
                path: format!("{path}[{i}]"),
                message: format!("expected {cols} entries, found {}", r.len()),
            });
        } else if r.iter().any(|v| !v.is_finite()) {
            out.push(Violation { path: format!("{path}[{i}]"), message: "non-finite entry".into() });
        }
    }
}

fn check_vec(out: &mut Vec<Violation>, path: &str, v: &[f64], len: usize) {
    if v.len() != len {
        out.push(Violation { path: path.into(), message: format!("expected {len} entries, found {}", v.len()) });
    } else if v.iter().any(|x| !x.is_finite()) {
        out.push(Violation { path: path.into(), message: "non-finite entry".into() });
    }
}

impl Scenario {
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let (n, nu, ny) = (self.n, self.u, self.y);
        if n == 0 {
            out.push(Violation { path: "n".into(), message: "state dimension must be positive".into() });
        }
        if self.modes.is_empty() {
            out.push(Violation { path: "modes".into(), message: "at least one mode is required".into() });
        }
        for (i, m) in self.modes.iter().enumerate() {
            check_shape(&mut out, format!("modes[{i}].E"), &m.e, n, n);
            check_shape(&mut out, format!("modes[{i}].A"), &m.a, n, n);
            check_shape(&mut out, format!("modes[{i}].C"), &m.c, ny, n);
            match &m.b {
                Some(b) => check_shape(&mut out, format!("modes[{i}].B"), b, n, nu),
                None if nu > 0 => out.push(Violation {
                    path: format!("modes[{i}].B"),
                    message: format!("required when u = {nu}"),
                }),
                None => {}
            }
            if let Some(d) = &m.d {
                check_shape(&mut out, format!("modes[{i}].D"), d, ny, nu);
            }
        }
        let nm = self.modes.len();
        let intervals;
        match &self.switching {
            Switching::Explicit { modes, times } => {
                intervals = modes.len();
                if modes.is_empty() {
                    out.push(Violation { path: "switching.explicit.modes".into(), message: "empty".into() });
                }
                if modes.len() != times.len() {
                    out.push(Violation {
                        path: "switching.explicit.times".into(),
                        message: format!("{} times for {} modes", times.len(), modes.len()),
                    });
                }
                for (k, m) in modes.iter().enumerate() {
                    if *m >= nm {
                        out.push(Violation {
                            path: format!("switching.explicit.modes[{k}]"),
                            message: format!("unknown mode {m}"),
                        });
                    }
                }
                let mut prev = 0.0;
                for (k, t) in times.iter().enumerate() {
                    if !(t.is_finite() && *t > prev) {
                        out.push(Violation {
                            path: format!("switching.explicit.times[{k}]"),
                            message: format!("{t} does not exceed {prev}"),
                        });
                    }
                    prev = *t;
                }
            }
            Switching::Periodic { cycle, repeats } => {
                intervals = cycle.len() * repeats;
                if cycle.is_empty() {
                    out.push(Violation { path: "switching.periodic.cycle".into(), message: "empty".into() });
                }
                if *repeats == 0 {
                    out.push(Violation { path: "switching.periodic.repeats".into(), message: "must be positive".into() });
                }
                for (k, (m, d)) in cycle.iter().enumerate() {
                    if *m >= nm {
                        out.push(Violation {
                            path: format!("switching.periodic.cycle[{k}]"),
                            message: format!("unknown mode {m}"),
                        });
                    }
                    if !(d.is_finite() && *d > 0.0) {
                        out.push(Violation {
                            path: format!("switching.periodic.cycle[{k}]"),
                            message: format!("duration {d} must be positive"),
                        });
                    }
                }
            }
        }
        match &self.windows {
            Windows::Named(s) if s == "periodic" => {
                if !matches!(self.switching, Switching::Periodic { .. }) {
                    out.push(Violation {
                        path: "windows".into(),
                        message: "\"periodic\" requires periodic switching".into(),
                    });
                }
            }
            Windows::Named(s) => out.push(Violation { path: "windows".into(), message: format!("unknown value {s:?}") }),
            Windows::List(list) => {
                let mut expect = 0;
                for (i, (p, q)) in list.iter().enumerate() {
                    if *p != expect || q <= p {
                        out.push(Violation {
                            path: format!("windows[{i}]"),
                            message: format!("[{p}, {q}) does not continue at interval {expect}"),
                        });
                    }
                    expect = *q;
                }
                if expect != intervals {
                    out.push(Violation {
                        path: "windows".into(),
                        message: format!("windows end at interval {expect}, switching has {intervals}"),
                    });
                }
            }
        }
        check_vec(&mut out, "x0", &self.x0, n);
        if let Some(x) = &self.xhat0 {
            check_vec(&mut out, "xhat0", x, n);
        }
        if let Some(u) = &self.input {
            check_vec(&mut out, "input", u, nu);
        }
        let o = &self.observer;
        if !(o.alpha_hat > 0.0 && o.alpha_hat < 1.0) {
            out.push(Violation { path: "observer.alpha_hat".into(), message: "must lie in (0, 1)".into() });
        }
        if !(o.delay >= 0.0 && o.delay.is_finite()) {
            out.push(Violation { path: "observer.delay".into(), message: "must be nonnegative".into() });
        }
        match &o.gain {
            GainSpec::TargetEps(e) if !(*e > 0.0) => {
                out.push(Violation { path: "observer.gain.target_eps".into(), message: "must be positive".into() })
            }
            GainSpec::Poles(p) => {
                if p.len() != nm {
                    out.push(Violation {
                        path: "observer.gain.poles".into(),
                        message: format!("one pole list per mode expected, found {}", p.len()),
                    });
                }
                for (i, list) in p.iter().enumerate() {
                    if list.iter().any(|v| !(*v < 0.0)) {
                        out.push(Violation {
                            path: format!("observer.gain.poles[{i}]"),
                            message: "poles must be negative".into(),
                        });
                    }
                }
            }
            _ => {}
        }
        if let NoiseSpec::Multiplicative { eps, .. } = o.noise {
            if !(eps >= 0.0 && eps.is_finite()) {
                out.push(Violation { path: "observer.noise.eps".into(), message: "must be nonnegative".into() });
            }
        }
        if !(self.output.grid_step > 0.0 && self.output.grid_step.is_finite()) {
            out.push(Violation { path: "output.grid_step".into(), message: "must be positive".into() });
        }
        out
    }

    /// Overrides the number of repetitions of a periodic switching signal.
    pub fn with_repeats(&mut self, repeats: usize) {
        if let Switching::Periodic { repeats: r, .. } = &mut self.switching {
            *r = repeats;
        }
    }

    pub fn with_seed(&mut self, seed: u64) {
        if let NoiseSpec::Multiplicative { seed: s, .. } = &mut self.observer.noise {
            *s = seed;
        }
    }

    pub fn system(&self) -> crate::Result<SwitchedSystem> {
        let (n, nu, ny) = (self.n, self.u, self.y);
        let modes = self
            .modes
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let name = m.name.clone().unwrap_or_else(|| format!("mode{i}"));
                let b = match &m.b {
                    Some(b) => mat_from_rows(b, nu)?,
                    None => Mat::zeros(n, nu),
                };
                let d = match &m.d {
                    Some(d) => mat_from_rows(d, nu)?,
                    None => Mat::zeros(ny, nu),
                };
                Mode::new(name, mat_from_rows(&m.e, n)?, mat_from_rows(&m.a, n)?, b, mat_from_rows(&m.c, n)?, d)
            })
            .collect::<crate::Result<Vec<_>>>()?;
        match &self.switching {
            Switching::Explicit { modes: s, times } => SwitchedSystem::new(modes, s.clone(), times.clone()),
            Switching::Periodic { cycle, repeats } => SwitchedSystem::periodic(modes, cycle.clone(), *repeats),
        }
    }

    pub fn x0(&self) -> Vector {
        Vector::from_vec(self.x0.clone())
    }

    pub fn xhat0(&self) -> Vector {
        self.xhat0.clone().map(Vector::from_vec).unwrap_or_else(|| Vector::zeros(self.n))
    }

    pub fn input(&self) -> Vector {
        self.input.clone().map(Vector::from_vec).unwrap_or_else(|| Vector::zeros(self.u))
    }

    pub fn observer_config(&self, sys: &SwitchedSystem) -> crate::Result<ObserverConfig> {
        let windows = match &self.windows {
            Windows::List(w) => w.clone(),
            Windows::Named(_) => periodic_windows(sys)?,
        };
        let o = &self.observer;
        let mut cfg = ObserverConfig::new(windows, self.xhat0());
        cfg.alpha_hat = o.alpha_hat;
        cfg.delay = o.delay;
        cfg.strict_budget = o.strict_budget;
        cfg.grid_step = Some(self.output.grid_step);
        cfg.gain = match &o.gain {
            GainSpec::Budget => GainPolicy::Budget,
            GainSpec::Poles(p) => GainPolicy::Poles(p.clone()),
            GainSpec::TargetEps(e) => GainPolicy::TargetEps(*e),
        };
        cfg.noise = match o.noise {
            NoiseSpec::Off => NoiseConfig::Off,
            NoiseSpec::Multiplicative { eps, seed } => NoiseConfig::Multiplicative { eps, seed },
        };
        Ok(cfg)
    }
}
