//! Command-line front end: `analyze`, `simulate`, `detect` and `observe`
//! on a scenario file.

pub mod csv;
pub mod scenario;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::linalg::{Mat, Vector};
use crate::modeobs::ModeObsData;
use crate::observer;
use crate::simulator::{solve_homogeneous, solve_with_input, InputSolveOptions, SimResult, SwitchedSystem};
use crate::trajectory::PwsTrajectory;
use crate::windowing::{eps_max, mode_table, Uniformity, Window, WindowData};
use scenario::{parse_scenario, Scenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CERTIFICATE: i32 = 2;
pub const EXIT_SCHEMA: i32 = 3;

/// Default output directory when neither the flag nor the scenario sets one.
pub const OUT_DIR_ENV: &str = "SWDAE_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "swdae", version, about = "Detectability analysis and impulsive observers for switched DAEs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Per-mode decomposition and observability report.
    Analyze(Common),
    /// Simulate the plant from x0 and write trajectory CSVs.
    Simulate(Common),
    /// Detectability certificates for every window.
    Detect(Common),
    /// Run the observer against a simulated plant.
    Observe(Common),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Scenario JSON file.
    pub scenario: PathBuf,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub grid_step: Option<f64>,
    /// Overrides the noise seed of the scenario.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of repetitions of a periodic switching cycle.
    #[arg(long)]
    pub horizon: Option<usize>,
}

#[derive(Debug)]
enum Failure {
    Schema(Vec<String>),
    Certificate(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NotDetectable { .. } | Error::Budget { .. } => Failure::Certificate(e.to_string()),
            Error::Config(_) | Error::Switching(_) => Failure::Schema(vec![e.to_string()]),
            _ => Failure::Other(e.to_string()),
        }
    }
}

type Outcome = std::result::Result<i32, Failure>;

pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_OTHER } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Analyze(c) => load(c).and_then(|(s, sys, dir)| analyze(&s, &sys, &dir)),
        Command::Simulate(c) => load(c).and_then(|(s, sys, dir)| simulate(&s, &sys, &dir, step(c, &s))),
        Command::Detect(c) => load(c).and_then(|(s, sys, dir)| detect(&s, &sys, &dir)),
        Command::Observe(c) => load(c).and_then(|(s, sys, dir)| observe(&s, &sys, &dir, step(c, &s))),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Schema(v)) => {
            for line in v {
                eprintln!("schema error: {line}");
            }
            EXIT_SCHEMA
        }
        Err(Failure::Certificate(m)) => {
            eprintln!("certificate failure: {m}");
            EXIT_CERTIFICATE
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            EXIT_OTHER
        }
    }
}

fn step(c: &Common, s: &Scenario) -> f64 {
    c.grid_step.unwrap_or(s.output.grid_step)
}

fn load(c: &Common) -> std::result::Result<(Scenario, SwitchedSystem, PathBuf), Failure> {
    let text = std::fs::read_to_string(&c.scenario)
        .map_err(|e| Failure::Other(format!("{}: {e}", c.scenario.display())))?;
    let mut s = parse_scenario(&text).map_err(|v| Failure::Schema(v.iter().map(|x| x.to_string()).collect()))?;
    if let Some(r) = c.horizon {
        s.with_repeats(r);
    }
    if let Some(seed) = c.seed {
        s.with_seed(seed);
    }
    if let Some(g) = c.grid_step {
        s.output.grid_step = g;
    }
    let v = s.violations();
    if !v.is_empty() {
        return Err(Failure::Schema(v.iter().map(|x| x.to_string()).collect()));
    }
    let sys = s.system()?;
    let dir = c
        .out_dir
        .clone()
        .or_else(|| s.output.dir.clone().map(PathBuf::from))
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok((s, sys, dir))
}

fn clean(v: f64) -> f64 {
    if v.abs() < 1e-13 {
        0.0
    } else {
        v
    }
}

fn matrix_block(out: &mut String, label: &str, m: &Mat) {
    let _ = writeln!(out, "  {label} ({}x{}):", m.nrows(), m.ncols());
    for r in m.row_iter() {
        let cells: Vec<String> = r.iter().map(|v| format!("{:>10.6}", clean(*v))).collect();
        let _ = writeln!(out, "    [{}]", cells.join(" "));
    }
}

fn analyze(s: &Scenario, sys: &SwitchedSystem, dir: &Path) -> Outcome {
    let mut out = String::new();
    let _ = writeln!(out, "scenario {} (n = {}, u = {}, y = {})", s.name, sys.n(), sys.n_u(), sys.n_y());
    for (i, mode) in sys.modes().iter().enumerate() {
        let d = ModeObsData::build(mode)?;
        let dec = mode.dec();
        let _ = writeln!(
            out,
            "mode {i} ({}): n1 = {}, nilpotency index = {}, dim W = {}, r = {} (diff {}, imp {})",
            mode.name,
            dec.qwf.n1,
            dec.qwf.nilpotency_index,
            d.w.dim(),
            d.r(),
            d.r_diff(),
            d.r_imp()
        );
        matrix_block(&mut out, "Pi", &dec.pi);
        matrix_block(&mut out, "Adiff", &dec.adiff);
        matrix_block(&mut out, "Eimp", &dec.eimp);
        matrix_block(&mut out, "Cdiff", &d.cdiff);
        matrix_block(&mut out, "Odiff", &d.odiff);
        matrix_block(&mut out, "Oimp", &d.oimp);
        for w in dec.warnings.iter().chain(&d.warnings) {
            let _ = writeln!(out, "  warning: {w}");
        }
    }
    print!("{out}");
    csv::write(dir, "analyze.txt", &out)?;
    Ok(EXIT_OK)
}

fn plant(s: &Scenario, sys: &SwitchedSystem, x0: &Vector, step: f64) -> crate::Result<(SimResult, Option<PwsTrajectory>)> {
    if sys.n_u() == 0 {
        return Ok((solve_homogeneous(sys, x0, 0.0, sys.horizon())?, None));
    }
    let u = PwsTrajectory::constant(0.0, sys.horizon(), s.input())?;
    let opts = InputSolveOptions { grid_step: Some(step), ..Default::default() };
    Ok((solve_with_input(sys, x0, &u, 0.0, sys.horizon(), &opts)?, Some(u)))
}

fn simulate(s: &Scenario, sys: &SwitchedSystem, dir: &Path, step: f64) -> Outcome {
    let (sim, _) = plant(s, sys, &s.x0(), step)?;
    csv::write(dir, "x.csv", &csv::trajectory_csv(&sim.x, "x", step))?;
    csv::write(dir, "y.csv", &csv::trajectory_csv(&sim.y, "y", step))?;
    csv::write(dir, "x_impulses.csv", &csv::impulses_csv(&sim.x))?;
    csv::write(dir, "y_impulses.csv", &csv::impulses_csv(&sim.y))?;
    println!(
        "simulated {} switching intervals on [0, {}); outputs in {}",
        sys.interval_count(),
        sys.horizon(),
        dir.display()
    );
    Ok(EXIT_OK)
}

fn detect(s: &Scenario, sys: &SwitchedSystem, dir: &Path) -> Outcome {
    let cfg = s.observer_config(sys)?;
    let table = mode_table(sys)?;
    let mut rows = String::from("p,q,t_p,t_q,alpha,mconst,c,eps_max,detectable\n");
    let mut certs = Vec::new();
    println!("{:>5} {:>5} {:>10} {:>10} {:>10} {:>10} {:>10}", "p", "q", "alpha", "Mconst", "c", "eps_max", "ok");
    for &(p, q) in &cfg.windows {
        let wd = WindowData::build(&Window::new(sys, &table, p, q)?)?;
        let cert = wd.detect_certificate()?;
        let c = wd.budget_constant();
        let em = eps_max(c, cert.alpha, cfg.alpha_hat).unwrap_or(f64::NAN);
        println!(
            "{p:>5} {q:>5} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10}",
            cert.alpha, cert.mconst, c, em, cert.detectable
        );
        let _ = writeln!(
            rows,
            "{p},{q},{},{},{},{},{},{},{}",
            csv::fmt_f(sys.t(p)),
            csv::fmt_f(sys.t(q)),
            csv::fmt_f(cert.alpha),
            csv::fmt_f(cert.mconst),
            csv::fmt_f(c),
            csv::fmt_f(em),
            cert.detectable
        );
        certs.push(cert);
    }
    csv::write(dir, "detect.csv", &rows)?;
    let u = Uniformity::of(&certs);
    println!("alpha* = {:.6}, M* = {:.6}", u.alpha_sup, u.mconst_sup);
    if certs.iter().all(|c| c.detectable) {
        Ok(EXIT_OK)
    } else {
        eprintln!("certificate failure: some window has alpha >= 1");
        Ok(EXIT_CERTIFICATE)
    }
}

fn observe(s: &Scenario, sys: &SwitchedSystem, dir: &Path, step: f64) -> Outcome {
    let cfg = s.observer_config(sys)?;
    let (sim, u) = plant(s, sys, &s.x0(), step)?;
    let run = observer::run(sys, u.as_ref(), &sim.y, &cfg, Some(&sim.x))?;
    for w in &run.warnings {
        eprintln!("warning: {w}");
    }
    csv::write(dir, "x.csv", &csv::trajectory_csv(&sim.x, "x", step))?;
    csv::write(dir, "xhat.csv", &csv::trajectory_csv(&run.xhat, "xhat", step))?;
    csv::write(dir, "xhat_impulses.csv", &csv::impulses_csv(&run.xhat))?;
    let mut corr = String::from("t,xi_norm,xi_left_norm\n");
    for c in &run.corrections {
        let _ = writeln!(corr, "{},{},{}", csv::fmt_f(c.t), csv::fmt_f(c.xi.norm()), csv::fmt_f(c.xi_left.norm()));
    }
    csv::write(dir, "corrections.csv", &corr)?;
    let mut err = csv::header("t,before_norm,after_norm,peak", "e", sys.n());
    err.push('\n');
    for e in &run.error_log {
        let mut line = format!(
            "{},{},{},{}",
            csv::fmt_f(e.t),
            csv::fmt_f(e.before.norm()),
            csv::fmt_f(e.after.norm()),
            csv::fmt_f(e.peak)
        );
        for v in e.after.iter() {
            line.push(',');
            line.push_str(&csv::fmt_f(*v));
        }
        err.push_str(&line);
        err.push('\n');
    }
    csv::write(dir, "errors.csv", &err)?;
    let first = run.error_log.first().map(|e| e.after.norm()).unwrap_or(0.0);
    let last = run.error_log.last().map(|e| e.after.norm()).unwrap_or(0.0);
    println!(
        "observer over {} windows: |e| {:.6e} -> {:.6e}; outputs in {}",
        run.corrections.len(),
        first,
        last,
        dir.display()
    );
    Ok(EXIT_OK)
}
