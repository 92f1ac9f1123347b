//! Distributional solutions of switched DAEs `E_k x' = A_k x + B_k u`,
//! `y = C_k x + D_k u`.
//!
//! At the start of every mode interval the state jumps by the consistency
//! projector, Dirac impulses are read off `E^imp`, and between switches the
//! state follows `exp(A^diff t)`. Homogeneous solutions are stored in closed
//! form; input-driven solutions are sampled.

use crate::daepair::{decompose, MatrixPair, PairDecomposition};
use crate::error::{Error, Result};
use crate::linalg::{expm, Mat, Vector};
use crate::trajectory::{ImpulseRecord, PwsTrajectory, Segment};

#[derive(Clone, Debug)]
pub struct Mode {
    pub name: String,
    pub e: Mat,
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
    dec: PairDecomposition,
}

impl Mode {
    pub fn new(name: impl Into<String>, e: Mat, a: Mat, b: Mat, c: Mat, d: Mat) -> Result<Self> {
        let n = e.nrows();
        if b.nrows() != n || c.ncols() != n || d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(Error::Dimension(format!(
                "mode matrices: E {:?}, B {:?}, C {:?}, D {:?}",
                e.shape(),
                b.shape(),
                c.shape(),
                d.shape()
            )));
        }
        let dec = decompose(&MatrixPair::new(e.clone(), a.clone())?)?;
        Ok(Mode { name: name.into(), e, a, b, c, d, dec })
    }

    /// Mode without inputs.
    pub fn autonomous(name: impl Into<String>, e: Mat, a: Mat, c: Mat) -> Result<Self> {
        let n = e.nrows();
        let ny = c.nrows();
        Mode::new(name, e, a, Mat::zeros(n, 0), c, Mat::zeros(ny, 0))
    }

    pub fn n(&self) -> usize {
        self.e.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_y(&self) -> usize {
        self.c.nrows()
    }

    pub fn dec(&self) -> &PairDecomposition {
        &self.dec
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Periodic {
    pub cycle: Vec<(usize, f64)>,
    pub repeats: usize,
}

/// Modes plus a known switching signal: interval `k` is `[t_k, t_{k+1})`
/// with mode `schedule[k]`, and `t_0 = 0`.
#[derive(Clone, Debug)]
pub struct SwitchedSystem {
    modes: Vec<Mode>,
    schedule: Vec<usize>,
    times: Vec<f64>,
    periodic: Option<Periodic>,
}

impl SwitchedSystem {
    /// `ends[k]` is the end of interval `k`.
    pub fn new(modes: Vec<Mode>, schedule: Vec<usize>, ends: Vec<f64>) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::Switching("no modes".into()));
        }
        let (n, nu, ny) = (modes[0].n(), modes[0].n_u(), modes[0].n_y());
        if modes.iter().any(|m| m.n() != n || m.n_u() != nu || m.n_y() != ny) {
            return Err(Error::Dimension("modes disagree on n, u or y dimensions".into()));
        }
        if schedule.is_empty() || schedule.len() != ends.len() {
            return Err(Error::Switching(format!(
                "{} scheduled modes but {} interval ends",
                schedule.len(),
                ends.len()
            )));
        }
        if let Some(bad) = schedule.iter().find(|&&m| m >= modes.len()) {
            return Err(Error::Switching(format!("unknown mode index {bad}")));
        }
        let mut times = Vec::with_capacity(ends.len() + 1);
        times.push(0.0);
        for &t in &ends {
            let prev = *times.last().unwrap();
            if !(t.is_finite() && t > prev) {
                return Err(Error::Switching(format!(
                    "switching times must increase strictly ({t} after {prev})"
                )));
            }
            times.push(t);
        }
        Ok(SwitchedSystem { modes, schedule, times, periodic: None })
    }

    pub fn periodic(modes: Vec<Mode>, cycle: Vec<(usize, f64)>, repeats: usize) -> Result<Self> {
        if cycle.is_empty() || repeats == 0 {
            return Err(Error::Switching("empty periodic cycle".into()));
        }
        let mut schedule = Vec::new();
        let mut ends = Vec::new();
        let mut t = 0.0;
        for _ in 0..repeats {
            for &(m, dur) in &cycle {
                if !(dur > 0.0) {
                    return Err(Error::Switching(format!("non-positive duration {dur}")));
                }
                t += dur;
                schedule.push(m);
                ends.push(t);
            }
        }
        let mut sys = SwitchedSystem::new(modes, schedule, ends)?;
        sys.periodic = Some(Periodic { cycle, repeats });
        Ok(sys)
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn schedule(&self) -> &[usize] {
        &self.schedule
    }

    pub fn periodic_info(&self) -> Option<&Periodic> {
        self.periodic.as_ref()
    }

    pub fn n(&self) -> usize {
        self.modes[0].n()
    }

    pub fn n_u(&self) -> usize {
        self.modes[0].n_u()
    }

    pub fn n_y(&self) -> usize {
        self.modes[0].n_y()
    }

    pub fn interval_count(&self) -> usize {
        self.schedule.len()
    }

    /// Switching time `t_k`, `k = 0..=interval_count()`.
    pub fn t(&self, k: usize) -> f64 {
        self.times[k]
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn tau(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn mode_index(&self, k: usize) -> usize {
        self.schedule[k]
    }

    pub fn mode(&self, k: usize) -> &Mode {
        &self.modes[self.schedule[k]]
    }

    /// Interval `k` with `t_k <= t < t_{k+1}`.
    pub fn interval_at(&self, t: f64) -> Option<usize> {
        if t < 0.0 || t >= self.horizon() {
            return None;
        }
        Some(self.times.partition_point(|x| *x <= t) - 1)
    }
}

#[derive(Clone, Debug)]
pub struct SimResult {
    pub x: PwsTrajectory,
    pub y: PwsTrajectory,
}

impl SimResult {
    /// `x(b^-)` at the end of the simulated window.
    pub fn final_state(&self) -> Vector {
        self.x.eval_left(self.x.end()).expect("end of own domain")
    }
}

fn check_window(sys: &SwitchedSystem, x0: &Vector, a: f64, b: f64) -> Result<usize> {
    if !(a < b) || a < 0.0 || b > sys.horizon() {
        return Err(Error::InvalidInterval(a, b));
    }
    if x0.len() != sys.n() {
        return Err(Error::Dimension(format!("initial state has {} entries, n = {}", x0.len(), sys.n())));
    }
    Ok(sys.interval_at(a).expect("a inside horizon"))
}

/// Pieces `(k, start, end)` of the window `[a, b)`.
fn pieces(sys: &SwitchedSystem, first: usize, a: f64, b: f64) -> Vec<(usize, f64, f64)> {
    let mut out = Vec::new();
    let mut k = first;
    while k < sys.interval_count() && sys.t(k) < b {
        out.push((k, sys.t(k).max(a), sys.t(k + 1).min(b)));
        k += 1;
    }
    out
}

fn output_impulse(c: &Mat, t: f64, state: &[Vector]) -> ImpulseRecord {
    ImpulseRecord::new(t, c.nrows(), state.iter().map(|v| c * v).collect())
}

/// Exact homogeneous solution on `[a, b)` from `x(a^-) = x0`.
pub fn solve_homogeneous(sys: &SwitchedSystem, x0: &Vector, a: f64, b: f64) -> Result<SimResult> {
    let first = check_window(sys, x0, a, b)?;
    let (n, ny) = (sys.n(), sys.n_y());
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ximp = Vec::new();
    let mut yimp = Vec::new();
    let mut x_minus = x0.clone();
    for (k, s, e) in pieces(sys, first, a, b) {
        let mode = sys.mode(k);
        let dec = mode.dec();
        let x_plus = &dec.pi * &x_minus;
        let coeffs = dec.impulse_coefficients(&x_minus, &x_plus);
        yimp.push(output_impulse(&mode.c, s, &coeffs));
        ximp.push(ImpulseRecord::new(s, n, coeffs));
        xs.push(Segment::flow(s, e, dec.adiff.clone(), Mat::identity(n, n), s, x_plus.clone()));
        ys.push(Segment::flow(s, e, dec.adiff.clone(), mode.c.clone(), s, x_plus.clone()));
        x_minus = expm(&dec.adiff, e - s)? * x_plus;
    }
    Ok(SimResult {
        x: PwsTrajectory::new(n, xs, ximp, Some(x0.clone()))?,
        y: PwsTrajectory::new(ny, ys, yimp, None)?,
    })
}

/// Options for [`solve_with_input`].
#[derive(Clone, Debug)]
pub struct InputSolveOptions {
    /// Output grid step; `None` means `tau / 200` per mode interval.
    pub grid_step: Option<f64>,
    pub rtol: f64,
    pub atol: f64,
    pub residual_limit: f64,
}

impl Default for InputSolveOptions {
    fn default() -> Self {
        InputSolveOptions { grid_step: None, rtol: 1e-11, atol: 1e-13, residual_limit: 1e-6 }
    }
}

fn input_derivative(u: &PwsTrajectory, t: f64, order: usize, left: bool) -> Result<Vector> {
    let seg = if left { u.segment_left(t)? } else { u.segment_right(t)? };
    Ok(seg.derivative(t, order))
}

// Dormand-Prince 5(4) coefficients.
const DP_C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Adaptive Dormand-Prince integration from `t0` to `t1` landing exactly on `t1`.
fn dopri<F>(f: &F, t0: f64, t1: f64, y0: &Vector, rtol: f64, atol: f64) -> Result<Vector>
where
    F: Fn(f64, &Vector) -> Result<Vector>,
{
    let mut t = t0;
    let mut y = y0.clone();
    if y.is_empty() {
        return Ok(y);
    }
    let mut h = (t1 - t0) / 4.0;
    let mut guard = 0;
    while t < t1 {
        guard += 1;
        if guard > 1_000_000 {
            return Err(Error::Config("adaptive integrator did not converge".into()));
        }
        let last = t + h >= t1;
        let step = if last { t1 - t } else { h };
        let mut k: Vec<Vector> = Vec::with_capacity(7);
        for i in 0..7 {
            let mut yi = y.clone();
            for (j, kj) in k.iter().enumerate() {
                if DP_A[i][j] != 0.0 {
                    yi += kj * (step * DP_A[i][j]);
                }
            }
            k.push(f(t + DP_C[i] * step, &yi)?);
        }
        let mut y_new = y.clone();
        let mut err = Vector::zeros(y.len());
        for i in 0..7 {
            y_new += &k[i] * (step * DP_B[i]);
            err += &k[i] * (step * DP_E[i]);
        }
        let scale = y.abs().sup(&y_new.abs()) * rtol + Vector::from_element(y.len(), atol);
        let ratio = err.component_div(&scale).amax();
        if ratio <= 1.0 {
            t = if last { t1 } else { t + step };
            y = y_new;
        }
        let factor = if ratio == 0.0 { 5.0 } else { (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0) };
        h = step * factor;
    }
    Ok(y)
}

/// Solution driven by an input that is smooth inside every mode interval.
///
/// In quasi-Weierstrass coordinates `x = T (v; w)` the differential part
/// `v' = J v + B1 u` is integrated adaptively and the algebraic part is
/// reconstructed as `w = -sum_j N^j B2 u^(j)`.
pub fn solve_with_input(
    sys: &SwitchedSystem,
    x0: &Vector,
    u: &PwsTrajectory,
    a: f64,
    b: f64,
    opts: &InputSolveOptions,
) -> Result<SimResult> {
    let first = check_window(sys, x0, a, b)?;
    if let Some(r) = u.impulses().first() {
        return Err(Error::ImpulsiveInput(r.time));
    }
    if u.dim() != sys.n_u() {
        return Err(Error::Dimension(format!("input has dim {}, system expects {}", u.dim(), sys.n_u())));
    }
    if u.start() > a || u.end() < b {
        return Err(Error::InvalidInterval(u.start(), u.end()));
    }
    let (n, ny) = (sys.n(), sys.n_y());
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ximp = Vec::new();
    let mut yimp = Vec::new();
    let mut x_minus = x0.clone();
    for (k, s, e) in pieces(sys, first, a, b) {
        let mode = sys.mode(k);
        let dec = mode.dec();
        let q = &dec.qwf;
        let n1 = q.n1;
        let n2 = n - n1;
        let sb = &q.s * &mode.b;
        let b1 = sb.rows(0, n1).into_owned();
        let b2 = sb.rows(n1, n2).into_owned();
        let t_left = q.t.columns(0, n1).into_owned();
        let t_right = q.t.columns(n1, n2).into_owned();
        let t_inv_top = q.t_inv.rows(0, n1).into_owned();
        let nu_idx = q.nilpotency_index;
        let mut npow = Vec::with_capacity(nu_idx);
        let mut p = Mat::identity(n2, n2);
        for _ in 0..nu_idx {
            npow.push(&p * &b2);
            p = &p * &q.nil;
        }
        let left_at = |t: f64| t == e;
        let algebraic = |t: f64, shift: usize| -> Result<Vector> {
            let mut w = Vector::zeros(n2);
            for (j, nb) in npow.iter().enumerate() {
                w -= nb * input_derivative(u, t, j + shift, left_at(t))?;
            }
            Ok(w)
        };
        let rhs = |t: f64, v: &Vector| -> Result<Vector> {
            Ok(&q.j * v + &b1 * input_derivative(u, t, 0, left_at(t))?)
        };

        let step = opts.grid_step.unwrap_or((e - s) / 200.0);
        if !(step > 0.0) {
            return Err(Error::Step(step));
        }
        let mut grid: Vec<f64> = Vec::new();
        let mut tt = s;
        while tt < e - 1e-12 * (e - s) {
            grid.push(tt);
            tt = s + step * grid.len() as f64;
        }
        grid.push(e);
        if grid.len() < 2 {
            grid = vec![s, e];
        }

        let mut v = &t_inv_top * &x_minus;
        let mut values = Vec::with_capacity(grid.len());
        let mut outputs = Vec::with_capacity(grid.len());
        for (i, &t) in grid.iter().enumerate() {
            if i > 0 {
                v = dopri(&rhs, grid[i - 1], t, &v, opts.rtol, opts.atol)?;
            }
            let w = algebraic(t, 0)?;
            let x = &t_left * &v + &t_right * &w;
            let ut = input_derivative(u, t, 0, left_at(t))?;
            // residual of the DAE with the analytic derivative
            let xdot = &t_left * rhs(t, &v)? + &t_right * algebraic(t, 1)?;
            let r = &mode.e * &xdot - &mode.a * &x - &mode.b * &ut;
            let limit = opts.residual_limit * (1.0 + x.norm() + ut.norm());
            if r.norm() > limit {
                return Err(Error::Residual { t, residual: r.norm(), limit });
            }
            outputs.push(&mode.c * &x + &mode.d * &ut);
            values.push(x);
        }
        let coeffs = dec.impulse_coefficients(&x_minus, &values[0]);
        yimp.push(output_impulse(&mode.c, s, &coeffs));
        ximp.push(ImpulseRecord::new(s, n, coeffs));
        x_minus = values.last().unwrap().clone();
        xs.push(Segment::sampled(s, e, grid.clone(), values)?);
        ys.push(Segment::sampled(s, e, grid, outputs)?);
    }
    Ok(SimResult {
        x: PwsTrajectory::new(n, xs, ximp, Some(x0.clone()))?,
        y: PwsTrajectory::new(ny, ys, yimp, None)?,
    })
}

/// Independent reference solution: fixed-step RK4 on the `J` block in
/// quasi-Weierstrass coordinates with the algebraic block held at zero.
pub fn brute_force_oracle(sys: &SwitchedSystem, x0: &Vector, a: f64, b: f64, step: f64) -> Result<SimResult> {
    if !(step > 0.0) {
        return Err(Error::Step(step));
    }
    let first = check_window(sys, x0, a, b)?;
    let (n, ny) = (sys.n(), sys.n_y());
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ximp = Vec::new();
    let mut yimp = Vec::new();
    let mut x_minus = x0.clone();
    for (k, s, e) in pieces(sys, first, a, b) {
        let mode = sys.mode(k);
        let q = &mode.dec().qwf;
        let n1 = q.n1;
        let t_left = q.t.columns(0, n1).into_owned();
        let mut v = q.t_inv.rows(0, n1).into_owned() * &x_minus;
        let mut times = vec![s];
        let mut values = vec![&t_left * &v];
        let mut t = s;
        while t < e {
            let h = step.min(e - t);
            let k1 = &q.j * &v;
            let k2 = &q.j * (&v + &k1 * (h / 2.0));
            let k3 = &q.j * (&v + &k2 * (h / 2.0));
            let k4 = &q.j * (&v + &k3 * h);
            v += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            t = if e - (t + h) < 1e-12 * step { e } else { t + h };
            times.push(t);
            values.push(&t_left * &v);
        }
        let coeffs = mode.dec().impulse_coefficients(&x_minus, &values[0]);
        yimp.push(output_impulse(&mode.c, s, &coeffs));
        ximp.push(ImpulseRecord::new(s, n, coeffs));
        x_minus = values.last().unwrap().clone();
        let outputs = values.iter().map(|x| &mode.c * x).collect();
        xs.push(Segment::sampled(s, e, times.clone(), values)?);
        ys.push(Segment::sampled(s, e, times, outputs)?);
    }
    Ok(SimResult {
        x: PwsTrajectory::new(n, xs, ximp, Some(x0.clone()))?,
        y: PwsTrajectory::new(ny, ys, yimp, None)?,
    })
}
