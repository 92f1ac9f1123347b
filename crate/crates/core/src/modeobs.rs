//! Per-mode observability data and the local estimators for the observable
//! error component: a Luenberger copy for the smooth part and a readout of
//! the Dirac impulse coefficients at the mode's switching time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{expm, hstack, lstsq, norm2, vconcat, vstack, Mat, Vector};
use crate::simulator::Mode;
use crate::subspace::{Subspace, SUBSPACE_RTOL};
use crate::trajectory::{ImpulseRecord, PwsTrajectory};

/// Minimum number of Luenberger integration samples per interval.
pub const MIN_SAMPLES: usize = 20;

/// Largest `h` times the open-loop rate when integrating the Luenberger copy.
const SMOOTH_STEP: f64 = 0.05;

/// Largest `h |S - L R|` per integration step.
const STIFF_STEP: f64 = 20.0;

/// Upper limit on Luenberger integration steps per interval.
pub const MAX_STEPS: usize = 100_000;

/// Degree of the per-step Taylor model of the output mismatch.
const TAYLOR_ORDER: usize = 7;

#[derive(Clone, Debug)]
pub struct ModeObsData {
    pub n: usize,
    pub ny: usize,
    pub c: Mat,
    pub pi: Mat,
    pub adiff: Mat,
    pub eimp: Mat,
    pub cdiff: Mat,
    pub odiff: Mat,
    pub oimp: Mat,
    pub ker_odiff: Subspace,
    pub ker_oimp: Subspace,
    /// Local unobservable space.
    pub w: Subspace,
    pub zmat: Mat,
    pub zdiff: Mat,
    pub zimp: Mat,
    pub uobs: Mat,
    pub sdiff: Mat,
    pub rdiff: Mat,
    pub uimp: Mat,
    pub warnings: Vec<String>,
}

/// Largest `v` with `v` in `K` and `A v` in `K`, iterated to the fixed point
/// (the unobservable subspace of `(C, A)` with `K = ker C`).
fn unobservable(c: &Mat, a: &Mat) -> Result<Subspace> {
    let n = a.nrows();
    let mut k = Subspace::kernel_tol(c, SUBSPACE_RTOL * norm2(c).max(f64::MIN_POSITIVE))?;
    for _ in 0..n {
        if k.is_zero() {
            break;
        }
        let next = k.intersect(&Subspace::preimage(a, &k)?)?;
        if next.dim() == k.dim() {
            break;
        }
        k = next;
    }
    Ok(k)
}

impl ModeObsData {
    pub fn build(mode: &Mode) -> Result<Self> {
        let dec = mode.dec();
        let n = mode.n();
        let ny = mode.n_y();
        let c = mode.c.clone();
        let cdiff = &c * &dec.pi;

        let mut blocks = Vec::with_capacity(n);
        let mut p = cdiff.clone();
        for _ in 0..n {
            blocks.push(p.clone());
            p = &p * &dec.adiff;
        }
        let odiff = vstack(n, &blocks.iter().collect::<Vec<_>>());

        let imp_blocks: Vec<Mat> = dec.eimp_powers.iter().map(|e| &c * e).collect();
        let oimp = vstack(n, &imp_blocks.iter().collect::<Vec<_>>());

        let ker_odiff = unobservable(&cdiff, &dec.adiff)?;
        let scale_c = norm2(&c);
        let scale_e = norm2(&dec.eimp).max(1.0);
        let mut ker_oimp = Subspace::full(n);
        for (j, b) in imp_blocks.iter().enumerate() {
            let tol = SUBSPACE_RTOL * scale_c * scale_e.powi(j as i32 + 1);
            ker_oimp = ker_oimp.intersect(&Subspace::kernel_tol(b, tol.max(f64::MIN_POSITIVE))?)?;
        }
        let w = Subspace::preimage(&dec.pi, &ker_odiff)?.intersect(&ker_oimp)?;

        let zmat = w.complement().basis().clone();
        let zdiff = ker_odiff.complement().basis().clone();
        let zimp = ker_oimp.complement().basis().clone();

        let mut warnings = Vec::new();
        let pz = dec.pi.transpose() * &zdiff;
        let comb = hstack(n, &[&pz, &zimp]);
        let uobs = lstsq(&comb, &zmat);
        let res = (&comb * &uobs - &zmat).amax();
        if res > 1e-9 {
            warnings.push(format!("{}: combination identity residual {res:.2e}", mode.name));
        }
        let sdiff = zdiff.transpose() * &dec.adiff * &zdiff;
        let rdiff = &cdiff * &zdiff;
        let uimp = lstsq(&(-oimp.transpose()), &zimp);
        let res = (-oimp.transpose() * &uimp - &zimp).amax();
        if zimp.ncols() > 0 && res > 1e-9 {
            warnings.push(format!("{}: impulse readout residual {res:.2e}", mode.name));
        }

        Ok(ModeObsData {
            n,
            ny,
            c,
            pi: dec.pi.clone(),
            adiff: dec.adiff.clone(),
            eimp: dec.eimp.clone(),
            cdiff,
            odiff,
            oimp,
            ker_odiff,
            ker_oimp,
            w,
            zmat,
            zdiff,
            zimp,
            uobs,
            sdiff,
            rdiff,
            uimp,
            warnings,
        })
    }

    /// Dimension of the observable component `z_k`.
    pub fn r(&self) -> usize {
        self.zmat.ncols()
    }

    pub fn r_diff(&self) -> usize {
        self.zdiff.ncols()
    }

    pub fn r_imp(&self) -> usize {
        self.zimp.ncols()
    }

    /// `z_k = Z_k^T e(t_k^-)`.
    pub fn ideal_z(&self, e_minus: &Vector) -> Vector {
        self.zmat.transpose() * e_minus
    }

    /// `U^obs^T (zdiff; zimp)`.
    pub fn compose_zhat(&self, zdiff: &Vector, zimp: &Vector) -> Result<Vector> {
        if zdiff.len() != self.r_diff() || zimp.len() != self.r_imp() {
            return Err(Error::Dimension(format!(
                "estimates of length {} and {}, expected {} and {}",
                zdiff.len(),
                zimp.len(),
                self.r_diff(),
                self.r_imp()
            )));
        }
        Ok(self.uobs.transpose() * vconcat(&[zdiff, zimp]))
    }

    /// Impulse readout `U^imp^T eta`, with the noise model applied to the
    /// stacked coefficients first.
    pub fn extract_zimp(&self, eta: &ImpulseRecord, noise: &mut ImpulseNoise) -> Result<Vector> {
        if eta.dim != self.ny {
            return Err(Error::Dimension(format!(
                "impulse record of dimension {}, output dimension is {}",
                eta.dim, self.ny
            )));
        }
        let mut stacked = eta.stacked(self.n.saturating_sub(1))?;
        noise.apply(&mut stacked);
        Ok(self.uimp.transpose() * stacked)
    }

    /// Smooth part: Luenberger copy from zero on `(t_k, t_{k+1})`, then
    /// propagated back by `exp(-S tau)`.
    pub fn estimate_zdiff(
        &self,
        gain: &Gain,
        ye: &PwsTrajectory,
        t_k: f64,
        t_k1: f64,
        grid_step: Option<f64>,
    ) -> Result<Vector> {
        let r = self.r_diff();
        if r == 0 {
            return Ok(Vector::zeros(0));
        }
        if gain.l.shape() != (r, self.ny) {
            return Err(Error::Dimension(format!("gain of shape {:?} for r = {r}", gain.l.shape())));
        }
        if ye.dim() != self.ny {
            return Err(Error::Dimension(format!("output mismatch has dim {}", ye.dim())));
        }
        let tau = t_k1 - t_k;
        if !(tau > 0.0) || ye.start() > t_k || ye.end() < t_k1 {
            return Err(Error::InvalidInterval(t_k, t_k1));
        }
        let closed = &self.sdiff - &gain.l * &self.rdiff;
        let requested = match grid_step {
            Some(h) if h > 0.0 => (tau / h).round() as usize,
            Some(h) => return Err(Error::Step(h)),
            None => 200,
        };
        if requested < MIN_SAMPLES {
            return Err(Error::CoarseGrid(requested, MIN_SAMPLES));
        }
        // Output signals follow the open-loop dynamics; resolve them finely.
        let rate = norm2(&self.adiff).max(norm2(&self.sdiff)).max(1.0);
        let smooth = (tau * rate / SMOOTH_STEP).ceil() as usize;
        let stiff = stiff_steps(&closed, tau);
        if stiff > MAX_STEPS {
            return Err(Error::GainDesign(format!("closed loop too stiff: {stiff} integration steps needed")));
        }
        let steps = requested.max(smooth).max(stiff);
        let h = tau / steps as f64;
        let (step, weights) = step_operators(&closed, h)?;
        // Taylor expansion of the output mismatch at each step start; the
        // copy is then advanced exactly.
        let mut z = Vector::zeros(r);
        for i in 0..steps {
            let t = t_k + h * i as f64;
            let derivs = ye.segment_right(t)?.derivatives(t, TAYLOR_ORDER);
            z = &step * z;
            for (w, d) in weights.iter().zip(&derivs) {
                z += w * (&gain.l * d);
            }
        }
        Ok(expm(&self.sdiff, -tau)? * z)
    }

    /// Bound `eps_k` on `|zhat_k - z_k| / |z_k|` given the relative accuracy of
    /// the smooth estimate and the relative impulse noise level.
    pub fn effective_eps(&self, eps_diff: f64, eps_imp: f64) -> f64 {
        let (d, i) = self.eps_weights();
        norm2(&self.uobs) * ((eps_diff * d).powi(2) + (eps_imp * i).powi(2)).sqrt()
    }

    /// Largest smooth-part accuracy keeping [`Self::effective_eps`] at or
    /// below `eps_k`; `None` when the impulse noise alone exceeds it.
    pub fn required_eps_diff(&self, eps_k: f64, eps_imp: f64) -> Option<f64> {
        let (d, i) = self.eps_weights();
        let u = norm2(&self.uobs);
        if u == 0.0 {
            return Some(f64::INFINITY);
        }
        let budget = (eps_k / u).powi(2) - (eps_imp * i).powi(2);
        if budget <= 0.0 {
            return None;
        }
        if d == 0.0 {
            return Some(f64::INFINITY);
        }
        Some(budget.sqrt() / d)
    }

    fn eps_weights(&self) -> (f64, f64) {
        let d = norm2(&(self.zdiff.transpose() * &self.pi * &self.zmat));
        let i = norm2(&self.uimp) * norm2(&(&self.oimp * &self.zmat));
        (d, i)
    }
}

/// Luenberger gain together with its certified end-of-interval bound
/// `|exp((S - L R) tau)| |exp(-S tau)|`.
#[derive(Clone, Debug)]
pub struct Gain {
    pub l: Mat,
    pub poles: Vec<f64>,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum GainTarget {
    Poles(Vec<f64>),
    TargetEps(f64),
}

const MAX_DOUBLINGS: usize = 60;

/// Relative pole deviation beyond which a placement is considered failed.
const PLACEMENT_TOL: f64 = 1e-2;

/// `exp(F h)` and the weights `W_j = int_0^h exp(F (h - s)) s^j / j! ds`
/// for j = 0..=TAYLOR_ORDER, read off one block matrix exponential.
fn step_operators(f: &Mat, h: f64) -> Result<(Mat, Vec<Mat>)> {
    let r = f.nrows();
    let blocks = TAYLOR_ORDER + 2;
    // couplings scaled to the size of F keep the blocks well balanced
    let c = norm2(f).max(1.0 / h);
    let mut big = Mat::zeros(blocks * r, blocks * r);
    big.view_mut((0, 0), (r, r)).copy_from(f);
    for k in 0..blocks - 1 {
        big.view_mut((k * r, (k + 1) * r), (r, r)).fill_with_identity();
        big.view_mut((k * r, (k + 1) * r), (r, r)).scale_mut(c);
    }
    let e = expm(&big, h)?;
    let block = |k: usize| e.view((0, k * r), (r, r)) / c.powi(k as i32);
    Ok((block(0), (1..blocks).map(block).collect()))
}


fn stiff_steps(closed: &Mat, tau: f64) -> usize {
    let s = (tau * norm2(closed) / STIFF_STEP).ceil();
    if s.is_finite() && s < MAX_STEPS as f64 * 2.0 {
        s as usize
    } else {
        usize::MAX
    }
}

/// Largest distance between the spectrum of `closed` and the requested real
/// poles, relative to the largest pole magnitude.
fn placement_error(closed: &Mat, poles: &[f64]) -> f64 {
    let mut eig: Vec<(f64, f64)> = closed.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect();
    if eig.iter().any(|(re, im)| !re.is_finite() || !im.is_finite()) {
        return f64::INFINITY;
    }
    eig.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut want = poles.to_vec();
    want.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let scale = want.iter().fold(0.0f64, |m, p| m.max(p.abs())).max(1.0);
    eig.iter()
        .zip(&want)
        .map(|((re, im), p)| (re - p).hypot(*im) / scale)
        .fold(0.0, f64::max)
}

pub fn design_gain(data: &ModeObsData, target: &GainTarget, tau: f64) -> Result<Gain> {
    let r = data.r_diff();
    if r == 0 {
        return Ok(Gain { l: Mat::zeros(0, data.ny), poles: Vec::new(), bound: 0.0 });
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidInterval(0.0, tau));
    }
    let back = norm2(&expm(&data.sdiff, -tau)?);
    let bound_of = |l: &Mat| -> Result<f64> {
        Ok(norm2(&expm(&(&data.sdiff - l * &data.rdiff), tau)?) * back)
    };
    match target {
        GainTarget::Poles(p) => {
            if p.len() != r {
                return Err(Error::GainDesign(format!("{} poles for a reduced system of order {r}", p.len())));
            }
            if let Some(bad) = p.iter().find(|v| !(**v < 0.0)) {
                return Err(Error::GainDesign(format!("pole {bad} is not in the open left half-plane")));
            }
            let l = place(&data.sdiff, &data.rdiff, p)?;
            let bound = bound_of(&l)?;
            Ok(Gain { l, poles: p.clone(), bound })
        }
        GainTarget::TargetEps(eps) => {
            if !(*eps > 0.0) {
                return Err(Error::GainDesign(format!("target accuracy {eps} must be positive")));
            }
            let mut rho = 1.0;
            for _ in 0..MAX_DOUBLINGS {
                let poles: Vec<f64> = (0..r).map(|i| -rho * (1.0 + 0.25 * i as f64)).collect();
                let l = place(&data.sdiff, &data.rdiff, &poles)?;
                let closed = &data.sdiff - &l * &data.rdiff;
                if placement_error(&closed, &poles) > PLACEMENT_TOL {
                    return Err(Error::GainDesign(format!(
                        "accuracy {eps:e} not reached: placement inaccurate at pole magnitude {rho:e}"
                    )));
                }
                if stiff_steps(&closed, tau) > MAX_STEPS {
                    return Err(Error::GainDesign(format!(
                        "accuracy {eps:e} not reached: closed loop too stiff at pole magnitude {rho:e}"
                    )));
                }
                if let Ok(bound) = bound_of(&l) {
                    if bound <= *eps {
                        return Ok(Gain { l, poles, bound });
                    }
                }
                rho *= 2.0;
            }
            Err(Error::GainDesign(format!("accuracy {eps:e} not reached with pole magnitude {rho:e}")))
        }
    }
}

/// Observer gain with `eig(S - L R) = poles` (real poles).
pub fn place(s: &Mat, r: &Mat, poles: &[f64]) -> Result<Mat> {
    let n = s.nrows();
    let ny = r.nrows();
    if ny == 1 {
        return ackermann(s, &r.row(0).transpose(), poles);
    }
    // Multi-output: make S - K R cyclic and observable from one combined output.
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..64 {
        let k = Mat::from_fn(n, ny, |_, _| rng.gen_range(-1.0..1.0));
        let h = Vector::from_fn(ny, |_, _| rng.gen_range(-1.0..1.0));
        let s2 = s - &k * r;
        let row = r.transpose() * &h;
        if obs_matrix(&s2, &row).map(|o| crate::linalg::cond(&o) < 1e10).unwrap_or(false) {
            let l1 = ackermann(&s2, &row, poles)?;
            return Ok(k + l1 * h.transpose());
        }
    }
    Err(Error::GainDesign("no observable single-output reduction found".into()))
}

fn obs_matrix(s: &Mat, c: &Vector) -> Option<Mat> {
    let n = s.nrows();
    let mut rows = Mat::zeros(n, n);
    let mut v = c.transpose();
    for i in 0..n {
        rows.row_mut(i).copy_from(&v);
        v = &v * s;
    }
    if rows.iter().all(|x| x.is_finite()) {
        Some(rows)
    } else {
        None
    }
}

fn ackermann(s: &Mat, c: &Vector, poles: &[f64]) -> Result<Mat> {
    let n = s.nrows();
    let o = obs_matrix(s, c).ok_or_else(|| Error::GainDesign("non-finite observability matrix".into()))?;
    if crate::linalg::cond(&o) > 1e12 {
        return Err(Error::GainDesign("reduced pair is not observable".into()));
    }
    // p(S) = prod (S - p_i I)
    let mut ps = Mat::identity(n, n);
    for p in poles {
        ps = &ps * (s - Mat::identity(n, n) * *p);
    }
    let mut en = Mat::zeros(n, 1);
    en[(n - 1, 0)] = 1.0;
    let x = o
        .lu()
        .solve(&en)
        .ok_or_else(|| Error::GainDesign("singular observability matrix".into()))?;
    Ok(ps * x)
}

/// Measurement noise on the Dirac impulse coefficients: every stacked
/// coefficient is scaled by `1 + eps * U[-1, 1]`.
#[derive(Clone, Debug)]
pub struct ImpulseNoise {
    eps: f64,
    rng: Option<ChaCha8Rng>,
}

impl ImpulseNoise {
    pub fn off() -> Self {
        ImpulseNoise { eps: 0.0, rng: None }
    }

    pub fn multiplicative(eps: f64, seed: u64) -> Self {
        ImpulseNoise { eps, rng: Some(ChaCha8Rng::seed_from_u64(seed)) }
    }

    pub fn eps(&self) -> f64 {
        if self.rng.is_some() {
            self.eps
        } else {
            0.0
        }
    }

    pub fn apply(&mut self, v: &mut Vector) {
        if let Some(rng) = self.rng.as_mut() {
            for x in v.iter_mut() {
                *x *= 1.0 + self.eps * rng.gen_range(-1.0..=1.0);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::mat_from_rows;
    use crate::simulator::{solve_homogeneous, SwitchedSystem};
    use crate::subspace::DEFAULT_ANGLE_TOL;

    fn m(rows: &[&[f64]]) -> Mat {
        let v: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        mat_from_rows(&v, rows[0].len()).unwrap()
    }

    fn ex1_modes() -> (Mode, Mode) {
        let i = Mat::identity(3, 3);
        let m0 = Mode::autonomous("hold", i.clone(), Mat::zeros(3, 3), m(&[&[1.0, 0.0, 0.0]])).unwrap();
        let a1 = m(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 0.0], &[0.0, 1.0, -1.0]]);
        let m1 = Mode::autonomous("mix", i, a1, Mat::zeros(1, 3)).unwrap();
        (m0, m1)
    }

    fn ex2_dae() -> Mode {
        let e = m(&[&[0.0, 0.0, 0.0, 0.0], &[1.0, 0.0, 0.0, 0.0], &[0.0, 0.0, 1.0, 0.0], &[0.0, 0.0, 0.0, 1.0]]);
        let a = m(&[&[1.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0], &[0.0, 0.0, 0.0, 0.0], &[0.0, 0.0, 1.0, -1.0]]);
        Mode::autonomous("dae", e, a, m(&[&[0.0, 1.0, 0.0, 0.0]])).unwrap()
    }

    fn span(cols: &[&[f64]]) -> Subspace {
        let n = cols[0].len();
        let mut mm = Mat::zeros(n, cols.len());
        for (j, c) in cols.iter().enumerate() {
            for i in 0..n {
                mm[(i, j)] = c[i];
            }
        }
        Subspace::column_space(&mm).unwrap()
    }

    #[test]
    fn example_one_observed_mode() {
        let d = ModeObsData::build(&ex1_modes().0).unwrap();
        assert!(d.w.equals(&span(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]), DEFAULT_ANGLE_TOL));
        assert_eq!(d.zmat.shape(), (3, 1));
        assert!((d.zmat[(0, 0)].abs() - 1.0).abs() < 1e-12);
        assert_eq!(d.sdiff.shape(), (1, 1));
        assert!(d.sdiff[(0, 0)].abs() < 1e-14);
        assert!((d.rdiff[(0, 0)].abs() - 1.0).abs() < 1e-12);
        // brute-force kernel of the stacked observability matrices
        let stacked = vstack(3, &[&d.odiff, &d.oimp]);
        assert!(Subspace::kernel(&stacked).unwrap().equals(&d.w, DEFAULT_ANGLE_TOL));
    }

    #[test]
    fn example_one_silent_mode() {
        let d = ModeObsData::build(&ex1_modes().1).unwrap();
        assert!(d.w.is_full());
        assert_eq!(d.r(), 0);
        assert_eq!(d.ideal_z(&Vector::from_vec(vec![1.0, 2.0, 3.0])).len(), 0);
    }

    #[test]
    fn example_two_impulse_only_mode() {
        let d = ModeObsData::build(&ex2_dae()).unwrap();
        assert!(d.odiff.amax() < 1e-14);
        assert_eq!(d.oimp.shape(), (3, 4));
        for i in 0..3 {
            for j in 0..4 {
                let want = if (i, j) == (0, 0) { 1.0 } else { 0.0 };
                assert!((d.oimp[(i, j)] - want).abs() < 1e-12);
            }
        }
        assert_eq!(d.r_diff(), 0);
        assert_eq!(d.r_imp(), 1);
        assert!((d.zimp[(0, 0)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invariants_hold_on_examples() {
        let (a, b) = ex1_modes();
        for mode in [a, b, ex2_dae()] {
            let d = ModeObsData::build(&mode).unwrap();
            let comb = hstack(d.n, &[&(d.pi.transpose() * &d.zdiff), &d.zimp]);
            assert!((comb * &d.uobs - &d.zmat).amax() < 1e-9);
            assert!((-d.oimp.transpose() * &d.uimp - &d.zimp).amax() < 1e-9);
            let back = d.w.sum(&Subspace::column_space(&d.zmat).unwrap()).unwrap();
            assert!(back.is_full());
            assert!((d.w.basis().transpose() * &d.zmat).amax() < 1e-12);
        }
    }

    #[test]
    fn paper_gain_for_unit_pole() {
        let d = ModeObsData::build(&ex1_modes().0).unwrap();
        let g = design_gain(&d, &GainTarget::Poles(vec![-1.0]), 1.0).unwrap();
        // sign of L follows the orientation of Z^diff
        assert!((g.l[(0, 0)] * d.rdiff[(0, 0)] - 1.0).abs() < 1e-12);
        let closed = &d.sdiff - &g.l * &d.rdiff;
        assert!((closed[(0, 0)] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn target_eps_pushes_pole_left() {
        let d = ModeObsData::build(&ex1_modes().0).unwrap();
        let g = design_gain(&d, &GainTarget::TargetEps(0.01), 1.0).unwrap();
        assert!(g.poles[0] <= 0.01f64.ln());
        let closed = &d.sdiff - &g.l * &d.rdiff;
        let decay = expm(&closed, 1.0).unwrap()[(0, 0)];
        assert!(decay <= 0.01 && decay > 0.0);
        assert!(g.bound <= 0.01);
    }

    #[test]
    fn empty_reduced_system_has_empty_gain() {
        let d = ModeObsData::build(&ex1_modes().1).unwrap();
        let g = design_gain(&d, &GainTarget::TargetEps(0.01), 1.0).unwrap();
        assert_eq!(g.l.shape(), (0, 1));
    }

    #[test]
    fn multi_output_placement() {
        let s = m(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 0.0], &[0.0, 0.0, 0.5]]);
        let r = m(&[&[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]]);
        let poles = [-1.0, -2.0, -3.0];
        let l = place(&s, &r, &poles).unwrap();
        let mut ev: Vec<f64> = (&s - &l * &r).complex_eigenvalues().iter().map(|c| c.re).collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in ev.iter().zip([-3.0, -2.0, -1.0]) {
            assert!((a - b).abs() < 1e-6, "{ev:?}");
        }
    }

    fn single_mode_system(mode: Mode) -> SwitchedSystem {
        SwitchedSystem::new(vec![mode], vec![0], vec![1.0]).unwrap()
    }

    #[test]
    fn luenberger_first_interval_example_one() {
        let (m0, _) = ex1_modes();
        let d = ModeObsData::build(&m0).unwrap();
        let sys = single_mode_system(m0);
        let sim = solve_homogeneous(&sys, &Vector::from_vec(vec![1.0, 0.0, 0.0]), 0.0, 1.0).unwrap();
        let g = design_gain(&d, &GainTarget::Poles(vec![-20.0]), 1.0).unwrap();
        let zd = d.estimate_zdiff(&g, &sim.y, 0.0, 1.0, Some(0.01)).unwrap();
        let truth = d.zdiff.transpose() * Vector::from_vec(vec![1.0, 0.0, 0.0]);
        assert!((zd[0] - truth[0]).abs() <= 0.01);
        assert!((zd[0] - truth[0]).abs() <= 2.0 * (-20f64).exp());

        let zero = solve_homogeneous(&sys, &Vector::zeros(3), 0.0, 1.0).unwrap();
        assert_eq!(d.estimate_zdiff(&g, &zero.y, 0.0, 1.0, Some(0.01)).unwrap()[0], 0.0);
        assert!(matches!(
            d.estimate_zdiff(&g, &sim.y, 0.0, 1.0, Some(0.1)),
            Err(Error::CoarseGrid(10, 20))
        ));
    }

    #[test]
    fn impulse_readout_example_two() {
        let mode = ex2_dae();
        let d = ModeObsData::build(&mode).unwrap();
        let sys = single_mode_system(mode);
        let c = 0.7;
        let e = Vector::from_vec(vec![c, -0.3, 1.1, 0.4]);
        let sim = solve_homogeneous(&sys, &e, 0.0, 1.0).unwrap();
        let eta = sim.y.impulse_at(0.0).unwrap();
        let stacked = eta.stacked(3).unwrap();
        assert!((stacked - -&d.oimp * &e).amax() < 1e-14);
        assert!((eta.coeff(0)[0] + c).abs() < 1e-14);
        let zi = d.extract_zimp(&eta, &mut ImpulseNoise::off()).unwrap();
        assert!((zi - d.zimp.transpose() * &e).amax() < 1e-12);

        let mut noise = ImpulseNoise::multiplicative(0.1, 7);
        let ideal = d.zimp.transpose() * &e;
        for _ in 0..50 {
            let zn = d.extract_zimp(&eta, &mut noise).unwrap();
            assert!((zn[0] - ideal[0]).abs() <= 0.1 * ideal[0].abs() + 1e-15);
        }
        let zero = ImpulseRecord::empty(0.0, 1);
        assert_eq!(d.extract_zimp(&zero, &mut ImpulseNoise::off()).unwrap()[0], 0.0);
        assert!(d.extract_zimp(&ImpulseRecord::empty(0.0, 2), &mut ImpulseNoise::off()).is_err());
    }

    #[test]
    fn compose_matches_ideal_with_exact_parts() {
        let (m0, _) = ex1_modes();
        let d = ModeObsData::build(&m0).unwrap();
        let e = Vector::from_vec(vec![0.4, -1.0, 2.0]);
        let zd = d.zdiff.transpose() * &d.pi * &e;
        let zi = d.zimp.transpose() * &e;
        let z = d.compose_zhat(&zd, &zi).unwrap();
        assert!((z - d.ideal_z(&e)).amax() < 1e-12);
        assert!((d.ideal_z(&e)[0].abs() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn eps_bookkeeping() {
        let d = ModeObsData::build(&ex2_dae()).unwrap();
        let need = d.required_eps_diff(0.2, 0.1).unwrap();
        assert!(need.is_infinite());
        assert!((d.effective_eps(0.0, 0.1) - 0.1).abs() < 1e-12);
        assert!(d.required_eps_diff(0.05, 0.1).is_none());
    }
}
