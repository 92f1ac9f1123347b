//! Window-level machinery over `[t_p, t_q)`: the backward unobservable chain,
//! the matrices of the backward combination of local estimates, the
//! transition of the homogeneous error dynamics and the certificates.

use crate::error::{Error, Result};
use crate::linalg::{expm, hstack, lstsq, norm2, vconcat, vstack, Mat, Vector};
use crate::modeobs::ModeObsData;
use crate::simulator::SwitchedSystem;
use crate::subspace::Subspace;

/// Samples per mode interval when bounding intermediate flows.
pub const FLOW_SAMPLES: usize = 50;

/// Observability data for every mode of the system, indexed by mode.
pub fn mode_table(sys: &SwitchedSystem) -> Result<Vec<ModeObsData>> {
    sys.modes().iter().map(ModeObsData::build).collect()
}

/// Intervals `p..q` with their durations; the last duration is shortened
/// for a window truncated by a processing delay.
#[derive(Clone, Debug)]
pub struct Window {
    pub p: usize,
    pub q: usize,
    pub starts: Vec<f64>,
    pub taus: Vec<f64>,
    pub data: Vec<ModeObsData>,
}

impl Window {
    pub fn new(sys: &SwitchedSystem, table: &[ModeObsData], p: usize, q: usize) -> Result<Self> {
        if !(p < q) || q > sys.interval_count() {
            return Err(Error::Config(format!(
                "window [{p}, {q}) outside 0..{} intervals",
                sys.interval_count()
            )));
        }
        if table.len() != sys.modes().len() {
            return Err(Error::Dimension(format!(
                "{} mode data entries for {} modes",
                table.len(),
                sys.modes().len()
            )));
        }
        Ok(Window {
            p,
            q,
            starts: (p..q).map(|k| sys.t(k)).collect(),
            taus: (p..q).map(|k| sys.tau(k)).collect(),
            data: (p..q).map(|k| table[sys.mode_index(k)].clone()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.starts[0]
    }

    pub fn end(&self) -> f64 {
        self.starts[self.len() - 1] + self.taus[self.len() - 1]
    }

    /// The window `[t_p, t_q - delta)`.
    pub fn truncated(&self, delta: f64) -> Result<Window> {
        if !(delta >= 0.0) {
            return Err(Error::Config(format!("delay {delta} must be nonnegative")));
        }
        if delta == 0.0 {
            return Ok(self.clone());
        }
        let end = self.end() - delta;
        if end <= self.start() {
            return Err(Error::Config(format!(
                "delay {delta} not shorter than window [{}, {})",
                self.start(),
                self.end()
            )));
        }
        let keep = self.starts.iter().filter(|s| **s < end).count();
        let mut w = Window {
            p: self.p,
            q: self.p + keep,
            starts: self.starts[..keep].to_vec(),
            taus: self.taus[..keep].to_vec(),
            data: self.data[..keep].to_vec(),
        };
        w.taus[keep - 1] = end - w.starts[keep - 1];
        Ok(w)
    }
}

/// Backward chain `N_k = W_k ∩ Pi_k^{-1} exp(-A_k tau_k) N_{k+1}`, returned
/// for `k = p..q` in forward order.
pub fn unobs_chain(window: &Window) -> Result<Vec<Subspace>> {
    let len = window.len();
    let mut chain = vec![window.data[len - 1].w.clone()];
    for i in (0..len - 1).rev() {
        let d = &window.data[i];
        let back = chain.last().unwrap().image(&expm(&d.adiff, -window.taus[i])?)?;
        let nk = d.w.intersect(&Subspace::preimage(&d.pi, &back)?)?;
        chain.push(nk);
    }
    chain.reverse();
    Ok(chain)
}

#[derive(Clone, Debug)]
pub struct WindowData {
    pub window: Window,
    pub n: usize,
    pub chain: Vec<Subspace>,
    pub m: Vec<Mat>,
    /// `Theta_k` for `k = p..q-1`; the last entry is unused and `n x 0`.
    pub theta: Vec<Mat>,
    pub u: Vec<Mat>,
    /// `Theta_k^T exp(-A_k tau_k) M_{k+1}`; the last entry is unused.
    pub link: Vec<Mat>,
    /// `Phi_p^k` for `k = p..=q`.
    pub phi: Vec<Mat>,
    /// `O_p^{q-1}`: stacked local estimates to `xi^left`.
    pub omap: Mat,
    pub exp_fwd: Vec<Mat>,
}

impl WindowData {
    pub fn build(window: &Window) -> Result<Self> {
        let len = window.len();
        let n = window.data[0].n;
        let chain = unobs_chain(window)?;
        let exp_fwd: Vec<Mat> = (0..len)
            .map(|i| expm(&window.data[i].adiff, window.taus[i]))
            .collect::<Result<_>>()?;
        let exp_back: Vec<Mat> = (0..len)
            .map(|i| expm(&window.data[i].adiff, -window.taus[i]))
            .collect::<Result<_>>()?;

        let mut m: Vec<Mat> = chain.iter().map(|s| s.complement().basis().clone()).collect();
        m[len - 1] = window.data[len - 1].zmat.clone();

        let mut theta = vec![Mat::zeros(n, 0); len];
        let mut u = vec![Mat::zeros(0, 0); len];
        let mut link = vec![Mat::zeros(0, m[len - 1].ncols()); len];
        u[len - 1] = Mat::identity(m[len - 1].ncols(), m[len - 1].ncols());
        for i in 0..len - 1 {
            let d = &window.data[i];
            let moved = chain[i + 1].image(&exp_back[i])?;
            theta[i] = moved.complement().basis().clone();
            let gen = hstack(n, &[&d.zmat, &(d.pi.transpose() * &theta[i])]);
            u[i] = lstsq(&gen, &m[i]);
            link[i] = theta[i].transpose() * &exp_back[i] * &m[i + 1];
        }

        let mut phi = vec![Mat::identity(n, n)];
        for i in 0..len {
            let next = &exp_fwd[i] * &window.data[i].pi * phi.last().unwrap();
            phi.push(next);
        }

        let mut wd = WindowData {
            window: window.clone(),
            n,
            chain,
            m,
            theta,
            u,
            link,
            phi,
            omap: Mat::zeros(n, 0),
            exp_fwd,
        };
        let dims: Vec<usize> = window.data.iter().map(|d| d.r()).collect();
        let total: usize = dims.iter().sum();
        let mut omap = Mat::zeros(n, total);
        let mut col = 0;
        for (i, &r) in dims.iter().enumerate() {
            for j in 0..r {
                let mut z: Vec<Vector> = dims.iter().map(|&d| Vector::zeros(d)).collect();
                z[i][j] = 1.0;
                omap.set_column(col, &wd.correction_left(&z)?);
                col += 1;
            }
        }
        wd.omap = omap;
        Ok(wd)
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    /// `Phi_p^q`.
    pub fn transition(&self) -> &Mat {
        self.phi.last().unwrap()
    }

    /// `M_p mu_p` from the backward recursion
    /// `mu_k = U_k^T (z_k; Theta_k^T exp(-A_k tau_k) M_{k+1} mu_{k+1})`.
    pub fn correction_left(&self, zhat: &[Vector]) -> Result<Vector> {
        let len = self.len();
        if zhat.len() != len {
            return Err(Error::Dimension(format!("{} local estimates for {len} intervals", zhat.len())));
        }
        for (i, z) in zhat.iter().enumerate() {
            if z.len() != self.window.data[i].r() {
                return Err(Error::Dimension(format!(
                    "estimate {} has length {}, expected {}",
                    self.window.p + i,
                    z.len(),
                    self.window.data[i].r()
                )));
            }
        }
        let mut mu = zhat[len - 1].clone();
        for i in (0..len - 1).rev() {
            let carried = &self.link[i] * &mu;
            mu = self.u[i].transpose() * vconcat(&[&zhat[i], &carried]);
        }
        Ok(&self.m[0] * mu)
    }

    /// `Phi_p^q xi^left`.
    pub fn correction(&self, zhat: &[Vector]) -> Result<Vector> {
        Ok(self.transition() * self.correction_left(zhat)?)
    }

    /// Ideal local data `z_k = Z_k^T Phi_p^k e(t_p^-)`.
    pub fn ideal_z(&self, e_p: &Vector) -> Vec<Vector> {
        (0..self.len()).map(|i| self.window.data[i].ideal_z(&(&self.phi[i] * e_p))).collect()
    }

    pub fn detect_certificate(&self) -> Result<Certificate> {
        let np = self.chain[0].basis();
        if np.ncols() == 0 {
            return Ok(Certificate { alpha: 0.0, mconst: 0.0, detectable: true });
        }
        let alpha = norm2(&(self.transition() * np));
        let mut mconst = 1.0f64;
        for i in 0..self.len() {
            let d = &self.window.data[i];
            let start = &d.pi * &self.phi[i] * np;
            for j in 0..FLOW_SAMPLES {
                let s = self.window.taus[i] * j as f64 / (FLOW_SAMPLES - 1) as f64;
                mconst = mconst.max(norm2(&(expm(&d.adiff, s)? * &start)));
            }
            mconst = mconst.max(norm2(&(&self.phi[i] * np)));
        }
        Ok(Certificate { alpha, mconst, detectable: alpha < 1.0 })
    }

    /// `c = |Phi_p^q O| |[Z_p^T; Z_{p+1}^T Phi_p^{p+1}; ...]|`.
    pub fn budget_constant(&self) -> f64 {
        self.budget_constant_with(self.transition())
    }

    /// Budget constant with the correction propagated by `phi_end` instead of
    /// `Phi_p^q` (a truncated window propagated over the full one).
    pub fn budget_constant_with(&self, phi_end: &Mat) -> f64 {
        let rows: Vec<Mat> = (0..self.len())
            .map(|i| self.window.data[i].zmat.transpose() * &self.phi[i])
            .collect();
        let stacked = vstack(self.n, &rows.iter().collect::<Vec<_>>());
        norm2(&(phi_end * &self.omap)) * norm2(&stacked)
    }

    pub fn error_budget(&self, cert: &Certificate, alpha_hat: f64) -> Result<Budget> {
        let c = self.budget_constant();
        let eps_max = eps_max(c, cert.alpha, alpha_hat).ok_or_else(|| Error::Budget {
            p: self.window.p,
            q: self.window.q,
            detail: format!("alpha_hat {alpha_hat} must lie in ({}, 1)", cert.alpha),
        })?;
        Ok(Budget { c, eps_max })
    }
}

/// `(alpha_hat - alpha) / c`, or `None` unless `alpha < alpha_hat < 1`.
pub fn eps_max(c: f64, alpha: f64, alpha_hat: f64) -> Option<f64> {
    if !(alpha_hat > alpha && alpha_hat < 1.0) {
        return None;
    }
    Some(if c == 0.0 { f64::INFINITY } else { (alpha_hat - alpha) / c })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Certificate {
    pub alpha: f64,
    pub mconst: f64,
    pub detectable: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Budget {
    pub c: f64,
    pub eps_max: f64,
}

/// Suprema of the window certificates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Uniformity {
    pub alpha_sup: f64,
    pub mconst_sup: f64,
}

impl Uniformity {
    pub fn of(certs: &[Certificate]) -> Self {
        Uniformity {
            alpha_sup: certs.iter().map(|c| c.alpha).fold(0.0, f64::max),
            mconst_sup: certs.iter().map(|c| c.mconst).fold(0.0, f64::max),
        }
    }

    pub fn holds(&self, alpha_star: f64, m_star: f64) -> bool {
        alpha_star < 1.0 && self.alpha_sup <= alpha_star && self.mconst_sup <= m_star
    }
}
