//! Regular matrix pairs `(E, A)`: Wong sequences, quasi-Weierstrass form,
//! the consistency projector and the derived flow/impulse matrices.

use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::linalg::{cond, hstack, inverse, norm2, singular_values, Mat, Vector};
use crate::subspace::Subspace;

pub use crate::linalg::expm;

/// Condition number of `T` above which a decomposition carries a warning.
pub const COND_WARN: f64 = 1e12;

#[derive(Clone, Debug)]
pub struct MatrixPair {
    e: Mat,
    a: Mat,
}

impl MatrixPair {
    pub fn new(e: Mat, a: Mat) -> Result<Self> {
        if !e.is_square() || e.shape() != a.shape() {
            return Err(Error::Dimension(format!(
                "pair shapes {:?} and {:?}",
                e.shape(),
                a.shape()
            )));
        }
        if e.iter().chain(a.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix pair"));
        }
        Ok(MatrixPair { e, a })
    }

    pub fn n(&self) -> usize {
        self.e.nrows()
    }

    pub fn e(&self) -> &Mat {
        &self.e
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }
}

#[derive(Clone, Debug)]
pub struct QwfData {
    pub s: Mat,
    pub t: Mat,
    pub t_inv: Mat,
    pub j: Mat,
    pub nil: Mat,
    pub n1: usize,
    pub nilpotency_index: usize,
}

impl QwfData {
    pub fn n2(&self) -> usize {
        self.t.nrows() - self.n1
    }
}

#[derive(Clone, Debug)]
pub struct PairDecomposition {
    pub pair: MatrixPair,
    pub qwf: QwfData,
    pub pi: Mat,
    pub adiff: Mat,
    pub eimp: Mat,
    pub consistency_space: Subspace,
    pub impulse_space: Subspace,
    /// Powers `(E^imp)^1 .. (E^imp)^(n-1)`.
    pub eimp_powers: Vec<Mat>,
    pub warnings: Vec<String>,
}

impl PairDecomposition {
    pub fn n(&self) -> usize {
        self.pair.n()
    }

    /// Coefficients of `delta^(j)`, `j = 0..n-2`, for a jump from `x_minus`
    /// to `x_plus`: `(E^imp)^(j+1) (x_plus - x_minus)`. With `x_plus = Pi x_minus`
    /// this is `-(E^imp)^(j+1) x_minus`.
    pub fn impulse_coefficients(&self, x_minus: &Vector, x_plus: &Vector) -> Vec<Vector> {
        let jump = x_plus - x_minus;
        self.eimp_powers.iter().map(|p| p * &jump).collect()
    }
}

/// Limits of the Wong sequences `V_{i+1} = A^{-1}(E V_i)` (from `R^n`) and
/// `W_{i+1} = E^{-1}(A W_i)` (from `{0}`).
pub fn wong_limits(pair: &MatrixPair) -> Result<(Subspace, Subspace)> {
    let n = pair.n();
    let mut v = Subspace::full(n);
    for _ in 0..=n {
        let next = Subspace::preimage(pair.a(), &v.image(pair.e())?)?;
        let done = next.dim() == v.dim();
        v = next;
        if done {
            break;
        }
    }
    let mut w = Subspace::zero(n);
    for _ in 0..=n {
        let next = Subspace::preimage(pair.e(), &w.image(pair.a())?)?;
        let done = next.dim() == w.dim();
        w = next;
        if done {
            break;
        }
    }
    Ok((v, w))
}

fn wong_direct_sum(pair: &MatrixPair, v: &Subspace, w: &Subspace) -> Result<bool> {
    Ok(v.dim() + w.dim() == pair.n() && v.sum(w)?.dim() == pair.n())
}

/// Randomized probe: `det(lambda E - A) != 0` at `n + 1` distinct points,
/// judged by the relative smallest singular value.
fn determinant_probe(pair: &MatrixPair) -> bool {
    let n = pair.n();
    if n == 0 {
        return true;
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed_da11);
    let (ne, na) = (norm2(pair.e()), norm2(pair.a()));
    (0..=n).any(|i| {
        let lambda = rng.gen_range(-2.0..2.0) + 0.173 * i as f64;
        let pencil = pair.e() * lambda - pair.a();
        let scale = lambda.abs() * ne + na;
        if scale == 0.0 {
            return false;
        }
        let sv = singular_values(&pencil);
        sv[sv.len() - 1] / scale > 1e-10
    })
}

/// Regularity by the Wong direct-sum test, cross-checked by the determinant
/// probe. Disagreement is an error rather than a guess.
pub fn is_regular(pair: &MatrixPair) -> Result<bool> {
    let (v, w) = wong_limits(pair)?;
    let wong = wong_direct_sum(pair, &v, &w)?;
    let probe = determinant_probe(pair);
    if wong != probe {
        return Err(Error::RegularityMismatch { wong, probe });
    }
    Ok(wong)
}

fn nilpotency_index(nil: &Mat) -> usize {
    let m = nil.nrows();
    if m == 0 {
        return 0;
    }
    let scale = norm2(nil).max(1.0);
    let mut p = nil.clone();
    for k in 1..=m {
        if norm2(&p) <= 1e-9 * scale.powi(k as i32) {
            return k;
        }
        p = &p * nil;
    }
    m
}

pub fn decompose(pair: &MatrixPair) -> Result<PairDecomposition> {
    let n = pair.n();
    let (v, w) = wong_limits(pair)?;
    let wong = wong_direct_sum(pair, &v, &w)?;
    let probe = determinant_probe(pair);
    if wong != probe {
        return Err(Error::RegularityMismatch { wong, probe });
    }
    if !wong {
        return Err(Error::NotRegular);
    }
    let n1 = v.dim();
    let t = hstack(n, &[v.basis(), w.basis()]);
    let ev = pair.e() * v.basis();
    let aw = pair.a() * w.basis();
    let s = inverse(&hstack(n, &[&ev, &aw])).ok_or(Error::NotRegular)?;
    let t_inv = inverse(&t).ok_or(Error::NotRegular)?;

    let set = &s * pair.e() * &t;
    let sat = &s * pair.a() * &t;
    let j = sat.view((0, 0), (n1, n1)).into_owned();
    let nil = set.view((n1, n1), (n - n1, n - n1)).into_owned();

    let mut warnings = Vec::new();
    let ct = cond(&t);
    if ct > COND_WARN {
        warnings.push(format!("ill-conditioned transformation T (cond = {ct:.3e})"));
    }

    let (pi, adiff, eimp) = if n1 == n {
        // ODE-like pair: E invertible
        let adiff = pair
            .e()
            .clone()
            .lu()
            .solve(pair.a())
            .ok_or(Error::NotRegular)?;
        (Mat::identity(n, n), adiff, Mat::zeros(n, n))
    } else if n1 == 0 {
        let eimp = w.basis() * &nil * &t_inv;
        (Mat::zeros(n, n), Mat::zeros(n, n), eimp)
    } else {
        let top = t_inv.view((0, 0), (n1, n)).into_owned();
        let bottom = t_inv.view((n1, 0), (n - n1, n)).into_owned();
        let pi = v.basis() * &top;
        let adiff = v.basis() * &j * &top;
        let eimp = w.basis() * &nil * &bottom;
        (pi, adiff, eimp)
    };

    let mut eimp_powers = Vec::with_capacity(n.saturating_sub(1));
    let mut p = eimp.clone();
    for _ in 1..n {
        eimp_powers.push(p.clone());
        p = &p * &eimp;
    }

    let qwf = QwfData { nilpotency_index: nilpotency_index(&nil), s, t, t_inv, j, nil, n1 };
    Ok(PairDecomposition {
        pair: pair.clone(),
        qwf,
        pi,
        adiff,
        eimp,
        consistency_space: v,
        impulse_space: w,
        eimp_powers,
        warnings,
    })
}

/// `C^diff = C Pi`.
pub fn cdiff(dec: &PairDecomposition, c: &Mat) -> Result<Mat> {
    if c.ncols() != dec.n() {
        return Err(Error::Dimension(format!(
            "output matrix has {} columns, state dimension is {}",
            c.ncols(),
            dec.n()
        )));
    }
    Ok(c * &dec.pi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{block_diag, mat_from_rows, max_abs};
    use crate::subspace::DEFAULT_ANGLE_TOL;

    fn ex2_mode1() -> MatrixPair {
        let e = mat_from_rows(
            &[
                vec![0.0, 0.0, 0.0, 0.0],
                vec![1.0, 0.0, 0.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0],
                vec![0.0, 0.0, 0.0, 1.0],
            ],
            4,
        )
        .unwrap();
        let a = mat_from_rows(
            &[
                vec![1.0, 0.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0, 0.0],
                vec![0.0, 0.0, 0.0, 0.0],
                vec![0.0, 0.0, 1.0, -1.0],
            ],
            4,
        )
        .unwrap();
        MatrixPair::new(e, a).unwrap()
    }

    fn ex2_mode0() -> MatrixPair {
        let a = mat_from_rows(
            &[
                vec![0.0, 0.0, 1.0, 0.0],
                vec![0.0, 0.0, 0.0, 0.0],
                vec![0.0, 0.0, 0.0, 0.0],
                vec![0.0, 0.0, 1.0, -1.0],
            ],
            4,
        )
        .unwrap();
        MatrixPair::new(Mat::identity(4, 4), a).unwrap()
    }

    fn span_e(n: usize, idx: &[usize]) -> Subspace {
        let mut m = Mat::zeros(n, idx.len());
        for (j, &i) in idx.iter().enumerate() {
            m[(i, j)] = 1.0;
        }
        Subspace::column_space(&m).unwrap()
    }

    #[test]
    fn wong_ode_and_algebraic_cases() {
        let a = mat_from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.5]], 2).unwrap();
        let (v, w) = wong_limits(&MatrixPair::new(Mat::identity(2, 2), a).unwrap()).unwrap();
        assert!(v.is_full() && w.is_zero());
        let (v, w) =
            wong_limits(&MatrixPair::new(Mat::zeros(2, 2), Mat::identity(2, 2)).unwrap()).unwrap();
        assert!(v.is_zero() && w.is_full());
    }

    #[test]
    fn wong_example_two_second_mode() {
        let (v, w) = wong_limits(&ex2_mode1()).unwrap();
        assert!(v.equals(&span_e(4, &[2, 3]), DEFAULT_ANGLE_TOL));
        assert!(w.equals(&span_e(4, &[0, 1]), DEFAULT_ANGLE_TOL));
    }

    #[test]
    fn regularity() {
        let a = mat_from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.5]], 2).unwrap();
        assert!(is_regular(&MatrixPair::new(Mat::identity(2, 2), a).unwrap()).unwrap());
        assert!(!is_regular(&MatrixPair::new(Mat::zeros(2, 2), Mat::zeros(2, 2)).unwrap()).unwrap());
        assert!(is_regular(&ex2_mode0()).unwrap());
        assert!(is_regular(&ex2_mode1()).unwrap());
        // singular pencil with nonzero entries: E = A = e1 e1^T
        let mut e = Mat::zeros(2, 2);
        e[(0, 0)] = 1.0;
        assert!(!is_regular(&MatrixPair::new(e.clone(), e.clone()).unwrap()).unwrap());
        assert!(matches!(decompose(&MatrixPair::new(e.clone(), e).unwrap()), Err(Error::NotRegular)));
    }

    #[test]
    fn decompose_already_in_qwf() {
        let e = Mat::from_diagonal(&Vector::from_vec(vec![1.0, 0.0]));
        let a = Mat::from_diagonal(&Vector::from_vec(vec![0.0, 1.0]));
        let d = decompose(&MatrixPair::new(e.clone(), a).unwrap()).unwrap();
        assert!(max_abs(&(&d.pi - &e)) < 1e-14);
        assert!(max_abs(&d.adiff) < 1e-14);
        assert!(max_abs(&d.eimp) < 1e-14);
    }

    #[test]
    fn decompose_example_two_second_mode_matches_displayed_matrices() {
        let d = decompose(&ex2_mode1()).unwrap();
        let pi = Mat::from_diagonal(&Vector::from_vec(vec![0.0, 0.0, 1.0, 1.0]));
        let mut adiff = Mat::zeros(4, 4);
        adiff[(3, 2)] = 1.0;
        adiff[(3, 3)] = -1.0;
        assert!(max_abs(&(&d.pi - pi)) < 1e-12);
        assert!(max_abs(&(&d.adiff - adiff)) < 1e-12);
        assert_eq!(d.qwf.n1, 2);
        assert_eq!(d.qwf.nilpotency_index, 2);
    }

    #[test]
    fn decompose_example_two_first_mode_is_ode() {
        let p = ex2_mode0();
        let d = decompose(&p).unwrap();
        assert_eq!(d.pi, Mat::identity(4, 4));
        assert_eq!(d.adiff, *p.a());
        assert_eq!(d.eimp, Mat::zeros(4, 4));
        assert_eq!(d.qwf.nilpotency_index, 0);
    }

    #[test]
    fn qwf_reconstruction_and_block_identities() {
        let d = decompose(&ex2_mode1()).unwrap();
        let q = &d.qwf;
        let n2 = q.n2();
        let s_inv = inverse(&q.s).unwrap();
        let t_inv = inverse(&q.t).unwrap();
        let e = &s_inv * block_diag(&Mat::identity(q.n1, q.n1), &q.nil) * &t_inv;
        let a = &s_inv * block_diag(&q.j, &Mat::identity(n2, n2)) * &t_inv;
        assert!(max_abs(&(e - d.pair.e())) < 1e-12);
        assert!(max_abs(&(a - d.pair.a())) < 1e-12);
        assert!(max_abs(&(&d.pi * &d.pi - &d.pi)) < 1e-12);
        assert!(max_abs(&(&d.eimp * &d.pi)) < 1e-12);
        assert!(max_abs(&(&d.pi * &d.eimp)) < 1e-12);
    }

    #[test]
    fn cdiff_cases() {
        let d = decompose(&ex2_mode1()).unwrap();
        let c = mat_from_rows(&[vec![0.0, 1.0, 0.0, 0.0]], 4).unwrap();
        assert!(max_abs(&cdiff(&d, &c).unwrap()) < 1e-14);
        assert!(max_abs(&cdiff(&d, &Mat::zeros(1, 4)).unwrap()) == 0.0);
        let d0 = decompose(&ex2_mode0()).unwrap();
        assert_eq!(cdiff(&d0, &c).unwrap(), c);
        assert!(cdiff(&d0, &Mat::zeros(1, 3)).is_err());
    }

    #[test]
    fn impulse_formula_example_two() {
        let d = decompose(&ex2_mode1()).unwrap();
        let x = Vector::from_vec(vec![2.5, -1.0, 0.3, 0.7]);
        let plus = &d.pi * &x;
        let imp = d.impulse_coefficients(&x, &plus);
        assert_eq!(imp.len(), 3);
        // x2 carries -x1(t-) delta
        assert!((imp[0][1] + 2.5).abs() < 1e-12);
        assert!(imp[0][0].abs() < 1e-12);
        assert!(imp[1].norm() < 1e-12 && imp[2].norm() < 1e-12);
    }
}
