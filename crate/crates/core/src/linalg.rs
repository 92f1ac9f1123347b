//! Dense helpers shared by the analysis modules: matrix exponential,
//! operator norms, pseudo-inverse solves and zero-width-tolerant stacking.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

fn norm1(m: &Mat) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `exp(m * t)` by scaling and squaring with a degree-13 Padé approximant.
pub fn expm(m: &Mat, t: f64) -> Result<Mat> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("expm of {}x{} matrix", m.nrows(), m.ncols())));
    }
    if !t.is_finite() || m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("expm argument"));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let a = m * t;
    let nrm = norm1(&a);
    if nrm == 0.0 {
        return Ok(Mat::identity(n, n));
    }
    let s = if nrm > THETA13 { (nrm / THETA13).log2().ceil() as i32 } else { 0 };
    let a = a * 2f64.powi(-s);
    let b = &PADE13;
    let id = Mat::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &id * b[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &id * b[0];
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .ok_or(Error::ExpOverflow(nrm))?;
    for _ in 0..s {
        r = &r * &r;
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::ExpOverflow(nrm));
        }
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::ExpOverflow(nrm));
    }
    Ok(r)
}

/// Thin singular value decomposition `m = u diag(s) v_t`, values descending.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: Mat,
    pub s: Vec<f64>,
    pub v_t: Mat,
}

/// Thin SVD. nalgebra's bidiagonal solver loses accuracy on some rank-deficient
/// inputs, so the factorization comes from faer, with nalgebra as fallback.
pub fn svd(m: &Mat) -> Svd {
    let (r, c) = (m.nrows(), m.ncols());
    let k = r.min(c);
    if k == 0 {
        return Svd { u: Mat::zeros(r, 0), s: Vec::new(), v_t: Mat::zeros(0, c) };
    }
    let f = faer::Mat::<f64>::from_fn(r, c, |i, j| m[(i, j)]);
    match f.thin_svd() {
        Ok(d) => {
            let (u, v, sv) = (d.U(), d.V(), d.S());
            Svd {
                u: Mat::from_fn(r, k, |i, j| u[(i, j)]),
                s: (0..k).map(|i| sv[i]).collect(),
                v_t: Mat::from_fn(k, c, |i, j| v[(j, i)]),
            }
        }
        Err(_) => {
            let d = m.clone().svd(true, true);
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&a, &b| d.singular_values[b].total_cmp(&d.singular_values[a]));
            let u = d.u.expect("svd u");
            let vt = d.v_t.expect("svd v_t");
            Svd {
                u: Mat::from_fn(r, k, |i, j| u[(i, order[j])]),
                s: order.iter().map(|&i| d.singular_values[i]).collect(),
                v_t: Mat::from_fn(k, c, |i, j| vt[(order[i], j)]),
            }
        }
    }
}

pub fn singular_values(m: &Mat) -> Vec<f64> {
    svd(m).s
}

/// Largest singular value; zero for empty matrices.
pub fn norm2(m: &Mat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

pub fn vnorm(v: &Vector) -> f64 {
    v.norm()
}

/// Minimum-norm least-squares solution of `a * x = b`.
pub fn lstsq(a: &Mat, b: &Mat) -> Mat {
    let (m, n) = (a.nrows(), a.ncols());
    if n == 0 || b.ncols() == 0 {
        return Mat::zeros(n, b.ncols());
    }
    if m == 0 {
        return Mat::zeros(n, b.ncols());
    }
    let d = svd(a);
    let cut = d.s[0] * 1e-12 * (m.max(n) as f64);
    let mut x = Mat::zeros(n, b.ncols());
    for (i, s) in d.s.iter().enumerate() {
        if *s > cut {
            let coeff = d.u.column(i).transpose() * b / *s;
            x += d.v_t.row(i).transpose() * coeff;
        }
    }
    x
}

pub fn inverse(m: &Mat) -> Option<Mat> {
    if m.nrows() == 0 {
        return Some(Mat::zeros(0, 0));
    }
    m.clone().try_inverse()
}

/// 2-norm condition number; infinite for singular input.
pub fn cond(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let sv = singular_values(m);
    let (mx, mn) = (sv[0], sv[sv.len() - 1]);
    if mn == 0.0 {
        f64::INFINITY
    } else {
        mx / mn
    }
}

/// Horizontal concatenation; accepts zero-width blocks.
pub fn hstack(rows: usize, blocks: &[&Mat]) -> Mat {
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        debug_assert_eq!(b.nrows(), rows);
        if b.ncols() > 0 {
            out.view_mut((0, c), (rows, b.ncols())).copy_from(*b);
        }
        c += b.ncols();
    }
    out
}

/// Vertical concatenation; accepts zero-height blocks.
pub fn vstack(cols: usize, blocks: &[&Mat]) -> Mat {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        debug_assert_eq!(b.ncols(), cols);
        if b.nrows() > 0 {
            out.view_mut((r, 0), (b.nrows(), cols)).copy_from(*b);
        }
        r += b.nrows();
    }
    out
}

pub fn vconcat(parts: &[&Vector]) -> Vector {
    let len = parts.iter().map(|p| p.len()).sum();
    let mut out = Vector::zeros(len);
    let mut i = 0;
    for p in parts {
        out.rows_mut(i, p.len()).copy_from(*p);
        i += p.len();
    }
    out
}

pub fn block_diag(a: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    if a.nrows() > 0 && a.ncols() > 0 {
        out.view_mut((0, 0), a.shape()).copy_from(a);
    }
    if b.nrows() > 0 && b.ncols() > 0 {
        out.view_mut((a.nrows(), a.ncols()), b.shape()).copy_from(b);
    }
    out
}

pub fn mat_from_rows(rows: &[Vec<f64>], ncols: usize) -> Result<Mat> {
    let mut m = Mat::zeros(rows.len(), ncols);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(Error::Dimension(format!(
                "row {i} has {} entries, expected {ncols}",
                r.len()
            )));
        }
        for (j, v) in r.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    Ok(m)
}

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}
