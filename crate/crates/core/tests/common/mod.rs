#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use swdae::linalg::{block_diag, mat_from_rows, Mat, Vector};
use swdae::simulator::{Mode, SwitchedSystem};

pub const EXAMPLE1: &str = include_str!("../../scenarios/example1.json");
pub const EXAMPLE2: &str = include_str!("../../scenarios/example2.json");

pub fn m(rows: &[&[f64]]) -> Mat {
    let v: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
    mat_from_rows(&v, rows[0].len()).unwrap()
}

pub fn v(x: &[f64]) -> Vector {
    Vector::from_row_slice(x)
}

pub fn example1_modes() -> Vec<Mode> {
    let hold = Mode::autonomous("hold", Mat::identity(3, 3), Mat::zeros(3, 3), m(&[&[1.0, 0.0, 0.0]])).unwrap();
    let a = m(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 0.0], &[0.0, 1.0, -1.0]]);
    let mix = Mode::autonomous("mix", Mat::identity(3, 3), a, Mat::zeros(1, 3)).unwrap();
    vec![hold, mix]
}

pub fn example1(repeats: usize) -> SwitchedSystem {
    SwitchedSystem::periodic(example1_modes(), vec![(0, 1.0), (1, 1.0), (0, 1.0)], repeats).unwrap()
}

pub fn example2_modes() -> Vec<Mode> {
    let a0 = m(&[&[0.0, 0.0, 1.0, 0.0], &[0.0; 4], &[0.0; 4], &[0.0, 0.0, 1.0, -1.0]]);
    let ode = Mode::autonomous("ode", Mat::identity(4, 4), a0, Mat::zeros(1, 4)).unwrap();
    let e = m(&[&[0.0; 4], &[1.0, 0.0, 0.0, 0.0], &[0.0, 0.0, 1.0, 0.0], &[0.0, 0.0, 0.0, 1.0]]);
    let a = m(&[&[1.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0], &[0.0; 4], &[0.0, 0.0, 1.0, -1.0]]);
    let dae = Mode::autonomous("dae", e, a, m(&[&[0.0, 1.0, 0.0, 0.0]])).unwrap();
    vec![ode, dae]
}

pub fn example2(repeats: usize) -> SwitchedSystem {
    SwitchedSystem::periodic(example2_modes(), vec![(0, 1.0), (1, 1.0)], repeats).unwrap()
}

pub fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

pub fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
}

/// Well-conditioned random matrix `I + 0.4 R`.
pub fn rand_transform(rng: &mut ChaCha8Rng, n: usize) -> Mat {
    Mat::identity(n, n) + rand_mat(rng, n, n) * 0.4
}

/// Nilpotent matrix with one Jordan block of size 2 (index 2) and zeros elsewhere.
pub fn index2_nilpotent(n2: usize) -> Mat {
    let mut nil = Mat::zeros(n2, n2);
    nil[(0, 1)] = 1.0;
    nil
}

/// `(S diag(I, N) T, S diag(J, I) T)` with `dim J = n1` and an index-2 `N`.
pub fn rand_dae_pair(rng: &mut ChaCha8Rng, n: usize, n1: usize) -> (Mat, Mat) {
    assert!(n >= n1 + 2);
    let s = rand_transform(rng, n);
    let t = rand_transform(rng, n);
    let j = rand_mat(rng, n1, n1);
    let e = block_diag(&Mat::identity(n1, n1), &index2_nilpotent(n - n1));
    let a = block_diag(&j, &Mat::identity(n - n1, n - n1));
    (&s * e * &t, &s * a * &t)
}

/// ODE mode in disguised Kalman form: the last `n - n_o` coordinates (before
/// the change of basis) are unobservable and mildly stable.
pub fn rand_ode_mode(rng: &mut ChaCha8Rng, n: usize, ny: usize, name: &str) -> Mode {
    let n_o = rng.gen_range(0..=n);
    let mut a = rand_mat(rng, n, n);
    for i in 0..n_o {
        for j in n_o..n {
            a[(i, j)] = 0.0;
        }
    }
    for i in n_o..n {
        a[(i, i)] -= 0.5;
    }
    let mut c = Mat::zeros(ny, n);
    c.columns_mut(0, n_o).copy_from(&rand_mat(rng, ny, n_o));
    let t = rand_transform(rng, n);
    let t_inv = t.clone().try_inverse().unwrap();
    Mode::autonomous(name, Mat::identity(n, n), &t * a * &t_inv, c * t_inv).unwrap()
}

pub fn rand_dae_mode(rng: &mut ChaCha8Rng, n: usize, ny: usize, name: &str) -> Mode {
    let n1 = rng.gen_range(1..=n - 2);
    let (e, a) = rand_dae_pair(rng, n, n1);
    let c = if rng.gen_bool(0.4) { Mat::zeros(ny, n) } else { rand_mat(rng, ny, n) };
    Mode::autonomous(name, e, a, c).unwrap()
}
