//! Independent oracles and random instances shared by the integration tests.
#![allow(dead_code)]

use mvlink::{center_data, DMatrix, RegressionData};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Sparse linear signal plus unit noise.
pub fn raw_instance(seed: u64, n: usize, p: usize, q: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut r = rng(seed);
    let x = gaussian(&mut r, n, p);
    let beta = DMatrix::from_fn(p, q, |i, j| if (i + j) % 3 == 0 { 1.0 + 0.1 * i as f64 } else { 0.0 });
    let noise = gaussian(&mut r, n, q);
    let y = &x * beta + noise;
    (x, y)
}

pub fn instance(seed: u64, n: usize, p: usize, q: usize) -> RegressionData {
    let (x, y) = raw_instance(seed, n, p, q);
    center_data(&x, &y, None, None).unwrap()
}

/// About `frac` of the response entries unobserved, at least two observed
/// per column.
pub fn random_mask(seed: u64, n: usize, q: usize, frac: f64) -> DMatrix<bool> {
    let mut r = rng(seed ^ 0xABCD);
    let mut mask = DMatrix::from_fn(n, q, |_, _| r.random::<f64>() >= frac);
    for j in 0..q {
        mask[(0, j)] = true;
        mask[(1, j)] = true;
    }
    mask
}

pub fn masked_instance(seed: u64, n: usize, p: usize, q: usize, frac: f64) -> RegressionData {
    let (x, mut y) = raw_instance(seed, n, p, q);
    let mask = random_mask(seed, n, q, frac);
    for (v, o) in y.iter_mut().zip(mask.iter()) {
        if !o {
            *v = f64::NAN;
        }
    }
    center_data(&x, &y, None, Some(&mask)).unwrap()
}

fn soft(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

/// Cyclic coordinate descent for `n⁻¹‖y - Xb‖² + λ‖b‖₁`, one response at a
/// time, with `x` and `y` as given (no centering).
pub fn cd_lasso(x: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let (n, p) = x.shape();
    let nf = n as f64;
    let mut beta = DMatrix::zeros(p, y.ncols());
    for k in 0..y.ncols() {
        let mut b = vec![0.0; p];
        let mut r: Vec<f64> = y.column(k).iter().copied().collect();
        for _sweep in 0..200_000 {
            let mut largest = 0.0_f64;
            for j in 0..p {
                let xj = x.column(j);
                let sq: f64 = xj.iter().map(|v| v * v).sum();
                if sq == 0.0 {
                    continue;
                }
                let partial: f64 = xj.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() + sq * b[j];
                let new = soft(2.0 * partial / nf, lambda) / (2.0 * sq / nf);
                let change = new - b[j];
                if change != 0.0 {
                    for (ri, xi) in r.iter_mut().zip(xj.iter()) {
                        *ri -= change * xi;
                    }
                    b[j] = new;
                }
                largest = largest.max(change.abs());
            }
            if largest < 1e-14 {
                break;
            }
        }
        for j in 0..p {
            beta[(j, k)] = b[j];
        }
    }
    beta
}

/// Least squares via the normal equations.
pub fn ols(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    x.tr_mul(x).cholesky().expect("full rank").solve(&x.tr_mul(y))
}

/// Central finite-difference gradient.
pub fn fd_gradient(f: impl Fn(&DMatrix<f64>) -> f64, at: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(at.nrows(), at.ncols());
    for i in 0..at.nrows() {
        for j in 0..at.ncols() {
            let mut plus = at.clone();
            plus[(i, j)] += h;
            let mut minus = at.clone();
            minus[(i, j)] -= h;
            g[(i, j)] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
    }
    g
}

/// Golden-section minimization of a unimodal scalar function on `[lo, hi]`.
pub fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - ratio * (hi - lo);
    let mut b = lo + ratio * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..300 {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - ratio * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + ratio * (hi - lo);
            fb = f(b);
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Entrywise prox of `t_k|x|` (column `k`) by golden section.
pub fn scalar_prox_oracle(m: &DMatrix<f64>, t: f64, weights: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, k| {
        let v = m[(i, k)];
        let tk = t * weights[k];
        let span = v.abs() + tk + 1.0;
        golden_min(|x| 0.5 * (x - v).powi(2) + tk * x.abs(), -span, span)
    })
}

fn clip_box(v: &[f64], t: f64) -> Vec<f64> {
    v.iter().map(|x| x.clamp(-t, t)).collect()
}

fn project_ball(v: &[f64], t: f64) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= t {
        v.to_vec()
    } else {
        v.iter().map(|x| x * t / norm).collect()
    }
}

/// Row prox of `t1‖x‖₁ + t2‖x‖₂` through its dual: `x = m - u - v` with
/// `(u, v)` minimizing `‖m - u - v‖²` over `‖u‖∞ ≤ t1`, `‖v‖₂ ≤ t2`, solved by
/// block coordinate descent.
pub fn row_prox_dual_oracle(m: &DMatrix<f64>, t1: f64, t2: f64) -> DMatrix<f64> {
    let q = m.ncols();
    let mut out = DMatrix::zeros(m.nrows(), q);
    for i in 0..m.nrows() {
        let row: Vec<f64> = m.row(i).iter().copied().collect();
        let mut u = vec![0.0; q];
        let mut v = vec![0.0; q];
        for _ in 0..200_000 {
            let before: Vec<f64> = u.iter().chain(&v).copied().collect();
            let for_u: Vec<f64> = row.iter().zip(&v).map(|(a, b)| a - b).collect();
            u = clip_box(&for_u, t1);
            let for_v: Vec<f64> = row.iter().zip(&u).map(|(a, b)| a - b).collect();
            v = project_ball(&for_v, t2);
            let moved = before
                .iter()
                .zip(u.iter().chain(&v))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if moved < 1e-16 {
                break;
            }
        }
        for k in 0..q {
            out[(i, k)] = row[k] - u[k] - v[k];
        }
    }
    out
}

/// Singular value thresholding computed from the eigendecomposition of
/// `M'M` rather than an SVD of `M`.
pub fn nuclear_prox_eig_oracle(m: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let eig = m.tr_mul(m).symmetric_eigen();
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for (idx, &lam) in eig.eigenvalues.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        if s <= t || s < 1e-12 {
            continue;
        }
        let v = eig.eigenvectors.column(idx).into_owned();
        let u = m * &v / s;
        out += u * v.transpose() * (s - t);
    }
    out
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
}

/// `‖V'(Y - Vη - Xβ)‖_max` on the centered data.
pub fn covariate_first_order(data: &RegressionData, beta: &DMatrix<f64>, eta: &DMatrix<f64>) -> f64 {
    let v = data.covariates().unwrap();
    max_abs(&v.tr_mul(&(data.y() - v * eta - data.x() * beta)))
}
