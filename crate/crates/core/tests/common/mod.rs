//! Oracles shared by the integration tests. Nothing here calls into the
//! library's own numerics beyond building models.
#![allow(dead_code)]

use std::f64::consts::PI;

use longmem::FexpModel;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use statrs::function::gamma::ln_gamma;

/// Random FEXP model with `|d| ≤ d_max` and up to `k_max + 1` decaying
/// coefficients.
pub fn random_model<R: Rng>(rng: &mut R, d_max: f64, k_max: usize) -> FexpModel {
    let d = rng.random_range(-d_max..=d_max);
    let k = rng.random_range(0..=k_max);
    let theta = (0..=k)
        .map(|j| {
            Normal::new(0.0, 0.6 * ((j + 1) as f64).powf(-1.5))
                .unwrap()
                .sample(rng)
        })
        .collect();
    FexpModel::new(d, theta).unwrap()
}

pub fn toeplitz(gamma: &[f64]) -> DMatrix<f64> {
    let n = gamma.len();
    DMatrix::from_fn(n, n, |i, j| gamma[i.abs_diff(j)])
}

pub fn cholesky(gamma: &[f64]) -> Cholesky<f64, Dyn> {
    toeplitz(gamma).cholesky().expect("positive definite")
}

pub fn chol_logdet(c: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * c.l().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

pub fn chol_quadform(c: &Cholesky<f64, Dyn>, x: &[f64]) -> f64 {
    let v = DVector::from_column_slice(x);
    v.dot(&c.solve(&v))
}

/// `γ(0)` and the ratio recursion of `|1 - e^{iλ}|^{-2d}` with no `1/2π`.
pub fn fractional_acf(d: f64, n: usize) -> Vec<f64> {
    let g0 = 2.0 * PI * (ln_gamma(1.0 - 2.0 * d) - 2.0 * ln_gamma(1.0 - d)).exp();
    let mut g = vec![g0];
    for tau in 1..n {
        let t = tau as f64;
        g.push(g[tau - 1] * (t - 1.0 + d) / (t - d));
    }
    g
}

/// `∫_{-π}^{π} exp(Σ θ_j cos jλ) cos τλ dλ` by the periodic trapezoid rule,
/// exact to rounding for smooth periodic integrands once `m` is large.
pub fn smooth_acf(theta: &[f64], n: usize, m: usize) -> Vec<f64> {
    let h = 2.0 * PI / m as f64;
    let vals: Vec<f64> = (0..m)
        .map(|i| {
            let l = i as f64 * h;
            theta
                .iter()
                .enumerate()
                .map(|(j, t)| t * (j as f64 * l).cos())
                .sum::<f64>()
                .exp()
        })
        .collect();
    (0..n)
        .map(|tau| {
            h * vals
                .iter()
                .enumerate()
                .map(|(i, v)| v * (tau as f64 * i as f64 * h).cos())
                .sum::<f64>()
        })
        .collect()
}

/// Dense `(1/2n)[tr(A B^{-1}) - n - ln det(A B^{-1})]`.
pub fn dense_kl(ga: &[f64], gb: &[f64]) -> f64 {
    let n = ga.len() as f64;
    let (a, cb) = (toeplitz(ga), cholesky(gb));
    let tr = cb.solve(&a).trace();
    let ld = chol_logdet(&cholesky(ga)) - chol_logdet(&cb);
    (tr - n - ld) / (2.0 * n)
}

/// Dense `(1/n) tr[(B^{-1}(A - B))²]`.
pub fn dense_b(ga: &[f64], gb: &[f64]) -> f64 {
    let diff = toeplitz(ga) - toeplitz(gb);
    let p = cholesky(gb).solve(&diff);
    (&p * &p).trace() / ga.len() as f64
}

/// One-sample Kolmogorov–Smirnov statistic against a continuous cdf.
pub fn ks_statistic(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(|a, b| a.total_cmp(b));
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max)
}
