//! FEXP spectral densities and their autocovariances.
//!
//! A model `(d, k, θ)` has spectral density
//! `f(λ) = |1 - e^{iλ}|^{-2d} exp(Σ_{j=0}^{k} θ_j cos jλ)` on `[-π, π]`.
//! Autocovariances follow `γ(τ) = ∫_{-π}^{π} f(λ) e^{iτλ} dλ` with no `1/2π`
//! factor, so unit-variance white noise has `f ≡ 1/(2π)`.

use std::f64::consts::PI;

use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::quadrature::{self, PowerWeight};
use crate::toeplitz;

/// FEXP parameter triple. `k` is implied by `theta.len() - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FexpRecord", into = "FexpRecord")]
pub struct FexpModel {
    d: f64,
    theta: Vec<f64>,
}

/// Flat serialized form `{d, k, theta}`; `k` may be omitted on input.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FexpRecord {
    d: f64,
    #[serde(default)]
    k: Option<usize>,
    theta: Vec<f64>,
}

impl TryFrom<FexpRecord> for FexpModel {
    type Error = Error;

    fn try_from(r: FexpRecord) -> Result<Self> {
        if let Some(k) = r.k.filter(|&k| r.theta.len() != k + 1) {
            return Err(Error::InvalidParameter(format!(
                "k = {k} requires {} cepstral coefficients, found {}",
                k + 1,
                r.theta.len()
            )));
        }
        FexpModel::new(r.d, r.theta)
    }
}

impl From<FexpModel> for FexpRecord {
    fn from(m: FexpModel) -> Self {
        FexpRecord {
            d: m.d,
            k: Some(m.k()),
            theta: m.theta,
        }
    }
}

impl FexpModel {
    pub fn new(d: f64, theta: Vec<f64>) -> Result<Self> {
        if !(d.is_finite() && d.abs() < 0.5) {
            return Err(Error::Domain(format!(
                "memory exponent d = {d} must lie in (-1/2, 1/2)"
            )));
        }
        if theta.is_empty() {
            return Err(Error::InvalidParameter(
                "theta needs at least one coefficient".into(),
            ));
        }
        if let Some(bad) = theta.iter().find(|t| !t.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite cepstral coefficient {bad}"
            )));
        }
        Ok(FexpModel { d, theta })
    }

    /// `f ≡ c` with `d = 0, k = 0`.
    pub fn constant(c: f64) -> Result<Self> {
        if c <= 0.0 {
            return Err(Error::Domain(format!(
                "constant spectral level {c} must be positive"
            )));
        }
        FexpModel::new(0.0, vec![c.ln()])
    }

    /// Pure fractional noise `|1 - e^{iλ}|^{-2d}`.
    pub fn fractional(d: f64) -> Result<Self> {
        FexpModel::new(d, vec![0.0])
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn k(&self) -> usize {
        self.theta.len() - 1
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// The same model with `f` multiplied by `c > 0` (θ₀ shifted by `ln c`).
    pub fn scaled(&self, c: f64) -> Self {
        let mut theta = self.theta.clone();
        theta[0] += c.ln();
        FexpModel { d: self.d, theta }
    }

    pub fn with_d(&self, d: f64) -> Result<Self> {
        FexpModel::new(d, self.theta.clone())
    }

    /// `θ` zero-padded (or read) at index `j`.
    pub fn theta_at(&self, j: usize) -> f64 {
        self.theta.get(j).copied().unwrap_or(0.0)
    }

    /// `w(λ) = Σ θ_j cos jλ`.
    pub fn w(&self, lambda: f64) -> f64 {
        cosine_series(&self.theta, lambda)
    }

    /// `ln f(λ)`; `+∞`/`-∞` at `λ = 0` depending on the sign of `d`.
    pub fn log_f(&self, lambda: f64) -> f64 {
        let frac = if self.d == 0.0 {
            0.0
        } else {
            -self.d * log_fractional_factor(lambda)
        };
        frac + self.w(lambda)
    }

    /// `ln g(λ) = -d ln ψ(λ) + w(λ)`.
    pub fn log_g(&self, lambda: f64) -> f64 {
        -self.d * psi(lambda).ln() + self.w(lambda)
    }

    /// Unchecked density value, used on grids that exclude 0.
    pub(crate) fn f_unchecked(&self, lambda: f64) -> f64 {
        self.log_f(lambda).exp()
    }
}

/// Clenshaw evaluation of `Σ c_j cos jx`.
pub fn cosine_series(coeffs: &[f64], x: f64) -> f64 {
    let c = x.cos();
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &a in coeffs.iter().skip(1).rev() {
        let b0 = a + 2.0 * c * b1 - b2;
        b2 = b1;
        b1 = b0;
    }
    coeffs[0] + c * b1 - b2
}

/// `ln |1 - e^{iλ}|² = ln(4 sin²(λ/2))`, accurate near 0.
pub fn log_fractional_factor(lambda: f64) -> f64 {
    2.0 * (2.0 * (lambda / 2.0).sin().abs()).ln()
}

/// `ψ(λ) = 2(1 - cos λ)/λ²` with `ψ(0) = 1`.
pub fn psi(lambda: f64) -> f64 {
    let x = lambda / 2.0;
    if x == 0.0 {
        return 1.0;
    }
    let s = x.sin() / x;
    s * s
}

/// Evaluates `f(λ)`. Fails at `λ = 0` when `d > 0` and for `|λ| > π`.
pub fn eval_f(model: &FexpModel, lambda: f64) -> Result<f64> {
    if !(lambda.abs() <= PI) {
        return Err(Error::Domain(format!("frequency {lambda} outside [-π, π]")));
    }
    if lambda == 0.0 {
        if model.d > 0.0 {
            return Err(Error::Domain("f diverges at λ = 0 for d > 0".into()));
        }
        if model.d < 0.0 {
            return Ok(0.0);
        }
        return Ok(model.w(0.0).exp());
    }
    Ok(model.f_unchecked(lambda))
}

/// `g(λ) = ψ(λ)^{-d} e^{w(λ)}`, so that `f(λ) = |λ|^{-2d} g(λ)`.
pub fn short_memory_g(model: &FexpModel, lambda: f64) -> Result<f64> {
    if !(lambda.abs() <= PI) {
        return Err(Error::Domain(format!("frequency {lambda} outside [-π, π]")));
    }
    Ok(model.log_g(lambda).exp())
}

/// `Σ_{j=0}^{k} θ_j² (j+1)^{2β}`.
pub fn sobolev_sum(model: &FexpModel, beta: f64) -> f64 {
    sobolev_sum_of(model.theta(), beta)
}

pub(crate) fn sobolev_sum_of(theta: &[f64], beta: f64) -> f64 {
    theta
        .iter()
        .enumerate()
        .map(|(j, t)| t * t * ((j + 1) as f64).powf(2.0 * beta))
        .sum()
}

/// Parameters of the identifiability and smoothness classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessClass {
    pub t: f64,
    pub m: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub rho: f64,
    pub beta: f64,
}

impl SmoothnessClass {
    pub fn new(t: f64, m: f64, big_m: f64, l: f64, rho: f64, beta: f64) -> Result<Self> {
        let c = SmoothnessClass {
            t,
            m,
            big_m,
            l,
            rho,
            beta,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t > 0.0 && self.t < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "t = {} must lie in (0, 1/2)",
                self.t
            )));
        }
        if !(self.m > 0.0 && self.m <= self.big_m) {
            return Err(Error::InvalidParameter(format!(
                "bounds must satisfy 0 < m <= M (m = {}, M = {})",
                self.m, self.big_m
            )));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "rho = {} must lie in (0, 1]",
                self.rho
            )));
        }
        if !(self.beta > 0.5) {
            return Err(Error::InvalidParameter(format!(
                "beta = {} must exceed 1/2",
                self.beta
            )));
        }
        if !(self.l > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "L = {} must be positive",
                self.l
            )));
        }
        Ok(())
    }

    /// Whether `g` bounds from a certificate fit inside `[m, M]` with the
    /// class Hölder radius.
    pub fn contains(&self, cert: &HolderBounds) -> bool {
        cert.m_est >= self.m && cert.big_m_est <= self.big_m && cert.l_est <= self.l
    }
}

/// Certified envelope `m ≤ g ≤ M`, `|g(λ) - g(λ')| ≤ L|λ - λ'|^ρ` on `[0, π]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolderBounds {
    pub m_est: f64,
    pub big_m_est: f64,
    pub l_est: f64,
    /// Hölder constant of `w` alone: `2^{1-ρ} Σ |θ_j| j^ρ`.
    pub w_holder: f64,
    pub rho: f64,
}

/// Certified bounds on `g = ψ^{-d} e^w` for the given model.
pub fn holder_bounds(model: &FexpModel, beta: f64, rho: f64) -> Result<HolderBounds> {
    if !(rho > 0.0 && rho < beta - 0.5) {
        return Err(Error::InvalidParameter(format!(
            "Hölder exponent rho = {rho} must satisfy 0 < rho < beta - 1/2 = {}",
            beta - 0.5
        )));
    }
    let d = model.d;
    let abs_sum: f64 = model.theta.iter().map(|t| t.abs()).sum();
    // ψ ranges over [4/π², 1] on [0, π].
    let psi_min = 4.0 / (PI * PI);
    let (psi_pow_lo, psi_pow_hi) = if d >= 0.0 {
        (1.0, psi_min.powf(-d))
    } else {
        (psi_min.powf(-d), 1.0)
    };
    let w_holder = 2f64.powf(1.0 - rho)
        * model
            .theta
            .iter()
            .enumerate()
            .map(|(j, t)| t.abs() * (j as f64).powf(rho))
            .sum::<f64>();
    // |ψ'| ≤ π/6 on [0, π]; |d/dλ ψ^{-d}| ≤ |d| ψ_min^{-d-1} π/6.
    let psi_lip = d.abs() * psi_min.powf(-d - 1.0) * PI / 6.0;
    let ew = abs_sum.exp();
    let l_est = ew * (psi_lip * PI.powf(1.0 - rho) + psi_pow_hi * w_holder);
    Ok(HolderBounds {
        m_est: (-abs_sum).exp() * psi_pow_lo,
        big_m_est: ew * psi_pow_hi,
        l_est,
        w_holder,
        rho,
    })
}

/// Upper bound on `Σ_j |θ_j| j^ρ` over the Sobolev ball of radius `L`:
/// `L + Σ_{j≥0} (j+1)^{2ρ-2β}`.
pub fn sobolev_holder_radius(l: f64, beta: f64, rho: f64) -> Result<f64> {
    let s = 2.0 * beta - 2.0 * rho;
    if s <= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "series Σ (j+1)^(2ρ-2β) diverges for rho = {rho}, beta = {beta}"
        )));
    }
    Ok(l + zeta(s))
}

/// Riemann zeta for `s > 1` (partial sum plus Euler–Maclaurin tail).
pub(crate) fn zeta(s: f64) -> f64 {
    const N: usize = 64;
    let partial: f64 = (1..N).map(|j| (j as f64).powf(-s)).sum();
    let n = N as f64;
    partial + n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s) + s / 12.0 * n.powf(-s - 1.0)
        - s * (s + 1.0) * (s + 2.0) / 720.0 * n.powf(-s - 3.0)
}

/// Autocovariances `γ(0..n-1)`, the first column of `T_n(f)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AutocovSeq(Vec<f64>);

impl AutocovSeq {
    pub fn new(gamma: Vec<f64>) -> Result<Self> {
        match gamma.first() {
            None => Err(Error::InvalidParameter(
                "empty autocovariance sequence".into(),
            )),
            Some(&g0) if !(g0 > 0.0) => Err(Error::Domain(format!("γ(0) = {g0} must be positive"))),
            _ if gamma.iter().any(|g| !g.is_finite()) => {
                Err(Error::Domain("non-finite autocovariance".into()))
            }
            _ => Ok(AutocovSeq(gamma)),
        }
    }

    pub fn gamma(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Levinson prediction-variance positivity test.
    pub fn is_positive_definite(&self) -> bool {
        toeplitz::prediction_variances(&self.0).is_ok()
    }
}

/// Autocovariance of `|1 - e^{iλ}|^{-2d}` at lags `0..n-1`.
pub fn arfima_acf(d: f64, n: usize) -> Result<AutocovSeq> {
    if !(d.abs() < 0.5) {
        return Err(Error::Domain(format!(
            "memory exponent d = {d} must lie in (-1/2, 1/2)"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidParameter(
            "autocovariance length must be positive".into(),
        ));
    }
    Ok(AutocovSeq(arfima_acf_raw(d, n)))
}

fn arfima_acf_raw(d: f64, n: usize) -> Vec<f64> {
    let mut g = Vec::with_capacity(n);
    g.push(2.0 * PI * (ln_gamma(1.0 - 2.0 * d) - 2.0 * ln_gamma(1.0 - d)).exp());
    for tau in 1..n {
        let t = tau as f64;
        let prev = g[tau - 1];
        g.push(prev * (t - 1.0 + d) / (t - d));
    }
    g
}

/// Fourier coefficients `a_m` of `exp(w(λ)) = Σ_m a_m e^{imλ}`, `m = 0..len`,
/// truncated once the remaining tail is negligible.
fn smooth_factor_coefficients(theta: &[f64]) -> Result<Vec<f64>> {
    // exp(w) is entire, so its coefficients decay faster than geometrically;
    // the grid only has to resolve them, independently of n.
    let mut size = (8 * theta.len()).next_power_of_two().max(64);
    let mut planner = FftPlanner::<f64>::new();
    let mut coeffs = |size: usize| -> Vec<f64> {
        let mut buf: Vec<Complex64> = (0..size)
            .map(|l| {
                let x = 2.0 * PI * l as f64 / size as f64;
                Complex64::new(cosine_series(theta, x).exp(), 0.0)
            })
            .collect();
        planner.plan_fft_forward(size).process(&mut buf);
        buf[..size / 2].iter().map(|c| c.re / size as f64).collect()
    };
    let mut current = coeffs(size);
    loop {
        let finer = coeffs(2 * size);
        let scale = current[0].abs();
        let agree = current
            .iter()
            .zip(&finer)
            .all(|(a, b)| (a - b).abs() <= 1e-10 * scale);
        current = finer;
        size *= 2;
        if agree {
            break;
        }
        if size > 1 << 24 {
            return Err(Error::Quadrature(
                "smooth-factor Fourier coefficients did not settle".into(),
            ));
        }
    }
    // Truncate: keep m ≤ M with Σ_{|m|>M} |a_m| ≤ 1e-15 Σ |a_m|.
    let total: f64 = current[0].abs() + 2.0 * current[1..].iter().map(|a| a.abs()).sum::<f64>();
    let mut tail = 0.0;
    let mut cut = current.len();
    for m in (1..current.len()).rev() {
        tail += 2.0 * current[m].abs();
        if tail > 1e-15 * total {
            cut = m + 1;
            break;
        }
    }
    current.truncate(cut.max(1));
    Ok(current)
}

/// `γ_f(0..n-1)` by convolving the closed-form fractional autocovariance with
/// the Fourier coefficients of the analytic factor `exp(w)`.
pub fn autocov(model: &FexpModel, n: usize) -> Result<AutocovSeq> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "autocovariance length must be positive".into(),
        ));
    }
    let a = smooth_factor_coefficients(&model.theta)?;
    let m_max = a.len() - 1;
    let gd = arfima_acf_raw(model.d, n + m_max);
    let gamma: Vec<f64> = (0..n)
        .map(|tau| {
            let mut s = a[0] * gd[tau];
            for (m, &am) in a.iter().enumerate().skip(1) {
                s += am * (gd[tau + m] + gd[tau.abs_diff(m)]);
            }
            s
        })
        .collect();
    AutocovSeq::new(gamma)
}

/// Relative accuracy targeted by the quadrature oracle; failure is reported
/// only if it cannot reach `1e-8 γ(0)`.
const QUAD_TARGET: f64 = 1e-13;
const QUAD_REQUIRED: f64 = 1e-8;

/// `γ_f(τ) = 2∫_0^π f(λ) cos(τλ) dλ` by singular-aware quadrature.
pub fn quadrature_autocov(model: &FexpModel, tau: usize) -> Result<f64> {
    Ok(quadrature_autocov_lags(model, &[tau])?[0])
}

/// The quadrature oracle for several lags, sharing one set of Gauss–Jacobi
/// rules.
pub fn quadrature_autocov_lags(model: &FexpModel, lags: &[usize]) -> Result<Vec<f64>> {
    let a = -2.0 * model.d;
    let near = PowerWeight::new(a, quadrature::SINGULAR_SPLIT)?;
    let g = |x: f64| model.log_g(x).exp();
    let f = |x: f64| model.f_unchecked(x);
    // Scale estimate: ∫_0^π f.
    let scale = 2.0
        * (near.integrate(g, 1e-6)? + quadrature::smooth(quadrature::SINGULAR_SPLIT, PI, f, 1e-6)?);
    lags.iter()
        .map(|&tau| {
            let t = tau as f64;
            let run = |tol: f64| -> Result<f64> {
                let lo = near.integrate(|x| g(x) * (t * x).cos(), tol / 4.0)?;
                let hi = quadrature::smooth(
                    quadrature::SINGULAR_SPLIT,
                    PI,
                    |x| f(x) * (t * x).cos(),
                    tol / 4.0,
                )?;
                Ok(2.0 * (lo + hi))
            };
            run(QUAD_TARGET * scale).or_else(|_| run(QUAD_REQUIRED * scale))
        })
        .collect()
}
