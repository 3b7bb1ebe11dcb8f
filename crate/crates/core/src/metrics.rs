//! Divergences between spectral densities, in finite-`n` matrix form and in
//! limiting integral form, plus empirical checks of the inequalities that
//! relate them.
//!
//! Naming follows the argument order `(f0, f)`: `kl_n(f0, f, n)` is the
//! divergence of the model `f` from the reference `f0`. Limits that do not
//! exist (non-integrable ratio at the origin) come back as `f64::INFINITY`.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature;
use crate::spectral::{
    autocov, cosine_series, holder_bounds, log_fractional_factor, psi, FexpModel, SmoothnessClass,
};
use crate::toeplitz::{self, dense, inverse_raw, trace_of_product, DENSE_CAP};

/// All seven quantities for one pair of densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DivergenceReport {
    pub n: usize,
    pub kl_n: f64,
    pub kl_inf: f64,
    pub h_n: f64,
    pub h: f64,
    pub b_n: f64,
    pub b: f64,
    pub ell: f64,
}

impl DivergenceReport {
    pub fn compute(f0: &FexpModel, f: &FexpModel, n: usize) -> Result<Self> {
        Ok(DivergenceReport {
            n,
            kl_n: kl_n(f0, f, n)?,
            kl_inf: kl_inf(f0, f),
            h_n: h_n(f0, f, n)?,
            h: h_lim(f0, f),
            b_n: b_n(f0, f, n)?,
            b: b_lim(f0, f),
            ell: ell(f0, f),
        })
    }

    pub const CSV_HEADER: [&'static str; 8] =
        ["n", "kl_n", "kl_inf", "h_n", "h", "b_n", "b", "ell"];

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(Self::CSV_HEADER)?;
        w.write_record(self.csv_record())?;
        w.flush()?;
        Ok(())
    }

    pub fn csv_record(&self) -> [String; 8] {
        [
            self.n.to_string(),
            fmt(self.kl_n),
            fmt(self.kl_inf),
            fmt(self.h_n),
            fmt(self.h),
            fmt(self.b_n),
            fmt(self.b),
            fmt(self.ell),
        ]
    }
}

pub(crate) fn fmt(x: f64) -> String {
    format!("{x:.17e}")
}

/// `tr[T(γ_num) T(γ_den)^{-1}]` in O(n²) time and O(n) memory, summing the
/// Gohberg–Semencul inverse along its diagonals.
pub fn trace_ratio(gamma_num: &[f64], gamma_den: &[f64]) -> Result<f64> {
    let n = gamma_den.len();
    if gamma_num.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: gamma_num.len(),
        });
    }
    let (phi, v) = toeplitz::durbin(gamma_den)?;
    let vn = v[n - 1];
    let mut a = Vec::with_capacity(n);
    a.push(1.0);
    a.extend(phi.iter().map(|p| -p));
    let b = |k: usize| if k == 0 { 0.0 } else { a[n - k] };
    let mut total = 0.0;
    for delta in 0..n {
        // Σ_j (T^{-1})_{j+δ, j}
        let mut s = 0.0;
        for l in 0..n - delta {
            let w = (n - delta - l) as f64;
            s += w * (a[delta + l] * a[l] - b(delta + l) * b(l));
        }
        let weight = if delta == 0 { 1.0 } else { 2.0 };
        total += weight * gamma_num[delta] * s / vn;
    }
    Ok(total)
}

fn logdet_of(gamma: &[f64]) -> Result<f64> {
    Ok(toeplitz::prediction_variances(gamma)?
        .iter()
        .map(|v| v.ln())
        .sum())
}

/// `(1/2n){tr[T_n(f0)T_n(f)^{-1} - I] - ln det(T_n(f0)T_n(f)^{-1})}`.
pub fn kl_n(f0: &FexpModel, f: &FexpModel, n: usize) -> Result<f64> {
    let g0 = autocov(f0, n)?;
    let g = autocov(f, n)?;
    kl_n_from_gamma(g0.gamma(), g.gamma())
}

pub(crate) fn kl_n_from_gamma(g0: &[f64], g: &[f64]) -> Result<f64> {
    let n = g.len() as f64;
    let tr = trace_ratio(g0, g)?;
    let ld = logdet_of(g0)? - logdet_of(g)?;
    Ok((tr - n - ld) / (2.0 * n))
}

/// `KL_n(f0; f) + KL_n(f; f0)`; the log-determinants cancel.
pub fn h_n(f0: &FexpModel, f: &FexpModel, n: usize) -> Result<f64> {
    let g0 = autocov(f0, n)?;
    let g = autocov(f, n)?;
    let nf = n as f64;
    let tr = trace_ratio(g0.gamma(), g.gamma())? + trace_ratio(g.gamma(), g0.gamma())?;
    Ok((tr - 2.0 * nf) / (2.0 * nf))
}

/// `(1/n) tr[(T_n(f)^{-1} T_n(f0 - f))²]`. Dense; `n ≤ 2048`.
pub fn b_n(f0: &FexpModel, f: &FexpModel, n: usize) -> Result<f64> {
    if n > DENSE_CAP {
        return Err(Error::InvalidParameter(format!(
            "b_n is dense; n = {n} exceeds {DENSE_CAP}"
        )));
    }
    let g0 = autocov(f0, n)?;
    let g = autocov(f, n)?;
    let diff: Vec<f64> = g0
        .gamma()
        .iter()
        .zip(g.gamma())
        .map(|(a, b)| a - b)
        .collect();
    let p = inverse_raw(g.gamma())? * dense(&diff);
    Ok(trace_of_product(&p, &p) / n as f64)
}

/// `u(λ) = ln f0(λ) - ln f(λ)`.
fn log_ratio(f0: &FexpModel, f: &FexpModel) -> impl Fn(f64) -> f64 {
    let delta_d = f0.d() - f.d();
    let k = f0.k().max(f.k());
    let dtheta: Vec<f64> = (0..=k).map(|j| f0.theta_at(j) - f.theta_at(j)).collect();
    move |x| {
        let frac = if delta_d == 0.0 {
            0.0
        } else {
            -delta_d * log_fractional_factor(x)
        };
        frac + cosine_series(&dtheta, x)
    }
}

/// `(1/2π) ∫ f0/f dλ`, the limit of `(1/n) tr[T_n(f0) T_n(f)^{-1}]`.
pub fn ratio_integral(f0: &FexpModel, f: &FexpModel) -> f64 {
    if f0.d() - f.d() >= 0.5 {
        return f64::INFINITY;
    }
    let u = log_ratio(f0, f);
    quadrature::graded(|x| u(x).exp()) / PI
}

/// `(1/4π) ∫ [f0/f - 1 - ln(f0/f)] dλ`.
pub fn kl_inf(f0: &FexpModel, f: &FexpModel) -> f64 {
    if f0.d() - f.d() >= 0.5 {
        return f64::INFINITY;
    }
    let u = log_ratio(f0, f);
    quadrature::graded(|x| {
        let ux = u(x);
        ux.exp_m1() - ux
    }) / (2.0 * PI)
}

/// `(1/2π) ∫_0^π (f0/f - 1)² (f/f0) dλ`, the symmetrised limit.
pub fn h_lim(f0: &FexpModel, f: &FexpModel) -> f64 {
    if (f0.d() - f.d()).abs() >= 0.5 {
        return f64::INFINITY;
    }
    let u = log_ratio(f0, f);
    quadrature::graded(|x| {
        let s = (0.5 * u(x)).sinh();
        4.0 * s * s
    }) / (2.0 * PI)
}

/// `(1/4π) ∫ [f0/f + f/f0 - 2] dλ`, with each ratio integrated against its own
/// algebraic weight. Agrees with [`h_lim`] algebraically.
pub fn h_lim_sum_form(f0: &FexpModel, f: &FexpModel) -> Result<f64> {
    let delta_d = f0.d() - f.d();
    if delta_d.abs() >= 0.5 {
        return Ok(f64::INFINITY);
    }
    let k = f0.k().max(f.k());
    let dtheta: Vec<f64> = (0..=k).map(|j| f0.theta_at(j) - f.theta_at(j)).collect();
    // f0/f = λ^{-2Δ} s(λ), s = ψ^{-Δ} e^{Δw}
    let log_s = |x: f64| -delta_d * psi(x).ln() + cosine_series(&dtheta, x);
    // Relative tolerance: near |Δd| = ½ the pieces grow like 1/(1 - 2|Δd|).
    let fine = |a: f64, h: &dyn Fn(f64) -> f64| -> Result<f64> {
        let rough = quadrature::algebraic_singular(a, h, 1e-6)?;
        quadrature::algebraic_singular(a, h, 1e-14 * rough.abs().max(1.0))
    };
    let up = fine(-2.0 * delta_d, &|x| log_s(x).exp())?;
    let down = fine(2.0 * delta_d, &|x| (-log_s(x)).exp())?;
    Ok((up + down - 2.0 * PI) / (2.0 * PI))
}

/// `(1/4π) ∫ (f0/f - 1)² dλ`.
pub fn b_lim(f0: &FexpModel, f: &FexpModel) -> f64 {
    if f0.d() - f.d() >= 0.25 {
        return f64::INFINITY;
    }
    let u = log_ratio(f0, f);
    quadrature::graded(|x| u(x).exp_m1().powi(2)) / (2.0 * PI)
}

/// `∫_{-π}^{π} (ln f0 - ln f)² dλ`.
pub fn ell(f0: &FexpModel, f: &FexpModel) -> f64 {
    let u = log_ratio(f0, f);
    2.0 * quadrature::graded(|x| u(x).powi(2))
}

/// Both sides of the matrix-norm inequality between `b_n` and `h_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormInequality {
    pub n: usize,
    /// `2n b_n(f1, f2)`
    pub lhs: f64,
    /// `‖T_n(f2)^{-1/2} T_n(f1)^{1/2}‖²`, the top eigenvalue of `T(f2)^{-1}T(f1)`.
    pub op_norm_sq: f64,
    pub h_n: f64,
    /// `n ‖·‖² h_n` as literally stated.
    pub stated_rhs: f64,
    /// `4n ‖·‖² h_n`, which the eigenvalue argument `Σ(μ-1)² ≤ μ_max Σ(μ-1)²/μ`
    /// actually delivers.
    pub corrected_rhs: f64,
}

impl NormInequality {
    pub fn stated_holds(&self) -> bool {
        self.lhs <= self.stated_rhs * (1.0 + 1e-10) + 1e-14
    }

    pub fn corrected_holds(&self) -> bool {
        self.lhs <= self.corrected_rhs * (1.0 + 1e-10) + 1e-14
    }
}

/// Evaluates `2n b_n(f1,f2)` against `n‖T(f2)^{-1/2}T(f1)^{1/2}‖² h_n(f1,f2)`
/// with dense eigenvalues. `n ≤ 512`.
pub fn norm_inequality(f1: &FexpModel, f2: &FexpModel, n: usize) -> Result<NormInequality> {
    if n == 0 || n > 512 {
        return Err(Error::InvalidParameter(format!(
            "dimension {n} outside 1..=512"
        )));
    }
    let t1 = dense(autocov(f1, n)?.gamma());
    let t2 = dense(autocov(f2, n)?.gamma());
    let chol = Cholesky::new(t2.clone()).ok_or(Error::Breakdown {
        order: n,
        variance: 0.0,
    })?;
    let l = chol.l();
    // S = L^{-1} T1 L^{-T}
    let y = l.solve_lower_triangular(&t1).ok_or(Error::Breakdown {
        order: n,
        variance: 0.0,
    })?;
    let s = l
        .solve_lower_triangular(&y.transpose())
        .ok_or(Error::Breakdown {
            order: n,
            variance: 0.0,
        })?;
    let s = (&s + s.transpose()) * 0.5;
    let mu = SymmetricEigen::new(s).eigenvalues;
    let mu_max = mu.iter().cloned().fold(f64::MIN, f64::max);
    let b = b_n(f1, f2, n)?;
    let h = h_n(f1, f2, n)?;
    let nf = n as f64;
    Ok(NormInequality {
        n,
        lhs: 2.0 * nf * b,
        op_norm_sq: mu_max,
        h_n: h,
        stated_rhs: nf * mu_max * h,
        corrected_rhs: 4.0 * nf * mu_max * h,
    })
}

/// One inequality evaluation in the verification suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaCheck {
    pub lemma: &'static str,
    pub trial: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// Settings for [`verify_appendix_d`] beyond the smoothness class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppendixDOptions {
    /// Margin `τ` in the `b ≤ C h` inequality (`d - d0 < 1/4 - τ`).
    pub tau: f64,
    /// Dimension for the finite-`n` inequality.
    pub n: usize,
    /// Largest truncation order in random draws.
    pub max_k: usize,
}

impl Default for AppendixDOptions {
    fn default() -> Self {
        AppendixDOptions {
            tau: 0.05,
            n: 64,
            max_k: 4,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct AppendixDReport {
    pub checks: Vec<LemmaCheck>,
}

impl AppendixDReport {
    pub fn violations(&self) -> Vec<&LemmaCheck> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    pub fn count(&self, lemma: &str) -> usize {
        self.checks.iter().filter(|c| c.lemma == lemma).count()
    }

    /// Columns `lemma,trial,lhs,rhs,pass`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["lemma", "trial", "lhs", "rhs", "pass"])?;
        for c in &self.checks {
            w.write_record([
                c.lemma.to_string(),
                c.trial.to_string(),
                fmt(c.lhs),
                fmt(c.rhs),
                c.pass.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub const LEMMA_H_LOWER: &str = "D1_h_lower";
pub const LEMMA_B_LOWER: &str = "D2_b_lower";
pub const LEMMA_B_LE_CH: &str = "D3_b_le_Ch";
pub const LEMMA_KL_N: &str = "D4_kln_ge_bn";
pub const LEMMA_H_7EPS: &str = "D5_h_le_7eps";

/// Random `θ` inside the Sobolev ball of radius `l`.
fn random_theta<R: Rng + ?Sized>(rng: &mut R, max_k: usize, beta: f64, l: f64) -> Vec<f64> {
    let k = rng.random_range(0..=max_k);
    let raw: Vec<f64> = (0..=k)
        .map(|j| (2.0 * rng.random::<f64>() - 1.0) * ((j + 1) as f64).powf(-beta))
        .collect();
    let s = crate::spectral::sobolev_sum_of(&raw, beta);
    let target = l * rng.random::<f64>();
    let scale = if s > 0.0 { (target / s).sqrt() } else { 0.0 };
    raw.into_iter().map(|t| t * scale).collect()
}

fn random_d<R: Rng + ?Sized>(rng: &mut R, t: f64) -> f64 {
    // Lemmas are stated for d in (0, 1/2); keep the class gap t at the top.
    1e-6 + (0.5 - t - 1e-6) * rng.random::<f64>()
}

/// Common certified bounds `m ≤ g, g0 ≤ M`.
fn common_bounds(f: &FexpModel, f0: &FexpModel, class: &SmoothnessClass) -> Result<(f64, f64)> {
    let rho = class.rho.min(0.999 * (class.beta - 0.5));
    let a = holder_bounds(f, class.beta, rho)?;
    let b = holder_bounds(f0, class.beta, rho)?;
    Ok((a.m_est.min(b.m_est), a.big_m_est.max(b.big_m_est)))
}

/// Draws random pairs inside `class` and evaluates the five inequalities on
/// `h`, `b`, `KL_n` and `b_n`. Violations are returned as data.
pub fn verify_appendix_d<R: Rng + ?Sized>(
    rng: &mut R,
    trials: usize,
    class: &SmoothnessClass,
    opts: &AppendixDOptions,
) -> Result<AppendixDReport> {
    class.validate()?;
    if trials == 0 {
        return Err(Error::InvalidParameter(
            "at least one trial is required".into(),
        ));
    }
    let mut report = AppendixDReport::default();
    let draw = |rng: &mut R| -> Result<FexpModel> {
        let d = random_d(rng, class.t);
        FexpModel::new(d, random_theta(rng, opts.max_k, class.beta, class.l))
    };
    for trial in 0..trials {
        let f0 = draw(rng)?;
        let f = draw(rng)?;
        let (m, big_m) = common_bounds(&f, &f0, class)?;
        let eps = (f.d() - f0.d()).abs();

        // |d - d0| ≥ ε ⇒ h ≥ (1/π)(4M/m)^{-1/2ε}
        let h = h_lim(&f, &f0);
        let rhs = if eps > 0.0 {
            (4.0 * big_m / m).powf(-0.5 / eps) / PI
        } else {
            0.0
        };
        report.checks.push(LemmaCheck {
            lemma: LEMMA_H_LOWER,
            trial,
            lhs: h,
            rhs,
            pass: h >= rhs,
        });

        // |d - d0| ≥ ε ⇒ b ≥ C^{-1/2ε}, with the prefactors of each branch
        let b = b_lim(&f, &f0);
        let rhs = if eps == 0.0 {
            0.0
        } else if f.d() >= f0.d() {
            4.0 / PI * (4.0 * big_m / m).powf(-0.5 / eps)
        } else {
            (2.0 * big_m / m).powf(-0.5 / eps) / (8.0 * PI)
        };
        report.checks.push(LemmaCheck {
            lemma: LEMMA_B_LOWER,
            trial,
            lhs: b,
            rhs,
            pass: b >= rhs,
        });

        // d - d0 < 1/4 - τ ⇒ b ≤ C h with C = A(1 + M²/(2τm²)), A = 4M²/m²
        let (f3, f03) = constrained_pair(rng, &draw, |f, f0| f.d() - f0.d() < 0.25 - opts.tau)?;
        let (m3, big_m3) = common_bounds(&f3, &f03, class)?;
        let ratio2 = (big_m3 / m3).powi(2);
        let c = 4.0 * ratio2 * (1.0 + ratio2 / (2.0 * opts.tau));
        let b3 = b_lim(&f3, &f03);
        let h3 = h_lim(&f3, &f03);
        report.checks.push(LemmaCheck {
            lemma: LEMMA_B_LE_CH,
            trial,
            lhs: b3,
            rhs: c * h3,
            pass: b3 <= c * h3 * (1.0 + 1e-9) + 1e-13,
        });

        // d > d0 ⇒ KL_n(f0; f) ≥ m²/(M²π²) b_n(f0, f)
        let (f4, f04) = constrained_pair(rng, &draw, |f, f0| f.d() > f0.d())?;
        let (m4, big_m4) = common_bounds(&f4, &f04, class)?;
        let kl = kl_n(&f04, &f4, opts.n)?;
        let bn = b_n(&f04, &f4, opts.n)?;
        let rhs = (m4 / (big_m4 * PI)).powi(2) * bn;
        report.checks.push(LemmaCheck {
            lemma: LEMMA_KL_N,
            trial,
            lhs: kl,
            rhs,
            pass: kl >= rhs,
        });

        // |d - d0| ≤ ε, |w - w0| ≤ ε ⇒ h ≤ 7ε (ε < 1/4); the first trial is the
        // boundary draw ε = 0.24 with both gaps saturated.
        let (f5, f05, eps5) = if trial == 0 {
            let f05 = FexpModel::new(0.2, random_theta(rng, opts.max_k, class.beta, class.l))?;
            let mut th = f05.theta().to_vec();
            th[0] += 0.24;
            (FexpModel::new(0.44, th)?, f05, 0.24)
        } else {
            close_pair(rng, &draw)?
        };
        let h5 = h_lim(&f5, &f05);
        report.checks.push(LemmaCheck {
            lemma: LEMMA_H_7EPS,
            trial,
            lhs: h5,
            rhs: 7.0 * eps5,
            pass: h5 <= 7.0 * eps5,
        });
    }
    Ok(report)
}

fn constrained_pair<R, D, P>(rng: &mut R, draw: &D, accept: P) -> Result<(FexpModel, FexpModel)>
where
    R: Rng + ?Sized,
    D: Fn(&mut R) -> Result<FexpModel>,
    P: Fn(&FexpModel, &FexpModel) -> bool,
{
    for _ in 0..10_000 {
        let f0 = draw(rng)?;
        let f = draw(rng)?;
        if accept(&f, &f0) {
            return Ok((f, f0));
        }
    }
    Err(Error::RejectionBudget(10_000))
}

/// A pair within `ε ∈ (0, 1/4)` in both `d` and sup-norm of `w`.
fn close_pair<R, D>(rng: &mut R, draw: &D) -> Result<(FexpModel, FexpModel, f64)>
where
    R: Rng + ?Sized,
    D: Fn(&mut R) -> Result<FexpModel>,
{
    let eps = 0.01 + 0.239 * rng.random::<f64>();
    for _ in 0..10_000 {
        let f0 = draw(rng)?;
        let d = f0.d() + eps * (2.0 * rng.random::<f64>() - 1.0);
        if !(d > 0.0 && d < 0.5) {
            continue;
        }
        // Σ|Δθ_j| ≤ ε bounds sup|w - w0| by ε.
        let k = f0.k();
        let raw: Vec<f64> = (0..=k).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
        let l1: f64 = raw.iter().map(|x| x.abs()).sum();
        let budget = eps * rng.random::<f64>();
        let theta: Vec<f64> = f0
            .theta()
            .iter()
            .zip(&raw)
            .map(|(t, r)| t + if l1 > 0.0 { r / l1 * budget } else { 0.0 })
            .collect();
        return Ok((FexpModel::new(d, theta)?, f0, eps));
    }
    Err(Error::RejectionBudget(10_000))
}

/// Checks `x² ≤ e^x + e^{-x} - 2` on the log-ratio over a grid, the pointwise
/// fact that bounds `ℓ` by `h`. Returns the largest violation (≤ 0 means none).
pub fn log_ratio_domination(f0: &FexpModel, f: &FexpModel, grid: usize) -> f64 {
    let u = log_ratio(f0, f);
    (1..=grid)
        .map(|i| {
            let x = u(PI * i as f64 / grid as f64);
            x * x - (2.0 * x.cosh() - 2.0)
        })
        .fold(f64::MIN, f64::max)
}

/// Dense-matrix reference evaluation of `KL_n`, `h_n` and `b_n` through a
/// Cholesky factorisation, for cross-checking the trace formulas.
pub mod dense_reference {
    use super::*;

    fn chol(g: &[f64]) -> Result<Cholesky<f64, nalgebra::Dyn>> {
        Cholesky::new(dense(g)).ok_or(Error::Breakdown {
            order: g.len(),
            variance: 0.0,
        })
    }

    fn logdet(c: &Cholesky<f64, nalgebra::Dyn>) -> f64 {
        2.0 * c.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>()
    }

    pub fn kl_n(f0: &FexpModel, f: &FexpModel, n: usize) -> Result<f64> {
        let g0 = autocov(f0, n)?;
        let g = autocov(f, n)?;
        let c0 = chol(g0.gamma())?;
        let c = chol(g.gamma())?;
        let m: DMatrix<f64> = c.solve(&dense(g0.gamma()));
        let nf = n as f64;
        Ok((m.trace() - nf - (logdet(&c0) - logdet(&c))) / (2.0 * nf))
    }

    pub fn h_n(f0: &FexpModel, f: &FexpModel, n: usize) -> Result<f64> {
        Ok(kl_n(f0, f, n)? + kl_n(f, f0, n)?)
    }

    pub fn b_n(f0: &FexpModel, f: &FexpModel, n: usize) -> Result<f64> {
        let g0 = autocov(f0, n)?;
        let g = autocov(f, n)?;
        let c = chol(g.gamma())?;
        let diff = dense(g0.gamma()) - dense(g.gamma());
        let p = c.solve(&diff);
        Ok((&p * &p).trace() / n as f64)
    }
}
