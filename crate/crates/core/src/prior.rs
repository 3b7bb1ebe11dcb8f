//! FEXP prior on `(d, k, θ)` restricted to a Sobolev ball.
//!
//! `d` is uniform on `[-1/2 + t, 1/2 - t]`, `k` is Poisson and `θ | k` is
//! either a truncated Gaussian process or the Gamma-Dirichlet construction:
//! `S = Σ θ_j² (j+1)^{2β}` drawn from a Gamma truncated to `[0, L]`, the
//! shares `θ_j² (j+1)^{2β} / S` from a Dirichlet, and the signs from fair coins.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Gamma as GammaDist, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma as GammaLaw};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};
use crate::spectral::{sobolev_sum_of, FexpModel};

const REJECTION_BUDGET: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KLaw {
    Poisson { mu: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThetaLaw {
    /// `θ_j ~ N(0, τ0² (1+j)^{-2β})` conditioned on the ball.
    TruncatedGaussian { tau0: f64 },
    /// `S ~ Gamma(shape, rate)` on `[0, L]`, shares `~ Dirichlet((j+1)^{-κ})`.
    GammaDirichlet { shape: f64, rate: f64, kappa: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSpec {
    pub t: f64,
    pub beta: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub k_law: KLaw,
    pub theta_law: ThetaLaw,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            t: 0.05,
            beta: 1.5,
            l: 4.0,
            k_law: KLaw::Poisson { mu: 2.0 },
            theta_law: ThetaLaw::TruncatedGaussian { tau0: 1.0 },
        }
    }
}

#[derive(Serialize, Deserialize)]
struct PriorFile {
    prior: PriorSpec,
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.t > 0.0 && self.t < 0.5) {
            return bad(format!("t = {} must lie in (0, 1/2)", self.t));
        }
        if !(self.beta > 0.5) || !self.beta.is_finite() {
            return bad(format!("beta = {} must exceed 1/2", self.beta));
        }
        if !(self.l > 0.0) || !self.l.is_finite() {
            return bad(format!("L = {} must be positive", self.l));
        }
        let KLaw::Poisson { mu } = self.k_law;
        if !(mu > 0.0) || !mu.is_finite() {
            return bad(format!("mu = {mu} must be positive"));
        }
        match self.theta_law {
            ThetaLaw::TruncatedGaussian { tau0 } => {
                if !(tau0 > 0.0) || !tau0.is_finite() {
                    return bad(format!("tau0 = {tau0} must be positive"));
                }
            }
            ThetaLaw::GammaDirichlet { shape, rate, kappa } => {
                if !(shape > 0.0 && rate > 0.0) || !shape.is_finite() || !rate.is_finite() {
                    return bad(format!(
                        "gamma shape {shape} and rate {rate} must be positive"
                    ));
                }
                if !kappa.is_finite() {
                    return bad(format!("kappa = {kappa} must be finite"));
                }
            }
        }
        Ok(())
    }

    pub fn d_max(&self) -> f64 {
        0.5 - self.t
    }

    /// Parses the `[prior]` table of a TOML document.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let file: PriorFile = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        file.prior.validate()?;
        Ok(file.prior)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(&PriorFile { prior: *self }).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Dirichlet parameters `α_j = (j+1)^{-κ}` for the `k+1` shares.
    pub fn dirichlet_alpha(&self, k: usize) -> Vec<f64> {
        let kappa = match self.theta_law {
            ThetaLaw::GammaDirichlet { kappa, .. } => kappa,
            ThetaLaw::TruncatedGaussian { .. } => 0.0,
        };
        (0..=k).map(|j| ((j + 1) as f64).powf(-kappa)).collect()
    }

    /// Prior standard deviation scale of coordinate `j` before truncation.
    pub fn coordinate_scale(&self, j: usize) -> f64 {
        let tau0 = match self.theta_law {
            ThetaLaw::TruncatedGaussian { tau0 } => tau0,
            ThetaLaw::GammaDirichlet { .. } => 1.0,
        };
        tau0 * ((j + 1) as f64).powf(-self.beta)
    }
}

/// Outcome of [`check_support`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportCheck {
    pub reasons: Vec<String>,
}

impl SupportCheck {
    pub fn ok(&self) -> bool {
        self.reasons.is_empty()
    }
}

pub fn check_support(spec: &PriorSpec, model: &FexpModel) -> SupportCheck {
    let mut reasons = Vec::new();
    if model.d().abs() > spec.d_max() {
        reasons.push("d out of range".to_string());
    }
    let s = sobolev_sum_of(model.theta(), spec.beta);
    if s > spec.l {
        reasons.push(format!("sobolev sum {s} exceeds L = {}", spec.l));
    }
    SupportCheck { reasons }
}

pub fn log_poisson(mu: f64, k: usize) -> f64 {
    k as f64 * mu.ln() - mu - ln_gamma(k as f64 + 1.0)
}

pub fn log_prior_k(spec: &PriorSpec, k: usize) -> f64 {
    let KLaw::Poisson { mu } = spec.k_law;
    log_poisson(mu, k)
}

pub fn log_prior_d(spec: &PriorSpec, d: f64) -> f64 {
    if d.abs() > spec.d_max() {
        f64::NEG_INFINITY
    } else {
        -(2.0 * spec.d_max()).ln()
    }
}

fn truncated_gamma_law(shape: f64, rate: f64) -> Result<GammaLaw> {
    GammaLaw::new(shape, rate).map_err(|e| Error::InvalidParameter(e.to_string()))
}

/// `ln P(χ²_{k+1} τ0² ≤ L)`, the ball mass of the untruncated Gaussian.
fn log_gaussian_ball_mass(spec: &PriorSpec, tau0: f64, k: usize) -> f64 {
    gamma_lr((k + 1) as f64 / 2.0, spec.l / (2.0 * tau0 * tau0)).ln()
}

/// `ln π(θ | k)` with `k = θ.len() - 1`; `-∞` outside the ball.
pub fn log_theta_density(spec: &PriorSpec, theta: &[f64]) -> f64 {
    let s = sobolev_sum_of(theta, spec.beta);
    if s > spec.l || theta.is_empty() {
        return f64::NEG_INFINITY;
    }
    let k = theta.len() - 1;
    match spec.theta_law {
        ThetaLaw::TruncatedGaussian { tau0 } => {
            let mut lp = -0.5 * s / (tau0 * tau0) - log_gaussian_ball_mass(spec, tau0, k);
            for j in 0..=k {
                let sd = spec.coordinate_scale(j);
                lp -= sd.ln() + 0.5 * (2.0 * std::f64::consts::PI).ln();
            }
            lp
        }
        ThetaLaw::GammaDirichlet { shape, rate, .. } => {
            if theta.contains(&0.0) {
                return f64::NEG_INFINITY;
            }
            let law = match truncated_gamma_law(shape, rate) {
                Ok(l) => l,
                Err(_) => return f64::NEG_INFINITY,
            };
            let log_s = shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * s.ln()
                - rate * s
                - law.cdf(spec.l).ln();
            let alpha = spec.dirichlet_alpha(k);
            let mut log_dir = ln_gamma(alpha.iter().sum());
            let mut jac = -(k as f64) * s.ln();
            for (j, (&a, &x)) in alpha.iter().zip(theta).enumerate() {
                let w = 2.0 * spec.beta * ((j + 1) as f64).ln();
                let share = x * x * w.exp() / s;
                if k > 0 {
                    log_dir += (a - 1.0) * share.ln() - ln_gamma(a);
                }
                // d(θ²(j+1)^{2β})/d|θ| = 2|θ|(j+1)^{2β}; the fair-coin sign halves it.
                jac += x.abs().ln() + w;
            }
            if k == 0 {
                log_dir = 0.0;
            }
            log_s + log_dir + jac
        }
    }
}

/// `ln π_d(d) + ln π_k(k) + ln π(θ | k)`.
pub fn log_prior_density(spec: &PriorSpec, model: &FexpModel) -> f64 {
    let ld = log_prior_d(spec, model.d());
    if ld == f64::NEG_INFINITY {
        return ld;
    }
    ld + log_prior_k(spec, model.k()) + log_theta_density(spec, model.theta())
}

/// Draws `θ_0..θ_k` from `π(θ | k)`.
pub fn sample_theta<R: Rng + ?Sized>(spec: &PriorSpec, k: usize, rng: &mut R) -> Result<Vec<f64>> {
    match spec.theta_law {
        ThetaLaw::TruncatedGaussian { .. } => {
            let normals: Vec<Normal<f64>> = (0..=k)
                .map(|j| Normal::new(0.0, spec.coordinate_scale(j)))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidParameter(e.to_string()))?;
            for _ in 0..REJECTION_BUDGET {
                let theta: Vec<f64> = normals.iter().map(|n| n.sample(rng)).collect();
                if sobolev_sum_of(&theta, spec.beta) <= spec.l {
                    return Ok(theta);
                }
            }
            Err(Error::RejectionBudget(REJECTION_BUDGET))
        }
        ThetaLaw::GammaDirichlet { shape, rate, .. } => {
            let s = sample_truncated_gamma(shape, rate, spec.l, rng)?;
            let shares = sample_dirichlet(&spec.dirichlet_alpha(k), rng)?;
            Ok(shares
                .iter()
                .enumerate()
                .map(|(j, p)| {
                    let mag = (s * p).sqrt() * ((j + 1) as f64).powf(-spec.beta);
                    if rng.random::<bool>() {
                        mag
                    } else {
                        -mag
                    }
                })
                .collect())
        }
    }
}

/// Inverse-CDF draw from `Gamma(shape, rate)` restricted to `[0, upper]`.
pub fn sample_truncated_gamma<R: Rng + ?Sized>(
    shape: f64,
    rate: f64,
    upper: f64,
    rng: &mut R,
) -> Result<f64> {
    let law = truncated_gamma_law(shape, rate)?;
    let top = law.cdf(upper);
    if !(top > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "Gamma({shape}, {rate}) has no mass below {upper}"
        )));
    }
    let u = rng.random::<f64>() * top;
    Ok(law.inverse_cdf(u).min(upper))
}

fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let mut g: Vec<f64> = alpha
        .iter()
        .map(|&a| {
            GammaDist::new(a, 1.0)
                .map(|d| d.sample(rng))
                .map_err(|e| Error::InvalidParameter(e.to_string()))
        })
        .collect::<Result<_>>()?;
    let total: f64 = g.iter().sum();
    for x in &mut g {
        *x /= total;
    }
    Ok(g)
}

pub fn sample_prior<R: Rng + ?Sized>(spec: &PriorSpec, rng: &mut R) -> Result<FexpModel> {
    spec.validate()?;
    let dm = spec.d_max();
    let d = rng.random_range(-dm..=dm);
    let KLaw::Poisson { mu } = spec.k_law;
    let k = rand_distr::Poisson::new(mu)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?
        .sample(rng) as usize;
    FexpModel::new(d, sample_theta(spec, k, rng)?)
}
