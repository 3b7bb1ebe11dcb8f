//! Exact Gaussian sample paths with a given FEXP spectral density.

use std::io::Write;

use nalgebra::{Cholesky, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::TimeSeries;
use crate::spectral::{autocov, FexpModel};
use crate::toeplitz::{dense, BREAKDOWN_TOL, DENSE_CAP};

/// How paths are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMethod {
    /// Circulant embedding above [`DENSE_CAP`] when valid, else Levinson.
    #[default]
    Auto,
    /// Sequential innovations from the Durbin predictors.
    Levinson,
    /// Dense Cholesky factor, `n ≤ DENSE_CAP`.
    Cholesky,
    /// Circulant embedding only; fails if the embedding is not nonnegative.
    Circulant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimPlan {
    pub model: FexpModel,
    pub n: usize,
    #[serde(default = "one")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub method: SimMethod,
}

fn one() -> usize {
    1
}

#[derive(Deserialize)]
struct SimFile {
    simulate: SimPlan,
}

impl SimPlan {
    pub fn new(model: FexpModel, n: usize, replicates: usize, seed: u64) -> Result<Self> {
        let plan = SimPlan {
            model,
            n,
            replicates,
            seed,
            method: SimMethod::Auto,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidParameter(format!(
                "n = {} must be at least 2",
                self.n
            )));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidParameter(
                "replicates must be at least 1".into(),
            ));
        }
        if self.method == SimMethod::Cholesky && self.n > DENSE_CAP {
            return Err(Error::InvalidParameter(format!(
                "dense Cholesky capped at n = {DENSE_CAP}"
            )));
        }
        Ok(())
    }

    /// Reads the `[simulate]` table of a TOML document.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let f: SimFile = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        f.simulate.validate()?;
        Ok(f.simulate)
    }
}

/// Which generator actually produced the paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    Levinson,
    Cholesky,
    Circulant,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub paths: Vec<TimeSeries>,
    pub gamma: Vec<f64>,
    pub generator: Generator,
}

/// Replicate `r` uses the seed `plan.seed + r`.
pub fn replicate_rng(seed: u64, r: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64))
}

pub fn sample_path(plan: &SimPlan) -> Result<Simulation> {
    plan.validate()?;
    let gamma = autocov(&plan.model, plan.n)?.into_inner();
    let mut rngs: Vec<ChaCha8Rng> = (0..plan.replicates)
        .map(|r| replicate_rng(plan.seed, r))
        .collect();
    let (raw, generator) = match plan.method {
        SimMethod::Levinson => (innovations(&gamma, &mut rngs)?, Generator::Levinson),
        SimMethod::Cholesky => (cholesky_paths(&gamma, &mut rngs)?, Generator::Cholesky),
        SimMethod::Circulant => match circulant_eigenvalues(&gamma)? {
            Some(eig) => (
                circulant_paths(&eig, plan.n, &mut rngs),
                Generator::Circulant,
            ),
            None => {
                return Err(Error::Domain(
                    "circulant embedding has negative eigenvalues".into(),
                ))
            }
        },
        SimMethod::Auto => {
            let eig = if plan.n > DENSE_CAP {
                circulant_eigenvalues(&gamma)?
            } else {
                None
            };
            match eig {
                Some(eig) => (
                    circulant_paths(&eig, plan.n, &mut rngs),
                    Generator::Circulant,
                ),
                None => {
                    if plan.n > DENSE_CAP {
                        log::info!(
                            "circulant embedding invalid at n = {}; using exact factorisation",
                            plan.n
                        );
                    }
                    (innovations(&gamma, &mut rngs)?, Generator::Levinson)
                }
            }
        }
    };
    let paths = raw
        .into_iter()
        .map(TimeSeries::new)
        .collect::<Result<_>>()?;
    Ok(Simulation {
        paths,
        gamma,
        generator,
    })
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// `x_t = Σ_j φ_{t,j} x_{t-j} + √v_t z_t`, advancing all replicates together
/// through one Durbin pass.
fn innovations(gamma: &[f64], rngs: &mut [ChaCha8Rng]) -> Result<Vec<Vec<f64>>> {
    let n = gamma.len();
    let g0 = gamma[0];
    let mut paths: Vec<Vec<f64>> = rngs
        .iter_mut()
        .map(|r| vec![g0.sqrt() * normal(r)])
        .collect();
    let mut v = g0;
    let mut phi: Vec<f64> = Vec::with_capacity(n);
    let mut scratch = Vec::with_capacity(n);
    for k in 0..n - 1 {
        let dot: f64 = phi.iter().enumerate().map(|(i, p)| p * gamma[k - i]).sum();
        let kappa = (gamma[k + 1] - dot) / v;
        scratch.clear();
        scratch.extend((0..k).map(|i| phi[i] - kappa * phi[k - 1 - i]));
        scratch.push(kappa);
        std::mem::swap(&mut phi, &mut scratch);
        v *= 1.0 - kappa * kappa;
        if !(v > BREAKDOWN_TOL * g0) {
            return Err(Error::Breakdown {
                order: k + 1,
                variance: v,
            });
        }
        let sd = v.sqrt();
        for (path, rng) in paths.iter_mut().zip(rngs.iter_mut()) {
            // phi[i] multiplies x_{k-i}
            let pred: f64 = phi.iter().enumerate().map(|(i, p)| p * path[k - i]).sum();
            path.push(pred + sd * normal(rng));
        }
    }
    Ok(paths)
}

fn cholesky_paths(gamma: &[f64], rngs: &mut [ChaCha8Rng]) -> Result<Vec<Vec<f64>>> {
    let n = gamma.len();
    let chol = Cholesky::new(dense(gamma)).ok_or(Error::Breakdown {
        order: n,
        variance: 0.0,
    })?;
    let l = chol.l();
    Ok(rngs
        .iter_mut()
        .map(|rng| {
            let z = DVector::from_fn(n, |_, _| normal(rng));
            (&l * z).iter().copied().collect()
        })
        .collect())
}

/// Eigenvalues of the minimal circulant embedding of size `2(n-1)`, or `None`
/// if any falls below `-1e-12` times the largest.
pub fn circulant_eigenvalues(gamma: &[f64]) -> Result<Option<Vec<f64>>> {
    let n = gamma.len();
    if n < 2 {
        return Err(Error::InvalidParameter("embedding needs n ≥ 2".into()));
    }
    let m = 2 * (n - 1);
    let mut c: Vec<Complex<f64>> = Vec::with_capacity(m);
    c.extend(gamma.iter().map(|&g| Complex::new(g, 0.0)));
    c.extend(gamma[1..n - 1].iter().rev().map(|&g| Complex::new(g, 0.0)));
    FftPlanner::new().plan_fft_forward(m).process(&mut c);
    let eig: Vec<f64> = c.iter().map(|z| z.re).collect();
    let max = eig.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.iter().cloned().fold(f64::MAX, f64::min);
    if min < -1e-12 * max {
        return Ok(None);
    }
    Ok(Some(eig.into_iter().map(|e| e.max(0.0)).collect()))
}

fn circulant_paths(eig: &[f64], n: usize, rngs: &mut [ChaCha8Rng]) -> Vec<Vec<f64>> {
    let m = eig.len();
    let fft = FftPlanner::new().plan_fft_forward(m);
    let scale: Vec<f64> = eig.iter().map(|e| (e / m as f64).sqrt()).collect();
    rngs.iter_mut()
        .map(|rng| {
            let mut buf: Vec<Complex<f64>> = scale
                .iter()
                .map(|s| Complex::new(s * normal(rng), s * normal(rng)))
                .collect();
            fft.process(&mut buf);
            buf[..n].iter().map(|z| z.re).collect()
        })
        .collect()
}

/// One column per replicate, header `x1,x2,…`.
pub fn write_paths_csv<W: Write>(paths: &[TimeSeries], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record((1..=paths.len()).map(|i| format!("x{i}")))?;
    let n = paths.first().map_or(0, |p| p.len());
    for t in 0..n {
        w.write_record(paths.iter().map(|p| format!("{:.17e}", p.values()[t])))?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `lag,gamma`.
pub fn write_gamma_csv<W: Write>(gamma: &[f64], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["lag", "gamma"])?;
    for (h, g) in gamma.iter().enumerate() {
        w.write_record([h.to_string(), format!("{g:.17e}")])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn white_noise_moments() {
        let plan =
            SimPlan::new(FexpModel::constant(1.0 / (2.0 * PI)).unwrap(), 10_000, 1, 7).unwrap();
        let sim = sample_path(&plan).unwrap();
        let x = sim.paths[0].values();
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| v * v).sum::<f64>() / n;
        assert!(mean.abs() < 4.0 / n.sqrt());
        assert!((var - 1.0).abs() < 4.0 * (2.0 / n).sqrt());
    }

    #[test]
    fn deterministic_replay() {
        let model = FexpModel::new(0.3, vec![0.1, 0.2]).unwrap();
        let plan = SimPlan::new(model, 200, 3, 42).unwrap();
        let a = sample_path(&plan).unwrap();
        let b = sample_path(&plan).unwrap();
        for (p, q) in a.paths.iter().zip(&b.paths) {
            assert_eq!(p.values(), q.values());
        }
        assert_ne!(a.paths[0].values(), a.paths[1].values());
    }

    #[test]
    fn levinson_matches_cholesky_factor() {
        // Both factorisations are the unique lower-triangular Cholesky factor,
        // so the same normals give the same path.
        let model = FexpModel::new(0.25, vec![0.0, -0.3]).unwrap();
        let mut plan = SimPlan::new(model, 64, 2, 5).unwrap();
        plan.method = SimMethod::Levinson;
        let a = sample_path(&plan).unwrap();
        plan.method = SimMethod::Cholesky;
        let b = sample_path(&plan).unwrap();
        for (p, q) in a.paths.iter().zip(&b.paths) {
            for (x, y) in p.values().iter().zip(q.values()) {
                assert!((x - y).abs() < 1e-9 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn circulant_fallback_and_success() {
        let white = FexpModel::constant(1.0).unwrap();
        assert!(
            circulant_eigenvalues(&autocov(&white, 16).unwrap().into_inner())
                .unwrap()
                .is_some()
        );
        // Embedding [1, .5, -.5, .5] has eigenvalue 1 - .5 - .5 - .5 at the Nyquist bin.
        assert!(circulant_eigenvalues(&[1.0, 0.5, -0.5]).unwrap().is_none());
        let mut plan = SimPlan::new(white, 16, 1, 0).unwrap();
        plan.method = SimMethod::Circulant;
        assert_eq!(sample_path(&plan).unwrap().generator, Generator::Circulant);
    }

    #[test]
    fn csv_header() {
        let paths = vec![
            TimeSeries::new(vec![1.0, 2.0]).unwrap(),
            TimeSeries::new(vec![3.0, 4.0]).unwrap(),
        ];
        let mut buf = Vec::new();
        write_paths_csv(&paths, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("x1,x2\n"));
    }

    #[test]
    fn config_missing_n_names_key() {
        let err = SimPlan::from_toml_str(
            "[simulate]\nreplicates = 2\n[simulate.model]\nd = 0.1\nk = 0\ntheta = [0.0]\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("`n`"), "{err}");
    }
}
