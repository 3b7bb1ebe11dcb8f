//! Desk-scale studies: trace convergence, the exact/Whittle gap and the
//! posterior consistency and rate experiment.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{low_frequency_concentration, per_observation_gap, whittle_bias_profile};
use crate::metrics::{self, fmt, h_lim, kl_inf, ratio_integral, trace_ratio};
use crate::prior::PriorSpec;
use crate::sampler::{estimate_d, posterior_mean_model, run_chain, McmcConfig};
use crate::simulate::{sample_path, SimPlan};
use crate::spectral::{autocov, FexpModel};

/// Reference pair for the trace-convergence checks.
pub fn standard_pair() -> (FexpModel, FexpModel) {
    (
        FexpModel::new(0.3, vec![0.2, -0.3, 0.1]).expect("valid"),
        FexpModel::new(0.25, vec![0.0, 0.2]).expect("valid"),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub n: usize,
    pub trace: f64,
    pub trace_limit: f64,
    pub trace_err: f64,
    pub h_n: f64,
    pub h_lim: f64,
    pub h_err: f64,
    pub kl_n: f64,
    pub kl_inf: f64,
    pub kl_err: f64,
}

/// Finite-`n` traces and divergences against their limits along `ns`.
pub fn trace_convergence(f0: &FexpModel, f: &FexpModel, ns: &[usize]) -> Result<Vec<TraceRow>> {
    let trace_limit = ratio_integral(f0, f);
    let h_l = h_lim(f0, f);
    let kl_l = kl_inf(f0, f);
    ns.iter()
        .map(|&n| {
            let g0 = autocov(f0, n)?;
            let g = autocov(f, n)?;
            let nf = n as f64;
            let t01 = trace_ratio(g0.gamma(), g.gamma())?;
            let t10 = trace_ratio(g.gamma(), g0.gamma())?;
            let trace = t01 / nf;
            let h_n = (t01 + t10 - 2.0 * nf) / (2.0 * nf);
            let kl_n = metrics::kl_n_from_gamma(g0.gamma(), g.gamma())?;
            Ok(TraceRow {
                n,
                trace,
                trace_limit,
                trace_err: (trace - trace_limit).abs(),
                h_n,
                h_lim: h_l,
                h_err: (h_n - h_l).abs(),
                kl_n,
                kl_inf: kl_l,
                kl_err: (kl_n - kl_l).abs(),
            })
        })
        .collect()
}

/// Every error at the largest `n` is below half its value at the smallest.
pub fn trace_convergence_passes(rows: &[TraceRow]) -> bool {
    match (rows.first(), rows.last()) {
        (Some(a), Some(b)) if rows.len() >= 2 => {
            b.trace_err < 0.5 * a.trace_err && b.h_err < 0.5 * a.h_err && b.kl_err < 0.5 * a.kl_err
        }
        _ => false,
    }
}

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "n",
        "trace",
        "trace_limit",
        "trace_err",
        "h_n",
        "h_lim",
        "h_err",
        "kl_n",
        "kl_inf",
        "kl_err",
    ])?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            fmt(r.trace),
            fmt(r.trace_limit),
            fmt(r.trace_err),
            fmt(r.h_n),
            fmt(r.h_lim),
            fmt(r.h_err),
            fmt(r.kl_n),
            fmt(r.kl_inf),
            fmt(r.kl_err),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WhittleRow {
    pub n: usize,
    pub d: f64,
    /// Mean over replicates of `|exact - whittle|/n` (on the same constant scale).
    pub mean_gap: f64,
    pub gap_se: f64,
    /// Mean `|E I_j / f_j - 1|` over `j ≤ 5` divided by the mean over `j > 5`.
    pub low_concentration: f64,
    /// Share of `Σ_j |E I_j / f_j - 1|` carried by `j ≤ 5`.
    pub low_share: f64,
}

/// Settings for [`whittle_gap_study`].
#[derive(Debug, Clone, PartialEq)]
pub struct WhittlePlan {
    pub short_memory: FexpModel,
    pub long_memory: FexpModel,
    pub ns: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
}

impl Default for WhittlePlan {
    fn default() -> Self {
        WhittlePlan {
            short_memory: FexpModel::new(0.0, vec![0.0, 0.5]).expect("valid"),
            long_memory: FexpModel::new(0.4, vec![0.0, 0.5]).expect("valid"),
            ns: vec![128, 256, 512, 1024],
            replicates: 20,
            seed: 1,
        }
    }
}

const LOW_FREQUENCIES: usize = 5;

fn whittle_row(model: &FexpModel, n: usize, replicates: usize, seed: u64) -> Result<WhittleRow> {
    let sim = sample_path(&SimPlan::new(model.clone(), n, replicates, seed)?)?;
    let gaps: Vec<f64> = sim
        .paths
        .iter()
        .map(|x| per_observation_gap(x, model))
        .collect::<Result<_>>()?;
    let r = gaps.len() as f64;
    let mean = gaps.iter().sum::<f64>() / r;
    let var = gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (r - 1.0).max(1.0);
    let bias = whittle_bias_profile(model, n)?;
    let total: f64 = bias.iter().map(|b| b.abs()).sum();
    let low: f64 = bias[..LOW_FREQUENCIES].iter().map(|b| b.abs()).sum();
    Ok(WhittleRow {
        n,
        d: model.d(),
        mean_gap: mean,
        gap_se: (var / r).sqrt(),
        low_concentration: low_frequency_concentration(&bias, LOW_FREQUENCIES)?,
        low_share: low / total,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WhittleReport {
    pub short_memory: Vec<WhittleRow>,
    pub long_memory: Vec<WhittleRow>,
}

impl WhittleReport {
    /// The short-memory gap falls strictly with `n`.
    pub fn gap_decreases(&self) -> bool {
        self.short_memory
            .windows(2)
            .all(|w| w[1].mean_gap < w[0].mean_gap)
    }

    /// The long-memory bias concentrates on the lowest frequencies, more so as
    /// `n` grows.
    pub fn low_frequencies_dominate(&self) -> bool {
        self.long_memory.iter().all(|r| r.low_concentration > 1.0)
            && self
                .long_memory
                .windows(2)
                .all(|w| w[1].low_concentration > w[0].low_concentration)
    }

    pub fn passes(&self) -> bool {
        self.gap_decreases() && self.low_frequencies_dominate()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "n",
            "d",
            "mean_gap",
            "gap_se",
            "low_concentration",
            "low_share",
        ])?;
        for r in self.short_memory.iter().chain(&self.long_memory) {
            w.write_record([
                r.n.to_string(),
                fmt(r.d),
                fmt(r.mean_gap),
                fmt(r.gap_se),
                fmt(r.low_concentration),
                fmt(r.low_share),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn whittle_gap_study(plan: &WhittlePlan) -> Result<WhittleReport> {
    if plan.ns.iter().any(|&n| n < 2 * LOW_FREQUENCIES + 3) {
        return Err(Error::InvalidParameter(format!(
            "every n must be at least {}",
            2 * LOW_FREQUENCIES + 3
        )));
    }
    let rows = |m: &FexpModel| -> Result<Vec<WhittleRow>> {
        plan.ns
            .iter()
            .map(|&n| whittle_row(m, n, plan.replicates, plan.seed))
            .collect()
    };
    Ok(WhittleReport {
        short_memory: rows(&plan.short_memory)?,
        long_memory: rows(&plan.long_memory)?,
    })
}

/// Plan for the consistency and rate experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyPlan {
    pub truth: FexpModel,
    pub ns: Vec<usize>,
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StudyFile {
    study: StudyPlan,
    prior: PriorSpec,
    #[serde(default)]
    mcmc: McmcConfig,
}

/// Reads `[study]`, `[prior]` and `[mcmc]` tables.
pub fn study_from_toml_str(s: &str) -> Result<(StudyPlan, PriorSpec, McmcConfig)> {
    let f: StudyFile = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
    f.study.validate()?;
    f.prior.validate()?;
    f.mcmc.validate()?;
    Ok((f.study, f.prior, f.mcmc))
}

impl StudyPlan {
    pub fn validate(&self) -> Result<()> {
        if self.ns.is_empty() || self.ns.iter().any(|&n| n < 2) {
            return Err(Error::InvalidParameter(
                "ns must be non-empty with every n ≥ 2".into(),
            ));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidParameter(
                "replicates must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StudyRow {
    pub n: usize,
    pub replicate: usize,
    pub seed: u64,
    pub d_hat: f64,
    /// `ℓ(f0, f̂)` with `f̂` the posterior-mean FEXP model.
    pub ell: f64,
    pub k_mean: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StudySummary {
    pub n: usize,
    pub rmse_d: f64,
    pub median_ell: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub rows: Vec<StudyRow>,
    pub summary: Vec<StudySummary>,
    /// Least-squares slope of `ln median ℓ` on `ln n`; needs two or more `n`.
    pub slope: Option<f64>,
}

/// Seeds of replicate `r`: the path uses `master + r`, the chain a disjoint
/// stream derived from it.
pub fn replicate_seeds(master: u64, r: usize) -> (u64, u64) {
    let s = master.wrapping_add(r as u64);
    (s, s ^ 0x5DEE_CE66_D1CE_4E5B)
}

fn fit_one(
    plan: &StudyPlan,
    spec: &PriorSpec,
    mcmc: &McmcConfig,
    n: usize,
    r: usize,
) -> Result<StudyRow> {
    let (sim_seed, chain_seed) = replicate_seeds(plan.seed, r);
    let sim = sample_path(&SimPlan::new(plan.truth.clone(), n, 1, sim_seed)?)?;
    let cfg = McmcConfig {
        seed: chain_seed,
        ..mcmc.clone()
    };
    let chain = run_chain(&sim.paths[0], spec, &cfg)?;
    let f_hat = posterior_mean_model(&chain)?;
    let k_mean = chain.draws.iter().map(|d| d.model.k() as f64).sum::<f64>() / chain.len() as f64;
    let row = StudyRow {
        n,
        replicate: r,
        seed: sim_seed,
        d_hat: estimate_d(&chain)?,
        ell: metrics::ell(&plan.truth, &f_hat),
        k_mean,
    };
    log::info!(
        "n = {n} replicate {r}: d_hat = {:.4}, ell = {:.4}",
        row.d_hat,
        row.ell
    );
    Ok(row)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// Least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Fits every `(n, replicate)` cell, on `workers` threads.
pub fn run_study(
    plan: &StudyPlan,
    spec: &PriorSpec,
    mcmc: &McmcConfig,
    workers: usize,
) -> Result<StudyReport> {
    plan.validate()?;
    let cells: Vec<(usize, usize)> = plan
        .ns
        .iter()
        .flat_map(|&n| (0..plan.replicates).map(move |r| (n, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let rows: Vec<StudyRow> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(n, r)| fit_one(plan, spec, mcmc, n, r))
            .collect::<Result<_>>()
    })?;
    let summary: Vec<StudySummary> = plan
        .ns
        .iter()
        .map(|&n| {
            let cell: Vec<&StudyRow> = rows.iter().filter(|r| r.n == n).collect();
            let m = cell.len() as f64;
            let rmse = (cell
                .iter()
                .map(|r| (r.d_hat - plan.truth.d()).powi(2))
                .sum::<f64>()
                / m)
                .sqrt();
            let mut ells: Vec<f64> = cell.iter().map(|r| r.ell).collect();
            StudySummary {
                n,
                rmse_d: rmse,
                median_ell: median(&mut ells),
            }
        })
        .collect();
    let x: Vec<f64> = summary.iter().map(|s| (s.n as f64).ln()).collect();
    let y: Vec<f64> = summary.iter().map(|s| s.median_ell.ln()).collect();
    Ok(StudyReport {
        slope: ols_slope(&x, &y),
        rows,
        summary,
    })
}

impl StudyReport {
    /// RMSE of `d̂` and median `ℓ` both strictly fall along the `n` sequence.
    pub fn strictly_decreasing(&self) -> bool {
        self.summary
            .windows(2)
            .all(|w| w[1].rmse_d < w[0].rmse_d && w[1].median_ell < w[0].median_ell)
    }

    pub fn write_rows_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["n", "replicate", "seed", "d_hat", "ell", "k_mean"])?;
        for r in &self.rows {
            w.write_record([
                r.n.to_string(),
                r.replicate.to_string(),
                r.seed.to_string(),
                fmt(r.d_hat),
                fmt(r.ell),
                fmt(r.k_mean),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `n,rmse_d,median_ell,slope`; the slope repeats on every row and is empty
    /// with a single `n`.
    pub fn write_summary_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["n", "rmse_d", "median_ell", "slope"])?;
        let slope = self.slope.map(fmt).unwrap_or_default();
        for s in &self.summary {
            w.write_record([
                s.n.to_string(),
                fmt(s.rmse_d),
                fmt(s.median_ell),
                slope.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ols_recovers_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 0.5 * v).collect();
        assert!((ols_slope(&x, &y).unwrap() + 0.5).abs() < 1e-12);
        assert!(ols_slope(&[1.0], &[2.0]).is_none());
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn study_config_parses() {
        let s = r#"
[study]
ns = [64]
replicates = 2
seed = 3
[study.truth]
d = 0.3
k = 0
theta = [0.0]
[prior]
t = 0.05
beta = 1.5
L = 4.0
[prior.k_law]
kind = "poisson"
mu = 2.0
[prior.theta_law]
kind = "truncated_gaussian"
tau0 = 1.0
[mcmc]
iterations = 200
burn_in = 50
"#;
        let (plan, _, mcmc) = study_from_toml_str(s).unwrap();
        assert_eq!(plan.ns, vec![64]);
        assert_eq!(mcmc.iterations, 200);
    }

    #[test]
    fn single_n_study_has_no_slope() {
        let plan = StudyPlan {
            truth: FexpModel::new(0.2, vec![0.0]).unwrap(),
            ns: vec![64],
            replicates: 2,
            seed: 1,
        };
        let mcmc = McmcConfig {
            iterations: 150,
            burn_in: 50,
            ..McmcConfig::default()
        };
        let rep = run_study(&plan, &PriorSpec::default(), &mcmc, 1).unwrap();
        assert!(rep.slope.is_none());
        assert_eq!(rep.rows.len(), 2);
        let again = run_study(&plan, &PriorSpec::default(), &mcmc, 2).unwrap();
        assert_eq!(rep, again);
    }
}
