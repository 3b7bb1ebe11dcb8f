//! Reversible-jump Metropolis-Hastings over `(d, k, θ)` and the Bayes
//! estimators computed from its draws.

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{exact_loglik, TimeSeries};
use crate::prior::{check_support, log_prior_density, sample_theta, PriorSpec};
use crate::spectral::FexpModel;

/// Frequencies at which `log f` is tracked for effective sample sizes.
pub const DIAGNOSTIC_FREQS: [f64; 5] = [PI / 16.0, PI / 8.0, PI / 4.0, PI / 2.0, PI];

const ADAPT_WINDOW: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub step_d: f64,
    pub step_theta: f64,
    /// Probability of attempting a birth or death.
    pub birth_rate: f64,
    pub seed: u64,
    /// Largest `k` the chain may visit.
    pub k_max: usize,
    /// Freezes the dimension at this `k`.
    pub fix_k: Option<usize>,
    /// `false` targets the prior alone.
    pub use_likelihood: bool,
    /// Tune `step_d` and `step_theta` during burn-in.
    pub adapt: bool,
    /// Scale of the birth proposal `N(0, s² (k+2)^{-2β})`; defaults to the
    /// prior's `τ0` (or 1).
    pub birth_scale: Option<f64>,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            iterations: 5000,
            burn_in: 1000,
            thin: 1,
            step_d: 0.05,
            step_theta: 0.2,
            birth_rate: 0.2,
            seed: 0,
            k_max: 64,
            fix_k: None,
            use_likelihood: true,
            adapt: true,
            birth_scale: None,
        }
    }
}

#[derive(Deserialize)]
struct McmcFile {
    #[serde(default)]
    mcmc: McmcConfig,
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.iterations > 0 && self.burn_in >= self.iterations {
            return bad(format!(
                "burn_in {} must be below iterations {}",
                self.burn_in, self.iterations
            ));
        }
        if self.thin == 0 {
            return bad("thin must be at least 1".into());
        }
        if !(self.step_d > 0.0 && self.step_theta > 0.0)
            || !self.step_d.is_finite()
            || !self.step_theta.is_finite()
        {
            return bad("proposal scales must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.birth_rate) {
            return bad(format!("birth_rate {} outside [0, 1]", self.birth_rate));
        }
        if let Some(k) = self.fix_k {
            if k > self.k_max {
                return bad(format!("fix_k {k} exceeds k_max {}", self.k_max));
            }
        }
        if let Some(s) = self.birth_scale {
            if !(s > 0.0) || !s.is_finite() {
                return bad(format!("birth_scale {s} must be positive"));
            }
        }
        Ok(())
    }

    /// Reads the `[mcmc]` table of a TOML document; missing keys take defaults.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let f: McmcFile = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        f.mcmc.validate()?;
        Ok(f.mcmc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub iter: usize,
    pub model: FexpModel,
    pub log_post: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MoveStats {
    pub proposed: usize,
    pub accepted: usize,
}

impl MoveStats {
    pub fn rate(&self) -> Option<f64> {
        (self.proposed > 0).then(|| self.accepted as f64 / self.proposed as f64)
    }

    fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += accepted as usize;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Acceptance {
    pub d: MoveStats,
    pub theta: MoveStats,
    pub birth: MoveStats,
    pub death: MoveStats,
    /// Proposals rejected because the Toeplitz factorisation broke down.
    pub breakdowns: usize,
}

#[derive(Debug, Clone)]
pub struct Chain {
    /// Retained draws after burn-in and thinning.
    pub draws: Vec<Draw>,
    /// Post burn-in move statistics.
    pub acceptance: Acceptance,
    pub final_step_d: f64,
    pub final_step_theta: f64,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn from_draws(draws: Vec<Draw>) -> Self {
        Chain {
            draws,
            acceptance: Acceptance::default(),
            final_step_d: 0.0,
            final_step_theta: 0.0,
        }
    }

    /// Columns `iter,d,k,theta0..theta{K},log_post`, `K` the largest order seen.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let kmax = self.draws.iter().map(|d| d.model.k()).max().unwrap_or(0);
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["iter".to_string(), "d".into(), "k".into()];
        header.extend((0..=kmax).map(|j| format!("theta{j}")));
        header.push("log_post".into());
        w.write_record(&header)?;
        for d in &self.draws {
            let mut rec = vec![
                d.iter.to_string(),
                fmt(d.model.d()),
                d.model.k().to_string(),
            ];
            rec.extend((0..=kmax).map(|j| {
                if j <= d.model.k() {
                    fmt(d.model.theta_at(j))
                } else {
                    String::new()
                }
            }));
            rec.push(fmt(d.log_post));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.17e}")
}

/// The unnormalised log posterior and the dimension-move ratios.
pub struct Target<'a> {
    x: Option<&'a TimeSeries>,
    spec: &'a PriorSpec,
    k_max: usize,
    birth_scale: f64,
}

/// Outcome of evaluating a proposal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Eval {
    Finite(f64),
    OutOfSupport,
    Breakdown,
}

impl<'a> Target<'a> {
    pub fn new(x: Option<&'a TimeSeries>, spec: &'a PriorSpec, cfg: &McmcConfig) -> Self {
        let birth_scale = cfg.birth_scale.unwrap_or_else(|| spec.coordinate_scale(0));
        Target {
            x,
            spec,
            k_max: cfg.fix_k.unwrap_or(cfg.k_max),
            birth_scale,
        }
    }

    pub fn log_post(&self, model: &FexpModel) -> Eval {
        let lp = log_prior_density(self.spec, model);
        if !lp.is_finite() {
            return Eval::OutOfSupport;
        }
        match self.x {
            None => Eval::Finite(lp),
            Some(x) => match exact_loglik(x, model) {
                Ok(ll) if ll.is_finite() => Eval::Finite(lp + ll),
                _ => Eval::Breakdown,
            },
        }
    }

    /// Probability of choosing birth (rather than death) at order `k`.
    pub fn birth_probability(&self, k: usize) -> f64 {
        if k >= self.k_max {
            0.0
        } else if k == 0 {
            1.0
        } else {
            0.5
        }
    }

    fn birth_sd(&self, new_index: usize) -> f64 {
        self.birth_scale * ((new_index + 1) as f64).powf(-self.spec.beta)
    }

    fn log_q(&self, new_index: usize, value: f64) -> f64 {
        let sd = self.birth_sd(new_index);
        -0.5 * (value / sd).powi(2) - sd.ln() - 0.5 * (2.0 * PI).ln()
    }

    /// Proposal-side log ratio of a birth appending `value` (target terms
    /// excluded): `ln P(death | k+1) - ln P(birth | k) - ln q(value)`.
    pub fn birth_proposal_ratio(&self, k: usize, value: f64) -> f64 {
        (1.0 - self.birth_probability(k + 1)).ln()
            - self.birth_probability(k).ln()
            - self.log_q(k + 1, value)
    }

    /// Full log acceptance ratio of a birth from `model` appending `value`.
    pub fn birth_log_ratio(
        &self,
        model: &FexpModel,
        lp: f64,
        value: f64,
    ) -> (FexpModel, Eval, f64) {
        let mut theta = model.theta().to_vec();
        theta.push(value);
        let prop = FexpModel::new(model.d(), theta).expect("valid d carries over");
        let e = self.log_post(&prop);
        let r = match e {
            Eval::Finite(lp2) => lp2 - lp + self.birth_proposal_ratio(model.k(), value),
            _ => f64::NEG_INFINITY,
        };
        (prop, e, r)
    }

    /// Full log acceptance ratio of a death dropping `θ_k` from `model`.
    pub fn death_log_ratio(&self, model: &FexpModel, lp: f64) -> Option<(FexpModel, Eval, f64)> {
        let k = model.k();
        if k == 0 {
            return None;
        }
        let removed = model.theta()[k];
        let prop =
            FexpModel::new(model.d(), model.theta()[..k].to_vec()).expect("valid d carries over");
        let e = self.log_post(&prop);
        let r = match e {
            Eval::Finite(lp2) => lp2 - lp - self.birth_proposal_ratio(k - 1, removed),
            _ => f64::NEG_INFINITY,
        };
        Some((prop, e, r))
    }
}

/// Folds `y` into `[-a, a]` by reflection at the edges.
pub fn reflect(y: f64, a: f64) -> f64 {
    let period = 4.0 * a;
    let mut z = (y + a).rem_euclid(period);
    if z > 2.0 * a {
        z = period - z;
    }
    z - a
}

fn initial_model<R: Rng + ?Sized>(
    x: Option<&TimeSeries>,
    spec: &PriorSpec,
    cfg: &McmcConfig,
    target: &Target,
    rng: &mut R,
) -> Result<(FexpModel, f64)> {
    let k = cfg.fix_k.unwrap_or(0);
    let r = spec.l.sqrt();
    let theta0 = x
        .map(|x| (x.sample_variance() / (2.0 * PI)).ln())
        .unwrap_or(0.0)
        .clamp(-0.99 * r, 0.99 * r);
    let mut theta = vec![0.0; k + 1];
    theta[0] = theta0;
    let model = FexpModel::new(0.0, theta)?;
    if let Eval::Finite(lp) = target.log_post(&model) {
        return Ok((model, lp));
    }
    for _ in 0..1000 {
        let model = FexpModel::new(0.0, sample_theta(spec, k, rng)?)?;
        if let Eval::Finite(lp) = target.log_post(&model) {
            return Ok((model, lp));
        }
    }
    Err(Error::RejectionBudget(1000))
}

fn accept<R: Rng + ?Sized>(rng: &mut R, log_ratio: f64) -> bool {
    log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
}

fn adapt_step(step: &mut f64, window: &mut MoveStats) {
    if let Some(rate) = window.rate() {
        if rate > 0.4 {
            *step *= 1.2;
        } else if rate < 0.2 {
            *step /= 1.2;
        }
    }
    *window = MoveStats::default();
}

/// Runs one chain. The likelihood term is dropped when
/// `cfg.use_likelihood` is false, in which case `x` only seeds `θ_0`.
pub fn run_chain(x: &TimeSeries, spec: &PriorSpec, cfg: &McmcConfig) -> Result<Chain> {
    spec.validate()?;
    cfg.validate()?;
    let data = cfg.use_likelihood.then_some(x);
    run(data, Some(x), spec, cfg)
}

/// Runs a chain on the prior alone.
pub fn run_prior_chain(spec: &PriorSpec, cfg: &McmcConfig) -> Result<Chain> {
    spec.validate()?;
    cfg.validate()?;
    run(None, None, spec, cfg)
}

fn run(
    data: Option<&TimeSeries>,
    init_x: Option<&TimeSeries>,
    spec: &PriorSpec,
    cfg: &McmcConfig,
) -> Result<Chain> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let target = Target::new(data, spec, cfg);
    let mut step_d = cfg.step_d;
    let mut step_theta = cfg.step_theta;
    let mut chain = Chain {
        draws: Vec::new(),
        acceptance: Acceptance::default(),
        final_step_d: step_d,
        final_step_theta: step_theta,
    };
    if cfg.iterations == 0 {
        return Ok(chain);
    }
    let (mut model, mut lp) = initial_model(init_x, spec, cfg, &target, &mut rng)?;
    let d_max = spec.d_max();
    let mut win_d = MoveStats::default();
    let mut win_theta = MoveStats::default();
    let mut stats = Acceptance::default();

    for iter in 0..cfg.iterations {
        let burning = iter < cfg.burn_in;
        if iter == cfg.burn_in {
            stats = Acceptance::default();
        }
        let dimension_move = cfg.fix_k.is_none() && rng.random::<f64>() < cfg.birth_rate;
        if dimension_move {
            let k = model.k();
            if rng.random::<f64>() < target.birth_probability(k) {
                let z: f64 = StandardNormal.sample(&mut rng);
                let value = target.birth_sd(k + 1) * z;
                let (prop, e, r) = target.birth_log_ratio(&model, lp, value);
                let ok = matches!(e, Eval::Finite(_)) && accept(&mut rng, r);
                stats.breakdowns += (e == Eval::Breakdown) as usize;
                stats.birth.record(ok);
                if let (true, Eval::Finite(v)) = (ok, e) {
                    model = prop;
                    lp = v;
                }
            } else if let Some((prop, e, r)) = target.death_log_ratio(&model, lp) {
                let ok = matches!(e, Eval::Finite(_)) && accept(&mut rng, r);
                stats.breakdowns += (e == Eval::Breakdown) as usize;
                stats.death.record(ok);
                if let (true, Eval::Finite(v)) = (ok, e) {
                    model = prop;
                    lp = v;
                }
            }
        } else if rng.random::<bool>() {
            let z: f64 = StandardNormal.sample(&mut rng);
            let d = reflect(model.d() + step_d * z, d_max);
            let prop = model.with_d(d)?;
            let e = target.log_post(&prop);
            let ok = match e {
                Eval::Finite(v) => accept(&mut rng, v - lp),
                _ => false,
            };
            stats.breakdowns += (e == Eval::Breakdown) as usize;
            stats.d.record(ok);
            win_d.record(ok);
            if let (true, Eval::Finite(v)) = (ok, e) {
                model = prop;
                lp = v;
            }
        } else {
            let j = rng.random_range(0..=model.k());
            let z: f64 = StandardNormal.sample(&mut rng);
            let mut theta = model.theta().to_vec();
            theta[j] += step_theta * ((j + 1) as f64).powf(-spec.beta) * z;
            let prop = FexpModel::new(model.d(), theta)?;
            let e = target.log_post(&prop);
            let ok = match e {
                Eval::Finite(v) => accept(&mut rng, v - lp),
                _ => false,
            };
            stats.breakdowns += (e == Eval::Breakdown) as usize;
            stats.theta.record(ok);
            win_theta.record(ok);
            if let (true, Eval::Finite(v)) = (ok, e) {
                model = prop;
                lp = v;
            }
        }

        if burning && cfg.adapt && (iter + 1) % ADAPT_WINDOW == 0 {
            adapt_step(&mut step_d, &mut win_d);
            adapt_step(&mut step_theta, &mut win_theta);
        }
        if !burning && (iter - cfg.burn_in).is_multiple_of(cfg.thin) {
            debug_assert!(check_support(spec, &model).ok());
            chain.draws.push(Draw {
                iter,
                model: model.clone(),
                log_post: lp,
            });
        }
    }
    log::debug!("chain done: {:?}", stats);
    chain.acceptance = stats;
    chain.final_step_d = step_d;
    chain.final_step_theta = step_theta;
    Ok(chain)
}

fn require(chain: &Chain) -> Result<()> {
    if chain.is_empty() {
        Err(Error::EmptyChain("no retained draws".into()))
    } else {
        Ok(())
    }
}

/// Posterior mean of `d`.
pub fn estimate_d(chain: &Chain) -> Result<f64> {
    require(chain)?;
    Ok(chain.draws.iter().map(|d| d.model.d()).sum::<f64>() / chain.len() as f64)
}

/// `FEXP(d̂, θ̄)` with `θ̄` the posterior mean of the zero-padded coefficients.
/// Because `ln f` is linear in `(d, θ)`, this single model realises both
/// `f̂ = F(d̂, ĝ)` and `ln f̂ = E[ln f]`.
pub fn posterior_mean_model(chain: &Chain) -> Result<FexpModel> {
    require(chain)?;
    let kmax = chain.draws.iter().map(|d| d.model.k()).max().unwrap_or(0);
    let n = chain.len() as f64;
    let mut theta = vec![0.0; kmax + 1];
    for d in &chain.draws {
        for (j, t) in d.model.theta().iter().enumerate() {
            theta[j] += t / n;
        }
    }
    FexpModel::new(estimate_d(chain)?, theta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateForm {
    /// `f̂ = |1-e^{iλ}|^{-2d̂} ĝ`, `ĝ = exp E[ln g]`.
    Plugin,
    /// `ln f̂ = E[ln f]`.
    LogMean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEstimate {
    pub lambda: Vec<f64>,
    pub f_hat: Vec<f64>,
    pub q05: Vec<f64>,
    pub q95: Vec<f64>,
}

impl SpectralEstimate {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["lambda", "f_hat", "q05", "q95"])?;
        for i in 0..self.lambda.len() {
            w.write_record([
                fmt(self.lambda[i]),
                fmt(self.f_hat[i]),
                fmt(self.q05[i]),
                fmt(self.q95[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Empirical quantile with linear interpolation; `sorted` must be ascending.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Grid-wise point estimate and pointwise 5% / 95% posterior quantiles of `f`.
/// Grid points must lie in `(0, π]`.
pub fn estimate_f(chain: &Chain, grid: &[f64], form: EstimateForm) -> Result<SpectralEstimate> {
    require(chain)?;
    if let Some(&l) = grid.iter().find(|&&l| !(l > 0.0 && l <= PI)) {
        return Err(Error::Domain(format!("grid frequency {l} outside (0, pi]")));
    }
    let d_hat = estimate_d(chain)?;
    let n = chain.len() as f64;
    let mut out = SpectralEstimate {
        lambda: grid.to_vec(),
        f_hat: Vec::new(),
        q05: Vec::new(),
        q95: Vec::new(),
    };
    let mut vals = Vec::with_capacity(chain.len());
    for &l in grid {
        vals.clear();
        let mut mean_log_f = 0.0;
        let mut mean_log_g = 0.0;
        for d in &chain.draws {
            let lf = d.model.log_f(l);
            mean_log_f += lf / n;
            mean_log_g += d.model.log_g(l) / n;
            vals.push(lf.exp());
        }
        vals.sort_by(|a, b| a.total_cmp(b));
        let f = match form {
            EstimateForm::LogMean => mean_log_f.exp(),
            // f = λ^{-2d} g
            EstimateForm::Plugin => (-2.0 * d_hat * l.ln() + mean_log_g).exp(),
        };
        out.f_hat.push(f);
        out.q05.push(quantile(&vals, 0.05));
        out.q95.push(quantile(&vals, 0.95));
    }
    Ok(out)
}

/// Initial-positive-sequence effective sample size, floored at 1.
pub fn effective_sample_size(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 2 {
        return 1.0;
    }
    let nf = n as f64;
    let mean = series.iter().sum::<f64>() / nf;
    let c0 = series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / nf;
    if !(c0 > 0.0) {
        return 1.0;
    }
    let acf = |lag: usize| -> f64 {
        series[..n - lag]
            .iter()
            .zip(&series[lag..])
            .map(|(a, b)| (a - mean) * (b - mean))
            .sum::<f64>()
            / nf
            / c0
    };
    let mut sum = 0.0;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = acf(2 * m) + acf(2 * m + 1);
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        m += 1;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / nf);
    (nf / tau).clamp(1.0, nf)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub draws: usize,
    pub ess_d: f64,
    /// ESS of `ln f` at [`DIAGNOSTIC_FREQS`].
    pub ess_log_f: Vec<f64>,
    pub acceptance: Acceptance,
    /// `k_histogram[k]` counts draws with order `k`.
    pub k_histogram: Vec<usize>,
}

pub fn diagnostics(chain: &Chain) -> Diagnostics {
    let ds: Vec<f64> = chain.draws.iter().map(|d| d.model.d()).collect();
    let ess_log_f = DIAGNOSTIC_FREQS
        .iter()
        .map(|&l| {
            let s: Vec<f64> = chain.draws.iter().map(|d| d.model.log_f(l)).collect();
            effective_sample_size(&s)
        })
        .collect();
    let kmax = chain.draws.iter().map(|d| d.model.k()).max().unwrap_or(0);
    let mut k_histogram = vec![0; kmax + 1];
    for d in &chain.draws {
        k_histogram[d.model.k()] += 1;
    }
    if chain.is_empty() {
        k_histogram.clear();
    }
    Diagnostics {
        draws: chain.len(),
        ess_d: effective_sample_size(&ds),
        ess_log_f,
        acceptance: chain.acceptance,
        k_histogram,
    }
}

impl Diagnostics {
    /// Long format `metric,key,value`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["metric", "key", "value"])?;
        w.write_record(["draws", "", &self.draws.to_string()])?;
        w.write_record(["ess", "d", &fmt(self.ess_d)])?;
        for (l, e) in DIAGNOSTIC_FREQS.iter().zip(&self.ess_log_f) {
            w.write_record(["ess", &format!("log_f@{l:.6}"), &fmt(*e)])?;
        }
        let a = &self.acceptance;
        for (name, m) in [
            ("d", a.d),
            ("theta", a.theta),
            ("birth", a.birth),
            ("death", a.death),
        ] {
            w.write_record(["proposed", name, &m.proposed.to_string()])?;
            w.write_record(["accepted", name, &m.accepted.to_string()])?;
            let r = m.rate().map(fmt).unwrap_or_default();
            w.write_record(["acceptance", name, &r])?;
        }
        w.write_record(["breakdowns", "", &a.breakdowns.to_string()])?;
        for (k, c) in self.k_histogram.iter().enumerate() {
            w.write_record(["k_count", &k.to_string(), &c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}
