mod common;

use longmem::likelihood::TimeSeries;
use longmem::prior::{
    check_support, log_prior_density, log_theta_density, sample_prior, sample_theta, KLaw,
    PriorSpec, ThetaLaw,
};
use longmem::sampler::{
    diagnostics, effective_sample_size, estimate_d, run_chain, run_prior_chain, Eval, McmcConfig,
    Target,
};
use longmem::simulate::{sample_path, SimPlan};
use longmem::spectral::FexpModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{Discrete, Poisson};

use common::*;

fn gamma_dirichlet() -> PriorSpec {
    PriorSpec {
        theta_law: ThetaLaw::GammaDirichlet {
            shape: 2.0,
            rate: 1.5,
            kappa: 0.0,
        },
        ..PriorSpec::default()
    }
}

fn sobolev(theta: &[f64], beta: f64) -> f64 {
    theta
        .iter()
        .enumerate()
        .map(|(j, t)| t * t * ((j + 1) as f64).powf(2.0 * beta))
        .sum()
}

fn two_sample_ks(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(|x, y| x.total_cmp(y));
    b.sort_by(|x, y| x.total_cmp(y));
    let (mut i, mut j, mut best) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        best = best.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    best
}

#[test]
fn prior_samples_stay_in_support() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for spec in [PriorSpec::default(), gamma_dirichlet()] {
        for _ in 0..2000 {
            let m = sample_prior(&spec, &mut rng).unwrap();
            assert!(check_support(&spec, &m).ok());
            assert!(log_prior_density(&spec, &m).is_finite());
        }
        let outside = FexpModel::new(0.5 - spec.t / 2.0, vec![0.0]).unwrap();
        assert_eq!(log_prior_density(&spec, &outside), f64::NEG_INFINITY);
        assert_eq!(
            check_support(&spec, &outside).reasons,
            vec!["d out of range".to_string()]
        );
        let big = FexpModel::new(0.0, vec![0.0, 3.0]).unwrap();
        assert!(!check_support(&spec, &big).ok());
        assert_eq!(log_prior_density(&spec, &big), f64::NEG_INFINITY);
    }
    // Closed ball: a boundary point is in the support.
    let spec = PriorSpec::default();
    let edge = FexpModel::new(0.0, vec![spec.l.sqrt()]).unwrap();
    assert!(check_support(&spec, &edge).ok());
    assert!(log_prior_density(&spec, &edge).is_finite());
}

#[test]
fn prior_d_marginal_is_uniform() {
    let spec = PriorSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut d: Vec<f64> = (0..10_000)
        .map(|_| sample_prior(&spec, &mut rng).unwrap().d())
        .collect();
    let a = spec.d_max();
    let ks = ks_statistic(&mut d, |x| ((x + a) / (2.0 * a)).clamp(0.0, 1.0));
    assert!(ks < 0.03, "{ks}");
}

#[test]
fn gamma_dirichlet_density_matches_pushforward_histogram() {
    let spec = gamma_dirichlet();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 100_000;
    let samples: Vec<f64> = (0..n)
        .map(|_| sample_theta(&spec, 0, &mut rng).unwrap()[0])
        .collect();
    let r = spec.l.sqrt();
    let bins = 20;
    let width = 2.0 * r / bins as f64;
    let mut counts = vec![0usize; bins];
    for x in &samples {
        counts[(((x + r) / width) as usize).min(bins - 1)] += 1;
    }
    for (b, &c) in counts.iter().enumerate() {
        let lo = -r + b as f64 * width;
        // 200-point midpoint rule of the claimed density over the bin
        let p: f64 = (0..200)
            .map(|i| log_theta_density(&spec, &[lo + (i as f64 + 0.5) * width / 200.0]).exp())
            .sum::<f64>()
            * width
            / 200.0;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        let phat = c as f64 / n as f64;
        assert!((phat - p).abs() < 4.0 * se + 1e-4, "bin {b}: {phat} vs {p}");
    }
}

#[test]
fn importance_weights_reproduce_other_variant() {
    let a = PriorSpec::default();
    let b = gamma_dirichlet();
    let k = 2;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 100_000;
    let (mut sw, mut sws, mut sws2) = (0.0, 0.0, 0.0);
    let mut weighted = Vec::with_capacity(n);
    for _ in 0..n {
        let th = sample_theta(&a, k, &mut rng).unwrap();
        let w = (log_theta_density(&b, &th) - log_theta_density(&a, &th)).exp();
        let s = sobolev(&th, a.beta);
        sw += w;
        sws += w * s;
        sws2 += w * s * s;
        weighted.push((w, s));
    }
    let is_mean = sws / sw;
    let is_m2 = sws2 / sw;
    // Delta-method SE of a self-normalised estimator.
    let se = |mean: f64, f: &dyn Fn(f64) -> f64| {
        let v: f64 = weighted
            .iter()
            .map(|(w, s)| (w * (f(*s) - mean)).powi(2))
            .sum::<f64>();
        v.sqrt() / sw
    };
    let se_mean = se(is_mean, &|s| s);
    let se_m2 = se(is_m2, &|s| s * s);
    let direct: Vec<f64> = (0..n)
        .map(|_| sobolev(&sample_theta(&b, k, &mut rng).unwrap(), b.beta))
        .collect();
    let d_mean = direct.iter().sum::<f64>() / n as f64;
    let d_m2 = direct.iter().map(|s| s * s).sum::<f64>() / n as f64;
    let d_se =
        (direct.iter().map(|s| (s - d_mean).powi(2)).sum::<f64>() / n as f64 / n as f64).sqrt();
    let d_se2 =
        (direct.iter().map(|s| (s * s - d_m2).powi(2)).sum::<f64>() / n as f64 / n as f64).sqrt();
    assert!(
        (is_mean - d_mean).abs() < 3.0 * (se_mean.powi(2) + d_se.powi(2)).sqrt(),
        "{is_mean} vs {d_mean}"
    );
    assert!(
        (is_m2 - d_m2).abs() < 3.0 * (se_m2.powi(2) + d_se2.powi(2)).sqrt(),
        "{is_m2} vs {d_m2}"
    );
}

fn prior_chain_config(seed: u64) -> McmcConfig {
    McmcConfig {
        iterations: 210_000,
        burn_in: 10_000,
        thin: 20,
        seed,
        use_likelihood: false,
        birth_rate: 0.4,
        ..McmcConfig::default()
    }
}

#[test]
fn prior_chain_recovers_prior_marginals() {
    let spec = PriorSpec::default();
    let chain = run_prior_chain(&spec, &prior_chain_config(5)).unwrap();
    assert_eq!(chain.len(), 10_000);
    let a = spec.d_max();
    let mut d: Vec<f64> = chain.draws.iter().map(|x| x.model.d()).collect();
    let ks_d = ks_statistic(&mut d, |x| ((x + a) / (2.0 * a)).clamp(0.0, 1.0));
    assert!(ks_d < 0.03, "d: {ks_d}");

    let KLaw::Poisson { mu } = spec.k_law;
    let pois = Poisson::new(mu).unwrap();
    let hist = diagnostics(&chain).k_histogram;
    let tv: f64 = 0.5
        * (0..40)
            .map(|k| {
                (hist.get(k).copied().unwrap_or(0) as f64 / chain.len() as f64 - pois.pmf(k as u64))
                    .abs()
            })
            .sum::<f64>();
    assert!(tv < 0.03, "k: {tv}");

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut s_prior: Vec<f64> = (0..10_000)
        .map(|_| sobolev(sample_prior(&spec, &mut rng).unwrap().theta(), spec.beta))
        .collect();
    let mut s_chain: Vec<f64> = chain
        .draws
        .iter()
        .map(|x| sobolev(x.model.theta(), spec.beta))
        .collect();
    let ks_s = two_sample_ks(&mut s_chain, &mut s_prior);
    assert!(ks_s < 0.03, "S: {ks_s}");
}

#[test]
fn birth_and_death_ratios_cancel() {
    let spec = PriorSpec::default();
    let cfg = McmcConfig::default();
    let x =
        sample_path(&SimPlan::new(FexpModel::new(0.2, vec![0.0, 0.3]).unwrap(), 64, 1, 1).unwrap())
            .unwrap()
            .paths
            .remove(0);
    let target = Target::new(Some(&x), &spec, &cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for k in 0..5 {
        let theta: Vec<f64> = (0..=k)
            .map(|j| 0.3 * ((j + 1) as f64).powf(-2.0) * rng.random_range(-1.0..1.0))
            .collect();
        let m = FexpModel::new(rng.random_range(-0.4..0.4), theta).unwrap();
        let Eval::Finite(lp) = target.log_post(&m) else {
            panic!("start off support")
        };
        let value = 0.1 * rng.random_range(-1.0..1.0);
        let (grown, e, fwd) = target.birth_log_ratio(&m, lp, value);
        let Eval::Finite(lp2) = e else {
            panic!("birth off support")
        };
        let (back, _, rev) = target.death_log_ratio(&grown, lp2).unwrap();
        assert_eq!(back, m);
        assert!((fwd + rev).abs() < 1e-10, "k={k}: {fwd} + {rev}");
    }
}

/// Posterior of `(d, θ_0)` at `k = 0` on a 1000 × 1000 grid. Since
/// `T_n(f) = e^{θ_0} T_n(|1-e^{iλ}|^{-2d})`, one dense factorisation per `d`
/// serves every `θ_0`.
fn grid_posterior_theta0(x: &[f64], spec: &PriorSpec) -> (f64, f64, f64) {
    let n = x.len();
    let nf = n as f64;
    let a = spec.d_max();
    let r = spec.l.sqrt();
    let m = 1000;
    let mut logp = Vec::with_capacity(m * m);
    let mut ds = Vec::with_capacity(m);
    let ths: Vec<f64> = (0..m)
        .map(|i| -r + (i as f64 + 0.5) * 2.0 * r / m as f64)
        .collect();
    for i in 0..m {
        let d = -a + (i as f64 + 0.5) * 2.0 * a / m as f64;
        ds.push(d);
        let c = cholesky(&fractional_acf(d, n));
        let (ld, q) = (chol_logdet(&c), chol_quadform(&c, x));
        for &t in &ths {
            // θ_0 ~ N(0, τ0²) with τ0 = 1 on |θ_0| ≤ √L; constants dropped.
            logp.push(-0.5 * (nf * t + ld + (-t).exp() * q) - 0.5 * t * t);
        }
    }
    let top = logp.iter().cloned().fold(f64::MIN, f64::max);
    let w: Vec<f64> = logp.iter().map(|l| (l - top).exp()).collect();
    let z: f64 = w.iter().sum();
    let mean = w
        .iter()
        .enumerate()
        .map(|(i, w)| w * ths[i % m])
        .sum::<f64>()
        / z;
    let var = w
        .iter()
        .enumerate()
        .map(|(i, w)| w * (ths[i % m] - mean).powi(2))
        .sum::<f64>()
        / z;
    let d_mean = w
        .iter()
        .enumerate()
        .map(|(i, w)| w * ds[i / m])
        .sum::<f64>()
        / z;
    (mean, var.sqrt(), d_mean)
}

#[test]
fn theta0_posterior_matches_quadrature() {
    let spec = PriorSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let x: Vec<f64> = (0..48).map(|_| noise.sample(&mut rng)).collect();
    let (mean, sd, d_mean) = grid_posterior_theta0(&x, &spec);

    let cfg = McmcConfig {
        iterations: 160_000,
        burn_in: 10_000,
        fix_k: Some(0),
        seed: 9,
        ..McmcConfig::default()
    };
    let chain = run_chain(&TimeSeries::new(x).unwrap(), &spec, &cfg).unwrap();
    let th: Vec<f64> = chain.draws.iter().map(|d| d.model.theta()[0]).collect();
    let cm = th.iter().sum::<f64>() / th.len() as f64;
    let csd = (th.iter().map(|t| (t - cm).powi(2)).sum::<f64>() / th.len() as f64).sqrt();
    assert!((cm - mean).abs() < 0.02 * mean.abs(), "mean {cm} vs {mean}");
    assert!((csd - sd).abs() < 0.02 * sd, "sd {csd} vs {sd}");
    // White noise: d̂ stays well inside the band the posterior allows.
    let d_hat = estimate_d(&chain).unwrap();
    assert!((d_hat - d_mean).abs() < 0.02, "{d_hat} vs {d_mean}");
    assert!((-0.2..=0.2).contains(&d_hat));
}

#[test]
fn real_runs_have_interior_acceptance_and_support() {
    let spec = PriorSpec::default();
    let x = sample_path(
        &SimPlan::new(FexpModel::new(0.3, vec![0.0, 0.3]).unwrap(), 128, 1, 2).unwrap(),
    )
    .unwrap()
    .paths
    .remove(0);
    let cfg = McmcConfig {
        iterations: 3000,
        burn_in: 500,
        seed: 1,
        ..McmcConfig::default()
    };
    let chain = run_chain(&x, &spec, &cfg).unwrap();
    for s in [
        chain.acceptance.d,
        chain.acceptance.theta,
        chain.acceptance.birth,
        chain.acceptance.death,
    ] {
        let r = s.rate().unwrap();
        assert!(r > 0.0 && r < 1.0, "{:?}", chain.acceptance);
    }
    assert!(chain
        .draws
        .iter()
        .all(|d| check_support(&spec, &d.model).ok() && d.log_post.is_finite()));
    let again = run_chain(&x, &spec, &cfg).unwrap();
    assert_eq!(chain.draws, again.draws);
}

#[test]
fn ess_of_independent_draws_is_near_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let v: Vec<f64> = (0..5000).map(|_| noise.sample(&mut rng)).collect();
    let ess = effective_sample_size(&v);
    assert!((ess - 5000.0).abs() < 0.2 * 5000.0, "{ess}");
}
