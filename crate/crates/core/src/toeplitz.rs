//! Symmetric positive-definite Toeplitz algebra.
//!
//! Solves and log-determinants run through the Levinson–Durbin recursion in
//! O(n²). Dense O(n³) work is confined to trace functionals of matrix
//! products, which carry explicit dimension caps.

use nalgebra::DMatrix;
use rustfft::{num_complex::Complex64, FftPlanner};

use crate::error::{Error, Result};
use crate::spectral::{autocov, AutocovSeq, FexpModel};

/// Prediction variances at or below this fraction of `γ(0)` count as breakdown.
pub const BREAKDOWN_TOL: f64 = 1e-12;

/// Largest dimension accepted by the dense trace functionals.
pub const DENSE_CAP: usize = 2048;

/// `T_n = [γ(|i-j|)]` held through its first column.
#[derive(Debug, Clone)]
pub struct ToeplitzView {
    gamma: AutocovSeq,
}

impl ToeplitzView {
    /// Wraps `gamma` after checking positive definiteness.
    pub fn new(gamma: AutocovSeq) -> Result<Self> {
        prediction_variances(gamma.gamma())?;
        Ok(ToeplitzView { gamma })
    }

    /// `T_n(f)` for an FEXP model.
    pub fn from_model(model: &FexpModel, n: usize) -> Result<Self> {
        ToeplitzView::new(autocov(model, n)?)
    }

    pub fn n(&self) -> usize {
        self.gamma.len()
    }

    pub fn gamma(&self) -> &[f64] {
        self.gamma.gamma()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        dense(self.gamma())
    }
}

/// Dense `[γ(|i-j|)]`.
pub fn dense(gamma: &[f64]) -> DMatrix<f64> {
    let n = gamma.len();
    DMatrix::from_fn(n, n, |i, j| gamma[i.abs_diff(j)])
}

fn breakdown_check(order: usize, v: f64, g0: f64) -> Result<()> {
    if v <= BREAKDOWN_TOL * g0 || !v.is_finite() {
        return Err(Error::Breakdown { order, variance: v });
    }
    Ok(())
}

/// Durbin recursion: prediction-error variances `v_0..v_{n-1}`.
pub fn prediction_variances(gamma: &[f64]) -> Result<Vec<f64>> {
    Ok(durbin(gamma)?.1)
}

/// Durbin recursion returning the order-`(n-1)` predictor and all variances.
pub(crate) fn durbin(gamma: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = gamma.len();
    let g0 = gamma[0];
    let mut v = Vec::with_capacity(n);
    breakdown_check(0, g0, g0)?;
    v.push(g0);
    let mut phi: Vec<f64> = Vec::with_capacity(n);
    let mut scratch = Vec::with_capacity(n);
    for k in 0..n.saturating_sub(1) {
        let dot: f64 = phi.iter().enumerate().map(|(i, p)| p * gamma[k - i]).sum();
        let kappa = (gamma[k + 1] - dot) / v[k];
        scratch.clear();
        scratch.extend((0..k).map(|i| phi[i] - kappa * phi[k - 1 - i]));
        scratch.push(kappa);
        std::mem::swap(&mut phi, &mut scratch);
        let vk = v[k] * (1.0 - kappa * kappa);
        breakdown_check(k + 1, vk, g0)?;
        v.push(vk);
    }
    Ok((phi, v))
}

/// Solves `T_n x = rhs` by Levinson recursion. Also returns the prediction
/// variances, whose logs sum to `ln det T_n`.
pub fn levinson_solve(tv: &ToeplitzView, rhs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    levinson_raw(tv.gamma(), rhs)
}

pub(crate) fn levinson_raw(gamma: &[f64], rhs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = gamma.len();
    if rhs.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: rhs.len(),
        });
    }
    let g0 = gamma[0];
    breakdown_check(0, g0, g0)?;
    let mut v = Vec::with_capacity(n);
    v.push(g0);
    let mut x = Vec::with_capacity(n);
    x.push(rhs[0] / g0);
    let mut phi: Vec<f64> = Vec::with_capacity(n);
    let mut scratch = Vec::with_capacity(n);
    for k in 0..n.saturating_sub(1) {
        // Extend the Yule–Walker predictor to order k+1.
        let dot: f64 = phi.iter().enumerate().map(|(i, p)| p * gamma[k - i]).sum();
        let kappa = (gamma[k + 1] - dot) / v[k];
        scratch.clear();
        scratch.extend((0..k).map(|i| phi[i] - kappa * phi[k - 1 - i]));
        scratch.push(kappa);
        std::mem::swap(&mut phi, &mut scratch);
        let vk = v[k] * (1.0 - kappa * kappa);
        breakdown_check(k + 1, vk, g0)?;
        v.push(vk);
        // Extend the solution to size k+2.
        let proj: f64 = x
            .iter()
            .enumerate()
            .map(|(i, xi)| gamma[k + 1 - i] * xi)
            .sum();
        let mu = (rhs[k + 1] - proj) / vk;
        for (i, xi) in x.iter_mut().enumerate() {
            *xi -= mu * phi[k - i];
        }
        x.push(mu);
    }
    Ok((x, v))
}

/// `ln det T_n` as the sum of log prediction variances.
pub fn logdet(tv: &ToeplitzView) -> Result<f64> {
    Ok(prediction_variances(tv.gamma())?
        .iter()
        .map(|v| v.ln())
        .sum())
}

/// `xᵀ T_n^{-1} x`.
pub fn quadform(tv: &ToeplitzView, x: &[f64]) -> Result<f64> {
    let (sol, _) = levinson_solve(tv, x)?;
    Ok(dot(x, &sol))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `T_n x` through a circulant embedding and FFTs.
pub fn matvec(tv: &ToeplitzView, x: &[f64]) -> Result<Vec<f64>> {
    toeplitz_matvec(tv.gamma(), x)
}

pub(crate) fn toeplitz_matvec(gamma: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let n = gamma.len();
    if x.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: x.len(),
        });
    }
    if n == 1 {
        return Ok(vec![gamma[0] * x[0]]);
    }
    let size = (2 * n - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let mut c = vec![Complex64::new(0.0, 0.0); size];
    c[0].re = gamma[0];
    for k in 1..n {
        c[k].re = gamma[k];
        c[size - k].re = gamma[k];
    }
    let mut y = vec![Complex64::new(0.0, 0.0); size];
    for (yi, &xi) in y.iter_mut().zip(x) {
        yi.re = xi;
    }
    fwd.process(&mut c);
    fwd.process(&mut y);
    for (yi, ci) in y.iter_mut().zip(&c) {
        *yi *= ci;
    }
    inv.process(&mut y);
    Ok(y[..n].iter().map(|z| z.re / size as f64).collect())
}

/// Dense `T_n^{-1}` in O(n²) from the Durbin predictor (Gohberg–Semencul).
pub fn inverse(tv: &ToeplitzView) -> Result<DMatrix<f64>> {
    inverse_raw(tv.gamma())
}

pub(crate) fn inverse_raw(gamma: &[f64]) -> Result<DMatrix<f64>> {
    let n = gamma.len();
    let (phi, v) = durbin(gamma)?;
    let vn = v[n - 1];
    // a = (1, -φ_0, ..., -φ_{n-2}); b_0 = 0, b_k = a_{n-k}.
    let mut a = Vec::with_capacity(n);
    a.push(1.0);
    a.extend(phi.iter().map(|p| -p));
    let b = |k: usize| if k == 0 { 0.0 } else { a[n - k] };
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        m[(i, 0)] = a[i] / vn;
    }
    for j in 1..n {
        for i in j..n {
            let val = m[(i - 1, j - 1)] + (a[i] * a[j] - b(i) * b(j)) / vn;
            m[(i, j)] = val;
        }
    }
    for j in 1..n {
        for i in 0..j {
            m[(i, j)] = m[(j, i)];
        }
    }
    Ok(m)
}

/// `Σ_{ij} A_ij B_ji`.
pub(crate) fn trace_of_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for j in 0..n {
        for i in 0..n {
            s += a[(i, j)] * b[(j, i)];
        }
    }
    s
}

/// `tr[T(γ) M]` for symmetric `M` in O(n²).
pub(crate) fn toeplitz_trace_with(gamma: &[f64], m: &DMatrix<f64>) -> f64 {
    let n = gamma.len();
    let mut s = 0.0;
    for j in 0..n {
        for i in 0..n {
            s += gamma[i.abs_diff(j)] * m[(i, j)];
        }
    }
    s
}

/// `(1/n) tr[Π_i T_n(f_i) T_n(f_i')^{-1}]` for up to four pairs.
pub fn normalized_trace_product(pairs: &[(FexpModel, FexpModel)], n: usize) -> Result<f64> {
    if pairs.is_empty() || pairs.len() > 4 {
        return Err(Error::InvalidParameter(format!(
            "trace products take 1 to 4 pairs, got {}",
            pairs.len()
        )));
    }
    if n == 0 || n > DENSE_CAP {
        return Err(Error::InvalidParameter(format!(
            "dimension {n} outside 1..={DENSE_CAP}"
        )));
    }
    if pairs.len() == 1 {
        let (num, den) = &pairs[0];
        let inv = inverse_raw(autocov(den, n)?.gamma())?;
        return Ok(toeplitz_trace_with(autocov(num, n)?.gamma(), &inv) / n as f64);
    }
    let mut acc: Option<DMatrix<f64>> = None;
    for (num, den) in pairs {
        let factor = dense(autocov(num, n)?.gamma()) * inverse_raw(autocov(den, n)?.gamma())?;
        acc = Some(match acc {
            None => factor,
            Some(p) => p * factor,
        });
    }
    Ok(acc.map(|p| p.trace()).unwrap_or(0.0) / n as f64)
}

/// Even bounded multiplier `b(λ) = Σ_j c_j cos jλ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CosineMultiplier {
    pub coeffs: Vec<f64>,
}

impl CosineMultiplier {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidParameter(
                "multiplier needs at least one coefficient".into(),
            ));
        }
        Ok(CosineMultiplier { coeffs })
    }

    pub fn eval(&self, lambda: f64) -> f64 {
        crate::spectral::cosine_series(&self.coeffs, lambda)
    }

    /// `∫_{-π}^{π} b² dλ`.
    pub fn l2_squared(&self) -> f64 {
        let pi = std::f64::consts::PI;
        2.0 * pi * self.coeffs[0].powi(2) + pi * self.coeffs[1..].iter().map(|c| c * c).sum::<f64>()
    }

    /// `sup |b|` on a fine grid over `[0, π]`.
    pub fn sup_norm(&self) -> f64 {
        let grid = 4096;
        (0..=grid)
            .map(|i| {
                self.eval(std::f64::consts::PI * i as f64 / grid as f64)
                    .abs()
            })
            .fold(0.0, f64::max)
    }

    /// Autocovariances of `f·b` from those of `f` (needs `gamma_f` of length
    /// `n + deg b`).
    fn modulate(&self, gamma_f: &[f64], n: usize) -> Vec<f64> {
        (0..n)
            .map(|tau| {
                let mut s = self.coeffs[0] * gamma_f[tau];
                for (j, c) in self.coeffs.iter().enumerate().skip(1) {
                    s += 0.5 * c * (gamma_f[tau + j] + gamma_f[tau.abs_diff(j)]);
                }
                s
            })
            .collect()
    }
}

/// Output of [`whittle_trace_bound_probe`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceBoundProbe {
    pub n: usize,
    pub lhs: f64,
    pub bound: f64,
    pub ratio: f64,
}

/// `(1/n) tr[T(f₁)^{-1} T(f₁b) T(f₂)^{-1} T(f₁b)]` against
/// `(ln n)(‖b‖₂² + δ‖b‖∞²)`. With `delta = None` the infimum `|d₁ - d₂|` of
/// admissible gaps is used.
pub fn whittle_trace_bound_probe(
    f1: &FexpModel,
    f2: &FexpModel,
    b: &CosineMultiplier,
    n: usize,
    delta: Option<f64>,
) -> Result<TraceBoundProbe> {
    let gap = f1.d() - f2.d();
    if !(f1.d() >= f2.d() && gap < 0.25) {
        return Err(Error::InvalidParameter(format!(
            "probe needs d1 >= d2 and d1 - d2 < 1/4 (d1 = {}, d2 = {})",
            f1.d(),
            f2.d()
        )));
    }
    if !(2..=1024).contains(&n) {
        return Err(Error::InvalidParameter(format!(
            "dimension {n} outside 2..=1024"
        )));
    }
    let delta = delta.unwrap_or(gap);
    let deg = b.coeffs.len() - 1;
    let g1 = autocov(f1, n + deg)?;
    let t1b = dense(&b.modulate(g1.gamma(), n));
    let inv1 = inverse_raw(&g1.gamma()[..n])?;
    let inv2 = inverse_raw(autocov(f2, n)?.gamma())?;
    let left = &inv1 * &t1b;
    let right = &inv2 * &t1b;
    let lhs = trace_of_product(&left, &right) / n as f64;
    let bound = (n as f64).ln() * (b.l2_squared() + delta * b.sup_norm().powi(2));
    let ratio = if lhs == 0.0 { 0.0 } else { lhs / bound };
    Ok(TraceBoundProbe {
        n,
        lhs,
        bound,
        ratio,
    })
}
