//! Gauss rules and the integration schemes built on them.
//!
//! Two families of integrals show up in this crate: smooth factors multiplied
//! by an algebraic weight `λ^a` at the origin (autocovariances, ratio
//! integrals), and generic integrands on `[0, π]` that are only known to be
//! integrable at 0 (log-ratio distances). The first are handled with
//! Gauss–Jacobi nodes on a short interval next to the singularity, the second
//! with a geometrically graded Gauss–Legendre mesh.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Nodes and weights of a Gauss rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Gauss–Legendre rule with `n` nodes (Newton iteration on `P_n`).
pub fn gauss_legendre(n: usize) -> GaussRule {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    GaussRule { nodes, weights }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Jacobi rule for the weight `(1-x)^alpha (1+x)^beta` on `[-1, 1]`,
/// computed with the Golub–Welsch eigenvalue method.
pub fn gauss_jacobi(n: usize, alpha: f64, beta: f64) -> Result<GaussRule> {
    if alpha <= -1.0 || beta <= -1.0 {
        return Err(Error::Domain(format!(
            "Jacobi exponents must exceed -1 (alpha={alpha}, beta={beta})"
        )));
    }
    let ab = alpha + beta;
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let kf = k as f64;
        let diag = if k == 0 {
            (beta - alpha) / (ab + 2.0)
        } else {
            let s = 2.0 * kf + ab;
            (beta * beta - alpha * alpha) / (s * (s + 2.0))
        };
        jac[(k, k)] = diag;
        if k + 1 < n {
            let m = kf + 1.0;
            let s = 2.0 * m + ab;
            let num = 4.0 * m * (m + alpha) * (m + beta) * (m + ab);
            let den = s * s * (s + 1.0) * (s - 1.0);
            let off = (num / den).sqrt();
            jac[(k, k + 1)] = off;
            jac[(k + 1, k)] = off;
        }
    }
    let mu0 = ((ab + 1.0) * 2f64.ln() + ln_gamma(alpha + 1.0) + ln_gamma(beta + 1.0)
        - ln_gamma(ab + 2.0))
    .exp();
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(GaussRule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    })
}

/// Gauss–Jacobi rules for the weight `λ^a` on `[0, b]`, generated on demand
/// and reused across integrands sharing the same singular exponent.
#[derive(Debug)]
pub struct PowerWeight {
    a: f64,
    b: f64,
    rules: std::cell::RefCell<Vec<(usize, std::rc::Rc<GaussRule>)>>,
}

impl PowerWeight {
    const SIZES: [usize; 5] = [24, 48, 96, 192, 384];

    pub fn new(a: f64, b: f64) -> Result<Self> {
        if a <= -1.0 {
            return Err(Error::Domain(format!(
                "weight exponent {a} is not integrable at 0"
            )));
        }
        Ok(PowerWeight {
            a,
            b,
            rules: Default::default(),
        })
    }

    fn rule(&self, n: usize) -> Result<std::rc::Rc<GaussRule>> {
        if let Some((_, r)) = self.rules.borrow().iter().find(|(m, _)| *m == n) {
            return Ok(r.clone());
        }
        let r = std::rc::Rc::new(gauss_jacobi(n, 0.0, self.a)?);
        self.rules.borrow_mut().push((n, r.clone()));
        Ok(r)
    }

    fn eval<F: Fn(f64) -> f64>(&self, n: usize, h: &F) -> Result<f64> {
        let rule = self.rule(n)?;
        let scale = (self.b / 2.0).powf(self.a + 1.0);
        Ok(scale
            * rule
                .nodes
                .iter()
                .zip(&rule.weights)
                .map(|(&x, &w)| w * h(self.b * (1.0 + x) / 2.0))
                .sum::<f64>())
    }

    /// `∫_0^b λ^a h(λ) dλ`, doubling the node count until two successive
    /// estimates agree to `tol` (absolute).
    pub fn integrate<F: Fn(f64) -> f64>(&self, h: F, tol: f64) -> Result<f64> {
        let mut prev = self.eval(Self::SIZES[0], &h)?;
        for &n in &Self::SIZES[1..] {
            let cur = self.eval(n, &h)?;
            if (cur - prev).abs() <= tol {
                return Ok(cur);
            }
            prev = cur;
        }
        Err(Error::Quadrature(format!(
            "Gauss-Jacobi (exponent {}) failed to reach {tol:e}",
            self.a
        )))
    }
}

/// `∫_0^b λ^a h(λ) dλ` for smooth `h` and `a > -1`.
pub fn power_weighted<F: Fn(f64) -> f64>(a: f64, b: f64, h: F, tol: f64) -> Result<f64> {
    PowerWeight::new(a, b)?.integrate(h, tol)
}

/// Composite Gauss–Legendre on `[lo, hi]`, doubling the panel count until two
/// successive estimates agree to `tol` (absolute).
pub fn smooth<F: Fn(f64) -> f64>(lo: f64, hi: f64, h: F, tol: f64) -> Result<f64> {
    let rule = gauss_legendre(24);
    let eval = |panels: usize| -> f64 {
        let width = (hi - lo) / panels as f64;
        (0..panels)
            .map(|p| {
                let a = lo + width * p as f64;
                let mid = a + width / 2.0;
                rule.nodes
                    .iter()
                    .zip(&rule.weights)
                    .map(|(&x, &w)| w * h(mid + width / 2.0 * x))
                    .sum::<f64>()
                    * width
                    / 2.0
            })
            .sum()
    };
    let mut prev = eval(4);
    let mut panels = 8;
    while panels <= 4096 {
        let cur = eval(panels);
        if (cur - prev).abs() <= tol {
            return Ok(cur);
        }
        prev = cur;
        panels *= 2;
    }
    Err(Error::Quadrature(format!(
        "composite Gauss-Legendre on [{lo}, {hi}] failed to reach {tol:e}"
    )))
}

/// Split point between the Gauss–Jacobi piece and the smooth piece.
pub const SINGULAR_SPLIT: f64 = PI / 8.0;

/// `∫_0^π λ^a h(λ) dλ`: Gauss–Jacobi with weight `λ^a` on `[0, π/8]`, composite
/// Gauss–Legendre on the rest.
pub fn algebraic_singular<F: Fn(f64) -> f64>(a: f64, h: F, tol: f64) -> Result<f64> {
    let near = power_weighted(a, SINGULAR_SPLIT, &h, tol / 2.0)?;
    let far = smooth(SINGULAR_SPLIT, PI, |x| x.powf(a) * h(x), tol / 2.0)?;
    Ok(near + far)
}

/// `∫_0^π F(λ) dλ` for integrands with an integrable singularity at the
/// origin (algebraic or logarithmic). Panels shrink geometrically towards 0;
/// the final sliver `[0, λ_min]` is closed with a local power-law fit.
pub fn graded<F: Fn(f64) -> f64>(f: F) -> f64 {
    const RATIO: f64 = 0.15;
    const LAMBDA_MIN: f64 = 1e-290;
    const OUTER_PANELS: usize = 16;
    let rule = gauss_legendre(20);
    let panel = |a: f64, b: f64| -> f64 {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        rule.nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    };
    let top = PI * RATIO;
    let width = (PI - top) / OUTER_PANELS as f64;
    let mut total: f64 = (0..OUTER_PANELS)
        .map(|p| panel(top + width * p as f64, top + width * (p + 1) as f64))
        .sum();
    let mut hi = top;
    // Innermost panels contribute least; add them last.
    let mut inner = Vec::new();
    while hi > LAMBDA_MIN {
        let lo = hi * RATIO;
        inner.push(panel(lo, hi));
        hi = lo;
    }
    let tail = power_law_tail(&f, hi);
    total += inner.iter().rev().sum::<f64>() + tail;
    total
}

/// Approximates `∫_0^x F` assuming `F(λ) ≈ c λ^p` on `[0, x]`.
fn power_law_tail<F: Fn(f64) -> f64>(f: &F, x: f64) -> f64 {
    let f1 = f(x);
    let f2 = f(x * 0.5);
    if f1 == 0.0 || !f1.is_finite() || f1.signum() != f2.signum() {
        return 0.0;
    }
    let p = (f1 / f2).ln() / 2f64.ln();
    if p <= -1.0 {
        return f64::INFINITY;
    }
    f1 * x / (p + 1.0)
}
