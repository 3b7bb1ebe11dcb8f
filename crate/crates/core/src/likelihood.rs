//! Exact Gaussian log-likelihood, periodogram and the Whittle approximation.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::spectral::{autocov, FexpModel};
use crate::toeplitz::{dot, levinson_raw};

/// An observed zero-mean series of length at least 2.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    x: Vec<f64>,
}

impl TimeSeries {
    pub fn new(x: Vec<f64>) -> Result<Self> {
        if x.len() < 2 {
            return Err(Error::Input(format!(
                "series needs at least 2 observations, got {}",
                x.len()
            )));
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite observation at index {i}")));
        }
        Ok(TimeSeries { x })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.x
    }

    pub fn reversed(&self) -> Self {
        let mut x = self.x.clone();
        x.reverse();
        TimeSeries { x }
    }

    pub fn sample_variance(&self) -> f64 {
        dot(&self.x, &self.x) / self.x.len() as f64
    }

    /// Reads a single-column CSV headed `x` (or `x1`, as written for a single
    /// simulated replicate). Lines starting with `#` are skipped.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() != 1 || !matches!(&headers[0], "x" | "x1") {
            return Err(Error::Input(format!(
                "expected a single column named x, got {headers:?}"
            )));
        }
        let mut x = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let v: f64 = rec[0]
                .parse()
                .map_err(|e| Error::Input(format!("row {}: {e}", row + 1)))?;
            x.push(v);
        }
        TimeSeries::new(x)
    }

    pub fn from_csv_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x"])?;
        for v in &self.x {
            w.write_record([format!("{v:.17e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Periodogram ordinates at `λ_j = 2πj/n`, `j = 1..⌊(n-1)/2⌋`.
#[derive(Debug, Clone, PartialEq)]
pub struct Periodogram {
    pub freqs: Vec<f64>,
    pub ordinates: Vec<f64>,
}

impl Periodogram {
    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["lambda", "I"])?;
        for (l, i) in self.freqs.iter().zip(&self.ordinates) {
            w.write_record([format!("{l:.17e}"), format!("{i:.17e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Number of Fourier frequencies strictly inside `(0, π)`.
pub fn fourier_count(n: usize) -> usize {
    (n - 1) / 2
}

/// `(1/2πn)|Σ_t x_t e^{-iλ_j t}|²` for every `j = 0..n-1`.
pub fn periodogram_full(x: &TimeSeries) -> Vec<f64> {
    let n = x.len();
    let mut buf: Vec<Complex<f64>> = x.values().iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let scale = 1.0 / (2.0 * PI * n as f64);
    buf.iter().map(|z| z.norm_sqr() * scale).collect()
}

pub fn periodogram(x: &TimeSeries) -> Periodogram {
    let n = x.len();
    let m = fourier_count(n);
    let full = periodogram_full(x);
    Periodogram {
        freqs: (1..=m).map(|j| 2.0 * PI * j as f64 / n as f64).collect(),
        ordinates: full[1..=m].to_vec(),
    }
}

/// `-(n/2) ln 2π - ½ ln det T_n(f) - ½ xᵀ T_n(f)^{-1} x`.
pub fn exact_loglik(x: &TimeSeries, model: &FexpModel) -> Result<f64> {
    let gamma = autocov(model, x.len())?;
    exact_loglik_gamma(x, gamma.gamma())
}

/// As [`exact_loglik`] with the autocovariances supplied directly.
pub fn exact_loglik_gamma(x: &TimeSeries, gamma: &[f64]) -> Result<f64> {
    let n = x.len();
    if gamma.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: gamma.len(),
        });
    }
    let (sol, v) = levinson_raw(gamma, x.values())?;
    let logdet: f64 = v.iter().map(|v| v.ln()).sum();
    Ok(-0.5 * n as f64 * (2.0 * PI).ln() - 0.5 * logdet - 0.5 * dot(x.values(), &sol))
}

/// `-Σ_j [ln f(λ_j) + I(λ_j)/f(λ_j)]`. Additive constants are omitted; see
/// [`whittle_offset`].
pub fn whittle_loglik(x: &TimeSeries, model: &FexpModel) -> f64 {
    whittle_from_periodogram(&periodogram(x), model)
}

pub fn whittle_from_periodogram(p: &Periodogram, model: &FexpModel) -> f64 {
    whittle_terms(p, model).iter().sum()
}

/// Per-frequency Whittle contributions `-[ln f(λ_j) + I_j/f(λ_j)]`.
pub fn whittle_terms(p: &Periodogram, model: &FexpModel) -> Vec<f64> {
    p.freqs
        .iter()
        .zip(&p.ordinates)
        .map(|(&l, &i)| {
            let lf = model.log_f(l);
            -(lf + i * (-lf).exp())
        })
        .collect()
}

/// Constant that puts [`whittle_loglik`] on the scale of [`exact_loglik`]:
/// `-(n/2) ln 2π - m ln 2π` with `m = ⌊(n-1)/2⌋`. The second term converts
/// `ln f` to `ln(2π f)`, the spectral variance of each ordinate pair.
pub fn whittle_offset(n: usize) -> f64 {
    let l2pi = (2.0 * PI).ln();
    -0.5 * n as f64 * l2pi - fourier_count(n) as f64 * l2pi
}

/// `|exact - (whittle + offset)| / n`.
pub fn per_observation_gap(x: &TimeSeries, model: &FexpModel) -> Result<f64> {
    let exact = exact_loglik(x, model)?;
    let whittle = whittle_loglik(x, model) + whittle_offset(x.len());
    Ok((exact - whittle).abs() / x.len() as f64)
}

/// `E[I(λ_j)]` under the model for `j = 1..⌊(n-1)/2⌋`, from the Fejér-weighted
/// autocovariances.
pub fn expected_periodogram(model: &FexpModel, n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("n = {n} < 2")));
    }
    let gamma = autocov(model, n)?;
    let g = gamma.gamma();
    let nf = n as f64;
    Ok((1..=fourier_count(n))
        .map(|j| {
            let l = 2.0 * PI * j as f64 / nf;
            let mut s = nf * g[0];
            for (h, gh) in g.iter().enumerate().skip(1) {
                s += 2.0 * (nf - h as f64) * gh * (l * h as f64).cos();
            }
            s / (2.0 * PI * nf)
        })
        .collect())
}

/// Relative periodogram bias `E[I(λ_j)]/f(λ_j) - 1`, the systematic error the
/// Whittle approximation makes at each Fourier frequency.
pub fn whittle_bias_profile(model: &FexpModel, n: usize) -> Result<Vec<f64>> {
    let e = expected_periodogram(model, n)?;
    Ok(e.iter()
        .enumerate()
        .map(|(i, ei)| {
            let l = 2.0 * PI * (i + 1) as f64 / n as f64;
            ei * (-model.log_f(l)).exp() - 1.0
        })
        .collect())
}

/// Mean `|bias|` over the first `low` frequencies divided by the mean over the
/// rest. Values above 1 mean the error sits at the bottom of the spectrum.
pub fn low_frequency_concentration(bias: &[f64], low: usize) -> Result<f64> {
    if low == 0 || low >= bias.len() {
        return Err(Error::InvalidParameter(format!(
            "split {low} must lie strictly inside 1..{}",
            bias.len()
        )));
    }
    let mean = |s: &[f64]| s.iter().map(|b| b.abs()).sum::<f64>() / s.len() as f64;
    Ok(mean(&bias[..low]) / mean(&bias[low..]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn white() -> FexpModel {
        FexpModel::constant(1.0 / (2.0 * PI)).unwrap()
    }

    #[test]
    fn white_noise_loglik() {
        let x = TimeSeries::new(vec![0.3, -1.2, 2.0, 0.1, 0.7]).unwrap();
        let ss = dot(x.values(), x.values());
        let expected = -2.5 * (2.0 * PI).ln() - 0.5 * ss;
        assert_relative_eq!(
            exact_loglik(&x, &white()).unwrap(),
            expected,
            epsilon = 1e-10
        );
    }

    #[test]
    fn two_by_two_by_hand() {
        let x = TimeSeries::new(vec![1.0, 1.0]).unwrap();
        let v = exact_loglik_gamma(&x, &[1.0, 0.5]).unwrap();
        let expected = -(2.0 * PI).ln() - 0.5 * 0.75f64.ln() - 0.5 * 4.0 / 3.0;
        assert_relative_eq!(v, expected, epsilon = 1e-12);
    }

    #[test]
    fn reversal_invariance() {
        let x =
            TimeSeries::new((0..40).map(|t| ((t * 7 % 11) as f64 - 5.0) / 3.0).collect()).unwrap();
        let model = FexpModel::new(0.3, vec![0.1, 0.4, -0.2]).unwrap();
        assert_relative_eq!(
            exact_loglik(&x, &model).unwrap(),
            exact_loglik(&x.reversed(), &model).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn periodogram_examples() {
        let z = TimeSeries::new(vec![0.0; 16]).unwrap();
        assert!(periodogram(&z).ordinates.iter().all(|&v| v == 0.0));

        let n = 64;
        let x = TimeSeries::new(
            (0..n)
                .map(|t| (2.0 * PI * t as f64 / n as f64).cos())
                .collect(),
        )
        .unwrap();
        let p = periodogram(&x);
        assert_eq!(p.len(), 31);
        assert_relative_eq!(p.ordinates[0], n as f64 / (8.0 * PI), max_relative = 1e-12);
        assert!(p.ordinates[1..].iter().all(|&v| v < 1e-20));
    }

    #[test]
    fn parseval() {
        let x = TimeSeries::new((0..37).map(|t| ((t * 13 % 17) as f64).sin()).collect()).unwrap();
        let full = periodogram_full(&x);
        let n = x.len() as f64;
        let lhs = 2.0 * PI / n * full.iter().sum::<f64>();
        assert_relative_eq!(lhs, x.sample_variance(), epsilon = 1e-10);
    }

    #[test]
    fn whittle_doubling_shift() {
        let x =
            TimeSeries::new((0..50).map(|t| ((t * 3 % 7) as f64 - 3.0) * 0.4).collect()).unwrap();
        let model = FexpModel::new(0.2, vec![0.1, 0.3]).unwrap();
        let p = periodogram(&x);
        let base = whittle_from_periodogram(&p, &model);
        let sum_ratio: f64 = p
            .freqs
            .iter()
            .zip(&p.ordinates)
            .map(|(&l, &i)| i / eval(&model, l))
            .sum();
        let doubled = whittle_from_periodogram(&p, &model.scaled(2.0));
        let expected = base - p.len() as f64 * 2f64.ln() + 0.5 * sum_ratio;
        assert_relative_eq!(doubled, expected, max_relative = 1e-12);
    }

    fn eval(m: &FexpModel, l: f64) -> f64 {
        crate::spectral::eval_f(m, l).unwrap()
    }

    #[test]
    fn expected_periodogram_white_noise_is_flat() {
        let e = expected_periodogram(&white(), 33).unwrap();
        for v in e {
            assert_relative_eq!(v, 1.0 / (2.0 * PI), max_relative = 1e-10);
        }
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let x = TimeSeries::new(vec![1.5, -2.25, 3.0]).unwrap();
        let mut buf = Vec::new();
        x.write_csv(&mut buf).unwrap();
        assert_eq!(TimeSeries::read_csv(buf.as_slice()).unwrap(), x);
        assert!(TimeSeries::read_csv("y\n1\n2\n".as_bytes()).is_err());
        assert!(TimeSeries::read_csv("x\n1\nabc\n".as_bytes()).is_err());
        assert!(TimeSeries::read_csv("x\n1\n".as_bytes()).is_err());
        assert!(TimeSeries::new(vec![1.0, f64::NAN]).is_err());
    }
}
