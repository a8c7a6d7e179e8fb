//! Histograms, Gaussian fits, NRMSE goodness of fit, kernel density
//! estimates and the least-squares forms used for the variance scaling law.

use serde::Serialize;
use std::io::Write;

use crate::error::{check, Error, Result};
use crate::fmt::g9;
use crate::gauss::{norm_cdf, norm_pdf};
use crate::quad;
use crate::roots;

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn write_csv<W: Write>(&self, expected: &[f64], mut w: W) -> Result<()> {
        writeln!(w, "bin_left,bin_right,count,expected_count")?;
        for (i, c) in self.counts.iter().enumerate() {
            let e = expected.get(i).copied().unwrap_or(f64::NAN);
            writeln!(w, "{},{},{},{}", g9(self.edges[i]), g9(self.edges[i + 1]), c, g9(e))?;
        }
        Ok(())
    }
}

/// Equal-width bins over `[min, max]`; the last bin is closed on the right.
pub fn histogram(samples: &[f64], n_bins: usize) -> Result<Histogram> {
    check(n_bins >= 2, "n_bins", "must be >= 2")?;
    check(samples.iter().all(|x| x.is_finite()), "samples", "must be finite")?;
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::Degenerate("histogram needs at least two distinct values".into()));
    }
    let width = (hi - lo) / n_bins as f64;
    let edges: Vec<f64> = (0..=n_bins).map(|i| if i == n_bins { hi } else { lo + width * i as f64 }).collect();
    let mut counts = vec![0u64; n_bins];
    for &x in samples {
        let mut k = ((x - lo) / width) as usize;
        if k >= n_bins {
            k = n_bins - 1;
        }
        // guard the floating edge cases against the stored edges
        while k > 0 && x < edges[k] {
            k -= 1;
        }
        while k + 1 < n_bins && x >= edges[k + 1] {
            k += 1;
        }
        counts[k] += 1;
    }
    Ok(Histogram { edges, counts })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianFit {
    pub mu: f64,
    pub var: f64,
    pub n: usize,
}

impl GaussianFit {
    /// `n · (Φ(right) − Φ(left))` per bin.
    pub fn expected_counts(&self, hist: &Histogram) -> Vec<f64> {
        let n = hist.total() as f64;
        let sd = self.var.sqrt();
        let cdf = |x: f64| {
            if sd == 0.0 {
                if x >= self.mu { 1.0 } else { 0.0 }
            } else {
                norm_cdf((x - self.mu) / sd)
            }
        };
        hist.edges.windows(2).map(|w| n * (cdf(w[1]) - cdf(w[0]))).collect()
    }
}

/// Sample mean and unbiased variance.
pub fn fit_gaussian(samples: &[f64]) -> Result<GaussianFit> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InsufficientData { need: 2, got: n });
    }
    let mu = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (n - 1) as f64;
    Ok(GaussianFit { mu, var, n })
}

/// `‖ref − exp‖₂ / ‖ref − mean(ref)‖₂`.
pub fn nrmse(reference: &[f64], experiment: &[f64]) -> Result<f64> {
    check(reference.len() == experiment.len(), "experiment", "length must match reference")?;
    check(reference.len() >= 2, "reference", "needs at least 2 entries")?;
    let m = reference.iter().sum::<f64>() / reference.len() as f64;
    let den: f64 = reference.iter().map(|r| (r - m) * (r - m)).sum::<f64>().sqrt();
    if den == 0.0 {
        return Err(Error::Degenerate("reference counts are constant".into()));
    }
    let num: f64 = reference.iter().zip(experiment).map(|(r, e)| (r - e) * (r - e)).sum::<f64>().sqrt();
    Ok(num / den)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub mu: f64,
    pub var: f64,
    pub n: usize,
    pub nrmse: f64,
}

/// Histogram, Gaussian fit and the NRMSE between fitted and observed counts.
pub fn gaussian_goodness(samples: &[f64], n_bins: usize) -> Result<(Histogram, Vec<f64>, FitReport)> {
    let hist = histogram(samples, n_bins)?;
    let fit = fit_gaussian(samples)?;
    let expected = fit.expected_counts(&hist);
    let observed: Vec<f64> = hist.counts.iter().map(|&c| c as f64).collect();
    let e = nrmse(&expected, &observed)?;
    Ok((hist, expected, FitReport { mu: fit.mu, var: fit.var, n: fit.n, nrmse: e }))
}

/// Gaussian-kernel density estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Kde {
    samples: Vec<f64>,
    pub bandwidth: f64,
}

/// Silverman's rule `1.06 · σ̂ · n^(−1/5)`.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    let fit = fit_gaussian(samples)?;
    Ok(1.06 * fit.var.sqrt() * (samples.len() as f64).powf(-0.2))
}

pub fn kde(samples: &[f64], bandwidth: Option<f64>) -> Result<Kde> {
    if samples.len() < 10 {
        return Err(Error::InsufficientData { need: 10, got: samples.len() });
    }
    let h = match bandwidth {
        Some(h) => h,
        None => silverman_bandwidth(samples)?,
    };
    check(h > 0.0 && h.is_finite(), "bandwidth", "must be > 0")?;
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(Kde { samples: s, bandwidth: h })
}

impl Kde {
    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn min(&self) -> f64 {
        self.samples[0]
    }

    pub fn max(&self) -> f64 {
        self.samples[self.samples.len() - 1]
    }

    pub fn density(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        // kernels further than 40 h contribute nothing representable
        let lo = self.samples.partition_point(|&s| s < x - 40.0 * h);
        let hi = self.samples.partition_point(|&s| s <= x + 40.0 * h);
        let sum: f64 = self.samples[lo..hi].iter().map(|&s| norm_pdf((x - s) / h)).sum();
        sum / (self.samples.len() as f64 * h)
    }
}

/// `∫_{−∞}^{l} f̂(x) dx` by adaptive quadrature of the estimate.
pub fn empirical_collision_prob(density: &Kde, l: f64) -> f64 {
    let lo = density.min() - 10.0 * density.bandwidth;
    if l <= lo {
        return 0.0;
    }
    let q = quad::integrate(|x| density.density(x), lo, l, 1e-12, 1e-10);
    q.value.clamp(0.0, 1.0)
}

/// Result of a one-regressor least-squares fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

fn r_squared(y: &[f64], yhat: impl Iterator<Item = f64>) -> f64 {
    let m = y.iter().sum::<f64>() / y.len() as f64;
    let sst: f64 = y.iter().map(|v| (v - m) * (v - m)).sum();
    let sse: f64 = y.iter().zip(yhat).map(|(v, f)| (v - f) * (v - f)).sum();
    1.0 - sse / sst
}

/// `y ≈ intercept + slope·x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    check(x.len() == y.len() && x.len() >= 3, "x", "needs >= 3 points matching y")?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("regressor is constant".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = r_squared(y, x.iter().map(|a| intercept + slope * a));
    Ok(LinearFit { slope, intercept, r2 })
}

/// `y ≈ slope·x`. R² is measured against the mean of `y`, like the
/// intercept form, so the two are comparable.
pub fn proportional_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    check(x.len() == y.len() && x.len() >= 2, "x", "needs >= 2 points matching y")?;
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("regressor is identically zero".into()));
    }
    let slope = x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / sxx;
    let r2 = r_squared(y, x.iter().map(|a| slope * a));
    Ok(LinearFit { slope, intercept: 0.0, r2 })
}

/// `y ≈ a·exp(b·x)` by least squares on the original scale: for fixed `b` the
/// best `a` is linear, leaving a one-dimensional search over `b`.
pub fn exponential_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    check(x.len() == y.len() && x.len() >= 3, "x", "needs >= 3 points matching y")?;
    let xmax = x.iter().copied().fold(0.0, |m: f64, v| m.max(v.abs()));
    if xmax == 0.0 {
        return Err(Error::Degenerate("regressor is identically zero".into()));
    }
    // search b·xmax in a range where exp stays finite
    let sse = |bs: f64| {
        let b = bs / xmax;
        let e: Vec<f64> = x.iter().map(|v| (b * v).exp()).collect();
        let a = e.iter().zip(y).map(|(u, w)| u * w).sum::<f64>() / e.iter().map(|u| u * u).sum::<f64>();
        (e.iter().zip(y).map(|(u, w)| (w - a * u) * (w - a * u)).sum::<f64>(), a)
    };
    let (bs, _) = roots::minimize_scan(|bs| sse(bs).0, -30.0, 30.0, 601, 1e-10);
    let (_, a) = sse(bs);
    let b = bs / xmax;
    let r2 = r_squared(y, x.iter().map(|v| a * (b * v).exp()));
    Ok(LinearFit { slope: b, intercept: a, r2 })
}

/// The nine candidate regressors for the gap variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Form {
    VEta,
    VEta2,
    VEta3,
    V2Eta,
    V2Eta2,
    V3Eta,
    ExpVEta,
    ExpVEta2,
    ExpV2Eta,
}

impl Form {
    pub const ALL: [Form; 9] = [
        Form::VEta,
        Form::VEta2,
        Form::VEta3,
        Form::V2Eta,
        Form::V2Eta2,
        Form::V3Eta,
        Form::ExpVEta,
        Form::ExpVEta2,
        Form::ExpV2Eta,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Form::VEta => "v*eta",
            Form::VEta2 => "v*eta^2",
            Form::VEta3 => "v*eta^3",
            Form::V2Eta => "v^2*eta",
            Form::V2Eta2 => "v^2*eta^2",
            Form::V3Eta => "v^3*eta",
            Form::ExpVEta => "exp(v*eta)",
            Form::ExpVEta2 => "exp(v*eta^2)",
            Form::ExpV2Eta => "exp(v^2*eta)",
        }
    }

    pub fn regressor(&self, v: f64, eta: f64) -> f64 {
        match self {
            Form::VEta | Form::ExpVEta => v * eta,
            Form::VEta2 | Form::ExpVEta2 => v * eta * eta,
            Form::VEta3 => v * eta.powi(3),
            Form::V2Eta | Form::ExpV2Eta => v * v * eta,
            Form::V2Eta2 => v * v * eta * eta,
            Form::V3Eta => v.powi(3) * eta,
        }
    }

    pub fn is_exponential(&self) -> bool {
        matches!(self, Form::ExpVEta | Form::ExpVEta2 | Form::ExpV2Eta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FormFit {
    pub form: &'static str,
    pub r2: f64,
    pub r2_no_intercept: f64,
}

/// R² of every candidate form on `(v, η, σ²)` triples. Exponential forms
/// have no intercept variant; both columns carry the same value.
pub fn fit_forms(v: &[f64], eta: &[f64], var: &[f64]) -> Result<Vec<FormFit>> {
    Form::ALL
        .iter()
        .map(|f| {
            let g: Vec<f64> = v.iter().zip(eta).map(|(&a, &b)| f.regressor(a, b)).collect();
            if f.is_exponential() {
                let fit = exponential_fit(&g, var)?;
                Ok(FormFit { form: f.name(), r2: fit.r2, r2_no_intercept: fit.r2 })
            } else {
                let with = linear_fit(&g, var)?;
                let without = proportional_fit(&g, var)?;
                Ok(FormFit { form: f.name(), r2: with.r2, r2_no_intercept: without.r2 })
            }
        })
        .collect()
}
