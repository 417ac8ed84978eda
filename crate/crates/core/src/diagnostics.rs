//! Stylized-fact statistics for return series.

use crate::error::{Error, Result};

pub const DEFAULT_JUMP_THRESHOLD: f64 = 4.0;
pub const DEFAULT_HILL_FRACTION: f64 = 0.05;
/// Extra k fractions reported next to the default Hill estimate.
pub const HILL_SENSITIVITY_FRACTIONS: [f64; 3] = [0.025, 0.05, 0.10];
const MIN_TAIL_EXCEEDANCES: usize = 50;

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample autocorrelation at lags `0..=max_lag`, mean removed and normalized
/// by the lag-0 autocovariance.
pub fn acf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if n <= max_lag + 1 {
        return Err(Error::SampleSize(format!(
            "acf up to lag {max_lag} needs more than {} observations, got {n}",
            max_lag + 1
        )));
    }
    let mu = mean(series);
    let centered: Vec<f64> = series.iter().map(|x| x - mu).collect();
    let c0: f64 = centered.iter().map(|x| x * x).sum();
    if c0 == 0.0 || !c0.is_finite() {
        return Err(Error::UndefinedVariance);
    }
    Ok((0..=max_lag)
        .map(|lag| {
            if lag == 0 {
                return 1.0;
            }
            let ck: f64 = centered[..n - lag].iter().zip(&centered[lag..]).map(|(a, b)| a * b).sum();
            ck / c0
        })
        .collect())
}

/// Half-width of the 95% white-noise band for an ACF estimated on `n` points.
pub fn noise_band(n: usize) -> f64 {
    1.96 / (n as f64).sqrt()
}

/// Fourth standardized moment minus 3 (population moments of the sample).
pub fn excess_kurtosis(series: &[f64]) -> Result<f64> {
    let n = series.len();
    if n < 4 {
        return Err(Error::SampleSize(format!("kurtosis needs at least 4 observations, got {n}")));
    }
    let mu = mean(series);
    let (m2, m4) = series.iter().fold((0.0, 0.0), |(m2, m4), x| {
        let d = (x - mu) * (x - mu);
        (m2 + d, m4 + d * d)
    });
    let (m2, m4) = (m2 / n as f64, m4 / n as f64);
    if m2 == 0.0 {
        return Err(Error::UndefinedVariance);
    }
    Ok(m4 / (m2 * m2) - 3.0)
}

/// Hill estimate of the tail index from the largest `k = ⌊k_fraction·n⌋`
/// values of `|x|`, using the `(k+1)`-th largest as threshold.
///
/// Taking absolute values pools both tails and makes the estimate
/// independent of scale. Use [`hill_tail_index_upper`] and
/// [`hill_tail_index_lower`] for one-sided estimates.
pub fn hill_tail_index(series: &[f64], k_fraction: f64) -> Result<f64> {
    let abs: Vec<f64> = series.iter().map(|x| x.abs()).collect();
    hill_positive(abs, k_fraction)
}

pub fn hill_tail_index_upper(series: &[f64], k_fraction: f64) -> Result<f64> {
    hill_positive(series.iter().copied().filter(|&x| x > 0.0).collect(), k_fraction)
}

pub fn hill_tail_index_lower(series: &[f64], k_fraction: f64) -> Result<f64> {
    hill_positive(series.iter().filter(|&&x| x < 0.0).map(|x| -x).collect(), k_fraction)
}

fn hill_positive(mut values: Vec<f64>, k_fraction: f64) -> Result<f64> {
    if !(k_fraction > 0.0 && k_fraction < 1.0) {
        return Err(Error::Domain(format!("k fraction must lie in (0, 1), got {k_fraction}")));
    }
    values.sort_by(|a, b| b.total_cmp(a));
    let k = (k_fraction * values.len() as f64).floor() as usize;
    if k < MIN_TAIL_EXCEEDANCES || k >= values.len() {
        return Err(Error::SampleSize(format!(
            "Hill estimator needs at least {MIN_TAIL_EXCEEDANCES} tail observations, got {k}"
        )));
    }
    let threshold = values[k];
    // Exceedances must lie strictly above the threshold.
    let exceed = values[..k].iter().take_while(|&&x| x > threshold).count();
    if exceed < MIN_TAIL_EXCEEDANCES || threshold <= 0.0 {
        return Err(Error::SampleSize(format!(
            "Hill estimator needs at least {MIN_TAIL_EXCEEDANCES} exceedances, got {exceed}"
        )));
    }
    let log_sum: f64 = values[..k].iter().map(|x| (x / threshold).ln()).sum();
    Ok(k as f64 / log_sum)
}

/// Number of observations with `|x - mean| > m · sd`.
pub fn jump_count(series: &[f64], m: f64) -> Result<usize> {
    let sd = std_dev(series)?;
    let mu = mean(series);
    Ok(series.iter().filter(|x| (*x - mu).abs() > m * sd).count())
}

fn std_dev(series: &[f64]) -> Result<f64> {
    if series.len() < 2 {
        return Err(Error::SampleSize("need at least two observations".into()));
    }
    let mu = mean(series);
    let var = series.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / series.len() as f64;
    if var == 0.0 {
        return Err(Error::UndefinedVariance);
    }
    Ok(var.sqrt())
}

/// Pearson correlation of two equally long series.
pub fn correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("series lengths differ: {} vs {}", a.len(), b.len())));
    }
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedVariance);
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// Mean pairwise correlation within and across clusters of `labels`.
/// `columns[i]` is the series of asset `i`. `None` when no such pair exists.
pub fn cluster_correlations(columns: &[Vec<f64>], labels: &[usize]) -> Result<(Option<f64>, Option<f64>)> {
    if columns.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} columns but {} cluster labels",
            columns.len(),
            labels.len()
        )));
    }
    let (mut within, mut nw, mut cross, mut nc) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..columns.len() {
        for j in i + 1..columns.len() {
            let r = correlation(&columns[i], &columns[j])?;
            if labels[i] == labels[j] {
                within += r;
                nw += 1;
            } else {
                cross += r;
                nc += 1;
            }
        }
    }
    Ok(((nw > 0).then(|| within / nw as f64), (nc > 0).then(|| cross / nc as f64)))
}

/// Summary of stylized facts for one series.
#[derive(Debug, Clone, PartialEq)]
pub struct StylizedFactsReport {
    pub n: usize,
    pub lags: Vec<usize>,
    pub acf_returns: Vec<f64>,
    pub acf_abs_returns: Vec<f64>,
    pub band: f64,
    pub excess_kurtosis: f64,
    /// `(k_fraction, estimate)` on `|x|`; `None` when the tail is too thin.
    pub hill: Vec<(f64, Option<f64>)>,
    pub hill_upper: Option<f64>,
    pub hill_lower: Option<f64>,
    pub jump_threshold: f64,
    pub jump_count: usize,
}

#[derive(Debug, Clone)]
pub struct ReportOptions {
    pub lags: Vec<usize>,
    pub hill_fraction: f64,
    pub jump_threshold: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            lags: vec![1, 2, 5, 10, 20, 50],
            hill_fraction: DEFAULT_HILL_FRACTION,
            jump_threshold: DEFAULT_JUMP_THRESHOLD,
        }
    }
}

impl StylizedFactsReport {
    pub fn compute(series: &[f64], opts: &ReportOptions) -> Result<Self> {
        let max_lag = opts.lags.iter().copied().max().unwrap_or(0);
        let full = acf(series, max_lag)?;
        let abs: Vec<f64> = series.iter().map(|x| x.abs()).collect();
        let full_abs = acf(&abs, max_lag)?;
        let mut fractions: Vec<f64> = HILL_SENSITIVITY_FRACTIONS.to_vec();
        if !fractions.iter().any(|f| (f - opts.hill_fraction).abs() < 1e-12) {
            fractions.push(opts.hill_fraction);
            fractions.sort_by(f64::total_cmp);
        }
        Ok(Self {
            n: series.len(),
            lags: opts.lags.clone(),
            acf_returns: opts.lags.iter().map(|&l| full[l]).collect(),
            acf_abs_returns: opts.lags.iter().map(|&l| full_abs[l]).collect(),
            band: noise_band(series.len()),
            excess_kurtosis: excess_kurtosis(series)?,
            hill: fractions.iter().map(|&f| (f, hill_tail_index(series, f).ok())).collect(),
            hill_upper: hill_tail_index_upper(series, opts.hill_fraction).ok(),
            hill_lower: hill_tail_index_lower(series, opts.hill_fraction).ok(),
            jump_threshold: opts.jump_threshold,
            jump_count: jump_count(series, opts.jump_threshold)?,
        })
    }

    /// ACF of `|x|` at `lag` lies above the noise band.
    pub fn volatility_clustering_at(&self, lag: usize) -> Option<bool> {
        let k = self.lags.iter().position(|&l| l == lag)?;
        Some(self.acf_abs_returns[k] > self.band)
    }

    /// Hill estimate at the given k fraction, if computed.
    pub fn hill_at(&self, fraction: f64) -> Option<f64> {
        self.hill.iter().find(|(f, _)| (f - fraction).abs() < 1e-12).and_then(|(_, h)| *h)
    }
}
