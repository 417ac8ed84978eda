//! Conditional factor pricing with top-down and bottom-up information.
//!
//! Realized excess returns follow
//!
//! ```text
//! r_i = α⁰_i + Σ_k α¹_ik Z_k + Σ_{p,k} b²_ikp Z_k r_p + Σ_{p,m} b¹_mp θ_im r_p + Σ_p b⁰_ip r_p + ε_i
//! ```
//!
//! where `Z` (market-wide) and `θ` (asset-specific) are known at the start of
//! the period and `r_p` are the factor returns realized over it. Equivalently
//! `α_i = α⁰_i + Σ_k α¹_ik Z_k` and `β_ip = b⁰_ip + Σ_k b²_ikp Z_k + Σ_m b¹_mp θ_im`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ols::{qr_least_squares, ridge_least_squares, ThinQr};
use crate::rng::{stream, StreamRole};

/// Coefficients of the unified pricing equation. Arrays are row-major:
/// `alpha1[i*K + k]`, `b0[i*P + p]`, `b1[m*P + p]`, `b2[(i*K + k)*P + p]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModelSpec {
    pub n_assets: usize,
    pub n_factors: usize,
    pub n_z: usize,
    pub n_theta: usize,
    pub alpha0: Vec<f64>,
    pub alpha1: Vec<f64>,
    pub b0: Vec<f64>,
    pub b1: Vec<f64>,
    pub b2: Vec<f64>,
}

impl FactorModelSpec {
    pub fn zeros(n_assets: usize, n_factors: usize, n_z: usize, n_theta: usize) -> Self {
        Self {
            n_assets,
            n_factors,
            n_z,
            n_theta,
            alpha0: vec![0.0; n_assets],
            alpha1: vec![0.0; n_assets * n_z],
            b0: vec![0.0; n_assets * n_factors],
            b1: vec![0.0; n_theta * n_factors],
            b2: vec![0.0; n_assets * n_z * n_factors],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (n, p, k, m) = (self.n_assets, self.n_factors, self.n_z, self.n_theta);
        let checks = [
            ("alpha0", self.alpha0.len(), n),
            ("alpha1", self.alpha1.len(), n * k),
            ("b0", self.b0.len(), n * p),
            ("b1", self.b1.len(), m * p),
            ("b2", self.b2.len(), n * k * p),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(Error::Shape(format!("{name} has {got} entries, expected {want} for (N={n}, P={p}, K={k}, M={m})")));
            }
        }
        for (name, v) in self.blocks() {
            if let Some(x) = v.iter().find(|x| !x.is_finite()) {
                return Err(Error::Domain(format!("{name} contains non-finite value {x}")));
            }
        }
        Ok(())
    }

    fn blocks(&self) -> [(&'static str, &Vec<f64>); 5] {
        [
            ("alpha0", &self.alpha0),
            ("alpha1", &self.alpha1),
            ("b0", &self.b0),
            ("b1", &self.b1),
            ("b2", &self.b2),
        ]
    }

    pub fn alpha1(&self, i: usize, k: usize) -> f64 {
        self.alpha1[i * self.n_z + k]
    }

    pub fn b0(&self, i: usize, p: usize) -> f64 {
        self.b0[i * self.n_factors + p]
    }

    pub fn b1(&self, m: usize, p: usize) -> f64 {
        self.b1[m * self.n_factors + p]
    }

    pub fn b2(&self, i: usize, k: usize, p: usize) -> f64 {
        self.b2[(i * self.n_z + k) * self.n_factors + p]
    }

    pub fn parameter_count(&self) -> usize {
        self.alpha0.len() + self.alpha1.len() + self.b0.len() + self.b1.len() + self.b2.len()
    }

    /// `(name, value)` for every coefficient, e.g. `b2[3,0,1]`.
    pub fn named_coefficients(&self) -> Vec<(String, f64)> {
        let (n, p, k, m) = (self.n_assets, self.n_factors, self.n_z, self.n_theta);
        let mut out = Vec::with_capacity(self.parameter_count());
        for i in 0..n {
            out.push((format!("alpha0[{i}]"), self.alpha0[i]));
        }
        for i in 0..n {
            for kk in 0..k {
                out.push((format!("alpha1[{i},{kk}]"), self.alpha1(i, kk)));
            }
        }
        for i in 0..n {
            for pp in 0..p {
                out.push((format!("b0[{i},{pp}]"), self.b0(i, pp)));
            }
        }
        for mm in 0..m {
            for pp in 0..p {
                out.push((format!("b1[{mm},{pp}]"), self.b1(mm, pp)));
            }
        }
        for i in 0..n {
            for kk in 0..k {
                for pp in 0..p {
                    out.push((format!("b2[{i},{kk},{pp}]"), self.b2(i, kk, pp)));
                }
            }
        }
        out
    }

    /// Flat `key = value` text with shape metadata in the first lines.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# factor model spec v1\n");
        let _ = writeln!(s, "n_assets = {}", self.n_assets);
        let _ = writeln!(s, "n_factors = {}", self.n_factors);
        let _ = writeln!(s, "n_z = {}", self.n_z);
        let _ = writeln!(s, "n_theta = {}", self.n_theta);
        for (name, v) in self.named_coefficients() {
            let _ = writeln!(s, "{name} = {v:e}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut dims = [None; 4];
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Data(format!("line {}: expected `key = value`", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let dim_slot = ["n_assets", "n_factors", "n_z", "n_theta"].iter().position(|d| *d == key);
            if let Some(slot) = dim_slot {
                dims[slot] = Some(value.parse::<usize>().map_err(|e| Error::Data(format!("line {}: {e}", lineno + 1)))?);
            } else {
                let v: f64 = value.parse().map_err(|e| Error::Data(format!("line {}: {e}", lineno + 1)))?;
                entries.push((lineno + 1, key.to_string(), v));
            }
        }
        let [Some(n), Some(p), Some(k), Some(m)] = dims else {
            return Err(Error::Data("spec text lacks one of n_assets, n_factors, n_z, n_theta".into()));
        };
        let mut spec = Self::zeros(n, p, k, m);
        for (line, key, v) in entries {
            let (name, idx) = parse_indexed(&key).ok_or_else(|| Error::Data(format!("line {line}: bad key `{key}`")))?;
            let slot = match (name, idx.as_slice()) {
                ("alpha0", [i]) if *i < n => &mut spec.alpha0[*i],
                ("alpha1", [i, kk]) if *i < n && *kk < k => &mut spec.alpha1[i * k + kk],
                ("b0", [i, pp]) if *i < n && *pp < p => &mut spec.b0[i * p + pp],
                ("b1", [mm, pp]) if *mm < m && *pp < p => &mut spec.b1[mm * p + pp],
                ("b2", [i, kk, pp]) if *i < n && *kk < k && *pp < p => &mut spec.b2[(i * k + kk) * p + pp],
                _ => return Err(Error::Data(format!("line {line}: unknown or out-of-range key `{key}`"))),
            };
            *slot = v;
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn parse_indexed(key: &str) -> Option<(&str, Vec<usize>)> {
    let (name, rest) = key.split_once('[')?;
    let inner = rest.strip_suffix(']')?;
    let idx = inner.split(',').map(|s| s.trim().parse().ok()).collect::<Option<Vec<usize>>>()?;
    Some((name, idx))
}

/// Information available at the start of a period plus the factor returns
/// realized over it.
#[derive(Debug, Clone, PartialEq)]
pub struct InformationState {
    pub z: Vec<f64>,
    /// `N×M`, row-major by asset.
    pub theta: Vec<f64>,
    pub factor_returns: Vec<f64>,
}

impl InformationState {
    pub fn theta_row(&self, i: usize, n_theta: usize) -> &[f64] {
        &self.theta[i * n_theta..(i + 1) * n_theta]
    }

    fn check(&self, spec: &FactorModelSpec) -> Result<()> {
        if self.z.len() != spec.n_z
            || self.theta.len() != spec.n_assets * spec.n_theta
            || self.factor_returns.len() != spec.n_factors
        {
            return Err(Error::Shape(format!(
                "information state has {} Z, {} theta, {} factor values; spec needs {}, {}, {}",
                self.z.len(),
                self.theta.len(),
                self.factor_returns.len(),
                spec.n_z,
                spec.n_assets * spec.n_theta,
                spec.n_factors
            )));
        }
        Ok(())
    }
}

/// `α⁰_i + Σ_k α¹_ik Z_k`.
pub fn conditional_alpha(spec: &FactorModelSpec, i: usize, z: &[f64]) -> Result<f64> {
    if i >= spec.n_assets {
        return Err(Error::Index { index: i, len: spec.n_assets });
    }
    if z.len() != spec.n_z {
        return Err(Error::Shape(format!("{} Z values, spec has K={}", z.len(), spec.n_z)));
    }
    Ok(spec.alpha0[i] + (0..spec.n_z).map(|k| spec.alpha1(i, k) * z[k]).sum::<f64>())
}

/// `b⁰_ip + Σ_k b²_ikp Z_k + Σ_m b¹_mp θ_im`.
pub fn conditional_beta(spec: &FactorModelSpec, i: usize, p: usize, z: &[f64], theta_i: &[f64]) -> Result<f64> {
    if i >= spec.n_assets {
        return Err(Error::Index { index: i, len: spec.n_assets });
    }
    if p >= spec.n_factors {
        return Err(Error::Index { index: p, len: spec.n_factors });
    }
    if z.len() != spec.n_z || theta_i.len() != spec.n_theta {
        return Err(Error::Shape(format!(
            "got {} Z and {} theta values, spec has K={} and M={}",
            z.len(),
            theta_i.len(),
            spec.n_z,
            spec.n_theta
        )));
    }
    let top_down: f64 = (0..spec.n_z).map(|k| spec.b2(i, k, p) * z[k]).sum();
    let bottom_up: f64 = (0..spec.n_theta).map(|m| spec.b1(m, p) * theta_i[m]).sum();
    Ok(spec.b0(i, p) + top_down + bottom_up)
}

/// Conditional expected returns `α_i + Σ_p β_ip E[r_p]`.
pub fn predict_shared_risk(spec: &FactorModelSpec, info: &InformationState, expected_factor_returns: &[f64]) -> Result<Vec<f64>> {
    info.check(spec)?;
    if expected_factor_returns.len() != spec.n_factors {
        return Err(Error::Shape(format!(
            "{} expected factor returns for P={}",
            expected_factor_returns.len(),
            spec.n_factors
        )));
    }
    (0..spec.n_assets)
        .map(|i| {
            let theta_i = info.theta_row(i, spec.n_theta);
            let mut e = conditional_alpha(spec, i, &info.z)?;
            for (p, mu) in expected_factor_returns.iter().enumerate() {
                e += conditional_beta(spec, i, p, &info.z, theta_i)? * mu;
            }
            Ok(e)
        })
        .collect()
}

/// Realized returns of the unified model, summed term by term in the
/// written order.
pub fn unified_return(spec: &FactorModelSpec, info: &InformationState, idiosyncratic: &[f64]) -> Result<Vec<f64>> {
    info.check(spec)?;
    if idiosyncratic.len() != spec.n_assets {
        return Err(Error::Shape(format!("{} noise values for N={}", idiosyncratic.len(), spec.n_assets)));
    }
    let (p_n, k_n, m_n) = (spec.n_factors, spec.n_z, spec.n_theta);
    let (z, r) = (&info.z, &info.factor_returns);
    Ok((0..spec.n_assets)
        .map(|i| {
            let theta = info.theta_row(i, m_n);
            let mut y = spec.alpha0[i];
            for k in 0..k_n {
                y += spec.alpha1(i, k) * z[k];
            }
            for p in 0..p_n {
                for k in 0..k_n {
                    y += spec.b2(i, k, p) * z[k] * r[p];
                }
            }
            for p in 0..p_n {
                for m in 0..m_n {
                    y += spec.b1(m, p) * theta[m] * r[p];
                }
            }
            for p in 0..p_n {
                y += spec.b0(i, p) * r[p];
            }
            y + idiosyncratic[i]
        })
        .collect())
}

/// Time-indexed panel. Row `t` holds returns and factor returns realized over
/// period `t`, and the `Z`/`θ` values known at its start.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    pub n_assets: usize,
    pub n_factors: usize,
    pub n_z: usize,
    pub n_theta: usize,
    pub returns: Vec<Vec<f64>>,
    pub factors: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    /// Row `t` is `N×M`, row-major by asset.
    pub theta: Vec<Vec<f64>>,
}

impl ReturnPanel {
    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.returns.len();
        let rows = [
            ("returns", &self.returns, self.n_assets),
            ("factors", &self.factors, self.n_factors),
            ("z", &self.z, self.n_z),
            ("theta", &self.theta, self.n_assets * self.n_theta),
        ];
        for (name, m, width) in rows {
            if m.len() != t {
                return Err(Error::Shape(format!("{name} has {} rows, returns has {t}", m.len())));
            }
            if let Some(r) = m.iter().position(|row| row.len() != width) {
                return Err(Error::Shape(format!("{name} row {r} has {} values, expected {width}", m[r].len())));
            }
            if let Some(r) = m.iter().position(|row| row.iter().any(|x| !x.is_finite())) {
                return Err(Error::Data(format!("{name} row {r} has a missing or non-finite value")));
            }
        }
        Ok(())
    }

    pub fn info(&self, t: usize) -> InformationState {
        InformationState {
            z: self.z[t].clone(),
            theta: self.theta[t].clone(),
            factor_returns: self.factors[t].clone(),
        }
    }

    pub fn asset_column(&self, i: usize) -> Vec<f64> {
        self.returns.iter().map(|r| r[i]).collect()
    }

    pub fn factor_column(&self, p: usize) -> Vec<f64> {
        self.factors.iter().map(|r| r[p]).collect()
    }
}

/// `Cov(r_i, r_p) / Var(r_p)` over the panel.
pub fn ts_beta_estimate(panel: &ReturnPanel, i: usize, p: usize) -> Result<f64> {
    if i >= panel.n_assets {
        return Err(Error::Index { index: i, len: panel.n_assets });
    }
    if p >= panel.n_factors {
        return Err(Error::Index { index: p, len: panel.n_factors });
    }
    if panel.len() < 2 {
        return Err(Error::SampleSize("need at least 2 periods".into()));
    }
    let (x, f) = (panel.asset_column(i), panel.factor_column(p));
    let t = x.len() as f64;
    let (mx, mf) = (x.iter().sum::<f64>() / t, f.iter().sum::<f64>() / t);
    let cov: f64 = x.iter().zip(&f).map(|(a, b)| (a - mx) * (b - mf)).sum::<f64>() / (t - 1.0);
    let var: f64 = f.iter().map(|b| (b - mf) * (b - mf)).sum::<f64>() / (t - 1.0);
    if var == 0.0 {
        return Err(Error::Singular(format!("factor {p} has zero sample variance")));
    }
    Ok(cov / var)
}

/// One cross-sectional regression of returns on lagged attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSection {
    pub alpha: f64,
    pub delta: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Standard errors of `(alpha, delta...)`.
    pub std_errors: Vec<f64>,
    /// The design was rank deficient and a ridge solution was used.
    pub ridge: bool,
}

/// Regresses `returns` (length N) on an intercept and the `N×M` attributes.
/// Rank-deficient designs fall back to ridge on the attribute columns.
pub fn hb_cross_section(returns: &[f64], theta: &[f64], n_theta: usize) -> Result<CrossSection> {
    let n = returns.len();
    if theta.len() != n * n_theta {
        return Err(Error::Shape(format!("{} theta values for N={n}, M={n_theta}", theta.len())));
    }
    if n <= n_theta + 1 {
        return Err(Error::SampleSize(format!("cross-section needs N > M + 1, got N={n}, M={n_theta}")));
    }
    let x = DMatrix::from_fn(n, n_theta + 1, |i, j| if j == 0 { 1.0 } else { theta[i * n_theta + j - 1] });
    let y = DVector::from_column_slice(returns);
    let fit = qr_least_squares(&x, &y).unwrap_or_else(|_| ridge_least_squares(&x, &y, &[0]));
    let se = fit.std_errors();
    Ok(CrossSection {
        alpha: fit.coef[0],
        delta: fit.coef.iter().skip(1).copied().collect(),
        residuals: fit.residuals.iter().copied().collect(),
        std_errors: se.iter().copied().collect(),
        ridge: fit.ridge,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationMode {
    /// One pooled regression on the expanded regressor set.
    #[default]
    Pooled,
    /// Per-period cross-sections, then time-series regressions.
    TwoStage,
}

#[derive(Debug, Clone)]
pub struct Calibration {
    pub mode: CalibrationMode,
    pub estimates: FactorModelSpec,
    pub std_errors: FactorModelSpec,
    pub r_squared: f64,
    pub residual_sd: f64,
    pub observations: usize,
    /// Two-stage only: per-period intercepts and attribute payoffs.
    pub period_alpha: Vec<f64>,
    pub period_delta: Vec<Vec<f64>>,
    /// Two-stage only: periods solved with the ridge fallback.
    pub ridge_periods: Vec<usize>,
}

impl Calibration {
    /// `(name, estimate, standard error)` rows.
    pub fn table(&self) -> Vec<(String, f64, f64)> {
        self.estimates
            .named_coefficients()
            .into_iter()
            .zip(self.std_errors.named_coefficients())
            .map(|((name, est), (_, se))| (name, est, se))
            .collect()
    }
}

/// Minimum ratio of observations to free parameters.
pub const MIN_OBSERVATION_RATIO: usize = 5;

/// Per-asset regressors: `[1, Z_k.., r_p.., Z_k r_p..]`.
fn asset_design(panel: &ReturnPanel) -> (usize, Vec<String>) {
    let (p_n, k_n) = (panel.n_factors, panel.n_z);
    let mut names = vec!["intercept".to_string()];
    names.extend((0..k_n).map(|k| format!("Z[{k}]")));
    names.extend((0..p_n).map(|p| format!("r[{p}]")));
    for k in 0..k_n {
        for p in 0..p_n {
            names.push(format!("Z[{k}]*r[{p}]"));
        }
    }
    (names.len(), names)
}

fn asset_matrix(panel: &ReturnPanel) -> DMatrix<f64> {
    let (p_n, k_n) = (panel.n_factors, panel.n_z);
    let (d, _) = asset_design(panel);
    DMatrix::from_fn(panel.len(), d, |t, j| {
        let (z, r) = (&panel.z[t], &panel.factors[t]);
        match j {
            0 => 1.0,
            j if j <= k_n => z[j - 1],
            j if j <= k_n + p_n => r[j - 1 - k_n],
            j => {
                let idx = j - 1 - k_n - p_n;
                z[idx / p_n] * r[idx % p_n]
            }
        }
    })
}

fn shared_matrix(panel: &ReturnPanel, i: usize) -> DMatrix<f64> {
    let (p_n, m_n) = (panel.n_factors, panel.n_theta);
    DMatrix::from_fn(panel.len(), m_n * p_n, |t, j| {
        let (m, p) = (j / p_n, j % p_n);
        panel.theta[t][i * m_n + m] * panel.factors[t][p]
    })
}

fn shared_names(panel: &ReturnPanel) -> Vec<String> {
    let p_n = panel.n_factors;
    (0..panel.n_theta * p_n).map(|j| format!("theta[{}]*r[{}]", j / p_n, j % p_n)).collect()
}

fn unpack_asset(spec: &mut FactorModelSpec, i: usize, coef: &[f64]) {
    let (p_n, k_n) = (spec.n_factors, spec.n_z);
    spec.alpha0[i] = coef[0];
    for k in 0..k_n {
        spec.alpha1[i * k_n + k] = coef[1 + k];
    }
    for p in 0..p_n {
        spec.b0[i * p_n + p] = coef[1 + k_n + p];
    }
    for k in 0..k_n {
        for p in 0..p_n {
            spec.b2[(i * k_n + k) * p_n + p] = coef[1 + k_n + p_n + k * p_n + p];
        }
    }
}

fn check_calibration_input(panel: &ReturnPanel) -> Result<()> {
    panel.validate()?;
    let (d, _) = asset_design(panel);
    let params = panel.n_assets * d + panel.n_theta * panel.n_factors;
    let obs = panel.len() * panel.n_assets;
    if obs < MIN_OBSERVATION_RATIO * params {
        return Err(Error::SampleSize(format!(
            "{obs} observations for {params} parameters; need at least {MIN_OBSERVATION_RATIO}x"
        )));
    }
    Ok(())
}

fn collinear_error(names: impl IntoIterator<Item = String>) -> Error {
    let mut collinear: Vec<String> = Vec::new();
    for n in names {
        if !collinear.contains(&n) {
            collinear.push(n);
        }
    }
    Error::Identifiability { collinear }
}

/// Pooled least squares on the unified equation's regressors.
///
/// Asset-specific coefficients only load on their own asset's rows, so the
/// pooled problem is solved by partialling each asset's own regressors out of
/// the shared `θ·r_p` block, estimating the shared `b¹` on the stacked
/// residuals, and back-solving each asset. The result and its standard
/// errors equal those of the full pooled regression.
pub fn calibrate_unified(panel: &ReturnPanel) -> Result<Calibration> {
    check_calibration_input(panel)?;
    let (n, t) = (panel.n_assets, panel.len());
    let (d, names) = asset_design(panel);
    let shared = panel.n_theta * panel.n_factors;
    let x = asset_matrix(panel);
    let qr = ThinQr::new(&x).map_err(|cols| collinear_error(cols.into_iter().map(|j| names[j].clone())))?;
    let xtx_inv = qr.xtx_inverse();

    let ys: Vec<DVector<f64>> = (0..n).map(|i| DVector::from_vec(panel.asset_column(i))).collect();
    let ws: Vec<DMatrix<f64>> = (0..n).map(|i| shared_matrix(panel, i)).collect();

    // Shared block on residualized data.
    let (b_shared, cov_shared) = if shared > 0 {
        let mut w_tilde = DMatrix::zeros(n * t, shared);
        let mut y_tilde = DVector::zeros(n * t);
        for i in 0..n {
            w_tilde.view_mut((i * t, 0), (t, shared)).copy_from(&qr.residualize(&ws[i]));
            let yi = DMatrix::from_column_slice(t, 1, ys[i].as_slice());
            y_tilde.rows_mut(i * t, t).copy_from(&qr.residualize(&yi).column(0));
        }
        let wqr = ThinQr::new(&w_tilde).map_err(|cols| {
            let sn = shared_names(panel);
            collinear_error(cols.into_iter().map(|j| sn[j].clone()))
        })?;
        (wqr.solve(&y_tilde), Some(wqr.xtx_inverse()))
    } else {
        (DVector::zeros(0), None)
    };

    let mut est = FactorModelSpec::zeros(n, panel.n_factors, panel.n_z, panel.n_theta);
    est.b1.copy_from_slice(b_shared.as_slice());
    let mut ssr = 0.0;
    let mut coefs = Vec::with_capacity(n);
    for i in 0..n {
        let target = if shared > 0 { &ys[i] - &ws[i] * &b_shared } else { ys[i].clone() };
        let a = qr.solve(&target);
        let resid = &target - &x * &a;
        ssr += resid.norm_squared();
        unpack_asset(&mut est, i, a.as_slice());
        coefs.push(a);
    }
    let params = n * d + shared;
    let dof = (n * t).saturating_sub(params).max(1);
    let s2 = ssr / dof as f64;

    let mut se = FactorModelSpec::zeros(n, panel.n_factors, panel.n_z, panel.n_theta);
    if let Some(cov_b) = &cov_shared {
        se.b1 = cov_b.diagonal().iter().map(|v| (s2 * v).sqrt()).collect();
    }
    for i in 0..n {
        let mut var = xtx_inv.diagonal() * s2;
        if let Some(cov_b) = &cov_shared {
            // a_i = X⁺(y_i - W_i b): adds G Cov(b) Gᵀ with G = (XᵀX)⁻¹XᵀW_i.
            let g = &xtx_inv * (x.transpose() * &ws[i]);
            let extra = &g * (cov_b * s2) * g.transpose();
            var += extra.diagonal();
        }
        let sd: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();
        unpack_asset(&mut se, i, &sd);
    }

    let all: Vec<f64> = ys.iter().flat_map(|y| y.iter().copied()).collect();
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let sst: f64 = all.iter().map(|v| (v - mean) * (v - mean)).sum();
    Ok(Calibration {
        mode: CalibrationMode::Pooled,
        estimates: est,
        std_errors: se,
        r_squared: if sst > 0.0 { 1.0 - ssr / sst } else { f64::NAN },
        residual_sd: s2.sqrt(),
        observations: n * t,
        period_alpha: Vec::new(),
        period_delta: Vec::new(),
        ridge_periods: Vec::new(),
    })
}

/// Two-stage estimate: per-period cross-sections of returns on `θ` give
/// payoff series `δ_m,t`; regressing each on `[1, r_p]` gives `b¹`; each
/// asset's return net of the fitted `θ·r_p` term is then regressed on
/// `[1, Z, r_p, Z·r_p]`. Standard errors ignore first-stage estimation error.
pub fn calibrate_two_stage(panel: &ReturnPanel) -> Result<Calibration> {
    check_calibration_input(panel)?;
    let (n, t, p_n, m_n) = (panel.n_assets, panel.len(), panel.n_factors, panel.n_theta);
    let mut period_alpha = Vec::with_capacity(t);
    let mut period_delta = Vec::with_capacity(t);
    let mut ridge_periods = Vec::new();
    for s in 0..t {
        let cs = hb_cross_section(&panel.returns[s], &panel.theta[s], m_n)?;
        if cs.ridge {
            ridge_periods.push(s);
        }
        period_alpha.push(cs.alpha);
        period_delta.push(cs.delta);
    }

    let mut est = FactorModelSpec::zeros(n, p_n, panel.n_z, m_n);
    let mut se = est.clone();
    if m_n > 0 {
        let f = DMatrix::from_fn(t, p_n + 1, |s, j| if j == 0 { 1.0 } else { panel.factors[s][j - 1] });
        for m in 0..m_n {
            let y = DVector::from_fn(t, |s, _| period_delta[s][m]);
            let fit = qr_least_squares(&f, &y).map_err(|cols| {
                collinear_error(cols.into_iter().map(|j| if j == 0 { "intercept".to_string() } else { format!("r[{}]", j - 1) }))
            })?;
            let sd = fit.std_errors();
            for p in 0..p_n {
                est.b1[m * p_n + p] = fit.coef[p + 1];
                se.b1[m * p_n + p] = sd[p + 1];
            }
        }
    }

    let (_, names) = asset_design(panel);
    let x = asset_matrix(panel);
    let qr = ThinQr::new(&x).map_err(|cols| collinear_error(cols.into_iter().map(|j| names[j].clone())))?;
    let xtx_inv = qr.xtx_inverse();
    let (mut ssr, mut sst, mut all) = (0.0, 0.0, Vec::with_capacity(n * t));
    for i in 0..n {
        let y = DVector::from_fn(t, |s, _| {
            let theta = &panel.theta[s][i * m_n..(i + 1) * m_n];
            let shared: f64 = (0..m_n)
                .flat_map(|m| (0..p_n).map(move |p| (m, p)))
                .map(|(m, p)| est.b1[m * p_n + p] * theta[m] * panel.factors[s][p])
                .sum();
            panel.returns[s][i] - shared
        });
        let a = qr.solve(&y);
        let resid = &y - &x * &a;
        let s2 = resid.norm_squared() / (t - a.len()).max(1) as f64;
        ssr += resid.norm_squared();
        unpack_asset(&mut est, i, a.as_slice());
        let sd: Vec<f64> = xtx_inv.diagonal().iter().map(|v| (v * s2).sqrt()).collect();
        unpack_asset(&mut se, i, &sd);
        all.extend(panel.asset_column(i));
    }
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    sst += all.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    let params = est.parameter_count();
    Ok(Calibration {
        mode: CalibrationMode::TwoStage,
        estimates: est,
        std_errors: se,
        r_squared: if sst > 0.0 { 1.0 - ssr / sst } else { f64::NAN },
        residual_sd: (ssr / (n * t).saturating_sub(params).max(1) as f64).sqrt(),
        observations: n * t,
        period_alpha,
        period_delta,
        ridge_periods,
    })
}

pub fn calibrate(panel: &ReturnPanel, mode: CalibrationMode) -> Result<Calibration> {
    match mode {
        CalibrationMode::Pooled => calibrate_unified(panel),
        CalibrationMode::TwoStage => calibrate_two_stage(panel),
    }
}

/// Generating processes for factors and information variables.
///
/// Factor returns are i.i.d. Gaussian with per-factor mean and volatility.
/// `Z` and `θ` follow stationary AR(1) processes with unit innovation
/// variance, started from their stationary law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorDynamics {
    pub factor_mean: Vec<f64>,
    pub factor_vol: Vec<f64>,
    pub z_persistence: f64,
    pub theta_persistence: f64,
}

impl FactorDynamics {
    pub fn validate(&self) -> Result<()> {
        if self.factor_mean.len() != self.factor_vol.len() {
            return Err(Error::Shape(format!(
                "{} factor means but {} volatilities",
                self.factor_mean.len(),
                self.factor_vol.len()
            )));
        }
        if self.factor_vol.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Domain("factor volatilities must be >= 0".into()));
        }
        for (name, phi) in [("z_persistence", self.z_persistence), ("theta_persistence", self.theta_persistence)] {
            if !(0.0..1.0).contains(&phi) {
                return Err(Error::Domain(format!("{name} must lie in [0, 1), got {phi}")));
            }
        }
        Ok(())
    }

    pub fn draw_factors<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.factor_mean
            .iter()
            .zip(&self.factor_vol)
            .map(|(m, v)| m + v * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }
}

/// Draws from the stationary law of an AR(1) with unit innovations.
pub fn ar1_stationary<R: Rng + ?Sized>(phi: f64, rng: &mut R) -> f64 {
    rng.sample::<f64, _>(StandardNormal) / (1.0 - phi * phi).sqrt()
}

pub fn ar1_next<R: Rng + ?Sized>(x: f64, phi: f64, rng: &mut R) -> f64 {
    phi * x + rng.sample::<f64, _>(StandardNormal)
}

/// Simulates a `T`-period panel from the unified model with Gaussian noise of
/// standard deviation `noise_sd`. Streams are keyed by role from `seed`.
pub fn simulate_unified_panel(
    spec: &FactorModelSpec,
    dynamics: &FactorDynamics,
    periods: usize,
    noise_sd: f64,
    seed: u64,
) -> Result<ReturnPanel> {
    spec.validate()?;
    dynamics.validate()?;
    if dynamics.factor_mean.len() != spec.n_factors {
        return Err(Error::Shape(format!(
            "dynamics has {} factors, spec has {}",
            dynamics.factor_mean.len(),
            spec.n_factors
        )));
    }
    let (n, m_n) = (spec.n_assets, spec.n_theta);
    let mut z_rng = stream(seed, StreamRole::TopDownInfo, 0);
    let mut theta_rng = stream(seed, StreamRole::BottomUpInfo, 0);
    let mut f_rng = stream(seed, StreamRole::FactorReturns, 0);
    let mut e_rng = stream(seed, StreamRole::IdiosyncraticNoise, 0);
    let mut z: Vec<f64> = (0..spec.n_z).map(|_| ar1_stationary(dynamics.z_persistence, &mut z_rng)).collect();
    let mut theta: Vec<f64> = (0..n * m_n).map(|_| ar1_stationary(dynamics.theta_persistence, &mut theta_rng)).collect();
    let mut panel = ReturnPanel {
        n_assets: n,
        n_factors: spec.n_factors,
        n_z: spec.n_z,
        n_theta: m_n,
        returns: Vec::with_capacity(periods),
        factors: Vec::with_capacity(periods),
        z: Vec::with_capacity(periods),
        theta: Vec::with_capacity(periods),
    };
    for _ in 0..periods {
        let info = InformationState { z: z.clone(), theta: theta.clone(), factor_returns: dynamics.draw_factors(&mut f_rng) };
        let eps: Vec<f64> = (0..n).map(|_| noise_sd * e_rng.sample::<f64, _>(StandardNormal)).collect();
        panel.returns.push(unified_return(spec, &info, &eps)?);
        panel.factors.push(info.factor_returns);
        panel.z.push(info.z);
        panel.theta.push(info.theta);
        z.iter_mut().for_each(|v| *v = ar1_next(*v, dynamics.z_persistence, &mut z_rng));
        theta.iter_mut().for_each(|v| *v = ar1_next(*v, dynamics.theta_persistence, &mut theta_rng));
    }
    Ok(panel)
}
