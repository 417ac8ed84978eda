//! Scenario documents.
//!
//! Scenarios are TOML with a `schema_version`. Unknown keys are rejected and
//! every validation failure is reported with the line it refers to.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cluster::{FissionFusionRates, Partition};
use crate::error::{Error, Result};
use crate::factor::{FactorDynamics, FactorModelSpec};
use crate::spin::{FieldModel, SpinParams, UpdateOrder};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSource {
    #[default]
    Gaussian,
    SpinLattice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub n_assets: usize,
    pub horizon: usize,
    #[serde(default, serialize_with = "ser_seed", deserialize_with = "de_seed")]
    pub seed: u64,
    #[serde(default)]
    pub noise_source: NoiseSource,
    /// Multiplies the composed unit-variance noise term.
    #[serde(default = "default_noise_scale")]
    pub noise_scale: f64,
    #[serde(default = "default_initial_price")]
    pub initial_price: f64,
    #[serde(default)]
    pub spin: SpinBlock,
    #[serde(default)]
    pub cluster: ClusterBlock,
    #[serde(default)]
    pub factor: FactorBlock,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub interventions: Vec<InterventionSpec>,
}

fn default_noise_scale() -> f64 {
    0.01
}

fn default_initial_price() -> f64 {
    100.0
}

// TOML integers are signed 64-bit; larger seeds travel as strings.
fn ser_seed<S: Serializer>(seed: &u64, s: S) -> std::result::Result<S::Ok, S::Error> {
    match i64::try_from(*seed) {
        Ok(v) => s.serialize_i64(v),
        Err(_) => s.serialize_str(&seed.to_string()),
    }
}

fn de_seed<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<u64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(i64),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::Int(v) => u64::try_from(v).map_err(|_| serde::de::Error::custom("seed must be non-negative")),
        Raw::Text(s) => s.parse().map_err(|_| serde::de::Error::custom(format!("seed `{s}` is not a u64"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpinBlock {
    pub side: usize,
    pub j: f64,
    pub alpha: f64,
    pub beta: f64,
    pub c: f64,
    pub field: FieldModel,
    pub update: UpdateOrder,
    pub initial_strategy: i8,
    /// Lattice sweeps per market step.
    pub sweeps_per_step: usize,
    /// Sweeps run before the first step; they seed the standardization.
    pub burn_in: usize,
}

impl Default for SpinBlock {
    fn default() -> Self {
        let p = SpinParams::default();
        Self {
            side: p.side,
            j: p.j,
            alpha: p.alpha,
            beta: p.beta,
            c: p.c,
            field: p.field,
            update: p.update,
            initial_strategy: p.initial_strategy,
            sweeps_per_step: 1,
            burn_in: 1000,
        }
    }
}

impl SpinBlock {
    pub fn params(&self) -> SpinParams {
        SpinParams {
            side: self.side,
            j: self.j,
            alpha: self.alpha,
            beta: self.beta,
            c: self.c,
            field: self.field,
            update: self.update,
            initial_strategy: self.initial_strategy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterBlock {
    /// When false the cluster term is dropped and noise is `ε` alone.
    pub enabled: bool,
    /// Consecutive block sizes. Mutually exclusive with `labels`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sizes: Option<Vec<usize>>,
    /// 1-based cluster label per asset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<usize>>,
    /// Coupling per cluster, or a single value for all.
    pub g: Vec<f64>,
    pub split_prob: f64,
    pub merge_prob: f64,
}

impl Default for ClusterBlock {
    fn default() -> Self {
        Self { enabled: true, sizes: None, labels: None, g: Vec::new(), split_prob: 0.0, merge_prob: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FactorBlock {
    pub n_factors: usize,
    pub n_z: usize,
    pub n_theta: usize,
    /// Per-factor mean; also the expected factor return used in the noise
    /// decomposition. Defaults to zeros.
    pub mean: Vec<f64>,
    /// Per-factor volatility. Defaults to 0.01.
    pub vol: Vec<f64>,
    pub z_persistence: f64,
    pub theta_persistence: f64,
    /// `[N]`, default zeros.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha0: Option<Vec<f64>>,
    /// `[N][K]`, default zeros.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha1: Option<Vec<Vec<f64>>>,
    /// `[N][P]`, default ones.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b0: Option<Vec<Vec<f64>>>,
    /// `[M][P]`, default zeros.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b1: Option<Vec<Vec<f64>>>,
    /// `[N][K][P]`, default zeros.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b2: Option<Vec<Vec<Vec<f64>>>>,
}

impl Default for FactorBlock {
    fn default() -> Self {
        Self {
            n_factors: 1,
            n_z: 0,
            n_theta: 0,
            mean: Vec::new(),
            vol: Vec::new(),
            z_persistence: 0.9,
            theta_persistence: 0.8,
            alpha0: None,
            alpha1: None,
            b0: None,
            b1: None,
            b2: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterventionSpec {
    pub t: usize,
    pub path: String,
    pub value: f64,
    /// Free-form tag, e.g. the actor class the event stands for.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actor: Option<String>,
}

/// Parameter addressed by an intervention path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    SpinAlpha(Option<usize>),
    SpinBeta(Option<usize>),
    SpinJ(Option<usize>),
    /// 0-based cluster index (paths use 1-based labels).
    ClusterG(Option<usize>),
    SplitProb,
    MergeProb,
    Alpha0(usize),
    B0(usize, usize),
    B1(usize, usize),
    FactorMean(usize),
    FactorVol(usize),
    ThetaShift(usize, usize),
    NoiseScale,
}

impl Target {
    pub fn parse(path: &str, cfg: &ScenarioConfig) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = path.split('.').collect();
        let idx = |s: &str, len: usize, what: &str| -> std::result::Result<usize, String> {
            let v: usize = s.parse().map_err(|_| format!("`{s}` is not an index in `{path}`"))?;
            if v >= len {
                return Err(format!("{what} index {v} out of range (< {len}) in `{path}`"));
            }
            Ok(v)
        };
        let n = cfg.n_assets;
        let f = &cfg.factor;
        let t = match parts.as_slice() {
            ["spin", field, rest @ ..] if ["alpha", "beta", "j"].contains(field) => {
                let asset = match rest {
                    [] => None,
                    [i] => Some(idx(i, n, "asset")?),
                    _ => return Err(format!("unknown intervention path `{path}`")),
                };
                match *field {
                    "alpha" => Target::SpinAlpha(asset),
                    "beta" => Target::SpinBeta(asset),
                    _ => Target::SpinJ(asset),
                }
            }
            ["cluster", rest @ ..] if !cfg.cluster.enabled => {
                return Err(format!("`{path}` addresses the cluster layer, which is disabled ({})", rest.join(".")));
            }
            ["cluster", "g"] => Target::ClusterG(None),
            ["cluster", "g", s] => {
                let label: usize = s.parse().map_err(|_| format!("`{s}` is not a cluster label in `{path}`"))?;
                let q = cfg.initial_partition().map(|p| p.n_clusters()).unwrap_or(n);
                if label == 0 || label > q {
                    return Err(format!("cluster label {label} out of range 1..={q} in `{path}`"));
                }
                Target::ClusterG(Some(label - 1))
            }
            ["cluster", "split_prob"] => Target::SplitProb,
            ["cluster", "merge_prob"] => Target::MergeProb,
            ["factor", "alpha0", i] => Target::Alpha0(idx(i, n, "asset")?),
            ["factor", "b0", i, p] => Target::B0(idx(i, n, "asset")?, idx(p, f.n_factors, "factor")?),
            ["factor", "b1", m, p] => Target::B1(idx(m, f.n_theta, "theta")?, idx(p, f.n_factors, "factor")?),
            ["factor", "mean", p] => Target::FactorMean(idx(p, f.n_factors, "factor")?),
            ["factor", "vol", p] => Target::FactorVol(idx(p, f.n_factors, "factor")?),
            ["info", "theta_shift", i, m] => Target::ThetaShift(idx(i, n, "asset")?, idx(m, f.n_theta, "theta")?),
            ["noise_scale"] => Target::NoiseScale,
            _ => return Err(format!("unknown intervention path `{path}`")),
        };
        Ok(t)
    }

    fn check_value(&self, v: f64) -> std::result::Result<(), String> {
        if !v.is_finite() {
            return Err(format!("value {v} is not finite"));
        }
        let ok = match self {
            Target::SpinAlpha(_) | Target::SpinBeta(_) | Target::SpinJ(_) | Target::FactorVol(_) | Target::NoiseScale => v >= 0.0,
            Target::ClusterG(_) | Target::SplitProb | Target::MergeProb => (0.0..=1.0).contains(&v),
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(format!("value {v} out of range for this parameter"))
        }
    }
}

/// A validation failure tied to a config key and, when it can be found, a line.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    pub key: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: `{}`: {}", self.key, self.message),
            None => write!(f, "`{}`: {}", self.key, self.message),
        }
    }
}

fn issues_error(issues: &[ConfigIssue]) -> Error {
    Error::Config(issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))
}

impl ScenarioConfig {
    /// Parses and validates a TOML scenario.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of_offset(text, s.start));
            let key = unknown_field_name(e.message()).unwrap_or_default();
            let message = e.message().trim().to_string();
            Error::Config(match (line, key.is_empty()) {
                (Some(l), false) => format!("line {l}: `{key}`: {message}"),
                (Some(l), true) => format!("line {l}: {message}"),
                (None, _) => message,
            })
        })?;
        let issues = cfg.issues();
        if !issues.is_empty() {
            let located: Vec<ConfigIssue> = issues
                .into_iter()
                .map(|mut i| {
                    i.line = locate_key(text, &i.key);
                    i
                })
                .collect();
            return Err(issues_error(&located));
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let issues = self.issues();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(issues_error(&issues))
        }
    }

    fn issues(&self) -> Vec<ConfigIssue> {
        let mut out = Vec::new();
        let mut bad = |key: &str, message: String| {
            out.push(ConfigIssue { key: key.to_string(), line: None, message });
        };
        if self.schema_version != SCHEMA_VERSION {
            bad("schema_version", format!("unsupported schema version {} (expected {SCHEMA_VERSION})", self.schema_version));
        }
        let n = self.n_assets;
        if n == 0 {
            bad("n_assets", "must be at least 1".into());
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            bad("noise_scale", format!("must be finite and >= 0, got {}", self.noise_scale));
        }
        if !(self.initial_price > 0.0 && self.initial_price.is_finite()) {
            bad("initial_price", format!("must be finite and > 0, got {}", self.initial_price));
        }

        let s = &self.spin;
        if let Err(e) = s.params().validate() {
            let key = match e.to_string() {
                m if m.contains("side") => "spin.side",
                m if m.contains("coupling J") => "spin.j",
                m if m.contains("global coupling") => "spin.alpha",
                m if m.contains("inverse temperature") => "spin.beta",
                m if m.contains("price scale") => "spin.c",
                _ => "spin.initial_strategy",
            };
            bad(key, e.to_string());
        }
        if s.sweeps_per_step == 0 {
            bad("spin.sweeps_per_step", "must be at least 1".into());
        }
        if self.noise_source == NoiseSource::SpinLattice && s.burn_in < 2 {
            bad("spin.burn_in", "spin noise needs at least 2 burn-in sweeps to standardize".into());
        }

        let c = &self.cluster;
        if c.sizes.is_some() && c.labels.is_some() {
            bad("cluster.labels", "give either `sizes` or `labels`, not both".into());
        } else if n > 0 {
            match self.initial_partition() {
                Ok(_) => {}
                Err(Error::Shape(m)) => bad("cluster.g", m),
                Err(e) => bad(if c.labels.is_some() { "cluster.labels" } else { "cluster.sizes" }, e.to_string()),
            }
        }
        if let Err(e) = self.rates().validate() {
            bad("cluster.split_prob", e.to_string());
        }

        let f = &self.factor;
        let p = f.n_factors;
        if !f.mean.is_empty() && f.mean.len() != p {
            bad("factor.mean", format!("has {} entries, n_factors is {p}", f.mean.len()));
        }
        if !f.vol.is_empty() && f.vol.len() != p {
            bad("factor.vol", format!("has {} entries, n_factors is {p}", f.vol.len()));
        }
        if f.vol.iter().any(|v| !(*v >= 0.0)) {
            bad("factor.vol", "volatilities must be >= 0".into());
        }
        for (key, phi) in [("factor.z_persistence", f.z_persistence), ("factor.theta_persistence", f.theta_persistence)] {
            if !(0.0..1.0).contains(&phi) {
                bad(key, format!("must lie in [0, 1), got {phi}"));
            }
        }
        let shape_checks: [(&str, Option<Vec<usize>>, Vec<usize>); 5] = [
            ("factor.alpha0", f.alpha0.as_ref().map(|v| vec![v.len()]), vec![n]),
            ("factor.alpha1", f.alpha1.as_ref().map(|v| dims2(v)), vec![n, f.n_z]),
            ("factor.b0", f.b0.as_ref().map(|v| dims2(v)), vec![n, p]),
            ("factor.b1", f.b1.as_ref().map(|v| dims2(v)), vec![f.n_theta, p]),
            ("factor.b2", f.b2.as_ref().map(|v| dims3(v)), vec![n, f.n_z, p]),
        ];
        for (key, got, want) in shape_checks {
            if let Some(got) = got {
                if !shape_matches(&got, &want) {
                    bad(key, format!("expected shape {want:?}"));
                }
            }
        }

        for (k, iv) in self.interventions.iter().enumerate() {
            if iv.t >= self.horizon {
                bad(&format!("interventions[{k}].t"), format!("time {} outside [0, {})", iv.t, self.horizon));
            }
            match Target::parse(&iv.path, self) {
                Ok(target) => {
                    if let Err(m) = target.check_value(iv.value) {
                        bad(&format!("interventions[{k}].value"), m);
                    }
                }
                Err(m) => bad(&format!("interventions[{k}].path"), m),
            }
        }
        out
    }

    pub fn initial_partition(&self) -> Result<Partition> {
        let c = &self.cluster;
        let n = self.n_assets;
        let (labels, q) = match (&c.sizes, &c.labels) {
            (Some(sizes), _) => {
                if sizes.iter().sum::<usize>() != n {
                    return Err(Error::Domain(format!("cluster sizes sum to {}, n_assets is {n}", sizes.iter().sum::<usize>())));
                }
                if sizes.contains(&0) {
                    return Err(Error::Domain("cluster sizes must be positive".into()));
                }
                let labels: Vec<usize> = sizes.iter().enumerate().flat_map(|(s, &k)| std::iter::repeat_n(s, k)).collect();
                (labels, sizes.len())
            }
            (None, Some(labels)) => {
                if labels.len() != n {
                    return Err(Error::Domain(format!("{} labels for {n} assets", labels.len())));
                }
                if labels.contains(&0) {
                    return Err(Error::Domain("labels are 1-based".into()));
                }
                let q = labels.iter().copied().max().unwrap_or(0);
                (labels.iter().map(|l| l - 1).collect(), q)
            }
            (None, None) => ((0..n).collect(), n),
        };
        let g = match c.g.len() {
            0 => vec![0.0; q],
            1 => vec![c.g[0]; q],
            k if k == q => c.g.clone(),
            k => return Err(Error::Shape(format!("{k} couplings for {q} clusters"))),
        };
        if let Some(bad) = g.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Shape(format!("coupling {bad} outside [0, 1]")));
        }
        // Labels that never occur are fine in the config; Partition drops them.
        Partition::new(labels, g)
    }

    pub fn rates(&self) -> FissionFusionRates {
        FissionFusionRates { split_prob: self.cluster.split_prob, merge_prob: self.cluster.merge_prob }
    }

    pub fn factor_spec(&self) -> FactorModelSpec {
        let f = &self.factor;
        let (n, p, k, m) = (self.n_assets, f.n_factors, f.n_z, f.n_theta);
        let mut spec = FactorModelSpec::zeros(n, p, k, m);
        spec.b0 = vec![1.0; n * p];
        if let Some(v) = &f.alpha0 {
            spec.alpha0 = v.clone();
        }
        if let Some(v) = &f.alpha1 {
            spec.alpha1 = v.concat();
        }
        if let Some(v) = &f.b0 {
            spec.b0 = v.concat();
        }
        if let Some(v) = &f.b1 {
            spec.b1 = v.concat();
        }
        if let Some(v) = &f.b2 {
            spec.b2 = v.iter().flat_map(|a| a.concat()).collect();
        }
        spec
    }

    pub fn dynamics(&self) -> FactorDynamics {
        let f = &self.factor;
        let p = f.n_factors;
        FactorDynamics {
            factor_mean: if f.mean.is_empty() { vec![0.0; p] } else { f.mean.clone() },
            factor_vol: if f.vol.is_empty() { vec![0.01; p] } else { f.vol.clone() },
            z_persistence: f.z_persistence,
            theta_persistence: f.theta_persistence,
        }
    }

    /// The config with every default written out.
    pub fn resolved(&self) -> Self {
        let mut r = self.clone();
        let spec = self.factor_spec();
        let dyn_ = self.dynamics();
        let f = &mut r.factor;
        let (n, p, k, m) = (self.n_assets, f.n_factors, f.n_z, f.n_theta);
        f.mean = dyn_.factor_mean;
        f.vol = dyn_.factor_vol;
        f.alpha0 = Some(spec.alpha0.clone());
        f.alpha1 = Some(spec.alpha1.chunks(k.max(1)).take(n).map(|c| c[..k].to_vec()).collect());
        f.b0 = Some(spec.b0.chunks(p.max(1)).take(n).map(|c| c[..p].to_vec()).collect());
        f.b1 = Some(spec.b1.chunks(p.max(1)).take(m).map(|c| c[..p].to_vec()).collect());
        f.b2 = Some(
            (0..n)
                .map(|i| (0..k).map(|kk| (0..p).map(|pp| spec.b2(i, kk, pp)).collect()).collect())
                .collect(),
        );
        if k == 0 {
            f.alpha1 = Some(vec![Vec::new(); n]);
            f.b2 = Some(vec![Vec::new(); n]);
        }
        if p == 0 {
            f.b0 = Some(vec![Vec::new(); n]);
            f.b1 = Some(vec![Vec::new(); m]);
        }
        if let Ok(part) = self.initial_partition() {
            r.cluster.sizes = None;
            r.cluster.labels = Some(part.labels().iter().map(|l| l + 1).collect());
            r.cluster.g = part.couplings().to_vec();
        }
        r
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

fn dims2(v: &[Vec<f64>]) -> Vec<usize> {
    let inner = v.first().map_or(0, Vec::len);
    if v.iter().any(|r| r.len() != inner) {
        return vec![usize::MAX];
    }
    vec![v.len(), inner]
}

fn dims3(v: &[Vec<Vec<f64>>]) -> Vec<usize> {
    let inner = v.first().map_or(vec![0, 0], |r| dims2(r));
    if v.iter().any(|r| dims2(r) != inner) {
        return vec![usize::MAX];
    }
    let mut d = vec![v.len()];
    d.extend(inner);
    d
}

// Zero-width trailing axes may be written as empty rows or left out.
fn shape_matches(got: &[usize], want: &[usize]) -> bool {
    if got.first() != want.first() {
        return false;
    }
    if want.iter().product::<usize>() == 0 {
        return got.iter().product::<usize>() == 0;
    }
    got == want
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn unknown_field_name(message: &str) -> Option<String> {
    let rest = message.split("unknown field `").nth(1)?;
    Some(rest.split('`').next()?.to_string())
}

/// Line of `key` (dotted, with `interventions[k]` for array tables) in the
/// document, falling back to the enclosing table header.
pub fn locate_key(text: &str, key: &str) -> Option<usize> {
    let (table, leaf) = match key.rsplit_once('.') {
        Some((t, l)) => (t.to_string(), l),
        None => (String::new(), key),
    };
    let mut current = String::new();
    let mut counts: std::collections::HashMap<String, usize> = Default::default();
    let mut header_line = None;
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if let Some(name) = line.strip_prefix("[[").and_then(|l| l.strip_suffix("]]")) {
            let name = name.trim().to_string();
            let k = counts.entry(name.clone()).or_insert(0);
            current = format!("{name}[{k}]");
            *k += 1;
        } else if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
        } else if let Some((k, _)) = line.split_once('=') {
            if current == table && k.trim() == leaf {
                return Some(no + 1);
            }
            continue;
        } else {
            continue;
        }
        if current == table {
            header_line = Some(no + 1);
        }
    }
    header_line.or(if table.is_empty() { None } else { locate_key(text, &table) })
}

pub fn load_config(path: &std::path::Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    ScenarioConfig::from_toml(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "schema_version = 1\nn_assets = 2\nhorizon = 10\nseed = 7\n";

    #[test]
    fn minimal_config_defaults() {
        let cfg = ScenarioConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.noise_source, NoiseSource::Gaussian);
        assert_eq!(cfg.initial_partition().unwrap().n_clusters(), 2);
        assert_eq!(cfg.factor_spec().b0, vec![1.0, 1.0]);
    }

    #[test]
    fn unknown_key_names_key_and_line() {
        let text = "schema_version = 1\nn_assets = 2\nhorizon = 10\n[spin]\nalpha_typo = 3\n";
        let err = ScenarioConfig::from_toml(text).unwrap_err().to_string();
        assert!(err.contains("alpha_typo"), "{err}");
        assert!(err.contains("line 5"), "{err}");
    }

    #[test]
    fn semantic_errors_are_line_anchored() {
        let text = "schema_version = 1\nn_assets = 4\nhorizon = 10\n\n[cluster]\nsizes = [2, 1]\n\n[[interventions]]\nt = 3\npath = \"spin.gamma\"\nvalue = 1.0\n";
        let err = ScenarioConfig::from_toml(text).unwrap_err().to_string();
        assert!(err.contains("line 6: `cluster.sizes`"), "{err}");
        assert!(err.contains("line 10: `interventions[0].path`"), "{err}");
    }

    #[test]
    fn wrong_schema_version() {
        let err = ScenarioConfig::from_toml("schema_version = 2\nn_assets = 1\nhorizon = 0\n").unwrap_err().to_string();
        assert!(err.contains("line 1") && err.contains("schema"), "{err}");
    }

    #[test]
    fn intervention_paths() {
        let mut cfg = ScenarioConfig::from_toml(MINIMAL).unwrap();
        cfg.factor.n_theta = 1;
        for ok in ["spin.alpha", "spin.beta.1", "cluster.g.2", "factor.b0.1.0", "info.theta_shift.0.0", "noise_scale"] {
            assert!(Target::parse(ok, &cfg).is_ok(), "{ok}");
        }
        for bad in ["spin.alpha.2", "cluster.g.0", "cluster.g.3", "factor.b0.0.1", "spin", "foo.bar"] {
            assert!(Target::parse(bad, &cfg).is_err(), "{bad}");
        }
    }

    #[test]
    fn resolved_round_trips() {
        let text = "schema_version = 1\nn_assets = 3\nhorizon = 5\nseed = \"18446744073709551615\"\n[cluster]\nsizes = [2, 1]\ng = [0.5]\n[factor]\nn_factors = 2\nn_z = 1\n";
        let cfg = ScenarioConfig::from_toml(text).unwrap();
        let resolved = cfg.resolved();
        let again = ScenarioConfig::from_toml(&resolved.to_toml().unwrap()).unwrap();
        assert_eq!(again, resolved);
        assert_eq!(again.factor_spec(), cfg.factor_spec());
        assert_eq!(again.initial_partition().unwrap(), cfg.initial_partition().unwrap());
        assert_eq!(again.seed, u64::MAX);
    }
}
