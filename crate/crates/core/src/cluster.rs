//! Cluster structure across assets.
//!
//! Assets belong to mutually exclusive clusters. Each cluster `s` carries a
//! coupling `g_s` in `[0, 1]`; increments are generated as
//! `X_i = g_s η_s + sqrt(1 - g_s²) ε_i` with independent standard normals.
//! The inverse problem (recovering clusters from a return panel) lives in
//! [`crate::cluster_fit`].

use std::collections::HashMap;
use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Assignment of `N` assets to `q` clusters with per-cluster couplings.
///
/// Labels are kept canonical: `0..q`, numbered in order of first appearance.
/// Serialized forms use 1-based labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    labels: Vec<usize>,
    couplings: Vec<f64>,
}

impl Partition {
    /// Builds a partition from arbitrary labels; `couplings[label]` is the
    /// coupling of that cluster. Unused labels are dropped.
    pub fn new(labels: Vec<usize>, couplings: Vec<f64>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Domain("partition needs at least one asset".into()));
        }
        if let Some(&max) = labels.iter().max() {
            if max >= couplings.len() {
                return Err(Error::Shape(format!(
                    "label {max} has no coupling ({} couplings given)",
                    couplings.len()
                )));
            }
        }
        for &l in &labels {
            check_coupling(couplings[l])?;
        }
        Ok(Self::canonical_from(&labels, &couplings))
    }

    /// Every asset in its own cluster with zero coupling.
    pub fn singletons(n: usize) -> Self {
        Self { labels: (0..n).collect(), couplings: vec![0.0; n] }
    }

    pub fn single_cluster(n: usize, g: f64) -> Result<Self> {
        Self::new(vec![0; n], vec![g])
    }

    /// Consecutive blocks of the given sizes with couplings `g`.
    pub fn from_sizes(sizes: &[usize], g: &[f64]) -> Result<Self> {
        if sizes.len() != g.len() {
            return Err(Error::Shape(format!("{} sizes but {} couplings", sizes.len(), g.len())));
        }
        if sizes.contains(&0) {
            return Err(Error::Domain("cluster sizes must be positive".into()));
        }
        let labels = sizes.iter().enumerate().flat_map(|(s, &n)| std::iter::repeat_n(s, n)).collect();
        Self::new(labels, g.to_vec())
    }

    fn canonical_from(labels: &[usize], couplings: &[f64]) -> Self {
        let mut map = HashMap::new();
        let mut new_couplings = Vec::new();
        let new_labels = labels
            .iter()
            .map(|&l| {
                *map.entry(l).or_insert_with(|| {
                    new_couplings.push(couplings[l]);
                    new_couplings.len() - 1
                })
            })
            .collect();
        Self { labels: new_labels, couplings: new_couplings }
    }

    /// Relabels clusters in order of first appearance.
    pub fn canonicalize(&self) -> Self {
        Self::canonical_from(&self.labels, &self.couplings)
    }

    pub fn n_assets(&self) -> usize {
        self.labels.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.couplings.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    pub fn label(&self, asset: usize) -> usize {
        self.labels[asset]
    }

    /// Coupling of the cluster holding `asset`.
    pub fn coupling_of(&self, asset: usize) -> f64 {
        self.couplings[self.labels[asset]]
    }

    pub fn set_coupling(&mut self, cluster: usize, g: f64) -> Result<()> {
        check_coupling(g)?;
        let q = self.couplings.len();
        let slot = self.couplings.get_mut(cluster).ok_or(Error::Index { index: cluster, len: q })?;
        *slot = g;
        Ok(())
    }

    pub fn set_all_couplings(&mut self, g: f64) -> Result<()> {
        check_coupling(g)?;
        self.couplings.iter_mut().for_each(|c| *c = g);
        Ok(())
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.couplings.len()];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.couplings.len()];
        for &l in &self.labels {
            out[l] += 1;
        }
        out
    }

    /// Text form used by golden tests, e.g. `{0,1,2}:0.8 {3}:0`.
    pub fn canonical_text(&self) -> String {
        let c = self.canonicalize();
        c.members()
            .iter()
            .zip(&c.couplings)
            .map(|(m, g)| {
                let ids: Vec<String> = m.iter().map(|i| i.to_string()).collect();
                format!("{{{}}}:{}", ids.join(","), g)
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical_text())
    }
}

fn check_coupling(g: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&g) {
        return Err(Error::Domain(format!("cluster coupling must lie in [0, 1], got {g}")));
    }
    Ok(())
}

/// Pairwise couplings and optional external field of the Potts cost function.
#[derive(Debug, Clone, PartialEq)]
pub struct PottsCouplingMatrix {
    /// Symmetric `N×N`, row-major. The diagonal is ignored.
    pub j: Vec<Vec<f64>>,
    /// Per-spin external weights `k_i`; `None` disables the external term.
    pub external: Option<Vec<f64>>,
    pub inv_temp: f64,
}

impl PottsCouplingMatrix {
    pub fn new(j: Vec<Vec<f64>>) -> Result<Self> {
        let n = j.len();
        for (i, row) in j.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Shape(format!("row {i} has {} entries, expected {n}", row.len())));
            }
        }
        for i in 0..n {
            for k in i + 1..n {
                if j[i][k] != j[k][i] {
                    return Err(Error::Domain(format!("coupling matrix not symmetric at ({i}, {k})")));
                }
            }
        }
        Ok(Self { j, external: None, inv_temp: 1.0 })
    }

    pub fn with_external(mut self, k: Vec<f64>, inv_temp: f64) -> Result<Self> {
        if k.len() != self.j.len() {
            return Err(Error::Shape(format!("{} external weights for {} spins", k.len(), self.j.len())));
        }
        if !(inv_temp > 0.0) {
            return Err(Error::Domain(format!("inverse temperature must be > 0, got {inv_temp}")));
        }
        self.external = Some(k);
        self.inv_temp = inv_temp;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.j.len()
    }
}

/// `H = -Σ_{i<j} J_ij δ(s_i, s_j) - (1/β) Σ_i k_i s_i`, each unordered pair
/// counted once. The external term uses the 1-based Potts state as `s_i`
/// and the `1/β` scaling as written, with no factor on the first term.
pub fn potts_energy(p: &Partition, m: &PottsCouplingMatrix) -> Result<f64> {
    let n = p.n_assets();
    if m.dim() != n {
        return Err(Error::Shape(format!("partition has {n} assets, coupling matrix is {}×{}", m.dim(), m.dim())));
    }
    let members = p.members();
    let mut internal = 0.0;
    for cluster in &members {
        for (a, &i) in cluster.iter().enumerate() {
            for &j in &cluster[a + 1..] {
                internal += m.j[i][j];
            }
        }
    }
    let external = match &m.external {
        Some(k) => k.iter().zip(p.labels()).map(|(k, &l)| k * (l + 1) as f64).sum::<f64>() / m.inv_temp,
        None => 0.0,
    };
    Ok(-internal - external)
}

/// One period of cluster noise: `eta` per cluster, `eps` per asset, and the
/// resulting increments `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterNoiseDraw {
    pub eta: Vec<f64>,
    pub eps: Vec<f64>,
    pub x: Vec<f64>,
}

impl ClusterNoiseDraw {
    /// Draws `η` for every cluster (in label order) and then `ε` for every
    /// asset from the same stream.
    pub fn draw<R: Rng + ?Sized>(p: &Partition, rng: &mut R) -> Self {
        let eta: Vec<f64> = (0..p.n_clusters()).map(|_| rng.sample(StandardNormal)).collect();
        let eps: Vec<f64> = (0..p.n_assets()).map(|_| rng.sample(StandardNormal)).collect();
        Self::compose(p, eta, eps).expect("shapes match by construction")
    }

    /// Combines externally supplied shocks.
    pub fn compose(p: &Partition, eta: Vec<f64>, eps: Vec<f64>) -> Result<Self> {
        if eta.len() != p.n_clusters() || eps.len() != p.n_assets() {
            return Err(Error::Shape(format!(
                "need {} cluster shocks and {} asset shocks, got {} and {}",
                p.n_clusters(),
                p.n_assets(),
                eta.len(),
                eps.len()
            )));
        }
        let x = (0..p.n_assets())
            .map(|i| {
                let s = p.label(i);
                let g = p.couplings[s];
                g * eta[s] + (1.0 - g * g).sqrt() * eps[i]
            })
            .collect();
        Ok(Self { eta, eps, x })
    }
}

/// `T×N` panel of cluster-driven increments, one fresh draw per row.
pub fn generate_cluster_returns<R: Rng + ?Sized>(p: &Partition, steps: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    for &g in &p.couplings {
        check_coupling(g)?;
    }
    Ok((0..steps).map(|_| ClusterNoiseDraw::draw(p, rng).x).collect())
}

/// Probabilities of the fission/fusion kernel; must sum to at most one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FissionFusionRates {
    pub split_prob: f64,
    pub merge_prob: f64,
}

impl FissionFusionRates {
    pub fn validate(&self) -> Result<()> {
        let ok = |p: f64| (0.0..=1.0).contains(&p);
        if !ok(self.split_prob) || !ok(self.merge_prob) || self.split_prob + self.merge_prob > 1.0 {
            return Err(Error::Domain(format!(
                "split/merge probabilities must be in [0, 1] with sum <= 1, got {} and {}",
                self.split_prob, self.merge_prob
            )));
        }
        Ok(())
    }
}

/// One step of random cluster fission and fusion.
///
/// With probability `split_prob` a uniformly chosen non-singleton cluster is
/// cut by a uniform random bipartition (children keep the parent coupling).
/// With probability `merge_prob` two distinct uniformly chosen clusters merge
/// and take the size-weighted mean coupling. Otherwise, or when the chosen
/// move is impossible, the partition is returned unchanged.
pub fn fission_fusion_step<R: Rng + ?Sized>(p: &Partition, rng: &mut R, rates: FissionFusionRates) -> Partition {
    let u: f64 = rng.random();
    if u < rates.split_prob {
        split_random(p, rng)
    } else if u < rates.split_prob + rates.merge_prob {
        merge_random(p, rng)
    } else {
        p.clone()
    }
}

fn split_random<R: Rng + ?Sized>(p: &Partition, rng: &mut R) -> Partition {
    let members = p.members();
    let candidates: Vec<usize> = (0..members.len()).filter(|&s| members[s].len() > 1).collect();
    if candidates.is_empty() {
        return p.clone();
    }
    let s = candidates[rng.random_range(0..candidates.len())];
    let group = &members[s];
    // The first member stays; every other member moves with probability 1/2,
    // conditioned on at least one moving: uniform over the 2^(n-1) - 1 cuts.
    let moved: Vec<bool> = loop {
        let draw: Vec<bool> = (1..group.len()).map(|_| rng.random()).collect();
        if draw.iter().any(|&b| b) {
            break draw;
        }
    };
    let new_label = p.n_clusters();
    let mut labels = p.labels.clone();
    for (&asset, &m) in group[1..].iter().zip(&moved) {
        if m {
            labels[asset] = new_label;
        }
    }
    let mut couplings = p.couplings.clone();
    couplings.push(p.couplings[s]);
    Partition::canonical_from(&labels, &couplings)
}

fn merge_random<R: Rng + ?Sized>(p: &Partition, rng: &mut R) -> Partition {
    let q = p.n_clusters();
    if q < 2 {
        return p.clone();
    }
    let a = rng.random_range(0..q);
    let mut b = rng.random_range(0..q - 1);
    if b >= a {
        b += 1;
    }
    let sizes = p.sizes();
    let (na, nb) = (sizes[a] as f64, sizes[b] as f64);
    let g = ((na * p.couplings[a] + nb * p.couplings[b]) / (na + nb)).clamp(0.0, 1.0);
    let labels: Vec<usize> = p.labels.iter().map(|&l| if l == b { a } else { l }).collect();
    let mut couplings = p.couplings.clone();
    couplings[a] = g;
    Partition::canonical_from(&labels, &couplings)
}

/// Adjusted Rand index between two labelings of the same assets.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("labelings differ in length: {} vs {}", a.len(), b.len())));
    }
    let n = a.len();
    let choose2 = |x: usize| (x * x.saturating_sub(1)) as f64 / 2.0;
    let mut table: HashMap<(usize, usize), usize> = HashMap::new();
    let mut rows: HashMap<usize, usize> = HashMap::new();
    let mut cols: HashMap<usize, usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&v| choose2(v)).sum();
    let sum_rows: f64 = rows.values().map(|&v| choose2(v)).sum();
    let sum_cols: f64 = cols.values().map(|&v| choose2(v)).sum();
    let total = choose2(n);
    let expected = if total > 0.0 { sum_rows * sum_cols / total } else { 0.0 };
    let max = 0.5 * (sum_rows + sum_cols);
    if (max - expected).abs() < f64::EPSILON {
        // Both labelings trivial (all singletons or one block).
        return Ok(if index == max { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}
