//! Maximum-likelihood recovery of cluster structure from a return panel.
//!
//! Columns are z-scored and their sample correlation matrix `C` computed.
//! Under the cluster model each cluster `s` of size `n_s` has covariance
//! `(1 - g²) I + g² 11ᵀ`. With `c_s = Σ_{i,j∈s} C_ij` (diagonal included),
//! the Gaussian log-likelihood maximized over `g_s` gives, relative to the
//! all-singletons model,
//!
//! ```text
//! ΔL_s = T/2 [ ln(n_s / c_s) + (n_s - 1) ln((n_s² - n_s) / (n_s² - c_s)) ]
//! g_s² = (c_s - n_s) / (n_s² - n_s)
//! ```
//!
//! for `n_s < c_s < n_s²`, and `ΔL_s = 0`, `g_s = 0` otherwise. The search
//! maximizes `Σ_s ΔL_s` minus an optional complexity penalty of
//! `½ ln T` per asset that joins a non-singleton cluster (i.e. `N - q` free
//! memberships), which keeps pure noise at the all-singletons partition.

use rand::Rng;
use rayon::prelude::*;

use crate::cluster::Partition;
use crate::error::{Error, Result};
use crate::rng::{stream, StreamRole};

/// Upper bound on `g²` when a cluster is perfectly correlated.
const MAX_G2: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Penalty {
    /// Raw likelihood gain.
    None,
    /// `½ ln T` per membership, `(N - q) · ½ ln T` in total.
    #[default]
    Bic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SearchStrategy {
    /// Exhaustive for `N <= EXHAUSTIVE_MAX_ASSETS`, heuristic otherwise.
    #[default]
    Auto,
    Exhaustive,
    /// Greedy agglomeration followed by simulated annealing restarts.
    Heuristic,
}

pub const EXHAUSTIVE_MAX_ASSETS: usize = 8;

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub penalty: Penalty,
    pub strategy: SearchStrategy,
    pub restarts: usize,
    /// Annealing proposals per restart, per asset.
    pub sweeps_per_asset: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            penalty: Penalty::Bic,
            strategy: SearchStrategy::Auto,
            restarts: 4,
            sweeps_per_asset: 400,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClusterFit {
    pub partition: Partition,
    /// Log-likelihood gain over all singletons (never negative).
    pub log_likelihood_gain: f64,
    /// Penalized objective the search maximized.
    pub objective: f64,
    pub observations: usize,
    pub exhaustive: bool,
}

/// Likelihood machinery over a fixed correlation matrix.
#[derive(Debug, Clone)]
pub struct ClusterLikelihood {
    corr: Vec<Vec<f64>>,
    observations: usize,
    penalty_per_member: f64,
}

impl ClusterLikelihood {
    /// Standardizes the `T×N` panel (rows are dates) and builds the
    /// correlation matrix.
    pub fn from_panel(panel: &[Vec<f64>], penalty: Penalty) -> Result<Self> {
        let t = panel.len();
        if t < 2 {
            return Err(Error::SampleSize(format!("need at least 2 observations, got {t}")));
        }
        let n = panel[0].len();
        if n < 2 {
            return Err(Error::SampleSize(format!("need at least 2 assets, got {n}")));
        }
        if let Some(r) = panel.iter().position(|r| r.len() != n) {
            return Err(Error::Shape(format!("row {r} has {} values, expected {n}", panel[r].len())));
        }
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(n);
        for col in 0..n {
            let x: Vec<f64> = panel.iter().map(|r| r[col]).collect();
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("column {col} contains non-finite values")));
            }
            let mu = x.iter().sum::<f64>() / t as f64;
            let sd = (x.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / t as f64).sqrt();
            if sd == 0.0 || sd < 1e-300 {
                return Err(Error::DegenerateColumn { column: col });
            }
            z.push(x.iter().map(|v| (v - mu) / sd).collect());
        }
        let mut corr = vec![vec![0.0; n]; n];
        for i in 0..n {
            corr[i][i] = 1.0;
            for j in i + 1..n {
                let c = z[i].iter().zip(&z[j]).map(|(a, b)| a * b).sum::<f64>() / t as f64;
                corr[i][j] = c;
                corr[j][i] = c;
            }
        }
        Ok(Self::from_correlation(corr, t, penalty))
    }

    pub fn from_correlation(corr: Vec<Vec<f64>>, observations: usize, penalty: Penalty) -> Self {
        let penalty_per_member = match penalty {
            Penalty::None => 0.0,
            Penalty::Bic => 0.5 * (observations as f64).ln(),
        };
        Self { corr, observations, penalty_per_member }
    }

    pub fn n_assets(&self) -> usize {
        self.corr.len()
    }

    pub fn correlation(&self) -> &[Vec<f64>] {
        &self.corr
    }

    /// Likelihood gain and fitted coupling of one cluster with `size` members
    /// and correlation mass `mass`.
    pub fn cluster_gain(&self, size: usize, mass: f64) -> (f64, f64) {
        if size < 2 {
            return (0.0, 0.0);
        }
        let n = size as f64;
        if mass <= n {
            return (0.0, 0.0);
        }
        let g2 = ((mass - n) / (n * n - n)).min(MAX_G2);
        let mass = n + g2 * (n * n - n);
        let gain = 0.5
            * self.observations as f64
            * ((n / mass).ln() + (n - 1.0) * ((n * n - n) / (n * n - mass)).ln());
        (gain, g2.sqrt())
    }

    fn cluster_score(&self, size: usize, mass: f64) -> f64 {
        if size < 2 {
            return 0.0;
        }
        self.cluster_gain(size, mass).0 - self.penalty_per_member * (size - 1) as f64
    }

    fn mass(&self, members: &[usize]) -> f64 {
        let mut m = 0.0;
        for &i in members {
            for &j in members {
                m += self.corr[i][j];
            }
        }
        m
    }

    /// Unpenalized gain, penalized objective and fitted couplings of `labels`.
    pub fn evaluate(&self, labels: &[usize]) -> (f64, f64, Vec<f64>) {
        let q = labels.iter().max().map_or(0, |m| m + 1);
        let mut members = vec![Vec::new(); q];
        for (i, &l) in labels.iter().enumerate() {
            members[l].push(i);
        }
        let (mut gain, mut objective) = (0.0, 0.0);
        let mut g = vec![0.0; q];
        for (s, m) in members.iter().enumerate() {
            if m.is_empty() {
                continue;
            }
            let mass = self.mass(m);
            let (dg, gs) = self.cluster_gain(m.len(), mass);
            gain += dg;
            objective += self.cluster_score(m.len(), mass);
            g[s] = gs;
        }
        (gain, objective, g)
    }

    fn fit_from_labels(&self, labels: &[usize], exhaustive: bool) -> ClusterFit {
        let (gain, objective, g) = self.evaluate(labels);
        let partition = Partition::new(labels.to_vec(), g).expect("fitted couplings lie in [0, 1]");
        ClusterFit {
            partition,
            log_likelihood_gain: gain,
            objective,
            observations: self.observations,
            exhaustive,
        }
    }
}

/// Fits the cluster model to a `T×N` panel (rows are dates).
pub fn fit_clusters_ml(panel: &[Vec<f64>], opts: &FitOptions) -> Result<ClusterFit> {
    let lik = ClusterLikelihood::from_panel(panel, opts.penalty)?;
    Ok(fit_with_likelihood(&lik, opts))
}

pub fn fit_with_likelihood(lik: &ClusterLikelihood, opts: &FitOptions) -> ClusterFit {
    let n = lik.n_assets();
    let exhaustive = match opts.strategy {
        SearchStrategy::Auto => n <= EXHAUSTIVE_MAX_ASSETS,
        SearchStrategy::Exhaustive => true,
        SearchStrategy::Heuristic => false,
    };
    let labels = if exhaustive { exhaustive_search(lik) } else { heuristic_search(lik, opts) };
    let fit = lik.fit_from_labels(&labels, exhaustive);
    if fit.objective <= 0.0 {
        return lik.fit_from_labels(&(0..n).collect::<Vec<_>>(), exhaustive);
    }
    fit
}

/// Visits every set partition of `0..n` as a restricted growth string.
pub fn for_each_partition(n: usize, mut visit: impl FnMut(&[usize])) {
    if n == 0 {
        return;
    }
    let mut a = vec![0usize; n];
    let mut max = vec![0usize; n];
    loop {
        visit(&a);
        let mut i = n - 1;
        loop {
            if i == 0 {
                return;
            }
            if a[i] <= max[i - 1] {
                a[i] += 1;
                let m = max[i - 1].max(a[i]);
                max[i] = m;
                for k in i + 1..n {
                    a[k] = 0;
                    max[k] = m;
                }
                break;
            }
            i -= 1;
        }
    }
}

fn exhaustive_search(lik: &ClusterLikelihood) -> Vec<usize> {
    let n = lik.n_assets();
    let mut best = (0..n).collect::<Vec<_>>();
    let mut best_obj = lik.evaluate(&best).1;
    for_each_partition(n, |labels| {
        let obj = lik.evaluate(labels).1;
        if obj > best_obj {
            best_obj = obj;
            best = labels.to_vec();
        }
    });
    best
}

/// Mutable clustering with cached sizes and correlation masses.
struct SearchState<'a> {
    lik: &'a ClusterLikelihood,
    labels: Vec<usize>,
    size: Vec<usize>,
    mass: Vec<f64>,
    objective: f64,
}

impl<'a> SearchState<'a> {
    fn new(lik: &'a ClusterLikelihood, labels: Vec<usize>) -> Self {
        let n = labels.len();
        // One slot per asset so a new singleton always has a free label.
        let mut size = vec![0; n];
        let mut mass = vec![0.0; n];
        for i in 0..n {
            size[labels[i]] += 1;
            for j in 0..n {
                if labels[i] == labels[j] {
                    mass[labels[i]] += lik.corr[i][j];
                }
            }
        }
        let objective = (0..n).map(|s| lik.cluster_score(size[s], mass[s])).sum();
        Self { lik, labels, size, mass, objective }
    }

    fn link(&self, i: usize, cluster: usize) -> f64 {
        self.labels
            .iter()
            .enumerate()
            .filter(|&(j, &l)| l == cluster && j != i)
            .map(|(j, _)| self.lik.corr[i][j])
            .sum()
    }

    /// Objective change from moving asset `i` into `to`.
    fn move_delta(&self, i: usize, to: usize) -> f64 {
        let from = self.labels[i];
        if from == to {
            return 0.0;
        }
        let (lf, lt) = (self.link(i, from), self.link(i, to));
        let new_from = self.mass[from] - 2.0 * lf - 1.0;
        let new_to = self.mass[to] + 2.0 * lt + 1.0;
        self.lik.cluster_score(self.size[from] - 1, new_from) + self.lik.cluster_score(self.size[to] + 1, new_to)
            - self.lik.cluster_score(self.size[from], self.mass[from])
            - self.lik.cluster_score(self.size[to], self.mass[to])
    }

    fn apply_move(&mut self, i: usize, to: usize, delta: f64) {
        let from = self.labels[i];
        let (lf, lt) = (self.link(i, from), self.link(i, to));
        self.mass[from] -= 2.0 * lf + 1.0;
        self.mass[to] += 2.0 * lt + 1.0;
        self.size[from] -= 1;
        self.size[to] += 1;
        self.labels[i] = to;
        self.objective += delta;
    }

    fn cross_mass(&self, a: usize, b: usize) -> f64 {
        let mut m = 0.0;
        for (i, &li) in self.labels.iter().enumerate() {
            if li != a {
                continue;
            }
            for (j, &lj) in self.labels.iter().enumerate() {
                if lj == b {
                    m += self.lik.corr[i][j];
                }
            }
        }
        m
    }

    fn merge_delta(&self, a: usize, b: usize) -> f64 {
        let merged = self.mass[a] + self.mass[b] + 2.0 * self.cross_mass(a, b);
        self.lik.cluster_score(self.size[a] + self.size[b], merged)
            - self.lik.cluster_score(self.size[a], self.mass[a])
            - self.lik.cluster_score(self.size[b], self.mass[b])
    }

    fn apply_merge(&mut self, a: usize, b: usize, delta: f64) {
        let cross = self.cross_mass(a, b);
        for l in self.labels.iter_mut() {
            if *l == b {
                *l = a;
            }
        }
        self.mass[a] += self.mass[b] + 2.0 * cross;
        self.size[a] += self.size[b];
        self.mass[b] = 0.0;
        self.size[b] = 0;
        self.objective += delta;
    }

    fn occupied(&self) -> Vec<usize> {
        (0..self.size.len()).filter(|&s| self.size[s] > 0).collect()
    }

    fn empty_slot(&self) -> Option<usize> {
        self.size.iter().position(|&s| s == 0)
    }

    fn refresh(&mut self) {
        *self = SearchState::new(self.lik, self.labels.clone());
    }
}

/// Repeatedly applies the best positive pairwise merge.
fn greedy_agglomerate(state: &mut SearchState) {
    loop {
        let occ = state.occupied();
        let mut best: Option<(usize, usize, f64)> = None;
        for (x, &a) in occ.iter().enumerate() {
            for &b in &occ[x + 1..] {
                let d = state.merge_delta(a, b);
                if d > 1e-12 && best.is_none_or(|(_, _, bd)| d > bd) {
                    best = Some((a, b, d));
                }
            }
        }
        match best {
            Some((a, b, d)) => state.apply_merge(a, b, d),
            None => break,
        }
    }
}

/// Moves single assets to their best cluster until no move improves.
fn local_polish(state: &mut SearchState) {
    let n = state.labels.len();
    loop {
        let mut improved = false;
        for i in 0..n {
            let mut targets = state.occupied();
            if let Some(e) = state.empty_slot() {
                targets.push(e);
            }
            let mut best = (state.labels[i], 0.0);
            for to in targets {
                let d = state.move_delta(i, to);
                if d > best.1 + 1e-12 {
                    best = (to, d);
                }
            }
            if best.0 != state.labels[i] {
                state.apply_move(i, best.0, best.1);
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
}

fn anneal(lik: &ClusterLikelihood, start: Vec<usize>, opts: &FitOptions, restart: usize) -> (Vec<usize>, f64) {
    let n = start.len();
    let mut rng = stream(opts.seed, StreamRole::Annealing, restart as u64);
    let mut state = SearchState::new(lik, start);
    let mut best = (state.labels.clone(), state.objective);
    let iterations = (opts.sweeps_per_asset * n).max(1);
    let (t0, t1): (f64, f64) = (2.0, 1e-3);
    for it in 0..iterations {
        let temp = t0 * (t1 / t0).powf(it as f64 / iterations as f64);
        let accept = |d: f64, rng: &mut crate::rng::StreamRng| d >= 0.0 || rng.random::<f64>() < (d / temp).exp();
        let kind: f64 = rng.random();
        if kind < 0.8 {
            let i = rng.random_range(0..n);
            let occ = state.occupied();
            let to = if rng.random::<f64>() < 0.1 {
                match state.empty_slot() {
                    Some(e) => e,
                    None => continue,
                }
            } else {
                occ[rng.random_range(0..occ.len())]
            };
            let d = state.move_delta(i, to);
            if to != state.labels[i] && accept(d, &mut rng) {
                state.apply_move(i, to, d);
            }
        } else if kind < 0.9 {
            let occ = state.occupied();
            if occ.len() < 2 {
                continue;
            }
            let a = occ[rng.random_range(0..occ.len())];
            let b = occ[rng.random_range(0..occ.len())];
            if a == b {
                continue;
            }
            let d = state.merge_delta(a, b);
            if accept(d, &mut rng) {
                state.apply_merge(a, b, d);
            }
        } else {
            // Random bipartition of a cluster.
            let occ: Vec<usize> = state.occupied().into_iter().filter(|&s| state.size[s] > 1).collect();
            if occ.is_empty() {
                continue;
            }
            let s = occ[rng.random_range(0..occ.len())];
            let Some(e) = state.empty_slot() else { continue };
            let before = state.objective;
            let saved = state.labels.clone();
            let mut moved = false;
            for i in 0..n {
                if saved[i] == s && rng.random::<bool>() {
                    state.labels[i] = e;
                    moved = true;
                }
            }
            if !moved || state.size[s] == state.labels.iter().filter(|&&l| l == e).count() {
                state.labels = saved;
                continue;
            }
            state.refresh();
            if !accept(state.objective - before, &mut rng) {
                state.labels = saved;
                state.refresh();
            }
        }
        if state.objective > best.1 + 1e-12 {
            best = (state.labels.clone(), state.objective);
        }
    }
    let mut polished = SearchState::new(lik, best.0);
    local_polish(&mut polished);
    (polished.labels, polished.objective)
}

fn heuristic_search(lik: &ClusterLikelihood, opts: &FitOptions) -> Vec<usize> {
    let n = lik.n_assets();
    let mut greedy = SearchState::new(lik, (0..n).collect());
    greedy_agglomerate(&mut greedy);
    local_polish(&mut greedy);
    let greedy_labels = greedy.labels.clone();

    let mut candidates: Vec<(Vec<usize>, f64)> = (0..opts.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let start = if r % 2 == 0 {
                greedy_labels.clone()
            } else {
                let mut rng = stream(opts.seed, StreamRole::Annealing, 1_000_000 + r as u64);
                let k = (n as f64).sqrt().ceil() as usize;
                (0..n).map(|_| rng.random_range(0..k)).collect()
            };
            anneal(lik, start, opts, r)
        })
        .collect();
    candidates.push((greedy.labels, greedy.objective));
    // Deterministic choice: highest objective, ties to the earliest candidate.
    let mut best = 0;
    for k in 1..candidates.len() {
        if candidates[k].1 > candidates[best].1 + 1e-9 {
            best = k;
        }
    }
    candidates.swap_remove(best).0
}
