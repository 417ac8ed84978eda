//! Multilevel generative model.
//!
//! Per-asset noise (Gaussian or a standardized spin-market return), cluster
//! shocks under fission/fusion, and the conditional factor layer are
//! composed each period into
//!
//! ```text
//! r_i - Σ_p β_ip μ_p = α_i + Σ_p β_ip (r_p - μ_p) + σ (g_s η_s + sqrt(1 - g_s²) ε_i)
//! ```
//!
//! with `μ_p` the configured factor means and `σ` the noise scale.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::cluster::{fission_fusion_step, ClusterNoiseDraw, FissionFusionRates, Partition};
use crate::config::{NoiseSource, ScenarioConfig, Target};
use crate::error::{Error, Result};
use crate::factor::{ar1_next, ar1_stationary, conditional_alpha, conditional_beta, FactorDynamics, FactorModelSpec, InformationState};
use crate::rng::{stream, StreamRng, StreamRole};
use crate::spin::SpinMarketState;

/// Unanticipated returns with cluster noise.
///
/// `draws.eta` is indexed by cluster and `draws.eps` by asset; `draws.x` is
/// not used.
pub fn emergence_step(
    spec: &FactorModelSpec,
    info: &InformationState,
    expected_factor_returns: &[f64],
    partition: &Partition,
    draws: &ClusterNoiseDraw,
    noise_scale: f64,
) -> Result<Vec<f64>> {
    check_step_shapes(spec, info, expected_factor_returns, &draws.eps)?;
    if partition.n_assets() != spec.n_assets || draws.eta.len() != partition.n_clusters() {
        return Err(Error::Shape(format!(
            "partition of {} assets with {} clusters, {} cluster shocks, spec has N={}",
            partition.n_assets(),
            partition.n_clusters(),
            draws.eta.len(),
            spec.n_assets
        )));
    }
    (0..spec.n_assets)
        .map(|i| {
            let s = partition.label(i);
            let g = partition.couplings()[s];
            let noise = g * draws.eta[s] + (1.0 - g * g).sqrt() * draws.eps[i];
            Ok(systematic(spec, info, expected_factor_returns, i)? + noise_scale * noise)
        })
        .collect()
}

/// The same decomposition without cluster noise.
pub fn factor_residual_step(
    spec: &FactorModelSpec,
    info: &InformationState,
    expected_factor_returns: &[f64],
    eps: &[f64],
    noise_scale: f64,
) -> Result<Vec<f64>> {
    check_step_shapes(spec, info, expected_factor_returns, eps)?;
    (0..spec.n_assets)
        .map(|i| Ok(systematic(spec, info, expected_factor_returns, i)? + noise_scale * eps[i]))
        .collect()
}

fn check_step_shapes(spec: &FactorModelSpec, info: &InformationState, mu: &[f64], eps: &[f64]) -> Result<()> {
    if info.z.len() != spec.n_z
        || info.theta.len() != spec.n_assets * spec.n_theta
        || info.factor_returns.len() != spec.n_factors
        || mu.len() != spec.n_factors
        || eps.len() != spec.n_assets
    {
        return Err(Error::Shape(format!(
            "inputs do not match spec (N={}, P={}, K={}, M={})",
            spec.n_assets, spec.n_factors, spec.n_z, spec.n_theta
        )));
    }
    Ok(())
}

/// `α_i + Σ_p β_ip (r_p - μ_p)`.
fn systematic(spec: &FactorModelSpec, info: &InformationState, mu: &[f64], i: usize) -> Result<f64> {
    let theta = info.theta_row(i, spec.n_theta);
    let mut v = conditional_alpha(spec, i, &info.z)?;
    for p in 0..spec.n_factors {
        v += conditional_beta(spec, i, p, &info.z, theta)? * (info.factor_returns[p] - mu[p]);
    }
    Ok(v)
}

/// `Σ_p β_ip μ_p`, added back to obtain realized returns.
fn anticipated(spec: &FactorModelSpec, info: &InformationState, mu: &[f64], i: usize) -> Result<f64> {
    let theta = info.theta_row(i, spec.n_theta);
    let mut v = 0.0;
    for (p, m) in mu.iter().enumerate() {
        v += conditional_beta(spec, i, p, &info.z, theta)? * m;
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppliedEvent {
    pub t: usize,
    pub path: String,
    pub actor: Option<String>,
    pub before: f64,
    pub after: f64,
}

/// Partition in force from period `t` on.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSnapshot {
    pub t: usize,
    pub partition: Partition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub n_assets: usize,
    /// `T×N`.
    pub returns: Vec<Vec<f64>>,
    /// `(T+1)×N`, row 0 holds the initial prices.
    pub prices: Vec<Vec<f64>>,
    pub factors: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    /// Row `t` is `N×M`, row-major by asset.
    pub theta: Vec<Vec<f64>>,
    /// Snapshot at `t = 0` plus one per change.
    pub partitions: Vec<PartitionSnapshot>,
    /// `T×N` magnetization feeding each period's noise; empty for Gaussian noise.
    pub magnetization: Vec<Vec<f64>>,
    pub events: Vec<AppliedEvent>,
}

impl SimulationOutput {
    pub fn partition_at(&self, t: usize) -> Option<&Partition> {
        self.partitions.iter().rev().find(|s| s.t <= t).map(|s| &s.partition)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads for the lattices; 0 uses the rayon default.
    pub threads: usize,
}

/// Welford running mean and variance.
#[derive(Debug, Clone, Default)]
struct RunningMoments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningMoments {
    fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    fn sd(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).sqrt()
        }
    }
}

/// One asset's lattice plus the state needed to turn it into unit noise.
struct SpinFeed {
    lattice: SpinMarketState,
    rng: StreamRng,
    price_scale: f64,
    sweeps: usize,
    moments: RunningMoments,
    last_m: f64,
}

impl SpinFeed {
    fn new(cfg: &ScenarioConfig, asset: usize) -> Result<Self> {
        let params = cfg.spin.params();
        let mut rng = stream(cfg.seed, StreamRole::SpinLattice, asset as u64);
        let mut lattice = SpinMarketState::random(&params, &mut rng)?;
        let mut moments = RunningMoments::default();
        let mut last_m = lattice.magnetization();
        for _ in 0..cfg.spin.burn_in {
            moments.push(params.c * last_m);
            last_m = lattice.step(&mut rng);
        }
        Ok(Self { lattice, rng, price_scale: params.c, sweeps: cfg.spin.sweeps_per_step, moments, last_m })
    }

    /// Returns `(M(t-1), ε_t)` and advances the lattice.
    fn next(&mut self) -> (f64, f64) {
        let m = self.last_m;
        let x = self.price_scale * m;
        let sd = self.moments.sd();
        let eps = if sd > 0.0 { (x - self.moments.mean) / sd } else { 0.0 };
        self.moments.push(x);
        for _ in 0..self.sweeps {
            self.last_m = self.lattice.step(&mut self.rng);
        }
        (m, eps)
    }
}

struct Engine {
    spec: FactorModelSpec,
    dynamics: FactorDynamics,
    partition: Partition,
    rates: FissionFusionRates,
    cluster_enabled: bool,
    noise_scale: f64,
    theta_shift: Vec<f64>,
    feeds: Vec<SpinFeed>,
}

impl Engine {
    fn apply(&mut self, target: Target, value: f64) -> Result<f64> {
        let before;
        match target {
            Target::SpinAlpha(a) | Target::SpinBeta(a) | Target::SpinJ(a) => {
                fn slot(target: Target, l: &mut SpinMarketState) -> &mut f64 {
                    match target {
                        Target::SpinAlpha(_) => &mut l.global_coupling,
                        Target::SpinBeta(_) => &mut l.inverse_temperature,
                        _ => &mut l.nn_coupling,
                    }
                }
                if self.feeds.is_empty() {
                    // Gaussian noise: no lattice to change.
                    return Ok(f64::NAN);
                }
                let first = a.unwrap_or(0);
                before = *slot(target, &mut self.feeds[first].lattice);
                for (i, feed) in self.feeds.iter_mut().enumerate() {
                    if a.is_none_or(|a| a == i) {
                        *slot(target, &mut feed.lattice) = value;
                    }
                }
            }
            Target::ClusterG(None) => {
                before = self.partition.couplings().first().copied().unwrap_or(f64::NAN);
                self.partition.set_all_couplings(value)?;
            }
            Target::ClusterG(Some(s)) => {
                // Fission/fusion may have retired the label since validation.
                if s >= self.partition.n_clusters() {
                    return Ok(f64::NAN);
                }
                before = self.partition.couplings()[s];
                self.partition.set_coupling(s, value)?;
            }
            Target::SplitProb => {
                before = self.rates.split_prob;
                self.rates.split_prob = value;
                self.rates.validate()?;
            }
            Target::MergeProb => {
                before = self.rates.merge_prob;
                self.rates.merge_prob = value;
                self.rates.validate()?;
            }
            Target::Alpha0(i) => before = std::mem::replace(&mut self.spec.alpha0[i], value),
            Target::B0(i, p) => before = std::mem::replace(&mut self.spec.b0[i * self.spec.n_factors + p], value),
            Target::B1(m, p) => before = std::mem::replace(&mut self.spec.b1[m * self.spec.n_factors + p], value),
            Target::FactorMean(p) => before = std::mem::replace(&mut self.dynamics.factor_mean[p], value),
            Target::FactorVol(p) => before = std::mem::replace(&mut self.dynamics.factor_vol[p], value),
            Target::ThetaShift(i, m) => before = std::mem::replace(&mut self.theta_shift[i * self.spec.n_theta + m], value),
            Target::NoiseScale => before = std::mem::replace(&mut self.noise_scale, value),
        }
        Ok(before)
    }
}

/// Runs a validated scenario.
///
/// Each period: due interventions are applied and logged, `Z` and `θ` move
/// one AR(1) step, the partition takes one fission/fusion step, factor
/// returns are drawn, per-asset noise is produced, returns are composed and
/// prices compounded. Every random source has its own keyed stream, so the
/// output does not depend on `opts.threads`.
pub fn run_scenario(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<SimulationOutput> {
    cfg.validate()?;
    let mut targets = Vec::with_capacity(cfg.interventions.len());
    for iv in &cfg.interventions {
        targets.push(Target::parse(&iv.path, cfg).map_err(Error::Config)?);
    }
    let mut schedule: Vec<usize> = (0..cfg.interventions.len()).collect();
    schedule.sort_by_key(|&k| cfg.interventions[k].t);

    let n = cfg.n_assets;
    let spin_noise = cfg.noise_source == NoiseSource::SpinLattice;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let feeds = if spin_noise {
        pool.install(|| (0..n).into_par_iter().map(|i| SpinFeed::new(cfg, i)).collect::<Result<Vec<_>>>())?
    } else {
        Vec::new()
    };
    let mut engine = Engine {
        spec: cfg.factor_spec(),
        dynamics: cfg.dynamics(),
        partition: cfg.initial_partition()?,
        rates: cfg.rates(),
        cluster_enabled: cfg.cluster.enabled,
        noise_scale: cfg.noise_scale,
        theta_shift: vec![0.0; n * cfg.factor.n_theta],
        feeds,
    };
    engine.spec.validate()?;

    let seed = cfg.seed;
    let mut z_rng = stream(seed, StreamRole::TopDownInfo, 0);
    let mut theta_rng = stream(seed, StreamRole::BottomUpInfo, 0);
    let mut factor_rng = stream(seed, StreamRole::FactorReturns, 0);
    let mut ff_rng = stream(seed, StreamRole::FissionFusion, 0);
    let mut eta_rng = stream(seed, StreamRole::ClusterNoise, 0);
    let mut eps_rngs: Vec<StreamRng> = (0..n).map(|i| stream(seed, StreamRole::IdiosyncraticNoise, i as u64)).collect();

    let phi_z = engine.dynamics.z_persistence;
    let phi_theta = engine.dynamics.theta_persistence;
    let mut z: Vec<f64> = (0..cfg.factor.n_z).map(|_| ar1_stationary(phi_z, &mut z_rng)).collect();
    let mut theta_state: Vec<f64> = (0..n * cfg.factor.n_theta).map(|_| ar1_stationary(phi_theta, &mut theta_rng)).collect();

    let horizon = cfg.horizon;
    let mut out = SimulationOutput {
        n_assets: n,
        returns: Vec::with_capacity(horizon),
        prices: vec![vec![cfg.initial_price; n]],
        factors: Vec::with_capacity(horizon),
        z: Vec::with_capacity(horizon),
        theta: Vec::with_capacity(horizon),
        partitions: vec![PartitionSnapshot { t: 0, partition: engine.partition.clone() }],
        magnetization: Vec::new(),
        events: Vec::new(),
    };
    let mut log_prices = vec![cfg.initial_price.ln(); n];
    let mut next_event = 0;

    for t in 0..horizon {
        let partition_before = engine.partition.clone();
        while next_event < schedule.len() && cfg.interventions[schedule[next_event]].t == t {
            let k = schedule[next_event];
            let iv = &cfg.interventions[k];
            let before = engine.apply(targets[k], iv.value)?;
            out.events.push(AppliedEvent { t, path: iv.path.clone(), actor: iv.actor.clone(), before, after: iv.value });
            next_event += 1;
        }

        z.iter_mut().for_each(|v| *v = ar1_next(*v, phi_z, &mut z_rng));
        theta_state.iter_mut().for_each(|v| *v = ar1_next(*v, phi_theta, &mut theta_rng));
        let theta: Vec<f64> = theta_state.iter().zip(&engine.theta_shift).map(|(v, s)| v + s).collect();

        if engine.cluster_enabled {
            engine.partition = fission_fusion_step(&engine.partition, &mut ff_rng, engine.rates);
        }
        if engine.partition != partition_before {
            out.partitions.push(PartitionSnapshot { t, partition: engine.partition.clone() });
        }

        let factor_returns = engine.dynamics.draw_factors(&mut factor_rng);

        let eps: Vec<f64> = if spin_noise {
            let draws: Vec<(f64, f64)> = pool.install(|| engine.feeds.par_iter_mut().map(SpinFeed::next).collect());
            out.magnetization.push(draws.iter().map(|d| d.0).collect());
            draws.into_iter().map(|d| d.1).collect()
        } else {
            eps_rngs.iter_mut().map(|r| r.sample(StandardNormal)).collect()
        };

        let info = InformationState { z: z.clone(), theta, factor_returns };
        let mu = engine.dynamics.factor_mean.clone();
        let residual = if engine.cluster_enabled {
            let eta: Vec<f64> = (0..engine.partition.n_clusters()).map(|_| eta_rng.sample(StandardNormal)).collect();
            let draws = ClusterNoiseDraw { eta, eps, x: Vec::new() };
            emergence_step(&engine.spec, &info, &mu, &engine.partition, &draws, engine.noise_scale)?
        } else {
            factor_residual_step(&engine.spec, &info, &mu, &eps, engine.noise_scale)?
        };
        let mut returns = Vec::with_capacity(n);
        for (i, e) in residual.into_iter().enumerate() {
            returns.push(anticipated(&engine.spec, &info, &mu, i)? + e);
        }

        for (lp, r) in log_prices.iter_mut().zip(&returns) {
            *lp += r;
        }
        out.prices.push(log_prices.iter().map(|lp| lp.exp()).collect());
        out.returns.push(returns);
        out.factors.push(info.factor_returns);
        out.z.push(info.z);
        out.theta.push(info.theta);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(text: &str) -> ScenarioConfig {
        ScenarioConfig::from_toml(text).unwrap()
    }

    const BASE: &str = "schema_version = 1\nn_assets = 4\nhorizon = 200\nseed = 11\n";

    fn random_inputs(n: usize, p: usize, k: usize, m: usize, rng: &mut ChaCha8Rng) -> (FactorModelSpec, InformationState, Vec<f64>) {
        let mut spec = FactorModelSpec::zeros(n, p, k, m);
        for v in spec.alpha0.iter_mut().chain(&mut spec.alpha1).chain(&mut spec.b0).chain(&mut spec.b1).chain(&mut spec.b2) {
            *v = rng.random_range(-1.0..1.0);
        }
        let info = InformationState {
            z: (0..k).map(|_| rng.random_range(-1.0..1.0)).collect(),
            theta: (0..n * m).map(|_| rng.random_range(-1.0..1.0)).collect(),
            factor_returns: (0..p).map(|_| rng.random_range(-0.1..0.1)).collect(),
        };
        let mu = (0..p).map(|_| rng.random_range(-0.01..0.01)).collect();
        (spec, info, mu)
    }

    #[test]
    fn emergence_matches_brute_force_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (n, p, k, m) = (5, 2, 2, 2);
        let (spec, info, mu) = random_inputs(n, p, k, m, &mut rng);
        let partition = Partition::new(vec![0, 1, 0, 2, 1], vec![0.3, 0.9, 0.0]).unwrap();
        let draws = ClusterNoiseDraw::draw(&partition, &mut rng);
        let got = emergence_step(&spec, &info, &mu, &partition, &draws, 0.5).unwrap();
        for i in 0..n {
            let mut want = spec.alpha0[i];
            for kk in 0..k {
                want += spec.alpha1[i * k + kk] * info.z[kk];
            }
            for pp in 0..p {
                let mut beta = spec.b0[i * p + pp];
                for kk in 0..k {
                    beta += spec.b2[(i * k + kk) * p + pp] * info.z[kk];
                }
                for mm in 0..m {
                    beta += spec.b1[mm * p + pp] * info.theta[i * m + mm];
                }
                want += beta * (info.factor_returns[pp] - mu[pp]);
            }
            let s = partition.label(i);
            let g = partition.couplings()[s];
            want += 0.5 * (g * draws.eta[s] + (1.0 - g * g).sqrt() * draws.eps[i]);
            assert!((got[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn emergence_degenerate_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (mut spec, info, mu) = random_inputs(4, 1, 0, 0, &mut rng);
        spec.alpha0 = vec![0.0; 4];
        let zero_g = Partition::new(vec![0, 0, 1, 1], vec![0.0, 0.0]).unwrap();
        let draws = ClusterNoiseDraw::draw(&zero_g, &mut rng);
        assert_eq!(
            emergence_step(&spec, &info, &mu, &zero_g, &draws, 1.0).unwrap(),
            factor_residual_step(&spec, &info, &mu, &draws.eps, 1.0).unwrap()
        );

        let spec = FactorModelSpec::zeros(4, 1, 0, 0);
        let full = Partition::new(vec![0, 0, 1, 1], vec![1.0, 1.0]).unwrap();
        let draws = ClusterNoiseDraw::draw(&full, &mut rng);
        let r = emergence_step(&spec, &info, &mu, &full, &draws, 1.0).unwrap();
        assert_eq!(r[0], r[1]);
        assert_eq!(r[2], r[3]);
        assert_eq!(r[0], draws.eta[0]);
    }

    #[test]
    fn composed_noise_has_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = FactorModelSpec::zeros(3, 0, 0, 0);
        let info = InformationState { z: vec![], theta: vec![], factor_returns: vec![] };
        let p = Partition::new(vec![0, 0, 1], vec![0.6, 0.95]).unwrap();
        let mut sums = [0.0; 3];
        let reps = 100_000;
        for _ in 0..reps {
            let d = ClusterNoiseDraw::draw(&p, &mut rng);
            let r = emergence_step(&spec, &info, &[], &p, &d, 1.0).unwrap();
            for i in 0..3 {
                sums[i] += r[i] * r[i];
            }
        }
        for s in sums {
            assert!((s / reps as f64 - 1.0).abs() < 0.02);
        }
    }

    #[test]
    fn zero_horizon() {
        let out = run_scenario(&cfg("schema_version = 1\nn_assets = 3\nhorizon = 0\ninitial_price = 50.0\n"), &RunOptions::default()).unwrap();
        assert!(out.returns.is_empty());
        assert_eq!(out.prices, vec![vec![50.0; 3]]);
    }

    #[test]
    fn deterministic_across_threads() {
        let text = format!("{BASE}noise_source = \"spin_lattice\"\n[spin]\nside = 8\nburn_in = 50\n[cluster]\nsizes = [2, 2]\ng = [0.5]\nsplit_prob = 0.05\nmerge_prob = 0.05\n");
        let c = cfg(&text);
        let a = run_scenario(&c, &RunOptions { threads: 1 }).unwrap();
        let b = run_scenario(&c, &RunOptions { threads: 4 }).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.magnetization.len(), 200);
        assert!(a.partitions.len() > 1);
    }

    #[test]
    fn prices_compound_returns() {
        let out = run_scenario(&cfg(BASE), &RunOptions::default()).unwrap();
        for t in 0..200 {
            for i in 0..4 {
                let ratio = (out.prices[t + 1][i] / out.prices[t][i]).ln();
                assert!((ratio - out.returns[t][i]).abs() < 1e-9);
                assert!(out.prices[t + 1][i] > 0.0);
            }
        }
    }

    #[test]
    fn zero_coupling_equals_factor_only_path() {
        let with = cfg(&format!("{BASE}[cluster]\nsizes = [2, 2]\ng = [0.0]\n[factor]\nn_factors = 2\nn_z = 1\nn_theta = 1\nmean = [0.001, 0.002]\n"));
        let mut without = with.clone();
        without.cluster.enabled = false;
        let a = run_scenario(&with, &RunOptions::default()).unwrap();
        let b = run_scenario(&without, &RunOptions::default()).unwrap();
        assert_eq!(a.returns, b.returns);
        assert_eq!(a.prices, b.prices);
    }

    #[test]
    fn realized_returns_match_unified_equation() {
        let c = cfg(&format!("{BASE}[cluster]\nenabled = false\n[factor]\nn_factors = 2\nn_z = 1\nn_theta = 1\nmean = [0.001, 0.002]\nb1 = [[0.3, -0.2]]\nb2 = [[[0.1, 0.0]], [[0.0, 0.2]], [[0.1, 0.1]], [[0.0, 0.0]]]\n"));
        let out = run_scenario(&c, &RunOptions::default()).unwrap();
        let spec = c.factor_spec();
        let mut eps_rngs: Vec<StreamRng> = (0..4).map(|i| stream(11, StreamRole::IdiosyncraticNoise, i)).collect();
        for t in 0..200 {
            let eps: Vec<f64> = eps_rngs.iter_mut().map(|r| c.noise_scale * r.sample::<f64, _>(StandardNormal)).collect();
            let info = InformationState { z: out.z[t].clone(), theta: out.theta[t].clone(), factor_returns: out.factors[t].clone() };
            let want = crate::factor::unified_return(&spec, &info, &eps).unwrap();
            for i in 0..4 {
                assert!((out.returns[t][i] - want[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn interventions_are_local_and_logged() {
        let text = format!("{BASE}noise_source = \"spin_lattice\"\n[spin]\nside = 8\nburn_in = 50\n");
        let base = cfg(&text);
        let with = cfg(&format!("{text}[[interventions]]\nt = 120\npath = \"spin.alpha\"\nvalue = 8.0\nactor = \"regulator\"\n"));
        let a = run_scenario(&base, &RunOptions::default()).unwrap();
        let b = run_scenario(&with, &RunOptions::default()).unwrap();
        assert_eq!(a.returns[..=120], b.returns[..=120]);
        assert_ne!(a.returns[121..], b.returns[121..]);
        assert_eq!(b.events, vec![AppliedEvent { t: 120, path: "spin.alpha".into(), actor: Some("regulator".into()), before: 4.0, after: 8.0 }]);
    }

    #[test]
    fn coupling_reset_logged_and_recorded() {
        let text = format!("{BASE}[cluster]\nsizes = [2, 2]\ng = [0.9]\n[[interventions]]\nt = 100\npath = \"cluster.g\"\nvalue = 0.0\n");
        let out = run_scenario(&cfg(&text), &RunOptions::default()).unwrap();
        assert_eq!(out.partitions.len(), 2);
        assert_eq!(out.partitions[1].t, 100);
        assert_eq!(out.partition_at(150).unwrap().couplings(), &[0.0, 0.0]);
        assert_eq!(out.events[0].before, 0.9);
    }
}
