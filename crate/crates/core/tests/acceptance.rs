//! Acceptance suite. One line per criterion; exits non-zero if any fails.
//!
//! `cargo test -p hiermarket --test acceptance -- 3 5` runs a subset.

use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Pareto, StandardNormal, StudentT};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use hiermarket::cluster::{adjusted_rand_index, generate_cluster_returns, Partition};
use hiermarket::cluster_fit::{fit_clusters_ml, for_each_partition, FitOptions, Penalty, SearchStrategy};
use hiermarket::config::ScenarioConfig;
use hiermarket::diagnostics::{acf, excess_kurtosis, hill_tail_index, noise_band, DEFAULT_HILL_FRACTION};
use hiermarket::factor::{calibrate_unified, simulate_unified_panel, FactorDynamics, FactorModelSpec};
use hiermarket::hierarchy::{run_scenario, RunOptions, SimulationOutput};
use hiermarket::io::write_simulation;
use hiermarket::rng::{stream, StreamRole};
use hiermarket::spin::{prices_from_magnetization, SpinMarketState, SpinParams};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

struct Criterion {
    id: usize,
    name: &'static str,
    budget: Duration,
    run: fn() -> Verdict,
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria = [
        Criterion { id: 1, name: "spin market stylized facts", budget: secs(5 * 60), run: spin_stylized_facts },
        Criterion { id: 2, name: "ising phase sanity", budget: secs(30), run: ising_phases },
        Criterion { id: 3, name: "cluster noise correlation structure", budget: secs(10), run: cluster_correlation_structure },
        Criterion { id: 4, name: "ml clustering matches exhaustive oracle", budget: secs(60), run: clustering_oracle },
        Criterion { id: 5, name: "planted partition recovery", budget: secs(60), run: planted_recovery },
        Criterion { id: 6, name: "unified calibration coverage", budget: secs(5 * 60), run: calibration_coverage },
        Criterion { id: 7, name: "emergence reduces to factor model", budget: secs(5), run: emergence_identity },
        Criterion { id: 8, name: "thread-count determinism", budget: secs(10), run: thread_determinism },
        Criterion { id: 9, name: "intervention locality", budget: secs(60), run: intervention_locality },
        Criterion { id: 10, name: "diagnostics oracles", budget: secs(10), run: diagnostics_oracles },
    ];
    let mut failed = 0;
    for c in criteria.iter().filter(|c| wanted.is_empty() || wanted.contains(&c.id)) {
        let start = Instant::now();
        let v = (c.run)();
        let elapsed = start.elapsed();
        let in_budget = elapsed <= c.budget;
        let pass = v.pass && in_budget;
        if !pass {
            failed += 1;
        }
        let over = if in_budget { String::new() } else { format!(" over budget {:?}", c.budget) };
        println!(
            "criterion {:>2} {} {}: {} [{:.1}s{over}]",
            c.id,
            if pass { "PASS" } else { "FAIL" },
            c.name,
            v.detail,
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("acceptance: {failed} criterion(s) failed");
        std::process::exit(1);
    }
    println!("acceptance: all selected criteria passed");
}

fn spin_stylized_facts() -> Verdict {
    let params = SpinParams::default();
    let band = noise_band(50_000);
    let mut passing = 0;
    let mut lines = Vec::new();
    for seed in 1..=5u64 {
        let start = Instant::now();
        let mut rng = stream(seed, StreamRole::SpinLattice, 0);
        let mut state = SpinMarketState::random(&params, &mut rng).expect("default parameters are valid");
        let mags = state.run(50_000, &mut rng);
        let x = prices_from_magnetization(&mags, 1.0, params.c).expect("finite magnetization").returns;
        let kurt = excess_kurtosis(&x).unwrap_or(f64::NAN);
        let raw = acf(&x, 10).expect("long series")[10];
        let abs: Vec<f64> = x.iter().map(|v| v.abs()).collect();
        let vol = acf(&abs, 10).expect("long series")[10];
        let fast = start.elapsed() < secs(60);
        let ok = kurt > 1.0 && vol > band && raw.abs() < band && fast;
        passing += usize::from(ok);
        lines.push(format!("seed {seed}: kurt {kurt:.2} acf|X|10 {vol:.3} acfX10 {raw:.3}"));
    }
    verdict(passing >= 4, format!("{passing}/5 seeds (band {band:.4}); {}", lines.join("; ")))
}

fn ising_phases() -> Verdict {
    let sweeps = 20_000;
    let burn = 2_000;
    let run = |beta: f64, seed: u64| {
        let params = SpinParams { alpha: 0.0, beta, ..SpinParams::default() };
        let mut rng = stream(seed, StreamRole::SpinLattice, 0);
        let mut state = SpinMarketState::random(&params, &mut rng).unwrap();
        state.run(burn, &mut rng);
        state.run(sweeps, &mut rng)
    };
    let cold = run(0.6, 21);
    let mean_abs = cold.iter().map(|m| m.abs()).sum::<f64>() / cold.len() as f64;

    // Batch means absorb the autocorrelation of the chain.
    let hot = run(0.1, 22);
    let batches = 50;
    let width = hot.len() / batches;
    let means: Vec<f64> = hot.chunks_exact(width).map(|c| c.iter().sum::<f64>() / width as f64).collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    let se = (var / batches as f64).sqrt();
    verdict(
        mean_abs > 0.5 && grand.abs() <= 3.0 * se,
        format!("beta 0.6 <|M|> {mean_abs:.3}; beta 0.1 <M> {grand:.2e} (3 SE {:.2e})", 3.0 * se),
    )
}

fn column(panel: &[Vec<f64>], j: usize) -> Vec<f64> {
    panel.iter().map(|r| r[j]).collect()
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

fn cluster_correlation_structure() -> Verdict {
    let partition = Partition::from_sizes(&[5, 5], &[0.8, 0.8]).unwrap();
    let mut rng = stream(3, StreamRole::ClusterNoise, 0);
    let panel = generate_cluster_returns(&partition, 100_000, &mut rng).unwrap();
    let cols: Vec<Vec<f64>> = (0..10).map(|j| column(&panel, j)).collect();
    let (mut worst_within, mut worst_cross) = (0.0f64, 0.0f64);
    for i in 0..10 {
        for j in i + 1..10 {
            let r = pearson(&cols[i], &cols[j]);
            if partition.label(i) == partition.label(j) {
                worst_within = worst_within.max((r - 0.64).abs());
            } else {
                worst_cross = worst_cross.max(r.abs());
            }
        }
    }
    verdict(
        worst_within <= 0.02 && worst_cross <= 0.02,
        format!("max |within - 0.64| {worst_within:.4}, max |cross| {worst_cross:.4}"),
    )
}

/// Gaussian log-likelihood gain of one exchangeable cluster against
/// independence, maximized numerically over the common correlation.
fn oracle_cluster_gain(corr: &DMatrix<f64>, t: usize) -> f64 {
    let n = corr.nrows();
    let gain = |rho: f64| {
        let sigma = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { rho });
        let chol = sigma.cholesky().expect("positive definite for rho < 1");
        let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let trace = (chol.inverse() * corr).trace();
        -0.5 * t as f64 * (log_det + trace - n as f64)
    };
    let hi = 1.0 - 1e-9;
    let grid: usize = 400;
    let mut best = 0usize;
    let mut best_val = gain(0.0);
    for k in 1..=grid {
        let v = gain(hi * k as f64 / grid as f64);
        if v > best_val {
            best_val = v;
            best = k;
        }
    }
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi * best.saturating_sub(1) as f64 / grid as f64;
    let mut b = hi * (best + 1).min(grid) as f64 / grid as f64;
    for _ in 0..100 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if gain(c) > gain(d) {
            b = d;
        } else {
            a = c;
        }
    }
    best_val.max(gain(0.5 * (a + b)))
}

fn sample_correlation(panel: &[Vec<f64>]) -> DMatrix<f64> {
    let n = panel[0].len();
    let cols: Vec<Vec<f64>> = (0..n).map(|j| column(panel, j)).collect();
    DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { pearson(&cols[i], &cols[j]) })
}

fn clustering_oracle() -> Verdict {
    let n = 7;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut agree = 0;
    let mut heuristic_agree = 0;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let q = rng.random_range(1..=4);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..q)).collect();
        let mut relabel = Vec::new();
        let labels: Vec<usize> = labels
            .iter()
            .map(|&l| relabel.iter().position(|&x| x == l).unwrap_or_else(|| {
                relabel.push(l);
                relabel.len() - 1
            }))
            .collect();
        let g: Vec<f64> = (0..relabel.len()).map(|_| rng.random_range(0.0..0.9)).collect();
        let planted = Partition::new(labels, g).unwrap();
        let t = 300;
        let panel = generate_cluster_returns(&planted, t, &mut rng).unwrap();

        let corr = sample_correlation(&panel);
        let penalty = 0.5 * (t as f64).ln();
        let mut subset_score = vec![0.0; 1 << n];
        for (mask, score) in subset_score.iter_mut().enumerate().skip(1) {
            let members: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
            if members.len() > 1 {
                let sub = DMatrix::from_fn(members.len(), members.len(), |a, b| corr[(members[a], members[b])]);
                *score = oracle_cluster_gain(&sub, t) - penalty * (members.len() - 1) as f64;
            }
        }
        let mut count = 0;
        let mut best = (f64::NEG_INFINITY, Vec::new());
        for_each_partition(n, |labels| {
            count += 1;
            let mut masks = [0usize; 7];
            for (i, &l) in labels.iter().enumerate() {
                masks[l] |= 1 << i;
            }
            let total: f64 = masks.iter().map(|&m| subset_score[m]).sum();
            if total > best.0 {
                best = (total, labels.to_vec());
            }
        });
        assert_eq!(count, 877);

        let opts = FitOptions { penalty: Penalty::Bic, ..FitOptions::default() };
        let fit = fit_clusters_ml(&panel, &opts).unwrap();
        let tol = 1e-6 * (1.0 + best.0.abs());
        let gap = (fit.objective - best.0).abs();
        worst = worst.max(gap);
        let same = adjusted_rand_index(fit.partition.labels(), &best.1).unwrap() > 1.0 - 1e-12;
        agree += usize::from(gap <= tol && same);

        let heuristic = fit_clusters_ml(&panel, &FitOptions { strategy: SearchStrategy::Heuristic, ..opts }).unwrap();
        heuristic_agree += usize::from((heuristic.objective - best.0).abs() <= tol);
    }
    verdict(
        agree == 20,
        format!("{agree}/20 optimal (heuristic search {heuristic_agree}/20), max objective gap {worst:.2e}"),
    )
}

fn planted_recovery() -> Verdict {
    let planted = Partition::from_sizes(&[10, 10, 10], &[0.8; 3]).unwrap();
    let mut good = 0;
    let mut lines = Vec::new();
    for seed in 0..10u64 {
        let mut rng = stream(seed, StreamRole::ClusterNoise, 5);
        let panel = generate_cluster_returns(&planted, 2000, &mut rng).unwrap();
        let fit = fit_clusters_ml(&panel, &FitOptions { seed, ..FitOptions::default() }).unwrap();
        let ari = adjusted_rand_index(fit.partition.labels(), planted.labels()).unwrap();
        let g_err = fit
            .partition
            .members()
            .iter()
            .zip(fit.partition.couplings())
            .filter(|(m, _)| m.len() > 1)
            .map(|(_, g)| (g - 0.8).abs())
            .fold(0.0f64, f64::max);
        good += usize::from(ari >= 0.95 && g_err <= 0.05);
        lines.push(format!("{ari:.2}/{g_err:.3}"));
    }
    verdict(good >= 9, format!("{good}/10 runs; ARI/max|g-0.8| {}", lines.join(" ")))
}

fn calibration_coverage() -> Verdict {
    let (n, p, k, m) = (50, 2, 2, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut spec = FactorModelSpec::zeros(n, p, k, m);
    spec.alpha0.iter_mut().for_each(|v| *v = rng.random_range(-0.005..0.005));
    spec.alpha1.iter_mut().for_each(|v| *v = rng.random_range(-0.002..0.002));
    spec.b0.iter_mut().for_each(|v| *v = rng.random_range(0.5..1.5));
    spec.b1.iter_mut().for_each(|v| *v = rng.random_range(-0.3..0.3));
    spec.b2.iter_mut().for_each(|v| *v = rng.random_range(-0.2..0.2));
    let dynamics = FactorDynamics {
        factor_mean: vec![0.005, 0.003],
        factor_vol: vec![0.04, 0.03],
        z_persistence: 0.9,
        theta_persistence: 0.8,
    };
    let truth = spec.named_coefficients();
    let reps = 200;
    let mut covered = vec![0usize; truth.len()];
    for rep in 0..reps {
        let panel = simulate_unified_panel(&spec, &dynamics, 2000, 0.01, 1000 + rep).unwrap();
        let cal = calibrate_unified(&panel).unwrap();
        let est = cal.estimates.named_coefficients();
        let se = cal.std_errors.named_coefficients();
        for (j, ((_, beta), ((_, b), (_, s)))) in truth.iter().zip(est.iter().zip(&se)).enumerate() {
            covered[j] += usize::from((b - beta).abs() <= 3.0 * s);
        }
    }
    let (worst_j, &worst) = covered.iter().enumerate().min_by_key(|(_, c)| **c).unwrap();
    let mean = covered.iter().sum::<usize>() as f64 / (covered.len() * reps as usize) as f64;
    verdict(
        worst as f64 >= 0.95 * reps as f64,
        format!(
            "{} coefficients, worst coverage {worst}/{reps} ({}), mean {:.4}",
            truth.len(),
            truth[worst_j].0,
            mean
        ),
    )
}

fn scenario(text: &str) -> ScenarioConfig {
    ScenarioConfig::from_toml(text).expect("acceptance scenario parses")
}

const FACTOR_BLOCK: &str = "[factor]\nn_factors = 2\nn_z = 1\nn_theta = 2\nmean = [0.0005, 0.0002]\nvol = [0.01, 0.008]\nb1 = [[0.2, -0.1], [0.05, 0.1]]\n";

fn emergence_identity() -> Verdict {
    let mut failures = Vec::new();
    for source in ["gaussian", "spin_lattice"] {
        let text = format!(
            "schema_version = 1\nn_assets = 6\nhorizon = 400\nseed = 7\nnoise_source = \"{source}\"\n[spin]\nside = 8\nburn_in = 100\n[cluster]\nsizes = [3, 2, 1]\ng = [0.0]\nsplit_prob = 0.1\nmerge_prob = 0.1\n{FACTOR_BLOCK}"
        );
        let with = scenario(&text);
        let mut without = with.clone();
        without.cluster.enabled = false;
        let a = run_scenario(&with, &RunOptions::default()).unwrap();
        let b = run_scenario(&without, &RunOptions::default()).unwrap();
        let bits = |o: &SimulationOutput| -> Vec<u64> { o.returns.iter().chain(&o.prices).flatten().map(|v| v.to_bits()).collect() };
        if bits(&a) != bits(&b) {
            failures.push(source);
        }
    }
    verdict(failures.is_empty(), if failures.is_empty() { "returns and prices bit-identical for gaussian and spin noise".to_string() } else { format!("differs for {failures:?}") })
}

fn directory_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn thread_determinism() -> Verdict {
    let text = format!(
        "schema_version = 1\nn_assets = 8\nhorizon = 1500\nseed = 8\nnoise_source = \"spin_lattice\"\n[spin]\nside = 16\nburn_in = 200\n[cluster]\nsizes = [3, 3, 2]\ng = [0.6, 0.3, 0.0]\nsplit_prob = 0.02\nmerge_prob = 0.02\n{FACTOR_BLOCK}[[interventions]]\nt = 700\npath = \"cluster.g.1\"\nvalue = 0.9\nactor = \"trader\"\n"
    );
    let cfg = scenario(&text);
    let resolved = cfg.resolved().to_toml().unwrap();
    let root = tempfile::tempdir().unwrap();
    let mut listings = Vec::new();
    for (run, threads) in [1, 8, 1, 8].into_iter().enumerate() {
        let out = run_scenario(&cfg, &RunOptions { threads }).unwrap();
        let dir = root.path().join(format!("run{run}"));
        write_simulation(&dir, &out, &resolved, cfg.factor.n_z, cfg.factor.n_theta).unwrap();
        listings.push(directory_bytes(&dir));
    }
    let identical = listings.windows(2).all(|w| w[0] == w[1]);
    let bytes: usize = listings[0].iter().map(|(_, b)| b.len()).sum();
    verdict(identical, format!("{} files, {bytes} bytes, runs at 1/8/1/8 threads identical: {identical}", listings[0].len()))
}

/// Two-sided p-value of the variance-ratio F test.
fn variance_ratio_p(a: &[f64], b: &[f64]) -> (f64, f64) {
    let var = |x: &[f64]| {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
    };
    let f = var(a) / var(b);
    let dist = FisherSnedecor::new((a.len() - 1) as f64, (b.len() - 1) as f64).unwrap();
    let tail = dist.cdf(f).min(dist.sf(f));
    (f, (2.0 * tail).min(1.0))
}

fn intervention_locality() -> Verdict {
    let base = "schema_version = 1\nn_assets = 1\nhorizon = 2500\nseed = 9\nnoise_source = \"spin_lattice\"\n";
    let control = scenario(base);
    let treated = scenario(&format!("{base}[[interventions]]\nt = 500\npath = \"spin.alpha\"\nvalue = 8.0\nactor = \"regulator\"\n"));
    let a = run_scenario(&control, &RunOptions::default()).unwrap();
    let b = run_scenario(&treated, &RunOptions::default()).unwrap();
    let bits = |rows: &[Vec<f64>]| -> Vec<u64> { rows.iter().flatten().map(|v| v.to_bits()).collect() };
    let before = bits(&a.returns[..500]) == bits(&b.returns[..500])
        && bits(&a.magnetization[..500]) == bits(&b.magnetization[..500])
        && bits(&a.prices[..=500]) == bits(&b.prices[..=500]);
    let after = |o: &SimulationOutput| -> Vec<f64> { o.magnetization[501..].iter().map(|r| r[0]).collect() };
    let (f, p) = variance_ratio_p(&after(&a), &after(&b));
    verdict(before && p < 0.01, format!("identical before t=500: {before}; post-intervention variance ratio {f:.3}, p = {p:.2e}"))
}

fn diagnostics_oracles() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut x = vec![0.0; 50_000];
    x[0] = rng.sample::<f64, _>(StandardNormal) / 0.75f64.sqrt();
    for t in 1..x.len() {
        x[t] = 0.5 * x[t - 1] + rng.sample::<f64, _>(StandardNormal);
    }
    let rho = acf(&x, 5).unwrap();
    let acf_err = (1..=5).map(|l| (rho[l] - 0.5f64.powi(l as i32)).abs()).fold(0.0f64, f64::max);

    let pareto = Pareto::new(1.0, 3.0).unwrap();
    let tail: Vec<f64> = (0..100_000).map(|_| pareto.sample(&mut rng)).collect();
    let hill = hill_tail_index(&tail, DEFAULT_HILL_FRACTION).unwrap();

    let student = StudentT::new(5.0).unwrap();
    let heavy: Vec<f64> = (0..100_000).map(|_| student.sample(&mut rng)).collect();
    let kurt = excess_kurtosis(&heavy).unwrap();

    verdict(
        acf_err <= 0.02 && (hill - 3.0).abs() <= 0.3 && (kurt - 6.0).abs() <= 1.0,
        format!("AR(1) max acf error {acf_err:.4}; Pareto(3) Hill {hill:.3}; t(5) excess kurtosis {kurt:.3}"),
    )
}
