//! CSV persistence for simulation outputs, panels, partitions and estimates.
//!
//! Floats are written in the shortest scientific notation that parses back
//! to the same `f64`, so every matrix round-trips bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::cluster::Partition;
use crate::cluster_fit::ClusterFit;
use crate::diagnostics::StylizedFactsReport;
use crate::error::{Error, Result};
use crate::factor::{Calibration, ReturnPanel};
use crate::hierarchy::SimulationOutput;
use crate::spin::PriceSeries;

pub const SIMULATION_FILES: [&str; 7] =
    ["returns.csv", "prices.csv", "factors.csv", "info_z.csv", "info_theta.csv", "partition.csv", "events.csv"];

pub fn fmt_f64(x: f64) -> String {
    format!("{x:e}")
}

fn write_matrix(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut head = vec!["t".to_string()];
    head.extend_from_slice(header);
    w.write_record(&head)?;
    for (t, row) in rows.iter().enumerate() {
        let mut rec = vec![t.to_string()];
        rec.extend(row.iter().map(|&v| fmt_f64(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}_{i}")).collect()
}

/// Writes the CSV suite plus `config.toml` (and `magnetization.csv` for
/// spin-noise runs) into `dir`.
pub fn write_simulation(dir: &Path, out: &SimulationOutput, resolved_config: &str, n_z: usize, n_theta: usize) -> Result<()> {
    fs::create_dir_all(dir)?;
    let n = out.n_assets;
    write_matrix(&dir.join("returns.csv"), &names("asset", n), &out.returns)?;
    write_matrix(&dir.join("prices.csv"), &names("asset", n), &out.prices)?;
    let p = out.factors.first().map_or(0, Vec::len);
    write_matrix(&dir.join("factors.csv"), &names("factor", p), &out.factors)?;
    write_matrix(&dir.join("info_z.csv"), &names("z", n_z), &out.z)?;
    let theta_names: Vec<String> = (0..n).flat_map(|i| (0..n_theta).map(move |m| format!("theta_{i}_{m}"))).collect();
    write_matrix(&dir.join("info_theta.csv"), &theta_names, &out.theta)?;

    let mut w = csv::Writer::from_path(dir.join("partition.csv"))?;
    w.write_record(["t", "asset_id", "cluster_label", "g"])?;
    for snap in &out.partitions {
        for i in 0..n {
            let p = &snap.partition;
            w.write_record([snap.t.to_string(), i.to_string(), (p.label(i) + 1).to_string(), fmt_f64(p.coupling_of(i))])?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("events.csv"))?;
    w.write_record(["t", "path", "actor", "before", "after"])?;
    for e in &out.events {
        w.write_record([
            e.t.to_string(),
            e.path.clone(),
            e.actor.clone().unwrap_or_default(),
            fmt_f64(e.before),
            fmt_f64(e.after),
        ])?;
    }
    w.flush()?;

    if !out.magnetization.is_empty() {
        write_matrix(&dir.join("magnetization.csv"), &names("asset", n), &out.magnetization)?;
    }
    fs::write(dir.join("config.toml"), resolved_config)?;
    Ok(())
}

/// Numeric table with its header; the leading `t` column, if any, is dropped.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn read_table(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    parse_table(&text, &path.display().to_string())
}

fn parse_table(text: &str, source: &str) -> Result<Table> {
    if text.trim().is_empty() {
        return Err(Error::Data(format!("{source}: file is empty")));
    }
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let skip_t = header.first().is_some_and(|h| h == "t");
    let header: Vec<String> = header.into_iter().skip(usize::from(skip_t)).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Data(format!("{source}: {e}")))?;
        let line = rec.position().map_or(0, |p| p.line());
        let fields: Vec<&str> = rec.iter().skip(usize::from(skip_t)).collect();
        if fields.len() != header.len() {
            return Err(Error::Data(format!(
                "{source}: row at line {line} has {} values, header has {}",
                fields.len(),
                header.len()
            )));
        }
        let mut row = Vec::with_capacity(fields.len());
        for (c, f) in fields.iter().enumerate() {
            let v: f64 = f.parse().map_err(|_| {
                Error::Data(format!("{source}: line {line}, column {} (`{}`): `{f}` is not a number", c + 1 + usize::from(skip_t), header[c]))
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!("{source}: line {line}, column `{}`: non-finite value", header[c])));
            }
            row.push(v);
        }
        rows.push(row);
    }
    Ok(Table { header, rows })
}

/// Declared panel dimensions from a `# manifest key=value ...` line.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Manifest {
    pub n_assets: Option<usize>,
    pub n_factors: Option<usize>,
    pub n_z: Option<usize>,
    pub n_theta: Option<usize>,
}

fn parse_manifest(text: &str) -> Result<Manifest> {
    let mut m = Manifest::default();
    let Some(line) = text.lines().map(str::trim).find(|l| l.starts_with("# manifest")) else {
        return Ok(m);
    };
    for kv in line.trim_start_matches("# manifest").split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Data(format!("manifest entry `{kv}` is not key=value")))?;
        let v: usize = v.parse().map_err(|_| Error::Data(format!("manifest value `{v}` for `{k}` is not a count")))?;
        let slot = match k {
            "n_assets" => &mut m.n_assets,
            "n_factors" => &mut m.n_factors,
            "n_z" => &mut m.n_z,
            "n_theta" => &mut m.n_theta,
            _ => return Err(Error::Data(format!("unknown manifest key `{k}`"))),
        };
        *slot = Some(v);
    }
    Ok(m)
}

/// Loads a panel from a simulation output directory or a single CSV.
///
/// A single CSV uses role-prefixed headers: `r:<id>` for returns, `f:<id>`
/// for factors, `z:<id>` for top-down variables and `theta:<id>:<m>` for
/// asset attributes. A file without any prefixed header is read as returns
/// only. An optional `# manifest n_assets=.. n_factors=.. n_z=.. n_theta=..`
/// line declares the expected counts.
pub fn load_panel(path: &Path) -> Result<ReturnPanel> {
    if path.is_dir() {
        return load_panel_dir(path);
    }
    let text = fs::read_to_string(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    parse_panel(&text, &path.display().to_string())
}

pub fn parse_panel(text: &str, source: &str) -> Result<ReturnPanel> {
    let manifest = parse_manifest(text)?;
    let table = parse_table(text, source)?;
    let prefixed = table.header.iter().any(|h| h.contains(':'));
    let mut assets: Vec<(String, usize)> = Vec::new();
    let (mut factors, mut zs, mut thetas) = (Vec::new(), Vec::new(), Vec::new());
    for (c, h) in table.header.iter().enumerate() {
        if !prefixed {
            assets.push((h.clone(), c));
            continue;
        }
        match h.split(':').collect::<Vec<_>>().as_slice() {
            ["r", id] => assets.push((id.to_string(), c)),
            ["f", _] => factors.push(c),
            ["z", _] => zs.push(c),
            ["theta", id, m] => {
                let m: usize = m.parse().map_err(|_| Error::Data(format!("{source}: column `{h}` has a non-numeric attribute index")))?;
                thetas.push((id.to_string(), m, c));
            }
            _ => return Err(Error::Data(format!("{source}: column {} header `{h}` has no known role prefix", c + 1))),
        }
    }
    let n = assets.len();
    let n_theta = if n == 0 { 0 } else { thetas.len() / n };
    let check = |what: &str, declared: Option<usize>, found: usize| -> Result<()> {
        match declared {
            Some(d) if d != found => Err(Error::Data(format!("{source}: manifest declares {what}={d} but {found} found"))),
            _ => Ok(()),
        }
    };
    check("n_assets", manifest.n_assets, n)?;
    check("n_factors", manifest.n_factors, factors.len())?;
    check("n_z", manifest.n_z, zs.len())?;
    check("n_theta", manifest.n_theta, if n == 0 { thetas.len() } else { thetas.len() / n })?;
    if thetas.len() != n * n_theta {
        return Err(Error::Data(format!("{source}: {} theta columns do not split evenly over {n} assets", thetas.len())));
    }
    // theta columns in asset order, then attribute order
    let mut theta_cols = Vec::with_capacity(thetas.len());
    for (id, _) in &assets {
        for m in 0..n_theta {
            let col = thetas
                .iter()
                .find(|(tid, tm, _)| tid == id && *tm == m)
                .ok_or_else(|| Error::Data(format!("{source}: missing column `theta:{id}:{m}`")))?;
            theta_cols.push(col.2);
        }
    }
    let pick = |cols: &[usize]| -> Vec<Vec<f64>> { table.rows.iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect() };
    let asset_cols: Vec<usize> = assets.iter().map(|a| a.1).collect();
    let panel = ReturnPanel {
        n_assets: n,
        n_factors: factors.len(),
        n_z: zs.len(),
        n_theta,
        returns: pick(&asset_cols),
        factors: pick(&factors),
        z: pick(&zs),
        theta: pick(&theta_cols),
    };
    panel.validate()?;
    Ok(panel)
}

fn load_panel_dir(dir: &Path) -> Result<ReturnPanel> {
    let returns = read_table(&dir.join("returns.csv"))?;
    let optional = |name: &str| -> Result<Option<Table>> {
        let p = dir.join(name);
        if p.exists() {
            read_table(&p).map(Some)
        } else {
            Ok(None)
        }
    };
    let t = returns.rows.len();
    let n = returns.header.len();
    let or_empty = |tab: Option<Table>| tab.map_or_else(|| (0, vec![Vec::new(); t]), |tab| (tab.header.len(), tab.rows));
    let (p, factors) = or_empty(optional("factors.csv")?);
    let (k, z) = or_empty(optional("info_z.csv")?);
    let (w, theta) = or_empty(optional("info_theta.csv")?);
    if n > 0 && w % n != 0 {
        return Err(Error::Data(format!("info_theta.csv has {w} columns, not a multiple of {n} assets")));
    }
    let panel = ReturnPanel {
        n_assets: n,
        n_factors: p,
        n_z: k,
        n_theta: if n == 0 { 0 } else { w / n },
        returns: returns.rows,
        factors,
        z,
        theta,
    };
    panel.validate()?;
    Ok(panel)
}

/// Single-CSV form of a panel, with a manifest line.
pub fn panel_to_csv(panel: &ReturnPanel) -> String {
    let mut s = format!(
        "# manifest n_assets={} n_factors={} n_z={} n_theta={}\n",
        panel.n_assets, panel.n_factors, panel.n_z, panel.n_theta
    );
    let mut head = vec!["t".to_string()];
    head.extend((0..panel.n_assets).map(|i| format!("r:{i}")));
    head.extend((0..panel.n_factors).map(|p| format!("f:{p}")));
    head.extend((0..panel.n_z).map(|k| format!("z:{k}")));
    head.extend((0..panel.n_assets).flat_map(|i| (0..panel.n_theta).map(move |m| format!("theta:{i}:{m}"))));
    s.push_str(&head.join(","));
    s.push('\n');
    for t in 0..panel.len() {
        let mut row = vec![t.to_string()];
        for block in [&panel.returns[t], &panel.factors[t], &panel.z[t], &panel.theta[t]] {
            row.extend(block.iter().map(|&v| fmt_f64(v)));
        }
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// Single-lattice run as `t,M,logp,X`. Row `t` pairs `M(t)` with the
/// return it produces at `t + 1`; the last row has no such return and leaves
/// `X` empty, and row 0 carries the initial log price.
pub fn write_spin_series(path: &Path, mags: &[f64], series: &PriceSeries) -> Result<()> {
    if series.log_prices.len() != mags.len() + 1 {
        return Err(Error::Shape(format!("{} magnetizations but {} log prices", mags.len(), series.log_prices.len())));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "M", "logp", "X"])?;
    for (t, lp) in series.log_prices.iter().enumerate() {
        let m = mags.get(t).map_or_else(String::new, |&m| fmt_f64(m));
        let x = if t == 0 { String::new() } else { fmt_f64(series.returns[t - 1]) };
        w.write_record([t.to_string(), m, fmt_f64(*lp), x])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_partition(path: &Path, p: &Partition) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["asset_id", "cluster_label", "g"])?;
    for i in 0..p.n_assets() {
        w.write_record([i.to_string(), (p.label(i) + 1).to_string(), fmt_f64(p.coupling_of(i))])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a partition file. When a `t` column is present the latest snapshot
/// is returned.
pub fn read_partition(path: &Path) -> Result<Partition> {
    let text = fs::read_to_string(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let (Some(ca), Some(cl), Some(cg)) = (col("asset_id"), col("cluster_label"), col("g")) else {
        return Err(Error::Data(format!("{}: needs asset_id, cluster_label and g columns", path.display())));
    };
    let ct = col("t");
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |c: usize| -> Result<f64> {
            rec[c].parse().map_err(|_| Error::Data(format!("{}: line {line}, column `{}`: bad value `{}`", path.display(), header[c], &rec[c])))
        };
        let t = ct.map(&num).transpose()?.unwrap_or(0.0) as usize;
        rows.push((t, num(ca)? as usize, num(cl)? as usize, num(cg)?));
    }
    let last = rows.iter().map(|r| r.0).max().ok_or_else(|| Error::Data(format!("{}: no rows", path.display())))?;
    let mut snap: Vec<(usize, usize, f64)> = rows.into_iter().filter(|r| r.0 == last).map(|r| (r.1, r.2, r.3)).collect();
    snap.sort_by_key(|r| r.0);
    if snap.iter().enumerate().any(|(i, r)| r.0 != i || r.1 == 0) {
        return Err(Error::Data(format!("{}: asset ids must be 0..N and labels 1-based", path.display())));
    }
    let q = snap.iter().map(|r| r.1).max().unwrap_or(0);
    let mut g = vec![0.0; q];
    for r in &snap {
        g[r.1 - 1] = r.2;
    }
    Partition::new(snap.iter().map(|r| r.1 - 1).collect(), g)
}

pub fn fit_summary(fit: &ClusterFit) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "observations = {}", fit.observations);
    let _ = writeln!(s, "log_likelihood_gain = {}", fmt_f64(fit.log_likelihood_gain));
    let _ = writeln!(s, "objective = {}", fmt_f64(fit.objective));
    let _ = writeln!(s, "clusters = {}", fit.partition.n_clusters());
    let _ = writeln!(s, "search = {}", if fit.exhaustive { "exhaustive" } else { "heuristic" });
    for (k, (members, g)) in fit.partition.members().iter().zip(fit.partition.couplings()).enumerate() {
        let ids: Vec<String> = members.iter().map(usize::to_string).collect();
        let _ = writeln!(s, "cluster {} = {{{}}} g={}", k + 1, ids.join(","), fmt_f64(*g));
    }
    s
}

/// Writes `estimates.csv`, `spec.txt`, `summary.txt` and, for two-stage
/// runs, `period_payoffs.csv`.
pub fn write_calibration(dir: &Path, cal: &Calibration) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("estimates.csv"))?;
    w.write_record(["coefficient", "estimate", "std_error"])?;
    for (name, est, se) in cal.table() {
        w.write_record([name, fmt_f64(est), fmt_f64(se)])?;
    }
    w.flush()?;
    fs::write(dir.join("spec.txt"), cal.estimates.to_text())?;
    let mode = match cal.mode {
        crate::factor::CalibrationMode::Pooled => "pooled",
        crate::factor::CalibrationMode::TwoStage => "two-stage",
    };
    let mut s = format!("mode = {mode}\nobservations = {}\n", cal.observations);
    let _ = writeln!(s, "r_squared = {}", fmt_f64(cal.r_squared));
    let _ = writeln!(s, "residual_sd = {}", fmt_f64(cal.residual_sd));
    if !cal.ridge_periods.is_empty() {
        let _ = writeln!(s, "ridge_periods = {}", cal.ridge_periods.len());
    }
    fs::write(dir.join("summary.txt"), s)?;
    if !cal.period_delta.is_empty() {
        let m = cal.period_delta[0].len();
        let mut head = vec!["alpha".to_string()];
        head.extend(names("delta", m));
        let rows: Vec<Vec<f64>> = cal.period_alpha.iter().zip(&cal.period_delta).map(|(a, d)| std::iter::once(*a).chain(d.iter().copied()).collect()).collect();
        write_matrix(&dir.join("period_payoffs.csv"), &head, &rows)?;
    }
    Ok(())
}

/// Long-format report rows `(series, metric, value)`.
pub fn report_rows(series: &str, r: &StylizedFactsReport) -> Vec<(String, String, String)> {
    let mut rows = Vec::new();
    let mut push = |m: String, v: String| rows.push((series.to_string(), m, v));
    push("n".into(), r.n.to_string());
    push("noise_band".into(), fmt_f64(r.band));
    for (k, &lag) in r.lags.iter().enumerate() {
        push(format!("acf_lag_{lag}"), fmt_f64(r.acf_returns[k]));
        push(format!("acf_abs_lag_{lag}"), fmt_f64(r.acf_abs_returns[k]));
    }
    push("excess_kurtosis".into(), fmt_f64(r.excess_kurtosis));
    let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), fmt_f64);
    for (f, h) in &r.hill {
        push(format!("hill_k{f}"), opt(*h));
    }
    push("hill_upper".into(), opt(r.hill_upper));
    push("hill_lower".into(), opt(r.hill_lower));
    push("jump_threshold_sd".into(), fmt_f64(r.jump_threshold));
    push("jump_count".into(), r.jump_count.to_string());
    rows
}

/// Writes `diagnostics.csv` (long format) and `diagnostics.txt`.
pub fn write_diagnostics(dir: &Path, rows: &[(String, String, String)], text: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("diagnostics.csv"))?;
    w.write_record(["series", "metric", "value"])?;
    for r in rows {
        w.write_record([&r.0, &r.1, &r.2])?;
    }
    w.flush()?;
    fs::write(dir.join("diagnostics.txt"), text)?;
    Ok(())
}

pub fn report_text(series: &str, r: &StylizedFactsReport) -> String {
    let mut s = format!("[{series}] n={} band=±{:.4}\n", r.n, r.band);
    for (k, &lag) in r.lags.iter().enumerate() {
        let mark = if r.acf_abs_returns[k] > r.band { " *" } else { "" };
        let _ = writeln!(s, "  lag {lag:>3}: acf {:+.4}  acf|x| {:+.4}{mark}", r.acf_returns[k], r.acf_abs_returns[k]);
    }
    let _ = writeln!(s, "  excess kurtosis {:.4}", r.excess_kurtosis);
    for (f, h) in &r.hill {
        match h {
            Some(v) => {
                let _ = writeln!(s, "  hill (k={f}) {v:.4}");
            }
            None => {
                let _ = writeln!(s, "  hill (k={f}) n/a");
            }
        }
    }
    let _ = writeln!(s, "  jumps beyond {} sd: {}", r.jump_threshold, r.jump_count);
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioConfig;
    use crate::hierarchy::{run_scenario, RunOptions};

    #[test]
    fn spin_series_columns_line_up() {
        let mags = [0.5, -0.25, 0.0];
        let series = crate::spin::prices_from_magnetization(&mags, 1.0, 0.1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spin.csv");
        write_spin_series(&path, &mags, &series).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,M,logp,X");
        assert_eq!(lines[1], "0,5e-1,0e0,");
        assert_eq!(lines[2], format!("1,-2.5e-1,{},5e-2", fmt_f64(0.05)));
        assert_eq!(lines[4], format!("3,,{},0e0", fmt_f64(series.log_prices[3])));
        assert!(write_spin_series(&path, &mags[..2], &series).is_err());
    }

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 5e-324, f64::MAX, 0.0, -0.0, 123456.789] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
    }

    #[test]
    fn simulation_directory_round_trip() {
        let cfg = ScenarioConfig::from_toml(
            "schema_version = 1\nn_assets = 3\nhorizon = 40\nseed = 5\n[factor]\nn_factors = 2\nn_z = 1\nn_theta = 2\n",
        )
        .unwrap();
        let out = run_scenario(&cfg, &RunOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_simulation(dir.path(), &out, "", 1, 2).unwrap();
        let panel = load_panel(dir.path()).unwrap();
        assert_eq!(panel.returns, out.returns);
        assert_eq!(panel.factors, out.factors);
        assert_eq!(panel.z, out.z);
        assert_eq!(panel.theta, out.theta);
        assert_eq!(panel.n_theta, 2);
        let prices = read_table(&dir.path().join("prices.csv")).unwrap();
        assert_eq!(prices.rows, out.prices);
        assert_eq!(read_partition(&dir.path().join("partition.csv")).unwrap(), out.partitions[0].partition);
    }

    #[test]
    fn single_csv_round_trip() {
        let panel = ReturnPanel {
            n_assets: 2,
            n_factors: 1,
            n_z: 1,
            n_theta: 1,
            returns: vec![vec![0.1, -0.2], vec![0.3, 1.0 / 7.0]],
            factors: vec![vec![0.01], vec![0.02]],
            z: vec![vec![1.0], vec![2.0]],
            theta: vec![vec![0.5, 0.6], vec![0.7, 0.8]],
        };
        assert_eq!(parse_panel(&panel_to_csv(&panel), "mem").unwrap(), panel);
    }

    #[test]
    fn manifest_mismatch_and_bad_cells() {
        let text = "# manifest n_assets=2 n_factors=1 n_z=0 n_theta=1\nt,r:0,r:1,f:0\n0,1,2,3\n";
        let err = parse_panel(text, "p.csv").unwrap_err().to_string();
        assert!(err.contains("n_theta"), "{err}");
        let err = parse_panel("t,r:0,r:1\n0,1,x\n", "p.csv").unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("r:1"), "{err}");
        assert!(parse_panel("", "p.csv").is_err());
    }

    #[test]
    fn unprefixed_columns_are_returns() {
        let p = parse_panel("a,b,c\n1,2,3\n4,5,6\n", "p.csv").unwrap();
        assert_eq!(p.n_assets, 3);
        assert_eq!(p.returns[1], vec![4.0, 5.0, 6.0]);
    }
}
