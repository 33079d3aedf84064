//! The experiments behind the CLI.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hat_core::cluster::algorithm1;
use hat_core::harmonic::{harmonic_measure, spiral_limit_rate, spiral_point};
use hat_core::hat::{loglog_slope, renewal_analysis, run, RenewalReport, Stepper};
use hat_core::lattice::{make_line, make_pair};
use hat_core::potential::{build_table, default_table};
use hat_core::{Config, PotentialTable, Site};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::audits::{all_audits, AuditItem};
use crate::config::{Experiment, ExperimentConfig};
use crate::plot::{emit_plot, Axes, PlotSpec};
use crate::table::{with_suffix, Table, Value};
use crate::LabError;

/// A named pass/fail outcome reported by an experiment.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Outcome {
    pub experiment: Experiment,
    pub files: Vec<PathBuf>,
    pub checks: Vec<Check>,
    pub summary: serde_json::Value,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Seed for replica `index`: the first word of stream `index` of a generator keyed by `seed`.
pub fn replica_seed(seed: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng.next_u64()
}

/// `n` sites evenly spread along the x axis over length d.
pub fn spread_config(n: usize, d: i64) -> Result<Config, LabError> {
    if n < 2 || d < (n - 1) as i64 {
        return Err(LabError::Schema(format!("cannot spread {n} sites over length {d}")));
    }
    let sites = (0..n)
        .map(|i| Site::new((i as i64 * d + (n as i64 - 1) / 2) / (n as i64 - 1), 0))
        .collect();
    Ok(Config::new(sites)?)
}

/// `line`, `pair:D`, `spread:D`, or a path to a text / JSON site list.
pub fn parse_init(spec: &str, n: usize) -> Result<Config, LabError> {
    if spec == "line" {
        return Ok(make_line(n)?);
    }
    let num = |s: &str| {
        s.parse::<i64>()
            .map_err(|_| LabError::Schema(format!("bad distance in '{spec}'")))
    };
    if let Some(d) = spec.strip_prefix("pair:") {
        return Ok(make_pair(num(d)?)?);
    }
    if let Some(d) = spec.strip_prefix("spread:") {
        return spread_config(n, num(d)?);
    }
    let text = std::fs::read_to_string(spec)?;
    Ok(if spec.ends_with(".json") {
        Config::from_json(&text)?
    } else {
        Config::from_text(&text)?
    })
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// First time the diameter is at most `r_stop`, or None within `max_steps`.
pub fn collapse_time(
    table: &PotentialTable,
    init: &Config,
    r_stop: f64,
    max_steps: u64,
    seed: u64,
) -> Result<Option<u64>, LabError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stepper = Stepper::new(table);
    let mut cur = init.clone();
    for t in 0..=max_steps {
        if cur.diameter() <= r_stop {
            return Ok(Some(t));
        }
        if t == max_steps {
            break;
        }
        let (x, y) = stepper.sample(&cur, &mut rng)?;
        cur = cur.moved(x, y)?;
    }
    Ok(None)
}

#[derive(Clone, Debug, Serialize)]
pub struct CollapseRow {
    pub n: usize,
    pub d: i64,
    pub replica: usize,
    pub seed: u64,
    pub t_collapse: Option<u64>,
    pub alg_flag: bool,
    pub alg_total: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CollapseSummary {
    pub rows: Vec<CollapseRow>,
    /// (d, median T, replicas that did not collapse)
    pub medians: Vec<(i64, f64, usize)>,
    /// Slope of log(median T) against log(log d).
    pub exponent: f64,
    pub nondecreasing: bool,
}

pub struct CollapseParams {
    pub n: usize,
    pub d_list: Vec<i64>,
    pub replicas: usize,
    pub r_stop: f64,
    pub max_steps: u64,
    pub threshold: f64,
    pub delta: f64,
}

impl CollapseParams {
    pub fn defaults(n: usize) -> Self {
        CollapseParams {
            n,
            d_list: (5..=10).map(|k| 1i64 << k).collect(),
            replicas: 64,
            r_stop: (2 * n).max(5) as f64,
            max_steps: 1_000_000,
            threshold: 4.0 * n as f64,
            delta: 1.0 / (3.0 * n as f64).powi(2),
        }
    }
}

/// Collapse times of evenly spread n-site configurations across diameters and replicas.
pub fn collapse_scaling(table: &PotentialTable, p: &CollapseParams, seed: u64) -> Result<CollapseSummary, LabError> {
    let jobs: Vec<(usize, i64, usize)> = p
        .d_list
        .iter()
        .enumerate()
        .flat_map(|(di, &d)| (0..p.replicas).map(move |r| (di, d, r)))
        .collect();
    let rows: Vec<CollapseRow> = jobs
        .par_iter()
        .map(|&(di, d, r)| {
            let s = replica_seed(seed, (di * p.replicas + r) as u64);
            let init = spread_config(p.n, d)?;
            let t = collapse_time(table, &init, p.r_stop, p.max_steps, s)?;
            let alg = algorithm1(table, &init, p.threshold, p.delta, s ^ 0x5eed)?;
            Ok(CollapseRow {
                n: p.n,
                d,
                replica: r,
                seed: s,
                t_collapse: t,
                alg_flag: alg.flag,
                alg_total: alg.total,
            })
        })
        .collect::<Result<Vec<_>, LabError>>()?;
    let mut medians = Vec::new();
    for &d in &p.d_list {
        let mut ts: Vec<f64> = rows
            .iter()
            .filter(|r| r.d == d)
            .map(|r| r.t_collapse.map_or(f64::INFINITY, |t| t as f64))
            .collect();
        let missing = ts.iter().filter(|t| t.is_infinite()).count();
        medians.push((d, median(&mut ts), missing));
    }
    let pts: Vec<(f64, f64)> = medians.iter().map(|&(d, m, _)| ((d as f64).ln(), m)).collect();
    let exponent = loglog_slope(&pts);
    let nondecreasing = medians.windows(2).all(|w| w[1].1 >= w[0].1);
    Ok(CollapseSummary {
        rows,
        medians,
        exponent,
        nondecreasing,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DiffusivitySummary {
    pub reports: Vec<RenewalReport>,
    pub seeds: Vec<u64>,
    pub chi2: f64,
    pub chi2_ci: (f64, f64),
    pub z_mean: (f64, f64),
    pub z_offdiag: f64,
    pub z_diag: f64,
    pub kac: f64,
    pub msd_exponent: f64,
}

/// Renewal analysis over independent replicas started from the line.
pub fn diffusivity(
    table: &PotentialTable,
    n: usize,
    steps: u64,
    replicas: usize,
    thin: u64,
    bootstrap: usize,
    seed: u64,
) -> Result<DiffusivitySummary, LabError> {
    let init = make_line(n)?;
    let seeds: Vec<u64> = (0..replicas as u64).map(|r| replica_seed(seed, r)).collect();
    let reports = seeds
        .par_iter()
        .map(|&s| {
            let traj = run(table, &init, steps, s, thin)?;
            Ok(renewal_analysis(table, &traj)?)
        })
        .collect::<Result<Vec<_>, LabError>>()?;
    let k = reports.len() as f64;
    let avg = |f: &dyn Fn(&RenewalReport) -> f64| reports.iter().map(f).sum::<f64>() / k;
    let pooled_se = |f: &dyn Fn(&RenewalReport) -> f64| reports.iter().map(|r| f(r).powi(2)).sum::<f64>().sqrt() / k;
    let z_mean = (
        avg(&|r| r.mean.0) / pooled_se(&|r| r.mean_se.0),
        avg(&|r| r.mean.1) / pooled_se(&|r| r.mean_se.1),
    );
    let z_offdiag = avg(&|r| r.cov[0][1]) / pooled_se(&|r| r.offdiag_se);
    let z_diag = avg(&|r| r.cov[0][0] - r.cov[1][1]) / pooled_se(&|r| r.diag_diff_se);
    let chis: Vec<f64> = reports.iter().map(|r| r.chi2).collect();
    let chi2 = chis.iter().sum::<f64>() / k;
    let mut rng = ChaCha8Rng::seed_from_u64(replica_seed(seed, u64::MAX));
    let mut boot: Vec<f64> = (0..bootstrap)
        .map(|_| {
            (0..chis.len())
                .map(|_| chis[rng.random_range(0..chis.len())])
                .sum::<f64>()
                / k
        })
        .collect();
    boot.sort_by(|a, b| a.total_cmp(b));
    let q = |p: f64| boot[((p * (boot.len() - 1) as f64).round() as usize).min(boot.len() - 1)];
    Ok(DiffusivitySummary {
        chi2_ci: (q(0.025), q(0.975)),
        chi2,
        z_mean,
        z_offdiag,
        z_diag,
        kac: avg(&|r| r.kac),
        msd_exponent: avg(&|r| r.msd_exponent),
        reports,
        seeds,
    })
}

/// Histogram of the diameter after burn-in, keyed by ceil(diam).
pub fn stationary_tail(
    table: &PotentialTable,
    init: &Config,
    steps: u64,
    burn_in: f64,
    seed: u64,
) -> Result<BTreeMap<u64, u64>, LabError> {
    let traj = run(table, init, steps, seed, 1)?;
    let start = (burn_in * steps as f64).ceil() as u64;
    let mut hist = BTreeMap::new();
    traj.replay(|t, c| {
        if t >= start {
            *hist.entry(c.diameter().ceil() as u64).or_insert(0) += 1;
        }
    })?;
    Ok(hist)
}

fn write_meta(
    cfg: &ExperimentConfig,
    checks: &[Check],
    summary: &serde_json::Value,
    extra: &[(&str, serde_json::Value)],
) -> Result<PathBuf, LabError> {
    let mut meta = serde_json::json!({
        "experiment": cfg.experiment.name(),
        "seed": cfg.seed,
        "config": cfg,
        "config_hash": cfg.hash(),
        "version": env!("CARGO_PKG_VERSION"),
        "checks": checks,
        "summary": summary,
    });
    for (k, v) in extra {
        meta[*k] = v.clone();
    }
    let path = with_suffix(&cfg.output, "meta.json");
    std::fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(path)
}

fn write_plot(cfg: &ExperimentConfig, rows: &Table, mut spec: PlotSpec) -> Result<PathBuf, LabError> {
    spec.meta.push(("config-hash".into(), cfg.hash()));
    spec.meta.push(("seed".into(), cfg.seed.to_string()));
    let path = with_suffix(&cfg.output, "svg");
    std::fs::write(&path, emit_plot(rows, &spec)?)?;
    Ok(path)
}

fn ensure_parent(prefix: &Path) -> Result<(), LabError> {
    if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

/// Validates the configuration, runs the experiment and writes its files.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome, LabError> {
    cfg.validate()?;
    ensure_parent(&cfg.output)?;
    let p = &cfg.params;
    let n = cfg.n;
    let fmt = cfg.format;
    let mut files = Vec::new();
    let mut checks = Vec::new();
    let mut extra: Vec<(&str, serde_json::Value)> = Vec::new();
    let summary: serde_json::Value;
    match cfg.experiment {
        Experiment::Simulate => {
            let table = default_table();
            let init = parse_init(p.init.as_deref().unwrap_or("line"), n)?;
            let thin = p.thin.unwrap_or(1);
            let traj = run(table, &init, p.steps.unwrap_or(1000), cfg.seed, thin)?;
            let mut diam = Table::new(&["t", "diam"]);
            let mut com = Table::new(&["t", "mx", "my"]);
            for s in &traj.samples {
                diam.push(vec![s.t.into(), s.diam.into()]);
                com.push(vec![s.t.into(), s.com.0.into(), s.com.1.into()]);
            }
            let mut events = Table::new(&["t", "ax", "ay", "dx", "dy"]);
            for e in &traj.events {
                events.push(vec![
                    e.t.into(),
                    e.from.x.into(),
                    e.from.y.into(),
                    e.to.x.into(),
                    e.to.y.into(),
                ]);
            }
            files.push(diam.save(&cfg.output, "diam", fmt)?);
            files.push(com.save(&cfg.output, "com", fmt)?);
            files.push(events.save(&cfg.output, "events", fmt)?);
            let mut growth_ok = true;
            let mut prev = init.diameter();
            traj.replay(|_, c| {
                let d = c.diameter();
                growth_ok &= d <= prev + 1.0 + 1e-9;
                prev = d;
            })?;
            checks.push(Check::new(
                "diameter_growth",
                growth_ok,
                "diameter rises by at most one per step",
            ));
            let last = traj.final_config()?;
            summary = serde_json::json!({
                "steps": traj.steps(),
                "final_diameter": last.diameter(),
                "final_class": last.class_hash(),
            });
        }
        Experiment::CollapseScaling => {
            let table = default_table();
            let mut cp = CollapseParams::defaults(n);
            if let Some(d) = &p.d_list {
                cp.d_list = d.clone();
            }
            cp.replicas = p.replicas.unwrap_or(cp.replicas);
            cp.r_stop = p.r_stop.unwrap_or(cp.r_stop);
            cp.max_steps = p.max_steps.unwrap_or(cp.max_steps);
            cp.threshold = p.threshold.unwrap_or(cp.threshold);
            cp.delta = p.delta.unwrap_or(cp.delta);
            let s = collapse_scaling(table, &cp, cfg.seed)?;
            let mut rows = Table::new(&[
                "n",
                "d",
                "replica",
                "seed",
                "t_collapse",
                "collapsed",
                "alg_flag",
                "alg_total",
            ]);
            for r in &s.rows {
                rows.push(vec![
                    r.n.into(),
                    r.d.into(),
                    r.replica.into(),
                    Value::Text(r.seed.to_string()),
                    r.t_collapse.map_or(Value::Text(String::new()), Value::from),
                    r.t_collapse.is_some().into(),
                    r.alg_flag.into(),
                    r.alg_total.into(),
                ]);
            }
            let mut med = Table::new(&["d", "median_t", "not_collapsed"]);
            for &(d, m, miss) in &s.medians {
                med.push(vec![d.into(), m.into(), miss.into()]);
            }
            files.push(rows.save(&cfg.output, "replicas", fmt)?);
            files.push(med.save(&cfg.output, "summary", fmt)?);
            let mut spec = PlotSpec::new(Axes::LogLog, "d", "median_t", "median collapse time");
            spec.meta.push(("exponent".into(), format!("{:.4}", s.exponent)));
            files.push(write_plot(cfg, &med, spec)?);
            checks.push(Check::new(
                "median_nondecreasing",
                s.nondecreasing,
                format!("{:?}", s.medians),
            ));
            checks.push(Check::new(
                "exponent_le_2.5",
                s.exponent <= 2.5,
                format!("p = {:.4}", s.exponent),
            ));
            summary = serde_json::json!({ "exponent": s.exponent, "medians": s.medians, "r_stop": cp.r_stop });
        }
        Experiment::StationaryTail => {
            let table = default_table();
            let init = parse_init(p.init.as_deref().unwrap_or("line"), n)?;
            let steps = p.steps.unwrap_or(1_000_000);
            let hist = stationary_tail(table, &init, steps, p.burn_in.unwrap_or(0.1), cfg.seed)?;
            let total: u64 = hist.values().sum();
            let mut rows = Table::new(&["d", "count", "freq", "log10_freq"]);
            for (&d, &c) in &hist {
                let f = c as f64 / total as f64;
                rows.push(vec![d.into(), c.into(), f.into(), f.log10().into()]);
            }
            files.push(rows.save(&cfg.output, "tail", fmt)?);
            files.push(write_plot(
                cfg,
                &rows,
                PlotSpec::new(Axes::SemiLogY, "d", "freq", "stationary diameter tail"),
            )?);
            extra.push(("label", serde_json::json!("qualitative")));
            summary = serde_json::json!({ "samples": total, "max_diameter": hist.keys().last() });
        }
        Experiment::Diffusivity => {
            let table = default_table();
            let s = diffusivity(
                table,
                n,
                p.steps.unwrap_or(1_000_000),
                p.replicas.unwrap_or(4),
                p.thin.unwrap_or(1),
                p.bootstrap.unwrap_or(1000),
                cfg.seed,
            )?;
            let mut rows = Table::new(&[
                "replica",
                "seed",
                "visits",
                "mean_return",
                "kac",
                "mx",
                "my",
                "cxx",
                "cyy",
                "cxy",
                "nu2",
                "chi2",
                "msd_exponent",
            ]);
            for (i, (r, seed)) in s.reports.iter().zip(&s.seeds).enumerate() {
                rows.push(vec![
                    i.into(),
                    Value::Text(seed.to_string()),
                    r.visits.into(),
                    r.mean_return.into(),
                    r.kac.into(),
                    r.mean.0.into(),
                    r.mean.1.into(),
                    r.cov[0][0].into(),
                    r.cov[1][1].into(),
                    r.cov[0][1].into(),
                    r.nu2.into(),
                    r.chi2.into(),
                    r.msd_exponent.into(),
                ]);
            }
            files.push(rows.save(&cfg.output, "replicas", fmt)?);
            let mut msd = Table::new(&["lag", "msd"]);
            for &(l, m) in &s.reports[0].msd {
                msd.push(vec![l.into(), m.into()]);
            }
            files.push(msd.save(&cfg.output, "msd", fmt)?);
            files.push(write_plot(
                cfg,
                &msd,
                PlotSpec::new(Axes::LogLog, "lag", "msd", "centre of mass displacement"),
            )?);
            checks.push(Check::new(
                "mean_zero",
                s.z_mean.0.abs() <= 3.0 && s.z_mean.1.abs() <= 3.0,
                format!("z = {:?}", s.z_mean),
            ));
            checks.push(Check::new(
                "offdiag_zero",
                s.z_offdiag.abs() <= 3.0,
                format!("z = {:.3}", s.z_offdiag),
            ));
            checks.push(Check::new(
                "isotropic",
                s.z_diag.abs() <= 3.0,
                format!("z = {:.3}", s.z_diag),
            ));
            checks.push(Check::new(
                "chi2_positive",
                s.chi2.is_finite() && s.chi2 > 0.0,
                format!("{:.5}", s.chi2),
            ));
            checks.push(Check::new("kac", (0.9..=1.1).contains(&s.kac), format!("{:.5}", s.kac)));
            checks.push(Check::new(
                "msd_exponent",
                (s.msd_exponent - 1.0).abs() <= 0.15,
                format!("{:.4}", s.msd_exponent),
            ));
            summary = serde_json::json!({
                "chi2": s.chi2, "chi2_ci": s.chi2_ci, "kac": s.kac, "msd_exponent": s.msd_exponent,
                "z_mean": s.z_mean, "z_offdiag": s.z_offdiag, "z_diag": s.z_diag,
            });
        }
        Experiment::SpiralSweep => {
            let table = default_table();
            let ns = p.n_list.clone().unwrap_or_else(|| (2..=8).map(|k| 5 * k).collect());
            let reference = spiral_limit_rate();
            let mut rows = Table::new(&["n", "gamma_len", "harmonic", "rate", "ratio"]);
            let mut last = f64::NAN;
            for &k in &ns {
                let sp = spiral_point(table, k)?;
                last = sp.rate / spiral_limit_rate();
                rows.push(vec![
                    k.into(),
                    sp.gamma_len.into(),
                    sp.harmonic.into(),
                    sp.rate.into(),
                    last.into(),
                ]);
            }
            files.push(rows.save(&cfg.output, "spiral", fmt)?);
            let mut spec = PlotSpec::new(Axes::Linear, "n", "rate", "decay rate of the origin");
            spec.reference = Some(spiral_limit_rate());
            files.push(write_plot(cfg, &rows, spec)?);
            checks.push(Check::new(
                "final_ratio_band",
                (0.8..=1.2).contains(&last),
                format!("{last:.4}"),
            ));
            summary = serde_json::json!({ "final_ratio": last, "reference": reference });
        }
        Experiment::AuditBounds => {
            let owned;
            let table: &PotentialTable = match p.radius {
                Some(r) if r != default_table().radius() => {
                    owned = build_table(r)?;
                    &owned
                }
                _ => default_table(),
            };
            let items: Vec<AuditItem> = all_audits(table, p.samples.unwrap_or(10_000), cfg.seed)?;
            let mut rows = Table::new(&["name", "samples", "violations", "worst", "passed", "detail"]);
            for it in &items {
                rows.push(vec![
                    it.name.clone().into(),
                    it.samples.into(),
                    it.violations.into(),
                    it.worst.into(),
                    it.passed.into(),
                    it.detail.clone().into(),
                ]);
                checks.push(Check::new(&it.name, it.passed, it.detail.clone()));
            }
            files.push(rows.save(&cfg.output, "audit", fmt)?);
            summary = serde_json::json!({ "items": items.len(), "failed": items.iter().filter(|i| !i.passed).count() });
        }
        Experiment::KernelTable => {
            let table = build_table(p.radius.unwrap_or(hat_core::potential::DEFAULT_RADIUS))?;
            let triples = with_suffix(&cfg.output, "kernel.txt");
            table.write_triples(std::io::BufWriter::new(std::fs::File::create(&triples)?))?;
            let cache = with_suffix(&cfg.output, "kernel.bin");
            table.save(&cache)?;
            files.push(triples);
            files.push(cache);
            let resid = table.harmonicity_residual();
            checks.push(Check::new("harmonicity", resid <= 1e-10, format!("{resid:.3e}")));
            summary = serde_json::json!({ "radius": table.radius(), "residual": resid });
        }
        Experiment::Hm => {
            let table = default_table();
            let a = parse_init(p.init.as_deref().unwrap_or("line"), n)?;
            let h = harmonic_measure(table, &a)?;
            let mut rows = Table::new(&["x", "y", "harmonic"]);
            for (s, v) in a.sites().iter().zip(&h) {
                rows.push(vec![s.x.into(), s.y.into(), (*v).into()]);
            }
            files.push(rows.save(&cfg.output, "hm", fmt)?);
            summary = serde_json::json!({ "sites": a.len(), "class": a.class_hash() });
        }
    }
    files.push(write_meta(cfg, &checks, &summary, &extra)?);
    Ok(Outcome {
        experiment: cfg.experiment,
        files,
        checks,
        summary,
    })
}
