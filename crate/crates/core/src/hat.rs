//! Harmonic activation and transport.
//!
//! One step: draw x from the harmonic measure of U, run a walk from x until it
//! hits W = U \ {x}, and move x to the last site visited before that.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{HatError, Result};
use crate::harmonic::{solve_hitting, solve_values};
use crate::lattice::{canonical_class, exterior_boundary, make_line, Config, Site, COORD_LIMIT, DIRS};
use crate::potential::PotentialTable;
use crate::squares::{square_exits, MAX_LEVEL};

pub const NORMALIZATION_TOL: f64 = 1e-8;

/// Transport law from one activated site.
#[derive(Clone, Debug, Serialize)]
pub struct TransportRow {
    pub source: Site,
    /// Candidate destinations in lexicographic order.
    pub targets: Vec<Site>,
    pub probs: Vec<f64>,
}

impl TransportRow {
    pub fn prob_of(&self, y: Site) -> f64 {
        self.targets.binary_search(&y).map_or(0.0, |i| self.probs[i])
    }
}

/// Exact one-step law, restricted to the exposed sites of the configuration.
#[derive(Clone, Debug, Serialize)]
pub struct TransitionKernel {
    pub config: Config,
    pub sources: Vec<Site>,
    pub activation: Vec<f64>,
    pub rows: Vec<TransportRow>,
}

impl TransitionKernel {
    /// P(U_1 = U_0).
    pub fn self_transition(&self) -> f64 {
        self.rows
            .iter()
            .zip(&self.activation)
            .map(|(row, h)| h * row.prob_of(row.source))
            .sum()
    }
}

fn check_sum(sum: f64) -> Result<()> {
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(HatError::NormalizationFailure {
            sum,
            tol: NORMALIZATION_TOL,
        });
    }
    Ok(())
}

/// Harmonic measure of U; rounding-level negatives are reported as they are.
pub fn activation(table: &PotentialTable, cfg: &Config) -> Result<Vec<f64>> {
    let h = solve_hitting(table, cfg.sites())?.harmonic_measure().to_vec();
    check_sum(h.iter().sum())?;
    Ok(h)
}

/// Law of S_{tau-1} for a walk from x, tau the hitting time of W = U \ {x}.
///
/// For each y on the boundary of W the probability splits as p * s with
/// p = P_x(walk visits y before W) and s = P_y(last exit from y goes straight into W).
pub fn transport_distribution(table: &PotentialTable, cfg: &Config, x: Site) -> Result<TransportRow> {
    if !cfg.contains(x) {
        return Err(HatError::InvalidInput(format!("{x} not in the configuration")));
    }
    if !cfg.exposed_sites().contains(&x) {
        return Err(HatError::InvalidInput(format!("{x} is not exposed")));
    }
    transport_row(table, cfg, x)
}

fn transport_row(table: &PotentialTable, cfg: &Config, x: Site) -> Result<TransportRow> {
    let w = cfg.without(x);
    if w.is_empty() {
        return Err(HatError::InvalidInput("transport needs at least two sites".into()));
    }
    let targets = exterior_boundary(&w);
    let mut probs = Vec::with_capacity(targets.len());
    let mut set = w.clone();
    set.push(Site::ORIGIN);
    let mut values = vec![0.0; w.len()];
    values.push(1.0);
    for &y in &targets {
        *set.last_mut().expect("nonempty") = y;
        let f = solve_values(table, &set, &values)?;
        let p = if y == x { 1.0 } else { f.eval(table, x) };
        let mut k_y = 0.0;
        let mut back = 0.0;
        for u in y.neighbors() {
            if w.contains(&u) {
                k_y += 1.0;
            } else {
                back += f.eval(table, u);
            }
        }
        let s = (0.25 * k_y) / (1.0 - 0.25 * back);
        probs.push((p * s).clamp(0.0, 1.0));
    }
    check_sum(probs.iter().sum())?;
    Ok(TransportRow {
        source: x,
        targets,
        probs,
    })
}

pub fn transition_kernel(table: &PotentialTable, cfg: &Config) -> Result<TransitionKernel> {
    let h = activation(table, cfg)?;
    let sources = cfg.exposed_sites();
    let activation = sources.iter().map(|s| h[cfg.index_of(*s).expect("member")]).collect();
    let rows = sources
        .iter()
        .map(|&x| transport_row(table, cfg, x))
        .collect::<Result<Vec<_>>>()?;
    Ok(TransitionKernel {
        config: cfg.clone(),
        sources,
        activation,
        rows,
    })
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    p.iter()
        .map(|v| {
            acc += v.max(0.0);
            acc
        })
        .collect()
}

fn inverse_cdf(cdf: &[f64], u: f64) -> usize {
    let total = *cdf.last().expect("nonempty law");
    cdf.partition_point(|&c| c <= u * total).min(cdf.len() - 1)
}

struct CachedRow {
    targets: Vec<Site>,
    cdf: Vec<f64>,
}

struct CachedKernel {
    cdf: Vec<f64>,
    rows: Vec<Option<CachedRow>>,
}

/// Exact one-step sampler that memoises kernels by translation class.
pub struct Stepper<'a> {
    table: &'a PotentialTable,
    cache: HashMap<Vec<Site>, CachedKernel>,
    limit: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct StepEvent {
    pub t: u64,
    pub from: Site,
    pub to: Site,
}

impl<'a> Stepper<'a> {
    pub fn new(table: &'a PotentialTable) -> Self {
        Stepper {
            table,
            cache: HashMap::new(),
            limit: 1 << 18,
        }
    }

    pub fn cached(&self) -> usize {
        self.cache.len()
    }

    /// Draws (x, y) for one step from `cfg` using two uniforms.
    pub fn sample(&mut self, cfg: &Config, rng: &mut impl Rng) -> Result<(Site, Site)> {
        let (norm, (ox, oy)) = cfg.normalized();
        if self.cache.len() >= self.limit {
            self.cache.clear();
        }
        let key = norm.sites().to_vec();
        if !self.cache.contains_key(&key) {
            let act = activation(self.table, &norm)?;
            self.cache.insert(
                key.clone(),
                CachedKernel {
                    cdf: cumulative(&act),
                    rows: (0..norm.len()).map(|_| None).collect(),
                },
            );
        }
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        let entry = self.cache.get_mut(&key).expect("inserted above");
        let i = inverse_cdf(&entry.cdf, u1);
        if entry.rows[i].is_none() {
            let row = transport_row(self.table, &norm, norm.sites()[i])?;
            entry.rows[i] = Some(CachedRow {
                cdf: cumulative(&row.probs),
                targets: row.targets,
            });
        }
        let row = entry.rows[i].as_ref().expect("filled above");
        let j = inverse_cdf(&row.cdf, u2);
        let x = norm.sites()[i].offset(ox, oy);
        let y = row.targets[j].offset(ox, oy);
        Ok((x, y.check()?))
    }
}

/// One exact step.
pub fn step(table: &PotentialTable, cfg: &Config, rng: &mut impl Rng) -> Result<(Config, Site, Site)> {
    let mut s = Stepper::new(table);
    let (x, y) = s.sample(cfg, rng)?;
    Ok((cfg.moved(x, y)?, x, y))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct TrajSample {
    pub t: u64,
    pub diam: f64,
    pub com: (f64, f64),
}

#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub initial: Config,
    pub events: Vec<StepEvent>,
    pub thin: u64,
    pub samples: Vec<TrajSample>,
    pub seed: u64,
}

impl Trajectory {
    pub fn steps(&self) -> u64 {
        self.events.len() as u64
    }

    /// Visits every state U_0, U_1, ... in order.
    pub fn replay(&self, mut f: impl FnMut(u64, &Config)) -> Result<()> {
        let mut cur = self.initial.clone();
        f(0, &cur);
        for e in &self.events {
            cur = cur.moved(e.from, e.to)?;
            f(e.t, &cur);
        }
        Ok(())
    }

    pub fn final_config(&self) -> Result<Config> {
        let mut last = self.initial.clone();
        self.replay(|_, c| last = c.clone())?;
        Ok(last)
    }
}

fn sample_of(t: u64, cfg: &Config) -> TrajSample {
    TrajSample {
        t,
        diam: cfg.diameter(),
        com: cfg.center_of_mass(),
    }
}

/// Runs the exact chain for `steps` steps.
pub fn run(table: &PotentialTable, init: &Config, steps: u64, seed: u64, thin: u64) -> Result<Trajectory> {
    if init.len() < 2 {
        return Err(HatError::InvalidInput("dynamics need at least two sites".into()));
    }
    let thin = thin.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stepper = Stepper::new(table);
    let mut cur = init.clone();
    let mut events = Vec::with_capacity(steps as usize);
    let mut samples = vec![sample_of(0, &cur)];
    for t in 1..=steps {
        let (x, y) = stepper.sample(&cur, &mut rng)?;
        cur = cur.moved(x, y)?;
        events.push(StepEvent { t, from: x, to: y });
        if t % thin == 0 {
            samples.push(sample_of(t, &cur));
        }
    }
    Ok(Trajectory {
        initial: init.clone(),
        events,
        thin,
        samples,
        seed,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct McOptions {
    /// Walks leaving D(factor * radius) are re-injected on the circle of half that radius.
    pub r_max_factor: f64,
    pub step_budget: u64,
    pub replica_size: u64,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions {
            r_max_factor: 65536.0,
            step_budget: 1_000_000_000,
            replica_size: 1 << 14,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct McTransport {
    pub source: Site,
    pub targets: Vec<Site>,
    pub counts: Vec<u64>,
    pub samples: u64,
    pub jumps: u64,
    pub reinjections: u64,
}

impl McTransport {
    pub fn probs(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.samples as f64).collect()
    }

    /// Total variation distance to an exact row.
    pub fn tv_distance(&self, row: &TransportRow) -> f64 {
        let mut all: BTreeMap<Site, (f64, f64)> = BTreeMap::new();
        for (s, p) in self.targets.iter().zip(self.probs()) {
            all.entry(*s).or_default().0 = p;
        }
        for (s, p) in row.targets.iter().zip(&row.probs) {
            all.entry(*s).or_default().1 = *p;
        }
        0.5 * all.values().map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}

struct Walker<'a> {
    w: &'a [Site],
    center: (f64, f64),
    r_max: f64,
    r_inject: f64,
    jumps: u64,
    reinjections: u64,
    budget: u64,
}

impl Walker<'_> {
    fn landing(&mut self, start: Site, rng: &mut ChaCha8Rng) -> Result<Site> {
        let exits = square_exits();
        let mut v = start;
        loop {
            if self.jumps >= self.budget {
                return Err(HatError::BudgetExhausted(self.budget));
            }
            self.jumps += 1;
            let (dx, dy) = (v.x as f64 - self.center.0, v.y as f64 - self.center.1);
            if dx * dx + dy * dy >= self.r_max * self.r_max {
                let t = rng.random::<f64>() * 2.0 * PI;
                v = Site::new(
                    (self.center.0 + self.r_inject * t.cos()).round() as i64,
                    (self.center.1 + self.r_inject * t.sin()).round() as i64,
                );
                self.reinjections += 1;
                continue;
            }
            let dinf = self.w.iter().map(|s| v.dist_inf(*s)).min().unwrap_or(i64::MAX);
            if dinf >= 3 {
                let level = (63 - ((dinf - 1) as u64).leading_zeros()).min(MAX_LEVEL);
                let sq = &exits[level as usize - 1];
                let side = rng.random_range(0..4u32);
                let (ox, oy) = sq.sample(side, rng.random());
                v = v.offset(ox, oy);
                if v.x.abs() > COORD_LIMIT || v.y.abs() > COORD_LIMIT {
                    return Err(HatError::CoordinateOverflow(v.x.abs().max(v.y.abs())));
                }
                continue;
            }
            let (ox, oy) = DIRS[rng.random_range(0..4usize)];
            let u = v.offset(ox, oy);
            if self.w.contains(&u) {
                return Ok(v);
            }
            v = u;
        }
    }
}

/// Monte Carlo estimate of the transport law from x, accelerated by exact
/// square exits. Replicas use counter-derived streams, so results do not depend
/// on the thread count.
pub fn mc_transport(cfg: &Config, x: Site, samples: u64, seed: u64, opts: McOptions) -> Result<McTransport> {
    if !cfg.contains(x) {
        return Err(HatError::InvalidInput(format!("{x} not in the configuration")));
    }
    let w = cfg.without(x);
    if w.is_empty() {
        return Err(HatError::InvalidInput("transport needs at least two sites".into()));
    }
    let center = cfg.center_of_mass();
    let radius = cfg
        .sites()
        .iter()
        .map(|s| ((s.x as f64 - center.0).powi(2) + (s.y as f64 - center.1).powi(2)).sqrt())
        .fold(0.0, f64::max)
        + 1.0;
    let r_max = opts.r_max_factor * radius;
    let size = opts.replica_size.max(1);
    let n_rep = samples.div_ceil(size);
    let per_budget = (opts.step_budget / n_rep.max(1)).max(1);
    let parts: Vec<Result<(BTreeMap<Site, u64>, u64, u64)>> = (0..n_rep)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r);
            let m = size.min(samples - r * size);
            let mut walker = Walker {
                w: &w,
                center,
                r_max,
                r_inject: r_max / 2.0,
                jumps: 0,
                reinjections: 0,
                budget: per_budget,
            };
            let mut counts = BTreeMap::new();
            for _ in 0..m {
                *counts.entry(walker.landing(x, &mut rng)?).or_insert(0u64) += 1;
            }
            Ok((counts, walker.jumps, walker.reinjections))
        })
        .collect();
    let mut total: BTreeMap<Site, u64> = BTreeMap::new();
    let (mut jumps, mut reinjections) = (0, 0);
    for p in parts {
        let (c, j, r) = p?;
        for (s, k) in c {
            *total.entry(s).or_insert(0) += k;
        }
        jumps += j;
        reinjections += r;
    }
    Ok(McTransport {
        source: x,
        targets: total.keys().copied().collect(),
        counts: total.values().copied().collect(),
        samples,
        jumps,
        reinjections,
    })
}

/// Monte Carlo harmonic measure: walks started uniformly on a far circle,
/// re-injected there when they wander beyond twice its radius.
pub fn mc_harmonic_measure(cfg: &Config, radius: f64, samples: u64, seed: u64) -> Result<Vec<u64>> {
    let center = cfg.center_of_mass();
    let size = 1u64 << 12;
    let n_rep = samples.div_ceil(size);
    let parts: Vec<Result<Vec<u64>>> = (0..n_rep)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r);
            let m = size.min(samples - r * size);
            let mut walker = Walker {
                w: cfg.sites(),
                center,
                r_max: 2.0 * radius,
                r_inject: radius,
                jumps: 0,
                reinjections: 0,
                budget: u64::MAX,
            };
            let mut counts = vec![0u64; cfg.len()];
            for _ in 0..m {
                let t = rng.random::<f64>() * 2.0 * PI;
                let start = Site::new(
                    (center.0 + radius * t.cos()).round() as i64,
                    (center.1 + radius * t.sin()).round() as i64,
                );
                let last = walker.landing(start, &mut rng)?;
                // the landing site is adjacent to the hit site; recover it from the final step
                let hit = hit_from_landing(cfg, last, &mut rng);
                counts[cfg.index_of(hit).expect("hit site belongs to the set")] += 1;
            }
            Ok(counts)
        })
        .collect();
    let mut total = vec![0u64; cfg.len()];
    for p in parts {
        for (t, c) in total.iter_mut().zip(p?) {
            *t += c;
        }
    }
    Ok(total)
}

/// Given that the walk at `last` steps into the set next, picks which
/// neighbour it enters, uniformly among occupied neighbours.
fn hit_from_landing(cfg: &Config, last: Site, rng: &mut ChaCha8Rng) -> Site {
    let occ: Vec<Site> = last.neighbors().into_iter().filter(|u| cfg.contains(*u)).collect();
    occ[rng.random_range(0..occ.len())]
}

#[derive(Clone, Debug, Serialize)]
pub struct RenewalReport {
    pub n: usize,
    pub class_hash: String,
    pub steps: u64,
    pub visits: usize,
    pub mean_return: f64,
    pub kac: f64,
    pub mean: (f64, f64),
    pub mean_se: (f64, f64),
    /// [[xx, xy], [xy, yy]]
    pub cov: [[f64; 2]; 2],
    pub offdiag_se: f64,
    pub diag_diff_se: f64,
    pub nu2: f64,
    pub chi2: f64,
    pub self_transition: f64,
    pub msd: Vec<(u64, f64)>,
    pub msd_exponent: f64,
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var)
}

/// Least-squares slope of log y on log x.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Renewal structure of the centre of mass at returns to the class of the line L_n.
pub fn renewal_analysis(table: &PotentialTable, traj: &Trajectory) -> Result<RenewalReport> {
    let n = traj.initial.len();
    let line = make_line(n)?;
    let target = line.canonical_class();
    let mut visits: Vec<(u64, (i64, i64))> = Vec::new();
    traj.replay(|t, c| {
        if canonical_class(c.sites()) == target {
            visits.push((t, c.coord_sum()));
        }
    })?;
    if visits.len() < 3 {
        return Err(HatError::InvalidInput(format!(
            "only {} visits to the line class",
            visits.len()
        )));
    }
    let nf = n as f64;
    let dx: Vec<f64> = visits.windows(2).map(|w| (w[1].1 .0 - w[0].1 .0) as f64 / nf).collect();
    let dy: Vec<f64> = visits.windows(2).map(|w| (w[1].1 .1 - w[0].1 .1) as f64 / nf).collect();
    let k = dx.len() as f64;
    let (mx, vx) = mean_var(&dx);
    let (my, vy) = mean_var(&dy);
    let prod: Vec<f64> = dx.iter().zip(&dy).map(|(a, b)| (a - mx) * (b - my)).collect();
    let (cxy, vprod) = mean_var(&prod);
    let diff: Vec<f64> = dx
        .iter()
        .zip(&dy)
        .map(|(a, b)| (a - mx).powi(2) - (b - my).powi(2))
        .collect();
    let (_, vdiff) = mean_var(&diff);
    let mean_return = (visits.last().expect("visits").0 - visits[0].0) as f64 / k;
    let steps = traj.steps();
    let kac = visits.len() as f64 / (steps + 1) as f64 * mean_return;
    let nu2 = 0.5 * (vx + vy);

    let com: Vec<(u64, (f64, f64))> = traj.samples.iter().map(|s| (s.t, s.com)).collect();
    let mut msd = Vec::new();
    let max_lag = (com.len() / 100).max(2);
    let mut lag = 1usize;
    while lag <= max_lag {
        let m: f64 = (0..com.len() - lag)
            .map(|i| {
                let (a, b) = (com[i].1, com[i + lag].1);
                (b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)
            })
            .sum::<f64>()
            / (com.len() - lag) as f64;
        msd.push((lag as u64 * traj.thin, m));
        lag = ((lag as f64 * 1.5).ceil() as usize).max(lag + 1);
    }
    let fit: Vec<(f64, f64)> = msd
        .iter()
        .filter(|(l, _)| *l >= 10)
        .map(|&(l, m)| (l as f64, m))
        .collect();
    let msd_exponent = loglog_slope(&fit);
    let self_transition = transition_kernel(table, &line)?.self_transition();

    Ok(RenewalReport {
        n,
        class_hash: target.hash(),
        steps,
        visits: visits.len(),
        mean_return,
        kac,
        mean: (mx, my),
        mean_se: ((vx / k).sqrt(), (vy / k).sqrt()),
        cov: [[vx, cxy], [cxy, vy]],
        offdiag_se: (vprod / k).sqrt(),
        diag_diff_se: (vdiff / k).sqrt(),
        nu2,
        chi2: nu2 / mean_return,
        self_transition,
        msd,
        msd_exponent,
    })
}
