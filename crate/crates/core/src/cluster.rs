//! theta recursion, exponential clustering, cluster tracking and collapse times.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{HatError, Result};
use crate::hat::{Stepper, Trajectory};
use crate::lattice::{Config, Site};
use crate::potential::PotentialTable;

pub const MAX_THETA_INDEX: usize = 64;

/// theta_m(r). When the value stops fitting in an f64 only its log is kept;
/// when even the log would overflow the value is saturated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThetaValue {
    pub linear: Option<f64>,
    pub log_form: f64,
    pub saturated: bool,
}

impl ThetaValue {
    fn from_linear(v: f64) -> Self {
        ThetaValue {
            linear: Some(v),
            log_form: v.ln(),
            saturated: false,
        }
    }

    /// The value as an f64, infinite once it no longer fits.
    pub fn value(&self) -> f64 {
        self.linear.unwrap_or(f64::INFINITY)
    }

    /// Whether a lattice distance is strictly below the value.
    pub fn exceeds(&self, dist: f64) -> bool {
        dist < self.value()
    }

    /// e^theta, infinite when not representable.
    pub fn exp(&self) -> f64 {
        self.value().exp()
    }
}

pub fn theta(m: usize, r: f64) -> ThetaValue {
    assert!(m <= MAX_THETA_INDEX, "theta index above {MAX_THETA_INDEX}");
    assert!(r >= 0.0);
    let mut cur = ThetaValue::from_linear(r);
    for _ in 0..m {
        cur = match cur.linear {
            _ if cur.saturated => cur,
            Some(v) if (v + v.exp()).is_finite() => ThetaValue::from_linear(v + v.exp()),
            // log(v + e^v) = v + log(1 + v e^{-v})
            Some(v) => ThetaValue {
                linear: None,
                log_form: v + (v * (-v).exp()).ln_1p(),
                saturated: false,
            },
            None => ThetaValue {
                linear: None,
                log_form: f64::INFINITY,
                saturated: true,
            },
        };
    }
    cur
}

/// Inverse of r -> theta_n(r) for d >= theta_n(0).
pub fn phi(n: usize, d: f64) -> Result<f64> {
    let floor = theta(n, 0.0).value();
    if !(d >= floor) || !d.is_finite() {
        return Err(HatError::OutOfRange {
            value: d,
            range: format!("[{floor}, inf)"),
        });
    }
    let (mut lo, mut hi) = (0.0f64, d.max(1.0));
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if theta(n, mid).value() < d {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (tl, th) = (theta(n, lo).value(), theta(n, hi).value());
    Ok(if (d - tl).abs() <= (th - d).abs() { lo } else { hi })
}

#[derive(Clone, Debug, Serialize)]
pub struct Cluster {
    pub sites: Config,
    pub center: Site,
    pub radius: ThetaValue,
}

#[derive(Clone, Debug, Serialize)]
pub struct Clustering {
    pub clusters: Vec<Cluster>,
    pub r: f64,
}

impl Clustering {
    pub fn k(&self) -> usize {
        self.clusters.len()
    }

    /// Partition, radii and exponential separation.
    pub fn verify(&self, a: &Config) -> Result<()> {
        let mut seen = BTreeSet::new();
        for c in &self.clusters {
            if c.radius.value() < self.r {
                return Err(HatError::InvariantViolation(format!(
                    "cluster radius below r = {}",
                    self.r
                )));
            }
            for &s in c.sites.sites() {
                let inside = c.radius.exceeds(s.dist(c.center));
                if !a.contains(s) || !inside || !seen.insert(s) {
                    return Err(HatError::InvariantViolation(format!("{s} breaks the partition")));
                }
            }
            let covered = a.sites().iter().filter(|s| c.radius.exceeds(s.dist(c.center))).count();
            if covered != c.sites.len() {
                return Err(HatError::InvariantViolation("cluster is not A cap D".into()));
            }
        }
        if seen.len() != a.len() {
            return Err(HatError::InvariantViolation("clusters do not cover A".into()));
        }
        for (i, ci) in self.clusters.iter().enumerate() {
            for cj in &self.clusters[i + 1..] {
                let gap = crate::lattice::set_distance(ci.sites.sites(), cj.sites.sites());
                let need = ci.radius.value().max(cj.radius.value()).exp();
                if !(gap > need) {
                    return Err(HatError::InvariantViolation(format!("separation {gap} <= {need}")));
                }
            }
        }
        Ok(())
    }
}

/// Disk-and-annulus construction: each x gets the first empty annulus around it,
/// every site picks the largest disk containing it, and duplicates are merged.
pub fn exponential_clustering(a: &Config, r: f64) -> Result<Clustering> {
    if a.is_empty() || !(r >= 0.0) {
        return Err(HatError::InvalidInput("need a nonempty set and r >= 0".into()));
    }
    let n = a.len();
    let thetas: Vec<ThetaValue> = (0..=n + 1).map(|m| theta(m.min(MAX_THETA_INDEX), r)).collect();
    let pts = a.sites();
    // (radius, members) per centre
    let disks: Vec<(ThetaValue, Vec<usize>)> = pts
        .iter()
        .map(|&x| {
            let mut m = 1;
            while m <= n {
                let (lo, hi) = (thetas[m - 1], thetas[m]);
                let occupied = pts.iter().any(|&y| {
                    let d = y.dist(x);
                    !lo.exceeds(d) && hi.exceeds(d)
                });
                if !occupied {
                    break;
                }
                m += 1;
            }
            let rad = thetas[m - 1];
            let members = (0..n).filter(|&j| rad.exceeds(pts[j].dist(x))).collect();
            (rad, members)
        })
        .collect();
    let mut chosen: Vec<usize> = Vec::new();
    for i in 0..n {
        let best = (0..n)
            .filter(|&j| disks[j].1.binary_search(&i).is_ok())
            .max_by(|&p, &q| disks[p].1.len().cmp(&disks[q].1.len()).then(q.cmp(&p)))
            .ok_or_else(|| HatError::InvariantViolation(format!("no disk holds {}", pts[i])))?;
        if !chosen.iter().any(|&c| disks[c].1 == disks[best].1) {
            chosen.push(best);
        }
    }
    let clusters = chosen
        .into_iter()
        .map(|j| {
            Ok(Cluster {
                sites: Config::new(disks[j].1.iter().map(|&i| pts[i]).collect())?,
                center: pts[j],
                radius: disks[j].0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let out = Clustering { clusters, r };
    out.verify(a)?;
    Ok(out)
}

/// Per-step cluster membership: U_t^i = U_t cap (U_{t-1}^i cup boundary of U_{t-1}^i).
#[derive(Clone, Debug)]
pub struct ClusterTracker {
    pub members: Vec<BTreeSet<Site>>,
    pub t: u64,
    pub collapse_times: Vec<u64>,
    pub rho: Vec<f64>,
    pub expiry: Vec<f64>,
    pub intersected: bool,
    emptied: Vec<bool>,
}

fn expiry_time(rho: f64, prev: u64) -> f64 {
    let p = prev as f64;
    rho.ln().powi(2) - 4.0 * (rho + p).ln() - p
}

impl ClusterTracker {
    pub fn new(clustering: &Clustering) -> Self {
        let members: Vec<BTreeSet<Site>> = clustering
            .clusters
            .iter()
            .map(|c| c.sites.sites().iter().copied().collect())
            .collect();
        let k = members.len();
        let mut out = ClusterTracker {
            members,
            t: 0,
            collapse_times: Vec::new(),
            rho: Vec::new(),
            expiry: Vec::new(),
            intersected: false,
            emptied: vec![false; k],
        };
        out.open_period();
        out
    }

    pub fn k(&self) -> usize {
        self.members.len()
    }

    pub fn live(&self) -> usize {
        self.emptied.iter().filter(|e| !**e).count()
    }

    /// Least separation among the live clusters; infinite with fewer than two.
    pub fn separation(&self) -> f64 {
        let live: Vec<Vec<Site>> = self
            .members
            .iter()
            .filter(|m| !m.is_empty())
            .map(|m| m.iter().copied().collect())
            .collect();
        let mut best = f64::INFINITY;
        for i in 0..live.len() {
            for j in i + 1..live.len() {
                best = best.min(crate::lattice::set_distance(&live[i], &live[j]));
            }
        }
        best
    }

    fn open_period(&mut self) {
        if self.live() >= 2 {
            let rho = self.separation();
            let prev = self.collapse_times.last().copied().unwrap_or(0);
            self.rho.push(rho);
            self.expiry.push(expiry_time(rho, prev));
        }
    }

    /// Applies one step where the particle at `from` moved to `to`.
    pub fn advance(&mut self, from: Site, to: Site) {
        self.t += 1;
        for m in self.members.iter_mut() {
            let take = m.contains(&to) || to.neighbors().iter().any(|u| m.contains(u));
            m.remove(&from);
            if take {
                m.insert(to);
            }
        }
        if !self.intersected {
            let total: usize = self.members.iter().map(|m| m.len()).sum();
            let union: BTreeSet<&Site> = self.members.iter().flatten().collect();
            self.intersected = union.len() != total;
        }
        let mut newly = 0;
        for (i, m) in self.members.iter().enumerate() {
            if m.is_empty() && !self.emptied[i] {
                self.emptied[i] = true;
                newly += 1;
            }
        }
        for _ in 0..newly {
            self.collapse_times.push(self.t);
        }
        if newly > 0 {
            self.open_period();
        }
    }

    pub fn record(&self, flag: bool) -> CollapseRecord {
        CollapseRecord {
            thresholds: self.collapse_times.clone(),
            rho: self.rho.clone(),
            expiry: self.expiry.clone(),
            intersected: self.intersected,
            flag,
            total: self.collapse_times.last().copied().unwrap_or(0),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CollapseRecord {
    /// T_1 <= T_2 <= ...
    pub thresholds: Vec<u64>,
    /// rho_l, the least separation at T_{l-1}.
    pub rho: Vec<f64>,
    pub expiry: Vec<f64>,
    pub intersected: bool,
    pub flag: bool,
    pub total: u64,
}

pub fn track_clusters(traj: &Trajectory, clustering0: &Clustering) -> CollapseRecord {
    let mut tracker = ClusterTracker::new(clustering0);
    for e in &traj.events {
        tracker.advance(e.from, e.to);
    }
    tracker.record(false)
}

#[derive(Clone, Debug, Serialize)]
pub struct LoopRecord {
    pub d: f64,
    pub r: f64,
    pub k: usize,
    pub budget: f64,
    pub collapse: CollapseRecord,
}

#[derive(Clone, Debug, Serialize)]
pub struct Algorithm1Outcome {
    pub flag: bool,
    pub total: u64,
    pub loops: Vec<LoopRecord>,
    /// Times clustering returned one cluster and r was halved.
    pub reclusterings: u32,
    pub final_config: Config,
}

/// The collapse loop: cluster with r = Phi(d), wait at most (log d)^{1+7 delta}
/// steps for all but one cluster to empty, repeat while d exceeds `threshold`.
pub fn algorithm1(
    table: &PotentialTable,
    u: &Config,
    threshold: f64,
    delta: f64,
    seed: u64,
) -> Result<Algorithm1Outcome> {
    if u.len() < 2 || !(threshold > 0.0) {
        return Err(HatError::InvalidInput(
            "need at least two sites and a positive threshold".into(),
        ));
    }
    let n = u.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stepper = Stepper::new(table);
    let mut v = u.clone();
    let mut total = 0u64;
    let mut flag = false;
    let mut loops = Vec::new();
    let mut reclusterings = 0;
    loop {
        let d = v.diameter();
        if !(d > threshold) || flag {
            break;
        }
        let mut r = phi(n, d).unwrap_or(0.0);
        let mut clustering = exponential_clustering(&v, r)?;
        while clustering.k() == 1 && r > 0.0 {
            r = if r < 1e-9 { 0.0 } else { r / 2.0 };
            reclusterings += 1;
            log::info!("single cluster at d = {d}, retrying with r = {r}");
            clustering = exponential_clustering(&v, r)?;
        }
        let budget = d.ln().max(0.0).powf(1.0 + 7.0 * delta);
        let k = clustering.k();
        let mut tracker = ClusterTracker::new(&clustering);
        if k == 1 {
            log::warn!("clustering stays single at d = {d}; flagging");
            flag = true;
            loops.push(LoopRecord {
                d,
                r,
                k,
                budget,
                collapse: tracker.record(true),
            });
            break;
        }
        let cap = budget.floor() as u64;
        let mut w = v.clone();
        while tracker.live() > 1 && tracker.t < cap {
            let (x, y) = stepper.sample(&w, &mut rng)?;
            w = w.moved(x, y)?;
            tracker.advance(x, y);
        }
        if tracker.live() > 1 {
            flag = true;
            loops.push(LoopRecord {
                d,
                r,
                k,
                budget,
                collapse: tracker.record(true),
            });
            break;
        }
        let t_k = *tracker.collapse_times.last().expect("k >= 2 so a collapse happened");
        loops.push(LoopRecord {
            d,
            r,
            k,
            budget,
            collapse: tracker.record(false),
        });
        v = w;
        total += t_k;
    }
    Ok(Algorithm1Outcome {
        flag,
        total,
        loops,
        reclusterings,
        final_config: v,
    })
}
