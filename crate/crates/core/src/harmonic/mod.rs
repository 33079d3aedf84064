//! Hitting distributions, harmonic measure and escape probabilities.
//!
//! For a finite set A the hitting probabilities are written as
//! h_y(v) = alpha_y + sum_w beta_{y,w} a(v - w) with sum_w beta_{y,w} = 0,
//! fixed by h_y = delta_y on A. Then alpha_y is the harmonic measure of y.

mod rectangle;
mod spiral;

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{HatError, Result};
use crate::lattice::{circle, exterior_boundary, thicken, Config, OutsideMap, Site};
use crate::linalg::DenseLu;
use crate::markov::{AbsorbingChain, Target};
use crate::potential::PotentialTable;

pub use rectangle::{rectangle_exit, rectangle_sites, RectangleExit};
pub use spiral::{build_spiral, spiral_point, Spiral, SpiralPoint};

/// Largest target set handled by the dense solver.
pub const SOLVER_CAP: usize = 2000;

fn index_sites(sites: &[Site]) -> Result<HashMap<Site, usize>> {
    if sites.is_empty() {
        return Err(HatError::InvalidInput("empty target set".into()));
    }
    if sites.len() > SOLVER_CAP {
        return Err(HatError::SolverCapExceeded {
            size: sites.len(),
            cap: SOLVER_CAP,
        });
    }
    let mut index = HashMap::with_capacity(sites.len());
    for (i, s) in sites.iter().enumerate() {
        s.check()?;
        if index.insert(*s, i).is_some() {
            return Err(HatError::InvalidInput(format!("duplicate site {s}")));
        }
    }
    Ok(index)
}

fn system_lu(table: &PotentialTable, sites: &[Site]) -> Result<DenseLu> {
    let k = sites.len();
    let mut m = DMatrix::<f64>::zeros(k + 1, k + 1);
    for (i, z) in sites.iter().enumerate() {
        for (j, w) in sites.iter().enumerate().skip(i + 1) {
            let v = table.between(*z, *w);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        m[(i, k)] = 1.0;
        m[(k, i)] = 1.0;
    }
    DenseLu::new(m)
}

/// All hitting distributions of a finite set.
#[derive(Clone, Debug)]
pub struct HittingSolution {
    sites: Vec<Site>,
    index: HashMap<Site, usize>,
    /// beta[(w, y)]
    beta: DMatrix<f64>,
    alpha: Vec<f64>,
    pub residual: f64,
    pub pivot_ratio: f64,
}

impl HittingSolution {
    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    /// Harmonic measure from infinity, aligned with `sites`.
    pub fn harmonic_measure(&self) -> &[f64] {
        &self.alpha
    }

    pub fn index_of(&self, s: Site) -> Option<usize> {
        self.index.get(&s).copied()
    }

    /// beta_{w,y}: weight of a(v - sites[w]) in the hitting probability of sites[y].
    pub fn coefficient(&self, w: usize, y: usize) -> f64 {
        self.beta[(w, y)]
    }

    /// P_v(S_{sigma_A} = sites[y]).
    pub fn eval(&self, table: &PotentialTable, v: Site, y: usize) -> f64 {
        if let Some(&i) = self.index.get(&v) {
            return if i == y { 1.0 } else { 0.0 };
        }
        let mut s = self.alpha[y];
        for (w, site) in self.sites.iter().enumerate() {
            s += self.beta[(w, y)] * table.between(v, *site);
        }
        s
    }

    /// The full hitting distribution from `v` (with sigma, so a point mass on A).
    pub fn eval_all(&self, table: &PotentialTable, v: Site) -> Vec<f64> {
        let k = self.sites.len();
        if let Some(&i) = self.index.get(&v) {
            let mut out = vec![0.0; k];
            out[i] = 1.0;
            return out;
        }
        let av: Vec<f64> = self.sites.iter().map(|w| table.between(v, *w)).collect();
        (0..k)
            .map(|y| self.alpha[y] + (0..k).map(|w| self.beta[(w, y)] * av[w]).sum::<f64>())
            .collect()
    }

    /// P_x(S_{tau_A} = .) with tau counting from time one.
    pub fn first_return(&self, table: &PotentialTable, x: Site) -> Vec<f64> {
        let mut out = vec![0.0; self.sites.len()];
        for u in x.neighbors() {
            for (o, p) in out.iter_mut().zip(self.eval_all(table, u)) {
                *o += 0.25 * p;
            }
        }
        out
    }
}

pub fn solve_hitting(table: &PotentialTable, sites: &[Site]) -> Result<HittingSolution> {
    let index = index_sites(sites)?;
    let k = sites.len();
    let lu = system_lu(table, sites)?;
    let mut rhs = DMatrix::<f64>::zeros(k + 1, k);
    for i in 0..k {
        rhs[(i, i)] = 1.0;
    }
    let (x, residual) = lu.solve(&rhs)?;
    let beta = x.rows(0, k).into_owned();
    let alpha = (0..k).map(|y| x[(k, y)]).collect();
    Ok(HittingSolution {
        sites: sites.to_vec(),
        index,
        beta,
        alpha,
        residual,
        pivot_ratio: lu.pivot_ratio,
    })
}

/// A bounded harmonic function off A with prescribed values on A.
#[derive(Clone, Debug)]
pub struct HarmonicFn {
    sites: Vec<Site>,
    index: HashMap<Site, usize>,
    values: Vec<f64>,
    beta: Vec<f64>,
    /// Limit at infinity.
    pub alpha: f64,
    pub residual: f64,
}

impl HarmonicFn {
    pub fn eval(&self, table: &PotentialTable, v: Site) -> f64 {
        if let Some(&i) = self.index.get(&v) {
            return self.values[i];
        }
        self.alpha
            + self
                .sites
                .iter()
                .zip(&self.beta)
                .map(|(w, b)| b * table.between(v, *w))
                .sum::<f64>()
    }

    /// Expected value after one step from `x`.
    pub fn step_mean(&self, table: &PotentialTable, x: Site) -> f64 {
        x.neighbors().iter().map(|u| 0.25 * self.eval(table, *u)).sum()
    }
}

/// Solves for v -> E_v[values(S_{sigma_A})].
pub fn solve_values(table: &PotentialTable, sites: &[Site], values: &[f64]) -> Result<HarmonicFn> {
    let index = index_sites(sites)?;
    let k = sites.len();
    if values.len() != k {
        return Err(HatError::InvalidInput("value vector length mismatch".into()));
    }
    let lu = system_lu(table, sites)?;
    let mut rhs = DMatrix::<f64>::zeros(k + 1, 1);
    for (i, v) in values.iter().enumerate() {
        rhs[(i, 0)] = *v;
    }
    let (x, residual) = lu.solve(&rhs)?;
    Ok(HarmonicFn {
        sites: sites.to_vec(),
        index,
        values: values.to_vec(),
        beta: (0..k).map(|i| x[(i, 0)]).collect(),
        alpha: x[(k, 0)],
        residual,
    })
}

/// Harmonic measure of a configuration, aligned with its sites.
pub fn harmonic_measure(table: &PotentialTable, cfg: &Config) -> Result<Vec<f64>> {
    Ok(solve_hitting(table, cfg.sites())?.alpha)
}

/// H_A(x) from the one-step decomposition at x, using the hitting
/// distributions of A from the free neighbours of x and a reference z0 in A.
pub fn neighbor_formula(table: &PotentialTable, sol: &HittingSolution, x: Site, z0: Site) -> f64 {
    let mut total = 0.0;
    for u in x.neighbors() {
        if sol.index_of(u).is_some() {
            continue;
        }
        let dist = sol.eval_all(table, u);
        let mean: f64 = sol
            .sites()
            .iter()
            .zip(&dist)
            .map(|(z, p)| p * table.between(*z, z0))
            .sum();
        total += table.between(u, z0) - mean;
    }
    0.25 * total
}

/// P_x(tau_{B} < tau_A) for x in A and B disjoint from A.
fn escape_to(table: &PotentialTable, a: &[Site], x: Site, b: &[Site]) -> Result<f64> {
    let mut sites = a.to_vec();
    sites.extend_from_slice(b);
    let mut values = vec![0.0; a.len()];
    values.resize(sites.len(), 1.0);
    let f = solve_values(table, &sites, &values)?;
    Ok(f.step_mean(table, x))
}

/// P_x(tau_{boundary of A_d} < tau_A), A_d = { v : dist(v, A) < d }.
pub fn escape_probability(table: &PotentialTable, a: &Config, d: f64, x: Site) -> Result<f64> {
    if !a.contains(x) {
        return Err(HatError::InvalidInput(format!("{x} not in the set")));
    }
    if d < 1.0 {
        return Err(HatError::OutOfRange {
            value: d,
            range: "[1, inf)".into(),
        });
    }
    let shell = exterior_boundary(&thicken(a.sites(), d));
    escape_to(table, a.sites(), x, &shell)
}

/// P_x(tau_{C_c(r)} < tau_A).
pub fn circle_escape(table: &PotentialTable, a: &Config, x: Site, center: Site, r: f64) -> Result<f64> {
    let c = circle(center, r);
    if c.iter().any(|s| a.contains(*s)) {
        return Err(HatError::InvalidInput("circle meets the set".into()));
    }
    escape_to(table, a.sites(), x, &c)
}

#[derive(Clone, Debug, Serialize)]
pub struct HittingRatio {
    pub x: Site,
    pub y: Site,
    pub harmonic: f64,
    pub ratio: f64,
}

/// H_{C(r)}(x, y) / H_{C(r)}(y) for every exposed y on the circle.
pub fn circle_hitting_ratio(table: &PotentialTable, r: f64, xs: &[Site]) -> Result<Vec<HittingRatio>> {
    let c = circle(Site::ORIGIN, r);
    let sol = solve_hitting(table, &c)?;
    let mut out = Vec::new();
    for &x in xs {
        if x.norm() < r + 1.0 {
            return Err(HatError::InvalidInput(format!("{x} is not outside the circle")));
        }
        let dist = sol.eval_all(table, x);
        for (i, y) in c.iter().enumerate() {
            let h = sol.alpha[i];
            if h > 1e-12 {
                out.push(HittingRatio {
                    x,
                    y: *y,
                    harmonic: h,
                    ratio: dist[i] / h,
                });
            }
        }
    }
    Ok(out)
}

/// P_z(sigma_y < sigma_x) in closed form.
pub fn two_point(table: &PotentialTable, x: Site, y: Site, z: Site) -> f64 {
    (table.between(x, z) - table.between(y, z)) / (2.0 * table.between(x, y)) + 0.5
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct TunnelValue {
    pub closed: f64,
    pub solved: f64,
}

/// Corridor hitting probability f(2) for f(1) = 0, f(L) = 1, f(i) = (f(i-1) + f(i+1)) / 4.
pub fn tunnel_value(len: usize) -> Result<TunnelValue> {
    if len < 3 {
        return Err(HatError::InvalidInput("tunnel length must be at least 3".into()));
    }
    let s3 = 3f64.sqrt();
    let m = (len - 1) as i32;
    let closed = 2.0 * s3 / ((2.0 + s3).powi(m) - (2.0 - s3).powi(m));
    // transient states 2..=L-1 as 0..L-2; absorbing: 0 = site 1 or wall, 1 = site L
    let n = len - 2;
    let mut chain = AbsorbingChain::new(n, 2);
    for i in 0..n {
        let left = if i == 0 {
            Target::Absorbing(0)
        } else {
            Target::Transient(i - 1)
        };
        let right = if i + 1 == n {
            Target::Absorbing(1)
        } else {
            Target::Transient(i + 1)
        };
        chain.add(i, left, 0.25);
        chain.add(i, right, 0.25);
        chain.add(i, Target::Absorbing(0), 0.5);
    }
    let solved = chain.absorption_from(0)[1];
    Ok(TunnelValue { closed, solved })
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundSample {
    pub lhs: f64,
    pub rhs: f64,
    pub radius: f64,
}

impl BoundSample {
    pub fn holds_ge(&self) -> bool {
        self.lhs >= self.rhs
    }
    pub fn holds_le(&self) -> bool {
        self.lhs <= self.rhs
    }
}

/// Compares P_x(tau_{C(kb)} < tau_A) with H_A(x) / (4 log(kb)), b = diam(A), for
/// the circle centred at the first site of A.
pub fn escape_circle_check(table: &PotentialTable, a: &Config, x: Site, k: f64) -> Result<BoundSample> {
    let b = a.diameter().max(1.0);
    let r = k * b;
    let center = a.sites()[0];
    if circle(center, r).len() + a.len() > SOLVER_CAP {
        return Err(HatError::SolverCapExceeded {
            size: circle(center, r).len() + a.len(),
            cap: SOLVER_CAP,
        });
    }
    let lhs = circle_escape(table, a, x, center, r)?;
    let h = harmonic_measure(table, a)?;
    let hx = h[a
        .index_of(x)
        .ok_or_else(|| HatError::InvalidInput(format!("{x} not in the set")))?];
    Ok(BoundSample {
        lhs,
        rhs: hx / (4.0 * r.ln()),
        radius: r,
    })
}

/// Compares P_x(tau_{boundary of (A\x)_rho} < tau_{A\x}) with (log diam A + 2) / log rho.
pub fn escape_upper_check(table: &PotentialTable, a: &Config, x: Site, rho: f64) -> Result<BoundSample> {
    let d = a.diameter();
    if a.len() < 2 || rho < 2.0 * d {
        return Err(HatError::InvalidInput("need |A| >= 2 and rho >= 2 diam(A)".into()));
    }
    let rest = a.without(x);
    let shell = exterior_boundary(&thicken(&rest, rho));
    let mut sites = rest.clone();
    sites.extend_from_slice(&shell);
    let mut values = vec![0.0; rest.len()];
    values.resize(sites.len(), 1.0);
    let f = solve_values(table, &sites, &values)?;
    Ok(BoundSample {
        lhs: f.eval(table, x),
        rhs: (d.ln() + 2.0) / rho.ln(),
        radius: rho,
    })
}

/// H_A(target) through a cut site separating the target from infinity, with the
/// enclosed part solved by state reduction. Falls back to the direct solve when
/// the target is not enclosed.
pub fn harmonic_measure_via_cut(table: &PotentialTable, a: &Config, target: Site) -> Result<f64> {
    let ti = a
        .index_of(target)
        .ok_or_else(|| HatError::InvalidInput(format!("{target} not in the set")))?;
    let Some(path) = shortest_outside_path(a, target) else {
        return Ok(0.0);
    };
    let open_nbrs: Vec<Site> = target.neighbors().into_iter().filter(|u| !a.contains(*u)).collect();
    let cut = path[..path.len() - 1].iter().copied().find(|&s| {
        let map = OutsideMap::new(a.sites(), &[s]);
        open_nbrs.iter().all(|u| *u == s || !map.is_outside(*u))
    });
    let Some(cut) = cut else {
        return Ok(harmonic_measure(table, a)?[ti]);
    };
    let outside = OutsideMap::new(a.sites(), &[cut]);

    // enclosed component behind the cut
    let mut inner: Vec<Site> = Vec::new();
    let mut seen: HashMap<Site, usize> = HashMap::new();
    let mut stack: Vec<Site> = cut
        .neighbors()
        .into_iter()
        .filter(|u| !a.contains(*u) && !outside.is_outside(*u))
        .collect();
    while let Some(s) = stack.pop() {
        if seen.contains_key(&s) || a.contains(s) || s == cut {
            continue;
        }
        seen.insert(s, 0);
        inner.push(s);
        stack.extend(s.neighbors());
    }
    inner.sort_unstable();
    for (i, s) in inner.iter().enumerate() {
        seen.insert(*s, i);
    }
    // absorbing: 0 target, 1 other sites of A, 2 the cut
    let mut chain = AbsorbingChain::new(inner.len(), 3);
    for (i, s) in inner.iter().enumerate() {
        for u in s.neighbors() {
            let t = if u == target {
                Target::Absorbing(0)
            } else if u == cut {
                Target::Absorbing(2)
            } else if a.contains(u) {
                Target::Absorbing(1)
            } else {
                Target::Transient(seen[&u])
            };
            chain.add(i, t, 0.25);
        }
    }
    let mut with_cut = a.sites().to_vec();
    with_cut.push(cut);
    let sol = solve_hitting(table, &with_cut)?;
    let ci = with_cut.len() - 1;
    let (mut q, mut esc) = (0.0, 0.0);
    for u in cut.neighbors() {
        if u == target {
            q += 0.25;
            esc += 0.25;
        } else if a.contains(u) {
            esc += 0.25;
        } else if let Some(&i) = seen.get(&u) {
            let p = chain.absorption_from(i);
            q += 0.25 * p[0];
            esc += 0.25 * (p[0] + p[1]);
        } else {
            esc += 0.25 * (1.0 - sol.eval(table, u, ci));
        }
    }
    Ok(sol.alpha[ci] * q / esc)
}

/// Breadth-first shortest path through the complement from the exterior
/// boundary of A and its boundary to a neighbour of `target`, ending at `target`.
pub fn shortest_outside_path(a: &Config, target: Site) -> Option<Vec<Site>> {
    let mut grown = a.sites().to_vec();
    grown.extend(a.exterior_boundary());
    let outside = OutsideMap::new(&grown, &[]);
    let sources: Vec<Site> = exterior_boundary(&grown)
        .into_iter()
        .filter(|s| outside.is_outside(*s))
        .collect();
    let (lo, hi) = crate::lattice::bbox(&sources);
    let inside = |s: Site| s.x >= lo.x && s.x <= hi.x && s.y >= lo.y && s.y <= hi.y;
    let mut parent: HashMap<Site, Option<Site>> = HashMap::new();
    let mut queue = std::collections::VecDeque::new();
    for s in sources {
        parent.insert(s, None);
        queue.push_back(s);
    }
    while let Some(c) = queue.pop_front() {
        for u in c.neighbors() {
            if u == target {
                let mut path = vec![target, c];
                let mut cur = c;
                while let Some(Some(p)) = parent.get(&cur) {
                    path.push(*p);
                    cur = *p;
                }
                path.reverse();
                return Some(path);
            }
            if inside(u) && !a.contains(u) && !parent.contains_key(&u) {
                parent.insert(u, Some(c));
                queue.push_back(u);
            }
        }
    }
    None
}

/// Normalised rate -log(H) / n for reporting.
pub fn decay_rate(h: f64, n: usize) -> f64 {
    -h.ln() / n as f64
}

/// 2 log(2 + sqrt 3).
pub fn spiral_limit_rate() -> f64 {
    2.0 * (2.0 + 3f64.sqrt()).ln()
}
