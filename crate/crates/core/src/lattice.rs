//! Sites of Z^2, finite configurations and the discrete geometry used by the
//! solvers: boundaries, exposure, disks and circles, symmetry classes.

use std::collections::{HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HatError, Result};

/// Largest admissible absolute coordinate.
pub const COORD_LIMIT: i64 = 1 << 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(i64, i64)", into = "(i64, i64)")]
pub struct Site {
    pub x: i64,
    pub y: i64,
}

impl From<(i64, i64)> for Site {
    fn from((x, y): (i64, i64)) -> Self {
        Site { x, y }
    }
}

impl From<Site> for (i64, i64) {
    fn from(s: Site) -> Self {
        (s.x, s.y)
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

pub const DIRS: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

impl Site {
    pub const ORIGIN: Site = Site { x: 0, y: 0 };

    pub const fn new(x: i64, y: i64) -> Self {
        Site { x, y }
    }

    pub fn neighbors(self) -> [Site; 4] {
        DIRS.map(|(dx, dy)| Site::new(self.x + dx, self.y + dy))
    }

    pub fn offset(self, dx: i64, dy: i64) -> Site {
        Site::new(self.x + dx, self.y + dy)
    }

    pub fn sub(self, o: Site) -> Site {
        Site::new(self.x - o.x, self.y - o.y)
    }

    pub fn norm2(self) -> i64 {
        self.x * self.x + self.y * self.y
    }

    pub fn norm(self) -> f64 {
        (self.norm2() as f64).sqrt()
    }

    pub fn dist(self, o: Site) -> f64 {
        self.sub(o).norm()
    }

    pub fn dist_inf(self, o: Site) -> i64 {
        (self.x - o.x).abs().max((self.y - o.y).abs())
    }

    pub fn is_adjacent(self, o: Site) -> bool {
        (self.x - o.x).abs() + (self.y - o.y).abs() == 1
    }

    pub fn check(self) -> Result<Site> {
        for c in [self.x, self.y] {
            if c.abs() > COORD_LIMIT {
                return Err(HatError::CoordinateOverflow(c));
            }
        }
        Ok(self)
    }
}

/// A finite set of distinct sites, stored in lexicographic order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Site>", into = "Vec<Site>")]
pub struct Config {
    sites: Vec<Site>,
}

impl TryFrom<Vec<Site>> for Config {
    type Error = HatError;
    fn try_from(v: Vec<Site>) -> Result<Self> {
        Config::new(v)
    }
}

impl From<Config> for Vec<Site> {
    fn from(c: Config) -> Self {
        c.sites
    }
}

impl Config {
    pub fn new(mut sites: Vec<Site>) -> Result<Self> {
        if sites.is_empty() {
            return Err(HatError::InvalidInput("empty configuration".into()));
        }
        for s in &sites {
            s.check()?;
        }
        sites.sort_unstable();
        if let Some(w) = sites.windows(2).find(|w| w[0] == w[1]) {
            return Err(HatError::InvalidInput(format!("duplicate site {}", w[0])));
        }
        Ok(Config { sites })
    }

    pub fn from_pairs(pairs: &[(i64, i64)]) -> Result<Self> {
        Config::new(pairs.iter().map(|&p| p.into()).collect())
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn contains(&self, s: Site) -> bool {
        self.sites.binary_search(&s).is_ok()
    }

    pub fn index_of(&self, s: Site) -> Option<usize> {
        self.sites.binary_search(&s).ok()
    }

    /// Moves the site at `from` to `to`, keeping the ordering.
    pub fn moved(&self, from: Site, to: Site) -> Result<Config> {
        if from == to {
            return Ok(self.clone());
        }
        let i = self
            .index_of(from)
            .ok_or_else(|| HatError::InvalidInput(format!("{from} not in configuration")))?;
        if self.contains(to) {
            return Err(HatError::InvalidInput(format!("{to} already occupied")));
        }
        to.check()?;
        let mut sites = self.sites.clone();
        sites.remove(i);
        let j = sites.binary_search(&to).unwrap_err();
        sites.insert(j, to);
        Ok(Config { sites })
    }

    pub fn translate(&self, dx: i64, dy: i64) -> Result<Config> {
        Config::new(self.sites.iter().map(|s| s.offset(dx, dy)).collect())
    }

    pub fn without(&self, s: Site) -> Vec<Site> {
        self.sites.iter().copied().filter(|&t| t != s).collect()
    }

    pub fn bbox(&self) -> (Site, Site) {
        bbox(&self.sites)
    }

    pub fn diameter(&self) -> f64 {
        diameter(&self.sites)
    }

    /// Sum of coordinates; the centre of mass is this divided by `len`.
    pub fn coord_sum(&self) -> (i64, i64) {
        self.sites.iter().fold((0, 0), |(a, b), s| (a + s.x, b + s.y))
    }

    pub fn center_of_mass(&self) -> (f64, f64) {
        let (sx, sy) = self.coord_sum();
        let n = self.len() as f64;
        (sx as f64 / n, sy as f64 / n)
    }

    pub fn exterior_boundary(&self) -> Vec<Site> {
        exterior_boundary(&self.sites)
    }

    pub fn interior_boundary(&self) -> Vec<Site> {
        let set: HashSet<Site> = self.sites.iter().copied().collect();
        self.sites
            .iter()
            .copied()
            .filter(|s| s.neighbors().iter().any(|u| !set.contains(u)))
            .collect()
    }

    /// `(exterior, interior)` boundaries.
    pub fn boundaries(&self) -> (Vec<Site>, Vec<Site>) {
        (self.exterior_boundary(), self.interior_boundary())
    }

    /// Sites 8-adjacent to the set and connected to infinity off the set.
    pub fn star_exterior_boundary(&self) -> Vec<Site> {
        let set: HashSet<Site> = self.sites.iter().copied().collect();
        let outside = OutsideMap::new(&self.sites, &[]);
        let mut out: Vec<Site> = self
            .sites
            .iter()
            .flat_map(|s| (-1..=1).flat_map(move |dx| (-1..=1).map(move |dy| s.offset(dx, dy))))
            .filter(|u| !set.contains(u) && outside.is_outside(*u))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn exposed_sites(&self) -> Vec<Site> {
        exposed_sites(&self.sites)
    }

    /// True when no exposed site has a nearest neighbour in the configuration.
    pub fn is_iso(&self) -> bool {
        self.exposed_sites()
            .iter()
            .all(|s| s.neighbors().iter().all(|u| !self.contains(*u)))
    }

    pub fn canonical_class(&self) -> CanonicalClass {
        canonical_class(&self.sites)
    }

    pub fn class_hash(&self) -> String {
        self.canonical_class().hash()
    }

    /// Translation so that the lexicographically smallest bounding corner is the origin.
    pub fn normalized(&self) -> (Config, (i64, i64)) {
        let (lo, _) = self.bbox();
        let sites = self.sites.iter().map(|s| s.offset(-lo.x, -lo.y)).collect();
        (Config { sites }, (lo.x, lo.y))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for p in &self.sites {
            s.push_str(&format!("{} {}\n", p.x, p.y));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Config> {
        let mut sites = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty());
            let mut next = || -> Result<i64> {
                it.next()
                    .ok_or_else(|| HatError::Parse(format!("line {}: expected two integers", ln + 1)))?
                    .parse::<i64>()
                    .map_err(|e| HatError::Parse(format!("line {}: {e}", ln + 1)))
            };
            let x = next()?;
            let y = next()?;
            sites.push(Site::new(x, y));
        }
        Config::new(sites)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("sites serialize")
    }

    pub fn from_json(text: &str) -> Result<Config> {
        Ok(serde_json::from_str(text)?)
    }
}

/// L_n: the vertical segment {(0,0), ..., (0,n-1)}.
pub fn make_line(n: usize) -> Result<Config> {
    if n == 0 {
        return Err(HatError::InvalidInput("line length must be at least 1".into()));
    }
    Config::new((0..n as i64).map(|y| Site::new(0, y)).collect())
}

pub fn make_pair(d: i64) -> Result<Config> {
    if d <= 0 {
        return Err(HatError::InvalidInput("pair separation must be positive".into()));
    }
    Config::new(vec![Site::ORIGIN, Site::new(d, 0)])
}

pub fn bbox(sites: &[Site]) -> (Site, Site) {
    let mut lo = Site::new(i64::MAX, i64::MAX);
    let mut hi = Site::new(i64::MIN, i64::MIN);
    for s in sites {
        lo.x = lo.x.min(s.x);
        lo.y = lo.y.min(s.y);
        hi.x = hi.x.max(s.x);
        hi.y = hi.y.max(s.y);
    }
    (lo, hi)
}

pub fn diameter(sites: &[Site]) -> f64 {
    let mut best = 0i64;
    for (i, a) in sites.iter().enumerate() {
        for b in &sites[i + 1..] {
            best = best.max(a.sub(*b).norm2());
        }
    }
    (best as f64).sqrt()
}

pub fn dist_to_set(v: Site, set: &[Site]) -> f64 {
    set.iter()
        .map(|s| v.sub(*s).norm2())
        .min()
        .map_or(f64::INFINITY, |d| (d as f64).sqrt())
}

/// Euclidean distance between two finite sets.
pub fn set_distance(a: &[Site], b: &[Site]) -> f64 {
    a.iter().map(|&s| dist_to_set(s, b)).fold(f64::INFINITY, f64::min)
}

pub fn exterior_boundary(sites: &[Site]) -> Vec<Site> {
    let set: HashSet<Site> = sites.iter().copied().collect();
    let mut out: Vec<Site> = sites
        .iter()
        .flat_map(|s| s.neighbors())
        .filter(|u| !set.contains(u))
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Sites connected to infinity through the complement, computed by flood fill
/// of the bounding box padded by two.
pub fn exposed_sites(sites: &[Site]) -> Vec<Site> {
    let reach = OutsideMap::new(sites, &[]);
    let mut out: Vec<Site> = sites
        .iter()
        .copied()
        .filter(|s| s.neighbors().iter().any(|u| reach.is_outside(*u)))
        .collect();
    out.sort_unstable();
    out
}

/// Flood fill of the unbounded component of the complement of `sites ∪ extra`.
pub struct OutsideMap {
    lo: Site,
    w: i64,
    h: i64,
    outside: Vec<bool>,
}

impl OutsideMap {
    pub fn new(sites: &[Site], extra: &[Site]) -> Self {
        let all: Vec<Site> = sites.iter().chain(extra).copied().collect();
        let (mut lo, mut hi) = bbox(&all);
        lo = lo.offset(-2, -2);
        hi = hi.offset(2, 2);
        let w = hi.x - lo.x + 1;
        let h = hi.y - lo.y + 1;
        let idx = |s: Site| ((s.y - lo.y) * w + (s.x - lo.x)) as usize;
        let mut blocked = vec![false; (w * h) as usize];
        for s in &all {
            blocked[idx(*s)] = true;
        }
        let mut outside = vec![false; (w * h) as usize];
        let mut queue = VecDeque::new();
        let start = lo;
        outside[idx(start)] = true;
        queue.push_back(start);
        while let Some(c) = queue.pop_front() {
            for u in c.neighbors() {
                if u.x < lo.x || u.x > hi.x || u.y < lo.y || u.y > hi.y {
                    continue;
                }
                let k = idx(u);
                if !blocked[k] && !outside[k] {
                    outside[k] = true;
                    queue.push_back(u);
                }
            }
        }
        OutsideMap { lo, w, h, outside }
    }

    pub fn is_outside(&self, s: Site) -> bool {
        let (dx, dy) = (s.x - self.lo.x, s.y - self.lo.y);
        if dx < 0 || dy < 0 || dx >= self.w || dy >= self.h {
            return true;
        }
        self.outside[(dy * self.w + dx) as usize]
    }
}

/// Largest integer t >= 0 with dx^2 + t^2 < r^2, if any.
fn column_half_height(dx: i64, r: f64) -> Option<i64> {
    let s = r * r - (dx * dx) as f64;
    if s <= 0.0 {
        return None;
    }
    let mut t = s.sqrt().floor() as i64;
    while t >= 0 && ((t * t) as f64) >= s {
        t -= 1;
    }
    while (((t + 1) * (t + 1)) as f64) < s {
        t += 1;
    }
    (t >= 0).then_some(t)
}

/// D_c(r) = { y : |y - c| < r }.
pub fn disk(center: Site, r: f64) -> Vec<Site> {
    let rr = r.ceil() as i64 + 1;
    let mut out = Vec::new();
    for dx in -rr..=rr {
        if let Some(h) = column_half_height(dx, r) {
            for dy in -h..=h {
                out.push(center.offset(dx, dy));
            }
        }
    }
    out
}

/// C_c(r): the exterior boundary of D_c(r), in lexicographic order.
pub fn circle(center: Site, r: f64) -> Vec<Site> {
    let rr = r.ceil() as i64 + 1;
    let hh = |dx: i64| column_half_height(dx, r).map_or(-1, |t| t);
    let mut out = Vec::new();
    for dx in -rr..=rr {
        let hc = hh(dx);
        let m = hh(dx - 1).max(hh(dx + 1)).max(if hc >= 0 { hc + 1 } else { -1 });
        if m < 0 {
            continue;
        }
        if hc < 0 {
            for dy in -m..=m {
                out.push(center.offset(dx, dy));
            }
        } else {
            for dy in (-m..=-(hc + 1)).chain(hc + 1..=m) {
                out.push(center.offset(dx, dy));
            }
        }
    }
    out
}

/// Sites within Euclidean distance `< d` of the set.
pub fn thicken(sites: &[Site], d: f64) -> Vec<Site> {
    let (lo, hi) = bbox(sites);
    let pad = d.ceil() as i64 + 1;
    let d2 = d * d;
    let mut out = Vec::new();
    for x in lo.x - pad..=hi.x + pad {
        for y in lo.y - pad..=hi.y + pad {
            let v = Site::new(x, y);
            if sites.iter().any(|s| (v.sub(*s).norm2() as f64) < d2) {
                out.push(v);
            }
        }
    }
    out
}

/// The eight symmetries of the square lattice fixing the origin.
pub const DIHEDRAL: [fn(Site) -> Site; 8] = [
    |s| Site::new(s.x, s.y),
    |s| Site::new(-s.x, s.y),
    |s| Site::new(s.x, -s.y),
    |s| Site::new(-s.x, -s.y),
    |s| Site::new(s.y, s.x),
    |s| Site::new(-s.y, s.x),
    |s| Site::new(s.y, -s.x),
    |s| Site::new(-s.y, -s.x),
];

/// Representative of a configuration modulo translations and lattice symmetries.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CanonicalClass(pub Vec<Site>);

impl CanonicalClass {
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for s in &self.0 {
            h.update(format!("{} {}\n", s.x, s.y).as_bytes());
        }
        hex::encode(&h.finalize()[..8])
    }
}

pub fn canonical_class(sites: &[Site]) -> CanonicalClass {
    let mut best: Option<Vec<Site>> = None;
    for g in DIHEDRAL {
        let mut img: Vec<Site> = sites.iter().map(|&s| g(s)).collect();
        let (lo, _) = bbox(&img);
        for s in img.iter_mut() {
            *s = s.offset(-lo.x, -lo.y);
        }
        img.sort_unstable();
        if best.as_ref().is_none_or(|b| img < *b) {
            best = Some(img);
        }
    }
    CanonicalClass(best.unwrap_or_default())
}
