//! Diamond spiral sets whose origin is reachable only through a long corridor.
//!
//! Walls are diagonal lines of sites, which block nearest-neighbour walks while
//! costing one site per two corridor steps. In rotated coordinates u = x + y,
//! v = x - y the wall is a square spiral of pitch 3 (first leg of length 1)
//! starting at the origin, and A_n consists of its first n lattice points.

use serde::Serialize;

use super::{harmonic_measure_via_cut, shortest_outside_path};
use crate::error::{HatError, Result};
use crate::lattice::{Config, Site};
use crate::potential::PotentialTable;

const PITCH: i64 = 3;

#[derive(Clone, Debug)]
pub struct Spiral {
    pub sites: Config,
    /// Shortest corridor path, ending at the origin.
    pub path: Vec<Site>,
}

impl Spiral {
    pub fn gamma_len(&self) -> usize {
        self.path.len()
    }
}

fn spiral_points(n: usize) -> Vec<Site> {
    let dirs = [(1, 0), (0, 1), (-1, 0), (0, -1)];
    let mut out = vec![Site::ORIGIN];
    let (mut u, mut v) = (0i64, 0i64);
    let mut seg = 0usize;
    while out.len() < n {
        let (du, dv) = dirs[seg % 4];
        let len = 1 + PITCH * (seg as i64 / 2);
        for _ in 0..len {
            u += du;
            v += dv;
            if (u - v).rem_euclid(2) == 0 && out.len() < n {
                out.push(Site::new((u + v) / 2, (u - v) / 2));
            }
        }
        seg += 1;
    }
    out
}

pub fn build_spiral(n: usize) -> Result<Spiral> {
    if n == 0 {
        return Err(HatError::InvalidInput("spiral needs at least one site".into()));
    }
    let sites = Config::new(spiral_points(n))?;
    let path = shortest_outside_path(&sites, Site::ORIGIN).unwrap_or_else(|| vec![Site::ORIGIN]);
    Ok(Spiral { sites, path })
}

#[derive(Clone, Debug, Serialize)]
pub struct SpiralPoint {
    pub n: usize,
    pub gamma_len: usize,
    pub harmonic: f64,
    /// -log(H) / n
    pub rate: f64,
}

pub fn spiral_point(table: &PotentialTable, n: usize) -> Result<SpiralPoint> {
    let s = build_spiral(n)?;
    let h = harmonic_measure_via_cut(table, &s.sites, Site::ORIGIN)?;
    Ok(SpiralPoint {
        n,
        gamma_len: s.gamma_len(),
        harmonic: h,
        rate: -h.ln() / n as f64,
    })
}
