//! Exit of a tilted rectangle through its far end.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{HatError, Result};
use crate::lattice::{exterior_boundary, Site};
use crate::markov::{AbsorbingChain, Target};

const EDGE_TOL: f64 = 1e-9;

/// Sites whose centres lie in the closed rectangle of width `w` around the
/// segment from -w e^{i phi} to ell e^{i phi}.
pub fn rectangle_sites(phi: f64, w: f64, ell: f64) -> Vec<Site> {
    let (c, s) = (phi.cos(), phi.sin());
    let reach = (ell.max(w) + w).ceil() as i64 + 1;
    let mut out = Vec::new();
    for x in -reach..=reach {
        for y in -reach..=reach {
            let (xf, yf) = (x as f64, y as f64);
            let along = xf * c + yf * s;
            let across = -xf * s + yf * c;
            if along >= -w - EDGE_TOL && along <= ell + EDGE_TOL && across.abs() <= w / 2.0 + EDGE_TOL {
                out.push(Site::new(x, y));
            }
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct RectangleExit {
    pub phi: f64,
    pub w: f64,
    pub ell: f64,
    pub sites: usize,
    /// P_o(tau_{boundary Rec} < tau_{boundary Rec+}).
    pub prob: f64,
}

pub fn rectangle_exit(phi: f64, w: f64, ell: f64) -> Result<RectangleExit> {
    if !(w >= 1.0 && ell >= 0.0) {
        return Err(HatError::InvalidInput("need w >= 1 and ell >= 0".into()));
    }
    let (c, s) = (phi.cos(), phi.sin());
    let mut rec = rectangle_sites(phi, w, ell);
    let key = |p: &Site| {
        let (xf, yf) = (p.x as f64, p.y as f64);
        (xf * c + yf * s, -xf * s + yf * c)
    };
    rec.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap_or(std::cmp::Ordering::Equal));
    let plus: std::collections::HashSet<Site> = rectangle_sites(phi, w, ell + w).into_iter().collect();
    let index: HashMap<Site, usize> = rec.iter().enumerate().map(|(i, p)| (*p, i)).collect();
    let start = *index
        .get(&Site::ORIGIN)
        .ok_or_else(|| HatError::InvariantViolation("origin outside the rectangle".into()))?;
    // absorbing 0: the far interface, 1: everything else
    let mut chain = AbsorbingChain::new(rec.len(), 2);
    for (i, p) in rec.iter().enumerate() {
        for u in p.neighbors() {
            let t = match index.get(&u) {
                Some(&j) => Target::Transient(j),
                None if plus.contains(&u) => Target::Absorbing(0),
                None => Target::Absorbing(1),
            };
            chain.add(i, t, 0.25);
        }
    }
    debug_assert!(exterior_boundary(&rec).iter().any(|u| plus.contains(u)));
    let prob = chain.absorption_from(start)[0];
    Ok(RectangleExit {
        phi,
        w,
        ell,
        sites: rec.len(),
        prob,
    })
}
