//! Exit distributions of a walk started at the centre of a lattice square.
//!
//! For the square of half-width h the exit law on one side has the discrete
//! sine-series form
//!   H(j) = (1/2h) sum_{k odd} (-1)^{(k-1)/2} sin(k pi (j+h) / 2h) / cosh(mu_k h),
//! with cosh mu_k = 2 - cos(k pi / 2h). Corners are never hit first.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::markov::{AbsorbingChain, Target};

/// Half-widths 2^1 ..= 2^MAX_LEVEL are available.
pub const MAX_LEVEL: u32 = 17;

#[derive(Clone, Debug)]
pub struct SquareExit {
    pub half: i64,
    /// Cumulative law of the side offset j in -(h-1)..=(h-1).
    cdf: Vec<f64>,
}

/// Exit probabilities along one side, for j = -(h-1)..=(h-1).
pub fn side_law(h: i64) -> Vec<f64> {
    let n = (2 * h) as f64;
    let mut weights = Vec::new();
    let mut k = 1i64;
    while k < 2 * h {
        let theta = k as f64 * PI / n;
        // acosh(1 + x) with x = 1 - cos(theta), kept accurate for small theta
        let x = 2.0 * (0.5 * theta).sin().powi(2);
        let mu = (x + (x * (2.0 + x)).sqrt()).ln_1p();
        let damp = 1.0 / (mu * h as f64).cosh();
        if damp < 1e-22 {
            break;
        }
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        weights.push((theta, sign * damp));
        k += 2;
    }
    (-(h - 1)..=(h - 1))
        .map(|j| {
            let m = (j + h) as f64;
            let s: f64 = weights.iter().map(|&(theta, wgt)| (theta * m).sin() * wgt).sum();
            (s / n).max(0.0)
        })
        .collect()
}

impl SquareExit {
    pub fn new(h: i64) -> Self {
        assert!(h >= 1);
        let law = side_law(h);
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = law
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        let tot = acc;
        for c in cdf.iter_mut() {
            *c /= tot;
        }
        SquareExit { half: h, cdf }
    }

    /// Exit offset from the centre given a side in 0..4 and a uniform in [0,1).
    pub fn sample(&self, side: u32, u: f64) -> (i64, i64) {
        let idx = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        let j = idx as i64 - (self.half - 1);
        match side {
            0 => (self.half, j),
            1 => (-self.half, j),
            2 => (j, self.half),
            _ => (j, -self.half),
        }
    }
}

/// Cached exits for half-widths 2^1 ..= 2^MAX_LEVEL, indexed by level - 1.
pub fn square_exits() -> &'static [SquareExit] {
    static EXITS: OnceLock<Vec<SquareExit>> = OnceLock::new();
    EXITS.get_or_init(|| (1..=MAX_LEVEL).map(|l| SquareExit::new(1 << l)).collect())
}

/// Side law from an absorbing-chain solve on the square interior; for checking.
pub fn side_law_dense(h: i64) -> Vec<f64> {
    let w = 2 * h - 1;
    let idx = |x: i64, y: i64| ((y + h - 1) * w + (x + h - 1)) as usize;
    let mut chain = AbsorbingChain::new((w * w) as usize, (2 * h - 1) as usize + 1);
    for x in -(h - 1)..=(h - 1) {
        for y in -(h - 1)..=(h - 1) {
            for (dx, dy) in crate::lattice::DIRS {
                let (u, v) = (x + dx, y + dy);
                let t = if u.abs() < h && v.abs() < h {
                    Target::Transient(idx(u, v))
                } else if u == h {
                    Target::Absorbing((v + h - 1) as usize)
                } else {
                    Target::Absorbing((2 * h - 1) as usize)
                };
                chain.add(idx(x, y), t, 0.25);
            }
        }
    }
    let p = chain.absorption_from(idx(0, 0));
    p[..(2 * h - 1) as usize].to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_is_one_step() {
        assert!((side_law(1)[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn side_mass_is_a_quarter() {
        for h in [2, 16, 1024, 1 << 17] {
            let s: f64 = side_law(h).iter().sum();
            assert!((s - 0.25).abs() < 1e-12, "h={h} sum={s}");
        }
    }
}
