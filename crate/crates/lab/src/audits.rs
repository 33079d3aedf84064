//! Exact checks of the potential-theory inequalities on sampled inputs.

use std::f64::consts::{FRAC_PI_4, PI};

use hat_core::harmonic::{
    circle_hitting_ratio, escape_circle_check, escape_upper_check, neighbor_formula, rectangle_exit, solve_hitting,
    two_point, SOLVER_CAP,
};
use hat_core::lattice::circle;
use hat_core::potential::audit_kernel_bounds;
use hat_core::{Config, PotentialTable, Site};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::LabError;

#[derive(Clone, Debug, Serialize)]
pub struct AuditItem {
    pub name: String,
    pub samples: usize,
    pub violations: usize,
    /// Smallest margin seen, in the units of the check; negative means violated.
    pub worst: f64,
    pub passed: bool,
    pub detail: String,
}

impl AuditItem {
    fn new(name: &str, samples: usize, violations: usize, worst: f64, detail: String) -> Self {
        AuditItem {
            name: name.into(),
            samples,
            violations,
            worst,
            passed: violations == 0 && samples > 0,
            detail,
        }
    }
}

/// `n` distinct sites drawn uniformly from the square [-half, half]^2.
pub fn random_config(rng: &mut impl Rng, n: usize, half: i64) -> Config {
    let mut sites = Vec::with_capacity(n);
    while sites.len() < n {
        let s = Site::new(rng.random_range(-half..=half), rng.random_range(-half..=half));
        if !sites.contains(&s) {
            sites.push(s);
        }
    }
    Config::new(sites).expect("distinct sites")
}

/// A random set of at most `n_max` sites containing at least one adjacent pair.
pub fn random_nonsolitary(rng: &mut impl Rng, n_max: usize, half: i64) -> Config {
    loop {
        let n = rng.random_range(2..=n_max);
        let mut c = random_config(rng, n - 1, half);
        let base = c.sites()[rng.random_range(0..c.len())];
        let (dx, dy) = hat_core::lattice::DIRS[rng.random_range(0..4)];
        let extra = base.offset(dx, dy);
        if !c.contains(extra) {
            let mut s = c.sites().to_vec();
            s.push(extra);
            c = Config::new(s).expect("distinct sites");
            return c;
        }
    }
}

/// Two-site hitting probabilities from the general solver against the closed form.
pub fn two_point_audit(table: &PotentialTable, samples: usize, seed: u64) -> Result<AuditItem, LabError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < samples {
        let x = Site::new(rng.random_range(-60..=60), rng.random_range(-60..=60));
        let y = x.offset(rng.random_range(-20..=20), rng.random_range(-20..=20));
        if y == x || y.dist(x) > 20.0 {
            continue;
        }
        let t = rng.random::<f64>() * 2.0 * PI;
        let rad = 100.0 * rng.random::<f64>().sqrt();
        let z = Site::new((rad * t.cos()).trunc() as i64, (rad * t.sin()).trunc() as i64);
        let a = Config::new(vec![x, y])?;
        let sol = solve_hitting(table, a.sites())?;
        let iy = a.index_of(y).expect("member");
        worst = worst.max((sol.eval(table, z, iy) - two_point(table, x, y, z)).abs());
        done += 1;
    }
    let v = usize::from(worst > 1e-10);
    Ok(AuditItem::new(
        "two_point",
        samples,
        v,
        1e-10 - worst,
        format!("max abs error {worst:.3e}"),
    ))
}

/// Harmonic measure from the saddle solve against the neighbour formula.
pub fn dual_formula_audit(table: &PotentialTable, samples: usize, seed: u64) -> Result<AuditItem, LabError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let n = rng.random_range(1..=8);
        let a = random_config(&mut rng, n, 6);
        let sol = solve_hitting(table, a.sites())?;
        let z0 = a.sites()[0];
        for (i, &x) in a.sites().iter().enumerate() {
            worst = worst.max((sol.harmonic_measure()[i] - neighbor_formula(table, &sol, x, z0)).abs());
        }
    }
    let v = usize::from(worst > 1e-7);
    Ok(AuditItem::new(
        "dual_formula",
        samples,
        v,
        1e-7 - worst,
        format!("max abs difference {worst:.3e}"),
    ))
}

/// Largest k <= k_max for which the circle of radius k b plus the set fits the solver.
pub fn fit_scale(center: Site, b: f64, n: usize, k_max: f64) -> f64 {
    let mut k = k_max;
    while k > 1.0 && circle(center, k * b).len() + n > SOLVER_CAP {
        k = (k * 0.9).floor().max(1.0);
    }
    k
}

/// Escape to a far circle against H_A(x) / (4 log(kb)); k = 200 scaled down to fit.
pub fn escape_circle_audit(table: &PotentialTable, samples: usize, seed: u64, b0: f64) -> Result<AuditItem, LabError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut done, mut violations, mut worst) = (0, 0, f64::INFINITY);
    let mut ks = Vec::new();
    while done < samples {
        let n = rng.random_range(2..=6);
        let a = random_config(&mut rng, n, 8);
        let b = a.diameter();
        if b < b0 {
            continue;
        }
        let k = fit_scale(a.sites()[0], b, n, 200.0);
        let x = a.sites()[rng.random_range(0..n)];
        let s = escape_circle_check(table, &a, x, k)?;
        if !s.holds_ge() {
            violations += 1;
        }
        worst = worst.min(s.lhs - s.rhs);
        ks.push(k);
        done += 1;
    }
    let kmin = ks.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(AuditItem::new(
        "escape_circle",
        samples,
        violations,
        worst,
        format!("k in [{kmin}, 200]"),
    ))
}

/// Hitting distribution of C(r) from far points relative to its harmonic measure.
pub fn hit_ratio_audit(
    table: &PotentialTable,
    r: f64,
    big_r: f64,
    points: usize,
    seed: u64,
) -> Result<AuditItem, LabError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<Site> = (0..points)
        .map(|_| {
            let t = rng.random::<f64>() * 2.0 * PI;
            let rho = big_r * (1.0 + 3.0 * rng.random::<f64>());
            Site::new((rho * t.cos()).round() as i64, (rho * t.sin()).round() as i64)
        })
        .collect();
    let ratios = circle_hitting_ratio(table, r, &xs)?;
    let lo = ratios.iter().map(|h| h.ratio).fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().map(|h| h.ratio).fold(f64::NEG_INFINITY, f64::max);
    let violations = ratios.iter().filter(|h| !(0.93..=1.04).contains(&h.ratio)).count();
    let worst = (lo - 0.93).min(1.04 - hi);
    Ok(AuditItem::new(
        "circle_hit_ratio",
        ratios.len(),
        violations,
        worst,
        format!("ratios in [{lo:.5}, {hi:.5}]"),
    ))
}

#[derive(Clone, Debug, Serialize)]
pub struct RectangleRow {
    pub phi: f64,
    pub w: f64,
    pub ell: f64,
    pub prob: f64,
    pub rate: f64,
}

/// Exit through the far end of tilted rectangles; rate = log P / (ell / w).
pub fn rectangle_rows(w: f64, ells: &[f64], phis: &[f64]) -> Result<Vec<RectangleRow>, LabError> {
    let mut out = Vec::new();
    for &phi in phis {
        for &ell in ells {
            let e = rectangle_exit(phi, w, ell)?;
            out.push(RectangleRow {
                phi,
                w,
                ell,
                prob: e.prob,
                rate: e.prob.ln() / (ell / w),
            });
        }
    }
    Ok(out)
}

/// The rate may vary by at most a factor 3 across lengths at a fixed angle.
pub fn rectangle_audit(w: f64, ells: &[f64], phis: &[f64]) -> Result<(AuditItem, Vec<RectangleRow>), LabError> {
    let rows = rectangle_rows(w, ells, phis)?;
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    let mut parts = Vec::new();
    for &phi in phis {
        let rates: Vec<f64> = rows.iter().filter(|r| r.phi == phi).map(|r| r.rate.abs()).collect();
        let lo = rates.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = rates.iter().copied().fold(0.0, f64::max);
        let spread = hi / lo;
        if !(spread <= 3.0) || rates.iter().any(|r| !r.is_finite()) {
            violations += 1;
        }
        worst = worst.min(3.0 - spread);
        parts.push(format!("phi={phi:.4}: spread {spread:.3}"));
    }
    Ok((
        AuditItem::new("rectangle_rate", phis.len(), violations, worst, parts.join("; ")),
        rows,
    ))
}

/// Escape from A \ {x} to distance rho against (log diam A + 2) / log rho.
pub fn escape_upper_audit(table: &PotentialTable, samples: usize, seed: u64) -> Result<AuditItem, LabError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut done, mut violations, mut worst) = (0, 0, f64::INFINITY);
    while done < samples {
        let n = rng.random_range(2..=5);
        let a = random_config(&mut rng, n, 4);
        let d = a.diameter();
        let rho = 2.0 * d * (1.0 + 3.0 * rng.random::<f64>());
        if rho < 4.0 {
            continue;
        }
        let x = a.sites()[rng.random_range(0..n)];
        let s = escape_upper_check(table, &a, x, rho)?;
        if !s.holds_le() {
            violations += 1;
        }
        worst = worst.min(s.rhs - s.lhs);
        done += 1;
    }
    Ok(AuditItem::new(
        "escape_upper",
        samples,
        violations,
        worst,
        String::new(),
    ))
}

/// Every audit with its default sizes.
pub fn all_audits(table: &PotentialTable, samples: usize, seed: u64) -> Result<Vec<AuditItem>, LabError> {
    let kernel = audit_kernel_bounds(table, samples, seed);
    let mut out: Vec<AuditItem> = kernel
        .checks
        .iter()
        .map(|c| AuditItem {
            name: format!("kernel_{}", c.name),
            samples: c.samples,
            violations: c.violations,
            worst: c.worst_slack,
            passed: c.violations == 0,
            detail: String::new(),
        })
        .collect();
    out.push(two_point_audit(table, 200, seed ^ 1)?);
    out.push(dual_formula_audit(table, 100, seed ^ 2)?);
    out.push(escape_circle_audit(table, 50, seed ^ 3, 4.0)?);
    out.push(hit_ratio_audit(table, 10.0, 1000.0, 16, seed ^ 4)?);
    out.push(escape_upper_audit(table, 50, seed ^ 5)?);
    out.push(rectangle_audit(24.0, &[24.0, 48.0, 96.0], &[0.0, FRAC_PI_4])?.0);
    Ok(out)
}
