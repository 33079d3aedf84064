//! Potential kernel a(x) of simple random walk on Z^2.
//!
//! Exact values come from the diagonal closed form and harmonic continuation,
//! carried out in big-integer fixed point because the continuation amplifies
//! rounding by roughly three bits per unit of radius.

use std::f64::consts::{LN_2, PI};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{HatError, Result};
use crate::lattice::{circle, Site};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
/// (2 gamma + 3 log 2) / pi.
pub const KAPPA: f64 = (2.0 * EULER_GAMMA + 3.0 * LN_2) / PI;
/// Uniform constant in |a(x) - (2/pi) log|x| - kappa| <= LAMBDA / |x|^2.
pub const LAMBDA: f64 = 0.06882;

pub const MIN_RADIUS: usize = 4;
pub const MAX_RADIUS: usize = 4096;
pub const DEFAULT_RADIUS: usize = 256;

const CACHE_MAGIC: &[u8; 8] = b"HATPOTK\0";
const CACHE_VERSION: u32 = 1;

/// a'(r) = (2/pi) log r + kappa.
pub fn kernel_prime(r: f64) -> f64 {
    2.0 / PI * r.ln() + KAPPA
}

/// Asymptotic expansion through order |x|^-4.
pub fn asymptotic(x: i64, y: i64) -> f64 {
    let (xf, yf) = (x as f64, y as f64);
    let r2 = xf * xf + yf * yf;
    let c2 = (xf * xf - yf * yf) / r2;
    let c4 = 2.0 * c2 * c2 - 1.0;
    let c8 = 2.0 * c4 * c4 - 1.0;
    kernel_prime(r2.sqrt()) - c4 / (6.0 * PI * r2) - (18.0 * c4 + 25.0 * c8) / (120.0 * PI * r2 * r2)
}

#[derive(Clone, Debug)]
pub struct PotentialTable {
    r0: usize,
    /// Octant 0 <= y <= x <= r0, row-major in x.
    vals: Vec<f64>,
}

fn tri(x: usize, y: usize) -> usize {
    x * (x + 1) / 2 + y
}

impl PotentialTable {
    pub fn radius(&self) -> usize {
        self.r0
    }

    pub fn kernel(&self, x: i64, y: i64) -> f64 {
        let (mut a, mut b) = (x.unsigned_abs() as usize, y.unsigned_abs() as usize);
        if b > a {
            std::mem::swap(&mut a, &mut b);
        }
        if a <= self.r0 {
            self.vals[tri(a, b)]
        } else {
            asymptotic(x, y)
        }
    }

    pub fn at(&self, s: Site) -> f64 {
        self.kernel(s.x, s.y)
    }

    /// a(u - v).
    pub fn between(&self, u: Site, v: Site) -> f64 {
        self.kernel(u.x - v.x, u.y - v.y)
    }

    /// Largest |Laplacian| of the stored values away from the origin.
    pub fn harmonicity_residual(&self) -> f64 {
        let r = self.r0 as i64;
        let mut worst = 0.0f64;
        for x in 0..r {
            for y in 0..=x {
                if x == 0 && y == 0 {
                    continue;
                }
                let lap = self.kernel(x + 1, y) + self.kernel(x - 1, y) + self.kernel(x, y + 1) + self.kernel(x, y - 1)
                    - 4.0 * self.kernel(x, y);
                worst = worst.max(lap.abs());
            }
        }
        worst
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&CACHE_VERSION.to_le_bytes())?;
        w.write_all(&(self.r0 as u32).to_le_bytes())?;
        w.write_all(&(self.vals.len() as u64).to_le_bytes())?;
        for v in &self.vals {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<PotentialTable> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(HatError::Parse("not a potential kernel cache".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != CACHE_VERSION {
            return Err(HatError::Parse(format!("unsupported cache version {version}")));
        }
        r.read_exact(&mut b4)?;
        let r0 = u32::from_le_bytes(b4) as usize;
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let count = u64::from_le_bytes(b8) as usize;
        if !(MIN_RADIUS..=MAX_RADIUS).contains(&r0) || count != tri(r0, r0) + 1 {
            return Err(HatError::Parse("corrupt cache header".into()));
        }
        let mut vals = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut b8)?;
            vals.push(f64::from_le_bytes(b8));
        }
        Ok(PotentialTable { r0, vals })
    }

    /// Writes `x y a` lines for the octant points of the disk of radius r0.
    pub fn write_triples<W: Write>(&self, mut w: W) -> Result<()> {
        let r = self.r0 as i64;
        for x in 0..=r {
            for y in 0..=x {
                if x * x + y * y <= r * r {
                    writeln!(w, "{x} {y} {}", self.kernel(x, y))?;
                }
            }
        }
        Ok(())
    }
}

/// arctan(1/m) in fixed point with `bits` fractional bits.
fn arctan_inv(m: u32, bits: usize) -> BigInt {
    let one = BigInt::one() << bits;
    let m2 = BigInt::from(m) * BigInt::from(m);
    let mut power = &one / BigInt::from(m);
    let mut sum = power.clone();
    let mut k: u64 = 1;
    loop {
        power = &power / &m2;
        if power.is_zero() {
            break;
        }
        let term = &power / BigInt::from(2 * k + 1);
        if k % 2 == 1 {
            sum -= term;
        } else {
            sum += term;
        }
        k += 1;
    }
    sum
}

/// 1/pi in fixed point, via Machin's formula.
fn inv_pi_fixed(bits: usize) -> BigInt {
    let guard = 64;
    let b = bits + guard;
    let pi = (arctan_inv(5, b) * 16u32) - (arctan_inv(239, b) * 4u32);
    (BigInt::one() << (2 * bits + guard)) / pi
}

fn fixed_to_f64(v: &BigInt, bits: usize) -> f64 {
    let shifted: BigInt = v >> (bits - 60);
    // an unstable fill (too few bits) can overflow i64; let it show up as a huge value
    shifted.to_f64().unwrap_or(f64::NAN) / (1u64 << 60) as f64
}

/// Working precision, in bits, for a table of radius `r0`.
pub fn working_bits(r0: usize) -> usize {
    16 * r0 / 5 + 128
}

pub fn build_table(r0: usize) -> Result<PotentialTable> {
    build_table_with_bits(r0, working_bits(r0))
}

pub fn build_table_with_bits(r0: usize, bits: usize) -> Result<PotentialTable> {
    if !(MIN_RADIUS..=MAX_RADIUS).contains(&r0) {
        return Err(HatError::OutOfRange {
            value: r0 as f64,
            range: format!("[{MIN_RADIUS}, {MAX_RADIUS}]"),
        });
    }
    if bits < 64 {
        return Err(HatError::OutOfRange {
            value: bits as f64,
            range: "[64, inf)".into(),
        });
    }
    let one = BigInt::one() << bits;
    let inv_pi4 = inv_pi_fixed(bits) * 4u32;
    let mut vals = vec![0.0; tri(r0, r0) + 1];

    // level j holds a(y + j, y) for y = 0..=r0-j
    let mut prev2: Vec<BigInt> = Vec::with_capacity(r0 + 1);
    let mut odd_sum = BigInt::zero();
    prev2.push(BigInt::zero());
    for k in 1..=r0 {
        odd_sum += &one / BigInt::from(2 * k - 1);
        prev2.push((&odd_sum * &inv_pi4) >> bits);
    }
    let mut prev1: Vec<BigInt> = Vec::with_capacity(r0);
    prev1.push(one.clone());
    for k in 1..r0 {
        let v = (&prev2[k] << 1) - &prev1[k - 1];
        prev1.push(v);
    }
    for (y, v) in prev2.iter().enumerate() {
        vals[tri(y, y)] = fixed_to_f64(v, bits);
    }
    for (y, v) in prev1.iter().enumerate() {
        vals[tri(y + 1, y)] = fixed_to_f64(v, bits);
    }
    for j in 1..r0 {
        let len = r0 - j;
        let mut next: Vec<BigInt> = Vec::with_capacity(len);
        for y in 0..len {
            let side = if y == 0 { &prev2[1] } else { &next[y - 1] };
            let v = (&prev1[y] << 2) - &prev2[y] - &prev2[y + 1] - side;
            next.push(v);
        }
        for (y, v) in next.iter().enumerate() {
            vals[tri(y + j + 1, y)] = fixed_to_f64(v, bits);
        }
        prev2 = prev1;
        prev1 = next;
    }
    Ok(PotentialTable { r0, vals })
}

/// Shared table of radius [`DEFAULT_RADIUS`].
pub fn default_table() -> &'static PotentialTable {
    static TABLE: OnceLock<PotentialTable> = OnceLock::new();
    TABLE.get_or_init(|| build_table(DEFAULT_RADIUS).expect("default radius is admissible"))
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundCheck {
    pub name: &'static str,
    pub samples: usize,
    pub violations: usize,
    /// Smallest value of (bound - quantity); negative means a violation.
    pub worst_slack: f64,
}

impl BoundCheck {
    fn new(name: &'static str) -> Self {
        BoundCheck {
            name,
            samples: 0,
            violations: 0,
            worst_slack: f64::INFINITY,
        }
    }

    fn record(&mut self, slack: f64) {
        self.samples += 1;
        if slack < 0.0 {
            self.violations += 1;
        }
        self.worst_slack = self.worst_slack.min(slack);
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct KernelAudit {
    pub checks: Vec<BoundCheck>,
}

impl KernelAudit {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.violations == 0)
    }
}

fn site_at(center: Site, rho: f64, rng: &mut ChaCha8Rng) -> Site {
    let t = rng.random::<f64>() * 2.0 * PI;
    center.offset((rho * t.cos()).round() as i64, (rho * t.sin()).round() as i64)
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi / lo).ln()).exp()
}

fn pick<'a>(rng: &mut ChaCha8Rng, v: &'a [Site]) -> &'a Site {
    &v[rng.random_range(0..v.len())]
}

/// Checks the kernel inequalities used throughout the analysis on random admissible inputs.
pub fn audit_kernel_bounds(table: &PotentialTable, samples: usize, seed: u64) -> KernelAudit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r0 = table.radius() as f64;
    let a = |s: Site| table.at(s);
    let mut checks = Vec::new();

    let mut c = BoundCheck::new("monotone_1.06");
    while c.samples < samples {
        let x = site_at(Site::ORIGIN, log_uniform(&mut rng, 2.0, r0 / 1.2), &mut rng);
        let y = site_at(Site::ORIGIN, x.norm() * (1.06 + 0.3 * rng.random::<f64>()), &mut rng);
        if x.norm() < 2.0 || y.norm() < 1.06 * x.norm() {
            continue;
        }
        c.record(a(y) - a(x));
    }
    checks.push(c);

    let mut lower = BoundCheck::new("log_lower");
    let mut upper = BoundCheck::new("log_upper");
    while lower.samples < samples {
        let x = site_at(Site::ORIGIN, log_uniform(&mut rng, 1.0, r0), &mut rng);
        let r = x.norm();
        if r < 1.0 {
            continue;
        }
        lower.record(a(x) - 2.0 / PI * r.ln());
        if r >= 2.0 {
            upper.record(4.0 * r.ln() - a(x));
        }
    }
    checks.push(lower);
    checks.push(upper);

    let mut c = BoundCheck::new("circle_oscillation");
    while c.samples < samples {
        let big_r = log_uniform(&mut rng, 100.0, 10.0 * r0);
        let r = 1.0 + rng.random::<f64>() * (big_r / 100.0 - 1.0);
        let y = site_at(Site::ORIGIN, big_r * (1.0 + 2.0 * rng.random::<f64>()), &mut rng);
        if y.norm() < big_r {
            continue;
        }
        let cr = circle(Site::ORIGIN, r);
        let z = *pick(&mut rng, &cr);
        let z2 = *pick(&mut rng, &cr);
        c.record(4.0 / PI - (a(y.sub(z)) - a(y.sub(z2))).abs());
    }
    checks.push(c);

    let mut c = BoundCheck::new("ratio_log_k");
    while c.samples < samples {
        let k = log_uniform(&mut rng, 2.0, 64.0);
        let x = site_at(Site::ORIGIN, log_uniform(&mut rng, 1.0, r0), &mut rng);
        let y = site_at(Site::ORIGIN, x.norm() * log_uniform(&mut rng, 1.0 / k, k), &mut rng);
        let (nx, ny) = (x.norm(), y.norm());
        if nx < 1.0 || ny < 1.0 || ny / nx > k || nx / ny > k {
            continue;
        }
        c.record(k.ln() - (a(y) - a(x)));
    }
    checks.push(c);

    let mut c = BoundCheck::new("gradient_0.7");
    while c.samples < samples {
        let y = site_at(Site::ORIGIN, log_uniform(&mut rng, 10.0, r0 / 8.0), &mut rng);
        let x = site_at(Site::ORIGIN, y.norm() * log_uniform(&mut rng, 8.0, 80.0), &mut rng);
        if y.norm() < 10.0 || x.norm() < 8.0 * y.norm() {
            continue;
        }
        let s = Site::new(x.x + y.x, x.y + y.y);
        c.record(0.7 * y.norm() / x.norm() - (a(s) - a(x)).abs());
    }
    checks.push(c);

    let mut lo = BoundCheck::new("annulus_lower_0.56");
    let mut hi = BoundCheck::new("annulus_upper");
    while lo.samples < samples {
        let r = 10.0 + rng.random::<f64>() * (r0 / 2.0 - 10.0).max(0.0);
        let big_r = r * log_uniform(&mut rng, 10.0, 100.0);
        let cbig = circle(Site::ORIGIN, big_r);
        let csmall = circle(Site::ORIGIN, r);
        let x = *pick(&mut rng, &cbig);
        let y = *pick(&mut rng, &csmall);
        let diff = a(x) - a(y);
        let l = (big_r / r).ln();
        lo.record(diff - 0.56 * l);
        hi.record(l - diff);
    }
    checks.push(lo);
    checks.push(hi);

    let mut c = BoundCheck::new("circle_average");
    let bound_c = 5.0 / (2.0 * PI) + 2.0 * LAMBDA;
    while c.samples < samples {
        let x = site_at(Site::ORIGIN, rng.random::<f64>() * 20.0, &mut rng);
        let rmin = 2.0 * (x.norm() + 1.0);
        let r = log_uniform(&mut rng, rmin, (2.0 * r0).max(rmin * 1.01));
        let bound = bound_c * (x.norm() + 1.0) / r;
        let ap = kernel_prime(r);
        let worst = circle(x, r).iter().map(|&y| (a(y) - ap).abs()).fold(0.0, f64::max);
        c.record(bound - worst);
    }
    checks.push(c);

    let mut c = BoundCheck::new("lambda");
    while c.samples < samples {
        let x = site_at(Site::ORIGIN, log_uniform(&mut rng, 1.0, r0), &mut rng);
        let r = x.norm();
        if r < 1.0 {
            continue;
        }
        c.record(LAMBDA / (r * r) - (a(x) - kernel_prime(r)).abs());
    }
    checks.push(c);

    KernelAudit { checks }
}
