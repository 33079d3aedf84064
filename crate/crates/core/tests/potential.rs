use std::f64::consts::{FRAC_PI_2, PI};

use hat_core::potential::{
    asymptotic, audit_kernel_bounds, build_table, build_table_with_bits, default_table, kernel_prime, working_bits,
    KAPPA, LAMBDA,
};
use hat_core::Site;
use proptest::prelude::*;

/// a(x) on a (2h+1)^2 grid: harmonic off the origin, a(o) = 0, asymptotic values on
/// the outer frame. Conjugate gradients on the 5-point Laplacian.
fn grid_oracle(h: i64) -> impl Fn(i64, i64) -> f64 {
    let n = (2 * h + 1) as usize;
    let idx = move |x: i64, y: i64| ((y + h) as usize) * n + (x + h) as usize;
    let fixed = |x: i64, y: i64| x.abs() == h || y.abs() == h || (x == 0 && y == 0);
    let mut bval = vec![0.0; n * n];
    for y in -h..=h {
        for x in -h..=h {
            if fixed(x, y) && (x, y) != (0, 0) {
                bval[idx(x, y)] = asymptotic(x, y);
            }
        }
    }
    // A u = b with A = 4I - (free neighbours), b = sum of fixed neighbours
    let apply = |u: &[f64], out: &mut [f64]| {
        for y in -h..=h {
            for x in -h..=h {
                let i = idx(x, y);
                if fixed(x, y) {
                    out[i] = 0.0;
                    continue;
                }
                let mut s = 4.0 * u[i];
                for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                    if !fixed(x + dx, y + dy) {
                        s -= u[idx(x + dx, y + dy)];
                    }
                }
                out[i] = s;
            }
        }
    };
    let mut b = vec![0.0; n * n];
    for y in -h..=h {
        for x in -h..=h {
            if fixed(x, y) {
                continue;
            }
            for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                if fixed(x + dx, y + dy) {
                    b[idx(x, y)] += bval[idx(x + dx, y + dy)];
                }
            }
        }
    }
    let mut u = vec![0.0; n * n];
    let mut r = b.clone();
    let mut p = r.clone();
    let mut ap = vec![0.0; n * n];
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    for _ in 0..20 * n {
        apply(&p, &mut ap);
        let alpha = rr / p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
        for i in 0..n * n {
            u[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr2: f64 = r.iter().map(|v| v * v).sum();
        if rr2.sqrt() < 1e-13 {
            break;
        }
        for i in 0..n * n {
            p[i] = r[i] + rr2 / rr * p[i];
        }
        rr = rr2;
    }
    for i in 0..n * n {
        u[i] += bval[i];
    }
    move |x, y| u[idx(x, y)]
}

#[test]
fn small_values_match_grid_oracle() {
    let t = default_table();
    let g = grid_oracle(100);
    assert_eq!(t.kernel(0, 0), 0.0);
    assert!((t.kernel(1, 0) - 1.0).abs() < 1e-12);
    assert!((g(1, 0) - 1.0).abs() < 1e-6, "oracle a(1,0) = {}", g(1, 0));
    assert!((t.kernel(1, 1) - 4.0 / PI).abs() < 1e-13);
    assert!((g(1, 1) - 4.0 / PI).abs() < 1e-6);
    assert!((t.kernel(2, 0) - (4.0 - 8.0 / PI)).abs() < 1e-13);
    assert!((g(2, 0) - (4.0 - 8.0 / PI)).abs() < 1e-6);
    for (x, y) in [(3, 1), (7, 5), (20, 0), (40, 33)] {
        assert!((t.kernel(x, y) - g(x, y)).abs() < 1e-6, "({x},{y})");
    }
}

#[test]
fn constants() {
    assert!(KAPPA > 1.02 && KAPPA < 1.03);
    assert_eq!(kernel_prime(1.0), KAPPA);
    assert!((kernel_prime(FRAC_PI_2.exp()) - (1.0 + KAPPA)).abs() < 1e-15);
}

#[test]
fn far_field() {
    let t = default_table();
    let r = 1e6;
    assert!((t.kernel(1_000_000, 0) - kernel_prime(r)).abs() <= 7e-14);
    assert!((t.kernel(600_000, 800_000) - kernel_prime(r)).abs() <= 7e-14);
    // table and expansion agree where both apply
    for (x, y) in [(100, 0), (71, 71), (90, 43), (256, 0), (200, 160)] {
        assert!((t.kernel(x, y) - asymptotic(x, y)).abs() < 1e-11, "({x},{y})");
    }
}

#[test]
fn harmonic_and_bounded() {
    let t = default_table();
    assert!(t.harmonicity_residual() <= 1e-10);
    let r0 = t.radius() as i64;
    for x in 0..=r0 {
        for y in 0..=x {
            let r = ((x * x + y * y) as f64).sqrt();
            if r >= 10.0 && r <= r0 as f64 {
                assert!(
                    (t.kernel(x, y) - kernel_prime(r)).abs() <= LAMBDA / (r * r),
                    "({x},{y})"
                );
            }
        }
    }
}

#[test]
fn monotone_along_rays() {
    let t = default_table();
    for k in 1..300 {
        assert!(t.kernel(k + 1, 0) > t.kernel(k, 0));
        assert!(t.kernel(k + 1, k + 1) > t.kernel(k, k));
    }
}

#[test]
fn audit_items() {
    let t = default_table();
    let audit = audit_kernel_bounds(t, 500, 11);
    for c in &audit.checks {
        assert_eq!(c.violations, 0, "{} worst slack {}", c.name, c.worst_slack);
        assert!(c.samples > 0);
    }
    assert!(audit.passed());
    // log lower bound at |x| = 2
    assert!(t.kernel(2, 0) - 2.0 / PI * 2f64.ln() > 0.0);
    // annulus difference with R = 10 r, r = 10
    let (x, y) = (Site::new(100, 0), Site::new(10, 0));
    let diff = t.at(x) - t.at(y);
    assert!(diff >= 0.56 * 10f64.ln() && diff <= 10f64.ln());
}

#[test]
fn radius_range() {
    assert!(build_table(3).is_err());
    assert!(build_table(5000).is_err());
    assert!(build_table(4).is_ok());
}

#[test]
fn extra_precision_changes_nothing() {
    let a = build_table(96).unwrap();
    let b = build_table_with_bits(96, working_bits(96) + 64).unwrap();
    for x in 0..=96 {
        for y in 0..=x {
            assert_eq!(a.kernel(x, y), b.kernel(x, y));
        }
    }
    // too few bits shows up as a broken residual
    let c = build_table_with_bits(96, 64).unwrap();
    let r = c.harmonicity_residual();
    assert!(!(r <= 1e-6));
}

#[test]
fn cache_round_trip() {
    let t = build_table(40).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("k.bin");
    t.save(&path).unwrap();
    let u = hat_core::PotentialTable::load(&path).unwrap();
    assert_eq!(u.radius(), 40);
    for x in -45..=45 {
        for y in -45..=45 {
            assert_eq!(t.kernel(x, y), u.kernel(x, y));
        }
    }
    std::fs::write(&path, b"garbage!garbage!").unwrap();
    assert!(hat_core::PotentialTable::load(&path).is_err());

    let mut buf = Vec::new();
    t.write_triples(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("0 0 0\n1 0 1\n"));
}

proptest! {
    #[test]
    fn eightfold_symmetry(x in -400i64..400, y in -400i64..400) {
        let t = default_table();
        let a = t.kernel(x, y);
        for (u, v) in [(-x, y), (x, -y), (y, x), (-y, x), (y, -x), (-y, -x), (-x, -y)] {
            prop_assert_eq!(a, t.kernel(u, v));
        }
    }
}
