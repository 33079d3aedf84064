//! The fifteen acceptance criteria, run in order. Each writes one PASS/FAIL line
//! straight to stderr so the lines show up without --nocapture.

use std::collections::HashSet;
use std::f64::consts::FRAC_PI_4;
use std::io::Write;
use std::time::{Duration, Instant};

use hat_core::harmonic::{harmonic_measure, spiral_limit_rate, spiral_point, tunnel_value};
use hat_core::hat::{activation, mc_transport, transition_kernel, transport_distribution, McOptions, Stepper};
use hat_core::lattice::{make_line, make_pair};
use hat_core::potential::audit_kernel_bounds;
use hat_core::{default_table, Config, Site};
use hatlab::audits::{
    dual_formula_audit, escape_circle_audit, hit_ratio_audit, random_nonsolitary, rectangle_audit, two_point_audit,
};
use hatlab::experiments::{collapse_scaling, diffusivity, CollapseParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Line {
    id: usize,
    passed: bool,
    detail: String,
}

fn report(id: usize, name: &str, start: Instant, limit: Option<Duration>, passed: bool, detail: String) -> Line {
    let took = start.elapsed();
    let in_time = limit.is_none_or(|l| took <= l);
    let passed = passed && in_time;
    let detail = format!(
        "{detail} [{:.1}s{}]",
        took.as_secs_f64(),
        if in_time { "" } else { ", over budget" }
    );
    let _ = writeln!(
        std::io::stderr(),
        "{} {id:>2} {name}: {detail}",
        if passed { "PASS" } else { "FAIL" }
    );
    Line { id, passed, detail }
}

fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

fn two_point_closed_form() -> Line {
    let t0 = Instant::now();
    let it = two_point_audit(default_table(), 200, 101).unwrap();
    report(1, "two-point closed form", t0, secs(5), it.passed, it.detail)
}

fn dual_computation() -> Line {
    let t0 = Instant::now();
    let it = dual_formula_audit(default_table(), 100, 102).unwrap();
    report(2, "harmonic measure two ways", t0, secs(30), it.passed, it.detail)
}

fn exposure_equivalence() -> Line {
    let t0 = Instant::now();
    let t = default_table();
    let cells: Vec<Site> = (0..5).flat_map(|x| (0..5).map(move |y| Site::new(x, y))).collect();
    let mut seen = HashSet::new();
    let (mut checked, mut bad) = (0usize, 0usize);
    for mask in 1u32..(1 << 25) {
        if mask.count_ones() > 4 {
            continue;
        }
        let sites: Vec<Site> = (0..25).filter(|i| mask >> i & 1 == 1).map(|i| cells[i]).collect();
        let a = Config::new(sites).unwrap();
        if !seen.insert(a.canonical_class()) {
            continue;
        }
        let h = harmonic_measure(t, &a).unwrap();
        let exposed: HashSet<Site> = a.exposed_sites().into_iter().collect();
        checked += 1;
        if a.sites()
            .iter()
            .zip(&h)
            .any(|(s, v)| (*v > 1e-12) != exposed.contains(s))
        {
            bad += 1;
        }
    }
    report(
        3,
        "exposure equivalence",
        t0,
        secs(120),
        bad == 0,
        format!("{checked} classes, {bad} mismatches"),
    )
}

fn normalization() -> Line {
    let t0 = Instant::now();
    let t = default_table();
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let (mut states, mut worst) = (0, 0.0f64);
    while states < 100 {
        let u = random_nonsolitary(&mut rng, 6, 5);
        if u.is_iso() {
            continue;
        }
        let k = transition_kernel(t, &u).unwrap();
        worst = worst.max((k.activation.iter().sum::<f64>() - 1.0).abs());
        for row in &k.rows {
            worst = worst.max((row.probs.iter().sum::<f64>() - 1.0).abs());
        }
        states += 1;
    }
    report(
        4,
        "normalization",
        t0,
        None,
        worst <= 1e-8,
        format!("max row error {worst:.2e}"),
    )
}

fn pair_collapse() -> Line {
    let t0 = Instant::now();
    let t = default_table();
    let mut ok = true;
    let mut parts = Vec::new();
    for d in [10, 100, 1000] {
        let u = make_pair(d).unwrap();
        let survivor = Site::new(d, 0);
        let row = transport_distribution(t, &u, Site::ORIGIN).unwrap();
        let mass: f64 = row
            .targets
            .iter()
            .zip(&row.probs)
            .filter(|(y, _)| y.is_adjacent(survivor))
            .map(|(_, p)| p)
            .sum();
        let mut rng = ChaCha8Rng::seed_from_u64(105 + d as u64);
        let mut stepper = Stepper::new(t);
        let hits = (0..10_000)
            .filter(|_| {
                let (x, y) = stepper.sample(&u, &mut rng).unwrap();
                u.moved(x, y).unwrap().diameter() == 1.0
            })
            .count();
        ok &= hits == 10_000 && (mass - 1.0).abs() < 1e-12;
        parts.push(format!("d={d}: {hits}/10000, adjacent mass {mass:.15}"));
    }
    report(5, "pair collapse", t0, None, ok, parts.join("; "))
}

fn line_self_transition() -> Line {
    let t0 = Instant::now();
    let t = default_table();
    let vals: Vec<f64> = (2..=6)
        .map(|n| transition_kernel(t, &make_line(n).unwrap()).unwrap().self_transition())
        .collect();
    let ok = vals.iter().all(|v| *v >= 0.25);
    report(6, "line self-transition", t0, None, ok, format!("{vals:.4?}"))
}

fn far_circle_escape() -> Line {
    let t0 = Instant::now();
    let it = escape_circle_audit(default_table(), 50, 107, 4.0).unwrap();
    report(
        7,
        "escape to a far circle",
        t0,
        secs(300),
        it.passed,
        format!("{} violations, {}", it.violations, it.detail),
    )
}

fn circle_ratio_audit() -> Line {
    let t0 = Instant::now();
    let it = hit_ratio_audit(default_table(), 10.0, 1000.0, 16, 108).unwrap();
    report(8, "circle hitting ratios", t0, secs(60), it.passed, it.detail)
}

fn spiral() -> Line {
    let t0 = Instant::now();
    let worst = (3..=60)
        .map(|len| {
            let v = tunnel_value(len).unwrap();
            (v.solved - v.closed).abs()
        })
        .fold(0.0, f64::max);
    let sp = spiral_point(default_table(), 40).unwrap();
    let reference = spiral_limit_rate();
    let ratio = sp.rate / reference;
    let ok = worst <= 1e-12 && (0.8..=1.2).contains(&ratio);
    let detail = format!(
        "tunnel max error {worst:.2e}; n=40 rate {:.4} vs {reference:.4} (ratio {ratio:.4}, corridor {})",
        sp.rate, sp.gamma_len
    );
    report(9, "spiral", t0, secs(120), ok, detail)
}

fn mc_consistency() -> Line {
    let t0 = Instant::now();
    let u = Config::from_pairs(&[(0, 0), (1, 0), (3, 2)]).unwrap();
    let x = Site::new(3, 2);
    let row = transport_distribution(default_table(), &u, x).unwrap();
    let mc = mc_transport(&u, x, 1_000_000, 110, McOptions::default()).unwrap();
    let tv = mc.tv_distance(&row);
    report(
        10,
        "Monte Carlo transport",
        t0,
        secs(300),
        tv <= 0.01,
        format!("TV {tv:.5} at {} samples", mc.samples),
    )
}

fn long_run() -> (Line, Line) {
    let t0 = Instant::now();
    let s = diffusivity(default_table(), 3, 1_000_000, 1, 1, 1000, 111).unwrap();
    let ok = s.z_mean.0.abs() <= 3.0
        && s.z_mean.1.abs() <= 3.0
        && s.z_offdiag.abs() <= 3.0
        && s.z_diag.abs() <= 3.0
        && s.chi2.is_finite()
        && s.chi2 > 0.0
        && (s.msd_exponent - 1.0).abs() <= 0.15;
    let detail = format!(
        "z mean ({:.2}, {:.2}), z offdiag {:.2}, z diag {:.2}, chi2 {:.5}, msd exponent {:.4}",
        s.z_mean.0, s.z_mean.1, s.z_offdiag, s.z_diag, s.chi2, s.msd_exponent
    );
    let a = report(11, "diffusivity properties", t0, secs(1200), ok, detail);
    let t1 = Instant::now();
    let r = &s.reports[0];
    let b = report(
        12,
        "Kac statistic",
        t1,
        None,
        (0.9..=1.1).contains(&r.kac),
        format!("{:.5} over {} visits", r.kac, r.visits),
    );
    (a, b)
}

fn collapse() -> Line {
    let t0 = Instant::now();
    let mut p = CollapseParams::defaults(3);
    p.d_list = (5..=10).map(|k| 1i64 << k).collect();
    p.r_stop = 5.0;
    p.replicas = 16_384;
    let s = collapse_scaling(default_table(), &p, 113).unwrap();
    let missing: usize = s.medians.iter().map(|m| m.2).sum();
    let ok = s.nondecreasing && s.exponent <= 2.5 && missing == 0;
    let meds: Vec<String> = s.medians.iter().map(|(d, m, _)| format!("{d}:{m}")).collect();
    report(
        13,
        "collapse scaling",
        t0,
        secs(1800),
        ok,
        format!("medians {}, p = {:.4}", meds.join(" "), s.exponent),
    )
}

fn kernel_audits() -> Line {
    let t0 = Instant::now();
    let a = audit_kernel_bounds(default_table(), 10_000, 114);
    let bad: Vec<&str> = a
        .checks
        .iter()
        .filter(|c| c.violations > 0 || c.samples == 0)
        .map(|c| c.name)
        .collect();
    let total: usize = a.checks.iter().map(|c| c.samples).sum();
    report(
        14,
        "potential kernel audits",
        t0,
        None,
        bad.is_empty(),
        format!("{} items, {total} samples, failing {bad:?}", a.checks.len()),
    )
}

fn rectangles() -> Line {
    let t0 = Instant::now();
    let (it, _) = rectangle_audit(24.0, &[24.0, 48.0, 96.0], &[0.0, FRAC_PI_4]).unwrap();
    report(15, "rectangle exit", t0, secs(600), it.passed, it.detail)
}

#[test]
fn acceptance() {
    // the activation call warms the shared kernel table outside any timed criterion
    activation(default_table(), &make_pair(1).unwrap()).unwrap();
    // libtest has already written "test acceptance ... " without a newline
    let _ = writeln!(std::io::stderr());
    let mut lines = vec![
        two_point_closed_form(),
        dual_computation(),
        exposure_equivalence(),
        normalization(),
        pair_collapse(),
        line_self_transition(),
        far_circle_escape(),
        circle_ratio_audit(),
        spiral(),
        mc_consistency(),
    ];
    let (a, b) = long_run();
    lines.extend([a, b, collapse(), kernel_audits(), rectangles()]);
    let failed: Vec<String> = lines
        .iter()
        .filter(|l| !l.passed)
        .map(|l| format!("{}: {}", l.id, l.detail))
        .collect();
    assert!(failed.is_empty(), "failing criteria:\n{}", failed.join("\n"));
}
