use std::f64::consts::{FRAC_PI_2, PI};

use hat_core::harmonic::{
    build_spiral, circle_escape, circle_hitting_ratio, escape_probability, harmonic_measure, harmonic_measure_via_cut,
    neighbor_formula, rectangle_exit, solve_hitting, solve_values, tunnel_value, two_point,
};
use hat_core::lattice::{make_line, Config, Site};
use hat_core::squares::{side_law, side_law_dense};
use hat_core::{default_table, HatError};
use proptest::prelude::*;

/// Frozen Monte Carlo oracles (walk-on-squares, far-circle starts; plain walks for escapes).
mod oracle {
    /// Hits of (0,0), (0,1), (0,2) by walks started uniformly on the circle of radius 1e4.
    pub const L3_HM_COUNTS: [u64; 3] = [1_569_452, 858_188, 1_572_360];
    /// P_{(0,0)}(reach the boundary of the 64-fattening of L3 before returning), and its s.e.
    pub const L3_ESCAPE_64: (f64, f64) = (0.135102, 0.000242);
    /// P_o(reach C(50) before returning to {o, (1,0)}), and its s.e.
    pub const PAIR_CIRCLE_50: (f64, f64) = (0.1650385, 0.000262);
}

#[test]
fn pair_measure_is_even() {
    let t = default_table();
    for d in [1, 5, 77] {
        let u = Config::from_pairs(&[(0, 0), (d, 3)]).unwrap();
        let h = harmonic_measure(t, &u).unwrap();
        assert!((h[0] - 0.5).abs() < 1e-12 && (h[1] - 0.5).abs() < 1e-12);
    }
}

#[test]
fn two_point_examples() {
    let t = default_table();
    let (x, y) = (Site::new(0, 0), Site::new(4, 0));
    assert!((two_point(t, x, y, Site::new(2, 9)) - 0.5).abs() < 1e-15);
    assert_eq!(two_point(t, x, y, y), 1.0);
    assert_eq!(two_point(t, x, y, x), 0.0);
    let sol = solve_hitting(t, &[x, y]).unwrap();
    for z in [Site::new(-3, 2), Site::new(40, -60), Site::new(5, 1)] {
        assert!((sol.eval(t, z, 1) - two_point(t, x, y, z)).abs() < 1e-12);
    }
}

#[test]
fn solution_invariants() {
    let t = default_table();
    let a = Config::from_pairs(&[(0, 0), (1, 0), (5, 2), (-3, 7), (2, 2), (9, -4)]).unwrap();
    let sol = solve_hitting(t, a.sites()).unwrap();
    let k = a.len();
    assert!((sol.harmonic_measure().iter().sum::<f64>() - 1.0).abs() < 1e-10);
    assert!(sol.harmonic_measure().iter().all(|h| *h >= -1e-10));
    for y in 0..k {
        let col: f64 = (0..k).map(|w| sol.coefficient(w, y)).sum();
        assert!(col.abs() < 1e-10);
        for (i, &z) in a.sites().iter().enumerate() {
            // the ansatz itself, not the membership shortcut in eval
            let v = sol.harmonic_measure()[y]
                + (0..k)
                    .map(|w| sol.coefficient(w, y) * t.between(z, a.sites()[w]))
                    .sum::<f64>();
            assert!((v - if i == y { 1.0 } else { 0.0 }).abs() < 1e-8);
        }
    }
    // far away the hitting law approaches the harmonic measure
    let far = sol.eval_all(t, Site::new(100_000, 3));
    for (p, h) in far.iter().zip(sol.harmonic_measure()) {
        assert!((p - h).abs() < 1e-3);
    }
    // a first-return law is a probability vector
    let fr = sol.first_return(t, Site::new(0, 0));
    assert!((fr.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    assert!(sol.residual < 1e-10);
}

#[test]
fn neighbour_formula_agrees() {
    let t = default_table();
    let a = Config::from_pairs(&[(0, 0), (1, 0), (0, 1), (4, 4), (-2, 3)]).unwrap();
    let sol = solve_hitting(t, a.sites()).unwrap();
    for (i, &x) in a.sites().iter().enumerate() {
        assert!((sol.harmonic_measure()[i] - neighbor_formula(t, &sol, x, Site::new(4, 4))).abs() < 1e-10);
    }
}

#[test]
fn line_of_three() {
    let t = default_table();
    let l3 = make_line(3).unwrap();
    let h = harmonic_measure(t, &l3).unwrap();
    assert!(h[1] < h[0] && h[1] < h[2]);
    assert!((h[0] - h[2]).abs() < 1e-13);
    let c = oracle::L3_HM_COUNTS;
    let total: u64 = c.iter().sum();
    for i in 0..3 {
        let p = c[i] as f64 / total as f64;
        let se = (p * (1.0 - p) / total as f64).sqrt();
        assert!(
            (h[i] - p).abs() <= 3.0 * se,
            "site {i}: exact {} vs mc {p} +- {se}",
            h[i]
        );
    }
}

#[test]
fn escapes() {
    let t = default_table();
    let o = Config::from_pairs(&[(0, 0)]).unwrap();
    let mut prev = 1.0;
    for d in [2.0, 4.0, 8.0, 16.0, 32.0] {
        let p = escape_probability(t, &o, d, Site::ORIGIN).unwrap();
        assert!(p > 0.0 && p < prev, "d = {d}: {p}");
        prev = p;
    }
    assert!(escape_probability(t, &o, 0.5, Site::ORIGIN).is_err());

    let l3 = make_line(3).unwrap();
    let p = escape_probability(t, &l3, 64.0, Site::ORIGIN).unwrap();
    let (m, se) = oracle::L3_ESCAPE_64;
    assert!((p - m).abs() <= 3.0 * se, "exact {p} vs mc {m} +- {se}");

    let pair = Config::from_pairs(&[(0, 0), (1, 0)]).unwrap();
    let a = circle_escape(t, &pair, Site::ORIGIN, Site::ORIGIN, 50.0).unwrap();
    let mirrored = Config::from_pairs(&[(0, 0), (-1, 0)]).unwrap();
    let b = circle_escape(t, &mirrored, Site::ORIGIN, Site::ORIGIN, 50.0).unwrap();
    assert!((a - b).abs() < 1e-12);
    let (m, se) = oracle::PAIR_CIRCLE_50;
    assert!((a - m).abs() <= 3.0 * se, "exact {a} vs mc {m} +- {se}");
    assert!(matches!(
        circle_escape(
            t,
            &Config::from_pairs(&[(0, 0), (5, 0)]).unwrap(),
            Site::ORIGIN,
            Site::ORIGIN,
            5.0
        ),
        Err(HatError::InvalidInput(_))
    ));
}

#[test]
fn far_circle_entrance() {
    let t = default_table();
    let spread =
        |rows: &[hat_core::harmonic::HittingRatio]| rows.iter().map(|h| (h.ratio - 1.0).abs()).fold(0.0, f64::max);
    let on_axis = circle_hitting_ratio(t, 10.0, &[Site::new(1000, 0)]).unwrap();
    let rotated = circle_hitting_ratio(t, 10.0, &[Site::new(0, 1000)]).unwrap();
    let mut a: Vec<f64> = on_axis.iter().map(|h| h.ratio).collect();
    let mut b: Vec<f64> = rotated.iter().map(|h| h.ratio).collect();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-9);
    }
    assert!(a.iter().all(|r| (0.93..=1.04).contains(r)));
    let farther = circle_hitting_ratio(t, 10.0, &[Site::new(2000, 0)]).unwrap();
    assert!(spread(&farther) < spread(&on_axis));
    assert!(circle_hitting_ratio(t, 10.0, &[Site::new(5, 0)]).is_err());
}

#[test]
fn tunnel_closed_form() {
    let three = tunnel_value(3).unwrap();
    assert!((three.solved - 0.25).abs() < 1e-15);
    assert!((three.closed - 0.25).abs() < 1e-15);
    let s3 = 3f64.sqrt();
    let ten = 2.0 * s3 / ((2.0 + s3).powi(9) - (2.0 - s3).powi(9));
    assert!((tunnel_value(10).unwrap().solved - ten).abs() < 1e-12);
    for len in 3..=60 {
        let v = tunnel_value(len).unwrap();
        assert!((v.solved - v.closed).abs() < 1e-12, "len = {len}");
    }
    assert!(tunnel_value(2).is_err());
}

#[test]
fn cut_matches_direct_solve() {
    let t = default_table();
    for n in [8, 12, 16] {
        let s = build_spiral(n).unwrap();
        assert!(s.gamma_len() > 3);
        let direct = harmonic_measure(t, &s.sites).unwrap()[s.sites.index_of(Site::ORIGIN).unwrap()];
        let cut = harmonic_measure_via_cut(t, &s.sites, Site::ORIGIN).unwrap();
        assert!(
            (cut - direct).abs() <= 1e-8 * direct.abs().max(1e-12),
            "n = {n}: {cut} vs {direct}"
        );
    }
    // not enclosed: same as the direct value
    let a = Config::from_pairs(&[(0, 0), (1, 0), (3, 3)]).unwrap();
    let direct = harmonic_measure(t, &a).unwrap()[0];
    assert!((harmonic_measure_via_cut(t, &a, Site::ORIGIN).unwrap() - direct).abs() < 1e-12);
}

#[test]
fn spiral_corridor_length() {
    // breadth-first corridor lengths of the frozen construction; the ratio to 2n
    // climbs towards 1 only slowly
    let mut last = 0.0;
    for (n, len) in [(20, 15), (30, 27), (40, 42)] {
        let s = build_spiral(n).unwrap();
        assert_eq!(s.gamma_len(), len, "n = {n}");
        assert_eq!(*s.path.last().unwrap(), Site::ORIGIN);
        let ratio = len as f64 / (2 * n) as f64;
        assert!(ratio > last);
        last = ratio;
    }
}

#[test]
fn rectangle_symmetry() {
    let a = rectangle_exit(0.0, 24.0, 24.0).unwrap();
    assert!(a.prob > 0.0 && a.prob < 1.0);
    let b = rectangle_exit(FRAC_PI_2, 24.0, 24.0).unwrap();
    assert!((a.prob - b.prob).abs() <= 1e-12 * a.prob);
    let c = rectangle_exit(PI, 24.0, 24.0).unwrap();
    assert!((a.prob - c.prob).abs() <= 1e-12 * a.prob);
}

#[test]
fn square_exit_laws() {
    for h in 1..=8 {
        let fast = side_law(h);
        let dense = side_law_dense(h);
        assert_eq!(fast.len(), dense.len());
        for (a, b) in fast.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-12, "h = {h}");
        }
        assert!((4.0 * fast.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn prescribed_values() {
    let t = default_table();
    let sites = [Site::new(0, 0), Site::new(6, 0)];
    let f = solve_values(t, &sites, &[2.0, -1.0]).unwrap();
    assert!((f.eval(t, Site::new(3, 40)) - 0.5).abs() < 1e-12);
    assert_eq!(f.eval(t, Site::new(6, 0)), -1.0);
    assert!(solve_hitting(t, &[Site::ORIGIN, Site::ORIGIN]).is_err());
}

fn small_box() -> impl Strategy<Value = Config> {
    prop::collection::hash_set((0i64..7, 0i64..7), 1..14)
        .prop_map(|s| Config::new(s.into_iter().map(|(x, y)| Site::new(x, y)).collect()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn positive_measure_iff_exposed(a in small_box()) {
        let t = default_table();
        let h = harmonic_measure(t, &a).unwrap();
        let exposed = a.exposed_sites();
        for (i, s) in a.sites().iter().enumerate() {
            prop_assert_eq!(h[i] > 1e-12, exposed.contains(s), "{:?} at {}", a.sites(), s);
        }
    }
}
