use std::collections::HashMap;

use hat_core::hat::{
    activation, mc_transport, renewal_analysis, run, step, transition_kernel, transport_distribution, McOptions,
    Stepper,
};
use hat_core::lattice::{exterior_boundary, make_line, make_pair, Config, Site, DIHEDRAL, DIRS};
use hat_core::{default_table, HatError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_nonsolitary(rng: &mut ChaCha8Rng, n_max: usize) -> Config {
    loop {
        let n = rng.random_range(2..=n_max);
        let mut sites = vec![Site::ORIGIN];
        let (dx, dy) = DIRS[rng.random_range(0..4)];
        sites.push(Site::new(dx, dy));
        while sites.len() < n {
            let s = Site::new(rng.random_range(-5..=5), rng.random_range(-5..=5));
            if !sites.contains(&s) {
                sites.push(s);
            }
        }
        let c = Config::new(sites).unwrap();
        if !c.is_iso() {
            return c;
        }
    }
}

fn tri() -> Config {
    Config::from_pairs(&[(0, 0), (1, 0), (3, 2)]).unwrap()
}

#[test]
fn rows_are_normalized() {
    let t = default_table();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let u = random_nonsolitary(&mut rng, 6);
        let k = transition_kernel(t, &u).unwrap();
        assert!((k.activation.iter().sum::<f64>() - 1.0).abs() <= 1e-8);
        for row in &k.rows {
            assert!((row.probs.iter().sum::<f64>() - 1.0).abs() <= 1e-8);
            assert!(row.probs.iter().all(|p| *p >= 0.0));
            let w: Vec<Site> = u.without(row.source);
            assert_eq!(row.targets, exterior_boundary(&w));
        }
    }
}

#[test]
fn pair_collapses_in_one_step() {
    let t = default_table();
    for d in [10, 100, 1000] {
        let u = make_pair(d).unwrap();
        let h = activation(t, &u).unwrap();
        assert!((h[0] - 0.5).abs() < 1e-12 && (h[1] - 0.5).abs() < 1e-12);
        let row = transport_distribution(t, &u, Site::ORIGIN).unwrap();
        let survivor = Site::new(d, 0);
        let mass: f64 = row
            .targets
            .iter()
            .zip(&row.probs)
            .filter(|(y, _)| y.is_adjacent(survivor))
            .map(|(_, p)| p)
            .sum();
        assert!((mass - 1.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(d as u64);
        let mut stepper = Stepper::new(t);
        for _ in 0..1000 {
            let (x, y) = stepper.sample(&u, &mut rng).unwrap();
            assert_eq!(u.moved(x, y).unwrap().diameter(), 1.0);
        }
    }
}

#[test]
fn line_self_transition() {
    let t = default_table();
    for n in 2..=6 {
        let k = transition_kernel(t, &make_line(n).unwrap()).unwrap();
        assert!(k.self_transition() >= 0.25, "n = {n}: {}", k.self_transition());
    }
}

#[test]
fn blocked_activation_moves_back() {
    // the endpoint of L3 touches the rest, so a walk from it can re-enter there
    let t = default_table();
    let l3 = make_line(3).unwrap();
    let row = transport_distribution(t, &l3, Site::ORIGIN).unwrap();
    assert!(row.prob_of(Site::ORIGIN) > 0.0);
    assert!(row.prob_of(Site::ORIGIN) >= 0.25);
}

#[test]
fn unexposed_source_rejected() {
    let t = default_table();
    let block = Config::new((0..3).flat_map(|x| (0..3).map(move |y| Site::new(x, y))).collect()).unwrap();
    assert!(matches!(
        transport_distribution(t, &block, Site::new(1, 1)),
        Err(HatError::InvalidInput(_))
    ));
    let k = transition_kernel(t, &block).unwrap();
    assert_eq!(k.sources.len(), 8);
    assert!((k.activation.iter().sum::<f64>() - 1.0).abs() < 1e-10);
}

#[test]
fn kernel_commutes_with_symmetries() {
    let t = default_table();
    let u = tri();
    let k = transition_kernel(t, &u).unwrap();
    for g in DIHEDRAL {
        let v = Config::new(u.sites().iter().map(|&s| g(s)).collect()).unwrap();
        let kv = transition_kernel(t, &v).unwrap();
        for (i, &x) in k.sources.iter().enumerate() {
            let j = kv.sources.iter().position(|&s| s == g(x)).unwrap();
            assert!((k.activation[i] - kv.activation[j]).abs() < 1e-12);
            for (y, p) in k.rows[i].targets.iter().zip(&k.rows[i].probs) {
                assert!((kv.rows[j].prob_of(g(*y)) - p).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn trajectory_invariants() {
    let t = default_table();
    let init = Config::from_pairs(&[(0, 0), (0, 1), (2, 3), (5, 1)]).unwrap();
    let traj = run(t, &init, 3000, 17, 1).unwrap();
    let mut prev: Option<Config> = None;
    traj.replay(|k, u| {
        assert_eq!(u.len(), 4);
        if let Some(p) = &prev {
            let e = &traj.events[k as usize - 1];
            assert!(exterior_boundary(&p.without(e.from)).contains(&e.to));
            assert!(u.diameter() <= p.diameter() + 1.0 + 1e-12);
            let (a, b) = (p.center_of_mass(), u.center_of_mass());
            let jump = ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
            assert!(jump <= (p.diameter() + 1.0) / 4.0 + 1.0);
        }
        prev = Some(u.clone());
    })
    .unwrap();
    assert_eq!(traj.samples.len(), 3001);
}

#[test]
fn runs_are_reproducible() {
    let t = default_table();
    let a = run(t, &tri(), 2000, 5, 10).unwrap();
    let b = run(t, &tri(), 2000, 5, 10).unwrap();
    let c = run(t, &tri(), 2000, 6, 10).unwrap();
    let key = |tr: &hat_core::hat::Trajectory| tr.events.iter().map(|e| (e.from, e.to)).collect::<Vec<_>>();
    assert_eq!(key(&a), key(&b));
    assert_ne!(key(&a), key(&c));
    assert_eq!(a.final_config().unwrap(), b.final_config().unwrap());
    assert!(run(t, &Config::from_pairs(&[(0, 0)]).unwrap(), 10, 0, 1).is_err());
}

#[test]
fn single_steps_follow_the_kernel() {
    let t = default_table();
    let u = tri();
    let k = transition_kernel(t, &u).unwrap();
    let mut exact: HashMap<(Site, Site), f64> = HashMap::new();
    for (i, row) in k.rows.iter().enumerate() {
        for (y, p) in row.targets.iter().zip(&row.probs) {
            exact.insert((row.source, *y), k.activation[i] * p);
        }
    }
    let n = 1_000_000u64;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut stepper = Stepper::new(t);
    let mut counts: HashMap<(Site, Site), u64> = HashMap::new();
    for _ in 0..n {
        *counts.entry(stepper.sample(&u, &mut rng).unwrap()).or_default() += 1;
    }
    for key in counts.keys() {
        assert!(exact.contains_key(key), "sampled a pair outside the kernel: {key:?}");
    }
    for (key, p) in &exact {
        let f = *counts.get(key).unwrap_or(&0) as f64 / n as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt().max(1e-9);
        assert!((f - p).abs() <= 4.0 * sigma, "{key:?}: {f} vs {p}");
    }
    // the free function agrees with the stepper on conservation
    let (v, x, y) = step(t, &u, &mut rng).unwrap();
    assert_eq!(v.len(), 3);
    assert!(u.contains(x) && v.contains(y));
}

#[test]
fn monte_carlo_transport_matches() {
    let t = default_table();
    let u = tri();
    let x = Site::new(3, 2);
    let row = transport_distribution(t, &u, x).unwrap();
    let mc = mc_transport(&u, x, 200_000, 1, McOptions::default()).unwrap();
    assert_eq!(mc.samples, 200_000);
    let tv = mc.tv_distance(&row);
    assert!(tv < 0.02, "tv = {tv}");

    let pair = make_pair(40).unwrap();
    let mc = mc_transport(&pair, Site::ORIGIN, 5_000, 2, McOptions::default()).unwrap();
    let survivor = Site::new(40, 0);
    assert!(mc.targets.iter().all(|y| y.is_adjacent(survivor)));
    // seeded replicas reproduce exactly
    let again = mc_transport(&pair, Site::ORIGIN, 5_000, 2, McOptions::default()).unwrap();
    assert_eq!(mc.counts, again.counts);
}

#[test]
fn renewal_statistics_on_a_short_run() {
    let t = default_table();
    let traj = run(t, &make_line(3).unwrap(), 200_000, 8, 1).unwrap();
    let r = renewal_analysis(t, &traj).unwrap();
    assert!(r.visits > 1000);
    assert!((r.kac - 1.0).abs() < 0.1, "kac {}", r.kac);
    assert!(r.nu2 > 0.0 && r.chi2.is_finite() && r.chi2 > 0.0);
    assert_eq!(r.class_hash, make_line(3).unwrap().class_hash());
}
