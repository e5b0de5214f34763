use lattice_game::sim::{run_replicas, simulate_chain, Fixed, OutcomeEstimate};
use lattice_game::{catalog, rng};

#[test]
fn constant_drift_jump_count_is_poisson() {
    let (c, h) = (0.8, 0.1);
    let spec = catalog::constant_drift(vec![c], 1.0);
    let n = 20_000;
    let jumps: Vec<f64> = run_replicas(n, 1, |_, r| {
        simulate_chain(&spec, &mut Fixed(0), &mut Fixed(0), &[0], h, 0.0, r).map(|p| p.jumps as f64)
    })
    .unwrap();
    let lambda = c / h;
    let est = OutcomeEstimate::from_samples(&jumps).unwrap();
    assert!((est.mean - lambda).abs() < 4.0 * est.std_error, "{} vs {lambda}", est.mean);
    let var = est.std_error * est.std_error * n as f64;
    assert!((var - lambda).abs() < 0.1 * lambda, "variance {var} vs {lambda}");
}

#[test]
fn constant_drift_mean_displacement_matches_drift() {
    let spec = catalog::constant_drift(vec![-0.6, 0.3], 1.0);
    let h = 0.05;
    let ends: Vec<Vec<f64>> = run_replicas(10_000, 2, |_, r| {
        simulate_chain(&spec, &mut Fixed(0), &mut Fixed(0), &[4, -2], h, 0.0, r).map(|p| p.state_at(1.0))
    })
    .unwrap();
    for (axis, (x0, c)) in [(0.2, -0.6), (-0.1, 0.3)].into_iter().enumerate() {
        let xs: Vec<f64> = ends.iter().map(|e| e[axis]).collect();
        let est = OutcomeEstimate::from_samples(&xs).unwrap();
        assert!((est.mean - (x0 + c)).abs() < 4.0 * est.std_error, "axis {axis}: {}", est.mean);
    }
}

#[test]
fn chain_never_moves_against_the_drift() {
    let spec = catalog::constant_drift(vec![0.5], 1.0);
    let mut r = rng::seeded(4);
    let p = simulate_chain(&spec, &mut Fixed(0), &mut Fixed(0), &[0], 0.1, 0.0, &mut r).unwrap();
    assert!(p.segments.windows(2).all(|w| w[1].point[0] >= w[0].point[0]));
    assert_eq!(p.final_point()[0], p.jumps as i64);
}

#[test]
fn standard_error_scales_as_inverse_root_n() {
    let spec = catalog::constant_drift(vec![1.0], 1.0);
    let se = |n: usize| {
        let xs: Vec<f64> = run_replicas(n, 9, |_, r| {
            simulate_chain(&spec, &mut Fixed(0), &mut Fixed(0), &[0], 0.1, 0.0, r).map(|p| p.jumps as f64)
        })
        .unwrap();
        OutcomeEstimate::from_samples(&xs).unwrap().std_error
    };
    let ratio = se(1_000) / se(16_000);
    assert!((ratio - 4.0).abs() < 0.4, "{ratio}");
}

#[test]
fn confidence_interval_coverage_is_near_nominal() {
    // 200 independent estimates of E N = c/h from 200 replicas each
    let (c, h) = (0.5, 0.1);
    let spec = catalog::constant_drift(vec![c], 1.0);
    let truth = c / h;
    let mut covered = 0;
    for trial in 0..200u64 {
        let xs: Vec<f64> = run_replicas(200, 1000 + trial, |_, r| {
            simulate_chain(&spec, &mut Fixed(0), &mut Fixed(0), &[0], h, 0.0, r).map(|p| p.jumps as f64)
        })
        .unwrap();
        let est = OutcomeEstimate::from_samples(&xs).unwrap();
        if est.ci95.0 <= truth && truth <= est.ci95.1 {
            covered += 1;
        }
    }
    assert!((180..=198).contains(&covered), "{covered}/200");
}

#[test]
fn replicas_do_not_depend_on_the_thread_count() {
    let spec = catalog::g1();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
            run_replicas(500, 17, |_, r| {
                simulate_chain(&spec, &mut Fixed(0), &mut Fixed(2), &[3], 0.05, 0.0, r).map(|p| p.segments)
            })
            .unwrap()
        })
    };
    assert_eq!(run(1), run(3));
}
