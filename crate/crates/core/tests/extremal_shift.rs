use std::sync::Arc;

use lattice_game::bounds;
use lattice_game::hjb::{stability_ceiling, truncate_domain};
use lattice_game::shift::{
    coupling_check, model_feedback, outcome_estimate, run_extremal_shift, Adversary, Partition, ShiftOptions,
};
use lattice_game::sim::run_replicas;
use lattice_game::{catalog, rng, solve_backward, SolveResult, SolverOptions, ValueKind};

fn g1_eta(h: f64) -> SolveResult {
    let spec = catalog::g1();
    let dom = Arc::new(truncate_domain(&spec, &[-1.0], &[1.0], 0.0, h, 0.5).unwrap());
    let opts = SolverOptions { keep_all_steps: true, ..Default::default() };
    solve_backward(&spec, dom, stability_ceiling(&spec, h), ValueKind::Upper, &[0.0], opts).unwrap()
}

#[test]
fn feedback_pushes_towards_the_origin() {
    let spec = catalog::g1();
    let eta = g1_eta(0.05);
    // u grid is {−1, 0, 1}
    assert_eq!(model_feedback(&eta, &spec, 0.5, &[10]).unwrap(), 0);
    assert_eq!(model_feedback(&eta, &spec, 0.5, &[-10]).unwrap(), 2);
}

#[test]
fn feedback_outside_the_box_is_an_error() {
    let spec = catalog::g1();
    let eta = g1_eta(0.1);
    assert!(model_feedback(&eta, &spec, 0.0, &[1000]).is_err());
}

#[test]
fn guarantee_holds_against_the_panel() {
    let spec = catalog::g1();
    let h = 0.05;
    let eta = g1_eta(h);
    let report = bounds::assemble(&spec, h, None).unwrap();
    let partition = Partition::uniform(0.0, 1.0, 0.02).unwrap();
    let eta0 = eta.slices.last().unwrap().value_at(&[20]).unwrap();
    for adv in Adversary::panel(&spec, 3, 0.1) {
        let paths = run_replicas(400, 6, |_, r| {
            run_extremal_shift(&spec, &partition, &[1.0], &eta, &adv, h, r, ShiftOptions::default())
        })
        .unwrap();
        let est = outcome_estimate(&paths).unwrap();
        assert!(
            est.mean <= eta0 + report.guarantee_thm1 + 3.0 * est.std_error,
            "{}: {} > {eta0} + {}",
            adv.name(),
            est.mean,
            report.guarantee_thm1
        );
    }
}

#[test]
fn model_and_original_stay_close() {
    let spec = catalog::g1();
    let h = 0.05;
    let eta = g1_eta(h);
    let partition = Partition::uniform(0.0, 1.0, 0.01).unwrap();
    let paths = run_replicas(300, 8, |_, r| {
        run_extremal_shift(&spec, &partition, &[0.5], &eta, &Adversary::WorstCase, h, r, ShiftOptions::default())
    })
    .unwrap();
    let report = bounds::assemble(&spec, h, None).unwrap();
    let coupling = coupling_check(&paths, report.beta, report.theta).unwrap();
    assert_eq!(coupling.eps_hat, 0.0);
    let last = partition.times.len() - 1;
    let mean_gap: f64 = paths.iter().map(|p| p.gap_sq(last)).sum::<f64>() / paths.len() as f64;
    // the coupling inequality with ε = 0 integrates to Θ (e^{βT} − 1) / β
    let envelope = report.theta * ((report.beta).exp() - 1.0) / report.beta;
    assert!(mean_gap <= envelope, "{mean_gap} > {envelope}");
}

#[test]
fn recorded_path_matches_partition_samples() {
    let spec = catalog::g1();
    let h = 0.1;
    let eta = g1_eta(h);
    let partition = Partition::uniform(0.0, 1.0, 0.05).unwrap();
    let mut r = rng::replica(1, 0);
    let opts = ShiftOptions { record_path: true, ..Default::default() };
    let p = run_extremal_shift(&spec, &partition, &[0.3], &eta, &Adversary::Constant(2), h, &mut r, opts).unwrap();
    assert_eq!(p.x_at.len(), partition.times.len());
    assert_eq!(p.u_log.len(), partition.times.len() - 1);
    let end = p.x_path.last().unwrap();
    assert!((end.0 - 1.0).abs() < 1e-12);
    assert_eq!(&end.1, p.x_at.last().unwrap());
    assert!((p.outcome - p.x_at.last().unwrap()[0].abs()).abs() < 1e-15);
}
