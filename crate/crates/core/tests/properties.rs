use std::sync::Arc;

use proptest::prelude::*;

use lattice_game::hjb::hamiltonian_map;
use lattice_game::io;
use lattice_game::lattice::{apply_generator, chain_characteristics, kolmogorov_rates};
use lattice_game::{catalog, weighted_norm, BoundaryPolicy, LatticeDomain, ValueGrid, ValueKind};

fn grid(h: f64, values: Vec<f64>) -> ValueGrid {
    let n = (values.len() / 2) as i64;
    let dom = Arc::new(LatticeDomain::new(h, vec![-n], vec![n]).unwrap());
    ValueGrid { t: 0.0, domain: dom, values }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn chain_drift_equals_game_drift(
        h in 0.01f64..0.99,
        x in prop::collection::vec(-1.0f64..1.0, 2),
        ui in 0usize..3,
        vi in 0usize..3,
    ) {
        let spec = catalog::g2();
        let (b, sigma2) = chain_characteristics(&spec, 0.0, &x, ui, vi, h).unwrap();
        let f = spec.eval_drift(0.0, &x, &spec.u_grid[ui], &spec.v_grid[vi]).unwrap();
        for (bi, fi) in b.iter().zip(&f) {
            prop_assert!((bi - fi).abs() < 1e-12);
        }
        let l1: f64 = f.iter().map(|v| v.abs()).sum();
        prop_assert!((sigma2 - h * l1).abs() < 1e-12);
    }

    #[test]
    fn generator_kills_constants_and_rows_sum_to_zero(
        h in 0.01f64..0.99,
        p in prop::collection::vec(-20i64..20, 2),
        ui in 0usize..3,
        vi in 0usize..3,
        c in -5.0f64..5.0,
    ) {
        let spec = catalog::g2();
        let lc = apply_generator(|_| Some(c), &spec, 0.3, &p, ui, vi, h).unwrap();
        prop_assert_eq!(lc, 0.0);
        let rates = kolmogorov_rates(&spec, 0.3, &p, ui, vi, h).unwrap();
        let sum: f64 = rates.entries.iter().map(|e| e.rate).sum();
        prop_assert!((sum - rates.total_rate).abs() < 1e-12);
        prop_assert!(rates.entries.iter().all(|e| e.rate > 0.0));
    }

    #[test]
    fn upper_hamiltonian_dominates_lower(values in prop::collection::vec(-1.0f64..1.0, 21)) {
        let spec = catalog::g1();
        let g = grid(0.1, values);
        let up = hamiltonian_map(&g, &spec, 0.0, ValueKind::Upper, BoundaryPolicy::Freeze).unwrap();
        let lo = hamiltonian_map(&g, &spec, 0.0, ValueKind::Lower, BoundaryPolicy::Freeze).unwrap();
        for (a, b) in up.values.iter().zip(&lo.values) {
            prop_assert!(a + 1e-12 >= *b);
        }
    }

    #[test]
    fn hamiltonian_is_monotone_in_neighbours(
        values in prop::collection::vec(-1.0f64..1.0, 21),
        bump in prop::collection::vec(0.0f64..1.0, 21),
        k in 0usize..21,
    ) {
        // raising neighbours while keeping the centre fixed cannot lower H there
        let spec = catalog::g1();
        let a = grid(0.1, values.clone());
        let mut raised = values.clone();
        for (i, (r, b)) in raised.iter_mut().zip(&bump).enumerate() {
            if i != k {
                *r += b;
            }
        }
        let b = grid(0.1, raised);
        let ha = hamiltonian_map(&a, &spec, 0.0, ValueKind::Upper, BoundaryPolicy::Freeze).unwrap();
        let hb = hamiltonian_map(&b, &spec, 0.0, ValueKind::Upper, BoundaryPolicy::Freeze).unwrap();
        prop_assert!(hb.values[k] + 1e-12 >= ha.values[k]);
    }

    #[test]
    fn weighted_norm_is_a_norm(
        a in prop::collection::vec(-1.0f64..1.0, 11),
        b in prop::collection::vec(-1.0f64..1.0, 11),
        s in -3.0f64..3.0,
    ) {
        let ga = grid(0.2, a.clone());
        let gb = grid(0.2, b.clone());
        let sum = grid(0.2, a.iter().zip(&b).map(|(x, y)| x + y).collect());
        let scaled = grid(0.2, a.iter().map(|x| s * x).collect());
        let na = weighted_norm(&ga, None).unwrap();
        let nb = weighted_norm(&gb, None).unwrap();
        prop_assert!(weighted_norm(&sum, None).unwrap() <= na + nb + 1e-12);
        prop_assert!((weighted_norm(&scaled, None).unwrap() - s.abs() * na).abs() < 1e-12);
    }

    #[test]
    fn value_files_round_trip_exactly(values in prop::collection::vec(-1e3f64..1e3, 9)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.csv");
        let g = grid(0.125, values);
        io::write_grids(&path, &[&g], &io::Metadata::new()).unwrap();
        let (back, _) = io::read_grids(&path).unwrap();
        prop_assert_eq!(&back[0].values, &g.values);
        prop_assert_eq!(&back[0].domain, &g.domain);
    }
}
