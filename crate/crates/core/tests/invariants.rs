use std::collections::BTreeMap;

use fkvarqite::baselines::euler_evolve;
use fkvarqite::circuit::{Ansatz, Entangler};
use fkvarqite::model::evaluate_coefficients;
use fkvarqite::pauli::{cyc, decompose_real, Direction};
use fkvarqite::readout::{interval_operator, ScaledState};
use fkvarqite::varqite::assemble_m;
use fkvarqite::{discretize, preset_system, Grid, Preset};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn heat2d(rho: f64, r: f64) -> fkvarqite::SdeSystem {
    let params: BTreeMap<String, f64> = [("rho".to_string(), rho), ("r".to_string(), r)].into();
    preset_system(Preset::Heat2dCorrelated, &params).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn generator_columns_sum_to_minus_discount(
        rho in -0.95f64..0.95,
        r in 0.0f64..0.5,
        qubits in prop::sample::select(vec![4usize, 6, 8]),
        h in 0.25f64..2.0,
    ) {
        let grid = Grid::uniform(2, qubits, h).unwrap();
        let gen = discretize(&evaluate_coefficients(&heat2d(rho, r), &grid, 0.0).unwrap(), &grid).unwrap();
        for s in gen.column_sums() {
            prop_assert!((s + r).abs() < 1e-9 * (1.0 + 1.0 / (h * h)));
        }
    }

    #[test]
    fn euler_conserves_mass_without_discount(rho in -0.9f64..0.9, seed in 0u64..1000) {
        let grid = Grid::uniform(2, 4, 1.0).unwrap();
        let gen = discretize(&evaluate_coefficients(&heat2d(rho, 0.0), &grid, 0.0).unwrap(), &grid).unwrap();
        let u0: Vec<f64> = (0..16).map(|i| ((i as u64 * 7 + seed) % 11) as f64).collect();
        let total: f64 = u0.iter().sum();
        let traj = euler_evolve(&gen, &u0, 0.01, 100).unwrap();
        for u in &traj {
            prop_assert!((u.iter().sum::<f64>() - total).abs() < 1e-10 * total.max(1.0));
        }
    }

    #[test]
    fn dense_decomposition_round_trips(entries in prop::collection::vec(-3.0f64..3.0, 64)) {
        let m = DMatrix::from_row_slice(8, 8, &entries);
        let back = decompose_real(&m).unwrap().to_dense().unwrap();
        for (a, b) in back.iter().zip(m.iter()) {
            prop_assert!((a.re - b).abs() < 1e-12 && a.im.abs() < 1e-12);
        }
    }

    #[test]
    fn ansatz_states_are_real_unit_vectors(theta in prop::collection::vec(-6.3f64..6.3, 8)) {
        let ansatz = Ansatz::new(4, Entangler::Circular).unwrap();
        let v = ansatz.prepare(&theta).unwrap();
        prop_assert!((v.norm() - 1.0).abs() < 1e-12);
        prop_assert!(v.max_imag() < 1e-14);
    }

    #[test]
    fn metric_tensor_is_symmetric_psd(theta in prop::collection::vec(-3.2f64..3.2, 8), alpha in 0.1f64..3.0) {
        let ansatz = Ansatz::new(4, Entangler::Chain).unwrap();
        let m = assemble_m(&ansatz, &theta, alpha).unwrap();
        prop_assert!((&m - m.transpose()).amax() < 1e-12);
        let eig = m.view((1, 1), (8, 8)).into_owned().symmetric_eigenvalues();
        prop_assert!(eig.min() > -1e-10);
    }

    #[test]
    fn cyc_directions_are_inverse(n in 1usize..6) {
        let up = cyc(n, Direction::Up).unwrap().to_dense();
        let down = cyc(n, Direction::Down).unwrap().to_dense();
        let dim = 1usize << n;
        prop_assert_eq!(up * down, DMatrix::identity(dim, dim));
    }

    #[test]
    fn interval_operator_is_prefix_indicator(n in 1usize..9, frac in 0.0f64..1.0) {
        let a = ((1usize << n) as f64 * frac) as usize;
        let got = interval_operator(a, n).unwrap().apply_to_zero();
        for (i, v) in got.iter().enumerate() {
            let want = if i <= a { 1.0 } else { 0.0 };
            prop_assert!((v - want).abs() < 1e-12);
        }
    }

    #[test]
    fn scaled_state_round_trips(p in prop::collection::vec(-1.0f64..1.0, 16)) {
        prop_assume!(p.iter().any(|v| v.abs() > 1e-3));
        let back = ScaledState::from_solution(&p).unwrap().solution();
        for (a, b) in back.iter().zip(&p) {
            prop_assert!((a - b).abs() < 1e-14);
        }
    }
}
