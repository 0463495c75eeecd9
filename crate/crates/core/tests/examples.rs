use approx::assert_abs_diff_eq;
use fkvarqite::baselines::{euler_evolve, mc_simulate, simulate_positions};
use fkvarqite::model::SdeSystem;
use fkvarqite::pauli::{dn, v_shift, Direction, Pauli, PauliString, PauliSum};
use fkvarqite::{Grid, SparseGenerator};
use nalgebra::DMatrix;
use num_complex::Complex64;

#[test]
fn d1_is_diag_zero_one() {
    let d = dn(1).unwrap();
    assert_eq!(d.len(), 2);
    assert_abs_diff_eq!(d.coefficient(&PauliString::identity(1)).re, 0.5);
    assert_abs_diff_eq!(d.coefficient(&PauliString::single(1, 0, Pauli::Z)).re, -0.5);
}

#[test]
fn dn_is_the_index_diagonal() {
    for n in 1..=5 {
        let d = dn(n).unwrap().to_dense().unwrap();
        for i in 0..1usize << n {
            for j in 0..1usize << n {
                let want = if i == j { i as f64 } else { 0.0 };
                assert_abs_diff_eq!(d[(i, j)].re, want, epsilon = 1e-12);
            }
        }
    }
}

#[test]
fn single_qubit_raising_operator() {
    let half = Complex64::new(0.5, 0.0);
    let expected = PauliSum::from_terms(
        1,
        [
            (half, PauliString::single(1, 0, Pauli::X)),
            (Complex64::new(0.0, -0.5), PauliString::single(1, 0, Pauli::Y)),
        ],
    );
    let v = v_shift(1, Direction::Up).unwrap().to_dense().unwrap();
    assert_eq!(v, expected.to_dense().unwrap());
    assert_abs_diff_eq!(v[(1, 0)].re, 1.0);
    assert_abs_diff_eq!(v[(0, 1)].norm(), 0.0);
}

#[test]
fn open_shifts_have_no_wrap() {
    let up = v_shift(2, Direction::Up).unwrap().to_dense().unwrap();
    let down = v_shift(2, Direction::Down).unwrap().to_dense().unwrap();
    assert_eq!(up.transpose(), down);
    let sum = up + down;
    assert_eq!(sum[(0, 3)], Complex64::new(0.0, 0.0));
    assert_eq!(sum[(3, 0)], Complex64::new(0.0, 0.0));
}

#[test]
fn one_euler_step_on_a_circulant() {
    let m = DMatrix::from_row_slice(
        4,
        4,
        &[-1.0, 0.5, 0.0, 0.5, 0.5, -1.0, 0.5, 0.0, 0.0, 0.5, -1.0, 0.5, 0.5, 0.0, 0.5, -1.0],
    );
    let gen = SparseGenerator::from_dense(&m).unwrap();
    let traj = euler_evolve(&gen, &[1.0, 0.0, 0.0, 0.0], 0.01, 1).unwrap();
    let want = [0.99, 0.005, 0.0, 0.005];
    for (a, b) in traj[1].iter().zip(want) {
        assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
    }
}

#[test]
fn frozen_paths_stay_in_their_bin() {
    let sde = SdeSystem::constant(vec![0.0, 0.0], DMatrix::zeros(2, 2), 0.0).unwrap();
    let grid = Grid::uniform(2, 4, 1.0).unwrap();
    let h = mc_simulate(&sde, &[1.2, 2.9], 1.0, 1000, 5, &grid, 1).unwrap();
    let bin = grid.nearest_node(&[1.2, 2.9]);
    assert_eq!(h.counts()[bin], 1000);
    assert_abs_diff_eq!(h.masses().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
}

#[test]
fn correlated_increments() {
    let rho: f64 = 1.0 / 3.0;
    let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, rho, (1.0 - rho * rho).sqrt()]);
    let sde = SdeSystem::constant(vec![0.0, 0.0], sigma, 0.0).unwrap();
    let n = 1_000_000;
    let pos = simulate_positions(&sde, &[0.0, 0.0], 0.1, n, 1, 11).unwrap();
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for p in &pos {
        sxy += p[0] * p[1];
        sxx += p[0] * p[0];
        syy += p[1] * p[1];
    }
    let corr = sxy / (sxx * syy).sqrt();
    assert!((corr - rho).abs() < 0.01, "sample correlation {corr}");
}
