//! Statevector simulation of the real-amplitude ansatz and Hadamard-test
//! estimation.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::pauli::{Cyc, Pauli, PauliString};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Largest register the simulator accepts.
pub const MAX_QUBITS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(pub Vec<Complex64>);

impl StateVector {
    /// `|0...0>` on `n` qubits.
    pub fn zero_state(n: usize) -> Self {
        let mut v = vec![ZERO; 1 << n];
        v[0] = ONE;
        Self(v)
    }

    pub fn from_real(v: &[f64]) -> Self {
        Self(v.iter().map(|x| Complex64::new(*x, 0.0)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn qubits(&self) -> usize {
        self.0.len().trailing_zeros() as usize
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.0
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.0.iter().map(|a| a.re).collect()
    }

    pub fn max_imag(&self) -> f64 {
        self.0.iter().map(|a| a.im.abs()).fold(0.0, f64::max)
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &[Complex64]) -> Complex64 {
        self.0.iter().zip(other).map(|(a, b)| a.conj() * b).sum()
    }

    fn ry(&mut self, qubit: usize, theta: f64) {
        let n = self.qubits();
        let bit = 1usize << (n - 1 - qubit);
        let (s, c) = (0.5 * theta).sin_cos();
        for k in 0..self.0.len() {
            if k & bit == 0 {
                let (a0, a1) = (self.0[k], self.0[k | bit]);
                self.0[k] = a0 * c - a1 * s;
                self.0[k | bit] = a0 * s + a1 * c;
            }
        }
    }

    fn cnot(&mut self, control: usize, target: usize) {
        let n = self.qubits();
        let cb = 1usize << (n - 1 - control);
        let tb = 1usize << (n - 1 - target);
        for k in 0..self.0.len() {
            if k & cb != 0 && k & tb == 0 {
                self.0.swap(k, k | tb);
            }
        }
    }

    fn pauli_y(&mut self, qubit: usize) {
        let n = self.qubits();
        let p = PauliString::single(n, qubit, Pauli::Y);
        self.0 = p.apply(&self.0);
    }
}

/// Entangling pattern between the two rotation layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Entangler {
    /// Wrap CNOT `(n, 1)` first, then `(q, q+1)` for every neighbour pair.
    #[default]
    Circular,
    /// Neighbour pairs only.
    Chain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Ry { qubit: usize, param: usize },
    Cnot { control: usize, target: usize },
}

/// Two layers of y-rotations around one CNOT block, `2n` parameters.
///
/// Parameters `0..n` drive the first layer (qubit order), `n..2n` the second.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ansatz {
    qubits: usize,
    entangler: Entangler,
    gates: Vec<Gate>,
}

impl Ansatz {
    pub fn new(qubits: usize, entangler: Entangler) -> Result<Self> {
        if qubits == 0 || qubits > MAX_QUBITS {
            return Err(Error::QubitRange(qubits));
        }
        let mut gates: Vec<Gate> = (0..qubits).map(|q| Gate::Ry { qubit: q, param: q }).collect();
        if entangler == Entangler::Circular && qubits > 2 {
            gates.push(Gate::Cnot {
                control: qubits - 1,
                target: 0,
            });
        }
        for q in 0..qubits.saturating_sub(1) {
            gates.push(Gate::Cnot {
                control: q,
                target: q + 1,
            });
        }
        gates.extend((0..qubits).map(|q| Gate::Ry {
            qubit: q,
            param: qubits + q,
        }));
        Ok(Self {
            qubits,
            entangler,
            gates,
        })
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn entangler(&self) -> Entangler {
        self.entangler
    }

    pub fn num_params(&self) -> usize {
        2 * self.qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    fn run(&self, theta: &[f64], marked: Option<usize>) -> Result<StateVector> {
        check_len(self.num_params(), theta.len(), "ansatz parameters")?;
        let mut psi = StateVector::zero_state(self.qubits);
        for gate in &self.gates {
            match *gate {
                Gate::Ry { qubit, param } => {
                    psi.ry(qubit, theta[param]);
                    if marked == Some(param) {
                        psi.pauli_y(qubit);
                    }
                }
                Gate::Cnot { control, target } => psi.cnot(control, target),
            }
        }
        Ok(psi)
    }

    /// `|v(theta)> = G(theta)|0...0>`.
    pub fn prepare(&self, theta: &[f64]) -> Result<StateVector> {
        self.run(theta, None)
    }

    /// The circuit with a Pauli-Y inserted right after rotation `k`.
    ///
    /// Since `dRy/dtheta = -i/2 Y Ry`, the derivative is `-i/2` times this
    /// unit-norm state, which is what a Hadamard test actually prepares.
    pub fn marked(&self, theta: &[f64], k: usize) -> Result<StateVector> {
        if k >= self.num_params() {
            return Err(Error::ParameterIndex {
                index: k,
                count: self.num_params(),
            });
        }
        self.run(theta, Some(k))
    }

    /// `d|v>/d theta_k` (0-based `k`).
    pub fn derivative(&self, theta: &[f64], k: usize) -> Result<StateVector> {
        let mut phi = self.marked(theta, k)?;
        let factor = Complex64::new(0.0, -0.5);
        phi.0.iter_mut().for_each(|a| *a *= factor);
        Ok(phi)
    }
}

/// Operators a Hadamard test can control.
pub trait Unitary {
    fn qubits(&self) -> usize;
    fn apply(&self, psi: &[Complex64]) -> Vec<Complex64>;
    /// `max |U^dag U - I|`; zero for operators unitary by construction.
    fn unitarity_defect(&self) -> f64 {
        0.0
    }
}

impl Unitary for PauliString {
    fn qubits(&self) -> usize {
        PauliString::qubits(self)
    }

    fn apply(&self, psi: &[Complex64]) -> Vec<Complex64> {
        PauliString::apply(self, psi)
    }
}

impl Unitary for Cyc {
    fn qubits(&self) -> usize {
        self.qubits
    }

    fn apply(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; psi.len()];
        for (i, a) in psi.iter().enumerate() {
            out[self.target(i)] = *a;
        }
        out
    }
}

impl Unitary for DMatrix<Complex64> {
    fn qubits(&self) -> usize {
        self.nrows().trailing_zeros() as usize
    }

    fn apply(&self, psi: &[Complex64]) -> Vec<Complex64> {
        (self * nalgebra::DVector::from_column_slice(psi)).data.into()
    }

    fn unitarity_defect(&self) -> f64 {
        let n = self.nrows();
        (self.adjoint() * self - DMatrix::identity(n, n))
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }
}

/// `C^{n-1}Z`: phase -1 on `|1...1>`.
#[derive(Debug, Clone, Copy)]
pub struct MultiControlledZ(pub usize);

impl Unitary for MultiControlledZ {
    fn qubits(&self) -> usize {
        self.0
    }

    fn apply(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let mut out = psi.to_vec();
        if let Some(last) = out.last_mut() {
            *last = -*last;
        }
        out
    }
}

/// Real Householder reflector mapping `|0>` to a unit vector `f`.
///
/// `S = I - 2 w w^T / |w|^2` with `w = e_0 - f`; Hermitian and unitary.
#[derive(Debug, Clone)]
pub struct Householder {
    w: Vec<f64>,
    w_norm_sqr: f64,
}

impl Householder {
    pub fn new(f: &[f64]) -> Result<Self> {
        if !f.len().is_power_of_two() {
            return Err(Error::NotPowerOfTwo(f.len()));
        }
        let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::Unnormalized(norm));
        }
        let mut w: Vec<f64> = f.iter().map(|v| -v).collect();
        w[0] += 1.0;
        let w_norm_sqr = w.iter().map(|v| v * v).sum();
        Ok(Self { w, w_norm_sqr })
    }
}

impl Unitary for Householder {
    fn qubits(&self) -> usize {
        self.w.len().trailing_zeros() as usize
    }

    fn apply(&self, psi: &[Complex64]) -> Vec<Complex64> {
        if self.w_norm_sqr < 1e-300 {
            return psi.to_vec();
        }
        let dot: Complex64 = self.w.iter().zip(psi).map(|(w, a)| a * *w).sum();
        let scale = dot * (2.0 / self.w_norm_sqr);
        psi.iter().zip(&self.w).map(|(a, w)| a - scale * *w).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Statevector inner products.
    #[default]
    Exact,
    /// Binomial sampling of the ancilla with this many shots.
    Shots(u64),
}

impl Estimator {
    pub fn validate(self) -> Result<()> {
        match self {
            Estimator::Shots(0) => Err(Error::ZeroShots),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Real,
    Imag,
}

/// A value with its one-sigma sampling error (zero in exact mode).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

/// Estimate `Re` or `Im` of `<bra|ket>` where `ket` already carries the
/// controlled unitary: the ancilla reads 0 with probability `(1 + x)/2`.
pub fn hadamard_overlap<R: Rng + ?Sized>(
    bra: &[Complex64],
    ket: &[Complex64],
    part: Part,
    estimator: Estimator,
    rng: &mut R,
) -> Result<Estimate> {
    check_len(bra.len(), ket.len(), "Hadamard test states")?;
    let z: Complex64 = bra.iter().zip(ket).map(|(a, b)| a.conj() * b).sum();
    let x = match part {
        Part::Real => z.re,
        Part::Imag => z.im,
    };
    match estimator {
        Estimator::Exact => Ok(Estimate {
            value: x,
            std_error: 0.0,
        }),
        Estimator::Shots(0) => Err(Error::ZeroShots),
        Estimator::Shots(shots) => {
            let p = (0.5 * (1.0 + x)).clamp(0.0, 1.0);
            let successes = Binomial::new(shots, p)
                .map_err(|e| Error::InvalidParameter(e.to_string()))?
                .sample(rng);
            let value = 2.0 * successes as f64 / shots as f64 - 1.0;
            Ok(Estimate {
                value,
                std_error: ((1.0 - value * value).max(0.0) / shots as f64).sqrt(),
            })
        }
    }
}

/// `Re` or `Im` of `<psi|U|psi>` by an emulated Hadamard test.
pub fn hadamard_test<U: Unitary + ?Sized, R: Rng + ?Sized>(
    psi: &StateVector,
    u: &U,
    part: Part,
    estimator: Estimator,
    rng: &mut R,
) -> Result<Estimate> {
    check_len(psi.qubits(), u.qubits(), "operator width vs state")?;
    let defect = u.unitarity_defect();
    if defect > 1e-10 {
        return Err(Error::NotUnitary(defect));
    }
    let ket = u.apply(&psi.0);
    hadamard_overlap(&psi.0, &ket, part, estimator, rng)
}

/// `|<f|psi>|^2` for a real unit vector `f`, measured as in hardware:
/// reflect `f` onto `|0>`, flip every qubit, and read `C^{n-1}Z`, whose
/// expectation is `1 - 2|<f|psi>|^2`.
pub fn projector_overlap<R: Rng + ?Sized>(
    psi: &StateVector,
    f: &[f64],
    estimator: Estimator,
    rng: &mut R,
) -> Result<Estimate> {
    check_len(psi.len(), f.len(), "projector target vs state")?;
    let n = psi.qubits();
    let reflected = Householder::new(f)?.apply(&psi.0);
    let all_x = PauliString::from_masks(n, u64::MAX, 0);
    let flipped = StateVector(all_x.apply(&reflected));
    let e = hadamard_test(&flipped, &MultiControlledZ(n), Part::Real, estimator, rng)?;
    Ok(Estimate {
        value: 0.5 * (1.0 - e.value),
        std_error: 0.5 * e.std_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    fn random_theta(rng: &mut impl Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)).collect()
    }

    #[test]
    fn identity_at_zero() {
        let a = Ansatz::new(4, Entangler::Circular).unwrap();
        let psi = a.prepare(&[0.0; 8]).unwrap();
        assert_eq!(psi, StateVector::zero_state(4));
    }

    #[test]
    fn single_qubit_rotation_convention() {
        let a = Ansatz::new(1, Entangler::Circular).unwrap();
        assert_eq!(a.gates().len(), 2);
        let psi = a.prepare(&[std::f64::consts::PI, 0.0]).unwrap();
        assert_abs_diff_eq!(psi.0[0].re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(psi.0[1].re, 1.0, epsilon = 1e-15);
        let d = a.derivative(&[0.0, 0.0], 0).unwrap();
        assert_abs_diff_eq!((d.0[0] - ZERO).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!((d.0[1] - Complex64::new(0.5, 0.0)).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn gate_layout() {
        let circ = Ansatz::new(6, Entangler::Circular).unwrap();
        let chain = Ansatz::new(6, Entangler::Chain).unwrap();
        assert_eq!(circ.num_params(), 12);
        assert_eq!(circ.gates().len(), 6 + 6 + 6);
        assert_eq!(chain.gates().len(), 6 + 5 + 6);
        assert_eq!(circ.gates()[6], Gate::Cnot { control: 5, target: 0 });
        assert_eq!(circ.gates()[7], Gate::Cnot { control: 0, target: 1 });
        assert!(Ansatz::new(0, Entangler::Chain).is_err());
    }

    #[test]
    fn outputs_are_real_and_normalized() {
        let a = Ansatz::new(6, Entangler::Circular).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let psi = a.prepare(&random_theta(&mut rng, 12)).unwrap();
            assert!(psi.max_imag() < 1e-12);
            assert_abs_diff_eq!(psi.norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let a = Ansatz::new(4, Entangler::Circular).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let h = 1e-5;
        for _ in 0..10 {
            let theta = random_theta(&mut rng, 8);
            let v = a.prepare(&theta).unwrap();
            for k in 0..8 {
                let d = a.derivative(&theta, k).unwrap();
                let mut tp = theta.clone();
                tp[k] += h;
                let mut tm = theta.clone();
                tm[k] -= h;
                let (p, m) = (a.prepare(&tp).unwrap(), a.prepare(&tm).unwrap());
                for i in 0..16 {
                    let fd = (p.0[i] - m.0[i]) / (2.0 * h);
                    assert!((fd - d.0[i]).norm() < 1e-8);
                }
                assert!(v.inner(&d.0).re.abs() < 1e-12);
            }
        }
        assert!(matches!(a.derivative(&[0.0; 8], 8), Err(Error::ParameterIndex { .. })));
        assert!(a.prepare(&[0.0; 7]).is_err());
    }

    #[test]
    fn exact_hadamard_tests() {
        let mut rng = substream(1, &[0]);
        let plus = StateVector::from_real(&[std::f64::consts::FRAC_1_SQRT_2; 2]);
        let id = PauliString::identity(1);
        let z: PauliString = "Z".parse().unwrap();
        let e = hadamard_test(&plus, &id, Part::Real, Estimator::Exact, &mut rng).unwrap();
        assert_abs_diff_eq!(e.value, 1.0, epsilon = 1e-15);
        let e = hadamard_test(&plus, &z, Part::Real, Estimator::Exact, &mut rng).unwrap();
        assert_abs_diff_eq!(e.value, 0.0, epsilon = 1e-15);
        let y: PauliString = "Y".parse().unwrap();
        let e = hadamard_test(&plus, &y, Part::Imag, Estimator::Exact, &mut rng).unwrap();
        assert_abs_diff_eq!(e.value, 0.0, epsilon = 1e-15);
        let e = hadamard_test(&plus, &y, Part::Real, Estimator::Exact, &mut rng).unwrap();
        assert_abs_diff_eq!(e.value, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn shot_mode() {
        let mut rng = substream(2, &[0]);
        let plus = StateVector::from_real(&[std::f64::consts::FRAC_1_SQRT_2; 2]);
        let z: PauliString = "Z".parse().unwrap();
        let e = hadamard_test(&plus, &z, Part::Real, Estimator::Shots(100_000), &mut rng).unwrap();
        assert!(e.value.abs() < 3.0 / (1e5f64).sqrt());
        assert!(matches!(
            hadamard_test(&plus, &z, Part::Real, Estimator::Shots(0), &mut rng),
            Err(Error::ZeroShots)
        ));
    }

    #[test]
    fn non_unitary_rejected() {
        let mut rng = substream(3, &[0]);
        let m = DMatrix::from_diagonal_element(2, 2, Complex64::new(2.0, 0.0));
        let psi = StateVector::zero_state(1);
        assert!(matches!(
            hadamard_test(&psi, &m, Part::Real, Estimator::Exact, &mut rng),
            Err(Error::NotUnitary(_))
        ));
    }

    #[test]
    fn householder_maps_zero_to_target() {
        let f = [0.5, -0.5, 0.5, 0.5];
        let s = Householder::new(&f).unwrap();
        let out = s.apply(&StateVector::zero_state(2).0);
        for (o, t) in out.iter().zip(f) {
            assert_abs_diff_eq!(o.re, t, epsilon = 1e-15);
        }
        let back = s.apply(&out);
        assert_abs_diff_eq!(back[0].re, 1.0, epsilon = 1e-15);
        let id = Householder::new(&[1.0, 0.0]).unwrap();
        assert_eq!(id.apply(&[ONE, ZERO]), vec![ONE, ZERO]);
        assert!(Householder::new(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn projector_overlap_exact() {
        let mut rng = substream(4, &[0]);
        let a = Ansatz::new(3, Entangler::Circular).unwrap();
        let psi = a.prepare(&[0.3, -1.2, 0.8, 2.0, 0.1, -0.4]).unwrap();
        let f: Vec<f64> = (0..8).map(|k| (k as f64 + 1.0).sqrt()).collect();
        let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        let f: Vec<f64> = f.iter().map(|v| v / norm).collect();
        let want = psi.inner(&StateVector::from_real(&f).0).norm_sqr();
        let got = projector_overlap(&psi, &f, Estimator::Exact, &mut rng).unwrap();
        assert_abs_diff_eq!(got.value, want, epsilon = 1e-14);
    }

    #[test]
    fn cyc_is_a_unitary() {
        let c = crate::pauli::cyc(2, crate::pauli::Direction::Up).unwrap();
        let psi = StateVector::zero_state(2);
        let out = Unitary::apply(&c, &psi.0);
        assert_eq!(out[1], ONE);
    }
}
