//! Pauli strings, weighted sums of them, and the shift and diagonal operators
//! used to decompose banded generators.
//!
//! Qubit 1 (the first character of a string) acts on the most significant bit
//! of the basis-state index. A string is stored as two bitmasks over index
//! bits, `x` and `z`, with `Y = iXZ` on positions where both are set, so
//! `P|k> = i^{|x&z|} (-1)^{|z&k|} |k ^ x>`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Coefficients smaller than this are dropped when sums are canonicalized.
pub const PRUNE_TOLERANCE: f64 = 1e-13;

/// Largest register the dense helpers here will build.
pub const DENSE_LIMIT: usize = 12;

const I: Complex64 = Complex64::new(0.0, 1.0);

fn i_pow(k: u32) -> Complex64 {
    match k % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => I,
        2 => Complex64::new(-1.0, 0.0),
        _ => -I,
    }
}

fn check_qubits(n: usize) -> Result<()> {
    if n == 0 || n > DENSE_LIMIT {
        return Err(Error::QubitRange(n));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliString {
    n: usize,
    x: u64,
    z: u64,
}

impl PauliString {
    pub fn identity(n: usize) -> Self {
        Self { n, x: 0, z: 0 }
    }

    /// From index-bit masks.
    pub fn from_masks(n: usize, x: u64, z: u64) -> Self {
        let keep = if n >= 64 { u64::MAX } else { (1u64 << n) - 1 };
        Self {
            n,
            x: x & keep,
            z: z & keep,
        }
    }

    /// A single Pauli on `qubit` (0-based string position).
    pub fn single(n: usize, qubit: usize, p: Pauli) -> Self {
        let mut s = Self::identity(n);
        s.set(qubit, p);
        s
    }

    pub fn qubits(&self) -> usize {
        self.n
    }

    pub fn x_mask(&self) -> u64 {
        self.x
    }

    pub fn z_mask(&self) -> u64 {
        self.z
    }

    fn bit(&self, qubit: usize) -> u64 {
        1 << (self.n - 1 - qubit)
    }

    pub fn get(&self, qubit: usize) -> Pauli {
        let b = self.bit(qubit);
        match (self.x & b != 0, self.z & b != 0) {
            (false, false) => Pauli::I,
            (true, false) => Pauli::X,
            (true, true) => Pauli::Y,
            (false, true) => Pauli::Z,
        }
    }

    pub fn set(&mut self, qubit: usize, p: Pauli) {
        let b = self.bit(qubit);
        self.x &= !b;
        self.z &= !b;
        match p {
            Pauli::I => {}
            Pauli::X => self.x |= b,
            Pauli::Y => {
                self.x |= b;
                self.z |= b;
            }
            Pauli::Z => self.z |= b,
        }
    }

    /// Number of non-identity factors.
    pub fn weight(&self) -> u32 {
        (self.x | self.z).count_ones()
    }

    pub fn is_diagonal(&self) -> bool {
        self.x == 0
    }

    fn y_count(&self) -> u32 {
        (self.x & self.z).count_ones()
    }

    /// `self * other = i^k * result`; returns `(k mod 4, result)`.
    pub fn mul(&self, other: &PauliString) -> (u32, PauliString) {
        debug_assert_eq!(self.n, other.n);
        let out = PauliString {
            n: self.n,
            x: self.x ^ other.x,
            z: self.z ^ other.z,
        };
        let k = self.y_count() + other.y_count() + 2 * (self.z & other.x).count_ones() + 4
            - out.y_count() % 4;
        (k % 4, out)
    }

    /// Concatenate: `self` on the leading qubits, `other` on the trailing ones.
    pub fn tensor(&self, other: &PauliString) -> PauliString {
        PauliString {
            n: self.n + other.n,
            x: (self.x << other.n) | other.x,
            z: (self.z << other.n) | other.z,
        }
    }

    /// Matrix element source: `P|k> = phase(k) |k ^ x>`.
    pub fn phase(&self, k: usize) -> Complex64 {
        let sign = if (self.z & k as u64).count_ones() % 2 == 1 {
            -1.0
        } else {
            1.0
        };
        i_pow(self.y_count()) * sign
    }

    pub fn apply(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); psi.len()];
        self.apply_add(Complex64::new(1.0, 0.0), psi, &mut out);
        out
    }

    /// `out += c * P psi`.
    pub fn apply_add(&self, c: Complex64, psi: &[Complex64], out: &mut [Complex64]) {
        let base = c * i_pow(self.y_count());
        for (k, &a) in psi.iter().enumerate() {
            let odd = (self.z & k as u64).count_ones() % 2 == 1;
            let t = if odd { -base * a } else { base * a };
            out[k ^ self.x as usize] += t;
        }
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let dim = 1usize << self.n;
        let mut m = DMatrix::zeros(dim, dim);
        for k in 0..dim {
            m[(k ^ self.x as usize, k)] = self.phase(k);
        }
        m
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for q in 0..self.n {
            let c = match self.get(q) {
                Pauli::I => 'I',
                Pauli::X => 'X',
                Pauli::Y => 'Y',
                Pauli::Z => 'Z',
            };
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let n = s.chars().count();
        if n == 0 || n > 63 {
            return Err(Error::QubitRange(n));
        }
        let mut out = PauliString::identity(n);
        for (q, ch) in s.chars().enumerate() {
            let p = match ch {
                'I' => Pauli::I,
                'X' => Pauli::X,
                'Y' => Pauli::Y,
                'Z' => Pauli::Z,
                other => {
                    return Err(Error::Serde(format!("invalid Pauli character `{other}`")));
                }
            };
            out.set(q, p);
        }
        Ok(out)
    }
}

/// `sum_h lambda_h P_h` over a fixed register.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliSum {
    n: usize,
    terms: BTreeMap<PauliString, Complex64>,
}

#[derive(Serialize, Deserialize)]
struct JsonTerm {
    coeff: [f64; 2],
    string: String,
}

impl PauliSum {
    pub fn zero(n: usize) -> Self {
        Self {
            n,
            terms: BTreeMap::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_terms(n, [(Complex64::new(1.0, 0.0), PauliString::identity(n))])
    }

    pub fn from_terms(n: usize, terms: impl IntoIterator<Item = (Complex64, PauliString)>) -> Self {
        let mut s = Self::zero(n);
        for (c, p) in terms {
            s.add_term(c, p);
        }
        s.prune();
        s
    }

    pub fn qubits(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (Complex64, &PauliString)> + '_ {
        self.terms.iter().map(|(p, c)| (*c, p))
    }

    pub fn coefficient(&self, p: &PauliString) -> Complex64 {
        self.terms.get(p).copied().unwrap_or_default()
    }

    pub fn add_term(&mut self, c: Complex64, p: PauliString) {
        debug_assert_eq!(p.qubits(), self.n);
        *self.terms.entry(p).or_default() += c;
    }

    /// Drop coefficients below [`PRUNE_TOLERANCE`].
    pub fn prune(&mut self) {
        self.terms.retain(|_, c| c.norm() >= PRUNE_TOLERANCE);
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let mut out = self.clone();
        out.terms.values_mut().for_each(|v| *v *= c);
        out.prune();
        out
    }

    pub fn add(&self, other: &PauliSum) -> Self {
        let mut out = self.clone();
        for (c, p) in other.terms() {
            out.add_term(c, *p);
        }
        out.prune();
        out
    }

    pub fn mul(&self, other: &PauliSum) -> Self {
        let mut out = Self::zero(self.n);
        for (a, p) in self.terms() {
            for (b, q) in other.terms() {
                let (k, r) = p.mul(q);
                out.add_term(a * b * i_pow(k), r);
            }
        }
        out.prune();
        out
    }

    /// `self` on the leading qubits, `other` on the trailing ones.
    pub fn tensor(&self, other: &PauliSum) -> Self {
        let mut out = Self::zero(self.n + other.n);
        for (a, p) in self.terms() {
            for (b, q) in other.terms() {
                out.add_term(a * b, p.tensor(q));
            }
        }
        out.prune();
        out
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self {
            n: self.n,
            terms: self.terms.iter().map(|(p, c)| (*p, c.conj())).collect(),
        }
    }

    /// Same operator lifted into a register of `total` qubits starting at
    /// string position `offset`.
    pub fn embed(&self, total: usize, offset: usize) -> Self {
        let before = PauliSum::identity(offset);
        let after = PauliSum::identity(total - offset - self.n);
        let mut out = if offset == 0 { self.clone() } else { before.tensor(self) };
        if total > offset + self.n {
            out = out.tensor(&after);
        }
        out
    }

    pub fn apply(&self, psi: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len(1 << self.n, psi.len(), "Pauli sum apply input")?;
        let mut out = vec![Complex64::new(0.0, 0.0); psi.len()];
        for (c, p) in self.terms() {
            p.apply_add(c, psi, &mut out);
        }
        Ok(out)
    }

    /// Dense matrix; the reconstruction used to validate decompositions.
    pub fn to_dense(&self) -> Result<DMatrix<Complex64>> {
        check_qubits(self.n)?;
        let dim = 1usize << self.n;
        let mut m = DMatrix::zeros(dim, dim);
        for (c, p) in self.terms() {
            for k in 0..dim {
                m[(k ^ p.x_mask() as usize, k)] += c * p.phase(k);
            }
        }
        Ok(m)
    }

    /// `[{"coeff": [re, im], "string": "IXZ.."}, ...]`.
    pub fn to_json(&self) -> serde_json::Value {
        let terms: Vec<JsonTerm> = self
            .terms()
            .map(|(c, p)| JsonTerm {
                coeff: [c.re, c.im],
                string: p.to_string(),
            })
            .collect();
        serde_json::to_value(terms).expect("terms serialize")
    }

    /// Inverse of [`PauliSum::to_json`]; `n` is needed only for empty sums.
    pub fn from_json(value: &serde_json::Value, n: Option<usize>) -> Result<Self> {
        let terms: Vec<JsonTerm> =
            serde_json::from_value(value.clone()).map_err(|e| Error::Serde(e.to_string()))?;
        let width = match (terms.first(), n) {
            (Some(t), _) => t.string.chars().count(),
            (None, Some(n)) => n,
            (None, None) => return Err(Error::Serde("empty Pauli sum without a width".into())),
        };
        let mut out = Self::zero(width);
        for t in terms {
            let p: PauliString = t.string.parse()?;
            check_len(width, p.qubits(), "Pauli string width")?;
            out.add_term(Complex64::new(t.coeff[0], t.coeff[1]), p);
        }
        Ok(out)
    }
}

/// Direction of a cyclic or open-chain shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `|i> -> |i+1>`.
    Up,
    /// `|i> -> |i-1>`.
    Down,
}

impl Direction {
    pub fn step(self) -> i64 {
        match self {
            Direction::Up => 1,
            Direction::Down => -1,
        }
    }
}

/// Cyclic increment or decrement on `qubits` qubits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cyc {
    pub qubits: usize,
    pub direction: Direction,
}

/// Cyclic shift `|i> -> |i +- 1 mod 2^n>`.
pub fn cyc(n: usize, direction: Direction) -> Result<Cyc> {
    check_qubits(n)?;
    Ok(Cyc {
        qubits: n,
        direction,
    })
}

impl Cyc {
    pub fn target(&self, i: usize) -> usize {
        let dim = 1i64 << self.qubits;
        (i as i64 + self.direction.step()).rem_euclid(dim) as usize
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let dim = 1usize << self.qubits;
        let mut m = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            m[(self.target(i), i)] = 1.0;
        }
        m
    }

    /// Multi-controlled X cascade realizing the shift, first gate first.
    ///
    /// The increment flips qubit `q` when every less significant qubit is 1,
    /// working from the most significant qubit down. The decrement is the
    /// same cascade with controls on 0.
    pub fn gate_sequence(&self) -> Vec<String> {
        let n = self.qubits;
        let on = match self.direction {
            Direction::Up => "1",
            Direction::Down => "0",
        };
        (0..n)
            .map(|q| {
                let controls: Vec<String> = (q + 1..n).map(|c| format!("q{}={on}", c + 1)).collect();
                if controls.is_empty() {
                    format!("X q{}", q + 1)
                } else {
                    format!("C{}X q{} [{}]", controls.len(), q + 1, controls.join(","))
                }
            })
            .collect()
    }

    /// Expansion in Pauli strings.
    ///
    /// The increment maps a state whose `t` lowest bits are 1 and bit `t` is
    /// 0 by flipping bits `0..=t`, so it is a sum of X masks times projectors
    /// on the trailing bits; the all-ones state wraps to zero.
    pub fn to_pauli_sum(&self) -> PauliSum {
        let n = self.qubits;
        let one = Complex64::new(1.0, 0.0);
        let proj = |bit: usize, value: bool| {
            let z = PauliString::from_masks(n, 0, 1 << bit);
            let s = if value { -0.5 } else { 0.5 };
            PauliSum::from_terms(n, [(one * 0.5, PauliString::identity(n)), (one * s, z)])
        };
        let mut up = PauliSum::zero(n);
        for t in 0..=n {
            let flip_bits = if t == n { n } else { t + 1 };
            let x = if flip_bits == 64 { u64::MAX } else { (1u64 << flip_bits) - 1 };
            let mut term = PauliSum::from_terms(n, [(one, PauliString::from_masks(n, x, 0))]);
            for b in 0..t.min(n) {
                term = term.mul(&proj(b, true));
            }
            if t < n {
                term = term.mul(&proj(t, false));
            }
            up = up.add(&term);
        }
        match self.direction {
            Direction::Up => up,
            Direction::Down => up.adjoint(),
        }
    }
}

/// Open-chain shift `V+ = sum_{i<2^n-1} |i+1><i|` or its transpose `V-`,
/// the half-sum `Cyc (C^{n-1}Z + I) / 2` written out in Pauli strings.
pub fn v_shift(n: usize, direction: Direction) -> Result<PauliSum> {
    let up = cyc(n, Direction::Up)?.to_pauli_sum();
    let half = controlled_z(n)?.add(&PauliSum::identity(n)).scale(Complex64::new(0.5, 0.0));
    let v_up = up.mul(&half);
    Ok(match direction {
        Direction::Up => v_up,
        Direction::Down => v_up.adjoint(),
    })
}

/// `C^{n-1}Z = I - 2 |1..1><1..1|`.
pub fn controlled_z(n: usize) -> Result<PauliSum> {
    check_qubits(n)?;
    let one = Complex64::new(1.0, 0.0);
    let mut proj = PauliSum::identity(n);
    for b in 0..n {
        let z = PauliString::from_masks(n, 0, 1 << b);
        proj = proj.mul(&PauliSum::from_terms(
            n,
            [(one * 0.5, PauliString::identity(n)), (one * -0.5, z)],
        ));
    }
    Ok(PauliSum::identity(n).add(&proj.scale(Complex64::new(-2.0, 0.0))))
}

/// `D(n) = diag(0, 1, ..., 2^n - 1) = (2^n - 1)/2 I - sum_i 2^{n-i-1} Z_i`.
pub fn dn(n: usize) -> Result<PauliSum> {
    check_qubits(n)?;
    let mut s = PauliSum::zero(n);
    s.add_term(
        Complex64::new(((1u64 << n) - 1) as f64 / 2.0, 0.0),
        PauliString::identity(n),
    );
    for q in 0..n {
        let w = (1u64 << (n - q - 1)) as f64 / 2.0;
        s.add_term(Complex64::new(-w, 0.0), PauliString::single(n, q, Pauli::Z));
    }
    Ok(s)
}

/// Hilbert-Schmidt projection `lambda_h = Tr(P_h A) / 2^n` onto every string.
pub fn decompose_dense(op: &DMatrix<Complex64>) -> Result<PauliSum> {
    let dim = op.nrows();
    check_len(dim, op.ncols(), "matrix to decompose must be square")?;
    if !dim.is_power_of_two() || dim < 2 {
        return Err(Error::NotPowerOfTwo(dim));
    }
    let n = dim.trailing_zeros() as usize;
    check_qubits(n)?;
    let norm = 1.0 / dim as f64;

    let project = |x: usize| -> Vec<(Complex64, PauliString)> {
        let mut w: Vec<Complex64> = (0..dim).map(|k| op[(k, k ^ x)]).collect();
        walsh_hadamard(&mut w);
        w.into_iter()
            .enumerate()
            .filter_map(|(z, v)| {
                let p = PauliString::from_masks(n, x as u64, z as u64);
                let c = v * i_pow(p.y_count()) * norm;
                (c.norm() >= PRUNE_TOLERANCE).then_some((c, p))
            })
            .collect()
    };

    #[cfg(feature = "parallel")]
    let terms: Vec<_> = {
        use rayon::prelude::*;
        (0..dim).into_par_iter().flat_map_iter(project).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let terms: Vec<_> = (0..dim).flat_map(project).collect();

    Ok(PauliSum::from_terms(n, terms))
}

/// Real-matrix convenience wrapper for [`decompose_dense`].
pub fn decompose_real(op: &DMatrix<f64>) -> Result<PauliSum> {
    decompose_dense(&op.map(|v| Complex64::new(v, 0.0)))
}

fn walsh_hadamard(v: &mut [Complex64]) {
    let mut h = 1;
    while h < v.len() {
        for block in (0..v.len()).step_by(2 * h) {
            for k in block..block + h {
                let (a, b) = (v[k], v[k + h]);
                v[k] = a + b;
                v[k + h] = a - b;
            }
        }
        h *= 2;
    }
}
