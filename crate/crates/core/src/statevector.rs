//! Dense statevector simulator.
//!
//! Basis index `b` encodes qubit `q` as bit `q` of `b`, so qubit 0 is the
//! least significant bit. Gates act in place in O(2^n) per application.

use std::fmt;
use std::ops::Mul;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};

/// Largest register the simulator will allocate.
pub const MAX_QUBITS: usize = 24;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// A 2×2 complex matrix acting on one qubit, stored row-major.
#[derive(Clone, Copy, PartialEq)]
pub struct Unitary2 {
    pub m: [[Complex64; 2]; 2],
}

impl fmt::Debug for Unitary2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[[{}, {}], [{}, {}]]",
            self.m[0][0], self.m[0][1], self.m[1][0], self.m[1][1]
        )
    }
}

impl Unitary2 {
    pub const fn new(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Self {
        Self { m: [[a, b], [c, d]] }
    }

    pub const fn identity() -> Self {
        Self::new(ONE, ZERO, ZERO, ONE)
    }

    pub const fn pauli_x() -> Self {
        Self::new(ZERO, ONE, ONE, ZERO)
    }

    pub fn hadamard() -> Self {
        let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self::new(h, h, h, -h)
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> Self {
        let m = &self.m;
        Self::new(m[0][0].conj(), m[1][0].conj(), m[0][1].conj(), m[1][1].conj())
    }

    /// Largest entrywise deviation of `U†U` from the identity.
    pub fn unitarity_error(&self) -> f64 {
        let p = self.dagger() * *self;
        let id = Self::identity();
        let mut worst = 0.0f64;
        for r in 0..2 {
            for c in 0..2 {
                worst = worst.max((p.m[r][c] - id.m[r][c]).norm());
            }
        }
        worst
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_error() <= tol
    }

    /// Largest entrywise distance to `other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..2 {
            for c in 0..2 {
                worst = worst.max((self.m[r][c] - other.m[r][c]).norm());
            }
        }
        worst
    }

    /// Distance to `other` after removing the best-fitting global phase.
    pub fn phase_insensitive_diff(&self, other: &Self) -> f64 {
        // tr(A† B) = |tr| e^{iθ}; align B by e^{-iθ}.
        let mut tr = ZERO;
        for r in 0..2 {
            for c in 0..2 {
                tr += self.m[r][c].conj() * other.m[r][c];
            }
        }
        let phase = if tr.norm() > 0.0 { tr / tr.norm() } else { ONE };
        let mut worst = 0.0f64;
        for r in 0..2 {
            for c in 0..2 {
                worst = worst.max((self.m[r][c] * phase - other.m[r][c]).norm());
            }
        }
        worst
    }
}

impl Mul for Unitary2 {
    type Output = Unitary2;

    fn mul(self, rhs: Unitary2) -> Unitary2 {
        let a = &self.m;
        let b = &rhs.m;
        Unitary2::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }
}

/// Required bit values on a set of control qubits. Empty means uncontrolled.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BasisControl {
    pairs: Vec<(usize, bool)>,
}

impl BasisControl {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(pairs: Vec<(usize, bool)>) -> Result<Self> {
        for (i, (q, _)) in pairs.iter().enumerate() {
            if pairs[..i].iter().any(|(p, _)| p == q) {
                return Err(Error::Index(format!("control qubit {q} listed twice")));
            }
        }
        Ok(Self { pairs })
    }

    /// Controls requiring `qubits[j]` to read bit `j` of `value`.
    pub fn on_value(qubits: impl IntoIterator<Item = usize>, value: usize) -> Result<Self> {
        let pairs = qubits
            .into_iter()
            .enumerate()
            .map(|(j, q)| (q, (value >> j) & 1 == 1))
            .collect();
        Self::new(pairs)
    }

    pub fn pairs(&self) -> &[(usize, bool)] {
        &self.pairs
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, qubit: usize) -> bool {
        self.pairs.iter().any(|&(q, _)| q == qubit)
    }

    /// (mask, value) pair for basis-index matching.
    fn masks(&self) -> (usize, usize) {
        self.pairs.iter().fold((0, 0), |(mask, val), &(q, bit)| {
            (mask | (1 << q), if bit { val | (1 << q) } else { val })
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// |0…0⟩ on `num_qubits` qubits.
    pub fn new_zero(num_qubits: usize) -> Result<Self> {
        Self::basis(num_qubits, 0)
    }

    pub fn basis(num_qubits: usize, index: usize) -> Result<Self> {
        check_size(num_qubits)?;
        let dim = 1usize << num_qubits;
        if index >= dim {
            return Err(Error::Index(format!(
                "basis index {index} out of range for {num_qubits} qubits"
            )));
        }
        let mut amplitudes = vec![ZERO; dim];
        amplitudes[index] = ONE;
        Ok(Self {
            num_qubits,
            amplitudes,
        })
    }

    /// Wraps raw amplitudes. The length must be a power of two; no
    /// normalization is applied.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::Size(format!(
                "amplitude count {len} is not a power of two >= 2"
            )));
        }
        let num_qubits = len.trailing_zeros() as usize;
        check_size(num_qubits)?;
        Ok(Self {
            num_qubits,
            amplitudes,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.num_qubits {
            return Err(Error::Index(format!(
                "qubit {qubit} out of range for {} qubits",
                self.num_qubits
            )));
        }
        Ok(())
    }

    pub fn apply_single(&mut self, qubit: usize, u: &Unitary2) -> Result<()> {
        self.check_qubit(qubit)?;
        self.apply_masked(qubit, u, 0, 0);
        Ok(())
    }

    /// Applies `u` to `qubit` on the amplitudes whose control bits all match.
    pub fn apply_controlled(
        &mut self,
        controls: &BasisControl,
        qubit: usize,
        u: &Unitary2,
    ) -> Result<()> {
        self.check_qubit(qubit)?;
        for &(q, _) in controls.pairs() {
            self.check_qubit(q)?;
            if q == qubit {
                return Err(Error::Index(format!(
                    "qubit {q} is both control and target"
                )));
            }
        }
        let (mask, value) = controls.masks();
        self.apply_masked(qubit, u, mask, value);
        Ok(())
    }

    /// Hot path; indices already validated.
    pub(crate) fn apply_masked(&mut self, qubit: usize, u: &Unitary2, mask: usize, value: usize) {
        let stride = 1usize << qubit;
        let [[a, b], [c, d]] = u.m;
        let amps = &mut self.amplitudes;
        let dim = amps.len();
        let mut base = 0;
        while base < dim {
            for i0 in base..base + stride {
                if i0 & mask != value {
                    continue;
                }
                let i1 = i0 | stride;
                let x0 = amps[i0];
                let x1 = amps[i1];
                amps[i0] = a * x0 + b * x1;
                amps[i1] = c * x0 + d * x1;
            }
            base += stride << 1;
        }
    }

    /// Σ conj(self_i) · other_i.
    pub fn inner_product(&self, other: &StateVector) -> Result<Complex64> {
        if self.num_qubits != other.num_qubits {
            return Err(Error::Shape(format!(
                "inner product of {}-qubit and {}-qubit states",
                self.num_qubits, other.num_qubits
            )));
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// Probability of each readout pattern on `qubits`; entry `j` has
    /// `qubits[k]` reading bit `k` of `j`.
    pub fn marginal_probs(&self, qubits: &[usize]) -> Result<Vec<f64>> {
        for (i, &q) in qubits.iter().enumerate() {
            self.check_qubit(q)?;
            if qubits[..i].contains(&q) {
                return Err(Error::Index(format!("qubit {q} listed twice")));
            }
        }
        let mut probs = vec![0.0; 1 << qubits.len()];
        for (b, a) in self.amplitudes.iter().enumerate() {
            let p = a.norm_sqr();
            if p == 0.0 {
                continue;
            }
            let j = qubits
                .iter()
                .enumerate()
                .fold(0usize, |acc, (k, &q)| acc | (((b >> q) & 1) << k));
            probs[j] += p;
        }
        Ok(probs)
    }

    /// Draws `shots` readouts of `qubits` and returns per-pattern counts.
    pub fn sample_counts<R: Rng + ?Sized>(
        &self,
        qubits: &[usize],
        shots: usize,
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        let probs = self.marginal_probs(qubits)?;
        Ok(sample_from_probs(&probs, shots, rng))
    }
}

/// Inverse-CDF sampling of `shots` draws from a probability vector.
pub fn sample_from_probs<R: Rng + ?Sized>(probs: &[f64], shots: usize, rng: &mut R) -> Vec<usize> {
    let total: f64 = probs.iter().sum();
    let mut counts = vec![0usize; probs.len()];
    for _ in 0..shots {
        let r = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = probs.len() - 1;
        for (j, p) in probs.iter().enumerate() {
            acc += p;
            if r < acc {
                pick = j;
                break;
            }
        }
        counts[pick] += 1;
    }
    counts
}

fn check_size(num_qubits: usize) -> Result<()> {
    if num_qubits == 0 || num_qubits > MAX_QUBITS {
        return Err(Error::Size(format!(
            "qubit count {num_qubits} outside 1..={MAX_QUBITS}"
        )));
    }
    Ok(())
}
