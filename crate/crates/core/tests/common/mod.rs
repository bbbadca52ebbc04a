//! Reference implementations shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::path::PathBuf;

use num_complex::Complex64;
use qpc::statevector::Unitary2;

pub fn mnist_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")
}

pub fn mnist_images() -> PathBuf {
    mnist_dir().join("digits10k-images-idx3-ubyte.gz")
}

pub fn mnist_labels() -> PathBuf {
    mnist_dir().join("digits10k-labels-idx1-ubyte.gz")
}

/// A gate as a matrix acting on the full register: `u` on `target`, gated by
/// `(qubit, required bit)` controls.
#[derive(Clone, Debug)]
pub struct RefGate {
    pub target: usize,
    pub controls: Vec<(usize, bool)>,
    pub u: Unitary2,
}

impl RefGate {
    /// Matrix element ⟨row|G|col⟩ written out from the definition.
    pub fn element(&self, row: usize, col: usize) -> Complex64 {
        let t = self.target;
        let zero = Complex64::new(0.0, 0.0);
        if (row ^ col) & !(1 << t) != 0 {
            return zero;
        }
        let active = self
            .controls
            .iter()
            .all(|&(q, bit)| ((col >> q) & 1 == 1) == bit);
        let (r, c) = ((row >> t) & 1, (col >> t) & 1);
        if active {
            self.u.m[r][c]
        } else if r == c {
            Complex64::new(1.0, 0.0)
        } else {
            zero
        }
    }

    /// Dense matrix-vector product over every (row, col) pair.
    pub fn apply_dense(&self, v: &[Complex64]) -> Vec<Complex64> {
        (0..v.len())
            .map(|row| (0..v.len()).map(|col| self.element(row, col) * v[col]).sum())
            .collect()
    }
}

pub fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn rz(theta: f64) -> Unitary2 {
    let z = Complex64::new(0.0, 0.0);
    Unitary2::new(Complex64::from_polar(1.0, -theta / 2.0), z, z, Complex64::from_polar(1.0, theta / 2.0))
}

pub fn ry(theta: f64) -> Unitary2 {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let r = |x: f64| Complex64::new(x, 0.0);
    Unitary2::new(r(c), r(-s), r(s), r(c))
}

/// Rz(c)·Ry(b)·Rz(a) as an explicit matrix product.
pub fn zyz_ref(a: f64, b: f64, c: f64) -> Unitary2 {
    rz(c) * ry(b) * rz(a)
}
