//! Weighted SU(2) data encoding.
//!
//! A padded feature vector of length 3K is split into K triples; unit `k`
//! contributes the rotation `su2(w_k ∘ x_k)` and the units are multiplied so
//! unit 0 acts first.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::statevector::Unitary2;

/// Per-unit weight triple, one multiplier per angle.
pub type UnitWeights = [f64; 3];

/// A feature vector padded to a multiple of three, plus its class id.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedSample {
    features: Vec<f64>,
    label: usize,
}

impl EncodedSample {
    /// Pads `raw` with zeros and checks every entry lies in [0, 1].
    pub fn new(raw: &[f64], label: usize) -> Result<Self> {
        if let Some((i, v)) = raw
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::Data(format!("feature {i} = {v} outside [0, 1]")));
        }
        Ok(Self {
            features: pad_features(raw)?,
            label,
        })
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn units(&self) -> usize {
        self.features.len() / 3
    }
}

/// Zero-pads to the smallest multiple of three not below the input length.
pub fn pad_features(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::Shape("cannot pad an empty feature vector".into()));
    }
    let padded = x.len().div_ceil(3) * 3;
    let mut out = Vec::with_capacity(padded);
    out.extend_from_slice(x);
    out.resize(padded, 0.0);
    Ok(out)
}

/// `Rz(phi3) · Ry(phi2) · Rz(phi1)`.
pub fn su2(phi1: f64, phi2: f64, phi3: f64) -> Result<Unitary2> {
    if !(phi1.is_finite() && phi2.is_finite() && phi3.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite rotation angle ({phi1}, {phi2}, {phi3})"
        )));
    }
    Ok(zyz(phi1, phi2, phi3))
}

/// Unchecked ZYZ rotation; callers guarantee finite angles.
#[inline]
pub(crate) fn zyz(phi1: f64, phi2: f64, phi3: f64) -> Unitary2 {
    let (s, c) = (0.5 * phi2).sin_cos();
    let sum = 0.5 * (phi1 + phi3);
    let diff = 0.5 * (phi1 - phi3);
    let e_sum = Complex64::from_polar(1.0, sum);
    let e_diff = Complex64::from_polar(1.0, diff);
    Unitary2::new(
        e_sum.conj() * c,
        -e_diff * s,
        e_diff.conj() * s,
        e_sum * c,
    )
}

/// Rotation for one unit: angles are the elementwise product of weights and
/// the unit's three features.
#[inline]
pub(crate) fn unit_rotation(x: &[f64], w: &UnitWeights) -> Unitary2 {
    zyz(w[0] * x[0], w[1] * x[1], w[2] * x[2])
}

/// `U(w_K ∘ x_K) ··· U(w_1 ∘ x_1)`.
pub fn build_v(features: &[f64], weights: &[UnitWeights]) -> Result<Unitary2> {
    if features.len() != 3 * weights.len() {
        return Err(Error::Shape(format!(
            "{} features for {} encoding units",
            features.len(),
            weights.len()
        )));
    }
    if let Some(w) = weights.iter().flatten().find(|w| !w.is_finite()) {
        return Err(Error::Numeric(format!("non-finite weight {w}")));
    }
    Ok(build_v_unchecked(features, weights))
}

pub(crate) fn build_v_unchecked(features: &[f64], weights: &[UnitWeights]) -> Unitary2 {
    features
        .chunks_exact(3)
        .zip(weights)
        .fold(Unitary2::identity(), |acc, (x, w)| unit_rotation(x, w) * acc)
}
