//! Inference: load one feature vector into every class block and read the
//! sample register.

use rand::Rng;

use crate::circuit::{build_shared_state, check_params, CircuitShape, ParameterTensor};
use crate::encoding::EncodedSample;
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::statevector::sample_from_probs;

/// Sample-register outcome distribution for features `x`.
pub fn predict_probs(shape: &CircuitShape, w: &ParameterTensor, x: &[f64]) -> Result<Vec<f64>> {
    check_params(shape, w)?;
    if x.len() != shape.n_padded() {
        return Err(Error::Shape(format!(
            "expected {} padded features, got {}",
            shape.n_padded(),
            x.len()
        )));
    }
    build_shared_state(shape, x, w).marginal_probs(&shape.sample_qubits())
}

/// Class id from sample-register scores. Only outcomes in the label window
/// `offset..offset + L` are eligible; outcome 0 is the padding artifact when
/// the offset is 1. Ties go to the smaller class id.
pub fn decode(shape: &CircuitShape, scores: &[f64]) -> usize {
    let offset = shape.label_offset();
    let window = &scores[offset..offset + shape.classes()];
    let mut best = 0;
    for (i, &p) in window.iter().enumerate() {
        if p > window[best] {
            best = i;
        }
    }
    best
}

pub fn classify(shape: &CircuitShape, w: &ParameterTensor, x: &[f64]) -> Result<usize> {
    Ok(decode(shape, &predict_probs(shape, w, x)?))
}

/// Decodes from `shots` sampled readouts instead of exact probabilities.
pub fn classify_shots<R: Rng + ?Sized>(
    shape: &CircuitShape,
    w: &ParameterTensor,
    x: &[f64],
    shots: usize,
    rng: &mut R,
) -> Result<usize> {
    if shots == 0 {
        return Err(Error::Config("shot count must be >= 1".into()));
    }
    let probs = predict_probs(shape, w, x)?;
    let counts: Vec<f64> = sample_from_probs(&probs, shots, rng)
        .into_iter()
        .map(|c| c as f64)
        .collect();
    Ok(decode(shape, &counts))
}

/// Predicted class of every sample, in order.
pub fn predict_all(
    exec: Exec,
    shape: &CircuitShape,
    w: &ParameterTensor,
    samples: &[EncodedSample],
) -> Result<Vec<usize>> {
    par::try_map_indexed(exec, samples.len(), |i| classify(shape, w, samples[i].features()))
}

pub fn evaluate_accuracy(shape: &CircuitShape, w: &ParameterTensor, samples: &[EncodedSample]) -> Result<f64> {
    evaluate_accuracy_with(Exec::default(), shape, w, samples)
}

pub fn evaluate_accuracy_with(
    exec: Exec,
    shape: &CircuitShape,
    w: &ParameterTensor,
    samples: &[EncodedSample],
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Data("accuracy of an empty sample set".into()));
    }
    let preds = predict_all(exec, shape, w, samples)?;
    let hits = preds
        .iter()
        .zip(samples)
        .filter(|(p, s)| **p == s.label())
        .count();
    Ok(hits as f64 / samples.len() as f64)
}

/// `confusion[true][predicted]` counts.
pub fn confusion_matrix(
    shape: &CircuitShape,
    w: &ParameterTensor,
    samples: &[EncodedSample],
) -> Result<Vec<Vec<usize>>> {
    let preds = predict_all(Exec::default(), shape, w, samples)?;
    let mut m = vec![vec![0usize; shape.classes()]; shape.classes()];
    for (p, s) in preds.iter().zip(samples) {
        if s.label() >= shape.classes() {
            return Err(Error::Index(format!("label {} out of range", s.label())));
        }
        m[s.label()][*p] += 1;
    }
    Ok(m)
}
