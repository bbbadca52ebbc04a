//! Classifier circuit assembly.
//!
//! Qubits `0..t` form the sample register and `t..2t` the label register.
//! After a Hadamard layer on the label register, each of `m` rounds applies
//! one label-controlled block per class, in ascending class order. A block
//! applies `V(x, w_j)` to sample qubit `j` for every `j`, controlled on the
//! label register reading the class's basis value.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::encoding::{build_v_unchecked, EncodedSample, UnitWeights};
use crate::error::{Error, Result};
use crate::statevector::{BasisControl, StateVector, Unitary2, MAX_QUBITS};

/// Integer hyperparameters fixing the circuit topology.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ShapeRepr", into = "ShapeRepr")]
pub struct CircuitShape {
    classes: usize,
    width: usize,
    reps: usize,
    units: usize,
}

#[derive(Serialize, Deserialize)]
struct ShapeRepr {
    classes: usize,
    width: usize,
    reps: usize,
    units: usize,
}

impl TryFrom<ShapeRepr> for CircuitShape {
    type Error = Error;

    fn try_from(r: ShapeRepr) -> Result<Self> {
        let shape = CircuitShape::new(r.classes, r.reps, r.units)?;
        if shape.width != r.width {
            return Err(Error::Shape(format!(
                "register width {} inconsistent with {} classes",
                r.width, r.classes
            )));
        }
        Ok(shape)
    }
}

impl From<CircuitShape> for ShapeRepr {
    fn from(s: CircuitShape) -> Self {
        ShapeRepr {
            classes: s.classes,
            width: s.width,
            reps: s.reps,
            units: s.units,
        }
    }
}

impl CircuitShape {
    /// `classes` ≥ 2, `reps` ≥ 1, `units` ≥ 1 encoding units per V.
    pub fn new(classes: usize, reps: usize, units: usize) -> Result<Self> {
        if classes < 2 {
            return Err(Error::Shape(format!("need at least 2 classes, got {classes}")));
        }
        if reps == 0 || units == 0 {
            return Err(Error::Shape("repetitions and encoding units must be >= 1".into()));
        }
        let width = register_width(classes);
        if 2 * width > MAX_QUBITS {
            return Err(Error::Size(format!("{classes} classes need {} qubits", 2 * width)));
        }
        Ok(Self {
            classes,
            width,
            reps,
            units,
        })
    }

    /// L
    pub fn classes(&self) -> usize {
        self.classes
    }

    /// t = ⌈log₂ L⌉
    pub fn width(&self) -> usize {
        self.width
    }

    /// m
    pub fn reps(&self) -> usize {
        self.reps
    }

    /// K
    pub fn units(&self) -> usize {
        self.units
    }

    pub fn n_padded(&self) -> usize {
        3 * self.units
    }

    pub fn num_qubits(&self) -> usize {
        2 * self.width
    }

    /// 0 when L is a power of two, otherwise 1: classes then occupy label
    /// values 1..=L and |0…0⟩ is left to padding.
    pub fn label_offset(&self) -> usize {
        usize::from(!self.classes.is_power_of_two())
    }

    /// Label-register basis value carrying `class`.
    pub fn label_value(&self, class: usize) -> usize {
        class + self.label_offset()
    }

    pub fn sample_qubits(&self) -> Vec<usize> {
        (0..self.width).collect()
    }

    pub fn label_qubits(&self) -> std::ops::Range<usize> {
        self.width..2 * self.width
    }

    pub fn param_count(&self) -> usize {
        self.classes * self.reps * self.width * self.units * 3
    }

    fn check_class(&self, class: usize) -> Result<()> {
        if class >= self.classes {
            return Err(Error::Index(format!(
                "class {class} out of range for {} classes",
                self.classes
            )));
        }
        Ok(())
    }

    fn check_features(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_padded() {
            return Err(Error::Shape(format!(
                "expected {} padded features, got {}",
                self.n_padded(),
                x.len()
            )));
        }
        Ok(())
    }
}

/// ⌈log₂ L⌉, with a floor of one qubit.
pub fn register_width(classes: usize) -> usize {
    (classes.max(2).next_power_of_two().trailing_zeros() as usize).max(1)
}

/// All trainable weights, flattened in (class, rep, qubit, unit, angle) order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterTensor {
    shape: CircuitShape,
    data: Vec<f64>,
}

impl ParameterTensor {
    pub fn zeros(shape: CircuitShape) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.param_count()],
        }
    }

    pub fn from_vec(shape: CircuitShape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.param_count() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                shape.param_count(),
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite parameter {v}")));
        }
        Ok(Self { shape, data })
    }

    /// Builds a tensor by evaluating `f(class, rep, qubit, unit, angle)`.
    pub fn from_fn(
        shape: CircuitShape,
        mut f: impl FnMut(usize, usize, usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(shape.param_count());
        for i in 0..shape.classes {
            for r in 0..shape.reps {
                for j in 0..shape.width {
                    for k in 0..shape.units {
                        for a in 0..3 {
                            data.push(f(i, r, j, k, a));
                        }
                    }
                }
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> &CircuitShape {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn index(&self, class: usize, rep: usize, qubit: usize, unit: usize, angle: usize) -> usize {
        let s = &self.shape;
        (((class * s.reps + rep) * s.width + qubit) * s.units + unit) * 3 + angle
    }

    /// Inverse of [`ParameterTensor::index`].
    pub fn coords(&self, flat: usize) -> (usize, usize, usize, usize, usize) {
        let s = &self.shape;
        let angle = flat % 3;
        let rest = flat / 3;
        let unit = rest % s.units;
        let rest = rest / s.units;
        let qubit = rest % s.width;
        let rest = rest / s.width;
        (rest / s.reps, rest % s.reps, qubit, unit, angle)
    }

    /// Weights of one (class, rep) block, indexed `[qubit * K + unit]`.
    pub fn block(&self, class: usize, rep: usize) -> &[UnitWeights] {
        let per_block = self.shape.width * self.shape.units * 3;
        let start = (class * self.shape.reps + rep) * per_block;
        self.data[start..start + per_block].as_chunks::<3>().0
    }

    /// K unit weights of one V.
    pub fn qubit_weights(&self, class: usize, rep: usize, qubit: usize) -> &[UnitWeights] {
        let k = self.shape.units;
        &self.block(class, rep)[qubit * k..(qubit + 1) * k]
    }
}

/// |0…0⟩_s ⊗ H^{⊗t}|0…0⟩_l.
pub fn initial_state(shape: &CircuitShape) -> StateVector {
    let mut sv = StateVector::new_zero(shape.num_qubits()).expect("shape bounds qubit count");
    let h = Unitary2::hadamard();
    for q in shape.label_qubits() {
        sv.apply_masked(q, &h, 0, 0);
    }
    sv
}

/// Control requiring the label register to read `value`.
pub fn label_control(shape: &CircuitShape, value: usize) -> BasisControl {
    BasisControl::on_value(shape.label_qubits(), value).expect("label qubits are distinct")
}

fn label_mask(shape: &CircuitShape, value: usize) -> (usize, usize) {
    let t = shape.width;
    (((1 << t) - 1) << t, value << t)
}

/// Applies class `class`'s block for one repetition. `rep_params` holds
/// `t·K` unit weights, qubit-major.
pub fn apply_class_block(
    sv: &mut StateVector,
    shape: &CircuitShape,
    class: usize,
    features: &[f64],
    rep_params: &[UnitWeights],
) -> Result<()> {
    shape.check_class(class)?;
    shape.check_features(features)?;
    if sv.num_qubits() != shape.num_qubits() {
        return Err(Error::Shape(format!(
            "state has {} qubits, circuit needs {}",
            sv.num_qubits(),
            shape.num_qubits()
        )));
    }
    let k = shape.units;
    if rep_params.len() != shape.width * k {
        return Err(Error::Shape(format!(
            "expected {} unit weights per block, got {}",
            shape.width * k,
            rep_params.len()
        )));
    }
    if let Some(w) = rep_params.iter().flatten().find(|w| !w.is_finite()) {
        return Err(Error::Numeric(format!("non-finite weight {w}")));
    }
    let (mask, value) = label_mask(shape, shape.label_value(class));
    for j in 0..shape.width {
        let v = build_v_unchecked(features, &rep_params[j * k..(j + 1) * k]);
        sv.apply_masked(j, &v, mask, value);
    }
    Ok(())
}

/// Checks a tuple holds one sample per class and returns them indexed by class.
pub(crate) fn order_tuple<'a>(
    shape: &CircuitShape,
    tuple: &'a [EncodedSample],
) -> Result<Vec<&'a [f64]>> {
    if tuple.len() != shape.classes {
        return Err(Error::Shape(format!(
            "tuple has {} samples, circuit has {} classes",
            tuple.len(),
            shape.classes
        )));
    }
    let mut slots: Vec<Option<&[f64]>> = vec![None; shape.classes];
    for s in tuple {
        shape.check_features(s.features())?;
        match slots.get_mut(s.label()) {
            Some(slot @ None) => *slot = Some(s.features()),
            Some(Some(_)) => {
                return Err(Error::Shape(format!("label {} appears twice in tuple", s.label())))
            }
            None => return Err(Error::Index(format!("label {} out of range", s.label()))),
        }
    }
    Ok(slots.into_iter().map(|s| s.expect("all slots filled")).collect())
}

/// Precomputed V matrices for every (rep, class, qubit), in application order.
pub(crate) fn block_unitaries(
    shape: &CircuitShape,
    per_class: &[&[f64]],
    w: &ParameterTensor,
) -> Vec<Unitary2> {
    let mut out = Vec::with_capacity(shape.reps * shape.classes * shape.width);
    for rep in 0..shape.reps {
        for (class, x) in per_class.iter().enumerate() {
            for j in 0..shape.width {
                out.push(build_v_unchecked(x, w.qubit_weights(class, rep, j)));
            }
        }
    }
    out
}

/// Runs the circuit with V matrices laid out as by [`block_unitaries`].
pub(crate) fn simulate(shape: &CircuitShape, unitaries: &[Unitary2]) -> StateVector {
    let mut sv = initial_state(shape);
    let t = shape.width;
    for (n, v) in unitaries.iter().enumerate() {
        let class = (n / t) % shape.classes;
        let j = n % t;
        let (mask, value) = label_mask(shape, shape.label_value(class));
        sv.apply_masked(j, v, mask, value);
    }
    sv
}

/// |Ψ_final(W)⟩ for one tuple holding a sample of every class.
pub fn build_final_state(
    shape: &CircuitShape,
    tuple: &[EncodedSample],
    w: &ParameterTensor,
) -> Result<StateVector> {
    check_params(shape, w)?;
    let per_class = order_tuple(shape, tuple)?;
    Ok(simulate(shape, &block_unitaries(shape, &per_class, w)))
}

/// Same circuit with one feature vector loaded into every class block.
pub(crate) fn build_shared_state(shape: &CircuitShape, x: &[f64], w: &ParameterTensor) -> StateVector {
    let per_class = vec![x; shape.classes];
    simulate(shape, &block_unitaries(shape, &per_class, w))
}

pub(crate) fn check_params(shape: &CircuitShape, w: &ParameterTensor) -> Result<()> {
    if w.shape() != shape {
        return Err(Error::Shape(format!(
            "parameter shape {:?} does not match circuit {:?}",
            w.shape(),
            shape
        )));
    }
    Ok(())
}

/// (1/√2^t) Σ_i |i⟩_s|i⟩_l over all 2^t values.
pub fn optimal_state(width: usize) -> Result<StateVector> {
    if !(1..=8).contains(&width) {
        return Err(Error::Size(format!("register width {width} outside 1..=8")));
    }
    let n = 1usize << width;
    let amp = Complex64::new(1.0 / (n as f64).sqrt(), 0.0);
    let mut amps = vec![Complex64::new(0.0, 0.0); 1 << (2 * width)];
    for i in 0..n {
        amps[i | (i << width)] = amp;
    }
    StateVector::from_amplitudes(amps)
}
