//! Fidelity cost, its finite-difference gradient, and the Adam update.

use serde::{Deserialize, Serialize};

use crate::circuit::{
    block_unitaries, build_final_state, check_params, optimal_state, order_tuple, simulate,
    CircuitShape, ParameterTensor,
};
use crate::encoding::{unit_rotation, EncodedSample, UnitWeights};
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::statevector::{StateVector, Unitary2};

/// Default central-difference step.
pub const DEFAULT_GRAD_EPS: f64 = 1e-4;

/// M tuples, each holding one sample of every class.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    tuples: Vec<Vec<EncodedSample>>,
}

impl Batch {
    pub fn new(tuples: Vec<Vec<EncodedSample>>) -> Result<Self> {
        if tuples.is_empty() {
            return Err(Error::Shape("batch has no tuples".into()));
        }
        let arity = tuples[0].len();
        for (r, tuple) in tuples.iter().enumerate() {
            let mut seen = vec![false; arity];
            if tuple.len() != arity {
                return Err(Error::Shape(format!(
                    "tuple {r} has {} samples, expected {arity}",
                    tuple.len()
                )));
            }
            for s in tuple {
                match seen.get_mut(s.label()) {
                    Some(flag @ false) => *flag = true,
                    _ => {
                        return Err(Error::Shape(format!(
                            "tuple {r} does not hold each label 0..{arity} exactly once"
                        )))
                    }
                }
            }
        }
        Ok(Self { tuples })
    }

    pub fn tuples(&self) -> &[Vec<EncodedSample>] {
        &self.tuples
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }
}

/// |⟨Ψ_optimal|Ψ_final(W)⟩|² for one tuple.
pub fn fidelity(shape: &CircuitShape, tuple: &[EncodedSample], w: &ParameterTensor) -> Result<f64> {
    let target = optimal_state(shape.width())?;
    let sv = build_final_state(shape, tuple, w)?;
    Ok(target.inner_product(&sv)?.norm_sqr())
}

/// Mean of `1 − fidelity` over the batch.
pub fn cost(shape: &CircuitShape, batch: &Batch, w: &ParameterTensor) -> Result<f64> {
    cost_with(Exec::default(), shape, batch, w)
}

pub fn cost_with(
    exec: Exec,
    shape: &CircuitShape,
    batch: &Batch,
    w: &ParameterTensor,
) -> Result<f64> {
    check_params(shape, w)?;
    let target = optimal_state(shape.width())?;
    let tuples = batch.tuples();
    let terms = par::try_map_indexed(exec, tuples.len(), |r| -> Result<f64> {
        let sv = build_final_state(shape, &tuples[r], w)?;
        Ok(1.0 - target.inner_product(&sv)?.norm_sqr())
    })?;
    let c = mean_in_order(&terms);
    if !c.is_finite() {
        return Err(Error::Numeric(format!("cost evaluated to {c}")));
    }
    Ok(c)
}

fn mean_in_order(terms: &[f64]) -> f64 {
    terms.iter().sum::<f64>() / terms.len() as f64
}

/// Cached circuit pieces for one tuple: every encoding unit's rotation plus
/// prefix/suffix products, so a single-coordinate perturbation rebuilds one V
/// with two matrix products instead of K rotations.
struct TupleCache<'a> {
    per_class: Vec<&'a [f64]>,
    /// V per block, in application order (rep, class, qubit).
    blocks: Vec<Unitary2>,
    /// `prefix[b*K + k]` = U_{k-1} ··· U_0 of block b.
    prefix: Vec<Unitary2>,
    /// `suffix[b*K + k]` = U_{K-1} ··· U_{k+1} of block b.
    suffix: Vec<Unitary2>,
}

impl<'a> TupleCache<'a> {
    fn new(shape: &CircuitShape, tuple: &'a [EncodedSample], w: &ParameterTensor) -> Result<Self> {
        let per_class = order_tuple(shape, tuple)?;
        let blocks = block_unitaries(shape, &per_class, w);
        let k_units = shape.units();
        let t = shape.width();
        let n_blocks = blocks.len();
        let mut prefix = vec![Unitary2::identity(); n_blocks * k_units];
        let mut suffix = vec![Unitary2::identity(); n_blocks * k_units];
        for b in 0..n_blocks {
            let (rep, class, j) = (b / (t * shape.classes()), (b / t) % shape.classes(), b % t);
            let x = per_class[class];
            let weights = w.qubit_weights(class, rep, j);
            let units: Vec<Unitary2> = (0..k_units)
                .map(|k| unit_rotation(&x[3 * k..3 * k + 3], &weights[k]))
                .collect();
            let mut acc = Unitary2::identity();
            for k in 0..k_units {
                prefix[b * k_units + k] = acc;
                acc = units[k] * acc;
            }
            let mut acc = Unitary2::identity();
            for k in (0..k_units).rev() {
                suffix[b * k_units + k] = acc;
                acc = acc * units[k];
            }
        }
        Ok(Self {
            per_class,
            blocks,
            prefix,
            suffix,
        })
    }

    /// `1 − fidelity` with block `b`'s unit `k` rotated by `weights`.
    fn perturbed_term(
        &self,
        shape: &CircuitShape,
        target: &StateVector,
        b: usize,
        class: usize,
        k: usize,
        weights: &UnitWeights,
    ) -> f64 {
        let k_units = shape.units();
        let x = &self.per_class[class][3 * k..3 * k + 3];
        let v = self.suffix[b * k_units + k] * unit_rotation(x, weights) * self.prefix[b * k_units + k];
        let mut blocks = self.blocks.clone();
        blocks[b] = v;
        let sv = simulate(shape, &blocks);
        let ov = target
            .inner_product(&sv)
            .expect("target and circuit share a width");
        1.0 - ov.norm_sqr()
    }
}

/// Central finite-difference gradient of [`cost`].
pub fn grad_fd(
    shape: &CircuitShape,
    batch: &Batch,
    w: &ParameterTensor,
    eps: f64,
) -> Result<ParameterTensor> {
    grad_fd_with(Exec::default(), shape, batch, w, eps)
}

pub fn grad_fd_with(
    exec: Exec,
    shape: &CircuitShape,
    batch: &Batch,
    w: &ParameterTensor,
    eps: f64,
) -> Result<ParameterTensor> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Numeric(format!("finite-difference step {eps} must be > 0")));
    }
    check_params(shape, w)?;
    let target = optimal_state(shape.width())?;
    let caches = batch
        .tuples()
        .iter()
        .map(|tuple| TupleCache::new(shape, tuple, w))
        .collect::<Result<Vec<_>>>()?;
    let t = shape.width();
    let grads = par::try_map_indexed(exec, w.len(), |flat| -> Result<f64> {
        let (class, rep, j, k, a) = w.coords(flat);
        let b = (rep * shape.classes() + class) * t + j;
        let base = w.qubit_weights(class, rep, j)[k];
        let mut plus = base;
        plus[a] += eps;
        let mut minus = base;
        minus[a] -= eps;
        let hi: Vec<f64> = caches
            .iter()
            .map(|c| c.perturbed_term(shape, &target, b, class, k, &plus))
            .collect();
        let lo: Vec<f64> = caches
            .iter()
            .map(|c| c.perturbed_term(shape, &target, b, class, k, &minus))
            .collect();
        let (c_hi, c_lo) = (mean_in_order(&hi), mean_in_order(&lo));
        if !(c_hi.is_finite() && c_lo.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite cost while differentiating coordinate {flat}"
            )));
        }
        Ok((c_hi - c_lo) / (2.0 * eps))
    })?;
    ParameterTensor::from_vec(*shape, grads)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            step_size: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.step_size > 0.0
            && self.step_size.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Adam hyperparameters {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
}

impl AdamState {
    pub fn new(config: AdamConfig, len: usize) -> Self {
        Self {
            config,
            step: 0,
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
        }
    }
}

/// One bias-corrected Adam update of `w` in place.
pub fn adam_step(w: &mut ParameterTensor, grad: &ParameterTensor, state: &mut AdamState) -> Result<()> {
    let n = w.len();
    if grad.len() != n || state.first_moment.len() != n || state.second_moment.len() != n {
        return Err(Error::Shape(format!(
            "Adam shapes disagree: params {n}, grad {}, moments {}/{}",
            grad.len(),
            state.first_moment.len(),
            state.second_moment.len()
        )));
    }
    let AdamConfig {
        step_size,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    state.step += 1;
    let step = i32::try_from(state.step).unwrap_or(i32::MAX);
    let c1 = 1.0 - beta1.powi(step);
    let c2 = 1.0 - beta2.powi(step);
    for (((p, &g), m), v) in w
        .as_mut_slice()
        .iter_mut()
        .zip(grad.as_slice())
        .zip(&mut state.first_moment)
        .zip(&mut state.second_moment)
    {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= step_size * m_hat / (v_hat.sqrt() + epsilon);
    }
    Ok(())
}
