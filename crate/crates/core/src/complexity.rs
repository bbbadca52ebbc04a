//! Resource accounting for the label-controlled loading circuit.
//!
//! The closed-form gate and qubit counts are evaluated exactly and compared
//! against an explicit decomposition into Hadamard, X, Toffoli and
//! singly-controlled one-qubit gates. Work qubits follow the simulator
//! layout (sample `0..t`, label `t..2t`); ancillas occupy `2t..3t−1`.

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::circuit::{label_control, CircuitShape};
use crate::encoding::zyz;
use crate::error::{Error, Result};
use crate::statevector::{BasisControl, StateVector, Unitary2, MAX_QUBITS};

/// Closed-form total gate count `2^t·t·(k·m + 5/2) + (13/4)·2^t − 2t + 12`.
pub fn gate_count_formula(t: u32, k: u64, m: u64) -> Ratio<i64> {
    let p = Ratio::from_integer(1i64 << t);
    let t = Ratio::from_integer(i64::from(t));
    let km = Ratio::from_integer((k * m) as i64);
    p * t * (km + Ratio::new(5, 2)) + Ratio::new(13, 4) * p - Ratio::from_integer(2) * t
        + Ratio::from_integer(12)
}

/// Closed-form X-gate count `2^(t−2)·(2t+5) − 2t + 2`.
pub fn x_count_formula(t: u32) -> Ratio<i64> {
    let p = if t >= 2 {
        Ratio::from_integer(1i64 << (t - 2))
    } else {
        Ratio::new(1, 1i64 << (2 - t))
    };
    let t = i64::from(t);
    p * Ratio::from_integer(2 * t + 5) - Ratio::from_integer(2 * t) + Ratio::from_integer(2)
}

/// `3t − 1`: two t-qubit registers plus `t − 1` ancillas.
pub fn qubit_count(t: usize) -> usize {
    3 * t - 1
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Gate {
    Hadamard(usize),
    X(usize),
    Toffoli { c1: usize, c2: usize, target: usize },
    ControlledU { control: usize, target: usize, u: Unitary2 },
}

impl Gate {
    fn max_qubit(&self) -> usize {
        match *self {
            Gate::Hadamard(q) | Gate::X(q) => q,
            Gate::Toffoli { c1, c2, target } => c1.max(c2).max(target),
            Gate::ControlledU { control, target, .. } => control.max(target),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct GateCounts {
    pub hadamard: usize,
    pub x: usize,
    pub toffoli: usize,
    pub controlled_u: usize,
}

impl GateCounts {
    pub fn total(&self) -> usize {
        self.hadamard + self.x + self.toffoli + self.controlled_u
    }
}

/// Ordered gate sequence. [`GateList::push`] elides a self-inverse gate
/// against an identical neighbour: an X cancels a matching X anywhere in the
/// trailing run of X gates (they commute), and a Toffoli cancels an
/// identical Toffoli directly before it.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GateList {
    gates: Vec<Gate>,
}

impl GateList {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn push(&mut self, gate: Gate) {
        match gate {
            Gate::X(q) => {
                let run = self
                    .gates
                    .iter()
                    .rev()
                    .take_while(|g| matches!(g, Gate::X(_)))
                    .count();
                let start = self.gates.len() - run;
                if let Some(pos) = self.gates[start..].iter().rposition(|g| *g == Gate::X(q)) {
                    self.gates.remove(start + pos);
                    return;
                }
            }
            Gate::Toffoli { .. } if self.gates.last() == Some(&gate) => {
                self.gates.pop();
                return;
            }
            _ => {}
        }
        self.gates.push(gate);
    }

    pub fn extend(&mut self, other: &GateList) {
        for g in &other.gates {
            self.push(*g);
        }
    }

    pub fn counts(&self) -> GateCounts {
        let mut c = GateCounts::default();
        for g in &self.gates {
            match g {
                Gate::Hadamard(_) => c.hadamard += 1,
                Gate::X(_) => c.x += 1,
                Gate::Toffoli { .. } => c.toffoli += 1,
                Gate::ControlledU { .. } => c.controlled_u += 1,
            }
        }
        c
    }

    /// Number of qubits the sequence touches (highest index + 1).
    pub fn width(&self) -> usize {
        self.gates.iter().map(|g| g.max_qubit() + 1).max().unwrap_or(0)
    }

    pub fn apply(&self, sv: &mut StateVector) -> Result<()> {
        let x = Unitary2::pauli_x();
        for g in &self.gates {
            match *g {
                Gate::Hadamard(q) => sv.apply_single(q, &Unitary2::hadamard())?,
                Gate::X(q) => sv.apply_single(q, &x)?,
                Gate::Toffoli { c1, c2, target } => {
                    let ctl = BasisControl::new(vec![(c1, true), (c2, true)])?;
                    sv.apply_controlled(&ctl, target, &x)?
                }
                Gate::ControlledU { control, target, u } => {
                    let ctl = BasisControl::new(vec![(control, true)])?;
                    sv.apply_controlled(&ctl, target, &u)?
                }
            }
        }
        Ok(())
    }
}

/// Qubit indices of the decomposition layout for register width `t`.
#[derive(Clone, Copy, Debug)]
struct Layout {
    t: usize,
}

impl Layout {
    fn label(&self, j: usize) -> usize {
        self.t + j
    }

    fn ancilla(&self, j: usize) -> usize {
        2 * self.t + j
    }

    /// Toffoli ladder AND-ing the label qubits into the last ancilla.
    fn ladder(&self) -> Vec<Gate> {
        let t = self.t;
        let mut out = Vec::with_capacity(t.saturating_sub(1));
        if t >= 2 {
            out.push(Gate::Toffoli {
                c1: self.label(0),
                c2: self.label(1),
                target: self.ancilla(0),
            });
            for j in 2..t {
                out.push(Gate::Toffoli {
                    c1: self.label(j),
                    c2: self.ancilla(j - 2),
                    target: self.ancilla(j - 1),
                });
            }
        }
        out
    }

    /// Qubit that carries the AND of the control pattern.
    fn and_qubit(&self) -> usize {
        if self.t == 1 {
            self.label(0)
        } else {
            self.ancilla(self.t - 2)
        }
    }
}

/// One |value⟩-controlled operator: the control pattern is mapped to all
/// ones with X gates, reduced to one qubit by the ladder, then each unitary
/// in `units` is applied to `target` as a singly-controlled gate before the
/// ladder and X gates are undone.
fn push_controlled_operator(
    list: &mut GateList,
    layout: Layout,
    value: usize,
    target: usize,
    units: &[Unitary2],
) {
    let flips: Vec<Gate> = (0..layout.t)
        .filter(|j| (value >> j) & 1 == 0)
        .map(|j| Gate::X(layout.label(j)))
        .collect();
    let ladder = layout.ladder();
    let and = layout.and_qubit();
    for g in flips.iter().chain(&ladder) {
        list.push(*g);
    }
    for u in units {
        list.push(Gate::ControlledU {
            control: and,
            target,
            u: *u,
        });
    }
    for g in ladder.iter().rev().chain(flips.iter().rev()) {
        list.push(*g);
    }
}

/// Decomposes one label-controlled block: for each `(target, units)` pair a
/// |value⟩-controlled operator built from the listed unitaries, with
/// cancelling ladders and X pairs between consecutive operators elided.
pub fn decompose_multicontrolled(
    t: usize,
    value: usize,
    targets: &[(usize, Vec<Unitary2>)],
) -> Result<GateList> {
    if t == 0 || qubit_count(t) > MAX_QUBITS {
        return Err(Error::Size(format!("register width {t} unsupported")));
    }
    if value >= 1 << t {
        return Err(Error::Index(format!("control value {value} needs more than {t} bits")));
    }
    if let Some((q, _)) = targets.iter().find(|(q, _)| *q >= t) {
        return Err(Error::Index(format!("target {q} is not a sample qubit")));
    }
    let layout = Layout { t };
    let mut list = GateList::new();
    for (target, units) in targets {
        push_controlled_operator(&mut list, layout, value, *target, units);
    }
    Ok(list)
}

/// Per-(value, rep, qubit, unit) one-qubit unitaries for an audit circuit.
struct AuditUnitaries {
    t: usize,
    reps: usize,
    units: usize,
    data: Vec<Unitary2>,
}

impl AuditUnitaries {
    fn random(t: usize, reps: usize, units: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = (1 << t) * reps * t * units;
        let data = (0..n)
            .map(|_| {
                let mut a = || rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
                zyz(a(), a(), a())
            })
            .collect();
        Self { t, reps, units, data }
    }

    fn units_of(&self, value: usize, rep: usize, j: usize) -> &[Unitary2] {
        let start = ((value * self.reps + rep) * self.t + j) * self.units;
        &self.data[start..start + self.units]
    }

    fn v(&self, value: usize, rep: usize, j: usize) -> Unitary2 {
        self.units_of(value, rep, j)
            .iter()
            .fold(Unitary2::identity(), |acc, u| *u * acc)
    }

    /// All reps for one control value, each sample qubit in turn.
    fn targets(&self, value: usize) -> Vec<(usize, Vec<Unitary2>)> {
        (0..self.reps)
            .flat_map(|rep| (0..self.t).map(move |j| (rep, j)))
            .map(|(rep, j)| (j, self.units_of(value, rep, j).to_vec()))
            .collect()
    }
}

/// Deviation figures from the exhaustive basis-state comparison.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EquivalenceCheck {
    pub checked: bool,
    pub basis_states: usize,
    pub max_deviation: f64,
    pub max_ancilla_leak: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FormulaValues {
    /// Exact value rendered as `n` or `p/q`.
    pub gate_count: String,
    pub gate_count_value: f64,
    pub gate_count_integral: bool,
    pub x_count: String,
    pub qubits: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResourceReport {
    pub classes: usize,
    pub width: usize,
    pub units: usize,
    pub reps: usize,
    pub formula: FormulaValues,
    pub enumerated: GateCounts,
    pub enumerated_total: usize,
    pub enumerated_qubits: usize,
    pub expected_controlled_u: usize,
    pub expected_toffoli_per_value: usize,
    pub toffoli_per_value: Vec<usize>,
    pub controlled_u_matches: bool,
    pub toffoli_per_value_matches: bool,
    pub total_matches_formula: bool,
    pub x_matches_formula: bool,
    pub equivalence: EquivalenceCheck,
    pub notes: Vec<String>,
}

/// Largest register width for which the exhaustive equivalence check runs.
pub const MAX_AUDIT_WIDTH: usize = 3;

/// Builds the decomposed circuit for every control value and repetition,
/// checks it against the direct multi-controlled circuit when
/// `t ≤ MAX_AUDIT_WIDTH`, and tabulates counts against the closed forms.
/// Uses `shape.units()` as k.
pub fn audit(shape: &CircuitShape) -> Result<ResourceReport> {
    audit_seeded(shape, 0x5eed_a0d1)
}

pub fn audit_seeded(shape: &CircuitShape, seed: u64) -> Result<ResourceReport> {
    let t = shape.width();
    let (k, m) = (shape.units(), shape.reps());
    if qubit_count(t) > MAX_QUBITS {
        return Err(Error::Size(format!("audit needs {} qubits", qubit_count(t))));
    }
    let layout = Layout { t };
    let values = 1usize << t;
    let unitaries = AuditUnitaries::random(t, m, k, seed);

    let mut blocks = Vec::with_capacity(values);
    for value in 0..values {
        blocks.push(decompose_multicontrolled(t, value, &unitaries.targets(value))?);
    }
    let mut full = GateList::new();
    for q in 0..t {
        full.push(Gate::Hadamard(layout.label(q)));
    }
    for b in &blocks {
        full.extend(b);
    }

    let equivalence = if t <= MAX_AUDIT_WIDTH {
        check_equivalence(shape, &unitaries, &blocks, &full)?
    } else {
        EquivalenceCheck::default()
    };

    let counts = full.counts();
    let toffoli_per_value: Vec<usize> = blocks.iter().map(|b| b.counts().toffoli).collect();
    let expected_cu = values * t * k * m;
    let expected_toffoli = 2 * (t - 1);
    let formula = gate_count_formula(t as u32, k as u64, m as u64);
    let x_formula = x_count_formula(t as u32);
    let total = counts.total();
    let enumerated_qubits = (2 * t).max(full.width());

    let mut notes = Vec::new();
    if !formula.is_integer() {
        notes.push(format!("closed-form gate count {formula} is not an integer at t={t}"));
    }
    if Ratio::from_integer(total as i64) != formula {
        notes.push(format!(
            "enumerated total {total} (H {}, X {}, Toffoli {}, controlled-U {}) differs from closed form {formula}",
            counts.hadamard, counts.x, counts.toffoli, counts.controlled_u
        ));
    }
    if Ratio::from_integer(counts.x as i64) != x_formula {
        notes.push(format!(
            "enumerated X count {} differs from closed form {x_formula}",
            counts.x
        ));
    }
    if enumerated_qubits != qubit_count(t) {
        notes.push(format!(
            "decomposition touches {enumerated_qubits} qubits, closed form gives {}",
            qubit_count(t)
        ));
    }
    if !equivalence.checked {
        notes.push(format!("equivalence check skipped for t={t} > {MAX_AUDIT_WIDTH}"));
    }

    Ok(ResourceReport {
        classes: shape.classes(),
        width: t,
        units: k,
        reps: m,
        formula: FormulaValues {
            gate_count: formula.to_string(),
            gate_count_value: *formula.numer() as f64 / *formula.denom() as f64,
            gate_count_integral: formula.is_integer(),
            x_count: x_formula.to_string(),
            qubits: qubit_count(t),
        },
        enumerated: counts,
        enumerated_total: total,
        enumerated_qubits,
        expected_controlled_u: expected_cu,
        expected_toffoli_per_value: expected_toffoli,
        controlled_u_matches: counts.controlled_u == expected_cu,
        toffoli_per_value_matches: toffoli_per_value.iter().all(|&n| n == expected_toffoli),
        toffoli_per_value,
        total_matches_formula: Ratio::from_integer(total as i64) == formula,
        x_matches_formula: Ratio::from_integer(counts.x as i64) == x_formula,
        equivalence,
        notes,
    })
}

/// Applies the direct circuit of one control value (all reps) on the
/// ancilla-extended register.
fn apply_direct_block(
    sv: &mut StateVector,
    shape: &CircuitShape,
    unitaries: &AuditUnitaries,
    value: usize,
    rep: usize,
) -> Result<()> {
    let ctl = label_control(shape, value);
    for j in 0..shape.width() {
        sv.apply_controlled(&ctl, j, &unitaries.v(value, rep, j))?;
    }
    Ok(())
}

fn compare_on_basis(
    n_qubits: usize,
    work_dim: usize,
    direct: impl Fn(&mut StateVector) -> Result<()>,
    decomposed: &GateList,
    ancilla_mask: usize,
    check: &mut EquivalenceCheck,
) -> Result<Option<String>> {
    for b in 0..work_dim {
        let mut lhs = StateVector::basis(n_qubits, b)?;
        direct(&mut lhs)?;
        let mut rhs = StateVector::basis(n_qubits, b)?;
        decomposed.apply(&mut rhs)?;
        let dev = lhs
            .amplitudes()
            .iter()
            .zip(rhs.amplitudes())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max);
        let leak: f64 = rhs
            .amplitudes()
            .iter()
            .enumerate()
            .filter(|(i, _)| i & ancilla_mask != 0)
            .map(|(_, a)| a.norm_sqr())
            .sum();
        check.basis_states += 1;
        check.max_deviation = check.max_deviation.max(dev);
        check.max_ancilla_leak = check.max_ancilla_leak.max(leak);
        if dev > 1e-9 || leak > 1e-12 {
            return Ok(Some(format!(
                "basis state {b}: deviation {dev:e}, ancilla leak {leak:e}"
            )));
        }
    }
    Ok(None)
}

fn check_equivalence(
    shape: &CircuitShape,
    unitaries: &AuditUnitaries,
    blocks: &[GateList],
    full: &GateList,
) -> Result<EquivalenceCheck> {
    let t = shape.width();
    let n = qubit_count(t).max(2 * t);
    let work_dim = 1usize << (2 * t);
    let ancilla_mask = ((1usize << n) - 1) & !(work_dim - 1);
    let mut check = EquivalenceCheck {
        checked: true,
        ..Default::default()
    };
    for (value, block) in blocks.iter().enumerate() {
        let direct = |sv: &mut StateVector| -> Result<()> {
            for rep in 0..shape.reps() {
                apply_direct_block(sv, shape, unitaries, value, rep)?;
            }
            Ok(())
        };
        if let Some(msg) = compare_on_basis(n, work_dim, direct, block, ancilla_mask, &mut check)? {
            return Err(Error::Audit {
                control_value: value,
                message: msg,
            });
        }
    }
    // Whole circuit: the direct form is rep-major, the decomposition groups
    // each control value's reps under one ladder.
    let direct_full = |sv: &mut StateVector| -> Result<()> {
        for q in 0..t {
            sv.apply_single(t + q, &Unitary2::hadamard())?;
        }
        for rep in 0..shape.reps() {
            for value in 0..(1 << t) {
                apply_direct_block(sv, shape, unitaries, value, rep)?;
            }
        }
        Ok(())
    };
    if let Some(msg) = compare_on_basis(n, work_dim, direct_full, full, ancilla_mask, &mut check)? {
        return Err(Error::Audit {
            control_value: usize::MAX,
            message: format!("full circuit: {msg}"),
        });
    }
    Ok(check)
}
