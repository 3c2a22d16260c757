//! Feature maps, hardware-efficient ansatz and the identity-initialized
//! sandwich layout, expressed as gate programs with symbolic parameter slots.
//!
//! A [`CircuitProgram`] is an ordered list of gate slots. Rotation slots bind
//! their angle to a constant, to an encoded input variable through a feature
//! map, or to an entry of the variational parameter vector. Programs are
//! immutable after construction and safe to evaluate concurrently against
//! distinct scratch states.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::statevector::{
    self, mat_mul, rx_matrix, ry_matrix, rz_matrix, CostOperator, Pauli, QuantumState,
    IDENTITY_2X2,
};

/// Distance kept from the encoding domain endpoints before arcsin/arccos, so
/// the map derivatives stay finite on clamped inputs.
pub const VAR_CLAMP: f64 = 1e-9;

/// Input variable consumed by a feature map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Var {
    /// Latent variable `z` in `[-1, 1]`.
    Latent,
    /// Time variable `t`.
    Time,
}

/// Encoding function family for a feature map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum FeatureMapKind {
    /// `phi_j(x) = arcsin(x)` on every qubit.
    Product,
    /// `phi_j(x) = j * arcsin(x)`, qubit-dependent frequency.
    Tower,
    /// `phi_j(x) = 2j * arccos(x)`.
    ChebyshevTower,
}

/// One feature map: encoding family, rotation axis and the variable it reads.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FeatureMapSpec {
    pub kind: FeatureMapKind,
    pub axis: Pauli,
    pub variable: Var,
}

/// Clamps an encoded variable into the open interval `(-1, 1)`.
pub fn clamp_variable(x: f64) -> f64 {
    x.clamp(-1.0 + VAR_CLAMP, 1.0 - VAR_CLAMP)
}

/// Encoding angle `phi_j(x)` for 1-based tower index `j`.
pub fn phi(kind: FeatureMapKind, j: usize, x: f64) -> f64 {
    let x = clamp_variable(x);
    match kind {
        FeatureMapKind::Product => x.asin(),
        FeatureMapKind::Tower => j as f64 * x.asin(),
        FeatureMapKind::ChebyshevTower => 2.0 * j as f64 * x.acos(),
    }
}

/// First derivative `phi_j'(x)`, analytic.
pub fn phi_d1(kind: FeatureMapKind, j: usize, x: f64) -> f64 {
    let x = clamp_variable(x);
    let root = (1.0 - x * x).sqrt();
    match kind {
        FeatureMapKind::Product => 1.0 / root,
        FeatureMapKind::Tower => j as f64 / root,
        FeatureMapKind::ChebyshevTower => -2.0 * j as f64 / root,
    }
}

/// Second derivative `phi_j''(x)`, analytic.
pub fn phi_d2(kind: FeatureMapKind, j: usize, x: f64) -> f64 {
    let x = clamp_variable(x);
    let pow = (1.0 - x * x).powf(1.5);
    match kind {
        FeatureMapKind::Product => x / pow,
        FeatureMapKind::Tower => j as f64 * x / pow,
        FeatureMapKind::ChebyshevTower => -2.0 * j as f64 * x / pow,
    }
}

/// Layered variational circuit shape: `depth` layers of per-qubit RZ-RY-RZ
/// triples followed by a nearest-neighbor CNOT line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct AnsatzSpec {
    pub n_qubits: usize,
    pub depth: usize,
}

impl AnsatzSpec {
    /// Three Euler angles per qubit per layer.
    pub fn parameter_count(&self) -> usize {
        3 * self.n_qubits * self.depth
    }
}

/// Angle binding of a rotation slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Binding {
    Constant(f64),
    /// Angle `phi_j(x)` of the bound variable; `tower_index` is 1-based.
    Variable { var: Var, map: FeatureMapKind, tower_index: usize },
    /// Angle `scale * theta[index]`; `scale` is -1 in adjoint blocks.
    Parameter { index: usize, scale: f64 },
}

/// One slot of a program.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProgramGate {
    Rotation { axis: Pauli, target: usize, binding: Binding },
    Cnot { control: usize, target: usize },
}

/// Values of the encoded input variables for one evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarValues {
    pub latent: f64,
    pub time: f64,
}

impl VarValues {
    pub fn new(latent: f64, time: f64) -> Self {
        VarValues { latent, time }
    }

    pub fn get(&self, var: Var) -> f64 {
        match var {
            Var::Latent => self.latent,
            Var::Time => self.time,
        }
    }
}

/// Ordered gate program with symbolic parameter slots.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitProgram {
    n_qubits: usize,
    gates: Vec<ProgramGate>,
    n_params: usize,
    latent_slots: Vec<usize>,
    time_slots: Vec<usize>,
    param_slots: Vec<Vec<usize>>,
}

impl CircuitProgram {
    pub fn new(n_qubits: usize, gates: Vec<ProgramGate>) -> Result<Self> {
        let mut n_params = 0usize;
        for g in &gates {
            match *g {
                ProgramGate::Rotation { target, binding, .. } => {
                    if target >= n_qubits {
                        return Err(Error::Config(format!(
                            "rotation target {target} out of range for {n_qubits} qubits"
                        )));
                    }
                    if let Binding::Parameter { index, .. } = binding {
                        n_params = n_params.max(index + 1);
                    }
                }
                ProgramGate::Cnot { control, target } => {
                    if control >= n_qubits || target >= n_qubits || control == target {
                        return Err(Error::Config(format!(
                            "invalid cnot ({control}, {target}) on {n_qubits} qubits"
                        )));
                    }
                }
            }
        }
        let mut latent_slots = Vec::new();
        let mut time_slots = Vec::new();
        let mut param_slots = vec![Vec::new(); n_params];
        for (i, g) in gates.iter().enumerate() {
            if let ProgramGate::Rotation { binding, .. } = g {
                match *binding {
                    Binding::Variable { var: Var::Latent, .. } => latent_slots.push(i),
                    Binding::Variable { var: Var::Time, .. } => time_slots.push(i),
                    Binding::Parameter { index, .. } => param_slots[index].push(i),
                    Binding::Constant(_) => {}
                }
            }
        }
        Ok(CircuitProgram { n_qubits, gates, n_params, latent_slots, time_slots, param_slots })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn gates(&self) -> &[ProgramGate] {
        &self.gates
    }

    /// Slot indices whose angle is bound to `var`.
    pub fn variable_slots(&self, var: Var) -> &[usize] {
        match var {
            Var::Latent => &self.latent_slots,
            Var::Time => &self.time_slots,
        }
    }

    /// Slot indices bound to parameter `index`.
    pub fn parameter_slots(&self, index: usize) -> &[usize] {
        &self.param_slots[index]
    }

    /// Appends another program over the same qubit register. Parameter
    /// indices are kept as-is; builders allocate disjoint ranges.
    pub fn concat(mut self, other: CircuitProgram) -> Result<Self> {
        if other.n_qubits != self.n_qubits {
            return Err(Error::Config("cannot concat programs with different widths".into()));
        }
        self.gates.extend(other.gates);
        CircuitProgram::new(self.n_qubits, self.gates)
    }

    /// Resolved angle of slot `slot` (before shifts).
    pub fn slot_angle(&self, slot: usize, theta: &[f64], vars: &VarValues) -> f64 {
        match self.gates[slot] {
            ProgramGate::Rotation { binding, .. } => match binding {
                Binding::Constant(a) => a,
                Binding::Variable { var, map, tower_index } => phi(map, tower_index, vars.get(var)),
                Binding::Parameter { index, scale } => scale * theta[index],
            },
            ProgramGate::Cnot { .. } => 0.0,
        }
    }

    /// Runs the program on `|0...0>` and returns the final state.
    pub fn run_state(&self, theta: &[f64], vars: &VarValues) -> Result<QuantumState> {
        let mut scratch = EvalScratch::new(self.n_qubits)?;
        self.prepare_state(theta, vars, &[], &mut scratch)?;
        Ok(scratch.state.clone())
    }

    /// Applies all gates to the scratch state (reset to `|0...0>` first),
    /// fusing runs of single-qubit rotations into one 2x2 matrix sweep per
    /// qubit between entanglers.
    fn prepare_state(
        &self,
        theta: &[f64],
        vars: &VarValues,
        shifts: &[(usize, f64)],
        scratch: &mut EvalScratch,
    ) -> Result<()> {
        scratch.state.reset_zero();
        self.apply_range(0..self.gates.len(), theta, vars, shifts, scratch)
    }

    /// Evaluates raw cost expectations (term weights applied, global weight
    /// not) for one angle assignment. `shifts` add to slot angles.
    pub fn raw_expectations_into(
        &self,
        theta: &[f64],
        vars: &VarValues,
        shifts: &[(usize, f64)],
        costs: &[CostOperator],
        scratch: &mut EvalScratch,
        out: &mut Vec<f64>,
    ) -> Result<()> {
        self.prepare_state(theta, vars, shifts, scratch)?;
        out.clear();
        for c in costs {
            let unit = CostOperator { terms: c.terms.clone(), global_weight: 1.0 };
            out.push(statevector::expectation(&scratch.state, &unit)?);
        }
        Ok(())
    }
}

/// Exact rotation matrix for a quarter-turn multiple of pi/2.
pub fn quarter_matrix(axis: Pauli, quarters: i8) -> [[Complex64; 2]; 2] {
    const R: f64 = std::f64::consts::FRAC_1_SQRT_2;
    let (c, s) = match quarters {
        -2 => (0.0, -1.0),
        -1 => (R, -R),
        1 => (R, R),
        2 => (0.0, 1.0),
        _ => unreachable!("unsupported quarter-turn {quarters}"),
    };
    match axis {
        Pauli::X => [
            [Complex64::new(c, 0.0), Complex64::new(0.0, -s)],
            [Complex64::new(0.0, -s), Complex64::new(c, 0.0)],
        ],
        Pauli::Y => [
            [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
            [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
        ],
        Pauli::Z => [
            [Complex64::new(c, -s), Complex64::new(0.0, 0.0)],
            [Complex64::new(0.0, 0.0), Complex64::new(c, s)],
        ],
    }
}

/// A program compiled around its variable-bound region for one fixed
/// parameter assignment: the gates before the first variable slot collapse
/// into a prepared state, the gates after the last one into a dense matrix.
/// Evaluations that only shift variable slots then cost one short rotation
/// sweep plus a matrix-vector product.
#[derive(Debug, Clone)]
pub struct CompiledVariant {
    n_qubits: usize,
    mid_start: usize,
    mid_end: usize,
    head_state: QuantumState,
    /// Column-major `2^n x 2^n` tail unitary.
    tail_cols: Vec<Complex64>,
}

impl CompiledVariant {
    /// Gate index range of the variable-bound mid section.
    pub fn mid_range(&self) -> (usize, usize) {
        (self.mid_start, self.mid_end)
    }

    pub fn head_state(&self) -> &QuantumState {
        &self.head_state
    }

    /// `out = tail * input`.
    pub fn apply_tail(&self, input: &[Complex64], out: &mut [Complex64]) {
        let dim = 1usize << self.n_qubits;
        out.fill(Complex64::new(0.0, 0.0));
        for (k, &amp) in input.iter().enumerate() {
            if amp == Complex64::new(0.0, 0.0) {
                continue;
            }
            let col = &self.tail_cols[k * dim..(k + 1) * dim];
            for (o, &m) in out.iter_mut().zip(col) {
                *o += m * amp;
            }
        }
    }
}

impl CircuitProgram {
    /// Bounds of the contiguous gate range covering every variable-bound
    /// slot, provided that range contains only single-qubit rotations.
    pub fn mid_bounds(&self) -> Option<(usize, usize)> {
        let first = self
            .gates
            .iter()
            .position(|g| matches!(g, ProgramGate::Rotation { binding: Binding::Variable { .. }, .. }))?;
        let last = self
            .gates
            .iter()
            .rposition(|g| matches!(g, ProgramGate::Rotation { binding: Binding::Variable { .. }, .. }))?;
        let all_rotations = self.gates[first..=last]
            .iter()
            .all(|g| matches!(g, ProgramGate::Rotation { .. }));
        all_rotations.then_some((first, last + 1))
    }

    /// Compiles the program for a fixed `theta` (plus angle `shifts`), ready
    /// for repeated evaluation under varying variable-slot angles.
    pub fn compile_split(&self, theta: &[f64], shifts: &[(usize, f64)]) -> Result<CompiledVariant> {
        let (mid_start, mid_end) = self.mid_bounds().ok_or_else(|| {
            Error::Config("program has no contiguous rotation-only variable section".into())
        })?;
        let vars = VarValues::new(0.0, 0.0);
        // head: run the leading gates on |0...0>
        let mut scratch = EvalScratch::new(self.n_qubits)?;
        self.apply_range(0..mid_start, theta, &vars, shifts, &mut scratch)?;
        let head_state = scratch.state.clone();
        // tail: evolve every basis column through the trailing gates
        let dim = 1usize << self.n_qubits;
        let mut tail_cols = vec![Complex64::new(0.0, 0.0); dim * dim];
        for k in 0..dim {
            scratch.state.set_basis(k);
            self.apply_range(mid_end..self.gates.len(), theta, &vars, shifts, &mut scratch)?;
            tail_cols[k * dim..(k + 1) * dim].copy_from_slice(scratch.state.amplitudes());
        }
        Ok(CompiledVariant { n_qubits: self.n_qubits, mid_start, mid_end, head_state, tail_cols })
    }

    /// Applies a gate index range to the scratch state with fusion.
    fn apply_range(
        &self,
        range: std::ops::Range<usize>,
        theta: &[f64],
        vars: &VarValues,
        shifts: &[(usize, f64)],
        scratch: &mut EvalScratch,
    ) -> Result<()> {
        if theta.len() < self.n_params {
            return Err(Error::Config(format!(
                "parameter vector of length {} but program uses {}",
                theta.len(),
                self.n_params
            )));
        }
        for p in scratch.pending.iter_mut() {
            *p = None;
        }
        for i in range {
            match self.gates[i] {
                ProgramGate::Rotation { axis, target, .. } => {
                    let mut angle = self.slot_angle(i, theta, vars);
                    for &(s, d) in shifts {
                        if s == i {
                            angle += d;
                        }
                    }
                    let m = match axis {
                        Pauli::X => rx_matrix(angle),
                        Pauli::Y => ry_matrix(angle),
                        Pauli::Z => rz_matrix(angle),
                    };
                    scratch.pending[target] = Some(match scratch.pending[target] {
                        Some(p) => mat_mul(&m, &p),
                        None => m,
                    });
                }
                ProgramGate::Cnot { control, target } => {
                    scratch.flush(control);
                    scratch.flush(target);
                    scratch.state.apply_cnot(control, target);
                }
            }
        }
        for q in 0..self.n_qubits {
            scratch.flush(q);
        }
        Ok(())
    }
}

/// Reusable per-evaluator buffers: the working state and per-qubit fusion
/// slots.
pub struct EvalScratch {
    state: QuantumState,
    pending: Vec<Option<[[Complex64; 2]; 2]>>,
}

impl EvalScratch {
    pub fn new(n_qubits: usize) -> Result<Self> {
        Ok(EvalScratch {
            state: statevector::zero_state(n_qubits)?,
            pending: vec![None; n_qubits],
        })
    }

    fn flush(&mut self, qubit: usize) {
        if let Some(m) = self.pending[qubit].take() {
            if m != IDENTITY_2X2 {
                self.state.apply_single_qubit(qubit, &m);
            }
        }
    }
}

/// One rotation per qubit with the angle bound to `phi_j(variable)`.
pub fn build_feature_map(spec: &FeatureMapSpec, n_qubits: usize) -> Result<CircuitProgram> {
    let gates = (0..n_qubits)
        .map(|q| ProgramGate::Rotation {
            axis: spec.axis,
            target: q,
            binding: Binding::Variable { var: spec.variable, map: spec.kind, tower_index: q + 1 },
        })
        .collect();
    CircuitProgram::new(n_qubits, gates)
}

/// Hardware-efficient ansatz: `depth` layers of per-qubit RZ-RY-RZ triples
/// with distinct parameter slots, each followed by an open CNOT line
/// `(0,1),(1,2),...`. Parameters occupy `offset..offset + 3*n*depth`.
pub fn build_hea_at(spec: &AnsatzSpec, offset: usize) -> Result<CircuitProgram> {
    let n = spec.n_qubits;
    if spec.depth == 0 {
        return Err(Error::Config("ansatz depth must be >= 1".into()));
    }
    let mut gates = Vec::with_capacity(spec.depth * (3 * n + n.saturating_sub(1)));
    for layer in 0..spec.depth {
        for q in 0..n {
            let base = offset + 3 * (layer * n + q);
            for (k, axis) in [Pauli::Z, Pauli::Y, Pauli::Z].into_iter().enumerate() {
                gates.push(ProgramGate::Rotation {
                    axis,
                    target: q,
                    binding: Binding::Parameter { index: base + k, scale: 1.0 },
                });
            }
        }
        for q in 0..n.saturating_sub(1) {
            gates.push(ProgramGate::Cnot { control: q, target: q + 1 });
        }
    }
    CircuitProgram::new(n, gates)
}

pub fn build_hea(spec: &AnsatzSpec) -> Result<CircuitProgram> {
    build_hea_at(spec, 0)
}

/// Adjoint-structured HEA block with an independent parameter range starting
/// at `offset`. Slot `offset + i` mirrors slot `i` of [`build_hea_at`] so the
/// block is the exact inverse of the forward block when the two parameter
/// ranges hold equal values.
pub fn build_hea_adjoint_at(spec: &AnsatzSpec, offset: usize) -> Result<CircuitProgram> {
    let n = spec.n_qubits;
    if spec.depth == 0 {
        return Err(Error::Config("ansatz depth must be >= 1".into()));
    }
    let mut gates = Vec::new();
    for layer in (0..spec.depth).rev() {
        for q in (0..n.saturating_sub(1)).rev() {
            gates.push(ProgramGate::Cnot { control: q, target: q + 1 });
        }
        for q in (0..n).rev() {
            let base = offset + 3 * (layer * n + q);
            // dagger of [RZ(a), RY(b), RZ(c)] is [RZ(-c), RY(-b), RZ(-a)]
            for (k, axis) in [(2, Pauli::Z), (1, Pauli::Y), (0, Pauli::Z)] {
                gates.push(ProgramGate::Rotation {
                    axis,
                    target: q,
                    binding: Binding::Parameter { index: base + k, scale: -1.0 },
                });
            }
        }
    }
    CircuitProgram::new(n, gates)
}

/// Result of [`build_initialized_sandwich`]: the program and a parameter
/// vector with both variational blocks paired to the identity.
pub struct SandwichProgram {
    pub program: CircuitProgram,
    pub theta0: Vec<f64>,
}

/// Builds the sandwich program
/// `init layers -> Ua(th1) Ua'(th2) -> feature map -> Ub(th3) Ub'(th4)`.
///
/// `init_angles` holds `2n` constants: one RY layer then one RZ layer. The
/// four parameter ranges are independent slots; total parameter count is
/// `4 * ansatz.parameter_count()`.
pub fn build_sandwich_program(
    ansatz: &AnsatzSpec,
    fm: &FeatureMapSpec,
    init_angles: &[f64],
) -> Result<CircuitProgram> {
    let n = ansatz.n_qubits;
    if init_angles.len() != 2 * n {
        return Err(Error::Config(format!(
            "init_angles must have 2*n_qubits = {} entries, got {}",
            2 * n,
            init_angles.len()
        )));
    }
    let block = ansatz.parameter_count();
    let mut gates = Vec::new();
    for q in 0..n {
        gates.push(ProgramGate::Rotation {
            axis: Pauli::Y,
            target: q,
            binding: Binding::Constant(init_angles[q]),
        });
    }
    for q in 0..n {
        gates.push(ProgramGate::Rotation {
            axis: Pauli::Z,
            target: q,
            binding: Binding::Constant(init_angles[n + q]),
        });
    }
    CircuitProgram::new(n, gates)?
        .concat(build_hea_at(ansatz, 0)?)?
        .concat(build_hea_adjoint_at(ansatz, block)?)?
        .concat(build_feature_map(fm, n)?)?
        .concat(build_hea_at(ansatz, 2 * block)?)?
        .concat(build_hea_adjoint_at(ansatz, 3 * block)?)
}

/// Draws a parameter vector for the sandwich with `th1 == th2` and
/// `th3 == th4`, so both variational blocks start as the identity.
pub fn paired_sandwich_theta<R: Rng>(ansatz: &AnsatzSpec, rng: &mut R) -> Vec<f64> {
    let block = ansatz.parameter_count();
    let mut theta0 = vec![0.0; 4 * block];
    for i in 0..block {
        let v = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        theta0[i] = v;
        theta0[block + i] = v;
    }
    for i in 0..block {
        let v = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        theta0[2 * block + i] = v;
        theta0[3 * block + i] = v;
    }
    theta0
}

/// Convenience composition of [`build_sandwich_program`] and
/// [`paired_sandwich_theta`].
pub fn build_initialized_sandwich<R: Rng>(
    ansatz: &AnsatzSpec,
    fm: &FeatureMapSpec,
    init_angles: &[f64],
    rng: &mut R,
) -> Result<SandwichProgram> {
    let program = build_sandwich_program(ansatz, fm, init_angles)?;
    let theta0 = paired_sandwich_theta(ansatz, rng);
    Ok(SandwichProgram { program, theta0 })
}

/// Output of the classical initialization fit.
#[derive(Debug, Clone)]
pub struct InitFit {
    /// `2n` angles: RY layer then RZ layer.
    pub init_angles: Vec<f64>,
    /// Per-qubit cost weights.
    pub alphas: Vec<f64>,
    /// Fitted `(cos, sin)` coefficient pair per qubit.
    pub coefficients: Vec<(f64, f64)>,
    /// Root-mean-square residual of the least-squares fit.
    pub residual: f64,
    /// Set when the basis was rank-deficient and the minimum-norm solution
    /// was used.
    pub condition_warning: bool,
}

/// Relative singular-value cutoff for the least-squares pseudoinverse.
const SVD_RCOND: f64 = 1e-12;

/// Fits target values onto the basis `{cos(phi_j(x)), sin(phi_j(x))}_j` and
/// maps the coefficients back to initialization-layer angles and per-qubit
/// cost weights, so the initialized circuit reproduces the fit.
///
/// Z-axis encodings are rejected: a Z rotation commutes with the Z readout,
/// which makes the initialization stage independent of the encoded variable.
pub fn classical_init_fit(
    targets: &[(f64, f64)],
    fm: &FeatureMapSpec,
    n_qubits: usize,
) -> Result<InitFit> {
    if targets.is_empty() {
        return Err(Error::Config("empty target set".into()));
    }
    if targets.len() < 2 * n_qubits {
        return Err(Error::Config(format!(
            "need at least {} target points for {} qubits, got {}",
            2 * n_qubits,
            n_qubits,
            targets.len()
        )));
    }
    if fm.axis == Pauli::Z {
        return Err(Error::Config(
            "classical initialization needs an X- or Y-axis encoding; Z rotations \
             commute with the Z readout"
                .into(),
        ));
    }
    let m = targets.len();
    let cols = 2 * n_qubits;
    let mut a = nalgebra::DMatrix::<f64>::zeros(m, cols);
    let mut y = nalgebra::DVector::<f64>::zeros(m);
    for (i, &(x, v)) in targets.iter().enumerate() {
        y[i] = v;
        for j in 1..=n_qubits {
            let p = phi(fm.kind, j, x);
            a[(i, 2 * (j - 1))] = p.cos();
            a[(i, 2 * (j - 1) + 1)] = p.sin();
        }
    }
    let svd = a.clone().svd(true, true);
    let s_max = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > SVD_RCOND * s_max)
        .count();
    let condition_warning = rank < cols;
    let coef = svd
        .solve(&y, SVD_RCOND * s_max)
        .map_err(|e| Error::Config(format!("least-squares solve failed: {e}")))?;
    let resid = (&a * &coef - &y).norm() / (m as f64).sqrt();

    let mut init_angles = vec![0.0; 2 * n_qubits];
    let mut alphas = vec![0.0; n_qubits];
    let mut coefficients = Vec::with_capacity(n_qubits);
    for j in 0..n_qubits {
        let c1 = coef[2 * j];
        let c2 = coef[2 * j + 1];
        coefficients.push((c1, c2));
        let amp = c1.hypot(c2);
        if amp < 1e-12 {
            // unconstrained qubit: neutral weight, identity init rotation
            alphas[j] = 1.0;
            continue;
        }
        alphas[j] = amp;
        match fm.axis {
            // <Z>(phi) = cos(eta) cos(phi) - sin(eta) cos(gamma) sin(phi)
            Pauli::Y => {
                init_angles[j] = (-c2).atan2(c1);
                init_angles[n_qubits + j] = 0.0;
            }
            // <Z>(phi) = cos(eta) cos(phi) + sin(eta) sin(gamma) sin(phi)
            Pauli::X => {
                init_angles[j] = c2.atan2(c1);
                init_angles[n_qubits + j] = std::f64::consts::FRAC_PI_2;
            }
            Pauli::Z => unreachable!(),
        }
    }
    Ok(InitFit { init_angles, alphas, coefficients, residual: resid, condition_warning })
}

/// Value of the initialization-stage trial function at `x`, from its fitted
/// coefficient form. Used to cross-check the circuit against the fit.
pub fn init_fit_value(fit: &InitFit, fm: &FeatureMapSpec, n_qubits: usize, x: f64) -> f64 {
    (0..n_qubits)
        .map(|j| {
            let (c1, c2) = fit.coefficients[j];
            let p = phi(fm.kind, j + 1, x);
            c1 * p.cos() + c2 * p.sin()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn fm(kind: FeatureMapKind, axis: Pauli, variable: Var) -> FeatureMapSpec {
        FeatureMapSpec { kind, axis, variable }
    }

    #[test]
    fn product_map_at_zero_is_identity() {
        let spec = fm(FeatureMapKind::Product, Pauli::Y, Var::Time);
        let p = build_feature_map(&spec, 6).unwrap();
        let vars = VarValues::new(0.0, 0.0);
        for slot in 0..6 {
            assert!(p.slot_angle(slot, &[], &vars).abs() < 1e-15);
        }
        let s = p.run_state(&[], &vars).unwrap();
        assert!((s.amplitudes()[0].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tower_map_angles_at_one() {
        let spec = fm(FeatureMapKind::Tower, Pauli::Z, Var::Latent);
        let p = build_feature_map(&spec, 3).unwrap();
        let vars = VarValues::new(1.0, 0.0);
        // domain clamp at 1 - 1e-9 perturbs arcsin by ~sqrt(2e-9) per tower step
        for (slot, expect) in [(0, PI / 2.0), (1, PI), (2, 3.0 * PI / 2.0)] {
            assert!(
                (p.slot_angle(slot, &[], &vars) - expect).abs() < 5e-4,
                "slot {slot} angle off"
            );
        }
    }

    #[test]
    fn chebyshev_map_angles_at_one() {
        let spec = fm(FeatureMapKind::ChebyshevTower, Pauli::X, Var::Latent);
        let p = build_feature_map(&spec, 2).unwrap();
        let vars = VarValues::new(1.0, 0.0);
        for slot in 0..2 {
            assert!(p.slot_angle(slot, &[], &vars).abs() < 1e-3);
        }
    }

    #[test]
    fn hea_parameter_count() {
        let p = build_hea(&AnsatzSpec { n_qubits: 6, depth: 6 }).unwrap();
        assert_eq!(p.n_params(), 108);
    }

    #[test]
    fn hea_small_gate_sequence() {
        let p = build_hea(&AnsatzSpec { n_qubits: 2, depth: 1 }).unwrap();
        let axes: Vec<_> = p
            .gates()
            .iter()
            .map(|g| match *g {
                ProgramGate::Rotation { axis, target, .. } => (Some(axis), target),
                ProgramGate::Cnot { control, target } => (None, 10 * control + target),
            })
            .collect();
        assert_eq!(
            axes,
            vec![
                (Some(Pauli::Z), 0),
                (Some(Pauli::Y), 0),
                (Some(Pauli::Z), 0),
                (Some(Pauli::Z), 1),
                (Some(Pauli::Y), 1),
                (Some(Pauli::Z), 1),
                (None, 1)
            ]
        );
    }

    #[test]
    fn hea_zero_parameters_fixes_zero_state() {
        let p = build_hea(&AnsatzSpec { n_qubits: 4, depth: 3 }).unwrap();
        let theta = vec![0.0; p.n_params()];
        let s = p.run_state(&theta, &VarValues::new(0.0, 0.0)).unwrap();
        assert!((s.amplitudes()[0].re - 1.0).abs() < 1e-12);
        assert!(s.amplitudes()[1..].iter().all(|a| a.norm() < 1e-12));
    }

    #[test]
    fn hea_slots_are_unique() {
        let p = build_hea(&AnsatzSpec { n_qubits: 3, depth: 4 }).unwrap();
        for i in 0..p.n_params() {
            assert_eq!(p.parameter_slots(i).len(), 1);
        }
    }

    #[test]
    fn adjoint_block_inverts_forward_block() {
        let ansatz = AnsatzSpec { n_qubits: 3, depth: 2 };
        let block = ansatz.parameter_count();
        let p = build_hea_at(&ansatz, 0)
            .unwrap()
            .concat(build_hea_adjoint_at(&ansatz, block).unwrap())
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let half: Vec<f64> = (0..block).map(|_| rng.gen_range(-PI..PI)).collect();
        let mut theta = half.clone();
        theta.extend_from_slice(&half);
        // start from a non-trivial state by prepending rotations
        let mut pre = vec![];
        for q in 0..3 {
            pre.push(ProgramGate::Rotation {
                axis: Pauli::Y,
                target: q,
                binding: Binding::Constant(0.3 + q as f64),
            });
        }
        let reference = CircuitProgram::new(3, pre.clone()).unwrap();
        let combined = CircuitProgram::new(3, pre).unwrap().concat(p).unwrap();
        let vars = VarValues::new(0.0, 0.0);
        let a = reference.run_state(&[], &vars).unwrap();
        let b = combined.run_state(&theta, &vars).unwrap();
        for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn sandwich_with_paired_parameters_reduces_to_init_and_map() {
        let ansatz = AnsatzSpec { n_qubits: 3, depth: 2 };
        let spec = fm(FeatureMapKind::Tower, Pauli::X, Var::Latent);
        let init: Vec<f64> = (0..6).map(|i| 0.2 * i as f64 - 0.5).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sw = build_initialized_sandwich(&ansatz, &spec, &init, &mut rng).unwrap();

        // reference: init layers then feature map only
        let mut gates = Vec::new();
        for q in 0..3 {
            gates.push(ProgramGate::Rotation {
                axis: Pauli::Y,
                target: q,
                binding: Binding::Constant(init[q]),
            });
        }
        for q in 0..3 {
            gates.push(ProgramGate::Rotation {
                axis: Pauli::Z,
                target: q,
                binding: Binding::Constant(init[3 + q]),
            });
        }
        let reference = CircuitProgram::new(3, gates)
            .unwrap()
            .concat(build_feature_map(&spec, 3).unwrap())
            .unwrap();

        let vars = VarValues::new(0.37, 0.0);
        let a = reference.run_state(&[], &vars).unwrap();
        let b = sw.program.run_state(&sw.theta0, &vars).unwrap();
        for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn sandwich_zero_init_product_map_at_zero_is_zero_state() {
        let ansatz = AnsatzSpec { n_qubits: 2, depth: 1 };
        let spec = fm(FeatureMapKind::Product, Pauli::X, Var::Latent);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sw = build_initialized_sandwich(&ansatz, &spec, &[0.0; 4], &mut rng).unwrap();
        let s = sw.program.run_state(&sw.theta0, &VarValues::new(0.0, 0.0)).unwrap();
        assert!((s.amplitudes()[0].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sandwich_rejects_wrong_init_length() {
        let ansatz = AnsatzSpec { n_qubits: 3, depth: 1 };
        let spec = fm(FeatureMapKind::Product, Pauli::X, Var::Latent);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(build_initialized_sandwich(&ansatz, &spec, &[0.0; 5], &mut rng).is_err());
    }

    #[test]
    fn single_qubit_sandwich_matches_two_by_two_algebra() {
        // init RY(pi/2), Z-axis tower map: <Z> stays 0 while <X> traces
        // cos(arcsin z) = sqrt(1 - z^2).
        let ansatz = AnsatzSpec { n_qubits: 1, depth: 1 };
        let spec = fm(FeatureMapKind::Tower, Pauli::Z, Var::Latent);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let sw =
            build_initialized_sandwich(&ansatz, &spec, &[PI / 2.0, 0.0], &mut rng).unwrap();
        let x_cost = CostOperator {
            terms: vec![crate::statevector::PauliTerm { qubit: 0, pauli: Pauli::X, weight: 1.0 }],
            global_weight: 1.0,
        };
        let z_cost = CostOperator::total_z(1);
        let mut scratch = EvalScratch::new(1).unwrap();
        let mut out = Vec::new();
        for &z in &[-0.7, -0.2, 0.0, 0.4, 0.9] {
            let vars = VarValues::new(z, 0.0);
            sw.program
                .raw_expectations_into(&sw.theta0, &vars, &[], &[x_cost.clone()], &mut scratch, &mut out)
                .unwrap();
            let expect_x = (1.0 - z * z).sqrt();
            assert!((out[0] - expect_x).abs() < 1e-12, "z={z}: {} vs {expect_x}", out[0]);
            sw.program
                .raw_expectations_into(&sw.theta0, &vars, &[], &[z_cost.clone()], &mut scratch, &mut out)
                .unwrap();
            assert!(out[0].abs() < 1e-12);
        }
    }

    #[test]
    fn init_fit_recovers_in_basis_target() {
        let spec = fm(FeatureMapKind::Product, Pauli::Y, Var::Latent);
        let targets: Vec<(f64, f64)> = (0..10)
            .map(|i| {
                let x = -0.9 + 0.2 * i as f64;
                (x, x.asin().cos())
            })
            .collect();
        let fit = classical_init_fit(&targets, &spec, 1).unwrap();
        assert!(fit.residual <= 1e-10, "residual {}", fit.residual);
    }

    #[test]
    fn init_fit_of_zero_target() {
        let spec = fm(FeatureMapKind::Tower, Pauli::Y, Var::Latent);
        let targets: Vec<(f64, f64)> = (0..8).map(|i| (-0.8 + 0.2 * i as f64, 0.0)).collect();
        let fit = classical_init_fit(&targets, &spec, 2).unwrap();
        for &(c1, c2) in &fit.coefficients {
            assert!(c1.abs() < 1e-10 && c2.abs() < 1e-10);
        }
        assert!(fit.alphas.iter().all(|&a| a == 1.0));
    }

    #[test]
    fn init_fit_rejects_z_axis() {
        let spec = fm(FeatureMapKind::Tower, Pauli::Z, Var::Latent);
        let targets: Vec<(f64, f64)> = (0..8).map(|i| (-0.8 + 0.2 * i as f64, 1.0)).collect();
        assert!(classical_init_fit(&targets, &spec, 2).is_err());
    }

    #[test]
    fn init_fit_product_basis_is_rank_deficient_for_many_qubits() {
        let spec = fm(FeatureMapKind::Product, Pauli::Y, Var::Latent);
        let targets: Vec<(f64, f64)> =
            (0..12).map(|i| (-0.9 + 0.16 * i as f64, (i as f64 * 0.3).sin())).collect();
        let fit = classical_init_fit(&targets, &spec, 3).unwrap();
        assert!(fit.condition_warning);
    }

    #[test]
    fn initialized_circuit_reproduces_fit_for_both_axes() {
        for axis in [Pauli::X, Pauli::Y] {
            let spec = fm(FeatureMapKind::Tower, axis, Var::Latent);
            let n = 3;
            let targets: Vec<(f64, f64)> = (0..20)
                .map(|i| {
                    let x = -0.95 + 0.1 * i as f64;
                    (x, 0.8 * x + 0.3 * (2.0 * x).cos())
                })
                .collect();
            let fit = classical_init_fit(&targets, &spec, n).unwrap();
            let ansatz = AnsatzSpec { n_qubits: n, depth: 2 };
            let mut rng = ChaCha8Rng::seed_from_u64(21);
            let sw =
                build_initialized_sandwich(&ansatz, &spec, &fit.init_angles, &mut rng).unwrap();
            let costs: Vec<CostOperator> =
                (0..n).map(|q| CostOperator::z_on(q, fit.alphas[q])).collect();
            let mut scratch = EvalScratch::new(n).unwrap();
            let mut out = Vec::new();
            for &x in &[-0.8, -0.3, 0.1, 0.6, 0.9] {
                let vars = VarValues::new(x, 0.0);
                sw.program
                    .raw_expectations_into(&sw.theta0, &vars, &[], &costs, &mut scratch, &mut out)
                    .unwrap();
                let circuit: f64 =
                    out.iter().zip(&fit.alphas).map(|(raw, a)| raw * a).sum();
                let classical: f64 = (0..n)
                    .map(|j| {
                        let (c1, c2) = fit.coefficients[j];
                        let p = phi(spec.kind, j + 1, x);
                        c1 * p.cos() + c2 * p.sin()
                    })
                    .sum();
                assert!(
                    (circuit - classical).abs() < 1e-10,
                    "axis {axis:?} x={x}: circuit {circuit} vs fit {classical}"
                );
            }
        }
    }
}
