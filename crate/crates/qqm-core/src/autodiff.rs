//! Parameter-shift differentiation of circuit expectations.
//!
//! Derivatives with respect to encoded variables use the shift rule for
//! Pauli rotations: with `N` slots binding the variable,
//!
//! ```text
//! dG/dx    = 1/2 sum_j phi_j'(x) (<G_j^+> - <G_j^->)
//! d2G/dx2  = 1/2 sum_j phi_j''(x) (<G_j^+> - <G_j^->)
//!          + 1/4 sum_jk phi_j'(x) phi_k'(x)
//!              (<G_jk^++> - <G_jk^+-> - <G_jk^-+> + <G_jk^-->)
//! ```
//!
//! where the superscripts denote the slot angle shifted by +-pi/2. A cold
//! first derivative costs exactly `2N` circuit evaluations; the naive second
//! derivative costs `2N + 4N^2`. With a warm cache holding the function value
//! and the first-derivative evaluations, the symmetric double shifts collapse
//! so the second derivative needs exactly `2N^2` additional evaluations.
//! Evaluation and cache-hit counters are first-class so these counts are
//! testable.
//!
//! An [`EvalSession`] owns the cache and counters for one `(theta, point)`
//! evaluation. Sessions resolve every rotation matrix once at construction;
//! a quarter-turn shift then composes with the cached matrix instead of
//! re-evaluating trigonometry. When the program splits around its
//! variable-bound section, a precompiled [`CompiledVariant`] turns each
//! evaluation into a short rotation sweep plus one matrix-vector product.
//! Sessions are single-threaded; callers parallelize across points and
//! parameter shifts, each task holding its own session.

use std::cell::{Cell, RefCell};
use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;

use crate::circuits::{
    phi_d1, phi_d2, quarter_matrix, Binding, CircuitProgram, CompiledVariant, ProgramGate, Var,
    VarValues,
};
use crate::error::{Error, Result};
use crate::statevector::{
    self, mat_mul, rx_matrix, ry_matrix, rz_matrix, CostOperator, Pauli, QuantumState,
};

/// Quarter-turn shift descriptor: `(slot index, multiples of pi/2)`.
pub type Shift = (usize, i8);

/// Evaluation and cache statistics for one session.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalCounters {
    /// Circuit expectation evaluations performed.
    pub evaluations: usize,
    /// Requests answered from the cache.
    pub cache_hits: usize,
}

/// Structured per-session cache over variable-slot shifts: the base value,
/// single-slot shifts of +-pi/2 and +-pi, and same-variable double shifts.
struct ShiftCache {
    base: Option<Vec<f64>>,
    single: Vec<[Option<Vec<f64>>; 4]>,
    double: Vec<[Option<Vec<f64>>; 4]>,
}

fn quarter_index(q: i8) -> usize {
    match q {
        -2 => 0,
        -1 => 1,
        1 => 2,
        2 => 3,
        _ => unreachable!("unsupported quarter-turn {q}"),
    }
}

enum PreparedCost {
    /// All terms are Z: expectation is a probability-weighted diagonal.
    Diagonal(Vec<f64>),
    General,
}

/// Differentiation session for a fixed program, parameter vector and
/// variable point. `base_shifts` pin additional quarter-turn offsets into
/// every evaluation (used for parameter-shift gradients through a loss).
pub struct EvalSession<'a> {
    program: &'a CircuitProgram,
    vars: VarValues,
    costs: &'a [CostOperator],
    variant: Option<&'a CompiledVariant>,
    /// Resolved rotation matrix per gate slot, base shifts included.
    slot_matrices: Vec<Option<[[Complex64; 2]; 2]>>,
    prepared: Vec<PreparedCost>,
    cache: Option<RefCell<ShiftCache>>,
    evaluations: Cell<usize>,
    cache_hits: Cell<usize>,
    state_a: RefCell<QuantumState>,
    state_b: RefCell<QuantumState>,
    pending: RefCell<Vec<Option<[[Complex64; 2]; 2]>>>,
    probs: RefCell<Vec<f64>>,
    /// Variable-slot lookup: global slot index -> (variable, position).
    slot_pos: Vec<Option<(Var, usize)>>,
}

impl<'a> EvalSession<'a> {
    pub fn new(
        program: &'a CircuitProgram,
        theta: &'a [f64],
        vars: VarValues,
        costs: &'a [CostOperator],
        use_cache: bool,
    ) -> Result<Self> {
        Self::with_options(program, theta, vars, costs, use_cache, Vec::new(), None)
    }

    /// Session whose every evaluation carries the given extra shifts.
    pub fn with_base_shifts(
        program: &'a CircuitProgram,
        theta: &'a [f64],
        vars: VarValues,
        costs: &'a [CostOperator],
        use_cache: bool,
        base_shifts: Vec<Shift>,
    ) -> Result<Self> {
        Self::with_options(program, theta, vars, costs, use_cache, base_shifts, None)
    }

    /// Full constructor. When `variant` is given it must have been compiled
    /// from the same program, theta and base shifts; evaluations whose
    /// shifted slots all fall inside the variant's mid section then use the
    /// fast path.
    pub fn with_options(
        program: &'a CircuitProgram,
        theta: &'a [f64],
        vars: VarValues,
        costs: &'a [CostOperator],
        use_cache: bool,
        base_shifts: Vec<Shift>,
        variant: Option<&'a CompiledVariant>,
    ) -> Result<Self> {
        if theta.len() < program.n_params() {
            return Err(Error::Config(format!(
                "parameter vector of length {} but program uses {}",
                theta.len(),
                program.n_params()
            )));
        }
        let n_latent = program.variable_slots(Var::Latent).len();
        let n_time = program.variable_slots(Var::Time).len();
        let mut slot_pos = vec![None; program.gates().len()];
        for (pos, &slot) in program.variable_slots(Var::Latent).iter().enumerate() {
            slot_pos[slot] = Some((Var::Latent, pos));
        }
        for (pos, &slot) in program.variable_slots(Var::Time).iter().enumerate() {
            slot_pos[slot] = Some((Var::Time, pos));
        }

        let mut slot_matrices = Vec::with_capacity(program.gates().len());
        for (i, g) in program.gates().iter().enumerate() {
            match g {
                ProgramGate::Rotation { axis, .. } => {
                    let mut angle = program.slot_angle(i, theta, &vars);
                    for &(s, q) in &base_shifts {
                        if s == i {
                            angle += q as f64 * FRAC_PI_2;
                        }
                    }
                    let m = match axis {
                        Pauli::X => rx_matrix(angle),
                        Pauli::Y => ry_matrix(angle),
                        Pauli::Z => rz_matrix(angle),
                    };
                    slot_matrices.push(Some(m));
                }
                ProgramGate::Cnot { .. } => slot_matrices.push(None),
            }
        }

        let dim = 1usize << program.n_qubits();
        let prepared = costs
            .iter()
            .map(|c| {
                if c.terms.iter().all(|t| t.pauli == Pauli::Z) {
                    let mut d = vec![0.0; dim];
                    for (i, di) in d.iter_mut().enumerate() {
                        for t in &c.terms {
                            let sign = if i >> t.qubit & 1 == 0 { 1.0 } else { -1.0 };
                            *di += t.weight * sign;
                        }
                    }
                    PreparedCost::Diagonal(d)
                } else {
                    PreparedCost::General
                }
            })
            .collect();

        let cache = if use_cache {
            let n_slots = n_latent + n_time;
            let n_pairs = n_latent * n_latent + n_time * n_time;
            Some(RefCell::new(ShiftCache {
                base: None,
                single: vec![[None, None, None, None]; n_slots],
                double: vec![[None, None, None, None]; n_pairs],
            }))
        } else {
            None
        };
        Ok(EvalSession {
            program,
            vars,
            costs,
            variant,
            slot_matrices,
            prepared,
            cache,
            evaluations: Cell::new(0),
            cache_hits: Cell::new(0),
            state_a: RefCell::new(statevector::zero_state(program.n_qubits())?),
            state_b: RefCell::new(statevector::zero_state(program.n_qubits())?),
            pending: RefCell::new(vec![None; program.n_qubits()]),
            probs: RefCell::new(vec![0.0; dim]),
            slot_pos,
        })
    }

    pub fn counters(&self) -> EvalCounters {
        EvalCounters { evaluations: self.evaluations.get(), cache_hits: self.cache_hits.get() }
    }

    fn cache_table_pos_single(&self, slot: usize) -> Option<usize> {
        let (var, pos) = self.slot_pos[slot]?;
        let n_latent = self.program.variable_slots(Var::Latent).len();
        Some(match var {
            Var::Latent => pos,
            Var::Time => n_latent + pos,
        })
    }

    fn cache_table_pos_double(&self, a: usize, b: usize) -> Option<usize> {
        let (va, pa) = self.slot_pos[a]?;
        let (vb, pb) = self.slot_pos[b]?;
        if va != vb {
            return None;
        }
        let n_latent = self.program.variable_slots(Var::Latent).len();
        let n_time = self.program.variable_slots(Var::Time).len();
        Some(match va {
            Var::Latent => pa * n_latent + pb,
            Var::Time => n_latent * n_latent + pa * n_time + pb,
        })
    }

    fn shifted_matrix(&self, slot: usize, shifts: &[Shift]) -> [[Complex64; 2]; 2] {
        let mut m = self.slot_matrices[slot].expect("rotation slot");
        for &(s, q) in shifts {
            if s == slot {
                let axis = match self.program.gates()[slot] {
                    ProgramGate::Rotation { axis, .. } => axis,
                    _ => unreachable!(),
                };
                // compose in steps of at most a half turn
                let mut q = q;
                while q != 0 {
                    let step = q.clamp(-2, 2);
                    m = mat_mul(&quarter_matrix(axis, step), &m);
                    q -= step;
                }
            }
        }
        m
    }

    fn readout(&self, state: &QuantumState, out: &mut Vec<f64>) -> Result<()> {
        out.clear();
        let mut probs_ready = false;
        let mut probs = self.probs.borrow_mut();
        for (c, prep) in self.costs.iter().zip(&self.prepared) {
            match prep {
                PreparedCost::Diagonal(d) => {
                    if !probs_ready {
                        for (p, a) in probs.iter_mut().zip(state.amplitudes()) {
                            *p = a.norm_sqr();
                        }
                        probs_ready = true;
                    }
                    out.push(probs.iter().zip(d).map(|(p, w)| p * w).sum());
                }
                PreparedCost::General => {
                    let unit = CostOperator { terms: c.terms.clone(), global_weight: 1.0 };
                    out.push(statevector::expectation(state, &unit)?);
                }
            }
        }
        Ok(())
    }

    /// One circuit evaluation under the given (canonical) shifts.
    fn run_circuit(&self, shifts: &[Shift]) -> Result<Vec<f64>> {
        self.evaluations.set(self.evaluations.get() + 1);
        let mut out = Vec::with_capacity(self.costs.len());

        let fast = self.variant.filter(|v| {
            let (lo, hi) = v.mid_range();
            shifts.iter().all(|&(s, _)| s >= lo && s < hi)
        });
        if let Some(variant) = fast {
            let (lo, hi) = variant.mid_range();
            let mut state = self.state_a.borrow_mut();
            state.copy_from(variant.head_state());
            let mut pending = self.pending.borrow_mut();
            for p in pending.iter_mut() {
                *p = None;
            }
            for slot in lo..hi {
                let target = match self.program.gates()[slot] {
                    ProgramGate::Rotation { target, .. } => target,
                    _ => unreachable!("mid section is rotation-only"),
                };
                let m = self.shifted_matrix(slot, shifts);
                pending[target] = Some(match pending[target] {
                    Some(p) => mat_mul(&m, &p),
                    None => m,
                });
            }
            for (q, p) in pending.iter_mut().enumerate() {
                if let Some(m) = p.take() {
                    state.apply_single_qubit(q, &m);
                }
            }
            let mut final_state = self.state_b.borrow_mut();
            let dim = state.amplitudes().len();
            variant.apply_tail(state.amplitudes(), &mut final_state.amplitudes_mut()[..dim]);
            self.readout(&final_state, &mut out)?;
            return Ok(out);
        }

        // direct path: sweep all gates with the cached slot matrices
        let mut state = self.state_a.borrow_mut();
        state.reset_zero();
        let mut pending = self.pending.borrow_mut();
        for p in pending.iter_mut() {
            *p = None;
        }
        for (i, g) in self.program.gates().iter().enumerate() {
            match *g {
                ProgramGate::Rotation { target, .. } => {
                    let m = self.shifted_matrix(i, shifts);
                    pending[target] = Some(match pending[target] {
                        Some(p) => mat_mul(&m, &p),
                        None => m,
                    });
                }
                ProgramGate::Cnot { control, target } => {
                    for q in [control, target] {
                        if let Some(m) = pending[q].take() {
                            state.apply_single_qubit(q, &m);
                        }
                    }
                    state.apply_cnot(control, target);
                }
            }
        }
        for (q, p) in pending.iter_mut().enumerate() {
            if let Some(m) = p.take() {
                state.apply_single_qubit(q, &m);
            }
        }
        self.readout(&state, &mut out)?;
        Ok(out)
    }

    /// Canonicalizes a request into the cache layout and evaluates on miss.
    /// Every cache miss is one circuit evaluation.
    fn request(&self, shifts: &[Shift]) -> Result<Vec<f64>> {
        // canonical form: merge per-slot quarter turns, drop zeros, sort
        let mut canon: Vec<Shift> = Vec::with_capacity(shifts.len());
        for &(slot, q) in shifts {
            match canon.iter_mut().find(|(s, _)| *s == slot) {
                Some(entry) => entry.1 += q,
                None => canon.push((slot, q)),
            }
        }
        canon.retain(|&(_, q)| q != 0);
        canon.sort_unstable_by_key(|&(s, _)| s);

        let Some(cache) = &self.cache else {
            return self.run_circuit(&canon);
        };

        // slot order is canonical, so the transposed request (k,-)(j,+)
        // lands on the same key as (j,+)(k,-)
        enum Key {
            Base,
            Single(usize, usize),
            Double(usize, usize),
        }
        let key = match canon.as_slice() {
            [] => Key::Base,
            [(slot, q)] => match self.cache_table_pos_single(*slot) {
                Some(pos) => Key::Single(pos, quarter_index(*q)),
                None => return self.run_circuit(&canon),
            },
            [(a, qa), (b, qb)] if qa.abs() == 1 && qb.abs() == 1 => {
                match self.cache_table_pos_double(*a, *b) {
                    Some(pos) => {
                        let sign = match (qa, qb) {
                            (1, 1) => 0,
                            (1, -1) => 1,
                            (-1, 1) => 2,
                            (-1, -1) => 3,
                            _ => unreachable!(),
                        };
                        Key::Double(pos, sign)
                    }
                    None => return self.run_circuit(&canon),
                }
            }
            _ => return self.run_circuit(&canon),
        };

        {
            let cache = cache.borrow();
            let hit = match key {
                Key::Base => cache.base.clone(),
                Key::Single(pos, qi) => cache.single[pos][qi].clone(),
                Key::Double(pos, sign) => cache.double[pos][sign].clone(),
            };
            if let Some(v) = hit {
                self.cache_hits.set(self.cache_hits.get() + 1);
                return Ok(v);
            }
        }
        let v = self.run_circuit(&canon)?;
        let mut cache = cache.borrow_mut();
        match key {
            Key::Base => cache.base = Some(v.clone()),
            Key::Single(pos, qi) => cache.single[pos][qi] = Some(v.clone()),
            Key::Double(pos, sign) => cache.double[pos][sign] = Some(v.clone()),
        }
        Ok(v)
    }

    /// Raw per-operator expectations at the session point.
    pub fn value_components(&self) -> Result<Vec<f64>> {
        self.request(&[])
    }

    fn check_variable(&self, var: Var) -> Result<&[usize]> {
        let x = self.vars.get(var);
        if x.abs() >= 1.0 - crate::circuits::VAR_CLAMP {
            return Err(Error::Domain(format!(
                "variable value {x} at the encoding domain edge"
            )));
        }
        let slots = self.program.variable_slots(var);
        if slots.is_empty() {
            return Err(Error::Domain(format!("program does not bind variable {var:?}")));
        }
        Ok(slots)
    }

    fn slot_phi_d1(&self, slot: usize, var: Var) -> f64 {
        match self.program.gates()[slot] {
            ProgramGate::Rotation { binding: Binding::Variable { map, tower_index, .. }, .. } => {
                phi_d1(map, tower_index, self.vars.get(var))
            }
            _ => unreachable!("variable slot list points at a non-variable gate"),
        }
    }

    fn slot_phi_d2(&self, slot: usize, var: Var) -> f64 {
        match self.program.gates()[slot] {
            ProgramGate::Rotation { binding: Binding::Variable { map, tower_index, .. }, .. } => {
                phi_d2(map, tower_index, self.vars.get(var))
            }
            _ => unreachable!(),
        }
    }

    /// First derivative with respect to `var`, per cost operator.
    /// Exactly `2N` evaluations on a cold cache.
    pub fn d_dvariable_components(&self, var: Var) -> Result<Vec<f64>> {
        let slots = self.check_variable(var)?.to_vec();
        let mut acc = vec![0.0; self.costs.len()];
        for &slot in &slots {
            let plus = self.request(&[(slot, 1)])?;
            let minus = self.request(&[(slot, -1)])?;
            let w = 0.5 * self.slot_phi_d1(slot, var);
            for (a, (p, m)) in acc.iter_mut().zip(plus.iter().zip(&minus)) {
                *a += w * (p - m);
            }
        }
        Ok(acc)
    }

    /// Second derivative with respect to `var`, per cost operator.
    ///
    /// Issues the `2N` single-shift and `4N^2` double-shift requests of the
    /// shift rule; with a warm cache holding the value and first-derivative
    /// evaluations the additional circuit evaluations are exactly `2N^2`.
    pub fn d2_dvariable2_components(&self, var: Var) -> Result<Vec<f64>> {
        let slots = self.check_variable(var)?.to_vec();
        let n_ops = self.costs.len();
        let mut acc = vec![0.0; n_ops];
        for &slot in &slots {
            let plus = self.request(&[(slot, 1)])?;
            let minus = self.request(&[(slot, -1)])?;
            let w = 0.5 * self.slot_phi_d2(slot, var);
            for (a, (p, m)) in acc.iter_mut().zip(plus.iter().zip(&minus)) {
                *a += w * (p - m);
            }
        }
        for &j in &slots {
            let dj = self.slot_phi_d1(j, var);
            for &k in &slots {
                let w = 0.25 * dj * self.slot_phi_d1(k, var);
                let pp = self.request(&[(j, 1), (k, 1)])?;
                let pm = self.request(&[(j, 1), (k, -1)])?;
                let mp = self.request(&[(j, -1), (k, 1)])?;
                let mm = self.request(&[(j, -1), (k, -1)])?;
                for (i, a) in acc.iter_mut().enumerate() {
                    *a += w * (pp[i] - pm[i] - mp[i] + mm[i]);
                }
            }
        }
        Ok(acc)
    }

    /// One double-shift bracket term of the second derivative, for symmetry
    /// checks: `1/4 phi_j' phi_k' (<++> - <+-> - <-+> + <-->)`.
    pub fn d2_term(&self, var: Var, j_pos: usize, k_pos: usize) -> Result<Vec<f64>> {
        let slots = self.check_variable(var)?;
        let (j, k) = (slots[j_pos], slots[k_pos]);
        let w = 0.25 * self.slot_phi_d1(j, var) * self.slot_phi_d1(k, var);
        let pp = self.request(&[(j, 1), (k, 1)])?;
        let pm = self.request(&[(j, 1), (k, -1)])?;
        let mp = self.request(&[(j, -1), (k, 1)])?;
        let mm = self.request(&[(j, -1), (k, -1)])?;
        Ok((0..self.costs.len()).map(|i| w * (pp[i] - pm[i] - mp[i] + mm[i])).collect())
    }

    /// Parameter-shift gradient with respect to every theta entry, per cost
    /// operator: `out[param][op]`. Slots bound with a scale contribute
    /// `scale/2 (<+> - <->)`; parameters bound to several slots sum their
    /// per-slot terms.
    pub fn grad_theta_components(&self) -> Result<Vec<Vec<f64>>> {
        let n_ops = self.costs.len();
        let mut out = vec![vec![0.0; n_ops]; self.program.n_params()];
        for (param, acc) in out.iter_mut().enumerate() {
            for &slot in self.program.parameter_slots(param) {
                let scale = match self.program.gates()[slot] {
                    ProgramGate::Rotation { binding: Binding::Parameter { scale, .. }, .. } => {
                        scale
                    }
                    _ => unreachable!(),
                };
                let plus = self.request(&[(slot, 1)])?;
                let minus = self.request(&[(slot, -1)])?;
                for (a, (p, m)) in acc.iter_mut().zip(plus.iter().zip(&minus)) {
                    *a += 0.5 * scale * (p - m);
                }
            }
        }
        Ok(out)
    }
}

/// Weighted sum of per-operator components with the `alphas` multipliers.
pub fn combine(components: &[f64], alphas: &[f64]) -> f64 {
    components.iter().zip(alphas).map(|(c, a)| c * a).sum()
}

/// First derivative of the weighted readout with respect to a variable.
/// Convenience entry point; creates a cold cached session.
pub fn d_dvariable(
    program: &CircuitProgram,
    theta: &[f64],
    vars: VarValues,
    var: Var,
    costs: &[CostOperator],
    alphas: &[f64],
) -> Result<f64> {
    let session = EvalSession::new(program, theta, vars, costs, true)?;
    Ok(combine(&session.d_dvariable_components(var)?, alphas))
}

/// Second derivative of the weighted readout with respect to a variable.
pub fn d2_dvariable2(
    program: &CircuitProgram,
    theta: &[f64],
    vars: VarValues,
    var: Var,
    costs: &[CostOperator],
    alphas: &[f64],
) -> Result<f64> {
    let session = EvalSession::new(program, theta, vars, costs, true)?;
    Ok(combine(&session.d2_dvariable2_components(var)?, alphas))
}

/// Gradient of the weighted readout with respect to theta.
pub fn grad_theta(
    program: &CircuitProgram,
    theta: &[f64],
    vars: VarValues,
    costs: &[CostOperator],
    alphas: &[f64],
) -> Result<Vec<f64>> {
    let session = EvalSession::new(program, theta, vars, costs, true)?;
    let per_param = session.grad_theta_components()?;
    Ok(per_param.iter().map(|c| combine(c, alphas)).collect())
}
