//! Dense statevector simulation of N-qubit circuits with exact expectation
//! values.
//!
//! Amplitudes are stored as `Complex64` with qubit 0 on the least-significant
//! bit of the amplitude index: basis index `i` assigns qubit `q` the bit
//! `(i >> q) & 1`. All expectations are exact (no shot sampling).

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Hard cap on register width; 2^24 amplitudes is ~256 MB.
pub const MAX_QUBITS: usize = 24;

/// Pauli axis used by rotations and cost-operator terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Pauli {
    X,
    Y,
    Z,
}

/// A single gate: Pauli rotation `exp(-i * angle * P / 2)` or CNOT.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    Rx { target: usize, angle: f64 },
    Ry { target: usize, angle: f64 },
    Rz { target: usize, angle: f64 },
    Cnot { control: usize, target: usize },
}

impl Gate {
    pub fn rotation(axis: Pauli, target: usize, angle: f64) -> Self {
        match axis {
            Pauli::X => Gate::Rx { target, angle },
            Pauli::Y => Gate::Ry { target, angle },
            Pauli::Z => Gate::Rz { target, angle },
        }
    }
}

/// One weighted Pauli on a single qubit.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PauliTerm {
    pub qubit: usize,
    pub pauli: Pauli,
    pub weight: f64,
}

/// Hermitian cost operator: a weighted sum of single-qubit Paulis scaled by a
/// global weight. Hermiticity holds by construction (real weights).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CostOperator {
    pub terms: Vec<PauliTerm>,
    pub global_weight: f64,
}

impl CostOperator {
    /// Total Z magnetization over `n_qubits` qubits with unit weights.
    pub fn total_z(n_qubits: usize) -> Self {
        CostOperator {
            terms: (0..n_qubits)
                .map(|q| PauliTerm { qubit: q, pauli: Pauli::Z, weight: 1.0 })
                .collect(),
            global_weight: 1.0,
        }
    }

    /// `weight * Z` on a single qubit.
    pub fn z_on(qubit: usize, global_weight: f64) -> Self {
        CostOperator {
            terms: vec![PauliTerm { qubit, pauli: Pauli::Z, weight: 1.0 }],
            global_weight,
        }
    }

    /// Sum of absolute term weights; an operator-norm bound for the readout.
    pub fn norm_bound(&self) -> f64 {
        self.global_weight.abs() * self.terms.iter().map(|t| t.weight.abs()).sum::<f64>()
    }

    fn max_qubit(&self) -> Option<usize> {
        self.terms.iter().map(|t| t.qubit).max()
    }
}

/// Dense complex amplitude vector over `n_qubits` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

/// `|0...0>` on `n_qubits` qubits.
pub fn zero_state(n_qubits: usize) -> Result<QuantumState> {
    if n_qubits == 0 || n_qubits > MAX_QUBITS {
        return Err(Error::Config(format!(
            "n_qubits must be in 1..={MAX_QUBITS}, got {n_qubits}"
        )));
    }
    let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
    amplitudes[0] = Complex64::new(1.0, 0.0);
    Ok(QuantumState { n_qubits, amplitudes })
}

/// Applies `gate` to `state`, returning the transformed state.
///
/// The contract is functional; callers holding a uniquely-owned state can use
/// [`QuantumState::apply`] to mutate in place.
pub fn apply_gate(mut state: QuantumState, gate: &Gate) -> Result<QuantumState> {
    state.apply(gate)?;
    Ok(state)
}

/// Exact expectation value `<psi| C |psi>` scaled by the operator's global
/// weight. For a total-Z cost on N qubits the value lies in `[-N, N]`.
pub fn expectation(state: &QuantumState, cost: &CostOperator) -> Result<f64> {
    if let Some(q) = cost.max_qubit() {
        if q >= state.n_qubits {
            return Err(Error::Config(format!(
                "cost operator addresses qubit {q} on a {}-qubit state",
                state.n_qubits
            )));
        }
    }
    let mut total = 0.0;
    for term in &cost.terms {
        let v = match term.pauli {
            Pauli::Z => state.expect_z(term.qubit),
            Pauli::X => state.expect_x(term.qubit),
            Pauli::Y => state.expect_y(term.qubit),
        };
        total += term.weight * v;
    }
    Ok(cost.global_weight * total)
}

impl QuantumState {
    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    /// Mutable amplitude access for evaluation engines writing a state in
    /// one pass; callers are responsible for keeping the result normalized.
    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    /// Resets the state to `|0...0>` without reallocating.
    pub fn reset_zero(&mut self) {
        self.amplitudes.fill(Complex64::new(0.0, 0.0));
        self.amplitudes[0] = Complex64::new(1.0, 0.0);
    }

    /// Resets the state to the computational basis state `|k>`.
    pub fn set_basis(&mut self, k: usize) {
        self.amplitudes.fill(Complex64::new(0.0, 0.0));
        self.amplitudes[k] = Complex64::new(1.0, 0.0);
    }

    /// Overwrites the amplitudes from another state of the same width.
    pub fn copy_from(&mut self, other: &QuantumState) {
        self.amplitudes.copy_from_slice(&other.amplitudes);
    }

    /// Squared norm; stays within 1e-12 of 1 under any gate sequence.
    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Applies a gate in place.
    pub fn apply(&mut self, gate: &Gate) -> Result<()> {
        match *gate {
            Gate::Rx { target, angle } => {
                self.check_qubit(target)?;
                self.apply_single_qubit(target, &rx_matrix(angle));
            }
            Gate::Ry { target, angle } => {
                self.check_qubit(target)?;
                self.apply_single_qubit(target, &ry_matrix(angle));
            }
            Gate::Rz { target, angle } => {
                self.check_qubit(target)?;
                self.apply_single_qubit(target, &rz_matrix(angle));
            }
            Gate::Cnot { control, target } => {
                self.check_qubit(control)?;
                self.check_qubit(target)?;
                if control == target {
                    return Err(Error::Config(format!(
                        "cnot control and target coincide on qubit {control}"
                    )));
                }
                self.apply_cnot(control, target);
            }
        }
        Ok(())
    }

    fn check_qubit(&self, q: usize) -> Result<()> {
        if q >= self.n_qubits {
            return Err(Error::Config(format!(
                "qubit index {q} out of range for {} qubits",
                self.n_qubits
            )));
        }
        Ok(())
    }

    /// Applies an arbitrary 2x2 unitary `m` (row-major) to `target`.
    ///
    /// Stride iteration over amplitude pairs `(i, i | 1<<target)`.
    pub fn apply_single_qubit(&mut self, target: usize, m: &[[Complex64; 2]; 2]) {
        let stride = 1usize << target;
        let block = stride << 1;
        let n = self.amplitudes.len();
        let amps = &mut self.amplitudes;
        let mut base = 0;
        while base < n {
            for i in base..base + stride {
                let a0 = amps[i];
                let a1 = amps[i + stride];
                amps[i] = m[0][0] * a0 + m[0][1] * a1;
                amps[i + stride] = m[1][0] * a0 + m[1][1] * a1;
            }
            base += block;
        }
    }

    /// CNOT kernel: swaps the target-bit pair within the control=1 subspace.
    pub fn apply_cnot(&mut self, control: usize, target: usize) {
        let cbit = 1usize << control;
        let tbit = 1usize << target;
        let n = self.amplitudes.len();
        for i in 0..n {
            // visit each swapped pair once, from the target=0 side
            if i & cbit != 0 && i & tbit == 0 {
                self.amplitudes.swap(i, i | tbit);
            }
        }
    }

    fn expect_z(&self, qubit: usize) -> f64 {
        let bit = 1usize << qubit;
        let mut acc = 0.0;
        for (i, a) in self.amplitudes.iter().enumerate() {
            let p = a.norm_sqr();
            if i & bit == 0 {
                acc += p;
            } else {
                acc -= p;
            }
        }
        acc
    }

    fn expect_x(&self, qubit: usize) -> f64 {
        let stride = 1usize << qubit;
        let block = stride << 1;
        let n = self.amplitudes.len();
        let mut acc = 0.0;
        let mut base = 0;
        while base < n {
            for i in base..base + stride {
                let a0 = self.amplitudes[i];
                let a1 = self.amplitudes[i + stride];
                acc += 2.0 * (a0.conj() * a1).re;
            }
            base += block;
        }
        acc
    }

    fn expect_y(&self, qubit: usize) -> f64 {
        let stride = 1usize << qubit;
        let block = stride << 1;
        let n = self.amplitudes.len();
        let mut acc = 0.0;
        let mut base = 0;
        while base < n {
            for i in base..base + stride {
                let a0 = self.amplitudes[i];
                let a1 = self.amplitudes[i + stride];
                acc += 2.0 * (a0.conj() * a1).im;
            }
            base += block;
        }
        acc
    }
}

/// `exp(-i angle X / 2)`.
pub fn rx_matrix(angle: f64) -> [[Complex64; 2]; 2] {
    let c = (angle / 2.0).cos();
    let s = (angle / 2.0).sin();
    [
        [Complex64::new(c, 0.0), Complex64::new(0.0, -s)],
        [Complex64::new(0.0, -s), Complex64::new(c, 0.0)],
    ]
}

/// `exp(-i angle Y / 2)`.
pub fn ry_matrix(angle: f64) -> [[Complex64; 2]; 2] {
    let c = (angle / 2.0).cos();
    let s = (angle / 2.0).sin();
    [
        [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
        [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
    ]
}

/// `exp(-i angle Z / 2)`.
pub fn rz_matrix(angle: f64) -> [[Complex64; 2]; 2] {
    let half = angle / 2.0;
    [
        [Complex64::new(half.cos(), -half.sin()), Complex64::new(0.0, 0.0)],
        [Complex64::new(0.0, 0.0), Complex64::new(half.cos(), half.sin())],
    ]
}

/// Multiplies two 2x2 complex matrices, `a * b`.
pub fn mat_mul(a: &[[Complex64; 2]; 2], b: &[[Complex64; 2]; 2]) -> [[Complex64; 2]; 2] {
    let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            out[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c];
        }
    }
    out
}

pub const IDENTITY_2X2: [[Complex64; 2]; 2] = [
    [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
    [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
];
