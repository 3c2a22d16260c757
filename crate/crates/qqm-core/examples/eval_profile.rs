//! Microbenchmark of a single circuit expectation evaluation.

use std::time::Instant;

use qqm_core::circuits::{
    build_feature_map, build_hea, AnsatzSpec, EvalScratch, FeatureMapKind, FeatureMapSpec, Var,
    VarValues,
};
use qqm_core::statevector::{CostOperator, Pauli};

fn main() {
    let n = 5;
    let program = build_feature_map(
        &FeatureMapSpec { kind: FeatureMapKind::Product, axis: Pauli::Y, variable: Var::Time },
        n,
    )
    .unwrap()
    .concat(
        build_feature_map(
            &FeatureMapSpec { kind: FeatureMapKind::Product, axis: Pauli::X, variable: Var::Latent },
            n,
        )
        .unwrap(),
    )
    .unwrap()
    .concat(build_hea(&AnsatzSpec { n_qubits: n, depth: 6 }).unwrap())
    .unwrap();
    let theta: Vec<f64> = (0..program.n_params()).map(|i| (i as f64 * 0.13).sin()).collect();
    let costs = [CostOperator::total_z(n)];
    let vars = VarValues::new(0.3, 0.2);
    let mut scratch = EvalScratch::new(n).unwrap();
    let mut out = Vec::new();
    let reps = 200_000;
    let t0 = Instant::now();
    let mut acc = 0.0;
    for i in 0..reps {
        let shift = [(i % 10, 1.5707963267948966)];
        program
            .raw_expectations_into(&theta, &vars, &shift, &costs, &mut scratch, &mut out)
            .unwrap();
        acc += out[0];
    }
    let dt = t0.elapsed();
    println!("{} evals in {:.2?} -> {:.2} us/eval (acc {acc:.3})", reps, dt, dt.as_secs_f64() * 1e6 / reps as f64);
}
