//! Rough wall-time probe for one training epoch at propagation scale.

use std::time::Instant;

use qqm_core::circuits::{AnsatzSpec, FeatureMapKind, FeatureMapSpec, Var};
use qqm_core::quantile_model::{BoundaryMode, GeneratorSpec, InitialProfile, Layout, QuantileModel};
use qqm_core::sde_oracle::SdeParams;
use qqm_core::statevector::{CostOperator, Pauli};
use qqm_core::training::{AdamConfig, LossConfig, TrainSetup, Trainer, TrainingGrid};

fn main() {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let depth: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(6);
    let sde = SdeParams { nu: 1.0, mu: 0.0, sigma: 0.7, x0: 4.0, t0: -0.2 };
    let spec = GeneratorSpec {
        n_qubits: n,
        z_map: FeatureMapSpec {
            kind: FeatureMapKind::Product,
            axis: Pauli::X,
            variable: Var::Latent,
        },
        t_map: Some(FeatureMapSpec {
            kind: FeatureMapKind::Product,
            axis: Pauli::Y,
            variable: Var::Time,
        }),
        ansatz: AnsatzSpec { n_qubits: n, depth },
        layout: Layout::MainText,
        costs: vec![CostOperator::total_z(n)],
        boundary: BoundaryMode::Floating,
        init_angles: None,
    };
    let model = QuantileModel::from_spec(spec).unwrap();
    let profile = InitialProfile::AnalyticQf { params: sde, at_t: 0.0 };
    let setup = TrainSetup {
        model: &model,
        profile: Some(&profile),
        sde,
        grid: TrainingGrid::uniform(21, 0.0, 0.5, 20).unwrap(),
        targets: None,
        data_time: 0.0,
        loss: LossConfig { data_weight: 0.0, sde_weight: 1.0, eps_slope: 1e-3 },
        optimizer: AdamConfig::default(),
        epochs: 1,
        seed: 1,
    };
    let trainer = Trainer::new(&setup).unwrap();
    let params = model.initial_params(1);
    let t0 = Instant::now();
    let (loss, grad) = trainer.loss_and_gradient(&params, 0).unwrap();
    let dt = t0.elapsed();
    println!(
        "n={n} depth={depth} params={} epoch time: {:.2?}  loss={:.4e}  |g|={:.3e}",
        model.n_params(),
        dt,
        loss.total,
        grad.iter().map(|g| g * g).sum::<f64>().sqrt()
    );
}
