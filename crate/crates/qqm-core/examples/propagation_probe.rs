//! Exploration harness for the time-propagation training configuration.
//! Usage: propagation_probe <n> <depth> <epochs> <lr> <eps_slope> <seed> [tower]

use std::time::Instant;

use qqm_core::circuits::{AnsatzSpec, FeatureMapKind, FeatureMapSpec, Var};
use qqm_core::quantile_model::{
    BoundModel, BoundaryMode, GeneratorSpec, InitialProfile, Layout, QuantileModel, Wants,
};
use qqm_core::sde_oracle::{analytic_qf, SdeParams};
use qqm_core::statevector::{CostOperator, Pauli};
use qqm_core::training::{train, AdamConfig, LossConfig, TrainSetup, TrainingGrid};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let depth: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(5);
    let epochs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(100);
    let lr: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0.01);
    let eps: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let seed: u64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(1);
    let tower = args.get(7).map(|s| s == "tower").unwrap_or(false);

    let sde = SdeParams { nu: 1.0, mu: 0.0, sigma: 0.7, x0: 4.0, t0: -0.2 };
    let spec = GeneratorSpec {
        n_qubits: n,
        z_map: FeatureMapSpec {
            kind: if tower { FeatureMapKind::Tower } else { FeatureMapKind::Product },
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
        loss: LossConfig { data_weight: 0.0, sde_weight: 1.0, eps_slope: eps },
        optimizer: AdamConfig {
            learning_rate: lr,
            decay_every: Some(100),
            decay_factor: 0.7,
            ..Default::default()
        },
        epochs,
        seed,
    };
    let t0 = Instant::now();
    let result = train(&setup, |e, loss, _| {
        if e % 20 == 0 || e + 1 == epochs {
            println!("epoch {e:4}  loss {:.4e}", loss.total);
        }
    })
    .unwrap();
    let wall = t0.elapsed();

    // quality: max |G - Q| over the interior and per-slice summaries
    let bound = BoundModel::new(&model, Some(&profile)).unwrap();
    let mut max_err: f64 = 0.0;
    for ti in 0..20 {
        let t = 0.5 * ti as f64 / 19.0;
        for zi in 0..39 {
            let z = -0.95 + 1.9 * zi as f64 / 38.0;
            let g = bound.evaluate(&result.params, z, t, Wants::NONE).unwrap().value;
            let q = analytic_qf(&sde, z, t).unwrap();
            max_err = max_err.max((g - q).abs());
        }
    }
    for t in [0.0, 0.25, 0.5] {
        let mut slice_err: f64 = 0.0;
        let mut bulk_err: f64 = 0.0;
        for zi in 0..39 {
            let z = -0.95 + 1.9 * zi as f64 / 38.0;
            let g = bound.evaluate(&result.params, z, t, Wants::NONE).unwrap().value;
            let q = analytic_qf(&sde, z, t).unwrap();
            slice_err = slice_err.max((g - q).abs());
            if z.abs() <= 0.8 {
                bulk_err = bulk_err.max((g - q).abs());
            }
        }
        println!("t={t:.2}: max|G-Q| (|z|<=0.95) = {slice_err:.4}  (|z|<=0.8) = {bulk_err:.4}");
    }
    println!(
        "wall {wall:.1?}  final loss {:.4e}  max interior err {max_err:.4}",
        result.history.last().unwrap().total
    );
}
