//! The trainable generator `G(z, t)`: multi-variable encoding, weighted cost
//! readout and pinned/floating boundary handling.
//!
//! Two circuit layouts are supported. `MainText` applies the time map, the
//! latent map and then the variational ansatz. `Sandwich` wraps a single
//! feature map between identity-initialized variational blocks behind fixed
//! initialization layers, enabling a classical warm start.
//!
//! Floating boundary handling wraps the raw circuit readout as
//! `f(t, z) = u0(z) - G(0, z) + G(t, z)`, which pins `f(0, z) = u0(z)`
//! exactly by construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{combine, EvalSession};
use crate::circuits::{
    build_feature_map, build_hea, build_sandwich_program, paired_sandwich_theta, AnsatzSpec,
    CircuitProgram, FeatureMapSpec, Var, VarValues,
};
use crate::error::{Error, Result};
use crate::exec;
use crate::sde_oracle::{analytic_qf_parts, Provenance, SampleSet, SdeParams};
use crate::statevector::CostOperator;

/// Model time at which the boundary profile is attached.
pub const BOUNDARY_TIME: f64 = 0.0;

/// Circuit layout of the generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    MainText,
    Sandwich,
}

/// How the initial condition enters training.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryMode {
    /// Boundary enforced by a loss penalty at the listed latent points.
    Pinned { pin_points: Vec<f64>, pin_weight: f64 },
    /// Boundary enforced algebraically through the floating wrap.
    Floating,
}

/// Full description of the generator circuit.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GeneratorSpec {
    pub n_qubits: usize,
    pub z_map: FeatureMapSpec,
    /// Absent for fixed-time models.
    pub t_map: Option<FeatureMapSpec>,
    pub ansatz: AnsatzSpec,
    pub layout: Layout,
    pub costs: Vec<CostOperator>,
    pub boundary: BoundaryMode,
    /// Initialization-layer angles; required by the sandwich layout.
    pub init_angles: Option<Vec<f64>>,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.costs.is_empty() {
            return Err(Error::Config("at least one cost operator is required".into()));
        }
        for c in &self.costs {
            if !c.global_weight.is_finite() {
                return Err(Error::Config("cost weights must be finite".into()));
            }
        }
        if self.z_map.variable != Var::Latent {
            return Err(Error::Config("z_map must bind the latent variable".into()));
        }
        if let Some(tm) = &self.t_map {
            if tm.variable != Var::Time {
                return Err(Error::Config("t_map must bind the time variable".into()));
            }
        }
        if self.ansatz.n_qubits != self.n_qubits {
            return Err(Error::Config(format!(
                "ansatz width {} does not match n_qubits {}",
                self.ansatz.n_qubits, self.n_qubits
            )));
        }
        match self.layout {
            Layout::Sandwich => {
                if self.t_map.is_some() {
                    return Err(Error::Config(
                        "the sandwich layout encodes a single variable; drop t_map".into(),
                    ));
                }
                match &self.init_angles {
                    None => {
                        return Err(Error::Config(
                            "the sandwich layout requires init_angles".into(),
                        ))
                    }
                    Some(a) if a.len() != 2 * self.n_qubits => {
                        return Err(Error::Config(format!(
                            "init_angles must have {} entries, got {}",
                            2 * self.n_qubits,
                            a.len()
                        )))
                    }
                    _ => {}
                }
            }
            Layout::MainText => {}
        }
        Ok(())
    }

    /// Operator-norm bound on the raw readout magnitude.
    pub fn output_bound(&self, alphas: &[f64]) -> f64 {
        self.costs
            .iter()
            .zip(alphas)
            .map(|(c, a)| {
                a.abs() * c.terms.iter().map(|t| t.weight.abs()).sum::<f64>()
            })
            .sum()
    }
}

/// Trainable state of a model: variational angles and cost weights.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelParams {
    pub theta: Vec<f64>,
    pub alpha: Vec<f64>,
}

/// Which derivatives to evaluate along with the value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Wants {
    pub dz: bool,
    pub dzz: bool,
    pub dt: bool,
}

impl Wants {
    pub const NONE: Wants = Wants { dz: false, dzz: false, dt: false };
    pub const ALL: Wants = Wants { dz: true, dzz: true, dt: true };
    pub const SPATIAL: Wants = Wants { dz: true, dzz: true, dt: false };
}

/// Value and requested derivatives in sample-space units.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ModelOutput {
    pub value: f64,
    pub dz: Option<f64>,
    pub dzz: Option<f64>,
    pub dt: Option<f64>,
}

/// A generator circuit compiled from its spec.
#[derive(Debug, Clone)]
pub struct QuantileModel {
    spec: GeneratorSpec,
    program: CircuitProgram,
}

impl QuantileModel {
    pub fn from_spec(spec: GeneratorSpec) -> Result<Self> {
        spec.validate()?;
        let program = match spec.layout {
            Layout::MainText => {
                let mut program = match &spec.t_map {
                    Some(tm) => build_feature_map(tm, spec.n_qubits)?
                        .concat(build_feature_map(&spec.z_map, spec.n_qubits)?)?,
                    None => build_feature_map(&spec.z_map, spec.n_qubits)?,
                };
                program = program.concat(build_hea(&spec.ansatz)?)?;
                program
            }
            Layout::Sandwich => build_sandwich_program(
                &spec.ansatz,
                &spec.z_map,
                spec.init_angles.as_ref().expect("validated"),
            )?,
        };
        Ok(QuantileModel { spec, program })
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    pub fn program(&self) -> &CircuitProgram {
        &self.program
    }

    pub fn n_params(&self) -> usize {
        self.program.n_params()
    }

    /// Initial trainable state: paired identity blocks for the sandwich,
    /// i.i.d. uniform(-pi, pi) angles otherwise; alphas from the spec.
    pub fn initial_params(&self, seed: u64) -> ModelParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = match self.spec.layout {
            Layout::Sandwich => paired_sandwich_theta(&self.spec.ansatz, &mut rng),
            Layout::MainText => (0..self.program.n_params())
                .map(|_| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI))
                .collect(),
        };
        ModelParams { theta, alpha: self.spec.costs.iter().map(|c| c.global_weight).collect() }
    }

    fn check_domain(&self, z: f64, t: f64) -> Result<()> {
        if !(-1.0..=1.0).contains(&z) {
            return Err(Error::Domain(format!("latent value {z} outside [-1, 1]")));
        }
        if self.spec.t_map.is_some() && !(-1.0..=1.0).contains(&t) {
            return Err(Error::Domain(format!("time value {t} outside the encoded domain")));
        }
        Ok(())
    }

    /// Raw circuit readout `G(z, t) = sum_l alpha_l <C_l>`.
    pub fn evaluate_raw(&self, params: &ModelParams, z: f64, t: f64) -> Result<f64> {
        Ok(self.evaluate_raw_with(params, z, t, Wants::NONE)?.value)
    }

    /// Raw readout with parameter-shift derivatives on request.
    pub fn evaluate_raw_with(
        &self,
        params: &ModelParams,
        z: f64,
        t: f64,
        wants: Wants,
    ) -> Result<ModelOutput> {
        self.check_domain(z, t)?;
        if wants.dt && self.spec.t_map.is_none() {
            return Err(Error::Domain(
                "time derivative requested but the spec has no t_map".into(),
            ));
        }
        let session = EvalSession::new(
            &self.program,
            &params.theta,
            VarValues::new(z, t),
            &self.spec.costs,
            true,
        )?;
        let mut out = ModelOutput {
            value: combine(&session.value_components()?, &params.alpha),
            ..Default::default()
        };
        if wants.dz {
            out.dz = Some(combine(&session.d_dvariable_components(Var::Latent)?, &params.alpha));
        }
        if wants.dzz {
            out.dzz =
                Some(combine(&session.d2_dvariable2_components(Var::Latent)?, &params.alpha));
        }
        if wants.dt {
            out.dt = Some(combine(&session.d_dvariable_components(Var::Time)?, &params.alpha));
        }
        Ok(out)
    }
}

/// Initial profile `u0(z)` carried by the floating boundary, with first and
/// second latent derivatives.
#[derive(Debug, Clone)]
pub enum InitialProfile {
    /// Closed-form Ornstein-Uhlenbeck quantile at model time `at_t`.
    AnalyticQf { params: SdeParams, at_t: f64 },
    /// A frozen trained model (its derivatives come from parameter shift).
    Trained { model: Box<QuantileModel>, params: ModelParams, at_t: f64 },
}

impl InitialProfile {
    pub fn value(&self, z: f64) -> Result<f64> {
        match self {
            InitialProfile::AnalyticQf { params, at_t } => {
                crate::sde_oracle::analytic_qf(params, z, *at_t)
            }
            InitialProfile::Trained { model, params, at_t } => {
                model.evaluate_raw(params, z, *at_t)
            }
        }
    }

    /// `(u0, u0', u0'')` at `z`.
    pub fn parts(&self, z: f64) -> Result<(f64, f64, f64)> {
        match self {
            InitialProfile::AnalyticQf { params, at_t } => {
                let p = analytic_qf_parts(params, z, *at_t)?;
                Ok((p.value, p.dz, p.dzz))
            }
            InitialProfile::Trained { model, params, at_t } => {
                let out =
                    model.evaluate_raw_with(params, z, *at_t, Wants::SPATIAL)?;
                Ok((out.value, out.dz.unwrap(), out.dzz.unwrap()))
            }
        }
    }
}

/// A generator together with its boundary data, evaluating the model output
/// `f(t, z)` according to the spec's boundary mode.
pub struct BoundModel<'a> {
    pub model: &'a QuantileModel,
    pub profile: Option<&'a InitialProfile>,
}

impl<'a> BoundModel<'a> {
    pub fn new(model: &'a QuantileModel, profile: Option<&'a InitialProfile>) -> Result<Self> {
        if matches!(model.spec.boundary, BoundaryMode::Floating) && profile.is_none() {
            return Err(Error::Config(
                "floating boundary mode requires an initial profile".into(),
            ));
        }
        Ok(BoundModel { model, profile })
    }

    fn is_floating(&self) -> bool {
        matches!(self.model.spec.boundary, BoundaryMode::Floating) && self.profile.is_some()
    }

    /// Model output, floating-wrapped when the spec says so.
    pub fn evaluate(
        &self,
        params: &ModelParams,
        z: f64,
        t: f64,
        wants: Wants,
    ) -> Result<ModelOutput> {
        if !self.is_floating() {
            return self.model.evaluate_raw_with(params, z, t, wants);
        }
        let profile = self.profile.expect("checked in constructor");
        let spatial = Wants { dz: wants.dz, dzz: wants.dzz, dt: false };
        let at_boundary = t == BOUNDARY_TIME;
        let g_t = self.model.evaluate_raw_with(params, z, t, wants)?;
        // same circuit at the boundary time: reuse the evaluation so the
        // cancellation in the wrap is exact
        let g_0 = if at_boundary {
            ModelOutput { dt: None, ..g_t }
        } else {
            self.model.evaluate_raw_with(params, z, BOUNDARY_TIME, spatial)?
        };
        let (u0, u0_dz, u0_dzz) = if wants.dz || wants.dzz {
            profile.parts(z)?
        } else {
            (profile.value(z)?, 0.0, 0.0)
        };
        Ok(ModelOutput {
            value: u0 - g_0.value + g_t.value,
            dz: wants.dz.then(|| u0_dz - g_0.dz.unwrap() + g_t.dz.unwrap()),
            dzz: wants.dzz.then(|| u0_dzz - g_0.dzz.unwrap() + g_t.dzz.unwrap()),
            dt: g_t.dt,
        })
    }

    /// Draws `n_samples` model outputs at i.i.d. `z ~ uniform(-1, 1)` and
    /// fixed `t`; deterministic for a fixed seed.
    pub fn sample(
        &self,
        params: &ModelParams,
        t: f64,
        n_samples: usize,
        seed: u64,
    ) -> Result<SampleSet> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let zs: Vec<f64> = (0..n_samples).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let values = exec::map_slice(&zs, |&z| {
            self.evaluate(params, z, t, Wants::NONE).map(|o| o.value)
        });
        let values: Result<Vec<f64>> = values.into_iter().collect();
        SampleSet::new(values?, t, Provenance::Qqm, seed)
    }

    /// Minimum finite-difference slope of the output in `z` over a uniform
    /// grid; a trained quantile should keep this above a small negative
    /// tolerance.
    pub fn min_slope_z(&self, params: &ModelParams, t: f64, n_points: usize) -> Result<f64> {
        let zs: Vec<f64> = (0..n_points)
            .map(|i| -0.999 + 1.998 * i as f64 / (n_points - 1) as f64)
            .collect();
        let vals = exec::map_slice(&zs, |&z| {
            self.evaluate(params, z, t, Wants::NONE).map(|o| o.value)
        });
        let vals: Result<Vec<f64>> = vals.into_iter().collect();
        let vals = vals?;
        let mut min = f64::INFINITY;
        for i in 1..vals.len() {
            min = min.min((vals[i] - vals[i - 1]) / (zs[i] - zs[i - 1]));
        }
        Ok(min)
    }
}

/// Serialized form of a trained model: spec fields, flat parameter vectors
/// and run provenance. 64-bit values round-trip bit-exactly through JSON.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelDocument {
    pub spec: GeneratorSpec,
    pub theta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub provenance: ModelProvenance,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelProvenance {
    pub seed: u64,
    pub epochs: usize,
    pub final_loss: f64,
}

impl ModelDocument {
    pub fn new(model: &QuantileModel, params: &ModelParams, provenance: ModelProvenance) -> Self {
        ModelDocument {
            spec: model.spec.clone(),
            theta: params.theta.clone(),
            alpha: params.alpha.clone(),
            provenance,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Rebuilds the compiled model and its trained parameters.
    pub fn instantiate(&self) -> Result<(QuantileModel, ModelParams)> {
        let model = QuantileModel::from_spec(self.spec.clone())?;
        if self.theta.len() != model.n_params() {
            return Err(Error::Config(format!(
                "document theta length {} does not match program ({} parameters)",
                self.theta.len(),
                model.n_params()
            )));
        }
        Ok((model, ModelParams { theta: self.theta.clone(), alpha: self.alpha.clone() }))
    }
}
