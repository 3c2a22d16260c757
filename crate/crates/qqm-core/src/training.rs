//! Loss assembly and Adam descent for quantile-function training.
//!
//! The total loss is `data_weight * L_data + sde_weight * L_sde` (plus a pin
//! term in pinned boundary mode). `L_data` is the mean squared error between
//! the model and quantile targets at a fixed time. `L_sde` compares the two
//! sides of the quantilized Fokker-Planck equation for the
//! Ornstein-Uhlenbeck process over a collocation grid,
//!
//! ```text
//! dG/dt  vs  nu (mu - G) + sigma^2/2 (dG/dz)^-2 d2G/dz2
//! ```
//!
//! with the slope magnitude floored at `eps_slope` to keep early, possibly
//! non-monotone iterates finite. All derivatives come from the
//! parameter-shift machinery; the theta gradient chains those shifted
//! evaluations through the residual. Per-grid-point work is data-parallel
//! with a fixed reduction order, so training histories are bit-reproducible
//! for a fixed seed.

use crate::autodiff::EvalSession;
use crate::circuits::{Binding, CompiledVariant, ProgramGate, Var, VarValues};
use crate::error::{Error, Result};
use crate::exec;
use crate::quantile_model::{
    BoundModel, BoundaryMode, InitialProfile, ModelOutput, ModelParams, QuantileModel, Wants,
    BOUNDARY_TIME,
};
use crate::sde_oracle::SdeParams;

/// Default floor for the slope magnitude in the inverse-square factor.
pub const DEFAULT_EPS_SLOPE: f64 = 1e-3;

/// Margin keeping uniform grid endpoints inside the open encoding domain,
/// where the map derivatives needed by the differential loss exist. The
/// margin also bounds `phi''` at the endpoints, which otherwise dwarfs every
/// interior residual.
pub const GRID_EDGE_CLAMP: f64 = 0.01;

/// Collocation sets for the differential loss.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingGrid {
    pub z_points: Vec<f64>,
    pub t_points: Vec<f64>,
}

impl TrainingGrid {
    /// Uniform grid: `z_count` latent points spanning `[-1, 1]` (endpoints
    /// pulled inside the open encoding domain) and `t_count` times spanning
    /// `[t_min, t_max]`.
    pub fn uniform(z_count: usize, t_min: f64, t_max: f64, t_count: usize) -> Result<Self> {
        if z_count < 2 || t_count < 1 {
            return Err(Error::Config("grid needs >= 2 latent and >= 1 time points".into()));
        }
        let z_points = (0..z_count)
            .map(|i| {
                let z = -1.0 + 2.0 * i as f64 / (z_count - 1) as f64;
                z.clamp(-1.0 + GRID_EDGE_CLAMP, 1.0 - GRID_EDGE_CLAMP)
            })
            .collect();
        let t_points = if t_count == 1 {
            vec![t_min]
        } else {
            (0..t_count)
                .map(|i| t_min + (t_max - t_min) * i as f64 / (t_count - 1) as f64)
                .collect()
        };
        Ok(TrainingGrid { z_points, t_points })
    }

    pub fn empty() -> Self {
        TrainingGrid { z_points: Vec::new(), t_points: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.z_points.len() * self.t_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Latent/target pairs for quantile regression, ascending in both
/// coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTargets {
    pub pairs: Vec<(f64, f64)>,
}

/// Builds quantile-regression targets from raw samples.
///
/// Samples are sorted ascending into the empirical quantile curve (sample `i`
/// of `N` sits at the uniform plotting position `z = 2 (i + 1/2)/N - 1`),
/// which is then read off by linear interpolation at the Chebyshev nodes
/// `cos[(2n - 1) pi / (2 n_points)]`, emitted in ascending order.
pub fn prepare_quantile_targets(samples: &[f64], n_points: usize) -> Result<DataTargets> {
    if samples.is_empty() {
        return Err(Error::Config("cannot build targets from an empty sample set".into()));
    }
    if n_points == 0 || samples.len() < n_points {
        return Err(Error::Config(format!(
            "need at least n_points = {n_points} samples, got {}",
            samples.len()
        )));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let pos = |i: usize| 2.0 * (i as f64 + 0.5) / n as f64 - 1.0;
    let interpolate = |z: f64| -> f64 {
        if z <= pos(0) {
            return sorted[0];
        }
        if z >= pos(n - 1) {
            return sorted[n - 1];
        }
        // plotting positions are uniform, so the bracket is direct
        let fi = (z + 1.0) * n as f64 / 2.0 - 0.5;
        let i = fi.floor() as usize;
        let w = fi - i as f64;
        sorted[i] * (1.0 - w) + sorted[i + 1] * w
    };
    let mut pairs: Vec<(f64, f64)> = (1..=n_points)
        .map(|k| {
            let z = ((2 * k - 1) as f64 * std::f64::consts::PI / (2 * n_points) as f64).cos();
            (z, interpolate(z))
        })
        .collect();
    pairs.reverse(); // Chebyshev nodes come out descending in k
    Ok(DataTargets { pairs })
}

/// Distance measure weights and the slope floor for the total loss.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossConfig {
    pub data_weight: f64,
    pub sde_weight: f64,
    pub eps_slope: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { data_weight: 1.0, sde_weight: 1.0, eps_slope: DEFAULT_EPS_SLOPE }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.data_weight < 0.0 || self.sde_weight < 0.0 {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        if self.data_weight == 0.0 && self.sde_weight == 0.0 {
            return Err(Error::Config("at least one loss weight must be positive".into()));
        }
        if !(self.eps_slope > 0.0) {
            return Err(Error::Config("eps_slope must be positive".into()));
        }
        Ok(())
    }
}

/// Adam settings. The step-decay schedule multiplies the learning rate by
/// `decay_factor` every `decay_every` epochs when configured.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Also descend the cost weights (analytic gradient, linear in alpha).
    pub train_alpha: bool,
    pub decay_every: Option<usize>,
    pub decay_factor: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            train_alpha: false,
            decay_every: None,
            decay_factor: 1.0,
        }
    }
}

/// Adam with bias correction.
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: usize,
}

impl Adam {
    pub fn new(n_params: usize, cfg: AdamConfig) -> Self {
        Adam { cfg, m: vec![0.0; n_params], v: vec![0.0; n_params], step: 0 }
    }

    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        let mut lr = self.cfg.learning_rate;
        if let Some(every) = self.cfg.decay_every {
            lr *= self.cfg.decay_factor.powi((self.step / every) as i32);
        }
        self.step += 1;
        let bc1 = 1.0 - self.cfg.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.cfg.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m[i] = self.cfg.beta1 * self.m[i] + (1.0 - self.cfg.beta1) * grads[i];
            self.v[i] = self.cfg.beta2 * self.v[i] + (1.0 - self.cfg.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.cfg.epsilon);
        }
    }
}

/// Residual of the quantilized Ornstein-Uhlenbeck equation from value and
/// derivative parts: `dG/dt - [nu (mu - G) + sigma^2/2 m^-2 d2G/dz2]` with
/// `m = max(|dG/dz|, eps_slope)`.
pub fn ou_residual_from_parts(
    g: f64,
    gz: f64,
    gzz: f64,
    gt: f64,
    sde: &SdeParams,
    eps_slope: f64,
) -> f64 {
    let m = gz.abs().max(eps_slope);
    gt - sde.nu * (sde.mu - g) - 0.5 * sde.sigma * sde.sigma * gzz / (m * m)
}

/// Residual evaluated through a bound model at one grid point.
pub fn ou_residual(
    bound: &BoundModel,
    params: &ModelParams,
    z: f64,
    t: f64,
    sde: &SdeParams,
    eps_slope: f64,
) -> Result<f64> {
    let out = bound.evaluate(params, z, t, Wants::ALL)?;
    Ok(ou_residual_from_parts(
        out.value,
        out.dz.unwrap(),
        out.dzz.unwrap(),
        out.dt.unwrap(),
        sde,
        eps_slope,
    ))
}

/// Mean squared residual over the grid, through the bound model. This is the
/// reference (slow) path; the [`Trainer`] uses an equivalent fused
/// evaluation.
pub fn sde_loss(
    bound: &BoundModel,
    params: &ModelParams,
    grid: &TrainingGrid,
    sde: &SdeParams,
    cfg: &LossConfig,
) -> Result<f64> {
    if cfg.sde_weight == 0.0 || grid.is_empty() {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for &t in &grid.t_points {
        for &z in &grid.z_points {
            let r = ou_residual(bound, params, z, t, sde, cfg.eps_slope)?;
            acc += r * r;
        }
    }
    Ok(cfg.sde_weight * acc / grid.len() as f64)
}

/// Mean squared error between the raw model and the quantile targets at a
/// fixed time.
pub fn data_loss(
    model: &QuantileModel,
    params: &ModelParams,
    targets: &DataTargets,
    t: f64,
) -> Result<f64> {
    if targets.pairs.is_empty() {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for &(z, q) in &targets.pairs {
        let v = model.evaluate_raw(params, z, t)?;
        acc += (v - q) * (v - q);
    }
    Ok(acc / targets.pairs.len() as f64)
}

/// Loss components for one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub total: f64,
    pub data: f64,
    pub sde: f64,
}

/// Everything training needs.
pub struct TrainSetup<'a> {
    pub model: &'a QuantileModel,
    pub profile: Option<&'a InitialProfile>,
    pub sde: SdeParams,
    pub grid: TrainingGrid,
    pub targets: Option<DataTargets>,
    /// Time at which data targets are regressed.
    pub data_time: f64,
    pub loss: LossConfig,
    pub optimizer: AdamConfig,
    pub epochs: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub params: ModelParams,
    pub history: Vec<EpochLoss>,
}

struct QuantityComponents {
    value: Vec<f64>,
    dz: Vec<f64>,
    dzz: Vec<f64>,
    dt: Vec<f64>,
}

/// Raw per-op components of value/dz/dzz(/dt) at one point, optionally under
/// a base parameter shift whose precompiled variant is supplied alongside.
fn components_at(
    model: &QuantileModel,
    theta: &[f64],
    z: f64,
    t: f64,
    with_dt: bool,
    base_shift: Option<(usize, i8)>,
    variant: Option<&CompiledVariant>,
) -> Result<QuantityComponents> {
    let shifts = base_shift.map(|s| vec![s]).unwrap_or_default();
    let session = EvalSession::with_options(
        model.program(),
        theta,
        VarValues::new(z, t),
        &model.spec().costs,
        true,
        shifts,
        variant,
    )?;
    Ok(QuantityComponents {
        value: session.value_components()?,
        dz: session.d_dvariable_components(Var::Latent)?,
        dzz: session.d2_dvariable2_components(Var::Latent)?,
        dt: if with_dt { session.d_dvariable_components(Var::Time)? } else { Vec::new() },
    })
}

fn diff_components(
    plus: &QuantityComponents,
    minus: &QuantityComponents,
    w: f64,
    with_dt: bool,
) -> QuantityComponents {
    let comb =
        |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| w * (x - y)).collect() };
    QuantityComponents {
        value: comb(&plus.value, &minus.value),
        dz: comb(&plus.dz, &minus.dz),
        dzz: comb(&plus.dzz, &minus.dzz),
        dt: if with_dt { comb(&plus.dt, &minus.dt) } else { Vec::new() },
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct PointState {
    z: f64,
    t: f64,
    z_idx: usize,
    r: f64,
    /// dR/d(f, fz, fzz, ft)
    dr: [f64; 4],
    /// per-op components of (f, fz, fzz, ft) for the alpha gradient
    comp: [Vec<f64>; 4],
}

/// Prepared training state: validated setup, flattened grid, frozen profile
/// tables and the theta slot map.
pub struct Trainer<'a> {
    setup: &'a TrainSetup<'a>,
    sde_active: bool,
    data_active: bool,
    floating: bool,
    pin: Option<(Vec<f64>, f64)>,
    profile_table: Vec<(f64, f64, f64)>,
    pin_table: Vec<f64>,
    grid_points: Vec<(usize, f64, f64)>,
    /// `(param index, slot index, slot scale)` per parameter-bound slot.
    theta_slots: Vec<(usize, usize, f64)>,
    n_theta: usize,
    n_alpha: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(setup: &'a TrainSetup<'a>) -> Result<Self> {
        setup.loss.validate()?;
        let model = setup.model;
        let sde_active = setup.loss.sde_weight > 0.0 && !setup.grid.is_empty();
        let data_active = setup.loss.data_weight > 0.0
            && setup.targets.as_ref().is_some_and(|t| !t.pairs.is_empty());
        let floating = matches!(model.spec().boundary, BoundaryMode::Floating);
        if sde_active && model.spec().t_map.is_none() {
            return Err(Error::Config("the differential loss requires a t_map".into()));
        }
        if floating && setup.profile.is_none() {
            return Err(Error::Config(
                "floating boundary mode requires an initial profile".into(),
            ));
        }
        if data_active && floating {
            return Err(Error::Config(
                "data regression applies to raw models; train the fixed-time model first, \
                 then propagate with the floating boundary"
                    .into(),
            ));
        }
        let pin = match &model.spec().boundary {
            BoundaryMode::Pinned { pin_points, pin_weight }
                if sde_active && *pin_weight > 0.0 && !pin_points.is_empty() =>
            {
                if setup.profile.is_none() {
                    return Err(Error::Config("pinned boundary training needs a profile".into()));
                }
                Some((pin_points.clone(), *pin_weight))
            }
            _ => None,
        };

        // frozen profile values over the grid latent points, computed once
        let profile_table: Vec<(f64, f64, f64)> = if sde_active && floating {
            let profile = setup.profile.unwrap();
            exec::map_slice(&setup.grid.z_points, |&z| profile.parts(z))
                .into_iter()
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        let pin_table: Vec<f64> = match &pin {
            Some((points, _)) => {
                let profile = setup.profile.unwrap();
                exec::map_slice(points, |&z| profile.value(z)).into_iter().collect::<Result<_>>()?
            }
            None => Vec::new(),
        };

        let grid_points: Vec<(usize, f64, f64)> = setup
            .grid
            .t_points
            .iter()
            .flat_map(|&t| {
                setup.grid.z_points.iter().enumerate().map(move |(zi, &z)| (zi, z, t))
            })
            .collect();

        let theta_slots: Vec<(usize, usize, f64)> = (0..model.program().n_params())
            .flat_map(|p| {
                model.program().parameter_slots(p).iter().map(move |&s| (p, s))
            })
            .map(|(p, s)| {
                let scale = match model.program().gates()[s] {
                    ProgramGate::Rotation { binding: Binding::Parameter { scale, .. }, .. } => {
                        scale
                    }
                    _ => unreachable!("parameter slot list points at a non-parameter gate"),
                };
                (p, s, scale)
            })
            .collect();

        Ok(Trainer {
            setup,
            sde_active,
            data_active,
            floating,
            pin,
            profile_table,
            pin_table,
            grid_points,
            theta_slots,
            n_theta: model.program().n_params(),
            n_alpha: model.spec().costs.len(),
        })
    }

    /// Number of optimized scalars: theta plus alpha when alpha training is
    /// on.
    pub fn n_opt(&self) -> usize {
        self.n_theta + if self.setup.optimizer.train_alpha { self.n_alpha } else { 0 }
    }

    /// Total loss and its gradient with respect to `[theta, alpha?]`,
    /// evaluated with the fused parallel path. Reductions run in fixed index
    /// order.
    pub fn loss_and_gradient(
        &self,
        params: &ModelParams,
        epoch: usize,
    ) -> Result<(EpochLoss, Vec<f64>)> {
        let setup = self.setup;
        let model = setup.model;
        let theta = &params.theta;
        let alpha = &params.alpha;
        let mut grad = vec![0.0; self.n_opt()];
        let mut loss_data = 0.0;
        let mut loss_sde = 0.0;
        let mut loss_pin = 0.0;
        let train_alpha = setup.optimizer.train_alpha;

        if self.data_active {
            let targets = setup.targets.as_ref().unwrap();
            let m = targets.pairs.len() as f64;
            struct TargetEval {
                err: f64,
                comp: Vec<f64>,
                dtheta: Vec<f64>,
            }
            let evals: Vec<Result<TargetEval>> = exec::map_slice(&targets.pairs, |&(z, q)| {
                let session = EvalSession::new(
                    model.program(),
                    theta,
                    VarValues::new(z, setup.data_time),
                    &model.spec().costs,
                    true,
                )?;
                let comp = session.value_components()?;
                let per_param = session.grad_theta_components()?;
                let dtheta = per_param.iter().map(|c| dot(c, alpha)).collect::<Vec<f64>>();
                Ok(TargetEval { err: dot(&comp, alpha) - q, comp, dtheta })
            });
            for ev in evals {
                let ev = ev?;
                loss_data += ev.err * ev.err / m;
                let w = 2.0 * setup.loss.data_weight * ev.err / m;
                for p in 0..self.n_theta {
                    grad[p] += w * ev.dtheta[p];
                }
                if train_alpha {
                    for l in 0..self.n_alpha {
                        grad[self.n_theta + l] += w * ev.comp[l];
                    }
                }
            }
        }

        if self.sde_active {
            let m_grid = self.grid_points.len() as f64;
            let eps = setup.loss.eps_slope;
            let s2 = 0.5 * setup.sde.sigma * setup.sde.sigma;

            // precompiled evaluation variants: one for the unshifted circuit
            // and one per parameter-slot quarter shift, shared by every grid
            // point this epoch
            let variant_base = model.program().compile_split(theta, &[]).ok();
            let shifted_variants: Vec<CompiledVariant> = if variant_base.is_some() {
                let tasks: Vec<(usize, f64)> = self
                    .theta_slots
                    .iter()
                    .flat_map(|&(_, slot, _)| {
                        [(slot, std::f64::consts::FRAC_PI_2), (slot, -std::f64::consts::FRAC_PI_2)]
                    })
                    .collect();
                exec::map_slice(&tasks, |&shift| model.program().compile_split(theta, &[shift]))
                    .into_iter()
                    .collect::<Result<Vec<_>>>()?
            } else {
                Vec::new()
            };
            let variant_for = |si: usize, sign_plus: bool| -> Option<&CompiledVariant> {
                if shifted_variants.is_empty() {
                    None
                } else {
                    Some(&shifted_variants[2 * si + usize::from(!sign_plus)])
                }
            };

            // boundary components per latent point (floating only)
            let boundary: Vec<QuantityComponents> = if self.floating {
                exec::map_slice(&setup.grid.z_points, |&z| {
                    components_at(model, theta, z, BOUNDARY_TIME, false, None, variant_base.as_ref())
                })
                .into_iter()
                .collect::<Result<Vec<_>>>()?
            } else {
                Vec::new()
            };

            let states: Vec<Result<PointState>> =
                exec::map_slice(&self.grid_points, |&(zi, z, t)| {
                    let at_boundary = self.floating && t == BOUNDARY_TIME;
                    let c = components_at(model, theta, z, t, true, None, variant_base.as_ref())?;
                    let n_ops = c.value.len();
                    let (f, fz, fzz);
                    let ft = dot(&c.dt, alpha);
                    let mut comp = [c.value, c.dz, c.dzz, c.dt];
                    if self.floating {
                        let (u0, u0z, u0zz) = self.profile_table[zi];
                        if at_boundary {
                            // wrap cancels the circuit exactly at t = 0
                            for part in comp.iter_mut().take(3) {
                                *part = vec![0.0; n_ops];
                            }
                            f = u0;
                            fz = u0z;
                            fzz = u0zz;
                        } else {
                            let b = &boundary[zi];
                            for (part, b_part) in
                                comp.iter_mut().zip([&b.value, &b.dz, &b.dzz])
                            {
                                for (c_val, b_val) in part.iter_mut().zip(b_part) {
                                    *c_val -= b_val;
                                }
                            }
                            f = u0 + dot(&comp[0], alpha);
                            fz = u0z + dot(&comp[1], alpha);
                            fzz = u0zz + dot(&comp[2], alpha);
                        }
                    } else {
                        f = dot(&comp[0], alpha);
                        fz = dot(&comp[1], alpha);
                        fzz = dot(&comp[2], alpha);
                    }
                    let m = fz.abs().max(eps);
                    let r = ft - setup.sde.nu * (setup.sde.mu - f) - s2 * fzz / (m * m);
                    let dr_dfz =
                        if fz.abs() > eps { 2.0 * s2 * fz.signum() * fzz / (m * m * m) } else { 0.0 };
                    Ok(PointState {
                        z,
                        t,
                        z_idx: zi,
                        r,
                        dr: [setup.sde.nu, dr_dfz, -s2 / (m * m), 1.0],
                        comp,
                    })
                });
            let states = states.into_iter().collect::<Result<Vec<_>>>()?;
            for st in &states {
                if !st.r.is_finite() {
                    return Err(Error::Numeric {
                        epoch,
                        detail: format!(
                            "non-finite residual at grid point (z={}, t={})",
                            st.z, st.t
                        ),
                    });
                }
                loss_sde += st.r * st.r / m_grid;
            }

            let slot_count = self.theta_slots.len();
            // boundary derivative table per (latent point, slot)
            let boundary_grads: Vec<QuantityComponents> = if self.floating {
                let tasks: Vec<(usize, usize)> = (0..setup.grid.z_points.len())
                    .flat_map(|zi| (0..slot_count).map(move |si| (zi, si)))
                    .collect();
                exec::map_slice(&tasks, |&(zi, si)| {
                    let (_, slot, scale) = self.theta_slots[si];
                    let z = setup.grid.z_points[zi];
                    let plus = components_at(
                        model,
                        theta,
                        z,
                        BOUNDARY_TIME,
                        false,
                        Some((slot, 1)),
                        variant_for(si, true),
                    )?;
                    let minus = components_at(
                        model,
                        theta,
                        z,
                        BOUNDARY_TIME,
                        false,
                        Some((slot, -1)),
                        variant_for(si, false),
                    )?;
                    Ok(diff_components(&plus, &minus, 0.5 * scale, false))
                })
                .into_iter()
                .collect::<Result<Vec<_>>>()?
            } else {
                Vec::new()
            };

            let tasks: Vec<(usize, usize)> = (0..states.len())
                .flat_map(|pi| (0..slot_count).map(move |si| (pi, si)))
                .collect();
            let contribs: Vec<Result<f64>> = exec::map_slice(&tasks, |&(pi, si)| {
                let st = &states[pi];
                let (_, slot, scale) = self.theta_slots[si];
                if self.floating && st.t == BOUNDARY_TIME {
                    // only the time derivative survives the wrap at t = 0
                    let dt_at = |q: i8| -> Result<Vec<f64>> {
                        EvalSession::with_options(
                            model.program(),
                            theta,
                            VarValues::new(st.z, st.t),
                            &model.spec().costs,
                            true,
                            vec![(slot, q)],
                            variant_for(si, q > 0),
                        )?
                        .d_dvariable_components(Var::Time)
                    };
                    let p = dt_at(1)?;
                    let m = dt_at(-1)?;
                    let dft: f64 = 0.5
                        * scale
                        * p.iter().zip(&m).zip(alpha).map(|((a, b), al)| al * (a - b)).sum::<f64>();
                    return Ok(st.r * st.dr[3] * dft);
                }
                let plus = components_at(
                    model,
                    theta,
                    st.z,
                    st.t,
                    true,
                    Some((slot, 1)),
                    variant_for(si, true),
                )?;
                let minus = components_at(
                    model,
                    theta,
                    st.z,
                    st.t,
                    true,
                    Some((slot, -1)),
                    variant_for(si, false),
                )?;
                let d = diff_components(&plus, &minus, 0.5 * scale, true);
                let (mut df, mut dfz, mut dfzz) =
                    (dot(&d.value, alpha), dot(&d.dz, alpha), dot(&d.dzz, alpha));
                let dft = dot(&d.dt, alpha);
                if self.floating {
                    let b = &boundary_grads[st.z_idx * slot_count + si];
                    df -= dot(&b.value, alpha);
                    dfz -= dot(&b.dz, alpha);
                    dfzz -= dot(&b.dzz, alpha);
                }
                Ok(st.r * (st.dr[0] * df + st.dr[1] * dfz + st.dr[2] * dfzz + st.dr[3] * dft))
            });
            let mut acc_slots = vec![0.0; slot_count];
            for (k, c) in contribs.into_iter().enumerate() {
                acc_slots[k % slot_count] += c?;
            }
            let w = 2.0 * setup.loss.sde_weight / m_grid;
            for (si, &(p, _, _)) in self.theta_slots.iter().enumerate() {
                grad[p] += w * acc_slots[si];
            }
            if train_alpha {
                for st in &states {
                    let wr = w * st.r;
                    for l in 0..self.n_alpha {
                        grad[self.n_theta + l] += wr
                            * (st.dr[0] * st.comp[0][l]
                                + st.dr[1] * st.comp[1][l]
                                + st.dr[2] * st.comp[2][l]
                                + st.dr[3] * st.comp[3][l]);
                    }
                }
            }
        }

        if let Some((points, weight)) = &self.pin {
            let m = points.len() as f64;
            for (i, &z) in points.iter().enumerate() {
                let session = EvalSession::new(
                    model.program(),
                    theta,
                    VarValues::new(z, BOUNDARY_TIME),
                    &model.spec().costs,
                    true,
                )?;
                let comp = session.value_components()?;
                let err = dot(&comp, alpha) - self.pin_table[i];
                loss_pin += weight * err * err / m;
                let wg = 2.0 * weight * err / m;
                let per_param = session.grad_theta_components()?;
                for (p, c) in per_param.iter().enumerate() {
                    grad[p] += wg * dot(c, alpha);
                }
                if train_alpha {
                    for l in 0..self.n_alpha {
                        grad[self.n_theta + l] += wg * comp[l];
                    }
                }
            }
        }

        let loss = EpochLoss {
            total: setup.loss.data_weight * loss_data
                + setup.loss.sde_weight * loss_sde
                + loss_pin,
            data: loss_data,
            sde: loss_sde,
        };
        Ok((loss, grad))
    }

    /// Runs the Adam loop. `on_epoch` is called serially after each epoch.
    pub fn run(
        &self,
        mut on_epoch: impl FnMut(usize, &EpochLoss, &ModelParams),
    ) -> Result<TrainResult> {
        let setup = self.setup;
        if setup.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        let mut params = setup.model.initial_params(setup.seed);
        let mut adam = Adam::new(self.n_opt(), setup.optimizer);
        let mut history = Vec::with_capacity(setup.epochs);
        for epoch in 0..setup.epochs {
            let (loss, grad) = self.loss_and_gradient(&params, epoch)?;
            if !loss.total.is_finite() {
                return Err(Error::Numeric {
                    epoch,
                    detail: format!("non-finite total loss {}", loss.total),
                });
            }
            let mut opt_vec: Vec<f64> = params.theta.clone();
            if setup.optimizer.train_alpha {
                opt_vec.extend_from_slice(&params.alpha);
            }
            adam.update(&mut opt_vec, &grad);
            params.theta.copy_from_slice(&opt_vec[..self.n_theta]);
            if setup.optimizer.train_alpha {
                params.alpha.copy_from_slice(&opt_vec[self.n_theta..]);
            }
            history.push(loss);
            on_epoch(epoch, &loss, &params);
        }
        Ok(TrainResult { params, history })
    }
}

/// Adam descent of the total loss; see [`Trainer`].
pub fn train(
    setup: &TrainSetup,
    on_epoch: impl FnMut(usize, &EpochLoss, &ModelParams),
) -> Result<TrainResult> {
    Trainer::new(setup)?.run(on_epoch)
}

/// Loss evaluation without gradients through the reference path, for
/// reporting and cross-checks.
pub fn evaluate_loss(setup: &TrainSetup, params: &ModelParams) -> Result<EpochLoss> {
    let bound = BoundModel::new(setup.model, setup.profile)?;
    let data = match &setup.targets {
        Some(t) if setup.loss.data_weight > 0.0 => {
            data_loss(setup.model, params, t, setup.data_time)?
        }
        _ => 0.0,
    };
    let sde_weighted = sde_loss(&bound, params, &setup.grid, &setup.sde, &setup.loss)?;
    let sde = if setup.loss.sde_weight > 0.0 { sde_weighted / setup.loss.sde_weight } else { 0.0 };
    Ok(EpochLoss { total: setup.loss.data_weight * data + sde_weighted, data, sde })
}

/// Evaluates a bound model on a `(z, t)` product grid. Returns row-major
/// values, `t` outermost.
pub fn surface(
    bound: &BoundModel,
    params: &ModelParams,
    z_points: &[f64],
    t_points: &[f64],
) -> Result<Vec<ModelOutput>> {
    let points: Vec<(f64, f64)> =
        t_points.iter().flat_map(|&t| z_points.iter().map(move |&z| (z, t))).collect();
    exec::map_slice(&points, |&(z, t)| bound.evaluate(params, z, t, Wants::NONE))
        .into_iter()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::{AnsatzSpec, FeatureMapKind, FeatureMapSpec};
    use crate::quantile_model::{GeneratorSpec, Layout};
    use crate::sde_oracle::{analytic_qf_parts, sample_analytic_qf};
    use crate::statevector::{CostOperator, Pauli};

    fn fig3_params() -> SdeParams {
        SdeParams { nu: 1.0, mu: 0.0, sigma: 0.7, x0: 4.0, t0: -0.2 }
    }

    fn small_spec(n: usize, depth: usize, boundary: BoundaryMode) -> GeneratorSpec {
        GeneratorSpec {
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
            boundary,
            init_angles: None,
        }
    }

    fn no_boundary() -> BoundaryMode {
        BoundaryMode::Pinned { pin_points: vec![], pin_weight: 0.0 }
    }

    #[test]
    fn chebyshev_node_midpoint_is_zero() {
        let samples: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let t = prepare_quantile_targets(&samples, 43).unwrap();
        // node n = 22 of 43 sits exactly at z = 0
        assert!(t.pairs[21].0.abs() < 1e-15);
        let edge = (std::f64::consts::PI / 86.0).cos();
        assert!((t.pairs[42].0 - edge).abs() < 1e-15);
        assert!((edge - 0.999333).abs() < 1e-6);
    }

    #[test]
    fn targets_are_ascending_and_monotone() {
        let samples = sample_analytic_qf(&fig3_params(), 0.0, 50_000, 5).unwrap();
        let t = prepare_quantile_targets(&samples.values, 43).unwrap();
        for w in t.pairs.windows(2) {
            assert!(w[1].0 > w[0].0);
            assert!(w[1].1 >= w[0].1);
        }
    }

    #[test]
    fn targets_match_analytic_quantile() {
        let p = fig3_params();
        let n = 100_000;
        let samples = sample_analytic_qf(&p, 0.0, n, 7).unwrap();
        let t = prepare_quantile_targets(&samples.values, 43).unwrap();
        for &(z, q) in &t.pairs {
            let expect = crate::sde_oracle::analytic_qf(&p, z, 0.0).unwrap();
            // order-statistic standard error sqrt(p(1-p)/N)/pdf(Q(p));
            // at the outermost Chebyshev nodes this exceeds 0.02/4
            let prob = (z + 1.0) / 2.0;
            let pdf = crate::sde_oracle::analytic_pdf(&p, expect, 0.0).unwrap();
            let se = (prob * (1.0 - prob) / n as f64).sqrt() / pdf;
            let tol = (4.0 * se).max(0.02);
            assert!((q - expect).abs() < tol, "z={z}: {q} vs {expect} (tol {tol})");
        }
    }

    #[test]
    fn targets_reject_empty_or_short_input() {
        assert!(prepare_quantile_targets(&[], 5).is_err());
        assert!(prepare_quantile_targets(&[1.0, 2.0], 5).is_err());
    }

    #[test]
    fn residual_of_analytic_quantile_vanishes() {
        let p = fig3_params();
        for i in 0..21 {
            let z = -0.95 + 0.095 * i as f64;
            for j in 0..20 {
                let t = 0.5 * j as f64 / 19.0;
                let parts = analytic_qf_parts(&p, z, t).unwrap();
                let r = ou_residual_from_parts(
                    parts.value,
                    parts.dz,
                    parts.dzz,
                    parts.dt,
                    &p,
                    DEFAULT_EPS_SLOPE,
                );
                assert!(r.abs() <= 1e-8, "residual {r} at (z={z}, t={t})");
            }
        }
    }

    #[test]
    fn residual_isolates_drift_term_when_sigma_zero() {
        let p = SdeParams { nu: 1.4, mu: 0.6, sigma: 0.0, x0: 1.0, t0: 0.0 };
        // time-independent G: gt = 0, so the residual is -nu (mu - G)
        let r = ou_residual_from_parts(2.0, 1.0, 0.7, 0.0, &p, 1e-3);
        assert!((r + p.nu * (p.mu - 2.0)).abs() < 1e-15);
    }

    #[test]
    fn residual_slope_floor_keeps_flat_generator_finite() {
        let p = fig3_params();
        let r = ou_residual_from_parts(1.0, 0.0, 0.5, 0.0, &p, 1e-3);
        assert!(r.is_finite());
        let expect = 0.0 - p.nu * (p.mu - 1.0) - 0.5 * 0.49 * 0.5 / 1e-6;
        assert!((r - expect).abs() < 1e-9);
    }

    #[test]
    fn data_loss_zero_for_interpolating_model() {
        let model = QuantileModel::from_spec(small_spec(2, 1, no_boundary())).unwrap();
        let params = model.initial_params(3);
        let zs = [-0.5, 0.0, 0.5];
        let pairs: Vec<(f64, f64)> =
            zs.iter().map(|&z| (z, model.evaluate_raw(&params, z, 0.0).unwrap())).collect();
        let loss = data_loss(&model, &params, &DataTargets { pairs }, 0.0).unwrap();
        assert!(loss < 1e-28);
    }

    #[test]
    fn data_loss_matches_plain_mse() {
        let model = QuantileModel::from_spec(small_spec(2, 1, no_boundary())).unwrap();
        let params = model.initial_params(9);
        let pairs = vec![(-0.4, 1.0), (0.1, 0.5), (0.7, -0.2)];
        let loss =
            data_loss(&model, &params, &DataTargets { pairs: pairs.clone() }, 0.0).unwrap();
        let mut expect = 0.0;
        for (z, q) in &pairs {
            let v = model.evaluate_raw(&params, *z, 0.0).unwrap();
            expect += (v - q) * (v - q);
        }
        expect /= 3.0;
        assert!((loss - expect).abs() < 1e-14);
    }

    #[test]
    fn sde_loss_zero_weight_and_single_point() {
        let model = QuantileModel::from_spec(small_spec(2, 1, BoundaryMode::Floating)).unwrap();
        let params = model.initial_params(1);
        let profile = InitialProfile::AnalyticQf { params: fig3_params(), at_t: 0.0 };
        let bound = BoundModel::new(&model, Some(&profile)).unwrap();
        let cfg = LossConfig { data_weight: 1.0, sde_weight: 0.0, eps_slope: 1e-3 };
        let grid = TrainingGrid::uniform(3, 0.0, 0.5, 2).unwrap();
        assert_eq!(sde_loss(&bound, &params, &grid, &fig3_params(), &cfg).unwrap(), 0.0);

        let cfg = LossConfig::default();
        let grid = TrainingGrid { z_points: vec![0.3], t_points: vec![0.2] };
        let loss = sde_loss(&bound, &params, &grid, &fig3_params(), &cfg).unwrap();
        let r = ou_residual(&bound, &params, 0.3, 0.2, &fig3_params(), cfg.eps_slope).unwrap();
        assert!((loss - r * r).abs() < 1e-14);
    }

    #[test]
    fn grid_clamps_endpoints_into_open_domain() {
        let g = TrainingGrid::uniform(21, 0.0, 0.5, 20).unwrap();
        assert_eq!(g.len(), 420);
        assert!(g.z_points[0] > -1.0 && g.z_points[20] < 1.0);
        assert!(g.z_points[10].abs() < 1e-12);
        assert_eq!(g.t_points[0], 0.0);
        assert_eq!(g.t_points[19], 0.5);
    }

    #[test]
    fn train_rejects_zero_epochs() {
        let model = QuantileModel::from_spec(small_spec(2, 1, BoundaryMode::Floating)).unwrap();
        let profile = InitialProfile::AnalyticQf { params: fig3_params(), at_t: 0.0 };
        let setup = TrainSetup {
            model: &model,
            profile: Some(&profile),
            sde: fig3_params(),
            grid: TrainingGrid::uniform(3, 0.0, 0.5, 2).unwrap(),
            targets: None,
            data_time: 0.0,
            loss: LossConfig { data_weight: 0.0, sde_weight: 1.0, eps_slope: 1e-3 },
            optimizer: AdamConfig::default(),
            epochs: 0,
            seed: 1,
        };
        assert!(matches!(train(&setup, |_, _, _| {}), Err(Error::Config(_))));
    }

    #[test]
    fn sde_gradient_matches_finite_differences() {
        let model = QuantileModel::from_spec(small_spec(2, 1, BoundaryMode::Floating)).unwrap();
        let profile = InitialProfile::AnalyticQf { params: fig3_params(), at_t: 0.0 };
        let setup = TrainSetup {
            model: &model,
            profile: Some(&profile),
            sde: fig3_params(),
            grid: TrainingGrid { z_points: vec![-0.5, 0.2, 0.8], t_points: vec![0.0, 0.1, 0.4] },
            targets: None,
            data_time: 0.0,
            loss: LossConfig { data_weight: 0.0, sde_weight: 1.0, eps_slope: 1e-3 },
            optimizer: AdamConfig::default(),
            epochs: 1,
            seed: 11,
        };
        let trainer = Trainer::new(&setup).unwrap();
        let params = model.initial_params(11);
        let (_, grad) = trainer.loss_and_gradient(&params, 0).unwrap();
        let bound = BoundModel::new(&model, Some(&profile)).unwrap();
        let loss_at = |theta: &[f64]| {
            let p = ModelParams { theta: theta.to_vec(), alpha: params.alpha.clone() };
            sde_loss(&bound, &p, &setup.grid, &setup.sde, &setup.loss).unwrap()
        };
        let h = 1e-5;
        for p in 0..params.theta.len() {
            let mut tp = params.theta.clone();
            tp[p] += h;
            let mut tm = params.theta.clone();
            tm[p] -= h;
            let fd = (loss_at(&tp) - loss_at(&tm)) / (2.0 * h);
            assert!((grad[p] - fd).abs() < 1e-5, "param {p}: analytic {} vs fd {fd}", grad[p]);
        }
    }

    #[test]
    fn data_gradient_matches_finite_differences() {
        let model = QuantileModel::from_spec(small_spec(2, 1, no_boundary())).unwrap();
        let targets = DataTargets { pairs: vec![(-0.6, 2.0), (0.0, 2.5), (0.6, 3.0)] };
        let setup = TrainSetup {
            model: &model,
            profile: None,
            sde: fig3_params(),
            grid: TrainingGrid::empty(),
            targets: Some(targets.clone()),
            data_time: 0.0,
            loss: LossConfig { data_weight: 1.0, sde_weight: 0.0, eps_slope: 1e-3 },
            optimizer: AdamConfig { train_alpha: true, ..Default::default() },
            epochs: 1,
            seed: 21,
        };
        let trainer = Trainer::new(&setup).unwrap();
        let params = model.initial_params(21);
        let (_, grad) = trainer.loss_and_gradient(&params, 0).unwrap();
        let h = 1e-5;
        let loss_at = |p: &ModelParams| data_loss(&model, p, &targets, 0.0).unwrap();
        for k in 0..params.theta.len() {
            let mut pp = params.clone();
            pp.theta[k] += h;
            let mut pm = params.clone();
            pm.theta[k] -= h;
            let fd = (loss_at(&pp) - loss_at(&pm)) / (2.0 * h);
            assert!((grad[k] - fd).abs() < 1e-5, "theta {k}");
        }
        // alpha gradient sits after theta in the optimization vector
        let mut pp = params.clone();
        pp.alpha[0] += h;
        let mut pm = params.clone();
        pm.alpha[0] -= h;
        let fd = (loss_at(&pp) - loss_at(&pm)) / (2.0 * h);
        let ga = grad[params.theta.len()];
        assert!((ga - fd).abs() < 1e-5, "alpha: analytic {ga} vs fd {fd}");
    }

    #[test]
    fn training_history_is_deterministic() {
        let model = QuantileModel::from_spec(small_spec(2, 1, BoundaryMode::Floating)).unwrap();
        let profile = InitialProfile::AnalyticQf { params: fig3_params(), at_t: 0.0 };
        let mk = || TrainSetup {
            model: &model,
            profile: Some(&profile),
            sde: fig3_params(),
            grid: TrainingGrid::uniform(5, 0.0, 0.5, 3).unwrap(),
            targets: None,
            data_time: 0.0,
            loss: LossConfig { data_weight: 0.0, sde_weight: 1.0, eps_slope: 1e-3 },
            optimizer: AdamConfig::default(),
            epochs: 3,
            seed: 7,
        };
        let a = train(&mk(), |_, _, _| {}).unwrap();
        let b = train(&mk(), |_, _, _| {}).unwrap();
        assert_eq!(a.history.len(), 3);
        for (x, y) in a.history.iter().zip(&b.history) {
            assert_eq!(x.total.to_bits(), y.total.to_bits());
        }
        assert_eq!(a.params.theta, b.params.theta);
    }

    #[test]
    fn fused_loss_matches_reference_path() {
        let model = QuantileModel::from_spec(small_spec(3, 2, BoundaryMode::Floating)).unwrap();
        let profile = InitialProfile::AnalyticQf { params: fig3_params(), at_t: 0.0 };
        let setup = TrainSetup {
            model: &model,
            profile: Some(&profile),
            sde: fig3_params(),
            grid: TrainingGrid::uniform(5, 0.0, 0.4, 3).unwrap(),
            targets: None,
            data_time: 0.0,
            loss: LossConfig { data_weight: 0.0, sde_weight: 1.0, eps_slope: 1e-3 },
            optimizer: AdamConfig::default(),
            epochs: 1,
            seed: 4,
        };
        let trainer = Trainer::new(&setup).unwrap();
        let params = model.initial_params(4);
        let (loss, _) = trainer.loss_and_gradient(&params, 0).unwrap();
        let reference = evaluate_loss(&setup, &params).unwrap();
        // the fused path evaluates through compiled variants, so agreement
        // is to rounding, not bitwise
        assert!(
            (loss.sde - reference.sde).abs() < 1e-10 * reference.sde.abs().max(1.0),
            "fused {} vs reference {}",
            loss.sde,
            reference.sde
        );
    }

    #[test]
    fn pinned_training_gradient_matches_finite_differences() {
        let boundary = BoundaryMode::Pinned { pin_points: vec![-0.5, 0.0, 0.5], pin_weight: 1.0 };
        let model = QuantileModel::from_spec(small_spec(2, 1, boundary)).unwrap();
        let profile = InitialProfile::AnalyticQf { params: fig3_params(), at_t: 0.0 };
        let setup = TrainSetup {
            model: &model,
            profile: Some(&profile),
            sde: fig3_params(),
            grid: TrainingGrid { z_points: vec![-0.4, 0.4], t_points: vec![0.2] },
            targets: None,
            data_time: 0.0,
            loss: LossConfig { data_weight: 0.0, sde_weight: 1.0, eps_slope: 1e-3 },
            optimizer: AdamConfig::default(),
            epochs: 1,
            seed: 6,
        };
        let trainer = Trainer::new(&setup).unwrap();
        let params = model.initial_params(6);
        let (_, grad) = trainer.loss_and_gradient(&params, 0).unwrap();
        let bound = BoundModel::new(&model, Some(&profile)).unwrap();
        let loss_at = |theta: &[f64]| {
            let p = ModelParams { theta: theta.to_vec(), alpha: params.alpha.clone() };
            let sde = sde_loss(&bound, &p, &setup.grid, &setup.sde, &setup.loss).unwrap();
            let mut pin = 0.0;
            for &z in &[-0.5, 0.0, 0.5] {
                let v = model.evaluate_raw(&p, z, 0.0).unwrap();
                let u = profile.value(z).unwrap();
                pin += (v - u) * (v - u) / 3.0;
            }
            sde + pin
        };
        let h = 1e-5;
        for p in [0usize, 2, 5] {
            let mut tp = params.theta.clone();
            tp[p] += h;
            let mut tm = params.theta.clone();
            tm[p] -= h;
            let fd = (loss_at(&tp) - loss_at(&tm)) / (2.0 * h);
            assert!((grad[p] - fd).abs() < 1e-5, "param {p}: {} vs {fd}", grad[p]);
        }
    }

    #[test]
    fn numeric_abort_reports_epoch_and_point() {
        // zero slope floor with a flat generator drives 0/0 into the residual
        let mut spec = small_spec(2, 1, no_boundary());
        spec.costs =
            vec![CostOperator { terms: CostOperator::total_z(2).terms, global_weight: 0.0 }];
        let model = QuantileModel::from_spec(spec).unwrap();
        let setup = TrainSetup {
            model: &model,
            profile: None,
            sde: fig3_params(),
            grid: TrainingGrid::uniform(3, 0.0, 0.5, 2).unwrap(),
            targets: None,
            data_time: 0.0,
            loss: LossConfig {
                data_weight: 0.0,
                sde_weight: 1.0,
                eps_slope: f64::MIN_POSITIVE,
            },
            optimizer: AdamConfig::default(),
            epochs: 1,
            seed: 2,
        };
        match train(&setup, |_, _, _| {}) {
            Err(Error::Numeric { epoch, detail }) => {
                assert_eq!(epoch, 0);
                assert!(detail.contains("z="), "diagnostic should name the grid point: {detail}");
            }
            other => panic!("expected numeric abort, got {other:?}"),
        }
    }

    #[test]
    fn short_run_reduces_loss() {
        let model = QuantileModel::from_spec(small_spec(2, 2, BoundaryMode::Floating)).unwrap();
        let profile = InitialProfile::AnalyticQf { params: fig3_params(), at_t: 0.0 };
        let setup = TrainSetup {
            model: &model,
            profile: Some(&profile),
            sde: fig3_params(),
            grid: TrainingGrid::uniform(7, 0.0, 0.5, 4).unwrap(),
            targets: None,
            data_time: 0.0,
            loss: LossConfig { data_weight: 0.0, sde_weight: 1.0, eps_slope: 1e-3 },
            optimizer: AdamConfig::default(),
            epochs: 30,
            seed: 13,
        };
        let result = train(&setup, |_, _, _| {}).unwrap();
        assert_eq!(result.history.len(), 30);
        let first = result.history[0].total;
        let best = result.history.iter().map(|l| l.total).fold(f64::INFINITY, f64::min);
        assert!(best < first, "training made no progress: first {first}, best {best}");
    }
}
