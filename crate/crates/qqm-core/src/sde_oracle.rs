//! Classical ground truth for the Ornstein-Uhlenbeck benchmark:
//! Euler-Maruyama integration, the analytic transition density and quantile
//! function (via an independently implemented inverse error function),
//! histogramming and distribution-distance statistics.
//!
//! Randomness is ChaCha8 throughout, seeded explicitly; Euler-Maruyama paths
//! use one ChaCha stream per path so path sets are reproducible and
//! embarrassingly parallel. Normal variates come from a hand-written
//! Box-Muller transform, so sample streams are bit-stable given the PRNG.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec;

/// Ornstein-Uhlenbeck parameters `dX = nu (mu - X) dt + sigma dW` with the
/// initial condition `X(t0) = x0` (a Dirac delta).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SdeParams {
    /// Speed of reversion, must be positive.
    pub nu: f64,
    /// Long-term mean level.
    pub mu: f64,
    /// Volatility, non-negative.
    pub sigma: f64,
    /// Initial value.
    pub x0: f64,
    /// Initial time.
    pub t0: f64,
}

impl SdeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0) {
            return Err(Error::Config(format!("nu must be > 0, got {}", self.nu)));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::Config(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        for (name, v) in [("mu", self.mu), ("x0", self.x0), ("t0", self.t0)] {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite, got {v}")));
            }
        }
        Ok(())
    }

    /// Mean of the transition density at time `t`.
    pub fn mean(&self, t: f64) -> f64 {
        self.mu + (self.x0 - self.mu) * (-self.nu * (t - self.t0)).exp()
    }

    /// Variance of the transition density at time `t`.
    pub fn variance(&self, t: f64) -> f64 {
        let decay = (-2.0 * self.nu * (t - self.t0)).exp();
        self.sigma * self.sigma * (1.0 - decay) / (2.0 * self.nu)
    }
}

/// Where a sample set came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    EulerMaruyama,
    Qqm,
    Qgan,
    Analytic,
}

/// A batch of scalar samples at one time stamp.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub values: Vec<f64>,
    pub t: f64,
    pub provenance: Provenance,
    pub seed: u64,
}

impl SampleSet {
    pub fn new(values: Vec<f64>, t: f64, provenance: Provenance, seed: u64) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite sample value {v}")));
        }
        Ok(SampleSet { values, t, provenance, seed })
    }
}

// ---------------------------------------------------------------------------
// erf / inverf
// ---------------------------------------------------------------------------

const FRAC_2_SQRT_PI: f64 = 1.128_379_167_095_512_6; // 2/sqrt(pi)

/// Error function, implemented independently of any library:
/// Maclaurin series for |x| < 2, Lentz continued fraction for erfc beyond.
pub fn erf(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    if x < 0.0 {
        return -erf(-x);
    }
    if x < 2.0 {
        erf_series(x)
    } else {
        1.0 - erfc_cf(x)
    }
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    if x < 2.0 {
        1.0 - erf(x)
    } else {
        erfc_cf(x)
    }
}

fn erf_series(x: f64) -> f64 {
    // erf(x) = 2/sqrt(pi) * sum_n (-1)^n x^(2n+1) / (n! (2n+1))
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut n = 1.0_f64;
    loop {
        term *= -x2 / n;
        let inc = term / (2.0 * n + 1.0);
        sum += inc;
        if inc.abs() < 1e-18 * sum.abs() {
            break;
        }
        n += 1.0;
        debug_assert!(n < 200.0);
    }
    FRAC_2_SQRT_PI * sum
}

fn erfc_cf(x: f64) -> f64 {
    // erfc(x) = exp(-x^2) / (x sqrt(pi)) * K, with the continued fraction
    // K = 1/(1+) (1/(2x^2))/(1+) (2/(2x^2))/(1+) ... via modified Lentz
    let tiny = 1e-300;
    let half_inv_x2 = 0.5 / (x * x);
    let mut f = tiny;
    let mut c = f;
    let mut d = 0.0;
    for k in 0..200 {
        let a = if k == 0 { 1.0 } else { k as f64 * half_inv_x2 };
        let b = 1.0;
        d = b + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / (x * std::f64::consts::PI.sqrt()) * f
}

/// Inverse error function: `erf(inverf(z)) = z` for `z` in `(-1, 1)`.
///
/// A rational seed refined by Newton iterations against [`erf`], so the
/// inversion does not rely on an external erf implementation.
pub fn inverf(z: f64) -> Result<f64> {
    if !(z.abs() < 1.0) {
        return Err(Error::Domain(format!("inverf argument {z} outside (-1, 1)")));
    }
    if z == 0.0 {
        return Ok(0.0);
    }
    // Winitzki-style seed, ~1e-3 relative accuracy
    let a = 0.147;
    let ln1mz2 = (1.0 - z * z).ln();
    let u = 2.0 / (std::f64::consts::PI * a) + ln1mz2 / 2.0;
    let mut y = (z.signum()) * ((u * u - ln1mz2 / a).sqrt() - u).sqrt();
    // Newton: y' = y - (erf(y) - z) / erf'(y), erf'(y) = 2/sqrt(pi) e^{-y^2}
    for _ in 0..4 {
        let err = erf(y) - z;
        y -= err / (FRAC_2_SQRT_PI * (-y * y).exp());
    }
    Ok(y)
}

/// Derivative of the inverse error function at `z`.
pub fn inverf_d1(z: f64) -> Result<f64> {
    let y = inverf(z)?;
    Ok((y * y).exp() / FRAC_2_SQRT_PI)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64, mean: f64, std_dev: f64) -> f64 {
    0.5 * (1.0 + erf((x - mean) / (std_dev * std::f64::consts::SQRT_2)))
}

/// Quantile function of a normal distribution on the latent convention
/// `z in (-1, 1)`, `p = (z + 1)/2`.
pub fn normal_qf(z: f64, mean: f64, std_dev: f64) -> Result<f64> {
    Ok(mean + std_dev * std::f64::consts::SQRT_2 * inverf(z)?)
}

// ---------------------------------------------------------------------------
// analytic Ornstein-Uhlenbeck transition density and quantile
// ---------------------------------------------------------------------------

/// Transition density from the Dirac delta at `(x0, t0)`, evaluated at
/// `(x, t)` for `t > t0`.
pub fn analytic_pdf(params: &SdeParams, x: f64, t: f64) -> Result<f64> {
    params.validate()?;
    if t <= params.t0 {
        return Err(Error::Domain(format!(
            "density defined for t > t0 = {}, got t = {t}",
            params.t0
        )));
    }
    let var = params.variance(t);
    let mean = params.mean(t);
    let norm = 1.0 / (2.0 * std::f64::consts::PI * var).sqrt();
    Ok(norm * (-(x - mean) * (x - mean) / (2.0 * var)).exp())
}

/// CDF matching [`analytic_pdf`].
pub fn analytic_cdf(params: &SdeParams, x: f64, t: f64) -> Result<f64> {
    params.validate()?;
    if t <= params.t0 {
        return Err(Error::Domain(format!(
            "cdf defined for t > t0 = {}, got t = {t}",
            params.t0
        )));
    }
    Ok(normal_cdf(x, params.mean(t), params.variance(t).sqrt()))
}

/// Analytic quantile function on the latent convention `z in (-1, 1)`:
/// drift term plus the diffusion width times `inverf(z)`.
pub fn analytic_qf(params: &SdeParams, z: f64, t: f64) -> Result<f64> {
    params.validate()?;
    if t <= params.t0 {
        return Err(Error::Domain(format!(
            "quantile defined for t > t0 = {}, got t = {t}",
            params.t0
        )));
    }
    let width = (2.0 * params.variance(t)).sqrt();
    Ok(params.mean(t) + width * inverf(z)?)
}

/// Closed-form value and derivatives of the analytic quantile, used as the
/// independent oracle for residual checks and floating-boundary profiles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QfParts {
    pub value: f64,
    pub dz: f64,
    pub dzz: f64,
    pub dt: f64,
}

pub fn analytic_qf_parts(params: &SdeParams, z: f64, t: f64) -> Result<QfParts> {
    params.validate()?;
    if t <= params.t0 {
        return Err(Error::Domain(format!(
            "quantile defined for t > t0 = {}, got t = {t}",
            params.t0
        )));
    }
    let y = inverf(z)?;
    let dt_elapsed = t - params.t0;
    let decay = (-params.nu * dt_elapsed).exp();
    let decay2 = (-2.0 * params.nu * dt_elapsed).exp();
    let s = (2.0 * params.variance(t)).sqrt();
    // d/dz inverf = sqrt(pi)/2 e^{y^2}; d2/dz2 = pi/2 y e^{2 y^2}
    let inv_d1 = (y * y).exp() / FRAC_2_SQRT_PI;
    let inv_d2 = std::f64::consts::PI / 2.0 * y * (2.0 * y * y).exp();
    let ds_dt = params.sigma * params.sigma * decay2 / s;
    Ok(QfParts {
        value: params.mean(t) + s * y,
        dz: s * inv_d1,
        dzz: s * inv_d2,
        dt: -params.nu * (params.x0 - params.mu) * decay + ds_dt * y,
    })
}

/// Draws `n` samples through the analytic quantile at time `t`, with
/// `z ~ uniform(-1, 1)`.
pub fn sample_analytic_qf(params: &SdeParams, t: f64, n: usize, seed: u64) -> Result<SampleSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        let z = rng.gen_range(-1.0..1.0);
        values.push(analytic_qf(params, z, t)?);
    }
    SampleSet::new(values, t, Provenance::Analytic, seed)
}

// ---------------------------------------------------------------------------
// Euler-Maruyama
// ---------------------------------------------------------------------------

/// One Euler-Maruyama step with the supplied standard-normal draw.
pub fn em_step(params: &SdeParams, x: f64, dt: f64, xi: f64) -> f64 {
    x + params.nu * (params.mu - x) * dt + params.sigma * dt.sqrt() * xi
}

/// Hand-rolled Box-Muller source over a ChaCha stream.
struct BoxMuller {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl BoxMuller {
    fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        BoxMuller { rng, spare: None }
    }

    fn next(&mut self) -> f64 {
        if let Some(v) = self.spare.take() {
            return v;
        }
        // u1 in (0, 1], u2 in [0, 1)
        let u1 = 1.0 - self.rng.gen::<f64>();
        let u2 = self.rng.gen::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

/// Integrates `n_paths` OU paths from `(x0, t0)` to `t_end` with step `dt`,
/// returning one sample set per requested slice time. Slice times snap to the
/// nearest step index. Paths are independent ChaCha streams of `seed`.
pub fn euler_maruyama(
    params: &SdeParams,
    dt: f64,
    t_end: f64,
    n_paths: usize,
    seed: u64,
    slice_times: &[f64],
) -> Result<Vec<SampleSet>> {
    params.validate()?;
    if !(dt > 0.0) {
        return Err(Error::Config(format!("dt must be > 0, got {dt}")));
    }
    if n_paths == 0 {
        return Err(Error::Config("n_paths must be >= 1".into()));
    }
    let n_steps = ((t_end - params.t0) / dt).round() as i64;
    if n_steps < 0 {
        return Err(Error::Config(format!(
            "t_end = {t_end} precedes t0 = {}",
            params.t0
        )));
    }
    let n_steps = n_steps as usize;
    let mut slice_idx = Vec::with_capacity(slice_times.len());
    for &ts in slice_times {
        let k = ((ts - params.t0) / dt).round() as i64;
        if k < 0 || k as usize > n_steps {
            return Err(Error::Config(format!(
                "slice time {ts} outside the integrated range [{}, {t_end}]",
                params.t0
            )));
        }
        slice_idx.push(k as usize);
    }

    let per_path: Vec<Vec<f64>> = exec::map_range(n_paths, |path| {
        let mut gauss = BoxMuller::new(seed, path as u64);
        let mut x = params.x0;
        let mut out = vec![0.0; slice_idx.len()];
        for (i, &k) in slice_idx.iter().enumerate() {
            if k == 0 {
                out[i] = x;
            }
        }
        for step in 1..=n_steps {
            x = em_step(params, x, dt, gauss.next());
            for (i, &k) in slice_idx.iter().enumerate() {
                if k == step {
                    out[i] = x;
                }
            }
        }
        out
    });

    let mut slices = Vec::with_capacity(slice_idx.len());
    for (i, &ts) in slice_times.iter().enumerate() {
        let values: Vec<f64> = per_path.iter().map(|p| p[i]).collect();
        slices.push(SampleSet::new(values, ts, Provenance::EulerMaruyama, seed)?);
    }
    Ok(slices)
}

// ---------------------------------------------------------------------------
// histogram and Kolmogorov-Smirnov
// ---------------------------------------------------------------------------

/// Uniform-bin histogram with counts normalized by the total sample count;
/// out-of-range samples are dropped, so the counts sum to at most 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub normalized: Vec<f64>,
    pub n_total: usize,
}

impl Histogram {
    pub fn n_bins(&self) -> usize {
        self.normalized.len()
    }

    pub fn bin_edges(&self, i: usize) -> (f64, f64) {
        let w = (self.hi - self.lo) / self.normalized.len() as f64;
        (self.lo + w * i as f64, self.lo + w * (i + 1) as f64)
    }
}

pub fn histogram(samples: &SampleSet, range: (f64, f64), n_bins: usize) -> Result<Histogram> {
    let (lo, hi) = range;
    if !(hi > lo) {
        return Err(Error::Config(format!("degenerate histogram range [{lo}, {hi}]")));
    }
    if n_bins == 0 {
        return Err(Error::Config("n_bins must be >= 1".into()));
    }
    let mut counts = vec![0usize; n_bins];
    let w = (hi - lo) / n_bins as f64;
    for &v in &samples.values {
        if v >= lo && v < hi {
            let b = ((v - lo) / w) as usize;
            counts[b.min(n_bins - 1)] += 1;
        } else if v == hi {
            counts[n_bins - 1] += 1;
        }
    }
    let n_total = samples.values.len();
    Ok(Histogram {
        lo,
        hi,
        normalized: counts.iter().map(|&c| c as f64 / n_total as f64).collect(),
        n_total,
    })
}

/// Two-sided one-sample KS statistic against a CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Config("empty sample set".into()));
    }
    let mut xs = samples.to_vec();
    xs.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(((i + 1) as f64 / n - f).abs());
        d = d.max((f - i as f64 / n).abs());
    }
    Ok(d)
}

/// Two-sample KS statistic: the sup-norm distance between empirical CDFs.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Config("empty sample set".into()));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_unstable_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_unstable_by(|p, q| p.partial_cmp(q).unwrap());
    let (mut i, mut j) = (0usize, 0usize);
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let x = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= x {
            i += 1;
        }
        while j < ys.len() && ys[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig3_params() -> SdeParams {
        SdeParams { nu: 1.0, mu: 0.0, sigma: 0.7, x0: 4.0, t0: -0.2 }
    }

    #[test]
    fn erf_known_values() {
        // reference values from standard tables
        assert!((erf(0.5) - 0.5204998778130465).abs() < 1e-14);
        assert!((erf(1.0) - 0.8427007929497149).abs() < 1e-14);
        assert!((erf(2.5) - 0.999593047982555).abs() < 1e-13);
        assert!((erf(-1.0) + 0.8427007929497149).abs() < 1e-14);
    }

    #[test]
    fn erf_series_and_cf_agree_at_crossover() {
        let a = erf_series(2.0);
        let b = 1.0 - erfc_cf(2.0);
        assert!((a - b).abs() < 1e-14, "{a} vs {b}");
    }

    #[test]
    fn inverf_at_zero() {
        assert_eq!(inverf(0.0).unwrap(), 0.0);
    }

    #[test]
    fn inverf_at_half() {
        assert!((inverf(0.5).unwrap() - 0.4769362762044699).abs() < 1e-10);
    }

    #[test]
    fn inverf_is_odd() {
        for &z in &[0.1, 0.35, 0.77, 0.999] {
            assert!((inverf(-z).unwrap() + inverf(z).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn inverf_rejects_out_of_domain() {
        assert!(inverf(1.0).is_err());
        assert!(inverf(-1.2).is_err());
    }

    #[test]
    fn erf_inverf_round_trip() {
        for i in 0..1000 {
            let z = -0.999 + 1.998 * i as f64 / 999.0;
            let y = inverf(z).unwrap();
            assert!((erf(y) - z).abs() <= 1e-12, "z = {z}");
        }
    }

    #[test]
    fn pdf_mean_matches_closed_form() {
        let p = fig3_params();
        let t = 0.3;
        // quadrature of x * pdf over a wide range (Simpson)
        let (lo, hi, n) = (-6.0_f64, 10.0_f64, 20000usize);
        let h = (hi - lo) / n as f64;
        let f = |x: f64| x * analytic_pdf(&p, x, t).unwrap();
        let mut s = f(lo) + f(hi);
        for k in 1..n {
            s += f(lo + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        let mean = s * h / 3.0;
        let expect = p.x0 * (-p.nu * (t - p.t0)).exp();
        assert!((mean - expect).abs() < 1e-8, "{mean} vs {expect}");
    }

    #[test]
    fn pdf_normalizes_to_one() {
        let p = fig3_params();
        let t = 0.5;
        let (lo, hi, n) = (-8.0_f64, 12.0_f64, 20000usize);
        let h = (hi - lo) / n as f64;
        let f = |x: f64| analytic_pdf(&p, x, t).unwrap();
        let mut s = f(lo) + f(hi);
        for k in 1..n {
            s += f(lo + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        assert!((s * h / 3.0 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn variance_approaches_stationary_limit() {
        let p = fig3_params();
        assert!((p.variance(1000.0) - 0.245).abs() < 1e-12);
    }

    #[test]
    fn pdf_rejects_times_before_start() {
        let p = fig3_params();
        assert!(analytic_pdf(&p, 1.0, -0.2).is_err());
        assert!(analytic_qf(&p, 0.0, -0.3).is_err());
    }

    #[test]
    fn qf_drift_value_at_zero_latent() {
        let p = fig3_params();
        let q = analytic_qf(&p, 0.0, 0.0).unwrap();
        assert!((q - 4.0 * (-0.2_f64).exp()).abs() < 1e-12);
        assert!((q - 3.274923).abs() < 1e-6);
        // z = 0 stays on the drift at any time
        let q2 = analytic_qf(&p, 0.0, 0.37).unwrap();
        assert!((q2 - p.mean(0.37)).abs() < 1e-12);
    }

    #[test]
    fn qf_strictly_increasing_in_latent() {
        let p = fig3_params();
        let mut prev = f64::NEG_INFINITY;
        for i in 0..50 {
            let z = -0.98 + 0.04 * i as f64;
            let q = analytic_qf(&p, z, 0.25).unwrap();
            assert!(q > prev);
            prev = q;
        }
    }

    #[test]
    fn qf_parts_match_finite_differences() {
        let p = fig3_params();
        let (z, t) = (0.3, 0.2);
        let parts = analytic_qf_parts(&p, z, t).unwrap();
        let h = 1e-6;
        let fz = |z: f64| analytic_qf(&p, z, t).unwrap();
        let ft = |t: f64| analytic_qf(&p, z, t).unwrap();
        assert!((parts.dz - (fz(z + h) - fz(z - h)) / (2.0 * h)).abs() < 1e-6);
        let h2 = 1e-4; // second difference needs a larger step for roundoff
        assert!(
            (parts.dzz - (fz(z + h2) - 2.0 * fz(z) + fz(z - h2)) / (h2 * h2)).abs() < 1e-4
        );
        assert!((parts.dt - (ft(t + h) - ft(t - h)) / (2.0 * h)).abs() < 1e-6);
    }

    #[test]
    fn em_step_definition() {
        let p = SdeParams { nu: 1.3, mu: 0.4, sigma: 0.7, x0: 2.0, t0: 0.0 };
        let dt = 0.01;
        let got = em_step(&p, p.x0, dt, 1.0);
        let expect = p.x0 + p.nu * (p.mu - p.x0) * dt + p.sigma * dt.sqrt();
        assert!((got - expect).abs() < 1e-15);
    }

    #[test]
    fn em_deterministic_limit_matches_ode() {
        let p = SdeParams { nu: 1.0, mu: 0.0, sigma: 0.0, x0: 3.0, t0: 0.0 };
        let dt = 1e-3;
        let s = euler_maruyama(&p, dt, 0.5, 1, 7, &[0.5]).unwrap();
        let expect = p.x0 * (-0.5_f64).exp();
        assert!((s[0].values[0] - expect).abs() <= 2.0 * p.nu * p.nu * p.x0 * dt);
    }

    #[test]
    fn em_slices_are_reproducible_across_runs() {
        let p = fig3_params();
        let a = euler_maruyama(&p, 1e-2, 0.5, 64, 42, &[0.0, 0.5]).unwrap();
        let b = euler_maruyama(&p, 1e-2, 0.5, 64, 42, &[0.0, 0.5]).unwrap();
        assert_eq!(a[0].values, b[0].values);
        assert_eq!(a[1].values, b[1].values);
    }

    #[test]
    fn em_mean_tracks_analytic_mean() {
        let p = fig3_params();
        let n = 20000;
        let s = euler_maruyama(&p, 1e-2, 0.5, n, 9, &[0.5]).unwrap();
        let mean: f64 = s[0].values.iter().sum::<f64>() / n as f64;
        let sd = p.variance(0.5).sqrt();
        let tol = 4.0 * sd / (n as f64).sqrt() + 2.0 * p.nu * p.nu * p.x0 * 1e-2;
        assert!((mean - p.mean(0.5)).abs() < tol, "{mean} vs {}", p.mean(0.5));
    }

    #[test]
    fn histogram_single_bin_catches_all() {
        let s = SampleSet::new(vec![0.5; 10], 0.0, Provenance::Analytic, 0).unwrap();
        let h = histogram(&s, (0.0, 1.0), 1).unwrap();
        assert_eq!(h.normalized, vec![1.0]);
    }

    #[test]
    fn histogram_difference_of_identical_sets_is_zero() {
        let s = sample_analytic_qf(&fig3_params(), 0.25, 2000, 3).unwrap();
        let h1 = histogram(&s, (0.0, 5.0), 40).unwrap();
        let h2 = histogram(&s, (0.0, 5.0), 40).unwrap();
        for (a, b) in h1.normalized.iter().zip(&h2.normalized) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn histogram_rejects_degenerate_range() {
        let s = SampleSet::new(vec![0.5], 0.0, Provenance::Analytic, 0).unwrap();
        assert!(histogram(&s, (1.0, 1.0), 4).is_err());
        assert!(histogram(&s, (0.0, 1.0), 0).is_err());
    }

    #[test]
    fn sample_set_rejects_non_finite() {
        assert!(SampleSet::new(vec![1.0, f64::NAN], 0.0, Provenance::Qqm, 0).is_err());
    }

    #[test]
    fn ks_identical_samples_is_zero() {
        let v = vec![1.0, 2.0, 3.0, 4.0];
        assert_eq!(ks_two_sample(&v, &v).unwrap(), 0.0);
    }

    #[test]
    fn ks_disjoint_supports_is_one() {
        let a = vec![0.0, 0.1, 0.2];
        let b = vec![5.0, 5.1, 5.2];
        assert_eq!(ks_two_sample(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn ks_against_true_cdf_is_small() {
        let p = fig3_params();
        let t = 0.25;
        let s = sample_analytic_qf(&p, t, 100_000, 11).unwrap();
        let d = ks_one_sample(&s.values, |x| analytic_cdf(&p, x, t).unwrap()).unwrap();
        assert!(d <= 0.01, "ks = {d}");
    }

    #[test]
    fn quantile_cdf_duality() {
        let p = fig3_params();
        let t = 0.25;
        let s = sample_analytic_qf(&p, t, 100_000, 13).unwrap();
        for &z in &[-0.5, 0.0, 0.5] {
            let q = analytic_qf(&p, z, t).unwrap();
            let frac =
                s.values.iter().filter(|&&v| v < q).count() as f64 / s.values.len() as f64;
            assert!((frac - (z + 1.0) / 2.0).abs() < 0.01, "z = {z}, frac = {frac}");
        }
    }
}
