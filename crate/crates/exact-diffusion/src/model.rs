//! The unit-volatility SDE abstraction the exact algorithms operate on,
//! jump specifications, numerical validation of user-supplied coefficients,
//! and the Lamperti reduction from a general volatility coefficient.
//!
//! Exactness of the samplers rests on the user-supplied functions being
//! mathematically exact: the drift `alpha`, its antiderivative `A`, the
//! Girsanov integrand `phi = alpha^2/2 + alpha'/2`, and interval bounds for
//! `phi`. None of these are derived automatically; [`validate_model`]
//! cross-checks them numerically instead, since a silent symbolic slip is
//! the dominant failure mode in practice.

use crate::brownian::GaussianProposal;
use crate::error::{Error, Result};
use crate::numeric::adaptive_simpson;
use rand::Rng;

type ScalarFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;
type IntervalBoundFn = Box<dyn Fn(f64, f64) -> (f64, f64) + Send + Sync>;
type ProposalFn = Box<dyn Fn(f64, f64) -> GaussianProposal + Send + Sync>;
type JumpSampleFn = Box<dyn Fn(f64, &mut dyn rand::RngCore) -> f64 + Send + Sync>;

/// Target diffusion `dX = alpha(X) dt + dW` on `[0, horizon]` from `start`.
///
/// Immutable after construction; safe to share across concurrent samplers.
pub struct DiffusionModel {
    drift: ScalarFn,
    drift_deriv: ScalarFn,
    drift_integral: ScalarFn,
    phi: ScalarFn,
    phi_bounds: IntervalBoundFn,
    global_phi_bounds: Option<(f64, f64)>,
    endpoint_proposal: ProposalFn,
    horizon: f64,
    start: f64,
    layer_theta: f64,
    max_attempts: u64,
}

impl DiffusionModel {
    pub fn builder(horizon: f64, start: f64) -> DiffusionModelBuilder {
        DiffusionModelBuilder {
            horizon,
            start,
            drift: None,
            drift_deriv: None,
            drift_integral: None,
            phi: None,
            phi_bounds: None,
            global_phi_bounds: None,
            endpoint_proposal: None,
            layer_theta: 0.5,
            max_attempts: 1_000_000,
        }
    }

    pub fn drift(&self, x: f64) -> f64 {
        (self.drift)(x)
    }

    pub fn drift_deriv(&self, x: f64) -> f64 {
        (self.drift_deriv)(x)
    }

    /// `A(u) = int_0^u alpha`.
    pub fn drift_integral(&self, u: f64) -> f64 {
        (self.drift_integral)(u)
    }

    /// Girsanov integrand `phi = alpha^2/2 + alpha'/2`.
    pub fn phi(&self, x: f64) -> f64 {
        (self.phi)(x)
    }

    /// Layer-conditional bounds `(L, U)` with `phi(x) in [L, U]` for all
    /// `x in [lo, hi]`.
    pub fn phi_bounds_on(&self, lo: f64, hi: f64) -> (f64, f64) {
        (self.phi_bounds)(lo, hi)
    }

    /// Global bounds on `phi`, when the user asserts they exist (enables the
    /// bounded exact algorithm).
    pub fn global_phi_bounds(&self) -> Option<(f64, f64)> {
        self.global_phi_bounds
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    /// Scale factor for the default radial layer sequence,
    /// `a_i = i * theta * sqrt(interval length)`.
    pub fn layer_theta(&self) -> f64 {
        self.layer_theta
    }

    /// Rejection-attempt diagnostic cap. A triggered cap aborts the run with
    /// an error; it never silently truncates sampling.
    pub fn max_attempts(&self) -> u64 {
        self.max_attempts
    }

    /// Gaussian rejection envelope for the biased endpoint density over an
    /// interval of length `dt` starting at state `x`.
    pub fn endpoint_proposal(&self, x: f64, dt: f64) -> GaussianProposal {
        (self.endpoint_proposal)(x, dt)
    }

    /// Unnormalised log density of the biased endpoint:
    /// `A(y) - (y - x)^2 / (2 dt)`.
    pub fn log_endpoint_kernel(&self, x: f64, dt: f64) -> impl Fn(f64) -> f64 + '_ {
        move |y| self.drift_integral(y) - (y - x).powi(2) / (2.0 * dt)
    }

    /// Draw the endpoint of a path segment of length `dt` from state `x`,
    /// exactly, by rejection from the model's Gaussian envelope.
    pub fn sample_endpoint<R: Rng + ?Sized>(&self, x: f64, dt: f64, rng: &mut R) -> Result<f64> {
        let prop = self.endpoint_proposal(x, dt);
        crate::brownian::sample_biased_endpoint(self.log_endpoint_kernel(x, dt), &prop, rng)
    }
}

pub struct DiffusionModelBuilder {
    horizon: f64,
    start: f64,
    drift: Option<ScalarFn>,
    drift_deriv: Option<ScalarFn>,
    drift_integral: Option<ScalarFn>,
    phi: Option<ScalarFn>,
    phi_bounds: Option<IntervalBoundFn>,
    global_phi_bounds: Option<(f64, f64)>,
    endpoint_proposal: Option<ProposalFn>,
    layer_theta: f64,
    max_attempts: u64,
}

impl DiffusionModelBuilder {
    pub fn drift(mut self, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.drift = Some(Box::new(f));
        self
    }

    pub fn drift_deriv(mut self, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.drift_deriv = Some(Box::new(f));
        self
    }

    pub fn drift_integral(mut self, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.drift_integral = Some(Box::new(f));
        self
    }

    pub fn phi(mut self, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.phi = Some(Box::new(f));
        self
    }

    pub fn phi_bounds(
        mut self,
        f: impl Fn(f64, f64) -> (f64, f64) + Send + Sync + 'static,
    ) -> Self {
        self.phi_bounds = Some(Box::new(f));
        self
    }

    pub fn global_phi_bounds(mut self, lo: f64, hi: f64) -> Self {
        self.global_phi_bounds = Some((lo, hi));
        self
    }

    pub fn endpoint_proposal(
        mut self,
        f: impl Fn(f64, f64) -> GaussianProposal + Send + Sync + 'static,
    ) -> Self {
        self.endpoint_proposal = Some(Box::new(f));
        self
    }

    pub fn layer_theta(mut self, theta: f64) -> Self {
        self.layer_theta = theta;
        self
    }

    pub fn max_attempts(mut self, cap: u64) -> Self {
        self.max_attempts = cap;
        self
    }

    /// Opt-in convenience: derive `phi_bounds` by scanning `phi` on a grid
    /// and padding by `margin`.
    ///
    /// This breaks the exactness guarantee: a grid scan can miss the true
    /// extremum between grid points, and then the thinning probabilities are
    /// wrong. Use analytic bounds for production runs; this helper exists
    /// for exploratory work only.
    pub fn phi_bounds_grid_approx(mut self, margin: f64) -> Self {
        let phi_box = self.phi.take().expect("set phi before phi_bounds_grid_approx");
        let phi_shared = std::sync::Arc::new(phi_box);
        let phi_for_model = phi_shared.clone();
        self.phi = Some(Box::new(move |x| (phi_for_model)(x)));
        self.phi_bounds = Some(Box::new(move |lo, hi| {
            let n = 512;
            let mut mn = f64::INFINITY;
            let mut mx = f64::NEG_INFINITY;
            for i in 0..=n {
                let x = lo + (hi - lo) * i as f64 / n as f64;
                let v = (phi_shared)(x);
                mn = mn.min(v);
                mx = mx.max(v);
            }
            (mn - margin, mx + margin)
        }));
        self
    }

    pub fn build(self) -> Result<DiffusionModel> {
        if !(self.horizon > 0.0) {
            return Err(Error::Precondition(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if !(self.layer_theta > 0.0) {
            return Err(Error::Precondition("layer_theta must be positive".into()));
        }
        let missing = |name: &str| Error::Config(format!("model is missing `{name}`"));
        Ok(DiffusionModel {
            drift: self.drift.ok_or_else(|| missing("drift"))?,
            drift_deriv: self.drift_deriv.ok_or_else(|| missing("drift_deriv"))?,
            drift_integral: self.drift_integral.ok_or_else(|| missing("drift_integral"))?,
            phi: self.phi.ok_or_else(|| missing("phi"))?,
            phi_bounds: self.phi_bounds.ok_or_else(|| missing("phi_bounds"))?,
            global_phi_bounds: self.global_phi_bounds,
            endpoint_proposal: self
                .endpoint_proposal
                .ok_or_else(|| missing("endpoint_proposal"))?,
            horizon: self.horizon,
            start: self.start,
            layer_theta: self.layer_theta,
            max_attempts: self.max_attempts,
        })
    }
}

// ---------------------------------------------------------------------------
// Jumps
// ---------------------------------------------------------------------------

/// Dominating bound for the jump intensity.
pub enum IntensityBound {
    /// `lambda(x) <= Lambda` for all states.
    Global(f64),
    /// `lambda(x) <= f(lo, hi)` whenever the path is confined to `[lo, hi]`.
    Layer(Box<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

/// State-dependent compound-Poisson jump component.
pub struct JumpSpec {
    intensity: ScalarFn,
    bound: IntensityBound,
    floor: Option<f64>,
    sampler: JumpSampleFn,
}

impl JumpSpec {
    pub fn new(
        intensity: impl Fn(f64) -> f64 + Send + Sync + 'static,
        bound: IntensityBound,
        sampler: impl Fn(f64, &mut dyn rand::RngCore) -> f64 + Send + Sync + 'static,
    ) -> Self {
        JumpSpec { intensity: Box::new(intensity), bound, floor: None, sampler: Box::new(sampler) }
    }

    /// Assert a strictly positive lower intensity bound, enabling the
    /// superposition splitting of the jump process.
    pub fn with_intensity_floor(mut self, floor: f64) -> Self {
        self.floor = Some(floor);
        self
    }

    pub fn intensity(&self, x: f64) -> f64 {
        (self.intensity)(x)
    }

    pub fn intensity_floor(&self) -> Option<f64> {
        self.floor
    }

    pub fn global_bound(&self) -> Option<f64> {
        match &self.bound {
            IntensityBound::Global(b) => Some(*b),
            IntensityBound::Layer(_) => None,
        }
    }

    /// Intensity bound valid while the path stays in `[lo, hi]`.
    pub fn bound_on(&self, lo: f64, hi: f64) -> f64 {
        match &self.bound {
            IntensityBound::Global(b) => *b,
            IntensityBound::Layer(f) => f(lo, hi),
        }
    }

    /// Draw a jump size given the pre-jump state.
    pub fn sample_jump<R: Rng>(&self, pre: f64, rng: &mut R) -> f64 {
        (self.sampler)(pre, rng)
    }
}

// ---------------------------------------------------------------------------
// Lamperti reduction
// ---------------------------------------------------------------------------

/// Coefficients of a general-volatility SDE
/// `dV = beta(V) dt + sigma(V) dW (+ jumps)`.
pub struct RawSde {
    beta: ScalarFn,
    sigma: ScalarFn,
    sigma_deriv: ScalarFn,
}

impl RawSde {
    pub fn new(
        beta: impl Fn(f64) -> f64 + Send + Sync + 'static,
        sigma: impl Fn(f64) -> f64 + Send + Sync + 'static,
        sigma_deriv: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        RawSde { beta: Box::new(beta), sigma: Box::new(sigma), sigma_deriv: Box::new(sigma_deriv) }
    }
}

/// Lamperti state transformation `eta(v) = int_{vstar}^{v} du / sigma(u)`
/// mapping a general-volatility SDE to unit volatility, together with the
/// transformed drift.
pub struct LampertiTransform {
    raw: RawSde,
    vstar: f64,
    quad_tol: f64,
}

/// Build the transform, verifying `sigma > 0` on a probe grid around
/// `vstar`. Wider positivity checks happen on every evaluation range, so a
/// restricted state space only has to contain a neighbourhood of `vstar`.
pub fn lamperti_transform(raw: RawSde, vstar: f64) -> Result<LampertiTransform> {
    let t = LampertiTransform { raw, vstar, quad_tol: 1e-12 };
    let eps = 0.01 * vstar.abs().max(1.0);
    t.check_sigma_positive(vstar - eps, vstar + eps)?;
    Ok(t)
}

impl LampertiTransform {
    fn check_sigma_positive(&self, lo: f64, hi: f64) -> Result<()> {
        let n = 128;
        for i in 0..=n {
            let v = lo + (hi - lo) * i as f64 / n as f64;
            let s = (self.raw.sigma)(v);
            if !(s > 0.0) {
                return Err(Error::Precondition(format!(
                    "sigma({v}) = {s} is not strictly positive"
                )));
            }
        }
        Ok(())
    }

    /// `eta(v)`, by adaptive quadrature of `1/sigma` from `vstar`.
    pub fn eta(&self, v: f64) -> Result<f64> {
        self.check_sigma_positive(self.vstar.min(v), self.vstar.max(v))?;
        adaptive_simpson(&|u| 1.0 / (self.raw.sigma)(u), self.vstar, v, self.quad_tol)
    }

    /// `eta^{-1}(x)`, by monotone root finding (eta is strictly increasing
    /// since `sigma > 0`). Bracket expansion backs off where the state space
    /// ends (sigma no longer positive), so restricted domains work.
    pub fn eta_inv(&self, x: f64) -> Result<f64> {
        let scale = self.vstar.abs().max(1.0);
        let mut lo = self.vstar;
        let mut hi = self.vstar;
        let mut flo = self.eta(lo)?;
        let mut fhi = flo;
        let mut step = 0.5 * scale;
        while flo > x {
            match self.eta(lo - step) {
                Ok(v) => {
                    lo -= step;
                    flo = v;
                    step *= 2.0;
                }
                Err(_) => {
                    step /= 2.0;
                    if step < 1e-13 * scale {
                        return Err(Error::Numerical(format!(
                            "eta inverse: {x} below the transform's range"
                        )));
                    }
                }
            }
        }
        let mut step = 0.5 * scale;
        while fhi < x {
            match self.eta(hi + step) {
                Ok(v) => {
                    hi += step;
                    fhi = v;
                    step *= 2.0;
                }
                Err(_) => {
                    step /= 2.0;
                    if step < 1e-13 * scale {
                        return Err(Error::Numerical(format!(
                            "eta inverse: {x} above the transform's range"
                        )));
                    }
                }
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if self.eta(mid)? < x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Drift of the transformed unit-volatility process:
    /// `alpha(x) = beta(v)/sigma(v) - sigma'(v)/2` at `v = eta^{-1}(x)`.
    pub fn drift(&self, x: f64) -> Result<f64> {
        let v = self.eta_inv(x)?;
        Ok((self.raw.beta)(v) / (self.raw.sigma)(v) - (self.raw.sigma_deriv)(v) / 2.0)
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub worst: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &'static str, passed: bool, worst: f64, detail: String) {
        self.checks.push(CheckResult { name, passed, worst, detail });
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{:<28} {} (worst {:.3e}) {}",
                c.name,
                if c.passed { "ok  " } else { "FAIL" },
                c.worst,
                c.detail
            )?;
        }
        Ok(())
    }
}

/// Numerically cross-check the user-supplied coefficients of a model on a
/// grid around its start state. Reporting only: callers decide whether a
/// failure is fatal.
pub fn validate_model(m: &DiffusionModel, half_width: f64) -> ValidationReport {
    let mut report = ValidationReport::default();
    let center = m.start();
    let n = 200;
    let grid: Vec<f64> =
        (0..=n).map(|i| center - half_width + 2.0 * half_width * i as f64 / n as f64).collect();

    // phi(x) = drift^2/2 + drift'/2
    let mut worst = 0.0f64;
    let mut at = center;
    for &x in &grid {
        let want = m.drift(x).powi(2) / 2.0 + m.drift_deriv(x) / 2.0;
        let err = (m.phi(x) - want).abs() / want.abs().max(1.0);
        if err > worst {
            worst = err;
            at = x;
        }
    }
    report.push("phi consistency", worst < 1e-8, worst, format!("worst at x={at:.4}"));

    // A' = drift, by central differences
    let mut worst = 0.0f64;
    let h = 1e-5 * half_width.max(1.0);
    for &x in &grid {
        let fd = (m.drift_integral(x + h) - m.drift_integral(x - h)) / (2.0 * h);
        let err = (fd - m.drift(x)).abs() / m.drift(x).abs().max(1.0);
        worst = worst.max(err);
    }
    report.push("drift integral consistency", worst < 1e-6, worst, String::new());

    // interval bounds actually bound phi
    let mut worst = 0.0f64;
    for i in 0..20 {
        let lo = center - half_width + i as f64 * 0.05 * half_width;
        let hi = lo + (0.3 + 0.6 * (i as f64 / 20.0)) * half_width;
        let (bl, bu) = m.phi_bounds_on(lo, hi);
        for k in 0..=100 {
            let x = lo + (hi - lo) * k as f64 / 100.0;
            let v = m.phi(x);
            worst = worst.max(bl - v).max(v - bu);
        }
    }
    report.push("phi bounds validity", worst <= 1e-10, worst, String::new());

    // monotonicity under interval nesting
    let mut worst = 0.0f64;
    for i in 0..20 {
        let lo = center - (0.2 + 0.03 * i as f64) * half_width;
        let hi = center + (0.15 + 0.04 * i as f64) * half_width;
        let (l_in, u_in) = m.phi_bounds_on(lo, hi);
        let (l_out, u_out) = m.phi_bounds_on(lo - 0.2 * half_width, hi + 0.3 * half_width);
        worst = worst.max(l_out - l_in).max(u_in - u_out);
    }
    report.push("phi bounds monotone", worst <= 1e-10, worst, String::new());

    // global bounds, when asserted
    if let Some((gl, gu)) = m.global_phi_bounds() {
        let mut worst = 0.0f64;
        for &x in &grid {
            let v = m.phi(x);
            worst = worst.max(gl - v).max(v - gu);
        }
        report.push("global phi bounds", worst <= 1e-10, worst, String::new());
    }

    // endpoint envelope over the full horizon
    let prop = m.endpoint_proposal(m.start(), m.horizon());
    let kernel = m.log_endpoint_kernel(m.start(), m.horizon());
    let env_ok = prop.validate_against(kernel, 10.0).is_ok();
    report.push("endpoint envelope", env_ok, if env_ok { 0.0 } else { 1.0 }, String::new());

    report
}

/// Grid checks for a jump specification against a model state range.
pub fn validate_jump_spec(j: &JumpSpec, center: f64, half_width: f64) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = 200;
    let grid: Vec<f64> =
        (0..=n).map(|i| center - half_width + 2.0 * half_width * i as f64 / n as f64).collect();

    let mut worst_neg = 0.0f64;
    for &x in &grid {
        worst_neg = worst_neg.max(-j.intensity(x));
    }
    report.push("intensity nonnegative", worst_neg <= 0.0, worst_neg, String::new());

    let mut worst = f64::NEG_INFINITY;
    match j.global_bound() {
        Some(b) => {
            for &x in &grid {
                worst = worst.max(j.intensity(x) - b);
            }
            report.push("global intensity bound", worst <= 1e-10, worst, String::new());
        }
        None => {
            for i in 0..20 {
                let lo = center - half_width + i as f64 * 0.05 * half_width;
                let hi = lo + 0.5 * half_width;
                let b = j.bound_on(lo, hi);
                for k in 0..=50 {
                    let x = lo + (hi - lo) * k as f64 / 50.0;
                    worst = worst.max(j.intensity(x) - b);
                }
            }
            report.push("layer intensity bound", worst <= 1e-10, worst, String::new());
        }
    }

    if let Some(floor) = j.intensity_floor() {
        let mut worst = 0.0f64;
        for &x in &grid {
            worst = worst.max(floor - j.intensity(x));
        }
        report.push("intensity floor", worst <= 1e-10, worst, String::new());
    }

    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ou_model(horizon: f64, start: f64) -> DiffusionModel {
        DiffusionModel::builder(horizon, start)
            .drift(|x| -x)
            .drift_deriv(|_| -1.0)
            .drift_integral(|u| -u * u / 2.0)
            .phi(|x| (x * x - 1.0) / 2.0)
            .phi_bounds(|lo, hi| {
                let m = lo.abs().max(hi.abs());
                (-0.5, (m * m - 1.0) / 2.0)
            })
            .endpoint_proposal(|x, dt| {
                let mean = x / (1.0 + dt);
                let var = dt / (1.0 + dt);
                let bound = -mean * mean / 2.0 - (mean - x).powi(2) / (2.0 * dt);
                GaussianProposal { mean, variance: var, log_bound: bound + 1e-9 }
            })
            .build()
            .unwrap()
    }

    #[test]
    fn ou_model_validates() {
        let m = ou_model(1.0, 0.0);
        let report = validate_model(&m, 4.0);
        assert!(report.all_passed(), "{report}");
    }

    #[test]
    fn phi_offset_fails_consistency() {
        let m = DiffusionModel::builder(1.0, 0.0)
            .drift(|x| -x)
            .drift_deriv(|_| -1.0)
            .drift_integral(|u| -u * u / 2.0)
            .phi(|x| (x * x - 1.0) / 2.0 + 1.0) // deliberately off by one
            .phi_bounds(|lo, hi| {
                let m = lo.abs().max(hi.abs());
                (0.5, (m * m - 1.0) / 2.0 + 1.0)
            })
            .endpoint_proposal(|x, dt| GaussianProposal {
                mean: x / (1.0 + dt),
                variance: dt / (1.0 + dt),
                log_bound: 1.0,
            })
            .build()
            .unwrap();
        let report = validate_model(&m, 4.0);
        let phi_check = report.checks.iter().find(|c| c.name == "phi consistency").unwrap();
        assert!(!phi_check.passed);
    }

    #[test]
    fn undersized_phi_bounds_fail() {
        let m = DiffusionModel::builder(1.0, 0.0)
            .drift(|x| -x)
            .drift_deriv(|_| -1.0)
            .drift_integral(|u| -u * u / 2.0)
            .phi(|x| (x * x - 1.0) / 2.0)
            .phi_bounds(|_, _| (-0.5, 0.0)) // cap far below the grid max
            .endpoint_proposal(|x, dt| GaussianProposal {
                mean: x / (1.0 + dt),
                variance: dt / (1.0 + dt),
                log_bound: 1.0,
            })
            .build()
            .unwrap();
        let report = validate_model(&m, 4.0);
        let check = report.checks.iter().find(|c| c.name == "phi bounds validity").unwrap();
        assert!(!check.passed);
    }

    #[test]
    fn lamperti_identity_for_unit_volatility() {
        let raw = RawSde::new(|v| -v, |_| 1.0, |_| 0.0);
        let t = lamperti_transform(raw, 0.0).unwrap();
        for &v in &[-2.0, -0.3, 0.0, 1.7] {
            assert!((t.eta(v).unwrap() - v).abs() < 1e-10);
            assert!((t.drift(v).unwrap() + v).abs() < 1e-8);
        }
    }

    #[test]
    fn lamperti_constant_scaling() {
        let raw = RawSde::new(|_| 0.0, |_| 2.0, |_| 0.0);
        let t = lamperti_transform(raw, 0.0).unwrap();
        for &v in &[-1.0, 0.5, 3.0] {
            assert!((t.eta(v).unwrap() - v / 2.0).abs() < 1e-10);
        }
        assert!(t.drift(0.7).unwrap().abs() < 1e-8);
    }

    #[test]
    fn lamperti_geometric_form() {
        // sigma(v) = v on v > 0 with beta = v/2: eta = ln v, drift vanishes
        let raw = RawSde::new(|v| v / 2.0, |v| v, |_| 1.0);
        let t = lamperti_transform(raw, 1.0).unwrap();
        for &v in &[0.2, 0.9, 1.0, 2.5, 7.0] {
            assert!((t.eta(v).unwrap() - v.ln()).abs() < 1e-9, "eta({v})");
        }
        for &x in &[-1.0, 0.0, 1.5] {
            assert!(t.drift(x).unwrap().abs() < 1e-8);
            let v = t.eta_inv(x).unwrap();
            assert!((t.eta(v).unwrap() - x).abs() < 1e-10);
            assert!((v - x.exp()).abs() < 1e-7 * x.exp());
        }
    }

    #[test]
    fn lamperti_rejects_nonpositive_sigma() {
        // sigma <= 0 below zero: construction near vstar is fine, but any
        // evaluation whose range touches the bad region must error
        let raw = RawSde::new(|_| 0.0, |v| v, |_| 1.0);
        let t = lamperti_transform(raw, 0.5).unwrap();
        assert!(t.eta(-0.5).is_err());
        let raw_flat = RawSde::new(|_| 0.0, |_| 0.0, |_| 0.0);
        assert!(lamperti_transform(raw_flat, 0.0).is_err());
    }

    #[test]
    fn grid_phi_bounds_cover_with_margin() {
        let m = DiffusionModel::builder(1.0, 0.0)
            .drift(|x| x.sin())
            .drift_deriv(|x| x.cos())
            .drift_integral(|u| 1.0 - u.cos())
            .phi(|x| (x.sin().powi(2) + x.cos()) / 2.0)
            .phi_bounds_grid_approx(1e-6)
            .endpoint_proposal(|x, dt| GaussianProposal { mean: x, variance: dt, log_bound: 2.0 })
            .build()
            .unwrap();
        // interval wide enough to contain the true extrema of phi
        let (l, u) = m.phi_bounds_on(-4.0, 4.0);
        assert!(l <= -0.5 && u >= 0.625, "got ({l}, {u})");
    }
}
