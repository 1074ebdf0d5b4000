//! Elementary exact samplers on Brownian bridge path space: interpolation at
//! a point, the joint minimum (or maximum) and its time constrained to an
//! interval, Bessel bridge points conditional on a known extreme, inverse
//! Gaussian variates, and rejection sampling of biased-Brownian-motion
//! endpoints from a user-supplied Gaussian envelope.

use crate::error::{Error, Result};
use crate::numeric::sample_std_normal;
use rand::Rng;

/// A Brownian bridge pinned at `(s, x)` and `(t, y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BridgeSpec {
    pub s: f64,
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

impl BridgeSpec {
    pub fn new(s: f64, t: f64, x: f64, y: f64) -> Result<Self> {
        if !(t > s) {
            return Err(Error::Precondition(format!("bridge needs t > s, got [{s}, {t}]")));
        }
        Ok(BridgeSpec { s, t, x, y })
    }

    pub fn len(&self) -> f64 {
        self.t - self.s
    }

    pub fn lower_endpoint(&self) -> f64 {
        self.x.min(self.y)
    }

    pub fn upper_endpoint(&self) -> f64 {
        self.x.max(self.y)
    }

    /// Conditional mean of the bridge at `q`.
    pub fn mean_at(&self, q: f64) -> f64 {
        self.x + (q - self.s) * (self.y - self.x) / self.len()
    }

    /// Conditional variance of the bridge at `q`.
    pub fn var_at(&self, q: f64) -> f64 {
        (self.t - q) * (q - self.s) / self.len()
    }

    fn check_interior(&self, q: f64) -> Result<()> {
        if !(q > self.s && q < self.t) {
            return Err(Error::Precondition(format!(
                "time {q} outside the open interval ({}, {})",
                self.s, self.t
            )));
        }
        Ok(())
    }
}

/// Gaussian draw of the bridge at an interior time.
pub fn bridge_point<R: Rng + ?Sized>(b: &BridgeSpec, q: f64, rng: &mut R) -> Result<f64> {
    b.check_interior(q)?;
    Ok(b.mean_at(q) + b.var_at(q).sqrt() * sample_std_normal(rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ExtremeKind {
    Min,
    Max,
}

/// A path extreme together with the time at which it is attained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtremeRecord {
    pub tau: f64,
    pub value: f64,
    pub kind: ExtremeKind,
}

// CDF of the bridge minimum: P(min <= a) for a <= x /\ y.
fn min_cdf(b: &BridgeSpec, a: f64) -> f64 {
    (-2.0 * (b.x - a) * (b.y - a) / b.len()).exp()
}

/// Sample the bridge minimum and its time, conditioned to `min in [a1, a2]`
/// with `a1 < a2 <= x /\ y`.
///
/// The minimum value comes from inverting its closed-form law on the
/// conditioning interval; its time is the inverse-Gaussian mixture for the
/// arg-min of a bridge given its minimum.
pub fn sample_min<R: Rng + ?Sized>(
    b: &BridgeSpec,
    a1: f64,
    a2: f64,
    rng: &mut R,
) -> Result<ExtremeRecord> {
    let floor_cap = b.lower_endpoint();
    if !(a1 < a2 && a2 <= floor_cap) {
        return Err(Error::Precondition(format!(
            "minimum constraint needs a1 < a2 <= {floor_cap}, got [{a1}, {a2}]"
        )));
    }
    let len = b.len();
    let (m1, m2) = (min_cdf(b, a1), min_cdf(b, a2));
    debug_assert!(m2 >= m1, "min CDF must be nondecreasing on (-inf, x/\\y]");
    let u1: f64 = m1 + (m2 - m1) * rng.random::<f64>();
    let disc = (b.y - b.x).powi(2) - 2.0 * len * u1.ln();
    let mut mhat = b.x - (disc.sqrt() - (b.y - b.x)) / 2.0;
    mhat = mhat.clamp(a1, a2);
    if mhat >= floor_cap {
        // measure-zero corner where the draw degenerates onto an endpoint
        mhat = floor_cap - f64::EPSILON * (1.0 + floor_cap.abs());
    }

    let u2: f64 = rng.random();
    let first = (b.x - mhat) / (b.x + b.y - 2.0 * mhat);
    let v = if u2 < first {
        sample_inverse_gaussian((b.y - mhat) / (b.x - mhat), (b.y - mhat).powi(2) / len, rng)?
    } else {
        1.0 / sample_inverse_gaussian(
            (b.x - mhat) / (b.y - mhat),
            (b.x - mhat).powi(2) / len,
            rng,
        )?
    };
    let tau = (b.s + len / (1.0 + v)).clamp(
        b.s + f64::EPSILON * len.max(1.0),
        b.t - f64::EPSILON * len.max(1.0),
    );
    Ok(ExtremeRecord { tau, value: mhat, kind: ExtremeKind::Min })
}

/// Sample the bridge maximum and its time, conditioned to `max in [c1, c2]`
/// with `x \/ y <= c1 < c2`. Single code path with `sample_min` through the
/// reflection `w -> -w`.
pub fn sample_max<R: Rng + ?Sized>(
    b: &BridgeSpec,
    c1: f64,
    c2: f64,
    rng: &mut R,
) -> Result<ExtremeRecord> {
    let reflected = BridgeSpec::new(b.s, b.t, -b.x, -b.y)?;
    let rec = sample_min(&reflected, -c2, -c1, rng)?;
    Ok(ExtremeRecord { tau: rec.tau, value: -rec.value, kind: ExtremeKind::Max })
}

/// Sample the bridge at `q` conditional on a known extreme `(tau, m)`: the
/// remaining trajectory is a Bessel bridge, realised through three
/// independent Gaussians and the radial formula.
pub fn bessel_bridge_point<R: Rng + ?Sized>(
    b: &BridgeSpec,
    ext: &ExtremeRecord,
    q: f64,
    rng: &mut R,
) -> Result<f64> {
    if q == ext.tau {
        return Ok(ext.value);
    }
    b.check_interior(q)?;
    // reflect the max case onto the min case
    let (x, y, m, sign) = match ext.kind {
        ExtremeKind::Min => (b.x, b.y, ext.value, 1.0),
        ExtremeKind::Max => (-b.x, -b.y, -ext.value, -1.0),
    };
    let (r, wr) = if q < ext.tau { (b.s, x) } else { (b.t, y) };
    let span = (ext.tau - r).abs();
    let var = (ext.tau - q).abs() * (q - r).abs() / (span * span);
    let sd = var.sqrt();
    let b1 = sd * sample_std_normal(rng);
    let b2 = sd * sample_std_normal(rng);
    let b3 = sd * sample_std_normal(rng);
    let base = (wr - m) * (ext.tau - q).abs() / span.powf(1.5);
    let w = m + span.sqrt() * ((base + b1).powi(2) + b2 * b2 + b3 * b3).sqrt();
    Ok(sign * w)
}

/// Inverse Gaussian draw by the transformation method: solve the Wald
/// quadratic at a chi-square variate and pick the root with the standard
/// probability rule.
pub fn sample_inverse_gaussian<R: Rng + ?Sized>(
    mu: f64,
    lambda: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(mu > 0.0 && lambda > 0.0) {
        return Err(Error::Precondition(format!(
            "inverse Gaussian needs mu, lambda > 0; got mu={mu}, lambda={lambda}"
        )));
    }
    let nu = sample_std_normal(rng);
    let ysq = nu * nu;
    let x1 = mu + mu * mu * ysq / (2.0 * lambda)
        - mu / (2.0 * lambda) * (4.0 * mu * lambda * ysq + mu * mu * ysq * ysq).sqrt();
    let x1 = x1.max(f64::MIN_POSITIVE);
    let u: f64 = rng.random();
    Ok(if u <= mu / (mu + x1) { x1 } else { mu * mu / x1 })
}

/// A Gaussian rejection envelope for an unnormalised log-density: proposals
/// are `N(mean, variance)` and `log_bound` must dominate
/// `log h(y) + (y - mean)^2 / (2 variance)` everywhere.
#[derive(Debug, Clone, Copy)]
pub struct GaussianProposal {
    pub mean: f64,
    pub variance: f64,
    pub log_bound: f64,
}

impl GaussianProposal {
    /// Spot-check the envelope on a grid spanning `range` standard
    /// deviations around the proposal mean.
    pub fn validate_against<F: Fn(f64) -> f64>(&self, log_target: F, range: f64) -> Result<()> {
        let sd = self.variance.sqrt();
        let n = 400;
        for i in 0..=n {
            let y = self.mean + sd * range * (2.0 * i as f64 / n as f64 - 1.0);
            let log_ratio = log_target(y) + (y - self.mean).powi(2) / (2.0 * self.variance);
            if log_ratio > self.log_bound + 1e-9 {
                return Err(Error::BoundViolation(format!(
                    "Gaussian envelope fails at y={y}: log ratio {log_ratio} exceeds bound {}",
                    self.log_bound
                )));
            }
        }
        Ok(())
    }
}

const ENDPOINT_ATTEMPT_CAP: u64 = 10_000_000;

/// Rejection sampling from an unnormalised density `h = exp(log_target)`
/// using a Gaussian envelope. The normalising constant of `h` is never
/// evaluated. An observed envelope violation aborts the run.
pub fn sample_biased_endpoint<F, R>(log_target: F, prop: &GaussianProposal, rng: &mut R) -> Result<f64>
where
    F: Fn(f64) -> f64,
    R: Rng + ?Sized,
{
    if !(prop.variance > 0.0) {
        return Err(Error::Precondition("proposal variance must be positive".into()));
    }
    let sd = prop.variance.sqrt();
    for _ in 0..ENDPOINT_ATTEMPT_CAP {
        let y = prop.mean + sd * sample_std_normal(rng);
        let log_ratio =
            log_target(y) + (y - prop.mean).powi(2) / (2.0 * prop.variance) - prop.log_bound;
        if log_ratio > 1e-9 {
            return Err(Error::BoundViolation(format!(
                "endpoint envelope violated at y={y} (excess {log_ratio:.3e})"
            )));
        }
        if rng.random::<f64>().ln() < log_ratio {
            return Ok(y);
        }
    }
    Err(Error::AttemptCap("biased endpoint rejection sampler".into()))
}
