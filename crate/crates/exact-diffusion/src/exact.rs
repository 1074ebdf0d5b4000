//! The diffusion-level exact algorithms: retrospective rejection samplers
//! that draw a finite skeleton of a sample path of
//! `dX = alpha(X) dt + dW` without discretisation error, in three variants:
//!
//! - bounded: `phi` globally bounded, no layers needed, plain bridges;
//! - unbounded: one path-space layer certifies interval bounds for `phi`,
//!   interior points come from a layered bridge, acceptance by Poisson
//!   thinning of the Girsanov weight;
//! - adaptive: the interval is consumed outward from its midpoint with
//!   exponential waiting times, each new point immediately tested, layer
//!   information refreshed per sub-interval as points arrive, which lowers
//!   both the thinning rate and the expected number of points.
//!
//! An accepted skeleton carries per-gap intersection layers (except the
//! bounded variant, which needs none), so any further path value can be
//! restored later, exactly, one gap at a time.

use crate::brownian::{bridge_point, BridgeSpec};
use crate::error::{Error, Result};
use crate::intersection::{dissect, initial_layer, sample_midpoint, Dissection, IntersectionLayer};
use crate::layered::{augment_to_intersection, simulate_layer, simulate_layered_bridge, LayerSequence};
use crate::model::DiffusionModel;
use crate::numeric::{sample_exp, sample_poisson};
use rand::Rng;
use std::collections::VecDeque;

/// Which algorithm produced a skeleton.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Provenance {
    Bounded,
    Unbounded,
    Adaptive,
}

/// Layered-bridge construction used inside the unbounded algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BridgeBackend {
    /// Radial layer with Bessel-bridge proposals; the skeleton is augmented
    /// with per-gap bands after acceptance.
    Bessel,
    /// Intersection layer with exact midpoint draws and dissection; per-gap
    /// bands fall out of the construction directly.
    Intersection,
}

/// Finite exact representation of one sample path segment: path values at a
/// finite set of times plus one intersection layer per gap (none for the
/// bounded algorithm, whose restoration uses plain bridges).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Skeleton {
    points: Vec<(f64, f64)>,
    layers: Vec<IntersectionLayer>,
    provenance: Provenance,
}

impl Skeleton {
    pub(crate) fn from_parts(
        points: Vec<(f64, f64)>,
        layers: Vec<IntersectionLayer>,
        provenance: Provenance,
    ) -> Self {
        debug_assert!(points.windows(2).all(|w| w[0].0 < w[1].0));
        debug_assert!(layers.is_empty() || layers.len() + 1 == points.len());
        Skeleton { points, layers, provenance }
    }

    /// Path values, in time order, including both endpoints.
    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Per-gap layer records (empty for the bounded algorithm).
    pub fn layers(&self) -> &[IntersectionLayer] {
        &self.layers
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn span(&self) -> (f64, f64) {
        (self.points[0].0, self.points.last().unwrap().0)
    }

    pub fn start_value(&self) -> f64 {
        self.points[0].1
    }

    pub fn terminal_value(&self) -> f64 {
        self.points.last().unwrap().1
    }

    /// Number of interior skeletal points.
    pub fn interior_count(&self) -> usize {
        self.points.len().saturating_sub(2)
    }

    /// Stored value at exactly time `t`, if `t` is a skeletal time.
    pub fn value_at(&self, t: f64) -> Option<f64> {
        self.points.iter().find(|p| p.0 == t).map(|p| p.1)
    }

    fn gap_index(&self, q: f64) -> Result<usize> {
        let (s, t) = self.span();
        if !(q > s && q < t) {
            return Err(Error::Precondition(format!(
                "restoration time {q} outside the skeleton span [{s}, {t}]"
            )));
        }
        Ok(self.points.iter().position(|p| p.0 > q).unwrap() - 1)
    }

    /// Restore the path at the given times, exactly, updating the skeleton
    /// so that repeated calls stay mutually consistent. Values are returned
    /// in the order requested.
    pub fn restore<R: Rng + ?Sized>(&mut self, times: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(times.len());
        for &q in times {
            out.push(self.restore_one(q, rng)?);
        }
        Ok(out)
    }

    fn restore_one<R: Rng + ?Sized>(&mut self, q: f64, rng: &mut R) -> Result<f64> {
        if let Some(v) = self.value_at(q) {
            return Ok(v);
        }
        let idx = self.gap_index(q)?;
        match self.provenance {
            Provenance::Bounded => {
                let (s, x) = self.points[idx];
                let (t, y) = self.points[idx + 1];
                let w = bridge_point(&BridgeSpec::new(s, t, x, y)?, q, rng)?;
                self.points.insert(idx + 1, (q, w));
                Ok(w)
            }
            Provenance::Unbounded | Provenance::Adaptive => {
                let cell = self.layers[idx];
                let w = sample_midpoint(&cell, q, rng)?;
                let children = dissect(&cell, &[(q, w)], rng)?;
                self.layers.splice(idx..=idx, children);
                self.points.insert(idx + 1, (q, w));
                Ok(w)
            }
        }
    }

    /// Copy of this skeleton cut at an existing skeletal time: points and
    /// layers up to `t` only. Used when an accepted jump discards the
    /// remainder of a proposal.
    pub(crate) fn truncated_at(&self, t: f64) -> Result<Skeleton> {
        let idx = self
            .points
            .iter()
            .position(|p| p.0 == t)
            .ok_or_else(|| Error::Internal(format!("{t} is not a skeletal time")))?;
        if idx == 0 {
            return Err(Error::Internal("cannot truncate a skeleton to zero length".into()));
        }
        Ok(Skeleton {
            points: self.points[..=idx].to_vec(),
            layers: if self.layers.is_empty() { Vec::new() } else { self.layers[..idx].to_vec() },
            provenance: self.provenance,
        })
    }

    /// View of the per-gap layers as an evolving dissection (for the
    /// bounding-process machinery).
    pub fn to_dissection(&self) -> Result<Dissection> {
        if self.layers.is_empty() {
            return Err(Error::Precondition(
                "skeleton has no layer records (bounded algorithm)".into(),
            ));
        }
        Dissection::new(self.layers.clone())
    }
}

/// An accepted run: the skeleton plus how many proposals it took.
#[derive(Debug)]
pub struct EaRun {
    pub skeleton: Skeleton,
    pub attempts: u64,
}

// Poisson thinning of the Girsanov weight at the skeletal points: all
// points must pass, each with probability (U - phi)/(U - L).
fn thinning_passes<R: Rng + ?Sized>(
    m: &DiffusionModel,
    points: &[(f64, f64)],
    lower: f64,
    upper: f64,
    rng: &mut R,
) -> Result<bool> {
    let delta = upper - lower;
    for &(_, w) in points {
        let phi = m.phi(w);
        if phi < lower - 1e-9 || phi > upper + 1e-9 {
            return Err(Error::BoundViolation(format!(
                "phi({w}) = {phi} escapes the certified interval [{lower}, {upper}]"
            )));
        }
        if delta <= 0.0 {
            continue;
        }
        if rng.random::<f64>() > (upper - phi) / delta {
            return Ok(false);
        }
    }
    Ok(true)
}

fn uniform_times<R: Rng + ?Sized>(s: f64, t: f64, n: u64, rng: &mut R) -> Vec<f64> {
    let mut times: Vec<f64> = (0..n).map(|_| s + (t - s) * rng.random::<f64>()).collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup();
    times
}

/// Bounded exact algorithm over `[0, horizon]`. Requires global bounds on
/// `phi` asserted on the model.
pub fn run_bea<R: Rng + ?Sized>(m: &DiffusionModel, rng: &mut R) -> Result<EaRun> {
    let (skeleton, attempts) = bea_segment(m, 0.0, m.horizon(), m.start(), rng)?;
    Ok(EaRun { skeleton, attempts })
}

pub(crate) fn bea_segment<R: Rng + ?Sized>(
    m: &DiffusionModel,
    s: f64,
    t: f64,
    x: f64,
    rng: &mut R,
) -> Result<(Skeleton, u64)> {
    let (lower, upper) = m.global_phi_bounds().ok_or_else(|| {
        Error::Precondition("bounded exact algorithm needs global phi bounds on the model".into())
    })?;
    let dt = t - s;
    for attempt in 1..=m.max_attempts() {
        let y = m.sample_endpoint(x, dt, rng)?;
        let kappa = sample_poisson((upper - lower) * dt, rng)?;
        let times = uniform_times(s, t, kappa, rng);
        // interior values from successive bridge interpolation
        let mut points = Vec::with_capacity(times.len() + 2);
        points.push((s, x));
        let mut prev = (s, x);
        for &q in &times {
            let w = bridge_point(&BridgeSpec::new(prev.0, t, prev.1, y)?, q, rng)?;
            points.push((q, w));
            prev = (q, w);
        }
        points.push((t, y));
        if thinning_passes(m, &points[1..points.len() - 1], lower, upper, rng)? {
            return Ok((Skeleton::from_parts(points, Vec::new(), Provenance::Bounded), attempt));
        }
    }
    Err(Error::AttemptCap("bounded exact algorithm".into()))
}

/// Unbounded exact algorithm over `[0, horizon]` with the chosen layered
/// bridge construction.
pub fn run_uea<R: Rng + ?Sized>(
    m: &DiffusionModel,
    backend: BridgeBackend,
    rng: &mut R,
) -> Result<EaRun> {
    let (skeleton, attempts) = uea_segment(m, 0.0, m.horizon(), m.start(), backend, rng)?;
    Ok(EaRun { skeleton, attempts })
}

pub(crate) fn uea_segment<R: Rng + ?Sized>(
    m: &DiffusionModel,
    s: f64,
    t: f64,
    x: f64,
    backend: BridgeBackend,
    rng: &mut R,
) -> Result<(Skeleton, u64)> {
    let dt = t - s;
    let seq = LayerSequence::scaled(m.layer_theta(), dt)?;
    for attempt in 1..=m.max_attempts() {
        let y = m.sample_endpoint(x, dt, rng)?;
        let b = BridgeSpec::new(s, t, x, y)?;
        match backend {
            BridgeBackend::Intersection => {
                let layer = initial_layer(&b, &seq, rng)?;
                let (lower, upper) = m.phi_bounds_on(layer.min_lo, layer.max_hi);
                let kappa = sample_poisson((upper - lower) * dt, rng)?;
                let times = uniform_times(s, t, kappa, rng);
                let mut state = Dissection::new(vec![layer])?;
                let mut interior = Vec::with_capacity(times.len());
                for &q in &times {
                    interior.push((q, state.restore_at(q, rng)?));
                }
                if !thinning_passes(m, &interior, lower, upper, rng)? {
                    continue;
                }
                let mut points = Vec::with_capacity(interior.len() + 2);
                points.push((s, x));
                points.extend_from_slice(&interior);
                points.push((t, y));
                return Ok((
                    Skeleton::from_parts(points, state.children().to_vec(), Provenance::Unbounded),
                    attempt,
                ));
            }
            BridgeBackend::Bessel => {
                let layer = simulate_layer(&b, &seq, rng)?;
                let (int_lo, int_hi) = layer.interval(&b);
                let (lower, upper) = m.phi_bounds_on(int_lo, int_hi);
                let kappa = sample_poisson((upper - lower) * dt, rng)?;
                let times = uniform_times(s, t, kappa, rng);
                let fragment = simulate_layered_bridge(&b, &layer, &times, rng)?;
                if !thinning_passes(m, &fragment.points, lower, upper, rng)? {
                    continue;
                }
                // discard the auxiliary extreme; keep per-gap bands so the
                // path can be restored gap by gap
                let sublayers = augment_to_intersection(&b, &layer, &fragment, rng)?;
                let mut points = Vec::with_capacity(fragment.points.len() + 2);
                points.push((s, x));
                points.extend_from_slice(&fragment.points);
                points.push((t, y));
                return Ok((
                    Skeleton::from_parts(points, sublayers, Provenance::Unbounded),
                    attempt,
                ));
            }
        }
    }
    Err(Error::AttemptCap("unbounded exact algorithm".into()))
}

/// Adaptive unbounded exact algorithm over `[0, horizon]`.
pub fn run_auea<R: Rng + ?Sized>(m: &DiffusionModel, rng: &mut R) -> Result<EaRun> {
    let (skeleton, attempts) = auea_segment(m, 0.0, m.horizon(), m.start(), rng)?;
    Ok(EaRun { skeleton, attempts })
}

// One pending sub-interval of the adaptive recursion: the layer certifying
// its bands (whose time span may exceed the estimation window, because an
// accepted point's exponential clock also covers a strip around the
// midpoint it was measured from), and the window still to be estimated.
struct PendingInterval {
    layer: IntersectionLayer,
    est_lo: f64,
    est_hi: f64,
}

pub(crate) fn auea_segment<R: Rng + ?Sized>(
    m: &DiffusionModel,
    s: f64,
    t: f64,
    x: f64,
    rng: &mut R,
) -> Result<(Skeleton, u64)> {
    let dt = t - s;
    let seq = LayerSequence::scaled(m.layer_theta(), dt)?;
    'proposal: for attempt in 1..=m.max_attempts() {
        let y = m.sample_endpoint(x, dt, rng)?;
        let b = BridgeSpec::new(s, t, x, y)?;
        let root = initial_layer(&b, &seq, rng)?;
        let mut queue: VecDeque<PendingInterval> = VecDeque::new();
        queue.push_back(PendingInterval { layer: root, est_lo: s, est_hi: t });
        let mut done: Vec<IntersectionLayer> = Vec::new();

        while let Some(cell) = queue.pop_front() {
            let (lower, upper) = m.phi_bounds_on(cell.layer.min_lo, cell.layer.max_hi);
            let delta = upper - lower;
            let half = (cell.est_hi - cell.est_lo) / 2.0;
            let mid = (cell.est_lo + cell.est_hi) / 2.0;
            let tau = sample_exp(2.0 * delta, rng);
            if tau > half {
                done.push(cell.layer);
                continue;
            }
            let xi = if rng.random::<f64>() < 0.5 { mid - tau } else { mid + tau };
            let w = sample_midpoint(&cell.layer, xi, rng)?;
            let phi_w = m.phi(w);
            if phi_w < lower - 1e-9 || phi_w > upper + 1e-9 {
                return Err(Error::BoundViolation(format!(
                    "phi({w}) = {phi_w} escapes the certified interval [{lower}, {upper}]"
                )));
            }
            // the new point estimates the strip of width 2 tau around the
            // midpoint; reject the whole path if its test fails
            if rng.random::<f64>() > (upper - phi_w) / delta {
                continue 'proposal;
            }
            let children = dissect(&cell.layer, &[(xi, w)], rng)?;
            debug_assert_eq!(children.len(), 2);
            let (l_left, _) = m.phi_bounds_on(children[0].min_lo, children[0].max_hi);
            let (l_right, _) = m.phi_bounds_on(children[1].min_lo, children[1].max_hi);
            // the refreshed lower bounds settle part of the removed strip's
            // weight immediately, as a constant factor
            let exponent = (l_left + l_right - 2.0 * lower) * (half - tau);
            if exponent < -1e-9 {
                return Err(Error::BoundViolation(
                    "phi lower bounds are not monotone under band refinement".into(),
                ));
            }
            if rng.random::<f64>() > (-exponent.max(0.0)).exp() {
                continue 'proposal;
            }
            queue.push_back(PendingInterval {
                layer: children[0],
                est_lo: cell.est_lo,
                est_hi: mid - tau,
            });
            queue.push_back(PendingInterval {
                layer: children[1],
                est_lo: mid + tau,
                est_hi: cell.est_hi,
            });
        }

        done.sort_by(|a, b| a.s.partial_cmp(&b.s).unwrap());
        let mut points: Vec<(f64, f64)> = Vec::with_capacity(done.len() + 1);
        points.push((done[0].s, done[0].x));
        for layer in &done {
            points.push((layer.t, layer.y));
        }
        return Ok((Skeleton::from_parts(points, done, Provenance::Adaptive), attempt));
    }
    Err(Error::AttemptCap("adaptive unbounded exact algorithm".into()))
}
