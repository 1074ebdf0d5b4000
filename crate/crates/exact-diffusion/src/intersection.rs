//! Intersection layers: per-interval bands `[min_lo, min_hi]` and
//! `[max_lo, max_hi]` certified to contain the bridge minimum and maximum.
//!
//! The module provides the four operations the adaptive algorithms are built
//! from: simulating an initial intersection layer from the radial layer
//! decomposition, drawing the bridge at an interior time exactly from its
//! band-conditional density, dissecting a layer at known interior points
//! into per-sub-interval layers, and refining a layer's bands in place.
//! Dissection is what makes sub-intervals conditionally independent, so a
//! path can be restored piecewise at any later time.

use crate::brownian::{bessel_bridge_point, sample_max, sample_min, BridgeSpec};
use crate::error::{Error, Result};
use crate::layered::{delta_product_max, delta_product_min, simulate_layer, LayerSequence};
use crate::numeric::{norm_cdf, sample_truncated_normal};
use crate::series::{
    beta_single, compose_series, decide_event_with, four_term_combo, product_series, rho_series,
    select_cell, series_event, AlternatingSeries, ArgSign, ExtremeBands, EVENT_ITERATION_CAP,
};
use rand::Rng;

/// Which part of the layer decomposition an initial intersection layer came
/// from: both extremes reach the outer ring, or only the minimum, or only
/// the maximum. Carried so the hybrid midpoint sampler can reconstruct the
/// acceptance events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum DClass {
    Both,
    MinOnly,
    MaxOnly,
}

/// Bands on the minimum and maximum of a bridge over `[s, t]`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IntersectionLayer {
    pub s: f64,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub min_lo: f64,
    pub min_hi: f64,
    pub max_lo: f64,
    pub max_hi: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub d_class: Option<DClass>,
}

impl IntersectionLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        s: f64,
        t: f64,
        x: f64,
        y: f64,
        min_lo: f64,
        min_hi: f64,
        max_lo: f64,
        max_hi: f64,
    ) -> Result<Self> {
        if !(t > s) {
            return Err(Error::Precondition(format!("layer needs t > s, got [{s}, {t}]")));
        }
        let (lo_e, hi_e) = (x.min(y), x.max(y));
        if !(min_lo <= min_hi && min_hi <= lo_e && hi_e <= max_lo && max_lo <= max_hi) {
            return Err(Error::Precondition(format!(
                "bands must satisfy min_lo <= min_hi <= x/\\y and x\\/y <= max_lo <= max_hi; \
                 got min [{min_lo}, {min_hi}], max [{max_lo}, {max_hi}], endpoints ({x}, {y})"
            )));
        }
        Ok(IntersectionLayer { s, t, x, y, min_lo, min_hi, max_lo, max_hi, d_class: None })
    }

    pub fn with_class(mut self, class: DClass) -> Self {
        self.d_class = Some(class);
        self
    }

    pub fn bridge(&self) -> BridgeSpec {
        BridgeSpec { s: self.s, t: self.t, x: self.x, y: self.y }
    }

    pub fn bands(&self) -> ExtremeBands {
        ExtremeBands {
            min_lo: self.min_lo,
            min_hi: self.min_hi,
            max_lo: self.max_lo,
            max_hi: self.max_hi,
        }
    }

    /// The certified outer envelope `[min_lo, max_hi]` for the whole path
    /// over this sub-interval.
    pub fn outer_interval(&self) -> (f64, f64) {
        (self.min_lo, self.max_hi)
    }

    pub fn contains_time(&self, q: f64) -> bool {
        q > self.s && q < self.t
    }

    /// Width of the widest band (the refinement target).
    pub fn band_width(&self) -> f64 {
        (self.min_hi - self.min_lo).max(self.max_hi - self.max_lo)
    }

    /// Gap between the staircase ceiling and floor on this cell.
    pub fn envelope_gap(&self) -> f64 {
        self.max_hi - self.min_lo
    }
}

/// Simulate an initial intersection layer for a bridge: first the radial
/// layer index, then which of its three band decompositions holds, by
/// retrospective inversion on the band-probability ratio (the residual
/// splits half/half by symmetry).
pub fn initial_layer<R: Rng + ?Sized>(
    b: &BridgeSpec,
    seq: &LayerSequence,
    rng: &mut R,
) -> Result<IntersectionLayer> {
    let rl = simulate_layer(b, seq, rng)?;
    let (lo_e, hi_e) = (b.lower_endpoint(), b.upper_endpoint());
    let (l0, l1) = (lo_e - rl.a_cur, lo_e - rl.a_prev);
    let (u0, u1) = (hi_e + rl.a_prev, hi_e + rl.a_cur);
    let both = beta_single(b.s, b.t, b.x, b.y, ExtremeBands::new(l0, l1, u0, u1)?)?;
    let min_only = beta_single(b.s, b.t, b.x, b.y, ExtremeBands::new(l0, l1, hi_e, u0)?)?;
    let max_only = beta_single(b.s, b.t, b.x, b.y, ExtremeBands::new(l1, lo_e, u0, u1)?)?;
    let p_both = compose_series(
        vec![both, min_only, max_only],
        vec![ArgSign::Increasing, ArgSign::Decreasing, ArgSign::Decreasing],
        |v| v[0] / (v[0] + v[1] + v[2]),
        "initial layer class ratio",
    );
    if series_event(&p_both, rng)? {
        IntersectionLayer::new(b.s, b.t, b.x, b.y, l0, l1, u0, u1).map(|l| l.with_class(DClass::Both))
    } else if rng.random::<f64>() < 0.5 {
        IntersectionLayer::new(b.s, b.t, b.x, b.y, l0, l1, hi_e, u0)
            .map(|l| l.with_class(DClass::MinOnly))
    } else {
        IntersectionLayer::new(b.s, b.t, b.x, b.y, l1, lo_e, u0, u1)
            .map(|l| l.with_class(DClass::MaxOnly))
    }
}

// ---------------------------------------------------------------------------
// Exact midpoint sampling
// ---------------------------------------------------------------------------

// One exponential contribution `sign * exp(a + b w)` to a band-probability
// partial sum viewed as a function of the moving endpoint `w`.
#[derive(Debug, Clone, Copy)]
struct ExpTerm {
    sign: f64,
    a: f64,
    b: f64,
}

// First lower partial sum of a bridge band probability, `1 - (two crossing
// terms)`, as exponential terms in the moving endpoint. `fixed` is the
// pinned endpoint and `len` the gap length.
fn band_terms_lower(len: f64, lo: f64, hi: f64, fixed: f64) -> Vec<ExpTerm> {
    let d = hi - lo;
    let k1 = d + lo - fixed;
    let k2 = d - hi + fixed;
    vec![
        ExpTerm { sign: 1.0, a: 0.0, b: 0.0 },
        ExpTerm { sign: -1.0, a: -2.0 * k1 * (d + lo) / len, b: 2.0 * k1 / len },
        ExpTerm { sign: -1.0, a: -2.0 * k2 * (d - hi) / len, b: -2.0 * k2 / len },
    ]
}

// First upper partial sum: the lower one plus the two returning terms.
fn band_terms_upper(len: f64, lo: f64, hi: f64, fixed: f64) -> Vec<ExpTerm> {
    let d = hi - lo;
    let mut terms = band_terms_lower(len, lo, hi, fixed);
    terms.push(ExpTerm { sign: 1.0, a: -2.0 * d * (d + fixed) / len, b: 2.0 * d / len });
    terms.push(ExpTerm { sign: 1.0, a: -2.0 * d * (d - fixed) / len, b: -2.0 * d / len });
    terms
}

fn eval_terms(terms: &[ExpTerm], w: f64) -> f64 {
    terms.iter().map(|t| t.sign * (t.a + t.b * w).exp()).sum()
}

fn product_terms(u: &[ExpTerm], v: &[ExpTerm]) -> Vec<ExpTerm> {
    let mut out = Vec::with_capacity(u.len() * v.len());
    for a in u {
        for b in v {
            out.push(ExpTerm { sign: a.sign * b.sign, a: a.a + b.a, b: a.b + b.b });
        }
    }
    out
}

fn negate_terms(terms: &mut [ExpTerm]) {
    for t in terms.iter_mut() {
        t.sign = -t.sign;
    }
}

// A netted positively-weighted component of the dominating mixture:
// `exp(log_pref + b w)` restricted to one support segment.
#[derive(Debug, Clone, Copy)]
struct EnvComponent {
    seg: usize,
    log_pref: f64,
    b: f64,
}

struct MidpointEnvelope {
    segments: Vec<(f64, f64)>,
    comps: Vec<EnvComponent>,
    // selection probabilities aligned with comps, and per-component
    // truncated-normal parameters
    probs: Vec<f64>,
    means: Vec<f64>,
    sd: f64,
}

impl MidpointEnvelope {
    fn value(&self, w: f64) -> f64 {
        let seg = self
            .segments
            .iter()
            .position(|&(lo, hi)| w >= lo && w <= hi)
            .unwrap_or(usize::MAX);
        self.comps
            .iter()
            .filter(|c| c.seg == seg)
            .map(|c| (c.log_pref + c.b * w).exp())
            .sum()
    }
}

// Assemble the dominating mixture for the band-conditional midpoint density
// `pi(w) ~ rho(w) N(mu_w, sd_w^2)`: expand a first-order upper envelope of
// `rho(w)` into exponential terms, net them per support segment and common
// Gaussian shift, and keep the positive components. A degenerate expansion
// falls back to the uniform envelope `rho <= 1`, which is always valid.
fn build_envelope(layer: &IntersectionLayer, q: f64) -> MidpointEnvelope {
    let b = layer.bridge();
    let mu_w = b.mean_at(q);
    let var_w = b.var_at(q);
    let sd = var_w.sqrt();
    let (a0, a1, b0, b1) = (layer.min_lo, layer.min_hi, layer.max_lo, layer.max_hi);

    let mut segments = Vec::new();
    for seg in [(a0, a1), (a1, b0), (b0, b1)] {
        if seg.1 > seg.0 {
            segments.push(seg);
        }
    }

    let left_len = q - layer.s;
    let right_len = layer.t - q;

    // upper partial-sum product for a positively-signed band
    let pos_terms = |lo: f64, hi: f64| -> Vec<ExpTerm> {
        product_terms(
            &band_terms_upper(left_len, lo, hi, layer.x),
            &band_terms_upper(right_len, lo, hi, layer.y),
        )
    };

    // negative products need a lower bound; the product of first lower
    // partial sums is only valid where neither factor is negative (they are
    // concave in w, so endpoint checks certify a whole segment), otherwise
    // the looser `p + q - 1` form applies
    let neg_bound = |lo: f64, hi: f64, seg: (f64, f64)| -> Vec<ExpTerm> {
        let lterms = band_terms_lower(left_len, lo, hi, layer.x);
        let rterms = band_terms_lower(right_len, lo, hi, layer.y);
        let ok = [seg.0, seg.1]
            .iter()
            .all(|&w| eval_terms(&lterms, w) >= 0.0 && eval_terms(&rterms, w) >= 0.0);
        if ok {
            product_terms(&lterms, &rterms)
        } else {
            let mut sum = lterms;
            sum.extend_from_slice(&rterms);
            sum.push(ExpTerm { sign: -1.0, a: 0.0, b: 0.0 });
            sum
        }
    };

    let mut comps: Vec<EnvComponent> = Vec::new();
    let mut means: Vec<f64> = Vec::new();
    let mut log_weights: Vec<f64> = Vec::new();

    for (si, &seg) in segments.iter().enumerate() {
        // a band contributes on this segment only if it contains it; a value
        // outside a band makes that band's probability exactly zero, and the
        // partial sums are uncontrolled there
        let active = |lo: f64, hi: f64| lo <= seg.0 && seg.1 <= hi;
        let mut terms = pos_terms(a0, b1);
        if active(a1, b0) {
            terms.extend_from_slice(&pos_terms(a1, b0));
        }
        if active(a1, b1) {
            let mut neg1 = neg_bound(a1, b1, seg);
            negate_terms(&mut neg1);
            terms.extend_from_slice(&neg1);
        }
        if active(a0, b0) {
            let mut neg2 = neg_bound(a0, b0, seg);
            negate_terms(&mut neg2);
            terms.extend_from_slice(&neg2);
        }

        // net signed prefactors per common slope b
        let mut groups: std::collections::BTreeMap<u64, Vec<&ExpTerm>> =
            std::collections::BTreeMap::new();
        for t in &terms {
            groups.entry(t.b.to_bits()).or_default().push(t);
        }
        for (_, group) in groups {
            let slope = group[0].b;
            let a_max = group.iter().map(|t| t.a).fold(f64::NEG_INFINITY, f64::max);
            let net: f64 = group.iter().map(|t| t.sign * (t.a - a_max).exp()).sum();
            if !(net > 0.0) || !net.is_finite() {
                continue;
            }
            let log_pref = a_max + net.ln();
            // fold exp(b w) into the Gaussian: shifted mean and mass factor
            let mean = mu_w + slope * var_w;
            let mass = norm_cdf((seg.1 - mean) / sd) - norm_cdf((seg.0 - mean) / sd);
            if !(mass > 0.0) {
                continue;
            }
            let log_w = log_pref + slope * mu_w + slope * slope * var_w / 2.0 + mass.ln();
            comps.push(EnvComponent { seg: si, log_pref, b: slope });
            means.push(mean);
            log_weights.push(log_w);
        }
    }

    let finite_max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    if finite_max.is_finite() {
        for lw in &log_weights {
            total += (lw - finite_max).exp();
        }
    }
    let probs: Vec<f64> = if comps.is_empty() || !(total > 0.0) || !total.is_finite() {
        // uniform envelope: rho <= 1 on each segment
        comps.clear();
        means.clear();
        let mut lw = Vec::new();
        for (si, &seg) in segments.iter().enumerate() {
            let mass = norm_cdf((seg.1 - mu_w) / sd) - norm_cdf((seg.0 - mu_w) / sd);
            comps.push(EnvComponent { seg: si, log_pref: 0.0, b: 0.0 });
            means.push(mu_w);
            lw.push(if mass > 0.0 { mass.ln() } else { -1e300 });
        }
        let m = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tot: f64 = lw.iter().map(|v| (v - m).exp()).sum();
        lw.iter().map(|v| (v - m).exp() / tot).collect()
    } else {
        log_weights.iter().map(|lw| (lw - finite_max).exp() / total).collect()
    };

    MidpointEnvelope { segments, comps, probs, means, sd }
}

const MIDPOINT_ATTEMPT_CAP: u64 = 10_000_000;

/// Draw the bridge at interior time `q` exactly from its law conditional on
/// the intersection layer, by composition sampling from a dominating
/// truncated-normal mixture and retrospective acceptance on the
/// band-probability ratio.
pub fn sample_midpoint<R: Rng + ?Sized>(
    layer: &IntersectionLayer,
    q: f64,
    rng: &mut R,
) -> Result<f64> {
    if !layer.contains_time(q) {
        return Err(Error::Precondition(format!(
            "midpoint time {q} outside ({}, {})",
            layer.s, layer.t
        )));
    }
    let env = build_envelope(layer, q);
    if env.comps.is_empty() {
        return Err(Error::Internal("midpoint envelope has empty support".into()));
    }
    let times = [layer.s, q, layer.t];
    for _ in 0..MIDPOINT_ATTEMPT_CAP {
        // pick a mixture component, then a truncated Gaussian within it
        let mut pick: f64 = rng.random();
        let mut idx = env.comps.len() - 1;
        for (i, &p) in env.probs.iter().enumerate() {
            if pick < p {
                idx = i;
                break;
            }
            pick -= p;
        }
        let comp = env.comps[idx];
        let seg = env.segments[comp.seg];
        let w = sample_truncated_normal(env.means[idx], env.sd, seg.0, seg.1, rng)?;

        let e = env.value(w);
        if !(e > 0.0) || !e.is_finite() {
            return Err(Error::Internal(format!("degenerate envelope value {e} at w={w}")));
        }
        let rho = rho_series(&times, &[layer.x, w, layer.y], layer.bands())?;
        let u: f64 = rng.random();
        let target = u * e;
        let mut accepted = None;
        for step in 0..EVENT_ITERATION_CAP {
            let (lo, hi) = rho.bracket_clamped(rho.start_index() + step);
            if lo > e * (1.0 + 1e-9) {
                return Err(Error::Internal(format!(
                    "envelope violation at w={w}: rho >= {lo} exceeds envelope {e}"
                )));
            }
            if target <= lo {
                accepted = Some(true);
                break;
            }
            if target >= hi {
                accepted = Some(false);
                break;
            }
        }
        match accepted {
            Some(true) => return Ok(w),
            Some(false) => continue,
            None => {
                return Err(Error::NumericalPrecision(
                    "midpoint acceptance bracket failed to resolve".into(),
                ))
            }
        }
    }
    Err(Error::AttemptCap("midpoint sampler".into()))
}

// ---------------------------------------------------------------------------
// Dissection
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SideAssign {
    LeftOnly,
    RightOnly,
    Both,
}

const SPLIT_CELLS: [(SideAssign, SideAssign); 9] = [
    (SideAssign::LeftOnly, SideAssign::LeftOnly),
    (SideAssign::LeftOnly, SideAssign::RightOnly),
    (SideAssign::LeftOnly, SideAssign::Both),
    (SideAssign::RightOnly, SideAssign::LeftOnly),
    (SideAssign::RightOnly, SideAssign::RightOnly),
    (SideAssign::RightOnly, SideAssign::Both),
    (SideAssign::Both, SideAssign::LeftOnly),
    (SideAssign::Both, SideAssign::RightOnly),
    (SideAssign::Both, SideAssign::Both),
];

// Band layout for one split cell: which bands the left gap and the
// aggregated right part receive for the minimum and the maximum.
struct SplitBands {
    left_min: (f64, f64),
    left_max: (f64, f64),
    right_min_attains: bool,
    right_max_attains: bool,
}

fn split_bands(
    cell: (SideAssign, SideAssign),
    min_band: (f64, f64),
    max_band: (f64, f64),
    left_lo: f64,
    left_hi: f64,
) -> SplitBands {
    let (min_assign, max_assign) = cell;
    let left_min = match min_assign {
        SideAssign::LeftOnly | SideAssign::Both => min_band,
        SideAssign::RightOnly => (min_band.1, left_lo),
    };
    let left_max = match max_assign {
        SideAssign::LeftOnly | SideAssign::Both => max_band,
        SideAssign::RightOnly => (left_hi, max_band.0),
    };
    SplitBands {
        left_min,
        left_max,
        right_min_attains: !matches!(min_assign, SideAssign::LeftOnly),
        right_max_attains: !matches!(max_assign, SideAssign::LeftOnly),
    }
}

// Product over the right gaps of plain band probabilities with floor `f`
// and cap `c`.
fn right_occupation(points: &[(f64, f64)], f: f64, c: f64) -> Result<AlternatingSeries> {
    let mut parts = Vec::with_capacity(points.len() - 1);
    for w in points.windows(2) {
        let ((s, x), (t, y)) = (w[0], w[1]);
        parts.push(crate::series::gamma_gap(s, t, x, y, f, c)?);
    }
    Ok(product_series(parts, "right occupation"))
}

// Aggregated right-part probability of the assignment "minimum attains the
// band or stays above it" x "maximum attains or stays below".
fn right_factor(
    points: &[(f64, f64)],
    min_band: (f64, f64),
    max_band: (f64, f64),
    min_attains: bool,
    max_attains: bool,
) -> Result<AlternatingSeries> {
    let (a0, a1) = min_band;
    let (b0, b1) = max_band;
    Ok(match (min_attains, max_attains) {
        (false, false) => right_occupation(points, a1, b0)?,
        (true, false) => compose_series(
            vec![right_occupation(points, a0, b0)?, right_occupation(points, a1, b0)?],
            vec![ArgSign::Increasing, ArgSign::Decreasing],
            |v| v[0] - v[1],
            "right min attains",
        ),
        (false, true) => compose_series(
            vec![right_occupation(points, a1, b1)?, right_occupation(points, a1, b0)?],
            vec![ArgSign::Increasing, ArgSign::Decreasing],
            |v| v[0] - v[1],
            "right max attains",
        ),
        (true, true) => four_term_combo(
            right_occupation(points, a0, b1)?,
            right_occupation(points, a1, b1)?,
            right_occupation(points, a0, b0)?,
            right_occupation(points, a1, b0)?,
            "right both attain",
        ),
    })
}

fn dissect_rec<R: Rng + ?Sized>(
    points: &[(f64, f64)],
    min_band: (f64, f64),
    max_band: (f64, f64),
    rng: &mut R,
) -> Result<Vec<IntersectionLayer>> {
    let (s, x) = points[0];
    let (t, y) = *points.last().unwrap();
    if points.len() == 2 {
        return Ok(vec![IntersectionLayer::new(
            s, t, x, y, min_band.0, min_band.1, max_band.0, max_band.1,
        )?]);
    }
    let (q1, w1) = points[1];
    let right = &points[1..];
    let left_lo = x.min(w1);
    let left_hi = x.max(w1);
    let right_lo = right.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let right_hi = right.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);

    let all_times: Vec<f64> = points.iter().map(|p| p.0).collect();
    let all_values: Vec<f64> = points.iter().map(|p| p.1).collect();
    let denom = rho_series(
        &all_times,
        &all_values,
        ExtremeBands::new(min_band.0, min_band.1, max_band.0, max_band.1)?,
    )?;

    let mut cells = Vec::with_capacity(9);
    for &cell in &SPLIT_CELLS {
        let bands = split_bands(cell, min_band, max_band, left_lo, left_hi);
        let left = beta_single(
            s,
            q1,
            x,
            w1,
            ExtremeBands::new(
                bands.left_min.0,
                bands.left_min.1,
                bands.left_max.0,
                bands.left_max.1,
            )?,
        )?;
        let rf = right_factor(right, min_band, max_band, bands.right_min_attains, bands.right_max_attains)?;
        let num = product_series(vec![left, rf], "split cell");
        cells.push(compose_series(
            vec![num, denom.clone()],
            vec![ArgSign::Increasing, ArgSign::Decreasing],
            |v| v[0] / v[1],
            "split cell ratio",
        ));
    }
    let chosen = select_cell(&cells, rng.random())?;
    let bands = split_bands(SPLIT_CELLS[chosen], min_band, max_band, left_lo, left_hi);

    let left_layer = IntersectionLayer::new(
        s,
        q1,
        x,
        w1,
        bands.left_min.0,
        bands.left_min.1,
        bands.left_max.0,
        bands.left_max.1,
    )?;
    let right_min = if bands.right_min_attains { min_band } else { (min_band.1, right_lo) };
    let right_max = if bands.right_max_attains { max_band } else { (right_hi, max_band.0) };
    let mut out = vec![left_layer];
    out.extend(dissect_rec(right, right_min, right_max, rng)?);
    Ok(out)
}

/// Split an intersection layer at known interior points into one layer per
/// gap, drawing the assignment of each extreme's band to the sub-intervals
/// from its exact conditional law. With `n` interior points there are
/// `(2^(n+1) - 1)^2` admissible assignments; they are sampled one split at a
/// time, left to right, each split resolving nine disjoint cases.
pub fn dissect<R: Rng + ?Sized>(
    layer: &IntersectionLayer,
    knots: &[(f64, f64)],
    rng: &mut R,
) -> Result<Vec<IntersectionLayer>> {
    if knots.is_empty() {
        return Ok(vec![*layer]);
    }
    for w in knots.windows(2) {
        if !(w[1].0 > w[0].0) {
            return Err(Error::Precondition("knot times must strictly increase".into()));
        }
    }
    if knots.iter().any(|k| !layer.contains_time(k.0)) {
        return Err(Error::Precondition("knot times must be interior to the layer".into()));
    }
    if knots.iter().any(|k| k.1 < layer.min_lo || k.1 > layer.max_hi) {
        return Err(Error::Precondition(format!(
            "knot value outside the layer envelope [{}, {}]",
            layer.min_lo, layer.max_hi
        )));
    }
    let mut points = Vec::with_capacity(knots.len() + 2);
    points.push((layer.s, layer.x));
    points.extend_from_slice(knots);
    points.push((layer.t, layer.y));

    // interior points sharpen the band edges before any assignment
    let vals_min = knots.iter().map(|k| k.1).fold(f64::INFINITY, f64::min);
    let vals_max = knots.iter().map(|k| k.1).fold(f64::NEG_INFINITY, f64::max);
    let min_band = (layer.min_lo, layer.min_hi.min(vals_min));
    let max_band = (layer.max_lo.max(vals_max), layer.max_hi);

    dissect_rec(&points, min_band, max_band, rng)
}

/// The nine candidate bisections of a layer at a single interior point,
/// in the enumeration order used for selection.
pub fn enumerate_bisections(
    layer: &IntersectionLayer,
    knot: (f64, f64),
) -> Result<Vec<(IntersectionLayer, IntersectionLayer)>> {
    let (q, w) = knot;
    if !layer.contains_time(q) {
        return Err(Error::Precondition("knot time must be interior".into()));
    }
    let min_band = (layer.min_lo, layer.min_hi.min(w));
    let max_band = (layer.max_lo.max(w), layer.max_hi);
    let left_lo = layer.x.min(w);
    let left_hi = layer.x.max(w);
    let right_lo = w.min(layer.y);
    let right_hi = w.max(layer.y);
    let mut out = Vec::with_capacity(9);
    for &cell in &SPLIT_CELLS {
        let bands = split_bands(cell, min_band, max_band, left_lo, left_hi);
        let right_min = if bands.right_min_attains { min_band } else { (min_band.1, right_lo) };
        let right_max = if bands.right_max_attains { max_band } else { (right_hi, max_band.0) };
        out.push((
            IntersectionLayer::new(
                layer.s,
                q,
                layer.x,
                w,
                bands.left_min.0,
                bands.left_min.1,
                bands.left_max.0,
                bands.left_max.1,
            )?,
            IntersectionLayer::new(
                q,
                layer.t,
                w,
                layer.y,
                right_min.0,
                right_min.1,
                right_max.0,
                right_max.1,
            )?,
        ));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Refinement
// ---------------------------------------------------------------------------

/// Narrow a layer's bands by splitting each at an interior level and drawing
/// which of the four refinements the path lies in.
pub fn refine<R: Rng + ?Sized>(
    layer: &IntersectionLayer,
    min_split: f64,
    max_split: f64,
    rng: &mut R,
) -> Result<IntersectionLayer> {
    if !(layer.min_lo <= min_split && min_split <= layer.min_hi) {
        return Err(Error::Precondition(format!(
            "min split {min_split} outside [{}, {}]",
            layer.min_lo, layer.min_hi
        )));
    }
    if !(layer.max_lo <= max_split && max_split <= layer.max_hi) {
        return Err(Error::Precondition(format!(
            "max split {max_split} outside [{}, {}]",
            layer.max_lo, layer.max_hi
        )));
    }
    let candidates = [
        ((layer.min_lo, min_split), (max_split, layer.max_hi)),
        ((min_split, layer.min_hi), (max_split, layer.max_hi)),
        ((layer.min_lo, min_split), (layer.max_lo, max_split)),
        ((min_split, layer.min_hi), (layer.max_lo, max_split)),
    ];
    let parent = beta_single(layer.s, layer.t, layer.x, layer.y, layer.bands())?;
    let mut cells = Vec::with_capacity(4);
    for (mn, mx) in candidates {
        let child = beta_single(
            layer.s,
            layer.t,
            layer.x,
            layer.y,
            ExtremeBands::new(mn.0, mn.1, mx.0, mx.1)?,
        )?;
        cells.push(compose_series(
            vec![child, parent.clone()],
            vec![ArgSign::Increasing, ArgSign::Decreasing],
            |v| v[0] / v[1],
            "refinement ratio",
        ));
    }
    let chosen = select_cell(&cells, rng.random())?;
    let (mn, mx) = candidates[chosen];
    IntersectionLayer::new(layer.s, layer.t, layer.x, layer.y, mn.0, mn.1, mx.0, mx.1)
}

// ---------------------------------------------------------------------------
// Evolving dissection state
// ---------------------------------------------------------------------------

/// An ordered, abutting cover of an interval by intersection layers, used as
/// the evolving state for piecewise path restoration: each restoration
/// samples a midpoint within one cell and bisects that cell.
#[derive(Debug, Clone)]
pub struct Dissection {
    children: Vec<IntersectionLayer>,
}

impl Dissection {
    pub fn new(children: Vec<IntersectionLayer>) -> Result<Self> {
        if children.is_empty() {
            return Err(Error::Precondition("dissection needs at least one cell".into()));
        }
        for w in children.windows(2) {
            if w[0].t != w[1].s || w[0].y != w[1].x {
                return Err(Error::Precondition(
                    "dissection cells must abut in time and value".into(),
                ));
            }
        }
        Ok(Dissection { children })
    }

    pub fn children(&self) -> &[IntersectionLayer] {
        &self.children
    }

    pub fn span(&self) -> (f64, f64) {
        (self.children[0].s, self.children.last().unwrap().t)
    }

    /// Value already pinned at `q`, if `q` is a cell boundary.
    pub fn value_at_knot(&self, q: f64) -> Option<f64> {
        if q == self.children[0].s {
            return Some(self.children[0].x);
        }
        self.children.iter().find(|c| c.t == q).map(|c| c.y)
    }

    /// Restore the path at `q`: return the stored value at an existing knot,
    /// or sample the midpoint in the covering cell and bisect that cell.
    pub fn restore_at<R: Rng + ?Sized>(&mut self, q: f64, rng: &mut R) -> Result<f64> {
        if let Some(v) = self.value_at_knot(q) {
            return Ok(v);
        }
        let idx = self
            .children
            .iter()
            .position(|c| c.contains_time(q))
            .ok_or_else(|| {
                let (s, t) = self.span();
                Error::Precondition(format!("time {q} outside the dissected span [{s}, {t}]"))
            })?;
        let cell = self.children[idx];
        let w = sample_midpoint(&cell, q, rng)?;
        let parts = dissect(&cell, &[(q, w)], rng)?;
        self.children.splice(idx..=idx, parts);
        Ok(w)
    }
}

/// Restore one point through the evolving dissection (single-step form of
/// the layered bridge with intersection layers).
pub fn layered_bridge_il<R: Rng + ?Sized>(
    state: &mut Dissection,
    q: f64,
    rng: &mut R,
) -> Result<f64> {
    state.restore_at(q, rng)
}

// ---------------------------------------------------------------------------
// Hybrid midpoint sampling
// ---------------------------------------------------------------------------

/// Midpoint draw through the radial construction instead of the dominating
/// mixture: anchor one extreme, fill the requested time from a Bessel
/// bridge, and accept against the band events the layer's decomposition
/// class prescribes. Distributionally identical to [`sample_midpoint`];
/// requires the layer to carry its decomposition class.
pub fn hybrid_midpoint<R: Rng + ?Sized>(
    layer: &IntersectionLayer,
    q: f64,
    rng: &mut R,
) -> Result<f64> {
    let class = layer.d_class.ok_or_else(|| {
        Error::Precondition("hybrid midpoint needs a layer with decomposition provenance".into())
    })?;
    if !layer.contains_time(q) {
        return Err(Error::Precondition(format!(
            "midpoint time {q} outside ({}, {})",
            layer.s, layer.t
        )));
    }
    let b = layer.bridge();
    for _ in 0..MIDPOINT_ATTEMPT_CAP {
        let anchor_min = match class {
            DClass::MinOnly => true,
            DClass::MaxOnly => false,
            DClass::Both => rng.random::<f64>() < 0.5,
        };
        let ext = if anchor_min {
            sample_min(&b, layer.min_lo, layer.min_hi, rng)?
        } else {
            sample_max(&b, layer.max_lo, layer.max_hi, rng)?
        };
        let w = bessel_bridge_point(&b, &ext, q, rng)?;
        let mut chi = vec![(b.s, b.x), (q, w), (ext.tau, ext.value), (b.t, b.y)];
        chi.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let accepted = match class {
            DClass::MinOnly => {
                // opposite extreme must stay below the max band ceiling
                series_event(&delta_product_min(&chi, ext.value, layer.max_hi)?, rng)?
            }
            DClass::MaxOnly => {
                series_event(&delta_product_max(&chi, ext.value, layer.min_lo)?, rng)?
            }
            DClass::Both => {
                // opposite extreme must land inside its own band
                let (inner, outer) = if anchor_min {
                    (
                        delta_product_min(&chi, ext.value, layer.max_lo)?,
                        delta_product_min(&chi, ext.value, layer.max_hi)?,
                    )
                } else {
                    (
                        delta_product_max(&chi, ext.value, layer.min_hi)?,
                        delta_product_max(&chi, ext.value, layer.min_lo)?,
                    )
                };
                let u: f64 = rng.random();
                ring_between(u, &inner, &outer)?
            }
        };
        if accepted {
            return Ok(w);
        }
    }
    Err(Error::AttemptCap("hybrid midpoint sampler".into()))
}

// true iff the opposite extreme falls between the inner and outer caps
fn ring_between(u: f64, inner: &AlternatingSeries, outer: &AlternatingSeries) -> Result<bool> {
    if decide_event_with(inner, u)? {
        return Ok(false);
    }
    decide_event_with(outer, u)
}
