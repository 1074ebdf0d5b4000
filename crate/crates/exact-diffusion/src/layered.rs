//! Layered Brownian bridges, radial ("Bessel") construction: simulate which
//! nested layer a bridge occupies, then propose interior skeletal points by
//! anchoring one extreme and filling from a Bessel bridge, accepting by
//! retrospective brackets on Bessel band probabilities.
//!
//! A proposal is accepted together with a flag recording which conditioning
//! applied (which extreme was anchored, and whether the opposite extreme
//! fell inside the previous layer or in the outer ring). The anchored
//! extreme itself is auxiliary: it never enters the acceptance decision, so
//! it is discarded after acceptance and only the flag's band information is
//! retained. That is what allows the skeleton to be augmented with
//! per-sub-interval bands afterwards for independent restoration.

use crate::brownian::{bessel_bridge_point, sample_max, sample_min, BridgeSpec, ExtremeRecord};
use crate::error::{Error, Result};
use crate::intersection::{dissect, DClass, IntersectionLayer};
use crate::series::{
    delta_series_max, delta_series_min, gamma_series, product_series, AlternatingSeries,
    LayerBounds, EVENT_ITERATION_CAP,
};
use rand::Rng;

/// Increasing sequence `a_0 = 0 < a_1 < a_2 < ...` of radial layer widths.
pub struct LayerSequence(Box<dyn Fn(u32) -> f64 + Send + Sync>);

impl LayerSequence {
    /// Uniformly spaced widths `a_i = i * base`. The default scales the base
    /// with the bridge standard deviation so the expected layer index stays
    /// small across interval lengths.
    pub fn uniform(base: f64) -> Result<Self> {
        if !(base > 0.0) {
            return Err(Error::Precondition(format!("layer base must be positive, got {base}")));
        }
        Ok(LayerSequence(Box::new(move |i| i as f64 * base)))
    }

    /// Default sequence for a bridge of length `len`: `a_i = i theta sqrt(len)`.
    pub fn scaled(theta: f64, len: f64) -> Result<Self> {
        Self::uniform(theta * len.sqrt())
    }

    /// Custom widths. Must satisfy `a(0) = 0` and be strictly increasing;
    /// spot-checked on the first few indices.
    pub fn from_fn(f: impl Fn(u32) -> f64 + Send + Sync + 'static) -> Result<Self> {
        if f(0) != 0.0 {
            return Err(Error::Precondition("layer sequence must start at 0".into()));
        }
        for i in 0..32 {
            if !(f(i + 1) > f(i)) {
                return Err(Error::Precondition(format!(
                    "layer sequence must strictly increase (a({}) >= a({}))",
                    i,
                    i + 1
                )));
            }
        }
        Ok(LayerSequence(Box::new(f)))
    }

    pub fn a(&self, i: u32) -> f64 {
        (self.0)(i)
    }
}

/// The smallest radial layer certified to contain the whole bridge: the path
/// stays inside `[(x/\y) - a_iota, (x\/y) + a_iota]` and leaves the previous
/// layer's interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialLayer {
    pub iota: u32,
    pub a_prev: f64,
    pub a_cur: f64,
}

impl RadialLayer {
    pub fn interval(&self, b: &BridgeSpec) -> (f64, f64) {
        (b.lower_endpoint() - self.a_cur, b.upper_endpoint() + self.a_cur)
    }
}

const LAYER_INDEX_CAP: u32 = 100_000;

/// Simulate the layer index by inversion of its CDF, reusing a single
/// uniform draw across the nested band-probability brackets.
pub fn simulate_layer<R: Rng + ?Sized>(
    b: &BridgeSpec,
    seq: &LayerSequence,
    rng: &mut R,
) -> Result<RadialLayer> {
    let u: f64 = rng.random();
    let mut iota = 1u32;
    let mut j = 0u64;
    let mut series = layer_gamma(b, seq, iota)?;
    let mut spent = 0u64;
    loop {
        let (lo, hi) = series.bracket_clamped(j);
        if u <= lo {
            return Ok(RadialLayer { iota, a_prev: seq.a(iota - 1), a_cur: seq.a(iota) });
        }
        if u >= hi {
            iota += 1;
            if iota > LAYER_INDEX_CAP {
                return Err(Error::NumericalPrecision(
                    "layer index grew beyond any plausible range".into(),
                ));
            }
            series = layer_gamma(b, seq, iota)?;
        } else {
            j += 1;
        }
        spent += 1;
        if spent > EVENT_ITERATION_CAP * 10 {
            return Err(Error::NumericalPrecision(
                "layer CDF inversion failed to resolve".into(),
            ));
        }
    }
}

fn layer_gamma(b: &BridgeSpec, seq: &LayerSequence, iota: u32) -> Result<AlternatingSeries> {
    let a = seq.a(iota);
    Ok(gamma_series(&LayerBounds::new(
        b.s,
        b.t,
        b.x,
        b.y,
        b.lower_endpoint() - a,
        b.upper_endpoint() + a,
    )?))
}

/// Which conditioning the accepted proposal carries: the anchored extreme
/// lives in the layer's outer ring, and the opposite extreme was certified
/// either inside the previous layer or in the ring as well.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtremeConditioning {
    MinAnchoredMaxInner,
    MinAnchoredMaxRing,
    MaxAnchoredMinInner,
    MaxAnchoredMinRing,
}

impl ExtremeConditioning {
    /// Full-interval min/max bands implied by the conditioning, once the
    /// auxiliary extreme is discarded.
    pub fn bands(&self, b: &BridgeSpec, layer: &RadialLayer) -> (f64, f64, f64, f64) {
        let lo_e = b.lower_endpoint();
        let hi_e = b.upper_endpoint();
        match self {
            ExtremeConditioning::MinAnchoredMaxInner => {
                (lo_e - layer.a_cur, lo_e - layer.a_prev, hi_e, hi_e + layer.a_prev)
            }
            ExtremeConditioning::MinAnchoredMaxRing | ExtremeConditioning::MaxAnchoredMinRing => (
                lo_e - layer.a_cur,
                lo_e - layer.a_prev,
                hi_e + layer.a_prev,
                hi_e + layer.a_cur,
            ),
            ExtremeConditioning::MaxAnchoredMinInner => {
                (lo_e - layer.a_prev, lo_e, hi_e + layer.a_prev, hi_e + layer.a_cur)
            }
        }
    }

    fn d_class(&self) -> DClass {
        match self {
            ExtremeConditioning::MinAnchoredMaxInner => DClass::MinOnly,
            ExtremeConditioning::MaxAnchoredMinInner => DClass::MaxOnly,
            _ => DClass::Both,
        }
    }
}

/// An accepted layered-bridge proposal: the auxiliary extreme, the skeletal
/// points, and the conditioning flag.
#[derive(Debug, Clone)]
pub struct LayeredFragment {
    pub extreme: ExtremeRecord,
    pub points: Vec<(f64, f64)>,
    pub conditioning: ExtremeConditioning,
}

/// Product over the gaps induced by `points` of the band probabilities of a
/// Bessel bridge anchored at a minimum `mhat`, capped at `cap`. `points`
/// must be sorted by time and contain the extreme itself.
pub(crate) fn delta_product_min(points: &[(f64, f64)], mhat: f64, cap: f64) -> Result<AlternatingSeries> {
    let mut parts = Vec::with_capacity(points.len() - 1);
    for w in points.windows(2) {
        let ((s, x), (t, y)) = (w[0], w[1]);
        parts.push(delta_series_min(s, t, x, y, mhat, cap)?);
    }
    Ok(product_series(parts, "delta product (min)"))
}

pub(crate) fn delta_product_max(points: &[(f64, f64)], mcheck: f64, floor: f64) -> Result<AlternatingSeries> {
    let mut parts = Vec::with_capacity(points.len() - 1);
    for w in points.windows(2) {
        let ((s, x), (t, y)) = (w[0], w[1]);
        parts.push(delta_series_max(s, t, x, y, mcheck, floor)?);
    }
    Ok(product_series(parts, "delta product (max)"))
}

/// Outcome of the nested two-cap bracket decision in the layered-bridge
/// acceptance step.
enum RingDecision {
    OppositeInner,
    OppositeRing,
    Outside,
}

// One uniform decides between the nested events "opposite extreme within
// the inner cap" / "within the outer cap" / "outside both".
fn ring_decision(u: f64, inner: &AlternatingSeries, outer: &AlternatingSeries) -> Result<RingDecision> {
    if crate::series::decide_event_with(inner, u)? {
        return Ok(RingDecision::OppositeInner);
    }
    if crate::series::decide_event_with(outer, u)? {
        return Ok(RingDecision::OppositeRing);
    }
    Ok(RingDecision::Outside)
}

const PROPOSAL_ATTEMPT_CAP: u64 = 1_000_000;

/// Simulate the bridge at `times` conditional on the radial layer: propose
/// from the half/half mixture of min- and max-anchored Bessel bridges and
/// accept so that the conditional law given the layer is exact.
pub fn simulate_layered_bridge<R: Rng + ?Sized>(
    b: &BridgeSpec,
    layer: &RadialLayer,
    times: &[f64],
    rng: &mut R,
) -> Result<LayeredFragment> {
    let mut sorted = times.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Precondition("duplicate skeletal times".into()));
    }
    if sorted.iter().any(|&q| q <= b.s || q >= b.t) {
        return Err(Error::Precondition("skeletal times must be interior".into()));
    }
    let lo_e = b.lower_endpoint();
    let hi_e = b.upper_endpoint();

    for _ in 0..PROPOSAL_ATTEMPT_CAP {
        let min_side = rng.random::<f64>() <= 0.5;
        // anchor one extreme in the layer's outer ring
        let ext = if min_side {
            sample_min(b, lo_e - layer.a_cur, lo_e - layer.a_prev, rng)?
        } else {
            sample_max(b, hi_e + layer.a_prev, hi_e + layer.a_cur, rng)?
        };
        // fill the requested times from the Bessel bridge
        let mut chi: Vec<(f64, f64)> = Vec::with_capacity(sorted.len() + 3);
        chi.push((b.s, b.x));
        for &q in &sorted {
            chi.push((q, bessel_bridge_point(b, &ext, q, rng)?));
        }
        chi.push((ext.tau, ext.value));
        chi.push((b.t, b.y));
        chi.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

        // nested caps (or floors) for the opposite extreme
        let (inner, outer) = if min_side {
            (
                delta_product_min(&chi, ext.value, hi_e + layer.a_prev)?,
                delta_product_min(&chi, ext.value, hi_e + layer.a_cur)?,
            )
        } else {
            (
                delta_product_max(&chi, ext.value, lo_e - layer.a_prev)?,
                delta_product_max(&chi, ext.value, lo_e - layer.a_cur)?,
            )
        };
        let u: f64 = rng.random();
        let decision = ring_decision(u, &inner, &outer)?;
        let conditioning = match (min_side, decision) {
            (true, RingDecision::OppositeInner) => ExtremeConditioning::MinAnchoredMaxInner,
            (true, RingDecision::OppositeRing) => ExtremeConditioning::MinAnchoredMaxRing,
            (false, RingDecision::OppositeInner) => ExtremeConditioning::MaxAnchoredMinInner,
            (false, RingDecision::OppositeRing) => ExtremeConditioning::MaxAnchoredMinRing,
            (_, RingDecision::Outside) => continue,
        };
        // both extremes in the ring is double-counted by the two anchor
        // choices; keep such proposals with probability 1/2
        if matches!(
            conditioning,
            ExtremeConditioning::MinAnchoredMaxRing | ExtremeConditioning::MaxAnchoredMinRing
        ) && rng.random::<f64>() >= 0.5
        {
            continue;
        }
        let points = chi
            .iter()
            .copied()
            .filter(|&(t, _)| sorted.binary_search_by(|p| p.partial_cmp(&t).unwrap()).is_ok())
            .collect();
        return Ok(LayeredFragment { extreme: ext, points, conditioning });
    }
    Err(Error::AttemptCap("layered bridge proposal loop".into()))
}

/// Discard the auxiliary extreme and convert the accepted fragment into
/// per-sub-interval intersection layers, by dissecting the full-interval
/// band information at the skeletal points. After this the sub-intervals
/// are conditionally independent and can be restored separately.
pub fn augment_to_intersection<R: Rng + ?Sized>(
    b: &BridgeSpec,
    layer: &RadialLayer,
    fragment: &LayeredFragment,
    rng: &mut R,
) -> Result<Vec<IntersectionLayer>> {
    let (min_lo, min_hi, max_lo, max_hi) = fragment.conditioning.bands(b, layer);
    let full = IntersectionLayer::new(b.s, b.t, b.x, b.y, min_lo, min_hi, max_lo, max_hi)?
        .with_class(fragment.conditioning.d_class());
    if fragment.points.is_empty() {
        return Ok(vec![full]);
    }
    dissect(&full, &fragment.points, rng)
}
