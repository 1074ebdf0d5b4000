//! Jump-diffusion exact algorithms: the diffusion samplers run between
//! proposal jump times of a dominating Poisson process, and proposals are
//! thinned with the state-dependent intensity ratio.
//!
//! Three constructions, by what is known about the intensity:
//!
//! - bounded: a global intensity cap lets all proposal times be generated
//!   up front as exponential waits, one diffusion segment per wait;
//! - unbounded: only a layer-conditional cap exists, so each sweep proposes
//!   a diffusion skeleton over the whole remaining interval together with
//!   its proposal jump times; the first accepted jump restarts the sweep,
//!   and every proposed skeleton is retained (restoration is therefore not
//!   offered);
//! - adaptive: the adaptive diffusion sampler satisfies piecewise
//!   restoration directly, so proposal jump times can be generated one at a
//!   time afterwards, with the cap re-inferred from the current bands and
//!   the post-jump remainder discarded on acceptance.
//!
//! A strictly positive lower intensity bound additionally allows the jump
//! process to be split into a homogeneous floor process (whose jumps need
//! no thinning) plus an excess process, shortening the proposal horizons.

use crate::error::{Error, Result};
use crate::exact::{auea_segment, bea_segment, uea_segment, BridgeBackend, Skeleton};
use crate::intersection::IntersectionLayer;
use crate::model::{DiffusionModel, JumpSpec};
use crate::numeric::{sample_exp, sample_poisson};
use rand::Rng;

/// Which jump algorithm produced a skeleton.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum JumpProvenance {
    Bounded,
    Unbounded,
    Adaptive,
}

/// Inner diffusion sampler for the bounded jump algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerAlgorithm {
    Bounded,
    Unbounded,
    Adaptive,
}

/// One applied jump: time, state just before, state just after.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct JumpRecord {
    pub time: f64,
    pub pre: f64,
    pub post: f64,
}

/// Exact finite representation of a jump-diffusion path: diffusion segment
/// skeletons plus the applied jumps. For the unbounded variant the segments
/// are the full proposal skeletons (overlapping in time), as the layer that
/// certified them spans the whole proposal interval.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct JumpSkeleton {
    segments: Vec<Skeleton>,
    jumps: Vec<JumpRecord>,
    provenance: JumpProvenance,
    terminal: f64,
}

impl JumpSkeleton {
    pub fn segments(&self) -> &[Skeleton] {
        &self.segments
    }

    pub fn jumps(&self) -> &[JumpRecord] {
        &self.jumps
    }

    pub fn provenance(&self) -> JumpProvenance {
        self.provenance
    }

    pub fn jump_count(&self) -> usize {
        self.jumps.len()
    }

    pub fn terminal_value(&self) -> f64 {
        self.terminal
    }

    /// All per-gap layer records across the retained segments.
    pub fn layers(&self) -> impl Iterator<Item = &IntersectionLayer> {
        self.segments.iter().flat_map(|s| s.layers().iter())
    }

    /// All pinned path values: segment skeletal points and jump endpoints.
    pub fn pinned_points(&self) -> Vec<(f64, f64)> {
        let mut pts: Vec<(f64, f64)> = Vec::new();
        for seg in &self.segments {
            pts.extend_from_slice(seg.points());
        }
        for j in &self.jumps {
            pts.push((j.time, j.pre));
            pts.push((j.time, j.post));
        }
        pts
    }

    /// Restore the path at further times, one diffusion segment at a time.
    /// The unbounded variant retains overlapping proposal skeletons whose
    /// layers span accepted jumps, so it does not support restoration.
    pub fn restore<R: Rng>(&mut self, times: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        if self.provenance == JumpProvenance::Unbounded {
            return Err(Error::Precondition(
                "the unbounded jump algorithm's skeleton does not support restoration; \
                 use the adaptive variant"
                    .into(),
            ));
        }
        let mut out = Vec::with_capacity(times.len());
        for &q in times {
            // a jump time belongs to the segment that ends there (the jump
            // itself is recorded separately); interior times to their gap
            let idx = self
                .segments
                .iter()
                .position(|s| {
                    let (a, b) = s.span();
                    q >= a && q < b
                })
                .or_else(|| {
                    self.segments.iter().rposition(|s| {
                        let (_, b) = s.span();
                        q == b
                    })
                })
                .ok_or_else(|| {
                    Error::Precondition(format!("time {q} outside the simulated horizon"))
                })?;
            out.push(self.segments[idx].restore(&[q], rng)?[0]);
        }
        Ok(out)
    }
}

/// An accepted jump-diffusion run with the total proposal count spent in
/// the diffusion samplers.
#[derive(Debug)]
pub struct JumpRun {
    pub skeleton: JumpSkeleton,
    pub attempts: u64,
}

// Intensity view used by the superposition wrapper: intensity and caps
// shifted down by the floor rate, sizes drawn from the base sampler.
struct IntensityView<'a> {
    base: &'a JumpSpec,
    shift: f64,
}

impl IntensityView<'_> {
    fn full(base: &JumpSpec) -> IntensityView<'_> {
        IntensityView { base, shift: 0.0 }
    }

    fn intensity(&self, x: f64) -> Result<f64> {
        let lam = self.base.intensity(x);
        if lam < -1e-12 {
            return Err(Error::BoundViolation(format!("negative jump intensity at x={x}")));
        }
        if lam < self.shift - 1e-9 {
            return Err(Error::BoundViolation(format!(
                "intensity {lam} at x={x} is below the asserted floor {}",
                self.shift
            )));
        }
        Ok((lam - self.shift).max(0.0))
    }

    fn bound_on(&self, lo: f64, hi: f64) -> f64 {
        (self.base.bound_on(lo, hi) - self.shift).max(0.0)
    }

}

fn run_inner_segment<R: Rng>(
    m: &DiffusionModel,
    inner: InnerAlgorithm,
    s: f64,
    t: f64,
    x: f64,
    rng: &mut R,
) -> Result<(Skeleton, u64)> {
    match inner {
        InnerAlgorithm::Bounded => bea_segment(m, s, t, x, rng),
        InnerAlgorithm::Unbounded => uea_segment(m, s, t, x, BridgeBackend::Intersection, rng),
        InnerAlgorithm::Adaptive => auea_segment(m, s, t, x, rng),
    }
}

/// Bounded jump exact algorithm: global intensity cap, proposal jump times
/// as exponential waits, one inner diffusion skeleton per inter-proposal
/// segment, jumps thinned at the segment terminal value.
pub fn run_bjea<R: Rng>(
    m: &DiffusionModel,
    jumps: &JumpSpec,
    inner: InnerAlgorithm,
    rng: &mut R,
) -> Result<JumpRun> {
    let cap = jumps.global_bound().ok_or_else(|| {
        Error::Precondition("bounded jump algorithm needs a global intensity bound".into())
    })?;
    let view = IntensityView::full(jumps);
    let horizon = m.horizon();
    let mut t_cur = 0.0;
    let mut x_cur = m.start();
    let mut segments = Vec::new();
    let mut jump_log = Vec::new();
    let mut attempts = 0u64;
    loop {
        let wait = sample_exp(cap, rng);
        let seg_end = (t_cur + wait).min(horizon);
        if seg_end > t_cur {
            let (sk, att) = run_inner_segment(m, inner, t_cur, seg_end, x_cur, rng)?;
            attempts += att;
            x_cur = sk.terminal_value();
            segments.push(sk);
        }
        if t_cur + wait >= horizon {
            break;
        }
        t_cur += wait;
        let lam = view.intensity(x_cur)?;
        if lam > cap + 1e-9 {
            return Err(Error::BoundViolation(format!(
                "intensity {lam} exceeds the asserted global bound {cap}"
            )));
        }
        if rng.random::<f64>() < lam / cap {
            let pre = x_cur;
            let post = pre + jumps.sample_jump(pre, rng);
            jump_log.push(JumpRecord { time: t_cur, pre, post });
            x_cur = post;
        }
    }
    Ok(JumpRun {
        skeleton: JumpSkeleton {
            segments,
            jumps: jump_log,
            provenance: JumpProvenance::Bounded,
            terminal: x_cur,
        },
        attempts,
    })
}

/// Unbounded jump exact algorithm over `[0, horizon]`.
pub fn run_ujea<R: Rng>(
    m: &DiffusionModel,
    jumps: &JumpSpec,
    rng: &mut R,
) -> Result<JumpRun> {
    let view = IntensityView::full(jumps);
    let (segments, jump_log, terminal, attempts) =
        ujea_window(m, &view, 0.0, m.horizon(), m.start(), rng)?;
    Ok(JumpRun {
        skeleton: JumpSkeleton {
            segments,
            jumps: jump_log,
            provenance: JumpProvenance::Unbounded,
            terminal,
        },
        attempts,
    })
}

type WindowOutcome = (Vec<Skeleton>, Vec<JumpRecord>, f64, u64);

// One unbounded sweep structure: propose a whole-remaining-interval
// skeleton along with all its proposal jump times; the first accepted jump
// restarts from just after it (discarding the later proposals of the
// sweep), and the whole proposed skeleton is retained either way.
fn ujea_window<R: Rng>(
    m: &DiffusionModel,
    view: &IntensityView<'_>,
    window_start: f64,
    window_end: f64,
    x0: f64,
    rng: &mut R,
) -> Result<WindowOutcome> {
    use crate::brownian::BridgeSpec;
    use crate::intersection::{initial_layer, Dissection};
    use crate::layered::LayerSequence;

    let mut segments = Vec::new();
    let mut jump_log = Vec::new();
    let mut psi = window_start;
    let mut x_cur = x0;
    let mut attempts = 0u64;
    'sweeps: loop {
        let dt = window_end - psi;
        let seq = LayerSequence::scaled(m.layer_theta(), dt)?;
        for _ in 0..m.max_attempts() {
            attempts += 1;
            let y = m.sample_endpoint(x_cur, dt, rng)?;
            let b = BridgeSpec::new(psi, window_end, x_cur, y)?;
            let layer = initial_layer(&b, &seq, rng)?;
            let (lower, upper) = m.phi_bounds_on(layer.min_lo, layer.max_hi);
            let lam_cap = view.bound_on(layer.min_lo, layer.max_hi);
            let kappa = sample_poisson((upper - lower) * dt, rng)?;
            let n_proposals = sample_poisson(lam_cap * dt, rng)?;
            let mut skel_times: Vec<f64> =
                (0..kappa).map(|_| psi + dt * rng.random::<f64>()).collect();
            let mut prop_times: Vec<f64> =
                (0..n_proposals).map(|_| psi + dt * rng.random::<f64>()).collect();
            skel_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
            prop_times.sort_by(|a, b| a.partial_cmp(b).unwrap());

            let mut state = Dissection::new(vec![layer])?;
            let mut merged: Vec<f64> = skel_times.iter().chain(prop_times.iter()).copied().collect();
            merged.sort_by(|a, b| a.partial_cmp(b).unwrap());
            merged.dedup();
            let mut values = std::collections::BTreeMap::new();
            for &q in &merged {
                values.insert(q.to_bits(), state.restore_at(q, rng)?);
            }

            // thinning of the Girsanov weight at the skeletal points only
            let delta = upper - lower;
            let mut pass = true;
            for &q in &skel_times {
                let w = values[&q.to_bits()];
                let phi = m.phi(w);
                if phi < lower - 1e-9 || phi > upper + 1e-9 {
                    return Err(Error::BoundViolation(format!(
                        "phi({w}) = {phi} escapes [{lower}, {upper}]"
                    )));
                }
                if delta > 0.0 && rng.random::<f64>() > (upper - phi) / delta {
                    pass = false;
                    break;
                }
            }
            if !pass {
                continue;
            }

            // the whole proposed skeleton is retained
            let mut points = vec![(psi, x_cur)];
            for &q in &merged {
                points.push((q, values[&q.to_bits()]));
            }
            points.push((window_end, y));
            segments.push(Skeleton::from_parts(
                points,
                state.children().to_vec(),
                crate::exact::Provenance::Unbounded,
            ));

            // first accepted proposal jump restarts the sweep
            for &q in &prop_times {
                let val = values[&q.to_bits()];
                let lam = view.intensity(val)?;
                if lam > lam_cap + 1e-9 {
                    return Err(Error::BoundViolation(format!(
                        "intensity {lam} exceeds the layer bound {lam_cap}"
                    )));
                }
                if lam_cap > 0.0 && rng.random::<f64>() < lam / lam_cap {
                    let pre = val;
                    let post = pre + view.base.sample_jump(pre, rng);
                    jump_log.push(JumpRecord { time: q, pre, post });
                    psi = q;
                    x_cur = post;
                    continue 'sweeps;
                }
            }
            // no accepted jump: the path is complete
            return Ok((segments, jump_log, y, attempts));
        }
        return Err(Error::AttemptCap("unbounded jump exact algorithm".into()));
    }
}

/// Adaptive unbounded jump exact algorithm over `[0, horizon]`.
pub fn run_aujea<R: Rng>(
    m: &DiffusionModel,
    jumps: &JumpSpec,
    rng: &mut R,
) -> Result<JumpRun> {
    let view = IntensityView::full(jumps);
    let (segments, jump_log, terminal, attempts) =
        aujea_window(m, &view, 0.0, m.horizon(), m.start(), rng)?;
    Ok(JumpRun {
        skeleton: JumpSkeleton {
            segments,
            jumps: jump_log,
            provenance: JumpProvenance::Adaptive,
            terminal,
        },
        attempts,
    })
}

fn aujea_window<R: Rng>(
    m: &DiffusionModel,
    view: &IntensityView<'_>,
    window_start: f64,
    window_end: f64,
    x0: f64,
    rng: &mut R,
) -> Result<WindowOutcome> {
    let mut segments = Vec::new();
    let mut jump_log = Vec::new();
    let mut psi = window_start;
    let mut x_cur = x0;
    let mut attempts = 0u64;
    'post_jump: loop {
        let (mut sk, att) = auea_segment(m, psi, window_end, x_cur, rng)?;
        attempts += att;
        let mut clock = psi;
        loop {
            // cap inferred from the current bands over the remaining window
            let lam_cap = sk
                .layers()
                .iter()
                .filter(|l| l.t > clock)
                .map(|l| view.bound_on(l.min_lo, l.max_hi))
                .fold(0.0f64, f64::max);
            let wait = sample_exp(lam_cap, rng);
            let cand = clock + wait;
            if cand >= window_end {
                segments.push(sk);
                let terminal = segments_terminal(&segments);
                return Ok((segments, jump_log, terminal, attempts));
            }
            // pin the path at the proposal time (this also dissects the
            // covering gap, so the bands stay per-sub-interval)
            let val = sk.restore(&[cand], rng)?[0];
            let lam = view.intensity(val)?;
            if lam > lam_cap + 1e-9 {
                return Err(Error::BoundViolation(format!(
                    "intensity {lam} exceeds the inferred bound {lam_cap}"
                )));
            }
            if rng.random::<f64>() < lam / lam_cap {
                // accepted jump: keep the pre-jump part, drop the rest
                let retained = sk.truncated_at(cand)?;
                segments.push(retained);
                let pre = val;
                let post = pre + view.base.sample_jump(pre, rng);
                jump_log.push(JumpRecord { time: cand, pre, post });
                psi = cand;
                x_cur = post;
                continue 'post_jump;
            }
            clock = cand;
        }
    }
}

fn segments_terminal(segments: &[Skeleton]) -> f64 {
    segments.last().map(|s| s.terminal_value()).unwrap_or(f64::NAN)
}

/// Which inner algorithm the superposition wrapper drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuperposedInner {
    Unbounded,
    Adaptive,
}

/// Superposition wrapper: with an asserted intensity floor, jump times of
/// the homogeneous floor process are drawn directly and the inner algorithm
/// runs only between them, with the excess intensity `lambda - floor`.
/// The law of the output is identical to the unwrapped algorithm.
pub fn run_superposed<R: Rng>(
    m: &DiffusionModel,
    jumps: &JumpSpec,
    inner: SuperposedInner,
    rng: &mut R,
) -> Result<JumpRun> {
    let floor = jumps.intensity_floor().ok_or_else(|| {
        Error::Precondition("superposition wrapper needs an asserted intensity floor".into())
    })?;
    if !(floor > 0.0) {
        return Err(Error::Precondition(format!("intensity floor must be positive, got {floor}")));
    }
    let view = IntensityView { base: jumps, shift: floor };
    let horizon = m.horizon();
    let mut t_cur = 0.0;
    let mut x_cur = m.start();
    let mut segments = Vec::new();
    let mut jump_log: Vec<JumpRecord> = Vec::new();
    let mut attempts = 0u64;
    let provenance = match inner {
        SuperposedInner::Unbounded => JumpProvenance::Unbounded,
        SuperposedInner::Adaptive => JumpProvenance::Adaptive,
    };
    loop {
        let wait = sample_exp(floor, rng);
        let seg_end = (t_cur + wait).min(horizon);
        let (mut segs, mut jl, terminal, att) = match inner {
            SuperposedInner::Unbounded => ujea_window(m, &view, t_cur, seg_end, x_cur, rng)?,
            SuperposedInner::Adaptive => aujea_window(m, &view, t_cur, seg_end, x_cur, rng)?,
        };
        attempts += att;
        segments.append(&mut segs);
        jump_log.append(&mut jl);
        x_cur = terminal;
        if t_cur + wait >= horizon {
            break;
        }
        t_cur += wait;
        // a floor-process jump fires unconditionally at the wait time
        view.intensity(x_cur)?; // floor-violation check at the jump state
        let pre = x_cur;
        let post = pre + jumps.sample_jump(pre, rng);
        jump_log.push(JumpRecord { time: t_cur, pre, post });
        x_cur = post;
    }
    Ok(JumpRun {
        skeleton: JumpSkeleton { segments, jumps: jump_log, provenance, terminal: x_cur },
        attempts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::IntensityBound;
    use crate::presets::preset;
    use crate::stats::{chi2_gof, mean_var};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    fn no_jumps() -> JumpSpec {
        JumpSpec::new(|_| 0.0, IntensityBound::Global(0.5), |_, _| 0.0)
    }

    #[test]
    fn zero_intensity_reduces_to_diffusion() {
        let p = preset("ou").unwrap();
        let j = no_jumps();
        let mut r = rng(61);
        let run = run_bjea(&p.model, &j, InnerAlgorithm::Adaptive, &mut r).unwrap();
        assert_eq!(run.skeleton.jump_count(), 0);
        let j_layer = JumpSpec::new(|_| 0.0, IntensityBound::Layer(Box::new(|_, _| 0.0)), |_, _| 0.0);
        let run = run_aujea(&p.model, &j_layer, &mut r).unwrap();
        assert_eq!(run.skeleton.jump_count(), 0);
        assert_eq!(run.skeleton.segments().len(), 1);
        let run = run_ujea(&p.model, &j_layer, &mut r).unwrap();
        assert_eq!(run.skeleton.jump_count(), 0);
        assert_eq!(run.skeleton.segments().len(), 1, "one proposal sweep, retained whole");
    }

    #[test]
    fn constant_intensity_jump_count_is_poisson() {
        // lambda == cap: every proposal is accepted, so the count is exactly
        // Poisson(cap * horizon)
        let p = preset("zero").unwrap();
        let lam = 1.3;
        let j = JumpSpec::new(move |_| lam, IntensityBound::Global(lam), |_, rng| {
            crate::numeric::sample_std_normal(rng)
        });
        let mut r = rng(62);
        let n = 20_000;
        let mut counts = vec![0f64; 12];
        for _ in 0..n {
            let run = run_bjea(&p.model, &j, InnerAlgorithm::Bounded, &mut r).unwrap();
            let c = run.skeleton.jump_count().min(11);
            counts[c] += 1.0;
        }
        // Poisson cell masses with the tail folded into the last bin
        let mut expected = vec![0f64; 12];
        let mut acc = 0.0;
        let mut pk = (-lam).exp();
        for (k, e) in expected.iter_mut().enumerate().take(11) {
            *e = pk * n as f64;
            acc += pk;
            pk *= lam / (k + 1) as f64;
        }
        expected[11] = (1.0 - acc) * n as f64;
        let (_, p_val) = chi2_gof(&counts, &expected, 0);
        assert!(p_val > 0.01, "chi2 p = {p_val}");
    }

    #[test]
    fn bjea_app1_terminal_matches_euler() {
        let p = preset("app1").unwrap();
        let j = p.jumps.as_ref().unwrap();
        let mut r = rng(63);
        let n = 1_500;
        let exact: Vec<f64> = (0..n)
            .map(|_| {
                run_bjea(&p.model, j, InnerAlgorithm::Adaptive, &mut r)
                    .unwrap()
                    .skeleton
                    .terminal_value()
            })
            .collect();
        let approx: Vec<f64> = (0..4 * n)
            .map(|_| crate::euler::euler_jump_outcome(&p.model, j, 2e-3, &mut r).unwrap().terminal)
            .collect();
        let (me, ve) = mean_var(&exact);
        let (ma, va) = mean_var(&approx);
        let se = (ve / n as f64 + va / (4 * n) as f64).sqrt();
        assert!((me - ma).abs() < 4.0 * se, "means {me} vs {ma} (se {se})");
        assert!((ve - va).abs() < 5.0 * ve * (2.0 / n as f64).sqrt(), "vars {ve} vs {va}");
    }

    #[test]
    fn aujea_app2_terminal_matches_euler() {
        let p = preset("app2").unwrap();
        let j = p.jumps.as_ref().unwrap();
        let mut r = rng(64);
        let n = 1_500;
        let exact: Vec<f64> = (0..n)
            .map(|_| run_aujea(&p.model, j, &mut r).unwrap().skeleton.terminal_value())
            .collect();
        let approx: Vec<f64> = (0..4 * n)
            .map(|_| crate::euler::euler_jump_outcome(&p.model, j, 2e-3, &mut r).unwrap().terminal)
            .collect();
        let (me, ve) = mean_var(&exact);
        let (ma, va) = mean_var(&approx);
        let se = (ve / n as f64 + va / (4 * n) as f64).sqrt();
        assert!((me - ma).abs() < 4.0 * se, "means {me} vs {ma} (se {se})");
        assert!((ve - va).abs() < 5.0 * ve * (2.0 / n as f64).sqrt(), "vars {ve} vs {va}");
    }

    #[test]
    fn ujea_refuses_restoration_and_aujea_supports_it() {
        let p = preset("app2").unwrap();
        let j = p.jumps.as_ref().unwrap();
        let mut r = rng(65);
        let mut ujea = run_ujea(&p.model, j, &mut r).unwrap().skeleton;
        assert!(ujea.restore(&[0.5], &mut r).is_err());
        let mut aujea = run_aujea(&p.model, j, &mut r).unwrap().skeleton;
        let v = aujea.restore(&[0.5], &mut r).unwrap()[0];
        assert!(v.is_finite());
        // restored value lands within the covering gap's bands
        let covering = aujea
            .layers()
            .find(|l| l.s <= 0.5 && 0.5 <= l.t)
            .expect("covering layer");
        assert!(v >= covering.min_lo - 1e-12 && v <= covering.max_hi + 1e-12);
    }

    #[test]
    fn aujea_post_jump_segments_do_not_reference_pre_jump_bands() {
        let p = preset("app2").unwrap();
        let j = p.jumps.as_ref().unwrap();
        let mut r = rng(66);
        for _ in 0..50 {
            let sk = run_aujea(&p.model, j, &mut r).unwrap().skeleton;
            // segments partition the horizon at the jump times
            let mut expected_start = 0.0;
            for (i, seg) in sk.segments().iter().enumerate() {
                let (a, b) = seg.span();
                assert_eq!(a, expected_start, "segment {i} start");
                expected_start = b;
                for l in seg.layers() {
                    assert!(l.s >= a - 1e-12 && l.t <= b + 1e-12);
                }
            }
            assert_eq!(expected_start, p.model.horizon());
        }
    }

    #[test]
    fn superposition_with_constant_floor_gives_exponential_waits() {
        let p = preset("zero").unwrap();
        let lam = 0.9;
        let j = JumpSpec::new(move |_| lam, IntensityBound::Layer(Box::new(move |_, _| lam)), |_, rng| {
            crate::numeric::sample_std_normal(rng)
        })
        .with_intensity_floor(lam);
        let mut r = rng(67);
        let n = 8_000;
        let horizon = p.model.horizon();
        let mut first_waits = Vec::new();
        let mut none = 0u64;
        for _ in 0..n {
            let run = run_superposed(&p.model, &j, SuperposedInner::Adaptive, &mut r).unwrap();
            match run.skeleton.jumps().first() {
                Some(jr) => first_waits.push(jr.time),
                None => none += 1,
            }
        }
        // the first wait is Exp(lam) censored at the horizon: check the
        // censoring mass and the truncated law of the uncensored part
        let p_none = (-lam * horizon).exp();
        let got_none = none as f64 / n as f64;
        let se = (p_none * (1.0 - p_none) / n as f64).sqrt();
        assert!((got_none - p_none).abs() < 3.5 * se, "censoring {got_none} vs {p_none}");
        let trunc = 1.0 - p_none;
        let (_, p_val) =
            crate::stats::ks_one_sample(&first_waits, |w| (1.0 - (-lam * w).exp()) / trunc);
        assert!(p_val > 0.01, "KS p = {p_val}");
    }

    #[test]
    fn superposition_matches_plain_adaptive_law() {
        let p = preset("app2").unwrap();
        // app2's intensity x^2 has no positive floor; shift it up by one
        let floor = 0.1;
        let j = JumpSpec::new(move |x| x * x + floor, IntensityBound::Layer(Box::new(move |lo, hi| {
            (lo * lo).max(hi * hi) + floor
        })), |x, rng| {
            let (lo, hi) = ((-x).min(0.0), (-x).max(0.0));
            lo + (hi - lo) * rand::Rng::random::<f64>(rng)
        })
        .with_intensity_floor(floor);
        let mut r = rng(68);
        let n = 1_200;
        let wrapped: Vec<f64> = (0..n)
            .map(|_| {
                run_superposed(&p.model, &j, SuperposedInner::Adaptive, &mut r)
                    .unwrap()
                    .skeleton
                    .terminal_value()
            })
            .collect();
        let plain: Vec<f64> = (0..n)
            .map(|_| run_aujea(&p.model, &j, &mut r).unwrap().skeleton.terminal_value())
            .collect();
        let (_, p_val) = crate::stats::ks_two_sample(&wrapped, &plain);
        assert!(p_val > 0.01, "KS p = {p_val}");
    }
}
