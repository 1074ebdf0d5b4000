//! Epsilon-strong simulation: piecewise-constant upper and lower staircase
//! processes that enclose a (jump) diffusion sample path almost surely, and
//! shrink monotonically under refinement to any prescribed tolerance.
//!
//! Each staircase cell is an intersection layer; refinement interleaves two
//! moves that both preserve the sandwich: bisecting a cell at its time
//! midpoint (sampling the path there exactly and dissecting the bands), and
//! narrowing a cell's bands in place. Either a fixed number of bisection
//! rounds is applied to every cell, or cells with the widest envelope gap
//! are bisected greedily until every gap is below a tolerance.

use crate::brownian::BridgeSpec;
use crate::error::{Error, Result};
use crate::exact::Skeleton;
use crate::intersection::{dissect, initial_layer, refine, sample_midpoint, IntersectionLayer};
use crate::jumps::{run_aujea, run_bjea, InnerAlgorithm, JumpSkeleton};
use crate::layered::LayerSequence;
use crate::model::{DiffusionModel, JumpSpec};
use crate::numeric::sample_std_normal;
use rand::Rng;

/// How far to refine the staircases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RefineMode {
    /// Bisect every cell this many times.
    Rounds(u32),
    /// Greedily bisect the widest cell until every envelope gap is below
    /// the tolerance.
    Tolerance(f64),
}

/// Refinement policy: the mode plus the band-width trigger coefficient. A
/// cell's bands are narrowed after each bisection until both are below
/// `coeff * sqrt(cell length / 4)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinePolicy {
    pub mode: RefineMode,
    pub trigger_coeff: f64,
}

impl RefinePolicy {
    pub fn rounds(n: u32) -> Self {
        RefinePolicy { mode: RefineMode::Rounds(n), trigger_coeff: 1.0 }
    }

    pub fn tolerance(eps: f64) -> Self {
        RefinePolicy { mode: RefineMode::Tolerance(eps), trigger_coeff: 1.0 }
    }

    fn validate(&self) -> Result<()> {
        match self.mode {
            RefineMode::Rounds(0) => {
                Err(Error::Precondition("refinement needs at least one round".into()))
            }
            RefineMode::Tolerance(eps) if !(eps > 0.0) => {
                Err(Error::Precondition(format!("tolerance must be positive, got {eps}")))
            }
            _ => Ok(()),
        }
    }
}

/// One staircase cell: constant bounds on one time interval.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StairCell {
    pub s: f64,
    pub t: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Certified interval enclosures of path functionals computed from the
/// staircases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifiedFunctionals {
    pub min: (f64, f64),
    pub max: (f64, f64),
    pub integral: (f64, f64),
}

/// The bounding process: live cells, the staircase recorded after every
/// refinement pass, and every path value pinned along the way (used to
/// check the sandwich property, and kept consistent by restoration).
#[derive(Debug, Clone)]
pub struct BoundingProcess {
    cells: Vec<IntersectionLayer>,
    snapshots: Vec<Vec<StairCell>>,
    pinned: Vec<(f64, f64)>,
}

impl BoundingProcess {
    pub fn cells(&self) -> &[IntersectionLayer] {
        &self.cells
    }

    /// Staircases recorded after each refinement pass (index 0 is the
    /// initial state).
    pub fn snapshots(&self) -> &[Vec<StairCell>] {
        &self.snapshots
    }

    /// Every path value simulated so far (skeletal points, jump endpoints,
    /// restored points).
    pub fn pinned_points(&self) -> &[(f64, f64)] {
        &self.pinned
    }

    pub fn staircase(&self) -> Vec<StairCell> {
        self.cells
            .iter()
            .map(|c| StairCell { s: c.s, t: c.t, lower: c.min_lo, upper: c.max_hi })
            .collect()
    }

    /// Largest pointwise gap between the staircases.
    pub fn sup_gap(&self) -> f64 {
        self.cells.iter().map(|c| c.envelope_gap()).fold(0.0, f64::max)
    }

    /// Integrated gap between the staircases.
    pub fn l1_gap(&self) -> f64 {
        self.cells.iter().map(|c| c.envelope_gap() * (c.t - c.s)).sum()
    }

    /// Interval enclosures for the path minimum, maximum and integral.
    pub fn certified_functionals(&self) -> CertifiedFunctionals {
        let min_lo = self.cells.iter().map(|c| c.min_lo).fold(f64::INFINITY, f64::min);
        let min_hi = self.cells.iter().map(|c| c.min_hi).fold(f64::INFINITY, f64::min);
        let max_lo = self.cells.iter().map(|c| c.max_lo).fold(f64::NEG_INFINITY, f64::max);
        let max_hi = self.cells.iter().map(|c| c.max_hi).fold(f64::NEG_INFINITY, f64::max);
        let int_lo = self.cells.iter().map(|c| c.min_lo * (c.t - c.s)).sum();
        let int_hi = self.cells.iter().map(|c| c.max_hi * (c.t - c.s)).sum();
        CertifiedFunctionals { min: (min_lo, min_hi), max: (max_lo, max_hi), integral: (int_lo, int_hi) }
    }

    fn snapshot(&mut self) {
        self.snapshots.push(self.staircase());
    }

    /// Restore the path at further times through the cell structure. Each
    /// restoration bisects its covering cell, so later values remain
    /// consistent and sandwiched.
    pub fn restore<R: Rng + ?Sized>(&mut self, times: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(times.len());
        for &q in times {
            out.push(self.restore_one(q, rng)?);
        }
        self.snapshot();
        Ok(out)
    }

    fn restore_one<R: Rng + ?Sized>(&mut self, q: f64, rng: &mut R) -> Result<f64> {
        if let Some(&(_, v)) = self.pinned.iter().find(|&&(t, _)| t == q) {
            return Ok(v);
        }
        let idx = self
            .cells
            .iter()
            .position(|c| c.contains_time(q))
            .ok_or_else(|| Error::Precondition(format!("time {q} not interior to any cell")))?;
        let cell = self.cells[idx];
        let w = sample_midpoint(&cell, q, rng)?;
        let children = dissect(&cell, &[(q, w)], rng)?;
        self.cells.splice(idx..=idx, children);
        self.pinned.push((q, w));
        Ok(w)
    }
}

// Bisect one cell at its midpoint and narrow both children's bands to the
// width trigger derived from the parent cell's length.
fn bisect_and_refine<R: Rng + ?Sized>(
    cell: &IntersectionLayer,
    coeff: f64,
    rng: &mut R,
) -> Result<(Vec<IntersectionLayer>, (f64, f64))> {
    let q = 0.5 * (cell.s + cell.t);
    let w = sample_midpoint(cell, q, rng)?;
    let children = dissect(cell, &[(q, w)], rng)?;
    let trigger = coeff * ((cell.t - cell.s) / 4.0).sqrt();
    let mut refined = Vec::with_capacity(children.len());
    for mut child in children {
        while child.band_width() > trigger {
            child = refine(
                &child,
                0.5 * (child.min_lo + child.min_hi),
                0.5 * (child.max_lo + child.max_hi),
                rng,
            )?;
        }
        refined.push(child);
    }
    Ok((refined, (q, w)))
}

const TOLERANCE_BISECTION_CAP: usize = 1_000_000;

fn run_refinement<R: Rng + ?Sized>(
    mut bp: BoundingProcess,
    policy: &RefinePolicy,
    rng: &mut R,
) -> Result<BoundingProcess> {
    policy.validate()?;
    bp.snapshot();
    match policy.mode {
        RefineMode::Rounds(rounds) => {
            for _ in 0..rounds {
                let mut next = Vec::with_capacity(bp.cells.len() * 2);
                for cell in std::mem::take(&mut bp.cells) {
                    let (children, pin) = bisect_and_refine(&cell, policy.trigger_coeff, rng)?;
                    bp.pinned.push(pin);
                    next.extend(children);
                }
                bp.cells = next;
                bp.snapshot();
            }
        }
        RefineMode::Tolerance(eps) => {
            for _ in 0..TOLERANCE_BISECTION_CAP {
                // widest envelope gap first; ties to the earliest cell
                let (idx, gap) = bp
                    .cells
                    .iter()
                    .enumerate()
                    .map(|(i, c)| (i, c.envelope_gap()))
                    .fold((0, f64::NEG_INFINITY), |best, cur| {
                        if cur.1 > best.1 { cur } else { best }
                    });
                if gap <= eps {
                    return Ok(bp);
                }
                let cell = bp.cells[idx];
                let (children, pin) = bisect_and_refine(&cell, policy.trigger_coeff, rng)?;
                bp.pinned.push(pin);
                bp.cells.splice(idx..=idx, children);
                bp.snapshot();
            }
            return Err(Error::AttemptCap("tolerance-mode refinement".into()));
        }
    }
    Ok(bp)
}

/// Epsilon-strong simulation of a Brownian motion path from `start` over
/// `[0, horizon]`: endpoint, initial intersection layer, then refinement
/// per the policy.
pub fn eps_strong_bm<R: Rng + ?Sized>(
    horizon: f64,
    start: f64,
    policy: &RefinePolicy,
    rng: &mut R,
) -> Result<BoundingProcess> {
    if !(horizon > 0.0) {
        return Err(Error::Precondition(format!("horizon must be positive, got {horizon}")));
    }
    let y = start + horizon.sqrt() * sample_std_normal(rng);
    let b = BridgeSpec::new(0.0, horizon, start, y)?;
    let seq = LayerSequence::scaled(0.5, horizon)?;
    let root = initial_layer(&b, &seq, rng)?;
    let bp = BoundingProcess {
        cells: vec![root],
        snapshots: Vec::new(),
        pinned: vec![(0.0, start), (horizon, y)],
    };
    run_refinement(bp, policy, rng)
}

/// Epsilon-strong simulation of a diffusion path: an accepted exact
/// skeleton supplies the initial cells.
pub fn eps_strong_from_skeleton<R: Rng + ?Sized>(
    skeleton: &Skeleton,
    policy: &RefinePolicy,
    rng: &mut R,
) -> Result<BoundingProcess> {
    if skeleton.layers().is_empty() {
        return Err(Error::Precondition(
            "skeleton carries no layer records; run an unbounded or adaptive algorithm".into(),
        ));
    }
    let bp = BoundingProcess {
        cells: skeleton.layers().to_vec(),
        snapshots: Vec::new(),
        pinned: skeleton.points().to_vec(),
    };
    run_refinement(bp, policy, rng)
}

/// Epsilon-strong simulation of a jump diffusion: an adaptive jump skeleton
/// (or a bounded one with adaptive inner segments, when a global intensity
/// bound exists) supplies cells that never span a jump time.
pub fn eps_strong_jump_diffusion<R: Rng>(
    m: &DiffusionModel,
    jumps: &JumpSpec,
    policy: &RefinePolicy,
    rng: &mut R,
) -> Result<BoundingProcess> {
    let run = if jumps.global_bound().is_some() {
        run_bjea(m, jumps, InnerAlgorithm::Adaptive, rng)?
    } else {
        run_aujea(m, jumps, rng)?
    };
    eps_strong_from_jump_skeleton(&run.skeleton, policy, rng)
}

/// Build the bounding process from an existing jump skeleton.
pub fn eps_strong_from_jump_skeleton<R: Rng + ?Sized>(
    skeleton: &JumpSkeleton,
    policy: &RefinePolicy,
    rng: &mut R,
) -> Result<BoundingProcess> {
    let cells: Vec<IntersectionLayer> = skeleton.layers().copied().collect();
    if cells.is_empty() {
        return Err(Error::Precondition("jump skeleton carries no layer records".into()));
    }
    let bp = BoundingProcess { cells, snapshots: Vec::new(), pinned: skeleton.pinned_points() };
    run_refinement(bp, policy, rng)
}
