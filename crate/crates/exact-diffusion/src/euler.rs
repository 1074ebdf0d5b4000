//! Euler-Maruyama reference sampler with thinned jumps.
//!
//! This is the approximate scheme the exact algorithms exist to replace; it
//! lives here as a validation oracle (and is exposed through the CLI for
//! the same purpose). Between mesh points the drift is frozen and a jump
//! fires with probability `1 - exp(-lambda dt)`.

use crate::error::{Error, Result};
use crate::model::{DiffusionModel, JumpSpec};
use crate::numeric::sample_std_normal;
use rand::Rng;

/// Terminal summary of one approximate path.
#[derive(Debug, Clone, Copy)]
pub struct EulerOutcome {
    pub terminal: f64,
    pub jump_count: u64,
}

/// One Euler path of the diffusion part only; returns the terminal value.
pub fn euler_terminal<R: Rng>(m: &DiffusionModel, mesh: f64, rng: &mut R) -> Result<f64> {
    Ok(euler_outcome(m, None, mesh, rng)?.terminal)
}

/// One Euler path with thinned jumps; returns terminal value and the number
/// of jumps that fired.
pub fn euler_jump_outcome<R: Rng>(
    m: &DiffusionModel,
    jumps: &JumpSpec,
    mesh: f64,
    rng: &mut R,
) -> Result<EulerOutcome> {
    euler_outcome(m, Some(jumps), mesh, rng)
}

fn euler_outcome<R: Rng>(
    m: &DiffusionModel,
    jumps: Option<&JumpSpec>,
    mesh: f64,
    rng: &mut R,
) -> Result<EulerOutcome> {
    if !(mesh > 0.0) {
        return Err(Error::Precondition(format!("mesh must be positive, got {mesh}")));
    }
    let horizon = m.horizon();
    let steps = (horizon / mesh).ceil() as u64;
    let dt = horizon / steps as f64;
    let sqrt_dt = dt.sqrt();
    let mut x = m.start();
    let mut jump_count = 0;
    for _ in 0..steps {
        let drift = m.drift(x);
        let mut next = x + drift * dt + sqrt_dt * sample_std_normal(rng);
        if let Some(j) = jumps {
            let lam = j.intensity(x).max(0.0);
            if lam > 0.0 && rng.random::<f64>() < -(-lam * dt).exp_m1() {
                next += j.sample_jump(x, rng);
                jump_count += 1;
            }
        }
        x = next;
    }
    Ok(EulerOutcome { terminal: x, jump_count })
}

/// Exact Brownian bridge values on a uniform mesh (sequential conditional
/// draws). Used as the containment oracle for band probabilities: the only
/// approximation is checking the band on the mesh instead of the continuum.
pub fn bridge_mesh_path<R: Rng>(
    s: f64,
    t: f64,
    x: f64,
    y: f64,
    steps: usize,
    rng: &mut R,
) -> Vec<f64> {
    let mut path = Vec::with_capacity(steps + 1);
    path.push(x);
    let dt = (t - s) / steps as f64;
    let mut cur = x;
    for i in 1..steps {
        let q = s + i as f64 * dt;
        let remaining = t - q + dt;
        // bridge step: from (q - dt, cur) toward (t, y)
        let mean = cur + dt * (y - cur) / remaining;
        let var = dt * (remaining - dt) / remaining;
        cur = mean + var.max(0.0).sqrt() * sample_std_normal(rng);
        path.push(cur);
    }
    path.push(y);
    path
}
