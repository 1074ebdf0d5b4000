//! Built-in example models with exact coefficients, bounds and endpoint
//! envelopes wired in, plus a small key/value config loader for them.
//!
//! `app1` is a mean-reverting jump diffusion with globally bounded jump
//! intensity (drift `-x`, intensity `sin(x) v 0`, Gaussian jumps pulled
//! toward the origin, started at 2 over horizon 5). `app2` has periodic
//! drift and state-dependent unbounded intensity (drift `sin(x)`, intensity
//! `x^2`, uniform jumps toward the origin, started at 0 over horizon 2).
//! The diffusion parts are also available standalone as `ou` and `sin`,
//! next to `zero` and `const`.

use crate::brownian::GaussianProposal;
use crate::error::{Error, Result};
use crate::model::{DiffusionModel, DiffusionModelBuilder, IntensityBound, JumpSpec};
use crate::numeric::sample_std_normal;

/// A named model: the unit-volatility diffusion and an optional jump part.
pub struct ModelPreset {
    pub name: String,
    pub model: DiffusionModel,
    pub jumps: Option<JumpSpec>,
}

/// Parameters a config file may override.
#[derive(Debug, Clone)]
pub struct PresetParams {
    pub horizon: Option<f64>,
    pub start: Option<f64>,
    pub drift_param: f64,
    pub layer_theta: Option<f64>,
}

impl Default for PresetParams {
    fn default() -> Self {
        PresetParams { horizon: None, start: None, drift_param: 1.0, layer_theta: None }
    }
}

impl PresetParams {
    fn builder(&self, default_horizon: f64, default_start: f64) -> DiffusionModelBuilder {
        let mut b = DiffusionModel::builder(
            self.horizon.unwrap_or(default_horizon),
            self.start.unwrap_or(default_start),
        );
        if let Some(theta) = self.layer_theta {
            b = b.layer_theta(theta);
        }
        b
    }
}

fn zero_model(p: &PresetParams) -> Result<DiffusionModel> {
    p.builder(1.0, 0.0)
        .drift(|_| 0.0)
        .drift_deriv(|_| 0.0)
        .drift_integral(|_| 0.0)
        .phi(|_| 0.0)
        .phi_bounds(|_, _| (0.0, 0.0))
        .global_phi_bounds(0.0, 0.0)
        .endpoint_proposal(|x, dt| GaussianProposal { mean: x, variance: dt, log_bound: 0.0 })
        .build()
}

fn const_model(p: &PresetParams) -> Result<DiffusionModel> {
    let c = p.drift_param;
    p.builder(1.0, 0.0)
        .drift(move |_| c)
        .drift_deriv(|_| 0.0)
        .drift_integral(move |u| c * u)
        .phi(move |_| c * c / 2.0)
        .phi_bounds(move |_, _| (c * c / 2.0, c * c / 2.0))
        .global_phi_bounds(c * c / 2.0, c * c / 2.0)
        .endpoint_proposal(move |x, dt| GaussianProposal {
            mean: x + c * dt,
            variance: dt,
            // the conjugate proposal makes the ratio constant
            log_bound: c * x + c * c * dt / 2.0 + 1e-12,
        })
        .build()
}

fn ou_model(p: &PresetParams, default_horizon: f64, default_start: f64, rate: f64) -> Result<DiffusionModel> {
    if !(rate > 0.0) {
        return Err(Error::Config(format!("mean-reversion rate must be positive, got {rate}")));
    }
    p.builder(default_horizon, default_start)
        .drift(move |x| -rate * x)
        .drift_deriv(move |_| -rate)
        .drift_integral(move |u| -rate * u * u / 2.0)
        .phi(move |x| (rate * rate * x * x - rate) / 2.0)
        .phi_bounds(move |lo, hi| {
            let edge = lo.abs().max(hi.abs());
            let lower = if lo <= 0.0 && 0.0 <= hi {
                -rate / 2.0
            } else {
                (rate * rate * lo.abs().min(hi.abs()).powi(2) - rate) / 2.0
            };
            (lower, (rate * rate * edge * edge - rate) / 2.0)
        })
        .endpoint_proposal(move |x, dt| {
            // exp{-rate y^2/2 - (y-x)^2/(2 dt)} is conjugate Gaussian
            let var = dt / (1.0 + rate * dt);
            let mean = x / (1.0 + rate * dt);
            let bound = -rate * mean * mean / 2.0 - (mean - x).powi(2) / (2.0 * dt);
            GaussianProposal { mean, variance: var, log_bound: bound + 1e-12 }
        })
        .build()
}

fn sin_model(p: &PresetParams, default_horizon: f64, default_start: f64) -> Result<DiffusionModel> {
    p.builder(default_horizon, default_start)
        .drift(|x| x.sin())
        .drift_deriv(|x| x.cos())
        .drift_integral(|u| 1.0 - u.cos())
        .phi(|x| (x.sin().powi(2) + x.cos()) / 2.0)
        // phi is globally confined to [-1/2, 5/8]
        .phi_bounds(|_, _| (-0.5, 0.625))
        .global_phi_bounds(-0.5, 0.625)
        .endpoint_proposal(|x, dt| GaussianProposal {
            mean: x,
            variance: dt,
            // A(y) = 1 - cos y <= 2 bounds the tilt of the plain kernel
            log_bound: 2.0,
        })
        .build()
}

fn app1_jumps() -> JumpSpec {
    // intensity sin(x) clamped at zero (an intensity must be nonnegative),
    // globally bounded by 1; jump sizes N(-x/2, 1)
    JumpSpec::new(
        |x| x.sin().max(0.0),
        IntensityBound::Global(1.0),
        |x, rng| -x / 2.0 + sample_std_normal(rng),
    )
}

fn app2_jumps() -> JumpSpec {
    // intensity x^2 with layer bound max(lo^2, hi^2); jumps uniform between
    // -x and 0 (toward the origin)
    JumpSpec::new(
        |x| x * x,
        IntensityBound::Layer(Box::new(|lo, hi| (lo * lo).max(hi * hi))),
        |x, rng| {
            let (lo, hi) = ((-x).min(0.0), (-x).max(0.0));
            lo + (hi - lo) * rand::Rng::random::<f64>(rng)
        },
    )
}

/// Construct a named preset. Recognised names: `zero`, `const`, `ou`,
/// `sin`, `app1` (mean-reverting jump diffusion, bounded intensity),
/// `app2` (periodic drift, unbounded intensity).
pub fn preset_with(name: &str, params: &PresetParams) -> Result<ModelPreset> {
    let (model, jumps) = match name {
        "zero" => (zero_model(params)?, None),
        "const" => (const_model(params)?, None),
        "ou" => (ou_model(params, 1.0, 0.0, params.drift_param)?, None),
        "sin" => (sin_model(params, 1.0, 0.0)?, None),
        "app1" => (ou_model(params, 5.0, 2.0, 1.0)?, Some(app1_jumps())),
        "app2" => (sin_model(params, 2.0, 0.0)?, Some(app2_jumps())),
        other => {
            return Err(Error::Config(format!(
                "unknown model `{other}` (expected zero, const, ou, sin, app1, app2, or a config path)"
            )))
        }
    };
    Ok(ModelPreset { name: name.to_string(), model, jumps })
}

/// Construct a named preset with default parameters.
pub fn preset(name: &str) -> Result<ModelPreset> {
    preset_with(name, &PresetParams::default())
}

/// Parse a declarative model config: `key = value` lines with `#` comments.
///
/// Keys: `model` (required), `horizon`, `x0`, `drift_param`, `layer_theta`.
pub fn from_config_str(text: &str) -> Result<ModelPreset> {
    let mut name: Option<String> = None;
    let mut params = PresetParams::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected `key = value`, got `{line}`", lineno + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        let parse = |v: &str| -> Result<f64> {
            v.parse::<f64>()
                .map_err(|_| Error::Config(format!("line {}: bad number `{v}`", lineno + 1)))
        };
        match key {
            "model" | "drift" => name = Some(value.to_string()),
            "horizon" => params.horizon = Some(parse(value)?),
            "x0" | "start" => params.start = Some(parse(value)?),
            "drift_param" => params.drift_param = parse(value)?,
            "layer_theta" => params.layer_theta = Some(parse(value)?),
            other => {
                return Err(Error::Config(format!("line {}: unknown key `{other}`", lineno + 1)))
            }
        }
    }
    let name = name.ok_or_else(|| Error::Config("config is missing `model = ...`".into()))?;
    preset_with(&name, &params)
}

/// Load a model config from a file path.
pub fn from_config_file(path: &std::path::Path) -> Result<ModelPreset> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    from_config_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_jump_spec, validate_model};

    #[test]
    fn builtin_models_validate() {
        for name in ["zero", "const", "ou", "sin", "app1", "app2"] {
            let p = preset(name).unwrap();
            let report = validate_model(&p.model, 3.0);
            assert!(report.all_passed(), "{name}:\n{report}");
            if let Some(j) = &p.jumps {
                let jr = validate_jump_spec(j, p.model.start(), 3.0);
                assert!(jr.all_passed(), "{name} jumps:\n{jr}");
            }
        }
    }

    #[test]
    fn config_roundtrip() {
        let p =
            from_config_str("model = ou\nhorizon = 2.5\nx0 = 1.0\ndrift_param = 0.7\n").unwrap();
        assert_eq!(p.model.horizon(), 2.5);
        assert_eq!(p.model.start(), 1.0);
        assert!((p.model.drift(1.0) + 0.7).abs() < 1e-12);
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(from_config_str("model = ou\nfoo = 1\n").is_err());
        assert!(from_config_str("horizon = 1\n").is_err());
    }
}
