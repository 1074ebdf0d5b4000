//! Command implementations behind the `exact-diffusion` binary: exact
//! simulation runs, epsilon-strong staircases, and the Euler reference
//! sampler, with deterministic outputs under a fixed seed.
//!
//! Replications fan out over a thread pool; replication `i` draws from an
//! independent stream obtained by setting the generator's stream counter to
//! `i` under the master seed, and results are merged by replication index,
//! so outputs are byte-identical regardless of scheduling.

use exact_diffusion::eps_strong::{
    eps_strong_bm, eps_strong_jump_diffusion, RefineMode, RefinePolicy,
};
use exact_diffusion::error::Error;
use exact_diffusion::euler::{euler_jump_outcome, euler_terminal};
use exact_diffusion::exact::{run_auea, run_bea, run_uea, BridgeBackend};
use exact_diffusion::jumps::{run_aujea, run_bjea, run_superposed, run_ujea, InnerAlgorithm, SuperposedInner};
use exact_diffusion::presets::{from_config_file, preset_with, ModelPreset, PresetParams};
use exact_diffusion::record::{staircase_csv, JumpSkeletonRecord, SkeletonRecord};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Environment variable holding the default output directory.
pub const OUT_DIR_ENV: &str = "EXACT_DIFFUSION_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    Bea,
    Uea,
    UeaBessel,
    Auea,
    Bjea,
    Ujea,
    Aujea,
    AujeaSuperposed,
}

impl std::str::FromStr for Algo {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "bea" => Algo::Bea,
            "uea" => Algo::Uea,
            "uea-bessel" => Algo::UeaBessel,
            "auea" => Algo::Auea,
            "bjea" => Algo::Bjea,
            "ujea" => Algo::Ujea,
            "aujea" => Algo::Aujea,
            "aujea-superposed" => Algo::AujeaSuperposed,
            other => {
                return Err(format!(
                    "unknown algorithm `{other}` (expected bea, uea, uea-bessel, auea, bjea, ujea, aujea, aujea-superposed)"
                ))
            }
        })
    }
}

impl Algo {
    fn needs_jumps(&self) -> bool {
        matches!(self, Algo::Bjea | Algo::Ujea | Algo::Aujea | Algo::AujeaSuperposed)
    }
}

/// Common run parameters shared by the subcommands.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: String,
    pub horizon: Option<f64>,
    pub start: Option<f64>,
    pub drift_param: f64,
    pub seed: u64,
    pub reps: u64,
    pub out: PathBuf,
    pub threads: usize,
}

impl RunConfig {
    fn load_model(&self) -> Result<ModelPreset, Error> {
        if self.model.contains('/') || self.model.ends_with(".cfg") {
            if self.horizon.is_some() || self.start.is_some() {
                return Err(Error::Config(
                    "for config-file models, set horizon/x0 in the file instead of flags".into(),
                ));
            }
            return from_config_file(Path::new(&self.model));
        }
        let params = PresetParams {
            horizon: self.horizon,
            start: self.start,
            drift_param: self.drift_param,
            layer_theta: None,
        };
        preset_with(&self.model, &params)
    }

    fn stream(&self, rep: u64) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(rep);
        rng
    }
}

/// Map library errors onto the documented exit codes: 2 for configuration
/// problems, 3 for violated numerical contracts.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Precondition(_) => 2,
        _ => 3,
    }
}

fn ensure_dir(path: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(path)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Error> {
    let mut f = std::fs::File::create(path)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", path.display())))?;
    f.write_all(contents.as_bytes())
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

// Run one closure per replication on a small worker pool, merging results
// by replication index.
fn fan_out<T, F>(reps: u64, threads: usize, job: F) -> Result<Vec<T>, Error>
where
    T: Send,
    F: Fn(u64) -> Result<T, Error> + Sync,
{
    let threads = threads.max(1).min(reps.max(1) as usize);
    let mut slots: Vec<Option<Result<T, Error>>> = (0..reps).map(|_| None).collect();
    let next = std::sync::atomic::AtomicU64::new(0);
    let slots_ref = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let rep = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if rep >= reps {
                    break;
                }
                let out = job(rep);
                let mut guard = slots_ref.lock().unwrap();
                guard[rep as usize] = Some(out);
            });
        }
    });
    slots.into_iter().map(|s| s.expect("every replication filled")).collect()
}

struct SimOutcome {
    record_json: String,
    terminal: f64,
    interior: usize,
    jumps: Option<usize>,
    attempts: u64,
}

/// Run an exact algorithm `reps` times and write skeleton records plus
/// summary statistics.
pub fn cmd_simulate(cfg: &RunConfig, algo: Algo) -> Result<(), Error> {
    let preset = cfg.load_model()?;
    if algo.needs_jumps() && preset.jumps.is_none() {
        return Err(Error::Config(format!(
            "algorithm requires a jump specification but model `{}` has none",
            preset.name
        )));
    }
    ensure_dir(&cfg.out)?;
    let model_name = preset.name.clone();
    let outcomes = fan_out(cfg.reps, cfg.threads, |rep| {
        let mut rng = cfg.stream(rep);
        let preset = &preset;
        match algo {
            Algo::Bea | Algo::Uea | Algo::UeaBessel | Algo::Auea => {
                let run = match algo {
                    Algo::Bea => run_bea(&preset.model, &mut rng)?,
                    Algo::Uea => run_uea(&preset.model, BridgeBackend::Intersection, &mut rng)?,
                    Algo::UeaBessel => run_uea(&preset.model, BridgeBackend::Bessel, &mut rng)?,
                    _ => run_auea(&preset.model, &mut rng)?,
                };
                let rec = SkeletonRecord::new(&model_name, cfg.seed, rep, run.skeleton);
                Ok(SimOutcome {
                    record_json: serde_json::to_string(&rec)
                        .map_err(|e| Error::Internal(e.to_string()))?,
                    terminal: rec_terminal(&rec),
                    interior: rec.skeleton.interior_count(),
                    jumps: None,
                    attempts: run.attempts,
                })
            }
            Algo::Bjea | Algo::Ujea | Algo::Aujea | Algo::AujeaSuperposed => {
                let j = preset.jumps.as_ref().unwrap();
                let run = match algo {
                    Algo::Bjea => run_bjea(&preset.model, j, InnerAlgorithm::Adaptive, &mut rng)?,
                    Algo::Ujea => run_ujea(&preset.model, j, &mut rng)?,
                    Algo::Aujea => run_aujea(&preset.model, j, &mut rng)?,
                    _ => run_superposed(&preset.model, j, SuperposedInner::Adaptive, &mut rng)?,
                };
                let interior: usize =
                    run.skeleton.segments().iter().map(|s| s.interior_count()).sum();
                let jumps = run.skeleton.jump_count();
                let terminal = run.skeleton.terminal_value();
                let rec = JumpSkeletonRecord::new(&model_name, cfg.seed, rep, run.skeleton);
                Ok(SimOutcome {
                    record_json: serde_json::to_string(&rec)
                        .map_err(|e| Error::Internal(e.to_string()))?,
                    terminal,
                    interior,
                    jumps: Some(jumps),
                    attempts: run.attempts,
                })
            }
        }
    })?;

    let mut jsonl = String::new();
    for o in &outcomes {
        jsonl.push_str(&o.record_json);
        jsonl.push('\n');
    }
    write_file(&cfg.out.join("skeletons.jsonl"), &jsonl)?;

    let n = outcomes.len() as f64;
    let terminals: Vec<f64> = outcomes.iter().map(|o| o.terminal).collect();
    let mean = terminals.iter().sum::<f64>() / n;
    let var = terminals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    let total_attempts: u64 = outcomes.iter().map(|o| o.attempts).sum();
    let mean_interior =
        outcomes.iter().map(|o| o.interior as f64).sum::<f64>() / n;
    let mut summary = String::from("metric,value\n");
    summary.push_str(&format!("replications,{}\n", outcomes.len()));
    summary.push_str(&format!("acceptance_rate,{}\n", n / total_attempts as f64));
    summary.push_str(&format!("terminal_mean,{mean}\n"));
    summary.push_str(&format!("terminal_var,{var}\n"));
    summary.push_str(&format!("mean_interior_points,{mean_interior}\n"));
    if outcomes.iter().all(|o| o.jumps.is_some()) {
        let mean_jumps = outcomes.iter().map(|o| o.jumps.unwrap() as f64).sum::<f64>() / n;
        summary.push_str(&format!("mean_jump_count,{mean_jumps}\n"));
    }
    write_file(&cfg.out.join("summary.csv"), &summary)?;

    // interior-point count distribution
    let max_k = outcomes.iter().map(|o| o.interior).max().unwrap_or(0);
    let mut hist = vec![0u64; max_k + 1];
    for o in &outcomes {
        hist[o.interior] += 1;
    }
    let mut hist_csv = String::from("interior_points,count\n");
    for (k, c) in hist.iter().enumerate() {
        hist_csv.push_str(&format!("{k},{c}\n"));
    }
    write_file(&cfg.out.join("interior_hist.csv"), &hist_csv)?;
    Ok(())
}

fn rec_terminal(rec: &SkeletonRecord) -> f64 {
    rec.skeleton.terminal_value()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpsTarget {
    BrownianMotion,
    JumpDiffusion,
}

/// Epsilon-strong runs: staircase histories per replication and a
/// convergence table over rounds.
pub fn cmd_epsstrong(
    cfg: &RunConfig,
    target: EpsTarget,
    rounds: Option<u32>,
    epsilon: Option<f64>,
) -> Result<(), Error> {
    let policy = match (rounds, epsilon) {
        (Some(_), Some(_)) => {
            return Err(Error::Config("choose either --rounds or --epsilon, not both".into()))
        }
        (Some(n), None) => RefinePolicy::rounds(n),
        (None, Some(e)) => RefinePolicy::tolerance(e),
        (None, None) => RefinePolicy::rounds(6),
    };
    let preset = match target {
        EpsTarget::BrownianMotion => None,
        EpsTarget::JumpDiffusion => {
            let p = cfg.load_model()?;
            if p.jumps.is_none() {
                return Err(Error::Config(format!(
                    "epsilon-strong jump simulation needs a jump model, `{}` has none",
                    p.name
                )));
            }
            Some(p)
        }
    };
    ensure_dir(&cfg.out)?;

    let horizon = cfg.horizon.unwrap_or_else(|| {
        preset.as_ref().map(|p| p.model.horizon()).unwrap_or(1.0)
    });
    let start = cfg.start.unwrap_or_else(|| {
        preset.as_ref().map(|p| p.model.start()).unwrap_or(0.0)
    });

    let results = fan_out(cfg.reps, cfg.threads, |rep| {
        let mut rng = cfg.stream(rep);
        let bp = match &preset {
            None => eps_strong_bm(horizon, start, &policy, &mut rng)?,
            Some(p) => {
                eps_strong_jump_diffusion(&p.model, p.jumps.as_ref().unwrap(), &policy, &mut rng)?
            }
        };
        Ok((bp.snapshots().to_vec(), bp.sup_gap(), bp.l1_gap(), bp.cells().len()))
    })?;

    // staircase histories, one file block per replication
    let mut stairs = String::from("rep,s,t,lower,upper,round\n");
    for (rep, (snaps, _, _, _)) in results.iter().enumerate() {
        let body = staircase_csv(snaps);
        for line in body.lines().skip(1) {
            stairs.push_str(&format!("{rep},{line}\n"));
        }
    }
    write_file(&cfg.out.join("staircases.csv"), &stairs)?;

    // convergence table over rounds (meaningful for the rounds mode, where
    // snapshot index == round)
    if let RefineMode::Rounds(r) = policy.mode {
        let mut table = String::from("round,mean_sup_gap,mean_l1_gap,scaled_l1\n");
        for round in 0..=(r as usize) {
            let mut sup = 0.0;
            let mut l1 = 0.0;
            for (snaps, _, _, _) in &results {
                let snap = &snaps[round.min(snaps.len() - 1)];
                sup += snap.iter().map(|c| c.upper - c.lower).fold(0.0, f64::max);
                l1 += snap.iter().map(|c| (c.upper - c.lower) * (c.t - c.s)).sum::<f64>();
            }
            let n = results.len() as f64;
            let scale = (2.0f64).powf(round as f64 / 2.0);
            table.push_str(&format!(
                "{round},{},{},{}\n",
                sup / n,
                l1 / n,
                scale * l1 / n
            ));
        }
        write_file(&cfg.out.join("convergence.csv"), &table)?;
    }

    let mut summary = String::from("metric,value\n");
    let n = results.len() as f64;
    summary.push_str(&format!("replications,{}\n", results.len()));
    summary.push_str(&format!(
        "mean_sup_gap,{}\n",
        results.iter().map(|r| r.1).sum::<f64>() / n
    ));
    summary.push_str(&format!(
        "mean_l1_gap,{}\n",
        results.iter().map(|r| r.2).sum::<f64>() / n
    ));
    summary.push_str(&format!(
        "mean_cells,{}\n",
        results.iter().map(|r| r.3 as f64).sum::<f64>() / n
    ));
    write_file(&cfg.out.join("summary.csv"), &summary)?;
    Ok(())
}

/// Euler reference sampler (approximate, for validation): terminal samples
/// and moments.
pub fn cmd_oracle(cfg: &RunConfig, mesh: f64) -> Result<(), Error> {
    let preset = cfg.load_model()?;
    ensure_dir(&cfg.out)?;
    let rows = fan_out(cfg.reps, cfg.threads, |rep| {
        let mut rng = cfg.stream(rep);
        match &preset.jumps {
            Some(j) => {
                let o = euler_jump_outcome(&preset.model, j, mesh, &mut rng)?;
                Ok((o.terminal, o.jump_count))
            }
            None => Ok((euler_terminal(&preset.model, mesh, &mut rng)?, 0)),
        }
    })?;
    let mut csv = String::from("rep,terminal,jumps\n");
    for (rep, (term, jumps)) in rows.iter().enumerate() {
        csv.push_str(&format!("{rep},{term},{jumps}\n"));
    }
    write_file(&cfg.out.join("euler_samples.csv"), &csv)?;

    let n = rows.len() as f64;
    let mean = rows.iter().map(|r| r.0).sum::<f64>() / n;
    let var = rows.iter().map(|r| (r.0 - mean) * (r.0 - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    let mut summary = String::from("metric,value\n");
    summary.push_str(&format!("replications,{}\n", rows.len()));
    summary.push_str(&format!("mesh,{mesh}\n"));
    summary.push_str(&format!("terminal_mean,{mean}\n"));
    summary.push_str(&format!("terminal_var,{var}\n"));
    summary.push_str(&format!(
        "mean_jump_count,{}\n",
        rows.iter().map(|r| r.1 as f64).sum::<f64>() / n
    ));
    summary.push_str("note,approximate reference sampler (discretisation bias)\n");
    write_file(&cfg.out.join("summary.csv"), &summary)?;
    Ok(())
}
