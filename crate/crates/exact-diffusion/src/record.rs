//! Serialisable run records: versioned JSON documents for skeletons and a
//! CSV layout for staircases. Records are deterministic byte-for-byte for a
//! fixed seed, which the CLI relies on for reproducibility checks.

use crate::eps_strong::StairCell;
use crate::exact::Skeleton;
use crate::jumps::JumpSkeleton;
use serde::{Deserialize, Serialize};

pub const RECORD_VERSION: u32 = 1;

/// A diffusion skeleton with reproducibility metadata.
#[derive(Debug, Serialize, Deserialize)]
pub struct SkeletonRecord {
    pub version: u32,
    pub model: String,
    pub seed: u64,
    pub replication: u64,
    pub skeleton: Skeleton,
}

impl SkeletonRecord {
    pub fn new(model: &str, seed: u64, replication: u64, skeleton: Skeleton) -> Self {
        SkeletonRecord {
            version: RECORD_VERSION,
            model: model.to_string(),
            seed,
            replication,
            skeleton,
        }
    }
}

/// A jump-diffusion skeleton with reproducibility metadata.
#[derive(Debug, Serialize, Deserialize)]
pub struct JumpSkeletonRecord {
    pub version: u32,
    pub model: String,
    pub seed: u64,
    pub replication: u64,
    pub skeleton: JumpSkeleton,
}

impl JumpSkeletonRecord {
    pub fn new(model: &str, seed: u64, replication: u64, skeleton: JumpSkeleton) -> Self {
        JumpSkeletonRecord {
            version: RECORD_VERSION,
            model: model.to_string(),
            seed,
            replication,
            skeleton,
        }
    }
}

/// Staircase history as CSV: one row per cell per recorded round.
pub fn staircase_csv(snapshots: &[Vec<StairCell>]) -> String {
    let mut out = String::from("s,t,lower,upper,round\n");
    for (round, snap) in snapshots.iter().enumerate() {
        for c in snap {
            out.push_str(&format!("{},{},{},{},{round}\n", c.s, c.t, c.lower, c.upper));
        }
    }
    out
}
