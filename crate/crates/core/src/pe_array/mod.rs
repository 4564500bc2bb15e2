// SPDX-License-Identifier: Apache-2.0

//! Cycle-stepped functional model of a vertically partitioned
//! weight-stationary systolic array.
//!
//! Weights are preloaded down each column (load phase), inputs stream left to
//! right along the rows with a one-cycle skew per row (feed phase), and
//! partial sums flow down the columns and leave at the bottom of the loaded
//! tile (drain phase). Every horizontal value carries the id of the partition
//! it belongs to; a PE multiplies only when that tag matches its own, which
//! is how the per-partition multiplier enable is realized here. Foreign data
//! passes through with the multiplier disconnected.

mod fold;
mod grid;
mod partition;
mod trace;

use std::ops::{Add, Mul};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fold::{FoldJob, FoldRun, InputStream, WeightTile};
pub use grid::{DrainOutput, LoadWord, PeGrid, PeState, Psum, StepInput, TaggedValue, VerticalLink};
pub use partition::{PartId, PartState, Partition};
pub use trace::{write_trace_csv, TraceEvent, TraceKind};

/// Numeric type carried through the array. Any exact integer type works;
/// the default is `i64`.
pub trait Word: Copy + Default + PartialEq + std::fmt::Debug + Add<Output = Self> + Mul<Output = Self> + Send + Sync + 'static {}

impl<T> Word for T where T: Copy + Default + PartialEq + std::fmt::Debug + Add<Output = T> + Mul<Output = T> + Send + Sync + 'static {}

/// How tenants' input streams reach their partitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedModel {
    /// Every partition has its own feed port at its left edge.
    #[default]
    Independent,
    /// All streams enter at the array's left edge. Row links are shared
    /// round-robin between active partitions and foreign data crosses
    /// upstream partitions with the multiplier disabled.
    Interleaved,
}

impl std::str::FromStr for FeedModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "independent" => Ok(FeedModel::Independent),
            "interleaved" => Ok(FeedModel::Interleaved),
            other => Err(format!("unknown feed model `{other}`")),
        }
    }
}

impl std::fmt::Display for FeedModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FeedModel::Independent => "independent",
            FeedModel::Interleaved => "interleaved",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub rows: usize,
    pub cols: usize,
    pub feed_model: FeedModel,
}

impl ArrayConfig {
    pub fn new(rows: usize, cols: usize, feed_model: FeedModel) -> Self {
        ArrayConfig { rows, cols, feed_model }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PeError {
    #[error("array must have at least one row and one column")]
    EmptyArray,
    #[error("partitions {0} and {1} overlap")]
    OverlappingPartitions(PartId, PartId),
    #[error("partition {0} exceeds the array bounds")]
    PartitionOutOfBounds(PartId),
    #[error("partition {0} is not configured on this grid")]
    UnknownPartition(PartId),
    #[error("partition {0} cannot load while its columns carry live partial sums")]
    LoadDuringCompute(PartId),
    #[error("partition {0} received its own feed data while loading")]
    FeedDuringLoad(PartId),
    #[error("partition {0} left load mode before every weight reached its row")]
    IncompleteLoad(PartId),
    #[error("tile {rows}x{cols} does not fit partition {part}")]
    TileTooLarge { part: PartId, rows: usize, cols: usize },
    #[error("malformed fold input: {0}")]
    BadInput(String),
    #[error("two values contend for row {row} at column {col}")]
    LinkConflict { row: usize, col: usize },
    #[error("partial sums misaligned at PE[{row},{col}]: pixel {above} above, {left} from the left")]
    PixelMisalignment { row: usize, col: usize, above: u32, left: u32 },
    #[error("simulation made no progress after {0} cycles")]
    Stalled(u64),
}
