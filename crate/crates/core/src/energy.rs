// SPDX-License-Identifier: Apache-2.0

//! Activity counting and energy aggregation.
//!
//! Every fold is summarized as a set of event tallies; energy is the dot
//! product of the tallies with a per-event energy table. Unit energies are
//! configuration. Arithmetic is fixed point in thousandths of a picojoule,
//! so sums are exact and additive.

use std::collections::BTreeMap;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Sub};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lowering::{plan_folds, FoldPlan};
use crate::pe_array::FeedModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ActivityCounts {
    pub mac_ops: u64,
    pub lr_writes: u64,
    /// Horizontal forwards through PEs whose multiplier is disabled.
    pub pass_hops: u64,
    pub feed_reads: u64,
    pub load_reads: u64,
    pub drain_writes: u64,
    /// Read-modify-write of partial sums carried across k-folds.
    pub drain_rmw: u64,
    pub dram_reads: u64,
    pub dram_writes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivityClass {
    MacOps,
    LrWrites,
    PassHops,
    FeedReads,
    LoadReads,
    DrainWrites,
    DrainRmw,
    DramReads,
    DramWrites,
}

impl ActivityClass {
    pub const ALL: [ActivityClass; 9] = [
        ActivityClass::MacOps,
        ActivityClass::LrWrites,
        ActivityClass::PassHops,
        ActivityClass::FeedReads,
        ActivityClass::LoadReads,
        ActivityClass::DrainWrites,
        ActivityClass::DrainRmw,
        ActivityClass::DramReads,
        ActivityClass::DramWrites,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActivityClass::MacOps => "mac_ops",
            ActivityClass::LrWrites => "lr_writes",
            ActivityClass::PassHops => "pass_hops",
            ActivityClass::FeedReads => "feed_reads",
            ActivityClass::LoadReads => "load_reads",
            ActivityClass::DrainWrites => "drain_writes",
            ActivityClass::DrainRmw => "drain_rmw",
            ActivityClass::DramReads => "dram_reads",
            ActivityClass::DramWrites => "dram_writes",
        }
    }
}

impl fmt::Display for ActivityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivityClass {
    type Err = EnergyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ActivityClass::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| EnergyError::UnknownClass(s.to_string()))
    }
}

impl ActivityCounts {
    pub fn get(&self, class: ActivityClass) -> u64 {
        match class {
            ActivityClass::MacOps => self.mac_ops,
            ActivityClass::LrWrites => self.lr_writes,
            ActivityClass::PassHops => self.pass_hops,
            ActivityClass::FeedReads => self.feed_reads,
            ActivityClass::LoadReads => self.load_reads,
            ActivityClass::DrainWrites => self.drain_writes,
            ActivityClass::DrainRmw => self.drain_rmw,
            ActivityClass::DramReads => self.dram_reads,
            ActivityClass::DramWrites => self.dram_writes,
        }
    }

    fn zip(self, o: Self, f: impl Fn(u64, u64) -> u64) -> Self {
        ActivityCounts {
            mac_ops: f(self.mac_ops, o.mac_ops),
            lr_writes: f(self.lr_writes, o.lr_writes),
            pass_hops: f(self.pass_hops, o.pass_hops),
            feed_reads: f(self.feed_reads, o.feed_reads),
            load_reads: f(self.load_reads, o.load_reads),
            drain_writes: f(self.drain_writes, o.drain_writes),
            drain_rmw: f(self.drain_rmw, o.drain_rmw),
            dram_reads: f(self.dram_reads, o.dram_reads),
            dram_writes: f(self.dram_writes, o.dram_writes),
        }
    }
}

impl Add for ActivityCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        self.zip(o, |a, b| a + b)
    }
}

impl AddAssign for ActivityCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl Sub for ActivityCounts {
    type Output = Self;

    fn sub(self, o: Self) -> Self {
        self.zip(o, |a, b| a - b)
    }
}

impl Sum for ActivityCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(ActivityCounts::default(), Add::add)
    }
}

/// Where a fold sits in its layer, which decides the buffer and DRAM
/// traffic it causes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FoldTouch {
    /// First column group: the input tile comes from DRAM.
    pub inputs_first: bool,
    /// Not the first k-fold: outputs are added to stored partial sums.
    pub accumulate: bool,
    /// Last k-fold: finished outputs go back to DRAM.
    pub outputs_final: bool,
}

impl FoldTouch {
    /// A layer that fits in a single fold.
    pub const SOLE: FoldTouch = FoldTouch { inputs_first: true, accumulate: false, outputs_final: true };

    pub fn of(plan: &FoldPlan, fold: &crate::lowering::Fold) -> Self {
        FoldTouch {
            inputs_first: fold.m_index == 0,
            accumulate: !plan.is_first_k(fold),
            outputs_final: plan.is_last_k(fold),
        }
    }
}

/// Closed-form tallies for a fold that is alone in its layer.
pub fn count_fold_activities(r_f: u64, c_f: u64, t: u64, feed: FeedModel, upstream_cols: u64) -> ActivityCounts {
    count_fold_activities_at(r_f, c_f, t, feed, upstream_cols, FoldTouch::SOLE)
}

pub fn count_fold_activities_at(
    r_f: u64,
    c_f: u64,
    t: u64,
    feed: FeedModel,
    upstream_cols: u64,
    touch: FoldTouch,
) -> ActivityCounts {
    let pass_hops = match feed {
        FeedModel::Independent => 0,
        FeedModel::Interleaved => t * r_f * upstream_cols,
    };
    ActivityCounts {
        mac_ops: r_f * c_f * t,
        lr_writes: r_f * c_f,
        pass_hops,
        feed_reads: r_f * t,
        load_reads: r_f * c_f,
        drain_writes: c_f * t,
        drain_rmw: if touch.accumulate { c_f * t } else { 0 },
        dram_reads: r_f * c_f + if touch.inputs_first { r_f * t } else { 0 },
        dram_writes: if touch.outputs_final { c_f * t } else { 0 },
    }
}

/// Sum over every fold of `layer` on a `part_rows x part_cols` partition.
pub fn layer_activities(
    layer: &crate::workload::LayerShape,
    part_rows: u64,
    part_cols: u64,
    feed: FeedModel,
    col_start: u64,
) -> ActivityCounts {
    let plan = plan_folds(crate::lowering::lower(layer), part_rows, part_cols);
    plan.folds
        .iter()
        .map(|f| count_fold_activities_at(f.rows, f.cols, plan.t, feed, col_start, FoldTouch::of(&plan, f)))
        .sum()
}

/// Energy in thousandths of a picojoule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Energy(pub u128);

impl Energy {
    pub fn millipicojoules(self) -> u128 {
        self.0
    }

    pub fn picojoules(self) -> f64 {
        self.0 as f64 / 1000.0
    }
}

impl Add for Energy {
    type Output = Energy;

    fn add(self, o: Energy) -> Energy {
        Energy(self.0 + o.0)
    }
}

impl Sum for Energy {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Energy::default(), Add::add)
    }
}

impl fmt::Display for Energy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:03} pJ", self.0 / 1000, self.0 % 1000)
    }
}

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("energy table has no entry for `{0}`")]
    MissingTableEntry(ActivityClass),
    #[error("unknown activity class `{0}`")]
    UnknownClass(String),
    #[error("energy for `{0}` must be a finite non-negative number")]
    InvalidEntry(String),
    #[error("malformed energy table: {0}")]
    Parse(String),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableMetadata {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub description: String,
}

/// Unit energy per activity class, stored in thousandths of a picojoule.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EnergyTable {
    pub metadata: TableMetadata,
    units: BTreeMap<ActivityClass, u64>,
}

const ILLUSTRATIVE_TABLE: &str = include_str!("../data/energy_illustrative.json");

impl EnergyTable {
    pub fn new(metadata: TableMetadata) -> Self {
        EnergyTable { metadata, units: BTreeMap::new() }
    }

    /// The shipped example table. Its values are illustrative only.
    pub fn illustrative() -> Self {
        EnergyTable::from_json(ILLUSTRATIVE_TABLE).expect("shipped energy table parses")
    }

    /// Sets the unit energy, rounded to the nearest thousandth of a pJ.
    pub fn set(&mut self, class: ActivityClass, picojoules: f64) -> Result<(), EnergyError> {
        if !picojoules.is_finite() || picojoules < 0.0 {
            return Err(EnergyError::InvalidEntry(class.to_string()));
        }
        self.units.insert(class, (picojoules * 1000.0).round() as u64);
        Ok(())
    }

    pub fn with(mut self, class: ActivityClass, picojoules: f64) -> Self {
        self.set(class, picojoules).expect("valid unit energy");
        self
    }

    pub fn unit_millipicojoules(&self, class: ActivityClass) -> Option<u64> {
        self.units.get(&class).copied()
    }

    pub fn check_complete(&self) -> Result<(), EnergyError> {
        match ActivityClass::ALL.into_iter().find(|c| !self.units.contains_key(c)) {
            Some(c) => Err(EnergyError::MissingTableEntry(c)),
            None => Ok(()),
        }
    }

    /// A JSON object mapping class names to pJ/event, plus an optional
    /// `metadata` object.
    pub fn from_json(text: &str) -> Result<Self, EnergyError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| EnergyError::Parse(e.to_string()))?;
        let obj = value.as_object().ok_or_else(|| EnergyError::Parse("expected a JSON object".into()))?;
        let mut table = EnergyTable::default();
        for (key, v) in obj {
            if key == "metadata" {
                table.metadata = serde_json::from_value(v.clone()).map_err(|e| EnergyError::Parse(e.to_string()))?;
                continue;
            }
            let class: ActivityClass = key.parse()?;
            let pj = v.as_f64().ok_or_else(|| EnergyError::InvalidEntry(key.clone()))?;
            table.set(class, pj)?;
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EnergyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| EnergyError::Io { path: path.display().to_string(), source })?;
        EnergyTable::from_json(&text)
    }
}

/// `sum(count * unit)` over every class.
pub fn energy_of(counts: &ActivityCounts, table: &EnergyTable) -> Result<Energy, EnergyError> {
    ActivityClass::ALL
        .into_iter()
        .map(|c| {
            let unit = table.unit_millipicojoules(c).ok_or(EnergyError::MissingTableEntry(c))?;
            Ok(Energy(counts.get(c) as u128 * unit as u128))
        })
        .sum()
}
