// SPDX-License-Identifier: Apache-2.0

//! Closed-form cycle model for a layer on one partition.
//!
//! Folds run back to back: weights and partial sums share the vertical
//! links, so a fold's load cannot overlap the previous fold's drain. Each
//! fold costs its load (`r_f` cycles) plus feed and drain. The formulas
//! agree cycle for cycle with [`PeGrid`](crate::pe_array::PeGrid).

use serde::{Deserialize, Serialize};

use crate::lowering::{lower, plan_folds};
use crate::pe_array::FeedModel;
use crate::workload::LayerShape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldCycles {
    pub load: u64,
    pub feed_drain: u64,
}

impl FoldCycles {
    pub fn total(&self) -> u64 {
        self.load + self.feed_drain
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CycleEstimate {
    pub load_cycles: u64,
    pub feed_drain_cycles: u64,
    pub total: u64,
    pub per_fold: Vec<FoldCycles>,
}

impl CycleEstimate {
    pub fn from_folds(per_fold: Vec<FoldCycles>) -> Self {
        let load_cycles = per_fold.iter().map(|f| f.load).sum();
        let feed_drain_cycles = per_fold.iter().map(|f| f.feed_drain).sum();
        CycleEstimate { load_cycles, feed_drain_cycles, total: load_cycles + feed_drain_cycles, per_fold }
    }
}

/// Phase split of one fold.
///
/// Independent feed: `r_f` load, then `t + r_f + c_f - 1` until the last
/// pixel of the last column drains. Interleaved feed: pixels enter every
/// `n_active` cycles and must first cross the `col_start` upstream columns.
pub fn fold_cycles(r_f: u64, c_f: u64, t: u64, feed: FeedModel, n_active: u64, col_start: u64) -> FoldCycles {
    debug_assert!(r_f >= 1 && c_f >= 1 && t >= 1 && n_active >= 1);
    let feed_drain = match feed {
        FeedModel::Independent => t + r_f + c_f - 1,
        FeedModel::Interleaved => (n_active * (t - 1) + 1) + r_f + c_f + col_start - 1,
    };
    FoldCycles { load: r_f, feed_drain }
}

pub fn cycles_per_fold(r_f: u64, c_f: u64, t: u64, feed: FeedModel, n_active: u64, col_start: u64) -> u64 {
    fold_cycles(r_f, c_f, t, feed, n_active, col_start).total()
}

pub fn layer_cycles(
    layer: &LayerShape,
    part_rows: u64,
    part_cols: u64,
    feed: FeedModel,
    n_active: u64,
    col_start: u64,
) -> CycleEstimate {
    let plan = plan_folds(lower(layer), part_rows, part_cols);
    CycleEstimate::from_folds(
        plan.folds
            .iter()
            .map(|f| fold_cycles(f.rows, f.cols, plan.t, feed, n_active, col_start))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn per_fold_examples() {
        assert_eq!(cycles_per_fold(1, 1, 1, FeedModel::Independent, 1, 0), 3);
        assert_eq!(cycles_per_fold(4, 4, 8, FeedModel::Independent, 1, 0), 19);
        assert_eq!(cycles_per_fold(2, 2, 3, FeedModel::Interleaved, 2, 2), 12);
    }

    #[test]
    fn interleaved_reduces_to_independent() {
        for (r, c, t) in [(1, 1, 1), (3, 5, 7), (8, 2, 16)] {
            assert_eq!(
                cycles_per_fold(r, c, t, FeedModel::Interleaved, 1, 0),
                cycles_per_fold(r, c, t, FeedModel::Independent, 1, 0)
            );
        }
    }

    #[test]
    fn layer_examples() {
        // k=4, m=4, t=8
        let one_fold = LayerShape::conv(4, 2, 1, 2, 2, 3, 3);
        assert_eq!(layer_cycles(&one_fold, 8, 8, FeedModel::Independent, 1, 0).total, 19);

        // k=12, m=2, t=9
        let two_folds = LayerShape::conv(2, 1, 3, 2, 2, 4, 4);
        let est = layer_cycles(&two_folds, 8, 8, FeedModel::Independent, 1, 0);
        assert_eq!(est.per_fold.iter().map(FoldCycles::total).collect::<Vec<_>>(), vec![26, 18]);
        assert_eq!(est.total, 44);
        assert_eq!(est.load_cycles, 12);

        let unit = LayerShape::conv(1, 1, 1, 1, 1, 1, 1);
        assert_eq!(layer_cycles(&unit, 3, 5, FeedModel::Independent, 1, 0).total, 3);
    }
}
