// SPDX-License-Identifier: Apache-2.0

//! GEMM view of a layer and its fold (tile) structure on a partition.
//!
//! A layer lowers im2col-style to `k = C*R*S` reduction rows (mapped onto PE
//! rows), `m = M` output channels (mapped onto PE columns) and `t = N*P*Q`
//! output pixels streamed over time. When the GEMM exceeds the partition it
//! is cut into folds, enumerated k-major: all k-folds of one column group
//! finish before the next column group starts.

use serde::{Deserialize, Serialize};

use crate::workload::LayerShape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GemmDims {
    pub k: u64,
    pub m: u64,
    pub t: u64,
}

pub fn lower(layer: &LayerShape) -> GemmDims {
    GemmDims { k: layer.c * layer.r * layer.s, m: layer.m, t: layer.n * layer.p * layer.q }
}

/// One tile of a fold plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub k_index: u64,
    pub m_index: u64,
    pub k_offset: u64,
    pub m_offset: u64,
    /// Tile rows `r_f`.
    pub rows: u64,
    /// Tile columns `c_f`.
    pub cols: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k_folds: u64,
    pub m_folds: u64,
    pub t: u64,
    pub folds: Vec<Fold>,
}

impl FoldPlan {
    pub fn is_first_k(&self, f: &Fold) -> bool {
        f.k_index == 0
    }

    pub fn is_last_k(&self, f: &Fold) -> bool {
        f.k_index + 1 == self.k_folds
    }
}

/// Tiles `g` onto a `part_rows x part_cols` partition. Edge tiles are
/// truncated.
pub fn plan_folds(g: GemmDims, part_rows: u64, part_cols: u64) -> FoldPlan {
    assert!(part_rows >= 1 && part_cols >= 1, "partition must be at least 1x1");
    let k_folds = g.k.div_ceil(part_rows);
    let m_folds = g.m.div_ceil(part_cols);
    let mut folds = Vec::with_capacity((k_folds * m_folds) as usize);
    for m_index in 0..m_folds {
        let m_offset = m_index * part_cols;
        let cols = part_cols.min(g.m - m_offset);
        for k_index in 0..k_folds {
            let k_offset = k_index * part_rows;
            let rows = part_rows.min(g.k - k_offset);
            folds.push(Fold { k_index, m_index, k_offset, m_offset, rows, cols });
        }
    }
    FoldPlan { k_folds, m_folds, t: g.t, folds }
}

/// Filter tensor laid out `[M][C][R][S]` as a `k x m` weight matrix.
pub fn lower_weights<T: Copy>(shape: &LayerShape, fw: &[T]) -> Vec<Vec<T>> {
    let (c, r, s, m) = (shape.c as usize, shape.r as usize, shape.s as usize, shape.m as usize);
    assert_eq!(fw.len(), m * c * r * s, "filter tensor size");
    let k = c * r * s;
    (0..k)
        .map(|kk| (0..m).map(|mm| fw[mm * k + kk]).collect())
        .collect()
}

/// Input tensor laid out `[N][C][H][W]` as a `k x t` im2col matrix; column
/// `(n*P + p)*Q + q` holds the receptive field of output pixel `(n, p, q)`.
pub fn lower_inputs<T: Copy>(shape: &LayerShape, ifmap: &[T]) -> Vec<Vec<T>> {
    let (n, c, h, w) = (shape.n as usize, shape.c as usize, shape.h as usize, shape.w as usize);
    let (r, s, p, q) = (shape.r as usize, shape.s as usize, shape.p as usize, shape.q as usize);
    assert_eq!(ifmap.len(), n * c * h * w, "input tensor size");
    let mut out = Vec::with_capacity(c * r * s);
    for ci in 0..c {
        for ri in 0..r {
            for si in 0..s {
                let mut row = Vec::with_capacity(n * p * q);
                for ni in 0..n {
                    for pi in 0..p {
                        for qi in 0..q {
                            row.push(ifmap[((ni * c + ci) * h + pi + ri) * w + qi + si]);
                        }
                    }
                }
                out.push(row);
            }
        }
    }
    out
}
