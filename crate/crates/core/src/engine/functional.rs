// SPDX-License-Identifier: Apache-2.0

//! Layer execution on the cycle-stepped array with synthetic tensors.

use std::error::Error as StdError;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::EngineError;
use crate::energy::ActivityCounts;
use crate::lowering::{lower, lower_inputs, lower_weights, plan_folds};
use crate::pe_array::{ArrayConfig, FeedModel, InputStream, PartId, Partition, PeGrid, WeightTile};
use crate::scheduler::{LayerExecution, LayerExecutor, LayerJob};
use crate::timing::{CycleEstimate, FoldCycles};
use crate::workload::{LayerRef, LayerShape};

/// Largest synthetic tensor magnitude.
pub const SYNTH_MAX: i64 = 7;

const OWN: PartId = PartId(1);
const UPSTREAM: PartId = PartId(0);

/// Synthetic filter `[M][C][R][S]` and input `[N][C][H][W]` for one layer,
/// drawn from a generator keyed by `seed` and the layer's identity.
pub fn synthetic_tensors(seed: u64, layer: &LayerRef, shape: &LayerShape) -> (Vec<i64>, Vec<i64>) {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(layer.dnn_id.as_bytes());
    h.update((layer.layer_index as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
    let fw_len = (shape.m * shape.c * shape.r * shape.s) as usize;
    let if_len = (shape.n * shape.c * shape.h * shape.w) as usize;
    let mut draw = |n: usize| (0..n).map(|_| rng.gen_range(-SYNTH_MAX..=SYNTH_MAX)).collect::<Vec<i64>>();
    let fw = draw(fw_len);
    let ifmap = draw(if_len);
    (fw, ifmap)
}

/// Direct convolution, `out[m][t]` with `t = (n*P + p)*Q + q`.
pub fn reference_output(shape: &LayerShape, fw: &[i64], ifmap: &[i64]) -> Vec<Vec<i64>> {
    let (m_, n_, c_, r_, s_) = (shape.m as usize, shape.n as usize, shape.c as usize, shape.r as usize, shape.s as usize);
    let (h_, w_, p_, q_) = (shape.h as usize, shape.w as usize, shape.p as usize, shape.q as usize);
    let mut out = vec![vec![0i64; n_ * p_ * q_]; m_];
    for (m, row) in out.iter_mut().enumerate() {
        for n in 0..n_ {
            for p in 0..p_ {
                for q in 0..q_ {
                    let mut acc = 0;
                    for c in 0..c_ {
                        for r in 0..r_ {
                            for s in 0..s_ {
                                let wv = fw[((m * c_ + c) * r_ + r) * s_ + s];
                                let iv = ifmap[((n * c_ + c) * h_ + p + r) * w_ + q + s];
                                acc += wv * iv;
                            }
                        }
                    }
                    row[(n * p_ + p) * q_ + q] = acc;
                }
            }
        }
    }
    out
}

/// Runs every fold of a layer on a [`PeGrid`] and checks the result against
/// [`reference_output`].
///
/// The grid holds the layer's partition and, in interleaved mode, one
/// unloaded partition covering the `col_start` columns its inputs must
/// cross. Other tenants' streams are not simulated: their effect is the
/// feed stride of `n_active`.
#[derive(Debug, Clone, Default)]
pub struct FunctionalExecutor {
    pub seed: u64,
    /// Folds executed so far, across all layers.
    pub folds_run: u64,
}

impl FunctionalExecutor {
    pub fn new(seed: u64) -> Self {
        FunctionalExecutor { seed, folds_run: 0 }
    }

    fn run(&mut self, job: &LayerJob<'_>) -> Result<LayerExecution, EngineError> {
        let shape = job.shape;
        let (fw, ifmap) = synthetic_tensors(self.seed, job.layer, shape);
        let weights = lower_weights(shape, &fw);
        let inputs = lower_inputs(shape, &ifmap);
        let plan = plan_folds(lower(shape), job.part_rows, job.part_cols);

        let rows = job.part_rows as usize;
        let width = job.part_cols as usize;
        let (upstream, stride) = match job.feed_model {
            FeedModel::Independent => (0, 1),
            FeedModel::Interleaved => (job.col_start as usize, job.n_active as usize),
        };
        let mut parts = Vec::with_capacity(2);
        if upstream > 0 {
            parts.push(Partition::free(UPSTREAM, 0, upstream));
        }
        parts.push(Partition::free(OWN, upstream, width));
        let mut grid: PeGrid<i64> = PeGrid::configure(ArrayConfig::new(rows, upstream + width, job.feed_model), &parts)?;

        let t = plan.t as usize;
        let mut buffer = DrainBuffer::new(shape.m as usize, t);
        let mut counts = ActivityCounts::default();
        let mut per_fold = Vec::with_capacity(plan.folds.len());
        for f in &plan.folds {
            let (k0, m0) = (f.k_offset as usize, f.m_offset as usize);
            let (r_f, c_f) = (f.rows as usize, f.cols as usize);
            let tile = WeightTile::from_rows((0..r_f).map(|x| weights[k0 + x][m0..m0 + c_f].to_vec()).collect())?;
            let stream = InputStream::new((0..t).map(|p| (0..r_f).map(|x| inputs[k0 + x][p]).collect()).collect())?;
            let run = grid.run_fold_strided(OWN, &tile, &stream, stride)?;
            self.folds_run += 1;

            counts += run.activities;
            counts.dram_reads += (r_f * c_f) as u64;
            if f.m_index == 0 {
                counts.dram_reads += (r_f * t) as u64;
            }
            for (y, col) in run.outputs.iter().enumerate() {
                for (p, &v) in col.iter().enumerate() {
                    counts.drain_rmw += u64::from(buffer.accumulate(m0 + y, p, v));
                }
            }
            if plan.is_last_k(f) {
                counts.dram_writes += (c_f * t) as u64;
            }
            per_fold.push(FoldCycles { load: run.load_cycles, feed_drain: run.cycles - run.load_cycles });
        }

        let expected = reference_output(shape, &fw, &ifmap);
        let got = buffer.finish();
        if let Some((m, p)) = first_difference(&expected, &got) {
            return Err(EngineError::OutputMismatch {
                layer: job.layer.clone(),
                channel: m,
                pixel: p,
                expected: expected[m][p],
                found: got[m][p],
            });
        }
        Ok(LayerExecution { cycles: CycleEstimate::from_folds(per_fold), activities: counts })
    }
}

impl LayerExecutor for FunctionalExecutor {
    fn execute(&mut self, job: &LayerJob<'_>) -> Result<LayerExecution, Box<dyn StdError + Send + Sync>> {
        self.run(job).map_err(Into::into)
    }
}

/// Output buffer at the bottom of the array. The first k-fold of a column
/// group writes; later ones read, add and write back.
struct DrainBuffer {
    data: Vec<Vec<Option<i64>>>,
}

impl DrainBuffer {
    fn new(m: usize, t: usize) -> Self {
        DrainBuffer { data: vec![vec![None; t]; m] }
    }

    /// Returns whether the write was a read-modify-write.
    fn accumulate(&mut self, m: usize, p: usize, v: i64) -> bool {
        let slot = &mut self.data[m][p];
        match slot {
            Some(old) => {
                *old += v;
                true
            }
            None => {
                *slot = Some(v);
                false
            }
        }
    }

    fn finish(self) -> Vec<Vec<i64>> {
        self.data
            .into_iter()
            .map(|row| row.into_iter().map(|v| v.expect("every output written")).collect())
            .collect()
    }
}

fn first_difference(a: &[Vec<i64>], b: &[Vec<i64>]) -> Option<(usize, usize)> {
    a.iter().zip(b).enumerate().find_map(|(m, (ra, rb))| {
        ra.iter().zip(rb).position(|(x, y)| x != y).map(|p| (m, p))
    })
}
