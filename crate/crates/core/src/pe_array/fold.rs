// SPDX-License-Identifier: Apache-2.0

//! Whole-fold execution: load, skewed feed and drain, with cycles and
//! activities measured on the grid.

use super::{FeedModel, LoadWord, PartId, PeError, PeGrid, StepInput, TaggedValue, Word};
use crate::energy::ActivityCounts;

/// `rows x cols` block of weights, `get(x, y)` is the weight for PE row `x`
/// and tile column `y`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightTile<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy> WeightTile<T> {
    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self, PeError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
            return Err(PeError::BadInput("weight tile must be a non-empty rectangle".into()));
        }
        Ok(WeightTile { rows: r, cols: c, data: rows.into_iter().flatten().collect() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[x * self.cols + y]
    }
}

/// `t` input vectors of length `r_f`; `pixels[p][x]` enters row `x`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputStream<T> {
    width: usize,
    pixels: Vec<Vec<T>>,
}

impl<T: Copy> InputStream<T> {
    pub fn new(pixels: Vec<Vec<T>>) -> Result<Self, PeError> {
        let width = pixels.first().map_or(0, Vec::len);
        if width == 0 || pixels.iter().any(|p| p.len() != width) {
            return Err(PeError::BadInput("input stream needs >= 1 pixel of equal-length vectors".into()));
        }
        Ok(InputStream { width, pixels })
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, pixel: usize, row: usize) -> T {
        self.pixels[pixel][row]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FoldJob<'a, T> {
    pub part: PartId,
    pub tile: &'a WeightTile<T>,
    pub inputs: &'a InputStream<T>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldRun<T> {
    pub part: PartId,
    /// `outputs[y][p]`: dot product of tile column `y` with pixel `p`.
    pub outputs: Vec<Vec<T>>,
    /// From the first load cycle to the last drain, inclusive.
    pub cycles: u64,
    pub load_cycles: u64,
    pub activities: ActivityCounts,
}

struct JobState<T> {
    part: PartId,
    col_start: usize,
    width: usize,
    r_f: usize,
    c_f: usize,
    t: usize,
    offset: u64,
    outputs: Vec<Vec<Option<T>>>,
    collected: usize,
    last_drain: u64,
    before: ActivityCounts,
}

impl<T: Word> PeGrid<T> {
    /// Runs one fold on `part` with a dedicated feed stream.
    pub fn run_fold(&mut self, part: PartId, tile: &WeightTile<T>, inputs: &InputStream<T>) -> Result<FoldRun<T>, PeError> {
        self.run_fold_strided(part, tile, inputs, 1)
    }

    /// Like [`run_fold`](Self::run_fold) but injects a new pixel only every
    /// `stride` cycles, the share of the left-edge row links a partition gets
    /// when `stride` tenants are interleaved.
    pub fn run_fold_strided(
        &mut self,
        part: PartId,
        tile: &WeightTile<T>,
        inputs: &InputStream<T>,
        stride: usize,
    ) -> Result<FoldRun<T>, PeError> {
        let mut runs = self.run_jobs(&[FoldJob { part, tile, inputs }], stride, false)?;
        Ok(runs.pop().expect("one job, one result"))
    }

    /// Runs one fold per partition at the same time.
    ///
    /// With independent feed every partition streams through its own edge
    /// port. With interleaved feed all streams enter at column 0; partition
    /// `i` (in column order) owns every `n`-th row-link slot, and its load is
    /// delayed by up to `n - 1` cycles so its first feed lands on its slot.
    /// Each run's `cycles` spans its own first load to its own last drain.
    pub fn run_concurrent(&mut self, jobs: &[FoldJob<'_, T>]) -> Result<Vec<FoldRun<T>>, PeError> {
        match self.config().feed_model {
            FeedModel::Independent => self.run_jobs(jobs, 1, false),
            FeedModel::Interleaved => self.run_jobs(jobs, jobs.len().max(1), true),
        }
    }

    fn run_jobs(&mut self, jobs: &[FoldJob<'_, T>], stride: usize, stagger: bool) -> Result<Vec<FoldRun<T>>, PeError> {
        if stride == 0 {
            return Err(PeError::BadInput("feed stride must be >= 1".into()));
        }
        let rows = self.config().rows;
        let mut states = Vec::with_capacity(jobs.len());
        for (i, job) in jobs.iter().enumerate() {
            if jobs[..i].iter().any(|j| j.part == job.part) {
                return Err(PeError::BadInput(format!("partition {} given two folds", job.part)));
            }
            let p = self.partition(job.part)?;
            let (r_f, c_f) = (job.tile.rows(), job.tile.cols());
            if r_f > rows || c_f > p.col_width {
                return Err(PeError::TileTooLarge { part: job.part, rows: r_f, cols: c_f });
            }
            if job.inputs.width() != r_f {
                return Err(PeError::BadInput(format!(
                    "input vectors of length {} for a tile with {r_f} rows",
                    job.inputs.width()
                )));
            }
            states.push(JobState {
                part: job.part,
                col_start: p.col_start,
                width: p.col_width,
                r_f,
                c_f,
                t: job.inputs.len(),
                offset: 0,
                outputs: vec![vec![None; job.inputs.len()]; c_f],
                collected: 0,
                last_drain: 0,
                before: self.activities(job.part)?,
            });
        }
        if stagger {
            let n = states.len();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by_key(|&i| states[i].col_start);
            for (slot, &i) in order.iter().enumerate() {
                states[i].offset = ((slot + n - states[i].r_f % n) % n) as u64;
            }
        }

        let base = self.cycle();
        let limit: u64 = states
            .iter()
            .map(|s| s.offset + 2 * s.r_f as u64 + (stride * s.t) as u64 + (s.col_start + s.c_f) as u64 + 4)
            .max()
            .unwrap_or(0);
        while states.iter().any(|s| s.collected < s.c_f * s.t) {
            let rel = self.cycle() - base;
            if rel > limit {
                return Err(PeError::Stalled(rel));
            }
            let mut input = StepInput::default();
            for (s, job) in states.iter().zip(jobs) {
                if rel < s.offset {
                    continue;
                }
                let phase = (rel - s.offset) as usize;
                if phase < s.r_f {
                    let row = s.r_f - 1 - phase;
                    let words = (0..s.width)
                        .map(|y| (y < s.c_f).then(|| LoadWord { value: job.tile.get(row, y), row }))
                        .collect();
                    input.loads.push((s.part, words));
                } else {
                    let f = phase - s.r_f;
                    for x in 0..s.r_f.min(f + 1) {
                        if (f - x).is_multiple_of(stride) {
                            let p = (f - x) / stride;
                            if p < s.t {
                                let value = job.inputs.get(p, x);
                                input.feeds.push((x, TaggedValue { value, tag: s.part, pixel: p as u32 }));
                            }
                        }
                    }
                }
            }
            let drained = self.step(&input)?;
            for (y, d) in drained.into_iter().enumerate() {
                let Some(d) = d else { continue };
                let s = states
                    .iter_mut()
                    .find(|s| s.part == d.tag)
                    .ok_or_else(|| PeError::BadInput(format!("drain from idle partition {}", d.tag)))?;
                let col = y - s.col_start;
                let slot = s
                    .outputs
                    .get_mut(col)
                    .and_then(|c| c.get_mut(d.pixel as usize))
                    .ok_or_else(|| PeError::BadInput(format!("stray output at column {y}, pixel {}", d.pixel)))?;
                if slot.replace(d.value).is_some() {
                    return Err(PeError::BadInput(format!("pixel {} drained twice from column {y}", d.pixel)));
                }
                s.collected += 1;
                s.last_drain = rel;
            }
        }

        states
            .into_iter()
            .map(|s| {
                let activities = self.activities(s.part)? - s.before;
                Ok(FoldRun {
                    part: s.part,
                    outputs: s
                        .outputs
                        .into_iter()
                        .map(|col| col.into_iter().map(|v| v.expect("all outputs collected")).collect())
                        .collect(),
                    cycles: s.last_drain - s.offset + 1,
                    load_cycles: s.r_f as u64,
                    activities,
                })
            })
            .collect()
    }
}
