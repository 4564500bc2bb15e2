// SPDX-License-Identifier: Apache-2.0

use std::cmp::Ordering;

use super::{ArrayConfig, FeedModel, PartId, PeError, Partition, TraceEvent, TraceKind, Word};
use crate::energy::ActivityCounts;

/// Horizontal (feed) value tagged with its owning partition and pixel index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaggedValue<T> {
    pub value: T,
    pub tag: PartId,
    pub pixel: u32,
}

/// Partial sum travelling down a column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Psum<T> {
    pub value: T,
    pub tag: PartId,
    pub pixel: u32,
}

/// Weight travelling down a column during the load phase; the PE at `row`
/// latches it into its load register.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadWord<T> {
    pub value: T,
    pub row: usize,
}

/// Load data and partial sums share the vertical links.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VerticalLink<T> {
    #[default]
    Empty,
    Load(LoadWord<T>),
    Psum(Psum<T>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DrainOutput<T> {
    pub value: T,
    pub pixel: u32,
    pub tag: PartId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PeState<T> {
    pub load_register: T,
    /// Owning partition; `None` for idle columns.
    pub tag: Option<PartId>,
    pub right_reg: Option<TaggedValue<T>>,
    pub down_reg: VerticalLink<T>,
}

/// Inputs presented to the array edges for one cycle.
#[derive(Debug, Clone)]
pub struct StepInput<T> {
    /// Partitions in load mode this cycle, with one optional word per
    /// partition column.
    pub loads: Vec<(PartId, Vec<Option<LoadWord<T>>>)>,
    /// `(row, value)` feed injections. The entry column is the tag's
    /// partition edge (independent feed) or column 0 (interleaved feed).
    pub feeds: Vec<(usize, TaggedValue<T>)>,
    /// `(column, psum)` injected above row 0.
    pub top: Vec<(usize, Psum<T>)>,
}

impl<T> Default for StepInput<T> {
    fn default() -> Self {
        StepInput { loads: Vec::new(), feeds: Vec::new(), top: Vec::new() }
    }
}

#[derive(Debug, Clone)]
struct PartSlot {
    part: Partition,
    loading: bool,
    counts: ActivityCounts,
}

/// Register-level state of every PE plus per-partition activity counters.
#[derive(Debug, Clone)]
pub struct PeGrid<T = i64> {
    cfg: ArrayConfig,
    parts: Vec<PartSlot>,
    pes: Vec<PeState<T>>,
    next: Vec<PeState<T>>,
    col_part: Vec<Option<usize>>,
    /// Rows holding a valid weight, per column. The drain port taps the last
    /// of them; rows below are bypassed.
    active_rows: Vec<usize>,
    cycle: u64,
    trace: Option<Vec<TraceEvent>>,
}

impl<T: Word> PeGrid<T> {
    /// Allocates the grid and tags every column with its owning partition.
    pub fn configure(cfg: ArrayConfig, parts: &[Partition]) -> Result<Self, PeError> {
        if cfg.rows == 0 || cfg.cols == 0 {
            return Err(PeError::EmptyArray);
        }
        for p in parts {
            if p.col_width == 0 || p.col_end() > cfg.cols {
                return Err(PeError::PartitionOutOfBounds(p.part_id));
            }
        }
        let mut sorted: Vec<&Partition> = parts.iter().collect();
        sorted.sort_by_key(|p| p.col_start);
        for pair in sorted.windows(2) {
            if pair[1].col_start < pair[0].col_end() {
                return Err(PeError::OverlappingPartitions(pair[0].part_id, pair[1].part_id));
            }
        }
        for (i, a) in parts.iter().enumerate() {
            if let Some(b) = parts[i + 1..].iter().find(|b| b.part_id == a.part_id) {
                return Err(PeError::OverlappingPartitions(a.part_id, b.part_id));
            }
        }

        let mut col_part = vec![None; cfg.cols];
        for (i, p) in parts.iter().enumerate() {
            col_part[p.col_start..p.col_end()].fill(Some(i));
        }
        let mut pes = vec![PeState::default(); cfg.rows * cfg.cols];
        for x in 0..cfg.rows {
            for y in 0..cfg.cols {
                pes[x * cfg.cols + y].tag = col_part[y].map(|i| parts[i].part_id);
            }
        }
        Ok(PeGrid {
            cfg,
            parts: parts
                .iter()
                .map(|p| PartSlot { part: p.clone(), loading: false, counts: ActivityCounts::default() })
                .collect(),
            next: pes.clone(),
            pes,
            col_part,
            active_rows: vec![0; cfg.cols],
            cycle: 0,
            trace: None,
        })
    }

    pub fn config(&self) -> &ArrayConfig {
        &self.cfg
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn pe(&self, row: usize, col: usize) -> &PeState<T> {
        &self.pes[row * self.cfg.cols + col]
    }

    pub fn partitions(&self) -> impl Iterator<Item = &Partition> {
        self.parts.iter().map(|s| &s.part)
    }

    pub fn partition(&self, id: PartId) -> Result<&Partition, PeError> {
        Ok(&self.parts[self.part_index(id)?].part)
    }

    /// Rows currently holding a loaded weight in `col`.
    pub fn loaded_rows(&self, col: usize) -> usize {
        self.active_rows[col]
    }

    /// Events tallied so far for data and PEs owned by `id`.
    pub fn activities(&self, id: PartId) -> Result<ActivityCounts, PeError> {
        Ok(self.parts[self.part_index(id)?].counts)
    }

    /// Starts recording PE-level events.
    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn take_trace(&mut self) -> Vec<TraceEvent> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    /// Panics if any vertical link carries a partial sum of a partition other
    /// than the column owner.
    pub fn assert_vertical_homogeneity(&self) {
        for (i, pe) in self.pes.iter().enumerate() {
            if let VerticalLink::Psum(ps) = pe.down_reg {
                assert_eq!(Some(ps.tag), pe.tag, "psum of {} in column {} owned by {:?}", ps.tag, i % self.cfg.cols, pe.tag);
            }
        }
    }

    fn part_index(&self, id: PartId) -> Result<usize, PeError> {
        self.parts.iter().position(|s| s.part.part_id == id).ok_or(PeError::UnknownPartition(id))
    }

    fn record(&mut self, row: usize, col: usize, event: TraceKind) {
        if let Some(t) = self.trace.as_mut() {
            t.push(TraceEvent { cycle: self.cycle, pe_x: row, pe_y: col, event });
        }
    }

    fn counts_for(&mut self, id: PartId) -> &mut ActivityCounts {
        let i = self.part_index(id).expect("tag of a configured partition");
        &mut self.parts[i].counts
    }

    fn part_cols(&self, i: usize) -> std::ops::Range<usize> {
        let p = &self.parts[i].part;
        p.col_start..p.col_end()
    }

    fn begin_load(&mut self, i: usize) -> Result<(), PeError> {
        let id = self.parts[i].part.part_id;
        let cols = self.cfg.cols;
        for y in self.part_cols(i) {
            for x in 0..self.cfg.rows {
                let pe = &self.pes[x * cols + y];
                let live_psum = matches!(pe.down_reg, VerticalLink::Psum(_));
                let own_feed = pe.right_reg.is_some_and(|v| v.tag == id);
                if live_psum || own_feed {
                    return Err(PeError::LoadDuringCompute(id));
                }
            }
        }
        for y in self.part_cols(i) {
            self.active_rows[y] = 0;
            for x in 0..self.cfg.rows {
                self.pes[x * cols + y].load_register = T::default();
            }
        }
        Ok(())
    }

    fn end_load(&self, i: usize) -> Result<(), PeError> {
        let cols = self.cfg.cols;
        for y in self.part_cols(i) {
            for x in 0..self.cfg.rows {
                if matches!(self.pes[x * cols + y].down_reg, VerticalLink::Load(_)) {
                    return Err(PeError::IncompleteLoad(self.parts[i].part.part_id));
                }
            }
        }
        Ok(())
    }

    /// True when column `y` is the last loaded column of its partition, so
    /// the partition's own feed data stops there.
    fn extent_ends_at(&self, y: usize) -> bool {
        y + 1 == self.cfg.cols || self.col_part[y + 1] != self.col_part[y] || self.active_rows[y + 1] == 0
    }

    /// Advances the whole array by one clock. Returns, per column, the
    /// partial sum latched by the drain port this cycle (the value the tap
    /// row registered on the previous cycle).
    pub fn step(&mut self, input: &StepInput<T>) -> Result<Vec<Option<DrainOutput<T>>>, PeError> {
        let (rows, cols) = (self.cfg.rows, self.cfg.cols);

        // Mode transitions.
        let mut loading_now = vec![false; self.parts.len()];
        let mut col_words: Vec<Option<LoadWord<T>>> = vec![None; cols];
        for (id, words) in &input.loads {
            let i = self.part_index(*id)?;
            let p = &self.parts[i].part;
            if words.len() != p.col_width {
                return Err(PeError::BadInput(format!(
                    "{} load words for a {}-column partition",
                    words.len(),
                    p.col_width
                )));
            }
            if loading_now[i] {
                return Err(PeError::BadInput(format!("partition {id} loaded twice in one cycle")));
            }
            loading_now[i] = true;
            for (j, w) in words.iter().enumerate() {
                if let Some(w) = w {
                    if w.row >= rows {
                        return Err(PeError::BadInput(format!("load word for row {} of {rows}", w.row)));
                    }
                }
                col_words[p.col_start + j] = *w;
            }
        }
        for (i, &now) in loading_now.iter().enumerate() {
            match (self.parts[i].loading, now) {
                (false, true) => self.begin_load(i)?,
                (true, false) => self.end_load(i)?,
                _ => {}
            }
            self.parts[i].loading = now;
        }
        let col_loading: Vec<bool> = self.col_part.iter().map(|p| p.is_some_and(|i| loading_now[i])).collect();
        for (y, w) in col_words.iter().enumerate() {
            if w.is_some() {
                let i = self.col_part[y].expect("load words target partition columns");
                self.parts[i].counts.load_reads += 1;
            }
        }

        // Drain port.
        let mut drained = vec![None; cols];
        for y in 0..cols {
            if col_loading[y] || self.active_rows[y] == 0 {
                continue;
            }
            let tap = self.active_rows[y] - 1;
            if let VerticalLink::Psum(ps) = self.pes[tap * cols + y].down_reg {
                drained[y] = Some(DrainOutput { value: ps.value, pixel: ps.pixel, tag: ps.tag });
                self.counts_for(ps.tag).drain_writes += 1;
                self.record(tap, y, TraceKind::Drain);
            }
        }

        // Edge inputs.
        let mut inject: Vec<Option<TaggedValue<T>>> = vec![None; rows * cols];
        for &(row, v) in &input.feeds {
            if row >= rows {
                return Err(PeError::BadInput(format!("feed into row {row} of {rows}")));
            }
            let col = match self.cfg.feed_model {
                FeedModel::Independent => self.parts[self.part_index(v.tag)?].part.col_start,
                FeedModel::Interleaved => 0,
            };
            let slot = &mut inject[row * cols + col];
            if slot.is_some() {
                return Err(PeError::LinkConflict { row, col });
            }
            *slot = Some(v);
            self.counts_for(v.tag).feed_reads += 1;
        }
        let mut top: Vec<Option<Psum<T>>> = vec![None; cols];
        for &(col, ps) in &input.top {
            if col >= cols || self.pes[col].tag != Some(ps.tag) {
                return Err(PeError::BadInput(format!("top input {} into column {col}", ps.tag)));
            }
            top[col] = Some(ps);
        }

        // Registered update of every PE.
        let mut new_active = self.active_rows.clone();
        for x in 0..rows {
            for y in 0..cols {
                let idx = x * cols + y;
                let cur = self.pes[idx];
                let from_left = if y > 0 { self.pes[idx - 1].right_reg } else { None };
                let in_left = match (from_left, inject[idx]) {
                    (Some(_), Some(_)) => return Err(PeError::LinkConflict { row: x, col: y }),
                    (a, b) => a.or(b),
                };
                let mut next = PeState { right_reg: None, ..cur };

                if col_loading[y] {
                    let in_up = if x == 0 {
                        col_words[y].map_or(VerticalLink::Empty, VerticalLink::Load)
                    } else {
                        self.pes[idx - cols].down_reg
                    };
                    next.down_reg = match in_up {
                        VerticalLink::Load(w) => match w.row.cmp(&x) {
                            Ordering::Equal => {
                                next.load_register = w.value;
                                new_active[y] = new_active[y].max(x + 1);
                                let id = cur.tag.expect("loading column has an owner");
                                self.counts_for(id).lr_writes += 1;
                                self.record(x, y, TraceKind::Load);
                                VerticalLink::Empty
                            }
                            Ordering::Greater => VerticalLink::Load(w),
                            Ordering::Less => unreachable!("load word passed its row"),
                        },
                        VerticalLink::Psum(_) => {
                            return Err(PeError::LoadDuringCompute(cur.tag.expect("owned column")));
                        }
                        VerticalLink::Empty => VerticalLink::Empty,
                    };
                    if let Some(v) = in_left {
                        if Some(v.tag) == cur.tag {
                            return Err(PeError::FeedDuringLoad(v.tag));
                        }
                        self.counts_for(v.tag).pass_hops += 1;
                        self.record(x, y, TraceKind::Pass);
                        next.right_reg = Some(v);
                    }
                } else {
                    let in_up = if x == 0 {
                        top[y].map_or(VerticalLink::Empty, VerticalLink::Psum)
                    } else if x >= self.active_rows[y] {
                        VerticalLink::Empty
                    } else {
                        self.pes[idx - cols].down_reg
                    };
                    if matches!(in_up, VerticalLink::Load(_)) {
                        return Err(PeError::IncompleteLoad(cur.tag.expect("owned column")));
                    }
                    let mul_en = in_left.is_some_and(|v| Some(v.tag) == cur.tag && x < self.active_rows[y]);
                    match in_left {
                        Some(v) if mul_en => {
                            let base = match in_up {
                                VerticalLink::Psum(ps) if ps.pixel != v.pixel => {
                                    return Err(PeError::PixelMisalignment {
                                        row: x,
                                        col: y,
                                        above: ps.pixel,
                                        left: v.pixel,
                                    });
                                }
                                VerticalLink::Psum(ps) => ps.value,
                                _ => T::default(),
                            };
                            next.down_reg = VerticalLink::Psum(Psum {
                                value: base + v.value * cur.load_register,
                                tag: v.tag,
                                pixel: v.pixel,
                            });
                            self.counts_for(v.tag).mac_ops += 1;
                            self.record(x, y, TraceKind::Mac);
                            if !self.extent_ends_at(y) {
                                next.right_reg = Some(v);
                            }
                        }
                        Some(v) => {
                            next.down_reg = in_up;
                            self.counts_for(v.tag).pass_hops += 1;
                            self.record(x, y, TraceKind::Pass);
                            next.right_reg = Some(v);
                        }
                        None => next.down_reg = in_up,
                    }
                }
                self.next[idx] = next;
            }
        }
        std::mem::swap(&mut self.pes, &mut self.next);
        self.active_rows = new_active;
        self.cycle += 1;
        Ok(drained)
    }

    /// One load cycle for partition `part`; `words` has one entry per
    /// partition column.
    pub fn step_load(&mut self, part: PartId, words: Vec<Option<LoadWord<T>>>) -> Result<(), PeError> {
        let drained = self.step(&StepInput { loads: vec![(part, words)], ..StepInput::default() })?;
        debug_assert!(drained.iter().all(Option::is_none) || self.parts.len() > 1);
        Ok(())
    }

    /// One calculate cycle. `row_inputs[x]` is injected into row `x`;
    /// `top_inputs[y]` enters column `y` above row 0.
    pub fn step_compute(
        &mut self,
        row_inputs: &[Option<TaggedValue<T>>],
        top_inputs: &[Option<Psum<T>>],
    ) -> Result<Vec<Option<DrainOutput<T>>>, PeError> {
        let input = StepInput {
            loads: Vec::new(),
            feeds: row_inputs.iter().enumerate().filter_map(|(x, v)| v.map(|v| (x, v))).collect(),
            top: top_inputs.iter().enumerate().filter_map(|(y, p)| p.map(|p| (y, p))).collect(),
        };
        self.step(&input)
    }

    /// Loads a `rows x cols` weight block into `part`, bottom row first,
    /// taking one cycle per row.
    pub fn load_weights(&mut self, part: PartId, weights: &[Vec<T>]) -> Result<(), PeError> {
        let width = self.partition(part)?.col_width;
        let r_f = weights.len();
        for j in 0..r_f {
            let row = r_f - 1 - j;
            if weights[row].len() > width {
                return Err(PeError::TileTooLarge { part, rows: r_f, cols: weights[row].len() });
            }
            let words = (0..width)
                .map(|y| weights[row].get(y).map(|&value| LoadWord { value, row }))
                .collect();
            self.step_load(part, words)?;
        }
        Ok(())
    }
}
