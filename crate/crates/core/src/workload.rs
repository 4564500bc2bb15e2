// SPDX-License-Identifier: Apache-2.0

//! Multi-DNN workload model.
//!
//! A workload is a pool of tenants. Each tenant is a DAG of convolution or
//! fully-connected layers with an arrival time. Layers use unit stride and
//! no padding, so `P = H - R + 1` and `Q = W - S + 1` always hold; a
//! fully-connected layer is a convolution with `R = H`, `S = W`.
//!
//! The JSON file format is documented in `docs/workload-format.md`.

use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Shape of one layer: filter `M x C x R x S`, input `N x C x H x W`,
/// output `N x M x P x Q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LayerShape {
    pub m: u64,
    pub n: u64,
    pub c: u64,
    pub r: u64,
    pub s: u64,
    pub h: u64,
    pub w: u64,
    pub p: u64,
    pub q: u64,
}

impl LayerShape {
    /// Convolution with the output size derived from the input and filter.
    /// `r > h` or `s > w` yields `p`/`q` of zero, which validation rejects.
    pub fn conv(m: u64, n: u64, c: u64, r: u64, s: u64, h: u64, w: u64) -> Self {
        let p = (h + 1).saturating_sub(r);
        let q = (w + 1).saturating_sub(s);
        LayerShape { m, n, c, r, s, h, w, p, q }
    }

    /// Fully-connected layer over an `h x w x c` input: the filter covers the
    /// whole input plane.
    pub fn fc(m: u64, n: u64, c: u64, h: u64, w: u64) -> Self {
        LayerShape::conv(m, n, c, h, w, h, w)
    }

    /// Priority metric `M*N*C*R*S*H*W`, or `None` on overflow.
    ///
    /// This multiplies by the input plane `H*W` rather than the output plane,
    /// so it overstates the executed MAC count of a valid convolution. It is
    /// only used to rank ready layers; executed MACs come from the lowering.
    pub fn checked_opr_count(&self) -> Option<u64> {
        [self.n, self.c, self.r, self.s, self.h, self.w]
            .iter()
            .try_fold(self.m, |acc, &f| acc.checked_mul(f))
    }

    /// See [`checked_opr_count`](Self::checked_opr_count). Validated
    /// workloads never overflow here.
    pub fn opr_count(&self) -> u64 {
        self.checked_opr_count()
            .expect("opr_count on a shape that failed overflow validation")
    }

    fn fields(&self) -> [(&'static str, u64); 9] {
        [
            ("M", self.m),
            ("N", self.n),
            ("C", self.c),
            ("R", self.r),
            ("S", self.s),
            ("H", self.h),
            ("W", self.w),
            ("P", self.p),
            ("Q", self.q),
        ]
    }
}

/// Identifies one layer of one tenant.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LayerRef {
    pub dnn_id: String,
    pub layer_index: usize,
}

impl LayerRef {
    pub fn new(dnn_id: impl Into<String>, layer_index: usize) -> Self {
        LayerRef { dnn_id: dnn_id.into(), layer_index }
    }
}

impl fmt::Display for LayerRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.dnn_id, self.layer_index)
    }
}

/// One tenant: a layer DAG with an arrival time in cycles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DnnGraph {
    pub dnn_id: String,
    pub arrival_time: u64,
    pub layers: Vec<LayerShape>,
    /// Precedence pairs `(from, to)` over layer indices.
    pub edges: Vec<(usize, usize)>,
    /// Informational only; the engine derives execution time itself.
    pub estimated_exec: Option<u64>,
}

impl DnnGraph {
    /// A linear chain `l0 -> l1 -> ... -> ln`.
    pub fn chain(dnn_id: impl Into<String>, arrival_time: u64, layers: Vec<LayerShape>) -> Self {
        let edges = chain_edges(layers.len());
        DnnGraph { dnn_id: dnn_id.into(), arrival_time, layers, edges, estimated_exec: None }
    }

    pub fn predecessors(&self, layer: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter(move |e| e.1 == layer).map(|e| e.0)
    }

    pub fn successors(&self, layer: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter(move |e| e.0 == layer).map(|e| e.1)
    }

    fn has_cycle(&self) -> bool {
        let n = self.layers.len();
        let mut indegree = vec![0usize; n];
        for &(_, to) in &self.edges {
            indegree[to] += 1;
        }
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut seen = 0;
        while let Some(i) = queue.pop_front() {
            seen += 1;
            for &(from, to) in &self.edges {
                if from == i {
                    indegree[to] -= 1;
                    if indegree[to] == 0 {
                        queue.push_back(to);
                    }
                }
            }
        }
        seen != n
    }
}

fn chain_edges(n: usize) -> Vec<(usize, usize)> {
    (1..n).map(|i| (i - 1, i)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workload {
    pub dnns: Vec<DnnGraph>,
}

impl Workload {
    pub fn new(dnns: Vec<DnnGraph>) -> Self {
        Workload { dnns }
    }

    pub fn dnn(&self, dnn_id: &str) -> Option<&DnnGraph> {
        self.dnns.iter().find(|d| d.dnn_id == dnn_id)
    }

    pub fn layer(&self, r: &LayerRef) -> Option<&LayerShape> {
        self.dnn(&r.dnn_id).and_then(|d| d.layers.get(r.layer_index))
    }

    pub fn layer_count(&self) -> usize {
        self.dnns.iter().map(|d| d.layers.len()).sum()
    }
}

/// A single broken invariant found by [`validate_workload`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationIssue {
    #[error("workload has no DNNs")]
    EmptyWorkload,
    #[error("duplicate dnn_id `{0}`")]
    DuplicateDnnId(String),
    #[error("DNN `{0}` has no layers")]
    NoLayers(String),
    #[error("{layer}: field {field} must be >= 1")]
    ZeroField { layer: LayerRef, field: &'static str },
    #[error("{layer}: filter {filter} larger than input {input}")]
    FilterLargerThanInput { layer: LayerRef, filter: u64, input: u64 },
    #[error("{layer}: {field}={found}, expected {expected} for unit stride without padding")]
    ShapeInconsistent { layer: LayerRef, field: &'static str, expected: u64, found: u64 },
    #[error("{layer}: MAC count overflows 64 bits")]
    MacOverflow { layer: LayerRef },
    #[error("DNN `{dnn_id}`: edge ({from}, {to}) references a missing layer")]
    EdgeOutOfRange { dnn_id: String, from: usize, to: usize },
    #[error("DNN `{0}`: precedence edges contain a cycle")]
    CycleInPrecedence(String),
}

/// Every issue found in one validation pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationErrors(pub Vec<ValidationIssue>);

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, issue) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationErrors {}

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid workload:\n{0}")]
    Invalid(ValidationErrors),
}

/// Checks every invariant and reports all violations, not just the first.
pub fn validate_workload(w: Workload) -> Result<Workload, ValidationErrors> {
    let mut issues = Vec::new();
    if w.dnns.is_empty() {
        issues.push(ValidationIssue::EmptyWorkload);
    }
    let mut ids = HashSet::new();
    for dnn in &w.dnns {
        if !ids.insert(dnn.dnn_id.as_str()) {
            issues.push(ValidationIssue::DuplicateDnnId(dnn.dnn_id.clone()));
        }
        if dnn.layers.is_empty() {
            issues.push(ValidationIssue::NoLayers(dnn.dnn_id.clone()));
        }
        for (i, shape) in dnn.layers.iter().enumerate() {
            check_shape(LayerRef::new(&dnn.dnn_id, i), shape, &mut issues);
        }
        let n = dnn.layers.len();
        let mut edges_ok = true;
        for &(from, to) in &dnn.edges {
            if from >= n || to >= n {
                edges_ok = false;
                issues.push(ValidationIssue::EdgeOutOfRange { dnn_id: dnn.dnn_id.clone(), from, to });
            }
        }
        if edges_ok && dnn.has_cycle() {
            issues.push(ValidationIssue::CycleInPrecedence(dnn.dnn_id.clone()));
        }
    }
    if issues.is_empty() {
        Ok(w)
    } else {
        Err(ValidationErrors(issues))
    }
}

fn check_shape(layer: LayerRef, s: &LayerShape, issues: &mut Vec<ValidationIssue>) {
    let mut positive = true;
    for (field, v) in s.fields() {
        if v == 0 {
            positive = false;
            issues.push(ValidationIssue::ZeroField { layer: layer.clone(), field });
        }
    }
    if s.r > s.h {
        issues.push(ValidationIssue::FilterLargerThanInput { layer: layer.clone(), filter: s.r, input: s.h });
    } else if s.p != s.h - s.r + 1 {
        issues.push(ValidationIssue::ShapeInconsistent {
            layer: layer.clone(),
            field: "P",
            expected: s.h - s.r + 1,
            found: s.p,
        });
    }
    if s.s > s.w {
        issues.push(ValidationIssue::FilterLargerThanInput { layer: layer.clone(), filter: s.s, input: s.w });
    } else if s.q != s.w - s.s + 1 {
        issues.push(ValidationIssue::ShapeInconsistent {
            layer: layer.clone(),
            field: "Q",
            expected: s.w - s.s + 1,
            found: s.q,
        });
    }
    if positive && s.checked_opr_count().is_none() {
        issues.push(ValidationIssue::MacOverflow { layer });
    }
}

// On-disk representation. `P`/`Q` and `edges` are optional on input and
// always written on output.

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorkloadFile {
    dnns: Vec<DnnFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DnnFile {
    dnn_id: String,
    arrival_time: u64,
    layers: Vec<LayerFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    edges: Option<Vec<[usize; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    estimated_exec: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    #[serde(rename = "M")]
    m: u64,
    #[serde(rename = "N")]
    n: u64,
    #[serde(rename = "C")]
    c: u64,
    #[serde(rename = "R")]
    r: u64,
    #[serde(rename = "S")]
    s: u64,
    #[serde(rename = "H")]
    h: u64,
    #[serde(rename = "W")]
    w: u64,
    #[serde(rename = "P", default, skip_serializing_if = "Option::is_none")]
    p: Option<u64>,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    q: Option<u64>,
}

impl From<LayerFile> for LayerShape {
    fn from(l: LayerFile) -> Self {
        let derived = LayerShape::conv(l.m, l.n, l.c, l.r, l.s, l.h, l.w);
        LayerShape { p: l.p.unwrap_or(derived.p), q: l.q.unwrap_or(derived.q), ..derived }
    }
}

impl From<&LayerShape> for LayerFile {
    fn from(s: &LayerShape) -> Self {
        LayerFile { m: s.m, n: s.n, c: s.c, r: s.r, s: s.s, h: s.h, w: s.w, p: Some(s.p), q: Some(s.q) }
    }
}

/// Parses and validates a workload document.
pub fn parse_workload(text: &str) -> Result<Workload, WorkloadError> {
    let file: WorkloadFile = serde_json::from_str(text).map_err(|e| WorkloadError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let dnns = file
        .dnns
        .into_iter()
        .map(|d| {
            let layers: Vec<LayerShape> = d.layers.into_iter().map(LayerShape::from).collect();
            let edges = match d.edges {
                Some(e) => e.into_iter().map(|[a, b]| (a, b)).collect(),
                None => chain_edges(layers.len()),
            };
            DnnGraph { dnn_id: d.dnn_id, arrival_time: d.arrival_time, layers, edges, estimated_exec: d.estimated_exec }
        })
        .collect();
    validate_workload(Workload { dnns }).map_err(WorkloadError::Invalid)
}

pub fn load_workload(path: impl AsRef<Path>) -> Result<Workload, WorkloadError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| WorkloadError::Io { path: path.display().to_string(), source })?;
    parse_workload(&text)
}

/// Canonical JSON form: derived fields and edges written explicitly.
pub fn workload_to_json(w: &Workload) -> String {
    let file = WorkloadFile {
        dnns: w
            .dnns
            .iter()
            .map(|d| DnnFile {
                dnn_id: d.dnn_id.clone(),
                arrival_time: d.arrival_time,
                layers: d.layers.iter().map(LayerFile::from).collect(),
                edges: Some(d.edges.iter().map(|&(a, b)| [a, b]).collect()),
                estimated_exec: d.estimated_exec,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("workload serialization is infallible")
}

pub fn save_workload(w: &Workload, path: impl AsRef<Path>) -> std::io::Result<()> {
    std::fs::write(path, workload_to_json(w) + "\n")
}
