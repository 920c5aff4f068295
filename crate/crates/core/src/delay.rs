//! Communication graphs, information-delay patterns, and the sparsity they
//! induce on the leading impulse-response taps of a controller parameter.
//!
//! A delay pattern d gives, for every ordered node pair (i, j), the number of
//! steps before information originating at j is available at i. A controller
//! parameter Q respects the pattern when its k-th Markov tap couples input
//! block j to output block i only if k >= d[i][j]. Beyond the horizon
//! N = max d every coupling is free, so Q decomposes as a structured FIR
//! prefix of length N plus an unconstrained N-step-delayed tail.

use crate::error::Error;
use crate::realization::{fir_causal, RealizationSS};
use crate::Result;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// A directed communication graph with per-edge transmission delays and
/// per-node actuator/sensor widths.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommGraph {
    pub nodes: usize,
    /// Edges as (from, to, delay) triples.
    pub edges: Vec<(usize, usize, usize)>,
    pub u_dims: Vec<usize>,
    pub y_dims: Vec<usize>,
}

impl CommGraph {
    pub fn validate(&self) -> Result<()> {
        if self.u_dims.len() != self.nodes || self.y_dims.len() != self.nodes {
            return Err(Error::InvalidConfig(format!(
                "graph has {} nodes but {} actuator and {} sensor widths",
                self.nodes,
                self.u_dims.len(),
                self.y_dims.len()
            )));
        }
        for &(f, t, _) in &self.edges {
            if f >= self.nodes || t >= self.nodes {
                return Err(Error::InvalidConfig(format!(
                    "edge ({f}, {t}) references a node outside 0..{}",
                    self.nodes
                )));
            }
        }
        Ok(())
    }
}

/// Information delays between node pairs; entry (i, j) is the delay from
/// source j to destination i. Diagonal entries are zero for controller
/// patterns; plant patterns carry the actuation-to-measurement delay there.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelayPattern {
    d: Vec<Vec<usize>>,
}

impl DelayPattern {
    pub fn from_matrix(d: Vec<Vec<usize>>) -> Result<Self> {
        let n = d.len();
        if d.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidConfig("delay pattern must be square".into()));
        }
        Ok(DelayPattern { d })
    }

    /// All-pairs propagation delays of a graph: shortest accumulated edge
    /// delay, with 0 on the diagonal. Errors if some pair is unreachable,
    /// since the FIR decomposition needs every coupling to open eventually.
    pub fn from_graph(g: &CommGraph) -> Result<Self> {
        g.validate()?;
        let n = g.nodes;
        const INF: usize = usize::MAX / 4;
        let mut d = vec![vec![INF; n]; n];
        for i in 0..n {
            d[i][i] = 0;
        }
        for &(f, t, w) in &g.edges {
            // Destination row, source column.
            d[t][f] = d[t][f].min(w);
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let via = d[i][k].saturating_add(d[k][j]);
                    if via < d[i][j] {
                        d[i][j] = via;
                    }
                }
            }
        }
        if d.iter().flatten().any(|&v| v >= INF) {
            return Err(Error::InvalidConfig(
                "communication graph is not strongly connected".into(),
            ));
        }
        Ok(DelayPattern { d })
    }

    pub fn nodes(&self) -> usize {
        self.d.len()
    }

    pub fn get(&self, i: usize, j: usize) -> usize {
        self.d[i][j]
    }

    /// Largest entry: the FIR horizon N.
    pub fn horizon(&self) -> usize {
        self.d.iter().flatten().copied().max().unwrap_or(0)
    }

    /// Pattern scaled entrywise (uniform per-hop delay multiplier).
    pub fn scaled(&self, factor: usize) -> DelayPattern {
        DelayPattern {
            d: self
                .d
                .iter()
                .map(|row| row.iter().map(|&v| v * factor).collect())
                .collect(),
        }
    }
}

/// Outcome of a quadratic-invariance test; `witness` is the first violating
/// (i, j, l, k) in scan order when the property fails.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QiReport {
    pub holds: bool,
    pub witness: Option<(usize, usize, usize, usize)>,
}

/// Check that routing through the plant never beats the controller network:
/// for all i, k and intermediate j, l,
/// dk[i][j] + dp[j][l] + dk[l][k] >= dk[i][k].
pub fn qi_check(dk: &DelayPattern, dp: &DelayPattern) -> Result<QiReport> {
    let n = dk.nodes();
    if dp.nodes() != n {
        return Err(Error::dim(format!(
            "patterns disagree on node count: {} vs {}",
            n,
            dp.nodes()
        )));
    }
    for i in 0..n {
        for k in 0..n {
            for j in 0..n {
                for l in 0..n {
                    if dk.get(i, j) + dp.get(j, l) + dk.get(l, k) < dk.get(i, k) {
                        return Ok(QiReport {
                            holds: false,
                            witness: Some((i, j, l, k)),
                        });
                    }
                }
            }
        }
    }
    Ok(QiReport {
        holds: true,
        witness: None,
    })
}

/// Propagation delays of a square plant, read off its impulse response:
/// entry (k, j) is the first tap where output k sees input j above `tol`,
/// capped at `horizon` when the coupling never shows up. The cap keeps QI
/// checks conservative for couplings the plant does not exercise.
pub fn plant_delays(p22: &RealizationSS, horizon: usize, tol: f64) -> Result<DelayPattern> {
    let (p, m) = (p22.outputs(), p22.inputs());
    if p != m {
        return Err(Error::dim(format!(
            "propagation pattern needs a square plant, got {p}x{m}"
        )));
    }
    let taps = p22.markov(horizon + 1).taps;
    let d = (0..p)
        .map(|k| {
            (0..m)
                .map(|j| {
                    taps.iter()
                        .position(|t| t[(k, j)].abs() > tol)
                        .unwrap_or(horizon)
                        .min(horizon)
                })
                .collect()
        })
        .collect();
    Ok(DelayPattern { d })
}

/// Entry-level sparsity constraint on the first N Markov taps of a
/// controller parameter, expanded from a node-level delay pattern through
/// row/column ownership maps.
#[derive(Debug, Clone)]
pub struct DelayConstraint {
    /// masks[k][(r, c)] is true when tap k may couple column c to row r.
    masks: Vec<DMatrix<bool>>,
    horizon: usize,
    rows: usize,
    cols: usize,
}

impl DelayConstraint {
    /// Build from a pattern and ownership maps: row r belongs to node
    /// u_owners[r], column c to node y_owners[c].
    pub fn from_pattern(
        pattern: &DelayPattern,
        u_owners: &[usize],
        y_owners: &[usize],
    ) -> Result<Self> {
        let n = pattern.nodes();
        if u_owners.iter().any(|&o| o >= n) || y_owners.iter().any(|&o| o >= n) {
            return Err(Error::InvalidConfig(
                "ownership map references a node outside the pattern".into(),
            ));
        }
        let horizon = pattern.horizon();
        let (rows, cols) = (u_owners.len(), y_owners.len());
        let masks = (0..horizon)
            .map(|k| {
                DMatrix::from_fn(rows, cols, |r, c| k >= pattern.get(u_owners[r], y_owners[c]))
            })
            .collect();
        Ok(DelayConstraint {
            masks,
            horizon,
            rows,
            cols,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn allowed(&self, tap: usize, r: usize, c: usize) -> bool {
        tap >= self.horizon || self.masks[tap][(r, c)]
    }

    /// Free coordinates in tap order: (tap, row, col) triples.
    pub fn free_positions(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for (k, mask) in self.masks.iter().enumerate() {
            for c in 0..self.cols {
                for r in 0..self.rows {
                    if mask[(r, c)] {
                        out.push((k, r, c));
                    }
                }
            }
        }
        out
    }

    pub fn free_count(&self) -> usize {
        self.masks
            .iter()
            .map(|m| m.iter().filter(|&&b| b).count())
            .sum()
    }

    /// Largest magnitude placed on a forbidden position among the first
    /// `horizon` taps; exact zeros are expected from a compliant synthesis.
    pub fn masked_violation(&self, taps: &[DMatrix<f64>]) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, tap) in taps.iter().enumerate().take(self.horizon) {
            for r in 0..self.rows.min(tap.nrows()) {
                for c in 0..self.cols.min(tap.ncols()) {
                    if !self.masks[k][(r, c)] {
                        worst = worst.max(tap[(r, c)].abs());
                    }
                }
            }
        }
        worst
    }
}

/// A structured FIR prefix: taps of length `constraint.horizon()` whose
/// forbidden entries are identically zero.
#[derive(Debug, Clone)]
pub struct StructuredFir {
    taps: Vec<DMatrix<f64>>,
    rows: usize,
    cols: usize,
}

impl StructuredFir {
    pub fn zeros(constraint: &DelayConstraint) -> Self {
        StructuredFir {
            taps: (0..constraint.horizon())
                .map(|_| DMatrix::zeros(constraint.rows(), constraint.cols()))
                .collect(),
            rows: constraint.rows(),
            cols: constraint.cols(),
        }
    }

    /// Rebuild taps from a packed parameter vector over the free positions.
    pub fn from_params(constraint: &DelayConstraint, params: &[f64]) -> Result<Self> {
        let positions = constraint.free_positions();
        if positions.len() != params.len() {
            return Err(Error::dim(format!(
                "parameter vector has {} entries, constraint has {} free positions",
                params.len(),
                positions.len()
            )));
        }
        let mut fir = StructuredFir::zeros(constraint);
        for (&(k, r, c), &v) in positions.iter().zip(params) {
            fir.taps[k][(r, c)] = v;
        }
        Ok(fir)
    }

    /// Pack the free positions into a parameter vector.
    pub fn params(&self, constraint: &DelayConstraint) -> Vec<f64> {
        constraint
            .free_positions()
            .iter()
            .map(|&(k, r, c)| self.taps[k][(r, c)])
            .collect()
    }

    /// Project arbitrary taps onto the constraint: forbidden entries are
    /// zeroed, extra taps dropped, missing taps padded.
    pub fn project(constraint: &DelayConstraint, taps: &[DMatrix<f64>]) -> Self {
        let mut fir = StructuredFir::zeros(constraint);
        for k in 0..constraint.horizon() {
            if let Some(src) = taps.get(k) {
                for r in 0..constraint.rows().min(src.nrows()) {
                    for c in 0..constraint.cols().min(src.ncols()) {
                        if constraint.allowed(k, r, c) {
                            fir.taps[k][(r, c)] = src[(r, c)];
                        }
                    }
                }
            }
        }
        fir
    }

    pub fn taps(&self) -> &[DMatrix<f64>] {
        &self.taps
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Realize the prefix sum_k taps[k] z^-k; the empty prefix is the zero
    /// static system.
    pub fn to_realization(&self) -> Result<RealizationSS> {
        if self.taps.is_empty() {
            return Ok(RealizationSS::zero(self.rows, self.cols));
        }
        fir_causal(&self.taps)
    }
}
