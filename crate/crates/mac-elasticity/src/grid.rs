//! Tensor-product partitions of rectangular domains.
//!
//! One [`AxisPartition`] holds a single coordinate axis: its node sequence
//! `x_0 < x_1 < ... < x_n`, the primal cell widths `h_{i+1/2} = x_{i+1} - x_i`,
//! the cell midpoints `x_{i+1/2}`, and the dual widths
//! `h_i = (h_{i-1/2} + h_{i+1/2}) / 2` with half-width duals at the two
//! boundary nodes. A [`TensorGrid`] is two or three such axes.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One coordinate axis of a tensor-product grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisPartition {
    nodes: Vec<f64>,
    cell_widths: Vec<f64>,
    midpoints: Vec<f64>,
    dual_widths: Vec<f64>,
}

impl AxisPartition {
    /// Builds a partition from an explicit strictly increasing node sequence.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidArgument(
                "an axis partition needs at least two nodes".into(),
            ));
        }
        if !nodes.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidArgument("node coordinates must be finite".into()));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "node coordinates must be strictly increasing".into(),
            ));
        }
        let n = nodes.len() - 1;
        let cell_widths: Vec<f64> = nodes.windows(2).map(|w| w[1] - w[0]).collect();
        let midpoints: Vec<f64> = nodes.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let mut dual_widths = Vec::with_capacity(n + 1);
        dual_widths.push(0.5 * cell_widths[0]);
        for i in 1..n {
            dual_widths.push(0.5 * (cell_widths[i - 1] + cell_widths[i]));
        }
        dual_widths.push(0.5 * cell_widths[n - 1]);
        Ok(Self {
            nodes,
            cell_widths,
            midpoints,
            dual_widths,
        })
    }

    /// Equally spaced partition of `[a, b]` with `n` cells.
    pub fn uniform(n: usize, a: f64, b: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("cell count must be at least 1".into()));
        }
        if !(a < b) {
            return Err(Error::InvalidArgument(format!(
                "axis endpoints must satisfy a < b, got a={a}, b={b}"
            )));
        }
        let h = (b - a) / n as f64;
        let nodes = (0..=n)
            .map(|i| if i == n { b } else { a + i as f64 * h })
            .collect();
        Self::from_nodes(nodes)
    }

    /// Uniform partition with each interior node shifted by a seeded random
    /// offset of at most `amplitude * (b - a) / n`. Endpoints stay fixed and
    /// the node ordering is preserved for any `amplitude < 0.5`.
    pub fn perturbed(n: usize, a: f64, b: f64, amplitude: f64, seed: u64) -> Result<Self> {
        if !(0.0..0.5).contains(&amplitude) {
            return Err(Error::InvalidArgument(format!(
                "perturbation amplitude must lie in [0, 0.5), got {amplitude}"
            )));
        }
        let uniform = Self::uniform(n, a, b)?;
        let h = (b - a) / n as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut nodes = uniform.nodes;
        for node in nodes.iter_mut().take(n).skip(1) {
            let r: f64 = rng.gen_range(-1.0..1.0);
            *node += r * amplitude * h;
        }
        Self::from_nodes(nodes)
    }

    /// Bisects every cell at its midpoint. Parent nodes survive as every
    /// second node of the refined partition.
    pub fn refine(&self) -> Self {
        let mut nodes = Vec::with_capacity(2 * self.n_cells() + 1);
        for i in 0..self.n_cells() {
            nodes.push(self.nodes[i]);
            nodes.push(self.midpoints[i]);
        }
        nodes.push(*self.nodes.last().unwrap());
        Self::from_nodes(nodes).expect("bisection preserves strict ordering")
    }

    /// Number of cells `n`.
    pub fn n_cells(&self) -> usize {
        self.cell_widths.len()
    }

    /// Number of nodes `n + 1`.
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Node coordinate `x_i`.
    pub fn node(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    /// Cell midpoint `x_{i+1/2}`.
    pub fn midpoint(&self, i: usize) -> f64 {
        self.midpoints[i]
    }

    /// Primal width `h_{i+1/2}`.
    pub fn cell_width(&self, i: usize) -> f64 {
        self.cell_widths[i]
    }

    /// Dual width `h_i`; the boundary entries are `h_{1/2}/2` and `h_{n-1/2}/2`.
    pub fn dual_width(&self, i: usize) -> f64 {
        self.dual_widths[i]
    }

    pub fn cell_widths(&self) -> &[f64] {
        &self.cell_widths
    }

    pub fn dual_widths(&self) -> &[f64] {
        &self.dual_widths
    }

    /// Left endpoint `x_0`.
    pub fn start(&self) -> f64 {
        self.nodes[0]
    }

    /// Right endpoint `x_n`.
    pub fn end(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// Axis length `x_n - x_0`.
    pub fn length(&self) -> f64 {
        self.end() - self.start()
    }

    pub fn min_cell_width(&self) -> f64 {
        self.cell_widths.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_cell_width(&self) -> f64 {
        self.cell_widths.iter().cloned().fold(0.0, f64::max)
    }

    /// One node coordinate per line, full precision.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for x in &self.nodes {
            out.push_str(&format!("{x:.17e}\n"));
        }
        out
    }

    /// Parses the format written by [`AxisPartition::to_text`]. Blank lines
    /// and `#` comment lines are ignored.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut nodes = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let x: f64 = line
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
            nodes.push(x);
        }
        Self::from_nodes(nodes)
    }
}

/// A 2D or 3D tensor-product grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorGrid {
    axes: Vec<AxisPartition>,
}

impl TensorGrid {
    pub fn new_2d(x: AxisPartition, y: AxisPartition) -> Self {
        Self { axes: vec![x, y] }
    }

    pub fn new_3d(x: AxisPartition, y: AxisPartition, z: AxisPartition) -> Self {
        Self { axes: vec![x, y, z] }
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn axis(&self, k: usize) -> &AxisPartition {
        &self.axes[k]
    }

    pub fn axes(&self) -> &[AxisPartition] {
        &self.axes
    }

    /// Bisects every axis.
    pub fn refine(&self) -> Self {
        Self {
            axes: self.axes.iter().map(AxisPartition::refine).collect(),
        }
    }

    /// Smallest cell width over all axes divided by the largest: the witness
    /// constant of the grid regularity condition.
    pub fn regularity_ratio(&self) -> f64 {
        let min = self
            .axes
            .iter()
            .map(AxisPartition::min_cell_width)
            .fold(f64::INFINITY, f64::min);
        let max = self
            .axes
            .iter()
            .map(AxisPartition::max_cell_width)
            .fold(0.0, f64::max);
        min / max
    }

    /// Cell counts per axis.
    pub fn cells(&self) -> Vec<usize> {
        self.axes.iter().map(AxisPartition::n_cells).collect()
    }
}
