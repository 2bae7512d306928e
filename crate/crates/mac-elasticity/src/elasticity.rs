//! Assembly of the staggered elasticity system in displacement-stress form.
//!
//! The unknowns are the normal stresses at cell centers, the shear stresses
//! at nodes (2D) or edge midpoints (3D), and the displacement components at
//! interior face midpoints; boundary displacements are eliminated by the
//! homogeneous Dirichlet condition. Constitutive rows state
//! `A sigma - sym grad u = 0` with the compliance
//! `A sigma = (sigma - r (tr sigma) I) / (2 mu)`, `r = lambda / (d lambda + 2 mu)`;
//! momentum rows state `div sigma = f`. Each row is scaled by the control
//! volume of its unknown (shear rows additionally by `1/mu`), which makes
//! the assembled saddle-point matrix exactly symmetric.

use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fields::{inner_product, AxisKind, GridLocation, StaggeredField};
use crate::grid::TensorGrid;
use crate::ops::{check_zero_boundary, dual_diff_zero, forward_diff};

/// Lame coefficients of an isotropic material.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LameParameters {
    pub lambda: f64,
    pub mu: f64,
}

impl LameParameters {
    pub fn new(lambda: f64, mu: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) || !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "Lame coefficients must be positive and finite, got lambda={lambda}, mu={mu}"
            )));
        }
        Ok(Self { lambda, mu })
    }

    /// The trace-coupling ratio `r = lambda / (d lambda + 2 mu)` of the
    /// compliance tensor; `r < 1/d`, approaching `1/d` as `lambda` grows.
    pub fn trace_ratio(&self, dims: usize) -> f64 {
        self.lambda / (dims as f64 * self.lambda + 2.0 * self.mu)
    }
}

/// One scalar unknown family of the scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    Z11,
    Z22,
    Z33,
    Z12,
    Z13,
    Z23,
    Wx,
    Wy,
    Wz,
}

impl Var {
    /// Block ordering of the unknown vector: normal stresses, shear
    /// stresses, then displacement components.
    pub fn all(dims: usize) -> Vec<Var> {
        match dims {
            2 => vec![Var::Z11, Var::Z22, Var::Z12, Var::Wx, Var::Wy],
            _ => vec![
                Var::Z11,
                Var::Z22,
                Var::Z33,
                Var::Z12,
                Var::Z13,
                Var::Z23,
                Var::Wx,
                Var::Wy,
                Var::Wz,
            ],
        }
    }

    pub fn normal(axis: usize) -> Var {
        [Var::Z11, Var::Z22, Var::Z33][axis]
    }

    /// The shear component coupling two distinct axes.
    pub fn shear(a: usize, b: usize) -> Var {
        match (a.min(b), a.max(b)) {
            (0, 1) => Var::Z12,
            (0, 2) => Var::Z13,
            _ => Var::Z23,
        }
    }

    pub fn displacement(axis: usize) -> Var {
        [Var::Wx, Var::Wy, Var::Wz][axis]
    }

    pub fn location(self, dims: usize) -> GridLocation {
        match self {
            Var::Z11 | Var::Z22 | Var::Z33 => GridLocation::Cell,
            Var::Z12 => {
                if dims == 2 {
                    GridLocation::Node
                } else {
                    GridLocation::EdgeZ
                }
            }
            Var::Z13 => GridLocation::EdgeY,
            Var::Z23 => GridLocation::EdgeX,
            Var::Wx => GridLocation::FaceX,
            Var::Wy => GridLocation::FaceY,
            Var::Wz => GridLocation::FaceZ,
        }
    }

    /// The axis along which boundary values of this family are eliminated,
    /// if any.
    pub fn eliminated_axis(self) -> Option<usize> {
        match self {
            Var::Wx => Some(0),
            Var::Wy => Some(1),
            Var::Wz => Some(2),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Var::Z11 => "Z11",
            Var::Z22 => "Z22",
            Var::Z33 => "Z33",
            Var::Z12 => "Z12",
            Var::Z13 => "Z13",
            Var::Z23 => "Z23",
            Var::Wx => "Wx",
            Var::Wy => "Wy",
            Var::Wz => "Wz",
        }
    }
}

#[derive(Debug, Clone)]
struct Block {
    var: Var,
    offset: usize,
    /// Extents of the full location family, before elimination.
    extents: [usize; 3],
}

/// Flat numbering of all unknowns on one grid.
#[derive(Debug, Clone)]
pub struct UnknownMap {
    dims: usize,
    blocks: Vec<Block>,
    total: usize,
}

impl UnknownMap {
    pub fn new(grid: &TensorGrid) -> Self {
        let dims = grid.dims();
        let mut blocks = Vec::new();
        let mut offset = 0;
        for var in Var::all(dims) {
            let loc = var.location(dims);
            let mut extents = [1usize; 3];
            let mut stored = 1usize;
            for a in 0..dims {
                extents[a] = match loc.axis_kind(a) {
                    AxisKind::Node => grid.axis(a).n_nodes(),
                    AxisKind::Cell => grid.axis(a).n_cells(),
                };
                stored *= if var.eliminated_axis() == Some(a) {
                    extents[a] - 2
                } else {
                    extents[a]
                };
            }
            blocks.push(Block {
                var,
                offset,
                extents,
            });
            offset += stored;
        }
        Self {
            dims,
            blocks,
            total: offset,
        }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Total number of scalar unknowns.
    pub fn total(&self) -> usize {
        self.total
    }

    pub fn vars(&self) -> Vec<Var> {
        self.blocks.iter().map(|b| b.var).collect()
    }

    fn block(&self, var: Var) -> &Block {
        self.blocks
            .iter()
            .find(|b| b.var == var)
            .expect("variable not present in this dimension")
    }

    /// Extents of the full location family of `var` (before elimination).
    pub fn extents(&self, var: Var) -> [usize; 3] {
        self.block(var).extents
    }

    /// Flat index of one unknown, addressed by its full location indices.
    /// Returns `None` for displacement entries on the eliminated boundary.
    pub fn index(&self, var: Var, i: usize, j: usize, k: usize) -> Option<usize> {
        let block = self.block(var);
        let mut idx = [i, j, k];
        let mut extents = block.extents;
        if let Some(axis) = var.eliminated_axis() {
            if idx[axis] == 0 || idx[axis] == extents[axis] - 1 {
                return None;
            }
            idx[axis] -= 1;
            extents[axis] -= 2;
        }
        Some(block.offset + idx[0] + extents[0] * (idx[1] + extents[1] * idx[2]))
    }

    /// First flat index of the block of `var`.
    pub fn offset(&self, var: Var) -> usize {
        self.block(var).offset
    }

    /// The variable and full location indices of one flat unknown.
    pub fn describe(&self, flat: usize) -> (Var, [usize; 3]) {
        for block in &self.blocks {
            let mut extents = block.extents;
            if let Some(axis) = block.var.eliminated_axis() {
                extents[axis] -= 2;
            }
            let stored = extents[0] * extents[1] * extents[2];
            if flat < block.offset + stored {
                let local = flat - block.offset;
                let i = local % extents[0];
                let j = (local / extents[0]) % extents[1];
                let k = local / (extents[0] * extents[1]);
                let mut idx = [i, j, k];
                if let Some(axis) = block.var.eliminated_axis() {
                    idx[axis] += 1;
                }
                return (block.var, idx);
            }
        }
        panic!("flat index {flat} out of range");
    }
}

/// The stress part of a discrete state: normal components at cell centers
/// and shear components at nodes or edge midpoints.
#[derive(Debug, Clone)]
pub struct StressState {
    dims: usize,
    normals: Vec<StaggeredField>,
    shears: Vec<StaggeredField>,
}

impl StressState {
    pub fn zeros(grid: &Arc<TensorGrid>) -> Result<Self> {
        let dims = grid.dims();
        let normals = (0..dims)
            .map(|a| StaggeredField::zeros(grid, Var::normal(a).location(dims)))
            .collect::<Result<_>>()?;
        let shears = shear_pairs(dims)
            .iter()
            .map(|&(a, b)| StaggeredField::zeros(grid, Var::shear(a, b).location(dims)))
            .collect::<Result<_>>()?;
        Ok(Self {
            dims,
            normals,
            shears,
        })
    }

    pub fn from_fields(normals: Vec<StaggeredField>, shears: Vec<StaggeredField>) -> Result<Self> {
        let dims = normals.len();
        if !(dims == 2 || dims == 3) || shears.len() != shear_pairs(dims).len() {
            return Err(Error::FieldMismatch);
        }
        for (a, f) in normals.iter().enumerate() {
            if f.grid().dims() != dims || f.location() != Var::normal(a).location(dims) {
                return Err(Error::FieldMismatch);
            }
        }
        for (&(a, b), f) in shear_pairs(dims).iter().zip(&shears) {
            if f.location() != Var::shear(a, b).location(dims) {
                return Err(Error::FieldMismatch);
            }
        }
        Ok(Self {
            dims,
            normals,
            shears,
        })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn normal(&self, axis: usize) -> &StaggeredField {
        &self.normals[axis]
    }

    pub fn normal_mut(&mut self, axis: usize) -> &mut StaggeredField {
        &mut self.normals[axis]
    }

    /// The shear component coupling axes `a` and `b`.
    pub fn shear(&self, a: usize, b: usize) -> &StaggeredField {
        &self.shears[shear_slot(self.dims, a, b)]
    }

    pub fn shear_mut(&mut self, a: usize, b: usize) -> &mut StaggeredField {
        let slot = shear_slot(self.dims, a, b);
        &mut self.shears[slot]
    }

    /// `(name, field)` pairs in block order.
    pub fn components(&self) -> Vec<(&'static str, &StaggeredField)> {
        let mut out: Vec<_> = self
            .normals
            .iter()
            .enumerate()
            .map(|(a, f)| (Var::normal(a).name(), f))
            .collect();
        for (&(a, b), f) in shear_pairs(self.dims).iter().zip(&self.shears) {
            out.push((Var::shear(a, b).name(), f));
        }
        out
    }

    /// Combined stress norm: M norms of the normals plus node/edge norms of
    /// the shears.
    pub fn norm(&self) -> Result<f64> {
        let mut sq = 0.0;
        for f in self.normals.iter().chain(&self.shears) {
            sq += inner_product(f, f)?;
        }
        Ok(sq.sqrt())
    }
}

/// The displacement part of a discrete state: one face-centered component
/// per axis, vanishing at its stored boundary faces.
#[derive(Debug, Clone)]
pub struct DisplacementState {
    components: Vec<StaggeredField>,
}

impl DisplacementState {
    pub fn zeros(grid: &Arc<TensorGrid>) -> Result<Self> {
        let dims = grid.dims();
        let components = (0..dims)
            .map(|a| StaggeredField::zeros(grid, Var::displacement(a).location(dims)))
            .collect::<Result<_>>()?;
        Ok(Self { components })
    }

    pub fn from_fields(components: Vec<StaggeredField>) -> Result<Self> {
        let dims = components.len();
        if !(dims == 2 || dims == 3) {
            return Err(Error::FieldMismatch);
        }
        for (a, f) in components.iter().enumerate() {
            if f.grid().dims() != dims || f.location() != Var::displacement(a).location(dims) {
                return Err(Error::FieldMismatch);
            }
            check_zero_boundary(f, a)?;
        }
        Ok(Self { components })
    }

    pub fn dims(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, axis: usize) -> &StaggeredField {
        &self.components[axis]
    }

    pub fn component_mut(&mut self, axis: usize) -> &mut StaggeredField {
        &mut self.components[axis]
    }

    pub fn components(&self) -> Vec<(&'static str, &StaggeredField)> {
        self.components
            .iter()
            .enumerate()
            .map(|(a, f)| (Var::displacement(a).name(), f))
            .collect()
    }

    /// Combined face-family norm.
    pub fn norm(&self) -> Result<f64> {
        let mut sq = 0.0;
        for f in &self.components {
            sq += inner_product(f, f)?;
        }
        Ok(sq.sqrt())
    }
}

pub(crate) fn shear_pairs(dims: usize) -> &'static [(usize, usize)] {
    if dims == 2 {
        &[(0, 1)]
    } else {
        &[(0, 1), (0, 2), (1, 2)]
    }
}

fn shear_slot(dims: usize, a: usize, b: usize) -> usize {
    let key = (a.min(b), a.max(b));
    shear_pairs(dims)
        .iter()
        .position(|&p| p == key)
        .expect("invalid shear axis pair")
}

/// The stress bilinear form: compliance-weighted products of two stress
/// states,
/// `sum_ab ((delta_ab - r) / (2 mu)) (z_aa, t_bb)_M + (1/mu) sum_{a<b} (z_ab, t_ab)`.
pub fn bilinear_a(z: &StressState, t: &StressState, params: &LameParameters) -> Result<f64> {
    if z.dims != t.dims {
        return Err(Error::FieldMismatch);
    }
    let dims = z.dims;
    let r = params.trace_ratio(dims);
    let c = 1.0 / (2.0 * params.mu);
    let mut sum = 0.0;
    for a in 0..dims {
        for b in 0..dims {
            let coeff = c * (if a == b { 1.0 - r } else { -r });
            sum += coeff * inner_product(&z.normals[a], &t.normals[b])?;
        }
    }
    for (zs, ts) in z.shears.iter().zip(&t.shears) {
        sum += inner_product(zs, ts)? / params.mu;
    }
    Ok(sum)
}

/// The coupling bilinear form: the discrete divergence of a stress state
/// paired with a displacement state over the face families,
/// `sum_a (w_a, D_a t_aa + sum_{b != a} d_b t_ab)_{face_a}`.
/// The displacement must vanish at its stored boundary faces.
pub fn bilinear_b(t: &StressState, w: &DisplacementState) -> Result<f64> {
    if t.dims != w.dims() {
        return Err(Error::FieldMismatch);
    }
    let dims = t.dims;
    let mut sum = 0.0;
    for a in 0..dims {
        check_zero_boundary(&w.components[a], a)?;
        let mut div = dual_diff_zero(&t.normals[a], a)?;
        for b in 0..dims {
            if b != a {
                div = div.add(&forward_diff(t.shear(a, b), b)?)?;
            }
        }
        sum += inner_product(&w.components[a], &div)?;
    }
    Ok(sum)
}

/// The explicit stress witness of the discrete inf-sup condition in 2D:
/// running sums of the displacement along each axis,
/// `t_aa(i+1/2) = sum_{m<=i} w_a(m) h_m`, with zero shear. Its divergence
/// reproduces the displacement exactly, so the coupling form evaluates to
/// the squared displacement norm.
pub fn lbb_witness(w: &DisplacementState) -> Result<StressState> {
    if w.dims() != 2 {
        return Err(Error::InvalidArgument(
            "the inf-sup witness construction is two-dimensional".into(),
        ));
    }
    let grid = Arc::clone(w.component(0).grid());
    let mut out = StressState::zeros(&grid)?;
    for a in 0..2 {
        check_zero_boundary(&w.components[a], a)?;
        let wa = &w.components[a];
        let part = grid.axis(a);
        let tau = out.normal_mut(a);
        let [ex, ey, ez] = tau.extents();
        for k in 0..ez {
            for j in 0..ey {
                for i in 0..ex {
                    let idx = [i, j, k];
                    let mut run = 0.0;
                    for m in 1..=idx[a] {
                        let mut widx = idx;
                        widx[a] = m;
                        run += wa.get(widx[0], widx[1], widx[2]) * part.dual_width(m);
                    }
                    tau.set(i, j, k, run);
                }
            }
        }
    }
    Ok(out)
}

/// The assembled symmetric saddle-point system in compressed sparse row
/// form, together with its grid, material, and unknown numbering.
#[derive(Debug, Clone)]
pub struct MacSystem {
    grid: Arc<TensorGrid>,
    params: LameParameters,
    map: UnknownMap,
    pub(crate) row_ptr: Vec<usize>,
    pub(crate) col_idx: Vec<usize>,
    pub(crate) vals: Vec<f64>,
    pub(crate) rhs: Vec<f64>,
}

impl MacSystem {
    pub fn grid(&self) -> &Arc<TensorGrid> {
        &self.grid
    }

    pub fn params(&self) -> &LameParameters {
        &self.params
    }

    pub fn map(&self) -> &UnknownMap {
        &self.map
    }

    /// Number of unknowns (and rows).
    pub fn n(&self) -> usize {
        self.rhs.len()
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// Sparse row access: parallel column and value slices.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[span.clone()], &self.vals[span])
    }

    /// `y = K x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.n() || y.len() != self.n() {
            return Err(Error::LengthMismatch {
                got: x.len(),
                expected: self.n(),
            });
        }
        for r in 0..self.n() {
            let mut sum = 0.0;
            for e in self.row_ptr[r]..self.row_ptr[r + 1] {
                sum += self.vals[e] * x[self.col_idx[e]];
            }
            y[r] = sum;
        }
        Ok(())
    }

    /// `||K x - rhs||_2 / ||rhs||_2` (absolute norm if the right side is zero).
    pub fn relative_residual(&self, x: &[f64]) -> Result<f64> {
        let mut y = vec![0.0; self.n()];
        self.matvec(x, &mut y)?;
        let mut rr = 0.0;
        let mut bb = 0.0;
        for (yi, bi) in y.iter().zip(&self.rhs) {
            rr += (yi - bi) * (yi - bi);
            bb += bi * bi;
        }
        Ok(if bb > 0.0 {
            (rr / bb).sqrt()
        } else {
            rr.sqrt()
        })
    }

    /// Splits a solution vector into stress and displacement states,
    /// restoring zero boundary displacements.
    pub fn decode(&self, x: &[f64]) -> Result<(StressState, DisplacementState)> {
        if x.len() != self.n() {
            return Err(Error::LengthMismatch {
                got: x.len(),
                expected: self.n(),
            });
        }
        let dims = self.grid.dims();
        let mut stress = StressState::zeros(&self.grid)?;
        let mut disp = DisplacementState::zeros(&self.grid)?;
        for var in Var::all(dims) {
            let extents = self.map.extents(var);
            let field: &mut StaggeredField = match var {
                Var::Z11 | Var::Z22 | Var::Z33 => {
                    stress.normal_mut(["Z11", "Z22", "Z33"].iter().position(|&n| n == var.name()).unwrap())
                }
                Var::Z12 => stress.shear_mut(0, 1),
                Var::Z13 => stress.shear_mut(0, 2),
                Var::Z23 => stress.shear_mut(1, 2),
                Var::Wx => disp.component_mut(0),
                Var::Wy => disp.component_mut(1),
                Var::Wz => disp.component_mut(2),
            };
            for k in 0..extents[2] {
                for j in 0..extents[1] {
                    for i in 0..extents[0] {
                        if let Some(flat) = self.map.index(var, i, j, k) {
                            field.set(i, j, k, x[flat]);
                        }
                    }
                }
            }
        }
        Ok((stress, disp))
    }

    /// Packs stress and displacement states into a flat vector on this
    /// system's numbering, dropping boundary displacement entries.
    pub fn encode(&self, stress: &StressState, disp: &DisplacementState) -> Result<Vec<f64>> {
        let dims = self.grid.dims();
        if stress.dims() != dims || disp.dims() != dims {
            return Err(Error::FieldMismatch);
        }
        let mut x = vec![0.0; self.n()];
        for var in Var::all(dims) {
            let extents = self.map.extents(var);
            let field: &StaggeredField = match var {
                Var::Z11 => stress.normal(0),
                Var::Z22 => stress.normal(1),
                Var::Z33 => stress.normal(2),
                Var::Z12 => stress.shear(0, 1),
                Var::Z13 => stress.shear(0, 2),
                Var::Z23 => stress.shear(1, 2),
                Var::Wx => disp.component(0),
                Var::Wy => disp.component(1),
                Var::Wz => disp.component(2),
            };
            for k in 0..extents[2] {
                for j in 0..extents[1] {
                    for i in 0..extents[0] {
                        if let Some(flat) = self.map.index(var, i, j, k) {
                            x[flat] = field.get(i, j, k);
                        }
                    }
                }
            }
        }
        Ok(x)
    }

    /// Writes the matrix in coordinate text form (`row col value`, zero
    /// based), preceded by a `%%MatrixMarket`-style size line.
    pub fn write_coo<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.n(), self.n(), self.nnz())?;
        for r in 0..self.n() {
            for e in self.row_ptr[r]..self.row_ptr[r + 1] {
                writeln!(w, "{} {} {:.17e}", r, self.col_idx[e], self.vals[e])?;
            }
        }
        Ok(())
    }
}

/// Width of the control interval of `loc` along `axis` at index `idx`:
/// the dual width on node-type axes, the primal width on cell-type axes.
fn axis_width(grid: &TensorGrid, loc: GridLocation, axis: usize, idx: usize) -> f64 {
    match loc.axis_kind(axis) {
        AxisKind::Node => grid.axis(axis).dual_width(idx),
        AxisKind::Cell => grid.axis(axis).cell_width(idx),
    }
}

/// Product of control widths over all axes except `skip` (pass `dims` to
/// skip none and get the full control volume). Multiplication runs in axis
/// order so that matching coefficients of transposed entries are computed
/// as bit-identical products.
fn transverse_weight(
    grid: &TensorGrid,
    loc: GridLocation,
    idx: &[usize; 3],
    skip: usize,
) -> f64 {
    let mut w = 1.0;
    for a in 0..grid.dims() {
        if a != skip {
            w *= axis_width(grid, loc, a, idx[a]);
        }
    }
    w
}

struct RowBuilder {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
    rhs: Vec<f64>,
    scratch: Vec<(usize, f64)>,
}

impl RowBuilder {
    fn new(n: usize) -> Self {
        Self {
            row_ptr: vec![0],
            col_idx: Vec::new(),
            vals: Vec::new(),
            rhs: Vec::with_capacity(n),
            scratch: Vec::new(),
        }
    }

    fn entry(&mut self, col: Option<usize>, val: f64) {
        if let Some(col) = col {
            self.scratch.push((col, val));
        }
    }

    fn finish_row(&mut self, rhs: f64) {
        self.scratch.sort_unstable_by_key(|&(c, _)| c);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(self.scratch.len());
        for &(c, v) in &self.scratch {
            match merged.last_mut() {
                Some(last) if last.0 == c => last.1 += v,
                _ => merged.push((c, v)),
            }
        }
        for (c, v) in merged {
            self.col_idx.push(c);
            self.vals.push(v);
        }
        self.row_ptr.push(self.col_idx.len());
        self.rhs.push(rhs);
        self.scratch.clear();
    }
}

fn for_each_index(extents: [usize; 3], mut f: impl FnMut([usize; 3])) {
    for k in 0..extents[2] {
        for j in 0..extents[1] {
            for i in 0..extents[0] {
                f([i, j, k]);
            }
        }
    }
}

/// Assembles the scaled saddle-point system for a body force given by one
/// face-centered field per axis. Rows follow the unknown ordering of
/// [`UnknownMap`], so the matrix is square and exactly symmetric.
pub fn assemble(
    grid: &Arc<TensorGrid>,
    params: LameParameters,
    body_force: &[StaggeredField],
) -> Result<MacSystem> {
    let dims = grid.dims();
    if body_force.len() != dims {
        return Err(Error::InvalidArgument(format!(
            "expected {dims} body force components, got {}",
            body_force.len()
        )));
    }
    for (a, f) in body_force.iter().enumerate() {
        if f.grid().as_ref() != grid.as_ref()
            || f.location() != Var::displacement(a).location(dims)
        {
            return Err(Error::FieldMismatch);
        }
    }

    let map = UnknownMap::new(grid);
    let r = params.trace_ratio(dims);
    let inv_2mu = 1.0 / (2.0 * params.mu);
    let mut rows = RowBuilder::new(map.total());

    // Constitutive rows for the normal stresses, one per cell and axis,
    // scaled by the cell volume: compliance coupling minus d_a W_a.
    for a in 0..dims {
        for_each_index(map.extents(Var::normal(a)), |idx| {
            let vol = transverse_weight(grid, GridLocation::Cell, &idx, dims);
            for b in 0..dims {
                let coeff = vol * inv_2mu * (if a == b { 1.0 - r } else { -r });
                rows.entry(map.index(Var::normal(b), idx[0], idx[1], idx[2]), coeff);
            }
            let tw = transverse_weight(grid, GridLocation::Cell, &idx, a);
            let mut up = idx;
            up[a] += 1;
            rows.entry(map.index(Var::displacement(a), idx[0], idx[1], idx[2]), tw);
            rows.entry(map.index(Var::displacement(a), up[0], up[1], up[2]), -tw);
            rows.finish_row(0.0);
        });
    }

    // Constitutive rows for the shear stresses, one per node or edge
    // midpoint, scaled by the dual control volume over mu:
    // Z_ab / mu - (D_b W_a + D_a W_b).
    for &(a, b) in shear_pairs(dims) {
        let var = Var::shear(a, b);
        let loc = var.location(dims);
        for_each_index(map.extents(var), |idx| {
            let vol = transverse_weight(grid, loc, &idx, dims);
            rows.entry(map.index(var, idx[0], idx[1], idx[2]), vol / params.mu);
            for (diff_axis, w_axis) in [(b, a), (a, b)] {
                let tw = transverse_weight(grid, loc, &idx, diff_axis);
                let wvar = Var::displacement(w_axis);
                let m = idx[diff_axis];
                if m < map.extents(wvar)[diff_axis] {
                    rows.entry(map.index(wvar, idx[0], idx[1], idx[2]), -tw);
                }
                if m > 0 {
                    let mut lo = idx;
                    lo[diff_axis] = m - 1;
                    rows.entry(map.index(wvar, lo[0], lo[1], lo[2]), tw);
                }
            }
            rows.finish_row(0.0);
        });
    }

    // Momentum rows, one per interior face, scaled by the face control
    // volume: D_a Z_aa + sum_{b != a} d_b Z_ab = f_a.
    for a in 0..dims {
        let wvar = Var::displacement(a);
        let loc = wvar.location(dims);
        let extents = map.extents(wvar);
        for_each_index(extents, |idx| {
            if idx[a] == 0 || idx[a] == extents[a] - 1 {
                return;
            }
            let tw = transverse_weight(grid, loc, &idx, a);
            let mut lo = idx;
            lo[a] -= 1;
            rows.entry(map.index(Var::normal(a), idx[0], idx[1], idx[2]), tw);
            rows.entry(map.index(Var::normal(a), lo[0], lo[1], lo[2]), -tw);
            for b in 0..dims {
                if b == a {
                    continue;
                }
                let svar = Var::shear(a, b);
                let tw = transverse_weight(grid, loc, &idx, b);
                let mut up = idx;
                up[b] += 1;
                rows.entry(map.index(svar, up[0], up[1], up[2]), tw);
                rows.entry(map.index(svar, idx[0], idx[1], idx[2]), -tw);
            }
            let vol = transverse_weight(grid, loc, &idx, dims);
            rows.finish_row(vol * body_force[a].get(idx[0], idx[1], idx[2]));
        });
    }

    debug_assert_eq!(rows.rhs.len(), map.total());
    Ok(MacSystem {
        grid: Arc::clone(grid),
        params,
        map,
        row_ptr: rows.row_ptr,
        col_idx: rows.col_idx,
        vals: rows.vals,
        rhs: rows.rhs,
    })
}
