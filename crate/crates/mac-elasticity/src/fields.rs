//! Values attached to one staggered location family of a tensor grid,
//! plus the discrete l2 inner products and norms.
//!
//! Each location family fixes, per axis, whether indices run over nodes
//! (range `0..=n`) or cells (range `0..n`). The inner product weights an
//! entry by the product of per-axis widths: primal widths `h_{i+1/2}` on
//! cell-type axes and dual widths `h_i` on node-type axes. Face families
//! sum interior indices only along their node-type axis; node and edge
//! families sum all indices, with half dual widths at the boundary.

use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::TensorGrid;

/// Whether indices along one axis address nodes or cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AxisKind {
    Node,
    Cell,
}

/// The staggered location families.
///
/// 2D: `Cell` (M), `Node` (T), `FaceX` (TM), `FaceY` (MT).
/// 3D: `Cell` (MMM), `FaceX` (TMM), `FaceY` (MTM), `FaceZ` (MMT),
/// `EdgeZ` (TTM), `EdgeY` (TMT), `EdgeX` (MTT).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GridLocation {
    Cell,
    Node,
    FaceX,
    FaceY,
    FaceZ,
    EdgeX,
    EdgeY,
    EdgeZ,
}

impl GridLocation {
    pub fn valid_for(self, dims: usize) -> bool {
        match dims {
            2 => matches!(self, Self::Cell | Self::Node | Self::FaceX | Self::FaceY),
            3 => !matches!(self, Self::Node),
            _ => false,
        }
    }

    /// Node- or cell-type indexing along `axis`.
    pub fn axis_kind(self, axis: usize) -> AxisKind {
        let node = match self {
            Self::Cell => [false, false, false],
            Self::Node => [true, true, true],
            Self::FaceX => [true, false, false],
            Self::FaceY => [false, true, false],
            Self::FaceZ => [false, false, true],
            Self::EdgeX => [false, true, true],
            Self::EdgeY => [true, false, true],
            Self::EdgeZ => [true, true, false],
        };
        if node[axis] {
            AxisKind::Node
        } else {
            AxisKind::Cell
        }
    }

    /// True when the inner product for this family skips the two boundary
    /// indices along `axis`. Only the node-type axis of a face family is
    /// restricted to interior indices.
    pub fn interior_only(self, axis: usize) -> bool {
        matches!(
            (self, axis),
            (Self::FaceX, 0) | (Self::FaceY, 1) | (Self::FaceZ, 2)
        )
    }

    /// The family obtained by switching the indexing kind along one axis,
    /// as a difference quotient does.
    pub fn with_axis_kind(self, axis: usize, kind: AxisKind, dims: usize) -> Result<Self> {
        let mut kinds = [AxisKind::Cell; 3];
        for a in 0..dims {
            kinds[a] = self.axis_kind(a);
        }
        kinds[axis] = kind;
        Self::from_kinds(&kinds[..dims])
    }

    fn from_kinds(kinds: &[AxisKind]) -> Result<Self> {
        use AxisKind::{Cell, Node};
        let loc = match kinds {
            [Cell, Cell] => Self::Cell,
            [Node, Node] => Self::Node,
            [Node, Cell] => Self::FaceX,
            [Cell, Node] => Self::FaceY,
            [Cell, Cell, Cell] => Self::Cell,
            [Node, Cell, Cell] => Self::FaceX,
            [Cell, Node, Cell] => Self::FaceY,
            [Cell, Cell, Node] => Self::FaceZ,
            [Cell, Node, Node] => Self::EdgeX,
            [Node, Cell, Node] => Self::EdgeY,
            [Node, Node, Cell] => Self::EdgeZ,
            [Node, Node, Node] => {
                return Err(Error::InvalidArgument(
                    "corner-point fields are not part of the 3D scheme".into(),
                ))
            }
            _ => return Err(Error::InvalidArgument("unsupported dimension".into())),
        };
        Ok(loc)
    }

    /// Conventional norm-family tag (M, T, TM, MT, TMM, ...).
    pub fn norm_tag(self, dims: usize) -> &'static str {
        match (dims, self) {
            (2, Self::Cell) => "M",
            (2, Self::Node) => "T",
            (2, Self::FaceX) => "TM",
            (2, Self::FaceY) => "MT",
            (3, Self::Cell) => "M",
            (3, Self::FaceX) => "TMM",
            (3, Self::FaceY) => "MTM",
            (3, Self::FaceZ) => "MMT",
            (3, Self::EdgeZ) => "TTM",
            (3, Self::EdgeY) => "TMT",
            (3, Self::EdgeX) => "MTT",
            _ => "?",
        }
    }
}

/// Scalar values on one location family of a grid, stored flat in
/// lexicographic order with x fastest.
#[derive(Debug, Clone)]
pub struct StaggeredField {
    grid: Arc<TensorGrid>,
    location: GridLocation,
    extents: [usize; 3],
    values: Vec<f64>,
}

impl StaggeredField {
    pub fn zeros(grid: &Arc<TensorGrid>, location: GridLocation) -> Result<Self> {
        let dims = grid.dims();
        if !location.valid_for(dims) {
            return Err(Error::LocationDimsMismatch { location, dims });
        }
        let mut extents = [1usize; 3];
        for a in 0..dims {
            extents[a] = match location.axis_kind(a) {
                AxisKind::Node => grid.axis(a).n_nodes(),
                AxisKind::Cell => grid.axis(a).n_cells(),
            };
        }
        let len = extents[0] * extents[1] * extents[2];
        Ok(Self {
            grid: Arc::clone(grid),
            location,
            extents,
            values: vec![0.0; len],
        })
    }

    /// Fills a field with `f` evaluated at the physical coordinates of each
    /// entry (nodes along node-type axes, midpoints along cell-type axes).
    pub fn sample<F>(grid: &Arc<TensorGrid>, location: GridLocation, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64,
    {
        let mut field = Self::zeros(grid, location)?;
        let dims = grid.dims();
        let [ex, ey, ez] = field.extents;
        let mut coords = [0.0f64; 3];
        for k in 0..ez {
            for j in 0..ey {
                for i in 0..ex {
                    let idx = [i, j, k];
                    for a in 0..dims {
                        coords[a] = field.coord(a, idx[a]);
                    }
                    field.values[i + ex * (j + ey * k)] = f(&coords[..dims]);
                }
            }
        }
        Ok(field)
    }

    pub fn grid(&self) -> &Arc<TensorGrid> {
        &self.grid
    }

    pub fn location(&self) -> GridLocation {
        self.location
    }

    pub fn extent(&self, axis: usize) -> usize {
        self.extents[axis]
    }

    pub fn extents(&self) -> [usize; 3] {
        self.extents
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn flat(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.extents[0] * (j + self.extents[1] * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.flat(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let idx = self.flat(i, j, k);
        self.values[idx] = v;
    }

    /// Physical coordinate along `axis` of index `i`.
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        match self.location.axis_kind(axis) {
            AxisKind::Node => self.grid.axis(axis).node(i),
            AxisKind::Cell => self.grid.axis(axis).midpoint(i),
        }
    }

    fn weight(&self, axis: usize, i: usize) -> f64 {
        match self.location.axis_kind(axis) {
            AxisKind::Node => self.grid.axis(axis).dual_width(i),
            AxisKind::Cell => self.grid.axis(axis).cell_width(i),
        }
    }

    fn compatible(&self, other: &Self) -> bool {
        self.location == other.location
            && (Arc::ptr_eq(&self.grid, &other.grid) || self.grid == other.grid)
    }

    /// Elementwise difference; both fields must share grid and location.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        if !self.compatible(other) {
            return Err(Error::FieldMismatch);
        }
        let mut out = self.clone();
        for (o, v) in out.values.iter_mut().zip(&other.values) {
            *o -= v;
        }
        Ok(out)
    }

    /// Elementwise sum; both fields must share grid and location.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if !self.compatible(other) {
            return Err(Error::FieldMismatch);
        }
        let mut out = self.clone();
        for (o, v) in out.values.iter_mut().zip(&other.values) {
            *o += v;
        }
        Ok(out)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for v in out.values.iter_mut() {
            *v *= factor;
        }
        out
    }

    /// CSV dump (index tuple, coordinates, value), mainly for debugging.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let dims = self.grid.dims();
        if dims == 2 {
            writeln!(w, "i,j,x,y,value")?;
        } else {
            writeln!(w, "i,j,k,x,y,z,value")?;
        }
        let [ex, ey, ez] = self.extents;
        for k in 0..ez {
            for j in 0..ey {
                for i in 0..ex {
                    let idx = [i, j, k];
                    if dims == 2 {
                        writeln!(
                            w,
                            "{i},{j},{:.17e},{:.17e},{:.17e}",
                            self.coord(0, i),
                            self.coord(1, j),
                            self.values[self.flat(i, j, k)]
                        )?;
                    } else {
                        writeln!(
                            w,
                            "{i},{j},{k},{:.17e},{:.17e},{:.17e},{:.17e}",
                            self.coord(0, i),
                            self.coord(1, j),
                            self.coord(2, idx[2]),
                            self.values[self.flat(i, j, k)]
                        )?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Discrete weighted l2 inner product of two fields on the same family.
pub fn inner_product(a: &StaggeredField, b: &StaggeredField) -> Result<f64> {
    if !a.compatible(b) {
        return Err(Error::FieldMismatch);
    }
    let dims = a.grid.dims();
    let [ex, ey, ez] = a.extents;
    let loc = a.location;
    let mut interior = [false; 3];
    for ax in 0..dims {
        interior[ax] = loc.interior_only(ax);
    }
    let mut sum = 0.0;
    for k in 0..ez {
        if interior[2] && (k == 0 || k == ez - 1) {
            continue;
        }
        let wk = if dims == 3 { a.weight(2, k) } else { 1.0 };
        for j in 0..ey {
            if interior[1] && (j == 0 || j == ey - 1) {
                continue;
            }
            let wjk = wk * a.weight(1, j);
            for i in 0..ex {
                if interior[0] && (i == 0 || i == ex - 1) {
                    continue;
                }
                let w = wjk * a.weight(0, i);
                let idx = a.flat(i, j, k);
                sum += w * a.values[idx] * b.values[idx];
            }
        }
    }
    Ok(sum)
}

/// Discrete l2 norm induced by [`inner_product`].
pub fn norm(a: &StaggeredField) -> Result<f64> {
    Ok(inner_product(a, a)?.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::AxisPartition;

    fn unit_square(n: usize) -> Arc<TensorGrid> {
        Arc::new(TensorGrid::new_2d(
            AxisPartition::uniform(n, 0.0, 1.0).unwrap(),
            AxisPartition::uniform(n, 0.0, 1.0).unwrap(),
        ))
    }

    #[test]
    fn zeros_extents() {
        let g = unit_square(8);
        assert_eq!(StaggeredField::zeros(&g, GridLocation::Cell).unwrap().len(), 64);
        assert_eq!(StaggeredField::zeros(&g, GridLocation::Node).unwrap().len(), 81);
        assert_eq!(StaggeredField::zeros(&g, GridLocation::FaceX).unwrap().len(), 72);
        assert_eq!(StaggeredField::zeros(&g, GridLocation::FaceY).unwrap().len(), 72);
        assert!(StaggeredField::zeros(&g, GridLocation::EdgeX).is_err());
    }

    #[test]
    fn sample_constant_and_coordinates() {
        let g = unit_square(8);
        let ones = StaggeredField::sample(&g, GridLocation::Cell, |_| 1.0).unwrap();
        assert!(ones.values().iter().all(|&v| v == 1.0));

        let gx = Arc::new(TensorGrid::new_2d(
            AxisPartition::uniform(2, 0.0, 1.0).unwrap(),
            AxisPartition::uniform(1, 0.0, 1.0).unwrap(),
        ));
        let f = StaggeredField::sample(&gx, GridLocation::Cell, |p| p[0]).unwrap();
        assert_eq!(f.values(), &[0.25, 0.75]);

        let xy = StaggeredField::sample(&g, GridLocation::Node, |p| p[0] * p[1]).unwrap();
        assert_eq!(xy.get(8, 8, 0), 1.0);
    }

    #[test]
    fn inner_product_weight_totals() {
        let g = unit_square(8);
        for loc in [GridLocation::Cell, GridLocation::Node] {
            let ones = StaggeredField::sample(&g, loc, |_| 1.0).unwrap();
            let ip = inner_product(&ones, &ones).unwrap();
            assert!((ip - 1.0).abs() < 1e-14, "{loc:?} gave {ip}");
        }
        // FaceX sums interior dual widths only: 7/8 on the unit square.
        let ones = StaggeredField::sample(&g, GridLocation::FaceX, |_| 1.0).unwrap();
        let ip = inner_product(&ones, &ones).unwrap();
        assert!((ip - 0.875).abs() < 1e-14);
        let ones = StaggeredField::sample(&g, GridLocation::FaceY, |_| 1.0).unwrap();
        assert!((inner_product(&ones, &ones).unwrap() - 0.875).abs() < 1e-14);
    }

    #[test]
    fn inner_product_weight_totals_3d() {
        let ax = || AxisPartition::uniform(4, 0.0, 1.0).unwrap();
        let g = Arc::new(TensorGrid::new_3d(ax(), ax(), ax()));
        for (loc, expect) in [
            (GridLocation::Cell, 1.0),
            (GridLocation::FaceX, 0.75),
            (GridLocation::FaceY, 0.75),
            (GridLocation::FaceZ, 0.75),
            (GridLocation::EdgeX, 1.0),
            (GridLocation::EdgeY, 1.0),
            (GridLocation::EdgeZ, 1.0),
        ] {
            let ones = StaggeredField::sample(&g, loc, |_| 1.0).unwrap();
            let ip = inner_product(&ones, &ones).unwrap();
            assert!((ip - expect).abs() < 1e-14, "{loc:?} gave {ip}");
        }
    }

    #[test]
    fn norm_of_constant_field() {
        let g = unit_square(6);
        let zero = StaggeredField::zeros(&g, GridLocation::Cell).unwrap();
        assert_eq!(norm(&zero).unwrap(), 0.0);
        let c = StaggeredField::sample(&g, GridLocation::Cell, |_| -2.5).unwrap();
        assert!((norm(&c).unwrap() - 2.5).abs() < 1e-14);
    }

    #[test]
    fn norm_matches_reversed_summation() {
        let g = unit_square(9);
        let f = StaggeredField::sample(&g, GridLocation::Node, |p| {
            (13.0 * p[0] + 7.0 * p[1]).sin()
        })
        .unwrap();
        let fast = inner_product(&f, &f).unwrap();
        // Independent summation in the opposite index order.
        let mut slow = 0.0;
        for i in (0..f.extent(0)).rev() {
            for j in (0..f.extent(1)).rev() {
                let w = g.axis(0).dual_width(i) * g.axis(1).dual_width(j);
                slow += w * f.get(i, j, 0) * f.get(i, j, 0);
            }
        }
        assert!((fast - slow).abs() <= 1e-14 * fast.abs());
    }

    #[test]
    fn mismatched_fields_rejected() {
        let g = unit_square(4);
        let a = StaggeredField::zeros(&g, GridLocation::Cell).unwrap();
        let b = StaggeredField::zeros(&g, GridLocation::Node).unwrap();
        assert!(inner_product(&a, &b).is_err());
        let h = unit_square(5);
        let c = StaggeredField::zeros(&h, GridLocation::Cell).unwrap();
        assert!(inner_product(&a, &c).is_err());
    }

    #[test]
    fn location_kind_flips() {
        use AxisKind::{Cell, Node};
        use GridLocation as L;
        assert_eq!(L::Node.with_axis_kind(0, Cell, 2).unwrap(), L::FaceY);
        assert_eq!(L::FaceX.with_axis_kind(0, Cell, 2).unwrap(), L::Cell);
        assert_eq!(L::Cell.with_axis_kind(1, Node, 2).unwrap(), L::FaceY);
        assert!(L::EdgeZ.with_axis_kind(2, Node, 3).is_err());
        assert_eq!(L::EdgeZ.with_axis_kind(0, Cell, 3).unwrap(), L::FaceY);
        assert_eq!(L::Cell.with_axis_kind(2, Node, 3).unwrap(), L::FaceZ);
    }

    #[test]
    fn csv_export_has_expected_shape() {
        let g = unit_square(2);
        let f = StaggeredField::sample(&g, GridLocation::Cell, |p| p[0] + p[1]).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("i,j,x,y,value"));
    }
}
