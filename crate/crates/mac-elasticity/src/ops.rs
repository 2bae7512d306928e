//! Staggered difference quotients and their summation-by-parts identities.
//!
//! [`forward_diff`] maps node-type indexing to cell-type indexing along one
//! axis, dividing by the primal width `h_{i+1/2}`. [`dual_diff`] maps back,
//! dividing by the dual width `h_i`; at the two boundary nodes it uses the
//! one-sided quotients `(phi_{1/2} - phi_lo) / h_0` and
//! `(phi_hi - phi_{n-1/2}) / h_n` built from supplied boundary traces.
//! With zero traces the pair is skew-adjoint with respect to the staggered
//! inner products, which [`adjoint_defect`] verifies identity by identity.

use crate::error::{Error, Result};
use crate::fields::{inner_product, AxisKind, GridLocation, StaggeredField};

/// Forward difference along `axis`: `(a_{i+1} - a_i) / h_{i+1/2}`.
///
/// The input must be node-type along `axis`; the result is cell-type there
/// and lives on the correspondingly switched location family.
pub fn forward_diff(a: &StaggeredField, axis: usize) -> Result<StaggeredField> {
    let got = a.location().axis_kind(axis);
    if got != AxisKind::Node {
        return Err(Error::AxisKindMismatch {
            axis,
            expected: AxisKind::Node,
            got,
        });
    }
    let grid = a.grid();
    let loc = a
        .location()
        .with_axis_kind(axis, AxisKind::Cell, grid.dims())?;
    let mut out = StaggeredField::zeros(grid, loc)?;
    let [ex, ey, ez] = out.extents();
    let widths = grid.axis(axis).cell_widths();
    for k in 0..ez {
        for j in 0..ey {
            for i in 0..ex {
                let idx = [i, j, k];
                let mut up = idx;
                up[axis] += 1;
                let d = a.get(up[0], up[1], up[2]) - a.get(idx[0], idx[1], idx[2]);
                out.set(i, j, k, d / widths[idx[axis]]);
            }
        }
    }
    Ok(out)
}

/// Dual difference along `axis`: `(a_{i+1/2} - a_{i-1/2}) / h_i` at interior
/// nodes, with the one-sided boundary quotients built from `low` / `high`.
///
/// The traces hold the boundary values of the differentiated quantity on the
/// two faces orthogonal to `axis`, in lexicographic order over the remaining
/// axes (lower axis fastest), and must match the transverse index count.
pub fn dual_diff(a: &StaggeredField, axis: usize, low: &[f64], high: &[f64]) -> Result<StaggeredField> {
    let got = a.location().axis_kind(axis);
    if got != AxisKind::Cell {
        return Err(Error::AxisKindMismatch {
            axis,
            expected: AxisKind::Cell,
            got,
        });
    }
    let grid = a.grid();
    let loc = a
        .location()
        .with_axis_kind(axis, AxisKind::Node, grid.dims())?;
    let mut out = StaggeredField::zeros(grid, loc)?;
    let [ex, ey, ez] = out.extents();
    let idx_axes: [usize; 2] = match axis {
        0 => [1, 2],
        1 => [0, 2],
        _ => [0, 1],
    };
    let extents = out.extents();
    let transverse = extents[idx_axes[0]] * extents[idx_axes[1]];
    for trace in [low, high] {
        if trace.len() != transverse {
            return Err(Error::TraceLengthMismatch {
                got: trace.len(),
                expected: transverse,
            });
        }
    }
    let part = grid.axis(axis);
    let n = part.n_cells();
    for k in 0..ez {
        for j in 0..ey {
            for i in 0..ex {
                let idx = [i, j, k];
                let m = idx[axis];
                let t = idx[idx_axes[0]] + extents[idx_axes[0]] * idx[idx_axes[1]];
                let mut lo_idx = idx;
                let mut hi_idx = idx;
                let d = if m == 0 {
                    a.get(idx[0], idx[1], idx[2]) - low[t]
                } else if m == n {
                    hi_idx[axis] = m - 1;
                    high[t] - a.get(hi_idx[0], hi_idx[1], hi_idx[2])
                } else {
                    lo_idx[axis] = m - 1;
                    a.get(idx[0], idx[1], idx[2]) - a.get(lo_idx[0], lo_idx[1], lo_idx[2])
                };
                out.set(i, j, k, d / part.dual_width(m));
            }
        }
    }
    Ok(out)
}

/// [`dual_diff`] with homogeneous boundary traces.
pub fn dual_diff_zero(a: &StaggeredField, axis: usize) -> Result<StaggeredField> {
    let extents_kind = |ax: usize| match a
        .location()
        .with_axis_kind(axis, AxisKind::Node, a.grid().dims())
    {
        Ok(loc) => match loc.axis_kind(ax) {
            AxisKind::Node => a.grid().axis(ax).n_nodes(),
            AxisKind::Cell => a.grid().axis(ax).n_cells(),
        },
        Err(_) => 1,
    };
    let mut transverse = 1usize;
    for ax in 0..a.grid().dims() {
        if ax != axis {
            transverse *= extents_kind(ax);
        }
    }
    let zeros = vec![0.0; transverse];
    dual_diff(a, axis, &zeros, &zeros)
}

/// One summation-by-parts identity of the scheme.
///
/// `Normal { axis: a }` pairs a cell field `tau` with the displacement
/// component normal to axis `a`:
/// `(D_a tau, v)_{face_a} + (tau, d_a v)_M = 0`.
/// `Shear { axes: (a, b) }` pairs the symmetric-gradient combination with a
/// shear field `tau` on the edge family shared by axes `a` and `b`:
/// `(D_b v_a + D_a v_b, tau)_E + (v_a, d_b tau)_{face_a} + (v_b, d_a tau)_{face_b} = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SbpIdentity {
    Normal { axis: usize },
    Shear { axes: (usize, usize) },
}

impl SbpIdentity {
    /// The identities relevant in `dims` dimensions.
    pub fn all(dims: usize) -> Vec<Self> {
        let mut out: Vec<Self> = (0..dims).map(|axis| Self::Normal { axis }).collect();
        out.push(Self::Shear { axes: (0, 1) });
        if dims == 3 {
            out.push(Self::Shear { axes: (0, 2) });
            out.push(Self::Shear { axes: (1, 2) });
        }
        out
    }
}

fn face_location(axis: usize) -> GridLocation {
    match axis {
        0 => GridLocation::FaceX,
        1 => GridLocation::FaceY,
        _ => GridLocation::FaceZ,
    }
}

fn expect_location(f: &StaggeredField, loc: GridLocation) -> Result<()> {
    if f.location() != loc {
        return Err(Error::FieldMismatch);
    }
    Ok(())
}

pub(crate) fn check_zero_boundary(v: &StaggeredField, axis: usize) -> Result<()> {
    let [ex, ey, ez] = v.extents();
    let extents = [ex, ey, ez];
    for k in 0..ez {
        for j in 0..ey {
            for i in 0..ex {
                let idx = [i, j, k];
                if (idx[axis] == 0 || idx[axis] == extents[axis] - 1) && v.get(i, j, k) != 0.0 {
                    return Err(Error::NonzeroBoundaryTrace);
                }
            }
        }
    }
    Ok(())
}

/// Left side plus right side of one summation-by-parts identity, which is
/// zero in exact arithmetic. The displacement slots in `v` must vanish at
/// their stored boundary faces: one field (the component normal to the
/// axis) for a normal identity, the two paired components for a shear one.
pub fn adjoint_defect(identity: SbpIdentity, v: &[&StaggeredField], tau: &StaggeredField) -> Result<f64> {
    match identity {
        SbpIdentity::Normal { axis } => {
            let [va] = v else {
                return Err(Error::InvalidArgument(
                    "a normal identity takes exactly one displacement field".into(),
                ));
            };
            expect_location(tau, GridLocation::Cell)?;
            expect_location(va, face_location(axis))?;
            check_zero_boundary(va, axis)?;
            let lhs = inner_product(&dual_diff_zero(tau, axis)?, va)?;
            let rhs = inner_product(tau, &forward_diff(va, axis)?)?;
            Ok(lhs + rhs)
        }
        SbpIdentity::Shear { axes: (a, b) } => {
            let [va, vb] = v else {
                return Err(Error::InvalidArgument(
                    "a shear identity takes exactly two displacement fields".into(),
                ));
            };
            expect_location(va, face_location(a))?;
            expect_location(vb, face_location(b))?;
            check_zero_boundary(va, a)?;
            check_zero_boundary(vb, b)?;
            let edge = face_location(a).with_axis_kind(b, AxisKind::Node, tau.grid().dims())?;
            expect_location(tau, edge)?;
            let sym = dual_diff_zero(va, b)?.add(&dual_diff_zero(vb, a)?)?;
            let lhs = inner_product(&sym, tau)?;
            let rhs = inner_product(va, &forward_diff(tau, b)?)?
                + inner_product(vb, &forward_diff(tau, a)?)?;
            Ok(lhs + rhs)
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::fields::norm;
    use crate::grid::{AxisPartition, TensorGrid};

    fn rough_2d(seed: u64) -> Arc<TensorGrid> {
        Arc::new(TensorGrid::new_2d(
            AxisPartition::perturbed(7, 0.0, 1.0, 0.35, seed).unwrap(),
            AxisPartition::perturbed(5, 0.0, 1.0, 0.35, seed + 100).unwrap(),
        ))
    }

    fn rough_3d(seed: u64) -> Arc<TensorGrid> {
        Arc::new(TensorGrid::new_3d(
            AxisPartition::perturbed(5, 0.0, 1.0, 0.35, seed).unwrap(),
            AxisPartition::perturbed(4, 0.0, 1.0, 0.35, seed + 100).unwrap(),
            AxisPartition::perturbed(3, 0.0, 1.0, 0.35, seed + 200).unwrap(),
        ))
    }

    fn random_field(
        grid: &Arc<TensorGrid>,
        loc: GridLocation,
        rng: &mut ChaCha8Rng,
        zero_boundary_axis: Option<usize>,
    ) -> StaggeredField {
        let mut f = StaggeredField::zeros(grid, loc).unwrap();
        let [ex, ey, ez] = f.extents();
        for k in 0..ez {
            for j in 0..ey {
                for i in 0..ex {
                    f.set(i, j, k, rng.gen_range(-1.0..1.0));
                }
            }
        }
        if let Some(axis) = zero_boundary_axis {
            let extents = f.extents();
            for k in 0..ez {
                for j in 0..ey {
                    for i in 0..ex {
                        let idx = [i, j, k];
                        if idx[axis] == 0 || idx[axis] == extents[axis] - 1 {
                            f.set(i, j, k, 0.0);
                        }
                    }
                }
            }
        }
        f
    }

    #[test]
    fn forward_diff_exact_on_linear() {
        let g = rough_2d(1);
        let f = StaggeredField::sample(&g, GridLocation::Node, |p| 3.0 * p[0] - 2.0 * p[1] + 0.5)
            .unwrap();
        let dx = forward_diff(&f, 0).unwrap();
        assert_eq!(dx.location(), GridLocation::FaceY);
        for v in dx.values() {
            assert!((v - 3.0).abs() < 1e-12);
        }
        let dy = forward_diff(&f, 1).unwrap();
        assert_eq!(dy.location(), GridLocation::FaceX);
        for v in dy.values() {
            assert!((v + 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_diff_requires_node_axis() {
        let g = rough_2d(2);
        let f = StaggeredField::zeros(&g, GridLocation::FaceX).unwrap();
        assert!(forward_diff(&f, 0).is_ok());
        assert!(matches!(
            forward_diff(&f, 1),
            Err(Error::AxisKindMismatch { axis: 1, .. })
        ));
    }

    #[test]
    fn dual_diff_exact_on_linear_with_exact_traces() {
        let g = rough_2d(3);
        let lin = |p: &[f64]| 4.0 * p[0] + 1.5 * p[1] - 0.25;
        let f = StaggeredField::sample(&g, GridLocation::Cell, lin).unwrap();
        let ny = g.axis(1).n_cells();
        let x0 = g.axis(0).start();
        let x1 = g.axis(0).end();
        let low: Vec<f64> = (0..ny).map(|j| lin(&[x0, g.axis(1).midpoint(j)])).collect();
        let high: Vec<f64> = (0..ny).map(|j| lin(&[x1, g.axis(1).midpoint(j)])).collect();
        let dx = dual_diff(&f, 0, &low, &high).unwrap();
        assert_eq!(dx.location(), GridLocation::FaceX);
        for v in dx.values() {
            assert!((v - 4.0).abs() < 1e-11, "got {v}");
        }
    }

    #[test]
    fn dual_diff_boundary_quotients() {
        // One cell in x: the two boundary nodes use half the cell width.
        let g = Arc::new(TensorGrid::new_2d(
            AxisPartition::uniform(1, 0.0, 1.0).unwrap(),
            AxisPartition::uniform(1, 0.0, 1.0).unwrap(),
        ));
        let mut f = StaggeredField::zeros(&g, GridLocation::Cell).unwrap();
        f.set(0, 0, 0, 3.0);
        let d = dual_diff(&f, 0, &[1.0], &[7.0]).unwrap();
        assert!((d.get(0, 0, 0) - (3.0 - 1.0) / 0.5).abs() < 1e-15);
        assert!((d.get(1, 0, 0) - (7.0 - 3.0) / 0.5).abs() < 1e-15);
    }

    #[test]
    fn dual_diff_trace_validation() {
        let g = rough_2d(4);
        let f = StaggeredField::zeros(&g, GridLocation::Cell).unwrap();
        let ny = g.axis(1).n_cells();
        let bad = vec![0.0; ny + 1];
        let good = vec![0.0; ny];
        assert!(matches!(
            dual_diff(&f, 0, &bad, &good),
            Err(Error::TraceLengthMismatch { .. })
        ));
        let node = StaggeredField::zeros(&g, GridLocation::Node).unwrap();
        assert!(dual_diff(&node, 0, &good, &good).is_err());
    }

    #[test]
    fn dual_and_forward_are_inverse_slopes_on_uniform_grid() {
        // On a uniform axis, d(D(phi)) reproduces the second difference of a
        // quadratic exactly in the interior cells.
        let g = Arc::new(TensorGrid::new_2d(
            AxisPartition::uniform(8, 0.0, 1.0).unwrap(),
            AxisPartition::uniform(3, 0.0, 1.0).unwrap(),
        ));
        let f = StaggeredField::sample(&g, GridLocation::Cell, |p| p[0] * p[0]).unwrap();
        let d = dual_diff_zero(&f, 0).unwrap();
        let dd = forward_diff(&d, 0).unwrap();
        for i in 1..7 {
            assert!((dd.get(i, 0, 0) - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sbp_defects_vanish_2d() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for seed in 0..20u64 {
            let g = rough_2d(seed);
            let tau_c = random_field(&g, GridLocation::Cell, &mut rng, None);
            let tau_n = random_field(&g, GridLocation::Node, &mut rng, None);
            let vx = random_field(&g, GridLocation::FaceX, &mut rng, Some(0));
            let vy = random_field(&g, GridLocation::FaceY, &mut rng, Some(1));
            let scale = norm(&tau_c).unwrap() + norm(&vx).unwrap() + norm(&vy).unwrap() + 1.0;
            for identity in SbpIdentity::all(2) {
                let defect = match identity {
                    SbpIdentity::Normal { axis: 0 } => {
                        adjoint_defect(identity, &[&vx], &tau_c).unwrap()
                    }
                    SbpIdentity::Normal { .. } => {
                        adjoint_defect(identity, &[&vy], &tau_c).unwrap()
                    }
                    SbpIdentity::Shear { .. } => {
                        adjoint_defect(identity, &[&vx, &vy], &tau_n).unwrap()
                    }
                };
                assert!(
                    defect.abs() <= 1e-13 * scale,
                    "{identity:?} defect {defect} on seed {seed}"
                );
            }
        }
    }

    #[test]
    fn sbp_defects_vanish_3d() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for seed in 0..10u64 {
            let g = rough_3d(seed);
            let tau_c = random_field(&g, GridLocation::Cell, &mut rng, None);
            let vs = [
                random_field(&g, GridLocation::FaceX, &mut rng, Some(0)),
                random_field(&g, GridLocation::FaceY, &mut rng, Some(1)),
                random_field(&g, GridLocation::FaceZ, &mut rng, Some(2)),
            ];
            for identity in SbpIdentity::all(3) {
                let defect = match identity {
                    SbpIdentity::Normal { axis } => {
                        adjoint_defect(identity, &[&vs[axis]], &tau_c).unwrap()
                    }
                    SbpIdentity::Shear { axes: (a, b) } => {
                        let edge = face_location(a)
                            .with_axis_kind(b, AxisKind::Node, 3)
                            .unwrap();
                        let tau = random_field(&g, edge, &mut rng, None);
                        adjoint_defect(identity, &[&vs[a], &vs[b]], &tau).unwrap()
                    }
                };
                assert!(defect.abs() <= 1e-13, "{identity:?} defect {defect}");
            }
        }
    }

    #[test]
    fn adjoint_defect_rejects_nonzero_boundary() {
        let g = rough_2d(11);
        let tau = StaggeredField::zeros(&g, GridLocation::Cell).unwrap();
        let mut vx = StaggeredField::zeros(&g, GridLocation::FaceX).unwrap();
        vx.set(0, 1, 0, 1.0);
        assert!(matches!(
            adjoint_defect(SbpIdentity::Normal { axis: 0 }, &[&vx], &tau),
            Err(Error::NonzeroBoundaryTrace)
        ));
    }

    #[test]
    fn identity_list_sizes() {
        assert_eq!(SbpIdentity::all(2).len(), 3);
        assert_eq!(SbpIdentity::all(3).len(), 6);
    }
}
