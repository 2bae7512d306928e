//! Linear solvers for the assembled saddle-point system.
//!
//! [`solve_direct`] runs a sparse LU factorization with a few steps of
//! iterative refinement and enforces a relative residual of at most 1e-10.
//! [`solve_iterative`] runs MINRES preconditioned by the exact inverse of
//! the block-diagonal stress part and a diagonal Schur estimate on the
//! displacement part; the preconditioner stays positive definite for any
//! Lame coefficients. [`Backend::Auto`] picks the direct path up to 200000
//! unknowns and MINRES beyond that.

use faer::prelude::*;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};

use crate::elasticity::{MacSystem, Var};
use crate::error::{Error, Result};

/// Relative residual every solver has to reach.
pub const RESIDUAL_BOUND: f64 = 1e-10;

/// Unknown count up to which [`Backend::Auto`] factorizes directly.
pub const AUTO_DIRECT_LIMIT: usize = 200_000;

/// Solver selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Backend {
    /// Direct up to [`AUTO_DIRECT_LIMIT`] unknowns, iterative beyond.
    Auto,
    Direct,
    Iterative { tol: f64, max_iterations: usize },
}

impl Default for Backend {
    fn default() -> Self {
        Backend::Auto
    }
}

/// A solved system: the unknown vector, the verified relative residual,
/// and the MINRES iteration count when the iterative path ran.
#[derive(Debug, Clone)]
pub struct Solution {
    pub values: Vec<f64>,
    pub relative_residual: f64,
    pub iterations: Option<usize>,
}

/// Dispatches on the backend.
pub fn solve(system: &MacSystem, backend: Backend) -> Result<Solution> {
    match backend {
        Backend::Auto => {
            if system.n() <= AUTO_DIRECT_LIMIT {
                solve_direct(system)
            } else {
                solve_iterative(system, RESIDUAL_BOUND, 200_000)
            }
        }
        Backend::Direct => solve_direct(system),
        Backend::Iterative {
            tol,
            max_iterations,
        } => solve_iterative(system, tol, max_iterations),
    }
}

fn check_rows(system: &MacSystem) -> Result<()> {
    for r in 0..system.n() {
        let (_, vals) = system.row(r);
        if vals.iter().all(|&v| v == 0.0) {
            return Err(Error::Singular { row: r });
        }
    }
    Ok(())
}

/// Sparse LU with iterative refinement. Fails if the verified relative
/// residual stays above [`RESIDUAL_BOUND`].
pub fn solve_direct(system: &MacSystem) -> Result<Solution> {
    check_rows(system)?;
    let n = system.n();
    let mut triplets = Vec::with_capacity(system.nnz());
    for r in 0..n {
        let (cols, vals) = system.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            triplets.push(Triplet::new(r, c, v));
        }
    }
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| Error::InvalidArgument(format!("sparse matrix creation failed: {e:?}")))?;
    let symbolic = SymbolicLu::try_new(a.symbolic())
        .map_err(|e| Error::InvalidArgument(format!("symbolic factorization failed: {e:?}")))?;
    let lu = Lu::try_new_with_symbolic(symbolic, a.rb())
        .map_err(|e| Error::InvalidArgument(format!("numeric factorization failed: {e:?}")))?;

    let b = Mat::<f64>::from_fn(n, 1, |i, _| system.rhs()[i]);
    let mut x: Vec<f64> = {
        let sol = lu.solve(&b);
        (0..n).map(|i| sol[(i, 0)]).collect()
    };

    let mut residual = system.relative_residual(&x)?;
    for _ in 0..4 {
        if residual <= 1e-13 {
            break;
        }
        let mut kx = vec![0.0; n];
        system.matvec(&x, &mut kx)?;
        let r = Mat::<f64>::from_fn(n, 1, |i, _| system.rhs()[i] - kx[i]);
        let dx = lu.solve(&r);
        for i in 0..n {
            x[i] += dx[(i, 0)];
        }
        let refined = system.relative_residual(&x)?;
        if refined >= residual {
            break;
        }
        residual = refined;
    }

    if residual > RESIDUAL_BOUND {
        return Err(Error::NotConverged {
            tol: RESIDUAL_BOUND,
            iterations: 0,
            residual,
            best: x,
        });
    }
    Ok(Solution {
        values: x,
        relative_residual: residual,
        iterations: None,
    })
}

/// Block-diagonal positive definite preconditioner: the exact inverse of
/// the normal-stress coupling blocks and shear diagonal, plus a diagonal
/// Schur-complement estimate on the displacement block.
struct BlockPreconditioner {
    /// Flat block ranges for the normal stresses: per cell, the scale
    /// `2 mu / vol` applied to `(I + (lambda / 2 mu) J)`.
    normal_offsets: Vec<usize>,
    cell_scale: Vec<f64>,
    n_cells: usize,
    trace_factor: f64,
    /// Plain inverse diagonal for shear and displacement unknowns.
    inv_diag: Vec<f64>,
    first_shear: usize,
}

impl BlockPreconditioner {
    fn build(system: &MacSystem) -> Self {
        let map = system.map();
        let dims = map.dims();
        let params = system.params();
        let grid = system.grid();
        let n = system.n();

        let normal_offsets: Vec<usize> = (0..dims).map(|a| map.offset(Var::normal(a))).collect();
        let mut n_cells = 1;
        for a in 0..dims {
            n_cells *= grid.axis(a).n_cells();
        }
        let mut cell_scale = vec![0.0; n_cells];
        {
            let extents = map.extents(Var::Z11);
            let mut c = 0;
            for k in 0..extents[2] {
                for j in 0..extents[1] {
                    for i in 0..extents[0] {
                        let mut vol = grid.axis(0).cell_width(i) * grid.axis(1).cell_width(j);
                        if dims == 3 {
                            vol *= grid.axis(2).cell_width(k);
                        }
                        cell_scale[c] = 2.0 * params.mu / vol;
                        c += 1;
                    }
                }
            }
        }

        let first_shear = map.offset(Var::shear(0, 1));
        let r = params.trace_ratio(dims);
        let mut inv_diag = vec![0.0; n];

        // Shear rows are diagonal in the stress block; displacement rows get
        // the diagonal of B diag(A)^-1 B^T accumulated from the momentum rows.
        let mut a_diag = vec![0.0; first_shear];
        for &off in &normal_offsets {
            for c in 0..n_cells {
                a_diag[off + c] = (1.0 - r) / cell_scale[c];
            }
        }
        for row in first_shear..n {
            let (cols, vals) = system.row(row);
            let (var, _) = map.describe(row);
            match var {
                Var::Z12 | Var::Z13 | Var::Z23 => {
                    let diag = cols
                        .iter()
                        .zip(vals)
                        .find(|(&c, _)| c == row)
                        .map(|(_, &v)| v)
                        .unwrap_or(0.0);
                    inv_diag[row] = 1.0 / diag;
                }
                _ => {
                    let mut s = 0.0;
                    for (&c, &v) in cols.iter().zip(vals) {
                        let ad = if c < first_shear {
                            a_diag[c]
                        } else {
                            // Shear column: its own diagonal.
                            let (sc, sv) = system.row(c);
                            sc.iter()
                                .zip(sv)
                                .find(|(&cc, _)| cc == c)
                                .map(|(_, &vv)| vv)
                                .unwrap_or(1.0)
                        };
                        s += v * v / ad;
                    }
                    inv_diag[row] = 1.0 / s;
                }
            }
        }

        Self {
            normal_offsets,
            cell_scale,
            n_cells,
            trace_factor: params.lambda / (2.0 * params.mu),
            inv_diag,
            first_shear,
        }
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for c in 0..self.n_cells {
            let mut trace = 0.0;
            for &off in &self.normal_offsets {
                trace += x[off + c];
            }
            for &off in &self.normal_offsets {
                y[off + c] = self.cell_scale[c] * (x[off + c] + self.trace_factor * trace);
            }
        }
        for i in self.first_shear..x.len() {
            y[i] = self.inv_diag[i] * x[i];
        }
    }
}

/// Preconditioned MINRES. Returns [`Error::NotConverged`] carrying the best
/// iterate if the verified relative residual misses `tol` within
/// `max_iterations`.
pub fn solve_iterative(system: &MacSystem, tol: f64, max_iterations: usize) -> Result<Solution> {
    check_rows(system)?;
    let n = system.n();
    let precond = BlockPreconditioner::build(system);
    let b = system.rhs();

    let dot = |u: &[f64], v: &[f64]| -> f64 { u.iter().zip(v).map(|(a, b)| a * b).sum() };

    let mut x = vec![0.0; n];
    let mut r1 = b.to_vec();
    let mut y = vec![0.0; n];
    precond.apply(&r1, &mut y);
    let beta1sq = dot(&r1, &y);
    if beta1sq <= 0.0 {
        let residual = system.relative_residual(&x)?;
        return Ok(Solution {
            values: x,
            relative_residual: residual,
            iterations: Some(0),
        });
    }
    let beta1 = beta1sq.sqrt();

    let mut r2 = r1.clone();
    let mut v = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut w1 = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut av = vec![0.0; n];

    let (mut oldb, mut beta) = (0.0f64, beta1);
    let (mut dbar, mut epsln, mut phibar) = (0.0f64, 0.0f64, beta1);
    let (mut cs, mut sn) = (-1.0f64, 0.0f64);
    let mut iterations = 0;

    for itn in 1..=max_iterations {
        iterations = itn;
        let s = 1.0 / beta;
        for i in 0..n {
            v[i] = s * y[i];
        }
        system.matvec(&v, &mut av)?;
        if itn >= 2 {
            let f = beta / oldb;
            for i in 0..n {
                av[i] -= f * r1[i];
            }
        }
        let alfa = dot(&v, &av);
        let f = alfa / beta;
        for i in 0..n {
            av[i] -= f * r2[i];
        }
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&av);
        precond.apply(&r2, &mut y);
        oldb = beta;
        let betasq = dot(&r2, &y);
        if betasq < 0.0 {
            break;
        }
        beta = betasq.sqrt();

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = (gbar * gbar + beta * beta).sqrt().max(f64::MIN_POSITIVE);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        std::mem::swap(&mut w1, &mut w2);
        std::mem::swap(&mut w2, &mut w);
        for i in 0..n {
            w[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) / gamma;
            x[i] += phi * w[i];
        }

        if phibar <= 0.05 * tol * beta1 || beta <= f64::MIN_POSITIVE {
            let residual = system.relative_residual(&x)?;
            if residual <= tol {
                return Ok(Solution {
                    values: x,
                    relative_residual: residual,
                    iterations: Some(itn),
                });
            }
        }
    }

    let residual = system.relative_residual(&x)?;
    if residual <= tol {
        return Ok(Solution {
            values: x,
            relative_residual: residual,
            iterations: Some(iterations),
        });
    }
    Err(Error::NotConverged {
        tol,
        iterations,
        residual,
        best: x,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::elasticity::{assemble, LameParameters};
    use crate::fields::StaggeredField;
    use crate::fields::GridLocation;
    use crate::grid::{AxisPartition, TensorGrid};

    fn test_system(n: usize, lambda: f64, seed: u64) -> MacSystem {
        let grid = Arc::new(TensorGrid::new_2d(
            AxisPartition::perturbed(n, 0.0, 1.0, 0.3, seed).unwrap(),
            AxisPartition::perturbed(n, 0.0, 1.0, 0.3, seed + 7).unwrap(),
        ));
        let params = LameParameters::new(lambda, 1.0).unwrap();
        let fx = StaggeredField::sample(&grid, GridLocation::FaceX, |p| {
            (3.1 * p[0]).sin() * (2.2 * p[1]).cos() + 0.3
        })
        .unwrap();
        let fy = StaggeredField::sample(&grid, GridLocation::FaceY, |p| {
            (1.7 * p[0] - 0.9 * p[1]).cos()
        })
        .unwrap();
        assemble(&grid, params, &[fx, fy]).unwrap()
    }

    #[test]
    fn direct_meets_residual_bound() {
        for lambda in [10.0, 1e7] {
            let sys = test_system(8, lambda, 1);
            let sol = solve_direct(&sys).unwrap();
            assert!(sol.relative_residual <= RESIDUAL_BOUND);
            let check = sys.relative_residual(&sol.values).unwrap();
            assert!(check <= RESIDUAL_BOUND, "lambda {lambda}: residual {check}");
        }
    }

    #[test]
    fn iterative_matches_direct() {
        let sys = test_system(8, 10.0, 2);
        let direct = solve_direct(&sys).unwrap();
        let iterative = solve_iterative(&sys, 1e-12, 50_000).unwrap();
        assert!(iterative.iterations.unwrap() > 0);
        let scale = direct
            .values
            .iter()
            .map(|v| v.abs())
            .fold(0.0f64, f64::max);
        for (a, b) in direct.values.iter().zip(&iterative.values) {
            assert!((a - b).abs() <= 1e-8 * scale.max(1.0));
        }
    }

    #[test]
    fn iterative_reports_nonconvergence_with_best_iterate() {
        let sys = test_system(8, 10.0, 3);
        match solve_iterative(&sys, 1e-12, 3) {
            Err(Error::NotConverged {
                residual, best, ..
            }) => {
                assert!(residual > 1e-12);
                assert_eq!(best.len(), sys.n());
            }
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn solvers_are_deterministic() {
        let sys = test_system(6, 1e7, 4);
        let a = solve_direct(&sys).unwrap();
        let b = solve_direct(&sys).unwrap();
        assert_eq!(a.values, b.values);
        let c = solve_iterative(&sys, 1e-10, 50_000).unwrap();
        let d = solve_iterative(&sys, 1e-10, 50_000).unwrap();
        assert_eq!(c.values, d.values);
    }

    #[test]
    fn auto_backend_picks_direct_for_small_systems() {
        let sys = test_system(4, 10.0, 5);
        let sol = solve(&sys, Backend::Auto).unwrap();
        assert!(sol.iterations.is_none());
        let sol = solve(
            &sys,
            Backend::Iterative {
                tol: 1e-10,
                max_iterations: 50_000,
            },
        )
        .unwrap();
        assert!(sol.iterations.is_some());
    }
}
