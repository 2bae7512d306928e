//! Manufactured solutions, exact stresses and body forces, corrected
//! interpolants, error evaluation in the staggered norms, and
//! convergence-rate studies.
//!
//! Each case is a closed-form displacement on the unit square or cube that
//! vanishes on the boundary, written as a sum of separable terms so that
//! every partial derivative up to third order is available exactly. The
//! stress follows from `sigma = 2 mu eps(u) + lambda (div u) I` and the
//! body force from `f = div sigma`.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::elasticity::{assemble, LameParameters, MacSystem, StressState, Var};
use crate::error::{Error, Result};
use crate::fields::{norm, GridLocation, StaggeredField};
use crate::grid::{AxisPartition, TensorGrid};
use crate::solve::{solve, Backend, Solution};

const PI: f64 = std::f64::consts::PI;

/// One-dimensional factors of the separable manufactured terms, evaluated
/// together with their first three derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Factor {
    One,
    /// `t`
    Identity,
    /// `sin(2 pi t)`
    Sin2Pi,
    /// `cos(2 pi t) - 1`
    Cos2PiM1,
    /// `1 - cos(2 pi t)`
    OneMCos2Pi,
    /// `sin(pi t)`
    SinPi,
    /// `t^2 (1 - t)^2`
    Quartic,
    /// `t (1 - t)(1 - 2 t) = t - 3 t^2 + 2 t^3`
    CubicOdd,
    /// `e^t t (1 - t)`
    ExpRise,
    /// `e^{-t} t (1 - t)`
    ExpFall,
    /// `sin^3(pi t)`
    SinCubed,
    /// `cos(pi t) sin^2(pi t)`
    CosSinSq,
}

impl Factor {
    fn eval(self, t: f64, order: usize) -> f64 {
        let (s, c) = (PI * t).sin_cos();
        match (self, order) {
            (Factor::One, 0) => 1.0,
            (Factor::One, _) => 0.0,

            (Factor::Identity, 0) => t,
            (Factor::Identity, 1) => 1.0,
            (Factor::Identity, _) => 0.0,

            (Factor::Sin2Pi, 0) => (2.0 * PI * t).sin(),
            (Factor::Sin2Pi, 1) => 2.0 * PI * (2.0 * PI * t).cos(),
            (Factor::Sin2Pi, 2) => -4.0 * PI * PI * (2.0 * PI * t).sin(),
            (Factor::Sin2Pi, 3) => -8.0 * PI * PI * PI * (2.0 * PI * t).cos(),

            (Factor::Cos2PiM1, 0) => (2.0 * PI * t).cos() - 1.0,
            (Factor::Cos2PiM1, 1) => -2.0 * PI * (2.0 * PI * t).sin(),
            (Factor::Cos2PiM1, 2) => -4.0 * PI * PI * (2.0 * PI * t).cos(),
            (Factor::Cos2PiM1, 3) => 8.0 * PI * PI * PI * (2.0 * PI * t).sin(),

            (Factor::OneMCos2Pi, 0) => 1.0 - (2.0 * PI * t).cos(),
            (Factor::OneMCos2Pi, 1) => 2.0 * PI * (2.0 * PI * t).sin(),
            (Factor::OneMCos2Pi, 2) => 4.0 * PI * PI * (2.0 * PI * t).cos(),
            (Factor::OneMCos2Pi, 3) => -8.0 * PI * PI * PI * (2.0 * PI * t).sin(),

            (Factor::SinPi, 0) => s,
            (Factor::SinPi, 1) => PI * c,
            (Factor::SinPi, 2) => -PI * PI * s,
            (Factor::SinPi, 3) => -PI * PI * PI * c,

            (Factor::Quartic, 0) => t * t * (1.0 - t) * (1.0 - t),
            (Factor::Quartic, 1) => 2.0 * (t - t * t) * (1.0 - 2.0 * t),
            (Factor::Quartic, 2) => 2.0 * (6.0 * t * t - 6.0 * t + 1.0),
            (Factor::Quartic, 3) => 24.0 * t - 12.0,

            (Factor::CubicOdd, 0) => t - 3.0 * t * t + 2.0 * t * t * t,
            (Factor::CubicOdd, 1) => 1.0 - 6.0 * t + 6.0 * t * t,
            (Factor::CubicOdd, 2) => -6.0 + 12.0 * t,
            (Factor::CubicOdd, 3) => 12.0,

            (Factor::ExpRise, 0) => t.exp() * (t - t * t),
            (Factor::ExpRise, 1) => t.exp() * (1.0 - t - t * t),
            (Factor::ExpRise, 2) => -t.exp() * t * (t + 3.0),
            (Factor::ExpRise, 3) => t.exp() * (-t * t - 5.0 * t - 3.0),

            (Factor::ExpFall, 0) => (-t).exp() * (t - t * t),
            (Factor::ExpFall, 1) => (-t).exp() * (t * t - 3.0 * t + 1.0),
            (Factor::ExpFall, 2) => (-t).exp() * (-t * t + 5.0 * t - 4.0),
            (Factor::ExpFall, 3) => (-t).exp() * (t * t - 7.0 * t + 9.0),

            (Factor::SinCubed, 0) => s * s * s,
            (Factor::SinCubed, 1) => 3.0 * PI * s * s * c,
            (Factor::SinCubed, 2) => 3.0 * PI * PI * s * (2.0 * c * c - s * s),
            (Factor::SinCubed, 3) => 3.0 * PI * PI * PI * c * (2.0 * c * c - 7.0 * s * s),

            (Factor::CosSinSq, 0) => c * s * s,
            (Factor::CosSinSq, 1) => PI * s * (2.0 * c * c - s * s),
            (Factor::CosSinSq, 2) => PI * PI * c * (2.0 * c * c - 7.0 * s * s),
            (Factor::CosSinSq, 3) => PI * PI * PI * s * (7.0 * s * s - 20.0 * c * c),

            _ => panic!("derivative order {order} not supported"),
        }
    }
}

type Term = (f64, [Factor; 3]);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CaseKind {
    /// 2D trigonometric solution with a `1/(1+lambda)` part.
    Example1,
    /// 2D polynomial/exponential solution with `1/lambda` parts.
    Example2,
    /// 3D trigonometric solution with a `1 + 1/lambda` amplitude.
    Example3,
    /// `u = (x, 0)`: constant strain, for stress algebra checks only.
    #[cfg_attr(not(test), allow(dead_code))]
    LinearX,
}

/// A closed-form displacement field on the unit square or cube together
/// with material parameters; stress and body force derive from it.
#[derive(Debug, Clone)]
pub struct ManufacturedCase {
    kind: CaseKind,
    params: LameParameters,
}

impl ManufacturedCase {
    pub fn example1(params: LameParameters) -> Self {
        Self {
            kind: CaseKind::Example1,
            params,
        }
    }

    pub fn example2(params: LameParameters) -> Self {
        Self {
            kind: CaseKind::Example2,
            params,
        }
    }

    pub fn example3(params: LameParameters) -> Self {
        Self {
            kind: CaseKind::Example3,
            params,
        }
    }

    #[cfg(test)]
    pub(crate) fn linear_x(params: LameParameters) -> Self {
        Self {
            kind: CaseKind::LinearX,
            params,
        }
    }

    pub fn by_name(name: &str, params: LameParameters) -> Result<Self> {
        match name {
            "example1" => Ok(Self::example1(params)),
            "example2" => Ok(Self::example2(params)),
            "example3" => Ok(Self::example3(params)),
            _ => Err(Error::InvalidArgument(format!(
                "unknown case '{name}' (expected example1, example2, or example3)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            CaseKind::Example1 => "example1",
            CaseKind::Example2 => "example2",
            CaseKind::Example3 => "example3",
            CaseKind::LinearX => "linear-x",
        }
    }

    pub fn dims(&self) -> usize {
        match self.kind {
            CaseKind::Example3 => 3,
            _ => 2,
        }
    }

    pub fn params(&self) -> &LameParameters {
        &self.params
    }

    fn terms(&self, comp: usize) -> Vec<Term> {
        use Factor::*;
        let lambda = self.params.lambda;
        match self.kind {
            CaseKind::Example1 => {
                let c = 1.0 / (1.0 + lambda);
                match comp {
                    0 => vec![
                        (1.0, [Cos2PiM1, Sin2Pi, One]),
                        (c, [SinPi, SinPi, One]),
                    ],
                    _ => vec![
                        (1.0, [Sin2Pi, OneMCos2Pi, One]),
                        (c, [SinPi, SinPi, One]),
                    ],
                }
            }
            CaseKind::Example2 => {
                let c = 1.0 / lambda;
                match comp {
                    0 => vec![
                        (1.0, [Quartic, CubicOdd, One]),
                        (c, [ExpRise, ExpFall, One]),
                    ],
                    _ => vec![
                        (-1.0, [CubicOdd, Quartic, One]),
                        (c, [SinPi, SinPi, One]),
                    ],
                }
            }
            CaseKind::Example3 => {
                let k = 9.0 * PI * PI * (1.0 + 1.0 / lambda);
                match comp {
                    0 => vec![(k, [SinCubed, CosSinSq, CosSinSq])],
                    1 => vec![(k, [CosSinSq, SinCubed, CosSinSq])],
                    _ => vec![(-2.0 * k, [CosSinSq, CosSinSq, SinCubed])],
                }
            }
            CaseKind::LinearX => match comp {
                0 => vec![(1.0, [Identity, One, One])],
                _ => vec![],
            },
        }
    }

    /// Mixed partial of displacement component `comp` with the given
    /// derivative order per axis (total order at most 3).
    pub fn partial(&self, comp: usize, orders: [usize; 3], p: &[f64]) -> f64 {
        let mut point = [0.0; 3];
        point[..p.len()].copy_from_slice(p);
        let mut sum = 0.0;
        for (coef, factors) in self.terms(comp) {
            let mut prod = coef;
            for a in 0..3 {
                prod *= factors[a].eval(point[a], orders[a]);
            }
            sum += prod;
        }
        sum
    }

    pub fn displacement(&self, comp: usize, p: &[f64]) -> f64 {
        self.partial(comp, [0, 0, 0], p)
    }

    pub fn grad(&self, comp: usize, axis: usize, p: &[f64]) -> f64 {
        let mut orders = [0usize; 3];
        orders[axis] = 1;
        self.partial(comp, orders, p)
    }

    pub fn hess(&self, comp: usize, a: usize, b: usize, p: &[f64]) -> f64 {
        let mut orders = [0usize; 3];
        orders[a] += 1;
        orders[b] += 1;
        self.partial(comp, orders, p)
    }

    fn div_u(&self, p: &[f64]) -> f64 {
        (0..self.dims()).map(|a| self.grad(a, a, p)).sum()
    }
}

/// Exact stress component `sigma_ab` at a point:
/// `mu (du_a/dx_b + du_b/dx_a) + delta_ab lambda div u`.
pub fn exact_stress(case: &ManufacturedCase, a: usize, b: usize, p: &[f64]) -> f64 {
    let mu = case.params().mu;
    let mut sigma = mu * (case.grad(a, b, p) + case.grad(b, a, p));
    if a == b {
        sigma += case.params().lambda * case.div_u(p);
    }
    sigma
}

/// Exact body force component: `f_a = sum_b d sigma_ab / dx_b`, expanded as
/// `mu lap u_a + (lambda + mu) d_a div u`.
pub fn body_force(case: &ManufacturedCase, comp: usize, p: &[f64]) -> f64 {
    let dims = case.dims();
    let params = case.params();
    let mut lap = 0.0;
    let mut grad_div = 0.0;
    for b in 0..dims {
        lap += case.hess(comp, b, b, p);
        let mut orders = [0usize; 3];
        orders[b] += 1;
        orders[comp] += 1;
        grad_div += case.partial(b, orders, p);
    }
    params.mu * lap + (params.lambda + params.mu) * grad_div
}

/// Samples the body force of a case at the face midpoints of a grid, one
/// component per axis, ready for [`assemble`].
pub fn body_force_fields(
    case: &ManufacturedCase,
    grid: &Arc<TensorGrid>,
) -> Result<Vec<StaggeredField>> {
    let dims = grid.dims();
    if dims != case.dims() {
        return Err(Error::InvalidArgument(format!(
            "case {} is {}-dimensional but the grid has {dims} axes",
            case.name(),
            case.dims()
        )));
    }
    (0..dims)
        .map(|a| {
            StaggeredField::sample(grid, Var::displacement(a).location(dims), |p| {
                body_force(case, a, p)
            })
        })
        .collect()
}

/// Samples the exact displacement at the face midpoints.
pub fn exact_displacement_fields(
    case: &ManufacturedCase,
    grid: &Arc<TensorGrid>,
) -> Result<Vec<StaggeredField>> {
    let dims = grid.dims();
    (0..dims)
        .map(|a| {
            StaggeredField::sample(grid, Var::displacement(a).location(dims), |p| {
                case.displacement(a, p)
            })
        })
        .collect()
}

/// Samples the exact stress at the staggered stress locations.
pub fn exact_stress_state(case: &ManufacturedCase, grid: &Arc<TensorGrid>) -> Result<StressState> {
    let dims = grid.dims();
    let normals = (0..dims)
        .map(|a| {
            StaggeredField::sample(grid, GridLocation::Cell, |p| exact_stress(case, a, a, p))
        })
        .collect::<Result<Vec<_>>>()?;
    let shears = crate::elasticity::shear_pairs(dims)
        .iter()
        .map(|&(a, b)| {
            StaggeredField::sample(grid, Var::shear(a, b).location(dims), |p| {
                exact_stress(case, a, b, p)
            })
        })
        .collect::<Result<Vec<_>>>()?;
    StressState::from_fields(normals, shears)
}

/// The second-order corrected interpolants: displacement components carry
/// `-(w_b^2 / 8) d^2 u_a / dx_b^2` corrections along their cell-type axes,
/// normal stresses carry `-(w_b^2 / 8) d^2 sigma_aa / dx_b^2` along every
/// axis, shear stresses are plain point samples. Widths are the local cell
/// widths, so the corrections are well defined on non-uniform grids.
pub fn interpolant_fields(
    case: &ManufacturedCase,
    grid: &Arc<TensorGrid>,
) -> Result<(Vec<StaggeredField>, StressState)> {
    let dims = grid.dims();
    if dims != case.dims() {
        return Err(Error::InvalidArgument(format!(
            "case {} is {}-dimensional but the grid has {dims} axes",
            case.name(),
            case.dims()
        )));
    }
    let params = *case.params();

    let mut displacements = Vec::with_capacity(dims);
    for a in 0..dims {
        let loc = Var::displacement(a).location(dims);
        let mut field = exact_displacement_fields_component(case, grid, a)?;
        let [ex, ey, ez] = field.extents();
        for k in 0..ez {
            for j in 0..ey {
                for i in 0..ex {
                    let idx = [i, j, k];
                    let mut p = [0.0; 3];
                    for ax in 0..dims {
                        p[ax] = field.coord(ax, idx[ax]);
                    }
                    let mut corr = 0.0;
                    for b in 0..dims {
                        if b == a {
                            continue;
                        }
                        let w = grid.axis(b).cell_width(idx[b]);
                        corr += w * w / 8.0 * case.hess(a, b, b, &p[..dims]);
                    }
                    let v = field.get(i, j, k) - corr;
                    field.set(i, j, k, v);
                }
            }
        }
        debug_assert_eq!(field.location(), loc);
        displacements.push(field);
    }

    let mut normals = Vec::with_capacity(dims);
    for a in 0..dims {
        let field = StaggeredField::sample(grid, GridLocation::Cell, |p| {
            let mut v = exact_stress(case, a, a, p);
            let mut point = [0.0; 3];
            point[..p.len()].copy_from_slice(p);
            for b in 0..dims {
                // Local widths: the sample point is a cell midpoint, so its
                // index along each axis is recoverable from the coordinate.
                let w = local_cell_width(grid, b, point[b]);
                v -= w * w / 8.0 * stress_second_partial(case, &params, a, b, &point[..p.len()]);
            }
            v
        })?;
        normals.push(field);
    }
    let shears = crate::elasticity::shear_pairs(dims)
        .iter()
        .map(|&(a, b)| {
            StaggeredField::sample(grid, Var::shear(a, b).location(dims), |p| {
                exact_stress(case, a, b, p)
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok((displacements, StressState::from_fields(normals, shears)?))
}

fn exact_displacement_fields_component(
    case: &ManufacturedCase,
    grid: &Arc<TensorGrid>,
    a: usize,
) -> Result<StaggeredField> {
    let dims = grid.dims();
    StaggeredField::sample(grid, Var::displacement(a).location(dims), |p| {
        case.displacement(a, p)
    })
}

/// `d^2 sigma_aa / dx_b^2` in closed form via third partials of u.
fn stress_second_partial(
    case: &ManufacturedCase,
    params: &LameParameters,
    a: usize,
    b: usize,
    p: &[f64],
) -> f64 {
    let dims = case.dims();
    let mut orders = [0usize; 3];
    orders[b] += 2;
    orders[a] += 1;
    let mut v = 2.0 * params.mu * case.partial(a, orders, p);
    for c in 0..dims {
        let mut o = [0usize; 3];
        o[b] += 2;
        o[c] += 1;
        v += params.lambda * case.partial(c, o, p);
    }
    v
}

fn local_cell_width(grid: &TensorGrid, axis: usize, coord: f64) -> f64 {
    let part = grid.axis(axis);
    for i in 0..part.n_cells() {
        if coord <= part.node(i + 1) + 1e-14 {
            return part.cell_width(i);
        }
    }
    part.cell_width(part.n_cells() - 1)
}

/// One measured error: which component, in which norm family, how large.
#[derive(Debug, Clone)]
pub struct ComponentError {
    pub component: String,
    pub norm: String,
    pub error: f64,
}

/// Errors of a decoded solution against the exact solution, and optionally
/// against the corrected interpolants.
#[derive(Debug, Clone)]
pub struct ErrorReport {
    pub vs_exact: Vec<ComponentError>,
    pub vs_interpolant: Vec<ComponentError>,
}

impl ErrorReport {
    pub fn error(&self, component: &str) -> Option<f64> {
        self.vs_exact
            .iter()
            .find(|e| e.component == component)
            .map(|e| e.error)
    }
}

/// Measures a solution against the exact fields at the staggered points:
/// displacement components in their face norms, stresses in the cell and
/// node/edge norms. With `with_interpolant` the same differences are also
/// taken against the corrected interpolants.
pub fn error_report(
    solution: &Solution,
    case: &ManufacturedCase,
    system: &MacSystem,
    with_interpolant: bool,
) -> Result<ErrorReport> {
    let grid = system.grid();
    if grid.dims() != case.dims() {
        return Err(Error::FieldMismatch);
    }
    let dims = grid.dims();
    let (stress, disp) = system.decode(&solution.values)?;

    let exact_u = exact_displacement_fields(case, grid)?;
    let exact_z = exact_stress_state(case, grid)?;

    let mut vs_exact = Vec::new();
    for a in 0..dims {
        let diff = disp.component(a).sub(&exact_u[a])?;
        vs_exact.push(ComponentError {
            component: Var::displacement(a).name().into(),
            norm: diff.location().norm_tag(dims).into(),
            error: norm(&diff)?,
        });
    }
    for a in 0..dims {
        let diff = stress.normal(a).sub(exact_z.normal(a))?;
        vs_exact.push(ComponentError {
            component: Var::normal(a).name().into(),
            norm: diff.location().norm_tag(dims).into(),
            error: norm(&diff)?,
        });
    }
    for &(a, b) in crate::elasticity::shear_pairs(dims) {
        let diff = stress.shear(a, b).sub(exact_z.shear(a, b))?;
        vs_exact.push(ComponentError {
            component: Var::shear(a, b).name().into(),
            norm: diff.location().norm_tag(dims).into(),
            error: norm(&diff)?,
        });
    }

    let mut vs_interpolant = Vec::new();
    if with_interpolant {
        let (tilde_u, tilde_z) = interpolant_fields(case, grid)?;
        for a in 0..dims {
            let diff = disp.component(a).sub(&tilde_u[a])?;
            vs_interpolant.push(ComponentError {
                component: Var::displacement(a).name().into(),
                norm: diff.location().norm_tag(dims).into(),
                error: norm(&diff)?,
            });
        }
        for a in 0..dims {
            let diff = stress.normal(a).sub(tilde_z.normal(a))?;
            vs_interpolant.push(ComponentError {
                component: Var::normal(a).name().into(),
                norm: diff.location().norm_tag(dims).into(),
                error: norm(&diff)?,
            });
        }
        for &(a, b) in crate::elasticity::shear_pairs(dims) {
            let diff = stress.shear(a, b).sub(tilde_z.shear(a, b))?;
            vs_interpolant.push(ComponentError {
                component: Var::shear(a, b).name().into(),
                norm: diff.location().norm_tag(dims).into(),
                error: norm(&diff)?,
            });
        }
    }

    Ok(ErrorReport {
        vs_exact,
        vs_interpolant,
    })
}

/// How the study meshes are generated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeshMode {
    Uniform,
    /// Interior nodes of the base mesh shifted by seeded random offsets of
    /// at most `amplitude` cell widths; refinements bisect the result.
    Perturbed { amplitude: f64, seed: u64 },
}

impl MeshMode {
    pub fn describe(&self) -> String {
        match self {
            MeshMode::Uniform => "uniform".into(),
            MeshMode::Perturbed { amplitude, seed } => {
                format!("perturbed(amplitude={amplitude}, seed={seed})")
            }
        }
    }
}

/// A convergence study: one case, a base mesh, and a number of factor-2
/// refinements.
#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub case: ManufacturedCase,
    pub base_cells: usize,
    pub levels: usize,
    pub mesh: MeshMode,
    pub backend: Backend,
    pub with_interpolant: bool,
}

/// Results of one refinement level.
#[derive(Debug, Clone)]
pub struct LevelRecord {
    pub cells: Vec<usize>,
    pub errors: Vec<ComponentError>,
    pub interpolant_errors: Vec<ComponentError>,
    pub residual: f64,
    pub iterations: Option<usize>,
    pub failure: Option<String>,
}

/// Per-level errors and pairwise convergence rates of one study.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub case_name: String,
    pub lambda: f64,
    pub mu: f64,
    pub dims: usize,
    pub mesh: MeshMode,
    pub levels: Vec<LevelRecord>,
}

impl ConvergenceReport {
    pub fn components(&self) -> Vec<String> {
        self.levels
            .iter()
            .find(|l| !l.errors.is_empty())
            .map(|l| l.errors.iter().map(|e| e.component.clone()).collect())
            .unwrap_or_default()
    }

    pub fn error(&self, level: usize, component: &str) -> Option<f64> {
        self.levels.get(level)?.errors.iter().find_map(|e| {
            if e.component == component {
                Some(e.error)
            } else {
                None
            }
        })
    }

    /// `log2(e_{k-1} / e_k)` across one factor-2 refinement; `None` at the
    /// base level or when either level failed.
    pub fn rate(&self, level: usize, component: &str) -> Option<f64> {
        if level == 0 {
            return None;
        }
        let coarse = self.error(level - 1, component)?;
        let fine = self.error(level, component)?;
        if coarse <= 0.0 || fine <= 0.0 {
            return None;
        }
        Some((coarse / fine).log2())
    }

    pub fn interpolant_error(&self, level: usize, component: &str) -> Option<f64> {
        self.levels
            .get(level)?
            .interpolant_errors
            .iter()
            .find_map(|e| {
                if e.component == component {
                    Some(e.error)
                } else {
                    None
                }
            })
    }

    pub fn interpolant_rate(&self, level: usize, component: &str) -> Option<f64> {
        if level == 0 {
            return None;
        }
        let coarse = self.interpolant_error(level - 1, component)?;
        let fine = self.interpolant_error(level, component)?;
        if coarse <= 0.0 || fine <= 0.0 {
            return None;
        }
        Some((coarse / fine).log2())
    }

    /// One row per level per component:
    /// `level,nx,ny[,nz],component,norm,error,rate,residual`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if self.dims == 2 {
            out.push_str("level,nx,ny,component,norm,error,rate,residual\n");
        } else {
            out.push_str("level,nx,ny,nz,component,norm,error,rate,residual\n");
        }
        for (lvl, rec) in self.levels.iter().enumerate() {
            let cells: Vec<String> = rec.cells.iter().map(|c| c.to_string()).collect();
            for e in &rec.errors {
                let rate = self
                    .rate(lvl, &e.component)
                    .map(|r| format!("{r:.4}"))
                    .unwrap_or_default();
                let _ = writeln!(
                    out,
                    "{},{},{},{},{:.6e},{},{:.3e}",
                    lvl,
                    cells.join(","),
                    e.component,
                    e.norm,
                    e.error,
                    rate,
                    rec.residual
                );
            }
        }
        out
    }

    /// A Markdown table per component pair: mesh size, error, rate.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "## {} (lambda = {:.6e}, mu = {}, {} mesh)\n",
            self.case_name,
            self.lambda,
            self.mu,
            self.mesh.describe()
        );
        let components = self.components();
        let _ = write!(out, "| n |");
        for c in &components {
            let _ = write!(out, " {c} error | rate |");
        }
        let _ = writeln!(out);
        let _ = write!(out, "|---|");
        for _ in &components {
            let _ = write!(out, "---|---|");
        }
        let _ = writeln!(out);
        for (lvl, rec) in self.levels.iter().enumerate() {
            let n = rec.cells.first().copied().unwrap_or(0);
            let _ = write!(out, "| {n} |");
            for c in &components {
                match (self.error(lvl, c), self.rate(lvl, c)) {
                    (Some(e), Some(r)) => {
                        let _ = write!(out, " {e:.3e} | {r:.3} |");
                    }
                    (Some(e), None) => {
                        let _ = write!(out, " {e:.3e} | - |");
                    }
                    _ => {
                        let _ = write!(out, " - | - |");
                    }
                }
            }
            let _ = writeln!(out);
            if let Some(failure) = &rec.failure {
                let _ = writeln!(out, "\nlevel {lvl} failed: {failure}\n");
            }
        }
        out
    }
}

/// Builds the level-`k` grid of a study: the base mesh refined `k` times.
pub fn study_grid(
    dims: usize,
    base_cells: usize,
    mesh: MeshMode,
    level: usize,
) -> Result<Arc<TensorGrid>> {
    let mut axes = Vec::with_capacity(dims);
    for a in 0..dims {
        let axis = match mesh {
            MeshMode::Uniform => AxisPartition::uniform(base_cells, 0.0, 1.0)?,
            MeshMode::Perturbed { amplitude, seed } => {
                AxisPartition::perturbed(base_cells, 0.0, 1.0, amplitude, seed + a as u64)?
            }
        };
        axes.push(axis);
    }
    let mut grid = if dims == 2 {
        TensorGrid::new_2d(axes[0].clone(), axes[1].clone())
    } else {
        TensorGrid::new_3d(axes[0].clone(), axes[1].clone(), axes[2].clone())
    };
    for _ in 0..level {
        grid = grid.refine();
    }
    Ok(Arc::new(grid))
}

/// Runs a full study: assemble, solve, and measure on every level. Solver
/// failures are recorded per level and the remaining levels still run.
pub fn convergence_study(config: &StudyConfig) -> Result<ConvergenceReport> {
    if config.levels < 1 {
        return Err(Error::InvalidArgument("a study needs at least one level".into()));
    }
    let dims = config.case.dims();
    let mut levels = Vec::with_capacity(config.levels);
    for level in 0..config.levels {
        let grid = study_grid(dims, config.base_cells, config.mesh, level)?;
        let cells = grid.cells();
        let body = body_force_fields(&config.case, &grid)?;
        let system = assemble(&grid, *config.case.params(), &body)?;
        match solve(&system, config.backend) {
            Ok(solution) => {
                let report =
                    error_report(&solution, &config.case, &system, config.with_interpolant)?;
                levels.push(LevelRecord {
                    cells,
                    errors: report.vs_exact,
                    interpolant_errors: report.vs_interpolant,
                    residual: solution.relative_residual,
                    iterations: solution.iterations,
                    failure: None,
                });
            }
            Err(err) => {
                levels.push(LevelRecord {
                    cells,
                    errors: Vec::new(),
                    interpolant_errors: Vec::new(),
                    residual: f64::NAN,
                    iterations: None,
                    failure: Some(err.to_string()),
                });
            }
        }
    }
    Ok(ConvergenceReport {
        case_name: config.case.name().into(),
        lambda: config.case.params().lambda,
        mu: config.case.params().mu,
        dims,
        mesh: config.mesh,
        levels,
    })
}
