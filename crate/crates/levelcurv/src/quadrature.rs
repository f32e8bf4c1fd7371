//! Surface and coarea volume quadrature.
//!
//! Level surfaces are parametrized over an axis-aligned box; each parameter
//! axis carries either a Gauss–Legendre rule or, for periodic angular
//! directions, the trapezoidal rule (spectrally accurate on smooth periodic
//! integrands). The area element comes from the pullback metric. Volume
//! integrals over the region between `Γ_0` and `Γ_1` use the coarea
//! foliation `∫_M f = ∫_0^1 ∫_{Γ_t} f/|∇u| dA dt` with an outer
//! Gauss–Legendre rule in `t`.
//!
//! Node contributions are accumulated with deterministic pairwise summation,
//! so results are bit-stable however the evaluations are scheduled.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::levelset::ScalarField;
use crate::metric::MetricChart;
use crate::tensor::pairwise_sum;

/// Quadrature rule along one parameter axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisRule {
    GaussLegendre,
    /// Uniform nodes with equal weights, endpoint excluded; exact choice for
    /// periodic directions.
    PeriodicTrapezoid,
}

#[derive(Debug, Clone)]
pub struct PatchAxis {
    pub range: (f64, f64),
    pub rule: AxisRule,
    pub nodes: usize,
}

type ParamMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type ParamJacobian = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// A parametrized patch covering the level surface `Γ_t`.
#[derive(Clone)]
pub struct LevelSurfacePatch {
    pub t: f64,
    pub axes: Vec<PatchAxis>,
    map: ParamMap,
    jacobian: Option<ParamJacobian>,
}

impl LevelSurfacePatch {
    pub fn new(t: f64, axes: Vec<PatchAxis>, map: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        Self {
            t,
            axes,
            map: Arc::new(map),
            jacobian: None,
        }
    }

    /// Attach an analytic Jacobian (columns `∂(chart point)/∂s_a`).
    pub fn with_jacobian(
        mut self,
        jac: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.jacobian = Some(Arc::new(jac));
        self
    }

    /// Copy with per-axis node counts replaced.
    pub fn with_nodes(&self, nodes: &[usize]) -> Self {
        assert_eq!(nodes.len(), self.axes.len());
        let mut axes = self.axes.clone();
        for (axis, &m) in axes.iter_mut().zip(nodes) {
            axis.nodes = m.max(2);
        }
        Self {
            t: self.t,
            axes,
            map: Arc::clone(&self.map),
            jacobian: self.jacobian.clone(),
        }
    }

    pub fn grid(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.nodes).collect()
    }

    pub fn point(&self, params: &[f64]) -> Vec<f64> {
        (self.map)(params)
    }

    /// Jacobian at `params`, analytic when supplied, else central FD in
    /// parameter space.
    pub fn jacobian_at(&self, params: &[f64], chart_dim: usize) -> DMatrix<f64> {
        if let Some(jac) = &self.jacobian {
            return jac(params);
        }
        let k = self.axes.len();
        let mut out = DMatrix::zeros(chart_dim, k);
        let mut s = params.to_vec();
        for a in 0..k {
            let h = 1e-5 * (self.axes[a].range.1 - self.axes[a].range.0);
            s[a] = params[a] + h;
            let p = (self.map)(&s);
            s[a] = params[a] - h;
            let m = (self.map)(&s);
            s[a] = params[a];
            for i in 0..chart_dim {
                out[(i, a)] = (p[i] - m[i]) / (2.0 * h);
            }
        }
        out
    }
}

/// Quadrature value with a refinement-based error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    pub value: f64,
    pub estimated_error: f64,
    pub nodes_used: usize,
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration on the
/// Legendre polynomial.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1);
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        // Chebyshev-based initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence for P_m(x) and P'_m(x).
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=m {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }
    (nodes, weights)
}

fn axis_nodes(axis: &PatchAxis) -> (Vec<f64>, Vec<f64>) {
    let (a, b) = axis.range;
    match axis.rule {
        AxisRule::GaussLegendre => {
            let (xs, ws) = gauss_legendre(axis.nodes);
            let mid = 0.5 * (a + b);
            let half = 0.5 * (b - a);
            (
                xs.iter().map(|x| mid + half * x).collect(),
                ws.iter().map(|w| w * half).collect(),
            )
        }
        AxisRule::PeriodicTrapezoid => {
            let h = (b - a) / axis.nodes as f64;
            (
                (0..axis.nodes).map(|k| a + k as f64 * h).collect(),
                vec![h; axis.nodes],
            )
        }
    }
}

fn integrate_surface_once(
    chart: &MetricChart,
    patch: &LevelSurfacePatch,
    integrand: &dyn Fn(&[f64]) -> Result<f64>,
) -> Result<(f64, usize)> {
    let k = patch.axes.len();
    let per_axis: Vec<(Vec<f64>, Vec<f64>)> = patch.axes.iter().map(axis_nodes).collect();
    let total: usize = per_axis.iter().map(|(n, _)| n.len()).product();
    let mut contributions = Vec::with_capacity(total);

    let mut idx = vec![0usize; k];
    let mut params = vec![0.0; k];
    loop {
        let mut w = 1.0;
        for a in 0..k {
            params[a] = per_axis[a].0[idx[a]];
            w *= per_axis[a].1[idx[a]];
        }
        let x = patch.point(&params);
        let jac = patch.jacobian_at(&params, chart.dim());
        let g = chart.metric(&x);
        let pullback = jac.transpose() * &g * &jac;
        let det = pullback.determinant();
        if det.is_nan() || det <= 0.0 {
            return Err(Error::Parametrization {
                params: params.clone(),
            });
        }
        contributions.push(w * integrand(&x)? * det.sqrt());

        // Advance the multi-index.
        let mut a = 0;
        loop {
            if a == k {
                return Ok((pairwise_sum(&contributions), total));
            }
            idx[a] += 1;
            if idx[a] < per_axis[a].0.len() {
                break;
            }
            idx[a] = 0;
            a += 1;
        }
    }
}

fn halved(grid: &[usize]) -> Vec<usize> {
    grid.iter().map(|m| (m / 2).max(2)).collect()
}

/// Single-grid surface integral without an error estimate; used where the
/// caller runs its own refinement comparison.
pub(crate) fn surface_integral_value(
    chart: &MetricChart,
    patch: &LevelSurfacePatch,
    integrand: &dyn Fn(&[f64]) -> Result<f64>,
) -> Result<f64> {
    Ok(integrate_surface_once(chart, patch, integrand)?.0)
}

/// Single-grid coarea volume integral without an error estimate.
pub(crate) fn volume_integral_value(
    chart: &MetricChart,
    field: &ScalarField,
    patch_at: &dyn Fn(f64) -> Result<LevelSurfacePatch>,
    integrand: &dyn Fn(&[f64]) -> Result<f64>,
    t_nodes: usize,
) -> Result<f64> {
    Ok(integrate_volume_once(chart, field, patch_at, integrand, t_nodes, None)?.0)
}

/// Integrate a pointwise scalar over a level-surface patch. The error
/// estimate compares the requested grid with its halving.
pub fn surface_integral(
    chart: &MetricChart,
    patch: &LevelSurfacePatch,
    integrand: &dyn Fn(&[f64]) -> Result<f64>,
) -> Result<QuadratureResult> {
    let (fine, n_fine) = integrate_surface_once(chart, patch, integrand)?;
    let coarse_patch = patch.with_nodes(&halved(&patch.grid()));
    let (coarse, n_coarse) = integrate_surface_once(chart, &coarse_patch, integrand)?;
    Ok(QuadratureResult {
        value: fine,
        estimated_error: (fine - coarse).abs(),
        nodes_used: n_fine + n_coarse,
    })
}

fn integrate_volume_once(
    chart: &MetricChart,
    field: &ScalarField,
    patch_at: &dyn Fn(f64) -> Result<LevelSurfacePatch>,
    integrand: &dyn Fn(&[f64]) -> Result<f64>,
    t_nodes: usize,
    grid: Option<&[usize]>,
) -> Result<(f64, usize)> {
    let (ts, ws) = gauss_legendre(t_nodes);
    let mut slices = Vec::with_capacity(t_nodes);
    let mut nodes_used = 0;
    for (t, w) in ts.iter().zip(&ws) {
        let t01 = 0.5 * (t + 1.0);
        let mut patch = patch_at(t01)?;
        if let Some(g) = grid {
            patch = patch.with_nodes(g);
        }
        let weighted = |x: &[f64]| -> Result<f64> {
            let grad = field.gradient_norm(chart, x)?;
            if grad.is_nan() || grad <= field.floor() {
                return Err(Error::CriticalPoint {
                    grad_norm: grad,
                    floor: field.floor(),
                });
            }
            Ok(integrand(x)? / grad)
        };
        let (slice, n) = integrate_surface_once(chart, &patch, &weighted)?;
        nodes_used += n;
        // Outer rule lives on [0,1]: weight w/2.
        slices.push(0.5 * w * slice);
    }
    Ok((pairwise_sum(&slices), nodes_used))
}

/// Coarea volume integral of a pointwise scalar over the region between
/// `Γ_0` and `Γ_1`. The error estimate compares against a run with both the
/// outer `t` rule and the surface grids halved.
pub fn volume_integral(
    chart: &MetricChart,
    field: &ScalarField,
    patch_at: &dyn Fn(f64) -> Result<LevelSurfacePatch>,
    integrand: &dyn Fn(&[f64]) -> Result<f64>,
    t_nodes: usize,
) -> Result<QuadratureResult> {
    let (fine, n_fine) =
        integrate_volume_once(chart, field, patch_at, integrand, t_nodes, None)?;
    let probe = patch_at(0.5)?;
    let coarse_grid = halved(&probe.grid());
    let (coarse, n_coarse) = integrate_volume_once(
        chart,
        field,
        patch_at,
        integrand,
        (t_nodes / 2).max(2),
        Some(&coarse_grid),
    )?;
    Ok(QuadratureResult {
        value: fine,
        estimated_error: (fine - coarse).abs(),
        nodes_used: n_fine + n_coarse,
    })
}

/// Result of a grid-refinement convergence study.
#[derive(Debug, Clone, Copy)]
pub struct ConvergenceEstimate {
    /// Empirical order `p = log2(err_m / err_2m)`; `None` when the errors
    /// sit at the rounding floor and the order is undefined.
    pub order: Option<f64>,
    pub coarse_error: f64,
    pub fine_error: f64,
}

/// Run an integration at grids `m` and `2m` and estimate the convergence
/// order, against the closed form when available and by Richardson-style
/// differences (an extra run at `4m`) otherwise.
pub fn refine_and_estimate(
    run: &dyn Fn(usize) -> Result<f64>,
    m: usize,
    closed_form: Option<f64>,
) -> Result<ConvergenceEstimate> {
    let i_m = run(m)?;
    let i_2m = run(2 * m)?;
    let (e1, e2, reference) = match closed_form {
        Some(cf) => ((i_m - cf).abs(), (i_2m - cf).abs(), cf.abs()),
        None => {
            let i_4m = run(4 * m)?;
            ((i_m - i_2m).abs(), (i_2m - i_4m).abs(), i_4m.abs())
        }
    };
    // Finite-difference patch Jacobians leave noise around 1e−11 relative,
    // so anything below that is treated as exactly integrated.
    let floor = 1e-11 * (1.0 + reference);
    let order = if e1 <= floor || e2 <= floor {
        None
    } else {
        Some((e1 / e2).log2())
    };
    Ok(ConvergenceEstimate {
        order,
        coarse_error: e1,
        fine_error: e2,
    })
}
