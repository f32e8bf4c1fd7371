//! Principal frames of level hypersurfaces.
//!
//! For a scalar field `u` with `∇u ≠ 0`, each point carries the frame
//! `e_1, …, e_n` with `e_n = ∇u/|∇u|` and `e_1, …, e_{n−1}` orthonormal
//! eigenvectors of the shape operator `S = Hess u / |∇u|` restricted to the
//! level set's tangent space. The frame is positively oriented
//! (`dvol_M(e_1, …, e_n) = +1`), the principal curvatures `κ_i` are the
//! eigenvalues of `S` sorted ascending, and `|∇u|_i = Hess u(e_i, e_n)` is
//! the tangential derivative of the gradient norm.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::metric::{christoffel, FrameCurvature, MetricChart};
use crate::quadrature::{surface_integral, LevelSurfacePatch, QuadratureResult};

/// Relative finite-difference steps mirroring the metric module's policy.
const FD_STEP_REL: f64 = 1e-4;
const FD_STEP2_REL: f64 = 5e-4;

type ValueFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type HessFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// The level function `u` with optional analytic derivatives.
#[derive(Clone)]
pub struct ScalarField {
    dim: usize,
    u: ValueFn,
    du: Option<GradFn>,
    d2u: Option<HessFn>,
    /// Typical magnitude of `|∇u|`; the critical-point floor is
    /// `1e−8 ×` this scale.
    gradient_scale: f64,
}

impl ScalarField {
    pub fn new(dim: usize, u: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            dim,
            u: Arc::new(u),
            du: None,
            d2u: None,
            gradient_scale: 1.0,
        }
    }

    pub fn with_derivatives(
        mut self,
        du: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        d2u: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.du = Some(Arc::new(du));
        self.d2u = Some(Arc::new(d2u));
        self
    }

    pub fn with_gradient_scale(mut self, scale: f64) -> Self {
        self.gradient_scale = scale;
        self
    }

    /// Copy without analytic derivatives, forcing finite differences.
    pub fn stripped(&self) -> Self {
        Self {
            dim: self.dim,
            u: Arc::clone(&self.u),
            du: None,
            d2u: None,
            gradient_scale: self.gradient_scale,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn floor(&self) -> f64 {
        1e-8 * self.gradient_scale
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.u)(x)
    }

    /// Coordinate gradient `∂_a u`.
    pub fn gradient(&self, x: &[f64], diameter: f64) -> Vec<f64> {
        if let Some(du) = &self.du {
            return du(x);
        }
        let h = FD_STEP_REL * diameter;
        let mut out = vec![0.0; self.dim];
        let mut y = x.to_vec();
        for a in 0..self.dim {
            y[a] = x[a] + h;
            let p = (self.u)(&y);
            y[a] = x[a] - h;
            let m = (self.u)(&y);
            y[a] = x[a];
            out[a] = (p - m) / (2.0 * h);
        }
        out
    }

    /// Coordinate Hessian `∂_a ∂_b u`.
    pub fn coordinate_hessian(&self, x: &[f64], diameter: f64) -> DMatrix<f64> {
        if let Some(d2u) = &self.d2u {
            let h = d2u(x);
            debug_assert!(
                {
                    let mut dev: f64 = 0.0;
                    for i in 0..self.dim {
                        for j in (i + 1)..self.dim {
                            dev = dev.max((h[(i, j)] - h[(j, i)]).abs());
                        }
                    }
                    dev <= 1e-10
                },
                "analytic Hessian not symmetric at {x:?}"
            );
            return h;
        }
        let h = FD_STEP2_REL * diameter;
        let n = self.dim;
        let u0 = (self.u)(x);
        let mut out = DMatrix::zeros(n, n);
        let mut y = x.to_vec();
        for a in 0..n {
            y[a] = x[a] + h;
            let p = (self.u)(&y);
            y[a] = x[a] - h;
            let m = (self.u)(&y);
            y[a] = x[a];
            out[(a, a)] = (p - 2.0 * u0 + m) / (h * h);
            for b in (a + 1)..n {
                y[a] = x[a] + h;
                y[b] = x[b] + h;
                let pp = (self.u)(&y);
                y[b] = x[b] - h;
                let pm = (self.u)(&y);
                y[a] = x[a] - h;
                y[b] = x[b] + h;
                let mp = (self.u)(&y);
                y[b] = x[b] - h;
                let mm = (self.u)(&y);
                y[a] = x[a];
                y[b] = x[b];
                let v = (pp - pm - mp + mm) / (4.0 * h * h);
                out[(a, b)] = v;
                out[(b, a)] = v;
            }
        }
        out
    }

    /// `|∇u|` at `x` with respect to the chart metric.
    pub fn gradient_norm(&self, chart: &MetricChart, x: &[f64]) -> Result<f64> {
        let du = self.gradient(x, chart.diameter());
        let ginv = chart.inverse_metric(x)?;
        let du = DVector::from_vec(du);
        Ok((&ginv * &du).dot(&du).sqrt())
    }
}

/// Covariant Hessian `Hess u(∂_a, ∂_b) = ∂_a∂_b u − Γ^k_{ab} ∂_k u` as a
/// symmetric bilinear form in coordinate components.
pub fn covariant_hessian(
    field: &ScalarField,
    chart: &MetricChart,
    x: &[f64],
) -> Result<DMatrix<f64>> {
    let gamma = christoffel(chart, x)?;
    Ok(hessian_with_gamma(field, chart, x, &gamma))
}

fn hessian_with_gamma(
    field: &ScalarField,
    chart: &MetricChart,
    x: &[f64],
    gamma: &crate::tensor::Tensor3,
) -> DMatrix<f64> {
    let n = chart.dim();
    let diameter = chart.diameter();
    let du = field.gradient(x, diameter);
    let mut hess = field.coordinate_hessian(x, diameter);
    for a in 0..n {
        for b in 0..n {
            let mut corr = 0.0;
            for (k, duk) in du.iter().enumerate() {
                corr += gamma.get(k, a, b) * duk;
            }
            hess[(a, b)] -= corr;
        }
    }
    hess
}

/// Per-point package: positively oriented orthonormal frame with the level
/// normal last, principal curvatures, and gradient-norm data.
#[derive(Debug, Clone)]
pub struct PrincipalFrame {
    pub x: Vec<f64>,
    dim: usize,
    /// `e_1, …, e_n` as coordinate components; `e_n` is the unit normal.
    vectors: Vec<DVector<f64>>,
    /// Principal curvatures, ascending.
    pub kappa: Vec<f64>,
    pub grad_norm: f64,
    /// `|∇u|_i = Hess u(e_i, e_n)` for the tangential directions.
    pub grad_norm_tangential: Vec<f64>,
    metric: DMatrix<f64>,
    /// Dual covectors `θ^i = g e_i`.
    thetas: Vec<DVector<f64>>,
}

impl PrincipalFrame {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vectors(&self) -> &[DVector<f64>] {
        &self.vectors
    }

    pub fn vector(&self, i: usize) -> &DVector<f64> {
        &self.vectors[i]
    }

    pub fn normal(&self) -> &DVector<f64> {
        &self.vectors[self.dim - 1]
    }

    pub fn metric(&self) -> &DMatrix<f64> {
        &self.metric
    }

    /// Coordinate covector of the dual form `θ^i`.
    pub fn theta_covector(&self, i: usize) -> &DVector<f64> {
        &self.thetas[i]
    }

    /// Frame component `θ^i(v)` of an arbitrary coordinate vector.
    pub fn frame_component(&self, v: &DVector<f64>, i: usize) -> f64 {
        self.thetas[i].dot(v)
    }

    /// Coordinate covector of the connection form `ω^i_n` evaluated through
    /// its frame values: `ω^i_n = κ_i θ^i + (|∇u|_i/|∇u|) θ^n`.
    pub fn omega_normal_covector(&self, i: usize) -> DVector<f64> {
        debug_assert!(i < self.dim - 1);
        &self.thetas[i] * self.kappa[i]
            + &self.thetas[self.dim - 1] * (self.grad_norm_tangential[i] / self.grad_norm)
    }

    /// Replace the tangential basis by a rotated copy (same normal), with
    /// curvature data recomputed from the given shape-operator entries.
    /// Used by tests of basis independence; rotations that mix distinct
    /// eigenvalues would leave the shape operator non-diagonal, so this
    /// accepts only a permutation-free rotation within equal-κ blocks.
    pub fn rotated_within_umbilic(&self, rotation: &DMatrix<f64>) -> PrincipalFrame {
        let m = self.dim - 1;
        debug_assert_eq!(rotation.nrows(), m);
        // Guard: rotation must commute with diag(kappa).
        for i in 0..m {
            for j in 0..m {
                if (self.kappa[i] - self.kappa[j]).abs() > 1e-9 {
                    debug_assert!(
                        rotation[(i, j)].abs() < 1e-12,
                        "rotation mixes distinct principal curvatures"
                    );
                }
            }
        }
        let mut vectors: Vec<DVector<f64>> = Vec::with_capacity(self.dim);
        for i in 0..m {
            let mut v = DVector::zeros(self.dim);
            for j in 0..m {
                v += &self.vectors[j] * rotation[(j, i)];
            }
            vectors.push(v);
        }
        vectors.push(self.normal().clone());
        let thetas: Vec<DVector<f64>> = vectors.iter().map(|v| &self.metric * v).collect();
        let mut gnt = vec![0.0; m];
        for i in 0..m {
            for j in 0..m {
                gnt[i] += rotation[(j, i)] * self.grad_norm_tangential[j];
            }
        }
        PrincipalFrame {
            x: self.x.clone(),
            dim: self.dim,
            vectors,
            kappa: self.kappa.clone(),
            grad_norm: self.grad_norm,
            grad_norm_tangential: gnt,
            metric: self.metric.clone(),
            thetas,
        }
    }

    /// `dvol_M(e_1, …, e_n) = det[e_1 … e_n] √det g`.
    pub fn orientation_volume(&self) -> f64 {
        let n = self.dim;
        let e = DMatrix::from_fn(n, n, |i, j| self.vectors[j][i]);
        e.determinant() * self.metric.determinant().sqrt()
    }
}

/// Build the principal frame of the level set of `field` through `x`.
pub fn principal_frame(
    field: &ScalarField,
    chart: &MetricChart,
    x: &[f64],
) -> Result<PrincipalFrame> {
    let g = chart.metric(x);
    let ginv = chart.inverse_metric(x)?;
    let gamma = christoffel(chart, x)?;
    let hess = hessian_with_gamma(field, chart, x, &gamma);
    principal_frame_from_parts(field, chart, x, g, &ginv, &hess)
}

/// Principal frame and ambient frame curvature at `x`, sharing the metric
/// data, connection, and its derivatives between the two computations. This
/// is the hot path of the volume-integrand evaluation.
pub fn frame_with_curvature(
    field: &ScalarField,
    chart: &MetricChart,
    x: &[f64],
) -> Result<(PrincipalFrame, FrameCurvature)> {
    let jets = crate::metric::ChartJets::at(chart, x)?;
    let hess = hessian_with_gamma(field, chart, x, &jets.gamma);
    let frame =
        principal_frame_from_parts(field, chart, x, jets.g.clone(), &jets.ginv, &hess)?;
    let coord = crate::metric::riemann_from_jets(&jets);
    let tensor = crate::metric::contract_riemann(&coord, frame.vectors());
    Ok((frame, FrameCurvature::from_tensor(chart.dim(), tensor)))
}

fn principal_frame_from_parts(
    field: &ScalarField,
    chart: &MetricChart,
    x: &[f64],
    g: DMatrix<f64>,
    ginv: &DMatrix<f64>,
    hess: &DMatrix<f64>,
) -> Result<PrincipalFrame> {
    let n = chart.dim();
    let diameter = chart.diameter();

    let du = DVector::from_vec(field.gradient(x, diameter));
    let grad = ginv * &du; // contravariant gradient
    let grad_norm = grad.dot(&du).sqrt();
    let floor = field.floor();
    if grad_norm.is_nan() || grad_norm <= floor {
        return Err(Error::CriticalPoint { grad_norm, floor });
    }
    let e_n = &grad / grad_norm;

    // Tangential orthonormal basis: pivoted modified Gram-Schmidt of the
    // coordinate axes against e_n. Residual candidates are updated
    // incrementally; each accepted vector gets a second orthogonalization
    // pass before normalization.
    let g_en = &g * &e_n;
    let mut remaining: Vec<DVector<f64>> = (0..n)
        .map(|a| {
            let mut v = DVector::zeros(n);
            v[a] = 1.0;
            let coeff = g_en.dot(&v);
            v -= &e_n * coeff;
            v
        })
        .collect();
    let mut tangent: Vec<DVector<f64>> = Vec::with_capacity(n - 1);
    let mut g_tangent: Vec<DVector<f64>> = Vec::with_capacity(n - 1);
    while tangent.len() < n - 1 {
        let mut pick = 0;
        let mut pick_norm = -1.0;
        for (idx, c) in remaining.iter().enumerate() {
            let norm = (&g * c).dot(c).sqrt();
            if norm > pick_norm {
                pick = idx;
                pick_norm = norm;
            }
        }
        if pick_norm < 1e-10 {
            return Err(Error::DegenerateMetric {
                point: x.to_vec(),
                cond: f64::INFINITY,
            });
        }
        let mut b = remaining.remove(pick);
        // Two passes against the normal and the accepted tangent vectors.
        for _ in 0..2 {
            for (t, gt) in tangent.iter().zip(&g_tangent) {
                let coeff = gt.dot(&b);
                b -= t * coeff;
            }
            let coeff = g_en.dot(&b);
            b -= &e_n * coeff;
        }
        let norm = (&g * &b).dot(&b).sqrt();
        if norm < 1e-10 {
            return Err(Error::DegenerateMetric {
                point: x.to_vec(),
                cond: f64::INFINITY,
            });
        }
        b /= norm;
        let gb = &g * &b;
        for c in remaining.iter_mut() {
            let coeff = gb.dot(&*c);
            *c -= &b * coeff;
        }
        tangent.push(b);
        g_tangent.push(gb);
    }

    // Shape operator in the tangential basis.
    let m = n - 1;
    let hess_tangent: Vec<DVector<f64>> = tangent.iter().map(|t| hess * t).collect();
    let shape = DMatrix::from_fn(m, m, |i, j| hess_tangent[j].dot(&tangent[i]) / grad_norm);
    let shape = (shape.clone() + shape.transpose()) * 0.5;
    let eig = shape.symmetric_eigen();

    // Ascending eigenvalues with stable tie order.
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .expect("finite curvatures")
            .then(a.cmp(&b))
    });
    let kappa: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors: Vec<DVector<f64>> = order
        .iter()
        .map(|&col| {
            let mut v = DVector::zeros(n);
            for (j, t) in tangent.iter().enumerate() {
                v += t * eig.eigenvectors[(j, col)];
            }
            v
        })
        .collect();
    vectors.push(e_n);

    // Positive orientation: flip e_1 (never the normal) if needed.
    let e = DMatrix::from_fn(n, n, |i, j| vectors[j][i]);
    let vol = e.determinant() * g.determinant().sqrt();
    if vol < 0.0 {
        vectors[0] = -&vectors[0];
    }

    let hess_normal = hess * vectors.last().expect("normal");
    let grad_norm_tangential: Vec<f64> = (0..m).map(|i| hess_normal.dot(&vectors[i])).collect();
    let thetas: Vec<DVector<f64>> = vectors.iter().map(|v| &g * v).collect();

    Ok(PrincipalFrame {
        x: x.to_vec(),
        dim: n,
        vectors,
        kappa,
        grad_norm,
        grad_norm_tangential,
        metric: g,
        thetas,
    })
}

/// Elementary symmetric polynomial `σ_r` of the principal curvatures, with
/// the conventions `σ_0 = 1` and `σ_r = 0` for `r` beyond the number of
/// curvatures.
pub fn sigma_r(kappa: &[f64], r: usize) -> f64 {
    if r == 0 {
        return 1.0;
    }
    if r > kappa.len() {
        return 0.0;
    }
    // Triangular recurrence: e_k ← e_k + κ e_{k−1}.
    let mut e = vec![0.0; r + 1];
    e[0] = 1.0;
    for &k in kappa {
        for j in (1..=r).rev() {
            e[j] += k * e[j - 1];
        }
    }
    e[r]
}

/// Total r-th mean curvature `M_r(Γ_t) = ∫ σ_r(κ)` over a parametrized
/// level-surface patch.
pub fn total_mean_curvature(
    chart: &MetricChart,
    field: &ScalarField,
    patch: &LevelSurfacePatch,
    r: usize,
) -> Result<QuadratureResult> {
    surface_integral(chart, patch, &|x| {
        let frame = principal_frame(field, chart, x)?;
        Ok(sigma_r(&frame.kappa, r))
    })
}
