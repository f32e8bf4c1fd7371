//! Metric charts and curvature.
//!
//! A [`MetricChart`] describes a Riemannian manifold in a single coordinate
//! chart: an axis-aligned domain box and the metric components `g_ij(x)`,
//! optionally with analytic first and second derivatives. When derivatives
//! are not supplied they fall back to central finite differences.
//!
//! Curvature follows the convention
//!
//! ```text
//! R(X,Y)Z = ∇_Y ∇_X Z − ∇_X ∇_Y Z + ∇_{[X,Y]} Z,
//! ```
//!
//! which is the negative of the `∇_X∇_Y − ∇_Y∇_X` convention. Under it the
//! sectional curvature of a 2-plane spanned by orthonormal `x, y` is
//! `K(x,y) = ⟨R(X,Y)X, Y⟩`, and the unit round sphere has `K = +1`. A unit
//! test pins this sign; everything downstream depends on it.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::tensor::{Tensor3, Tensor4};

/// Relative step for first-derivative central differences of the metric.
const FD_STEP_REL: f64 = 1e-4;
/// Relative step for second-derivative stencils. Larger than the
/// first-derivative step to keep the `O(eps/h²)` rounding term below the
/// `O(h²)` truncation term.
const FD_STEP2_REL: f64 = 5e-4;
/// Condition-number threshold beyond which the metric is treated as singular.
const MAX_CONDITION: f64 = 1e12;

pub type MetricFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
pub type MetricDerivFn = Arc<dyn Fn(&[f64]) -> Tensor3 + Send + Sync>;
pub type MetricDeriv2Fn = Arc<dyn Fn(&[f64]) -> Tensor4 + Send + Sync>;

/// Coordinate-chart description of a Riemannian manifold.
#[derive(Clone)]
pub struct MetricChart {
    dim: usize,
    domain: Vec<(f64, f64)>,
    g: MetricFn,
    dg: Option<MetricDerivFn>,
    d2g: Option<MetricDeriv2Fn>,
}

impl MetricChart {
    /// A chart with finite-difference derivative access only.
    pub fn new(dim: usize, domain: Vec<(f64, f64)>, g: MetricFn) -> Self {
        assert!(dim >= 2, "charts need dimension at least 2");
        assert_eq!(domain.len(), dim);
        assert!(
            domain.iter().all(|(a, b)| b > a),
            "domain axes must have positive width"
        );
        Self {
            dim,
            domain,
            g,
            dg: None,
            d2g: None,
        }
    }

    /// Attach analytic derivatives `∂_k g_ij` and `∂_l ∂_k g_ij`.
    pub fn with_derivatives(mut self, dg: MetricDerivFn, d2g: MetricDeriv2Fn) -> Self {
        self.dg = Some(dg);
        self.d2g = Some(d2g);
        self
    }

    /// Copy of this chart with analytic derivatives removed, forcing the
    /// finite-difference path. Used to cross-check the two derivative routes.
    pub fn stripped(&self) -> Self {
        Self {
            dim: self.dim,
            domain: self.domain.clone(),
            g: Arc::clone(&self.g),
            dg: None,
            d2g: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> &[(f64, f64)] {
        &self.domain
    }

    /// Euclidean diameter of the domain box; sets finite-difference scales.
    pub fn diameter(&self) -> f64 {
        self.domain
            .iter()
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, x: &[f64], margin: f64) -> bool {
        x.len() == self.dim
            && x.iter()
                .zip(&self.domain)
                .all(|(xi, (a, b))| *xi >= a - margin && *xi <= b + margin)
    }

    /// Metric components at `x`. Symmetry is a scenario-author contract,
    /// checked here in debug builds.
    pub fn metric(&self, x: &[f64]) -> DMatrix<f64> {
        let g = (self.g)(x);
        debug_assert_eq!(g.nrows(), self.dim);
        debug_assert!(
            symmetry_deviation(&g) <= 1e-12,
            "metric not symmetric at {x:?}"
        );
        g
    }

    /// `∂_k g_ij`, analytic when supplied, else central differences.
    pub fn metric_deriv(&self, x: &[f64]) -> Tensor3 {
        if let Some(dg) = &self.dg {
            return dg(x);
        }
        let n = self.dim;
        let h = FD_STEP_REL * self.diameter();
        let mut out = Tensor3::zeros(n);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        for k in 0..n {
            xp[k] = x[k] + h;
            xm[k] = x[k] - h;
            let gp = (self.g)(&xp);
            let gm = (self.g)(&xm);
            for i in 0..n {
                for j in 0..n {
                    out.set(k, i, j, (gp[(i, j)] - gm[(i, j)]) / (2.0 * h));
                }
            }
            xp[k] = x[k];
            xm[k] = x[k];
        }
        out
    }

    /// `∂_l ∂_k g_ij`, analytic when supplied, else second differences.
    pub fn metric_deriv2(&self, x: &[f64]) -> Tensor4 {
        if let Some(d2g) = &self.d2g {
            return d2g(x);
        }
        let n = self.dim;
        let h = FD_STEP2_REL * self.diameter();
        let mut out = Tensor4::zeros(n);
        let g0 = (self.g)(x);
        let mut y = x.to_vec();
        for k in 0..n {
            for l in k..n {
                if l == k {
                    y[k] = x[k] + h;
                    let gp = (self.g)(&y);
                    y[k] = x[k] - h;
                    let gm = (self.g)(&y);
                    y[k] = x[k];
                    for i in 0..n {
                        for j in 0..n {
                            let v = (gp[(i, j)] - 2.0 * g0[(i, j)] + gm[(i, j)]) / (h * h);
                            out.set(k, k, i, j, v);
                        }
                    }
                } else {
                    y[k] = x[k] + h;
                    y[l] = x[l] + h;
                    let gpp = (self.g)(&y);
                    y[l] = x[l] - h;
                    let gpm = (self.g)(&y);
                    y[k] = x[k] - h;
                    y[l] = x[l] + h;
                    let gmp = (self.g)(&y);
                    y[l] = x[l] - h;
                    let gmm = (self.g)(&y);
                    y[k] = x[k];
                    y[l] = x[l];
                    for i in 0..n {
                        for j in 0..n {
                            let v = (gpp[(i, j)] - gpm[(i, j)] - gmp[(i, j)] + gmm[(i, j)])
                                / (4.0 * h * h);
                            out.set(l, k, i, j, v);
                            out.set(k, l, i, j, v);
                        }
                    }
                }
            }
        }
        out
    }

    /// Inverse metric, failing on singular or badly conditioned input.
    pub fn inverse_metric(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let g = self.metric(x);
        invert_spd(&g).ok_or_else(|| Error::DegenerateMetric {
            point: x.to_vec(),
            cond: condition_estimate(&g),
        })
    }
}

fn symmetry_deviation(g: &DMatrix<f64>) -> f64 {
    let mut dev: f64 = 0.0;
    for i in 0..g.nrows() {
        for j in (i + 1)..g.ncols() {
            dev = dev.max((g[(i, j)] - g[(j, i)]).abs());
        }
    }
    dev
}

fn condition_estimate(g: &DMatrix<f64>) -> f64 {
    let eigs = g.clone().symmetric_eigenvalues();
    let max = eigs.iter().cloned().fold(f64::MIN, f64::max);
    let min = eigs.iter().cloned().fold(f64::MAX, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn invert_spd(g: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let chol = g.clone().cholesky()?;
    // Diagonal of the Cholesky factor bounds the spectrum tightly enough
    // for a condition screen without an eigensolve.
    let diag = chol.l_dirty();
    let mut lo = f64::MAX;
    let mut hi = f64::MIN;
    for i in 0..g.nrows() {
        let d = diag[(i, i)];
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if lo.is_nan() || lo <= 0.0 || (hi / lo) * (hi / lo) > MAX_CONDITION {
        return None;
    }
    Some(chol.inverse())
}

/// Riemann tensor components and sectional curvatures in an orthonormal
/// frame: `r.get(i,j,k,l) = ⟨R(e_i, e_j) e_k, e_l⟩` and `K_ij = R_ijij`.
#[derive(Debug, Clone)]
pub struct FrameCurvature {
    dim: usize,
    r: Tensor4,
    k: DMatrix<f64>,
}

impl FrameCurvature {
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn riemann(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.r.get(i, j, k, l)
    }

    #[inline]
    pub fn sectional(&self, i: usize, j: usize) -> f64 {
        self.k[(i, j)]
    }

    pub fn riemann_tensor(&self) -> &Tensor4 {
        &self.r
    }

    /// Constant-curvature model tensor `R_ijkl = c(δ_ik δ_jl − δ_jk δ_il)`,
    /// used as a closed-form oracle in tests.
    pub fn constant_curvature(dim: usize, c: f64) -> Self {
        let mut r = Tensor4::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    for l in 0..dim {
                        let dik = (i == k) as usize as f64;
                        let djl = (j == l) as usize as f64;
                        let djk = (j == k) as usize as f64;
                        let dil = (i == l) as usize as f64;
                        r.set(i, j, k, l, c * (dik * djl - djk * dil));
                    }
                }
            }
        }
        Self::from_tensor(dim, r)
    }

    /// Package a frame-component tensor, deriving `K_ij = R_ijij`.
    pub fn from_tensor(dim: usize, r: Tensor4) -> Self {
        let mut k = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                k[(i, j)] = r.get(i, j, i, j);
            }
        }
        Self { dim, r, k }
    }
}

/// Levi-Civita connection coefficients `Γ^k_{ij}`, indexed `(k, i, j)`.
pub fn christoffel(chart: &MetricChart, x: &[f64]) -> Result<Tensor3> {
    debug_assert!(chart.contains(x, 1e-9 * chart.diameter()), "point outside chart");
    let n = chart.dim();
    let ginv = chart.inverse_metric(x)?;
    let dg = chart.metric_deriv(x);
    let mut gamma = Tensor3::zeros(n);
    for k in 0..n {
        for i in 0..n {
            for j in i..n {
                let mut acc = 0.0;
                for l in 0..n {
                    acc += ginv[(k, l)]
                        * (dg.get(i, l, j) + dg.get(j, l, i) - dg.get(l, i, j));
                }
                let v = 0.5 * acc;
                gamma.set(k, i, j, v);
                gamma.set(k, j, i, v);
            }
        }
    }
    Ok(gamma)
}

/// Metric data and connection coefficients at one point, computed once and
/// shared between the Hessian and curvature paths.
pub(crate) struct ChartJets {
    pub g: DMatrix<f64>,
    pub ginv: DMatrix<f64>,
    pub gamma: Tensor3,
    pub dgamma: Tensor4,
}

impl ChartJets {
    pub(crate) fn at(chart: &MetricChart, x: &[f64]) -> Result<Self> {
        let g = chart.metric(x);
        let ginv = chart.inverse_metric(x)?;
        let (gamma, dgamma) = christoffel_derivs_from(chart, x, &ginv)?;
        Ok(Self {
            g,
            ginv,
            gamma,
            dgamma,
        })
    }
}

/// Christoffel symbols together with their coordinate derivatives
/// `∂_a Γ^d_{bc}`, indexed `(d, b, c, a)`.
pub fn christoffel_with_derivs(chart: &MetricChart, x: &[f64]) -> Result<(Tensor3, Tensor4)> {
    let ginv = chart.inverse_metric(x)?;
    christoffel_derivs_from(chart, x, &ginv)
}

fn christoffel_derivs_from(
    chart: &MetricChart,
    x: &[f64],
    ginv: &DMatrix<f64>,
) -> Result<(Tensor3, Tensor4)> {
    let n = chart.dim();
    let n2 = n * n;
    let n3 = n2 * n;
    let dg = chart.metric_deriv(x);
    let d2g = chart.metric_deriv2(x);
    let dgd = dg.data(); // ∂_a g_ij at a·n² + i·n + j
    let d2gd = d2g.data(); // ∂_a∂_k g_ij at ((a·n + k)·n + i)·n + j

    // Flattened inverse metric; all loops below run over contiguous blocks
    // with the pair index bc = b·n + c.
    let mut gi = vec![0.0; n2];
    for d in 0..n {
        for l in 0..n {
            gi[d * n + l] = ginv[(d, l)];
        }
    }

    // First kind Γ_{l,bc} = (∂_b g_cl + ∂_c g_bl − ∂_l g_bc)/2.
    let mut first = vec![0.0; n3];
    for l in 0..n {
        for b in 0..n {
            for c in 0..n {
                first[l * n2 + b * n + c] = 0.5
                    * (dgd[b * n2 + l * n + c] + dgd[c * n2 + l * n + b]
                        - dgd[l * n2 + b * n + c]);
            }
        }
    }

    // Γ^d_{bc} = g^{dl} Γ_{l,bc}: accumulate block l into block d.
    let mut gamma = vec![0.0; n3];
    for d in 0..n {
        for l in 0..n {
            let coeff = gi[d * n + l];
            if coeff == 0.0 {
                continue;
            }
            let src = &first[l * n2..(l + 1) * n2];
            let dst = &mut gamma[d * n2..(d + 1) * n2];
            for (out, s) in dst.iter_mut().zip(src) {
                *out += coeff * s;
            }
        }
    }

    // ∂_a Γ^d_{bc} = (∂_a g^{dl}) Γ_{l,bc} + g^{dl} ∂_a Γ_{l,bc}, with
    // ∂_a g⁻¹ = −g⁻¹ (∂_a g) g⁻¹.
    let mut dgamma = Tensor4::zeros(n);
    let mut dfirst_a = vec![0.0; n3];
    let mut tmp = vec![0.0; n2];
    let mut dginv_a = vec![0.0; n2];
    let mut dgamma_a = vec![0.0; n3];
    for a in 0..n {
        let dga = &dgd[a * n2..(a + 1) * n2];
        for v in tmp.iter_mut() {
            *v = 0.0;
        }
        for d in 0..n {
            for f in 0..n {
                let coeff = gi[d * n + f];
                if coeff == 0.0 {
                    continue;
                }
                for h in 0..n {
                    tmp[d * n + h] += coeff * dga[f * n + h];
                }
            }
        }
        for d in 0..n {
            for e in 0..n {
                let mut acc = 0.0;
                for h in 0..n {
                    acc += tmp[d * n + h] * gi[h * n + e];
                }
                dginv_a[d * n + e] = -acc;
            }
        }
        for l in 0..n {
            for b in 0..n {
                for c in 0..n {
                    dfirst_a[l * n2 + b * n + c] = 0.5
                        * (d2gd[((a * n + b) * n + l) * n + c]
                            + d2gd[((a * n + c) * n + l) * n + b]
                            - d2gd[((a * n + l) * n + b) * n + c]);
                }
            }
        }
        for v in dgamma_a.iter_mut() {
            *v = 0.0;
        }
        for d in 0..n {
            let dst = &mut dgamma_a[d * n2..(d + 1) * n2];
            for l in 0..n {
                let c1 = dginv_a[d * n + l];
                let c2 = gi[d * n + l];
                let f_src = &first[l * n2..(l + 1) * n2];
                let df_src = &dfirst_a[l * n2..(l + 1) * n2];
                for ((out, f), df) in dst.iter_mut().zip(f_src).zip(df_src) {
                    *out += c1 * f + c2 * df;
                }
            }
        }
        for d in 0..n {
            for b in 0..n {
                for c in 0..n {
                    dgamma.set(d, b, c, a, dgamma_a[d * n2 + b * n + c]);
                }
            }
        }
    }
    Ok((Tensor3::from_data(n, gamma), dgamma))
}

/// Coordinate components `R_{abcd} = ⟨R(∂_a, ∂_b) ∂_c, ∂_d⟩` of the curvature
/// operator `R(X,Y)Z = ∇_Y∇_X Z − ∇_X∇_Y Z + ∇_{[X,Y]}Z`.
pub fn riemann_coord(chart: &MetricChart, x: &[f64]) -> Result<Tensor4> {
    let jets = ChartJets::at(chart, x)?;
    Ok(riemann_from_jets(&jets))
}

pub(crate) fn riemann_from_jets(jets: &ChartJets) -> Tensor4 {
    let n = jets.g.nrows();
    let n2 = n * n;
    let g = &jets.g;
    let gamma = jets.gamma.data(); // Γ^e_{ac} at e·n² + a·n + c
    let dgamma = &jets.dgamma;

    let n3 = n2 * n;
    // ΓΓ contraction P[(a,c), (b,d)] = Σ_e Γ^e_{ac} Γ^d_{be} as rank-one
    // block accumulation: the e-th block of `gamma` is the left column.
    let mut right = vec![0.0; n3];
    for e in 0..n {
        for b in 0..n {
            for d in 0..n {
                right[e * n2 + b * n + d] = gamma[d * n2 + b * n + e];
            }
        }
    }
    let mut p = vec![0.0; n2 * n2];
    for e in 0..n {
        let left_col = &gamma[e * n2..(e + 1) * n2];
        let right_row = &right[e * n2..(e + 1) * n2];
        for (ac, coeff) in left_col.iter().enumerate() {
            if *coeff == 0.0 {
                continue;
            }
            let dst = &mut p[ac * n2..(ac + 1) * n2];
            for (out, r) in dst.iter_mut().zip(right_row) {
                *out += coeff * r;
            }
        }
    }

    // R^d_{abc} (component d of R(∂_a, ∂_b)∂_c), then lower the index.
    let mut upper = vec![0.0; n2 * n2];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    upper[((a * n + b) * n + c) * n + d] = dgamma.get(d, a, c, b)
                        - dgamma.get(d, b, c, a)
                        + p[(a * n + c) * n2 + b * n + d]
                        - p[(b * n + c) * n2 + a * n + d];
                }
            }
        }
    }
    let mut lower = vec![0.0; n2 * n2];
    for abc in 0..(n2 * n) {
        let row = &upper[abc * n..(abc + 1) * n];
        for d in 0..n {
            let mut v = 0.0;
            for (e, r) in row.iter().enumerate() {
                v += g[(e, d)] * r;
            }
            lower[abc * n + d] = v;
        }
    }
    Tensor4::from_data(n, lower)
}

/// Maximum deviation of `⟨e_i, e_j⟩_g` from `δ_ij`.
pub fn orthonormality_deviation(g: &DMatrix<f64>, frame: &[DVector<f64>]) -> f64 {
    let mut dev: f64 = 0.0;
    for (i, ei) in frame.iter().enumerate() {
        for (j, ej) in frame.iter().enumerate() {
            let inner = (g * ej).dot(ei);
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((inner - target).abs());
        }
    }
    dev
}

/// Frame tolerance accepted by [`frame_curvature`] and the level-set module.
pub const FRAME_TOLERANCE: f64 = 1e-8;

/// Riemann components and sectional curvatures in the given orthonormal
/// frame: `R_ijkl = ⟨R(e_i, e_j) e_k, e_l⟩`.
pub fn frame_curvature(
    chart: &MetricChart,
    x: &[f64],
    frame: &[DVector<f64>],
) -> Result<FrameCurvature> {
    let n = chart.dim();
    if frame.len() != n {
        return Err(Error::TupleLength {
            expected: n,
            got: frame.len(),
        });
    }
    let g = chart.metric(x);
    let deviation = orthonormality_deviation(&g, frame);
    if deviation > FRAME_TOLERANCE {
        return Err(Error::NonOrthonormalFrame {
            deviation,
            tolerance: FRAME_TOLERANCE,
        });
    }

    let coord = riemann_coord(chart, x)?;
    Ok(FrameCurvature::from_tensor(
        n,
        contract_riemann(&coord, frame),
    ))
}

/// Contract the coordinate Riemann tensor into frame components. Each pass
/// contracts the leading slot against the frame over contiguous blocks and
/// rotates the axes, so four passes restore the original slot order.
pub(crate) fn contract_riemann(coord: &Tensor4, frame: &[DVector<f64>]) -> Tensor4 {
    let mut t = coord.clone();
    for _ in 0..4 {
        t = contract_first_axis(&t, frame).rotate_axes();
    }
    t
}

fn contract_first_axis(t: &Tensor4, frame: &[DVector<f64>]) -> Tensor4 {
    let n = t.dim();
    let block = n * n * n;
    let data = t.data();
    let mut out = vec![0.0; n * block];
    for (i, e) in frame.iter().enumerate() {
        let dst = &mut out[i * block..(i + 1) * block];
        for a in 0..n {
            let coeff = e[a];
            if coeff == 0.0 {
                continue;
            }
            let src = &data[a * block..(a + 1) * block];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += coeff * s;
            }
        }
    }
    Tensor4::from_data(n, out)
}

/// Builders for the diagonal warped-product charts used by the scenario
/// catalog. Each diagonal entry is a product of squared univariate factors,
/// `g_ii(x) = Π_f h_f(x_{axis_f})²`, which gives analytic first and second
/// derivatives for every chart in the catalog.
pub mod warped {
    use super::*;

    type Univar = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

    /// One univariate factor `h(x_axis)` entering a metric entry as `h²`.
    #[derive(Clone)]
    pub struct WarpFactor {
        pub axis: usize,
        h: Univar,
        dh: Univar,
        d2h: Univar,
    }

    impl WarpFactor {
        pub fn new(
            axis: usize,
            h: impl Fn(f64) -> f64 + Send + Sync + 'static,
            dh: impl Fn(f64) -> f64 + Send + Sync + 'static,
            d2h: impl Fn(f64) -> f64 + Send + Sync + 'static,
        ) -> Self {
            Self {
                axis,
                h: Arc::new(h),
                dh: Arc::new(dh),
                d2h: Arc::new(d2h),
            }
        }

        /// `h(x) = x` (polar radius factor).
        pub fn coordinate(axis: usize) -> Self {
            Self::new(axis, |x| x, |_| 1.0, |_| 0.0)
        }

        pub fn sin(axis: usize) -> Self {
            Self::new(axis, f64::sin, f64::cos, |x| -x.sin())
        }

        pub fn sinh(axis: usize) -> Self {
            Self::new(axis, f64::sinh, f64::cosh, f64::sinh)
        }

        /// `h(x) = 1/x` (Poincaré half-plane factor).
        pub fn reciprocal(axis: usize) -> Self {
            Self::new(axis, |x| 1.0 / x, |x| -1.0 / (x * x), |x| 2.0 / (x * x * x))
        }

        /// Value and first two derivatives of `p = h²`.
        fn p(&self, x: f64) -> (f64, f64, f64) {
            let h = (self.h)(x);
            let dh = (self.dh)(x);
            let d2h = (self.d2h)(x);
            (h * h, 2.0 * h * dh, 2.0 * (dh * dh + h * d2h))
        }
    }

    /// Per-entry factor values `(p, p', p'')` evaluated once per point.
    fn factor_table(factors: &[Vec<WarpFactor>], x: &[f64]) -> Vec<Vec<(f64, f64, f64)>> {
        factors
            .iter()
            .map(|fs| fs.iter().map(|f| f.p(x[f.axis])).collect())
            .collect()
    }

    /// Diagonal metric `g = diag(Π h², …)` with analytic derivatives.
    pub fn diagonal_squared_chart(
        dim: usize,
        domain: Vec<(f64, f64)>,
        factors: Vec<Vec<WarpFactor>>,
    ) -> MetricChart {
        assert_eq!(factors.len(), dim);

        let g = {
            let factors = factors.clone();
            Arc::new(move |x: &[f64]| {
                let table = factor_table(&factors, x);
                DMatrix::from_fn(dim, dim, |i, j| {
                    if i == j {
                        table[i].iter().map(|t| t.0).product()
                    } else {
                        0.0
                    }
                })
            })
        };

        let dg = {
            let factors = factors.clone();
            Arc::new(move |x: &[f64]| {
                let table = factor_table(&factors, x);
                let mut out = Tensor3::zeros(dim);
                for (i, fs) in factors.iter().enumerate() {
                    for (fi, f) in fs.iter().enumerate() {
                        let dp = table[i][fi].1;
                        let rest: f64 = table[i]
                            .iter()
                            .enumerate()
                            .filter(|(gi, _)| *gi != fi)
                            .map(|(_, t)| t.0)
                            .product();
                        out.add(f.axis, i, i, dp * rest);
                    }
                }
                out
            })
        };

        let d2g = {
            let factors = factors.clone();
            Arc::new(move |x: &[f64]| {
                let table = factor_table(&factors, x);
                let mut out = Tensor4::zeros(dim);
                for (i, fs) in factors.iter().enumerate() {
                    for (fi, f) in fs.iter().enumerate() {
                        let (_, dp_f, d2p_f) = table[i][fi];
                        let rest: f64 = table[i]
                            .iter()
                            .enumerate()
                            .filter(|(gi, _)| *gi != fi)
                            .map(|(_, t)| t.0)
                            .product();
                        // Same-axis second derivative of this factor.
                        out.add(f.axis, f.axis, i, i, d2p_f * rest);
                        // Cross terms with every other factor.
                        for (gi, gf) in fs.iter().enumerate() {
                            if gi == fi {
                                continue;
                            }
                            let dp_g = table[i][gi].1;
                            let others: f64 = table[i]
                                .iter()
                                .enumerate()
                                .filter(|(hi, _)| *hi != fi && *hi != gi)
                                .map(|(_, t)| t.0)
                                .product();
                            out.add(gf.axis, f.axis, i, i, dp_f * dp_g * others);
                        }
                    }
                }
                out
            })
        };

        MetricChart::new(dim, domain, g).with_derivatives(dg, d2g)
    }

    /// Flat Euclidean chart in Cartesian coordinates.
    pub fn cartesian_chart(dim: usize, domain: Vec<(f64, f64)>) -> MetricChart {
        diagonal_squared_chart(dim, domain, vec![Vec::new(); dim])
    }
}

#[cfg(test)]
mod tests {
    use super::warped::{cartesian_chart, diagonal_squared_chart, WarpFactor};
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn polar_chart() -> MetricChart {
        // g = diag(1, ρ²) on the punctured plane.
        diagonal_squared_chart(
            2,
            vec![(0.5, 3.0), (0.0, std::f64::consts::TAU)],
            vec![vec![], vec![WarpFactor::coordinate(0)]],
        )
    }

    fn sphere2_chart() -> MetricChart {
        // Unit S²: g = diag(1, sin²θ) in (θ, φ).
        diagonal_squared_chart(
            2,
            vec![(0.3, std::f64::consts::PI - 0.3), (0.0, std::f64::consts::TAU)],
            vec![vec![], vec![WarpFactor::sin(0)]],
        )
    }

    fn sphere3_chart() -> MetricChart {
        // Unit S³: g = diag(1, sin²ρ, sin²ρ sin²ψ) in (ρ, ψ, φ).
        diagonal_squared_chart(
            3,
            vec![
                (0.3, 1.4),
                (0.4, std::f64::consts::PI - 0.4),
                (0.0, std::f64::consts::TAU),
            ],
            vec![
                vec![],
                vec![WarpFactor::sin(0)],
                vec![WarpFactor::sin(0), WarpFactor::sin(1)],
            ],
        )
    }

    fn halfplane_chart() -> MetricChart {
        // Poincaré half-plane: g = diag(1/y², 1/y²).
        diagonal_squared_chart(
            2,
            vec![(-2.0, 2.0), (0.5, 3.0)],
            vec![
                vec![WarpFactor::reciprocal(1)],
                vec![WarpFactor::reciprocal(1)],
            ],
        )
    }

    fn warped_chart(f: fn(f64) -> f64, df: fn(f64) -> f64, d2f: fn(f64) -> f64) -> MetricChart {
        // dr² + f(r)²(dθ² + sin²θ dφ²)
        diagonal_squared_chart(
            3,
            vec![
                (0.5, 2.0),
                (0.4, std::f64::consts::PI - 0.4),
                (0.0, std::f64::consts::TAU),
            ],
            vec![
                vec![],
                vec![WarpFactor::new(0, f, df, d2f)],
                vec![WarpFactor::new(0, f, df, d2f), WarpFactor::sin(1)],
            ],
        )
    }

    /// g-orthonormal frame from Gram-Schmidt over the coordinate basis.
    fn coordinate_frame(chart: &MetricChart, x: &[f64]) -> Vec<DVector<f64>> {
        let n = chart.dim();
        let g = chart.metric(x);
        let mut frame: Vec<DVector<f64>> = Vec::new();
        for a in 0..n {
            let mut v = DVector::zeros(n);
            v[a] = 1.0;
            for e in &frame {
                let c = (&g * &v).dot(e);
                v -= c * e;
            }
            let norm = (&g * &v).dot(&v).sqrt();
            frame.push(v / norm);
        }
        frame
    }

    fn random_point(chart: &MetricChart, rng: &mut StdRng) -> Vec<f64> {
        chart
            .domain()
            .iter()
            .map(|(a, b)| {
                let m = 0.15 * (b - a);
                rng.random_range(a + m..b - m)
            })
            .collect()
    }

    #[test]
    fn christoffel_flat_is_zero() {
        let chart = cartesian_chart(3, vec![(-1.0, 1.0); 3]);
        let gamma = christoffel(&chart, &[0.3, -0.2, 0.9]).unwrap();
        assert!(gamma.max_abs() < 1e-14);
    }

    #[test]
    fn christoffel_polar_values() {
        let chart = polar_chart();
        let gamma = christoffel(&chart, &[2.0, 1.0]).unwrap();
        // Γ^ρ_{φφ} = −ρ, Γ^φ_{ρφ} = 1/ρ at ρ = 2.
        assert!((gamma.get(0, 1, 1) - (-2.0)).abs() < 1e-12);
        assert!((gamma.get(1, 0, 1) - 0.5).abs() < 1e-12);
        assert!((gamma.get(1, 1, 0) - 0.5).abs() < 1e-12);
        assert!(gamma.get(0, 0, 0).abs() < 1e-12);
        assert!(gamma.get(0, 0, 1).abs() < 1e-12);
        assert!(gamma.get(1, 1, 1).abs() < 1e-12);
    }

    #[test]
    fn christoffel_sphere_equator() {
        let chart = sphere2_chart();
        let gamma = christoffel(&chart, &[std::f64::consts::FRAC_PI_2, 1.0]).unwrap();
        // At θ = π/2: Γ^θ_{φφ} = −sinθ cosθ = 0 and Γ^φ_{θφ} = cot θ = 0.
        assert!(gamma.get(0, 1, 1).abs() < 1e-12);
        assert!(gamma.get(1, 0, 1).abs() < 1e-12);
    }

    /// Metric compatibility: ∂_k g_ij = Γ^l_{ki} g_lj + Γ^l_{kj} g_il, with
    /// the left side taken by finite differences of g. Independent of the
    /// Christoffel assembly because it never uses the analytic dg.
    #[test]
    fn metric_compatibility_oracle() {
        let mut rng = StdRng::seed_from_u64(7);
        for chart in [polar_chart(), sphere2_chart(), halfplane_chart(), sphere3_chart()] {
            let stripped = chart.stripped();
            for _ in 0..20 {
                let x = random_point(&chart, &mut rng);
                let g = chart.metric(&x);
                let gamma = christoffel(&chart, &x).unwrap();
                let dg_fd = stripped.metric_deriv(&x);
                let n = chart.dim();
                for k in 0..n {
                    for i in 0..n {
                        for j in 0..n {
                            let mut rhs = 0.0;
                            for l in 0..n {
                                rhs += gamma.get(l, k, i) * g[(l, j)]
                                    + gamma.get(l, k, j) * g[(i, l)];
                            }
                            assert!(
                                (dg_fd.get(k, i, j) - rhs).abs() < 1e-5,
                                "compatibility residual {:.3e}",
                                (dg_fd.get(k, i, j) - rhs).abs()
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn fd_metric_derivs_match_analytic() {
        let mut rng = StdRng::seed_from_u64(11);
        for chart in [sphere2_chart(), halfplane_chart(), sphere3_chart()] {
            let stripped = chart.stripped();
            for _ in 0..10 {
                let x = random_point(&chart, &mut rng);
                let da = chart.metric_deriv(&x);
                let df = stripped.metric_deriv(&x);
                let d2a = chart.metric_deriv2(&x);
                let d2f = stripped.metric_deriv2(&x);
                let n = chart.dim();
                for k in 0..n {
                    for i in 0..n {
                        for j in 0..n {
                            assert!((da.get(k, i, j) - df.get(k, i, j)).abs() < 3e-6);
                            for l in 0..n {
                                assert!((d2a.get(l, k, i, j) - d2f.get(l, k, i, j)).abs() < 1e-4);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn riemann_flat_is_zero() {
        let chart = cartesian_chart(3, vec![(-1.0, 1.0); 3]);
        let r = riemann_coord(&chart, &[0.1, 0.2, -0.5]).unwrap();
        assert!(r.max_abs() < 1e-13);
    }

    /// Pins the curvature sign convention: the unit round sphere must come
    /// out with K = +1.
    #[test]
    fn sphere_sectional_curvature_is_plus_one() {
        let chart = sphere2_chart();
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..10 {
            let x = random_point(&chart, &mut rng);
            let frame = coordinate_frame(&chart, &x);
            let fc = frame_curvature(&chart, &x, &frame).unwrap();
            assert!((fc.sectional(0, 1) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn halfplane_sectional_curvature_is_minus_one() {
        let chart = halfplane_chart();
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..10 {
            let x = random_point(&chart, &mut rng);
            let frame = coordinate_frame(&chart, &x);
            let fc = frame_curvature(&chart, &x, &frame).unwrap();
            assert!((fc.sectional(0, 1) + 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn unit_s3_sectional_curvatures_are_one() {
        let chart = sphere3_chart();
        let mut rng = StdRng::seed_from_u64(9);
        for _ in 0..10 {
            let x = random_point(&chart, &mut rng);
            let frame = coordinate_frame(&chart, &x);
            let fc = frame_curvature(&chart, &x, &frame).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    if i != j {
                        assert!(
                            (fc.sectional(i, j) - 1.0).abs() < 1e-8,
                            "K_{i}{j} = {}",
                            fc.sectional(i, j)
                        );
                    }
                }
            }
        }
    }

    /// Warped product dr² + f(r)²dσ² has radial sectional curvature −f''/f.
    /// With f(r) = r² this is −2/r².
    #[test]
    fn warped_product_radial_curvature() {
        let chart = warped_chart(|r| r * r, |r| 2.0 * r, |_| 2.0);
        let mut rng = StdRng::seed_from_u64(13);
        for _ in 0..10 {
            let x = random_point(&chart, &mut rng);
            let frame = coordinate_frame(&chart, &x);
            let fc = frame_curvature(&chart, &x, &frame).unwrap();
            let expected = -2.0 / (x[0] * x[0]);
            assert!((fc.sectional(0, 1) - expected).abs() < 1e-8);
            assert!((fc.sectional(0, 2) - expected).abs() < 1e-8);
        }
    }

    fn check_symmetries(fc: &FrameCurvature, tol: f64) {
        let n = fc.dim();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let r = fc.riemann(i, j, k, l);
                        assert!((r + fc.riemann(j, i, k, l)).abs() < tol);
                        assert!((r + fc.riemann(i, j, l, k)).abs() < tol);
                        assert!((r - fc.riemann(k, l, i, j)).abs() < tol);
                        let bianchi =
                            r + fc.riemann(j, k, i, l) + fc.riemann(k, i, j, l);
                        assert!(bianchi.abs() < tol);
                        if k == i && l == j {
                            assert_eq!(fc.sectional(i, j), r);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn riemann_symmetries_analytic_and_fd() {
        let mut rng = StdRng::seed_from_u64(17);
        for chart in [sphere3_chart(), halfplane_chart(), warped_chart(|r| r * r, |r| 2.0 * r, |_| 2.0)] {
            let stripped = chart.stripped();
            for _ in 0..25 {
                let x = random_point(&chart, &mut rng);
                let frame = coordinate_frame(&chart, &x);
                let fc = frame_curvature(&chart, &x, &frame).unwrap();
                check_symmetries(&fc, 1e-6);
                let fc_fd = frame_curvature(&stripped, &x, &frame).unwrap();
                check_symmetries(&fc_fd, 1e-4);
            }
        }
    }

    /// Sectional curvature depends only on the 2-plane: two random
    /// orthonormal frames spanning the same plane give the same K.
    #[test]
    fn sectional_curvature_is_frame_independent() {
        let chart = warped_chart(|r| r * r, |r| 2.0 * r, |_| 2.0);
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..10 {
            let x = random_point(&chart, &mut rng);
            let frame = coordinate_frame(&chart, &x);
            let fc = frame_curvature(&chart, &x, &frame).unwrap();
            let k01 = fc.sectional(0, 1);

            // Rotate within span(e_0, e_1) and re-measure.
            let alpha: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let e0 = frame[0].clone() * alpha.cos() + frame[1].clone() * alpha.sin();
            let e1 = frame[0].clone() * (-alpha.sin()) + frame[1].clone() * alpha.cos();
            let mut rotated = frame.clone();
            rotated[0] = e0;
            rotated[1] = e1;
            let fc_rot = frame_curvature(&chart, &x, &rotated).unwrap();
            assert!((fc_rot.sectional(0, 1) - k01).abs() < 1e-9);
        }
    }

    #[test]
    fn non_orthonormal_frame_is_rejected() {
        let chart = cartesian_chart(2, vec![(-1.0, 1.0); 2]);
        let frame = vec![
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![0.5, 1.0]),
        ];
        match frame_curvature(&chart, &[0.0, 0.0], &frame) {
            Err(Error::NonOrthonormalFrame { .. }) => {}
            other => panic!("expected frame error, got {other:?}"),
        }
    }

    #[test]
    fn singular_metric_is_rejected() {
        let g: MetricFn = Arc::new(|x: &[f64]| {
            DMatrix::from_fn(2, 2, |i, j| if i == j { if i == 0 { 1.0 } else { x[0] } } else { 0.0 })
        });
        let chart = MetricChart::new(2, vec![(-1.0, 1.0), (-1.0, 1.0)], g);
        match christoffel(&chart, &[0.0, 0.0]) {
            Err(Error::DegenerateMetric { .. }) => {}
            other => panic!("expected degenerate metric error, got {other:?}"),
        }
    }

    #[test]
    fn constant_curvature_model_matches_chart() {
        let chart = sphere3_chart();
        let mut rng = StdRng::seed_from_u64(29);
        let x = random_point(&chart, &mut rng);
        let frame = coordinate_frame(&chart, &x);
        let fc = frame_curvature(&chart, &x, &frame).unwrap();
        let model = FrameCurvature::constant_curvature(3, 1.0);
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        assert!((fc.riemann(i, j, k, l) - model.riemann(i, j, k, l)).abs() < 1e-8);
                    }
                }
            }
        }
    }
}
