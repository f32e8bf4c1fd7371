//! Pointwise exterior algebra and a finite-difference exterior derivative.
//!
//! Forms live at a single point and are represented extensionally, as
//! evaluators on tuples of tangent vectors. Wedge products follow the
//! shuffle convention: for a k-form λ and an ℓ-form φ,
//!
//! ```text
//! λ∧φ(v_1, …, v_{k+ℓ}) = Σ ε(i_1…i_{k+ℓ}) λ(v_{i_1}, …) φ(v_{i_{k+1}}, …)
//! ```
//!
//! summed over index splits with both blocks increasing. Differentiation
//! needs coordinates, so a [`FormField`] additionally carries the form's
//! coefficients in the coordinate basis as a function of the point;
//! [`numeric_d`] applies the coordinate exterior-derivative formula with
//! central differences of those coefficients. It serves as the independent
//! oracle for the closed-form derivative in [`crate::chernforms`].

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::tensor::{complement, increasing_tuples};

/// Sign of the permutation sorting `indices`: +1 even, −1 odd, 0 on repeats.
pub fn perm_sign(indices: &[usize]) -> i32 {
    let mut inversions = 0usize;
    for i in 0..indices.len() {
        for j in (i + 1)..indices.len() {
            if indices[i] == indices[j] {
                return 0;
            }
            if indices[i] > indices[j] {
                inversions += 1;
            }
        }
    }
    if inversions.is_multiple_of(2) {
        1
    } else {
        -1
    }
}

/// Sign of the sequence obtained from `indices` (a permutation of 1..m) by
/// inserting the value m+1 directly after position `slot` (1-based; 0 puts
/// it first). Moving the largest value from the end costs one transposition
/// per step, so this equals `(−1)^{m−slot} · perm_sign(indices)`.
pub fn epsilon_insert(indices: &[usize], slot: usize) -> Result<i32> {
    let m = indices.len();
    if slot > m {
        return Err(Error::InvalidSlot { slot, len: m });
    }
    let sign = perm_sign(indices);
    Ok(if (m - slot).is_multiple_of(2) { sign } else { -sign })
}

type FormEval = Arc<dyn Fn(&[DVector<f64>]) -> f64 + Send + Sync>;

/// A degree-k alternating form at a fixed point, given by its evaluator.
#[derive(Clone)]
pub struct AlternatingForm {
    degree: usize,
    eval: FormEval,
}

impl AlternatingForm {
    pub fn new(degree: usize, eval: impl Fn(&[DVector<f64>]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            degree,
            eval: Arc::new(eval),
        }
    }

    /// Degree-0 form (a scalar).
    pub fn constant(value: f64) -> Self {
        Self::new(0, move |_| value)
    }

    /// 1-form from its coordinate covector: `v ↦ cov · v`.
    pub fn one_form(cov: DVector<f64>) -> Self {
        Self::new(1, move |vectors| cov.dot(&vectors[0]))
    }

    /// 2-form from an antisymmetric coefficient matrix: `(v, w) ↦ vᵀ M w`.
    pub fn two_form(m: DMatrix<f64>) -> Self {
        Self::new(2, move |vectors| (&m * &vectors[1]).dot(&vectors[0]))
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn eval(&self, vectors: &[DVector<f64>]) -> Result<f64> {
        if vectors.len() != self.degree {
            return Err(Error::TupleLength {
                expected: self.degree,
                got: vectors.len(),
            });
        }
        Ok((self.eval)(vectors))
    }

    /// Unchecked evaluation for internal hot paths.
    fn eval_raw(&self, vectors: &[DVector<f64>]) -> f64 {
        (self.eval)(vectors)
    }

    /// Wedge product with another form (shuffle convention).
    pub fn wedge(&self, other: &AlternatingForm) -> AlternatingForm {
        let k = self.degree;
        let l = other.degree;
        let a = self.clone();
        let b = other.clone();
        AlternatingForm::new(k + l, move |vectors| {
            let mut acc = 0.0;
            for left in increasing_tuples(k + l, k) {
                let right = complement(&left, k + l);
                let mut order: Vec<usize> = left.clone();
                order.extend_from_slice(&right);
                let sign = perm_sign(&order);
                if sign == 0 {
                    continue;
                }
                let lv: Vec<DVector<f64>> = left.iter().map(|&i| vectors[i].clone()).collect();
                let rv: Vec<DVector<f64>> = right.iter().map(|&i| vectors[i].clone()).collect();
                acc += sign as f64 * a.eval_raw(&lv) * b.eval_raw(&rv);
            }
            acc
        })
    }

    /// Pointwise linear combination of forms of equal degree.
    pub fn linear_combination(terms: Vec<(f64, AlternatingForm)>) -> AlternatingForm {
        let degree = terms.first().map(|(_, f)| f.degree).unwrap_or(0);
        debug_assert!(terms.iter().all(|(_, f)| f.degree == degree));
        AlternatingForm::new(degree, move |vectors| {
            terms.iter().map(|(c, f)| c * f.eval_raw(vectors)).sum()
        })
    }
}

/// Evaluate `lambda ∧ phi` on a tuple of `k+ℓ` vectors.
pub fn wedge_eval(
    lambda: &AlternatingForm,
    phi: &AlternatingForm,
    vectors: &[DVector<f64>],
) -> Result<f64> {
    lambda.wedge(phi).eval(vectors)
}

/// Wedge a list of forms together. An empty list gives the 0-form `1`.
pub fn wedge_all(forms: &[AlternatingForm]) -> AlternatingForm {
    forms
        .iter()
        .fold(AlternatingForm::constant(1.0), |acc, f| acc.wedge(f))
}

type CoeffFn = Arc<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync>;

/// A degree-k form field on a chart, represented by its coefficients in the
/// coordinate basis: `φ = Σ_I a_I dx^I` over increasing multi-indices `I` in
/// lexicographic order.
#[derive(Clone)]
pub struct FormField {
    dim: usize,
    degree: usize,
    coeffs: CoeffFn,
}

impl FormField {
    pub fn new(
        dim: usize,
        degree: usize,
        coeffs: impl Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            degree,
            coeffs: Arc::new(coeffs),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// The multi-index order used by [`Self::coefficients`].
    pub fn multi_indices(&self) -> Vec<Vec<usize>> {
        increasing_tuples(self.dim, self.degree)
    }

    pub fn coefficients(&self, x: &[f64]) -> Result<Vec<f64>> {
        let c = (self.coeffs)(x)?;
        debug_assert_eq!(c.len(), increasing_tuples(self.dim, self.degree).len());
        Ok(c)
    }

    /// The form at `x`, reconstructed from its coefficients.
    pub fn at(&self, x: &[f64]) -> Result<AlternatingForm> {
        let coeffs = self.coefficients(x)?;
        Ok(form_from_coefficients(self.dim, self.degree, coeffs))
    }
}

/// Build an evaluator for `Σ_I c_I dx^I`; each `dx^I` acts on a tuple as the
/// minor determinant of the component rows `I`.
pub fn form_from_coefficients(dim: usize, degree: usize, coeffs: Vec<f64>) -> AlternatingForm {
    let indices = increasing_tuples(dim, degree);
    AlternatingForm::new(degree, move |vectors| {
        indices
            .iter()
            .zip(&coeffs)
            .map(|(idx, c)| {
                if *c == 0.0 {
                    0.0
                } else {
                    c * minor_det(idx, vectors)
                }
            })
            .sum()
    })
}

fn minor_det(rows: &[usize], vectors: &[DVector<f64>]) -> f64 {
    let k = rows.len();
    match k {
        0 => 1.0,
        1 => vectors[0][rows[0]],
        2 => {
            vectors[0][rows[0]] * vectors[1][rows[1]] - vectors[1][rows[0]] * vectors[0][rows[1]]
        }
        _ => {
            let m = DMatrix::from_fn(k, k, |a, b| vectors[b][rows[a]]);
            m.determinant()
        }
    }
}

/// Coefficients of the exterior derivative at `x` by central differences:
/// `(dφ)_J = Σ_{a} (−1)^a ∂_{J[a]} φ_{J∖J[a]}`.
pub fn numeric_d_coefficients(field: &FormField, x: &[f64], h: f64) -> Result<Vec<f64>> {
    let n = field.dim();
    let k = field.degree();
    let source = increasing_tuples(n, k);
    let position = |idx: &[usize]| -> usize {
        source
            .iter()
            .position(|s| s == idx)
            .expect("multi-index in range")
    };

    // One central difference of the full coefficient vector per direction.
    let mut partials: Vec<Option<Vec<f64>>> = vec![None; n];
    let mut needed = vec![false; n];
    for j in increasing_tuples(n, k + 1) {
        for &m in &j {
            needed[m] = true;
        }
    }
    let mut y = x.to_vec();
    for (m, flag) in needed.iter().enumerate() {
        if !flag {
            continue;
        }
        y[m] = x[m] + h;
        let plus = field.coefficients(&y)?;
        y[m] = x[m] - h;
        let minus = field.coefficients(&y)?;
        y[m] = x[m];
        partials[m] = Some(
            plus.iter()
                .zip(&minus)
                .map(|(p, q)| (p - q) / (2.0 * h))
                .collect(),
        );
    }

    let mut out = Vec::new();
    for j in increasing_tuples(n, k + 1) {
        let mut c = 0.0;
        for (a, &m) in j.iter().enumerate() {
            let rest: Vec<usize> = j
                .iter()
                .cloned()
                .filter(|&v| v != m)
                .collect();
            let sign = if a % 2 == 0 { 1.0 } else { -1.0 };
            let dp = partials[m].as_ref().expect("partial computed");
            c += sign * dp[position(&rest)];
        }
        out.push(c);
    }
    Ok(out)
}

/// Finite-difference exterior derivative of `field` at `x`.
///
/// `domain` bounds the stencil; `richardson` combines steps `h` and `h/2`
/// for an `O(h⁴)` estimate instead of the plain `O(h²)` one.
pub fn numeric_d(
    field: &FormField,
    x: &[f64],
    h: f64,
    domain: &[(f64, f64)],
    richardson: bool,
) -> Result<AlternatingForm> {
    let scale = domain
        .iter()
        .map(|(a, b)| b - a)
        .fold(f64::MAX, f64::min);
    if h <= 0.0 || h < 1e-13 * scale {
        return Err(Error::StepSize { step: h, scale });
    }
    for (xi, (a, b)) in x.iter().zip(domain) {
        if xi - h < *a || xi + h > *b {
            return Err(Error::DomainMargin {
                point: x.to_vec(),
                step: h,
            });
        }
    }
    let coeffs = if richardson {
        let c_h = numeric_d_coefficients(field, x, h)?;
        let c_h2 = numeric_d_coefficients(field, x, h / 2.0)?;
        c_h2
            .iter()
            .zip(&c_h)
            .map(|(fine, coarse)| (4.0 * fine - coarse) / 3.0)
            .collect()
    } else {
        numeric_d_coefficients(field, x, h)?
    };
    Ok(form_from_coefficients(field.dim(), field.degree() + 1, coeffs))
}

/// The derivative as a field (coefficients recomputed at each point), used
/// to iterate `d` for the `d∘d = 0` check.
pub fn numeric_d_field(field: &FormField, h: f64) -> FormField {
    let inner = field.clone();
    FormField::new(field.dim(), field.degree() + 1, move |x| {
        numeric_d_coefficients(&inner, x, h)
    })
}
