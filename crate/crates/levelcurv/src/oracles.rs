//! Brute-force reference implementations.
//!
//! Everything here exists to cross-check a production path by independent
//! means — subset enumeration against the σ_r recurrence, Newton's
//! identities against both, and a full permutation expansion of the
//! curvature-correction sums against the closed-form nested loops in
//! [`crate::chernforms`]. None of these are called from production code.

use rand::rngs::StdRng;
use rand::Rng;

use crate::exterior::perm_sign;
use crate::tensor::{complement, increasing_tuples, Tensor4};

/// σ_r by direct enumeration of increasing index subsets.
pub fn sigma_subset_sum(kappa: &[f64], r: usize) -> f64 {
    if r == 0 {
        return 1.0;
    }
    if r > kappa.len() {
        return 0.0;
    }
    increasing_tuples(kappa.len(), r)
        .iter()
        .map(|subset| subset.iter().map(|&i| kappa[i]).product::<f64>())
        .sum()
}

/// σ_r via Newton's identities: k e_k = Σ_{i=1..k} (−1)^{i−1} e_{k−i} p_i.
pub fn sigma_newton(kappa: &[f64], r: usize) -> f64 {
    if r == 0 {
        return 1.0;
    }
    if r > kappa.len() {
        return 0.0;
    }
    let power_sum = |k: usize| -> f64 { kappa.iter().map(|x| x.powi(k as i32)).sum() };
    let mut e = vec![1.0];
    for k in 1..=r {
        let mut acc = 0.0;
        for i in 1..=k {
            let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
            acc += sign * e[k - i] * power_sum(i);
        }
        e.push(acc / k as f64);
    }
    e[r]
}

fn permutations(values: &[usize]) -> Vec<Vec<usize>> {
    if values.is_empty() {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for (pos, &v) in values.iter().enumerate() {
        let mut rest = values.to_vec();
        rest.remove(pos);
        for mut p in permutations(&rest) {
            p.insert(0, v);
            out.push(p);
        }
    }
    out
}

/// Full permutation expansion of the second sum in the exterior-derivative
/// formula, evaluated on the principal frame and partitioned by whether the
/// second curvature-form slot is the normal index.
///
/// Inputs use frame components: `kappa` are the `n−1` principal curvatures,
/// `grad_log[i] = |∇u|_i / |∇u|`, and `riem` holds `R_{ijkl}` over `0..n`.
/// Returns `(A, B)` with `A` the terms whose second Ω slot is `e_n` and `B`
/// the rest; the caller applies the remaining sign factors.
pub fn second_sum_enumeration(
    n: usize,
    r: usize,
    kappa: &[f64],
    grad_log: &[f64],
    riem: &Tensor4,
) -> (f64, f64) {
    assert!(r >= 1, "the second sum is empty for r = 0");
    assert_eq!(kappa.len(), n - 1);
    assert_eq!(grad_log.len(), n - 1);
    let normal = n - 1;

    let omega = |i: usize, j: usize| -> f64 {
        if j == normal {
            grad_log[i]
        } else if i == j {
            kappa[i]
        } else {
            0.0
        }
    };

    let mut a_sum = 0.0;
    let mut b_sum = 0.0;
    let all: Vec<usize> = (0..n).collect();
    let js = permutations(&all);

    // i-configuration: i_1 < … < i_{r−1} increasing, i_r free, the θ block
    // the increasing complement — all drawn from the tangential indices.
    for lead in increasing_tuples(n - 1, r - 1) {
        for ir in 0..(n - 1) {
            if lead.contains(&ir) {
                continue;
            }
            let mut used = lead.clone();
            used.push(ir);
            used.sort_unstable();
            let trail = complement(&used, n - 1);
            let mut i_seq = lead.clone();
            i_seq.push(ir);
            i_seq.extend_from_slice(&trail);
            let eps_i = perm_sign(&i_seq);
            debug_assert!(eps_i != 0);

            // j-sequence slots: 0..r−2 feed the ω factors, (r−1, r) the
            // curvature 2-form with the increasing-pair constraint, and the
            // remainder the θ factors.
            for j in &js {
                if j[r - 1] >= j[r] {
                    continue;
                }
                let eps_j = perm_sign(j);
                let mut product = (eps_i * eps_j) as f64;
                for (k, &i_k) in lead.iter().enumerate() {
                    product *= omega(i_k, j[k]);
                }
                product *= riem.get(j[r - 1], j[r], ir, normal);
                for (m, &i_m) in trail.iter().enumerate() {
                    // θ^{i}(e_j) = δ_ij
                    if j[r + 1 + m] != i_m {
                        product = 0.0;
                        break;
                    }
                }
                if product == 0.0 {
                    continue;
                }
                if j[r] == normal {
                    a_sum += product;
                } else {
                    b_sum += product;
                }
            }
        }
    }
    (a_sum, b_sum)
}

/// Random rank-4 array with the full Riemann symmetries (antisymmetry in
/// both pairs plus pair interchange), for synthetic-input oracle tests.
pub fn random_riemann(n: usize, rng: &mut StdRng) -> Tensor4 {
    let mut raw = Tensor4::zeros(n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    raw.set(i, j, k, l, rng.random_range(-1.0..1.0));
                }
            }
        }
    }
    let mut out = Tensor4::zeros(n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let v = raw.get(i, j, k, l) - raw.get(j, i, k, l) - raw.get(i, j, l, k)
                        + raw.get(j, i, l, k)
                        + raw.get(k, l, i, j)
                        - raw.get(l, k, i, j)
                        - raw.get(k, l, j, i)
                        + raw.get(l, k, j, i);
                    out.set(i, j, k, l, v / 8.0);
                }
            }
        }
    }
    out
}
