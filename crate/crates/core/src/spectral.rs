//! Eigenvalue counting (LDLᵀ inertia), bisection and inverse iteration for
//! symmetric tridiagonal operators, and the Morse-index summary of `(L₊, L₋)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg::{Parity, SymTridiag};

/// Result of a Sturm count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Inertia {
    pub below: usize,
    /// Number of exactly-zero pivots replaced by a tiny negative value.
    pub nudged: usize,
}

/// Count of eigenvalues strictly below `tau` from the signs of the `LDLᵀ`
/// pivots of `T - τI`.
pub fn inertia(t: &SymTridiag, tau: f64) -> Inertia {
    let n = t.len();
    let pivmin = f64::MIN_POSITIVE.max(f64::EPSILON * f64::EPSILON * t.inf_norm().max(1.0));
    let mut below = 0;
    let mut nudged = 0;
    let mut d = 0.0;
    for i in 0..n {
        d = t.diag[i] - tau
            - if i > 0 {
                let b = t.off[i - 1];
                b * b / d
            } else {
                0.0
            };
        if d == 0.0 {
            // breakdown: perturb the pivot as if τ were one ulp higher
            d = -pivmin;
            nudged += 1;
        }
        if d < 0.0 {
            below += 1;
        }
    }
    Inertia { below, nudged }
}

pub fn eig_count_below(t: &SymTridiag, tau: f64) -> usize {
    inertia(t, tau).below
}

/// The `j`-th smallest eigenvalue (0-based) by bisection on the inertia.
pub fn kth_eigenvalue(t: &SymTridiag, j: usize) -> Result<f64> {
    let n = t.len();
    if j >= n {
        return Err(Error::InvalidArgument(format!("eigenvalue index {j} out of range for size {n}")));
    }
    let norm = t.inf_norm();
    let (mut lo, mut hi) = t.gershgorin();
    let pad = 2.0 * f64::EPSILON * norm.max(f64::MIN_POSITIVE) + f64::MIN_POSITIVE;
    lo -= pad;
    hi += pad;
    let abs_floor = 2.0 * f64::EPSILON * norm;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= (1e-13 * mid.abs()).max(abs_floor) || mid <= lo || mid >= hi {
            break;
        }
        if eig_count_below(t, mid) > j {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// The `k` smallest eigenvalues, nondecreasing.
pub fn smallest_eigenvalues(t: &SymTridiag, k: usize) -> Result<Vec<f64>> {
    check_k(t, k)?;
    (0..k).map(|j| kth_eigenvalue(t, j)).collect()
}

fn check_k(t: &SymTridiag, k: usize) -> Result<()> {
    if k == 0 || k > t.len() {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= k <= {}, got {k}",
            t.len()
        )));
    }
    Ok(())
}

/// The `k` smallest eigenpairs; vectors have unit Euclidean norm and are
/// mutually orthogonal (Gram–Schmidt inside clusters).
pub fn smallest_eigenpairs(t: &SymTridiag, k: usize) -> Result<Vec<(f64, Vec<f64>)>> {
    let values = smallest_eigenvalues(t, k)?;
    let norm = t.inf_norm().max(f64::MIN_POSITIVE);
    let cluster_gap = 1e-6 * norm;
    let mut out: Vec<(f64, Vec<f64>)> = Vec::with_capacity(k);
    for (j, &lam) in values.iter().enumerate() {
        let cluster_start = {
            let mut s = j;
            while s > 0 && values[s] - values[s - 1] <= cluster_gap {
                s -= 1;
            }
            s
        };
        let prev: Vec<&Vec<f64>> = out[cluster_start..j].iter().map(|p| &p.1).collect();
        let v = inverse_iteration(t, lam, &prev, j as u64)?;
        out.push((lam, v));
    }
    Ok(out)
}

/// Eigenpairs with vectors normalized in the grid inner product.
pub fn smallest_eigenpairs_on(g: &Grid, t: &SymTridiag, k: usize) -> Result<Vec<(f64, Vec<f64>)>> {
    let s = 1.0 / g.spacing().sqrt();
    Ok(smallest_eigenpairs(t, k)?
        .into_iter()
        .map(|(l, v)| (l, v.into_iter().map(|x| x * s).collect()))
        .collect())
}

fn inverse_iteration(t: &SymTridiag, lam: f64, ortho: &[&Vec<f64>], seed: u64) -> Result<Vec<f64>> {
    let n = t.len();
    let norm = t.inf_norm().max(f64::MIN_POSITIVE);
    let tol = 1e-10 * norm;
    let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(0x2545F4914F6CDD1D);
    let mut start: Vec<f64> = (0..n)
        .map(|_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
        .collect();
    orthonormalize(&mut start, ortho);
    for retry in 0..6 {
        let delta = if retry == 0 {
            0.0
        } else {
            let sign = if retry % 2 == 1 { 1.0 } else { -1.0 };
            sign * 10f64.powi(retry as i32) * f64::EPSILON * norm
        };
        let lu = match t.shifted(lam + delta).factor() {
            Ok(lu) => lu,
            Err(_) => continue,
        };
        let mut x = start.clone();
        for _ in 0..8 {
            let Ok(mut y) = lu.solve(&x) else { break };
            if y.iter().any(|v| !v.is_finite()) {
                break;
            }
            if !orthonormalize(&mut y, ortho) {
                break;
            }
            x = y;
            let tx = t.apply(&x);
            let res = tx
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - lam * b).abs())
                .fold(0.0, f64::max);
            if res <= tol {
                fix_sign(&mut x);
                return Ok(x);
            }
        }
    }
    Err(Error::NumericalFailure(format!(
        "inverse iteration stagnated at eigenvalue {lam:.6e}"
    )))
}

/// Projects out `ortho` (twice, for stability) and normalizes; false if the
/// remainder vanished.
fn orthonormalize(x: &mut [f64], ortho: &[&Vec<f64>]) -> bool {
    for _ in 0..2 {
        for q in ortho {
            let c: f64 = x.iter().zip(q.iter()).map(|(a, b)| a * b).sum();
            for (a, b) in x.iter_mut().zip(q.iter()) {
                *a -= c * b;
            }
        }
    }
    let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(nrm > 0.0) || !nrm.is_finite() {
        return false;
    }
    x.iter_mut().for_each(|v| *v /= nrm);
    true
}

/// Sign convention: the largest-magnitude entry is positive.
fn fix_sign(x: &mut [f64]) {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &v in x.iter() {
        if v.abs() > best {
            best = v.abs();
            sign = v.signum();
        }
    }
    if sign < 0.0 {
        x.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Tolerances for [`summarize`]; `None` selects `1e-8·‖T‖∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralOpts {
    pub kernel_tol: Option<f64>,
    pub parity_tol: f64,
}

impl Default for SpectralOpts {
    fn default() -> Self {
        Self {
            kernel_tol: None,
            parity_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub morse_plus: usize,
    pub morse_minus: usize,
    pub lambda_min_plus: f64,
    pub lambda2_plus: f64,
    pub lambda_min_minus: f64,
    /// Eigenvalue of `L₊` closest to zero, and its index in the spectrum.
    pub lambda_near_zero_plus: f64,
    pub near_zero_index_plus: usize,
    /// Grid-normalized, when `|lambda_near_zero_plus| <= kernel_tol`.
    #[serde(skip)]
    pub kernel_vector_plus: Option<Vec<f64>>,
    pub kernel_parity: Option<Parity>,
    pub kernel_tol: f64,
    /// Zero pivots encountered by the inertia counts.
    pub nudged_pivots: usize,
}

impl SpectralSummary {
    pub fn morse_total(&self) -> usize {
        self.morse_plus + self.morse_minus
    }
}

pub fn summarize(g: &Grid, lp: &SymTridiag, lm: &SymTridiag) -> Result<SpectralSummary> {
    summarize_with(g, lp, lm, SpectralOpts::default())
}

pub fn summarize_with(g: &Grid, lp: &SymTridiag, lm: &SymTridiag, opts: SpectralOpts) -> Result<SpectralSummary> {
    let kernel_tol = opts.kernel_tol.unwrap_or(1e-8 * lp.inf_norm());
    let kernel_tol_m = opts.kernel_tol.unwrap_or(1e-8 * lm.inf_norm());
    let ip = inertia(lp, -kernel_tol);
    let im = inertia(lm, -kernel_tol_m);
    let n = lp.len();
    let lambda_min_plus = kth_eigenvalue(lp, 0)?;
    let lambda2_plus = if n > 1 { kth_eigenvalue(lp, 1)? } else { f64::INFINITY };
    let lambda_min_minus = kth_eigenvalue(lm, 0)?;

    // the eigenvalue nearest zero sits just below or just above the count at 0
    let below0 = eig_count_below(lp, 0.0);
    let mut cands = Vec::new();
    if below0 > 0 {
        cands.push(below0 - 1);
    }
    if below0 < n {
        cands.push(below0);
    }
    let mut near = (f64::INFINITY, 0usize);
    for j in cands {
        let v = match j {
            0 => lambda_min_plus,
            1 => lambda2_plus,
            _ => kth_eigenvalue(lp, j)?,
        };
        if v.abs() < near.0.abs() {
            near = (v, j);
        }
    }

    let (kernel_vector_plus, kernel_parity) = if near.0.abs() <= kernel_tol {
        let pairs = smallest_eigenpairs(lp, near.1 + 1)?;
        let s = 1.0 / g.spacing().sqrt();
        let v: Vec<f64> = pairs[near.1].1.iter().map(|x| x * s).collect();
        let parity = Parity::detect(&v, opts.parity_tol);
        (Some(v), parity)
    } else {
        (None, None)
    };

    Ok(SpectralSummary {
        morse_plus: ip.below,
        morse_minus: im.below,
        lambda_min_plus,
        lambda2_plus,
        lambda_min_minus,
        lambda_near_zero_plus: near.0,
        near_zero_index_plus: near.1,
        kernel_vector_plus,
        kernel_parity,
        kernel_tol,
        nudged_pivots: ip.nudged + im.nudged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Fold;
    use crate::model::{linear_operator, PotentialSpec};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_eigs(t: &SymTridiag) -> Vec<f64> {
        let n = t.len();
        let mut m = nalgebra::DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = t.diag[i];
            if i + 1 < n {
                m[(i, i + 1)] = t.off[i];
                m[(i + 1, i)] = t.off[i];
            }
        }
        let mut e: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
        e.sort_by(|a, b| a.partial_cmp(b).unwrap());
        e
    }

    fn random_sym(rng: &mut ChaCha8Rng, n: usize) -> SymTridiag {
        SymTridiag {
            diag: (0..n).map(|_| rng.random_range(-5.0..5.0)).collect(),
            off: (0..n - 1).map(|_| rng.random_range(-3.0..3.0)).collect(),
        }
    }

    #[test]
    fn count_examples() {
        let t = SymTridiag::from_diag(vec![-1.0, 2.0, 3.0]);
        assert_eq!(eig_count_below(&t, 0.0), 1);
        let g = Grid::new(3.0, 40).unwrap();
        let free = linear_operator(&g, &PotentialSpec::zero());
        assert_eq!(eig_count_below(&free, 0.0), 0);
        let v = smallest_eigenvalues(&t, 2).unwrap();
        assert!((v[0] + 1.0).abs() < 1e-12 && (v[1] - 2.0).abs() < 1e-12);
        assert!(smallest_eigenvalues(&t, 0).is_err());
        assert!(smallest_eigenvalues(&t, 4).is_err());
    }

    #[test]
    fn zero_pivot_is_nudged() {
        let t = SymTridiag::new(vec![0.0, 1.0], vec![1.0]).unwrap();
        let i = inertia(&t, 0.0);
        assert_eq!(i.nudged, 1);
        // eigenvalues (1 ± √5)/2: one negative
        assert_eq!(i.below, 1);
    }

    #[test]
    fn free_laplacian_ground_value() {
        let (l, n) = (2.0, 20);
        let g = Grid::new(l, n).unwrap();
        let h = g.spacing();
        let t = linear_operator(&g, &PotentialSpec::zero());
        let closed = 4.0 / (h * h) * (std::f64::consts::PI / (2.0 * (n as f64 + 1.0))).sin().powi(2);
        let pairs = smallest_eigenpairs_on(&g, &t, 1).unwrap();
        assert!((pairs[0].0 - closed).abs() < 1e-12 * closed);
        assert!((g.norm(&pairs[0].1) - 1.0).abs() < 1e-12);
        let dense = dense_eigs(&t);
        assert!((dense[0] - closed).abs() < 1e-10 * closed);
    }

    #[test]
    fn random_matrices_match_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let n = rng.random_range(2..=50);
            let t = random_sym(&mut rng, n);
            let dense = dense_eigs(&t);
            let scale = t.inf_norm();
            for _ in 0..5 {
                let tau = rng.random_range(-8.0..8.0);
                let want = dense.iter().filter(|&&e| e < tau).count();
                assert_eq!(eig_count_below(&t, tau), want);
            }
            let k = n.min(3);
            let pairs = smallest_eigenpairs(&t, k).unwrap();
            for j in 0..k {
                assert!((pairs[j].0 - dense[j]).abs() <= 1e-10 * scale);
                let tv = t.apply(&pairs[j].1);
                let r = tv.iter().zip(&pairs[j].1).map(|(a, b)| (a - pairs[j].0 * b).abs()).fold(0.0, f64::max);
                assert!(r < 1e-8 * scale);
            }
        }
    }

    #[test]
    fn degenerate_cluster_gives_orthogonal_vectors() {
        let t = SymTridiag::from_diag(vec![1.0, 1.0, 1.0, 5.0]);
        let pairs = smallest_eigenpairs(&t, 3).unwrap();
        for a in 0..3 {
            for b in 0..a {
                let d: f64 = pairs[a].1.iter().zip(&pairs[b].1).map(|(x, y)| x * y).sum();
                assert!(d.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn folded_symmetric_operator_splits_spectrum() {
        let g = Grid::new(8.0, 101).unwrap();
        let t = linear_operator(&g, &PotentialSpec::double_well(2.0, 2.0, 1.0));
        let full = smallest_eigenvalues(&t, 4).unwrap();
        let even = Fold::new(Parity::Even, 101).symmetric_operator(&t);
        let odd = Fold::new(Parity::Odd, 101).symmetric_operator(&t);
        let e = smallest_eigenvalues(&even, 2).unwrap();
        let o = smallest_eigenvalues(&odd, 2).unwrap();
        let mut merged = vec![e[0], e[1], o[0], o[1]];
        merged.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for j in 0..4 {
            assert!((merged[j] - full[j]).abs() < 1e-9 * full[j].abs().max(1.0));
        }
    }

    #[test]
    fn summary_on_trivial_branch() {
        let g = Grid::new(15.0, 600).unwrap();
        let base = linear_operator(&g, &PotentialSpec::double_well(2.0, 2.0, 1.0));
        let ev = smallest_eigenvalues(&base, 2).unwrap();
        // E between E₁ and E₀: -Δ+V+E has exactly one negative eigenvalue
        let e = 0.5 * (-ev[0] - ev[1]);
        let shifted = SymTridiag {
            diag: base.diag.iter().map(|d| d + e).collect(),
            off: base.off.clone(),
        };
        let s = summarize(&g, &shifted, &shifted).unwrap();
        assert_eq!((s.morse_plus, s.morse_minus), (1, 1));
        assert!(s.kernel_vector_plus.is_none());
        assert!(s.lambda_min_plus <= s.lambda2_plus);
        // exactly at E₀ the ground vector is an even kernel
        let at = SymTridiag {
            diag: base.diag.iter().map(|d| d - ev[0]).collect(),
            off: base.off.clone(),
        };
        let s = summarize(&g, &at, &at).unwrap();
        assert_eq!(s.kernel_parity, Some(Parity::Even));
        let k = s.kernel_vector_plus.unwrap();
        assert!((g.norm(&k) - 1.0).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn counts_monotone_in_tau(
            d in proptest::collection::vec(-4.0f64..4.0, 12),
            o in proptest::collection::vec(-2.0f64..2.0, 11),
            a in -6.0f64..6.0,
            b in -6.0f64..6.0,
        ) {
            let t = SymTridiag::new(d, o).unwrap();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(eig_count_below(&t, lo) <= eig_count_below(&t, hi));
        }
    }
}
