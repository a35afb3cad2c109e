//! Uniform Dirichlet grid on the truncated line `[-L, L]`.
//!
//! Nodes are the `N` interior points `x_i = -L + i h`, `h = 2L/(N+1)`; the
//! field is implicitly zero at `±L`. Every discrete operator built on top of
//! this grid is exactly symmetric in the `h`-weighted inner product.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    half_width: f64,
    spacing: f64,
    nodes: Vec<f64>,
}

impl Grid {
    pub fn new(half_width: f64, n_interior: usize) -> Result<Self> {
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "half width must be positive, got {half_width}"
            )));
        }
        if n_interior < 3 {
            return Err(Error::InvalidArgument(format!(
                "need at least 3 interior nodes, got {n_interior}"
            )));
        }
        let h = 2.0 * half_width / (n_interior as f64 + 1.0);
        let mut nodes = vec![0.0; n_interior];
        let half = n_interior / 2;
        for i in 0..half {
            let x = -half_width + (i as f64 + 1.0) * h;
            nodes[i] = x;
            nodes[n_interior - 1 - i] = -x;
        }
        // odd N: the centre node is exactly zero
        Ok(Self {
            half_width,
            spacing: h,
            nodes,
        })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Samples `f` at every node.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&x| f(x)).collect()
    }

    /// `-Δ_h f` with homogeneous Dirichlet data.
    pub fn laplacian_apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        check_len("laplacian_apply", f.len(), self.len())?;
        Ok(neg_laplacian(f, self.spacing))
    }

    /// `h Σ conj(f_i) w_i` for real fields.
    pub fn inner(&self, f: &[f64], w: &[f64]) -> Result<f64> {
        check_len("inner_product", f.len(), self.len())?;
        check_len("inner_product", w.len(), self.len())?;
        Ok(self.dot(f, w))
    }

    /// `h Σ conj(f_i) w_i` for complex fields.
    pub fn inner_complex(&self, f: &[Complex64], w: &[Complex64]) -> Result<Complex64> {
        check_len("inner_product", f.len(), self.len())?;
        check_len("inner_product", w.len(), self.len())?;
        let s: Complex64 = f.iter().zip(w).map(|(a, b)| a.conj() * b).sum();
        Ok(s * self.spacing)
    }

    pub(crate) fn dot(&self, f: &[f64], w: &[f64]) -> f64 {
        self.spacing * f.iter().zip(w).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn norm(&self, f: &[f64]) -> f64 {
        self.dot(f, f).sqrt()
    }

    pub fn norm_complex(&self, f: &[Complex64]) -> f64 {
        (self.spacing * f.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt()
    }

    /// Discrete H¹ norm: L² part plus forward-difference gradient on the
    /// ghost-padded field.
    pub fn h1_norm(&self, f: &[f64]) -> f64 {
        (self.dot(f, f) + gradient_sq(f, self.spacing)).sqrt()
    }
}

pub(crate) fn neg_laplacian(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let inv = 1.0 / (h * h);
    (0..n)
        .map(|i| {
            let left = if i > 0 { f[i - 1] } else { 0.0 };
            let right = if i + 1 < n { f[i + 1] } else { 0.0 };
            // neighbours summed first so mirrored nodes round identically
            (2.0 * f[i] - (left + right)) * inv
        })
        .collect()
}

/// `‖D⁺f‖²` over the `N+1` cell differences including the boundary cells.
pub(crate) fn gradient_sq(f: &[f64], h: f64) -> f64 {
    let n = f.len();
    let mut s = 0.0;
    for i in 0..=n {
        let left = if i > 0 { f[i - 1] } else { 0.0 };
        let right = if i < n { f[i] } else { 0.0 };
        let d = right - left;
        s += d * d;
    }
    s / h
}

pub(crate) fn gradient_sq_complex(f: &[Complex64], h: f64) -> f64 {
    let n = f.len();
    let zero = Complex64::new(0.0, 0.0);
    let mut s = 0.0;
    for i in 0..=n {
        let left = if i > 0 { f[i - 1] } else { zero };
        let right = if i < n { f[i] } else { zero };
        s += (right - left).norm_sqr();
    }
    s / h
}

/// Reflection `x → -x` of a nodal field.
pub fn mirror(f: &[f64]) -> Vec<f64> {
    f.iter().rev().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn three_node_grid() {
        let g = Grid::new(1.0, 3).unwrap();
        assert_eq!(g.nodes(), &[-0.5, 0.0, 0.5]);
        assert_eq!(g.spacing(), 0.5);
    }

    #[test]
    fn default_spacing() {
        let g = Grid::new(30.0, 3000).unwrap();
        assert_relative_eq!(g.spacing(), 60.0 / 3001.0, max_relative = 1e-15);
        assert!((g.spacing() - 0.019993).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(Grid::new(0.0, 10), Err(Error::InvalidArgument(_))));
        assert!(matches!(Grid::new(-1.0, 10), Err(Error::InvalidArgument(_))));
        assert!(matches!(Grid::new(1.0, 2), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn nodes_exactly_symmetric_and_increasing() {
        for n in [3, 4, 17, 200, 3001] {
            let g = Grid::new(7.3, n).unwrap();
            let x = g.nodes();
            for i in 0..n {
                assert_eq!(x[i], -x[n - 1 - i]);
            }
            assert!(x.windows(2).all(|w| w[1] > w[0]));
            assert!((x[0] + 7.3 - g.spacing()).abs() < 1e-12);
        }
    }

    #[test]
    fn laplacian_of_zero_and_affine() {
        let g = Grid::new(1.0, 9).unwrap();
        assert!(g.laplacian_apply(&vec![0.0; 9]).unwrap().iter().all(|&v| v == 0.0));
        let f = g.sample(|x| 2.0 * x + 1.0);
        let lf = g.laplacian_apply(&f).unwrap();
        for (i, v) in lf.iter().enumerate() {
            if i == 0 || i == 8 {
                assert!(v.abs() > 1.0);
            } else {
                assert!(v.abs() < 1e-9, "interior entry {i} = {v}");
            }
        }
    }

    #[test]
    fn laplacian_sine_modes_are_eigenvectors() {
        let (l, n) = (1.5, 20);
        let g = Grid::new(l, n).unwrap();
        let h = g.spacing();
        for k in 1..=n {
            let kf = k as f64;
            let f = g.sample(|x| (kf * std::f64::consts::PI * (x + l) / (2.0 * l)).sin());
            let lam = 4.0 / (h * h)
                * (kf * std::f64::consts::PI / (2.0 * (n as f64 + 1.0))).sin().powi(2);
            let lf = g.laplacian_apply(&f).unwrap();
            for i in 0..n {
                assert!((lf[i] - lam * f[i]).abs() < 1e-9 * lam.max(1.0));
            }
        }
    }

    #[test]
    fn laplacian_spectrum_matches_dense_oracle() {
        let (l, n) = (2.0, 20);
        let g = Grid::new(l, n).unwrap();
        let h = g.spacing();
        let mut m = nalgebra::DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let col = g.laplacian_apply(&e).unwrap();
            for i in 0..n {
                m[(i, j)] = col[i];
            }
        }
        let mut dense: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
        dense.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (k, d) in dense.iter().enumerate() {
            let kf = (k + 1) as f64;
            let closed = 4.0 / (h * h)
                * (kf * std::f64::consts::PI / (2.0 * (n as f64 + 1.0))).sin().powi(2);
            assert_relative_eq!(*d, closed, max_relative = 1e-10);
        }
    }

    #[test]
    fn inner_product_examples() {
        let g = Grid::new(1.0, 3).unwrap();
        assert_eq!(g.inner(&[0.0, 1.0, 0.0], &[0.0, 1.0, 0.0]).unwrap(), 0.5);
        assert_eq!(g.inner(&[1.0; 3], &[1.0; 3]).unwrap(), 1.5);
        assert!(g.inner(&[1.0; 2], &[1.0; 3]).is_err());
        let a = [Complex64::new(1.0, 2.0), Complex64::new(0.0, -1.0), Complex64::new(3.0, 0.5)];
        let b = [Complex64::new(-1.0, 0.0), Complex64::new(2.0, 2.0), Complex64::new(0.0, 1.0)];
        let ab = g.inner_complex(&a, &b).unwrap();
        let ba = g.inner_complex(&b, &a).unwrap();
        assert!((ab - ba.conj()).norm() < 1e-15);
    }

    #[test]
    fn kinetic_identity_is_exact() {
        let g = Grid::new(3.0, 41).unwrap();
        let f = g.sample(|x| (x * 1.3).sin() * (-x * x).exp() + 0.1 * x);
        let lf = g.laplacian_apply(&f).unwrap();
        let lhs = gradient_sq(&f, g.spacing());
        let rhs = g.dot(&lf, &f);
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
    }

    proptest! {
        #[test]
        fn laplacian_symmetric_and_nonnegative(
            f in proptest::collection::vec(-1.0f64..1.0, 25),
            w in proptest::collection::vec(-1.0f64..1.0, 25),
        ) {
            let g = Grid::new(2.5, 25).unwrap();
            let lf = g.laplacian_apply(&f).unwrap();
            let lw = g.laplacian_apply(&w).unwrap();
            let a = g.dot(&lf, &w);
            let b = g.dot(&f, &lw);
            prop_assert!((a - b).abs() <= 1e-10 * (a.abs() + b.abs() + 1.0));
            prop_assert!(g.dot(&lf, &f) >= -1e-12);
        }

        #[test]
        fn inner_product_positive_definite(f in proptest::collection::vec(-1.0f64..1.0, 10)) {
            let g = Grid::new(1.0, 10).unwrap();
            let v = g.inner(&f, &f).unwrap();
            if f.iter().any(|x| *x != 0.0) {
                prop_assert!(v > 0.0);
            }
        }
    }
}
