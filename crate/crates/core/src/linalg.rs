//! Tridiagonal linear algebra: symmetric operators, banded LU with partial
//! pivoting (real or complex), the bordered "tridiagonal plus one row and
//! column" solve used by the arclength corrector, and parity folding.

use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;
use num_traits::{One, Zero};

use crate::error::{check_len, Error, Result};

pub trait Scalar:
    Copy
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn modulus(self) -> f64;
}

impl Scalar for f64 {
    fn modulus(self) -> f64 {
        self.abs()
    }
}

impl Scalar for Complex64 {
    fn modulus(self) -> f64 {
        self.norm()
    }
}

/// Real symmetric tridiagonal matrix stored by diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::InvalidArgument("empty tridiagonal matrix".into()));
        }
        check_len("off-diagonal", off.len(), diag.len() - 1)?;
        Ok(Self { diag, off })
    }

    pub fn from_diag(diag: Vec<f64>) -> Self {
        let n = diag.len();
        Self {
            diag,
            off: vec![0.0; n.saturating_sub(1)],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * x[i];
                if i > 0 {
                    s += self.off[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    s += self.off[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    /// Max absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i].abs();
                if i > 0 {
                    s += self.off[i - 1].abs();
                }
                if i + 1 < n {
                    s += self.off[i].abs();
                }
                s
            })
            .fold(0.0, f64::max)
    }

    pub fn shifted(&self, sigma: f64) -> Tridiag<f64> {
        Tridiag {
            sub: self.off.clone(),
            diag: self.diag.iter().map(|d| d - sigma).collect(),
            sup: self.off.clone(),
        }
    }

    pub fn to_general(&self) -> Tridiag<f64> {
        self.shifted(0.0)
    }

    /// Gershgorin enclosure of the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut r = 0.0;
            if i > 0 {
                r += self.off[i - 1].abs();
            }
            if i + 1 < n {
                r += self.off[i].abs();
            }
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }
}

/// General tridiagonal matrix: `sub[i]` sits at (i+1, i), `sup[i]` at (i, i+1).
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiag<T> {
    pub sub: Vec<T>,
    pub diag: Vec<T>,
    pub sup: Vec<T>,
}

impl<T: Scalar> Tridiag<T> {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * x[i];
                if i > 0 {
                    s = s + self.sub[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    s = s + self.sup[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    pub fn factor(&self) -> Result<TridiagLu<T>> {
        TridiagLu::new(self)
    }

    pub fn solve(&self, rhs: &[T]) -> Result<Vec<T>> {
        self.factor()?.solve(rhs)
    }
}

/// LU factorisation with partial pivoting (the `gttrf` scheme): `U` gains a
/// second superdiagonal when rows are swapped.
#[derive(Debug, Clone)]
pub struct TridiagLu<T> {
    l: Vec<T>,
    d: Vec<T>,
    u1: Vec<T>,
    u2: Vec<T>,
    swapped: Vec<bool>,
    min_pivot: f64,
    scale: f64,
}

impl<T: Scalar> TridiagLu<T> {
    pub fn new(a: &Tridiag<T>) -> Result<Self> {
        let n = a.len();
        if n == 0 {
            return Err(Error::InvalidArgument("empty tridiagonal matrix".into()));
        }
        check_len("sub-diagonal", a.sub.len(), n - 1)?;
        check_len("super-diagonal", a.sup.len(), n - 1)?;
        let mut d = a.diag.clone();
        let mut u1 = a.sup.clone();
        let mut u2 = vec![T::zero(); n.saturating_sub(2)];
        let mut l = vec![T::zero(); n - 1];
        let mut swapped = vec![false; n - 1];
        let mut scale: f64 = 0.0;
        for i in 0..n {
            scale = scale.max(a.diag[i].modulus());
            if i + 1 < n {
                scale = scale.max(a.sub[i].modulus()).max(a.sup[i].modulus());
            }
        }
        let mut sub = a.sub.clone();
        for i in 0..n.saturating_sub(1) {
            if d[i].modulus() >= sub[i].modulus() {
                if d[i].modulus() == 0.0 {
                    return Err(Error::NumericalFailure("zero pivot in tridiagonal LU".into()));
                }
                let f = sub[i] / d[i];
                l[i] = f;
                d[i + 1] = d[i + 1] - f * u1[i];
            } else {
                // swap rows i and i+1
                swapped[i] = true;
                let f = d[i] / sub[i];
                l[i] = f;
                d[i] = sub[i];
                let tmp = d[i + 1];
                d[i + 1] = u1[i] - f * tmp;
                u1[i] = tmp;
                if i + 2 < n {
                    u2[i] = u1[i + 1];
                    u1[i + 1] = -f * u2[i];
                }
            }
            sub[i] = T::zero();
        }
        let min_pivot = d.iter().map(|v| v.modulus()).fold(f64::INFINITY, f64::min);
        if !(min_pivot > 0.0) || !min_pivot.is_finite() {
            return Err(Error::NumericalFailure("singular tridiagonal matrix".into()));
        }
        Ok(Self {
            l,
            d,
            u1,
            u2,
            swapped,
            min_pivot,
            scale,
        })
    }

    /// Smallest pivot magnitude relative to the largest matrix entry; a cheap
    /// singularity indicator.
    pub fn relative_min_pivot(&self) -> f64 {
        if self.scale > 0.0 {
            self.min_pivot / self.scale
        } else {
            0.0
        }
    }

    pub fn solve(&self, rhs: &[T]) -> Result<Vec<T>> {
        let n = self.d.len();
        check_len("rhs", rhs.len(), n)?;
        let mut b = rhs.to_vec();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                let tmp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = tmp - self.l[i] * b[i];
            } else {
                b[i + 1] = b[i + 1] - self.l[i] * b[i];
            }
        }
        b[n - 1] = b[n - 1] / self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.u1[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.u1[i] * b[i + 1] - self.u2[i] * b[i + 2]) / self.d[i];
        }
        Ok(b)
    }
}

/// Solves the bordered system
///
/// ```text
/// [ A    c ] [x]   [r]
/// [ rowᵀ k ] [y] = [s]
/// ```
///
/// with `A` tridiagonal. Columns `0..n-1` are eliminated with row pivoting
/// inside the band; the dense last row is eliminated alongside. The final
/// 2×2 block (last band row, border row) is pivoted, so a singular `A` with
/// a regular bordered matrix (a fold) is handled. Cost O(n).
pub fn solve_bordered(
    a: &Tridiag<f64>,
    col: &[f64],
    row: &[f64],
    corner: f64,
    rhs: &[f64],
    rhs_last: f64,
) -> Result<(Vec<f64>, f64)> {
    let n = a.len();
    check_len("border column", col.len(), n)?;
    check_len("border row", row.len(), n)?;
    check_len("rhs", rhs.len(), n)?;
    if n < 2 {
        return Err(Error::InvalidArgument("bordered system needs n >= 2".into()));
    }
    let mut d = a.diag.clone();
    let mut u1 = a.sup.clone();
    u1.push(0.0);
    let mut u2 = vec![0.0; n];
    let mut c = col.to_vec();
    let mut b = rhs.to_vec();
    let mut last = row.to_vec();
    let mut last_c = corner;
    let mut last_b = rhs_last;

    for k in 0..n - 1 {
        let s = a.sub[k];
        if s.abs() > d[k].abs() {
            let f = d[k] / s;
            let (dk1, uk1) = (d[k + 1], u1[k + 1]);
            let (old_u1, old_c, old_b) = (u1[k], c[k], b[k]);
            d[k] = s;
            u1[k] = dk1;
            u2[k] = uk1;
            c[k] = c[k + 1];
            b[k] = b[k + 1];
            d[k + 1] = old_u1 - f * dk1;
            u1[k + 1] = -f * uk1;
            c[k + 1] = old_c - f * c[k];
            b[k + 1] = old_b - f * b[k];
        } else {
            if d[k] == 0.0 {
                return Err(Error::NumericalFailure(format!(
                    "zero band pivot at column {k} in bordered solve"
                )));
            }
            let f = s / d[k];
            d[k + 1] -= f * u1[k];
            c[k + 1] -= f * c[k];
            b[k + 1] -= f * b[k];
        }
        if last[k] != 0.0 {
            let f = last[k] / d[k];
            last[k + 1] -= f * u1[k];
            if k + 2 < n {
                last[k + 2] -= f * u2[k];
            }
            last_c -= f * c[k];
            last_b -= f * b[k];
            last[k] = 0.0;
        }
    }

    // final 2x2 block in unknowns (x[n-1], y)
    let (p, q, r0) = (d[n - 1], c[n - 1], b[n - 1]);
    let (s, t, r1) = (last[n - 1], last_c, last_b);
    let (xn, y) = if p.abs() >= s.abs() {
        if p == 0.0 {
            return Err(Error::NumericalFailure("singular bordered matrix".into()));
        }
        let f = s / p;
        let t2 = t - f * q;
        if t2 == 0.0 || !t2.is_finite() {
            return Err(Error::NumericalFailure("singular bordered matrix".into()));
        }
        let y = (r1 - f * r0) / t2;
        ((r0 - q * y) / p, y)
    } else {
        let f = p / s;
        let q2 = q - f * t;
        if q2 == 0.0 || !q2.is_finite() {
            return Err(Error::NumericalFailure("singular bordered matrix".into()));
        }
        let y = (r0 - f * r1) / q2;
        ((r1 - t * y) / s, y)
    };
    let mut x = vec![0.0; n];
    x[n - 1] = xn;
    for k in (0..n - 1).rev() {
        let mut acc = b[k] - c[k] * y - u1[k] * x[k + 1];
        if k + 2 < n {
            acc -= u2[k] * x[k + 2];
        }
        x[k] = acc / d[k];
    }
    if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("non-finite bordered solution".into()));
    }
    Ok((x, y))
}

/// Mirror symmetry class of a field under `x → -x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    /// Classifies `f`; `None` when neither symmetric nor antisymmetric to
    /// `rel_tol` (relative to the field's max norm).
    pub fn detect(f: &[f64], rel_tol: f64) -> Option<Parity> {
        let n = f.len();
        let scale = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return Some(Parity::Even);
        }
        let mut even_dev: f64 = 0.0;
        let mut odd_dev: f64 = 0.0;
        for i in 0..n {
            let j = n - 1 - i;
            even_dev = even_dev.max((f[i] - f[j]).abs());
            odd_dev = odd_dev.max((f[i] + f[j]).abs());
        }
        if even_dev <= rel_tol * scale {
            Some(Parity::Even)
        } else if odd_dev <= rel_tol * scale {
            Some(Parity::Odd)
        } else {
            None
        }
    }

    /// Exact projection onto the parity subspace.
    pub fn project(self, f: &[f64]) -> Vec<f64> {
        let n = f.len();
        (0..n)
            .map(|i| {
                let j = n - 1 - i;
                match self {
                    Parity::Even => 0.5 * (f[i] + f[j]),
                    Parity::Odd => {
                        if i == j {
                            0.0
                        } else {
                            0.5 * (f[i] - f[j])
                        }
                    }
                }
            })
            .collect()
    }
}

/// Restriction of mirror-symmetric operators to one parity class: the left
/// half of the grid with the reflection folded into the last row.
#[derive(Debug, Clone, Copy)]
pub struct Fold {
    pub parity: Parity,
    n: usize,
    m: usize,
}

impl Fold {
    pub fn new(parity: Parity, n: usize) -> Self {
        let m = match (parity, n % 2) {
            (_, 0) => n / 2,
            (Parity::Even, _) => n.div_ceil(2),
            (Parity::Odd, _) => n / 2,
        };
        Self { parity, n, m }
    }

    pub fn reduced_len(&self) -> usize {
        self.m
    }

    pub fn restrict(&self, f: &[f64]) -> Vec<f64> {
        f[..self.m].to_vec()
    }

    pub fn expand(&self, u: &[f64]) -> Vec<f64> {
        let mut f = vec![0.0; self.n];
        for i in 0..self.m {
            f[i] = u[i];
            let j = self.n - 1 - i;
            if j != i {
                f[j] = match self.parity {
                    Parity::Even => u[i],
                    Parity::Odd => -u[i],
                };
            }
        }
        f
    }

    /// Quadrature weights of the folded coordinates: `(f, g)_h` of two
    /// expanded fields equals `Σ w_i u_i v_i`.
    pub fn weights(&self, h: f64) -> Vec<f64> {
        let mut w = vec![2.0 * h; self.m];
        if self.n % 2 == 1 && self.parity == Parity::Even {
            w[self.m - 1] = h;
        }
        w
    }

    /// Folds a mirror-symmetric tridiagonal operator.
    pub fn operator(&self, t: &SymTridiag) -> Tridiag<f64> {
        let m = self.m;
        let mut diag = t.diag[..m].to_vec();
        let sub = t.off[..m.saturating_sub(1)].to_vec();
        let sup = t.off[..m.saturating_sub(1)].to_vec();
        let mut sub = sub;
        if self.n % 2 == 0 {
            // row m-1 couples to its mirror image m
            let e = t.off[m - 1];
            match self.parity {
                Parity::Even => diag[m - 1] += e,
                Parity::Odd => diag[m - 1] -= e,
            }
        } else if self.parity == Parity::Even && m >= 2 {
            // centre row: both neighbours are the same folded unknown
            sub[m - 2] += t.off[m - 1];
        }
        Tridiag { sub, diag, sup }
    }

    /// Symmetric matrix similar to [`Fold::operator`] under the scaling
    /// `u → √w u`; eigenvectors map back through [`Fold::unscale`].
    pub fn symmetric_operator(&self, t: &SymTridiag) -> SymTridiag {
        let a = self.operator(t);
        let off = a
            .sub
            .iter()
            .zip(&a.sup)
            .map(|(l, u)| (l * u).sqrt().copysign(*u))
            .collect();
        SymTridiag { diag: a.diag, off }
    }

    /// Maps an eigenvector of [`Fold::symmetric_operator`] to one of the
    /// folded operator.
    pub fn unscale(&self, y: &[f64]) -> Vec<f64> {
        let w = self.weights(1.0);
        y.iter().zip(&w).map(|(v, w)| v / w.sqrt()).collect()
    }
}
