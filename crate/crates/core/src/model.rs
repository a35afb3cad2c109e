//! The stationary NLS problem `(-Δ + V + E)φ + γ|φ|^p φ = 0`: potentials,
//! residual, energy/charge functionals, the Pohozaev check and the real-slice
//! linearization `(L₊, L₋)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::grid::{gradient_sq, gradient_sq_complex, neg_laplacian, Grid};
use crate::linalg::SymTridiag;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    Zero,
    SingleGaussianWell,
    DoubleGaussianWell,
}

/// Non-confining, even potential family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    #[serde(default)]
    pub depth: f64,
    #[serde(default)]
    pub separation: f64,
    #[serde(default = "one")]
    pub width: f64,
}

fn one() -> f64 {
    1.0
}

impl PotentialSpec {
    pub fn zero() -> Self {
        Self {
            kind: PotentialKind::Zero,
            depth: 0.0,
            separation: 0.0,
            width: 1.0,
        }
    }

    pub fn single_well(depth: f64, width: f64) -> Self {
        Self {
            kind: PotentialKind::SingleGaussianWell,
            depth,
            separation: 0.0,
            width,
        }
    }

    pub fn double_well(depth: f64, separation: f64, width: f64) -> Self {
        Self {
            kind: PotentialKind::DoubleGaussianWell,
            depth,
            separation,
            width,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.depth >= 0.0) || !self.depth.is_finite() {
            return Err(Error::InvalidArgument(format!("depth must be >= 0, got {}", self.depth)));
        }
        if !(self.separation >= 0.0) || !self.separation.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "separation must be >= 0, got {}",
                self.separation
            )));
        }
        if !(self.width > 0.0) || !self.width.is_finite() {
            return Err(Error::InvalidArgument(format!("width must be > 0, got {}", self.width)));
        }
        Ok(())
    }

    /// True when `V ≡ 0`, i.e. the problem is translation invariant.
    pub fn is_translation_invariant(&self) -> bool {
        self.kind == PotentialKind::Zero || self.depth == 0.0
    }

    pub fn value(&self, x: f64) -> f64 {
        let s2 = self.width * self.width;
        match self.kind {
            PotentialKind::Zero => 0.0,
            PotentialKind::SingleGaussianWell => -self.depth * (-x * x / s2).exp(),
            PotentialKind::DoubleGaussianWell => {
                let a = x - self.separation;
                let b = x + self.separation;
                // commutative sum keeps V(x) == V(-x) bitwise
                -self.depth * ((-a * a / s2).exp() + (-b * b / s2).exp())
            }
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let s2 = self.width * self.width;
        let g = |y: f64| 2.0 * self.depth * y / s2 * (-y * y / s2).exp();
        match self.kind {
            PotentialKind::Zero => 0.0,
            PotentialKind::SingleGaussianWell => g(x),
            PotentialKind::DoubleGaussianWell => g(x - self.separation) + g(x + self.separation),
        }
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        let s2 = self.width * self.width;
        let g = |y: f64| 2.0 * self.depth / s2 * (1.0 - 2.0 * y * y / s2) * (-y * y / s2).exp();
        match self.kind {
            PotentialKind::Zero => 0.0,
            PotentialKind::SingleGaussianWell => g(x),
            PotentialKind::DoubleGaussianWell => g(x - self.separation) + g(x + self.separation),
        }
    }
}

/// Potential, coupling `γ` (attractive for `γ < 0`) and power `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub potential: PotentialSpec,
    pub gamma: f64,
    pub power: f64,
}

impl ModelSpec {
    pub fn new(potential: PotentialSpec, gamma: f64, power: f64) -> Result<Self> {
        let m = Self {
            potential,
            gamma,
            power,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.potential.validate()?;
        if !(self.power > 0.0) || !self.power.is_finite() {
            return Err(Error::InvalidArgument(format!("power p must be > 0, got {}", self.power)));
        }
        if !self.gamma.is_finite() {
            return Err(Error::InvalidArgument("gamma must be finite".into()));
        }
        Ok(())
    }

    /// Analytic continuation arguments need `p` an even positive integer.
    pub fn is_analytic(&self) -> bool {
        let p = self.power;
        p.fract() == 0.0 && (p as i64) % 2 == 0
    }

    pub(crate) fn pow_abs(&self, v: f64) -> f64 {
        if v == 0.0 {
            0.0
        } else if self.power == 2.0 {
            v * v
        } else {
            v.abs().powf(self.power)
        }
    }
}

/// Energy decomposition of a field.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Functionals {
    pub energy: f64,
    pub charge: f64,
    pub kinetic: f64,
    pub potential: f64,
    pub nonlinear: f64,
}

pub fn potential_eval(spec: &PotentialSpec, g: &Grid) -> Vec<f64> {
    let n = g.len();
    let x = g.nodes();
    let mut v = vec![0.0; n];
    // evaluate the left half and mirror to keep samples exactly even
    for i in 0..n.div_ceil(2) {
        let val = spec.value(x[i]);
        v[i] = val;
        v[n - 1 - i] = val;
    }
    v
}

pub fn potential_derivative_eval(spec: &PotentialSpec, g: &Grid) -> Vec<f64> {
    g.nodes().iter().map(|&x| spec.derivative(x)).collect()
}

/// `(-Δ_h + V + E)φ + γ|φ|^p φ` at every node.
pub fn residual(g: &Grid, m: &ModelSpec, phi: &[f64], e: f64) -> Result<Vec<f64>> {
    check_len("residual", phi.len(), g.len())?;
    let v = potential_eval(&m.potential, g);
    Ok(residual_with(g, m, &v, phi, e))
}

pub(crate) fn residual_with(g: &Grid, m: &ModelSpec, v: &[f64], phi: &[f64], e: f64) -> Vec<f64> {
    let mut r = neg_laplacian(phi, g.spacing());
    for i in 0..phi.len() {
        r[i] += (v[i] + e) * phi[i] + m.gamma * m.pow_abs(phi[i]) * phi[i];
    }
    r
}

pub fn charge(g: &Grid, phi: &[f64]) -> f64 {
    0.5 * g.dot(phi, phi)
}

pub fn energy(g: &Grid, m: &ModelSpec, phi: &[f64]) -> Result<Functionals> {
    check_len("energy", phi.len(), g.len())?;
    let v = potential_eval(&m.potential, g);
    Ok(energy_with(g, m, &v, phi))
}

pub(crate) fn energy_with(g: &Grid, m: &ModelSpec, v: &[f64], phi: &[f64]) -> Functionals {
    let h = g.spacing();
    let kinetic = 0.5 * gradient_sq(phi, h);
    let potential = 0.5 * h * v.iter().zip(phi).map(|(v, f)| v * f * f).sum::<f64>();
    let nonlinear = nonlinear_term(g, m, phi.iter().map(|f| f.abs()));
    Functionals {
        energy: kinetic + potential + nonlinear,
        charge: charge(g, phi),
        kinetic,
        potential,
        nonlinear,
    }
}

pub fn energy_complex(g: &Grid, m: &ModelSpec, u: &[Complex64]) -> Result<Functionals> {
    check_len("energy", u.len(), g.len())?;
    let v = potential_eval(&m.potential, g);
    Ok(energy_complex_with(g, m, &v, u))
}

pub(crate) fn energy_complex_with(g: &Grid, m: &ModelSpec, v: &[f64], u: &[Complex64]) -> Functionals {
    let h = g.spacing();
    let kinetic = 0.5 * gradient_sq_complex(u, h);
    let potential = 0.5 * h * v.iter().zip(u).map(|(v, z)| v * z.norm_sqr()).sum::<f64>();
    let nonlinear = nonlinear_term(g, m, u.iter().map(|z| z.norm()));
    let charge = 0.5 * h * u.iter().map(|z| z.norm_sqr()).sum::<f64>();
    Functionals {
        energy: kinetic + potential + nonlinear,
        charge,
        kinetic,
        potential,
        nonlinear,
    }
}

fn nonlinear_term(g: &Grid, m: &ModelSpec, amplitudes: impl Iterator<Item = f64>) -> f64 {
    let s: f64 = amplitudes.map(|a| m.pow_abs(a) * a * a).sum();
    m.gamma / (m.power + 2.0) * g.spacing() * s
}

/// One-dimensional Pohozaev residual
/// `½‖φ'‖² - ½∫(V+E)φ² - ½∫x V'(x) φ² - γ/(p+2) ∫|φ|^{p+2}`,
/// zero on exact solutions of the continuum problem.
pub fn pohozaev_residual(g: &Grid, m: &ModelSpec, phi: &[f64], e: f64) -> Result<f64> {
    check_len("pohozaev_residual", phi.len(), g.len())?;
    let v = potential_eval(&m.potential, g);
    let dv = potential_derivative_eval(&m.potential, g);
    Ok(pohozaev_with(g, m, &v, &dv, phi, e))
}

pub(crate) fn pohozaev_with(g: &Grid, m: &ModelSpec, v: &[f64], dv: &[f64], phi: &[f64], e: f64) -> f64 {
    let h = g.spacing();
    let x = g.nodes();
    let kinetic = 0.5 * gradient_sq(phi, h);
    let mut linear = 0.0;
    let mut virial = 0.0;
    let mut nl = 0.0;
    for i in 0..phi.len() {
        let f2 = phi[i] * phi[i];
        linear += (v[i] + e) * f2;
        virial += x[i] * dv[i] * f2;
        nl += m.pow_abs(phi[i]) * f2;
    }
    kinetic - 0.5 * h * linear - 0.5 * h * virial - m.gamma / (m.power + 2.0) * h * nl
}

/// Real-slice linearization blocks:
/// `L₊ = -Δ + V + E + γ(p+1)|φ|^p`, `L₋ = -Δ + V + E + γ|φ|^p`.
pub fn linearization(g: &Grid, m: &ModelSpec, phi: &[f64], e: f64) -> Result<(SymTridiag, SymTridiag)> {
    check_len("linearization", phi.len(), g.len())?;
    let v = potential_eval(&m.potential, g);
    Ok(linearization_with(g, m, &v, phi, e))
}

pub(crate) fn linearization_with(
    g: &Grid,
    m: &ModelSpec,
    v: &[f64],
    phi: &[f64],
    e: f64,
) -> (SymTridiag, SymTridiag) {
    let h = g.spacing();
    let n = phi.len();
    let inv = 1.0 / (h * h);
    let off = vec![-inv; n - 1];
    let mut dp = Vec::with_capacity(n);
    let mut dm = Vec::with_capacity(n);
    for i in 0..n {
        let base = 2.0 * inv + v[i] + e;
        let nl = m.gamma * m.pow_abs(phi[i]);
        dp.push(base + (m.power + 1.0) * nl);
        dm.push(base + nl);
    }
    (
        SymTridiag {
            diag: dp,
            off: off.clone(),
        },
        SymTridiag { diag: dm, off },
    )
}

/// `-Δ_h + V` on the grid.
pub fn linear_operator(g: &Grid, spec: &PotentialSpec) -> SymTridiag {
    let h = g.spacing();
    let inv = 1.0 / (h * h);
    let v = potential_eval(spec, g);
    SymTridiag {
        diag: v.iter().map(|v| 2.0 * inv + v).collect(),
        off: vec![-inv; g.len() - 1],
    }
}

/// Closed-form soliton of the potential-free problem for `p`, `γ < 0`:
/// `φ_E(x) = [(p+2)E/(2|γ|)]^{1/p} sech^{2/p}(p√E x/2)`.
pub fn free_soliton(power: f64, gamma: f64, e: f64, x: f64) -> f64 {
    let amp = ((power + 2.0) * e / (2.0 * gamma.abs())).powf(1.0 / power);
    amp * (1.0 / (0.5 * power * e.sqrt() * x).cosh()).powf(2.0 / power)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cubic_free() -> ModelSpec {
        ModelSpec::new(PotentialSpec::zero(), -1.0, 2.0).unwrap()
    }

    fn dw() -> PotentialSpec {
        PotentialSpec::double_well(2.0, 2.0, 1.0)
    }

    fn sech(x: f64) -> f64 {
        1.0 / x.cosh()
    }

    #[test]
    fn potential_examples() {
        let g = Grid::new(5.0, 101).unwrap();
        assert!(potential_eval(&PotentialSpec::zero(), &g).iter().all(|&v| v == 0.0));
        let p = dw();
        assert!((p.value(0.0) + 4.0 * (-4.0f64).exp()).abs() < 1e-15);
        assert!((p.value(0.0) + 0.0733).abs() < 1e-4);
        assert!((p.value(2.0) + 2.0 * (1.0 + (-16.0f64).exp())).abs() < 1e-15);
        let v = potential_eval(&p, &g);
        let n = v.len();
        for i in 0..n {
            assert_eq!(v[i], v[n - 1 - i]);
        }
        assert_eq!(p.value(1.234), p.value(-1.234));
        assert!(p.value(60.0).abs() < 1e-300);
    }

    #[test]
    fn potential_derivatives_match_finite_differences() {
        for p in [dw(), PotentialSpec::single_well(1.5, 0.7)] {
            for &x in &[-3.1, -0.4, 0.0, 0.9, 2.2] {
                let d = 1e-5;
                let fd = (p.value(x + d) - p.value(x - d)) / (2.0 * d);
                assert!((fd - p.derivative(x)).abs() < 1e-8);
                let fd2 = (p.derivative(x + d) - p.derivative(x - d)) / (2.0 * d);
                assert!((fd2 - p.second_derivative(x)).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn residual_of_zero_is_zero() {
        let g = Grid::new(10.0, 99).unwrap();
        let m = ModelSpec::new(dw(), -1.0, 2.0).unwrap();
        let r = residual(&g, &m, &vec![0.0; 99], 3.7).unwrap();
        assert!(r.iter().all(|&v| v == 0.0));
        assert!(residual(&g, &m, &[0.0; 3], 1.0).is_err());
    }

    #[test]
    fn soliton_residual_is_second_order() {
        // √2 sech(x) solves -φ'' + φ - φ³ = 0
        let m = cubic_free();
        let mut prev = None;
        for n in [1000usize, 2000, 4000] {
            let g = Grid::new(20.0, n - 1).unwrap();
            let phi = g.sample(|x| 2f64.sqrt() * sech(x));
            let r = residual(&g, &m, &phi, 1.0).unwrap();
            let sup = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let h = g.spacing();
            assert!(sup <= 1.0 * h * h, "sup {sup} vs h² {}", h * h);
            if let Some(p) = prev {
                let ratio: f64 = p / sup;
                assert!((ratio - 4.0).abs() < 0.3, "ratio {ratio}");
            }
            prev = Some(sup);
        }
    }

    #[test]
    fn small_eigenvector_residual_is_higher_order() {
        let g = Grid::new(12.0, 401).unwrap();
        let m = ModelSpec::new(dw(), -1.0, 2.0).unwrap();
        let op = linear_operator(&g, &m.potential);
        let pairs = crate::spectral::smallest_eigenpairs(&op, 1).unwrap();
        let (lam, v) = (&pairs[0].0, &pairs[0].1);
        let e0 = -lam;
        for s in [1e-2, 1e-3] {
            let phi: Vec<f64> = v.iter().map(|x| s * x).collect();
            let r = residual(&g, &m, &phi, e0).unwrap();
            for i in 0..r.len() {
                let expect = m.gamma * s.powi(3) * v[i].powi(3);
                assert!((r[i] - expect).abs() < 1e-9 * s.powi(3) + 1e-13);
            }
        }
    }

    #[test]
    fn soliton_functionals_converge() {
        let m = cubic_free();
        let g = Grid::new(25.0, 20000).unwrap();
        let phi = g.sample(|x| 2f64.sqrt() * sech(x));
        let f = energy(&g, &m, &phi).unwrap();
        assert!((f.kinetic - 2.0 / 3.0).abs() < 1e-5);
        assert!((f.nonlinear + 4.0 / 3.0).abs() < 1e-5);
        assert!((f.energy + 2.0 / 3.0).abs() < 1e-5);
        assert!((f.potential).abs() == 0.0);
        assert!((charge(&g, &phi) - 2.0).abs() < 1e-6);
        assert!(pohozaev_residual(&g, &m, &phi, 1.0).unwrap().abs() < 1e-5);
    }

    #[test]
    fn functionals_of_zero_and_scaling() {
        let g = Grid::new(6.0, 61).unwrap();
        let m0 = ModelSpec::new(dw(), 0.0, 2.0).unwrap();
        let z = energy(&g, &m0, &vec![0.0; 61]).unwrap();
        assert_eq!(z, Functionals::default());
        assert_eq!(pohozaev_residual(&g, &m0, &vec![0.0; 61], 1.0).unwrap(), 0.0);
        let phi = g.sample(|x| (-(x - 0.3) * (x - 0.3)).exp());
        let c = 1.7;
        let scaled: Vec<f64> = phi.iter().map(|v| c * v).collect();
        let e1 = energy(&g, &m0, &phi).unwrap().energy;
        let e2 = energy(&g, &m0, &scaled).unwrap().energy;
        assert!((e2 - c * c * e1).abs() < 1e-12 * e2.abs());
        assert!((charge(&g, &scaled) - c * c * charge(&g, &phi)).abs() < 1e-13);
    }

    #[test]
    fn linearization_identities() {
        let g = Grid::new(8.0, 81).unwrap();
        let m = ModelSpec::new(dw(), -1.0, 2.0).unwrap();
        let zero = vec![0.0; 81];
        let (lp, lm) = linearization(&g, &m, &zero, 1.3).unwrap();
        assert_eq!(lp, lm);
        let base = linear_operator(&g, &m.potential);
        for i in 0..81 {
            assert!((lp.diag[i] - (base.diag[i] + 1.3)).abs() < 1e-12);
        }
        let phi = g.sample(|x| (x * 0.7).sin() * (-x * x / 4.0).exp());
        let (lp, lm) = linearization(&g, &m, &phi, 0.8).unwrap();
        let r = residual(&g, &m, &phi, 0.8).unwrap();
        let lphi = lm.apply(&phi);
        for i in 0..81 {
            assert!((lphi[i] - r[i]).abs() < 1e-10 * (1.0 + r[i].abs()));
            assert!((lp.diag[i] - lm.diag[i] + 2.0 * phi[i] * phi[i]).abs() < 1e-12);
        }
        assert_eq!(lp.off, lm.off);
    }

    #[test]
    fn gradient_check_against_residual() {
        // d/dt [energy - E*charge](φ + t v) = (F(φ,E), v)_h: exact for the
        // discrete functionals up to finite-difference step error.
        let g = Grid::new(6.0, 121).unwrap();
        let m = ModelSpec::new(dw(), -1.0, 2.0).unwrap();
        let e = 1.1;
        let phi = g.sample(|x| 1.2 * (-(x - 0.5) * (x - 0.5)).exp());
        let v = g.sample(|x| (2.0 * x).cos() * (-x * x / 3.0).exp());
        let lag = |f: &[f64]| energy(&g, &m, f).unwrap().energy + e * charge(&g, f);
        let t = 1e-5;
        let plus: Vec<f64> = phi.iter().zip(&v).map(|(a, b)| a + t * b).collect();
        let minus: Vec<f64> = phi.iter().zip(&v).map(|(a, b)| a - t * b).collect();
        let fd = (lag(&plus) - lag(&minus)) / (2.0 * t);
        let r = residual(&g, &m, &phi, e).unwrap();
        let pairing = g.dot(&r, &v);
        assert!((fd - pairing).abs() < 1e-7, "{fd} vs {pairing}");
    }

    #[test]
    fn parity_of_residual() {
        let g = Grid::new(7.0, 71).unwrap();
        let m = ModelSpec::new(dw(), -1.0, 2.0).unwrap();
        let even = g.sample(|x| (-x * x).exp() * (1.0 + x * x));
        let odd = g.sample(|x| x * (-x * x).exp());
        let re = residual(&g, &m, &even, 0.9).unwrap();
        let ro = residual(&g, &m, &odd, 0.9).unwrap();
        let n = re.len();
        for i in 0..n {
            assert_eq!(re[i], re[n - 1 - i]);
            assert!((ro[i] + ro[n - 1 - i]).abs() < 1e-14);
        }
    }

    #[test]
    fn free_soliton_closed_form() {
        assert!((free_soliton(2.0, -1.0, 1.0, 0.0) - 2f64.sqrt()).abs() < 1e-15);
        let e: f64 = 3.0;
        let x = 0.4;
        let expect = (2.0 * e).sqrt() * sech(e.sqrt() * x);
        assert!((free_soliton(2.0, -1.0, e, x) - expect).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn lminus_phi_equals_residual(
            coeffs in proptest::collection::vec(-1.5f64..1.5, 31),
            e in 0.1f64..5.0,
            p in prop_oneof![Just(2.0f64), Just(1.0), Just(3.0), Just(0.5)],
        ) {
            let g = Grid::new(3.0, 31).unwrap();
            let m = ModelSpec::new(dw(), -0.7, p).unwrap();
            let (lp, lm) = linearization(&g, &m, &coeffs, e).unwrap();
            let r = residual(&g, &m, &coeffs, e).unwrap();
            let lphi = lm.apply(&coeffs);
            for i in 0..31 {
                prop_assert!((lphi[i] - r[i]).abs() <= 1e-11 * (1.0 + r[i].abs() + lm.diag[i].abs()));
            }
            prop_assert_eq!(lp.off.clone(), lm.off.clone());
        }
    }
}
