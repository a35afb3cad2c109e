//! Newton solvers for `F(φ, E) = 0`: fixed-E Newton with Jacobian `L₊`, the
//! bordered pseudo-arclength corrector, and the small-amplitude seed of the
//! primary branch.
//!
//! Mirror-symmetric iterates are solved in folded coordinates (one half of
//! the grid), so symmetry is preserved exactly and kernels of the opposite
//! parity (translation modes, symmetry-breaking directions) never make the
//! Jacobian singular.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::grid::Grid;
use crate::linalg::{solve_bordered, Fold, Parity, Tridiag};
use crate::model::{linear_operator, linearization_with, potential_eval, residual_with, ModelSpec};
use crate::spectral::smallest_eigenpairs_on;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOpts {
    pub tol_residual: f64,
    pub max_iter: usize,
    pub damping: f64,
}

impl Default for NewtonOpts {
    fn default() -> Self {
        Self {
            tol_residual: 1e-10,
            max_iter: 50,
            damping: 1.0,
        }
    }
}

impl NewtonOpts {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_residual > 0.0) {
            return Err(Error::InvalidArgument("tol_residual must be > 0".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be >= 1".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidArgument("damping must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonReport {
    pub phi: Vec<f64>,
    pub e: f64,
    pub iterations: usize,
    /// Sup-norm residual before each step and after the last one.
    pub residuals: Vec<f64>,
}

/// Parity tolerance for deciding whether to solve in folded coordinates.
const FOLD_TOL: f64 = 1e-12;

/// Smallest pivot (relative to the matrix scale) accepted by fixed-E Newton.
const PIVOT_TOL: f64 = 1e-13;

pub(crate) fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Residual level reachable in floating point: the stencil alone cancels
/// terms of size `‖L‖∞·‖φ‖∞`.
pub(crate) fn rounding_floor(g: &Grid, m: &ModelSpec, v: &[f64], phi: &[f64], e: f64) -> f64 {
    let h = g.spacing();
    let amp = sup(phi);
    let scale = 4.0 / (h * h) + sup(v) + e.abs() + m.gamma.abs() * m.pow_abs(amp);
    64.0 * f64::EPSILON * scale * amp
}

pub(crate) fn effective_tol(opts: &NewtonOpts, g: &Grid, m: &ModelSpec, v: &[f64], phi: &[f64], e: f64) -> f64 {
    opts.tol_residual.max(rounding_floor(g, m, v, phi, e))
}

/// Chooses the folded representation for a seed, if it is mirror symmetric.
pub(crate) fn fold_for(phi: &[f64], v: &[f64]) -> Option<Fold> {
    // the potential must itself be even for folding to be exact
    Parity::detect(v, 0.0)?;
    Parity::detect(phi, FOLD_TOL).map(|p| Fold::new(p, phi.len()))
}

/// Newton at fixed `E` with Jacobian `L₊`.
pub fn newton_fixed_e(g: &Grid, m: &ModelSpec, phi0: &[f64], e: f64, opts: &NewtonOpts) -> Result<NewtonReport> {
    check_len("newton_fixed_E", phi0.len(), g.len())?;
    opts.validate()?;
    if !(e > 0.0) {
        return Err(Error::OutsideFredholmDomain(e));
    }
    if phi0.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("non-finite initial guess".into()));
    }
    let v = potential_eval(&m.potential, g);
    let fold = fold_for(phi0, &v);
    let mut phi = match fold {
        Some(f) => f.parity.project(phi0),
        None => phi0.to_vec(),
    };
    let mut r = residual_with(g, m, &v, &phi, e);
    let mut rn = sup(&r);
    let mut residuals = vec![rn];
    for it in 0..opts.max_iter {
        if rn <= effective_tol(opts, g, m, &v, &phi, e) {
            return Ok(NewtonReport {
                phi,
                e,
                iterations: it,
                residuals,
            });
        }
        let (lp, _) = linearization_with(g, m, &v, &phi, e);
        let step = match fold {
            Some(f) => {
                let a = f.operator(&lp);
                let lu = a.factor().map_err(|_| Error::NearBifurcation(e))?;
                if lu.relative_min_pivot() < PIVOT_TOL {
                    return Err(Error::NearBifurcation(e));
                }
                let rhs: Vec<f64> = f.restrict(&r).iter().map(|x| -x).collect();
                f.expand(&lu.solve(&rhs)?)
            }
            None => {
                let lu = lp.to_general().factor().map_err(|_| Error::NearBifurcation(e))?;
                if lu.relative_min_pivot() < PIVOT_TOL {
                    return Err(Error::NearBifurcation(e));
                }
                let rhs: Vec<f64> = r.iter().map(|x| -x).collect();
                lu.solve(&rhs)?
            }
        };
        let mut lambda = opts.damping;
        let mut accepted = None;
        for _ in 0..12 {
            let trial: Vec<f64> = phi.iter().zip(&step).map(|(a, d)| a + lambda * d).collect();
            let rt = residual_with(g, m, &v, &trial, e);
            let rtn = sup(&rt);
            if rtn.is_finite() && rtn < rn {
                accepted = Some((trial, rt, rtn));
                break;
            }
            lambda *= 0.5;
        }
        let Some((trial, rt, rtn)) = accepted else {
            return Err(Error::NoConvergence {
                iterations: it + 1,
                residual: rn,
            });
        };
        phi = trial;
        r = rt;
        rn = rtn;
        residuals.push(rn);
    }
    if rn <= effective_tol(opts, g, m, &v, &phi, e) {
        return Ok(NewtonReport {
            phi,
            e,
            iterations: opts.max_iter,
            residuals,
        });
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        residual: rn,
    })
}

/// Newton on `F(φ,E) = 0` plus the arclength constraint
/// `(τ_φ, φ - φ_pred)_h + τ_E (E - E_pred) = 0`.
pub fn bordered_corrector(
    g: &Grid,
    m: &ModelSpec,
    phi_pred: &[f64],
    e_pred: f64,
    tau_phi: &[f64],
    tau_e: f64,
    opts: &NewtonOpts,
) -> Result<NewtonReport> {
    check_len("bordered_corrector", phi_pred.len(), g.len())?;
    check_len("bordered_corrector tangent", tau_phi.len(), g.len())?;
    opts.validate()?;
    let h = g.spacing();
    let v = potential_eval(&m.potential, g);
    let fold = fold_for(phi_pred, &v);
    let (mut phi, tau) = match fold {
        Some(f) => (f.parity.project(phi_pred), f.parity.project(tau_phi)),
        None => (phi_pred.to_vec(), tau_phi.to_vec()),
    };
    let phi_ref = phi.clone();
    let mut e = e_pred;
    let constraint = |phi: &[f64], e: f64| -> f64 {
        h * tau.iter().zip(phi).zip(&phi_ref).map(|((t, a), b)| t * (a - b)).sum::<f64>() + tau_e * (e - e_pred)
    };
    let mut residuals = Vec::new();
    for it in 0..=opts.max_iter {
        if !(e > 0.0) {
            return Err(Error::OutsideFredholmDomain(e));
        }
        let r = residual_with(g, m, &v, &phi, e);
        let c = constraint(&phi, e);
        let rn = sup(&r);
        residuals.push(rn.max(c.abs()));
        if !rn.is_finite() {
            break;
        }
        let tol = effective_tol(opts, g, m, &v, &phi, e);
        if rn <= tol && c.abs() <= tol {
            return Ok(NewtonReport {
                phi,
                e,
                iterations: it,
                residuals,
            });
        }
        if it == opts.max_iter {
            break;
        }
        let (lp, _) = linearization_with(g, m, &v, &phi, e);
        let (dphi, de) = match fold {
            Some(f) => {
                let a: Tridiag<f64> = f.operator(&lp);
                let w = f.weights(h);
                let row: Vec<f64> = f.restrict(&tau).iter().zip(&w).map(|(t, w)| t * w).collect();
                let rhs: Vec<f64> = f.restrict(&r).iter().map(|x| -x).collect();
                let (x, y) = solve_bordered(&a, &f.restrict(&phi), &row, tau_e, &rhs, -c)?;
                (f.expand(&x), y)
            }
            None => {
                let a = lp.to_general();
                let row: Vec<f64> = tau.iter().map(|t| h * t).collect();
                let rhs: Vec<f64> = r.iter().map(|x| -x).collect();
                solve_bordered(&a, &phi, &row, tau_e, &rhs, -c)?
            }
        };
        for (a, d) in phi.iter_mut().zip(&dphi) {
            *a += d;
        }
        e += de;
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        residual: residuals.last().copied().unwrap_or(f64::NAN),
    })
}

/// Small-amplitude seed on the branch bifurcating from `(0, E₀)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimarySeed {
    pub phi: Vec<f64>,
    pub e_start: f64,
    pub e0: f64,
    /// Grid-normalized ground eigenvector of `-Δ_h + V`.
    pub ground: Vec<f64>,
    /// Normal-form coefficient `|γ|(v, |v|^p v)/(v, v)`.
    pub coefficient: f64,
}

/// Lowest eigenpair `(−E₀, v₀)` of `-Δ_h + V`, or an error when it is not
/// negative.
pub fn linear_ground_state(g: &Grid, m: &ModelSpec) -> Result<(f64, Vec<f64>)> {
    let op = linear_operator(g, &m.potential);
    let mut pairs = smallest_eigenpairs_on(g, &op, 1)?;
    let (lam, v) = pairs.remove(0);
    if lam >= 0.0 {
        return Err(Error::NoLinearBoundState);
    }
    Ok((-lam, v))
}

pub fn seed_primary_branch(g: &Grid, m: &ModelSpec, s: f64) -> Result<PrimarySeed> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::InvalidArgument(format!("seed amplitude must be > 0, got {s}")));
    }
    let (e0, v) = linear_ground_state(g, m)?;
    let num: f64 = v.iter().map(|x| m.pow_abs(*x) * x * x).sum::<f64>();
    let den: f64 = v.iter().map(|x| x * x).sum::<f64>();
    let coefficient = m.gamma.abs() * num / den;
    let e_start = e0 - m.gamma.signum() * coefficient * m.pow_abs(s);
    Ok(PrimarySeed {
        phi: v.iter().map(|x| s * x).collect(),
        e_start,
        e0,
        ground: v,
        coefficient,
    })
}
