//! Constrained energy minimizers at fixed charge by normalized gradient
//! flow, used as an independent check of the continuation results.
//!
//! Each step is backward Euler in the linear part with the nonlinear
//! coefficient frozen, `(I + dt(-Δ + V + γ|φ|^p)) φ̃ = φ`, followed by the
//! exact rescaling to `Q = μ`.

use serde::{Deserialize, Serialize};

use crate::continuation::{point_at_charge, Branch, BranchPoint, Controls, Problem};
use crate::error::{check_len, Error, Result};
use crate::grid::{mirror, Grid};
use crate::linalg::SymTridiag;
use crate::model::charge;
use crate::solver::sup;
use crate::spectral::eig_count_below;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowOpts {
    pub dt: f64,
    /// Cap for the step growth after accepted steps.
    pub dt_max: f64,
    pub grad_tol: f64,
    pub max_steps: usize,
}

impl Default for FlowOpts {
    fn default() -> Self {
        Self {
            dt: 1e-2,
            dt_max: 1.0,
            grad_tol: 1e-8,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimizer {
    pub phi: Vec<f64>,
    pub e: f64,
    pub energy: f64,
    pub iterations: usize,
    pub dt_halvings: usize,
    /// Sup-norm of `F(φ, E)` at exit.
    pub residual: f64,
    /// Energy after every accepted step.
    pub energy_history: Vec<f64>,
}

/// `‖φ - mirror(φ)‖/‖φ‖`.
pub fn asymmetry(g: &Grid, phi: &[f64]) -> Result<f64> {
    check_len("asymmetry", phi.len(), g.len())?;
    let n = g.norm(phi);
    if n == 0.0 {
        return Err(Error::InvalidArgument("asymmetry of the zero field".into()));
    }
    let d: Vec<f64> = phi.iter().zip(mirror(phi)).map(|(a, b)| a - b).collect();
    Ok(g.norm(&d) / n)
}

fn check_subcritical(p: &Problem) -> Result<()> {
    if p.model.gamma < 0.0 && p.model.power >= 4.0 {
        return Err(Error::Unsupported(format!(
            "p = {} is critical or supercritical in one dimension: the energy is unbounded below at fixed charge",
            p.model.power
        )));
    }
    Ok(())
}

fn rescale(g: &Grid, phi: &mut [f64], mu: f64) {
    let q = charge(g, phi);
    let s = (mu / q).sqrt();
    phi.iter_mut().for_each(|x| *x *= s);
}

/// Multiplier `E = -(∇E(φ), φ)/(2Q)` and the residual `F(φ, E)`.
fn multiplier(p: &Problem, phi: &[f64], mu: f64) -> (f64, Vec<f64>) {
    let grad = p.residual(phi, 0.0);
    let e = -p.grid.dot(&grad, phi) / (2.0 * mu);
    let f: Vec<f64> = grad.iter().zip(phi).map(|(g, x)| g + e * x).collect();
    (e, f)
}

pub fn minimize_at_charge(p: &Problem, mu: f64, init: &[f64], opts: &FlowOpts) -> Result<Minimizer> {
    let g = &p.grid;
    check_len("minimize_at_charge", init.len(), g.len())?;
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::InvalidArgument(format!("target charge must be > 0, got {mu}")));
    }
    if !(opts.dt > 0.0) || !(opts.dt_max >= opts.dt) {
        return Err(Error::InvalidArgument("need 0 < dt <= dt_max".into()));
    }
    if g.norm(init) == 0.0 {
        return Err(Error::InvalidArgument("initial field is zero".into()));
    }
    check_subcritical(p)?;
    let h = g.spacing();
    let inv = 1.0 / (h * h);
    let n = g.len();
    let mut phi = init.to_vec();
    rescale(g, &mut phi, mu);
    let mut energy = p.functionals(&phi).energy;
    let mut history = vec![energy];
    let mut dt = opts.dt;
    let mut halvings = 0;
    let (mut e, mut f) = multiplier(p, &phi, mu);
    let mut res = sup(&f);
    for step in 0..opts.max_steps {
        if res <= opts.grad_tol {
            return Ok(Minimizer {
                phi,
                e,
                energy,
                iterations: step,
                dt_halvings: halvings,
                residual: res,
                energy_history: history,
            });
        }
        loop {
            if dt < 1e-14 {
                return Err(Error::NoConvergence {
                    iterations: step,
                    residual: res,
                });
            }
            let m = SymTridiag {
                diag: (0..n)
                    .map(|i| 1.0 + dt * (2.0 * inv + p.v[i] + p.model.gamma * p.model.pow_abs(phi[i])))
                    .collect(),
                off: vec![-dt * inv; n - 1],
            };
            // the step must stay a contraction towards the ground state
            if eig_count_below(&m, 0.0) > 0 {
                dt *= 0.5;
                halvings += 1;
                continue;
            }
            let mut next = m.to_general().solve(&phi)?;
            rescale(g, &mut next, mu);
            let en = p.functionals(&next).energy;
            if !en.is_finite() || en > energy + 1e-12 * energy.abs().max(1.0) {
                dt *= 0.5;
                halvings += 1;
                continue;
            }
            phi = next;
            energy = en;
            history.push(en);
            dt = (dt * 1.1).min(opts.dt_max);
            break;
        }
        (e, f) = multiplier(p, &phi, mu);
        res = sup(&f);
    }
    Err(Error::NoConvergence {
        iterations: opts.max_steps,
        residual: res,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub mu: f64,
    pub e: f64,
    pub energy: f64,
    pub asymmetry: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub rows: Vec<ScanRow>,
    /// Last `μ` with asymmetry `≤ 1e-6` and first with asymmetry `≥ 0.1`
    /// after it, when such a pair exists.
    pub transition: Option<(f64, f64)>,
    pub minimizers: Vec<Vec<f64>>,
}

/// `count` geometrically spaced charges in `[lo, hi]`.
pub fn geometric_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let r = (hi / lo).ln() / (count - 1) as f64;
    (0..count).map(|i| lo * (r * i as f64).exp()).collect()
}

/// Minimizers over a list of charges. Each charge is started twice, from
/// the previous minimizer and from a profile concentrated on the right half
/// line, and the lower energy wins.
pub fn mu_scan(p: &Problem, mus: &[f64], init: &[f64], opts: &FlowOpts) -> Result<Scan> {
    check_subcritical(p)?;
    let g = &p.grid;
    let mut warm = init.to_vec();
    let mut rows = Vec::new();
    let mut minimizers = Vec::new();
    for &mu in mus {
        let lopsided: Vec<f64> = warm
            .iter()
            .zip(g.nodes())
            .map(|(w, x)| w.abs() * (1.0 + x.tanh()) + 1e-3 * (-(x * x)).exp())
            .collect();
        let a = minimize_at_charge(p, mu, &warm, opts)?;
        let best = match minimize_at_charge(p, mu, &lopsided, opts) {
            Ok(b) if b.energy < a.energy - 1e-12 * a.energy.abs().max(1.0) => b,
            _ => a,
        };
        rows.push(ScanRow {
            mu,
            e: best.e,
            energy: best.energy,
            asymmetry: asymmetry(g, &best.phi)?,
            iterations: best.iterations,
        });
        warm = best.phi.clone();
        minimizers.push(best.phi);
    }
    let mut transition = None;
    for w in rows.windows(2) {
        if w[0].asymmetry <= 1e-6 && w[1].asymmetry >= 0.1 {
            transition = Some((w[0].mu, w[1].mu));
        }
    }
    Ok(Scan {
        rows,
        transition,
        minimizers,
    })
}

/// Agreement of a minimizer with the branch point of equal charge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub mu: f64,
    pub e_flow: f64,
    pub e_branch: f64,
    /// Grid H¹ distance, minimized over the mirror image.
    pub h1_distance: f64,
}

pub fn cross_check(
    p: &Problem,
    branch: &Branch,
    mu: f64,
    init: Option<&[f64]>,
    opts: &FlowOpts,
    c: &Controls,
) -> Result<(CrossCheck, Minimizer, BranchPoint)> {
    let pt = point_at_charge(p, branch, mu, c)?;
    let start = init.map(|s| s.to_vec()).unwrap_or_else(|| pt.phi.iter().map(|x| x.abs() + 1e-3).collect());
    let m = minimize_at_charge(p, mu, &start, opts)?;
    let g = &p.grid;
    let dist = |a: &[f64]| {
        let d: Vec<f64> = a.iter().zip(&pt.phi).map(|(x, y)| x - y).collect();
        g.h1_norm(&d)
    };
    let h1_distance = dist(&m.phi).min(dist(&mirror(&m.phi)));
    Ok((
        CrossCheck {
            mu,
            e_flow: m.e,
            e_branch: pt.e,
            h1_distance,
        },
        m,
        pt,
    ))
}
