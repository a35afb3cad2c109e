//! Detection, localization, classification of eigenvalue crossings along a
//! branch, and seeds for the branches that emanate from them.

use serde::{Deserialize, Serialize};

use crate::continuation::{evaluate_point, Branch, BranchPoint, Controls, Problem};
use crate::error::{Error, Result};
use crate::linalg::{Parity, SymTridiag};
use crate::model::linearization_with;
use crate::solver::{bordered_corrector, newton_fixed_e, seed_primary_branch};
use crate::spectral::{kth_eigenvalue, smallest_eigenpairs_on};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossingOperator {
    LPlus,
    LMinus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Fold,
    PitchforkSymmetryBreaking,
    TrivialBranchPitchfork,
    Unresolved,
}

/// Consecutive points between which something changed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lo: usize,
    pub hi: usize,
    /// Operator whose Morse count changes, if any.
    pub operator: Option<CrossingOperator>,
    /// Index of the crossing eigenvalue: the smaller of the two counts.
    pub eigen_index: usize,
    pub tau_sign_change: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seed {
    pub phi: Vec<f64>,
    pub e: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BifurcationEvent {
    pub bracket: Bracket,
    pub arclength_bracket: (f64, f64),
    pub point: BranchPoint,
    /// Crossing eigenvalue at the refined point.
    pub eigenvalue: f64,
    /// `|eigenvalue| <= event_tol` was reached (otherwise the bracket width
    /// hit `ds_min`).
    pub converged: bool,
    pub operator: Option<CrossingOperator>,
    pub parity: Option<Parity>,
    pub kind: EventKind,
    /// Grid-normalized eigenvector of the crossing eigenvalue.
    pub kernel: Vec<f64>,
    /// Second eigenvalue nearest zero, for the simplicity check.
    pub next_eigenvalue: f64,
    pub seeds: Vec<Seed>,
    pub children: Vec<usize>,
}

impl BifurcationEvent {
    pub fn e(&self) -> f64 {
        self.point.e
    }
}

/// One bracket per Morse-count change of `L₊` or `L₋` and per sign change
/// of the E-component of the tangent; coincident ones are merged.
pub fn detect_events(branch: &Branch) -> Vec<Bracket> {
    let mut out = Vec::new();
    for (i, w) in branch.points.windows(2).enumerate() {
        let (a, b) = (&w[0], &w[1]);
        let trivial = a.is_trivial() && b.is_trivial();
        let mut op = None;
        let mut idx = 0;
        if a.spectral.morse_plus != b.spectral.morse_plus {
            op = Some(CrossingOperator::LPlus);
            idx = a.spectral.morse_plus.min(b.spectral.morse_plus);
        } else if !trivial && a.spectral.morse_minus != b.spectral.morse_minus {
            op = Some(CrossingOperator::LMinus);
            idx = a.spectral.morse_minus.min(b.spectral.morse_minus);
        }
        let tau = a.tau_e != 0.0 && b.tau_e != 0.0 && a.tau_e.signum() != b.tau_e.signum();
        if op.is_some() || tau {
            out.push(Bracket {
                lo: i,
                hi: i + 1,
                operator: op,
                eigen_index: idx,
                tau_sign_change: tau,
            });
        }
    }
    out
}

fn operator_of(p: &Problem, pt: &BranchPoint, op: CrossingOperator) -> SymTridiag {
    let (lp, lm) = linearization_with(&p.grid, &p.model, &p.v, &pt.phi, pt.e);
    match op {
        CrossingOperator::LPlus => lp,
        CrossingOperator::LMinus => lm,
    }
}

fn crossing_value(p: &Problem, pt: &BranchPoint, op: CrossingOperator, j: usize) -> Result<f64> {
    kth_eigenvalue(&operator_of(p, pt, op), j)
}

/// Point on the branch between `a` and `b` at secant fraction `t`.
fn interior_point(p: &Problem, a: &BranchPoint, b: &BranchPoint, t: f64, c: &Controls) -> Result<BranchPoint> {
    let g = &p.grid;
    let d: Vec<f64> = b.phi.iter().zip(&a.phi).map(|(x, y)| x - y).collect();
    let de = b.e - a.e;
    let n = (g.dot(&d, &d) + de * de).sqrt();
    if !(n > 0.0) {
        return Err(Error::InvalidArgument("degenerate bracket".into()));
    }
    let tau: Vec<f64> = d.iter().map(|x| x / n).collect();
    let pred: Vec<f64> = a.phi.iter().zip(&d).map(|(x, y)| x + t * y).collect();
    let r = bordered_corrector(g, &p.model, &pred, a.e + t * de, &tau, de / n, &c.newton)?;
    let mut pt = evaluate_point(p, r.phi, r.e)?;
    pt.arclength = a.arclength + t * (b.arclength - a.arclength);
    pt.tau_e = a.tau_e;
    Ok(pt)
}

/// Refines a bracket by Illinois false position in arclength on the
/// crossing eigenvalue, then classifies it.
pub fn locate_event(p: &Problem, branch: &Branch, br: Bracket, c: &Controls, event_tol: Option<f64>) -> Result<BifurcationEvent> {
    let a0 = &branch.points[br.lo];
    let b0 = &branch.points[br.hi];
    let op = br.operator.unwrap_or(CrossingOperator::LPlus);
    let j = br.eigen_index;
    let tol = event_tol.unwrap_or_else(|| 1e-8 * operator_of(p, a0, op).inf_norm());
    let mut a = a0.clone();
    let mut b = b0.clone();
    let mut fa = crossing_value(p, &a, op, j)?;
    let mut fb = crossing_value(p, &b, op, j)?;
    let mut converged = false;
    let mut best = if fa.abs() <= fb.abs() { (a.clone(), fa) } else { (b.clone(), fb) };
    if br.operator.is_some() && fa * fb <= 0.0 {
        let mut side = 0i8;
        for _ in 0..80 {
            if best.1.abs() <= tol {
                converged = true;
                break;
            }
            if (b.arclength - a.arclength).abs() <= c.ds_min {
                break;
            }
            let t = (fa / (fa - fb)).clamp(0.02, 0.98);
            let m = interior_point(p, &a, &b, t, c)?;
            let fm = crossing_value(p, &m, op, j)?;
            if fm.abs() < best.1.abs() {
                best = (m.clone(), fm);
            }
            if fm * fb < 0.0 {
                a = b;
                fa = fb;
                b = m;
                fb = fm;
                if side == -1 {
                    fa *= 0.5;
                }
                side = -1;
            } else {
                b = m;
                fb = fm;
                if side == 1 {
                    fa *= 0.5;
                }
                side = 1;
            }
        }
        if best.1.abs() <= tol {
            converged = true;
        }
    }
    let (point, eigenvalue) = best;
    let lost = br.operator.is_some() && {
        let fa0 = crossing_value(p, a0, op, j)?;
        let fb0 = crossing_value(p, b0, op, j)?;
        fa0 * fb0 > 0.0
    };

    let t = operator_of(p, &point, op);
    let pairs = smallest_eigenpairs_on(&p.grid, &t, (j + 2).min(t.len()))?;
    let kernel = pairs[j].1.clone();
    let parity = Parity::detect(&kernel, 1e-6);
    let next_eigenvalue = [j.checked_sub(1), Some(j + 1)]
        .into_iter()
        .flatten()
        .filter_map(|k| {
            if k < pairs.len() {
                Some(pairs[k].0)
            } else {
                None
            }
        })
        .fold(f64::INFINITY, |m: f64, v: f64| if v.abs() < m.abs() { v } else { m });

    let trivial = a0.is_trivial() && b0.is_trivial();
    let phi_even = point.parity() == Some(Parity::Even) && !point.is_trivial();
    let kind = if lost {
        EventKind::Unresolved
    } else if trivial && op == CrossingOperator::LPlus {
        EventKind::TrivialBranchPitchfork
    } else if br.operator == Some(CrossingOperator::LPlus) && parity == Some(Parity::Odd) && phi_even && !br.tau_sign_change {
        EventKind::PitchforkSymmetryBreaking
    } else if br.tau_sign_change && br.operator != Some(CrossingOperator::LMinus) && parity != Some(Parity::Odd) {
        EventKind::Fold
    } else {
        EventKind::Unresolved
    };

    Ok(BifurcationEvent {
        bracket: br,
        arclength_bracket: (a0.arclength, b0.arclength),
        point,
        eigenvalue,
        converged,
        operator: br.operator,
        parity,
        kind,
        kernel,
        next_eigenvalue,
        seeds: Vec::new(),
        children: Vec::new(),
    })
}

/// Options for [`switch_branch`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchOpts {
    /// Perturbation scale relative to `‖φ*‖` (pitchforks).
    pub relative_amplitude: f64,
    /// Seed amplitude on the trivial branch.
    pub trivial_amplitude: f64,
    /// The kernel-direction offset used for the corrector, in units of the
    /// perturbation scale.
    pub offset_factor: f64,
}

impl Default for SwitchOpts {
    fn default() -> Self {
        Self {
            relative_amplitude: 1e-3,
            trivial_amplitude: 1e-2,
            offset_factor: 20.0,
        }
    }
}

/// Converged seeds on the branches emanating from a pitchfork.
///
/// Trivial-branch events use the normal-form seed. Symmetry-breaking
/// events offset `φ*` by `±a·k` along the kernel and correct with the
/// kernel amplitude held fixed and `E` free; a seed is kept when its
/// distance to the parity-constrained parent at the same `E` exceeds ten
/// times the perturbation scale.
pub fn switch_branch(p: &Problem, ev: &BifurcationEvent, c: &Controls, opts: &SwitchOpts) -> Result<Vec<Seed>> {
    let g = &p.grid;
    match ev.kind {
        EventKind::TrivialBranchPitchfork => {
            let s = opts.trivial_amplitude;
            let seed = seed_primary_branch(g, &p.model, s)?;
            let r = newton_fixed_e(g, &p.model, &seed.phi, seed.e_start, &c.newton)
                .map_err(|e| Error::SwitchFailed(format!("normal-form seed did not converge: {e}")))?;
            if g.norm(&r.phi) <= 0.5 * s {
                return Err(Error::SwitchFailed("seed collapsed to the trivial branch".into()));
            }
            Ok(vec![Seed { phi: r.phi, e: r.e }])
        }
        EventKind::PitchforkSymmetryBreaking => {
            let phi_star = &ev.point.phi;
            let s = opts.relative_amplitude * g.norm(phi_star);
            let k = &ev.kernel;
            let mut seeds: Vec<Seed> = Vec::new();
            for sign in [1.0, -1.0] {
                let a = sign * opts.offset_factor * s;
                let pred: Vec<f64> = phi_star.iter().zip(k).map(|(x, y)| x + a * y).collect();
                let Ok(r) = bordered_corrector(g, &p.model, &pred, ev.point.e, k, 0.0, &c.newton) else {
                    continue;
                };
                let parent = newton_fixed_e(g, &p.model, phi_star, r.e, &c.newton);
                let dist = match parent {
                    Ok(par) => g.norm(&r.phi.iter().zip(&par.phi).map(|(x, y)| x - y).collect::<Vec<_>>()),
                    Err(_) => f64::INFINITY,
                };
                if dist <= 10.0 * s {
                    continue;
                }
                let dup = seeds.iter().any(|q| {
                    let d: Vec<f64> = q.phi.iter().zip(&r.phi).map(|(x, y)| x - y).collect();
                    (q.e - r.e).abs() < 1e-9 && g.norm(&d) <= 1e-6 * g.norm(&r.phi)
                });
                if !dup {
                    seeds.push(Seed { phi: r.phi, e: r.e });
                }
            }
            if seeds.is_empty() {
                return Err(Error::SwitchFailed(format!(
                    "all candidates collapsed to the parent at E = {:.6}",
                    ev.point.e
                )));
            }
            Ok(seeds)
        }
        _ => Err(Error::SwitchFailed(format!("event kind {:?} has no switching rule", ev.kind))),
    }
}
