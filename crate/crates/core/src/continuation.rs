//! Pseudo-arclength continuation of solution branches in `(φ, E)`.

use serde::{Deserialize, Serialize};

use crate::bifurcation::BifurcationEvent;
use crate::error::{check_len, Error, Result};
use crate::grid::{mirror, Grid};
use crate::linalg::Parity;
use crate::model::{
    energy_with, linearization_with, pohozaev_with, potential_derivative_eval, potential_eval, residual_with,
    Functionals, ModelSpec,
};
use crate::solver::{bordered_corrector, fold_for, newton_fixed_e, sup, NewtonOpts};
use crate::spectral::{summarize, SpectralSummary};
use crate::stability::{classify_gss, default_slope_tol, StabilityTag};

/// Grid, model and cached potential samples.
#[derive(Debug, Clone)]
pub struct Problem {
    pub grid: Grid,
    pub model: ModelSpec,
    pub(crate) v: Vec<f64>,
    pub(crate) dv: Vec<f64>,
}

impl Problem {
    pub fn new(grid: Grid, model: ModelSpec) -> Result<Self> {
        model.validate()?;
        let v = potential_eval(&model.potential, &grid);
        let dv = potential_derivative_eval(&model.potential, &grid);
        Ok(Self { grid, model, v, dv })
    }

    pub fn potential(&self) -> &[f64] {
        &self.v
    }

    pub fn residual(&self, phi: &[f64], e: f64) -> Vec<f64> {
        residual_with(&self.grid, &self.model, &self.v, phi, e)
    }

    pub fn functionals(&self, phi: &[f64]) -> Functionals {
        energy_with(&self.grid, &self.model, &self.v, phi)
    }

    pub fn pohozaev(&self, phi: &[f64], e: f64) -> f64 {
        pohozaev_with(&self.grid, &self.model, &self.v, &self.dv, phi, e)
    }
}

/// A converged solution with its monitors.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchPoint {
    pub phi: Vec<f64>,
    pub e: f64,
    pub functionals: Functionals,
    pub spectral: SpectralSummary,
    pub slope_dqde: f64,
    pub pohozaev: f64,
    pub asymmetry: f64,
    pub stability: StabilityTag,
    /// Sup-norm of `F(φ, E)`.
    pub residual: f64,
    pub h1_norm: f64,
    pub arclength: f64,
    /// E-component of the secant that produced this point.
    pub tau_e: f64,
    /// The `L₊` kernel is the translation mode of a translation-invariant
    /// problem rather than a bifurcation direction.
    pub symmetry_kernel: bool,
}

impl BranchPoint {
    pub fn charge(&self) -> f64 {
        self.functionals.charge
    }

    pub fn is_trivial(&self) -> bool {
        self.phi.iter().all(|&x| x == 0.0)
    }

    pub fn has_degenerate_kernel(&self) -> bool {
        self.spectral.kernel_vector_plus.is_some() && !self.symmetry_kernel
    }

    pub fn parity(&self) -> Option<Parity> {
        Parity::detect(&self.phi, 1e-10)
    }
}

/// `‖φ - mirror(φ)‖/‖φ‖`, zero for the trivial field.
pub(crate) fn asymmetry_or_zero(g: &Grid, phi: &[f64]) -> f64 {
    let n = g.norm(phi);
    if n == 0.0 {
        return 0.0;
    }
    let d: Vec<f64> = phi.iter().zip(mirror(phi)).map(|(a, b)| a - b).collect();
    g.norm(&d) / n
}

/// `dQ/dE = (φ, w)` with `L₊ w = -φ`; NaN when `L₊` is singular.
pub fn adjoint_slope(p: &Problem, phi: &[f64], e: f64) -> f64 {
    match e_derivative(p, phi, e) {
        Some(w) => p.grid.dot(phi, &w),
        None => f64::NAN,
    }
}

/// Solution `w` of `L₊ w = -φ`, the E-derivative of the branch at a regular
/// point; solved in folded coordinates for symmetric profiles.
pub(crate) fn e_derivative(p: &Problem, phi: &[f64], e: f64) -> Option<Vec<f64>> {
    if phi.iter().all(|&x| x == 0.0) {
        return Some(vec![0.0; phi.len()]);
    }
    let (lp, _) = linearization_with(&p.grid, &p.model, &p.v, phi, e);
    let rhs: Vec<f64> = phi.iter().map(|x| -x).collect();
    let w = match fold_for(phi, &p.v) {
        Some(f) => {
            let lu = f.operator(&lp).factor().ok()?;
            if lu.relative_min_pivot() < 1e-14 {
                return None;
            }
            f.expand(&lu.solve(&f.restrict(&rhs)).ok()?)
        }
        None => {
            let lu = lp.to_general().factor().ok()?;
            if lu.relative_min_pivot() < 1e-14 {
                return None;
            }
            lu.solve(&rhs).ok()?
        }
    };
    w.iter().all(|x| x.is_finite()).then_some(w)
}

fn is_translation_kernel(p: &Problem, phi: &[f64], k: &[f64]) -> bool {
    if !p.model.potential.is_translation_invariant() || phi.iter().all(|&x| x == 0.0) {
        return false;
    }
    let n = phi.len();
    let h = p.grid.spacing();
    let d: Vec<f64> = (0..n)
        .map(|i| {
            let l = if i > 0 { phi[i - 1] } else { 0.0 };
            let r = if i + 1 < n { phi[i + 1] } else { 0.0 };
            (r - l) / (2.0 * h)
        })
        .collect();
    let dn = p.grid.norm(&d);
    let kn = p.grid.norm(k);
    dn > 0.0 && kn > 0.0 && (p.grid.dot(&d, k) / (dn * kn)).abs() >= 0.99
}

/// Evaluates all monitors at a converged solution.
pub fn evaluate_point(p: &Problem, phi: Vec<f64>, e: f64) -> Result<BranchPoint> {
    check_len("evaluate_point", phi.len(), p.grid.len())?;
    let g = &p.grid;
    let functionals = p.functionals(&phi);
    let (lp, lm) = linearization_with(g, &p.model, &p.v, &phi, e);
    let spectral = summarize(g, &lp, &lm)?;
    let slope_dqde = adjoint_slope(p, &phi, e);
    let symmetry_kernel = spectral
        .kernel_vector_plus
        .as_deref()
        .is_some_and(|k| is_translation_kernel(p, &phi, k));
    let mut point = BranchPoint {
        residual: sup(&p.residual(&phi, e)),
        h1_norm: g.h1_norm(&phi),
        pohozaev: p.pohozaev(&phi, e),
        asymmetry: asymmetry_or_zero(g, &phi),
        phi,
        e,
        functionals,
        spectral,
        slope_dqde,
        stability: StabilityTag::default(),
        arclength: 0.0,
        tau_e: 0.0,
        symmetry_kernel,
    };
    point.stability = classify_gss(&point, default_slope_tol(point.functionals.charge));
    Ok(point)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Guard {
    None,
    /// Stop once the charge falls below this value or the profile turns
    /// against the start (children of the trivial branch returning to it).
    MinCharge(f64),
    /// Stop once the asymmetry falls below this value or the odd part of
    /// the profile reverses against the start (asymmetric children merging
    /// back into, or stepping across, the symmetric parent).
    MinAsymmetry(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Controls {
    pub ds_init: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub e_min: f64,
    pub e_max: f64,
    pub norm_max: f64,
    pub max_steps: usize,
    pub loop_tol: f64,
    /// E values at which a point is always inserted.
    pub landmarks: Vec<f64>,
    pub newton: NewtonOpts,
    pub guard: Guard,
}

impl Default for Controls {
    fn default() -> Self {
        Self {
            ds_init: 0.02,
            ds_min: 1e-4,
            ds_max: 1.0,
            e_min: 1e-3,
            e_max: 200.0,
            norm_max: 1e6,
            max_steps: 4000,
            loop_tol: 1e-6,
            landmarks: Vec::new(),
            newton: NewtonOpts::default(),
            guard: Guard::None,
        }
    }
}

impl Controls {
    pub fn validate(&self) -> Result<()> {
        let bad = |s: &str| Err(Error::InvalidArgument(s.to_string()));
        if !(self.ds_min > 0.0 && self.ds_min <= self.ds_init && self.ds_init <= self.ds_max) {
            return bad("need 0 < ds_min <= ds_init <= ds_max");
        }
        if !(self.e_min > 0.0 && self.e_max > self.e_min) {
            return bad("need E_max > E_min > 0");
        }
        if !(self.norm_max > 0.0) || !(self.loop_tol > 0.0) {
            return bad("norm_max and loop_tol must be positive");
        }
        self.newton.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    EMaxReached,
    EMinReached,
    NormMaxReached,
    LoopClosed,
    StepUnderflow,
    ParentReached,
    StepBudget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SeedKind {
    Explicit,
    TrivialBranch,
    Primary { e0: f64, amplitude: f64 },
    Switched { parent: usize, event: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub id: usize,
    pub seed: SeedKind,
    pub direction: f64,
    pub points: Vec<BranchPoint>,
    pub events: Vec<BifurcationEvent>,
    pub termination: Termination,
}

impl Branch {
    pub fn e_range(&self) -> (f64, f64) {
        self.points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.e), b.max(p.e)))
    }

    pub fn is_trivial(&self) -> bool {
        self.points.iter().all(|p| p.is_trivial())
    }
}

/// Extended inner product: grid product on `φ`, weight 1 on `E`.
pub fn ext_dot(g: &Grid, a: (&[f64], f64), b: (&[f64], f64)) -> f64 {
    g.dot(a.0, b.0) + a.1 * b.1
}

pub fn ext_norm(g: &Grid, phi: &[f64], e: f64) -> f64 {
    ext_dot(g, (phi, e), (phi, e)).sqrt()
}

/// Unit secant from `prev` to `cur`.
pub fn tangent(g: &Grid, prev: &BranchPoint, cur: &BranchPoint) -> Result<(Vec<f64>, f64)> {
    secant(g, &prev.phi, prev.e, &cur.phi, cur.e)
}

fn secant(g: &Grid, phi0: &[f64], e0: f64, phi1: &[f64], e1: f64) -> Result<(Vec<f64>, f64)> {
    let d: Vec<f64> = phi1.iter().zip(phi0).map(|(a, b)| a - b).collect();
    let de = e1 - e0;
    let n = ext_norm(g, &d, de);
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::InvalidArgument("tangent of coincident points".into()));
    }
    Ok((d.iter().map(|x| x / n).collect(), de / n))
}

/// Unit tangent at a regular point from `L₊ w = -φ`, oriented by the sign
/// of `direction` in E.
pub fn initial_tangent(p: &Problem, phi: &[f64], e: f64, direction: f64) -> (Vec<f64>, f64) {
    let w = e_derivative(p, phi, e).unwrap_or_else(|| vec![0.0; phi.len()]);
    let n = ext_norm(&p.grid, &w, 1.0);
    let s = direction.signum() / n;
    (w.iter().map(|x| x * s).collect(), s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Converged { iterations: usize },
    Failed,
}

/// Step-size update: grow by 1.3 after fast convergence, halve after slow
/// convergence or failure; failure below `ds_min` is an underflow.
pub fn adapt_step(ds: f64, outcome: StepOutcome, c: &Controls) -> Result<f64> {
    let next = match outcome {
        StepOutcome::Converged { iterations } if iterations <= 3 => ds * 1.3,
        StepOutcome::Converged { iterations } if iterations > 8 => (ds / 2.0).max(c.ds_min),
        StepOutcome::Converged { .. } => ds,
        StepOutcome::Failed => {
            let half = ds / 2.0;
            if half < c.ds_min {
                return Err(Error::Stalled {
                    arclength: f64::NAN,
                    reason: format!("step underflow below ds_min = {:e}", c.ds_min),
                });
            }
            half
        }
    };
    Ok(next.min(c.ds_max))
}

fn interpolate(a: &BranchPoint, b_phi: &[f64], b_e: f64, e: f64) -> Vec<f64> {
    let t = if b_e != a.e { (e - a.e) / (b_e - a.e) } else { 0.0 };
    a.phi.iter().zip(b_phi).map(|(x, y)| x + t * (y - x)).collect()
}

/// Point at an exact E between `a` and a newly corrected `(b_phi, b_e)`.
fn point_between(
    p: &Problem,
    a: &BranchPoint,
    b_phi: &[f64],
    b_e: f64,
    e: f64,
    c: &Controls,
    arclength_span: (f64, f64),
) -> Result<BranchPoint> {
    let guess = interpolate(a, b_phi, b_e, e);
    let r = newton_fixed_e(&p.grid, &p.model, &guess, e, &c.newton)?;
    let mut pt = evaluate_point(p, r.phi, e)?;
    let t = if b_e != a.e { (e - a.e) / (b_e - a.e) } else { 0.0 };
    pt.arclength = arclength_span.0 + t * (arclength_span.1 - arclength_span.0);
    Ok(pt)
}

fn check_loop(g: &Grid, points: &[BranchPoint], new: &BranchPoint, tau: (&[f64], f64), tol: f64) -> bool {
    if points.len() < 3 {
        return false;
    }
    let cur = &points[points.len() - 1];
    let (elo, ehi) = (cur.e.min(new.e) - tol, cur.e.max(new.e) + tol);
    let d: Vec<f64> = new.phi.iter().zip(&cur.phi).map(|(a, b)| a - b).collect();
    let de = new.e - cur.e;
    let dd = ext_dot(g, (&d, de), (&d, de));
    for (k, q) in points[..points.len() - 2].iter().enumerate() {
        if q.e < elo || q.e > ehi {
            continue;
        }
        let r: Vec<f64> = q.phi.iter().zip(&cur.phi).map(|(a, b)| a - b).collect();
        let re = q.e - cur.e;
        let t = if dd > 0.0 { (ext_dot(g, (&r, re), (&d, de)) / dd).clamp(0.0, 1.0) } else { 0.0 };
        let off: Vec<f64> = r.iter().zip(&d).map(|(a, b)| a - t * b).collect();
        if ext_norm(g, &off, re - t * de) >= tol {
            continue;
        }
        // matching orientation with the branch direction at the earlier point
        let next = &points[k + 1];
        let s: Vec<f64> = next.phi.iter().zip(&q.phi).map(|(a, b)| a - b).collect();
        if ext_dot(g, (&s, next.e - q.e), tau) > 0.0 {
            return true;
        }
    }
    false
}

/// Traces a branch from a converged start in the given E direction.
pub fn trace_branch(
    p: &Problem,
    start_phi: &[f64],
    start_e: f64,
    direction: f64,
    c: &Controls,
    seed: SeedKind,
) -> Result<Branch> {
    c.validate()?;
    check_len("trace_branch", start_phi.len(), p.grid.len())?;
    let g = &p.grid;
    let start = if sup(&p.residual(start_phi, start_e)) <= c.newton.tol_residual {
        start_phi.to_vec()
    } else {
        newton_fixed_e(g, &p.model, start_phi, start_e, &c.newton)?.phi
    };
    let first = evaluate_point(p, start, start_e)?;
    let (mut tau_phi, mut tau_e) = initial_tangent(p, &first.phi, first.e, direction);
    let mut points = vec![first];
    let mut ds = c.ds_init;
    let mut steps = 0usize;
    let odd_part = |f: &[f64]| -> Vec<f64> { f.iter().zip(mirror(f)).map(|(a, b)| 0.5 * (a - b)).collect() };
    let odd_ref = odd_part(&points[0].phi);
    let phi_ref = points[0].phi.clone();
    let mut landmarks: Vec<f64> = c.landmarks.clone();
    landmarks.retain(|l| *l > c.e_min && *l < c.e_max);

    let termination = loop {
        if steps >= c.max_steps {
            break Termination::StepBudget;
        }
        steps += 1;
        let cur = points.last().expect("nonempty");
        let pred: Vec<f64> = cur.phi.iter().zip(&tau_phi).map(|(a, t)| a + ds * t).collect();
        let e_pred = cur.e + ds * tau_e;
        let attempt = if e_pred > 0.0 {
            bordered_corrector(g, &p.model, &pred, e_pred, &tau_phi, tau_e, &c.newton).ok()
        } else {
            None
        };
        let accepted = attempt.and_then(|r| {
            let d: Vec<f64> = r.phi.iter().zip(&cur.phi).map(|(a, b)| a - b).collect();
            let de = r.e - cur.e;
            let len = ext_norm(g, &d, de);
            let forward = ext_dot(g, (&d, de), (&tau_phi, tau_e));
            (len > 0.0 && forward > 0.0 && len <= 2.0 * c.ds_max).then_some((r, len))
        });
        let Some((rep, len)) = accepted else {
            match adapt_step(ds, StepOutcome::Failed, c) {
                Ok(next) => {
                    ds = next;
                    continue;
                }
                Err(_) if points.len() == 1 => {
                    return Err(Error::Stalled {
                        arclength: 0.0,
                        reason: "no step accepted before underflow".into(),
                    })
                }
                Err(_) => break Termination::StepUnderflow,
            }
        };
        let (new_tau_phi, new_tau_e) = secant(g, &cur.phi, cur.e, &rep.phi, rep.e)?;
        let s0 = cur.arclength;
        let s1 = s0 + len;

        // landmarks strictly inside the step, in order of travel
        let (lo, hi) = (cur.e.min(rep.e), cur.e.max(rep.e));
        let mut inside: Vec<f64> = landmarks.iter().copied().filter(|l| *l > lo && *l < hi).collect();
        if rep.e < cur.e {
            inside.reverse();
        } else {
            inside.sort_by(|a, b| a.partial_cmp(b).unwrap());
        }
        let cur = cur.clone();
        for l in inside {
            if let Ok(mut pt) = point_between(p, &cur, &rep.phi, rep.e, l, c, (s0, s1)) {
                pt.tau_e = new_tau_e;
                points.push(pt);
            }
        }

        let bound = if rep.e >= c.e_max {
            Some((c.e_max, Termination::EMaxReached))
        } else if rep.e <= c.e_min {
            Some((c.e_min, Termination::EMinReached))
        } else {
            None
        };
        if let Some((eb, reason)) = bound {
            let mut pt = point_between(p, &cur, &rep.phi, rep.e, eb, c, (s0, s1))?;
            pt.tau_e = new_tau_e;
            points.push(pt);
            break reason;
        }

        let mut pt = evaluate_point(p, rep.phi, rep.e)?;
        pt.arclength = s1;
        pt.tau_e = new_tau_e;
        let looped = check_loop(g, &points, &pt, (&new_tau_phi, new_tau_e), c.loop_tol);
        let h1 = pt.h1_norm;
        let guard_hit = match c.guard {
            Guard::None => false,
            Guard::MinCharge(q) => pt.charge() < q,
            Guard::MinAsymmetry(a) => pt.asymmetry < a,
        };
        let crossed = match c.guard {
            Guard::None => false,
            Guard::MinCharge(_) => g.dot(&pt.phi, &phi_ref) <= 0.0,
            Guard::MinAsymmetry(_) => g.dot(&odd_part(&pt.phi), &odd_ref) <= 0.0,
        };
        if crossed {
            // the point already lies on the sign- or mirror-image branch
            break Termination::ParentReached;
        }
        points.push(pt);
        tau_phi = new_tau_phi;
        tau_e = new_tau_e;
        if h1 > c.norm_max {
            break Termination::NormMaxReached;
        }
        if guard_hit {
            break Termination::ParentReached;
        }
        if looped {
            break Termination::LoopClosed;
        }
        ds = adapt_step(
            ds,
            StepOutcome::Converged {
                iterations: rep.iterations,
            },
            c,
        )?;
    };

    Ok(Branch {
        id: 0,
        seed,
        direction: direction.signum(),
        points,
        events: Vec::new(),
        termination,
    })
}

/// Joins a backward trace (reversed) and a forward trace from the same
/// start into one branch ordered by arclength.
pub fn join_traces(backward: Branch, forward: Branch) -> Branch {
    let mut points: Vec<BranchPoint> = backward.points.into_iter().rev().collect();
    let offset = points.first().map(|p| p.arclength).unwrap_or(0.0);
    // each reversed point is reached by the negated secant stored on its
    // predecessor in the backward trace
    let orig: Vec<f64> = points.iter().map(|p| p.tau_e).collect();
    for (j, p) in points.iter_mut().enumerate() {
        p.arclength = offset - p.arclength;
        if j > 0 {
            p.tau_e = -orig[j - 1];
        }
    }
    let first_forward = forward.points.get(1).map(|p| p.tau_e).unwrap_or(0.0);
    let n = points.len();
    if n > 0 {
        points[0].tau_e = if n > 1 { points[1].tau_e } else { first_forward };
    }
    for mut p in forward.points.into_iter().skip(usize::from(n > 0)) {
        p.arclength += offset;
        points.push(p);
    }
    Branch {
        id: forward.id,
        seed: forward.seed,
        direction: forward.direction,
        points,
        events: Vec::new(),
        termination: forward.termination,
    }
}

/// Solution on the branch at an exact `E`, from the first bracketing pair.
pub fn point_at_e(p: &Problem, branch: &Branch, e: f64, c: &Controls) -> Result<BranchPoint> {
    if let Some(q) = branch.points.iter().find(|q| q.e == e) {
        return Ok(q.clone());
    }
    for w in branch.points.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if (a.e - e) * (b.e - e) < 0.0 {
            return point_between(p, a, &b.phi, b.e, e, c, (a.arclength, b.arclength));
        }
    }
    Err(Error::InsufficientRange(format!("E = {e} not covered by branch {}", branch.id)))
}

/// Solution on the branch with charge `q`, by secant iteration in E.
pub fn point_at_charge(p: &Problem, branch: &Branch, q: f64, c: &Controls) -> Result<BranchPoint> {
    let w = branch
        .points
        .windows(2)
        .find(|w| (w[0].charge() - q) * (w[1].charge() - q) <= 0.0 && w[0].charge() != w[1].charge())
        .ok_or_else(|| Error::InsufficientRange(format!("charge {q} not covered by branch {}", branch.id)))?;
    let (mut a, mut b) = (w[0].clone(), w[1].clone());
    for _ in 0..60 {
        let (qa, qb) = (a.charge(), b.charge());
        if (qb - q).abs() <= 1e-13 * q.max(1.0) {
            return Ok(b);
        }
        if (qa - q).abs() <= 1e-13 * q.max(1.0) {
            return Ok(a);
        }
        let t = (q - qa) / (qb - qa);
        let e = a.e + t * (b.e - a.e);
        let mid = point_between(p, &a, &b.phi, b.e, e, c, (a.arclength, b.arclength))?;
        // keep a bracket (Illinois-free regula falsi is enough: Q is smooth)
        if (mid.charge() - q) * (qa - q) <= 0.0 {
            b = mid;
        } else {
            a = mid;
        }
    }
    Err(Error::NoConvergence {
        iterations: 60,
        residual: (b.charge() - q).abs(),
    })
}

/// `ΔEnergy + Ē·ΔQ` between consecutive points, with `Ē` the midpoint E.
pub fn branch_identity_residuals(branch: &Branch) -> Vec<f64> {
    branch
        .points
        .windows(2)
        .map(|w| {
            let (a, b) = (&w[0], &w[1]);
            let de = b.functionals.energy - a.functionals.energy;
            let dq = b.charge() - a.charge();
            de + 0.5 * (a.e + b.e) * dq
        })
        .collect()
}
