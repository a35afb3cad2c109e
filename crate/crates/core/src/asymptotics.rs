//! Large-E structure of a branch: scaling ratios, the rescaled profile
//! `ψ_E(y) = E^{-1/p} φ_E(E^{-1/2} y + x₀)`, its residual in the
//! potential-free limit equation `-ψ'' + ψ + γ|ψ|^p ψ = 0`, and the Morse
//! index predicted from where the profile concentrates.

use serde::{Deserialize, Serialize};

use crate::continuation::Branch;
use crate::error::{Error, Result};
use crate::grid::{gradient_sq, neg_laplacian, Grid};
use crate::model::{ModelSpec, PotentialSpec};

/// Space dimension of the implementation.
pub const DIM: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub e: f64,
    /// `‖φ‖_{p+2}^{p+2} / E^{2/p+1-n/2}`.
    pub s_nl: f64,
    /// `‖φ‖₂² / E^{2/p-n/2}` (the squared norm, i.e. twice the charge).
    pub s_q: f64,
    /// `‖φ'‖₂² / E^{2/p+1-n/2}`.
    pub s_k: f64,
    pub r_q: f64,
    pub r_k: f64,
}

/// Limits of `r_Q` and `r_K` as `E → ∞`; the common factor `-γ b` of the
/// three scaled functionals cancels in the ratios.
pub fn predicted_ratios(p: f64) -> (f64, f64) {
    let n = DIM;
    let d = 2.0 * p + 4.0;
    (((2.0 - n) * p + 4.0) / d, n * p / d)
}

fn row_from(m: &ModelSpec, e: f64, l2: f64, nl: f64, k: f64) -> ScalingRow {
    let p = m.power;
    let n = DIM;
    let big = e.powf(2.0 / p + 1.0 - n / 2.0);
    let small = e.powf(2.0 / p - n / 2.0);
    let s_nl = nl / big;
    let s_q = l2 / small;
    let s_k = k / big;
    ScalingRow {
        e,
        s_nl,
        s_q,
        s_k,
        r_q: s_q / s_nl,
        r_k: s_k / s_nl,
    }
}

pub fn scaling_row(g: &Grid, m: &ModelSpec, phi: &[f64], e: f64) -> ScalingRow {
    let h = g.spacing();
    let nl: f64 = h * phi.iter().map(|x| m.pow_abs(*x) * x * x).sum::<f64>();
    row_from(m, e, g.dot(phi, phi), nl, gradient_sq(phi, h))
}

/// The same row from stored functionals: `‖φ‖² = 2Q`, `‖φ'‖² = 2K` and
/// `‖φ‖_{p+2}^{p+2} = (p+2) N / γ` for the nonlinear energy `N`.
pub fn scaling_row_from_functionals(m: &ModelSpec, e: f64, charge: f64, kinetic: f64, nonlinear: f64) -> Result<ScalingRow> {
    if m.gamma == 0.0 {
        return Err(Error::Unsupported("scaling ratios need gamma != 0".into()));
    }
    Ok(row_from(m, e, 2.0 * charge, (m.power + 2.0) * nonlinear / m.gamma, 2.0 * kinetic))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    /// Two-point Richardson extrapolation in `1/E` from the two largest E.
    pub r_q_limit: f64,
    pub r_k_limit: f64,
}

/// `r_∞` from `r(E) = r_∞ + c/E` through two samples.
pub fn richardson(e1: f64, r1: f64, e2: f64, r2: f64) -> f64 {
    (e2 * r2 - e1 * r1) / (e2 - e1)
}

/// Rows at every nontrivial point plus the extrapolated limits. The branch
/// must span a decade in E; `at` restricts the extrapolation to rows at
/// those E values (the two largest present are used).
pub fn scaling_diagnostics(g: &Grid, m: &ModelSpec, branch: &Branch, at: Option<&[f64]>) -> Result<ScalingReport> {
    let mut rows: Vec<ScalingRow> = Vec::new();
    for p in branch.points.iter().filter(|p| !p.is_trivial()) {
        if !rows.iter().any(|r| r.e == p.e) {
            rows.push(scaling_row(g, m, &p.phi, p.e));
        }
    }
    rows.sort_by(|a, b| a.e.partial_cmp(&b.e).unwrap());
    let (lo, hi) = match (rows.first(), rows.last()) {
        (Some(a), Some(b)) => (a.e, b.e),
        _ => return Err(Error::InsufficientRange("no nontrivial points".into())),
    };
    if rows.len() < 2 || hi < 10.0 * lo {
        return Err(Error::InsufficientRange(format!(
            "E spans [{lo:.4}, {hi:.4}], less than one decade"
        )));
    }
    let used: Vec<ScalingRow> = rows.iter().copied().filter(|r| at.is_none_or(|es| es.contains(&r.e))).collect();
    if used.len() < 2 {
        return Err(Error::InsufficientRange("fewer than two rows at the requested E values".into()));
    }
    let (a, b) = (used[used.len() - 2], used[used.len() - 1]);
    Ok(ScalingReport {
        r_q_limit: richardson(a.e, a.r_q, b.e, b.r_q),
        r_k_limit: richardson(a.e, a.r_k, b.e, b.r_k),
        rows,
    })
}

/// Rescaled profile on a reference grid plus the native stretched samples.
#[derive(Debug, Clone, PartialEq)]
pub struct RescaledProfile {
    pub reference: Grid,
    pub psi: Vec<f64>,
    /// Fraction of reference nodes that map inside the computational domain.
    pub coverage: f64,
    /// Stretched node spacing `h√E`.
    pub native_spacing: f64,
    /// Stretched node positions `√E (x_i - x₀)`.
    pub native_nodes: Vec<f64>,
    pub native_psi: Vec<f64>,
}

impl RescaledProfile {
    pub fn has_full_coverage(&self) -> bool {
        self.coverage >= 1.0
    }
}

pub fn default_reference_grid() -> Grid {
    Grid::new(20.0, 2000).expect("valid reference grid")
}

/// Linear interpolation of nodal data (zero Dirichlet values at `±L`).
fn interpolate(g: &Grid, f: &[f64], x: f64) -> Option<f64> {
    let l = g.half_width();
    if x < -l || x > l {
        return None;
    }
    let h = g.spacing();
    let s = (x + l) / h; // position in units of h, node i+1 at s = i+1
    let k = s.floor() as isize;
    let t = s - k as f64;
    let at = |j: isize| -> f64 {
        if j <= 0 || j as usize > f.len() {
            0.0
        } else {
            f[j as usize - 1]
        }
    };
    Some((1.0 - t) * at(k) + t * at(k + 1))
}

pub fn rescale_profile(g: &Grid, m: &ModelSpec, phi: &[f64], e: f64, x0: f64, reference: Option<Grid>) -> Result<RescaledProfile> {
    if !(e > 0.0) {
        return Err(Error::OutsideFredholmDomain(e));
    }
    if x0.abs() >= g.half_width() {
        return Err(Error::InvalidArgument(format!("centre {x0} outside the domain")));
    }
    let reference = reference.unwrap_or_else(default_reference_grid);
    let amp = e.powf(-1.0 / m.power);
    let se = e.sqrt();
    let mut inside = 0usize;
    let psi: Vec<f64> = reference
        .nodes()
        .iter()
        .map(|&y| match interpolate(g, phi, y / se + x0) {
            Some(v) => {
                inside += 1;
                amp * v
            }
            None => 0.0,
        })
        .collect();
    Ok(RescaledProfile {
        coverage: inside as f64 / reference.len() as f64,
        psi,
        reference,
        native_spacing: g.spacing() * se,
        native_nodes: g.nodes().iter().map(|x| se * (x - x0)).collect(),
        native_psi: phi.iter().map(|v| amp * v).collect(),
    })
}

/// Sup-norm of `-Δ_h ψ + ψ + γ|ψ|^p ψ` for nodal values with spacing `h`.
pub fn limit_profile_residual(spacing: f64, psi: &[f64], m: &ModelSpec) -> f64 {
    let lap = neg_laplacian(psi, spacing);
    lap.iter()
        .zip(psi)
        .map(|(l, v)| (l + v + m.gamma * m.pow_abs(*v) * v).abs())
        .fold(0.0, f64::max)
}

/// Ground state of the limit equation,
/// `((p+2)/(2|γ|))^{1/p} sech^{2/p}(p y / 2)`.
pub fn limit_ground_state(m: &ModelSpec, y: f64) -> f64 {
    let p = m.power;
    ((p + 2.0) / (2.0 * m.gamma.abs())).powf(1.0 / p) * (1.0 / (0.5 * p * y).cosh()).powf(2.0 / p)
}

/// Discrete H¹ distance between the stretched samples and the limit ground
/// state centred at `x₀`, with gradients taken on the stretched grid.
pub fn limit_h1_distance(r: &RescaledProfile, m: &ModelSpec) -> f64 {
    let d: Vec<f64> = r
        .native_psi
        .iter()
        .zip(&r.native_nodes)
        .map(|(v, y)| v - limit_ground_state(m, *y))
        .collect();
    let h = r.native_spacing;
    (h * d.iter().map(|x| x * x).sum::<f64>() + gradient_sq(&d, h)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalKind {
    Minimum,
    Maximum,
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub x: f64,
    pub kind: CriticalKind,
}

/// Critical points of `V` inside the domain, from sign changes of `V'` on
/// the grid refined by bisection on the analytic derivative.
pub fn critical_points(g: &Grid, v: &PotentialSpec) -> Vec<CriticalPoint> {
    let x = g.nodes();
    let mut out: Vec<CriticalPoint> = Vec::new();
    let mut last: Option<(f64, f64)> = None;
    for &xi in x {
        let d = v.derivative(xi);
        if d == 0.0 {
            continue;
        }
        if let Some((xl, dl)) = last {
            if dl.signum() != d.signum() {
                let (mut a, mut b) = (xl, xi);
                for _ in 0..200 {
                    let mid = 0.5 * (a + b);
                    if mid <= a || mid >= b {
                        break;
                    }
                    if v.derivative(mid).signum() == dl.signum() {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                let xc = if v.derivative(0.5 * (a + b)) == 0.0 { 0.5 * (a + b) } else { a };
                let curv = v.second_derivative(xc);
                let scale = v.depth / (v.width * v.width);
                let kind = if curv.abs() <= 1e-8 * scale {
                    CriticalKind::Degenerate
                } else if curv > 0.0 {
                    CriticalKind::Minimum
                } else {
                    CriticalKind::Maximum
                };
                out.push(CriticalPoint { x: xc, kind });
            }
        }
        last = Some((xi, d));
    }
    out
}

/// Assignment of the concentration peaks of a profile to critical points of
/// `V`: local maxima of `|φ|` above 10% of the global maximum, each mapped
/// to the nearest critical point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub peaks: Vec<f64>,
    pub sites: Vec<(CriticalPoint, usize)>,
}

pub fn infer_placement(g: &Grid, v: &PotentialSpec, phi: &[f64]) -> Result<Placement> {
    let a: Vec<f64> = phi.iter().map(|x| x.abs()).collect();
    let top = a.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return Err(Error::InvalidArgument("placement of the zero field".into()));
    }
    let x = g.nodes();
    let n = a.len();
    let mut peaks = Vec::new();
    let mut i = 0;
    while i < n {
        let left = if i > 0 { a[i - 1] } else { 0.0 };
        // plateau-safe: walk across equal values
        let mut j = i;
        while j + 1 < n && a[j + 1] == a[i] {
            j += 1;
        }
        let right = if j + 1 < n { a[j + 1] } else { 0.0 };
        if a[i] > left && a[i] > right && a[i] >= 0.1 * top {
            peaks.push(0.5 * (x[i] + x[j]));
        }
        i = j + 1;
    }
    let crit = critical_points(g, v);
    if crit.is_empty() {
        return Err(Error::Unsupported("potential has no isolated critical points".into()));
    }
    let mut sites: Vec<(CriticalPoint, usize)> = Vec::new();
    for &pk in &peaks {
        let c = *crit
            .iter()
            .min_by(|a, b| (a.x - pk).abs().partial_cmp(&(b.x - pk).abs()).unwrap())
            .expect("nonempty");
        match sites.iter_mut().find(|(s, _)| s.x == c.x) {
            Some((_, k)) => *k += 1,
            None => sites.push((c, 1)),
        }
    }
    Ok(Placement { peaks, sites })
}

/// `k + Σ n_j`: one per profile plus the negative Hessian directions of `V`
/// at its site (0 at a minimum, 1 at a maximum in one dimension).
pub fn predicted_morse(placement: &[(CriticalKind, usize)]) -> Result<usize> {
    let mut total = 0;
    for &(kind, count) in placement {
        let neg = match kind {
            CriticalKind::Minimum => 0,
            CriticalKind::Maximum => 1,
            CriticalKind::Degenerate => {
                return Err(Error::Unsupported("profile at a degenerate critical point".into()))
            }
        };
        total += count * (1 + neg);
    }
    Ok(total)
}

pub fn predicted_morse_of(p: &Placement) -> Result<usize> {
    predicted_morse(&p.sites.iter().map(|(c, k)| (c.kind, *k)).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::free_soliton;

    fn cubic() -> ModelSpec {
        ModelSpec::new(PotentialSpec::zero(), -1.0, 2.0).unwrap()
    }

    #[test]
    fn diagnostics_need_a_decade() {
        use crate::continuation::{evaluate_point, Branch, Problem, SeedKind, Termination};
        let p = Problem::new(Grid::new(20.0, 4001).unwrap(), cubic()).unwrap();
        let branch = |es: &[f64]| Branch {
            id: 0,
            seed: SeedKind::Explicit,
            direction: 1.0,
            points: es
                .iter()
                .map(|&e| evaluate_point(&p, p.grid.sample(|x| free_soliton(2.0, -1.0, e, x)), e).unwrap())
                .collect(),
            events: Vec::new(),
            termination: Termination::EMaxReached,
        };
        let short = branch(&[1.0, 2.0, 4.0]);
        assert!(matches!(scaling_diagnostics(&p.grid, &p.model, &short, None), Err(Error::InsufficientRange(_))));
        let long = branch(&[0.5, 1.0, 2.0, 5.0]);
        let rep = scaling_diagnostics(&p.grid, &p.model, &long, Some(&[1.0, 2.0])).unwrap();
        assert_eq!(rep.rows.len(), 4);
        assert!((rep.r_q_limit - 0.75).abs() < 1e-3, "{}", rep.r_q_limit);
        assert!((rep.r_k_limit - 0.25).abs() < 1e-3, "{}", rep.r_k_limit);
        assert!(scaling_diagnostics(&p.grid, &p.model, &long, Some(&[3.0])).is_err());
    }

    #[test]
    fn ratios_from_exponents() {
        let (rq, rk) = predicted_ratios(2.0);
        assert_eq!(rq, 0.75);
        assert_eq!(rk, 0.25);
    }

    #[test]
    fn soliton_rows_are_scale_free() {
        let m = cubic();
        let g = Grid::new(20.0, 40001).unwrap();
        let mut first = None;
        for e in [1.0, 4.0, 9.0] {
            let phi = g.sample(|x| free_soliton(2.0, -1.0, e, x));
            let r = scaling_row(&g, &m, &phi, e);
            assert!((r.r_q - 0.75).abs() < 1e-3, "{r:?}");
            assert!((r.r_k - 0.25).abs() < 1e-3, "{r:?}");
            assert!((r.s_nl - 16.0 / 3.0).abs() < 1e-2);
            let f = crate::model::energy(&g, &m, &phi).unwrap();
            let r2 = scaling_row_from_functionals(&m, e, f.charge, f.kinetic, f.nonlinear).unwrap();
            assert!((r2.r_q - r.r_q).abs() < 1e-12 && (r2.r_k - r.r_k).abs() < 1e-12);
            if let Some(f) = first {
                let f: ScalingRow = f;
                assert!((f.s_q - r.s_q).abs() < 1e-3 * f.s_q);
            }
            first = Some(r);
        }
    }

    #[test]
    fn richardson_recovers_limit() {
        let f = |e: f64| 0.75 + 3.0 / e;
        assert!((richardson(100.0, f(100.0), 200.0, f(200.0)) - 0.75).abs() < 1e-14);
    }

    #[test]
    fn rescale_identity_and_family() {
        let m = cubic();
        let g = Grid::new(30.0, 6001).unwrap();
        let phi = g.sample(|x| (-(x * x)).exp());
        let refg = Grid::new(5.0, 501).unwrap();
        let r = rescale_profile(&g, &m, &phi, 1.0, 0.0, Some(refg.clone())).unwrap();
        for (y, v) in refg.nodes().iter().zip(&r.psi) {
            assert!((v - (-(y * y)).exp()).abs() < 1e-4);
        }
        assert!(r.has_full_coverage());
        let e = 16.0;
        let phi = g.sample(|x| free_soliton(2.0, -1.0, e, x));
        let r = rescale_profile(&g, &m, &phi, e, 0.0, None).unwrap();
        for (y, v) in r.reference.nodes().iter().zip(&r.psi) {
            assert!((v - 2f64.sqrt() / y.cosh()).abs() < 2e-3);
        }
        assert!(r.has_full_coverage());
        let wide = rescale_profile(&g, &m, &phi, 0.25, 0.0, None).unwrap();
        assert!(wide.coverage < 1.0 && wide.coverage > 0.5);
        assert!(rescale_profile(&g, &m, &phi, -1.0, 0.0, None).is_err());
    }

    #[test]
    fn limit_residual_examples() {
        let m = cubic();
        let g = Grid::new(20.0, 2000).unwrap();
        let h = g.spacing();
        let psi = g.sample(|y| 2f64.sqrt() / y.cosh());
        let r = limit_profile_residual(h, &psi, &m);
        assert!(r < h * h, "residual {r}");
        assert_eq!(limit_profile_residual(h, &vec![0.0; 2000], &m), 0.0);
        assert!((limit_ground_state(&m, 0.0) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn morse_predictions() {
        use CriticalKind::*;
        assert_eq!(predicted_morse(&[(Minimum, 1)]).unwrap(), 1);
        assert_eq!(predicted_morse(&[(Minimum, 1), (Minimum, 1)]).unwrap(), 2);
        assert_eq!(predicted_morse(&[(Maximum, 1)]).unwrap(), 2);
        assert!(predicted_morse(&[(Degenerate, 1)]).is_err());
    }

    #[test]
    fn double_well_critical_points() {
        let g = Grid::new(30.0, 3000).unwrap();
        let v = PotentialSpec::double_well(2.0, 2.0, 1.0);
        let c = critical_points(&g, &v);
        assert_eq!(c.len(), 3, "{c:?}");
        assert_eq!(c[0].kind, CriticalKind::Minimum);
        assert_eq!(c[1].kind, CriticalKind::Maximum);
        assert_eq!(c[2].kind, CriticalKind::Minimum);
        assert!(c[1].x.abs() < 1e-12);
        assert!((c[2].x - 2.0).abs() < 1e-5);
        let one = g.sample(|x| 3.0 / ((x - 2.0) * 3.0).cosh());
        let pl = infer_placement(&g, &v, &one).unwrap();
        assert_eq!(predicted_morse_of(&pl).unwrap(), 1);
        let two = g.sample(|x| 3.0 / ((x - 2.0) * 3.0).cosh() + 3.0 / ((x + 2.0) * 3.0).cosh());
        let pl = infer_placement(&g, &v, &two).unwrap();
        assert_eq!(predicted_morse_of(&pl).unwrap(), 2);
        assert!(infer_placement(&g, &PotentialSpec::zero(), &one).is_err());
    }
}
