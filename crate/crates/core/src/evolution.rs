//! Time-dependent NLS `i u_t = (-Δ + V) u + γ|u|^p u` by Strang splitting:
//! exact nonlinear phase rotations around one Crank–Nicolson step of the
//! linear part. Both sub-steps are unitary in the discrete L² product, so
//! the charge is conserved to rounding.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::continuation::{BranchPoint, Problem};
use crate::error::{Error, Result};
use crate::grid::{gradient_sq_complex, mirror, Grid};
use crate::linalg::{Tridiag, TridiagLu};
use crate::model::{energy_complex_with, linearization_with};
use crate::spectral::smallest_eigenpairs_on;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolveOpts {
    pub t_end: f64,
    pub dt: f64,
    pub sample_every: usize,
}

impl Default for EvolveOpts {
    fn default() -> Self {
        Self {
            t_end: 50.0,
            dt: 1e-3,
            sample_every: 100,
        }
    }
}

impl EvolveOpts {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_end > 0.0) || !self.dt.is_finite() || !self.t_end.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "need dt > 0 and T > 0, got dt = {}, T = {}",
                self.dt, self.t_end
            )));
        }
        if self.sample_every == 0 {
            return Err(Error::InvalidArgument("sample_every must be positive".into()));
        }
        Ok(())
    }

    /// Number of steps; the step is shrunk so that they land exactly on `T`.
    pub fn steps(&self) -> (usize, f64) {
        let n = (self.t_end / self.dt - 1e-9).ceil().max(1.0) as usize;
        (n, self.t_end / n as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub charge: f64,
    pub energy: f64,
    /// Gauge-minimised L² distance to the reference, when one was given.
    pub orbital_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    /// Last finite state.
    pub u: Vec<Complex64>,
    pub t: f64,
    /// Time at which a non-finite value appeared.
    pub blow_up: Option<f64>,
}

impl Trajectory {
    pub fn into_result(self) -> Result<Self> {
        match self.blow_up {
            Some(t) => Err(Error::BlowUp { t }),
            None => Ok(self),
        }
    }

    /// `max_t |Q(t) - Q(0)| / (Q(0) t)`, the relative drift rate.
    pub fn charge_drift_rate(&self) -> f64 {
        let q0 = self.samples[0].charge;
        self.samples
            .iter()
            .skip(1)
            .map(|s| (s.charge - q0).abs() / (q0.abs().max(f64::MIN_POSITIVE) * s.t))
            .fold(0.0, f64::max)
    }

    pub fn max_energy_deviation(&self) -> f64 {
        let e0 = self.samples[0].energy;
        self.samples.iter().map(|s| (s.energy - e0).abs()).fold(0.0, f64::max)
    }

    pub fn max_orbital_distance(&self) -> Option<f64> {
        self.samples
            .iter()
            .map(|s| s.orbital_distance)
            .try_fold(0.0f64, |m, d| d.map(|d| m.max(d)))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,Q,energy,orbital_distance\n");
        for r in &self.samples {
            let d = r.orbital_distance.map(|d| format!("{d:.17e}")).unwrap_or_default();
            s.push_str(&format!("{:.17e},{:.17e},{:.17e},{}\n", r.t, r.charge, r.energy, d));
        }
        s
    }
}

/// Crank–Nicolson propagator for `H = -Δ_h + V`, factored once.
struct LinearStep {
    lu: TridiagLu<Complex64>,
    diag: Vec<f64>,
    off: f64,
    half: f64,
}

impl LinearStep {
    fn new(g: &Grid, v: &[f64], dt: f64) -> Result<Self> {
        let n = g.len();
        let h2 = g.spacing() * g.spacing();
        let diag: Vec<f64> = v.iter().map(|v| 2.0 / h2 + v).collect();
        let off = -1.0 / h2;
        let half = 0.5 * dt;
        let ih = Complex64::new(0.0, half);
        let a = Tridiag {
            sub: vec![ih * off; n - 1],
            diag: diag.iter().map(|d| Complex64::new(1.0, 0.0) + ih * d).collect(),
            sup: vec![ih * off; n - 1],
        };
        Ok(Self {
            lu: a.factor()?,
            diag,
            off,
            half,
        })
    }

    fn apply(&self, u: &mut [Complex64]) -> Result<()> {
        let n = u.len();
        let ih = Complex64::new(0.0, self.half);
        let rhs: Vec<Complex64> = (0..n)
            .map(|i| {
                let mut hu = u[i] * self.diag[i];
                if i > 0 {
                    hu += u[i - 1] * self.off;
                }
                if i + 1 < n {
                    hu += u[i + 1] * self.off;
                }
                u[i] - ih * hu
            })
            .collect();
        let out = self.lu.solve(&rhs)?;
        u.copy_from_slice(&out);
        Ok(())
    }
}

fn nonlinear_phase(p: &Problem, u: &mut [Complex64], tau: f64) {
    let m = &p.model;
    for z in u.iter_mut() {
        let a = z.norm();
        let theta = -m.gamma * m.pow_abs(a) * tau;
        *z *= Complex64::from_polar(1.0, theta);
    }
}

fn sample(p: &Problem, u: &[Complex64], t: f64, reference: Option<&[f64]>) -> Sample {
    let f = energy_complex_with(&p.grid, &p.model, &p.v, u);
    Sample {
        t,
        charge: f.charge,
        energy: f.energy,
        orbital_distance: reference.map(|r| orbit_fit(p, u, r).l2),
    }
}

/// Propagates `u0` to `T`, sampling every `sample_every` steps (and at `T`).
/// A non-finite value stops the run and is reported in `blow_up` together
/// with the last finite state.
pub fn evolve(p: &Problem, u0: &[Complex64], opts: &EvolveOpts, reference: Option<&[f64]>) -> Result<Trajectory> {
    opts.validate()?;
    let g = &p.grid;
    if u0.len() != g.len() {
        return Err(Error::InvalidArgument(format!(
            "initial field has length {}, grid has {}",
            u0.len(),
            g.len()
        )));
    }
    if let Some(r) = reference {
        if r.len() != g.len() || r.iter().all(|x| *x == 0.0) {
            return Err(Error::InvalidArgument("reference must be a nonzero field on the grid".into()));
        }
    }
    let (steps, dt) = opts.steps();
    let lin = LinearStep::new(g, &p.v, dt)?;
    let mut u = u0.to_vec();
    let mut samples = vec![sample(p, &u, 0.0, reference)];
    for k in 1..=steps {
        let prev = u.clone();
        nonlinear_phase(p, &mut u, 0.5 * dt);
        lin.apply(&mut u)?;
        nonlinear_phase(p, &mut u, 0.5 * dt);
        let t = k as f64 * dt;
        if u.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Ok(Trajectory {
                samples,
                u: prev,
                t: (k - 1) as f64 * dt,
                blow_up: Some(t),
            });
        }
        if k % opts.sample_every == 0 || k == steps {
            samples.push(sample(p, &u, t, reference));
        }
    }
    Ok(Trajectory {
        samples,
        u,
        t: steps as f64 * dt,
        blow_up: None,
    })
}

pub fn to_complex(phi: &[f64]) -> Vec<Complex64> {
    phi.iter().map(|x| Complex64::new(*x, 0.0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitalDistance {
    pub l2: f64,
    pub h1: f64,
    pub theta: f64,
    /// Translation applied to the reference (zero unless `V ≡ 0`).
    pub shift: f64,
}

/// `min_θ ‖u - e^{iθ} φ‖` with `θ* = arg(φ, u)`; the H¹ value is taken at
/// the same `θ*`.
pub fn orbital_distance(g: &Grid, u: &[Complex64], phi: &[f64]) -> OrbitalDistance {
    let h = g.spacing();
    let c: Complex64 = u.iter().zip(phi).map(|(z, f)| z * *f).sum::<Complex64>() * h;
    let theta = if c.norm() > 0.0 { c.arg() } else { 0.0 };
    let rot = Complex64::from_polar(1.0, theta);
    let d: Vec<Complex64> = u.iter().zip(phi).map(|(z, f)| z - rot * *f).collect();
    let l2sq = h * d.iter().map(|z| z.norm_sqr()).sum::<f64>();
    OrbitalDistance {
        l2: l2sq.sqrt(),
        h1: (l2sq + gradient_sq_complex(&d, h)).sqrt(),
        theta,
        shift: 0.0,
    }
}

fn centre_of_mass(g: &Grid, w: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut sx) = (0.0, 0.0);
    for (x, w) in g.nodes().iter().zip(w) {
        s += w;
        sx += w * x;
    }
    if s > 0.0 {
        sx / s
    } else {
        0.0
    }
}

/// Four-point Lagrange interpolation of nodal data at `x` (zero beyond the
/// Dirichlet boundary).
fn cubic_at(g: &Grid, f: &[f64], x: f64) -> f64 {
    let l = g.half_width();
    let h = g.spacing();
    let s = (x + l) / h;
    let k = s.floor() as isize;
    let t = s - k as f64;
    let at = |j: isize| -> f64 {
        if j <= 0 || j as usize > f.len() {
            0.0
        } else {
            f[j as usize - 1]
        }
    };
    let (a, b, c, d) = (at(k - 1), at(k), at(k + 1), at(k + 2));
    -t * (t - 1.0) * (t - 2.0) / 6.0 * a + (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0 * b
        - (t + 1.0) * t * (t - 2.0) / 2.0 * c
        + (t + 1.0) * t * (t - 1.0) / 6.0 * d
}

/// Shifts `phi` by `a` (`φ(x - a)`).
pub fn translate(g: &Grid, phi: &[f64], a: f64) -> Vec<f64> {
    if a == 0.0 {
        return phi.to_vec();
    }
    g.nodes().iter().map(|x| cubic_at(g, phi, x - a)).collect()
}

/// Orbit distance with a centre-of-mass translation fit when the potential
/// is translation invariant.
pub fn orbit_fit(p: &Problem, u: &[Complex64], phi: &[f64]) -> OrbitalDistance {
    let g = &p.grid;
    if !p.model.potential.is_translation_invariant() {
        return orbital_distance(g, u, phi);
    }
    let a = centre_of_mass(g, u.iter().map(|z| z.norm_sqr())) - centre_of_mass(g, phi.iter().map(|f| f * f));
    let shifted = translate(g, phi, a);
    OrbitalDistance {
        shift: a,
        ..orbital_distance(g, u, &shifted)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Direction {
    /// Lowest eigenvector of `L₊`.
    LPlusGround,
    /// Seeded uniform noise, windowed by `|φ|`.
    Random { seed: u64 },
    /// `x ↦ (w(x) - w(-x))/2` for `w = x φ`.
    MirrorAntisymmetric,
}

impl Direction {
    pub fn name(&self) -> &'static str {
        match self {
            Direction::LPlusGround => "lplus_ground",
            Direction::Random { .. } => "random",
            Direction::MirrorAntisymmetric => "mirror_antisymmetric",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub direction: Direction,
    /// Perturbation size relative to `‖φ‖`.
    pub epsilon: f64,
    pub evolve: EvolveOpts,
}

impl ProbeSpec {
    pub fn new(direction: Direction) -> Self {
        Self {
            direction,
            epsilon: 1e-3,
            evolve: EvolveOpts::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Bounded,
    Departed,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Bounded => "bounded",
            Verdict::Departed => "departed",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub e: f64,
    pub direction: Direction,
    pub epsilon: f64,
    /// `max_t d(t) / (ε‖φ‖)`.
    pub max_relative_distance: f64,
    pub verdict: Verdict,
    pub blow_up: Option<f64>,
    pub charge_drift_rate: f64,
    pub energy_deviation: f64,
}

/// Unit (`‖d‖ = ‖φ‖`) perturbation direction.
pub fn perturbation(p: &Problem, point: &BranchPoint, dir: Direction) -> Result<Vec<f64>> {
    let g = &p.grid;
    let phi = &point.phi;
    let raw = match dir {
        Direction::LPlusGround => {
            let (lp, _) = linearization_with(g, &p.model, &p.v, phi, point.e);
            smallest_eigenpairs_on(g, &lp, 1)?.remove(0).1
        }
        Direction::Random { seed } => {
            let top = phi.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            phi.iter()
                .map(|f| rng.random_range(-1.0..1.0) * f.abs() / top.max(f64::MIN_POSITIVE))
                .collect()
        }
        Direction::MirrorAntisymmetric => {
            let w: Vec<f64> = g.nodes().iter().zip(phi).map(|(x, f)| x * f).collect();
            w.iter().zip(mirror(&w)).map(|(a, b)| 0.5 * (a - b)).collect()
        }
    };
    let nr = g.norm(&raw);
    if !(nr > 0.0) {
        return Err(Error::InvalidArgument(format!("{} direction vanishes", dir.name())));
    }
    let s = g.norm(phi) / nr;
    Ok(raw.into_iter().map(|x| x * s).collect())
}

/// Evolves `φ + ε d` and classifies the largest orbit distance:
/// bounded at `≤ 10 ε‖φ‖`, departed at `≥ 100 ε‖φ‖` or on blow-up.
/// Sizes below the splitting error `dt²` are measured against `dt²‖φ‖`.
pub fn stability_probe(p: &Problem, point: &BranchPoint, spec: &ProbeSpec) -> Result<ProbeRecord> {
    if !(spec.epsilon >= 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be ≥ 0, got {}", spec.epsilon)));
    }
    if point.is_trivial() {
        return Err(Error::InvalidArgument("probe of the trivial state".into()));
    }
    let d = perturbation(p, point, spec.direction)?;
    let u0: Vec<Complex64> = point
        .phi
        .iter()
        .zip(&d)
        .map(|(f, d)| Complex64::new(f + spec.epsilon * d, 0.0))
        .collect();
    let tr = evolve(p, &u0, &spec.evolve, Some(&point.phi))?;
    let (_, dt) = spec.evolve.steps();
    let scale = p.grid.norm(&point.phi) * spec.epsilon.max(dt * dt);
    let rel = tr.max_orbital_distance().unwrap_or(f64::INFINITY) / scale;
    let verdict = if tr.blow_up.is_some() || rel >= 100.0 {
        Verdict::Departed
    } else if rel <= 10.0 {
        Verdict::Bounded
    } else {
        Verdict::Inconclusive
    };
    Ok(ProbeRecord {
        e: point.e,
        direction: spec.direction,
        epsilon: spec.epsilon,
        max_relative_distance: rel,
        verdict,
        blow_up: tr.blow_up,
        charge_drift_rate: tr.charge_drift_rate(),
        energy_deviation: tr.max_energy_deviation(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{free_soliton, ModelSpec, PotentialSpec};

    fn soliton_problem(n: usize) -> Problem {
        let g = Grid::new(20.0, n).unwrap();
        Problem::new(g, ModelSpec::new(PotentialSpec::zero(), -1.0, 2.0).unwrap()).unwrap()
    }

    fn opts(t_end: f64, dt: f64) -> EvolveOpts {
        EvolveOpts {
            t_end,
            dt,
            sample_every: 10,
        }
    }

    #[test]
    fn zero_stays_zero() {
        let p = soliton_problem(101);
        let u0 = vec![Complex64::new(0.0, 0.0); 101];
        let tr = evolve(&p, &u0, &opts(1.0, 0.01), None).unwrap();
        assert!(tr.u.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn rejects_bad_options() {
        let p = soliton_problem(101);
        let u0 = vec![Complex64::new(0.0, 0.0); 101];
        assert!(evolve(&p, &u0, &opts(1.0, 0.0), None).is_err());
        assert!(evolve(&p, &u0, &opts(-1.0, 0.1), None).is_err());
        assert!(evolve(&p, &u0[..10], &opts(1.0, 0.1), None).is_err());
    }

    #[test]
    fn soliton_charge_conserved() {
        let p = soliton_problem(801);
        let phi = p.grid.sample(|x| free_soliton(2.0, -1.0, 1.0, x));
        let tr = evolve(&p, &to_complex(&phi), &opts(50.0, 0.01), None).unwrap();
        for s in &tr.samples {
            assert!((s.charge - tr.samples[0].charge).abs() < 1e-10 * 2.0 * s.t.max(1.0));
        }
        assert!((tr.samples[0].charge - 2.0).abs() < 1e-3);
        assert!(tr.charge_drift_rate() < 1e-10);
    }

    #[test]
    fn gauge_covariance() {
        let p = soliton_problem(201);
        let phi = p.grid.sample(|x| 1.3 * free_soliton(2.0, -1.0, 1.0, x));
        let rot = Complex64::from_polar(1.0, 0.7);
        let a = evolve(&p, &to_complex(&phi), &opts(2.0, 0.01), None).unwrap();
        let u0: Vec<Complex64> = phi.iter().map(|f| rot * *f).collect();
        let b = evolve(&p, &u0, &opts(2.0, 0.01), None).unwrap();
        for (x, y) in a.u.iter().zip(&b.u) {
            assert!((rot * x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn time_reversal() {
        let p = soliton_problem(201);
        let phi = p.grid.sample(|x| 1.3 * free_soliton(2.0, -1.0, 1.0, x));
        let fwd = evolve(&p, &to_complex(&phi), &opts(1.0, 0.01), None).unwrap();
        let back: Vec<Complex64> = fwd.u.iter().map(|z| z.conj()).collect();
        let ret = evolve(&p, &back, &opts(1.0, 0.01), None).unwrap();
        let err = ret
            .u
            .iter()
            .zip(&phi)
            .map(|(z, f)| (z.conj() - f).norm())
            .fold(0.0, f64::max);
        // Strang splitting is symmetric, so the return is exact up to rounding
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn stationary_state_stays_on_orbit() {
        use crate::solver::{newton_fixed_e, NewtonOpts};
        let p = soliton_problem(401);
        let g = &p.grid;
        let guess = g.sample(|x| free_soliton(2.0, -1.0, 1.0, x));
        let r = newton_fixed_e(g, &p.model, &guess, 1.0, &NewtonOpts::default()).unwrap();
        let run = |dt: f64| evolve(&p, &to_complex(&r.phi), &opts(10.0, dt), Some(&r.phi)).unwrap();
        let (coarse, fine) = (run(0.02), run(0.01));
        let (dc, df) = (coarse.max_orbital_distance().unwrap(), fine.max_orbital_distance().unwrap());
        let h = g.spacing();
        assert!(df < (h * h + 0.01 * 0.01) * 10.0, "{df}");
        assert!(dc / df > 3.5, "{dc} {df}");
        let amp: Vec<f64> = fine.u.iter().map(|z| z.norm()).collect();
        let dev = amp.iter().zip(&r.phi).map(|(a, f)| (a - f.abs()).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-4, "{dev}");
    }

    #[test]
    fn energy_error_is_second_order() {
        let p = soliton_problem(401);
        let phi = p.grid.sample(|x| 1.2 * free_soliton(2.0, -1.0, 1.0, x));
        let dev = |dt: f64| {
            evolve(&p, &to_complex(&phi), &opts(10.0, dt), None)
                .unwrap()
                .max_energy_deviation()
        };
        let (a, b) = (dev(0.02), dev(0.01));
        let ratio = a / b;
        assert!(ratio > 3.0 && ratio < 5.0, "{a} {b} {ratio}");
    }

    #[test]
    fn orbital_distance_examples() {
        let g = Grid::new(10.0, 201).unwrap();
        let phi = g.sample(|x| (-x * x).exp());
        let u: Vec<Complex64> = phi.iter().map(|f| Complex64::from_polar(*f, 1.1)).collect();
        let d = orbital_distance(&g, &u, &phi);
        assert!(d.l2 < 1e-14 && (d.theta - 1.1).abs() < 1e-12);
        let v = g.sample(|x| x * (-x * x).exp());
        let eps = 1e-4;
        let u: Vec<Complex64> = phi.iter().zip(&v).map(|(f, v)| Complex64::new(f + eps * v, 0.0)).collect();
        let d = orbital_distance(&g, &u, &phi);
        assert!((d.l2 - eps * g.norm(&v)).abs() < 1e-10);
        let u = to_complex(&v);
        let d = orbital_distance(&g, &u, &phi);
        let expect = (g.norm(&v).powi(2) + g.norm(&phi).powi(2)).sqrt();
        assert!((d.l2 - expect).abs() < 1e-12);
    }

    #[test]
    fn translation_fit_removes_shift() {
        let p = soliton_problem(801);
        let phi = p.grid.sample(|x| free_soliton(2.0, -1.0, 1.0, x));
        let moved = to_complex(&p.grid.sample(|x| free_soliton(2.0, -1.0, 1.0, x - 0.3)));
        let plain = orbital_distance(&p.grid, &moved, &phi);
        let fit = orbit_fit(&p, &moved, &phi);
        assert!(plain.l2 > 0.1);
        assert!(fit.l2 < 1e-4, "{fit:?}");
        assert!((fit.shift - 0.3).abs() < 1e-6);
    }

    #[test]
    fn probe_soliton_bounded() {
        use crate::continuation::evaluate_point;
        use crate::solver::{newton_fixed_e, NewtonOpts};
        let p = soliton_problem(401);
        let g = &p.grid;
        let guess = g.sample(|x| free_soliton(2.0, -1.0, 1.0, x));
        let r = newton_fixed_e(g, &p.model, &guess, 1.0, &NewtonOpts::default()).unwrap();
        let pt = evaluate_point(&p, r.phi, 1.0).unwrap();
        for (dir, eps) in [
            (Direction::LPlusGround, 1e-3),
            (Direction::Random { seed: 7 }, 1e-3),
            (Direction::LPlusGround, 0.0),
        ] {
            let spec = ProbeSpec {
                direction: dir,
                epsilon: eps,
                evolve: EvolveOpts {
                    t_end: 10.0,
                    dt: 1e-2,
                    sample_every: 10,
                },
            };
            let rec = stability_probe(&p, &pt, &spec).unwrap();
            assert_eq!(rec.verdict, Verdict::Bounded, "{rec:?}");
        }
        let a = perturbation(&p, &pt, Direction::Random { seed: 3 }).unwrap();
        let b = perturbation(&p, &pt, Direction::Random { seed: 3 }).unwrap();
        assert_eq!(a, b);
    }
}
