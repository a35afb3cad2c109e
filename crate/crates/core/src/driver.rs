//! Diagram pipeline and artifact persistence: trivial branch → E₀ → primary
//! branch → recursive event processing, written as branch CSVs, profile
//! CSVs, an events file and a summary.

use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bifurcation::{detect_events, locate_event, switch_branch, BifurcationEvent, CrossingOperator, EventKind};
use crate::config::{ExplicitSeed, RunConfig};
use crate::continuation::{ext_norm, join_traces, trace_branch, Branch, Controls, Guard, Problem, SeedKind, Termination};
use crate::error::{Error, Result};
use crate::grid::mirror;
use crate::linalg::Parity;
use crate::model::{free_soliton, linear_operator};
use crate::solver::linear_ground_state;
use crate::spectral::smallest_eigenvalues;
use crate::stability::{classify_gss, default_slope_tol, segments, Stability, StabilitySegment};

/// Exact column header of a branch CSV.
pub const BRANCH_HEADER: &str = "index,E,Q,energy,kinetic,potential,nonlinear,morse_plus,morse_minus,lambda_min_plus,lambda_min_minus,slope_dQdE,pohozaev,asymmetry,stability";

/// Every this many points a profile is stored (plus ends and landmarks).
pub const PROFILE_STRIDE: usize = 10;

/// Event as recorded in the events file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub id: usize,
    pub branch: usize,
    pub arclength_bracket: (f64, f64),
    pub e: f64,
    pub charge: f64,
    pub eigenvalue: f64,
    pub converged: bool,
    pub operator: Option<CrossingOperator>,
    pub parity: Option<String>,
    pub kind: EventKind,
    pub children: Vec<usize>,
    /// Set when the event is one already known (seen from the other side).
    pub duplicate_of: Option<usize>,
}

/// Where a branch came from, to recognise its own origin as an event.
#[derive(Debug, Clone)]
struct Origin {
    phi: Vec<f64>,
    e: f64,
    tol: f64,
    event: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Diagram {
    pub e0: Option<f64>,
    pub branches: Vec<Branch>,
    pub events: Vec<EventRecord>,
    pub budget_exhausted: bool,
    /// Non-fatal failures (an event that could not be located or switched).
    pub failures: Vec<String>,
}

impl Diagram {
    pub fn event(&self, id: usize) -> Option<&EventRecord> {
        self.events.iter().find(|e| e.id == id)
    }
}

fn parity_name(p: Option<Parity>) -> Option<String> {
    p.map(|p| match p {
        Parity::Even => "even".to_string(),
        Parity::Odd => "odd".to_string(),
    })
}

fn retag(b: &mut Branch, slope_tol: Option<f64>) {
    for p in b.points.iter_mut() {
        let tol = slope_tol.unwrap_or_else(|| default_slope_tol(p.functionals.charge));
        p.stability = classify_gss(p, tol);
    }
}

fn trace_both(p: &Problem, phi: &[f64], e: f64, c: &Controls, seed: SeedKind) -> Result<Branch> {
    let fwd = trace_branch(p, phi, e, 1.0, c, seed.clone())?;
    let bwd = trace_branch(p, phi, e, -1.0, c, seed)?;
    Ok(join_traces(bwd, fwd))
}

fn load_profile_on(p: &Problem, path: &Path) -> Result<Vec<f64>> {
    let (x, phi) = read_profile(path)?;
    let nodes = p.grid.nodes();
    if x.len() != nodes.len() || x.iter().zip(nodes).any(|(a, b)| (a - b).abs() > 1e-9 * (1.0 + b.abs())) {
        return Err(Error::InvalidArgument(format!(
            "profile {} does not live on the configured grid",
            path.display()
        )));
    }
    Ok(phi)
}

/// Runs the whole diagram. A numerical failure after some branches exist is
/// returned together with the partial diagram.
pub fn build_diagram(cfg: &RunConfig) -> std::result::Result<Diagram, (Diagram, Error)> {
    let mut d = Diagram::default();
    match build_into(cfg, &mut d) {
        Ok(()) => Ok(d),
        Err(e) => Err((d, e)),
    }
}

fn build_into(cfg: &RunConfig, d: &mut Diagram) -> Result<()> {
    cfg.validate()?;
    let p = cfg.problem()?;
    let g = &p.grid;
    let c = cfg.controls();
    let sw = cfg.switch_opts();
    let mut origins: Vec<Option<Origin>> = Vec::new();
    let mut queue: VecDeque<usize> = VecDeque::new();

    match &cfg.seeds.explicit {
        Some(seed) => {
            let (phi, e) = match seed {
                ExplicitSeed::Profile { path, e } => (load_profile_on(&p, path)?, *e),
                ExplicitSeed::FreeSoliton { e } => {
                    let m = &p.model;
                    (g.sample(|x| free_soliton(m.power, m.gamma, *e, x)), *e)
                }
            };
            let mut b = trace_both(&p, &phi, e, &c, SeedKind::Explicit)?;
            b.id = 0;
            d.branches.push(b);
            origins.push(None);
            queue.push_back(0);
        }
        None => {
            let (e0, _) = linear_ground_state(g, &p.model)?;
            d.e0 = Some(e0);
            // the window holds E₀ but not the next linear level
            let lams = smallest_eigenvalues(&linear_operator(g, &p.model.potential), 2)?;
            let e1 = (-lams[1]).max(0.0);
            let gap = e0 - e1;
            let lo = (e1 + 0.5 * gap).max(c.e_min);
            let hi = (e0 + 0.5 * gap).min(c.e_max);
            let ct = Controls {
                e_min: 0.5 * lo,
                e_max: hi,
                ds_init: (0.05 * gap).clamp(c.ds_min, c.ds_max),
                ds_max: (0.25 * gap).clamp(c.ds_min, c.ds_max),
                landmarks: Vec::new(),
                ..c.clone()
            };
            let mut b = trace_branch(&p, &vec![0.0; g.len()], lo, 1.0, &ct, SeedKind::TrivialBranch)?;
            b.id = 0;
            d.branches.push(b);
            origins.push(None);
            queue.push_back(0);
        }
    }

    while let Some(bid) = queue.pop_front() {
        let brackets = detect_events(&d.branches[bid]);
        for br in brackets {
            let ev = match locate_event(&p, &d.branches[bid], br, &c, cfg.tolerances.event_tol) {
                Ok(ev) => ev,
                Err(e) => {
                    d.failures.push(format!("branch {bid}: locating bracket {}..{}: {e}", br.lo, br.hi));
                    continue;
                }
            };
            let id = d.events.len();
            let mut rec = EventRecord {
                id,
                branch: bid,
                arclength_bracket: (
                    d.branches[bid].points[br.lo].arclength,
                    d.branches[bid].points[br.hi].arclength,
                ),
                e: ev.e(),
                charge: ev.point.charge(),
                eigenvalue: ev.eigenvalue,
                converged: ev.converged,
                operator: ev.operator,
                parity: parity_name(ev.parity),
                kind: ev.kind,
                children: Vec::new(),
                duplicate_of: None,
            };
            if let Some(o) = &origins[bid] {
                let diff: Vec<f64> = ev.point.phi.iter().zip(&o.phi).map(|(a, b)| a - b).collect();
                if ext_norm(g, &diff, ev.e() - o.e) <= o.tol {
                    rec.duplicate_of = Some(o.event);
                }
            }
            if rec.duplicate_of.is_none() {
                rec.duplicate_of = known_event(d, &p, &ev);
            }
            let switchable = matches!(
                ev.kind,
                EventKind::TrivialBranchPitchfork | EventKind::PitchforkSymmetryBreaking
            );
            let mut stored = ev.clone();
            if switchable && rec.duplicate_of.is_none() {
                if d.branches.len() >= cfg.budget {
                    d.budget_exhausted = true;
                } else {
                    match switch_branch(&p, &ev, &c, &sw) {
                        Ok(seeds) => {
                            let (guard, scale) = match ev.kind {
                                EventKind::TrivialBranchPitchfork => {
                                    let q = 0.5 * sw.trivial_amplitude * sw.trivial_amplitude;
                                    (Guard::MinCharge(0.25 * q), sw.trivial_amplitude)
                                }
                                _ => (Guard::MinAsymmetry(1e-3), sw.relative_amplitude * g.norm(&ev.point.phi)),
                            };
                            let cc = Controls { guard, ..c.clone() };
                            for s in seeds {
                                if d.branches.len() >= cfg.budget {
                                    d.budget_exhausted = true;
                                    break;
                                }
                                let kind = SeedKind::Switched { parent: bid, event: id };
                                let mut child = match trace_both(&p, &s.phi, s.e, &cc, kind) {
                                    Ok(b) => b,
                                    Err(e) => {
                                        d.failures.push(format!("event {id}: tracing child: {e}"));
                                        continue;
                                    }
                                };
                                let cid = d.branches.len();
                                child.id = cid;
                                d.branches.push(child);
                                origins.push(Some(Origin {
                                    phi: ev.point.phi.clone(),
                                    e: ev.e(),
                                    tol: 2.0 * sw.offset_factor * scale,
                                    event: id,
                                }));
                                rec.children.push(cid);
                                queue.push_back(cid);
                            }
                        }
                        Err(e) => d.failures.push(format!("event {id}: switching: {e}")),
                    }
                }
            }
            stored.children = rec.children.clone();
            d.branches[bid].events.push(stored);
            d.events.push(rec);
        }
    }
    for b in d.branches.iter_mut() {
        retag(b, cfg.tolerances.slope_tol);
    }
    Ok(())
}

/// An earlier event at the same place (or its mirror image).
fn known_event(d: &Diagram, p: &Problem, ev: &BifurcationEvent) -> Option<usize> {
    let g = &p.grid;
    let scale = g.norm(&ev.point.phi).max(1.0);
    for b in &d.branches {
        let recs = d.events.iter().filter(|r| r.branch == b.id);
        for (k, rec) in b.events.iter().zip(recs) {
            for cand in [k.point.phi.clone(), mirror(&k.point.phi)] {
                let diff: Vec<f64> = ev.point.phi.iter().zip(&cand).map(|(a, b)| a - b).collect();
                if ext_norm(g, &diff, ev.e() - k.e()) <= 1e-4 * scale {
                    return Some(rec.duplicate_of.unwrap_or(rec.id));
                }
            }
        }
    }
    None
}

fn fmt(x: f64) -> String {
    format!("{x:e}")
}

pub fn branch_csv(b: &Branch) -> String {
    let mut s = String::from(BRANCH_HEADER);
    s.push('\n');
    for (i, p) in b.points.iter().enumerate() {
        let f = &p.functionals;
        let sp = &p.spectral;
        let row = [
            i.to_string(),
            fmt(p.e),
            fmt(f.charge),
            fmt(f.energy),
            fmt(f.kinetic),
            fmt(f.potential),
            fmt(f.nonlinear),
            sp.morse_plus.to_string(),
            sp.morse_minus.to_string(),
            fmt(sp.lambda_min_plus),
            fmt(sp.lambda_min_minus),
            fmt(p.slope_dqde),
            fmt(p.pohozaev),
            fmt(p.asymmetry),
            p.stability.value.as_str().to_string(),
        ];
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// One parsed row of a branch CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchRow {
    pub index: usize,
    pub e: f64,
    pub charge: f64,
    pub energy: f64,
    pub kinetic: f64,
    pub potential: f64,
    pub nonlinear: f64,
    pub morse_plus: usize,
    pub morse_minus: usize,
    pub lambda_min_plus: f64,
    pub lambda_min_minus: f64,
    pub slope_dqde: f64,
    pub pohozaev: f64,
    pub asymmetry: f64,
    pub stability: Stability,
}

fn parse_err(path: &Path, line: usize, what: &str) -> Error {
    Error::InvalidArgument(format!("{}:{}: {what}", path.display(), line + 1))
}

pub fn read_branch_csv(path: &Path) -> Result<Vec<BranchRow>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(BRANCH_HEADER) {
        return Err(parse_err(path, 0, "unexpected header"));
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let c: Vec<&str> = line.split(',').collect();
        if c.len() != 15 {
            return Err(parse_err(path, k + 1, "expected 15 columns"));
        }
        let f = |i: usize| c[i].parse::<f64>().map_err(|_| parse_err(path, k + 1, "bad number"));
        let u = |i: usize| c[i].parse::<usize>().map_err(|_| parse_err(path, k + 1, "bad integer"));
        rows.push(BranchRow {
            index: u(0)?,
            e: f(1)?,
            charge: f(2)?,
            energy: f(3)?,
            kinetic: f(4)?,
            potential: f(5)?,
            nonlinear: f(6)?,
            morse_plus: u(7)?,
            morse_minus: u(8)?,
            lambda_min_plus: f(9)?,
            lambda_min_minus: f(10)?,
            slope_dqde: f(11)?,
            pohozaev: f(12)?,
            asymmetry: f(13)?,
            stability: Stability::parse(c[14]).ok_or_else(|| parse_err(path, k + 1, "bad stability"))?,
        });
    }
    Ok(rows)
}

pub fn profile_csv(x: &[f64], phi: &[f64]) -> String {
    let mut s = String::from("x,phi\n");
    for (a, b) in x.iter().zip(phi) {
        s.push_str(&format!("{},{}\n", fmt(*a), fmt(*b)));
    }
    s
}

pub fn read_profile(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some("x,phi") {
        return Err(parse_err(path, 0, "expected header x,phi"));
    }
    let (mut x, mut phi) = (Vec::new(), Vec::new());
    for (k, line) in lines.enumerate() {
        let (a, b) = line.split_once(',').ok_or_else(|| parse_err(path, k + 1, "expected 2 columns"))?;
        x.push(a.parse::<f64>().map_err(|_| parse_err(path, k + 1, "bad number"))?);
        phi.push(b.parse::<f64>().map_err(|_| parse_err(path, k + 1, "bad number"))?);
    }
    Ok((x, phi))
}

/// Write-then-rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn branch_file(id: usize) -> String {
    format!("branch_{id:03}.csv")
}

pub fn profile_file(branch: usize, index: usize) -> String {
    format!("profiles/branch_{branch:03}_{index:05}.csv")
}

/// Indices of the points whose profiles are stored: every
/// `PROFILE_STRIDE`-th point, the ends, landmarks and the middle of each
/// stability segment.
pub fn profile_indices(b: &Branch, landmarks: &[f64]) -> Vec<usize> {
    let n = b.points.len();
    let mids: Vec<usize> = segments(b).iter().map(|s| (s.first + s.last) / 2).collect();
    (0..n)
        .filter(|&i| i % PROFILE_STRIDE == 0 || i + 1 == n || landmarks.contains(&b.points[i].e) || mids.contains(&i))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorseRun {
    pub morse_plus: usize,
    pub morse_minus: usize,
    pub e_start: f64,
    pub e_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRef {
    pub index: usize,
    pub e: f64,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSummary {
    pub id: usize,
    pub seed: SeedKind,
    pub file: String,
    pub points: usize,
    pub start: (f64, f64),
    pub end: (f64, f64),
    pub e_range: (f64, f64),
    pub termination: Termination,
    pub trivial: bool,
    /// Even, odd, or `null` for asymmetric branches (judged at the end).
    pub parity: Option<String>,
    pub events: Vec<usize>,
    pub stability: Vec<StabilitySegment>,
    pub morse: Vec<MorseRun>,
    pub profiles: Vec<ProfileRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub e0: Option<f64>,
    pub branches: Vec<BranchSummary>,
    pub events: usize,
    pub budget_exhausted: bool,
    pub failures: Vec<String>,
}

fn morse_runs(b: &Branch) -> Vec<MorseRun> {
    let mut out: Vec<MorseRun> = Vec::new();
    for p in &b.points {
        let (mp, mm) = (p.spectral.morse_plus, p.spectral.morse_minus);
        match out.last_mut() {
            Some(r) if r.morse_plus == mp && r.morse_minus == mm => r.e_end = p.e,
            _ => out.push(MorseRun {
                morse_plus: mp,
                morse_minus: mm,
                e_start: p.e,
                e_end: p.e,
            }),
        }
    }
    out
}

pub fn summarize_diagram(d: &Diagram, landmarks: &[f64]) -> Summary {
    let branches = d
        .branches
        .iter()
        .map(|b| {
            let first = b.points.first().expect("branches are nonempty");
            let last = b.points.last().expect("branches are nonempty");
            BranchSummary {
                id: b.id,
                seed: b.seed.clone(),
                file: branch_file(b.id),
                points: b.points.len(),
                start: (first.e, first.charge()),
                end: (last.e, last.charge()),
                e_range: b.e_range(),
                termination: b.termination,
                trivial: b.is_trivial(),
                parity: if b.is_trivial() { None } else { parity_name(last.parity()) },
                events: d.events.iter().filter(|e| e.branch == b.id).map(|e| e.id).collect(),
                stability: segments(b),
                morse: morse_runs(b),
                profiles: profile_indices(b, landmarks)
                    .into_iter()
                    .map(|i| ProfileRef {
                        index: i,
                        e: b.points[i].e,
                        file: profile_file(b.id, i),
                    })
                    .collect(),
            }
        })
        .collect();
    Summary {
        e0: d.e0,
        branches,
        events: d.events.len(),
        budget_exhausted: d.budget_exhausted,
        failures: d.failures.clone(),
    }
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// Writes every artifact of a diagram; returns the relative paths written.
pub fn write_diagram(dir: &Path, cfg: &RunConfig, d: &Diagram) -> Result<Vec<String>> {
    let mut written = Vec::new();
    let mut put = |rel: String, contents: String| -> Result<()> {
        write_atomic(&dir.join(&rel), &contents)?;
        written.push(rel);
        Ok(())
    };
    put("config.json".into(), json(cfg))?;
    let landmarks = &cfg.continuation.landmarks;
    let summary = summarize_diagram(d, landmarks);
    let x = cfg.problem()?.grid.nodes().to_vec();
    for (b, bs) in d.branches.iter().zip(&summary.branches) {
        put(bs.file.clone(), branch_csv(b))?;
        for pr in &bs.profiles {
            put(pr.file.clone(), profile_csv(&x, &b.points[pr.index].phi))?;
        }
    }
    put("events.json".into(), json(&d.events))?;
    put("summary.json".into(), json(&summary))?;
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureManifest {
    pub status: String,
    pub error: String,
    pub written: Vec<String>,
}

pub fn write_manifest(dir: &Path, error: &Error, written: Vec<String>) -> Result<()> {
    let m = FailureManifest {
        status: "failed".into(),
        error: error.to_string(),
        written,
    };
    write_atomic(&dir.join("manifest.json"), &json(&m))
}

pub fn read_summary(dir: &Path) -> Result<Summary> {
    let path = dir.join("summary.json");
    let text = fs::read_to_string(&path).map_err(|_| {
        Error::InvalidArgument(format!(
            "missing prerequisite {}; run the diagram first",
            path.display()
        ))
    })?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

/// Runs and writes the diagram. On a numerical failure the partial
/// artifacts and a failure manifest are written before the error returns.
pub fn run_diagram(cfg: &RunConfig, dir: &Path) -> Result<Summary> {
    cfg.validate()?;
    match build_diagram(cfg) {
        Ok(d) => {
            write_diagram(dir, cfg, &d)?;
            Ok(summarize_diagram(&d, &cfg.continuation.landmarks))
        }
        Err((d, e)) => {
            if matches!(e, Error::InvalidArgument(_)) {
                return Err(e);
            }
            let written = write_diagram(dir, cfg, &d).unwrap_or_default();
            write_manifest(dir, &e, written)?;
            Err(e)
        }
    }
}
