//! JSON run configuration. Every field has a default, so a config file only
//! lists what it changes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bifurcation::SwitchOpts;
use crate::continuation::{Controls, Guard, Problem};
use crate::error::{Error, Result};
use crate::evolution::EvolveOpts;
use crate::grid::Grid;
use crate::model::{ModelSpec, PotentialSpec};
use crate::solver::NewtonOpts;
use crate::variational::FlowOpts;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub half_width: f64,
    pub nodes: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            half_width: 30.0,
            nodes: 3000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuationConfig {
    pub ds_init: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub e_min: f64,
    pub e_max: f64,
    pub norm_max: f64,
    pub max_steps: usize,
    pub loop_tol: f64,
    pub landmarks: Vec<f64>,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        let c = Controls::default();
        Self {
            ds_init: c.ds_init,
            ds_min: c.ds_min,
            ds_max: c.ds_max,
            e_min: c.e_min,
            e_max: c.e_max,
            norm_max: c.norm_max,
            max_steps: c.max_steps,
            loop_tol: c.loop_tol,
            landmarks: vec![25.0, 50.0, 100.0, 200.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub tol_residual: f64,
    pub max_iter: usize,
    /// Event localisation threshold; `null` means `10⁻⁸‖L‖∞`.
    pub event_tol: Option<f64>,
    /// GSS slope threshold; `null` means `10⁻⁶·max(1, Q)`.
    pub slope_tol: Option<f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        let n = NewtonOpts::default();
        Self {
            tol_residual: n.tol_residual,
            max_iter: n.max_iter,
            event_tol: None,
            slope_tol: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum ExplicitSeed {
    /// Two-column `x,phi` CSV on the run grid, at the given E.
    Profile { path: PathBuf, e: f64 },
    /// Closed-form `V ≡ 0` soliton at the given E.
    FreeSoliton { e: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VariationalConfig {
    pub mu_min: f64,
    pub mu_max: f64,
    pub count: usize,
    pub dt: f64,
    pub grad_tol: f64,
    pub max_steps: usize,
}

impl Default for VariationalConfig {
    fn default() -> Self {
        let f = FlowOpts::default();
        Self {
            mu_min: 0.1,
            mu_max: 10.0,
            count: 25,
            dt: f.dt,
            grad_tol: f.grad_tol,
            max_steps: f.max_steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedConfig {
    /// Amplitude of the normal-form seed off the trivial branch.
    pub trivial_amplitude: f64,
    /// Pitchfork perturbation scale relative to `‖φ*‖`.
    pub relative_amplitude: f64,
    pub explicit: Option<ExplicitSeed>,
    pub variational: VariationalConfig,
}

impl Default for SeedConfig {
    fn default() -> Self {
        let s = SwitchOpts::default();
        Self {
            trivial_amplitude: s.trivial_amplitude,
            relative_amplitude: s.relative_amplitude,
            explicit: None,
            variational: VariationalConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub epsilon: f64,
    pub t_end: f64,
    pub dt: f64,
    pub sample_every: usize,
    /// Seed of the random perturbation direction.
    pub seed: u64,
    /// Stable points are probed up to this E (the splitting error grows
    /// with E at fixed dt).
    pub e_max: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        let e = EvolveOpts::default();
        Self {
            epsilon: 1e-3,
            t_end: e.t_end,
            dt: e.dt,
            sample_every: e.sample_every,
            seed: 0,
            e_max: 5.0,
        }
    }
}

impl ProbeConfig {
    pub fn evolve_opts(&self) -> EvolveOpts {
        EvolveOpts {
            t_end: self.t_end,
            dt: self.dt,
            sample_every: self.sample_every,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub model: ModelSpec,
    pub continuation: ContinuationConfig,
    pub tolerances: Tolerances,
    pub seeds: SeedConfig,
    pub probes: ProbeConfig,
    pub output: PathBuf,
    /// Maximum number of branches in a diagram.
    pub budget: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig::default(),
            model: ModelSpec {
                potential: PotentialSpec::double_well(2.0, 2.0, 1.0),
                gamma: -1.0,
                power: 2.0,
            },
            continuation: ContinuationConfig::default(),
            tolerances: Tolerances::default(),
            seeds: SeedConfig::default(),
            probes: ProbeConfig::default(),
            output: PathBuf::from("out"),
            budget: 16,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidArgument(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |s: String| Err(Error::InvalidArgument(s));
        self.model.validate()?;
        Grid::new(self.grid.half_width, self.grid.nodes)?;
        self.controls().validate()?;
        let t = &self.tolerances;
        for (name, v) in [("event_tol", t.event_tol), ("slope_tol", t.slope_tol)] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return bad(format!("{name} must be positive, got {v}"));
                }
            }
        }
        let s = &self.seeds;
        if !(s.trivial_amplitude > 0.0) || !(s.relative_amplitude > 0.0) {
            return bad("seed amplitudes must be positive".into());
        }
        let v = &s.variational;
        if !(v.mu_min > 0.0 && v.mu_max > v.mu_min) || v.count == 0 || !(v.dt > 0.0) || !(v.grad_tol > 0.0) {
            return bad("variational scan needs 0 < mu_min < mu_max, count ≥ 1, dt and grad_tol > 0".into());
        }
        let pr = &self.probes;
        if !(pr.epsilon >= 0.0) || !(pr.e_max > 0.0) {
            return bad("probe epsilon must be ≥ 0 and e_max > 0".into());
        }
        pr.evolve_opts().validate()?;
        if self.budget == 0 {
            return bad("branch budget must be at least 1".into());
        }
        match &s.explicit {
            Some(ExplicitSeed::Profile { e, .. }) | Some(ExplicitSeed::FreeSoliton { e }) if !(*e > 0.0) => {
                bad(format!("explicit seed needs E > 0, got {e}"))
            }
            Some(ExplicitSeed::FreeSoliton { .. }) if self.model.gamma >= 0.0 => {
                bad("the closed-form soliton needs gamma < 0".into())
            }
            _ => Ok(()),
        }
    }

    pub fn problem(&self) -> Result<Problem> {
        Problem::new(Grid::new(self.grid.half_width, self.grid.nodes)?, self.model)
    }

    pub fn controls(&self) -> Controls {
        let c = &self.continuation;
        Controls {
            ds_init: c.ds_init,
            ds_min: c.ds_min,
            ds_max: c.ds_max,
            e_min: c.e_min,
            e_max: c.e_max,
            norm_max: c.norm_max,
            max_steps: c.max_steps,
            loop_tol: c.loop_tol,
            landmarks: c.landmarks.clone(),
            newton: NewtonOpts {
                tol_residual: self.tolerances.tol_residual,
                max_iter: self.tolerances.max_iter,
                ..NewtonOpts::default()
            },
            guard: Guard::None,
        }
    }

    pub fn switch_opts(&self) -> SwitchOpts {
        SwitchOpts {
            relative_amplitude: self.seeds.relative_amplitude,
            trivial_amplitude: self.seeds.trivial_amplitude,
            ..SwitchOpts::default()
        }
    }

    pub fn flow_opts(&self) -> FlowOpts {
        let v = &self.seeds.variational;
        FlowOpts {
            dt: v.dt,
            grad_tol: v.grad_tol,
            max_steps: v.max_steps,
            ..FlowOpts::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_roundtrip() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let back = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        let partial = RunConfig::from_json(r#"{"grid": {"nodes": 801}, "budget": 4}"#).unwrap();
        assert_eq!(partial.grid.nodes, 801);
        assert_eq!(partial.grid.half_width, 30.0);
        assert_eq!(partial.budget, 4);
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            r#"{"continuation": {"e_min": 2.0, "e_max": 1.0}}"#,
            r#"{"tolerances": {"tol_residual": -1.0}}"#,
            r#"{"tolerances": {"event_tol": 0.0}}"#,
            r#"{"grid": {"nodes": 2}}"#,
            r#"{"budget": 0}"#,
            r#"{"bogus": 1}"#,
            r#"{"seeds": {"explicit": {"kind": "free_soliton", "e": -1.0}}}"#,
        ] {
            assert!(RunConfig::from_json(text).is_err(), "{text}");
        }
    }
}
