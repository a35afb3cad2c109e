//! Orbital-stability tags from the Morse counts and the slope `dQ/dE`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::continuation::{Branch, BranchPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
    Indeterminate,
}

impl Stability {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stability::Stable => "stable",
            Stability::Unstable => "unstable",
            Stability::Indeterminate => "indeterminate",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "stable" => Some(Stability::Stable),
            "unstable" => Some(Stability::Unstable),
            "indeterminate" => Some(Stability::Indeterminate),
            _ => None,
        }
    }
}

impl fmt::Display for Stability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityReason {
    NoNegativeDirection,
    OneNegativeSlopePositive,
    OneNegativeSlopeNegative,
    SeveralNegative,
    KernelDegenerate,
    SlopeNearZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StabilityTag {
    pub value: Stability,
    pub reason: StabilityReason,
}

impl Default for StabilityTag {
    fn default() -> Self {
        Self {
            value: Stability::Indeterminate,
            reason: StabilityReason::KernelDegenerate,
        }
    }
}

/// Default slope tolerance `10⁻⁶·max(1, Q)`.
pub fn default_slope_tol(charge: f64) -> f64 {
    1e-6 * charge.max(1.0)
}

/// Decision table on `n = morse_plus + morse_minus`:
/// `n ≥ 2` unstable; otherwise an unexplained kernel of `L₊` or a flat slope
/// is indeterminate; `n = 0` stable; `n = 1` follows the sign of `dQ/dE`.
pub fn classify(
    morse_plus: usize,
    morse_minus: usize,
    slope: f64,
    degenerate_kernel: bool,
    slope_tol: f64,
) -> StabilityTag {
    use Stability::*;
    use StabilityReason::*;
    let n = morse_plus + morse_minus;
    let tag = |value, reason| StabilityTag { value, reason };
    if n >= 2 {
        return tag(Unstable, SeveralNegative);
    }
    if degenerate_kernel {
        return tag(Indeterminate, KernelDegenerate);
    }
    if n == 0 {
        return tag(Stable, NoNegativeDirection);
    }
    if !slope.is_finite() || slope.abs() <= slope_tol {
        tag(Indeterminate, SlopeNearZero)
    } else if slope > 0.0 {
        tag(Stable, OneNegativeSlopePositive)
    } else {
        tag(Unstable, OneNegativeSlopeNegative)
    }
}

pub fn classify_gss(p: &BranchPoint, slope_tol: f64) -> StabilityTag {
    classify(
        p.spectral.morse_plus,
        p.spectral.morse_minus,
        p.slope_dqde,
        p.has_degenerate_kernel(),
        slope_tol,
    )
}

/// Maximal run of equal tags along a branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilitySegment {
    pub value: Stability,
    pub first: usize,
    pub last: usize,
    pub e_start: f64,
    pub e_end: f64,
}

/// Re-tags every point with the default slope tolerance and returns the
/// stable/unstable segments.
pub fn annotate_branch(branch: &mut Branch) -> Vec<StabilitySegment> {
    for p in branch.points.iter_mut() {
        p.stability = classify_gss(p, default_slope_tol(p.functionals.charge));
    }
    segments(branch)
}

pub fn segments(branch: &Branch) -> Vec<StabilitySegment> {
    let mut out: Vec<StabilitySegment> = Vec::new();
    for (i, p) in branch.points.iter().enumerate() {
        match out.last_mut() {
            Some(s) if s.value == p.stability.value => {
                s.last = i;
                s.e_end = p.e;
            }
            _ => out.push(StabilitySegment {
                value: p.stability.value,
                first: i,
                last: i,
                e_start: p.e,
                e_end: p.e,
            }),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decision_table() {
        let t = |mp, mm, s, k| classify(mp, mm, s, k, 1e-6).value;
        assert_eq!(t(0, 0, -1.0, false), Stability::Stable);
        assert_eq!(t(1, 0, 0.5, false), Stability::Stable);
        assert_eq!(t(1, 0, -0.5, false), Stability::Unstable);
        assert_eq!(t(2, 0, 0.5, false), Stability::Unstable);
        assert_eq!(t(1, 1, 0.5, false), Stability::Unstable);
        assert_eq!(t(1, 0, 1e-9, false), Stability::Indeterminate);
        assert_eq!(t(1, 0, f64::NAN, false), Stability::Indeterminate);
        assert_eq!(t(1, 0, 0.5, true), Stability::Indeterminate);
        assert_eq!(t(0, 0, 0.5, true), Stability::Indeterminate);
        assert_eq!(classify(1, 0, 1e-9, false, 1e-6).reason, StabilityReason::SlopeNearZero);
    }

    #[test]
    fn tag_flips_with_slope_sign() {
        let before = classify(1, 0, 0.3, false, 1e-6);
        let after = classify(1, 0, -0.3, false, 1e-6);
        assert_ne!(before.value, after.value);
    }

    #[test]
    fn names_roundtrip() {
        for s in [Stability::Stable, Stability::Unstable, Stability::Indeterminate] {
            assert_eq!(Stability::parse(s.as_str()), Some(s));
        }
        assert_eq!(Stability::parse("?"), None);
    }
}
