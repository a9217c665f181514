//! Boxes, quadratic certificates, volume scalings and the constant registry.
//!
//! Everything here is an immutable value type. Certificate arithmetic is
//! conservative: coefficients only ever round up and radii only round down.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack applied whenever a certificate is produced or gated.
pub const CERT_SLACK: f64 = 1e-12;

/// Round a coefficient up by [`CERT_SLACK`].
pub fn round_up(x: f64) -> f64 {
    if x >= 0.0 {
        x * (1.0 + CERT_SLACK)
    } else {
        x * (1.0 - CERT_SLACK)
    }
}

/// Round a radius down by [`CERT_SLACK`].
pub fn round_down(x: f64) -> f64 {
    if x >= 0.0 {
        x * (1.0 - CERT_SLACK)
    } else {
        x * (1.0 + CERT_SLACK)
    }
}

/// `lhs <= rhs` with the slack counted against the caller. Bitwise-equal
/// sides pass, so parameters may sit exactly on a threshold.
pub fn le_strict(lhs: f64, rhs: f64) -> bool {
    lhs == rhs || round_up(lhs) <= round_down(rhs)
}

/// `lhs <= rhs` up to the slack; used for window membership, where both sides
/// are continuous in the tilt and the closed boundary is admissible.
pub fn le_window(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs + CERT_SLACK * rhs.abs().max(lhs.abs())
}

/// Axis-aligned box `[alpha_1, beta_1] x ... x [alpha_d, beta_d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    intervals: Vec<(f64, f64)>,
}

impl BoxSpec {
    pub fn new(intervals: Vec<(f64, f64)>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::InvalidBox("box needs at least one axis".into()));
        }
        for (j, &(lo, hi)) in intervals.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidBox(format!(
                    "axis {} has interval [{lo}, {hi}]",
                    j + 1
                )));
            }
        }
        Ok(Self { intervals })
    }

    /// `[0, sides_1] x ... x [0, sides_d]`.
    pub fn from_sides(sides: &[f64]) -> Result<Self> {
        Self::new(sides.iter().map(|&s| (0.0, s)).collect())
    }

    pub fn cube(dim: usize, side: f64) -> Result<Self> {
        Self::from_sides(&vec![side; dim])
    }

    pub fn dim(&self) -> usize {
        self.intervals.len()
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn side(&self, axis: usize) -> f64 {
        let (lo, hi) = self.intervals[axis];
        hi - lo
    }

    pub fn sides(&self) -> impl Iterator<Item = f64> + '_ {
        self.intervals.iter().map(|(lo, hi)| hi - lo)
    }

    pub fn volume(&self) -> f64 {
        self.sides().product()
    }

    pub fn width(&self) -> f64 {
        self.sides().fold(f64::INFINITY, f64::min)
    }

    pub fn volume_width(&self) -> (f64, f64) {
        (self.volume(), self.width())
    }

    pub fn shifted(&self, shift: &[f64]) -> Self {
        assert_eq!(shift.len(), self.dim(), "shift dimension mismatch");
        Self {
            intervals: self
                .intervals
                .iter()
                .zip(shift)
                .map(|(&(lo, hi), s)| (lo + s, hi + s))
                .collect(),
        }
    }

    /// The `(d-1)`-dimensional cross-section obtained by dropping `axis`.
    pub fn drop_axis(&self, axis: usize) -> Option<Self> {
        if self.dim() == 1 {
            return None;
        }
        let mut intervals = self.intervals.clone();
        intervals.remove(axis);
        Some(Self { intervals })
    }

    /// Insert `interval` as a new axis at position `axis`.
    pub fn with_axis(cross: Option<&BoxSpec>, axis: usize, interval: (f64, f64)) -> Result<Self> {
        let mut intervals = cross.map(|b| b.intervals.clone()).unwrap_or_default();
        intervals.insert(axis, interval);
        Self::new(intervals)
    }

    /// Replace the interval on `axis`.
    pub fn with_interval(&self, axis: usize, interval: (f64, f64)) -> Result<Self> {
        let mut intervals = self.intervals.clone();
        intervals[axis] = interval;
        Self::new(intervals)
    }
}

/// Result of [`halve_longest`].
#[derive(Debug, Clone, PartialEq)]
pub struct Halving {
    pub half: BoxSpec,
    /// Zero-based axis that was halved.
    pub axis: usize,
    /// Half of the halved side, so the original side is `2 r`.
    pub r: f64,
}

/// Keep the left half of `b` along its longest side. Ties go to the lowest axis.
pub fn halve_longest(b: &BoxSpec) -> Halving {
    let mut axis = 0;
    let mut longest = b.side(0);
    for j in 1..b.dim() {
        let s = b.side(j);
        if s > longest {
            longest = s;
            axis = j;
        }
    }
    let (lo, hi) = b.intervals[axis];
    let r = (hi - lo) / 2.0;
    let mut intervals = b.intervals.clone();
    intervals[axis] = (lo, lo + r);
    Halving {
        half: BoxSpec { intervals },
        axis,
        r,
    }
}

/// Quadratic domination certificate: `f(lambda) <= a lambda^2` for `|lambda| <= delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadCert {
    pub a: f64,
    pub delta: f64,
}

impl QuadCert {
    pub fn new(a: f64, delta: f64) -> Result<Self> {
        if !(a >= 0.0 && delta > 0.0) || a.is_nan() {
            return Err(Error::InvalidCertificate { a, delta });
        }
        Ok(Self { a, delta })
    }

    /// Build with conservative rounding of both components.
    pub fn conservative(a: f64, delta: f64) -> Result<Self> {
        Self::new(round_up(a), round_down(delta))
    }

    /// Whether `self` is at least as strong as `other`.
    pub fn subsumes(&self, other: &QuadCert) -> bool {
        self.a <= other.a && self.delta >= other.delta
    }

    pub fn bound(&self, lambda: f64) -> Option<f64> {
        (lambda.abs() <= self.delta).then_some(self.a * lambda * lambda)
    }

    pub fn covers(&self, lambda: f64) -> bool {
        le_window(lambda.abs(), self.delta)
    }
}

pub fn cert_subsumes(c1: &QuadCert, c2: &QuadCert) -> bool {
    c1.subsumes(c2)
}

/// `R(v) = v^(1/d)`, `S(v) = v^((d-1)/d)` and the power-of-log convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScalingFns {
    pub dim: usize,
}

impl ScalingFns {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        Self { dim }
    }

    /// Longest-side scale of a volume-`v` box.
    pub fn r(&self, v: f64) -> f64 {
        if self.dim == 1 {
            v
        } else {
            v.powf(1.0 / self.dim as f64)
        }
    }

    /// Cross-section scale of a volume-`v` box.
    pub fn s(&self, v: f64) -> f64 {
        if self.dim == 1 {
            1.0
        } else {
            v.powf((self.dim - 1) as f64 / self.dim as f64)
        }
    }

    /// `log^(d-1) x` under the convention `log^0 = 1`.
    pub fn log_cross(&self, x: f64) -> f64 {
        log_pow(x, self.dim as i32 - 1)
    }
}

/// `(ln x)^k`, with `log^0 x = 1` for every `x`, including `x <= 1`.
pub fn log_pow(x: f64, k: i32) -> f64 {
    if k == 0 {
        1.0
    } else {
        x.ln().powi(k)
    }
}

/// The constants threaded through a certification run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConstants {
    pub dim: usize,
    /// Exponential-moment scale of the reference box.
    pub eps: f64,
    /// Leak constant.
    pub leak: f64,
    /// Constant of the moderate regime.
    pub moderate: f64,
    /// Final constant.
    pub final_constant: f64,
    /// Chain margin used to size the volume-doubling chain.
    pub chain_margin: f64,
    /// Constant of the chain tail sum.
    pub tail: f64,
}

impl EngineConstants {
    /// Names of the registry invariants that fail, empty when consistent.
    pub fn violations(&self) -> Vec<&'static str> {
        let d = self.dim as f64;
        let mut bad = Vec::new();
        if !(self.eps > 0.0) {
            bad.push("eps > 0");
        }
        if !(self.leak <= self.moderate && self.moderate <= self.final_constant) {
            bad.push("leak <= moderate <= final");
        }
        if self.chain_margin < 2.0 * (2.0 * d).powi(self.dim as i32 - 1) {
            bad.push("chain margin >= 2 (2d)^(d-1)");
        }
        let floor = self.moderate.max((1.0 / d).exp()).max(std::f64::consts::E);
        if self.final_constant < floor {
            bad.push("final >= max(moderate, e^(1/d), e)");
        }
        bad
    }
}
