//! The volume-doubling cascade.
//!
//! Starting from a certificate `(a, delta)` on a base box with sides in
//! `[C, 2C)`, the cascade doubles the box one longest side at a time and
//! carries a certificate `A_k^2` along, choosing the Hölder exponent at each
//! step optimally. Past a threshold index `N` the radius settles at
//! `M_k = (1/C1) sqrt(S(vol B_k)/a) / log^(d-1) S(vol B_k)` and the
//! coefficient stays below `2a`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::primitives::{halve_longest, le_strict, le_window, BoxSpec, QuadCert, ScalingFns};

/// Upper end of the linear scan for the threshold index.
const MAX_THRESHOLD_INDEX: usize = 1_000_000;

/// One named inequality with its outcome. `slack` is `rhs - lhs`, so it is
/// nonnegative exactly when the inequality holds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedCheck {
    pub name: &'static str,
    pub pass: bool,
    pub slack: f64,
}

impl NamedCheck {
    pub fn le(name: &'static str, lhs: f64, rhs: f64) -> Self {
        Self {
            name,
            pass: le_strict(lhs, rhs),
            slack: rhs - lhs,
        }
    }

    /// Aggregate of many `lhs <= rhs` instances, keeping the worst slack.
    pub fn all_le(name: &'static str, pairs: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut out = Self {
            name,
            pass: true,
            slack: f64::INFINITY,
        };
        for (lhs, rhs) in pairs {
            out.pass &= le_strict(lhs, rhs);
            out.slack = out.slack.min(rhs - lhs);
        }
        out
    }

    /// Like [`NamedCheck::all_le`] with the window tolerance instead of strict rounding.
    pub fn all_le_window(name: &'static str, pairs: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut out = Self {
            name,
            pass: true,
            slack: f64::INFINITY,
        };
        for (lhs, rhs) in pairs {
            out.pass &= le_window(lhs, rhs);
            out.slack = out.slack.min(rhs - lhs);
        }
        out
    }

    pub fn flag(name: &'static str, pass: bool) -> Self {
        Self {
            name,
            pass,
            slack: if pass { 0.0 } else { -1.0 },
        }
    }
}

pub(crate) fn first_failure(checks: &[NamedCheck]) -> Result<()> {
    match checks.iter().find(|c| !c.pass) {
        None => Ok(()),
        Some(c) => Err(Error::CascadeCheck {
            check: c.name,
            detail: format!("slack {}", c.slack),
        }),
    }
}

/// `sum_{i >= 1} 2^(-i/(2d)) = 1 / (2^(1/(2d)) - 1)`.
pub fn half_root_series(dim: usize) -> f64 {
    1.0 / (2f64.powf(1.0 / (2.0 * dim as f64)) - 1.0)
}

/// Full record of one cascade run.
#[derive(Debug, Clone, Serialize)]
pub struct CascadeTrace {
    pub a0: f64,
    pub delta0: f64,
    pub base_side: f64,
    pub leak_constant: f64,
    pub dim: usize,
    pub box0: BoxSpec,
    pub n_axis: Vec<u32>,
    /// Total number of doublings `n_1 + ... + n_d`.
    pub n_total: usize,
    /// Threshold index `N`.
    pub threshold: usize,
    pub volumes: Vec<f64>,
    pub coeff: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub m: Vec<f64>,
    pub delta: Vec<f64>,
    pub a_infinity: f64,
    pub checks: Vec<NamedCheck>,
    pub result: Option<QuadCert>,
}

impl CascadeTrace {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn certificate(&self) -> Result<QuadCert> {
        first_failure(&self.checks)?;
        self.result.ok_or_else(|| Error::CascadeCheck {
            check: "certificate available",
            detail: "no certificate recorded".into(),
        })
    }

    pub fn check(&self, name: &str) -> Option<&NamedCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Closed-form sequences of the cascade, indexed by doubling count `k`.
#[derive(Debug, Clone, Copy)]
struct Sequences {
    sc: ScalingFns,
    a: f64,
    leak: f64,
    vol0: f64,
    /// `sqrt(C1 / R(vol B0))`
    step0: f64,
}

impl Sequences {
    fn volume(&self, k: usize) -> f64 {
        self.vol0 * 2f64.powi(k as i32)
    }

    /// `sqrt(C1 / R(vol B_k))`
    fn step(&self, k: usize) -> f64 {
        (self.leak / self.sc.r(self.volume(k))).sqrt()
    }

    fn coeff(&self, k: usize) -> f64 {
        let d = self.sc.dim as f64;
        let partial: f64 = (1..=k).map(|i| 2f64.powf(-(i as f64) / (2.0 * d))).sum();
        self.a.sqrt() + self.step0 * partial
    }

    fn p(&self, k: usize, coeff_k: f64) -> f64 {
        1.0 + self.step(k + 1) / coeff_k
    }

    fn m(&self, k: usize) -> f64 {
        let s = self.sc.s(self.volume(k));
        (s / self.a).sqrt() / self.sc.log_cross(s) / self.leak
    }
}

/// Smallest `N` meeting the three index conditions, together with the
/// resulting radius at `k = 0`.
fn threshold_index(seq: &Sequences, delta0: f64) -> Result<(usize, f64)> {
    let d = seq.sc.dim as f64;
    let series = half_root_series(seq.sc.dim);
    let root = 2f64.powf(1.0 / (2.0 * d));
    // log of prod_{k<N} p_k / sqrt 2
    let mut log_prod = 0.0;
    let mut coeff = seq.coeff(0);
    for n in 0..=MAX_THRESHOLD_INDEX {
        let c1 = 2f64.powf(-((n + 1) as f64) / (2.0 * d)) <= root - 1.0;
        let c3 = series <= (n as f64) / (2.0 * d) * std::f64::consts::LN_2;
        let delta_first = (log_prod + seq.m(n).ln()).exp();
        if c1 && c3 && delta_first <= delta0 {
            return Ok((n, delta_first));
        }
        let p = seq.p(n, coeff);
        log_prod += (p / std::f64::consts::SQRT_2).ln();
        coeff += seq.step(n + 1);
    }
    Err(Error::CascadeCheck {
        check: "threshold index exists",
        detail: format!("no N <= {MAX_THRESHOLD_INDEX} satisfies the index conditions"),
    })
}

/// Build the cascade trace and evaluate every named check.
///
/// Only malformed input is an error here; failed inequalities are recorded
/// in [`CascadeTrace::checks`]. See [`doubling_cascade`] for the strict form.
pub fn build_cascade(
    a: f64,
    delta: f64,
    base_side: f64,
    leak_constant: f64,
    box0: &BoxSpec,
    n_axis: &[u32],
) -> Result<CascadeTrace> {
    let dim = box0.dim();
    if n_axis.len() != dim {
        return Err(Error::InvalidArgument(format!(
            "{} doubling counts for a {dim}-dimensional box",
            n_axis.len()
        )));
    }
    if !(a > 0.0 && delta > 0.0 && base_side > 0.0 && leak_constant > 0.0) {
        return Err(Error::InvalidArgument(
            "a, delta, C and C1 must be positive".into(),
        ));
    }
    let sc = ScalingFns::new(dim);
    let vol0 = box0.volume();
    if dim > 1 && sc.s(vol0) <= 1.0 {
        return Err(Error::InvalidArgument(format!(
            "base volume {vol0} too small for the logarithmic radius"
        )));
    }
    let seq = Sequences {
        sc,
        a,
        leak: leak_constant,
        vol0,
        step0: (leak_constant / sc.r(vol0)).sqrt(),
    };
    let d = dim as f64;
    let n_total: usize = n_axis.iter().map(|&n| n as usize).sum();
    let (threshold, _) = threshold_index(&seq, delta)?;
    let last = n_total.max(threshold);

    let volumes: Vec<f64> = (0..=last).map(|k| seq.volume(k)).collect();
    let coeff: Vec<f64> = (0..=last).map(|k| seq.coeff(k)).collect();
    let p: Vec<f64> = (0..last).map(|k| seq.p(k, coeff[k])).collect();
    let q: Vec<f64> = p.iter().map(|&p| p / (p - 1.0)).collect();
    let m: Vec<f64> = (0..=last).map(|k| seq.m(k)).collect();
    let mut delta_seq = m.clone();
    for k in (0..threshold).rev() {
        delta_seq[k] = p[k] / std::f64::consts::SQRT_2 * delta_seq[k + 1];
    }
    let series = half_root_series(dim);
    let a_infinity = a.sqrt() + seq.step0 * series;

    let mut checks = Vec::new();
    let sides_ok = box0.sides().all(|s| s >= base_side && s < 2.0 * base_side);
    checks.push(NamedCheck::flag("base sides in [C, 2C)", sides_ok));
    checks.push(NamedCheck::le(
        "a >= C / R(vol B0)",
        base_side / sc.r(vol0),
        a,
    ));
    checks.push(NamedCheck::le("C >= C1", leak_constant, base_side));
    checks.push(NamedCheck::le(
        "A_inf <= sqrt(2a)",
        a_infinity,
        (2.0 * a).sqrt(),
    ));
    // Both q-bounds are increasing in k once they hold at k = 0 and in the
    // limit, so the finite range plus the asymptotic slope covers every k.
    checks.push(NamedCheck::all_le(
        "q_k <= sqrt(3a/C1) sqrt(R(vol B_k+1))",
        (0..last.max(1))
            .map(|k| {
                let qk = 1.0 + seq.coeff(k) / seq.step(k + 1);
                (
                    qk,
                    (3.0 * a / leak_constant * sc.r(seq.volume(k + 1))).sqrt(),
                )
            })
            .chain(std::iter::once((a_infinity, (3.0 * a).sqrt()))),
    ));
    checks.push(NamedCheck::all_le(
        "q_k <= sqrt(a R(vol B_k+1))",
        (0..last.max(1))
            .map(|k| {
                let qk = 1.0 + seq.coeff(k) / seq.step(k + 1);
                (qk, (a * sc.r(seq.volume(k + 1))).sqrt())
            })
            .chain(std::iter::once((a_infinity, (a * leak_constant).sqrt()))),
    ));
    // (p_k - 1) 2^((k+1)/(2d)) = step0 / A_k is decreasing, so k = 0 bounds all.
    checks.push(NamedCheck::all_le(
        "p_k - 1 <= 2^(-(k+1)/(2d))",
        (0..last.max(1)).map(|k| {
            let pk = seq.p(k, seq.coeff(k));
            (pk - 1.0, 2f64.powf(-((k + 1) as f64) / (2.0 * d)))
        }),
    ));
    checks.push(NamedCheck::le(
        "2^(-(N+1)/(2d)) <= 2^(1/(2d)) - 1",
        2f64.powf(-((threshold + 1) as f64) / (2.0 * d)),
        2f64.powf(1.0 / (2.0 * d)) - 1.0,
    ));
    checks.push(NamedCheck::le("Delta_0 <= delta", delta_seq[0], delta));
    checks.push(NamedCheck::le(
        "exp(sum 2^(-(k+1)/(2d))) <= 2^(N/(2d))",
        series,
        threshold as f64 / (2.0 * d) * std::f64::consts::LN_2,
    ));
    // Delta_k+1 is defined as a min that includes this term, so equality is
    // expected and only rounding noise separates the sides.
    checks.push(NamedCheck::all_le_window(
        "Delta_k+1 <= (sqrt2/p_k) Delta_k",
        (0..last).map(|k| {
            (
                delta_seq[k + 1],
                std::f64::consts::SQRT_2 / p[k] * delta_seq[k],
            )
        }),
    ));
    checks.push(NamedCheck::all_le(
        "Delta_k <= M_k",
        (0..threshold).map(|k| (delta_seq[k], m[k])),
    ));
    let log_prod: f64 = p[..threshold].iter().map(|p| p.ln()).sum();
    checks.push(NamedCheck::le(
        "p_0 ... p_N-1 <= 2^(N/(2d))",
        log_prod,
        threshold as f64 / (2.0 * d) * std::f64::consts::LN_2,
    ));
    checks.push(NamedCheck::le("N <= n", threshold as f64, n_total as f64));
    checks.push(halving_geometry(box0, n_axis, &sc));

    let result = if n_total >= threshold {
        Some(QuadCert::conservative(2.0 * a, m[n_total])?)
    } else {
        None
    };

    Ok(CascadeTrace {
        a0: a,
        delta0: delta,
        base_side,
        leak_constant,
        dim,
        box0: box0.clone(),
        n_axis: n_axis.to_vec(),
        n_total,
        threshold,
        volumes,
        coeff,
        p,
        q,
        m,
        delta: delta_seq,
        a_infinity,
        checks,
        result,
    })
}

/// Walk from the target box back to the base box by halving longest sides;
/// each halved side must be at least `R(vol)` and the walk must land on `B0`.
fn halving_geometry(box0: &BoxSpec, n_axis: &[u32], sc: &ScalingFns) -> NamedCheck {
    let sides: Vec<f64> = box0
        .sides()
        .zip(n_axis)
        .map(|(s, &n)| s * 2f64.powi(n as i32))
        .collect();
    let Ok(mut cur) = BoxSpec::from_sides(&sides) else {
        return NamedCheck::flag("halving walk lands on B0", false);
    };
    let n: u32 = n_axis.iter().sum();
    let mut slack = f64::INFINITY;
    for _ in 0..n {
        let vol = cur.volume();
        let h = halve_longest(&cur);
        slack = slack.min(2.0 * h.r - sc.r(vol));
        cur = h.half;
    }
    let lands = cur
        .sides()
        .zip(box0.sides())
        .all(|(a, b)| (a - b).abs() <= 1e-9 * b);
    NamedCheck {
        name: "halving walk lands on B0",
        pass: lands && slack >= -1e-9,
        slack,
    }
}

/// Strict form of [`build_cascade`]: any failed check is an error naming it.
pub fn doubling_cascade(
    a: f64,
    delta: f64,
    base_side: f64,
    leak_constant: f64,
    box0: &BoxSpec,
    n_axis: &[u32],
) -> Result<CascadeTrace> {
    let trace = build_cascade(a, delta, base_side, leak_constant, box0, n_axis)?;
    first_failure(&trace.checks)?;
    Ok(trace)
}

/// Smallest power of two `C` for which the cascade's size conditions on `C`
/// hold for every admissible `a` (worst case `a R(vol B0) = C`).
pub fn cascade_threshold(leak_constant: f64, dim: usize) -> Result<f64> {
    if !(leak_constant > 0.0) {
        return Err(Error::InvalidArgument("C1 must be positive".into()));
    }
    let series = half_root_series(dim);
    let ok = |c: f64| {
        let limit_ok = c.sqrt() + leak_constant.sqrt() * series <= (2.0 * c).sqrt();
        let q_ok = 1.0 + (2.0 * c / leak_constant).sqrt() <= (3.0 * c / leak_constant).sqrt();
        limit_ok && q_ok && c >= leak_constant
    };
    (0..1024)
        .map(|e| 2f64.powi(e))
        .find(|&c| ok(c))
        .ok_or(Error::SearchCap { cap_log2: 1023 })
}

/// Threshold index valid uniformly over base boxes with sides in `[C, 2C)`,
/// using the closed-form radius bound instead of a particular base box.
pub fn uniform_threshold_index(
    dim: usize,
    base_side: f64,
    leak_constant: f64,
    delta: f64,
) -> Result<usize> {
    let d = dim as f64;
    let series = half_root_series(dim);
    let root = 2f64.powf(1.0 / (2.0 * d));
    let scale = ((2.0 * base_side).powi(dim as i32) / base_side).sqrt() / leak_constant;
    (0..=MAX_THRESHOLD_INDEX)
        .find(|&n| {
            let nf = n as f64;
            let c1 = 2f64.powf(-(nf + 1.0) / (2.0 * d)) <= root - 1.0;
            let c3 = series <= nf / (2.0 * d) * std::f64::consts::LN_2;
            let radius = (series - nf / (2.0 * d) * std::f64::consts::LN_2).exp() * scale;
            c1 && c3 && radius <= delta
        })
        .ok_or(Error::CascadeCheck {
            check: "threshold index exists",
            detail: "uniform radius bound never drops below delta".into(),
        })
}
