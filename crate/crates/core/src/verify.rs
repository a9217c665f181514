//! Inequality harness. Each check evaluates the left side of a bound either
//! exactly (closed-form cell MGFs) or by a Monte Carlo upper confidence
//! bound, compares it with a right side computed exactly, and records one
//! report row per tilt. Tilts outside the bound's window are refused and
//! counted rather than evaluated.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cascade::{halve_combine, halving_bound, split_lower_bound, split_upper_bound};
use crate::error::{Error, Result};
use crate::fields::{
    derive_seed, shift_grid, verify_reference_moment, FieldModel, Law, RngStream, SplitSpec,
};
use crate::mgf;
use crate::primitives::{le_window, log_pow, BoxSpec, QuadCert, ScalingFns};

/// Names of every inequality family the harness can check.
pub const ANCHORS: &[&str] = &[
    "quadratic-mgf",
    "moment-scale",
    "leak-bound",
    "halving-holder",
    "split-holder-upper",
    "split-holder-lower",
    "moderate-window",
    "theorem-bound",
];

pub const EXACT_TOLERANCE: f64 = 1e-9;

pub fn check_anchor(name: &str) -> Result<&'static str> {
    ANCHORS
        .iter()
        .find(|a| **a == name)
        .copied()
        .ok_or_else(|| Error::Config(format!("unknown anchor `{name}`")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Evidence {
    Exact,
    UpperConf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub anchor: String,
    pub instance: String,
    pub lambda: f64,
    pub window_ok: bool,
    pub evidence: Evidence,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub pass: bool,
    /// Hypotheses that were not met but did not stop the evaluation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Row {
    fn new(
        anchor: &str,
        instance: String,
        lambda: f64,
        evidence: Evidence,
        lhs: f64,
        rhs: f64,
    ) -> Self {
        let slack = rhs - lhs;
        let tol = match evidence {
            Evidence::Exact => EXACT_TOLERANCE,
            Evidence::UpperConf => 0.0,
        };
        Self {
            anchor: anchor.to_string(),
            instance,
            lambda,
            window_ok: true,
            evidence,
            lhs,
            rhs,
            slack,
            pass: slack >= -tol,
            note: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Report {
    pub rows: Vec<Row>,
    /// Grid points refused because they fall outside the bound's window.
    pub refused: usize,
}

impl Report {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Row> {
        self.rows.iter().filter(|r| !r.pass)
    }

    pub fn min_slack(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.slack)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn merge(&mut self, other: Report) {
        self.rows.extend(other.rows);
        self.refused += other.refused;
    }

    fn refuse(&mut self) {
        self.refused += 1;
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "anchor,instance,lambda,window_ok,evidence,lhs,rhs,slack,pass,note"
        )?;
        for r in &self.rows {
            let ev = match r.evidence {
                Evidence::Exact => "exact",
                Evidence::UpperConf => "upper-conf",
            };
            writeln!(
                w,
                "{},\"{}\",{},{},{},{},{},{},{},\"{}\"",
                r.anchor,
                r.instance,
                r.lambda,
                r.window_ok,
                ev,
                r.lhs,
                r.rhs,
                r.slack,
                r.pass,
                r.note.as_deref().unwrap_or("")
            )?;
        }
        Ok(())
    }
}

/// How left-hand sides are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Evaluation {
    #[default]
    Exact,
    MonteCarlo {
        samples: usize,
        #[serde(default = "default_confidence")]
        confidence: f64,
    },
}

fn default_confidence() -> f64 {
    mgf::DEFAULT_CONFIDENCE
}

/// Model, evaluation mode and base seed shared by the checks.
#[derive(Debug, Clone)]
pub struct Harness {
    pub model: FieldModel,
    pub eval: Evaluation,
    pub seed: u64,
}

fn fmt_box(b: &BoxSpec) -> String {
    b.intervals()
        .iter()
        .map(|(lo, hi)| format!("[{lo},{hi}]"))
        .collect::<Vec<_>>()
        .join("x")
}

impl Harness {
    pub fn new(model: FieldModel, eval: Evaluation, seed: u64) -> Self {
        Self { model, eval, seed }
    }

    fn evidence(&self) -> Evidence {
        match self.eval {
            Evaluation::Exact => Evidence::Exact,
            Evaluation::MonteCarlo { .. } => Evidence::UpperConf,
        }
    }

    /// CGF of the normalized integral over `b` at each tilt, exact or as the
    /// upper confidence bound. `None` where the exact CGF is infinite.
    pub fn lhs_cgf(&self, b: &BoxSpec, lambdas: &[f64], tag: &[u64]) -> Result<Vec<Option<f64>>> {
        match self.eval {
            Evaluation::Exact => {
                let classes = self.model.weight_classes(b)?;
                Ok(lambdas
                    .iter()
                    .map(|&l| self.model.exact_cgf_classes(&classes, b.volume(), l))
                    .collect())
            }
            Evaluation::MonteCarlo {
                samples,
                confidence,
            } => {
                let xs = self
                    .model
                    .normalized_samples(b, samples, derive_seed(self.seed, tag))?;
                lambdas
                    .iter()
                    .map(|&l| Ok(Some(mgf::empirical_cgf(&xs, l, confidence)?.upper)))
                    .collect()
            }
        }
    }

    fn exact(&self, b: &BoxSpec, lambda: f64) -> Result<Option<f64>> {
        self.model.exact_cgf(b, lambda)
    }

    /// Exact CGF of the leak through the cut at `r` of a box whose cut axis
    /// ends at `hi`, normalized by the cross-section volume.
    fn leak_cgf(&self, cross: Option<&BoxSpec>, r: f64, hi: f64, mu: f64) -> Result<Option<f64>> {
        match (self.model.leak_field(r, hi), cross) {
            (Some(field), Some(c)) => field.exact_cgf(c, mu),
            (None, _) => Ok(self.model.leak_law(r, hi).log_mgf(mu)),
            (Some(_), None) => Err(Error::InvalidArgument(
                "cross-section box required for d > 1".into(),
            )),
        }
    }

    /// The exponential-moment route for the leak constant.
    pub fn leak_constant(&self) -> Result<f64> {
        self.model.leak_constant()
    }

    /// `f_{B2}(lambda) <= a p lambda^2 + C1 q lambda^2 / (2r)` for the box
    /// `B2 = [c - r, c + r] x cross` cut at `c`, with `a` and `C1` taken as the
    /// exact quadratic ratios of the halves and the leak at the tilts the
    /// combinator uses. The window is checked with the model's leak constant.
    pub fn check_halving_bound(
        &self,
        cross: Option<&BoxSpec>,
        c: f64,
        r: f64,
        p: f64,
        lambdas: &[f64],
        axis: usize,
    ) -> Result<Report> {
        let anchor = "halving-holder";
        let d = self.model.dim;
        let c1 = self.leak_constant()?;
        let q = p / (p - 1.0);
        let cross_vol = cross.map_or(1.0, |b| b.volume());
        let b2 = BoxSpec::with_axis(cross, axis, (c - r, c + r))?;
        let left = BoxSpec::with_axis(cross, axis, (c - r, c))?;
        let right = BoxSpec::with_axis(cross, axis, (c, c + r))?;
        let instance = format!("{} cut {c} axis {} p {p}", fmt_box(&b2), axis + 1);
        let mut report = Report::default();
        let window_free = QuadCert::new(0.0, f64::MAX)?;
        let mut admitted = Vec::new();
        for &l in lambdas {
            if halve_combine(&window_free, p, c1, r, cross_vol.max(1.0 + 1e-9), d, l).is_ok() {
                admitted.push(l);
            } else {
                report.refuse();
            }
        }
        let lhs = self.lhs_cgf(&b2, &admitted, &[1, axis as u64])?;
        for (&l, lhs) in admitted.iter().zip(lhs) {
            let mu = p * l / std::f64::consts::SQRT_2;
            let nu = q * l / (2.0 * r).sqrt();
            let parts = (
                self.exact(&left, mu)?,
                self.exact(&right, mu)?,
                self.leak_cgf(cross, c, c + r, nu)?,
                lhs,
            );
            let (Some(fl), Some(fr), Some(fy), Some(lhs)) = parts else {
                report.refuse();
                continue;
            };
            let rhs = if l == 0.0 {
                0.0
            } else {
                let a = fl.max(fr) / (mu * mu);
                let leak = fy / (nu * nu);
                halving_bound(a, p, leak, r, l)
            };
            report.rows.push(Row::new(
                anchor,
                instance.clone(),
                l,
                self.evidence(),
                lhs,
                rhs,
            ));
        }
        Ok(report)
    }

    /// Both split inequalities for `[c - r, c + s] x cross` cut at `c`.
    /// The window is `C1 |q lambda / sqrt(r + s)| <= 1` for the leak.
    #[allow(clippy::too_many_arguments)]
    pub fn check_split_bounds(
        &self,
        cross: Option<&BoxSpec>,
        c: f64,
        r: f64,
        s: f64,
        p: f64,
        lambdas: &[f64],
        axis: usize,
    ) -> Result<Report> {
        let c1 = self.leak_constant()?;
        let q = p / (p - 1.0);
        let t = r + s;
        let whole = BoxSpec::with_axis(cross, axis, (c - r, c + s))?;
        let b1 = BoxSpec::with_axis(cross, axis, (c - r, c))?;
        let b2 = BoxSpec::with_axis(cross, axis, (c, c + s))?;
        let instance = format!("{} cut {c} axis {} p {p}", fmt_box(&whole), axis + 1);
        let leak_window = QuadCert::new(c1, 1.0 / c1)?;
        let mut report = Report::default();
        let admitted: Vec<f64> = lambdas
            .iter()
            .copied()
            .filter(|&l| leak_window.covers(q * l / t.sqrt()))
            .collect();
        report.refused += lambdas.len() - admitted.len();
        let scaled = |k: f64| admitted.iter().map(|l| l * k).collect::<Vec<_>>();
        let lhs_whole = self.lhs_cgf(&whole, &admitted, &[2, axis as u64, 0])?;
        let lhs_1 = self.lhs_cgf(&b1, &scaled((r / t).sqrt()), &[2, axis as u64, 1])?;
        let lhs_2 = self.lhs_cgf(&b2, &scaled((s / t).sqrt()), &[2, axis as u64, 2])?;
        for (i, &l) in admitted.iter().enumerate() {
            let nu = q * l / t.sqrt();
            let leak = match self.leak_cgf(cross, c, c + s, nu)? {
                Some(v) if l != 0.0 => v / (nu * nu),
                Some(_) => 0.0,
                None => {
                    report.refuse();
                    continue;
                }
            };
            let ratio = |b: &BoxSpec, mu: f64| -> Result<Option<f64>> {
                Ok(self
                    .exact(b, mu)?
                    .map(|v| if mu == 0.0 { 0.0 } else { v / (mu * mu) }))
            };
            let upper_parts = (
                ratio(&b1, p * l * (r / t).sqrt())?,
                ratio(&b2, p * l * (s / t).sqrt())?,
                lhs_whole[i],
            );
            if let (Some(a1), Some(a2), Some(lhs)) = upper_parts {
                let rhs = split_upper_bound(a1, a2, leak, r, s, p, l);
                report.rows.push(Row::new(
                    "split-holder-upper",
                    instance.clone(),
                    l,
                    self.evidence(),
                    lhs,
                    rhs,
                ));
            } else {
                report.refuse();
            }
            let lower_parts = (ratio(&whole, p * l)?, lhs_1[i], lhs_2[i]);
            if let (Some(a), Some(f1), Some(f2)) = lower_parts {
                let rhs = split_lower_bound(a, leak, r, s, p, l);
                report.rows.push(Row::new(
                    "split-holder-lower",
                    instance.clone(),
                    l,
                    self.evidence(),
                    f1 + f2,
                    rhs,
                ));
            } else {
                report.refuse();
            }
        }
        Ok(report)
    }

    /// `f_{v,C2}(lambda) <= C2 lambda^2` over a family of boxes of volume `v`
    /// and width at least `C2`, each shifted over a grid, for tilts in the
    /// window `C2 |lambda| <= sqrt(S(v)) / log^(d-1) v` with `v >= C2^d`.
    pub fn check_moderate_bound(
        &self,
        c2: f64,
        volumes: &[f64],
        lambdas: &[f64],
        shifts_per_axis: usize,
    ) -> Result<Report> {
        let d = self.model.dim;
        let sc = ScalingFns::new(d);
        let shifts = shift_grid(d, shifts_per_axis);
        let mut report = Report::default();
        for (vi, &v) in volumes.iter().enumerate() {
            let limit = sc.s(v).sqrt() / log_pow(v, d as i32 - 1);
            if !le_window(c2.powi(d as i32), v) {
                report.refused += lambdas.len();
                continue;
            }
            let admitted: Vec<f64> = lambdas
                .iter()
                .copied()
                .filter(|l| le_window(c2 * l.abs(), limit))
                .collect();
            report.refused += lambdas.len() - admitted.len();
            let mut sup = vec![0.0f64; admitted.len()];
            let mut defined = vec![true; admitted.len()];
            for (bi, sides) in moderate_boxes(d, v, c2).iter().enumerate() {
                let base = BoxSpec::from_sides(sides)?;
                let boxes: Vec<BoxSpec> = match self.eval {
                    Evaluation::Exact => shifts.iter().map(|s| base.shifted(s)).collect(),
                    // integer alignment carries the most variance; MC uses it alone
                    Evaluation::MonteCarlo { .. } => vec![base],
                };
                for (si, b) in boxes.iter().enumerate() {
                    let vals = self.lhs_cgf(b, &admitted, &[3, vi as u64, bi as u64, si as u64])?;
                    for (k, val) in vals.into_iter().enumerate() {
                        match val {
                            Some(x) => sup[k] = sup[k].max(x),
                            None => defined[k] = false,
                        }
                    }
                }
            }
            for (k, &l) in admitted.iter().enumerate() {
                if !defined[k] {
                    report.refuse();
                    continue;
                }
                report.rows.push(Row::new(
                    "moderate-window",
                    format!("v {v} C2 {c2}"),
                    l,
                    self.evidence(),
                    sup[k],
                    c2 * l * l,
                ));
            }
        }
        Ok(report)
    }

    /// `log E exp(lambda int_B X) <= C (vol B) lambda^2` at
    /// `lambda = fraction / (C log^d vol B)`. Fractions above 1 are outside the
    /// window and refused. Boxes narrower than `C` are evaluated and flagged.
    pub fn check_theorem(
        &self,
        c_final: f64,
        boxes: &[BoxSpec],
        fractions: &[f64],
    ) -> Result<Report> {
        let d = self.model.dim as i32;
        let mut report = Report::default();
        for (bi, b) in boxes.iter().enumerate() {
            let vol = b.volume();
            if !(vol > 1.0) {
                return Err(Error::InvalidBox(format!(
                    "theorem check needs vol B > 1, got {vol}"
                )));
            }
            let edge = 1.0 / (c_final * log_pow(vol, d));
            let admitted: Vec<f64> = fractions
                .iter()
                .copied()
                .filter(|f| le_window(f.abs(), 1.0))
                .collect();
            report.refused += fractions.len() - admitted.len();
            let lambdas: Vec<f64> = admitted.iter().map(|f| f * edge).collect();
            let normalized: Vec<f64> = lambdas.iter().map(|l| l * vol.sqrt()).collect();
            let lhs = self.lhs_cgf(b, &normalized, &[4, bi as u64])?;
            let note = (b.width() < c_final).then(|| format!("width {} < C {c_final}", b.width()));
            for (k, &l) in lambdas.iter().enumerate() {
                let Some(lhs) = lhs[k] else {
                    report.refuse();
                    continue;
                };
                let mut row = Row::new(
                    "theorem-bound",
                    format!("{} fraction {}", fmt_box(b), admitted[k]),
                    l,
                    self.evidence(),
                    lhs,
                    c_final * vol * l * l,
                );
                row.note = note.clone();
                report.rows.push(row);
            }
        }
        Ok(report)
    }

    /// Leak bounds. For `d = 1` the scalar leak satisfies
    /// `log E exp(lambda Y) <= C1 lambda^2` for `C1 |lambda| <= 1`; for `d >= 2`
    /// the leak integral over the cross-section satisfies
    /// `log E exp(lambda int_B Y) <= C1 (vol B) lambda^2` in the same window.
    /// Integer cuts are checked to give an identically zero coupled leak.
    pub fn check_leak_bounds(
        &self,
        cuts: &[LeakCut],
        lambdas: &[f64],
        c1: Option<f64>,
        replicas: u64,
    ) -> Result<Report> {
        let c1 = match c1 {
            Some(c) => c,
            None => self.leak_constant()?,
        };
        let mut report = Report::default();
        for (ci, cut) in cuts.iter().enumerate() {
            let cross = cut.cross.as_ref();
            let instance = format!(
                "axis {} cut {} in [{}, {}] cross {}",
                cut.axis + 1,
                cut.r,
                cut.a,
                cut.b,
                cross.map_or("-".into(), fmt_box)
            );
            if cut.r.fract() == 0.0 {
                let whole = BoxSpec::with_axis(cross, cut.axis, (cut.a, cut.b))?;
                let split = SplitSpec {
                    axis: cut.axis,
                    r: cut.r,
                };
                let mut worst: f64 = 0.0;
                for rep in 0..replicas {
                    let stream = RngStream::new(derive_seed(self.seed, &[5, ci as u64]), rep);
                    worst = worst.max(self.model.coupled_leak(&whole, &split, &stream)?.abs());
                }
                let mut row = Row::new("leak-bound", instance, 0.0, Evidence::Exact, worst, 0.0);
                row.pass = worst == 0.0;
                report.rows.push(row);
                continue;
            }
            let cross_vol = cross.map_or(1.0, |b| b.volume());
            for &l in lambdas {
                if !le_window(c1 * l.abs(), 1.0) {
                    report.refuse();
                    continue;
                }
                // normalized CGF at lambda sqrt(vol) is the raw CGF at lambda
                let Some(lhs) = self.leak_cgf(cross, cut.r, cut.b, l * cross_vol.sqrt())? else {
                    report.refuse();
                    continue;
                };
                report.rows.push(Row::new(
                    "leak-bound",
                    instance.clone(),
                    l,
                    Evidence::Exact,
                    lhs,
                    c1 * cross_vol * l * l,
                ));
            }
        }
        Ok(report)
    }

    /// `E exp(eps |int_{B+s} X|) <= 2` on the unit reference cube.
    pub fn check_reference_moment(
        &self,
        eps: f64,
        shifts_per_axis: usize,
        samples: usize,
    ) -> Result<Report> {
        let unit = BoxSpec::cube(self.model.dim, 1.0)?;
        let check = verify_reference_moment(
            &self.model,
            &unit,
            eps,
            &shift_grid(self.model.dim, shifts_per_axis),
            samples,
            derive_seed(self.seed, &[6]),
        )?;
        let evidence = if check.exact {
            Evidence::Exact
        } else {
            Evidence::UpperConf
        };
        let mut row = Row::new(
            "moment-scale",
            format!("eps {eps}"),
            0.0,
            evidence,
            check.worst,
            2.0,
        );
        row.pass = check.pass;
        Ok(Report {
            rows: vec![row],
            refused: 0,
        })
    }
}

/// `log MGF(lambda) <= lambda^2` for each law on the grid. Laws violating
/// `E exp|Z| <= 2` are an error.
pub fn check_quadratic_mgf(laws: &[Law], grid: &[f64]) -> Result<Report> {
    let mut report = Report::default();
    for (i, law) in laws.iter().enumerate() {
        mgf::quadratic_mgf_check(law, &[])?;
        for &l in grid {
            if l.abs() > 1.0 {
                report.refuse();
                continue;
            }
            let lhs = law
                .log_mgf(l)
                .ok_or_else(|| Error::InvalidArgument(format!("law {i} has no MGF at {l}")))?;
            let mut row = Row::new(
                "quadratic-mgf",
                format!("law {i}"),
                l,
                Evidence::Exact,
                lhs,
                l * l,
            );
            row.pass = row.slack >= -1e-12;
            report.rows.push(row);
        }
    }
    Ok(report)
}

/// A cut for [`Harness::check_leak_bounds`]: the box `[a, b] x cross` cut at
/// `x_axis = r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakCut {
    pub axis: usize,
    pub r: f64,
    pub a: f64,
    pub b: f64,
    #[serde(default)]
    pub cross: Option<BoxSpec>,
}

/// Side vectors of volume `v` and width at least `c2`: the cube, plus for
/// `d >= 2` boxes elongated along each axis in turn.
pub fn moderate_boxes(d: usize, v: f64, c2: f64) -> Vec<Vec<f64>> {
    let mut out = vec![vec![v.powf(1.0 / d as f64); d]];
    if d >= 2 {
        let thin = c2.max(1.0);
        let long = v / thin.powi(d as i32 - 1);
        if long > thin * (1.0 + 1e-12) {
            for axis in 0..d {
                let mut sides = vec![thin; d];
                sides[axis] = long;
                out.push(sides);
            }
        }
    }
    out
}

/// Runs `check` with the split axis moved to `axis` on a permuted copy of the
/// cross-section, so exchangeable models give identical rows.
pub fn permuted_cross(cross: Option<&BoxSpec>) -> Option<BoxSpec> {
    cross.map(|b| {
        let mut iv = b.intervals().to_vec();
        iv.reverse();
        BoxSpec::new(iv).expect("permutation of a valid box")
    })
}
