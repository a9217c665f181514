//! Configuration schema and the `certify`, `verify` and `plotdata` commands.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cascade::{
    cascade_threshold, doubling_cascade, moderate_constant, scalar_leak_cert, theorem_constant,
    uniform_good_sweep, uniform_threshold_index, CascadeTrace, NamedCheck, TheoremConstant,
};
use crate::error::{Error, Result};
use crate::fields::{FieldModel, Law};
use crate::primitives::{log_pow, round_down, BoxSpec, QuadCert, ScalingFns, CERT_SLACK};
use crate::verify::{check_anchor, check_quadratic_mgf, Evaluation, Harness, LeakCut, Report};

/// Smallest leak constant the doubling cascade's size conditions accept.
pub const CASCADE_LEAK_FLOOR: f64 = 3.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 uses all cores.
    #[serde(default)]
    pub threads: usize,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub model: Option<FieldModel>,
    #[serde(default)]
    pub certify: Option<CertifyConfig>,
    #[serde(default)]
    pub verify: Option<VerifyConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyConfig {
    /// Required unless a model is given.
    #[serde(default)]
    pub dim: Option<usize>,
    /// Leak constant; computed from the model when absent.
    #[serde(default)]
    pub leak_constant: Option<f64>,
    /// Exponential-moment scale; computed from the model when absent.
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub chain_margin: Option<f64>,
    #[serde(default = "default_certify_cap")]
    pub search_cap_log2: u32,
}

fn default_certify_cap() -> u32 {
    1000
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default)]
    pub anchors: Vec<String>,
    #[serde(default)]
    pub evaluation: Evaluation,
    #[serde(default)]
    pub quadratic_mgf: Option<QuadraticSection>,
    #[serde(default)]
    pub moment_scale: Option<MomentSection>,
    #[serde(default)]
    pub leak: Option<LeakSection>,
    #[serde(default)]
    pub holder: Option<HolderSection>,
    #[serde(default)]
    pub moderate: Option<ModerateSection>,
    #[serde(default)]
    pub theorem: Option<TheoremSection>,
}

fn default_points() -> usize {
    21
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticSection {
    pub laws: Vec<Law>,
    #[serde(default = "default_step")]
    pub step: f64,
}

fn default_step() -> f64 {
    0.01
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentSection {
    /// Defaults to the model's moment scale.
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default = "default_shifts")]
    pub shifts_per_axis: usize,
    #[serde(default = "default_moment_samples")]
    pub samples: usize,
}

fn default_shifts() -> usize {
    4
}

fn default_moment_samples() -> usize {
    100_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeakSection {
    pub cuts: Vec<LeakCut>,
    #[serde(default = "default_points")]
    pub lambda_points: usize,
    #[serde(default = "default_replicas")]
    pub replicas: u64,
    #[serde(default)]
    pub leak_constant: Option<f64>,
}

fn default_replicas() -> u64 {
    100
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitCase {
    /// Cut position along the split axis.
    pub cut: f64,
    /// Length to the left of the cut.
    pub r: f64,
    /// Length to the right of the cut; equal to `r` when absent.
    #[serde(default)]
    pub s: Option<f64>,
    /// Zero-based split axis.
    #[serde(default)]
    pub axis: usize,
    /// Remaining axes, in order.
    #[serde(default)]
    pub cross: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HolderSection {
    pub p: Vec<f64>,
    pub cases: Vec<SplitCase>,
    pub lambda_radius: f64,
    #[serde(default = "default_points")]
    pub lambda_points: usize,
    /// Also rerun every case with the split moved to the last axis.
    #[serde(default)]
    pub permute_axes: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModerateSection {
    pub moderate: f64,
    pub volumes: Vec<f64>,
    /// Tilts as fractions of the window edge; entries above 1 are refused.
    pub fractions: Vec<f64>,
    #[serde(default = "default_shifts")]
    pub shifts_per_axis: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoremSection {
    /// Used directly when given; otherwise computed from the two constants below.
    #[serde(default)]
    pub final_constant: Option<f64>,
    #[serde(default)]
    pub leak_constant: Option<f64>,
    #[serde(default)]
    pub moderate: Option<f64>,
    #[serde(default = "default_theorem_cap")]
    pub search_cap_log2: u32,
    /// Multiplies the final constant before checking.
    #[serde(default = "one")]
    pub scale: f64,
    /// Side vectors of the boxes `[0, s_1] x ... x [0, s_d]`.
    pub boxes: Vec<Vec<f64>>,
    pub fractions: Vec<f64>,
}

fn default_theorem_cap() -> u32 {
    crate::cascade::DEFAULT_SEARCH_CAP_LOG2
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(m) = &cfg.model {
            m.validate()?;
        }
        if let Some(v) = &cfg.verify {
            for a in &v.anchors {
                check_anchor(a)?;
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    fn out_dir(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::Config("no output directory (set `out` or pass --out)".into()))
    }

    fn model(&self) -> Result<&FieldModel> {
        self.model
            .as_ref()
            .ok_or_else(|| Error::Config("a [model] section is required".into()))
    }

    /// Applies a sample-count override to Monte Carlo evaluation.
    pub fn override_samples(&mut self, samples: usize) {
        if let Some(v) = &mut self.verify {
            if let Evaluation::MonteCarlo { samples: s, .. } = &mut v.evaluation {
                *s = samples;
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CertifyOutcome {
    pub dim: usize,
    pub eps: f64,
    /// Leak constant of the model or config.
    pub leak_constant: f64,
    /// Leak constant fed to the cascade, at least [`CASCADE_LEAK_FLOOR`].
    pub cascade_leak_constant: f64,
    pub base_cert: QuadCert,
    pub cascade_side: f64,
    pub threshold_index: usize,
    pub cascade: CascadeTrace,
    pub lower_cert: QuadCert,
    pub sweep_cert: QuadCert,
    pub volume_floor: f64,
    pub moderate: f64,
    pub theorem: TheoremConstant,
}

impl CertifyOutcome {
    pub fn checks(&self) -> impl Iterator<Item = &NamedCheck> {
        self.cascade.checks.iter().chain(self.theorem.checks.iter())
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let t = &self.theorem;
        s.push_str(&format!("d       = {}\n", self.dim));
        s.push_str(&format!("eps     = {}\n", self.eps));
        s.push_str(&format!(
            "C1      = {} (cascade uses {})\n",
            self.leak_constant, self.cascade_leak_constant
        ));
        s.push_str(&format!("a       = {}\n", self.base_cert.a));
        s.push_str(&format!("delta   = {}\n", self.base_cert.delta));
        s.push_str(&format!(
            "side    = {} (cascade base cube)\n",
            self.cascade_side
        ));
        s.push_str(&format!("N       = {}\n", self.threshold_index));
        s.push_str(&format!("V       = {}\n", self.volume_floor));
        s.push_str(&format!("C2      = {}\n", self.moderate));
        s.push_str(&format!("Md      = {}\n", t.chain_margin));
        s.push_str(&format!("Nd      = {}\n", t.tail));
        s.push_str(&format!(
            "C       = {:e} (accepted candidate)\n",
            t.candidate
        ));
        s.push_str(&format!("C_final = {:e}\n", t.final_constant));
        s.push_str("checks:\n");
        for c in self.checks() {
            s.push_str(&format!(
                "  [{}] {} (slack {:e})\n",
                if c.pass { "ok" } else { "FAIL" },
                c.name,
                c.slack
            ));
        }
        s
    }
}

/// Full certification: base certificate from the moment scale, doubling
/// cascade, uniform sweep, moderate constant and the final constant search.
pub fn certify(cfg: &Config) -> Result<CertifyOutcome> {
    let cc = cfg
        .certify
        .clone()
        .ok_or_else(|| Error::Config("a [certify] section is required".into()))?;
    let dim = match (cc.dim, &cfg.model) {
        (Some(d), Some(m)) if d != m.dim => {
            return Err(Error::Config(format!(
                "certify.dim = {d} but model.dim = {}",
                m.dim
            )))
        }
        (Some(d), _) => d,
        (None, Some(m)) => m.dim,
        (None, None) => return Err(Error::Config("missing `dim` (no model given)".into())),
    };
    if dim == 0 {
        return Err(Error::Config("dim must be positive".into()));
    }
    let leak = match cc.leak_constant {
        Some(c) => c,
        None => cfg.model()?.leak_constant()?,
    };
    let eps = match cc.eps {
        Some(e) => e,
        None => cfg.model()?.moment_scale()?,
    };
    let c1 = leak.max(CASCADE_LEAK_FLOOR);
    let side = cascade_threshold(c1, dim)?;
    let sc = ScalingFns::new(dim);
    let box0 = BoxSpec::cube(dim, side)?;
    let vol0 = box0.volume();
    // E exp(eps |xi|) <= 2 gives f_B(lambda) <= lambda^2 / eps^2 for
    // |lambda| <= eps sqrt(vol B) on every box, since cell weights are <= 1.
    // Raising a keeps the bound valid; the headroom lets the cascade's
    // rounded comparison of a against C / R(vol B0) pass.
    let base_cert = QuadCert::new(
        (1.0 / (eps * eps)).max(side / sc.r(vol0)).max(1.0) * (1.0 + 4.0 * CERT_SLACK),
        round_down(eps * vol0.sqrt()),
    )?;
    let n = uniform_threshold_index(dim, side, c1, base_cert.delta)?.max(dim);
    let per_axis = n.div_ceil(dim) as u32;
    let cascade = doubling_cascade(
        base_cert.a,
        base_cert.delta,
        side,
        c1,
        &box0,
        &vec![per_axis; dim],
    )?;
    let big = cascade.certificate()?;
    let upper = side * 2f64.powi(per_axis as i32);
    let lower_cert = scalar_leak_cert(c1)?;
    let sweep_cert = uniform_good_sweep(&lower_cert, &big, side, upper, dim)?;
    let volume_floor = 2f64.powi(n as i32) * (2.0 * side).powi(dim as i32);
    let moderate = moderate_constant(c1, sweep_cert.a, sweep_cert.delta, dim, side, volume_floor)?;
    let theorem = theorem_constant(c1, moderate, dim, cc.chain_margin, cc.search_cap_log2)
        .map_err(|e| match e {
            Error::SearchCap { cap_log2 } => Error::ConstantOutOfRange {
                moderate,
                dim,
                cap_log2,
            },
            e => e,
        })?;
    Ok(CertifyOutcome {
        dim,
        eps,
        leak_constant: leak,
        cascade_leak_constant: c1,
        base_cert,
        cascade_side: side,
        threshold_index: n,
        cascade,
        lower_cert,
        sweep_cert,
        volume_floor,
        moderate,
        theorem,
    })
}

pub fn cmd_certify(cfg: &Config) -> Result<CertifyOutcome> {
    let outcome = certify(cfg)?;
    let dir = cfg.out_dir()?;
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join("certify.json"),
        serde_json::to_string_pretty(&outcome)? + "\n",
    )?;
    fs::write(dir.join("summary.txt"), outcome.summary())?;
    Ok(outcome)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyOutput {
    pub seed: u64,
    pub evaluation: Evaluation,
    pub anchors: Vec<String>,
    pub report: Report,
}

fn symmetric_grid(radius: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![0.0];
    }
    (0..points)
        .map(|i| -radius + 2.0 * radius * i as f64 / (points - 1) as f64)
        .collect()
}

fn section<'a, T>(s: &'a Option<T>, anchor: &str) -> Result<&'a T> {
    s.as_ref()
        .ok_or_else(|| Error::Config(format!("anchor `{anchor}` needs its config section")))
}

/// Runs every configured anchor and returns the merged report.
pub fn verify(cfg: &Config) -> Result<VerifyOutput> {
    let vc = cfg.verify.clone().unwrap_or_default();
    let mut report = Report::default();
    let harness =
        || -> Result<Harness> { Ok(Harness::new(cfg.model()?.clone(), vc.evaluation, cfg.seed)) };
    let mut holder_done = false;
    for name in &vc.anchors {
        match check_anchor(name)? {
            "quadratic-mgf" => {
                let q = section(&vc.quadratic_mgf, name)?;
                let steps = (1.0 / q.step).round() as i64;
                let grid: Vec<f64> = (-steps..=steps).map(|i| i as f64 / steps as f64).collect();
                report.merge(check_quadratic_mgf(&q.laws, &grid)?);
            }
            "moment-scale" => {
                let m = section(&vc.moment_scale, name)?;
                let h = harness()?;
                let eps = match m.eps {
                    Some(e) => e,
                    None => h.model.moment_scale()?,
                };
                report.merge(h.check_reference_moment(eps, m.shifts_per_axis, m.samples)?);
            }
            "leak-bound" => {
                let l = section(&vc.leak, name)?;
                let h = harness()?;
                let c1 = match l.leak_constant {
                    Some(c) => c,
                    None => h.leak_constant()?,
                };
                let grid = symmetric_grid(1.0 / c1, l.lambda_points);
                report.merge(h.check_leak_bounds(&l.cuts, &grid, Some(c1), l.replicas)?);
            }
            "halving-holder" | "split-holder-upper" | "split-holder-lower" => {
                // one pass produces all three families
                if holder_done {
                    continue;
                }
                holder_done = true;
                let hs = section(&vc.holder, name)?;
                let h = harness()?;
                let grid = symmetric_grid(hs.lambda_radius, hs.lambda_points);
                let wanted = |a: &str| vc.anchors.iter().any(|x| x == a);
                let mut run =
                    |case: &SplitCase, axis: usize, cross: Option<BoxSpec>| -> Result<()> {
                        for &p in &hs.p {
                            if wanted("halving-holder") && case.s.is_none_or(|s| s == case.r) {
                                report.merge(h.check_halving_bound(
                                    cross.as_ref(),
                                    case.cut,
                                    case.r,
                                    p,
                                    &grid,
                                    axis,
                                )?);
                            }
                            if wanted("split-holder-upper") || wanted("split-holder-lower") {
                                let mut r = h.check_split_bounds(
                                    cross.as_ref(),
                                    case.cut,
                                    case.r,
                                    case.s.unwrap_or(case.r),
                                    p,
                                    &grid,
                                    axis,
                                )?;
                                r.rows.retain(|row| wanted(&row.anchor));
                                report.merge(r);
                            }
                        }
                        Ok(())
                    };
                for case in &hs.cases {
                    let cross = case.cross.clone().map(BoxSpec::new).transpose()?;
                    run(case, case.axis, cross.clone())?;
                    if hs.permute_axes && h.model.dim > 1 {
                        let d = h.model.dim;
                        run(
                            case,
                            d - 1 - case.axis,
                            crate::verify::permuted_cross(cross.as_ref()),
                        )?;
                    }
                }
            }
            "moderate-window" => {
                let m = section(&vc.moderate, name)?;
                let h = harness()?;
                let d = h.model.dim;
                let sc = ScalingFns::new(d);
                for &v in &m.volumes {
                    let edge = sc.s(v).sqrt() / log_pow(v, d as i32 - 1) / m.moderate;
                    let lambdas: Vec<f64> = m.fractions.iter().map(|f| f * edge).collect();
                    report.merge(h.check_moderate_bound(
                        m.moderate,
                        &[v],
                        &lambdas,
                        m.shifts_per_axis,
                    )?);
                }
            }
            "theorem-bound" => {
                let t = section(&vc.theorem, name)?;
                let h = harness()?;
                let c_final = match t.final_constant {
                    Some(c) => c,
                    None => {
                        let (Some(c1), Some(c2)) = (t.leak_constant, t.moderate) else {
                            return Err(Error::Config(
                                "theorem needs final_constant or leak_constant and moderate".into(),
                            ));
                        };
                        theorem_constant(c1, c2, h.model.dim, None, t.search_cap_log2)?
                            .final_constant
                    }
                };
                let boxes = t
                    .boxes
                    .iter()
                    .map(|s| BoxSpec::from_sides(s))
                    .collect::<Result<Vec<_>>>()?;
                report.merge(h.check_theorem(c_final * t.scale, &boxes, &t.fractions)?);
            }
            other => return Err(Error::Config(format!("anchor `{other}` has no runner"))),
        }
    }
    Ok(VerifyOutput {
        seed: cfg.seed,
        evaluation: vc.evaluation,
        anchors: vc.anchors.clone(),
        report,
    })
}

/// Runs [`verify`] and writes `report.json` and `report.csv`.
pub fn cmd_verify(cfg: &Config) -> Result<VerifyOutput> {
    let out = verify(cfg)?;
    let dir = cfg.out_dir()?;
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join("report.json"),
        serde_json::to_string_pretty(&out)? + "\n",
    )?;
    out.report
        .write_csv(fs::File::create(dir.join("report.csv"))?)?;
    Ok(out)
}

/// Writes plot-ready curves from a finished run directory: `curves.csv`
/// from a verify report and `window.csv` from a certify trace.
pub fn cmd_plotdata(run_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if !run_dir.is_dir() {
        return Err(Error::Config(format!(
            "run directory {} not found",
            run_dir.display()
        )));
    }
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let report_path = run_dir.join("report.json");
    let certify_path = run_dir.join("certify.json");
    if !report_path.exists() && !certify_path.exists() {
        return Err(Error::Config(format!(
            "{} holds neither report.json nor certify.json",
            run_dir.display()
        )));
    }
    if report_path.exists() {
        let out: VerifyOutput = serde_json::from_str(&fs::read_to_string(&report_path)?)?;
        let mut text = String::from("anchor,instance,lambda,upper,bound\n");
        for r in &out.report.rows {
            text.push_str(&format!(
                "{},\"{}\",{},{},{}\n",
                r.anchor, r.instance, r.lambda, r.lhs, r.rhs
            ));
        }
        let path = out_dir.join("curves.csv");
        fs::write(&path, text)?;
        written.push(path);
    }
    if certify_path.exists() {
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&certify_path)?)?;
        let get = |ptr: &str| {
            v.pointer(ptr)
                .and_then(|x| x.as_f64())
                .ok_or_else(|| Error::Config(format!("certify.json lacks {ptr}")))
        };
        let c = get("/theorem/final_constant")?;
        let d = get("/dim")? as i32;
        let mut text = String::from("volume,lambda_edge\n");
        for k in (d.max(1) * 4..=1000).step_by(4) {
            let vol = 2f64.powi(k);
            if !vol.is_finite() {
                break;
            }
            text.push_str(&format!("{:e},{:e}\n", vol, 1.0 / (c * log_pow(vol, d))));
        }
        let path = out_dir.join("window.csv");
        fs::write(&path, text)?;
        written.push(path);
    }
    Ok(written)
}
