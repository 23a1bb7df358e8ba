//! Parameter sampling, identity verification and report output.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, Identity, Sampling};
use crate::error::{Error, Result};
use crate::expr::{eval_counted, ParamEnv};
use crate::precision::{rel_error_digits, PrecisionComplex};
use crate::qcore::{QBase, TruncationControl};

/// Extra working digits carried beyond the requested precision.
pub const GUARD_DIGITS: u32 = 10;
/// Precision used when testing constraints during sampling.
pub const CHECK_DIGITS: u32 = 20;
/// A negative variant counts as failing above this relative error.
pub const NEGATIVE_THRESHOLD: f64 = 1e-6;
/// A negative variant is confirmed wrong when it fails at this fraction of points.
pub const NEGATIVE_FRACTION: f64 = 0.95;
/// Runs with more skipped trials than this fraction fail.
pub const MAX_SKIPPED_FRACTION: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub seed: u64,
    pub trials: usize,
    pub digits: u32,
    pub margin: f64,
    /// Modulus range of symbols without their own sampling spec.
    pub default_range: (f64, f64),
    pub q_range: (f64, f64),
    pub complex_q: bool,
    pub max_rejections: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            seed: 42,
            trials: 10,
            digits: 50,
            margin: 0.2,
            default_range: crate::catalog::DEFAULT_RANGE,
            q_range: (0.05, 0.6),
            complex_q: false,
            max_rejections: 10_000,
        }
    }
}

impl SampleConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidNumber(m.to_string()));
        if self.trials == 0 {
            return bad("trials must be positive");
        }
        if self.digits < 15 {
            return bad("digits must be at least 15");
        }
        if !(self.margin > 0.0 && self.margin < 1.0) {
            return bad("margin must lie in (0, 1)");
        }
        let (lo, hi) = self.q_range;
        if !(lo > 0.0 && lo < hi && hi < 1.0) {
            return bad("q range must satisfy 0 < lo < hi < 1");
        }
        let (lo, hi) = self.default_range;
        if !(lo > 0.0 && lo < hi) {
            return bad("symbol range must satisfy 0 < lo < hi");
        }
        Ok(())
    }

    pub fn working_digits(&self) -> u32 {
        self.digits + GUARD_DIGITS
    }
}

fn mix(trial: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = trial.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ mix(trial as u64))
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo.ln()..hi.ln()).exp()
}

/// A sampled point in double precision, lifted to any working precision.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePoint {
    pub q: (f64, f64),
    pub values: BTreeMap<String, (f64, f64)>,
    /// Rejected draws before this point was accepted.
    pub rejections: usize,
}

impl SamplePoint {
    pub fn env(&self, digits: u32) -> Result<ParamEnv> {
        let q = QBase::new(PrecisionComplex::new(self.q.0, self.q.1, digits))?;
        let mut env = ParamEnv::new(q);
        for (k, &(re, im)) in &self.values {
            env.bindings.insert(k.clone(), PrecisionComplex::new(re, im, digits));
        }
        Ok(env)
    }

    /// Parameter strings `re,im` for the report, `q` included.
    pub fn strings(&self) -> BTreeMap<String, String> {
        let pair = |(re, im): (f64, f64)| format!("{re:e},{im:e}");
        let mut m: BTreeMap<String, String> = self.values.iter().map(|(k, &v)| (k.clone(), pair(v))).collect();
        m.insert("q".into(), pair(self.q));
        m
    }
}

fn draw(identity: &Identity, cfg: &SampleConfig, rng: &mut ChaCha8Rng) -> SamplePoint {
    let (qlo, qhi) = identity.q_range.unwrap_or(cfg.q_range);
    let qm = rng.gen_range(qlo..qhi);
    let q = if cfg.complex_q {
        let t = rng.gen_range(-PI..PI);
        (qm * t.cos(), qm * t.sin())
    } else {
        (qm, 0.0)
    };
    let mut values = BTreeMap::new();
    for s in &identity.symbols {
        let v = match s.sampling {
            Sampling::Modulus { lo, hi } => {
                let (lo, hi) = if (lo, hi) == crate::catalog::DEFAULT_RANGE {
                    cfg.default_range
                } else {
                    (lo, hi)
                };
                let r = log_uniform(rng, lo, hi);
                let t = rng.gen_range(-PI..PI);
                (r * t.cos(), r * t.sin())
            }
            Sampling::Real { lo, hi } => (rng.gen_range(lo..hi), 0.0),
            Sampling::Positive { lo, hi } => (log_uniform(rng, lo, hi), 0.0),
        };
        values.insert(s.name.clone(), v);
    }
    SamplePoint { q, values, rejections: 0 }
}

/// Deterministic admissible point for `(cfg.seed, trial)`.
pub fn sample_point(identity: &Identity, cfg: &SampleConfig, trial: usize) -> Result<SamplePoint> {
    let mut rng = trial_rng(cfg.seed, trial);
    let ctl = TruncationControl::for_digits(CHECK_DIGITS);
    for attempt in 0..cfg.max_rejections.max(1) {
        let mut p = draw(identity, cfg, &mut rng);
        let Ok(env) = p.env(CHECK_DIGITS) else { continue };
        if identity.violation(&env, &ctl, cfg.margin).is_none() {
            p.rejections = attempt;
            return Ok(p);
        }
    }
    Err(Error::SamplingExhausted {
        id: identity.id.clone(),
        attempts: cfg.max_rejections,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrialStatus {
    Pass,
    Fail,
    SkippedDegenerate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideValues {
    pub lhs: String,
    pub rhs: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub params: BTreeMap<String, String>,
    pub values: Option<SideValues>,
    /// Largest pairwise relative error between the sides.
    pub rel_error: Option<f64>,
    pub terms: usize,
    pub status: TrialStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub negative_rel_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub passed: usize,
    pub failed: usize,
    pub skipped: usize,
    pub max_rel_error: Option<f64>,
    pub median_rel_error: Option<f64>,
    pub sampling_exhausted: bool,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegativeVariantResult {
    pub evaluated: usize,
    /// Points where the variant differs from the LHS by more than the threshold.
    pub disagreements: usize,
    pub fraction: f64,
    pub min_rel_error: Option<f64>,
    pub confirmed_wrong: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub tool: String,
    pub version: String,
    pub id: String,
    pub paper_label: String,
    pub seed: u64,
    pub digits: u32,
    pub trials: usize,
    pub complex_q: bool,
    pub margin: f64,
    pub tolerance: f64,
    pub records: Vec<TrialRecord>,
    pub aggregate: Aggregate,
    pub negative_variant_result: Option<NegativeVariantResult>,
    pub timestamp: String,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.aggregate.ok
    }

    /// One line for terminal output.
    pub fn summary(&self) -> String {
        let a = &self.aggregate;
        let mut s = format!(
            "{:<6} {:<4} pass {}/{} skipped {} max_rel_err {}",
            self.id,
            if a.ok { "ok" } else { "FAIL" },
            a.passed,
            self.trials,
            a.skipped,
            fmt_err(a.max_rel_error)
        );
        if let Some(n) = &self.negative_variant_result {
            let _ = write!(
                s,
                " negative {}/{} differ{}",
                n.disagreements,
                n.evaluated,
                if n.confirmed_wrong { "" } else { " (NOT confirmed)" }
            );
        }
        s
    }
}

fn fmt_err(x: Option<f64>) -> String {
    match x {
        Some(v) => format!("{v:.2e}"),
        None => "-".into(),
    }
}

/// Pass threshold for `identity` at `digits`.
pub fn tolerance_for(identity: &Identity, digits: u32) -> f64 {
    let offset = identity.tolerance_offset.unwrap_or(GUARD_DIGITS);
    10f64.powi(-(digits as i32 - offset as i32))
}

fn run_trial(identity: &Identity, cfg: &SampleConfig, trial: usize, tol: f64) -> (TrialRecord, bool) {
    let skipped = |params, reason: String, terms| TrialRecord {
        trial,
        params,
        values: None,
        rel_error: None,
        terms,
        status: TrialStatus::SkippedDegenerate,
        reason: Some(reason),
        negative_rel_error: None,
    };
    let point = match sample_point(identity, cfg, trial) {
        Ok(p) => p,
        Err(e) => return (skipped(BTreeMap::new(), e.to_string(), 0), true),
    };
    let params = point.strings();
    let wd = cfg.working_digits();
    let env = match point.env(wd) {
        Ok(env) => env,
        Err(e) => return (skipped(params, e.to_string(), 0), false),
    };
    let ctl = TruncationControl::for_digits(wd);
    let mut values = Vec::new();
    let mut terms = 0;
    for side in identity.sides() {
        match eval_counted(side, &env, &ctl) {
            Ok((v, t)) => {
                values.push(v);
                terms += t;
            }
            Err(e) => return (skipped(params, e.to_string(), terms), false),
        }
    }
    let mut worst = 0f64;
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            let r = rel_error_digits(&values[i], &values[j], cfg.digits).to_f64();
            worst = worst.max(r);
        }
    }
    let negative_rel_error = identity.negative_variant.as_ref().map(|n| match eval_counted(n, &env, &ctl) {
        Ok((v, _)) => rel_error_digits(&values[0], &v, cfg.digits).to_f64(),
        Err(_) => f64::INFINITY,
    });
    let sig = cfg.digits as usize;
    let record = TrialRecord {
        trial,
        params,
        values: Some(SideValues {
            lhs: values[0].to_pair_string(sig),
            rhs: values[1..].iter().map(|v| v.to_pair_string(sig)).collect(),
        }),
        rel_error: Some(worst),
        terms,
        status: if worst <= tol { TrialStatus::Pass } else { TrialStatus::Fail },
        reason: None,
        negative_rel_error,
    };
    (record, false)
}

/// Verify one identity over `cfg.trials` sampled points.
pub fn verify(identity: &Identity, cfg: &SampleConfig) -> Result<VerificationReport> {
    verify_with(identity, cfg, true)
}

/// Serial variant, used to check that parallel execution changes nothing.
pub fn verify_serial(identity: &Identity, cfg: &SampleConfig) -> Result<VerificationReport> {
    verify_with(identity, cfg, false)
}

fn verify_with(identity: &Identity, cfg: &SampleConfig, parallel: bool) -> Result<VerificationReport> {
    cfg.validate()?;
    let tol = tolerance_for(identity, cfg.digits);
    let run = |t| run_trial(identity, cfg, t, tol);
    let results: Vec<(TrialRecord, bool)> = if parallel {
        (0..cfg.trials).into_par_iter().map(run).collect()
    } else {
        (0..cfg.trials).map(run).collect()
    };
    let exhausted = results.iter().any(|(_, e)| *e);
    let records: Vec<TrialRecord> = results.into_iter().map(|(r, _)| r).collect();
    let count = |s| records.iter().filter(|r| r.status == s).count();
    let (passed, failed, skipped) = (
        count(TrialStatus::Pass),
        count(TrialStatus::Fail),
        count(TrialStatus::SkippedDegenerate),
    );
    let mut errs: Vec<f64> = records.iter().filter_map(|r| r.rel_error).collect();
    errs.sort_by(|a, b| a.total_cmp(b));
    let median = if errs.is_empty() {
        None
    } else if errs.len() % 2 == 1 {
        Some(errs[errs.len() / 2])
    } else {
        Some(0.5 * (errs[errs.len() / 2 - 1] + errs[errs.len() / 2]))
    };
    let ok = failed == 0 && !exhausted && (skipped as f64) <= MAX_SKIPPED_FRACTION * cfg.trials as f64;
    let negative_variant_result = identity.negative_variant.as_ref().map(|_| {
        let errs: Vec<f64> = records.iter().filter_map(|r| r.negative_rel_error).collect();
        let disagreements = errs.iter().filter(|&&e| e > NEGATIVE_THRESHOLD).count();
        let fraction = if errs.is_empty() {
            0.0
        } else {
            disagreements as f64 / errs.len() as f64
        };
        NegativeVariantResult {
            evaluated: errs.len(),
            disagreements,
            fraction,
            min_rel_error: errs.iter().copied().reduce(f64::min),
            confirmed_wrong: !errs.is_empty() && fraction >= NEGATIVE_FRACTION,
        }
    });
    Ok(VerificationReport {
        tool: "qident".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        id: identity.id.clone(),
        paper_label: identity.paper_label.clone(),
        seed: cfg.seed,
        digits: cfg.digits,
        trials: cfg.trials,
        complex_q: cfg.complex_q,
        margin: cfg.margin,
        tolerance: tol,
        aggregate: Aggregate {
            passed,
            failed,
            skipped,
            max_rel_error: errs.last().copied(),
            median_rel_error: median,
            sampling_exhausted: exhausted,
            ok,
        },
        records,
        negative_variant_result,
        timestamp: timestamp(),
    })
}

/// Verify every identity in the catalog, ordered by id.
pub fn verify_all(catalog: &Catalog, cfg: &SampleConfig) -> Result<Vec<VerificationReport>> {
    catalog
        .identities()
        .par_iter()
        .map(|i| verify(i, cfg))
        .collect()
}

fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Markdown,
}

pub fn to_json(reports: &[VerificationReport]) -> String {
    serde_json::to_string_pretty(reports).expect("reports serialize")
}

pub fn from_json(text: &str) -> Result<Vec<VerificationReport>> {
    serde_json::from_str(text).map_err(|e| Error::Io(format!("bad report: {e}")))
}

pub fn to_markdown(reports: &[VerificationReport]) -> String {
    let mut s = String::from(
        "| id | label | digits | trials | pass | fail | skipped | max rel err | median rel err | negative variant | status |\n\
         |---|---|---|---|---|---|---|---|---|---|---|\n",
    );
    for r in reports {
        let a = &r.aggregate;
        let neg = match &r.negative_variant_result {
            Some(n) => format!("{}/{} differ", n.disagreements, n.evaluated),
            None => "-".into(),
        };
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            r.id,
            r.paper_label,
            r.digits,
            r.trials,
            a.passed,
            a.failed,
            a.skipped,
            fmt_err(a.max_rel_error),
            fmt_err(a.median_rel_error),
            neg,
            if a.ok { "pass" } else { "fail" }
        );
    }
    s
}

pub fn emit(reports: &[VerificationReport], format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => to_json(reports),
        ReportFormat::Markdown => to_markdown(reports),
    }
}

/// Write a report in the given format to `path`.
pub fn report_emit(reports: &[VerificationReport], format: ReportFormat, path: &std::path::Path) -> Result<()> {
    std::fs::write(path, emit(reports, format)).map_err(Error::from)
}

/// JSON text with every `timestamp` field blanked, for reproducibility checks.
pub fn strip_timestamps(json: &str) -> String {
    let mut v: serde_json::Value = match serde_json::from_str(json) {
        Ok(v) => v,
        Err(_) => return json.to_string(),
    };
    fn walk(v: &mut serde_json::Value) {
        match v {
            serde_json::Value::Object(m) => {
                if m.contains_key("timestamp") {
                    m.insert("timestamp".into(), serde_json::Value::Null);
                }
                m.values_mut().for_each(walk);
            }
            serde_json::Value::Array(a) => a.iter_mut().for_each(walk),
            _ => {}
        }
    }
    walk(&mut v);
    v.to_string()
}
