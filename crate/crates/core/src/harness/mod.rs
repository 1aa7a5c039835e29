//! Monte-Carlo NMSE experiments.
//!
//! An experiment draws `t2` measurement operators and, for each of them, `t1`
//! ground-truth/noise pairs. Every estimator sees the same `(A, X, y)` triples.
//! NMSE is reported as `sum |X^ - X|_F^2 / sum |X|_F^2` over the trials.

pub mod gen;
pub mod output;

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{eps_from_noise, nuclear_min, rvm_fit, NuclearConfig, RvmConfig};
use crate::error::{Error, Result};
use crate::estimator::{fit_measurements, EstimatorConfig, Measurements, NoiseRule, Sidedness};
use crate::linalg::{unvec, vec, Mat, Vector};
use crate::penalties::{PenaltyKind, DEFAULT_EPSILON, DEFAULT_SCHATTEN_S};

pub use gen::Mode;
use gen::{add_noise, gen_lowrank, gen_measurement, rng_for, sweep_seed, Stage};

pub const SPEC_VERSION: u32 = 1;

/// Largest tolerated fraction of failed trials per estimator.
pub const MAX_EXCLUDED_FRACTION: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyName {
    Schatten,
    LogDet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RsvmSpec {
    #[serde(default)]
    pub name: Option<String>,
    pub penalty: PenaltyName,
    #[serde(default)]
    pub s: Option<f64>,
    /// Defaults to `max(p, q)` of the problem it runs on.
    #[serde(default)]
    pub nu: Option<f64>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default = "default_sided")]
    pub sided: Sidedness,
    #[serde(default = "default_noise_rule")]
    pub noise_rule: NoiseRule,
    #[serde(default = "default_true")]
    pub balancing: bool,
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub b: Option<f64>,
    #[serde(default)]
    pub max_iters: Option<usize>,
    #[serde(default)]
    pub tol: Option<f64>,
}

fn default_sided() -> Sidedness {
    Sidedness::TwoSided
}

fn default_noise_rule() -> NoiseRule {
    NoiseRule::TraceForm
}

fn default_true() -> bool {
    true
}

impl RsvmSpec {
    pub fn new(penalty: PenaltyName, sided: Sidedness) -> Self {
        RsvmSpec {
            name: None,
            penalty,
            s: None,
            nu: None,
            epsilon: None,
            sided,
            noise_rule: NoiseRule::TraceForm,
            balancing: true,
            a: None,
            b: None,
            max_iters: None,
            tol: None,
        }
    }

    pub fn config(&self, p: usize, q: usize) -> EstimatorConfig {
        let epsilon = self.epsilon.unwrap_or(DEFAULT_EPSILON);
        let penalty = match self.penalty {
            PenaltyName::Schatten => PenaltyKind::SchattenS {
                s: self.s.unwrap_or(DEFAULT_SCHATTEN_S),
                epsilon,
            },
            PenaltyName::LogDet => PenaltyKind::LogDet {
                nu: self.nu.unwrap_or(p.max(q) as f64),
                epsilon,
            },
        };
        let d = EstimatorConfig::default();
        EstimatorConfig {
            penalty,
            sided: self.sided,
            noise_rule: self.noise_rule,
            a: self.a.unwrap_or(d.a),
            b: self.b.unwrap_or(d.b),
            balancing: self.balancing,
            max_iters: self.max_iters.unwrap_or(d.max_iters),
            tol: self.tol.unwrap_or(d.tol),
            beta_init: d.beta_init,
            track_objective: false,
        }
    }

    fn default_name(&self) -> String {
        let pen = match self.penalty {
            PenaltyName::Schatten => "sn",
            PenaltyName::LogDet => "ld",
        };
        let side = match self.sided {
            Sidedness::Left => "left",
            Sidedness::Right => "right",
            Sidedness::TwoSided => "two-sided",
        };
        format!("rsvm-{pen}-{side}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorSpec {
    Rsvm(RsvmSpec),
    NuclearNorm {
        #[serde(default)]
        name: Option<String>,
        #[serde(default)]
        max_inner: Option<usize>,
    },
    /// Vector RVM applied to `vec(X)`.
    Rvm {
        #[serde(default)]
        name: Option<String>,
        #[serde(default)]
        max_iters: Option<usize>,
    },
    Zero {
        #[serde(default)]
        name: Option<String>,
    },
}

impl EstimatorSpec {
    pub fn name(&self) -> String {
        match self {
            EstimatorSpec::Rsvm(r) => r.name.clone().unwrap_or_else(|| r.default_name()),
            EstimatorSpec::NuclearNorm { name, .. } => name.clone().unwrap_or_else(|| "nuclear-norm".into()),
            EstimatorSpec::Rvm { name, .. } => name.clone().unwrap_or_else(|| "rvm".into()),
            EstimatorSpec::Zero { name } => name.clone().unwrap_or_else(|| "zero".into()),
        }
    }

    pub fn build(&self, p: usize, q: usize) -> Result<Box<dyn Estimator>> {
        let name = self.name();
        Ok(match self {
            EstimatorSpec::Rsvm(r) => {
                let config = r.config(p, q);
                config.validate(p, q).map_err(|e| Error::Spec(format!("estimator `{name}`: {e}")))?;
                Box::new(RsvmEstimator { name, config })
            }
            EstimatorSpec::NuclearNorm { max_inner, .. } => {
                let mut config = NuclearConfig::default();
                if let Some(n) = max_inner {
                    config.max_inner = *n;
                }
                Box::new(NuclearEstimator { name, config })
            }
            EstimatorSpec::Rvm { max_iters, .. } => {
                let mut config = RvmConfig::default();
                if let Some(n) = max_iters {
                    config.max_iters = *n;
                }
                Box::new(RvmEstimator { name, config })
            }
            EstimatorSpec::Zero { .. } => Box::new(ZeroEstimator { name }),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    MRatio,
    SmnrDb,
    Q,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::MRatio => "m_ratio",
            SweepParam::SmnrDb => "smnr_db",
            SweepParam::Q => "q",
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "m_ratio" => Ok(SweepParam::MRatio),
            "smnr_db" => Ok(SweepParam::SmnrDb),
            "q" => Ok(SweepParam::Q),
            other => Err(Error::Spec(format!("unknown sweep parameter `{other}` (m_ratio, smnr_db, q)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub spec_version: u32,
    #[serde(default)]
    pub name: Option<String>,
    pub p: usize,
    pub q: usize,
    pub r: usize,
    /// Number of measurements; exclusive with `m_ratio`.
    #[serde(default)]
    pub m: Option<usize>,
    /// `m / (p q)`, rounded to the nearest integer count.
    #[serde(default)]
    pub m_ratio: Option<f64>,
    pub smnr_db: f64,
    pub mode: Mode,
    pub t1: usize,
    pub t2: usize,
    pub master_seed: u64,
    pub estimators: Vec<EstimatorSpec>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(text).map_err(|e| Error::Spec(format!("experiment spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn m(&self) -> Result<usize> {
        let n = self.p * self.q;
        let m = match (self.m, self.m_ratio) {
            (Some(m), None) => m,
            (None, Some(ratio)) => {
                if !(ratio.is_finite() && ratio > 0.0) {
                    return Err(Error::Spec(format!("m_ratio = {ratio} must be positive")));
                }
                (ratio * n as f64).round() as usize
            }
            _ => return Err(Error::Spec("give exactly one of `m` and `m_ratio`".into())),
        };
        if m == 0 {
            return Err(Error::Spec("the measurement count rounds to 0".into()));
        }
        if self.mode == Mode::Completion && m > n {
            return Err(Error::Spec(format!("completion needs m <= pq = {n}, got {m}")));
        }
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.spec_version != SPEC_VERSION {
            return Err(Error::Spec(format!(
                "unsupported spec_version {} (expected {SPEC_VERSION})",
                self.spec_version
            )));
        }
        if self.p == 0 || self.q == 0 || self.r == 0 || self.r > self.p.min(self.q) {
            return Err(Error::Spec(format!(
                "need 1 <= r <= min(p, q), got p={}, q={}, r={}",
                self.p, self.q, self.r
            )));
        }
        self.m()?;
        if !self.smnr_db.is_finite() {
            return Err(Error::Spec("smnr_db must be finite".into()));
        }
        if self.t1 == 0 || self.t2 == 0 {
            return Err(Error::Spec("t1 and t2 must be at least 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Spec("no estimators listed".into()));
        }
        let mut names: Vec<String> = self.estimators.iter().map(EstimatorSpec::name).collect();
        names.sort();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Spec(format!("duplicate estimator name `{}`", w[0])));
        }
        for e in &self.estimators {
            e.build(self.p, self.q)?;
        }
        if let Some(sw) = &self.sweep {
            if sw.values.is_empty() {
                return Err(Error::Spec("sweep has no values".into()));
            }
        }
        Ok(())
    }

    /// Copy of the spec with one parameter replaced.
    pub fn with_param(&self, param: SweepParam, value: f64) -> Result<Self> {
        let mut s = self.clone();
        match param {
            SweepParam::MRatio => {
                s.m = None;
                s.m_ratio = Some(value);
            }
            SweepParam::SmnrDb => s.smnr_db = value,
            SweepParam::Q => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(Error::Spec(format!("q must be a positive integer, got {value}")));
                }
                s.q = value as usize;
            }
        }
        s.sweep = None;
        s.validate()?;
        Ok(s)
    }
}

/// One Monte-Carlo trial as handed to every estimator.
#[derive(Clone, Debug)]
pub struct TrialProblem {
    pub outer: usize,
    pub inner: usize,
    pub p: usize,
    pub q: usize,
    pub r: usize,
    pub a: Mat,
    pub x: Mat,
    pub y: Vector,
    pub sigma_n: f64,
}

impl TrialProblem {
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        (self.outer, self.inner, self.p, self.q).hash(&mut h);
        for v in self.a.iter().chain(self.x.iter()).chain(self.y.iter()) {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }

    pub fn measurements(&self) -> Result<Measurements> {
        Measurements::new(self.a.clone(), self.y.clone(), self.p, self.q)
    }
}

pub struct Estimate {
    pub xhat: Mat,
    pub iterations: usize,
}

pub trait Estimator: Send + Sync {
    fn name(&self) -> &str;
    fn estimate(&self, problem: &TrialProblem) -> Result<Estimate>;
}

pub struct RsvmEstimator {
    pub name: String,
    pub config: EstimatorConfig,
}

impl Estimator for RsvmEstimator {
    fn name(&self) -> &str {
        &self.name
    }

    fn estimate(&self, problem: &TrialProblem) -> Result<Estimate> {
        let res = fit_measurements(&problem.measurements()?, &self.config)?;
        Ok(Estimate {
            xhat: res.state.xhat,
            iterations: res.iterations,
        })
    }
}

pub struct NuclearEstimator {
    pub name: String,
    pub config: NuclearConfig,
}

impl Estimator for NuclearEstimator {
    fn name(&self) -> &str {
        &self.name
    }

    fn estimate(&self, problem: &TrialProblem) -> Result<Estimate> {
        let eps = eps_from_noise(problem.sigma_n, problem.y.len());
        let res = nuclear_min(&problem.a, &problem.y, problem.p, problem.q, eps, &self.config)?;
        Ok(Estimate {
            xhat: res.xhat,
            iterations: 0,
        })
    }
}

pub struct RvmEstimator {
    pub name: String,
    pub config: RvmConfig,
}

impl Estimator for RvmEstimator {
    fn name(&self) -> &str {
        &self.name
    }

    fn estimate(&self, problem: &TrialProblem) -> Result<Estimate> {
        let st = rvm_fit(&problem.a, &problem.y, &self.config)?;
        Ok(Estimate {
            xhat: unvec(st.pruned_xhat().as_slice(), problem.p, problem.q)?,
            iterations: st.iterations,
        })
    }
}

pub struct ZeroEstimator {
    pub name: String,
}

impl Estimator for ZeroEstimator {
    fn name(&self) -> &str {
        &self.name
    }

    fn estimate(&self, problem: &TrialProblem) -> Result<Estimate> {
        Ok(Estimate {
            xhat: Mat::zeros(problem.p, problem.q),
            iterations: 0,
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    /// Worker threads; results do not depend on it.
    pub threads: usize,
    /// Measure wall time per estimator call.
    pub timing: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { threads: 1, timing: false }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub outer: usize,
    pub inner: usize,
    /// `|X^ - X|_F^2`, `None` when the estimator failed.
    pub sq_error: Option<f64>,
    /// `|X|_F^2`.
    pub energy: f64,
    pub iterations: usize,
    pub seconds: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorSummary {
    pub name: String,
    /// Ratio of sums over included trials.
    pub nmse: f64,
    /// Delta-method standard error of `nmse`; NaN with fewer than two trials.
    pub stderr: f64,
    pub nmse_mean_of_ratios: f64,
    pub trials: usize,
    pub excluded: usize,
    pub mean_iters: f64,
    pub mean_seconds: Option<f64>,
    pub records: Vec<TrialRecord>,
}

impl EstimatorSummary {
    fn from_records(name: String, records: Vec<TrialRecord>, timing: bool) -> Self {
        let ok: Vec<(f64, f64, &TrialRecord)> = records
            .iter()
            .filter_map(|r| r.sq_error.map(|e| (e, r.energy, r)))
            .collect();
        let n = ok.len();
        let excluded = records.len() - n;
        let err_sum: f64 = ok.iter().map(|t| t.0).sum();
        let energy_sum: f64 = ok.iter().map(|t| t.1).sum();
        let nmse = if n == 0 { f64::NAN } else { err_sum / energy_sum };
        let stderr = if n < 2 {
            f64::NAN
        } else {
            let nf = n as f64;
            let resid: f64 = ok.iter().map(|&(e, s, _)| (e - nmse * s).powi(2)).sum();
            (resid / (nf * (nf - 1.0))).sqrt() / (energy_sum / nf)
        };
        let nmse_mean_of_ratios = ok.iter().map(|&(e, s, _)| e / s).sum::<f64>() / n as f64;
        let mean_iters = ok.iter().map(|t| t.2.iterations as f64).sum::<f64>() / n as f64;
        let mean_seconds = timing.then(|| ok.iter().filter_map(|t| t.2.seconds).sum::<f64>() / n as f64);
        EstimatorSummary {
            name,
            nmse,
            stderr,
            nmse_mean_of_ratios,
            trials: n,
            excluded,
            mean_iters,
            mean_seconds,
            records,
        }
    }

    /// Per-trial `|X^ - X|^2 / |X|^2` of the included trials, in trial order.
    pub fn per_trial_nmse(&self) -> Vec<f64> {
        self.records
            .iter()
            .filter_map(|r| r.sq_error.map(|e| e / r.energy))
            .collect()
    }

    pub fn median_nmse(&self) -> f64 {
        let mut v = self.per_trial_nmse();
        if v.is_empty() {
            return f64::NAN;
        }
        v.sort_by(f64::total_cmp);
        let k = v.len() / 2;
        if v.len() % 2 == 1 {
            v[k]
        } else {
            0.5 * (v[k - 1] + v[k])
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub p: usize,
    pub q: usize,
    pub r: usize,
    pub m: usize,
    pub smnr_db: f64,
    pub mode: Mode,
    pub master_seed: u64,
    pub estimators: Vec<EstimatorSummary>,
}

impl ExperimentResult {
    pub fn get(&self, name: &str) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|e| e.name == name)
    }
}

/// Draws trial `(outer, inner)` of an experiment.
pub fn gen_trial(spec: &ExperimentSpec, outer: usize, inner: usize) -> Result<TrialProblem> {
    let (p, q, r) = (spec.p, spec.q, spec.r);
    let m = spec.m()?;
    let (o, i) = (outer as u64, inner as u64);
    let a = gen_measurement(spec.mode, m, p, q, &mut rng_for(spec.master_seed, o, 0, Stage::Operator))?;
    let x = gen_lowrank(p, q, r, &mut rng_for(spec.master_seed, o, i, Stage::Signal))?;
    let clean = &a * vec(&x);
    let (y, sigma_n) = add_noise(&clean, spec.smnr_db, r, p, q, m, &mut rng_for(spec.master_seed, o, i, Stage::Noise))?;
    Ok(TrialProblem {
        outer,
        inner,
        p,
        q,
        r,
        a,
        x,
        y,
        sigma_n,
    })
}

fn run_trial(spec: &ExperimentSpec, estimators: &[Box<dyn Estimator>], k: usize, timing: bool) -> Result<Vec<TrialRecord>> {
    let (outer, inner) = (k / spec.t1, k % spec.t1);
    let problem = gen_trial(spec, outer, inner)?;
    let fingerprint = problem.fingerprint();
    let energy = problem.x.norm_squared();
    let mut out = Vec::with_capacity(estimators.len());
    for est in estimators {
        if problem.fingerprint() != fingerprint {
            return Err(Error::Fingerprint(est.name().to_string()));
        }
        let start = timing.then(Instant::now);
        let result = est.estimate(&problem);
        let seconds = start.map(|s| s.elapsed().as_secs_f64());
        let record = match result {
            Ok(e) if e.xhat.shape() == (spec.p, spec.q) && e.xhat.iter().all(|v| v.is_finite()) => TrialRecord {
                outer,
                inner,
                sq_error: Some((&e.xhat - &problem.x).norm_squared()),
                energy,
                iterations: e.iterations,
                seconds,
                failure: None,
            },
            Ok(_) => failed(outer, inner, energy, seconds, "estimate has the wrong shape or is not finite".into()),
            Err(err) => failed(outer, inner, energy, seconds, err.to_string()),
        };
        if let Some(msg) = &record.failure {
            log::warn!("{}: trial ({outer}, {inner}) excluded: {msg}", est.name());
        }
        out.push(record);
    }
    log::debug!("trial ({outer}, {inner}) done");
    Ok(out)
}

fn failed(outer: usize, inner: usize, energy: f64, seconds: Option<f64>, msg: String) -> TrialRecord {
    TrialRecord {
        outer,
        inner,
        sq_error: None,
        energy,
        iterations: 0,
        seconds,
        failure: Some(msg),
    }
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))
}

/// Runs `estimators` on the trials of `spec`.
pub fn run_with_estimators(spec: &ExperimentSpec, estimators: &[Box<dyn Estimator>], opts: &RunOptions) -> Result<ExperimentResult> {
    spec.validate()?;
    let total = spec.t1 * spec.t2;
    let pool = thread_pool(opts.threads)?;
    let per_trial: Vec<Vec<TrialRecord>> = pool.install(|| {
        (0..total)
            .into_par_iter()
            .map(|k| run_trial(spec, estimators, k, opts.timing))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut summaries = Vec::with_capacity(estimators.len());
    for (j, est) in estimators.iter().enumerate() {
        let records: Vec<TrialRecord> = per_trial.iter().map(|t| t[j].clone()).collect();
        let summary = EstimatorSummary::from_records(est.name().to_string(), records, opts.timing);
        if summary.excluded as f64 > MAX_EXCLUDED_FRACTION * total as f64 {
            return Err(Error::ExcessiveExclusions {
                name: summary.name,
                excluded: summary.excluded,
                total,
            });
        }
        summaries.push(summary);
    }
    Ok(ExperimentResult {
        p: spec.p,
        q: spec.q,
        r: spec.r,
        m: spec.m()?,
        smnr_db: spec.smnr_db,
        mode: spec.mode,
        master_seed: spec.master_seed,
        estimators: summaries,
    })
}

pub fn run_experiment(spec: &ExperimentSpec, opts: &RunOptions) -> Result<ExperimentResult> {
    spec.validate()?;
    let estimators = spec
        .estimators
        .iter()
        .map(|e| e.build(spec.p, spec.q))
        .collect::<Result<Vec<_>>>()?;
    run_with_estimators(spec, &estimators, opts)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub param: SweepParam,
    pub points: Vec<(f64, ExperimentResult)>,
}

/// One experiment per value; point `i` runs with a seed derived from the
/// master seed and `i`, point 0 with the master seed itself.
pub fn sweep(base: &ExperimentSpec, param: SweepParam, values: &[f64], opts: &RunOptions) -> Result<SweepResult> {
    if values.is_empty() {
        return Err(Error::Spec("sweep has no values".into()));
    }
    let mut points = Vec::with_capacity(values.len());
    for (i, &v) in values.iter().enumerate() {
        let mut spec = base.with_param(param, v)?;
        spec.master_seed = sweep_seed(base.master_seed, i);
        log::info!("sweep {} = {v} ({}/{})", param.as_str(), i + 1, values.len());
        points.push((v, run_experiment(&spec, opts)?));
    }
    Ok(SweepResult { param, points })
}
