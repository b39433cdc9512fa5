//! Experiment runner: configuration, seed sweeps over a method matrix, and
//! per-step / summary persistence.
//!
//! Each `(method, seed)` run generates (or loads) a series, splits it by
//! time into train / validation / test, fits the per-state forecaster and
//! any learned state model on the training part, warm-starts on the last
//! `w` points before the test part, and streams the test part online.
//! Runs are independent and executed in parallel; within a run everything
//! is sequential and seeded, so the per-step output is bit-reproducible.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{Aggregation, DEFAULT_RESOLUTION};
use crate::baselines::{AciEngine, Baseline, OnlineCpEngine};
use crate::cptc::{CptcConfig, CptcEngine, StateSampling, StepRecord, WarmStartMode};
use crate::datagen::{
    gen_bouncing_ball, gen_switching_ar, load_csv, split_indices, BouncingBallConfig, CsvOptions,
    SwitchingArConfig, SyntheticSeries, DEFAULT_SPLIT,
};
use crate::error::{Error, Result};
use crate::forecast::{Forecaster, StateLinearForecaster};
use crate::metrics::{coverage, mean_width};
use crate::scores::{nonconformity, ScorePool};
use crate::statepred::{fit_markov, StatePredictor, StatePredictorKind};
use crate::types::Observation;

/// Where the series comes from. Generator seeds are replaced by the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    BouncingBall(BouncingBallConfig),
    SwitchingAr(SwitchingArConfig),
    Csv {
        path: PathBuf,
        #[serde(default)]
        options: CsvOptions,
    },
}

impl DatasetSpec {
    pub fn load(&self, seed: u64) -> Result<SyntheticSeries> {
        match self {
            DatasetSpec::BouncingBall(cfg) => gen_bouncing_ball(&BouncingBallConfig { seed, ..cfg.clone() }),
            DatasetSpec::SwitchingAr(cfg) => gen_switching_ar(&SwitchingArConfig { seed, ..cfg.clone() }),
            DatasetSpec::Csv { path, options } => load_csv(path, options),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StatePredictorSpec {
    Oracle,
    NoisyOracle { epsilon: f64 },
    MarkovFilter,
}

impl StatePredictorSpec {
    fn label(&self) -> String {
        match self {
            StatePredictorSpec::Oracle => "oracle".into(),
            StatePredictorSpec::NoisyOracle { epsilon } => format!("noisy_oracle={epsilon}"),
            StatePredictorSpec::MarkovFilter => "markov_filter".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Cptc,
    Aci,
    OnlineCp,
}

impl MethodKind {
    fn label(&self) -> &'static str {
        match self {
            MethodKind::Cptc => "cptc",
            MethodKind::Aci => "aci",
            MethodKind::OnlineCp => "online_cp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodSpec {
    /// Output label; derived from the other fields when absent.
    pub name: Option<String>,
    pub method: MethodKind,
    pub alpha: f64,
    pub gamma: f64,
    pub aggregation: Aggregation,
    /// Number of pre-test points used to seed the pools.
    pub warm_start: usize,
    pub warm_start_mode: WarmStartMode,
    pub sampling: StateSampling,
    pub pool_capacity: Option<usize>,
    /// Overrides the experiment-wide state predictor for this method.
    pub state_predictor: Option<StatePredictorSpec>,
}

impl Default for MethodSpec {
    fn default() -> Self {
        Self {
            name: None,
            method: MethodKind::Cptc,
            alpha: 0.1,
            gamma: 0.005,
            aggregation: Aggregation::Union,
            warm_start: 50,
            warm_start_mode: WarmStartMode::PerState,
            sampling: StateSampling::Random,
            pool_capacity: None,
            state_predictor: None,
        }
    }
}

impl MethodSpec {
    pub fn of(method: MethodKind) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn label(&self) -> String {
        if let Some(name) = &self.name {
            return name.clone();
        }
        let mut label = self.method.label().to_string();
        if self.method == MethodKind::Cptc {
            if let Aggregation::LevelSet { .. } = self.aggregation {
                label.push_str("_levelset");
            }
        }
        if let Some(sp) = &self.state_predictor {
            label.push('[');
            label.push_str(&sp.label());
            label.push(']');
        }
        label
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForecasterSpec {
    pub lookback: usize,
}

impl Default for ForecasterSpec {
    fn default() -> Self {
        Self { lookback: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub methods: Vec<MethodSpec>,
    pub state_predictor: StatePredictorSpec,
    pub forecaster: ForecasterSpec,
    pub seeds: Vec<u64>,
    /// Train / validation / test fractions of the series length.
    pub split: [f64; 3],
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::BouncingBall(BouncingBallConfig::default()),
            methods: vec![
                MethodSpec::of(MethodKind::Cptc),
                MethodSpec::of(MethodKind::Aci),
                MethodSpec::of(MethodKind::OnlineCp),
            ],
            state_predictor: StatePredictorSpec::Oracle,
            forecaster: ForecasterSpec::default(),
            seeds: (0..5).collect(),
            split: DEFAULT_SPLIT,
            output_dir: PathBuf::from("out"),
        }
    }
}

fn check_predictor(field: &str, sp: &StatePredictorSpec) -> Result<()> {
    if let StatePredictorSpec::NoisyOracle { epsilon } = sp {
        if !(0.0..=1.0).contains(epsilon) {
            return Err(Error::config(field, format!("epsilon {epsilon} outside [0, 1]")));
        }
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::config("<config>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "need at least one seed"));
        }
        if self.methods.is_empty() {
            return Err(Error::config("methods", "need at least one method"));
        }
        if self.forecaster.lookback == 0 {
            return Err(Error::config("forecaster.lookback", "must be positive"));
        }
        split_indices(0, self.split)?;
        check_predictor("state_predictor", &self.state_predictor)?;
        let mut labels = std::collections::HashSet::new();
        for (i, m) in self.methods.iter().enumerate() {
            let field = |name: &str| format!("methods[{i}].{name}");
            if !(m.alpha > 0.0 && m.alpha < 1.0) {
                return Err(Error::config(field("alpha"), format!("{} is outside (0, 1)", m.alpha)));
            }
            if !(m.gamma.is_finite() && m.gamma > 0.0) {
                return Err(Error::config(field("gamma"), format!("{} must be positive", m.gamma)));
            }
            if let Aggregation::LevelSet { resolution } = m.aggregation {
                if !(resolution.is_finite() && resolution > 0.0) {
                    return Err(Error::config(field("aggregation.resolution"), "must be positive"));
                }
            }
            if m.pool_capacity == Some(0) {
                return Err(Error::config(field("pool_capacity"), "must be positive"));
            }
            if let Some(sp) = &m.state_predictor {
                check_predictor(&field("state_predictor"), sp)?;
            }
            if !labels.insert(m.label()) {
                return Err(Error::config(field("name"), format!("duplicate method label `{}`", m.label())));
            }
        }
        Ok(())
    }
}

/// Independent sub-seeds for the roles inside one run.
fn derive_seed(seed: u64, role: u64) -> u64 {
    // splitmix64 finalizer
    let mut x = seed ^ role.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

const ROLE_STATE_PREDICTOR: u64 = 1;
const ROLE_ENGINE: u64 = 2;

/// Everything produced by one `(method, seed)` run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub method: String,
    pub seed: u64,
    pub n_states: usize,
    pub records: Vec<StepRecord>,
    /// Iterates after the last update (one per state; one for baselines).
    pub final_alphas: Vec<f64>,
    /// Iterates before the first step.
    pub initial_alphas: Vec<f64>,
    pub runtime_ms: f64,
}

impl RunOutput {
    pub fn summary(&self) -> Result<RunSummary> {
        Ok(RunSummary {
            method: self.method.clone(),
            seed: self.seed,
            steps: self.records.len(),
            coverage: coverage(&self.records)?,
            mean_width: mean_width(&self.records)?,
            runtime_ms: self.runtime_ms,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: String,
    pub seed: u64,
    pub steps: usize,
    pub coverage: f64,
    pub mean_width: f64,
    pub runtime_ms: f64,
}

/// Across-seed statistics for one method. Standard deviations use the
/// `n - 1` denominator and are 0 for a single seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub runs: usize,
    pub coverage_mean: f64,
    pub coverage_std: f64,
    pub width_mean: f64,
    pub width_std: f64,
    pub width_median: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Groups runs by method, keeping first-appearance order.
pub fn summarize(runs: &[RunSummary]) -> Vec<MethodSummary> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<&RunSummary>> = BTreeMap::new();
    for r in runs {
        if !groups.contains_key(&r.method) {
            order.push(r.method.clone());
        }
        groups.entry(r.method.clone()).or_default().push(r);
    }
    order
        .into_iter()
        .map(|m| {
            let g = &groups[&m];
            let cov: Vec<f64> = g.iter().map(|r| r.coverage).collect();
            let wid: Vec<f64> = g.iter().map(|r| r.mean_width).collect();
            let (coverage_mean, coverage_std) = mean_std(&cov);
            let (width_mean, width_std) = mean_std(&wid);
            MethodSummary {
                method: m,
                runs: g.len(),
                coverage_mean,
                coverage_std,
                width_mean,
                width_std,
                width_median: median(&wid),
            }
        })
        .collect()
}

/// Series-level preparation shared by every method of one seed.
struct Prepared {
    observations: Vec<Observation>,
    n_states: usize,
    forecaster: StateLinearForecaster,
    /// Index into `observations` of the first test point.
    test_start: usize,
    /// Index into `observations` one past the last training point.
    train_end: usize,
}

fn prepare(cfg: &ExperimentConfig, seed: u64) -> Result<Prepared> {
    let mut series = cfg.dataset.load(seed)?;
    let lookback = cfg.forecaster.lookback;
    if series.z.is_none() {
        // unlabeled input runs as a single regime
        series.z = Some(vec![0; series.len()]);
        series.state_names = vec!["all".into()];
    }
    let n_states = series.n_states();
    let observations = series.observations(lookback)?;
    let (train_end_raw, val_end_raw) = split_indices(series.len(), cfg.split)?;
    // observation i predicts series index i + lookback
    let to_obs = |raw: usize| raw.saturating_sub(lookback).min(observations.len());
    let train_end = to_obs(train_end_raw);
    let test_start = to_obs(val_end_raw);
    if train_end == 0 {
        return Err(Error::config("split", "training segment holds no observations"));
    }
    if test_start >= observations.len() {
        return Err(Error::config("split", "test segment holds no observations"));
    }
    let forecaster = StateLinearForecaster::fit(&observations[..train_end], n_states)?;
    Ok(Prepared {
        observations,
        n_states,
        forecaster,
        test_start,
        train_end,
    })
}

fn build_predictor(
    spec: StatePredictorSpec,
    prep: &Prepared,
    seed: u64,
) -> Result<StatePredictor> {
    let kind = match spec {
        StatePredictorSpec::Oracle => StatePredictorKind::Oracle,
        StatePredictorSpec::NoisyOracle { epsilon } => StatePredictorKind::NoisyOracle { epsilon },
        StatePredictorSpec::MarkovFilter => StatePredictorKind::MarkovFilter(fit_markov(
            &prep.observations[..prep.train_end],
            &prep.forecaster,
        )?),
    };
    StatePredictor::new(kind, prep.n_states, derive_seed(seed, ROLE_STATE_PREDICTOR))
}

fn run_prepared(
    cfg: &ExperimentConfig,
    method: &MethodSpec,
    seed: u64,
    prep: &Prepared,
) -> Result<RunOutput> {
    let started = Instant::now();
    let spec = method.state_predictor.unwrap_or(cfg.state_predictor);
    let mut predictor = build_predictor(spec, prep, seed)?;
    let forecaster = &prep.forecaster;
    let warm_from = prep.test_start.saturating_sub(method.warm_start);
    let warm = &prep.observations[warm_from..prep.test_start];
    let test = &prep.observations[prep.test_start..];
    let capacity = method.pool_capacity.and_then(NonZeroUsize::new);

    let (records, initial_alphas, final_alphas) = match method.method {
        MethodKind::Cptc => {
            let mut engine = CptcEngine::new(CptcConfig {
                n_states: prep.n_states,
                alpha: method.alpha,
                gamma: method.gamma,
                aggregation: method.aggregation,
                sampling: method.sampling,
                warm_start: method.warm_start_mode,
                pool_capacity: capacity,
                seed: derive_seed(seed, ROLE_ENGINE),
            })?;
            for obs in warm {
                let dist = predictor.predict(obs, forecaster)?;
                engine.warm_start_one(&obs.x, obs.y, &dist, forecaster)?;
                predictor.observe(obs, forecaster)?;
            }
            let initial = engine.alphas().to_vec();
            let records = engine.run_stream(test, &mut predictor, forecaster)?;
            (records, initial, engine.alphas().to_vec())
        }
        MethodKind::Aci | MethodKind::OnlineCp => {
            let pool = ScorePool::with_capacity_limit(capacity);
            let mut engine = match method.method {
                MethodKind::Aci => Baseline::Aci(AciEngine::new(method.alpha, method.gamma, pool)?),
                _ => Baseline::OnlineCp(OnlineCpEngine::new(method.alpha, pool)?),
            };
            // baselines forecast with the most probable state
            for obs in warm {
                let dist = predictor.predict(obs, forecaster)?;
                let y_hat = forecaster.predict(&obs.x, dist.argmax())?;
                engine.warm_start([nonconformity(obs.y, y_hat)])?;
                predictor.observe(obs, forecaster)?;
            }
            let initial = vec![method.alpha];
            let mut records = Vec::with_capacity(test.len());
            for obs in test {
                let dist = predictor.predict(obs, forecaster)?;
                let y_hat = forecaster.predict(&obs.x, dist.argmax())?;
                records.push(engine.step(obs.t, obs.y, y_hat)?);
                predictor.observe(obs, forecaster)?;
            }
            let last = match &engine {
                Baseline::Aci(e) => e.alpha_t(),
                Baseline::OnlineCp(e) => e.alpha(),
            };
            (records, initial, vec![last])
        }
    };
    Ok(RunOutput {
        method: method.label(),
        seed,
        n_states: initial_alphas.len(),
        records,
        initial_alphas,
        final_alphas,
        runtime_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

/// Runs one method on one seed.
pub fn run_single(cfg: &ExperimentConfig, method: &MethodSpec, seed: u64) -> Result<RunOutput> {
    let prep = prepare(cfg, seed)?;
    run_prepared(cfg, method, seed, &prep)
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub runs: Vec<RunOutput>,
    pub summaries: Vec<RunSummary>,
    pub methods: Vec<MethodSummary>,
}

/// Runs every method on every seed, in parallel across seeds and methods.
/// Results are ordered by method then seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let per_seed: Vec<Vec<RunOutput>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let prep = prepare(cfg, seed)?;
            cfg.methods
                .par_iter()
                .map(|m| run_prepared(cfg, m, seed, &prep))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut runs = Vec::with_capacity(cfg.seeds.len() * cfg.methods.len());
    for m in 0..cfg.methods.len() {
        for seed_runs in &per_seed {
            runs.push(seed_runs[m].clone());
        }
    }
    let summaries = runs.iter().map(RunOutput::summary).collect::<Result<Vec<_>>>()?;
    let methods = summarize(&summaries);
    Ok(ExperimentOutput {
        runs,
        summaries,
        methods,
    })
}

/// Config fields accepted by [`sweep`].
pub const SWEEP_PARAMETERS: &[&str] = &[
    "alpha",
    "gamma",
    "epsilon",
    "aggregation",
    "resolution",
    "warm_start",
    "lookback",
];

fn parse_value<T: std::str::FromStr>(parameter: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(parameter, format!("cannot parse `{value}`")))
}

/// Returns a copy of `cfg` with `parameter` set to `value` for every method.
pub fn apply_parameter(cfg: &ExperimentConfig, parameter: &str, value: &str) -> Result<ExperimentConfig> {
    let mut out = cfg.clone();
    match parameter {
        "alpha" => {
            let v = parse_value(parameter, value)?;
            out.methods.iter_mut().for_each(|m| m.alpha = v);
        }
        "gamma" => {
            let v = parse_value(parameter, value)?;
            out.methods.iter_mut().for_each(|m| m.gamma = v);
        }
        "epsilon" => {
            let epsilon: f64 = parse_value(parameter, value)?;
            let sp = if epsilon == 0.0 {
                StatePredictorSpec::Oracle
            } else {
                StatePredictorSpec::NoisyOracle { epsilon }
            };
            out.state_predictor = sp;
            out.methods.iter_mut().for_each(|m| m.state_predictor = None);
        }
        "aggregation" => {
            let agg = match value.trim() {
                "union" => Aggregation::Union,
                "levelset" | "level_set" => Aggregation::LevelSet { resolution: DEFAULT_RESOLUTION },
                other => return Err(Error::config(parameter, format!("unknown aggregation `{other}`"))),
            };
            out.methods.iter_mut().for_each(|m| m.aggregation = agg);
        }
        "resolution" => {
            let resolution = parse_value(parameter, value)?;
            out.methods
                .iter_mut()
                .for_each(|m| m.aggregation = Aggregation::LevelSet { resolution });
        }
        "warm_start" => {
            let v = parse_value(parameter, value)?;
            out.methods.iter_mut().for_each(|m| m.warm_start = v);
        }
        "lookback" => out.forecaster.lookback = parse_value(parameter, value)?,
        other => {
            return Err(Error::config(
                "parameter",
                format!("unknown sweep parameter `{other}`; expected one of {SWEEP_PARAMETERS:?}"),
            ))
        }
    }
    for m in &mut out.methods {
        m.name = Some(format!("{}@{parameter}={}", m.label(), value.trim()));
    }
    out.validate()?;
    Ok(out)
}

/// One experiment per value, merged.
pub fn sweep(cfg: &ExperimentConfig, parameter: &str, values: &[String]) -> Result<ExperimentOutput> {
    if values.is_empty() {
        return Err(Error::config("values", "need at least one value"));
    }
    let configs = values
        .iter()
        .map(|v| apply_parameter(cfg, parameter, v))
        .collect::<Result<Vec<_>>>()?;
    let mut runs = Vec::new();
    for c in &configs {
        runs.extend(run_experiment(c)?.runs);
    }
    let summaries = runs.iter().map(RunOutput::summary).collect::<Result<Vec<_>>>()?;
    let methods = summarize(&summaries);
    Ok(ExperimentOutput {
        runs,
        summaries,
        methods,
    })
}

/// File-system safe version of a method label.
pub fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.' | '=' | '@') { c } else { '_' })
        .collect()
}

pub fn step_file(dir: &Path, method: &str, seed: u64) -> PathBuf {
    dir.join(sanitize(method)).join(format!("seed_{seed}.csv"))
}

/// Per-step CSV: `t,y_true,set_repr,covered,width,sampled_state,alpha_1..alpha_K`
/// with 1-based states.
pub fn write_steps(path: &Path, records: &[StepRecord], n_alphas: usize) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let io = |e| Error::io(path, e);
    let mut w = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
    let mut header = String::from("t,y_true,set_repr,covered,width,sampled_state");
    for k in 1..=n_alphas {
        header.push_str(&format!(",alpha_{k}"));
    }
    writeln!(w, "{header}").map_err(io)?;
    for r in records {
        write!(
            w,
            "{},{},{},{},{},{}",
            r.t,
            r.y_true,
            r.prediction_set,
            u8::from(r.covered),
            r.width,
            r.sampled_state + 1
        )
        .map_err(io)?;
        for a in &r.alphas {
            write!(w, ",{a}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

fn write_summaries(dir: &Path, runs: &[RunSummary], methods: &[MethodSummary]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("summary.csv");
    let io = |e| Error::io(&path, e);
    let mut w = std::io::BufWriter::new(fs::File::create(&path).map_err(io)?);
    writeln!(w, "method,seed,steps,coverage,mean_width,runtime_ms").map_err(io)?;
    for r in runs {
        writeln!(
            w,
            "{},{},{},{},{},{:.3}",
            r.method, r.seed, r.steps, r.coverage, r.mean_width, r.runtime_ms
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)?;

    let path = dir.join("summary_methods.csv");
    let io = |e| Error::io(&path, e);
    let mut w = std::io::BufWriter::new(fs::File::create(&path).map_err(io)?);
    writeln!(w, "method,runs,coverage_mean,coverage_std,width_mean,width_std,width_median").map_err(io)?;
    for m in methods {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            m.method, m.runs, m.coverage_mean, m.coverage_std, m.width_mean, m.width_std, m.width_median
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)?;

    let path = dir.join("summary.json");
    let json = serde_json::json!({ "runs": runs, "methods": methods });
    fs::write(&path, serde_json::to_string_pretty(&json).expect("summary serializes"))
        .map_err(|e| Error::io(&path, e))
}

/// Writes per-step files and summaries under `dir`.
pub fn write_outputs(dir: &Path, out: &ExperimentOutput) -> Result<()> {
    for run in &out.runs {
        write_steps(&step_file(dir, &run.method, run.seed), &run.records, run.n_states)?;
    }
    write_summaries(dir, &out.summaries, &out.methods)
}

/// Parsed row of a per-step file.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRow {
    pub t: i64,
    pub y_true: f64,
    pub covered: bool,
    pub width: f64,
}

pub fn read_steps(path: &Path) -> Result<Vec<StepRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let bad = |message: String| Error::Parse {
            path: path.into(),
            line: i + 1,
            message,
        };
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() < 6 {
            return Err(bad(format!("expected at least 6 columns, got {}", cols.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("`{s}` is not a number")));
        rows.push(StepRow {
            t: cols[0].parse().map_err(|_| bad(format!("`{}` is not an integer", cols[0])))?,
            y_true: num(cols[1])?,
            covered: match cols[3] {
                "1" => true,
                "0" => false,
                other => return Err(bad(format!("covered flag `{other}` is not 0/1"))),
            },
            width: num(cols[4])?,
        });
    }
    Ok(rows)
}

/// Recomputes run and method summaries from the per-step files under `dir`
/// (layout `<dir>/<method>/seed_<n>.csv`) and rewrites the summary files.
/// Runtimes are not recoverable and are reported as 0.
pub fn report(dir: &Path) -> Result<(Vec<RunSummary>, Vec<MethodSummary>)> {
    let mut runs = Vec::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    entries.sort();
    for method_dir in entries {
        let method = method_dir.file_name().unwrap_or_default().to_string_lossy().to_string();
        let mut files: Vec<(u64, PathBuf)> = fs::read_dir(&method_dir)
            .map_err(|e| Error::io(&method_dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter_map(|p| {
                let stem = p.file_stem()?.to_str()?.strip_prefix("seed_")?.parse().ok()?;
                (p.extension()? == "csv").then_some((stem, p))
            })
            .collect();
        files.sort();
        for (seed, path) in files {
            let rows = read_steps(&path)?;
            if rows.is_empty() {
                return Err(Error::Parse {
                    path,
                    line: 1,
                    message: "no step rows".into(),
                });
            }
            let n = rows.len() as f64;
            runs.push(RunSummary {
                method: method.clone(),
                seed,
                steps: rows.len(),
                coverage: rows.iter().filter(|r| r.covered).count() as f64 / n,
                mean_width: rows.iter().map(|r| r.width).sum::<f64>() / n,
                runtime_ms: 0.0,
            });
        }
    }
    if runs.is_empty() {
        return Err(Error::config("out", format!("no per-step files under {}", dir.display())));
    }
    let methods = summarize(&runs);
    write_summaries(dir, &runs, &methods)?;
    Ok((runs, methods))
}
