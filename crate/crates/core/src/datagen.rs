//! Synthetic switching series and a CSV loader for external ones.
//!
//! Generators are pure functions of their configuration: the seed lives in
//! the config and drives a ChaCha8 stream, so identical configs produce
//! bit-identical series on every platform.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Observation;

/// Train / validation / test proportions used by the harness.
pub const DEFAULT_SPLIT: [f64; 3] = [0.7, 0.1, 0.2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BallNoise {
    /// Gaussian noise on the reported height; the latent path is exact.
    Observation,
    /// Gaussian noise on every position increment, reflected at the walls.
    Dynamics,
}

/// Ball bouncing between two walls at constant speed. State 0 is "moving
/// up", state 1 "moving down"; each has its own noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BouncingBallConfig {
    pub length: usize,
    pub wall_low: f64,
    pub wall_high: f64,
    pub speed: f64,
    pub noise: BallNoise,
    pub sigma_up: f64,
    pub sigma_down: f64,
    pub seed: u64,
}

impl Default for BouncingBallConfig {
    fn default() -> Self {
        Self {
            length: 2500,
            wall_low: 0.0,
            wall_high: 1.0,
            speed: 0.05,
            noise: BallNoise::Observation,
            sigma_up: 0.005,
            sigma_down: 0.03,
            seed: 0,
        }
    }
}

impl BouncingBallConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.wall_low.is_finite() && self.wall_high.is_finite() && self.wall_low < self.wall_high) {
            return Err(Error::config("wall_low", "walls must be finite with wall_low < wall_high"));
        }
        let gap = self.wall_high - self.wall_low;
        if !(self.speed > 0.0 && self.speed < gap) {
            return Err(Error::config("speed", format!("must lie in (0, {gap})")));
        }
        for (name, s) in [("sigma_up", self.sigma_up), ("sigma_down", self.sigma_down)] {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::config(name, "must be finite and nonnegative"));
            }
        }
        Ok(())
    }
}

/// One regime of a switching AR(1) process: `y_t = a y_{t-1} + c + N(0, sigma²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArMode {
    pub a: f64,
    pub c: f64,
    pub sigma: f64,
}

/// How regime segments are laid out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Segment lengths `1 + Poisson(lambda)`; each new segment picks a mode
    /// uniformly among the modes other than the current one.
    Poisson { lambda: f64 },
    /// Explicit `(mode, length)` segments, repeated until the series is full.
    Fixed { segments: Vec<(usize, usize)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwitchingArConfig {
    pub length: usize,
    pub modes: Vec<ArMode>,
    pub schedule: Schedule,
    pub y0: f64,
    pub seed: u64,
}

impl Default for SwitchingArConfig {
    fn default() -> Self {
        Self::three_mode(2500, 0)
    }
}

impl SwitchingArConfig {
    /// Three regimes with Poisson(20) durations.
    pub fn three_mode(length: usize, seed: u64) -> Self {
        Self {
            length,
            modes: vec![
                ArMode { a: 0.9, c: 0.0, sigma: 0.1 },
                ArMode { a: 0.5, c: 1.0, sigma: 0.3 },
                ArMode { a: -0.7, c: -1.0, sigma: 0.5 },
            ],
            schedule: Schedule::Poisson { lambda: 20.0 },
            y0: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(Error::config("modes", "need at least one mode"));
        }
        for (i, m) in self.modes.iter().enumerate() {
            if !(m.a.is_finite() && m.c.is_finite() && m.sigma.is_finite() && m.sigma >= 0.0) {
                return Err(Error::config(format!("modes[{i}]"), "coefficients must be finite, sigma >= 0"));
            }
        }
        match &self.schedule {
            Schedule::Poisson { lambda } if !(lambda.is_finite() && *lambda > 0.0) => {
                return Err(Error::config("schedule.lambda", "must be positive"));
            }
            Schedule::Poisson { .. } if self.modes.len() < 2 => {
                return Err(Error::config("modes", "a Poisson schedule needs at least two modes"));
            }
            Schedule::Fixed { segments } => {
                if segments.is_empty() || segments.iter().any(|(_, len)| *len == 0) {
                    return Err(Error::config("schedule.segments", "need nonempty segments"));
                }
                if segments.iter().any(|(m, _)| *m >= self.modes.len()) {
                    return Err(Error::config("schedule.segments", "mode index out of range"));
                }
            }
            _ => {}
        }
        if !self.y0.is_finite() {
            return Err(Error::config("y0", "must be finite"));
        }
        Ok(())
    }
}

/// A univariate series with optional state labels (0-based).
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSeries {
    pub t: Vec<i64>,
    pub y: Vec<f64>,
    pub z: Option<Vec<usize>>,
    /// Display names of the states, indexed by label.
    pub state_names: Vec<String>,
    /// Indices `i` with `z[i] != z[i - 1]`.
    pub change_points: Vec<usize>,
    pub seed: Option<u64>,
}

impl SyntheticSeries {
    fn labeled(y: Vec<f64>, z: Vec<usize>, state_names: Vec<String>, seed: u64) -> Self {
        let change_points = change_points(&z);
        Self {
            t: (0..y.len() as i64).collect(),
            y,
            z: Some(z),
            state_names,
            change_points,
            seed: Some(seed),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_states(&self) -> usize {
        self.state_names.len().max(1)
    }

    /// Lookback features: observation `i` has `x = y[i - lookback..i]` and
    /// target `y[i]`, for `i >= lookback`.
    pub fn observations(&self, lookback: usize) -> Result<Vec<Observation>> {
        if lookback == 0 {
            return Err(Error::invalid("lookback must be positive"));
        }
        if self.len() <= lookback {
            return Err(Error::invalid(format!(
                "series of length {} is too short for lookback {lookback}",
                self.len()
            )));
        }
        Ok((lookback..self.len())
            .map(|i| Observation {
                t: self.t[i],
                x: self.y[i - lookback..i].to_vec(),
                y: self.y[i],
                z_true: self.z.as_ref().map(|z| z[i]),
            })
            .collect())
    }

    /// Writes `t,y,z` (or `t,y` without labels) with 1-based state labels.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        match &self.z {
            Some(z) => {
                writeln!(w, "t,y,z").map_err(io)?;
                for ((t, y), z) in self.t.iter().zip(&self.y).zip(z) {
                    writeln!(w, "{t},{y},{}", z + 1).map_err(io)?;
                }
            }
            None => {
                writeln!(w, "t,y").map_err(io)?;
                for (t, y) in self.t.iter().zip(&self.y) {
                    writeln!(w, "{t},{y}").map_err(io)?;
                }
            }
        }
        w.flush().map_err(io)
    }
}

/// Positions where the label changes.
pub fn change_points(z: &[usize]) -> Vec<usize> {
    (1..z.len()).filter(|&i| z[i] != z[i - 1]).collect()
}

/// `(train_end, val_end)` for a series of length `n`, from cumulative
/// fractions rounded to the nearest index.
pub fn split_indices(n: usize, fractions: [f64; 3]) -> Result<(usize, usize)> {
    if fractions.iter().any(|f| !(f.is_finite() && *f >= 0.0))
        || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(Error::config("split", format!("{fractions:?} must be nonnegative and sum to 1")));
    }
    let train_end = (fractions[0] * n as f64).round() as usize;
    let val_end = ((fractions[0] + fractions[1]) * n as f64).round() as usize;
    Ok((train_end.min(n), val_end.min(n)))
}

pub fn gen_bouncing_ball(cfg: &BouncingBallConfig) -> Result<SyntheticSeries> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = [
        Normal::new(0.0, cfg.sigma_up).map_err(|e| Error::config("sigma_up", e.to_string()))?,
        Normal::new(0.0, cfg.sigma_down).map_err(|e| Error::config("sigma_down", e.to_string()))?,
    ];
    let (low, high) = (cfg.wall_low, cfg.wall_high);
    let gap = high - low;
    let mut y = Vec::with_capacity(cfg.length);
    let mut z = Vec::with_capacity(cfg.length);

    match cfg.noise {
        BallNoise::Observation => {
            // fold the unfolded path t * speed into the walls
            for t in 1..=cfg.length {
                let travelled = t as f64 * cfg.speed;
                let phase = travelled.rem_euclid(2.0 * gap);
                let height = low + if phase <= gap { phase } else { 2.0 * gap - phase };
                let mid = (travelled - 0.5 * cfg.speed).rem_euclid(2.0 * gap);
                let state = usize::from(mid >= gap);
                z.push(state);
                y.push(height + noise[state].sample(&mut rng));
            }
        }
        BallNoise::Dynamics => {
            let mut h = low;
            let mut state = 0usize;
            for _ in 0..cfg.length {
                let dir = if state == 0 { 1.0 } else { -1.0 };
                let mut next = h + dir * cfg.speed + noise[state].sample(&mut rng);
                let mut next_state = state;
                while !(low..=high).contains(&next) {
                    if next > high {
                        next = 2.0 * high - next;
                        next_state = 1;
                    } else {
                        next = 2.0 * low - next;
                        next_state = 0;
                    }
                }
                z.push(state);
                y.push(next);
                h = next;
                state = next_state;
            }
        }
    }
    Ok(SyntheticSeries::labeled(
        y,
        z,
        vec!["up".into(), "down".into()],
        cfg.seed,
    ))
}

pub fn gen_switching_ar(cfg: &SwitchingArConfig) -> Result<SyntheticSeries> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let k = cfg.modes.len();
    let mut z = Vec::with_capacity(cfg.length);
    match &cfg.schedule {
        Schedule::Poisson { lambda } => {
            let durations = Poisson::new(*lambda).map_err(|e| Error::config("schedule.lambda", e.to_string()))?;
            let mut mode = rng.random_range(0..k);
            while z.len() < cfg.length {
                let len = 1 + durations.sample(&mut rng) as usize;
                let take = len.min(cfg.length - z.len());
                z.extend(std::iter::repeat_n(mode, take));
                let other = rng.random_range(0..k - 1);
                mode = if other >= mode { other + 1 } else { other };
            }
        }
        Schedule::Fixed { segments } => {
            'fill: loop {
                for &(mode, len) in segments {
                    let take = len.min(cfg.length - z.len());
                    z.extend(std::iter::repeat_n(mode, take));
                    if z.len() == cfg.length {
                        break 'fill;
                    }
                }
            }
        }
    }
    let noises: Vec<Normal<f64>> = cfg
        .modes
        .iter()
        .map(|m| Normal::new(0.0, m.sigma))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::config("modes.sigma", e.to_string()))?;
    let mut y = Vec::with_capacity(cfg.length);
    let mut prev = cfg.y0;
    for &mode in &z {
        let m = cfg.modes[mode];
        prev = m.a * prev + m.c + noises[mode].sample(&mut rng);
        y.push(prev);
    }
    let names = (1..=k).map(|i| format!("mode{i}")).collect();
    Ok(SyntheticSeries::labeled(y, z, names, cfg.seed))
}

/// The three-regime preset of [`SwitchingArConfig::three_mode`].
pub fn gen_three_mode(length: usize, seed: u64) -> Result<SyntheticSeries> {
    gen_switching_ar(&SwitchingArConfig::three_mode(length, seed))
}

/// Column names for [`load_csv`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvOptions {
    pub t_column: String,
    pub y_column: String,
    /// Used when present in the header.
    pub z_column: Option<String>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            t_column: "t".into(),
            y_column: "y".into(),
            z_column: Some("z".into()),
        }
    }
}

/// Reads a headed, comma-separated series. State labels, when present, are
/// mapped to `0..K` in order of first appearance.
pub fn load_csv(path: &Path, options: &CsvOptions) -> Result<SyntheticSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Parse {
                path: path.into(),
                line: 1,
                message: format!("{other:?}"),
            },
        })?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.into(),
        line,
        message,
    };
    let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let t_col = column(&options.t_column)
        .ok_or_else(|| parse_err(1, format!("missing column `{}`", options.t_column)))?;
    let y_col = column(&options.y_column)
        .ok_or_else(|| parse_err(1, format!("missing column `{}`", options.y_column)))?;
    let z_col = options.z_column.as_deref().and_then(column);

    let mut t = Vec::new();
    let mut y = Vec::new();
    let mut z = Vec::new();
    let mut names: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (i, record) in reader.records().enumerate() {
        // header is line 1
        let line = i + 2;
        let record = record.map_err(|e| parse_err(line, e.to_string()))?;
        let field = |col: usize| {
            record
                .get(col)
                .ok_or_else(|| parse_err(line, format!("missing field {}", col + 1)))
        };
        let tv: i64 = field(t_col)?
            .parse()
            .map_err(|_| parse_err(line, format!("`{}` is not an integer time", field(t_col).unwrap_or(""))))?;
        let yv: f64 = field(y_col)?
            .parse()
            .map_err(|_| parse_err(line, format!("`{}` is not a number", field(y_col).unwrap_or(""))))?;
        if !yv.is_finite() {
            return Err(parse_err(line, format!("non-finite target {yv}")));
        }
        if let Some(&prev) = t.last() {
            if tv <= prev {
                return Err(parse_err(line, format!("time {tv} does not increase after {prev}")));
            }
        }
        if let Some(col) = z_col {
            let label = field(col)?.to_string();
            let next = names.len();
            let id = *index.entry(label.clone()).or_insert_with(|| {
                names.push(label);
                next
            });
            z.push(id);
        }
        t.push(tv);
        y.push(yv);
    }
    let z = z_col.map(|_| z);
    let change_points = z.as_deref().map(change_points).unwrap_or_default();
    Ok(SyntheticSeries {
        t,
        y,
        z,
        state_names: names,
        change_points,
        seed: None,
    })
}
