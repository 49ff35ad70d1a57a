//! Experiment runner for the five sensor-to-camera settings: configuration,
//! per-episode CSV logging, summary statistics and SVG learning curves.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bdpi::{Agent, AgentConfig};
use crate::error::{Error, Result};
use crate::mdp::{run_episode, Environment, Experience, Observation, Policy};
use crate::navsim::{NavEnv, ObservationKind, SceneConfig, ACTION_COUNT, SENSOR_COUNT};
use crate::transfer::Advisor;

pub const CSV_HEADER: &str = "setting,seed,episode,return,env_steps,seconds";
pub const STATS_HEADER: &str = "setting,episode,mean,std,runs";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Setting {
    SensorsNoTransfer,
    CameraNoTransfer,
    CameraAct,
    CameraLearn,
    CameraActLearn,
}

/// What a setting fixes on top of the base learner configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Preset {
    pub observation: ObservationKind,
    pub actor_lr: f64,
    /// Applied to both critic and actor training passes.
    pub epochs: usize,
    pub tl: f64,
    pub acting_transfer: bool,
}

impl Setting {
    pub const ALL: [Setting; 5] = [
        Setting::SensorsNoTransfer,
        Setting::CameraNoTransfer,
        Setting::CameraAct,
        Setting::CameraLearn,
        Setting::CameraActLearn,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Setting::SensorsNoTransfer => "sensors-no-transfer",
            Setting::CameraNoTransfer => "camera-no-transfer",
            Setting::CameraAct => "camera-act",
            Setting::CameraLearn => "camera-learn",
            Setting::CameraActLearn => "camera-act-learn",
        }
    }

    pub fn preset(self) -> Preset {
        let camera = |tl, acting_transfer| Preset {
            observation: ObservationKind::Camera,
            actor_lr: 1e-6,
            epochs: 1,
            tl,
            acting_transfer,
        };
        match self {
            Setting::SensorsNoTransfer => Preset {
                observation: ObservationKind::Sensors,
                actor_lr: 1e-4,
                epochs: 20,
                tl: 0.0,
                acting_transfer: false,
            },
            Setting::CameraNoTransfer => camera(0.0, false),
            Setting::CameraAct => camera(0.0, true),
            Setting::CameraLearn => camera(0.03, false),
            Setting::CameraActLearn => camera(0.01, true),
        }
    }

    pub fn requires_advisor(self) -> bool {
        let p = self.preset();
        p.acting_transfer || p.tl > 0.0
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|x| x.tag() == s)
            .ok_or_else(|| Error::Config(format!("unknown setting `{s}`")))
    }
}

/// Optional replacements for [`AgentConfig`] fields.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentOverrides {
    pub gamma: Option<f64>,
    pub alpha: Option<f64>,
    pub lambda: Option<f64>,
    pub n_critics: Option<usize>,
    pub n_train_iters: Option<usize>,
    pub batch_size: Option<usize>,
    pub buffer_capacity: Option<usize>,
    pub critic_epochs: Option<usize>,
    pub actor_epochs: Option<usize>,
    pub actor_lr: Option<f64>,
    pub critic_lr: Option<f64>,
    pub hidden_units: Option<usize>,
    pub tl: Option<f64>,
    pub acting_transfer: Option<bool>,
}

impl AgentOverrides {
    pub fn apply(&self, c: &mut AgentConfig) {
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = self.$f { c.$f = v; })*};
        }
        set!(
            gamma,
            alpha,
            lambda,
            n_critics,
            n_train_iters,
            batch_size,
            buffer_capacity,
            critic_epochs,
            actor_epochs,
            actor_lr,
            critic_lr,
            hidden_units,
            tl,
            acting_transfer
        );
    }
}

/// Source of the `seconds` column.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Clock {
    /// Environment steps times the control period: reproducible.
    #[default]
    Simulated,
    Wall,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Run one training epoch after every `train_every` environment steps.
    pub train_every: usize,
    pub clock: Clock,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            train_every: 1,
            clock: Clock::Simulated,
        }
    }
}

/// The experiment config file. Keys in `[agent]` apply to every setting;
/// `[sensors]` and `[camera]` then apply to settings with that observation,
/// after the setting's own preset.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    pub run: RunSection,
    pub agent: AgentOverrides,
    pub sensors: AgentOverrides,
    pub camera: AgentOverrides,
    pub scene: SceneConfig,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Preset first, then `[agent]`, then the observation-specific section.
    pub fn agent_config(&self, setting: Setting) -> AgentConfig {
        let p = setting.preset();
        let mut c = AgentConfig {
            actor_lr: p.actor_lr,
            critic_epochs: p.epochs,
            actor_epochs: p.epochs,
            tl: p.tl,
            acting_transfer: p.acting_transfer,
            ..AgentConfig::default()
        };
        self.agent.apply(&mut c);
        match p.observation {
            ObservationKind::Sensors => self.sensors.apply(&mut c),
            ObservationKind::Camera => self.camera.apply(&mut c),
        }
        c
    }
}

/// Everything one `run_setting` call needs.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub setting: Setting,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub agent: AgentConfig,
    pub scene: SceneConfig,
    pub advisor: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub train_every: usize,
    pub clock: Clock,
}

impl ExperimentConfig {
    pub fn new(
        file: &ConfigFile,
        setting: Setting,
        seeds: Vec<u64>,
        episodes: usize,
        out_dir: impl Into<PathBuf>,
        advisor: Option<PathBuf>,
    ) -> Self {
        Self {
            setting,
            episodes,
            seeds,
            agent: file.agent_config(setting),
            scene: file.scene.clone(),
            advisor,
            out_dir: out_dir.into(),
            train_every: file.run.train_every,
            clock: file.run.clock,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.train_every == 0 {
            return Err(Error::Config("train_every must be at least 1".into()));
        }
        if self.setting.requires_advisor() && self.advisor.is_none() {
            return Err(Error::Config(format!(
                "setting {} needs an advisor checkpoint",
                self.setting
            )));
        }
        self.agent.validate()?;
        self.scene.validate()
    }

    pub fn csv_path(&self) -> PathBuf {
        self.out_dir.join(format!("{}.csv", self.setting.tag()))
    }
}

/// One line of the run CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub setting: String,
    pub seed: u64,
    pub episode: usize,
    #[serde(rename = "return")]
    pub total_return: f64,
    /// Cumulative over the seed's run.
    pub env_steps: u64,
    pub seconds: f64,
}

/// The learner of one seed at the end of its run.
#[derive(Debug)]
pub struct TrainedAgent {
    pub seed: u64,
    pub agent: Agent,
}

struct Learner<'a> {
    agent: &'a mut Agent,
    train_every: u64,
    steps: &'a mut u64,
}

impl Policy for Learner<'_> {
    fn act(&mut self, observation: &Observation) -> Result<usize> {
        self.agent.act(&observation.primary, &observation.advisor)
    }

    fn observe(&mut self, _experience: &Experience) -> Result<()> {
        *self.steps += 1;
        if (*self.steps).is_multiple_of(self.train_every) {
            self.agent.train_epoch()?;
        }
        Ok(())
    }
}

/// Reset seed of episode `episode` in the run with `seed`.
pub fn episode_seed(seed: u64, episode: usize) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(episode as u64)
        .wrapping_add(0x632b_e59b_d9b4_e019);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn load_advisor(path: &Path) -> Result<Advisor> {
    let advisor = Advisor::load(path)?;
    if advisor.observation_width() != SENSOR_COUNT || advisor.action_count() != ACTION_COUNT {
        return Err(Error::Config(format!(
            "advisor {} maps {} inputs to {} actions; expected {SENSOR_COUNT} -> {ACTION_COUNT}",
            path.display(),
            advisor.observation_width(),
            advisor.action_count()
        )));
    }
    Ok(advisor)
}

/// Runs every seed of the setting and writes `<out_dir>/<setting>.csv`.
pub fn run_setting(config: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    run_setting_with(config, |_| {}).map(|(records, _)| records)
}

/// [`run_setting`] that also reports each record as it is written and
/// returns the final agent of every seed.
pub fn run_setting_with(
    config: &ExperimentConfig,
    mut on_record: impl FnMut(&RunRecord),
) -> Result<(Vec<RunRecord>, Vec<TrainedAgent>)> {
    config.validate()?;
    let advisor = match (&config.advisor, config.setting.requires_advisor()) {
        (Some(path), true) => Some(load_advisor(path)?),
        _ => None,
    };

    fs::create_dir_all(&config.out_dir)?;
    let mut file = fs::File::create(config.csv_path())?;
    writeln!(file, "{CSV_HEADER}")?;
    file.flush()?;
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(file);

    let kind = config.setting.preset().observation;
    let mut records = Vec::new();
    let mut agents = Vec::new();
    for &seed in &config.seeds {
        let started = Instant::now();
        let mut env = NavEnv::new(config.scene.clone(), kind)?;
        let mut agent = Agent::new(
            config.agent.clone(),
            env.observation_width(),
            env.action_count(),
            seed,
        )?;
        if let Some(a) = &advisor {
            agent.set_advisor(a.clone());
        }
        let buffer = agent.buffer().clone();
        let mut steps = 0u64;
        for episode in 0..config.episodes {
            let mut learner = Learner {
                agent: &mut agent,
                train_every: config.train_every as u64,
                steps: &mut steps,
            };
            let outcome = run_episode(
                &mut env,
                episode_seed(seed, episode),
                &mut learner,
                config.scene.episode_cap,
                Some(&buffer),
            )?;
            let seconds = match config.clock {
                Clock::Simulated => steps as f64 * config.scene.dt,
                Clock::Wall => started.elapsed().as_secs_f64(),
            };
            let record = RunRecord {
                setting: config.setting.tag().to_string(),
                seed,
                episode,
                total_return: outcome.total_return,
                env_steps: steps,
                seconds,
            };
            writer.serialize(&record)?;
            writer.flush()?;
            on_record(&record);
            records.push(record);
        }
        agents.push(TrainedAgent { seed, agent });
    }
    writer.flush()?;
    Ok((records, agents))
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    reader
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Reads every run CSV (files whose header is [`CSV_HEADER`]) in `dir`, in
/// file-name order.
pub fn read_run_dir(dir: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "csv"));
    paths.sort();
    let mut records = Vec::new();
    for p in paths {
        let text = fs::read_to_string(&p)?;
        if text.lines().next() == Some(CSV_HEADER) {
            records.extend(read_records(&p)?);
        }
    }
    Ok(records)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub setting: String,
    pub episode: usize,
    pub mean: f64,
    /// Population standard deviation across seeds.
    pub std: f64,
    pub runs: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SettingStats {
    pub setting: String,
    pub episodes: Vec<EpisodeStats>,
    /// Mean return over the last 10% of episodes (at least one).
    pub final_score: f64,
}

/// Per-setting statistics, best final score first.
#[derive(Clone, Debug, PartialEq)]
pub struct Statistics {
    pub settings: Vec<SettingStats>,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Number of trailing episodes the final score averages over.
pub fn final_window(episodes: usize) -> usize {
    episodes.div_ceil(10).max(1)
}

/// Final score of each seed's own returns, in seed order of appearance.
pub fn seed_scores(records: &[RunRecord]) -> Vec<(u64, f64)> {
    let mut by_seed: Vec<(u64, Vec<f64>)> = Vec::new();
    for r in records {
        match by_seed.iter_mut().find(|(s, _)| *s == r.seed) {
            Some((_, v)) => v.push(r.total_return),
            None => by_seed.push((r.seed, vec![r.total_return])),
        }
    }
    by_seed
        .into_iter()
        .map(|(seed, v)| {
            let tail = &v[v.len() - final_window(v.len())..];
            (seed, tail.iter().sum::<f64>() / tail.len() as f64)
        })
        .collect()
}

fn final_score(episodes: &[EpisodeStats]) -> f64 {
    let tail = &episodes[episodes.len() - final_window(episodes.len())..];
    tail.iter().map(|e| e.mean).sum::<f64>() / tail.len() as f64
}

fn rank(mut settings: Vec<SettingStats>) -> Statistics {
    settings.sort_by(|a, b| {
        b.final_score
            .total_cmp(&a.final_score)
            .then_with(|| a.setting.cmp(&b.setting))
    });
    Statistics { settings }
}

pub fn summarize(records: &[RunRecord]) -> Result<Statistics> {
    if records.is_empty() {
        return Err(Error::Config("no run records to summarize".into()));
    }
    let mut grouped: BTreeMap<&str, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for r in records {
        grouped
            .entry(&r.setting)
            .or_default()
            .entry(r.episode)
            .or_default()
            .push(r.total_return);
    }
    let settings = grouped
        .into_iter()
        .map(|(setting, episodes)| {
            let episodes: Vec<EpisodeStats> = episodes
                .into_iter()
                .map(|(episode, returns)| {
                    let (mean, std) = mean_std(&returns);
                    EpisodeStats {
                        setting: setting.to_string(),
                        episode,
                        mean,
                        std,
                        runs: returns.len(),
                    }
                })
                .collect();
            SettingStats {
                setting: setting.to_string(),
                final_score: final_score(&episodes),
                episodes,
            }
        })
        .collect();
    Ok(rank(settings))
}

impl Statistics {
    pub fn get(&self, setting: &str) -> Option<&SettingStats> {
        self.settings.iter().find(|s| s.setting == setting)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for s in &self.settings {
            for e in &s.episodes {
                w.serialize(e)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let mut grouped: Vec<SettingStats> = Vec::new();
        for row in reader.deserialize::<EpisodeStats>() {
            let row = row?;
            match grouped.iter_mut().find(|s| s.setting == row.setting) {
                Some(s) => s.episodes.push(row),
                None => grouped.push(SettingStats {
                    setting: row.setting.clone(),
                    episodes: vec![row],
                    final_score: 0.0,
                }),
            }
        }
        if grouped.is_empty() {
            return Err(Error::Config("statistics file has no rows".into()));
        }
        for s in &mut grouped {
            s.episodes.sort_by_key(|e| e.episode);
            s.final_score = final_score(&s.episodes);
        }
        Ok(rank(grouped))
    }

    /// One `setting final_score` line per setting, best first.
    pub fn ranking(&self) -> String {
        let mut out = String::new();
        for s in &self.settings {
            let _ = writeln!(out, "{}\t{:.3}", s.setting, s.final_score);
        }
        out
    }
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn nice_step(range: f64) -> f64 {
    let raw = range / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let nice = if norm < 1.5 {
        1.0
    } else if norm < 3.5 {
        2.0
    } else if norm < 7.5 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders mean-return curves with shaded one-std bands.
pub fn render_svg(stats: &Statistics) -> Result<String> {
    let points = stats.settings.iter().flat_map(|s| &s.episodes);
    let mut it = points.clone().peekable();
    if it.peek().is_none() {
        return Err(Error::Config("nothing to plot".into()));
    }
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for e in points {
        x0 = x0.min(e.episode as f64);
        x1 = x1.max(e.episode as f64);
        y0 = y0.min(e.mean - e.std);
        y1 = y1.max(e.mean + e.std);
    }
    if x1 - x0 < 1.0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-9 {
        y0 -= 1.0;
        y1 += 1.0;
    }
    let ystep = nice_step(y1 - y0);
    y0 = (y0 / ystep).floor() * ystep;
    y1 = (y1 / ystep).ceil() * ystep;

    let (w, h) = (820.0, 480.0);
    let (left, right, top, bottom) = (70.0, 200.0, 20.0, 60.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + (y1 - y) / (y1 - y0) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);

    // y grid and ticks
    let ticks = ((y1 - y0) / ystep).round() as usize;
    for k in 0..=ticks {
        let v = y0 + k as f64 * ystep;
        let y = sy(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{left:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e0e0e0"/>"##,
            left + pw
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            left - 6.0,
            y + 4.0,
            fmt_tick(v, ystep)
        );
    }
    let xstep = nice_step(x1 - x0).max(1.0);
    let mut v = (x0 / xstep).ceil() * xstep;
    while v <= x1 + 1e-9 {
        let x = sx(v);
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            top + ph + 18.0,
            fmt_tick(v, xstep)
        );
        v += xstep;
    }
    let _ = writeln!(
        svg,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">episode</text>"#,
        left + pw / 2.0,
        h - 18.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">return</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );

    for (i, s) in stats.settings.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            svg,
            r#"<g class="setting" data-setting="{}">"#,
            escape(&s.setting)
        );
        if s.episodes.len() == 1 {
            let e = &s.episodes[0];
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{color}"/>"#,
                sx(e.episode as f64),
                sy(e.mean)
            );
        } else {
            let mut band = String::new();
            for e in &s.episodes {
                let _ = write!(
                    band,
                    "{:.2},{:.2} ",
                    sx(e.episode as f64),
                    sy(e.mean + e.std)
                );
            }
            for e in s.episodes.iter().rev() {
                let _ = write!(
                    band,
                    "{:.2},{:.2} ",
                    sx(e.episode as f64),
                    sy(e.mean - e.std)
                );
            }
            let _ = writeln!(
                svg,
                r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                band.trim_end()
            );
            let line: Vec<String> = s
                .episodes
                .iter()
                .map(|e| format!("{:.2},{:.2}", sx(e.episode as f64), sy(e.mean)))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                line.join(" ")
            );
        }
        let ly = top + 10.0 + 20.0 * i as f64;
        let lx = left + pw + 15.0;
        let _ = writeln!(
            svg,
            r#"<rect class="legend" x="{lx:.2}" y="{:.2}" width="14" height="10" fill="{color}"/>"#,
            ly - 9.0
        );
        let _ = writeln!(
            svg,
            r#"<text class="legend" x="{:.2}" y="{ly:.2}">{}</text>"#,
            lx + 20.0,
            escape(&s.setting)
        );
        svg.push_str("</g>\n");
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn fmt_tick(v: f64, step: f64) -> String {
    let decimals = if step >= 1.0 {
        0
    } else {
        (-step.log10().floor()) as usize
    };
    let v = if v.abs() < step * 1e-9 { 0.0 } else { v };
    format!("{v:.decimals$}")
}

pub fn emit_plot(stats: &Statistics, path: impl AsRef<Path>) -> Result<()> {
    let svg = render_svg(stats)?;
    fs::write(path, svg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn setting_table() {
        // (tag, camera, actor lr, epochs, tl, acting transfer, needs advisor)
        let table = [
            ("sensors-no-transfer", false, 1e-4, 20, 0.0, false, false),
            ("camera-no-transfer", true, 1e-6, 1, 0.0, false, false),
            ("camera-act", true, 1e-6, 1, 0.0, true, true),
            ("camera-learn", true, 1e-6, 1, 0.03, false, true),
            ("camera-act-learn", true, 1e-6, 1, 0.01, true, true),
        ];
        let file = ConfigFile::default();
        for (tag, camera, lr, epochs, tl, act, advisor) in table {
            let s: Setting = tag.parse().unwrap();
            assert_eq!(s.tag(), tag);
            let p = s.preset();
            assert_eq!(p.observation == ObservationKind::Camera, camera, "{tag}");
            let c = file.agent_config(s);
            assert_eq!(c.actor_lr, lr, "{tag}");
            assert_eq!(c.critic_epochs, epochs, "{tag}");
            assert_eq!(c.actor_epochs, epochs, "{tag}");
            assert_eq!(c.tl, tl, "{tag}");
            assert_eq!(c.acting_transfer, act, "{tag}");
            assert_eq!(s.requires_advisor(), advisor, "{tag}");
            assert_eq!(c.n_critics, 16);
            assert_eq!(c.batch_size, 256);
        }
        assert!("camera".parse::<Setting>().is_err());
    }

    #[test]
    fn camera_learn_coefficients() {
        let c = ConfigFile::default().agent_config(Setting::CameraLearn);
        let k = crate::transfer::coefficients(c.tl).unwrap();
        assert_abs_diff_eq!(k.a, 0.9215, epsilon = 1e-12);
        assert_abs_diff_eq!(k.b, 0.0285, epsilon = 1e-12);
        assert_abs_diff_eq!(k.c, 0.05, epsilon = 1e-12);
    }

    #[test]
    fn override_precedence() {
        let file = ConfigFile::parse(
            r#"
            [agent]
            n_critics = 4
            actor_lr = 0.5
            [camera]
            actor_lr = 0.005
            [scene]
            episode_cap = 200
            "#,
        )
        .unwrap();
        let s = file.agent_config(Setting::SensorsNoTransfer);
        assert_eq!((s.n_critics, s.actor_lr, s.critic_epochs), (4, 0.5, 20));
        let c = file.agent_config(Setting::CameraAct);
        assert_eq!(
            (c.n_critics, c.actor_lr, c.acting_transfer),
            (4, 0.005, true)
        );
        assert_eq!(file.scene.episode_cap, 200);
        assert_eq!(file.scene.room_size, 1.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            "bogus = 1",
            "[agent]\nlearning_rate = 0.1",
            "[scene]\npillar_z = 0.3",
            "[run]\nthreads = 2",
            "[camera]\nn_critic = 3",
        ] {
            assert!(
                matches!(ConfigFile::parse(text), Err(Error::Config(_))),
                "{text}"
            );
        }
        let wrong_type = ConfigFile::parse("[agent]\nn_critics = \"many\"");
        assert!(wrong_type.is_err());
    }

    #[test]
    fn transfer_settings_need_an_advisor() {
        let dir = tempfile::tempdir().unwrap();
        let file = ConfigFile::default();
        let cfg = ExperimentConfig::new(&file, Setting::CameraAct, vec![1], 3, dir.path(), None);
        assert!(matches!(run_setting(&cfg), Err(Error::Config(_))));
        // nothing was simulated or written
        assert!(!cfg.csv_path().exists());

        let cfg = ExperimentConfig::new(
            &file,
            Setting::SensorsNoTransfer,
            vec![],
            3,
            dir.path(),
            None,
        );
        assert!(matches!(run_setting(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn zero_episodes_gives_an_empty_csv() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::new(
            &ConfigFile::default(),
            Setting::SensorsNoTransfer,
            vec![1, 2],
            0,
            dir.path(),
            None,
        );
        assert!(run_setting(&cfg).unwrap().is_empty());
        let text = fs::read_to_string(cfg.csv_path()).unwrap();
        assert_eq!(text, format!("{CSV_HEADER}\n"));
        assert!(read_records(cfg.csv_path()).unwrap().is_empty());
    }

    fn rec(setting: &str, seed: u64, episode: usize, r: f64) -> RunRecord {
        RunRecord {
            setting: setting.into(),
            seed,
            episode,
            total_return: r,
            env_steps: 0,
            seconds: 0.0,
        }
    }

    #[test]
    fn statistics_by_hand() {
        let s = summarize(&[rec("x", 1, 0, 100.0), rec("x", 2, 0, 200.0)]).unwrap();
        let e = &s.settings[0].episodes[0];
        assert_eq!((e.mean, e.std, e.runs), (150.0, 50.0, 2));

        let single = summarize(&[rec("y", 1, 0, 7.0), rec("y", 1, 1, 9.0)]).unwrap();
        assert!(single.settings[0].episodes.iter().all(|e| e.std == 0.0));
        assert_eq!(single.settings[0].episodes[1].mean, 9.0);
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn final_score_uses_the_last_tenth() {
        assert_eq!(final_window(100), 10);
        assert_eq!(final_window(15), 2);
        assert_eq!(final_window(3), 1);
        let recs: Vec<_> = (0..20).map(|e| rec("x", 1, e, e as f64)).collect();
        let s = summarize(&recs).unwrap();
        assert_eq!(s.settings[0].final_score, 18.5);
    }

    #[test]
    fn settings_are_ranked_by_final_score() {
        let recs = vec![
            rec("low", 1, 0, 1.0),
            rec("high", 1, 0, 9.0),
            rec("mid", 1, 0, 5.0),
        ];
        let s = summarize(&recs).unwrap();
        let order: Vec<_> = s.settings.iter().map(|s| s.setting.as_str()).collect();
        assert_eq!(order, ["high", "mid", "low"]);
        assert!(s.ranking().starts_with("high\t9.000\n"));
    }

    #[test]
    fn stats_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let recs: Vec<_> = (0..5)
            .flat_map(|e| {
                [
                    rec("a", 1, e, e as f64),
                    rec("a", 2, e, 0.5),
                    rec("b", 1, e, 3.0),
                ]
            })
            .collect();
        let s = summarize(&recs).unwrap();
        let path = dir.path().join("stats.csv");
        s.write_csv(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(&format!("{STATS_HEADER}\n")));
        assert_eq!(Statistics::read_csv(&path).unwrap(), s);
    }

    #[test]
    fn episode_seeds_differ() {
        let mut seen = std::collections::HashSet::new();
        for seed in 0..10 {
            for e in 0..100 {
                assert!(seen.insert(episode_seed(seed, e)));
            }
        }
    }

    #[test]
    fn nice_steps() {
        assert_eq!(nice_step(10.0), 2.0);
        assert_eq!(nice_step(200.0), 50.0);
        assert_abs_diff_eq!(nice_step(0.3), 0.05, epsilon = 1e-15);
    }
}
