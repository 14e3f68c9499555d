//! Experiment configuration.
//!
//! Files are plain text with `[section]` headers and `key = value` lines;
//! `#` and `;` start comments. Lists are comma-separated. The resolved
//! configuration is written back in the same format as the run manifest, so
//! `perdl <command> --config manifest.ini` repeats a run.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use perdl_core::dl::{DlAlgorithm, DlKind, StepSize, WarmStartConfig};
use perdl_core::ingest::{ChannelMode, PatchConfig};
use perdl_core::synthgen::SynthConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}:{line}: {message}")]
    Syntax {
        path: String,
        line: usize,
        message: String,
    },
    #[error("[{section}] {key}: {message}")]
    Field {
        section: String,
        key: String,
        message: String,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// `section -> key -> (value, line)`.
#[derive(Debug, Default, Clone)]
pub struct Ini {
    sections: BTreeMap<String, BTreeMap<String, (String, usize)>>,
}

impl Ini {
    pub fn parse(text: &str, path: &str) -> Result<Self, ConfigError> {
        let mut ini = Ini::default();
        let mut section: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let err = |message: String| ConfigError::Syntax {
                path: path.to_string(),
                line,
                message,
            };
            let content = match raw.find(['#', ';']) {
                Some(at) => &raw[..at],
                None => raw,
            }
            .trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| err(format!("unterminated section header {content:?}")))?
                    .trim();
                if name.is_empty() {
                    return Err(err("empty section name".into()));
                }
                ini.sections.entry(name.to_string()).or_default();
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found {content:?}")))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(err("empty key".into()));
            }
            let sec = section
                .clone()
                .ok_or_else(|| err(format!("key {key:?} appears before any [section]")))?;
            let entries = ini.sections.entry(sec.clone()).or_default();
            if entries.contains_key(key) {
                return Err(err(format!("duplicate key {key:?} in [{sec}]")));
            }
            entries.insert(key.to_string(), (value.trim().to_string(), line));
        }
        Ok(ini)
    }

    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Sets `key` in `section`, replacing any earlier value.
    pub fn insert(&mut self, section: &str, key: &str, value: &str) {
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), (value.to_string(), 0));
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .get(section)
            .and_then(|s| s.get(key))
            .map(|(v, _)| v.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Synthetic,
    Imbalanced,
    Frames,
    Custom,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Synthetic => "synthetic",
            Scenario::Imbalanced => "imbalanced",
            Scenario::Frames => "frames",
            Scenario::Custom => "custom",
        })
    }
}

impl FromStr for Scenario {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "synthetic" => Ok(Scenario::Synthetic),
            "imbalanced" => Ok(Scenario::Imbalanced),
            "frames" => Ok(Scenario::Frames),
            "custom" => Ok(Scenario::Custom),
            _ => Err(format!(
                "unknown scenario {s:?} (synthetic, imbalanced, frames, custom)"
            )),
        }
    }
}

/// `on`/`off` switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Switch(pub bool);

impl FromStr for Switch {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "on" | "true" | "yes" => Ok(Switch(true)),
            "off" | "false" | "no" => Ok(Switch(false)),
            _ => Err(format!("expected on or off, found {s:?}")),
        }
    }
}

impl fmt::Display for Switch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.0 { "on" } else { "off" })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSection {
    pub scenario: Scenario,
    pub seeds: Vec<u64>,
    pub rounds: usize,
    pub renormalize: bool,
    /// 0 means rayon's default pool.
    pub threads: usize,
    pub out: PathBuf,
    /// Record wall time in traces; off keeps traces byte-reproducible.
    pub timing: bool,
    pub message_log: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSection {
    /// Atoms per client `r_i`.
    pub atoms: usize,
    pub global_atoms: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSection {
    pub kind: DlKind,
    pub threshold: f64,
    pub step_size: StepSize,
    pub renormalize: bool,
    pub t_refine: usize,
    pub hold_on_degenerate: bool,
}

impl SolverSection {
    pub fn algorithm(&self) -> DlAlgorithm {
        DlAlgorithm {
            kind: self.kind,
            threshold: self.threshold,
            step_size: self.step_size,
            renormalize: self.renormalize,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSection {
    pub num_clients: usize,
    pub dim: usize,
    pub samples_per_client: usize,
    pub bernoulli_p: f64,
    pub truncation: f64,
    /// Clients that receive `weak_samples` samples instead.
    pub weak_clients: Vec<usize>,
    pub weak_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImbalancedSection {
    pub pool: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub num_clients: usize,
    pub samples_per_client: usize,
    pub majority_fraction: f64,
    /// Majority label per client; empty means client `i` gets `(i + 1) % 10`.
    pub majority_labels: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FramesSection {
    /// One `height x (width * channels)` matrix file per frame.
    pub files: Vec<PathBuf>,
    pub channels: usize,
    pub patch: PatchConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructSection {
    pub k: usize,
    /// Skip collaboration: every client learns alone.
    pub baseline: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidateSection {
    pub dictionaries: Vec<PathBuf>,
    /// One value for every client, or one per client.
    pub eps: Vec<f64>,
    pub beta_candidates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub run: RunSection,
    pub model: ModelSection,
    pub solver: SolverSection,
    pub warm_start: WarmStartConfig,
    pub synthetic: SyntheticSection,
    pub imbalanced: ImbalancedSection,
    pub frames: FramesSection,
    /// Data matrices of the custom scenario, one per client.
    pub custom_files: Vec<PathBuf>,
    pub reconstruct: ReconstructSection,
    pub validate: ValidateSection,
    /// Dictionary files for the `match` command.
    pub match_files: Vec<PathBuf>,
}

impl ExperimentConfig {
    /// Defaults for `scenario`. The synthetic values follow the reference
    /// setup: 10 clients, `d = r = 6`, 3 global atoms, 200 samples, `p = 0.2`,
    /// truncation 0.3 and threshold 0.15.
    pub fn defaults(scenario: Scenario) -> Self {
        let (atoms, global_atoms, k) = match scenario {
            Scenario::Synthetic | Scenario::Custom => (6, 3, 6),
            Scenario::Imbalanced => (256, 32, 5),
            Scenario::Frames => (576, 30, 50),
        };
        Self {
            run: RunSection {
                scenario,
                seeds: vec![0, 1, 2],
                rounds: 50,
                renormalize: true,
                threads: 0,
                out: PathBuf::from("out"),
                timing: false,
                message_log: true,
            },
            model: ModelSection {
                atoms,
                global_atoms,
            },
            solver: SolverSection {
                kind: DlKind::Orthogonal,
                threshold: 0.15,
                step_size: StepSize::Auto,
                renormalize: true,
                t_refine: 0,
                hold_on_degenerate: true,
            },
            warm_start: WarmStartConfig::default(),
            synthetic: SyntheticSection {
                num_clients: 10,
                dim: 6,
                samples_per_client: 200,
                bernoulli_p: 0.2,
                truncation: 0.3,
                weak_clients: Vec::new(),
                weak_samples: 20,
            },
            imbalanced: ImbalancedSection {
                pool: None,
                labels: None,
                num_clients: 10,
                samples_per_client: 500,
                majority_fraction: 0.9,
                majority_labels: Vec::new(),
            },
            frames: FramesSection {
                files: Vec::new(),
                channels: 3,
                patch: PatchConfig::video(),
            },
            custom_files: Vec::new(),
            reconstruct: ReconstructSection { k, baseline: false },
            validate: ValidateSection {
                dictionaries: Vec::new(),
                eps: vec![0.01],
                beta_candidates: 1000,
            },
            match_files: Vec::new(),
        }
    }

    /// Applies every key of `ini` on top of the scenario defaults. Unknown
    /// sections and keys are errors.
    pub fn from_ini(ini: &Ini) -> Result<Self, ConfigError> {
        let scenario = match ini.get("run", "scenario") {
            Some(s) => s.parse().map_err(|m| field("run", "scenario", m))?,
            None => Scenario::Synthetic,
        };
        let mut cfg = Self::defaults(scenario);
        for (section, entries) in &ini.sections {
            for (key, (value, _)) in entries {
                cfg.set(section, key, value)?;
            }
        }
        Ok(cfg)
    }

    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<(), ConfigError> {
        let f = |m: String| field(section, key, m);
        match (section, key) {
            ("run", "scenario") => self.run.scenario = parse(value).map_err(f)?,
            ("run", "seeds") => self.run.seeds = list(value).map_err(f)?,
            ("run", "rounds") => self.run.rounds = parse(value).map_err(f)?,
            ("run", "renormalize") => self.run.renormalize = parse::<Switch>(value).map_err(f)?.0,
            ("run", "threads") => self.run.threads = parse(value).map_err(f)?,
            ("run", "out") => self.run.out = PathBuf::from(value),
            ("run", "timing") => self.run.timing = parse::<Switch>(value).map_err(f)?.0,
            ("run", "message_log") => self.run.message_log = parse::<Switch>(value).map_err(f)?.0,

            ("model", "atoms") => self.model.atoms = parse(value).map_err(f)?,
            ("model", "global_atoms") => self.model.global_atoms = parse(value).map_err(f)?,

            ("solver", "kind") => {
                self.solver.kind = match value {
                    "orthogonal" => DlKind::Orthogonal,
                    "general" => DlKind::General,
                    _ => {
                        return Err(f(format!(
                            "expected orthogonal or general, found {value:?}"
                        )))
                    }
                }
            }
            ("solver", "threshold") => self.solver.threshold = parse(value).map_err(f)?,
            ("solver", "step_size") => {
                self.solver.step_size = if value == "auto" {
                    StepSize::Auto
                } else {
                    StepSize::Fixed(parse(value).map_err(f)?)
                }
            }
            ("solver", "renormalize") => {
                self.solver.renormalize = parse::<Switch>(value).map_err(f)?.0
            }
            ("solver", "t_refine") => self.solver.t_refine = parse(value).map_err(f)?,
            ("solver", "hold_on_degenerate") => {
                self.solver.hold_on_degenerate = parse::<Switch>(value).map_err(f)?.0
            }

            ("warm_start", "initial_threshold") => {
                self.warm_start.initial_threshold = parse(value).map_err(f)?
            }
            ("warm_start", "shrink") => self.warm_start.shrink = parse(value).map_err(f)?,
            ("warm_start", "final_threshold") => {
                self.warm_start.final_threshold = parse(value).map_err(f)?
            }
            ("warm_start", "iterations_per_level") => {
                self.warm_start.iterations_per_level = parse(value).map_err(f)?
            }

            ("synthetic", "num_clients") => self.synthetic.num_clients = parse(value).map_err(f)?,
            ("synthetic", "dim") => self.synthetic.dim = parse(value).map_err(f)?,
            ("synthetic", "samples_per_client") => {
                self.synthetic.samples_per_client = parse(value).map_err(f)?
            }
            ("synthetic", "bernoulli_p") => self.synthetic.bernoulli_p = parse(value).map_err(f)?,
            ("synthetic", "truncation") => self.synthetic.truncation = parse(value).map_err(f)?,
            ("synthetic", "weak_clients") => {
                self.synthetic.weak_clients = list(value).map_err(f)?
            }
            ("synthetic", "weak_samples") => {
                self.synthetic.weak_samples = parse(value).map_err(f)?
            }

            ("imbalanced", "pool") => self.imbalanced.pool = Some(PathBuf::from(value)),
            ("imbalanced", "labels") => self.imbalanced.labels = Some(PathBuf::from(value)),
            ("imbalanced", "num_clients") => {
                self.imbalanced.num_clients = parse(value).map_err(f)?
            }
            ("imbalanced", "samples_per_client") => {
                self.imbalanced.samples_per_client = parse(value).map_err(f)?
            }
            ("imbalanced", "majority_fraction") => {
                self.imbalanced.majority_fraction = parse(value).map_err(f)?
            }
            ("imbalanced", "majority_labels") => {
                self.imbalanced.majority_labels = list(value).map_err(f)?
            }

            ("frames", "files") => self.frames.files = paths(value),
            ("frames", "channels") => self.frames.channels = parse(value).map_err(f)?,
            ("frames", "patch_height") => {
                self.frames.patch.patch_height = parse(value).map_err(f)?
            }
            ("frames", "patch_width") => self.frames.patch.patch_width = parse(value).map_err(f)?,
            ("frames", "stride_y") => self.frames.patch.stride_y = parse(value).map_err(f)?,
            ("frames", "stride_x") => self.frames.patch.stride_x = parse(value).map_err(f)?,
            ("frames", "channel_mode") => {
                self.frames.patch.channels = match value {
                    "grayscale" => ChannelMode::Grayscale,
                    "per_channel" => ChannelMode::PerChannel,
                    _ => {
                        return Err(f(format!(
                            "expected grayscale or per_channel, found {value:?}"
                        )))
                    }
                }
            }

            ("custom", "files") => self.custom_files = paths(value),

            ("reconstruct", "k") => self.reconstruct.k = parse(value).map_err(f)?,
            ("reconstruct", "baseline") => {
                self.reconstruct.baseline = parse::<Switch>(value).map_err(f)?.0
            }

            ("validate", "dictionaries") => self.validate.dictionaries = paths(value),
            ("validate", "eps") => self.validate.eps = list(value).map_err(f)?,
            ("validate", "beta_candidates") => {
                self.validate.beta_candidates = parse(value).map_err(f)?
            }

            ("match", "dictionaries") => self.match_files = paths(value),

            _ => return Err(f("unknown setting".into())),
        }
        Ok(())
    }

    /// Field-level checks that do not need the data.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |section: &str, key: &str, m: &str| Err(field(section, key, m.to_string()));
        if self.run.seeds.is_empty() {
            return bad("run", "seeds", "at least one seed is required");
        }
        if self.model.global_atoms > self.model.atoms {
            return bad("model", "global_atoms", "must not exceed [model] atoms");
        }
        if self.model.atoms == 0 {
            return bad("model", "atoms", "must be at least 1");
        }
        self.solver
            .algorithm()
            .validate()
            .map_err(|e| field("solver", "threshold", e.to_string()))?;
        self.warm_start
            .validate()
            .map_err(|e| field("warm_start", "final_threshold", e.to_string()))?;
        match self.run.scenario {
            Scenario::Synthetic => {
                if let Some(&w) = self
                    .synthetic
                    .weak_clients
                    .iter()
                    .find(|&&w| w >= self.synthetic.num_clients)
                {
                    return Err(field(
                        "synthetic",
                        "weak_clients",
                        format!(
                            "client {w} does not exist ({} clients)",
                            self.synthetic.num_clients
                        ),
                    ));
                }
                self.synth_config(0)
                    .validate()
                    .map_err(|e| ConfigError::Invalid(format!("[synthetic] {e}")))?;
                if self.model.atoms > self.synthetic.dim {
                    return bad("model", "atoms", "synthetic dictionaries are orthogonal, so atoms must not exceed [synthetic] dim");
                }
            }
            Scenario::Imbalanced => {
                let im = &self.imbalanced;
                for (key, p) in [("pool", &im.pool), ("labels", &im.labels)] {
                    match p {
                        None => return bad("imbalanced", key, "a matrix file is required"),
                        Some(p) => exists("imbalanced", key, p)?,
                    }
                }
                if !(0.0..=1.0).contains(&im.majority_fraction) {
                    return bad("imbalanced", "majority_fraction", "must lie in [0, 1]");
                }
                if !im.majority_labels.is_empty() && im.majority_labels.len() != im.num_clients {
                    return bad(
                        "imbalanced",
                        "majority_labels",
                        "needs one label per client",
                    );
                }
                if im.num_clients < 2 {
                    return bad(
                        "imbalanced",
                        "num_clients",
                        "at least 2 clients are required",
                    );
                }
            }
            Scenario::Frames => {
                if self.frames.files.len() < 2 {
                    return bad("frames", "files", "at least 2 frames are required");
                }
                for p in &self.frames.files {
                    exists("frames", "files", p)?;
                }
                if self.frames.channels == 0 {
                    return bad("frames", "channels", "must be at least 1");
                }
            }
            Scenario::Custom => {
                if self.custom_files.len() < 2 {
                    return bad("custom", "files", "at least 2 data files are required");
                }
                for p in &self.custom_files {
                    exists("custom", "files", p)?;
                }
            }
        }
        for p in &self.validate.dictionaries {
            exists("validate", "dictionaries", p)?;
        }
        if self.validate.eps.iter().any(|e| !(*e >= 0.0)) {
            return bad("validate", "eps", "values must be >= 0");
        }
        for p in &self.match_files {
            exists("match", "dictionaries", p)?;
        }
        Ok(())
    }

    /// The synthetic generator settings for `seed`.
    pub fn synth_config(&self, seed: u64) -> SynthConfig {
        let s = &self.synthetic;
        SynthConfig {
            num_clients: s.num_clients,
            dim: s.dim,
            atoms_per_client: self.model.atoms,
            global_atoms: self.model.global_atoms,
            samples_per_client: s.samples_per_client,
            sample_overrides: s
                .weak_clients
                .iter()
                .map(|&i| (i, s.weak_samples))
                .collect(),
            bernoulli_p: s.bernoulli_p,
            truncation: s.truncation,
            seed,
        }
    }

    pub fn threads(&self) -> Option<usize> {
        (self.run.threads > 0).then_some(self.run.threads)
    }

    /// The resolved configuration in the input format.
    pub fn to_ini(&self) -> String {
        let mut out = String::new();
        let mut section = |name: &str, entries: Vec<(&str, String)>| {
            let _ = writeln!(out, "[{name}]");
            for (k, v) in entries {
                let _ = writeln!(out, "{k} = {v}");
            }
            out.push('\n');
        };
        let r = &self.run;
        section(
            "run",
            vec![
                ("scenario", r.scenario.to_string()),
                ("seeds", join(&r.seeds)),
                ("rounds", r.rounds.to_string()),
                ("renormalize", Switch(r.renormalize).to_string()),
                ("threads", r.threads.to_string()),
                ("out", r.out.display().to_string()),
                ("timing", Switch(r.timing).to_string()),
                ("message_log", Switch(r.message_log).to_string()),
            ],
        );
        section(
            "model",
            vec![
                ("atoms", self.model.atoms.to_string()),
                ("global_atoms", self.model.global_atoms.to_string()),
            ],
        );
        let s = &self.solver;
        section(
            "solver",
            vec![
                (
                    "kind",
                    match s.kind {
                        DlKind::Orthogonal => "orthogonal".into(),
                        DlKind::General => "general".into(),
                    },
                ),
                ("threshold", num(s.threshold)),
                (
                    "step_size",
                    match s.step_size {
                        StepSize::Auto => "auto".into(),
                        StepSize::Fixed(e) => num(e),
                    },
                ),
                ("renormalize", Switch(s.renormalize).to_string()),
                ("t_refine", s.t_refine.to_string()),
                (
                    "hold_on_degenerate",
                    Switch(s.hold_on_degenerate).to_string(),
                ),
            ],
        );
        let w = &self.warm_start;
        section(
            "warm_start",
            vec![
                ("initial_threshold", num(w.initial_threshold)),
                ("shrink", num(w.shrink)),
                ("final_threshold", num(w.final_threshold)),
                ("iterations_per_level", w.iterations_per_level.to_string()),
            ],
        );
        let sy = &self.synthetic;
        section(
            "synthetic",
            vec![
                ("num_clients", sy.num_clients.to_string()),
                ("dim", sy.dim.to_string()),
                ("samples_per_client", sy.samples_per_client.to_string()),
                ("bernoulli_p", num(sy.bernoulli_p)),
                ("truncation", num(sy.truncation)),
                ("weak_clients", join(&sy.weak_clients)),
                ("weak_samples", sy.weak_samples.to_string()),
            ],
        );
        let im = &self.imbalanced;
        let mut imb = Vec::new();
        if let Some(p) = &im.pool {
            imb.push(("pool", p.display().to_string()));
        }
        if let Some(p) = &im.labels {
            imb.push(("labels", p.display().to_string()));
        }
        imb.extend([
            ("num_clients", im.num_clients.to_string()),
            ("samples_per_client", im.samples_per_client.to_string()),
            ("majority_fraction", num(im.majority_fraction)),
            ("majority_labels", join(&im.majority_labels)),
        ]);
        section("imbalanced", imb);
        let fr = &self.frames;
        section(
            "frames",
            vec![
                ("files", join_paths(&fr.files)),
                ("channels", fr.channels.to_string()),
                ("patch_height", fr.patch.patch_height.to_string()),
                ("patch_width", fr.patch.patch_width.to_string()),
                ("stride_y", fr.patch.stride_y.to_string()),
                ("stride_x", fr.patch.stride_x.to_string()),
                (
                    "channel_mode",
                    match fr.patch.channels {
                        ChannelMode::Grayscale => "grayscale".into(),
                        ChannelMode::PerChannel => "per_channel".into(),
                    },
                ),
            ],
        );
        section("custom", vec![("files", join_paths(&self.custom_files))]);
        section(
            "reconstruct",
            vec![
                ("k", self.reconstruct.k.to_string()),
                ("baseline", Switch(self.reconstruct.baseline).to_string()),
            ],
        );
        let v = &self.validate;
        section(
            "validate",
            vec![
                ("dictionaries", join_paths(&v.dictionaries)),
                (
                    "eps",
                    v.eps.iter().map(|e| num(*e)).collect::<Vec<_>>().join(", "),
                ),
                ("beta_candidates", v.beta_candidates.to_string()),
            ],
        );
        section(
            "match",
            vec![("dictionaries", join_paths(&self.match_files))],
        );
        out
    }
}

fn field(section: &str, key: &str, message: String) -> ConfigError {
    ConfigError::Field {
        section: section.to_string(),
        key: key.to_string(),
        message,
    }
}

fn exists(section: &str, key: &str, p: &Path) -> Result<(), ConfigError> {
    if p.exists() {
        Ok(())
    } else {
        Err(field(
            section,
            key,
            format!("{} does not exist", p.display()),
        ))
    }
}

fn parse<T: FromStr>(value: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e: T::Err| format!("cannot parse {value:?}: {e}"))
}

fn list<T: FromStr>(value: &str) -> Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse)
        .collect()
}

fn paths(value: &str) -> Vec<PathBuf> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(PathBuf::from)
        .collect()
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(T::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

fn join_paths(items: &[PathBuf]) -> String {
    items
        .iter()
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

/// Shortest form that parses back to the same `f64`.
fn num(x: f64) -> String {
    format!("{x:?}")
}
