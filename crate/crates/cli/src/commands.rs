//! The four subcommands. Each returns the files it produced as an [`Outputs`]
//! set that is written in one go once the run has finished.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use perdl_core::dl::estimate_rate;
use perdl_core::ingest::{self, Frame, LabeledPool};
use perdl_core::matching::global_matching;
use perdl_core::perma::{
    reconstruct_split, run_independent, run_perma, traces_to_csv, ClientState, PermaOptions,
};
use perdl_core::synthgen::{generate, GroundTruth};
use perdl_core::{estimate_beta, incoherence, rng, Dictionary, PartitionedDictionary};

use crate::config::{ExperimentConfig, Scenario};
use crate::CliError;

/// Files to write, relative to the output directory.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    pub fn text(&mut self, path: impl Into<PathBuf>, text: String) {
        self.files.push((path.into(), text.into_bytes()));
    }

    pub fn matrix(&mut self, path: impl Into<PathBuf>, m: &DMatrix<f64>) {
        let path = path.into();
        let bytes = match ingest::MatrixFormat::from_path(&path) {
            ingest::MatrixFormat::Binary => ingest::encode_binary(m),
            ingest::MatrixFormat::Csv => ingest::encode_csv(m).into_bytes(),
        };
        self.files.push((path, bytes));
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.files.iter().map(|(p, _)| p.as_path())
    }

    pub fn get(&self, path: &Path) -> Option<&[u8]> {
        self.files
            .iter()
            .find(|(p, _)| p == path)
            .map(|(_, b)| b.as_slice())
    }

    pub fn write_all(&self, root: &Path) -> Result<(), CliError> {
        for (rel, bytes) in &self.files {
            let path = root.join(rel);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
            }
            fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        }
        Ok(())
    }
}

/// Resolved configuration plus the command that ran, in the config format.
pub fn manifest(cfg: &ExperimentConfig, command: &str) -> String {
    format!(
        "# perdl {}\n# command: {command}\n\n{}",
        env!("CARGO_PKG_VERSION"),
        cfg.to_ini()
    )
}

fn clients_for(cfg: &ExperimentConfig, data: Vec<DMatrix<f64>>, seed: u64) -> Vec<ClientState> {
    let alg = cfg.solver.algorithm();
    let ws = perdl_core::dl::WarmStartConfig {
        seed,
        ..cfg.warm_start
    };
    data.into_iter()
        .enumerate()
        .map(|(i, y)| {
            let mut c = ClientState::new(i, y, alg, ws.for_client(i), cfg.model.atoms);
            c.t_refine = cfg.solver.t_refine;
            c.hold_on_degenerate = cfg.solver.hold_on_degenerate;
            c
        })
        .collect()
}

fn perma_options(cfg: &ExperimentConfig) -> PermaOptions {
    PermaOptions {
        global_atoms: cfg.model.global_atoms,
        rounds: cfg.run.rounds,
        renormalize: cfg.run.renormalize,
        threads: cfg.threads(),
        keep_submissions: false,
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

fn seed_dir(seed: u64) -> PathBuf {
    PathBuf::from(format!("seed_{seed}"))
}

/// Ground truth as matrix files under `dir`.
fn write_truth(out: &mut Outputs, dir: &Path, gt: &GroundTruth) {
    out.matrix(dir.join("truth_global.bin"), gt.global.matrix());
    for i in 0..gt.num_clients() {
        out.matrix(
            dir.join(format!("truth_local_{i}.bin")),
            gt.locals[i].matrix(),
        );
        out.matrix(dir.join(format!("data_{i}.bin")), &gt.data[i]);
    }
}

/// Synthetic benchmark: independent and collaborative runs on the same data
/// and initial dictionaries, for every seed.
pub fn synth(cfg: &ExperimentConfig) -> Result<Outputs, CliError> {
    if cfg.run.scenario != Scenario::Synthetic {
        return Err(CliError::config(format!(
            "synth runs the synthetic scenario, not {}",
            cfg.run.scenario
        )));
    }
    let mut out = Outputs::default();
    let mut seeds_csv = String::from("seed,perma_global_err,independent_mean_global_err,rho,psi\n");
    for &seed in &cfg.run.seeds {
        let gt = generate(&cfg.synth_config(seed))?;
        let dir = seed_dir(seed);
        let clients = clients_for(cfg, gt.data.clone(), seed);

        let independent = run_independent(&clients, cfg.run.rounds, &gt, cfg.threads())?;
        let mut collab = clients;
        let outcome = run_perma(&mut collab, &perma_options(cfg), Some(&gt))?;
        let history = &outcome.server.history;

        out.text(
            dir.join("perma_trace.csv"),
            traces_to_csv(history, cfg.run.timing),
        );
        out.text(
            dir.join("independent_trace.csv"),
            traces_to_csv(&independent, cfg.run.timing),
        );

        let last_p = history.last().expect("round 0 is always traced");
        let last_i = independent.last().expect("round 0 is always traced");
        let mut summary = String::from(
            "client_id,samples,weak,independent_global_err,perma_global_err,perma_local_err\n",
        );
        for (k, &id) in last_p.client_ids.iter().enumerate() {
            let _ = writeln!(
                summary,
                "{id},{},{},{},{},{}",
                gt.data[id].ncols(),
                u8::from(cfg.synthetic.weak_clients.contains(&id)),
                opt(last_i.global_err[k]),
                opt(last_p.global_err[k]),
                opt(last_p.local_err[k]),
            );
        }
        out.text(dir.join("summary.csv"), summary);

        let errs: Option<Vec<f64>> = history.iter().map(|t| t.mean_global_err()).collect();
        let fit = errs.as_deref().and_then(|e| estimate_rate(e).ok());
        let _ = writeln!(
            seeds_csv,
            "{seed},{},{},{},{}",
            opt(last_p.mean_global_err()),
            opt(last_i.mean_global_err()),
            opt(fit.map(|f| f.rho)),
            opt(fit.map(|f| f.psi)),
        );
        log::info!(
            "seed {seed}: collaborative global error {}, independent mean {}",
            opt(last_p.mean_global_err()),
            opt(last_i.mean_global_err())
        );

        out.matrix(dir.join("global.bin"), outcome.server.global.matrix());
        for (i, p) in outcome.partitions.iter().enumerate() {
            out.matrix(dir.join(format!("local_{i}.bin")), p.local.matrix());
        }
        if cfg.run.message_log {
            out.text(dir.join("messages.jsonl"), message_lines(&outcome.messages));
        }
        out.text(dir.join("paths.txt"), outcome.matching.path_listing());
        write_truth(&mut out, &dir, &gt);
    }
    out.text("seeds.csv", seeds_csv);
    Ok(out)
}

fn message_lines(messages: &[perdl_core::perma::MessageRecord]) -> String {
    messages.iter().map(|m| m.to_line() + "\n").collect()
}

struct ClientData {
    data: Vec<DMatrix<f64>>,
    truth: Option<GroundTruth>,
    frames: Option<(usize, usize)>,
}

fn load_data(cfg: &ExperimentConfig, seed: u64) -> Result<ClientData, CliError> {
    Ok(match cfg.run.scenario {
        Scenario::Synthetic => {
            let gt = generate(&cfg.synth_config(seed))?;
            ClientData {
                data: gt.data.clone(),
                truth: Some(gt),
                frames: None,
            }
        }
        Scenario::Imbalanced => {
            let im = &cfg.imbalanced;
            let pool = LabeledPool::read(
                im.pool.as_deref().expect("validated"),
                im.labels.as_deref().expect("validated"),
            )?;
            let data = (0..im.num_clients)
                .map(|i| {
                    let label = im
                        .majority_labels
                        .get(i)
                        .copied()
                        .unwrap_or(((i + 1) % 10) as u32);
                    ingest::build_imbalanced_split(
                        &pool,
                        label,
                        im.majority_fraction,
                        im.samples_per_client,
                        rng::client_seed(seed, i),
                    )
                    .map(|d| d.data)
                    .map_err(|e| CliError::client(i, e))
                })
                .collect::<Result<Vec<_>, _>>()?;
            ClientData {
                data,
                truth: None,
                frames: None,
            }
        }
        Scenario::Frames => {
            let frames = cfg
                .frames
                .files
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    ingest::read_matrix(p)
                        .and_then(|m| Frame::from_matrix(&m, cfg.frames.channels))
                        .map_err(|e| CliError::client(i, e))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let dims = (frames[0].height(), frames[0].width());
            ClientData {
                data: ingest::frames_to_patches(&frames, &cfg.frames.patch)?,
                truth: None,
                frames: Some(dims),
            }
        }
        Scenario::Custom => ClientData {
            data: cfg
                .custom_files
                .iter()
                .enumerate()
                .map(|(i, p)| ingest::read_matrix(p).map_err(|e| CliError::client(i, e)))
                .collect::<Result<Vec<_>, _>>()?,
            truth: None,
            frames: None,
        },
    })
}

fn check_shapes(data: &[DMatrix<f64>]) -> Result<(), CliError> {
    let d = data[0].nrows();
    for (i, y) in data.iter().enumerate() {
        if y.nrows() != d {
            return Err(CliError::client(
                i,
                perdl_core::Error::DimensionMismatch {
                    context: "data rows",
                    expected: d.to_string(),
                    found: y.nrows().to_string(),
                },
            ));
        }
        if y.ncols() == 0 {
            return Err(CliError::client(
                i,
                perdl_core::Error::InvalidConfig("no samples".into()),
            ));
        }
    }
    Ok(())
}

fn relative(y: &DMatrix<f64>, approx: &DMatrix<f64>) -> f64 {
    let n = y.norm();
    let r = (y - approx).norm();
    if n > 0.0 {
        r / n
    } else {
        r
    }
}

/// Learns dictionaries (collaboratively, or alone as a baseline) and writes
/// top-`k` reconstructions split into global and local contributions.
pub fn reconstruct(cfg: &ExperimentConfig) -> Result<Outputs, CliError> {
    let mut out = Outputs::default();
    let k = cfg.reconstruct.k;
    if k > cfg.model.atoms {
        return Err(CliError::config(format!(
            "[reconstruct] k: {k} exceeds [model] atoms ({})",
            cfg.model.atoms
        )));
    }
    for &seed in &cfg.run.seeds {
        let dir = seed_dir(seed);
        let loaded = load_data(cfg, seed)?;
        check_shapes(&loaded.data)?;
        let clients = clients_for(cfg, loaded.data, seed);

        let parts: Vec<PartitionedDictionary> = if cfg.reconstruct.baseline {
            clients
                .iter()
                .map(|c| {
                    let mut d = c.initial_dictionary()?;
                    for _ in 0..cfg.run.rounds {
                        d = c.step(&d)?;
                    }
                    PartitionedDictionary::new(Dictionary::empty(d.dim()), d)
                })
                .collect::<Result<_, perdl_core::Error>>()?
        } else {
            let mut collab = clients.clone();
            let outcome = run_perma(&mut collab, &perma_options(cfg), loaded.truth.as_ref())?;
            out.text(
                dir.join("perma_trace.csv"),
                traces_to_csv(&outcome.server.history, cfg.run.timing),
            );
            if cfg.run.message_log {
                out.text(dir.join("messages.jsonl"), message_lines(&outcome.messages));
            }
            out.matrix(dir.join("global.bin"), outcome.server.global.matrix());
            outcome.partitions
        };

        let mut residuals = String::from("client_id,samples,k,residual,residual_global_only\n");
        let mut globals = Vec::new();
        let mut locals = Vec::new();
        for (c, part) in clients.iter().zip(&parts) {
            let zeta = cfg.solver.threshold;
            let split =
                reconstruct_split(&c.data, part, zeta, k).map_err(|e| CliError::client(c.id, e))?;
            let total = relative(&c.data, &split.total());
            let global_only = if part.global.is_empty() {
                None
            } else {
                let g =
                    PartitionedDictionary::new(part.global.clone(), Dictionary::empty(part.dim()))?;
                let s = reconstruct_split(&c.data, &g, zeta, k.min(part.global_width()))?;
                Some(relative(&c.data, &s.global))
            };
            let _ = writeln!(
                residuals,
                "{},{},{k},{total:e},{}",
                c.id,
                c.data.ncols(),
                opt(global_only)
            );
            out.matrix(dir.join(format!("local_{}.bin", c.id)), part.local.matrix());
            out.matrix(
                dir.join(format!("client_{}_global.bin", c.id)),
                &split.global,
            );
            out.matrix(dir.join(format!("client_{}_local.bin", c.id)), &split.local);
            globals.push(split.global);
            locals.push(split.local);
        }
        out.text(dir.join("residuals.csv"), residuals);

        if let Some((h, w)) = loaded.frames {
            let ch = cfg.frames.channels;
            let patch = &cfg.frames.patch;
            let g = ingest::patches_to_frames(&globals, patch, h, w, ch)?;
            let l = ingest::patches_to_frames(&locals, patch, h, w, ch)?;
            for (i, (gf, lf)) in g.iter().zip(&l).enumerate() {
                out.matrix(dir.join(format!("frame_{i}_global.bin")), &gf.to_matrix());
                out.matrix(dir.join(format!("frame_{i}_local.bin")), &lf.to_matrix());
            }
        }
    }
    Ok(out)
}

/// Per-seed identifiability report; see [`validate_report`].
pub fn validate(cfg: &ExperimentConfig) -> Result<Outputs, CliError> {
    let mut out = Outputs::default();
    if !cfg.validate.dictionaries.is_empty() {
        let dicts = read_dictionaries(&cfg.validate.dictionaries)?;
        let (global, locals) = split_all(&dicts, cfg.model.global_atoms)?;
        let text = validate_report(
            &global,
            &locals,
            &cfg.validate.eps,
            cfg.validate.beta_candidates,
            cfg.run.seeds[0],
        )?;
        out.text("report.txt", text);
        return Ok(out);
    }
    if cfg.run.scenario != Scenario::Synthetic {
        return Err(CliError::config(
            "[validate] dictionaries: required unless the scenario is synthetic",
        ));
    }
    let mut all = String::new();
    for &seed in &cfg.run.seeds {
        let gt = generate(&cfg.synth_config(seed))?;
        let full: Vec<Dictionary> = (0..gt.num_clients())
            .map(|i| gt.client_dictionary(i))
            .collect();
        let _ = writeln!(all, "== seed {seed} (generated ground truth) ==");
        all.push_str(&validate_report(
            &full,
            &gt.locals,
            &cfg.validate.eps,
            cfg.validate.beta_candidates,
            seed,
        )?);
        all.push('\n');
    }
    out.text("report.txt", all);
    Ok(out)
}

/// Incoherence of every full dictionary, the identifiability estimate over the
/// local parts, and whether `4 * sum(eps) <= min(sqrt(2 - 2 mu / sqrt(d)), beta)`.
pub fn validate_report(
    full: &[Dictionary],
    locals: &[Dictionary],
    eps: &[f64],
    beta_candidates: usize,
    seed: u64,
) -> Result<String, CliError> {
    let n = full.len();
    let eps: Vec<f64> = match eps.len() {
        1 => vec![eps[0]; n],
        m if m == n => eps.to_vec(),
        m => {
            return Err(CliError::config(format!(
                "[validate] eps: {m} values for {n} clients (give 1 or {n})"
            )))
        }
    };
    let dim = full[0].dim();
    let mut text = String::new();
    let _ = writeln!(text, "clients: {n}, dimension: {dim}");
    let _ = writeln!(text, "client,atoms,mu_hat");
    let mut mu = 0.0f64;
    for (i, d) in full.iter().enumerate() {
        let m = incoherence(d).map_err(|e| CliError::client(i, e))?;
        mu = mu.max(m);
        let _ = writeln!(text, "{i},{},{m:e}", d.atoms());
    }
    let _ = writeln!(text, "mu_hat (max): {mu:e}");
    let coherence_term = (2.0 - 2.0 * mu / (dim as f64).sqrt()).max(0.0).sqrt();
    let beta = if locals.iter().any(Dictionary::is_empty) {
        let _ = writeln!(text, "beta_hat: not applicable (empty local dictionaries)");
        None
    } else {
        let b = estimate_beta(locals, beta_candidates, seed)?;
        let _ = writeln!(
            text,
            "beta_hat: {b:e} ({beta_candidates} random candidates)"
        );
        Some(b)
    };
    let bound = beta.map_or(coherence_term, |b| coherence_term.min(b));
    let sum: f64 = eps.iter().sum();
    let margin = bound - 4.0 * sum;
    let _ = writeln!(text, "sum eps: {sum:e}");
    let _ = writeln!(text, "bound min(sqrt(2 - 2 mu / sqrt(d)), beta): {bound:e}");
    let _ = writeln!(
        text,
        "hypothesis 4 * sum eps <= bound: {} (margin {margin:e})",
        if margin >= 0.0 { "holds" } else { "fails" }
    );
    Ok(text)
}

fn read_dictionaries(paths: &[PathBuf]) -> Result<Vec<Dictionary>, CliError> {
    paths
        .iter()
        .enumerate()
        .map(|(i, p)| {
            ingest::read_matrix(p)
                .and_then(Dictionary::new)
                .map_err(|e| CliError::client(i, e))
        })
        .collect()
}

/// Full dictionaries and their local parts, assuming `[D_g D_l]` column order.
fn split_all(
    dicts: &[Dictionary],
    rg: usize,
) -> Result<(Vec<Dictionary>, Vec<Dictionary>), CliError> {
    let mut locals = Vec::with_capacity(dicts.len());
    for (i, d) in dicts.iter().enumerate() {
        let part = PartitionedDictionary::split(d, rg).map_err(|e| CliError::client(i, e))?;
        locals.push(part.local);
    }
    Ok((dicts.to_vec(), locals))
}

/// Global matching on dictionary files.
pub fn match_files(cfg: &ExperimentConfig, files: &[PathBuf]) -> Result<Outputs, CliError> {
    let files = if files.is_empty() {
        &cfg.match_files[..]
    } else {
        files
    };
    if files.len() < 2 {
        return Err(CliError::config("match needs at least 2 dictionary files"));
    }
    let dicts = read_dictionaries(files)?;
    let result = global_matching(&dicts, cfg.model.global_atoms, cfg.run.renormalize)?;
    let mut out = Outputs::default();
    out.matrix("global.bin", result.global.matrix());
    for (i, l) in result.locals.iter().enumerate() {
        out.matrix(format!("local_{i}.bin"), l.matrix());
    }
    let mut csv = String::from("client,global_atom,atom,sign\n");
    for (i, row) in result.assignments.iter().enumerate() {
        for (j, m) in row.iter().enumerate() {
            let _ = writeln!(csv, "{i},{j},{},{}", m.index, m.sign);
        }
    }
    out.text("assignments.csv", csv);
    out.text("paths.txt", result.path_listing());
    log::info!(
        "matched {} global atoms over {} clients with {} relaxations",
        result.global.atoms(),
        dicts.len(),
        result.relaxations
    );
    Ok(out)
}
