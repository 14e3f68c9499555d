//! Federated matching and averaging.
//!
//! Round 0: every client builds an initial dictionary and uploads it; the
//! server runs [`global_matching`] and sends each client its global/local
//! split. Rounds `1..=T`: every client runs [`local_update`] and uploads only
//! its global block; the server averages the blocks and broadcasts the mean.
//!
//! Clients of a round execute in parallel on a rayon pool and talk to the
//! server through typed queues. The server sorts what it receives by client id
//! before aggregating, so serial and parallel runs give identical bits.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::mpsc;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::dictionary::{Dictionary, PartitionedDictionary, SparseCode};
use crate::distance::{align_columns, dist_12, signed_gap};
use crate::dl::{self, DlAlgorithm, WarmStartConfig};
use crate::error::{Error, Result};
use crate::matching::{global_matching, MatchResult};
use crate::synthgen::GroundTruth;

/// One step of the client's solver on `[D_g D_l]`, followed by re-identifying
/// the global atoms against the current global block.
///
/// For each reference atom `j` in order, the closest unused output atom (up to
/// sign) becomes global atom `j`, multiplied by `sign(<reference_j, atom>)`.
/// The unmatched output atoms form the new local block in their original order.
pub fn local_update(
    y: &DMatrix<f64>,
    part: &PartitionedDictionary,
    alg: &DlAlgorithm,
) -> Result<PartitionedDictionary> {
    let full = part.full();
    let (next, _) = alg.step(y, &full)?;
    realign(&next, &part.global)
}

fn realign(next: &Dictionary, reference: &Dictionary) -> Result<PartitionedDictionary> {
    let rg = reference.atoms();
    let r = next.atoms();
    let mut used = vec![false; r];
    let mut global = DMatrix::zeros(next.dim(), rg);
    for j in 0..rg {
        let target = reference.atom_slice(j);
        let mut best: Option<(usize, f64)> = None;
        let mut unconstrained: Option<(usize, f64)> = None;
        for (k, &taken) in used.iter().enumerate() {
            let gap = signed_gap(next.atom_slice(k), target).0;
            if unconstrained.is_none_or(|(_, g)| gap < g) {
                unconstrained = Some((k, gap));
            }
            if !taken && best.is_none_or(|(_, g)| gap < g) {
                best = Some((k, gap));
            }
        }
        let (k, _) = best.expect("at least as many atoms as reference atoms");
        if unconstrained.map(|(u, _)| u) != Some(k) {
            log::debug!("reference atom {j}: nearest atom already taken, using atom {k}");
        }
        used[k] = true;
        let inner = next.atom(k).dot(&reference.atom(j));
        let sign = if inner < 0.0 { -1.0 } else { 1.0 };
        global.set_column(j, &(next.atom(k) * sign));
    }
    let rest: Vec<usize> = (0..r).filter(|&k| !used[k]).collect();
    PartitionedDictionary::new(Dictionary::with_any_width(global)?, next.select(&rest))
}

/// A client of the federation.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: usize,
    pub data: DMatrix<f64>,
    pub algorithm: DlAlgorithm,
    pub warm_start: WarmStartConfig,
    /// Total atoms `r_i` of the client's dictionary.
    pub atoms: usize,
    /// Local refinement iterations run before each update; 0 disables it.
    pub t_refine: usize,
    /// Initial dictionary; when absent the client warm-starts from its data.
    pub initial: Option<Dictionary>,
    /// Current split, set once matching has run.
    pub partition: Option<PartitionedDictionary>,
    /// Keep the current dictionary when a step is degenerate (empty code or
    /// rank-deficient polar factor) instead of failing the round.
    pub hold_on_degenerate: bool,
}

impl ClientState {
    pub fn new(
        id: usize,
        data: DMatrix<f64>,
        algorithm: DlAlgorithm,
        warm_start: WarmStartConfig,
        atoms: usize,
    ) -> Self {
        Self {
            id,
            data,
            algorithm,
            warm_start,
            atoms,
            t_refine: 0,
            initial: None,
            partition: None,
            hold_on_degenerate: true,
        }
    }

    /// The configured initial dictionary, or a warm start from the client's data.
    pub fn initial_dictionary(&self) -> Result<Dictionary> {
        match &self.initial {
            Some(d) => Ok(d.clone()),
            None => dl::warm_start(&self.data, &self.warm_start, &self.algorithm, self.atoms),
        }
    }

    fn round(&self, part: &PartitionedDictionary) -> Result<PartitionedDictionary> {
        let mut part = part.clone();
        if self.t_refine > 0 && !part.local.is_empty() {
            match dl::refine_local(&self.data, &part, &self.algorithm, self.t_refine) {
                Ok(local) => part.local = local,
                Err(e) => self.hold(e)?,
            }
        }
        match local_update(&self.data, &part, &self.algorithm) {
            Ok(next) => Ok(next),
            Err(e) => self.hold(e).map(|()| part),
        }
    }

    /// One solver step on the client's data, holding on degenerate steps when allowed.
    pub fn step(&self, dict: &Dictionary) -> Result<Dictionary> {
        match self.algorithm.step(&self.data, dict) {
            Ok((next, _)) => Ok(next),
            Err(e) => self.hold(e).map(|()| dict.clone()),
        }
    }

    fn hold(&self, e: Error) -> Result<()> {
        if self.hold_on_degenerate && e.is_degenerate_step() {
            log::debug!("client {}: {e}; keeping the current dictionary", self.id);
            Ok(())
        } else {
            Err(e)
        }
    }

    fn fail(&self, e: Error) -> Error {
        Error::ClientFailed {
            client: self.id,
            source: Box::new(e),
        }
    }
}

/// Per-round, per-client metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrace {
    pub round: usize,
    pub client_ids: Vec<usize>,
    /// `d_12` between the client's global block and the true global dictionary.
    pub global_err: Vec<Option<f64>>,
    /// `d_12` between the client's local block and its true local dictionary.
    pub local_err: Vec<Option<f64>>,
    /// `||Y - D X||_F / ||Y||_F` with `X` the thresholded analysis code.
    pub recon_residual: Vec<f64>,
    pub wall_ms: f64,
}

impl RoundTrace {
    /// Mean global error over clients, when every client has one.
    pub fn mean_global_err(&self) -> Option<f64> {
        let v: Option<Vec<f64>> = self.global_err.iter().copied().collect();
        v.map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Header of the trace CSV.
pub const TRACE_HEADER: &str = "round,client_id,global_err,local_err,recon_residual,wall_ms";

/// Serialises traces as CSV, one row per round and client. Missing errors are
/// empty fields; `wall_ms` is written as 0 unless `timing` is set, so that
/// repeated runs produce identical bytes.
pub fn traces_to_csv(traces: &[RoundTrace], timing: bool) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    for t in traces {
        let wall = if timing { t.wall_ms } else { 0.0 };
        for (k, id) in t.client_ids.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{:e},{}\n",
                t.round,
                id,
                opt(t.global_err[k]),
                opt(t.local_err[k]),
                t.recon_residual[k],
                wall
            ));
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct ServerState {
    pub round: usize,
    pub global: Dictionary,
    pub history: Vec<RoundTrace>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Uplink,
    Downlink,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Uplink => "uplink",
            Direction::Downlink => "downlink",
        })
    }
}

/// What a client may send. Raw data and local blocks have no variant.
#[derive(Debug, Clone)]
pub enum Uplink {
    InitialDictionary(Dictionary),
    GlobalBlock(Dictionary),
}

#[derive(Debug, Clone)]
pub enum Downlink {
    Split(PartitionedDictionary),
    Global(Dictionary),
}

/// Log entry for one message. Only metadata is kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageRecord {
    pub round: usize,
    pub direction: Direction,
    pub client: usize,
    pub kind: &'static str,
    pub payload_shape: Vec<(usize, usize)>,
}

impl MessageRecord {
    /// One line of the message log.
    pub fn to_line(&self) -> String {
        let shapes: Vec<String> = self
            .payload_shape
            .iter()
            .map(|(r, c)| format!("[{r},{c}]"))
            .collect();
        format!(
            "{{\"round\":{},\"direction\":\"{}\",\"client\":{},\"kind\":\"{}\",\"payload_shape\":[{}]}}",
            self.round,
            self.direction,
            self.client,
            self.kind,
            shapes.join(",")
        )
    }
}

fn shape(d: &Dictionary) -> (usize, usize) {
    (d.dim(), d.atoms())
}

struct Envelope {
    client: usize,
    message: Uplink,
}

/// Server end of the uplink queue plus the message log.
struct Network {
    tx: mpsc::Sender<Envelope>,
    rx: mpsc::Receiver<Envelope>,
    log: Vec<MessageRecord>,
}

impl Network {
    fn new() -> Self {
        let (tx, rx) = mpsc::channel();
        Self {
            tx,
            rx,
            log: Vec::new(),
        }
    }

    /// Receives the round's uplinks, ordered by client id.
    fn gather(&mut self, round: usize, expected: usize) -> Vec<(usize, Uplink)> {
        let mut got: Vec<Envelope> = self.rx.try_iter().collect();
        assert_eq!(got.len(), expected, "every client uploads once per round");
        got.sort_by_key(|e| e.client);
        got.into_iter()
            .map(|e| {
                let (kind, payload_shape) = match &e.message {
                    Uplink::InitialDictionary(d) => ("initial_dictionary", vec![shape(d)]),
                    Uplink::GlobalBlock(d) => ("global_block", vec![shape(d)]),
                };
                self.log.push(MessageRecord {
                    round,
                    direction: Direction::Uplink,
                    client: e.client,
                    kind,
                    payload_shape,
                });
                (e.client, e.message)
            })
            .collect()
    }

    fn send_down(&mut self, round: usize, client: usize, message: &Downlink) {
        let (kind, payload_shape) = match message {
            Downlink::Split(p) => ("split", vec![shape(&p.global), shape(&p.local)]),
            Downlink::Global(d) => ("global", vec![shape(d)]),
        };
        self.log.push(MessageRecord {
            round,
            direction: Direction::Downlink,
            client,
            kind,
            payload_shape,
        });
    }
}

#[derive(Debug, Clone)]
pub struct PermaOptions {
    pub global_atoms: usize,
    pub rounds: usize,
    /// Rescale averaged global atoms to unit norm.
    pub renormalize: bool,
    /// Worker threads; `None` uses rayon's global pool.
    pub threads: Option<usize>,
    /// Keep every round's uploaded global blocks in the outcome.
    pub keep_submissions: bool,
}

impl Default for PermaOptions {
    fn default() -> Self {
        Self {
            global_atoms: 3,
            rounds: 50,
            renormalize: true,
            threads: None,
            keep_submissions: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PermaOutcome {
    pub server: ServerState,
    /// Final split of each client, in input order.
    pub partitions: Vec<PartitionedDictionary>,
    pub matching: MatchResult,
    pub messages: Vec<MessageRecord>,
    /// `submissions[t - 1]` are the global blocks uploaded in round `t`, when kept.
    pub submissions: Vec<Vec<Dictionary>>,
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs `f` on every client in parallel and returns the results in client
/// order, or the error of the first failing client in that order.
fn par_clients<T: Send>(
    clients: &[ClientState],
    f: impl Fn(usize, &ClientState) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    let results: Vec<Result<T>> = clients
        .par_iter()
        .enumerate()
        .map(|(i, c)| f(i, c).map_err(|e| c.fail(e)))
        .collect();
    results.into_iter().collect()
}

/// Columnwise mean of the submitted global blocks, optionally renormalised.
pub fn aggregate(submissions: &[Dictionary], renormalize: bool) -> Result<Dictionary> {
    let first = submissions
        .first()
        .ok_or_else(|| Error::InvalidConfig("no submissions to aggregate".into()))?;
    let mut sum = DMatrix::zeros(first.dim(), first.atoms());
    for s in submissions {
        if s.matrix().shape() != sum.shape() {
            return Err(Error::mismatch(
                "aggregation",
                format!("{:?}", sum.shape()),
                format!("{:?}", s.matrix().shape()),
            ));
        }
        sum += s.matrix();
    }
    let mut mean = sum / submissions.len() as f64;
    if renormalize {
        for mut col in mean.column_iter_mut() {
            let n = col.norm();
            if n > 0.0 {
                col /= n;
            }
        }
    }
    Dictionary::with_any_width(mean)
}

fn relative_residual(y: &DMatrix<f64>, dict: &Dictionary, zeta: f64) -> Result<f64> {
    let (_, residual) = dl::sparse_code(y, dict, zeta)?;
    let norm = y.norm();
    Ok(if norm > 0.0 {
        residual / norm
    } else {
        residual
    })
}

fn block_error(estimate: &Dictionary, truth: &Dictionary) -> Result<Option<f64>> {
    if truth.is_empty() && estimate.is_empty() {
        return Ok(Some(0.0));
    }
    if estimate.atoms() != truth.atoms() {
        return Ok(None);
    }
    Ok(Some(dist_12(estimate, truth)?.0))
}

fn trace_for(
    round: usize,
    clients: &[ClientState],
    parts: &[PartitionedDictionary],
    truth: Option<&GroundTruth>,
    wall_ms: f64,
) -> Result<RoundTrace> {
    let mut trace = RoundTrace {
        round,
        client_ids: Vec::with_capacity(clients.len()),
        global_err: Vec::with_capacity(clients.len()),
        local_err: Vec::with_capacity(clients.len()),
        recon_residual: Vec::with_capacity(clients.len()),
        wall_ms,
    };
    for (c, p) in clients.iter().zip(parts) {
        trace.client_ids.push(c.id);
        let (g, l) = match truth {
            Some(gt) => (
                block_error(&p.global, &gt.global)?,
                block_error(&p.local, &gt.locals[c.id])?,
            ),
            None => (None, None),
        };
        trace.global_err.push(g);
        trace.local_err.push(l);
        trace.recon_residual.push(relative_residual(
            &c.data,
            &p.full(),
            c.algorithm.threshold,
        )?);
    }
    Ok(trace)
}

fn validate_clients(
    clients: &[ClientState],
    global_atoms: usize,
    truth: Option<&GroundTruth>,
) -> Result<()> {
    let first = clients
        .first()
        .ok_or_else(|| Error::InvalidConfig("at least one client is required".into()))?;
    let dim = first.data.nrows();
    let mut seen = std::collections::BTreeSet::new();
    for c in clients {
        if !seen.insert(c.id) {
            return Err(Error::InvalidConfig(format!(
                "duplicate client id {}",
                c.id
            )));
        }
        c.algorithm.validate().map_err(|e| c.fail(e))?;
        if c.data.nrows() != dim {
            return Err(c.fail(Error::mismatch("client data rows", dim, c.data.nrows())));
        }
        if c.atoms < global_atoms {
            return Err(c.fail(Error::TooManyGlobalAtoms {
                requested: global_atoms,
                available: c.atoms,
            }));
        }
        if let Some(gt) = truth {
            if c.id >= gt.num_clients() {
                return Err(c.fail(Error::InvalidConfig(format!(
                    "client id {} has no ground truth ({} clients)",
                    c.id,
                    gt.num_clients()
                ))));
            }
        }
    }
    Ok(())
}

/// Runs the federated loop for `opts.rounds` rounds.
///
/// `clients` is updated in place: each ends with its final split in
/// `partition`. Ground truth, when given, is indexed by client id and only
/// feeds the traces.
pub fn run_perma(
    clients: &mut [ClientState],
    opts: &PermaOptions,
    truth: Option<&GroundTruth>,
) -> Result<PermaOutcome> {
    validate_clients(clients, opts.global_atoms, truth)?;
    let threads = opts.threads;
    let n = clients.len();
    let mut net = Network::new();
    let mut history = Vec::with_capacity(opts.rounds + 1);
    let mut submissions = Vec::new();

    // Round 0: initial dictionaries and matching.
    let started = Instant::now();
    let initial = {
        let tx = net.tx.clone();
        let clients_ref = &*clients;
        with_pool(threads, move || {
            par_clients(clients_ref, |_, c| {
                let d = c.initial_dictionary()?;
                tx.send(Envelope {
                    client: c.id,
                    message: Uplink::InitialDictionary(d.clone()),
                })
                .expect("server queue open");
                Ok(d)
            })
        })??
    };
    let mut received: BTreeMap<usize, Dictionary> = net
        .gather(0, n)
        .into_iter()
        .map(|(id, m)| match m {
            Uplink::InitialDictionary(d) => (id, d),
            Uplink::GlobalBlock(_) => unreachable!("round 0 carries full dictionaries"),
        })
        .collect();
    // Layers follow the input order of the clients.
    let layered: Vec<Dictionary> = clients
        .iter()
        .map(|c| received.remove(&c.id).expect("one upload per client"))
        .collect();
    debug_assert_eq!(layered, initial);
    let mut matching = global_matching(&layered, opts.global_atoms, opts.renormalize)?;
    matching.layer_order = clients.iter().map(|c| c.id).collect();

    let mut parts = Vec::with_capacity(n);
    for (i, c) in clients.iter_mut().enumerate() {
        let part = PartitionedDictionary::new(matching.global.clone(), matching.locals[i].clone())?;
        let msg = Downlink::Split(part.clone());
        net.send_down(0, c.id, &msg);
        c.partition = Some(part.clone());
        parts.push(part);
    }
    let mut global = matching.global.clone();
    history.push(trace_for(0, clients, &parts, truth, elapsed_ms(started))?);

    for round in 1..=opts.rounds {
        let started = Instant::now();
        let tx = net.tx.clone();
        let clients_ref = &*clients;
        let updated = with_pool(threads, move || {
            par_clients(clients_ref, |_, c| {
                let part = c.partition.as_ref().expect("split assigned in round 0");
                let next = c.round(part)?;
                tx.send(Envelope {
                    client: c.id,
                    message: Uplink::GlobalBlock(next.global.clone()),
                })
                .expect("server queue open");
                Ok(next)
            })
        })??;

        let blocks: Vec<Dictionary> = net
            .gather(round, n)
            .into_iter()
            .map(|(_, m)| match m {
                Uplink::GlobalBlock(d) => d,
                Uplink::InitialDictionary(_) => unreachable!("later rounds carry global blocks"),
            })
            .collect();
        global = aggregate(&blocks, opts.renormalize)?;
        if opts.keep_submissions {
            submissions.push(blocks);
        }

        parts.clear();
        for (c, next) in clients.iter_mut().zip(updated) {
            let msg = Downlink::Global(global.clone());
            net.send_down(round, c.id, &msg);
            let part = PartitionedDictionary::new(global.clone(), next.local)?;
            c.partition = Some(part.clone());
            parts.push(part);
        }
        history.push(trace_for(
            round,
            clients,
            &parts,
            truth,
            elapsed_ms(started),
        )?);
    }

    Ok(PermaOutcome {
        server: ServerState {
            round: opts.rounds,
            global,
            history,
        },
        partitions: parts,
        matching,
        messages: net.log,
        submissions,
    })
}

fn elapsed_ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Baseline without collaboration: each client iterates its own solver.
///
/// For evaluation, the client atoms that best align with the true global
/// dictionary (bottleneck assignment over the client's atoms) stand in for its
/// global block; the rest stand in for its local block.
pub fn run_independent(
    clients: &[ClientState],
    rounds: usize,
    truth: &GroundTruth,
    threads: Option<usize>,
) -> Result<Vec<RoundTrace>> {
    validate_clients(clients, truth.global.atoms(), Some(truth))?;
    let per_client: Vec<Vec<(PartitionedDictionary, f64)>> = with_pool(threads, || {
        par_clients(clients, |_, c| {
            let mut dict = c.initial_dictionary()?;
            let mut out = Vec::with_capacity(rounds + 1);
            let mut started = Instant::now();
            for t in 0..=rounds {
                if t > 0 {
                    started = Instant::now();
                    dict = c.step(&dict)?;
                }
                out.push((split_by_truth(&dict, &truth.global)?, elapsed_ms(started)));
            }
            Ok(out)
        })
    })??;

    (0..=rounds)
        .map(|t| {
            let parts: Vec<PartitionedDictionary> =
                per_client.iter().map(|p| p[t].0.clone()).collect();
            let wall = per_client.iter().map(|p| p[t].1).sum();
            trace_for(t, clients, &parts, Some(truth), wall)
        })
        .collect()
}

/// Splits `dict` into the atoms best aligned with `global` (signed to match it) and the rest.
fn split_by_truth(dict: &Dictionary, global: &Dictionary) -> Result<PartitionedDictionary> {
    if global.is_empty() {
        return PartitionedDictionary::new(Dictionary::empty(dict.dim()), dict.clone());
    }
    let a = align_columns(dict, global)?;
    let mut g = DMatrix::zeros(dict.dim(), a.indices.len());
    for (k, (&j, &s)) in a.indices.iter().zip(&a.signs).enumerate() {
        g.set_column(k, &(dict.atom(j) * f64::from(s)));
    }
    let rest: Vec<usize> = (0..dict.atoms())
        .filter(|j| !a.indices.contains(j))
        .collect();
    PartitionedDictionary::new(Dictionary::with_any_width(g)?, dict.select(&rest))
}

/// Top-`k` reconstruction split into the global and local contributions.
#[derive(Debug, Clone)]
pub struct ReconstructionSplit {
    pub global: DMatrix<f64>,
    pub local: DMatrix<f64>,
    /// The top-`k` code over `[D_g D_l]`.
    pub code: SparseCode,
}

impl ReconstructionSplit {
    pub fn total(&self) -> DMatrix<f64> {
        &self.global + &self.local
    }
}

/// Codes `y` against `[D_g D_l]` with the thresholded analysis step, keeps the
/// `k` largest-magnitude coefficients per sample (lower index first on ties),
/// and returns `D_g X_g` and `D_l X_l`.
pub fn reconstruct_split(
    y: &DMatrix<f64>,
    part: &PartitionedDictionary,
    zeta: f64,
    k: usize,
) -> Result<ReconstructionSplit> {
    let full = part.full();
    if k > full.atoms() {
        return Err(Error::InvalidConfig(format!(
            "k = {k} exceeds the {} available atoms",
            full.atoms()
        )));
    }
    let (code, _) = dl::sparse_code(y, &full, zeta)?;
    let mut x = code.into_matrix();
    let r = x.nrows();
    let mut order: Vec<usize> = Vec::with_capacity(r);
    for mut col in x.column_iter_mut() {
        order.clear();
        order.extend(0..r);
        order.sort_by(|&a, &b| col[b].abs().total_cmp(&col[a].abs()).then(a.cmp(&b)));
        for &drop in &order[k..] {
            col[drop] = 0.0;
        }
    }
    let rg = part.global_width();
    let global = part.global.matrix() * x.rows(0, rg);
    let local = part.local.matrix() * x.rows(rg, r - rg);
    Ok(ReconstructionSplit {
        global,
        local,
        code: SparseCode::new(x)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{generate, SynthConfig};

    fn fixture() -> GroundTruth {
        generate(&SynthConfig::default()).unwrap()
    }

    #[test]
    fn fixed_point_at_ground_truth() {
        let gt = fixture();
        let part = PartitionedDictionary::split(&gt.client_dictionary(0), 3).unwrap();
        let alg = DlAlgorithm::orthogonal(0.15);
        let next = local_update(&gt.data[0], &part, &alg).unwrap();
        assert!((next.global.matrix() - part.global.matrix()).norm() < 1e-9);
        assert!(dist_12(&next.local, &part.local).unwrap().0 < 1e-9);
    }

    #[test]
    fn zero_global_width_is_plain_step() {
        let gt = fixture();
        let part = PartitionedDictionary::split(&gt.client_dictionary(0), 0).unwrap();
        let alg = DlAlgorithm::orthogonal(0.15);
        let next = local_update(&gt.data[0], &part, &alg).unwrap();
        assert!(next.global.is_empty());
        assert_eq!(next.local, alg.step(&gt.data[0], &part.full()).unwrap().0);
    }

    #[test]
    fn realign_is_without_replacement() {
        // Both reference atoms are nearest to output atom 0.
        let next =
            Dictionary::new(DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 0.0, 1.0])).unwrap();
        let s = 0.5f64.sqrt();
        let reference =
            Dictionary::normalized(DMatrix::from_column_slice(2, 2, &[1.0, 0.1, s, -s * 0.9]))
                .unwrap();
        let part = realign(&next, &reference).unwrap();
        assert_eq!(part.global.atom(0)[0], 1.0);
        assert_eq!(part.global.atom(1)[1], -1.0);
        assert!(part.local.is_empty());
    }

    #[test]
    fn aggregate_is_columnwise_mean() {
        let a = Dictionary::new(DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
        let b = Dictionary::new(DMatrix::from_column_slice(2, 1, &[0.0, 1.0])).unwrap();
        let raw = aggregate(&[a.clone(), b.clone()], false).unwrap();
        assert_eq!(raw.matrix().as_slice(), &[0.5, 0.5]);
        let unit = aggregate(&[a, b], true).unwrap();
        assert!((unit.matrix()[(0, 0)] - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn reconstruct_full_k_is_exact() {
        let gt = fixture();
        let part = PartitionedDictionary::split(&gt.client_dictionary(3), 3).unwrap();
        let split = reconstruct_split(&gt.data[3], &part, 0.15, 6).unwrap();
        assert!((split.total() - &gt.data[3]).norm() < 1e-9);
    }

    #[test]
    fn reconstruct_support_is_at_most_k() {
        let gt = fixture();
        let part = PartitionedDictionary::split(&gt.client_dictionary(3), 3).unwrap();
        let split = reconstruct_split(&gt.data[3], &part, 0.0, 2).unwrap();
        for col in split.code.matrix().column_iter() {
            assert!(col.iter().filter(|v| **v != 0.0).count() <= 2);
        }
        let recon = part.full().matrix() * split.code.matrix();
        assert!((split.total() - recon).norm() < 1e-12);
        assert!(reconstruct_split(&gt.data[3], &part, 0.0, 7).is_err());
    }

    fn clients(gt: &GroundTruth) -> Vec<ClientState> {
        (0..gt.num_clients())
            .map(|i| {
                ClientState::new(
                    i,
                    gt.data[i].clone(),
                    DlAlgorithm::orthogonal(0.15),
                    WarmStartConfig::default().for_client(i),
                    6,
                )
            })
            .collect()
    }

    fn small() -> GroundTruth {
        generate(&SynthConfig {
            num_clients: 4,
            global_atoms: 2,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn zero_rounds_returns_matching() {
        let gt = small();
        let mut cs = clients(&gt);
        let opts = PermaOptions {
            global_atoms: 2,
            rounds: 0,
            ..PermaOptions::default()
        };
        let out = run_perma(&mut cs, &opts, Some(&gt)).unwrap();
        assert_eq!(out.server.global, out.matching.global);
        assert_eq!(out.server.history.len(), 1);
        for (p, l) in out.partitions.iter().zip(&out.matching.locals) {
            assert_eq!(&p.local, l);
        }
    }

    #[test]
    fn serial_and_parallel_agree() {
        let gt = small();
        let run = |threads| {
            let mut cs = clients(&gt);
            let opts = PermaOptions {
                global_atoms: 2,
                rounds: 5,
                threads: Some(threads),
                ..PermaOptions::default()
            };
            let out = run_perma(&mut cs, &opts, Some(&gt)).unwrap();
            (
                traces_to_csv(&out.server.history, false),
                out.server.global,
                out.messages,
            )
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn server_global_is_mean_of_submissions() {
        let gt = small();
        let mut cs = clients(&gt);
        let opts = PermaOptions {
            global_atoms: 2,
            rounds: 3,
            renormalize: false,
            keep_submissions: true,
            ..PermaOptions::default()
        };
        let out = run_perma(&mut cs, &opts, Some(&gt)).unwrap();
        assert_eq!(out.submissions.len(), 3);
        let last = &out.submissions[2];
        let mut mean = DMatrix::zeros(6, 2);
        for s in last {
            mean += s.matrix();
        }
        mean /= last.len() as f64;
        assert!((mean - out.server.global.matrix()).norm() <= 1e-12);
    }

    #[test]
    fn uplinks_after_round_zero_carry_only_global_blocks() {
        let gt = small();
        let mut cs = clients(&gt);
        let opts = PermaOptions {
            global_atoms: 2,
            rounds: 2,
            ..PermaOptions::default()
        };
        let out = run_perma(&mut cs, &opts, None).unwrap();
        let ups: Vec<_> = out
            .messages
            .iter()
            .filter(|m| m.direction == Direction::Uplink && m.round > 0)
            .collect();
        assert_eq!(ups.len(), 2 * 4);
        assert!(ups.iter().all(|m| m.payload_shape == vec![(6, 2)]));
    }

    #[test]
    fn failing_client_is_named() {
        let gt = small();
        let mut cs = clients(&gt);
        cs[2].data = DMatrix::zeros(5, 200);
        let err = run_perma(&mut cs, &PermaOptions::default(), None).unwrap_err();
        assert!(matches!(err, Error::ClientFailed { client: 2, .. }));
        let mut cs = clients(&gt);
        cs[1].id = 0;
        assert!(run_perma(&mut cs, &PermaOptions::default(), None).is_err());
    }

    #[test]
    fn csv_rows_per_client() {
        let trace = RoundTrace {
            round: 1,
            client_ids: vec![0, 1],
            global_err: vec![Some(0.5), None],
            local_err: vec![None, Some(0.25)],
            recon_residual: vec![0.0, 1.0],
            wall_ms: 3.5,
        };
        let csv = traces_to_csv(std::slice::from_ref(&trace), false);
        assert_eq!(
            csv,
            format!("{TRACE_HEADER}\n1,0,5e-1,,0e0,0\n1,1,,2.5e-1,1e0,0\n")
        );
        assert!(traces_to_csv(&[trace], true).ends_with(",3.5\n"));
    }

    #[test]
    fn independent_baseline_recovers_on_clean_fixture() {
        let gt = small();
        let traces = run_independent(&clients(&gt), 5, &gt, Some(2)).unwrap();
        assert_eq!(traces.len(), 6);
        let last = traces.last().unwrap();
        assert!(last.global_err.iter().all(Option::is_some));
        assert!(last.recon_residual.iter().all(|r| r.is_finite()));
    }

    #[test]
    fn message_line_format() {
        let rec = MessageRecord {
            round: 2,
            direction: Direction::Uplink,
            client: 4,
            kind: "global_block",
            payload_shape: vec![(6, 3)],
        };
        assert_eq!(
            rec.to_line(),
            r#"{"round":2,"direction":"uplink","client":4,"kind":"global_block","payload_shape":[[6,3]]}"#
        );
    }
}
