//! Wires config, workload, adversary and transport into one experiment.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::BufWriter;
use std::net::TcpListener;
use std::path::Path;
use std::sync::Arc;
use std::thread;

use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{DatasetSpec, Defense, ExperimentConfig, TransportKind};
use super::metrics::{write_metrics_csv, Cumulative, RoundMetrics};
use crate::error::{Error, Result};
use crate::group::{GroupParams, Tier};
use crate::hypermesh::{ClientId, HypermeshTopology};
use crate::protocol::{
    ClientConfig, ClientState, LocalWorkload, Message, MessageKind, PlainSubmission, RoundRecord,
    ServerConfig, ServerState,
};
use crate::quantfl::idx::load_idx_dataset;
use crate::quantfl::{apply_global, evaluate, Codebook, Dataset, DenseModel};
use crate::seeds::derive_rng;
use crate::transport::{
    connect_tcp, run_simulation, serve_tcp, wire, ByteCounters, TcpOptions, Traffic, Transcript,
};

/// Everything derived from the config before any message is sent.
#[derive(Clone, Debug)]
pub struct Setup {
    pub topology: Arc<HypermeshTopology>,
    pub params: GroupParams,
    pub initial_model: DenseModel,
    pub shards: Vec<Dataset>,
    pub test: Dataset,
}

pub fn prepare(config: &ExperimentConfig) -> Result<Setup> {
    config.validate()?;
    let topology = Arc::new(config.topology()?);
    let (train, test) = match &config.dataset {
        DatasetSpec::Synthetic(blobs) => blobs.generate(config.seeds.data),
        DatasetSpec::Idx(idx) => (
            load_idx_dataset(
                &idx.train_images,
                &idx.train_labels,
                idx.train_limit,
                idx.classes,
            )?,
            load_idx_dataset(
                &idx.test_images,
                &idx.test_labels,
                idx.test_limit,
                idx.classes,
            )?,
        ),
    };
    let shards = train.split_iid(
        topology.client_count(),
        &mut derive_rng(config.seeds.data, "split", &[]),
    )?;
    let mut sizes = vec![train.dim];
    sizes.extend(&config.model.hidden);
    sizes.push(train.classes);
    let initial_model = DenseModel::mlp(
        &sizes,
        &mut derive_rng(config.seeds.data, "init-model", &[]),
    )?;
    for a in config.active_attacks() {
        a.validate(
            config.rounds,
            initial_model.parameter_count(),
            topology.client_count(),
        )?;
    }
    Ok(Setup {
        params: GroupParams::for_tier(config.tier),
        topology,
        initial_model,
        shards,
        test,
    })
}

impl Setup {
    pub fn parameter_count(&self) -> usize {
        self.initial_model.parameter_count()
    }

    pub fn server(&self, config: &ExperimentConfig) -> ServerState {
        ServerState::new(ServerConfig {
            topology: Arc::clone(&self.topology),
            params: self.params.clone(),
            codebook: config.quantization,
            rounds: config.rounds,
            parameter_count: self.parameter_count(),
            defense: config.defense == Defense::On,
            report_leakage: config.report_leakage,
        })
    }

    pub fn client(&self, config: &ExperimentConfig, id: ClientId) -> Result<ClientState> {
        let shard = self.shards.get(id).ok_or(Error::UnknownClient(id))?.clone();
        let workload = LocalWorkload {
            client: id,
            model: self.initial_model.clone(),
            shard,
            train: config.training.into(),
            codebook: config.quantization,
            seed: config.seeds.data,
        };
        ClientState::new(
            ClientConfig {
                id,
                topology: Arc::clone(&self.topology),
                params: self.params.clone(),
                rounds: config.rounds,
                protocol_seed: config.seeds.protocol,
                attack_seed: config.seeds.attack,
                attacks: config.active_attacks().to_vec(),
            },
            Box::new(workload),
        )
    }

    pub fn clients(&self, config: &ExperimentConfig) -> Result<Vec<ClientState>> {
        self.topology
            .clients()
            .map(|c| self.client(config, c))
            .collect()
    }

    /// Frame size of an unmasked submission of the same update; the overhead baseline.
    pub fn plaintext_submission_bytes(&self) -> usize {
        let plain = Message::PlainSubmission(PlainSubmission {
            client: 0,
            round: 1,
            scales: vec![0.0; self.initial_model.layers.len()],
            codes: vec![self.params.zero(); self.parameter_count()],
        });
        wire::encode(&plain, 0, &self.params).len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub clients: usize,
    pub d: usize,
    pub n: usize,
    pub rounds: u32,
    pub quantization: Codebook,
    pub defense: Defense,
    pub baseline: bool,
    pub tier: Tier,
    pub transport: TransportKind,
    pub parameter_count: usize,
    pub initial_accuracy: f64,
    pub final_accuracy: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub identified: BTreeSet<ClientId>,
    pub true_malicious: BTreeSet<ClientId>,
    pub void_rounds: Vec<u32>,
    pub total_bytes: u64,
    pub bytes_by_kind: BTreeMap<MessageKind, Traffic>,
    /// Mean size of one masked submission frame.
    pub submission_bytes_per_client: Option<f64>,
    pub plaintext_submission_bytes: u64,
    /// `submission_bytes_per_client / plaintext_submission_bytes`.
    pub overhead_factor: Option<f64>,
    /// Over every round's (sum, divisor, void).
    pub updates_sha256: String,
    pub final_model_sha256: String,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub metrics: Vec<RoundMetrics>,
    pub summary: Summary,
    pub history: Vec<RoundRecord>,
    pub counters: ByteCounters,
    /// Simulator runs only.
    pub transcript: Option<Transcript>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn model_digest(model: &DenseModel) -> String {
    let mut h = Sha256::new();
    for w in model.flat() {
        h.update(w.to_le_bytes());
    }
    hex(&h.finalize())
}

fn updates_digest(history: &[RoundRecord]) -> String {
    let mut h = Sha256::new();
    for r in history {
        h.update(r.round.to_le_bytes());
        h.update([r.update.void as u8]);
        h.update(r.update.divisor.to_le_bytes());
        for s in &r.update.sum {
            h.update(s.to_le_bytes());
        }
    }
    hex(&h.finalize())
}

/// Clients any active attack targets in `round`.
pub fn true_malicious(config: &ExperimentConfig, round: u32) -> BTreeSet<ClientId> {
    config
        .active_attacks()
        .iter()
        .flat_map(|a| {
            a.clients
                .iter()
                .copied()
                .filter(move |&c| a.targets(c, round))
        })
        .collect()
}

/// Replays the global updates on the initial model and derives metrics.
pub fn summarize(
    config: &ExperimentConfig,
    setup: &Setup,
    history: &[RoundRecord],
    counters: &ByteCounters,
    transport: TransportKind,
) -> Result<(Vec<RoundMetrics>, Summary)> {
    let clients = setup.topology.client_count();
    let mut model = setup.initial_model.clone();
    let initial_accuracy = evaluate(&model, &setup.test)?;
    let mut cumulative = Cumulative::default();
    let mut metrics = Vec::with_capacity(history.len());
    for r in history {
        if !r.update.void {
            model = apply_global(
                &model,
                &r.update.mean_codes(),
                &r.update.scales,
                config.quantization,
            )?;
        }
        let truth = true_malicious(config, r.round);
        cumulative.update(&r.malicious, &truth);
        metrics.push(RoundMetrics {
            round: r.round,
            accuracy: evaluate(&model, &setup.test)?,
            void: r.update.void,
            surviving_groups: r.aggregate.surviving.len(),
            dropped: r.dropped.clone(),
            flagged: r.suspicious.pairs(),
            identified: r.malicious.clone(),
            true_malicious: truth,
            cumulative_tpr: cumulative.tpr(),
            cumulative_fpr: cumulative.fpr(clients),
            bytes: counters.round(r.round),
            leaked_coordinates: r.leaked_coordinates,
        });
    }
    let bytes_by_kind: BTreeMap<MessageKind, Traffic> = MessageKind::ALL
        .into_iter()
        .map(|k| (k, counters.kind_total(k)))
        .filter(|(_, t)| t.frames > 0)
        .collect();
    let submissions = counters.kind_total(MessageKind::Submission);
    let plain = setup.plaintext_submission_bytes() as u64;
    let per_client =
        (submissions.frames > 0).then(|| submissions.bytes as f64 / submissions.frames as f64);
    let summary = Summary {
        clients,
        d: config.d,
        n: config.n,
        rounds: config.rounds,
        quantization: config.quantization,
        defense: config.defense,
        baseline: config.baseline,
        tier: config.tier,
        transport,
        parameter_count: setup.parameter_count(),
        initial_accuracy,
        final_accuracy: metrics.last().map_or(initial_accuracy, |m| m.accuracy),
        tpr: cumulative.tpr(),
        fpr: cumulative.fpr(clients),
        identified: cumulative.identified.clone(),
        true_malicious: cumulative.truth.clone(),
        void_rounds: history
            .iter()
            .filter(|r| r.update.void)
            .map(|r| r.round)
            .collect(),
        total_bytes: counters.total_bytes(),
        bytes_by_kind,
        submission_bytes_per_client: per_client,
        plaintext_submission_bytes: plain,
        overhead_factor: per_client.map(|b| b / plain as f64),
        updates_sha256: updates_digest(history),
        final_model_sha256: model_digest(&model),
    };
    Ok((metrics, summary))
}

/// Server and clients on loopback threads in this process.
fn run_tcp_local(config: &ExperimentConfig, setup: &Setup) -> Result<(ServerState, ByteCounters)> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    let options: TcpOptions = config.tcp.into();
    let handles: Vec<_> = setup
        .clients(config)?
        .into_iter()
        .map(|c| {
            let options = options.clone();
            thread::spawn(move || connect_tcp(addr, c, &options))
        })
        .collect();
    let served = serve_tcp(listener, setup.server(config), &options);
    for h in handles {
        match h.join() {
            Ok(Ok(_)) => {}
            Ok(Err(e)) => log::warn!("client ended with error: {e}"),
            Err(_) => return Err(Error::Protocol("client thread panicked".into())),
        }
    }
    let out = served?;
    Ok((out.server, out.counters))
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let setup = prepare(config)?;
    info!(
        "running {}^{} for {} rounds over {} ({} parameters)",
        config.d,
        config.n,
        config.rounds,
        config.transport.name(),
        setup.parameter_count()
    );
    let (history, counters, transcript) = match config.transport {
        TransportKind::Sim => {
            let out = run_simulation(
                &config.schedule,
                setup.server(config),
                setup.clients(config)?,
            )?;
            let counters = out.transcript.counters();
            (
                out.server.history().to_vec(),
                counters,
                Some(out.transcript),
            )
        }
        TransportKind::Tcp => {
            let (server, counters) = run_tcp_local(config, &setup)?;
            (server.history().to_vec(), counters, None)
        }
    };
    let (metrics, summary) = summarize(config, &setup, &history, &counters, config.transport)?;
    Ok(ExperimentOutcome {
        metrics,
        summary,
        history,
        counters,
        transcript,
    })
}

/// Writes `metrics.csv`, `summary.json` and, for simulator runs, `transcript.log`.
pub fn write_outputs(outcome: &ExperimentOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_metrics_csv(
        BufWriter::new(File::create(dir.join("metrics.csv"))?),
        &outcome.metrics,
    )?;
    let mut json = serde_json::to_string_pretty(&outcome.summary)?;
    json.push('\n');
    fs::write(dir.join("summary.json"), json)?;
    if let Some(t) = &outcome.transcript {
        fs::write(dir.join("transcript.log"), t.to_log())?;
    }
    Ok(())
}
