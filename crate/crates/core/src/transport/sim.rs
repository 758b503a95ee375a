//! Single-threaded discrete-event simulator.
//!
//! Every message is encoded to bytes, logged, delayed by a seeded amount and
//! decoded on delivery, so runs exercise the real wire format. When the queue
//! drains before the server finishes, the server's stage timeout fires.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;
use std::panic::{self, AssertUnwindSafe};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::wire;
use super::ByteCounters;
use crate::error::{Error, Result};
use crate::hypermesh::ClientId;
use crate::protocol::{ClientState, Message, MessageKind, Outbound, ServerState, SERVER_ID};
use crate::seeds::derive_rng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeliveryOrder {
    /// Ties in delivery time resolve by send order.
    #[default]
    Fifo,
    /// Ties resolve by a seeded random key.
    SeededShuffle,
}

/// A client that stops responding once it reaches `round`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrashFault {
    pub client: ClientId,
    pub round: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSchedule {
    pub seed: u64,
    /// Per-message delay in logical ticks, drawn uniformly from `[min, max]`.
    pub delay_min: u64,
    pub delay_max: u64,
    pub order: DeliveryOrder,
    pub crashes: Vec<CrashFault>,
}

impl Default for SimSchedule {
    fn default() -> Self {
        Self {
            seed: 0,
            delay_min: 1,
            delay_max: 1,
            order: DeliveryOrder::Fifo,
            crashes: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Endpoint {
    Server,
    Client(ClientId),
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Server => write!(f, "server"),
            Endpoint::Client(c) => write!(f, "client{c}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub seq: u64,
    pub sent_at: u64,
    pub from: Endpoint,
    pub to: Endpoint,
    pub kind: MessageKind,
    pub round: u32,
    pub bytes: Vec<u8>,
}

/// Every envelope sent during a run, in send order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn counters(&self) -> ByteCounters {
        let mut c = ByteCounters::default();
        for e in &self.entries {
            c.record(e.round, e.kind, e.bytes.len());
        }
        c
    }

    /// One line per envelope with a digest of its bytes.
    pub fn to_log(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let digest = Sha256::digest(&e.bytes);
            let hex: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
            out.push_str(&format!(
                "{} t={} {}->{} {} round={} len={} sha256={}\n",
                e.seq,
                e.sent_at,
                e.from,
                e.to,
                e.kind.name(),
                e.round,
                e.bytes.len(),
                hex
            ));
        }
        out
    }
}

#[derive(Debug)]
pub struct SimOutcome {
    pub server: ServerState,
    pub clients: Vec<ClientState>,
    pub transcript: Transcript,
}

/// A run that stopped early; the transcript up to that point is kept.
#[derive(Debug)]
pub struct SimAbort {
    pub reason: String,
    pub transcript: Transcript,
}

impl fmt::Display for SimAbort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} after {} envelopes",
            self.reason,
            self.transcript.entries.len()
        )
    }
}

impl From<SimAbort> for Error {
    fn from(a: SimAbort) -> Self {
        Error::SimulationAborted(a.to_string())
    }
}

struct Pending {
    to: Endpoint,
    bytes: Vec<u8>,
}

struct Simulator {
    schedule: SimSchedule,
    rng: rand_chacha::ChaCha20Rng,
    now: u64,
    seq: u64,
    queue: BinaryHeap<Reverse<(u64, u64, u64)>>,
    pending: BTreeMap<u64, Pending>,
    transcript: Transcript,
    crashed: Vec<bool>,
}

impl Simulator {
    fn send(
        &mut self,
        from: Endpoint,
        to: Endpoint,
        msg: &Message,
        params: &crate::group::GroupParams,
    ) {
        let sender = match from {
            Endpoint::Server => SERVER_ID,
            Endpoint::Client(c) => c as u32,
        };
        let bytes = wire::encode(msg, sender, params);
        let delay = self
            .rng
            .random_range(self.schedule.delay_min..=self.schedule.delay_max);
        let tie = match self.schedule.order {
            DeliveryOrder::Fifo => self.seq,
            DeliveryOrder::SeededShuffle => self.rng.random(),
        };
        self.transcript.entries.push(TranscriptEntry {
            seq: self.seq,
            sent_at: self.now,
            from,
            to,
            kind: msg.kind(),
            round: msg.round(),
            bytes: bytes.clone(),
        });
        self.queue.push(Reverse((self.now + delay, tie, self.seq)));
        self.pending.insert(self.seq, Pending { to, bytes });
        self.seq += 1;
    }

    fn route(&mut self, outs: Vec<Outbound>, clients: usize, params: &crate::group::GroupParams) {
        for o in outs {
            match o {
                Outbound::To(c, m) => self.send(Endpoint::Server, Endpoint::Client(c), &m, params),
                Outbound::Broadcast(m) => {
                    for c in 0..clients {
                        self.send(Endpoint::Server, Endpoint::Client(c), &m, params);
                    }
                }
            }
        }
    }

    fn abort(self, reason: String) -> SimAbort {
        SimAbort {
            reason,
            transcript: self.transcript,
        }
    }
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "non-string panic".into())
}

fn guarded<T>(who: Endpoint, f: impl FnOnce() -> Result<T>) -> std::result::Result<T, String> {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(v)) => Ok(v),
        Ok(Err(e)) => Err(format!("{who} failed: {e}")),
        Err(p) => Err(format!("{who} panicked: {}", panic_message(p))),
    }
}

/// Drives registration and every round to completion.
pub fn run_simulation(
    schedule: &SimSchedule,
    mut server: ServerState,
    mut clients: Vec<ClientState>,
) -> std::result::Result<SimOutcome, SimAbort> {
    let params = server.config().params.clone();
    let n = server.config().topology.client_count();
    let mut sim = Simulator {
        schedule: schedule.clone(),
        rng: derive_rng(schedule.seed, "sim-schedule", &[]),
        now: 0,
        seq: 0,
        queue: BinaryHeap::new(),
        pending: BTreeMap::new(),
        transcript: Transcript::default(),
        crashed: vec![false; n],
    };
    if clients.len() != n || clients.iter().enumerate().any(|(i, c)| c.id() != i) {
        return Err(sim.abort(format!("expected clients 0..{n} in order")));
    }
    if schedule.delay_min > schedule.delay_max {
        return Err(sim.abort("empty delay range".into()));
    }
    let crash_round = |c: ClientId| {
        schedule
            .crashes
            .iter()
            .filter(|f| f.client == c)
            .map(|f| f.round)
            .min()
    };

    for c in clients.iter_mut() {
        if crash_round(c.id()) == Some(0) {
            sim.crashed[c.id()] = true;
            continue;
        }
        for m in c.start() {
            sim.send(Endpoint::Client(c.id()), Endpoint::Server, &m, &params);
        }
    }

    let mut idle_timeouts = 0;
    loop {
        let Some(Reverse((time, _, seq))) = sim.queue.pop() else {
            if server.is_finished() {
                break;
            }
            idle_timeouts += 1;
            if idle_timeouts > 2 * n + 4 {
                return Err(sim.abort("no progress after repeated timeouts".into()));
            }
            match guarded(Endpoint::Server, || server.on_timeout()) {
                Ok(outs) => sim.route(outs, n, &params),
                Err(reason) => return Err(sim.abort(reason)),
            }
            continue;
        };
        sim.now = time;
        let Pending { to, bytes } = sim
            .pending
            .remove(&seq)
            .expect("queued envelopes are pending");
        let (sender, msg) = match wire::decode(&bytes, &params) {
            Ok(v) => v,
            Err(e) => return Err(sim.abort(format!("undecodable envelope {seq}: {e}"))),
        };
        match to {
            Endpoint::Server => {
                match guarded(Endpoint::Server, || server.handle(sender as ClientId, msg)) {
                    Ok(outs) => {
                        if !outs.is_empty() {
                            idle_timeouts = 0;
                        }
                        sim.route(outs, n, &params)
                    }
                    Err(reason) => return Err(sim.abort(reason)),
                }
            }
            Endpoint::Client(c) => {
                if sim.crashed[c] {
                    continue;
                }
                let client = &mut clients[c];
                let outs = match guarded(to, || client.handle(msg)) {
                    Ok(outs) => outs,
                    Err(reason) => return Err(sim.abort(reason)),
                };
                if crash_round(c).is_some_and(|r| client.round() >= r && !client.is_finished()) {
                    sim.crashed[c] = true;
                    continue;
                }
                for m in outs {
                    sim.send(to, Endpoint::Server, &m, &params);
                }
            }
        }
    }
    Ok(SimOutcome {
        server,
        clients,
        transcript: sim.transcript,
    })
}
