//! Message delivery: a deterministic in-memory simulator and a TCP transport,
//! both speaking the same wire format.

pub mod sim;
pub mod tcp;
pub mod wire;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::protocol::MessageKind;

pub use sim::{
    run_simulation, CrashFault, DeliveryOrder, SimAbort, SimOutcome, SimSchedule, Transcript,
};
pub use tcp::{connect_tcp, serve_tcp, TcpOptions, TcpServerOutcome};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Traffic {
    pub frames: u64,
    pub bytes: u64,
}

/// Frames and bytes per `(round, message kind)`, counted once per hop.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ByteCounters {
    pub by_round: BTreeMap<(u32, MessageKind), Traffic>,
}

impl ByteCounters {
    pub fn record(&mut self, round: u32, kind: MessageKind, bytes: usize) {
        let t = self.by_round.entry((round, kind)).or_default();
        t.frames += 1;
        t.bytes += bytes as u64;
    }

    pub fn round(&self, round: u32) -> BTreeMap<MessageKind, Traffic> {
        self.by_round
            .iter()
            .filter(|((r, _), _)| *r == round)
            .map(|((_, k), t)| (*k, *t))
            .collect()
    }

    pub fn total_bytes(&self) -> u64 {
        self.by_round.values().map(|t| t.bytes).sum()
    }

    pub fn kind_total(&self, kind: MessageKind) -> Traffic {
        self.by_round.iter().filter(|((_, k), _)| *k == kind).fold(
            Traffic::default(),
            |acc, (_, t)| Traffic {
                frames: acc.frames + t.frames,
                bytes: acc.bytes + t.bytes,
            },
        )
    }
}
