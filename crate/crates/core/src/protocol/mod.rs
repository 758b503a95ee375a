//! Client and server state machines plus the server's detection rounds.
//!
//! Both machines are sans-IO: they consume [`Message`]s and return the
//! messages to send, so the simulator and the TCP transport drive the same code.

pub mod aggregate;
pub mod client;
pub mod detect;
pub mod seal;
pub mod server;

use serde::{Deserialize, Serialize};

use crate::group::{Element, Scalar};
use crate::hypermesh::{ClientId, GroupId};
use crate::masking::MaskedSubmission;

pub use aggregate::{aggregate, group_sums, AggregateOutcome};
pub use client::{
    ClientConfig, ClientPhase, ClientState, FixedUpdates, LocalUpdate, LocalWorkload,
};
pub use detect::{
    detect_round1, detect_round2, detect_round3, identify_malicious, leakage_probe, run_detection,
    LegitimateRange, RoundView, SuspiciousSet,
};
pub use seal::KeyPair;
pub use server::{Outbound, RoundRecord, ServerConfig, ServerPhase, ServerState};

/// Sender id the server uses in envelopes.
pub const SERVER_ID: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlagReason {
    BadShareSum,
    InconsistentW,
    OutOfRange,
}

impl FlagReason {
    pub fn name(self) -> &'static str {
        match self {
            FlagReason::BadShareSum => "bad-share-sum",
            FlagReason::InconsistentW => "inconsistent-w",
            FlagReason::OutOfRange => "out-of-range",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            FlagReason::BadShareSum => 1,
            FlagReason::InconsistentW => 2,
            FlagReason::OutOfRange => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(FlagReason::BadShareSum),
            2 => Some(FlagReason::InconsistentW),
            3 => Some(FlagReason::OutOfRange),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Submission {
    pub masked: MaskedSubmission,
    /// Per-layer dequantization scales, sent in the clear.
    pub scales: Vec<f64>,
}

/// Unmasked quantized update, used only as the overhead baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct PlainSubmission {
    pub client: ClientId,
    pub round: u32,
    pub scales: Vec<f64>,
    pub codes: Vec<Scalar>,
}

/// Aggregated update broadcast at the end of a round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalUpdate {
    pub round: u32,
    /// Sum of surviving group sums, per coordinate.
    pub sum: Vec<i64>,
    /// Surviving group count times `d`.
    pub divisor: u64,
    pub scales: Vec<f64>,
    /// Every group was removed; clients keep the previous model.
    pub void: bool,
}

impl GlobalUpdate {
    pub fn mean_codes(&self) -> Vec<f64> {
        self.sum
            .iter()
            .map(|&s| s as f64 / self.divisor as f64)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Verdict {
    pub round: u32,
    pub flagged: Vec<(GroupId, FlagReason)>,
    pub malicious: Vec<ClientId>,
    pub dropped: Vec<ClientId>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    Register {
        public_key: Element,
    },
    TopologyAssign {
        client: ClientId,
        identifier: Vec<usize>,
        groups: Vec<GroupId>,
        neighbors: Vec<(ClientId, Element)>,
    },
    SealedRandom {
        from: ClientId,
        to: ClientId,
        round: u32,
        ciphertext: Vec<u8>,
    },
    DropoutNotice {
        round: u32,
        dropped: Vec<ClientId>,
    },
    Submission(Submission),
    PlainSubmission(PlainSubmission),
    GlobalModel(GlobalUpdate),
    Verdict(Verdict),
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        match self {
            Message::Register { .. } => MessageKind::Register,
            Message::TopologyAssign { .. } => MessageKind::TopologyAssign,
            Message::SealedRandom { .. } => MessageKind::SealedRandom,
            Message::DropoutNotice { .. } => MessageKind::DropoutNotice,
            Message::Submission(_) => MessageKind::Submission,
            Message::PlainSubmission(_) => MessageKind::PlainSubmission,
            Message::GlobalModel(_) => MessageKind::GlobalModel,
            Message::Verdict(_) => MessageKind::Verdict,
        }
    }

    /// Round carried in the envelope header; 0 for setup messages.
    pub fn round(&self) -> u32 {
        match self {
            Message::Register { .. } | Message::TopologyAssign { .. } => 0,
            Message::SealedRandom { round, .. } | Message::DropoutNotice { round, .. } => *round,
            Message::Submission(s) => s.masked.round,
            Message::PlainSubmission(p) => p.round,
            Message::GlobalModel(g) => g.round,
            Message::Verdict(v) => v.round,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MessageKind {
    Register,
    TopologyAssign,
    SealedRandom,
    DropoutNotice,
    Submission,
    PlainSubmission,
    GlobalModel,
    Verdict,
}

impl MessageKind {
    pub const ALL: [MessageKind; 8] = [
        MessageKind::Register,
        MessageKind::TopologyAssign,
        MessageKind::SealedRandom,
        MessageKind::DropoutNotice,
        MessageKind::Submission,
        MessageKind::PlainSubmission,
        MessageKind::GlobalModel,
        MessageKind::Verdict,
    ];

    pub fn tag(self) -> u8 {
        match self {
            MessageKind::Register => 1,
            MessageKind::TopologyAssign => 2,
            MessageKind::SealedRandom => 3,
            MessageKind::DropoutNotice => 4,
            MessageKind::Submission => 5,
            MessageKind::PlainSubmission => 6,
            MessageKind::GlobalModel => 7,
            MessageKind::Verdict => 8,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.tag() == tag)
    }

    pub fn name(self) -> &'static str {
        match self {
            MessageKind::Register => "register",
            MessageKind::TopologyAssign => "topology-assign",
            MessageKind::SealedRandom => "sealed-random",
            MessageKind::DropoutNotice => "dropout-notice",
            MessageKind::Submission => "submission",
            MessageKind::PlainSubmission => "plain-submission",
            MessageKind::GlobalModel => "global-model",
            MessageKind::Verdict => "verdict",
        }
    }
}
