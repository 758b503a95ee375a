//! Client-side state machine.
//!
//! Per round: produce codes from the local workload, seal one random per
//! neighbor and send it through the server, wait for the co-members' randoms,
//! derive shares, let any configured attack rewrite the inputs, then submit.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use log::{debug, warn};

use super::seal::{self, KeyPair};
use super::{GlobalUpdate, Message, Submission, Verdict};
use crate::adversary::{apply_attack, AttackSpec};
use crate::error::{Error, Result};
use crate::group::{Element, GroupParams, Scalar};
use crate::hypermesh::{ClientId, GroupId, HypermeshTopology};
use crate::masking::{
    derive_group_share, generate_randoms, MaskedSubmission, PairwiseRandoms, SubmissionInputs,
};
use crate::quantfl::{
    apply_global, local_train, quantize, Codebook, Dataset, DenseModel, TrainConfig,
};
use crate::seeds::derive_rng;
use crate::transport::wire::{decode_scalars, encode_scalars};

/// Source of the codes a client submits each round.
pub trait LocalUpdate: Send {
    /// Codes and per-layer scales for `round`.
    fn produce(&mut self, round: u32) -> Result<(Vec<i64>, Vec<f64>)>;
    /// Consumes the round's aggregate. Void updates must leave the model unchanged.
    fn apply(&mut self, update: &GlobalUpdate) -> Result<()>;
    fn parameter_count(&self) -> usize;
    fn codebook(&self) -> Codebook;
}

/// Local SGD from the current global model, then quantization.
#[derive(Clone, Debug)]
pub struct LocalWorkload {
    pub client: ClientId,
    pub model: DenseModel,
    pub shard: Dataset,
    pub train: TrainConfig,
    pub codebook: Codebook,
    pub seed: u64,
}

impl LocalUpdate for LocalWorkload {
    fn produce(&mut self, round: u32) -> Result<(Vec<i64>, Vec<f64>)> {
        let mut rng = derive_rng(
            self.seed,
            "local-train",
            &[self.client as u64, round as u64],
        );
        let trained = local_train(&self.model, &self.shard, &self.train, &mut rng)?;
        let q = quantize(&trained, self.codebook);
        Ok((q.codes(), q.scales()))
    }

    fn apply(&mut self, update: &GlobalUpdate) -> Result<()> {
        if !update.void {
            self.model = apply_global(
                &self.model,
                &update.mean_codes(),
                &update.scales,
                self.codebook,
            )?;
        }
        Ok(())
    }

    fn parameter_count(&self) -> usize {
        self.model.parameter_count()
    }

    fn codebook(&self) -> Codebook {
        self.codebook
    }
}

/// The same codes every round; for protocol tests that skip training.
#[derive(Clone, Debug)]
pub struct FixedUpdates {
    pub codes: Vec<i64>,
    pub scales: Vec<f64>,
    pub codebook: Codebook,
    pub received: Vec<GlobalUpdate>,
}

impl FixedUpdates {
    pub fn new(codes: Vec<i64>, codebook: Codebook) -> Self {
        Self {
            codes,
            scales: vec![1.0],
            codebook,
            received: Vec::new(),
        }
    }
}

impl LocalUpdate for FixedUpdates {
    fn produce(&mut self, _round: u32) -> Result<(Vec<i64>, Vec<f64>)> {
        Ok((self.codes.clone(), self.scales.clone()))
    }

    fn apply(&mut self, update: &GlobalUpdate) -> Result<()> {
        self.received.push(update.clone());
        Ok(())
    }

    fn parameter_count(&self) -> usize {
        self.codes.len()
    }

    fn codebook(&self) -> Codebook {
        self.codebook
    }
}

#[derive(Clone, Debug)]
pub struct ClientConfig {
    pub id: ClientId,
    pub topology: Arc<HypermeshTopology>,
    pub params: GroupParams,
    pub rounds: u32,
    pub protocol_seed: u64,
    pub attack_seed: u64,
    /// Only specs naming this client have any effect.
    pub attacks: Vec<AttackSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClientPhase {
    Unregistered,
    Registered,
    Collecting,
    Submitted,
    /// All rounds done, or the server declared this client dropped.
    Finished,
}

pub struct ClientState {
    config: ClientConfig,
    keys: KeyPair,
    neighbor_keys: BTreeMap<ClientId, Element>,
    update: Box<dyn LocalUpdate>,
    phase: ClientPhase,
    round: u32,
    own: Option<PairwiseRandoms>,
    pending: Option<(Vec<i64>, Vec<f64>)>,
    /// Randoms received per round, keyed by sender. Future rounds are buffered.
    inbox: BTreeMap<u32, BTreeMap<ClientId, Vec<Scalar>>>,
    dropped: BTreeSet<ClientId>,
    last_submission: Option<MaskedSubmission>,
    verdicts: Vec<Verdict>,
    globals: Vec<GlobalUpdate>,
}

impl std::fmt::Debug for ClientState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClientState")
            .field("id", &self.config.id)
            .field("phase", &self.phase)
            .field("round", &self.round)
            .finish_non_exhaustive()
    }
}

impl ClientState {
    pub fn new(config: ClientConfig, update: Box<dyn LocalUpdate>) -> Result<Self> {
        config.topology.groups_of(config.id)?;
        for a in &config.attacks {
            a.validate(
                config.rounds,
                update.parameter_count(),
                config.topology.client_count(),
            )?;
        }
        let mut rng = derive_rng(config.protocol_seed, "client-keys", &[config.id as u64]);
        let keys = KeyPair::generate(&config.params, &mut rng);
        Ok(Self {
            config,
            keys,
            neighbor_keys: BTreeMap::new(),
            update,
            phase: ClientPhase::Unregistered,
            round: 0,
            own: None,
            pending: None,
            inbox: BTreeMap::new(),
            dropped: BTreeSet::new(),
            last_submission: None,
            verdicts: Vec::new(),
            globals: Vec::new(),
        })
    }

    pub fn id(&self) -> ClientId {
        self.config.id
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn params(&self) -> &GroupParams {
        &self.config.params
    }

    pub fn phase(&self) -> ClientPhase {
        self.phase
    }

    pub fn is_finished(&self) -> bool {
        self.phase == ClientPhase::Finished
    }

    pub fn public_key(&self) -> &Element {
        self.keys.public()
    }

    pub fn last_submission(&self) -> Option<&MaskedSubmission> {
        self.last_submission.as_ref()
    }

    pub fn verdicts(&self) -> &[Verdict] {
        &self.verdicts
    }

    pub fn globals(&self) -> &[GlobalUpdate] {
        &self.globals
    }

    pub fn update_source(&self) -> &dyn LocalUpdate {
        self.update.as_ref()
    }

    /// First message: registration with the public key.
    pub fn start(&mut self) -> Vec<Message> {
        self.phase = ClientPhase::Registered;
        vec![Message::Register {
            public_key: self.keys.public().clone(),
        }]
    }

    pub fn handle(&mut self, message: Message) -> Result<Vec<Message>> {
        if self.phase == ClientPhase::Finished {
            return Ok(Vec::new());
        }
        match message {
            Message::TopologyAssign {
                client,
                groups,
                neighbors,
                ..
            } => self.on_assign(client, groups, neighbors),
            Message::SealedRandom {
                from,
                to,
                round,
                ciphertext,
            } => self.on_random(from, to, round, &ciphertext),
            // Either may arrive after the next round started under reordering,
            // so both retry the pending submission.
            Message::DropoutNotice { dropped, .. } => {
                self.note_dropped(dropped);
                self.try_submit()
            }
            Message::Verdict(v) => {
                self.note_dropped(v.dropped.iter().copied());
                self.verdicts.push(v);
                self.try_submit()
            }
            Message::GlobalModel(update) => self.on_global(update),
            other => Err(Error::Protocol(format!(
                "client cannot handle {:?}",
                other.kind()
            ))),
        }
    }

    fn note_dropped(&mut self, ids: impl IntoIterator<Item = ClientId>) {
        self.dropped.extend(ids);
        if self.dropped.contains(&self.config.id) {
            debug!("client {} was dropped by the server", self.config.id);
            self.phase = ClientPhase::Finished;
        }
    }

    fn on_assign(
        &mut self,
        client: ClientId,
        groups: Vec<GroupId>,
        neighbors: Vec<(ClientId, Element)>,
    ) -> Result<Vec<Message>> {
        if self.phase != ClientPhase::Registered {
            return Err(Error::Protocol("topology assigned twice".into()));
        }
        let topo = &self.config.topology;
        if client != self.config.id || groups != topo.groups_of(client)? {
            return Err(Error::Protocol(
                "assignment disagrees with the local topology".into(),
            ));
        }
        let expected = topo.neighbors_of(client)?;
        let got: BTreeSet<ClientId> = neighbors.iter().map(|(id, _)| *id).collect();
        if got != expected || neighbors.len() != expected.len() {
            return Err(Error::Protocol(
                "neighbor list disagrees with the local topology".into(),
            ));
        }
        if let Some((id, _)) = neighbors
            .iter()
            .find(|(_, pk)| !self.config.params.is_member(pk))
        {
            return Err(Error::Protocol(format!(
                "public key of client {id} is not a group element"
            )));
        }
        self.neighbor_keys = neighbors.into_iter().collect();
        self.start_round(1)
    }

    fn start_round(&mut self, round: u32) -> Result<Vec<Message>> {
        self.round = round;
        self.inbox.retain(|&r, _| r >= round);
        if round > self.config.rounds {
            self.phase = ClientPhase::Finished;
            return Ok(Vec::new());
        }
        let (codes, scales) = self.update.produce(round)?;
        self.update.codebook().check(&codes)?;
        let params = &self.config.params;
        let own = generate_randoms(
            self.config.id,
            &self.config.topology,
            round,
            self.config.protocol_seed,
            codes.len(),
            params,
        )?;
        let mut rng = derive_rng(
            self.config.protocol_seed,
            "seal",
            &[self.config.id as u64, round as u64],
        );
        let mut out = Vec::new();
        for (&to, values) in &own.values {
            if self.dropped.contains(&to) {
                continue;
            }
            let plain = encode_scalars(values, params);
            out.push(Message::SealedRandom {
                from: self.config.id,
                to,
                round,
                ciphertext: seal::seal(params, &self.neighbor_keys[&to], &plain, &mut rng),
            });
        }
        self.own = Some(own);
        self.pending = Some((codes, scales));
        self.phase = ClientPhase::Collecting;
        out.extend(self.try_submit()?);
        Ok(out)
    }

    fn on_random(
        &mut self,
        from: ClientId,
        to: ClientId,
        round: u32,
        ciphertext: &[u8],
    ) -> Result<Vec<Message>> {
        if to != self.config.id || !self.neighbor_keys.contains_key(&from) {
            return Err(Error::Protocol(format!(
                "random from {from} to {to} misrouted"
            )));
        }
        if round < self.round {
            return Ok(Vec::new());
        }
        let params = &self.config.params;
        let values = match seal::open(params, &self.keys, ciphertext)
            .and_then(|b| decode_scalars(&b, params))
        {
            Ok(v) => v,
            Err(e) => {
                // Cannot prove who is at fault; waiting lets the server time us out.
                warn!(
                    "client {}: unusable random from {from}: {e}",
                    self.config.id
                );
                return Ok(Vec::new());
            }
        };
        self.inbox.entry(round).or_default().insert(from, values);
        if round == self.round {
            self.try_submit()
        } else {
            Ok(Vec::new())
        }
    }

    /// Groups this round's submission covers: those with no dropped member.
    fn active_groups(&self) -> Vec<GroupId> {
        let topo = &self.config.topology;
        topo.groups_of(self.config.id)
            .expect("id validated at construction")
            .iter()
            .copied()
            .filter(|&g| {
                topo.members_of(g)
                    .expect("group of a valid client")
                    .iter()
                    .all(|m| !self.dropped.contains(m))
            })
            .collect()
    }

    fn try_submit(&mut self) -> Result<Vec<Message>> {
        if self.phase != ClientPhase::Collecting {
            return Ok(Vec::new());
        }
        let topo = &self.config.topology;
        let id = self.config.id;
        let active = self.active_groups();
        let empty = BTreeMap::new();
        let received = self.inbox.get(&self.round).unwrap_or(&empty);
        let ready = active.iter().all(|&g| {
            topo.members_of(g)
                .expect("group of a valid client")
                .iter()
                .all(|m| *m == id || received.contains_key(m))
        });
        if !ready {
            return Ok(Vec::new());
        }
        let params = &self.config.params;
        let own = self
            .own
            .as_ref()
            .expect("randoms drawn when the round started");
        let shares = active
            .iter()
            .map(|&g| derive_group_share(own, received, topo, g, params))
            .collect::<Result<Vec<_>>>()?;
        let (codes, scales) = self
            .pending
            .take()
            .expect("codes produced when the round started");
        let mut inputs = SubmissionInputs::honest(id, self.round, &codes, shares);
        for (k, spec) in self.config.attacks.iter().enumerate() {
            let mut rng = derive_rng(
                self.config.attack_seed,
                "attack",
                &[id as u64, self.round as u64, k as u64],
            );
            if apply_attack(spec, &mut inputs, self.update.codebook(), params, &mut rng)? {
                debug!(
                    "client {id} applied {} in round {}",
                    spec.strategy.name(),
                    self.round
                );
            }
        }
        let masked = inputs.mask(params)?;
        self.last_submission = Some(masked.clone());
        self.phase = ClientPhase::Submitted;
        Ok(vec![Message::Submission(Submission { masked, scales })])
    }

    fn on_global(&mut self, update: GlobalUpdate) -> Result<Vec<Message>> {
        if update.round != self.round {
            return Err(Error::Protocol(format!(
                "global model for round {} while in round {}",
                update.round, self.round
            )));
        }
        self.update.apply(&update)?;
        self.globals.push(update);
        self.start_round(self.round + 1)
    }
}
