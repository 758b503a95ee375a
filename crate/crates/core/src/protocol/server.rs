//! Server-side state machine: registration, relaying, and the end-of-round
//! barrier that runs detection and aggregation.
//!
//! Dropouts: a client that disconnects, sends an invalid submission, or
//! misses a stage deadline is added to a persistent dropped set. Groups
//! containing a dropped client are excluded from detection and aggregation
//! but are not counted as flagged.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use super::aggregate::{aggregate, group_sums, AggregateOutcome};
use super::detect::{
    identify_malicious, leakage_probe, run_detection, LegitimateRange, RoundView, SuspiciousSet,
};
use super::{GlobalUpdate, Message, Submission, Verdict};
use crate::error::{Error, Result};
use crate::group::{Element, GroupParams};
use crate::hypermesh::{ClientId, GroupId, HypermeshTopology};
use crate::masking::MaskedSubmission;
use crate::quantfl::Codebook;

#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub topology: Arc<HypermeshTopology>,
    pub params: GroupParams,
    pub codebook: Codebook,
    pub rounds: u32,
    pub parameter_count: usize,
    /// When off, detection is skipped and every group is aggregated.
    pub defense: bool,
    /// Count codebook-recoverable coordinates in each round's record.
    pub report_leakage: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Outbound {
    To(ClientId, Message),
    Broadcast(Message),
}

/// Audit record of one finished round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    pub suspicious: SuspiciousSet,
    pub malicious: BTreeSet<ClientId>,
    pub dropped: BTreeSet<ClientId>,
    /// Groups left out because a member dropped.
    pub excluded: BTreeSet<GroupId>,
    pub aggregate: AggregateOutcome,
    pub update: GlobalUpdate,
    pub leaked_coordinates: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ServerPhase {
    Registration,
    Round(u32),
    Finished,
}

#[derive(Debug)]
pub struct ServerState {
    config: ServerConfig,
    keys: BTreeMap<ClientId, Element>,
    phase: ServerPhase,
    /// Recipients each client has sent a random to this round.
    relayed: BTreeMap<ClientId, BTreeSet<ClientId>>,
    inbox: BTreeMap<ClientId, Submission>,
    dropped: BTreeSet<ClientId>,
    history: Vec<RoundRecord>,
    last_scales: Vec<f64>,
}

impl ServerState {
    pub fn new(config: ServerConfig) -> Self {
        Self {
            config,
            keys: BTreeMap::new(),
            phase: ServerPhase::Registration,
            relayed: BTreeMap::new(),
            inbox: BTreeMap::new(),
            dropped: BTreeSet::new(),
            history: Vec::new(),
            last_scales: Vec::new(),
        }
    }

    pub fn config(&self) -> &ServerConfig {
        &self.config
    }

    pub fn phase(&self) -> ServerPhase {
        self.phase
    }

    pub fn is_finished(&self) -> bool {
        self.phase == ServerPhase::Finished
    }

    pub fn history(&self) -> &[RoundRecord] {
        &self.history
    }

    pub fn dropped(&self) -> &BTreeSet<ClientId> {
        &self.dropped
    }

    pub fn registered(&self) -> usize {
        self.keys.len()
    }

    pub fn handle(&mut self, from: ClientId, message: Message) -> Result<Vec<Outbound>> {
        if self.dropped.contains(&from) {
            debug!("ignoring {:?} from dropped client {from}", message.kind());
            return Ok(Vec::new());
        }
        match message {
            Message::Register { public_key } => self.register(from, public_key),
            Message::SealedRandom {
                from: sender,
                to,
                round,
                ciphertext,
            } => self.relay(from, sender, to, round, ciphertext),
            Message::Submission(s) => self.submit(from, s),
            other => Err(Error::Protocol(format!(
                "server cannot handle {:?} from client {from}",
                other.kind()
            ))),
        }
    }

    /// Registers one client; the last registration triggers the topology broadcast.
    pub fn register(&mut self, from: ClientId, public_key: Element) -> Result<Vec<Outbound>> {
        let topo = Arc::clone(&self.config.topology);
        if self.phase != ServerPhase::Registration {
            return Err(Error::Protocol(format!(
                "registration from {from} after setup"
            )));
        }
        if from >= topo.client_count() {
            return Err(Error::WrongClientCount {
                expected: topo.client_count(),
                got: from + 1,
            });
        }
        if self.keys.contains_key(&from) {
            return Err(Error::DuplicateRegistration(from));
        }
        if !self.config.params.is_member(&public_key) {
            return Err(Error::Protocol(format!(
                "public key of client {from} is not a group element"
            )));
        }
        self.keys.insert(from, public_key);
        if self.keys.len() < topo.client_count() {
            return Ok(Vec::new());
        }
        info!("all {} clients registered", topo.client_count());
        let mut out = Vec::with_capacity(topo.client_count());
        for c in topo.clients() {
            let neighbors = topo
                .neighbors_of(c)?
                .into_iter()
                .map(|q| (q, self.keys[&q].clone()))
                .collect();
            out.push(Outbound::To(
                c,
                Message::TopologyAssign {
                    client: c,
                    identifier: topo.identifier(c)?.digits().to_vec(),
                    groups: topo.groups_of(c)?.to_vec(),
                    neighbors,
                },
            ));
        }
        self.phase = if self.config.rounds == 0 {
            ServerPhase::Finished
        } else {
            ServerPhase::Round(1)
        };
        Ok(out)
    }

    fn current_round(&self) -> Option<u32> {
        match self.phase {
            ServerPhase::Round(t) => Some(t),
            _ => None,
        }
    }

    fn relay(
        &mut self,
        from: ClientId,
        sender: ClientId,
        to: ClientId,
        round: u32,
        ciphertext: Vec<u8>,
    ) -> Result<Vec<Outbound>> {
        if sender != from || !self.config.topology.are_neighbors(from, to)? {
            return Err(Error::Protocol(format!(
                "client {from} sent a random as {sender} to {to}"
            )));
        }
        if self.current_round() != Some(round) {
            debug!("dropping stale random {from}->{to} for round {round}");
            return Ok(Vec::new());
        }
        if self.dropped.contains(&to) {
            return Ok(Vec::new());
        }
        self.relayed.entry(from).or_default().insert(to);
        Ok(vec![Outbound::To(
            to,
            Message::SealedRandom {
                from,
                to,
                round,
                ciphertext,
            },
        )])
    }

    fn submit(&mut self, from: ClientId, submission: Submission) -> Result<Vec<Outbound>> {
        let Some(t) = self.current_round() else {
            return Err(Error::Protocol(format!(
                "submission from {from} outside a round"
            )));
        };
        if submission.masked.client != from || submission.masked.round != t {
            return Err(Error::Protocol(format!(
                "client {from} submitted as {} for round {}",
                submission.masked.client, submission.masked.round
            )));
        }
        if self.inbox.insert(from, submission).is_some() {
            return Err(Error::Protocol(format!("client {from} submitted twice")));
        }
        self.maybe_finalize()
    }

    fn pending(&self) -> Vec<ClientId> {
        self.config
            .topology
            .clients()
            .filter(|c| !self.dropped.contains(c) && !self.inbox.contains_key(c))
            .collect()
    }

    fn maybe_finalize(&mut self) -> Result<Vec<Outbound>> {
        if self.current_round().is_some() && self.pending().is_empty() {
            self.finalize_round()
        } else {
            Ok(Vec::new())
        }
    }

    fn drop_clients(&mut self, clients: &[ClientId]) -> Result<Vec<Outbound>> {
        let fresh: Vec<ClientId> = clients
            .iter()
            .copied()
            .filter(|c| self.dropped.insert(*c))
            .collect();
        if fresh.is_empty() {
            return Ok(Vec::new());
        }
        warn!("clients {fresh:?} dropped");
        let Some(t) = self.current_round() else {
            return Ok(Vec::new());
        };
        let mut out = self.maybe_finalize()?;
        if out.is_empty() {
            out.push(Outbound::Broadcast(Message::DropoutNotice {
                round: t,
                dropped: self.dropped.iter().copied().collect(),
            }));
        }
        Ok(out)
    }

    /// A client's connection closed or carried garbage.
    pub fn disconnect(&mut self, client: ClientId) -> Result<Vec<Outbound>> {
        if self.phase == ServerPhase::Registration || self.is_finished() {
            return Ok(Vec::new());
        }
        self.drop_clients(&[client])
    }

    /// Stage deadline passed. First drops clients that have not sent all
    /// their randoms, so everyone else can finish with a smaller set of
    /// groups; if nobody is missing randoms, drops clients that have not submitted.
    pub fn on_timeout(&mut self) -> Result<Vec<Outbound>> {
        if self.current_round().is_none() {
            return Ok(Vec::new());
        }
        let topo = Arc::clone(&self.config.topology);
        let pending = self.pending();
        let mut incomplete = Vec::new();
        for &c in &pending {
            let needed: BTreeSet<ClientId> = topo
                .neighbors_of(c)?
                .into_iter()
                .filter(|q| !self.dropped.contains(q))
                .collect();
            let sent = self.relayed.get(&c).cloned().unwrap_or_default();
            if !needed.is_subset(&sent) {
                incomplete.push(c);
            }
        }
        let victims = if incomplete.is_empty() {
            pending
        } else {
            incomplete
        };
        self.drop_clients(&victims)
    }

    fn excluded_groups(&self) -> BTreeSet<GroupId> {
        let topo = &self.config.topology;
        self.dropped
            .iter()
            .flat_map(|&c| {
                topo.groups_of(c)
                    .expect("dropped ids are valid")
                    .iter()
                    .copied()
            })
            .collect()
    }

    /// Required entries: every non-excluded group of the client, with vectors
    /// of the configured length. Extra entries for excluded groups are ignored.
    fn well_formed(&self, s: &Submission, excluded: &BTreeSet<GroupId>) -> bool {
        let topo = &self.config.topology;
        let len = self.config.parameter_count;
        let groups = topo
            .groups_of(s.masked.client)
            .expect("client ids validated");
        let entries_ok = s.masked.entries.iter().all(|e| groups.contains(&e.group))
            && groups.iter().filter(|g| !excluded.contains(g)).all(|&g| {
                let hits: Vec<_> = s.masked.entries.iter().filter(|e| e.group == g).collect();
                hits.len() == 1 && hits[0].masked.len() == len && hits[0].commitments.len() == len
            });
        let scales_ok = s.scales.iter().all(|a| a.is_finite() && *a >= 0.0)
            && (self.last_scales.is_empty() || s.scales.len() == self.last_scales.len());
        entries_ok
            && scales_ok
            && s.masked.entries.iter().all(|e| {
                e.commitments
                    .iter()
                    .all(|d| self.config.params.is_member(d))
            })
    }

    fn finalize_round(&mut self) -> Result<Vec<Outbound>> {
        let t = self.current_round().expect("finalize only inside a round");
        let topo = Arc::clone(&self.config.topology);
        let params = self.config.params.clone();
        // Malformed submissions turn their senders into dropouts before detection.
        let excluded = loop {
            let excluded = self.excluded_groups();
            let bad: Vec<ClientId> = self
                .inbox
                .iter()
                .filter(|(c, s)| !self.dropped.contains(c) && !self.well_formed(s, &excluded))
                .map(|(&c, _)| c)
                .collect();
            if bad.is_empty() {
                break excluded;
            }
            warn!("round {t}: malformed submissions from {bad:?}");
            self.dropped.extend(bad);
        };
        let submissions: BTreeMap<ClientId, MaskedSubmission> = self
            .inbox
            .iter()
            .filter(|(c, _)| !self.dropped.contains(c))
            .map(|(&c, s)| (c, s.masked.clone()))
            .collect();
        let view = RoundView {
            topology: &topo,
            params: &params,
            submissions: &submissions,
            excluded: &excluded,
        };
        let sums = group_sums(&view);
        let suspicious = if self.config.defense {
            run_detection(
                &view,
                LegitimateRange::for_codebook(self.config.codebook, topo.d()),
            )
        } else {
            SuspiciousSet::new()
        };
        let malicious = if self.config.defense {
            identify_malicious(&suspicious, &topo)
        } else {
            BTreeSet::new()
        };
        let outcome = aggregate(
            &sums,
            &suspicious.groups(),
            topo.d(),
            self.config.parameter_count,
            &params,
        );
        let leaked = self
            .config
            .report_leakage
            .then(|| leakage_probe(&view, self.config.codebook));

        let scales = if outcome.void {
            self.last_scales.clone()
        } else {
            let scales = self.weighted_scales(&outcome.surviving);
            self.last_scales = scales.clone();
            scales
        };
        let update = GlobalUpdate {
            round: t,
            sum: outcome.sum.clone(),
            divisor: outcome.divisor,
            scales,
            void: outcome.void,
        };
        if outcome.void {
            warn!("round {t} is void: every group was removed");
        }
        let verdict = Verdict {
            round: t,
            flagged: suspicious.pairs(),
            malicious: malicious.iter().copied().collect(),
            dropped: self.dropped.iter().copied().collect(),
        };
        info!(
            "round {t}: {} flagged groups, malicious {:?}, {} surviving",
            suspicious.len(),
            verdict.malicious,
            outcome.surviving.len()
        );
        self.history.push(RoundRecord {
            round: t,
            suspicious,
            malicious,
            dropped: self.dropped.clone(),
            excluded,
            aggregate: outcome,
            update: update.clone(),
            leaked_coordinates: leaked,
        });
        self.inbox.clear();
        self.relayed.clear();
        self.phase = if t >= self.config.rounds {
            ServerPhase::Finished
        } else {
            ServerPhase::Round(t + 1)
        };
        Ok(vec![
            Outbound::Broadcast(Message::Verdict(verdict)),
            Outbound::Broadcast(Message::GlobalModel(update)),
        ])
    }

    /// Per-layer scale averaged over clients, each weighted by how many of its
    /// groups survived, mirroring the weight its codes get in the sum.
    fn weighted_scales(&self, surviving: &[GroupId]) -> Vec<f64> {
        let topo = &self.config.topology;
        let mut acc: Vec<f64> = Vec::new();
        let mut total = 0.0;
        for (&c, s) in &self.inbox {
            if self.dropped.contains(&c) {
                continue;
            }
            let weight = topo
                .groups_of(c)
                .expect("client ids validated")
                .iter()
                .filter(|g| surviving.contains(g))
                .count() as f64;
            if weight == 0.0 {
                continue;
            }
            if acc.is_empty() {
                acc = vec![0.0; s.scales.len()];
            }
            for (a, v) in acc.iter_mut().zip(&s.scales) {
                *a += weight * v;
            }
            total += weight;
        }
        acc.iter().map(|a| a / total).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::{AttackSpec, CoordinateWindow, Strategy};
    use crate::protocol::client::{ClientConfig, ClientState, FixedUpdates};
    use crate::protocol::FlagReason;
    use std::collections::VecDeque;

    fn config(d: usize, n: usize, rounds: u32, defense: bool, len: usize) -> ServerConfig {
        ServerConfig {
            topology: Arc::new(HypermeshTopology::build(d, n).unwrap()),
            params: GroupParams::test(),
            codebook: Codebook::Ternary,
            rounds,
            parameter_count: len,
            defense,
            report_leakage: false,
        }
    }

    fn clients(
        cfg: &ServerConfig,
        codes: &dyn Fn(ClientId) -> Vec<i64>,
        attacks: &[AttackSpec],
    ) -> Vec<ClientState> {
        cfg.topology
            .clients()
            .map(|c| {
                ClientState::new(
                    ClientConfig {
                        id: c,
                        topology: Arc::clone(&cfg.topology),
                        params: cfg.params.clone(),
                        rounds: cfg.rounds,
                        protocol_seed: 5,
                        attack_seed: 6,
                        attacks: attacks.to_vec(),
                    },
                    Box::new(FixedUpdates::new(codes(c), Codebook::Ternary)),
                )
                .unwrap()
            })
            .collect()
    }

    type Queue = VecDeque<(ClientId, Message)>;

    /// In-process FIFO driver; `crashed` clients never send anything.
    fn drive(server: &mut ServerState, clients: &mut [ClientState], crashed: &BTreeSet<ClientId>) {
        let mut queue = Queue::new();
        for c in clients.iter_mut().filter(|c| !crashed.contains(&c.id())) {
            for m in c.start() {
                queue.push_back((c.id(), m));
            }
        }
        pump(server, clients, crashed, &mut queue);
    }

    fn pump(
        server: &mut ServerState,
        clients: &mut [ClientState],
        crashed: &BTreeSet<ClientId>,
        queue: &mut Queue,
    ) {
        let mut idle = 0;
        while !server.is_finished() {
            let Some((from, msg)) = queue.pop_front() else {
                idle += 1;
                assert!(idle < 10, "deadlock");
                for o in server.on_timeout().unwrap() {
                    deliver(o, clients, crashed, queue);
                }
                continue;
            };
            for o in server.handle(from, msg).unwrap() {
                deliver(o, clients, crashed, queue);
            }
        }
    }

    fn deliver(
        o: Outbound,
        clients: &mut [ClientState],
        crashed: &BTreeSet<ClientId>,
        queue: &mut Queue,
    ) {
        let targets: Vec<(ClientId, Message)> = match o {
            Outbound::To(c, m) => vec![(c, m)],
            Outbound::Broadcast(m) => (0..clients.len()).map(|c| (c, m.clone())).collect(),
        };
        for (c, m) in targets {
            if crashed.contains(&c) {
                continue;
            }
            for reply in clients[c].handle(m).unwrap() {
                queue.push_back((c, reply));
            }
        }
    }

    #[test]
    fn registration_rules() {
        let cfg = config(2, 2, 1, true, 1);
        let gp = cfg.params.clone();
        let mut s = ServerState::new(cfg);
        assert!(s.register(0, gp.generator()).unwrap().is_empty());
        assert!(matches!(
            s.register(0, gp.generator()),
            Err(Error::DuplicateRegistration(0))
        ));
        assert!(matches!(
            s.register(4, gp.generator()),
            Err(Error::WrongClientCount { .. })
        ));
        assert!(s.register(1, gp.identity()).is_ok());
        s.register(2, gp.generator()).unwrap();
        let out = s.register(3, gp.generator()).unwrap();
        assert_eq!(out.len(), 4);
        for o in out {
            let Outbound::To(
                c,
                Message::TopologyAssign {
                    neighbors, groups, ..
                },
            ) = o
            else {
                panic!()
            };
            assert_eq!(neighbors.len(), 2, "client {c}");
            assert_eq!(groups.len(), 2);
        }
        assert!(s.register(3, gp.generator()).is_err());
    }

    #[test]
    fn sixteen_registrations_assign_fig2_groups() {
        let cfg = config(4, 2, 1, true, 1);
        let gp = cfg.params.clone();
        let mut s = ServerState::new(cfg);
        let mut out = Vec::new();
        for c in (0..16).rev() {
            out = s.register(c, gp.generator()).unwrap();
        }
        let Outbound::To(0, Message::TopologyAssign { groups, .. }) = &out[0] else {
            panic!()
        };
        assert_eq!(groups, &vec![0, 4]);
    }

    #[test]
    fn honest_run_matches_plain_mean() {
        let cfg = config(3, 2, 3, true, 3);
        let codes = |c: ClientId| vec![(c % 3) as i64 - 1, 1, (c % 2) as i64];
        let mut cs = clients(&cfg, &codes, &[]);
        let mut s = ServerState::new(cfg);
        drive(&mut s, &mut cs, &BTreeSet::new());
        assert_eq!(s.history().len(), 3);
        for r in s.history() {
            assert!(r.suspicious.is_empty() && r.malicious.is_empty());
            assert_eq!(r.update.divisor, 6 * 3);
            for k in 0..3 {
                let plain: i64 = (0..9).map(|c| codes(c)[k]).sum();
                assert_eq!(r.update.sum[k], 2 * plain);
                assert!((r.update.mean_codes()[k] - plain as f64 / 9.0).abs() < 1e-12);
            }
        }
        assert!(cs.iter().all(|c| c.is_finished() && c.globals().len() == 3));
        assert!(cs
            .iter()
            .all(|c| c.verdicts().iter().all(|v| v.flagged.is_empty())));
    }

    #[test]
    fn out_of_range_attacker_is_removed() {
        let cfg = config(4, 2, 2, true, 4);
        let attack = AttackSpec {
            strategy: Strategy::OutOfRangeAdd,
            clients: vec![0, 1],
            rounds: vec![2],
            window: CoordinateWindow {
                offset: 0,
                count: 2,
            },
            magnitude: [20, 30],
        };
        let mut cs = clients(&cfg, &|_| vec![1, 0, -1, 0], &[attack]);
        let mut s = ServerState::new(cfg);
        drive(&mut s, &mut cs, &BTreeSet::new());
        let r1 = &s.history()[0];
        assert!(r1.suspicious.is_empty());
        let r2 = &s.history()[1];
        assert_eq!(r2.suspicious.groups(), BTreeSet::from([0, 4, 5]));
        assert_eq!(r2.malicious, BTreeSet::from([0, 1]));
        assert_eq!(r2.aggregate.divisor, 20);
        // Surviving groups only contain honest codes.
        assert_eq!(r2.update.sum, vec![20, 0, -20, 0]);
    }

    #[test]
    fn defense_off_aggregates_everything() {
        let cfg = config(2, 2, 1, false, 1);
        let attack = AttackSpec {
            strategy: Strategy::OutOfRangeAdd,
            clients: vec![3],
            rounds: vec![1],
            window: CoordinateWindow {
                offset: 0,
                count: 1,
            },
            magnitude: [25, 25],
        };
        let mut cs = clients(&cfg, &|_| vec![0], &[attack]);
        let mut s = ServerState::new(cfg);
        drive(&mut s, &mut cs, &BTreeSet::new());
        let r = &s.history()[0];
        assert!(r.suspicious.is_empty());
        assert_eq!(r.update.sum, vec![50]);
        assert_eq!(r.update.divisor, 8);
    }

    #[test]
    fn every_strategy_reports_its_reason() {
        for (strategy, reason) in [
            (Strategy::BadShare, FlagReason::BadShareSum),
            (Strategy::InconsistentW, FlagReason::InconsistentW),
            (Strategy::OutOfRangeAdd, FlagReason::OutOfRange),
        ] {
            let cfg = config(3, 2, 1, true, 2);
            let attack = AttackSpec {
                strategy,
                clients: vec![4],
                rounds: vec![1],
                window: CoordinateWindow {
                    offset: 1,
                    count: 1,
                },
                magnitude: [20, 30],
            };
            let mut cs = clients(&cfg, &|_| vec![0, 1], &[attack]);
            let mut s = ServerState::new(cfg);
            drive(&mut s, &mut cs, &BTreeSet::new());
            let r = &s.history()[0];
            assert_eq!(r.malicious, BTreeSet::from([4]), "{strategy:?}");
            for g in r.suspicious.groups() {
                assert!(
                    r.suspicious.reasons(g).unwrap().contains(&reason),
                    "{strategy:?}"
                );
            }
        }
    }

    #[test]
    fn crashed_client_groups_are_excluded() {
        let cfg = config(3, 2, 2, true, 1);
        let mut cs = clients(&cfg, &|_| vec![1], &[]);
        let mut s = ServerState::new(cfg);
        // Client 8 registers, then goes silent before sending any random.
        let crashed = BTreeSet::from([8]);
        let mut queue = Queue::new();
        for c in cs.iter_mut() {
            for m in c.start() {
                queue.push_back((c.id(), m));
            }
        }
        pump(&mut s, &mut cs, &crashed, &mut queue);
        let r = &s.history()[0];
        assert_eq!(r.dropped, BTreeSet::from([8]));
        assert_eq!(r.excluded, BTreeSet::from([2, 5]));
        assert!(r.suspicious.is_empty());
        assert_eq!(r.aggregate.surviving.len(), 4);
        assert_eq!(r.update.sum, vec![12]);
        assert_eq!(s.history()[1].aggregate.surviving.len(), 4);
        assert!(cs
            .iter()
            .filter(|c| c.id() != 8)
            .all(|c| c.globals().len() == 2));
    }

    #[test]
    fn all_groups_flagged_voids_the_round() {
        let cfg = config(2, 2, 2, true, 1);
        let attack = AttackSpec {
            strategy: Strategy::OutOfRangeAdd,
            clients: vec![0, 3],
            rounds: vec![2],
            window: CoordinateWindow {
                offset: 0,
                count: 1,
            },
            magnitude: [20, 30],
        };
        let mut cs = clients(&cfg, &|_| vec![1], &[attack]);
        let mut s = ServerState::new(cfg);
        drive(&mut s, &mut cs, &BTreeSet::new());
        let r = &s.history()[1];
        assert!(r.update.void);
        assert_eq!(r.suspicious.len(), 4);
        assert_eq!(r.update.scales, s.history()[0].update.scales);
    }

    #[test]
    fn zero_rounds_finish_after_setup() {
        let cfg = config(2, 2, 0, true, 1);
        let mut cs = clients(&cfg, &|_| vec![0], &[]);
        let mut s = ServerState::new(cfg);
        drive(&mut s, &mut cs, &BTreeSet::new());
        assert!(s.history().is_empty());
    }
}
