//! Pairwise-random shares and masked, committed submissions.
//!
//! Client `i` draws a fresh random vector `r_{i->q}` for every neighbor `q`.
//! Its share for group `j` is `s_{i,j} = sum over q in U_j \ {i} of (r_{i->q} - r_{q->i})`,
//! which telescopes to zero when summed over the members of `j`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::group::{Commitment, GroupParams, Scalar};
use crate::hypermesh::{ClientId, GroupId, HypermeshTopology};
use crate::seeds::derive_rng;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairwiseRandoms {
    pub client: ClientId,
    pub round: u32,
    /// `r_{client -> neighbor}` keyed by neighbor.
    pub values: BTreeMap<ClientId, Vec<Scalar>>,
}

/// Client `client`'s additive mask for `group`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupShare {
    pub client: ClientId,
    pub group: GroupId,
    pub round: u32,
    pub values: Vec<Scalar>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskedEntry {
    pub group: GroupId,
    /// `m[k] = encode(w[k]) + s[k] mod q`.
    pub masked: Vec<Scalar>,
    /// `d[k] = g^{s[k]}`.
    pub commitments: Vec<Commitment>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskedSubmission {
    pub client: ClientId,
    pub round: u32,
    pub entries: Vec<MaskedEntry>,
}

impl MaskedSubmission {
    pub fn entry(&self, group: GroupId) -> Option<&MaskedEntry> {
        self.entries.iter().find(|e| e.group == group)
    }
}

/// One random vector of length `len` per neighbor, derived from `seed`.
pub fn generate_randoms(
    client: ClientId,
    topology: &HypermeshTopology,
    round: u32,
    seed: u64,
    len: usize,
    params: &GroupParams,
) -> Result<PairwiseRandoms> {
    let neighbors = topology.neighbors_of(client)?;
    let mut rng = derive_rng(seed, "pairwise-randoms", &[client as u64, round as u64]);
    let values = neighbors
        .into_iter()
        .map(|q| {
            (
                q,
                (0..len).map(|_| params.random_scalar(&mut rng)).collect(),
            )
        })
        .collect();
    Ok(PairwiseRandoms {
        client,
        round,
        values,
    })
}

/// Share for a single group from the client's own randoms and the randoms
/// `received[q] = r_{q -> client}` it got from co-members.
pub fn derive_group_share(
    own: &PairwiseRandoms,
    received: &BTreeMap<ClientId, Vec<Scalar>>,
    topology: &HypermeshTopology,
    group: GroupId,
    params: &GroupParams,
) -> Result<GroupShare> {
    let client = own.client;
    let members = topology.members_of(group)?;
    if !members.contains(&client) {
        return Err(Error::Protocol(format!(
            "client {client} is not in group {group}"
        )));
    }
    let mut acc: Option<Vec<Scalar>> = None;
    for &q in members.iter().filter(|&&q| q != client) {
        let outgoing = own.values.get(&q).ok_or(Error::MissingRandom {
            from: client,
            to: q,
        })?;
        let incoming = received.get(&q).ok_or(Error::MissingRandom {
            from: q,
            to: client,
        })?;
        if outgoing.len() != incoming.len() {
            return Err(Error::LengthMismatch {
                expected: outgoing.len(),
                got: incoming.len(),
            });
        }
        let diff = outgoing.iter().zip(incoming).map(|(a, b)| params.sub(a, b));
        acc = Some(match acc {
            None => diff.collect(),
            Some(prev) => prev
                .iter()
                .zip(diff)
                .map(|(a, b)| params.add(a, &b))
                .collect(),
        });
    }
    Ok(GroupShare {
        client,
        group,
        round: own.round,
        values: acc.unwrap_or_default(),
    })
}

/// Shares for every group of `own.client`, in the order of `groups_of`.
pub fn derive_shares(
    own: &PairwiseRandoms,
    received: &BTreeMap<ClientId, Vec<Scalar>>,
    topology: &HypermeshTopology,
    params: &GroupParams,
) -> Result<Vec<GroupShare>> {
    topology
        .groups_of(own.client)?
        .iter()
        .map(|&g| derive_group_share(own, received, topology, g, params))
        .collect()
}

/// Masks one code vector with one group share and commits to the share.
pub fn mask_group(codes: &[i64], share: &GroupShare, params: &GroupParams) -> Result<MaskedEntry> {
    if codes.len() != share.values.len() {
        return Err(Error::LengthMismatch {
            expected: share.values.len(),
            got: codes.len(),
        });
    }
    let masked = codes
        .iter()
        .zip(&share.values)
        .map(|(&w, s)| Ok(params.add(&params.encode_signed(w)?, s)))
        .collect::<Result<Vec<_>>>()?;
    let commitments = share.values.iter().map(|s| params.commit(s)).collect();
    Ok(MaskedEntry {
        group: share.group,
        masked,
        commitments,
    })
}

/// Masks the same code vector toward every group the shares cover.
pub fn mask_and_commit(
    codes: &[i64],
    shares: &[GroupShare],
    params: &GroupParams,
) -> Result<MaskedSubmission> {
    let first = shares
        .first()
        .ok_or_else(|| Error::Protocol("no shares to mask with".into()))?;
    let entries = shares
        .iter()
        .map(|s| mask_group(codes, s, params))
        .collect::<Result<Vec<_>>>()?;
    Ok(MaskedSubmission {
        client: first.client,
        round: first.round,
        entries,
    })
}

/// Codes and share for one group, before masking.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupInput {
    pub group: GroupId,
    pub codes: Vec<i64>,
    pub share: GroupShare,
}

/// Everything a client is about to mask in one round. Honest clients use the
/// same codes for every group; adversaries rewrite these before masking.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubmissionInputs {
    pub client: ClientId,
    pub round: u32,
    pub groups: Vec<GroupInput>,
}

impl SubmissionInputs {
    pub fn honest(client: ClientId, round: u32, codes: &[i64], shares: Vec<GroupShare>) -> Self {
        Self {
            client,
            round,
            groups: shares
                .into_iter()
                .map(|share| GroupInput {
                    group: share.group,
                    codes: codes.to_vec(),
                    share,
                })
                .collect(),
        }
    }

    pub fn mask(&self, params: &GroupParams) -> Result<MaskedSubmission> {
        let entries = self
            .groups
            .iter()
            .map(|g| mask_group(&g.codes, &g.share, params))
            .collect::<Result<Vec<_>>>()?;
        Ok(MaskedSubmission {
            client: self.client,
            round: self.round,
            entries,
        })
    }
}

/// Runs share generation for a whole topology with every random delivered.
/// Used by tests, sweeps and fixtures that skip the transport.
pub fn all_shares(
    topology: &HypermeshTopology,
    round: u32,
    seed: u64,
    len: usize,
    params: &GroupParams,
) -> Result<Vec<Vec<GroupShare>>> {
    let randoms = topology
        .clients()
        .map(|c| generate_randoms(c, topology, round, seed, len, params))
        .collect::<Result<Vec<_>>>()?;
    topology
        .clients()
        .map(|c| {
            let received = randoms[c]
                .values
                .keys()
                .map(|&q| (q, randoms[q].values[&c].clone()))
                .collect();
            derive_shares(&randoms[c], &received, topology, params)
        })
        .collect()
}
