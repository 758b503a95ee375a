//! Malicious client behaviors. Every strategy runs inside an otherwise normal
//! client: it rewrites the codes or shares just before masking.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::GroupParams;
use crate::hypermesh::ClientId;
use crate::masking::SubmissionInputs;
use crate::quantfl::Codebook;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Add an integer drawn from the magnitude range to each targeted code.
    OutOfRangeAdd,
    /// Replace targeted codes with uniform codebook values.
    LegitRangeRandom,
    /// Perturb the first targeted share coordinate in every group.
    BadShare,
    /// Keep honest codes for the first group, shift them for the others.
    InconsistentW,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::OutOfRangeAdd => "out-of-range-add",
            Strategy::LegitRangeRandom => "legit-range-random",
            Strategy::BadShare => "bad-share",
            Strategy::InconsistentW => "inconsistent-w",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoordinateWindow {
    pub offset: usize,
    pub count: usize,
}

impl CoordinateWindow {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.count
    }
}

fn default_magnitude() -> [i64; 2] {
    [20, 30]
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub strategy: Strategy,
    pub clients: Vec<ClientId>,
    pub rounds: Vec<u32>,
    pub window: CoordinateWindow,
    /// Inclusive `[lo, hi]`.
    #[serde(default = "default_magnitude")]
    pub magnitude: [i64; 2],
}

impl AttackSpec {
    pub fn targets(&self, client: ClientId, round: u32) -> bool {
        self.clients.contains(&client) && self.rounds.contains(&round)
    }

    pub fn validate(&self, rounds: u32, parameters: usize, clients: usize) -> Result<()> {
        if let Some(r) = self.rounds.iter().find(|&&r| r == 0 || r > rounds) {
            return Err(Error::Config(format!(
                "attack round {r} outside 1..={rounds}"
            )));
        }
        if self.window.count == 0 || self.window.offset + self.window.count > parameters {
            return Err(Error::Config(format!(
                "coordinate window {}+{} outside {parameters} parameters",
                self.window.offset, self.window.count
            )));
        }
        if let Some(c) = self.clients.iter().find(|&&c| c >= clients) {
            return Err(Error::Config(format!(
                "attacker id {c} outside {clients} clients"
            )));
        }
        let [lo, hi] = self.magnitude;
        if lo > hi {
            return Err(Error::Config(format!(
                "magnitude range [{lo}, {hi}] is empty"
            )));
        }
        Ok(())
    }
}

fn sample_magnitude<R: Rng + ?Sized>(spec: &AttackSpec, rng: &mut R) -> i64 {
    let [lo, hi] = spec.magnitude;
    rng.random_range(lo..=hi)
}

/// Rewrites `inputs` in place when `spec` targets this client and round.
/// Returns whether anything was applied.
pub fn apply_attack<R: Rng + ?Sized>(
    spec: &AttackSpec,
    inputs: &mut SubmissionInputs,
    codebook: Codebook,
    params: &GroupParams,
    rng: &mut R,
) -> Result<bool> {
    if !spec.targets(inputs.client, inputs.round) {
        return Ok(false);
    }
    let len = inputs.groups.first().map_or(0, |g| g.codes.len());
    if spec.window.offset + spec.window.count > len {
        return Err(Error::Config(format!(
            "coordinate window exceeds {len} parameters"
        )));
    }
    let window = spec.window.range();
    match spec.strategy {
        Strategy::OutOfRangeAdd => {
            let deltas: Vec<i64> = window
                .clone()
                .map(|_| sample_magnitude(spec, rng))
                .collect();
            for g in &mut inputs.groups {
                for (k, delta) in window.clone().zip(&deltas) {
                    g.codes[k] += delta;
                }
            }
        }
        Strategy::LegitRangeRandom => {
            let values: Vec<i64> = window
                .clone()
                .map(|_| {
                    *codebook
                        .codes()
                        .choose(rng)
                        .expect("codebooks are nonempty")
                })
                .collect();
            for g in &mut inputs.groups {
                for (k, &v) in window.clone().zip(&values) {
                    g.codes[k] = v;
                }
            }
        }
        Strategy::BadShare => {
            let k = spec.window.offset;
            for g in &mut inputs.groups {
                let delta = nonzero_scalar_delta(spec, params, rng)?;
                g.share.values[k] = params.add(&g.share.values[k], &delta);
            }
        }
        Strategy::InconsistentW => {
            for g in inputs.groups.iter_mut().skip(1) {
                for k in window.clone() {
                    let delta = nonzero_delta(spec, rng);
                    g.codes[k] += delta;
                }
            }
        }
    }
    Ok(true)
}

fn nonzero_delta<R: Rng + ?Sized>(spec: &AttackSpec, rng: &mut R) -> i64 {
    let v = sample_magnitude(spec, rng);
    if v == 0 {
        1
    } else {
        v
    }
}

fn nonzero_scalar_delta<R: Rng + ?Sized>(
    spec: &AttackSpec,
    params: &GroupParams,
    rng: &mut R,
) -> Result<crate::group::Scalar> {
    let s = params.encode_signed(nonzero_delta(spec, rng))?;
    // A delta that is a multiple of q would leave the share unchanged.
    Ok(if s.is_zero() { params.scalar(1u32) } else { s })
}

/// Smallest per-coordinate addition that pushes a group sum out of range no
/// matter what the attacker's own code and its co-members' codes are.
pub fn guaranteed_threshold(d: usize, codebook: Codebook) -> i64 {
    d as i64 * (codebook.max_code() - codebook.min_code()) + 1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StealthReport {
    pub change: i64,
    pub count: usize,
    /// Group-sum interval over all possible honest codes at a tampered coordinate.
    pub reachable: (i64, i64),
    pub legitimate: (i64, i64),
    pub guaranteed_detection: bool,
    pub may_hide: bool,
}

/// Feasibility of hiding a per-coordinate change `change` applied to `count`
/// coordinates of one attacker's codes in a group of `d`.
pub fn stealth_probe(d: usize, codebook: Codebook, change: i64, count: usize) -> StealthReport {
    let d = d as i64;
    let legitimate = (d * codebook.min_code(), d * codebook.max_code());
    let reachable = (legitimate.0 + change, legitimate.1 + change);
    let overlaps = reachable.0 <= legitimate.1 && reachable.1 >= legitimate.0;
    let tampered = count > 0 && change != 0;
    StealthReport {
        change,
        count,
        reachable,
        legitimate,
        guaranteed_detection: tampered && !overlaps,
        may_hide: !tampered || overlaps,
    }
}
