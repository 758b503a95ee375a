//! The three server checks on a hand-built round, once per attack strategy.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use mudpqfed::adversary::{apply_attack, AttackSpec, CoordinateWindow, Strategy};
use mudpqfed::masking::{all_shares, SubmissionInputs};
use mudpqfed::protocol::{
    detect_round1, detect_round2, detect_round3, identify_malicious, run_detection,
    LegitimateRange, RoundView,
};
use mudpqfed::quantfl::Codebook;
use mudpqfed::{GroupParams, HypermeshTopology};

fn main() -> mudpqfed::Result<()> {
    let topo = HypermeshTopology::build(4, 2)?;
    let params = GroupParams::test();
    let len = 4;
    let shares = all_shares(&topo, 1, 7, len, &params)?;
    let range = LegitimateRange::for_codebook(Codebook::Ternary, topo.d());
    let excluded = BTreeSet::new();
    let attacker = 6;
    println!(
        "client {attacker} sits in groups {:?}",
        topo.groups_of(attacker)?
    );
    for strategy in [
        Strategy::BadShare,
        Strategy::InconsistentW,
        Strategy::OutOfRangeAdd,
        Strategy::LegitRangeRandom,
    ] {
        let spec = AttackSpec {
            strategy,
            clients: vec![attacker],
            rounds: vec![1],
            window: CoordinateWindow {
                offset: 0,
                count: 2,
            },
            magnitude: [20, 30],
        };
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let mut subs = BTreeMap::new();
        for c in topo.clients() {
            let mut inputs = SubmissionInputs::honest(c, 1, &[1, 0, -1, 0], shares[c].clone());
            apply_attack(&spec, &mut inputs, Codebook::Ternary, &params, &mut rng)?;
            subs.insert(c, inputs.mask(&params)?);
        }
        let view = RoundView {
            topology: &topo,
            params: &params,
            submissions: &subs,
            excluded: &excluded,
        };
        let v = run_detection(&view, range);
        println!(
            "{:>18}: round 1 {:?}, round 2 {:?}, round 3 {:?} -> identified {:?}",
            strategy.name(),
            detect_round1(&view),
            detect_round2(&view),
            detect_round3(&view, range),
            identify_malicious(&v, &topo)
        );
    }
    Ok(())
}
