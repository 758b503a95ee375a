//! Pairwise randoms become zero-sum group shares; masked codes hide each
//! client while the group sum comes out in the clear.

use std::collections::BTreeMap;

use mudpqfed::masking::{derive_shares, generate_randoms, mask_and_commit};
use mudpqfed::{GroupParams, HypermeshTopology};

fn main() -> mudpqfed::Result<()> {
    let topo = HypermeshTopology::build(2, 2)?;
    let params = GroupParams::tiny();
    let (round, len) = (1, 3);
    let randoms: Vec<_> = topo
        .clients()
        .map(|c| generate_randoms(c, &topo, round, 42, len, &params))
        .collect::<Result<_, _>>()?;
    let codes = [[1, 0, -1], [1, 1, 0], [0, -1, -1], [-1, 1, 1]];

    let mut submissions = Vec::new();
    for c in topo.clients() {
        // What client c receives: every neighbor's random addressed to it.
        let received: BTreeMap<_, _> = randoms
            .iter()
            .filter_map(|r| r.values.get(&c).map(|v| (r.client, v.clone())))
            .collect();
        let shares = derive_shares(&randoms[c], &received, &topo, &params)?;
        submissions.push(mask_and_commit(&codes[c], &shares, &params)?);
    }

    for g in topo.group_ids() {
        let members = topo.members_of(g)?;
        let entries: Vec<_> = members
            .iter()
            .map(|&c| submissions[c].entry(g).unwrap())
            .collect();
        let sum: Vec<i64> = (0..len)
            .map(|k| {
                let s = entries
                    .iter()
                    .fold(params.zero(), |acc, e| params.add(&acc, &e.masked[k]));
                params.decode_saturating(&s)
            })
            .collect();
        let product = entries.iter().fold(params.identity(), |acc, e| {
            params.combine(&acc, &e.commitments[0])
        });
        println!(
            "group {g} members {members:?}: masked {:?}, sum {sum:?}, commitment product is identity: {}",
            entries.iter().map(|e| params.decode_saturating(&e.masked[0])).collect::<Vec<_>>(),
            product.is_identity()
        );
    }
    Ok(())
}
