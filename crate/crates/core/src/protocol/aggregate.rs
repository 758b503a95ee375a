//! Group sums and aggregation over the groups that survive detection.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::detect::RoundView;
use crate::group::{GroupParams, Scalar};
use crate::hypermesh::GroupId;

/// Coordinate-wise sum mod `q` of each active group's masked vectors. Masks
/// cancel, so honest groups yield the plaintext sum of their members' codes.
/// Groups with missing or ragged entries are left out.
pub fn group_sums(view: &RoundView) -> BTreeMap<GroupId, Vec<Scalar>> {
    let p = view.params;
    view.active_groups()
        .filter_map(|g| {
            let entries = view.group_entries(g)?;
            let len = entries[0].masked.len();
            let sum = (0..len)
                .map(|k| {
                    entries
                        .iter()
                        .fold(p.zero(), |acc, e| p.add(&acc, &e.masked[k]))
                })
                .collect();
            Some((g, sum))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateOutcome {
    pub sum: Vec<i64>,
    /// `surviving.len() * d`; zero for a void round.
    pub divisor: u64,
    pub surviving: Vec<GroupId>,
    pub void: bool,
}

/// Adds the sums of every group not in `removed`. A round where nothing
/// survives is void and carries an all-zero sum.
pub fn aggregate(
    sums: &BTreeMap<GroupId, Vec<Scalar>>,
    removed: &BTreeSet<GroupId>,
    d: usize,
    len: usize,
    params: &GroupParams,
) -> AggregateOutcome {
    let surviving: Vec<GroupId> = sums
        .keys()
        .copied()
        .filter(|g| !removed.contains(g))
        .collect();
    if surviving.is_empty() {
        return AggregateOutcome {
            sum: vec![0; len],
            divisor: 0,
            surviving,
            void: true,
        };
    }
    let mut total = vec![params.zero(); len];
    for g in &surviving {
        for (t, s) in total.iter_mut().zip(&sums[g]) {
            *t = params.add(t, s);
        }
    }
    AggregateOutcome {
        sum: total.iter().map(|s| params.decode_saturating(s)).collect(),
        divisor: (surviving.len() * d) as u64,
        surviving,
        void: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypermesh::{ClientId, HypermeshTopology};
    use crate::masking::{all_shares, mask_and_commit, MaskedSubmission};

    fn setup(
        codes: &dyn Fn(ClientId) -> Vec<i64>,
    ) -> (
        HypermeshTopology,
        GroupParams,
        BTreeMap<ClientId, MaskedSubmission>,
    ) {
        let gp = GroupParams::test();
        let t = HypermeshTopology::build(4, 2).unwrap();
        let shares = all_shares(&t, 1, 8, codes(0).len(), &gp).unwrap();
        let subs = t
            .clients()
            .map(|c| (c, mask_and_commit(&codes(c), &shares[c], &gp).unwrap()))
            .collect();
        (t, gp, subs)
    }

    fn codes(c: ClientId) -> Vec<i64> {
        vec![(c % 3) as i64 - 1, (c % 2) as i64, 1]
    }

    #[test]
    fn group_sums_equal_plaintext_sums() {
        let (t, gp, subs) = setup(&codes);
        let none = BTreeSet::new();
        let view = RoundView {
            topology: &t,
            params: &gp,
            submissions: &subs,
            excluded: &none,
        };
        for (g, sum) in group_sums(&view) {
            let members = t.members_of(g).unwrap();
            for k in 0..3 {
                let plain: i64 = members.iter().map(|&c| codes(c)[k]).sum();
                assert_eq!(gp.decode_saturating(&sum[k]), plain);
            }
        }
    }

    #[test]
    fn honest_aggregate_is_client_mean() {
        let (t, gp, subs) = setup(&codes);
        let none = BTreeSet::new();
        let view = RoundView {
            topology: &t,
            params: &gp,
            submissions: &subs,
            excluded: &none,
        };
        let out = aggregate(&group_sums(&view), &none, 4, 3, &gp);
        assert_eq!(out.divisor, 32);
        for k in 0..3 {
            let plain: i64 = t.clients().map(|c| codes(c)[k]).sum();
            assert_eq!(out.sum[k], 2 * plain);
        }
    }

    #[test]
    fn removal_leaves_survivors_untouched() {
        let (t, gp, subs) = setup(&codes);
        let none = BTreeSet::new();
        let view = RoundView {
            topology: &t,
            params: &gp,
            submissions: &subs,
            excluded: &none,
        };
        let sums = group_sums(&view);
        let removed = BTreeSet::from([0, 4, 5]);
        let out = aggregate(&sums, &removed, 4, 3, &gp);
        assert_eq!(out.surviving, vec![1, 2, 3, 6, 7]);
        assert_eq!(out.divisor, 20);
        // 12 submitted values removed: 3 groups of 4.
        assert_eq!(t.group_count() * 4 - out.divisor as usize, 12);
        for k in 0..3 {
            let expected: i64 = out
                .surviving
                .iter()
                .map(|g| gp.decode_saturating(&sums[g][k]))
                .sum();
            assert_eq!(out.sum[k], expected);
        }
    }

    #[test]
    fn single_surviving_group_and_void_round() {
        let (t, gp, subs) = setup(&|_| vec![1]);
        let none = BTreeSet::new();
        let view = RoundView {
            topology: &t,
            params: &gp,
            submissions: &subs,
            excluded: &none,
        };
        let sums = group_sums(&view);
        let removed: BTreeSet<GroupId> = (1..8).collect();
        let out = aggregate(&sums, &removed, 4, 1, &gp);
        assert_eq!(out.sum[0] as f64 / out.divisor as f64, 1.0);
        let all: BTreeSet<GroupId> = (0..8).collect();
        let void = aggregate(&sums, &all, 4, 1, &gp);
        assert!(void.void);
        assert_eq!(void.divisor, 0);
    }
}
