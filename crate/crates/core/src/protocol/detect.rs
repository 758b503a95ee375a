//! The server's three detection rounds and malicious-client identification.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::aggregate::group_sums;
use super::FlagReason;
use crate::group::{Element, GroupParams};
use crate::hypermesh::{ClientId, GroupId, HypermeshTopology};
use crate::masking::{MaskedEntry, MaskedSubmission};
use crate::quantfl::Codebook;

/// Groups flagged in one round, with every reason that flagged them.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuspiciousSet {
    flags: BTreeMap<GroupId, BTreeSet<FlagReason>>,
}

impl SuspiciousSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, group: GroupId, reason: FlagReason) {
        self.flags.entry(group).or_default().insert(reason);
    }

    pub fn extend(&mut self, groups: impl IntoIterator<Item = GroupId>, reason: FlagReason) {
        for g in groups {
            self.insert(g, reason);
        }
    }

    pub fn contains(&self, group: GroupId) -> bool {
        self.flags.contains_key(&group)
    }

    pub fn groups(&self) -> BTreeSet<GroupId> {
        self.flags.keys().copied().collect()
    }

    pub fn reasons(&self, group: GroupId) -> Option<&BTreeSet<FlagReason>> {
        self.flags.get(&group)
    }

    /// One `(group, reason)` pair per recorded reason, ordered by group.
    pub fn pairs(&self) -> Vec<(GroupId, FlagReason)> {
        self.flags
            .iter()
            .flat_map(|(&g, rs)| rs.iter().map(move |&r| (g, r)))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }
}

/// Inclusive bounds every coordinate of a group sum must respect.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LegitimateRange {
    pub lo: i64,
    pub hi: i64,
}

impl LegitimateRange {
    /// `[d * c_min, d * c_max]`.
    pub fn for_codebook(codebook: Codebook, d: usize) -> Self {
        Self {
            lo: d as i64 * codebook.min_code(),
            hi: d as i64 * codebook.max_code(),
        }
    }

    pub fn contains(&self, v: i64) -> bool {
        (self.lo..=self.hi).contains(&v)
    }
}

/// The inputs of one round's detection: submissions keyed by client and the
/// groups already excluded because a member dropped out.
#[derive(Clone, Copy, Debug)]
pub struct RoundView<'a> {
    pub topology: &'a HypermeshTopology,
    pub params: &'a GroupParams,
    pub submissions: &'a BTreeMap<ClientId, MaskedSubmission>,
    pub excluded: &'a BTreeSet<GroupId>,
}

impl<'a> RoundView<'a> {
    pub fn active_groups(&self) -> impl Iterator<Item = GroupId> + '_ {
        self.topology
            .group_ids()
            .filter(|g| !self.excluded.contains(g))
    }

    pub fn entry(&self, client: ClientId, group: GroupId) -> Option<&'a MaskedEntry> {
        self.submissions.get(&client)?.entry(group)
    }

    /// Entries of every member of `group`, or `None` if any is missing or the
    /// vectors disagree in length.
    pub fn group_entries(&self, group: GroupId) -> Option<Vec<&'a MaskedEntry>> {
        let members = self.topology.members_of(group).ok()?;
        let entries: Vec<&MaskedEntry> = members
            .iter()
            .map(|&c| self.entry(c, group))
            .collect::<Option<_>>()?;
        let len = entries.first()?.masked.len();
        entries
            .iter()
            .all(|e| e.masked.len() == len && e.commitments.len() == len)
            .then_some(entries)
    }

    fn unmasked(&self, entry: &MaskedEntry) -> Vec<Element> {
        entry
            .masked
            .iter()
            .zip(&entry.commitments)
            .map(|(m, d)| {
                self.params
                    .combine(&self.params.commit(m), &self.params.invert(d))
            })
            .collect()
    }
}

/// Share commitments of each group must multiply to the identity at every coordinate.
pub fn detect_round1(view: &RoundView) -> BTreeSet<GroupId> {
    let p = view.params;
    view.active_groups()
        .filter(|&g| match view.group_entries(g) {
            None => true,
            Some(entries) => (0..entries[0].commitments.len()).any(|k| {
                !entries
                    .iter()
                    .fold(p.identity(), |acc, e| p.combine(&acc, &e.commitments[k]))
                    .is_identity()
            }),
        })
        .collect()
}

/// Each client's `g^m * d^-1` must agree across all of its active groups.
pub fn detect_round2(view: &RoundView) -> BTreeSet<GroupId> {
    let mut flagged = BTreeSet::new();
    for &client in view.submissions.keys() {
        let Ok(groups) = view.topology.groups_of(client) else {
            continue;
        };
        let active: Vec<GroupId> = groups
            .iter()
            .copied()
            .filter(|g| !view.excluded.contains(g))
            .collect();
        let unmasked: Vec<Vec<Element>> = active
            .iter()
            .filter_map(|&g| view.entry(client, g))
            .map(|e| view.unmasked(e))
            .collect();
        let consistent =
            unmasked.len() == active.len() && unmasked.windows(2).all(|w| w[0] == w[1]);
        if !consistent {
            flagged.extend(active);
        }
    }
    flagged
}

/// Every coordinate of every group sum must lie in `range`.
pub fn detect_round3(view: &RoundView, range: LegitimateRange) -> BTreeSet<GroupId> {
    let sums = group_sums(view);
    view.active_groups()
        .filter(|g| match sums.get(g) {
            None => true,
            Some(sum) => sum
                .iter()
                .any(|s| !range.contains(view.params.decode_saturating(s))),
        })
        .collect()
}

/// Rounds 1 to 3 in order. Round 3 also inspects groups that earlier rounds
/// already flagged, so the audit log holds every applicable reason.
pub fn run_detection(view: &RoundView, range: LegitimateRange) -> SuspiciousSet {
    let mut v = SuspiciousSet::new();
    v.extend(detect_round1(view), FlagReason::BadShareSum);
    v.extend(detect_round2(view), FlagReason::InconsistentW);
    v.extend(detect_round3(view, range), FlagReason::OutOfRange);
    v
}

/// Clients all of whose groups were flagged.
pub fn identify_malicious(v: &SuspiciousSet, topology: &HypermeshTopology) -> BTreeSet<ClientId> {
    topology
        .clients()
        .filter(|&c| {
            topology
                .groups_of(c)
                .map(|gs| gs.iter().all(|&g| v.contains(g)))
                .unwrap_or(false)
        })
        .collect()
}

/// Counts `(client, coordinate)` pairs whose unmasked commitment `g^w` equals
/// `g^c` for a codebook value `c`, meaning the server learns `w` there.
pub fn leakage_probe(view: &RoundView, codebook: Codebook) -> usize {
    let candidates: Vec<Element> = codebook
        .codes()
        .iter()
        .filter_map(|&c| view.params.encode_signed(c).ok())
        .map(|s| view.params.commit(&s))
        .collect();
    view.submissions
        .iter()
        .filter_map(|(&c, sub)| {
            let groups = view.topology.groups_of(c).ok()?;
            let g = groups.iter().find(|g| !view.excluded.contains(g))?;
            sub.entry(*g)
        })
        .map(|e| {
            view.unmasked(e)
                .iter()
                .filter(|u| candidates.contains(u))
                .count()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masking::{all_shares, mask_and_commit};

    fn honest_round(
        t: &HypermeshTopology,
        gp: &GroupParams,
        codes: &dyn Fn(ClientId) -> Vec<i64>,
    ) -> BTreeMap<ClientId, MaskedSubmission> {
        let len = codes(0).len();
        let shares = all_shares(t, 1, 42, len, gp).unwrap();
        t.clients()
            .map(|c| (c, mask_and_commit(&codes(c), &shares[c], gp).unwrap()))
            .collect()
    }

    fn view<'a>(
        t: &'a HypermeshTopology,
        gp: &'a GroupParams,
        subs: &'a BTreeMap<ClientId, MaskedSubmission>,
        excluded: &'a BTreeSet<GroupId>,
    ) -> RoundView<'a> {
        RoundView {
            topology: t,
            params: gp,
            submissions: subs,
            excluded,
        }
    }

    #[test]
    fn honest_round_flags_nothing() {
        let gp = GroupParams::test();
        let t = HypermeshTopology::build(4, 2).unwrap();
        let subs = honest_round(&t, &gp, &|c| vec![(c % 3) as i64 - 1, 1, 0]);
        let none = BTreeSet::new();
        let v = run_detection(
            &view(&t, &gp, &subs, &none),
            LegitimateRange::for_codebook(Codebook::Ternary, 4),
        );
        assert!(v.is_empty());
        assert!(identify_malicious(&v, &t).is_empty());
    }

    #[test]
    fn single_share_coordinate_flags_exactly_that_group() {
        let gp = GroupParams::test();
        let t = HypermeshTopology::build(4, 2).unwrap();
        let mut subs = honest_round(&t, &gp, &|_| vec![0, 1]);
        let e = subs
            .get_mut(&5)
            .unwrap()
            .entries
            .iter_mut()
            .find(|e| e.group == 5)
            .unwrap();
        e.commitments[1] = gp.combine(&e.commitments[1], &gp.generator());
        let none = BTreeSet::new();
        assert_eq!(
            detect_round1(&view(&t, &gp, &subs, &none)),
            BTreeSet::from([5])
        );
    }

    #[test]
    fn opposite_shifts_in_two_groups_flag_both() {
        let gp = GroupParams::test();
        let t = HypermeshTopology::build(4, 2).unwrap();
        let mut subs = honest_round(&t, &gp, &|_| vec![1]);
        let delta = gp.scalar(7u32);
        let sub = subs.get_mut(&0).unwrap();
        for (e, up) in sub.entries.iter_mut().zip([true, false]) {
            let shift = if up { delta.clone() } else { gp.neg(&delta) };
            e.masked[0] = gp.add(&e.masked[0], &shift);
            e.commitments[0] = gp.combine(&e.commitments[0], &gp.commit(&shift));
        }
        let none = BTreeSet::new();
        assert_eq!(
            detect_round1(&view(&t, &gp, &subs, &none)),
            BTreeSet::from([0, 4])
        );
    }

    #[test]
    fn inconsistent_w_flags_all_groups_of_client() {
        let gp = GroupParams::test();
        let t = HypermeshTopology::build(4, 2).unwrap();
        let mut subs = honest_round(&t, &gp, &|_| vec![1, 0]);
        let e = subs
            .get_mut(&5)
            .unwrap()
            .entries
            .iter_mut()
            .find(|e| e.group == 5)
            .unwrap();
        e.masked[1] = gp.add(&e.masked[1], &gp.scalar(5u32));
        let none = BTreeSet::new();
        let vw = view(&t, &gp, &subs, &none);
        assert!(detect_round1(&vw).is_empty());
        assert_eq!(detect_round2(&vw), BTreeSet::from([1, 5]));
    }

    #[test]
    fn tiny_group_distinguishes_w1_from_w2() {
        let gp = GroupParams::tiny();
        assert_ne!(gp.commit(&gp.scalar(1u32)), gp.commit(&gp.scalar(2u32)));
        assert_eq!(gp.commit(&gp.scalar(2u32)).value(), &16u32.into());
    }

    #[test]
    fn range_check_examples() {
        let r = LegitimateRange::for_codebook(Codebook::Ternary, 4);
        assert_eq!((r.lo, r.hi), (-4, 4));
        assert!(r.contains(3));
        let b = LegitimateRange::for_codebook(Codebook::Binary, 4);
        assert_eq!((b.lo, b.hi), (0, 4));
        assert!(b.contains(4) && !b.contains(5) && !b.contains(-1));

        let gp = GroupParams::test();
        let t = HypermeshTopology::build(4, 2).unwrap();
        // Group 0 = [0,1,2,3]: codes 1,1,1,0 sum to 3.
        let subs = honest_round(&t, &gp, &|c| vec![i64::from(c % 4 != 3)]);
        let none = BTreeSet::new();
        assert!(detect_round3(&view(&t, &gp, &subs, &none), r).is_empty());
        // One member adds 30 to a code of -1 or more: sum at least 27.
        let shares = all_shares(&t, 1, 42, 1, &gp).unwrap();
        let mut subs = subs;
        subs.insert(0, mask_and_commit(&[31], &shares[0], &gp).unwrap());
        let flagged = detect_round3(&view(&t, &gp, &subs, &none), r);
        assert_eq!(flagged, BTreeSet::from([0, 4]));
        // All ones in a binary group of four sits on the boundary.
        let ones = honest_round(&t, &gp, &|_| vec![1]);
        assert!(detect_round3(&view(&t, &gp, &ones, &none), b).is_empty());
    }

    #[test]
    fn identification_examples() {
        let t = HypermeshTopology::build(4, 2).unwrap();
        let mut v = SuspiciousSet::new();
        v.extend([0, 4, 5], FlagReason::OutOfRange);
        assert_eq!(identify_malicious(&v, &t), BTreeSet::from([0, 1]));
        let mut v = SuspiciousSet::new();
        v.extend([0, 1, 4, 5], FlagReason::OutOfRange);
        assert_eq!(identify_malicious(&v, &t), BTreeSet::from([0, 1, 4, 5]));
        assert!(identify_malicious(&SuspiciousSet::new(), &t).is_empty());
    }

    #[test]
    fn suspicious_set_keeps_one_entry_per_group() {
        let mut v = SuspiciousSet::new();
        v.insert(3, FlagReason::OutOfRange);
        v.insert(3, FlagReason::InconsistentW);
        v.insert(3, FlagReason::OutOfRange);
        assert_eq!(v.len(), 1);
        assert_eq!(
            v.pairs(),
            vec![(3, FlagReason::InconsistentW), (3, FlagReason::OutOfRange)]
        );
    }

    #[test]
    fn excluded_groups_are_skipped() {
        let gp = GroupParams::test();
        let t = HypermeshTopology::build(2, 2).unwrap();
        let mut subs = honest_round(&t, &gp, &|_| vec![1]);
        // Client 3 is gone; groups containing it are excluded.
        subs.remove(&3);
        let excluded: BTreeSet<GroupId> = t.groups_of(3).unwrap().iter().copied().collect();
        let vw = view(&t, &gp, &subs, &excluded);
        assert!(run_detection(&vw, LegitimateRange::for_codebook(Codebook::Ternary, 2)).is_empty());
        // Without the exclusion the missing entries are flagged.
        let none = BTreeSet::new();
        assert_eq!(detect_round1(&view(&t, &gp, &subs, &none)), excluded);
    }

    #[test]
    fn leakage_matches_every_honest_coordinate() {
        let gp = GroupParams::test();
        let t = HypermeshTopology::build(2, 2).unwrap();
        let subs = honest_round(&t, &gp, &|c| vec![c as i64 % 2, -1, 0]);
        let none = BTreeSet::new();
        assert_eq!(
            leakage_probe(&view(&t, &gp, &subs, &none), Codebook::Ternary),
            4 * 3
        );
    }
}
