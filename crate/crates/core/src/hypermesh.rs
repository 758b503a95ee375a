//! The d^n hypermesh used to group clients.
//!
//! Client `k` carries the base-`d` identifier `a_{n-1} ... a_0` of `k`. Every
//! axis-aligned line of `d` clients (all digits fixed except one) is a group.
//! Groups are numbered axis by axis; within an axis they are ordered by the
//! value of the fixed digits, so for `4^2` the rows come first (`G_0 = [0,1,2,3]`)
//! and the columns after them (`G_4 = [0,4,8,12]`).

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};

pub type ClientId = usize;
pub type GroupId = usize;

/// Upper bound on `d^n`, far above anything the harness runs.
const MAX_CLIENTS: usize = 1 << 20;

/// An `n`-digit base-`d` client identifier, least significant digit first.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Identifier(Vec<usize>);

impl Identifier {
    pub fn digits(&self) -> &[usize] {
        &self.0
    }

    pub fn digit(&self, position: usize) -> usize {
        self.0[position]
    }
}

impl fmt::Display for Identifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for digit in self.0.iter().rev() {
            write!(f, "{digit}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct HypermeshTopology {
    d: usize,
    n: usize,
    clients: usize,
    groups: Vec<Vec<ClientId>>,
    memberships: Vec<Vec<GroupId>>,
}

impl HypermeshTopology {
    pub fn build(d: usize, n: usize) -> Result<Self> {
        if d < 2 || n < 2 {
            return Err(Error::InvalidShape { d, n });
        }
        let clients = (0..n)
            .try_fold(1usize, |acc, _| acc.checked_mul(d))
            .filter(|&c| c <= MAX_CLIENTS)
            .ok_or(Error::TopologyTooLarge { d, n })?;

        let per_axis = clients / d;
        let mut groups = Vec::with_capacity(per_axis * n);
        let mut memberships = vec![Vec::with_capacity(n); clients];
        for axis in 0..n {
            let stride = d.pow(axis as u32);
            for rank in 0..per_axis {
                // Spread the rank's digits over every position except `axis`.
                let low = rank % stride;
                let high = rank / stride;
                let base = low + high * stride * d;
                let members: Vec<ClientId> = (0..d).map(|v| base + v * stride).collect();
                let gid = groups.len();
                for &m in &members {
                    memberships[m].push(gid);
                }
                groups.push(members);
            }
        }

        Ok(Self {
            d,
            n,
            clients,
            groups,
            memberships,
        })
    }

    /// Builds the hypermesh that holds exactly `clients` clients.
    pub fn for_client_count(d: usize, n: usize, clients: usize) -> Result<Self> {
        let topology = Self::build(d, n)?;
        if topology.clients != clients {
            return Err(Error::WrongClientCount {
                expected: topology.clients,
                got: clients,
            });
        }
        Ok(topology)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn client_count(&self) -> usize {
        self.clients
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn clients(&self) -> std::ops::Range<ClientId> {
        0..self.clients
    }

    pub fn group_ids(&self) -> std::ops::Range<GroupId> {
        0..self.groups.len()
    }

    pub fn identifier(&self, client: ClientId) -> Result<Identifier> {
        self.check_client(client)?;
        let mut rest = client;
        let digits = (0..self.n)
            .map(|_| {
                let digit = rest % self.d;
                rest /= self.d;
                digit
            })
            .collect();
        Ok(Identifier(digits))
    }

    /// The `n` groups client `client` belongs to, in axis order.
    pub fn groups_of(&self, client: ClientId) -> Result<&[GroupId]> {
        self.check_client(client)?;
        Ok(&self.memberships[client])
    }

    /// Members of `group`, ascending.
    pub fn members_of(&self, group: GroupId) -> Result<&[ClientId]> {
        self.groups
            .get(group)
            .map(Vec::as_slice)
            .ok_or(Error::UnknownGroup(group))
    }

    /// The digit position that varies along `group`.
    pub fn axis_of(&self, group: GroupId) -> Result<usize> {
        if group >= self.groups.len() {
            return Err(Error::UnknownGroup(group));
        }
        Ok(group / (self.clients / self.d))
    }

    pub fn neighbors_of(&self, client: ClientId) -> Result<BTreeSet<ClientId>> {
        let groups = self.groups_of(client)?;
        Ok(groups
            .iter()
            .flat_map(|&g| self.groups[g].iter().copied())
            .filter(|&m| m != client)
            .collect())
    }

    pub fn are_neighbors(&self, a: ClientId, b: ClientId) -> Result<bool> {
        Ok(self.shared_group(a, b)?.is_some() && a != b)
    }

    /// The single group shared by two distinct clients, if any.
    pub fn shared_group(&self, a: ClientId, b: ClientId) -> Result<Option<GroupId>> {
        let ga = self.groups_of(a)?;
        let gb = self.groups_of(b)?;
        if a == b {
            return Ok(None);
        }
        Ok(ga.iter().copied().find(|g| gb.contains(g)))
    }

    /// Display label: for two-digit meshes rows are `R#k` and columns `C#k`.
    pub fn group_label(&self, group: GroupId) -> Result<String> {
        let axis = self.axis_of(group)?;
        let rank = group % (self.clients / self.d);
        Ok(match (self.n, axis) {
            (2, 0) => format!("R#{rank}"),
            (2, 1) => format!("C#{rank}"),
            _ => format!("A{axis}#{rank}"),
        })
    }

    fn check_client(&self, client: ClientId) -> Result<()> {
        if client >= self.clients {
            return Err(Error::UnknownClient(client));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn digit_distance(t: &HypermeshTopology, a: ClientId, b: ClientId) -> usize {
        let ia = t.identifier(a).unwrap();
        let ib = t.identifier(b).unwrap();
        ia.digits()
            .iter()
            .zip(ib.digits())
            .filter(|(x, y)| x != y)
            .count()
    }

    #[test]
    fn four_by_four_matches_figure_layout() {
        let t = HypermeshTopology::build(4, 2).unwrap();
        assert_eq!(t.client_count(), 16);
        assert_eq!(t.group_count(), 8);
        let labels: Vec<_> = t
            .groups_of(0)
            .unwrap()
            .iter()
            .map(|&g| t.group_label(g).unwrap())
            .collect();
        assert_eq!(labels, ["R#0", "C#0"]);
    }

    #[test]
    fn four_by_four_group_numbering() {
        let t = HypermeshTopology::build(4, 2).unwrap();
        let expected: [&[usize]; 8] = [
            &[0, 1, 2, 3],
            &[4, 5, 6, 7],
            &[8, 9, 10, 11],
            &[12, 13, 14, 15],
            &[0, 4, 8, 12],
            &[1, 5, 9, 13],
            &[2, 6, 10, 14],
            &[3, 7, 11, 15],
        ];
        for (g, members) in expected.iter().enumerate() {
            assert_eq!(t.members_of(g).unwrap(), *members);
        }
        assert_eq!(t.groups_of(5).unwrap(), &[1, 5]);
    }

    #[test]
    fn smallest_mesh() {
        let t = HypermeshTopology::build(2, 2).unwrap();
        assert_eq!(t.client_count(), 4);
        assert_eq!(t.group_count(), 4);
        assert!((0..4).all(|g| t.members_of(g).unwrap().len() == 2));
        assert_eq!(t.neighbors_of(0).unwrap(), BTreeSet::from([1, 2]));
        let n3 = t.neighbors_of(3).unwrap();
        for &g in t.groups_of(3).unwrap() {
            let others: Vec<_> = t
                .members_of(g)
                .unwrap()
                .iter()
                .filter(|&&m| m != 3)
                .collect();
            assert_eq!(others.len(), 1);
            assert!(n3.contains(others[0]));
        }
    }

    #[test]
    fn three_cubed_counts() {
        let t = HypermeshTopology::build(3, 3).unwrap();
        assert_eq!(t.client_count(), 27);
        assert_eq!(t.group_count(), 27);
        assert!(t.group_ids().all(|g| t.members_of(g).unwrap().len() == 3));
        assert!(t.clients().all(|c| t.groups_of(c).unwrap().len() == 3));
    }

    #[test]
    fn neighbors_of_origin_in_four_by_four() {
        let t = HypermeshTopology::build(4, 2).unwrap();
        assert_eq!(
            t.neighbors_of(0).unwrap(),
            BTreeSet::from([1, 2, 3, 4, 8, 12])
        );
    }

    #[test]
    fn rejects_bad_shapes_and_ids() {
        assert!(matches!(
            HypermeshTopology::build(1, 3),
            Err(Error::InvalidShape { .. })
        ));
        assert!(matches!(
            HypermeshTopology::build(4, 1),
            Err(Error::InvalidShape { .. })
        ));
        assert!(matches!(
            HypermeshTopology::for_client_count(4, 2, 17),
            Err(Error::WrongClientCount {
                expected: 16,
                got: 17
            })
        ));
        let t = HypermeshTopology::build(2, 2).unwrap();
        assert!(matches!(t.groups_of(4), Err(Error::UnknownClient(4))));
        assert!(matches!(t.members_of(4), Err(Error::UnknownGroup(4))));
        assert!(t.neighbors_of(9).is_err());
    }

    #[test]
    fn identifier_display_is_most_significant_first() {
        let t = HypermeshTopology::build(4, 2).unwrap();
        assert_eq!(t.identifier(0).unwrap().to_string(), "00");
        assert_eq!(t.identifier(6).unwrap().to_string(), "12");
    }

    #[test]
    fn structural_invariants_small_meshes() {
        for d in 2usize..=5 {
            for n in 2..=5 {
                if d.pow(n as u32) > 1024 {
                    continue;
                }
                let t = HypermeshTopology::build(d, n).unwrap();
                assert_eq!(t.group_count() * d, t.client_count() * n);
                for c in t.clients() {
                    let groups = t.groups_of(c).unwrap();
                    assert_eq!(groups.len(), n);
                    let union: BTreeSet<_> = groups
                        .iter()
                        .flat_map(|&g| t.members_of(g).unwrap().iter().copied())
                        .collect();
                    let mut expected = t.neighbors_of(c).unwrap();
                    assert_eq!(expected.len(), n * (d - 1));
                    expected.insert(c);
                    assert_eq!(union, expected);
                }
                for g in t.group_ids() {
                    let members = t.members_of(g).unwrap();
                    assert!(members.windows(2).all(|w| w[0] < w[1]));
                    let axis = t.axis_of(g).unwrap();
                    for &a in members {
                        for &b in members {
                            if a != b {
                                let ia = t.identifier(a).unwrap();
                                let ib = t.identifier(b).unwrap();
                                assert_eq!(digit_distance(&t, a, b), 1);
                                assert_ne!(ia.digit(axis), ib.digit(axis));
                            }
                        }
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn pairs_share_at_most_one_group(d in 2usize..=5, n in 2usize..=4, a in 0usize..1024, b in 0usize..1024) {
            let t = HypermeshTopology::build(d, n).unwrap();
            let (a, b) = (a % t.client_count(), b % t.client_count());
            prop_assume!(a != b);
            let ga = t.groups_of(a).unwrap();
            let gb = t.groups_of(b).unwrap();
            let shared = ga.iter().filter(|g| gb.contains(g)).count();
            prop_assert!(shared <= 1);
            let neighbors = digit_distance(&t, a, b) == 1;
            prop_assert_eq!(shared == 1, neighbors);
            prop_assert_eq!(t.neighbors_of(a).unwrap().contains(&b), t.neighbors_of(b).unwrap().contains(&a));
        }
    }
}
