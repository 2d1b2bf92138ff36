mod common;

use std::collections::HashSet;

use common::{fnv1a_oracle, on_ranks, BACKENDS};
use proptest::prelude::*;
use vidmpi_core::vid::{fnv1a32, ggid_compute, VidError};
use vidmpi_core::Runtime;

#[test]
fn oracle_matches_published_vectors() {
    // "a" as a byte string, and the one-member list [0] as four zero bytes
    assert_eq!(fnv1a32(b"a"), 0xe40c_292c);
    assert_eq!(fnv1a32(&[0, 0, 0, 0]), fnv1a_oracle(&[0]));
}

#[test]
fn all_255_subsets_of_eight_ranks_are_distinct() {
    let mut seen = HashSet::new();
    for mask in 1u32..256 {
        let members: Vec<u32> = (0..8).filter(|r| mask & (1 << r) != 0).collect();
        let g = ggid_compute(&members).unwrap();
        assert_eq!(g, fnv1a_oracle(&members), "subset {members:?}");
        seen.insert(g);
    }
    assert_eq!(seen.len(), 255);
}

#[test]
fn empty_membership_has_no_ggid() {
    assert!(matches!(ggid_compute(&[]), Err(VidError::EmptyMembers)));
}

proptest! {
    #[test]
    fn ggid_equals_oracle(members in proptest::collection::vec(0u32..1024, 1..64)) {
        prop_assert_eq!(ggid_compute(&members).unwrap(), fnv1a_oracle(&members));
    }

    #[test]
    fn order_matters(a in 0u32..64, b in 0u32..64) {
        prop_assume!(a != b);
        prop_assert_ne!(ggid_compute(&[a, b]).unwrap(), ggid_compute(&[b, a]).unwrap());
    }
}

#[test]
fn member_ranks_agree_on_split_ggids() {
    for backend in BACKENDS {
        let per_rank = on_ranks(8, |rank, t| {
            let mut rt = Runtime::init(backend, t, rank).unwrap();
            let world = rt.comm_world();
            let halves = rt.comm_split(world, (rank % 2) as i32, -(rank as i32)).unwrap();
            let quarters = rt.comm_split(halves, (rank / 4) as i32, 0).unwrap();
            let out: Vec<(Vec<u32>, u32, u32)> = [world, halves, quarters]
                .into_iter()
                .map(|c| {
                    let (g, s) = rt.comm_ggid(c).unwrap();
                    (rt.comm_members(c).unwrap(), g, s)
                })
                .collect();
            rt.finalize().unwrap();
            out
        });
        for (rank, comms) in per_rank.iter().enumerate() {
            for (members, ggid, _) in comms {
                assert!(members.contains(&(rank as u32)));
                assert_eq!(*ggid, fnv1a_oracle(members));
                for &m in members {
                    let theirs = per_rank[m as usize].iter().find(|(mm, _, _)| mm == members).unwrap();
                    assert_eq!(theirs.1, *ggid, "{backend}: ranks {rank} and {m} disagree");
                }
            }
        }
        // key = -rank reverses the order within each half
        assert_eq!(per_rank[0][1].0, vec![6, 4, 2, 0]);
    }
}
