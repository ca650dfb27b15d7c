//! Outcome invariance under choices the pricing result must not depend on:
//! which optimal allocation the clearing step picks, how bidders are
//! numbered, and whether the run is repeated.

mod common;

use std::cmp::Ordering;

use auction_core::model::{leximin_compare, Instance};
use auction_core::rules::{blo_wf_cgs_cr, fast_core, mrc_ccg, mrc_quadratic, pay_as_bid, ProjectionReference};
use auction_core::wd::{solve_instance, TieBreak};
use auction_core::{generate_chain, Rat};

use common::{cleared, desk_instances};

fn blo_under(inst: &Instance, tie: TieBreak) -> Vec<Rat> {
    let alloc = solve_instance(inst, tie).allocation;
    blo_wf_cgs_cr(inst, &alloc, tie).unwrap().utilities
}

#[test]
fn leximin_point_ignores_the_clearing_tie_rule() {
    let mut instances = desk_instances(120, 0x71E);
    for k in [3, 5, 7] {
        instances.push(generate_chain(k).unwrap());
    }
    for inst in instances {
        assert_eq!(
            blo_under(&inst, TieBreak::LexSmallest),
            blo_under(&inst, TieBreak::LexLargest),
            "allocation tie rule leaked into the utilities ({inst:?})"
        );
    }
}

#[test]
fn leximin_point_commutes_with_bidder_renumbering() {
    for inst in desk_instances(80, 0xF1) {
        let n = inst.num_bidders();
        // A fixed derangement-ish rotation is enough to catch index leaks.
        let sigma: Vec<usize> = (0..n).map(|i| (i + 1) % n).collect();
        let permuted_bids = sigma.iter().map(|&s| inst.bids[s].clone()).collect();
        let permuted =
            Instance::new(inst.num_goods, inst.num_dummy, permuted_bids).unwrap();

        let original = blo_under(&inst, TieBreak::LexSmallest);
        let renamed = blo_under(&permuted, TieBreak::LexSmallest);
        let mapped_back: Vec<Rat> = sigma.iter().map(|&s| original[s].clone()).collect();
        assert_eq!(renamed, mapped_back, "bidder numbering leaked ({inst:?})");
    }
}

#[test]
fn leximin_point_dominates_every_other_core_selection() {
    let tie = TieBreak::LexSmallest;
    for inst in desk_instances(120, 0xD0) {
        let alloc = cleared(&inst);
        let blo = blo_wf_cgs_cr(&inst, &alloc, tie).unwrap();
        let rivals = [
            mrc_ccg(&inst, &alloc, tie).unwrap(),
            mrc_quadratic(&inst, &alloc, tie, ProjectionReference::Vcg).unwrap(),
            mrc_quadratic(&inst, &alloc, tie, ProjectionReference::Zero).unwrap(),
            fast_core(&inst, &alloc, tie, &auction_core::model::ratio(1, 128)).unwrap(),
            pay_as_bid(&inst, &alloc).unwrap(),
        ];
        for rival in rivals {
            let order = leximin_compare(&blo.utilities, &rival.utilities).unwrap();
            assert_ne!(
                order,
                Ordering::Less,
                "{} leximin-dominates the water-filling point ({inst:?})",
                rival.rule
            );
        }
    }
}

#[test]
fn repeated_runs_are_bit_identical() {
    for inst in desk_instances(40, 0x2EA) {
        let alloc = cleared(&inst);
        let first = blo_wf_cgs_cr(&inst, &alloc, TieBreak::LexSmallest).unwrap();
        let second = blo_wf_cgs_cr(&inst, &alloc, TieBreak::LexSmallest).unwrap();
        assert_eq!(first, second);
        assert_eq!(format!("{first:?}"), format!("{second:?}"));
    }
}
