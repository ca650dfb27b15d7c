use auction_core::{generate, solve_instance, Distribution, GeneratorConfig, Instance, TieBreak};
use auction_core::model::Allocation;

/// Deterministic stream of small instances cycling through both bundle
/// generators, 2..=6 goods, 2..=6 bidders, 1..=3 bids per bidder.
pub fn desk_instances(count: usize, base_seed: u64) -> Vec<Instance> {
    (0..count as u64)
        .map(|i| {
            let config = GeneratorConfig {
                distribution: if i % 2 == 0 {
                    Distribution::UniformBundles
                } else {
                    Distribution::DecayBundles
                },
                num_goods: 2 + (i % 5) as u32,
                num_bidders: 2 + ((i / 2) % 5) as u32,
                bids_per_bidder: 1 + (i % 3) as u32,
                seed: base_seed ^ (i.wrapping_mul(0x9e37_79b9_7f4a_7c15)),
            };
            generate(&config).expect("stream configs are valid")
        })
        .collect()
}

#[allow(dead_code)]
pub fn cleared(inst: &Instance) -> Allocation {
    solve_instance(inst, TieBreak::LexSmallest).allocation
}
