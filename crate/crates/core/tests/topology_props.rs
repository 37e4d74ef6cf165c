mod common;

use netcomm::topology::{
    generate, graph_stats, sample_pair, sample_partner, SocialNetwork, TopologyKind, TopologySpec,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn spec_strategy() -> impl Strategy<Value = TopologySpec> {
    (0..4usize, 3..=20usize, 0.0..=1.0f64).prop_map(|(k, n, p)| match k {
        0 => TopologySpec::ring(n),
        1 => TopologySpec::clique(n),
        // low densities on tiny graphs exhaust the rejection budget
        2 => TopologySpec::random(n, 0.3 + 0.7 * p),
        _ => TopologySpec::small_world(n, p),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn generated_networks_are_well_formed(spec in spec_strategy(), seed in any::<u64>()) {
        let net = generate(&spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(common::check_network(&spec, &net), Ok(()));
    }

    #[test]
    fn dense_random_is_the_clique(n in 3..=20usize, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let random = generate(&TopologySpec::random(n, 1.0), &mut rng).unwrap();
        let clique = generate(&TopologySpec::clique(n), &mut rng).unwrap();
        prop_assert_eq!(random, clique);
    }

    #[test]
    fn global_edges_survive_ring_rotation(
        n in 3..=20usize, p in 0.0..=1.0f64, shift in 0..20usize, seed in any::<u64>()
    ) {
        let net = generate(&TopologySpec::small_world(n, p), &mut ChaCha8Rng::seed_from_u64(seed))
            .unwrap();
        let rotated = SocialNetwork::from_edges(
            n,
            net.edges().iter().map(|&(a, b)| ((a + shift) % n, (b + shift) % n)),
        )
        .unwrap();
        let (s, r) = (graph_stats(&net), graph_stats(&rotated));
        prop_assert_eq!(s.n_global_edges, r.n_global_edges);
        prop_assert!((s.degree_variance - r.degree_variance).abs() < 1e-12);
    }

    #[test]
    fn sampled_pairs_are_adjacent(spec in spec_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = generate(&spec, &mut rng).unwrap();
        for _ in 0..50 {
            let (a, b) = sample_pair(&net, &mut rng);
            prop_assert!(a != b && net.are_adjacent(a, b));
        }
    }
}

#[test]
fn sparse_random_average_degree() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let spec = TopologySpec::random(10, 0.2);
    let total: f64 = (0..1000)
        .map(|_| graph_stats(&generate(&spec, &mut rng).unwrap()).avg_degree)
        .sum();
    let mean = total / 1000.0;
    assert!((1.8..=2.3).contains(&mean), "mean degree {mean}");
}

#[test]
fn ring_partners_are_equally_likely() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let net = generate(&TopologySpec::ring(10), &mut rng).unwrap();
    let draws = 100_000;
    let left = (0..draws)
        .filter(|_| sample_partner(&net, 4, &mut rng) == 3)
        .count();
    let freq = left as f64 / draws as f64;
    assert!((freq - 0.5).abs() < 0.01, "left partner frequency {freq}");
}

#[test]
fn kinds_round_trip_through_text() {
    for kind in [
        TopologyKind::Ring,
        TopologyKind::Clique,
        TopologyKind::Random,
        TopologyKind::SmallWorld,
    ] {
        assert_eq!(kind.as_str().parse::<TopologyKind>().unwrap(), kind);
    }
}
