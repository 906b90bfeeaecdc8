//! Property tests over cross-cutting invariants of the protocol stack.

use proptest::prelude::*;

use litechain::core::{canonical_hash, DatasetShard, Device, DetRng, ModelUpdate, Role};
use litechain::fl::{fedavg, staleness_weight};
use litechain::radio::{channel_gain, comm_rate, ChannelParams};
use litechain::secmetric::{security, Committee};

proptest! {
    // Channel gain strictly decreases with distance.
    #[test]
    fn channel_gain_monotone_in_distance(
        d1 in 1.0..2000.0f64,
        delta in 0.1..500.0f64,
        exp in 2.0..4.0f64,
    ) {
        let cp = ChannelParams { pathloss_exp: exp, ..ChannelParams::default() };
        let near = channel_gain(d1, &cp).unwrap();
        let far = channel_gain(d1 + delta, &cp).unwrap();
        prop_assert!(far < near);
    }

    // Shannon rate never decreases with more power or more bandwidth.
    #[test]
    fn comm_rate_monotone_in_power_and_bandwidth(
        power in 0.01..2.0f64,
        extra_power in 0.0..1.0f64,
        bandwidth in 1e5..1e7f64,
        extra_bw in 0.0..1e6f64,
        distance in 10.0..1000.0f64,
    ) {
        let make = |p: f64, b: f64| {
            let cp = ChannelParams { bandwidth: b, ..ChannelParams::default() };
            let a = device(0, 0.0, p);
            let z = device(1, distance, 0.2);
            comm_rate(&a, &z, &cp).unwrap()
        };
        prop_assert!(make(power + extra_power, bandwidth) >= make(power, bandwidth));
        prop_assert!(make(power, bandwidth + extra_bw) >= make(power, bandwidth));
    }

    // Staleness weights strictly decrease with age and stay in (0, s].
    #[test]
    fn staleness_weight_decays(base in 0.01..1.0f64, q in 0.1..2.0f64, age in 0u64..50) {
        let now = staleness_weight(base, q, 0, age);
        let older = staleness_weight(base, q, 0, age + 1);
        prop_assert!(older < now);
        prop_assert!(now <= base && now > 0.0);
    }

    // FedAvg stays in the coordinate-wise convex hull of its inputs.
    #[test]
    fn fedavg_convex_hull(
        vectors in prop::collection::vec(
            prop::collection::vec(-10.0..10.0f64, 3),
            1..6,
        ),
        sizes in prop::collection::vec(0.5..20.0f64, 6),
    ) {
        let inputs: Vec<(&[f64], f64)> = vectors
            .iter()
            .zip(&sizes)
            .map(|(v, &s)| (v.as_slice(), s))
            .collect();
        let avg = fedavg(&inputs).unwrap();
        for d in 0..3 {
            let lo = vectors.iter().map(|v| v[d]).fold(f64::INFINITY, f64::min);
            let hi = vectors.iter().map(|v| v[d]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(avg[d] >= lo - 1e-9 && avg[d] <= hi + 1e-9);
        }
    }

    // Raising one member's reliability never lowers committee security.
    #[test]
    fn security_monotone(
        mut rels in prop::collection::vec(0.01..0.99f64, 4..12),
        idx in 0usize..12,
        bump in 0.0..0.2f64,
    ) {
        let idx = idx % rels.len();
        let before = security(&Committee::new(rels.clone()).unwrap()).unwrap();
        rels[idx] = (rels[idx] + bump).min(1.0);
        let after = security(&Committee::new(rels).unwrap()).unwrap();
        prop_assert!(after + 1e-12 >= before);
    }

    // Serde round trip of the model update value type.
    #[test]
    fn model_update_round_trips(
        weights in prop::collection::vec(-1e6..1e6f64, 1..32),
        owner in any::<u32>(),
        round in any::<u64>(),
        steps in any::<u32>(),
    ) {
        let update = ModelUpdate::new(weights, owner, round, steps).unwrap();
        let back: ModelUpdate =
            serde_json::from_str(&serde_json::to_string(&update).unwrap()).unwrap();
        prop_assert_eq!(update, back);
    }
}

fn device(id: u32, x: f64, power: f64) -> Device {
    Device {
        id,
        position: (x, 0.0),
        compute: 1e9,
        tx_power: power,
        dataset: DatasetShard::empty(1),
        reliability: 0.9,
        reputation: 0.0,
        role: Role::Member,
    }
}

// Identifier uniqueness at desk scale: distinct random vectors never
// collide.
#[test]
fn hash_collision_check_at_desk_scale() {
    use rand::Rng;
    let mut rng = DetRng::from_seed(12345);
    let mut seen = std::collections::HashSet::with_capacity(100_000);
    for i in 0..100_000u32 {
        // Make vectors distinct by construction (a unique index element),
        // with random content alongside.
        let v = vec![
            i as f64,
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let digest = canonical_hash(&v).unwrap();
        assert!(seen.insert(digest), "collision at vector {i}");
    }
}
