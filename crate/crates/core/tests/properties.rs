use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wifi_fabmap::chowliu::{build_tree, estimate_stats, tree_joint, ChowLiuTree};
use wifi_fabmap::dataset::{export_line, parse_export_line, Record};
use wifi_fabmap::{ApRegistry, FeatureVector, GroundTruth, WifiScan};

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).filter(|(&a, _)| a > 0.0).map(|(&a, &b)| a * (a / b).ln()).sum()
}

fn joint_table(tree: &ChowLiuTree<f64>, n: usize) -> Vec<f64> {
    (0u32..1 << n)
        .map(|m| tree_joint(tree, &(0..n).map(|q| m >> q & 1 == 1).collect::<Vec<_>>()).unwrap())
        .collect()
}

/// Samples from a fixed chain-and-branch distribution over four bits,
/// learns a tree and compares KL divergences to the truth.
#[test]
fn learned_tree_is_closer_than_independence() {
    // Structure 0 -> 1 -> 2, 0 -> 3.
    let parent = [None, Some(0), Some(1), Some(0)];
    let p_root = 0.35;
    // p(z = 1 | parent = 0), p(z = 1 | parent = 1)
    let cond = [[0.0, 0.0], [0.15, 0.85], [0.8, 0.1], [0.3, 0.95]];
    let truth_of = |z: &[bool]| -> f64 {
        (0..4)
            .map(|q| {
                let p1 = match parent[q] {
                    None => p_root,
                    Some(p) => cond[q][usize::from(z[p])],
                };
                if z[q] {
                    p1
                } else {
                    1.0 - p1
                }
            })
            .product()
    };
    let truth: Vec<f64> = (0u32..16)
        .map(|m| truth_of(&(0..4).map(|q| m >> q & 1 == 1).collect::<Vec<_>>()))
        .collect();
    assert!((truth.iter().sum::<f64>() - 1.0).abs() < 1e-12);

    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples: Vec<FeatureVector> = (0..3000)
            .map(|_| {
                let mut z = [false; 4];
                for q in 0..4 {
                    let p1 = match parent[q] {
                        None => p_root,
                        Some(p) => cond[q][usize::from(z[p])],
                    };
                    z[q] = rng.gen_bool(p1);
                }
                FeatureVector::from_bits(&z)
            })
            .collect();
        let stats = estimate_stats::<f64>(&samples, 0.5).unwrap();
        let learned = build_tree(&stats).unwrap();
        let independent = ChowLiuTree::independent(stats.p1().to_vec());
        let (kl_tree, kl_indep) = (kl(&truth, &joint_table(&learned, 4)), kl(&truth, &joint_table(&independent, 4)));
        assert!(kl_tree <= kl_indep, "seed {seed}: {kl_tree} > {kl_indep}");
        let mut edges: Vec<(usize, usize)> = learned.edges().map(|(a, b)| (a.min(b), a.max(b))).collect();
        edges.sort_unstable();
        assert_eq!(edges, vec![(0, 1), (0, 3), (1, 2)], "seed {seed}");
    }
}

fn record_strategy() -> impl Strategy<Value = (Vec<Option<i32>>, (f64, f64, i32, i32))> {
    (
        prop::collection::vec(prop::option::of(-110i32..=0), 1..12),
        (-8000.0f64..-7000.0, 4_864_700.0f64..4_865_100.0, 0i32..5, 0i32..3),
    )
}

proptest! {
    #[test]
    fn export_line_round_trips((cells, (lon, lat, floor, building)) in record_strategy(), index in 0usize..100_000) {
        let registry = ApRegistry::new((0..cells.len()).map(|i| format!("AP-{i}"))).unwrap();
        let readings = cells
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.map(|r| (i, f64::from(r))))
            .collect();
        let record = Record {
            scan: WifiScan::new(readings, registry.len()).unwrap(),
            truth: GroundTruth { longitude: lon, latitude: lat, floor, building_id: building },
            space_id: 0,
            relative_position: 0,
            user_id: 0,
            phone_id: 0,
            timestamp: 0,
        };
        let parsed = parse_export_line(&export_line(index, &record, &registry)).unwrap();
        prop_assert_eq!(parsed.index, index);
        prop_assert_eq!(parsed.truth, record.truth);
        let expected: Vec<(String, f64)> = record
            .scan
            .readings()
            .iter()
            .map(|&(i, r)| (registry.id(i).unwrap().to_string(), r))
            .collect();
        prop_assert_eq!(parsed.readings, expected);
    }

    #[test]
    fn feature_vector_bit_string_round_trips(bits in prop::collection::vec(any::<bool>(), 0..300)) {
        let v = FeatureVector::from_bits(&bits);
        let s = v.to_bit_string();
        prop_assert_eq!(s.len(), bits.len());
        prop_assert_eq!(FeatureVector::from_bit_string(&s).unwrap(), v);
    }
}
