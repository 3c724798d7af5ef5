//! Spatial stage against an exhaustive search over every bipartition.

use fedstpa::attack::gaussian_byzantine_update;
use fedstpa::stpa::{build_affinity, spatial_filter, AffinityMatrix};
use fedstpa::vector::{ClientUpdate, ParamVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const DIM: usize = 50_000;
const N: usize = 20;
const BYZANTINE: usize = 7;
const S_T: f64 = 0.02;

fn instance() -> (ParamVector, Vec<ClientUpdate>) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let w_t = ParamVector::new((0..DIM).map(|_| 0.1 * normal()).collect());
    let direction: Vec<f64> = (0..DIM).map(|_| normal()).collect();
    let mut updates = Vec::with_capacity(N);
    for slot in 0..N {
        let model = if slot < BYZANTINE {
            gaussian_byzantine_update(&w_t, 20.0, 7 + slot as u64).unwrap()
        } else {
            let m = w_t
                .as_slice()
                .iter()
                .zip(&direction)
                .map(|(w, d)| w - 0.01 * (d + 0.1 * normal()))
                .collect();
            ParamVector::new(m)
        };
        updates.push(ClientUpdate::new(0, slot, model, 1));
    }
    (w_t, updates)
}

/// Max cross-similarity of the split encoded by `mask` (bit i set: slot i in
/// the second side; slot 0 always in the first).
fn cross_of(a: &AffinityMatrix, mask: u32) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for i in 0..N {
        for j in (i + 1)..N {
            if (mask >> i & 1) != (mask >> j & 1) {
                best = best.max(a.get(i, j));
            }
        }
    }
    best
}

fn side_sizes(mask: u32) -> (usize, usize) {
    let second = mask.count_ones() as usize;
    (N - second, second)
}

#[test]
fn gaussian_byzantine_split_against_exhaustive_bipartitions() {
    let (w_t, updates) = instance();
    let a = build_affinity(&w_t, &updates).unwrap();
    let part = spatial_filter(&w_t, &updates, S_T).unwrap();

    // the split fires and never drops an honest client
    assert!(part.cross_similarity < S_T);
    assert!(part.benign.len() < N);
    assert!((BYZANTINE..N).all(|h| part.benign.contains(&h)));
    let retained = part.benign.iter().filter(|&&s| s < BYZANTINE).count();

    let honest_mask: u32 = (BYZANTINE..N).fold(0, |m, i| m | 1 << i);
    let mut best = (f64::INFINITY, 0u32);
    let mut valid_with_honest_majority = 0usize;
    let mut valid = 0usize;
    for mask in 1u32..(1 << N) {
        if mask & 1 == 1 {
            continue;
        }
        let c = cross_of(&a, mask);
        if c < best.0 {
            best = (c, mask);
        }
        if c < S_T {
            valid += 1;
            let (n1, n2) = side_sizes(mask);
            if n1 != n2 {
                let larger = if n2 > n1 { mask } else { !mask & ((1 << N) - 1) };
                if larger == honest_mask {
                    valid_with_honest_majority += 1;
                }
            }
        }
    }

    // the pipeline's split scores exactly what the search computes for it
    let pipeline_mask: u32 = part.c2.iter().fold(0, |m, &i| m | 1 << i);
    let pipeline_mask = if pipeline_mask & 1 == 1 { !pipeline_mask & ((1 << N) - 1) } else { pipeline_mask };
    assert_eq!(cross_of(&a, pipeline_mask), part.cross_similarity);
    assert!(best.0 <= part.cross_similarity);
    // exactly one split isolates all of the byzantine slots, and it is valid
    assert_eq!(valid_with_honest_majority, 1);
    assert!(valid > 1);
    println!(
        "splits below s_t: {valid}; min-max-cross split {:#07x} at {:.5}; pipeline split at {:.5} keeps {retained} byzantine",
        best.1, best.0, part.cross_similarity
    );
}
