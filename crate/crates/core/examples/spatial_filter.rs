//! The clustering stage on its own: 13 honest clients pushing one way and
//! 7 label-flipping clients pushing the other.
//!
//! ```text
//! cargo run --example spatial_filter
//! ```

use fedstpa::stpa::{build_affinity, spatial_filter};
use fedstpa::{ClientUpdate, ParamVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> fedstpa::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let noise = Normal::new(0.0, 0.2).unwrap();
    let w_t = ParamVector::new(vec![0.5; 8]);
    let honest_dir = [1.0, 0.5, -0.3, 0.0, 0.8, -1.0, 0.2, 0.4];

    let updates: Vec<ClientUpdate> = (0..20)
        .map(|slot| {
            let sign = if slot < 7 { -1.0 } else { 1.0 };
            let model: Vec<f64> = w_t
                .as_slice()
                .iter()
                .zip(honest_dir)
                .map(|(w, d)| w - 0.1 * (sign * d + noise.sample(&mut rng)))
                .collect();
            ClientUpdate::new(0, slot, ParamVector::new(model), 100)
        })
        .collect();

    let aff = build_affinity(&w_t, &updates)?;
    println!("s[7][8] = {:.3} (honest, honest)", aff.get(7, 8));
    println!("s[0][1] = {:.3} (flipped, flipped)", aff.get(0, 1));
    println!("s[0][7] = {:.3} (flipped, honest)", aff.get(0, 7));

    let part = spatial_filter(&w_t, &updates, 0.02)?;
    println!("clusters: {:?} | {:?}", part.c1, part.c2);
    println!("cross similarity {:.3}", part.cross_similarity);
    println!("benign slots {:?}", part.benign);
    Ok(())
}
