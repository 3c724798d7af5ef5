//! Baseline aggregation rules on a toy round where two of seven clients
//! report wild models.
//!
//! ```text
//! cargo run --example aggregators
//! ```

use fedstpa::aggregation::{coordinate_median, fed_avg, krum, krum_scores, trimmed_mean};
use fedstpa::{ClientUpdate, ParamVector};

fn main() -> fedstpa::Result<()> {
    let models = [
        [1.0, 2.0],
        [1.1, 1.9],
        [0.9, 2.1],
        [1.0, 2.2],
        [1.2, 1.8],
        [50.0, -40.0],
        [-30.0, 60.0],
    ];
    let updates: Vec<ClientUpdate> = models
        .iter()
        .enumerate()
        .map(|(slot, m)| ClientUpdate::new(0, slot, ParamVector::new(m.to_vec()), 10))
        .collect();

    println!("fedavg        {:?}", fed_avg(&updates)?.as_slice());
    println!("median        {:?}", coordinate_median(&updates)?.as_slice());
    println!("trimmed 0.3   {:?}", trimmed_mean(&updates, 0.3)?.as_slice());
    println!("krum f=2 m=1  {:?}", krum(&updates, 2, 1)?.as_slice());
    println!("krum f=2 m=3  {:?}", krum(&updates, 2, 3)?.as_slice());

    for (slot, s) in krum_scores(&updates, 2)?.iter().enumerate() {
        println!("  score[{slot}] = {s:.3}");
    }
    Ok(())
}
