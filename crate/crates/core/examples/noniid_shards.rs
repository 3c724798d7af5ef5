//! Non-IID shard partitioning: label-sorted shards dealt two per client,
//! then a short STPA run on that split.
//!
//! ```text
//! cargo run --release --example noniid_shards
//! ```

use fedstpa::data::{generate_blobs, partition_noniid_shards};
use fedstpa::simulation::{final_stats, PartitionConfig};
use fedstpa::{run_experiment, AggregationRule, AttackSpec, ScenarioConfig};

fn main() -> fedstpa::Result<()> {
    let ds = generate_blobs(10, 20, 200, 0.2, 4)?;
    let plan = partition_noniid_shards(&ds, 100, 2, 10, 4)?;
    for (client, rows) in plan.assignments.iter().take(5).enumerate() {
        let mut labels: Vec<usize> = rows.iter().map(|&i| ds.labels()[i]).collect();
        labels.dedup();
        println!("client {client}: {} rows, labels {labels:?}", rows.len());
    }

    let mut cfg = ScenarioConfig::cross_device(AggregationRule::Stpa, AttackSpec::ByzantineGaussian { sigma: 20.0 }, 4);
    cfg.partition = PartitionConfig::NoniidShards { shards_per_client: 2, shard_size: 10 };
    let logs = run_experiment(&cfg)?;
    let (mean, std) = final_stats(&logs, 10).unwrap();
    println!("stpa, gaussian attack, non-iid: {mean:.2} ± {std:.2} %");
    Ok(())
}
