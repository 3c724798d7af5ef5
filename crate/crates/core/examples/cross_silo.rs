//! Cross-silo comparison: 20 clients, 7 of them malicious, everyone
//! participating each round.
//!
//! ```text
//! cargo run --release --example cross_silo
//! ```

use fedstpa::simulation::final_stats;
use fedstpa::{run_experiment, AggregationRule, AttackSpec, ScenarioConfig};

fn main() -> fedstpa::Result<()> {
    let attacks = [
        AttackSpec::None,
        AttackSpec::ByzantineGaussian { sigma: 20.0 },
        AttackSpec::noisy_tabular(),
        AttackSpec::LabelFlip { target: 0 },
    ];
    let rules = [
        AggregationRule::FedAvg,
        AggregationRule::CoordinateMedian,
        AggregationRule::TrimmedMean { gamma: 0.35 },
        AggregationRule::Krum { f: 7, m: 1 },
        AggregationRule::Stpa,
    ];
    print!("{:<18}", "");
    for a in &attacks {
        print!("{:>20}", a.name());
    }
    println!();
    for rule in &rules {
        print!("{:<18}", rule.name());
        for attack in &attacks {
            let cfg = ScenarioConfig::cross_silo(rule.clone(), attack.clone(), 1);
            let logs = run_experiment(&cfg)?;
            let (mean, std) = final_stats(&logs, 10).unwrap();
            print!("{:>20}", format!("{mean:.2} ± {std:.2}"));
        }
        println!();
    }
    Ok(())
}
