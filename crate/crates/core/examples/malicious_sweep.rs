//! Final error as the malicious fraction grows, for each aggregation rule.
//!
//! ```text
//! cargo run --release --example malicious_sweep
//! ```

use fedstpa::cli::sweep_point;
use fedstpa::simulation::final_stats;
use fedstpa::{run_experiment, AggregationRule, AttackSpec, ScenarioConfig};

fn main() -> fedstpa::Result<()> {
    let fractions = [0.05, 0.1, 0.2, 0.34];
    let rules = [
        AggregationRule::FedAvg,
        AggregationRule::CoordinateMedian,
        AggregationRule::Krum { f: 7, m: 1 },
        AggregationRule::Stpa,
    ];
    for rule in rules {
        let base = ScenarioConfig::cross_silo(rule.clone(), AttackSpec::LabelFlip { target: 0 }, 2);
        print!("{:<18}", rule.name());
        for f in fractions {
            let logs = run_experiment(&sweep_point(&base, f))?;
            let (mean, _) = final_stats(&logs, 10).unwrap();
            print!("  {f:>4}: {mean:6.2}%");
        }
        println!();
    }
    Ok(())
}
