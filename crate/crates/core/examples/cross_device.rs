//! Cross-device run: 100 clients, 34 malicious, 20 sampled per round.
//! Prints the per-round trace for STPA under label flipping.
//!
//! ```text
//! cargo run --release --example cross_device
//! ```

use fedstpa::simulation::final_stats;
use fedstpa::{AggregationRule, AttackSpec, Experiment, ScenarioConfig};

fn main() -> fedstpa::Result<()> {
    let cfg = ScenarioConfig::cross_device(AggregationRule::Stpa, AttackSpec::LabelFlip { target: 0 }, 1);
    let mut exp = Experiment::new(cfg)?;
    let logs = exp.run_with(|log| {
        if log.round % 10 == 0 {
            println!(
                "round {:3}: {} malicious of {}, kept {:2}, alpha {:+.3}, error {:.2}%",
                log.round,
                log.malicious_selected,
                log.selected.len(),
                log.benign_kept,
                log.alpha.unwrap_or(f64::NAN),
                log.test_error_pct
            );
        }
        Ok(())
    })?;
    let (mean, std) = final_stats(&logs, 30).unwrap();
    println!("last 30 rounds: {mean:.2} ± {std:.2} %");
    Ok(())
}
