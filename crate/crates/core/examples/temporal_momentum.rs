//! The temporal stage: momentum forecast and the adaptive step size.
//!
//! A steady pseudo-gradient builds momentum. Two reversed rounds drag the
//! momentum around, so the round that switches back disagrees with it and
//! is discarded.
//!
//! ```text
//! cargo run --example temporal_momentum
//! ```

use fedstpa::stpa::{stpa_round, StpaConfig};
use fedstpa::{ClientUpdate, MomentumState, ParamVector};

fn main() -> fedstpa::Result<()> {
    let cfg = StpaConfig::default();
    let mut w = ParamVector::new(vec![0.0, 0.0]);
    let mut state = MomentumState::new(2);

    for t in 0..8 {
        // every client steps +x, except rounds 5 and 6 which step hard -x
        let step = if t == 5 || t == 6 { [-3.0, 0.0] } else { [1.0, 0.2] };
        let model = ParamVector::new(vec![w.as_slice()[0] + step[0], w.as_slice()[1] + step[1]]);
        let updates: Vec<ClientUpdate> = (0..5).map(|s| ClientUpdate::new(t, s, model.clone(), 1)).collect();

        let (out, next) = stpa_round(&w, &updates, &state, &cfg)?;
        println!(
            "round {t}: alpha {:+.3}  eta {:.3}  discarded {:5}  v = {:?}  w = {:?}",
            out.alpha,
            out.eta,
            out.discarded,
            next.v.as_slice(),
            out.new_model.as_slice()
        );
        w = out.new_model;
        state = next;
    }
    Ok(())
}
