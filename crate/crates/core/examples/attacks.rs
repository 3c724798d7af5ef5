//! What each adversary submits in a single round.
//!
//! ```text
//! cargo run --example attacks
//! ```

use fedstpa::attack::{alie_updates, apply_data_attack, gaussian_byzantine_update, ipm_updates, to_submission};
use fedstpa::data::generate_blobs;
use fedstpa::vector::cosine_similarity;
use fedstpa::{AttackSpec, ParamVector};

fn main() -> fedstpa::Result<()> {
    let w_t = ParamVector::new(vec![0.5, -0.5, 1.0]);
    let honest = vec![
        ParamVector::new(vec![0.10, 0.20, -0.05]),
        ParamVector::new(vec![0.12, 0.18, -0.02]),
        ParamVector::new(vec![0.08, 0.25, -0.07]),
    ];
    let mean = ParamVector::new(
        (0..3).map(|j| honest.iter().map(|g| g.as_slice()[j]).sum::<f64>() / 3.0).collect(),
    );

    let byz = gaussian_byzantine_update(&w_t, 20.0, 1)?;
    println!("gaussian model      {:?}", byz.as_slice());

    let ipm = &ipm_updates(&honest, 1.0, 1)?[0];
    println!("ipm gradient        {:?}  cos to mean {:+.2}", ipm.as_slice(), cosine_similarity(ipm, &mean)?);
    println!("ipm submission      {:?}", to_submission(&w_t, ipm)?.as_slice());

    let alie = &alie_updates(&honest, 1.5, 1)?[0];
    println!("alie gradient       {:?}  cos to mean {:+.2}", alie.as_slice(), cosine_similarity(alie, &mean)?);

    let ds = generate_blobs(3, 2, 4, 0.3, 5)?;
    let flipped = apply_data_attack(&AttackSpec::LabelFlip { target: 0 }, &ds, 0)?;
    println!("labels              {:?} -> {:?}", ds.labels(), flipped.labels());

    let noisy = apply_data_attack(&AttackSpec::noisy_tabular(), &ds, 9)?;
    println!("first row           {:?} -> {:?}", ds.row(0), noisy.row(0));
    Ok(())
}
