//! Compares analytic gradients with central differences for both model
//! families.
//!
//! ```text
//! cargo run --example gradient_check
//! ```

use fedstpa::data::generate_blobs;
use fedstpa::model::Architecture;
use fedstpa::ParamVector;

fn check(arch: Architecture, seed: u64) -> fedstpa::Result<f64> {
    let ds = generate_blobs(arch.n_classes(), arch.n_features(), 5, 0.5, seed)?;
    let params = arch.init_params(seed);
    let analytic = arch.gradient(&params, &ds)?;
    let h = 1e-5;
    let mut p = params.into_inner();
    let mut worst: f64 = 0.0;
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + h;
        let up = arch.loss(&ParamVector::new(p.clone()), &ds)?;
        p[i] = orig - h;
        let down = arch.loss(&ParamVector::new(p.clone()), &ds)?;
        p[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic.as_slice()[i];
        worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8));
    }
    Ok(worst)
}

fn main() -> fedstpa::Result<()> {
    let linear = Architecture::Linear { n_features: 6, n_classes: 4 };
    let mlp = Architecture::Mlp { n_features: 6, hidden: 10, n_classes: 4 };
    for arch in [linear, mlp] {
        println!("{arch:?}: {} params, worst relative error {:.2e}", arch.num_params(), check(arch, 3)?);
    }
    Ok(())
}
