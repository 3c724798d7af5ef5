//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any failed.

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use fedstpa::aggregation::{coordinate_median, krum_select, trim_count, trimmed_mean};
use fedstpa::data::LabeledDataset;
use fedstpa::model::Architecture;
use fedstpa::simulation::{final_stats, run_experiment, select_clients, ScenarioConfig};
use fedstpa::stpa::{bipartition, build_affinity, momentum_step, split_decision, MomentumState};
use fedstpa::vector::{ClientUpdate, ParamVector};
use fedstpa::{AggregationRule, AttackSpec};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const EXPERIMENT_SEED: u64 = 1;

type Outcome = Result<String, String>;
type Criterion = fn() -> Outcome;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s as f64, || {
        format!("took {:.1}s, limit {limit_s}s", elapsed.as_secs_f64())
    })
}

fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn updates_from(rows: &[Vec<f64>]) -> Vec<ClientUpdate> {
    rows.iter()
        .enumerate()
        .map(|(slot, r)| ClientUpdate::new(0, slot, ParamVector::new(r.clone()), 1))
        .collect()
}

fn ulps(a: f64, b: f64) -> u64 {
    if a == b {
        return 0;
    }
    let key = |x: f64| {
        let bits = x.to_bits() as i64;
        if bits < 0 { i64::MIN - bits } else { bits }
    };
    key(a).abs_diff(key(b))
}

fn column(rows: &[Vec<f64>], j: usize) -> Vec<f64> {
    let mut c: Vec<f64> = rows.iter().map(|r| r[j]).collect();
    c.sort_by(f64::total_cmp);
    c
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_ulps = 0;
    for inst in 0..200 {
        let n = rng.random_range(3..=25);
        let dim = rng.random_range(1..=50);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| gaussian_vec(&mut rng, dim)).collect();
        let ups = updates_from(&rows);

        let med = coordinate_median(&ups).map_err(|e| e.to_string())?;
        for j in 0..dim {
            let c = column(&rows, j);
            let want = if n % 2 == 1 { c[n / 2] } else { (c[n / 2 - 1] + c[n / 2]) / 2.0 };
            let got = med.as_slice()[j];
            if n % 2 == 1 {
                ensure(got.to_bits() == want.to_bits(), || format!("instance {inst}: median coord {j}"))?;
            } else {
                let u = ulps(got, want);
                worst_ulps = worst_ulps.max(u);
                ensure(u <= 1, || format!("instance {inst}: median coord {j} off by {u} ulp"))?;
            }
        }

        let gamma = rng.random_range(0.0..0.5);
        let k = trim_count(n, gamma);
        if n > 2 * k {
            let tm = trimmed_mean(&ups, gamma).map_err(|e| e.to_string())?;
            for j in 0..dim {
                let c = column(&rows, j);
                let kept = &c[k..n - k];
                let want = kept.iter().sum::<f64>() / kept.len() as f64;
                let u = ulps(tm.as_slice()[j], want);
                worst_ulps = worst_ulps.max(u);
                ensure(u <= 1, || format!("instance {inst}: trimmed mean coord {j} off by {u} ulp"))?;
            }
        }

        // exhaustive score oracle
        if n >= 3 {
            let f = rng.random_range(0..=n - 3);
            let m = rng.random_range(1..=n - f - 2);
            let dist = |a: &[f64], b: &[f64]| {
                a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
            };
            let mut scores = Vec::with_capacity(n);
            for i in 0..n {
                let mut d: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| dist(&rows[i], &rows[j])).collect();
                d.sort_by(f64::total_cmp);
                scores.push(d[..n - f - 2].iter().sum::<f64>());
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
            let mut want: Vec<usize> = order[..m].to_vec();
            want.sort_unstable();
            let mut got = krum_select(&ups, f, m).map_err(|e| e.to_string())?;
            got.sort_unstable();
            ensure(got == want, || format!("instance {inst}: krum selected {got:?}, oracle {want:?}"))?;
        }
    }
    within(start.elapsed(), 10)?;
    Ok(format!("200 instances, worst mean deviation {worst_ulps} ulp, {:.2}s", start.elapsed().as_secs_f64()))
}

fn random_dataset(rng: &mut ChaCha8Rng, n: usize, d: usize, c: usize) -> LabeledDataset {
    let features: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
    LabeledDataset::new(features, labels, d, c).unwrap()
}

fn gradient_check(arch: Architecture, rng: &mut ChaCha8Rng, points: usize) -> Result<f64, String> {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for p in 0..points {
        let ds = random_dataset(rng, 8, arch.n_features(), arch.n_classes());
        let params = ParamVector::new(gaussian_vec(rng, arch.num_params()).iter().map(|v| 0.5 * v).collect());
        let analytic = arch.gradient(&params, &ds).map_err(|e| e.to_string())?;
        let mut numeric = vec![0.0; params.dim()];
        let mut probe = params.clone().into_inner();
        for (i, slot) in numeric.iter_mut().enumerate() {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = arch.loss(&ParamVector::new(probe.clone()), &ds).unwrap();
            probe[i] = orig - h;
            let down = arch.loss(&ParamVector::new(probe.clone()), &ds).unwrap();
            probe[i] = orig;
            *slot = (up - down) / (2.0 * h);
        }
        let diff: f64 = analytic.as_slice().iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = analytic.norm().max(numeric.iter().map(|v| v * v).sum::<f64>().sqrt());
        let rel = if scale == 0.0 { diff } else { diff / scale };
        worst = worst.max(rel);
        ensure(rel < 1e-5, || format!("{arch:?} point {p}: relative error {rel:.3e}"))?;
    }
    Ok(worst)
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let lin = gradient_check(Architecture::Linear { n_features: 6, n_classes: 4 }, &mut rng, 25)?;
    let mlp = gradient_check(Architecture::Mlp { n_features: 5, hidden: 7, n_classes: 3 }, &mut rng, 25)?;
    within(start.elapsed(), 30)?;
    Ok(format!("25 points each, worst relative error linear {lin:.1e}, mlp {mlp:.1e}"))
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (n, big, dim) = (20usize, 13usize, 40usize);
    let mut recovered = 0;
    let mut instances = 0;
    while instances < 100 {
        let u = gaussian_vec(&mut rng, dim);
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        let u: Vec<f64> = u.iter().map(|v| v / norm).collect();
        let mut slots: Vec<usize> = (0..n).collect();
        slots.shuffle(&mut rng);
        let majority: Vec<usize> = slots[..big].to_vec();
        let mut rows = vec![Vec::new(); n];
        for (rank, &slot) in slots.iter().enumerate() {
            let sign = if rank < big { 1.0 } else { -1.0 };
            let noise = gaussian_vec(&mut rng, dim);
            rows[slot] = u.iter().zip(&noise).map(|(a, z)| sign * a + 0.05 * z).collect();
        }
        // updates are w_t - w_k, so submit the negated directions against w_t = 0
        let models: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
        let ups = updates_from(&models);
        let aff = build_affinity(&ParamVector::zeros(dim), &ups).map_err(|e| e.to_string())?;
        let planted = (0..n).all(|i| {
            (0..n).all(|j| {
                let same = majority.contains(&i) == majority.contains(&j);
                if same { aff.get(i, j) >= 0.8 } else { aff.get(i, j) <= -0.3 }
            })
        });
        if !planted {
            continue;
        }
        instances += 1;
        let (c1, c2) = bipartition(&aff).map_err(|e| e.to_string())?;
        let mut benign = split_decision(&aff, &c1, &c2, 0.02);
        benign.sort_unstable();
        let mut want = majority.clone();
        want.sort_unstable();
        if benign == want {
            recovered += 1;
        }
    }
    ensure(recovered == 100, || format!("recovered {recovered}/100"))?;
    within(start.elapsed(), 5)?;
    Ok(format!("recovered {recovered}/100 planted 13/7 splits"))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let dw = ParamVector::new(gaussian_vec(&mut rng, 16));
    let mut state = MomentumState::new(16);
    let mut worst: f64 = 0.0;
    for t in 1..=10 {
        state = momentum_step(&state, &dw, 0.5).map_err(|e| e.to_string())?;
        let factor = 1.0 - 0.5f64.powi(t);
        for (v, d) in state.v.as_slice().iter().zip(dw.as_slice()) {
            let err = (v - factor * d).abs();
            worst = worst.max(err);
            ensure(err <= 1e-12, || format!("T = {t}: error {err:.3e}"))?;
        }
    }
    Ok(format!("T = 1..10, worst deviation {worst:.1e}"))
}

/// Presets use the default blobs (10 classes, dim 20, 200 training rows per class).
fn silo(rule: AggregationRule, attack: AttackSpec) -> ScenarioConfig {
    ScenarioConfig::cross_silo(rule, attack, EXPERIMENT_SEED)
}

fn device(rule: AggregationRule, attack: AttackSpec) -> ScenarioConfig {
    ScenarioConfig::cross_device(rule, attack, EXPERIMENT_SEED)
}

/// (mean, std) of the test error over the last `window` rounds.
fn final_error(cfg: &ScenarioConfig, window: usize) -> Result<(f64, f64), String> {
    let logs = run_experiment(cfg).map_err(|e| e.to_string())?;
    final_stats(&logs, window).ok_or_else(|| "no rounds".to_string())
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let flip = AttackSpec::LabelFlip { target: 0 };
    let gauss = AttackSpec::ByzantineGaussian { sigma: 20.0 };
    let base = final_error(&silo(AggregationRule::FedAvg, AttackSpec::None), 10)?.0;
    let stpa_flip = final_error(&silo(AggregationRule::Stpa, flip), 10)?.0;
    let avg_gauss = final_error(&silo(AggregationRule::FedAvg, gauss.clone()), 10)?.0;
    let stpa_gauss = final_error(&silo(AggregationRule::Stpa, gauss), 10)?.0;
    let detail = format!(
        "baseline {base:.2}%, stpa/label-flip {stpa_flip:.2}%, fedavg/gaussian {avg_gauss:.2}%, stpa/gaussian {stpa_gauss:.2}%"
    );
    ensure(stpa_flip <= base + 3.0, || format!("(a) failed: {detail}"))?;
    ensure(avg_gauss >= base + 10.0, || format!("(b) failed: {detail}"))?;
    ensure((stpa_gauss - base).abs() <= 3.0, || format!("(c) failed: {detail}"))?;
    within(start.elapsed(), 300)?;
    Ok(detail)
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let flip = AttackSpec::LabelFlip { target: 0 };
    let base = final_error(&device(AggregationRule::FedAvg, AttackSpec::None), 10)?.0;
    let stpa = final_error(&device(AggregationRule::Stpa, flip.clone()), 10)?.0;
    let stpa_std = final_error(&device(AggregationRule::Stpa, flip.clone()), 30)?.1;
    let avg_std = final_error(&device(AggregationRule::FedAvg, flip), 30)?.1;
    let detail = format!(
        "baseline {base:.2}%, stpa/label-flip {stpa:.2}%, last-30 std stpa {stpa_std:.3} vs fedavg {avg_std:.3}"
    );
    ensure((stpa - base).abs() <= 4.0, || format!("error gap: {detail}"))?;
    ensure(stpa_std < avg_std, || format!("std: {detail}"))?;
    within(start.elapsed(), 600)?;
    Ok(detail)
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let ipm = AttackSpec::Ipm { epsilon: 1.0 };
    let alie = AttackSpec::Alie { epsilon: 1.5 };
    let base = final_error(&silo(AggregationRule::FedAvg, AttackSpec::None), 10)?.0;
    let stpa_ipm = final_error(&silo(AggregationRule::Stpa, ipm), 10)?.0;
    let stpa_alie = final_error(&silo(AggregationRule::Stpa, alie.clone()), 10)?.0;
    let krum_alie = final_error(&silo(AggregationRule::Krum { f: 7, m: 1 }, alie), 10)?.0;
    let detail = format!(
        "baseline {base:.2}%, stpa/ipm {stpa_ipm:.2}%, stpa/alie {stpa_alie:.2}%, krum/alie {krum_alie:.2}%"
    );
    ensure((stpa_ipm - base).abs() <= 4.0, || format!("stpa/ipm: {detail}"))?;
    ensure((stpa_alie - base).abs() <= 4.0, || format!("stpa/alie: {detail}"))?;
    ensure(krum_alie >= base + 10.0, || format!("krum/alie: {detail}"))?;
    within(start.elapsed(), 600)?;
    Ok(detail)
}

fn run_cli(config: &Path, out: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_fedstpa"))
        .args(["run", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .env_remove("BB_SEED")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(status.status.success(), || String::from_utf8_lossy(&status.stderr).into_owned())
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let configs = [
        r#"{"scenario":"cross_device","n_clients":30,"n_malicious":10,"clients_per_round":8,"rounds":12,
            "attack":{"kind":"label_flip"},"rule":{"kind":"stpa"},"seed":5,
            "data":{"kind":"blobs","n_classes":4,"dim":6,"samples_per_class":60,"test_per_class":20,"spread":0.5}}"#,
        r#"{"scenario":"cross_silo","n_clients":10,"n_malicious":3,"rounds":8,
            "attack":{"kind":"alie"},"rule":{"kind":"krum","f":3,"m":2},"seed":9,
            "model":{"kind":"mlp","hidden":6},
            "data":{"kind":"blobs","n_classes":3,"dim":5,"samples_per_class":40,"test_per_class":10,"spread":0.5}}"#,
    ];
    for (i, text) in configs.iter().enumerate() {
        let cfg = dir.path().join(format!("c{i}.json"));
        std::fs::write(&cfg, text).map_err(|e| e.to_string())?;
        let (a, b) = (dir.path().join(format!("a{i}")), dir.path().join(format!("b{i}")));
        run_cli(&cfg, &a)?;
        run_cli(&cfg, &b)?;
        for name in ["rounds.jsonl", "summary.csv"] {
            let x = std::fs::read(a.join(name)).map_err(|e| e.to_string())?;
            let y = std::fs::read(b.join(name)).map_err(|e| e.to_string())?;
            ensure(!x.is_empty() && x == y, || format!("config {i}: {name} differs between runs"))?;
        }
    }
    Ok("2 configs, JSONL and CSV byte-identical across reruns".into())
}

fn criterion_9() -> Outcome {
    let cfg = ScenarioConfig::cross_device(AggregationRule::FedAvg, AttackSpec::None, 17);
    let total: usize = (0..1000)
        .map(|r| select_clients(r, &cfg).iter().filter(|&&id| id < cfg.n_malicious).count())
        .sum();
    let mean = total as f64 / 1000.0;
    ensure((6.6..=7.0).contains(&mean), || format!("mean malicious per round {mean:.3}"))?;
    Ok(format!("mean malicious per round {mean:.3}"))
}

fn main() {
    let criteria: [(&str, Criterion); 9] = [
        ("aggregator oracle equivalence", criterion_1),
        ("gradient correctness", criterion_2),
        ("clustering recovery", criterion_3),
        ("momentum closed form", criterion_4),
        ("cross-silo robustness", criterion_5),
        ("cross-device robustness", criterion_6),
        ("time-coupled attacks", criterion_7),
        ("determinism", criterion_8),
        ("selection statistics", criterion_9),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let label = format!("criterion {} ({name})", i + 1);
        if !filter.is_empty() && !filter.iter().any(|p| label.contains(p.as_str())) {
            continue;
        }
        let result = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match result {
            Ok(detail) => println!("{label}: PASS - {detail}"),
            Err(detail) => {
                failed += 1;
                println!("{label}: FAIL - {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
