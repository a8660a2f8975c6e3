//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Runs as a plain binary (no test harness)
//! so the report is always visible:
//!
//! ```text
//! cargo test -p memprop --test acceptance
//! ```
//!
//! Pass criterion numbers as arguments to run a subset, e.g. `-- 1 3`.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use memprop::data::{
    parse_idx, read_evt0, toy_two_class, DataError, EventSample, EventShape, IdxTensor, ImageDataset,
};
use memprop::device::{
    default_schedule, mif_step, rk4_reference, simulate_neuron, AlphaParams, Integrator, MifParams,
    MifState, StepConfig,
};
use memprop::hwcost::{estimate, HwConfig};
use memprop::network::{count_spikes, CrossbarLayer, ModelConfig, MsnnModel, Stimulus};
use memprop::train::{
    evaluate, gradcheck_model, loss_nll_membrane, sample_gradient, train, train_with, Checkpoint,
    Readout, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within_time(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(
        elapsed < limit,
        format!("took {:.2?}, limit {:.0?}", elapsed, limit),
    )
}

fn solver_fidelity() -> Check {
    let start = Instant::now();
    let p = MifParams::default();
    let a = AlphaParams::default();
    let cfg = StepConfig::default();
    let sched = default_schedule();
    let ours = simulate_neuron(&p, &a, &sched, 1000, &cfg).map_err(|e| e.to_string())?;
    let rk4 = rk4_reference(&p, &a, &sched, 1000, &cfg, cfg.dt / 10.0).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let th = p.v_th;
    let col = |v: &[f64]| v.iter().map(|&x| vec![x]).collect::<Vec<_>>();
    let n_ours = count_spikes(&col(&ours.v), th)[0];
    let n_rk4 = count_spikes(&col(&rk4.v), th)[0];
    let dv = ours
        .v
        .iter()
        .zip(&rk4.v)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    ensure(n_ours >= 1, "no spike in the production trace")?;
    ensure(n_ours == n_rk4, format!("spikes {n_ours} vs rk4 {n_rk4}"))?;
    ensure(dv < 2e-3, format!("max|dv| = {dv:.3e} V"))?;
    within_time(elapsed, Duration::from_secs(1))?;
    Ok(format!(
        "spikes {n_ours} vs {n_rk4}, max|dv| = {:.3} mV, {:.0?}",
        dv * 1e3,
        elapsed
    ))
}

fn gradient_correctness() -> Check {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut min_norm = f64::INFINITY;
    for seed in 0..10u64 {
        let model = MsnnModel::new(ModelConfig::new(vec![8, 4, 3]), seed).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..8).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let label = rng.gen_range(0..3);
        let stim = Stimulus::Static(&x);
        let r = gradcheck_model(&model, &stim, label, 20, 100.0, 1e-6, 1e-4).map_err(|e| e.to_string())?;
        // Guard against a vacuous pass on vanishing gradients.
        let (_, g) = sample_gradient(&model, &stim, label, 20, 100.0).map_err(|e| e.to_string())?;
        let norm = g.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        min_norm = min_norm.min(norm);
        worst = worst.max(r.max_rel_err);
        checked += r.checked;
    }
    let elapsed = start.elapsed();
    ensure(checked == 10 * (8 * 4 + 4 * 3), format!("checked {checked} weights"))?;
    ensure(min_norm > 1e-6, format!("gradient norm {min_norm:.3e} too small to test"))?;
    ensure(worst < 1e-4, format!("max rel err {worst:.3e}"))?;
    within_time(elapsed, Duration::from_secs(60))?;
    Ok(format!(
        "10 seeds, {checked} weights, max rel err {worst:.2e}, min |grad| {min_norm:.2e}, {:.1?}",
        elapsed
    ))
}

fn hardware_numbers() -> Check {
    let start = Instant::now();
    let r = estimate(&HwConfig::default()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let targets = [
        ("per-tile power uW", r.power.per_tile * 1e6, 21.45),
        ("power ours mW", r.power.total.ours * 1e3, 0.21),
        ("power mixed mW", r.power.total.mixed * 1e3, 8.21),
        ("power ratio", r.power.total.improvement(), 38.30),
        ("area ratio", r.area.improvement(), 5.33),
        ("latency ours ms", r.latency.total.ours * 1e3, 0.64),
        ("latency mixed ms", r.latency.total.mixed * 1e3, 7.44),
        ("latency ratio", r.latency.total.improvement(), 11.63),
    ];
    // Reference figures are printed to two decimals; a value that rounds to
    // the printed figure also agrees (0.2145 mW prints as 0.21).
    let mut rounded = Vec::new();
    for (name, got, want) in targets {
        let rel = (got - want).abs() / want;
        let printed = (got * 100.0).round() / 100.0 == want;
        ensure(
            rel < 0.01 || printed,
            format!("{name}: {got:.4} vs {want} ({:.2}%)", rel * 100.0),
        )?;
        if rel >= 0.01 {
            rounded.push(format!("{name} {got:.4} rounds to {want}"));
        }
    }
    within_time(elapsed, Duration::from_secs(1))?;
    let mut detail = format!(
        "tile {:.2} uW, power {:.2}x, area {:.2}x, latency {:.2}x",
        r.power.per_tile * 1e6,
        r.power.total.improvement(),
        r.area.improvement(),
        r.latency.total.improvement()
    );
    if !rounded.is_empty() {
        detail = format!("{detail} ({})", rounded.join(", "));
    }
    Ok(detail)
}

fn mnist_dir() -> PathBuf {
    std::env::var_os("MSNN_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset"))
}

fn desk_training() -> Check {
    let start = Instant::now();
    let dir = mnist_dir();
    let train_set = ImageDataset::load(&dir, "train").map_err(|e| e.to_string())?;
    let test_set = ImageDataset::load(&dir, "t10k").map_err(|e| e.to_string())?;
    ensure(
        train_set.len() == 2000 && test_set.len() == 1000,
        format!("expected 2000/1000 samples, found {}/{}", train_set.len(), test_set.len()),
    )?;
    let mut model = MsnnModel::new(ModelConfig::new(vec![784, 100, 10]), 0).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        epochs: 10,
        batch_size: 128,
        lr: 1e-4,
        steps: 100,
        seed: 0,
        workers: 0,
        ..TrainConfig::default()
    };
    let outcome = train_with(&mut model, &train_set, &cfg, |r| {
        eprintln!(
            "  [4] epoch {} loss {} val {:.3}",
            r.epoch,
            r.train_loss.map_or("-".into(), |l| format!("{l:.2}")),
            r.val_acc
        );
    })
    .map_err(|e| e.to_string())?;
    let test = evaluate(&model, &test_set, 100, Readout::Membrane).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let loss = |e: usize| {
        outcome
            .history
            .iter()
            .find(|r| r.epoch == e)
            .and_then(|r| r.train_loss)
    };
    let (l1, l5) = (loss(1), loss(5));
    ensure(
        matches!((l1, l5), (Some(a), Some(b)) if b < a),
        format!("epoch-1 loss {l1:?}, epoch-5 loss {l5:?}"),
    )?;
    ensure(test.accuracy >= 0.75, format!("test accuracy {:.3}", test.accuracy))?;
    within_time(elapsed, Duration::from_secs(30 * 60))?;
    Ok(format!(
        "test acc {:.3} (best epoch {}), loss {:.1} -> {:.1} (epoch 1 -> 5), {:.0?}",
        test.accuracy,
        outcome.best_epoch,
        l1.unwrap_or(f64::NAN),
        l5.unwrap_or(f64::NAN),
        elapsed
    ))
}

fn toy_separability() -> Check {
    let start = Instant::now();
    let data = toy_two_class(40, 8, 0);
    let run = || -> Result<(MsnnModel, f64, usize), String> {
        let mut model = MsnnModel::new(ModelConfig::new(vec![64, 16, 2]), 0).map_err(|e| e.to_string())?;
        let cfg = TrainConfig {
            epochs: 20,
            batch_size: 8,
            lr: 1e-3,
            steps: 100,
            eval_fraction: 0.0,
            patience: 20,
            ..TrainConfig::default()
        };
        let out = train(&mut model, &data, &cfg).map_err(|e| e.to_string())?;
        let acc = evaluate(&model, &data, 100, Readout::Membrane).map_err(|e| e.to_string())?.accuracy;
        Ok((model, acc, out.best_epoch))
    };
    let (m1, acc, best) = run()?;
    let (m2, acc2, _) = run()?;
    let elapsed = start.elapsed();
    ensure(acc == 1.0, format!("train accuracy {acc:.3}"))?;
    ensure(m1 == m2 && acc == acc2, "two runs with the same seed differ")?;
    within_time(elapsed, Duration::from_secs(60))?;
    Ok(format!("train acc {acc:.3} by epoch {best}, reproducible, {:.1?}", elapsed))
}

fn property_suites() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    // Crossbar against an explicit double loop.
    for _ in 0..1000 {
        let w: Vec<f64> = (0..15).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let v: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.1..0.1)).collect();
        let att = rng.gen_range(1e-6..10.0);
        let got = CrossbarLayer::new(5, 3, w.clone(), att).unwrap().forward(&v).unwrap();
        for n in 0..5 {
            let mut acc = 0.0;
            for i in 0..3 {
                acc += v[i] * w[n * 3 + i];
            }
            let want = att * acc;
            ensure((got[n] - want).abs() <= 1e-12 * want.abs().max(1e-12), "crossbar mismatch")?;
        }
    }

    // Device state bounds under random drive.
    let p = MifParams::default();
    let cfg = StepConfig::new(1e-5, Integrator::ExpEuler, 1);
    let mut s = MifState::initial(&p);
    for _ in 0..100_000 {
        let scale = [0.0, 1e-5, 1e-3, 1e-1][rng.gen_range(0..4)];
        s = mif_step(s, &p, scale * rng.gen_range(-1.0..1.0), &cfg).map_err(|e| e.to_string())?;
        ensure(
            (0.0..=1.0).contains(&s.x1) && (0.0..=1.0).contains(&s.x2) && s.v.is_finite(),
            format!("state left its domain: {s:?}"),
        )?;
    }

    // Permutation equivariance and scaling invariance of the forward pass.
    let mut mc = ModelConfig::new(vec![6, 5, 3]);
    mc.input_gain = 2e-4;
    mc.attenuation[1] = 1e-4;
    let model = MsnnModel::new(mc.clone(), 1).unwrap();
    let x: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..1.0)).collect();
    let stim = Stimulus::Static(&x);
    let base = model.forward(&stim, 300, false).map_err(|e| e.to_string())?;
    let perm = [2usize, 4, 0, 3, 1];
    let (w1, w2) = (model.weights()[0].to_vec(), model.weights()[1].to_vec());
    let mut p1 = vec![0.0; 30];
    let mut p2 = vec![0.0; 15];
    for (new, &old) in perm.iter().enumerate() {
        p1[new * 6..new * 6 + 6].copy_from_slice(&w1[old * 6..old * 6 + 6]);
        for o in 0..3 {
            p2[o * 5 + new] = w2[o * 5 + old];
        }
    }
    let permuted = MsnnModel::from_weights(mc.clone(), vec![p1, p2]).unwrap();
    let pout = permuted.forward(&stim, 300, false).map_err(|e| e.to_string())?;
    let pdiff = base
        .v_out
        .iter()
        .flatten()
        .zip(pout.v_out.iter().flatten())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    ensure(pdiff <= 1e-12, format!("permuted output differs by {pdiff:e}"))?;
    let mut sc = mc.clone();
    sc.attenuation[0] /= 4.0;
    let mut sw = vec![w1.clone(), w2.clone()];
    sw[0].iter_mut().for_each(|w| *w *= 4.0);
    let scaled = MsnnModel::from_weights(sc, sw).unwrap();
    ensure(
        scaled.forward(&stim, 300, false).map_err(|e| e.to_string())?.v_out == base.v_out,
        "scaled model output not bit-identical",
    )?;

    // Checkpoint round trip.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("m.msnn");
    Checkpoint::from_model(&model, None, vec![]).save(&path).map_err(|e| e.to_string())?;
    let reloaded = Checkpoint::load(&path).and_then(|c| c.to_model()).map_err(|e| e.to_string())?;
    let data = toy_two_class(10, 4, 3);
    let small = MsnnModel::new(ModelConfig::new(vec![16, 4, 2]), 2).unwrap();
    let sp = dir.path().join("s.msnn");
    Checkpoint::from_model(&small, None, vec![]).save(&sp).map_err(|e| e.to_string())?;
    let small2 = Checkpoint::load(&sp).and_then(|c| c.to_model()).map_err(|e| e.to_string())?;
    ensure(
        reloaded.forward(&stim, 300, false).map_err(|e| e.to_string())? == base
            && evaluate(&small, &data, 50, Readout::Membrane).ok()
                == evaluate(&small2, &data, 50, Readout::Membrane).ok(),
        "reloaded checkpoint evaluates differently",
    )?;

    // Uniform softmax.
    let t = 100;
    let l = loss_nll_membrane(&vec![vec![0.02; 10]; t], 4, 100.0).unwrap();
    let want = t as f64 * 10f64.ln();
    ensure((l - want).abs() < 1e-9, format!("uniform loss {l} vs {want}"))?;

    Ok("crossbar 1000x, 1e5 device steps, permutation, scaling, checkpoint, T ln 10".into())
}

fn format_round_trips() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;

    let data: Vec<u8> = (0..5 * 28 * 28).map(|_| rng.gen()).collect();
    let imgs = IdxTensor::new(vec![5, 28, 28], data).unwrap();
    let ip = dir.path().join("x-images-idx3-ubyte");
    memprop::data::write_idx(&ip, &imgs).map_err(|e| e.to_string())?;
    let raw = std::fs::read(&ip).map_err(|e| e.to_string())?;
    ensure(raw[..4] == [0, 0, 8, 3], "IDX header bytes")?;
    ensure(
        memprop::data::load_idx(&ip).map_err(|e| e.to_string())? == imgs && parse_idx(&raw).unwrap().to_bytes() == raw,
        "IDX round trip differs",
    )?;

    let mut ev = EventSample::zeros(EventShape::dvs(10));
    ev.counts.iter_mut().for_each(|c| *c = rng.gen_range(0..4));
    let ep = dir.path().join("a.evt");
    memprop::data::write_evt0(&ep, &ev).map_err(|e| e.to_string())?;
    let eraw = std::fs::read(&ep).map_err(|e| e.to_string())?;
    ensure(read_evt0(&eraw).map_err(|e| e.to_string())? == ev, "EVT0 round trip differs")?;

    let mut bad = raw.clone();
    bad[1] = 0xff;
    ensure(matches!(parse_idx(&bad), Err(DataError::BadMagic(_))), "IDX bad magic")?;
    bad = raw.clone();
    bad[2] = 0x0b;
    ensure(matches!(parse_idx(&bad), Err(DataError::UnsupportedDtype(0x0b))), "IDX dtype")?;
    ensure(
        matches!(parse_idx(&raw[..raw.len() - 3]), Err(DataError::TruncatedFile { .. })),
        "IDX truncation",
    )?;
    let mut ebad = eraw.clone();
    ebad[3] = b'1';
    ensure(matches!(read_evt0(&ebad), Err(DataError::BadMagic(_))), "EVT0 bad magic")?;
    ensure(
        matches!(read_evt0(&eraw[..100]), Err(DataError::TruncatedFile { .. })),
        "EVT0 truncation",
    )?;
    Ok("IDX and EVT0 bit-identical; BadMagic, UnsupportedDtype, TruncatedFile".into())
}

fn main() {
    let criteria: [(u32, &str, fn() -> Check); 7] = [
        (1, "solver fidelity", solver_fidelity),
        (2, "gradient correctness", gradient_correctness),
        (3, "hardware numbers", hardware_numbers),
        (4, "desk-scale MNIST training", desk_training),
        (5, "toy separability", toy_separability),
        (6, "property suites", property_suites),
        (7, "format round trips", format_round_trips),
    ];
    // `cargo test` passes harness flags such as `--nocapture`; only bare
    // numbers select criteria.
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, check) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        match check() {
            Ok(detail) => println!("criterion {n} ({name}): PASS - {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n} ({name}): FAIL - {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
