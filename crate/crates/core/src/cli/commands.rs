use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    CliError, DataArgs, DatasetKind, EvalArgs, ExportArgs, GradcheckArgs, HwcostArgs, NeuronSimArgs, Oracle, Out,
    Split, TrainArgs,
};
use crate::data::{load_events, toy_two_class, EventDataset, ImageDataset};
use crate::device::{parse_schedule, rk4_reference, simulate_neuron, DeviceConfig};
use crate::hwcost::{estimate, HwConfig};
use crate::network::{parse_architecture, rising_crossings, Encoding, ModelConfig, MsnnModel, Stimulus};
use crate::train::{
    evaluate, export_weights, gradcheck_model, train_with, Checkpoint, ExportConfig, Samples, TrainConfig,
};

const CHECKPOINT_FILE: &str = "best.msnn";
pub const TOY_SAMPLES: usize = 40;
pub const TOY_SIDE: usize = 8;

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn neuron_sim(a: &NeuronSimArgs, out: &mut Out, err: &mut Out) -> Result<(), CliError> {
    let mut cfg = match &a.params {
        Some(p) => DeviceConfig::load(p)?,
        None => DeviceConfig::default(),
    };
    if let Some(dt) = a.dt {
        cfg.dt = dt;
    }
    if let Some(i) = a.integrator {
        cfg.integrator = i;
    }
    if let Some(s) = a.substeps {
        cfg.substeps = s;
    }
    if a.oracle_substeps == 0 {
        return Err(CliError::Config("--oracle-substeps must be >= 1".into()));
    }
    let (params, alpha, step) = (cfg.mif(), cfg.alpha(), cfg.step());
    let schedule = parse_schedule(&a.spikes)?;
    let traces = simulate_neuron(&params, &alpha, &schedule, a.steps, &step)?;
    let oracle = match a.oracle {
        Oracle::None => None,
        Oracle::Rk4 => Some(rk4_reference(
            &params,
            &alpha,
            &schedule,
            a.steps,
            &step,
            step.dt / a.oracle_substeps as f64,
        )?),
    };

    let mut csv = String::from("t,v,x1,x2,I");
    if oracle.is_some() {
        csv.push_str(",v_rk4,x1_rk4,x2_rk4,I_rk4");
    }
    csv.push('\n');
    for k in 0..traces.len() {
        let _ = write!(
            csv,
            "{:e},{:e},{:e},{:e},{:e}",
            (k + 1) as f64 * step.dt,
            traces.v[k],
            traces.x1[k],
            traces.x2[k],
            traces.i[k]
        );
        if let Some(o) = &oracle {
            let _ = write!(csv, ",{:e},{:e},{:e},{:e}", o.v[k], o.x1[k], o.x2[k], o.i[k]);
        }
        csv.push('\n');
    }
    let mut summary = format!("spikes={}\n", rising_crossings(&traces.v, params.v_th));
    if let Some(o) = &oracle {
        let max_dv = traces
            .v
            .iter()
            .zip(&o.v)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let _ = writeln!(summary, "spikes_rk4={}", rising_crossings(&o.v, params.v_th));
        let _ = writeln!(summary, "max|Δv| = {max_dv:e}");
    }
    match &a.out {
        Some(path) => {
            write_file(path, &csv)?;
            write!(out, "{summary}")?;
        }
        None => {
            write!(out, "{csv}")?;
            write!(err, "{summary}")?;
        }
    }
    Ok(())
}

pub fn gradcheck(a: &GradcheckArgs, out: &mut Out) -> Result<(), CliError> {
    let layers = parse_architecture(&a.arch)?;
    if a.steps == 0 || a.seeds == 0 {
        return Err(CliError::Config("--steps and --seeds must be >= 1".into()));
    }
    let mut worst = 0.0f64;
    for seed in a.seed..a.seed + a.seeds {
        let model = MsnnModel::new(ModelConfig::new(layers.clone()), seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..layers[0]).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let label = rng.gen_range(0..model.classes());
        let r = gradcheck_model(&model, &Stimulus::Static(&x), label, a.steps, a.beta, a.eps, a.tol)?;
        writeln!(
            out,
            "seed={seed} checked={} max_rel_err={:e} worst=w{}[{}]",
            r.checked, r.max_rel_err, r.worst_leaf, r.worst_index
        )?;
        worst = worst.max(r.max_rel_err);
    }
    let pass = worst < a.tol;
    writeln!(
        out,
        "max_rel_err={worst:e} tol={:e} {}",
        a.tol,
        if pass { "PASS" } else { "FAIL" }
    )?;
    if pass {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!("gradient check failed: {worst:e} >= {:e}", a.tol)))
    }
}

/// A loaded split of any supported dataset.
pub enum Loaded {
    Images(ImageDataset),
    Events(EventDataset),
}

impl Loaded {
    pub fn samples(&self) -> &dyn Samples {
        match self {
            Loaded::Images(d) => d,
            Loaded::Events(d) => d,
        }
    }

    fn truncate(&mut self, limit: Option<usize>) {
        let Some(n) = limit else { return };
        match self {
            Loaded::Images(d) => {
                d.images.truncate(n);
                d.labels.truncate(n);
            }
            Loaded::Events(d) => {
                d.samples.truncate(n);
                d.labels.truncate(n);
                d.names.truncate(n);
            }
        }
    }
}

fn features_and_classes(kind: DatasetKind) -> (usize, usize) {
    match kind {
        DatasetKind::Mnist | DatasetKind::Fmnist => (784, 10),
        DatasetKind::Dvs => (2048, 11),
        DatasetKind::Toy => (TOY_SIDE * TOY_SIDE, 2),
    }
}

/// Load one split. Event data is read with `frames` time bins.
pub fn load_split(d: &DataArgs, split: Split, frames: usize) -> Result<Loaded, CliError> {
    let dir = || -> Result<PathBuf, CliError> {
        d.data_dir
            .clone()
            .ok_or_else(|| CliError::Config("--data-dir (or MSNN_DATA_DIR) is required".into()))
    };
    let mut loaded = match d.dataset {
        DatasetKind::Toy => {
            let seed = match split {
                Split::Train => 0,
                Split::Test => 1,
            };
            Loaded::Images(toy_two_class(TOY_SAMPLES, TOY_SIDE, seed))
        }
        DatasetKind::Mnist | DatasetKind::Fmnist => {
            let prefix = match split {
                Split::Train => "train",
                Split::Test => "t10k",
            };
            Loaded::Images(ImageDataset::load(&dir()?, prefix)?)
        }
        DatasetKind::Dvs => {
            let sub = match split {
                Split::Train => "train",
                Split::Test => "test",
            };
            Loaded::Events(load_events(&dir()?.join(sub), frames)?)
        }
    };
    loaded.truncate(d.limit);
    if loaded.samples().is_empty() {
        return Err(CliError::Data(format!("{split:?} split is empty")));
    }
    Ok(loaded)
}

fn test_split_exists(d: &DataArgs) -> bool {
    match (d.dataset, &d.data_dir) {
        (DatasetKind::Toy, _) => true,
        (DatasetKind::Dvs, Some(dir)) => dir.join("test").is_dir(),
        (_, Some(dir)) => dir.join("t10k-images-idx3-ubyte").is_file(),
        (_, None) => false,
    }
}

fn checkpoint_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(CHECKPOINT_FILE)
    } else {
        p.to_path_buf()
    }
}

pub fn train(a: &TrainArgs, out: &mut Out) -> Result<(), CliError> {
    let (features, classes) = features_and_classes(a.data.dataset);
    let hidden = parse_architecture(&format!("1-{}", a.hidden))
        .map_err(|_| CliError::Config(format!("bad --hidden `{}`", a.hidden)))?;
    let mut layers = vec![features];
    layers.extend_from_slice(&hidden[1..]);
    layers.push(classes);
    let mut model_cfg = ModelConfig::new(layers);
    if a.data.dataset == DatasetKind::Dvs {
        model_cfg.encoding = Encoding::Events;
    }
    if let Some(g) = a.input_gain {
        model_cfg.input_gain = g;
    }
    if let Some(att) = a.hidden_attenuation {
        for x in model_cfg.attenuation.iter_mut().skip(1) {
            *x = att;
        }
    }
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        lr: a.lr,
        steps: a.steps,
        eval_steps: a.eval_steps,
        seed: a.seed,
        softmax_beta: a.beta,
        patience: a.patience,
        eval_fraction: a.eval_fraction,
        workers: a.workers,
    };
    cfg.validate()?;
    let mut model = MsnnModel::new(model_cfg, a.seed)?;
    let train_set = load_split(&a.data, Split::Train, a.steps)?;
    let test_set = if test_split_exists(&a.data) {
        Some(load_split(&a.data, Split::Test, cfg.eval_steps())?)
    } else {
        None
    };

    writeln!(out, "epoch,train_loss,val_acc")?;
    let mut write_err = None;
    let outcome = train_with(&mut model, train_set.samples(), &cfg, |r| {
        if let Err(e) = writeln!(out, "{},{},{}", r.epoch, r.train_loss.map_or(String::new(), |l| l.to_string()), r.val_acc).and_then(|_| out.flush()) {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(e.into());
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.workers)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let readout = crate::train::Readout::Membrane;
    let train_eval = pool.install(|| evaluate(&model, train_set.samples(), cfg.eval_steps(), readout))?;
    writeln!(out, "best_epoch={}", outcome.best_epoch)?;
    writeln!(out, "stopped_early={}", outcome.stopped_early)?;
    writeln!(out, "train_acc={}", train_eval.accuracy)?;
    if let Some(test) = &test_set {
        let r = pool.install(|| evaluate(&model, test.samples(), cfg.eval_steps(), readout))?;
        writeln!(out, "test_acc={}", r.accuracy)?;
        writeln!(out, "activity={}", r.activity)?;
    }
    if let Some(dir) = &a.ckpt {
        let path = dir.join(CHECKPOINT_FILE);
        outcome.best.save(&path)?;
        writeln!(out, "checkpoint={}", path.display())?;
    }
    Ok(())
}

pub fn eval(a: &EvalArgs, out: &mut Out) -> Result<(), CliError> {
    let ckpt = Checkpoint::load(&checkpoint_path(&a.ckpt))?;
    let model = ckpt.to_model()?;
    let (features, _) = features_and_classes(a.data.dataset);
    if features != model.config.inputs() {
        return Err(CliError::Config(format!(
            "checkpoint expects {} inputs, {:?} provides {features}",
            model.config.inputs(),
            a.data.dataset
        )));
    }
    let steps = a
        .steps
        .or_else(|| ckpt.meta.train.as_ref().map(TrainConfig::eval_steps))
        .unwrap_or(100);
    let data = load_split(&a.data, a.split, steps)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.workers)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let r = pool.install(|| evaluate(&model, data.samples(), steps, a.readout))?;
    writeln!(out, "samples={}", data.samples().len())?;
    writeln!(out, "steps={steps}")?;
    writeln!(out, "accuracy={}", r.accuracy)?;
    writeln!(out, "activity={}", r.activity)?;
    if let Some(path) = &a.confusion {
        let classes = r.confusion.len();
        let mut csv = String::from("true");
        for k in 0..classes {
            let _ = write!(csv, ",pred{k}");
        }
        csv.push('\n');
        for (k, row) in r.confusion.iter().enumerate() {
            let _ = write!(csv, "{k}");
            for c in row {
                let _ = write!(csv, ",{c}");
            }
            csv.push('\n');
        }
        write_file(path, &csv)?;
    }
    Ok(())
}

pub fn export(a: &ExportArgs, out: &mut Out) -> Result<(), CliError> {
    let ckpt = Checkpoint::load(&checkpoint_path(&a.ckpt))?;
    let config = match a.g_scale {
        Some(g) if g.is_finite() && g > 0.0 => {
            let mut c = ExportConfig::fit(1.0, &ckpt.meta.model.mif);
            c.g_scale = g;
            Some(c)
        }
        Some(g) => return Err(CliError::Config(format!("--g-scale must be > 0, got {g}"))),
        None => None,
    };
    let report = export_weights(&ckpt, config);
    write_file(&a.out, &report.to_csv())?;
    write!(out, "{}", report.summary())?;
    Ok(())
}

pub fn hwcost(a: &HwcostArgs, out: &mut Out) -> Result<(), CliError> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => HwConfig::default(),
    };
    if let Some(arch) = &a.arch {
        cfg.layers = parse_architecture(arch)?;
    }
    if let Some(d) = a.devices_per_weight {
        cfg.devices_per_weight = d;
    }
    if let Some(x) = a.activity {
        cfg.activity = x;
    }
    if let Some(s) = a.steps {
        cfg.steps = s;
    }
    if let Some(f) = a.adc_freq {
        cfg.adc_freq = f;
    }
    let report = estimate(&cfg)?;
    write!(out, "{}", report.to_text())?;
    if let Some(path) = &a.csv {
        write_file(path, &report.to_csv())?;
    }
    Ok(())
}
