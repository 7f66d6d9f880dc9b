use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::info;
use wdrn::data::{load_paired_dataset, split, synth_dataset, IlluminationSetting};
use wdrn::model::WdrnConfig;
use wdrn::trainer::{model_config_from_key_values, KeyValues, TrainConfig, Trainer};

use crate::{CliError, CliResult, TrainArgs};

const DEFAULT_SIZE: usize = 64;
const DEFAULT_HOLDOUT: f64 = 0.1;

/// Everything a training run needs besides the data itself.
#[derive(Clone, Debug)]
pub struct TrainSetup {
    pub model: WdrnConfig,
    pub train: TrainConfig,
    pub synthetic_size: usize,
    /// Validation and test fractions.
    pub holdout: [f64; 2],
}

/// Merges `--config` with flag overrides. A config file must define
/// `epochs`, `batch_size` and `lr` (possibly through flags); without one the
/// defaults apply.
pub fn resolve_train_config(args: &TrainArgs) -> CliResult<TrainSetup> {
    let mut kv = match &args.config {
        Some(p) => KeyValues::read(p)?,
        None => KeyValues::default(),
    };
    let flags: [(&str, Option<String>); 9] = [
        ("epochs", args.epochs.map(|v| v.to_string())),
        ("batch_size", args.batch_size.map(|v| v.to_string())),
        ("lr", args.lr.map(|v| v.to_string())),
        ("seed", args.seed.map(|v| v.to_string())),
        ("max_steps", args.max_steps.map(|v| v.to_string())),
        ("levels", args.levels.map(|v| v.to_string())),
        ("domain", args.domain.clone()),
        ("width_scale", args.width_scale.clone()),
        ("synthetic_size", args.size.map(|v| v.to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            kv.set(k, v);
        }
    }
    let model = model_config_from_key_values(&mut kv)?;
    let train = TrainConfig::from_key_values(&mut kv, args.config.is_some())?;
    let synthetic_size = kv.get("synthetic_size")?.unwrap_or(DEFAULT_SIZE);
    let val: f64 = kv.get("val_fraction")?.unwrap_or(DEFAULT_HOLDOUT);
    let test: f64 = kv.get("test_fraction")?.unwrap_or(DEFAULT_HOLDOUT);
    kv.finish()?;
    Ok(TrainSetup {
        model,
        train,
        synthetic_size,
        holdout: [val, test],
    })
}

fn summary(setup: &TrainSetup, trainer: &Trainer, n_pairs: usize, counts: [usize; 3]) -> String {
    let mut s = trainer.model.summary();
    let t = &setup.train;
    let _ = writeln!(s);
    let _ = writeln!(s, "pairs: {n_pairs} (train {}, val {}, test {})", counts[0], counts[1], counts[2]);
    let _ = writeln!(
        s,
        "epochs {} batch_size {} lr {} decay {} every {} seed {}",
        t.epochs, t.batch_size, t.lr, t.lr_decay, t.lr_decay_every, t.seed
    );
    let _ = writeln!(
        s,
        "adam beta1 {} beta2 {} eps {}; loss alpha {} beta {} gamma {}",
        t.beta1, t.beta2, t.adam_eps, t.loss.alpha, t.loss.beta, t.loss.gamma
    );
    s
}

pub fn train(args: &TrainArgs) -> CliResult {
    let setup = resolve_train_config(args)?;
    let pairs = match (&args.data, args.synthetic) {
        (Some(dir), _) => load_paired_dataset(dir)?,
        (None, Some(n)) => synth_dataset(
            n,
            setup.train.seed,
            setup.synthetic_size,
            IlluminationSetting::SOURCE,
            IlluminationSetting::TARGET,
        )?,
        (None, None) => return Err(CliError::Usage("one of --data or --synthetic is required".into())),
    };
    if pairs.is_empty() {
        return Err(wdrn::Error::Dataset("no image pairs found".into()).into());
    }
    let [val, test] = setup.holdout;
    let s = split(pairs.len(), [1.0 - val - test, val, test], setup.train.seed)?;
    let mut trainer = Trainer::new(&setup.model, setup.train.clone())?;

    let out: &Path = &args.out;
    fs::create_dir_all(out)?;
    let counts = [s.train.len(), s.val.len(), s.test.len()];
    fs::write(out.join("summary.txt"), summary(&setup, &trainer, pairs.len(), counts))?;
    s.write_manifest(fs::File::create(out.join("split.tsv"))?, &pairs)?;
    info!(
        "training on {} pairs ({} parameters), writing to {}",
        counts[0],
        trainer.model.parameter_count(),
        out.display()
    );
    let report = trainer.run(&pairs, &s, Some(out))?;
    match (report.best_epoch, report.best_val_psnr) {
        (Some(e), Some(p)) => info!("best validation PSNR {p:.3} dB at epoch {e}"),
        _ => info!("no validation split; best.wdrn not written"),
    }
    info!("{} steps over {} epochs", trainer.step, trainer.epoch);
    Ok(())
}
