//! Optimization loop, schedule, checkpoints and training logs.

mod adam;
mod checkpoint;
mod config;

use std::fs;
use std::io::Write;
use std::path::Path;

use log::{debug, error, info};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

pub use adam::{adam_step, AdamParams, AdamState};
pub use checkpoint::{
    load_checkpoint, load_checkpoint_for, save_checkpoint, Checkpoint, RngState, FORMAT_VERSION, MAGIC,
};
pub use config::KeyValues;

use crate::data::{DatasetSplit, ImagePair};
use crate::error::{invalid, Error, Result};
use crate::losses::{total_loss, LossConfig, LossValues};
use crate::metrics::{psnr, ssim_metric};
use crate::model::{DomainVariant, WdrnConfig, Wdrn, WidthScale};
use crate::tensor::{Graph, Shape, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub lr_decay_every: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub loss: LossConfig,
    /// Stop after this many epochs even if `epochs` is larger.
    pub early_stop_epoch: Option<u64>,
    /// Stop after this many optimizer steps in total.
    pub max_steps: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 150,
            batch_size: 10,
            lr: 1e-4,
            lr_decay: 0.5,
            lr_decay_every: 100,
            beta1: 0.9,
            beta2: 0.99,
            adam_eps: 1e-8,
            seed: 0,
            loss: LossConfig::default(),
            early_stop_epoch: None,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(invalid("train config", m));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be finite and >= 0, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad(format!("betas must lie in [0, 1), got {} and {}", self.beta1, self.beta2));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.adam_eps > 0.0) || !(self.lr_decay > 0.0) {
            return bad("adam_eps and lr_decay must be positive".into());
        }
        self.loss.validate()
    }

    pub fn adam(&self) -> AdamParams {
        AdamParams {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }

    /// Reads training keys from `kv`. With `require_core`, `epochs`,
    /// `batch_size` and `lr` must be present.
    pub fn from_key_values(kv: &mut KeyValues, require_core: bool) -> Result<Self> {
        let mut c = TrainConfig::default();
        if require_core {
            c.epochs = kv.require("epochs")?;
            c.batch_size = kv.require("batch_size")?;
            c.lr = kv.require("lr")?;
        } else {
            set(&mut c.epochs, kv.get("epochs")?);
            set(&mut c.batch_size, kv.get("batch_size")?);
            set(&mut c.lr, kv.get("lr")?);
        }
        set(&mut c.lr_decay, kv.get("lr_decay")?);
        set(&mut c.lr_decay_every, kv.get("lr_decay_every")?);
        set(&mut c.beta1, kv.get("beta1")?);
        set(&mut c.beta2, kv.get("beta2")?);
        set(&mut c.adam_eps, kv.get("adam_eps")?);
        set(&mut c.seed, kv.get("seed")?);
        c.early_stop_epoch = kv.get("early_stop_epoch")?;
        c.max_steps = kv.get("max_steps")?;
        let l = &mut c.loss;
        set(&mut l.alpha, kv.get("alpha")?);
        set(&mut l.beta, kv.get("beta")?);
        set(&mut l.gamma, kv.get("gamma")?);
        set(&mut l.blur_sigma, kv.get("blur_sigma")?);
        set(&mut l.blur_kernel, kv.get("blur_kernel")?);
        set(&mut l.ssim_window, kv.get("ssim_window")?);
        set(&mut l.ssim_sigma, kv.get("ssim_sigma")?);
        c.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(c)
    }
}

/// Reads `levels`, `domain`, `width_scale` and `kernel` from `kv`.
pub fn model_config_from_key_values(kv: &mut KeyValues) -> Result<WdrnConfig> {
    let levels = kv.get("levels")?.unwrap_or(3);
    let mut cfg = WdrnConfig::with_levels(levels)?;
    if let Some(v) = kv.get::<DomainVariant>("domain")? {
        cfg = cfg.variant(v);
    }
    if let Some(s) = kv.get::<WidthScale>("width_scale")? {
        cfg = cfg.scaled(s);
    }
    if let Some(k) = kv.get::<usize>("kernel")? {
        cfg = cfg.with_kernel(k);
    }
    cfg.layers()?;
    Ok(cfg)
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

/// `lr * decay^floor(epoch / decay_every)`.
pub fn lr_at(epoch: u64, cfg: &TrainConfig) -> f64 {
    if cfg.lr_decay_every == 0 {
        return cfg.lr;
    }
    cfg.lr * cfg.lr_decay.powi((epoch / cfg.lr_decay_every) as i32)
}

/// Per-epoch row of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: u64,
    pub lr: f64,
    pub losses: LossValues,
    pub val_psnr: Option<f64>,
    pub val_ssim: Option<f64>,
}

pub const LOG_HEADER: &str = "epoch,lr,mae,ssim_loss,gray,total,val_psnr,val_ssim";

pub fn write_log<W: Write>(mut out: W, rows: &[EpochLog]) -> std::io::Result<()> {
    writeln!(out, "{LOG_HEADER}")?;
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        let l = &r.losses;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.epoch,
            r.lr,
            l.mae,
            l.ssim,
            l.gray,
            l.total,
            cell(r.val_psnr),
            cell(r.val_ssim)
        )?;
    }
    Ok(())
}

/// Stacks equally shaped single images along the batch axis.
pub fn stack(images: &[&Tensor<f32>]) -> Result<Tensor<f32>> {
    let first = images.first().ok_or_else(|| invalid("stack", "no images"))?.shape();
    let mut data = Vec::with_capacity(first.len() * images.len());
    for img in images {
        let s = img.shape();
        if (s.height, s.width, s.channels) != (first.height, first.width, first.channels) {
            return Err(Error::ShapeMismatch {
                op: "stack",
                left: first,
                right: s,
            });
        }
        data.extend_from_slice(img.data());
    }
    let n: usize = images.iter().map(|t| t.shape().batch).sum();
    Tensor::from_vec(Shape::new(n, first.height, first.width, first.channels)?, data)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub log: Vec<EpochLog>,
    pub step_losses: Vec<LossValues>,
    pub best_epoch: Option<u64>,
    pub best_val_psnr: Option<f64>,
}

/// Model, optimizer state and data-order RNG.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: Wdrn<f32>,
    pub adam: AdamState,
    pub cfg: TrainConfig,
    /// Completed epochs.
    pub epoch: u64,
    /// Completed optimizer steps.
    pub step: u64,
    rng: ChaCha8Rng,
}

impl Trainer {
    /// Builds the model from `cfg.seed`; the data-order stream uses the same
    /// seed on ChaCha stream 1.
    pub fn new(model_cfg: &WdrnConfig, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let model = Wdrn::build(model_cfg, cfg.seed)?;
        let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        Ok(Trainer {
            adam: AdamState::new(&model.params),
            model,
            cfg,
            epoch: 0,
            step: 0,
            rng,
        })
    }

    pub fn from_checkpoint(c: Checkpoint, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if !c.adam.matches(&c.model.params) {
            return Err(Error::CheckpointLayout("optimizer state does not match parameters".into()));
        }
        Ok(Trainer {
            model: c.model,
            adam: c.adam,
            cfg,
            epoch: c.epoch,
            step: c.step,
            rng: c.rng.restore(),
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            adam: self.adam.clone(),
            epoch: self.epoch,
            step: self.step,
            rng: RngState::capture(&self.rng),
        }
    }

    /// Forward, loss, backward and one Adam update on a batch.
    pub fn train_step(&mut self, batch: &[&ImagePair], lr: f64) -> Result<LossValues> {
        let inputs: Vec<&Tensor<f32>> = batch.iter().map(|p| &p.input_image).collect();
        let targets: Vec<&Tensor<f32>> = batch.iter().map(|p| &p.target_image).collect();
        let (x, y) = (stack(&inputs)?, stack(&targets)?);
        let mut g = Graph::new();
        let p = self.model.bind(&mut g, true);
        let xv = g.constant(x);
        let yv = g.constant(y);
        let pred = self.model.forward_on(&mut g, &p, xv)?;
        let terms = total_loss(&mut g, pred, yv, &self.cfg.loss)?;
        let values = terms.values(&g);
        if !values.total.is_finite() {
            error!("non-finite loss {} at epoch {}, step {}", values.total, self.epoch, self.step);
            return Err(Error::NonFiniteLoss {
                epoch: self.epoch as usize,
                step: self.step as usize,
                value: values.total,
            });
        }
        g.backward(terms.total)?;
        self.model.collect_grads(&g, &p);
        adam_step(&mut self.model.params, &mut self.adam, lr, &self.cfg.adam())?;
        self.step += 1;
        Ok(values)
    }

    /// Mean PSNR (finite values) and SSIM of the model on `pairs`.
    pub fn evaluate(&self, pairs: &[&ImagePair]) -> Result<Option<(f64, f64)>> {
        if pairs.is_empty() {
            return Ok(None);
        }
        let (mut psnrs, mut ssim) = (Vec::new(), 0.0);
        for p in pairs {
            let out = self.model.forward(&p.input_image)?;
            let v = psnr(&out, &p.target_image, self.cfg.loss.data_range)?;
            if v.is_finite() {
                psnrs.push(v);
            }
            ssim += ssim_metric(&out, &p.target_image, &self.cfg.loss)?;
        }
        let psnr_mean = if psnrs.is_empty() {
            f64::INFINITY
        } else {
            psnrs.iter().sum::<f64>() / psnrs.len() as f64
        };
        Ok(Some((psnr_mean, ssim / pairs.len() as f64)))
    }

    fn done(&self) -> bool {
        self.cfg.max_steps.is_some_and(|m| self.step >= m)
    }

    /// Runs the remaining epochs. With `out_dir`, rewrites `log.csv` after
    /// every epoch, saves `best.wdrn` on every validation improvement and
    /// `checkpoint.wdrn` at the end.
    pub fn run(&mut self, pairs: &[ImagePair], split: &DatasetSplit, out_dir: Option<&Path>) -> Result<TrainReport> {
        if split.train.is_empty() {
            return Err(Error::Dataset("training split is empty".into()));
        }
        let lookup = |ids: &[usize]| -> Result<Vec<&ImagePair>> {
            ids.iter()
                .map(|&i| pairs.get(i).ok_or_else(|| Error::Dataset(format!("split index {i} out of range"))))
                .collect()
        };
        let val = lookup(&split.val)?;
        lookup(&split.train)?;
        let last_epoch = self.cfg.early_stop_epoch.map_or(self.cfg.epochs, |e| e.min(self.cfg.epochs));
        let mut report = TrainReport::default();
        if let Some(dir) = out_dir {
            fs::create_dir_all(dir)?;
            write_log(fs::File::create(dir.join("log.csv"))?, &report.log)?;
        }
        while self.epoch < last_epoch && !self.done() {
            let lr = lr_at(self.epoch, &self.cfg);
            let mut order = split.train.clone();
            order.shuffle(&mut self.rng);
            let mut sum = LossValues::default();
            let mut steps = 0usize;
            for chunk in order.chunks(self.cfg.batch_size) {
                if self.done() {
                    break;
                }
                let batch: Vec<&ImagePair> = chunk.iter().map(|&i| &pairs[i]).collect();
                let v = self.train_step(&batch, lr)?;
                debug!("epoch {} step {}: total {:.6}", self.epoch, self.step, v.total);
                report.step_losses.push(v);
                sum.mae += v.mae;
                sum.ssim += v.ssim;
                sum.gray += v.gray;
                sum.total += v.total;
                steps += 1;
            }
            let n = steps.max(1) as f64;
            let losses = LossValues {
                mae: sum.mae / n,
                ssim: sum.ssim / n,
                gray: sum.gray / n,
                total: sum.total / n,
            };
            let metrics = self.evaluate(&val)?;
            let row = EpochLog {
                epoch: self.epoch,
                lr,
                losses,
                val_psnr: metrics.map(|m| m.0),
                val_ssim: metrics.map(|m| m.1),
            };
            info!(
                "epoch {} lr {:e}: total {:.5} (mae {:.5}, ssim {:.5}, gray {:.5}){}",
                self.epoch,
                lr,
                losses.total,
                losses.mae,
                losses.ssim,
                losses.gray,
                metrics.map_or(String::new(), |(p, s)| format!(", val psnr {p:.3} ssim {s:.4}"))
            );
            self.epoch += 1;
            report.log.push(row);
            let improved = match (metrics, report.best_val_psnr) {
                (Some((p, _)), Some(best)) => p > best,
                (Some(_), None) => true,
                (None, _) => false,
            };
            if improved {
                report.best_val_psnr = metrics.map(|m| m.0);
                report.best_epoch = Some(self.epoch - 1);
            }
            if let Some(dir) = out_dir {
                write_log(fs::File::create(dir.join("log.csv"))?, &report.log)?;
                if improved {
                    save_checkpoint(&self.checkpoint(), &dir.join("best.wdrn"))?;
                }
            }
        }
        if let Some(dir) = out_dir {
            save_checkpoint(&self.checkpoint(), &dir.join("checkpoint.wdrn"))?;
        }
        Ok(report)
    }
}

/// Builds a model from `cfg.seed` and trains it on `split`.
pub fn train(
    model_cfg: &WdrnConfig,
    pairs: &[ImagePair],
    split: &DatasetSplit,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<(Checkpoint, TrainReport)> {
    let mut t = Trainer::new(model_cfg, cfg.clone())?;
    let report = t.run(pairs, split, out_dir)?;
    Ok((t.checkpoint(), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ParameterSet;

    #[test]
    fn schedule() {
        let c = TrainConfig::default();
        assert_eq!(lr_at(0, &c), 1e-4);
        assert_eq!(lr_at(99, &c), 1e-4);
        assert_eq!(lr_at(100, &c), 5e-5);
        assert_eq!(lr_at(200, &c), 2.5e-5);
    }

    fn scalar_params(w: f32, g: f32) -> ParameterSet<f32> {
        let mut p = ParameterSet::new();
        p.insert("w", Tensor::scalar(w)).unwrap();
        p.get_mut("w").unwrap().grad = Some(vec![g]);
        p
    }

    #[test]
    fn adam_first_step() {
        let mut p = scalar_params(0.0, 1.0);
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &mut s, 1e-4, &AdamParams::default()).unwrap();
        let w = p.get("w").unwrap().data()[0] as f64;
        assert!((w - (-1e-4 / (1.0 + 1e-8))).abs() < 1e-10);
        assert!((w - (-9.99999e-5)).abs() < 1e-10);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn adam_zero_grad_and_missing_grad() {
        let mut p = scalar_params(0.25, 0.0);
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &mut s, 1e-2, &AdamParams::default()).unwrap();
        assert_eq!(p.get("w").unwrap().data()[0], 0.25);

        p.get_mut("w").unwrap().grad = None;
        let err = adam_step(&mut p, &mut s, 1e-2, &AdamParams::default()).unwrap_err();
        assert!(matches!(err, Error::MissingGradient(n) if n == "w"));
    }

    #[test]
    fn adam_without_momentum_is_sign_sgd() {
        let hp = AdamParams {
            beta1: 0.0,
            beta2: 0.0,
            eps: 1e-8,
        };
        for (w0, g) in [(0.5f32, 0.3f32), (-1.0, -2.0), (0.0, 1e-3)] {
            let mut p = scalar_params(w0, g);
            let mut s = AdamState::new(&p);
            for _ in 0..3 {
                p.get_mut("w").unwrap().grad = Some(vec![g]);
                let before = p.get("w").unwrap().data()[0] as f64;
                adam_step(&mut p, &mut s, 1e-2, &hp).unwrap();
                let g = g as f64;
                let expected = before - 1e-2 * g / (g.abs() + 1e-8);
                assert!((p.get("w").unwrap().data()[0] as f64 - expected).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn key_values_into_configs() {
        let mut kv = KeyValues::parse("epochs = 2\nbatch_size = 3\nlr = 0.01\ngamma = 0\nwidth_scale = 1/4\nlevels = 2").unwrap();
        let t = TrainConfig::from_key_values(&mut kv, true).unwrap();
        assert_eq!((t.epochs, t.batch_size, t.lr, t.loss.gamma), (2, 3, 0.01, 0.0));
        let m = model_config_from_key_values(&mut kv).unwrap();
        assert_eq!((m.levels, m.width_scale), (2, WidthScale::new(1, 4).unwrap()));
        kv.finish().unwrap();

        let mut kv = KeyValues::parse("epochs = 2\nlr = 0.01").unwrap();
        assert!(matches!(TrainConfig::from_key_values(&mut kv, true), Err(Error::MissingKey(k)) if k == "batch_size"));
    }
}
