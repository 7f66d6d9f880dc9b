use std::io::Write;

use log::info;
use wdrn::data::{split, synth_dataset, IlluminationSetting, ImagePair};
use wdrn::losses::{total_loss, LossConfig};
use wdrn::metrics::{aggregate, MetricsReport};
use wdrn::model::{DomainVariant, Wdrn, WdrnConfig, WidthScale};
use wdrn::trainer::{TrainConfig, Trainer};
use wdrn::Graph;

use crate::{create_output, AblateArgs, Ablation, CliError, CliResult};

pub const ABLATION_HEADER: [&str; 7] = ["variant", "parameters", "psnr_db", "ssim", "initial_loss", "final_loss", "steps"];

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub variant: String,
    pub parameters: usize,
    /// Held-out means.
    pub psnr_db: f64,
    pub ssim: f64,
    /// Mean total loss over the training pairs before and after training.
    pub initial_loss: f64,
    pub final_loss: f64,
    pub steps: u64,
}

fn variants(which: Ablation, base: &WdrnConfig) -> wdrn::Result<Vec<(String, WdrnConfig)>> {
    Ok(match which {
        Ablation::Domain => vec![
            ("wavelet".into(), base.clone().variant(DomainVariant::Wavelet)),
            ("strided".into(), base.clone().variant(DomainVariant::Strided)),
        ],
        Ablation::Levels => (2..=4)
            .map(|l| {
                let cfg = WdrnConfig::with_levels(l)?
                    .scaled(base.width_scale)
                    .variant(base.domain_variant);
                Ok((format!("{l} level"), cfg))
            })
            .collect::<wdrn::Result<_>>()?,
    })
}

fn mean_total_loss(model: &Wdrn<f32>, pairs: &[&ImagePair], cfg: &LossConfig) -> wdrn::Result<f64> {
    let mut sum = 0.0;
    for p in pairs {
        let mut g = Graph::new();
        let bound = model.bind(&mut g, false);
        let x = g.constant(p.input_image.clone());
        let y = g.constant(p.target_image.clone());
        let pred = model.forward_on(&mut g, &bound, x)?;
        let terms = total_loss(&mut g, pred, y, cfg)?;
        sum += g.value(terms.total).item()? as f64;
    }
    Ok(sum / pairs.len() as f64)
}

/// Trains each variant from the same seed on the same synthetic split and
/// scores it on the held-out quarter.
pub fn run_ablation(args: &AblateArgs) -> CliResult<Vec<AblationRow>> {
    if args.synthetic < 2 {
        return Err(CliError::Usage("--synthetic needs at least 2 pairs to hold one out".into()));
    }
    let scale: WidthScale = args.width_scale.parse()?;
    let base = WdrnConfig::default().scaled(scale);
    let configs = variants(args.which, &base)?;
    for (name, c) in &configs {
        if !args.size.is_multiple_of(c.divisor()) {
            return Err(CliError::Usage(format!(
                "--size {} is not a multiple of {} required by variant `{name}`",
                args.size,
                c.divisor()
            )));
        }
    }
    let pairs = synth_dataset(
        args.synthetic,
        args.seed,
        args.size,
        IlluminationSetting::SOURCE,
        IlluminationSetting::TARGET,
    )?;
    let s = split(pairs.len(), [0.75, 0.0, 0.25], args.seed)?;
    let train_pairs: Vec<&ImagePair> = s.train.iter().map(|&i| &pairs[i]).collect();
    let test_pairs: Vec<&ImagePair> = s.test.iter().map(|&i| &pairs[i]).collect();
    let cfg = TrainConfig {
        epochs: args.steps,
        batch_size: args.batch_size,
        lr: args.lr,
        lr_decay_every: 0,
        seed: args.seed,
        max_steps: Some(args.steps),
        ..TrainConfig::default()
    };

    let mut rows = Vec::new();
    for (name, model_cfg) in configs {
        let mut t = Trainer::new(&model_cfg, cfg.clone())?;
        let initial_loss = mean_total_loss(&t.model, &train_pairs, &cfg.loss)?;
        t.run(&pairs, &s, None)?;
        let final_loss = mean_total_loss(&t.model, &train_pairs, &cfg.loss)?;
        let scores = test_pairs
            .iter()
            .map(|p| {
                let out = t.model.forward(&p.input_image)?;
                MetricsReport::evaluate(&out, &p.target_image, &cfg.loss, None)
            })
            .collect::<wdrn::Result<Vec<_>>>()?;
        let mean = aggregate(&scores).expect("held-out split is nonempty");
        info!(
            "{name}: loss {initial_loss:.5} -> {final_loss:.5}, held-out psnr {:.3} ssim {:.4}",
            mean.psnr_db, mean.ssim
        );
        rows.push(AblationRow {
            variant: name,
            parameters: t.model.parameter_count(),
            psnr_db: mean.psnr_db,
            ssim: mean.ssim,
            initial_loss,
            final_loss,
            steps: t.step,
        });
    }
    Ok(rows)
}

pub fn ablate(args: &AblateArgs) -> CliResult {
    let rows = run_ablation(args)?;
    let mut out = create_output(args.out.as_deref())?;
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(ABLATION_HEADER)?;
        for r in &rows {
            w.write_record([
                r.variant.clone(),
                r.parameters.to_string(),
                r.psnr_db.to_string(),
                r.ssim.to_string(),
                r.initial_loss.to_string(),
                r.final_loss.to_string(),
                r.steps.to_string(),
            ])?;
        }
        w.flush()?;
    }
    out.flush()?;
    Ok(())
}
