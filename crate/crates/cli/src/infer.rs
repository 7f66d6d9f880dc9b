use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use log::{error, info, warn};
use wdrn::data::{list_pngs, load_png, save_png};
use wdrn::model::Wdrn;
use wdrn::trainer::load_checkpoint;

use crate::{CliError, CliResult, InferArgs};

#[derive(Clone, Debug, Default)]
pub struct InferReport {
    pub written: Vec<(String, Duration)>,
    pub failed: Vec<(String, String)>,
}

fn relight(model: &Wdrn<f32>, src: &Path, dst: &Path) -> wdrn::Result<()> {
    let x = load_png(src)?;
    let y = model.forward(&x)?;
    save_png(&y, dst)
}

/// Relights every PNG in `input` into `out` under the same name. A failing
/// file is recorded and skipped.
pub fn infer_dir(model: &Wdrn<f32>, input: &Path, out: &Path) -> CliResult<InferReport> {
    let names = list_pngs(input)?;
    let mut report = InferReport::default();
    if names.is_empty() {
        warn!("no PNG files in {}", input.display());
        return Ok(report);
    }
    fs::create_dir_all(out)?;
    for name in names {
        let start = Instant::now();
        match relight(model, &input.join(&name), &out.join(&name)) {
            Ok(()) => {
                let dt = start.elapsed();
                info!("{name}: {:.3} s", dt.as_secs_f64());
                report.written.push((name, dt));
            }
            Err(e) => {
                error!("{name}: {e}");
                report.failed.push((name, e.to_string()));
            }
        }
    }
    Ok(report)
}

pub fn infer(args: &InferArgs) -> CliResult {
    let model = load_checkpoint(&args.checkpoint)?.model;
    let report = infer_dir(&model, &args.input, &args.out)?;
    if !report.written.is_empty() {
        let total: f64 = report.written.iter().map(|(_, d)| d.as_secs_f64()).sum();
        info!(
            "wrote {} images, mean {:.3} s per image",
            report.written.len(),
            total / report.written.len() as f64
        );
    }
    if report.failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Partial(format!("{} of {} images failed", report.failed.len(), report.failed.len() + report.written.len())))
    }
}
