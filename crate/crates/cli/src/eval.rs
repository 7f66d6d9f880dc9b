use std::collections::HashMap;
use std::path::Path;

use log::{error, warn};
use wdrn::data::{list_pngs, load_png};
use wdrn::losses::LossConfig;
use wdrn::metrics::{aggregate, write_report, MetricsReport};

use crate::{create_output, CliError, CliResult, EvalArgs};

#[derive(Clone, Debug, Default)]
pub struct EvalReport {
    /// One row per prediction; `None` marks a failed file.
    pub rows: Vec<(String, Option<MetricsReport>)>,
    pub mean: Option<MetricsReport>,
    pub errors: Vec<(String, String)>,
}

/// Reads a `name,lpips` CSV with a header row.
pub fn read_lpips(path: &Path) -> CliResult<HashMap<String, f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = HashMap::new();
    for rec in r.records() {
        let rec = rec?;
        let (Some(name), Some(v)) = (rec.get(0), rec.get(1)) else {
            return Err(CliError::Usage(format!("{}: expected `name,lpips` rows", path.display())));
        };
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|e| CliError::Usage(format!("{}: bad lpips value `{v}`: {e}", path.display())))?;
        out.insert(name.trim().to_string(), v);
    }
    Ok(out)
}

fn score(pred: &Path, gt: &Path, cfg: &LossConfig, lpips: Option<f64>) -> wdrn::Result<MetricsReport> {
    if !gt.exists() {
        return Err(wdrn::Error::Dataset(format!("missing ground truth {}", gt.display())));
    }
    MetricsReport::evaluate(&load_png(pred)?, &load_png(gt)?, cfg, lpips)
}

/// Scores every PNG in `pred` against the file of the same name in `gt`.
pub fn evaluate_dirs(pred: &Path, gt: &Path, lpips: Option<&HashMap<String, f64>>) -> CliResult<EvalReport> {
    let cfg = LossConfig::default();
    let mut report = EvalReport::default();
    for name in list_pngs(pred)? {
        let l = lpips.and_then(|m| m.get(&name).copied());
        if lpips.is_some() && l.is_none() {
            warn!("{name}: no LPIPS score supplied");
        }
        match score(&pred.join(&name), &gt.join(&name), &cfg, l) {
            Ok(m) => report.rows.push((name, Some(m))),
            Err(e) => {
                error!("{name}: {e}");
                report.rows.push((name.clone(), None));
                report.errors.push((name, e.to_string()));
            }
        }
    }
    let ok: Vec<MetricsReport> = report.rows.iter().filter_map(|(_, m)| m.clone()).collect();
    report.mean = aggregate(&ok);
    Ok(report)
}

pub fn eval(args: &EvalArgs) -> CliResult {
    let lpips = args.lpips.as_deref().map(read_lpips).transpose()?;
    let report = evaluate_dirs(&args.pred, &args.gt, lpips.as_ref())?;
    if report.rows.is_empty() {
        warn!("no PNG files in {}", args.pred.display());
    }
    let mut rows = report.rows.clone();
    rows.push(("mean".into(), report.mean.clone()));
    let mut out = create_output(args.out.as_deref())?;
    write_report(&mut out, &rows, &LossConfig::default())?;
    out.flush()?;
    if report.errors.is_empty() {
        Ok(())
    } else {
        Err(CliError::Partial(format!("{} of {} predictions could not be scored", report.errors.len(), report.rows.len())))
    }
}
