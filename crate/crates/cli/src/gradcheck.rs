use wdrn::tensor::OpKind;
use wdrn::verify::{run_suite, SuiteOptions};

use crate::{CliError, CliResult, GradcheckArgs};

pub fn gradcheck(args: &GradcheckArgs) -> CliResult {
    let fault = args
        .inject_fault
        .as_deref()
        .map(|s| s.parse::<OpKind>().map_err(|e| CliError::Usage(e.to_string())))
        .transpose()?;
    let rows = run_suite(&SuiteOptions {
        threshold: args.threshold,
        seed: args.seed,
        fault,
    })?;
    println!("{:<18} {:>12} {:>7}  result", "check", "max_rel_err", "probes");
    for r in &rows {
        println!(
            "{:<18} {:>12.3e} {:>7}  {}",
            r.name,
            r.max_rel_error,
            r.probes,
            if r.passed { "ok" } else { "FAIL" }
        );
    }
    let failed: Vec<&str> = rows.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        println!("all {} checks below {:e}", rows.len(), args.threshold);
        Ok(())
    } else {
        Err(CliError::Partial(format!("gradient check failed for {}", failed.join(", "))))
    }
}
