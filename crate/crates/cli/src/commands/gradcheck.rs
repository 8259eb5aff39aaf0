use std::time::Instant;

use anyhow::{bail, Context, Result};

use clt_core::training::{check_all, GradCheckConfig};

use crate::{GradcheckArgs, EXIT_CHECK_FAILED, EXIT_OK};

/// Every model in both directions on the bundled fixture. Exit 1 lists the
/// parameters whose relative error reaches the tolerance.
pub fn run(a: &GradcheckArgs) -> Result<u8> {
    if a.dropout != 0.0 {
        bail!(
            "refusing to check gradients with dropout {}: the loss must be deterministic",
            a.dropout
        );
    }
    if !(a.tolerance > 0.0) {
        bail!("tolerance must be positive, got {}", a.tolerance);
    }
    let mut cfg = GradCheckConfig::default();
    if let Some(p) = a.probes {
        cfg.probes = p;
    }
    if let Some(l) = a.lambda {
        cfg.lambda = l;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let start = Instant::now();
    let cases = check_all(&cfg)?;
    let mut failed = false;
    for c in &cases {
        let bad = c.report.offenders(a.tolerance);
        println!(
            "{:<10} {:<11} max relative error {:.3e}  {}",
            c.model.name(),
            c.direction.as_str(),
            c.report.max_rel_error,
            if bad.is_empty() { "ok" } else { "FAIL" }
        );
        for p in bad {
            failed = true;
            println!(
                "    {}[{}] analytic {:.6e} numeric {:.6e} relative error {:.3e}",
                p.param, p.index, p.analytic, p.numeric, p.rel_error
            );
        }
    }
    println!("{} objectives checked in {:.1}s", cases.len(), start.elapsed().as_secs_f64());
    if let Some(path) = &a.json {
        let mut s = serde_json::to_string_pretty(&cases)?;
        s.push('\n');
        std::fs::write(path, s).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(if failed { EXIT_CHECK_FAILED } else { EXIT_OK })
}
