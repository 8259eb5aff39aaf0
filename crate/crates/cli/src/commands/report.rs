use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use clt_core::evaluation::{render_ablation_table, render_model_table, MetricsReport};
use clt_core::models::ModelKind;
use clt_core::training::Mechanisms;

use crate::{ReportArgs, EXIT_OK};

fn read_report(p: &Path) -> Result<MetricsReport> {
    let s = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
    MetricsReport::from_json(&s).with_context(|| format!("{} is not a transfer report", p.display()))
}

/// Named files must be reports; inside directories, JSON files that are not
/// reports (manifests, eval results) are passed over.
fn collect(paths: &[PathBuf]) -> Result<Vec<MetricsReport>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|e| e.extension().is_some_and(|x| x == "json"))
                .collect();
            entries.sort();
            out.extend(entries.iter().filter_map(|e| read_report(e).ok()));
        } else if p.is_file() {
            out.push(read_report(p)?);
        } else {
            bail!("input not found: {}", p.display());
        }
    }
    if out.is_empty() {
        bail!("no transfer reports found");
    }
    Ok(out)
}

pub fn run(a: &ReportArgs) -> Result<u8> {
    let reports = collect(&a.paths)?;
    let mut text = render_model_table(&reports);
    let ablated = reports
        .iter()
        .any(|r| r.model == ModelKind::LeTraNets && r.mechanisms != Mechanisms::ALL);
    if ablated {
        text.push('\n');
        text.push_str(&render_ablation_table(&reports));
    }
    print!("{text}");
    if let Some(out) = &a.out {
        fs::write(out, &text).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(EXIT_OK)
}
