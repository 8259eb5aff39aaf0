use anyhow::{bail, Result};

use clt_core::evaluation::{
    ablation_variants, render_ablation_table, render_model_table, render_summary, run_ablation,
    run_in_channel_baseline, run_transfer_protocol, MetricsReport, PreparedData,
};
use clt_core::models::ModelKind;

use super::{out_dir, read_pair};
use crate::config::{existing, ReportFormat, RunConfig};
use crate::manifest::Manifest;
use crate::EXIT_OK;

/// File-name form of a variant label: `All` -> `all`, `-` -> `none`.
fn slug(variant: &str) -> String {
    match variant {
        "-" => "none".to_owned(),
        v => v.to_ascii_lowercase(),
    }
}

pub fn run(cfg: &RunConfig) -> Result<u8> {
    let variants = if cfg.ablate.is_empty() {
        None
    } else {
        if cfg.model != ModelKind::LeTraNets {
            bail!("--ablate switches LeTraNets mechanisms; the model is {}", cfg.model);
        }
        let names: Vec<&str> = cfg.ablate.iter().map(String::as_str).collect();
        Some(ablation_variants(&names)?)
    };
    let mut manifest = Manifest::new("transfer", cfg.seed, cfg)?;
    let (short, long) = read_pair(cfg, &mut manifest)?;
    if let Some(e) = &cfg.embeddings {
        existing(e)?;
        manifest.input(e)?;
    }
    out_dir(&cfg.out_dir)?;

    let pcfg = cfg.protocol();
    let data = PreparedData::new(&short, &long, &pcfg, cfg.embeddings.as_deref())?;
    let (baseline, mut logs) = run_in_channel_baseline(&data, cfg.direction.target(), &pcfg)?;
    let outputs = match &variants {
        Some(v) => run_ablation(&data, &pcfg, v, Some(&baseline))?,
        None => vec![run_transfer_protocol(cfg.model, &data, &pcfg, Some(&baseline))?],
    };

    let reports: Vec<&MetricsReport> = outputs.iter().map(|o| &o.report).collect();
    if cfg.wants(ReportFormat::Json) {
        for r in &reports {
            let name = if variants.is_some() {
                format!("report-{}.json", slug(&r.variant))
            } else {
                "report.json".to_owned()
            };
            manifest.write(&cfg.out_dir, &name, &r.to_json()?)?;
        }
    }
    let owned: Vec<MetricsReport> = reports.iter().map(|r| (*r).clone()).collect();
    let table = if variants.is_some() {
        render_ablation_table(&owned)
    } else {
        render_model_table(&owned)
    };
    if cfg.wants(ReportFormat::Text) {
        let mut text = String::new();
        for r in &reports {
            text.push_str(&render_summary(r));
            text.push('\n');
        }
        text.push_str(&table);
        manifest.write(&cfg.out_dir, "report.txt", &text)?;
    }
    for o in &outputs {
        logs.extend(o.runs.iter().cloned());
    }
    let mut lines = String::new();
    for l in &logs {
        lines.push_str(&l.json_lines()?);
    }
    manifest.write(&cfg.out_dir, "epochs.jsonl", &lines)?;
    manifest.save(&cfg.out_dir)?;

    println!(
        "in-channel CNN ({:?}) accuracy {:.4}",
        baseline.channel, baseline.accuracy
    );
    for r in &reports {
        println!(
            "{} [{}] {}: accuracy {:.4}  transfer loss {:.2}",
            r.model, r.variant, r.direction, r.accuracy, r.transfer_loss
        );
    }
    print!("{table}");
    println!("wrote {}", cfg.out_dir.display());
    Ok(EXIT_OK)
}
