use anyhow::{Context, Result};
use toml::Value;

use clt_core::datasets::{gen_synthetic, write_corpus, write_unlabeled, Corpus, LabelScheme, SyntheticConfig};

use super::out_dir;
use crate::config::{env_layer, merge, parse_assignment, SYNTH_ENV_PREFIX};
use crate::manifest::Manifest;
use crate::{SynthArgs, EXIT_OK};

fn histogram(name: &str, c: &Corpus) -> String {
    let h = c.label_histogram();
    let cells: Vec<String> = h.iter().enumerate().map(|(k, n)| format!("{k}:{n}")).collect();
    format!("{name}: {} texts, labels {}", c.len(), cells.join(" "))
}

pub fn run(a: &SynthArgs) -> Result<u8> {
    let env = env_layer(std::env::vars(), SYNTH_ENV_PREFIX, &[]);
    let mut flags = a.set.iter().map(|s| parse_assignment(s)).collect::<Result<Vec<_>>>()?;
    if let Some(s) = a.seed {
        flags.push(("seed".to_owned(), Value::Integer(s as i64)));
    }
    let table = merge(a.config.as_deref(), &[env, flags])?;
    let cfg: SyntheticConfig = Value::Table(table)
        .try_into()
        .context("invalid synthetic configuration")?;
    cfg.validate().context("invalid synthetic configuration")?;
    let corpora = gen_synthetic(&cfg)?;

    out_dir(&a.out_dir)?;
    let mut manifest = Manifest::new("synth", cfg.seed, &cfg)?;
    for (name, c) in [("short", &corpora.short), ("long", &corpora.long)] {
        let p = a.out_dir.join(format!("{name}.tsv"));
        write_corpus(c, &p, LabelScheme::ZeroBased)?;
        manifest.output(&p)?;
        if !c.unlabeled.is_empty() {
            let p = a.out_dir.join(format!("{name}_unlabeled.txt"));
            write_unlabeled(&c.unlabeled, &p)?;
            manifest.output(&p)?;
        }
        println!("{}", histogram(name, c));
    }
    manifest.save(&a.out_dir)?;
    println!("wrote {}", a.out_dir.display());
    Ok(EXIT_OK)
}
