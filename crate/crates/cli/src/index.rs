use std::path::PathBuf;

use clap::{Args, Subcommand};
use serde::Serialize;
use specmer::kmer::{parse_k_values, KmerIndex, SourceMeta};
use specmer::manifest::RunManifest;
use specmer::vocab::Vocabulary;

use crate::error::CliError;
use crate::io::emit;
use crate::setup;

#[derive(Subcommand, Debug)]
pub enum IndexCommand {
    /// Count k-mers of an alignment.
    Build(BuildArgs),
    /// Summarize an index file.
    Stats { path: PathBuf },
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    #[arg(long)]
    msa: PathBuf,
    #[arg(long, default_value = "1,3,5")]
    k: String,
    #[arg(long)]
    out: PathBuf,
    /// Count each distinct ungapped row once.
    #[arg(long)]
    dedupe: bool,
}

#[derive(Serialize)]
struct KStats {
    k: usize,
    total: u64,
    distinct: usize,
}

#[derive(Serialize)]
struct IndexSummary {
    k_values: Vec<usize>,
    tables: Vec<KStats>,
    empty_k_values: Vec<usize>,
    source: SourceMeta,
}

fn summary(ix: &KmerIndex) -> IndexSummary {
    IndexSummary {
        k_values: ix.k_values().to_vec(),
        tables: ix
            .k_values()
            .iter()
            .map(|&k| {
                let t = ix.table(k).expect("indexed k");
                KStats { k, total: t.total(), distinct: t.distinct() }
            })
            .collect(),
        empty_k_values: ix.empty_k_values(),
        source: ix.source.clone(),
    }
}

fn human(s: &IndexSummary) -> String {
    let mut out = format!(
        "k values: {:?}\nsequences: {} (dropped characters: {}, deduplicated: {})",
        s.k_values, s.source.sequences, s.source.dropped, s.source.deduplicated
    );
    for t in &s.tables {
        out.push_str(&format!("\nk={}: {} windows, {} distinct", t.k, t.total, t.distinct));
    }
    if !s.empty_k_values.is_empty() {
        out.push_str(&format!("\nwarning: no windows for k = {:?}", s.empty_k_values));
    }
    out
}

pub fn run(cmd: IndexCommand, json: bool) -> Result<(), CliError> {
    match cmd {
        IndexCommand::Build(a) => {
            let vocab = Vocabulary::protein();
            let ks = parse_k_values(&a.k)?;
            let ix = setup::index(None, Some(&a.msa), &ks, a.dedupe, &vocab)?;
            ix.save(&a.out)?;
            let mut m = RunManifest::new(
                "index build",
                serde_json::json!({"msa": a.msa, "k": ks, "dedupe": a.dedupe, "out": a.out}),
                0,
            );
            m.add_input(&a.msa)?;
            m.add_output(&a.out)?;
            m.write(&RunManifest::path_for(&a.out))?;
            let s = summary(&ix);
            emit(json, &s, || human(&s))
        }
        IndexCommand::Stats { path } => {
            let ix = KmerIndex::load(&path)?;
            let s = summary(&ix);
            emit(json, &s, || human(&s))
        }
    }
}
