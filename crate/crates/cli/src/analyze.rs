use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use serde::Serialize;
use specmer::analysis::{diversity, library_stats, Diversity, LibraryStats};
use specmer::decode::{DecodeTrace, GenerationResult};
use specmer::kmer::KmerIndex;
use specmer::manifest::RunManifest;
use specmer::msa::read_fasta;
use specmer::vocab::{TokenSequence, Vocabulary};

use crate::error::CliError;
use crate::io::{emit, encode, read_sequence_arg, read_traces, residues, write_json};
use crate::setup::{descriptor, DEFAULT_TARGET_ORDER};

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Generated library (FASTA).
    #[arg(long)]
    seqs: PathBuf,
    /// Traces written by `generate`; supply acceptance counts and context length.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Target model descriptor (default: order-4 n-gram on --msa).
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    msa: Option<PathBuf>,
    /// Wild-type residues or @file, for Hamming diversity.
    #[arg(long)]
    wild_type: Option<String>,
    /// Context prefix excluded from NLL when no trace is given.
    #[arg(long)]
    context: Option<String>,
    /// K-mer index for mean k-mer scores.
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for pair subsampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Serialize)]
struct Report {
    stats: LibraryStats,
    diversity: Option<Diversity>,
    /// Placeholder for externally computed per-sequence scores.
    external: serde_json::Map<String, serde_json::Value>,
}

fn library(a: &AnalyzeArgs, vocab: &Vocabulary, inputs: &mut Vec<PathBuf>) -> Result<Vec<GenerationResult>, CliError> {
    let fasta = read_fasta(&a.seqs)?;
    let texts: Vec<String> = fasta.records.iter().map(|r| r.aligned.replace(['-', '.'], "")).collect();
    if let Some(t) = &a.trace {
        inputs.push(t.clone());
        let lines = read_traces(t)?;
        if lines.len() != texts.len() {
            return Err(CliError::data(format!("{} has {} records but the trace has {}", a.seqs.display(), texts.len(), lines.len())));
        }
        let mut out = Vec::with_capacity(lines.len());
        for (text, line) in texts.iter().zip(lines) {
            if residues(vocab, &line.result.sequence) != text.to_ascii_uppercase() {
                return Err(CliError::data(format!("trace entry {} does not match its FASTA record", line.index)));
            }
            out.push(line.result);
        }
        return Ok(out);
    }
    let context = match &a.context {
        Some(c) => {
            let s = read_sequence_arg(c)?;
            inputs.extend(s.file);
            encode(vocab, &s.text, "context")?
        }
        None => TokenSequence::empty(),
    };
    texts
        .iter()
        .enumerate()
        .map(|(i, text)| {
            let sequence = encode(vocab, text, &format!("record {i}"))?;
            if !sequence.as_slice().starts_with(context.as_slice()) {
                return Err(CliError::data(format!("record {i} does not start with the context")));
            }
            Ok(GenerationResult { sequence, context_len: context.len(), seed: 0, trace: DecodeTrace::default(), nll: None })
        })
        .collect()
}

pub fn run(a: AnalyzeArgs, json: bool) -> Result<(), CliError> {
    let start = Instant::now();
    let vocab = Vocabulary::protein();
    let mut inputs = vec![a.seqs.clone()];
    let results = library(&a, &vocab, &mut inputs)?;
    let target_desc = descriptor(a.target.as_deref(), a.msa.as_deref(), DEFAULT_TARGET_ORDER, "target")?;
    inputs.extend(target_desc.input_files());
    let target = target_desc.load(&vocab)?;
    let index = match &a.index {
        Some(p) => {
            inputs.push(p.clone());
            Some(KmerIndex::load(p)?)
        }
        None => None,
    };
    let stats = library_stats(&results, target.as_ref(), index.as_ref())?;
    let diversity = match &a.wild_type {
        Some(w) => {
            let s = read_sequence_arg(w)?;
            inputs.extend(s.file);
            let wt = encode(&vocab, &s.text, "wild type")?;
            let seqs: Vec<Vec<u32>> = results
                .iter()
                .map(|r| {
                    let ids = r.sequence.as_slice();
                    match (ids.last(), vocab.eos()) {
                        (Some(&l), Some(e)) if l == e => ids[..ids.len() - 1].to_vec(),
                        _ => ids.to_vec(),
                    }
                })
                .collect();
            let refs: Vec<&[u32]> = seqs.iter().map(|s| s.as_slice()).collect();
            Some(diversity(&refs, wt.as_slice(), a.seed))
        }
        None => None,
    };
    let report = Report { stats, diversity, external: Default::default() };
    if let Some(out) = &a.out {
        write_json(out, &report)?;
        let mut m = RunManifest::new(
            "analyze",
            serde_json::json!({
                "seqs": a.seqs, "trace": a.trace, "target": target_desc.to_string(),
                "wild_type": a.wild_type, "context": a.context, "index": a.index, "seed": a.seed,
            }),
            a.seed,
        );
        for p in &inputs {
            m.add_input(p)?;
        }
        m.add_output(out)?;
        m.wall_ms = start.elapsed().as_millis() as u64;
        m.write(&RunManifest::path_for(out))?;
    }
    emit(json, &report, || {
        let s = &report.stats;
        let alpha = s.acceptance_ratio.map(|a| format!("{a:.4}")).unwrap_or_else(|| "n/a".into());
        let mut text = format!(
            "sequences {}\nmean NLL {:.4}\ntop-20 NLL {:.4}\ntop-5 NLL {:.4}{}\nacceptance ratio {alpha}",
            s.size,
            s.mean_nll,
            s.top20_nll,
            s.top5_nll,
            if s.top_n_clipped { " (library smaller than N)" } else { "" }
        );
        if let Some(k) = s.mean_kmer_score {
            text.push_str(&format!("\nmean k-mer score {k:.6}"));
        }
        if let Some(d) = &report.diversity {
            text.push_str(&format!(
                "\nWT Hamming {:.2} ± {:.2}\ninter-sequence Hamming {:.2} ± {:.2}",
                d.wt_hamming.mean, d.wt_hamming.sd, d.inter_seq_hamming.mean, d.inter_seq_hamming.sd
            ));
        }
        text
    })
}
