use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use specmer::decode::GenerationResult;
use specmer::msa::{parse_fasta, write_fasta};
use specmer::vocab::{TokenSequence, Vocabulary};

use crate::error::CliError;

/// A sequence argument: literal residues or `@path` (plain text or FASTA).
pub struct SequenceArg {
    pub text: String,
    pub file: Option<PathBuf>,
}

pub fn read_sequence_arg(arg: &str) -> Result<SequenceArg, CliError> {
    let Some(path) = arg.strip_prefix('@') else {
        return Ok(SequenceArg { text: arg.trim().to_string(), file: None });
    };
    let path = PathBuf::from(path);
    let raw = fs::read_to_string(&path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let text = if raw.trim_start().starts_with('>') {
        let msa = parse_fasta(raw.as_bytes())?;
        msa.records.first().map(|r| r.aligned.replace(['-', '.'], "")).unwrap_or_default()
    } else {
        raw.split_whitespace().collect()
    };
    Ok(SequenceArg { text, file: Some(path) })
}

pub fn encode(vocab: &Vocabulary, text: &str, what: &str) -> Result<TokenSequence, CliError> {
    vocab.encode(&text.to_ascii_uppercase()).map_err(|e| CliError::data(format!("{what}: {e}")))
}

/// Residue string of a generated sequence, without a trailing stop token.
pub fn residues(vocab: &Vocabulary, seq: &TokenSequence) -> String {
    let ids = seq.as_slice();
    let ids = match (ids.last(), vocab.eos()) {
        (Some(&last), Some(eos)) if last == eos => &ids[..ids.len() - 1],
        _ => ids,
    };
    vocab.decode_ids(ids)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TraceLine {
    pub index: usize,
    #[serde(flatten)]
    pub result: GenerationResult,
}

pub fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

pub fn write_library_fasta(
    path: &Path,
    vocab: &Vocabulary,
    results: &[(usize, GenerationResult)],
) -> Result<(), CliError> {
    let mut out = create(path)?;
    let records = results
        .iter()
        .map(|(i, r)| {
            let header = format!(
                "seq{i} seed={} accepted={} rejected={}",
                r.seed, r.trace.accepted, r.trace.rejected
            );
            (header, residues(vocab, &r.sequence))
        });
    write_fasta(&mut out, records, 60)?;
    out.flush()?;
    Ok(())
}

pub fn write_traces(path: &Path, results: &[(usize, GenerationResult)]) -> Result<(), CliError> {
    let mut out = create(path)?;
    for (index, r) in results {
        serde_json::to_writer(&mut out, &TraceLine { index: *index, result: r.clone() })?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_traces(path: &Path) -> Result<Vec<TraceLine>, CliError> {
    let file = File::open(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: TraceLine = serde_json::from_str(&line)
            .map_err(|e| CliError::data(format!("{} line {}: {e}", path.display(), n + 1)))?;
        out.push(t);
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// Prints `value` as JSON, or `human` otherwise. A closed stdout is not an error.
pub fn emit<T: Serialize>(json: bool, value: &T, human: impl FnOnce() -> String) -> Result<(), CliError> {
    let text = if json { serde_json::to_string(value)? } else { human() };
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

pub fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, CliError> {
    s.split(',')
        .map(|p| p.trim().parse().map_err(|_| CliError::Usage(format!("bad {what} value {p:?}"))))
        .collect()
}
