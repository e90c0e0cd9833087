//! FASTA / A2M alignment ingestion.
//!
//! Rows are kept verbatim; [`ungap`] strips `-` and `.` and uppercases
//! insert-state residues before encoding, so k-mer windows slide over the
//! gap-free homolog.

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::vocab::{TokenSequence, Vocabulary};

#[derive(Debug, Error)]
pub enum MsaError {
    #[error("malformed FASTA at line {0}")]
    MalformedFasta(usize),
    #[error("alignment contains no records")]
    EmptyMsa,
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentRecord {
    pub header: String,
    pub aligned: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Msa {
    pub records: Vec<AlignmentRecord>,
    pub source: Option<PathBuf>,
}

/// Gap-stripped row plus the number of characters that were not residues.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ungapped {
    pub tokens: TokenSequence,
    pub gaps: usize,
    pub dropped: usize,
}

pub fn is_gap(ch: char) -> bool {
    ch == '-' || ch == '.'
}

/// Parses FASTA/A2M text: `>` headers, wrapped sequence lines, LF or CRLF.
pub fn parse_fasta<R: BufRead>(reader: R) -> Result<Msa, MsaError> {
    let mut records: Vec<AlignmentRecord> = Vec::new();
    let mut header_line = 0;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if let Some(header) = line.strip_prefix('>') {
            if let Some(prev) = records.last() {
                if prev.aligned.is_empty() {
                    return Err(MsaError::MalformedFasta(header_line));
                }
            }
            header_line = line_no;
            records.push(AlignmentRecord { header: header.trim().to_string(), aligned: String::new() });
        } else if line.trim().is_empty() {
            continue;
        } else {
            match records.last_mut() {
                Some(rec) => rec.aligned.push_str(line.trim()),
                None => return Err(MsaError::MalformedFasta(line_no)),
            }
        }
    }
    match records.last() {
        None => Err(MsaError::EmptyMsa),
        Some(rec) if rec.aligned.is_empty() => Err(MsaError::MalformedFasta(header_line)),
        Some(_) => Ok(Msa { records, source: None }),
    }
}

pub fn read_fasta(path: &Path) -> Result<Msa, MsaError> {
    let file = std::fs::File::open(path)?;
    let mut msa = parse_fasta(std::io::BufReader::new(file))?;
    msa.source = Some(path.to_path_buf());
    Ok(msa)
}

/// Writes records as FASTA, wrapping sequence lines at `width` (0 = no wrap).
pub fn write_fasta<W: Write>(
    mut out: W,
    records: impl IntoIterator<Item = (String, String)>,
    width: usize,
) -> std::io::Result<()> {
    for (header, seq) in records {
        writeln!(out, ">{header}")?;
        if width == 0 || seq.is_empty() {
            writeln!(out, "{seq}")?;
        } else {
            for chunk in seq.as_bytes().chunks(width) {
                out.write_all(chunk)?;
                out.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

pub fn ungap(record: &AlignmentRecord, vocab: &Vocabulary) -> Ungapped {
    let mut ids = Vec::with_capacity(record.aligned.len());
    let (mut gaps, mut dropped) = (0, 0);
    for ch in record.aligned.chars() {
        if is_gap(ch) {
            gaps += 1;
        } else if let Some(id) = vocab.residue_id(ch) {
            ids.push(id);
        } else {
            dropped += 1;
        }
    }
    Ungapped { tokens: TokenSequence::from_raw(ids), gaps, dropped }
}

impl Msa {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Ungapped rows and the total count of dropped non-residue characters.
    pub fn ungapped(&self, vocab: &Vocabulary) -> (Vec<TokenSequence>, usize) {
        let mut dropped = 0;
        let rows = self
            .records
            .iter()
            .map(|r| {
                let u = ungap(r, vocab);
                dropped += u.dropped;
                u.tokens
            })
            .collect();
        if dropped > 0 {
            log::warn!("dropped {dropped} characters outside the vocabulary while ungapping");
        }
        (rows, dropped)
    }

    /// Keeps the first occurrence of each distinct ungapped row.
    pub fn dedupe(&self, vocab: &Vocabulary) -> Msa {
        let mut seen = HashSet::new();
        let records = self
            .records
            .iter()
            .filter(|r| seen.insert(ungap(r, vocab).tokens))
            .cloned()
            .collect();
        Msa { records, source: self.source.clone() }
    }

    pub fn to_fasta(&self) -> String {
        let mut buf = Vec::new();
        write_fasta(
            &mut buf,
            self.records.iter().map(|r| (r.header.clone(), r.aligned.clone())),
            60,
        )
        .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("records are UTF-8")
    }
}
