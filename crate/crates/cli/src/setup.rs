use std::path::{Path, PathBuf};

use specmer::kmer::{build_index, KmerIndex};
use specmer::lm::{ModelDescriptor, ModelHandle};
use specmer::msa::read_fasta;
use specmer::vocab::Vocabulary;

use crate::error::CliError;

pub const DEFAULT_DRAFT_ORDER: usize = 2;
pub const DEFAULT_TARGET_ORDER: usize = 4;

/// Descriptor from `arg`, or an n-gram of `order` trained on `msa`.
pub fn descriptor(arg: Option<&str>, msa: Option<&Path>, order: usize, role: &str) -> Result<ModelDescriptor, CliError> {
    match (arg, msa) {
        (Some(s), _) => Ok(ModelDescriptor::parse(s)?),
        (None, Some(m)) => Ok(ModelDescriptor::Ngram { order, train: m.to_path_buf(), lambda: 1.0, append_eos: false }),
        (None, None) => Err(CliError::Usage(format!("--{role} or --msa is required"))),
    }
}

pub struct Models {
    pub draft: ModelHandle,
    pub target: ModelHandle,
    pub descriptors: (ModelDescriptor, ModelDescriptor),
}

impl Models {
    pub fn load(
        draft: Option<&str>,
        target: Option<&str>,
        msa: Option<&Path>,
        vocab: &Vocabulary,
    ) -> Result<Self, CliError> {
        let d = descriptor(draft, msa, DEFAULT_DRAFT_ORDER, "draft")?;
        let t = descriptor(target, msa, DEFAULT_TARGET_ORDER, "target")?;
        log::info!("draft {d}, target {t}");
        Ok(Self { draft: d.load(vocab)?, target: t.load(vocab)?, descriptors: (d, t) })
    }

    pub fn input_files(&self) -> Vec<PathBuf> {
        let mut v = self.descriptors.0.input_files();
        v.extend(self.descriptors.1.input_files());
        v
    }
}

/// Loads `index` restricted to `k_values`, or builds one from `msa`.
pub fn index(
    index: Option<&Path>,
    msa: Option<&Path>,
    k_values: &[usize],
    dedupe: bool,
    vocab: &Vocabulary,
) -> Result<KmerIndex, CliError> {
    let ix = match (index, msa) {
        (Some(p), _) => {
            let ix = KmerIndex::load(p)?;
            if ix.vocab() != vocab {
                return Err(CliError::data(format!("{}: index vocabulary differs from the models'", p.display())));
            }
            ix.restrict(k_values)?
        }
        (None, Some(m)) => {
            let mut msa = read_fasta(m)?;
            if dedupe {
                msa = msa.dedupe(vocab);
            }
            let mut ix = build_index(&msa, k_values, vocab)?;
            ix.source.deduplicated = dedupe;
            ix
        }
        (None, None) => return Err(CliError::Usage("--index or --msa is required for k-mer guidance".into())),
    };
    Ok(ix)
}
