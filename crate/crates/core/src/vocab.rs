//! Token vocabulary shared by draft and target models, and the residue codec.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type TokenId = u32;

pub const MANIFEST_VERSION: &str = "specmer-vocab/1";

pub const PAD_SYMBOL: &str = "<pad>";
pub const BOS_SYMBOL: &str = "<bos>";
pub const EOS_SYMBOL: &str = "<eos>";

/// Rendering of the special tokens in residue strings.
pub const PAD_SENTINEL: char = '0';
pub const BOS_SENTINEL: char = '1';
pub const EOS_SENTINEL: char = '2';

/// The 20 canonical amino acids in alphabetical order.
pub const AMINO_ACIDS: &str = "ACDEFGHIKLMNPQRSTVWY";
pub const UNKNOWN_RESIDUE: char = 'X';

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VocabError {
    #[error("unknown symbol {ch:?} at position {position}")]
    UnknownSymbol { position: usize, ch: char },
    #[error("token id {id} out of range for vocabulary of size {size}")]
    IdOutOfRange { id: TokenId, size: usize },
    #[error("end-of-sequence token at interior position {0}")]
    InteriorEos(usize),
    #[error("duplicate symbol {0:?}")]
    DuplicateSymbol(String),
    #[error("invalid symbol {0:?}: residues must be a single character")]
    InvalidSymbol(String),
    #[error("unsupported vocabulary manifest version {0:?}")]
    ManifestVersion(String),
}

/// Serialized form: symbols in id order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabManifest {
    pub version: String,
    pub symbols: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Vocabulary {
    symbols: Vec<String>,
    residue_lookup: HashMap<char, TokenId>,
    pad: Option<TokenId>,
    bos: Option<TokenId>,
    eos: Option<TokenId>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.symbols == other.symbols
    }
}

impl Eq for Vocabulary {}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::protein()
    }
}

impl Vocabulary {
    /// Default protein vocabulary: `<pad>=0, <bos>=1, <eos>=2`, the 20 amino
    /// acids alphabetically, then `X`. 24 tokens.
    pub fn protein() -> Self {
        let mut symbols: Vec<String> =
            vec![PAD_SYMBOL.into(), BOS_SYMBOL.into(), EOS_SYMBOL.into()];
        symbols.extend(AMINO_ACIDS.chars().map(String::from));
        symbols.push(UNKNOWN_RESIDUE.to_string());
        Self::from_symbols(symbols).expect("default vocabulary is well formed")
    }

    /// Residue-only vocabulary (no specials), e.g. `"ACDE"` for small
    /// enumeration experiments.
    pub fn residues_only(residues: &str) -> Result<Self, VocabError> {
        Self::from_symbols(residues.chars().map(String::from).collect())
    }

    /// Builds a vocabulary from symbols in id order. Specials are recognised
    /// by their bracketed names; every other symbol must be one character.
    pub fn from_symbols(symbols: Vec<String>) -> Result<Self, VocabError> {
        let mut residue_lookup = HashMap::new();
        let (mut pad, mut bos, mut eos) = (None, None, None);
        let mut seen = std::collections::HashSet::new();
        for (id, sym) in symbols.iter().enumerate() {
            let id = id as TokenId;
            if !seen.insert(sym.as_str()) {
                return Err(VocabError::DuplicateSymbol(sym.clone()));
            }
            match sym.as_str() {
                PAD_SYMBOL => pad = Some(id),
                BOS_SYMBOL => bos = Some(id),
                EOS_SYMBOL => eos = Some(id),
                _ => {
                    let mut chars = sym.chars();
                    let ch = match (chars.next(), chars.next()) {
                        (Some(c), None) => c,
                        _ => return Err(VocabError::InvalidSymbol(sym.clone())),
                    };
                    if ch.is_lowercase()
                        || [PAD_SENTINEL, BOS_SENTINEL, EOS_SENTINEL].contains(&ch)
                    {
                        return Err(VocabError::InvalidSymbol(sym.clone()));
                    }
                    residue_lookup.insert(ch, id);
                }
            }
        }
        Ok(Self { symbols, residue_lookup, pad, bos, eos })
    }

    pub fn manifest(&self) -> VocabManifest {
        VocabManifest { version: MANIFEST_VERSION.into(), symbols: self.symbols.clone() }
    }

    pub fn from_manifest(manifest: &VocabManifest) -> Result<Self, VocabError> {
        if manifest.version != MANIFEST_VERSION {
            return Err(VocabError::ManifestVersion(manifest.version.clone()));
        }
        Self::from_symbols(manifest.symbols.clone())
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn symbol(&self, id: TokenId) -> Option<&str> {
        self.symbols.get(id as usize).map(String::as_str)
    }

    pub fn pad(&self) -> Option<TokenId> {
        self.pad
    }

    pub fn bos(&self) -> Option<TokenId> {
        self.bos
    }

    pub fn eos(&self) -> Option<TokenId> {
        self.eos
    }

    pub fn is_special(&self, id: TokenId) -> bool {
        Some(id) == self.pad || Some(id) == self.bos || Some(id) == self.eos
    }

    pub fn is_residue(&self, id: TokenId) -> bool {
        (id as usize) < self.symbols.len() && !self.is_special(id)
    }

    /// Residue id for `ch` (uppercased). Sentinels are not residues.
    pub fn residue_id(&self, ch: char) -> Option<TokenId> {
        self.residue_lookup.get(&ch.to_ascii_uppercase()).copied()
    }

    /// Ids a model may emit: everything except pad and begin-of-sequence.
    pub fn emittable(&self) -> Vec<TokenId> {
        (0..self.symbols.len() as TokenId)
            .filter(|&id| Some(id) != self.pad && Some(id) != self.bos)
            .collect()
    }

    fn sentinel(&self, id: TokenId) -> Option<char> {
        if Some(id) == self.pad {
            Some(PAD_SENTINEL)
        } else if Some(id) == self.bos {
            Some(BOS_SENTINEL)
        } else if Some(id) == self.eos {
            Some(EOS_SENTINEL)
        } else {
            None
        }
    }

    /// Token for a rendered character: residues or special sentinels.
    pub fn token_for_char(&self, ch: char) -> Option<TokenId> {
        match ch {
            PAD_SENTINEL => self.pad,
            BOS_SENTINEL => self.bos,
            EOS_SENTINEL => self.eos,
            _ => self.residue_id(ch),
        }
    }

    /// Encodes a residue string. Input is uppercased; the special sentinels
    /// (`0`, `1`, `2`) map back to their tokens.
    pub fn encode(&self, text: &str) -> Result<TokenSequence, VocabError> {
        let ids = text
            .chars()
            .enumerate()
            .map(|(position, ch)| {
                self.token_for_char(ch).ok_or(VocabError::UnknownSymbol { position, ch })
            })
            .collect::<Result<Vec<_>, _>>()?;
        TokenSequence::new(ids, self)
    }

    pub fn decode(&self, seq: &TokenSequence) -> String {
        self.decode_ids(seq.as_slice())
    }

    pub fn decode_ids(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .map(|&id| match self.sentinel(id) {
                Some(c) => c,
                None => self
                    .symbols
                    .get(id as usize)
                    .and_then(|s| s.chars().next())
                    .unwrap_or(UNKNOWN_RESIDUE),
            })
            .collect()
    }
}

/// Ordered token ids; every id in range and end-of-sequence only at the end.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSequence(Vec<TokenId>);

impl TokenSequence {
    pub fn new(ids: Vec<TokenId>, vocab: &Vocabulary) -> Result<Self, VocabError> {
        for (i, &id) in ids.iter().enumerate() {
            if id as usize >= vocab.len() {
                return Err(VocabError::IdOutOfRange { id, size: vocab.len() });
            }
            if Some(id) == vocab.eos() && i + 1 != ids.len() {
                return Err(VocabError::InteriorEos(i));
            }
        }
        Ok(Self(ids))
    }

    /// Wraps ids the caller has already validated.
    pub(crate) fn from_raw(ids: Vec<TokenId>) -> Self {
        Self(ids)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn as_slice(&self) -> &[TokenId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<TokenId> {
        self.0
    }

    pub fn ends_with(&self, id: Option<TokenId>) -> bool {
        id.is_some() && self.0.last().copied() == id
    }

    /// The last `n` tokens (fewer near the start).
    pub fn tail(&self, n: usize) -> &[TokenId] {
        &self.0[self.0.len().saturating_sub(n)..]
    }
}

impl fmt::Display for TokenSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}
