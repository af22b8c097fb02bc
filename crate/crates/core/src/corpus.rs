//! Synthetic token corpus with a controllable, heavy-tailed n-gram imbalance,
//! plus exact n-gram frequency tables.
//!
//! The generator draws from a Zipf unigram base and injects short "motif"
//! sequences with per-motif boost probabilities, which pushes a handful of
//! bigrams/trigrams orders of magnitude above the baseline.

use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Rng;

pub type TokenId = u32;

/// Token id space with a distinguished BOS id (fixed at 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vocab {
    pub size: usize,
}

impl Vocab {
    pub const BOS: TokenId = 0;

    pub fn new(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::Config("vocab size must be at least 2".into()));
        }
        Ok(Vocab { size })
    }

    pub fn contains(&self, t: TokenId) -> bool {
        (t as usize) < self.size
    }
}

/// A short token sequence emitted wholesale with probability `boost` at each
/// emission step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Motif {
    pub tokens: Vec<TokenId>,
    pub boost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub vocab_size: usize,
    pub zipf_exponent: f64,
    pub motifs: Vec<Motif>,
    pub length: usize,
    pub seed: u64,
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(Error::Config("vocab_size must be at least 2".into()));
        }
        if !(self.zipf_exponent > 0.0) {
            return Err(Error::Config("zipf_exponent must be > 0".into()));
        }
        if self.length == 0 {
            return Err(Error::Config("length must be > 0".into()));
        }
        let mut total_boost = 0.0;
        for m in &self.motifs {
            if m.tokens.is_empty() {
                return Err(Error::Config("motif must have at least one token".into()));
            }
            if !(0.0..=1.0).contains(&m.boost) {
                return Err(Error::Config(format!("motif boost {} outside [0,1]", m.boost)));
            }
            for &t in &m.tokens {
                if t as usize >= self.vocab_size {
                    return Err(Error::Config(format!(
                        "motif token {t} outside vocab of size {}",
                        self.vocab_size
                    )));
                }
                if t == Vocab::BOS {
                    return Err(Error::Config("motif may not contain the BOS id".into()));
                }
            }
            total_boost += m.boost;
        }
        if total_boost > 1.0 {
            return Err(Error::Config(format!(
                "motif boosts sum to {total_boost} > 1"
            )));
        }
        Ok(())
    }
}

impl Default for CorpusConfig {
    /// Desk-scale default: 256-token vocab, Zipf 1.1, 8 bigram + 4 trigram
    /// motifs with boosts between 0.002 and 0.02, 4M tokens.
    fn default() -> Self {
        let motifs = vec![
            Motif { tokens: vec![17, 63], boost: 0.020 },
            Motif { tokens: vec![41, 112], boost: 0.014 },
            Motif { tokens: vec![73, 9], boost: 0.010 },
            Motif { tokens: vec![130, 55], boost: 0.007 },
            Motif { tokens: vec![88, 201], boost: 0.005 },
            Motif { tokens: vec![150, 34], boost: 0.004 },
            Motif { tokens: vec![222, 97], boost: 0.003 },
            Motif { tokens: vec![60, 179], boost: 0.002 },
            Motif { tokens: vec![25, 77, 140], boost: 0.012 },
            Motif { tokens: vec![99, 12, 48], boost: 0.008 },
            Motif { tokens: vec![190, 66, 31], boost: 0.005 },
            Motif { tokens: vec![110, 205, 83], boost: 0.003 },
        ];
        CorpusConfig {
            vocab_size: 256,
            zipf_exponent: 1.1,
            motifs,
            length: 4_000_000,
            seed: 0,
        }
    }
}

/// Flat sequence of token ids. BOS never appears inside; it is prepended per
/// window by the activation pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenCorpus {
    pub ids: Vec<TokenId>,
    pub vocab: Vocab,
}

/// Fraction of the corpus reserved for training; the final tail is held out
/// for evaluation and never sampled by training windows.
pub const TRAIN_FRACTION: f64 = 0.95;

impl TokenCorpus {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Number of leading tokens available to training windows.
    pub fn train_len(&self) -> usize {
        (self.ids.len() as f64 * TRAIN_FRACTION).floor() as usize
    }

    /// The held-out tail (eval-only region).
    pub fn heldout(&self) -> &[TokenId] {
        &self.ids[self.train_len()..]
    }
}

/// Inverse-CDF sampler over ids `1..vocab_size` with `P(rank r) ∝ r^-s`.
/// Rank r maps to token id r, so id 1 is the most frequent token.
struct ZipfSampler {
    cdf: Vec<f64>,
}

impl ZipfSampler {
    fn new(vocab_size: usize, exponent: f64) -> Self {
        let n = vocab_size - 1; // BOS excluded
        let mut cdf = Vec::with_capacity(n);
        let mut acc = 0.0;
        for r in 1..=n {
            acc += (r as f64).powf(-exponent);
            cdf.push(acc);
        }
        let total = acc;
        for c in &mut cdf {
            *c /= total;
        }
        ZipfSampler { cdf }
    }

    fn sample(&self, rng: &mut Rng) -> TokenId {
        let u = rng.uniform_f64();
        let idx = self.cdf.partition_point(|&c| c <= u);
        (idx.min(self.cdf.len() - 1) + 1) as TokenId
    }
}

/// Generate a corpus from the config; fully determined by `cfg.seed`.
pub fn gen_corpus(cfg: &CorpusConfig) -> Result<TokenCorpus> {
    cfg.validate()?;
    let vocab = Vocab::new(cfg.vocab_size)?;
    let zipf = ZipfSampler::new(cfg.vocab_size, cfg.zipf_exponent);
    let mut rng = Rng::seed_from(cfg.seed);
    let mut ids = Vec::with_capacity(cfg.length);
    while ids.len() < cfg.length {
        let u = rng.uniform_f64();
        let mut acc = 0.0;
        let mut emitted = false;
        for m in &cfg.motifs {
            acc += m.boost;
            if u < acc {
                ids.extend_from_slice(&m.tokens);
                emitted = true;
                break;
            }
        }
        if !emitted {
            ids.push(zipf.sample(&mut rng));
        }
    }
    ids.truncate(cfg.length);
    Ok(TokenCorpus { ids, vocab })
}

/// Exact n-gram counts over a corpus.
#[derive(Debug, Clone)]
pub struct NgramTable {
    pub n: usize,
    pub counts: HashMap<Box<[TokenId]>, u64>,
    pub total: u64,
}

/// Sliding-window counts of all length-n windows; `total = len - n + 1`.
pub fn count_ngrams(corpus: &TokenCorpus, n: usize) -> Result<NgramTable> {
    if n == 0 {
        return Err(Error::Range("count_ngrams: n must be >= 1".into()));
    }
    if corpus.len() < n {
        return Err(Error::Range(format!(
            "count_ngrams: corpus of length {} is shorter than n = {n}",
            corpus.len()
        )));
    }
    let mut counts: HashMap<Box<[TokenId]>, u64> = HashMap::new();
    for w in corpus.ids.windows(n) {
        *counts.entry(w.into()).or_insert(0) += 1;
    }
    let total = (corpus.len() - n + 1) as u64;
    debug_assert_eq!(counts.values().sum::<u64>(), total);
    Ok(NgramTable { n, counts, total })
}

impl NgramTable {
    /// `count(gram) / total`; 0 for absent grams.
    pub fn relative_frequency(&self, gram: &[TokenId]) -> Result<f64> {
        if gram.len() != self.n {
            return Err(Error::Argument(format!(
                "relative_frequency: gram of length {} against a {}-gram table",
                gram.len(),
                self.n
            )));
        }
        Ok(*self.counts.get(gram).unwrap_or(&0) as f64 / self.total as f64)
    }

    /// Entries sorted by count descending, ties by gram ascending.
    /// The explicit order makes exports byte-reproducible.
    pub fn sorted_entries(&self) -> Vec<(&[TokenId], u64)> {
        let mut entries: Vec<(&[TokenId], u64)> =
            self.counts.iter().map(|(k, &v)| (k.as_ref(), v)).collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        entries
    }

    /// Median relative frequency over observed grams.
    pub fn median_relative_frequency(&self) -> f64 {
        let mut counts: Vec<u64> = self.counts.values().copied().collect();
        counts.sort_unstable();
        if counts.is_empty() {
            return 0.0;
        }
        let mid = counts.len() / 2;
        let median_count = if counts.len() % 2 == 1 {
            counts[mid] as f64
        } else {
            (counts[mid - 1] + counts[mid]) as f64 / 2.0
        };
        median_count / self.total as f64
    }

    /// CSV export: `n_gram,count,rel_freq` with space-joined ids.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n_gram,count,rel_freq")?;
        for (gram, count) in self.sorted_entries() {
            let joined = gram
                .iter()
                .map(|t| t.to_string())
                .collect::<Vec<_>>()
                .join(" ");
            writeln!(w, "{joined},{count},{}", count as f64 / self.total as f64)?;
        }
        Ok(())
    }

    /// Unigram counts as a dense per-token vector (1-gram tables only).
    pub fn token_counts(&self, vocab: Vocab) -> Result<Vec<u64>> {
        if self.n != 1 {
            return Err(Error::Argument("token_counts needs a 1-gram table".into()));
        }
        let mut out = vec![0u64; vocab.size];
        for (gram, &c) in &self.counts {
            out[gram[0] as usize] = c;
        }
        Ok(out)
    }
}

// --- corpus file format -----------------------------------------------------
// magic "TSAC", version u32, vocab_size u32, length u64, then `length`
// little-endian u32 token ids.

const CORPUS_MAGIC: &[u8; 4] = b"TSAC";
const CORPUS_VERSION: u32 = 1;

pub fn save_corpus(corpus: &TokenCorpus, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(CORPUS_MAGIC)?;
    w.write_all(&CORPUS_VERSION.to_le_bytes())?;
    w.write_all(&(corpus.vocab.size as u32).to_le_bytes())?;
    w.write_all(&(corpus.len() as u64).to_le_bytes())?;
    for &id in &corpus.ids {
        w.write_all(&id.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_corpus(path: &Path) -> Result<TokenCorpus> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("corpus file truncated before magic".into()))?;
    if &magic != CORPUS_MAGIC {
        return Err(Error::Format(format!(
            "bad corpus magic {:?}, expected {:?}",
            magic, CORPUS_MAGIC
        )));
    }
    let version = read_u32(&mut r)?;
    if version != CORPUS_VERSION {
        return Err(Error::Format(format!(
            "unsupported corpus version {version}; this build reads version {CORPUS_VERSION}"
        )));
    }
    let vocab_size = read_u32(&mut r)? as usize;
    let length = read_u64(&mut r)? as usize;
    let vocab = Vocab::new(vocab_size)?;
    let mut ids = Vec::with_capacity(length);
    let mut buf = [0u8; 4];
    for _ in 0..length {
        r.read_exact(&mut buf)
            .map_err(|_| Error::Format("corpus file truncated in token data".into()))?;
        let id = u32::from_le_bytes(buf);
        if !vocab.contains(id) {
            return Err(Error::Format(format!(
                "token id {id} outside vocab of size {vocab_size}"
            )));
        }
        ids.push(id);
    }
    Ok(TokenCorpus { ids, vocab })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Format("file truncated reading u32".into()))?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Format("file truncated reading u64".into()))?;
    Ok(u64::from_le_bytes(buf))
}
