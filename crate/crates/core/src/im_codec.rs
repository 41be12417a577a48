//! Single-carrier index modulation (SC-IM) codec.
//!
//! A block of `b = b_ind + b_sym` bits is split into an index part, which
//! selects `K` active subcarriers out of `N`, and a symbol part, which is
//! mapped onto `K` Gray-coded M-PSK points placed on the active subcarriers
//! in increasing order. All other subcarriers carry zero.
//!
//! Bit words are stored as `u32` with the index bits in the most-significant
//! positions. The unsigned value of a word doubles as its class index, so
//! bit words, codebook rows and one-hot labels are interchangeable.
//!
//! Active patterns are ranked in lexicographic order of `K`-subsets
//! (combinatorial number system). When `2^b_ind < C(N, K)` only the lowest
//! `2^b_ind` ranks are used.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use thiserror::Error;

/// Largest supported block size in bits; keeps codebooks enumerable.
pub const MAX_BITS: u32 = 20;

/// Tolerance for matching noise-free vectors back to constellation labels.
const MATCH_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("invalid IM parameters (N={n}, K={k}, M={m}): {reason}")]
    InvalidParameters {
        n: usize,
        k: usize,
        m: usize,
        reason: &'static str,
    },
    #[error("pattern rank {rank} out of range for C({n},{k}) = {count}")]
    RankOutOfRange {
        rank: u64,
        n: usize,
        k: usize,
        count: u64,
    },
    #[error("invalid active pattern {indices:?} for N={n}")]
    InvalidPattern { indices: Vec<usize>, n: usize },
    #[error("vector is not a codeword of the scheme")]
    NotACodeword,
    #[error("codebook with b={bits} bits exceeds the enumeration limit of {MAX_BITS} bits")]
    CodebookTooLarge { bits: u32 },
    #[error("class {class} out of range for {size} classes")]
    ClassOutOfRange { class: usize, size: usize },
    #[error("bit word {word:#x} does not fit in {bits} bits")]
    WordTooWide { word: u32, bits: u32 },
    #[error("expected length {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Binomial coefficient `C(n, k)`, exact in `u64` for the sizes used here.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        // Exact at every step: acc * (n - i) is divisible by (i + 1).
        acc = acc * (n - i) as u64 / (i + 1) as u64;
    }
    acc
}

/// The `(N, K, M)` configuration of an SC-IM block and its derived bit counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ImScheme {
    n: usize,
    k: usize,
    m: usize,
    index_bits: u32,
    symbol_bits: u32,
}

impl ImScheme {
    pub fn new(n: usize, k: usize, m: usize) -> Result<Self, CodecError> {
        let invalid = |reason| CodecError::InvalidParameters { n, k, m, reason };
        if n == 0 {
            return Err(invalid("N must be positive"));
        }
        if k == 0 || k > n {
            return Err(invalid("K must satisfy 1 <= K <= N"));
        }
        if m < 2 || !m.is_power_of_two() {
            return Err(invalid("M must be a power of two >= 2"));
        }
        if n > 62 {
            return Err(invalid("N above 62 is not supported"));
        }
        let patterns = binomial(n, k);
        let index_bits = 63 - patterns.leading_zeros();
        let symbol_bits = k as u32 * m.trailing_zeros();
        Ok(ImScheme {
            n,
            k,
            m,
            index_bits,
            symbol_bits,
        })
    }

    /// Subcarrier count `N`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Active subcarrier count `K`.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Constellation order `M`.
    pub fn m(&self) -> usize {
        self.m
    }

    /// `floor(log2(C(N, K)))`.
    pub fn index_bits(&self) -> u32 {
        self.index_bits
    }

    /// `K * log2(M)`.
    pub fn symbol_bits(&self) -> u32 {
        self.symbol_bits
    }

    /// Bits per block, `b`.
    pub fn bits(&self) -> u32 {
        self.index_bits + self.symbol_bits
    }

    pub fn bits_per_symbol(&self) -> u32 {
        self.m.trailing_zeros()
    }

    /// Number of distinct codewords, `2^b`. Saturates for absurd schemes.
    pub fn num_classes(&self) -> usize {
        1usize.checked_shl(self.bits()).unwrap_or(usize::MAX)
    }

    /// Number of active patterns in use, `2^b_ind`.
    pub fn num_patterns(&self) -> usize {
        1usize << self.index_bits
    }

    fn check_word(&self, word: u32) -> Result<(), CodecError> {
        if self.bits() < 32 && word >> self.bits() != 0 {
            return Err(CodecError::WordTooWide {
                word,
                bits: self.bits(),
            });
        }
        Ok(())
    }
}

/// Strictly increasing list of active subcarrier positions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActivePattern(Vec<usize>);

impl ActivePattern {
    /// Validates `indices` as a K-subset of `0..n` in increasing order.
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self, CodecError> {
        let increasing = indices.windows(2).all(|w| w[0] < w[1]);
        let in_range = indices.iter().all(|&i| i < n);
        if indices.is_empty() || !increasing || !in_range {
            return Err(CodecError::InvalidPattern { indices, n });
        }
        Ok(ActivePattern(indices))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Returns the `rank`-th K-subset of `{0, .., n-1}` in lexicographic order.
pub fn unrank_pattern(rank: u64, n: usize, k: usize) -> Result<ActivePattern, CodecError> {
    let count = binomial(n, k);
    if k == 0 || rank >= count {
        return Err(CodecError::RankOutOfRange { rank, n, k, count });
    }
    let mut rest = rank;
    let mut indices = Vec::with_capacity(k);
    let mut candidate = 0;
    for slot in 0..k {
        loop {
            // Subsets whose `slot`-th element is `candidate`.
            let with_candidate = binomial(n - 1 - candidate, k - 1 - slot);
            if rest < with_candidate {
                break;
            }
            rest -= with_candidate;
            candidate += 1;
        }
        indices.push(candidate);
        candidate += 1;
    }
    Ok(ActivePattern(indices))
}

/// Lexicographic rank of `pattern` among all K-subsets of `{0, .., n-1}`.
pub fn rank_pattern(pattern: &ActivePattern, n: usize) -> Result<u64, CodecError> {
    let idx = pattern.indices();
    let k = idx.len();
    if k == 0 || idx.iter().any(|&i| i >= n) || !idx.windows(2).all(|w| w[0] < w[1]) {
        return Err(CodecError::InvalidPattern {
            indices: idx.to_vec(),
            n,
        });
    }
    let mut rank = 0;
    let mut first = 0;
    for (slot, &chosen) in idx.iter().enumerate() {
        for skipped in first..chosen {
            rank += binomial(n - 1 - skipped, k - 1 - slot);
        }
        first = chosen + 1;
    }
    Ok(rank)
}

fn gray_inverse(mut g: usize) -> usize {
    let mut v = g;
    while g > 1 {
        g >>= 1;
        v ^= g;
    }
    v
}

/// Gray-coded unit-energy M-PSK constellation indexed by bit label.
///
/// BPSK sits on the real axis; higher orders are rotated by `pi / M` so that
/// QPSK lands on `(+-1 +- j)/sqrt(2)`. BPSK and QPSK use exact tables so that
/// every point has bit-identical magnitude.
pub fn psk_constellation(m: usize) -> Vec<Complex64> {
    match m {
        2 => vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
        4 => {
            let a = FRAC_1_SQRT_2;
            vec![
                Complex64::new(a, a),   // 00
                Complex64::new(-a, a),  // 01
                Complex64::new(a, -a),  // 10
                Complex64::new(-a, -a), // 11
            ]
        }
        _ => (0..m)
            .map(|label| {
                let pos = gray_inverse(label) as f64;
                let phase = PI / m as f64 + 2.0 * PI * pos / m as f64;
                Complex64::from_polar(1.0, phase)
            })
            .collect(),
    }
}

/// Maps `b_sym` bits to `K` constellation points, most significant group first.
pub fn modulate_symbols(sym_bits: u32, scheme: &ImScheme) -> Vec<Complex64> {
    let table = psk_constellation(scheme.m());
    modulate_with(&table, sym_bits, scheme)
}

fn modulate_with(table: &[Complex64], sym_bits: u32, scheme: &ImScheme) -> Vec<Complex64> {
    let bps = scheme.bits_per_symbol();
    let mask = (scheme.m() - 1) as u32;
    (0..scheme.k())
        .map(|i| {
            let shift = bps * (scheme.k() - 1 - i) as u32;
            table[((sym_bits >> shift) & mask) as usize]
        })
        .collect()
}

/// Length-N complex transmit vector of one SC-IM block.
#[derive(Debug, Clone, PartialEq)]
pub struct TxVector(pub Vec<Complex64>);

impl TxVector {
    pub fn zeros(n: usize) -> Self {
        TxVector(vec![Complex64::new(0.0, 0.0); n])
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Maps a `b`-bit word to its transmit vector.
pub fn map_bits(word: u32, scheme: &ImScheme) -> Result<TxVector, CodecError> {
    scheme.check_word(word)?;
    let (pattern, symbols) = split_word(word, scheme, &psk_constellation(scheme.m()))?;
    Ok(place(scheme.n(), &pattern, &symbols))
}

fn split_word(
    word: u32,
    scheme: &ImScheme,
    table: &[Complex64],
) -> Result<(ActivePattern, Vec<Complex64>), CodecError> {
    let sym_mask = if scheme.symbol_bits() == 0 {
        0
    } else {
        u32::MAX >> (32 - scheme.symbol_bits())
    };
    let index = (word as u64) >> scheme.symbol_bits();
    let pattern = unrank_pattern(index, scheme.n(), scheme.k())?;
    let symbols = modulate_with(table, word & sym_mask, scheme);
    Ok((pattern, symbols))
}

fn place(n: usize, pattern: &ActivePattern, symbols: &[Complex64]) -> TxVector {
    let mut v = TxVector::zeros(n);
    for (&pos, &s) in pattern.indices().iter().zip(symbols) {
        v.0[pos] = s;
    }
    v
}

/// Inverse of [`map_bits`]; fails unless `entry` is exactly a legal codeword.
pub fn demap_vector(entry: &TxVector, scheme: &ImScheme) -> Result<u32, CodecError> {
    if entry.len() != scheme.n() {
        return Err(CodecError::LengthMismatch {
            expected: scheme.n(),
            got: entry.len(),
        });
    }
    let active: Vec<usize> = entry
        .0
        .iter()
        .enumerate()
        .filter(|(_, z)| z.norm() > MATCH_TOL)
        .map(|(i, _)| i)
        .collect();
    if active.len() != scheme.k() {
        return Err(CodecError::NotACodeword);
    }
    let pattern = ActivePattern(active);
    let rank = rank_pattern(&pattern, scheme.n())?;
    if rank >= scheme.num_patterns() as u64 {
        return Err(CodecError::NotACodeword);
    }
    let table = psk_constellation(scheme.m());
    let bps = scheme.bits_per_symbol();
    let mut sym_bits = 0u32;
    for &pos in pattern.indices() {
        let label = table
            .iter()
            .position(|p| (p - entry.0[pos]).norm() < MATCH_TOL)
            .ok_or(CodecError::NotACodeword)?;
        sym_bits = (sym_bits << bps) | label as u32;
    }
    Ok(((rank as u32) << scheme.symbol_bits()) | sym_bits)
}

/// One row of a [`Codebook`].
#[derive(Debug, Clone, PartialEq)]
pub struct CodebookEntry {
    pub bits: u32,
    pub class: usize,
    pub pattern: ActivePattern,
    pub symbols: Vec<Complex64>,
    pub vector: TxVector,
}

/// All `2^b` legal transmit vectors of one user, row `i` holding word `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    scheme: ImScheme,
    entries: Vec<CodebookEntry>,
}

impl Codebook {
    pub fn build(scheme: &ImScheme) -> Result<Self, CodecError> {
        if scheme.bits() > MAX_BITS {
            return Err(CodecError::CodebookTooLarge {
                bits: scheme.bits(),
            });
        }
        let table = psk_constellation(scheme.m());
        let entries = (0..scheme.num_classes())
            .map(|class| {
                let bits = class as u32;
                let (pattern, symbols) = split_word(bits, scheme, &table)?;
                let vector = place(scheme.n(), &pattern, &symbols);
                Ok(CodebookEntry {
                    bits,
                    class,
                    pattern,
                    symbols,
                    vector,
                })
            })
            .collect::<Result<Vec<_>, CodecError>>()?;
        Ok(Codebook {
            scheme: *scheme,
            entries,
        })
    }

    pub fn scheme(&self) -> &ImScheme {
        &self.scheme
    }

    pub fn entries(&self) -> &[CodebookEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn vector(&self, class: usize) -> &TxVector {
        &self.entries[class].vector
    }
}

/// Convenience wrapper matching the codec's free-function style.
pub fn build_codebook(scheme: &ImScheme) -> Result<Codebook, CodecError> {
    Codebook::build(scheme)
}

/// One-hot label of `class` with `2^b` entries.
pub fn class_to_onehot(class: usize, scheme: &ImScheme) -> Result<Vec<f64>, CodecError> {
    let size = scheme.num_classes();
    if class >= size {
        return Err(CodecError::ClassOutOfRange { class, size });
    }
    let mut v = vec![0.0; size];
    v[class] = 1.0;
    Ok(v)
}

/// Index of the largest entry; the lowest index wins exact ties.
///
/// Returns `None` for an empty slice. NaN entries never win.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ if v.is_nan() => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Hard decision on a soft (or one-hot) class vector.
pub fn onehot_to_class(values: &[f64], scheme: &ImScheme) -> Result<usize, CodecError> {
    if values.len() != scheme.num_classes() {
        return Err(CodecError::LengthMismatch {
            expected: scheme.num_classes(),
            got: values.len(),
        });
    }
    argmax(values).ok_or(CodecError::LengthMismatch {
        expected: scheme.num_classes(),
        got: 0,
    })
}
