//! Monte-Carlo link loop shared by every detector.

use rand::Rng;
use rayon::prelude::*;

use crate::channel::{self, NomaChannel, RxSignal};
use crate::im_codec::Codebook;
use crate::rng;

/// Blocks simulated per independent RNG stream.
pub const BLOCKS_PER_CHUNK: u64 = 4096;

/// A receiver that turns one received block into per-user class decisions.
pub trait BlockDetector: Sync {
    fn users(&self) -> usize;

    /// Writes one class per user into `out` (length `users()`).
    fn detect_classes(&self, rx: &RxSignal, out: &mut [usize]);
}

/// Exact bit-error tally for one user.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ErrorCount {
    pub bit_errors: u64,
    pub bits_tested: u64,
}

impl ErrorCount {
    pub fn ber(&self) -> f64 {
        if self.bits_tested == 0 {
            return 0.0;
        }
        self.bit_errors as f64 / self.bits_tested as f64
    }

    pub fn merge(self, other: ErrorCount) -> ErrorCount {
        ErrorCount {
            bit_errors: self.bit_errors + other.bit_errors,
            bits_tested: self.bits_tested + other.bits_tested,
        }
    }
}

/// Simulates `n_blocks` blocks at `snr_db` and counts bit errors per user.
///
/// Blocks are split into chunks of [`BLOCKS_PER_CHUNK`]; chunk `i` draws from
/// the stream derived from `(seed, i)`, so results do not depend on how many
/// worker threads run the chunks.
pub fn simulate_ber<D: BlockDetector + ?Sized>(
    det: &D,
    book: &Codebook,
    ch: &NomaChannel,
    snr_db: f64,
    n_blocks: u64,
    seed: u64,
) -> Vec<ErrorCount> {
    let users = ch.users();
    let chunks = n_blocks.div_ceil(BLOCKS_PER_CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let start = chunk * BLOCKS_PER_CHUNK;
            let len = BLOCKS_PER_CHUNK.min(n_blocks - start);
            let mut r = rng::child_stream(seed, &[chunk]);
            run_chunk(det, book, ch, snr_db, len, &mut r)
        })
        .reduce(
            || vec![ErrorCount::default(); users],
            |a, b| a.into_iter().zip(b).map(|(a, b)| a.merge(b)).collect(),
        )
}

fn run_chunk<D: BlockDetector + ?Sized, R: Rng>(
    det: &D,
    book: &Codebook,
    ch: &NomaChannel,
    snr_db: f64,
    blocks: u64,
    r: &mut R,
) -> Vec<ErrorCount> {
    let users = ch.users();
    let bits = book.scheme().bits() as u64;
    let classes = book.len();
    let n = ch.subcarriers();
    // Received contribution of every (user, class) pair.
    let contrib: Vec<Vec<_>> = (0..users)
        .map(|u| {
            (0..classes)
                .flat_map(|c| ch.contribution(u, book.vector(c).as_slice()))
                .collect()
        })
        .collect();
    let mut counts = vec![ErrorCount::default(); users];
    let mut sent = vec![0usize; users];
    let mut decided = vec![0usize; users];
    let mut rx = RxSignal {
        y: vec![Default::default(); n],
        snr_db,
    };
    for _ in 0..blocks {
        rx.y.iter_mut().for_each(|z| *z = Default::default());
        for (u, s) in sent.iter_mut().enumerate() {
            *s = r.random_range(0..classes);
            for (acc, p) in rx.y.iter_mut().zip(&contrib[u][*s * n..(*s + 1) * n]) {
                *acc += p;
            }
        }
        channel::add_awgn_in_place(&mut rx.y, snr_db, r);
        det.detect_classes(&rx, &mut decided);
        for u in 0..users {
            counts[u].bit_errors += ((sent[u] ^ decided[u]) as u64).count_ones() as u64;
            counts[u].bits_tested += bits;
        }
    }
    counts
}
