//! Maximum-likelihood baselines: joint ML over both users' codebooks and
//! ML successive interference cancellation.
//!
//! Both detectors precompute the effective codewords `sqrt(P_l) * h_l ⊙ x`
//! once per channel, then search with the squared Euclidean metric. Ties go
//! to the lowest class (lexicographically lowest pair for the joint search).

use num_complex::Complex64;
use thiserror::Error;

use crate::channel::{NomaChannel, RxSignal};
use crate::im_codec::{Codebook, ImScheme};
use crate::link::BlockDetector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectError {
    #[error("detector supports exactly 2 users, channel has {0}")]
    UnsupportedUserCount(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("codebook scheme differs between users")]
    SchemeMismatch,
}

/// Decisions of one detector call.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub classes: Vec<usize>,
    pub bits: Vec<u32>,
    /// Euclidean norm of the final residual.
    pub metric: f64,
}

/// Effective codewords of one user, flattened as `classes x N`.
#[derive(Debug, Clone)]
struct EffectiveBook {
    n: usize,
    points: Vec<Complex64>,
}

impl EffectiveBook {
    fn new(book: &Codebook, h: &[Complex64], power: f64) -> Self {
        let amp = power.sqrt();
        let n = h.len();
        let mut points = Vec::with_capacity(book.len() * n);
        for e in book.entries() {
            points.extend(h.iter().zip(e.vector.as_slice()).map(|(h, x)| h * x * amp));
        }
        EffectiveBook { n, points }
    }

    fn classes(&self) -> usize {
        self.points.len() / self.n
    }

    fn row(&self, class: usize) -> &[Complex64] {
        &self.points[class * self.n..(class + 1) * self.n]
    }

    /// Lowest-class argmin of `||y - row||^2`.
    fn nearest(&self, y: &[Complex64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (class, row) in self.points.chunks_exact(self.n).enumerate() {
            let d = dist_sqr(y, row);
            if d < best.1 {
                best = (class, d);
            }
        }
        best
    }
}

fn dist_sqr(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| (a - b).norm_sqr()).sum()
}

fn check_setup(ch: &NomaChannel, books: &[Codebook]) -> Result<ImScheme, DetectError> {
    if ch.users() != 2 {
        return Err(DetectError::UnsupportedUserCount(ch.users()));
    }
    if books.len() != 2 {
        return Err(DetectError::DimensionMismatch {
            expected: 2,
            got: books.len(),
        });
    }
    let scheme = *books[0].scheme();
    if *books[1].scheme() != scheme {
        return Err(DetectError::SchemeMismatch);
    }
    if scheme.n() != ch.subcarriers() {
        return Err(DetectError::DimensionMismatch {
            expected: ch.subcarriers(),
            got: scheme.n(),
        });
    }
    Ok(scheme)
}

fn check_rx(rx: &RxSignal, n: usize) -> Result<(), DetectError> {
    if rx.y.len() != n {
        return Err(DetectError::DimensionMismatch {
            expected: n,
            got: rx.y.len(),
        });
    }
    Ok(())
}

/// Single-user ML search: lowest-class argmin of `||y_eff - sqrt(P) h ⊙ x||`.
///
/// Returns the class and the Euclidean norm of the best residual.
pub fn ml_single_user(
    y_eff: &[Complex64],
    h: &[Complex64],
    power: f64,
    book: &Codebook,
) -> (usize, f64) {
    let (class, d) = EffectiveBook::new(book, h, power).nearest(y_eff);
    (class, d.sqrt())
}

/// Exhaustive joint ML detector over all `2^b x 2^b` codeword pairs.
#[derive(Debug, Clone)]
pub struct JmlDetector {
    scheme: ImScheme,
    books: [EffectiveBook; 2],
}

impl JmlDetector {
    pub fn new(ch: &NomaChannel, books: &[Codebook]) -> Result<Self, DetectError> {
        let scheme = check_setup(ch, books)?;
        Ok(JmlDetector {
            scheme,
            books: [
                EffectiveBook::new(&books[0], ch.gain(0), ch.power(0)),
                EffectiveBook::new(&books[1], ch.gain(1), ch.power(1)),
            ],
        })
    }

    /// Number of joint hypotheses searched per block.
    pub fn hypotheses(&self) -> usize {
        self.books[0].classes() * self.books[1].classes()
    }

    fn search(&self, y: &[Complex64]) -> (usize, usize, f64) {
        let n = self.scheme.n();
        let mut residual = vec![Complex64::new(0.0, 0.0); n];
        let mut best = (0, 0, f64::INFINITY);
        for c1 in 0..self.books[0].classes() {
            for ((r, y), p) in residual.iter_mut().zip(y).zip(self.books[0].row(c1)) {
                *r = y - p;
            }
            for (c2, row) in self.books[1].points.chunks_exact(n).enumerate() {
                let d = dist_sqr(&residual, row);
                if d < best.2 {
                    best = (c1, c2, d);
                }
            }
        }
        best
    }

    pub fn detect(&self, rx: &RxSignal) -> Result<DetectionResult, DetectError> {
        check_rx(rx, self.scheme.n())?;
        let (c1, c2, d) = self.search(&rx.y);
        Ok(DetectionResult {
            classes: vec![c1, c2],
            bits: vec![c1 as u32, c2 as u32],
            metric: d.sqrt(),
        })
    }
}

/// Joint ML detection (one-shot form; builds the detector on every call).
pub fn jml_detect(
    rx: &RxSignal,
    ch: &NomaChannel,
    books: &[Codebook],
) -> Result<DetectionResult, DetectError> {
    JmlDetector::new(ch, books)?.detect(rx)
}

/// Two-stage ML-SIC: detect user 1 treating user 2 as noise, cancel its
/// reconstruction, then detect user 2 on the residual.
#[derive(Debug, Clone)]
pub struct SicDetector {
    scheme: ImScheme,
    books: [EffectiveBook; 2],
}

impl SicDetector {
    pub fn new(ch: &NomaChannel, books: &[Codebook]) -> Result<Self, DetectError> {
        let scheme = check_setup(ch, books)?;
        Ok(SicDetector {
            scheme,
            books: [
                EffectiveBook::new(&books[0], ch.gain(0), ch.power(0)),
                EffectiveBook::new(&books[1], ch.gain(1), ch.power(1)),
            ],
        })
    }

    fn search(&self, y: &[Complex64]) -> (usize, usize, f64) {
        let (c1, _) = self.books[0].nearest(y);
        let residual: Vec<Complex64> = y
            .iter()
            .zip(self.books[0].row(c1))
            .map(|(y, p)| y - p)
            .collect();
        let (c2, d) = self.books[1].nearest(&residual);
        (c1, c2, d)
    }

    pub fn detect(&self, rx: &RxSignal) -> Result<DetectionResult, DetectError> {
        check_rx(rx, self.scheme.n())?;
        let (c1, c2, d) = self.search(&rx.y);
        Ok(DetectionResult {
            classes: vec![c1, c2],
            bits: vec![c1 as u32, c2 as u32],
            metric: d.sqrt(),
        })
    }
}

/// ML-SIC detection (one-shot form).
pub fn sic_detect(
    rx: &RxSignal,
    ch: &NomaChannel,
    books: &[Codebook],
) -> Result<DetectionResult, DetectError> {
    SicDetector::new(ch, books)?.detect(rx)
}

impl BlockDetector for JmlDetector {
    fn users(&self) -> usize {
        2
    }

    fn detect_classes(&self, rx: &RxSignal, out: &mut [usize]) {
        let (c1, c2, _) = self.search(&rx.y);
        out[0] = c1;
        out[1] = c2;
    }
}

impl BlockDetector for SicDetector {
    fn users(&self) -> usize {
        2
    }

    fn detect_classes(&self, rx: &RxSignal, out: &mut [usize]) {
        let (c1, c2, _) = self.search(&rx.y);
        out[0] = c1;
        out[1] = c2;
    }
}
