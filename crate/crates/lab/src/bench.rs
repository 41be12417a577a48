//! Per-sample detection runtime.
//!
//! All receivers see the same pre-generated stream of received blocks.
//! Codebook precomputation, model loading and RNG work happen before the
//! clock starts, and each receiver gets [`WARMUP_CALLS`] untimed calls first.
//! The benchmark is single-threaded.

use std::hint::black_box;
use std::time::Instant;

use scim_noma::channel::{add_awgn, superimpose};
use scim_noma::deepsic::DeepSicModel;
use scim_noma::link::BlockDetector;
use scim_noma::rng::child_stream;
use scim_noma::{Codebook, JmlDetector, RxSignal, SicDetector};

use rand::Rng;

use crate::config::{DetectorKind, SimConfig, MIN_BENCH_SAMPLES};
use crate::LabError;

pub const WARMUP_CALLS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeEntry {
    pub detector: DetectorKind,
    pub samples: usize,
    pub total_seconds: f64,
    pub seconds_per_sample: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RuntimeReport {
    pub entries: Vec<RuntimeEntry>,
}

impl RuntimeReport {
    pub fn get(&self, kind: DetectorKind) -> Option<&RuntimeEntry> {
        self.entries.iter().find(|e| e.detector == kind)
    }

    /// Checks `t_JML > t_MLSIC > t_DeepSIC`.
    pub fn check_ordering(&self) -> Result<(), LabError> {
        let t = |k| self.get(k).map(|e: &RuntimeEntry| e.seconds_per_sample);
        match (
            t(DetectorKind::Jml),
            t(DetectorKind::Mlsic),
            t(DetectorKind::Deepsic),
        ) {
            (Some(jml), Some(sic), Some(dnn)) if jml > sic && sic > dnn => Ok(()),
            (Some(jml), Some(sic), Some(dnn)) => Err(LabError::BenchOrdering(format!(
                "expected t_JML > t_MLSIC > t_DeepSIC, measured {jml:.3e} / {sic:.3e} / {dnn:.3e} s"
            ))),
            _ => Err(LabError::BenchOrdering(
                "all three detectors must be benchmarked".into(),
            )),
        }
    }

    /// `t_a / t_b`, if both were measured.
    pub fn ratio(&self, a: DetectorKind, b: DetectorKind) -> Option<f64> {
        Some(self.get(a)?.seconds_per_sample / self.get(b)?.seconds_per_sample)
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("detector,samples,total_seconds,seconds_per_sample\n");
        for e in &self.entries {
            s.push_str(&format!(
                "{},{},{},{}\n",
                e.detector, e.samples, e.total_seconds, e.seconds_per_sample
            ));
        }
        s
    }
}

/// Random received blocks for the benchmark, reproducible from `seed`.
pub fn input_stream(
    book: &Codebook,
    cfg: &SimConfig,
    samples: usize,
    seed: u64,
) -> Result<Vec<RxSignal>, LabError> {
    let mut r = child_stream(seed, &[0xbe9c]);
    (0..samples)
        .map(|_| {
            let tx: Vec<_> = (0..cfg.channel.users())
                .map(|_| book.vector(r.random_range(0..book.len())).clone())
                .collect();
            let clean = superimpose(&tx, &cfg.channel)?;
            Ok(add_awgn(&clean, cfg.raw.bench_snr_db, &mut r))
        })
        .collect()
}

/// Times `det` over `stream`, after warm-up calls.
pub fn time_detector<D: BlockDetector + ?Sized>(det: &D, stream: &[RxSignal]) -> (f64, usize) {
    let mut out = vec![0usize; det.users()];
    for rx in stream.iter().cycle().take(WARMUP_CALLS) {
        det.detect_classes(black_box(rx), &mut out);
        black_box(&out);
    }
    let start = Instant::now();
    for rx in stream {
        det.detect_classes(black_box(rx), &mut out);
        black_box(&out);
    }
    (start.elapsed().as_secs_f64(), stream.len())
}

fn entry(detector: DetectorKind, (total, samples): (f64, usize)) -> RuntimeEntry {
    RuntimeEntry {
        detector,
        samples,
        total_seconds: total,
        seconds_per_sample: total / samples as f64,
    }
}

/// Benchmarks the configured detectors on one shared input stream.
pub fn run_bench(
    cfg: &SimConfig,
    model: Option<&DeepSicModel>,
    samples: usize,
) -> Result<RuntimeReport, LabError> {
    if samples < MIN_BENCH_SAMPLES {
        return Err(LabError::Config(crate::config::ConfigError::Invalid(
            format!("benchmark needs at least {MIN_BENCH_SAMPLES} samples"),
        )));
    }
    let book = Codebook::build(&cfg.scheme)?;
    let books = [book.clone(), book.clone()];
    let stream = input_stream(&book, cfg, samples, cfg.seed())?;
    let mut report = RuntimeReport::default();
    for &kind in cfg.detectors() {
        let timing = match kind {
            DetectorKind::Jml => time_detector(&JmlDetector::new(&cfg.channel, &books)?, &stream),
            DetectorKind::Mlsic => time_detector(&SicDetector::new(&cfg.channel, &books)?, &stream),
            DetectorKind::Deepsic => {
                let model = model.ok_or(LabError::MissingModel)?;
                time_detector(&model.detector(&cfg.channel)?, &stream)
            }
        };
        report.entries.push(entry(kind, timing));
    }
    Ok(report)
}
