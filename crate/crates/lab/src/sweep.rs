//! BER-versus-SNR sweeps and CSV output.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use scim_noma::deepsic::{self, DeepSicModel, TrainHistory};
use scim_noma::link::{simulate_ber, BlockDetector};
use scim_noma::rng::derive_seed;
use scim_noma::{Codebook, ErrorCount, JmlDetector, SicDetector, TrainConfig};

use crate::config::{DetectorKind, SimConfig};
use crate::LabError;

pub const CSV_HEADER: [&str; 6] = [
    "detector",
    "user",
    "snr_db",
    "bit_errors",
    "bits_tested",
    "ber",
];

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct BerRow {
    pub detector: String,
    /// 1-based user index.
    pub user: usize,
    pub snr_db: f64,
    pub bit_errors: u64,
    pub bits_tested: u64,
    pub ber: f64,
}

impl BerRow {
    fn new(detector: &str, user: usize, snr_db: f64, count: ErrorCount) -> Self {
        BerRow {
            detector: detector.to_string(),
            user,
            snr_db,
            bit_errors: count.bit_errors,
            bits_tested: count.bits_tested,
            ber: count.ber(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BerCurve {
    pub rows: Vec<BerRow>,
}

impl BerCurve {
    /// Rows of one detector and user, in grid order.
    pub fn series(&self, detector: &str, user: usize) -> Vec<&BerRow> {
        self.rows
            .iter()
            .filter(|r| r.detector == detector && r.user == user)
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), LabError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(CSV_HEADER)?;
        for r in &self.rows {
            out.write_record([
                r.detector.clone(),
                r.user.to_string(),
                r.snr_db.to_string(),
                r.bit_errors.to_string(),
                r.bits_tested.to_string(),
                r.ber.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

/// Seed of one sweep point: a hash of the master seed, detector and grid index.
pub fn point_seed(master: u64, detector_tag: u64, snr_index: usize) -> u64 {
    derive_seed(master, &[detector_tag, snr_index as u64])
}

/// Sweeps one detector over the grid, appending rows labelled `label`.
pub fn sweep_detector<D: BlockDetector + ?Sized>(
    det: &D,
    label: &str,
    detector_tag: u64,
    cfg: &SimConfig,
    book: &Codebook,
    curve: &mut BerCurve,
) {
    for (i, &snr) in cfg.snr_grid().iter().enumerate() {
        let seed = point_seed(cfg.seed(), detector_tag, i);
        let counts = simulate_ber(det, book, &cfg.channel, snr, cfg.blocks(), seed);
        for (user, c) in counts.into_iter().enumerate() {
            curve.rows.push(BerRow::new(label, user + 1, snr, c));
        }
    }
}

pub fn load_model(path: &Path, cfg: &SimConfig) -> Result<DeepSicModel, LabError> {
    let file = File::open(path).map_err(|e| LabError::Io(path.to_path_buf(), e))?;
    Ok(deepsic::read_bundle_for(
        &mut BufReader::new(file),
        &cfg.scheme,
        cfg.channel.users(),
    )?)
}

pub fn save_model(model: &DeepSicModel, path: &Path) -> Result<(), LabError> {
    let file = File::create(path).map_err(|e| LabError::Io(path.to_path_buf(), e))?;
    let mut w = BufWriter::new(file);
    deepsic::write_bundle(model, &mut w)?;
    w.flush().map_err(|e| LabError::Io(path.to_path_buf(), e))?;
    Ok(())
}

/// The DeepSIC-IM models a sweep evaluates, with their CSV labels.
pub fn resolve_models(cfg: &SimConfig) -> Result<Vec<(String, u64, DeepSicModel)>, LabError> {
    let tag = DetectorKind::Deepsic.id();
    if !cfg.raw.lambda_train_grid.is_empty() {
        return cfg
            .raw
            .lambda_train_grid
            .iter()
            .enumerate()
            .map(|(i, &lambda)| {
                let (model, _) = deepsic::train(&cfg.train_at(lambda), &cfg.scheme, &cfg.channel)?;
                Ok((
                    format!("deepsic@{lambda}"),
                    tag + 16 * (i as u64 + 1),
                    model,
                ))
            })
            .collect();
    }
    if let Some(path) = &cfg.raw.model {
        return Ok(vec![("deepsic".into(), tag, load_model(path, cfg)?)]);
    }
    if cfg.raw.train_inline {
        let (model, _) = deepsic::train(&cfg.train, &cfg.scheme, &cfg.channel)?;
        return Ok(vec![("deepsic".into(), tag, model)]);
    }
    Err(LabError::MissingModel)
}

/// Runs every configured detector over the SNR grid.
///
/// Each (detector, grid point) pair draws from its own derived stream, so
/// the result depends only on the configuration.
pub fn run_sweep(cfg: &SimConfig) -> Result<BerCurve, LabError> {
    let book = Codebook::build(&cfg.scheme)?;
    let books = [book.clone(), book.clone()];
    let mut curve = BerCurve::default();
    for &kind in cfg.detectors() {
        match kind {
            DetectorKind::Jml => {
                let det = JmlDetector::new(&cfg.channel, &books)?;
                sweep_detector(&det, kind.name(), kind.id(), cfg, &book, &mut curve);
            }
            DetectorKind::Mlsic => {
                let det = SicDetector::new(&cfg.channel, &books)?;
                sweep_detector(&det, kind.name(), kind.id(), cfg, &book, &mut curve);
            }
            DetectorKind::Deepsic => {
                for (label, tag, model) in resolve_models(cfg)? {
                    let det = model.detector(&cfg.channel)?;
                    sweep_detector(&det, &label, tag, cfg, &book, &mut curve);
                }
            }
        }
    }
    Ok(curve)
}

/// Path of the run manifest written next to `output`.
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".manifest.txt");
    PathBuf::from(name)
}

/// Run manifest: tool version, command, seed and the effective config.
pub fn manifest(cfg: &SimConfig, command: &str) -> String {
    format!(
        "# {} {}\ncommand = {command:?}\nseed = {}\n\n[config]\n{}",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION"),
        cfg.seed(),
        cfg.to_toml()
    )
}

/// Writes the sweep CSV and its manifest.
pub fn write_outputs(curve: &BerCurve, cfg: &SimConfig, command: &str) -> Result<(), LabError> {
    let out = &cfg.raw.output;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| LabError::Io(dir.to_path_buf(), e))?;
    }
    let file = File::create(out).map_err(|e| LabError::Io(out.clone(), e))?;
    curve.write_csv(BufWriter::new(file))?;
    let mpath = manifest_path(out);
    std::fs::write(&mpath, manifest(cfg, command)).map_err(|e| LabError::Io(mpath, e))?;
    Ok(())
}

/// Per-epoch training history as CSV.
pub fn history_csv(history: &TrainHistory) -> String {
    let users = history.bit_error_rate.first().map_or(0, Vec::len);
    let mut s = String::from("epoch,loss");
    for u in 1..=users {
        s.push_str(&format!(",train_ber_user{u}"));
    }
    s.push('\n');
    for (epoch, (loss, bers)) in history.loss.iter().zip(&history.bit_error_rate).enumerate() {
        s.push_str(&format!("{epoch},{loss}"));
        for b in bers {
            s.push_str(&format!(",{b}"));
        }
        s.push('\n');
    }
    s
}

/// Trains a model from `cfg`, writes the bundle to `path` and a training
/// history CSV next to it.
pub fn cmd_train(
    cfg: &SimConfig,
    train: &TrainConfig,
    path: &Path,
    progress: impl FnMut(usize, f64),
) -> Result<(DeepSicModel, TrainHistory), LabError> {
    let (model, history) =
        deepsic::train_with_progress(train, &cfg.scheme, &cfg.channel, progress)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| LabError::Io(dir.to_path_buf(), e))?;
    }
    save_model(&model, path)?;
    let mut hpath = path.as_os_str().to_owned();
    hpath.push(".history.csv");
    let hpath = PathBuf::from(hpath);
    std::fs::write(&hpath, history_csv(&history)).map_err(|e| LabError::Io(hpath, e))?;
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config_str;

    #[test]
    fn noiseless_jml_point_is_error_free() {
        let cfg = parse_config_str(
            "detectors = [\"jml\", \"mlsic\"]\nsnr_db = [inf]\nblocks = 3000\n",
            &[],
        )
        .unwrap();
        let curve = run_sweep(&cfg).unwrap();
        assert_eq!(curve.rows.len(), 4);
        for r in &curve.rows {
            assert_eq!(r.bit_errors, 0);
            assert_eq!(r.bits_tested, 3000 * 4);
            assert_eq!(r.ber, 0.0);
        }
    }

    #[test]
    fn csv_schema_and_exact_ber() {
        let cfg = parse_config_str(
            "detectors = [\"mlsic\"]\nsnr_db = [2.0, 4.0]\nblocks = 2000\n",
            &[],
        )
        .unwrap();
        let curve = run_sweep(&cfg).unwrap();
        let text = curve.to_csv_string();
        let mut lines = text.lines();
        assert_eq!(
            lines.next(),
            Some("detector,user,snr_db,bit_errors,bits_tested,ber")
        );
        assert_eq!(text.lines().count(), 1 + 4);
        for r in &curve.rows {
            assert_eq!(r.ber, r.bit_errors as f64 / r.bits_tested as f64);
            assert_eq!(r.bits_tested, 2000 * 4);
        }
        assert!(lines.next().unwrap().starts_with("mlsic,1,2,"));
    }

    #[test]
    fn deepsic_without_model_is_an_error() {
        let cfg = parse_config_str("detectors = [\"deepsic\"]\nfast = true\n", &[]).unwrap();
        assert!(matches!(run_sweep(&cfg), Err(LabError::MissingModel)));
    }

    #[test]
    fn manifest_names() {
        assert_eq!(
            manifest_path(Path::new("out/ber.csv")),
            PathBuf::from("out/ber.csv.manifest.txt")
        );
        let cfg = parse_config_str("seed = 12\n", &[]).unwrap();
        let m = manifest(&cfg, "sweep");
        assert!(m.contains("seed = 12"));
        assert!(m.contains("[config]"));
    }

    #[test]
    fn point_seeds_differ_by_detector_and_index() {
        assert_ne!(point_seed(0, 0, 0), point_seed(0, 1, 0));
        assert_ne!(point_seed(0, 0, 0), point_seed(0, 0, 1));
        assert_eq!(point_seed(5, 2, 3), point_seed(5, 2, 3));
    }
}
