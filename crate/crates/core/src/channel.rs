//! Uplink NOMA superposition and AWGN.
//!
//! The base station observes `y = sum_l sqrt(P_l) * (h_l ⊙ x_l) + w` per
//! subcarrier, with `w` circularly-symmetric complex Gaussian of variance
//! `N0` per entry. SNR is referenced to unit symbol energy, so
//! `N0 = 10^(-snr_db / 10)`. An SNR of `+inf` means noiseless.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::im_codec::TxVector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("channel needs at least one user")]
    NoUsers,
    #[error("power coefficients must be finite, non-negative and strictly decreasing: {0:?}")]
    PowerOrdering(Vec<f64>),
    #[error("channel of user 1 has a zero entry at subcarrier {0}")]
    ZeroReferenceGain(usize),
    #[error("non-finite channel gain for user {user}")]
    NonFiniteGain { user: usize },
}

/// Fixed per-user channel vectors and power coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct NomaChannel {
    gains: Vec<Vec<Complex64>>,
    power: Vec<f64>,
}

impl NomaChannel {
    pub fn new(gains: Vec<Vec<Complex64>>, power: Vec<f64>) -> Result<Self, ChannelError> {
        if gains.is_empty() {
            return Err(ChannelError::NoUsers);
        }
        if power.len() != gains.len() {
            return Err(ChannelError::DimensionMismatch {
                expected: gains.len(),
                got: power.len(),
            });
        }
        let n = gains[0].len();
        for (user, h) in gains.iter().enumerate() {
            if h.len() != n {
                return Err(ChannelError::DimensionMismatch {
                    expected: n,
                    got: h.len(),
                });
            }
            if h.iter().any(|z| !z.is_finite()) {
                return Err(ChannelError::NonFiniteGain { user });
            }
        }
        if let Some(pos) = gains[0].iter().position(|z| z.norm_sqr() == 0.0) {
            return Err(ChannelError::ZeroReferenceGain(pos));
        }
        let ordered = power.windows(2).all(|w| w[0] > w[1]);
        if !ordered || power.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(ChannelError::PowerOrdering(power));
        }
        Ok(NomaChannel { gains, power })
    }

    /// Real-valued gains, as in the fixed-channel experiments.
    pub fn from_real(gains: &[Vec<f64>], power: &[f64]) -> Result<Self, ChannelError> {
        let gains = gains
            .iter()
            .map(|h| h.iter().map(|&g| Complex64::new(g, 0.0)).collect())
            .collect();
        Self::new(gains, power.to_vec())
    }

    /// The two-user reference setup: `h1 = [2,2,2,2]`, `h2 = [1,1,1,1]`, `P = (2, 1)`.
    pub fn reference() -> Self {
        Self::from_real(&[vec![2.0; 4], vec![1.0; 4]], &[2.0, 1.0])
            .expect("reference channel is valid")
    }

    pub fn users(&self) -> usize {
        self.gains.len()
    }

    pub fn subcarriers(&self) -> usize {
        self.gains[0].len()
    }

    pub fn gain(&self, user: usize) -> &[Complex64] {
        &self.gains[user]
    }

    pub fn power(&self, user: usize) -> f64 {
        self.power[user]
    }

    pub fn powers(&self) -> &[f64] {
        &self.power
    }

    /// `sqrt(P_l) * (h_l ⊙ x)` for one user.
    pub fn contribution(&self, user: usize, x: &[Complex64]) -> Vec<Complex64> {
        let amp = self.power[user].sqrt();
        self.gains[user]
            .iter()
            .zip(x)
            .map(|(h, x)| h * x * amp)
            .collect()
    }
}

/// Received block together with the SNR its noise was drawn at.
#[derive(Debug, Clone, PartialEq)]
pub struct RxSignal {
    pub y: Vec<Complex64>,
    pub snr_db: f64,
}

/// Noise-free superposition of all users' transmit vectors.
pub fn superimpose(tx: &[TxVector], ch: &NomaChannel) -> Result<Vec<Complex64>, ChannelError> {
    if tx.len() != ch.users() {
        return Err(ChannelError::DimensionMismatch {
            expected: ch.users(),
            got: tx.len(),
        });
    }
    let n = ch.subcarriers();
    let mut y = vec![Complex64::new(0.0, 0.0); n];
    for (user, x) in tx.iter().enumerate() {
        if x.len() != n {
            return Err(ChannelError::DimensionMismatch {
                expected: n,
                got: x.len(),
            });
        }
        let amp = ch.power(user).sqrt();
        for ((acc, h), s) in y.iter_mut().zip(ch.gain(user)).zip(x.as_slice()) {
            *acc += h * s * amp;
        }
    }
    Ok(y)
}

/// `N0 = 10^(-snr_db / 10)`; zero at `+inf`.
pub fn noise_variance_from_snr(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Adds complex AWGN with variance `N0` per entry (`N0/2` per real dimension).
///
/// `snr_db = +inf` returns the input untouched and draws nothing from `rng`.
pub fn add_awgn<R: Rng + ?Sized>(signal: &[Complex64], snr_db: f64, rng: &mut R) -> RxSignal {
    let mut y = signal.to_vec();
    add_awgn_in_place(&mut y, snr_db, rng);
    RxSignal { y, snr_db }
}

pub(crate) fn add_awgn_in_place<R: Rng + ?Sized>(y: &mut [Complex64], snr_db: f64, rng: &mut R) {
    if snr_db == f64::INFINITY {
        return;
    }
    let sigma = (noise_variance_from_snr(snr_db) / 2.0).sqrt();
    for z in y.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *z += Complex64::new(re * sigma, im * sigma);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::im_codec::{build_codebook, ImScheme};
    use crate::rng;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn e0(n: usize, s: Complex64) -> TxVector {
        let mut v = TxVector::zeros(n);
        v.0[0] = s;
        v
    }

    #[test]
    fn superimpose_reference_constants() {
        let ch = NomaChannel::reference();
        let s = c(FRAC_1_SQRT_2, FRAC_1_SQRT_2);
        let y = superimpose(&[e0(4, s), e0(4, s)], &ch).unwrap();
        // sqrt(2)*2*s + 1*1*s
        let expected = s * (2.0 * 2f64.sqrt() + 1.0);
        assert!((y[0] - expected).norm() < 1e-12);
        assert!(y[1..].iter().all(|z| *z == c(0.0, 0.0)));
    }

    #[test]
    fn single_user_identity_channel() {
        let ch = NomaChannel::from_real(&[vec![1.0; 4]], &[1.0]).unwrap();
        let scheme = ImScheme::new(4, 1, 4).unwrap();
        let cb = build_codebook(&scheme).unwrap();
        for e in cb.entries() {
            let y = superimpose(std::slice::from_ref(&e.vector), &ch).unwrap();
            assert_eq!(y, e.vector.0);
        }
    }

    #[test]
    fn zero_tx_gives_zero() {
        let ch = NomaChannel::reference();
        let y = superimpose(&[TxVector::zeros(4), TxVector::zeros(4)], &ch).unwrap();
        assert!(y.iter().all(|z| *z == c(0.0, 0.0)));
    }

    #[test]
    fn superposition_is_linear() {
        let ch = NomaChannel::new(
            vec![
                vec![c(2.0, 0.5), c(1.5, -0.3), c(0.7, 0.2), c(2.2, 1.0)],
                vec![c(1.0, 0.1), c(-0.4, 0.9), c(0.3, 0.3), c(1.1, -0.6)],
            ],
            vec![2.0, 1.0],
        )
        .unwrap();
        let cb = build_codebook(&ImScheme::new(4, 1, 4).unwrap()).unwrap();
        let (x1, x2) = (cb.vector(5).clone(), cb.vector(11).clone());
        let joint = superimpose(&[x1.clone(), x2.clone()], &ch).unwrap();
        let a = superimpose(&[x1, TxVector::zeros(4)], &ch).unwrap();
        let b = superimpose(&[TxVector::zeros(4), x2], &ch).unwrap();
        for i in 0..4 {
            assert_eq!(joint[i], a[i] + b[i]);
        }
    }

    #[test]
    fn superimpose_dimension_errors() {
        let ch = NomaChannel::reference();
        assert!(superimpose(&[TxVector::zeros(4)], &ch).is_err());
        assert!(superimpose(&[TxVector::zeros(4), TxVector::zeros(3)], &ch).is_err());
    }

    #[test]
    fn channel_validation() {
        assert_eq!(
            NomaChannel::from_real(&[vec![2.0, 0.0], vec![1.0, 1.0]], &[2.0, 1.0]),
            Err(ChannelError::ZeroReferenceGain(1))
        );
        assert!(matches!(
            NomaChannel::from_real(&[vec![2.0; 2], vec![1.0; 2]], &[1.0, 2.0]),
            Err(ChannelError::PowerOrdering(_))
        ));
        assert!(NomaChannel::from_real(&[vec![2.0; 2], vec![1.0; 3]], &[2.0, 1.0]).is_err());
        assert!(NomaChannel::from_real(&[vec![2.0; 2], vec![1.0; 2]], &[2.0, 0.0]).is_ok());
    }

    #[test]
    fn noise_variance_examples() {
        assert_eq!(noise_variance_from_snr(0.0), 1.0);
        assert!((noise_variance_from_snr(10.0) - 0.1).abs() < 1e-15);
        assert!((noise_variance_from_snr(18.0) - 0.015848931924611134).abs() < 1e-15);
        assert_eq!(noise_variance_from_snr(f64::INFINITY), 0.0);
    }

    #[test]
    fn noiseless_flag_is_exact() {
        let mut r = rng::stream(1);
        let sig = vec![c(0.3, -0.2); 4];
        let rx = add_awgn(&sig, f64::INFINITY, &mut r);
        assert_eq!(rx.y, sig);
    }

    #[test]
    fn noise_statistics_at_zero_db() {
        let mut r = rng::stream(42);
        let n = 1_000_000;
        let zeros = vec![c(0.0, 0.0); n];
        let rx = add_awgn(&zeros, 0.0, &mut r);
        let mean = rx.y.iter().sum::<Complex64>() / n as f64;
        let var = rx.y.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
        assert!((0.99..=1.01).contains(&var), "variance {var}");
        // each real component has std sqrt(1/2)
        let bound = 3.0 * (0.5f64).sqrt() / (n as f64).sqrt();
        assert!(
            mean.re.abs() < bound && mean.im.abs() < bound,
            "mean {mean}"
        );
    }

    #[test]
    fn noise_is_deterministic_per_seed() {
        let sig = vec![c(1.0, 0.0); 4];
        let a = add_awgn(&sig, 10.0, &mut rng::stream(9));
        let b = add_awgn(&sig, 10.0, &mut rng::stream(9));
        assert_eq!(a, b);
        let d = add_awgn(&sig, 10.0, &mut rng::stream(10));
        assert_ne!(a, d);
    }
}
