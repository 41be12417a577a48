//! Link-level simulation of uplink two-user single-carrier index-modulation
//! NOMA (SC-IM-NOMA) with three receivers: joint maximum likelihood, ML
//! successive interference cancellation, and the learned DeepSIC-IM cascade.
//!
//! The pieces compose as
//! [`im_codec`] → [`channel`] → one of [`ml_detectors`] / [`deepsic`], with
//! [`link`] driving Monte-Carlo bit error counting for any
//! [`link::BlockDetector`].

pub mod channel;
pub mod deepsic;
pub mod im_codec;
pub mod link;
pub mod ml_detectors;
pub mod neural_net;
pub mod rng;

pub use channel::{NomaChannel, RxSignal};
pub use deepsic::{DeepSicModel, TrainConfig};
pub use im_codec::{Codebook, ImScheme};
pub use link::{BlockDetector, ErrorCount};
pub use ml_detectors::{JmlDetector, SicDetector};
