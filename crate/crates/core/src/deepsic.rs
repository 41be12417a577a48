//! DeepSIC-IM: a cascade of per-user classifiers fed with the zero-forcing
//! equalized received block.
//!
//! User `l`'s network sees `s_l = [z, u_1, .., u_{l-1}]`, where `z` is the
//! real/imaginary split of `y ⊙ h_1^-1` and `u_j` are the soft outputs of
//! the earlier networks. Every network ends in a softmax over the `2^b`
//! codewords; the hard decision is the largest entry.
//!
//! Training minimizes `sum_l (1/b) ||u_l - u_hat_l||^2` with Adam on freshly
//! generated batches. With `end_to_end` set, the loss of later users also
//! reaches earlier networks through the soft-output inputs.

use std::io::{Read, Write};

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::channel::{self, ChannelError, NomaChannel, RxSignal};
use crate::im_codec::{argmax, Codebook, CodecError, ImScheme};
use crate::link::{self, BlockDetector, ErrorCount};
use crate::neural_net::{
    self, adam_step, Activation, AdamConfig, AdamState, ForwardCache, GradientSet, MlpParams,
    NetError,
};
use crate::rng::{self, SimRng};

#[derive(Debug, Error)]
pub enum DeepSicError {
    #[error("reference channel has a zero entry at subcarrier {0}")]
    ZeroChannelEntry(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("bad magic bytes in model bundle")]
    BadMagic,
    #[error("unsupported model bundle version {0}")]
    UnsupportedVersion(u16),
    #[error("model bundle is for {found}, expected {expected}")]
    SchemeMismatch { expected: String, found: String },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Hidden layer sizes of the first user's network.
pub const FIRST_HIDDEN: [usize; 2] = [32, 64];
/// Hidden layer sizes of every later user's network.
pub const LATER_HIDDEN: [usize; 2] = [128, 256];

/// Zero-forcing equalization against `h_ref`, returned as `[Re, Im]`.
pub fn zf_equalize(y: &[Complex64], h_ref: &[Complex64]) -> Result<Vec<f64>, DeepSicError> {
    let mut z = vec![0.0; 2 * y.len()];
    zf_equalize_into(y, h_ref, &mut z)?;
    Ok(z)
}

fn zf_equalize_into(
    y: &[Complex64],
    h_ref: &[Complex64],
    z: &mut [f64],
) -> Result<(), DeepSicError> {
    let n = y.len();
    if h_ref.len() != n || z.len() != 2 * n {
        return Err(DeepSicError::ShapeMismatch(format!(
            "y has {n} entries, h_ref {}",
            h_ref.len()
        )));
    }
    if let Some(pos) = h_ref.iter().position(|h| h.norm_sqr() == 0.0) {
        return Err(DeepSicError::ZeroChannelEntry(pos));
    }
    for (i, (y, h)) in y.iter().zip(h_ref).enumerate() {
        let eq = y / h;
        z[i] = eq.re;
        z[n + i] = eq.im;
    }
    Ok(())
}

/// Input width of user `user`'s network (0-based): `2N + user * 2^b`.
pub fn input_width(scheme: &ImScheme, user: usize) -> usize {
    2 * scheme.n() + user * scheme.num_classes()
}

/// Layer sizes and activations of user `user`'s network.
pub fn architecture(scheme: &ImScheme, user: usize) -> (Vec<usize>, Vec<Activation>) {
    let (hidden, act) = if user == 0 {
        (FIRST_HIDDEN, Activation::Tanh)
    } else {
        (LATER_HIDDEN, Activation::Relu)
    };
    (
        vec![
            input_width(scheme, user),
            hidden[0],
            hidden[1],
            scheme.num_classes(),
        ],
        vec![act, act, Activation::Softmax],
    )
}

/// Training settings recorded alongside a trained model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelMeta {
    pub lambda_train: f64,
    pub seed: u64,
    pub end_to_end: bool,
}

impl Default for ModelMeta {
    fn default() -> Self {
        ModelMeta {
            lambda_train: f64::NAN,
            seed: 0,
            end_to_end: true,
        }
    }
}

/// Ordered per-user networks plus the metadata needed to decode with them.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepSicModel {
    scheme: ImScheme,
    dnns: Vec<MlpParams>,
    zf_reference: usize,
    pub meta: ModelMeta,
}

impl DeepSicModel {
    /// Wraps trained networks, enforcing the input/output shape law.
    pub fn new(scheme: ImScheme, dnns: Vec<MlpParams>) -> Result<Self, DeepSicError> {
        if dnns.is_empty() {
            return Err(DeepSicError::ShapeMismatch("no networks".into()));
        }
        for (l, p) in dnns.iter().enumerate() {
            if p.input_dim() != input_width(&scheme, l) || p.output_dim() != scheme.num_classes() {
                return Err(DeepSicError::ShapeMismatch(format!(
                    "network {} is {}->{}, expected {}->{}",
                    l + 1,
                    p.input_dim(),
                    p.output_dim(),
                    input_width(&scheme, l),
                    scheme.num_classes()
                )));
            }
        }
        Ok(DeepSicModel {
            scheme,
            dnns,
            zf_reference: 0,
            meta: ModelMeta::default(),
        })
    }

    /// Freshly initialized (untrained) model for `users` users.
    pub fn init<R: Rng + ?Sized>(
        scheme: ImScheme,
        users: usize,
        rng: &mut R,
    ) -> Result<Self, DeepSicError> {
        let dnns = (0..users)
            .map(|l| {
                let (dims, acts) = architecture(&scheme, l);
                MlpParams::init(&dims, &acts, rng)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(scheme, dnns)
    }

    /// Model whose networks are all zero, i.e. always uniform outputs.
    pub fn zeros(scheme: ImScheme, users: usize) -> Result<Self, DeepSicError> {
        let dnns = (0..users)
            .map(|l| {
                let (dims, acts) = architecture(&scheme, l);
                MlpParams::zeros(&dims, &acts)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(scheme, dnns)
    }

    pub fn scheme(&self) -> &ImScheme {
        &self.scheme
    }

    pub fn users(&self) -> usize {
        self.dnns.len()
    }

    pub fn dnns(&self) -> &[MlpParams] {
        &self.dnns
    }

    pub fn zf_reference(&self) -> usize {
        self.zf_reference
    }

    fn check_channel(&self, ch: &NomaChannel) -> Result<(), DeepSicError> {
        if ch.users() != self.users() || ch.subcarriers() != self.scheme.n() {
            return Err(DeepSicError::ShapeMismatch(format!(
                "model is for {} users x {} subcarriers, channel has {} x {}",
                self.users(),
                self.scheme.n(),
                ch.users(),
                ch.subcarriers()
            )));
        }
        Ok(())
    }

    /// Runs the cascade on `z`, leaving each user's output in `caches[l]`.
    fn cascade(
        &self,
        z: &[f64],
        caches: &mut [ForwardCache],
        s: &mut Vec<f64>,
    ) -> Result<(), NetError> {
        s.clear();
        s.extend_from_slice(z);
        for (l, p) in self.dnns.iter().enumerate() {
            p.forward_into(s, &mut caches[l])?;
            s.extend_from_slice(caches[l].output());
        }
        Ok(())
    }

    /// Soft outputs, hard classes and bit words for every user.
    pub fn detect(
        &self,
        rx: &RxSignal,
        ch: &NomaChannel,
    ) -> Result<Vec<UserDecision>, DeepSicError> {
        self.check_channel(ch)?;
        let z = zf_equalize(&rx.y, ch.gain(self.zf_reference))?;
        let mut caches: Vec<_> = self.dnns.iter().map(ForwardCache::for_params).collect();
        let mut s = Vec::new();
        self.cascade(&z, &mut caches, &mut s)?;
        Ok(caches
            .iter()
            .map(|c| {
                let soft = c.output().to_vec();
                let class = argmax(&soft).unwrap_or(0);
                UserDecision {
                    soft,
                    class,
                    bits: class as u32,
                }
            })
            .collect())
    }

    /// Binds the model to a channel for repeated detection.
    pub fn detector<'a>(&'a self, ch: &NomaChannel) -> Result<DeepSicDetector<'a>, DeepSicError> {
        self.check_channel(ch)?;
        let h_ref = ch.gain(self.zf_reference).to_vec();
        if let Some(pos) = h_ref.iter().position(|h| h.norm_sqr() == 0.0) {
            return Err(DeepSicError::ZeroChannelEntry(pos));
        }
        Ok(DeepSicDetector { model: self, h_ref })
    }
}

/// Per-user output of [`DeepSicModel::detect`].
#[derive(Debug, Clone, PartialEq)]
pub struct UserDecision {
    pub soft: Vec<f64>,
    pub class: usize,
    pub bits: u32,
}

/// A model bound to one channel's equalizer reference.
#[derive(Debug, Clone)]
pub struct DeepSicDetector<'a> {
    model: &'a DeepSicModel,
    h_ref: Vec<Complex64>,
}

impl BlockDetector for DeepSicDetector<'_> {
    fn users(&self) -> usize {
        self.model.users()
    }

    fn detect_classes(&self, rx: &RxSignal, out: &mut [usize]) {
        let mut z = vec![0.0; 2 * rx.y.len()];
        zf_equalize_into(&rx.y, &self.h_ref, &mut z).expect("validated at construction");
        let mut caches: Vec<_> = self
            .model
            .dnns
            .iter()
            .map(ForwardCache::for_params)
            .collect();
        let mut s = Vec::with_capacity(input_width(&self.model.scheme, self.model.users()));
        self.model
            .cascade(&z, &mut caches, &mut s)
            .expect("shapes validated at construction");
        for (o, c) in out.iter_mut().zip(&caches) {
            *o = argmax(c.output()).unwrap_or(0);
        }
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    /// SNR (dB) of the training noise.
    pub lambda_train: f64,
    pub epochs: usize,
    pub samples_per_epoch: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub end_to_end: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda_train: 18.0,
            epochs: 500,
            samples_per_epoch: 4000,
            batch_size: 200,
            learning_rate: 1e-3,
            seed: 0,
            end_to_end: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), DeepSicError> {
        let bad = |msg: &str| Err(DeepSicError::InvalidConfig(msg.to_string()));
        if self.epochs == 0 || self.samples_per_epoch == 0 || self.batch_size == 0 {
            return bad("epochs, samples_per_epoch and batch_size must be positive");
        }
        if !self.samples_per_epoch.is_multiple_of(self.batch_size) {
            return bad("batch_size must divide samples_per_epoch");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive and finite");
        }
        if self.lambda_train.is_nan() {
            return bad("lambda_train must be a number");
        }
        Ok(())
    }
}

/// Per-epoch training statistics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    /// Mean joint loss over the epoch's batches.
    pub loss: Vec<f64>,
    /// Training-stream bit error rate per epoch, one entry per user.
    pub bit_error_rate: Vec<Vec<f64>>,
}

/// Equalized inputs and class labels of one training batch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingBatch {
    /// One `2N` vector per sample.
    pub inputs: Vec<Vec<f64>>,
    /// `classes[user][sample]`.
    pub classes: Vec<Vec<usize>>,
    num_classes: usize,
}

impl TrainingBatch {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// One-hot label vectors of `user`, one per sample.
    pub fn labels(&self, user: usize) -> Vec<Vec<f64>> {
        self.classes[user]
            .iter()
            .map(|&c| {
                let mut u = vec![0.0; self.num_classes];
                u[c] = 1.0;
                u
            })
            .collect()
    }
}

/// Draws uniformly random words per user, passes them through the channel
/// at `snr_db` and equalizes against user 1's channel.
pub fn generate_training_batch<R: Rng + ?Sized>(
    book: &Codebook,
    ch: &NomaChannel,
    snr_db: f64,
    batch_size: usize,
    rng: &mut R,
) -> Result<TrainingBatch, DeepSicError> {
    let users = ch.users();
    let classes_n = book.len();
    if book.scheme().n() != ch.subcarriers() {
        return Err(DeepSicError::ShapeMismatch(
            "codebook and channel disagree on N".into(),
        ));
    }
    let mut classes = vec![Vec::with_capacity(batch_size); users];
    let mut inputs = Vec::with_capacity(batch_size);
    let mut tx = Vec::with_capacity(users);
    for _ in 0..batch_size {
        tx.clear();
        for user_classes in classes.iter_mut() {
            let c = rng.random_range(0..classes_n);
            user_classes.push(c);
            tx.push(book.vector(c).clone());
        }
        let clean = channel::superimpose(&tx, ch)?;
        let rx = channel::add_awgn(&clean, snr_db, rng);
        inputs.push(zf_equalize(&rx.y, ch.gain(0))?);
    }
    Ok(TrainingBatch {
        inputs,
        classes,
        num_classes: classes_n,
    })
}

/// Batch-mean joint loss, its gradients for every network, and the hard
/// decision bit errors of every user.
#[derive(Debug, Clone)]
pub struct BatchGradients {
    pub loss: f64,
    pub grads: Vec<GradientSet>,
    pub bit_errors: Vec<u64>,
}

/// Forward and backward pass of the whole cascade over `batch`.
pub fn joint_gradients(
    model: &DeepSicModel,
    batch: &TrainingBatch,
    end_to_end: bool,
) -> Result<BatchGradients, DeepSicError> {
    let mut ws = Workspace::new(model);
    ws.accumulate(model, batch, end_to_end)?;
    Ok(BatchGradients {
        loss: ws.loss,
        grads: ws.grads,
        bit_errors: ws.bit_errors,
    })
}

/// Reusable buffers for the training loop.
struct Workspace {
    caches: Vec<ForwardCache>,
    grads: Vec<GradientSet>,
    d_inputs: Vec<Vec<f64>>,
    d_outputs: Vec<Vec<f64>>,
    s: Vec<f64>,
    loss: f64,
    bit_errors: Vec<u64>,
}

impl Workspace {
    fn new(model: &DeepSicModel) -> Self {
        Workspace {
            caches: model.dnns.iter().map(ForwardCache::for_params).collect(),
            grads: model.dnns.iter().map(GradientSet::zeros_like).collect(),
            d_inputs: model
                .dnns
                .iter()
                .map(|p| vec![0.0; p.input_dim()])
                .collect(),
            d_outputs: model
                .dnns
                .iter()
                .map(|p| vec![0.0; p.output_dim()])
                .collect(),
            s: Vec::new(),
            loss: 0.0,
            bit_errors: vec![0; model.users()],
        }
    }

    fn accumulate(
        &mut self,
        model: &DeepSicModel,
        batch: &TrainingBatch,
        end_to_end: bool,
    ) -> Result<(), DeepSicError> {
        let users = model.users();
        if batch.classes.len() != users {
            return Err(DeepSicError::ShapeMismatch(format!(
                "batch has labels for {} users, model has {users}",
                batch.classes.len()
            )));
        }
        for g in &mut self.grads {
            g.clear();
        }
        self.loss = 0.0;
        self.bit_errors.iter_mut().for_each(|e| *e = 0);
        let bits = model.scheme.bits();
        let z_len = 2 * model.scheme.n();
        let width = model.scheme.num_classes();
        let inv_batch = 1.0 / batch.len() as f64;
        for (i, z) in batch.inputs.iter().enumerate() {
            model.cascade(z, &mut self.caches, &mut self.s)?;
            for l in 0..users {
                let out = self.caches[l].output();
                let target = batch.classes[l][i];
                let d = &mut self.d_outputs[l];
                let mut loss = 0.0;
                for (j, (dj, &p)) in d.iter_mut().zip(out).enumerate() {
                    let t = if j == target { 1.0 } else { 0.0 };
                    loss += (t - p) * (t - p);
                    *dj = 2.0 * (p - t) / bits as f64 * inv_batch;
                }
                self.loss += loss / bits as f64 * inv_batch;
                let decided = argmax(out).unwrap_or(0);
                self.bit_errors[l] += ((decided ^ target) as u64).count_ones() as u64;
            }
            for l in (0..users).rev() {
                model.dnns[l].backward_accumulate(
                    &self.caches[l],
                    &self.d_outputs[l],
                    &mut self.grads[l],
                    &mut self.d_inputs[l],
                )?;
                if end_to_end {
                    // Route d(loss)/d(u_hat_j) back to the earlier networks.
                    let d_in = &self.d_inputs[l];
                    for j in 0..l {
                        let slice = &d_in[z_len + j * width..z_len + (j + 1) * width];
                        for (acc, v) in self.d_outputs[j].iter_mut().zip(slice) {
                            *acc += v;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Trains a fresh model. `(cfg, scheme, ch)` fully determine the result.
pub fn train(
    cfg: &TrainConfig,
    scheme: &ImScheme,
    ch: &NomaChannel,
) -> Result<(DeepSicModel, TrainHistory), DeepSicError> {
    train_with_progress(cfg, scheme, ch, |_, _| {})
}

/// [`train`] with a callback invoked after every epoch with
/// `(epoch, mean loss)`.
pub fn train_with_progress<F: FnMut(usize, f64)>(
    cfg: &TrainConfig,
    scheme: &ImScheme,
    ch: &NomaChannel,
    mut progress: F,
) -> Result<(DeepSicModel, TrainHistory), DeepSicError> {
    cfg.validate()?;
    if ch.subcarriers() != scheme.n() {
        return Err(DeepSicError::ShapeMismatch(
            "channel and scheme disagree on N".into(),
        ));
    }
    let book = Codebook::build(scheme)?;
    let mut init_rng = rng::child_stream(cfg.seed, &[0]);
    let mut data_rng: SimRng = rng::child_stream(cfg.seed, &[1]);
    let mut model = DeepSicModel::init(*scheme, ch.users(), &mut init_rng)?;
    model.meta = ModelMeta {
        lambda_train: cfg.lambda_train,
        seed: cfg.seed,
        end_to_end: cfg.end_to_end,
    };
    let adam = AdamConfig {
        learning_rate: cfg.learning_rate,
        ..AdamConfig::default()
    };
    let mut states: Vec<_> = model.dnns.iter().map(|p| AdamState::new(p, adam)).collect();
    let mut ws = Workspace::new(&model);
    let mut history = TrainHistory::default();
    let batches = cfg.samples_per_epoch / cfg.batch_size;
    let bits_per_epoch = (cfg.samples_per_epoch as u64 * scheme.bits() as u64) as f64;
    for epoch in 0..cfg.epochs {
        let mut epoch_loss = 0.0;
        let mut epoch_errors = vec![0u64; model.users()];
        for _ in 0..batches {
            let batch = generate_training_batch(
                &book,
                ch,
                cfg.lambda_train,
                cfg.batch_size,
                &mut data_rng,
            )?;
            ws.accumulate(&model, &batch, cfg.end_to_end)?;
            for ((p, g), st) in model.dnns.iter_mut().zip(&ws.grads).zip(&mut states) {
                adam_step(p, g, st)?;
            }
            epoch_loss += ws.loss;
            for (acc, e) in epoch_errors.iter_mut().zip(&ws.bit_errors) {
                *acc += e;
            }
        }
        let mean = epoch_loss / batches as f64;
        history.loss.push(mean);
        history.bit_error_rate.push(
            epoch_errors
                .iter()
                .map(|&e| e as f64 / bits_per_epoch)
                .collect(),
        );
        progress(epoch, mean);
    }
    Ok((model, history))
}

/// Monte-Carlo BER of a trained model; the stream seed is drawn from `rng`.
pub fn ber_of_model<R: Rng + ?Sized>(
    model: &DeepSicModel,
    ch: &NomaChannel,
    snr_db: f64,
    n_blocks: u64,
    rng: &mut R,
) -> Result<Vec<ErrorCount>, DeepSicError> {
    let book = Codebook::build(model.scheme())?;
    let det = model.detector(ch)?;
    let seed: u64 = rng.random();
    Ok(link::simulate_ber(&det, &book, ch, snr_db, n_blocks, seed))
}

const BUNDLE_MAGIC: &[u8; 4] = b"DSIB";
const BUNDLE_VERSION: u16 = 1;

/// Writes the model bundle: a header with `(N, K, M, L, lambda_train, seed,
/// end_to_end, zf_reference)` followed by one weight file per network.
pub fn write_bundle<W: Write>(model: &DeepSicModel, w: &mut W) -> Result<(), DeepSicError> {
    let s = model.scheme;
    w.write_all(BUNDLE_MAGIC)?;
    w.write_all(&BUNDLE_VERSION.to_le_bytes())?;
    for v in [s.n(), s.k(), s.m(), model.users()] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    w.write_all(&model.meta.lambda_train.to_le_bytes())?;
    w.write_all(&model.meta.seed.to_le_bytes())?;
    w.write_all(&[model.meta.end_to_end as u8])?;
    w.write_all(&(model.zf_reference as u32).to_le_bytes())?;
    for p in &model.dnns {
        neural_net::write_params(p, w)?;
    }
    Ok(())
}

fn read_bytes<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N], DeepSicError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

pub fn read_bundle<R: Read>(r: &mut R) -> Result<DeepSicModel, DeepSicError> {
    if &read_bytes::<4, _>(r)? != BUNDLE_MAGIC {
        return Err(DeepSicError::BadMagic);
    }
    let version = u16::from_le_bytes(read_bytes(r)?);
    if version != BUNDLE_VERSION {
        return Err(DeepSicError::UnsupportedVersion(version));
    }
    let mut dims = [0usize; 4];
    for d in &mut dims {
        *d = u32::from_le_bytes(read_bytes(r)?) as usize;
    }
    let [n, k, m, users] = dims;
    let scheme = ImScheme::new(n, k, m)?;
    let lambda_train = f64::from_le_bytes(read_bytes(r)?);
    let seed = u64::from_le_bytes(read_bytes(r)?);
    let end_to_end = read_bytes::<1, _>(r)?[0] != 0;
    let zf_reference = u32::from_le_bytes(read_bytes(r)?) as usize;
    if users == 0 || users > 16 || zf_reference >= users {
        return Err(DeepSicError::ShapeMismatch(format!(
            "bundle declares {users} users with reference {zf_reference}"
        )));
    }
    let dnns = (0..users)
        .map(|_| neural_net::read_params(r))
        .collect::<Result<Vec<_>, _>>()?;
    let mut model = DeepSicModel::new(scheme, dnns)?;
    model.zf_reference = zf_reference;
    model.meta = ModelMeta {
        lambda_train,
        seed,
        end_to_end,
    };
    Ok(model)
}

/// Reads a bundle and refuses it unless it matches `scheme` and `users`.
pub fn read_bundle_for<R: Read>(
    r: &mut R,
    scheme: &ImScheme,
    users: usize,
) -> Result<DeepSicModel, DeepSicError> {
    let model = read_bundle(r)?;
    if model.scheme != *scheme || model.users() != users {
        return Err(DeepSicError::SchemeMismatch {
            expected: format!(
                "(N,K,M)=({},{},{}), L={users}",
                scheme.n(),
                scheme.k(),
                scheme.m()
            ),
            found: format!(
                "(N,K,M)=({},{},{}), L={}",
                model.scheme.n(),
                model.scheme.k(),
                model.scheme.m(),
                model.users()
            ),
        });
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::superimpose;
    use crate::im_codec::{build_codebook, TxVector};

    fn scheme() -> ImScheme {
        ImScheme::new(4, 1, 4).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn zf_identity_channel_splits_y() {
        let y = vec![c(1.0, -2.0), c(0.5, 0.25), c(-3.0, 0.0), c(0.0, 1.0)];
        let z = zf_equalize(&y, &[c(1.0, 0.0); 4]).unwrap();
        assert_eq!(z, vec![1.0, 0.5, -3.0, 0.0, -2.0, 0.25, 0.0, 1.0]);
    }

    #[test]
    fn zf_recovers_scaled_symbol() {
        let ch =
            NomaChannel::from_real(&[vec![2.0, 0.5, 1.5, 3.0], vec![1.0; 4]], &[2.0, 0.0]).unwrap();
        let book = build_codebook(&scheme()).unwrap();
        for e in book.entries() {
            let y = superimpose(&[e.vector.clone(), TxVector::zeros(4)], &ch).unwrap();
            let z = zf_equalize(&y, ch.gain(0)).unwrap();
            assert_eq!(z.len(), 8);
            let amp = 2f64.sqrt();
            for i in 0..4 {
                assert!((z[i] - amp * e.vector.0[i].re).abs() < 1e-15);
                assert!((z[4 + i] - amp * e.vector.0[i].im).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zf_rejects_zero_entry() {
        let y = vec![c(1.0, 0.0); 3];
        let h = vec![c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)];
        assert!(matches!(
            zf_equalize(&y, &h),
            Err(DeepSicError::ZeroChannelEntry(1))
        ));
    }

    #[test]
    fn shape_law() {
        let s = scheme();
        assert_eq!(input_width(&s, 0), 8);
        assert_eq!(input_width(&s, 1), 24);
        let m = DeepSicModel::init(s, 2, &mut rng::stream(0)).unwrap();
        assert_eq!(m.dnns()[0].dims(), vec![8, 32, 64, 16]);
        assert_eq!(m.dnns()[1].dims(), vec![24, 128, 256, 16]);
        let wrong = m.dnns()[0].clone();
        assert!(matches!(
            DeepSicModel::new(s, vec![wrong.clone(), wrong]),
            Err(DeepSicError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn untrained_zero_model_feeds_uniform_vector() {
        let s = scheme();
        let m = DeepSicModel::zeros(s, 2).unwrap();
        let ch = NomaChannel::reference();
        let z = vec![0.3; 8];
        let mut caches: Vec<_> = m.dnns().iter().map(ForwardCache::for_params).collect();
        let mut sbuf = Vec::new();
        m.cascade(&z, &mut caches, &mut sbuf).unwrap();
        assert_eq!(sbuf.len(), 8 + 16 + 16);
        assert!(sbuf[8..24].iter().all(|&v| v == 1.0 / 16.0));
        let rx = RxSignal {
            y: vec![c(0.1, 0.2); 4],
            snr_db: 10.0,
        };
        let out = m.detect(&rx, &ch).unwrap();
        assert_eq!(out.len(), 2);
        for d in out {
            assert!((d.soft.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(d.class, 0);
        }
    }

    #[test]
    fn batch_generation() {
        let book = build_codebook(&scheme()).unwrap();
        let ch = NomaChannel::reference();
        let b = generate_training_batch(&book, &ch, 18.0, 200, &mut rng::stream(1)).unwrap();
        assert_eq!(b.len(), 200);
        assert!(b.inputs.iter().all(|z| z.len() == 8));
        assert_eq!(b.classes.len(), 2);
        for user in 0..2 {
            let labels = b.labels(user);
            assert_eq!(labels.len(), 200);
            assert!(labels
                .iter()
                .all(|u| u.len() == 16 && u.iter().sum::<f64>() == 1.0));
        }
        let again = generate_training_batch(&book, &ch, 18.0, 200, &mut rng::stream(1)).unwrap();
        assert_eq!(b, again);
    }

    #[test]
    fn class_histogram_is_uniform() {
        let book = build_codebook(&scheme()).unwrap();
        let ch = NomaChannel::reference();
        let n = 100_000;
        let b = generate_training_batch(&book, &ch, 18.0, n, &mut rng::stream(2)).unwrap();
        let expected = n as f64 / 16.0;
        let sigma = (n as f64 * (1.0 / 16.0) * (15.0 / 16.0)).sqrt();
        for user in 0..2 {
            let mut hist = [0usize; 16];
            for &c in &b.classes[user] {
                hist[c] += 1;
            }
            let chi2: f64 = hist
                .iter()
                .map(|&h| (h as f64 - expected).powi(2) / expected)
                .sum();
            // 15 degrees of freedom; 99.9% quantile is about 37.7
            assert!(chi2 < 37.7, "chi2 {chi2}");
            for h in hist {
                assert!((h as f64 - expected).abs() < 3.0 * sigma + 1.0);
            }
        }
    }

    #[test]
    fn train_config_validation() {
        let mut cfg = TrainConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.batch_size = 300;
        assert!(matches!(
            cfg.validate(),
            Err(DeepSicError::InvalidConfig(_))
        ));
        cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn end_to_end_flag_only_touches_first_network() {
        let s = scheme();
        let book = build_codebook(&s).unwrap();
        let ch = NomaChannel::reference();
        let m = DeepSicModel::init(s, 2, &mut rng::stream(3)).unwrap();
        let batch = generate_training_batch(&book, &ch, 18.0, 50, &mut rng::stream(4)).unwrap();
        let joint = joint_gradients(&m, &batch, true).unwrap();
        let split = joint_gradients(&m, &batch, false).unwrap();
        assert_eq!(joint.loss, split.loss);
        assert_eq!(joint.grads[1], split.grads[1]);
        assert_ne!(joint.grads[0], split.grads[0]);
    }

    #[test]
    fn bundle_round_trip_and_mismatch() {
        let s = scheme();
        let mut m = DeepSicModel::init(s, 2, &mut rng::stream(5)).unwrap();
        m.meta = ModelMeta {
            lambda_train: 18.0,
            seed: 5,
            end_to_end: true,
        };
        let mut buf = Vec::new();
        write_bundle(&m, &mut buf).unwrap();
        let back = read_bundle_for(&mut buf.as_slice(), &s, 2).unwrap();
        assert_eq!(back, m);
        let other = ImScheme::new(4, 2, 4).unwrap();
        assert!(matches!(
            read_bundle_for(&mut buf.as_slice(), &other, 2),
            Err(DeepSicError::SchemeMismatch { .. })
        ));
        buf[4] = 3;
        assert!(matches!(
            read_bundle(&mut buf.as_slice()),
            Err(DeepSicError::UnsupportedVersion(3))
        ));
    }

    #[test]
    fn short_training_run_is_deterministic() {
        let cfg = TrainConfig {
            epochs: 3,
            samples_per_epoch: 400,
            ..TrainConfig::default()
        };
        let ch = NomaChannel::reference();
        let (a, ha) = train(&cfg, &scheme(), &ch).unwrap();
        let (b, hb) = train(&cfg, &scheme(), &ch).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(ha.loss.len(), 3);
        let (mut wa, mut wb) = (Vec::new(), Vec::new());
        write_bundle(&a, &mut wa).unwrap();
        write_bundle(&b, &mut wb).unwrap();
        assert_eq!(wa, wb);
        assert!(ha.loss[2] < ha.loss[0]);
    }
}
