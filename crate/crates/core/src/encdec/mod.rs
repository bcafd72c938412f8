//! Inference network and log-linear softmax decoder.
//!
//! The encoder maps a TF-IDF vector through ReLU hidden layers to three
//! heads: the mean `μ`, the log of the diagonal `D` (so `D^{1/2} = exp(head/2)`
//! is positive by construction) and the `m × v` low-rank factor `U`. The
//! decoder scores each vocabulary word with `softmax(sᵀE + b)`.

mod checkpoint;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use crate::corpus::TermVector;
use crate::objective::{PosteriorGrad, PosteriorParams};
use crate::scalar::Scalar;
use crate::tensor::{axpy, log_sum_exp, Matrix, Param, ParamStore, RngStream};

/// Architecture hyperparameters fixed for the lifetime of a model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelShape {
    pub vocab_size: usize,
    pub hidden: Vec<usize>,
    /// Code length `m`.
    pub bits: usize,
    /// Rank `v` of the low-rank perturbation; `0` gives a diagonal posterior.
    pub rank: usize,
}

impl ModelShape {
    pub fn new(vocab_size: usize, hidden: Vec<usize>, bits: usize, rank: usize) -> Self {
        Self {
            vocab_size,
            hidden,
            bits,
            rank,
        }
    }
}

/// Affine layer `y = xᵀW + b` with `W` stored `in × out`.
#[derive(Clone, Debug)]
pub struct Linear<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Scalar> Linear<T> {
    fn glorot(name: &str, fan_in: usize, fan_out: usize, rng: &mut RngStream) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weight = Matrix::from_fn(fan_in, fan_out, |_, _| T::of((2.0 * rng.uniform_f64() - 1.0) * limit));
        Self {
            weight: Param::new(format!("{name}.weight"), weight),
            bias: Param::new(format!("{name}.bias"), Matrix::zeros(1, fan_out)),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.value.cols()
    }

    fn forward(&self, x: &[T]) -> Vec<T> {
        let mut y = self.weight.value.tmatvec(x);
        axpy(T::one(), self.bias.value.as_slice(), &mut y);
        y
    }

    fn forward_sparse(&self, x: &[(usize, T)]) -> Vec<T> {
        let mut y = self.bias.value.as_slice().to_vec();
        for &(i, xi) in x {
            axpy(xi, self.weight.value.row(i), &mut y);
        }
        y
    }

    /// Accumulates parameter gradients and returns `∂/∂x`.
    fn backward(&mut self, x: &[T], grad_out: &[T], scale: T) -> Vec<T> {
        self.weight.grad.add_outer(scale, x, grad_out);
        axpy(scale, grad_out, self.bias.grad.as_mut_slice());
        let g: Vec<T> = grad_out.iter().map(|&g| g * scale).collect();
        self.weight.value.matvec(&g)
    }

    fn backward_sparse(&mut self, x: &[(usize, T)], grad_out: &[T], scale: T) {
        for &(i, xi) in x {
            axpy(scale * xi, grad_out, self.weight.grad.row_mut(i));
        }
        axpy(scale, grad_out, self.bias.grad.as_mut_slice());
    }
}

/// Dropout applied to hidden activations during training.
pub struct Dropout<'a> {
    pub keep_prob: f64,
    pub rng: &'a mut RngStream,
}

/// Intermediate values of one encoder pass, needed for backpropagation.
#[derive(Clone, Debug)]
pub struct EncoderCache<T> {
    input: Vec<(usize, T)>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Vec<T>>,
    /// Output of each hidden layer after ReLU and dropout.
    post: Vec<Vec<T>>,
    /// Inverted-dropout multipliers, when dropout was on.
    masks: Vec<Option<Vec<T>>>,
}

#[derive(Clone, Debug)]
pub struct EncoderNet<T> {
    pub hidden: Vec<Linear<T>>,
    pub mean: Linear<T>,
    pub log_diag: Linear<T>,
    pub factor: Option<Linear<T>>,
    bits: usize,
    rank: usize,
}

impl<T: Scalar> EncoderNet<T> {
    fn new(shape: &ModelShape, rng: &mut RngStream) -> Self {
        let mut hidden = Vec::with_capacity(shape.hidden.len());
        let mut width = shape.vocab_size;
        for (i, &h) in shape.hidden.iter().enumerate() {
            hidden.push(Linear::glorot(&format!("enc.hidden{i}"), width, h, rng));
            width = h;
        }
        let m = shape.bits;
        let mean = Linear::glorot("enc.mean", width, m, rng);
        let log_diag = Linear::glorot("enc.log_diag", width, m, rng);
        let factor = (shape.rank > 0).then(|| Linear::glorot("enc.factor", width, m * shape.rank, rng));
        Self {
            hidden,
            mean,
            log_diag,
            factor,
            bits: m,
            rank: shape.rank,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.first().map_or(self.mean.in_dim(), Linear::in_dim)
    }

    /// Posterior parameters for `x`; deterministic unless `dropout` is given.
    pub fn encode(
        &self,
        x: &TermVector,
        dropout: Option<Dropout<'_>>,
    ) -> Result<(PosteriorParams<T>, EncoderCache<T>), VocabMismatch> {
        let dim = self.input_dim();
        if let Some(&(bad, _)) = x.tfidf.iter().find(|&&(t, _)| t as usize >= dim) {
            return Err(VocabMismatch {
                term: bad,
                vocab_size: dim,
            });
        }
        let input: Vec<(usize, T)> = x.tfidf.iter().map(|&(t, w)| (t as usize, T::of(w))).collect();
        Ok(self.encode_sparse(input, dropout))
    }

    fn encode_sparse(
        &self,
        input: Vec<(usize, T)>,
        mut dropout: Option<Dropout<'_>>,
    ) -> (PosteriorParams<T>, EncoderCache<T>) {
        let mut pre = Vec::with_capacity(self.hidden.len());
        let mut post: Vec<Vec<T>> = Vec::with_capacity(self.hidden.len());
        let mut masks = Vec::with_capacity(self.hidden.len());
        for (l, layer) in self.hidden.iter().enumerate() {
            let z = if l == 0 {
                layer.forward_sparse(&input)
            } else {
                layer.forward(&post[l - 1])
            };
            let mut h: Vec<T> = z.iter().map(|&v| v.max(T::zero())).collect();
            let mask = dropout.as_mut().map(|d| {
                let scale = T::of(1.0 / d.keep_prob);
                h.iter()
                    .map(|_| if d.rng.uniform_f64() < d.keep_prob { scale } else { T::zero() })
                    .collect::<Vec<T>>()
            });
            if let Some(mask) = &mask {
                for (hi, &mi) in h.iter_mut().zip(mask) {
                    *hi *= mi;
                }
            }
            pre.push(z);
            post.push(h);
            masks.push(mask);
        }
        let (mu, log_diag, factor_raw) = match post.last() {
            Some(top) => (
                self.mean.forward(top),
                self.log_diag.forward(top),
                self.factor.as_ref().map(|f| f.forward(top)),
            ),
            None => (
                self.mean.forward_sparse(&input),
                self.log_diag.forward_sparse(&input),
                self.factor.as_ref().map(|f| f.forward_sparse(&input)),
            ),
        };
        let sqrt_diag = log_diag.iter().map(|&l| (l * T::half()).exp()).collect();
        let factors = Matrix::from_vec(
            self.bits,
            self.rank,
            factor_raw.unwrap_or_default(),
        );
        let posterior = PosteriorParams::new(mu, sqrt_diag, factors);
        (
            posterior,
            EncoderCache {
                input,
                pre,
                post,
                masks,
            },
        )
    }

    /// Accumulates `scale · ∂loss/∂φ` given the gradient w.r.t. the posterior.
    pub fn backward(&mut self, cache: &EncoderCache<T>, posterior: &PosteriorParams<T>, grad: &PosteriorGrad<T>, scale: T) {
        let g_log_diag: Vec<T> = grad
            .sqrt_diag
            .iter()
            .zip(posterior.sqrt_diag())
            .map(|(&g, &sd)| g * sd * T::half())
            .collect();
        match cache.post.last() {
            Some(top) => {
                let mut g_top = self.mean.backward(top, &grad.mu, scale);
                axpy(T::one(), &self.log_diag.backward(top, &g_log_diag, scale), &mut g_top);
                if let Some(f) = self.factor.as_mut() {
                    axpy(T::one(), &f.backward(top, grad.factors.as_slice(), scale), &mut g_top);
                }
                // g_top is already scaled; propagate with unit scale from here on
                let mut g = g_top;
                for l in (0..self.hidden.len()).rev() {
                    if let Some(mask) = &cache.masks[l] {
                        for (gi, &mi) in g.iter_mut().zip(mask) {
                            *gi *= mi;
                        }
                    }
                    for (gi, &zi) in g.iter_mut().zip(&cache.pre[l]) {
                        if zi <= T::zero() {
                            *gi = T::zero();
                        }
                    }
                    if l == 0 {
                        self.hidden[0].backward_sparse(&cache.input, &g, T::one());
                    } else {
                        g = self.hidden[l].backward(&cache.post[l - 1], &g, T::one());
                    }
                }
            }
            None => {
                self.mean.backward_sparse(&cache.input, &grad.mu, scale);
                self.log_diag.backward_sparse(&cache.input, &g_log_diag, scale);
                if let Some(f) = self.factor.as_mut() {
                    f.backward_sparse(&cache.input, grad.factors.as_slice(), scale);
                }
            }
        }
    }

    fn params(&self) -> Vec<&Param<T>> {
        let mut out = Vec::new();
        for l in self.hidden.iter().chain([&self.mean, &self.log_diag]).chain(self.factor.as_ref()) {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = Vec::new();
        for l in self
            .hidden
            .iter_mut()
            .chain([&mut self.mean, &mut self.log_diag])
            .chain(self.factor.as_mut())
        {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("term id {term} outside the model vocabulary of size {vocab_size}")]
pub struct VocabMismatch {
    pub term: u32,
    pub vocab_size: usize,
}

/// Decoder `p(w | s) = softmax(sᵀE + b)_w`.
#[derive(Clone, Debug)]
pub struct DecoderParams<T> {
    /// `m × |V|`.
    pub e: Param<T>,
    /// `1 × |V|`.
    pub b: Param<T>,
}

/// Softmax probabilities from a decoder pass.
#[derive(Clone, Debug)]
pub struct DecoderCache<T> {
    pub log_lik: T,
    probs: Vec<T>,
}

impl<T: Scalar> DecoderParams<T> {
    pub fn zeros(bits: usize, vocab_size: usize) -> Self {
        Self {
            e: Param::new("dec.E", Matrix::zeros(bits, vocab_size)),
            b: Param::new("dec.b", Matrix::zeros(1, vocab_size)),
        }
    }

    fn logits(&self, s: &[T]) -> Vec<T> {
        let mut z = self.e.value.tmatvec(s);
        axpy(T::one(), self.b.value.as_slice(), &mut z);
        z
    }

    /// `Σ_t n_t log softmax_t(sᵀE + b)`.
    pub fn log_lik(&self, s: &[T], counts: &[(u32, u32)]) -> T {
        self.forward(s, counts).log_lik
    }

    pub fn forward(&self, s: &[T], counts: &[(u32, u32)]) -> DecoderCache<T> {
        let z = self.logits(s);
        let lse = log_sum_exp(&z);
        let log_lik = counts
            .iter()
            .map(|&(t, n)| T::of(n as f64) * (z[t as usize] - lse))
            .sum();
        let probs = z.iter().map(|&zi| (zi - lse).exp()).collect();
        DecoderCache { log_lik, probs }
    }

    /// Accumulates `upstream · ∂loglik/∂(E, b)` and returns `upstream · ∂loglik/∂s`.
    pub fn backward(&mut self, s: &[T], counts: &[(u32, u32)], cache: &DecoderCache<T>, upstream: T) -> Vec<T> {
        let total: T = counts.iter().map(|&(_, n)| T::of(n as f64)).sum();
        let mut g_z: Vec<T> = cache.probs.iter().map(|&p| -total * p * upstream).collect();
        for &(t, n) in counts {
            g_z[t as usize] += T::of(n as f64) * upstream;
        }
        self.e.grad.add_outer(T::one(), s, &g_z);
        axpy(T::one(), &g_z, self.b.grad.as_mut_slice());
        self.e.value.matvec(&g_z)
    }
}

/// `log p(s)` under the uniform Bernoulli(½) prior: `-m log 2`.
pub fn log_prior<T: Scalar>(bits: usize) -> T {
    -T::of(bits as f64) * T::LN_2()
}

/// Encoder plus decoder.
#[derive(Clone, Debug)]
pub struct Model<T> {
    shape: ModelShape,
    pub encoder: EncoderNet<T>,
    pub decoder: DecoderParams<T>,
}

impl<T: Scalar> Model<T> {
    /// Glorot-uniform encoder weights, zero biases, zero decoder.
    pub fn new(shape: ModelShape, rng: &mut RngStream) -> Self {
        let encoder = EncoderNet::new(&shape, rng);
        let decoder = DecoderParams::zeros(shape.bits, shape.vocab_size);
        Self {
            shape,
            encoder,
            decoder,
        }
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    pub fn bits(&self) -> usize {
        self.shape.bits
    }

    pub fn rank(&self) -> usize {
        self.shape.rank
    }

    pub fn vocab_size(&self) -> usize {
        self.shape.vocab_size
    }

    /// Encoder pass with dropout off.
    pub fn posterior(&self, x: &TermVector) -> Result<PosteriorParams<T>, VocabMismatch> {
        Ok(self.encoder.encode(x, None)?.0)
    }

    pub fn decode_loglik(&self, s: &[T], counts: &[(u32, u32)]) -> T {
        self.decoder.log_lik(s, counts)
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        let mut out = Model::<U>::new(self.shape.clone(), &mut RngStream::new(0));
        for (dst, src) in out.params_mut().into_iter().zip(self.params()) {
            dst.value = src.value.cast();
        }
        out
    }
}

impl<T: Scalar> ParamStore<T> for Model<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut out = self.encoder.params();
        out.push(&self.decoder.e);
        out.push(&self.decoder.b);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = self.encoder.params_mut();
        out.push(&mut self.decoder.e);
        out.push(&mut self.decoder.b);
        out
    }
}
