//! Reparameterized sampling and the training objective.
//!
//! A code is sampled hierarchically: `r = μ + D^{1/2}ε₁ + Uε₂` and
//! `s_i = 1[σ(r_i) > u_i]`. The objective is a lower bound on the ELBO in
//! which the Boltzmann partition function cancels:
//!
//! ```text
//! L̃_k ≈ log p(x|s) + log p(s) + E(s) − log h_k(s̃) − E(s̃)
//! ```
//!
//! where `E(s) = −½sᵀΣs − μᵀs`, `h_k(s) = (1/k) Σ_j Π_i Bern(s_i; σ(r⁽ʲ⁾_i))`
//! is built from `k` further Gaussian draws, and `s̃ ~ h_k` is obtained by
//! picking one component uniformly and binarizing it. Gradients pass through
//! both binarizations with the straight-through rule `∂s/∂r ≈ ½σ′(r)`.

use thiserror::Error;

use crate::bm::{BmError, BoltzmannParams};
use crate::corpus::TermVector;
use crate::encdec::{log_prior, DecoderCache, DecoderParams, Dropout, EncoderCache, Model, VocabMismatch};
use crate::scalar::Scalar;
use crate::tensor::{axpy, dot, log_sigmoid, log_sum_exp, sigmoid, softmax, Matrix, RngStream};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ObjectiveError {
    #[error("mixture needs at least one component")]
    NoComponents,
    #[error("backprop called without a recorded forward pass")]
    NoForwardPass,
    #[error(transparent)]
    Vocab(#[from] VocabMismatch),
}

/// Per-document Gaussian/Boltzmann parameters `μ`, `D^{1/2}`, `U`.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorParams<T> {
    mu: Vec<T>,
    sqrt_diag: Vec<T>,
    factors: Matrix<T>,
}

impl<T: Scalar> PosteriorParams<T> {
    /// # Panics
    /// On inconsistent dimensions.
    pub fn new(mu: Vec<T>, sqrt_diag: Vec<T>, factors: Matrix<T>) -> Self {
        assert_eq!(mu.len(), sqrt_diag.len(), "mu and sqrt_diag lengths differ");
        assert_eq!(factors.rows(), mu.len(), "factor rows {} != bits {}", factors.rows(), mu.len());
        Self { mu, sqrt_diag, factors }
    }

    pub fn bits(&self) -> usize {
        self.mu.len()
    }

    pub fn rank(&self) -> usize {
        self.factors.cols()
    }

    pub fn mu(&self) -> &[T] {
        &self.mu
    }

    pub fn sqrt_diag(&self) -> &[T] {
        &self.sqrt_diag
    }

    pub fn factors(&self) -> &Matrix<T> {
        &self.factors
    }

    /// Entries of `D`.
    pub fn diag(&self) -> Vec<T> {
        self.sqrt_diag.iter().map(|&x| x * x).collect()
    }

    /// `Σ s` with `Σ = D + UUᵀ`.
    pub fn sigma_apply(&self, s: &[T]) -> Vec<T> {
        let uts = self.factors.tmatvec(s);
        let mut out = self.factors.matvec(&uts);
        for ((o, &sd), &x) in out.iter_mut().zip(&self.sqrt_diag).zip(s) {
            *o += sd * sd * x;
        }
        out
    }

    /// `−E(s) = ½ sᵀΣs + μᵀs`.
    pub fn neg_energy(&self, s: &[T]) -> T {
        let uts = self.factors.tmatvec(s);
        let d: T = self.sqrt_diag.iter().zip(s).map(|(&sd, &x)| sd * sd * x * x).sum();
        T::half() * (d + dot(&uts, &uts)) + dot(&self.mu, s)
    }

    pub fn to_boltzmann(&self) -> Result<BoltzmannParams<T>, BmError> {
        BoltzmannParams::low_rank(self.mu.clone(), self.diag(), self.factors.clone())
    }

    /// `μ + D^{1/2} ε₁ + U ε₂`.
    pub fn reparameterize(&self, eps1: &[T], eps2: &[T]) -> Vec<T> {
        let mut r = self.factors.matvec(eps2);
        for (((ri, &mu), &sd), &e) in r.iter_mut().zip(&self.mu).zip(&self.sqrt_diag).zip(eps1) {
            *ri += mu + sd * e;
        }
        r
    }
}

/// Gradient with respect to the posterior parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorGrad<T> {
    pub mu: Vec<T>,
    pub sqrt_diag: Vec<T>,
    pub factors: Matrix<T>,
}

impl<T: Scalar> PosteriorGrad<T> {
    pub fn zeros(bits: usize, rank: usize) -> Self {
        Self {
            mu: vec![T::zero(); bits],
            sqrt_diag: vec![T::zero(); bits],
            factors: Matrix::zeros(bits, rank),
        }
    }
}

/// A Gaussian draw with the noise that produced it.
#[derive(Clone, Debug)]
pub struct GaussianDraw<T> {
    pub r: Vec<T>,
    pub eps1: Vec<T>,
    pub eps2: Vec<T>,
}

/// `r = μ + D^{1/2}ε₁ + Uε₂` with `ε₁ ~ N(0, I_m)`, `ε₂ ~ N(0, I_v)`.
pub fn sample_r<T: Scalar>(p: &PosteriorParams<T>, rng: &mut RngStream) -> GaussianDraw<T> {
    let eps1 = rng.sample_gaussian(p.bits());
    let eps2 = rng.sample_gaussian(p.rank());
    GaussianDraw {
        r: p.reparameterize(&eps1, &eps2),
        eps1,
        eps2,
    }
}

/// How the sign threshold is evaluated in the forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binarization {
    /// `s = 1[σ(r) > u]`, gradients by the straight-through rule.
    Hard,
    /// `s = (σ(r) − u + 1)/2`: the smooth surrogate whose exact gradient the
    /// straight-through rule reproduces. Used by the gradient checks.
    Identity,
}

pub fn binarize<T: Scalar>(r: &[T], u: &[T], mode: Binarization) -> Vec<T> {
    r.iter()
        .zip(u)
        .map(|(&ri, &ui)| {
            let p = sigmoid(ri);
            match mode {
                Binarization::Hard => {
                    if p > ui {
                        T::one()
                    } else {
                        T::zero()
                    }
                }
                Binarization::Identity => (p - ui + T::one()) * T::half(),
            }
        })
        .collect()
}

/// Straight-through derivative `½σ′(r)`.
pub fn st_derivative<T: Scalar>(r: T) -> T {
    let p = sigmoid(r);
    T::half() * p * (T::one() - p)
}

/// A binarized draw and the uniforms used.
#[derive(Clone, Debug)]
pub struct BinaryDraw<T> {
    pub s: Vec<T>,
    pub u: Vec<T>,
}

/// `s_i = 1` iff `σ(r_i) > u_i` with fresh `u ~ U(0, 1)`.
pub fn binarize_st<T: Scalar>(r: &[T], rng: &mut RngStream) -> BinaryDraw<T> {
    let u = rng.sample_uniform(r.len());
    BinaryDraw {
        s: binarize(r, &u, Binarization::Hard),
        u,
    }
}

/// A reparameterized draw from the mixture `h_k`.
#[derive(Clone, Debug)]
pub struct MixtureSample<T> {
    /// `m × k`, column `j` is `r⁽ʲ⁾`.
    pub r: Matrix<T>,
    /// `k × m`, row `j` is the `ε₁` of component `j`.
    pub eps1: Matrix<T>,
    /// `k × v`.
    pub eps2: Matrix<T>,
    pub component: usize,
    pub s_tilde: Vec<T>,
    pub u: Vec<T>,
}

impl<T: Scalar> MixtureSample<T> {
    pub fn components(&self) -> usize {
        self.r.cols()
    }
}

pub fn sample_mixture<T: Scalar>(
    p: &PosteriorParams<T>,
    k: usize,
    rng: &mut RngStream,
) -> Result<MixtureSample<T>, ObjectiveError> {
    if k == 0 {
        return Err(ObjectiveError::NoComponents);
    }
    let (m, v) = (p.bits(), p.rank());
    let mut r = Matrix::zeros(m, k);
    let mut eps1 = Matrix::zeros(k, m);
    let mut eps2 = Matrix::zeros(k, v);
    for j in 0..k {
        let draw = sample_r(p, rng);
        for i in 0..m {
            r[(i, j)] = draw.r[i];
        }
        eps1.row_mut(j).copy_from_slice(&draw.eps1);
        eps2.row_mut(j).copy_from_slice(&draw.eps2);
    }
    let component = rng.below(k);
    let u = rng.sample_uniform(m);
    let s_tilde = binarize(&r.column(component), &u, Binarization::Hard);
    Ok(MixtureSample {
        r,
        eps1,
        eps2,
        component,
        s_tilde,
        u,
    })
}

/// Per-component Bernoulli log-likelihoods `a_j = Σ_i log Bern(s_i; σ(R_ij))`.
fn component_log_liks<T: Scalar>(s: &[T], r: &Matrix<T>) -> Vec<T> {
    (0..r.cols())
        .map(|j| {
            s.iter()
                .enumerate()
                .map(|(i, &si)| {
                    let rij = r[(i, j)];
                    si * log_sigmoid(rij) + (T::one() - si) * log_sigmoid(-rij)
                })
                .sum()
        })
        .collect()
}

/// `log h_k(s)` for the mixture whose component logits are the columns of `r`.
pub fn log_h_k<T: Scalar>(s: &[T], r: &Matrix<T>) -> T {
    assert_eq!(s.len(), r.rows(), "code length {} vs mixture {}x{}", s.len(), r.rows(), r.cols());
    let a = component_log_liks(s, r);
    log_sum_exp(&a) - T::of(r.cols() as f64).ln()
}

/// Every noise variable consumed by one evaluation of the objective.
#[derive(Clone, Debug)]
pub struct ObjectiveNoise<T> {
    pub eps1: Vec<T>,
    pub eps2: Vec<T>,
    pub u: Vec<T>,
    /// `k × m`.
    pub mix_eps1: Matrix<T>,
    /// `k × v`.
    pub mix_eps2: Matrix<T>,
    pub mix_u: Vec<T>,
    pub component: usize,
}

impl<T: Scalar> ObjectiveNoise<T> {
    /// Independent draws for the first-term sample and for every component.
    pub fn draw(bits: usize, rank: usize, k: usize, rng: &mut RngStream) -> Result<Self, ObjectiveError> {
        if k == 0 {
            return Err(ObjectiveError::NoComponents);
        }
        let eps1 = rng.sample_gaussian(bits);
        let eps2 = rng.sample_gaussian(rank);
        let u = rng.sample_uniform(bits);
        let mix_eps1 = Matrix::from_vec(k, bits, rng.sample_gaussian(k * bits));
        let mix_eps2 = Matrix::from_vec(k, rank, rng.sample_gaussian(k * rank));
        let component = rng.below(k);
        let mix_u = rng.sample_uniform(bits);
        Ok(Self {
            eps1,
            eps2,
            u,
            mix_eps1,
            mix_eps2,
            mix_u,
            component,
        })
    }

    /// `ε = 0`, `u = ½`, first component.
    pub fn zeroed(bits: usize, rank: usize, k: usize) -> Self {
        Self {
            eps1: vec![T::zero(); bits],
            eps2: vec![T::zero(); rank],
            u: vec![T::half(); bits],
            mix_eps1: Matrix::zeros(k, bits),
            mix_eps2: Matrix::zeros(k, rank),
            mix_u: vec![T::half(); bits],
            component: 0,
        }
    }

    pub fn components(&self) -> usize {
        self.mix_eps1.rows()
    }
}

/// The five terms of the single-sample bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossTerms<T> {
    pub log_lik: T,
    pub log_prior: T,
    /// `−E(s)` at the first-term sample.
    pub neg_energy: T,
    pub log_h_k: T,
    /// `−E(s̃)` at the mixture sample.
    pub neg_energy_mix: T,
}

impl<T: Scalar> LossTerms<T> {
    /// `log[p(x|s)p(s)/e^{−E(s)}] − log[h_k(s̃)/e^{−E(s̃)}]`.
    pub fn bound(&self) -> T {
        self.log_lik + self.log_prior - self.neg_energy - self.log_h_k + self.neg_energy_mix
    }
}

/// Evaluates the bound's terms at given samples.
///
/// `coupling` supplies `−E(·)`; for the production path it is the encoder's
/// posterior, for verification any Boltzmann parameters.
pub fn estimator_terms<T: Scalar>(
    decoder: &DecoderParams<T>,
    neg_energy: impl Fn(&[T]) -> T,
    counts: &[(u32, u32)],
    s: &[T],
    mixture_logits: &Matrix<T>,
    s_tilde: &[T],
) -> LossTerms<T> {
    LossTerms {
        log_lik: decoder.log_lik(s, counts),
        log_prior: log_prior(s.len()),
        neg_energy: neg_energy(s),
        log_h_k: log_h_k(s_tilde, mixture_logits),
        neg_energy_mix: neg_energy(s_tilde),
    }
}

struct ForwardRecord<T> {
    counts: Vec<(u32, u32)>,
    encoder: EncoderCache<T>,
    posterior: PosteriorParams<T>,
    noise: ObjectiveNoise<T>,
    r: Vec<T>,
    s: Vec<T>,
    mix_r: Matrix<T>,
    s_tilde: Vec<T>,
    decoder: DecoderCache<T>,
}

/// Holds one forward pass until [`GradientTape::backprop`] consumes it.
pub struct GradientTape<T> {
    record: Option<Box<ForwardRecord<T>>>,
}

impl<T: Scalar> Default for GradientTape<T> {
    fn default() -> Self {
        Self { record: None }
    }
}

impl<T: Scalar> GradientTape<T> {
    pub fn is_recorded(&self) -> bool {
        self.record.is_some()
    }

    /// Accumulates `scale · ∂loss/∂θ,φ` into the model's gradient slots.
    pub fn backprop(&mut self, model: &mut Model<T>, scale: T) -> Result<(), ObjectiveError> {
        let rec = self.record.take().ok_or(ObjectiveError::NoForwardPass)?;
        let p = &rec.posterior;
        let (m, v) = (p.bits(), p.rank());
        let k = rec.mix_r.cols();
        // loss = −L̃, so every L̃-gradient carries factor c
        let c = -scale;

        let g_ll = model.decoder.backward(&rec.s, &rec.counts, &rec.decoder, c);
        let sigma_s = p.sigma_apply(&rec.s);
        let sigma_st = p.sigma_apply(&rec.s_tilde);
        let a = component_log_liks(&rec.s_tilde, &rec.mix_r);
        let w = softmax(&a);

        // ∂/∂s of log p(x|s) − (−E(s))
        let g_s: Vec<T> = (0..m).map(|i| g_ll[i] - c * (sigma_s[i] + p.mu[i])).collect();
        // ∂/∂s̃ of −log h_k(s̃) + (−E(s̃)); ∂ log h_k/∂s̃_i = Σ_j w_j R_ij
        let g_st: Vec<T> = (0..m)
            .map(|i| {
                let dh: T = (0..k).map(|j| w[j] * rec.mix_r[(i, j)]).sum();
                c * (sigma_st[i] + p.mu[i] - dh)
            })
            .collect();

        let mut grad = PosteriorGrad::zeros(m, v);
        let mut g_diag = vec![T::zero(); m];
        for i in 0..m {
            grad.mu[i] += c * (rec.s_tilde[i] - rec.s[i]);
            g_diag[i] += c * T::half() * (rec.s_tilde[i] * rec.s_tilde[i] - rec.s[i] * rec.s[i]);
        }
        if v > 0 {
            let uts = p.factors.tmatvec(&rec.s);
            let utst = p.factors.tmatvec(&rec.s_tilde);
            grad.factors.add_outer(-c, &rec.s, &uts);
            grad.factors.add_outer(c, &rec.s_tilde, &utst);
        }

        // explicit dependence of −log h_k on every column
        let mut g_mix = Matrix::zeros(m, k);
        for j in 0..k {
            for i in 0..m {
                g_mix[(i, j)] = -c * w[j] * (rec.s_tilde[i] - sigmoid(rec.mix_r[(i, j)]));
            }
        }
        // straight-through at both binarizations
        let g_r: Vec<T> = (0..m).map(|i| g_s[i] * st_derivative(rec.r[i])).collect();
        let comp = rec.noise.component;
        for i in 0..m {
            g_mix[(i, comp)] += g_st[i] * st_derivative(rec.mix_r[(i, comp)]);
        }

        accumulate_reparam(&mut grad, &g_r, &rec.noise.eps1, &rec.noise.eps2);
        for j in 0..k {
            let col = g_mix.column(j);
            accumulate_reparam(&mut grad, &col, rec.noise.mix_eps1.row(j), rec.noise.mix_eps2.row(j));
        }
        for i in 0..m {
            grad.sqrt_diag[i] += g_diag[i] * T::two() * p.sqrt_diag[i];
        }

        model.encoder.backward(&rec.encoder, p, &grad, T::one());
        Ok(())
    }
}

/// Chain rule through `r = μ + D^{1/2}ε₁ + Uε₂`.
fn accumulate_reparam<T: Scalar>(grad: &mut PosteriorGrad<T>, g_r: &[T], eps1: &[T], eps2: &[T]) {
    axpy(T::one(), g_r, &mut grad.mu);
    for ((g, &gr), &e) in grad.sqrt_diag.iter_mut().zip(g_r).zip(eps1) {
        *g += gr * e;
    }
    if !eps2.is_empty() {
        grad.factors.add_outer(T::one(), g_r, eps2);
    }
}

/// Result of one objective evaluation.
pub struct LossOutput<T> {
    /// `−L̃_k` estimate, to be minimized.
    pub loss: T,
    pub terms: LossTerms<T>,
    pub s: Vec<T>,
    pub s_tilde: Vec<T>,
    pub tape: GradientTape<T>,
}

/// `−L̃_k` for one document with given noise.
pub fn loss_with_noise<T: Scalar>(
    model: &Model<T>,
    x: &TermVector,
    noise: ObjectiveNoise<T>,
    mode: Binarization,
    dropout: Option<Dropout<'_>>,
) -> Result<LossOutput<T>, ObjectiveError> {
    let (posterior, encoder) = model.encoder.encode(x, dropout)?;
    let k = noise.components();
    let m = posterior.bits();

    let r = posterior.reparameterize(&noise.eps1, &noise.eps2);
    let s = binarize(&r, &noise.u, mode);

    let mut mix_r = Matrix::zeros(m, k);
    for j in 0..k {
        let rj = posterior.reparameterize(noise.mix_eps1.row(j), noise.mix_eps2.row(j));
        for i in 0..m {
            mix_r[(i, j)] = rj[i];
        }
    }
    let s_tilde = binarize(&mix_r.column(noise.component), &noise.mix_u, mode);

    let decoder = model.decoder.forward(&s, &x.counts);
    let terms = LossTerms {
        log_lik: decoder.log_lik,
        log_prior: log_prior(m),
        neg_energy: posterior.neg_energy(&s),
        log_h_k: log_h_k(&s_tilde, &mix_r),
        neg_energy_mix: posterior.neg_energy(&s_tilde),
    };
    let record = ForwardRecord {
        counts: x.counts.clone(),
        encoder,
        posterior,
        noise,
        r,
        s: s.clone(),
        mix_r,
        s_tilde: s_tilde.clone(),
        decoder,
    };
    Ok(LossOutput {
        loss: -terms.bound(),
        terms,
        s,
        s_tilde,
        tape: GradientTape {
            record: Some(Box::new(record)),
        },
    })
}

/// `−L̃_k` for one document with fresh noise from `rng`.
pub fn loss_lk<T: Scalar>(
    model: &Model<T>,
    x: &TermVector,
    k: usize,
    dropout: Option<Dropout<'_>>,
    rng: &mut RngStream,
) -> Result<LossOutput<T>, ObjectiveError> {
    let noise = ObjectiveNoise::draw(model.bits(), model.rank(), k, rng)?;
    loss_with_noise(model, x, noise, Binarization::Hard, dropout)
}
