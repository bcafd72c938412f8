//! Boltzmann-machine distributions over `s ∈ {0,1}^m`.
//!
//! `b(s) = exp(½ sᵀΣs + μᵀs) / Z`. The production parameterization is
//! `Σ = D + UUᵀ` with a positive diagonal `D`; verification code may also
//! use an arbitrary symmetric `Σ` through [`Coupling::Dense`].
//!
//! Besides energies and exact enumeration this module provides the
//! auxiliary-variable view of the distribution: with
//! `q(r|s) = N(r; Σs + μ, Σ)` the pair `(s, r)` has joint density
//! `N(r; μ, Σ) e^{rᵀs} / Z`, so `r` can be sampled exactly by first drawing
//! `s ~ b` and then `r | s`.

use thiserror::Error;

use crate::scalar::Scalar;
use crate::tensor::{
    cholesky, dot, gaussian_log_density, log_sum_exp, psd_factor, softplus, Matrix, RngStream,
};

/// Largest code length accepted by [`enumerate`].
pub const MAX_ENUM_BITS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BmError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("diagonal entry {index} is not strictly positive ({value})")]
    NonPositiveDiagonal { index: usize, value: f64 },
    #[error("coupling matrix is not symmetric at ({0}, {1})")]
    NotSymmetric(usize, usize),
    #[error("rank {rank} exceeds code length {bits}")]
    RankTooLarge { rank: usize, bits: usize },
    #[error("code length {0} too large for exact enumeration (max {MAX_ENUM_BITS})")]
    TooLarge(usize),
    #[error("coupling matrix is numerically singular or indefinite")]
    NotPositiveDefinite,
    #[error("sample count must be positive")]
    EmptySample,
}

/// The quadratic coupling `Σ`.
#[derive(Clone, Debug, PartialEq)]
pub enum Coupling<T> {
    /// `Σ = diag(diag) + factors · factorsᵀ`, with `factors` of shape `m × v`.
    LowRank { diag: Vec<T>, factors: Matrix<T> },
    /// Arbitrary symmetric `Σ` (verification paths only).
    Dense(Matrix<T>),
}

impl<T: Scalar> Coupling<T> {
    pub fn dim(&self) -> usize {
        match self {
            Coupling::LowRank { diag, .. } => diag.len(),
            Coupling::Dense(s) => s.rows(),
        }
    }

    /// `Σ s` in `O(m v)` for the low-rank form.
    pub fn apply(&self, s: &[T]) -> Vec<T> {
        match self {
            Coupling::LowRank { diag, factors } => {
                let uts = factors.tmatvec(s);
                let mut out = factors.matvec(&uts);
                for ((o, &d), &si) in out.iter_mut().zip(diag).zip(s) {
                    *o += d * si;
                }
                out
            }
            Coupling::Dense(sigma) => sigma.matvec(s),
        }
    }

    /// `sᵀ Σ s`.
    pub fn quadratic(&self, s: &[T]) -> T {
        match self {
            Coupling::LowRank { diag, factors } => {
                let uts = factors.tmatvec(s);
                let d: T = diag.iter().zip(s).map(|(&d, &x)| d * x * x).sum();
                d + dot(&uts, &uts)
            }
            Coupling::Dense(sigma) => dot(s, &sigma.matvec(s)),
        }
    }

    /// Materializes `Σ`.
    pub fn to_dense(&self) -> Matrix<T> {
        match self {
            Coupling::LowRank { diag, factors } => {
                let mut sigma = crate::tensor::gemm(factors, &factors.transpose());
                for (i, &d) in diag.iter().enumerate() {
                    sigma[(i, i)] += d;
                }
                sigma
            }
            Coupling::Dense(sigma) => sigma.clone(),
        }
    }

    /// Draws `z ~ N(0, Σ)`.
    ///
    /// The low-rank form uses `D^{1/2} ε₁ + U ε₂` and needs no factorization.
    pub fn sample_noise(&self, factor: Option<&Matrix<T>>, rng: &mut RngStream) -> Vec<T> {
        match self {
            Coupling::LowRank { diag, factors } => {
                let e1: Vec<T> = rng.sample_gaussian(diag.len());
                let e2: Vec<T> = rng.sample_gaussian(factors.cols());
                let mut out = factors.matvec(&e2);
                for ((o, &d), &e) in out.iter_mut().zip(diag).zip(&e1) {
                    *o += d.sqrt() * e;
                }
                out
            }
            Coupling::Dense(sigma) => {
                let owned;
                let l = match factor {
                    Some(l) => l,
                    None => {
                        owned = psd_factor(sigma).expect("coupling is not positive semi-definite");
                        &owned
                    }
                };
                let z: Vec<T> = rng.sample_gaussian(sigma.rows());
                l.matvec(&z)
            }
        }
    }
}

/// Parameters `(μ, Σ)` of a Boltzmann-machine distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct BoltzmannParams<T> {
    mu: Vec<T>,
    coupling: Coupling<T>,
}

impl<T: Scalar> BoltzmannParams<T> {
    /// Production form `Σ = diag(diag) + factors factorsᵀ`.
    pub fn low_rank(mu: Vec<T>, diag: Vec<T>, factors: Matrix<T>) -> Result<Self, BmError> {
        let m = mu.len();
        if diag.len() != m || factors.rows() != m {
            return Err(BmError::Dimension(format!(
                "mu {m}, diag {}, factors {}x{}",
                diag.len(),
                factors.rows(),
                factors.cols()
            )));
        }
        if factors.cols() > m {
            return Err(BmError::RankTooLarge {
                rank: factors.cols(),
                bits: m,
            });
        }
        if let Some((index, &value)) = diag.iter().enumerate().find(|(_, &d)| !(d > T::zero())) {
            return Err(BmError::NonPositiveDiagonal {
                index,
                value: value.to_f64_lossless(),
            });
        }
        Ok(Self {
            mu,
            coupling: Coupling::LowRank { diag, factors },
        })
    }

    /// Arbitrary symmetric coupling, for verification.
    pub fn dense(mu: Vec<T>, sigma: Matrix<T>) -> Result<Self, BmError> {
        let m = mu.len();
        if sigma.shape() != (m, m) {
            return Err(BmError::Dimension(format!(
                "mu {m}, sigma {}x{}",
                sigma.rows(),
                sigma.cols()
            )));
        }
        for i in 0..m {
            for j in 0..i {
                let (a, b) = (sigma[(i, j)], sigma[(j, i)]);
                if (a - b).abs() > T::of(1e-12) * (T::one() + a.abs().max(b.abs())) {
                    return Err(BmError::NotSymmetric(i, j));
                }
            }
        }
        Ok(Self {
            mu,
            coupling: Coupling::Dense(sigma),
        })
    }

    pub fn bits(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[T] {
        &self.mu
    }

    pub fn coupling(&self) -> &Coupling<T> {
        &self.coupling
    }

    pub fn sigma_dense(&self) -> Matrix<T> {
        self.coupling.to_dense()
    }

    /// `E(s) = -½ sᵀΣs - μᵀs`, computed without forming `Σ`.
    pub fn energy(&self, s: &[T]) -> Result<T, BmError> {
        self.check_len(s.len())?;
        Ok(-T::half() * self.coupling.quadratic(s) - dot(&self.mu, s))
    }

    fn check_len(&self, n: usize) -> Result<(), BmError> {
        if n != self.bits() {
            return Err(BmError::Dimension(format!(
                "vector of length {n} for a {}-bit distribution",
                self.bits()
            )));
        }
        Ok(())
    }
}

/// Bits of `state`: `s_i = (state >> i) & 1`.
pub fn state_bits<T: Scalar>(state: usize, m: usize) -> Vec<T> {
    (0..m)
        .map(|i| if (state >> i) & 1 == 1 { T::one() } else { T::zero() })
        .collect()
}

/// Inverse of [`state_bits`] for binary vectors.
pub fn bits_state<T: Scalar>(s: &[T]) -> usize {
    s.iter()
        .enumerate()
        .fold(0, |acc, (i, &x)| if x > T::half() { acc | (1 << i) } else { acc })
}

/// Exact log-masses of all `2^m` states.
#[derive(Clone, Debug)]
pub struct EnumTable<T> {
    bits: usize,
    log_unnormalized: Vec<T>,
    log_z: T,
}

impl<T: Scalar> EnumTable<T> {
    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn num_states(&self) -> usize {
        self.log_unnormalized.len()
    }

    pub fn log_z(&self) -> T {
        self.log_z
    }

    pub fn log_unnormalized(&self, state: usize) -> T {
        self.log_unnormalized[state]
    }

    pub fn log_prob(&self, state: usize) -> T {
        self.log_unnormalized[state] - self.log_z
    }

    pub fn prob(&self, state: usize) -> T {
        self.log_prob(state).exp()
    }

    pub fn pmf(&self) -> Vec<T> {
        (0..self.num_states()).map(|s| self.prob(s)).collect()
    }

    /// `E_b[s]`.
    pub fn mean_bits(&self) -> Vec<T> {
        let mut mean = vec![T::zero(); self.bits];
        for state in 0..self.num_states() {
            let p = self.prob(state);
            for (i, m) in mean.iter_mut().enumerate() {
                if (state >> i) & 1 == 1 {
                    *m += p;
                }
            }
        }
        mean
    }

    /// Exact categorical draw of a state index.
    pub fn sample_state(&self, rng: &mut RngStream) -> usize {
        let u = T::of(rng.uniform_f64());
        let mut acc = T::zero();
        let mut last = 0;
        for state in 0..self.num_states() {
            let p = self.prob(state);
            if p > T::zero() {
                last = state;
            }
            acc += p;
            if u < acc {
                return state;
            }
        }
        last
    }
}

/// Exact enumeration of the partition function and pmf.
pub fn enumerate<T: Scalar>(p: &BoltzmannParams<T>) -> Result<EnumTable<T>, BmError> {
    let m = p.bits();
    if m > MAX_ENUM_BITS {
        return Err(BmError::TooLarge(m));
    }
    let log_unnormalized: Vec<T> = (0..1usize << m)
        .map(|state| {
            let s = state_bits::<T>(state, m);
            -p.energy(&s).expect("length checked")
        })
        .collect();
    let log_z = log_sum_exp(&log_unnormalized);
    Ok(EnumTable {
        bits: m,
        log_unnormalized,
        log_z,
    })
}

/// `q(r | s) = N(r; Σs + μ, Σ)`.
#[derive(Clone, Debug)]
pub struct ConditionalGaussian<T> {
    pub mean: Vec<T>,
    pub covariance: Coupling<T>,
}

pub fn cond_r_given_s<T: Scalar>(
    p: &BoltzmannParams<T>,
    s: &[T],
) -> Result<ConditionalGaussian<T>, BmError> {
    p.check_len(s.len())?;
    let mut mean = p.coupling.apply(s);
    for (m, &mu) in mean.iter_mut().zip(&p.mu) {
        *m += mu;
    }
    Ok(ConditionalGaussian {
        mean,
        covariance: p.coupling.clone(),
    })
}

/// Difference between the two factorizations of the joint `(s, r)` density:
///
/// `log N(r; μ, Σ) + rᵀs − [log N(r; Σs + μ, Σ) + μᵀs + ½ sᵀΣs]`
///
/// which vanishes identically for every `Σ ≻ 0`.
pub fn augmentation_residual<T: Scalar>(
    p: &BoltzmannParams<T>,
    s: &[T],
    r: &[T],
) -> Result<T, BmError> {
    augmentation_residual_signed(p, s, r, T::one())
}

/// [`augmentation_residual`] with the `μᵀs` term scaled by `linear_sign`.
///
/// Only `linear_sign = 1` is the true identity; other values exist so the
/// verification harness can demonstrate that it detects a corrupted term.
pub fn augmentation_residual_signed<T: Scalar>(
    p: &BoltzmannParams<T>,
    s: &[T],
    r: &[T],
    linear_sign: T,
) -> Result<T, BmError> {
    p.check_len(s.len())?;
    p.check_len(r.len())?;
    let sigma = p.sigma_dense();
    let l = cholesky(&sigma).ok_or(BmError::NotPositiveDefinite)?;
    let cond = cond_r_given_s(p, s)?;
    let lhs = gaussian_log_density(r, &p.mu, &l) + dot(r, s);
    let rhs = gaussian_log_density(r, &cond.mean, &l)
        + linear_sign * dot(&p.mu, s)
        + T::half() * p.coupling.quadratic(s);
    Ok(lhs - rhs)
}

/// Exact sampler for the auxiliary variable `r` with marginal
/// `p(r) = Π(e^{r_i} + 1) N(r; μ, Σ) / Z`.
#[derive(Clone, Debug)]
pub struct ExactAuxSampler<T> {
    params: BoltzmannParams<T>,
    table: EnumTable<T>,
    factor: Option<Matrix<T>>,
}

impl<T: Scalar> ExactAuxSampler<T> {
    pub fn new(params: BoltzmannParams<T>) -> Result<Self, BmError> {
        let table = enumerate(&params)?;
        let factor = match params.coupling() {
            Coupling::Dense(sigma) => Some(psd_factor(sigma).ok_or(BmError::NotPositiveDefinite)?),
            Coupling::LowRank { .. } => None,
        };
        Ok(Self {
            params,
            table,
            factor,
        })
    }

    pub fn params(&self) -> &BoltzmannParams<T> {
        &self.params
    }

    pub fn table(&self) -> &EnumTable<T> {
        &self.table
    }

    pub fn sample_s(&self, rng: &mut RngStream) -> Vec<T> {
        state_bits(self.table.sample_state(rng), self.params.bits())
    }

    /// Draws `s ~ b(s)` then `r ~ N(Σs + μ, Σ)`; returns `r`.
    pub fn sample_r(&self, rng: &mut RngStream) -> Vec<T> {
        self.sample_pair(rng).1
    }

    /// Draws the pair `(s, r)` from the joint.
    pub fn sample_pair(&self, rng: &mut RngStream) -> (Vec<T>, Vec<T>) {
        let s = self.sample_s(rng);
        let mut r = self.params.coupling.apply(&s);
        let noise = self.params.coupling.sample_noise(self.factor.as_ref(), rng);
        for ((ri, &mu), &z) in r.iter_mut().zip(&self.params.mu).zip(&noise) {
            *ri += mu + z;
        }
        (s, r)
    }

    /// `E[r] = Σ E_b[s] + μ`.
    pub fn mean_r(&self) -> Vec<T> {
        let mut mean = self.params.coupling.apply(&self.table.mean_bits());
        for (m, &mu) in mean.iter_mut().zip(&self.params.mu) {
            *m += mu;
        }
        mean
    }
}

/// Exact categorical draw of `s ~ b(s)` from an enumeration table.
pub fn sample_s_exact<T: Scalar>(table: &EnumTable<T>, rng: &mut RngStream) -> Vec<T> {
    state_bits(table.sample_state(rng), table.bits())
}

/// Exact draw of `r` through the mixture `p(r) = Σ_s b(s) N(r; Σs + μ, Σ)`.
pub fn sample_r_exact<T: Scalar>(
    p: &BoltzmannParams<T>,
    table: &EnumTable<T>,
    rng: &mut RngStream,
) -> Vec<T> {
    let s = sample_s_exact(table, rng);
    let cond = cond_r_given_s(p, &s).expect("table matches params");
    let noise = p.coupling.sample_noise(None, rng);
    cond.mean.iter().zip(&noise).map(|(&a, &b)| a + b).collect()
}

/// How well `N(μ, Σ)` stands in for the exact auxiliary marginal.
#[derive(Clone, Debug)]
pub struct GaussApproxReport<T> {
    pub samples: usize,
    /// Importance-sampling effective sample size of the Gaussian proposal.
    pub ess: T,
    pub ess_fraction: T,
    /// Empirical mean of exact draws minus empirical mean of Gaussian draws.
    pub empirical_shift: Vec<T>,
    /// `Σ E_b[s]`, the exact mean shift.
    pub exact_shift: Vec<T>,
}

pub fn gauss_approx_diagnostic<T: Scalar>(
    p: &BoltzmannParams<T>,
    n: usize,
    rng: &mut RngStream,
) -> Result<GaussApproxReport<T>, BmError> {
    if n == 0 {
        return Err(BmError::EmptySample);
    }
    let sampler = ExactAuxSampler::new(p.clone())?;
    let m = p.bits();
    let factor = match p.coupling() {
        Coupling::Dense(sigma) => Some(psd_factor(sigma).ok_or(BmError::NotPositiveDefinite)?),
        Coupling::LowRank { .. } => None,
    };
    let nt = T::of(n as f64);
    let mut log_w = Vec::with_capacity(n);
    let mut gauss_mean = vec![T::zero(); m];
    for _ in 0..n {
        let z = p.coupling.sample_noise(factor.as_ref(), rng);
        let r: Vec<T> = z.iter().zip(p.mu()).map(|(&a, &b)| a + b).collect();
        log_w.push(r.iter().map(|&x| softplus(x)).sum::<T>());
        for (g, &x) in gauss_mean.iter_mut().zip(&r) {
            *g += x / nt;
        }
    }
    let lse1 = log_sum_exp(&log_w);
    let doubled: Vec<T> = log_w.iter().map(|&w| T::two() * w).collect();
    let lse2 = log_sum_exp(&doubled);
    let ess = (T::two() * lse1 - lse2).exp();

    let mut exact_mean = vec![T::zero(); m];
    for _ in 0..n {
        let r = sampler.sample_r(rng);
        for (e, &x) in exact_mean.iter_mut().zip(&r) {
            *e += x / nt;
        }
    }
    let empirical_shift = exact_mean.iter().zip(&gauss_mean).map(|(&a, &b)| a - b).collect();
    let exact_shift = p.coupling.apply(&sampler.table().mean_bits());
    Ok(GaussApproxReport {
        samples: n,
        ess,
        ess_fraction: ess / nt,
        empirical_shift,
        exact_shift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(mu: &[f64], rows: &[&[f64]]) -> BoltzmannParams<f64> {
        BoltzmannParams::dense(mu.to_vec(), Matrix::from_rows(rows)).unwrap()
    }

    fn random_spd(m: usize, rng: &mut RngStream) -> Matrix<f64> {
        let a = Matrix::from_vec(m, m, rng.sample_gaussian(m * m));
        let mut s = crate::tensor::gemm(&a, &a.transpose());
        for i in 0..m {
            s[(i, i)] += 0.5;
        }
        s
    }

    #[test]
    fn energy_hand_cases() {
        let p = dense(&[1.0], &[&[2.0]]);
        assert_eq!(p.energy(&[0.0]).unwrap(), 0.0);
        assert_eq!(p.energy(&[1.0]).unwrap(), -2.0);
        let q = BoltzmannParams::low_rank(vec![0.0, 0.0], vec![1.0, 1.0], Matrix::zeros(2, 0)).unwrap();
        assert_eq!(q.energy(&[1.0, 1.0]).unwrap(), -1.0);
        assert!(q.energy(&[1.0]).is_err());
    }

    #[test]
    fn low_rank_validation() {
        let bad = BoltzmannParams::low_rank(vec![0.0; 2], vec![1.0, 0.0], Matrix::zeros(2, 1));
        assert!(matches!(bad, Err(BmError::NonPositiveDiagonal { index: 1, .. })));
        let too_wide = BoltzmannParams::low_rank(vec![0.0; 2], vec![1.0; 2], Matrix::zeros(2, 3));
        assert!(matches!(too_wide, Err(BmError::RankTooLarge { .. })));
        let asym = BoltzmannParams::dense(vec![0.0; 2], Matrix::from_rows(&[&[1.0, 0.5], &[0.0, 1.0]]));
        assert!(matches!(asym, Err(BmError::NotSymmetric(1, 0))));
    }

    #[test]
    fn low_rank_matches_dense_energy() {
        let mut rng = RngStream::new(1);
        let m = 5;
        let diag: Vec<f64> = (0..m).map(|_| 0.1 + rng.uniform_f64()).collect();
        let u = Matrix::from_vec(m, 2, rng.sample_gaussian(m * 2));
        let mu: Vec<f64> = rng.sample_gaussian(m);
        let lr = BoltzmannParams::low_rank(mu.clone(), diag, u).unwrap();
        let dn = BoltzmannParams::dense(mu, lr.sigma_dense()).unwrap();
        for state in 0..(1 << m) {
            let s = state_bits::<f64>(state, m);
            assert!((lr.energy(&s).unwrap() - dn.energy(&s).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn enumerate_small_cases() {
        let t = enumerate(&dense(&[0.0], &[&[0.0]])).unwrap();
        assert!((t.log_z().exp() - 2.0).abs() < 1e-14);
        assert!(t.pmf().iter().all(|&p| (p - 0.5).abs() < 1e-15));

        let t = enumerate(&dense(&[2f64.ln(), 0.0], &[&[0.0, 0.0], &[0.0, 0.0]])).unwrap();
        assert!((t.log_z().exp() - 6.0).abs() < 1e-13);

        let ones = Matrix::from_rows(&[&[1.0], &[1.0]]);
        let p = BoltzmannParams::<f64>::low_rank(vec![0.0, 0.0], vec![1.0, 1.0], ones).unwrap();
        let t = enumerate(&p).unwrap();
        // Brute force by hand: states 00, 10, 01, 11 have ½sᵀΣs = 0, 1, 1, 3.
        let e = std::f64::consts::E;
        let expected = 1.0 + 2.0 * e + e.powi(3);
        assert!((t.log_z().exp() - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn enumerate_rejects_large_codes() {
        let p = BoltzmannParams::low_rank(vec![0.0; 21], vec![1.0; 21], Matrix::zeros(21, 0)).unwrap();
        assert_eq!(enumerate(&p).unwrap_err(), BmError::TooLarge(21));
    }

    #[test]
    fn pmf_normalized_and_proportional_to_energy() {
        let mut rng = RngStream::new(3);
        let m = 6;
        let p = BoltzmannParams::dense(rng.sample_gaussian(m), random_spd(m, &mut rng)).unwrap();
        let t = enumerate(&p).unwrap();
        let total: f64 = t.pmf().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        // independent route: direct exponentials of the dense quadratic form
        let sigma = p.sigma_dense();
        let direct: Vec<f64> = (0..1 << m)
            .map(|st| {
                let s = state_bits::<f64>(st, m);
                let mut q = 0.0;
                for i in 0..m {
                    for j in 0..m {
                        q += s[i] * sigma[(i, j)] * s[j];
                    }
                }
                (0.5 * q + dot(p.mu(), &s)).exp()
            })
            .collect();
        let z: f64 = direct.iter().sum();
        for (st, d) in direct.iter().enumerate() {
            assert!((t.prob(st) - d / z).abs() < 1e-12);
        }
    }

    #[test]
    fn conditional_mean() {
        let p = dense(&[0.3, -0.2], &[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(cond_r_given_s(&p, &[0.0, 0.0]).unwrap().mean, vec![0.3, -0.2]);
        let q = dense(&[0.0, 0.0], &[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(cond_r_given_s(&q, &[1.0, 1.0]).unwrap().mean, vec![1.0, 1.0]);

        let mut rng = RngStream::new(8);
        let m = 5;
        let diag: Vec<f64> = (0..m).map(|_| 0.2 + rng.uniform_f64()).collect();
        let lr = BoltzmannParams::low_rank(
            rng.sample_gaussian(m),
            diag,
            Matrix::from_vec(m, 3, rng.sample_gaussian(m * 3)),
        )
        .unwrap();
        let s = state_bits::<f64>(0b10110, m);
        let dense_sigma = lr.sigma_dense();
        let oracle: Vec<f64> = (0..m)
            .map(|i| (0..m).map(|j| dense_sigma[(i, j)] * s[j]).sum::<f64>() + lr.mu()[i])
            .collect();
        let got = cond_r_given_s(&lr, &s).unwrap().mean;
        for (a, b) in got.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn augmentation_residual_cases() {
        let p = dense(&[0.0], &[&[1.0]]);
        assert!(augmentation_residual(&p, &[1.0], &[0.0]).unwrap().abs() < 1e-15);

        let mut rng = RngStream::new(17);
        for m in 1..=6 {
            let p = BoltzmannParams::dense(rng.sample_gaussian(m), random_spd(m, &mut rng)).unwrap();
            let zero = vec![0.0; m];
            assert!(augmentation_residual(&p, &zero, p.mu()).unwrap().abs() < 1e-12);
            for _ in 0..50 {
                let s = state_bits::<f64>(rng.below(1 << m), m);
                let r: Vec<f64> = rng.sample_gaussian::<f64>(m).iter().map(|x| 3.0 * x).collect();
                assert!(augmentation_residual(&p, &s, &r).unwrap().abs() < 1e-8);
            }
        }
        let singular = dense(&[0.0, 0.0], &[&[1.0, 1.0], &[1.0, 1.0]]);
        assert_eq!(
            augmentation_residual(&singular, &[1.0, 0.0], &[0.0, 0.0]).unwrap_err(),
            BmError::NotPositiveDefinite
        );
    }

    #[test]
    fn exact_s_sampling() {
        let mut rng = RngStream::new(5);
        let uniform = enumerate(&dense(&[0.0, 0.0], &[&[0.0, 0.0], &[0.0, 0.0]])).unwrap();
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[bits_state(&sample_s_exact(&uniform, &mut rng))] += 1;
        }
        let sd = (n as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 / 4.0).abs() < 3.0 * sd, "{counts:?}");
        }

        let sat = enumerate(&dense(&[20.0; 3], &[&[0.0; 3], &[0.0; 3], &[0.0; 3]])).unwrap();
        for _ in 0..1000 {
            assert_eq!(sample_s_exact(&sat, &mut rng), vec![1.0; 3]);
        }

        let coupled = enumerate(&dense(&[0.0, 0.0], &[&[2.0, 1.0], &[1.0, 2.0]])).unwrap();
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[bits_state(&sample_s_exact(&coupled, &mut rng))] += 1;
        }
        let tv: f64 = (0..4)
            .map(|s| (counts[s] as f64 / n as f64 - coupled.prob(s)).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.01, "tv {tv}");
    }

    #[test]
    fn exact_r_sampling_moments() {
        let mut rng = RngStream::new(6);
        // saturation: s = 0 almost surely, r ~ N(-20, 1)
        let p = dense(&[-20.0], &[&[1.0]]);
        let t = enumerate(&p).unwrap();
        let n = 20_000;
        let mean = (0..n).map(|_| sample_r_exact(&p, &t, &mut rng)[0]).sum::<f64>() / n as f64;
        assert!((mean + 20.0).abs() < 0.05);

        // law of total expectation / variance at m = 2
        let p = dense(&[0.2, -0.4], &[&[1.0, 0.5], &[0.5, 0.8]]);
        let sampler = ExactAuxSampler::new(p.clone()).unwrap();
        let table = sampler.table();
        let sigma = p.sigma_dense();
        let mean_s = table.mean_bits();
        let mut cov_s = Matrix::<f64>::zeros(2, 2);
        for st in 0..4 {
            let s = state_bits::<f64>(st, 2);
            for i in 0..2 {
                for j in 0..2 {
                    cov_s[(i, j)] += table.prob(st) * (s[i] - mean_s[i]) * (s[j] - mean_s[j]);
                }
            }
        }
        // Cov[r] = Σ + Σ Cov[s] Σ
        let tail = crate::tensor::gemm(&crate::tensor::gemm(&sigma, &cov_s), &sigma);
        let expected_mean = sampler.mean_r();
        let n = 1_000_000;
        let mut sum = [0.0; 2];
        let mut sq = [[0.0; 2]; 2];
        for _ in 0..n {
            let r = sampler.sample_r(&mut rng);
            for i in 0..2 {
                sum[i] += r[i];
                for j in 0..2 {
                    sq[i][j] += r[i] * r[j];
                }
            }
        }
        for i in 0..2 {
            let mi = sum[i] / n as f64;
            assert!((mi - expected_mean[i]).abs() < 0.01, "mean {i}: {mi} vs {}", expected_mean[i]);
            for j in 0..2 {
                let c = sq[i][j] / n as f64 - (sum[i] / n as f64) * (sum[j] / n as f64);
                let e = sigma[(i, j)] + tail[(i, j)];
                assert!((c - e).abs() / e.abs() < 0.05, "cov {i}{j}: {c} vs {e}");
            }
        }
    }

    #[test]
    fn gauss_diagnostic_regimes() {
        let mut rng = RngStream::new(12);
        let p = BoltzmannParams::low_rank(vec![-10.0; 3], vec![1e-4; 3], Matrix::zeros(3, 0)).unwrap();
        let rep = gauss_approx_diagnostic(&p, 5000, &mut rng).unwrap();
        assert!(rep.ess_fraction > 0.99, "{}", rep.ess_fraction);

        let p = dense(&[0.0], &[&[1.0]]);
        let rep = gauss_approx_diagnostic(&p, 50_000, &mut rng).unwrap();
        assert!(rep.exact_shift[0] > 0.0);
        assert!(rep.empirical_shift[0] > 0.0);
        assert!((rep.empirical_shift[0] - rep.exact_shift[0]).abs() < 0.05);

        assert_eq!(gauss_approx_diagnostic(&p, 0, &mut rng).unwrap_err(), BmError::EmptySample);
    }
}
