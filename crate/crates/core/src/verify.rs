//! Executable checks of the augmentation identity, the bound's monotonicity
//! in `k`, the partition-function cancellation, and the backward pass.
//!
//! Everything runs at small `m`, where the `2^m` states can be enumerated.

use std::fmt::Write as _;
use std::time::Instant;

use crate::bm::{
    augmentation_residual_signed, enumerate, sample_r_exact, sample_s_exact, state_bits, BoltzmannParams, EnumTable,
};
use crate::corpus::TermVector;
use crate::encdec::{log_prior, DecoderParams, Model, ModelShape};
use crate::objective::{estimator_terms, loss_with_noise, Binarization, ObjectiveNoise};
use crate::tensor::{gaussian_log_density, cholesky, log_sigmoid, log_sum_exp, sigmoid, Matrix, ParamStore, RngStream};

/// Outcome of one named check.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub passed: bool,
    pub trials: usize,
    pub std_error: Option<f64>,
    pub seed: u64,
    pub seconds: f64,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VerifyReport {
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("verify suite, seed {}\n", self.seed);
        for c in &self.checks {
            let se = c.std_error.map_or_else(String::new, |s| format!(" se={s:.3e}"));
            writeln!(
                out,
                "{:<13} {}  statistic={:.3e} threshold={:.3e} trials={}{} seed={} time={:.2}s\n    {}",
                c.name,
                if c.passed { "PASS" } else { "FAIL" },
                c.statistic,
                c.threshold,
                c.trials,
                se,
                c.seed,
                c.seconds,
                c.detail
            )
            .expect("write to string");
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        writeln!(out, "{} checks, {failed} failed", self.checks.len()).expect("write to string");
        out
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("check\tstatistic\tthreshold\tpassed\ttrials\tstd_error\tseed\tseconds\n");
        for c in &self.checks {
            let se = c.std_error.map_or_else(|| "nan".to_string(), |s| format!("{s:e}"));
            writeln!(
                out,
                "{}\t{:e}\t{:e}\t{}\t{}\t{}\t{}\t{:.3}",
                c.name, c.statistic, c.threshold, c.passed, c.trials, se, c.seed, c.seconds
            )
            .expect("write to string");
        }
        out
    }
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// `Σ = AAᵀ/m + ½I` with standard normal `A`.
fn random_spd(m: usize, rng: &mut RngStream) -> Matrix<f64> {
    let a = Matrix::<f64>::from_vec(m, m, rng.sample_gaussian(m * m));
    Matrix::from_fn(m, m, |i, j| {
        let aa: f64 = (0..m).map(|p| a[(i, p)] * a[(j, p)]).sum();
        aa / m as f64 + if i == j { 0.5 } else { 0.0 }
    })
}

/// Random low-rank-plus-diagonal parameters as an encoder would produce.
pub fn random_boltzmann(m: usize, rank: usize, rng: &mut RngStream) -> BoltzmannParams<f64> {
    let mu = rng.sample_gaussian(m);
    let diag = (0..m).map(|_| 0.3 + 0.7 * rng.uniform_f64()).collect();
    let u: Vec<f64> = rng.sample_gaussian(m * rank).into_iter().map(|x: f64| 0.5 * x).collect();
    BoltzmannParams::low_rank(mu, diag, Matrix::from_vec(m, rank, u)).expect("valid parameters")
}

#[derive(Clone, Debug)]
pub struct AugmentationOptions {
    pub trials: usize,
    pub max_bits: usize,
    /// Scale on the `μᵀs` term; anything but `1` breaks the identity.
    pub linear_sign: f64,
}

impl Default for AugmentationOptions {
    fn default() -> Self {
        Self {
            trials: 1000,
            max_bits: 6,
            linear_sign: 1.0,
        }
    }
}

/// Largest relative error of `∫ p(s|r) q(r) dr = b(s)` and `∫ q(r) dr = 1`
/// by trapezoidal integration, `m ≤ 2`.
pub fn grid_marginal_error(p: &BoltzmannParams<f64>, points: usize) -> f64 {
    let m = p.bits();
    assert!((1..=2).contains(&m), "grid integration needs m in 1..=2");
    let table = enumerate(p).expect("small m");
    let sigma = p.sigma_dense();
    let l = cholesky(&sigma).expect("positive definite");
    // cover every mixture component Σs + μ by 10 standard deviations
    let axes: Vec<(f64, f64)> = (0..m)
        .map(|i| {
            let sd = sigma[(i, i)].sqrt();
            let shifts = (0..table.num_states()).map(|st| {
                let s = state_bits::<f64>(st, m);
                p.mu()[i] + (0..m).map(|j| sigma[(i, j)] * s[j]).sum::<f64>()
            });
            let (lo, hi) = shifts.fold((f64::MAX, f64::MIN), |(a, b), x| (a.min(x), b.max(x)));
            let lo = lo - 10.0 * sd;
            (lo, (hi + 10.0 * sd - lo) / (points - 1) as f64)
        })
        .collect();
    let weight = |k: usize| if k == 0 || k == points - 1 { 0.5 } else { 1.0 };
    let mut mass = vec![0.0; table.num_states()];
    let cells = points.pow(m as u32);
    let mut r = vec![0.0; m];
    for cell in 0..cells {
        let mut w = 1.0;
        let mut c = cell;
        for i in 0..m {
            let k = c % points;
            c /= points;
            r[i] = axes[i].0 + k as f64 * axes[i].1;
            w *= weight(k) * axes[i].1;
        }
        let log_n = gaussian_log_density(&r, p.mu(), &l) - table.log_z();
        for (st, acc) in mass.iter_mut().enumerate() {
            let rs: f64 = (0..m).filter(|&i| (st >> i) & 1 == 1).map(|i| r[i]).sum();
            *acc += w * (log_n + rs).exp();
        }
    }
    let total: f64 = mass.iter().sum();
    let mut err = (total - 1.0).abs();
    for (st, &got) in mass.iter().enumerate() {
        let want = table.prob(st);
        err = err.max((got - want).abs() / want);
    }
    err
}

/// Residual of the augmentation identity over random `(Σ, μ, s, r)` plus grid
/// integration of the auxiliary marginal at `m ≤ 2`.
pub fn check_augmentation(opts: &AugmentationOptions, rng: &mut RngStream) -> CheckResult {
    let start = Instant::now();
    let seed = rng.seed();
    let mut max_residual: f64 = 0.0;
    for _ in 0..opts.trials {
        let m = 1 + rng.below(opts.max_bits);
        let p = BoltzmannParams::dense(rng.sample_gaussian(m), random_spd(m, rng)).expect("symmetric");
        let s = state_bits::<f64>(rng.below(1 << m), m);
        let r: Vec<f64> = rng.sample_gaussian(m).into_iter().map(|x: f64| 2.0 * x).collect();
        let res = augmentation_residual_signed(&p, &s, &r, opts.linear_sign).expect("valid inputs");
        max_residual = max_residual.max(res.abs());
    }
    let mut grid_err: f64 = 0.0;
    for m in [1, 1, 2, 2, 2] {
        let p = BoltzmannParams::dense(rng.sample_gaussian(m), random_spd(m, rng)).expect("symmetric");
        grid_err = grid_err.max(grid_marginal_error(&p, if m == 1 { 2001 } else { 401 }));
    }
    let (tol, grid_tol) = (1e-8, 1e-3);
    CheckResult {
        name: "augmentation".into(),
        statistic: max_residual,
        threshold: tol,
        passed: max_residual < tol && grid_err < grid_tol,
        trials: opts.trials,
        std_error: None,
        seed,
        seconds: start.elapsed().as_secs_f64(),
        detail: format!("max |residual| {max_residual:.3e}; grid marginal rel. err {grid_err:.3e} (tol {grid_tol:e})"),
    }
}

/// `log Π_i Bern(s_i; σ(r_i))` for every state, indexed by state.
fn component_table(r: &[f64], states: usize) -> Vec<f64> {
    (0..states)
        .map(|st| {
            r.iter()
                .enumerate()
                .map(|(i, &ri)| if (st >> i) & 1 == 1 { log_sigmoid(ri) } else { log_sigmoid(-ri) })
                .sum()
        })
        .collect()
}

/// `KL(h‖q)` over all states, `h` given by per-component log tables.
fn kl_mixture(components: &[Vec<f64>], table: &EnumTable<f64>) -> f64 {
    let k = components.len() as f64;
    (0..table.num_states())
        .map(|st| {
            let logs: Vec<f64> = components.iter().map(|c| c[st]).collect();
            let log_h = log_sum_exp(&logs) - k.ln();
            let h = log_h.exp();
            if h > 0.0 {
                h * (log_h - table.log_prob(st))
            } else {
                0.0
            }
        })
        .sum()
}

/// A frozen decoder and document for the bound checks.
#[derive(Clone, Debug)]
pub struct ToyLikelihood {
    pub decoder: DecoderParams<f64>,
    pub counts: Vec<(u32, u32)>,
}

impl ToyLikelihood {
    pub fn random(bits: usize, vocab: usize, rng: &mut RngStream) -> Self {
        let mut decoder = DecoderParams::zeros(bits, vocab);
        decoder.e.value = Matrix::from_vec(bits, vocab, rng.sample_gaussian(bits * vocab));
        decoder.b.value = Matrix::from_vec(1, vocab, rng.sample_gaussian(vocab));
        let mut counts = Vec::new();
        for t in 0..vocab as u32 {
            if rng.uniform_f64() < 0.4 {
                counts.push((t, 1 + rng.below(3) as u32));
            }
        }
        Self { decoder, counts }
    }

    /// Exact ELBO `Σ_s q(s) [log p(x|s) + log p(s) − log q(s)]`.
    pub fn exact_elbo(&self, table: &EnumTable<f64>) -> f64 {
        let m = table.bits();
        (0..table.num_states())
            .map(|st| {
                let q = table.prob(st);
                if q == 0.0 {
                    return 0.0;
                }
                let s = state_bits::<f64>(st, m);
                q * (self.decoder.log_lik(&s, &self.counts) + log_prior::<f64>(m) - table.log_prob(st))
            })
            .sum()
    }
}

#[derive(Clone, Debug)]
pub struct MonotoneOptions {
    pub bits: usize,
    pub ks: Vec<usize>,
    pub trials: usize,
    /// Frozen parameters; random when `None`.
    pub params: Option<BoltzmannParams<f64>>,
}

impl Default for MonotoneOptions {
    fn default() -> Self {
        Self {
            bits: 4,
            ks: vec![1, 2, 4, 8],
            trials: 100_000,
            params: None,
        }
    }
}

/// Per-`k` estimates of `E[KL(h_k‖q)]` from a [`check_monotone_k`] run.
#[derive(Clone, Debug, PartialEq)]
pub struct KlSequence {
    pub ks: Vec<usize>,
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    /// Standard error of each consecutive difference, paired across trials.
    pub diff_std_error: Vec<f64>,
    pub min_kl: f64,
}

/// Monte-Carlo `E[KL(h_k‖q)]` for nested prefixes of the same exact draws.
pub fn kl_sequence(p: &BoltzmannParams<f64>, ks: &[usize], trials: usize, rng: &mut RngStream) -> KlSequence {
    let table = enumerate(p).expect("small m");
    let kmax = ks.iter().copied().max().unwrap_or(1);
    let mut per_k: Vec<Vec<f64>> = vec![Vec::with_capacity(trials); ks.len()];
    let mut min_kl = f64::INFINITY;
    for _ in 0..trials {
        let comps: Vec<Vec<f64>> = (0..kmax)
            .map(|_| component_table(&sample_r_exact(p, &table, rng), table.num_states()))
            .collect();
        for (slot, &k) in per_k.iter_mut().zip(ks) {
            let kl = kl_mixture(&comps[..k], &table);
            min_kl = min_kl.min(kl);
            slot.push(kl);
        }
    }
    let (mean, std_error): (Vec<f64>, Vec<f64>) = per_k.iter().map(|v| mean_se(v)).unzip();
    let diff_std_error = per_k
        .windows(2)
        .map(|w| {
            let d: Vec<f64> = w[0].iter().zip(&w[1]).map(|(a, b)| b - a).collect();
            mean_se(&d).1
        })
        .collect();
    KlSequence {
        ks: ks.to_vec(),
        mean,
        std_error,
        diff_std_error,
        min_kl,
    }
}

/// `E[KL(h_k‖q)]` non-increasing over `k` within 3 paired standard errors,
/// the last gap below the first, and every `L̃_k ≤ L`.
pub fn check_monotone_k(opts: &MonotoneOptions, rng: &mut RngStream) -> CheckResult {
    let start = Instant::now();
    let seed = rng.seed();
    let p = opts.params.clone().unwrap_or_else(|| random_boltzmann(opts.bits, 2.min(opts.bits), rng));
    let lik = ToyLikelihood::random(p.bits(), 12, rng);
    let table = enumerate(&p).expect("small m");
    let elbo = lik.exact_elbo(&table);
    let seq = kl_sequence(&p, &opts.ks, opts.trials, rng);

    // largest increase in units of its standard error
    let mut worst: f64 = f64::NEG_INFINITY;
    for (i, se) in seq.diff_std_error.iter().enumerate() {
        let inc = seq.mean[i + 1] - seq.mean[i];
        let z = if *se > 0.0 { inc / se } else if inc > 0.0 { f64::INFINITY } else { 0.0 };
        worst = worst.max(z);
    }
    if seq.diff_std_error.is_empty() {
        worst = 0.0;
    }
    let shrinks = seq.mean.len() < 2 || seq.mean[seq.mean.len() - 1] < seq.mean[0];
    let bounds: Vec<f64> = seq.mean.iter().map(|kl| elbo - kl).collect();
    // each per-trial KL is non-negative, so every L̃_k estimate sits below L
    let below = seq.min_kl >= -1e-12 && bounds.iter().all(|&b| b <= elbo);
    let mut detail = format!("L = {elbo:.6};");
    for (i, k) in seq.ks.iter().enumerate() {
        write!(detail, " k={k}: KL {:.5}±{:.1e}, L̃ {:.5};", seq.mean[i], seq.std_error[i], bounds[i])
            .expect("write to string");
    }
    CheckResult {
        name: "monotone_k".into(),
        statistic: worst,
        threshold: 3.0,
        passed: worst <= 3.0 && shrinks && below,
        trials: opts.trials,
        std_error: seq.std_error.first().copied(),
        seed,
        seconds: start.elapsed().as_secs_f64(),
        detail,
    }
}

#[derive(Clone, Debug)]
pub struct CancellationOptions {
    pub bits: usize,
    pub components: usize,
    pub trials: usize,
    pub params: Option<BoltzmannParams<f64>>,
    /// Use a document with no tokens.
    pub empty_document: bool,
}

impl Default for CancellationOptions {
    fn default() -> Self {
        Self {
            bits: 4,
            components: 4,
            trials: 10_000,
            params: None,
            empty_document: false,
        }
    }
}

/// Mean of the partition-free estimator against `L − E[KL(h_k‖q)]` with
/// explicit `log Z`, using exact samples and the same mixture draws.
pub fn check_cancellation(opts: &CancellationOptions, rng: &mut RngStream) -> CheckResult {
    let start = Instant::now();
    let seed = rng.seed();
    let p = opts.params.clone().unwrap_or_else(|| random_boltzmann(opts.bits, 2.min(opts.bits), rng));
    let m = p.bits();
    let mut lik = ToyLikelihood::random(m, 12, rng);
    if opts.empty_document {
        lik.counts.clear();
    }
    let table = enumerate(&p).expect("small m");
    let elbo = lik.exact_elbo(&table);
    let neg_energy = |s: &[f64]| -p.energy(s).expect("length");
    let k = opts.components;

    let mut diffs = Vec::with_capacity(opts.trials);
    let mut estimates = Vec::with_capacity(opts.trials);
    for _ in 0..opts.trials {
        let s = sample_s_exact(&table, rng);
        let cols: Vec<Vec<f64>> = (0..k).map(|_| sample_r_exact(&p, &table, rng)).collect();
        let r = Matrix::from_fn(m, k, |i, j| cols[j][i]);
        let c = rng.below(k);
        let s_tilde: Vec<f64> = cols[c]
            .iter()
            .map(|&x| if rng.uniform_f64() < sigmoid(x) { 1.0 } else { 0.0 })
            .collect();
        let est = estimator_terms(&lik.decoder, neg_energy, &lik.counts, &s, &r, &s_tilde).bound();
        let comps: Vec<Vec<f64>> = cols.iter().map(|c| component_table(c, table.num_states())).collect();
        let oracle = elbo - kl_mixture(&comps, &table);
        estimates.push(est);
        diffs.push(est - oracle);
    }
    let (d, se) = mean_se(&diffs);
    let (est_mean, est_se) = mean_se(&estimates);
    let z = if se > 0.0 { d.abs() / se } else if d == 0.0 { 0.0 } else { f64::INFINITY };
    CheckResult {
        name: "cancellation".into(),
        statistic: z,
        threshold: 3.0,
        passed: z < 3.0,
        trials: opts.trials,
        std_error: Some(se),
        seed,
        seconds: start.elapsed().as_secs_f64(),
        detail: format!(
            "estimator mean {est_mean:.5}±{est_se:.1e}; mean difference {d:.3e}; log Z {:.5}; L {elbo:.5}",
            table.log_z()
        ),
    }
}

#[derive(Clone, Debug)]
pub struct GradientOptions {
    pub vocab_size: usize,
    pub bits: usize,
    pub rank: usize,
    pub components: usize,
    pub hidden: Vec<usize>,
    pub step: f64,
    /// `ε = 0`, `u = ½`.
    pub zero_noise: bool,
    /// Flip the sign of the accumulated decoder `E` gradient.
    pub corrupt_decoder: bool,
}

impl Default for GradientOptions {
    fn default() -> Self {
        Self {
            vocab_size: 30,
            bits: 6,
            rank: 2,
            components: 2,
            hidden: vec![8],
            step: 1e-5,
            zero_noise: false,
            corrupt_decoder: false,
        }
    }
}

/// Relative error with denominator `max(|a|, |b|, 1e-4)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

/// Backward pass of the smooth surrogate against central differences for
/// every entry of every parameter tensor.
pub fn check_gradients(opts: &GradientOptions, rng: &mut RngStream) -> CheckResult {
    let start = Instant::now();
    let seed = rng.seed();
    let shape = ModelShape::new(opts.vocab_size, opts.hidden.clone(), opts.bits, opts.rank);
    let mut model = Model::<f64>::new(shape, rng);
    for p in model.params_mut() {
        for x in p.value.as_mut_slice() {
            *x += 0.1 * rng.normal_f64();
        }
    }
    let v = opts.vocab_size as u32;
    let mut counts = Vec::new();
    for t in 0..v {
        if rng.uniform_f64() < 0.3 {
            counts.push((t, 1 + rng.below(2) as u32));
        }
    }
    let norm = counts.iter().map(|&(_, c)| (c * c) as f64).sum::<f64>().sqrt();
    let x = TermVector {
        doc_id: 0,
        labels: vec![0],
        tfidf: counts.iter().map(|&(t, c)| (t, c as f64 / norm)).collect(),
        counts,
    };
    let noise = if opts.zero_noise {
        ObjectiveNoise::zeroed(opts.bits, opts.rank, opts.components)
    } else {
        ObjectiveNoise::draw(opts.bits, opts.rank, opts.components, rng).expect("k >= 1")
    };
    let loss_at = |m: &Model<f64>| {
        loss_with_noise(m, &x, noise.clone(), Binarization::Identity, None)
            .expect("toy inputs are valid")
            .loss
    };

    model.zero_grads();
    let mut out = loss_with_noise(&model, &x, noise.clone(), Binarization::Identity, None).expect("valid");
    out.tape.backprop(&mut model, 1.0).expect("recorded");
    if opts.corrupt_decoder {
        for g in model.decoder.e.grad.as_mut_slice() {
            *g = -*g;
        }
    }
    let analytic: Vec<Vec<f64>> = model.params().iter().map(|p| p.grad.as_slice().to_vec()).collect();
    let names: Vec<String> = model.params().iter().map(|p| p.name.clone()).collect();

    let h = opts.step;
    let mut worst = (0.0f64, String::new());
    let mut checked = 0;
    for (pi, grads) in analytic.iter().enumerate() {
        for (ei, &a) in grads.iter().enumerate() {
            let orig = model.params()[pi].value.as_slice()[ei];
            model.params_mut()[pi].value.as_mut_slice()[ei] = orig + h;
            let up = loss_at(&model);
            model.params_mut()[pi].value.as_mut_slice()[ei] = orig - h;
            let down = loss_at(&model);
            model.params_mut()[pi].value.as_mut_slice()[ei] = orig;
            let fd = (up - down) / (2.0 * h);
            let err = relative_error(a, fd);
            checked += 1;
            if err > worst.0 {
                worst = (err, format!("{}[{ei}]: analytic {a:.6e}, numeric {fd:.6e}", names[pi]));
            }
        }
    }
    let tol = 1e-4;
    CheckResult {
        name: "gradients".into(),
        statistic: worst.0,
        threshold: tol,
        passed: worst.0 < tol,
        trials: checked,
        std_error: None,
        seed,
        seconds: start.elapsed().as_secs_f64(),
        detail: format!("{} tensors; worst {}", names.len(), worst.1),
    }
}

/// Names of the registered checks, in report order.
pub const CHECKS: [&str; 4] = ["augmentation", "monotone_k", "cancellation", "gradients"];

/// Every registered check with default options, each on its own substream.
pub fn run_suite(seed: u64) -> VerifyReport {
    let root = RngStream::new(seed);
    let checks = vec![
        check_augmentation(&AugmentationOptions::default(), &mut root.substream(CHECKS[0])),
        check_monotone_k(&MonotoneOptions::default(), &mut root.substream(CHECKS[1])),
        check_cancellation(&CancellationOptions::default(), &mut root.substream(CHECKS[2])),
        check_gradients(&GradientOptions::default(), &mut root.substream(CHECKS[3])),
    ];
    VerifyReport { seed, checks }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn augmentation_passes_and_detects_mutation() {
        let mut rng = RngStream::new(1);
        let opts = AugmentationOptions {
            trials: 200,
            ..AugmentationOptions::default()
        };
        let ok = check_augmentation(&opts, &mut rng);
        assert!(ok.passed, "{ok:?}");
        let bad = check_augmentation(
            &AugmentationOptions {
                linear_sign: -1.0,
                ..opts
            },
            &mut RngStream::new(1),
        );
        assert!(!bad.passed);
    }

    #[test]
    fn augmentation_single_bit_is_exact() {
        let p = BoltzmannParams::<f64>::dense(vec![0.3], Matrix::from_vec(1, 1, vec![1.0])).unwrap();
        for s in [0.0, 1.0] {
            let res = augmentation_residual_signed(&p, &[s], &[0.7], 1.0).unwrap();
            assert!(res.abs() < 1e-15);
        }
        assert!(grid_marginal_error(&p, 2001) < 1e-6);
    }

    #[test]
    fn identical_prefixes_have_zero_difference() {
        let p = random_boltzmann(3, 1, &mut RngStream::new(2));
        let seq = kl_sequence(&p, &[1, 1], 500, &mut RngStream::new(3));
        assert_eq!(seq.mean[0], seq.mean[1]);
        assert_eq!(seq.diff_std_error[0], 0.0);
    }

    #[test]
    fn fair_bits_gap_shrinks() {
        // Σ = I, μ = −½ makes every state equally likely while r stays random
        let p = BoltzmannParams::<f64>::dense(vec![-0.5; 4], Matrix::identity(4)).unwrap();
        let table = enumerate(&p).unwrap();
        assert!((table.prob(5) - 1.0 / 16.0).abs() < 1e-14);
        let r = check_monotone_k(
            &MonotoneOptions {
                trials: 5000,
                params: Some(p.clone()),
                ..MonotoneOptions::default()
            },
            &mut RngStream::new(4),
        );
        assert!(r.passed, "{r:?}");
        let seq = kl_sequence(&p, &[1, 8], 2000, &mut RngStream::new(5));
        assert!(seq.mean[0] > 0.0 && seq.mean[1] < seq.mean[0]);
    }

    #[test]
    fn cancellation_reduction_and_empty_document() {
        let opts = CancellationOptions {
            trials: 4000,
            ..CancellationOptions::default()
        };
        let r = check_cancellation(&opts, &mut RngStream::new(6));
        assert!(r.passed, "{r:?}");

        // no coupling: q factorizes and the mixture equals it exactly
        let p = BoltzmannParams::dense(vec![0.4, -1.0, 0.2, 1.5], Matrix::zeros(4, 4)).unwrap();
        let r = check_cancellation(
            &CancellationOptions {
                params: Some(p),
                ..opts.clone()
            },
            &mut RngStream::new(7),
        );
        assert!(r.passed, "{r:?}");

        let r = check_cancellation(
            &CancellationOptions {
                empty_document: true,
                ..opts
            },
            &mut RngStream::new(8),
        );
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn gradient_check_passes_and_detects_corruption() {
        let r = check_gradients(&GradientOptions::default(), &mut RngStream::new(9));
        assert!(r.passed, "{r:?}");
        let r = check_gradients(
            &GradientOptions {
                zero_noise: true,
                ..GradientOptions::default()
            },
            &mut RngStream::new(9),
        );
        assert!(r.passed, "{r:?}");
        let r = check_gradients(
            &GradientOptions {
                corrupt_decoder: true,
                ..GradientOptions::default()
            },
            &mut RngStream::new(9),
        );
        assert!(!r.passed);
    }

    #[test]
    fn report_formats() {
        let report = VerifyReport {
            seed: 3,
            checks: vec![CheckResult {
                name: "x".into(),
                statistic: 0.5,
                threshold: 1.0,
                passed: true,
                trials: 10,
                std_error: None,
                seed: 4,
                seconds: 0.0,
                detail: String::new(),
            }],
        };
        assert!(report.all_passed());
        assert!(report.to_text().contains("PASS"));
        let tsv = report.to_tsv();
        assert_eq!(tsv.lines().count(), 2);
        assert!(tsv.lines().nth(1).unwrap().starts_with("x\t5e-1\t1e0\ttrue\t10\tnan\t4\t"));
    }
}
