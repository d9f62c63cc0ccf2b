//! Outer layer: per-sample quantization into `W`-symbols, the inner round,
//! and the linear decoder back to wavelet coefficients.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{precondition, Result};
use crate::inner::{self, ProtocolVariant, Transcript};
use crate::models::{self, ModelKind, Sample, SieveFunction};
use crate::regimes::{self, PlanOptions, RegimeParams, RegimePlan};
use crate::rng::{derive_seed, stream, TAG_TERMINAL, TAG_TRIAL, TAG_TRUTH};
use crate::wavelet::{self, cell_index, l2_error_exact, CoeffVector, WaveletFamily};

/// `(w ∧ K0) ∨ (−K0)`.
pub fn truncate(w: f64, k0: f64) -> f64 {
    w.min(k0).max(-k0)
}

/// Composite symbol `(S, V)`: cell index `S ∈ 1..=K` and `2S+2` random bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WSample {
    pub s: usize,
    pub v: Vec<bool>,
}

impl WSample {
    /// `(S−1)·2^{|V|} + int(V)`, with `V[0]` the most significant bit.
    pub fn index(&self) -> usize {
        let tail = self.v.iter().fold(0usize, |acc, &b| acc << 1 | b as usize);
        (self.s - 1) * (1 << self.v.len()) + tail
    }

    pub fn from_index(index: usize, slots: usize) -> Self {
        let s = index / (1 << slots) + 1;
        let tail = index % (1 << slots);
        let v = (0..slots).map(|j| tail >> (slots - 1 - j) & 1 == 1).collect();
        Self { s, v }
    }
}

/// `|W| = 2^{2S+2} K`.
pub fn alphabet_size(family: &WaveletFamily, k: usize) -> usize {
    (1usize << family.slots()) * k
}

/// `Q = (f̃ + K0) / (2 K0)`.
fn bit_probability(fhat: f64, k0: f64) -> f64 {
    (truncate(fhat, k0) + k0) / (2.0 * k0)
}

/// Quantizes one observation. Slot `j` of `V` carries a `Bern(Q)` bit for
/// the `j`-th neighbor of `S`; unused slots carry `Bern(1/2)`.
pub fn quantize_sample<R: Rng + ?Sized>(model: ModelKind, h: u32, x: &Sample, k0: f64, rng: &mut R) -> Result<WSample> {
    let family = WaveletFamily::HAAR;
    let k = 1usize << h;
    let s = cell_index(k, x.t);
    let nbrs = wavelet::neighborhood(&family, h, s)?;
    let mut v = Vec::with_capacity(family.slots());
    for j in 0..family.slots() {
        let q = match nbrs.get(j) {
            Some(&sn) => bit_probability(models::samplewise_estimator(model, h, sn, x)?, k0),
            None => 0.5,
        };
        v.push(rng.random::<f64>() < q);
    }
    Ok(WSample { s, v })
}

/// Linear decoder: `f̄_{Hs} = Σ_{s'} 2K0 (Σ_{v: v(s)=1} p̂(s',v) − p̂(s')/2)`
/// over `s'` with `s ∈ N_{Hs'}`.
pub fn decode_coeffs(p_hat: &[f64], h: u32, k0: f64) -> Result<CoeffVector<f64>> {
    let family = WaveletFamily::HAAR;
    let k = 1usize << h;
    let slots = family.slots();
    let per_cell = 1usize << slots;
    if p_hat.len() != per_cell * k {
        return Err(precondition(format!("estimate over {} symbols, expected {}", p_hat.len(), per_cell * k)));
    }
    let mut out = vec![0.0; k];
    for sp in 1..=k {
        let block = &p_hat[(sp - 1) * per_cell..sp * per_cell];
        let marginal: f64 = block.iter().sum();
        for (j, &s) in wavelet::neighborhood(&family, h, sp)?.iter().enumerate() {
            let bit = slots - 1 - j;
            let ones: f64 = block.iter().enumerate().filter(|(v, _)| v >> bit & 1 == 1).map(|(_, p)| p).sum();
            out[s - 1] += 2.0 * k0 * (ones - 0.5 * marginal);
        }
    }
    CoeffVector::new(h, out)
}

/// One point of a finite surrogate for `p_f`: `x` with probability `prob`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub prob: f64,
    pub x: Sample,
}

/// Finite surrogate of `p_f`. `t` is placed at the midpoints of cells of width
/// `1/max(K, 2k)`, on which `f` is constant. `Y | t` is exact for Density and
/// Binary, truncated where the Poisson tail drops below `1e-17`, and a
/// `y_nodes`-point midpoint discretisation over `±8` standard deviations for
/// the two Gaussian models. Masses are renormalised to sum to one.
pub fn surrogate_atoms(model: ModelKind, truth: &SieveFunction<f64>, h: u32, y_nodes: usize) -> Vec<Atom> {
    let fine = (1usize << h).max(2 * truth.k());
    let width = 1.0 / fine as f64;
    let mut atoms = Vec::new();
    for j in 0..fine {
        let t = (j as f64 + 0.5) * width;
        let ft = truth.eval(t);
        let mass_t = if model == ModelKind::Density { ft * width } else { width };
        let ys: Vec<(f64, f64)> = match model {
            ModelKind::Density => vec![(1.0, 1.0)],
            ModelKind::BinaryRegression => vec![(1.0, ft), (0.0, 1.0 - ft)],
            ModelKind::PoissonRegression => {
                let mut out = Vec::new();
                let mut p = (-ft).exp();
                let mut y = 0.0;
                let mut seen = 0.0;
                while seen < 1.0 - 1e-17 && y < 1000.0 {
                    out.push((y, p));
                    seen += p;
                    y += 1.0;
                    p *= ft / y;
                }
                out
            }
            ModelKind::GaussianRegression | ModelKind::HeteroskedasticRegression => {
                let (mu, sd) = if model == ModelKind::GaussianRegression { (ft, 1.0) } else { (0.0, ft.sqrt()) };
                let nodes = y_nodes.max(2);
                let step = 16.0 * sd / nodes as f64;
                (0..nodes)
                    .map(|i| {
                        let z = -8.0 + 16.0 * (i as f64 + 0.5) / nodes as f64;
                        let y = mu + z * sd;
                        (y, (-0.5 * z * z).exp() * step / (sd * (2.0 * std::f64::consts::PI).sqrt()))
                    })
                    .collect()
            }
        };
        let total: f64 = ys.iter().map(|(_, p)| p).sum();
        for (y, p) in ys {
            atoms.push(Atom { prob: mass_t * p / total, x: Sample { t, y } });
        }
    }
    let z: f64 = atoms.iter().map(|a| a.prob).sum();
    for a in &mut atoms {
        a.prob /= z;
    }
    atoms
}

/// Exact law of `(S, V)` under a finite surrogate, indexed like [`WSample::index`].
pub fn exact_symbol_law(model: ModelKind, atoms: &[Atom], h: u32, k0: f64) -> Result<Vec<f64>> {
    let family = WaveletFamily::HAAR;
    let k = 1usize << h;
    let slots = family.slots();
    let mut law = vec![0.0; alphabet_size(&family, k)];
    for a in atoms {
        let s = cell_index(k, a.x.t);
        let nbrs = wavelet::neighborhood(&family, h, s)?;
        let mut q = Vec::with_capacity(slots);
        for j in 0..slots {
            q.push(match nbrs.get(j) {
                Some(&sn) => bit_probability(models::samplewise_estimator(model, h, sn, &a.x)?, k0),
                None => 0.5,
            });
        }
        for v in 0..1usize << slots {
            let pv: f64 = (0..slots).map(|j| if v >> (slots - 1 - j) & 1 == 1 { q[j] } else { 1.0 - q[j] }).product();
            law[(s - 1) * (1 << slots) + v] += a.prob * pv;
        }
    }
    Ok(law)
}

/// `E[f̃_{Hs}(X)]` and `E[f̂_{Hs}(X)]` under a finite surrogate.
pub fn expected_coeffs(model: ModelKind, atoms: &[Atom], h: u32, k0: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = 1usize << h;
    let mut trunc = vec![0.0; k];
    let mut raw = vec![0.0; k];
    for a in atoms {
        let s = cell_index(k, a.x.t);
        let fhat = models::samplewise_estimator(model, h, s, &a.x)?;
        raw[s - 1] += a.prob * fhat;
        trunc[s - 1] += a.prob * truncate(fhat, k0);
    }
    Ok((trunc, raw))
}

/// Optional overrides of the preparation step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Overrides {
    pub plan: PlanOptions<f64>,
    pub inner: Option<ProtocolVariant>,
    pub h: Option<u32>,
    pub k0: Option<f64>,
    pub project_simplex: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OuterConfig {
    pub plan: RegimePlan<f64>,
    pub model: ModelKind,
    pub k0: f64,
    pub inner: ProtocolVariant,
}

impl OuterConfig {
    pub fn prepare(params: &RegimeParams<f64>, model: ModelKind, ov: &Overrides) -> Result<Self> {
        let mut plan = regimes::plan(params, &ov.plan);
        if let Some(h) = ov.h {
            plan.h = h;
            plan.k = 1usize << h;
            plan.k0 = regimes::k0(plan.k, params.big_n().max(2) as f64, plan.c3)?;
        }
        let k0 = ov.k0.unwrap_or(plan.k0);
        if !(k0 > 0.0) {
            return Err(precondition("K0 must be positive"));
        }
        let alphabet = alphabet_size(&ov.plan.family, plan.k);
        let inner = ov.inner.unwrap_or_else(|| {
            inner::select_protocol(plan.case_id, alphabet, params.m as usize, params.n, params.l)
        });
        Ok(Self { plan, model, k0, inner })
    }

    pub fn alphabet(&self) -> usize {
        alphabet_size(&WaveletFamily::HAAR, self.plan.k)
    }
}

#[derive(Debug, Clone)]
pub struct EstimateResult {
    pub coeffs: CoeffVector<f64>,
    pub l2_error: f64,
    /// `None` for the unbudgeted idealized inner layer.
    pub transcript_bits: Option<u64>,
    pub transcript: Option<Transcript>,
    /// Samples whose estimate `|f̂_{HS}|` exceeded `K0`.
    pub truncated: u64,
    pub samples: u64,
}

/// Draws, quantizes and encodes all terminals, runs the inner round, and
/// decodes. Terminal `i` samples from stream `(seed, TERMINAL, i, 0)`.
pub fn run_with_config(
    params: &RegimeParams<f64>,
    cfg: &OuterConfig,
    truth: &SieveFunction<f64>,
    project_simplex: bool,
    seed: u64,
) -> Result<EstimateResult> {
    truth.validate_for(cfg.model)?;
    if (truth.r() - params.r).abs() > 1e-12 {
        return Err(precondition(format!("truth regularity {} differs from r = {}", truth.r(), params.r)));
    }
    let h = cfg.plan.h;
    let k = 1usize << h;
    let m = params.m as usize;
    let n = params.n as usize;
    let mut truncated = 0u64;
    let mut symbols = Vec::with_capacity(m);
    for i in 0..m {
        let mut rng = stream(seed, &[TAG_TERMINAL, i as u64, 0]);
        let mut batch = Vec::with_capacity(n);
        for _ in 0..n {
            let x = models::sample(cfg.model, truth, &mut rng);
            let s = cell_index(k, x.t);
            if models::samplewise_estimator(cfg.model, h, s, &x)?.abs() > cfg.k0 {
                truncated += 1;
            }
            batch.push(quantize_sample(cfg.model, h, &x, cfg.k0, &mut rng)?.index());
        }
        symbols.push(batch);
    }
    let round = inner::run_round(cfg.inner, cfg.alphabet(), params.l, &symbols, seed)?;
    let estimate = if project_simplex { round.estimate.project_simplex() } else { round.estimate };
    let coeffs = decode_coeffs(&estimate.values, h, cfg.k0)?;
    let l2_error = l2_error_exact(truth, &coeffs, h)?;
    Ok(EstimateResult {
        transcript_bits: round.transcript.as_ref().map(|t| t.total_bits()),
        transcript: round.transcript,
        coeffs,
        l2_error,
        truncated,
        samples: (m * n) as u64,
    })
}

/// End-to-end run for one trial seed.
pub fn run_protocol(
    params: &RegimeParams<f64>,
    model: ModelKind,
    truth: &SieveFunction<f64>,
    ov: &Overrides,
    seed: u64,
) -> Result<EstimateResult> {
    let cfg = OuterConfig::prepare(params, model, ov)?;
    run_with_config(params, &cfg, truth, ov.project_simplex, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MseSummary {
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
    pub truncation_rate: f64,
    #[serde(skip)]
    pub errors: Vec<f64>,
}

impl MseSummary {
    pub fn from_errors(errors: Vec<f64>, truncation_rate: f64) -> Result<Self> {
        let trials = errors.len();
        if trials < 2 {
            return Err(precondition("need at least two trials"));
        }
        let mean = errors.iter().sum::<f64>() / trials as f64;
        let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        Ok(Self { mean, stderr: (var / trials as f64).sqrt(), trials, truncation_rate, errors })
    }
}

/// Trial `j` uses seed `derive_seed(seed, [TRIAL, j])`; trials run in parallel.
pub fn mse_trials(
    params: &RegimeParams<f64>,
    model: ModelKind,
    truth: &SieveFunction<f64>,
    ov: &Overrides,
    trials: usize,
    seed: u64,
) -> Result<MseSummary> {
    let cfg = OuterConfig::prepare(params, model, ov)?;
    mse_trials_with(params, &cfg, truth, ov.project_simplex, 0..trials, seed)
}

pub fn mse_trials_with(
    params: &RegimeParams<f64>,
    cfg: &OuterConfig,
    truth: &SieveFunction<f64>,
    project_simplex: bool,
    trial_ids: std::ops::Range<usize>,
    seed: u64,
) -> Result<MseSummary> {
    let runs: Vec<(f64, u64, u64)> = trial_ids
        .into_par_iter()
        .map(|j| {
            let res = run_with_config(params, cfg, truth, project_simplex, derive_seed(seed, &[TAG_TRIAL, j as u64]))?;
            Ok((res.l2_error, res.truncated, res.samples))
        })
        .collect::<Result<_>>()?;
    let (trunc, total) = runs.iter().fold((0u64, 0u64), |(a, b), r| (a + r.1, b + r.2));
    MseSummary::from_errors(runs.into_iter().map(|r| r.0).collect(), trunc as f64 / total.max(1) as f64)
}

/// Sieve truth with signs drawn from `(seed, TRUTH, g)`, validated for `model`.
pub fn truth_for(model: ModelKind, k: usize, c0: f64, eps: f64, r: f64, seed: u64, g: u64) -> Result<SieveFunction<f64>> {
    let truth = SieveFunction::random(k, c0, eps, r, &mut stream(seed, &[TAG_TRUTH, g]))?;
    truth.validate_for(model)?;
    Ok(truth)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorstCase {
    pub per_truth: Vec<f64>,
    pub worst: f64,
    pub worst_index: usize,
}

/// Max of the mean MSE over `g` random sign vectors.
#[allow(clippy::too_many_arguments)]
pub fn worst_of_g(
    params: &RegimeParams<f64>,
    model: ModelKind,
    k: usize,
    c0: f64,
    eps: f64,
    ov: &Overrides,
    trials: usize,
    g: usize,
    seed: u64,
) -> Result<WorstCase> {
    if g == 0 {
        return Err(precondition("need at least one truth"));
    }
    let per_truth = (0..g)
        .map(|i| {
            let truth = truth_for(model, k, c0, eps, params.r, seed, i as u64)?;
            Ok(mse_trials(params, model, &truth, ov, trials, derive_seed(seed, &[i as u64]))?.mean)
        })
        .collect::<Result<Vec<_>>>()?;
    let (worst_index, worst) =
        per_truth.iter().copied().enumerate().fold((0, f64::MIN), |b, (i, v)| if v > b.1 { (i, v) } else { b });
    Ok(WorstCase { per_truth, worst, worst_index })
}
