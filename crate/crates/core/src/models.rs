//! Sample-generating models, the sieve truth family, sample-wise coefficient
//! estimators and per-model log-likelihood ratios.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{precondition, Error, Result};
use crate::wavelet::{self, cell_index, is_power_of_two, CoeffVector, WaveletFamily};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ModelKind {
    Density,
    GaussianRegression,
    BinaryRegression,
    PoissonRegression,
    HeteroskedasticRegression,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Density,
        ModelKind::GaussianRegression,
        ModelKind::BinaryRegression,
        ModelKind::PoissonRegression,
        ModelKind::HeteroskedasticRegression,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Density => "density",
            ModelKind::GaussianRegression => "gaussian",
            ModelKind::BinaryRegression => "binary",
            ModelKind::PoissonRegression => "poisson",
            ModelKind::HeteroskedasticRegression => "heteroskedastic",
        }
    }

    /// Whether `f` must stay bounded away from zero.
    fn needs_positive(&self) -> bool {
        !matches!(self, ModelKind::GaussianRegression)
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "density" => Ok(ModelKind::Density),
            "gaussian" | "gaussian_regression" => Ok(ModelKind::GaussianRegression),
            "binary" | "binary_regression" | "classification" => Ok(ModelKind::BinaryRegression),
            "poisson" | "poisson_regression" => Ok(ModelKind::PoissonRegression),
            "heteroskedastic" | "heteroskedastic_regression" => Ok(ModelKind::HeteroskedasticRegression),
            other => Err(Error::Parse(format!("unknown model `{other}`"))),
        }
    }
}

impl TryFrom<String> for ModelKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ModelKind> for String {
    fn from(m: ModelKind) -> Self {
        m.name().to_string()
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One observation `x = (t, y)`. Density samples carry `y = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub y: f64,
}

/// Sub-exponential parameters `(ν, β)`; `β = 0` means sub-Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubExpParams {
    pub nu: f64,
    pub beta: f64,
}

impl SubExpParams {
    pub fn new(nu: f64, beta: f64) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite() && beta >= 0.0 && beta.is_finite()) {
            return Err(precondition(format!("sub-exponential parameters ({nu}, {beta})")));
        }
        Ok(Self { nu, beta })
    }

    /// Two-sided tail bound `P[|X - μ| ≥ t]`.
    pub fn tail_bound(&self, t: f64) -> f64 {
        if self.beta == 0.0 || t <= self.nu * self.nu / self.beta {
            2.0 * (-t * t / (2.0 * self.nu * self.nu)).exp()
        } else {
            2.0 * (-t / (2.0 * self.beta)).exp()
        }
    }
}

/// Perturbed constant `f(t) = C0 + ε k^{-(r+1/2)} Σ_s z_s ψ^k_s(t)`.
///
/// Under Haar `f` is piecewise constant on the `2k` half-cells: on cell `s` it
/// equals `C0 + ε k^{-r} z_s` on the left half and `C0 - ε k^{-r} z_s` on the
/// right half.
#[derive(Debug, Clone, PartialEq)]
pub struct SieveFunction<T> {
    k: usize,
    c0: T,
    eps: T,
    z: Vec<i8>,
    r: T,
    family: WaveletFamily,
}

impl<T: Scalar> SieveFunction<T> {
    pub fn new(k: usize, c0: T, eps: T, z: Vec<i8>, r: T) -> Result<Self> {
        if !is_power_of_two(k) {
            return Err(precondition(format!("sieve size k = {k} is not a power of two")));
        }
        if z.len() != k || z.iter().any(|&v| v != 1 && v != -1) {
            return Err(precondition("sign vector must hold k entries of ±1"));
        }
        if !(eps >= T::zero() && eps <= T::one()) {
            return Err(precondition(format!("ε = {eps} outside [0, 1]")));
        }
        let family = WaveletFamily::HAAR;
        if !(r > T::of(0.5) && r.as_f64() < family.max_regularity()) {
            return Err(precondition(format!(
                "regularity r = {r} outside (1/2, {}) supported by Haar",
                family.max_regularity()
            )));
        }
        if !c0.is_finite() || c0 < T::zero() {
            return Err(precondition(format!("C0 = {c0} must be finite and non-negative")));
        }
        Ok(Self { k, c0, eps, z, r, family })
    }

    /// Sieve with i.i.d. Rademacher signs.
    pub fn random<R: Rng + ?Sized>(k: usize, c0: T, eps: T, r: T, rng: &mut R) -> Result<Self> {
        let z = (0..k).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        Self::new(k, c0, eps, z, r)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn c0(&self) -> T {
        self.c0
    }

    pub fn eps(&self) -> T {
        self.eps
    }

    pub fn r(&self) -> T {
        self.r
    }

    pub fn signs(&self) -> &[i8] {
        &self.z
    }

    /// 1-indexed sign `z_s`.
    pub fn sign(&self, s: usize) -> i8 {
        self.z[s - 1]
    }

    pub fn family(&self) -> &WaveletFamily {
        &self.family
    }

    /// `ε k^{-(r+1/2)}`, the coefficient in front of each `ψ^k_s`.
    pub fn scale(&self) -> T {
        self.eps * T::of_usize(self.k).powf(-(self.r + T::of(0.5)))
    }

    /// `ε k^{-r}`, the sup-norm deviation from `C0`.
    pub fn amplitude(&self) -> T {
        self.eps * T::of_usize(self.k).powf(-self.r)
    }

    /// Signed deviation `f(t) - C0` with the sign of cell `s` replaced by `zs`.
    pub fn perturbation_with_sign(&self, s: usize, zs: i8, t: T) -> T {
        self.scale() * T::of(zs as f64) * wavelet::sieve_psi_unchecked(&self.family, self.k, s, t)
    }

    pub fn eval(&self, t: T) -> T {
        if t < T::zero() || t > T::one() {
            return T::zero();
        }
        let s = cell_index(self.k, t);
        self.c0 + self.perturbation_with_sign(s, self.sign(s), t)
    }

    /// Values on the `2k` half-cells, left to right.
    pub fn half_cell_values(&self) -> Vec<T> {
        let a = self.amplitude();
        self.z
            .iter()
            .flat_map(|&z| {
                let d = a * T::of(z as f64);
                [self.c0 + d, self.c0 - d]
            })
            .collect()
    }

    /// Exact coefficients `f_{Hs}` by integrating the step function.
    pub fn coeffs(&self, h: u32) -> CoeffVector<T> {
        let big_k = 1usize << h;
        let root = T::of_usize(big_k).sqrt();
        let coeffs = if big_k <= self.k {
            // ψ^k_s integrates to zero over every coarser cell.
            vec![self.c0 / root; big_k]
        } else {
            let halves = self.half_cell_values();
            let per_half = big_k / (2 * self.k);
            (0..big_k).map(|s| halves[s / per_half] / root).collect()
        };
        CoeffVector::new(h, coeffs).expect("finite sieve coefficients")
    }

    /// `||f - f^H||²`: the full perturbation energy `ε² k^{-2r}` until the
    /// half-cells are resolved, zero afterwards.
    pub fn tail_error(&self, h: u32) -> T {
        if (1usize << h) >= 2 * self.k {
            T::zero()
        } else {
            let a = self.amplitude();
            a * a
        }
    }

    pub fn min_max(&self) -> (T, T) {
        let a = self.amplitude();
        (self.c0 - a, self.c0 + a)
    }

    /// Checks that this truth is a valid parameter for `model`.
    pub fn validate_for(&self, model: ModelKind) -> Result<()> {
        let (lo, hi) = self.min_max();
        let half = T::of(0.5);
        match model {
            ModelKind::Density if (self.c0 - T::one()).abs() > T::epsilon() => {
                return Err(Error::InvalidConfig("density sieve needs C0 = 1".into()))
            }
            ModelKind::BinaryRegression if !(self.c0 > T::zero() && self.c0 < T::one()) => {
                return Err(Error::InvalidConfig("binary sieve needs C0 in (0, 1)".into()))
            }
            _ => {}
        }
        if model.needs_positive() {
            if self.c0 <= T::zero() {
                return Err(Error::InvalidConfig(format!("{model} needs C0 > 0")));
            }
            let tol = T::of(1e-12);
            if lo < self.c0 * half - tol || hi > self.c0 * T::of(1.5) + tol {
                return Err(Error::InvalidConfig(format!(
                    "sieve range [{lo}, {hi}] leaves [C0/2, 3C0/2]; ε exceeds eps_max"
                )));
            }
        }
        if model == ModelKind::BinaryRegression && (lo < T::zero() || hi > T::one()) {
            return Err(Error::InvalidConfig("binary regression needs f in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Default sieve offset `C0` per model.
pub fn default_c0(model: ModelKind) -> f64 {
    match model {
        ModelKind::Density => 1.0,
        ModelKind::GaussianRegression => 0.0,
        ModelKind::BinaryRegression => 0.5,
        // Only "positive" is required for these two.
        ModelKind::PoissonRegression | ModelKind::HeteroskedasticRegression => 1.0,
    }
}

/// Largest `ε ≤ 1` keeping the sieve valid for `model`.
pub fn eps_max(model: ModelKind, k: usize, c0: f64, r: f64) -> Result<f64> {
    if !is_power_of_two(k) {
        return Err(precondition(format!("sieve size k = {k} is not a power of two")));
    }
    // ||ψ^k_s||_∞ = √k ||ψ||_∞ and ||ψ||_∞ = 1, so sup |f - C0| = ε k^{-r}.
    let kr = (k as f64).powf(r);
    let mut eps: f64 = 1.0;
    if model.needs_positive() {
        if c0 <= 0.0 {
            return Err(Error::InvalidConfig(format!("{model} needs C0 > 0")));
        }
        eps = eps.min(0.5 * c0 * kr);
    }
    if model == ModelKind::BinaryRegression {
        if c0 >= 1.0 {
            return Err(Error::InvalidConfig("binary regression needs C0 < 1".into()));
        }
        eps = eps.min(c0.min(1.0 - c0) * kr);
    }
    Ok(eps)
}

/// Draws one observation from `p_f`.
pub fn sample<R: Rng + ?Sized>(model: ModelKind, f: &SieveFunction<f64>, rng: &mut R) -> Sample {
    let k = f.k();
    match model {
        ModelKind::Density => {
            // Each cell carries mass 1/k; within the cell the density is k f,
            // constant on each half.
            let s = rng.random_range(0..k);
            let d = f.amplitude() * f.z[s] as f64;
            let p_left = 0.5 * (1.0 + d);
            let u: f64 = rng.random();
            let half = if rng.random::<f64>() < p_left { 0.0 } else { 0.5 };
            let t = (s as f64 + half + 0.5 * u) / k as f64;
            Sample { t, y: 1.0 }
        }
        _ => {
            let t: f64 = rng.random();
            let ft = f.eval(t);
            let y = match model {
                ModelKind::GaussianRegression => ft + Normal::new(0.0, 1.0).unwrap().sample(rng),
                ModelKind::BinaryRegression => {
                    if rng.random::<f64>() < ft {
                        1.0
                    } else {
                        0.0
                    }
                }
                ModelKind::PoissonRegression => {
                    if ft <= 0.0 {
                        0.0
                    } else {
                        Poisson::new(ft).unwrap().sample(rng)
                    }
                }
                ModelKind::HeteroskedasticRegression => Normal::new(0.0, ft.max(0.0).sqrt()).unwrap().sample(rng),
                ModelKind::Density => unreachable!(),
            };
            Sample { t, y }
        }
    }
}

pub fn sample_batch<R: Rng + ?Sized>(model: ModelKind, f: &SieveFunction<f64>, n: usize, rng: &mut R) -> Vec<Sample> {
    (0..n).map(|_| sample(model, f, rng)).collect()
}

/// Response transform `h(y)` of the estimator `h(Y) φ_{Hs}(T)`.
pub fn response_weight(model: ModelKind, y: f64) -> f64 {
    match model {
        ModelKind::Density => 1.0,
        ModelKind::GaussianRegression | ModelKind::BinaryRegression | ModelKind::PoissonRegression => y,
        ModelKind::HeteroskedasticRegression => y * y,
    }
}

/// Unbiased sample-wise estimator `f̂_{Hs}(x) = h(y) φ_{Hs}(t)`.
pub fn samplewise_estimator(model: ModelKind, h: u32, s: usize, x: &Sample) -> Result<f64> {
    let phi = wavelet::eval_father(&WaveletFamily::HAAR, h, s, x.t)?;
    if phi == 0.0 {
        return Ok(0.0);
    }
    Ok(response_weight(model, x.y) * phi)
}

/// `L_{s,z_s}(x) = log(p_{s,-z_s}(x) / p_{s,z_s}(x))` in closed form.
pub fn samplewise_loglr(model: ModelKind, f: &SieveFunction<f64>, s: usize, zs: i8, x: &Sample) -> Result<f64> {
    let k = f.k();
    if s == 0 || s > k {
        return Err(Error::IndexOutOfRange { index: s, max: k });
    }
    if zs != 1 && zs != -1 {
        return Err(precondition("z_s must be ±1"));
    }
    if !(0.0..=1.0).contains(&x.t) || cell_index(k, x.t) != s {
        return Err(precondition(format!("t = {} outside cell {s} of {k}", x.t)));
    }
    let a = f.perturbation_with_sign(s, zs, x.t);
    let c0 = f.c0();
    let y = x.y;
    let v = match model {
        ModelKind::Density => ((c0 - a) / (c0 + a)).ln(),
        ModelKind::GaussianRegression => -2.0 * a * (y - c0),
        ModelKind::BinaryRegression => {
            if y >= 0.5 {
                ((c0 - a) / (c0 + a)).ln()
            } else {
                ((1.0 - c0 + a) / (1.0 - c0 - a)).ln()
            }
        }
        ModelKind::PoissonRegression => 2.0 * a + y * ((c0 - a) / (c0 + a)).ln(),
        ModelKind::HeteroskedasticRegression => {
            0.5 * ((c0 + a) / (c0 - a)).ln() - 0.5 * y * y * (1.0 / (c0 - a) - 1.0 / (c0 + a))
        }
    };
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("log-likelihood ratio at {x:?}")));
    }
    Ok(v)
}

/// `log 𝓛_{s,z}(x^n)`: sum of sample-wise ratios over samples in cell `s`.
pub fn terminal_loglr(model: ModelKind, f: &SieveFunction<f64>, s: usize, batch: &[Sample]) -> Result<f64> {
    let zs = f.sign(s);
    batch
        .iter()
        .filter(|x| cell_index(f.k(), x.t) == s)
        .try_fold(0.0, |acc, x| Ok(acc + samplewise_loglr(model, f, s, zs, x)?))
}
