//! Effective sample size, regime classification and the protocol's
//! resolution / truncation parameters.
//!
//! Case boundaries use base-2 logarithms; `K0` and the `log² N` factors use
//! natural logarithms.

use serde::Serialize;

use crate::error::{precondition, Result};
use crate::wavelet::WaveletFamily;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum RegimeCase {
    Case1,
    Case2,
    Case3,
    Case4,
    Case5,
}

impl RegimeCase {
    pub const ALL: [RegimeCase; 5] =
        [RegimeCase::Case1, RegimeCase::Case2, RegimeCase::Case3, RegimeCase::Case4, RegimeCase::Case5];

    pub fn number(&self) -> u8 {
        match self {
            RegimeCase::Case1 => 1,
            RegimeCase::Case2 => 2,
            RegimeCase::Case3 => 3,
            RegimeCase::Case4 => 4,
            RegimeCase::Case5 => 5,
        }
    }
}

impl std::fmt::Display for RegimeCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "case{}", self.number())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeParams<T> {
    pub m: u64,
    pub n: u64,
    pub l: u32,
    pub r: T,
}

impl<T: Scalar> RegimeParams<T> {
    pub fn new(m: u64, n: u64, l: u32, r: T) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(precondition("m and n must be positive"));
        }
        if l < 4 {
            return Err(precondition(format!("l = {l} below the minimum of 4 bits")));
        }
        if !(r > T::of(0.5) && r < T::one()) {
            return Err(precondition(format!("r = {r} outside (1/2, 1)")));
        }
        Ok(Self { m, n, l, r })
    }

    /// Skips validation; for arithmetic on tuples outside the supported range.
    pub fn unchecked(m: u64, n: u64, l: u32, r: T) -> Self {
        Self { m, n, l, r }
    }

    /// Total sample count `N = mn`.
    pub fn big_n(&self) -> u64 {
        self.m * self.n
    }
}

/// The five base-2 logarithms whose min/max combination is `log2 N_ess`.
#[derive(Debug, Clone, Copy)]
pub struct EssTerms<T> {
    /// `(2r+1)/(2r+2) · log2(2^l mn)`
    pub a: T,
    /// `log2(lm)`
    pub b: T,
    /// `(2r+1) · log2(lm)`
    pub c: T,
    /// `(2r+1)/(2r+2) · log2(lmn)`
    pub d: T,
    /// `log2(mn)`
    pub e: T,
}

impl<T: Scalar> EssTerms<T> {
    pub fn new(p: &RegimeParams<T>) -> Self {
        let (m, n, l) = (T::of(p.m as f64), T::of(p.n as f64), T::of(p.l as f64));
        let g = (T::of(2.0) * p.r + T::one()) / (T::of(2.0) * p.r + T::of(2.0));
        let lm = (l * m).log2();
        let mn = m.log2() + n.log2();
        Self {
            a: g * (l + mn),
            b: lm,
            c: (T::of(2.0) * p.r + T::one()) * lm,
            d: g * (lm + n.log2()),
            e: mn,
        }
    }

    pub fn combine(&self) -> T {
        self.a.min(self.b).max(self.c.min(self.d)).min(self.e)
    }

    /// The case whose formula realises the min/max.
    pub fn attaining(&self) -> RegimeCase {
        let first = self.a.min(self.b);
        let second = self.c.min(self.d);
        if self.e <= first.max(second) {
            return RegimeCase::Case5;
        }
        if first >= second {
            if self.a <= self.b {
                RegimeCase::Case1
            } else {
                RegimeCase::Case2
            }
        } else if self.c <= self.d {
            RegimeCase::Case3
        } else {
            RegimeCase::Case4
        }
    }
}

/// `log2 N_ess`.
pub fn n_ess_log2<T: Scalar>(p: &RegimeParams<T>) -> T {
    EssTerms::new(p).combine()
}

/// `N_ess = {[(2^l mn)^{(2r+1)/(2r+2)} ∧ lm] ∨ [(lm)^{2r+1} ∧ (lmn)^{(2r+1)/(2r+2)}]} ∧ mn`.
///
/// Evaluated term by term in real arithmetic; only `2^l mn` is formed in log
/// space, so the result is exact up to rounding even for large `l`.
pub fn n_ess<T: Scalar>(p: &RegimeParams<T>) -> T {
    let (m, n, l) = (T::of(p.m as f64), T::of(p.n as f64), T::of(p.l as f64));
    let two = T::of(2.0);
    let g = (two * p.r + T::one()) / (two * p.r + two);
    let first = (g * (l + (m * n).log2())).exp2().min(l * m);
    let second = (l * m).powf(two * p.r + T::one()).min((l * m * n).powf(g));
    first.max(second).min(m * n)
}

/// The per-case closed form of `N_ess`, in base-2 log space.
pub fn n_ess_piecewise_log2<T: Scalar>(p: &RegimeParams<T>, case: RegimeCase) -> T {
    let (m, n, l) = (T::of(p.m as f64).log2(), T::of(p.n as f64).log2(), T::of(p.l as f64));
    let two = T::of(2.0);
    let g = (two * p.r + T::one()) / (two * p.r + two);
    match case {
        RegimeCase::Case1 => g * (l + m + n),
        RegimeCase::Case2 => l.log2() + m,
        RegimeCase::Case3 => (two * p.r + T::one()) * (l.log2() + m),
        RegimeCase::Case4 => g * (l.log2() + m + n),
        RegimeCase::Case5 => m + n,
    }
}

/// First case whose listed condition holds, in order 1 to 5.
pub fn classify<T: Scalar>(p: &RegimeParams<T>) -> RegimeCase {
    let (m, n, l) = (T::of(p.m as f64), T::of(p.n as f64), T::of(p.l as f64));
    let one = T::one();
    let q = T::of(2.0) * p.r + one;
    let n_q = n.powf(q);
    let sparse_bits = (m / n_q).log2() / q;
    if m >= n_q && l >= one && l <= sparse_bits {
        return RegimeCase::Case1;
    }
    if m > n.powf(q - one) && l >= sparse_bits.max(n_q / m) && l <= n {
        return RegimeCase::Case2;
    }
    let dense_bits = n.powf(one / q) / m;
    if n > m.powf(q) && l >= one && l <= dense_bits {
        return RegimeCase::Case3;
    }
    if m < n_q && l >= dense_bits.max(one) && l <= (n_q / m).min((m * n).powf(one / q)) {
        return RegimeCase::Case4;
    }
    RegimeCase::Case5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlanOptions<T> {
    /// Use the `2000 log² N` inner-layer constants verbatim.
    pub theory_constants: bool,
    /// Replacement for `2000 log² N` when `theory_constants` is off.
    pub c_inner: T,
    pub c3: T,
    #[serde(skip)]
    pub family: WaveletFamily,
}

impl<T: Scalar> Default for PlanOptions<T> {
    fn default() -> Self {
        Self { theory_constants: false, c_inner: T::one(), c3: T::of(DEFAULT_C3), family: WaveletFamily::HAAR }
    }
}

pub const DEFAULT_C3: f64 = 4.0;

/// `c3` from a sub-exponential constant estimate: `400 (r+1) c2`.
pub fn c3_from_c2(r: f64, c2: f64) -> f64 {
    400.0 * (r + 1.0) * c2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimePlan<T> {
    pub case_id: RegimeCase,
    pub n_ess: T,
    pub h: u32,
    pub k: usize,
    pub k0: T,
    pub c3: T,
}

/// Target that `2^{2S+2} K` must reach.
pub fn resolution_target<T: Scalar>(p: &RegimeParams<T>, case: RegimeCase, opts: &PlanOptions<T>) -> T {
    let (m, n) = (T::of(p.m as f64), T::of(p.n as f64));
    let two = T::of(2.0);
    let big_n = m * n;
    let inner = if opts.theory_constants {
        let ln_n = big_n.max(two).ln();
        T::of(2000.0) * ln_n * ln_n
    } else {
        opts.c_inner
    };
    let case4 = |l: T| (l * m * n).powf(T::one() / (two * p.r + two)) / inner;
    let l = T::of(p.l as f64);
    match case {
        RegimeCase::Case1 => ((l + big_n.log2()) / (two * p.r + two)).exp2(),
        RegimeCase::Case2 => (l * m).powf(T::one() / (two * p.r + T::one())),
        RegimeCase::Case3 => l * m / inner,
        RegimeCase::Case4 => case4(l),
        RegimeCase::Case5 => case4(n.min(big_n.powf(T::one() / (two * p.r + T::one())))),
    }
}

/// Smallest `H ≥ 0` with `2^{2S+2} 2^H ≥ target` (`slots() = 2S+2`).
pub fn min_resolution<T: Scalar>(family: &WaveletFamily, target: T) -> u32 {
    let slots_log = T::of(family.slots() as f64);
    let need = target.log2() - slots_log;
    if !(need > T::zero()) {
        return 0;
    }
    // Guard exact powers of two against rounding up by one.
    let h = (need - T::of(1e-9)).ceil();
    h.to_u32().unwrap_or(u32::MAX)
}

pub fn choose_resolution<T: Scalar>(p: &RegimeParams<T>, opts: &PlanOptions<T>) -> (u32, usize) {
    let target = resolution_target(p, classify(p), opts);
    let h = min_resolution(&opts.family, target);
    (h, 1usize << h)
}

/// Truncation level `K0 = c3 √K ln N`.
pub fn k0<T: Scalar>(k: usize, big_n: T, c3: T) -> Result<T> {
    if !(big_n >= T::of(2.0)) {
        return Err(precondition(format!("K0 needs N ≥ 2, got {big_n}")));
    }
    if !(c3 > T::zero()) {
        return Err(precondition("c3 must be positive"));
    }
    Ok(c3 * T::of_usize(k).sqrt() * big_n.ln())
}

/// Full preparation step: case, `N_ess`, resolution and truncation.
pub fn plan<T: Scalar>(p: &RegimeParams<T>, opts: &PlanOptions<T>) -> RegimePlan<T> {
    let case_id = classify(p);
    let (h, k) = choose_resolution(p, opts);
    // N = 1 would zero K0; clamp so the single-sample case still runs.
    let big_n = T::of(p.big_n().max(2) as f64);
    RegimePlan {
        case_id,
        n_ess: n_ess(p),
        h,
        k,
        k0: k0(k, big_n, opts.c3).expect("N clamped to ≥ 2 and c3 validated by caller"),
        c3: opts.c3,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand::Rng;

    fn p(m: u64, n: u64, l: u32, r: f64) -> RegimeParams<f64> {
        RegimeParams::unchecked(m, n, l, r)
    }

    #[test]
    fn params_validation() {
        assert!(RegimeParams::new(1, 1, 4, 0.8).is_ok());
        assert!(RegimeParams::new(1, 1, 3, 0.8).is_err());
        assert!(RegimeParams::new(0, 1, 4, 0.8).is_err());
        assert!(RegimeParams::new(1, 1, 4, 1.0).is_err());
        assert!(RegimeParams::new(1, 1, 4, 0.5).is_err());
    }

    #[test]
    fn n_ess_example_arithmetic() {
        let v = n_ess(&p(1 << 12, 1, 1, 1.0));
        assert!((v - 2f64.powf(9.75)).abs() < 1e-9);
        assert!((v - 861.1).abs() < 0.1);
        assert!((n_ess_log2(&p(1 << 12, 1, 1, 1.0)) - 9.75).abs() < 1e-12);
    }

    #[test]
    fn n_ess_equals_mn_for_unconstrained_bits() {
        for (m, n) in [(16u64, 64u64), (1 << 10, 4), (3, 1000)] {
            let big = 10_000;
            let v = n_ess(&p(m, n, big, 0.8));
            assert!((v - (m * n) as f64).abs() < 1e-9 * (m * n) as f64);
            assert_eq!(classify(&p(m, n, big, 0.8)), RegimeCase::Case5);
        }
    }

    #[test]
    fn n_ess_forms_agree_in_log_space() {
        let mut rng = stream(3, &[]);
        for _ in 0..2000 {
            let q = p(rng.random_range(1..1 << 20), rng.random_range(1..1 << 16), rng.random_range(4..64), 0.55 + 0.4 * rng.random::<f64>());
            assert!((n_ess(&q).log2() - n_ess_log2(&q)).abs() < 1e-9);
        }
    }

    #[test]
    fn n_ess_f32_matches_f64() {
        let a = n_ess(&RegimeParams::unchecked(1 << 12, 16, 8, 0.8f32));
        let b = n_ess(&p(1 << 12, 16, 8, 0.8));
        assert!(((a as f64) - b).abs() / b < 1e-5);
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify(&p(1 << 20, 1, 4, 0.8)), RegimeCase::Case1);
        assert_eq!(classify(&p(4, 1 << 20, 4, 0.8)), RegimeCase::Case3);
        assert_eq!(classify(&p(64, 16, 16, 0.8)), RegimeCase::Case5);
    }

    #[test]
    fn resolution_examples() {
        let q = p(1 << 20, 1, 4, 0.8);
        let opts = PlanOptions::default();
        let target = resolution_target(&q, RegimeCase::Case1, &opts);
        assert!((target.log2() - 24.0 / 3.6).abs() < 1e-12);
        assert_eq!(choose_resolution(&q, &opts), (3, 8));
        for t in [0.5, 1.0, 7.0, 16.0] {
            assert_eq!(min_resolution(&WaveletFamily::HAAR, t), 0);
        }
        assert_eq!(min_resolution(&WaveletFamily::HAAR, 16.5), 1);
        assert_eq!(min_resolution(&WaveletFamily::HAAR, 32.0), 1);
        assert_eq!(min_resolution(&WaveletFamily::HAAR, 33.0), 2);
    }

    #[test]
    fn resolution_steps_are_monotone_and_minimal() {
        let fam = WaveletFamily::HAAR;
        let mut prev = 0;
        for i in 0..4000 {
            let target = 2f64.powf(i as f64 / 200.0);
            let h = min_resolution(&fam, target);
            assert!(h >= prev && h <= prev + 1);
            prev = h;
            assert!(16.0 * 2f64.powi(h as i32) >= target * (1.0 - 1e-9));
            if h > 0 {
                assert!(16.0 * 2f64.powi(h as i32 - 1) < target);
            }
        }
    }

    #[test]
    fn k0_examples() {
        let e2 = std::f64::consts::E.powi(2);
        assert!((k0(4, e2, 1.0).unwrap() - 4.0).abs() < 1e-12);
        assert!(k0(4, 1.0, 1.0).is_err());
        assert!(k0(8, 100.0, 4.0).unwrap() > k0(4, 100.0, 4.0).unwrap());
        assert!(k0(4, 200.0, 4.0).unwrap() > k0(4, 100.0, 4.0).unwrap());
        assert!(k0(4, 100.0, 5.0).unwrap() > k0(4, 100.0, 4.0).unwrap());
    }

    #[test]
    fn plan_single_sample_runs() {
        let q = RegimeParams::new(1, 1, 4, 0.8).unwrap();
        let pl = plan(&q, &PlanOptions::default());
        assert!(pl.k0 > 0.0 && pl.k >= 1 && pl.n_ess >= 1.0);
    }

    #[test]
    fn theory_constants_shrink_dense_resolution() {
        let q = p(4, 1 << 20, 4, 0.8);
        let practical = PlanOptions::default();
        let theory = PlanOptions { theory_constants: true, ..practical };
        assert_eq!(classify(&q), RegimeCase::Case3);
        assert_eq!(choose_resolution(&q, &theory).0, 0);
        assert!(choose_resolution(&q, &practical).0 >= choose_resolution(&q, &theory).0);
    }

    proptest! {
        #[test]
        fn n_ess_bounded_by_total(m in 1u64..1 << 24, n in 1u64..1 << 20, l in 4u32..200, r in 0.51f64..0.99) {
            let q = p(m, n, l, r);
            let v = n_ess(&q);
            prop_assert!(v <= (m * n) as f64 * (1.0 + 1e-12));
            prop_assert!(v >= 1.0 - 1e-12);
            let pl = plan(&q, &PlanOptions::default());
            prop_assert_eq!(pl.k, 1usize << pl.h);
        }

        #[test]
        fn n_ess_monotone(m in 1u64..1 << 20, n in 1u64..1 << 16, l in 4u32..100, r in 0.51f64..0.99) {
            let base = n_ess_log2(&p(m, n, l, r));
            prop_assert!(n_ess_log2(&p(m + 1, n, l, r)) >= base - 1e-12);
            prop_assert!(n_ess_log2(&p(m, n + 1, l, r)) >= base - 1e-12);
            prop_assert!(n_ess_log2(&p(m, n, l + 1, r)) >= base - 1e-12);
        }

        #[test]
        fn classify_deterministic(m in 1u64..1 << 24, n in 1u64..1 << 20, l in 4u32..200, r in 0.51f64..0.99) {
            let q = p(m, n, l, r);
            prop_assert_eq!(classify(&q), classify(&q));
        }
    }
}
