//! Orthonormal wavelet bases on `[0,1]`.
//!
//! Only the Haar family is provided. Its father functions at resolution `H`
//! are normalised indicators of the dyadic cells `[(s-1)/K, s/K)`, `K = 2^H`,
//! which keeps every projection and every L² error closed-form. Cells are
//! half-open except the last one, which also owns `t = 1`.

use crate::error::{precondition, Error, Result};
use crate::models::SieveFunction;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyName {
    Haar,
}

/// A compactly supported father/mother wavelet pair with `S` vanishing moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WaveletFamily {
    pub name: FamilyName,
    pub vanishing_moments: u32,
}

impl WaveletFamily {
    pub const HAAR: WaveletFamily = WaveletFamily { name: FamilyName::Haar, vanishing_moments: 1 };

    /// Support of the father function, `[0, 2S-1]`.
    pub fn father_support(&self) -> (i64, i64) {
        (0, 2 * self.vanishing_moments as i64 - 1)
    }

    /// Support of the mother function, `[-S+1, S]`.
    pub fn mother_support(&self) -> (i64, i64) {
        let s = self.vanishing_moments as i64;
        (-s + 1, s)
    }

    /// `2S + 2`, the neighbourhood bound and the quantizer's slot count.
    pub fn slots(&self) -> usize {
        2 * self.vanishing_moments as usize + 2
    }

    /// `h0 = ceil(log2(2S+2))`.
    pub fn h0(&self) -> u32 {
        ceil_log2(self.slots() as u64)
    }

    /// Highest regularity the family supports (`r < S`).
    pub fn max_regularity(&self) -> f64 {
        self.vanishing_moments as f64
    }

    pub fn father<T: Scalar>(&self, t: T) -> T {
        match self.name {
            FamilyName::Haar => {
                if t >= T::zero() && t < T::one() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }

    pub fn mother<T: Scalar>(&self, t: T) -> T {
        match self.name {
            FamilyName::Haar => {
                let half = T::of(0.5);
                if t >= T::zero() && t < half {
                    T::one()
                } else if t >= half && t < T::one() {
                    -T::one()
                } else {
                    T::zero()
                }
            }
        }
    }
}

impl Default for WaveletFamily {
    fn default() -> Self {
        Self::HAAR
    }
}

pub(crate) fn ceil_log2(x: u64) -> u32 {
    if x <= 1 {
        0
    } else {
        64 - (x - 1).leading_zeros()
    }
}

pub(crate) fn is_power_of_two(k: usize) -> bool {
    k != 0 && k & (k - 1) == 0
}

/// Resolution level `H` together with `K = 2^H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResolutionBasis {
    pub h: u32,
    pub k: usize,
}

impl ResolutionBasis {
    pub fn new(h: u32) -> Self {
        Self { h, k: 1usize << h }
    }

    pub fn from_k(k: usize) -> Result<Self> {
        if !is_power_of_two(k) {
            return Err(precondition(format!("K = {k} is not a power of two")));
        }
        Ok(Self::new(k.trailing_zeros()))
    }
}

/// 1-indexed dyadic cell containing `t`: `min(floor(K t) + 1, K)`.
pub fn cell_index<T: Scalar>(k: usize, t: T) -> usize {
    let idx = (T::of_usize(k) * t).floor().to_i64().unwrap_or(0).max(0) as usize + 1;
    idx.min(k)
}

fn check_index(s: usize, k: usize) -> Result<()> {
    if s == 0 || s > k {
        Err(Error::IndexOutOfRange { index: s, max: k })
    } else {
        Ok(())
    }
}

/// Wavelet coefficients `f_{Hs} = (f, φ_{Hs})`, `s = 1..2^H`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffVector<T> {
    h: u32,
    coeffs: Vec<T>,
}

impl<T: Scalar> CoeffVector<T> {
    pub fn new(h: u32, coeffs: Vec<T>) -> Result<Self> {
        if coeffs.len() != 1usize << h {
            return Err(precondition(format!(
                "coefficient vector of length {} at resolution H = {h}",
                coeffs.len()
            )));
        }
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite(format!("coefficient {}", i + 1)));
        }
        Ok(Self { h, coeffs })
    }

    pub fn zeros(h: u32) -> Self {
        Self { h, coeffs: vec![T::zero(); 1usize << h] }
    }

    pub fn h(&self) -> u32 {
        self.h
    }

    pub fn k(&self) -> usize {
        self.coeffs.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.coeffs
    }

    /// 1-indexed accessor.
    pub fn get(&self, s: usize) -> T {
        self.coeffs[s - 1]
    }

    pub fn into_vec(self) -> Vec<T> {
        self.coeffs
    }
}

/// `φ_{Hs}(t)`.
pub fn eval_father<T: Scalar>(family: &WaveletFamily, h: u32, s: usize, t: T) -> Result<T> {
    let k = 1usize << h;
    check_index(s, k)?;
    Ok(father_unchecked(family, k, s, t))
}

pub(crate) fn father_unchecked<T: Scalar>(family: &WaveletFamily, k: usize, s: usize, t: T) -> T {
    match family.name {
        FamilyName::Haar => {
            if t < T::zero() || t > T::one() {
                return T::zero();
            }
            if cell_index(k, t) == s {
                T::of_usize(k).sqrt()
            } else {
                T::zero()
            }
        }
    }
}

/// Indices `s'` whose father support overlaps the interior of cell `s`,
/// ascending. This order is the canonical slot order of the quantizer.
pub fn neighborhood(family: &WaveletFamily, h: u32, s: usize) -> Result<Vec<usize>> {
    let k = 1usize << h;
    check_index(s, k)?;
    let (lo, hi) = family.father_support();
    // supp φ_{Hs'} = [(s'-1+lo)/K, (s'-1+hi)/K]; overlap with ((s-1)/K, s/K).
    let first = (s as i64 - hi + 1).max(1);
    let last = (s as i64 - lo).min(k as i64);
    Ok((first..=last).map(|x| x as usize).collect())
}

/// Composite-midpoint projection onto `{φ_{Hs}}` using `points_per_cell`
/// nodes inside each dyadic cell. Exact for step functions whose breakpoints
/// lie on the grid of spacing `1/(K * points_per_cell)`.
pub fn project<T, F>(family: &WaveletFamily, f: F, h: u32, points_per_cell: usize) -> Result<CoeffVector<T>>
where
    T: Scalar,
    F: Fn(T) -> T,
{
    let k = 1usize << h;
    let p = points_per_cell.max(1);
    let width = T::one() / T::of_usize(k * p);
    let mut coeffs = Vec::with_capacity(k);
    for s in 1..=k {
        let mut acc = T::zero();
        for j in 0..p {
            let t = (T::of_usize((s - 1) * p + j) + T::of(0.5)) * width;
            let v = f(t);
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("f({t})")));
            }
            acc = acc + v * father_unchecked(family, k, s, t);
        }
        coeffs.push(acc * width);
    }
    CoeffVector::new(h, coeffs)
}

/// Default quadrature density: `2^{H+6}` points in total.
pub const DEFAULT_POINTS_PER_CELL: usize = 64;

/// `Σ_s c_s φ_{Hs}(t)`.
pub fn reconstruct<T: Scalar>(family: &WaveletFamily, c: &CoeffVector<T>, t: T) -> T {
    let k = c.k();
    match family.name {
        FamilyName::Haar => {
            if t < T::zero() || t > T::one() {
                return T::zero();
            }
            c.get(cell_index(k, t)) * T::of_usize(k).sqrt()
        }
    }
}

/// Sieve mother function `ψ^k_s(t) = √k ψ(k t - (s-1))`, supported in cell `s`
/// of the level-`log2 k` grid.
pub fn sieve_psi<T: Scalar>(family: &WaveletFamily, k: usize, s: usize, t: T) -> Result<T> {
    if !is_power_of_two(k) {
        return Err(precondition(format!("sieve size k = {k} is not a power of two")));
    }
    check_index(s, k)?;
    Ok(sieve_psi_unchecked(family, k, s, t))
}

pub(crate) fn sieve_psi_unchecked<T: Scalar>(family: &WaveletFamily, k: usize, s: usize, t: T) -> T {
    let kt = T::of_usize(k);
    let mut u = kt * t - T::of_usize(s - 1);
    // t = 1 closes the last cell.
    if s == k && t == T::one() {
        u = u - T::epsilon();
    }
    kt.sqrt() * family.mother(u)
}

/// `Σ_s (f_{Hs} - est_s)^2 + ||f - f^H||^2`, both terms in closed form.
pub fn l2_error_exact<T: Scalar>(truth: &SieveFunction<T>, est: &CoeffVector<T>, h: u32) -> Result<T> {
    if est.h() != h {
        return Err(precondition(format!(
            "estimate at resolution {} compared at resolution {h}",
            est.h()
        )));
    }
    if !is_power_of_two(truth.k()) {
        return Err(precondition("truth grid is not dyadic"));
    }
    let exact = truth.coeffs(h);
    let inner = exact
        .as_slice()
        .iter()
        .zip(est.as_slice())
        .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
    Ok(inner + truth.tail_error(h))
}
