//! Truncated power series: coefficient vectors of `C(x)`, dense bivariate tables
//! of `G(x, y)`, powers and exponentials.
//!
//! The multiset table is produced by two unrelated algorithms (the exponential
//! form and the factor-by-factor product) so one can audit the other.

use rayon::prelude::*;

use crate::arith::{Arith, F64Arith};
use crate::error::{Error, Result};
use crate::model::ExpansiveSpec;

/// Cell budget for dense bivariate tables.
pub const CELL_LIMIT: u128 = 10_000_000;

/// Coefficients `coeffs[k] = [x^k]`, `k = 0..=n_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoeffVector<T> {
    pub coeffs: Vec<T>,
}

impl<T: Clone> CoeffVector<T> {
    pub fn new(coeffs: Vec<T>) -> Self {
        assert!(!coeffs.is_empty(), "a coefficient vector holds at least [x^0]");
        CoeffVector { coeffs }
    }

    pub fn n_max(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn get(&self, k: usize) -> Option<&T> {
        self.coeffs.get(k)
    }

    /// Same series truncated (or zero-padded) to order `n_max`.
    pub fn resized<A: Arith<T = T>>(&self, a: &A, n_max: usize) -> Self {
        let mut c = self.coeffs.clone();
        c.resize(n_max + 1, a.zero());
        CoeffVector { coeffs: c }
    }
}

/// Dense table `g[n][N]`, `0 ≤ n ≤ n_max`, `0 ≤ N ≤ big_n_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct BivariateTable<T> {
    n_max: usize,
    big_n_max: usize,
    data: Vec<T>,
}

impl<T: Clone> BivariateTable<T> {
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn big_n_max(&self) -> usize {
        self.big_n_max
    }

    pub fn get(&self, n: usize, big_n: usize) -> &T {
        assert!(n <= self.n_max && big_n <= self.big_n_max, "cell ({n}, {big_n}) outside the table");
        &self.data[n * (self.big_n_max + 1) + big_n]
    }

    pub fn row(&self, n: usize) -> &[T] {
        let w = self.big_n_max + 1;
        &self.data[n * w..(n + 1) * w]
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, &T)> {
        let w = self.big_n_max + 1;
        self.data.iter().enumerate().map(move |(i, v)| (i / w, i % w, v))
    }
}

fn guard(n_max: usize, big_n_max: usize) -> Result<()> {
    let cells = (n_max as u128 + 1) * (big_n_max as u128 + 1);
    if cells > CELL_LIMIT {
        return Err(Error::Size { cells, limit: CELL_LIMIT });
    }
    Ok(())
}

fn check_constant_term<A: Arith>(a: &A, c: &CoeffVector<A::T>) -> Result<()> {
    if !a.is_zero(&c.coeffs[0]) {
        return Err(Error::Contract("series must have a zero constant term".into()));
    }
    Ok(())
}

/// `C(x)` to order `n_max` in the given arithmetic.
pub fn build_c<A: Arith>(a: &A, spec: &ExpansiveSpec, n_max: usize) -> Result<CoeffVector<A::T>> {
    if n_max < spec.m {
        return Err(Error::Contract(format!("n_max = {n_max} is below m = {}", spec.m)));
    }
    let mut c = vec![a.zero()];
    for k in 1..=n_max {
        c.push(spec.coeff_in(a, k)?);
    }
    Ok(CoeffVector::new(c))
}

/// `C_{>m}(x) = (C(x) − c_m x^m)/x^m`: `[x^k] = c_{k+m}` for `k ≥ 1`.
pub fn build_c_gtm<A: Arith>(a: &A, spec: &ExpansiveSpec, n_max: usize) -> Result<CoeffVector<A::T>> {
    if n_max < 1 {
        return Err(Error::Contract("n_max must be at least 1".into()));
    }
    let mut c = vec![a.zero()];
    for k in 1..=n_max {
        c.push(spec.coeff_in(a, k + spec.m)?);
    }
    Ok(CoeffVector::new(c))
}

/// `[x^k] C(s x) = c_k s^k`, evaluated in log space so large `k` do not overflow.
///
/// With `s = ρ` this is `h(k) k^(α−1)`.
pub fn build_c_scaled(spec: &ExpansiveSpec, scale: f64, n_max: usize) -> CoeffVector<f64> {
    let ls = scale.ln();
    let mut c = vec![0.0];
    c.extend((1..=n_max).map(|k| spec.ln_coeff(k).map_or(0.0, |l| (l + k as f64 * ls).exp())));
    CoeffVector::new(c)
}

/// Coefficients of `exp(Σ_{j≥1} C(x^j) y^j / j)`.
pub fn mset_exp_transform<A: Arith>(
    a: &A,
    c: &CoeffVector<A::T>,
    n_max: usize,
    big_n_max: usize,
) -> Result<BivariateTable<A::T>> {
    mset_exp_transform_scaled(a, c, &a.one(), n_max, big_n_max)
}

/// Exponential form on a rescaled series.
///
/// Given `c̃_k = c_k s^k`, returns `g_{n,N} s^n`. Uses the recurrence obtained
/// from `x∂ₓG = (x∂ₓP) G` with `P = Σ_j C(x^j) y^j / j`:
/// `n g_{n,·} = Σ_k B_k(y) g_{n−k,·}`, `B_k(y) = Σ_{j|k} (k/j) c_{k/j} y^j`.
pub fn mset_exp_transform_scaled<A: Arith>(
    a: &A,
    c: &CoeffVector<A::T>,
    scale: &A::T,
    n_max: usize,
    big_n_max: usize,
) -> Result<BivariateTable<A::T>> {
    guard(n_max, big_n_max)?;
    check_constant_term(a, c)?;
    let c = c.resized(a, n_max);
    let w = big_n_max + 1;
    let m = (1..=n_max).find(|&k| !a.is_zero(&c.coeffs[k])).unwrap_or(n_max + 1);
    let j_limit = big_n_max.min(n_max / m.max(1));

    // Scale powers s^i for the (j−1)k/j shift.
    let mut spow = vec![a.one()];
    for i in 1..=n_max {
        spow.push(a.mul(&spow[i - 1], scale));
    }
    // b[k] = nonzero (j, (k/j) c̃_{k/j} s^{k − k/j}).
    let mut b: Vec<Vec<(usize, A::T)>> = vec![Vec::new(); n_max + 1];
    for j in 1..=j_limit {
        for d in m..=n_max / j {
            if a.is_zero(&c.coeffs[d]) {
                continue;
            }
            let k = d * j;
            let v = a.mul(&a.mul_u64(&c.coeffs[d], d as u64), &spow[k - d]);
            b[k].push((j, v));
        }
    }

    let mut data = vec![a.zero(); (n_max + 1) * w];
    data[0] = a.one();
    for n in 1..=n_max {
        let mut acc = vec![a.zero(); w];
        for k in 1..=n {
            let prev = &data[(n - k) * w..(n - k + 1) * w];
            for (j, v) in &b[k] {
                for big_n in *j..w {
                    let p = &prev[big_n - j];
                    if !a.is_zero(p) {
                        acc[big_n] = a.add(&acc[big_n], &a.mul(v, p));
                    }
                }
            }
        }
        for (dst, v) in data[n * w..(n + 1) * w].iter_mut().zip(acc) {
            *dst = a.div_u64(&v, n as u64);
        }
    }
    Ok(BivariateTable { n_max, big_n_max, data })
}

/// Coefficients of `∏_k (1 − x^k y)^{−c_k}`, one factor at a time.
pub fn mset_product_transform<A: Arith>(
    a: &A,
    c: &CoeffVector<A::T>,
    n_max: usize,
    big_n_max: usize,
) -> Result<BivariateTable<A::T>> {
    mset_product_transform_scaled(a, c, &a.one(), n_max, big_n_max)
}

/// Product form on a rescaled series (`c̃_k = c_k s^k`, output `g_{n,N} s^n`).
///
/// Factor `k` contributes `Σ_d b_d x^{kd} y^d` with the rising-factorial
/// binomial `b_d = ∏_{i=1}^{d} (c_k + i − 1)/i`, here in scaled form
/// `b̃_d = ∏_{i=1}^{d} (c̃_k + (i − 1) s^k)/i`. Rows are updated in parallel from
/// a read-only copy, so the result does not depend on the thread count.
pub fn mset_product_transform_scaled<A: Arith>(
    a: &A,
    c: &CoeffVector<A::T>,
    scale: &A::T,
    n_max: usize,
    big_n_max: usize,
) -> Result<BivariateTable<A::T>> {
    guard(n_max, big_n_max)?;
    check_constant_term(a, c)?;
    let c = c.resized(a, n_max);
    let w = big_n_max + 1;
    let mut data = vec![a.zero(); (n_max + 1) * w];
    data[0] = a.one();
    let mut sk = a.one();
    for k in 1..=n_max {
        sk = a.mul(&sk, scale);
        if a.is_zero(&c.coeffs[k]) {
            continue;
        }
        let d_max = (n_max / k).min(big_n_max);
        let mut bin = vec![a.one()];
        for d in 1..=d_max {
            let f = a.add(&c.coeffs[k], &a.mul_u64(&sk, d as u64 - 1));
            bin.push(a.div_u64(&a.mul(&bin[d - 1], &f), d as u64));
        }
        let old = data.clone();
        data.par_chunks_mut(w).enumerate().for_each(|(n, row)| {
            for d in 1..=d_max.min(n / k) {
                let src = &old[(n - k * d) * w..(n - k * d + 1) * w];
                for big_n in d..w {
                    if !a.is_zero(&src[big_n - d]) {
                        row[big_n] = a.add(&row[big_n], &a.mul(&bin[d], &src[big_n - d]));
                    }
                }
            }
        });
    }
    Ok(BivariateTable { n_max, big_n_max, data })
}

/// Univariate multiset series `Σ_n g_n x^n = ∏_k (1 − x^k)^{−c_k}` on a rescaled
/// input, by the Euler recurrence `n g_n = Σ_k (Σ_{d|k} d c_d) g_{n−k}`.
pub fn mset_univariate_scaled<A: Arith>(
    a: &A,
    c: &CoeffVector<A::T>,
    scale: &A::T,
    n_max: usize,
) -> Result<CoeffVector<A::T>> {
    check_constant_term(a, c)?;
    let c = c.resized(a, n_max);
    let mut spow = vec![a.one()];
    for i in 1..=n_max {
        spow.push(a.mul(&spow[i - 1], scale));
    }
    let mut b = vec![a.zero(); n_max + 1];
    for d in 1..=n_max {
        if a.is_zero(&c.coeffs[d]) {
            continue;
        }
        let cd = a.mul_u64(&c.coeffs[d], d as u64);
        for k in (d..=n_max).step_by(d) {
            b[k] = a.add(&b[k], &a.mul(&cd, &spow[k - d]));
        }
    }
    let mut g = vec![a.one()];
    for n in 1..=n_max {
        let mut acc = a.zero();
        for k in 1..=n {
            acc = a.add(&acc, &a.mul(&b[k], &g[n - k]));
        }
        g.push(a.div_u64(&acc, n as u64));
    }
    Ok(CoeffVector::new(g))
}

/// Float table of `g_{n,N}` computed on `ρ`-rescaled weights, read back in logs.
#[derive(Clone, Debug)]
pub struct LogTable {
    table: BivariateTable<f64>,
    ln_scale: f64,
}

impl LogTable {
    pub fn new(spec: &ExpansiveSpec, n_max: usize, big_n_max: usize) -> Result<Self> {
        let rho = spec.rho_f64();
        let c = build_c_scaled(spec, rho, n_max);
        let table = mset_exp_transform_scaled(&F64Arith, &c, &rho, n_max, big_n_max)?;
        Ok(LogTable { table, ln_scale: rho.ln() })
    }

    /// `ln g_{n,N}`; `−∞` for a zero entry.
    pub fn ln_get(&self, n: usize, big_n: usize) -> f64 {
        self.table.get(n, big_n).ln() - n as f64 * self.ln_scale
    }

    pub fn n_max(&self) -> usize {
        self.table.n_max()
    }

    pub fn big_n_max(&self) -> usize {
        self.table.big_n_max()
    }
}

/// `ln g_n` for `n ≤ n_max` from the univariate recurrence on `ρ`-rescaled weights.
pub fn ln_gn_exact(spec: &ExpansiveSpec, n_max: usize) -> Result<Vec<f64>> {
    let rho = spec.rho_f64();
    let c = build_c_scaled(spec, rho, n_max);
    let g = mset_univariate_scaled(&F64Arith, &c, &rho, n_max)?;
    Ok(g.coeffs.iter().enumerate().map(|(n, v)| v.ln() - n as f64 * rho.ln()).collect())
}

/// Truncated product of two series.
pub fn series_mul<A: Arith>(a: &A, f: &[A::T], g: &[A::T], n_max: usize) -> Vec<A::T> {
    let mut out = vec![a.zero(); n_max + 1];
    for (i, fi) in f.iter().enumerate().take(n_max + 1) {
        if a.is_zero(fi) {
            continue;
        }
        for (j, gj) in g.iter().enumerate().take(n_max + 1 - i) {
            if !a.is_zero(gj) {
                out[i + j] = a.add(&out[i + j], &a.mul(fi, gj));
            }
        }
    }
    out
}

/// `C(x)^N` to order `n_max` by binary powering of truncated products.
pub fn series_pow<A: Arith>(a: &A, c: &CoeffVector<A::T>, big_n: u64, n_max: usize) -> CoeffVector<A::T> {
    let mut base = c.resized(a, n_max).coeffs;
    let mut acc = vec![a.zero(); n_max + 1];
    acc[0] = a.one();
    let mut e = big_n;
    while e > 0 {
        if e & 1 == 1 {
            acc = series_mul(a, &acc, &base, n_max);
        }
        e >>= 1;
        if e > 0 {
            base = series_mul(a, &base, &base, n_max);
        }
    }
    CoeffVector::new(acc)
}

/// `exp(C(x))` to order `n_max` from `k e_k = Σ_{i=1}^{k} i c_i e_{k−i}`.
pub fn series_exp<A: Arith>(a: &A, c: &CoeffVector<A::T>, n_max: usize) -> Result<CoeffVector<A::T>> {
    check_constant_term(a, c)?;
    let c = c.resized(a, n_max);
    let ic: Vec<A::T> = c.coeffs.iter().enumerate().map(|(i, v)| a.mul_u64(v, i as u64)).collect();
    let mut e = vec![a.one()];
    for k in 1..=n_max {
        let mut acc = a.zero();
        for i in 1..=k {
            if !a.is_zero(&ic[i]) {
                acc = a.add(&acc, &a.mul(&ic[i], &e[k - i]));
            }
        }
        e.push(a.div_u64(&acc, k as u64));
    }
    Ok(CoeffVector::new(e))
}

/// Sparse probability vector: `probs[i]` is the mass at `offset + i`.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub offset: usize,
    pub probs: Vec<f64>,
}

impl Window {
    pub fn at(&self, s: usize) -> f64 {
        s.checked_sub(self.offset).and_then(|i| self.probs.get(i)).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    fn trimmed(mut self, rel: f64) -> Self {
        let max = self.probs.iter().cloned().fold(0.0, f64::max);
        let cut = max * rel;
        let lo = self.probs.iter().position(|&p| p > cut).unwrap_or(0);
        let hi = self.probs.iter().rposition(|&p| p > cut).map_or(0, |i| i + 1);
        self.probs = self.probs[lo..hi.max(lo)].to_vec();
        self.offset += lo;
        self
    }

    fn convolve(&self, other: &Window, limit: usize) -> Window {
        let offset = self.offset + other.offset;
        if offset > limit || self.probs.is_empty() || other.probs.is_empty() {
            return Window { offset, probs: Vec::new() };
        }
        let len = (self.probs.len() + other.probs.len() - 1).min(limit - offset + 1);
        if self.probs.len().min(other.probs.len()) > 64 && self.probs.len() * other.probs.len() > FFT_THRESHOLD {
            let mut probs = fft_convolve(&self.probs, &other.probs);
            probs.truncate(len);
            return Window { offset, probs };
        }
        let mut probs = vec![0.0; len];
        for (i, &p) in self.probs.iter().enumerate() {
            if i >= len {
                break;
            }
            for (j, &q) in other.probs.iter().enumerate().take(len - i) {
                probs[i + j] += p * q;
            }
        }
        Window { offset, probs }
    }
}

/// Above this many products a convolution goes through the FFT.
const FFT_THRESHOLD: usize = 1 << 20;

/// Linear convolution by FFT. Rounding is absolute, about `1e-16` times the
/// largest output entry; negative round-off is clamped to zero.
fn fft_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    use rustfft::{num_complex::Complex, FftPlanner};
    let out_len = a.len() + b.len() - 1;
    let size = out_len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let lift = |v: &[f64]| {
        let mut buf: Vec<Complex<f64>> = v.iter().map(|&x| Complex::new(x, 0.0)).collect();
        buf.resize(size, Complex::new(0.0, 0.0));
        buf
    };
    let (mut fa, mut fb) = (lift(a), lift(b));
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    fa.iter_mut().zip(&fb).for_each(|(x, y)| *x *= y);
    inv.process(&mut fa);
    let scale = 1.0 / size as f64;
    fa[..out_len].iter().map(|z| (z.re * scale).max(0.0)).collect()
}

/// `p`-fold convolution power of a nonnegative mass vector, discarding entries
/// below `rel` times the running maximum and everything above `limit`.
///
/// Exact up to the discarded mass and, for wide windows, FFT rounding; meant
/// for pmfs whose bulk sits in a window of width `O(√p)` far from the origin.
/// With wide windows keep `rel` at `1e-13` or above.
pub fn pow_windowed(base: &Window, p: u64, rel: f64, limit: usize) -> Window {
    let mut b = base.clone().trimmed(rel);
    let mut acc = Window { offset: 0, probs: vec![1.0] };
    let mut e = p;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc.convolve(&b, limit).trimmed(rel);
        }
        e >>= 1;
        if e > 0 {
            b = b.convolve(&b, limit).trimmed(rel);
        }
    }
    acc
}

/// CSV export: header `n,N,g`, one row per nonzero entry.
pub fn table_to_csv<A: Arith>(a: &A, t: &BivariateTable<A::T>) -> String {
    let mut out = String::from("n,N,g\n");
    for (n, big_n, v) in t.cells() {
        if !a.is_zero(v) {
            out.push_str(&format!("{n},{big_n},{}\n", a.render(v)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::{BigFloatArith, ExactArith, F64Arith};
    use num_bigint::BigInt;
    use num_rational::BigRational;
    use proptest::prelude::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn exact_vec(v: &[i64]) -> CoeffVector<BigRational> {
        CoeffVector::new(v.iter().map(|&x| q(x, 1)).collect())
    }

    fn partition_weights(n: usize) -> CoeffVector<BigRational> {
        let mut v = vec![1i64; n + 1];
        v[0] = 0;
        exact_vec(&v)
    }

    /// Partitions of `n` into exactly `k` parts by direct recursion on the largest part.
    fn brute_parts(n: usize, k: usize, max_part: usize) -> u64 {
        if k == 0 {
            return (n == 0) as u64;
        }
        (1..=max_part.min(n)).map(|p| brute_parts(n - p, k - 1, p)).sum()
    }

    #[test]
    fn build_examples() {
        let s = ExpansiveSpec::geometric();
        let c = build_c(&F64Arith, &s, 3).unwrap();
        assert_eq!(c.coeffs, vec![0.0, 2.0, 4.0, 8.0]);
        let s2 = ExpansiveSpec::new(2.0, 0.5, crate::SlowlyVarying::one(), 2).unwrap();
        let c2 = build_c(&ExactArith, &s2, 4).unwrap();
        assert_eq!(c2.coeffs[1], q(0, 1));
        let g = build_c_gtm(&ExactArith, &s, 4).unwrap();
        assert_eq!(g.coeffs, vec![q(0, 1), q(4, 1), q(8, 1), q(16, 1), q(32, 1)]);
        let g2 = build_c_gtm(&ExactArith, &s2, 2).unwrap();
        assert_eq!(g2.coeffs[1], c2.coeffs[3]);
        let sc = build_c_scaled(&s, 0.5, 5);
        assert!(sc.coeffs[1..].iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn partition_rows() {
        let a = ExactArith;
        let t = mset_exp_transform(&a, &partition_weights(6), 6, 6).unwrap();
        assert_eq!(&t.row(4)[1..5], &[q(1, 1), q(2, 1), q(1, 1), q(1, 1)]);
        assert_eq!(*t.get(5, 2), q(2, 1));
        assert_eq!(*t.get(0, 0), q(1, 1));
        for n in 0..=6 {
            for k in 0..=6 {
                assert_eq!(*t.get(n, k), q(brute_parts(n, k, n) as i64, 1));
            }
        }
    }

    #[test]
    fn zero_weights_give_identity() {
        let a = ExactArith;
        let c = exact_vec(&[0, 0, 0, 0]);
        for t in [mset_exp_transform(&a, &c, 3, 3).unwrap(), mset_product_transform(&a, &c, 3, 3).unwrap()] {
            for (n, k, v) in t.cells() {
                assert_eq!(*v, q((n == 0 && k == 0) as i64, 1));
            }
        }
    }

    #[test]
    fn single_factor_tables() {
        let a = ExactArith;
        let t = mset_product_transform(&a, &exact_vec(&[0, 1]), 8, 8).unwrap();
        for (n, k, v) in t.cells() {
            assert_eq!(*v, q((n == k) as i64, 1));
        }
        let t = mset_product_transform(&a, &exact_vec(&[0, 2]), 8, 8).unwrap();
        for n in 0..=8 {
            assert_eq!(*t.get(n, n), q(n as i64 + 1, 1));
        }
        // Concentrated at m = 3 with c_3 = 5/2: g[3n][n] = binom(c+n−1, n).
        let c = CoeffVector::new(vec![q(0, 1), q(0, 1), q(0, 1), q(5, 2)]);
        let t = mset_exp_transform(&a, &c, 12, 4).unwrap();
        let mut bin = q(1, 1);
        for n in 1..=4i64 {
            bin = bin * (q(5, 2) + q(n - 1, 1)) / q(n, 1);
            assert_eq!(*t.get(3 * n as usize, n as usize), bin);
        }
    }

    #[test]
    fn transforms_agree_exactly() {
        let a = ExactArith;
        let c = CoeffVector::new((0..=20).map(|k| if k == 0 { q(0, 1) } else { q((k * 7 % 11) as i64, 3) }).collect());
        let e = mset_exp_transform(&a, &c, 20, 20).unwrap();
        let p = mset_product_transform(&a, &c, 20, 20).unwrap();
        assert_eq!(e, p);
    }

    #[test]
    fn transforms_agree_in_bigfloat() {
        let a = BigFloatArith::new(128).unwrap();
        let c = CoeffVector::new((0..=25).map(|k| a.from_ratio(&q(k as i64 % 5, 2))).collect());
        let e = mset_exp_transform(&a, &c, 25, 25).unwrap();
        let p = mset_product_transform(&a, &c, 25, 25).unwrap();
        for ((_, _, x), (_, _, y)) in e.cells().zip(p.cells()) {
            let (x, y) = (a.to_f64(x), a.to_f64(y));
            assert!((x - y).abs() <= 1e-25 * x.abs().max(1e-300), "{x} {y}");
        }
    }

    #[test]
    fn scaled_tables_match_unscaled() {
        let s = ExpansiveSpec::new(1.5, 0.5, crate::SlowlyVarying::log_power(1.0), 2).unwrap();
        let a = F64Arith;
        let c = build_c(&a, &s, 30).unwrap();
        let plain = mset_exp_transform(&a, &c, 30, 15).unwrap();
        let cs = build_c_scaled(&s, 0.5, 30);
        let scaled = mset_exp_transform_scaled(&a, &cs, &0.5, 30, 15).unwrap();
        let prod = mset_product_transform_scaled(&a, &cs, &0.5, 30, 15).unwrap();
        for n in 0..=30 {
            for k in 0..=15 {
                let want = *plain.get(n, k) * 0.5f64.powi(n as i32);
                for t in [&scaled, &prod] {
                    let got = *t.get(n, k);
                    assert!((got - want).abs() <= 1e-12 * want.abs() + 1e-300, "{n} {k} {got} {want}");
                }
            }
        }
        let uni = mset_univariate_scaled(&a, &cs, &0.5, 30).unwrap();
        for n in 0..=30 {
            let row: f64 = plain.row(n).iter().sum::<f64>() * 0.5f64.powi(n as i32);
            assert!((uni.coeffs[n] - row).abs() <= 1e-12 * row);
        }
    }

    #[test]
    fn size_guard() {
        let a = F64Arith;
        let c = CoeffVector::new(vec![0.0, 1.0]);
        assert!(matches!(mset_exp_transform(&a, &c, 10_000, 10_000), Err(Error::Size { .. })));
    }

    #[test]
    fn nonzero_constant_rejected() {
        let c = CoeffVector::new(vec![1.0, 1.0]);
        assert!(matches!(mset_exp_transform(&F64Arith, &c, 3, 3), Err(Error::Contract(_))));
    }

    #[test]
    fn pow_examples() {
        let a = ExactArith;
        let p = series_pow(&a, &exact_vec(&[0, 1, 1]), 2, 4);
        assert_eq!(p.coeffs[3], q(2, 1));
        let p = series_pow(&a, &exact_vec(&[0, 1]), 5, 7);
        for (k, v) in p.coeffs.iter().enumerate() {
            assert_eq!(*v, q((k == 5) as i64, 1));
        }
        let pw = partition_weights(8);
        let p = series_pow(&a, &pw, 3, 8);
        let mut direct = 0;
        for i in 1..=6 {
            for j in 1..=6 {
                if i + j < 6 {
                    direct += 1;
                }
            }
        }
        assert_eq!(p.coeffs[6], q(direct, 1));
        assert_eq!(direct, 10);
    }

    #[test]
    fn exp_examples() {
        let a = ExactArith;
        let e = series_exp(&a, &exact_vec(&[0, 1]), 6).unwrap();
        let mut fact = 1i64;
        for k in 0..=6 {
            if k > 0 {
                fact *= k;
            }
            assert_eq!(e.coeffs[k as usize], q(1, fact));
        }
        let e = series_exp(&a, &exact_vec(&[0, 0, 0]), 2).unwrap();
        assert_eq!(e.coeffs, vec![q(1, 1), q(0, 1), q(0, 1)]);
        let e = series_exp(&a, &partition_weights(6), 6).unwrap();
        assert_eq!(e.coeffs[3], q(13, 6));
        // Against Σ_{k≤K} C^k/k!.
        let c = partition_weights(6);
        let mut sum = vec![q(0, 1); 7];
        sum[0] = q(1, 1);
        let mut fact = q(1, 1);
        for k in 1..=6u64 {
            fact = fact * q(k as i64, 1);
            let pk = series_pow(&a, &c, k, 6);
            for (s, v) in sum.iter_mut().zip(pk.coeffs) {
                *s = s.clone() + v / fact.clone();
            }
        }
        assert_eq!(e.coeffs, sum);
    }

    #[test]
    fn windowed_power_matches_full_power() {
        let pmf: Vec<f64> = (0..40).map(|k| if k < 2 { 0.0 } else { 0.7f64.powi(k - 2) * 0.3 }).collect();
        let full = series_pow(&F64Arith, &CoeffVector::new(pmf.clone()), 25, 600);
        let w = pow_windowed(&Window { offset: 0, probs: pmf.clone() }, 25, 1e-30, 600);
        for s in 0..=600 {
            let want = full.coeffs[s];
            if want > 1e-15 {
                assert!((w.at(s) - want).abs() <= 1e-12 * want, "{s}");
            }
        }
    }

    #[test]
    fn fft_convolution_matches_direct() {
        let a: Vec<f64> = (0..1500).map(|i| ((i as f64) * 0.37).sin().abs() + 0.1).collect();
        let b: Vec<f64> = (0..1200).map(|i| ((i as f64) * 0.11).cos().abs()).collect();
        let fast = fft_convolve(&a, &b);
        let max = fast.iter().cloned().fold(0.0, f64::max);
        for k in (0..a.len() + b.len() - 1).step_by(97) {
            let direct: f64 = (0..=k).filter(|&i| i < a.len() && k - i < b.len()).map(|i| a[i] * b[k - i]).sum();
            assert!((fast[k] - direct).abs() <= 1e-13 * max, "{k}");
        }
    }

    #[test]
    fn csv_lists_nonzero_entries() {
        let a = ExactArith;
        let t = mset_exp_transform(&a, &partition_weights(3), 3, 3).unwrap();
        let csv = table_to_csv(&a, &t);
        assert!(csv.starts_with("n,N,g\n0,0,1\n"));
        assert_eq!(csv.lines().count(), 1 + 1 + 1 + 2 + 3);
        let c = CoeffVector::new(vec![q(0, 1), q(1, 3)]);
        let csv = table_to_csv(&a, &mset_exp_transform(&a, &c, 2, 2).unwrap());
        assert!(csv.contains("2,2,2/9"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn exp_and_product_agree(v in prop::collection::vec(0u8..=20, 12)) {
            let a = ExactArith;
            let mut c = vec![q(0, 1)];
            c.extend(v.iter().map(|&x| q(x as i64, 4)));
            let c = CoeffVector::new(c);
            let e = mset_exp_transform(&a, &c, 14, 10).unwrap();
            let p = mset_product_transform(&a, &c, 14, 10).unwrap();
            prop_assert_eq!(e, p);
        }

        #[test]
        fn truncation_is_monotone(v in prop::collection::vec(0u8..=10, 10), n1 in 4usize..10) {
            let a = ExactArith;
            let mut c = vec![q(0, 1)];
            c.extend(v.iter().map(|&x| q(x as i64, 2)));
            let c = CoeffVector::new(c);
            let small = mset_exp_transform(&a, &c, n1, n1).unwrap();
            let big = mset_exp_transform(&a, &c, 14, 12).unwrap();
            for n in 0..=n1 {
                for k in 0..=n1 {
                    prop_assert_eq!(small.get(n, k), big.get(n, k));
                }
            }
        }

        #[test]
        fn support_respects_minimal_size(m in 1usize..4, v in prop::collection::vec(1u8..=5, 8)) {
            let a = ExactArith;
            let mut c = vec![q(0, 1); m];
            c.extend(v.iter().map(|&x| q(x as i64, 1)));
            let c = CoeffVector::new(c);
            let t = mset_exp_transform(&a, &c, 12, 12).unwrap();
            for (n, k, g) in t.cells() {
                if k * m > n {
                    prop_assert_eq!(g.clone(), q(0, 1));
                } else {
                    prop_assert!(*g >= q(0, 1));
                }
            }
        }
    }
}
