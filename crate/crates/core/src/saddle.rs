//! Real evaluation of `C` and its derivatives with certified tails, and the
//! saddle-point equations solved by monotone bisection.
//!
//! Points are addressed by a log-position `lx`: for an expansive spec
//! `x = ρ e^{lx}` (so `χ = −lx`), for a finite raw vector `x = e^{lx}`. Solvers
//! bisect on a parameter `u` with `lx = −e^{−u}` (spec) or `lx = u` (raw); every
//! map they invert is monotone in `u`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{domain, precision, Error, Result};
use crate::model::ExpansiveSpec;

/// Relative tail tolerance used by the solvers: below double rounding.
pub const SERIES_RTOL: f64 = 1e-17;
/// Default relative tolerance for roots.
pub const ROOT_TOL: f64 = 1e-12;
/// Hard cap on the number of series terms.
pub const MAX_TERMS: usize = 20_000_000;

/// Weight sequence seen by the evaluator: `c_j x^j = exp(base(j) + j·lx)`.
pub trait Weights: Sync {
    /// First index with a nonzero weight.
    fn m(&self) -> usize;
    /// `ln(c_j R^j)` where `R` is the reference radius, `None` for a zero weight.
    fn base(&self, j: usize) -> Option<f64>;
    /// `ln R`.
    fn ln_radius(&self) -> f64;
    /// Supremum of admissible `lx` (exclusive).
    fn lx_sup(&self) -> f64;
    /// `sup_{i ≥ j} exp(base(i+1) − base(i))`.
    fn base_ratio_bound(&self, j: usize) -> f64;
    /// Last nonzero index for finite vectors.
    fn max_index(&self) -> Option<usize>;

    fn c_m(&self) -> f64 {
        self.base(self.m()).map_or(0.0, |b| (b - self.m() as f64 * self.ln_radius()).exp())
    }

    fn lx_of(&self, u: f64) -> f64 {
        let sup = self.lx_sup();
        if sup.is_finite() {
            sup - (-u).exp()
        } else {
            u
        }
    }

    fn u_of(&self, lx: f64) -> f64 {
        let sup = self.lx_sup();
        if sup.is_finite() {
            -(sup - lx).ln()
        } else {
            lx
        }
    }
}

impl Weights for ExpansiveSpec {
    fn m(&self) -> usize {
        self.m
    }
    fn base(&self, j: usize) -> Option<f64> {
        if j < self.m {
            return None;
        }
        let jf = j as f64;
        Some(self.h.ln_eval(jf) + (self.alpha_f64() - 1.0) * jf.ln())
    }
    fn ln_radius(&self) -> f64 {
        self.rho_f64().ln()
    }
    fn lx_sup(&self) -> f64 {
        0.0
    }
    fn base_ratio_bound(&self, j: usize) -> f64 {
        let j = j.max(1) as f64;
        self.h.ratio_bound(j as usize) * (1.0 + 1.0 / j).powf(self.alpha_f64() - 1.0).max(1.0)
    }
    fn max_index(&self) -> Option<usize> {
        None
    }
}

/// A finite nonnegative weight vector `c[0..]` with `c[0] = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct RawWeights {
    c: Vec<f64>,
    m: usize,
}

impl RawWeights {
    pub fn new(c: Vec<f64>) -> Result<Self> {
        if c.first().is_some_and(|&v| v != 0.0) {
            return Err(Error::Contract("raw weights must have c[0] = 0".into()));
        }
        if c.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::Contract("saddle evaluation needs finite nonnegative weights".into()));
        }
        let m = c.iter().position(|&v| v > 0.0).ok_or_else(|| domain("all weights are zero"))?;
        Ok(RawWeights { c, m })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }
}

impl Weights for RawWeights {
    fn m(&self) -> usize {
        self.m
    }
    fn base(&self, j: usize) -> Option<f64> {
        self.c.get(j).filter(|&&v| v > 0.0).map(|v| v.ln())
    }
    fn ln_radius(&self) -> f64 {
        0.0
    }
    fn lx_sup(&self) -> f64 {
        f64::INFINITY
    }
    fn base_ratio_bound(&self, _: usize) -> f64 {
        f64::INFINITY
    }
    fn max_index(&self) -> Option<usize> {
        Some(self.c.len() - 1)
    }
}

/// One truncated series evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesValue {
    pub value: f64,
    pub tail_bound: f64,
    pub terms_used: usize,
}

/// `C`, `xC'`, `x²C''`, `x³C'''`, `D = xC' − mC` and `Σ_{j>m} c_j x^j` at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments {
    pub lx: f64,
    pub x: f64,
    pub c: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub d: f64,
    pub c_gt: f64,
    /// Tail bounds for `c, c1, c2, c3`.
    pub tails: [f64; 4],
    pub terms: usize,
}

impl Moments {
    /// `x^k C^{(k)}(x)`.
    pub fn deriv(&self, k: usize) -> f64 {
        [self.c, self.c1, self.c2, self.c3][k]
    }
}

/// Series evaluator with a cache of `exp(base(j))`.
pub struct Evaluator<'a, W: Weights + ?Sized> {
    w: &'a W,
    b: Vec<f64>,
    rtol: f64,
    atol: f64,
}

impl<'a, W: Weights + ?Sized> Evaluator<'a, W> {
    pub fn new(w: &'a W) -> Self {
        Evaluator { w, b: Vec::new(), rtol: SERIES_RTOL, atol: 0.0 }
    }

    pub fn with_tolerance(w: &'a W, rtol: f64, atol: f64) -> Self {
        Evaluator { w, b: Vec::new(), rtol, atol }
    }

    pub fn weights(&self) -> &'a W {
        self.w
    }

    fn weight(&mut self, j: usize) -> f64 {
        while self.b.len() <= j {
            let i = self.b.len();
            self.b.push(self.w.base(i).map_or(0.0, f64::exp));
        }
        self.b[j]
    }

    pub fn moments(&mut self, lx: f64) -> Result<Moments> {
        if lx.is_nan() || lx >= self.w.lx_sup() {
            return Err(domain(format!("series diverges at log-position {lx} (limit {})", self.w.lx_sup())));
        }
        let m = self.w.m();
        let last = self.w.max_index().unwrap_or(usize::MAX);
        let q = lx.exp();
        let mut s = [0.0f64; 4];
        let (mut d, mut c_gt) = (0.0f64, 0.0f64);
        let mut tails = [0.0f64; 4];
        let mut qj = 0.0;
        let mut j = m;
        loop {
            if j > MAX_TERMS {
                return Err(precision(format!("tail not certified within {MAX_TERMS} terms at lx = {lx}")));
            }
            qj = if (j - m) % 64 == 0 { (j as f64 * lx).exp() } else { qj * q };
            let t = self.weight(j) * qj;
            let jf = j as f64;
            let f1 = jf * t;
            let f2 = (jf - 1.0) * f1;
            let f3 = (jf - 2.0) * f2;
            s[0] += t;
            s[1] += f1;
            s[2] += f2;
            s[3] += f3;
            d += (jf - m as f64) * t;
            if j > m {
                c_gt += t;
            }
            if j >= last {
                break;
            }
            if (j - m) % 8 == 7 && j >= 3 {
                let r0 = self.w.base_ratio_bound(j) * q;
                let mut done = true;
                let terms = [t, f1, f2, f3];
                for k in 0..4 {
                    let r = r0 * (jf + 1.0) / (jf + 1.0 - k as f64);
                    if r >= 1.0 {
                        done = false;
                        break;
                    }
                    tails[k] = terms[k] * r / (1.0 - r);
                    if tails[k] > self.atol.max(self.rtol * s[k]) {
                        done = false;
                        break;
                    }
                }
                if done {
                    break;
                }
            }
            j += 1;
        }
        if j >= last {
            tails = [0.0; 4];
        }
        Ok(Moments {
            lx,
            x: (self.w.ln_radius() + lx).exp(),
            c: s[0],
            c1: s[1],
            c2: s[2],
            c3: s[3],
            d,
            c_gt,
            tails,
            terms: j - m + 1,
        })
    }
}

/// `x^k C^{(k)}(x)` for `k ≤ 3`, truncated once the certified tail is below `tol`.
///
/// Note the returned value carries the `x^k` factor.
pub fn eval_c_deriv<W: Weights + ?Sized>(w: &W, x: f64, k: usize, tol: f64) -> Result<SeriesValue> {
    if k > 3 {
        return Err(Error::Contract("derivative order above 3".into()));
    }
    if x <= 0.0 {
        return Err(Error::Contract("evaluation point must be positive".into()));
    }
    let lx = x.ln() - w.ln_radius();
    if lx >= w.lx_sup() {
        return Err(domain(format!("x = {x} is not inside the disc of convergence")));
    }
    let mut ev = Evaluator::with_tolerance(w, 0.0, tol);
    let mo = ev.moments(lx)?;
    Ok(SeriesValue { value: mo.deriv(k), tail_bound: mo.tails[k], terms_used: mo.terms })
}

/// Bisection for an increasing `f` on `[lo, hi]` with `f(lo) < target < f(hi)`.
///
/// Stops when `|f − target| ≤ tol·|target|` or the bracket is exhausted in
/// floating point; in the latter case the residual contract is checked by the
/// caller.
fn bisect_increasing(
    mut f: impl FnMut(f64) -> Result<f64>,
    target: f64,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    let mut best = (lo, f64::INFINITY);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid)?;
        let r = (v - target).abs();
        if r < best.1 {
            best = (mid, r);
        }
        if r <= tol * target.abs() {
            return Ok((mid, v));
        }
        if v < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let v = f(best.0)?;
    Ok((best.0, v))
}

/// Expand from `u0` until `f(lo) < target < f(hi)` for increasing `f`.
fn bracket_increasing(
    mut f: impl FnMut(f64) -> Result<f64>,
    target: f64,
    u0: f64,
    step: f64,
    max_steps: usize,
) -> Result<(f64, f64)> {
    let v0 = f(u0)?;
    let dir = if v0 < target { 1.0 } else { -1.0 };
    let (mut a, mut fa) = (u0, v0);
    for _ in 0..max_steps {
        let b = a + dir * step;
        let fb = f(b)?;
        if (fb - target) * (fa - target) <= 0.0 {
            return Ok(if dir > 0.0 { (a, b) } else { (b, a) });
        }
        a = b;
        fa = fb;
    }
    Err(domain(format!("no bracket found for target {target} (last value {fa})")))
}

/// Univariate saddle point: `z C'(z) = n`.
pub fn solve_univariate<W: Weights + ?Sized>(w: &W, n: f64, tol: f64) -> Result<f64> {
    let mut ev = Evaluator::new(w);
    let (u, m) = solve_univariate_moments(&mut ev, n, tol)?;
    let _ = u;
    Ok(m.x)
}

/// As [`solve_univariate`], also returning the moments at the root.
pub fn solve_univariate_moments<W: Weights + ?Sized>(
    ev: &mut Evaluator<'_, W>,
    n: f64,
    tol: f64,
) -> Result<(f64, Moments)> {
    if n <= 0.0 {
        return Err(Error::Contract("n must be positive".into()));
    }
    let w = ev.weights();
    let lx_of = |u: f64| w.lx_of(u);
    let u0 = 0.0;
    let (lo, hi) = {
        let mut f = |u: f64| ev.moments(lx_of(u)).map(|m| m.c1);
        bracket_increasing(&mut f, n, u0, 1.0, 200)?
    };
    let (u, _) = bisect_increasing(|u| ev.moments(lx_of(u)).map(|m| m.c1), n, lo, hi, tol)?;
    let mo = ev.moments(lx_of(u))?;
    if (mo.c1 - n).abs() > tol * n {
        return Err(precision(format!("univariate residual {} exceeds tolerance", (mo.c1 - n).abs() / n)));
    }
    Ok((u, mo))
}

/// Regime classification by `λ = N/N*`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    CaseI,
    CaseII,
    Window,
}

impl Regime {
    pub fn classify(lambda: f64) -> Regime {
        if lambda < 0.95 {
            Regime::CaseI
        } else if lambda > 1.05 {
            Regime::CaseII
        } else {
            Regime::Window
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::CaseI => "case_i",
            Regime::CaseII => "case_ii",
            Regime::Window => "window",
        })
    }
}

/// Solution of the bivariate system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaddleSolution {
    pub n: u64,
    #[serde(rename = "N")]
    pub big_n: u64,
    pub x_n: f64,
    pub y_n: f64,
    pub chi_n: f64,
    pub s_n: f64,
    pub residual_size: f64,
    pub residual_count: f64,
    pub regime: Regime,
    pub lambda: f64,
    pub n_star: f64,
    /// `C(x_n)`, `x_n C'(x_n)`, `x_n² C''(x_n)`, `C_{>m}(x_n)·x_n^m`.
    pub c_x: f64,
    pub xc1_x: f64,
    pub x2c2_x: f64,
    pub c_gt_x: f64,
}

/// Core bivariate solve on arbitrary weights: returns `(moments, y, S, residuals)`.
pub fn solve_bivariate_weights<W: Weights + ?Sized>(
    ev: &mut Evaluator<'_, W>,
    n: u64,
    big_n: u64,
    tol: f64,
) -> Result<(Moments, f64, f64, f64, f64)> {
    let w = ev.weights();
    let m = w.m() as u64;
    let c_m = w.c_m();
    let ln_r = w.ln_radius();
    if big_n < 1 || n <= m * big_n {
        return Err(domain(format!("need N ≥ 1 and n − mN ≥ 1, got n = {n}, N = {big_n}, m = {m}")));
    }
    let excess = (n - m * big_n) as f64;
    let target = big_n as f64;
    let lx_of = |u: f64| w.lx_of(u);
    let mf = m as f64;

    // ln b(u) = m ln x + ln(n − mN) − ln D, strictly decreasing.
    let ln_b = |mo: &Moments| mf * (ln_r + mo.lx) + excess.ln() - mo.d.ln();
    let neg_ln_b = |ev: &mut Evaluator<'_, W>, u: f64| -> Result<f64> {
        let mo = ev.moments(lx_of(u))?;
        if mo.d <= 0.0 {
            return Err(domain("only the minimal weight is nonzero; D(x) vanishes"));
        }
        Ok(-ln_b(&mo))
    };
    let (lo, hi) = bracket_increasing(|u| neg_ln_b(ev, u), 0.0, 0.0, 1.0, 200)?;
    let (u_b, _) = bisect_increasing(|u| neg_ln_b(ev, u), 0.0, lo, hi, 0.0)?;
    // Nudge to the side where b < 1.
    let mut u_lo = u_b;
    while neg_ln_b(ev, u_lo)? <= 0.0 {
        u_lo += u_lo.abs().max(1.0) * 1e-15;
    }

    // f(u) = (n − mN) C/D + c_m b/(1 − b), strictly decreasing on (u_b, ∞).
    let eval_f = |ev: &mut Evaluator<'_, W>, u: f64| -> Result<(Moments, f64, f64, f64)> {
        let mo = ev.moments(lx_of(u))?;
        let lb = ln_b(&mo);
        if lb >= 0.0 {
            return Ok((mo, f64::INFINITY, f64::INFINITY, f64::INFINITY));
        }
        let s = lb.exp() / -lb.exp_m1();
        let y = excess / mo.d;
        Ok((mo, y * mo.c + c_m * s, y, s))
    };
    let mut u_hi = u_lo + 1.0;
    let mut steps = 0;
    while eval_f(ev, u_hi)?.1 >= target {
        u_hi += 1.0;
        steps += 1;
        if steps > 200 {
            return Err(domain(format!("count equation has no sign change above u = {u_lo}")));
        }
    }
    let (u, _) = bisect_increasing(|u| eval_f(ev, u).map(|r| -r.1), -target, u_lo, u_hi, tol * 0.1)?;
    let (mo, _, y, s) = eval_f(ev, u)?;
    let res_size = y * mo.c1 + mf * c_m * s - n as f64;
    let res_count = y * mo.c + c_m * s - target;
    Ok((mo, y, s, res_size, res_count))
}

/// Bivariate saddle point for an expansive spec, with regime tag.
pub fn solve_bivariate(spec: &ExpansiveSpec, n: u64, big_n: u64, tol: f64) -> Result<SaddleSolution> {
    let mut ev = Evaluator::new(spec);
    solve_bivariate_with(&mut ev, spec, n, big_n, tol)
}

/// As [`solve_bivariate`], reusing an evaluator's weight cache.
pub fn solve_bivariate_with(
    ev: &mut Evaluator<'_, ExpansiveSpec>,
    spec: &ExpansiveSpec,
    n: u64,
    big_n: u64,
    tol: f64,
) -> Result<SaddleSolution> {
    let (mo, y, s, rs, rc) = solve_bivariate_weights(ev, n, big_n, tol)?;
    if rs.abs() > tol * n as f64 || rc.abs() > tol * big_n as f64 {
        return Err(precision(format!(
            "saddle residuals {:.3e}, {:.3e} exceed tolerance {tol:e}",
            rs.abs() / n as f64,
            rc.abs() / big_n as f64
        )));
    }
    let ns = solve_nstar(spec, n as f64, ROOT_TOL)?;
    let lambda = big_n as f64 / ns.n_star;
    Ok(SaddleSolution {
        n,
        big_n,
        x_n: mo.x,
        y_n: y,
        chi_n: -mo.lx,
        s_n: s,
        residual_size: rs,
        residual_count: rc,
        regime: Regime::classify(lambda),
        lambda,
        n_star: ns.n_star,
        c_x: mo.c,
        xc1_x: mo.c1,
        x2c2_x: mo.c2,
        c_gt_x: mo.c_gt,
    })
}

/// Solution of `u·h(u)^{1/(α+1)} = v^{1/(α+1)}` and the threshold `N*`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NStarSolution {
    pub v: f64,
    pub u_v: f64,
    pub g_v: f64,
    pub n_star: f64,
    pub c0: f64,
}

/// `C₀ = α^{−1}(ρ^{−m} Γ(α+1))^{1/(α+1)}`.
pub fn c0(spec: &ExpansiveSpec) -> f64 {
    let a = spec.alpha_f64();
    let ap = 1.0 / (a + 1.0);
    ((-(spec.m as f64) * spec.rho_f64().ln() + gamma(a + 1.0).ln()) * ap).exp() / a
}

pub fn solve_nstar(spec: &ExpansiveSpec, v: f64, tol: f64) -> Result<NStarSolution> {
    if v <= 1.0 {
        return Err(domain(format!("N* equation needs v > 1, got {v}")));
    }
    let a = spec.alpha_f64();
    let ap = 1.0 / (a + 1.0);
    let lv = v.ln();
    // φ(t) = t + ln h(e^t)/(α+1) − ln v/(α+1) with t = ln u.
    let phi = |t: f64| t + spec.h.ln_eval(t.exp()) * ap - lv * ap;
    let eps = ap / 2.0;
    let candidates = [((ap - eps) * lv, (ap + eps) * lv), (0.0, lv)];
    let (lo, hi) = candidates
        .into_iter()
        .find(|&(lo, hi)| phi(lo) < 0.0 && phi(hi) > 0.0)
        .ok_or_else(|| domain(format!("no root of the N* equation bracketed for v = {v}")))?;
    let (mut lo, mut hi) = (lo, hi);
    let mut t = 0.5 * (lo + hi);
    for _ in 0..300 {
        t = 0.5 * (lo + hi);
        let f = phi(t);
        if f.abs() <= tol * 0.1 || t <= lo || t >= hi {
            break;
        }
        if f < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
    }
    if phi(t).abs() > tol {
        return Err(precision(format!("N* residual {} above tolerance", phi(t).abs())));
    }
    let u_v = t.exp();
    let g_v = (spec.h.ln_eval(u_v) * ap).exp();
    let c0 = c0(spec);
    Ok(NStarSolution { v, u_v, g_v, n_star: c0 * g_v * (a * ap * lv).exp(), c0 })
}

/// Residual `ln(u h(u)^{1/(α+1)}) − ln v/(α+1)` of a N* solution.
pub fn nstar_residual(spec: &ExpansiveSpec, s: &NStarSolution) -> f64 {
    let ap = 1.0 / (spec.alpha_f64() + 1.0);
    s.u_v.ln() + spec.h.ln_eval(s.u_v) * ap - s.v.ln() * ap
}

/// `a_n = λ^{−1} g(n − mN)/g(n) ((n − mN)/n)^{α/(α+1)}`.
pub fn compute_a_n(spec: &ExpansiveSpec, n: u64, big_n: u64) -> Result<f64> {
    let m = spec.m as u64;
    if n <= m * big_n {
        return Err(domain("a_n needs n − mN ≥ 1"));
    }
    let at_n = solve_nstar(spec, n as f64, ROOT_TOL)?;
    let rest = n - m * big_n;
    let g_rest = if rest >= 2 { solve_nstar(spec, rest as f64, ROOT_TOL)?.g_v } else { spec.h.eval(1.0).powf(1.0 / (spec.alpha_f64() + 1.0)) };
    Ok(a_n_from(spec, n, big_n, &at_n, g_rest))
}

/// `a_n` from precomputed pieces: `N*` data at `n` and `g(n − mN)`.
pub fn a_n_from(spec: &ExpansiveSpec, n: u64, big_n: u64, at_n: &NStarSolution, g_rest: f64) -> f64 {
    let a = spec.alpha_f64();
    let lambda = big_n as f64 / at_n.n_star;
    let rest = (n - spec.m as u64 * big_n) as f64;
    g_rest / at_n.g_v * (rest / n as f64).powf(a / (a + 1.0)) / lambda
}

/// Ratios against the leading-order asymptotics of the saddle point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiReport {
    /// `x y C'(x) / (n − mN)`.
    pub size_ratio: f64,
    /// `χ / (α N / n)`.
    pub chi_ratio_case1: f64,
    /// `χ / (α a_n N / (n − mN))`.
    pub chi_ratio_case2: f64,
    pub a_n: f64,
}

pub fn chi_asymptotic_check(spec: &ExpansiveSpec, sol: &SaddleSolution) -> Result<ChiReport> {
    let a = spec.alpha_f64();
    let rest = (sol.n - spec.m as u64 * sol.big_n) as f64;
    let a_n = compute_a_n(spec, sol.n, sol.big_n)?;
    let nn = sol.big_n as f64;
    Ok(ChiReport {
        size_ratio: sol.y_n * sol.xc1_x / rest,
        chi_ratio_case1: sol.chi_n / (a * nn / sol.n as f64),
        chi_ratio_case2: sol.chi_n / (a * a_n * nn / rest),
        a_n,
    })
}
