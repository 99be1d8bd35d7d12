//! Right-hand sides of the asymptotic counting formulas, evaluated in log space.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::arith::F64Arith;
use crate::error::{domain, precision, Error, Result};
use crate::model::ExpansiveSpec;
use crate::saddle::{
    compute_a_n, solve_univariate_moments, Evaluator, Regime, SaddleSolution, SeriesValue, Weights, ROOT_TOL,
};
use crate::series::{series_exp, series_pow, CoeffVector};

/// Absolute tolerance on the logarithm of the `G^{≥2}` constants.
pub const CONST_TOL: f64 = 1e-15;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Formula {
    #[serde(rename = "G_n_LLT")]
    GnLlt,
    #[serde(rename = "LLT_I")]
    LltI,
    #[serde(rename = "Explicit_I")]
    ExplicitI,
    #[serde(rename = "Comb_I")]
    CombI,
    #[serde(rename = "LLT_II")]
    LltII,
    #[serde(rename = "Comb_II")]
    CombII,
}

impl Formula {
    pub const CASE_I: [Formula; 3] = [Formula::LltI, Formula::ExplicitI, Formula::CombI];
    pub const CASE_II: [Formula; 2] = [Formula::LltII, Formula::CombII];

    /// Regime the formula is valid in (`None` for the univariate count).
    pub fn regime(self) -> Option<Regime> {
        match self {
            Formula::GnLlt => None,
            Formula::LltI | Formula::ExplicitI | Formula::CombI => Some(Regime::CaseI),
            Formula::LltII | Formula::CombII => Some(Regime::CaseII),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Formula::GnLlt => "G_n_LLT",
            Formula::LltI => "LLT_I",
            Formula::ExplicitI => "Explicit_I",
            Formula::CombI => "Comb_I",
            Formula::LltII => "LLT_II",
            Formula::CombII => "Comb_II",
        }
    }
}

impl std::str::FromStr for Formula {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [Formula::GnLlt, Formula::LltI, Formula::ExplicitI, Formula::CombI, Formula::LltII, Formula::CombII]
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Contract(format!("unknown formula {s:?}")))
    }
}

/// One formula value, `sign · exp(log_value)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticEstimate {
    pub formula: Formula,
    pub n: u64,
    #[serde(rename = "N")]
    pub big_n: Option<u64>,
    pub log_value: f64,
    pub sign: i8,
    pub regime: Option<Regime>,
    pub lambda: Option<f64>,
    /// Certified bound on the truncation error of the logged constant.
    pub constant_tail: f64,
}

/// `exp(Σ_{j≥2} C(x^j) y^j / j)` with a certified tail.
///
/// For `j > J` the terms obey `C(x^j) ≤ c_m x^{jm}(1 + A x^j)` with
/// `A = (C(a) − c_m a^m)/(c_m a^{m+1})`, `a = x²`, which gives the geometric
/// majorant `c_m (1 + A x^{J+1}) q^{J+1} / ((J+1)(1 − q))`, `q = x^m y`.
pub fn g_ge2<W: Weights + ?Sized>(w: &W, x: f64, y: f64, tol: f64) -> Result<SeriesValue> {
    let (ln_g, tail, terms) = ln_g_ge2(w, x, y, tol)?;
    Ok(SeriesValue { value: ln_g.exp(), tail_bound: tail, terms_used: terms })
}

/// Logarithm of [`g_ge2`] with its tail bound and number of `j` terms.
pub fn ln_g_ge2<W: Weights + ?Sized>(w: &W, x: f64, y: f64, tol: f64) -> Result<(f64, f64, usize)> {
    if !(x > 0.0 && x < 1.0) || y < 0.0 {
        return Err(Error::Contract(format!("G≥2 needs 0 < x < 1 and y ≥ 0, got x = {x}, y = {y}")));
    }
    let m = w.m() as f64;
    let lnx = x.ln();
    let ln_r = w.ln_radius();
    let q = (m * lnx).exp() * y;
    if q >= 1.0 {
        return Err(domain(format!("x^m y = {q} ≥ 1: the j-sum diverges")));
    }
    if y == 0.0 {
        return Ok((0.0, 0.0, 0));
    }
    let c_m = w.c_m();
    let mut ev = Evaluator::new(w);
    let a_mo = ev.moments(2.0 * lnx - ln_r)?;
    let big_a = a_mo.c_gt / (c_m * (2.0 * (m + 1.0) * lnx).exp());
    let mut sum = 0.0;
    let mut j = 2usize;
    loop {
        let mo = ev.moments(j as f64 * lnx - ln_r)?;
        sum += mo.c * y.powi(j as i32) / j as f64;
        let jn = (j + 1) as f64;
        let tail = c_m * (1.0 + big_a * (jn * lnx).exp()) * (jn * q.ln()).exp() / (jn * (1.0 - q));
        if tail <= tol || j > 100_000 {
            if tail > tol {
                return Err(precision("G≥2 tail not certified"));
            }
            return Ok((sum, tail, j - 1));
        }
        j += 1;
    }
}

/// `exp(Σ_{j≥2} (C(ρ^j) − c_m ρ^{jm}) / (j ρ^{jm}))` with the tail bound
/// `c_m A ρ^{J+1} / ((J+1)(1 − ρ))`.
pub fn g_ge2_gtm<W: Weights + ?Sized>(w: &W, rho: f64, tol: f64) -> Result<SeriesValue> {
    let (ln_g, tail, terms) = ln_g_ge2_gtm(w, rho, tol)?;
    Ok(SeriesValue { value: ln_g.exp(), tail_bound: tail, terms_used: terms })
}

pub fn ln_g_ge2_gtm<W: Weights + ?Sized>(w: &W, rho: f64, tol: f64) -> Result<(f64, f64, usize)> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Contract(format!("G≥2_>m needs 0 < ρ < 1, got {rho}")));
    }
    let m = w.m() as f64;
    let lnr = rho.ln();
    let ln_base = w.ln_radius();
    let c_m = w.c_m();
    let mut ev = Evaluator::new(w);
    let a_mo = ev.moments(2.0 * lnr - ln_base)?;
    let big_a = a_mo.c_gt / (c_m * (2.0 * (m + 1.0) * lnr).exp());
    let mut sum = 0.0;
    let mut j = 2usize;
    loop {
        let lz = j as f64 * lnr;
        let mo = ev.moments(lz - ln_base)?;
        if mo.c_gt > 0.0 {
            sum += (mo.c_gt.ln() - m * lz).exp() / j as f64;
        }
        let jn = (j + 1) as f64;
        let tail = c_m * big_a * (jn * lnr).exp() / (jn * (1.0 - rho));
        if tail <= tol {
            return Ok((sum, tail, j - 1));
        }
        if j > 100_000 {
            return Err(precision("G≥2_>m tail not certified"));
        }
        j += 1;
    }
}

/// `ln N!` as an exact sum of logarithms.
pub fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Univariate count `g_n ∼ G^{≥2}(ρ,1) e^{C(z)} / √(2π z² C''(z)) · z^{−n}`.
pub fn g_n_formula(spec: &ExpansiveSpec, n: u64) -> Result<AsymptoticEstimate> {
    let mut ev = Evaluator::new(spec);
    let (_, mo) = solve_univariate_moments(&mut ev, n as f64, ROOT_TOL)?;
    let rho = spec.rho_f64();
    let (ln_g2, tail, _) = ln_g_ge2(spec, rho, 1.0, CONST_TOL)?;
    let lnz = rho.ln() + mo.lx;
    let log_value = ln_g2 + mo.c - 0.5 * (LN_2PI + mo.c2.ln()) - n as f64 * lnz;
    finish(Formula::GnLlt, n, None, log_value, None, None, tail)
}

fn finish(
    formula: Formula,
    n: u64,
    big_n: Option<u64>,
    log_value: f64,
    regime: Option<Regime>,
    lambda: Option<f64>,
    constant_tail: f64,
) -> Result<AsymptoticEstimate> {
    if !log_value.is_finite() {
        return Err(precision(format!("{} evaluated to a non-finite logarithm", formula.name())));
    }
    Ok(AsymptoticEstimate { formula, n, big_n, log_value, sign: 1, regime, lambda, constant_tail })
}

/// Case I estimates; the solution must be tagged `CaseI`.
pub fn gnn_case1(spec: &ExpansiveSpec, sol: &SaddleSolution, form: Formula) -> Result<AsymptoticEstimate> {
    if form.regime() != Some(Regime::CaseI) {
        return Err(Error::Contract(format!("{} is not a case I formula", form.name())));
    }
    require_regime(sol, Regime::CaseI, form)?;
    evaluate_unchecked(spec, sol, form)
}

/// Case II estimates; the solution must be tagged `CaseII`.
pub fn gnn_case2(spec: &ExpansiveSpec, sol: &SaddleSolution, form: Formula) -> Result<AsymptoticEstimate> {
    if form.regime() != Some(Regime::CaseII) {
        return Err(Error::Contract(format!("{} is not a case II formula", form.name())));
    }
    require_regime(sol, Regime::CaseII, form)?;
    evaluate_unchecked(spec, sol, form)
}

fn require_regime(sol: &SaddleSolution, want: Regime, form: Formula) -> Result<()> {
    if sol.regime != want {
        return Err(Error::Contract(format!(
            "{} needs regime {want}, solution at λ = {:.4} is {}",
            form.name(),
            sol.lambda,
            sol.regime
        )));
    }
    Ok(())
}

/// Evaluate any bivariate formula at a solution regardless of its regime tag.
///
/// Used for the phase-transition comparison, where a formula is deliberately
/// applied on the wrong side of `N*`.
pub fn evaluate_unchecked(spec: &ExpansiveSpec, sol: &SaddleSolution, form: Formula) -> Result<AsymptoticEstimate> {
    let n = sol.n as f64;
    let big_n = sol.big_n as f64;
    let rho = spec.rho_f64();
    let alpha = spec.alpha_f64();
    let m = spec.m as f64;
    let c_m = spec.c_m();
    let lnx = rho.ln() - sol.chi_n;
    let y = sol.y_n;
    let (log_value, tail) = match form {
        Formula::GnLlt => return Err(Error::Contract("G_n_LLT is univariate; use g_n_formula".into())),
        Formula::LltI | Formula::ExplicitI | Formula::CombI => {
            let (ln_g2, tail, _) = ln_g_ge2(spec, rho, y, CONST_TOL)?;
            let v = match form {
                Formula::LltI => {
                    ln_g2 + y * sol.c_x
                        - LN_2PI
                        - 0.5 * (big_n * y * sol.x2c2_x / (alpha + 1.0)).ln()
                        - n * lnx
                        - big_n * y.ln()
                }
                Formula::ExplicitI => {
                    let r = (m * rho.ln()).exp() * y;
                    if r >= 1.0 {
                        return Err(domain("ρ^m y ≥ 1: the explicit form is undefined"));
                    }
                    ln_g2 + 0.5 * alpha.ln() - LN_2PI - c_m * r / (1.0 - r) - n.ln() - n * lnx - big_n * y.ln()
                        + big_n
                }
                _ => ln_g2 - ln_factorial(sol.big_n) + ln_coeff_power(spec, sol)?,
            };
            (v, tail)
        }
        Formula::LltII | Formula::CombII => {
            let (ln_g2, tail, _) = ln_g_ge2_gtm(spec, rho, CONST_TOL)?;
            let rest = sol.n - spec.m as u64 * sol.big_n;
            let a_n = compute_a_n(spec, sol.n, sol.big_n)?;
            if a_n >= 1.0 {
                return Err(domain(format!("a_n = {a_n} ≥ 1: (1 − a_n)N is not positive")));
            }
            let prefactor = (c_m - 1.0) * ((1.0 - a_n) * big_n).ln() - ln_gamma(c_m);
            let v = if form == Formula::LltII {
                let c_gtm = sol.c_gt_x / (m * lnx).exp();
                ln_g2 + prefactor + c_gtm - 0.5 * (LN_2PI - m * rho.ln() + sol.x2c2_x.ln()) - rest as f64 * lnx
            } else {
                ln_g2 + prefactor + ln_coeff_exp_gtm(spec, sol.chi_n, rest)?
            };
            (v, tail)
        }
    };
    finish(form, sol.n, Some(sol.big_n), log_value, Some(sol.regime), Some(sol.lambda), tail)
}

/// `ln [x^n] C(x)^N` through the tilted law at `x_n`:
/// `[x^n] C^N = x^{−n} C(x)^N Pr[K_N = n]`, `K_N` a sum of `N` tilted draws.
pub fn ln_coeff_power(spec: &ExpansiveSpec, sol: &SaddleSolution) -> Result<f64> {
    let n = sol.n as usize;
    let lnx = spec.rho_f64().ln() - sol.chi_n;
    let ln_c = sol.c_x.ln();
    let pmf: Vec<f64> = (0..=n)
        .map(|k| spec.base(k).filter(|_| k > 0).map_or(0.0, |b| (b - k as f64 * sol.chi_n - ln_c).exp()))
        .collect();
    let p = series_pow(&F64Arith, &CoeffVector::new(pmf), sol.big_n, n).coeffs[n];
    if p <= 0.0 {
        return Err(precision("Pr[K_N = n] underflowed"));
    }
    Ok(-(n as f64) * lnx + sol.big_n as f64 * ln_c + p.ln())
}

/// `ln [x^k] exp(C_{>m}(x))` via the series exponential of `C_{>m}` rescaled by
/// `x = ρ e^{−χ}`.
pub fn ln_coeff_exp_gtm(spec: &ExpansiveSpec, chi: f64, k: u64) -> Result<f64> {
    let m = spec.m;
    let lnx = spec.rho_f64().ln() - chi;
    // [z^i] C_{>m}(x z) = c_{i+m} x^i = exp(base(i+m) − (i+m)χ − m ln x).
    let mut c = vec![0.0];
    c.extend((1..=k as usize).map(|i| {
        spec.base(i + m).map_or(0.0, |b| (b - (i + m) as f64 * chi - m as f64 * lnx).exp())
    }));
    let e = series_exp(&F64Arith, &CoeffVector::new(c), k as usize)?;
    let v = e.coeffs[k as usize];
    if !v.is_finite() || v <= 0.0 {
        return Err(precision("coefficient of exp(C_>m) outside the double range"));
    }
    Ok(v.ln() - k as f64 * lnx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::saddle::{solve_bivariate, solve_nstar, RawWeights};
    use crate::series::{build_c_scaled, mset_exp_transform_scaled, mset_univariate_scaled};
    use crate::SlowlyVarying;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn geo() -> ExpansiveSpec {
        ExpansiveSpec::geometric()
    }

    /// ln g_n from the exact Euler recurrence on the ρ-scaled weights.
    fn exact_ln_gn(spec: &ExpansiveSpec, n: usize) -> f64 {
        let rho = spec.rho_f64();
        let c = build_c_scaled(spec, rho, n);
        let g = mset_univariate_scaled(&F64Arith, &c, &rho, n).unwrap();
        g.coeffs[n].ln() - n as f64 * rho.ln()
    }

    #[test]
    fn g_ge2_examples() {
        let s = geo();
        assert_eq!(g_ge2(&s, 0.5, 0.0, 1e-15).unwrap().value, 1.0);
        // C(0.5^j) = w/(1−w), w = 2·0.5^j.
        let direct: f64 = (2..=60).map(|j| {
            let w = 2.0 * 0.5f64.powi(j);
            w / (1.0 - w) / j as f64
        }).sum();
        let v = g_ge2(&s, 0.5, 1.0, 1e-15).unwrap();
        assert_relative_eq!(v.value.ln(), direct, max_relative = 1e-12);
        let ys = [0.0, 0.5, 1.0, 1.5, 1.8];
        let vals: Vec<f64> = ys.iter().map(|&y| g_ge2(&s, 0.5, y, 1e-15).unwrap().value).collect();
        assert!(vals.windows(2).all(|w| w[1] > w[0]));
        assert!(matches!(g_ge2(&s, 0.5, 2.0, 1e-15), Err(Error::Domain(_))));
    }

    #[test]
    fn g_ge2_gtm_examples() {
        let raw = RawWeights::new(vec![0.0, 0.0, 3.0]).unwrap();
        assert_eq!(g_ge2_gtm(&raw, 0.5, 1e-15).unwrap().value, 1.0);
        // (C(z) − 2z)/z = 2w/(1−w)·... with w = 2z: C(z) − 2z = w²/(1−w).
        let direct: f64 = (2..=60).map(|j| {
            let z = 0.5f64.powi(j);
            let w = 2.0 * z;
            w * w / (1.0 - w) / z / j as f64
        }).sum();
        let v = g_ge2_gtm(&geo(), 0.5, 1e-15).unwrap();
        assert_relative_eq!(v.value.ln(), direct, max_relative = 1e-12);
        assert!(v.value >= 1.0);
    }

    #[test]
    fn univariate_formula_converges() {
        let s = geo();
        let err: Vec<f64> = [200u64, 400, 800]
            .iter()
            .map(|&n| (exact_ln_gn(&s, n as usize) - g_n_formula(&s, n).unwrap().log_value).exp() - 1.0)
            .map(f64::abs)
            .collect();
        assert!(err[0] < 0.2 && err[1] < err[0] && err[2] < err[1], "{err:?}");
        let l: Vec<f64> = [50u64, 100, 200].iter().map(|&n| g_n_formula(&s, n).unwrap().log_value).collect();
        assert!(l.windows(2).all(|w| w[1] > w[0]));
    }

    fn sol_at(spec: &ExpansiveSpec, n: u64, lambda: f64) -> SaddleSolution {
        let ns = solve_nstar(spec, n as f64, 1e-13).unwrap();
        solve_bivariate(spec, n, (lambda * ns.n_star).floor() as u64, 1e-12).unwrap()
    }

    #[test]
    fn case_one_forms_agree() {
        let s = geo();
        let sol = sol_at(&s, 3000, 0.5);
        let v: Vec<f64> = Formula::CASE_I.iter().map(|&f| gnn_case1(&s, &sol, f).unwrap().log_value).collect();
        for i in 0..3 {
            for j in 0..3 {
                assert!(((v[i] - v[j]).exp() - 1.0).abs() < 0.05, "{v:?}");
            }
        }
        assert!(matches!(gnn_case2(&s, &sol, Formula::LltII), Err(Error::Contract(_))));
        assert!(matches!(gnn_case1(&s, &sol, Formula::LltII), Err(Error::Contract(_))));
    }

    #[test]
    fn explicit_factor_vanishes_for_sparse_counts() {
        let s = geo();
        let mut prev = f64::INFINITY;
        for n in [1_000u64, 10_000, 100_000] {
            let ns = solve_nstar(&s, n as f64, 1e-13).unwrap();
            let sol = solve_bivariate(&s, n, ns.n_star.sqrt().floor() as u64, 1e-12).unwrap();
            let r = 0.5 * sol.y_n;
            let factor = 2.0 * r / (1.0 - r);
            assert!(factor < prev);
            prev = factor;
        }
        assert!(prev < 0.05);
    }

    #[test]
    fn case_two_forms_agree() {
        let s = geo();
        let sol = sol_at(&s, 3000, 2.0);
        let a = gnn_case2(&s, &sol, Formula::LltII).unwrap().log_value;
        let b = gnn_case2(&s, &sol, Formula::CombII).unwrap().log_value;
        assert!(((a - b).exp() - 1.0).abs() < 0.1, "{a} {b}");
    }

    #[test]
    fn bivariate_formulas_track_exact_table() {
        let s = geo();
        let n_max = 800;
        let rho = 0.5;
        let c = build_c_scaled(&s, rho, n_max);
        let t = mset_exp_transform_scaled(&F64Arith, &c, &rho, n_max, 200).unwrap();
        let exact = |n: u64, k: u64| t.get(n as usize, k as usize).ln() - n as f64 * rho.ln();
        let err = |n: u64, lambda: f64, f: Formula| {
            let sol = sol_at(&s, n, lambda);
            (exact(n, sol.big_n) - evaluate_unchecked(&s, &sol, f).unwrap().log_value).exp() - 1.0
        };
        let e1: Vec<f64> = [200, 400, 800].iter().map(|&n| err(n, 0.5, Formula::LltI).abs()).collect();
        assert!(e1[2] < e1[0] && e1.iter().all(|e| *e < 0.1), "{e1:?}");
        let e2: Vec<f64> = [200, 400, 800].iter().map(|&n| err(n, 2.0, Formula::LltII).abs()).collect();
        assert!(e2[1] < e2[0] && e2[2] < e2[1], "{e2:?}");
    }

    #[test]
    fn comb_one_matches_its_parts() {
        let s = geo();
        let sol = sol_at(&s, 400, 0.5);
        // For c_k = 2^k: [x^n] C^N = 2^n binom(n−1, N−1).
        let (n, k) = (sol.n, sol.big_n);
        let ln_binom = ln_factorial(n - 1) - ln_factorial(k - 1) - ln_factorial(n - k);
        assert_relative_eq!(ln_coeff_power(&s, &sol).unwrap(), n as f64 * 2f64.ln() + ln_binom, max_relative = 1e-10);
        let comb = gnn_case1(&s, &sol, Formula::CombI).unwrap().log_value;
        let (g2, _, _) = ln_g_ge2(&s, 0.5, sol.y_n, CONST_TOL).unwrap();
        assert_relative_eq!(comb, g2 - ln_factorial(k) + ln_coeff_power(&s, &sol).unwrap(), max_relative = 1e-14);
    }

    #[test]
    fn comb_two_reduces_when_c_m_is_one() {
        let s = ExpansiveSpec::new(1.0, 0.5, SlowlyVarying::Constant { c: "0.5".parse().unwrap() }, 1).unwrap();
        assert_relative_eq!(s.c_m(), 1.0);
        let sol = sol_at(&s, 2000, 2.0);
        let v = gnn_case2(&s, &sol, Formula::CombII).unwrap().log_value;
        let (g2, _, _) = ln_g_ge2_gtm(&s, 0.5, CONST_TOL).unwrap();
        let rest = sol.n - sol.big_n;
        assert_relative_eq!(v, g2 + ln_coeff_exp_gtm(&s, sol.chi_n, rest).unwrap(), max_relative = 1e-13);
    }

    #[test]
    fn gamma_contract() {
        let mut fact = 1.0f64;
        for k in 1..=30u32 {
            assert_relative_eq!(ln_gamma(k as f64).exp(), fact, max_relative = 1e-12);
            fact *= k as f64;
        }
        assert_relative_eq!(ln_gamma(0.5).exp(), std::f64::consts::PI.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(ln_gamma(1.5).exp(), std::f64::consts::PI.sqrt() / 2.0, max_relative = 1e-12);
        assert_relative_eq!(statrs::function::gamma::gamma(49.5), ln_gamma(49.5).exp(), max_relative = 1e-12);
    }

    #[test]
    fn small_cases_positive() {
        let s = ExpansiveSpec::new(2.0, 0.5, SlowlyVarying::one(), 1).unwrap();
        let c = build_c_scaled(&s, 0.5, 60);
        let g = mset_univariate_scaled(&F64Arith, &c, &0.5, 60).unwrap();
        for n in [10u64, 30, 60] {
            let est = g_n_formula(&s, n).unwrap();
            assert_eq!(est.sign, 1);
            assert!(est.log_value.exp() > 0.0 && g.coeffs[n as usize] > 0.0);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn g_ge2_increasing_in_y(alpha in 0.5f64..2.5, y1 in 0.0f64..0.8, dy in 0.01f64..0.2) {
            let s = ExpansiveSpec::new(alpha, 0.5, SlowlyVarying::log_power(1.0), 1).unwrap();
            let a = g_ge2(&s, 0.5, y1, 1e-15).unwrap().value;
            let b = g_ge2(&s, 0.5, y1 + dy, 1e-15).unwrap().value;
            prop_assert!(b > a);
        }
    }
}
