//! Local limit check for sums of tilted components by exact coefficient
//! extraction from powers of `H(z) = C(x_n z)/C(x_n)`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::F64Arith;
use crate::error::{precision, Error, Result};
use crate::model::ExpansiveSpec;
use crate::saddle::{solve_bivariate, Evaluator, Weights, ROOT_TOL};
use crate::series::{pow_windowed, series_pow, CoeffVector, Window};

/// Above this table length the power is taken on trimmed windows via FFT.
pub const DIRECT_LIMIT: usize = 20_000;
/// Relative trimming threshold for the windowed power.
pub const WINDOW_REL: f64 = 1e-14;

/// Moments of `L_p = K_p − mp`, `K_p` a sum of `p` draws of the law tilted at `x_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TiltedMoments {
    pub p: u64,
    pub x_n: f64,
    pub nu: f64,
    pub mu_p: f64,
    pub sigma_p: f64,
    pub chi_n: f64,
    pub alpha: f64,
}

impl TiltedMoments {
    pub fn new(spec: &ExpansiveSpec, chi_n: f64, p: u64) -> Result<Self> {
        if p == 0 {
            return Err(Error::Contract("p must be at least 1".into()));
        }
        let mo = Evaluator::new(spec).moments(-chi_n)?;
        let nu = mo.c1 / mo.c;
        let var1 = (mo.c2 + mo.c1) / mo.c - nu * nu;
        let pf = p as f64;
        Ok(TiltedMoments {
            p,
            x_n: mo.x,
            nu,
            mu_p: pf * (nu - spec.m as f64),
            sigma_p: (pf * var1).sqrt(),
            chi_n,
            alpha: spec.alpha_f64(),
        })
    }
}

/// Tilted component pmf `c_k x^k / C(x)` for `k ≤ n_max`.
fn tilted_pmf(spec: &ExpansiveSpec, chi_n: f64, n_max: usize) -> Result<Vec<f64>> {
    let ln_c = Evaluator::new(spec).moments(-chi_n)?.c.ln();
    Ok((0..=n_max)
        .map(|k| if k == 0 { 0.0 } else { spec.base(k).map_or(0.0, |b| (b - k as f64 * chi_n - ln_c).exp()) })
        .collect())
}

/// Full pmf of `K_p` on `0..=n_max`.
fn kp_pmf(spec: &ExpansiveSpec, chi_n: f64, p: u64, n_max: usize) -> Result<Window> {
    let h = tilted_pmf(spec, chi_n, n_max)?;
    if n_max <= DIRECT_LIMIT {
        let c = series_pow(&F64Arith, &CoeffVector::new(h), p, n_max);
        return Ok(Window { offset: 0, probs: c.coeffs });
    }
    Ok(pow_windowed(&Window { offset: 0, probs: h }, p, WINDOW_REL, n_max))
}

/// `Pr[L_p = s]` for each requested `s`, read off `[z^{s+mp}] H(z)^p`.
pub fn exact_lp_pmf(
    spec: &ExpansiveSpec,
    chi_n: f64,
    p: u64,
    s_values: &[u64],
    n_max: usize,
) -> Result<BTreeMap<u64, f64>> {
    if p == 0 {
        return Err(Error::Contract("p must be at least 1".into()));
    }
    let shift = spec.m as u64 * p;
    let need = s_values.iter().max().map_or(shift, |s| s + shift) as usize;
    if n_max < need {
        return Err(precision(format!("truncation n_max = {n_max} too small; need at least {need}")));
    }
    let w = kp_pmf(spec, chi_n, p, n_max)?;
    Ok(s_values.iter().map(|&s| (s, w.at((s + shift) as usize))).collect())
}

/// `e^{−t²/2} / (√(2π) σ_p)`.
pub fn llt_prediction(m: &TiltedMoments, t: f64) -> f64 {
    (-t * t / 2.0).exp() / ((2.0 * PI).sqrt() * m.sigma_p)
}

/// The same prediction with `σ_p` replaced by its leading order `√(pα)/χ_n`.
pub fn llt_prediction_chi(m: &TiltedMoments, t: f64) -> f64 {
    (-t * t / 2.0).exp() / (2.0 * PI).sqrt() * m.chi_n / (m.p as f64 * m.alpha).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LltRow {
    pub p: u64,
    pub t: f64,
    /// Lattice point minus `μ_p + tσ_p`.
    pub lattice_offset: f64,
    pub exact: f64,
    pub predicted: f64,
    pub predicted_chi: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LltReport {
    pub n: u64,
    #[serde(rename = "N")]
    pub big_n: u64,
    pub chi_n: f64,
    pub rows: Vec<LltRow>,
}

impl LltReport {
    pub fn row(&self, p: u64, t: f64) -> Option<&LltRow> {
        self.rows.iter().find(|r| r.p == p && r.t == t)
    }

    /// `Pr[L_p = μ_p + σ_p] / Pr[L_p = μ_p]` when both rows are present.
    pub fn step_ratio(&self, p: u64) -> Option<f64> {
        Some(self.row(p, 1.0)?.exact / self.row(p, 0.0)?.exact)
    }
}

/// Compare exact `Pr[L_p = s]` with the Gaussian prediction on a `(p, t)` grid,
/// tilting at the saddle point of `(n, N)`.
pub fn llt_check(spec: &ExpansiveSpec, n: u64, big_n: u64, p_grid: &[u64], t_grid: &[f64]) -> Result<LltReport> {
    if p_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Contract("p_grid must be increasing".into()));
    }
    if let Some(t) = t_grid.iter().find(|t| t.abs() > 2.0) {
        return Err(Error::Contract(format!("t = {t} outside [−2, 2]")));
    }
    let sol = solve_bivariate(spec, n, big_n, ROOT_TOL)?;
    let chi = sol.chi_n;
    let per_p = p_grid
        .par_iter()
        .map(|&p| -> Result<Vec<LltRow>> {
            let mom = TiltedMoments::new(spec, chi, p)?;
            let pts: Vec<(f64, u64)> = t_grid
                .iter()
                .map(|&t| (t, (mom.mu_p + t * mom.sigma_p).round().max(0.0) as u64))
                .collect();
            let s_values: Vec<u64> = pts.iter().map(|&(_, s)| s).collect();
            let top = s_values.iter().max().copied().unwrap_or(0) + spec.m as u64 * p;
            let pmf = exact_lp_pmf(spec, chi, p, &s_values, top as usize)?;
            Ok(pts
                .into_iter()
                .map(|(t, s)| {
                    let offset = s as f64 - (mom.mu_p + t * mom.sigma_p);
                    let t_lat = (s as f64 - mom.mu_p) / mom.sigma_p;
                    let exact = pmf[&s];
                    let predicted = llt_prediction(&mom, t_lat);
                    LltRow {
                        p,
                        t,
                        lattice_offset: offset,
                        exact,
                        predicted,
                        predicted_chi: llt_prediction_chi(&mom, t_lat),
                        ratio: exact / predicted,
                    }
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LltReport { n, big_n, chi_n: chi, rows: per_p.into_iter().flatten().collect() })
}

/// `Pr[K_N = n]` at the saddle point of `(n, N)` against `√(α/2π)·√N/n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentSumCheck {
    pub exact: f64,
    pub predicted: f64,
    pub ratio: f64,
}

pub fn component_sum_check(spec: &ExpansiveSpec, n: u64, big_n: u64) -> Result<ComponentSumCheck> {
    let sol = solve_bivariate(spec, n, big_n, ROOT_TOL)?;
    let shift = spec.m as u64 * big_n;
    if n < shift {
        return Err(crate::error::domain("n below m·N"));
    }
    let exact = exact_lp_pmf(spec, sol.chi_n, big_n, &[n - shift], n as usize)?[&(n - shift)];
    let alpha = spec.alpha_f64();
    let predicted = (alpha / (2.0 * PI)).sqrt() * (big_n as f64).sqrt() / n as f64;
    Ok(ComponentSumCheck { exact, predicted, ratio: exact / predicted })
}
