//! Bivariate Boltzmann sampler built from Poisson cycle counts, and a
//! Monte-Carlo estimator of `g_{n,N}` on top of it.
//!
//! Draws are grouped in blocks of [`BLOCK`]; block `b` of seed `s` reads from
//! ChaCha8 stream `b`, so a sample sequence does not depend on the number of
//! worker threads.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::asym::ln_g_ge2;
use crate::error::{domain, Error, Result};
use crate::model::ExpansiveSpec;
use crate::saddle::{solve_bivariate, solve_univariate_moments, Evaluator, SeriesValue, Weights, ROOT_TOL};

/// Default bound on the Poisson mass dropped beyond `j_max`.
pub const TAIL_EPS: f64 = 1e-12;
/// Mass left outside the inversion table of each component law.
pub const COMPONENT_TAIL: f64 = 1e-15;
/// Draws per RNG stream.
pub const BLOCK: u64 = 4096;
/// Means below this use sequential inversion.
pub const POISSON_INVERSION_MAX: f64 = 30.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoltzmannParams {
    pub x0: f64,
    pub y0: f64,
    /// Log-position of `x0` (see [`Weights`]).
    pub lx0: f64,
    pub j_max: usize,
    /// `lambda_j[j-1] = C(x0^j) y0^j / j`.
    pub lambda_j: Vec<f64>,
    pub tail_mass: f64,
    /// `Σ_j y0^j x0^j C'(x0^j)` and `Σ_j y0^j C(x0^j)` over `j ≤ j_max`.
    pub mean_size: f64,
    pub mean_count: f64,
}

impl BoltzmannParams {
    /// Poisson means at a point given by its log-position.
    pub fn new<W: Weights + ?Sized>(w: &W, lx0: f64, y0: f64, eps: f64) -> Result<Self> {
        let ln_r = w.ln_radius();
        let lnx = lx0 + ln_r;
        let x0 = lnx.exp();
        let m = w.m() as f64;
        if lx0 >= w.lx_sup() || x0 >= 1.0 {
            return Err(domain(format!("x0 = {x0} outside the convergence disc")));
        }
        if y0 < 0.0 {
            return Err(Error::Contract(format!("y0 must be nonnegative, got {y0}")));
        }
        let q = (m * lnx).exp() * y0;
        if q >= 1.0 {
            return Err(domain(format!("x0^m y0 = {q} ≥ 1")));
        }
        let mut ev = Evaluator::new(w);
        if y0 == 0.0 {
            return Ok(BoltzmannParams {
                x0, y0, lx0, j_max: 0, lambda_j: vec![], tail_mass: 0.0, mean_size: 0.0, mean_count: 0.0,
            });
        }
        let c_m = w.c_m();
        let a = ev.moments(2.0 * lnx - ln_r)?;
        let big_a = a.c_gt / (c_m * (2.0 * (m + 1.0) * lnx).exp());
        let (mut lambda_j, mut mean_size, mut mean_count) = (Vec::new(), 0.0, 0.0);
        let mut j = 1usize;
        loop {
            let mo = ev.moments(j as f64 * lnx - ln_r)?;
            let yj = y0.powi(j as i32);
            lambda_j.push(mo.c * yj / j as f64);
            mean_size += yj * mo.c1;
            mean_count += yj * mo.c;
            let jn = (j + 1) as f64;
            let tail = c_m * (1.0 + big_a * (jn * lnx).exp()) * (jn * q.ln()).exp() / (jn * (1.0 - q));
            if tail <= eps {
                return Ok(BoltzmannParams { x0, y0, lx0, j_max: j, lambda_j, tail_mass: tail, mean_size, mean_count });
            }
            if j > 1_000_000 {
                return Err(crate::error::precision("Poisson tail not certified"));
            }
            j += 1;
        }
    }
}

/// Tune at the saddle point: bivariate when `big_n` is given, else the
/// univariate point with `y0 = 1`.
pub fn tune(spec: &ExpansiveSpec, n: u64, big_n: Option<u64>) -> Result<BoltzmannParams> {
    match big_n {
        Some(k) => {
            let sol = solve_bivariate(spec, n, k, ROOT_TOL)?;
            BoltzmannParams::new(spec, -sol.chi_n, sol.y_n, TAIL_EPS)
        }
        None => {
            let mut ev = Evaluator::new(spec);
            let (_, mo) = solve_univariate_moments(&mut ev, n as f64, ROOT_TOL)?;
            BoltzmannParams::new(spec, mo.lx, 1.0, TAIL_EPS)
        }
    }
}

/// `G(x0, y0) = exp(Σ_{j≥1} C(x0^j) y0^j / j)`; `x0` is strictly inside the disc.
pub fn g_eval<W: Weights + ?Sized>(w: &W, x0: f64, y0: f64, tol: f64) -> Result<SeriesValue> {
    let (ln_g, tail) = ln_g_eval(w, x0, y0, tol)?;
    Ok(SeriesValue { value: ln_g.exp(), tail_bound: tail, terms_used: 0 })
}

/// Logarithm of [`g_eval`] and a bound on its error.
pub fn ln_g_eval<W: Weights + ?Sized>(w: &W, x0: f64, y0: f64, tol: f64) -> Result<(f64, f64)> {
    let lx = x0.ln() - w.ln_radius();
    if !(x0 > 0.0) || lx >= w.lx_sup() {
        return Err(domain(format!("G(x, y) needs x strictly inside the disc, got {x0}")));
    }
    if y0 == 0.0 {
        return Ok((0.0, 0.0));
    }
    let mo = Evaluator::new(w).moments(lx)?;
    let (rest, tail, _) = ln_g_ge2(w, x0, y0, tol)?;
    Ok((mo.c * y0 + rest, tail + mo.tails[0] * y0))
}

/// Tilted component law `Pr[k] ∝ c_k x^k`: inversion over a table, geometric
/// rejection for the far tail.
#[derive(Clone, Debug)]
pub struct TiltedLaw {
    m: usize,
    cdf: Vec<f64>,
    tail: Option<TailSampler>,
}

#[derive(Clone, Debug)]
struct TailSampler {
    k0: usize,
    ln_p_k0: f64,
    ln_r: f64,
    lx: f64,
    ln_c: f64,
}

impl TiltedLaw {
    pub fn new<W: Weights + ?Sized>(w: &W, lx: f64) -> Result<Self> {
        let mo = Evaluator::new(w).moments(lx)?;
        let ln_c = mo.c.ln();
        let m = w.m();
        let last = w.max_index();
        let q = lx.exp();
        let mut cdf = Vec::new();
        let mut acc = 0.0;
        let mut k = m;
        loop {
            let p = w.base(k).map_or(0.0, |b| (b + k as f64 * lx - ln_c).exp());
            acc += p;
            cdf.push(acc);
            if last == Some(k) {
                return Ok(TiltedLaw { m, cdf, tail: None });
            }
            let r = w.base_ratio_bound(k) * q;
            if r < 1.0 && p > 0.0 && p * r / (1.0 - r) <= COMPONENT_TAIL {
                let tail = TailSampler { k0: k, ln_p_k0: p.ln(), ln_r: r.ln(), lx, ln_c };
                return Ok(TiltedLaw { m, cdf, tail: Some(tail) });
            }
            if cdf.len() > 50_000_000 {
                return Err(crate::error::precision("component table exceeds 5e7 entries"));
            }
            k += 1;
        }
    }

    /// Largest tabulated size.
    pub fn cutoff(&self) -> usize {
        self.m + self.cdf.len() - 1
    }

    pub fn sample<W: Weights + ?Sized, R: Rng + ?Sized>(&self, w: &W, rng: &mut R) -> u64 {
        let u: f64 = rng.random();
        let top = *self.cdf.last().unwrap();
        if u < top || self.tail.is_none() {
            let i = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
            return (self.m + i) as u64;
        }
        let t = self.tail.as_ref().unwrap();
        loop {
            // k = k0 + 1 + G with Pr[G = g] = (1 − r) r^g; envelope p_k0 r^{k − k0}.
            let v: f64 = rng.random();
            let g = ((1.0 - v).ln() / t.ln_r).floor() as usize;
            let k = t.k0 + 1 + g;
            let ln_p = w.base(k).map_or(f64::NEG_INFINITY, |b| b + k as f64 * t.lx - t.ln_c);
            let ln_env = t.ln_p_k0 + (k - t.k0) as f64 * t.ln_r;
            let a: f64 = rng.random();
            if a.ln() < ln_p - ln_env {
                return k as u64;
            }
        }
    }
}

/// Poisson variate: sequential inversion below [`POISSON_INVERSION_MAX`],
/// Ahrens–Dieter rejection (via `rand_distr`) above.
pub fn poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    if lambda < POISSON_INVERSION_MAX {
        let u: f64 = rng.random();
        let mut p = (-lambda).exp();
        let mut cdf = p;
        let mut k = 0u64;
        while u >= cdf {
            k += 1;
            p *= lambda / k as f64;
            cdf += p;
            if p == 0.0 && cdf < u {
                // Rounding left u above the summed mass; it is within 1e−15 of 1.
                break;
            }
        }
        k
    } else {
        Poisson::new(lambda).expect("finite positive mean").sample(rng) as u64
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub size: u64,
    pub count: u64,
    /// `j → (P_j, component sizes)` for the nonzero `P_j`.
    pub per_j: BTreeMap<usize, (u64, Vec<u64>)>,
}

/// Seed plus generator name; block `b` uses stream `b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub algorithm: &'static str,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        RngState { seed, algorithm: "chacha8" }
    }

    pub fn block_rng(&self, block: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(block);
        rng
    }
}

/// Tuned sampler for `Λ(x0, y0)`.
pub struct Sampler<'a, W: Weights + ?Sized> {
    w: &'a W,
    params: BoltzmannParams,
    laws: Vec<TiltedLaw>,
}

impl<'a, W: Weights + ?Sized> Sampler<'a, W> {
    pub fn new(w: &'a W, params: BoltzmannParams) -> Result<Self> {
        let ln_r = w.ln_radius();
        let lnx = params.lx0 + ln_r;
        let laws = (1..=params.j_max)
            .map(|j| TiltedLaw::new(w, j as f64 * lnx - ln_r))
            .collect::<Result<Vec<_>>>()?;
        Ok(Sampler { w, params, laws })
    }

    pub fn params(&self) -> &BoltzmannParams {
        &self.params
    }

    /// One draw from the tilted law `ΓC(x0^j)`.
    pub fn sample_component<R: Rng + ?Sized>(&self, j: usize, rng: &mut R) -> u64 {
        self.laws[j - 1].sample(self.w, rng)
    }

    /// `(size, count)` only.
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (u64, u64) {
        let (mut size, mut count) = (0u64, 0u64);
        for (i, &lam) in self.params.lambda_j.iter().enumerate() {
            let j = (i + 1) as u64;
            let p = poisson(lam, rng);
            count += j * p;
            for _ in 0..p {
                size += j * self.laws[i].sample(self.w, rng);
            }
        }
        debug_assert!(size >= self.w.m() as u64 * count);
        (size, count)
    }

    pub fn sample_lambda<R: Rng + ?Sized>(&self, rng: &mut R) -> SampleOutcome {
        let mut out = SampleOutcome::default();
        for (i, &lam) in self.params.lambda_j.iter().enumerate() {
            let j = i + 1;
            let p = poisson(lam, rng);
            if p == 0 {
                continue;
            }
            let comps: Vec<u64> = (0..p).map(|_| self.laws[i].sample(self.w, rng)).collect();
            out.count += j as u64 * p;
            out.size += j as u64 * comps.iter().sum::<u64>();
            out.per_j.insert(j, (p, comps));
        }
        assert!(out.size >= self.w.m() as u64 * out.count, "size below m·count");
        out
    }

    /// Draws `start..start+len` of the stream for `state`, in order.
    pub fn sample_range(&self, state: &RngState, start: u64, len: u64) -> Vec<(u64, u64)> {
        let end = start + len;
        let blocks: Vec<u64> = (start / BLOCK..end.div_ceil(BLOCK)).collect();
        blocks
            .par_iter()
            .map(|&b| {
                let mut rng = state.block_rng(b);
                let lo = b * BLOCK;
                (lo..(lo + BLOCK).min(end))
                    .map(|i| {
                        let d = self.sample_pair(&mut rng);
                        (i, d)
                    })
                    .filter(|(i, _)| *i >= start)
                    .map(|(_, d)| d)
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>()
            .concat()
    }

    /// Number of draws with `(size, count) = (n, N)` among the first `trials`.
    pub fn count_hits(&self, state: &RngState, trials: u64, n: u64, big_n: u64) -> u64 {
        (0..trials.div_ceil(BLOCK))
            .into_par_iter()
            .map(|b| {
                let mut rng = state.block_rng(b);
                let len = BLOCK.min(trials - b * BLOCK);
                (0..len).filter(|_| self.sample_pair(&mut rng) == (n, big_n)).count() as u64
            })
            .sum()
    }

    /// Histogram of `(size, count)` over `n, N ≤ bound`; the last slot counts
    /// everything outside.
    pub fn histogram(&self, state: &RngState, trials: u64, n_max: usize, big_n_max: usize) -> Vec<u64> {
        let w = big_n_max + 1;
        let cells = (n_max + 1) * w;
        (0..trials.div_ceil(BLOCK))
            .into_par_iter()
            .map(|b| {
                let mut rng = state.block_rng(b);
                let mut h = vec![0u64; cells + 1];
                for _ in 0..BLOCK.min(trials - b * BLOCK) {
                    let (s, c) = self.sample_pair(&mut rng);
                    let idx = if s as usize <= n_max && c as usize <= big_n_max { s as usize * w + c as usize } else { cells };
                    h[idx] += 1;
                }
                h
            })
            .reduce(|| vec![0u64; cells + 1], |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            })
    }
}

/// Monte-Carlo estimate of `ln g_{n,N}` with its delta-method standard error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub n: u64,
    #[serde(rename = "N")]
    pub big_n: u64,
    pub log_estimate: f64,
    pub se: f64,
    pub hits: u64,
    pub trials: u64,
    pub seed: u64,
}

/// `g_{n,N} = x0^{−n} y0^{−N} G(x0, y0) Pr[size = n, count = N]` at the
/// saddle point of `(n, N)`.
pub fn estimate_gnn(spec: &ExpansiveSpec, n: u64, big_n: u64, trials: u64, state: &RngState) -> Result<Estimate> {
    let params = tune(spec, n, Some(big_n))?;
    estimate_with(spec, params, n, big_n, trials, state)
}

pub fn estimate_with<W: Weights + ?Sized>(
    w: &W,
    params: BoltzmannParams,
    n: u64,
    big_n: u64,
    trials: u64,
    state: &RngState,
) -> Result<Estimate> {
    if trials == 0 {
        return Err(Error::Contract("trials must be positive".into()));
    }
    let (ln_g, _) = ln_g_eval(w, params.x0, params.y0, 1e-15)?;
    let lnx = params.lx0 + w.ln_radius();
    let sampler = Sampler::new(w, params.clone())?;
    let hits = sampler.count_hits(state, trials, n, big_n);
    let p = hits as f64 / trials as f64;
    let (log_estimate, se) = if hits == 0 {
        (f64::NEG_INFINITY, f64::INFINITY)
    } else {
        let log_p = p.ln();
        (-(n as f64) * lnx - big_n as f64 * params.y0.ln() + ln_g + log_p, ((1.0 - p) / (trials as f64 * p)).sqrt())
    };
    Ok(Estimate { n, big_n, log_estimate, se, hits, trials, seed: state.seed })
}

/// Pearson chi-square statistic with cells of expected count below
/// `min_expected` pooled into one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub cells: usize,
}

pub fn chi_square(observed: &[u64], probs: &[f64], min_expected: f64) -> Result<ChiSquare> {
    if observed.len() != probs.len() {
        return Err(Error::Contract("observed and expected lengths differ".into()));
    }
    let total: u64 = observed.iter().sum();
    let t = total as f64;
    let (mut stat, mut cells) = (0.0, 0usize);
    let (mut pool_o, mut pool_e) = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probs) {
        let e = p * t;
        if e < min_expected {
            pool_o += o as f64;
            pool_e += e;
        } else {
            stat += (o as f64 - e).powi(2) / e;
            cells += 1;
        }
    }
    if pool_e > 0.0 {
        stat += (pool_o - pool_e).powi(2) / pool_e;
        cells += 1;
    } else if pool_o > 0.0 {
        return Err(domain("observations in cells of zero probability"));
    }
    if cells < 2 {
        return Err(Error::Contract("chi-square needs at least two cells".into()));
    }
    let dof = cells - 1;
    let p_value = ChiSquared::new(dof as f64).map_err(|e| Error::Contract(e.to_string()))?.sf(stat);
    Ok(ChiSquare { statistic: stat, dof, p_value, cells })
}
