//! One function per subcommand; each returns the files it produced.

use expansive_core::arith::{Arith, BigFloatArith, ExactArith, F64Arith, Mode};
use expansive_core::asym::{evaluate_unchecked, g_n_formula, AsymptoticEstimate, Formula};
use expansive_core::boltz::{estimate_gnn, tune, BoltzmannParams, RngState, Sampler};
use expansive_core::llt::llt_check;
use expansive_core::model::{karamata_check, slow_variation_grid, subpoly_check};
use expansive_core::saddle::{
    compute_a_n, solve_bivariate, solve_nstar, RawWeights, Regime, SaddleSolution, Weights, ROOT_TOL,
};
use expansive_core::series::{
    build_c, ln_gn_exact, mset_exp_transform, mset_product_transform, BivariateTable, CoeffVector, LogTable,
};
use expansive_core::ExpansiveSpec;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::Artifact;

/// Default largest `n` for which exact tables are built.
pub const EXACT_GUARD: u64 = 2000;
pub const DEFAULT_SEED: u64 = 0;

const NEAR_ONE: &str = "window band (0.95 < λ < 1.05): no formula applies";

pub fn mode_of(cfg: &RunConfig) -> Mode {
    match (cfg.exact, cfg.precision) {
        (Some(true), _) => Mode::Exact,
        (_, Some(bits)) => Mode::BigFloat { bits },
        _ => Mode::F64,
    }
}

pub fn run(command: &str, cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    if command != "transform" && mode_of(cfg) != Mode::F64 {
        return Err(CliError::Config(format!("--exact/--precision apply to transform only, not {command}")));
    }
    match command {
        "transform" => transform(cfg),
        "saddle" => saddle(cfg),
        "nstar" => nstar(cfg),
        "asym" => asym(cfg),
        "compare" => compare(cfg),
        "sample" => sample(cfg),
        "estimate" => estimate(cfg),
        "llt" => llt(cfg),
        "phase-sweep" => phase_sweep(cfg),
        "check-sv" => check_sv(cfg),
        other => Err(CliError::Config(format!("unknown command {other:?}"))),
    }
}

fn tol(cfg: &RunConfig) -> f64 {
    cfg.tol.unwrap_or(ROOT_TOL)
}

/// `N` from an explicit value or `⌊λ N*⌋`, with `λ = N/N*`.
fn resolve_big_n(spec: &ExpansiveSpec, n: u64, big_n: Option<u64>, lambda: Option<f64>) -> Result<(u64, f64), CliError> {
    let n_star = solve_nstar(spec, n as f64, 1e-13)?.n_star;
    match (big_n, lambda) {
        (Some(k), _) => Ok((k, k as f64 / n_star)),
        (None, Some(l)) => Ok(((l * n_star).floor() as u64, l)),
        (None, None) => Err(CliError::Config("missing key \"N\" or \"lambda\"".into())),
    }
}

// ---- transform -------------------------------------------------------------

#[derive(Serialize)]
struct Cell {
    n: usize,
    #[serde(rename = "N")]
    big_n: usize,
    g: String,
}

#[derive(Serialize)]
struct Equality {
    arithmetic: String,
    n_max: usize,
    #[serde(rename = "N_max")]
    big_n_max: usize,
    cells: usize,
    identical: bool,
    max_rel_diff: f64,
}

fn transform(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    match mode_of(cfg) {
        Mode::F64 => transform_in(&F64Arith, cfg),
        Mode::Exact => transform_in(&ExactArith, cfg),
        Mode::BigFloat { bits } => transform_in(&BigFloatArith::new(bits)?, cfg),
    }
}

fn weights_in<A: Arith>(a: &A, cfg: &RunConfig, n_max: usize) -> Result<CoeffVector<A::T>, CliError> {
    match (&cfg.spec, &cfg.weights) {
        (Some(s), None) => Ok(build_c(a, s, n_max)?),
        (None, Some(w)) => {
            let mut v: Vec<A::T> = w.iter().map(|r| a.from_ratio(r.ratio())).collect();
            if v.is_empty() {
                v.push(a.zero());
            }
            Ok(CoeffVector::new(v).resized(a, n_max))
        }
        _ => Err(CliError::Config("transform needs a spec or weights".into())),
    }
}

fn cells<A: Arith>(a: &A, t: &BivariateTable<A::T>) -> Vec<Cell> {
    t.cells().filter(|(_, _, v)| !a.is_zero(v)).map(|(n, k, v)| Cell { n, big_n: k, g: a.render(v) }).collect()
}

fn transform_in<A: Arith>(a: &A, cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let n_max = match (cfg.n_max, &cfg.weights) {
        (Some(n), _) => n,
        (None, Some(w)) => w.len().saturating_sub(1),
        (None, None) => return Err(CliError::Config("missing key \"n_max\"".into())),
    };
    let big_n_max = cfg.big_n_max.unwrap_or(n_max);
    let c = weights_in(a, cfg, n_max)?;
    let e = mset_exp_transform(a, &c, n_max, big_n_max)?;
    let p = mset_product_transform(a, &c, n_max, big_n_max)?;
    let mut identical = true;
    let mut max_rel = 0.0f64;
    for ((_, _, x), (_, _, y)) in e.cells().zip(p.cells()) {
        identical &= a.render(x) == a.render(y);
        let (fx, fy) = (a.to_f64(x), a.to_f64(y));
        if fx != fy {
            max_rel = max_rel.max((fx - fy).abs() / fx.abs().max(fy.abs()));
        }
    }
    let f = cfg.format();
    let eq = Equality {
        arithmetic: a.mode().to_string(),
        n_max,
        big_n_max,
        cells: (n_max + 1) * (big_n_max + 1),
        identical,
        max_rel_diff: max_rel,
    };
    Ok(vec![
        Artifact::records("exp_table", f, &cells(a, &e))?,
        Artifact::records("product_table", f, &cells(a, &p))?,
        Artifact::records("equality", f, &[eq])?,
    ])
}

// ---- saddle / nstar --------------------------------------------------------

fn lambdas(cfg: &RunConfig) -> Vec<Option<f64>> {
    match (&cfg.lambda_grid, cfg.lambda) {
        (Some(g), _) if !g.is_empty() => g.iter().map(|&l| Some(l)).collect(),
        (_, l) => vec![l],
    }
}

fn saddle(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let spec = cfg.spec()?;
    let mut rows: Vec<SaddleSolution> = Vec::new();
    for n in cfg.ns()? {
        for l in lambdas(cfg) {
            let (k, _) = resolve_big_n(spec, n, cfg.big_n, l)?;
            rows.push(solve_bivariate(spec, n, k, tol(cfg))?);
        }
    }
    Ok(vec![Artifact::records("saddle", cfg.format(), &rows)?])
}

fn nstar(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let spec = cfg.spec()?;
    let rows = cfg.ns()?.into_iter().map(|n| solve_nstar(spec, n as f64, 1e-13)).collect::<Result<Vec<_>, _>>()?;
    Ok(vec![Artifact::records("nstar", cfg.format(), &rows)?])
}

// ---- asym / compare --------------------------------------------------------

fn window_refusal(sol: &SaddleSolution, cfg: &RunConfig) -> Result<(), CliError> {
    if sol.regime == Regime::Window && cfg.allow_window != Some(true) {
        return Err(CliError::Config(format!(
            "λ = {:.4} lies in the {NEAR_ONE}; pass --allow-window to print saddle data only",
            sol.lambda
        )));
    }
    Ok(())
}

fn asym(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let spec = cfg.spec()?;
    let f = cfg.format();
    if cfg.big_n.is_none() && cfg.lambda.is_none() && cfg.lambda_grid.is_none() {
        let rows = cfg.ns()?.into_iter().map(|n| g_n_formula(spec, n)).collect::<Result<Vec<_>, _>>()?;
        return Ok(vec![Artifact::records("asym", f, &rows)?]);
    }
    let mut rows: Vec<AsymptoticEstimate> = Vec::new();
    let mut window: Vec<SaddleSolution> = Vec::new();
    for n in cfg.ns()? {
        for l in lambdas(cfg) {
            let (k, _) = resolve_big_n(spec, n, cfg.big_n, l)?;
            let sol = solve_bivariate(spec, n, k, tol(cfg))?;
            window_refusal(&sol, cfg)?;
            let forms: &[Formula] = match sol.regime {
                Regime::CaseI => &Formula::CASE_I,
                Regime::CaseII => &Formula::CASE_II,
                Regime::Window => {
                    window.push(sol);
                    continue;
                }
            };
            for &form in forms {
                rows.push(evaluate_unchecked(spec, &sol, form)?);
            }
        }
    }
    let mut out = vec![Artifact::records("asym", f, &rows)?];
    if !window.is_empty() {
        out.push(Artifact::records("window_saddle", f, &window)?);
    }
    Ok(out)
}

#[derive(Serialize)]
struct CompareRow {
    n: u64,
    #[serde(rename = "N")]
    big_n: Option<u64>,
    lambda: Option<f64>,
    regime: String,
    formula: String,
    exact_log: f64,
    formula_log: Option<f64>,
    ratio: Option<f64>,
    regime_match: bool,
    note: String,
}

fn compare(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let spec = cfg.spec()?;
    let ns = cfg.ns()?;
    let guard = cfg.exact_guard.unwrap_or(EXACT_GUARD);
    let n_top = *ns.iter().max().unwrap();
    if n_top > guard {
        return Err(expansive_core::Error::Size { cells: n_top as u128, limit: guard as u128 }.into());
    }
    let mut rows = Vec::new();
    if cfg.big_n.is_none() && cfg.lambda.is_none() && cfg.lambda_grid.is_none() {
        let exact = ln_gn_exact(spec, n_top as usize)?;
        for n in ns {
            let est = g_n_formula(spec, n)?;
            let ex = exact[n as usize];
            rows.push(CompareRow {
                n,
                big_n: None,
                lambda: None,
                regime: "univariate".into(),
                formula: Formula::GnLlt.name().into(),
                exact_log: ex,
                formula_log: Some(est.log_value),
                ratio: Some((ex - est.log_value).exp()),
                regime_match: true,
                note: String::new(),
            });
        }
        return Ok(vec![Artifact::records("compare", cfg.format(), &rows)?]);
    }
    let mut points = Vec::new();
    for &n in &ns {
        for l in lambdas(cfg) {
            let (k, lam) = resolve_big_n(spec, n, cfg.big_n, l)?;
            points.push((n, k, lam));
        }
    }
    let k_top = points.iter().map(|p| p.1).max().unwrap_or(0) as usize;
    let table = LogTable::new(spec, n_top as usize, k_top)?;
    for (n, k, lam) in points {
        let sol = solve_bivariate(spec, n, k, tol(cfg))?;
        window_refusal(&sol, cfg)?;
        let ex = table.ln_get(n as usize, k as usize);
        for form in Formula::CASE_I.into_iter().chain(Formula::CASE_II) {
            let matched = form.regime() == Some(sol.regime);
            let (fl, note) = if sol.regime == Regime::Window {
                (None, NEAR_ONE.to_string())
            } else {
                match evaluate_unchecked(spec, &sol, form) {
                    Ok(e) => (Some(e.log_value), if matched { String::new() } else { "regime mismatch".into() }),
                    Err(e) => (None, format!("regime mismatch: {e}")),
                }
            };
            rows.push(CompareRow {
                n,
                big_n: Some(k),
                lambda: Some(lam),
                regime: sol.regime.to_string(),
                formula: form.name().into(),
                exact_log: ex,
                formula_log: fl,
                ratio: fl.map(|v| (ex - v).exp()),
                regime_match: matched,
                note,
            });
        }
    }
    Ok(vec![Artifact::records("compare", cfg.format(), &rows)?])
}

// ---- sampling --------------------------------------------------------------

#[derive(Serialize)]
struct Draw {
    seed: u64,
    index: u64,
    size: u64,
    count: u64,
}

fn sample(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    let draws = cfg.draws.unwrap_or(1000);
    let state = RngState::new(seed);
    let pairs = match (&cfg.spec, &cfg.weights) {
        (Some(spec), None) => {
            let params = match (cfg.x0, cfg.y0) {
                (Some(x0), Some(y0)) => BoltzmannParams::new(spec, x0.ln() - spec.ln_radius(), y0, 1e-12)?,
                (None, None) => {
                    let n = RunConfig::need(cfg.n, "n")?;
                    let k = match (cfg.big_n, cfg.lambda) {
                        (None, None) => None,
                        (b, l) => Some(resolve_big_n(spec, n, b, l)?.0),
                    };
                    tune(spec, n, k)?
                }
                _ => return Err(CliError::Config("give both x0 and y0".into())),
            };
            Sampler::new(spec, params)?.sample_range(&state, 0, draws)
        }
        (None, Some(w)) => {
            let raw = RawWeights::new(w.iter().map(|r| r.to_f64()).collect())?;
            let x0 = RunConfig::need(cfg.x0, "x0")?;
            let y0 = RunConfig::need(cfg.y0, "y0")?;
            let params = BoltzmannParams::new(&raw, x0.ln(), y0, 1e-12)?;
            Sampler::new(&raw, params)?.sample_range(&state, 0, draws)
        }
        _ => return Err(CliError::Config("sample needs a spec or weights".into())),
    };
    let rows: Vec<Draw> =
        pairs.into_iter().enumerate().map(|(i, (size, count))| Draw { seed, index: i as u64, size, count }).collect();
    Ok(vec![Artifact::records("samples", cfg.format(), &rows)?])
}

fn estimate(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let spec = cfg.spec()?;
    let n = RunConfig::need(cfg.n, "n")?;
    let (k, _) = resolve_big_n(spec, n, cfg.big_n, cfg.lambda)?;
    let trials = cfg.trials.unwrap_or(100_000);
    let e = estimate_gnn(spec, n, k, trials, &RngState::new(cfg.seed.unwrap_or(DEFAULT_SEED)))?;
    Ok(vec![Artifact::records("estimate", cfg.format(), &[e])?])
}

// ---- llt -------------------------------------------------------------------

#[derive(Serialize)]
struct LltOut {
    p: u64,
    t: f64,
    lattice_offset: f64,
    exact: f64,
    predicted: f64,
    ratio: f64,
}

fn llt(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let spec = cfg.spec()?;
    let n = RunConfig::need(cfg.n, "n")?;
    let (k, _) = resolve_big_n(spec, n, cfg.big_n, cfg.lambda)?;
    let p_grid = cfg.p_grid.clone().unwrap_or_else(|| vec![200, 800, 3200]);
    let t_grid = cfg.t_grid.clone().unwrap_or_else(|| vec![0.0, 1.0, 2.0]);
    let rep = llt_check(spec, n, k, &p_grid, &t_grid)?;
    let rows: Vec<LltOut> = rep
        .rows
        .into_iter()
        .map(|r| LltOut { p: r.p, t: r.t, lattice_offset: r.lattice_offset, exact: r.exact, predicted: r.predicted, ratio: r.ratio })
        .collect();
    Ok(vec![Artifact::records("llt", cfg.format(), &rows)?])
}

// ---- phase sweep -----------------------------------------------------------

#[derive(Serialize)]
struct SweepRow {
    n: u64,
    lambda: f64,
    #[serde(rename = "N")]
    big_n: u64,
    regime: String,
    x_n: f64,
    y_n: f64,
    y_rho_m: f64,
    chi_n: f64,
    s_n: f64,
    s_over_n: f64,
    a_n: Option<f64>,
    s_vs_prediction: Option<f64>,
    llt_i_log: Option<f64>,
    llt_ii_log: Option<f64>,
    exact_log: Option<f64>,
    ratio_i: Option<f64>,
    ratio_ii: Option<f64>,
    note: String,
}

fn phase_sweep(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let spec = cfg.spec()?;
    let n = RunConfig::need(cfg.n, "n")?;
    let grid = cfg.lambda_grid.clone().ok_or_else(|| CliError::Config("missing key \"lambda_grid\"".into()))?;
    let allow = cfg.allow_window == Some(true);
    let guard = cfg.exact_guard.unwrap_or(EXACT_GUARD);
    let n_star = solve_nstar(spec, n as f64, 1e-13)?.n_star;
    let mut kept = Vec::new();
    for &l in &grid {
        if Regime::classify(l) == Regime::Window && !allow {
            eprintln!("notice: λ = {l} skipped ({NEAR_ONE})");
            continue;
        }
        kept.push((l, (l * n_star).floor() as u64));
    }
    let table = if n <= guard && !kept.is_empty() {
        let k_top = kept.iter().map(|p| p.1).max().unwrap() as usize;
        Some(LogTable::new(spec, n as usize, k_top)?)
    } else {
        None
    };
    let m = spec.m as f64;
    let rho = spec.rho_f64();
    let mut rows = Vec::new();
    for (l, k) in kept {
        let sol = solve_bivariate(spec, n, k, tol(cfg))?;
        let window = Regime::classify(l) == Regime::Window;
        let a_n = (sol.regime == Regime::CaseII).then(|| compute_a_n(spec, n, k)).transpose()?;
        let eval = |f: Formula| if window { None } else { evaluate_unchecked(spec, &sol, f).ok().map(|e| e.log_value) };
        let (li, lii) = (eval(Formula::LltI), eval(Formula::LltII));
        let ex = table.as_ref().map(|t| t.ln_get(n as usize, k as usize));
        let ratio = |v: Option<f64>| Some((ex? - v?).exp());
        rows.push(SweepRow {
            n,
            lambda: l,
            big_n: k,
            regime: sol.regime.to_string(),
            x_n: sol.x_n,
            y_n: sol.y_n,
            y_rho_m: sol.y_n * rho.powf(m),
            chi_n: sol.chi_n,
            s_n: sol.s_n,
            s_over_n: sol.s_n / k as f64,
            a_n,
            s_vs_prediction: a_n.map(|a| sol.s_n * spec.c_m() / ((1.0 - a) * k as f64)),
            llt_i_log: li,
            llt_ii_log: lii,
            exact_log: ex,
            ratio_i: ratio(li),
            ratio_ii: ratio(lii),
            note: if window { NEAR_ONE.into() } else { String::new() },
        });
    }
    Ok(vec![Artifact::records("phase_sweep", cfg.format(), &rows)?])
}

// ---- slow variation --------------------------------------------------------

#[derive(Serialize)]
struct SvRow {
    check: &'static str,
    param: f64,
    x: f64,
    value: f64,
    pass: Option<bool>,
}

fn check_sv(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let spec = cfg.spec()?;
    let xs = cfg.x_grid.clone().unwrap_or_else(|| vec![1e4, 1e5, 1e6]);
    let delta = cfg.delta.unwrap_or(0.1);
    let mut rows: Vec<SvRow> = slow_variation_grid(&spec.h, &[0.5, 2.0, 10.0], &xs)
        .into_iter()
        .map(|(l, x, d)| SvRow { check: "ratio_deviation", param: l, x, value: d, pass: None })
        .collect();
    let ks: Vec<u64> = xs.iter().map(|&x| x as u64).collect();
    for (x, r) in karamata_check(spec, &ks)?.karamata {
        rows.push(SvRow { check: "karamata", param: spec.alpha_f64(), x: x as f64, value: r, pass: Some((r - 1.0).abs() <= 0.01) });
    }
    for (&x, ok) in xs.iter().zip(subpoly_check(&spec.h, delta, &xs)?) {
        rows.push(SvRow { check: "subpoly", param: delta, x, value: spec.h.eval(x), pass: Some(ok) });
    }
    Ok(vec![Artifact::records("check_sv", cfg.format(), &rows)?])
}
