//! Expansive weight sequences `c_n = h(n) n^(α-1) ρ^(-n)` and the slowly varying
//! family used for `h`.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::arith::{ratio_to_f64, Arith};
use crate::error::{Error, Result};

/// A real parameter held as an exact rational.
///
/// Parsed from decimal text (`"0.25"`, `"1e-3"`), fractions (`"1/3"`) or JSON
/// numbers; serialized back as a terminating decimal when one exists.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Real(BigRational);

impl Real {
    pub fn from_ratio(r: BigRational) -> Self {
        Real(r)
    }

    pub fn from_int(v: i64) -> Self {
        Real(BigRational::from_integer(BigInt::from(v)))
    }

    pub fn ratio(&self) -> &BigRational {
        &self.0
    }

    pub fn to_f64(&self) -> f64 {
        ratio_to_f64(&self.0)
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    /// Integer value, when the number is an integer that fits `i64`.
    pub fn as_i64(&self) -> Option<i64> {
        if self.0.is_integer() {
            self.0.numer().to_i64()
        } else {
            None
        }
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }
}

impl From<f64> for Real {
    fn from(v: f64) -> Self {
        format!("{v:e}").parse().expect("finite f64 has a decimal form")
    }
}

impl FromStr for Real {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Spec(format!("cannot parse real number {s:?}"));
        let t = s.trim();
        if let Some((p, q)) = t.split_once('/') {
            let p: BigInt = p.trim().parse().map_err(|_| bad())?;
            let q: BigInt = q.trim().parse().map_err(|_| bad())?;
            if q.is_zero() {
                return Err(bad());
            }
            return Ok(Real(BigRational::new(p, q)));
        }
        let (neg, body) = match t.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, t.strip_prefix('+').unwrap_or(t)),
        };
        let (mant, exp) = match body.find(['e', 'E']) {
            Some(i) => (&body[..i], body[i + 1..].parse::<i32>().map_err(|_| bad())?),
            None => (body, 0),
        };
        let (int_part, frac_part) = mant.split_once('.').unwrap_or((mant, ""));
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let digits = format!("{int_part}{frac_part}");
        let mut num: BigInt = if digits.is_empty() { BigInt::zero() } else { digits.parse().map_err(|_| bad())? };
        if neg {
            num = -num;
        }
        let scale = exp - frac_part.len() as i32;
        let ten = BigInt::from(10);
        let r = if scale >= 0 {
            BigRational::from_integer(num * ten.pow(scale as u32))
        } else {
            BigRational::new(num, ten.pow((-scale) as u32))
        };
        Ok(Real(r))
    }
}

impl fmt::Display for Real {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = &self.0;
        if r.is_integer() {
            return write!(f, "{}", r.numer());
        }
        let mut d = r.denom().clone();
        let (mut twos, mut fives) = (0u32, 0u32);
        let two = BigInt::from(2);
        let five = BigInt::from(5);
        while d.is_multiple_of(&two) {
            d /= &two;
            twos += 1;
        }
        while d.is_multiple_of(&five) {
            d /= &five;
            fives += 1;
        }
        if !d.is_one() {
            return write!(f, "{}/{}", r.numer(), r.denom());
        }
        let k = twos.max(fives);
        let scaled = (r * BigRational::from_integer(BigInt::from(10).pow(k))).to_integer();
        let neg = scaled.is_negative();
        let mut digits = scaled.abs().to_string();
        while digits.len() <= k as usize {
            digits.insert(0, '0');
        }
        let split = digits.len() - k as usize;
        write!(f, "{}{}.{}", if neg { "-" } else { "" }, &digits[..split], &digits[split..])
    }
}

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl de::Visitor<'_> for V {
            type Value = Real;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number or a decimal/fraction string")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Real, E> {
                v.parse().map_err(E::custom)
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Real, E> {
                Ok(Real::from_int(v))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Real, E> {
                Ok(Real(BigRational::from_integer(BigInt::from(v))))
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Real, E> {
                if !v.is_finite() {
                    return Err(E::custom("non-finite number"));
                }
                Ok(Real::from(v))
            }
        }
        d.deserialize_any(V)
    }
}

/// `ln(max(x, e))`, the log used by [`SlowlyVarying::LogPower`].
fn clamped_ln(x: f64) -> f64 {
    if x <= std::f64::consts::E {
        1.0
    } else {
        x.ln()
    }
}

/// Slowly varying factor `h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum SlowlyVarying {
    /// `h(x) = c`.
    Constant { c: Real },
    /// `h(x) = ln(max(x, e))^β`.
    LogPower { beta: Real },
    /// Pointwise product of the factors.
    Product(Vec<SlowlyVarying>),
}

impl SlowlyVarying {
    pub fn one() -> Self {
        SlowlyVarying::Constant { c: Real::from_int(1) }
    }

    pub fn log_power(beta: f64) -> Self {
        SlowlyVarying::LogPower { beta: Real::from(beta) }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SlowlyVarying::Constant { c } if !c.is_positive() => {
                Err(Error::Spec(format!("constant factor must be positive, got {c}")))
            }
            SlowlyVarying::Product(fs) => fs.iter().try_for_each(|f| f.validate()),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.ln_eval(x).exp()
    }

    pub fn ln_eval(&self, x: f64) -> f64 {
        match self {
            SlowlyVarying::Constant { c } => c.to_f64().ln(),
            SlowlyVarying::LogPower { beta } => beta.to_f64() * clamped_ln(x).ln(),
            SlowlyVarying::Product(fs) => fs.iter().map(|f| f.ln_eval(x)).sum(),
        }
    }

    /// `sup_{j ≥ j0} h(j+1)/h(j)` over integers, used to certify geometric tails.
    pub fn ratio_bound(&self, j0: usize) -> f64 {
        match self {
            SlowlyVarying::Constant { .. } => 1.0,
            SlowlyVarying::LogPower { beta } => {
                let b = beta.to_f64();
                if b <= 0.0 {
                    return 1.0;
                }
                // ln(j+1)/ln(j) is decreasing from j = 3; below that the clamp makes it smaller.
                let j = j0.max(3) as f64;
                (clamped_ln(j + 1.0) / clamped_ln(j)).powf(b)
            }
            SlowlyVarying::Product(fs) => fs.iter().map(|f| f.ratio_bound(j0)).product(),
        }
    }

    /// True when `h` is a positive rational constant (possibly a product of such).
    pub fn rational_constant(&self) -> Option<BigRational> {
        match self {
            SlowlyVarying::Constant { c } => Some(c.ratio().clone()),
            SlowlyVarying::LogPower { beta } if beta.ratio().is_zero() => Some(BigRational::one()),
            SlowlyVarying::LogPower { .. } => None,
            SlowlyVarying::Product(fs) => {
                fs.iter().try_fold(BigRational::one(), |acc, f| Some(acc * f.rational_constant()?))
            }
        }
    }

    /// `h(n)` in an arbitrary arithmetic context.
    pub fn eval_in<A: Arith>(&self, a: &A, n: u64) -> Result<A::T> {
        match self {
            SlowlyVarying::Constant { c } => Ok(a.from_ratio(c.ratio())),
            SlowlyVarying::LogPower { beta } => {
                if beta.ratio().is_zero() || n <= 2 {
                    return Ok(a.one());
                }
                let l = a.ln(&a.from_u64(n))?;
                match beta.as_i64() {
                    Some(k) if k.abs() <= 64 => Ok(a.powi(&l, k)),
                    _ => a.exp(&a.mul(&a.from_ratio(beta.ratio()), &a.ln(&l)?)),
                }
            }
            SlowlyVarying::Product(fs) => {
                let mut acc = a.one();
                for f in fs {
                    acc = a.mul(&acc, &f.eval_in(a, n)?);
                }
                Ok(acc)
            }
        }
    }
}

/// The model `(α, ρ, h, m)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpansiveSpec {
    pub alpha: Real,
    pub rho: Real,
    pub m: usize,
    pub h: SlowlyVarying,
}

impl ExpansiveSpec {
    pub fn new(alpha: f64, rho: f64, h: SlowlyVarying, m: usize) -> Result<Self> {
        let s = ExpansiveSpec { alpha: Real::from(alpha), rho: Real::from(rho), m, h };
        s.validate()?;
        Ok(s)
    }

    /// `α = 1, ρ = 1/2, h ≡ 1, m = 1`: `c_k = 2^k`.
    pub fn geometric() -> Self {
        Self::new(1.0, 0.5, SlowlyVarying::one(), 1).expect("valid")
    }

    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_positive() {
            return Err(Error::Spec(format!("alpha must be positive, got {}", self.alpha)));
        }
        let rho = self.rho.ratio();
        if !rho.is_positive() || *rho >= BigRational::one() {
            return Err(Error::Spec(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        if self.m == 0 {
            return Err(Error::Spec("m must be at least 1".into()));
        }
        self.h.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: ExpansiveSpec = serde_json::from_str(text).map_err(|e| Error::Spec(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("spec serializes")
    }

    pub fn alpha_f64(&self) -> f64 {
        self.alpha.to_f64()
    }

    pub fn rho_f64(&self) -> f64 {
        self.rho.to_f64()
    }

    /// `ln c_n`, or `None` below the threshold `m`.
    pub fn ln_coeff(&self, n: usize) -> Option<f64> {
        if n < self.m || n == 0 {
            return None;
        }
        let nf = n as f64;
        Some(self.h.ln_eval(nf) + (self.alpha_f64() - 1.0) * nf.ln() - nf * self.rho_f64().ln())
    }

    /// `c_m`.
    pub fn c_m(&self) -> f64 {
        self.ln_coeff(self.m).map(f64::exp).unwrap_or(0.0)
    }

    /// Whether exact rational evaluation of every `c_n` is possible.
    pub fn exact_capable(&self) -> bool {
        self.alpha.is_integer() && self.h.rational_constant().is_some()
    }

    /// `c_n` in the given arithmetic context.
    ///
    /// Overflow of the working precision is reported, never returned as infinity.
    pub fn coeff_in<A: Arith>(&self, a: &A, n: usize) -> Result<A::T> {
        if n == 0 {
            return Err(Error::Contract("coefficient index must be at least 1".into()));
        }
        if n < self.m {
            return Ok(a.zero());
        }
        let h = self.h.eval_in(a, n as u64)?;
        let power = match (&self.alpha - 1i64).as_i64() {
            Some(k) if k.abs() <= 1 << 20 => a.powi(&a.from_u64(n as u64), k),
            _ => {
                let e = a.from_ratio(&(self.alpha.ratio() - BigRational::one()));
                a.exp(&a.mul(&e, &a.ln(&a.from_u64(n as u64))?))?
            }
        };
        let rho_pow = a.powi(&a.from_ratio(self.rho.ratio()), -(n as i64));
        let v = a.mul(&a.mul(&h, &power), &rho_pow);
        if !a.is_finite(&v) || (a.is_zero(&v) && !a.is_zero(&h)) {
            return Err(crate::error::precision(format!(
                "c_{n} is outside the range of {} arithmetic",
                a.mode()
            )));
        }
        Ok(v)
    }
}

impl std::ops::Sub<i64> for &Real {
    type Output = Real;
    fn sub(self, rhs: i64) -> Real {
        Real(self.0.clone() - BigRational::from_integer(BigInt::from(rhs)))
    }
}

/// `c_n` in double precision.
pub fn coeff_c(spec: &ExpansiveSpec, n: usize) -> Result<f64> {
    spec.coeff_in(&crate::arith::F64Arith, n)
}

/// Results of the slow-variation spot checks.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SVCheckReport {
    /// `(λ, x, |h(λx)/h(x) − 1|)`.
    pub grid: Vec<(f64, f64, f64)>,
    /// `(x, r(x))` with `r(x) = Σ_{s=m}^{x-1} h(s) s^(α-1) / (h(x) x^α / α)`.
    pub karamata: Vec<(u64, f64)>,
    /// `(δ, x, x^-δ ≤ h(x) ≤ x^δ)`.
    pub subpoly: Vec<(f64, f64, bool)>,
}

impl SVCheckReport {
    /// Each λ-row of the deviation grid is nonincreasing along x.
    pub fn deviations_decreasing(&self) -> bool {
        let mut lambdas: Vec<f64> = self.grid.iter().map(|r| r.0).collect();
        lambdas.dedup();
        lambdas.iter().all(|&l| {
            let row: Vec<f64> = self.grid.iter().filter(|r| r.0 == l).map(|r| r.2).collect();
            row.windows(2).all(|w| w[1] <= w[0])
        })
    }
}

/// Ratios `|h(λx)/h(x) − 1|` on a grid.
pub fn slow_variation_grid(h: &SlowlyVarying, lambdas: &[f64], x_grid: &[f64]) -> Vec<(f64, f64, f64)> {
    let mut out = Vec::new();
    for &l in lambdas {
        for &x in x_grid {
            out.push((l, x, ((h.ln_eval(l * x) - h.ln_eval(x)).exp() - 1.0).abs()));
        }
    }
    out
}

/// Karamata partial-sum ratios along an increasing grid.
pub fn karamata_check(spec: &ExpansiveSpec, x_grid: &[u64]) -> Result<SVCheckReport> {
    let m = spec.m as u64;
    if x_grid.iter().any(|&x| x < m + 1) || x_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Contract("karamata grid must be increasing with entries above m".into()));
    }
    let alpha = spec.alpha_f64();
    let term = |s: u64| {
        let sf = s as f64;
        (spec.h.ln_eval(sf) + (alpha - 1.0) * sf.ln()).exp()
    };
    let mut rows = Vec::with_capacity(x_grid.len());
    // Neumaier-compensated running sum.
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    let mut s = m;
    for &x in x_grid {
        while s < x {
            let t = term(s);
            let next = sum + t;
            comp += if sum.abs() >= t.abs() { (sum - next) + t } else { (t - next) + sum };
            sum = next;
            s += 1;
        }
        let xf = x as f64;
        let denom = (spec.h.ln_eval(xf) + alpha * xf.ln() - alpha.ln()).exp();
        rows.push((x, (sum + comp) / denom));
    }
    let xs: Vec<f64> = x_grid.iter().map(|&x| x as f64).collect();
    Ok(SVCheckReport {
        grid: slow_variation_grid(&spec.h, &[0.5, 2.0, 10.0], &xs),
        karamata: rows,
        subpoly: Vec::new(),
    })
}

/// Two-sided sub-polynomial bound `x^-δ ≤ h(x) ≤ x^δ` at each grid point.
pub fn subpoly_check(h: &SlowlyVarying, delta: f64, x_grid: &[f64]) -> Result<Vec<bool>> {
    if delta <= 0.0 {
        return Err(Error::Contract("delta must be positive".into()));
    }
    if x_grid.len() < 2 || x_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Contract("subpoly grid must be increasing with at least two points".into()));
    }
    Ok(x_grid
        .iter()
        .map(|&x| {
            let lh = h.ln_eval(x);
            let b = delta * x.ln();
            -b <= lh && lh <= b
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::{BigFloatArith, ExactArith};
    use proptest::prelude::*;

    fn spec(alpha: f64, rho: f64, m: usize) -> ExpansiveSpec {
        ExpansiveSpec::new(alpha, rho, SlowlyVarying::one(), m).unwrap()
    }

    #[test]
    fn coefficient_examples() {
        assert_eq!(coeff_c(&spec(1.0, 0.5, 1), 3).unwrap(), 8.0);
        assert_eq!(coeff_c(&spec(2.0, 0.5, 2), 1).unwrap(), 0.0);
        assert_eq!(coeff_c(&spec(2.0, 0.5, 2), 4).unwrap(), 64.0);
        assert!((spec(2.0, 0.5, 2).c_m() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn exact_coefficients_are_rational() {
        let s = spec(2.0, 0.3, 1);
        let c = s.coeff_in(&ExactArith, 3).unwrap();
        let expect = BigRational::new(BigInt::from(3 * 1000), BigInt::from(27));
        assert_eq!(c, expect);
    }

    #[test]
    fn bigfloat_coefficient_with_log_factor() {
        let s = ExpansiveSpec::new(1.5, 0.5, SlowlyVarying::log_power(1.0), 1).unwrap();
        let a = BigFloatArith::new(128).unwrap();
        let v = a.to_f64(&s.coeff_in(&a, 20).unwrap());
        let expect = 20f64.ln() * 20f64.sqrt() * 2f64.powi(20);
        assert!((v / expect - 1.0).abs() < 1e-14);
    }

    #[test]
    fn overflow_is_a_precision_error() {
        let s = spec(1.0, 0.5, 1);
        assert!(matches!(coeff_c(&s, 5000), Err(Error::Precision(_))));
    }

    #[test]
    fn real_parsing_and_display() {
        let r: Real = "0.25".parse().unwrap();
        assert_eq!(r.ratio(), &BigRational::new(1.into(), 4.into()));
        assert_eq!(r.to_string(), "0.25");
        let t: Real = "1/3".parse().unwrap();
        assert_eq!(t.to_string(), "1/3");
        assert_eq!("-1.5e2".parse::<Real>().unwrap().to_string(), "-150");
        assert_eq!("2.5e-3".parse::<Real>().unwrap().to_string(), "0.0025");
        assert_eq!(Real::from(0.3).to_string(), "0.3");
        assert!("abc".parse::<Real>().is_err());
        assert!("1/0".parse::<Real>().is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let s = ExpansiveSpec {
            alpha: "1.5".parse().unwrap(),
            rho: "1/3".parse().unwrap(),
            m: 2,
            h: SlowlyVarying::Product(vec![
                SlowlyVarying::Constant { c: "2".parse().unwrap() },
                SlowlyVarying::log_power(-0.5),
            ]),
        };
        let text = s.to_json();
        assert_eq!(ExpansiveSpec::from_json(&text).unwrap(), s);
        let from_numbers =
            ExpansiveSpec::from_json(r#"{"alpha":1,"rho":0.5,"m":1,"h":{"kind":"constant","params":{"c":1}}}"#)
                .unwrap();
        assert_eq!(from_numbers, ExpansiveSpec::geometric());
        assert!(ExpansiveSpec::from_json(r#"{"alpha":1,"rho":1.5,"m":1,"h":{"kind":"constant","params":{"c":1}}}"#)
            .is_err());
        assert!(ExpansiveSpec::from_json(
            r#"{"alpha":1,"rho":0.5,"m":1,"extra":0,"h":{"kind":"constant","params":{"c":1}}}"#
        )
        .is_err());
    }

    #[test]
    fn karamata_examples() {
        let r = karamata_check(&spec(1.0, 0.5, 1), &[1000]).unwrap();
        assert!((r.karamata[0].1 - 0.999).abs() < 1e-12);
        let r = karamata_check(&spec(2.0, 0.5, 1), &[1000]).unwrap();
        // Σ_{s<1000} s = 999·1000/2, against 1000²/2.
        assert!((r.karamata[0].1 - 0.999).abs() < 1e-12);
        let s = ExpansiveSpec::new(1.0, 0.5, SlowlyVarying::log_power(1.0), 1).unwrap();
        let r = karamata_check(&s, &[1000, 1_000_000]).unwrap();
        let brute: f64 = (1..1000u64).map(|s| clamped_ln(s as f64)).sum::<f64>() / (1000f64.ln() * 1000.0);
        assert!((r.karamata[0].1 - brute).abs() < 1e-12);
        assert!((r.karamata[1].1 - 1.0).abs() < (r.karamata[0].1 - 1.0).abs());
    }

    #[test]
    fn subpoly_examples() {
        let grid = [1e3, 1e4, 1e6];
        assert!(subpoly_check(&SlowlyVarying::one(), 0.1, &grid).unwrap().iter().all(|&b| b));
        // ln x overtakes x^0.1 only near x ≈ 3.4e15.
        assert!(!subpoly_check(&SlowlyVarying::log_power(1.0), 0.1, &grid).unwrap()[2]);
        assert!(subpoly_check(&SlowlyVarying::log_power(1.0), 0.1, &[1e6, 1e17]).unwrap()[1]);
        assert!(subpoly_check(&SlowlyVarying::log_power(-1.0), 0.5, &[1e3, 1e4]).unwrap()[1]);
        assert!(subpoly_check(&SlowlyVarying::one(), 0.1, &[1e3]).is_err());
    }

    #[test]
    fn slow_variation_deviations_shrink() {
        let xs = [1e3, 1e4, 1e5, 1e6];
        for h in [SlowlyVarying::one(), SlowlyVarying::log_power(1.0), SlowlyVarying::log_power(-2.0)] {
            let rep = SVCheckReport { grid: slow_variation_grid(&h, &[0.5, 2.0, 10.0], &xs), ..Default::default() };
            assert!(rep.deviations_decreasing());
        }
    }

    #[test]
    fn coefficient_ratio_tends_to_inverse_rho() {
        let s = ExpansiveSpec::new(0.5, 0.3, SlowlyVarying::log_power(2.0), 2).unwrap();
        let dev: Vec<f64> = [10usize, 100, 1000, 10000]
            .iter()
            .map(|&n| ((s.ln_coeff(n + 1).unwrap() - s.ln_coeff(n).unwrap()).exp() * 0.3 - 1.0).abs())
            .collect();
        assert!(dev.windows(2).all(|w| w[1] < w[0]), "{dev:?}");
    }

    proptest! {
        #[test]
        fn ratio_bound_dominates(beta in -3.0f64..3.0, j0 in 1usize..200) {
            let h = SlowlyVarying::Product(vec![SlowlyVarying::log_power(beta), SlowlyVarying::one()]);
            let b = h.ratio_bound(j0);
            for j in j0..j0 + 300 {
                let r = (h.ln_eval(j as f64 + 1.0) - h.ln_eval(j as f64)).exp();
                prop_assert!(r <= b * (1.0 + 1e-12));
            }
        }

        #[test]
        fn coefficients_nonnegative(alpha in 0.2f64..3.0, rho in 0.1f64..0.9, m in 1usize..4, n in 1usize..300) {
            let s = ExpansiveSpec::new(alpha, rho, SlowlyVarying::log_power(1.0), m).unwrap();
            let c = coeff_c(&s, n).unwrap();
            prop_assert!(c >= 0.0);
            prop_assert_eq!(c > 0.0, n >= m);
        }
    }
}
