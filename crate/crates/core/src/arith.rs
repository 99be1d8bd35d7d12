//! Scalar back-ends for the coefficient tables.
//!
//! Series routines are generic over [`Arith`], a small field-like context. Three
//! contexts ship: machine doubles, exact rationals and fixed-precision binary
//! floats (128 bits unless configured otherwise).

use std::fmt::Debug;
use std::sync::Mutex;

use astro_float::{BigFloat, Consts, Radix, RoundingMode};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Arithmetic mode tag carried into manifests and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mode {
    F64,
    Exact,
    BigFloat { bits: usize },
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::F64 => write!(f, "f64"),
            Mode::Exact => write!(f, "exact"),
            Mode::BigFloat { bits } => write!(f, "bigfloat{bits}"),
        }
    }
}

pub trait Arith: Sync + Send {
    type T: Clone + Send + Sync + Debug;

    fn mode(&self) -> Mode;
    fn zero(&self) -> Self::T;
    fn one(&self) -> Self::T {
        self.from_u64(1)
    }
    fn from_u64(&self, v: u64) -> Self::T;
    fn from_ratio(&self, r: &BigRational) -> Self::T;
    fn add(&self, a: &Self::T, b: &Self::T) -> Self::T;
    fn sub(&self, a: &Self::T, b: &Self::T) -> Self::T;
    fn mul(&self, a: &Self::T, b: &Self::T) -> Self::T;
    /// Division; `b` must be nonzero.
    fn div(&self, a: &Self::T, b: &Self::T) -> Self::T;
    fn ln(&self, a: &Self::T) -> Result<Self::T>;
    fn exp(&self, a: &Self::T) -> Result<Self::T>;
    fn is_zero(&self, a: &Self::T) -> bool;
    fn is_negative(&self, a: &Self::T) -> bool;
    fn is_finite(&self, a: &Self::T) -> bool;
    fn to_f64(&self, a: &Self::T) -> f64;
    /// Text form that parses back to the same value.
    fn render(&self, a: &Self::T) -> String;

    fn div_u64(&self, a: &Self::T, d: u64) -> Self::T {
        self.div(a, &self.from_u64(d))
    }

    fn mul_u64(&self, a: &Self::T, k: u64) -> Self::T {
        self.mul(a, &self.from_u64(k))
    }

    /// Integer power by repeated squaring; negative exponents invert.
    fn powi(&self, a: &Self::T, e: i64) -> Self::T {
        let mut base = a.clone();
        let mut acc = self.one();
        let mut k = e.unsigned_abs();
        while k > 0 {
            if k & 1 == 1 {
                acc = self.mul(&acc, &base);
            }
            k >>= 1;
            if k > 0 {
                base = self.mul(&base, &base);
            }
        }
        if e < 0 {
            self.div(&self.one(), &acc)
        } else {
            acc
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct F64Arith;

impl Arith for F64Arith {
    type T = f64;

    fn mode(&self) -> Mode {
        Mode::F64
    }
    fn zero(&self) -> f64 {
        0.0
    }
    fn from_u64(&self, v: u64) -> f64 {
        v as f64
    }
    fn from_ratio(&self, r: &BigRational) -> f64 {
        r.to_f64().unwrap_or(f64::NAN)
    }
    fn add(&self, a: &f64, b: &f64) -> f64 {
        a + b
    }
    fn sub(&self, a: &f64, b: &f64) -> f64 {
        a - b
    }
    fn mul(&self, a: &f64, b: &f64) -> f64 {
        a * b
    }
    fn div(&self, a: &f64, b: &f64) -> f64 {
        a / b
    }
    fn ln(&self, a: &f64) -> Result<f64> {
        Ok(a.ln())
    }
    fn exp(&self, a: &f64) -> Result<f64> {
        Ok(a.exp())
    }
    fn is_zero(&self, a: &f64) -> bool {
        *a == 0.0
    }
    fn is_negative(&self, a: &f64) -> bool {
        *a < 0.0
    }
    fn is_finite(&self, a: &f64) -> bool {
        a.is_finite()
    }
    fn to_f64(&self, a: &f64) -> f64 {
        *a
    }
    fn render(&self, a: &f64) -> String {
        fmt_f64(*a)
    }
}

/// Shortest round-trip decimal, switching to exponent form for extreme magnitudes.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v != 0.0 && v.is_finite() && !(1e-5..1e16).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExactArith;

impl Arith for ExactArith {
    type T = BigRational;

    fn mode(&self) -> Mode {
        Mode::Exact
    }
    fn zero(&self) -> BigRational {
        BigRational::zero()
    }
    fn from_u64(&self, v: u64) -> BigRational {
        BigRational::from_integer(BigInt::from(v))
    }
    fn from_ratio(&self, r: &BigRational) -> BigRational {
        r.clone()
    }
    fn add(&self, a: &BigRational, b: &BigRational) -> BigRational {
        a + b
    }
    fn sub(&self, a: &BigRational, b: &BigRational) -> BigRational {
        a - b
    }
    fn mul(&self, a: &BigRational, b: &BigRational) -> BigRational {
        a * b
    }
    fn div(&self, a: &BigRational, b: &BigRational) -> BigRational {
        a / b
    }
    fn ln(&self, _: &BigRational) -> Result<BigRational> {
        Err(Error::Mode("logarithm has no exact rational value".into()))
    }
    fn exp(&self, _: &BigRational) -> Result<BigRational> {
        Err(Error::Mode("exponential has no exact rational value".into()))
    }
    fn is_zero(&self, a: &BigRational) -> bool {
        a.is_zero()
    }
    fn is_negative(&self, a: &BigRational) -> bool {
        a.is_negative()
    }
    fn is_finite(&self, _: &BigRational) -> bool {
        true
    }
    fn to_f64(&self, a: &BigRational) -> f64 {
        ratio_to_f64(a)
    }
    fn render(&self, a: &BigRational) -> String {
        a.to_string()
    }
}

/// Correctly scaled conversion that survives numerators beyond the f64 range.
pub fn ratio_to_f64(a: &BigRational) -> f64 {
    if let Some(v) = a.to_f64() {
        if v.is_finite() && (v != 0.0 || a.is_zero()) {
            return v;
        }
    }
    let ln = ln_ratio(a);
    let sign = if a.is_negative() { -1.0 } else { 1.0 };
    sign * ln.exp()
}

/// Natural log of |a| for arbitrarily large or small rationals.
pub fn ln_ratio(a: &BigRational) -> f64 {
    ln_bigint(a.numer()) - ln_bigint(a.denom())
}

pub fn ln_bigint(v: &BigInt) -> f64 {
    let bits = v.bits();
    if bits <= 1000 {
        return v.abs().to_f64().unwrap_or(f64::NAN).ln();
    }
    let shift = bits - 64;
    let top: BigInt = v.abs() >> shift;
    top.to_f64().unwrap_or(f64::NAN).ln() + shift as f64 * std::f64::consts::LN_2
}

/// Fixed-precision binary floating point through `astro-float`.
pub struct BigFloatArith {
    bits: usize,
    consts: Mutex<Consts>,
}

const RM: RoundingMode = RoundingMode::ToEven;

impl BigFloatArith {
    pub fn new(bits: usize) -> Result<Self> {
        if bits < 64 {
            return Err(Error::Mode(format!("precision {bits} bits below the 64-bit minimum")));
        }
        let consts = Consts::new().map_err(|e| Error::Mode(format!("{e:?}")))?;
        Ok(Self { bits, consts: Mutex::new(consts) })
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    fn with_consts<R>(&self, f: impl FnOnce(&mut Consts) -> R) -> R {
        let mut guard = self.consts.lock().unwrap_or_else(|p| p.into_inner());
        f(&mut guard)
    }

    fn from_bigint(&self, v: &BigInt) -> BigFloat {
        if let Some(i) = v.to_i64() {
            return BigFloat::from_i64(i, self.bits);
        }
        let s = v.to_string();
        self.with_consts(|cc| BigFloat::parse(&s, Radix::Dec, self.bits, RM, cc))
    }
}

impl Debug for BigFloatArith {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BigFloatArith").field("bits", &self.bits).finish()
    }
}

impl Arith for BigFloatArith {
    type T = BigFloat;

    fn mode(&self) -> Mode {
        Mode::BigFloat { bits: self.bits }
    }
    fn zero(&self) -> BigFloat {
        BigFloat::from_u64(0, self.bits)
    }
    fn from_u64(&self, v: u64) -> BigFloat {
        BigFloat::from_u64(v, self.bits)
    }
    fn from_ratio(&self, r: &BigRational) -> BigFloat {
        let n = self.from_bigint(r.numer());
        let d = self.from_bigint(r.denom());
        n.div(&d, self.bits, RM)
    }
    fn add(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.add(b, self.bits, RM)
    }
    fn sub(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.sub(b, self.bits, RM)
    }
    fn mul(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.mul(b, self.bits, RM)
    }
    fn div(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.div(b, self.bits, RM)
    }
    fn ln(&self, a: &BigFloat) -> Result<BigFloat> {
        let v = self.with_consts(|cc| a.ln(self.bits, RM, cc));
        if v.is_nan() {
            return Err(crate::error::domain("logarithm of a nonpositive value"));
        }
        Ok(v)
    }
    fn exp(&self, a: &BigFloat) -> Result<BigFloat> {
        let v = self.with_consts(|cc| a.exp(self.bits, RM, cc));
        if v.is_inf() || v.is_nan() {
            return Err(crate::error::precision("exponential overflows the working precision"));
        }
        Ok(v)
    }
    fn is_zero(&self, a: &BigFloat) -> bool {
        a.is_zero()
    }
    fn is_negative(&self, a: &BigFloat) -> bool {
        a.is_negative() && !a.is_zero()
    }
    fn is_finite(&self, a: &BigFloat) -> bool {
        !a.is_inf() && !a.is_nan()
    }
    fn to_f64(&self, a: &BigFloat) -> f64 {
        if a.is_zero() {
            return 0.0;
        }
        if a.is_nan() {
            return f64::NAN;
        }
        if a.is_inf() {
            return if a.is_negative() { f64::NEG_INFINITY } else { f64::INFINITY };
        }
        self.render(a).parse::<f64>().unwrap_or(f64::NAN)
    }
    fn render(&self, a: &BigFloat) -> String {
        self.with_consts(|cc| a.format(Radix::Dec, RM, cc))
            .unwrap_or_else(|_| "NaN".to_string())
    }
}
