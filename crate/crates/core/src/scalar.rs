//! Metric scalars: exact rationals by default, tolerant floats on request.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::cell::Cell;
use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NumericPolicy {
    Exact,
    Float(f64),
}

pub const DEFAULT_TOL: f64 = 1e-9;

thread_local! {
    static POLICY: Cell<NumericPolicy> = const { Cell::new(NumericPolicy::Exact) };
}

pub fn policy() -> NumericPolicy {
    POLICY.with(|p| p.get())
}

/// Installs `p` for the current thread and returns the previous policy.
pub fn set_policy(p: NumericPolicy) -> NumericPolicy {
    POLICY.with(|c| c.replace(p))
}

/// Runs `f` under `p`, restoring the previous policy afterwards.
pub fn with_policy<R>(p: NumericPolicy, f: impl FnOnce() -> R) -> R {
    struct Restore(NumericPolicy);
    impl Drop for Restore {
        fn drop(&mut self) {
            set_policy(self.0);
        }
    }
    let _guard = Restore(set_policy(p));
    f()
}

fn float_tol() -> f64 {
    match policy() {
        NumericPolicy::Float(t) => t,
        NumericPolicy::Exact => DEFAULT_TOL,
    }
}

#[derive(Clone, Debug)]
pub enum Scalar {
    Q(BigRational),
    F(f64),
}

impl Scalar {
    pub fn zero() -> Self {
        Scalar::Q(BigRational::zero())
    }

    pub fn one() -> Self {
        Scalar::Q(BigRational::one())
    }

    pub fn int(n: i64) -> Self {
        Scalar::Q(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn ratio(p: i64, q: i64) -> Self {
        Scalar::Q(BigRational::new(BigInt::from(p), BigInt::from(q)))
    }

    pub fn from_rational(r: BigRational) -> Self {
        Scalar::Q(r)
    }

    /// A literal under the active policy: rational under Exact, float otherwise.
    pub fn literal_f64(x: f64) -> Self {
        match policy() {
            NumericPolicy::Exact => Scalar::Q(
                BigRational::from_float(x).unwrap_or_else(BigRational::zero),
            ),
            NumericPolicy::Float(_) => Scalar::F(x),
        }
    }

    pub fn sqrt2() -> Self {
        match policy() {
            NumericPolicy::Exact => Scalar::Q(sqrt2_approx()),
            NumericPolicy::Float(_) => Scalar::F(std::f64::consts::SQRT_2),
        }
    }

    pub fn golden() -> Self {
        match policy() {
            NumericPolicy::Exact => Scalar::Q(golden_approx()),
            NumericPolicy::Float(_) => Scalar::F((1.0 + 5f64.sqrt()) / 2.0),
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Scalar::Q(_))
    }

    pub fn rational(&self) -> Option<&BigRational> {
        match self {
            Scalar::Q(r) => Some(r),
            Scalar::F(_) => None,
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Scalar::Q(r) => r.to_f64().unwrap_or(f64::NAN),
            Scalar::F(x) => *x,
        }
    }

    /// Converts to the representation the active policy prefers.
    pub fn under_policy(&self) -> Scalar {
        match (policy(), self) {
            (NumericPolicy::Float(_), Scalar::Q(r)) => Scalar::F(r.to_f64().unwrap_or(f64::NAN)),
            _ => self.clone(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Scalar::Q(r) => r.is_zero(),
            Scalar::F(x) => x.abs() <= float_tol(),
        }
    }

    pub fn is_positive(&self) -> bool {
        !self.is_zero() && self.sign() > 0
    }

    pub fn is_negative(&self) -> bool {
        !self.is_zero() && self.sign() < 0
    }

    fn sign(&self) -> i32 {
        match self {
            Scalar::Q(r) => {
                if r.is_positive() {
                    1
                } else if r.is_negative() {
                    -1
                } else {
                    0
                }
            }
            Scalar::F(x) => {
                if *x > 0.0 {
                    1
                } else if *x < 0.0 {
                    -1
                } else {
                    0
                }
            }
        }
    }

    pub fn abs(&self) -> Scalar {
        match self {
            Scalar::Q(r) => Scalar::Q(r.abs()),
            Scalar::F(x) => Scalar::F(x.abs()),
        }
    }

    pub fn max(self, o: Scalar) -> Scalar {
        if o > self {
            o
        } else {
            self
        }
    }

    pub fn min(self, o: Scalar) -> Scalar {
        if o < self {
            o
        } else {
            self
        }
    }

    pub fn half(&self) -> Scalar {
        self / &Scalar::int(2)
    }

    pub fn powi(&self, k: u32) -> Scalar {
        let mut acc = Scalar::one();
        for _ in 0..k {
            acc = &acc * self;
        }
        acc
    }

    pub fn cmp_tol(&self, o: &Scalar) -> Ordering {
        match (self, o) {
            (Scalar::Q(a), Scalar::Q(b)) => a.cmp(b),
            _ => {
                let (x, y) = (self.to_f64(), o.to_f64());
                let tol = float_tol();
                if (x - y).abs() <= tol * 1f64.max(x.abs()).max(y.abs()) {
                    Ordering::Equal
                } else if x < y {
                    Ordering::Less
                } else {
                    Ordering::Greater
                }
            }
        }
    }

    /// Exact rendering (`p/q`) for rationals, shortest round-trip for floats.
    pub fn exact_string(&self) -> String {
        match self {
            Scalar::Q(r) => {
                if r.is_integer() {
                    r.numer().to_string()
                } else {
                    format!("{}/{}", r.numer(), r.denom())
                }
            }
            Scalar::F(x) => format!("{x}"),
        }
    }

    pub fn decimal(&self) -> String {
        format!("{:.12}", self.to_f64())
    }

    /// Smallest dyadic rational `k/2^bits` that is `>= self`.
    pub fn dyadic_ceil(&self, bits: u32) -> Scalar {
        match self {
            Scalar::Q(r) => {
                let scale = BigInt::one() << bits;
                let num = r.numer() * &scale;
                let (q, rem) = num.div_rem(r.denom());
                let q = if rem.is_positive() { q + 1 } else { q };
                Scalar::Q(BigRational::new(q, scale))
            }
            Scalar::F(x) => Scalar::F(*x),
        }
    }
}

impl PartialEq for Scalar {
    fn eq(&self, o: &Scalar) -> bool {
        self.cmp_tol(o) == Ordering::Equal
    }
}

impl PartialOrd for Scalar {
    fn partial_cmp(&self, o: &Scalar) -> Option<Ordering> {
        Some(self.cmp_tol(o))
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.exact_string())
    }
}

impl From<i64> for Scalar {
    fn from(n: i64) -> Self {
        Scalar::int(n)
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident, $op:tt) => {
        impl<'a> $tr<&'a Scalar> for &'a Scalar {
            type Output = Scalar;
            fn $m(self, o: &'a Scalar) -> Scalar {
                match (self, o) {
                    (Scalar::Q(a), Scalar::Q(b)) => Scalar::Q(a $op b),
                    _ => Scalar::F(self.to_f64() $op o.to_f64()),
                }
            }
        }
        impl $tr<Scalar> for Scalar {
            type Output = Scalar;
            fn $m(self, o: Scalar) -> Scalar {
                (&self).$m(&o)
            }
        }
        impl<'a> $tr<&'a Scalar> for Scalar {
            type Output = Scalar;
            fn $m(self, o: &'a Scalar) -> Scalar {
                (&self).$m(o)
            }
        }
        impl<'a> $tr<Scalar> for &'a Scalar {
            type Output = Scalar;
            fn $m(self, o: Scalar) -> Scalar {
                self.$m(&o)
            }
        }
    };
}

binop!(Add, add, +);
binop!(Sub, sub, -);
binop!(Mul, mul, *);
binop!(Div, div, /);

impl Neg for &Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        match self {
            Scalar::Q(a) => Scalar::Q(-a),
            Scalar::F(x) => Scalar::F(-x),
        }
    }
}

impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        -&self
    }
}

impl std::iter::Sum for Scalar {
    fn sum<I: Iterator<Item = Scalar>>(it: I) -> Scalar {
        it.fold(Scalar::zero(), |a, b| a + b)
    }
}

// Convergents p/q of the continued fraction; error below 1/q^2.
fn convergent(step: impl Fn(&BigInt, &BigInt) -> (BigInt, BigInt)) -> BigRational {
    let (mut p, mut q) = (BigInt::one(), BigInt::one());
    let bound = BigInt::from(2_000_000u64);
    while q < bound {
        let (np, nq) = step(&p, &q);
        p = np;
        q = nq;
    }
    BigRational::new(p, q)
}

pub fn sqrt2_approx() -> BigRational {
    convergent(|p, q| (p + q * 2, p + q))
}

pub fn golden_approx() -> BigRational {
    convergent(|p, q| (p + q, p.clone()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExprError {
    pub col: usize,
    pub msg: String,
}

/// Parses `+ - * /`, parentheses, decimals, `p/q`, `sqrt2`, `golden` and names bound in `env`.
pub fn parse_expr(src: &str, env: &HashMap<String, Scalar>) -> Result<Scalar, ExprError> {
    let mut p = ExprParser { s: src.as_bytes(), i: 0, env };
    let v = p.sum()?;
    p.ws();
    if p.i < p.s.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(v)
}

struct ExprParser<'a> {
    s: &'a [u8],
    i: usize,
    env: &'a HashMap<String, Scalar>,
}

impl ExprParser<'_> {
    fn err(&self, msg: &str) -> ExprError {
        ExprError { col: self.i + 1, msg: msg.to_string() }
    }

    fn ws(&mut self) {
        while self.i < self.s.len() && self.s[self.i].is_ascii_whitespace() {
            self.i += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.ws();
        self.s.get(self.i).copied()
    }

    fn sum(&mut self) -> Result<Scalar, ExprError> {
        let mut acc = self.product()?;
        while let Some(c) = self.peek() {
            if c == b'+' || c == b'-' {
                self.i += 1;
                let r = self.product()?;
                acc = if c == b'+' { acc + r } else { acc - r };
            } else {
                break;
            }
        }
        Ok(acc)
    }

    fn product(&mut self) -> Result<Scalar, ExprError> {
        let mut acc = self.unary()?;
        while let Some(c) = self.peek() {
            if c == b'*' || c == b'/' {
                self.i += 1;
                let at = self.i;
                let r = self.unary()?;
                if c == b'*' {
                    acc = acc * r;
                } else {
                    if r.is_zero() {
                        return Err(ExprError { col: at + 1, msg: "division by zero".into() });
                    }
                    acc = acc / r;
                }
            } else {
                break;
            }
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Scalar, ExprError> {
        match self.peek() {
            Some(b'-') => {
                self.i += 1;
                Ok(-self.unary()?)
            }
            Some(b'+') => {
                self.i += 1;
                self.unary()
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> Result<Scalar, ExprError> {
        match self.peek() {
            Some(b'(') => {
                self.i += 1;
                let v = self.sum()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected ')'"));
                }
                self.i += 1;
                Ok(v)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.i;
                while self.i < self.s.len()
                    && (self.s[self.i].is_ascii_alphanumeric() || self.s[self.i] == b'_')
                {
                    self.i += 1;
                }
                let name = std::str::from_utf8(&self.s[start..self.i]).unwrap_or("");
                if let Some(v) = self.env.get(name) {
                    return Ok(v.clone());
                }
                match name {
                    "sqrt2" => Ok(Scalar::sqrt2()),
                    "golden" => Ok(Scalar::golden()),
                    _ => Err(ExprError { col: start + 1, msg: format!("unknown name '{name}'") }),
                }
            }
            _ => Err(self.err("expected a number")),
        }
    }

    fn number(&mut self) -> Result<Scalar, ExprError> {
        let start = self.i;
        while self.i < self.s.len() && (self.s[self.i].is_ascii_digit() || self.s[self.i] == b'.') {
            self.i += 1;
        }
        let text = std::str::from_utf8(&self.s[start..self.i]).unwrap_or("");
        let (int_part, frac_part) = match text.split_once('.') {
            Some((a, b)) => (a, b),
            None => (text, ""),
        };
        if frac_part.contains('.') || (int_part.is_empty() && frac_part.is_empty()) {
            return Err(ExprError { col: start + 1, msg: format!("bad number '{text}'") });
        }
        match policy() {
            NumericPolicy::Exact => {
                let digits = format!("{int_part}{frac_part}");
                let n: BigInt = digits.parse().map_err(|_| ExprError {
                    col: start + 1,
                    msg: format!("bad number '{text}'"),
                })?;
                let d = num_traits::pow(BigInt::from(10), frac_part.len());
                Ok(Scalar::Q(BigRational::new(n, d)))
            }
            NumericPolicy::Float(_) => text.parse::<f64>().map(Scalar::F).map_err(|_| ExprError {
                col: start + 1,
                msg: format!("bad number '{text}'"),
            }),
        }
    }
}
