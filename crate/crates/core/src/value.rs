//! Ground values stored in relations and produced by evaluation.
//!
//! Values carry a total order by (type tag, then value) so they can key maps
//! and give reproducible iteration. Integers are arbitrary precision: the
//! common case stays in an `i64` and spills into a big integer on overflow.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};

/// A ground value.
#[derive(Clone, Debug)]
pub enum Value {
    Int(i64),
    /// Only used for integers outside the `i64` range.
    BigInt(Arc<BigInt>),
    Float(f64),
    /// Symbolic constant: bare lowercase identifiers and quoted strings.
    Sym(Arc<str>),
    Compound(Arc<Compound>),
}

/// A ground compound value. An empty functor denotes a tuple `(a, b)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Compound {
    pub functor: Arc<str>,
    pub args: Vec<Value>,
}

impl Value {
    pub fn sym(s: &str) -> Value {
        Value::Sym(Arc::from(s))
    }

    pub fn int(i: i64) -> Value {
        Value::Int(i)
    }

    pub fn compound(functor: &str, args: Vec<Value>) -> Value {
        Value::Compound(Arc::new(Compound { functor: Arc::from(functor), args }))
    }

    pub fn tuple(args: Vec<Value>) -> Value {
        Value::compound("", args)
    }

    pub fn from_bigint(b: BigInt) -> Value {
        match b.to_i64() {
            Some(i) => Value::Int(i),
            None => Value::BigInt(Arc::new(b)),
        }
    }

    pub fn is_number(&self) -> bool {
        matches!(self, Value::Int(_) | Value::BigInt(_) | Value::Float(_))
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::BigInt(b) => b.to_f64(),
            Value::Float(f) => Some(*f),
            _ => None,
        }
    }

    pub fn as_sym(&self) -> Option<&str> {
        match self {
            Value::Sym(s) => Some(s),
            _ => None,
        }
    }

    fn tag(&self) -> u8 {
        match self {
            Value::Int(_) | Value::BigInt(_) => 0,
            Value::Float(_) => 1,
            Value::Sym(_) => 2,
            Value::Compound(_) => 3,
        }
    }

    fn to_bigint(&self) -> Option<BigInt> {
        match self {
            Value::Int(i) => Some(BigInt::from(*i)),
            Value::BigInt(b) => Some((**b).clone()),
            _ => None,
        }
    }

    /// Comparison used by comparison literals: numbers compare by value across
    /// int/float, everything else by the structural total order.
    pub fn compare(&self, other: &Value) -> Ordering {
        if self.is_number() && other.is_number() {
            if let (Some(a), Some(b)) = (self.as_i64(), other.as_i64()) {
                return a.cmp(&b);
            }
            if matches!(self, Value::Float(_)) || matches!(other, Value::Float(_)) {
                let (a, b) = (self.as_f64().unwrap_or(0.0), other.as_f64().unwrap_or(0.0));
                return a.total_cmp(&b);
            }
            return self.to_bigint().cmp(&other.to_bigint());
        }
        self.cmp(other)
    }

    /// Equality used by `=` and `!=` literals (numeric promotion).
    pub fn equals(&self, other: &Value) -> bool {
        self.compare(other) == Ordering::Equal
    }

    pub fn add(&self, other: &Value) -> Option<Value> {
        self.arith(other, i64::checked_add, |a, b| a + b, |a, b| a + b)
    }

    pub fn sub(&self, other: &Value) -> Option<Value> {
        self.arith(other, i64::checked_sub, |a, b| a - b, |a, b| a - b)
    }

    pub fn mul(&self, other: &Value) -> Option<Value> {
        self.arith(other, i64::checked_mul, |a, b| a * b, |a, b| a * b)
    }

    /// Division always yields a float.
    pub fn div(&self, other: &Value) -> Option<Value> {
        let (a, b) = (self.as_f64()?, other.as_f64()?);
        if b == 0.0 {
            return None;
        }
        Some(Value::Float(a / b))
    }

    /// Integer modulus with a non-negative result for positive divisors.
    pub fn modulo(&self, other: &Value) -> Option<Value> {
        let (a, b) = (self.to_bigint()?, other.to_bigint()?);
        if b.is_zero() {
            return None;
        }
        let mut r = &a % &b;
        if r.is_negative() {
            r += b.abs();
        }
        Some(Value::from_bigint(r))
    }

    pub fn neg(&self) -> Option<Value> {
        match self {
            Value::Int(i) => Some(match i.checked_neg() {
                Some(n) => Value::Int(n),
                None => Value::from_bigint(-BigInt::from(*i)),
            }),
            Value::BigInt(b) => Some(Value::from_bigint(-(**b).clone())),
            Value::Float(f) => Some(Value::Float(-f)),
            _ => None,
        }
    }

    fn arith(
        &self,
        other: &Value,
        small: fn(i64, i64) -> Option<i64>,
        big: fn(BigInt, BigInt) -> BigInt,
        float: fn(f64, f64) -> f64,
    ) -> Option<Value> {
        if !self.is_number() || !other.is_number() {
            return None;
        }
        if matches!(self, Value::Float(_)) || matches!(other, Value::Float(_)) {
            return Some(Value::Float(float(self.as_f64()?, other.as_f64()?)));
        }
        if let (Some(a), Some(b)) = (self.as_i64(), other.as_i64()) {
            if let Some(r) = small(a, b) {
                return Some(Value::Int(r));
            }
        }
        Some(Value::from_bigint(big(self.to_bigint()?, other.to_bigint()?)))
    }
}

fn canonical_bits(f: f64) -> u64 {
    if f == 0.0 {
        0
    } else if f.is_nan() {
        f64::NAN.to_bits()
    } else {
        f.to_bits()
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Value {}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.tag().hash(state);
        match self {
            Value::Int(i) => i.hash(state),
            Value::BigInt(b) => b.hash(state),
            Value::Float(f) => canonical_bits(*f).hash(state),
            Value::Sym(s) => s.hash(state),
            Value::Compound(c) => c.hash(state),
        }
    }
}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match self.tag().cmp(&other.tag()) {
            Ordering::Equal => {}
            o => return o,
        }
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a.cmp(b),
            (Value::Float(a), Value::Float(b)) => {
                f64::from_bits(canonical_bits(*a)).total_cmp(&f64::from_bits(canonical_bits(*b)))
            }
            (Value::Sym(a), Value::Sym(b)) => a.cmp(b),
            (Value::Compound(a), Value::Compound(b)) => a.cmp(b),
            (a, b) => a.to_bigint().cmp(&b.to_bigint()),
        }
    }
}

impl From<i64> for Value {
    fn from(i: i64) -> Self {
        Value::Int(i)
    }
}

impl From<f64> for Value {
    fn from(f: f64) -> Self {
        Value::Float(f)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::sym(s)
    }
}

/// True when `s` can be written without quotes.
pub(crate) fn is_bare_symbol(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() => {}
        _ => return false,
    }
    s != "mod" && s != "choice" && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub(crate) fn write_symbol(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    if is_bare_symbol(s) {
        f.write_str(s)
    } else {
        f.write_str("'")?;
        for c in s.chars() {
            match c {
                '\'' => f.write_str("\\'")?,
                '\\' => f.write_str("\\\\")?,
                '\n' => f.write_str("\\n")?,
                c => write!(f, "{c}")?,
            }
        }
        f.write_str("'")
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::BigInt(b) => write!(f, "{b}"),
            Value::Float(x) => {
                if x.is_finite() && x.fract() == 0.0 && x.abs() < 1e15 {
                    write!(f, "{x:.1}")
                } else {
                    write!(f, "{x}")
                }
            }
            Value::Sym(s) => write_symbol(f, s),
            Value::Compound(c) => {
                if !c.functor.is_empty() {
                    write_symbol(f, &c.functor)?;
                }
                f.write_str("(")?;
                for (i, a) in c.args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overflow_promotes_to_bigint() {
        let v = Value::Int(i64::MAX).add(&Value::Int(1)).unwrap();
        assert!(matches!(v, Value::BigInt(_)));
        let back = v.sub(&Value::Int(1)).unwrap();
        assert_eq!(back, Value::Int(i64::MAX));
    }

    #[test]
    fn mixed_numeric_comparison() {
        assert!(Value::Int(2).equals(&Value::Float(2.0)));
        assert_eq!(Value::Int(3).compare(&Value::Float(2.5)), Ordering::Greater);
        // Structural order keeps the two distinct as keys.
        assert_ne!(Value::Int(2), Value::Float(2.0));
    }

    #[test]
    fn division_is_float_and_mod_is_euclidean() {
        assert_eq!(Value::Int(7).div(&Value::Int(2)), Some(Value::Float(3.5)));
        assert_eq!(Value::Int(-7).modulo(&Value::Int(3)), Some(Value::Int(2)));
        assert_eq!(Value::sym("nil").add(&Value::Int(1)), None);
    }

    #[test]
    fn display_quotes_non_identifiers() {
        assert_eq!(Value::sym("Jim Black").to_string(), "'Jim Black'");
        assert_eq!(Value::sym("ohm").to_string(), "ohm");
        let t = Value::tuple(vec![Value::Int(1), Value::Int(8)]);
        assert_eq!(t.to_string(), "(1, 8)");
        assert_eq!(Value::Float(2.0).to_string(), "2.0");
    }
}
