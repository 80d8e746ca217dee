//! Concrete values for LIA / BV / Bool evaluation.
//!
//! Integers are arbitrary precision. Values that fit in an `i64` stay in the
//! `Small` representation so the enumerator's hot loop does not allocate.

use alloc::string::String;
use core::cmp::Ordering;
use core::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, ToPrimitive};

/// Arbitrary-precision integer, normalized so `Big` never holds an `i64`-sized value.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Int {
    Small(i64),
    Big(BigInt),
}

impl Int {
    pub fn zero() -> Self {
        Int::Small(0)
    }

    fn from_big(b: BigInt) -> Self {
        match b.to_i64() {
            Some(v) => Int::Small(v),
            None => Int::Big(b),
        }
    }

    pub fn to_big(&self) -> BigInt {
        match self {
            Int::Small(v) => BigInt::from(*v),
            Int::Big(b) => b.clone(),
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Int::Small(v) => Some(*v),
            Int::Big(_) => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Int::Small(0))
    }

    pub fn is_negative(&self) -> bool {
        match self {
            Int::Small(v) => *v < 0,
            Int::Big(b) => b.is_negative(),
        }
    }

    pub fn parse_decimal(digits: &str) -> Option<Self> {
        if let Ok(v) = digits.parse::<i64>() {
            return Some(Int::Small(v));
        }
        BigInt::parse_bytes(digits.as_bytes(), 10).map(Int::from_big)
    }

    pub fn add(&self, other: &Int) -> Int {
        if let (Int::Small(a), Int::Small(b)) = (self, other) {
            if let Some(v) = a.checked_add(*b) {
                return Int::Small(v);
            }
        }
        Int::from_big(self.to_big() + other.to_big())
    }

    pub fn sub(&self, other: &Int) -> Int {
        if let (Int::Small(a), Int::Small(b)) = (self, other) {
            if let Some(v) = a.checked_sub(*b) {
                return Int::Small(v);
            }
        }
        Int::from_big(self.to_big() - other.to_big())
    }

    pub fn mul(&self, other: &Int) -> Int {
        if let (Int::Small(a), Int::Small(b)) = (self, other) {
            if let Some(v) = a.checked_mul(*b) {
                return Int::Small(v);
            }
        }
        Int::from_big(self.to_big() * other.to_big())
    }

    pub fn neg(&self) -> Int {
        if let Int::Small(a) = self {
            if let Some(v) = a.checked_neg() {
                return Int::Small(v);
            }
        }
        Int::from_big(-self.to_big())
    }

    pub fn abs(&self) -> Int {
        if self.is_negative() {
            self.neg()
        } else {
            self.clone()
        }
    }

    /// SMT-LIB `div`: the quotient `q` such that `a = b*q + r` with `0 <= r < |b|`.
    /// `None` when `b` is zero.
    pub fn div_euclid(&self, other: &Int) -> Option<Int> {
        if other.is_zero() {
            return None;
        }
        if let (Int::Small(a), Int::Small(b)) = (self, other) {
            if let Some(v) = a.checked_div_euclid(*b) {
                return Some(Int::Small(v));
            }
        }
        let (a, b) = (self.to_big(), other.to_big());
        let r = a.mod_floor(&b.abs());
        Some(Int::from_big((a - r) / b))
    }

    /// SMT-LIB `mod`: the remainder in `[0, |b|)`. `None` when `b` is zero.
    pub fn rem_euclid(&self, other: &Int) -> Option<Int> {
        if other.is_zero() {
            return None;
        }
        if let (Int::Small(a), Int::Small(b)) = (self, other) {
            if let Some(v) = a.checked_rem_euclid(*b) {
                return Some(Int::Small(v));
            }
        }
        let (a, b) = (self.to_big(), other.to_big());
        Some(Int::from_big(a.mod_floor(&b.abs())))
    }
}

impl From<i64> for Int {
    fn from(v: i64) -> Self {
        Int::Small(v)
    }
}

impl Ord for Int {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Int::Small(a), Int::Small(b)) => a.cmp(b),
            _ => self.to_big().cmp(&other.to_big()),
        }
    }
}

impl PartialOrd for Int {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Int {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Int::Small(v) => write!(f, "{}", v),
            Int::Big(b) => write!(f, "{}", b),
        }
    }
}

/// Mask for a bitvector of `width` bits (1..=64).
pub fn bv_mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

/// A concrete value. `Undefined` is produced by division by zero and
/// propagates through every operator except a non-selected `ite` branch.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Value {
    Int(Int),
    Bool(bool),
    BitVec { bits: u64, width: u32 },
    Undefined,
}

impl Value {
    pub fn int(v: i64) -> Self {
        Value::Int(Int::Small(v))
    }

    pub fn bv(bits: u64, width: u32) -> Self {
        Value::BitVec {
            bits: bits & bv_mask(width),
            width,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<&Int> {
        match self {
            Value::Int(i) => Some(i),
            _ => None,
        }
    }

    /// SMT-LIB literal text, e.g. `(- 3)`, `#b0101`, `true`.
    pub fn to_smtlib(&self) -> String {
        use alloc::format;
        match self {
            Value::Int(i) if i.is_negative() => format!("(- {})", i.abs()),
            Value::Int(i) => format!("{}", i),
            Value::Bool(b) => format!("{}", b),
            Value::BitVec { bits, width } => bv_literal(*bits, *width),
            Value::Undefined => String::from("undefined"),
        }
    }
}

/// Prints a bitvector literal: hex when the width is a multiple of 4, binary otherwise.
pub fn bv_literal(bits: u64, width: u32) -> String {
    use alloc::format;
    if width.is_multiple_of(4) {
        format!("#x{:0w$x}", bits, w = (width / 4) as usize)
    } else {
        format!("#b{:0w$b}", bits, w = width as usize)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{}", i),
            Value::Bool(b) => write!(f, "{}", b),
            Value::BitVec { bits, width } => f.write_str(&bv_literal(*bits, *width)),
            Value::Undefined => f.write_str("undefined"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overflow_promotes_to_big() {
        let a = Int::Small(i64::MAX);
        let b = a.add(&Int::Small(1));
        assert!(matches!(b, Int::Big(_)));
        assert_eq!(b.sub(&Int::Small(1)), Int::Small(i64::MAX));
    }

    #[test]
    fn euclidean_division_matches_smtlib() {
        let cases = [(7, 2, 3, 1), (-7, 2, -4, 1), (7, -2, -3, 1), (-7, -2, 4, 1)];
        for (a, b, q, r) in cases {
            let (a, b) = (Int::Small(a), Int::Small(b));
            assert_eq!(a.div_euclid(&b), Some(Int::Small(q)));
            assert_eq!(a.rem_euclid(&b), Some(Int::Small(r)));
        }
        assert_eq!(Int::Small(3).div_euclid(&Int::zero()), None);
    }

    #[test]
    fn big_division_agrees_with_small_path() {
        let big = Int::Small(i64::MIN).mul(&Int::Small(4));
        let q = big.div_euclid(&Int::Small(-3)).unwrap();
        let r = big.rem_euclid(&Int::Small(-3)).unwrap();
        assert_eq!(q.mul(&Int::Small(-3)).add(&r), big);
        assert!(!r.is_negative());
    }

    #[test]
    fn literal_printing() {
        assert_eq!(Value::int(-3).to_smtlib(), "(- 3)");
        assert_eq!(Value::bv(5, 4).to_smtlib(), "#x5");
        assert_eq!(Value::bv(5, 3).to_smtlib(), "#b101");
    }
}
