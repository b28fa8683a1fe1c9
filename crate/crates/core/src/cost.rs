//! Exact non-negative action costs.
//!
//! Costs are rationals so that plan totals and proposal comparisons are exact.
//! On the wire a cost is a string: `"3"` or `"7/2"`.

use std::fmt;
use std::iter::Sum;
use std::ops::Add;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::Zero;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Cost(Ratio<u64>);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid cost literal `{0}`")]
pub struct CostParseError(pub String);

impl Cost {
    pub const ZERO: Cost = Cost(Ratio::new_raw(0, 1));
    pub const ONE: Cost = Cost(Ratio::new_raw(1, 1));

    pub fn integer(n: u64) -> Self {
        Cost(Ratio::from_integer(n))
    }

    /// Panics when `denom` is zero.
    pub fn ratio(numer: u64, denom: u64) -> Self {
        Cost(Ratio::new(numer, denom))
    }

    pub fn numer(&self) -> u64 {
        *self.0.numer()
    }

    pub fn denom(&self) -> u64 {
        *self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn checked_add(self, other: Cost) -> Option<Cost> {
        let (a, b) = (self.0, other.0);
        let lcm = num_integer_lcm(*a.denom(), *b.denom())?;
        let lhs = a.numer().checked_mul(lcm / a.denom())?;
        let rhs = b.numer().checked_mul(lcm / b.denom())?;
        Some(Cost(Ratio::new(lhs.checked_add(rhs)?, lcm)))
    }

    /// Parses a decimal literal such as `2.25` exactly.
    pub fn from_decimal(text: &str) -> Result<Self, CostParseError> {
        let err = || CostParseError(text.to_string());
        let (int, frac) = match text.split_once('.') {
            Some((i, f)) => (i, f),
            None => (text, ""),
        };
        if int.is_empty() && frac.is_empty() {
            return Err(err());
        }
        if !int.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(err());
        }
        if frac.len() > 18 {
            return Err(err());
        }
        let denom = 10u64.pow(frac.len() as u32);
        let int_part: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| err())? };
        let frac_part: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| err())? };
        let numer = int_part
            .checked_mul(denom)
            .and_then(|n| n.checked_add(frac_part))
            .ok_or_else(err)?;
        Ok(Cost(Ratio::new(numer, denom)))
    }
}

fn num_integer_lcm(a: u64, b: u64) -> Option<u64> {
    fn gcd(mut a: u64, mut b: u64) -> u64 {
        while b != 0 {
            let t = a % b;
            a = b;
            b = t;
        }
        a
    }
    (a / gcd(a, b)).checked_mul(b)
}

impl Add for Cost {
    type Output = Cost;

    fn add(self, rhs: Cost) -> Cost {
        self.checked_add(rhs).expect("cost overflow")
    }
}

impl Sum for Cost {
    fn sum<I: Iterator<Item = Cost>>(iter: I) -> Cost {
        iter.fold(Cost::ZERO, |acc, c| acc + c)
    }
}

impl<'a> Sum<&'a Cost> for Cost {
    fn sum<I: Iterator<Item = &'a Cost>>(iter: I) -> Cost {
        iter.fold(Cost::ZERO, |acc, c| acc + *c)
    }
}

impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl FromStr for Cost {
    type Err = CostParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s.split_once('/') {
            Some((n, d)) => {
                let n: u64 = n.trim().parse().map_err(|_| CostParseError(s.to_string()))?;
                let d: u64 = d.trim().parse().map_err(|_| CostParseError(s.to_string()))?;
                if d == 0 {
                    return Err(CostParseError(s.to_string()));
                }
                Ok(Cost(Ratio::new(n, d)))
            }
            None if s.contains('.') => Cost::from_decimal(s),
            None => s
                .parse::<u64>()
                .map(Cost::integer)
                .map_err(|_| CostParseError(s.to_string())),
        }
    }
}

impl Serialize for Cost {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Cost {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}
