//! Exact fixed-point money in micro-units.

use core::fmt;
use core::iter::Sum;
use core::ops::{Add, AddAssign, Neg, Sub, SubAssign};
use core::str::FromStr;

/// Micro-units per whole unit.
pub const SCALE: i64 = 1_000_000;

/// Signed amount of money stored as an integer count of 10^-6 units.
///
/// Buyer values and payments are non-negative, seller values and payments
/// non-positive. All comparisons are exact.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Money(i64);

impl Money {
    pub const ZERO: Money = Money(0);
    pub const ONE: Money = Money(SCALE);

    pub const fn from_micros(micros: i64) -> Self {
        Money(micros)
    }

    pub const fn micros(self) -> i64 {
        self.0
    }

    pub const fn from_units(units: i64) -> Self {
        Money(units * SCALE)
    }

    /// Nearest micro-unit to `value`.
    pub fn from_f64(value: f64) -> Self {
        Money(libm::round(value * SCALE as f64) as i64)
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / SCALE as f64
    }

    pub fn abs(self) -> Self {
        Money(self.0.abs())
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }

    /// Half of the amount, rounded toward negative infinity.
    pub fn half(self) -> Self {
        Money(self.0.div_euclid(2))
    }

    /// Mean of a non-empty set of amounts, rounded to the nearest micro-unit
    /// (ties away from zero).
    pub fn mean(total: Money, count: usize) -> Self {
        debug_assert!(count > 0);
        Money(div_round(total.0 as i128, count as i128) as i64)
    }

    /// `weight * self + (1 - weight) * other`, rounded to the nearest micro-unit.
    pub fn blend(self, other: Money, weight: Fraction) -> Money {
        let w = weight.0 as i128;
        let num = w * self.0 as i128 + (SCALE as i128 - w) * other.0 as i128;
        Money(div_round(num, SCALE as i128) as i64)
    }
}

fn div_round(num: i128, den: i128) -> i128 {
    let q = num / den;
    let r = num % den;
    if 2 * r.abs() >= den.abs() {
        q + num.signum() * den.signum()
    } else {
        q
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl Neg for Money {
    type Output = Money;
    fn neg(self) -> Money {
        Money(-self.0)
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl SubAssign for Money {
    fn sub_assign(&mut self, rhs: Money) {
        self.0 -= rhs.0;
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, Add::add)
    }
}

impl<'a> Sum<&'a Money> for Money {
    fn sum<I: Iterator<Item = &'a Money>>(iter: I) -> Money {
        iter.copied().sum()
    }
}

/// Fixed 6-decimal rendering, e.g. `-1.250000`.
impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(
            f,
            "{}{}.{:06}",
            sign,
            abs / SCALE as u64,
            abs % SCALE as u64
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ParseMoneyError {
    #[error("empty amount")]
    Empty,
    #[error("invalid amount `{0}`")]
    Invalid(alloc::string::String),
    #[error("amount `{0}` has more than 6 fractional digits")]
    TooPrecise(alloc::string::String),
    #[error("amount `{0}` out of range")]
    Overflow(alloc::string::String),
}

impl FromStr for Money {
    type Err = ParseMoneyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        use alloc::string::ToString;
        let s = s.trim();
        if s.is_empty() {
            return Err(ParseMoneyError::Empty);
        }
        let invalid = || ParseMoneyError::Invalid(s.to_string());
        let (negative, body) = match s.as_bytes()[0] {
            b'-' => (true, &s[1..]),
            b'+' => (false, &s[1..]),
            _ => (false, s),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(invalid());
        }
        if !int_part.bytes().all(|b| b.is_ascii_digit())
            || !frac_part.bytes().all(|b| b.is_ascii_digit())
        {
            return Err(invalid());
        }
        if frac_part.len() > 6 {
            return Err(ParseMoneyError::TooPrecise(s.to_string()));
        }
        let overflow = || ParseMoneyError::Overflow(s.to_string());
        let whole: i64 = if int_part.is_empty() {
            0
        } else {
            int_part.parse().map_err(|_| overflow())?
        };
        let mut frac: i64 = 0;
        for (k, b) in frac_part.bytes().enumerate() {
            frac += (b - b'0') as i64 * 10i64.pow(5 - k as u32);
        }
        let micros = whole
            .checked_mul(SCALE)
            .and_then(|w| w.checked_add(frac))
            .ok_or_else(overflow)?;
        Ok(Money(if negative { -micros } else { micros }))
    }
}

/// A weight in `[0, 1]` at the same 10^-6 resolution as [`Money`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fraction(i64);

impl Fraction {
    pub const ZERO: Fraction = Fraction(0);
    pub const ONE: Fraction = Fraction(SCALE);

    /// Returns `None` outside `[0, 1]`.
    pub fn new(micros: i64) -> Option<Self> {
        (0..=SCALE).contains(&micros).then_some(Fraction(micros))
    }

    pub fn from_f64(value: f64) -> Option<Self> {
        if !value.is_finite() {
            return None;
        }
        Fraction::new(libm::round(value * SCALE as f64) as i64)
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / SCALE as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    #[test]
    fn parse_and_display() {
        assert_eq!("6".parse::<Money>().unwrap(), Money::from_units(6));
        assert_eq!(
            "-1.25".parse::<Money>().unwrap(),
            Money::from_micros(-1_250_000)
        );
        assert_eq!("0.000001".parse::<Money>().unwrap(), Money::from_micros(1));
        assert_eq!(".5".parse::<Money>().unwrap(), Money::from_micros(500_000));
        assert_eq!(Money::from_micros(-1_250_000).to_string(), "-1.250000");
        assert_eq!(Money::from_micros(-5).to_string(), "-0.000005");
        assert_eq!(Money::ZERO.to_string(), "0.000000");
    }

    #[test]
    fn parse_errors() {
        assert_eq!("".parse::<Money>(), Err(ParseMoneyError::Empty));
        assert!(matches!(
            "1.0000001".parse::<Money>(),
            Err(ParseMoneyError::TooPrecise(_))
        ));
        assert!(matches!(
            "1e3".parse::<Money>(),
            Err(ParseMoneyError::Invalid(_))
        ));
        assert!(matches!(
            "-".parse::<Money>(),
            Err(ParseMoneyError::Invalid(_))
        ));
        assert!(matches!(
            "99999999999999999".parse::<Money>(),
            Err(ParseMoneyError::Overflow(_))
        ));
    }

    #[test]
    fn blend_and_half() {
        let quarter = Fraction::from_f64(0.25).unwrap();
        assert_eq!(
            Money::from_units(2).blend(Money::ONE, quarter),
            Money::from_micros(1_250_000)
        );
        assert_eq!(Money::from_micros(3).half(), Money::from_micros(1));
        assert_eq!(Money::from_micros(-3).half(), Money::from_micros(-2));
        assert_eq!(Money::mean(Money::from_units(18), 3), Money::from_units(6));
        assert!(Fraction::from_f64(1.5).is_none());
    }

    proptest::proptest! {
        #[test]
        fn display_roundtrip(micros in -1_000_000_000_000i64..1_000_000_000_000) {
            let m = Money::from_micros(micros);
            proptest::prop_assert_eq!(m.to_string().parse::<Money>().unwrap(), m);
        }
    }
}
