//! Exact computation on finite weighted bipartite relations: refinement
//! plans, convex divergences, parametric max-flow fit curves, level-optimal
//! maximin solving and verification, proportional-response pairing, and the
//! induced exchange-economy equilibrium.
//!
//! All structural arithmetic is exact (arbitrary-precision rationals);
//! floating point appears only in transcendental integrands and in the
//! descent-based reference oracle.

pub mod attainment;
pub mod divergence;
pub mod equilibrium;
pub mod error;
pub mod fileio;
pub mod flow;
pub mod lp;
pub mod maximin;
pub mod measure;
pub mod pairing;

pub use error::{Error, Result};
pub use measure::{AtomSpace, Instance, LebesgueSplit, Measure, Plan, Side};

/// Exact rational scalar used throughout the crate.
pub type Rational = num_rational::BigRational;

use num_bigint::BigInt;
use num_traits::{One, Zero};

/// Rational from an integer pair.
pub fn ratio(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

/// Rational from an integer.
pub fn int(num: i64) -> Rational {
    Rational::from_integer(BigInt::from(num))
}

/// Parses "p/q", plain integers, and decimal literals, all exactly.
pub fn parse_rational(text: &str) -> Result<Rational> {
    let s = text.trim();
    if s.is_empty() {
        return Err(Error::BadRational(text.to_string()));
    }
    if let Some((p, q)) = s.split_once('/') {
        let num: BigInt = p.trim().parse().map_err(|_| Error::BadRational(text.to_string()))?;
        let den: BigInt = q.trim().parse().map_err(|_| Error::BadRational(text.to_string()))?;
        if den.is_zero() {
            return Err(Error::BadRational(text.to_string()));
        }
        return Ok(Rational::new(num, den));
    }
    if let Some((whole, frac)) = s.split_once('.') {
        let sign = if whole.trim_start().starts_with('-') { -1 } else { 1 };
        let whole_part: BigInt = if whole.is_empty() || whole == "-" {
            BigInt::zero()
        } else {
            whole.parse().map_err(|_| Error::BadRational(text.to_string()))?
        };
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::BadRational(text.to_string()));
        }
        let frac_num: BigInt = frac.parse().map_err(|_| Error::BadRational(text.to_string()))?;
        let mut den = BigInt::one();
        for _ in 0..frac.len() {
            den *= 10;
        }
        let whole_rat = Rational::from_integer(whole_part);
        let frac_rat = Rational::new(frac_num, den);
        return Ok(if sign < 0 { whole_rat - frac_rat } else { whole_rat + frac_rat });
    }
    let num: BigInt = s.parse().map_err(|_| Error::BadRational(text.to_string()))?;
    Ok(Rational::from_integer(num))
}

/// Canonical display form: "p" for integers, "p/q" otherwise.
pub fn format_rational(value: &Rational) -> String {
    if value.is_integer() {
        value.numer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_rational_forms() {
        assert_eq!(parse_rational("3/4").unwrap(), ratio(3, 4));
        assert_eq!(parse_rational("2").unwrap(), int(2));
        assert_eq!(parse_rational("0.25").unwrap(), ratio(1, 4));
        assert_eq!(parse_rational("-1.5").unwrap(), ratio(-3, 2));
        assert_eq!(parse_rational("0.3").unwrap(), ratio(3, 10));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
    }

    #[test]
    fn format_round_trip() {
        for r in [ratio(3, 4), int(7), ratio(-5, 3), int(0)] {
            assert_eq!(parse_rational(&format_rational(&r)).unwrap(), r);
        }
    }
}
