//! Numeric command-line parameters: `p/q`, integers and plain decimals are kept
//! as exact rationals alongside their `f64` value.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: f64,
    pub exact: Option<BigRational>,
    text: String,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ParamError {
    #[error("cannot parse {0:?} as a number")]
    Syntax(String),
    #[error("zero denominator in {0:?}")]
    ZeroDenominator(String),
}

impl Param {
    pub fn from_f64(v: f64) -> Param {
        Param { value: v, exact: None, text: format!("{v}") }
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

fn int(s: &str, whole: &str) -> Result<BigInt, ParamError> {
    let ok = !s.is_empty() && s.strip_prefix('-').unwrap_or(s).bytes().all(|b| b.is_ascii_digit());
    if !ok {
        return Err(ParamError::Syntax(whole.to_string()));
    }
    s.parse().map_err(|_| ParamError::Syntax(whole.to_string()))
}

fn decimal(s: &str) -> Result<BigRational, ParamError> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, s),
    };
    let (ip, fp) = body.split_once('.').unwrap_or((body, ""));
    if ip.is_empty() && fp.is_empty() {
        return Err(ParamError::Syntax(s.to_string()));
    }
    let digits = format!("{}{}", if ip.is_empty() { "0" } else { ip }, fp);
    let mut n = int(&digits, s)?;
    if neg {
        n = -n;
    }
    Ok(BigRational::new(n, BigInt::from(10u32).pow(fp.len() as u32)))
}

impl FromStr for Param {
    type Err = ParamError;

    fn from_str(raw: &str) -> Result<Self, ParamError> {
        let s = raw.trim();
        let text = s.to_string();
        if let Some((p, q)) = s.split_once('/') {
            let (p, q) = (int(p.trim(), s)?, int(q.trim(), s)?);
            if q == BigInt::from(0) {
                return Err(ParamError::ZeroDenominator(text));
            }
            let r = BigRational::new(p, q);
            let value = ratio_f64(&r);
            return Ok(Param { value, exact: Some(r), text });
        }
        if s.contains(['e', 'E']) || s.eq_ignore_ascii_case("nan") || s.contains("inf") {
            let value: f64 = s.parse().map_err(|_| ParamError::Syntax(text.clone()))?;
            if !value.is_finite() {
                return Err(ParamError::Syntax(text));
            }
            return Ok(Param { value, exact: None, text });
        }
        let r = decimal(s)?;
        let value: f64 = s.parse().map_err(|_| ParamError::Syntax(text.clone()))?;
        Ok(Param { value, exact: Some(r), text })
    }
}

fn ratio_f64(r: &BigRational) -> f64 {
    use sixv_core::scalar::Scalar;
    r.to_f64()
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl serde::Serialize for Param {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sixv_core::scalar::rat;

    #[test]
    fn ratio_and_decimal() {
        let p: Param = "1/4".parse().unwrap();
        assert_eq!(p.value, 0.25);
        assert_eq!(p.exact, Some(rat(1, 4)));
        let p: Param = "0.7".parse().unwrap();
        assert_eq!(p.exact, Some(rat(7, 10)));
        assert_eq!(p.value, 0.7);
        let p: Param = "-.5".parse().unwrap();
        assert_eq!(p.exact, Some(rat(-1, 2)));
        let p: Param = "3".parse().unwrap();
        assert_eq!(p.exact, Some(rat(3, 1)));
        let p: Param = "1e-3".parse().unwrap();
        assert_eq!((p.value, p.exact), (1e-3, None));
    }

    #[test]
    fn rejects_garbage() {
        assert!("1/0".parse::<Param>().is_err());
        assert!("abc".parse::<Param>().is_err());
        assert!("1/2/3".parse::<Param>().is_err());
        assert!(".".parse::<Param>().is_err());
        assert!("inf".parse::<Param>().is_err());
    }
}
