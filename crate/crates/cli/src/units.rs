//! Flag values with unit suffixes, converted to SI.

use std::str::FromStr;

fn split_suffix<'a>(s: &'a str, suffixes: &[&'a str]) -> (&'a str, Option<&'a str>) {
    let t = s.trim();
    for suf in suffixes {
        if let Some(num) = t.strip_suffix(suf) {
            return (num.trim_end(), Some(suf));
        }
    }
    (t, None)
}

fn number(s: &str, what: &str) -> Result<f64, String> {
    let x = f64::from_str(s).map_err(|_| format!("`{s}` is not a number"))?;
    if !x.is_finite() {
        return Err(format!("{what} must be finite"));
    }
    Ok(x)
}

/// Speed in m/s. Accepts `50kmh`, `13.9ms` or a bare number in m/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Speed(pub f64);

impl FromStr for Speed {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (num, suf) = split_suffix(s, &["kmh", "km/h", "ms", "m/s"]);
        let x = number(num, "speed")?;
        Ok(Speed(match suf {
            Some("kmh") | Some("km/h") => x / 3.6,
            _ => x,
        }))
    }
}

/// Flow in vehicles per second. Accepts `1500vph`, `0.4vps` or a bare number
/// in vehicles per second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flow(pub f64);

impl FromStr for Flow {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (num, suf) = split_suffix(s, &["vph", "vps"]);
        let x = number(num, "flow")?;
        Ok(Flow(if suf == Some("vph") { x / 3600.0 } else { x }))
    }
}

/// Clearance-time model: `linear` or `fixed:SECONDS`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TctArg {
    Linear,
    Fixed(f64),
}

impl FromStr for TctArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "linear" => Ok(TctArg::Linear),
            other => match other.strip_prefix("fixed:") {
                Some(secs) => {
                    let (num, _) = split_suffix(secs, &["s"]);
                    let x = number(num, "clearance time")?;
                    if x <= 0.0 {
                        return Err("fixed clearance time must be > 0".into());
                    }
                    Ok(TctArg::Fixed(x))
                }
                None => Err(format!("expected `linear` or `fixed:SECONDS`, got `{other}`")),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn speeds() {
        assert!((Speed::from_str("50kmh").unwrap().0 - 13.888_888_888_888_89).abs() < 1e-12);
        assert_eq!(Speed::from_str("12.5ms").unwrap().0, 12.5);
        assert_eq!(Speed::from_str("7").unwrap().0, 7.0);
        assert!(Speed::from_str("fast").is_err());
        assert!(Speed::from_str("infkmh").is_err());
    }

    #[test]
    fn flows() {
        assert!((Flow::from_str("1500vph").unwrap().0 - 1500.0 / 3600.0).abs() < 1e-15);
        assert_eq!(Flow::from_str("0.5").unwrap().0, 0.5);
    }

    #[test]
    fn tct() {
        assert_eq!(TctArg::from_str("linear").unwrap(), TctArg::Linear);
        assert_eq!(TctArg::from_str("fixed:2700").unwrap(), TctArg::Fixed(2700.0));
        assert!(TctArg::from_str("fixed:-1").is_err());
        assert!(TctArg::from_str("cubic").is_err());
    }
}
