//! Deterministic numeric and JSON formatting for file and console output.

use serde::Serialize;
use serde_json::Value;

use crate::error::Result;

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Fixed six-decimal rendering. Exact binary ties round half to even (this is
/// what `core::fmt` does for exactly representable midpoints); negative zero
/// prints as `0.000000`.
pub fn fmt6(x: f64) -> String {
    let s = format!("{x:.6}");
    if s.starts_with('-') && s[1..].bytes().all(|b| b == b'0' || b == b'.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// Rounds to six decimals through the same path as [`fmt6`].
pub fn round6(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    fmt6(x).parse().unwrap_or(x)
}

fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64() {
                if let Some(r) = serde_json::Number::from_f64(round6(x)) {
                    *n = r;
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

/// Pretty JSON with lexicographically sorted keys and floats rounded to six
/// decimals.
pub fn to_stable_json<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value)?;
    round_floats(&mut v);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

/// Header block stamped into every JSON artifact.
#[derive(Debug, Clone, Serialize)]
pub struct Header {
    pub tool: &'static str,
    pub version: &'static str,
    pub seed: Option<u64>,
}

impl Header {
    pub fn new(seed: Option<u64>) -> Self {
        Header {
            tool: TOOL_NAME,
            version: TOOL_VERSION,
            seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_decimals_half_even() {
        assert_eq!(fmt6(1.5849625007211563), "1.584963");
        assert_eq!(fmt6(1.0), "1.000000");
        // 1/128 and 3/128 are exact binary midpoints at the 7th decimal.
        assert_eq!(fmt6(0.0078125), "0.007812");
        assert_eq!(fmt6(0.0234375), "0.023438");
        assert_eq!(fmt6(-1e-9), "0.000000");
        assert_eq!(fmt6(-0.5), "-0.500000");
    }

    #[test]
    fn stable_json_sorts_keys() {
        #[derive(Serialize)]
        struct S {
            zeta: f64,
            alpha: u32,
        }
        let s = to_stable_json(&S {
            zeta: 0.123456789,
            alpha: 1,
        })
        .unwrap();
        assert!(s.find("alpha").unwrap() < s.find("zeta").unwrap());
        assert!(s.contains("0.123457"));
    }
}
