//! Flat `key = value` parameter files.
//!
//! ```text
//! # baseline operating point, GHz
//! frequency_convention = cycles
//! omega_h = 13.5
//! omega_c = 3.0
//! E_J = 0.3
//! lambda_h = pi/4
//! lambda_c = pi/4
//! kappa_h = 0.15
//! kappa_c = 0.15
//! n_h = 1.5
//! n_c = 0
//! ```
//!
//! Values are plain numbers or products/quotients involving `pi`
//! (`pi/4`, `2*pi`, `0.5*pi/3`).

use std::collections::BTreeMap;
use std::f64::consts::PI;

use super::{EngineParams, FrequencyConvention};
use crate::error::{EngineError, Result};

pub const CONFIG_KEYS: [&str; 10] = [
    "omega_h",
    "omega_c",
    "E_J",
    "lambda_h",
    "lambda_c",
    "kappa_h",
    "kappa_c",
    "n_h",
    "n_c",
    "frequency_convention",
];

/// Parses and validates a config. Frequency-like keys (ω, E_J, κ) are
/// multiplied by 2π under the `cycles` convention.
pub fn load_params(text: &str) -> Result<EngineParams> {
    let mut raw: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(EngineError::Parse {
                line: line_no,
                message: format!("expected `key = value`, got `{content}`"),
            });
        };
        let key = key.trim();
        let value = value.trim();
        if !CONFIG_KEYS.contains(&key) {
            return Err(EngineError::Parse {
                line: line_no,
                message: format!("unknown field `{key}`"),
            });
        }
        if value.is_empty() {
            return Err(EngineError::Parse {
                line: line_no,
                message: format!("field `{key}` has no value"),
            });
        }
        if raw.insert(key, (line_no, value)).is_some() {
            return Err(EngineError::Parse {
                line: line_no,
                message: format!("duplicate field `{key}`"),
            });
        }
    }

    let field = |key: &str| raw.get(key).copied().ok_or_else(|| EngineError::MissingField(key.into()));
    let number = |key: &str| -> Result<f64> {
        let (line, value) = field(key)?;
        parse_value(value).map_err(|message| EngineError::Parse {
            line,
            message: format!("field `{key}`: {message}"),
        })
    };

    let convention: FrequencyConvention = field("frequency_convention")?.1.parse()?;
    let scale = convention.to_angular();
    let params = EngineParams {
        omega_h: scale * number("omega_h")?,
        omega_c: scale * number("omega_c")?,
        e_j: scale * number("E_J")?,
        lambda_h: number("lambda_h")?,
        lambda_c: number("lambda_c")?,
        kappa_h: scale * number("kappa_h")?,
        kappa_c: scale * number("kappa_c")?,
        n_h: number("n_h")?,
        n_c: number("n_c")?,
        frequency_convention: convention,
    };
    params.validate()?;
    Ok(params)
}

/// Evaluates `a*b/c...` where each factor is a float literal or `pi`.
pub fn parse_value(text: &str) -> std::result::Result<f64, String> {
    let mut acc = 1.0;
    let mut op = '*';
    let mut token = String::new();
    let flush = |token: &str, op: char, acc: &mut f64| -> std::result::Result<(), String> {
        let t = token.trim();
        let v = match t {
            "pi" | "PI" | "π" => PI,
            "" => return Err(format!("malformed number `{text}`")),
            _ => t.parse::<f64>().map_err(|_| format!("malformed number `{t}`"))?,
        };
        if op == '*' {
            *acc *= v;
        } else {
            *acc /= v;
        }
        Ok(())
    };
    for ch in text.chars() {
        if ch == '*' || ch == '/' {
            flush(&token, op, &mut acc)?;
            token.clear();
            op = ch;
        } else {
            token.push(ch);
        }
    }
    flush(&token, op, &mut acc)?;
    if !acc.is_finite() {
        return Err(format!("value `{text}` is not finite"));
    }
    Ok(acc)
}
