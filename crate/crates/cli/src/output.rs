//! Deterministic text formatting for CSV cells.

/// Shortest round-trip decimal form, switching to exponent notation far
/// from unity.
pub fn fmt_num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e7).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

/// Makes free text safe for a single unquoted CSV cell.
pub fn csv_field(text: &str) -> String {
    text.chars()
        .map(|c| match c {
            ',' => ';',
            '\n' | '\r' | '"' => ' ',
            other => other,
        })
        .collect()
}
