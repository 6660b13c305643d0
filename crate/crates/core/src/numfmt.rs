//! Number parsing and canonical formatting for the plain-text data files.

/// Parses a real number, accepting Fortran-style `D` exponents (`1.0D-3`).
pub fn parse_real(token: &str) -> Option<f64> {
    let token = token.trim();
    if token.is_empty() {
        return None;
    }
    if token.contains(['d', 'D']) {
        token.replace(['d', 'D'], "E").parse().ok()
    } else {
        token.parse().ok()
    }
}

/// Formats a real with 17 significant digits in `E` notation, which is
/// enough for any `f64` to survive a write/parse cycle unchanged.
pub fn format_real(value: f64) -> String {
    format!("{:.16E}", value)
}
