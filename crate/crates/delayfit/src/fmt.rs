//! Number formatting for CSV and text outputs.
//!
//! Values are written with the shortest decimal representation that parses
//! back to the identical `f64` (never more than 17 significant digits).

pub fn num(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && !(1e-5..1e16).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

/// Fixed-width rendering for human-readable tables.
pub fn short(x: f64) -> String {
    format!("{x:.4}")
}
