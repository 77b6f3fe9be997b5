//! Number rendering shared by reports and the command line.

use serde::{Deserialize, Deserializer};

/// Renders `x` with 6 significant digits.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    // Round first so the exponent reflects the rounded value.
    let rounded: f64 = format!("{x:.5e}").parse().expect("valid float");
    let exp = rounded.abs().log10().floor() as i32;
    if (-5..=6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        format!("{rounded:.decimals$}")
    } else {
        format!("{rounded:.5e}")
    }
}

/// Accepts either a TOML integer or float.
pub(crate) fn de_number<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Num {
        I(i64),
        F(f64),
    }
    Ok(match Num::deserialize(d)? {
        Num::I(i) => i as f64,
        Num::F(f) => f,
    })
}
