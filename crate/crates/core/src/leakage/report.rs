use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::receiver::Grouping;
use crate::error::{Error, Result};
use crate::format::sig6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerBasis {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinnedLeakage {
    pub width_ps: f64,
    pub mi_bits: f64,
}

/// Eavesdropper information for one receiver, in bits per sifted key bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    /// Equal-weight mean over the two bases.
    pub mi_continuous_bits: f64,
    /// Mean success probability of a MAP guess from exact timestamps.
    pub eve_map_success: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compensated_mi_bits: Option<f64>,
    pub mi_per_basis_bits: PerBasis,
    pub grouping: Grouping,
    /// Phase-averaged leakage for each requested bin width.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub binned: Vec<BinnedLeakage>,
}

impl LeakageReport {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            line: 1,
            message: e.message().to_string(),
        })
    }

    /// Aligned human-readable listing, 6 significant digits.
    pub fn render_text(&self) -> String {
        let mut rows = vec![
            ("grouping".to_string(), self.grouping.to_string()),
            ("mi_continuous_bits".into(), sig6(self.mi_continuous_bits)),
            ("mi_basis_A_bits".into(), sig6(self.mi_per_basis_bits.a)),
            ("mi_basis_B_bits".into(), sig6(self.mi_per_basis_bits.b)),
            ("eve_map_success".into(), sig6(self.eve_map_success)),
        ];
        for b in &self.binned {
            rows.push((format!("mi_binned_{}ps_bits", b.width_ps), sig6(b.mi_bits)));
        }
        if let Some(c) = self.compensated_mi_bits {
            rows.push(("compensated_mi_bits".into(), sig6(c)));
        }
        render_rows(&rows)
    }
}

pub(crate) fn render_rows(rows: &[(String, String)]) -> String {
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (k, v) in rows {
        let _ = writeln!(out, "{k:<width$}  {v}");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedCurve {
    pub width_ps: f64,
    pub mi_bits: Vec<f64>,
}

/// Leakage as a function of relative detector delay; every curve is aligned
/// with `delta_t0_ps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub delta_t0_ps: Vec<f64>,
    pub continuous: Vec<f64>,
    pub binned: Vec<BinnedCurve>,
}

impl SweepResult {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("sweep serializes")
    }

    /// Tab-separated table: `delay_ps`, `continuous`, then `bin_<w>ps` per
    /// width. Values are written at full precision.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("delay_ps\tcontinuous");
        for c in &self.binned {
            let _ = write!(out, "\tbin_{}ps", c.width_ps);
        }
        out.push('\n');
        for (k, d) in self.delta_t0_ps.iter().enumerate() {
            let _ = write!(out, "{d}\t{}", self.continuous[k]);
            for c in &self.binned {
                let _ = write!(out, "\t{}", c.mi_bits[k]);
            }
            out.push('\n');
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty sweep table".into(),
        })?;
        let cols: Vec<&str> = header.split('\t').collect();
        if cols.len() < 2 || cols[0] != "delay_ps" || cols[1] != "continuous" {
            return Err(Error::Parse {
                line: 1,
                message: "header must start with delay_ps<TAB>continuous".into(),
            });
        }
        let mut binned = cols[2..]
            .iter()
            .map(|c| {
                c.strip_prefix("bin_")
                    .and_then(|s| s.strip_suffix("ps"))
                    .and_then(|s| s.parse::<f64>().ok())
                    .map(|width_ps| BinnedCurve {
                        width_ps,
                        mi_bits: Vec::new(),
                    })
                    .ok_or_else(|| Error::Parse {
                        line: 1,
                        message: format!("bad column name {c:?}, expected bin_<width>ps"),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut delays = Vec::new();
        let mut continuous = Vec::new();
        for (idx, line) in lines {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != cols.len() {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected {} fields, found {}", cols.len(), fields.len()),
                });
            }
            let num = |s: &str| {
                s.trim().parse::<f64>().map_err(|e| Error::Parse {
                    line: idx + 1,
                    message: format!("bad number {s:?}: {e}"),
                })
            };
            delays.push(num(fields[0])?);
            continuous.push(num(fields[1])?);
            for (c, f) in binned.iter_mut().zip(&fields[2..]) {
                c.mi_bits.push(num(f)?);
            }
        }
        Ok(SweepResult {
            delta_t0_ps: delays,
            continuous,
            binned,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_report() -> LeakageReport {
        LeakageReport {
            mi_continuous_bits: 0.0369,
            eve_map_success: 0.61,
            compensated_mi_bits: Some(0.0014),
            mi_per_basis_bits: PerBasis { a: 0.05, b: 0.0238 },
            grouping: Grouping { a: [1, 2], b: [3, 4] },
            binned: vec![BinnedLeakage { width_ps: 500.0, mi_bits: 0.02 }],
        }
    }

    #[test]
    fn report_structured_round_trip() {
        let r = sample_report();
        let text = r.to_toml();
        assert!(text.contains("[grouping]") && text.contains("[[binned]]"));
        assert_eq!(LeakageReport::from_toml(&text).unwrap(), r);
    }

    #[test]
    fn report_text_is_stable() {
        let t = sample_report().render_text();
        let keys: Vec<&str> = t.lines().map(|l| l.split_whitespace().next().unwrap()).collect();
        assert_eq!(
            keys,
            [
                "grouping",
                "mi_continuous_bits",
                "mi_basis_A_bits",
                "mi_basis_B_bits",
                "eve_map_success",
                "mi_binned_500ps_bits",
                "compensated_mi_bits"
            ]
        );
        assert!(t.contains("0.0369000"));
    }

    #[test]
    fn tsv_rejects_bad_rows() {
        let bad = "delay_ps\tcontinuous\tbin_500ps\n0\t0\n";
        assert!(matches!(SweepResult::from_tsv(bad), Err(Error::Parse { line: 2, .. })));
        assert!(SweepResult::from_tsv("x\ty\n").is_err());
    }

    proptest! {
        #[test]
        fn tsv_round_trip(rows in prop::collection::vec((0.0f64..1e4, 0.0f64..1.0, 0.0f64..1.0), 1..20)) {
            let s = SweepResult {
                delta_t0_ps: rows.iter().map(|r| r.0).collect(),
                continuous: rows.iter().map(|r| r.1).collect(),
                binned: vec![BinnedCurve { width_ps: 500.0, mi_bits: rows.iter().map(|r| r.2).collect() }],
            };
            prop_assert_eq!(SweepResult::from_tsv(&s.to_tsv()).unwrap(), s);
        }
    }
}
