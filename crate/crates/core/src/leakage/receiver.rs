//! Four-detector receiver: which detector measures which basis and which bit.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{BitChannel, DetectorResponse};

/// Bundled receiver config carrying the four characterized detectors.
pub const TABLE1_CONFIG: &str = include_str!("../../data/table1.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Basis {
    A,
    B,
}

impl Basis {
    pub const ALL: [Basis; 2] = [Basis::A, Basis::B];
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Basis::A => "A",
            Basis::B => "B",
        })
    }
}

impl std::str::FromStr for Basis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "A" | "a" => Ok(Basis::A),
            "B" | "b" => Ok(Basis::B),
            other => Err(format!("expected basis \"A\" or \"B\", got {other:?}")),
        }
    }
}

/// Value of the secret bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Bit {
    Zero,
    One,
}

impl Bit {
    pub fn index(self) -> usize {
        match self {
            Bit::Zero => 0,
            Bit::One => 1,
        }
    }
}

impl TryFrom<u8> for Bit {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(Bit::Zero),
            1 => Ok(Bit::One),
            other => Err(format!("bit must be 0 or 1, got {other}")),
        }
    }
}

impl From<Bit> for u8 {
    fn from(b: Bit) -> u8 {
        b.index() as u8
    }
}

impl fmt::Display for Bit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

/// Detector ids (1-based) per basis; element 0 carries bit 0, element 1 bit 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grouping {
    #[serde(rename = "A")]
    pub a: [u8; 2],
    #[serde(rename = "B")]
    pub b: [u8; 2],
}

impl Grouping {
    /// The three ways to split detectors 1..4 into two basis pairs.
    pub const PAIRINGS: [Grouping; 3] = [
        Grouping { a: [1, 2], b: [3, 4] },
        Grouping { a: [1, 3], b: [2, 4] },
        Grouping { a: [1, 4], b: [2, 3] },
    ];

    pub fn pair(&self, basis: Basis) -> [u8; 2] {
        match basis {
            Basis::A => self.a,
            Basis::B => self.b,
        }
    }
}

impl fmt::Display for Grouping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "A=({},{}) B=({},{})",
            self.a[0], self.a[1], self.b[0], self.b[1]
        )
    }
}

/// Four detectors with a perfect basis x bit assignment and a bit prior.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverModel {
    detectors: [DetectorResponse; 4],
    basis_of: [Basis; 4],
    bit_of: [Bit; 4],
    prior: f64,
}

impl ReceiverModel {
    /// Detectors are indexed 1..4 by array position.
    pub fn new(
        detectors: [DetectorResponse; 4],
        basis_of: [Basis; 4],
        bit_of: [Bit; 4],
        prior: f64,
    ) -> Result<Self> {
        if !(prior > 0.0 && prior < 1.0) {
            return Err(Error::validation(
                "prior",
                format!("must lie strictly between 0 and 1, got {prior}"),
            ));
        }
        for basis in Basis::ALL {
            for bit in [Bit::Zero, Bit::One] {
                let n = (0..4)
                    .filter(|&i| basis_of[i] == basis && bit_of[i] == bit)
                    .count();
                if n != 1 {
                    return Err(Error::validation(
                        "detector",
                        format!(
                            "basis {basis} must have exactly one detector for bit {bit}, found {n}"
                        ),
                    ));
                }
            }
        }
        Ok(ReceiverModel {
            detectors,
            basis_of,
            bit_of,
            prior,
        })
    }

    pub fn from_grouping(detectors: [DetectorResponse; 4], grouping: Grouping, prior: f64) -> Result<Self> {
        let mut basis_of = [None; 4];
        let mut bit_of = [Bit::Zero; 4];
        for basis in Basis::ALL {
            for (slot, &id) in grouping.pair(basis).iter().enumerate() {
                let i = usize::from(id)
                    .checked_sub(1)
                    .filter(|&i| i < 4)
                    .ok_or_else(|| Error::validation("grouping", format!("detector id {id} not in 1..4")))?;
                if basis_of[i].is_some() {
                    return Err(Error::validation("grouping", format!("detector {id} assigned twice")));
                }
                basis_of[i] = Some(basis);
                bit_of[i] = if slot == 0 { Bit::Zero } else { Bit::One };
            }
        }
        let basis_of = basis_of.map(|b| b.expect("every detector assigned"));
        Self::new(detectors, basis_of, bit_of, prior)
    }

    /// The bundled four-detector receiver, grouped (1,2)/(3,4) with
    /// detectors 1 and 3 carrying bit 0.
    pub fn table1() -> Self {
        Self::from_toml_str(TABLE1_CONFIG).expect("bundled config is valid")
    }

    pub fn detectors(&self) -> &[DetectorResponse; 4] {
        &self.detectors
    }

    /// Detector by 1-based id.
    pub fn detector(&self, id: u8) -> &DetectorResponse {
        &self.detectors[usize::from(id) - 1]
    }

    pub fn basis_of(&self, id: u8) -> Basis {
        self.basis_of[usize::from(id) - 1]
    }

    pub fn bit_of(&self, id: u8) -> Bit {
        self.bit_of[usize::from(id) - 1]
    }

    pub fn prior(&self) -> f64 {
        self.prior
    }

    /// 1-based id of the detector that registers `bit` in `basis`.
    pub fn detector_for(&self, basis: Basis, bit: Bit) -> u8 {
        let i = (0..4)
            .find(|&i| self.basis_of[i] == basis && self.bit_of[i] == bit)
            .expect("validated assignment");
        (i + 1) as u8
    }

    pub fn grouping(&self) -> Grouping {
        let pair = |b| [self.detector_for(b, Bit::Zero), self.detector_for(b, Bit::One)];
        Grouping {
            a: pair(Basis::A),
            b: pair(Basis::B),
        }
    }

    /// The bit channel seen through one basis.
    pub fn channel(&self, basis: Basis) -> BitChannel {
        BitChannel::new(
            *self.detector(self.detector_for(basis, Bit::Zero)),
            *self.detector(self.detector_for(basis, Bit::One)),
            self.prior,
        )
        .expect("prior validated at construction")
    }

    /// Same assignment with replaced detector responses.
    pub fn with_detectors(&self, detectors: [DetectorResponse; 4]) -> Self {
        ReceiverModel {
            detectors,
            ..self.clone()
        }
    }

    /// Parses the TOML receiver config.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(1);
            Error::Parse {
                line,
                message: e.message().to_string(),
            }
        })?;
        raw.validate()
    }

    pub fn to_toml_string(&self) -> String {
        let raw = RawConfig {
            prior: Some(self.prior),
            detector: (0..4)
                .map(|i| RawDetector {
                    id: (i + 1) as i64,
                    basis: self.basis_of[i].to_string(),
                    bit: self.bit_of[i].index() as i64,
                    t0_ps: self.detectors[i].t0(),
                    tau_e_ps: self.detectors[i].tau_e(),
                    tau_g_ps: self.detectors[i].tau_g(),
                })
                .collect(),
        };
        toml::to_string(&raw).expect("receiver config serializes")
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    prior: Option<f64>,
    #[serde(default)]
    detector: Vec<RawDetector>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetector {
    id: i64,
    basis: String,
    bit: i64,
    #[serde(deserialize_with = "crate::format::de_number")]
    t0_ps: f64,
    #[serde(deserialize_with = "crate::format::de_number")]
    tau_e_ps: f64,
    #[serde(deserialize_with = "crate::format::de_number")]
    tau_g_ps: f64,
}

impl RawConfig {
    fn validate(self) -> Result<ReceiverModel> {
        if self.detector.len() != 4 {
            return Err(Error::validation(
                "detector",
                format!("expected exactly 4 [[detector]] entries, found {}", self.detector.len()),
            ));
        }
        let mut slots: [Option<(DetectorResponse, Basis, Bit)>; 4] = [None; 4];
        for (k, d) in self.detector.iter().enumerate() {
            let path = |field: &str| format!("detector[{k}].{field}");
            if !(1..=4).contains(&d.id) {
                return Err(Error::validation(path("id"), format!("must be 1..4, got {}", d.id)));
            }
            let i = (d.id - 1) as usize;
            if slots[i].is_some() {
                return Err(Error::validation(path("id"), format!("duplicate detector id {}", d.id)));
            }
            let basis: Basis = d.basis.parse().map_err(|m| Error::validation(path("basis"), m))?;
            let bit = u8::try_from(d.bit)
                .map_err(|_| format!("bit must be 0 or 1, got {}", d.bit))
                .and_then(Bit::try_from)
                .map_err(|m| Error::validation(path("bit"), m))?;
            for (field, v) in [("tau_e_ps", d.tau_e_ps), ("tau_g_ps", d.tau_g_ps)] {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::validation(path(field), format!("must be finite and > 0, got {v}")));
                }
            }
            if !d.t0_ps.is_finite() {
                return Err(Error::validation(path("t0_ps"), "must be finite"));
            }
            let resp = DetectorResponse::new(d.t0_ps, d.tau_e_ps, d.tau_g_ps)?;
            slots[i] = Some((resp, basis, bit));
        }
        let slots = slots.map(|s| s.expect("four distinct ids in 1..4"));
        ReceiverModel::new(
            slots.map(|s| s.0),
            slots.map(|s| s.1),
            slots.map(|s| s.2),
            self.prior.unwrap_or(0.5),
        )
    }
}
