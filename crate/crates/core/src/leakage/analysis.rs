use rayon::prelude::*;

use super::receiver::{Basis, Grouping, ReceiverModel};
use super::report::{BinnedCurve, BinnedLeakage, LeakageReport, PerBasis, SweepResult};
use crate::error::{Error, Result};
use crate::{BitChannel, DetectorResponse};

/// Phase offsets averaged by default for binned figures.
pub const DEFAULT_PHASES: usize = 16;

/// Options for [`leakage_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReportOptions {
    pub bin_widths_ps: Vec<f64>,
    pub phases: usize,
    pub compensate: bool,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            bin_widths_ps: Vec::new(),
            phases: DEFAULT_PHASES,
            compensate: false,
        }
    }
}

/// Per-basis and headline continuous leakage; the two bases are weighted
/// equally. Binned and compensated fields are left empty.
pub fn average_leakage(rcv: &ReceiverModel) -> LeakageReport {
    let [a, b] = Basis::ALL.map(|basis| rcv.channel(basis));
    let (mi_a, mi_b) = rayon::join(|| a.mutual_information(), || b.mutual_information());
    let (s_a, s_b) = rayon::join(|| a.map_success(), || b.map_success());
    LeakageReport {
        mi_continuous_bits: 0.5 * (mi_a + mi_b),
        mi_per_basis_bits: PerBasis { a: mi_a, b: mi_b },
        eve_map_success: 0.5 * (s_a + s_b),
        compensated_mi_bits: None,
        grouping: rcv.grouping(),
        binned: Vec::new(),
    }
}

/// Full report: continuous, binned (phase-averaged) and optionally
/// compensated leakage.
pub fn leakage_report(rcv: &ReceiverModel, opts: &ReportOptions) -> Result<LeakageReport> {
    let mut report = average_leakage(rcv);
    let channels = Basis::ALL.map(|basis| rcv.channel(basis));
    report.binned = opts
        .bin_widths_ps
        .par_iter()
        .map(|&w| {
            let mut per = [0.0; 2];
            for (slot, ch) in per.iter_mut().zip(&channels) {
                *slot = ch.binned_mutual_information_phase_averaged(w, opts.phases)?;
            }
            Ok(BinnedLeakage {
                width_ps: w,
                mi_bits: 0.5 * (per[0] + per[1]),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if opts.compensate {
        report.compensated_mi_bits = Some(compensated_leakage(rcv));
    }
    Ok(report)
}

/// Outcome of [`best_grouping`].
#[derive(Debug, Clone)]
pub struct GroupingSearch {
    pub model: ReceiverModel,
    pub mi_bits: f64,
    /// All three pairings with their average leakage, in enumeration order.
    pub candidates: Vec<(Grouping, f64)>,
}

/// Tries the three basis pairings of four detectors and keeps the one that
/// leaks most. Bit labels inside a pair do not affect the result. Ties keep
/// the earliest pairing.
pub fn best_grouping(detectors: &[DetectorResponse; 4], prior: f64) -> Result<GroupingSearch> {
    let candidates: Vec<(Grouping, f64)> = Grouping::PAIRINGS
        .par_iter()
        .map(|&g| {
            let rcv = ReceiverModel::from_grouping(*detectors, g, prior)?;
            Ok((g, average_leakage(&rcv).mi_continuous_bits))
        })
        .collect::<Result<_>>()?;
    let (best, mi) = candidates
        .iter()
        .copied()
        .reduce(|acc, c| if c.1 > acc.1 { c } else { acc })
        .expect("three candidates");
    Ok(GroupingSearch {
        model: ReceiverModel::from_grouping(*detectors, best, prior)?,
        mi_bits: mi,
        candidates,
    })
}

/// Leakage versus relative delay for two detectors of identical shape.
pub fn delay_sweep(
    tau_e: f64,
    tau_g: f64,
    delays: &[f64],
    bin_widths: &[f64],
    phases: usize,
) -> Result<SweepResult> {
    if let Some(d) = delays.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
        return Err(Error::InvalidArgument(format!("delays must be finite and >= 0, got {d}")));
    }
    let base = DetectorResponse::new(0.0, tau_e, tau_g)?;
    let rows: Vec<(f64, Vec<f64>)> = delays
        .par_iter()
        .map(|&delta| {
            let ch = BitChannel::balanced(base, base.with_offset(delta));
            let binned = bin_widths
                .iter()
                .map(|&w| ch.binned_mutual_information_phase_averaged(w, phases))
                .collect::<Result<Vec<_>>>()?;
            Ok((ch.mutual_information(), binned))
        })
        .collect::<Result<_>>()?;
    let continuous = rows.iter().map(|r| r.0).collect();
    let binned = bin_widths
        .iter()
        .enumerate()
        .map(|(k, &w)| BinnedCurve {
            width_ps: w,
            mi_bits: rows.iter().map(|r| r.1[k]).collect(),
        })
        .collect();
    Ok(SweepResult {
        delta_t0_ps: delays.to_vec(),
        continuous,
        binned,
    })
}

/// Leakage left after every detector's offset is moved to the mean offset.
pub fn compensated_leakage(rcv: &ReceiverModel) -> f64 {
    let dets = rcv.detectors();
    let common = dets.iter().map(|d| d.t0()).sum::<f64>() / 4.0;
    average_leakage(&rcv.with_detectors(dets.map(|d| d.with_offset(common)))).mi_continuous_bits
}

/// Extra key bits to discard for this side channel: `ceil(mi * length)`.
pub fn privacy_amplification_budget(mi_bits: f64, sifted_key_length: i64) -> Result<u64> {
    if sifted_key_length < 0 {
        return Err(Error::InvalidArgument(format!(
            "sifted key length must be >= 0, got {sifted_key_length}"
        )));
    }
    if !(0.0..=1.0).contains(&mi_bits) {
        return Err(Error::InvalidArgument(format!("leakage must lie in [0, 1] bits, got {mi_bits}")));
    }
    let exact = mi_bits * sifted_key_length as f64;
    // Absorb representation error so 0.038 * 10000 is 380, not 381.
    let nearest = exact.round();
    let bits = if (exact - nearest).abs() <= 1e-9 * exact.max(1.0) {
        nearest
    } else {
        exact.ceil()
    };
    Ok(bits as u64)
}
