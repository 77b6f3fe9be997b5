use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::session::{check_resolution, EventRecord, PublicRecord};
use crate::error::{Error, Result};
use crate::format::sig6;
use crate::leakage::{average_leakage, render_rows, Basis, Bit, ReceiverModel};

/// MAP guess of the secret bit for each public record.
///
/// Exact times compare `p0 d0(t)` with `p1 d1(t)` for the announced basis.
/// With a `resolution`, a time `t` stands for `[t - r/2, t + r/2)` and the
/// detector masses over that window are compared instead. Ties go to bit 0.
pub fn eve_map_attack(public: &[PublicRecord], rcv: &ReceiverModel, resolution: Option<f64>) -> Result<Vec<Bit>> {
    if let Some(r) = resolution {
        check_resolution(r)?;
    }
    let channels = Basis::ALL.map(|b| rcv.channel(b));
    Ok(public
        .par_iter()
        .map(|rec| {
            let ch = &channels[rec.basis as usize];
            let (w0, w1) = (ch.prior(), 1.0 - ch.prior());
            let t = rec.time_ps;
            let (s0, s1) = match resolution {
                None => (w0 * ch.d0().pdf(t), w1 * ch.d1().pdf(t)),
                Some(r) => {
                    let (a, b) = (t - 0.5 * r, t + 0.5 * r);
                    (
                        w0 * (ch.d0().cdf(b) - ch.d0().cdf(a)),
                        w1 * (ch.d1().cdf(b) - ch.d1().cdf(a)),
                    )
                }
            };
            if s1 > s0 {
                Bit::One
            } else {
                Bit::Zero
            }
        })
        .collect())
}

/// Empirical attack performance next to the analytic figures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub n_events: u64,
    pub n_correct: u64,
    pub empirical_success: f64,
    /// Binomial standard error of `empirical_success`.
    pub empirical_success_se: f64,
    /// Plug-in `I(X; guess)` from the confusion matrix.
    pub empirical_mi_bits: f64,
    /// Delta-method standard error of `empirical_mi_bits`.
    pub empirical_mi_se_bits: f64,
    /// Channel leakage for the same receiver and timestamp resolution.
    pub analytic_mi_bits: f64,
    pub analytic_map_success: f64,
    /// `confusion[x][g]` counts events with true bit `x` guessed as `g`.
    pub confusion: [[u64; 2]; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution_ps: Option<f64>,
}

impl AttackOutcome {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("outcome serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            line: e.span().map(|s| text[..s.start].matches('\n').count() + 1).unwrap_or(0),
            message: e.message().to_string(),
        })
    }

    pub fn render_text(&self) -> String {
        let c = &self.confusion;
        let mut rows = vec![
            ("n_events".to_string(), self.n_events.to_string()),
            ("n_correct".into(), self.n_correct.to_string()),
            (
                "success".into(),
                format!(
                    "empirical {} ± {}   analytic {}",
                    sig6(self.empirical_success),
                    sig6(self.empirical_success_se),
                    sig6(self.analytic_map_success)
                ),
            ),
            (
                "mi_bits".into(),
                format!(
                    "empirical {} ± {}   analytic {}",
                    sig6(self.empirical_mi_bits),
                    sig6(self.empirical_mi_se_bits),
                    sig6(self.analytic_mi_bits)
                ),
            ),
            ("confusion".into(), format!("[[{}, {}], [{}, {}]]", c[0][0], c[0][1], c[1][0], c[1][1])),
        ];
        if let Some(r) = self.resolution_ps {
            rows.push(("resolution_ps".into(), sig6(r)));
        }
        render_rows(&rows)
    }
}

/// Plug-in mutual information of a 2x2 contingency table and its
/// delta-method standard error, both in bits. Empty cells contribute 0.
pub fn plug_in_mutual_information(confusion: &[[u64; 2]; 2]) -> (f64, f64) {
    let n: u64 = confusion.iter().flatten().sum();
    if n == 0 {
        return (0.0, 0.0);
    }
    let n = n as f64;
    let p = confusion.map(|row| row.map(|c| c as f64 / n));
    let rows = [p[0][0] + p[0][1], p[1][0] + p[1][1]];
    let cols = [p[0][0] + p[1][0], p[0][1] + p[1][1]];
    let (mut mi, mut second) = (0.0, 0.0);
    for x in 0..2 {
        for g in 0..2 {
            if p[x][g] > 0.0 {
                let l = (p[x][g] / (rows[x] * cols[g])).log2();
                mi += p[x][g] * l;
                second += p[x][g] * l * l;
            }
        }
    }
    let var = ((second - mi * mi) / n).max(0.0);
    (mi.clamp(0.0, 1.0), var.sqrt())
}

/// Scores `guesses` against the true bits and sets the analytic leakage
/// for the same receiver next to them. Quantized timestamps are compared
/// with the binned channel whose bins are centred on multiples of the
/// resolution.
pub fn attack_report(
    events: &[EventRecord],
    guesses: &[Bit],
    rcv: &ReceiverModel,
    resolution: Option<f64>,
) -> Result<AttackOutcome> {
    if events.len() != guesses.len() {
        return Err(Error::InvalidArgument(format!(
            "{} events but {} guesses",
            events.len(),
            guesses.len()
        )));
    }
    let mut confusion = [[0u64; 2]; 2];
    for (e, g) in events.iter().zip(guesses) {
        confusion[e.bit.index()][g.index()] += 1;
    }
    let n_events = events.len() as u64;
    let n_correct = confusion[0][0] + confusion[1][1];
    let success = if n_events > 0 {
        n_correct as f64 / n_events as f64
    } else {
        0.0
    };
    let success_se = if n_events > 0 {
        (success * (1.0 - success) / n_events as f64).sqrt()
    } else {
        0.0
    };
    let (mi, mi_se) = plug_in_mutual_information(&confusion);

    let (analytic_mi, analytic_success) = match resolution {
        None => {
            let rep = average_leakage(rcv);
            (rep.mi_continuous_bits, rep.eve_map_success)
        }
        Some(r) => {
            check_resolution(r)?;
            let mut mi = 0.0;
            let mut ok = 0.0;
            for basis in Basis::ALL {
                let ch = rcv.channel(basis);
                mi += 0.5 * ch.binned_mutual_information(r, 0.5 * r)?;
                ok += 0.5 * ch.binned_map_success(r, 0.5 * r)?;
            }
            (mi, ok)
        }
    };

    Ok(AttackOutcome {
        n_events,
        n_correct,
        empirical_success: success,
        empirical_success_se: success_se,
        empirical_mi_bits: mi,
        empirical_mi_se_bits: mi_se,
        analytic_mi_bits: analytic_mi,
        analytic_map_success: analytic_success,
        confusion,
        resolution_ps: resolution,
    })
}
