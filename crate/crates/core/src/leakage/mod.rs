//! How much a public timestamp tells an eavesdropper about the secret bit.
//!
//! The core functional is `I(X;T) = H(X) + H(T) - H(X,T)` for a binary
//! secret `X` and a click time `T`, evaluated by quadrature for exact
//! timestamps and from bin masses for coarsened ones. Receiver-level
//! analyses average the two measurement bases with equal weight.

mod analysis;
mod channel;
mod receiver;
mod report;

pub use analysis::{
    average_leakage, best_grouping, compensated_leakage, delay_sweep, leakage_report,
    privacy_amplification_budget, GroupingSearch, ReportOptions, DEFAULT_PHASES,
};
pub use channel::{Channel, EntropyTerms, LOG_FLOOR, MAX_BINS};
pub use receiver::{Basis, Bit, Grouping, ReceiverModel, TABLE1_CONFIG};
pub use report::{BinnedCurve, BinnedLeakage, LeakageReport, PerBasis, SweepResult};
pub(crate) use report::render_rows;
