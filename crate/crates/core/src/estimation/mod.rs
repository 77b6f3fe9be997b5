//! Histogram ingestion and maximum-likelihood fitting of detector responses.

mod fit;
mod histogram;
mod simplex;

pub use fit::{
    fit_response, goodness_of_fit, initial_guess, poisson_log_likelihood, FitOptions, FitResult, StdErrors,
    MAX_ITERATIONS, MIN_EVENTS,
};
pub use histogram::TimingHistogram;
pub(crate) use histogram::csv_error;
