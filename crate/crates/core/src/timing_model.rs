//! Detector timing response.
//!
//! A photodetector's recorded click time relative to the optical trigger is
//! modelled as an exponential decay convolved with a Gaussian:
//!
//! ```text
//! d(t) = 1/(2 tau_e) * exp(-tau_g^2 / (4 tau_e^2)) * exp((t - t0)/tau_e) * erfc((t - t0)/tau_g)
//! ```
//!
//! Written this way the exponential tail sits on the early-time side. The law
//! is that of `t0 + tau_g^2/(2 tau_e) + G - E` with `G ~ N(0, tau_g^2/2)` and
//! `E ~ Exp(mean tau_e)`, which gives closed forms for the CDF, the moments
//! and an exact sampler.
//!
//! All times are picoseconds and all densities are per picosecond.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Half-width of the "full support" window in units of `tau_e + tau_g`.
pub const SUPPORT_WIDTHS: f64 = 20.0;

/// Timing response of one detector: offset `t0`, exponential constant
/// `tau_e` and Gaussian constant `tau_g`, all in picoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "ResponseRecord<T>",
    into = "ResponseRecord<T>",
    bound(
        serialize = "T: Real + Serialize",
        deserialize = "T: Real + Deserialize<'de>"
    )
)]
pub struct Response<T> {
    t0: T,
    tau_e: T,
    tau_g: T,
}

/// On-disk form of a [`Response`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct ResponseRecord<T> {
    t0_ps: T,
    tau_e_ps: T,
    tau_g_ps: T,
}

impl<T: Real> TryFrom<ResponseRecord<T>> for Response<T> {
    type Error = Error;

    fn try_from(r: ResponseRecord<T>) -> Result<Self> {
        Response::new(r.t0_ps, r.tau_e_ps, r.tau_g_ps)
    }
}

impl<T: Real> From<Response<T>> for ResponseRecord<T> {
    fn from(r: Response<T>) -> Self {
        ResponseRecord {
            t0_ps: r.t0,
            tau_e_ps: r.tau_e,
            tau_g_ps: r.tau_g,
        }
    }
}

/// First two moments of a response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments<T> {
    pub mean: T,
    pub variance: T,
}

impl<T: Real> Response<T> {
    pub fn new(t0: T, tau_e: T, tau_g: T) -> Result<Self> {
        if !t0.is_finite() {
            return Err(Error::InvalidParameter(format!("t0 must be finite, got {t0}")));
        }
        for (name, v) in [("tau_e", tau_e), ("tau_g", tau_g)] {
            if !(v.is_finite() && v > T::zero()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        Ok(Response { t0, tau_e, tau_g })
    }

    pub fn t0(&self) -> T {
        self.t0
    }

    pub fn tau_e(&self) -> T {
        self.tau_e
    }

    pub fn tau_g(&self) -> T {
        self.tau_g
    }

    /// Same shape, offset moved to `new_t0`.
    pub fn with_offset(&self, new_t0: T) -> Self {
        Response { t0: new_t0, ..*self }
    }

    /// Converts to another scalar precision.
    pub fn cast<U: Real>(&self) -> Response<U> {
        let c = |v: T| U::lit(v.to_f64().expect("finite parameter"));
        Response {
            t0: c(self.t0),
            tau_e: c(self.tau_e),
            tau_g: c(self.tau_g),
        }
    }

    /// `exp(u/tau_e - tau_g^2/(4 tau_e^2)) * erfc(u/tau_g)` without forming
    /// the `inf * 0` product on the late side.
    #[inline]
    fn tail_term(&self, u: T) -> T {
        let kappa = self.tau_g * self.tau_g / (T::lit(4.0) * self.tau_e * self.tau_e);
        let a = u / self.tau_e - kappa;
        let b = u / self.tau_g;
        if b > T::zero() {
            (a - b * b).exp() * b.erfcx()
        } else {
            a.exp() * b.erfc()
        }
    }

    /// Probability density per picosecond at `t`.
    pub fn density(&self, t: T) -> Result<T> {
        if !t.is_finite() {
            return Err(Error::Domain(format!("density evaluated at non-finite time {t}")));
        }
        Ok(self.pdf(t))
    }

    /// Unchecked density for inner loops; a non-finite `t` yields NaN or 0.
    #[inline]
    pub fn pdf(&self, t: T) -> T {
        self.tail_term(t - self.t0) / (T::lit(2.0) * self.tau_e)
    }

    /// Cumulative distribution function.
    ///
    /// `F(u) = 1/2 exp(u/tau_e - kappa) erfc(u/tau_g) + 1/2 erfc((c - u)/tau_g)`
    /// with `c = tau_g^2/(2 tau_e)`.
    pub fn cdf(&self, t: T) -> T {
        if t == T::infinity() {
            return T::one();
        }
        if t == T::neg_infinity() {
            return T::zero();
        }
        let u = t - self.t0;
        let c = self.tau_g * self.tau_g / (T::lit(2.0) * self.tau_e);
        let half = T::lit(0.5);
        let f = half * self.tail_term(u) + half * ((c - u) / self.tau_g).erfc();
        f.max(T::zero()).min(T::one())
    }

    /// Probability mass on `[from, to]`.
    pub fn integrate_density(&self, from: T, to: T) -> Result<T> {
        if from.is_nan() || to.is_nan() {
            return Err(Error::Domain("integration bound is NaN".into()));
        }
        if from > to {
            return Err(Error::InvalidArgument(format!(
                "integration bounds out of order: from {from} > to {to}"
            )));
        }
        if from == to {
            return Ok(T::zero());
        }
        Ok((self.cdf(to) - self.cdf(from)).max(T::zero()))
    }

    /// Exact mean and variance.
    pub fn moments(&self) -> Moments<T> {
        let two = T::lit(2.0);
        Moments {
            mean: self.t0 + self.tau_g * self.tau_g / (two * self.tau_e) - self.tau_e,
            variance: self.tau_g * self.tau_g / two + self.tau_e * self.tau_e,
        }
    }

    /// `[t0 - 20(tau_e + tau_g), t0 + 20(tau_e + tau_g)]`; the mass outside is
    /// below the integration tolerances used throughout the crate.
    pub fn support(&self) -> (T, T) {
        let half_width = T::lit(SUPPORT_WIDTHS) * (self.tau_e + self.tau_g);
        (self.t0 - half_width, self.t0 + half_width)
    }

    /// Draws one timestamp.
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        let z: f64 = rng.sample(StandardNormal);
        let e: f64 = rng.sample(Exp1);
        let two = T::lit(2.0);
        let center = self.t0 + self.tau_g * self.tau_g / (two * self.tau_e);
        center + self.tau_g / two.sqrt() * T::lit(z) - self.tau_e * T::lit(e)
    }

    /// Draws `n` i.i.d. timestamps; deterministic for a given RNG state.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<T> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }
}

/// Uniform grid `start, start + step, ..., start + (count - 1) step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid<T> {
    start: T,
    step: T,
    count: usize,
}

impl<T: Real> TimeGrid<T> {
    /// Grid with `count` points ending exactly at `end`.
    pub fn new(start: T, end: T, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::InvalidArgument(format!("grid needs >= 2 points, got {count}")));
        }
        if !(start.is_finite() && end.is_finite() && end > start) {
            return Err(Error::InvalidArgument(format!("grid range [{start}, {end}] is empty")));
        }
        let step = (end - start) / T::lit((count - 1) as f64);
        Ok(TimeGrid { start, step, count })
    }

    /// Smallest odd-point grid over `[start, end]` with spacing at most `max_step`.
    pub fn covering(start: T, end: T, max_step: T) -> Result<Self> {
        if max_step.is_nan() || max_step <= T::zero() {
            return Err(Error::InvalidArgument(format!("grid step must be > 0, got {max_step}")));
        }
        let intervals = ((end - start) / max_step).ceil().to_usize().unwrap_or(1).max(2);
        let intervals = intervals + intervals % 2;
        Self::new(start, end, intervals + 1)
    }

    pub fn start(&self) -> T {
        self.start
    }

    pub fn step(&self) -> T {
        self.step
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn end(&self) -> T {
        self.point(self.count - 1)
    }

    pub fn point(&self, k: usize) -> T {
        if k + 1 == self.count {
            // Pin the last point so the grid covers its range exactly.
            self.start + self.step * T::lit((self.count - 1) as f64)
        } else {
            self.start + self.step * T::lit(k as f64)
        }
    }

    pub fn points(&self) -> impl Iterator<Item = T> + '_ {
        (0..self.count).map(move |k| self.point(k))
    }

    /// Composite Simpson rule; needs an odd point count.
    pub fn simpson<F: Fn(T) -> T>(&self, f: F) -> Result<T> {
        if self.count.is_multiple_of(2) {
            return Err(Error::InvalidArgument("Simpson rule needs an odd number of points".into()));
        }
        let mut acc = f(self.point(0)) + f(self.end());
        for k in 1..self.count - 1 {
            let w = if k % 2 == 1 { T::lit(4.0) } else { T::lit(2.0) };
            acc = acc + w * f(self.point(k));
        }
        Ok(acc * self.step / T::lit(3.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate, uniform_breakpoints};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type R = Response<f64>;

    fn resp(t0: f64, te: f64, tg: f64) -> R {
        R::new(t0, te, tg).unwrap()
    }

    /// Independent quadrature of `g(t) * d(t)` over the full support.
    fn quad_moment(r: &R, g: impl Fn(f64) -> f64) -> f64 {
        let (lo, hi) = r.support();
        let bp = uniform_breakpoints(lo, hi, r.tau_e().min(r.tau_g()));
        integrate(|t| g(t) * r.pdf(t), &bp, 1e-12).value
    }

    #[test]
    fn rejects_non_positive_constants() {
        assert!(R::new(0.0, 0.0, 1.0).is_err());
        assert!(R::new(0.0, 1.0, -1.0).is_err());
        assert!(R::new(f64::NAN, 1.0, 1.0).is_err());
    }

    #[test]
    fn density_at_offset_is_direct_substitution() {
        // erfc(0) = 1, so d(t0) = 1/(2 tau_e) * exp(-tau_g^2 / (4 tau_e^2)).
        let want = (1.0 / 800.0) * (-(290.0f64 * 290.0) / (4.0 * 400.0 * 400.0)).exp();
        let got = resp(0.0, 400.0, 290.0).density(0.0).unwrap();
        assert!(((got - want) / want).abs() < 1e-12);
        assert!((got - 1.0961e-3).abs() < 1e-7);
    }

    #[test]
    fn early_tail_is_tiny() {
        let r = resp(1138.0, 395.0, 288.0);
        assert!(r.density(1138.0 - 20.0 * 395.0).unwrap() < 1e-11);
    }

    #[test]
    fn density_rejects_non_finite_time() {
        let r = resp(0.0, 400.0, 290.0);
        assert!(matches!(r.density(f64::NAN), Err(Error::Domain(_))));
        assert!(matches!(r.density(f64::INFINITY), Err(Error::Domain(_))));
    }

    #[test]
    fn translation_covariance() {
        let a = resp(0.0, 400.0, 290.0);
        let b = resp(500.0, 400.0, 290.0);
        assert_eq!(a.pdf(100.0), b.pdf(600.0));
        let c = a.with_offset(250.0);
        assert!((c.pdf(250.0) - a.pdf(0.0)).abs() < 1e-18);
    }

    #[test]
    fn with_offset_replaces_only_t0() {
        let r = resp(1138.0, 395.0, 288.0);
        assert_eq!(r.with_offset(1200.0), resp(1200.0, 395.0, 288.0));
        assert_eq!(r.with_offset(r.t0()), r);
    }

    #[test]
    fn stable_far_from_offset() {
        let r = resp(0.0, 400.0, 290.0);
        for &t in &[-1e6, -1e5, -3e4, 3e4, 1e5, 1e6] {
            let d = r.density(t).unwrap();
            assert!(d.is_finite() && d >= 0.0, "t={t} d={d}");
        }
        // The naive product is already inf * 0 here.
        let u = 3e5f64;
        assert!(((u / 400.0).exp() * libm::erfc(u / 290.0)).is_nan());
        assert!(r.density(u).unwrap() >= 0.0);
    }

    #[test]
    fn full_support_integrates_to_one() {
        for r in [resp(0.0, 400.0, 290.0), resp(1138.0, 395.0, 288.0), resp(-50.0, 60.0, 1500.0)] {
            let (lo, hi) = r.support();
            let oracle = quad_moment(&r, |_| 1.0);
            assert!((oracle - 1.0).abs() < 1e-6);
            let closed = r.integrate_density(lo, hi).unwrap();
            assert!((closed - 1.0).abs() < 1e-6);
            assert!((closed - oracle).abs() < 1e-9);
        }
    }

    #[test]
    fn partial_integrals_match_quadrature() {
        let r = resp(1356.0, 433.0, 279.0);
        for &(a, b) in &[(0.0, 1356.0), (1000.0, 1020.0), (-3000.0, 800.0), (1356.0, 4000.0)] {
            let oracle = integrate(|t| r.pdf(t), &uniform_breakpoints(a, b, 50.0), 1e-13).value;
            let got = r.integrate_density(a, b).unwrap();
            assert!((got - oracle).abs() < 1e-9, "[{a},{b}] {got} vs {oracle}");
        }
    }

    #[test]
    fn integration_edge_cases() {
        let r = resp(0.0, 400.0, 290.0);
        assert_eq!(r.integrate_density(7.0, 7.0).unwrap(), 0.0);
        assert!(matches!(r.integrate_density(1.0, 0.0), Err(Error::InvalidArgument(_))));
        let (a, m, b) = (-900.0, -120.0, 700.0);
        let whole = r.integrate_density(a, b).unwrap();
        let parts = r.integrate_density(a, m).unwrap() + r.integrate_density(m, b).unwrap();
        assert!((whole - parts).abs() < 1e-9);
        assert_eq!(r.integrate_density(f64::NEG_INFINITY, f64::INFINITY).unwrap(), 1.0);
    }

    #[test]
    fn moments_match_quadrature() {
        let r = resp(0.0, 400.0, 290.0);
        let mean = quad_moment(&r, |t| t);
        let var = quad_moment(&r, |t| (t - mean).powi(2));
        let m = r.moments();
        assert!((m.mean - mean).abs() < 1e-6, "{} vs {mean}", m.mean);
        assert!((m.variance - var).abs() < 1e-4 * var);
        assert!((m.mean - (-294.875)).abs() < 1e-9);
    }

    #[test]
    fn variance_is_shift_invariant_and_has_exponential_limit() {
        let a = resp(0.0, 400.0, 290.0).moments().variance;
        let b = resp(1000.0, 400.0, 290.0).moments().variance;
        assert_eq!(a, b);
        let narrow = resp(0.0, 400.0, 4.0);
        let mean = quad_moment(&narrow, |t| t);
        let var = quad_moment(&narrow, |t| (t - mean).powi(2));
        assert!((var / (400.0 * 400.0) - 1.0).abs() < 0.01);
        assert!((narrow.moments().variance - var).abs() < 1e-4 * var);
    }

    #[test]
    fn sampling_is_deterministic() {
        let r = resp(0.0, 400.0, 290.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(r.sample(&mut rng, 0).is_empty());
        let a = r.sample(&mut ChaCha8Rng::seed_from_u64(7), 1000);
        let b = r.sample(&mut ChaCha8Rng::seed_from_u64(7), 1000);
        assert_eq!(a, b);
    }

    #[test]
    fn sample_mean_matches_moments() {
        let r = resp(0.0, 400.0, 290.0);
        let n = 1_000_000;
        let xs = r.sample(&mut ChaCha8Rng::seed_from_u64(11), n);
        let mean = xs.iter().sum::<f64>() / n as f64;
        let m = r.moments();
        assert!((mean - m.mean).abs() < 4.0 * m.variance.sqrt() / (n as f64).sqrt());
    }

    #[test]
    fn sampling_law_chi_square_and_ks() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let r = resp(1248.0, 409.0, 292.0);
        let n = 1_000_000usize;
        let mut xs = r.sample(&mut ChaCha8Rng::seed_from_u64(2024), n);

        // Chi-square against bin masses; sparse outer bins pooled into the edges.
        let width = 50.0;
        let (lo, hi) = (r.t0() - 4000.0, r.t0() + 1500.0);
        let nb = ((hi - lo) / width) as usize;
        let mut obs = vec![0u64; nb + 2];
        for &x in &xs {
            let k = if x < lo {
                0
            } else if x >= hi {
                nb + 1
            } else {
                1 + ((x - lo) / width) as usize
            };
            obs[k] += 1;
        }
        let mut expected = vec![r.cdf(lo)];
        for k in 0..nb {
            let a = lo + k as f64 * width;
            expected.push(r.integrate_density(a, a + width).unwrap());
        }
        expected.push(1.0 - r.cdf(hi));
        let mut chi2 = 0.0;
        let mut used = 0;
        for (o, p) in obs.iter().zip(&expected) {
            let e = p * n as f64;
            if e >= 5.0 {
                chi2 += (*o as f64 - e).powi(2) / e;
                used += 1;
            }
        }
        let crit = ChiSquared::new((used - 1) as f64).unwrap().inverse_cdf(0.999);
        assert!(chi2 < crit, "chi2 {chi2} crit {crit} bins {used}");

        // Kolmogorov–Smirnov at the 0.1% level.
        xs.sort_by(f64::total_cmp);
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = r.cdf(x);
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(d < 1.9495 / (n as f64).sqrt(), "KS D = {d}");
    }

    #[test]
    fn non_negative_on_dense_grid() {
        let r = resp(1117.0, 415.0, 302.0);
        let (lo, hi) = r.support();
        let grid = TimeGrid::new(lo, hi, 100_000).unwrap();
        assert!(grid.points().all(|t| r.pdf(t) >= 0.0));
    }

    #[test]
    fn grid_covers_exactly_and_simpson_integrates() {
        let g = TimeGrid::covering(-1.0, 2.0, 0.07).unwrap();
        assert_eq!(g.end(), 2.0);
        assert!(g.step() <= 0.07 && g.count() % 2 == 1);
        assert!(TimeGrid::new(0.0, 1.0, 1).is_err());
        let r = resp(0.0, 400.0, 290.0);
        let (lo, hi) = r.support();
        let g = TimeGrid::covering(lo, hi, 290.0 / 50.0).unwrap();
        assert!((g.simpson(|t| r.pdf(t)).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn serializes_with_picosecond_keys() {
        let r = resp(1138.0, 395.0, 288.0);
        let s = toml::to_string(&r).unwrap();
        assert!(s.contains("t0_ps = 1138.0") && s.contains("tau_e_ps") && s.contains("tau_g_ps"));
        let back: R = toml::from_str(&s).unwrap();
        assert_eq!(back, r);
        assert!(toml::from_str::<R>("t0_ps = 0.0\ntau_e_ps = -1.0\ntau_g_ps = 3.0").is_err());
    }

    #[test]
    fn f32_density_tracks_f64() {
        let r64 = resp(0.0, 400.0, 290.0);
        let r32: Response<f32> = r64.cast();
        for k in -20..10 {
            let t = k as f64 * 100.0;
            let (a, b) = (r32.pdf(t as f32) as f64, r64.pdf(t));
            assert!((a - b).abs() <= 1e-5 * b + 1e-12, "t={t}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn normalization_over_random_shapes(
            t0 in -5000.0f64..5000.0,
            te in 50.0f64..2000.0,
            tg in 50.0f64..2000.0,
        ) {
            let r = resp(t0, te, tg);
            let (lo, hi) = r.support();
            prop_assert!((r.integrate_density(lo, hi).unwrap() - 1.0).abs() < 1e-6);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn quadrature_normalization_over_random_shapes(
            t0 in -5000.0f64..5000.0,
            te in 50.0f64..2000.0,
            tg in 50.0f64..2000.0,
        ) {
            let r = resp(t0, te, tg);
            prop_assert!((quad_moment(&r, |_| 1.0) - 1.0).abs() < 1e-6);
        }

        #[test]
        fn shift_covariance_pointwise(
            t0 in -5000.0f64..5000.0,
            te in 50.0f64..2000.0,
            tg in 50.0f64..2000.0,
            t in -20000.0f64..20000.0,
            delta in -3000.0f64..3000.0,
        ) {
            let a = resp(t0, te, tg);
            let b = a.with_offset(t0 + delta);
            let (x, y) = (a.pdf(t), b.pdf(t + delta));
            prop_assert!((x - y).abs() <= 1e-9 * x.max(y) + 1e-300);
        }
    }
}
