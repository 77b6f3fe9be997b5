//! A secret bit observed through one basis' pair of detectors.

use crate::error::{Error, Result};
use crate::quadrature::{integrate, uniform_breakpoints};
use crate::scalar::Real;
use crate::timing_model::Response;

/// Densities below this are treated as this inside logarithms.
pub const LOG_FLOOR: f64 = 1e-300;

/// Bin count above which binned functionals refuse to run.
pub const MAX_BINS: usize = 10_000_000;

/// Timestamp law conditioned on the secret bit: `d0` when the bit is 0,
/// `d1` when it is 1, with `prior = P(bit = 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Channel<T> {
    d0: Response<T>,
    d1: Response<T>,
    prior: T,
}

/// Individual terms of `I(X;T) = H(X) + H(T) - H(X,T)`, in bits.
///
/// `h_t` and `h_xt` are differential entropies and depend on the time unit;
/// only the combination is meaningful.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyTerms<T> {
    pub h_x: T,
    pub h_t: T,
    pub h_xt: T,
}

impl<T: Real> EntropyTerms<T> {
    pub fn mutual_information(&self) -> T {
        self.h_x + self.h_t - self.h_xt
    }
}

#[inline]
fn xlog2x<T: Real>(p: T) -> T {
    if p > T::zero() {
        p * p.max(T::lit(LOG_FLOOR)).log2()
    } else {
        T::zero()
    }
}

/// `p log2(p / q)` with `0 log 0 = 0`; requires `p <= q`.
#[inline]
fn xlog2ratio<T: Real>(p: T, q: T) -> T {
    if p > T::zero() && q > T::zero() {
        p * (p.max(T::lit(LOG_FLOOR)) / q.max(T::lit(LOG_FLOOR))).log2()
    } else {
        T::zero()
    }
}

impl<T: Real> Channel<T> {
    pub fn new(d0: Response<T>, d1: Response<T>, prior: T) -> Result<Self> {
        if !(prior > T::zero() && prior < T::one()) {
            return Err(Error::InvalidParameter(format!(
                "prior must lie strictly between 0 and 1, got {prior}"
            )));
        }
        Ok(Channel { d0, d1, prior })
    }

    /// Balanced-prior channel.
    pub fn balanced(d0: Response<T>, d1: Response<T>) -> Self {
        Channel {
            d0,
            d1,
            prior: T::lit(0.5),
        }
    }

    pub fn d0(&self) -> &Response<T> {
        &self.d0
    }

    pub fn d1(&self) -> &Response<T> {
        &self.d1
    }

    /// `P(bit = 0)`.
    pub fn prior(&self) -> T {
        self.prior
    }

    /// Same channel with the bit labels exchanged.
    pub fn swapped(&self) -> Self {
        Channel {
            d0: self.d1,
            d1: self.d0,
            prior: T::one() - self.prior,
        }
    }

    pub fn cast<U: Real>(&self) -> Channel<U> {
        Channel {
            d0: self.d0.cast(),
            d1: self.d1.cast(),
            prior: U::lit(self.prior.to_f64().expect("finite prior")),
        }
    }

    /// Click density for the ensemble: `p0 d0(t) + p1 d1(t)`.
    pub fn mixture_density(&self, t: T) -> T {
        self.prior * self.d0.pdf(t) + (T::one() - self.prior) * self.d1.pdf(t)
    }

    /// Joint densities `(p0 d0(t), p1 d1(t))`.
    #[inline]
    fn joint(&self, t: T) -> (T, T) {
        (
            self.prior * self.d0.pdf(t),
            (T::one() - self.prior) * self.d1.pdf(t),
        )
    }

    /// Entropy of the secret bit, `H(X)`.
    pub fn bit_entropy(&self) -> T {
        -(xlog2x(self.prior) + xlog2x(T::one() - self.prior))
    }

    /// Union of both detectors' full supports.
    pub fn support(&self) -> (T, T) {
        let (a0, b0) = self.d0.support();
        let (a1, b1) = self.d1.support();
        (a0.min(a1), b0.max(b1))
    }

    fn breakpoints(&self) -> Vec<T> {
        let (lo, hi) = self.support();
        let finest = self
            .d0
            .tau_e()
            .min(self.d0.tau_g())
            .min(self.d1.tau_e())
            .min(self.d1.tau_g());
        uniform_breakpoints(lo, hi, finest)
    }

    /// Integrates `f` over the support, tightening the tolerance until the
    /// estimate stabilises.
    fn integrate_stable<F: Fn(T) -> T>(&self, f: F) -> T {
        let bp = self.breakpoints();
        let change = T::lit(T::QUAD_TOL * 1e4);
        let mut tol = T::lit(T::QUAD_TOL * 100.0);
        let mut prev = integrate(&f, &bp, tol).value;
        for _ in 0..2 {
            tol = tol / T::lit(10.0);
            let next = integrate(&f, &bp, tol).value;
            let settled = (next - prev).abs() < change;
            prev = next;
            if settled {
                break;
            }
        }
        prev
    }

    /// Mutual information between the secret bit and the timestamp, in bits.
    ///
    /// The `H(T)` and `H(X,T)` integrands are summed pointwise before
    /// integration, which removes the cancellation between two large
    /// differential entropies.
    pub fn mutual_information(&self) -> T {
        if self.d0 == self.d1 {
            return T::zero();
        }
        let h_x = self.bit_entropy();
        let neg_conditional = self.integrate_stable(|t| {
            let (p0, p1) = self.joint(t);
            let m = p0 + p1;
            xlog2ratio(p0, m) + xlog2ratio(p1, m)
        });
        (h_x + neg_conditional).max(T::zero()).min(h_x)
    }

    /// The three entropies separately; for inspection only.
    pub fn entropy_terms(&self) -> EntropyTerms<T> {
        let h_t = -self.integrate_stable(|t| xlog2x(self.mixture_density(t)));
        let h_xt = -self.integrate_stable(|t| {
            let (p0, p1) = self.joint(t);
            xlog2x(p0) + xlog2x(p1)
        });
        EntropyTerms {
            h_x: self.bit_entropy(),
            h_t,
            h_xt,
        }
    }

    /// Success probability of the maximum-a-posteriori guess of the bit from
    /// an exact timestamp: `integral of max(p0 d0, p1 d1)`.
    pub fn map_success(&self) -> T {
        self.integrate_stable(|t| {
            let (p0, p1) = self.joint(t);
            p0.max(p1)
        })
    }

    /// Joint bin masses `(p0 m0_k, p1 m1_k)` on `[phase + k w, phase + (k+1) w)`.
    fn bin_masses(&self, bin_width: T, phase: T) -> Result<Vec<(T, T)>> {
        if !(bin_width.is_finite() && bin_width > T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "bin width must be finite and > 0, got {bin_width}"
            )));
        }
        if !(phase >= T::zero() && phase < bin_width) {
            return Err(Error::InvalidArgument(format!(
                "bin phase must lie in [0, {bin_width}), got {phase}"
            )));
        }
        let (lo, hi) = self.support();
        let first = ((lo - phase) / bin_width).floor();
        let last = ((hi - phase) / bin_width).ceil();
        let nbins = (last - first).to_usize().unwrap_or(usize::MAX).max(1);
        if nbins > MAX_BINS {
            return Err(Error::InvalidArgument(format!(
                "bin width {bin_width} needs {nbins} bins over the support (limit {MAX_BINS})"
            )));
        }
        let (w0, w1) = (self.prior, T::one() - self.prior);
        let edge = |k: usize| phase + (first + T::lit(k as f64)) * bin_width;
        let mut left = (self.d0.cdf(edge(0)), self.d1.cdf(edge(0)));
        let mut out = Vec::with_capacity(nbins);
        for k in 1..=nbins {
            let e = edge(k);
            let right = (self.d0.cdf(e), self.d1.cdf(e));
            out.push((
                w0 * (right.0 - left.0).max(T::zero()),
                w1 * (right.1 - left.1).max(T::zero()),
            ));
            left = right;
        }
        Ok(out)
    }

    /// Mutual information between the bit and the index of the time bin
    /// `[phase + k w, phase + (k+1) w)` containing the click.
    pub fn binned_mutual_information(&self, bin_width: T, phase: T) -> Result<T> {
        let masses = self.bin_masses(bin_width, phase)?;
        let (w0, w1) = (self.prior, T::one() - self.prior);
        let mut mi = T::zero();
        for (q0, q1) in masses {
            let qb = q0 + q1;
            mi = mi + xlog2ratio(q0, w0 * qb) + xlog2ratio(q1, w1 * qb);
        }
        Ok(mi.max(T::zero()).min(self.bit_entropy()))
    }

    /// Mean of [`Self::binned_mutual_information`] over `phases` offsets
    /// evenly spaced in `[0, bin_width)`.
    pub fn binned_mutual_information_phase_averaged(&self, bin_width: T, phases: usize) -> Result<T> {
        if phases == 0 {
            return Err(Error::InvalidArgument("phase count must be >= 1".into()));
        }
        let mut acc = T::zero();
        for k in 0..phases {
            let phase = bin_width * T::lit(k as f64 / phases as f64);
            acc = acc + self.binned_mutual_information(bin_width, phase)?;
        }
        Ok(acc / T::lit(phases as f64))
    }

    /// MAP success when only the bin index is known.
    pub fn binned_map_success(&self, bin_width: T, phase: T) -> Result<T> {
        Ok(self
            .bin_masses(bin_width, phase)?
            .into_iter()
            .fold(T::zero(), |acc, (q0, q1)| acc + q0.max(q1)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    type R = Response<f64>;

    fn resp(t0: f64, te: f64, tg: f64) -> R {
        R::new(t0, te, tg).unwrap()
    }

    fn delayed(delta: f64) -> Channel<f64> {
        Channel::balanced(resp(0.0, 400.0, 290.0), resp(delta, 400.0, 290.0))
    }

    #[test]
    fn prior_must_be_open_unit_interval() {
        let r = resp(0.0, 1.0, 1.0);
        assert!(Channel::new(r, r, 0.0).is_err());
        assert!(Channel::new(r, r, 1.0).is_err());
        assert!(Channel::new(r, r, 0.3).is_ok());
    }

    #[test]
    fn mixture_examples() {
        let a = resp(0.0, 400.0, 290.0);
        let same = Channel::new(a, a, 0.3).unwrap();
        for t in [-2000.0, -300.0, 0.0, 800.0] {
            assert!((same.mixture_density(t) - a.pdf(t)).abs() < 1e-18);
        }
        let b = resp(300.0, 200.0, 500.0);
        let skewed = Channel::new(a, b, 1.0 - 1e-12).unwrap();
        for t in [-2000.0, -300.0, 0.0, 800.0] {
            assert!((skewed.mixture_density(t) - a.pdf(t)).abs() < 1e-9);
        }
        let far = Channel::balanced(a, resp(1e5, 400.0, 290.0));
        assert!((far.mixture_density(-200.0) - 0.5 * a.pdf(-200.0)).abs() < 1e-12);
    }

    #[test]
    fn identical_detectors_leak_nothing() {
        let a = resp(1138.0, 395.0, 288.0);
        assert!(Channel::balanced(a, a).mutual_information().abs() < 1e-6);
        assert!(Channel::new(a, a, 0.2).unwrap().mutual_information().abs() < 1e-6);
    }

    #[test]
    fn half_nanosecond_delay_leaks_over_a_quarter_bit() {
        assert!(delayed(500.0).mutual_information() > 0.25);
    }

    #[test]
    fn disjoint_supports_saturate() {
        let ch = Channel::balanced(resp(0.0, 50.0, 50.0), resp(100_000.0, 50.0, 50.0));
        assert!((ch.mutual_information() - 1.0).abs() < 1e-4);
        let ch = Channel::new(resp(0.0, 50.0, 50.0), resp(100_000.0, 50.0, 50.0), 0.2).unwrap();
        assert!((ch.mutual_information() - ch.bit_entropy()).abs() < 1e-4);
    }

    #[test]
    fn separate_entropy_terms_agree_with_combined_integrand() {
        for ch in [delayed(300.0), Channel::new(resp(0.0, 120.0, 700.0), resp(90.0, 400.0, 60.0), 0.35).unwrap()] {
            let terms = ch.entropy_terms();
            assert!((terms.mutual_information() - ch.mutual_information()).abs() < 1e-6);
        }
    }

    #[test]
    fn one_wide_bin_destroys_information() {
        let ch = delayed(500.0);
        let (lo, hi) = ch.support();
        let w = 10.0 * (hi - lo);
        // Phases that keep every bin edge outside the support, i.e. one occupied bin.
        for phase in [hi + 1.0, 0.5 * (hi + lo + w), lo + w - 1.0] {
            assert!(ch.binned_mutual_information(w, phase).unwrap().abs() < 1e-6);
        }
    }

    #[test]
    fn fine_bins_approach_continuous() {
        let ch = delayed(500.0);
        let cont = ch.mutual_information();
        let fine = ch.binned_mutual_information(1.0, 0.0).unwrap();
        assert!((cont - fine).abs() < 1e-3, "{cont} vs {fine}");
        assert!(fine <= cont + 1e-6);
    }

    #[test]
    fn coarser_bins_leak_less() {
        let ch = delayed(500.0);
        let cont = ch.mutual_information();
        let half = ch.binned_mutual_information_phase_averaged(500.0, 16).unwrap();
        let one = ch.binned_mutual_information_phase_averaged(1000.0, 16).unwrap();
        assert!(one < half && half < cont, "{one} {half} {cont}");
        let half0 = ch.binned_mutual_information(500.0, 0.0).unwrap();
        let one0 = ch.binned_mutual_information(1000.0, 0.0).unwrap();
        assert!(one0 < half0 && half0 < cont);
    }

    #[test]
    fn bin_argument_errors() {
        let ch = delayed(500.0);
        assert!(ch.binned_mutual_information(0.0, 0.0).is_err());
        assert!(ch.binned_mutual_information(-5.0, 0.0).is_err());
        assert!(ch.binned_mutual_information(100.0, 100.0).is_err());
        assert!(ch.binned_mutual_information(100.0, -1.0).is_err());
        assert!(ch.binned_mutual_information_phase_averaged(100.0, 0).is_err());
        assert!(ch.binned_mutual_information(1e-6, 0.0).is_err());
    }

    #[test]
    fn phase_average_bounds() {
        let ch = delayed(700.0);
        let w = 1000.0;
        assert_eq!(
            ch.binned_mutual_information_phase_averaged(w, 1).unwrap(),
            ch.binned_mutual_information(w, 0.0).unwrap()
        );
        let vals: Vec<f64> = (0..8)
            .map(|k| ch.binned_mutual_information(w, w * k as f64 / 8.0).unwrap())
            .collect();
        let avg = ch.binned_mutual_information_phase_averaged(w, 8).unwrap();
        let (mn, mx) = vals.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(mn <= avg + 1e-15 && avg <= mx + 1e-15);
    }

    #[test]
    fn map_success_limits() {
        let a = resp(0.0, 400.0, 290.0);
        assert!((Channel::balanced(a, a).map_success() - 0.5).abs() < 1e-9);
        let far = Channel::balanced(a, resp(1e5, 400.0, 290.0));
        assert!((far.map_success() - 1.0).abs() < 1e-9);
        let ch = delayed(500.0);
        let s = ch.map_success();
        let sb = ch.binned_map_success(1000.0, 0.0).unwrap();
        assert!(sb <= s + 1e-9 && sb >= 0.5);
    }

    #[test]
    fn f32_channel_tracks_f64() {
        let ch = delayed(500.0);
        let c32: Channel<f32> = ch.cast();
        let (a, b) = (c32.mutual_information() as f64, ch.mutual_information());
        assert!((a - b).abs() < 1e-4, "{a} vs {b}");
    }

    fn arb_channel() -> impl Strategy<Value = Channel<f64>> {
        (
            -3000.0f64..3000.0,
            100.0f64..1000.0,
            100.0f64..1000.0,
            -1500.0f64..1500.0,
            100.0f64..1000.0,
            100.0f64..1000.0,
            0.05f64..0.95,
        )
            .prop_map(|(t0, te0, tg0, dt, te1, tg1, p)| {
                Channel::new(resp(t0, te0, tg0), resp(t0 + dt, te1, tg1), p).unwrap()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn mi_bounds_and_data_processing(ch in arb_channel(), w in 50.0f64..3000.0, frac in 0.0f64..1.0) {
            let mi = ch.mutual_information();
            prop_assert!(mi >= 0.0 && mi <= ch.bit_entropy() + 1e-12);
            let binned = ch.binned_mutual_information(w, frac * w * 0.999).unwrap();
            prop_assert!(binned >= 0.0 && binned <= mi + 1e-6);
        }

        #[test]
        fn nested_bins_refine(ch in arb_channel(), w in 100.0f64..3000.0, frac in 0.0f64..1.0) {
            let phase = frac * w * 0.999;
            let coarse = ch.binned_mutual_information(w, phase).unwrap();
            let fine = ch.binned_mutual_information(w / 2.0, phase % (w / 2.0)).unwrap();
            prop_assert!(fine >= coarse - 1e-6);
        }

        #[test]
        fn relabeling_invariance(ch in arb_channel()) {
            let a = ch.mutual_information();
            let b = ch.swapped().mutual_information();
            prop_assert!((a - b).abs() < 1e-6);
        }

        #[test]
        fn translation_and_unit_invariance(ch in arb_channel(), shift in -5000.0f64..5000.0) {
            let a = ch.mutual_information();
            let moved = Channel::new(
                ch.d0().with_offset(ch.d0().t0() + shift),
                ch.d1().with_offset(ch.d1().t0() + shift),
                ch.prior(),
            ).unwrap();
            prop_assert!((moved.mutual_information() - a).abs() < 1e-6);
            let ns = |r: &R| resp(r.t0() / 1000.0, r.tau_e() / 1000.0, r.tau_g() / 1000.0);
            let scaled = Channel::new(ns(ch.d0()), ns(ch.d1()), ch.prior()).unwrap();
            prop_assert!((scaled.mutual_information() - a).abs() < 1e-6);
        }
    }
}
