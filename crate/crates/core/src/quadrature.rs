//! Globally adaptive Gauss–Kronrod (7/15) quadrature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::scalar::Real;

/// Hard cap on the number of live subintervals.
pub const MAX_INTERVALS: usize = 50_000;

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult<T> {
    pub value: T,
    /// Estimated absolute error of `value`.
    pub error: T,
    pub intervals: usize,
    /// False when the interval cap was hit before the tolerance was met.
    pub converged: bool,
}

struct Segment<T> {
    lo: T,
    hi: T,
    value: T,
    error: T,
}

impl<T: Real> PartialEq for Segment<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<T: Real> Eq for Segment<T> {}
impl<T: Real> PartialOrd for Segment<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Real> Ord for Segment<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        let a = self.error.to_f64().unwrap_or(f64::NAN);
        let b = other.error.to_f64().unwrap_or(f64::NAN);
        a.total_cmp(&b)
    }
}

fn kronrod<T: Real, F: Fn(T) -> T>(f: &F, lo: T, hi: T) -> Segment<T> {
    let half = T::lit(0.5);
    let center = half * (lo + hi);
    let radius = half * (hi - lo);

    let fc = f(center);
    let mut kron = fc * T::lit(WGK[7]);
    let mut gauss = fc * T::lit(WG[3]);
    let mut fv = [(T::zero(), T::zero()); 7];
    for (j, slot) in fv.iter_mut().enumerate() {
        let dx = radius * T::lit(XGK[j]);
        let (f1, f2) = (f(center - dx), f(center + dx));
        kron = kron + T::lit(WGK[j]) * (f1 + f2);
        if j % 2 == 1 {
            gauss = gauss + T::lit(WG[j / 2]) * (f1 + f2);
        }
        *slot = (f1, f2);
    }

    // QUADPACK-style error scaling.
    let mean = kron * half;
    let mut resasc = T::lit(WGK[7]) * (fc - mean).abs();
    for (j, &(f1, f2)) in fv.iter().enumerate() {
        resasc = resasc + T::lit(WGK[j]) * ((f1 - mean).abs() + (f2 - mean).abs());
    }
    let value = kron * radius;
    resasc = resasc * radius.abs();
    let mut error = ((kron - gauss) * radius).abs();
    if resasc > T::zero() && error > T::zero() {
        let scale = (T::lit(200.0) * error / resasc).powf(T::lit(1.5));
        error = resasc * scale.min(T::one());
    }
    let roundoff = T::lit(50.0) * T::epsilon() * (value.abs());
    if error < roundoff {
        error = roundoff;
    }
    Segment {
        lo,
        hi,
        value,
        error,
    }
}

/// Integrates `f` over `[breakpoints[0], breakpoints[last]]` to absolute
/// tolerance `tol`.
///
/// Every adjacent pair of breakpoints starts as its own subinterval, so narrow
/// features must be covered by the initial partition. The subinterval with the
/// largest error estimate is bisected until the summed error is within `tol`.
pub fn integrate<T: Real, F: Fn(T) -> T>(f: F, breakpoints: &[T], tol: T) -> QuadResult<T> {
    assert!(breakpoints.len() >= 2, "need at least two breakpoints");
    let mut heap: BinaryHeap<Segment<T>> = breakpoints
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| kronrod(&f, w[0], w[1]))
        .collect();

    let total_error = |h: &BinaryHeap<Segment<T>>| h.iter().fold(T::zero(), |acc, s| acc + s.error);
    let mut converged = true;
    while total_error(&heap) > tol {
        if heap.len() >= MAX_INTERVALS {
            converged = false;
            break;
        }
        let Some(worst) = heap.pop() else { break };
        let mid = T::lit(0.5) * (worst.lo + worst.hi);
        if !(mid > worst.lo && mid < worst.hi) {
            // Interval no longer splittable in this precision.
            heap.push(worst);
            converged = false;
            break;
        }
        heap.push(kronrod(&f, worst.lo, mid));
        heap.push(kronrod(&f, mid, worst.hi));
    }

    // Sum in position order so the result does not depend on heap layout.
    let mut segments = heap.into_vec();
    segments.sort_by(|a, b| {
        a.lo.partial_cmp(&b.lo).unwrap_or(Ordering::Equal)
    });
    let value = segments.iter().fold(T::zero(), |acc, s| acc + s.value);
    let error = segments.iter().fold(T::zero(), |acc, s| acc + s.error);
    QuadResult {
        value,
        error,
        intervals: segments.len(),
        converged,
    }
}

/// Evenly spaced breakpoints over `[lo, hi]` with spacing at most `max_width`.
pub fn uniform_breakpoints<T: Real>(lo: T, hi: T, max_width: T) -> Vec<T> {
    let span = hi - lo;
    let pieces = (span / max_width)
        .ceil()
        .to_usize()
        .unwrap_or(1)
        .clamp(1, MAX_INTERVALS / 4);
    let step = span / T::lit(pieces as f64);
    let mut pts: Vec<T> = (0..pieces)
        .map(|k| lo + step * T::lit(k as f64))
        .collect();
    pts.push(hi);
    pts
}
