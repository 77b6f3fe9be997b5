use serde::{Deserialize, Serialize};

use super::histogram::TimingHistogram;
use super::simplex::nelder_mead;
use crate::error::{Error, Result};
use crate::format::sig6;
use crate::leakage::render_rows;
use crate::DetectorResponse;

/// Fits on fewer events than this are refused.
pub const MIN_EVENTS: u64 = 1000;
/// Default cap on simplex iterations.
pub const MAX_ITERATIONS: usize = 10_000;

const FTOL_REL: f64 = 1e-10;
const XTOL_PS: f64 = 1e-3;
const MASS_FLOOR: f64 = 1e-300;
const GOF_MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Starting point; [`initial_guess`] is used when absent.
    pub guess: Option<DetectorResponse>,
    /// Adds a uniform background fraction over the histogram range.
    pub background: bool,
    /// Raises the refusal threshold above [`MIN_EVENTS`].
    pub min_events: u64,
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            guess: None,
            background: false,
            min_events: MIN_EVENTS,
            max_iterations: MAX_ITERATIONS,
        }
    }
}

/// Per-parameter standard errors in picoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StdErrors {
    pub t0_ps: f64,
    pub tau_e_ps: f64,
    pub tau_g_ps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: DetectorResponse,
    pub std_errors: StdErrors,
    pub chi2_per_dof: f64,
    pub n_iterations: usize,
    pub converged: bool,
    /// Poisson log-likelihood of the counts at `params`.
    pub log_likelihood: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background_fraction: Option<f64>,
}

impl FitResult {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("fit result serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            line: e.span().map(|s| text[..s.start].matches('\n').count() + 1).unwrap_or(0),
            message: e.message().to_string(),
        })
    }

    pub fn render_text(&self) -> String {
        let p = &self.params;
        let se = &self.std_errors;
        let pm = |v: f64, e: f64| format!("{} ± {}", sig6(v), sig6(e));
        let mut rows = vec![
            ("t0_ps".to_string(), pm(p.t0(), se.t0_ps)),
            ("tau_e_ps".to_string(), pm(p.tau_e(), se.tau_e_ps)),
            ("tau_g_ps".to_string(), pm(p.tau_g(), se.tau_g_ps)),
        ];
        if let Some(f) = self.background_fraction {
            rows.push(("background_fraction".into(), sig6(f)));
        }
        rows.extend([
            ("chi2_per_dof".to_string(), sig6(self.chi2_per_dof)),
            ("log_likelihood".to_string(), sig6(self.log_likelihood)),
            ("iterations".to_string(), self.n_iterations.to_string()),
            ("converged".to_string(), self.converged.to_string()),
        ]);
        render_rows(&rows)
    }
}

/// Expected fraction of events in each bin.
fn bin_masses(hist: &TimingHistogram, resp: &DetectorResponse) -> Vec<f64> {
    let mut lo = resp.cdf(hist.edge(0));
    (0..hist.len())
        .map(|k| {
            let hi = resp.cdf(hist.edge(k + 1));
            let m = hi - lo;
            lo = hi;
            m.max(0.0)
        })
        .collect()
}

fn expected_counts(hist: &TimingHistogram, resp: &DetectorResponse, background: f64) -> Vec<f64> {
    let n = hist.total() as f64;
    let flat = 1.0 / hist.len() as f64;
    bin_masses(hist, resp)
        .into_iter()
        .map(|m| n * ((1.0 - background) * m + background * flat))
        .collect()
}

/// Poisson log-likelihood `Σ n ln μ − μ − ln n!` of the counts, with
/// `μ = total · mass` per bin.
pub fn poisson_log_likelihood(hist: &TimingHistogram, resp: &DetectorResponse) -> f64 {
    log_likelihood(hist, &expected_counts(hist, resp, 0.0))
}

fn log_likelihood(hist: &TimingHistogram, mu: &[f64]) -> f64 {
    hist.counts()
        .iter()
        .zip(mu)
        .map(|(&c, &m)| {
            let n = c as f64;
            let m = m.max(MASS_FLOOR);
            n * m.ln() - m - libm::lgamma(n + 1.0)
        })
        .sum()
}

/// Half the Poisson deviance; minimized where the likelihood peaks and
/// of order the bin count there, which keeps relative tolerances meaningful.
fn half_deviance(hist: &TimingHistogram, mu: &[f64]) -> f64 {
    hist.counts()
        .iter()
        .zip(mu)
        .map(|(&c, &m)| {
            let m = m.max(MASS_FLOOR);
            if c == 0 {
                m
            } else {
                let n = c as f64;
                m - n + n * (n / m).ln()
            }
        })
        .sum()
}

/// Model parameters in natural units: `[t0, tau_e, tau_g]` plus an optional
/// background fraction.
struct Objective<'a> {
    hist: &'a TimingHistogram,
    background: bool,
}

impl Objective<'_> {
    fn response(&self, p: &[f64]) -> Option<DetectorResponse> {
        DetectorResponse::new(p[0], p[1], p[2]).ok()
    }

    fn mu(&self, p: &[f64]) -> Option<Vec<f64>> {
        let bg = if self.background { p[3] } else { 0.0 };
        if !(0.0..1.0).contains(&bg) {
            return None;
        }
        Some(expected_counts(self.hist, &self.response(p)?, bg))
    }

    fn value(&self, p: &[f64]) -> f64 {
        match self.mu(p) {
            Some(mu) => half_deviance(self.hist, &mu),
            None => f64::INFINITY,
        }
    }

    fn natural(&self, x: &[f64]) -> Vec<f64> {
        let mut p = vec![x[0], x[1].exp(), x[2].exp()];
        if self.background {
            p.push(1.0 / (1.0 + (-x[3]).exp()));
        }
        p
    }

    fn search(&self, p: &[f64]) -> Vec<f64> {
        let mut x = vec![p[0], p[1].ln(), p[2].ln()];
        if self.background {
            let f = p[3].clamp(1e-9, 1.0 - 1e-9);
            x.push((f / (1.0 - f)).ln());
        }
        x
    }

    fn step(p: &[f64], i: usize) -> f64 {
        if i < 3 {
            (1e-3 * p[i].abs()).max(1e-2)
        } else {
            1e-4
        }
    }

    /// Central-difference gradient and Hessian in natural parameters. The
    /// gradient uses a step 100 times finer than the Hessian to keep its
    /// truncation error well below the Newton stopping threshold.
    fn derivatives(&self, p: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = p.len();
        let f0 = self.value(p);
        let at = |di: &[(usize, f64)]| {
            let mut q = p.to_vec();
            for &(i, d) in di {
                q[i] += d;
            }
            self.value(&q)
        };
        let h: Vec<f64> = (0..n).map(|i| Self::step(p, i)).collect();
        let mut grad = vec![0.0; n];
        let mut hess = vec![vec![0.0; n]; n];
        for i in 0..n {
            let g = h[i] / 100.0;
            grad[i] = (at(&[(i, g)]) - at(&[(i, -g)])) / (2.0 * g);
            let fp = at(&[(i, h[i])]);
            let fm = at(&[(i, -h[i])]);
            hess[i][i] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
            for j in 0..i {
                let v = (at(&[(i, h[i]), (j, h[j])]) - at(&[(i, h[i]), (j, -h[j])])
                    - at(&[(i, -h[i]), (j, h[j])])
                    + at(&[(i, -h[i]), (j, -h[j])]))
                    / (4.0 * h[i] * h[j]);
                hess[i][j] = v;
                hess[j][i] = v;
            }
        }
        (grad, hess)
    }
}

/// Lower Cholesky factor, or `None` unless `a` is positive definite.
fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            if i == j {
                if !(s > 0.0 && s.is_finite()) {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

fn cholesky_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = l.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        y[i] = (b[i] - (0..i).map(|k| l[i][k] * y[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        x[i] = (y[i] - (i + 1..n).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    x
}

fn inverse_diagonal(l: &[Vec<f64>]) -> Vec<f64> {
    let n = l.len();
    (0..n)
        .map(|i| {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            cholesky_solve(l, &e)[i]
        })
        .collect()
}

/// Maximum-likelihood fit of a detector response to binned counts.
///
/// The simplex search runs on `(t0, ln tau_e, ln tau_g)` and is followed by
/// Newton steps on the numerical Hessian. `converged` requires the simplex
/// tolerances, a final Newton step below 1e-3 ps and a positive definite
/// Hessian. Standard errors come from the inverse Hessian of the negative
/// log-likelihood.
pub fn fit_response(hist: &TimingHistogram, opts: &FitOptions) -> Result<FitResult> {
    let threshold = opts.min_events.max(MIN_EVENTS);
    if hist.total() < threshold {
        return Err(Error::InsufficientData(format!(
            "histogram holds {} events, fitting needs at least {threshold}",
            hist.total()
        )));
    }
    let seed = opts.guess.unwrap_or_else(|| initial_guess(hist));
    let obj = Objective {
        hist,
        background: opts.background,
    };
    let mut p0 = vec![seed.t0(), seed.tau_e(), seed.tau_g()];
    if opts.background {
        p0.push(0.01);
    }

    let mut x = obj.search(&p0);
    let f = |x: &[f64]| obj.value(&obj.natural(x));
    let mut fx = f(&x);
    let mut iterations = 0;
    let mut nm_converged = false;
    let mut scale = 0.2;
    // Restart from the best vertex until a fresh simplex confirms the minimum.
    while iterations < opts.max_iterations {
        let p = obj.natural(&x);
        let steps: Vec<f64> = (0..x.len())
            .map(|i| if i == 0 { scale * p[1].max(p[2]) } else { scale })
            .collect();
        let xtol: Vec<f64> = (0..x.len())
            .map(|i| match i {
                0 => XTOL_PS,
                1 | 2 => XTOL_PS / p[i],
                _ => 1e-6,
            })
            .collect();
        let m = nelder_mead(f, &x, &steps, &xtol, FTOL_REL, opts.max_iterations - iterations);
        iterations += m.iterations;
        let improved = fx - m.fx > FTOL_REL * m.fx.abs().max(1e-300);
        if m.fx <= fx {
            x = m.x;
            fx = m.fx;
        }
        if m.converged && !improved {
            nm_converged = true;
            break;
        }
        scale = 0.05;
    }

    // Newton polish in natural parameters.
    let mut p = obj.natural(&x);
    let mut newton_ok = false;
    let mut factor = None;
    for _ in 0..20 {
        let (grad, hess) = obj.derivatives(&p);
        let Some(l) = cholesky(&hess) else {
            factor = None;
            break;
        };
        let delta = cholesky_solve(&l, &grad);
        let size = delta[..3].iter().fold(0.0f64, |a, d| a.max(d.abs()));
        factor = Some(l);
        if size < XTOL_PS {
            newton_ok = true;
            break;
        }
        let mut accepted = false;
        let mut t = 1.0;
        for _ in 0..30 {
            let q: Vec<f64> = p.iter().zip(&delta).map(|(a, d)| a - t * d).collect();
            if obj.value(&q) <= obj.value(&p) {
                p = q;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if !newton_ok {
        factor = cholesky(&obj.derivatives(&p).1);
    }

    let params = DetectorResponse::new(p[0], p[1], p[2])?;
    let variances = factor.as_ref().map(|l| inverse_diagonal(l));
    let se = |i: usize| variances.as_ref().map_or(f64::NAN, |v| v[i].max(0.0).sqrt());
    let mu = obj.mu(&p).expect("optimum is feasible");
    Ok(FitResult {
        params,
        std_errors: StdErrors {
            t0_ps: se(0),
            tau_e_ps: se(1),
            tau_g_ps: se(2),
        },
        chi2_per_dof: goodness_of_fit(hist, &params)?,
        n_iterations: iterations,
        converged: nm_converged && newton_ok && factor.is_some(),
        log_likelihood: log_likelihood(hist, &mu),
        background_fraction: opts.background.then(|| p[3]),
    })
}

/// Moment-based starting point for [`fit_response`].
///
/// The early exponential tail shows up as negative skew; its third central
/// moment `-2 tau_e^3` sets `tau_e` and the remaining variance sets `tau_g`.
/// Without usable negative skew both widths fall back to `sd / sqrt(2)`.
/// Widths never drop below half a bin.
pub fn initial_guess(hist: &TimingHistogram) -> DetectorResponse {
    let n = hist.total() as f64;
    let w = hist.bin_width();
    let floor = w / 2.0;
    let centers: Vec<(f64, f64)> = hist
        .counts()
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(k, &c)| (hist.center(k), c as f64))
        .collect();
    let mean = centers.iter().map(|(t, c)| t * c).sum::<f64>() / n;
    let central = |p: i32| centers.iter().map(|(t, c)| c * (t - mean).powi(p)).sum::<f64>() / n;
    let var = (central(2) - w * w / 12.0).max(0.0);
    let m3 = central(3);
    let sd = var.sqrt();
    let skew = if sd > 0.0 { m3 / (sd * sd * sd) } else { 0.0 };

    let (tau_e, tau_g) = if skew < -1e-3 {
        let te = (-m3 / 2.0).cbrt().min((0.9 * var).sqrt());
        (te, (2.0 * (var - te * te)).sqrt())
    } else {
        let s = sd / std::f64::consts::SQRT_2;
        (s, s)
    };
    let (tau_e, tau_g) = (tau_e.max(floor), tau_g.max(floor));
    let t0 = mean + tau_e - tau_g * tau_g / (2.0 * tau_e);
    DetectorResponse::new(t0, tau_e, tau_g).expect("seed widths are positive")
}

/// Pearson chi-square per degree of freedom of `hist` against `resp`.
///
/// Expected counts include the model mass beyond either end of the
/// histogram in the outermost bins. Starting at the peak, bins are grouped
/// outward until each group expects at least 5 events; a sparse remainder
/// at either end joins its neighbouring group. Degrees of freedom are the
/// number of groups minus 3.
pub fn goodness_of_fit(hist: &TimingHistogram, resp: &DetectorResponse) -> Result<f64> {
    let n = hist.total() as f64;
    let len = hist.len();
    let mut expected = vec![0.0; len];
    let mut lo = 0.0;
    for (k, e) in expected.iter_mut().enumerate() {
        let hi = if k + 1 == len { 1.0 } else { resp.cdf(hist.edge(k + 1)) };
        *e = n * (hi - lo).max(0.0);
        lo = hi;
    }
    let observed: Vec<f64> = hist.counts().iter().map(|&c| c as f64).collect();
    let peak = (0..len)
        .max_by(|&a, &b| expected[a].total_cmp(&expected[b]))
        .expect("non-empty histogram");

    // Each side runs outward from the peak; leftovers join the outermost group.
    let grouped = |range: &mut dyn Iterator<Item = usize>| {
        let mut out: Vec<(f64, f64)> = Vec::new();
        let (mut o, mut e) = (0.0, 0.0);
        for k in range {
            o += observed[k];
            e += expected[k];
            if e >= GOF_MIN_EXPECTED {
                out.push((o, e));
                (o, e) = (0.0, 0.0);
            }
        }
        match out.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None if e > 0.0 || o > 0.0 => out.push((o, e)),
            None => {}
        }
        out
    };
    let mut groups = grouped(&mut (0..=peak).rev());
    groups.reverse();
    groups.extend(grouped(&mut (peak + 1..len)));
    while groups.len() > 1 {
        let Some(k) = groups.iter().position(|g| g.1 < GOF_MIN_EXPECTED) else {
            break;
        };
        let g = groups.remove(k);
        let j = if k < groups.len() { k } else { k - 1 };
        groups[j].0 += g.0;
        groups[j].1 += g.1;
    }
    if groups.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "only {} bin groups expect at least {GOF_MIN_EXPECTED} events, need 5",
            groups.len()
        )));
    }
    let chi2: f64 = groups.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    Ok(chi2 / (groups.len() - 3) as f64)
}
