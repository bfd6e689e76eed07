//! The convolution kernel of the strip Hilbert transform.
//!
//! For strip height `d > 0` the kernel is
//!
//! ```text
//! beta(s) = -s/d + (pi/d) coth(pi s / 2d)
//!           + (pi/d) sum_{n>=1} 2 sinh(pi s/d) / (cosh(pi s/d) - cosh(2 pi^2 n/d))
//! ```
//!
//! Every evaluation sums the series until an analytic bound on the remaining
//! tail drops below the configured tolerance, so returned values carry a
//! certified truncation error. A second (bilateral `coth`) form of the same
//! series is available for cross-validation.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Evaluation settings for the kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    /// Strip height `d = k h`.
    pub d: f64,
    /// Hard cap on the number of series terms.
    pub max_terms: usize,
    /// Absolute bound required on the truncated tail.
    pub tail_tol: f64,
}

impl KernelConfig {
    pub const DEFAULT_MAX_TERMS: usize = 2_000_000;
    pub const DEFAULT_TAIL_TOL: f64 = 1e-13;

    pub fn new(d: f64) -> Self {
        Self {
            d,
            max_terms: Self::DEFAULT_MAX_TERMS,
            tail_tol: Self::DEFAULT_TAIL_TOL,
        }
    }

    /// Same settings for a different strip height.
    pub fn with_depth(&self, d: f64) -> Self {
        Self { d, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d.is_finite() && self.d > 0.0) {
            return Err(Error::InvalidParams(format!(
                "strip height must be positive, got {}",
                self.d
            )));
        }
        if self.max_terms == 0 {
            return Err(Error::InvalidParams("max_terms must be positive".into()));
        }
        if !(self.tail_tol.is_finite() && self.tail_tol > 0.0) {
            return Err(Error::InvalidParams("tail_tol must be positive".into()));
        }
        Ok(())
    }
}

/// A kernel value together with its certified truncation bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValue {
    pub value: f64,
    pub tail_bound: f64,
    pub terms: usize,
}

pub(crate) fn coth(x: f64) -> f64 {
    if x > 20.0 {
        1.0 + 2.0 * (-2.0 * x).exp()
    } else if x < -20.0 {
        -1.0 - 2.0 * (2.0 * x).exp()
    } else {
        1.0 / x.tanh()
    }
}

/// `coth(x) - 1` for `x > 0`, without cancellation.
fn coth_minus_one(x: f64) -> f64 {
    2.0 / (2.0 * x).exp_m1()
}

/// `csch(x)^2` for `x > 0`, overflow free.
fn csch_sq(x: f64) -> f64 {
    let e = (-2.0 * x).exp();
    let den = -(-2.0 * x).exp_m1();
    4.0 * e / (den * den)
}

/// `ln(sinh(x))` for `x > 0`, overflow free.
fn ln_sinh(x: f64) -> f64 {
    if x > 20.0 {
        x - std::f64::consts::LN_2 + (-(-2.0 * x).exp()).ln_1p()
    } else {
        x.sinh().ln()
    }
}

/// Reduce `s` to `(0, pi]` using oddness and periodicity; returns `(sign, r)`.
fn reduce(s: f64) -> Result<(f64, f64)> {
    if !s.is_finite() {
        return Err(Error::KernelSingular(s));
    }
    let two_pi = 2.0 * PI;
    let t = s.abs() % two_pi;
    let (flip, r) = if t > PI { (-1.0, two_pi - t) } else { (1.0, t) };
    if r <= 1e-300 {
        return Err(Error::KernelSingular(s));
    }
    Ok((flip * s.signum(), r))
}

/// Remaining-sum bound for the value series after `n` terms.
fn value_tail(d: f64, a: f64, b: f64, n: usize) -> f64 {
    let u = b * n as f64;
    let t = (-(-(u + a)).exp()).ln_1p() - (-(-(u - a)).exp()).ln_1p();
    (PI / d) * (2.0 / b) * t.max(0.0)
}

/// Remaining-sum bound for the derivative series after `n` terms.
fn derivative_tail(d: f64, a: f64, b: f64, n: usize) -> f64 {
    let u = b * n as f64;
    (PI / d) * (PI / d) * (2.0 / b) * (1.0 / (u + a).exp_m1() + 1.0 / (u - a).exp_m1())
}

fn series_value(r: f64, cfg: &KernelConfig, regular: bool) -> Result<KernelValue> {
    let d = cfg.d;
    let a = PI * r / d;
    let b = 2.0 * PI * PI / d;
    let ln_sa = ln_sinh(a);
    let mut sum = 0.0;
    let mut tail = f64::INFINITY;
    let mut n = 0;
    while n < cfg.max_terms {
        n += 1;
        let u = b * n as f64;
        let p = 0.5 * (u + a);
        let q = 0.5 * (u - a);
        // 2 sinh(a) / (cosh(a) - cosh(u)) = -sinh(a) / (sinh(p) sinh(q))
        sum -= (ln_sa - ln_sinh(p) - ln_sinh(q)).exp();
        tail = value_tail(d, a, b, n);
        if tail <= cfg.tail_tol {
            break;
        }
    }
    if tail > cfg.tail_tol {
        return Err(Error::KernelTail {
            terms: n,
            achieved: tail,
        });
    }
    let lead = if regular {
        0.0
    } else {
        (PI / d) * coth(0.5 * a)
    };
    Ok(KernelValue {
        value: -r / d + lead + (PI / d) * sum,
        tail_bound: tail,
        terms: n,
    })
}

/// Certified evaluation of the kernel at `s`.
pub fn beta_certified(s: f64, cfg: &KernelConfig) -> Result<KernelValue> {
    cfg.validate()?;
    let (sign, r) = reduce(s)?;
    let mut v = series_value(r, cfg, false)?;
    v.value *= sign;
    #[cfg(feature = "validate-kernel")]
    {
        let w = beta_bilateral(s, cfg)?;
        let scale = 1.0 + v.value.abs();
        if (w.value - v.value).abs() > 1e-10 * scale {
            return Err(Error::Certification(format!(
                "kernel series forms disagree at s = {s}: {} vs {}",
                v.value, w.value
            )));
        }
    }
    Ok(v)
}

/// Kernel value at `s` (see [`beta_certified`] for the error bound).
pub fn beta_eval(s: f64, cfg: &KernelConfig) -> Result<f64> {
    beta_certified(s, cfg).map(|v| v.value)
}

/// Kernel evaluated through the bilateral `coth` series.
pub fn beta_bilateral(s: f64, cfg: &KernelConfig) -> Result<KernelValue> {
    cfg.validate()?;
    let (sign, r) = reduce(s)?;
    let d = cfg.d;
    let a = PI * r / d;
    let b = 2.0 * PI * PI / d;
    let mut sum = coth(0.5 * a);
    let mut tail = f64::INFINITY;
    let mut n = 0;
    while n < cfg.max_terms {
        n += 1;
        let shift = PI * (2.0 * PI * n as f64) / (2.0 * d);
        let plus = shift + 0.5 * a;
        let minus = shift - 0.5 * a;
        // {coth(plus) - 1} + {-coth(minus) + 1}
        sum += coth_minus_one(plus) - coth_minus_one(minus);
        tail = value_tail(d, a, b, n);
        if tail <= cfg.tail_tol {
            break;
        }
    }
    if tail > cfg.tail_tol {
        return Err(Error::KernelTail {
            terms: n,
            achieved: tail,
        });
    }
    Ok(KernelValue {
        value: sign * (-r / d + (PI / d) * sum),
        tail_bound: tail,
        terms: n,
    })
}

/// Certified evaluation of the kernel derivative at `s`.
pub fn beta_prime_certified(s: f64, cfg: &KernelConfig) -> Result<KernelValue> {
    cfg.validate()?;
    let (_, r) = reduce(s)?;
    let d = cfg.d;
    let a = PI * r / d;
    let b = 2.0 * PI * PI / d;
    let mut sum = 0.0;
    let mut tail = f64::INFINITY;
    let mut n = 0;
    while n < cfg.max_terms {
        n += 1;
        let u = b * n as f64;
        sum += csch_sq(0.5 * (u + a)) + csch_sq(0.5 * (u - a));
        tail = derivative_tail(d, a, b, n);
        if tail <= cfg.tail_tol {
            break;
        }
    }
    if tail > cfg.tail_tol {
        return Err(Error::KernelTail {
            terms: n,
            achieved: tail,
        });
    }
    let c = PI * PI / (2.0 * d * d);
    Ok(KernelValue {
        value: -1.0 / d - c * csch_sq(0.5 * a) - c * sum,
        tail_bound: tail,
        terms: n,
    })
}

/// Kernel derivative at `s`; even in `s` and negative away from `2 pi Z`.
pub fn beta_prime_eval(s: f64, cfg: &KernelConfig) -> Result<f64> {
    beta_prime_certified(s, cfg).map(|v| v.value)
}

/// `beta(s) - (pi/d) coth(pi s/2d)`, which extends continuously to `s = 0`.
pub fn beta_regular(s: f64, cfg: &KernelConfig) -> Result<f64> {
    cfg.validate()?;
    if s == 0.0 {
        return Ok(0.0);
    }
    if s.abs() > PI {
        return Err(Error::InvalidParams(format!(
            "regular part is provided on [-pi, pi], got s = {s}"
        )));
    }
    let v = series_value(s.abs(), cfg, true)?;
    Ok(s.signum() * v.value)
}

/// `beta(pi/2)` from the closed series in the variable `x = pi^2 / 2d`.
pub fn beta_half_pi_alt(cfg: &KernelConfig) -> Result<f64> {
    cfg.validate()?;
    let x = PI * PI / (2.0 * cfg.d);
    let mut sum = 0.0;
    let ln_num = (4.0 * x).ln() + ln_sinh(x);
    for n in 1..=cfg.max_terms {
        let nf = n as f64;
        // 4x sinh x / (cosh 4nx - cosh x) with the denominator factored
        let term = (ln_num
            - std::f64::consts::LN_2
            - ln_sinh(0.5 * (4.0 * nf + 1.0) * x)
            - ln_sinh(0.5 * (4.0 * nf - 1.0) * x))
        .exp();
        sum += term;
        if term <= 1e-18 * sum.abs().max(1e-300) || term == 0.0 {
            return Ok((2.0 * x * coth(0.5 * x) - x - sum) / PI);
        }
    }
    Err(Error::KernelTail {
        terms: cfg.max_terms,
        achieved: f64::NAN,
    })
}

/// The proven lower bound `(pi - 2)/pi` on `beta(pi/2)`.
pub fn strpos_bound() -> f64 {
    (PI - 2.0) / PI
}

/// A single offending sample in a kernel study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelViolation {
    pub d: f64,
    pub s: f64,
    pub what: String,
}

/// One strip height in a kernel study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelRow {
    pub d: f64,
    pub beta_half_pi: f64,
    pub beta_pi: f64,
    /// Largest tail bound over all evaluations for this `d`.
    pub tail_bound: f64,
    pub positive_ok: bool,
    pub monotone_ok: bool,
    /// `beta(pi/2) - (pi - 2)/pi`.
    pub strpos_margin: f64,
}

/// Outcome of [`lemma1_verify`] or [`conjecture_scan`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelReport {
    pub rows: Vec<KernelRow>,
    pub violations: Vec<KernelViolation>,
    pub min_margin: f64,
    /// Smallest `beta(pi/2)` over the grid.
    pub min_beta_half_pi: f64,
    /// Whether `beta(pi/2) >= 1` held on every grid point (reported only).
    pub conjecture_holds: bool,
    /// `|beta(pi/2) - 1|` at the largest `d` of the grid.
    pub limit_distance: f64,
}

impl KernelReport {
    pub fn all_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "d",
            "beta_half_pi",
            "tail_bound",
            "monotone_ok",
            "strpos_margin",
        ])?;
        for r in &self.rows {
            w.write_record([
                format!("{:e}", r.d),
                format!("{:.17e}", r.beta_half_pi),
                format!("{:e}", r.tail_bound),
                r.monotone_ok.to_string(),
                format!("{:.17e}", r.strpos_margin),
            ])?;
        }
        w.flush()
    }
}

/// Number of interior samples used for positivity and monotonicity.
pub const LEMMA_SAMPLES: usize = 64;

fn study_row(
    d: f64,
    cfg: &KernelConfig,
    samples: usize,
    violations: &mut Vec<KernelViolation>,
) -> Result<KernelRow> {
    let c = cfg.with_depth(d);
    let mut tail: f64 = 0.0;
    let mut positive_ok = true;
    let mut monotone_ok = true;
    let mut prev = f64::INFINITY;
    for i in 1..=samples {
        let s = PI * i as f64 / (samples + 1) as f64;
        let v = beta_certified(s, &c)?;
        tail = tail.max(v.tail_bound);
        if v.value <= 0.0 {
            positive_ok = false;
            violations.push(KernelViolation {
                d,
                s,
                what: format!("non-positive value {:e}", v.value),
            });
        }
        if v.value >= prev {
            monotone_ok = false;
            violations.push(KernelViolation {
                d,
                s,
                what: "not strictly decreasing".into(),
            });
        }
        prev = v.value;
    }
    let half = beta_certified(0.5 * PI, &c)?;
    let at_pi = beta_certified(PI, &c)?;
    tail = tail.max(half.tail_bound).max(at_pi.tail_bound);
    let margin = half.value - strpos_bound();
    if margin < 0.0 {
        violations.push(KernelViolation {
            d,
            s: 0.5 * PI,
            what: format!("beta(pi/2) = {} below (pi-2)/pi", half.value),
        });
    }
    if at_pi.value.abs() > 1e-10 {
        violations.push(KernelViolation {
            d,
            s: PI,
            what: format!("beta(pi) = {:e} is not zero", at_pi.value),
        });
    }
    Ok(KernelRow {
        d,
        beta_half_pi: half.value,
        beta_pi: at_pi.value,
        tail_bound: tail,
        positive_ok,
        monotone_ok,
        strpos_margin: margin,
    })
}

fn assemble(rows: Vec<KernelRow>, violations: Vec<KernelViolation>) -> KernelReport {
    let min_margin = rows
        .iter()
        .map(|r| r.strpos_margin)
        .fold(f64::INFINITY, f64::min);
    let min_beta = rows
        .iter()
        .map(|r| r.beta_half_pi)
        .fold(f64::INFINITY, f64::min);
    let limit_distance = rows
        .iter()
        .max_by(|a, b| a.d.total_cmp(&b.d))
        .map(|r| (r.beta_half_pi - 1.0).abs())
        .unwrap_or(f64::NAN);
    KernelReport {
        conjecture_holds: rows.iter().all(|r| r.beta_half_pi >= 1.0),
        rows,
        violations,
        min_margin,
        min_beta_half_pi: min_beta,
        limit_distance,
    }
}

fn check_grid(d_grid: &[f64]) -> Result<()> {
    if let Some(d) = d_grid.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
        return Err(Error::InvalidParams(format!(
            "strip height {d} is not positive"
        )));
    }
    Ok(())
}

/// Positivity, strict decrease on `(0, pi)`, `beta(pi) = 0` and the lower bound
/// on `beta(pi/2)`, for every strip height of the grid.
pub fn lemma1_verify(d_grid: &[f64], cfg: &KernelConfig) -> Result<KernelReport> {
    check_grid(d_grid)?;
    let mut violations = Vec::new();
    let rows = d_grid
        .iter()
        .map(|&d| study_row(d, cfg, LEMMA_SAMPLES, &mut violations))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(rows, violations))
}

/// Exploratory scan of `beta(pi/2)` over a range of strip heights.
///
/// Only the proven lower bound is asserted (violations); whether
/// `beta(pi/2) >= 1` held is reported in `conjecture_holds`.
pub fn conjecture_scan(d_range: &[f64], cfg: &KernelConfig) -> Result<KernelReport> {
    check_grid(d_range)?;
    let mut violations = Vec::new();
    let mut rows = Vec::with_capacity(d_range.len());
    for &d in d_range {
        let v = beta_certified(0.5 * PI, &cfg.with_depth(d))?;
        let margin = v.value - strpos_bound();
        if margin < 0.0 {
            violations.push(KernelViolation {
                d,
                s: 0.5 * PI,
                what: format!("beta(pi/2) = {} below (pi-2)/pi", v.value),
            });
        }
        rows.push(KernelRow {
            d,
            beta_half_pi: v.value,
            beta_pi: 0.0,
            tail_bound: v.tail_bound,
            positive_ok: true,
            monotone_ok: true,
            strpos_margin: margin,
        });
    }
    Ok(assemble(rows, violations))
}

/// Logarithmically spaced strip heights.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Strip heights used by the lemma study unless configured otherwise.
pub const DEFAULT_LEMMA_GRID: [f64; 7] = [0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 50.0];

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Fourier representation: cot(s/2) + 2 sum (coth(n d) - 1) sin(n s).
    fn fourier_beta(s: f64, d: f64) -> f64 {
        let mut v = 1.0 / (0.5 * s).tan();
        let mut n = 1;
        loop {
            let c = coth_minus_one(n as f64 * d);
            if c < 1e-20 {
                break;
            }
            v += 2.0 * c * (n as f64 * s).sin();
            n += 1;
        }
        v
    }

    fn fourier_beta_prime(s: f64, d: f64) -> f64 {
        let mut v = -0.5 / (0.5 * s).sin().powi(2);
        let mut n = 1;
        loop {
            let c = coth_minus_one(n as f64 * d);
            if c * (n as f64) < 1e-20 {
                break;
            }
            v += 2.0 * c * n as f64 * (n as f64 * s).cos();
            n += 1;
        }
        v
    }

    #[test]
    fn vanishes_at_pi() {
        for d in [0.5, 1.0, 5.0] {
            let v = beta_eval(PI, &KernelConfig::new(d)).unwrap();
            assert!(v.abs() < 1e-10, "d={d}: {v}");
        }
    }

    #[test]
    fn odd_and_periodic() {
        let cfg = KernelConfig::new(1.3);
        for s in [0.1, 0.7, 2.0, 3.0] {
            let a = beta_eval(s, &cfg).unwrap();
            assert_relative_eq!(beta_eval(-s, &cfg).unwrap(), -a, epsilon = 1e-14);
            assert!((a + beta_eval(2.0 * PI - s, &cfg).unwrap()).abs() < 1e-11);
            assert_relative_eq!(beta_eval(s + 2.0 * PI, &cfg).unwrap(), a, epsilon = 1e-11);
        }
    }

    #[test]
    fn matches_fourier_series() {
        for d in [0.3, 1.0, 4.0] {
            let cfg = KernelConfig::new(d);
            for s in [0.05, 0.4, 1.0, 2.5, 3.1] {
                let a = beta_eval(s, &cfg).unwrap();
                let b = fourier_beta(s, d);
                assert!(
                    (a - b).abs() < 1e-11 * (1.0 + b.abs()),
                    "d={d} s={s}: {a} vs {b}"
                );
                let ap = beta_prime_eval(s, &cfg).unwrap();
                let bp = fourier_beta_prime(s, d);
                assert!(
                    (ap - bp).abs() < 1e-10 * (1.0 + bp.abs()),
                    "d={d} s={s}: {ap} vs {bp}"
                );
            }
        }
    }

    #[test]
    fn dual_series_agree() {
        for d in log_grid(0.05, 100.0, 15) {
            let cfg = KernelConfig::new(d);
            for s in [0.1, 0.5 * PI, PI, 2.0] {
                let a = beta_certified(s, &cfg).unwrap();
                let b = beta_bilateral(s, &cfg).unwrap();
                assert!(a.tail_bound <= cfg.tail_tol);
                assert!((a.value - b.value).abs() < 1e-11, "d={d} s={s}");
            }
        }
    }

    #[test]
    fn frozen_reference_at_unit_depth() {
        let cfg = KernelConfig::new(1.0);
        let a = beta_eval(0.5 * PI, &cfg).unwrap();
        let b = beta_bilateral(0.5 * PI, &cfg).unwrap().value;
        assert!((a - b).abs() < 1e-12);
        assert!((a - fourier_beta(0.5 * PI, 1.0)).abs() < 1e-12);
        assert!((a - REFERENCE_BETA1_HALF_PI).abs() < 1e-12, "{a:.16}");
    }

    /// Kernel value at s = pi/2 for d = 1.
    const REFERENCE_BETA1_HALF_PI: f64 = 1.6163092660418823;

    #[test]
    fn derivative_negative_and_even() {
        let cfg = KernelConfig::new(1.0);
        for s in [0.1, 1.0, 3.0, 6.0] {
            let v = beta_prime_eval(s, &cfg).unwrap();
            assert!(v < 0.0);
            assert_eq!(v, beta_prime_eval(-s, &cfg).unwrap());
        }
    }

    #[test]
    fn derivative_matches_central_difference() {
        let cfg = KernelConfig::new(1.0);
        let h = 1e-5;
        let fd =
            (beta_eval(1.0 + h, &cfg).unwrap() - beta_eval(1.0 - h, &cfg).unwrap()) / (2.0 * h);
        assert!((fd - beta_prime_eval(1.0, &cfg).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn singular_points_rejected() {
        let cfg = KernelConfig::new(1.0);
        assert!(matches!(
            beta_eval(0.0, &cfg),
            Err(Error::KernelSingular(_))
        ));
        assert!(matches!(
            beta_eval(2.0 * PI, &cfg),
            Err(Error::KernelSingular(_))
        ));
        assert!(beta_prime_eval(-4.0 * PI, &cfg).is_err());
    }

    #[test]
    fn tail_cap_reported() {
        let cfg = KernelConfig {
            d: 1e4,
            max_terms: 10,
            tail_tol: 1e-13,
        };
        assert!(matches!(
            beta_eval(1.0, &cfg),
            Err(Error::KernelTail { terms: 10, .. })
        ));
    }

    #[test]
    fn regular_part_is_continuous_at_zero() {
        let cfg = KernelConfig::new(0.8);
        let near = beta_regular(1e-7, &cfg).unwrap();
        assert!(near.abs() < 1e-6);
        let s = 0.9;
        let full = beta_eval(s, &cfg).unwrap();
        let reg = beta_regular(s, &cfg).unwrap();
        assert!((full - reg - (PI / 0.8) * coth(PI * s / 1.6)).abs() < 1e-12);
    }

    #[test]
    fn alternative_half_pi_formula() {
        let cfg = KernelConfig::new(2.0);
        let a = beta_half_pi_alt(&cfg).unwrap();
        let b = beta_eval(0.5 * PI, &cfg).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn lemma_on_default_grid() {
        let rep = lemma1_verify(&DEFAULT_LEMMA_GRID, &KernelConfig::new(1.0)).unwrap();
        assert!(rep.all_ok(), "{:?}", rep.violations);
        assert!(rep
            .rows
            .iter()
            .all(|r| r.strpos_margin > 0.0 && r.monotone_ok));
        assert!(beta_eval(3.0, &KernelConfig::new(10.0)).unwrap() > 0.0);
    }

    #[test]
    fn large_depth_limit() {
        let v = beta_eval(0.5 * PI, &KernelConfig::new(1e4)).unwrap();
        assert!((v - 1.0).abs() < 1e-3);
    }

    #[test]
    fn conjecture_scan_reports() {
        let rep = conjecture_scan(&[0.05, 1.0, 100.0], &KernelConfig::new(1.0)).unwrap();
        assert!(rep.all_ok());
        assert_eq!(rep.rows.len(), 3);
        assert!(rep.min_beta_half_pi >= strpos_bound());
    }

    #[test]
    fn csv_has_expected_header() {
        let rep = lemma1_verify(&[1.0], &KernelConfig::new(1.0)).unwrap();
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("d,beta_half_pi,tail_bound,monotone_ok,strpos_margin\n"));
        assert_eq!(text.lines().count(), 2);
    }
}
