//! Truncated Fourier representation of 2π-periodic fields on an equispaced grid,
//! the strip Hilbert transform and the commutator operators built from it.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{self, KernelConfig};

/// Symmetry class of a field under `x -> -x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
    General,
}

impl Parity {
    /// Parity after differentiation or the strip Hilbert transform.
    pub fn flip(self) -> Self {
        match self {
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
            Parity::General => Parity::General,
        }
    }

    /// Parity of a pointwise product.
    pub fn times(self, other: Parity) -> Self {
        match (self, other) {
            (Parity::General, _) | (_, Parity::General) => Parity::General,
            (a, b) if a == b => Parity::Even,
            _ => Parity::Odd,
        }
    }

    fn join(self, other: Parity) -> Self {
        if self == other {
            self
        } else {
            Parity::General
        }
    }
}

/// Truncated real Fourier series
/// `a_0 + sum_{n=1}^{N} (a_n cos nx + b_n sin nx)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicField {
    cos: Vec<f64>,
    /// `sin[0]` is always zero; `sin[n] = b_n`.
    sin: Vec<f64>,
    parity: Parity,
}

impl PeriodicField {
    pub fn zeros(modes: usize, parity: Parity) -> Self {
        Self {
            cos: vec![0.0; modes + 1],
            sin: vec![0.0; modes + 1],
            parity,
        }
    }

    pub fn constant(value: f64, modes: usize) -> Self {
        let mut f = Self::zeros(modes, Parity::Even);
        f.cos[0] = value;
        f
    }

    /// Cosine series with coefficients `a_0..a_N`.
    pub fn even(cos: Vec<f64>) -> Self {
        assert!(!cos.is_empty(), "a cosine series needs a_0");
        let n = cos.len();
        Self {
            cos,
            sin: vec![0.0; n],
            parity: Parity::Even,
        }
    }

    /// Sine series with coefficients `b_1..b_N`.
    pub fn odd(sin: &[f64]) -> Self {
        let mut s = Vec::with_capacity(sin.len() + 1);
        s.push(0.0);
        s.extend_from_slice(sin);
        Self {
            cos: vec![0.0; s.len()],
            sin: s,
            parity: Parity::Odd,
        }
    }

    /// General series from `a_0..a_N` and `b_1..b_N`.
    pub fn from_coeffs(cos: Vec<f64>, sin: &[f64]) -> Result<Self> {
        if cos.len() != sin.len() + 1 {
            return Err(Error::LengthMismatch {
                expected: cos.len().saturating_sub(1),
                got: sin.len(),
            });
        }
        let mut s = Vec::with_capacity(cos.len());
        s.push(0.0);
        s.extend_from_slice(sin);
        Ok(Self {
            cos,
            sin: s,
            parity: Parity::General,
        })
    }

    /// Highest retained wavenumber.
    pub fn modes(&self) -> usize {
        self.cos.len() - 1
    }

    /// `a_0..a_N`.
    pub fn cos_coeffs(&self) -> &[f64] {
        &self.cos
    }

    /// `b_1..b_N`.
    pub fn sin_coeffs(&self) -> &[f64] {
        &self.sin[1..]
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    /// Period average.
    pub fn mean(&self) -> f64 {
        self.cos[0]
    }

    pub fn cos_coeff(&self, n: usize) -> f64 {
        self.cos.get(n).copied().unwrap_or(0.0)
    }

    pub fn sin_coeff(&self, n: usize) -> f64 {
        self.sin.get(n).copied().unwrap_or(0.0)
    }

    /// Pointwise value at an arbitrary `x`.
    pub fn eval(&self, x: f64) -> f64 {
        let mut v = self.cos[0];
        for n in 1..self.cos.len() {
            let (s, c) = (n as f64 * x).sin_cos();
            v += self.cos[n] * c + self.sin[n] * s;
        }
        v
    }

    /// `order`-th derivative at `x`.
    pub fn eval_derivative(&self, x: f64, order: u32) -> f64 {
        let mut v = if order == 0 { self.cos[0] } else { 0.0 };
        for n in 1..self.cos.len() {
            let nf = n as f64;
            let (s, c) = (nf * x).sin_cos();
            let w = nf.powi(order as i32);
            // d^k/dx^k of (a cos + b sin) cycles through the four phases
            let (dc, ds) = match order % 4 {
                0 => (c, s),
                1 => (-s, c),
                2 => (-c, -s),
                _ => (s, -c),
            };
            v += w * (self.cos[n] * dc + self.sin[n] * ds);
        }
        v
    }

    /// Largest absolute coefficient.
    pub fn max_abs_coeff(&self) -> f64 {
        self.cos
            .iter()
            .chain(self.sin.iter())
            .fold(0.0_f64, |m, c| m.max(c.abs()))
    }

    /// Coefficients above `modes` dropped, or zero-padded up to it.
    pub fn resized(&self, modes: usize) -> Self {
        let mut cos = self.cos.clone();
        let mut sin = self.sin.clone();
        cos.resize(modes + 1, 0.0);
        sin.resize(modes + 1, 0.0);
        Self {
            cos,
            sin,
            parity: self.parity,
        }
    }

    /// Projection onto the even or odd part (no-op for `General`).
    pub fn project(&self, parity: Parity) -> Self {
        let mut f = self.clone();
        match parity {
            Parity::Even => f.sin.iter_mut().for_each(|b| *b = 0.0),
            Parity::Odd => f.cos.iter_mut().for_each(|a| *a = 0.0),
            Parity::General => {}
        }
        f.parity = parity;
        f
    }

    /// Derivative (parity flips, mean vanishes).
    pub fn derivative(&self) -> Self {
        let mut out = Self::zeros(self.modes(), self.parity.flip());
        for n in 1..self.cos.len() {
            let nf = n as f64;
            out.cos[n] = nf * self.sin[n];
            out.sin[n] = -nf * self.cos[n];
        }
        out
    }

    /// Antiderivative of a zero-mean field, normalised to zero mean.
    pub fn antiderivative(&self) -> Self {
        let mut out = Self::zeros(self.modes(), self.parity.flip());
        for n in 1..self.cos.len() {
            let nf = n as f64;
            out.cos[n] = -self.sin[n] / nf;
            out.sin[n] = self.cos[n] / nf;
        }
        out
    }

    pub fn add_constant(&self, c: f64) -> Self {
        let mut f = self.clone();
        f.cos[0] += c;
        if f.parity == Parity::Odd && c != 0.0 {
            f.parity = Parity::General;
        }
        f
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            cos: self.cos.iter().map(|a| a * c).collect(),
            sin: self.sin.iter().map(|b| b * c).collect(),
            parity: self.parity,
        }
    }

    /// Coefficient-wise linear combination `self + c * other`.
    pub fn axpy(&self, c: f64, other: &Self) -> Self {
        let n = self.modes().max(other.modes());
        let a = self.resized(n);
        let b = other.resized(n);
        Self {
            cos: a.cos.iter().zip(&b.cos).map(|(x, y)| x + c * y).collect(),
            sin: a.sin.iter().zip(&b.sin).map(|(x, y)| x + c * y).collect(),
            parity: self.parity.join(other.parity),
        }
    }
}

/// Smallest integer `>= n` with no prime factors other than 2, 3 and 5.
pub fn next_smooth(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Collocation grid with `M` equispaced nodes on `[0, 2π)`, truncation at `N`
/// modes, and the strip height `d` of the Hilbert transform.
#[derive(Clone)]
pub struct GridSpec {
    modes: usize,
    nodes: usize,
    depth: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    coth: Arc<Vec<f64>>,
}

impl fmt::Debug for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridSpec")
            .field("modes", &self.modes)
            .field("nodes", &self.nodes)
            .field("depth", &self.depth)
            .finish()
    }
}

impl PartialEq for GridSpec {
    fn eq(&self, other: &Self) -> bool {
        self.modes == other.modes && self.nodes == other.nodes && self.depth == other.depth
    }
}

/// Above this argument `coth` is replaced by one.
const COTH_CUTOFF: f64 = 20.0;

impl GridSpec {
    pub const MIN_MODES: usize = 8;

    pub fn new(modes: usize, nodes: usize, depth: f64) -> Result<Self> {
        if modes < Self::MIN_MODES {
            return Err(Error::InvalidGrid(format!(
                "at least {} modes required, got {modes}",
                Self::MIN_MODES
            )));
        }
        if nodes < 4 * modes {
            return Err(Error::InvalidGrid(format!(
                "{nodes} nodes cannot dealias cubic products of {modes} modes (need >= {})",
                4 * modes
            )));
        }
        if !(depth.is_finite() && depth > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "strip height must be positive, got {depth}"
            )));
        }
        Ok(Self::build(modes, nodes, depth))
    }

    /// Grid with the default node count: the smallest 5-smooth `M > 4N`.
    pub fn with_default_nodes(modes: usize, depth: f64) -> Result<Self> {
        Self::new(modes, Self::default_nodes(modes), depth)
    }

    pub fn default_nodes(modes: usize) -> usize {
        next_smooth(4 * modes + 1)
    }

    fn build(modes: usize, nodes: usize, depth: f64) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(nodes);
        let inv = planner.plan_fft_inverse(nodes);
        let coth = (0..=nodes / 2)
            .map(|n| {
                let x = n as f64 * depth;
                if n == 0 {
                    0.0
                } else if x > COTH_CUTOFF {
                    1.0
                } else {
                    1.0 / x.tanh()
                }
            })
            .collect();
        Self {
            modes,
            nodes,
            depth,
            fwd,
            inv,
            coth: Arc::new(coth),
        }
    }

    /// Same truncation and strip height on at least `min_nodes` nodes.
    pub fn refined(&self, min_nodes: usize) -> Self {
        if self.nodes >= min_nodes {
            self.clone()
        } else {
            Self::build(self.modes, next_smooth(min_nodes), self.depth)
        }
    }

    /// Same node count and strip height with a different truncation.
    pub fn with_modes(&self, modes: usize) -> Result<Self> {
        Self::new(modes, self.nodes, self.depth)
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn depth(&self) -> f64 {
        self.depth
    }

    /// Highest wavenumber represented without aliasing on the nodes.
    pub fn max_modes(&self) -> usize {
        (self.nodes - 1) / 2
    }

    /// `x_j = 2πj/M`.
    pub fn node(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.nodes as f64
    }

    pub fn node_points(&self) -> Vec<f64> {
        (0..self.nodes).map(|j| self.node(j)).collect()
    }

    /// Multiplier of the strip Hilbert transform at wavenumber `n >= 1`.
    pub fn coth(&self, n: usize) -> f64 {
        match self.coth.get(n) {
            Some(c) => *c,
            None => {
                let x = n as f64 * self.depth;
                if x > COTH_CUTOFF {
                    1.0
                } else {
                    1.0 / x.tanh()
                }
            }
        }
    }

    fn check_field(&self, f: &PeriodicField) -> Result<()> {
        if f.modes() > self.max_modes() {
            return Err(Error::GridMismatch {
                modes: f.modes(),
                max: self.max_modes(),
            });
        }
        Ok(())
    }

    fn check_values(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.nodes {
            return Err(Error::LengthMismatch {
                expected: self.nodes,
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(())
    }

    fn spectrum(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fwd.process(&mut buf);
        let scale = 1.0 / self.nodes as f64;
        buf.iter_mut().for_each(|c| *c *= scale);
        buf
    }

    fn spectrum_values(&self, mut buf: Vec<Complex64>) -> Vec<f64> {
        self.inv.process(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }

    /// Fourier coefficients `(a_0..a_n, b_0..b_n)` of nodal values, `n <= max_modes`.
    pub(crate) fn coeffs_of(&self, values: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
        let c = self.spectrum(values);
        let mut a = vec![0.0; n + 1];
        let mut b = vec![0.0; n + 1];
        a[0] = c[0].re;
        for k in 1..=n {
            a[k] = 2.0 * c[k].re;
            b[k] = -2.0 * c[k].im;
        }
        (a, b)
    }

    /// Nodal values of a coefficient pair (assumes `n <= max_modes`).
    pub(crate) fn values_of(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let m = self.nodes;
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        buf[0] = Complex64::new(a[0], 0.0);
        for k in 1..a.len() {
            let c = Complex64::new(0.5 * a[k], -0.5 * b[k]);
            buf[k] += c;
            buf[m - k] += c.conj();
        }
        self.spectrum_values(buf)
    }

    /// Fourier analysis of nodal values, truncated to the grid's `N` modes.
    pub fn analyze(&self, values: &[f64]) -> Result<PeriodicField> {
        self.check_values(values)?;
        self.analyze_modes(values, self.modes)
    }

    /// Fourier analysis keeping `modes` wavenumbers (at most `max_modes`).
    pub fn analyze_modes(&self, values: &[f64], modes: usize) -> Result<PeriodicField> {
        self.check_values(values)?;
        if modes > self.max_modes() {
            return Err(Error::GridMismatch {
                modes,
                max: self.max_modes(),
            });
        }
        let (cos, sin) = self.coeffs_of(values, modes);
        Ok(PeriodicField {
            cos,
            sin,
            parity: Parity::General,
        })
    }

    /// Nodal values of a field.
    pub fn synthesize(&self, f: &PeriodicField) -> Result<Vec<f64>> {
        self.check_field(f)?;
        Ok(self.values_of(&f.cos, &f.sin))
    }

    /// Strip Hilbert transform: `cos nx -> coth(nd) sin nx`, `sin nx -> -coth(nd) cos nx`.
    pub fn strip_hilbert(&self, f: &PeriodicField) -> Result<PeriodicField> {
        let scale = 1.0_f64.max(f.max_abs_coeff());
        if f.mean().abs() > 1e-12 * scale {
            return Err(Error::NonZeroMean(f.mean()));
        }
        let mut out = PeriodicField::zeros(f.modes(), f.parity.flip());
        for n in 1..=f.modes() {
            let c = self.coth(n);
            out.cos[n] = -c * f.sin[n];
            out.sin[n] = c * f.cos[n];
        }
        Ok(out)
    }

    /// Spectral derivative.
    pub fn derivative(&self, f: &PeriodicField) -> Result<PeriodicField> {
        self.check_field(f)?;
        Ok(f.derivative())
    }

    /// Pointwise product on the nodes, truncated to `N` modes.
    pub fn product(&self, a: &PeriodicField, b: &PeriodicField) -> Result<PeriodicField> {
        self.check_field(a)?;
        self.check_field(b)?;
        let va = self.values_of(&a.cos, &a.sin);
        let vb = self.values_of(&b.cos, &b.sin);
        let prod: Vec<f64> = va.iter().zip(&vb).map(|(x, y)| x * y).collect();
        let (cos, sin) = self.coeffs_of(&prod, self.modes);
        let parity = a.parity.times(b.parity);
        Ok(PeriodicField { cos, sin, parity }.project(parity))
    }

    /// Pointwise product with all modes of the exact result.
    pub fn exact_product(&self, a: &PeriodicField, b: &PeriodicField) -> Result<PeriodicField> {
        let n = a.modes() + b.modes();
        let g = self.exact_for(n);
        let va = g.values_of(&a.cos, &a.sin);
        let vb = g.values_of(&b.cos, &b.sin);
        let prod: Vec<f64> = va.iter().zip(&vb).map(|(x, y)| x * y).collect();
        let (cos, sin) = g.coeffs_of(&prod, n);
        let parity = a.parity.times(b.parity);
        Ok(PeriodicField { cos, sin, parity }.project(parity))
    }

    /// Strip Hilbert transform of nodal values, applied to every resolved
    /// wavenumber; the mean of the input is ignored.
    pub(crate) fn hilbert_values(&self, values: &[f64]) -> Vec<f64> {
        let m = self.nodes;
        let mut c = self.spectrum(values);
        c[0] = Complex64::new(0.0, 0.0);
        let top = self.max_modes();
        for k in 1..=top {
            // c_k -> -i coth(kd) c_k maps cos to coth sin and sin to -coth cos
            let w = Complex64::new(0.0, -self.coth(k));
            c[k] *= w;
            c[m - k] = c[k].conj();
        }
        if m % 2 == 0 {
            c[m / 2] = Complex64::new(0.0, 0.0);
        }
        self.spectrum_values(c)
    }

    /// Grid fine enough to represent products of total degree `degree` exactly.
    pub(crate) fn exact_for(&self, degree: usize) -> GridSpec {
        self.refined(2 * degree + 2)
    }

    /// `J f = f C(f') - C(f f')`, returned with all `2n` modes of the exact result.
    pub fn op_j(&self, f: &PeriodicField) -> Result<PeriodicField> {
        self.check_field(f)?;
        let n = f.modes();
        let g = self.exact_for(2 * n);
        let (fv, cfp, fp) = g.j_parts(f);
        let ffp: Vec<f64> = fv.iter().zip(&fp).map(|(a, b)| a * b).collect();
        let c_ffp = g.hilbert_values(&ffp);
        let j: Vec<f64> = (0..g.nodes).map(|i| fv[i] * cfp[i] - c_ffp[i]).collect();
        let parity = match f.parity {
            Parity::General => Parity::General,
            _ => Parity::Even,
        };
        let (cos, sin) = g.coeffs_of(&j, 2 * n);
        Ok(PeriodicField { cos, sin, parity }.project(parity))
    }

    /// `K f = f^2 C(f') + C(f^2 f') - 2 f C(f f')`, with all `3n` modes.
    pub fn op_k(&self, f: &PeriodicField) -> Result<PeriodicField> {
        self.check_field(f)?;
        let n = f.modes();
        let g = self.exact_for(3 * n);
        let (fv, cfp, fp) = g.j_parts(f);
        let m = g.nodes;
        let ffp: Vec<f64> = (0..m).map(|i| fv[i] * fp[i]).collect();
        let f2fp: Vec<f64> = (0..m).map(|i| fv[i] * ffp[i]).collect();
        let c_ffp = g.hilbert_values(&ffp);
        let c_f2fp = g.hilbert_values(&f2fp);
        let k: Vec<f64> = (0..m)
            .map(|i| fv[i] * fv[i] * cfp[i] + c_f2fp[i] - 2.0 * fv[i] * c_ffp[i])
            .collect();
        let (cos, sin) = g.coeffs_of(&k, 3 * n);
        Ok(PeriodicField {
            cos,
            sin,
            parity: f.parity,
        }
        .project(f.parity))
    }

    /// Nodal values of `f`, `C(f')` and `f'`.
    fn j_parts(&self, f: &PeriodicField) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let fp = f.derivative();
        let mut cfp = PeriodicField::zeros(f.modes(), Parity::General);
        for n in 1..=f.modes() {
            let c = self.coth(n);
            cfp.cos[n] = -c * fp.sin[n];
            cfp.sin[n] = c * fp.cos[n];
        }
        (
            self.values_of(&f.cos, &f.sin),
            self.values_of(&cfp.cos, &cfp.sin),
            self.values_of(&fp.cos, &fp.sin),
        )
    }
}

/// Trigonometric tables `cos(n t)`, `sin(n t)` for `n = 0..=modes`.
fn trig_table(points: &[f64], modes: usize) -> (Vec<f64>, Vec<f64>) {
    let mut c = vec![0.0; points.len() * (modes + 1)];
    let mut s = vec![0.0; points.len() * (modes + 1)];
    for (i, &t) in points.iter().enumerate() {
        for n in 0..=modes {
            let (sn, cn) = (n as f64 * t).sin_cos();
            c[i * (modes + 1) + n] = cn;
            s[i * (modes + 1) + n] = sn;
        }
    }
    (c, s)
}

/// Values of `F(x_i - t_j)` and `F(x_i + t_j)` through the addition theorems.
struct ShiftEvaluator {
    modes: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    xc: Vec<f64>,
    xs: Vec<f64>,
}

impl ShiftEvaluator {
    fn new(f: &PeriodicField, xs: &[f64]) -> Self {
        let (xc, xsn) = trig_table(xs, f.modes());
        Self {
            modes: f.modes(),
            a: f.cos.clone(),
            b: f.sin.clone(),
            xc,
            xs: xsn,
        }
    }

    /// `(F(x_i - t), F(x_i + t))` given the tables for `t`.
    fn pair(&self, i: usize, tc: &[f64], ts: &[f64]) -> (f64, f64) {
        let w = self.modes + 1;
        let (xc, xs) = (&self.xc[i * w..(i + 1) * w], &self.xs[i * w..(i + 1) * w]);
        let mut minus = self.a[0];
        let mut plus = self.a[0];
        for n in 1..w {
            // cos(n(x -+ t)) and sin(n(x -+ t)) by the addition theorems
            let cc = xc[n] * tc[n];
            let ss = xs[n] * ts[n];
            let sc = xs[n] * tc[n];
            let cs = xc[n] * ts[n];
            minus += self.a[n] * (cc + ss) + self.b[n] * (sc - cs);
            plus += self.a[n] * (cc - ss) + self.b[n] * (sc + cs);
        }
        (minus, plus)
    }
}

fn kernel_for(grid: &GridSpec, cfg: &KernelConfig) -> Result<KernelConfig> {
    cfg.validate()?;
    if (cfg.d - grid.depth()).abs() > 1e-12 * grid.depth() {
        return Err(Error::InvalidParams(format!(
            "kernel strip height {} differs from grid strip height {}",
            cfg.d,
            grid.depth()
        )));
    }
    Ok(*cfg)
}

/// Midpoint nodes `(i + 1/2) pi / n` on `(0, pi)` with their kernel derivative values.
fn half_nodes(n: usize, cfg: &KernelConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let t: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * PI / n as f64).collect();
    let w = t
        .iter()
        .map(|&s| kernel::beta_prime_eval(s, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok((t, w))
}

const QUAD_START: usize = 32;
const QUAD_MAX: usize = 1 << 14;

/// Strip Hilbert transform evaluated by quadrature against the kernel,
/// `C(F')(x) = -(1/2π) ∫_0^π β'(s) (2F(x) - F(x-s) - F(x+s)) ds`,
/// where `F` is the zero-mean antiderivative of the input.
///
/// The symmetrised integrand is smooth and periodic, so the midpoint rule
/// converges geometrically; node counts double until successive results agree.
pub fn pv_hilbert_quadrature(
    f: &PeriodicField,
    grid: &GridSpec,
    cfg: &KernelConfig,
) -> Result<PeriodicField> {
    grid.check_field(f)?;
    let scale = 1.0_f64.max(f.max_abs_coeff());
    if f.mean().abs() > 1e-12 * scale {
        return Err(Error::NonZeroMean(f.mean()));
    }
    let cfg = kernel_for(grid, cfg)?;
    let big_f = f.antiderivative();
    let xs = grid.node_points();
    let eval = ShiftEvaluator::new(&big_f, &xs);
    let fx: Vec<f64> = xs.iter().map(|&x| big_f.eval(x)).collect();
    let tol = 1e-11 * scale;

    let run = |n: usize| -> Result<Vec<f64>> {
        let (t, w) = half_nodes(n, &cfg)?;
        let (tc, ts) = trig_table(&t, big_f.modes());
        let wd = big_f.modes() + 1;
        let h = PI / n as f64;
        Ok((0..xs.len())
            .map(|i| {
                let mut acc = 0.0;
                for (j, wj) in w.iter().enumerate() {
                    let (fm, fp) =
                        eval.pair(i, &tc[j * wd..(j + 1) * wd], &ts[j * wd..(j + 1) * wd]);
                    acc += wj * (2.0 * fx[i] - fm - fp);
                }
                -acc * h / (2.0 * PI)
            })
            .collect())
    };

    let mut n = QUAD_START.max(2 * f.modes());
    let mut prev = run(n)?;
    loop {
        n *= 2;
        let next = run(n)?;
        let err = prev
            .iter()
            .zip(&next)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        if err <= tol {
            let out = grid.analyze_modes(&next, f.modes())?;
            let parity = f.parity.flip();
            return Ok(out.project(parity));
        }
        if n >= QUAD_MAX {
            return Err(Error::Quadrature(err));
        }
        prev = next;
    }
}

/// Quadrature evaluation of `J f` and `K f` at the points `xs` from the
/// difference-kernel representations
/// `J f(x) = ∫ -β'(s)/(4π) (f(x) - f(x-s))^2 ds` and
/// `K f(x) = ∫ -β'(s)/(6π) (f(x) - f(x-s))^3 ds` over `(-π, π)`.
pub fn commutators_by_quadrature(
    f: &PeriodicField,
    xs: &[f64],
    cfg: &KernelConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    cfg.validate()?;
    let eval = ShiftEvaluator::new(f, xs);
    let fx: Vec<f64> = xs.iter().map(|&x| f.eval(x)).collect();
    let scale = 1.0_f64.max(f.max_abs_coeff()).powi(3);
    let tol = 1e-12 * scale;

    let run = |n: usize| -> Result<(Vec<f64>, Vec<f64>)> {
        let (t, w) = half_nodes(n, cfg)?;
        let (tc, ts) = trig_table(&t, f.modes());
        let wd = f.modes() + 1;
        let h = PI / n as f64;
        let mut j = vec![0.0; xs.len()];
        let mut k = vec![0.0; xs.len()];
        for i in 0..xs.len() {
            let (mut sj, mut sk) = (0.0, 0.0);
            for (q, wq) in w.iter().enumerate() {
                let (fm, fp) = eval.pair(i, &tc[q * wd..(q + 1) * wd], &ts[q * wd..(q + 1) * wd]);
                // nodes at s and -s: differences f(x) - f(x -+ s)
                let (dm, dp) = (fx[i] - fm, fx[i] - fp);
                sj += -wq * (dm * dm + dp * dp);
                sk += -wq * (dm * dm * dm + dp * dp * dp);
            }
            j[i] = sj * h / (4.0 * PI);
            k[i] = sk * h / (6.0 * PI);
        }
        Ok((j, k))
    };

    let mut n = QUAD_START.max(2 * f.modes());
    let mut prev = run(n)?;
    loop {
        n *= 2;
        let next = run(n)?;
        let err = prev
            .0
            .iter()
            .zip(&next.0)
            .chain(prev.1.iter().zip(&next.1))
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        if err <= tol {
            return Ok(next);
        }
        if n >= QUAD_MAX {
            return Err(Error::Quadrature(err));
        }
        prev = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, d: f64) -> GridSpec {
        GridSpec::with_default_nodes(n, d).unwrap()
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn grid_invariants() {
        assert!(GridSpec::new(4, 64, 1.0).is_err());
        assert!(GridSpec::new(16, 63, 1.0).is_err());
        assert!(GridSpec::new(16, 64, 0.0).is_err());
        let g = GridSpec::new(16, 64, 1.0).unwrap();
        assert_eq!(g.node(16), PI / 2.0);
        assert_eq!(GridSpec::default_nodes(128), 540);
        assert_eq!(next_smooth(7), 8);
    }

    #[test]
    fn analyze_pure_cosine() {
        let g = GridSpec::new(8, 32, 1.0).unwrap();
        let vals: Vec<f64> = g.node_points().iter().map(|x| x.cos()).collect();
        let f = g.analyze(&vals).unwrap();
        assert!((f.cos_coeff(1) - 1.0).abs() < 1e-15);
        let rest = f.max_abs_coeff_except(1);
        assert!(rest < 1e-15);
    }

    impl PeriodicField {
        fn max_abs_coeff_except(&self, n: usize) -> f64 {
            let mut g = self.clone();
            g.cos[n] = 0.0;
            g.max_abs_coeff()
        }
    }

    #[test]
    fn analyze_constant_and_square() {
        let g = GridSpec::new(8, 32, 1.0).unwrap();
        let f = g.analyze(&vec![3.0; 32]).unwrap();
        assert_eq!(f.mean(), 3.0);
        assert!(f.max_abs_coeff_except(0) < 1e-15);
        let sq: Vec<f64> = g.node_points().iter().map(|x| x.cos().powi(2)).collect();
        let f = g.analyze(&sq).unwrap();
        assert!((f.cos_coeff(0) - 0.5).abs() < 1e-15);
        assert!((f.cos_coeff(2) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn analyze_rejects_bad_input() {
        let g = GridSpec::new(8, 32, 1.0).unwrap();
        assert!(matches!(
            g.analyze(&[0.0; 31]),
            Err(Error::LengthMismatch { .. })
        ));
        let mut v = vec![0.0; 32];
        v[5] = f64::NAN;
        assert!(matches!(g.analyze(&v), Err(Error::NonFinite(5))));
    }

    #[test]
    fn round_trip() {
        let g = grid(16, 1.0);
        let f = PeriodicField::from_coeffs(
            (0..=16).map(|n| 1.0 / (1.0 + n as f64)).collect(),
            &(1..=16).map(|n| (n as f64).sin()).collect::<Vec<_>>(),
        )
        .unwrap();
        let back = g.analyze(&g.synthesize(&f).unwrap()).unwrap();
        for n in 0..=16 {
            assert!((back.cos_coeff(n) - f.cos_coeff(n)).abs() < 1e-13);
            assert!((back.sin_coeff(n) - f.sin_coeff(n)).abs() < 1e-13);
        }
    }

    #[test]
    fn hilbert_examples() {
        let g = grid(8, 1.0);
        let mut c = vec![0.0; 9];
        c[1] = 1.0;
        let h = g.strip_hilbert(&PeriodicField::even(c)).unwrap();
        assert_eq!(h.parity(), Parity::Odd);
        assert!((h.sin_coeff(1) - 1.3130352854993312).abs() < 1e-15);

        let g = grid(8, 0.5);
        let mut s = vec![0.0; 8];
        s[1] = 1.0;
        let h = g.strip_hilbert(&PeriodicField::odd(&s)).unwrap();
        assert_eq!(h.parity(), Parity::Even);
        assert!((h.cos_coeff(2) + 1.0 / 1.0_f64.tanh()).abs() < 1e-15);
        assert_eq!(h.mean(), 0.0);

        let z = g
            .strip_hilbert(&PeriodicField::zeros(8, Parity::Even))
            .unwrap();
        assert_eq!(z.max_abs_coeff(), 0.0);
    }

    #[test]
    fn hilbert_rejects_mean() {
        let g = grid(8, 1.0);
        assert!(matches!(
            g.strip_hilbert(&PeriodicField::constant(1.0, 8)),
            Err(Error::NonZeroMean(_))
        ));
    }

    #[test]
    fn derivative_and_product() {
        let g = grid(8, 1.0);
        let mut c = vec![0.0; 9];
        c[1] = 1.0;
        let f = PeriodicField::even(c);
        let d = g.derivative(&f).unwrap();
        assert_eq!(d.parity(), Parity::Odd);
        assert_eq!(d.sin_coeff(1), -1.0);
        assert_eq!(d.mean(), 0.0);
        let p = g.product(&f, &f).unwrap();
        assert!((p.cos_coeff(0) - 0.5).abs() < 1e-15);
        assert!((p.cos_coeff(2) - 0.5).abs() < 1e-15);
        assert_eq!(p.parity(), Parity::Even);
        assert_eq!(f.add_constant(2.0).mean(), 2.0);
    }

    #[test]
    fn product_matches_convolution() {
        let n = 12;
        let g = grid(n, 1.0);
        let a: Vec<f64> = (0..=n).map(|k| 1.0 / (1.0 + k as f64)).collect();
        let b: Vec<f64> = (0..=n).map(|k| ((k * 7) % 5) as f64 - 2.0).collect();
        let p = g
            .product(
                &PeriodicField::even(a.clone()),
                &PeriodicField::even(b.clone()),
            )
            .unwrap();
        // cos(i x) cos(j x) = (cos((i+j)x) + cos((i-j)x)) / 2
        let mut exact = vec![0.0; 2 * n + 1];
        for i in 0..=n {
            for j in 0..=n {
                let w = a[i] * b[j];
                if i == 0 || j == 0 {
                    exact[i + j] += w;
                } else {
                    exact[i + j] += 0.5 * w;
                    exact[i.abs_diff(j)] += 0.5 * w;
                }
            }
        }
        for (k, e) in exact.iter().enumerate().take(n + 1) {
            assert!((p.cos_coeff(k) - e).abs() < 1e-12, "mode {k}");
        }
    }

    #[test]
    fn fields_beyond_grid_rejected() {
        let g = GridSpec::new(8, 32, 1.0).unwrap();
        let f = PeriodicField::constant(1.0, 20);
        assert!(matches!(g.synthesize(&f), Err(Error::GridMismatch { .. })));
        assert!(g.product(&f, &f).is_err());
    }

    #[test]
    fn j_of_cosine_closed_form() {
        let d = 1.0;
        let g = grid(8, d);
        let mut c = vec![0.0; 9];
        c[1] = 1.0;
        let j = g.op_j(&PeriodicField::even(c)).unwrap();
        let c1 = 1.0 / d.tanh();
        let c2 = 1.0 / (2.0 * d).tanh();
        assert!((j.mean() - 0.5 * c1).abs() < 1e-14);
        assert!((j.cos_coeff(2) - 0.5 * (c1 - c2)).abs() < 1e-14);
        assert_eq!(j.modes(), 16);
    }

    #[test]
    fn commutators_vanish_on_constants_and_shift() {
        let g = grid(8, 1.0);
        let k = PeriodicField::constant(4.0, 8);
        assert!(g.op_j(&k).unwrap().max_abs_coeff() < 1e-14);
        assert!(g.op_k(&k).unwrap().max_abs_coeff() < 1e-13);
        let mut c = vec![0.0; 9];
        c[1] = 1.0;
        c[2] = 0.3;
        let f = PeriodicField::even(c);
        let a = g.op_j(&f).unwrap();
        let b = g.op_j(&f.add_constant(5.0)).unwrap();
        assert!(a.axpy(-1.0, &b).max_abs_coeff() < 1e-12);
        let ka = g.op_k(&f).unwrap();
        let kb = g.op_k(&f.add_constant(5.0)).unwrap();
        assert!(ka.axpy(-1.0, &kb).max_abs_coeff() < 1e-11);
        let kn = g.op_k(&f.scaled(-1.0)).unwrap();
        assert!(ka.axpy(1.0, &kn).max_abs_coeff() < 1e-13);
    }

    #[test]
    fn commutators_match_quadrature() {
        let d = 1.0;
        let g = grid(8, d);
        let mut c = vec![0.0; 9];
        c[1] = 1.0;
        let f = PeriodicField::even(c);
        let xs = [0.0, 0.7, PI];
        let (jq, kq) = commutators_by_quadrature(&f, &xs, &KernelConfig::new(d)).unwrap();
        let j = g.op_j(&f).unwrap();
        let k = g.op_k(&f).unwrap();
        for (i, &x) in xs.iter().enumerate() {
            assert!((j.eval(x) - jq[i]).abs() < 1e-8);
            assert!((k.eval(x) - kq[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn quadrature_hilbert_matches_multiplier() {
        for (d, coeffs) in [
            (1.0, vec![0.0, 1.0]),
            (2.0, vec![0.0, 0.3, -0.2, 0.5, 0.1, 0.7]),
        ] {
            let g = grid(8, d);
            let mut c = coeffs.clone();
            c.resize(9, 0.0);
            let s: Vec<f64> = (1..=8)
                .map(|n| if n <= 5 { 0.1 * n as f64 } else { 0.0 })
                .collect();
            let f = PeriodicField::from_coeffs(c, &s).unwrap();
            let a = g.strip_hilbert(&f).unwrap();
            let b = pv_hilbert_quadrature(&f, &g, &KernelConfig::new(d)).unwrap();
            let va = g.synthesize(&a).unwrap();
            let vb = g.synthesize(&b).unwrap();
            assert!(max_diff(&va, &vb) < 1e-6);
        }
        let g = grid(8, 1.0);
        let z = pv_hilbert_quadrature(
            &PeriodicField::zeros(8, Parity::Even),
            &g,
            &KernelConfig::new(1.0),
        )
        .unwrap();
        assert_eq!(z.max_abs_coeff(), 0.0);
    }

    #[test]
    fn quadrature_rejects_mismatched_kernel() {
        let g = grid(8, 1.0);
        let f = PeriodicField::zeros(8, Parity::Even);
        assert!(pv_hilbert_quadrature(&f, &g, &KernelConfig::new(2.0)).is_err());
    }

    #[test]
    fn kj_comparison_for_monotone_profile() {
        // f = 2 + cos x is maximised at 0 and minimised at pi
        let g = grid(8, 1.0);
        let mut c = vec![0.0; 9];
        c[0] = 2.0;
        c[1] = 1.0;
        let f = PeriodicField::even(c);
        let j = g.op_j(&f).unwrap();
        let k = g.op_k(&f).unwrap();
        let amp = f.eval(0.0) - f.eval(PI);
        for x in g.node_points() {
            assert!(k.eval(x).abs() <= 2.0 / 3.0 * amp * j.eval(x).abs() + 1e-13);
        }
    }
}
