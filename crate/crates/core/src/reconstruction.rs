//! Conformal map of the strip onto the fluid domain, the auxiliary harmonic
//! function, the physical flow, and flow-side checks.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::equations::{identity_add_check, SolutionPoint};
use crate::error::{Error, Result};
use crate::spectral::{GridSpec, PeriodicField};

/// Number of default strip levels.
pub const DEFAULT_LEVELS: usize = 33;

/// Levels `y_l = -d (1 - sin(π l / 64))`, `l = 0..32`, clustered near the surface.
pub fn default_levels(depth: f64) -> Vec<f64> {
    let last = (DEFAULT_LEVELS - 1) as f64;
    (0..DEFAULT_LEVELS)
        .map(|l| {
            if l + 1 == DEFAULT_LEVELS {
                0.0
            } else {
                -depth * (1.0 - (PI * l as f64 / (2.0 * last)).sin())
            }
        })
        .collect()
}

/// `(sinh(n(y+d))/sinh(nd), cosh(n(y+d))/sinh(nd))` without overflow, `-d <= y <= 0`.
fn ratios(n: usize, y: f64, d: f64) -> (f64, f64) {
    let nf = n as f64;
    let lead = (nf * y).exp();
    let decay = (-2.0 * nf * (y + d)).exp();
    let den = -(-2.0 * nf * d).exp_m1();
    (lead * (1.0 - decay) / den, lead * (1.0 + decay) / den)
}

/// Values and first derivatives of a harmonic function at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub value: f64,
    pub dx: f64,
    pub dy: f64,
}

/// Harmonic extension to the strip of an even top trace with zero bottom trace.
#[derive(Debug, Clone, PartialEq)]
struct EvenExtension {
    cos: Vec<f64>,
    depth: f64,
}

impl EvenExtension {
    fn new(top: &PeriodicField, depth: f64) -> Self {
        Self {
            cos: top.cos_coeffs().to_vec(),
            depth,
        }
    }

    fn modes(&self) -> usize {
        self.cos.len() - 1
    }

    /// Coefficient fields `(F, F_x, F_y, F_yy)` at level `y`.
    fn level(&self, y: f64) -> [PeriodicField; 4] {
        let d = self.depth;
        let n = self.modes();
        let mut val = vec![0.0; n + 1];
        let mut dx = vec![0.0; n];
        let mut dy = vec![0.0; n + 1];
        let mut dyy = vec![0.0; n + 1];
        val[0] = self.cos[0] * (y + d) / d;
        dy[0] = self.cos[0] / d;
        for j in 1..=n {
            let (s, c) = ratios(j, y, d);
            let jf = j as f64;
            val[j] = self.cos[j] * s;
            dx[j - 1] = -jf * self.cos[j] * s;
            dy[j] = jf * self.cos[j] * c;
            dyy[j] = jf * jf * self.cos[j] * s;
        }
        [
            PeriodicField::even(val),
            PeriodicField::odd(&dx),
            PeriodicField::even(dy),
            PeriodicField::even(dyy),
        ]
    }

    fn sample(&self, x: f64, y: f64) -> Sample {
        let d = self.depth;
        let mut s = Sample {
            value: self.cos[0] * (y + d) / d,
            dx: 0.0,
            dy: self.cos[0] / d,
        };
        for j in 1..=self.modes() {
            let (sr, cr) = ratios(j, y, d);
            let jf = j as f64;
            let (sn, cs) = (jf * x).sin_cos();
            s.value += self.cos[j] * sr * cs;
            s.dx -= jf * self.cos[j] * sr * sn;
            s.dy += jf * self.cos[j] * cr * cs;
        }
        s
    }
}

/// Samples of the conformal map `U + iV` on a tensor grid of the strip.
#[derive(Debug, Clone, PartialEq)]
pub struct StripMap {
    pub depth: f64,
    pub k: f64,
    pub xs: Vec<f64>,
    pub levels: Vec<f64>,
    /// Indexed `[level][node]`.
    pub u: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub u_x: Vec<Vec<f64>>,
    pub u_y: Vec<Vec<f64>>,
    pub v_x: Vec<Vec<f64>>,
    pub v_y: Vec<Vec<f64>>,
    /// Largest `|V_xx + V_yy|` with `V_xx` taken from the sampled values.
    pub laplacian_residual: f64,
    ext: EvenExtension,
}

impl StripMap {
    /// `V` and its gradient at an arbitrary point of the closed strip.
    pub fn sample_v(&self, x: f64, y: f64) -> Sample {
        self.ext.sample(x, y)
    }

    /// `U` and its gradient at an arbitrary point of the closed strip.
    pub fn sample_u(&self, x: f64, y: f64) -> Sample {
        let v = self.ext.sample(x, y);
        let d = self.depth;
        let mut value = x / self.k;
        for j in 1..=self.ext.modes() {
            let (_, cr) = ratios(j, y, d);
            value += self.ext.cos[j] * cr * (j as f64 * x).sin();
        }
        Sample {
            value,
            dx: v.dy,
            dy: -v.dx,
        }
    }
}

fn check_levels(levels: &[f64], depth: f64) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::InvalidParams(
            "at least one strip level required".into(),
        ));
    }
    if let Some(y) = levels
        .iter()
        .find(|y| !(y.is_finite() && **y <= 0.0 && **y >= -depth))
    {
        return Err(Error::InvalidParams(format!(
            "strip level {y} outside [-{depth}, 0]"
        )));
    }
    Ok(())
}

/// Harmonic extension of the surface elevation and its conjugate on the given levels.
pub fn build_strip_map(p: &SolutionPoint, levels: &[f64], grid: &GridSpec) -> Result<StripMap> {
    p.validate()?;
    let depth = p.params.depth();
    check_levels(levels, depth)?;
    let k = p.params.k;
    let ext = EvenExtension::new(&p.v, depth);
    let xs = grid.node_points();
    let n = ext.modes();
    let mut map = StripMap {
        depth,
        k,
        xs: xs.clone(),
        levels: levels.to_vec(),
        u: Vec::new(),
        v: Vec::new(),
        u_x: Vec::new(),
        u_y: Vec::new(),
        v_x: Vec::new(),
        v_y: Vec::new(),
        laplacian_residual: 0.0,
        ext: ext.clone(),
    };
    for &y in levels {
        let [val, dx, dy, dyy] = ext.level(y);
        let mut conj = vec![0.0; n];
        let mut conj_x = vec![0.0; n + 1];
        let mut conj_y = vec![0.0; n];
        conj_x[0] = 1.0 / k;
        for j in 1..=n {
            let (s, c) = ratios(j, y, depth);
            let jf = j as f64;
            conj[j - 1] = ext.cos[j] * c;
            conj_x[j] = jf * ext.cos[j] * c;
            conj_y[j - 1] = jf * ext.cos[j] * s;
        }
        let vv = grid.synthesize(&val)?;
        let uu: Vec<f64> = grid
            .synthesize(&PeriodicField::odd(&conj))?
            .iter()
            .zip(&xs)
            .map(|(c, x)| x / k + c)
            .collect();
        let vxx = grid.analyze(&vv)?.derivative().derivative();
        let lap: Vec<f64> = grid
            .synthesize(&vxx)?
            .iter()
            .zip(grid.synthesize(&dyy)?)
            .map(|(a, b)| (a + b).abs())
            .collect();
        map.laplacian_residual = lap.iter().fold(map.laplacian_residual, |m, x| m.max(*x));
        map.v.push(vv);
        map.u.push(uu);
        map.v_x.push(grid.synthesize(&dx)?);
        map.v_y.push(grid.synthesize(&dy)?);
        map.u_x.push(grid.synthesize(&PeriodicField::even(conj_x))?);
        map.u_y.push(grid.synthesize(&PeriodicField::odd(&conj_y))?);
    }
    Ok(map)
}

/// Auxiliary harmonic function, stream-function gradient and surface curve.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub map: StripMap,
    pub m: f64,
    pub q: f64,
    pub g: f64,
    pub upsilon: f64,
    /// Indexed `[level][node]`.
    pub zeta: Vec<Vec<f64>>,
    pub zeta_x: Vec<Vec<f64>>,
    pub zeta_y: Vec<Vec<f64>>,
    /// Horizontal velocity `ψ_Y` at mapped nodes.
    pub psi_y: Vec<Vec<f64>>,
    /// Vertical velocity `-ψ_X` at mapped nodes.
    pub minus_psi_x: Vec<Vec<f64>>,
    /// Surface curve `(u(x), v(x))` at the grid nodes.
    pub surface_u: Vec<f64>,
    pub surface_v: Vec<f64>,
    zeta_ext: EvenExtension,
}

/// Smallest admissible `|∇V|²`.
pub const DEGENERATE_GRADIENT: f64 = 1e-14;

/// `ψ_Y` and `-ψ_X` from the map and the auxiliary function at one point.
fn velocity(v: Sample, z: Sample, ups: f64) -> Result<(f64, f64)> {
    let g2 = v.dx * v.dx + v.dy * v.dy;
    if g2 < DEGENERATE_GRADIENT {
        return Err(Error::Degenerate(format!("|grad V|^2 = {g2:e}")));
    }
    Ok((
        (v.dx * z.dx + v.dy * z.dy) / g2 + ups * v.value,
        (v.dx * z.dy - v.dy * z.dx) / g2,
    ))
}

/// Build the auxiliary function with top trace `m - Υv²/2` and the physical velocity.
pub fn build_flow(p: &SolutionPoint, map: StripMap, grid: &GridSpec) -> Result<FlowField> {
    p.validate()?;
    let ups = p.params.upsilon;
    let v2 = grid.exact_product(&p.v, &p.v)?;
    let top = v2.scaled(-0.5 * ups).add_constant(p.m);
    let zeta_ext = EvenExtension::new(&top, map.depth);
    let mut flow = FlowField {
        m: p.m,
        q: p.q,
        g: p.params.g,
        upsilon: ups,
        zeta: Vec::new(),
        zeta_x: Vec::new(),
        zeta_y: Vec::new(),
        psi_y: Vec::new(),
        minus_psi_x: Vec::new(),
        surface_u: Vec::new(),
        surface_v: Vec::new(),
        zeta_ext,
        map,
    };
    for (l, &y) in flow.map.levels.iter().enumerate() {
        let [val, dx, dy, _] = flow.zeta_ext.level(y);
        let (z, zx, zy) = (
            grid.synthesize(&val)?,
            grid.synthesize(&dx)?,
            grid.synthesize(&dy)?,
        );
        let mut py = Vec::with_capacity(z.len());
        let mut mpx = Vec::with_capacity(z.len());
        for i in 0..z.len() {
            let vs = Sample {
                value: flow.map.v[l][i],
                dx: flow.map.v_x[l][i],
                dy: flow.map.v_y[l][i],
            };
            let zs = Sample {
                value: z[i],
                dx: zx[i],
                dy: zy[i],
            };
            let (a, b) = velocity(vs, zs, ups)?;
            py.push(a);
            mpx.push(b);
        }
        flow.zeta.push(z);
        flow.zeta_x.push(zx);
        flow.zeta_y.push(zy);
        flow.psi_y.push(py);
        flow.minus_psi_x.push(mpx);
    }
    let xs = flow.map.xs.clone();
    for &x in &xs {
        flow.surface_u.push(flow.map.sample_u(x, 0.0).value);
        flow.surface_v.push(flow.map.sample_v(x, 0.0).value);
    }
    Ok(flow)
}

impl FlowField {
    /// `(ψ_Y, -ψ_X)` at the image of an arbitrary strip point.
    pub fn velocity_at(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        velocity(
            self.map.sample_v(x, y),
            self.zeta_ext.sample(x, y),
            self.upsilon,
        )
    }

    /// Stream function at the image of a strip point.
    pub fn psi_at(&self, x: f64, y: f64) -> f64 {
        let v = self.map.sample_v(x, y).value;
        self.zeta_ext.sample(x, y).value - self.m + 0.5 * self.upsilon * v * v
    }

    /// Plot-ready surface curve: `x u(x) v(x)` per line.
    pub fn write_surface<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# x u v")?;
        for i in 0..self.map.xs.len() {
            writeln!(
                out,
                "{:.17e} {:.17e} {:.17e}",
                self.map.xs[i], self.surface_u[i], self.surface_v[i]
            )?;
        }
        Ok(())
    }

    /// Plot-ready velocity samples: `X Y psi_Y -psi_X` per line.
    pub fn write_velocity<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# X Y psi_Y -psi_X")?;
        for l in 0..self.map.levels.len() {
            for i in 0..self.map.xs.len() {
                writeln!(
                    out,
                    "{:.17e} {:.17e} {:.17e} {:.17e}",
                    self.map.u[l][i], self.map.v[l][i], self.psi_y[l][i], self.minus_psi_x[l][i]
                )?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Flow-side diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalReport {
    /// `max |(|∇ψ|² + 2gY - Q)| / Q` on the surface.
    pub bernoulli_residual: f64,
    /// `max |R| / Q` on the surface.
    pub pressure_residual: f64,
    /// Largest `ψ_Y` over all sampled nodes.
    pub max_psi_y: f64,
    /// Smallest `Q - 2gY` on the surface.
    pub min_q2gy: f64,
    /// `max |(ζ_y + ΥVV_y)² - (Q - 2gV)|∇V|²|` on the surface.
    pub identity_residual: f64,
    /// Difference between the flow-side and spectral identity residuals.
    pub identity_gap: f64,
    /// Largest Cauchy-Riemann defect over the sampled nodes.
    pub cauchy_riemann: f64,
    pub laplacian_residual: f64,
    /// Largest error in the top and bottom traces of `V` and `ζ`.
    pub trace_error: f64,
    /// Error in `U(x + 2π, y) - U(x, y) = 2π/k`.
    pub periodicity_error: f64,
    /// Whether the surface abscissa increases strictly.
    pub surface_monotone: bool,
}

impl PhysicalReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.bernoulli_residual < tol
            && self.pressure_residual < tol
            && self.max_psi_y < 0.0
            && self.min_q2gy > 0.0
            && self.surface_monotone
    }
}

/// Evaluate the flow-side checks.
pub fn physical_checks(
    p: &SolutionPoint,
    flow: &FlowField,
    grid: &GridSpec,
) -> Result<PhysicalReport> {
    let map = &flow.map;
    let (g, q, ups) = (flow.g, flow.q, flow.upsilon);
    let mut bern: f64 = 0.0;
    let mut pres: f64 = 0.0;
    let mut min_q2gy = f64::INFINITY;
    let mut ident: f64 = 0.0;
    let mut trace: f64 = 0.0;
    let top = grid.synthesize(&p.v)?;
    let v2 = grid.exact_product(&p.v, &p.v)?;
    for (i, &x) in map.xs.iter().enumerate() {
        let (a, b) = flow.velocity_at(x, 0.0)?;
        let vs = map.sample_v(x, 0.0);
        let zs = flow.zeta_ext.sample(x, 0.0);
        let y_phys = vs.value;
        let speed2 = a * a + b * b;
        bern = bern.max((speed2 + 2.0 * g * y_phys - q).abs() / q);
        let psi = flow.psi_at(x, 0.0);
        let r = 0.5 * speed2 + g * y_phys - 0.5 * q - ups * psi;
        pres = pres.max(r.abs() / q);
        min_q2gy = min_q2gy.min(q - 2.0 * g * y_phys);
        let lhs = zs.dy + ups * vs.value * vs.dy;
        ident = ident
            .max((lhs * lhs - (q - 2.0 * g * vs.value) * (vs.dx * vs.dx + vs.dy * vs.dy)).abs());
        let zeta_top = p.m - 0.5 * ups * v2.eval(x);
        trace = trace
            .max((vs.value - top[i]).abs())
            .max(map.sample_v(x, -map.depth).value.abs())
            .max((zs.value - zeta_top).abs())
            .max(flow.zeta_ext.sample(x, -map.depth).value.abs());
    }
    let spectral = identity_add_check(p, grid)?;

    let mut cr: f64 = 0.0;
    let mut max_psi_y = f64::NEG_INFINITY;
    for l in 0..map.levels.len() {
        for i in 0..map.xs.len() {
            cr = cr
                .max((map.u_x[l][i] - map.v_y[l][i]).abs())
                .max((map.u_y[l][i] + map.v_x[l][i]).abs());
            max_psi_y = max_psi_y.max(flow.psi_y[l][i]);
        }
    }
    let mut periodicity: f64 = 0.0;
    for &y in &map.levels {
        for x in [0.0, 1.0, 2.5] {
            let du = map.sample_u(x + 2.0 * PI, y).value - map.sample_u(x, y).value;
            periodicity = periodicity.max((du - 2.0 * PI / map.k).abs());
        }
    }
    let us = &flow.surface_u;
    let surface_monotone = us.windows(2).all(|w| w[1] > w[0])
        && us.last().map_or(true, |l| us[0] + 2.0 * PI / map.k > *l);
    Ok(PhysicalReport {
        bernoulli_residual: bern,
        pressure_residual: pres,
        max_psi_y,
        min_q2gy,
        identity_residual: ident,
        identity_gap: (ident - spectral).abs(),
        cauchy_riemann: cr,
        laplacian_residual: map.laplacian_residual,
        trace_error: trace,
        periodicity_error: periodicity,
        surface_monotone,
    })
}

/// Mean current per level and its affine fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurrentProfile {
    /// `(Y, mean horizontal velocity)` pairs.
    pub samples: Vec<(f64, f64)>,
    /// Fitted value at the bed.
    pub intercept: f64,
    /// Fitted slope.
    pub slope: f64,
    /// Largest deviation of the samples from the fit.
    pub max_deviation: f64,
}

/// Strip depth `y` with `V(x, y) = level`, by safeguarded Newton.
fn invert_level(map: &StripMap, x: f64, level: f64) -> Result<f64> {
    let (mut lo, mut hi) = (-map.depth, 0.0);
    let mut y = -map.depth * (1.0 - level / map.sample_v(x, 0.0).value.max(f64::MIN_POSITIVE));
    y = y.clamp(lo, hi);
    for _ in 0..100 {
        let s = map.sample_v(x, y);
        let f = s.value - level;
        if f.abs() <= 1e-15 * level.abs().max(1.0) {
            return Ok(y);
        }
        if f > 0.0 {
            hi = y;
        } else {
            lo = y;
        }
        let mut next = y - f / s.dy;
        if !(next > lo && next < hi) || s.dy <= 0.0 {
            next = 0.5 * (lo + hi);
        }
        if (next - y).abs() <= 1e-16 * map.depth {
            return Ok(next);
        }
        y = next;
    }
    Err(Error::NoConvergence {
        iterations: 100,
        residual: (map.sample_v(x, y).value - level).abs(),
    })
}

/// Wavelength-averaged horizontal velocity at each physical height `Y` below the
/// trough, with a least-squares affine fit.
pub fn current_profile(
    p: &SolutionPoint,
    flow: &FlowField,
    heights: &[f64],
) -> Result<CurrentProfile> {
    let trough = p.v.eval(PI);
    if heights.len() < 2 {
        return Err(Error::InvalidParams("at least two heights required".into()));
    }
    if let Some(y) = heights.iter().find(|y| !(**y >= 0.0 && **y <= trough)) {
        return Err(Error::InvalidParams(format!(
            "height {y} outside [0, trough = {trough}]"
        )));
    }
    let map = &flow.map;
    let wavelength = 2.0 * PI / map.k;
    let mut samples = Vec::with_capacity(heights.len());
    for &level in heights {
        let mut sum = 0.0;
        for &x in &map.xs {
            let y = if level == 0.0 {
                -map.depth
            } else {
                invert_level(map, x, level)?
            };
            let v = map.sample_v(x, y);
            let (psi_y, _) = flow.velocity_at(x, y)?;
            // dX along the level curve
            sum += psi_y * (v.dx * v.dx + v.dy * v.dy) / v.dy;
        }
        let integral = sum * 2.0 * PI / map.xs.len() as f64;
        samples.push((level, integral / wavelength));
    }
    let nf = samples.len() as f64;
    let my = samples.iter().map(|s| s.0).sum::<f64>() / nf;
    let mu = samples.iter().map(|s| s.1).sum::<f64>() / nf;
    let sxy: f64 = samples.iter().map(|s| (s.0 - my) * (s.1 - mu)).sum();
    let sxx: f64 = samples.iter().map(|s| (s.0 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = mu - slope * my;
    let max_deviation = samples
        .iter()
        .map(|s| (s.1 - intercept - slope * s.0).abs())
        .fold(0.0, f64::max);
    Ok(CurrentProfile {
        samples,
        intercept,
        slope,
        max_deviation,
    })
}

/// `count` evenly spaced heights from the bed up to `fraction` of the trough height.
pub fn default_heights(p: &SolutionPoint, count: usize, fraction: f64) -> Vec<f64> {
    let top = fraction * p.v.eval(PI);
    (0..count)
        .map(|i| top * i as f64 / (count.max(2) - 1) as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equations::PhysicalParams;

    fn setup(ups: f64, m: f64) -> (SolutionPoint, GridSpec) {
        let pr = PhysicalParams::new(9.81, 1.0, 1.0, ups).unwrap();
        let g = GridSpec::with_default_nodes(16, 1.0).unwrap();
        (SolutionPoint::trivial(pr, m, 16), g)
    }

    #[test]
    fn levels_span_strip() {
        let l = default_levels(2.0);
        assert_eq!(l.len(), 33);
        assert_eq!(l[0], -2.0);
        assert_eq!(l[32], 0.0);
        assert!(l.windows(2).all(|w| w[1] > w[0]));
        assert!(l[32] - l[31] < l[1] - l[0]);
    }

    #[test]
    fn ratios_are_stable() {
        let (s, c) = ratios(500, -0.5, 1.0);
        assert!(s.is_finite() && c.is_finite() && s > 0.0);
        let (s, c) = ratios(3, 0.0, 1.0);
        assert!((s - 1.0).abs() < 1e-15);
        assert!((c - 1.0 / 3.0_f64.tanh()).abs() < 1e-14);
        let (s, _) = ratios(3, -1.0, 1.0);
        assert_eq!(s, 0.0);
    }

    #[test]
    fn trivial_map_is_linear() {
        let (p, g) = setup(1.0, -2.0);
        let map = build_strip_map(&p, &default_levels(1.0), &g).unwrap();
        for (l, y) in map.levels.iter().enumerate() {
            for (i, x) in map.xs.iter().enumerate() {
                assert!((map.v[l][i] - (y + 1.0)).abs() < 1e-14);
                assert!((map.u[l][i] - x).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn trivial_flow_is_shear() {
        for ups in [0.0, 1.0, 3.0] {
            let (p, g) = setup(ups, -2.0);
            let map = build_strip_map(&p, &default_levels(1.0), &g).unwrap();
            let flow = build_flow(&p, map, &g).unwrap();
            for l in 0..flow.map.levels.len() {
                for i in 0..flow.map.xs.len() {
                    let y = flow.map.v[l][i];
                    let expect = ups * y + p.m / p.params.h - 0.5 * ups * p.params.h;
                    assert!((flow.psi_y[l][i] - expect).abs() < 1e-13);
                    assert!(flow.minus_psi_x[l][i].abs() < 1e-13);
                }
            }
            let rep = physical_checks(&p, &flow, &g).unwrap();
            assert!(rep.bernoulli_residual < 1e-14);
            assert!(rep.max_psi_y < 0.0);
            let prof = current_profile(&p, &flow, &[0.0, 0.3, 0.6, 0.9]).unwrap();
            assert!((prof.slope - ups).abs() < 1e-12);
            assert!(prof.max_deviation < 1e-12);
        }
    }

    #[test]
    fn heights_above_trough_rejected() {
        let (p, g) = setup(1.0, -2.0);
        let map = build_strip_map(&p, &default_levels(1.0), &g).unwrap();
        let flow = build_flow(&p, map, &g).unwrap();
        assert!(current_profile(&p, &flow, &[0.0, 1.5]).is_err());
    }

    #[test]
    fn levels_outside_strip_rejected() {
        let (p, g) = setup(1.0, -2.0);
        assert!(build_strip_map(&p, &[0.1], &g).is_err());
        assert!(build_strip_map(&p, &[], &g).is_err());
    }
}
