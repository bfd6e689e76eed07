//! Residuals of the conformal wave system, its f-form, the pointwise Bernoulli
//! identity, and the structural condition suite.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{GridSpec, Parity, PeriodicField};

/// Fixed problem data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicalParams {
    /// Gravitational acceleration.
    pub g: f64,
    /// Wavenumber; the period is `2π/k`.
    pub k: f64,
    /// Conformal mean depth.
    pub h: f64,
    /// Constant vorticity.
    pub upsilon: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            g: 9.81,
            k: 1.0,
            h: 1.0,
            upsilon: 0.0,
        }
    }
}

impl PhysicalParams {
    pub fn new(g: f64, k: f64, h: f64, upsilon: f64) -> Result<Self> {
        let p = Self { g, k, h, upsilon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("g", self.g), ("k", self.k), ("h", self.h)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !self.upsilon.is_finite() {
            return Err(Error::InvalidParams("vorticity must be finite".into()));
        }
        Ok(())
    }

    /// Certified runs need non-negative vorticity.
    pub fn require_downstream(&self) -> Result<()> {
        self.validate()?;
        if self.upsilon < 0.0 {
            return Err(Error::InvalidParams(format!(
                "certification requires non-negative vorticity, got {}",
                self.upsilon
            )));
        }
        Ok(())
    }

    /// Strip height `k h`.
    pub fn depth(&self) -> f64 {
        self.k * self.h
    }

    pub fn wavelength(&self) -> f64 {
        2.0 * PI / self.k
    }

    /// Surface speed `m/h + Υh/2` of the laminar flow with mass flux `m`.
    pub fn laminar_speed(&self, m: f64) -> f64 {
        m / self.h + 0.5 * self.upsilon * self.h
    }

    /// Head `2gh + (m/h + Υh/2)^2` of the laminar flow with mass flux `m`.
    pub fn laminar_head(&self, m: f64) -> f64 {
        let l = self.laminar_speed(m);
        2.0 * self.g * self.h + l * l
    }

    pub fn with_upsilon(&self, upsilon: f64) -> Self {
        Self { upsilon, ..*self }
    }
}

/// A triple `(m, Q, v)` with `v` even and of mean `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPoint {
    pub m: f64,
    pub q: f64,
    pub v: PeriodicField,
    pub params: PhysicalParams,
}

const MEAN_TOL: f64 = 1e-12;

impl SolutionPoint {
    pub fn new(params: PhysicalParams, m: f64, q: f64, v: PeriodicField) -> Result<Self> {
        let p = Self { m, q, v, params };
        p.validate()?;
        Ok(p)
    }

    /// Flat surface `v = h` with the laminar head.
    pub fn trivial(params: PhysicalParams, m: f64, modes: usize) -> Self {
        Self {
            m,
            q: params.laminar_head(m),
            v: PeriodicField::constant(params.h, modes),
            params,
        }
    }

    /// Build from cosine coefficients `a_1..a_N` with `a_0 = h`.
    pub fn from_cosines(params: PhysicalParams, m: f64, q: f64, tail: &[f64]) -> Self {
        let mut c = Vec::with_capacity(tail.len() + 1);
        c.push(params.h);
        c.extend_from_slice(tail);
        Self {
            m,
            q,
            v: PeriodicField::even(c),
            params,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.m.is_finite() && self.q.is_finite()) {
            return Err(Error::Constraint("m and Q must be finite".into()));
        }
        if self.v.parity() != Parity::Even {
            return Err(Error::Constraint("surface elevation must be even".into()));
        }
        if self.v.cos_coeffs().iter().any(|c| !c.is_finite()) {
            return Err(Error::Constraint("non-finite surface coefficient".into()));
        }
        let h = self.params.h;
        if (self.v.mean() - h).abs() > MEAN_TOL * h.max(1.0) {
            return Err(Error::Constraint(format!(
                "mean elevation {} differs from conformal depth {h}",
                self.v.mean()
            )));
        }
        Ok(())
    }

    /// Crest-to-trough height `v(0) - v(π)`.
    pub fn amplitude(&self) -> f64 {
        self.v.eval(0.0) - self.v.eval(PI)
    }
}

/// Nodal quantities shared by the residuals and the checks.
pub(crate) struct Nodal {
    pub v: Vec<f64>,
    pub vp: Vec<f64>,
    /// `1/k + C(v')`.
    pub w: Vec<f64>,
    /// `m/(kh) - Υ[v^2]/(2kh) - Υ C(v v')`.
    pub z0: Vec<f64>,
    /// The signed flux expression, `z0 + Υ v w`.
    pub z: Vec<f64>,
    /// `C(v')`.
    pub cvp: Vec<f64>,
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn check_point(p: &SolutionPoint, grid: &GridSpec) -> Result<()> {
    p.validate()?;
    if p.v.modes() > grid.modes() {
        return Err(Error::GridMismatch {
            modes: p.v.modes(),
            max: grid.modes(),
        });
    }
    if (grid.depth() - p.params.depth()).abs() > 1e-12 * p.params.depth() {
        return Err(Error::InvalidGrid(format!(
            "grid strip height {} differs from kh = {}",
            grid.depth(),
            p.params.depth()
        )));
    }
    Ok(())
}

impl Nodal {
    pub fn new(p: &SolutionPoint, grid: &GridSpec) -> Result<Self> {
        check_point(p, grid)?;
        let pr = &p.params;
        let (k, h, ups) = (pr.k, pr.h, pr.upsilon);
        let v = grid.synthesize(&p.v)?;
        let vp = grid.synthesize(&p.v.derivative())?;
        let cvp = grid.synthesize(&grid.strip_hilbert(&p.v.derivative())?)?;
        let w: Vec<f64> = cvp.iter().map(|c| 1.0 / k + c).collect();
        let vvp: Vec<f64> = v.iter().zip(&vp).map(|(a, b)| a * b).collect();
        let c_vvp = grid.hilbert_values(&vvp);
        let mean_v2 = mean(&v.iter().map(|x| x * x).collect::<Vec<_>>());
        let base = p.m / (k * h) - ups * mean_v2 / (2.0 * k * h);
        let z0: Vec<f64> = c_vvp.iter().map(|c| base - ups * c).collect();
        let z = (0..v.len()).map(|i| z0[i] + ups * v[i] * w[i]).collect();
        Ok(Self {
            v,
            vp,
            w,
            z0,
            z,
            cvp,
        })
    }
}

/// Nodal values of the left side of the field equation.
pub(crate) fn field_residual_values(p: &SolutionPoint, grid: &GridSpec, n: &Nodal) -> Vec<f64> {
    let pr = &p.params;
    let (g, k, h, ups) = (pr.g, pr.k, pr.h, pr.upsilon);
    let len = n.v.len();
    let head: Vec<f64> =
        n.v.iter()
            .map(|v| p.q - 2.0 * g * v - ups * ups * v * v)
            .collect();
    let hvp: Vec<f64> = (0..len).map(|i| head[i] * n.vp[i]).collect();
    let c_hvp = grid.hilbert_values(&hvp);
    let v_cvp = mean(&(0..len).map(|i| n.v[i] * n.cvp[i]).collect::<Vec<_>>());
    let constant = -(p.q - 2.0 * ups * p.m - 2.0 * g * h) / k + 2.0 * g * v_cvp;
    (0..len)
        .map(|i| c_hvp[i] + head[i] * n.w[i] - 2.0 * ups * n.v[i] * n.z0[i] + constant)
        .collect()
}

/// Left side of the scalar mean constraint.
pub(crate) fn scalar_residual(p: &SolutionPoint, n: &Nodal) -> f64 {
    let g = p.params.g;
    let len = n.v.len();
    let zz = mean(&n.z.iter().map(|z| z * z).collect::<Vec<_>>());
    let rhs = mean(
        &(0..len)
            .map(|i| (p.q - 2.0 * g * n.v[i]) * (n.vp[i] * n.vp[i] + n.w[i] * n.w[i]))
            .collect::<Vec<_>>(),
    );
    zz - rhs
}

/// Residuals of the field equation (projected on the grid's cosine modes) and of
/// the scalar mean constraint.
pub fn residual_system(p: &SolutionPoint, grid: &GridSpec) -> Result<(PeriodicField, f64)> {
    let n = Nodal::new(p, grid)?;
    let r = field_residual_values(p, grid, &n);
    let field = grid.analyze(&r)?.project(Parity::Even);
    Ok((field, scalar_residual(p, &n)))
}

/// Pointwise residual of the Bernoulli identity
/// `Z^2 - (Q - 2gv)((v')^2 + (1/k + C v')^2)` at the nodes.
pub fn identity_residual_values(p: &SolutionPoint, grid: &GridSpec) -> Result<Vec<f64>> {
    let n = Nodal::new(p, grid)?;
    Ok(identity_values(p, &n))
}

fn identity_values(p: &SolutionPoint, n: &Nodal) -> Vec<f64> {
    let g = p.params.g;
    (0..n.v.len())
        .map(|i| n.z[i] * n.z[i] - (p.q - 2.0 * g * n.v[i]) * (n.vp[i] * n.vp[i] + n.w[i] * n.w[i]))
        .collect()
}

/// Largest absolute residual of the pointwise Bernoulli identity.
pub fn identity_add_check(p: &SolutionPoint, grid: &GridSpec) -> Result<f64> {
    Ok(identity_residual_values(p, grid)?
        .iter()
        .fold(0.0_f64, |m, r| m.max(r.abs())))
}

/// The substitution `f = (k/2g)(Q - 2gv)` and the constants of the f-form.
#[derive(Debug, Clone, PartialEq)]
pub struct FFormView {
    pub f: PeriodicField,
    pub a_upper: f64,
    pub b_upper: f64,
    pub a: f64,
    pub b: f64,
}

/// f-form of a point.
///
/// The constant `b` is the period average of the f-form equation,
/// `kQ/2g - Υkm/g - kh - [f C f'] + (kQ/2g) B + Υ²kQ²/8g³ - Υ²khQ/2g²`.
pub fn to_f_form(p: &SolutionPoint, grid: &GridSpec) -> Result<FFormView> {
    check_point(p, grid)?;
    let pr = &p.params;
    let (g, k, h, ups) = (pr.g, pr.k, pr.h, pr.upsilon);
    let q = p.q;
    let s = k / (2.0 * g);
    let mut cos: Vec<f64> = p.v.cos_coeffs().iter().map(|c| -k * c).collect();
    cos[0] = s * (q - 2.0 * g * p.v.mean());
    let f = PeriodicField::even(cos);

    let fv = grid.synthesize(&f)?;
    let f2 = mean(&fv.iter().map(|x| x * x).collect::<Vec<_>>());
    let cfp = grid.synthesize(&grid.strip_hilbert(&f.derivative())?)?;
    let f_cfp = mean(&fv.iter().zip(&cfp).map(|(a, b)| a * b).collect::<Vec<_>>());

    let a_upper = ups * ups / (k * g);
    let a = s * (q - 2.0 * g * h);
    let b_upper = (ups / g)
        * (p.m / h + ups * h - ups * q / (2.0 * g) + ups * q * q / (8.0 * h * g * g)
            - ups * f2 / (2.0 * k * k * h));
    let b = k * q / (2.0 * g) - ups * k * p.m / g - k * h - f_cfp
        + (k * q / (2.0 * g)) * b_upper
        + ups * ups * k * q * q / (8.0 * g * g * g)
        - ups * ups * k * h * q / (2.0 * g * g);
    Ok(FFormView {
        f,
        a_upper,
        b_upper,
        a,
        b,
    })
}

/// The alternative form `(Υ/g)(m/h + Υh - Υ[v^2]/(2h))` of `B`.
pub fn b_upper_direct(p: &SolutionPoint, grid: &GridSpec) -> Result<f64> {
    let v = grid.synthesize(&p.v)?;
    let v2 = mean(&v.iter().map(|x| x * x).collect::<Vec<_>>());
    let pr = &p.params;
    Ok((pr.upsilon / pr.g) * (p.m / pr.h + pr.upsilon * pr.h - pr.upsilon * v2 / (2.0 * pr.h)))
}

/// Residual of the f-form equation,
/// `f + (aA+B) f - (A/2) f^2 - {f C f' + C(f f')} - b + (A/2) K f`,
/// represented exactly (all `3N` modes).
pub fn residual_ef(ff: &FFormView, grid: &GridSpec) -> Result<PeriodicField> {
    let n = ff.f.modes();
    let g = grid.exact_for(3 * n);
    let fv = g.synthesize(&ff.f)?;
    let fp = g.synthesize(&ff.f.derivative())?;
    let cfp = g.synthesize(&g.strip_hilbert(&ff.f.derivative())?)?;
    let ffp: Vec<f64> = fv.iter().zip(&fp).map(|(a, b)| a * b).collect();
    let c_ffp = g.hilbert_values(&ffp);
    let kf = g.synthesize(&g.op_k(&ff.f)?)?;
    let (aa, bb) = (ff.a_upper, ff.b_upper);
    let r: Vec<f64> = (0..fv.len())
        .map(|i| {
            let f = fv[i];
            f + (ff.a * aa + bb) * f - 0.5 * aa * f * f - (f * cfp[i] + c_ffp[i]) - ff.b
                + 0.5 * aa * kf[i]
        })
        .collect();
    Ok(g.analyze_modes(&r, 3 * n)?.project(Parity::Even))
}

/// Which sign of the flux expression is required.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchSign {
    Minus,
    Plus,
}

impl BranchSign {
    fn factor(self) -> f64 {
        match self {
            BranchSign::Minus => -1.0,
            BranchSign::Plus => 1.0,
        }
    }
}

/// One condition of the suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionEntry {
    pub name: String,
    pub pass: bool,
    /// Minimum over the grid of the quantity that must be positive.
    pub margin: f64,
    /// Node where the minimum is attained, when the check is pointwise.
    pub location: Option<f64>,
}

/// Outcome of [`condition_suite`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub entries: Vec<ConditionEntry>,
}

impl ConditionReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn get(&self, name: &str) -> Option<&ConditionEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| !e.pass)
            .map(|e| e.name.as_str())
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("condition entries serialise")
    }
}

/// Condition names, in report order.
pub mod names {
    pub const STAGNATION_FREE: &str = "stagnation_free";
    pub const POSITIVE_ELEVATION: &str = "positive_elevation";
    pub const INJECTIVE_SURFACE: &str = "injective_surface";
    pub const NONDEGENERATE_MAP: &str = "nondegenerate_map";
    pub const MONOTONE_FLANK: &str = "monotone_flank";
    pub const CREST_TROUGH_CURVATURE: &str = "crest_trough_curvature";
    pub const HORIZONTAL_RANGE: &str = "horizontal_range";
    pub const ENDPOINT_SLOPE: &str = "endpoint_slope";
    pub const SIGNED_FLUX: &str = "signed_flux";
    pub const GRAPH: &str = "graph";
    pub const F_POSITIVE: &str = "f_positive";
    pub const F_INCREASING: &str = "f_increasing";
    pub const F_HILBERT_BOUND: &str = "f_hilbert_bound";
    pub const F_FLUX: &str = "f_flux";
    pub const F_AVERAGED: &str = "f_averaged";
    pub const BERNOULLI_IDENTITY: &str = "bernoulli_identity";
}

/// Relative tolerance for the pointwise Bernoulli identity.
pub const IDENTITY_REL_TOL: f64 = 1e-8;
/// Minimum separation of distinct surface samples.
pub const INJECTIVITY_TOL: f64 = 1e-10;

fn min_at(values: impl Iterator<Item = (f64, f64)>) -> (f64, Option<f64>) {
    values.fold((f64::INFINITY, None), |(m, loc), (x, v)| {
        if v < m {
            (v, Some(x))
        } else {
            (m, loc)
        }
    })
}

fn entry(name: &str, (margin, location): (f64, Option<f64>)) -> ConditionEntry {
    ConditionEntry {
        name: name.into(),
        pass: margin > 0.0,
        margin,
        location,
    }
}

/// Evaluate every structural condition on the collocation grid.
pub fn condition_suite(
    p: &SolutionPoint,
    grid: &GridSpec,
    sign: BranchSign,
) -> Result<ConditionReport> {
    let n = Nodal::new(p, grid)?;
    let pr = &p.params;
    let (g, k, h, ups) = (pr.g, pr.k, pr.h, pr.upsilon);
    let xs = grid.node_points();
    let m = xs.len();
    let interior: Vec<usize> = (1..m).filter(|&j| xs[j] < PI - 1e-14).collect();
    let mut out = Vec::new();

    out.push(entry(
        names::STAGNATION_FREE,
        min_at((0..m).map(|j| (xs[j], p.q - 2.0 * g * n.v[j]))),
    ));
    out.push(entry(
        names::POSITIVE_ELEVATION,
        min_at((0..m).map(|j| (xs[j], n.v[j]))),
    ));

    // surface curve (u, v) with u = x/k + C(v - h)
    let c_v = grid.synthesize(&grid.strip_hilbert(&p.v.add_constant(-h))?)?;
    let u: Vec<f64> = (0..m).map(|j| xs[j] / k + c_v[j]).collect();
    let graph = min_at((0..m).map(|j| (xs[j], n.w[j])));
    out.push(injectivity(&u, &n.v, &xs, pr.wavelength(), graph.0 > 0.0));
    out.push(entry(
        names::NONDEGENERATE_MAP,
        min_at((0..m).map(|j| (xs[j], n.vp[j] * n.vp[j] + n.w[j] * n.w[j]))),
    ));
    out.push(entry(
        names::MONOTONE_FLANK,
        min_at(interior.iter().map(|&j| (xs[j], -n.vp[j]))),
    ));
    let (c0, cpi) = (-p.v.eval_derivative(0.0, 2), p.v.eval_derivative(PI, 2));
    out.push(entry(
        names::CREST_TROUGH_CURVATURE,
        if c0 <= cpi {
            (c0, Some(0.0))
        } else {
            (cpi, Some(PI))
        },
    ));
    out.push(entry(
        names::HORIZONTAL_RANGE,
        min_at(interior.iter().map(|&j| (xs[j], u[j].min(PI / k - u[j])))),
    ));
    let w_at = |x: f64| {
        1.0 / k
            + grid
                .strip_hilbert(&p.v.derivative())
                .map(|c| c.eval(x))
                .unwrap_or(f64::NAN)
    };
    let (w0, wpi) = (w_at(0.0), w_at(PI));
    out.push(entry(
        names::ENDPOINT_SLOPE,
        if w0 <= wpi {
            (w0, Some(0.0))
        } else {
            (wpi, Some(PI))
        },
    ));
    let sf = sign.factor();
    out.push(entry(
        names::SIGNED_FLUX,
        min_at((0..m).map(|j| (xs[j], sf * n.z[j]))),
    ));
    out.push(entry(names::GRAPH, graph));

    // f-form conditions
    let ff = to_f_form(p, grid)?;
    let fv = grid.synthesize(&ff.f)?;
    let fp = grid.synthesize(&ff.f.derivative())?;
    let cfp = grid.synthesize(&grid.strip_hilbert(&ff.f.derivative())?)?;
    let jf = grid.synthesize(&grid.op_j(&ff.f)?)?;
    out.push(entry(
        names::F_POSITIVE,
        min_at((0..m).map(|j| (xs[j], fv[j]))),
    ));
    out.push(entry(
        names::F_INCREASING,
        min_at(interior.iter().map(|&j| (xs[j], fp[j]))),
    ));
    out.push(entry(
        names::F_HILBERT_BOUND,
        min_at((0..m).map(|j| (xs[j], 1.0 - cfp[j]))),
    ));
    let f2 = mean(&fv.iter().map(|x| x * x).collect::<Vec<_>>());
    let flux_const = p.m / h + ups * p.q * p.q / (8.0 * h * g * g) - ups * f2 / (2.0 * k * k * h);
    out.push(entry(
        names::F_FLUX,
        min_at((0..m).map(|j| (xs[j], -(flux_const - ups / k * fv[j] + ups / k * jf[j])))),
    ));
    let (aa, bb) = (ff.a_upper, ff.b_upper);
    let averaged = min_at((0..m).map(|j| (xs[j], -(ff.a * aa + bb - aa * fv[j] + aa * jf[j]))));
    out.push(ConditionEntry {
        name: names::F_AVERAGED.into(),
        pass: averaged.0 >= 0.0,
        margin: averaged.0,
        location: averaged.1,
    });

    let id = identity_values(p, &n);
    let (worst, at) = (0..m).fold((0.0_f64, None), |(w, loc), j| {
        if id[j].abs() > w {
            (id[j].abs(), Some(xs[j]))
        } else {
            (w, loc)
        }
    });
    out.push(entry(
        names::BERNOULLI_IDENTITY,
        (IDENTITY_REL_TOL * p.q.abs() - worst, at),
    ));
    Ok(ConditionReport { entries: out })
}

fn injectivity(u: &[f64], v: &[f64], xs: &[f64], period: f64, graph: bool) -> ConditionEntry {
    let m = u.len();
    let mut best = (f64::INFINITY, None);
    for i in 0..m {
        for j in (i + 1)..m {
            for shift in [-period, 0.0, period] {
                let d = (u[i] - u[j] - shift).hypot(v[i] - v[j]);
                if d < best.0 {
                    best = (d, Some(xs[i]));
                }
            }
        }
    }
    let monotone = !graph
        || (0..m).all(|j| {
            let next = if j + 1 < m { u[j + 1] } else { u[0] + period };
            next > u[j]
        });
    ConditionEntry {
        name: names::INJECTIVE_SURFACE.into(),
        pass: best.0 > INJECTIVITY_TOL && monotone,
        margin: best.0,
        location: best.1,
    }
}
