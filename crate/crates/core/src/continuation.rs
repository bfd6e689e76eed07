//! Bifurcation data, linearised singularity detection, and predictor-corrector
//! tracing of the downstream branch.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bounds::{amplitude_bound, min_q2gv, proof_replay, REPLAY_TOL};
use crate::equations::{
    condition_suite, field_residual_values, mean, scalar_residual, BranchSign, Nodal,
    PhysicalParams, SolutionPoint,
};
use crate::error::{Error, Result};
use crate::kernel::{coth, KernelConfig};
use crate::spectral::{GridSpec, PeriodicField};

/// What to do when an accepted point fails a certified condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EnforcementPolicy {
    #[default]
    Warn,
    Halt,
}

/// Continuation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuationConfig {
    /// Retained cosine modes `N`.
    pub modes: usize,
    /// Collocation nodes `M`; `None` picks the smallest 5-smooth count above `4N`.
    pub nodes: Option<usize>,
    /// First value of the pinned coefficient `a_1`.
    pub s_init: f64,
    pub initial_step: f64,
    pub max_step: f64,
    pub min_step: f64,
    pub step_grow: f64,
    pub step_shrink: f64,
    /// Corrector solves with at most this many iterations count as easy.
    pub easy_iterations: usize,
    /// Consecutive easy solves before the step grows.
    pub easy_streak: usize,
    /// Natural continuation hands over to arclength when `|Δa_1|/|ΔY|` drops below this.
    pub switch_ratio: f64,
    /// Bound on the Euclidean norm of the stacked residual.
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    /// Halt once `min(Q - 2gv) < stagnation_stop * Q`.
    pub stagnation_stop: f64,
    pub max_points: usize,
    /// Halt once the top eighth of the spectrum exceeds this fraction of the largest coefficient.
    pub resolution_tol: f64,
    pub policy: EnforcementPolicy,
    pub sign: BranchSign,
    /// Use a central-difference Jacobian instead of the analytic one.
    pub fd_jacobian: bool,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        Self {
            modes: 128,
            nodes: None,
            s_init: 1e-3,
            initial_step: 5e-3,
            max_step: 2e-2,
            min_step: 1e-6,
            step_grow: 1.3,
            step_shrink: 0.5,
            easy_iterations: 4,
            easy_streak: 2,
            switch_ratio: 0.5,
            newton_tol: 1e-11,
            max_newton_iters: 20,
            stagnation_stop: 1e-3,
            max_points: 400,
            resolution_tol: 1e-10,
            policy: EnforcementPolicy::Warn,
            sign: BranchSign::Minus,
            fd_jacobian: false,
        }
    }
}

impl ContinuationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if self.modes < GridSpec::MIN_MODES {
            return bad(format!("at least {} modes required", GridSpec::MIN_MODES));
        }
        if let Some(m) = self.nodes {
            if m <= 4 * self.modes {
                return bad(format!("nodes must exceed 4 * modes = {}", 4 * self.modes));
            }
        }
        let positive = [
            ("s_init", self.s_init),
            ("initial_step", self.initial_step),
            ("max_step", self.max_step),
            ("min_step", self.min_step),
            ("stagnation_stop", self.stagnation_stop),
            ("resolution_tol", self.resolution_tol),
            ("switch_ratio", self.switch_ratio),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.min_step > self.initial_step || self.initial_step > self.max_step {
            return bad("steps must satisfy min_step <= initial_step <= max_step".into());
        }
        if !(self.step_grow > 1.0) || !(self.step_shrink > 0.0 && self.step_shrink < 1.0) {
            return bad("step_grow must exceed 1 and step_shrink lie in (0, 1)".into());
        }
        if !(self.newton_tol >= 1e-13) {
            return bad(format!(
                "newton_tol must be at least 1e-13, got {}",
                self.newton_tol
            ));
        }
        if self.max_newton_iters == 0 || self.max_points == 0 {
            return bad("iteration and point limits must be positive".into());
        }
        Ok(())
    }

    pub fn grid(&self, params: &PhysicalParams) -> Result<GridSpec> {
        let nodes = self
            .nodes
            .unwrap_or_else(|| GridSpec::default_nodes(self.modes));
        GridSpec::new(self.modes, nodes, params.depth())
    }
}

/// Closed-form bifurcation points from the flat surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BifurcationData {
    pub m_minus: f64,
    pub m_plus: f64,
    pub q_minus: f64,
    pub q_plus: f64,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
}

impl BifurcationData {
    pub fn m(&self, sign: BranchSign) -> f64 {
        match sign {
            BranchSign::Minus => self.m_minus,
            BranchSign::Plus => self.m_plus,
        }
    }

    pub fn q(&self, sign: BranchSign) -> f64 {
        match sign {
            BranchSign::Minus => self.q_minus,
            BranchSign::Plus => self.q_plus,
        }
    }
}

/// Surface speeds `(λ₋, λ₊)` at which mode `n` bifurcates: the roots of
/// `n coth(n kh) λ² - (g + Υλ)/k = 0`.
fn critical_speeds(params: &PhysicalParams, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let t = 1.0 / coth(nf * params.depth());
    let (g, k, u) = (params.g, params.k, params.upsilon);
    let half = u * t / (2.0 * k * nf);
    let root = (half * half + g * t / (k * nf)).sqrt();
    // the root of smaller magnitude is formed without cancellation
    if half >= 0.0 {
        let plus = half + root;
        (-(g * t / (k * nf)) / plus, plus)
    } else {
        let minus = half - root;
        (minus, -(g * t / (k * nf)) / minus)
    }
}

/// Bifurcation points of the primary branch.
pub fn bifurcation_data(params: &PhysicalParams) -> Result<BifurcationData> {
    params.validate()?;
    let (lm, lp) = critical_speeds(params, 1);
    let h = params.h;
    let m_of = |l: f64| h * (l - 0.5 * params.upsilon * h);
    Ok(BifurcationData {
        m_minus: m_of(lm),
        m_plus: m_of(lp),
        q_minus: 2.0 * params.g * h + lm * lm,
        q_plus: 2.0 * params.g * h + lp * lp,
        lambda_minus: lm,
        lambda_plus: lp,
    })
}

/// Mass flux at which mode `n` bifurcates from the flat surface.
pub fn mode_bifurcation_m(params: &PhysicalParams, n: usize, sign: BranchSign) -> f64 {
    let (lm, lp) = critical_speeds(params, n.max(1));
    let l = if sign == BranchSign::Minus { lm } else { lp };
    params.h * (l - 0.5 * params.upsilon * params.h)
}

/// Unknowns `(a_1..a_N, m, Q)` packed in one vector.
pub(crate) struct System<'a> {
    params: PhysicalParams,
    grid: &'a GridSpec,
    n: usize,
    /// `cos(j x_i)` and `sin(j x_i)` for `j = 1..N`.
    cos_tab: Vec<Vec<f64>>,
    sin_tab: Vec<Vec<f64>>,
}

/// Rows of the unpinned block: field modes `0..N` and the scalar constraint.
fn block_rows(n: usize) -> usize {
    n + 2
}

impl<'a> System<'a> {
    pub fn new(params: PhysicalParams, grid: &'a GridSpec) -> Self {
        let n = grid.modes();
        let xs = grid.node_points();
        let cos_tab = (1..=n)
            .map(|j| xs.iter().map(|x| (j as f64 * x).cos()).collect())
            .collect();
        let sin_tab = (1..=n)
            .map(|j| xs.iter().map(|x| (j as f64 * x).sin()).collect())
            .collect();
        Self {
            params,
            grid,
            n,
            cos_tab,
            sin_tab,
        }
    }

    pub fn point(&self, x: &[f64]) -> SolutionPoint {
        SolutionPoint::from_cosines(self.params, x[self.n], x[self.n + 1], &x[..self.n])
    }

    pub fn pack(&self, p: &SolutionPoint) -> Vec<f64> {
        let mut x: Vec<f64> = (1..=self.n).map(|j| p.v.cos_coeff(j)).collect();
        x.push(p.m);
        x.push(p.q);
        x
    }

    /// Field modes `0..N` followed by the scalar constraint.
    pub fn block_residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        let p = self.point(x);
        let nd = Nodal::new(&p, self.grid)?;
        let r = field_residual_values(&p, self.grid, &nd);
        let (mut out, _) = self.grid.coeffs_of(&r, self.n);
        out.push(scalar_residual(&p, &nd));
        Ok(out)
    }

    /// Analytic Jacobian of [`Self::block_residual`].
    pub fn block_jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let p = self.point(x);
        let nd = Nodal::new(&p, self.grid)?;
        let pr = &self.params;
        let (g, k, h, ups) = (pr.g, pr.k, pr.h, pr.upsilon);
        let n = self.n;
        let len = nd.v.len();
        let grid = self.grid;
        let head: Vec<f64> =
            nd.v.iter()
                .map(|v| p.q - 2.0 * g * v - ups * ups * v * v)
                .collect();
        let grad2: Vec<f64> = (0..len)
            .map(|i| nd.vp[i] * nd.vp[i] + nd.w[i] * nd.w[i])
            .collect();
        let mut jac = DMatrix::zeros(block_rows(n), n + 2);

        let put = |col: usize, dr: &[f64], ds: f64, jac: &mut DMatrix<f64>| {
            let (c, _) = grid.coeffs_of(dr, n);
            for (row, v) in c.iter().enumerate() {
                jac[(row, col)] = *v;
            }
            jac[(n + 1, col)] = ds;
        };

        let mut dp = vec![0.0; len];
        let mut t1 = vec![0.0; len];
        let mut dvv = vec![0.0; len];
        let mut dr = vec![0.0; len];
        for j in 1..=n {
            let jf = j as f64;
            let cj = jf * grid.coth(j);
            let dv = &self.cos_tab[j - 1];
            let sn = &self.sin_tab[j - 1];
            for i in 0..len {
                let dvp = -jf * sn[i];
                dp[i] = -2.0 * g * dv[i] - 2.0 * ups * ups * nd.v[i] * dv[i];
                t1[i] = dp[i] * nd.vp[i] + head[i] * dvp;
                dvv[i] = dv[i] * nd.vp[i] + nd.v[i] * dvp;
            }
            let c_t1 = grid.hilbert_values(&t1);
            let c_dvv = grid.hilbert_values(&dvv);
            let mean_vdv = mean(&(0..len).map(|i| nd.v[i] * dv[i]).collect::<Vec<_>>());
            let mut avg = 0.0;
            let mut ds = 0.0;
            for i in 0..len {
                let cdvp = cj * dv[i];
                let dvp = -jf * sn[i];
                avg += dv[i] * nd.cvp[i] + nd.v[i] * cdvp;
                let dz0 = -ups * mean_vdv / (k * h) - ups * c_dvv[i];
                dr[i] = c_t1[i] + dp[i] * nd.w[i] + head[i] * cdvp
                    - 2.0 * ups * (dv[i] * nd.z0[i] + nd.v[i] * dz0);
                let dz = dz0 + ups * dv[i] * nd.w[i] + ups * nd.v[i] * cdvp;
                ds += 2.0 * nd.z[i] * dz + 2.0 * g * dv[i] * grad2[i]
                    - (p.q - 2.0 * g * nd.v[i]) * (2.0 * nd.vp[i] * dvp + 2.0 * nd.w[i] * cdvp);
            }
            let avg = 2.0 * g * avg / len as f64;
            for r in dr.iter_mut() {
                *r += avg;
            }
            put(j - 1, &dr, ds / len as f64, &mut jac);
        }

        let dr_m: Vec<f64> =
            nd.v.iter()
                .map(|v| -2.0 * ups * v / (k * h) + 2.0 * ups / k)
                .collect();
        let ds_m = 2.0 * mean(&nd.z) / (k * h);
        put(n, &dr_m, ds_m, &mut jac);
        let dr_q: Vec<f64> = nd.cvp.iter().map(|c| 2.0 * c).collect();
        let ds_q = -mean(&grad2);
        put(n + 1, &dr_q, ds_q, &mut jac);
        Ok(jac)
    }

    /// Central-difference Jacobian of [`Self::block_residual`].
    pub fn block_jacobian_fd(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let cols = self.n + 2;
        let mut jac = DMatrix::zeros(block_rows(self.n), cols);
        let mut xp = x.to_vec();
        for c in 0..cols {
            let step = 1e-6 * x[c].abs().max(1e-2);
            xp[c] = x[c] + step;
            let fp = self.block_residual(&xp)?;
            xp[c] = x[c] - step;
            let fm = self.block_residual(&xp)?;
            xp[c] = x[c];
            for r in 0..fp.len() {
                jac[(r, c)] = (fp[r] - fm[r]) / (2.0 * step);
            }
        }
        Ok(jac)
    }
}

/// Smallest singular value of the linearisation about the flat surface,
/// restricted to even mean-zero perturbations and scaled by `(2g + Υ²h)/k`.
pub fn detect_singularity(params: &PhysicalParams, m: f64, grid: &GridSpec) -> Result<f64> {
    let (sigma, _) = trivial_linearisation(params, m, grid)?;
    Ok(sigma)
}

/// [`detect_singularity`] with the sign of the square field block's determinant.
pub fn signed_singularity(params: &PhysicalParams, m: f64, grid: &GridSpec) -> Result<f64> {
    let (sigma, sign) = trivial_linearisation(params, m, grid)?;
    Ok(sign * sigma)
}

fn trivial_linearisation(params: &PhysicalParams, m: f64, grid: &GridSpec) -> Result<(f64, f64)> {
    params.validate()?;
    if !m.is_finite() {
        return Err(Error::InvalidParams("mass flux must be finite".into()));
    }
    let sys = System::new(*params, grid);
    let p = SolutionPoint::trivial(*params, m, grid.modes());
    let x = sys.pack(&p);
    let jac = sys.block_jacobian(&x)?;
    let n = grid.modes();
    let block = jac.columns(0, n).into_owned();
    let sv = block
        .clone()
        .try_svd(false, false, 1e-15, 500)
        .ok_or_else(|| Error::LinearAlgebra("SVD did not converge".into()))?
        .singular_values;
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let square = block.rows(1, n).into_owned();
    let det = square.lu().determinant();
    let scale = (2.0 * params.g + params.upsilon * params.upsilon * params.h) / params.k;
    let sign = if det < 0.0 { -1.0 } else { 1.0 };
    Ok((smin / scale, sign))
}

/// One stored sample for prediction: branch parameter and packed unknowns.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub s: f64,
    pub x: Vec<f64>,
}

/// Secant predictor. With a single state the pinned coefficient `a_1` is set to
/// `s` and everything else copied; otherwise the last two states are
/// extrapolated linearly in `s`.
pub fn predict(history: &[State], s: f64) -> Result<Vec<f64>> {
    match history {
        [] => Err(Error::InvalidParams(
            "prediction needs at least one state".into(),
        )),
        [only] => {
            let mut x = only.x.clone();
            if let Some(a1) = x.first_mut() {
                *a1 = s;
            }
            Ok(x)
        }
        [.., a, b] => {
            let ds = b.s - a.s;
            if ds == 0.0 {
                return Err(Error::Degenerate("secant states share s".into()));
            }
            let t = (s - b.s) / ds;
            Ok(b.x
                .iter()
                .zip(&a.x)
                .map(|(xb, xa)| xb + t * (xb - xa))
                .collect())
        }
    }
}

/// The closing equation of the corrector.
#[derive(Debug, Clone, PartialEq)]
pub enum Closure {
    /// `a_1 = s`.
    Pin(f64),
    /// `tangent · (Y - base) = step` with `Y = (a_1, m, Q)`.
    Arclength {
        base: [f64; 3],
        tangent: [f64; 3],
        step: f64,
    },
}

fn arc_coords(x: &[f64], n: usize) -> [f64; 3] {
    [x[0], x[n], x[n + 1]]
}

impl Closure {
    fn value(&self, x: &[f64], n: usize) -> f64 {
        match self {
            Closure::Pin(s) => x[0] - s,
            Closure::Arclength {
                base,
                tangent,
                step,
            } => {
                let y = arc_coords(x, n);
                (0..3).map(|i| tangent[i] * (y[i] - base[i])).sum::<f64>() - step
            }
        }
    }

    fn gradient(&self, n: usize) -> Vec<f64> {
        let mut g = vec![0.0; n + 2];
        match self {
            Closure::Pin(_) => g[0] = 1.0,
            Closure::Arclength { tangent, .. } => {
                g[0] = tangent[0];
                g[n] = tangent[1];
                g[n + 1] = tangent[2];
            }
        }
        g
    }
}

/// Outcome of a corrector solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Corrected {
    pub point: SolutionPoint,
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Euclidean norm of the full stacked residual.
    pub residual: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn stacked(sys: &System, x: &[f64], closure: &Closure) -> Result<Vec<f64>> {
    let mut f = sys.block_residual(x)?;
    f.push(closure.value(x, sys.n));
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(
            f.iter().position(|v| !v.is_finite()).unwrap_or(0),
        ));
    }
    Ok(f)
}

/// Damped Gauss-Newton on the stacked residual
/// `{field modes 0..N, scalar constraint, closure}` with QR least squares.
pub fn correct(
    guess: &[f64],
    closure: &Closure,
    params: &PhysicalParams,
    grid: &GridSpec,
    config: &ContinuationConfig,
) -> Result<Corrected> {
    let sys = System::new(*params, grid);
    correct_with(&sys, guess, closure, config)
}

pub(crate) fn correct_with(
    sys: &System,
    guess: &[f64],
    closure: &Closure,
    config: &ContinuationConfig,
) -> Result<Corrected> {
    let n = sys.n;
    if guess.len() != n + 2 {
        return Err(Error::LengthMismatch {
            expected: n + 2,
            got: guess.len(),
        });
    }
    let mut x = guess.to_vec();
    let mut f = stacked(sys, &x, closure)?;
    let mut res = norm(&f);
    let mut it = 0;
    while res >= config.newton_tol {
        if it == config.max_newton_iters {
            return Err(Error::NoConvergence {
                iterations: it,
                residual: res,
            });
        }
        it += 1;
        let block = if config.fd_jacobian {
            sys.block_jacobian_fd(&x)?
        } else {
            sys.block_jacobian(&x)?
        };
        let mut jac = block.insert_row(block_rows(n), 0.0);
        for (c, v) in closure.gradient(n).into_iter().enumerate() {
            jac[(block_rows(n), c)] = v;
        }
        let rhs = -DVector::from_vec(f.clone());
        let qr = jac.qr();
        let qtb = qr.q().transpose() * rhs;
        let dx = qr
            .r()
            .solve_upper_triangular(&qtb)
            .ok_or_else(|| Error::LinearAlgebra("rank-deficient Jacobian".into()))?;
        if dx.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearAlgebra("non-finite Newton step".into()));
        }

        let mut lambda = 1.0;
        let mut accepted = false;
        while lambda >= 1.0 / 64.0 {
            let trial: Vec<f64> = x
                .iter()
                .zip(dx.iter())
                .map(|(a, d)| a + lambda * d)
                .collect();
            if let Ok(ft) = stacked(sys, &trial, closure) {
                let rt = norm(&ft);
                if rt < res {
                    x = trial;
                    f = ft;
                    res = rt;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::Plateau {
                iterations: it,
                residual: res,
            });
        }
    }
    Ok(Corrected {
        point: sys.point(&x),
        x,
        iterations: it,
        residual: res,
    })
}

/// Why tracing stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaltReason {
    /// `min(Q - 2gv)` dropped below the stagnation threshold.
    Stagnation,
    MaxPoints,
    /// The truncated spectrum no longer resolves the wave.
    ResolutionLimit,
    /// A certified condition failed under the halting policy.
    CertificationFailure,
    /// The corrector failed at the smallest allowed step.
    CorrectorFailure,
}

/// Per-point diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Stacked residual norm of the corrector.
    pub residual: f64,
    /// Largest field-equation coefficient residual.
    pub field_residual: f64,
    pub scalar_residual: f64,
    pub identity_residual: f64,
    pub amplitude: f64,
    pub bound: f64,
    pub margin: f64,
    pub min_q2gv: f64,
    /// Smallest value of `1/k + C(v')`.
    pub graph_min: f64,
    pub newton_iters: usize,
    pub tail_ratio: f64,
    pub arclength: bool,
    pub conditions_pass: bool,
    pub failed_conditions: Vec<String>,
    pub replay_pass: bool,
}

impl Diagnostics {
    pub fn certified(&self) -> bool {
        self.conditions_pass && self.replay_pass && self.margin > 0.0
    }
}

/// One sample of a branch.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchPoint {
    pub s: f64,
    pub point: SolutionPoint,
    pub diagnostics: Diagnostics,
}

/// An ordered family of solutions with strictly increasing `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub params: PhysicalParams,
    pub config: ContinuationConfig,
    pub points: Vec<BranchPoint>,
    pub halt: HaltReason,
}

/// Largest coefficient among the top eighth of modes relative to the largest one.
pub fn tail_ratio(v: &PeriodicField) -> f64 {
    let c = v.cos_coeffs();
    let n = v.modes();
    let top = c[1..].iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if top == 0.0 {
        return 0.0;
    }
    let cut = n - n / 8;
    c[cut + 1..].iter().fold(0.0_f64, |m, x| m.max(x.abs())) / top
}

/// Evaluate all per-point diagnostics.
#[allow(clippy::too_many_arguments)]
pub fn diagnose(
    p: &SolutionPoint,
    grid: &GridSpec,
    sign: BranchSign,
    bound: f64,
    beta_half_pi: f64,
    residual: f64,
    newton_iters: usize,
    arclength: bool,
) -> Result<Diagnostics> {
    let (field, scalar) = crate::equations::residual_system(p, grid)?;
    let report = condition_suite(p, grid, sign)?;
    let identity = crate::equations::identity_add_check(p, grid)?;
    let graph_min = report
        .get(crate::equations::names::GRAPH)
        .map_or(f64::NAN, |e| e.margin);
    let replay_pass = if p.params.upsilon >= 0.0 {
        proof_replay(p, grid, beta_half_pi)?.holds(REPLAY_TOL)
    } else {
        false
    };
    let amplitude = p.amplitude();
    Ok(Diagnostics {
        residual,
        field_residual: field.max_abs_coeff(),
        scalar_residual: scalar,
        identity_residual: identity,
        amplitude,
        bound,
        margin: bound - amplitude,
        min_q2gv: min_q2gv(p, grid)?,
        graph_min,
        newton_iters,
        tail_ratio: tail_ratio(&p.v),
        arclength,
        conditions_pass: report.all_pass(),
        failed_conditions: report.failures().into_iter().map(String::from).collect(),
        replay_pass,
    })
}

fn arc_distance(a: &[f64], b: &[f64], n: usize) -> f64 {
    let (ya, yb) = (arc_coords(a, n), arc_coords(b, n));
    (0..3).map(|i| (ya[i] - yb[i]).powi(2)).sum::<f64>().sqrt()
}

/// Trace the branch from its bifurcation point.
pub fn trace_branch(
    params: &PhysicalParams,
    config: &ContinuationConfig,
    kernel: &KernelConfig,
) -> Result<Branch> {
    config.validate()?;
    params.validate()?;
    let grid = config.grid(params)?;
    let sys = System::new(*params, &grid);
    let n = grid.modes();
    let sign = config.sign;

    let (bound, beta) = match amplitude_bound(params, kernel) {
        Ok(b) => (b.bound, b.beta_half_pi),
        Err(_) if params.upsilon < 0.0 => (f64::INFINITY, f64::NAN),
        Err(e) => return Err(e),
    };

    let bif = bifurcation_data(params)?;
    let trivial = SolutionPoint::trivial(*params, bif.m(sign), n);
    let mut history = vec![State {
        s: 0.0,
        x: sys.pack(&trivial),
    }];
    let mut points: Vec<BranchPoint> = Vec::new();
    let mut arclength = false;
    let mut step = config.initial_step;
    let mut easy = 0;
    let halt;

    loop {
        if points.len() >= config.max_points {
            halt = HaltReason::MaxPoints;
            break;
        }
        let last = history.last().expect("history is never empty");
        let first = points.is_empty();
        let (s_new, guess, closure) = if first {
            let s = config.s_init;
            (s, predict(&history, s)?, Closure::Pin(s))
        } else if !arclength {
            let s = last.s + step;
            (s, predict(&history, s)?, Closure::Pin(s))
        } else {
            let prev = &history[history.len() - 2];
            let d = arc_distance(&last.x, &prev.x, n);
            let (yl, yp) = (arc_coords(&last.x, n), arc_coords(&prev.x, n));
            let tangent = [
                (yl[0] - yp[0]) / d,
                (yl[1] - yp[1]) / d,
                (yl[2] - yp[2]) / d,
            ];
            let guess = last
                .x
                .iter()
                .zip(&prev.x)
                .map(|(a, b)| a + step * (a - b) / d)
                .collect();
            (
                last.s + step,
                guess,
                Closure::Arclength {
                    base: yl,
                    tangent,
                    step,
                },
            )
        };

        let outcome = correct_with(&sys, &guess, &closure, config);
        let rejected = match &outcome {
            Err(_) => true,
            Ok(c) => {
                let p = &c.point;
                let q2gv = min_q2gv(p, &grid)?;
                let moved = arc_distance(&c.x, &last.x, n);
                let natural_ratio_low = !first
                    && !arclength
                    && moved > 0.0
                    && (c.x[0] - last.x[0]).abs() / moved < config.switch_ratio;
                if natural_ratio_low {
                    arclength = true;
                    continue;
                }
                q2gv <= 0.0 || c.x[0] <= 0.0 || (arclength && moved > 3.0 * step)
            }
        };
        if rejected {
            if !arclength && !first && history.len() >= 3 {
                arclength = true;
                continue;
            }
            step *= config.step_shrink;
            easy = 0;
            if step < config.min_step || first {
                halt = HaltReason::CorrectorFailure;
                if first {
                    if let Err(e) = outcome {
                        return Err(e);
                    }
                }
                break;
            }
            continue;
        }
        let c = outcome.expect("rejected outcomes handled above");

        if tail_ratio(&c.point.v) > config.resolution_tol {
            halt = HaltReason::ResolutionLimit;
            break;
        }

        let diagnostics = diagnose(
            &c.point,
            &grid,
            sign,
            bound,
            beta,
            c.residual,
            c.iterations,
            arclength,
        )?;
        let certified = diagnostics.certified();
        let stagnating = diagnostics.min_q2gv < config.stagnation_stop * c.point.q;
        history.push(State {
            s: s_new,
            x: c.x.clone(),
        });
        if history.len() > 3 {
            history.remove(0);
        }
        points.push(BranchPoint {
            s: s_new,
            point: c.point,
            diagnostics,
        });

        if !certified && config.policy == EnforcementPolicy::Halt {
            halt = HaltReason::CertificationFailure;
            break;
        }
        if stagnating {
            halt = HaltReason::Stagnation;
            break;
        }
        if c.iterations <= config.easy_iterations {
            easy += 1;
            if easy >= config.easy_streak {
                step = (step * config.step_grow).min(config.max_step);
                easy = 0;
            }
        } else {
            easy = 0;
        }
    }

    Ok(Branch {
        params: *params,
        config: config.clone(),
        points,
        halt,
    })
}

/// Serialised form of a branch point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub s: f64,
    pub m: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    pub cos_coeffs: Vec<f64>,
    pub diagnostics: Diagnostics,
}

/// Serialised form of a branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
    pub params: PhysicalParams,
    pub config: ContinuationConfig,
    pub halt: HaltReason,
    pub points: Vec<PointRecord>,
}

/// Header of the branch summary CSV.
pub const BRANCH_CSV_HEADER: [&str; 10] = [
    "s",
    "m",
    "Q",
    "amplitude",
    "bound",
    "margin",
    "minQ2gv",
    "graph_min",
    "residual",
    "newton_iters",
];

impl Branch {
    pub fn grid(&self) -> Result<GridSpec> {
        self.config.grid(&self.params)
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn all_certified(&self) -> bool {
        self.points.iter().all(|p| p.diagnostics.certified())
    }

    pub fn to_record(&self, provenance: Option<String>) -> BranchRecord {
        BranchRecord {
            provenance,
            params: self.params,
            config: self.config.clone(),
            halt: self.halt,
            points: self
                .points
                .iter()
                .map(|p| PointRecord {
                    s: p.s,
                    m: p.point.m,
                    q: p.point.q,
                    cos_coeffs: p.point.v.cos_coeffs().to_vec(),
                    diagnostics: p.diagnostics.clone(),
                })
                .collect(),
        }
    }

    /// Rebuild a branch; points are validated but diagnostics are taken as stored.
    pub fn from_record(r: &BranchRecord) -> Result<Self> {
        r.params.validate()?;
        r.config.validate()?;
        let points = r
            .points
            .iter()
            .map(|pr| {
                let v = PeriodicField::even(pr.cos_coeffs.clone());
                Ok(BranchPoint {
                    s: pr.s,
                    point: SolutionPoint::new(r.params, pr.m, pr.q, v)?,
                    diagnostics: pr.diagnostics.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if points.windows(2).any(|w| !(w[1].s > w[0].s)) {
            return Err(Error::Constraint(
                "branch parameter must increase strictly".into(),
            ));
        }
        Ok(Self {
            params: r.params,
            config: r.config.clone(),
            points,
            halt: r.halt,
        })
    }

    pub fn to_json(&self, provenance: Option<String>) -> String {
        serde_json::to_string_pretty(&self.to_record(provenance)).expect("branch serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: BranchRecord = serde_json::from_str(text)
            .map_err(|e| Error::InvalidParams(format!("malformed branch file: {e}")))?;
        Self::from_record(&r)
    }

    /// Summary CSV; each provenance line is written as a `#` comment first.
    pub fn write_csv<W: Write>(&self, mut out: W, provenance: Option<&str>) -> std::io::Result<()> {
        if let Some(p) = provenance {
            for line in p.lines() {
                writeln!(out, "# {line}")?;
            }
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(BRANCH_CSV_HEADER)?;
        for p in &self.points {
            let d = &p.diagnostics;
            w.write_record([
                p.s.to_string(),
                p.point.m.to_string(),
                p.point.q.to_string(),
                d.amplitude.to_string(),
                d.bound.to_string(),
                d.margin.to_string(),
                d.min_q2gv.to_string(),
                d.graph_min.to_string(),
                d.residual.to_string(),
                d.newton_iters.to_string(),
            ])?;
        }
        w.flush()
    }
}

/// `‖v - h - s cos x‖∞` over the grid.
pub fn local_form_deviation(p: &SolutionPoint, s: f64, grid: &GridSpec) -> Result<f64> {
    let v = grid.synthesize(&p.v)?;
    Ok(grid
        .node_points()
        .iter()
        .zip(&v)
        .map(|(x, v)| (v - p.params.h - s * x.cos()).abs())
        .fold(0.0, f64::max))
}

/// Solve for the branch point with `a_1 = s` starting from the bifurcation point.
pub fn local_branch_point(
    params: &PhysicalParams,
    s: f64,
    grid: &GridSpec,
    config: &ContinuationConfig,
) -> Result<Corrected> {
    let bif = bifurcation_data(params)?;
    let sys = System::new(*params, grid);
    let trivial = SolutionPoint::trivial(*params, bif.m(config.sign), grid.modes());
    let guess = predict(
        &[State {
            s: 0.0,
            x: sys.pack(&trivial),
        }],
        s,
    )?;
    correct_with(&sys, &guess, &Closure::Pin(s), config)
}

/// Half the distance in `m` between the first two modal bifurcation points; sign
/// changes of [`signed_singularity`] within this radius belong to mode 1.
pub fn singular_neighbourhood(params: &PhysicalParams, sign: BranchSign) -> f64 {
    let m1 = mode_bifurcation_m(params, 1, sign);
    let m2 = mode_bifurcation_m(params, 2, sign);
    0.5 * (m1 - m2).abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(ups: f64) -> PhysicalParams {
        PhysicalParams::new(9.81, 1.0, 1.0, ups).unwrap()
    }

    fn small_config() -> ContinuationConfig {
        ContinuationConfig {
            modes: 32,
            ..Default::default()
        }
    }

    #[test]
    fn bifurcation_closed_form() {
        let b = bifurcation_data(&params(0.0)).unwrap();
        let r = (9.81 * 1.0_f64.tanh()).sqrt();
        assert!((b.m_minus + r).abs() < 1e-12);
        assert!((b.m_plus - r).abs() < 1e-12);
        assert!((b.q_minus - (2.0 * 9.81 + 9.81 * 1.0_f64.tanh())).abs() < 1e-12);
        assert!((b.m_minus + 2.73335).abs() < 1e-5);
        assert!((b.q_minus - 27.0912).abs() < 1e-4);
        for u in [-3.0, 0.0, 1.0, 7.0] {
            let pr = params(u);
            let b = bifurcation_data(&pr).unwrap();
            assert!(b.lambda_plus > 0.0 && b.lambda_minus < 0.0);
            for (m, l, q) in [
                (b.m_minus, b.lambda_minus, b.q_minus),
                (b.m_plus, b.lambda_plus, b.q_plus),
            ] {
                assert!((pr.laminar_speed(m) - l).abs() < 1e-12);
                assert!((pr.laminar_head(m) - q).abs() < 1e-12);
            }
            // closed form with tanh
            let t = 1.0_f64.tanh();
            let direct = -u / 2.0 + u * t / 2.0 - (u * u * t * t / 4.0 + 9.81 * t).sqrt();
            assert!((b.m_minus - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn analytic_jacobian_matches_differences() {
        let pr = params(1.5);
        let grid = GridSpec::with_default_nodes(12, 1.0).unwrap();
        let sys = System::new(pr, &grid);
        let mut x: Vec<f64> = (1..=12).map(|j| 0.08 / (j * j) as f64).collect();
        x.push(-2.4);
        x.push(25.0);
        let a = sys.block_jacobian(&x).unwrap();
        let f = sys.block_jacobian_fd(&x).unwrap();
        let scale = a.amax();
        assert!((a - f).amax() < 1e-6 * scale);
    }

    #[test]
    fn singular_value_vanishes_at_bifurcation() {
        let pr = params(0.0);
        let grid = GridSpec::with_default_nodes(64, 1.0).unwrap();
        let b = bifurcation_data(&pr).unwrap();
        assert!(detect_singularity(&pr, b.m_minus, &grid).unwrap() < 1e-8);
        assert!(detect_singularity(&pr, b.m_minus + 0.5, &grid).unwrap() > 1e-3);
        assert!(detect_singularity(&pr, b.m_minus - 0.5, &grid).unwrap() > 1e-3);
        let lo = signed_singularity(&pr, b.m_minus - 0.2, &grid).unwrap();
        let hi = signed_singularity(&pr, b.m_minus + 0.2, &grid).unwrap();
        assert!(lo * hi < 0.0);
    }

    #[test]
    fn predictor_properties() {
        let h = vec![State {
            s: 0.0,
            x: vec![0.0, 0.0, -2.0, 27.0],
        }];
        assert_eq!(predict(&h, 1e-3).unwrap(), vec![1e-3, 0.0, -2.0, 27.0]);
        assert_eq!(predict(&h, 0.0).unwrap(), h[0].x);
        let h = vec![
            State {
                s: 1.0,
                x: vec![1.0, 2.0],
            },
            State {
                s: 2.0,
                x: vec![3.0, 5.0],
            },
        ];
        assert_eq!(predict(&h, 4.0).unwrap(), vec![7.0, 11.0]);
    }

    #[test]
    fn trivial_point_is_fixed() {
        let pr = params(1.0);
        let cfg = small_config();
        let grid = cfg.grid(&pr).unwrap();
        let sys = System::new(pr, &grid);
        let p = SolutionPoint::trivial(pr, -2.0, 32);
        let x = sys.pack(&p);
        let c = correct(&x, &Closure::Pin(0.0), &pr, &grid, &cfg).unwrap();
        assert_eq!(c.iterations, 0);
        assert_eq!(c.x, x);
    }

    #[test]
    fn local_form_near_onset() {
        let pr = params(0.0);
        let cfg = small_config();
        let grid = cfg.grid(&pr).unwrap();
        let c = local_branch_point(&pr, 1e-3, &grid, &cfg).unwrap();
        assert!(c.residual < 1e-11);
        assert!(c.iterations <= 8);
        let dev = local_form_deviation(&c.point, 1e-3, &grid).unwrap();
        assert!(dev <= 1e-2 * 1e-3, "{dev}");
    }

    #[test]
    fn short_trace_is_certified() {
        let pr = params(1.0);
        let cfg = ContinuationConfig {
            max_points: 6,
            ..small_config()
        };
        let b = trace_branch(&pr, &cfg, &KernelConfig::new(1.0)).unwrap();
        assert_eq!(b.halt, HaltReason::MaxPoints);
        assert_eq!(b.len(), 6);
        for w in b.points.windows(2) {
            assert!(w[1].s > w[0].s);
            assert!(w[1].diagnostics.amplitude > w[0].diagnostics.amplitude);
        }
        for p in &b.points {
            assert!(p.diagnostics.residual < 1e-10);
            assert!(
                p.diagnostics.certified(),
                "{:?}",
                p.diagnostics.failed_conditions
            );
        }
        let json = b.to_json(Some("test".into()));
        let back = Branch::from_json(&json).unwrap();
        assert_eq!(back.points.len(), b.points.len());
        assert_eq!(back.points[3].point, b.points[3].point);
    }

    #[test]
    fn config_validation() {
        assert!(ContinuationConfig::default().validate().is_ok());
        let bad = ContinuationConfig {
            nodes: Some(512),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ContinuationConfig {
            newton_tol: 1e-14,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
