//! Explicit amplitude bounds, per-point replay of the bound's proof chain, branch
//! audits and vorticity sweeps.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::continuation::{trace_branch, Branch, ContinuationConfig, HaltReason};
use crate::equations::{to_f_form, PhysicalParams, SolutionPoint};
use crate::error::{Error, Result};
use crate::kernel::{beta_eval, KernelConfig};
use crate::spectral::GridSpec;

/// The amplitude bound and its components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// The sharpest applicable bound.
    pub bound: f64,
    /// Observed crest-to-trough height `v(0) - v(π)`.
    pub amplitude: f64,
    /// `bound - amplitude`.
    pub margin: f64,
    /// Kernel value at `π/2` for the strip height `kh`.
    pub beta_half_pi: f64,
    /// `sqrt(36g²/Υ⁴ + 24πg/(Υ²kβ)) - 6g/Υ²`, present for positive vorticity.
    pub vorticity_bound: Option<f64>,
    /// `2π/(kβ)`.
    pub depth_bound: f64,
    /// `2π²/((π-2)k)`.
    pub universal_cap: f64,
}

impl BoundReport {
    pub fn with_amplitude(&self, amplitude: f64) -> Self {
        Self {
            amplitude,
            margin: self.bound - amplitude,
            ..*self
        }
    }

    /// Ordering of the bound chain: vorticity bound < depth bound <= cap.
    pub fn chain_ok(&self) -> bool {
        let tail = self.depth_bound <= self.universal_cap * (1.0 + 1e-14);
        match self.vorticity_bound {
            Some(v) => v < self.depth_bound && tail,
            None => tail,
        }
    }
}

/// `sqrt(36g²/Υ⁴ + 24πg/(Υ²kβ)) - 6g/Υ²`, in a cancellation-free form.
fn vorticity_expression(g: f64, k: f64, ups: f64, beta: f64) -> f64 {
    let c = 6.0 * g / (ups * ups);
    let e = 24.0 * PI * g / (ups * ups * k * beta);
    e / ((c * c + e).sqrt() + c)
}

/// Evaluate the amplitude bound for the given parameters (amplitude unset).
pub fn amplitude_bound(params: &PhysicalParams, kernel: &KernelConfig) -> Result<BoundReport> {
    params.require_downstream()?;
    let beta = beta_eval(0.5 * PI, &kernel.with_depth(params.depth()))?;
    let k = params.k;
    let depth_bound = 2.0 * PI / (k * beta);
    let universal_cap = 2.0 * PI * PI / ((PI - 2.0) * k);
    let vorticity_bound =
        (params.upsilon > 0.0).then(|| vorticity_expression(params.g, k, params.upsilon, beta));
    let bound = vorticity_bound.unwrap_or(depth_bound);
    let report = BoundReport {
        bound,
        amplitude: 0.0,
        margin: bound,
        beta_half_pi: beta,
        vorticity_bound,
        depth_bound,
        universal_cap,
    };
    if !report.chain_ok() {
        return Err(Error::Certification(format!(
            "bound chain out of order: {report:?}"
        )));
    }
    Ok(report)
}

/// Per-point replay of the proof of the amplitude bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProofReplay {
    pub f0: f64,
    pub f_pi: f64,
    /// Left side of the crest-trough difference relation.
    pub lhs: f64,
    /// Right side of the crest-trough difference relation.
    pub rhs: f64,
    /// `(f(π) - f(0)) - lhs`, non-negative when the averaged inequality holds.
    pub lebo_margin: f64,
    /// `rhs - lower bound`, non-negative by the kernel lemma.
    pub lower_margin: f64,
    /// `24π/β - (24 f(0) + 12(f(π)+f(0)) + A(f(π)-f(0))²)`.
    pub chain_margin: f64,
    /// `min_x ((2/3)(v(0)-v(π))|J v| - |K v|)` over the grid.
    pub kj_margin: f64,
    /// `|lhs - rhs|`, zero on solutions.
    pub relation_gap: f64,
}

impl ProofReplay {
    pub fn holds(&self, tol: f64) -> bool {
        self.lebo_margin >= -tol
            && self.lower_margin >= -tol
            && self.chain_margin >= -tol
            && self.kj_margin >= -tol
    }
}

/// Slack allowed in replayed inequalities for rounding.
pub const REPLAY_TOL: f64 = 1e-9;

/// Replay the bound's proof chain at one point; `beta` is the kernel at `π/2`.
pub fn proof_replay(p: &SolutionPoint, grid: &GridSpec, beta: f64) -> Result<ProofReplay> {
    let ff = to_f_form(p, grid)?;
    let f = &ff.f;
    let aa = ff.a_upper;
    let jf = grid.op_j(f)?;
    let kf = grid.op_k(f)?;
    let cfp = grid.strip_hilbert(&f.derivative())?;
    let ffp = grid.exact_product(f, &f.derivative())?;
    let c_ffp = grid.strip_hilbert(&ffp)?;

    let at = |x: f64| {
        (
            f.eval(x),
            cfp.eval(x),
            c_ffp.eval(x),
            jf.eval(x),
            kf.eval(x),
        )
    };
    let (f0, cf0, cff0, j0, k0) = at(0.0);
    let (fp, cfpi, cffpi, jp, kp) = at(PI);
    let diff = fp - f0;

    let lhs = diff * (1.0 + ff.a * aa + ff.b_upper - 0.5 * aa * (fp + f0) + 0.5 * aa * (jp + j0));
    let rhs = (fp * cfpi - f0 * cf0) + (cffpi - cff0) - 0.5 * aa * (kp - k0)
        + 0.5 * aa * diff * (jp + j0);
    let lower = diff
        * (beta * f0 / PI + beta * (fp + f0) / (2.0 * PI) + aa * beta * diff * diff / (24.0 * PI));
    let chain = 24.0 * PI / beta - (24.0 * f0 + 12.0 * (fp + f0) + aa * diff * diff);

    let fine = grid.exact_for(3 * p.v.modes());
    let jv = fine.synthesize(&grid.op_j(&p.v)?)?;
    let kv = fine.synthesize(&grid.op_k(&p.v)?)?;
    let amp = p.amplitude();
    let kj_margin = jv
        .iter()
        .zip(&kv)
        .map(|(j, k)| 2.0 / 3.0 * amp * j.abs() - k.abs())
        .fold(f64::INFINITY, f64::min);

    Ok(ProofReplay {
        f0,
        f_pi: fp,
        lhs,
        rhs,
        lebo_margin: diff - lhs,
        lower_margin: rhs - lower,
        chain_margin: chain,
        kj_margin,
        relation_gap: (lhs - rhs).abs(),
    })
}

/// One audited branch point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub s: f64,
    pub bound: BoundReport,
    pub replay: ProofReplay,
    pub running_max_abs_m: f64,
    pub running_max_abs_q: f64,
    pub min_q2gv: f64,
}

/// Outcome of [`branch_audit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchAudit {
    pub rows: Vec<AuditRow>,
    /// `min(Q - 2gv)` fell between the first and the last point.
    pub stagnation_trend: bool,
}

impl BranchAudit {
    pub fn margins_positive(&self) -> bool {
        self.rows.iter().all(|r| r.bound.margin > 0.0)
    }

    pub fn replay_holds(&self) -> bool {
        self.rows.iter().all(|r| r.replay.holds(REPLAY_TOL))
    }

    pub fn all_ok(&self) -> bool {
        self.margins_positive() && self.replay_holds()
    }
}

/// Smallest value of `Q - 2gv` over the grid.
pub fn min_q2gv(p: &SolutionPoint, grid: &GridSpec) -> Result<f64> {
    let v = grid.synthesize(&p.v)?;
    Ok(v.iter()
        .map(|v| p.q - 2.0 * p.params.g * v)
        .fold(f64::INFINITY, f64::min))
}

/// Audit every point of a branch against the amplitude bound and replay the proof
/// chain; a non-positive margin is a certification failure.
pub fn branch_audit(branch: &Branch, kernel: &KernelConfig) -> Result<BranchAudit> {
    let skeleton = amplitude_bound(&branch.params, kernel)?;
    let grid = branch.grid()?;
    let mut rows = Vec::with_capacity(branch.points.len());
    let (mut mm, mut mq) = (0.0_f64, 0.0_f64);
    for bp in &branch.points {
        let p = &bp.point;
        mm = mm.max(p.m.abs());
        mq = mq.max(p.q.abs());
        rows.push(AuditRow {
            s: bp.s,
            bound: skeleton.with_amplitude(p.amplitude()),
            replay: proof_replay(p, &grid, skeleton.beta_half_pi)?,
            running_max_abs_m: mm,
            running_max_abs_q: mq,
            min_q2gv: min_q2gv(p, &grid)?,
        });
    }
    let stagnation_trend = match (rows.first(), rows.last()) {
        (Some(a), Some(b)) if rows.len() > 1 => b.min_q2gv < a.min_q2gv,
        _ => false,
    };
    let audit = BranchAudit {
        rows,
        stagnation_trend,
    };
    if let Some(bad) = audit.rows.iter().find(|r| r.bound.margin <= 0.0) {
        return Err(Error::Certification(format!(
            "amplitude {} exceeds bound {} at s = {}",
            bad.bound.amplitude, bad.bound.bound, bad.s
        )));
    }
    Ok(audit)
}

/// One row of a vorticity sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub upsilon: f64,
    pub bound: f64,
    pub max_amplitude: f64,
    pub points_traced: usize,
    pub final_min_q2gv: f64,
    pub halt: Option<HaltReason>,
    /// Trace or audit failure for this row.
    pub error: Option<String>,
}

impl SweepRow {
    pub fn ok(&self) -> bool {
        self.error.is_none() && self.points_traced > 0 && self.max_amplitude <= self.bound
    }
}

/// Outcome of [`upsilon_sweep`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Bound strictly decreasing over rows with positive vorticity.
    pub fn bound_decreasing(&self) -> bool {
        let pos: Vec<&SweepRow> = self.rows.iter().filter(|r| r.upsilon > 0.0).collect();
        pos.windows(2)
            .all(|w| w[0].upsilon >= w[1].upsilon || w[1].bound < w[0].bound)
    }

    pub fn amplitudes_below_bound(&self) -> bool {
        self.rows.iter().all(SweepRow::ok)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "upsilon",
            "bound",
            "max_amplitude",
            "points_traced",
            "final_minQ2gv",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.upsilon.to_string(),
                r.bound.to_string(),
                r.max_amplitude.to_string(),
                r.points_traced.to_string(),
                r.final_min_q2gv.to_string(),
            ])?;
        }
        w.flush()
    }
}

fn sweep_row(
    template: &PhysicalParams,
    upsilon: f64,
    config: &ContinuationConfig,
    kernel: &KernelConfig,
) -> SweepRow {
    let params = template.with_upsilon(upsilon);
    let bound = match amplitude_bound(&params, kernel) {
        Ok(b) => b.bound,
        Err(e) => {
            return SweepRow {
                upsilon,
                bound: f64::NAN,
                max_amplitude: f64::NAN,
                points_traced: 0,
                final_min_q2gv: f64::NAN,
                halt: None,
                error: Some(e.to_string()),
            }
        }
    };
    let traced = trace_branch(&params, config, kernel).and_then(|b| {
        let audit = branch_audit(&b, kernel)?;
        Ok((b, audit))
    });
    match traced {
        Ok((b, audit)) => SweepRow {
            upsilon,
            bound,
            max_amplitude: b
                .points
                .iter()
                .map(|p| p.diagnostics.amplitude)
                .fold(0.0, f64::max),
            points_traced: b.points.len(),
            final_min_q2gv: audit.rows.last().map_or(f64::NAN, |r| r.min_q2gv),
            halt: Some(b.halt),
            error: None,
        },
        Err(e) => SweepRow {
            upsilon,
            bound,
            max_amplitude: f64::NAN,
            points_traced: 0,
            final_min_q2gv: f64::NAN,
            halt: None,
            error: Some(e.to_string()),
        },
    }
}

/// Trace one branch per vorticity value, in parallel, and tabulate the observed
/// maximum amplitude against the bound. `workers = 0` uses the global pool.
pub fn upsilon_sweep(
    template: &PhysicalParams,
    upsilons: &[f64],
    config: &ContinuationConfig,
    kernel: &KernelConfig,
    workers: usize,
) -> Result<SweepTable> {
    if let Some(u) = upsilons.iter().find(|u| !(u.is_finite() && **u >= 0.0)) {
        return Err(Error::InvalidParams(format!(
            "sweep vorticities must be non-negative, got {u}"
        )));
    }
    let run = || -> Vec<SweepRow> {
        upsilons
            .par_iter()
            .map(|&u| sweep_row(template, u, config, kernel))
            .collect()
    };
    let rows = if workers == 0 {
        run()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidParams(e.to_string()))?
            .install(run)
    };
    Ok(SweepTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(ups: f64) -> PhysicalParams {
        PhysicalParams::new(9.81, 1.0, 1.0, ups).unwrap()
    }

    #[test]
    fn universal_cap_value() {
        let b = amplitude_bound(&params(0.0), &KernelConfig::new(1.0)).unwrap();
        assert!((b.universal_cap - 2.0 * PI * PI / (PI - 2.0)).abs() < 1e-13);
        assert!((b.universal_cap - 17.2906).abs() < 1e-3);
        assert_eq!(b.bound, b.depth_bound);
        assert!((b.depth_bound - 2.0 * PI / b.beta_half_pi).abs() < 1e-14);
        assert!(b.vorticity_bound.is_none());
    }

    #[test]
    fn vorticity_bound_ordering_and_decay() {
        let kc = KernelConfig::new(1.0);
        let mut prev = f64::INFINITY;
        for u in [0.5, 1.0, 2.0, 5.0, 10.0, 100.0] {
            let b = amplitude_bound(&params(u), &kc).unwrap();
            assert!(b.chain_ok());
            assert!(b.bound < prev);
            prev = b.bound;
            let asym = (24.0 * PI * 9.81 / (u * u * b.beta_half_pi)).sqrt();
            if u >= 100.0 {
                assert!((b.bound / asym - 1.0).abs() < 0.05);
            }
        }
        // the ratio approaches 1/2 only once (2π/3)Υ²/(gkβ) is large
        let ratio = |u: f64| {
            amplitude_bound(&params(2.0 * u), &kc).unwrap().bound
                / amplitude_bound(&params(u), &kc).unwrap().bound
        };
        let r5 = ratio(5.0);
        assert!(r5 > 0.6 && r5 < 0.7, "{r5}");
        assert!((ratio(50.0) - 0.5).abs() < 0.05 * 0.5);
        assert!(ratio(50.0) < ratio(20.0) && ratio(20.0) < r5);
    }

    #[test]
    fn cancellation_free_form_matches_direct() {
        let (g, k, u, b) = (9.81_f64, 1.0, 2.0_f64, 1.3);
        let direct =
            (36.0 * g * g / u.powi(4) + 24.0 * PI * g / (u * u * k * b)).sqrt() - 6.0 * g / (u * u);
        assert!((vorticity_expression(g, k, u, b) - direct).abs() < 1e-12);
    }

    #[test]
    fn negative_vorticity_rejected() {
        assert!(amplitude_bound(&params(-1.0), &KernelConfig::new(1.0)).is_err());
    }

    #[test]
    fn replay_on_trivial_point() {
        let p = SolutionPoint::trivial(params(1.0), -2.5, 16);
        let g = GridSpec::with_default_nodes(16, 1.0).unwrap();
        let r = proof_replay(&p, &g, 1.6).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert!(r.rhs.abs() < 1e-14);
        assert!(r.relation_gap < 1e-14);
    }
}
