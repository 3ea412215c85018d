//! Cyclic block coordinate descent on the dual, with one closed-form PSD
//! projection per block.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::assembly::AssembledProblem;
use crate::error::{IocError, Result};
use crate::linalg::{self, Mat, Vector};

/// Dual multipliers, each a vectorized symmetric PSD matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DualState {
    pub lambda_q: Vector,
    pub lambda_p: Vector,
    pub lambda_r: Vector,
    pub iteration: usize,
}

impl DualState {
    pub fn zeros(problem: &AssembledProblem) -> Self {
        let l = &problem.layout;
        Self {
            lambda_q: Vector::zeros(l.n * l.n),
            lambda_p: Vector::zeros(l.n * l.n),
            lambda_r: Vector::zeros(l.m * l.m),
            iteration: 0,
        }
    }

    /// `(λ_Q, λ_P, λ_R)` stacked.
    pub fn stacked(&self) -> Vector {
        let mut v = Vector::zeros(self.lambda_q.len() + self.lambda_p.len() + self.lambda_r.len());
        let (q, p) = (self.lambda_q.len(), self.lambda_p.len());
        v.rows_mut(0, q).copy_from(&self.lambda_q);
        v.rows_mut(q, p).copy_from(&self.lambda_p);
        v.rows_mut(q + p, self.lambda_r.len()).copy_from(&self.lambda_r);
        v
    }

    pub fn norm(&self) -> f64 {
        (self.lambda_q.norm_squared() + self.lambda_p.norm_squared() + self.lambda_r.norm_squared()).sqrt()
    }

    pub fn distance(&self, other: &DualState) -> f64 {
        ((&self.lambda_q - &other.lambda_q).norm_squared()
            + (&self.lambda_p - &other.lambda_p).norm_squared()
            + (&self.lambda_r - &other.lambda_r).norm_squared())
        .sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Stop once `‖λᵏ⁺¹ − λᵏ‖ ≤ tol · ‖λᵏ⁺¹‖`.
    pub tol: f64,
    pub max_iter: usize,
    pub alpha_floor: f64,
    /// Relative primal residual `‖Ωξ‖ / (‖Ω‖_F ‖ξ‖)` accepted by the periodic primal stop.
    pub primal_tol: f64,
    /// Cycles between primal checks; 0 disables the primal stop.
    pub primal_check_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 5000,
            alpha_floor: 1e-12,
            primal_tol: 1e-9,
            primal_check_every: 10,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 || !(self.alpha_floor > 0.0) || !(self.primal_tol > 0.0) {
            return Err(IocError::Argument("solver needs tol > 0, max_iter >= 1, alpha_floor > 0, primal_tol > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    /// The run ended at `λ ≈ 0`, so the recovered primal vector is zero.
    DegenerateZero,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIter => "max-iter",
            SolveStatus::DegenerateZero => "degenerate-zero",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub dual_obj: f64,
    pub step_norm: f64,
    pub elapsed_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub records: Vec<TraceRecord>,
    pub status: SolveStatus,
    /// Which test ended the run: `step`, `primal`, `max-iter`.
    pub stop_reason: String,
}

/// Empirical view of the `O(1/k)` dual gap bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateDiagnostic {
    /// `sup_k k · (J_k − J_final)`.
    pub sup_k_gap: f64,
    /// Least-squares slope of `log(J_k − J_final)` against `log k`.
    pub loglog_slope: Option<f64>,
    pub points: usize,
}

impl ConvergenceTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.records.last().map(|r| r.dual_obj)
    }

    /// Largest increase `J_{k+1} − J_k` over the run (0 for a monotone run).
    pub fn max_increase(&self) -> f64 {
        self.records
            .windows(2)
            .map(|w| w[1].dual_obj - w[0].dual_obj)
            .fold(0.0, f64::max)
    }

    pub fn is_monotone(&self, slack: f64) -> bool {
        self.max_increase() <= slack
    }

    pub fn rate_diagnostic(&self) -> RateDiagnostic {
        let Some(last) = self.final_objective() else {
            return RateDiagnostic { sup_k_gap: 0.0, loglog_slope: None, points: 0 };
        };
        let gaps: Vec<(f64, f64)> = self
            .records
            .iter()
            .map(|r| (r.iter as f64, r.dual_obj - last))
            .filter(|(_, g)| *g > 0.0)
            .collect();
        let sup_k_gap = gaps.iter().map(|(k, g)| k * g).fold(0.0, f64::max);
        let loglog_slope = if gaps.len() >= 2 {
            let pts: Vec<(f64, f64)> = gaps.iter().map(|(k, g)| (k.ln(), g.ln())).collect();
            let len = pts.len() as f64;
            let mx = pts.iter().map(|p| p.0).sum::<f64>() / len;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / len;
            let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
            let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            (sxx > 0.0).then(|| sxy / sxx)
        } else {
            None
        };
        RateDiagnostic { sup_k_gap, loglog_slope, points: gaps.len() }
    }

    /// CSV with header `iter,dual_obj,step_norm,elapsed_ms`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,dual_obj,step_norm,elapsed_ms\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{:.16e},{:.16e},{:.6}", r.iter, r.dual_obj, r.step_norm, r.elapsed_ms);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Proximal weights `(α, β, γ)`: the largest eigenvalues of `H_QQ`, `H_PP`,
/// `H_RR`, floored at `alpha_floor`.
pub fn step_coefficients(problem: &AssembledProblem, alpha_floor: f64) -> Result<(f64, f64, f64)> {
    let b = &problem.blocks;
    let floor = |h: &Mat| -> Result<f64> { Ok(linalg::max_eig_sym(h)?.max(alpha_floor)) };
    Ok((floor(&b.qq)?, floor(&b.pp)?, floor(&b.rr)?))
}

fn project_block(v: &Vector, k: usize) -> Result<Vector> {
    let m = linalg::unvectorize(v.as_slice(), k, k);
    Ok(linalg::vectorize(&linalg::psd_project(&m)?))
}

/// One Gauss–Seidel sweep `Q → P → R`.
pub fn bsum_cycle(state: &DualState, problem: &AssembledProblem, coeffs: (f64, f64, f64)) -> Result<DualState> {
    let (alpha, beta, gamma) = coeffs;
    let l = &problem.layout;
    let b = &problem.blocks;
    let s = problem.sign.factor();
    let w_p = problem.w_offset.rows(l.dual_p().start, l.n * l.n).into_owned();
    let w_r = problem.w_offset.rows(l.dual_r().start, l.m * l.m).into_owned();

    let grad_q = &b.qq * &state.lambda_q + &b.qp * &state.lambda_p + &b.qr * &state.lambda_r;
    let delta_q = &state.lambda_q - grad_q / (2.0 * alpha);
    let lambda_q = project_block(&delta_q, l.n)?;

    let grad_p = b.qp.tr_mul(&lambda_q) + &b.pp * &state.lambda_p + &b.pr * &state.lambda_r;
    let delta_p = &state.lambda_p - grad_p / (2.0 * beta) + &w_p * (s / beta);
    let lambda_p = project_block(&delta_p, l.n)?;

    let grad_r = b.qr.tr_mul(&lambda_q) + b.pr.tr_mul(&lambda_p) + &b.rr * &state.lambda_r;
    let delta_r = &state.lambda_r - grad_r / (2.0 * gamma) + &w_r * (s / gamma);
    let lambda_r = project_block(&delta_r, l.m)?;

    let next = DualState { lambda_q, lambda_p, lambda_r, iteration: state.iteration + 1 };
    if !next.lambda_q.iter().chain(next.lambda_p.iter()).chain(next.lambda_r.iter()).all(|v| v.is_finite()) {
        return Err(IocError::NumericalBreakdown(format!(
            "non-finite multiplier at cycle {}",
            next.iteration
        )));
    }
    Ok(next)
}

/// `¼λᵀHλ − λᵀW` (standard) or `¼λᵀHλ + λᵀW` (paper).
pub fn dual_objective(state: &DualState, problem: &AssembledProblem) -> f64 {
    let lam = state.stacked();
    0.25 * lam.dot(&(&problem.h_dual * &lam)) - problem.sign.factor() * lam.dot(&problem.w_offset)
}

/// `ξ = ±½ M Uᵀ λ`.
pub fn recover_primal(state: &DualState, problem: &AssembledProblem) -> Vector {
    &problem.primal_map * state.stacked() * (0.5 * problem.sign.factor())
}

/// `‖Ωξ‖ / (‖Ω‖_F ‖ξ‖)`, 0 for `ξ = 0`.
pub fn relative_primal_residual(problem: &AssembledProblem, xi: &Vector) -> f64 {
    let scale = problem.omega.norm() * xi.norm();
    if scale == 0.0 {
        0.0
    } else {
        (&problem.omega * xi).norm() / scale
    }
}

/// Smallest eigenvalue margins `(λ_min(Q̂), λ_min(P̂) − ε, λ_min(R̂) − ε)` of
/// the symmetrized blocks of `ξ`.
pub fn cone_margins(problem: &AssembledProblem, xi: &Vector) -> Result<(f64, f64, f64)> {
    let blocks = problem.layout.split(xi);
    let eps = problem.epsilon;
    Ok((
        linalg::min_eig_sym(&linalg::symmetrize(&blocks.q))?,
        linalg::min_eig_sym(&linalg::symmetrize(&blocks.p))? - eps,
        linalg::min_eig_sym(&linalg::symmetrize(&blocks.r))? - eps,
    ))
}

fn primal_certified(problem: &AssembledProblem, state: &DualState, config: &SolverConfig) -> Result<bool> {
    let xi = recover_primal(state, problem);
    if xi.norm() == 0.0 || relative_primal_residual(problem, &xi) > config.primal_tol {
        return Ok(false);
    }
    let (mq, mp, mr) = cone_margins(problem, &xi)?;
    let slack = config.primal_tol * xi.norm();
    Ok(mq >= -slack && mp >= -slack && mr >= -slack)
}

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub state: DualState,
    pub trace: ConvergenceTrace,
    pub coefficients: (f64, f64, f64),
}

pub fn solve(problem: &AssembledProblem, config: &SolverConfig) -> Result<SolveOutcome> {
    solve_from(problem, config, DualState::zeros(problem))
}

/// Runs cycles from `start` until the step test, the primal test or the
/// iteration budget stops it.
pub fn solve_from(problem: &AssembledProblem, config: &SolverConfig, start: DualState) -> Result<SolveOutcome> {
    config.validate()?;
    let coefficients = step_coefficients(problem, config.alpha_floor)?;
    let clock = Instant::now();
    let mut state = start;
    let mut records = Vec::new();
    let mut stop_reason = "max-iter";
    for k in 1..=config.max_iter {
        let next = bsum_cycle(&state, problem, coefficients)?;
        let step = next.distance(&state);
        state = next;
        records.push(TraceRecord {
            iter: k,
            dual_obj: dual_objective(&state, problem),
            step_norm: step,
            elapsed_ms: clock.elapsed().as_secs_f64() * 1e3,
        });
        if step <= config.tol * state.norm() {
            stop_reason = "step";
            break;
        }
        if config.primal_check_every > 0 && k % config.primal_check_every == 0 && primal_certified(problem, &state, config)? {
            stop_reason = "primal";
            break;
        }
    }
    let status = if state.norm() <= 1e-12 * problem.w_offset.norm() {
        SolveStatus::DegenerateZero
    } else if stop_reason == "max-iter" {
        SolveStatus::MaxIter
    } else {
        SolveStatus::Converged
    };
    Ok(SolveOutcome {
        state,
        trace: ConvergenceTrace { records, status, stop_reason: stop_reason.to_string() },
        coefficients,
    })
}
