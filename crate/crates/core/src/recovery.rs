//! Turning `ξ*` back into a model `(Â, B̂, Q̂, R̂, P̂)` and checking that it
//! reproduces the expert.

use serde::{Deserialize, Serialize};

use crate::assembly::{AssembledProblem, DecisionLayout};
use crate::bsum;
use crate::data::Trajectory;
use crate::error::{IocError, Result};
use crate::linalg::{self, Mat, Vector};
use crate::lqr;

#[derive(Clone, Debug, PartialEq)]
pub struct RecoveredModel {
    pub a_hat: Mat,
    pub b_hat: Mat,
    pub q_hat: Mat,
    pub r_hat: Mat,
    pub p_hat: Mat,
    pub k_hat: Mat,
}

impl RecoveredModel {
    pub fn closed_loop(&self) -> Mat {
        &self.a_hat - &self.b_hat * &self.k_hat
    }

    pub fn state_dim(&self) -> usize {
        self.a_hat.nrows()
    }

    /// The same model with `(Q̂, R̂, P̂)` scaled by `c`.
    pub fn scaled_weights(&self, c: f64) -> Result<Self> {
        let p_hat = &self.p_hat * c;
        let r_hat = &self.r_hat * c;
        let k_hat = linalg::solve(&r_hat, &(self.b_hat.transpose() * &p_hat))?;
        Ok(Self {
            a_hat: self.a_hat.clone(),
            b_hat: self.b_hat.clone(),
            q_hat: &self.q_hat * c,
            r_hat,
            p_hat,
            k_hat,
        })
    }
}

/// `Â = P̂⁻¹Zᵀ`, `B̂ = P̂⁻¹K*ᵀR̂`, `K̂ = R̂⁻¹B̂ᵀP̂` from the symmetrized blocks of `ξ`.
pub fn reconstruct(xi: &Vector, kstar: &Mat, layout: &DecisionLayout, epsilon: f64) -> Result<RecoveredModel> {
    if xi.len() != layout.dim() || kstar.shape() != (layout.m, layout.n) {
        return Err(IocError::Argument("ξ or K* does not match the layout".into()));
    }
    let blocks = layout.split(xi);
    let p_hat = linalg::symmetrize(&blocks.p);
    let r_hat = linalg::symmetrize(&blocks.r);
    let q_hat = linalg::symmetrize(&blocks.q);
    let p_min = linalg::min_eig_sym(&p_hat)?;
    if !(p_min >= 0.5 * epsilon) {
        return Err(IocError::RecoveryFailure(format!(
            "P̂ is near-singular (min eigenvalue {p_min:.3e}, need >= {:.3e})",
            0.5 * epsilon
        )));
    }
    let r_min = linalg::min_eig_sym(&r_hat)?;
    if !(r_min > 0.0) {
        return Err(IocError::RecoveryFailure(format!("R̂ is not invertible (min eigenvalue {r_min:.3e})")));
    }
    let a_hat = linalg::solve(&p_hat, &blocks.z.transpose())?;
    let b_hat = linalg::solve(&p_hat, &(kstar.transpose() * &r_hat))?;
    let k_hat = linalg::solve(&r_hat, &(b_hat.transpose() * &p_hat))?;
    Ok(RecoveredModel { a_hat, b_hat, q_hat, r_hat, p_hat, k_hat })
}

/// `‖ÂᵀP̂ + P̂Â − P̂B̂R̂⁻¹B̂ᵀP̂ + Q̂‖_F`; infinite if `R̂` is singular.
pub fn are_residual(model: &RecoveredModel) -> f64 {
    let Ok(rinv_bt) = linalg::solve(&model.r_hat, &model.b_hat.transpose()) else {
        return f64::INFINITY;
    };
    let p = &model.p_hat;
    let res = model.a_hat.transpose() * p + p * &model.a_hat - p * &model.b_hat * rinv_bt * p + &model.q_hat;
    res.norm()
}

/// `[x0, A_K x0, …, A_Kⁿ x0]`.
pub fn closed_loop_powers(closed_loop: &Mat, x0: &Vector, n: usize) -> Vec<Vector> {
    let mut out = vec![x0.clone()];
    for _ in 0..n {
        let next = closed_loop * out.last().expect("non-empty");
        out.push(next);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeMatch {
    /// Relative residual of `(Â_K)ⁱx(0)` against the reference, `i = 1..=n`.
    pub residuals: Vec<f64>,
    pub max_residual: f64,
}

impl DerivativeMatch {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_residual <= tol
    }
}

/// Compares `(Â_K)ⁱ x(0)` with the reference powers `reference[i]`.
pub fn derivative_match_check(model: &RecoveredModel, reference: &[Vector]) -> DerivativeMatch {
    let n = reference.len().saturating_sub(1);
    let ours = closed_loop_powers(&model.closed_loop(), &reference[0], n);
    let residuals: Vec<f64> = (1..=n)
        .map(|i| {
            let diff = (&ours[i] - &reference[i]).norm();
            let scale = reference[i].norm();
            if scale > 0.0 {
                diff / scale
            } else {
                diff
            }
        })
        .collect();
    let max_residual = residuals.iter().copied().fold(0.0, f64::max);
    DerivativeMatch { residuals, max_residual }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFit {
    /// Mean over samples and coordinates; infinite for an unstable loop.
    pub mse: f64,
    pub stable: bool,
    #[serde(skip)]
    pub reconstructed: Option<Trajectory>,
}

/// Replays the recovered closed loop from the expert's initial state on the
/// expert's grid.
pub fn trajectory_mse(model: &RecoveredModel, expert: &Trajectory) -> Result<TrajectoryFit> {
    let ak = model.closed_loop();
    if lqr::spectral_abscissa(&ak) >= 0.0 {
        return Ok(TrajectoryFit { mse: f64::INFINITY, stable: false, reconstructed: None });
    }
    let x0 = expert.initial_state();
    let n = expert.state_dim();
    let len = expert.len();
    let mut states = Mat::zeros(n, len);
    for (j, t) in expert.times().iter().enumerate() {
        states.set_column(j, &(linalg::expm(&(&ak * *t))? * &x0));
    }
    let mse = (&states - expert.states()).norm_squared() / (n * len) as f64;
    let inputs = -&model.k_hat * &states;
    let replay = Trajectory::new(expert.times().to_vec(), states, inputs)?;
    Ok(TrajectoryFit { mse, stable: true, reconstructed: Some(replay) })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// On `‖Ωξ‖ / (‖Ω‖_F ‖ξ‖)`.
    pub omega_residual: f64,
    /// Allowed negative cone margin.
    pub cone_slack: f64,
    pub gain_error: f64,
    pub derivative_match: f64,
    pub trajectory_mse: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            omega_residual: 1e-5,
            cone_slack: 1e-8,
            gain_error: 1e-3,
            derivative_match: 1e-4,
            trajectory_mse: 1e-4,
        }
    }
}

/// All verification metrics of one recovered model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub omega_residual: f64,
    pub omega_residual_abs: f64,
    pub min_eig_q: f64,
    pub min_eig_p: f64,
    pub min_eig_r: f64,
    pub are_residual: f64,
    /// `‖K̂ − K*‖_F` against the identified gain.
    pub gain_error: f64,
    /// `‖K̂ − K‖_F` against the true gain, when known.
    pub gain_error_true: Option<f64>,
    pub derivative_match: DerivativeMatch,
    pub trajectory_mse: f64,
    pub stable: bool,
    pub primal_ok: bool,
    pub cone_ok: bool,
    pub passed: bool,
}

pub struct CertificateInputs<'a> {
    pub problem: &'a AssembledProblem,
    pub xi: &'a Vector,
    pub model: &'a RecoveredModel,
    pub kstar: &'a Mat,
    pub true_gain: Option<&'a Mat>,
    pub reference_powers: &'a [Vector],
    pub fit: &'a TrajectoryFit,
}

pub fn certificate(inp: &CertificateInputs<'_>, thr: &Thresholds) -> Result<Certificate> {
    let omega_residual = bsum::relative_primal_residual(inp.problem, inp.xi);
    let omega_residual_abs = (&inp.problem.omega * inp.xi).norm();
    let (mq, mp, mr) = bsum::cone_margins(inp.problem, inp.xi)?;
    let eps = inp.problem.epsilon;
    let derivative_match = derivative_match_check(inp.model, inp.reference_powers);
    let gain_error = (&inp.model.k_hat - inp.kstar).norm();
    let primal_ok = omega_residual <= thr.omega_residual && inp.xi.norm() > 0.0;
    let cone_ok = mq >= -thr.cone_slack && mp >= -thr.cone_slack && mr >= -thr.cone_slack;
    let passed = primal_ok
        && cone_ok
        && gain_error <= thr.gain_error
        && derivative_match.passed(thr.derivative_match)
        && inp.fit.stable
        && inp.fit.mse <= thr.trajectory_mse;
    Ok(Certificate {
        omega_residual,
        omega_residual_abs,
        min_eig_q: mq,
        min_eig_p: mp + eps,
        min_eig_r: mr + eps,
        are_residual: are_residual(inp.model),
        gain_error,
        gain_error_true: inp.true_gain.map(|k| (&inp.model.k_hat - k).norm()),
        derivative_match,
        trajectory_mse: inp.fit.mse,
        stable: inp.fit.stable,
        primal_ok,
        cone_ok,
        passed,
    })
}

/// Row-major JSON form of a recovered model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelJson {
    pub a_hat: Vec<Vec<f64>>,
    pub b_hat: Vec<Vec<f64>>,
    pub q_hat: Vec<Vec<f64>>,
    pub r_hat: Vec<Vec<f64>>,
    pub p_hat: Vec<Vec<f64>>,
    pub k_hat: Vec<Vec<f64>>,
}

impl From<&RecoveredModel> for ModelJson {
    fn from(m: &RecoveredModel) -> Self {
        Self {
            a_hat: linalg::to_rows(&m.a_hat),
            b_hat: linalg::to_rows(&m.b_hat),
            q_hat: linalg::to_rows(&m.q_hat),
            r_hat: linalg::to_rows(&m.r_hat),
            p_hat: linalg::to_rows(&m.p_hat),
            k_hat: linalg::to_rows(&m.k_hat),
        }
    }
}

impl TryFrom<&ModelJson> for RecoveredModel {
    type Error = IocError;

    fn try_from(j: &ModelJson) -> Result<Self> {
        Ok(Self {
            a_hat: linalg::from_rows(&j.a_hat)?,
            b_hat: linalg::from_rows(&j.b_hat)?,
            q_hat: linalg::from_rows(&j.q_hat)?,
            r_hat: linalg::from_rows(&j.r_hat)?,
            p_hat: linalg::from_rows(&j.p_hat)?,
            k_hat: linalg::from_rows(&j.k_hat)?,
        })
    }
}
