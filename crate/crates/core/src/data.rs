//! From a sampled expert trajectory to the solver's inputs: the identified
//! feedback gain, derivative samples, and the stacked data matrices
//! `Λ̄₁ = [Λ₀ … Λₙ₋₁]`, `Λ̄₂ = [Λ₁ … Λₙ]`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{IocError, Result};
use crate::linalg::{self, Mat, Vector};

/// Relative singular-value threshold used for every excitation (rank) check.
pub const EXCITATION_RTOL: f64 = 1e-10;

/// Default number of sample instants per derivative order.
pub const DEFAULT_SAMPLES: usize = 5;

/// Default accuracy order of the finite-difference stencils.
pub const DEFAULT_FD_ORDER: usize = 12;

/// State/input samples on a uniform time grid. Column `j` of `states` and
/// `inputs` belongs to `times[j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Mat,
    inputs: Mat,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Mat, inputs: Mat) -> Result<Self> {
        let len = times.len();
        if len == 0 {
            return Err(IocError::Argument("trajectory has no samples".into()));
        }
        if states.ncols() != len || inputs.ncols() != len {
            return Err(IocError::Argument(format!(
                "trajectory column counts (states {}, inputs {}) differ from {} sample times",
                states.ncols(),
                inputs.ncols(),
                len
            )));
        }
        if states.nrows() == 0 || inputs.nrows() == 0 {
            return Err(IocError::Argument("trajectory needs n >= 1 and m >= 1".into()));
        }
        if len > 1 {
            let dt = times[1] - times[0];
            if !(dt > 0.0) {
                return Err(IocError::Argument("sample times must be strictly increasing".into()));
            }
            let scale = times.iter().fold(dt, |acc, t| acc.max(t.abs()));
            for w in times.windows(2) {
                let step = w[1] - w[0];
                if !(step > 0.0) || (step - dt).abs() > 1e-12 * scale {
                    return Err(IocError::Argument("sample times are not a uniform grid".into()));
                }
            }
        }
        Ok(Self { times, states, inputs })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &Mat {
        &self.states
    }

    pub fn inputs(&self) -> &Mat {
        &self.inputs
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.states.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.nrows()
    }

    /// Sampling step; 0 for a single-sample trajectory.
    pub fn dt(&self) -> f64 {
        if self.times.len() > 1 {
            self.times[1] - self.times[0]
        } else {
            0.0
        }
    }

    pub fn initial_state(&self) -> Vector {
        self.states.column(0).into_owned()
    }

    /// CSV with header `t,x1..xn,u1..um`, 17 significant digits per value.
    pub fn to_csv(&self) -> String {
        let n = self.state_dim();
        let m = self.input_dim();
        let mut out = String::from("t");
        for i in 1..=n {
            let _ = write!(out, ",x{i}");
        }
        for i in 1..=m {
            let _ = write!(out, ",u{i}");
        }
        out.push('\n');
        for (j, t) in self.times.iter().enumerate() {
            let _ = write!(out, "{t:.16e}");
            for v in self.states.column(j).iter().chain(self.inputs.column(j).iter()) {
                let _ = write!(out, ",{v:.16e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| IocError::Format("empty trajectory CSV".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.first() != Some(&"t") {
            return Err(IocError::Format("trajectory CSV must start with column `t`".into()));
        }
        let n = cols.iter().filter(|c| c.starts_with('x')).count();
        let m = cols.iter().filter(|c| c.starts_with('u')).count();
        let expected: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=n).map(|i| format!("x{i}")))
            .chain((1..=m).map(|i| format!("u{i}")))
            .collect();
        if cols != expected {
            return Err(IocError::Format(format!("unexpected trajectory header `{header}`")));
        }
        let mut times = Vec::new();
        let mut data: Vec<f64> = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let vals = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| IocError::Format(format!("row {}: {e}", lineno + 2)))?;
            if vals.len() != 1 + n + m {
                return Err(IocError::Format(format!(
                    "row {}: expected {} fields, got {}",
                    lineno + 2,
                    1 + n + m,
                    vals.len()
                )));
            }
            times.push(vals[0]);
            data.extend_from_slice(&vals[1..]);
        }
        let len = times.len();
        let width = n + m;
        let states = Mat::from_fn(n, len, |i, j| data[j * width + i]);
        let inputs = Mat::from_fn(m, len, |i, j| data[j * width + n + i]);
        Trajectory::new(times, states, inputs)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

/// Least-squares feedback gain fitted to `u = −K x`.
#[derive(Clone, Debug)]
pub struct GainEstimate {
    pub gain: Mat,
    /// `‖U + K X‖_F` over all samples.
    pub residual: f64,
}

pub fn identify_gain(traj: &Trajectory) -> Result<GainEstimate> {
    let x = traj.states();
    let u = traj.inputs();
    let n = x.nrows();
    let gram = x * x.transpose();
    let r = linalg::rank(&gram, EXCITATION_RTOL)?;
    if r < n {
        return Err(IocError::InsufficientExcitation(format!(
            "state samples span rank {r} < n = {n}"
        )));
    }
    let gain = -u * linalg::pinv(x, linalg::PINV_RTOL)?;
    let residual = (u + &gain * x).norm();
    Ok(GainEstimate { gain, residual })
}

/// How derivative samples are produced.
#[derive(Clone, Debug, PartialEq)]
pub enum DerivativeMethod {
    /// Finite-difference stencils of the given (even) accuracy order: central
    /// in the interior, one-sided forward at the first sample.
    FiniteDifference { accuracy: usize },
    /// `(A_K)^i x(t_j)` from a known closed-loop matrix. Test oracle only.
    ClosedForm { closed_loop: Mat },
}

impl Default for DerivativeMethod {
    fn default() -> Self {
        DerivativeMethod::FiniteDifference { accuracy: DEFAULT_FD_ORDER }
    }
}

/// Derivative samples of orders `0..=max_order`; `values[i]` is `n × len`
/// with NaN where order `i` is not available.
#[derive(Clone, Debug)]
pub struct DerivativeSamples {
    pub values: Vec<Mat>,
    pub valid: Vec<Vec<bool>>,
}

impl DerivativeSamples {
    pub fn max_order(&self) -> usize {
        self.values.len() - 1
    }

    /// Grid indices at which every order `0..=order` is available.
    pub fn common_indices(&self, order: usize) -> Vec<usize> {
        let len = self.valid[0].len();
        (0..len)
            .filter(|&j| self.valid[..=order].iter().all(|v| v[j]))
            .collect()
    }
}

/// Finite-difference weights (Fornberg) for derivatives `0..=max_order` at
/// `z` using `nodes`. Returns `w[k][j]`, the weight of node `j` for order `k`.
pub fn fd_weights(z: f64, nodes: &[f64], max_order: usize) -> Vec<Vec<f64>> {
    let np = nodes.len();
    let mut c = vec![vec![0.0; np]; max_order + 1];
    if np == 0 {
        return c;
    }
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - z;
    c[0][0] = 1.0;
    for i in 1..np {
        let mn = i.min(max_order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - z;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Half-width of the central stencil for derivative `order` at `accuracy`.
pub fn central_half_width(order: usize, accuracy: usize) -> usize {
    (order + 1) / 2 - 1 + accuracy / 2
}

/// Shortest trajectory that carries finite-difference estimates of every
/// order up to `max_order`.
pub fn required_samples(max_order: usize, accuracy: usize) -> usize {
    if max_order == 0 {
        return 1;
    }
    (2 * central_half_width(max_order, accuracy) + 1).max(max_order + accuracy)
}

pub fn estimate_derivatives(
    traj: &Trajectory,
    max_order: usize,
    method: &DerivativeMethod,
) -> Result<DerivativeSamples> {
    let n = traj.state_dim();
    let len = traj.len();
    let x = traj.states();
    let mut values = vec![x.clone()];
    let mut valid = vec![vec![true; len]];
    match method {
        DerivativeMethod::ClosedForm { closed_loop } => {
            if closed_loop.nrows() != n || closed_loop.ncols() != n {
                return Err(IocError::Argument("closed-loop matrix has wrong shape".into()));
            }
            for _ in 1..=max_order {
                let next = closed_loop * values.last().expect("order 0 present");
                values.push(next);
                valid.push(vec![true; len]);
            }
        }
        DerivativeMethod::FiniteDifference { accuracy } => {
            if *accuracy < 2 || accuracy % 2 != 0 {
                return Err(IocError::Argument(format!(
                    "finite-difference accuracy must be an even number >= 2, got {accuracy}"
                )));
            }
            if max_order == 0 {
                return Ok(DerivativeSamples { values, valid });
            }
            let need = required_samples(max_order, *accuracy);
            if len < need {
                return Err(IocError::Argument(format!(
                    "trajectory of {len} samples is too short for order-{max_order} derivatives \
                     at accuracy {accuracy} (needs {need})"
                )));
            }
            let dt = traj.dt();
            for order in 1..=max_order {
                let h = central_half_width(order, *accuracy);
                let nodes: Vec<f64> = (0..=2 * h).map(|k| (k as f64 - h as f64) * dt).collect();
                let central = &fd_weights(0.0, &nodes, order)[order];
                let fwd_nodes: Vec<f64> = (0..order + accuracy).map(|k| k as f64 * dt).collect();
                let forward = &fd_weights(0.0, &fwd_nodes, order)[order];

                let mut d = Mat::from_element(n, len, f64::NAN);
                let mut ok = vec![false; len];
                for j in h..len - h {
                    let mut col = Vector::zeros(n);
                    for (k, w) in central.iter().enumerate() {
                        col.axpy(*w, &x.column(j + k - h), 1.0);
                    }
                    d.set_column(j, &col);
                    ok[j] = true;
                }
                let mut col0 = Vector::zeros(n);
                for (k, w) in forward.iter().enumerate() {
                    col0.axpy(*w, &x.column(k), 1.0);
                }
                d.set_column(0, &col0);
                ok[0] = true;
                values.push(d);
                valid.push(ok);
            }
        }
    }
    Ok(DerivativeSamples { values, valid })
}

/// Stacked data matrices for the trajectory-consistency constraint
/// `A_K Λ̄₁ = Λ̄₂`.
#[derive(Clone, Debug)]
pub struct DataMatrices {
    /// `Λ₀ … Λₙ`, each `n × N`.
    pub blocks: Vec<Mat>,
    pub lambda_bar_1: Mat,
    pub lambda_bar_2: Mat,
    /// Grid indices of the sample columns; the first one is always 0.
    pub sample_indices: Vec<usize>,
    /// Number of columns asked for before de-duplication.
    pub requested_samples: usize,
    /// `‖Λ̄₂ − Â Λ̄₁‖_F / ‖Λ̄₂‖_F` with `Â = Λ̄₂ Λ̄₁⁺`; a data quality gate.
    pub consistency_residual: f64,
}

impl DataMatrices {
    pub fn samples(&self) -> usize {
        self.sample_indices.len()
    }

    pub fn state_dim(&self) -> usize {
        self.lambda_bar_1.nrows()
    }

    /// Least-squares closed-loop matrix `Λ̄₂ Λ̄₁⁺` (diagnostic only).
    pub fn least_squares_closed_loop(&self) -> Result<Mat> {
        Ok(&self.lambda_bar_2 * linalg::pinv(&self.lambda_bar_1, linalg::PINV_RTOL)?)
    }
}

/// Picks `samples` columns (t = 0 first, the rest spread uniformly over the
/// indices where all orders `0..=n` exist) and stacks the data matrices.
pub fn build_data_matrices(derivs: &DerivativeSamples, n: usize, samples: usize) -> Result<DataMatrices> {
    if samples == 0 {
        return Err(IocError::Argument("at least one sample column is required".into()));
    }
    if derivs.max_order() < n {
        return Err(IocError::Argument(format!(
            "derivatives up to order {n} are required, got {}",
            derivs.max_order()
        )));
    }
    let common = derivs.common_indices(n);
    if common.first() != Some(&0) {
        return Err(IocError::Argument(
            "the initial sample has no derivative estimates of the required orders".into(),
        ));
    }
    let pool: Vec<usize> = common.into_iter().filter(|&j| j > 0).collect();
    let extra = samples - 1;
    let mut indices = vec![0];
    if extra > 0 {
        if pool.is_empty() {
            return Err(IocError::Argument(
                "no interior sample carries all required derivative orders".into(),
            ));
        }
        let last = (pool.len() - 1) as f64;
        for k in 0..extra {
            let pos = if extra == 1 { 0.0 } else { k as f64 * last / (extra - 1) as f64 };
            indices.push(pool[pos.round() as usize]);
        }
    }
    build_data_matrices_at(derivs, n, &indices)
}

/// Stacks the data matrices at explicit grid indices. Duplicates are dropped
/// and index 0 is moved (or added) to the front.
pub fn build_data_matrices_at(derivs: &DerivativeSamples, n: usize, indices: &[usize]) -> Result<DataMatrices> {
    if derivs.max_order() < n {
        return Err(IocError::Argument(format!(
            "derivatives up to order {n} are required, got {}",
            derivs.max_order()
        )));
    }
    let requested = indices.len();
    let mut chosen = vec![0usize];
    for &j in indices {
        if !chosen.contains(&j) {
            chosen.push(j);
        }
    }
    let len = derivs.valid[0].len();
    for &j in &chosen {
        if j >= len {
            return Err(IocError::Argument(format!("sample index {j} out of range")));
        }
        if !derivs.valid[..=n].iter().all(|v| v[j]) {
            return Err(IocError::Argument(format!(
                "sample index {j} lacks derivative estimates up to order {n}"
            )));
        }
    }
    let blocks: Vec<Mat> = derivs.values[..=n].iter().map(|d| d.select_columns(&chosen)).collect();
    let rows = derivs.values[0].nrows();
    let width = chosen.len();
    let mut bar1 = Mat::zeros(rows, n * width);
    let mut bar2 = Mat::zeros(rows, n * width);
    for i in 0..n {
        bar1.view_mut((0, i * width), (rows, width)).copy_from(&blocks[i]);
        bar2.view_mut((0, i * width), (rows, width)).copy_from(&blocks[i + 1]);
    }
    let fit = &bar2 * linalg::pinv(&bar1, linalg::PINV_RTOL)?;
    let denom = bar2.norm();
    let consistency_residual = if denom > 0.0 { (&bar2 - fit * &bar1).norm() / denom } else { 0.0 };
    Ok(DataMatrices {
        blocks,
        lambda_bar_1: bar1,
        lambda_bar_2: bar2,
        sample_indices: chosen,
        requested_samples: requested,
        consistency_residual,
    })
}

/// Closed-loop matrix from `l ≥ n` trajectories observed at a common grid
/// index: `Â_K = Ẋ X⁺` with `X = [x₁(t) … x_l(t)]`.
pub fn multi_traj_closed_loop(trajs: &[Trajectory], method: &DerivativeMethod, index: usize) -> Result<Mat> {
    let first = trajs
        .first()
        .ok_or_else(|| IocError::Argument("no trajectories given".into()))?;
    let n = first.state_dim();
    if trajs.len() < n {
        return Err(IocError::InsufficientExcitation(format!(
            "{} trajectories cannot excite an {n}-dimensional state",
            trajs.len()
        )));
    }
    let l = trajs.len();
    let mut x = Mat::zeros(n, l);
    let mut xdot = Mat::zeros(n, l);
    for (k, traj) in trajs.iter().enumerate() {
        if traj.state_dim() != n {
            return Err(IocError::Argument("trajectories have different state dimensions".into()));
        }
        let d = estimate_derivatives(traj, 1, method)?;
        if index >= traj.len() || !d.valid[1][index] {
            return Err(IocError::Argument(format!(
                "no first-derivative estimate at grid index {index}"
            )));
        }
        x.set_column(k, &d.values[0].column(index));
        xdot.set_column(k, &d.values[1].column(index));
    }
    let r = linalg::rank(&x, EXCITATION_RTOL)?;
    if r < n {
        return Err(IocError::InsufficientExcitation(format!(
            "stacked states have rank {r} < n = {n}"
        )));
    }
    Ok(xdot * linalg::pinv(&x, linalg::PINV_RTOL)?)
}

/// Serializable choice of derivative source, used by run configurations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeMode {
    #[default]
    FiniteDifference,
    ClosedFormOracle,
}
