//! Forward LQR: Riccati solve, closed-loop simulation, random benchmark systems.

use std::path::Path;

use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Trajectory;
use crate::error::{IocError, Result};
use crate::linalg::{self, Mat, Vector};

/// Relative singular-value threshold for the Hautus rank test.
pub const HAUTUS_RTOL: f64 = 1e-10;

/// Resample budget of [`random_system`].
pub const GENERATION_BUDGET: usize = 100;

const SYMMETRY_RTOL: f64 = 1e-10;
const SIGN_MAX_ITER: usize = 100;
const NEWTON_SWEEPS: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct LtiSystem {
    pub a: Mat,
    pub b: Mat,
}

impl LtiSystem {
    pub fn new(a: Mat, b: Mat) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || b.ncols() == 0 {
            return Err(IocError::Argument("system needs n >= 1 and m >= 1".into()));
        }
        if a.ncols() != n || b.nrows() != n {
            return Err(IocError::Argument(format!(
                "A is {}x{}, B is {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        if !linalg::is_finite(&a) || !linalg::is_finite(&b) {
            return Err(IocError::Argument("system matrices contain non-finite entries".into()));
        }
        Ok(Self { a, b })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostWeights {
    pub q: Mat,
    pub r: Mat,
}

impl CostWeights {
    /// Checks shapes and symmetry only; definiteness is checked by [`solve_care`].
    pub fn new(q: Mat, r: Mat) -> Result<Self> {
        if !q.is_square() || !r.is_square() || q.nrows() == 0 || r.nrows() == 0 {
            return Err(IocError::Argument("Q and R must be non-empty square matrices".into()));
        }
        for (name, w) in [("Q", &q), ("R", &r)] {
            if !linalg::is_finite(w) {
                return Err(IocError::Argument(format!("{name} contains non-finite entries")));
            }
            if (w - w.transpose()).norm() > SYMMETRY_RTOL * w.norm().max(1.0) {
                return Err(IocError::Argument(format!("{name} is not symmetric")));
            }
        }
        Ok(Self { q, r })
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { q: &self.q * c, r: &self.r * c }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LqrSolution {
    pub p: Mat,
    pub k: Mat,
}

/// `‖AᵀP + PA − PBR⁻¹BᵀP + Q‖_F`.
pub fn care_residual(sys: &LtiSystem, cost: &CostWeights, p: &Mat) -> Result<f64> {
    let rinv_bt = linalg::solve(&cost.r, &sys.b.transpose())?;
    let res = sys.a.transpose() * p + p * &sys.a - p * &sys.b * rinv_bt * p + &cost.q;
    Ok(res.norm())
}

/// Solves `AᵀX + XA + C = 0` through its Kronecker form.
pub fn solve_lyapunov(a: &Mat, c: &Mat) -> Result<Mat> {
    let n = a.nrows();
    let eye = Mat::identity(n, n);
    let at = a.transpose();
    let op = linalg::kron(&eye, &at) + linalg::kron(&at, &eye);
    let rhs = -linalg::vectorize(c);
    let x = linalg::solve(&op, &Mat::from_column_slice(n * n, 1, rhs.as_slice()))?;
    Ok(linalg::unvectorize(x.as_slice(), n, n))
}

pub fn eigenvalues(m: &Mat) -> Vec<Complex<f64>> {
    m.clone().complex_eigenvalues().iter().copied().collect()
}

pub fn spectral_abscissa(m: &Mat) -> f64 {
    eigenvalues(m).iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Hautus test on every eigenvalue with non-negative real part.
pub fn is_stabilizable(sys: &LtiSystem) -> bool {
    let n = sys.state_dim();
    let m = sys.input_dim();
    for mu in eigenvalues(&sys.a) {
        if mu.re < 0.0 {
            continue;
        }
        let pencil = nalgebra::DMatrix::<Complex<f64>>::from_fn(n, n + m, |i, j| {
            if j < n {
                let diag = if i == j { mu } else { Complex::new(0.0, 0.0) };
                Complex::new(sys.a[(i, j)], 0.0) - diag
            } else {
                Complex::new(sys.b[(i, j - n)], 0.0)
            }
        });
        let sv = pencil.singular_values();
        let top = sv.max();
        if !top.is_finite() {
            return false;
        }
        let rank = sv.iter().filter(|s| **s > HAUTUS_RTOL * top).count();
        if rank < n {
            return false;
        }
    }
    true
}

/// Matrix sign function by scaled Newton iteration.
fn matrix_sign(h: &Mat) -> Result<Mat> {
    let dim = h.nrows();
    let mut z = h.clone();
    let mut scale = true;
    for _ in 0..SIGN_MAX_ITER {
        let zinv = linalg::inverse(&z)
            .map_err(|_| IocError::NumericalBreakdown("Hamiltonian has eigenvalues on the imaginary axis".into()))?;
        let c = if scale {
            let det = z.determinant().abs();
            if det > 0.0 && det.is_finite() {
                det.powf(-1.0 / dim as f64)
            } else {
                1.0
            }
        } else {
            1.0
        };
        let next = (&z * c + zinv / c) * 0.5;
        if !linalg::is_finite(&next) {
            return Err(IocError::NumericalBreakdown("sign iteration diverged".into()));
        }
        let change = (&next - &z).norm();
        z = next;
        if change <= 1e-2 * z.norm() {
            scale = false;
        }
        if change <= 1e-13 * z.norm() {
            return Ok(z);
        }
    }
    Err(IocError::NumericalBreakdown("sign iteration did not converge".into()))
}

/// Stabilizing solution of the continuous-time ARE and its optimal gain.
pub fn solve_care(sys: &LtiSystem, cost: &CostWeights) -> Result<LqrSolution> {
    let n = sys.state_dim();
    if cost.q.nrows() != n || cost.r.nrows() != sys.input_dim() {
        return Err(IocError::Argument("cost weights do not match the system dimensions".into()));
    }
    if linalg::min_eig_sym(&cost.r)? <= 0.0 {
        return Err(IocError::InfeasibleModel("R is not positive definite".into()));
    }
    if linalg::min_eig_sym(&cost.q)? < -1e-10 {
        return Err(IocError::InfeasibleModel("Q is not positive semidefinite".into()));
    }
    if !is_stabilizable(sys) {
        return Err(IocError::InfeasibleModel("(A, B) is not stabilizable".into()));
    }

    let rinv_bt = linalg::solve(&cost.r, &sys.b.transpose())?;
    let s = &sys.b * &rinv_bt;
    let mut ham = Mat::zeros(2 * n, 2 * n);
    ham.view_mut((0, 0), (n, n)).copy_from(&sys.a);
    ham.view_mut((0, n), (n, n)).copy_from(&(-&s));
    ham.view_mut((n, 0), (n, n)).copy_from(&(-&cost.q));
    ham.view_mut((n, n), (n, n)).copy_from(&(-sys.a.transpose()));

    let sign = matrix_sign(&ham)?;
    let projector = (Mat::identity(2 * n, 2 * n) - sign) * 0.5;
    let svd = projector.svd(true, false);
    let u = svd.u.ok_or_else(|| IocError::NumericalBreakdown("SVD failed".into()))?;
    let mut order: Vec<usize> = (0..2 * n).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let basis = u.select_columns(&order[..n]);
    let gap = svd.singular_values[order[n]] / svd.singular_values[order[n - 1]];
    if !(gap < 1e-6) {
        return Err(IocError::NumericalBreakdown("stable invariant subspace is not n-dimensional".into()));
    }
    let x1 = basis.rows(0, n).into_owned();
    let x2 = basis.rows(n, n).into_owned();
    let x1t_inv = linalg::solve(&x1.transpose(), &x2.transpose())
        .map_err(|_| IocError::NumericalBreakdown("stable subspace basis has singular upper block".into()))?;
    let mut p = linalg::symmetrize(&x1t_inv.transpose());

    let mut residual = care_residual(sys, cost, &p)?;
    for _ in 0..NEWTON_SWEEPS {
        let k = &rinv_bt * &p;
        let ak = &sys.a - &sys.b * &k;
        let c = &cost.q + k.transpose() * &cost.r * &k;
        let Ok(next) = solve_lyapunov(&ak, &c) else { break };
        let next = linalg::symmetrize(&next);
        let next_res = care_residual(sys, cost, &next)?;
        if !(next_res < residual) {
            break;
        }
        p = next;
        residual = next_res;
    }

    let k = &rinv_bt * &p;
    if spectral_abscissa(&(&sys.a - &sys.b * &k)) >= 0.0 {
        return Err(IocError::NumericalBreakdown("Riccati solution is not stabilizing".into()));
    }
    if residual > 1e-8 * (1.0 + p.norm()) {
        return Err(IocError::NumericalBreakdown(format!("ARE residual {residual:.3e} too large")));
    }
    if linalg::min_eig_sym(&p)? <= 1e-12 * p.norm().max(1.0) {
        return Err(IocError::InfeasibleModel(
            "Riccati solution is only semidefinite; (A, Q) is not detectable".into(),
        ));
    }
    Ok(LqrSolution { p, k })
}

/// Number of grid points `t_j = j·dt` in `[0, T]`.
pub fn grid_len(horizon: f64, dt: f64) -> usize {
    (horizon / dt + 1e-9).floor() as usize + 1
}

/// Samples `x(t) = expm((A − BK)t) x0` and `u = −Kx` on a uniform grid.
pub fn simulate_closed_loop(sys: &LtiSystem, k: &Mat, x0: &Vector, horizon: f64, dt: f64) -> Result<Trajectory> {
    let n = sys.state_dim();
    let m = sys.input_dim();
    if k.nrows() != m || k.ncols() != n || x0.len() != n {
        return Err(IocError::Argument(format!(
            "gain is {}x{} and x0 has {} entries for n = {n}, m = {m}",
            k.nrows(),
            k.ncols(),
            x0.len()
        )));
    }
    if !(dt > 0.0) || !dt.is_finite() || !horizon.is_finite() || horizon < dt {
        return Err(IocError::Argument(format!("need 0 < dt <= T, got dt = {dt}, T = {horizon}")));
    }
    let ak = &sys.a - &sys.b * k;
    let len = grid_len(horizon, dt);
    let times: Vec<f64> = (0..len).map(|j| j as f64 * dt).collect();
    let mut states = Mat::zeros(n, len);
    for (j, t) in times.iter().enumerate() {
        states.set_column(j, &(linalg::expm(&(&ak * *t))? * x0));
    }
    let inputs = -k * &states;
    Trajectory::new(times, states, inputs)
}

/// A system, its cost weights and an initial state.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub system: LtiSystem,
    pub cost: CostWeights,
    pub x0: Vector,
}

#[derive(Serialize, Deserialize)]
#[allow(non_snake_case)]
struct InstanceJson {
    n: usize,
    m: usize,
    A: Vec<Vec<f64>>,
    B: Vec<Vec<f64>>,
    Q: Vec<Vec<f64>>,
    R: Vec<Vec<f64>>,
    x0: Vec<f64>,
}

impl Instance {
    pub fn new(system: LtiSystem, cost: CostWeights, x0: Vector) -> Result<Self> {
        let n = system.state_dim();
        if cost.q.nrows() != n || cost.r.nrows() != system.input_dim() || x0.len() != n {
            return Err(IocError::Argument("instance dimensions are inconsistent".into()));
        }
        Ok(Self { system, cost, x0 })
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = InstanceJson {
            n: self.system.state_dim(),
            m: self.system.input_dim(),
            A: linalg::to_rows(&self.system.a),
            B: linalg::to_rows(&self.system.b),
            Q: linalg::to_rows(&self.cost.q),
            R: linalg::to_rows(&self.cost.r),
            x0: self.x0.iter().copied().collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: InstanceJson = serde_json::from_str(text)?;
        let a = linalg::from_rows(&doc.A)?;
        let b = linalg::from_rows(&doc.B)?;
        let q = linalg::from_rows(&doc.Q)?;
        let r = linalg::from_rows(&doc.R)?;
        let shapes_ok = a.shape() == (doc.n, doc.n)
            && b.shape() == (doc.n, doc.m)
            && q.shape() == (doc.n, doc.n)
            && r.shape() == (doc.m, doc.m)
            && doc.x0.len() == doc.n;
        if !shapes_ok {
            return Err(IocError::Format("matrix shapes disagree with n and m".into()));
        }
        let system = LtiSystem::new(a, b).map_err(|e| IocError::Format(e.to_string()))?;
        let cost = CostWeights::new(q, r).map_err(|e| IocError::Format(e.to_string()))?;
        Instance::new(system, cost, Vector::from_vec(doc.x0))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// The three-state, two-input reference instance used throughout the docs.
pub fn nominal_instance() -> Instance {
    let a = Mat::from_row_slice(
        3,
        3,
        &[-0.650, -0.109, -0.066, -0.109, -0.995, -0.093, -0.066, -0.093, -0.733],
    );
    let b = Mat::from_row_slice(3, 2, &[0.650, 0.343, -0.215, -0.319, 0.778, -0.101]);
    let q = Mat::from_row_slice(
        3,
        3,
        &[1.393, 0.120, 0.146, 0.120, 3.559, -1.960, 0.146, -1.960, 1.702],
    );
    let r = Mat::from_row_slice(2, 2, &[3.761, -0.324, -0.324, 3.719]);
    let x0 = Vector::from_vec(vec![-0.746, 1.231, 0.548]);
    Instance {
        system: LtiSystem { a, b },
        cost: CostWeights { q, r },
        x0,
    }
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Mat {
    let dist = Normal::new(0.0, std).expect("positive standard deviation");
    let mut out = Mat::zeros(rows, cols);
    // filled row-major so the stream order matches the JSON layout
    for i in 0..rows {
        for j in 0..cols {
            out[(i, j)] = dist.sample(rng);
        }
    }
    out
}

/// Draws a stable symmetric `A`, dense `B`, ridge-regularized `Q`, `R ⪰ I`
/// and `x0 ∈ [−1, 1]ⁿ`, resampling until the LQR problem is well posed.
pub fn random_system(n: usize, m: usize, seed: u64) -> Result<Instance> {
    if n == 0 || m == 0 {
        return Err(IocError::Argument("random_system needs n >= 1 and m >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..GENERATION_BUDGET {
        let a_raw = linalg::symmetrize(&gaussian(&mut rng, n, n, 0.3));
        let margin = 0.3 + 0.7 * rng.random::<f64>();
        let shift = linalg::max_eig_sym(&a_raw)? + margin;
        let a = a_raw - Mat::identity(n, n) * shift;
        let b = gaussian(&mut rng, n, m, 0.5);
        let mq = gaussian(&mut rng, n, n, 0.8);
        let q = linalg::symmetrize(&(mq.transpose() * &mq + Mat::identity(n, n) * 0.1));
        let nr = gaussian(&mut rng, m, m, 1.0);
        let r = linalg::symmetrize(&(nr.transpose() * &nr + Mat::identity(m, m)));
        let x0 = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));

        let system = LtiSystem { a, b };
        let cost = CostWeights { q, r };
        if is_stabilizable(&system) && solve_care(&system, &cost).is_ok() {
            return Ok(Instance { system, cost, x0 });
        }
    }
    Err(IocError::GenerationFailure(format!(
        "no well-posed system after {GENERATION_BUDGET} draws (n = {n}, m = {m}, seed = {seed})"
    )))
}
