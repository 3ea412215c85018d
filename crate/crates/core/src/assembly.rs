//! The vectorized feasibility program `Ω ξ = 0` with PSD cones on `Q̂`,
//! `P̂ − εI`, `R̂ − εI`, and its dual Hessian `H`.

use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::DataMatrices;
use crate::error::{IocError, Result};
use crate::linalg::{self, Mat, Vector};
use crate::lqr::{Instance, LqrSolution};

/// Default cone margin on `P̂` and `R̂`.
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Default relative Tikhonov weight of [`DualKernel::Regularized`].
pub const DEFAULT_RHO_REL: f64 = 1e-10;

/// Segment bookkeeping for `ξ = [vec Z | vec R̂ | vec Q̂ | vec P̂ | vec G]`.
/// The multi-trajectory variant has no `G` segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecisionLayout {
    pub n: usize,
    pub m: usize,
    pub with_g: bool,
}

impl DecisionLayout {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(IocError::Argument("layout needs n >= 1 and m >= 1".into()));
        }
        Ok(Self { n, m, with_g: true })
    }

    pub fn without_g(n: usize, m: usize) -> Result<Self> {
        Ok(Self { with_g: false, ..Self::new(n, m)? })
    }

    pub fn z(&self) -> Range<usize> {
        0..self.n * self.n
    }

    pub fn r(&self) -> Range<usize> {
        let s = self.z().end;
        s..s + self.m * self.m
    }

    pub fn q(&self) -> Range<usize> {
        let s = self.r().end;
        s..s + self.n * self.n
    }

    pub fn p(&self) -> Range<usize> {
        let s = self.q().end;
        s..s + self.n * self.n
    }

    pub fn g(&self) -> Option<Range<usize>> {
        let s = self.p().end;
        self.with_g.then(|| s..s + self.n * self.n)
    }

    pub fn dim(&self) -> usize {
        self.g().map_or(self.p().end, |g| g.end)
    }

    pub fn segment_lengths(&self) -> Vec<usize> {
        let mut out = vec![self.z().len(), self.r().len(), self.q().len(), self.p().len()];
        out.extend(self.g().map(|g| g.len()));
        out
    }

    /// Multiplier length `2n² + m²`, ordered `(λ_Q, λ_P, λ_R)`.
    pub fn dual_dim(&self) -> usize {
        2 * self.n * self.n + self.m * self.m
    }

    pub fn dual_q(&self) -> Range<usize> {
        0..self.n * self.n
    }

    pub fn dual_p(&self) -> Range<usize> {
        self.n * self.n..2 * self.n * self.n
    }

    pub fn dual_r(&self) -> Range<usize> {
        2 * self.n * self.n..self.dual_dim()
    }
}

/// Splits of a decision vector into its matrix blocks.
#[derive(Clone, Debug)]
pub struct DecisionBlocks {
    pub z: Mat,
    pub r: Mat,
    pub q: Mat,
    pub p: Mat,
    pub g: Option<Mat>,
}

impl DecisionLayout {
    pub fn split(&self, xi: &Vector) -> DecisionBlocks {
        let (n, m) = (self.n, self.m);
        let s = xi.as_slice();
        DecisionBlocks {
            z: linalg::unvectorize(&s[self.z()], n, n),
            r: linalg::unvectorize(&s[self.r()], m, m),
            q: linalg::unvectorize(&s[self.q()], n, n),
            p: linalg::unvectorize(&s[self.p()], n, n),
            g: self.g().map(|g| linalg::unvectorize(&s[g], n, n)),
        }
    }

    pub fn stack(&self, blocks: &DecisionBlocks) -> Result<Vector> {
        let mut xi = Vector::zeros(self.dim());
        let mut put = |range: Range<usize>, mat: &Mat| -> Result<()> {
            if mat.len() != range.len() {
                return Err(IocError::Argument("block size does not match the layout".into()));
            }
            xi.rows_mut(range.start, range.len()).copy_from(&linalg::vectorize(mat));
            Ok(())
        };
        put(self.z(), &blocks.z)?;
        put(self.r(), &blocks.r)?;
        put(self.q(), &blocks.q)?;
        put(self.p(), &blocks.p)?;
        match (self.g(), &blocks.g) {
            (Some(range), Some(g)) => put(range, g)?,
            (None, None) => {}
            _ => return Err(IocError::Argument("G block presence does not match the layout".into())),
        }
        Ok(xi)
    }
}

/// `ξ₀` of a true model: `Z = AᵀP`, `G = P(A − BK)`.
pub fn ground_truth_xi(layout: &DecisionLayout, inst: &Instance, sol: &LqrSolution) -> Result<Vector> {
    let a = &inst.system.a;
    let ak = a - &inst.system.b * &sol.k;
    let blocks = DecisionBlocks {
        z: a.transpose() * &sol.p,
        r: inst.cost.r.clone(),
        q: inst.cost.q.clone(),
        p: sol.p.clone(),
        g: layout.with_g.then(|| &sol.p * ak),
    };
    layout.stack(&blocks)
}

fn check_gain(kstar: &Mat, layout: &DecisionLayout) -> Result<()> {
    if kstar.shape() != (layout.m, layout.n) {
        return Err(IocError::Argument(format!(
            "gain is {}x{}, layout expects {}x{}",
            kstar.nrows(),
            kstar.ncols(),
            layout.m,
            layout.n
        )));
    }
    Ok(())
}

/// First two row blocks shared by both assemblies (ARE and closed-loop rows).
fn riccati_rows(kstar: &Mat, layout: &DecisionLayout, rows: usize) -> Mat {
    let nn = layout.n * layout.n;
    let mut omega = Mat::zeros(rows, layout.dim());
    let y = linalg::commutation_matrix(layout.n);
    let kt = kstar.transpose();
    let kk = linalg::kron(&kt, &kt);
    let eye = Mat::identity(nn, nn);
    let (z, r, q) = (layout.z(), layout.r(), layout.q());

    omega.view_mut((0, z.start), (nn, nn)).copy_from(&(&y + &eye));
    omega.view_mut((0, r.start), (nn, r.len())).copy_from(&(-&kk));
    omega.view_mut((0, q.start), (nn, nn)).copy_from(&eye);

    omega.view_mut((nn, z.start), (nn, nn)).copy_from(&y);
    omega.view_mut((nn, r.start), (nn, r.len())).copy_from(&(-&kk));
    omega
}

/// Constraint matrix of the single-trajectory program, `(2n² + n²N) × d`.
pub fn build_omega(kstar: &Mat, dm: &DataMatrices, layout: &DecisionLayout) -> Result<Mat> {
    check_gain(kstar, layout)?;
    let n = layout.n;
    let g = layout
        .g()
        .ok_or_else(|| IocError::Argument("single-trajectory assembly needs the G segment".into()))?;
    if dm.state_dim() != n || dm.lambda_bar_2.shape() != dm.lambda_bar_1.shape() {
        return Err(IocError::Argument("data matrices do not match the layout".into()));
    }
    let nn = n * n;
    let cols = dm.lambda_bar_1.ncols();
    let data_rows = n * cols;
    let mut omega = riccati_rows(kstar, layout, 2 * nn + data_rows);
    omega.view_mut((nn, g.start), (nn, nn)).copy_from(&(-Mat::identity(nn, nn)));

    let eye = Mat::identity(n, n);
    let p = layout.p();
    omega
        .view_mut((2 * nn, p.start), (data_rows, nn))
        .copy_from(&(-linalg::kron(&dm.lambda_bar_2.transpose(), &eye)));
    omega
        .view_mut((2 * nn, g.start), (data_rows, nn))
        .copy_from(&linalg::kron(&dm.lambda_bar_1.transpose(), &eye));
    Ok(omega)
}

/// Constraint matrix when the closed loop is known from several
/// trajectories: `2n² × (3n² + m²)`, with `P̂ A_K` replacing `G`.
pub fn build_omega_multi(kstar: &Mat, closed_loop: &Mat, layout: &DecisionLayout) -> Result<Mat> {
    check_gain(kstar, layout)?;
    if layout.with_g {
        return Err(IocError::Argument("multi-trajectory assembly has no G segment".into()));
    }
    let n = layout.n;
    if closed_loop.shape() != (n, n) {
        return Err(IocError::Argument("closed-loop matrix has wrong shape".into()));
    }
    let nn = n * n;
    let mut omega = riccati_rows(kstar, layout, 2 * nn);
    let p = layout.p();
    omega
        .view_mut((nn, p.start), (nn, nn))
        .copy_from(&(-linalg::kron(&closed_loop.transpose(), &Mat::identity(n, n))));
    Ok(omega)
}

/// Which way the cone multipliers enter the Lagrangian.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SignConvention {
    /// Dual `¼λᵀHλ − λᵀW`, `ξ = +½ M Uᵀλ`.
    #[default]
    Standard,
    /// Dual `¼λᵀHλ + λᵀW`, `ξ = −½ M Uᵀλ`. Its minimizer is `λ = 0`.
    Paper,
}

impl SignConvention {
    pub fn factor(self) -> f64 {
        match self {
            SignConvention::Standard => 1.0,
            SignConvention::Paper => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SignConvention::Standard => "standard",
            SignConvention::Paper => "paper",
        }
    }
}

impl std::str::FromStr for SignConvention {
    type Err = IocError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(SignConvention::Standard),
            "paper" => Ok(SignConvention::Paper),
            other => Err(IocError::Argument(format!("unknown sign convention `{other}`"))),
        }
    }
}

/// The matrix `M` standing in for `(ΩᵀΩ)†` in `H = U M Uᵀ` and `ξ = ±½ M Uᵀλ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DualKernel {
    /// `M = ρ(ΩᵀΩ + SᵀS + ρI)⁻¹`, `ρ = rho_rel · λ_max(ΩᵀΩ + SᵀS)`, where
    /// `S` penalizes asymmetry of `Q̂`, `P̂`, `R̂`. `M` is close to the
    /// orthogonal projector onto the symmetric solutions of `Ωξ = 0`.
    Regularized { rho_rel: f64 },
    /// `M = (ΩᵀΩ)†`.
    Pseudoinverse { rtol: f64 },
}

impl Default for DualKernel {
    fn default() -> Self {
        DualKernel::Regularized { rho_rel: DEFAULT_RHO_REL }
    }
}

/// Rows `(I − Y)vec(X)` for each symmetric segment.
pub fn symmetry_rows(layout: &DecisionLayout) -> Mat {
    let (n, m) = (layout.n, layout.m);
    let rows = 2 * n * n + m * m;
    let mut s = Mat::zeros(rows, layout.dim());
    let mut row = 0;
    for (range, k) in [(layout.q(), n), (layout.p(), n), (layout.r(), m)] {
        let block = Mat::identity(k * k, k * k) - linalg::commutation_matrix(k);
        s.view_mut((row, range.start), (k * k, k * k)).copy_from(&block);
        row += k * k;
    }
    s
}

/// `U` stacking the `Q̂`, `P̂`, `R̂` selections.
pub fn selection_matrix(layout: &DecisionLayout) -> Mat {
    let mut u = Mat::zeros(layout.dual_dim(), layout.dim());
    let mut row = 0;
    for range in [layout.q(), layout.p(), layout.r()] {
        for col in range {
            u[(row, col)] = 1.0;
            row += 1;
        }
    }
    u
}

/// `W = [0 ; vec(εIₙ) ; vec(εIₘ)]`.
pub fn offset_vector(layout: &DecisionLayout, epsilon: f64) -> Vector {
    let mut w = Vector::zeros(layout.dual_dim());
    let (n, m) = (layout.n, layout.m);
    for i in 0..n {
        w[n * n + i * n + i] = epsilon;
    }
    for i in 0..m {
        w[2 * n * n + i * m + i] = epsilon;
    }
    w
}

/// Diagonal and off-diagonal blocks of `H` in `(Q, P, R)` order.
#[derive(Clone, Debug)]
pub struct HessianBlocks {
    pub qq: Mat,
    pub qp: Mat,
    pub qr: Mat,
    pub pp: Mat,
    pub pr: Mat,
    pub rr: Mat,
}

/// Everything the dual solver needs; immutable once built.
#[derive(Clone, Debug)]
pub struct AssembledProblem {
    pub layout: DecisionLayout,
    pub omega: Mat,
    pub u_select: Mat,
    /// Always stored with non-negative entries; the sign is applied by `sign`.
    pub w_offset: Vector,
    /// `M` of the chosen [`DualKernel`], `d × d`.
    pub kernel_matrix: Mat,
    /// `M Uᵀ`, so that `ξ = ±½ primal_map · λ`.
    pub primal_map: Mat,
    pub h_dual: Mat,
    pub blocks: HessianBlocks,
    pub epsilon: f64,
    pub sign: SignConvention,
    pub kernel: DualKernel,
}

pub fn build_dual(
    omega: &Mat,
    layout: &DecisionLayout,
    epsilon: f64,
    sign: SignConvention,
    kernel: DualKernel,
) -> Result<AssembledProblem> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(IocError::Argument(format!("epsilon must be positive, got {epsilon}")));
    }
    if omega.ncols() != layout.dim() {
        return Err(IocError::Argument(format!(
            "Ω has {} columns, layout has {}",
            omega.ncols(),
            layout.dim()
        )));
    }
    if !linalg::is_finite(omega) {
        return Err(IocError::NumericalBreakdown("Ω contains non-finite entries".into()));
    }
    let d = layout.dim();
    let normal = omega.transpose() * omega;
    let kernel_matrix = match kernel {
        DualKernel::Regularized { rho_rel } => {
            if !(rho_rel > 0.0) {
                return Err(IocError::Argument("rho_rel must be positive".into()));
            }
            let s = symmetry_rows(layout);
            let full = linalg::symmetrize(&(normal + s.transpose() * s));
            let rho = rho_rel * linalg::max_eig_sym(&full)?.max(f64::MIN_POSITIVE);
            let shifted = full + Mat::identity(d, d) * rho;
            linalg::symmetrize(&(linalg::inverse(&shifted)? * rho))
        }
        DualKernel::Pseudoinverse { rtol } => linalg::symmetrize(&linalg::pinv(&normal, rtol)?),
    };
    let u_select = selection_matrix(layout);
    let primal_map = &kernel_matrix * u_select.transpose();
    let h_dual = linalg::symmetrize(&(&u_select * &primal_map));
    if !linalg::is_finite(&h_dual) {
        return Err(IocError::NumericalBreakdown("dual Hessian is not finite".into()));
    }
    let (q, p, r) = (layout.dual_q(), layout.dual_p(), layout.dual_r());
    let block = |a: &Range<usize>, b: &Range<usize>| h_dual.view((a.start, b.start), (a.len(), b.len())).into_owned();
    let blocks = HessianBlocks {
        qq: block(&q, &q),
        qp: block(&q, &p),
        qr: block(&q, &r),
        pp: block(&p, &p),
        pr: block(&p, &r),
        rr: block(&r, &r),
    };
    Ok(AssembledProblem {
        layout: *layout,
        omega: omega.clone(),
        u_select,
        w_offset: offset_vector(layout, epsilon),
        kernel_matrix,
        primal_map,
        h_dual,
        blocks,
        epsilon,
        sign,
        kernel,
    })
}

fn matrix_csv(m: &Mat) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{:.16e}", m[(i, j)]);
        }
        out.push('\n');
    }
    out
}

impl AssembledProblem {
    /// Writes `omega.csv`, `h_dual.csv` and `w_offset.csv` (signed) into `dir`.
    pub fn dump_csv(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("omega.csv"), matrix_csv(&self.omega))?;
        std::fs::write(dir.join("h_dual.csv"), matrix_csv(&self.h_dual))?;
        let w = &self.w_offset * -self.sign.factor();
        std::fs::write(dir.join("w_offset.csv"), matrix_csv(&Mat::from_column_slice(w.len(), 1, w.as_slice())))?;
        Ok(())
    }
}
