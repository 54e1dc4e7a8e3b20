//! Master-equation dynamics and steady states for small atom numbers.

use crate::basis::{collective_excited_state, Truncation};
use crate::error::{Error, Result};
use crate::hamiltonian::EffectiveModel;
use crate::linalg::{solve_refined, DenseMatrix, SparseMatrix};
use crate::num::{c, cr, Real, C};
use crate::observables::{collective_population_density, observables_from_density, ScatterPoint};
use crate::ode::{integrate, OdeOptions};

/// Largest atom number handled in the untruncated space.
pub const MAX_MASTER_ATOMS: usize = 8;
/// Largest number of unknowns (`dim^2`) for the dense steady-state solve.
pub const DIRECT_SOLVE_LIMIT: usize = 2601;

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix<R: Real = f64> {
    matrix: DenseMatrix<R>,
}

impl<R: Real> DensityMatrix<R> {
    pub fn from_matrix(matrix: DenseMatrix<R>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Dimension("density matrix must be square".into()));
        }
        Ok(Self { matrix })
    }

    /// `|0><0|`, the all-ground projector.
    pub fn ground(dim: usize) -> Self {
        let mut m = DenseMatrix::zeros(dim, dim);
        m[(0, 0)] = cr(R::one());
        Self { matrix: m }
    }

    /// `|psi><psi| / <psi|psi>`.
    pub fn pure(psi: &[C<R>]) -> Result<Self> {
        let n2 = crate::num::norm(psi).powi(2);
        if !(n2 > R::zero()) {
            return Err(Error::Domain("zero state vector".into()));
        }
        Ok(Self {
            matrix: DenseMatrix::outer(psi, psi).scale(cr(R::one() / n2)),
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &DenseMatrix<R> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DenseMatrix<R> {
        self.matrix
    }

    pub fn trace(&self) -> C<R> {
        self.matrix.trace()
    }

    pub fn symmetrize(&mut self) {
        self.matrix.symmetrize();
    }

    /// Checks Hermiticity and unit trace to `tol` and that the smallest
    /// eigenvalue is above `-neg_tol`.
    pub fn check(&self, tol: R, neg_tol: R) -> Result<()> {
        let herm = self.matrix.hermiticity_error();
        if herm > tol {
            return Err(Error::Domain(format!("density matrix not Hermitian ({herm:e})")));
        }
        let tr = self.trace();
        if (tr - cr(R::one())).norm() > tol {
            return Err(Error::Domain(format!("density matrix trace {tr}")));
        }
        if !self.matrix.is_positive_semidefinite(neg_tol) {
            return Err(Error::Domain("density matrix has a negative eigenvalue".into()));
        }
        Ok(())
    }
}

/// Generator `rho' = -i (H rho - rho H^+) + sum_mu L_mu rho L_mu^+` with
/// `H = h_coh + h_dri - (i/2) sum_mu L_mu^+ L_mu`.
#[derive(Clone, Debug)]
pub struct Liouvillian<R: Real = f64> {
    dim: usize,
    h_eff: SparseMatrix<R>,
    jumps: Vec<SparseMatrix<R>>,
}

impl<R: Real> Liouvillian<R> {
    /// Fails for incoherent pumping on a truncated basis (the truncation is
    /// not closed under g -> s transfer) and for full spaces above
    /// [`MAX_MASTER_ATOMS`].
    pub fn new(model: &EffectiveModel<R>) -> Result<Self> {
        let basis = &model.basis;
        match basis.truncation() {
            Truncation::Full if basis.n_atoms() > MAX_MASTER_ATOMS => {
                return Err(Error::TooLarge(format!(
                    "master equation on the full space is limited to {MAX_MASTER_ATOMS} atoms"
                )))
            }
            Truncation::Full => {}
            _ if model.config.gamma_p > R::zero() => {
                return Err(Error::Config(
                    "population relaxation requires the full basis; truncated master equations support dephasing only"
                        .into(),
                ))
            }
            _ => {}
        }
        let dim = basis.dim();
        let jumps: Vec<SparseMatrix<R>> = model.dissipators.jump_ops().cloned().collect();
        let kernel = jumps
            .iter()
            .fold(SparseMatrix::zeros(dim, dim), |acc, l| acc.add(&l.adjoint().matmul(l)));
        let h_eff = model.master_hamiltonian().sub(&kernel.scale(c(R::zero(), R::lit(0.5))));
        Ok(Self { dim, h_eff, jumps })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Writes the time derivative of the flat row-major `rho` into `out`.
    pub fn apply(&self, rho: &[C<R>], out: &mut [C<R>], scratch: &mut [C<R>]) {
        let d = self.dim;
        let zero = cr(R::zero());
        out.iter_mut().for_each(|v| *v = zero);
        let i = c(R::zero(), R::one());
        self.h_eff.mul_dense_add(rho, d, -i, out);
        self.h_eff.dense_mul_adjoint_add(rho, d, i, out);
        for l in &self.jumps {
            scratch.iter_mut().for_each(|v| *v = zero);
            l.mul_dense_add(rho, d, cr(R::one()), scratch);
            l.dense_mul_adjoint_add(scratch, d, cr(R::one()), out);
        }
    }

    /// Superoperator acting on row-major `vec(rho)`:
    /// `vec(A rho B) = (A (x) B^T) vec(rho)`.
    pub fn superoperator(&self) -> SparseMatrix<R> {
        let d = self.dim;
        let i = c(R::zero(), R::one());
        let mut t = Vec::new();
        for (a, b, v) in self.h_eff.triplets() {
            for k in 0..d {
                t.push((a * d + k, b * d + k, -i * v));
                t.push((k * d + a, k * d + b, i * v.conj()));
            }
        }
        for l in &self.jumps {
            let entries: Vec<_> = l.triplets().collect();
            for &(a, b, v) in &entries {
                for &(p, q, w) in &entries {
                    t.push((a * d + p, b * d + q, v * w.conj()));
                }
            }
        }
        SparseMatrix::from_triplets(d * d, d * d, t)
    }
}

/// `-i [h_coh + h_dri, rho] + L rho` with all dissipator groups.
pub fn master_rhs<R: Real>(model: &EffectiveModel<R>, rho: &DensityMatrix<R>) -> Result<DenseMatrix<R>> {
    let l = Liouvillian::new(model)?;
    if rho.dim() != l.dim() {
        return Err(Error::Dimension(format!("rho is {0}x{0}, model has {1}", rho.dim(), l.dim())));
    }
    let d = l.dim();
    let mut out = vec![cr(R::zero()); d * d];
    let mut scratch = out.clone();
    l.apply(rho.matrix().as_slice(), &mut out, &mut scratch);
    Ok(DenseMatrix::from_vec(d, d, out))
}

fn master_ode_options<R: Real>(model: &EffectiveModel<R>) -> OdeOptions {
    let a = model.config.drive_amplitude().to_f64_lossy();
    OdeOptions {
        rtol: 1e-8,
        atol: (1e-10 * (a * a).min(1.0)).max(1e-24),
        ..OdeOptions::default()
    }
}

/// Density matrices on `t_grid`, re-symmetrized at each output point.
pub fn evolve_master<R: Real>(
    model: &EffectiveModel<R>,
    rho0: &DensityMatrix<R>,
    t_grid: &[R],
) -> Result<Vec<DensityMatrix<R>>> {
    let l = Liouvillian::new(model)?;
    if rho0.dim() != l.dim() {
        return Err(Error::Dimension("initial density matrix size".into()));
    }
    let d = l.dim();
    let mut scratch = vec![cr(R::zero()); d * d];
    let traj = integrate(
        |_, y, dy| l.apply(y, dy, &mut scratch),
        rho0.matrix().as_slice(),
        t_grid,
        &master_ode_options(model),
    )?;
    Ok(traj
        .into_iter()
        .map(|v| {
            let mut m = DenseMatrix::from_vec(d, d, v);
            m.symmetrize();
            DensityMatrix { matrix: m }
        })
        .collect())
}

/// One row of a master-equation trajectory table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryPoint<R: Real = f64> {
    pub t: R,
    pub collective_population: R,
    pub transmission: R,
    pub reflection: R,
}

/// `P_E`, `T` and `R` along a trajectory.
pub fn trajectory_observables<R: Real>(
    model: &EffectiveModel<R>,
    t_grid: &[R],
    states: &[DensityMatrix<R>],
) -> Result<Vec<TrajectoryPoint<R>>> {
    let e = collective_excited_state::<R>(&model.basis);
    t_grid
        .iter()
        .zip(states)
        .map(|(&t, rho)| {
            let p = observables_from_density(rho.matrix(), model)?;
            Ok(TrajectoryPoint {
                t,
                collective_population: collective_population_density(rho.matrix(), &e)?,
                transmission: p.transmission,
                reflection: p.reflection,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
pub struct SteadyStateOptions {
    pub direct_limit: usize,
    /// Fallback integration stops once `max |rho'| <` this.
    pub derivative_tol: f64,
    pub t_max: f64,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        Self {
            direct_limit: DIRECT_SOLVE_LIMIT,
            derivative_tol: 1e-10,
            t_max: 1e5,
        }
    }
}

/// Stationary state of the master equation reached from the ground state.
/// Uses a dense solve of the vectorized generator, restricted to the states
/// reachable from the ground state and with the `rho_00` equation replaced by
/// the trace condition, when that has at most `direct_limit` unknowns;
/// otherwise integrates from the ground state until the derivative falls
/// below tolerance.
pub fn steady_state_master<R: Real>(model: &EffectiveModel<R>) -> Result<DensityMatrix<R>> {
    steady_state_master_with(model, &SteadyStateOptions::default())
}

pub fn steady_state_master_with<R: Real>(
    model: &EffectiveModel<R>,
    opts: &SteadyStateOptions,
) -> Result<DensityMatrix<R>> {
    let l = Liouvillian::new(model)?;
    let mut rho = if reachable_from_ground(&l).len().pow(2) <= opts.direct_limit {
        direct_steady_state(&l)?
    } else {
        integrate_to_steady_state(model, &l, opts)?
    };
    rho.symmetrize();
    Ok(rho)
}

/// Basis states reachable from the ground state under `h_eff` and the jump
/// operators. The generator maps operators on this subspace to itself, and
/// the physical steady state (reached from the ground state) lives in it.
fn reachable_from_ground<R: Real>(l: &Liouvillian<R>) -> Vec<usize> {
    let d = l.dim;
    let ops: Vec<&SparseMatrix<R>> = std::iter::once(&l.h_eff).chain(&l.jumps).collect();
    let mut adj = vec![Vec::new(); d];
    for op in ops {
        for (i, j, _) in op.triplets() {
            adj[j].push(i);
        }
    }
    let mut seen = vec![false; d];
    seen[0] = true;
    let mut stack = vec![0usize];
    while let Some(j) = stack.pop() {
        for &i in &adj[j] {
            if !seen[i] {
                seen[i] = true;
                stack.push(i);
            }
        }
    }
    (0..d).filter(|&i| seen[i]).collect()
}

fn direct_steady_state<R: Real>(l: &Liouvillian<R>) -> Result<DensityMatrix<R>> {
    let d = l.dim();
    let keep = reachable_from_ground(l);
    let restricted;
    let sub = if keep.len() == d {
        l
    } else {
        let restrict = |m: &SparseMatrix<R>| SparseMatrix::from_dense(&m.block(&keep, &keep));
        restricted = Liouvillian {
            dim: keep.len(),
            h_eff: restrict(&l.h_eff),
            jumps: l.jumps.iter().map(restrict).collect(),
        };
        &restricted
    };
    let k = sub.dim();
    let n = k * k;
    let mut m = sub.superoperator().to_dense();
    for j in 0..n {
        m[(0, j)] = cr(R::zero());
    }
    for i in 0..k {
        m[(0, i * k + i)] = cr(R::one());
    }
    let mut b = vec![cr(R::zero()); n];
    b[0] = cr(R::one());
    let tol = crate::steadystate::residual_tolerance::<R>();
    let (x, res) = solve_refined(&m, &b, tol).map_err(|e| Error::Singular {
        block: "Liouvillian".into(),
        pivot: e.pivot,
    })?;
    if !(res <= tol) {
        return Err(Error::Residual {
            block: "Liouvillian".into(),
            residual: res.to_f64_lossy(),
            tolerance: tol.to_f64_lossy(),
        });
    }
    let mut full = DenseMatrix::zeros(d, d);
    for (a, &i) in keep.iter().enumerate() {
        for (b, &j) in keep.iter().enumerate() {
            full[(i, j)] = x[a * k + b];
        }
    }
    Ok(DensityMatrix { matrix: full })
}

fn integrate_to_steady_state<R: Real>(
    model: &EffectiveModel<R>,
    l: &Liouvillian<R>,
    opts: &SteadyStateOptions,
) -> Result<DensityMatrix<R>> {
    let d = l.dim();
    let mut y = DensityMatrix::<R>::ground(d).matrix.into_vec();
    let mut scratch = vec![cr(R::zero()); d * d];
    let mut deriv = scratch.clone();
    let ode = master_ode_options(model);
    let tol = R::lit(opts.derivative_tol);
    let (mut t, mut span) = (R::zero(), R::one());
    while t.to_f64_lossy() < opts.t_max {
        let next = (t + span).min(R::lit(opts.t_max));
        let traj = integrate(|_, y, dy| l.apply(y, dy, &mut scratch), &y, &[t, next], &ode)?;
        y = traj.into_iter().last().expect("two grid points");
        t = next;
        l.apply(&y, &mut deriv, &mut scratch);
        if deriv.iter().all(|v| v.norm() < tol) {
            return Ok(DensityMatrix {
                matrix: DenseMatrix::from_vec(d, d, y),
            });
        }
        span = span * R::lit(2.0);
    }
    Err(Error::NoConvergence(format!(
        "master equation still evolving at t = {}",
        opts.t_max
    )))
}

/// Steady-state transmission and reflection from the master equation.
pub fn master_scatter_point<R: Real>(model: &EffectiveModel<R>) -> Result<ScatterPoint<R>> {
    let rho = steady_state_master(model)?;
    observables_from_density(rho.matrix(), model)
}
