//! Assembly of the effective non-Hermitian Hamiltonian, the probe drive, the
//! coherent part of the master equation and its dissipators.

use crate::basis::{transition_operator, AtomLevel, TruncatedBasis};
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, SparseMatrix};
use crate::model::{AtomPlacement, InhomogeneousShifts, SystemConfig};
use crate::num::{c, cis, cr, Real, C};

/// Global sign of the probe drive relative to the output-field operators.
///
/// Fixed so that a single lossless two-level atom reflects a resonant probe
/// completely (`t = 0`, `r = -1`); the opposite sign gives `|t| = 2`.
pub const DRIVE_SIGN: f64 = -1.0;

fn check_dims<R: Real>(
    config: &SystemConfig<R>,
    placement: &AtomPlacement,
    shifts: Option<&InhomogeneousShifts<R>>,
    basis: &TruncatedBasis,
) -> Result<()> {
    let n = basis.n_atoms();
    if placement.len() != n {
        return Err(Error::Dimension(format!(
            "placement has {} atoms but basis has {n}",
            placement.len()
        )));
    }
    if let Some(s) = shifts {
        if s.len() != n {
            return Err(Error::Dimension(format!("{} shifts for {n} atoms", s.len())));
        }
    }
    if config.n_atoms != n {
        return Err(Error::Dimension(format!(
            "config has n_atoms = {} but basis has {n}",
            config.n_atoms
        )));
    }
    Ok(())
}

/// Single-atom terms shared by the non-Hermitian and the coherent
/// Hamiltonians: detunings, metastable shifts, control coupling, plus
/// `-i gamma_e / 2` on |e> when `with_free_space_width` is set.
fn push_local_terms<R: Real>(
    config: &SystemConfig<R>,
    shifts: &InhomogeneousShifts<R>,
    basis: &TruncatedBasis,
    with_free_space_width: bool,
    t: &mut Vec<(usize, usize, C<R>)>,
) {
    let half = R::lit(0.5);
    let e_diag = if with_free_space_width {
        -c(config.delta, config.gamma_e * half)
    } else {
        cr(-config.delta)
    };
    let mut target = vec![AtomLevel::G; basis.n_atoms()];
    for (col, cfg) in basis.configs().enumerate() {
        let mut diag = cr(R::zero());
        for (j, &lvl) in cfg.iter().enumerate() {
            match lvl {
                AtomLevel::G => {}
                AtomLevel::E => {
                    diag = diag + e_diag;
                    target.copy_from_slice(cfg);
                    target[j] = AtomLevel::S;
                    if let Some(row) = basis.index_of(&target) {
                        t.push((row, col, cr(-config.omega_c)));
                    }
                }
                AtomLevel::S => {
                    diag = diag - cr(config.delta - config.delta_c - shifts.as_slice()[j]);
                    target.copy_from_slice(cfg);
                    target[j] = AtomLevel::E;
                    if let Some(row) = basis.index_of(&target) {
                        t.push((row, col, cr(-config.omega_c)));
                    }
                }
            }
        }
        t.push((col, col, diag));
    }
}

/// Adds `sum_{j,k} kernel(j,k) S_eg^j S_ge^k` to the triplet list.
fn push_exchange_terms<R: Real>(
    basis: &TruncatedBasis,
    kernel: impl Fn(usize, usize) -> C<R>,
    t: &mut Vec<(usize, usize, C<R>)>,
) {
    let n = basis.n_atoms();
    let mut target = vec![AtomLevel::G; n];
    for (col, cfg) in basis.configs().enumerate() {
        for k in 0..n {
            if cfg[k] != AtomLevel::E {
                continue;
            }
            t.push((col, col, kernel(k, k)));
            for j in 0..n {
                if j == k || cfg[j] != AtomLevel::G {
                    continue;
                }
                target.copy_from_slice(cfg);
                target[k] = AtomLevel::G;
                target[j] = AtomLevel::E;
                if let Some(row) = basis.index_of(&target) {
                    t.push((row, col, kernel(j, k)));
                }
            }
        }
    }
}

/// Effective non-Hermitian Hamiltonian of the atoms with the guided mode
/// eliminated:
///
/// `-sum_j [(delta + i gamma_e/2) S_ee + (delta - delta_c - shift_j) S_ss
///  + omega_c (S_es + S_se)] - i gamma_1d/2 sum_{j,k} e^{i kd |z_j - z_k|} S_eg^j S_ge^k`.
pub fn build_nonhermitian<R: Real>(
    config: &SystemConfig<R>,
    placement: &AtomPlacement,
    shifts: &InhomogeneousShifts<R>,
    basis: &TruncatedBasis,
) -> Result<SparseMatrix<R>> {
    check_dims(config, placement, Some(shifts), basis)?;
    let mut t = Vec::new();
    push_local_terms(config, shifts, basis, true, &mut t);
    let amp = c(R::zero(), -config.gamma_1d * R::lit(0.5));
    push_exchange_terms(
        basis,
        |j, k| amp * cis(placement.separation_phase(j, k, config.kd)),
        &mut t,
    );
    Ok(SparseMatrix::from_triplets(basis.dim(), basis.dim(), t))
}

/// Weak coherent probe entering from the left:
/// `DRIVE_SIGN * sqrt(gamma_1d/2) * probe_amp * sum_j (S_eg^j e^{i kd z_j} + h.c.)`.
pub fn build_drive<R: Real>(
    config: &SystemConfig<R>,
    placement: &AtomPlacement,
    basis: &TruncatedBasis,
) -> Result<SparseMatrix<R>> {
    check_dims(config, placement, None, basis)?;
    let amp = R::lit(DRIVE_SIGN) * config.drive_amplitude();
    let mut t = Vec::new();
    let mut target = vec![AtomLevel::G; basis.n_atoms()];
    for (col, cfg) in basis.configs().enumerate() {
        for (j, &lvl) in cfg.iter().enumerate() {
            let phase = cis(placement.phase(j, config.kd));
            let (to, coeff) = match lvl {
                AtomLevel::G => (AtomLevel::E, phase),
                AtomLevel::E => (AtomLevel::G, phase.conj()),
                AtomLevel::S => continue,
            };
            target.copy_from_slice(cfg);
            target[j] = to;
            if let Some(row) = basis.index_of(&target) {
                t.push((row, col, coeff * amp));
            }
        }
    }
    Ok(SparseMatrix::from_triplets(basis.dim(), basis.dim(), t))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DissipatorKind {
    /// Emission into the guided mode, correlated between atoms.
    Collective,
    /// Independent emission into free space.
    FreeSpace,
    /// Incoherent g <-> s transfer.
    Relaxation,
    /// Pure dephasing of the g-s coherence.
    Dephasing,
}

/// Jump operators of one dissipator group, each already scaled by the
/// square root of its rate so that `D[L] rho = L rho L^+ - {L^+ L, rho}/2`.
#[derive(Clone, Debug)]
pub struct JumpGroup<R: Real> {
    pub kind: DissipatorKind,
    pub ops: Vec<SparseMatrix<R>>,
}

#[derive(Clone, Debug)]
pub struct Dissipators<R: Real> {
    /// `gamma_1d * cos(kd |z_j - z_k|)`, row-major `n x n`.
    pub collective_kernel: Vec<R>,
    pub groups: Vec<JumpGroup<R>>,
}

impl<R: Real> Dissipators<R> {
    pub fn group(&self, kind: DissipatorKind) -> Option<&JumpGroup<R>> {
        self.groups.iter().find(|g| g.kind == kind)
    }

    pub fn jump_ops(&self) -> impl Iterator<Item = &SparseMatrix<R>> {
        self.groups.iter().flat_map(|g| g.ops.iter())
    }

    /// `sum_mu L_mu^+ L_mu` over the selected groups.
    pub fn anticommutator_kernel(&self, kinds: &[DissipatorKind], dim: usize) -> SparseMatrix<R> {
        self.groups
            .iter()
            .filter(|g| kinds.contains(&g.kind))
            .flat_map(|g| g.ops.iter())
            .fold(SparseMatrix::zeros(dim, dim), |acc, l| acc.add(&l.adjoint().matmul(l)))
    }

    /// Whether the collective kernel is positive semidefinite (it is a sum of
    /// two rank-one projectors for any placement).
    pub fn collective_kernel_is_psd(&self, tol: R) -> bool {
        let n = (self.collective_kernel.len() as f64).sqrt() as usize;
        let m = DenseMatrix::from_fn(n, n, |i, j| cr(self.collective_kernel[i * n + j]));
        m.is_positive_semidefinite(tol)
    }
}

/// Coherent Hamiltonian and dissipators of the master equation. The
/// coherent part carries the same single-atom terms as the non-Hermitian
/// Hamiltonian plus the dispersive exchange
/// `gamma_1d/2 sum_{j,k} sin(kd |z_j - z_k|) S_eg^j S_ge^k`; it excludes the
/// probe drive, which callers add separately.
pub fn build_master_parts<R: Real>(
    config: &SystemConfig<R>,
    placement: &AtomPlacement,
    shifts: &InhomogeneousShifts<R>,
    basis: &TruncatedBasis,
) -> Result<(SparseMatrix<R>, Dissipators<R>)> {
    check_dims(config, placement, Some(shifts), basis)?;
    let n = basis.n_atoms();
    let half = R::lit(0.5);
    let mut t = Vec::new();
    push_local_terms(config, shifts, basis, false, &mut t);
    push_exchange_terms(
        basis,
        |j, k| cr(config.gamma_1d * half * placement.separation_phase(j, k, config.kd).sin()),
        &mut t,
    );
    let h_coh = SparseMatrix::from_triplets(basis.dim(), basis.dim(), t);

    let mut kernel = vec![R::zero(); n * n];
    for j in 0..n {
        for k in 0..n {
            kernel[j * n + k] = config.gamma_1d * placement.separation_phase(j, k, config.kd).cos();
        }
    }

    let lowering: Vec<SparseMatrix<R>> = (0..n)
        .map(|j| transition_operator(basis, j, AtomLevel::G, AtomLevel::E))
        .collect();
    let mut groups = Vec::new();

    // cos(phi_j - phi_k) = Re e^{i phi_j} e^{-i phi_k}: the kernel splits into
    // emission towards +z and towards -z.
    if config.gamma_1d > R::zero() {
        let amp = cr(config.coupling());
        let directed = |sign: R| {
            lowering.iter().enumerate().fold(
                SparseMatrix::zeros(basis.dim(), basis.dim()),
                |acc, (k, s)| acc.add(&s.scale(amp * cis(sign * placement.phase(k, config.kd)))),
            )
        };
        groups.push(JumpGroup {
            kind: DissipatorKind::Collective,
            ops: vec![directed(-R::one()), directed(R::one())],
        });
    }
    if config.gamma_e > R::zero() {
        let amp = cr(config.gamma_e.sqrt());
        groups.push(JumpGroup {
            kind: DissipatorKind::FreeSpace,
            ops: lowering.iter().map(|s| s.scale(amp)).collect(),
        });
    }
    if config.gamma_p > R::zero() {
        let amp = cr(config.gamma_p.sqrt());
        let mut ops = Vec::with_capacity(2 * n);
        for j in 0..n {
            ops.push(transition_operator(basis, j, AtomLevel::G, AtomLevel::S).scale(amp));
            ops.push(transition_operator(basis, j, AtomLevel::S, AtomLevel::G).scale(amp));
        }
        groups.push(JumpGroup {
            kind: DissipatorKind::Relaxation,
            ops,
        });
    }
    if config.gamma_d > R::zero() {
        let amp = cr(config.gamma_d.sqrt());
        let mut ops = Vec::with_capacity(2 * n);
        for j in 0..n {
            ops.push(transition_operator(basis, j, AtomLevel::S, AtomLevel::S).scale(amp));
            ops.push(transition_operator(basis, j, AtomLevel::G, AtomLevel::G).scale(amp));
        }
        groups.push(JumpGroup {
            kind: DissipatorKind::Dephasing,
            ops,
        });
    }
    Ok((
        h_coh,
        Dissipators {
            collective_kernel: kernel,
            groups,
        },
    ))
}

/// Everything needed to evolve or solve one placement.
#[derive(Clone, Debug)]
pub struct EffectiveModel<R: Real = f64> {
    pub config: SystemConfig<R>,
    pub placement: AtomPlacement,
    pub shifts: InhomogeneousShifts<R>,
    pub basis: TruncatedBasis,
    pub h_non: SparseMatrix<R>,
    pub h_dri: SparseMatrix<R>,
    pub h_coh: SparseMatrix<R>,
    pub dissipators: Dissipators<R>,
}

impl<R: Real> EffectiveModel<R> {
    pub fn new(
        config: SystemConfig<R>,
        placement: AtomPlacement,
        shifts: InhomogeneousShifts<R>,
        basis: TruncatedBasis,
    ) -> Result<Self> {
        let h_non = build_nonhermitian(&config, &placement, &shifts, &basis)?;
        let h_dri = build_drive(&config, &placement, &basis)?;
        let (h_coh, dissipators) = build_master_parts(&config, &placement, &shifts, &basis)?;
        Ok(Self {
            config,
            placement,
            shifts,
            basis,
            h_non,
            h_dri,
            h_coh,
            dissipators,
        })
    }

    /// Same placement and shifts with a different configuration (for example
    /// another detuning); the basis is reused.
    pub fn with_config(&self, config: SystemConfig<R>) -> Result<Self> {
        Self::new(config, self.placement.clone(), self.shifts.clone(), self.basis.clone())
    }

    /// `h_non + h_dri`, the generator of pure-state evolution.
    pub fn total_nonhermitian(&self) -> SparseMatrix<R> {
        self.h_non.add(&self.h_dri)
    }

    /// `h_coh + h_dri`, the Hamiltonian inside the master-equation commutator.
    pub fn master_hamiltonian(&self) -> SparseMatrix<R> {
        self.h_coh.add(&self.h_dri)
    }
}
