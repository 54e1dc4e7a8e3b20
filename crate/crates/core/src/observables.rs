//! Output fields and derived observables: transmission, reflection, loss,
//! optical depth, EIT width and height, collective-state population.

use std::io::Write;

use serde::Serialize;

use crate::basis::{transition_operator, AtomLevel, TruncatedBasis, Truncation};
use crate::error::{Error, Result};
use crate::hamiltonian::EffectiveModel;
use crate::linalg::{DenseMatrix, SparseMatrix};
use crate::model::{AtomPlacement, InhomogeneousShifts, SystemConfig};
use crate::num::{c, cis, cr, dot, Real, C};
use crate::steadystate::{solve_block, solve_weak_drive, SteadyState};

/// Monochromatic scattering result at one detuning.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScatterPoint<R: Real = f64> {
    pub delta: R,
    pub t_amp: C<R>,
    pub r_amp: C<R>,
    pub transmission: R,
    pub reflection: R,
    pub loss: R,
}

impl<R: Real> ScatterPoint<R> {
    pub fn from_amplitudes(delta: R, t_amp: C<R>, r_amp: C<R>) -> Self {
        let transmission = t_amp.norm_sqr();
        let reflection = r_amp.norm_sqr();
        Self {
            delta,
            t_amp,
            r_amp,
            transmission,
            reflection,
            loss: R::one() - transmission - reflection,
        }
    }
}

/// Transmission and reflection over a strictly increasing detuning grid,
/// either for one placement or averaged over many.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum<R: Real = f64> {
    pub delta: Vec<R>,
    pub transmission: Vec<R>,
    pub reflection: Vec<R>,
    /// Per-point variance of T across disorder samples, when averaged.
    pub transmission_variance: Option<Vec<R>>,
}

impl<R: Real> Spectrum<R> {
    pub fn new(delta: Vec<R>, transmission: Vec<R>, reflection: Vec<R>) -> Result<Self> {
        if delta.len() != transmission.len() || delta.len() != reflection.len() {
            return Err(Error::Dimension("spectrum columns differ in length".into()));
        }
        if delta.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Grid("detuning grid must be strictly increasing".into()));
        }
        Ok(Self {
            delta,
            transmission,
            reflection,
            transmission_variance: None,
        })
    }

    pub fn from_points(points: &[ScatterPoint<R>]) -> Result<Self> {
        Self::new(
            points.iter().map(|p| p.delta).collect(),
            points.iter().map(|p| p.transmission).collect(),
            points.iter().map(|p| p.reflection).collect(),
        )
    }

    pub fn with_variance(mut self, variance: Vec<R>) -> Result<Self> {
        if variance.len() != self.delta.len() {
            return Err(Error::Dimension("variance column length".into()));
        }
        self.transmission_variance = Some(variance);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
    }

    pub fn loss(&self) -> Vec<R> {
        self.transmission
            .iter()
            .zip(&self.reflection)
            .map(|(t, r)| R::one() - *t - *r)
            .collect()
    }

    /// Index of the grid point at exactly `delta`.
    pub fn index_of(&self, delta: R) -> Option<usize> {
        self.delta.iter().position(|d| *d == delta)
    }

    /// CSV with columns `delta,T,R,loss` and `T_variance` when present.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let loss = self.loss();
        if self.transmission_variance.is_some() {
            w.write_record(["delta", "T", "R", "loss", "T_variance"])?;
        } else {
            w.write_record(["delta", "T", "R", "loss"])?;
        }
        for i in 0..self.len() {
            let mut rec = vec![
                self.delta[i].to_string(),
                self.transmission[i].to_string(),
                self.reflection[i].to_string(),
                loss[i].to_string(),
            ];
            if let Some(v) = &self.transmission_variance {
                rec.push(v[i].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `start, start + step, ...` up to `stop` inclusive. Points within
/// `1e-9 * step` of zero are snapped to exactly zero so that `Delta = 0`
/// lookups work on symmetric grids.
pub fn uniform_grid<R: Real>(start: R, stop: R, step: R) -> Result<Vec<R>> {
    if !(step > R::zero()) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
        return Err(Error::Grid(format!("bad grid {start}:{stop}:{step}")));
    }
    let n = ((stop - start) / step + R::lit(1e-9)).floor().to_usize().unwrap_or(0);
    let snap = step * R::lit(1e-9);
    Ok((0..=n)
        .map(|k| {
            let x = start + step * R::from_usize_lossy(k);
            if x.abs() < snap {
                R::zero()
            } else {
                x
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Channel {
    Transmitted,
    Reflected,
}

impl Channel {
    pub fn label(self) -> &'static str {
        match self {
            Channel::Transmitted => "T",
            Channel::Reflected => "R",
        }
    }
}

/// Operator form of the output field:
/// `a_T = probe_amp + i sqrt(gamma_1d/2) sum_j e^{-i kd z_j} S_ge^j`,
/// `a_R = i sqrt(gamma_1d/2) sum_j e^{+i kd z_j} S_ge^j`.
pub fn output_operator<R: Real>(model: &EffectiveModel<R>, channel: Channel) -> SparseMatrix<R> {
    let cfg = &model.config;
    let sign = match channel {
        Channel::Transmitted => -R::one(),
        Channel::Reflected => R::one(),
    };
    let amp = c(R::zero(), cfg.coupling());
    let dim = model.basis.dim();
    let mut a = (0..model.basis.n_atoms()).fold(SparseMatrix::zeros(dim, dim), |acc, j| {
        let s = transition_operator(&model.basis, j, AtomLevel::G, AtomLevel::E);
        acc.add(&s.scale(amp * cis(sign * model.placement.phase(j, cfg.kd))))
    });
    if channel == Channel::Transmitted {
        a = a.add(&SparseMatrix::identity(dim).scale(cr(cfg.probe_amp)));
    }
    a
}

fn amplitudes_from_excited<R: Real>(
    excited: impl Iterator<Item = (usize, C<R>)>,
    placement: &AtomPlacement,
    config: &SystemConfig<R>,
    probe_amp: R,
) -> (C<R>, C<R>) {
    let mut fwd = cr(R::zero());
    let mut bwd = cr(R::zero());
    for (j, amp) in excited {
        let phi = placement.phase(j, config.kd);
        fwd = fwd + amp * cis(-phi);
        bwd = bwd + amp * cis(phi);
    }
    let k = c(R::zero(), config.coupling() / probe_amp);
    (cr(R::one()) + k * fwd, k * bwd)
}

/// Transmission and reflection amplitudes from the single-excitation
/// amplitudes of a weak-drive steady state.
pub fn output_amplitudes<R: Real>(state: &SteadyState<R>, model: &EffectiveModel<R>) -> Result<(C<R>, C<R>)> {
    let cfg = &model.config;
    if !(cfg.probe_amp > R::zero()) {
        return Err(Error::Domain("output amplitudes need probe_amp > 0".into()));
    }
    let excited = (0..model.basis.n_atoms()).map(|j| {
        let i = model.basis.single_excited(j, AtomLevel::E).expect("one-excitation states present");
        (j, state.amplitude(i))
    });
    Ok(amplitudes_from_excited(excited, &model.placement, cfg, cfg.probe_amp))
}

/// `T = Tr[rho a_T^+ a_T] / E^2`, `R = Tr[rho a_R^+ a_R] / E^2`; the stored
/// amplitudes are the coherent parts `Tr[rho a] / E`.
pub fn observables_from_density<R: Real>(rho: &DenseMatrix<R>, model: &EffectiveModel<R>) -> Result<ScatterPoint<R>> {
    let cfg = &model.config;
    if !(cfg.probe_amp > R::zero()) {
        return Err(Error::Domain("transmission undefined without a probe".into()));
    }
    let tr = rho.trace();
    if (tr - cr(R::one())).norm() > R::lit(1e-6) {
        return Err(Error::Domain(format!("density matrix trace {tr} is not 1")));
    }
    let expect = |op: &SparseMatrix<R>| -> C<R> {
        op.triplets().fold(cr(R::zero()), |acc, (i, j, v)| acc + v * rho[(j, i)])
    };
    let e2 = cfg.probe_amp * cfg.probe_amp;
    let a_t = output_operator(model, Channel::Transmitted);
    let a_r = output_operator(model, Channel::Reflected);
    let t = expect(&a_t.adjoint().matmul(&a_t)).re / e2;
    let r = expect(&a_r.adjoint().matmul(&a_r)).re / e2;
    let t_amp = expect(&a_t) / cfg.probe_amp;
    let r_amp = expect(&a_r) / cfg.probe_amp;
    Ok(ScatterPoint {
        delta: cfg.delta,
        t_amp,
        r_amp,
        transmission: t,
        reflection: r,
        loss: R::one() - t - r,
    })
}

/// Linear-response scatterer for one placement: the single-excitation
/// block is assembled once and shifted by `-Delta` per detuning (both the
/// e and s diagonals carry `-Delta`). Amplitudes are computed at unit probe.
#[derive(Clone, Debug)]
pub struct LinearScatterer<R: Real = f64> {
    config: SystemConfig<R>,
    placement: AtomPlacement,
    h1: DenseMatrix<R>,
    rhs: Vec<C<R>>,
    /// Position of `|e_j>` inside the one-excitation block.
    excited: Vec<usize>,
}

impl<R: Real> LinearScatterer<R> {
    pub fn new(config: &SystemConfig<R>, placement: &AtomPlacement, shifts: &InhomogeneousShifts<R>) -> Result<Self> {
        let cfg = SystemConfig {
            delta: R::zero(),
            probe_amp: R::one(),
            ..config.clone()
        };
        let basis = TruncatedBasis::new(cfg.n_atoms, Truncation::One)?;
        let model = EffectiveModel::new(cfg.clone(), placement.clone(), shifts.clone(), basis)?;
        let i1 = model.basis.block_indices(1);
        let h1 = model.h_non.block(&i1, &i1);
        let v = model.h_dri.block(&i1, &[0]);
        let rhs = (0..i1.len()).map(|i| -v[(i, 0)]).collect();
        let excited = (0..cfg.n_atoms)
            .map(|j| {
                let b = model.basis.single_excited(j, AtomLevel::E).expect("present");
                i1.binary_search(&b).expect("in block")
            })
            .collect();
        Ok(Self {
            config: cfg,
            placement: placement.clone(),
            h1,
            rhs,
            excited,
        })
    }

    pub fn point(&self, delta: R) -> Result<ScatterPoint<R>> {
        let mut h = self.h1.clone();
        for i in 0..h.rows() {
            h[(i, i)] = h[(i, i)] - cr(delta);
        }
        let x = solve_block(&h, &self.rhs, "one-excitation")?;
        let excited = self.excited.iter().enumerate().map(|(j, &k)| (j, x[k]));
        let (t, r) = amplitudes_from_excited(excited, &self.placement, &self.config, R::one());
        Ok(ScatterPoint::from_amplitudes(delta, t, r))
    }

    pub fn spectrum(&self, grid: &[R]) -> Result<Vec<ScatterPoint<R>>> {
        grid.iter().map(|&d| self.point(d)).collect()
    }
}

/// Transmission and reflection for one placement at `config.delta`, through
/// the full weak-drive solve.
pub fn scatter_point<R: Real>(
    config: &SystemConfig<R>,
    placement: &AtomPlacement,
    shifts: &InhomogeneousShifts<R>,
    truncation: Truncation,
) -> Result<ScatterPoint<R>> {
    let basis = TruncatedBasis::new(config.n_atoms, truncation)?;
    let model = EffectiveModel::new(config.clone(), placement.clone(), shifts.clone(), basis)?;
    let ss = solve_weak_drive(&model)?;
    let (t, r) = output_amplitudes(&ss, &model)?;
    Ok(ScatterPoint::from_amplitudes(config.delta, t, r))
}

/// `D = -ln T0`.
pub fn optical_depth<R: Real>(t0: R) -> Result<R> {
    if !(t0 > R::zero()) {
        return Err(Error::Domain(format!("optical depth needs T0 > 0, got {t0}")));
    }
    Ok(-t0.ln())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct WidthFit<R: Real = f64> {
    pub width: R,
    /// Root-mean-square residual of the fit in `ln T`.
    pub residual: R,
    pub points: usize,
}

/// Fits `ln T = ln T(0) - Delta^2 / w^2` over the contiguous window around
/// `Delta = 0` where `T >= T(0) / 2`.
pub fn eit_width<R: Real>(spectrum: &Spectrum<R>) -> Result<WidthFit<R>> {
    let i0 = spectrum
        .index_of(R::zero())
        .ok_or_else(|| Error::Grid("spectrum has no Delta = 0 point".into()))?;
    let t = &spectrum.transmission;
    let t0 = t[i0];
    if !(t0 > R::zero()) {
        return Err(Error::Domain("T(0) must be positive".into()));
    }
    let half = t0 * R::lit(0.5);
    let mut lo = i0;
    while lo > 0 && t[lo - 1] >= half {
        lo -= 1;
    }
    let mut hi = i0;
    while hi + 1 < t.len() && t[hi + 1] >= half {
        hi += 1;
    }
    let m = hi - lo + 1;
    if m < 5 {
        return Err(Error::InsufficientData(format!("{m} points in the EIT fit window")));
    }
    let xs: Vec<R> = (lo..=hi).map(|i| spectrum.delta[i] * spectrum.delta[i]).collect();
    let ys: Vec<R> = (lo..=hi).map(|i| t[i].ln()).collect();
    let mf = R::from_usize_lossy(m);
    let mx = xs.iter().copied().sum::<R>() / mf;
    let my = ys.iter().copied().sum::<R>() / mf;
    let sxx: R = xs.iter().map(|x| (*x - mx) * (*x - mx)).sum();
    let sxy: R = xs.iter().zip(&ys).map(|(x, y)| (*x - mx) * (*y - my)).sum();
    if !(sxx > R::zero()) {
        return Err(Error::InsufficientData("degenerate fit window".into()));
    }
    let slope = sxy / sxx;
    if !(slope < R::zero()) {
        return Err(Error::Domain("transmission does not decrease away from Delta = 0".into()));
    }
    let intercept = my - slope * mx;
    let ss: R = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let e = *y - intercept - slope * *x;
            e * e
        })
        .sum();
    Ok(WidthFit {
        width: (-R::one() / slope).sqrt(),
        residual: (ss / mf).sqrt(),
        points: m,
    })
}

/// Height of the EIT peak: `T` at `Delta = 0`.
pub fn eit_height<R: Real>(spectrum: &Spectrum<R>) -> Result<R> {
    spectrum
        .index_of(R::zero())
        .map(|i| spectrum.transmission[i])
        .ok_or_else(|| Error::Grid("spectrum has no Delta = 0 point".into()))
}

/// `|<E|psi>|^2`.
pub fn collective_population_pure<R: Real>(psi: &[C<R>], e_state: &[C<R>]) -> Result<R> {
    if psi.len() != e_state.len() {
        return Err(Error::Dimension("state and collective vector differ in length".into()));
    }
    Ok(dot(e_state, psi).norm_sqr())
}

/// `<E|rho|E>`.
pub fn collective_population_density<R: Real>(rho: &DenseMatrix<R>, e_state: &[C<R>]) -> Result<R> {
    if rho.rows() != e_state.len() {
        return Err(Error::Dimension("density matrix and collective vector differ in size".into()));
    }
    Ok(dot(e_state, &rho.matvec(e_state)).re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::collective_excited_state;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn two_level(delta: f64, gamma_e: f64) -> SystemConfig<f64> {
        SystemConfig {
            delta,
            omega_c: 0.0,
            gamma_e,
            n_atoms: 1,
            ..SystemConfig::reference()
        }
    }

    #[test]
    fn single_atom_reflects_completely_on_resonance() {
        let cfg = two_level(0.0, 0.0);
        let p = scatter_point(&cfg, &AtomPlacement::chain(1), &InhomogeneousShifts::zeros(1), Truncation::One).unwrap();
        assert!((p.t_amp - cr(0.0)).norm() < 1e-12);
        assert!((p.r_amp - cr(-1.0)).norm() < 1e-12);
    }

    #[test]
    fn single_atom_lorentzian() {
        // r = -i (G1D/2) / (Delta + i (G1D + Ge)/2), t = 1 + r.
        for delta in [-3.0, -0.5, 0.0, 1.2] {
            let cfg = two_level(delta, 1.0);
            let p = scatter_point(&cfg, &AtomPlacement::new(vec![7], 200).unwrap(), &InhomogeneousShifts::zeros(1), Truncation::Two)
                .unwrap();
            let r = c(0.0, -1.0) / c(delta, 1.5);
            let phase = cis(2.0 * 7.0 * cfg.kd);
            assert!((p.r_amp - r * phase).norm() < 1e-12);
            assert!((p.t_amp - (cr(1.0) + r)).norm() < 1e-12);
        }
    }

    #[test]
    fn linear_scatterer_matches_weak_drive_solve() {
        let cfg = SystemConfig {
            n_atoms: 4,
            delta_c: 0.3,
            ..SystemConfig::reference()
        };
        let p = AtomPlacement::new(vec![1, 8, 9, 40], 200).unwrap();
        let sh = InhomogeneousShifts::new(vec![0.1, -0.2, 0.0, 0.4]);
        let ls = LinearScatterer::new(&cfg, &p, &sh).unwrap();
        for delta in [-4.0, -1.0, 0.0, 0.5, 2.5] {
            let a = ls.point(delta).unwrap();
            let b = scatter_point(&SystemConfig { delta, ..cfg.clone() }, &p, &sh, Truncation::Two).unwrap();
            assert!((a.t_amp - b.t_amp).norm() < 1e-10);
            assert!((a.r_amp - b.r_amp).norm() < 1e-10);
        }
    }

    #[test]
    fn probe_independence() {
        let cfg = SystemConfig {
            n_atoms: 3,
            delta: 0.7,
            ..SystemConfig::reference()
        };
        let p = AtomPlacement::new(vec![2, 5, 11], 200).unwrap();
        let sh = InhomogeneousShifts::zeros(3);
        let a = scatter_point(&cfg, &p, &sh, Truncation::Two).unwrap();
        let b = scatter_point(&SystemConfig { probe_amp: 2.0 * cfg.probe_amp, ..cfg.clone() }, &p, &sh, Truncation::Two).unwrap();
        assert!((a.t_amp - b.t_amp).norm() < 1e-8);
        assert!((a.r_amp - b.r_amp).norm() < 1e-8);
    }

    #[test]
    fn optical_depth_values() {
        assert!((optical_depth((-2.0f64).exp()).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(optical_depth(1.0f64).unwrap(), 0.0);
        assert!(optical_depth(0.0f64).is_err());
        assert!(optical_depth(-0.1f64).is_err());
    }

    #[test]
    fn width_recovers_synthetic_gaussian() {
        let grid = uniform_grid(-3.0f64, 3.0, 0.01).unwrap();
        let t: Vec<f64> = grid.iter().map(|d| (-d * d / 4.0).exp()).collect();
        let s = Spectrum::new(grid.clone(), t, vec![0.0; grid.len()]).unwrap();
        let fit = eit_width(&s).unwrap();
        assert!((fit.width - 2.0).abs() < 1e-6);
        assert!(fit.residual < 1e-10);
    }

    #[test]
    fn width_needs_five_points() {
        let grid = uniform_grid(-2.0f64, 2.0, 1.0).unwrap();
        let t: Vec<f64> = grid.iter().map(|d| (-d * d).exp()).collect();
        let s = Spectrum::new(grid, t, vec![0.0; 5]).unwrap();
        assert!(matches!(eit_width(&s), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn grid_snaps_zero() {
        let g = uniform_grid(-1.0, 1.0, 0.1).unwrap();
        assert_eq!(g.len(), 21);
        assert_eq!(g[10], 0.0);
        assert!(uniform_grid(1.0, 0.0, 0.1).is_err());
        assert!(uniform_grid(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn spectrum_rejects_unsorted_grid() {
        assert!(Spectrum::new(vec![0.0, 0.0], vec![1.0; 2], vec![0.0; 2]).is_err());
    }

    #[test]
    fn spectrum_csv_columns() {
        let s = Spectrum::new(vec![-1.0, 0.0], vec![0.5, 1.0], vec![0.25, 0.0])
            .unwrap()
            .with_variance(vec![0.1, 0.0])
            .unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "delta,T,R,loss,T_variance");
        assert_eq!(text.lines().nth(1).unwrap(), "-1,0.5,0.25,0.25,0.1");
    }

    #[test]
    fn collective_population_limits() {
        let b = TruncatedBasis::new(3, Truncation::Two).unwrap();
        let e: Vec<C<f64>> = collective_excited_state(&b);
        let rho = DenseMatrix::outer(&e, &e);
        assert!((collective_population_density(&rho, &e).unwrap() - 1.0).abs() < 1e-15);
        let mut g = vec![cr(0.0); b.dim()];
        g[0] = cr(1.0);
        assert_eq!(collective_population_pure(&g, &e).unwrap(), 0.0);
        assert!((collective_population_pure(&e, &e).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn decoupled_atoms_transmit() {
        let cfg = SystemConfig {
            gamma_1d: 0.0,
            n_atoms: 3,
            ..SystemConfig::reference()
        };
        let p = AtomPlacement::new(vec![0, 4, 9], 200).unwrap();
        let pt = LinearScatterer::new(&cfg, &p, &InhomogeneousShifts::zeros(3)).unwrap().point(0.3).unwrap();
        assert_eq!(pt.transmission, 1.0);
        assert_eq!(pt.reflection, 0.0);
    }

    proptest! {
        #[test]
        fn lossless_conserves_flux(
            delta in -8.0f64..8.0,
            omega_c in 0.0f64..3.0,
            gamma_1d in 0.1f64..5.0,
            kd in 0.0f64..std::f64::consts::TAU,
            sites in proptest::sample::subsequence((0usize..60).collect::<Vec<_>>(), 1..6),
        ) {
            let n = sites.len();
            let cfg = SystemConfig { delta, omega_c, gamma_1d, kd, gamma_e: 0.0, n_atoms: n, ..SystemConfig::reference() };
            let p = AtomPlacement::new(sites, 200).unwrap();
            match LinearScatterer::new(&cfg, &p, &InhomogeneousShifts::zeros(n)).unwrap().point(delta) {
                Ok(pt) => prop_assert!((pt.transmission + pt.reflection - 1.0).abs() < 1e-9),
                // Exact lossless resonances of the collective modes are singular.
                Err(Error::Singular { .. }) => {}
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            }
        }

        #[test]
        fn lossy_never_gains(
            delta in -8.0f64..8.0,
            omega_c in 0.0f64..3.0,
            sites in proptest::sample::subsequence((0usize..60).collect::<Vec<_>>(), 1..6),
        ) {
            let n = sites.len();
            let cfg = SystemConfig { delta, omega_c, kd: FRAC_PI_2, n_atoms: n, ..SystemConfig::reference() };
            let p = AtomPlacement::new(sites, 200).unwrap();
            let pt = LinearScatterer::new(&cfg, &p, &InhomogeneousShifts::zeros(n)).unwrap().point(delta).unwrap();
            prop_assert!(pt.transmission + pt.reflection <= 1.0 + 1e-9);
            prop_assert!(pt.loss >= -1e-9);
        }
    }
}
