//! Second-order correlations of the output fields in the two-excitation
//! truncation.

use std::io::Write;

use serde::Serialize;

use crate::basis::{TruncatedBasis, Truncation};
use crate::disorder::{ensemble_accumulate, Accumulator};
use crate::error::{Error, Result};
use crate::hamiltonian::EffectiveModel;
use crate::linalg::SparseMatrix;
use crate::model::SystemConfig;
use crate::num::{norm, Real};
use crate::observables::{output_operator, Channel, Spectrum};
use crate::ode::OdeOptions;
use crate::steadystate::{evolve_with, solve_weak_drive};

/// Smallest `<a^+ a>^2` for which `g2` is defined.
pub const DENOMINATOR_FLOOR: f64 = 1e-30;

#[derive(Clone, Debug)]
pub struct OutputOperator<R: Real = f64> {
    pub channel: Channel,
    pub matrix: SparseMatrix<R>,
}

impl<R: Real> OutputOperator<R> {
    pub fn new(model: &EffectiveModel<R>, channel: Channel) -> Self {
        Self {
            channel,
            matrix: output_operator(model, channel),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct G2Curve<R: Real = f64> {
    pub tau_grid: Vec<R>,
    pub values: Vec<R>,
    pub channel: &'static str,
    pub delta_star: R,
}

/// 400 points on `[0, 20]`.
pub fn default_tau_grid<R: Real>() -> Vec<R> {
    linspace(R::zero(), R::lit(20.0), 400)
}

pub fn linspace<R: Real>(a: R, b: R, n: usize) -> Vec<R> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n)
            .map(|k| a + (b - a) * R::from_usize_lossy(k) / R::from_usize_lossy(n - 1))
            .collect(),
    }
}

/// Every positive `Delta` with `T = R` on a tabulated spectrum, in increasing
/// order: one per sign change of `T - R`, bisected on the linear interpolant
/// to `1e-4`.
pub fn find_tr_crossings<R: Real>(spectrum: &Spectrum<R>) -> Result<Vec<R>> {
    let f: Vec<R> = spectrum
        .transmission
        .iter()
        .zip(&spectrum.reflection)
        .map(|(t, r)| *t - *r)
        .collect();
    let d = &spectrum.delta;
    let mut out = Vec::new();
    if d.first().is_some_and(|&x| x > R::zero()) && f[0] == R::zero() {
        out.push(d[0]);
    }
    for i in 0..d.len().saturating_sub(1) {
        if !(d[i + 1] > R::zero()) {
            continue;
        }
        if f[i + 1] == R::zero() {
            out.push(d[i + 1]);
        } else if f[i] != R::zero() && (f[i] < R::zero()) != (f[i + 1] < R::zero()) {
            let (x0, x1, f0, f1) = (d[i], d[i + 1], f[i], f[i + 1]);
            let interp = |x: R| Ok((f0 + (f1 - f0) * (x - x0) / (x1 - x0), R::zero()));
            out.push(bisect_crossing(interp, x0.max(R::zero()), x1, R::lit(1e-4))?);
        }
    }
    Ok(out)
}

/// Smallest positive `Delta` with `T = R` (see [`find_tr_crossings`]).
pub fn find_tr_crossing<R: Real>(spectrum: &Spectrum<R>) -> Result<R> {
    find_tr_crossings(spectrum)?.first().copied().ok_or_else(|| Error::NoCrossing {
        lo: spectrum.delta.first().map_or(0.0, |x| x.to_f64_lossy()),
        hi: spectrum.delta.last().map_or(0.0, |x| x.to_f64_lossy()),
    })
}

/// Bisection for `T - R = 0` on `[lo, hi]`, where `eval` returns `(T, R)`
/// and the bracket has a sign change.
pub fn bisect_crossing<R: Real, F>(eval: F, lo: R, hi: R, tol: R) -> Result<R>
where
    F: Fn(R) -> Result<(R, R)>,
{
    let g = |x: R| eval(x).map(|(t, r)| t - r);
    let (mut a, mut b) = (lo, hi);
    let (mut fa, fb) = (g(a)?, g(b)?);
    if fa == R::zero() {
        return Ok(a);
    }
    if fb == R::zero() {
        return Ok(b);
    }
    if (fa < R::zero()) == (fb < R::zero()) {
        return Err(Error::NoCrossing {
            lo: lo.to_f64_lossy(),
            hi: hi.to_f64_lossy(),
        });
    }
    while b - a > tol {
        let m = (a + b) * R::lit(0.5);
        let fm = g(m)?;
        if fm == R::zero() {
            return Ok(m);
        }
        if (fm < R::zero()) == (fa < R::zero()) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok((a + b) * R::lit(0.5))
}

/// Numerator and denominator of `g2` for one channel, before division.
#[derive(Clone, Debug, PartialEq)]
pub struct G2Parts<R: Real = f64> {
    pub numerator: Vec<R>,
    pub denominator: R,
}

impl<R: Real> G2Parts<R> {
    pub fn values(&self) -> Vec<R> {
        self.numerator.iter().map(|n| *n / self.denominator).collect()
    }
}

/// `G2(tau) = |a e^{-iH tau} a psi|^2` and `<a^+ a>^2 = |a psi|^4` for the
/// normalized weak-drive steady state `psi`, with `H = h_non + h_dri`.
/// The conditional state `a psi` is normalized before evolution and the
/// norm restored afterwards; the absolute integration tolerance is scaled by
/// the squared drive amplitude.
pub fn g2_parts<R: Real>(model: &EffectiveModel<R>, channels: &[Channel], tau_grid: &[R]) -> Result<Vec<G2Parts<R>>> {
    if model.basis.max_excitations() < model.basis.n_atoms().min(2) {
        return Err(Error::Config("g2 needs at least two excitations in the basis".into()));
    }
    let ss = solve_weak_drive(model)?;
    let mut psi = ss.to_vector(model.basis.dim());
    let n = norm(&psi);
    psi.iter_mut().for_each(|v| *v = *v / n);
    let h = model.total_nonhermitian();
    // Excited amplitudes scale with the drive; keep the absolute tolerance
    // below them.
    let a = model.config.drive_amplitude().to_f64_lossy();
    let opts = OdeOptions {
        atol: 1e-12 * (a * a).clamp(1e-12, 1.0),
        ..OdeOptions::default()
    };
    channels
        .iter()
        .map(|&ch| {
            let a = output_operator(model, ch);
            let mut phi = a.matvec(&psi);
            let nphi = norm(&phi);
            let denominator = nphi.powi(4);
            if !(denominator >= R::lit(DENOMINATOR_FLOOR)) {
                return Err(Error::UndefinedCorrelation(denominator.to_f64_lossy()));
            }
            phi.iter_mut().for_each(|v| *v = *v / nphi);
            let traj = evolve_with(&h, &phi, tau_grid, &opts)?;
            let scale = nphi * nphi;
            let numerator = traj.iter().map(|p| norm(&a.matvec(p)).powi(2) * scale).collect();
            Ok(G2Parts { numerator, denominator })
        })
        .collect()
}

/// Normalized `g2` of one channel for one placement, at leading order in the probe.
pub fn g2<R: Real>(model: &EffectiveModel<R>, channel: Channel, tau_grid: &[R]) -> Result<G2Curve<R>> {
    let parts = g2_parts(model, &[channel], tau_grid)?;
    Ok(G2Curve {
        tau_grid: tau_grid.to_vec(),
        values: parts[0].values(),
        channel: channel.label(),
        delta_star: model.config.delta,
    })
}

/// [`g2`] that also recomputes at half the probe amplitude and fails when
/// any value moves by more than `1e-3` relative.
pub fn g2_checked<R: Real>(model: &EffectiveModel<R>, channel: Channel, tau_grid: &[R]) -> Result<G2Curve<R>> {
    let full = g2(model, channel, tau_grid)?;
    let half_cfg = SystemConfig {
        probe_amp: model.config.probe_amp * R::lit(0.5),
        ..model.config.clone()
    };
    let half = g2(&model.with_config(half_cfg)?, channel, tau_grid)?;
    for (a, b) in full.values.iter().zip(&half.values) {
        if (*a - *b).abs() > R::lit(1e-3) * a.abs().max(b.abs()) {
            return Err(Error::NoConvergence(format!(
                "g2 changes from {a} to {b} when the probe is halved; probe is not weak"
            )));
        }
    }
    Ok(full)
}

/// How per-placement curves are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum G2Average {
    /// Mean over samples of `numerator / denominator`.
    #[default]
    MeanOfRatios,
    /// Mean numerator over mean denominator.
    RatioOfMeans,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct G2Ensemble<R: Real = f64> {
    pub tau_grid: Vec<R>,
    pub delta_star: R,
    pub g2_t: Vec<R>,
    pub g2_r: Vec<R>,
    /// Standard errors across samples (of the per-sample ratio, or of the
    /// mean numerator divided by the mean denominator).
    pub stderr_t: Vec<R>,
    pub stderr_r: Vec<R>,
    pub m: u64,
    pub seed: u64,
}

impl<R: Real> G2Ensemble<R> {
    pub fn curve(&self, channel: Channel) -> G2Curve<R> {
        G2Curve {
            tau_grid: self.tau_grid.clone(),
            values: match channel {
                Channel::Transmitted => self.g2_t.clone(),
                Channel::Reflected => self.g2_r.clone(),
            },
            channel: channel.label(),
            delta_star: self.delta_star,
        }
    }

    /// CSV with columns `tau,g2_T,g2_R,stderr_T,stderr_R`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["tau", "g2_T", "g2_R", "stderr_T", "stderr_R"])?;
        for i in 0..self.tau_grid.len() {
            w.write_record(
                [self.tau_grid[i], self.g2_t[i], self.g2_r[i], self.stderr_t[i], self.stderr_r[i]]
                    .map(|v| v.to_string()),
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Disorder-averaged `g2` of both channels at `config.delta`, in the
/// two-excitation basis.
pub fn g2_ensemble<R: Real>(
    config: &SystemConfig<R>,
    tau_grid: &[R],
    m: usize,
    seed: u64,
    average: G2Average,
) -> Result<G2Ensemble<R>> {
    let basis = TruncatedBasis::new(config.n_atoms, Truncation::Two)?;
    let k = tau_grid.len();
    let acc = ensemble_accumulate(config, m, seed, |p, s| {
        let model = EffectiveModel::new(config.clone(), p.clone(), s.clone(), basis.clone())?;
        let parts = g2_parts(&model, &[Channel::Transmitted, Channel::Reflected], tau_grid)?;
        let mut out = Vec::with_capacity(2 * (k + 1));
        for part in &parts {
            match average {
                G2Average::MeanOfRatios => out.extend(part.values()),
                G2Average::RatioOfMeans => out.extend(part.numerator.iter().copied()),
            }
            out.push(part.denominator);
        }
        Ok(out)
    })?;
    let (t_acc, r_acc) = acc.split_at(k + 1);
    let combine = |a: &[Accumulator<R>]| -> (Vec<R>, Vec<R>) {
        let st: Vec<_> = a.iter().map(|x| x.stats(seed)).collect();
        match average {
            G2Average::MeanOfRatios => (
                st[..k].iter().map(|s| s.mean).collect(),
                st[..k].iter().map(|s| s.standard_error).collect(),
            ),
            G2Average::RatioOfMeans => {
                let den = st[k].mean;
                (
                    st[..k].iter().map(|s| s.mean / den).collect(),
                    st[..k].iter().map(|s| s.standard_error / den).collect(),
                )
            }
        }
    };
    let (g2_t, stderr_t) = combine(t_acc);
    let (g2_r, stderr_r) = combine(r_acc);
    Ok(G2Ensemble {
        tau_grid: tau_grid.to_vec(),
        delta_star: config.delta,
        g2_t,
        g2_r,
        stderr_t,
        stderr_r,
        m: m as u64,
        seed,
    })
}

/// Number of strict interior local extrema of `values` among indices whose
/// `tau` lies in `(lo, hi]`.
pub fn count_local_extrema<R: Real>(tau: &[R], values: &[R], lo: R, hi: R) -> usize {
    (1..values.len().saturating_sub(1))
        .filter(|&i| tau[i] > lo && tau[i] <= hi)
        .filter(|&i| {
            let (a, b, c) = (values[i - 1], values[i], values[i + 1]);
            (b > a && b > c) || (b < a && b < c)
        })
        .count()
}
