//! Frequency-domain scattering of a Gaussian single-photon pulse.

use std::io::Write;

use serde::Serialize;

use crate::disorder::averaged_spectrum;
use crate::error::{Error, Result};
use crate::model::SystemConfig;
use crate::num::Real;
use crate::observables::{eit_width, uniform_grid, Spectrum};

/// `A(w) = (8 pi)^{1/4} / sqrt(sigma L) * exp(-(w - w0)^2 / sigma^2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct GaussianPulse<R: Real = f64> {
    /// Center detuning from the atomic resonance.
    pub omega0: R,
    pub sigma: R,
    pub length: R,
}

impl<R: Real> Default for GaussianPulse<R> {
    fn default() -> Self {
        Self {
            omega0: R::zero(),
            sigma: R::one(),
            length: R::one(),
        }
    }
}

impl<R: Real> GaussianPulse<R> {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > R::zero()) || !(self.length > R::zero()) || !self.omega0.is_finite() {
            return Err(Error::Config("pulse needs sigma > 0, length > 0 and a finite center".into()));
        }
        Ok(())
    }
}

pub fn pulse_amplitude<R: Real>(pulse: &GaussianPulse<R>, omega: R) -> R {
    let x = (omega - pulse.omega0) / pulse.sigma;
    (R::lit(8.0) * R::PI()).powf(R::lit(0.25)) / (pulse.sigma * pulse.length).sqrt() * (-x * x).exp()
}

/// Trapezoidal integral of `y` over the (possibly nonuniform) grid `x`.
pub fn trapezoid<R: Real>(x: &[R], y: &[R]) -> R {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xw, yw)| (xw[1] - xw[0]) * (yw[0] + yw[1]) * R::lit(0.5))
        .sum()
}

/// Frequency grid construction for pulse integrals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridPolicy {
    /// Grid spans `omega0 +- half_span_sigmas * sigma`.
    pub half_span_sigmas: f64,
    pub base_step: f64,
    /// Required step inside `|Delta| <= 2 w` is `w / refine_factor`.
    pub refine_factor: f64,
    pub max_refinements: usize,
    /// Largest accepted RMS residual of the EIT width fit.
    pub max_fit_residual: f64,
}

impl Default for GridPolicy {
    fn default() -> Self {
        Self {
            half_span_sigmas: 5.0,
            base_step: 0.02,
            refine_factor: 10.0,
            max_refinements: 4,
            max_fit_residual: 0.15,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PulseResult<R: Real = f64> {
    pub omega_grid: Vec<R>,
    pub incident_density: Vec<R>,
    pub transmitted_density: Vec<R>,
    pub reflected_density: Vec<R>,
    pub t_pulse: R,
    pub r_pulse: R,
    pub loss_pulse: R,
    /// EIT width used for refinement, if the spectrum has a window.
    pub eit_width: Option<R>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct PulseSummary<R: Real = f64> {
    pub t_pulse: R,
    pub r_pulse: R,
    pub loss_pulse: R,
    pub grid_points: usize,
    pub omega_min: R,
    pub omega_max: R,
    pub eit_width: Option<R>,
}

impl<R: Real> PulseResult<R> {
    pub fn summary(&self) -> PulseSummary<R> {
        PulseSummary {
            t_pulse: self.t_pulse,
            r_pulse: self.r_pulse,
            loss_pulse: self.loss_pulse,
            grid_points: self.omega_grid.len(),
            omega_min: self.omega_grid[0],
            omega_max: *self.omega_grid.last().expect("nonempty grid"),
            eit_width: self.eit_width,
        }
    }

    /// CSV with columns `omega,incident_density,transmitted_density,reflected_density`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["omega", "incident_density", "transmitted_density", "reflected_density"])?;
        for i in 0..self.omega_grid.len() {
            w.write_record(
                [
                    self.omega_grid[i],
                    self.incident_density[i],
                    self.transmitted_density[i],
                    self.reflected_density[i],
                ]
                .map(|v| v.to_string()),
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

fn merge_points<R: Real>(grid: &mut Vec<(R, R, R)>, new: Vec<(R, R, R)>) {
    grid.extend(new);
    grid.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite grid"));
    grid.dedup_by(|a, b| a.0 == b.0);
}

fn missing<R: Real>(have: &[(R, R, R)], want: Vec<R>) -> Vec<R> {
    let min_gap = R::lit(1e-12);
    want.into_iter()
        .filter(|x| {
            let i = have.partition_point(|p| p.0 < *x);
            let near = |j: usize| have.get(j).is_some_and(|p| (p.0 - *x).abs() < min_gap);
            !(near(i) || (i > 0 && near(i - 1)))
        })
        .collect()
}

/// Integrates `|A|^2 T` and `|A|^2 R` over a grid spanning the pulse and
/// refined around `Delta = 0` so that the EIT window is sampled with step
/// `<= w / refine_factor` inside `|Delta| <= 2 w`. `provider` maps a sorted
/// detuning list to `(T, R)` columns.
pub fn scatter_pulse<R, F>(pulse: &GaussianPulse<R>, provider: F, policy: &GridPolicy) -> Result<PulseResult<R>>
where
    R: Real,
    F: Fn(&[R]) -> Result<(Vec<R>, Vec<R>)>,
{
    pulse.validate()?;
    let span = pulse.sigma * R::lit(policy.half_span_sigmas);
    let (lo, hi) = (pulse.omega0 - span, pulse.omega0 + span);
    let mut want = uniform_grid(lo, hi, R::lit(policy.base_step))?;
    if lo < R::zero() && hi > R::zero() {
        want.push(R::zero());
        want.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        want.dedup();
    }
    let mut pts: Vec<(R, R, R)> = Vec::new();
    let evaluate = |pts: &mut Vec<(R, R, R)>, xs: Vec<R>| -> Result<()> {
        let mut xs = missing(pts, xs);
        xs.retain(|x| *x >= lo && *x <= hi);
        if xs.is_empty() {
            return Ok(());
        }
        xs.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        xs.dedup();
        let (t, r) = provider(&xs)?;
        if t.len() != xs.len() || r.len() != xs.len() {
            return Err(Error::Dimension("spectrum provider returned wrong length".into()));
        }
        merge_points(pts, xs.into_iter().zip(t).zip(r).map(|((x, t), r)| (x, t, r)).collect());
        Ok(())
    };
    evaluate(&mut pts, want)?;

    let has_zero = lo < R::zero() && hi > R::zero();
    let mut width = None;
    if has_zero {
        let mut resolved = false;
        for _ in 0..=policy.max_refinements {
            let spec = Spectrum::new(
                pts.iter().map(|p| p.0).collect(),
                pts.iter().map(|p| p.1).collect(),
                pts.iter().map(|p| p.2).collect(),
            )?;
            let i0 = spec.index_of(R::zero()).expect("zero inserted");
            let local_step = (spec.delta[i0 + 1] - spec.delta[i0]).max(spec.delta[i0] - spec.delta[i0 - 1]);
            match eit_width(&spec) {
                Ok(fit) => {
                    let w = fit.width;
                    let target = w / R::lit(policy.refine_factor);
                    let region = w * R::lit(2.0);
                    let max_gap = spec
                        .delta
                        .windows(2)
                        .filter(|d| d[0] >= -region && d[1] <= region)
                        .map(|d| d[1] - d[0])
                        .fold(R::zero(), R::max);
                    if max_gap <= target * R::lit(1.0 + 1e-9) {
                        if fit.residual > R::lit(policy.max_fit_residual) {
                            return Err(Error::Grid(format!(
                                "EIT window not Gaussian enough to resolve: fit residual {}",
                                fit.residual
                            )));
                        }
                        width = Some(w);
                        resolved = true;
                        break;
                    }
                    // Margin so that a slightly different refit still passes.
                    let margin = R::lit(1.25);
                    evaluate(&mut pts, uniform_grid(-region * margin, region * margin, target / margin)?)?;
                }
                Err(Error::InsufficientData(_)) => {
                    let step = local_step / R::lit(4.0);
                    evaluate(&mut pts, uniform_grid(-local_step * R::lit(4.0), local_step * R::lit(4.0), step)?)?;
                }
                // No transparency peak at Delta = 0: nothing to resolve.
                Err(Error::Domain(_)) => {
                    resolved = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if !resolved {
            return Err(Error::Grid(format!(
                "EIT window unresolved after {} refinements",
                policy.max_refinements
            )));
        }
    }

    let omega: Vec<R> = pts.iter().map(|p| p.0).collect();
    let incident: Vec<R> = omega
        .iter()
        .map(|&w| pulse_amplitude(pulse, w).powi(2) * pulse.length / (R::lit(2.0) * R::PI()))
        .collect();
    let transmitted: Vec<R> = incident.iter().zip(&pts).map(|(a, p)| *a * p.1).collect();
    let reflected: Vec<R> = incident.iter().zip(&pts).map(|(a, p)| *a * p.2).collect();
    let norm = trapezoid(&omega, &incident);
    let t_pulse = trapezoid(&omega, &transmitted) / norm;
    let r_pulse = trapezoid(&omega, &reflected) / norm;
    Ok(PulseResult {
        omega_grid: omega,
        incident_density: incident,
        transmitted_density: transmitted,
        reflected_density: reflected,
        t_pulse,
        r_pulse,
        loss_pulse: R::one() - t_pulse - r_pulse,
        eit_width: width,
    })
}

/// Disorder-averaged `(T, R)` provider over `m` samples from `seed`.
pub fn disorder_provider<R: Real>(
    config: SystemConfig<R>,
    m: usize,
    seed: u64,
) -> impl Fn(&[R]) -> Result<(Vec<R>, Vec<R>)> {
    move |grid: &[R]| {
        let s = averaged_spectrum(&config, grid, m, seed)?;
        Ok((s.transmission, s.reflection))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct LossScanRow<R: Real = f64> {
    pub gamma_1d: R,
    pub t_pulse: R,
    pub r_pulse: R,
    pub loss_pulse: R,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct LossScan<R: Real = f64> {
    pub rows: Vec<LossScanRow<R>>,
    /// Grid point with the largest loss.
    pub argmax_gamma_1d: R,
    pub max_loss: R,
    /// Vertex of the parabola through the maximum and its neighbors (equal to
    /// the grid maximum at the ends of the grid).
    pub refined_gamma_1d: R,
    pub refined_max_loss: R,
}

/// Pulse transport versus waveguide coupling. Each point uses the same
/// placements (same seed), with the probe amplitude rescaled to the default
/// for that coupling.
pub fn loss_vs_coupling_scan<R: Real>(
    template: &SystemConfig<R>,
    gamma_1d_grid: &[R],
    pulse: &GaussianPulse<R>,
    m: usize,
    seed: u64,
    policy: &GridPolicy,
) -> Result<LossScan<R>> {
    if gamma_1d_grid.is_empty() || gamma_1d_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Grid("coupling grid must be nonempty and increasing".into()));
    }
    let mut rows = Vec::with_capacity(gamma_1d_grid.len());
    for &g in gamma_1d_grid {
        let cfg = SystemConfig {
            gamma_1d: g,
            probe_amp: SystemConfig::default_probe(g),
            ..template.clone()
        };
        let res = scatter_pulse(pulse, disorder_provider(cfg, m, seed), policy)?;
        rows.push(LossScanRow {
            gamma_1d: g,
            t_pulse: res.t_pulse,
            r_pulse: res.r_pulse,
            loss_pulse: res.loss_pulse,
        });
    }
    let k = (0..rows.len())
        .max_by(|&a, &b| rows[a].loss_pulse.partial_cmp(&rows[b].loss_pulse).expect("finite loss"))
        .expect("nonempty");
    let (refined_gamma_1d, refined_max_loss) = if k > 0 && k + 1 < rows.len() {
        parabola_vertex(
            [rows[k - 1].gamma_1d, rows[k].gamma_1d, rows[k + 1].gamma_1d],
            [rows[k - 1].loss_pulse, rows[k].loss_pulse, rows[k + 1].loss_pulse],
        )
    } else {
        (rows[k].gamma_1d, rows[k].loss_pulse)
    };
    Ok(LossScan {
        argmax_gamma_1d: rows[k].gamma_1d,
        max_loss: rows[k].loss_pulse,
        rows,
        refined_gamma_1d,
        refined_max_loss,
    })
}

/// Vertex of the parabola through three points.
pub fn parabola_vertex<R: Real>(x: [R; 3], y: [R; 3]) -> (R, R) {
    let d1 = (y[1] - y[0]) / (x[1] - x[0]);
    let d2 = (y[2] - y[1]) / (x[2] - x[1]);
    let a = (d2 - d1) / (x[2] - x[0]);
    if a == R::zero() {
        return (x[1], y[1]);
    }
    let b = d1 - a * (x[0] + x[1]);
    let xv = -b / (R::lit(2.0) * a);
    let yv = y[0] + d1 * (xv - x[0]) + a * (xv - x[0]) * (xv - x[1]);
    (xv, yv)
}

pub fn write_loss_scan_csv<R: Real, W: Write>(scan: &LossScan<R>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["gamma_1d", "T_pulse", "R_pulse", "loss_pulse"])?;
    for r in &scan.rows {
        w.write_record([r.gamma_1d, r.t_pulse, r.r_pulse, r.loss_pulse].map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
