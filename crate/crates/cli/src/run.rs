//! One function per subcommand. Each writes its CSVs into the output
//! directory and returns a JSON summary for the manifest.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use rayon::prelude::*;
use serde_json::{json, Value};
use wqed_core::basis::{collective_excited_state, TruncatedBasis, Truncation};
use wqed_core::correlation::{default_tau_grid, find_tr_crossings, g2_ensemble, G2Average};
use wqed_core::disorder::{
    averaged_spectrum, draw_sample, ensemble_eit_width, optical_depth_scan, variance_spectrum, write_depth_csv,
    write_variance_csv,
};
use wqed_core::lindblad::{evolve_master, steady_state_master, trajectory_observables, DensityMatrix};
use wqed_core::observables::{collective_population_density, eit_height, observables_from_density, uniform_grid, Spectrum};
use wqed_core::pulse::{
    disorder_provider, loss_vs_coupling_scan, scatter_pulse, write_loss_scan_csv, GaussianPulse, GridPolicy,
};
use wqed_core::{Config, Error, Model, Result};

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
pub enum Basis {
    Full,
    Two,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
pub enum Vary {
    OmegaC,
    N,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl GridSpec {
    const fn new(start: f64, stop: f64, step: f64) -> Self {
        Self { start, stop, step }
    }

    fn points(&self) -> Result<Vec<f64>> {
        uniform_grid(self.start, self.stop, self.step)
    }
}

pub fn parse_grid(s: &str) -> std::result::Result<GridSpec, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, c] = parts.as_slice() else {
        return Err(format!("expected start:stop:step, got {s:?}"));
    };
    let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}"));
    let g = GridSpec::new(num(a)?, num(b)?, num(c)?);
    g.points().map_err(|e| e.to_string())?;
    Ok(g)
}

pub struct Ctx {
    pub config: Config,
    pub seed: u64,
    pub out: PathBuf,
}

pub struct PlotSpec {
    pub x: &'static str,
    pub ys: Vec<&'static str>,
    pub title: String,
}

pub struct Artifact {
    pub file: String,
    pub plot: PlotSpec,
}

pub struct Outcome {
    pub samples: usize,
    pub artifacts: Vec<Artifact>,
    pub results: Value,
}

impl Ctx {
    fn write<F>(&self, file: &str, body: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<()>,
    {
        let mut w = BufWriter::new(File::create(self.out.join(file))?);
        body(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

fn artifact(file: &str, x: &'static str, ys: &[&'static str], title: &str) -> Artifact {
    Artifact {
        file: file.into(),
        plot: PlotSpec {
            x,
            ys: ys.to_vec(),
            title: title.into(),
        },
    }
}

/// Least-squares line `y = a x + b` and its coefficient of determination.
fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx, sxy * sxy / (sxx * syy))
}

pub fn spectrum(ctx: &Ctx, grid: Option<GridSpec>, m: Option<usize>) -> Result<Outcome> {
    let m = m.unwrap_or(1000);
    let grid = grid.unwrap_or(GridSpec::new(-10.0, 10.0, 0.05)).points()?;
    let s = averaged_spectrum(&ctx.config, &grid, m, ctx.seed)?;
    ctx.write("spectrum.csv", |w| s.write_csv(w))?;
    Ok(Outcome {
        samples: m,
        artifacts: vec![artifact("spectrum.csv", "delta", &["T", "R"], "Averaged transmission and reflection")],
        results: json!({ "points": s.len(), "T_at_zero": eit_height(&s).ok() }),
    })
}

pub fn variance(ctx: &Ctx, grid: Option<GridSpec>, m: Option<usize>) -> Result<Outcome> {
    let m = m.unwrap_or(1000);
    let grid = grid.unwrap_or(GridSpec::new(-30.0, 30.0, 0.1)).points()?;
    let v = variance_spectrum(&ctx.config, &grid, m, ctx.seed)?;
    ctx.write("variance.csv", |w| write_variance_csv(&v, w))?;
    let peak = v
        .iter()
        .max_by(|a, b| a.var_t.total_cmp(&b.var_t))
        .map(|p| json!({ "delta": p.delta, "var_T": p.var_t }));
    Ok(Outcome {
        samples: m,
        artifacts: vec![artifact("variance.csv", "delta", &["var_T"], "Transmission variance")],
        results: json!({ "points": v.len(), "max_variance": peak }),
    })
}

pub fn pulse(
    ctx: &Ctx,
    [omega0, sigma, length]: [f64; 3],
    center_grid: Option<GridSpec>,
    coupling_grid: Option<GridSpec>,
    m: Option<usize>,
) -> Result<Outcome> {
    let m = m.unwrap_or(1000);
    let pulse = GaussianPulse { omega0, sigma, length };
    pulse.validate()?;
    let policy = GridPolicy::default();
    let res = scatter_pulse(&pulse, disorder_provider(ctx.config.clone(), m, ctx.seed), &policy)?;
    ctx.write("pulse.csv", |w| res.write_csv(w))?;
    let mut artifacts = vec![artifact(
        "pulse.csv",
        "omega",
        &["incident_density", "transmitted_density", "reflected_density"],
        "Pulse spectra",
    )];
    let mut results = json!({ "pulse": res.summary() });

    if let Some(g) = center_grid {
        let rows = g
            .points()?
            .into_iter()
            .map(|w0| {
                let p = GaussianPulse { omega0: w0, ..pulse };
                scatter_pulse(&p, disorder_provider(ctx.config.clone(), m, ctx.seed), &policy).map(|r| (w0, r))
            })
            .collect::<Result<Vec<_>>>()?;
        ctx.write("pulse_scan.csv", |w| {
            let mut w = csv::Writer::from_writer(w);
            w.write_record(["omega0", "T_pulse", "R_pulse", "loss_pulse"])?;
            for (w0, r) in &rows {
                w.write_record([*w0, r.t_pulse, r.r_pulse, r.loss_pulse].map(|v| v.to_string()))?;
            }
            w.flush()?;
            Ok(())
        })?;
        artifacts.push(artifact(
            "pulse_scan.csv",
            "omega0",
            &["T_pulse", "R_pulse", "loss_pulse"],
            "Pulse transport versus center frequency",
        ));
    }
    if let Some(g) = coupling_grid {
        let scan = loss_vs_coupling_scan(&ctx.config, &g.points()?, &pulse, m, ctx.seed, &policy)?;
        ctx.write("loss_scan.csv", |w| write_loss_scan_csv(&scan, w))?;
        artifacts.push(artifact(
            "loss_scan.csv",
            "gamma_1d",
            &["T_pulse", "R_pulse", "loss_pulse"],
            "Pulse transport versus waveguide coupling",
        ));
        results["loss_maximum"] = json!({
            "gamma_1d": scan.refined_gamma_1d,
            "loss": scan.refined_max_loss,
            "grid_gamma_1d": scan.argmax_gamma_1d,
            "grid_loss": scan.max_loss,
        });
    }
    Ok(Outcome {
        samples: m,
        artifacts,
        results,
    })
}

pub fn master(ctx: &Ctx, basis: Basis, grid: Option<GridSpec>, times: Option<GridSpec>, m: Option<usize>) -> Result<Outcome> {
    let m = m.unwrap_or(1);
    let truncation = match basis {
        Basis::Full => Truncation::Full,
        Basis::Two => Truncation::Two,
    };
    let cfg = &ctx.config;
    let basis = TruncatedBasis::new(cfg.n_atoms, truncation)?;
    let e_state = collective_excited_state::<f64>(&basis);
    let samples = (0..m as u64)
        .map(|i| draw_sample(cfg, ctx.seed, i))
        .collect::<Result<Vec<_>>>()?;
    let model_at = |delta: f64, i: usize| {
        let (p, s) = &samples[i];
        Model::new(Config { delta, ..cfg.clone() }, p.clone(), s.clone(), basis.clone())
    };
    let sample_err = |i: usize| {
        let seed = ctx.seed;
        move |e: Error| match e {
            Error::Config(_) | Error::TooLarge(_) => e,
            e => Error::Sample {
                index: i as u64,
                seed,
                source: Box::new(e),
            },
        }
    };

    let grid = grid.unwrap_or(GridSpec::new(-10.0, 10.0, 0.5)).points()?;
    let steady = grid
        .par_iter()
        .map(|&d| {
            let (mut t, mut r, mut pe) = (0.0, 0.0, 0.0);
            for i in 0..m {
                let run = || -> Result<_> {
                    let model = model_at(d, i)?;
                    let rho = steady_state_master(&model)?;
                    let pt = observables_from_density(rho.matrix(), &model)?;
                    Ok((pt.transmission, pt.reflection, collective_population_density(rho.matrix(), &e_state)?))
                };
                let (a, b, c) = run().map_err(sample_err(i))?;
                t += a / m as f64;
                r += b / m as f64;
                pe += c / m as f64;
            }
            Ok((t, r, pe))
        })
        .collect::<Result<Vec<_>>>()?;
    let spectrum = Spectrum::new(
        grid.clone(),
        steady.iter().map(|x| x.0).collect(),
        steady.iter().map(|x| x.1).collect(),
    )?;
    ctx.write("master_spectrum.csv", |w| spectrum.write_csv(w))?;

    let t_grid = times.unwrap_or(GridSpec::new(0.0, 20.0, 0.1)).points()?;
    let trajectories = (0..m)
        .into_par_iter()
        .map(|i| {
            let run = || -> Result<_> {
                let model = model_at(cfg.delta, i)?;
                let states = evolve_master(&model, &DensityMatrix::ground(model.basis.dim()), &t_grid)?;
                trajectory_observables(&model, &t_grid, &states)
            };
            run().map_err(sample_err(i))
        })
        .collect::<Result<Vec<_>>>()?;
    ctx.write("trajectory.csv", |w| {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["t", "P_E", "T", "R"])?;
        for (k, &t) in t_grid.iter().enumerate() {
            let avg = |f: &dyn Fn(usize) -> f64| (0..m).map(f).sum::<f64>() / m as f64;
            let row = [
                t,
                avg(&|i| trajectories[i][k].collective_population),
                avg(&|i| trajectories[i][k].transmission),
                avg(&|i| trajectories[i][k].reflection),
            ];
            w.write_record(row.map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    })?;
    let at_delta = grid.iter().position(|&d| d == cfg.delta).map(|k| {
        json!({ "delta": cfg.delta, "T": steady[k].0, "R": steady[k].1, "P_E": steady[k].2 })
    });
    Ok(Outcome {
        samples: m,
        artifacts: vec![
            artifact("master_spectrum.csv", "delta", &["T", "R"], "Steady-state transmission and reflection"),
            artifact("trajectory.csv", "t", &["P_E"], "Collective excitation population"),
        ],
        results: json!({
            "basis_dim": basis.dim(),
            "steady_state_at_config_delta": at_delta,
        }),
    })
}

pub fn g2(
    ctx: &Ctx,
    grid: Option<GridSpec>,
    tau_grid: Option<GridSpec>,
    delta_star: Option<f64>,
    crossing: usize,
    ratio_of_means: bool,
    m: Option<usize>,
) -> Result<Outcome> {
    let m = m.unwrap_or(1000);
    let mut artifacts = Vec::new();
    let mut crossings = Vec::new();
    let delta_star = match delta_star {
        Some(d) => d,
        None => {
            let grid = grid.unwrap_or(GridSpec::new(0.0, 10.0, 0.01)).points()?;
            let s = averaged_spectrum(&ctx.config, &grid, m, ctx.seed)?;
            ctx.write("crossing_spectrum.csv", |w| s.write_csv(w))?;
            artifacts.push(artifact("crossing_spectrum.csv", "delta", &["T", "R"], "Spectrum searched for T = R"));
            crossings = find_tr_crossings(&s)?;
            if crossing == 0 {
                return Err(Error::Config("crossings are counted from 1".into()));
            }
            *crossings.get(crossing - 1).ok_or(Error::NoCrossing {
                lo: grid[0],
                hi: grid[grid.len() - 1],
            })?
        }
    };
    let tau = match tau_grid {
        Some(g) => g.points()?,
        None => default_tau_grid(),
    };
    let average = if ratio_of_means {
        G2Average::RatioOfMeans
    } else {
        G2Average::MeanOfRatios
    };
    let cfg = Config {
        delta: delta_star,
        ..ctx.config.clone()
    };
    let ens = g2_ensemble(&cfg, &tau, m, ctx.seed, average)?;
    ctx.write("g2.csv", |w| ens.write_csv(w))?;
    artifacts.push(artifact("g2.csv", "tau", &["g2_T", "g2_R"], "Second-order correlation"));
    Ok(Outcome {
        samples: m,
        artifacts,
        results: json!({
            "delta_star": delta_star,
            "crossings": crossings,
            "average": format!("{average:?}"),
            "g2_T_0": ens.g2_t[0],
            "g2_R_0": ens.g2_r[0],
        }),
    })
}

pub fn depth_scan(ctx: &Ctx, n_list: &[usize], m: Option<usize>) -> Result<Outcome> {
    let m = m.unwrap_or(10_000);
    let rows = optical_depth_scan(&ctx.config, n_list, m, ctx.seed)?;
    ctx.write("depth.csv", |w| write_depth_csv(&rows, w))?;
    let x: Vec<f64> = rows.iter().map(|r| r.n_atoms as f64).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.depth).collect();
    let fit = (rows.len() >= 2).then(|| {
        let (slope, intercept, r2) = linear_fit(&x, &y);
        json!({ "slope": slope, "intercept": intercept, "r2": r2 })
    });
    Ok(Outcome {
        samples: m,
        artifacts: vec![artifact("depth.csv", "n", &["D", "D_predicted"], "Optical depth")],
        results: json!({
            "fit": fit,
            "predicted_slope": 2.0 * ctx.config.gamma_1d / ctx.config.gamma_e,
        }),
    })
}

pub fn width_scan(ctx: &Ctx, vary: Vary, values: &[f64], m: Option<usize>) -> Result<Outcome> {
    let m = m.unwrap_or(200);
    let values = match (values.is_empty(), vary) {
        (false, _) => values.to_vec(),
        (true, Vary::OmegaC) => vec![1.0, 1.5, 2.0, 2.5, 3.0],
        (true, Vary::N) => vec![5.0, 10.0, 20.0, 40.0],
    };
    let mut rows = Vec::new();
    for &v in &values {
        let (cfg, x) = match vary {
            Vary::OmegaC => (
                Config {
                    omega_c: v,
                    ..ctx.config.clone()
                },
                v * v / ctx.config.gamma_1d,
            ),
            Vary::N => {
                if v < 1.0 || v.fract() != 0.0 {
                    return Err(Error::Config(format!("atom number must be a positive integer, got {v}")));
                }
                (
                    Config {
                        n_atoms: v as usize,
                        ..ctx.config.clone()
                    },
                    1.0 / v.sqrt(),
                )
            }
        };
        let (fit, _) = ensemble_eit_width(&cfg, m, ctx.seed)?;
        rows.push((v, x, fit));
    }
    let label = match vary {
        Vary::OmegaC => "omega_c",
        Vary::N => "n",
    };
    ctx.write("width.csv", |w| {
        let mut w = csv::Writer::from_writer(w);
        w.write_record([label, "x", "width", "fit_residual", "fit_points"])?;
        for (v, x, f) in &rows {
            w.write_record([v.to_string(), x.to_string(), f.width.to_string(), f.residual.to_string(), f.points.to_string()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    let x: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.2.width).collect();
    let fit = (rows.len() >= 2).then(|| {
        let (slope, intercept, r2) = linear_fit(&x, &y);
        json!({ "slope": slope, "intercept": intercept, "r2": r2 })
    });
    let x_desc = match vary {
        Vary::OmegaC => "omega_c^2/gamma_1d",
        Vary::N => "1/sqrt(n)",
    };
    Ok(Outcome {
        samples: m,
        artifacts: vec![artifact("width.csv", "x", &["width"], &format!("EIT width versus {x_desc}"))],
        results: json!({ "x": x_desc, "fit": fit }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_spec_parsing() {
        let g = parse_grid("-1:1:0.5").unwrap();
        assert_eq!(g, GridSpec::new(-1.0, 1.0, 0.5));
        assert_eq!(g.points().unwrap(), [-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert!(parse_grid("1:2").is_err());
        assert!(parse_grid("a:1:0.1").is_err());
        assert!(parse_grid("0:1:-0.1").is_err());
    }

    #[test]
    fn exact_line_fit() {
        let x = [1.0, 2.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 0.1 * v - 0.3).collect();
        let (a, b, r2) = linear_fit(&x, &y);
        assert!((a - 0.1).abs() < 1e-14 && (b + 0.3).abs() < 1e-14);
        assert!((r2 - 1.0).abs() < 1e-12);
    }
}
