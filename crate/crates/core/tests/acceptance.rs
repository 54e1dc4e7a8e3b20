//! Acceptance suite: one line per criterion, non-zero exit on any failure.
//!
//! Run a subset with `cargo test -p wqed-core --test acceptance -- 3 7`.

use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use wqed_core::basis::{collective_excited_state, TruncatedBasis, Truncation};
use wqed_core::correlation::{count_local_extrema, default_tau_grid, find_tr_crossing, g2, g2_ensemble, G2Average};
use wqed_core::disorder::{
    averaged_spectrum, draw_sample, ensemble_accumulate, ensemble_average, ensemble_eit_width, optical_depth_scan,
    sample_rng, variance_spectrum,
};
use wqed_core::lindblad::{master_scatter_point, steady_state_master};
use wqed_core::observables::{collective_population_density, observables_from_density, scatter_point, uniform_grid, Channel, LinearScatterer};
use wqed_core::pulse::{loss_vs_coupling_scan, scatter_pulse, disorder_provider, GaussianPulse, GridPolicy};
use wqed_core::{AtomPlacement, Config, Model, Result, Shifts};

const SEED: u64 = 20_160_701;

struct Check {
    pass: bool,
    detail: String,
}

impl Check {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

fn fig3(omega_c: f64) -> Config {
    Config {
        omega_c,
        ..Config::reference()
    }
}

fn r_squared(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    sxy * sxy / (sxx * syy)
}

fn crit1() -> Result<Check> {
    let cfg = Config {
        n_atoms: 1,
        n_sites: 1,
        omega_c: 0.0,
        gamma_e: 0.0,
        ..Config::reference()
    };
    let p = scatter_point(&cfg, &AtomPlacement::chain(1), &Shifts::zeros(1), Truncation::One)?;
    let pass = p.transmission.abs() < 1e-9 && (p.reflection - 1.0).abs() < 1e-9;
    Ok(Check::new(pass, format!("T = {:.3e}, R = {:.12}", p.transmission, p.reflection)))
}

fn crit2() -> Result<Check> {
    let mut worst = 0.0f64;
    for omega_c in [0.5, 2.0] {
        let cfg = fig3(omega_c);
        for i in 0..100 {
            let (p, s) = draw_sample(&cfg, SEED, i)?;
            let pt = scatter_point(&cfg, &p, &s, Truncation::One)?;
            worst = worst.max((pt.transmission - 1.0).abs()).max(pt.reflection.abs());
        }
    }
    Ok(Check::new(worst < 1e-6, format!("max(|T-1|, R) over 2x100 placements = {worst:.2e}")))
}

fn crit3() -> Result<Check> {
    let cfg = Config {
        gamma_1d: 0.05,
        probe_amp: Config::default_probe(0.05),
        omega_c: 0.0,
        ..Config::reference()
    };
    let rows = optical_depth_scan(&cfg, &[10, 20, 40, 60], 10_000, SEED)?;
    let mut pass = true;
    let mut parts = Vec::new();
    for r in &rows {
        let rel = (r.depth - r.predicted).abs() / r.predicted;
        pass &= rel < 0.1;
        parts.push(format!("n={} D={:.4} (2n*G1D={:.2}, {:.1}%)", r.n_atoms, r.depth, r.predicted, 100.0 * rel));
    }
    Ok(Check::new(pass, parts.join("; ")))
}

fn crit4() -> Result<Check> {
    let pulse = GaussianPulse::default();
    let policy = GridPolicy::default();
    let mut pass = true;
    let mut parts = Vec::new();
    for (omega_c, expected) in [(2.0, 0.759), (1.0, 0.302), (0.5, 0.082)] {
        let res = scatter_pulse(&pulse, disorder_provider(fig3(omega_c), 1000, SEED), &policy)?;
        pass &= (res.t_pulse - expected).abs() <= 0.02;
        parts.push(format!("Omega_c={omega_c}: T_pulse={:.2}% (target {:.1}%)", 100.0 * res.t_pulse, 100.0 * expected));
    }
    Ok(Check::new(pass, parts.join("; ")))
}

fn crit5() -> Result<Check> {
    let grid = uniform_grid(3.0, 9.0, 0.5)?;
    let scan = loss_vs_coupling_scan(&fig3(2.0), &grid, &GaussianPulse::default(), 1000, SEED, &GridPolicy::default())?;
    let pass = (scan.refined_max_loss - 0.197).abs() <= 0.02 && (scan.refined_gamma_1d - 5.75).abs() <= 0.5;
    Ok(Check::new(
        pass,
        format!(
            "max loss {:.2}% at Gamma_1D = {:.3} (grid max {:.2}% at {:.1})",
            100.0 * scan.refined_max_loss,
            scan.refined_gamma_1d,
            100.0 * scan.max_loss,
            scan.argmax_gamma_1d
        ),
    ))
}

fn crit6() -> Result<Check> {
    let m = 200;
    let (mut x1, mut y1) = (Vec::new(), Vec::new());
    for omega_c in [1.0, 1.5, 2.0, 2.5, 3.0] {
        let cfg = fig3(omega_c);
        let (fit, _) = ensemble_eit_width(&cfg, m, SEED)?;
        x1.push(omega_c * omega_c / cfg.gamma_1d);
        y1.push(fit.width);
    }
    let (mut x2, mut y2) = (Vec::new(), Vec::new());
    for n in [5, 10, 20, 40] {
        let cfg = Config {
            n_atoms: n,
            ..fig3(2.0)
        };
        let (fit, _) = ensemble_eit_width(&cfg, m, SEED)?;
        x2.push(1.0 / (n as f64).sqrt());
        y2.push(fit.width);
    }
    let (ra, rb) = (r_squared(&x1, &y1), r_squared(&x2, &y2));
    let fmt = |v: &[f64]| v.iter().map(|w| format!("{w:.3}")).collect::<Vec<_>>().join(",");
    Ok(Check::new(
        ra > 0.99 && rb > 0.99,
        format!(
            "R^2 vs Omega_c^2/Gamma_1D = {ra:.4} (w = {}); R^2 vs 1/sqrt(n) = {rb:.4} (w = {})",
            fmt(&y1),
            fmt(&y2)
        ),
    ))
}

/// Steady state of the dephasing-only master equation, two-excitation basis.
fn master_point(cfg: &Config, p: &AtomPlacement, truncation: Truncation) -> Result<(f64, f64, f64)> {
    let basis = TruncatedBasis::new(cfg.n_atoms, truncation)?;
    let e = collective_excited_state(&basis);
    let model = Model::new(cfg.clone(), p.clone(), Shifts::zeros(cfg.n_atoms), basis)?;
    let rho = steady_state_master(&model)?;
    let pt = observables_from_density(rho.matrix(), &model)?;
    let pe = collective_population_density(rho.matrix(), &e)?;
    Ok((pt.transmission, pt.reflection, pe))
}

fn crit7() -> Result<Check> {
    // n = 5 stands in for n = 10, whose density matrix is too large; the two-excitation
    // truncation is first checked against the full space at n = 3.
    let dephased = |n: usize, gamma_t: f64| Config {
        n_atoms: n,
        gamma_d: gamma_t,
        gamma_p: 0.0,
        ..fig3(2.0)
    };
    let small = dephased(3, 1.0);
    let (p3, _) = draw_sample(&small, SEED, 0)?;
    let full = master_point(&small, &p3, Truncation::Full)?;
    let trunc = master_point(&small, &p3, Truncation::Two)?;
    let trunc_err = (full.0 - trunc.0).abs().max((full.1 - trunc.1).abs());

    let placements = 3;
    let rates = [0.0, 0.3, 0.5, 1.0, 1.5, 3.5];
    let mut t0 = vec![0.0; rates.len()];
    let mut r0 = vec![0.0; rates.len()];
    let mut pe = vec![0.0; rates.len()];
    for i in 0..placements {
        let (p, _) = draw_sample(&dephased(5, 0.0), SEED, i)?;
        for (k, &g) in rates.iter().enumerate() {
            let (t, r, e) = master_point(&dephased(5, g), &p, Truncation::Two)?;
            t0[k] += t / placements as f64;
            r0[k] += r / placements as f64;
            pe[k] += e / placements as f64;
        }
    }
    let at = |v: &[f64], g: f64| v[rates.iter().position(|&x| x == g).expect("rate on grid")];
    let ta: Vec<f64> = [0.0, 0.3, 1.0, 3.5].iter().map(|&g| at(&t0, g)).collect();
    let pc: Vec<f64> = [0.0, 0.5, 1.0, 1.5].iter().map(|&g| at(&pe, g)).collect();
    let a = ta.windows(2).all(|w| w[1] < w[0]);
    let b = at(&r0, 3.5) > 0.01;
    let c = pc.windows(2).all(|w| w[1] > w[0]);
    Ok(Check::new(
        a && b && c && trunc_err < 1e-6,
        format!(
            "n=5 (substituted for n=10), {placements} placements; (a) T(0) = {:.4?}; (b) R(0) = {:.4} at 3.5; \
             (c) P_E = {:?}; truncation vs full at n=3: {trunc_err:.1e}",
            ta,
            at(&r0, 3.5),
            pc.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>()
        ),
    ))
}

fn crit8() -> Result<Check> {
    let grid = uniform_grid(-5.0, 5.0, 0.5)?;
    let mut worst = 0.0f64;
    for n in 1..=3 {
        let base = Config {
            n_atoms: n,
            ..fig3(2.0)
        };
        let (p, s) = draw_sample(&base, SEED, n as u64)?;
        for &d in &grid {
            let cfg = Config { delta: d, ..base.clone() };
            let nh = scatter_point(&cfg, &p, &s, Truncation::One)?;
            let basis = TruncatedBasis::new(n, Truncation::Full)?;
            let me = master_scatter_point(&Model::new(cfg.clone(), p.clone(), s.clone(), basis)?)?;
            worst = worst
                .max((nh.transmission - me.transmission).abs())
                .max((nh.reflection - me.reflection).abs());
        }
    }
    Ok(Check::new(worst < 1e-6, format!("max |dT|, |dR| over n=1..3 x 21 detunings = {worst:.2e}")))
}

fn crit9() -> Result<Check> {
    let mut h = Vec::new();
    for sigma in [0.0, 0.5, 2.0, 5.0] {
        let cfg = Config {
            sigma_ih: sigma,
            ..fig3(2.0)
        };
        let st = ensemble_average(
            &cfg,
            |p, s| LinearScatterer::new(&cfg, p, s)?.point(0.0).map(|x| x.transmission),
            10_000,
            SEED,
        )?;
        h.push(st.mean);
    }
    let pass = h.windows(2).all(|w| w[1] <= w[0]) && (h[0] - 1.0).abs() < 1e-6 && h[3] < 0.05;
    Ok(Check::new(pass, format!("H(0, 0.5, 2, 5) = {h:.4?}")))
}

fn crit10() -> Result<Check> {
    let m = 1000;
    let cfg = fig3(2.0);
    let grid = uniform_grid(-30.0, 30.0, 0.1)?;
    let v = variance_spectrum(&cfg, &grid, m, SEED)?;
    // Standard error of each s^2 from the spread of (T - mean)^2.
    let means: Vec<f64> = v.iter().map(|p| p.mean_t).collect();
    let sq = ensemble_accumulate(&cfg, m, SEED, |p, s| {
        let ls = LinearScatterer::new(&cfg, p, s)?;
        grid.iter()
            .zip(&means)
            .map(|(&d, mu)| ls.point(d).map(|x| (x.transmission - mu).powi(2)))
            .collect()
    })?;
    let se: Vec<f64> = sq.iter().map(|a| a.stats(SEED).standard_error).collect();

    let i0 = grid.iter().position(|&d| d == 0.0).expect("grid has 0");
    let s0 = v[i0].var_t;
    let window = |c: f64| {
        v.iter()
            .filter(|p| (p.delta - c).abs() <= 0.2 + 1e-9)
            .map(|p| p.var_t)
            .fold(0.0f64, f64::max)
    };
    let (wp, wm) = (window(cfg.omega_c), window(-cfg.omega_c));
    let mut worst_z = 0.0f64;
    for k in 0..grid.len() {
        let j = grid.len() - 1 - k;
        let diff = (v[k].var_t - v[j].var_t).abs();
        let bound = (se[k].powi(2) + se[j].powi(2)).sqrt();
        if diff > 0.0 {
            worst_z = worst_z.max(if bound > 0.0 { diff / bound } else { f64::INFINITY });
        }
    }

    let band = uniform_grid(-30.0, 30.0, 0.5)?
        .into_iter()
        .filter(|d: &f64| d.abs() >= 12.0)
        .collect::<Vec<_>>();
    let mut band_avg = Vec::new();
    for n in [10, 20, 40, 60] {
        let c = Config { n_atoms: n, ..cfg.clone() };
        let b = variance_spectrum(&c, &band, m, SEED)?;
        band_avg.push(b.iter().map(|p| p.var_t).sum::<f64>() / b.len() as f64);
    }
    let pass = s0 < 1e-10
        && wp < 1e-6
        && wm < 1e-6
        && worst_z <= 3.0
        && band_avg.windows(2).all(|w| w[1] > w[0]);
    Ok(Check::new(
        pass,
        format!(
            "s2(0) = {s0:.1e}; max s2 within 0.2 of +/-Omega_c = {wp:.1e}, {wm:.1e}; \
             max asymmetry = {worst_z:.2} SE; band s2 (n=10,20,40,60) = {:?}",
            band_avg.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>()
        ),
    ))
}

fn crit11() -> Result<Check> {
    let tau = default_tau_grid::<f64>();
    let mut worst = 0.0f64;
    for omega_c in [0.5, 2.0] {
        let cfg = fig3(omega_c);
        let basis = TruncatedBasis::new(cfg.n_atoms, Truncation::Two)?;
        for i in 0..5 {
            let (p, s) = draw_sample(&cfg, SEED, i)?;
            let model = Model::new(cfg.clone(), p, s, basis.clone())?;
            let curve = g2(&model, Channel::Transmitted, &tau)?;
            worst = curve.values.iter().fold(worst, |w, v| w.max((v - 1.0).abs()));
        }
    }
    Ok(Check::new(worst < 1e-3, format!("max |g2_T - 1| over 2x5 placements = {worst:.2e}")))
}

fn crit12() -> Result<Check> {
    let tau = default_tau_grid::<f64>();
    let grid = uniform_grid(0.0, 10.0, 0.01)?;
    let mut pass = true;
    let mut parts = Vec::new();
    for omega_c in [0.5, 2.0] {
        let cfg = fig3(omega_c);
        let spectrum = averaged_spectrum(&cfg, &grid, 1000, SEED)?;
        let delta_star = find_tr_crossing(&spectrum)?;
        let ens = g2_ensemble(&Config { delta: delta_star, ..cfg }, &tau, 1000, SEED, G2Average::MeanOfRatios)?;
        let bunched = ens.g2_t[0] > 1.0 && ens.g2_r[0] > 1.0;
        let r_min = ens.g2_r.iter().copied().fold(f64::INFINITY, f64::min);
        let t_min = ens.g2_t.iter().copied().fold(f64::INFINITY, f64::min);
        let beats = count_local_extrema(&tau, &ens.g2_r, 0.0, 10.0);
        let antibunched = omega_c != 2.0 || t_min < 1.0;
        pass &= bunched && r_min >= 1.0 && antibunched && beats >= 2;
        parts.push(format!(
            "Omega_c={omega_c}: Delta*={delta_star:.4}, g2_T(0)={:.3}, g2_R(0)={:.3}, min g2_R={r_min:.4}, \
             min g2_T={t_min:.4}, g2_R extrema={beats}",
            ens.g2_t[0], ens.g2_r[0]
        ));
    }
    Ok(Check::new(pass, parts.join("; ")))
}

fn crit13() -> Result<Check> {
    let mut rng = sample_rng(SEED, u64::MAX);
    let (mut lossless, mut excess) = (0.0f64, f64::NEG_INFINITY);
    for gamma_e in [0.0, 1.0] {
        let base = Config {
            gamma_e,
            ..fig3(2.0)
        };
        for i in 0..1000 {
            let (p, s) = draw_sample(&base, SEED, i)?;
            let delta = rng.random_range(-10.0..10.0);
            let pt = LinearScatterer::new(&base, &p, &s)?.point(delta)?;
            let sum = pt.transmission + pt.reflection;
            if gamma_e == 0.0 {
                lossless = lossless.max((sum - 1.0).abs());
            } else {
                excess = excess.max(sum - 1.0);
            }
        }
    }
    Ok(Check::new(
        lossless < 1e-9 && excess <= 1e-9,
        format!("lossless max |T+R-1| = {lossless:.1e}; lossy max T+R-1 = {excess:.2e}"),
    ))
}

type Criterion = (u32, &'static str, fn() -> Result<Check>);

const CRITERIA: [Criterion; 13] = [
    (1, "single-atom complete reflection", crit1),
    (2, "EIT exact transparency", crit2),
    (3, "optical-depth law", crit3),
    (4, "Gaussian-pulse peak transmissions", crit4),
    (5, "pulse loss maximum", crit5),
    (6, "EIT width scaling", crit6),
    (7, "decoherence suite", crit7),
    (8, "master equation vs non-Hermitian solver", crit8),
    (9, "inhomogeneous broadening", crit9),
    (10, "variance structure", crit10),
    (11, "fluorescence quenching", crit11),
    (12, "off-resonant correlations", crit12),
    (13, "flux conservation", crit13),
];

fn main() -> ExitCode {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, run) in CRITERIA {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match run() {
            Ok(c) => (c.pass, c.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {} {name}: {detail} [{:.1} s]",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

