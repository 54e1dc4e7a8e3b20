//! Random placements and shifts, disorder averages and variance statistics.

use std::io::Write;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{AtomPlacement, InhomogeneousShifts, SystemConfig};
use crate::num::Real;
use crate::observables::{eit_width, optical_depth, uniform_grid, LinearScatterer, Spectrum, WidthFit};

/// Samples per work unit; partial results are merged in unit order so the
/// outcome does not depend on the thread count.
pub const CHUNK: usize = 16;

/// Independent generator for one sample: the master seed selects the key,
/// the sample index the stream.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniformly random `n`-subset of `0..n_sites`, sorted.
pub fn sample_placement<G: rand::Rng + ?Sized>(n: usize, n_sites: usize, rng: &mut G) -> Result<AtomPlacement> {
    if n > n_sites {
        return Err(Error::Config(format!("cannot place {n} atoms on {n_sites} sites")));
    }
    let mut sites = sample(rng, n_sites, n).into_vec();
    sites.sort_unstable();
    AtomPlacement::new(sites, n_sites)
}

/// `n` independent zero-mean Gaussian shifts of standard deviation `sigma`.
/// Standard normals are drawn even for `sigma = 0`, so the random stream is
/// the same for every width.
pub fn sample_shifts<R: Real, G: rand::Rng + ?Sized>(sigma: R, n: usize, rng: &mut G) -> Result<InhomogeneousShifts<R>> {
    if !(sigma >= R::zero()) || !sigma.is_finite() {
        return Err(Error::Config(format!("sigma_ih must be finite and nonnegative, got {sigma}")));
    }
    Ok(InhomogeneousShifts::new(
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                sigma * R::lit(z)
            })
            .collect(),
    ))
}

/// Placement and shifts of sample `index`.
pub fn draw_sample<R: Real>(config: &SystemConfig<R>, seed: u64, index: u64) -> Result<(AtomPlacement, InhomogeneousShifts<R>)> {
    let mut rng = sample_rng(seed, index);
    let p = sample_placement(config.n_atoms, config.n_sites, &mut rng)?;
    let s = sample_shifts(config.sigma_ih, config.n_atoms, &mut rng)?;
    Ok((p, s))
}

/// Streaming mean and variance (Welford), mergeable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Accumulator<R: Real = f64> {
    count: u64,
    mean: R,
    m2: R,
}

impl<R: Real> Default for Accumulator<R> {
    fn default() -> Self {
        Self {
            count: 0,
            mean: R::zero(),
            m2: R::zero(),
        }
    }
}

impl<R: Real> Accumulator<R> {
    pub fn push(&mut self, x: R) {
        self.count += 1;
        let d = x - self.mean;
        self.mean = self.mean + d / R::lit(self.count as f64);
        self.m2 = self.m2 + d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Self) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let na = R::lit(self.count as f64);
        let nb = R::lit(other.count as f64);
        let n = na + nb;
        let d = other.mean - self.mean;
        self.mean = self.mean + d * nb / n;
        self.m2 = self.m2 + other.m2 + d * d * na * nb / n;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> R {
        self.mean
    }

    /// Population variance (divisor `m`).
    pub fn variance(&self) -> R {
        if self.count == 0 {
            R::zero()
        } else {
            (self.m2 / R::lit(self.count as f64)).max(R::zero())
        }
    }

    pub fn stats(&self, seed: u64) -> EnsembleStats<R> {
        let variance = self.variance();
        let m = self.count;
        EnsembleStats {
            mean: self.mean,
            variance,
            m,
            seed,
            standard_error: if m == 0 { R::zero() } else { (variance / R::lit(m as f64)).sqrt() },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct EnsembleStats<R: Real = f64> {
    pub mean: R,
    /// Population variance, divisor `m`.
    pub variance: R,
    pub m: u64,
    pub seed: u64,
    pub standard_error: R,
}

/// Evaluates a vector-valued observable on samples `0..m` and accumulates
/// each component. Failures carry the sample index and seed for replay.
pub fn ensemble_accumulate<R, F>(config: &SystemConfig<R>, m: usize, seed: u64, observable: F) -> Result<Vec<Accumulator<R>>>
where
    R: Real,
    F: Fn(&AtomPlacement, &InhomogeneousShifts<R>) -> Result<Vec<R>> + Sync,
{
    if m == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    let eval = |i: usize| -> Result<Vec<R>> {
        let wrap = |e: Error| Error::Sample {
            index: i as u64,
            seed,
            source: Box::new(e),
        };
        let (p, s) = draw_sample(config, seed, i as u64).map_err(wrap)?;
        observable(&p, &s).map_err(wrap)
    };
    let chunks: Vec<Result<Vec<Accumulator<R>>>> = (0..m.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc: Vec<Accumulator<R>> = Vec::new();
            for i in c * CHUNK..((c + 1) * CHUNK).min(m) {
                let v = eval(i)?;
                if acc.is_empty() {
                    acc = vec![Accumulator::default(); v.len()];
                } else if acc.len() != v.len() {
                    return Err(Error::Dimension("observable length changed between samples".into()));
                }
                for (a, x) in acc.iter_mut().zip(v) {
                    a.push(x);
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total: Vec<Accumulator<R>> = Vec::new();
    for chunk in chunks {
        let chunk = chunk?;
        if total.is_empty() {
            total = chunk;
        } else {
            if total.len() != chunk.len() {
                return Err(Error::Dimension("observable length changed between samples".into()));
            }
            for (a, b) in total.iter_mut().zip(&chunk) {
                a.merge(b);
            }
        }
    }
    Ok(total)
}

/// Mean, population variance and standard error of a scalar observable over
/// `m` random placements (and shifts when `sigma_ih > 0`).
pub fn ensemble_average<R, F>(config: &SystemConfig<R>, observable: F, m: usize, seed: u64) -> Result<EnsembleStats<R>>
where
    R: Real,
    F: Fn(&AtomPlacement, &InhomogeneousShifts<R>) -> Result<R> + Sync,
{
    let acc = ensemble_accumulate(config, m, seed, |p, s| observable(p, s).map(|v| vec![v]))?;
    Ok(acc[0].stats(seed))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct VariancePoint<R: Real = f64> {
    pub delta: R,
    pub mean_t: R,
    pub var_t: R,
    pub stderr_t: R,
    pub mean_r: R,
    pub var_r: R,
}

/// Per-detuning statistics of `T` and `R`. Every detuning sees the same
/// placements.
pub fn variance_spectrum<R: Real>(config: &SystemConfig<R>, grid: &[R], m: usize, seed: u64) -> Result<Vec<VariancePoint<R>>> {
    let acc = ensemble_accumulate(config, m, seed, |p, s| {
        let ls = LinearScatterer::new(config, p, s)?;
        let mut out = Vec::with_capacity(2 * grid.len());
        for &d in grid {
            let pt = ls.point(d)?;
            out.push(pt.transmission);
            out.push(pt.reflection);
        }
        Ok(out)
    })?;
    Ok(grid
        .iter()
        .enumerate()
        .map(|(k, &delta)| {
            let t = acc[2 * k].stats(seed);
            let r = acc[2 * k + 1].stats(seed);
            VariancePoint {
                delta,
                mean_t: t.mean,
                var_t: t.variance,
                stderr_t: t.standard_error,
                mean_r: r.mean,
                var_r: r.variance,
            }
        })
        .collect())
}

/// Disorder-averaged spectrum (per-sample intensities averaged) with the
/// transmission variance column.
pub fn averaged_spectrum<R: Real>(config: &SystemConfig<R>, grid: &[R], m: usize, seed: u64) -> Result<Spectrum<R>> {
    let v = variance_spectrum(config, grid, m, seed)?;
    Spectrum::new(
        v.iter().map(|p| p.delta).collect(),
        v.iter().map(|p| p.mean_t).collect(),
        v.iter().map(|p| p.mean_r).collect(),
    )?
    .with_variance(v.iter().map(|p| p.var_t).collect())
}

/// First `Delta > 0` of the grid where `T` falls below half its value at 0.
fn half_max_detuning<R: Real>(s: &Spectrum<R>) -> Option<R> {
    let i0 = s.index_of(R::zero())?;
    let half = s.transmission[i0] * R::lit(0.5);
    (i0 + 1..s.len()).find(|&i| s.transmission[i] < half).map(|i| s.delta[i])
}

/// Disorder-averaged EIT width. A coarse scan (step 0.05, span doubled until
/// the half maximum is bracketed) locates the window; the fit then runs on a
/// grid of 51 points spanning 1.25 times the half-maximum detuning.
pub fn ensemble_eit_width<R: Real>(config: &SystemConfig<R>, m: usize, seed: u64) -> Result<(WidthFit<R>, Spectrum<R>)> {
    let step = R::lit(0.05);
    let mut span = R::lit(5.0);
    let h = loop {
        let grid = uniform_grid(-span, span, step)?;
        let s = averaged_spectrum(config, &grid, m, seed)?;
        if let Some(h) = half_max_detuning(&s) {
            break h;
        }
        if span > R::lit(1e3) {
            return Err(Error::Domain("no EIT half maximum within |Delta| <= 1000".into()));
        }
        span = span * R::lit(2.0);
    };
    let fine = h / R::lit(20.0);
    let grid = uniform_grid(-fine * R::lit(25.0), fine * R::lit(25.0), fine)?;
    let s = averaged_spectrum(config, &grid, m, seed)?;
    Ok((eit_width(&s)?, s))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct DepthRow<R: Real = f64> {
    pub n_atoms: usize,
    /// Disorder-averaged transmission at `Delta = 0`.
    pub t0: R,
    pub stderr_t0: R,
    pub depth: R,
    /// `2 n gamma_1d / gamma_e`.
    pub predicted: R,
}

/// Optical depth `-ln T(0)` versus atom number, the other parameters taken
/// from `config` (with `delta` forced to 0).
pub fn optical_depth_scan<R: Real>(config: &SystemConfig<R>, n_list: &[usize], m: usize, seed: u64) -> Result<Vec<DepthRow<R>>> {
    n_list
        .iter()
        .map(|&n| {
            let cfg = SystemConfig {
                n_atoms: n,
                delta: R::zero(),
                ..config.clone()
            };
            let st = ensemble_average(
                &cfg,
                |p, s| LinearScatterer::new(&cfg, p, s)?.point(R::zero()).map(|x| x.transmission),
                m,
                seed,
            )?;
            Ok(DepthRow {
                n_atoms: n,
                t0: st.mean,
                stderr_t0: st.standard_error,
                depth: optical_depth(st.mean)?,
                predicted: R::lit(2.0) * R::from_usize_lossy(n) * cfg.gamma_1d / cfg.gamma_e,
            })
        })
        .collect()
}

pub fn write_depth_csv<R: Real, W: Write>(rows: &[DepthRow<R>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "T0", "stderr_T0", "D", "D_predicted"])?;
    for r in rows {
        w.write_record([
            r.n_atoms.to_string(),
            r.t0.to_string(),
            r.stderr_t0.to_string(),
            r.depth.to_string(),
            r.predicted.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// CSV with columns `delta,mean_T,var_T,stderr_T,mean_R,var_R`.
pub fn write_variance_csv<R: Real, W: Write>(points: &[VariancePoint<R>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["delta", "mean_T", "var_T", "stderr_T", "mean_R", "var_R"])?;
    for p in points {
        w.write_record([p.delta, p.mean_t, p.var_t, p.stderr_t, p.mean_r, p.var_r].map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
