//! Adaptive Dormand–Prince 5(4) integration of linear complex ODE systems.

use crate::error::{Error, Result};
use crate::num::{Real, C};

#[derive(Clone, Copy, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; `None` picks one from the first derivative.
    pub first_step: Option<f64>,
    pub min_step: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
            first_step: None,
            min_step: 1e-14,
            max_steps: 10_000_000,
        }
    }
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// 5th minus embedded 4th order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrate `dy/dt = f(t, y)` from `grid[0]` and return `y` at every grid
/// time (the first entry is `y0` itself). `f` writes the derivative into its
/// output slice.
pub fn integrate<R, F>(mut f: F, y0: &[C<R>], grid: &[R], opts: &OdeOptions) -> Result<Vec<Vec<C<R>>>>
where
    R: Real,
    F: FnMut(R, &[C<R>], &mut [C<R>]),
{
    let n = y0.len();
    let zero = C::new(R::zero(), R::zero());
    if grid.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(Error::Grid("time grid must be nondecreasing".into()));
    }
    let mut out = Vec::with_capacity(grid.len());
    if grid.is_empty() {
        return Ok(out);
    }
    let rtol = R::lit(opts.rtol);
    let atol = R::lit(opts.atol);
    let min_step = R::lit(opts.min_step);

    let mut y = y0.to_vec();
    let mut t = grid[0];
    out.push(y.clone());

    let mut k1 = vec![zero; n];
    let mut k2 = vec![zero; n];
    let mut k3 = vec![zero; n];
    let mut k4 = vec![zero; n];
    let mut k5 = vec![zero; n];
    let mut k6 = vec![zero; n];
    let mut k7 = vec![zero; n];
    let mut tmp = vec![zero; n];
    let mut ynew = vec![zero; n];

    f(t, &y, &mut k1);
    let mut h = match opts.first_step {
        Some(h) => R::lit(h),
        None => {
            let scale = |v: &[C<R>]| -> R {
                let s = v
                    .iter()
                    .zip(&y)
                    .map(|(d, yi)| {
                        let w = atol + rtol * yi.norm();
                        (d.norm() / w).powi(2)
                    })
                    .sum::<R>();
                (s / R::from_usize_lossy(n.max(1))).sqrt()
            };
            let d0 = scale(&y);
            let d1 = scale(&k1);
            if d0 < R::lit(1e-5) || d1 < R::lit(1e-5) {
                R::lit(1e-6)
            } else {
                R::lit(0.01) * d0 / d1
            }
        }
    };
    let mut steps = 0usize;

    let combo = |dst: &mut [C<R>], y: &[C<R>], h: R, terms: &[(f64, &[C<R>])]| {
        for (i, d) in dst.iter_mut().enumerate() {
            let mut acc = zero;
            for (w, k) in terms {
                acc = acc + k[i] * R::lit(*w);
            }
            *d = y[i] + acc * h;
        }
    };

    for &t_target in &grid[1..] {
        while t < t_target {
            if steps >= opts.max_steps {
                return Err(Error::Integration {
                    time: t.to_f64_lossy(),
                    reason: "maximum number of steps exceeded".into(),
                });
            }
            let last = t + h >= t_target;
            let h_try = if last { t_target - t } else { h };
            if h_try < min_step && !last {
                return Err(Error::Integration {
                    time: t.to_f64_lossy(),
                    reason: format!("step size underflow (h = {:e})", h_try.to_f64_lossy()),
                });
            }

            combo(&mut tmp, &y, h_try, &[(A21, &k1)]);
            f(t + h_try * R::lit(1.0 / 5.0), &tmp, &mut k2);
            combo(&mut tmp, &y, h_try, &[(A31, &k1), (A32, &k2)]);
            f(t + h_try * R::lit(3.0 / 10.0), &tmp, &mut k3);
            combo(&mut tmp, &y, h_try, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
            f(t + h_try * R::lit(4.0 / 5.0), &tmp, &mut k4);
            combo(&mut tmp, &y, h_try, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
            f(t + h_try * R::lit(8.0 / 9.0), &tmp, &mut k5);
            combo(
                &mut tmp,
                &y,
                h_try,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            );
            f(t + h_try, &tmp, &mut k6);
            combo(
                &mut ynew,
                &y,
                h_try,
                &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
            );
            f(t + h_try, &ynew, &mut k7);

            let mut err = R::zero();
            for i in 0..n {
                let e = (k1[i] * R::lit(E1)
                    + k3[i] * R::lit(E3)
                    + k4[i] * R::lit(E4)
                    + k5[i] * R::lit(E5)
                    + k6[i] * R::lit(E6)
                    + k7[i] * R::lit(E7))
                    * h_try;
                let w = atol + rtol * y[i].norm().max(ynew[i].norm());
                err = err.max(e.norm() / w);
            }
            steps += 1;

            if err <= R::one() {
                t = if last { t_target } else { t + h_try };
                std::mem::swap(&mut y, &mut ynew);
                std::mem::swap(&mut k1, &mut k7);
                let fac = if err == R::zero() {
                    R::lit(5.0)
                } else {
                    (R::lit(0.9) * err.powf(R::lit(-0.2))).min(R::lit(5.0))
                };
                if !last {
                    h = h_try * fac;
                }
            } else {
                let fac = (R::lit(0.9) * err.powf(R::lit(-0.2))).max(R::lit(0.1));
                h = h_try * fac;
                if h < min_step {
                    return Err(Error::Integration {
                        time: t.to_f64_lossy(),
                        reason: format!("step size underflow (h = {:e})", h.to_f64_lossy()),
                    });
                }
            }
            if !h.is_finite() || !err.is_finite() {
                return Err(Error::Integration {
                    time: t.to_f64_lossy(),
                    reason: "non-finite step or error estimate".into(),
                });
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::{c, cr};

    #[test]
    fn exponential_decay_and_rotation() {
        // y' = (-0.5 + 2i) y
        let rate = c(-0.5, 2.0);
        let grid: Vec<f64> = (0..=20).map(|k| k as f64 * 0.5).collect();
        let ys = integrate(|_, y, dy| dy[0] = rate * y[0], &[cr(1.0)], &grid, &OdeOptions::default())
            .unwrap();
        for (t, y) in grid.iter().zip(&ys) {
            let exact = (rate * *t).exp();
            assert!((y[0] - exact).norm() < 1e-8 * (1.0 + exact.norm()), "t={t}");
        }
    }

    #[test]
    fn zero_time_returns_initial_state() {
        let ys = integrate(|_, y, dy| dy[0] = -y[0], &[c(0.3, 0.4)], &[0.0, 0.0], &OdeOptions::default())
            .unwrap();
        assert_eq!(ys[1][0], c(0.3, 0.4));
    }

    #[test]
    fn rejects_decreasing_grid() {
        assert!(integrate(|_, _: &[C<f64>], _| {}, &[cr(1.0)], &[1.0, 0.0], &OdeOptions::default()).is_err());
    }

    #[test]
    fn reports_step_underflow() {
        let opts = OdeOptions {
            min_step: 1e-3,
            rtol: 1e-14,
            atol: 1e-300,
            ..OdeOptions::default()
        };
        let err = integrate(|_, y, dy| dy[0] = y[0] * -1e4, &[cr(1.0)], &[0.0, 1.0], &opts).unwrap_err();
        assert!(matches!(err, Error::Integration { .. }));
    }
}
