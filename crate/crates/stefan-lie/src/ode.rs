//! Dormand-Prince 5(4) integrator with PI step-size control, fifth-order
//! dense output, and event location.  The reduced boundary-value problems
//! are solved by shooting, which needs accurate interior values (dense
//! output) and front detection (events), so the integrator keeps every
//! accepted step's interpolation coefficients.

use crate::numeric::NumericError;

const A21: f64 = 0.2;
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

const C2: f64 = 0.2;
const C3: f64 = 0.3;
const C4: f64 = 0.8;
const C5: f64 = 8.0 / 9.0;

// Difference between the 5th and embedded 4th order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// Dense output weights.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFE: f64 = 0.9;
const FAC1: f64 = 0.2;
const FAC2: f64 = 10.0;
const BETA: f64 = 0.04;
const EXPO1: f64 = 0.2 - BETA * 0.75;

#[derive(Clone, Debug)]
pub struct Dopri5Options {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: Option<f64>,
    pub h_max: Option<f64>,
    pub max_steps: usize,
}

impl Default for Dopri5Options {
    fn default() -> Self {
        Dopri5Options { rtol: 1e-11, atol: 1e-13, h_init: None, h_max: None, max_steps: 500_000 }
    }
}

#[derive(Clone, Debug, thiserror::Error)]
pub enum OdeError {
    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },
    #[error("step limit exceeded at t = {t}")]
    MaxSteps { t: f64 },
    #[error("right-hand side failed at t = {t}: {source}")]
    Rhs { t: f64, source: NumericError },
}

/// Interpolation coefficients for one accepted step on `[t0, t0 + h]`.
#[derive(Clone, Debug)]
pub struct DenseStep<const N: usize> {
    pub t0: f64,
    pub h: f64,
    cont: [[f64; N]; 5],
}

impl<const N: usize> DenseStep<N> {
    /// Fifth-order interpolant, valid for `t` inside the step.
    pub fn eval(&self, t: f64) -> [f64; N] {
        let theta = (t - self.t0) / self.h;
        let th1 = 1.0 - theta;
        let mut y = [0.0; N];
        for i in 0..N {
            y[i] = self.cont[0][i]
                + theta
                    * (self.cont[1][i]
                        + th1
                            * (self.cont[2][i]
                                + theta * (self.cont[3][i] + th1 * self.cont[4][i])));
        }
        y
    }
}

#[derive(Clone, Debug)]
pub struct OdeSolution<const N: usize> {
    pub t_end: f64,
    pub y_end: [f64; N],
    pub steps: Vec<DenseStep<N>>,
    /// Set when an event function crossed zero; integration stopped there.
    pub event: Option<(f64, [f64; N])>,
    pub n_eval: usize,
    pub n_accepted: usize,
    pub n_rejected: usize,
}

impl<const N: usize> OdeSolution<N> {
    /// Dense-output sample; `None` outside the integrated span.
    pub fn sample(&self, t: f64) -> Option<[f64; N]> {
        if self.steps.is_empty() {
            return None;
        }
        let forward = self.steps[0].h > 0.0;
        let lo = self.steps[0].t0;
        let eps = 1e-12 * (1.0 + lo.abs() + self.t_end.abs());
        let inside = if forward {
            t >= lo - eps && t <= self.t_end + eps
        } else {
            t <= lo + eps && t >= self.t_end - eps
        };
        if !inside {
            return None;
        }
        // Binary search for the step containing t.
        let mut a = 0usize;
        let mut b = self.steps.len();
        while b - a > 1 {
            let m = (a + b) / 2;
            let after = if forward { t >= self.steps[m].t0 } else { t <= self.steps[m].t0 };
            if after {
                a = m;
            } else {
                b = m;
            }
        }
        Some(self.steps[a].eval(t))
    }
}

pub type Rhs<'a, const N: usize> =
    &'a mut dyn FnMut(f64, &[f64; N]) -> Result<[f64; N], NumericError>;

fn scaled_err_norm<const N: usize>(err: &[f64; N], y: &[f64; N], y_new: &[f64; N], opts: &Dopri5Options) -> f64 {
    let mut acc = 0.0;
    for i in 0..N {
        let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
        let q = err[i] / sc;
        acc += q * q;
    }
    (acc / N as f64).sqrt()
}

fn initial_step<const N: usize>(
    f: Rhs<N>,
    t0: f64,
    y0: &[f64; N],
    f0: &[f64; N],
    dir: f64,
    span: f64,
    opts: &Dopri5Options,
) -> Result<f64, OdeError> {
    let sc = |y: &[f64; N], i: usize| opts.atol + opts.rtol * y[i].abs();
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..N {
        d0 += (y0[i] / sc(y0, i)).powi(2);
        d1 += (f0[i] / sc(y0, i)).powi(2);
    }
    d0 = (d0 / N as f64).sqrt();
    d1 = (d1 / N as f64).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 }.min(span.abs());
    let mut y1 = *y0;
    for i in 0..N {
        y1[i] += dir * h0 * f0[i];
    }
    let f1 = f(t0 + dir * h0, &y1).map_err(|source| OdeError::Rhs { t: t0, source })?;
    let mut d2 = 0.0;
    for i in 0..N {
        d2 += ((f1[i] - f0[i]) / sc(y0, i)).powi(2);
    }
    d2 = (d2 / N as f64).sqrt() / h0;
    let dm = d1.max(d2);
    let h1 = if dm <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / dm).powf(0.2) };
    Ok(dir * h1.min(100.0 * h0).min(span.abs()))
}

/// Integrate `y' = f(t, y)` from `t0` to `t_end` (either direction).  When
/// `event` is given, integration stops where the event function first
/// crosses zero (strict sign change against its value at `t0`), located on
/// the dense output by bisection.
pub fn integrate<const N: usize>(
    f: Rhs<N>,
    t0: f64,
    t_end: f64,
    y0: [f64; N],
    opts: &Dopri5Options,
    event: Option<&dyn Fn(f64, &[f64; N]) -> f64>,
) -> Result<OdeSolution<N>, OdeError> {
    let span = t_end - t0;
    let dir = if span >= 0.0 { 1.0 } else { -1.0 };
    let h_max = opts.h_max.unwrap_or(span.abs());
    let mut n_eval = 0usize;

    let mut y = y0;
    let mut t = t0;
    let mut k1 = f(t, &y).map_err(|source| OdeError::Rhs { t, source })?;
    n_eval += 1;

    let mut h = match opts.h_init {
        Some(h) => dir * h.abs().min(span.abs()),
        None => {
            n_eval += 1;
            initial_step(f, t0, &y0, &k1, dir, span, opts)?
        }
    };

    let event_sign0 = event.map(|g| g(t0, &y0));

    let mut steps: Vec<DenseStep<N>> = Vec::new();
    let mut sol_event = None;
    let mut facold: f64 = 1e-4;
    let mut n_accepted = 0usize;
    let mut n_rejected = 0usize;

    if span == 0.0 {
        return Ok(OdeSolution {
            t_end,
            y_end: y,
            steps,
            event: None,
            n_eval,
            n_accepted,
            n_rejected,
        });
    }

    for _ in 0..opts.max_steps {
        if (t - t_end) * dir >= 0.0 {
            return Ok(OdeSolution {
                t_end: t,
                y_end: y,
                steps,
                event: sol_event,
                n_eval,
                n_accepted,
                n_rejected,
            });
        }
        h = h.clamp(-h_max, h_max);
        // Do not step past the end point.
        if (t + h - t_end) * dir > 0.0 {
            h = t_end - t;
        }
        if h.abs() < 1e-14 * t.abs().max(1.0) {
            return Err(OdeError::StepSizeUnderflow { t });
        }

        let stage = |y: &[f64; N], coefs: &[(f64, &[f64; N])], h: f64| {
            let mut out = *y;
            for &(c, k) in coefs {
                for i in 0..N {
                    out[i] += h * c * k[i];
                }
            }
            out
        };
        let rhs_at = |f: Rhs<N>, t: f64, y: &[f64; N]| -> Result<[f64; N], OdeError> {
            f(t, y).map_err(|source| OdeError::Rhs { t, source })
        };

        let k2 = rhs_at(f, t + C2 * h, &stage(&y, &[(A21, &k1)], h))?;
        let k3 = rhs_at(f, t + C3 * h, &stage(&y, &[(A31, &k1), (A32, &k2)], h))?;
        let k4 = rhs_at(f, t + C4 * h, &stage(&y, &[(A41, &k1), (A42, &k2), (A43, &k3)], h))?;
        let k5 = rhs_at(
            f,
            t + C5 * h,
            &stage(&y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], h),
        )?;
        let k6 = rhs_at(
            f,
            t + h,
            &stage(&y, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], h),
        )?;
        let y_new = stage(&y, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)], h);
        let k7 = rhs_at(f, t + h, &y_new)?;
        n_eval += 6;

        let mut err_vec = [0.0; N];
        for i in 0..N {
            err_vec[i] = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let err = scaled_err_norm(&err_vec, &y, &y_new, opts);

        let fac11 = err.powf(EXPO1);
        let fac = (fac11 / facold.powf(BETA) / SAFE).clamp(1.0 / FAC2, 1.0 / FAC1);
        let h_new = h / fac;

        if err <= 1.0 {
            facold = err.max(1e-4);
            n_accepted += 1;

            // Dense output coefficients for this step.
            let mut cont = [[0.0; N]; 5];
            for i in 0..N {
                let ydiff = y_new[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                cont[0][i] = y[i];
                cont[1][i] = ydiff;
                cont[2][i] = bspl;
                cont[3][i] = ydiff - h * k7[i] - bspl;
                cont[4][i] = h
                    * (D1 * k1[i]
                        + D3 * k3[i]
                        + D4 * k4[i]
                        + D5 * k5[i]
                        + D6 * k6[i]
                        + D7 * k7[i]);
            }
            let step = DenseStep { t0: t, h, cont };

            // Event location on the dense interpolant.
            if let (Some(g), Some(g0)) = (event, event_sign0) {
                let g_new = g(t + h, &y_new);
                if g0 != 0.0 && g_new * g0 <= 0.0 {
                    let mut lo = 0.0f64;
                    let mut hi = 1.0f64;
                    for _ in 0..100 {
                        let mid = 0.5 * (lo + hi);
                        let ym = step.eval(t + mid * h);
                        if g(t + mid * h, &ym) * g0 <= 0.0 {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    let t_star = t + hi * h;
                    let y_star = step.eval(t_star);
                    sol_event = Some((t_star, y_star));
                    steps.push(step);
                    return Ok(OdeSolution {
                        t_end: t_star,
                        y_end: y_star,
                        steps,
                        event: sol_event,
                        n_eval,
                        n_accepted,
                        n_rejected,
                    });
                }
            }

            steps.push(step);
            t += h;
            y = y_new;
            k1 = k7;
            h = h_new;
        } else {
            n_rejected += 1;
            h = h / (fac11 / SAFE).clamp(1.0 / FAC2, 1.0 / FAC1).max(1.0);
        }
    }
    Err(OdeError::MaxSteps { t })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_opts() -> Dopri5Options {
        Dopri5Options { rtol: 1e-12, atol: 1e-14, ..Default::default() }
    }

    #[test]
    fn exponential_decay_is_accurate() {
        let mut f = |_t: f64, y: &[f64; 1]| Ok([-y[0]]);
        let sol = integrate(&mut f, 0.0, 5.0, [1.0], &default_opts(), None).unwrap();
        assert!((sol.y_end[0] - (-5.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn dense_output_matches_analytic_solution() {
        let mut f = |_t: f64, y: &[f64; 1]| Ok([-y[0]]);
        let sol = integrate(&mut f, 0.0, 5.0, [1.0], &default_opts(), None).unwrap();
        for i in 0..=50 {
            let t = 5.0 * i as f64 / 50.0;
            let y = sol.sample(t).unwrap();
            assert!((y[0] - (-t).exp()).abs() < 1e-10, "t = {t}");
        }
        assert!(sol.sample(-0.1).is_none());
        assert!(sol.sample(5.1).is_none());
    }

    #[test]
    fn harmonic_oscillator_round_trip() {
        let mut f = |_t: f64, y: &[f64; 2]| Ok([y[1], -y[0]]);
        let two_pi = 2.0 * std::f64::consts::PI;
        let sol = integrate(&mut f, 0.0, 3.0 * two_pi, [1.0, 0.0], &default_opts(), None).unwrap();
        assert!((sol.y_end[0] - 1.0).abs() < 1e-9);
        assert!(sol.y_end[1].abs() < 1e-9);
    }

    #[test]
    fn backwards_integration() {
        let mut f = |_t: f64, y: &[f64; 1]| Ok([-y[0]]);
        let sol =
            integrate(&mut f, 1.0, 0.0, [(-1.0f64).exp()], &default_opts(), None).unwrap();
        assert!((sol.y_end[0] - 1.0).abs() < 1e-12);
        let y = sol.sample(0.5).unwrap();
        assert!((y[0] - (-0.5f64).exp()).abs() < 1e-11);
    }

    #[test]
    fn event_stops_at_crossing() {
        // y' = y, event at y = e (t = 1).
        let mut f = |_t: f64, y: &[f64; 1]| Ok([y[0]]);
        let event = |_t: f64, y: &[f64; 1]| y[0] - std::f64::consts::E;
        let sol = integrate(&mut f, 0.0, 10.0, [1.0], &default_opts(), Some(&event)).unwrap();
        let (t_star, y_star) = sol.event.expect("event must trigger");
        assert!((t_star - 1.0).abs() < 1e-10, "t* = {t_star}");
        assert!((y_star[0] - std::f64::consts::E).abs() < 1e-9);
    }

    #[test]
    fn rhs_failure_propagates() {
        let mut f = |t: f64, _y: &[f64; 1]| {
            if t > 0.5 {
                Err(NumericError::NonFinite { context: "test rhs", at: t })
            } else {
                Ok([1.0])
            }
        };
        assert!(matches!(
            integrate(&mut f, 0.0, 1.0, [0.0], &default_opts(), None),
            Err(OdeError::Rhs { .. })
        ));
    }
}
