//! Variable-step third-order Adams-Bashforth quadrature and the matching
//! variable-step second-order difference stencils.
//!
//! Everything here is independent of the wave model. A quantity `X` obeying
//! `X_t = f(t, X)` is advanced from `t_i` to `t_{i+1}` using the right-hand
//! side sampled at the three known levels `t_i`, `t_{i-1}`, `t_{i-2}`.
//! Step durations are named after the step they measure:
//! `dt_i = t_{i+1} - t_i`, `dt_im1 = t_i - t_{i-1}`, `dt_im2 = t_{i-1} - t_{i-2}`.

use crate::error::{Error, Result};

/// Smallest and largest accepted ratio `dt_i / dt_im1`.
pub const MIN_STEP_RATIO: f64 = 0.1;
pub const MAX_STEP_RATIO: f64 = 10.0;

/// What to do with a step whose ratio to the previous one leaves
/// `[MIN_STEP_RATIO, MAX_STEP_RATIO]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RatioGuard {
    Reject,
    #[default]
    Clamp,
}

/// Durations of the step being taken and the two preceding ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepTriple {
    dt_i: f64,
    dt_im1: f64,
    dt_im2: f64,
}

fn check_duration(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() || v <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "step duration {name} must be positive and finite, got {v}"
        )));
    }
    Ok(())
}

impl StepTriple {
    pub fn new(dt_i: f64, dt_im1: f64, dt_im2: f64) -> Result<Self> {
        check_duration("dt_i", dt_i)?;
        check_duration("dt_im1", dt_im1)?;
        check_duration("dt_im2", dt_im2)?;
        Ok(Self { dt_i, dt_im1, dt_im2 })
    }

    /// Like [`StepTriple::new`], additionally enforcing the step-ratio guard
    /// on `dt_i / dt_im1`. With [`RatioGuard::Clamp`] the new step is pulled
    /// into range and the returned flag reports whether that happened.
    pub fn guarded(dt_i: f64, dt_im1: f64, dt_im2: f64, guard: RatioGuard) -> Result<(Self, bool)> {
        let steps = Self::new(dt_i, dt_im1, dt_im2)?;
        let ratio = dt_i / dt_im1;
        if (MIN_STEP_RATIO..=MAX_STEP_RATIO).contains(&ratio) {
            return Ok((steps, false));
        }
        match guard {
            RatioGuard::Reject => Err(Error::InvalidInput(format!(
                "step ratio {ratio:.4} outside [{MIN_STEP_RATIO}, {MAX_STEP_RATIO}]"
            ))),
            RatioGuard::Clamp => {
                let dt = dt_i.clamp(MIN_STEP_RATIO * dt_im1, MAX_STEP_RATIO * dt_im1);
                Ok((Self { dt_i: dt, ..steps }, true))
            }
        }
    }

    pub fn uniform(dt: f64) -> Result<Self> {
        Self::new(dt, dt, dt)
    }

    pub fn dt_i(&self) -> f64 {
        self.dt_i
    }

    pub fn dt_im1(&self) -> f64 {
        self.dt_im1
    }

    pub fn dt_im2(&self) -> f64 {
        self.dt_im2
    }
}

/// Weights multiplying the right-hand side at `t_i`, `t_{i-1}`, `t_{i-2}`.
/// The `dt_i / 6` prefactor is already folded in, so the increment of `X`
/// over the step is `w_i f_i + w_im1 f_im1 + w_im2 f_im2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureWeights {
    pub w_i: f64,
    pub w_im1: f64,
    pub w_im2: f64,
}

impl QuadratureWeights {
    /// Classical equal-step coefficients `(23, -16, 5) dt / 12`.
    pub fn uniform(dt: f64) -> Self {
        Self {
            w_i: 23.0 * dt / 12.0,
            w_im1: -16.0 * dt / 12.0,
            w_im2: 5.0 * dt / 12.0,
        }
    }

    #[inline]
    pub fn combine(&self, f_i: f64, f_im1: f64, f_im2: f64) -> f64 {
        self.w_i * f_i + self.w_im1 * f_im1 + self.w_im2 * f_im2
    }
}

/// Integrates the quadratic interpolant of the three right-hand-side samples
/// over `[t_i, t_{i+1}]`.
pub fn ab3_weights(steps: StepTriple) -> QuadratureWeights {
    let StepTriple { dt_i: h, dt_im1: h1, dt_im2: h2 } = steps;
    let pre = h / 6.0;
    let w_i = pre * ((h / h1) * (2.0 * h + 6.0 * h1 + 3.0 * h2) / (h1 + h2) + 6.0);
    let w_im1 = -pre * ((h / h1) * (2.0 * h + 3.0 * h1 + 3.0 * h2) / h2);
    let w_im2 = pre * ((h / h2) * (2.0 * h + 3.0 * h1) / (h1 + h2));
    QuadratureWeights { w_i, w_im1, w_im2 }
}

fn check_value(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::InvalidInput(format!("{name} is not finite ({v})")));
    }
    Ok(())
}

/// One adaptive Adams-Bashforth step for a scalar quantity.
pub fn ab3_step(x_i: f64, f_i: f64, f_im1: f64, f_im2: f64, steps: StepTriple) -> Result<f64> {
    check_value("x_i", x_i)?;
    check_value("f_i", f_i)?;
    check_value("f_im1", f_im1)?;
    check_value("f_im2", f_im2)?;
    Ok(x_i + ab3_weights(steps).combine(f_i, f_im1, f_im2))
}

/// Forward Euler, used while fewer than three levels are known.
pub fn euler_step(x_i: f64, f_i: f64, dt: f64) -> Result<f64> {
    check_duration("dt", dt)?;
    check_value("x_i", x_i)?;
    check_value("f_i", f_i)?;
    Ok(x_i + dt * f_i)
}

/// Time level at which a difference stencil evaluates the derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    AtI,
    AtIm1,
    AtIm2,
}

/// Weights of a three-point derivative over samples at `t_i`, `t_{i-1}`,
/// `t_{i-2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DifferenceWeights {
    pub c_i: f64,
    pub c_im1: f64,
    pub c_im2: f64,
    pub level: Level,
}

impl DifferenceWeights {
    #[inline]
    pub fn apply(&self, y_i: f64, y_im1: f64, y_im2: f64) -> f64 {
        self.c_i * y_i + self.c_im1 * y_im1 + self.c_im2 * y_im2
    }
}

/// Derivative of the quadratic through the three samples, evaluated at the
/// requested level. Equal spacing gives the usual backward, central and
/// forward second-order differences.
pub fn vfd_weights(level: Level, dt_im1: f64, dt_im2: f64) -> Result<DifferenceWeights> {
    check_duration("dt_im1", dt_im1)?;
    check_duration("dt_im2", dt_im2)?;
    let (a, b) = (dt_im1, dt_im2);
    let s = a + b;
    let (c_i, c_im1, c_im2) = match level {
        Level::AtI => ((2.0 * a + b) / (a * s), -s / (a * b), a / (b * s)),
        Level::AtIm1 => (b / (a * s), (a - b) / (a * b), -a / (b * s)),
        Level::AtIm2 => (-b / (a * s), s / (a * b), -(a + 2.0 * b) / (b * s)),
    };
    Ok(DifferenceWeights { c_i, c_im1, c_im2, level })
}

/// Effective weights on three samples of a quantity `Y` whose time
/// derivative is integrated with AB3: `sum_k w_k * (Y_t)_k`, where each
/// `(Y_t)_k` comes from [`vfd_weights`] at level `k`. For equal steps this is
/// `(2, -3, 1)`.
pub fn integrated_derivative_weights(steps: StepTriple) -> [f64; 3] {
    let q = ab3_weights(steps);
    // Durations are validated by StepTriple.
    let d0 = vfd_weights(Level::AtI, steps.dt_im1, steps.dt_im2).expect("validated");
    let d1 = vfd_weights(Level::AtIm1, steps.dt_im1, steps.dt_im2).expect("validated");
    let d2 = vfd_weights(Level::AtIm2, steps.dt_im1, steps.dt_im2).expect("validated");
    [
        q.w_i * d0.c_i + q.w_im1 * d1.c_i + q.w_im2 * d2.c_i,
        q.w_i * d0.c_im1 + q.w_im1 * d1.c_im1 + q.w_im2 * d2.c_im1,
        q.w_i * d0.c_im2 + q.w_im1 * d1.c_im2 + q.w_im2 * d2.c_im2,
    ]
}
