use std::time::{Duration, Instant};

use super::{CoefficientCache, IntegrationError, Scheme};
use crate::matfun::Vector;
use crate::problems::Problem;

#[derive(Debug, Clone, Copy, Default)]
pub struct IntegrateOptions {
    /// Keep the state at every step boundary, not only the final one.
    pub record_states: bool,
    /// Rebuild the coefficient cache before every step (for testing that the
    /// cache is a pure function of (M, h)).
    pub rebuild_cache_each_step: bool,
}

/// Result of a fixed-step run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub t0: f64,
    pub t_end: f64,
    pub h: f64,
    pub steps: usize,
    pub final_state: Vector,
    /// States at t₀, t₀ + h, …, t_end when recorded; otherwise empty.
    pub states: Vec<Vector>,
    /// Time spent building the coefficient cache.
    pub cache_time: Duration,
    /// Time spent in the step loop.
    pub step_time: Duration,
}

impl Trajectory {
    pub fn total_time(&self) -> Duration {
        self.cache_time + self.step_time
    }

    pub fn per_step_time(&self) -> Duration {
        self.step_time / self.steps.max(1) as u32
    }
}

/// Number of steps of size h in [t0, t_end]; the ratio must be within half
/// an ulp of a positive integer.
pub fn step_count(t0: f64, t_end: f64, h: f64) -> Result<usize, IntegrationError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(IntegrationError::Config(format!("stepsize must be positive, got {h}")));
    }
    let ratio = (t_end - t0) / h;
    let nearest = ratio.round();
    if !(nearest >= 1.0 && nearest.is_finite()) {
        return Err(IntegrationError::Config(format!(
            "interval [{t0}, {t_end}] holds no step of size {h}"
        )));
    }
    let half_ulp = 0.5 * (nearest.next_up() - nearest);
    if (ratio - nearest).abs() > half_ulp {
        return Err(IntegrationError::Config(format!(
            "interval length {} is not an integer multiple of h = {h}",
            t_end - t0
        )));
    }
    Ok(nearest as usize)
}

/// Integrates `p` from its initial time to `t_end` with constant step `h`.
pub fn integrate(scheme: &Scheme, p: &Problem, h: f64, t_end: f64) -> Result<Trajectory, IntegrationError> {
    integrate_with(scheme, p, h, t_end, IntegrateOptions::default())
}

pub fn integrate_with(
    scheme: &Scheme,
    p: &Problem,
    h: f64,
    t_end: f64,
    opts: IntegrateOptions,
) -> Result<Trajectory, IntegrationError> {
    let t0 = p.t_span().0;
    let steps = step_count(t0, t_end, h)?;
    if scheme.needs_derivatives() {
        p.require_derivatives()?;
    }

    let started = Instant::now();
    let mut cache = CoefficientCache::build(scheme, p, h)?;
    let cache_time = started.elapsed();
    cache.validate_for(p, h)?;
    cache.supports(scheme)?;

    let mut states = Vec::new();
    if opts.record_states {
        states.reserve(steps + 1);
        states.push(p.y0().clone());
    }
    let mut y = p.y0().clone();
    let started = Instant::now();
    for n in 0..steps {
        if opts.rebuild_cache_each_step && n > 0 {
            cache = CoefficientCache::build(scheme, p, h)?;
        }
        y = scheme.step(&cache, p, &y).map_err(|e| e.at_step(n + 1))?.y_next;
        if opts.record_states {
            states.push(y.clone());
        }
    }
    let step_time = started.elapsed();

    Ok(Trajectory {
        t0,
        t_end,
        h,
        steps,
        final_state: y,
        states,
        cache_time,
        step_time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_count_accepts_dyadic_and_rejects_ragged() {
        assert_eq!(step_count(0.0, 10.0, 1.0 / 16.0).unwrap(), 160);
        assert_eq!(step_count(0.0, 1.0, 0.1).unwrap(), 10);
        assert_eq!(step_count(0.0, 0.5, 0.5).unwrap(), 1);
        assert!(step_count(0.0, 1.0, 0.3).is_err());
        assert!(step_count(0.0, 1.0, 0.0).is_err());
        assert!(step_count(1.0, 0.0, 0.25).is_err());
    }
}
