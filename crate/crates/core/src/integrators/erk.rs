//! φ-function exponential RK baselines:
//! Yᵢ = e^{−cᵢhM}y₀ + hΣaᵢⱼ(−hM)f(Yⱼ), y₁ = e^{−hM}y₀ + hΣbᵢ(−hM)f(Yᵢ),
//! with φ_{j,i} = φ_j(−cᵢhM) and weights built from φ_j(−hM).

use super::{ensure_finite, CoefficientCache, DivergencePoint, ErkKind, IntegrationError, StepResult};
use crate::matfun::Vector;
use crate::problems::Problem;

/// Five-stage fourth-order scheme of Hochbruck and Ostermann.
pub fn erk_hochbruck5_step(cache: &CoefficientCache, p: &Problem, y0: &Vector) -> Result<StepResult, IntegrationError> {
    erk_step(ErkKind::Hochbruck5, cache, p, y0, false)
}

/// Four-stage fourth-order scheme of Krogstad.
pub fn erk_krogstad4_step(cache: &CoefficientCache, p: &Problem, y0: &Vector) -> Result<StepResult, IntegrationError> {
    erk_step(ErkKind::Krogstad4, cache, p, y0, false)
}

pub(super) fn erk_step(
    kind: ErkKind,
    cache: &CoefficientCache,
    p: &Problem,
    y0: &Vector,
    record: bool,
) -> Result<StepResult, IntegrationError> {
    let coeffs = match cache.erk() {
        Some(c) if c.kind == kind => c,
        _ => {
            return Err(IntegrationError::CacheMismatch(format!(
                "cache holds no {kind:?} coefficients"
            )))
        }
    };
    let h = cache.h();
    let s = coeffs.c.len();

    let mut propagated: Vec<(f64, Vector)> = Vec::with_capacity(2);
    let mut fs: Vec<Vector> = Vec::with_capacity(s);
    let mut stages = Vec::new();
    fs.push(p.f(y0));
    if record {
        stages.push(y0.clone());
    }
    for i in 1..s {
        let c = coeffs.c[i];
        let mut yi = match propagated.iter().find(|(k, _)| *k == c) {
            Some((_, v)) => v.clone(),
            None => {
                let v = match cache.exp_stage(c)? {
                    Some(e) => e.apply(y0),
                    None => y0.clone(),
                };
                propagated.push((c, v.clone()));
                v
            }
        };
        for (aij, fj) in coeffs.a[i].iter().zip(&fs) {
            if let Some(aij) = aij {
                yi.axpy(h, &aij.apply(fj), 1.0);
            }
        }
        ensure_finite(&yi, DivergencePoint::Stage(i + 1))?;
        fs.push(p.f(&yi));
        if record {
            stages.push(yi);
        }
    }

    let mut y_next = match propagated.iter().find(|(k, _)| *k == 1.0) {
        Some((_, v)) => v.clone(),
        None => cache.exp_full().ok_or(IntegrationError::CacheMiss(1.0))?.apply(y0),
    };
    for (bi, fi) in coeffs.b.iter().zip(&fs) {
        if let Some(bi) = bi {
            y_next.axpy(h, &bi.apply(fi), 1.0);
        }
    }
    ensure_finite(&y_next, DivergencePoint::Update)?;
    Ok(StepResult {
        y_next,
        stage_values: record.then_some(stages),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrators::{rk4_step, Method};
    use crate::tableau::builtin;

    #[test]
    fn krogstad_reduces_to_classical_rk4_when_m_vanishes() {
        let p = crate::problems::wind_oscillation(0.3, 2.0).unwrap().with_zero_m();
        let cache = CoefficientCache::build(&Method::ErkKrogstad4.scheme(), &p, 0.1).unwrap();
        let y0 = Vector::from_vec(vec![0.4, -0.9]);
        let erk = erk_krogstad4_step(&cache, &p, &y0).unwrap().y_next;
        let rk = rk4_step(&builtin("classical-rk4").unwrap(), &p, &y0, 0.1).unwrap().y_next;
        assert!((erk - rk).amax() < 1e-15);
    }

    #[test]
    fn wrong_cache_kind_is_rejected() {
        let p = crate::problems::wind_oscillation(0.3, 2.0).unwrap();
        let cache = CoefficientCache::build(&Method::ErkKrogstad4.scheme(), &p, 0.1).unwrap();
        assert!(matches!(
            erk_hochbruck5_step(&cache, &p, p.y0()),
            Err(IntegrationError::CacheMismatch(_))
        ));
    }
}
