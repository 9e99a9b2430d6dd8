//! MVERK and SVERK steps with their matrix-free correction terms.
//!
//! With g = −My₀ + f(y₀), f' = f'(y₀) and f'' = f''(y₀), the MVERK correction
//! is
//!
//! ```text
//! w₄ = −h²/2 Mf + h³/6 (M²f − Mf'g)
//!      + h⁴/24 (−M³f + M²f'g − Mf''(g,g) − Mf'(M²y₀ − Mf + f'g))
//! ```
//!
//! and the SVERK correction adds
//!
//! ```text
//! w̄₄ − w₄ = −h³/6 f'Mf + h⁴/24 (f'M²f − f'f'Mf − f'Mf'g + 3f''(−Mf, g)).
//! ```
//!
//! Every term of w₄ starts with M, so it is evaluated as M·u with one final
//! product. M², M³ are never formed.

use super::{ensure_finite, CoefficientCache, DivergencePoint, IntegrationError, StepResult};
use crate::matfun::Vector;
use crate::problems::Problem;
use crate::tableau::Tableau;

/// Intermediate products shared by w₄ and w̄₄.
struct Correction {
    h: f64,
    g: Vector,
    mf: Vector,
    m2f: Vector,
    mjg: Vector,
    w4: Vector,
}

impl Correction {
    fn new(p: &Problem, y0: &Vector, fy0: &Vector, my0: &Vector, h: f64) -> Result<Self, IntegrationError> {
        let m = p.m();
        let g = fy0 - my0;
        let mf = m.apply(fy0);
        let m2f = m.apply(&mf);
        let jg = p.jvp(y0, &g)?;
        let mjg = m.apply(&jg);
        let hgg = p.hvp(y0, &g, &g)?;
        let inner = m.apply(my0) - &mf + &jg;
        let jinner = p.jvp(y0, &inner)?;

        let (h2, h3, h4) = (h * h / 2.0, h * h * h / 6.0, h * h * h * h / 24.0);
        let u = fy0 * (-h2) + (&mf - &jg) * h3 + (-&m2f + &mjg - hgg - jinner) * h4;
        let w4 = m.apply(&u);
        Ok(Self { h, g, mf, m2f, mjg, w4 })
    }

    fn into_w4(self) -> Vector {
        self.w4
    }

    fn into_w4_sverk(self, p: &Problem, y0: &Vector) -> Result<Vector, IntegrationError> {
        let h = self.h;
        let jmf = p.jvp(y0, &self.mf)?;
        let jm2f = p.jvp(y0, &self.m2f)?;
        let jjmf = p.jvp(y0, &jmf)?;
        let jmjg = p.jvp(y0, &self.mjg)?;
        let h_mf_g = p.hvp(y0, &-&self.mf, &self.g)?;
        let (h3, h4) = (h * h * h / 6.0, h * h * h * h / 24.0);
        let extra = &jmf * (-h3) + (jm2f - jjmf - jmjg + h_mf_g * 3.0) * h4;
        Ok(self.w4 + extra)
    }
}

/// MVERK correction w₄ at (y₀, h).
pub fn w4_mverk(p: &Problem, y0: &Vector, h: f64) -> Result<Vector, IntegrationError> {
    p.require_derivatives()?;
    let fy0 = p.f(y0);
    let my0 = p.m().apply(y0);
    Ok(Correction::new(p, y0, &fy0, &my0, h)?.into_w4())
}

/// SVERK correction w̄₄ at (y₀, h).
pub fn w4_sverk(p: &Problem, y0: &Vector, h: f64) -> Result<Vector, IntegrationError> {
    p.require_derivatives()?;
    let fy0 = p.f(y0);
    let my0 = p.m().apply(y0);
    Correction::new(p, y0, &fy0, &my0, h)?.into_w4_sverk(p, y0)
}

fn check_four_stage(t: &Tableau) -> Result<(), IntegrationError> {
    if t.stages() != 4 {
        return Err(IntegrationError::Config(format!(
            "exponential four-stage scheme needs a 4-stage tableau, got {}",
            t.stages()
        )));
    }
    Ok(())
}

/// Whether g(Y_j) is read by a later stage.
fn stage_slope_needed(t: &Tableau, j: usize) -> bool {
    (j + 1..t.stages()).any(|i| t.a(i, j) != 0.0)
}

/// One MVERK step: classical explicit stages on g(y) = −My + f(y) followed by
/// y₁ = e^{−hM}y₀ + hΣbᵢf(Yᵢ) + w₄.
pub fn mverk4_step(
    t: &Tableau,
    cache: &CoefficientCache,
    p: &Problem,
    y0: &Vector,
) -> Result<StepResult, IntegrationError> {
    mverk_step(t, cache, p, y0, false)
}

pub(super) fn mverk_step(
    t: &Tableau,
    cache: &CoefficientCache,
    p: &Problem,
    y0: &Vector,
    record: bool,
) -> Result<StepResult, IntegrationError> {
    check_four_stage(t)?;
    let h = cache.h();
    let exp_full = cache.exp_full().ok_or(IntegrationError::CacheMiss(1.0))?;
    let m = p.m();
    let s = t.stages();

    let fy0 = p.f(y0);
    let my0 = m.apply(y0);
    let mut slopes: Vec<Vector> = Vec::with_capacity(s);
    let mut fs: Vec<Vector> = Vec::with_capacity(s);
    let mut stages: Vec<Vector> = Vec::new();
    slopes.push(&fy0 - &my0);
    fs.push(fy0.clone());
    if record {
        stages.push(y0.clone());
    }
    for i in 1..s {
        let mut yi = y0.clone();
        for (j, slope) in slopes.iter().enumerate().take(i) {
            let a = t.a(i, j);
            if a != 0.0 {
                yi.axpy(h * a, slope, 1.0);
            }
        }
        ensure_finite(&yi, DivergencePoint::Stage(i + 1))?;
        let fi = p.f(&yi);
        let slope = if stage_slope_needed(t, i) {
            &fi - m.apply(&yi)
        } else {
            Vector::zeros(0)
        };
        slopes.push(slope);
        fs.push(fi);
        if record {
            stages.push(yi);
        }
    }

    let mut acc = Vector::zeros(y0.len());
    for (b, fi) in t.b().iter().zip(&fs) {
        acc.axpy(*b, fi, 1.0);
    }
    let w4 = Correction::new(p, y0, &fy0, &my0, h)?.into_w4();
    let y_next = exp_full.apply(y0) + acc * h + w4;
    ensure_finite(&y_next, DivergencePoint::Update)?;
    Ok(StepResult {
        y_next,
        stage_values: record.then_some(stages),
    })
}

/// One SVERK step: Yᵢ = e^{−cᵢhM}y₀ + hΣaᵢⱼf(Yⱼ) and
/// y₁ = e^{−hM}y₀ + hΣbᵢf(Yᵢ) + w̄₄.
pub fn sverk4_step(
    t: &Tableau,
    cache: &CoefficientCache,
    p: &Problem,
    y0: &Vector,
) -> Result<StepResult, IntegrationError> {
    sverk_step(t, cache, p, y0, false)
}

pub(super) fn sverk_step(
    t: &Tableau,
    cache: &CoefficientCache,
    p: &Problem,
    y0: &Vector,
    record: bool,
) -> Result<StepResult, IntegrationError> {
    check_four_stage(t)?;
    let h = cache.h();
    let exp_full = cache.exp_full().ok_or(IntegrationError::CacheMiss(1.0))?;
    let s = t.stages();

    // e^{−c hM} y₀ per distinct fraction.
    let mut propagated: Vec<(f64, Vector)> = Vec::with_capacity(3);
    let mut propagate = |c: f64| -> Result<Vector, IntegrationError> {
        if let Some((_, v)) = propagated.iter().find(|(k, _)| *k == c) {
            return Ok(v.clone());
        }
        let v = match cache.exp_stage(c)? {
            Some(e) => e.apply(y0),
            None => y0.clone(),
        };
        propagated.push((c, v.clone()));
        Ok(v)
    };

    let fy0 = p.f(y0);
    let mut fs: Vec<Vector> = Vec::with_capacity(s);
    let mut stages: Vec<Vector> = Vec::new();
    fs.push(fy0.clone());
    if record {
        stages.push(y0.clone());
    }
    for i in 1..s {
        let mut yi = propagate(t.c()[i])?;
        for (j, fj) in fs.iter().enumerate().take(i) {
            let a = t.a(i, j);
            if a != 0.0 {
                yi.axpy(h * a, fj, 1.0);
            }
        }
        ensure_finite(&yi, DivergencePoint::Stage(i + 1))?;
        fs.push(p.f(&yi));
        if record {
            stages.push(yi);
        }
    }

    let mut acc = Vector::zeros(y0.len());
    for (b, fi) in t.b().iter().zip(&fs) {
        acc.axpy(*b, fi, 1.0);
    }
    let my0 = p.m().apply(y0);
    let w4 = Correction::new(p, y0, &fy0, &my0, h)?.into_w4_sverk(p, y0)?;
    let base = match propagated.iter().find(|(k, _)| *k == 1.0) {
        Some((_, v)) => v.clone(),
        None => exp_full.apply(y0),
    };
    let y_next = base + acc * h + w4;
    ensure_finite(&y_next, DivergencePoint::Update)?;
    Ok(StepResult {
        y_next,
        stage_values: record.then_some(stages),
    })
}
