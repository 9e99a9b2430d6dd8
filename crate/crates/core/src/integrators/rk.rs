use super::{ensure_finite, DivergencePoint, IntegrationError, StepResult};
use crate::matfun::Vector;
use crate::problems::Problem;
use crate::tableau::Tableau;

/// Explicit RK step on y' = g(y) = −My + f(y).
pub fn rk4_step(t: &Tableau, p: &Problem, y0: &Vector, h: f64) -> Result<StepResult, IntegrationError> {
    rk_step(t, p, y0, h, false)
}

pub(super) fn rk_step(
    t: &Tableau,
    p: &Problem,
    y0: &Vector,
    h: f64,
    record: bool,
) -> Result<StepResult, IntegrationError> {
    let m = p.m();
    let s = t.stages();
    let mut slopes: Vec<Vector> = Vec::with_capacity(s);
    let mut stages = Vec::new();
    for i in 0..s {
        let mut yi = y0.clone();
        for (j, slope) in slopes.iter().enumerate().take(i) {
            let a = t.a(i, j);
            if a != 0.0 {
                yi.axpy(h * a, slope, 1.0);
            }
        }
        ensure_finite(&yi, DivergencePoint::Stage(i + 1))?;
        slopes.push(p.f(&yi) - m.apply(&yi));
        if record {
            stages.push(yi);
        }
    }
    let mut acc = Vector::zeros(y0.len());
    for (b, slope) in t.b().iter().zip(&slopes) {
        acc.axpy(*b, slope, 1.0);
    }
    let y_next = y0 + acc * h;
    ensure_finite(&y_next, DivergencePoint::Update)?;
    Ok(StepResult {
        y_next,
        stage_values: record.then_some(stages),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{scalar_toy, ToyKind};
    use crate::tableau::builtin;

    #[test]
    fn linear_decay_gives_quartic_taylor() {
        let p = scalar_toy(1.0, ToyKind::Linear);
        let t = builtin("classical-rk4").unwrap();
        let y1 = rk4_step(&t, &p, p.y0(), 0.1).unwrap().y_next[0];
        assert!((y1 - 0.9048375).abs() < 1e-15, "{y1}");
    }

    #[test]
    fn growth_without_linear_part() {
        let p = crate::problems::Problem::new(
            "growth",
            crate::matfun::DenseMatrix::zeros(1, 1),
            Vector::from_vec(vec![1.0]),
            (0.0, 1.0),
            |y| y.clone(),
        );
        let t = builtin("classical-rk4").unwrap();
        let y1 = rk4_step(&t, &p, p.y0(), 0.1).unwrap().y_next[0];
        let taylor = 1.0 + 0.1 + 0.01 / 2.0 + 0.001 / 6.0 + 0.0001 / 24.0;
        assert!((y1 - taylor).abs() < 1e-15);
        assert!((y1 - 1.1051708333333333).abs() < 1e-15);
    }

    #[test]
    fn records_stage_values() {
        let p = scalar_toy(1.0, ToyKind::Linear);
        let t = builtin("classical-rk4").unwrap();
        let r = rk_step(&t, &p, p.y0(), 0.1, true).unwrap();
        let stages = r.stage_values.unwrap();
        assert_eq!(stages.len(), 4);
        assert_eq!(stages[0][0], 1.0);
        assert!((stages[1][0] - 0.95).abs() < 1e-16);
    }
}
