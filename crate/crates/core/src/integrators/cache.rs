use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use super::{ErkKind, IntegrationError, Scheme};
use crate::matfun::{matexp, phi_set, DenseMatrix, PhiSet};
use crate::problems::Problem;

/// Matrix-valued coefficients of a φ-function scheme, already combined:
/// `a[i][j]` is a_{ij}(−hM) (None when identically zero) and `b[i]` likewise.
#[derive(Debug, Clone)]
pub struct ErkCoefficients {
    pub kind: ErkKind,
    pub c: Vec<f64>,
    pub a: Vec<Vec<Option<DenseMatrix>>>,
    pub b: Vec<Option<DenseMatrix>>,
}

/// Matrix functions of hM for one (M, h) pair.
///
/// Exponentials are keyed by stage fraction c (not by stage index) so that
/// repeated abscissae share one matrix; the entry for c = 1 is the full-step
/// exponential itself.
#[derive(Debug, Clone)]
pub struct CoefficientCache {
    h: f64,
    dim: usize,
    fingerprint: u64,
    exp_full: Option<DenseMatrix>,
    exp_stage: Vec<(f64, DenseMatrix)>,
    phi_stage: Vec<(f64, PhiSet)>,
    erk: Option<ErkCoefficients>,
}

fn fingerprint(m: &DenseMatrix) -> u64 {
    let mut hasher = DefaultHasher::new();
    m.rows().hash(&mut hasher);
    for x in m.inner().iter() {
        x.to_bits().hash(&mut hasher);
    }
    hasher.finish()
}

impl CoefficientCache {
    /// Precomputes everything `scheme` needs for stepsize `h` on `p`.
    pub fn build(scheme: &Scheme, p: &Problem, h: f64) -> Result<Self, IntegrationError> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(IntegrationError::Config(format!("stepsize must be positive, got {h}")));
        }
        let mut cache = Self {
            h,
            dim: p.dim(),
            fingerprint: fingerprint(p.m()),
            exp_full: None,
            exp_stage: Vec::new(),
            phi_stage: Vec::new(),
            erk: None,
        };
        let minus_hm = p.m().scaled(-h);
        match scheme {
            Scheme::Rk(_) => {}
            Scheme::Mverk(_) => {
                cache.exp_full = Some(matexp(&minus_hm)?);
            }
            Scheme::Sverk(t) => {
                cache.exp_full = Some(matexp(&minus_hm)?);
                for &c in t.c() {
                    cache.insert_exp(c, &minus_hm)?;
                }
            }
            Scheme::Erk(kind) => {
                cache.exp_full = Some(matexp(&minus_hm)?);
                for c in [0.5, 1.0] {
                    cache.insert_exp(c, &minus_hm)?;
                    cache.phi_stage.push((c, phi_set(&minus_hm.scaled(c), 3)?));
                }
                cache.erk = Some(cache.erk_coefficients(*kind));
            }
        }
        Ok(cache)
    }

    fn insert_exp(&mut self, c: f64, minus_hm: &DenseMatrix) -> Result<(), IntegrationError> {
        if c == 0.0 || self.exp_stage.iter().any(|(k, _)| *k == c) {
            return Ok(());
        }
        let e = if c == 1.0 {
            self.exp_full.clone().expect("full exponential built first")
        } else {
            matexp(&minus_hm.scaled(c))?
        };
        self.exp_stage.push((c, e));
        Ok(())
    }

    fn erk_coefficients(&self, kind: ErkKind) -> ErkCoefficients {
        let half = &self.phi_stage[0].1;
        let full = &self.phi_stage[1].1;
        let p = |j: usize| half.phi(j);
        let q = |j: usize| full.phi(j);
        let lin = |terms: &[(f64, &DenseMatrix)]| -> DenseMatrix {
            let n = self.dim;
            terms
                .iter()
                .fold(DenseMatrix::zeros(n, n), |acc, (w, m)| &acc + &m.scaled(*w))
        };
        // Weights shared by both schemes.
        let b1 = lin(&[(1.0, q(1)), (-3.0, q(2)), (4.0, q(3))]);
        let b_last = lin(&[(-1.0, q(2)), (4.0, q(3))]);
        let a21 = lin(&[(0.5, p(1))]);
        let a31 = lin(&[(0.5, p(1)), (-1.0, p(2))]);
        let a32 = p(2).clone();
        let a41 = lin(&[(1.0, q(1)), (-2.0, q(2))]);
        match kind {
            ErkKind::Hochbruck5 => {
                let a52 = lin(&[(0.5, p(2)), (-1.0, q(3)), (0.25, q(2)), (-0.5, p(3))]);
                let a54 = lin(&[(0.25, p(2)), (-1.0, &a52)]);
                let a51 = lin(&[(0.5, p(1)), (-2.0, &a52), (-1.0, &a54)]);
                let b5 = lin(&[(4.0, q(2)), (-8.0, q(3))]);
                ErkCoefficients {
                    kind,
                    c: vec![0.0, 0.5, 0.5, 1.0, 0.5],
                    a: vec![
                        vec![],
                        vec![Some(a21)],
                        vec![Some(a31), Some(a32)],
                        vec![Some(a41), Some(q(2).clone()), Some(q(2).clone())],
                        vec![Some(a51), Some(a52.clone()), Some(a52), Some(a54)],
                    ],
                    b: vec![Some(b1), None, None, Some(b_last), Some(b5)],
                }
            }
            ErkKind::Krogstad4 => {
                let a43 = q(2).scaled(2.0);
                let b_mid = lin(&[(2.0, q(2)), (-4.0, q(3))]);
                ErkCoefficients {
                    kind,
                    c: vec![0.0, 0.5, 0.5, 1.0],
                    a: vec![
                        vec![],
                        vec![Some(a21)],
                        vec![Some(a31), Some(a32)],
                        vec![Some(a41), None, Some(a43)],
                    ],
                    b: vec![Some(b1), Some(b_mid.clone()), Some(b_mid), Some(b_last)],
                }
            }
        }
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// e^{−hM}, absent for non-exponential schemes.
    pub fn exp_full(&self) -> Option<&DenseMatrix> {
        self.exp_full.as_ref()
    }

    /// e^{−c·hM}. `Ok(None)` means c = 0, i.e. the identity.
    pub fn exp_stage(&self, c: f64) -> Result<Option<&DenseMatrix>, IntegrationError> {
        if c == 0.0 {
            return Ok(None);
        }
        self.exp_stage
            .iter()
            .find(|(k, _)| *k == c)
            .map(|(_, e)| Some(e))
            .ok_or(IntegrationError::CacheMiss(c))
    }

    /// Cached stage fractions with their exponentials.
    pub fn stage_exponentials(&self) -> &[(f64, DenseMatrix)] {
        &self.exp_stage
    }

    /// φ_j(−c·hM) for j = 0..=3.
    pub fn phi_stage(&self, c: f64) -> Option<&PhiSet> {
        self.phi_stage.iter().find(|(k, _)| *k == c).map(|(_, s)| s)
    }

    pub fn erk(&self) -> Option<&ErkCoefficients> {
        self.erk.as_ref()
    }

    /// Checks that the cache was built for this problem's M and stepsize h.
    pub fn validate_for(&self, p: &Problem, h: f64) -> Result<(), IntegrationError> {
        if self.h != h {
            return Err(IntegrationError::CacheMismatch(format!(
                "built for h = {}, used with h = {h}",
                self.h
            )));
        }
        if self.dim != p.dim() || self.fingerprint != fingerprint(p.m()) {
            return Err(IntegrationError::CacheMismatch(format!(
                "built for a different matrix than problem `{}`",
                p.label()
            )));
        }
        Ok(())
    }

    /// Whether the cache holds the entries `scheme` reads.
    pub(crate) fn supports(&self, scheme: &Scheme) -> Result<(), IntegrationError> {
        match scheme {
            Scheme::Rk(_) => Ok(()),
            Scheme::Mverk(_) => self.require_full(),
            Scheme::Sverk(t) => {
                self.require_full()?;
                for &c in t.c() {
                    self.exp_stage(c)?;
                }
                Ok(())
            }
            Scheme::Erk(kind) => match &self.erk {
                Some(e) if e.kind == *kind => Ok(()),
                _ => Err(IntegrationError::CacheMismatch(format!(
                    "no {kind:?} coefficients in cache"
                ))),
            },
        }
    }

    fn require_full(&self) -> Result<(), IntegrationError> {
        self.exp_full
            .as_ref()
            .map(|_| ())
            .ok_or(IntegrationError::CacheMiss(1.0))
    }
}
