use super::{DirectionField, PiecewiseMap};
use crate::error::{Error, Result};

/// A one-parameter curve of maps with a known velocity field.
pub trait FamilyCurve: Sync {
    /// Closed parameter interval.
    fn domain(&self) -> (f64, f64);

    /// The map at `t`; fails when `t` is outside the domain or the map is invalid.
    fn map_at(&self, t: f64) -> Result<PiecewiseMap>;

    /// `d/ds f_s` at `s = t`.
    fn velocity_at(&self, t: f64) -> Result<DirectionField>;

    fn check_domain(&self, t: f64) -> Result<()> {
        let (lo, hi) = self.domain();
        if t.is_nan() || t < lo || t > hi {
            Err(Error::ParameterOutOfDomain { t, lo, hi })
        } else {
            Ok(())
        }
    }
}

/// `field` multiplied by `sum_j t_coeffs[j] t^(j+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyTerm {
    pub field: DirectionField,
    pub t_coeffs: Vec<f64>,
}

impl FamilyTerm {
    pub fn linear(field: DirectionField) -> Self {
        FamilyTerm {
            field,
            t_coeffs: vec![1.0],
        }
    }

    fn weight(&self, t: f64) -> f64 {
        self.t_coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, &c| acc * t + c)
            * t
    }

    fn weight_rate(&self, t: f64) -> f64 {
        self.t_coeffs
            .iter()
            .enumerate()
            .rev()
            .fold(0.0, |acc, (j, &c)| acc * t + c * (j + 1) as f64)
    }
}

/// `f_t = base + sum_k p_k(t) field_k` with polynomial weights vanishing at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct MapFamily {
    pub base: PiecewiseMap,
    pub terms: Vec<FamilyTerm>,
    pub domain: (f64, f64),
}

impl MapFamily {
    pub fn new(base: PiecewiseMap, terms: Vec<FamilyTerm>, domain: (f64, f64)) -> Result<Self> {
        if !(domain.0 <= 0.0 && 0.0 <= domain.1) {
            return Err(Error::Config(format!(
                "family domain [{}, {}] must contain 0",
                domain.0, domain.1
            )));
        }
        for term in &terms {
            if term.field.is_boundary_free() {
                return Err(Error::Config(
                    "family directions must vanish on the boundary".into(),
                ));
            }
        }
        Ok(MapFamily {
            base,
            terms,
            domain,
        })
    }

    /// `base + t v`
    pub fn linear(base: PiecewiseMap, v: DirectionField, delta: f64) -> Result<Self> {
        Self::new(base, vec![FamilyTerm::linear(v)], (-delta, delta))
    }

    /// The map at `t`, without validation.
    pub fn assemble(&self, t: f64) -> PiecewiseMap {
        self.terms
            .iter()
            .fold(self.base.clone(), |f, term| f.perturbed(&term.field, term.weight(t)))
    }
}

impl FamilyCurve for MapFamily {
    fn domain(&self) -> (f64, f64) {
        self.domain
    }

    fn map_at(&self, t: f64) -> Result<PiecewiseMap> {
        self.check_domain(t)?;
        let f = self.assemble(t);
        f.require_valid()?;
        Ok(f)
    }

    fn velocity_at(&self, t: f64) -> Result<DirectionField> {
        self.check_domain(t)?;
        Ok(self
            .terms
            .iter()
            .fold(DirectionField::zero(), |v, term| {
                v.add_scaled(&term.field, term.weight_rate(t))
            }))
    }
}
