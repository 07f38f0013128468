//! Spring-damper penalty forces from bone contacts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec3;
use crate::obb::{ContactResult, ObbLabel};

#[derive(Debug, Error, PartialEq)]
pub enum ForceParamsError {
    #[error("spring constant must be positive, got {0}")]
    Stiffness(f64),
    #[error("damping constant must be non-negative, got {0}")]
    Damping(f64),
    #[error("force saturation must be positive, got {0}")]
    Saturation(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForceParams {
    /// Contact spring constant, N/m.
    pub k: f64,
    /// Damping constant, N*s/m.
    pub c: f64,
    /// Magnitude cap on the rendered force, N.
    #[serde(default)]
    pub f_max: Option<f64>,
}

impl Default for ForceParams {
    fn default() -> Self {
        Self { k: 1000.0, c: 10.0, f_max: Some(30.0) }
    }
}

impl ForceParams {
    /// Same constants with saturation turned off.
    pub fn unsaturated(self) -> Self {
        Self { f_max: None, ..self }
    }

    pub fn validate(&self) -> Result<(), ForceParamsError> {
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(ForceParamsError::Stiffness(self.k));
        }
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(ForceParamsError::Damping(self.c));
        }
        if let Some(m) = self.f_max {
            if !(m > 0.0) {
                return Err(ForceParamsError::Saturation(m));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ForceResult {
    pub f_col: Vec3,
    pub f_global: Vec3,
    pub per_contact: Vec<((ObbLabel, ObbLabel), Vec3)>,
}

/// `depth * normal * k`, zero for a non-colliding result.
pub fn contact_force(contact: &ContactResult, params: &ForceParams) -> Vec3 {
    if !contact.colliding {
        return Vec3::zeros();
    }
    contact.normal * (contact.depth * params.k)
}

pub fn aggregate_contact_forces(contacts: &[ContactResult], params: &ForceParams) -> Vec3 {
    contacts
        .iter()
        .filter(|c| c.colliding)
        .fold(Vec3::zeros(), |acc, c| acc + contact_force(c, params))
}

/// `f_col - velocity * c`, optionally clamped to `f_max` in magnitude.
pub fn global_force(f_col: &Vec3, velocity: &Vec3, params: &ForceParams) -> Vec3 {
    let f = f_col - velocity * params.c;
    match params.f_max {
        Some(cap) if f.norm() > cap => f * (cap / f.norm()),
        _ => f,
    }
}

/// Full force evaluation for one tick of contacts.
pub fn evaluate(contacts: &[ContactResult], velocity: &Vec3, params: &ForceParams) -> ForceResult {
    let per_contact: Vec<_> = contacts
        .iter()
        .filter(|c| c.colliding)
        .map(|c| (c.pair, contact_force(c, params)))
        .collect();
    let f_col = per_contact.iter().fold(Vec3::zeros(), |acc, (_, f)| acc + f);
    ForceResult { f_col, f_global: global_force(&f_col, velocity, params), per_contact }
}
