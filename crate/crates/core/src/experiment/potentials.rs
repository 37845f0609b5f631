//! Built-in test potentials.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Grid, PotentialField};

/// A named potential evaluated exactly at the mesh nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum BuiltinPotential {
    /// `-1 / (1 + exp((|x - 15| - 4) / 2))`.
    FermiWell,
    /// `(cos(2 pi (x - 15) / 10) - 1) / 4` on `[5, 25]`, zero elsewhere.
    CosineWell,
    Zero,
    /// `omega^2 (x - c)^2 / 2` about the mesh centre `c`.
    Harmonic(f64),
}

impl BuiltinPotential {
    pub fn eval(&self, x: f64, grid: &Grid) -> f64 {
        match *self {
            BuiltinPotential::FermiWell => fermi_well(x),
            BuiltinPotential::CosineWell => cosine_well(x),
            BuiltinPotential::Zero => 0.0,
            BuiltinPotential::Harmonic(omega) => {
                let c = 0.5 * (grid.x_min() + grid.x_max());
                0.5 * omega * omega * (x - c) * (x - c)
            }
        }
    }
}

pub fn fermi_well(x: f64) -> f64 {
    -1.0 / (1.0 + (0.5 * ((x - 15.0).abs() - 4.0)).exp())
}

pub fn cosine_well(x: f64) -> f64 {
    if (5.0..=25.0).contains(&x) {
        0.25 * ((std::f64::consts::TAU / 10.0 * (x - 15.0)).cos() - 1.0)
    } else {
        0.0
    }
}

/// Samples a built-in potential on the mesh.
pub fn builtin_potential(potential: BuiltinPotential, grid: &Grid) -> Result<PotentialField> {
    PotentialField::from_fn(grid, |x| potential.eval(x, grid))
}

impl FromStr for BuiltinPotential {
    type Err = Error;

    /// `fermi_well`, `cosine_well`, `zero` or `harmonic(OMEGA)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "fermi_well" => return Ok(BuiltinPotential::FermiWell),
            "cosine_well" => return Ok(BuiltinPotential::CosineWell),
            "zero" => return Ok(BuiltinPotential::Zero),
            _ => {}
        }
        if let Some(arg) = s.strip_prefix("harmonic(").and_then(|r| r.strip_suffix(')')) {
            let omega: f64 = arg
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad harmonic frequency '{arg}'")))?;
            if !(omega > 0.0 && omega.is_finite()) {
                return Err(Error::Config(format!(
                    "harmonic frequency must be positive, got {omega}"
                )));
            }
            return Ok(BuiltinPotential::Harmonic(omega));
        }
        Err(Error::Config(format!(
            "unknown potential '{s}' (expected fermi_well, cosine_well, zero or harmonic(OMEGA))"
        )))
    }
}

impl TryFrom<String> for BuiltinPotential {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<BuiltinPotential> for String {
    fn from(p: BuiltinPotential) -> String {
        p.to_string()
    }
}

impl fmt::Display for BuiltinPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BuiltinPotential::FermiWell => write!(f, "fermi_well"),
            BuiltinPotential::CosineWell => write!(f, "cosine_well"),
            BuiltinPotential::Zero => write!(f, "zero"),
            BuiltinPotential::Harmonic(w) => write!(f, "harmonic({w})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_grid, PhysicsParams};
    use approx::assert_relative_eq;

    #[test]
    fn reference_values() {
        assert_relative_eq!(fermi_well(15.0), -1.0 / (1.0 + (-2.0f64).exp()), max_relative = 1e-15);
        assert_relative_eq!(fermi_well(15.0), -0.8808, epsilon = 1e-4);
        assert_relative_eq!(cosine_well(10.0), -0.5, epsilon = 1e-15);
        assert_relative_eq!(cosine_well(20.0), -0.5, epsilon = 1e-15);
        assert_eq!(cosine_well(15.0), 0.0);
        assert_eq!(cosine_well(4.0), 0.0);
        let p = PhysicsParams::new(1.0, 1.0).unwrap();
        let g = build_grid(30, 0.0, 29.0, 30, &p).unwrap();
        let z = builtin_potential(BuiltinPotential::Zero, &g).unwrap();
        assert!(z.values().iter().all(|&x| x == 0.0));
        let h = builtin_potential("harmonic(2)".parse().unwrap(), &g).unwrap();
        assert_relative_eq!(h.values()[0], 2.0 * 14.5 * 14.5, max_relative = 1e-14);
    }

    #[test]
    fn names_round_trip() {
        for s in ["fermi_well", "cosine_well", "zero", "harmonic(0.5)"] {
            let p: BuiltinPotential = s.parse().unwrap();
            assert_eq!(p.to_string(), s);
        }
        assert!("harmonic(-1)".parse::<BuiltinPotential>().is_err());
        assert!("square".parse::<BuiltinPotential>().is_err());
    }
}
