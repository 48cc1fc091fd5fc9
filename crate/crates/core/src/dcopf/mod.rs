//! Parametric DC optimal power flow in PTDF form.
//!
//! ```text
//! min  cᵀpᵍ
//! s.t. eᵀpᵍ = eᵀpᵈ
//!      pᶠ = PTDF·(G·pᵍ − pᵈ)
//!      p̲ᵍ ≤ pᵍ ≤ p̄ᵍ,  p̲ᶠ ≤ pᶠ ≤ p̄ᶠ
//! ```
//!
//! The bus demand vector `pᵈ` is the varying parameter; it only enters the
//! right-hand side, so every instance of a network shares one matrix.

mod matpower;
mod model;
mod ptdf;
mod sample;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use matpower::parse_matpower_case;
pub use model::{to_standard_form, DcopfModel, VariableMap};
pub use ptdf::{compute_ptdf, PtdfMatrix};
pub use sample::{sample_demand, sample_demands, sub_seed, DemandSample, SamplerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    /// Identifier from the case file.
    pub id: u32,
    /// Base demand in MW.
    pub pd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    /// Index into [`PowerNetwork::buses`].
    pub bus: usize,
    /// Linear cost, $/MW.
    pub cost: f64,
    pub pmin: f64,
    pub pmax: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    /// Per unit.
    pub susceptance: f64,
    pub fmin: f64,
    pub fmax: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerNetwork {
    base_mva: f64,
    buses: Vec<Bus>,
    generators: Vec<Generator>,
    branches: Vec<Branch>,
    slack: usize,
}

impl PowerNetwork {
    pub fn new(
        base_mva: f64,
        buses: Vec<Bus>,
        generators: Vec<Generator>,
        branches: Vec<Branch>,
        slack: usize,
    ) -> Result<Self> {
        let nb = buses.len();
        if nb == 0 {
            return Err(Error::Validation("network has no buses".into()));
        }
        if generators.is_empty() {
            return Err(Error::Validation("network has no in-service generators".into()));
        }
        if slack >= nb {
            return Err(Error::Validation(format!("slack index {slack} out of range")));
        }
        if let Some(b) = buses.iter().find(|b| !(b.pd.is_finite() && b.pd >= 0.0)) {
            return Err(Error::Validation(format!(
                "bus {} has invalid base demand {}",
                b.id, b.pd
            )));
        }
        for (k, g) in generators.iter().enumerate() {
            if g.bus >= nb {
                return Err(Error::Validation(format!("generator {k} at bus index {}", g.bus)));
            }
            if !(g.pmin < g.pmax && g.pmin.is_finite() && g.pmax.is_finite() && g.cost.is_finite())
            {
                return Err(Error::Validation(format!(
                    "generator {k} at bus {} needs finite pmin < pmax, got [{}, {}]",
                    buses[g.bus].id, g.pmin, g.pmax
                )));
            }
        }
        for (k, br) in branches.iter().enumerate() {
            if br.from >= nb || br.to >= nb || br.from == br.to {
                return Err(Error::Validation(format!("branch {k} has invalid endpoints")));
            }
            if !(br.fmin < br.fmax && br.fmin.is_finite() && br.fmax.is_finite()) {
                return Err(Error::Validation(format!(
                    "branch {k} needs finite flow limits with fmin < fmax"
                )));
            }
            if !(br.susceptance.is_finite() && br.susceptance != 0.0) {
                return Err(Error::Validation(format!("branch {k} has zero susceptance")));
            }
        }
        if !matpower::is_connected(nb, &branches) {
            return Err(Error::Validation("network is not connected".into()));
        }
        Ok(Self {
            base_mva,
            buses,
            generators,
            branches,
            slack,
        })
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    /// Index of the slack bus.
    pub fn slack(&self) -> usize {
        self.slack
    }

    pub fn base_demand(&self) -> DVector<f64> {
        DVector::from_iterator(self.buses.len(), self.buses.iter().map(|b| b.pd))
    }

    /// `Σ p̄ᵍ`
    pub fn capacity(&self) -> f64 {
        self.generators.iter().map(|g| g.pmax).sum()
    }
}
