use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lp::LpInstance;

use super::{compute_ptdf, DemandSample, PowerNetwork, PtdfMatrix};

/// Layout of `x = [pᵍ; pᶠ]` and of the rows `[balance; flows]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableMap {
    pub n_gen: usize,
    pub n_branch: usize,
    /// Bus index of each generator.
    pub gen_bus: Vec<usize>,
    /// `(from, to)` bus indices of each branch.
    pub branch_ends: Vec<(usize, usize)>,
}

impl VariableMap {
    pub fn gen_range(&self) -> Range<usize> {
        0..self.n_gen
    }

    pub fn flow_range(&self) -> Range<usize> {
        self.n_gen..self.n_gen + self.n_branch
    }

    pub const BALANCE_ROW: usize = 0;

    /// Row of the flow definition for branch `k`.
    pub fn flow_row(&self, k: usize) -> usize {
        1 + k
    }
}

/// Everything about a network's DCOPF that does not depend on demand.
#[derive(Debug, Clone)]
pub struct DcopfModel {
    net: PowerNetwork,
    ptdf: PtdfMatrix,
    a: Arc<DMatrix<f64>>,
    c: DVector<f64>,
    l: DVector<f64>,
    u: DVector<f64>,
    map: VariableMap,
}

impl DcopfModel {
    pub fn new(net: PowerNetwork) -> Result<Self> {
        let ptdf = compute_ptdf(&net)?;
        let gens = net.generators();
        let brs = net.branches();
        let (ng, nl) = (gens.len(), brs.len());
        let n = ng + nl;
        let mut a = DMatrix::zeros(1 + nl, n);
        for g in 0..ng {
            a[(0, g)] = 1.0;
        }
        for k in 0..nl {
            for (g, gen) in gens.iter().enumerate() {
                a[(1 + k, g)] = -ptdf.values[(k, gen.bus)];
            }
            a[(1 + k, ng + k)] = 1.0;
        }
        let c = DVector::from_fn(n, |j, _| if j < ng { gens[j].cost } else { 0.0 });
        let l = DVector::from_fn(n, |j, _| if j < ng { gens[j].pmin } else { brs[j - ng].fmin });
        let u = DVector::from_fn(n, |j, _| if j < ng { gens[j].pmax } else { brs[j - ng].fmax });
        let map = VariableMap {
            n_gen: ng,
            n_branch: nl,
            gen_bus: gens.iter().map(|g| g.bus).collect(),
            branch_ends: brs.iter().map(|b| (b.from, b.to)).collect(),
        };
        Ok(Self {
            net,
            ptdf,
            a: Arc::new(a),
            c,
            l,
            u,
            map,
        })
    }

    pub fn network(&self) -> &PowerNetwork {
        &self.net
    }

    pub fn ptdf(&self) -> &PtdfMatrix {
        &self.ptdf
    }

    pub fn map(&self) -> &VariableMap {
        &self.map
    }

    pub fn n_bus(&self) -> usize {
        self.net.buses().len()
    }

    /// `[eᵀpᵈ; −PTDF·pᵈ]`
    pub fn rhs(&self, pd: &DVector<f64>) -> Result<DVector<f64>> {
        if pd.len() != self.n_bus() {
            return Err(Error::dims("demand vector", self.n_bus(), pd.len()));
        }
        let mut b = DVector::zeros(1 + self.map.n_branch);
        b[0] = pd.sum();
        let flows = &self.ptdf.values * pd;
        for k in 0..self.map.n_branch {
            b[1 + k] = -flows[k];
        }
        Ok(b)
    }

    pub fn instance(&self, pd: &DVector<f64>) -> Result<LpInstance> {
        LpInstance::with_shared_matrix(
            Arc::clone(&self.a),
            self.rhs(pd)?,
            self.c.clone(),
            self.l.clone(),
            self.u.clone(),
        )
    }

    /// Instance with zero demand; its matrix, costs and bounds are those of
    /// every instance of the family.
    pub fn template(&self) -> Result<LpInstance> {
        self.instance(&DVector::zeros(self.n_bus()))
    }
}

/// One-off conversion of a demand sample to standard form.
pub fn to_standard_form(
    net: &PowerNetwork,
    sample: &DemandSample,
) -> Result<(LpInstance, VariableMap)> {
    let model = DcopfModel::new(net.clone())?;
    let inst = model.instance(&sample.beta)?;
    Ok((inst, model.map))
}
