use nalgebra::DMatrix;

use crate::error::{Error, Result};

use super::PowerNetwork;

/// Branch × bus sensitivities of flows to nodal injections, with the slack
/// bus absorbing the balance.
#[derive(Debug, Clone, PartialEq)]
pub struct PtdfMatrix {
    pub values: DMatrix<f64>,
    pub slack: usize,
}

/// `PTDF = B_f · B⁻¹` on the reduced system with the slack row and column
/// removed; the slack column of the result is zero.
pub fn compute_ptdf(net: &PowerNetwork) -> Result<PtdfMatrix> {
    let nb = net.buses().len();
    let nl = net.branches().len();
    let slack = net.slack();
    // Reduced index of each bus, None for the slack.
    let red: Vec<Option<usize>> = (0..nb)
        .map(|i| match i.cmp(&slack) {
            std::cmp::Ordering::Less => Some(i),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(i - 1),
        })
        .collect();
    let nr = nb - 1;
    let mut values = DMatrix::zeros(nl, nb);
    if nr == 0 {
        return Ok(PtdfMatrix { values, slack });
    }

    let mut bbus = DMatrix::<f64>::zeros(nr, nr);
    // Transposed reduced branch matrix, buses × branches.
    let mut bf_t = DMatrix::<f64>::zeros(nr, nl);
    for (k, br) in net.branches().iter().enumerate() {
        let b = br.susceptance;
        let (f, t) = (red[br.from], red[br.to]);
        if let Some(f) = f {
            bbus[(f, f)] += b;
            bf_t[(f, k)] = b;
        }
        if let Some(t) = t {
            bbus[(t, t)] += b;
            bf_t[(t, k)] = -b;
        }
        if let (Some(f), Some(t)) = (f, t) {
            bbus[(f, t)] -= b;
            bbus[(t, f)] -= b;
        }
    }
    // B is symmetric, so B⁻¹·B_fᵀ is the transpose of the reduced PTDF.
    let lu = bbus.lu();
    let x = lu
        .solve(&bf_t)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Singular("reduced susceptance matrix is singular".into()))?;
    for i in 0..nb {
        if let Some(r) = red[i] {
            for k in 0..nl {
                values[(k, i)] = x[(r, k)];
            }
        }
    }
    Ok(PtdfMatrix { values, slack })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dcopf::{Branch, Bus, Generator};
    use nalgebra::DVector;

    fn line(from: usize, to: usize, b: f64) -> Branch {
        Branch {
            from,
            to,
            susceptance: b,
            fmin: -100.0,
            fmax: 100.0,
        }
    }

    fn net(nb: usize, branches: Vec<Branch>, slack: usize) -> PowerNetwork {
        let buses = (0..nb).map(|i| Bus { id: i as u32 + 1, pd: 0.0 }).collect();
        let gens = vec![Generator {
            bus: 0,
            cost: 1.0,
            pmin: 0.0,
            pmax: 1.0,
        }];
        PowerNetwork::new(100.0, buses, gens, branches, slack).unwrap()
    }

    #[test]
    fn triangle_unit_transfer() {
        let n = net(3, vec![line(0, 1, 10.0), line(0, 2, 10.0), line(1, 2, 10.0)], 2);
        let p = compute_ptdf(&n).unwrap();
        // Inject 1 at bus 1, withdrawn at the slack.
        let flows = &p.values * DVector::from_vec(vec![1.0, 0.0, -1.0]);
        assert!((flows[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((flows[1] - 2.0 / 3.0).abs() < 1e-12);
        assert!((flows[2] - 1.0 / 3.0).abs() < 1e-12);
        assert!(p.values.column(2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_bus_line() {
        let n = net(2, vec![line(0, 1, 3.0)], 1);
        let p = compute_ptdf(&n).unwrap();
        assert_eq!(p.values.nrows(), 1);
        assert!((p.values[(0, 0)] - 1.0).abs() < 1e-14);
        assert_eq!(p.values[(0, 1)], 0.0);
    }

    #[test]
    fn flows_invariant_to_slack_for_balanced_injections() {
        let branches = vec![line(0, 1, 5.0), line(1, 2, 2.0), line(2, 3, 4.0), line(3, 0, 1.0), line(0, 2, 3.0)];
        let inj = DVector::from_vec(vec![1.0, -0.3, 0.5, -1.2]);
        let f0 = &compute_ptdf(&net(4, branches.clone(), 0)).unwrap().values * &inj;
        let f3 = &compute_ptdf(&net(4, branches, 3)).unwrap().values * &inj;
        assert!((f0 - f3).amax() < 1e-12);
    }
}
