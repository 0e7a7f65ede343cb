//! Iterative non-overlapping domain decomposition on the two-strip split.
//!
//! Each step solves both subdomains with the current interface data, then
//! swaps updated data across the interface:
//!
//!   g_out = -g_in - 2 i kappa omega * trace(E)
//!
//! where `g_in` is the data the subdomain just consumed and `trace(E)` the
//! tangential interface trace of its solution, both expressed as edge-dof
//! coefficient blocks. With the identity interface operator this is the
//! classical impedance-transmission sweep; its fixed point coincides with
//! the single-domain discretization.

use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{BoundaryTag, Subdomain};
use crate::nedelec::DofMap;
use crate::quadrature::gauss_legendre;
use crate::sparse::CsrMatrix;
use crate::system::{BoundaryField, FeFunction, MaterialParams, SubdomainOperator};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Interface data block: `edge_fns` complex coefficients per interface edge,
/// edges ordered left to right, produced by subdomain `from` for subdomain
/// `to`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceTrace {
    pub from: usize,
    pub to: usize,
    pub values: Vec<Complex64>,
}

impl InterfaceTrace {
    pub fn zero(from: usize, to: usize, len: usize) -> InterfaceTrace {
        InterfaceTrace {
            from,
            to,
            values: vec![ZERO; len],
        }
    }

    pub fn edge_block(&self, edge_rank: usize, edge_fns: usize) -> &[Complex64] {
        &self.values[edge_rank * edge_fns..(edge_rank + 1) * edge_fns]
    }

    /// Euclidean norm over all coefficients.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }
}

fn neighbor_of(sub: &Subdomain) -> usize {
    sub.boundary_tags
        .values()
        .find_map(|t| match t {
            BoundaryTag::Interface(j) => Some(*j),
            _ => None,
        })
        .unwrap_or(sub.id)
}

/// Interface-edge coefficients of a solution, ordered like
/// `interface_edges()`. The edge-dof coefficients are exactly the discrete
/// tangential trace representation.
pub fn extract_tangential_trace(solution: &FeFunction) -> InterfaceTrace {
    let dof_map = &solution.dof_map;
    let sub = &dof_map.subdomain;
    let mut values = Vec::new();
    for edge in sub.interface_edges() {
        for dof in dof_map.edge_dofs(edge) {
            values.push(solution.coefficients[dof]);
        }
    }
    InterfaceTrace {
        from: sub.id,
        to: neighbor_of(sub),
        values,
    }
}

/// The interface update: from the data a subdomain consumed and the solution
/// it produced, build the data for the neighbour.
pub fn update_trace(
    g_in: &InterfaceTrace,
    solution: &FeFunction,
    params: &MaterialParams,
) -> Result<InterfaceTrace> {
    let trace = extract_tangential_trace(solution);
    if trace.values.len() != g_in.values.len() {
        return Err(Error::invalid(format!(
            "trace length {} does not match interface data length {}",
            trace.values.len(),
            g_in.values.len()
        )));
    }
    let two_c = 2.0 * params.robin_coefficient();
    let values = g_in
        .values
        .iter()
        .zip(&trace.values)
        .map(|(g, t)| -g - two_c * t)
        .collect();
    Ok(InterfaceTrace {
        from: trace.from,
        to: trace.to,
        values,
    })
}

/// One recorded step of the iteration.
#[derive(Debug, Clone)]
pub struct DdmStep {
    pub e0: FeFunction,
    pub e1: FeFunction,
    /// Data produced for subdomain 1 after this step's update.
    pub g01: InterfaceTrace,
    /// Data produced for subdomain 0.
    pub g10: InterfaceTrace,
    /// ||g^k - g^{k-1}|| over both directions; defined from step 1 on
    /// (the step-1 residual measures the distance from the zero start).
    pub residual: f64,
}

/// Full record of a DDM run, step-indexed from 1.
#[derive(Debug, Clone)]
pub struct DdmHistory {
    pub steps: Vec<DdmStep>,
}

impl DdmHistory {
    pub fn last(&self) -> &DdmStep {
        self.steps.last().expect("at least one step")
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.residual).collect()
    }

    /// History CSV: one row per step with the residual and every trace
    /// coefficient. The first line names all columns:
    /// `step,residual,g01_e<edge>_f<fn>_<re|im>,...` followed by the g10
    /// block in the same layout.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let n = self.steps.first().map_or(0, |s| s.g01.values.len());
        let edge_fns = 4.min(n.max(1));
        let mut header = String::from("step,residual");
        for dir in ["g01", "g10"] {
            for k in 0..n {
                for part in ["re", "im"] {
                    header.push_str(&format!(",{dir}_e{}_f{}_{part}", k / edge_fns, k % edge_fns));
                }
            }
        }
        writeln!(out, "{header}")?;
        for (k, step) in self.steps.iter().enumerate() {
            let mut row = format!("{},{:.17e}", k + 1, step.residual);
            for trace in [&step.g01, &step.g10] {
                for v in &trace.values {
                    row.push_str(&format!(",{:.17e},{:.17e}", v.re, v.im));
                }
            }
            writeln!(out, "{row}")?;
        }
        Ok(())
    }
}

/// Pair of factorized subdomain operators, reusable across steps and
/// incident fields.
pub struct DdmSolver {
    pub ops: [SubdomainOperator; 2],
}

impl DdmSolver {
    pub fn new(
        dof_maps: (&Arc<DofMap>, &Arc<DofMap>),
        params: &MaterialParams,
    ) -> Result<DdmSolver> {
        Ok(DdmSolver {
            ops: [
                SubdomainOperator::new(dof_maps.0, params)?,
                SubdomainOperator::new(dof_maps.1, params)?,
            ],
        })
    }

    fn params(&self) -> MaterialParams {
        self.ops[0].params
    }

    fn trace_len(&self) -> usize {
        let sub = &self.ops[0].dof_map.subdomain;
        sub.interface_edges().len() * self.ops[0].dof_map.order.edge_fns()
    }

    /// Run `k_steps` full steps from zero interface data.
    pub fn run(&self, bc: &BoundaryField, k_steps: usize) -> Result<DdmHistory> {
        if k_steps == 0 {
            return Err(Error::invalid("the iteration needs at least one step"));
        }
        let params = self.params();
        let len = self.trace_len();
        let mut g_to0 = InterfaceTrace::zero(1, 0, len);
        let mut g_to1 = InterfaceTrace::zero(0, 1, len);
        let mut steps = Vec::with_capacity(k_steps);
        for k in 1..=k_steps {
            let annotate = |subdomain: usize| {
                move |source: Error| Error::DdmStep {
                    step: k,
                    subdomain,
                    source: Box::new(source),
                }
            };
            let e0 = self.ops[0]
                .solve(bc, Some(&g_to0.values))
                .map_err(annotate(0))?;
            let e1 = self.ops[1]
                .solve(bc, Some(&g_to1.values))
                .map_err(annotate(1))?;
            let new_to1 = update_trace(&g_to0, &e0, &params)?;
            let new_to0 = update_trace(&g_to1, &e1, &params)?;
            let residual = (delta_sq(&new_to0, &g_to0) + delta_sq(&new_to1, &g_to1)).sqrt();
            g_to0 = new_to0;
            g_to1 = new_to1;
            steps.push(DdmStep {
                e0,
                e1,
                g01: g_to1.clone(),
                g10: g_to0.clone(),
                residual,
            });
        }
        Ok(DdmHistory { steps })
    }
}

fn delta_sq(a: &InterfaceTrace, b: &InterfaceTrace) -> f64 {
    a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum()
}

/// Convenience wrapper: build the operators and run.
pub fn ddm_run(
    dof_maps: (&Arc<DofMap>, &Arc<DofMap>),
    params: &MaterialParams,
    bc: &BoundaryField,
    k_steps: usize,
) -> Result<DdmHistory> {
    DdmSolver::new(dof_maps, params)?.run(bc, k_steps)
}

/// L2 norm over the interface of the tangential-trace mismatch between the
/// two subdomain solutions, by edge quadrature.
pub fn interface_jump(e0: &FeFunction, e1: &FeFunction) -> f64 {
    let (d0, d1) = (&e0.dof_map, &e1.dof_map);
    let edges0 = d0.subdomain.interface_edges();
    let edges1 = d1.subdomain.interface_edges();
    assert_eq!(edges0.len(), edges1.len(), "interfaces must match");
    let q = d0.order.quadrature_points() + 2;
    let rule = gauss_legendre(q);
    let h = d0.subdomain.mesh.cell_size();
    let mut total = 0.0;
    for (&ea, &eb) in edges0.iter().zip(&edges1) {
        let basis0 = crate::system::EdgeBasis::build(d0, ea);
        let basis1 = crate::system::EdgeBasis::build(d1, eb);
        let c0: Vec<Complex64> = d0.edge_dofs(ea).iter().map(|&d| e0.coefficients[d]).collect();
        let c1: Vec<Complex64> = d1.edge_dofs(eb).iter().map(|&d| e1.coefficients[d]).collect();
        for (&s, &w) in rule.points.iter().zip(&rule.weights) {
            let t0 = basis0.trace_values(s);
            let t1 = basis1.trace_values(s);
            let v0: Complex64 = c0.iter().zip(&t0).map(|(c, t)| c * t).sum();
            let v1: Complex64 = c1.iter().zip(&t1).map(|(c, t)| c * t).sum();
            total += w * h * (v0 - v1).norm_sqr();
        }
    }
    total.sqrt()
}

/// Recover, from a solution and the volume part of the bilinear form, the
/// interface data its impedance condition consumed: the discrete weak
/// counterpart of  g = (1/mu) curl-trace - i kappa omega tangential-trace.
///
/// For a solution produced by [`SubdomainOperator::solve`] with data `g`
/// this returns `g` up to solver roundoff; applied to the two restrictions
/// of a single-domain solution it verifies the transmission identity.
pub fn consumed_robin_data(
    solution: &FeFunction,
    params: &MaterialParams,
    volume_matrix: &CsrMatrix,
) -> InterfaceTrace {
    robin_data(solution, params, volume_matrix, -1.0)
}

/// The data the neighbouring subdomain should consume next, from the same
/// discrete functionals; equals `update_trace(consumed, solution)`.
pub fn produced_robin_data(
    solution: &FeFunction,
    params: &MaterialParams,
    volume_matrix: &CsrMatrix,
) -> InterfaceTrace {
    let mut t = robin_data(solution, params, volume_matrix, 1.0);
    std::mem::swap(&mut t.from, &mut t.to);
    t
}

fn robin_data(
    solution: &FeFunction,
    params: &MaterialParams,
    volume_matrix: &CsrMatrix,
    orientation: f64,
) -> InterfaceTrace {
    let dof_map = &solution.dof_map;
    let sub = &dof_map.subdomain;
    let robin = params.robin_coefficient();
    let q = dof_map.order.quadrature_points();
    let ax = volume_matrix.matvec(&solution.coefficients);
    let mut values = Vec::new();
    for edge in sub.interface_edges() {
        let basis = crate::system::EdgeBasis::build(dof_map, edge);
        let dofs = dof_map.edge_dofs(edge);
        let nf = dofs.len();
        let mass = basis.trace_mass(q);
        // moments of the weak flux: a_vol(E, phi_f) = -<(1/mu) curl-trace, phi_f>
        let moments: Vec<Complex64> = dofs
            .iter()
            .map(|&d| Complex64::new(orientation, 0.0) * ax[d])
            .collect();
        let mass_c: Vec<Vec<Complex64>> = (0..nf)
            .map(|a| {
                (0..nf)
                    .map(|b| Complex64::new(mass[a * nf + b], 0.0))
                    .collect()
            })
            .collect();
        let solved = crate::system::dense_solve_columns(mass_c, vec![moments])
            .expect("trace mass invertible");
        for (rank, &d) in dofs.iter().enumerate() {
            values.push(solved[0][rank] - robin * solution.coefficients[d]);
        }
    }
    InterfaceTrace {
        from: neighbor_of(sub),
        to: sub.id,
        values,
    }
}
