//! Assembly and direct solution of the discrete weak form of the
//! time-harmonic Maxwell's equations on a subdomain.
//!
//! The bilinear form is
//!   (1/mu) (curl E, curl v) - eps w^2 (E, v)
//!   + i kappa w <E_t, v_t> on absorbing edges
//!   + i kappa w <E_t, v_t> on interface edges,
//! with the incident tangential trace imposed as an essential constraint by
//! per-edge L2 projection. Interface data g enters the right-hand side as
//! -<g, v_t>; the sign pairs with the trace update in [`crate::ddm`] so the
//! fixed point of the iteration matches the single-domain solution.
//!
//! All products are bilinear (no conjugation): the assembled matrix is
//! complex-symmetric, not Hermitian.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{BoundaryTag, Mesh};
use crate::nedelec::{
    distribute_dofs, edge_trace, enumerate_shapes, piola_curl, piola_map, ref_shape_curl,
    ref_shape_value, BasisOrder, DofMap,
};
use crate::quadrature::gauss_legendre;
use crate::sparse::{solve_csr, CsrMatrix, SparseLu};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Material and wave parameters.
#[derive(Debug, Clone, Copy)]
pub struct MaterialParams {
    /// Relative magnetic permeability, positive.
    pub mu: f64,
    /// Relative electric permittivity.
    pub eps: Complex64,
    /// kappa = sqrt(eps).
    pub kappa: Complex64,
    /// Wave number, 2 pi / lambda.
    pub omega: f64,
    /// Wavelength.
    pub lambda: f64,
}

impl MaterialParams {
    pub fn from_wavelength(mu: f64, eps: Complex64, lambda: f64) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(Error::invalid("permeability must be positive"));
        }
        if !(lambda > 0.0) {
            return Err(Error::invalid("wavelength must be positive"));
        }
        Ok(MaterialParams {
            mu,
            eps,
            kappa: eps.sqrt(),
            omega: 2.0 * std::f64::consts::PI / lambda,
            lambda,
        })
    }

    pub fn from_omega(mu: f64, eps: Complex64, omega: f64) -> Result<Self> {
        if !(omega > 0.0) {
            return Err(Error::invalid("wave number must be positive"));
        }
        Self::from_wavelength(mu, eps, 2.0 * std::f64::consts::PI / omega)
    }

    /// Interface and absorbing impedance coefficient i kappa omega.
    pub fn robin_coefficient(&self) -> Complex64 {
        Complex64::new(0.0, 1.0) * self.kappa * self.omega
    }
}

impl Default for MaterialParams {
    /// mu = 1, eps = 1.49^2, lambda = 3.
    fn default() -> Self {
        MaterialParams::from_wavelength(1.0, Complex64::new(1.49 * 1.49, 0.0), 3.0).unwrap()
    }
}

/// Closed-form incident fields, each with a stable id.
///
/// `Training*` and `Test*` are the boundary-value families used to build the
/// learning datasets; `Evaluation` is the held-out field driving the solver
/// comparisons; `PlaneWave` solves the interior equation exactly whenever the
/// polarization is orthogonal to the direction.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryField {
    Zero,
    Constant {
        value: [Complex64; 2],
    },
    PlaneWave {
        direction: [f64; 2],
        polarization: [f64; 2],
    },
    Training(usize),
    Test(usize),
    Evaluation,
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

impl BoundaryField {
    pub const TRAINING_COUNT: usize = 10;
    pub const TEST_COUNT: usize = 2;

    pub fn id(&self) -> String {
        match self {
            BoundaryField::Zero => "zero".into(),
            BoundaryField::Constant { .. } => "constant".into(),
            BoundaryField::PlaneWave { .. } => "plane-wave".into(),
            BoundaryField::Training(k) => format!("train{k}"),
            BoundaryField::Test(k) => format!("test{k}"),
            BoundaryField::Evaluation => "eval".into(),
        }
    }

    pub fn from_id(id: &str) -> Result<Self> {
        match id {
            "zero" => Ok(BoundaryField::Zero),
            "eval" => Ok(BoundaryField::Evaluation),
            "plane-wave" => Ok(BoundaryField::PlaneWave {
                direction: [0.6, 0.8],
                polarization: [-0.8, 0.6],
            }),
            _ => {
                if let Some(k) = id.strip_prefix("train").and_then(|s| s.parse().ok()) {
                    if k < Self::TRAINING_COUNT {
                        return Ok(BoundaryField::Training(k));
                    }
                }
                if let Some(k) = id.strip_prefix("test").and_then(|s| s.parse().ok()) {
                    if k < Self::TEST_COUNT {
                        return Ok(BoundaryField::Test(k));
                    }
                }
                Err(Error::invalid(format!("unknown boundary field id `{id}`")))
            }
        }
    }

    /// Evaluate the field anywhere on the closure of the unit square.
    pub fn eval(&self, point: [f64; 2], params: &MaterialParams) -> [Complex64; 2] {
        let [x, y] = point;
        let p2 = std::f64::consts::PI * std::f64::consts::PI;
        match self {
            BoundaryField::Zero => [ZERO, ZERO],
            BoundaryField::Constant { value } => *value,
            BoundaryField::PlaneWave {
                direction,
                polarization,
            } => {
                let phase = Complex64::new(0.0, 1.0)
                    * params.omega
                    * params.kappa
                    * (direction[0] * x + direction[1] * y);
                let e = phase.exp();
                [polarization[0] * e, polarization[1] * e]
            }
            BoundaryField::Training(k) => match k {
                0 => [c((-(x - 0.7).powi(2) / 0.008).exp(), 0.0), ZERO],
                1 => [c((-(x - 0.2).powi(2) / 0.002).exp(), 0.0), c(1.0, 0.0)],
                2 => [c((-(x - 0.7).powi(2) / 0.003).exp(), 0.0), c(1.0, 0.0)],
                3 => [
                    c((-(x - 0.8).powi(2) / 0.003).exp(), 0.0),
                    c((p2 * x).sin(), 0.0),
                ],
                4 => [
                    c((-(x - 0.5).powi(2) / 0.003).exp(), 0.0),
                    c((p2 * x).cos(), 0.0),
                ],
                5 => [
                    c((p2 * y).cos(), (p2 * x).sin()),
                    c((p2 * y).sin(), 0.5 * (p2 * x).cos()),
                ],
                6 => [
                    c((p2 * x).sin(), (p2 * x).sin()),
                    c((p2 * y).sin(), 0.5 * (p2 * x).cos()),
                ],
                7 => [
                    c((p2 * x).sin(), (p2 * x).sin()),
                    c((p2 * x).sin(), 0.5 * (p2 * x).cos()),
                ],
                8 => [
                    c((p2 * y).cos(), (p2 * x).sin()),
                    c((p2 * x).cos(), 0.5 * (p2 * x).cos()),
                ],
                9 => [
                    c((p2 * x).cos(), (p2 * x).sin()),
                    c((p2 * y).cos(), 0.5 * (p2 * x).cos()),
                ],
                _ => panic!("training field index out of range"),
            },
            BoundaryField::Test(k) => match k {
                0 => [c((-(x - 0.5).powi(2) / 0.003).exp(), 0.0), ZERO],
                1 => [
                    c((p2 * y).cos(), (p2 * x).sin()),
                    c((p2 * y).cos(), 0.5 * (p2 * x).cos()),
                ],
                _ => panic!("test field index out of range"),
            },
            BoundaryField::Evaluation => [
                c((p2 * (y - 0.5)).cos(), (p2 * x).sin()),
                c((p2 * y).cos(), 0.5 * (p2 * x).sin()),
            ],
        }
    }
}

/// Assembled complex system: full matrix over all dofs, right-hand side, and
/// the essential constraints from the incident boundary.
#[derive(Debug, Clone)]
pub struct ComplexSparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<Complex64>,
    pub constrained: Vec<(usize, Complex64)>,
}

/// A finite element function: a coefficient per degree of freedom.
#[derive(Debug, Clone)]
pub struct FeFunction {
    pub dof_map: Arc<DofMap>,
    pub coefficients: Vec<Complex64>,
}

/// Reference-cell matrices shared by every cell of the structured mesh.
#[derive(Debug, Clone)]
pub struct LocalMatrices {
    pub nf: usize,
    /// curl-curl block, row-major nf x nf.
    pub curl: Vec<f64>,
    /// mass block.
    pub mass: Vec<f64>,
}

/// Integrate the reference curl-curl and mass matrices with a tensor
/// Gauss-Legendre rule of `q` points per direction.
pub fn local_matrices(order: &BasisOrder, q: usize) -> LocalMatrices {
    let shapes = enumerate_shapes(order);
    let nf = shapes.len();
    let rule = gauss_legendre(q);
    let mut curl = vec![0.0; nf * nf];
    let mut mass = vec![0.0; nf * nf];
    for (ix, &x) in rule.points.iter().enumerate() {
        for (iy, &y) in rule.points.iter().enumerate() {
            let w = rule.weights[ix] * rule.weights[iy];
            let p = [x, y];
            let values: Vec<[f64; 2]> = shapes
                .iter()
                .map(|&s| ref_shape_value(s, order, p).unwrap())
                .collect();
            let curls: Vec<f64> = shapes
                .iter()
                .map(|&s| ref_shape_curl(s, order, p).unwrap())
                .collect();
            for a in 0..nf {
                for b in a..nf {
                    let m = w * (values[a][0] * values[b][0] + values[a][1] * values[b][1]);
                    let k = w * curls[a] * curls[b];
                    mass[a * nf + b] += m;
                    curl[a * nf + b] += k;
                    if a != b {
                        mass[b * nf + a] += m;
                        curl[b * nf + a] += k;
                    }
                }
            }
        }
    }
    LocalMatrices { nf, curl, mass }
}

/// The complex volume element matrix (1/mu) K / h^2 - eps w^2 M.
fn volume_local(local: &LocalMatrices, params: &MaterialParams, h: f64) -> Vec<Complex64> {
    let curl_factor = 1.0 / (params.mu * h * h);
    let mass_factor = params.eps * params.omega * params.omega;
    local
        .curl
        .iter()
        .zip(&local.mass)
        .map(|(&k, &m)| Complex64::new(curl_factor * k, 0.0) - mass_factor * m)
        .collect()
}

/// Basis traces of one boundary edge, in the global edge orientation and
/// physical scaling.
pub(crate) struct EdgeBasis {
    pub dofs: Vec<usize>,
    /// Orientation factor per function, tangent flip included.
    factors: Vec<f64>,
    local_edge: usize,
    sign: i8,
    h: f64,
    order: BasisOrder,
}

impl EdgeBasis {
    pub(crate) fn build(dof_map: &DofMap, edge: usize) -> EdgeBasis {
        let sub = &dof_map.subdomain;
        let (cell, m) = sub
            .boundary_edge_cell(edge)
            .expect("boundary edge adjacent to a subdomain cell");
        let sign = sub.mesh.cell_edges[cell][m].1;
        let order = dof_map.order;
        let tangent_flip = if sign >= 0 { 1.0 } else { -1.0 };
        let shapes = edge_shapes(m, &order);
        let factors = shapes
            .iter()
            .map(|s| s.orientation_factor(sign) * tangent_flip)
            .collect();
        EdgeBasis {
            dofs: dof_map.edge_dofs(edge),
            factors,
            local_edge: m,
            sign,
            h: sub.mesh.cell_size(),
            order,
        }
    }

    /// Tangential component of each basis function along the global edge
    /// direction, at global edge parameter `s`.
    pub(crate) fn trace_values(&self, s: f64) -> Vec<f64> {
        let s_local = if self.sign >= 0 { s } else { 1.0 - s };
        edge_shapes(self.local_edge, &self.order)
            .iter()
            .zip(&self.factors)
            .map(|(&shape, &f)| {
                f * edge_trace(shape, &self.order, self.local_edge, s_local).unwrap() / self.h
            })
            .collect()
    }

    /// Physical trace mass matrix of the edge.
    pub(crate) fn trace_mass(&self, q: usize) -> Vec<f64> {
        let rule = gauss_legendre(q);
        let nf = self.dofs.len();
        let mut mass = vec![0.0; nf * nf];
        for (&s, &w) in rule.points.iter().zip(&rule.weights) {
            let tv = self.trace_values(s);
            for a in 0..nf {
                for b in 0..nf {
                    mass[a * nf + b] += w * self.h * tv[a] * tv[b];
                }
            }
        }
        mass
    }
}

/// The shape functions living on local edge `m`, function-index order.
fn edge_shapes(m: usize, order: &BasisOrder) -> Vec<crate::nedelec::RefShape> {
    let mut shapes = vec![crate::nedelec::RefShape::LowestOrderEdge { edge: m }];
    for i in 0..order.p_edge {
        shapes.push(crate::nedelec::RefShape::HigherOrderEdge { edge: m, i });
    }
    shapes
}

/// L2-project the tangential trace of `bc` onto the trace space of each given
/// edge. Returns (dof, value) pairs sorted by dof.
pub fn project_incident_trace(
    dof_map: &DofMap,
    params: &MaterialParams,
    bc: &BoundaryField,
    edges: &[usize],
) -> Vec<(usize, Complex64)> {
    let mesh = &dof_map.subdomain.mesh;
    let q = dof_map.order.quadrature_points().max(10);
    let rule = gauss_legendre(q);
    let mut out = Vec::new();
    for &edge in edges {
        let basis = EdgeBasis::build(dof_map, edge);
        let nf = basis.dofs.len();
        let mass = basis.trace_mass(q);
        let tangent = mesh.edge_tangent(edge);
        let [ax, ay] = mesh.vertices[mesh.edges[edge][0]];
        let len = mesh.edge_length(edge);
        let mut rhs = vec![ZERO; nf];
        for (&s, &w) in rule.points.iter().zip(&rule.weights) {
            let point = [ax + s * len * tangent[0], ay + s * len * tangent[1]];
            let field = bc.eval(point, params);
            let tangential = field[0] * tangent[0] + field[1] * tangent[1];
            let tv = basis.trace_values(s);
            for a in 0..nf {
                rhs[a] += w * len * tangential * tv[a];
            }
        }
        let mass_c: Vec<Vec<Complex64>> = (0..nf)
            .map(|a| (0..nf).map(|b| c(mass[a * nf + b], 0.0)).collect())
            .collect();
        let coeffs = dense_solve_columns(mass_c, vec![rhs]).expect("edge trace mass is spd");
        for (dof, value) in basis.dofs.iter().zip(&coeffs[0]) {
            out.push((*dof, *value));
        }
    }
    out.sort_by_key(|&(d, _)| d);
    out
}

/// Assemble the full discrete system on a subdomain.
///
/// `interface_data` holds `edge_fns` complex coefficients per interface edge
/// in `subdomain.interface_edges()` order; `None` means zero data.
pub fn assemble(
    dof_map: &Arc<DofMap>,
    params: &MaterialParams,
    bc: &BoundaryField,
    interface_data: Option<&[Complex64]>,
) -> Result<ComplexSparseSystem> {
    if !(params.omega > 0.0) {
        return Err(Error::invalid("wave number must be positive"));
    }
    let sub = &dof_map.subdomain;
    let order = dof_map.order;
    let h = sub.mesh.cell_size();
    let local = local_matrices(&order, order.quadrature_points());
    let vol = volume_local(&local, params, h);
    let nf = local.nf;

    let mut triplets: Vec<(usize, usize, Complex64)> =
        Vec::with_capacity(sub.cells.len() * nf * nf);
    for &cell in &sub.cells {
        let dofs = dof_map.cell_dofs(cell);
        for a in 0..nf {
            for b in 0..nf {
                let v = vol[a * nf + b] * (dofs[a].factor * dofs[b].factor);
                triplets.push((dofs[a].dof, dofs[b].dof, v));
            }
        }
    }

    let mut rhs = vec![ZERO; dof_map.total_dofs];
    let robin = params.robin_coefficient();
    let iface_edges = sub.interface_edges();
    if let Some(g) = interface_data {
        if g.len() != iface_edges.len() * order.edge_fns() {
            return Err(Error::invalid(format!(
                "interface data length {} does not match {} edges with {} dofs",
                g.len(),
                iface_edges.len(),
                order.edge_fns()
            )));
        }
    }
    let qe = order.quadrature_points();
    for (&edge, tag) in &sub.boundary_tags {
        match tag {
            BoundaryTag::Incident => {}
            BoundaryTag::Absorbing | BoundaryTag::Interface(_) => {
                let basis = EdgeBasis::build(dof_map, edge);
                let mass = basis.trace_mass(qe);
                let nfe = basis.dofs.len();
                for a in 0..nfe {
                    for b in 0..nfe {
                        triplets.push((basis.dofs[a], basis.dofs[b], robin * mass[a * nfe + b]));
                    }
                }
                if matches!(tag, BoundaryTag::Interface(_)) {
                    if let Some(g) = interface_data {
                        let rank = iface_edges.iter().position(|&e| e == edge).unwrap();
                        let block = &g[nfe * rank..nfe * (rank + 1)];
                        // -<g, v_t> on the right-hand side.
                        for a in 0..nfe {
                            let mut acc = ZERO;
                            for b in 0..nfe {
                                acc += block[b] * mass[a * nfe + b];
                            }
                            rhs[basis.dofs[a]] -= acc;
                        }
                    }
                }
            }
        }
    }

    let constrained = project_incident_trace(dof_map, params, bc, &sub.incident_edges());
    let matrix = CsrMatrix::from_triplets(dof_map.total_dofs, &mut triplets);
    Ok(ComplexSparseSystem {
        matrix,
        rhs,
        constrained,
    })
}

/// Volume terms only; used by diagnostics that reconstruct boundary
/// functionals from the discrete bilinear form.
pub fn assemble_volume_matrix(dof_map: &DofMap, params: &MaterialParams) -> CsrMatrix {
    let sub = &dof_map.subdomain;
    let order = dof_map.order;
    let local = local_matrices(&order, order.quadrature_points());
    let vol = volume_local(&local, params, sub.mesh.cell_size());
    let nf = local.nf;
    let mut triplets = Vec::with_capacity(sub.cells.len() * nf * nf);
    for &cell in &sub.cells {
        let dofs = dof_map.cell_dofs(cell);
        for a in 0..nf {
            for b in 0..nf {
                triplets.push((
                    dofs[a].dof,
                    dofs[b].dof,
                    vol[a * nf + b] * (dofs[a].factor * dofs[b].factor),
                ));
            }
        }
    }
    CsrMatrix::from_triplets(dof_map.total_dofs, &mut triplets)
}

/// Solve an assembled system: eliminate the constraints symmetrically, solve
/// the reduced system directly, and scatter back.
pub fn solve_system(system: &ComplexSparseSystem) -> Result<Vec<Complex64>> {
    let n = system.matrix.n;
    let mut fixed = vec![None; n];
    for &(dof, value) in &system.constrained {
        fixed[dof] = Some(value);
    }
    let free: Vec<usize> = (0..n).filter(|&d| fixed[d].is_none()).collect();
    let mut rank = vec![usize::MAX; n];
    for (r, &d) in free.iter().enumerate() {
        rank[d] = r;
    }
    let mut triplets = Vec::new();
    let mut rhs: Vec<Complex64> = free.iter().map(|&d| system.rhs[d]).collect();
    for &d in &free {
        let r = rank[d];
        for k in system.matrix.row_ptr[d]..system.matrix.row_ptr[d + 1] {
            let col = system.matrix.col_idx[k];
            let v = system.matrix.values[k];
            match fixed[col] {
                None => triplets.push((r, rank[col], v)),
                Some(value) => rhs[r] -= v * value,
            }
        }
    }
    let reduced = CsrMatrix::from_triplets(free.len(), &mut triplets);
    let x_free = solve_csr(&reduced, &rhs)?;
    let mut x = vec![ZERO; n];
    for (r, &d) in free.iter().enumerate() {
        x[d] = x_free[r];
    }
    for &(dof, value) in &system.constrained {
        x[dof] = value;
    }
    Ok(x)
}

/// Solve an assembled system into a finite element function.
pub fn solve_direct(system: &ComplexSparseSystem, dof_map: &Arc<DofMap>) -> Result<FeFunction> {
    Ok(FeFunction {
        dof_map: Arc::clone(dof_map),
        coefficients: solve_system(system)?,
    })
}

/// Residual of the assembled equations on the unconstrained rows, relative to
/// the right-hand side (or absolute for homogeneous data).
pub fn free_residual(system: &ComplexSparseSystem, coefficients: &[Complex64]) -> f64 {
    let ax = system.matrix.matvec(coefficients);
    let constrained: std::collections::BTreeSet<usize> =
        system.constrained.iter().map(|&(d, _)| d).collect();
    let mut res = 0.0f64;
    let mut scale = 0.0f64;
    for d in 0..system.matrix.n {
        if constrained.contains(&d) {
            continue;
        }
        res += (ax[d] - system.rhs[d]).norm_sqr();
        scale += system.rhs[d].norm_sqr();
    }
    let res = res.sqrt();
    let scale = scale.sqrt();
    if scale > 0.0 {
        res / scale
    } else {
        res
    }
}

/// Small dense complex solve with partial pivoting; `columns` are independent
/// right-hand sides.
pub(crate) fn dense_solve_columns(
    mut a: Vec<Vec<Complex64>>,
    mut columns: Vec<Vec<Complex64>>,
) -> Result<Vec<Vec<Complex64>>> {
    let n = a.len();
    for j in 0..n {
        let piv = (j..n)
            .max_by(|&p, &q| a[p][j].norm().total_cmp(&a[q][j].norm()))
            .unwrap();
        if a[piv][j].norm() == 0.0 {
            return Err(Error::FactorizationFailure { pivot: j });
        }
        a.swap(j, piv);
        for col in &mut columns {
            col.swap(j, piv);
        }
        for i in (j + 1)..n {
            let f = a[i][j] / a[j][j];
            if f.norm_sqr() == 0.0 {
                continue;
            }
            for k in j..n {
                let v = a[j][k];
                a[i][k] -= f * v;
            }
            for col in &mut columns {
                let v = col[j];
                col[i] -= f * v;
            }
        }
    }
    for col in &mut columns {
        for j in (0..n).rev() {
            let mut acc = col[j];
            for k in (j + 1)..n {
                acc -= a[j][k] * col[k];
            }
            col[j] = acc / a[j][j];
        }
    }
    Ok(columns)
}

/// A subdomain operator: the condensed, constrained and factorized system,
/// reusable across right-hand sides (different incident fields and interface
/// data on the same discretization and parameters).
///
/// Cell-interior dofs couple only within their own cell, so they are
/// eliminated exactly by a local Schur complement before factorization and
/// recovered per cell after each solve. Interior loads are zero here: all
/// data enters through edges.
pub struct SubdomainOperator {
    pub dof_map: Arc<DofMap>,
    pub params: MaterialParams,
    /// Condensed edge-dof matrix (volume Schur complement plus Robin terms).
    edge_matrix: CsrMatrix,
    lu: SparseLu,
    free: Vec<usize>,
    rank: Vec<usize>,
    constrained_dofs: Vec<usize>,
    /// Local recovery map x_cell = recovery * x_edge in reference
    /// orientation, row-major cell_fns x (4 * edge_fns).
    recovery: Vec<Complex64>,
    n_edge_dofs: usize,
}

impl SubdomainOperator {
    pub fn new(dof_map: &Arc<DofMap>, params: &MaterialParams) -> Result<SubdomainOperator> {
        if !(params.omega > 0.0) {
            return Err(Error::invalid("wave number must be positive"));
        }
        let sub = &dof_map.subdomain;
        let order = dof_map.order;
        let h = sub.mesh.cell_size();
        let local = local_matrices(&order, order.quadrature_points());
        let vol = volume_local(&local, params, h);
        let nf = local.nf;
        let ne = 4 * order.edge_fns();
        let nc = order.cell_fns();

        // Exact local Schur complement onto the edge block.
        let (schur, recovery) = if nc > 0 {
            let a_cc: Vec<Vec<Complex64>> = (0..nc)
                .map(|i| (0..nc).map(|j| vol[(ne + i) * nf + (ne + j)]).collect())
                .collect();
            let a_ce_cols: Vec<Vec<Complex64>> = (0..ne)
                .map(|e| (0..nc).map(|i| vol[(ne + i) * nf + e]).collect())
                .collect();
            // Column e of A_cc^-1 A_ce.
            let solved = dense_solve_columns(a_cc, a_ce_cols)?;
            let mut schur = vec![ZERO; ne * ne];
            for a in 0..ne {
                for b in 0..ne {
                    let mut acc = vol[a * nf + b];
                    for i in 0..nc {
                        acc -= vol[a * nf + (ne + i)] * solved[b][i];
                    }
                    schur[a * ne + b] = acc;
                }
            }
            let mut recovery = vec![ZERO; nc * ne];
            for i in 0..nc {
                for e in 0..ne {
                    recovery[i * ne + e] = -solved[e][i];
                }
            }
            (schur, recovery)
        } else {
            (vol.clone(), Vec::new())
        };

        let n_edge_dofs = dof_map.edge_dof_count();
        let mut triplets = Vec::with_capacity(sub.cells.len() * ne * ne);
        for &cell in &sub.cells {
            let dofs = dof_map.cell_dofs(cell);
            for a in 0..ne {
                for b in 0..ne {
                    triplets.push((
                        dofs[a].dof,
                        dofs[b].dof,
                        schur[a * ne + b] * (dofs[a].factor * dofs[b].factor),
                    ));
                }
            }
        }
        let robin = params.robin_coefficient();
        let qe = order.quadrature_points();
        for (&edge, tag) in &sub.boundary_tags {
            if matches!(tag, BoundaryTag::Incident) {
                continue;
            }
            let basis = EdgeBasis::build(dof_map, edge);
            let mass = basis.trace_mass(qe);
            let nfe = basis.dofs.len();
            for a in 0..nfe {
                for b in 0..nfe {
                    triplets.push((basis.dofs[a], basis.dofs[b], robin * mass[a * nfe + b]));
                }
            }
        }
        let edge_matrix = CsrMatrix::from_triplets(n_edge_dofs, &mut triplets);

        let mut is_constrained = vec![false; n_edge_dofs];
        for edge in sub.incident_edges() {
            for dof in dof_map.edge_dofs(edge) {
                is_constrained[dof] = true;
            }
        }
        let constrained_dofs: Vec<usize> =
            (0..n_edge_dofs).filter(|&d| is_constrained[d]).collect();
        let free: Vec<usize> = (0..n_edge_dofs).filter(|&d| !is_constrained[d]).collect();
        let mut rank = vec![usize::MAX; n_edge_dofs];
        for (r, &d) in free.iter().enumerate() {
            rank[d] = r;
        }

        // Reduced free-dof matrix with a sweep ordering along the strip:
        // sorting dofs by edge midpoint (y, x) keeps the band to two mesh
        // lines of edges.
        let mut reduced_triplets = Vec::new();
        for &d in &free {
            let r = rank[d];
            for k in edge_matrix.row_ptr[d]..edge_matrix.row_ptr[d + 1] {
                let col = edge_matrix.col_idx[k];
                if !is_constrained[col] {
                    reduced_triplets.push((r, rank[col], edge_matrix.values[k]));
                }
            }
        }
        let reduced = CsrMatrix::from_triplets(free.len(), &mut reduced_triplets);
        let edge_fns = order.edge_fns();
        let mesh = &sub.mesh;
        let mut ordering: Vec<usize> = (0..free.len()).collect();
        ordering.sort_by_key(|&r| {
            let dof = free[r];
            let edge = dof_map.edges[dof / edge_fns];
            let mid = mesh.edge_midpoint(edge);
            (
                (mid[1] * 2.0 * mesh.n as f64).round() as i64,
                (mid[0] * 2.0 * mesh.n as f64).round() as i64,
                dof % edge_fns,
            )
        });
        let lu = SparseLu::factor(&reduced, Some(ordering))?;

        Ok(SubdomainOperator {
            dof_map: Arc::clone(dof_map),
            params: *params,
            edge_matrix,
            lu,
            free,
            rank,
            constrained_dofs,
            recovery,
            n_edge_dofs,
        })
    }

    /// Solve for one incident field and one interface data block.
    pub fn solve(
        &self,
        bc: &BoundaryField,
        interface_data: Option<&[Complex64]>,
    ) -> Result<FeFunction> {
        let sub = &self.dof_map.subdomain;
        let order = self.dof_map.order;
        let iface_edges = sub.interface_edges();
        if let Some(g) = interface_data {
            if g.len() != iface_edges.len() * order.edge_fns() {
                return Err(Error::invalid(format!(
                    "interface data length {} does not match {} edges with {} dofs",
                    g.len(),
                    iface_edges.len(),
                    order.edge_fns()
                )));
            }
        }

        // Right-hand side: only the interface term -<g, v_t>.
        let mut rhs = vec![ZERO; self.n_edge_dofs];
        if let Some(g) = interface_data {
            let qe = order.quadrature_points();
            let nfe = order.edge_fns();
            for (rank, &edge) in iface_edges.iter().enumerate() {
                let basis = EdgeBasis::build(&self.dof_map, edge);
                let mass = basis.trace_mass(qe);
                let block = &g[nfe * rank..nfe * (rank + 1)];
                for a in 0..nfe {
                    let mut acc = ZERO;
                    for b in 0..nfe {
                        acc += block[b] * mass[a * nfe + b];
                    }
                    rhs[basis.dofs[a]] -= acc;
                }
            }
        }

        // Constraint values for this incident field.
        let projected =
            project_incident_trace(&self.dof_map, &self.params, bc, &sub.incident_edges());
        let mut fixed = vec![ZERO; self.n_edge_dofs];
        for &(dof, value) in &projected {
            fixed[dof] = value;
        }

        let mut reduced_rhs: Vec<Complex64> = self.free.iter().map(|&d| rhs[d]).collect();
        for &d in &self.free {
            let r = self.rank[d];
            for k in self.edge_matrix.row_ptr[d]..self.edge_matrix.row_ptr[d + 1] {
                let col = self.edge_matrix.col_idx[k];
                if self.rank[col] == usize::MAX {
                    reduced_rhs[r] -= self.edge_matrix.values[k] * fixed[col];
                }
            }
        }
        let x_free = self.lu.solve(&reduced_rhs);

        let mut coefficients = vec![ZERO; self.dof_map.total_dofs];
        for (r, &d) in self.free.iter().enumerate() {
            coefficients[d] = x_free[r];
        }
        for &d in &self.constrained_dofs {
            coefficients[d] = fixed[d];
        }

        // Recover cell-interior coefficients cell by cell.
        let nc = order.cell_fns();
        if nc > 0 {
            let ne = 4 * order.edge_fns();
            for &cell in &sub.cells {
                let dofs = self.dof_map.cell_dofs(cell);
                let local_edge: Vec<Complex64> = (0..ne)
                    .map(|a| coefficients[dofs[a].dof] * dofs[a].factor)
                    .collect();
                for i in 0..nc {
                    let mut acc = ZERO;
                    for e in 0..ne {
                        acc += self.recovery[i * ne + e] * local_edge[e];
                    }
                    coefficients[dofs[ne + i].dof] = acc;
                }
            }
        }
        Ok(FeFunction {
            dof_map: Arc::clone(&self.dof_map),
            coefficients,
        })
    }
}

/// Discrete solution of the weak form on the whole mesh with the default
/// outer boundary tags; the comparison target for the domain decomposition.
pub fn solve_monolithic(
    mesh: &Arc<Mesh>,
    order: BasisOrder,
    params: &MaterialParams,
    bc: &BoundaryField,
) -> Result<FeFunction> {
    let sub = Arc::new(crate::geometry::whole_domain(mesh));
    let dof_map = Arc::new(distribute_dofs(&sub, order));
    SubdomainOperator::new(&dof_map, params)?.solve(bc, None)
}

impl FeFunction {
    pub fn zero(dof_map: &Arc<DofMap>) -> FeFunction {
        FeFunction {
            dof_map: Arc::clone(dof_map),
            coefficients: vec![ZERO; dof_map.total_dofs],
        }
    }

    /// Locate the subdomain cell containing a physical point; points on
    /// shared cell boundaries resolve to the lowest adjacent cell index.
    fn locate_cell(&self, point: [f64; 2]) -> Option<usize> {
        let mesh = &self.dof_map.subdomain.mesh;
        let n = mesh.n as f64;
        let candidates = |v: f64| {
            let k = (v * n).floor() as i64;
            let mut list = Vec::new();
            if (v * n - k as f64).abs() < 1e-12 && k > 0 {
                list.push(k - 1);
            }
            list.push(k);
            list
        };
        let cells_of_sub: std::collections::BTreeSet<usize> =
            self.dof_map.subdomain.cells.iter().copied().collect();
        let mut found: Option<usize> = None;
        for j in candidates(point[1]) {
            for i in candidates(point[0]) {
                if i < 0 || j < 0 || i >= mesh.n as i64 || j >= mesh.n as i64 {
                    continue;
                }
                let cell = j as usize * mesh.n + i as usize;
                if cells_of_sub.contains(&cell) {
                    found = Some(found.map_or(cell, |prev| prev.min(cell)));
                }
            }
        }
        found
    }

    /// Evaluate the field at a physical point inside the subdomain.
    pub fn eval(&self, point: [f64; 2]) -> Option<[Complex64; 2]> {
        let cell = self.locate_cell(point)?;
        let geometry = self.dof_map.cell_geometry(cell);
        let ref_point = geometry.to_reference(point);
        let order = self.dof_map.order;
        let mut value = [ZERO, ZERO];
        for d in self.dof_map.cell_dofs(cell) {
            let coeff = self.coefficients[d.dof] * d.factor;
            if coeff.norm_sqr() == 0.0 {
                continue;
            }
            let v = ref_shape_value(d.shape, &order, ref_point).unwrap();
            let v = piola_map(&geometry, v).unwrap();
            value[0] += coeff * v[0];
            value[1] += coeff * v[1];
        }
        Some(value)
    }

    /// Scalar curl at a physical point.
    pub fn eval_curl(&self, point: [f64; 2]) -> Option<Complex64> {
        let cell = self.locate_cell(point)?;
        let geometry = self.dof_map.cell_geometry(cell);
        let ref_point = geometry.to_reference(point);
        let order = self.dof_map.order;
        let mut value = ZERO;
        for d in self.dof_map.cell_dofs(cell) {
            let coeff = self.coefficients[d.dof] * d.factor;
            if coeff.norm_sqr() == 0.0 {
                continue;
            }
            let cu = ref_shape_curl(d.shape, &order, ref_point).unwrap();
            value += coeff * piola_curl(&geometry, cu).unwrap();
        }
        Some(value)
    }

    /// Squared L2 norm over the subdomain, exact via the reference mass
    /// matrix (cell mass integrals are h-independent under the covariant
    /// map).
    pub fn l2_norm_sq(&self) -> f64 {
        l2_diff_sq(self, None)
    }

    /// L2 distance to another function on the same dof layout.
    pub fn l2_diff(&self, other: &FeFunction) -> f64 {
        l2_diff_sq(self, Some(other)).sqrt()
    }

    /// Restrict a function to a dof map over a cell subset of the same mesh
    /// (entity-wise coefficient copy).
    pub fn restrict_to(&self, target: &Arc<DofMap>) -> FeFunction {
        let order = target.order;
        let mut coefficients = vec![ZERO; target.total_dofs];
        for &edge in &target.edges {
            for f in 0..order.edge_fns() {
                let src = self.dof_map.edge_dof(edge, f).expect("edge in source map");
                let dst = target.edge_dof(edge, f).unwrap();
                coefficients[dst] = self.coefficients[src];
            }
        }
        for &cell in &target.subdomain.cells {
            for k in 0..order.cell_fns() {
                let src = self.dof_map.cell_dof(cell, k).expect("cell in source map");
                let dst = target.cell_dof(cell, k).unwrap();
                coefficients[dst] = self.coefficients[src];
            }
        }
        FeFunction {
            dof_map: Arc::clone(target),
            coefficients,
        }
    }

    /// L2 error against a closed-form field, by elevated quadrature.
    pub fn l2_error_against(&self, exact: impl Fn([f64; 2]) -> [Complex64; 2], q: usize) -> f64 {
        let order = self.dof_map.order;
        let sub = &self.dof_map.subdomain;
        let rule = gauss_legendre(q);
        let shapes = enumerate_shapes(&order);
        // Tabulate shapes once; the reference values serve every cell.
        let mut table = Vec::new();
        for &x in &rule.points {
            for &y in &rule.points {
                let vals: Vec<[f64; 2]> = shapes
                    .iter()
                    .map(|&s| ref_shape_value(s, &order, [x, y]).unwrap())
                    .collect();
                table.push(vals);
            }
        }
        let h = sub.mesh.cell_size();
        let mut total = 0.0;
        for &cell in &sub.cells {
            let geometry = self.dof_map.cell_geometry(cell);
            let dofs = self.dof_map.cell_dofs(cell);
            let coeffs: Vec<Complex64> = dofs
                .iter()
                .map(|d| self.coefficients[d.dof] * d.factor)
                .collect();
            let mut qi = 0;
            for (ix, &x) in rule.points.iter().enumerate() {
                let _ = x;
                for (iy, &y) in rule.points.iter().enumerate() {
                    let _ = y;
                    let w = rule.weights[ix] * rule.weights[iy] * h * h;
                    let mut value = [ZERO, ZERO];
                    for (coeff, vals) in coeffs.iter().zip(&table[qi]) {
                        value[0] += coeff * (vals[0] / h);
                        value[1] += coeff * (vals[1] / h);
                    }
                    let point =
                        geometry.to_physical([rule.points[ix], rule.points[iy]]);
                    let target = exact(point);
                    total += w
                        * ((value[0] - target[0]).norm_sqr()
                            + (value[1] - target[1]).norm_sqr());
                    qi += 1;
                }
            }
        }
        total.sqrt()
    }
}

/// Shared implementation of the exact L2 integrals.
fn l2_diff_sq(a: &FeFunction, b: Option<&FeFunction>) -> f64 {
    if let Some(b) = b {
        assert_eq!(
            a.dof_map.total_dofs, b.dof_map.total_dofs,
            "functions must share a dof layout"
        );
    }
    let order = a.dof_map.order;
    let local = local_matrices(&order, order.quadrature_points());
    let nf = local.nf;
    let sub = &a.dof_map.subdomain;
    let mut total = 0.0;
    for &cell in &sub.cells {
        let dofs = a.dof_map.cell_dofs(cell);
        let delta: Vec<Complex64> = dofs
            .iter()
            .map(|d| {
                let av = a.coefficients[d.dof];
                let bv = b.map_or(ZERO, |f| f.coefficients[d.dof]);
                (av - bv) * d.factor
            })
            .collect();
        for i in 0..nf {
            if delta[i].norm_sqr() == 0.0 {
                continue;
            }
            for j in 0..nf {
                total += (delta[i] * delta[j].conj()).re * local.mass[i * nf + j];
            }
        }
    }
    total.max(0.0)
}
