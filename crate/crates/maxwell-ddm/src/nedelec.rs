//! Hierarchic H(curl)-conforming basis on the reference square, covariant
//! Piola mapping, and degree-of-freedom distribution.
//!
//! The basis follows the integrated Legendre construction: per edge one
//! lowest-order function plus `p_edge` gradient-type hierarchic functions,
//! and three families of cell bubbles. Gradient-type shapes have identically
//! zero curl by construction.
//!
//! Reference cell: [0,1]^2 with vertices V0=(0,0), V1=(1,0), V2=(0,1),
//! V3=(1,1) and edges E0=(V0,V2), E1=(V1,V3), E2=(V0,V1), E3=(V2,V3).

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::Subdomain;

/// Polynomial order of the basis.
///
/// `p_edge` counts the hierarchic functions per edge beyond the lowest-order
/// one (so each edge carries `1 + p_edge` functions). `p_cell` controls the
/// interior bubbles: types 1 and 2 contribute `p_cell^2` functions each and
/// type 3 contributes `2 * p_cell`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasisOrder {
    pub p_edge: usize,
    pub p_cell: usize,
}

impl Default for BasisOrder {
    /// Four functions per edge and matching interior order.
    fn default() -> Self {
        BasisOrder { p_edge: 3, p_cell: 3 }
    }
}

impl BasisOrder {
    pub fn lowest() -> Self {
        BasisOrder { p_edge: 0, p_cell: 0 }
    }

    /// Functions per edge.
    pub fn edge_fns(&self) -> usize {
        1 + self.p_edge
    }

    /// Interior functions per cell.
    pub fn cell_fns(&self) -> usize {
        2 * self.p_cell * self.p_cell + 2 * self.p_cell
    }

    /// All functions supported on one cell.
    pub fn fns_per_cell(&self) -> usize {
        4 * self.edge_fns() + self.cell_fns()
    }

    /// Quadrature points per direction that integrate every assembled
    /// product exactly.
    pub fn quadrature_points(&self) -> usize {
        self.p_edge.max(self.p_cell) + 2
    }
}

/// Integrated Legendre polynomial L_n on [-1, 1].
///
/// L_1 = x, L_2 = (x^2 - 1)/2 and
/// (n + 1) L_{n+1} = (2n - 1) x L_n - (n - 2) L_{n-1} for n >= 2.
/// For n >= 2 these vanish at both endpoints.
pub fn integrated_legendre(n: usize, x: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("integrated Legendre index starts at 1"));
    }
    Ok(integrated_legendre_pair(n, x).0)
}

/// (L_n, L_n') by the same recursion, differentiated term by term.
fn integrated_legendre_pair(n: usize, x: f64) -> (f64, f64) {
    debug_assert!(n >= 1);
    let (mut l0, mut d0) = (x, 1.0); // L_1
    if n == 1 {
        return (l0, d0);
    }
    let (mut l1, mut d1) = (0.5 * (x * x - 1.0), x); // L_2
    for k in 2..n {
        let kf = k as f64;
        let l2 = ((2.0 * kf - 1.0) * x * l1 - (kf - 2.0) * l0) / (kf + 1.0);
        let d2 = ((2.0 * kf - 1.0) * (l1 + x * d1) - (kf - 2.0) * d0) / (kf + 1.0);
        l0 = l1;
        d0 = d1;
        l1 = l2;
        d1 = d2;
    }
    (l1, d1)
}

/// One reference shape function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefShape {
    /// Lowest-order edge function on edge `m`.
    LowestOrderEdge { edge: usize },
    /// Gradient-type hierarchic edge function, `0 <= i < p_edge`.
    HigherOrderEdge { edge: usize, i: usize },
    /// Gradient-type cell bubble, `0 <= i, j < p_cell`.
    CellType1 { i: usize, j: usize },
    /// Rotated-gradient cell bubble.
    CellType2 { i: usize, j: usize },
    /// x-directed bubble, constant in x.
    CellType3X { j: usize },
    /// y-directed bubble, constant in y.
    CellType3Y { i: usize },
}

impl RefShape {
    /// Gradient-type shapes have identically vanishing curl.
    pub fn is_gradient(&self) -> bool {
        matches!(
            self,
            RefShape::HigherOrderEdge { .. } | RefShape::CellType1 { .. }
        )
    }

    fn validate(&self, order: &BasisOrder) -> Result<()> {
        let ok = match *self {
            RefShape::LowestOrderEdge { edge } => edge < 4,
            RefShape::HigherOrderEdge { edge, i } => edge < 4 && i < order.p_edge,
            RefShape::CellType1 { i, j } | RefShape::CellType2 { i, j } => {
                i < order.p_cell && j < order.p_cell
            }
            RefShape::CellType3X { j } => j < order.p_cell,
            RefShape::CellType3Y { i } => i < order.p_cell,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "shape {self:?} out of range for order {order:?}"
            )))
        }
    }

    /// Orientation factor when the cell-local edge direction opposes the
    /// global one: the lowest-order function flips, hierarchic functions
    /// follow the parity of L_{i+2}.
    pub fn orientation_factor(&self, sign: i8) -> f64 {
        if sign >= 0 {
            return 1.0;
        }
        match *self {
            RefShape::LowestOrderEdge { .. } => -1.0,
            RefShape::HigherOrderEdge { i, .. } => {
                if (i + 2) % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
            _ => 1.0,
        }
    }
}

/// Per-edge linear data: sigma difference `s`, lambda sum `t` and their
/// (constant) gradients, per the reference-cell parametrisation.
fn edge_parametrisation(edge: usize, x: f64, y: f64) -> (f64, [f64; 2], f64, [f64; 2]) {
    match edge {
        // E0 = (V0, V2): s = sigma_2 - sigma_0 = 2y - 1, t = lambda_0 + lambda_2 = 1 - x
        0 => (2.0 * y - 1.0, [0.0, 2.0], 1.0 - x, [-1.0, 0.0]),
        // E1 = (V1, V3)
        1 => (2.0 * y - 1.0, [0.0, 2.0], x, [1.0, 0.0]),
        // E2 = (V0, V1)
        2 => (2.0 * x - 1.0, [2.0, 0.0], 1.0 - y, [0.0, -1.0]),
        // E3 = (V2, V3)
        3 => (2.0 * x - 1.0, [2.0, 0.0], y, [0.0, 1.0]),
        _ => unreachable!(),
    }
}

/// Evaluate a reference shape function at a point of the reference cell.
pub fn ref_shape_value(shape: RefShape, order: &BasisOrder, point: [f64; 2]) -> Result<[f64; 2]> {
    shape.validate(order)?;
    let [x, y] = point;
    let value = match shape {
        RefShape::LowestOrderEdge { edge } => {
            let (_, grad_s, t, _) = edge_parametrisation(edge, x, y);
            [0.5 * grad_s[0] * t, 0.5 * grad_s[1] * t]
        }
        RefShape::HigherOrderEdge { edge, i } => {
            // grad( L_{i+2}(s) * t ) with constant grad s, grad t.
            let (s, grad_s, t, grad_t) = edge_parametrisation(edge, x, y);
            let (l, dl) = integrated_legendre_pair(i + 2, s);
            [
                dl * grad_s[0] * t + l * grad_t[0],
                dl * grad_s[1] * t + l * grad_t[1],
            ]
        }
        RefShape::CellType1 { i, j } => {
            // grad( L_{i+2}(xi) L_{j+2}(eta) ), xi = 2x-1, eta = 2y-1.
            let (li, dli) = integrated_legendre_pair(i + 2, 2.0 * x - 1.0);
            let (lj, dlj) = integrated_legendre_pair(j + 2, 2.0 * y - 1.0);
            [2.0 * dli * lj, 2.0 * li * dlj]
        }
        RefShape::CellType2 { i, j } => {
            // Rotated combination (a' b, -a b') of the same product.
            let (li, dli) = integrated_legendre_pair(i + 2, 2.0 * x - 1.0);
            let (lj, dlj) = integrated_legendre_pair(j + 2, 2.0 * y - 1.0);
            [2.0 * dli * lj, -2.0 * li * dlj]
        }
        RefShape::CellType3X { j } => {
            let (lj, _) = integrated_legendre_pair(j + 2, 2.0 * y - 1.0);
            [lj, 0.0]
        }
        RefShape::CellType3Y { i } => {
            let (li, _) = integrated_legendre_pair(i + 2, 2.0 * x - 1.0);
            [0.0, li]
        }
    };
    Ok(value)
}

/// Analytic scalar curl of a reference shape function.
pub fn ref_shape_curl(shape: RefShape, order: &BasisOrder, point: [f64; 2]) -> Result<f64> {
    shape.validate(order)?;
    let [x, y] = point;
    let curl = match shape {
        RefShape::LowestOrderEdge { edge } => {
            // curl( t/2 * grad s ) = (grad t x grad s) / 2.
            let (_, grad_s, _, grad_t) = edge_parametrisation(edge, x, y);
            0.5 * (grad_t[0] * grad_s[1] - grad_t[1] * grad_s[0])
        }
        RefShape::HigherOrderEdge { .. } | RefShape::CellType1 { .. } => 0.0,
        RefShape::CellType2 { i, j } => {
            let (_, dli) = integrated_legendre_pair(i + 2, 2.0 * x - 1.0);
            let (_, dlj) = integrated_legendre_pair(j + 2, 2.0 * y - 1.0);
            -8.0 * dli * dlj
        }
        RefShape::CellType3X { j } => {
            let (_, dlj) = integrated_legendre_pair(j + 2, 2.0 * y - 1.0);
            -2.0 * dlj
        }
        RefShape::CellType3Y { i } => {
            let (_, dli) = integrated_legendre_pair(i + 2, 2.0 * x - 1.0);
            2.0 * dli
        }
    };
    Ok(curl)
}

/// Canonical ordering of all shapes on one cell: edge functions
/// (edge-major, lowest order first), then cell bubbles type 1, 2, 3x, 3y.
pub fn enumerate_shapes(order: &BasisOrder) -> Vec<RefShape> {
    let mut shapes = Vec::with_capacity(order.fns_per_cell());
    for edge in 0..4 {
        shapes.push(RefShape::LowestOrderEdge { edge });
        for i in 0..order.p_edge {
            shapes.push(RefShape::HigherOrderEdge { edge, i });
        }
    }
    for i in 0..order.p_cell {
        for j in 0..order.p_cell {
            shapes.push(RefShape::CellType1 { i, j });
        }
    }
    for i in 0..order.p_cell {
        for j in 0..order.p_cell {
            shapes.push(RefShape::CellType2 { i, j });
        }
    }
    for j in 0..order.p_cell {
        shapes.push(RefShape::CellType3X { j });
    }
    for i in 0..order.p_cell {
        shapes.push(RefShape::CellType3Y { i });
    }
    shapes
}

/// Geometry of an axis-aligned square cell.
#[derive(Debug, Clone, Copy)]
pub struct CellGeometry {
    pub origin: [f64; 2],
    pub side: f64,
}

impl CellGeometry {
    pub fn to_reference(&self, point: [f64; 2]) -> [f64; 2] {
        [
            (point[0] - self.origin[0]) / self.side,
            (point[1] - self.origin[1]) / self.side,
        ]
    }

    pub fn to_physical(&self, ref_point: [f64; 2]) -> [f64; 2] {
        [
            self.origin[0] + self.side * ref_point[0],
            self.origin[1] + self.side * ref_point[1],
        ]
    }
}

/// Covariant Piola transform of a vector value: u_phys = J^{-T} u_ref, which
/// for an axis-aligned square of side h is u_ref / h.
pub fn piola_map(geometry: &CellGeometry, ref_value: [f64; 2]) -> Result<[f64; 2]> {
    if !(geometry.side > 0.0) {
        return Err(Error::DegenerateCell { side: geometry.side });
    }
    Ok([ref_value[0] / geometry.side, ref_value[1] / geometry.side])
}

/// Scalar curls transform with 1/det(J).
pub fn piola_curl(geometry: &CellGeometry, ref_curl: f64) -> Result<f64> {
    if !(geometry.side > 0.0) {
        return Err(Error::DegenerateCell { side: geometry.side });
    }
    Ok(ref_curl / (geometry.side * geometry.side))
}

/// Degree-of-freedom numbering for a subdomain: all edge dofs (edge-major in
/// ascending global edge order, function-index minor), then all cell dofs in
/// ascending global cell order. Shared edges are identified automatically
/// since dofs key on the global edge.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub subdomain: Arc<Subdomain>,
    pub order: BasisOrder,
    pub edges: Vec<usize>,
    pub total_dofs: usize,
    edge_rank: BTreeMap<usize, usize>,
    cell_rank: BTreeMap<usize, usize>,
    n_edge_dofs: usize,
}

/// One entry of a cell's gather list.
#[derive(Debug, Clone, Copy)]
pub struct CellDof {
    pub dof: usize,
    pub factor: f64,
    pub shape: RefShape,
}

pub fn distribute_dofs(subdomain: &Arc<Subdomain>, order: BasisOrder) -> DofMap {
    let edges = subdomain.edge_set();
    let edge_rank: BTreeMap<usize, usize> =
        edges.iter().enumerate().map(|(r, &e)| (e, r)).collect();
    let cell_rank: BTreeMap<usize, usize> = subdomain
        .cells
        .iter()
        .enumerate()
        .map(|(r, &c)| (c, r))
        .collect();
    let n_edge_dofs = edges.len() * order.edge_fns();
    let total_dofs = n_edge_dofs + subdomain.cells.len() * order.cell_fns();
    DofMap {
        subdomain: Arc::clone(subdomain),
        order,
        edges,
        total_dofs,
        edge_rank,
        cell_rank,
        n_edge_dofs,
    }
}

impl DofMap {
    pub fn edge_dof_count(&self) -> usize {
        self.n_edge_dofs
    }

    /// Global dof of function `f` on a (parent-mesh) edge.
    pub fn edge_dof(&self, edge: usize, f: usize) -> Option<usize> {
        debug_assert!(f < self.order.edge_fns());
        self.edge_rank
            .get(&edge)
            .map(|&r| r * self.order.edge_fns() + f)
    }

    /// Global dof of interior function `k` on a (parent-mesh) cell.
    pub fn cell_dof(&self, cell: usize, k: usize) -> Option<usize> {
        debug_assert!(k < self.order.cell_fns());
        self.cell_rank
            .get(&cell)
            .map(|&r| self.n_edge_dofs + r * self.order.cell_fns() + k)
    }

    /// Gather list for a cell: one entry per local shape, in the canonical
    /// `enumerate_shapes` order, with the orientation factor folded in.
    pub fn cell_dofs(&self, cell: usize) -> Vec<CellDof> {
        let shapes = enumerate_shapes(&self.order);
        let mut list = Vec::with_capacity(shapes.len());
        let edge_fns = self.order.edge_fns();
        for (local, shape) in shapes.into_iter().enumerate() {
            let (dof, factor) = if local < 4 * edge_fns {
                let m = local / edge_fns;
                let f = local % edge_fns;
                let (edge, sign) = self.subdomain.mesh.cell_edges[cell][m];
                (
                    self.edge_dof(edge, f).expect("cell edge in dof map"),
                    shape.orientation_factor(sign),
                )
            } else {
                let k = local - 4 * edge_fns;
                (self.cell_dof(cell, k).expect("cell in dof map"), 1.0)
            };
            list.push(CellDof { dof, factor, shape });
        }
        list
    }

    pub fn cell_geometry(&self, cell: usize) -> CellGeometry {
        CellGeometry {
            origin: self.subdomain.mesh.cell_origin(cell),
            side: self.subdomain.mesh.cell_size(),
        }
    }

    /// Dofs of one edge, function-index order.
    pub fn edge_dofs(&self, edge: usize) -> Vec<usize> {
        (0..self.order.edge_fns())
            .map(|f| self.edge_dof(edge, f).expect("edge in dof map"))
            .collect()
    }
}

/// Tangential component of a shape function along a local edge of the
/// reference cell, at edge parameter `s` in [0, 1] measured along the local
/// edge direction.
pub fn edge_trace(shape: RefShape, order: &BasisOrder, local_edge: usize, s: f64) -> Result<f64> {
    let (point, tangent) = local_edge_point(local_edge, s);
    let v = ref_shape_value(shape, order, point)?;
    Ok(v[0] * tangent[0] + v[1] * tangent[1])
}

/// Point on a local edge and the local edge direction.
pub fn local_edge_point(local_edge: usize, s: f64) -> ([f64; 2], [f64; 2]) {
    match local_edge {
        0 => ([0.0, s], [0.0, 1.0]),
        1 => ([1.0, s], [0.0, 1.0]),
        2 => ([s, 0.0], [1.0, 0.0]),
        3 => ([s, 1.0], [1.0, 0.0]),
        _ => unreachable!(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_mesh, partition_two};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    #[test]
    fn integrated_legendre_low_orders() {
        assert_abs_diff_eq!(integrated_legendre(1, 0.3).unwrap(), 0.3);
        assert_abs_diff_eq!(integrated_legendre(2, 0.0).unwrap(), -0.5);
        // Recursion gives L_3 = x L_2(x), so L_3(1) = 0.
        assert_abs_diff_eq!(integrated_legendre(3, 1.0).unwrap(), 0.0);
        assert!(integrated_legendre(0, 0.5).is_err());
    }

    #[test]
    fn integrated_legendre_vanishes_at_endpoints() {
        for n in 2..20 {
            assert_abs_diff_eq!(integrated_legendre(n, 1.0).unwrap(), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(integrated_legendre(n, -1.0).unwrap(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn integrated_legendre_derivative_consistent() {
        // Central differences against the recursion-built derivative.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for n in 1..10 {
            for _ in 0..20 {
                let x: f64 = rng.gen_range(-0.99..0.99);
                let eps = 1e-6;
                let fd = (integrated_legendre(n, x + eps).unwrap()
                    - integrated_legendre(n, x - eps).unwrap())
                    / (2.0 * eps);
                let (_, dl) = integrated_legendre_pair(n, x);
                assert_abs_diff_eq!(fd, dl, epsilon = 1e-7 * (1.0 + dl.abs()));
            }
        }
    }

    #[test]
    fn lowest_order_edge2_closed_form() {
        // s1 - s0 = 2x - 1 and lambda0 + lambda1 = 1 - y give ((1-y), 0).
        let order = BasisOrder::default();
        let shape = RefShape::LowestOrderEdge { edge: 2 };
        let v = ref_shape_value(shape, &order, [0.5, 0.0]).unwrap();
        assert_abs_diff_eq!(v[0], 1.0);
        assert_abs_diff_eq!(v[1], 0.0);
        let v = ref_shape_value(shape, &order, [0.5, 1.0]).unwrap();
        assert_abs_diff_eq!(v[0], 0.0);
        assert_abs_diff_eq!(v[1], 0.0);
    }

    #[test]
    fn cell_type3x_closed_form() {
        // L_2 at the midline: L_2(0) = -1/2.
        let order = BasisOrder::default();
        for x in [0.1, 0.5, 0.9] {
            let v = ref_shape_value(RefShape::CellType3X { j: 0 }, &order, [x, 0.5]).unwrap();
            assert_abs_diff_eq!(v[0], -0.5);
            assert_abs_diff_eq!(v[1], 0.0);
        }
    }

    #[test]
    fn out_of_range_shape_rejected() {
        let order = BasisOrder::default();
        let bad = RefShape::HigherOrderEdge { edge: 1, i: 3 };
        assert!(ref_shape_value(bad, &order, [0.5, 0.5]).is_err());
        assert!(ref_shape_curl(RefShape::CellType1 { i: 3, j: 0 }, &order, [0.5, 0.5]).is_err());
    }

    #[test]
    fn gradient_shapes_have_zero_curl() {
        let order = BasisOrder::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let p = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            for shape in enumerate_shapes(&order) {
                if shape.is_gradient() {
                    assert!(ref_shape_curl(shape, &order, p).unwrap().abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn lowest_order_curls_are_unit() {
        let order = BasisOrder::default();
        let expected = [-1.0, 1.0, 1.0, -1.0];
        for edge in 0..4 {
            let c = ref_shape_curl(RefShape::LowestOrderEdge { edge }, &order, [0.3, 0.7]).unwrap();
            assert_abs_diff_eq!(c, expected[edge]);
        }
    }

    #[test]
    fn curl_matches_finite_differences() {
        let order = BasisOrder::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let eps = 1e-6;
        for _ in 0..40 {
            let p = [rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9)];
            for shape in enumerate_shapes(&order) {
                let vxp = ref_shape_value(shape, &order, [p[0] + eps, p[1]]).unwrap();
                let vxm = ref_shape_value(shape, &order, [p[0] - eps, p[1]]).unwrap();
                let vyp = ref_shape_value(shape, &order, [p[0], p[1] + eps]).unwrap();
                let vym = ref_shape_value(shape, &order, [p[0], p[1] - eps]).unwrap();
                let fd = (vxp[1] - vxm[1]) / (2.0 * eps) - (vyp[0] - vym[0]) / (2.0 * eps);
                let analytic = ref_shape_curl(shape, &order, p).unwrap();
                let scale = 1.0 + analytic.abs();
                assert!(
                    (fd - analytic).abs() / scale < 1e-6,
                    "{shape:?}: fd {fd} vs analytic {analytic}"
                );
            }
        }
    }

    #[test]
    fn traces_vanish_on_foreign_edges() {
        // Conformity: an edge function's tangential trace lives only on its
        // own edge, cell bubbles have no tangential trace at all.
        let order = BasisOrder::default();
        for shape in enumerate_shapes(&order) {
            let own = match shape {
                RefShape::LowestOrderEdge { edge } | RefShape::HigherOrderEdge { edge, .. } => {
                    Some(edge)
                }
                _ => None,
            };
            for m in 0..4 {
                if Some(m) == own {
                    continue;
                }
                for k in 0..=10 {
                    let s = k as f64 / 10.0;
                    let t = edge_trace(shape, &order, m, s).unwrap();
                    assert!(t.abs() < 1e-12, "{shape:?} leaks onto edge {m}: {t}");
                }
            }
        }
    }

    #[test]
    fn piola_identity_and_scaling() {
        let unit = CellGeometry { origin: [0.0, 0.0], side: 1.0 };
        assert_eq!(piola_map(&unit, [0.25, -0.5]).unwrap(), [0.25, -0.5]);
        let fine = CellGeometry { origin: [0.0, 0.0], side: 1.0 / 32.0 };
        let v = piola_map(&fine, [1.0, -2.0]).unwrap();
        assert_abs_diff_eq!(v[0], 32.0);
        assert_abs_diff_eq!(v[1], -64.0);
        assert_abs_diff_eq!(piola_curl(&fine, 1.0).unwrap(), 1024.0);
        let degenerate = CellGeometry { origin: [0.0, 0.0], side: 0.0 };
        assert!(piola_map(&degenerate, [1.0, 0.0]).is_err());
    }

    #[test]
    fn tangential_line_integral_invariant_under_map() {
        // The integral of the mapped tangential trace along the physical edge
        // equals the reference-cell integral, for every edge function.
        let order = BasisOrder::default();
        let rule = crate::quadrature::gauss_legendre(8);
        for side in [1.0, 0.5, 1.0 / 32.0] {
            let geom = CellGeometry { origin: [0.2, 0.4], side };
            for edge in 0..4 {
                for f in 0..order.edge_fns() {
                    let shape = if f == 0 {
                        RefShape::LowestOrderEdge { edge }
                    } else {
                        RefShape::HigherOrderEdge { edge, i: f - 1 }
                    };
                    let reference =
                        rule.integrate(|s| edge_trace(shape, &order, edge, s).unwrap());
                    let physical = rule.integrate(|s| {
                        let (p, tangent) = local_edge_point(edge, s);
                        let v =
                            piola_map(&geom, ref_shape_value(shape, &order, p).unwrap()).unwrap();
                        (v[0] * tangent[0] + v[1] * tangent[1]) * side
                    });
                    assert_abs_diff_eq!(reference, physical, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn tangential_continuity_across_shared_edges() {
        // Two cells sharing an edge reproduce the same trace after
        // orientation factors, at 10 points along the edge.
        let mesh = Arc::new(build_mesh(2).unwrap());
        let sub = Arc::new(crate::geometry::whole_domain(&mesh));
        let order = BasisOrder::default();
        let dof_map = distribute_dofs(&sub, order);
        let adj = mesh.edge_cells();
        for (edge, cells) in adj.iter().enumerate() {
            if cells.len() != 2 {
                continue;
            }
            for f in 0..order.edge_fns() {
                let dof = dof_map.edge_dof(edge, f).unwrap();
                let traces: Vec<Vec<f64>> = cells
                    .iter()
                    .map(|&c| {
                        let list = dof_map.cell_dofs(c);
                        let entry = list.iter().find(|d| d.dof == dof).unwrap();
                        let m = mesh.cell_edges[c]
                            .iter()
                            .position(|&(e, _)| e == edge)
                            .unwrap();
                        let sign = mesh.cell_edges[c][m].1;
                        (0..10)
                            .map(|k| {
                                // Sample along the global edge direction.
                                let s_global = (k as f64 + 0.5) / 10.0;
                                let s_local =
                                    if sign >= 0 { s_global } else { 1.0 - s_global };
                                let tang_flip = if sign >= 0 { 1.0 } else { -1.0 };
                                entry.factor
                                    * tang_flip
                                    * edge_trace(entry.shape, &order, m, s_local).unwrap()
                            })
                            .collect()
                    })
                    .collect();
                for (a, b) in traces[0].iter().zip(&traces[1]) {
                    assert!((a - b).abs() < 1e-12, "trace mismatch on edge {edge}");
                }
            }
        }
    }

    #[test]
    fn dof_counts() {
        let mesh = Arc::new(build_mesh(1).unwrap());
        let sub = Arc::new(crate::geometry::whole_domain(&mesh));
        assert_eq!(distribute_dofs(&sub, BasisOrder::default()).total_dofs, 40);
        assert_eq!(distribute_dofs(&sub, BasisOrder::lowest()).total_dofs, 4);

        // Two cells in a row at lowest order: 7 distinct edges.
        let mesh2 = Arc::new(build_mesh(2).unwrap());
        let (s0, _) = partition_two(&mesh2).unwrap();
        let s0 = Arc::new(s0);
        assert_eq!(distribute_dofs(&s0, BasisOrder::lowest()).total_dofs, 7);
    }

    #[test]
    fn interface_edges_carry_four_dofs_at_default_order() {
        let mesh = Arc::new(build_mesh(8).unwrap());
        let (s0, _) = partition_two(&mesh).unwrap();
        let s0 = Arc::new(s0);
        let dof_map = distribute_dofs(&s0, BasisOrder::default());
        for e in s0.interface_edges() {
            assert_eq!(dof_map.edge_dofs(e).len(), 4);
        }
    }

    #[test]
    fn numbering_is_edge_major_then_cells() {
        let mesh = Arc::new(build_mesh(2).unwrap());
        let sub = Arc::new(crate::geometry::whole_domain(&mesh));
        let order = BasisOrder::default();
        let dof_map = distribute_dofs(&sub, order);
        assert_eq!(dof_map.edge_dof_count(), mesh.edges.len() * 4);
        let mut seen = vec![false; dof_map.total_dofs];
        for c in 0..mesh.cells.len() {
            for d in dof_map.cell_dofs(c) {
                seen[d.dof] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }
}
