//! Structured quadrilateral mesh of the unit square and its two-strip
//! decomposition.
//!
//! Conventions:
//! - Vertices are numbered row-major, `index = j * (n + 1) + i`.
//! - Cells are numbered row-major, `index = j * n + i`, with local vertex
//!   ordering V0 = lower-left, V1 = lower-right, V2 = upper-left,
//!   V3 = upper-right.
//! - Local edges follow the reference cell: E0 = (V0,V2) left, E1 = (V1,V3)
//!   right, E2 = (V0,V1) bottom, E3 = (V2,V3) top.
//! - Every global edge is directed from its lower vertex index to the higher
//!   one; `cell_edges` carries the sign reconciling the cell-local direction
//!   with the global one.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Local edge endpoints in terms of local vertices, reference-cell ordering.
pub const LOCAL_EDGE_VERTICES: [(usize, usize); 4] = [(0, 2), (1, 3), (0, 1), (2, 3)];

/// Structured n-by-n mesh of the unit square.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub n: usize,
    pub vertices: Vec<[f64; 2]>,
    pub cells: Vec<[usize; 4]>,
    /// Global edges as (lower vertex, higher vertex) pairs.
    pub edges: Vec<[usize; 2]>,
    /// Per cell: (global edge index, orientation sign) for local edges E0..E3.
    pub cell_edges: Vec<[(usize, i8); 4]>,
}

/// Boundary condition tag carried by a subdomain boundary edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    /// Prescribed incident tangential trace.
    Incident,
    /// First-order absorbing (impedance) condition.
    Absorbing,
    /// Transmission interface towards the named neighbour subdomain.
    Interface(usize),
}

/// A set of cells of a parent mesh together with tagged boundary edges.
#[derive(Debug, Clone)]
pub struct Subdomain {
    pub mesh: Arc<Mesh>,
    pub id: usize,
    /// Parent-mesh cell indices, ascending.
    pub cells: Vec<usize>,
    /// Tag per boundary edge (parent-mesh edge index).
    pub boundary_tags: BTreeMap<usize, BoundaryTag>,
    /// Outward unit normal per boundary edge.
    pub outward_normals: BTreeMap<usize, [f64; 2]>,
}

/// Build the structured mesh with `n` cells per side.
pub fn build_mesh(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::invalid("mesh requires at least one cell per side"));
    }
    let h = 1.0 / n as f64;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([i as f64 * h, j as f64 * h]);
        }
    }
    let vid = |i: usize, j: usize| j * (n + 1) + i;

    // Horizontal edges first (line-major), then vertical (row-major).
    let mut edges = Vec::with_capacity(2 * n * (n + 1));
    for j in 0..=n {
        for i in 0..n {
            edges.push([vid(i, j), vid(i + 1, j)]);
        }
    }
    let v_offset = n * (n + 1);
    for j in 0..n {
        for i in 0..=n {
            edges.push([vid(i, j), vid(i, j + 1)]);
        }
    }
    let h_edge = |i: usize, j: usize| j * n + i;
    let v_edge = |i: usize, j: usize| v_offset + j * (n + 1) + i;

    let mut cells = Vec::with_capacity(n * n);
    let mut cell_edges = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let verts = [vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)];
            let locals = [v_edge(i, j), v_edge(i + 1, j), h_edge(i, j), h_edge(i, j + 1)];
            let mut with_signs = [(0usize, 0i8); 4];
            for (m, &e) in locals.iter().enumerate() {
                let (a, b) = LOCAL_EDGE_VERTICES[m];
                let sign = if edges[e] == [verts[a], verts[b]] { 1 } else { -1 };
                with_signs[m] = (e, sign);
            }
            cells.push(verts);
            cell_edges.push(with_signs);
        }
    }
    Ok(Mesh {
        n,
        vertices,
        cells,
        edges,
        cell_edges,
    })
}

impl Mesh {
    pub fn cell_size(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Lower-left corner of a cell.
    pub fn cell_origin(&self, cell: usize) -> [f64; 2] {
        self.vertices[self.cells[cell][0]]
    }

    pub fn edge_midpoint(&self, edge: usize) -> [f64; 2] {
        let [a, b] = self.edges[edge];
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]
    }

    /// Unit vector along the global edge direction (lower to higher vertex).
    pub fn edge_tangent(&self, edge: usize) -> [f64; 2] {
        let [a, b] = self.edges[edge];
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        let (dx, dy) = (pb[0] - pa[0], pb[1] - pa[1]);
        let len = (dx * dx + dy * dy).sqrt();
        [dx / len, dy / len]
    }

    pub fn edge_length(&self, edge: usize) -> f64 {
        let [a, b] = self.edges[edge];
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt()
    }

    /// Cells adjacent to each edge.
    pub fn edge_cells(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.edges.len()];
        for (c, edges) in self.cell_edges.iter().enumerate() {
            for &(e, _) in edges {
                adj[e].push(c);
            }
        }
        adj
    }
}

/// Outward normal of a boundary edge given the local side it occupies in its
/// only adjacent cell.
fn outward_normal(local_edge: usize) -> [f64; 2] {
    match local_edge {
        0 => [-1.0, 0.0],
        1 => [1.0, 0.0],
        2 => [0.0, -1.0],
        3 => [0.0, 1.0],
        _ => unreachable!(),
    }
}

/// Build a subdomain from a cell subset, tagging boundary edges by a rule on
/// the edge midpoint. Interface edges are those interior to the parent mesh
/// but on the subset boundary.
fn subdomain_from_cells(
    mesh: &Arc<Mesh>,
    id: usize,
    neighbor: Option<usize>,
    cells: Vec<usize>,
    tag_outer: impl Fn([f64; 2]) -> BoundaryTag,
) -> Subdomain {
    let in_subset: Vec<bool> = {
        let mut flags = vec![false; mesh.cells.len()];
        for &c in &cells {
            flags[c] = true;
        }
        flags
    };
    let adj = mesh.edge_cells();
    let mut boundary_tags = BTreeMap::new();
    let mut outward_normals = BTreeMap::new();
    for &c in &cells {
        for (m, &(e, _)) in mesh.cell_edges[c].iter().enumerate() {
            let inside_count = adj[e].iter().filter(|&&cc| in_subset[cc]).count();
            if inside_count != 1 {
                continue; // interior to the subset
            }
            let tag = if adj[e].len() == 2 {
                // Interior to the parent mesh: transmission interface.
                BoundaryTag::Interface(neighbor.expect("interface edge without neighbor"))
            } else {
                tag_outer(mesh.edge_midpoint(e))
            };
            boundary_tags.insert(e, tag);
            outward_normals.insert(e, outward_normal(m));
        }
    }
    Subdomain {
        mesh: Arc::clone(mesh),
        id,
        cells,
        boundary_tags,
        outward_normals,
    }
}

/// Tag rule for the outer boundary of the unit square: the bottom side is the
/// incident boundary, all other sides absorb.
fn default_outer_tag(mid: [f64; 2]) -> BoundaryTag {
    if mid[1] == 0.0 {
        BoundaryTag::Incident
    } else {
        BoundaryTag::Absorbing
    }
}

/// Split the mesh into the lower strip (0,1)x(0,0.5) and the upper strip
/// (0,1)x(0.5,1). Requires even `n` so the interface falls on a mesh line.
pub fn partition_two(mesh: &Arc<Mesh>) -> Result<(Subdomain, Subdomain)> {
    if mesh.n % 2 != 0 {
        return Err(Error::invalid(
            "two-strip partition requires an even cell count per side",
        ));
    }
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for (c, verts) in mesh.cells.iter().enumerate() {
        let cy = 0.25 * verts.iter().map(|&v| mesh.vertices[v][1]).sum::<f64>();
        if cy < 0.5 {
            lower.push(c);
        } else {
            upper.push(c);
        }
    }
    let s0 = subdomain_from_cells(mesh, 0, Some(1), lower, default_outer_tag);
    let s1 = subdomain_from_cells(mesh, 1, Some(0), upper, default_outer_tag);
    Ok((s0, s1))
}

/// The whole mesh as a single subdomain with the default outer tags.
pub fn whole_domain(mesh: &Arc<Mesh>) -> Subdomain {
    let cells = (0..mesh.cells.len()).collect();
    subdomain_from_cells(mesh, 0, None, cells, default_outer_tag)
}

/// The whole mesh with every boundary edge tagged incident; used to impose a
/// known field on the full boundary.
pub fn whole_domain_all_incident(mesh: &Arc<Mesh>) -> Subdomain {
    let cells = (0..mesh.cells.len()).collect();
    subdomain_from_cells(mesh, 0, None, cells, |_| BoundaryTag::Incident)
}

impl Subdomain {
    /// Interface edges ordered by ascending midpoint x-coordinate.
    pub fn interface_edges(&self) -> Vec<usize> {
        let mut edges: Vec<usize> = self
            .boundary_tags
            .iter()
            .filter(|(_, t)| matches!(t, BoundaryTag::Interface(_)))
            .map(|(&e, _)| e)
            .collect();
        edges.sort_by(|&a, &b| {
            let (ma, mb) = (self.mesh.edge_midpoint(a), self.mesh.edge_midpoint(b));
            ma[0].partial_cmp(&mb[0]).unwrap().then(ma[1].partial_cmp(&mb[1]).unwrap())
        });
        edges
    }

    /// Edges with a given tag kind, in ascending edge order.
    pub fn edges_with_tag(&self, want: fn(&BoundaryTag) -> bool) -> Vec<usize> {
        self.boundary_tags
            .iter()
            .filter(|(_, t)| want(t))
            .map(|(&e, _)| e)
            .collect()
    }

    pub fn incident_edges(&self) -> Vec<usize> {
        self.edges_with_tag(|t| matches!(t, BoundaryTag::Incident))
    }

    pub fn absorbing_edges(&self) -> Vec<usize> {
        self.edges_with_tag(|t| matches!(t, BoundaryTag::Absorbing))
    }

    /// All edges touching the subdomain's cells, ascending.
    pub fn edge_set(&self) -> Vec<usize> {
        let mut seen = vec![false; self.mesh.edges.len()];
        for &c in &self.cells {
            for &(e, _) in &self.mesh.cell_edges[c] {
                seen[e] = true;
            }
        }
        seen.iter()
            .enumerate()
            .filter_map(|(e, &s)| s.then_some(e))
            .collect()
    }

    /// The cell adjacent to a boundary edge and the edge's local position in it.
    pub fn boundary_edge_cell(&self, edge: usize) -> Option<(usize, usize)> {
        for &c in &self.cells {
            for (m, &(e, _)) in self.mesh.cell_edges[c].iter().enumerate() {
                if e == edge {
                    return Some((c, m));
                }
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_grid_counts() {
        let mesh = build_mesh(1).unwrap();
        assert_eq!(mesh.vertices.len(), 4);
        assert_eq!(mesh.cells.len(), 1);
        assert_eq!(mesh.edges.len(), 4);
    }

    #[test]
    fn closed_form_counts_at_n32() {
        let mesh = build_mesh(32).unwrap();
        assert_eq!(mesh.vertices.len(), 1089);
        assert_eq!(mesh.cells.len(), 1024);
        assert_eq!(mesh.edges.len(), 2112);
    }

    #[test]
    fn zero_cells_rejected() {
        assert!(matches!(build_mesh(0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn interior_edges_shared_by_two_cells() {
        // n = 2 by hand: 4 interior edges (2 horizontal at y=0.5, 2 vertical
        // at x=0.5), each shared by exactly two cells.
        let mesh = build_mesh(2).unwrap();
        let adj = mesh.edge_cells();
        let interior = adj.iter().filter(|cells| cells.len() == 2).count();
        let boundary = adj.iter().filter(|cells| cells.len() == 1).count();
        assert_eq!(interior, 4);
        assert_eq!(boundary, 8);
    }

    #[test]
    fn cells_are_axis_aligned_squares() {
        let mesh = build_mesh(4).unwrap();
        let h = mesh.cell_size();
        for cell in 0..mesh.cells.len() {
            let [x0, y0] = mesh.cell_origin(cell);
            let verts = mesh.cells[cell];
            assert_eq!(mesh.vertices[verts[1]], [x0 + h, y0]);
            assert_eq!(mesh.vertices[verts[2]], [x0, y0 + h]);
            assert_eq!(mesh.vertices[verts[3]], [x0 + h, y0 + h]);
        }
    }

    #[test]
    fn partition_needs_even_n() {
        let mesh = Arc::new(build_mesh(3).unwrap());
        assert!(matches!(partition_two(&mesh), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn partition_two_smallest() {
        let mesh = Arc::new(build_mesh(2).unwrap());
        let (s0, s1) = partition_two(&mesh).unwrap();
        assert_eq!(s0.cells, vec![0, 1]);
        assert_eq!(s1.cells, vec![2, 3]);
        let iface = s0.interface_edges();
        assert_eq!(iface.len(), 2);
        assert_eq!(mesh.edge_midpoint(iface[0]), [0.25, 0.5]);
        assert_eq!(mesh.edge_midpoint(iface[1]), [0.75, 0.5]);
    }

    #[test]
    fn partition_two_n32() {
        let mesh = Arc::new(build_mesh(32).unwrap());
        let (s0, s1) = partition_two(&mesh).unwrap();
        assert_eq!(s0.cells.len(), 512);
        assert_eq!(s1.cells.len(), 512);
        assert_eq!(s0.interface_edges().len(), 32);
        assert_eq!(s1.interface_edges().len(), 32);
    }

    #[test]
    fn interface_edge_lists_geometrically_identical() {
        let mesh = Arc::new(build_mesh(32).unwrap());
        let (s0, s1) = partition_two(&mesh).unwrap();
        for (&e0, &e1) in s0.interface_edges().iter().zip(&s1.interface_edges()) {
            let (m0, m1) = (mesh.edge_midpoint(e0), mesh.edge_midpoint(e1));
            assert!((m0[0] - m1[0]).abs() < 1e-12 && (m0[1] - m1[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn interface_edges_deterministic() {
        let mesh = Arc::new(build_mesh(8).unwrap());
        let (s0, _) = partition_two(&mesh).unwrap();
        assert_eq!(s0.interface_edges(), s0.interface_edges());
    }

    #[test]
    fn partition_covers_mesh_disjointly() {
        for n in [2usize, 4, 6, 10] {
            let mesh = Arc::new(build_mesh(n).unwrap());
            let (s0, s1) = partition_two(&mesh).unwrap();
            let mut all: Vec<usize> = s0.cells.iter().chain(&s1.cells).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..mesh.cells.len()).collect::<Vec<_>>());
            assert_eq!(s0.interface_edges().len(), n);
            assert_eq!(s1.interface_edges().len(), n);
        }
    }

    #[test]
    fn interface_normals_opposite() {
        let mesh = Arc::new(build_mesh(4).unwrap());
        let (s0, s1) = partition_two(&mesh).unwrap();
        for (&e0, &e1) in s0.interface_edges().iter().zip(&s1.interface_edges()) {
            assert_eq!(e0, e1);
            let n0 = s0.outward_normals[&e0];
            let n1 = s1.outward_normals[&e1];
            assert_eq!([n0[0] + n1[0], n0[1] + n1[1]], [0.0, 0.0]);
        }
    }

    #[test]
    fn boundary_tags_cover_every_boundary_edge_once() {
        let mesh = Arc::new(build_mesh(4).unwrap());
        let (s0, s1) = partition_two(&mesh).unwrap();
        for sub in [&s0, &s1] {
            let adj = mesh.edge_cells();
            let in_subset: Vec<bool> = {
                let mut f = vec![false; mesh.cells.len()];
                for &c in &sub.cells {
                    f[c] = true;
                }
                f
            };
            for e in 0..mesh.edges.len() {
                let inside = adj[e].iter().filter(|&&c| in_subset[c]).count();
                let is_boundary = inside == 1;
                assert_eq!(sub.boundary_tags.contains_key(&e), is_boundary);
            }
        }
        // Lower strip: bottom incident, sides absorbing, top interface.
        assert_eq!(s0.incident_edges().len(), 4);
        assert_eq!(s0.absorbing_edges().len(), 4);
        // Upper strip: no incident edges at all.
        assert_eq!(s1.incident_edges().len(), 0);
        assert_eq!(s1.absorbing_edges().len(), 8);
    }

    #[test]
    fn whole_domain_tags() {
        let mesh = Arc::new(build_mesh(4).unwrap());
        let whole = whole_domain(&mesh);
        assert_eq!(whole.incident_edges().len(), 4);
        assert_eq!(whole.absorbing_edges().len(), 12);
        assert!(whole.interface_edges().is_empty());
        let dirichlet = whole_domain_all_incident(&mesh);
        assert_eq!(dirichlet.incident_edges().len(), 16);
    }
}
