//! Shared surface template and the one-ring group operators used by the
//! locally-sparse penalty.
//!
//! Mesh text format:
//!
//! ```text
//! <vertex count> <triangle count>
//! x y z            (one line per vertex)
//! a b c            (one line per triangle, zero-based vertex indices)
//! ```
//!
//! A scalar overlay is the same file followed by one value per vertex.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertex_count: usize,
    pub positions: Vec<[f64; 3]>,
    pub triangles: Vec<[usize; 3]>,
    /// Closed one-ring of each vertex (the vertex itself plus every vertex
    /// sharing an edge with it), ascending.
    pub one_ring: Vec<Vec<usize>>,
}

impl TriangleMesh {
    /// Validates the triangle list and derives one-rings. `positions` may be
    /// empty; otherwise it must hold one coordinate per vertex.
    pub fn new(
        vertex_count: usize,
        positions: Vec<[f64; 3]>,
        triangles: Vec<[usize; 3]>,
    ) -> Result<Self> {
        if vertex_count == 0 {
            return Err(Error::Input("mesh has no vertices".into()));
        }
        if !positions.is_empty() && positions.len() != vertex_count {
            return Err(Error::Dimension(format!(
                "{} positions for {vertex_count} vertices",
                positions.len()
            )));
        }
        let mesh = TriangleMesh {
            vertex_count,
            positions,
            triangles,
            one_ring: Vec::new(),
        };
        build_one_ring(mesh)
    }

    /// A mesh with no triangles: every one-ring is the vertex alone, so the
    /// group operators reduce to their scalar counterparts.
    pub fn singleton(vertex_count: usize) -> Self {
        TriangleMesh {
            vertex_count,
            positions: Vec::new(),
            triangles: Vec::new(),
            one_ring: (0..vertex_count).map(|q| vec![q]).collect(),
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    /// Vertices within `hops` edges of `center`, ascending.
    pub fn neighborhood(&self, center: usize, hops: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.vertex_count];
        let mut queue = VecDeque::new();
        dist[center] = 0;
        queue.push_back(center);
        while let Some(q) = queue.pop_front() {
            if dist[q] == hops {
                continue;
            }
            for &nb in &self.one_ring[q] {
                if dist[nb] == usize::MAX {
                    dist[nb] = dist[q] + 1;
                    queue.push_back(nb);
                }
            }
        }
        (0..self.vertex_count)
            .filter(|&q| dist[q] != usize::MAX)
            .collect()
    }

    pub fn tetrahedron() -> Self {
        let s = 1.0 / 2f64.sqrt();
        let positions = vec![[1.0, 0.0, -s], [-1.0, 0.0, -s], [0.0, 1.0, s], [0.0, -1.0, s]];
        let triangles = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
        Self::new(4, positions, triangles).expect("tetrahedron is a valid mesh")
    }

    pub fn icosahedron() -> Self {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let positions = vec![
            [-1.0, t, 0.0],
            [1.0, t, 0.0],
            [-1.0, -t, 0.0],
            [1.0, -t, 0.0],
            [0.0, -1.0, t],
            [0.0, 1.0, t],
            [0.0, -1.0, -t],
            [0.0, 1.0, -t],
            [t, 0.0, -1.0],
            [t, 0.0, 1.0],
            [-t, 0.0, -1.0],
            [-t, 0.0, 1.0],
        ];
        let triangles = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        Self::new(12, positions, triangles).expect("icosahedron is a valid mesh")
    }

    /// Latitude/longitude sphere: two poles plus `rings * segments` vertices.
    pub fn uv_sphere(rings: usize, segments: usize) -> Result<Self> {
        if rings < 1 || segments < 3 {
            return Err(Error::Input(format!(
                "uv sphere needs rings >= 1 and segments >= 3, got {rings} x {segments}"
            )));
        }
        let mut positions = Vec::with_capacity(rings * segments + 2);
        positions.push([0.0, 0.0, 1.0]);
        for r in 0..rings {
            let theta = std::f64::consts::PI * (r + 1) as f64 / (rings + 1) as f64;
            for s in 0..segments {
                let phi = 2.0 * std::f64::consts::PI * s as f64 / segments as f64;
                positions.push([theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]);
            }
        }
        positions.push([0.0, 0.0, -1.0]);
        let south = rings * segments + 1;
        let idx = |r: usize, s: usize| 1 + r * segments + (s % segments);
        let mut triangles = Vec::new();
        for s in 0..segments {
            triangles.push([0, idx(0, s), idx(0, s + 1)]);
        }
        for r in 0..rings - 1 {
            for s in 0..segments {
                triangles.push([idx(r, s), idx(r + 1, s), idx(r + 1, s + 1)]);
                triangles.push([idx(r, s), idx(r + 1, s + 1), idx(r, s + 1)]);
            }
        }
        for s in 0..segments {
            triangles.push([south, idx(rings - 1, s + 1), idx(rings - 1, s)]);
        }
        Self::new(positions.len(), positions, triangles)
    }

    /// Closed torus with `major * minor` vertices; every vertex has six neighbours.
    pub fn torus(major: usize, minor: usize) -> Result<Self> {
        if major < 3 || minor < 3 {
            return Err(Error::Input(format!(
                "torus needs at least 3 x 3 vertices, got {major} x {minor}"
            )));
        }
        let (big, small) = (2.0, 0.7);
        let mut positions = Vec::with_capacity(major * minor);
        for i in 0..major {
            let u = 2.0 * std::f64::consts::PI * i as f64 / major as f64;
            for j in 0..minor {
                let v = 2.0 * std::f64::consts::PI * j as f64 / minor as f64;
                let w = big + small * v.cos();
                positions.push([w * u.cos(), w * u.sin(), small * v.sin()]);
            }
        }
        let idx = |i: usize, j: usize| (i % major) * minor + (j % minor);
        let mut triangles = Vec::with_capacity(2 * major * minor);
        for i in 0..major {
            for j in 0..minor {
                triangles.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
                triangles.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
            }
        }
        Self::new(major * minor, positions, triangles)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{} {}", self.vertex_count, self.triangles.len()).unwrap();
        for q in 0..self.vertex_count {
            let p = self.positions.get(q).copied().unwrap_or([0.0; 3]);
            writeln!(out, "{} {} {}", p[0], p[1], p[2]).unwrap();
        }
        for t in &self.triangles {
            writeln!(out, "{} {} {}", t[0], t[1], t[2]).unwrap();
        }
        out
    }

    /// Mesh text followed by one scalar per vertex.
    pub fn overlay_text(&self, scalars: &[f64]) -> Result<String> {
        if scalars.len() != self.vertex_count {
            return Err(Error::Dimension(format!(
                "{} overlay values for {} vertices",
                scalars.len(),
                self.vertex_count
            )));
        }
        let mut out = self.to_text();
        for s in scalars {
            writeln!(out, "{s}").unwrap();
        }
        Ok(out)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Ok(parse_mesh_text(text)?.0)
    }

    /// Parses a mesh text file that may carry a trailing scalar overlay.
    pub fn from_overlay_text(text: &str) -> Result<(Self, Option<Vec<f64>>)> {
        parse_mesh_text(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text).map_err(|e| match e {
            Error::Parse { context, message } => Error::Parse {
                context: format!("{}: {context}", path.display()),
                message,
            },
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

fn parse_mesh_text(text: &str) -> Result<(TriangleMesh, Option<Vec<f64>>)> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let fields = |lineno: usize, line: &str, want: usize| -> Result<Vec<String>> {
        let parts: Vec<String> = line.split_whitespace().map(str::to_owned).collect();
        if parts.len() != want {
            return Err(Error::parse(
                format!("mesh line {lineno}"),
                format!("expected {want} fields, found {}", parts.len()),
            ));
        }
        Ok(parts)
    };
    let num = |lineno: usize, s: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::parse(format!("mesh line {lineno}"), format!("`{s}` is not a number")))
    };
    let index = |lineno: usize, s: &str| -> Result<usize> {
        s.parse().map_err(|_| {
            Error::parse(format!("mesh line {lineno}"), format!("`{s}` is not a vertex index"))
        })
    };

    let (lineno, header) = lines
        .next()
        .ok_or_else(|| Error::parse("mesh header", "empty file"))?;
    let h = fields(lineno, header, 2)?;
    let nv = index(lineno, &h[0])?;
    let nt = index(lineno, &h[1])?;

    let mut positions = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (lineno, line) = lines
            .next()
            .ok_or_else(|| Error::parse("mesh vertices", format!("expected {nv} vertex lines")))?;
        let f = fields(lineno, line, 3)?;
        positions.push([num(lineno, &f[0])?, num(lineno, &f[1])?, num(lineno, &f[2])?]);
    }
    let mut triangles = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (lineno, line) = lines
            .next()
            .ok_or_else(|| Error::parse("mesh triangles", format!("expected {nt} triangle lines")))?;
        let f = fields(lineno, line, 3)?;
        triangles.push([index(lineno, &f[0])?, index(lineno, &f[1])?, index(lineno, &f[2])?]);
    }
    let rest: Vec<(usize, &str)> = lines.collect();
    let overlay = if rest.is_empty() {
        None
    } else if rest.len() == nv {
        let mut values = Vec::with_capacity(nv);
        for (lineno, line) in rest {
            values.push(num(lineno, line)?);
        }
        Some(values)
    } else {
        return Err(Error::parse(
            "mesh overlay",
            format!("expected {nv} scalar lines after the triangles, found {}", rest.len()),
        ));
    };
    Ok((TriangleMesh::new(nv, positions, triangles)?, overlay))
}

/// Derives closed one-rings from the triangle list, rejecting out-of-range
/// indices, degenerate triangles and edges shared by more than two triangles.
pub fn build_one_ring(mut mesh: TriangleMesh) -> Result<TriangleMesh> {
    let nv = mesh.vertex_count;
    let mut edge_use: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (ti, t) in mesh.triangles.iter().enumerate() {
        for &v in t {
            if v >= nv {
                return Err(Error::Input(format!(
                    "triangle {ti} references vertex {v} but the mesh has {nv} vertices"
                )));
            }
        }
        if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
            return Err(Error::Input(format!("triangle {ti} is degenerate: {t:?}")));
        }
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            *edge_use.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    if let Some((&(a, b), &count)) = edge_use.iter().find(|(_, &c)| c > 2) {
        return Err(Error::NonManifoldEdge(a, b, count));
    }
    let mut rings: Vec<Vec<usize>> = (0..nv).map(|q| vec![q]).collect();
    for &(a, b) in edge_use.keys() {
        rings[a].push(b);
        rings[b].push(a);
    }
    for ring in &mut rings {
        ring.sort_unstable();
        ring.dedup();
    }
    mesh.one_ring = rings;
    Ok(mesh)
}

/// Correspondence between feature-matrix rows and mesh vertices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VertexMap {
    row_to_vertex: Vec<usize>,
    vertex_to_row: Vec<usize>,
}

impl VertexMap {
    pub fn identity(m: usize) -> Self {
        VertexMap {
            row_to_vertex: (0..m).collect(),
            vertex_to_row: (0..m).collect(),
        }
    }

    pub fn from_rows(row_to_vertex: Vec<usize>) -> Result<Self> {
        let m = row_to_vertex.len();
        let mut vertex_to_row = vec![usize::MAX; m];
        for (row, &v) in row_to_vertex.iter().enumerate() {
            if v >= m {
                return Err(Error::Input(format!(
                    "row {row} maps to vertex {v}, outside 0..{m}"
                )));
            }
            if vertex_to_row[v] != usize::MAX {
                return Err(Error::Input(format!(
                    "vertex {v} is mapped from rows {} and {row}",
                    vertex_to_row[v]
                )));
            }
            vertex_to_row[v] = row;
        }
        Ok(VertexMap {
            row_to_vertex,
            vertex_to_row,
        })
    }

    /// Reads `row,vertex` pairs (header optional). Every row in `0..m` must appear once.
    pub fn read_csv(text: &str, m: usize) -> Result<Self> {
        let mut map = vec![usize::MAX; m];
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with(|c: char| c.is_alphabetic())) {
                continue;
            }
            let parse = |s: &str| -> Result<usize> {
                s.trim().parse().map_err(|_| {
                    Error::parse(format!("vertex map line {}", lineno + 1), format!("bad index `{s}`"))
                })
            };
            let (r, v) = line
                .split_once(',')
                .ok_or_else(|| Error::parse(format!("vertex map line {}", lineno + 1), "expected `row,vertex`"))?;
            let (r, v) = (parse(r)?, parse(v)?);
            if r >= m {
                return Err(Error::Input(format!("vertex map row {r} outside 0..{m}")));
            }
            map[r] = v;
        }
        if let Some(r) = map.iter().position(|&v| v == usize::MAX) {
            return Err(Error::Input(format!("vertex map has no entry for row {r}")));
        }
        Self::from_rows(map)
    }

    pub fn len(&self) -> usize {
        self.row_to_vertex.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_to_vertex.is_empty()
    }

    pub fn vertex(&self, row: usize) -> usize {
        self.row_to_vertex[row]
    }

    pub fn row(&self, vertex: usize) -> usize {
        self.vertex_to_row[vertex]
    }
}

/// Per-row neighbour lists in row space (CSR layout), precomputed once from
/// a mesh and a vertex map. Within a group, rows are ordered by ascending
/// vertex index, which fixes the summation order.
#[derive(Debug, Clone)]
pub struct LocalGroups {
    offsets: Vec<usize>,
    rows: Vec<usize>,
}

impl LocalGroups {
    pub fn new(mesh: &TriangleMesh, map: &VertexMap) -> Result<Self> {
        if map.len() != mesh.vertex_count() {
            return Err(Error::Dimension(format!(
                "vertex map covers {} rows but the mesh has {} vertices",
                map.len(),
                mesh.vertex_count()
            )));
        }
        let m = map.len();
        let mut offsets = Vec::with_capacity(m + 1);
        let mut rows = Vec::new();
        offsets.push(0);
        for p in 0..m {
            let q = map.vertex(p);
            rows.extend(mesh.one_ring[q].iter().map(|&nb| map.row(nb)));
            offsets.push(rows.len());
        }
        Ok(LocalGroups { offsets, rows })
    }

    pub fn identity(mesh: &TriangleMesh) -> Self {
        Self::new(mesh, &VertexMap::identity(mesh.vertex_count()))
            .expect("identity map always matches its mesh")
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Average closed one-ring size.
    pub fn mean_group_size(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.rows.len() as f64 / self.len() as f64
    }

    pub fn group(&self, row: usize) -> &[usize] {
        &self.rows[self.offsets[row]..self.offsets[row + 1]]
    }

    fn check(&self, a: &DMatrix<f64>) -> Result<()> {
        if a.nrows() != self.len() {
            return Err(Error::Dimension(format!(
                "matrix has {} rows but the mesh grouping covers {}",
                a.nrows(),
                self.len()
            )));
        }
        Ok(())
    }

    fn magnitude_column(&self, col: &[f64], out: &mut [f64], sq: &mut Vec<f64>) {
        sq.clear();
        sq.extend(col.iter().map(|v| v * v));
        for (p, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for &r in self.group(p) {
                acc += sq[r];
            }
            *o = acc.sqrt();
        }
    }

    fn shrink_column(&self, col: &[f64], threshold: f64, out: &mut [f64], sq: &mut Vec<f64>) {
        self.magnitude_column(col, out, sq);
        for (o, &g) in out.iter_mut().zip(col) {
            let mag = *o;
            *o = if mag <= threshold || mag == 0.0 {
                0.0
            } else {
                g * (1.0 - threshold / mag)
            };
        }
    }

    /// One-ring Euclidean magnitude of every entry, column by column.
    pub fn magnitude(&self, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check(a)?;
        let mut out = DMatrix::zeros(a.nrows(), a.ncols());
        self.for_each_column(a, &mut out, |col, dst, sq| self.magnitude_column(col, dst, sq));
        Ok(out)
    }

    /// Group shrinkage `G * max(0, 1 - t / |G|_ring)`, zero where the ring magnitude is `<= t`.
    pub fn shrink(&self, g: &DMatrix<f64>, threshold: f64) -> Result<DMatrix<f64>> {
        if !(threshold >= 0.0) {
            return Err(Error::Input(format!(
                "shrink threshold must be nonnegative, got {threshold}"
            )));
        }
        self.check(g)?;
        let mut out = DMatrix::zeros(g.nrows(), g.ncols());
        self.for_each_column(g, &mut out, |col, dst, sq| {
            self.shrink_column(col, threshold, dst, sq)
        });
        Ok(out)
    }

    fn for_each_column<F>(&self, src: &DMatrix<f64>, dst: &mut DMatrix<f64>, f: F)
    where
        F: Fn(&[f64], &mut [f64], &mut Vec<f64>) + Sync,
    {
        let m = src.nrows();
        if m == 0 {
            return;
        }
        let src = src.as_slice();
        let dst = dst.as_mut_slice();
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            dst.par_chunks_mut(m)
                .zip(src.par_chunks(m))
                .for_each_init(Vec::new, |sq, (d, s)| f(s, d, sq));
        }
        #[cfg(not(feature = "parallel"))]
        {
            let mut sq = Vec::new();
            for (d, s) in dst.chunks_mut(m).zip(src.chunks(m)) {
                f(s, d, &mut sq);
            }
        }
    }
}

pub fn local_magnitude(a: &DMatrix<f64>, mesh: &TriangleMesh, map: &VertexMap) -> Result<DMatrix<f64>> {
    LocalGroups::new(mesh, map)?.magnitude(a)
}

pub fn local_shrink(
    g: &DMatrix<f64>,
    threshold: f64,
    mesh: &TriangleMesh,
    map: &VertexMap,
) -> Result<DMatrix<f64>> {
    LocalGroups::new(mesh, map)?.shrink(g, threshold)
}

/// Scalar reported for the sparse component: entrywise sum of absolute values.
pub fn local_sparse_norm(s: &DMatrix<f64>) -> f64 {
    s.iter().map(|v| v.abs()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(m, n, |_, _| rng.random_range(-2.0..2.0))
    }

    /// Brute-force one-ring enumeration straight from the triangle list.
    fn ring_oracle(mesh: &TriangleMesh, q: usize) -> Vec<usize> {
        let mut ring = vec![q];
        for t in &mesh.triangles {
            if t.contains(&q) {
                ring.extend(t.iter().copied());
            }
        }
        ring.sort_unstable();
        ring.dedup();
        ring
    }

    #[test]
    fn single_triangle_ring() {
        let mesh = TriangleMesh::new(3, vec![], vec![[0, 1, 2]]).unwrap();
        assert_eq!(mesh.one_ring[0], vec![0, 1, 2]);
    }

    #[test]
    fn icosahedron_rings_have_six_members() {
        let mesh = TriangleMesh::icosahedron();
        for q in 0..12 {
            assert_eq!(mesh.one_ring[q], ring_oracle(&mesh, q));
            assert_eq!(mesh.one_ring[q].len(), 6);
        }
    }

    #[test]
    fn tetrahedron_rings_are_complete() {
        let mesh = TriangleMesh::tetrahedron();
        for q in 0..4 {
            assert_eq!(mesh.one_ring[q], vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn generated_meshes_are_symmetric() {
        for mesh in [TriangleMesh::uv_sphere(5, 8).unwrap(), TriangleMesh::torus(5, 4).unwrap()] {
            for q in 0..mesh.vertex_count() {
                assert_eq!(mesh.one_ring[q], ring_oracle(&mesh, q));
                for &nb in &mesh.one_ring[q] {
                    assert!(mesh.one_ring[nb].contains(&q));
                }
            }
        }
        let torus = TriangleMesh::torus(20, 25).unwrap();
        assert_eq!(torus.vertex_count(), 500);
        assert!(torus.one_ring.iter().all(|r| r.len() == 7));
    }

    #[test]
    fn non_manifold_edge_is_named() {
        let tris = vec![[0, 1, 2], [0, 1, 3], [0, 1, 4]];
        let err = TriangleMesh::new(5, vec![], tris).unwrap_err();
        assert!(matches!(err, Error::NonManifoldEdge(0, 1, 3)), "{err}");
    }

    #[test]
    fn out_of_range_index_is_rejected() {
        assert!(TriangleMesh::new(3, vec![], vec![[0, 1, 3]]).is_err());
        assert!(TriangleMesh::new(3, vec![], vec![[0, 1, 1]]).is_err());
    }

    #[test]
    fn text_round_trip_is_exact() {
        let mesh = TriangleMesh::uv_sphere(3, 5).unwrap();
        let back = TriangleMesh::from_text(&mesh.to_text()).unwrap();
        assert_eq!(back, mesh);
        let scalars: Vec<f64> = (0..mesh.vertex_count()).map(|i| i as f64 / 7.0).collect();
        let (m2, ov) = TriangleMesh::from_overlay_text(&mesh.overlay_text(&scalars).unwrap()).unwrap();
        assert_eq!(m2, mesh);
        assert_eq!(ov.unwrap(), scalars);
    }

    #[test]
    fn truncated_text_is_rejected() {
        assert!(TriangleMesh::from_text("3 1\n0 0 0\n1 0 0\n").is_err());
        assert!(TriangleMesh::from_text("3 1\n0 0 0\n1 0 0\n0 1 0\n0 1\n").is_err());
    }

    #[test]
    fn vertex_map_csv_and_bijection() {
        let map = VertexMap::read_csv("row,vertex\n0,2\n1,0\n2,1\n", 3).unwrap();
        assert_eq!(map.vertex(0), 2);
        assert_eq!(map.row(2), 0);
        assert!(VertexMap::from_rows(vec![0, 0, 1]).is_err());
        assert!(VertexMap::read_csv("0,1\n1,0\n", 3).is_err());
    }

    #[test]
    fn magnitude_zero_and_single_triangle() {
        let mesh = TriangleMesh::new(3, vec![], vec![[0, 1, 2]]).unwrap();
        let map = VertexMap::identity(3);
        let z = local_magnitude(&DMatrix::zeros(3, 2), &mesh, &map).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
        let col = DMatrix::from_column_slice(3, 1, &[3.0, 0.0, 4.0]);
        let mag = local_magnitude(&col, &mesh, &map).unwrap();
        assert_eq!(mag.as_slice(), &[5.0, 5.0, 5.0]);
    }

    #[test]
    fn magnitude_matches_double_loop_oracle() {
        let mesh = TriangleMesh::icosahedron();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let perm: Vec<usize> = {
            let mut p: Vec<usize> = (0..12).collect();
            for i in (1..12).rev() {
                p.swap(i, rng.random_range(0..=i));
            }
            p
        };
        let map = VertexMap::from_rows(perm).unwrap();
        let a = random_matrix(&mut rng, 12, 4);
        let got = local_magnitude(&a, &mesh, &map).unwrap();
        for p in 0..12 {
            let q = map.vertex(p);
            for i in 0..4 {
                let mut acc = 0.0;
                for qq in 0..12 {
                    if ring_oracle(&mesh, q).contains(&qq) {
                        acc += a[(map.row(qq), i)].powi(2);
                    }
                }
                assert!((got[(p, i)] - acc.sqrt()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn shrink_special_cases() {
        let mesh = TriangleMesh::icosahedron();
        let map = VertexMap::identity(12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_matrix(&mut rng, 12, 3);
        assert_eq!(local_shrink(&g, 0.0, &mesh, &map).unwrap(), g);
        assert!(local_shrink(&g, -1.0, &mesh, &map).is_err());

        let mag = local_magnitude(&g, &mesh, &map).unwrap();
        let t = mag[(4, 1)] / 2.0;
        let s = local_shrink(&g, t, &mesh, &map).unwrap();
        assert!((s[(4, 1)] - g[(4, 1)] / 2.0).abs() < 1e-15);
    }

    #[test]
    fn shrink_matches_scalar_loop_oracle_exactly() {
        let mesh = TriangleMesh::icosahedron();
        let map = VertexMap::identity(12);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = random_matrix(&mut rng, 12, 6);
        let t = 1.7;
        let got = local_shrink(&g, t, &mesh, &map).unwrap();
        for i in 0..6 {
            for p in 0..12 {
                let mut acc = 0.0;
                for &q in &mesh.one_ring[p] {
                    acc += g[(q, i)] * g[(q, i)];
                }
                let bar = acc.sqrt();
                let want = if bar == 0.0 { 0.0 } else { g[(p, i)] * f64::max(0.0, 1.0 - t / bar) };
                assert_eq!(got[(p, i)], want);
            }
        }
    }

    #[test]
    fn zero_ring_shrinks_to_zero() {
        let mesh = TriangleMesh::tetrahedron();
        let g = DMatrix::zeros(4, 2);
        let s = local_shrink(&g, 0.0, &mesh, &VertexMap::identity(4)).unwrap();
        assert!(s.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sparse_norm_examples() {
        assert_eq!(local_sparse_norm(&DMatrix::zeros(3, 3)), 0.0);
        let mut s = DMatrix::zeros(3, 3);
        s[(1, 2)] = 3.5;
        assert_eq!(local_sparse_norm(&s), 3.5);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let r = random_matrix(&mut rng, 7, 5);
        let mut brute = 0.0;
        for p in 0..7 {
            for i in 0..5 {
                brute += r[(p, i)].abs();
            }
        }
        assert!((local_sparse_norm(&r) - brute).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let mesh = TriangleMesh::tetrahedron();
        assert!(local_magnitude(&DMatrix::zeros(5, 1), &mesh, &VertexMap::identity(4)).is_err());
        assert!(LocalGroups::new(&mesh, &VertexMap::identity(5)).is_err());
    }

    #[test]
    fn neighborhood_hops() {
        let mesh = TriangleMesh::torus(10, 10).unwrap();
        assert_eq!(mesh.neighborhood(0, 0), vec![0]);
        assert_eq!(mesh.neighborhood(0, 1), mesh.one_ring[0]);
        assert_eq!(mesh.neighborhood(0, 2).len(), 19);
    }

    fn matrix_strategy() -> impl Strategy<Value = (DMatrix<f64>, f64, f64)> {
        (prop::collection::vec(-5.0f64..5.0, 12 * 3), 0.0f64..4.0, 0.0f64..4.0)
            .prop_map(|(v, a, b)| (DMatrix::from_vec(12, 3, v), a.min(b), a.max(b)))
    }

    proptest! {
        #[test]
        fn shrink_support_is_monotone_and_non_expansive((g, t1, t2) in matrix_strategy()) {
            let groups = LocalGroups::identity(&TriangleMesh::icosahedron());
            let s1 = groups.shrink(&g, t1).unwrap();
            let s2 = groups.shrink(&g, t2).unwrap();
            for k in 0..g.len() {
                prop_assert!(s2[k] == 0.0 || s1[k] != 0.0);
                prop_assert!(s1[k].abs() <= g[k].abs());
            }
        }

        #[test]
        fn singleton_rings_reduce_to_soft_threshold((g, t, _) in matrix_strategy()) {
            let groups = LocalGroups::identity(&TriangleMesh::singleton(12));
            let s = groups.shrink(&g, t).unwrap();
            for k in 0..g.len() {
                let soft = g[k].signum() * f64::max(0.0, g[k].abs() - t);
                prop_assert!((s[k] - soft).abs() <= 1e-12 * (1.0 + g[k].abs()));
            }
        }

        #[test]
        fn magnitude_commutes_with_column_permutation((g, _, _) in matrix_strategy(), shift in 0usize..3) {
            let groups = LocalGroups::identity(&TriangleMesh::icosahedron());
            let order: Vec<usize> = (0..3).map(|i| (i + shift) % 3).collect();
            let permuted = g.select_columns(order.iter());
            let lhs = groups.magnitude(&permuted).unwrap();
            let rhs = groups.magnitude(&g).unwrap().select_columns(order.iter());
            prop_assert_eq!(lhs, rhs);
        }
    }
}
