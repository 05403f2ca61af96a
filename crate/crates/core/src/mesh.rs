//! Structured conforming triangulations of rectangular domains.
//!
//! Meshes are built on a uniform square grid, each cell split into two
//! triangles with the diagonal direction alternating checkerboard-wise so the
//! triangulation is mirror symmetric about both grid midlines (the capacitor
//! scenarios rely on that symmetry). Axis-aligned rectangular subregions are
//! tagged per element; region boundaries therefore always coincide with
//! element edges. The same mesh is reused for the original and simplified
//! solves of a scenario, so all feature-domain integrals are evaluated on
//! identical elements.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Index of a declared region. Triangles without a region are "bulk".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RegionId(pub u32);

/// Index of a declared boundary tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TagId(pub u32);

/// Axis-aligned rectangle, coordinates in cm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x0 && p[0] <= self.x1 && p[1] >= self.y0 && p[1] <= self.y1
    }

    fn contains_rect(&self, other: &Rect) -> bool {
        other.x0 >= self.x0 && other.x1 <= self.x1 && other.y0 >= self.y0 && other.y1 <= self.y1
    }

    fn interiors_disjoint(&self, other: &Rect) -> bool {
        self.x1 <= other.x0 || other.x1 <= self.x0 || self.y1 <= other.y0 || other.y1 <= self.y0
    }

    fn as_array(&self) -> [f64; 4] {
        [self.x0, self.y0, self.x1, self.y1]
    }
}

/// A declared subregion: name plus grid-aligned rectangle.
#[derive(Debug, Clone)]
pub struct RegionSpec {
    pub name: String,
    pub rect: Rect,
}

impl RegionSpec {
    pub fn new(name: impl Into<String>, rect: Rect) -> Self {
        RegionSpec {
            name: name.into(),
            rect,
        }
    }
}

/// Side of the outer domain rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
    Any,
}

/// Predicate selecting boundary or interface edges for tagging.
///
/// Rules are applied in order; the first match assigns the tag.
#[derive(Debug, Clone)]
pub enum EdgeRule {
    /// Edges on the outer domain rectangle.
    Outer(Side),
    /// Edges with the named region on exactly one side (the region's
    /// boundary polygon, including any part lying on the domain border).
    RegionBoundary(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub vertices: [u32; 3],
    pub region: Option<RegionId>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub vertices: [u32; 2],
    pub tag: TagId,
}

/// Conforming triangle mesh with region and boundary tags.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<Triangle>,
    pub boundary_edges: Vec<BoundaryEdge>,
    region_names: Vec<String>,
    tag_names: Vec<String>,
    domain: Rect,
}

impl Mesh {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn domain(&self) -> Rect {
        self.domain
    }

    pub fn region_names(&self) -> &[String] {
        &self.region_names
    }

    pub fn tag_names(&self) -> &[String] {
        &self.tag_names
    }

    pub fn region_id(&self, name: &str) -> Result<RegionId> {
        self.region_names
            .iter()
            .position(|n| n == name)
            .map(|i| RegionId(i as u32))
            .ok_or_else(|| Error::UnknownRegion(name.to_string()))
    }

    pub fn tag_id(&self, name: &str) -> Option<TagId> {
        self.tag_names
            .iter()
            .position(|n| n == name)
            .map(|i| TagId(i as u32))
    }

    pub fn num_regions(&self) -> usize {
        self.region_names.len()
    }

    pub fn triangle_coords(&self, tri: usize) -> [[f64; 2]; 3] {
        let t = &self.triangles[tri];
        [
            self.nodes[t.vertices[0] as usize],
            self.nodes[t.vertices[1] as usize],
            self.nodes[t.vertices[2] as usize],
        ]
    }

    /// Signed area of a triangle (positive for the CCW orientation the
    /// builder produces).
    pub fn triangle_area(&self, tri: usize) -> f64 {
        let [a, b, c] = self.triangle_coords(tri);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    /// Gradients of the three P1 shape functions on an element, plus its area.
    pub fn shape_gradients(&self, tri: usize) -> ([[f64; 2]; 3], f64) {
        let [a, b, c] = self.triangle_coords(tri);
        let area2 = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let g = [
            [(b[1] - c[1]) / area2, (c[0] - b[0]) / area2],
            [(c[1] - a[1]) / area2, (a[0] - c[0]) / area2],
            [(a[1] - b[1]) / area2, (b[0] - a[0]) / area2],
        ];
        (g, 0.5 * area2)
    }

    /// Gradient of a nodal field on one element (constant for P1).
    pub fn p1_gradient(&self, tri: usize, values: &[f64]) -> [f64; 2] {
        let t = &self.triangles[tri];
        let (g, _) = self.shape_gradients(tri);
        let mut out = [0.0; 2];
        for k in 0..3 {
            let v = values[t.vertices[k] as usize];
            out[0] += g[k][0] * v;
            out[1] += g[k][1] * v;
        }
        out
    }

    /// Total area of all triangles tagged with the region.
    pub fn region_area(&self, region: RegionId) -> Result<f64> {
        if region.0 as usize >= self.region_names.len() {
            return Err(Error::UnknownRegion(format!("#{}", region.0)));
        }
        Ok(self
            .triangles
            .iter()
            .enumerate()
            .filter(|(_, t)| t.region == Some(region))
            .map(|(i, _)| self.triangle_area(i))
            .sum())
    }

    /// Indices of triangles in the region (`None` selects bulk).
    pub fn region_triangles(&self, region: Option<RegionId>) -> Vec<usize> {
        self.triangles
            .iter()
            .enumerate()
            .filter(|(_, t)| t.region == region)
            .map(|(i, _)| i)
            .collect()
    }

    /// Nodes lying on edges carrying the tag.
    pub fn tagged_nodes(&self, tag: TagId) -> Vec<u32> {
        let mut nodes: Vec<u32> = self
            .boundary_edges
            .iter()
            .filter(|e| e.tag == tag)
            .flat_map(|e| e.vertices)
            .collect();
        nodes.sort_unstable();
        nodes.dedup();
        nodes
    }

    /// Uniform red refinement: every triangle splits into four similar
    /// children that inherit its region; tagged boundary edges split in two.
    pub fn refine_uniform(&self) -> Mesh {
        let mut nodes = self.nodes.clone();
        let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, nodes: &mut Vec<[f64; 2]>| -> u32 {
            let key = if a < b { (a, b) } else { (b, a) };
            *midpoints.entry(key).or_insert_with(|| {
                let pa = nodes[a as usize];
                let pb = nodes[b as usize];
                nodes.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
                (nodes.len() - 1) as u32
            })
        };

        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for t in &self.triangles {
            let [v0, v1, v2] = t.vertices;
            let m01 = midpoint(v0, v1, &mut nodes);
            let m12 = midpoint(v1, v2, &mut nodes);
            let m02 = midpoint(v0, v2, &mut nodes);
            for vs in [
                [v0, m01, m02],
                [v1, m12, m01],
                [v2, m02, m12],
                [m01, m12, m02],
            ] {
                triangles.push(Triangle {
                    vertices: vs,
                    region: t.region,
                });
            }
        }

        let mut boundary_edges = Vec::with_capacity(2 * self.boundary_edges.len());
        for e in &self.boundary_edges {
            let [a, b] = e.vertices;
            let m = midpoint(a, b, &mut nodes);
            boundary_edges.push(BoundaryEdge {
                vertices: [a, m],
                tag: e.tag,
            });
            boundary_edges.push(BoundaryEdge {
                vertices: [m, b],
                tag: e.tag,
            });
        }

        Mesh {
            nodes,
            triangles,
            boundary_edges,
            region_names: self.region_names.clone(),
            tag_names: self.tag_names.clone(),
            domain: self.domain,
        }
    }

    /// Line-oriented text export; numbers carry 17 significant digits so the
    /// import reproduces every f64 exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(
            s,
            "mesh nodes={} triangles={} edges={} regions={} tags={}",
            self.nodes.len(),
            self.triangles.len(),
            self.boundary_edges.len(),
            self.region_names.len(),
            self.tag_names.len()
        )
        .unwrap();
        writeln!(
            s,
            "domain {:.16e} {:.16e} {:.16e} {:.16e}",
            self.domain.x0, self.domain.y0, self.domain.x1, self.domain.y1
        )
        .unwrap();
        for name in &self.region_names {
            writeln!(s, "region {name}").unwrap();
        }
        for name in &self.tag_names {
            writeln!(s, "tag {name}").unwrap();
        }
        for n in &self.nodes {
            writeln!(s, "{:.16e} {:.16e}", n[0], n[1]).unwrap();
        }
        for t in &self.triangles {
            let r = t.region.map(|r| r.0 as i64).unwrap_or(-1);
            writeln!(
                s,
                "{} {} {} {}",
                t.vertices[0], t.vertices[1], t.vertices[2], r
            )
            .unwrap();
        }
        for e in &self.boundary_edges {
            writeln!(s, "{} {} {}", e.vertices[0], e.vertices[1], e.tag.0).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Mesh> {
        let bad = |m: &str| Error::MeshIo(m.to_string());
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty input"))?;
        let mut counts = [0usize; 5];
        let mut fields = header.split_whitespace();
        if fields.next() != Some("mesh") {
            return Err(bad("missing mesh header"));
        }
        for (slot, key) in counts
            .iter_mut()
            .zip(["nodes", "triangles", "edges", "regions", "tags"])
        {
            let f = fields.next().ok_or_else(|| bad("truncated header"))?;
            let (k, v) = f.split_once('=').ok_or_else(|| bad("malformed header"))?;
            if k != key {
                return Err(bad("malformed header"));
            }
            *slot = v.parse().map_err(|_| bad("bad count"))?;
        }
        let [nn, nt, ne, nr, ng] = counts;

        let domain_line = lines.next().ok_or_else(|| bad("missing domain"))?;
        let vals: Vec<f64> = domain_line
            .split_whitespace()
            .skip(1)
            .map(|v| v.parse().map_err(|_| bad("bad domain")))
            .collect::<Result<_>>()?;
        if vals.len() != 4 {
            return Err(bad("bad domain"));
        }
        let domain = Rect::new(vals[0], vals[1], vals[2], vals[3]);

        let mut region_names = Vec::with_capacity(nr);
        for _ in 0..nr {
            let l = lines.next().ok_or_else(|| bad("missing region"))?;
            region_names.push(
                l.strip_prefix("region ")
                    .ok_or_else(|| bad("bad region line"))?
                    .to_string(),
            );
        }
        let mut tag_names = Vec::with_capacity(ng);
        for _ in 0..ng {
            let l = lines.next().ok_or_else(|| bad("missing tag"))?;
            tag_names.push(
                l.strip_prefix("tag ")
                    .ok_or_else(|| bad("bad tag line"))?
                    .to_string(),
            );
        }

        let mut nodes = Vec::with_capacity(nn);
        for _ in 0..nn {
            let l = lines.next().ok_or_else(|| bad("missing node"))?;
            let mut it = l.split_whitespace();
            let x: f64 = it
                .next()
                .ok_or_else(|| bad("bad node"))?
                .parse()
                .map_err(|_| bad("bad node"))?;
            let y: f64 = it
                .next()
                .ok_or_else(|| bad("bad node"))?
                .parse()
                .map_err(|_| bad("bad node"))?;
            nodes.push([x, y]);
        }
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let l = lines.next().ok_or_else(|| bad("missing triangle"))?;
            let v: Vec<i64> = l
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| bad("bad triangle")))
                .collect::<Result<_>>()?;
            if v.len() != 4 {
                return Err(bad("bad triangle"));
            }
            triangles.push(Triangle {
                vertices: [v[0] as u32, v[1] as u32, v[2] as u32],
                region: if v[3] < 0 {
                    None
                } else {
                    Some(RegionId(v[3] as u32))
                },
            });
        }
        let mut boundary_edges = Vec::with_capacity(ne);
        for _ in 0..ne {
            let l = lines.next().ok_or_else(|| bad("missing edge"))?;
            let v: Vec<u32> = l
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| bad("bad edge")))
                .collect::<Result<_>>()?;
            if v.len() != 3 {
                return Err(bad("bad edge"));
            }
            boundary_edges.push(BoundaryEdge {
                vertices: [v[0], v[1]],
                tag: TagId(v[2]),
            });
        }

        Ok(Mesh {
            nodes,
            triangles,
            boundary_edges,
            region_names,
            tag_names,
            domain,
        })
    }
}

fn grid_index(value: f64, origin: f64, h: f64, rect: [f64; 4]) -> Result<usize> {
    let t = (value - origin) / h;
    let r = t.round();
    if (t - r).abs() > 1e-9 * t.abs().max(1.0) || r < -0.5 {
        return Err(Error::NonAlignedRegion(rect, h));
    }
    Ok(r as usize)
}

/// Build a structured criss-cross triangulation of `domain` with tagged
/// rectangular subregions and rule-tagged boundary edges.
///
/// Region rectangles must be grid aligned and pairwise either nested or
/// disjoint; each element is tagged with the innermost (smallest) region
/// containing its centroid.
pub fn build_structured(
    domain: Rect,
    h: f64,
    regions: &[RegionSpec],
    rules: &[(EdgeRule, &str)],
) -> Result<Mesh> {
    assert!(h > 0.0, "grid spacing must be positive");
    let da = domain.as_array();
    let nx = grid_index(domain.x1, domain.x0, h, da)?;
    let ny = grid_index(domain.y1, domain.y0, h, da)?;
    if nx == 0 || ny == 0 {
        return Err(Error::EmptyRegion(da));
    }

    for r in regions {
        let a = r.rect.as_array();
        if r.rect.width() <= 0.0 || r.rect.height() <= 0.0 {
            return Err(Error::EmptyRegion(a));
        }
        if !domain.contains_rect(&r.rect) {
            return Err(Error::NonAlignedRegion(a, h));
        }
        for v in [r.rect.x0, r.rect.x1] {
            grid_index(v, domain.x0, h, a)?;
        }
        for v in [r.rect.y0, r.rect.y1] {
            grid_index(v, domain.y0, h, a)?;
        }
    }
    for (i, a) in regions.iter().enumerate() {
        for b in regions.iter().skip(i + 1) {
            let nested = a.rect.contains_rect(&b.rect) || b.rect.contains_rect(&a.rect);
            if !nested && !a.rect.interiors_disjoint(&b.rect) {
                return Err(Error::OverlappingFs);
            }
        }
    }

    let node_of = |i: usize, j: usize| (j * (nx + 1) + i) as u32;
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            nodes.push([domain.x0 + i as f64 * h, domain.y0 + j as f64 * h]);
        }
    }

    // Innermost-wins assignment: smaller rectangles shadow enclosing ones.
    let mut order: Vec<usize> = (0..regions.len()).collect();
    order.sort_by(|&a, &b| {
        regions[a]
            .rect
            .area()
            .partial_cmp(&regions[b].rect.area())
            .unwrap()
    });
    let assign = |centroid: [f64; 2]| -> Option<RegionId> {
        order
            .iter()
            .find(|&&k| regions[k].rect.contains(centroid))
            .map(|&k| RegionId(k as u32))
    };

    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let bl = node_of(i, j);
            let br = node_of(i + 1, j);
            let tl = node_of(i, j + 1);
            let tr = node_of(i + 1, j + 1);
            // Alternate the split diagonal so the mesh mirrors exactly.
            let pair = if (i + j) % 2 == 0 {
                [[bl, br, tr], [bl, tr, tl]]
            } else {
                [[bl, br, tl], [br, tr, tl]]
            };
            for vs in pair {
                let c = centroid(&nodes, vs);
                triangles.push(Triangle {
                    vertices: vs,
                    region: assign(c),
                });
            }
        }
    }

    // Candidate edges for tagging: domain border edges and region interfaces.
    let mut edge_info: HashMap<(u32, u32), (Option<Option<RegionId>>, Option<Option<RegionId>>)> =
        HashMap::new();
    for t in &triangles {
        let [a, b, c] = t.vertices;
        for (u, v) in [(a, b), (b, c), (c, a)] {
            let key = if u < v { (u, v) } else { (v, u) };
            let entry = edge_info.entry(key).or_insert((None, None));
            if entry.0.is_none() {
                entry.0 = Some(t.region);
            } else {
                entry.1 = Some(t.region);
            }
        }
    }

    let tol = 1e-9 * h;
    let side_of = |p: [f64; 2], q: [f64; 2]| -> Option<Side> {
        if (p[0] - domain.x0).abs() < tol && (q[0] - domain.x0).abs() < tol {
            Some(Side::Left)
        } else if (p[0] - domain.x1).abs() < tol && (q[0] - domain.x1).abs() < tol {
            Some(Side::Right)
        } else if (p[1] - domain.y0).abs() < tol && (q[1] - domain.y0).abs() < tol {
            Some(Side::Bottom)
        } else if (p[1] - domain.y1).abs() < tol && (q[1] - domain.y1).abs() < tol {
            Some(Side::Top)
        } else {
            None
        }
    };

    let mut tag_names: Vec<String> = Vec::new();
    let mut intern_tag = |name: &str, tags: &mut Vec<String>| -> TagId {
        match tags.iter().position(|t| t == name) {
            Some(i) => TagId(i as u32),
            None => {
                tags.push(name.to_string());
                TagId((tags.len() - 1) as u32)
            }
        }
    };

    let mut keys: Vec<(u32, u32)> = edge_info.keys().copied().collect();
    keys.sort_unstable();
    let mut boundary_edges = Vec::new();
    for key in keys {
        let (first, second) = edge_info[&key];
        let ra = first.flatten();
        let on_border = second.is_none();
        let rb = second.map(|r| r);
        let p = nodes[key.0 as usize];
        let q = nodes[key.1 as usize];
        let border_side = if on_border { side_of(p, q) } else { None };

        let matched = rules.iter().find(|(rule, _)| match rule {
            EdgeRule::Outer(side) => match border_side {
                Some(s) => *side == Side::Any || *side == s,
                None => false,
            },
            EdgeRule::RegionBoundary(name) => {
                let rid = regions
                    .iter()
                    .position(|r| &r.name == name)
                    .map(|i| RegionId(i as u32));
                match rid {
                    None => false,
                    Some(rid) => {
                        let a_in = ra == Some(rid);
                        let b_in = rb == Some(Some(rid));
                        match rb {
                            // Interior edge: boundary iff exactly one side in region.
                            Some(_) => a_in != b_in,
                            // Border edge: boundary iff its one triangle is in region.
                            None => a_in,
                        }
                    }
                }
            }
        });
        if let Some((_, tag)) = matched {
            let tag = intern_tag(tag, &mut tag_names);
            boundary_edges.push(BoundaryEdge {
                vertices: [key.0, key.1],
                tag,
            });
        }
    }

    Ok(Mesh {
        nodes,
        triangles,
        boundary_edges,
        region_names: regions.iter().map(|r| r.name.clone()).collect(),
        tag_names,
        domain,
    })
}

fn centroid(nodes: &[[f64; 2]], vs: [u32; 3]) -> [f64; 2] {
    let a = nodes[vs[0] as usize];
    let b = nodes[vs[1] as usize];
    let c = nodes[vs[2] as usize];
    [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
}
