//! Four-node quadrilateral meshes: the rectilinear generator, a plain-text
//! file format, validation, and the coordinate normalization used by the
//! spatial network.
//!
//! File format (`#` starts a comment):
//!
//! ```text
//! NODES
//! <index> <x_mm> <y_mm>
//! ELEMENTS
//! <index> <n1> <n2> <n3> <n4>
//! NODESET <name>
//! <indices...>
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phantom::ModulusField;

pub mod conforming;
pub mod q4;

const BBOX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadMesh {
    nodes: Vec<[f64; 2]>,
    elements: Vec<[usize; 4]>,
    node_sets: BTreeMap<String, Vec<usize>>,
    element_modulus: Vec<f64>,
}

/// Affine map from mesh coordinates (mm) to `[-1, 1]²`, centered on the mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoordNorm {
    pub center: [f64; 2],
    pub half_extent: [f64; 2],
}

impl CoordNorm {
    pub fn normalize(&self, p: [f64; 2]) -> Result<[f64; 2]> {
        let mut out = [0.0; 2];
        for a in 0..2 {
            let d = p[a] - self.center[a];
            if d.abs() > self.half_extent[a] + BBOX_TOL {
                return Err(Error::OutOfDomain { x: p[0], y: p[1] });
            }
            out[a] = (d / self.half_extent[a]).clamp(-1.0, 1.0);
        }
        Ok(out)
    }

    pub fn lower(&self) -> [f64; 2] {
        [
            self.center[0] - self.half_extent[0],
            self.center[1] - self.half_extent[1],
        ]
    }

    pub fn upper(&self) -> [f64; 2] {
        [
            self.center[0] + self.half_extent[0],
            self.center[1] + self.half_extent[1],
        ]
    }
}

impl QuadMesh {
    /// Builds and validates a mesh.
    pub fn new(
        nodes: Vec<[f64; 2]>,
        elements: Vec<[usize; 4]>,
        node_sets: BTreeMap<String, Vec<usize>>,
    ) -> Result<Self> {
        let mesh = Self {
            nodes,
            elements,
            node_sets,
            element_modulus: Vec::new(),
        };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Uniform grid with `nodes_per_edge` nodes along each side; node `i + j * n`
    /// sits at column `i`, row `j` counted from the bottom.
    pub fn rectilinear(width_mm: f64, height_mm: f64, nodes_per_edge: usize) -> Result<Self> {
        if nodes_per_edge < 2 {
            return Err(Error::InvalidParameter("need at least 2 nodes per edge".into()));
        }
        if !(width_mm > 0.0 && height_mm > 0.0) {
            return Err(Error::InvalidParameter("mesh extent must be positive".into()));
        }
        let n = nodes_per_edge;
        let seg = (n - 1) as f64;
        let mut nodes = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                nodes.push([width_mm * i as f64 / seg, height_mm * j as f64 / seg]);
            }
        }
        let mut elements = Vec::with_capacity((n - 1) * (n - 1));
        for j in 0..n - 1 {
            for i in 0..n - 1 {
                let a = i + j * n;
                elements.push([a, a + 1, a + 1 + n, a + n]);
            }
        }
        let bottom: Vec<usize> = (0..n).collect();
        let top: Vec<usize> = ((n - 1) * n..n * n).collect();
        let sets = BTreeMap::from([("bottom".to_string(), bottom), ("top".to_string(), top)]);
        Self::new(nodes, elements, sets)
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn elements(&self) -> &[[usize; 4]] {
        &self.elements
    }

    pub fn node_sets(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.node_sets
    }

    pub fn element_modulus(&self) -> &[f64] {
        &self.element_modulus
    }

    pub fn element_coords(&self, e: usize) -> [[f64; 2]; 4] {
        self.elements[e].map(|n| self.nodes[n])
    }

    pub fn centroid(&self, e: usize) -> [f64; 2] {
        q4::centroid(&self.element_coords(e))
    }

    /// Assigns `E` per element from the field evaluated at element centroids.
    pub fn assign_modulus(&mut self, field: &ModulusField) {
        self.element_modulus = (0..self.elements.len())
            .map(|e| {
                let [x, y] = self.centroid(e);
                field.eval(x, y)
            })
            .collect();
    }

    pub fn set_element_modulus(&mut self, moduli: Vec<f64>) -> Result<()> {
        if moduli.len() != self.elements.len() {
            return Err(Error::DimensionMismatch {
                expected: self.elements.len(),
                got: moduli.len(),
            });
        }
        self.element_modulus = moduli;
        Ok(())
    }

    pub fn bbox(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &self.nodes {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        (lo, hi)
    }

    pub fn coord_norm(&self) -> CoordNorm {
        let (lo, hi) = self.bbox();
        CoordNorm {
            center: [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])],
            half_extent: [0.5 * (hi[0] - lo[0]), 0.5 * (hi[1] - lo[1])],
        }
    }

    pub fn normalize_coord(&self, p: [f64; 2]) -> Result<[f64; 2]> {
        self.coord_norm().normalize(p)
    }

    fn boundary_nodes(&self, name: &str, at_max: bool) -> Vec<usize> {
        if let Some(set) = self.node_sets.get(name) {
            return set.clone();
        }
        let (lo, hi) = self.bbox();
        let target = if at_max { hi[1] } else { lo[1] };
        let tol = 1e-9 * (hi[1] - lo[1]).max(1.0);
        (0..self.nodes.len())
            .filter(|&i| (self.nodes[i][1] - target).abs() <= tol)
            .collect()
    }

    /// Nodes on the fixed surface: the `bottom` node set, or the `y = min` row.
    pub fn bottom_nodes(&self) -> Vec<usize> {
        self.boundary_nodes("bottom", false)
    }

    /// Nodes on the loaded surface: the `top` node set, or the `y = max` row.
    pub fn top_nodes(&self) -> Vec<usize> {
        self.boundary_nodes("top", true)
    }

    pub fn element_area(&self, e: usize) -> f64 {
        q4::area(&self.element_coords(e))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.elements.len()).map(|e| self.element_area(e)).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        for (index, el) in self.elements.iter().enumerate() {
            if let Some(&bad) = el.iter().find(|&&v| v >= n) {
                return Err(Error::MeshParse {
                    line: 0,
                    msg: format!("element {index} references missing node {bad}"),
                });
            }
            for a in 0..4 {
                for b in a + 1..4 {
                    if el[a] == el[b] {
                        return Err(Error::DegenerateElement { index });
                    }
                }
            }
            let coords = el.map(|v| self.nodes[v]);
            if !q4::gauss_points()
                .iter()
                .all(|&(xi, eta, _)| q4::jacobian_det(&coords, xi, eta) > 0.0)
            {
                return Err(Error::InvertedElement { index });
            }
        }
        for (name, set) in &self.node_sets {
            if let Some(&bad) = set.iter().find(|&&v| v >= n) {
                return Err(Error::MeshParse {
                    line: 0,
                    msg: format!("node set `{name}` references missing node {bad}"),
                });
            }
        }
        let bottom = self.bottom_nodes();
        let top = self.top_nodes();
        if bottom.iter().any(|b| top.contains(b)) {
            return Err(Error::InvalidGeometry("top and bottom node sets overlap".into()));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# elastonet quad mesh\nNODES\n");
        for (i, p) in self.nodes.iter().enumerate() {
            let _ = writeln!(out, "{i} {} {}", p[0], p[1]);
        }
        out.push_str("ELEMENTS\n");
        for (i, e) in self.elements.iter().enumerate() {
            let _ = writeln!(out, "{i} {} {} {} {}", e[0], e[1], e[2], e[3]);
        }
        for (name, set) in &self.node_sets {
            let _ = writeln!(out, "NODESET {name}");
            let ids: Vec<String> = set.iter().map(usize::to_string).collect();
            for chunk in ids.chunks(16) {
                out.push_str(&chunk.join(" "));
                out.push('\n');
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        enum Section {
            None,
            Nodes,
            Elements,
            Set(String),
        }
        let mut section = Section::None;
        let mut nodes: BTreeMap<usize, [f64; 2]> = BTreeMap::new();
        let mut elements: BTreeMap<usize, [usize; 4]> = BTreeMap::new();
        let mut sets: BTreeMap<String, Vec<usize>> = BTreeMap::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |msg: String| Error::MeshParse { line, msg };
            let mut fields = content.split_whitespace();
            let head = fields.next().unwrap_or_default();
            match head {
                "NODES" => {
                    section = Section::Nodes;
                    continue;
                }
                "ELEMENTS" => {
                    section = Section::Elements;
                    continue;
                }
                "NODESET" => {
                    let name = fields
                        .next()
                        .ok_or_else(|| err("NODESET needs a name".into()))?
                        .to_string();
                    sets.entry(name.clone()).or_default();
                    section = Section::Set(name);
                    continue;
                }
                _ => {}
            }
            let tokens: Vec<&str> = content.split_whitespace().collect();
            let int = |t: &str| t.parse::<usize>().map_err(|e| err(format!("`{t}`: {e}")));
            match &section {
                Section::None => return Err(err(format!("data outside a section: `{content}`"))),
                Section::Nodes => {
                    if tokens.len() != 3 {
                        return Err(err("node line needs `index x y`".into()));
                    }
                    let idx = int(tokens[0])?;
                    let coord = |t: &str| t.parse::<f64>().map_err(|e| err(format!("`{t}`: {e}")));
                    if nodes.insert(idx, [coord(tokens[1])?, coord(tokens[2])?]).is_some() {
                        return Err(err(format!("duplicate node {idx}")));
                    }
                }
                Section::Elements => {
                    if tokens.len() != 5 {
                        return Err(err("element line needs `index n1 n2 n3 n4`".into()));
                    }
                    let idx = int(tokens[0])?;
                    let conn = [int(tokens[1])?, int(tokens[2])?, int(tokens[3])?, int(tokens[4])?];
                    if elements.insert(idx, conn).is_some() {
                        return Err(err(format!("duplicate element {idx}")));
                    }
                }
                Section::Set(name) => {
                    let ids = tokens.iter().map(|t| int(t)).collect::<Result<Vec<_>>>()?;
                    sets.get_mut(name).expect("set created on header").extend(ids);
                }
            }
        }

        let dense = |count: usize, keys: Vec<usize>, what: &str| -> Result<()> {
            if keys.iter().copied().eq(0..count) {
                Ok(())
            } else {
                Err(Error::MeshParse {
                    line: 0,
                    msg: format!("{what} indices must be contiguous from 0"),
                })
            }
        };
        dense(nodes.len(), nodes.keys().copied().collect(), "node")?;
        dense(elements.len(), elements.keys().copied().collect(), "element")?;
        let node_count = nodes.len();
        for (i, el) in elements.values().enumerate() {
            if let Some(&bad) = el.iter().find(|&&v| v >= node_count) {
                return Err(Error::MeshParse {
                    line: 0,
                    msg: format!("element {i} references missing node {bad}"),
                });
            }
        }
        Self::new(
            nodes.into_values().collect(),
            elements.into_values().collect(),
            sets,
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::file(path, e))
    }
}
