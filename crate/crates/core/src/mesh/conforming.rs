//! Multi-block generator for a quadrilateral mesh whose element edges follow
//! the disc boundaries of the three-inclusion phantom.
//!
//! Each disc group sits in a square block meshed as a "butterfly": a core
//! square surrounded by four ring patches per concentric circle and four
//! patches out to the block boundary. The remainder of the domain is a
//! structured grid whose lines pass through the block edges.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::phantom::Disc;

use super::QuadMesh;

/// A square block holding one or more concentric discs.
#[derive(Debug, Clone)]
pub struct DiscBlock {
    pub center: [f64; 2],
    pub half_size: f64,
    /// Concentric radii, innermost first.
    pub radii: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ConformingLayout {
    pub width: f64,
    pub height: f64,
    /// Blocks ordered left to right; all share the same vertical band.
    pub blocks: Vec<DiscBlock>,
    /// Segments along each block side.
    pub block_segments: usize,
    /// Segments for the background columns: left of the first block, between
    /// consecutive blocks, and right of the last block.
    pub column_segments: Vec<usize>,
    pub bottom_segments: usize,
    pub top_segments: usize,
}

impl ConformingLayout {
    /// Layout conforming to the built-in three-inclusion discs (235 elements).
    pub fn three_inclusion(discs: &[Disc; 3]) -> Self {
        let (left, outer, inner) = (&discs[0], &discs[1], &discs[2]);
        Self {
            width: 50.0,
            height: 50.0,
            blocks: vec![
                DiscBlock {
                    center: left.center_mm,
                    half_size: 10.0,
                    radii: vec![left.radius_mm],
                },
                DiscBlock {
                    center: outer.center_mm,
                    half_size: 10.0,
                    radii: vec![inner.radius_mm, outer.radius_mm],
                },
            ],
            block_segments: 5,
            column_segments: vec![1, 1, 3],
            bottom_segments: 2,
            top_segments: 2,
        }
    }
}

struct Builder {
    nodes: Vec<[f64; 2]>,
    lookup: HashMap<(i64, i64), usize>,
    elements: Vec<[usize; 4]>,
}

impl Builder {
    fn node(&mut self, p: [f64; 2]) -> usize {
        let key = ((p[0] * 1e6).round() as i64, (p[1] * 1e6).round() as i64);
        if let Some(&i) = self.lookup.get(&key) {
            return i;
        }
        // snap to 1e-9 mm so shared nodes read back bit-identically
        let snapped = [(p[0] * 1e9).round() / 1e9, (p[1] * 1e9).round() / 1e9];
        self.nodes.push(snapped);
        self.lookup.insert(key, self.nodes.len() - 1);
        self.nodes.len() - 1
    }

    /// Structured patch from a point map over `(s, t) ∈ [0,1]²`.
    fn patch(&mut self, ns: usize, nt: usize, map: impl Fn(f64, f64) -> [f64; 2]) {
        let mut ids = vec![vec![0usize; nt + 1]; ns + 1];
        for (i, row) in ids.iter_mut().enumerate() {
            for (j, id) in row.iter_mut().enumerate() {
                *id = self.node(map(i as f64 / ns as f64, j as f64 / nt as f64));
            }
        }
        for i in 0..ns {
            for j in 0..nt {
                let mut quad = [ids[i][j], ids[i + 1][j], ids[i + 1][j + 1], ids[i][j + 1]];
                let coords = quad.map(|n| self.nodes[n]);
                if signed_area(&coords) < 0.0 {
                    quad.swap(1, 3);
                }
                self.elements.push(quad);
            }
        }
    }
}

fn signed_area(c: &[[f64; 2]; 4]) -> f64 {
    let mut a = 0.0;
    for i in 0..4 {
        let p = c[i];
        let q = c[(i + 1) % 4];
        a += p[0] * q[1] - q[0] * p[1];
    }
    0.5 * a
}

fn lerp(a: [f64; 2], b: [f64; 2], t: f64) -> [f64; 2] {
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t]
}

/// One ring of a butterfly block, as a curve over a quadrant parameter.
#[derive(Clone, Copy)]
enum Ring {
    Square(f64),
    Circle(f64),
}

impl Ring {
    fn point(self, center: [f64; 2], quadrant: usize, s: f64) -> [f64; 2] {
        let theta0 = (quadrant as f64 * 90.0 - 45.0).to_radians();
        let theta1 = (quadrant as f64 * 90.0 + 45.0).to_radians();
        match self {
            Ring::Square(h) => {
                let r = h * std::f64::consts::SQRT_2;
                let a = [center[0] + r * theta0.cos(), center[1] + r * theta0.sin()];
                let b = [center[0] + r * theta1.cos(), center[1] + r * theta1.sin()];
                lerp(a, b, s)
            }
            Ring::Circle(r) => {
                let th = theta0 + (theta1 - theta0) * s;
                [center[0] + r * th.cos(), center[1] + r * th.sin()]
            }
        }
    }
}

fn butterfly(b: &mut Builder, block: &DiscBlock, n: usize) {
    let c = block.center;
    let core = 0.5 * block.radii[0];
    b.patch(n, n, |s, t| {
        [c[0] - core + 2.0 * core * s, c[1] - core + 2.0 * core * t]
    });
    let mut rings = vec![Ring::Square(core)];
    rings.extend(block.radii.iter().map(|&r| Ring::Circle(r)));
    rings.push(Ring::Square(block.half_size));
    for pair in rings.windows(2) {
        let (inner, outer) = (pair[0], pair[1]);
        for q in 0..4 {
            b.patch(n, 1, |s, t| lerp(inner.point(c, q, s), outer.point(c, q, s), t));
        }
    }
}

fn rect(b: &mut Builder, lo: [f64; 2], hi: [f64; 2], nx: usize, ny: usize) {
    b.patch(nx, ny, |s, t| {
        [lo[0] + (hi[0] - lo[0]) * s, lo[1] + (hi[1] - lo[1]) * t]
    });
}

pub fn generate(layout: &ConformingLayout) -> Result<QuadMesh> {
    let n = layout.block_segments;
    let blocks = &layout.blocks;
    if blocks.is_empty() || layout.column_segments.len() != blocks.len() + 1 {
        return Err(Error::InvalidConfig(
            "need one column segment count per gap around the blocks".into(),
        ));
    }
    let y_lo = blocks[0].center[1] - blocks[0].half_size;
    let y_hi = blocks[0].center[1] + blocks[0].half_size;
    for blk in blocks {
        let lo = blk.center[1] - blk.half_size;
        if (lo - y_lo).abs() > 1e-12 || (blk.center[1] + blk.half_size - y_hi).abs() > 1e-12 {
            return Err(Error::InvalidConfig("blocks must share one vertical band".into()));
        }
        if blk.radii.windows(2).any(|w| w[0] >= w[1])
            || blk.radii.last().is_some_and(|&r| r >= blk.half_size)
            || blk.radii.is_empty()
        {
            return Err(Error::InvalidGeometry("disc radii must increase inside the block".into()));
        }
    }
    // x breakpoints: gap, block, gap, block, ..., gap
    let mut xs = vec![0.0];
    let mut xcounts = Vec::new();
    for (i, blk) in blocks.iter().enumerate() {
        xs.push(blk.center[0] - blk.half_size);
        xcounts.push(layout.column_segments[i]);
        xs.push(blk.center[0] + blk.half_size);
        xcounts.push(n);
    }
    xs.push(layout.width);
    xcounts.push(*layout.column_segments.last().expect("checked length"));
    if xs.windows(2).any(|w| w[1] <= w[0]) || y_lo <= 0.0 || y_hi >= layout.height {
        return Err(Error::InvalidGeometry("blocks must fit inside the domain without overlap".into()));
    }
    let ys = [0.0, y_lo, y_hi, layout.height];
    let ycounts = [layout.bottom_segments, n, layout.top_segments];

    let mut b = Builder {
        nodes: Vec::new(),
        lookup: HashMap::new(),
        elements: Vec::new(),
    };
    for row in 0..3 {
        for col in 0..xcounts.len() {
            let is_block = row == 1 && col % 2 == 1;
            if is_block {
                butterfly(&mut b, &blocks[col / 2], n);
            } else {
                rect(
                    &mut b,
                    [xs[col], ys[row]],
                    [xs[col + 1], ys[row + 1]],
                    xcounts[col],
                    ycounts[row],
                );
            }
        }
    }
    let bottom: Vec<usize> = (0..b.nodes.len()).filter(|&i| b.nodes[i][1] == 0.0).collect();
    let top: Vec<usize> = (0..b.nodes.len())
        .filter(|&i| b.nodes[i][1] == layout.height)
        .collect();
    let sets = BTreeMap::from([("bottom".to_string(), bottom), ("top".to_string(), top)]);
    QuadMesh::new(b.nodes, b.elements, sets)
}
