//! Plane-stress, small-strain, linear-elastic finite elements on four-node
//! quadrilaterals.
//!
//! Units: coordinates in mm, forces in N, so stiffness is assembled in MPa
//! (N/mm²) and displacements come out in mm. Sample stresses are reported in
//! Pa. The out-of-plane thickness is 1 mm unless configured otherwise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{q4, QuadMesh};

pub mod samples;
pub mod sparse;

pub use samples::{augment_frame_invariance, dual_fea_noise_dataset, extract_samples, Sample, SampleSet};

use sparse::{pcg, CsrMatrix, SkylineCholesky};

const PA_PER_MPA: f64 = 1e6;

/// Plane-stress elasticity matrix `C(E, ν)` in the units of `e`.
pub fn plane_stress_matrix(e: f64, nu: f64) -> [[f64; 3]; 3] {
    let f = e / (1.0 - nu * nu);
    [
        [f, f * nu, 0.0],
        [f * nu, f, 0.0],
        [0.0, 0.0, f * (1.0 - nu) / 2.0],
    ]
}

pub fn mat_vec(c: &[[f64; 3]; 3], v: &[f64; 3]) -> [f64; 3] {
    std::array::from_fn(|i| c[i][0] * v[0] + c[i][1] * v[1] + c[i][2] * v[2])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Contact {
    /// Equal vertical point loads on the top nodes under the probe; lateral DOFs free.
    #[default]
    FrictionlessUniformForce,
    /// Uniform pressure over the whole top edge with consistent nodal loads.
    FullWidthPressure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    /// Bottom nodes fixed in both directions.
    #[default]
    Pinned,
    /// Bottom nodes fixed vertically; one bottom node also fixed laterally.
    Roller,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoadProgram {
    pub total_force_n: f64,
    pub n_steps: usize,
    pub probe_width_mm: f64,
    pub contact: Contact,
    pub support: Support,
    pub thickness_mm: f64,
}

impl Default for LoadProgram {
    fn default() -> Self {
        Self {
            total_force_n: 13.57e-3,
            n_steps: 4,
            probe_width_mm: 50.0,
            contact: Contact::FrictionlessUniformForce,
            support: Support::Pinned,
            thickness_mm: 1.0,
        }
    }
}

impl LoadProgram {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::InvalidParameter("load program needs at least one step".into()));
        }
        if !self.total_force_n.is_finite() || self.total_force_n < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "total force must be finite and non-negative, got {}",
                self.total_force_n
            )));
        }
        if !(self.probe_width_mm > 0.0) || !(self.thickness_mm > 0.0) {
            return Err(Error::InvalidParameter("probe width and thickness must be positive".into()));
        }
        Ok(())
    }

    /// Compressive force applied at step `k` (1-based).
    pub fn step_force(&self, k: usize) -> f64 {
        self.total_force_n * k as f64 / self.n_steps as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LinearSolver {
    /// Skyline Cholesky, falling back to CG if the factorization breaks down.
    Direct,
    ConjugateGradient { tolerance: f64, max_iterations: usize },
}

impl Default for LinearSolver {
    fn default() -> Self {
        LinearSolver::Direct
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeOptions {
    pub poisson: f64,
    pub solver: LinearSolver,
}

impl Default for FeOptions {
    fn default() -> Self {
        Self {
            poisson: 0.5,
            solver: LinearSolver::Direct,
        }
    }
}

/// Displacements (mm) and nodal reactions (N) for each load step.
#[derive(Debug, Clone)]
pub struct FeSolution {
    /// Interleaved `[ux0, uy0, ux1, uy1, ...]` per step.
    pub displacements: Vec<Vec<f64>>,
    /// `K u - f` per step; nonzero only at constrained DOFs.
    pub reactions: Vec<Vec<f64>>,
    pub applied: Vec<Vec<f64>>,
    pub contact_nodes: Vec<usize>,
    pub constrained: Vec<usize>,
}

impl FeSolution {
    /// Mean downward displacement of the loaded nodes at step `k` (0-based), in mm.
    pub fn probe_displacement(&self, k: usize) -> f64 {
        let u = &self.displacements[k];
        let n = self.contact_nodes.len() as f64;
        -self.contact_nodes.iter().map(|&i| u[2 * i + 1]).sum::<f64>() / n
    }
}

fn element_stiffness(coords: &[[f64; 2]; 4], c: &[[f64; 3]; 3], t: f64) -> [[f64; 8]; 8] {
    let mut k = [[0.0; 8]; 8];
    for (xi, eta, w) in q4::gauss_points() {
        let (grads, det) = q4::physical_gradients(coords, xi, eta);
        let b = q4::b_matrix(&grads);
        // CB (3×8)
        let mut cb = [[0.0; 8]; 3];
        for i in 0..3 {
            for j in 0..8 {
                cb[i][j] = c[i][0] * b[0][j] + c[i][1] * b[1][j] + c[i][2] * b[2][j];
            }
        }
        let f = w * det * t;
        for i in 0..8 {
            for j in 0..8 {
                k[i][j] += f * (b[0][i] * cb[0][j] + b[1][i] * cb[1][j] + b[2][i] * cb[2][j]);
            }
        }
    }
    k
}

/// Global stiffness in N/mm.
pub fn assemble(mesh: &QuadMesh, nu: f64, thickness_mm: f64) -> Result<CsrMatrix> {
    let moduli = mesh.element_modulus();
    if moduli.len() != mesh.elements().len() {
        return Err(Error::InvalidConfig("mesh has no element moduli assigned".into()));
    }
    if !(0.0..1.0).contains(&nu) {
        return Err(Error::InvalidParameter(format!("Poisson ratio must lie in [0, 1), got {nu}")));
    }
    let mut triplets = Vec::with_capacity(mesh.elements().len() * 64);
    for (e, conn) in mesh.elements().iter().enumerate() {
        let c = plane_stress_matrix(moduli[e] / PA_PER_MPA, nu);
        let ke = element_stiffness(&mesh.element_coords(e), &c, thickness_mm);
        let dofs: [usize; 8] = std::array::from_fn(|i| 2 * conn[i / 2] + i % 2);
        for i in 0..8 {
            for j in 0..8 {
                triplets.push((dofs[i], dofs[j], ke[i][j]));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(2 * mesh.nodes().len(), triplets))
}

fn sorted_by_x(mesh: &QuadMesh, mut ids: Vec<usize>) -> Vec<usize> {
    let nodes = mesh.nodes();
    ids.sort_by(|&a, &b| nodes[a][0].total_cmp(&nodes[b][0]));
    ids
}

/// Nodes receiving load and the unit load vector (total downward force 1 N).
fn unit_load(mesh: &QuadMesh, load: &LoadProgram) -> Result<(Vec<usize>, Vec<f64>)> {
    let nodes = mesh.nodes();
    let top = sorted_by_x(mesh, mesh.top_nodes());
    let mut f = vec![0.0; 2 * nodes.len()];
    match load.contact {
        Contact::FrictionlessUniformForce => {
            let (lo, hi) = mesh.bbox();
            let xc = 0.5 * (lo[0] + hi[0]);
            let half = 0.5 * load.probe_width_mm + 1e-9;
            let contact: Vec<usize> = top
                .into_iter()
                .filter(|&i| (nodes[i][0] - xc).abs() <= half)
                .collect();
            if contact.is_empty() {
                return Err(Error::InvalidGeometry("no top nodes lie under the probe".into()));
            }
            let share = 1.0 / contact.len() as f64;
            for &i in &contact {
                f[2 * i + 1] = -share;
            }
            Ok((contact, f))
        }
        Contact::FullWidthPressure => {
            if top.len() < 2 {
                return Err(Error::InvalidGeometry("top edge needs at least two nodes".into()));
            }
            let width = nodes[top[top.len() - 1]][0] - nodes[top[0]][0];
            for pair in top.windows(2) {
                let len = nodes[pair[1]][0] - nodes[pair[0]][0];
                for &i in pair {
                    f[2 * i + 1] -= 0.5 * len / width;
                }
            }
            Ok((top, f))
        }
    }
}

fn constrained_dofs(mesh: &QuadMesh, support: Support) -> Result<Vec<usize>> {
    let bottom = sorted_by_x(mesh, mesh.bottom_nodes());
    if bottom.is_empty() {
        return Err(Error::InvalidGeometry("mesh has no bottom nodes to support".into()));
    }
    let mut dofs: Vec<usize> = match support {
        Support::Pinned => bottom.iter().flat_map(|&i| [2 * i, 2 * i + 1]).collect(),
        Support::Roller => {
            let mut d: Vec<usize> = bottom.iter().map(|&i| 2 * i + 1).collect();
            d.push(2 * bottom[0]);
            d
        }
    };
    dofs.sort_unstable();
    dofs.dedup();
    Ok(dofs)
}

enum Factored {
    Direct(SkylineCholesky),
    Iterative { tol: f64, max_iter: usize },
}

/// Assembles once, factors once, and solves every load step.
pub fn assemble_and_solve(mesh: &QuadMesh, load: &LoadProgram, opts: &FeOptions) -> Result<FeSolution> {
    load.validate()?;
    let k = assemble(mesh, opts.poisson, load.thickness_mm)?;
    let (contact_nodes, unit) = unit_load(mesh, load)?;
    let constrained = constrained_dofs(mesh, load.support)?;
    let ndof = k.dim();
    let mut is_fixed = vec![false; ndof];
    for &d in &constrained {
        is_fixed[d] = true;
    }
    let free: Vec<usize> = (0..ndof).filter(|&d| !is_fixed[d]).collect();
    let kff = k.submatrix(&free);
    let solver = match opts.solver {
        LinearSolver::Direct => match SkylineCholesky::factor(&kff) {
            Ok(f) => Factored::Direct(f),
            Err(Error::Singular { equation }) => {
                // a CG pass can still succeed when the pivot failure is round-off;
                // a genuinely singular system fails there too
                let probe: Vec<f64> = free.iter().map(|&d| unit[d]).collect();
                match pcg(&kff, &probe, 1e-10, 10 * free.len()) {
                    Ok(_) => Factored::Iterative {
                        tol: 1e-10,
                        max_iter: 10 * free.len(),
                    },
                    Err(_) => return Err(Error::Singular { equation: free[equation] }),
                }
            }
            Err(e) => return Err(e),
        },
        LinearSolver::ConjugateGradient {
            tolerance,
            max_iterations,
        } => Factored::Iterative {
            tol: tolerance,
            max_iter: max_iterations,
        },
    };

    let mut sol = FeSolution {
        displacements: Vec::with_capacity(load.n_steps),
        reactions: Vec::with_capacity(load.n_steps),
        applied: Vec::with_capacity(load.n_steps),
        contact_nodes,
        constrained,
    };
    for step in 1..=load.n_steps {
        let force = load.step_force(step);
        let f: Vec<f64> = unit.iter().map(|v| v * force).collect();
        let rhs: Vec<f64> = free.iter().map(|&d| f[d]).collect();
        let uf = match &solver {
            Factored::Direct(ch) => ch.solve(&rhs),
            Factored::Iterative { tol, max_iter } => pcg(&kff, &rhs, *tol, *max_iter)?,
        };
        let mut u = vec![0.0; ndof];
        for (&d, v) in free.iter().zip(uf) {
            u[d] = v;
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite displacement at step {step}")));
        }
        let ku = k.mul_vec(&u);
        let r: Vec<f64> = ku.iter().zip(&f).map(|(a, b)| a - b).collect();
        sol.displacements.push(u);
        sol.reactions.push(r);
        sol.applied.push(f);
    }
    Ok(sol)
}
