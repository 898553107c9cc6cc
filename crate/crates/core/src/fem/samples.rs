//! Stress/strain sample sets extracted from FE solutions, their CSV form, and
//! the 90° frame-invariance augmentation.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::{q4, QuadMesh};
use crate::phantom::{apply_noise, ModulusField, NoiseSpec};
use crate::Voigt;

use super::{assemble_and_solve, mat_vec, plane_stress_matrix, FeOptions, FeSolution, LoadProgram};

pub const CSV_HEADER: &str = "x_mm,y_mm,step,s11,s22,s12,e11,e22,e12,aug";
pub const DEFAULT_STRESS_UNIT_PA: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub coord: [f64; 2],
    /// 1-based load step.
    pub step: usize,
    /// Pa.
    pub stress: Voigt,
    pub strain: Voigt,
    pub augmented: bool,
}

/// Samples plus the stress unit (Pa per internal unit) that downstream
/// networks will use. Values in `records` are always in Pa.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub stress_unit_pa: f64,
    pub records: Vec<Sample>,
}

/// All samples sharing one location.
#[derive(Debug, Clone, PartialEq)]
pub struct PointGroup {
    pub coord: [f64; 2],
    pub indices: Vec<usize>,
}

impl SampleSet {
    pub fn new(records: Vec<Sample>) -> Self {
        Self {
            stress_unit_pa: DEFAULT_STRESS_UNIT_PA,
            records,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Groups by exact coordinate, in order of first appearance.
    pub fn group_by_coord(&self) -> Vec<PointGroup> {
        let mut index: std::collections::HashMap<(u64, u64), usize> = Default::default();
        let mut groups: Vec<PointGroup> = Vec::new();
        for (i, s) in self.records.iter().enumerate() {
            let key = (s.coord[0].to_bits(), s.coord[1].to_bits());
            let g = *index.entry(key).or_insert_with(|| {
                groups.push(PointGroup {
                    coord: s.coord,
                    indices: Vec::new(),
                });
                groups.len() - 1
            });
            groups[g].indices.push(i);
        }
        groups
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# stress_unit_pa: {}", self.stress_unit_pa);
        out.push_str(CSV_HEADER);
        out.push('\n');
        for s in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                s.coord[0],
                s.coord[1],
                s.step,
                s.stress[0],
                s.stress[1],
                s.stress[2],
                s.strain[0],
                s.strain[1],
                s.strain[2],
                u8::from(s.augmented)
            );
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut unit = None;
        let mut header_seen = false;
        let mut records = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("stress_unit_pa:") {
                    unit = Some(v.trim().parse::<f64>().map_err(|e| {
                        Error::Parse(format!("line {}: bad stress unit: {e}", lineno + 1))
                    })?);
                }
                continue;
            }
            if !header_seen {
                if line != CSV_HEADER {
                    return Err(Error::Parse(format!("expected header `{CSV_HEADER}`, found `{line}`")));
                }
                header_seen = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 10 {
                return Err(Error::Parse(format!(
                    "line {}: expected 10 fields, found {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let num = |i: usize| -> Result<f64> {
                fields[i]
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: field {}: {e}", lineno + 1, i + 1)))
            };
            let step = fields[2]
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("line {}: step: {e}", lineno + 1)))?;
            let augmented = match fields[9] {
                "0" | "false" => false,
                "1" | "true" => true,
                other => return Err(Error::Parse(format!("line {}: bad aug flag `{other}`", lineno + 1))),
            };
            records.push(Sample {
                coord: [num(0)?, num(1)?],
                step,
                stress: [num(3)?, num(4)?, num(5)?],
                strain: [num(6)?, num(7)?, num(8)?],
                augmented,
            });
        }
        if !header_seen {
            return Err(Error::Parse("dataset has no header".into()));
        }
        Ok(Self {
            stress_unit_pa: unit.unwrap_or(DEFAULT_STRESS_UNIT_PA),
            records,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::file(path, e))
    }

    /// Loads a dataset and checks that its stress unit matches `expected_unit_pa`.
    pub fn load(path: &Path, expected_unit_pa: f64) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let set = Self::parse_csv(&text)?;
        if set.stress_unit_pa != expected_unit_pa {
            return Err(Error::UnitMismatch {
                expected: expected_unit_pa,
                found: set.stress_unit_pa,
            });
        }
        Ok(set)
    }
}

/// One sample per element per step: Gauss-point-averaged strain, stress from
/// the element elasticity matrix, located at the element centroid.
pub fn extract_samples(mesh: &QuadMesh, sol: &FeSolution, nu: f64) -> SampleSet {
    let moduli = mesh.element_modulus();
    let mut records = Vec::with_capacity(mesh.elements().len() * sol.displacements.len());
    // B matrices depend only on geometry; average them once per element
    let b_avg: Vec<[[f64; 8]; 3]> = (0..mesh.elements().len())
        .map(|e| {
            let coords = mesh.element_coords(e);
            let mut acc = [[0.0; 8]; 3];
            for (xi, eta, _) in q4::gauss_points() {
                let (grads, _) = q4::physical_gradients(&coords, xi, eta);
                let b = q4::b_matrix(&grads);
                for i in 0..3 {
                    for j in 0..8 {
                        acc[i][j] += 0.25 * b[i][j];
                    }
                }
            }
            acc
        })
        .collect();
    for (k, u) in sol.displacements.iter().enumerate() {
        for (e, conn) in mesh.elements().iter().enumerate() {
            let ue: [f64; 8] = std::array::from_fn(|i| u[2 * conn[i / 2] + i % 2]);
            let b = &b_avg[e];
            let strain: Voigt = std::array::from_fn(|i| (0..8).map(|j| b[i][j] * ue[j]).sum());
            let stress = mat_vec(&plane_stress_matrix(moduli[e], nu), &strain);
            records.push(Sample {
                coord: mesh.centroid(e),
                step: k + 1,
                stress,
                strain,
                augmented: false,
            });
        }
    }
    SampleSet::new(records)
}

/// Appends a copy of every record with the axial and lateral components swapped.
/// With `flip_shear` the copy's shear components change sign as a true 90°
/// rotation would produce.
pub fn augment_frame_invariance(samples: &SampleSet, flip_shear: bool) -> SampleSet {
    let g = if flip_shear { -1.0 } else { 1.0 };
    let mut records = samples.records.clone();
    records.extend(samples.records.iter().map(|s| Sample {
        stress: [s.stress[1], s.stress[0], g * s.stress[2]],
        strain: [s.strain[1], s.strain[0], g * s.strain[2]],
        augmented: true,
        ..*s
    }));
    SampleSet {
        stress_unit_pa: samples.stress_unit_pa,
        records,
    }
}

/// Convenience: assign the field, solve, extract.
pub fn simulate(mesh: &QuadMesh, field: &ModulusField, load: &LoadProgram, opts: &FeOptions) -> Result<SampleSet> {
    let mut m = mesh.clone();
    m.assign_modulus(field);
    let sol = assemble_and_solve(&m, load, opts)?;
    Ok(extract_samples(&m, &sol, opts.poisson))
}

/// Two independently corrupted analyses (noise draws 1 and 2): stresses come
/// from the first, strains from the second.
pub fn dual_fea_noise_dataset(
    field: &ModulusField,
    spec: NoiseSpec,
    mesh: &QuadMesh,
    load: &LoadProgram,
    opts: &FeOptions,
) -> Result<SampleSet> {
    spec.validate()?;
    let first = apply_noise(field, NoiseSpec { draw_id: 1, ..spec })?;
    let second = apply_noise(field, NoiseSpec { draw_id: 2, ..spec })?;
    let a = simulate(mesh, &first, load, opts)?;
    let b = simulate(mesh, &second, load, opts)?;
    let records = a
        .records
        .iter()
        .zip(&b.records)
        .map(|(sa, sb)| Sample {
            strain: sb.strain,
            ..*sa
        })
        .collect();
    Ok(SampleSet::new(records))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(stress: Voigt, strain: Voigt) -> Sample {
        Sample {
            coord: [1.0, 2.0],
            step: 1,
            stress,
            strain,
            augmented: false,
        }
    }

    #[test]
    fn swap_rule() {
        let set = SampleSet::new(vec![sample([4.0, 5.0, 6.0], [1.0, 2.0, 3.0])]);
        let aug = augment_frame_invariance(&set, false);
        assert_eq!(aug.len(), 2);
        assert_eq!(aug.records[1].strain, [2.0, 1.0, 3.0]);
        assert_eq!(aug.records[1].stress, [5.0, 4.0, 6.0]);
        assert!(aug.records[1].augmented);
        let flipped = augment_frame_invariance(&set, true);
        assert_eq!(flipped.records[1].strain, [2.0, 1.0, -3.0]);
    }

    #[test]
    fn symmetric_record_duplicates_itself() {
        let set = SampleSet::new(vec![sample([4.0, 4.0, 1.0], [2.0, 2.0, 3.0])]);
        let aug = augment_frame_invariance(&set, false);
        assert_eq!(aug.records[0].stress, aug.records[1].stress);
        assert_eq!(aug.records[0].strain, aug.records[1].strain);
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let set = SampleSet::new(vec![
            sample([1234.567890123, -0.1, 1e-300], [0.1 + 0.2, -3.0e-7, 0.0]),
            Sample {
                augmented: true,
                step: 4,
                ..sample([1.0, 2.0, 3.0], [4.0, 5.0, 6.0])
            },
        ]);
        let back = SampleSet::parse_csv(&set.to_csv()).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn unit_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let mut set = SampleSet::new(vec![sample([1.0; 3], [0.0; 3])]);
        set.stress_unit_pa = 1000.0;
        set.save(&path).unwrap();
        assert!(matches!(SampleSet::load(&path, 1e4), Err(Error::UnitMismatch { .. })));
        assert!(SampleSet::load(&path, 1000.0).is_ok());
    }

    #[test]
    fn groups_follow_first_appearance() {
        let mut a = sample([0.0; 3], [0.0; 3]);
        let mut b = a;
        b.coord = [3.0, 3.0];
        a.step = 2;
        let set = SampleSet::new(vec![b, a, b, a]);
        let g = set.group_by_coord();
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].coord, [3.0, 3.0]);
        assert_eq!(g[0].indices, vec![0, 2]);
    }
}
