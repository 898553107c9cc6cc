use elastonet::fem::{
    assemble_and_solve, augment_frame_invariance, extract_samples, plane_stress_matrix, Contact, FeOptions,
    FeSolution, LoadProgram, Support,
};
use elastonet::mesh::conforming::{generate, ConformingLayout};
use elastonet::mesh::QuadMesh;
use elastonet::phantom::synth::model2_discs;
use elastonet::phantom::PhantomSpec;

fn homogeneous(n: usize, e: f64) -> QuadMesh {
    let mut m = QuadMesh::rectilinear(50.0, 50.0, n).unwrap();
    m.set_element_modulus(vec![e; m.elements().len()]).unwrap();
    m
}

fn model_mesh(spec: PhantomSpec) -> QuadMesh {
    let mut m = QuadMesh::rectilinear(50.0, 50.0, 35).unwrap();
    m.assign_modulus(&spec.build(None).unwrap());
    m
}

#[test]
fn uniform_pressure_matches_uniaxial_closed_form() {
    let e = 10e3;
    let nu = 0.5;
    let mesh = homogeneous(11, e);
    let load = LoadProgram {
        total_force_n: 0.05,
        n_steps: 1,
        contact: Contact::FullWidthPressure,
        support: Support::Roller,
        ..Default::default()
    };
    let opts = FeOptions::default();
    let sol = assemble_and_solve(&mesh, &load, &opts).unwrap();
    let set = extract_samples(&mesh, &sol, nu);
    // pressure over 50 mm × 1 mm, converted to Pa
    let p = 0.05 / 50.0 * 1e6;
    let e22 = -p / e;
    let e11 = nu * p / e;
    for s in &set.records {
        assert!((s.strain[1] - e22).abs() <= 1e-6 * e22.abs(), "{:?}", s.strain);
        assert!((s.strain[0] - e11).abs() <= 1e-6 * e11.abs());
        assert!(s.strain[2].abs() <= 1e-6 * e22.abs());
        assert!((s.stress[1] + p).abs() <= 1e-6 * p);
        assert!(s.stress[0].abs() <= 1e-6 * p);
    }
    // top displacement: height × strain
    let top = mesh.top_nodes();
    for &i in &top {
        let uy = sol.displacements[0][2 * i + 1];
        assert!((uy - 50.0 * e22).abs() <= 1e-6 * (50.0 * e22).abs());
    }
}

#[test]
fn displacements_scale_linearly_with_force() {
    let mesh = model_mesh(PhantomSpec::model1());
    let opts = FeOptions::default();
    let a = assemble_and_solve(&mesh, &LoadProgram::default(), &opts).unwrap();
    let double = LoadProgram {
        total_force_n: 2.0 * 13.57e-3,
        ..Default::default()
    };
    let b = assemble_and_solve(&mesh, &double, &opts).unwrap();
    let sa = extract_samples(&mesh, &a, 0.5);
    let sb = extract_samples(&mesh, &b, 0.5);
    for (x, y) in a.displacements.iter().flatten().zip(b.displacements.iter().flatten()) {
        assert!((2.0 * x - y).abs() <= 1e-9 * y.abs().max(1e-12));
    }
    for (p, q) in sa.records.iter().zip(&sb.records) {
        for k in 0..3 {
            assert!((2.0 * p.stress[k] - q.stress[k]).abs() <= 1e-9 * q.stress[k].abs().max(1e-6));
            assert!((2.0 * p.strain[k] - q.strain[k]).abs() <= 1e-9 * q.strain[k].abs().max(1e-15));
        }
    }
}

#[test]
fn bottom_reactions_balance_probe_force() {
    let mesh = model_mesh(PhantomSpec::model2());
    let load = LoadProgram::default();
    let sol = assemble_and_solve(&mesh, &load, &FeOptions::default()).unwrap();
    for step in 0..load.n_steps {
        let applied = load.step_force(step + 1);
        let ry: f64 = mesh.bottom_nodes().iter().map(|&i| sol.reactions[step][2 * i + 1]).sum();
        let rx: f64 = mesh.bottom_nodes().iter().map(|&i| sol.reactions[step][2 * i]).sum();
        assert!((ry - applied).abs() <= 1e-8 * applied, "step {step}: {ry} vs {applied}");
        assert!(rx.abs() <= 1e-8 * applied);
    }
}

#[test]
fn single_element_patch_test() {
    let mut mesh = QuadMesh::new(
        vec![[0.0, 0.0], [2.0, 0.2], [2.3, 1.9], [-0.1, 1.5]],
        vec![[0, 1, 2, 3]],
        [("bottom".to_string(), vec![0, 1]), ("top".to_string(), vec![2, 3])].into(),
    )
    .unwrap();
    mesh.set_element_modulus(vec![12e3]).unwrap();
    // u = A x + b
    let a = [[0.003, -0.001], [0.002, -0.004]];
    let u: Vec<f64> = mesh
        .nodes()
        .iter()
        .flat_map(|p| {
            [
                a[0][0] * p[0] + a[0][1] * p[1] + 0.5,
                a[1][0] * p[0] + a[1][1] * p[1] - 0.2,
            ]
        })
        .collect();
    let sol = FeSolution {
        displacements: vec![u],
        reactions: vec![vec![0.0; 8]],
        applied: vec![vec![0.0; 8]],
        contact_nodes: vec![2, 3],
        constrained: vec![],
    };
    let set = extract_samples(&mesh, &sol, 0.5);
    let s = &set.records[0];
    let expected = [a[0][0], a[1][1], a[0][1] + a[1][0]];
    for k in 0..3 {
        assert!((s.strain[k] - expected[k]).abs() < 1e-12);
    }
    let c = plane_stress_matrix(12e3, 0.5);
    for i in 0..3 {
        let sigma: f64 = (0..3).map(|j| c[i][j] * s.strain[j]).sum();
        assert!((sigma - s.stress[i]).abs() <= 1e-12 * sigma.abs().max(1.0));
    }
}

#[test]
fn symmetric_field_gives_mirror_symmetric_stress() {
    let mesh = model_mesh(PhantomSpec::model1());
    let sol = assemble_and_solve(&mesh, &LoadProgram::default(), &FeOptions::default()).unwrap();
    let set = extract_samples(&mesh, &sol, 0.5);
    let n = 34;
    let scale = set.records.iter().fold(0.0f64, |m, s| m.max(s.stress[1].abs()));
    for step in 0..4 {
        for row in 0..n {
            for col in 0..n {
                let a = &set.records[step * n * n + row * n + col];
                let b = &set.records[step * n * n + row * n + (n - 1 - col)];
                assert!((a.coord[0] + b.coord[0] - 50.0).abs() < 1e-9);
                assert!((a.stress[0] - b.stress[0]).abs() <= 1e-8 * scale);
                assert!((a.stress[1] - b.stress[1]).abs() <= 1e-8 * scale);
                assert!((a.stress[2] + b.stress[2]).abs() <= 1e-8 * scale);
            }
        }
    }
}

#[test]
fn record_counts_for_mesh_one() {
    let mesh = model_mesh(PhantomSpec::model1());
    let sol = assemble_and_solve(&mesh, &LoadProgram::default(), &FeOptions::default()).unwrap();
    let set = extract_samples(&mesh, &sol, 0.5);
    assert_eq!(set.len(), 4624);
    let aug = augment_frame_invariance(&set, false);
    assert_eq!(aug.len(), 9248);
    let groups = aug.group_by_coord();
    assert_eq!(groups.len(), 1156);
    assert!(groups.iter().all(|g| g.indices.len() == 8));
}

#[test]
fn probe_displacement_lies_near_reported_range() {
    let mut meshes = vec![
        model_mesh(PhantomSpec::model1()),
        model_mesh(PhantomSpec::model2()),
        model_mesh(PhantomSpec::model3()),
        model_mesh(PhantomSpec::model4()),
    ];
    let mut conforming = generate(&ConformingLayout::three_inclusion(&model2_discs())).unwrap();
    conforming.assign_modulus(&PhantomSpec::model2().build(None).unwrap());
    meshes.push(conforming);
    for (i, mesh) in meshes.iter().enumerate() {
        let sol = assemble_and_solve(mesh, &LoadProgram::default(), &FeOptions::default()).unwrap();
        let d = sol.probe_displacement(3);
        println!("mesh {i}: probe displacement {d:.3} mm");
        assert!((0.98 * 0.7..=2.23 * 1.3).contains(&d), "mesh {i}: {d}");
    }
}
