use std::sync::OnceLock;

use elastonet::fem::samples::simulate;
use elastonet::fem::{augment_frame_invariance, FeOptions, LoadProgram, SampleSet};
use elastonet::mesh::QuadMesh;
use elastonet::mpn::{MaterialPropertyNet, PretrainSpec};
use elastonet::phantom::{ModulusField, PhantomSpec};
use elastonet::scaling::{compute_field, pairs_by_location, update_point, GdConfig};
use proptest::prelude::*;

fn mpn() -> &'static MaterialPropertyNet {
    static NET: OnceLock<MaterialPropertyNet> = OnceLock::new();
    NET.get_or_init(|| MaterialPropertyNet::pretrain(&PretrainSpec::default()).unwrap())
}

fn dataset(field: &ModulusField, nodes: usize) -> SampleSet {
    let mesh = QuadMesh::rectilinear(50.0, 50.0, nodes).unwrap();
    let set = simulate(&mesh, field, &LoadProgram::default(), &FeOptions::default()).unwrap();
    augment_frame_invariance(&set, false)
}

fn model1() -> &'static (ModulusField, SampleSet) {
    static DATA: OnceLock<(ModulusField, SampleSet)> = OnceLock::new();
    DATA.get_or_init(|| {
        let field = PhantomSpec::model1().build(None).unwrap();
        let data = dataset(&field, 35);
        (field, data)
    })
}

/// Spearman rank correlation without tie handling (values are continuous).
fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let rank = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        for (pos, &i) in idx.iter().enumerate() {
            r[i] = pos as f64;
        }
        r
    };
    let (ra, rb) = (rank(a), rank(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn homogeneous_reference_material_keeps_unit_scale() {
    let field = ModulusField::gaussian_inclusion(50.0, 50.0, 10e3, 10e3, [25.0, 25.0], 6.0).unwrap();
    let data = dataset(&field, 15);
    let f = compute_field(mpn(), &data, &GdConfig::default()).unwrap();
    for s in &f.scales {
        for k in 0..2 {
            assert!((s[k] - 1.0).abs() < 0.05, "{s:?}");
        }
    }
}

#[test]
fn stiff_region_gets_smaller_scale_than_background() {
    let (_, data) = model1();
    let groups = pairs_by_location(data);
    let nearest = |x: f64, y: f64| {
        groups
            .iter()
            .min_by(|a, b| {
                let da = (a.0[0] - x).powi(2) + (a.0[1] - y).powi(2);
                let db = (b.0[0] - x).powi(2) + (b.0[1] - y).powi(2);
                da.total_cmp(&db)
            })
            .unwrap()
    };
    let cfg = GdConfig::default();
    let center = update_point(mpn(), &nearest(25.0, 25.0).1, [1.0; 3], &cfg).unwrap();
    let corner = update_point(mpn(), &nearest(3.0, 3.0).1, [1.0; 3], &cfg).unwrap();
    assert!(center.scale[1] < corner.scale[1]);
}

#[test]
fn model1_field_properties() {
    let (target, data) = model1();
    let cfg = GdConfig::default();
    let f = compute_field(mpn(), data, &cfg).unwrap();
    assert_eq!(f.len(), 1156);
    assert_eq!(f.errors.len(), cfg.iterations + 1);
    assert!(f.errors[cfg.iterations].mean_rms <= f.errors[1].mean_rms);
    assert!(f.scales.iter().flatten().all(|&s| s >= cfg.s_floor));
    let e: Vec<f64> = f.coords.iter().map(|c| target.eval(c[0], c[1])).collect();
    let rho = spearman(&f.component(1), &e);
    assert!(rho <= -0.9, "rank correlation {rho}");
}

#[test]
fn locations_are_independent_of_order() {
    let (_, data) = model1();
    let cfg = GdConfig {
        iterations: 20,
        ..Default::default()
    };
    let groups = pairs_by_location(data);
    let forward: Vec<_> = groups
        .iter()
        .take(40)
        .map(|(_, p)| update_point(mpn(), p, [1.0; 3], &cfg).unwrap().scale)
        .collect();
    let mut backward: Vec<_> = groups
        .iter()
        .take(40)
        .rev()
        .map(|(_, p)| update_point(mpn(), p, [1.0; 3], &cfg).unwrap().scale)
        .collect();
    backward.reverse();
    assert_eq!(forward, backward);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn scales_stay_above_floor(
        stress in prop::array::uniform3(-2000.0f64..2000.0),
        strain in prop::array::uniform3(-0.05f64..0.05),
        floor in 1e-3f64..0.5,
    ) {
        let pairs = [elastonet::scaling::Pair { stress, strain }];
        let cfg = GdConfig { iterations: 30, s_floor: floor, ..Default::default() };
        if let Ok(fit) = update_point(mpn(), &pairs, [1.0; 3], &cfg) {
            prop_assert!(fit.scale.iter().all(|&s| s >= floor));
        }
    }
}
