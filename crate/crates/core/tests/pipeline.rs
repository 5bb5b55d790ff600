use std::sync::Arc;

use bdrymatern::bdry_kernel::BoundaryType;
use bdrymatern::brownian::SimConfig;
use bdrymatern::experiments::{run_experiment_2d, write_results_csv, Exp2dSpec, FemDraw};
use bdrymatern::fem::{build_fem_kernel, FemBuildSpec, FemKernel};
use bdrymatern::gp::{fit, KernelHandle, MeanSpec};
use bdrymatern::rng::seeded;
use bdrymatern::{Domain, DomainSpec, MaternParams};

fn disk_kernel(m: usize, zeta: u32, anchors: usize, seed: u64) -> (Domain, FemKernel) {
    let dom = Domain::from_spec(&DomainSpec::disk()).unwrap();
    let spec = FemBuildSpec {
        params: MaternParams::new(2.5, 5.0, 1.0).unwrap(),
        boundary: BoundaryType::Dirichlet,
        m,
        order: None,
        zeta: Some(zeta),
        points: None,
        boundary_anchors: anchors,
        prune: None,
    };
    let k = build_fem_kernel(&dom, &spec, &SimConfig::for_domain(&dom), &mut seeded(seed)).unwrap();
    (dom, k)
}

#[test]
fn saved_kernel_gives_identical_predictions() {
    let (dom, k) = disk_kernel(150, 2, 40, 1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("k.bin");
    k.save(&path).unwrap();
    let back = FemKernel::load(&path).unwrap();

    let mut rng = seeded(2);
    let x = dom.sample_uniform(12, &mut rng).unwrap();
    let q = dom.sample_uniform(40, &mut rng).unwrap();
    let y: Vec<f64> = x.iter().map(|p| p.0[0] - p.0[1]).collect();
    let a = fit(KernelHandle::Fem(Arc::new(k)), MeanSpec::Zero, x.clone(), y.clone(), 1e-8).unwrap();
    let b = fit(KernelHandle::Fem(Arc::new(back)), MeanSpec::Zero, x, y, 1e-8).unwrap();
    let (pa, pb) = (a.predict(&q).unwrap(), b.predict(&q).unwrap());
    assert_eq!(pa.mean, pb.mean);
    assert_eq!(pa.variance, pb.variance);
}

#[test]
fn ground_truth_draws_are_small_near_the_boundary() {
    let (dom, k) = disk_kernel(1500, 3, 400, 3);
    let mut rng = seeded(4);
    let probe = dom.sample_uniform(500, &mut rng).unwrap();
    for _ in 0..3 {
        let f = FemDraw::new(k.clone(), &probe, &mut rng).unwrap();
        let interior = probe.iter().map(|p| f.eval(p).unwrap().abs()).fold(0.0, f64::max);
        let edge = dom
            .sample_uniform(100, &mut rng)
            .unwrap()
            .iter()
            .map(|p| f.eval(&dom.project_to_boundary(p).unwrap().location).unwrap().abs())
            .fold(0.0, f64::max);
        assert!(edge <= 0.1 * interior, "{edge} vs {interior}");
    }
}

#[test]
fn experiment_tables_repeat_exactly() {
    let mut spec = Exp2dSpec::new("ring");
    spec.n = 8;
    spec.replicates = 2;
    spec.test_size = 100;
    spec.m = Some(300);
    spec.zeta = Some(2);
    spec.anchors = Some(100);
    let render = |spec: &Exp2dSpec| {
        let mut buf = Vec::new();
        write_results_csv(&mut buf, &run_experiment_2d(spec).unwrap()).unwrap();
        String::from_utf8(buf).unwrap()
    };
    let a = render(&spec);
    assert_eq!(a, render(&spec));
    let mut lines = a.lines();
    assert_eq!(lines.next(), Some("replicate,model,n,log_mse,test_size"));
    assert_eq!(lines.count(), 4);
}
