use cavfield_core::fem::CoefficientField;
use cavfield_core::forward::{check_state_bounds, cut_cell_weights};
use cavfield_core::synth::catalog_cases;
use cavfield_core::*;

fn disc<T: Real>(n: usize) -> Discretization<T> {
    let mesh = build_structured_mesh(n, n, Rect::unit()).unwrap();
    let spec = RegionSpec {
        omega1: Rect::new(T::zero(), T::zero(), T::one(), T::lit(0.2)).unwrap(),
        omega2: Rect::new(T::zero(), T::zero(), T::one(), T::lit(0.1)).unwrap(),
        sigma_side: Side::Bottom,
        sigma_interval: [T::zero(), T::one()],
    };
    let labels = mark_regions(&mesh, &spec).unwrap();
    let a = CoefficientField::identity(&mesh);
    Discretization::new(mesh, labels, a).unwrap()
}

#[test]
fn constant_source_gives_cube_root_f64() {
    let d = disc::<f64>(16);
    let f = SourceField::constant(d.mesh(), 27.0);
    let s = solve_state(&d, &vec![1.0; d.n()], 1e-3, &f, &NewtonOptions::default()).unwrap();
    assert!(s.u.iter().all(|u| (u - 3.0).abs() < 1e-10));
}

#[test]
fn constant_source_gives_cube_root_f32() {
    let d = disc::<f32>(10);
    let f = SourceField::constant(d.mesh(), 8.0f32);
    let opts = NewtonOptions { tol_residual: 1e-5, cg_tol: 1e-6, ..NewtonOptions::default() };
    let s = solve_state(&d, &vec![1.0f32; d.n()], 1e-3, &f, &opts).unwrap();
    assert!(s.u.iter().all(|u| (u - 2.0).abs() < 1e-4), "{:?}", s.u);
}

#[test]
fn catalog_states_respect_bounds() {
    let d = disc::<f64>(24);
    let f = SourceField::plateau(d.mesh(), d.labels(), 2.0, d.labels().omega2_rect).unwrap();
    let newton = NewtonOptions::default();
    for case in catalog_cases::<f64>().unwrap() {
        let w = cut_cell_weights(d.mesh(), &case.shape);
        let s = solve_cavity_reference(&d, &case.shape, &f, &newton).unwrap();
        let r = check_state_bounds(&d, &w, &s, &f, 1e-8);
        assert!(r.nonobtuse);
        for c in &r.checks {
            assert!(c.pass, "{}: {c:?}", case.name);
        }
    }
}

#[test]
fn trace_converges_under_refinement() {
    let shape = CavityShape::disk([0.5, 0.5], 0.2).unwrap();
    let newton = NewtonOptions::default();
    let traces: Vec<(Discretization<f64>, Vec<f64>)> = [16, 32, 64]
        .into_iter()
        .map(|n| {
            let d = disc::<f64>(n);
            let f = SourceField::plateau(d.mesh(), d.labels(), 1.0, d.labels().omega2_rect).unwrap();
            let t = solve_cavity_reference(&d, &shape, &f, &newton).unwrap().trace(&d);
            (d, t)
        })
        .collect();
    // Compare every level against the finest on the shared coarse Σ nodes.
    let fine = &traces[2];
    let err = |k: usize| {
        let (d, t) = &traces[k];
        let step = 64 / d.mesh().grid().unwrap().nx;
        t.iter().enumerate().map(|(i, x)| (x - fine.1[i * step]).abs()).fold(0.0, f64::max)
    };
    let (e16, e32) = (err(0), err(1));
    assert!(e32 < e16, "{e16} {e32}");
}

#[test]
fn larger_cavity_raises_trace() {
    let d = disc::<f64>(32);
    let f = SourceField::plateau(d.mesh(), d.labels(), 1.0, d.labels().omega2_rect).unwrap();
    let newton = NewtonOptions::default();
    let mean = |r: f64| {
        let s = CavityShape::disk([0.5, 0.55], r).unwrap();
        let t = solve_cavity_reference(&d, &s, &f, &newton).unwrap().trace(&d);
        t.iter().sum::<f64>() / t.len() as f64
    };
    let none = solve_state(&d, &vec![1.0; d.n()], 1e-3, &f, &newton).unwrap().trace(&d);
    let m0 = none.iter().sum::<f64>() / none.len() as f64;
    let (m1, m2) = (mean(0.15), mean(0.25));
    assert!(m0 < m1 && m1 < m2, "{m0} {m1} {m2}");
}
