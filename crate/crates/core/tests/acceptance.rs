//! Acceptance criteria 1-9. Each test writes one `criterion N: PASS|FAIL`
//! line straight to stdout (bypassing libtest capture) and then asserts.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use foliation_core::diffusion::{
    self, classify_boundary, reference_process, traced_leaf_process, LeafDiffusionSpec, ReferenceKind, SimConfig,
    SimReport, Side, Verdict,
};
use foliation_core::foliation::{self, PointClass, StopRule, Termination};
use foliation_core::geometry::{ChartId, ChartPoint};
use foliation_core::models::{self, NamedSurface};
use foliation_core::operators;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: &str, pass: bool, started: Instant, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion {n}: {verdict} ({:.1} s) {detail}", started.elapsed().as_secs_f64());
    let _ = out.flush();
}

fn hpt(c: [f64; 3]) -> ChartPoint {
    ChartPoint::new(&c, ChartId::Heisenberg).unwrap()
}

fn trace_to(surf: &NamedSurface, start: &ChartPoint, target: &ChartPoint) -> foliation::LeafTrace {
    let stop = StopRule { max_length: 20.0, char_tol: diffusion::LEAF_CHAR_TOL, ..surf.stop };
    let t = foliation::trace_into(&surf.spec, surf.cs(), start, target, 0.01, stop).unwrap();
    assert_eq!(t.terminated_by, Termination::NearCharacteristicPoint, "{}", surf.name);
    t
}

#[test]
fn criterion_1_closed_form_drift() {
    let t0 = Instant::now();
    let mut cases: Vec<(String, NamedSurface, ChartPoint, ChartPoint)> = Vec::new();
    for a in [0.0, 0.25, 1.0] {
        let s = models::paraboloid(a).unwrap();
        cases.push((format!("paraboloid a={a}"), s, hpt([1.5, 0.2, a * (2.25 + 0.04)]), hpt([0.0; 3])));
    }
    let th = PI - 0.02;
    cases.push((
        "spheroid a=c=1".into(),
        models::spheroid(1.0, 1.0).unwrap(),
        hpt([th.sin(), 0.0, th.cos()]),
        hpt([0.0, 0.0, 1.0]),
    ));
    for a in [0.25, 1.0] {
        for (axis, start) in [("x", [1.5, 0.0, 0.0]), ("y", [0.0, 1.5, 0.0])] {
            let s = models::hyperbolic_paraboloid(a).unwrap();
            cases.push((format!("hyperbolic a={a} {axis}-axis"), s, hpt(start), hpt([0.0; 3])));
        }
    }
    cases.push((
        "su2-sphere k=1".into(),
        models::su2_sphere(1.0).unwrap(),
        models::su2_sphere_point(1.0, PI - 0.02, 0.3).unwrap(),
        ChartPoint::new(&[0.0, 0.0, 1.0, 0.0], ChartId::Su2).unwrap(),
    ));
    cases.push((
        "sl2-plane k=1".into(),
        models::sl2_plane(1.0).unwrap(),
        models::sl2_plane_point(1.0, 1.5, 0.3).unwrap(),
        ChartPoint::new(&[1.0, 0.0, 0.0, 1.0], ChartId::Sl2).unwrap(),
    ));
    let mut worst = 0.0f64;
    let mut worst_case = String::new();
    for (name, surf, start, target) in &cases {
        let tr = trace_to(surf, start, target);
        let len = tr.length();
        let s0 = tr.samples[0].s;
        let mut n = 0;
        for sm in &tr.samples {
            let frac = (sm.s - s0).abs() / len;
            if !(0.1..=0.9).contains(&frac) {
                continue;
            }
            n += 1;
            let err = (sm.b - surf.closed_b(&sm.point).unwrap()).abs();
            if err > worst {
                worst = err;
                worst_case = name.clone();
            }
        }
        assert!(n > 10, "{name}: {n} samples in the middle of the leaf");
    }
    let pass = worst <= 1e-5 && t0.elapsed().as_secs_f64() < 30.0;
    report("1", pass, t0, format!("max |b - closed form| = {worst:.2e} ({worst_case}), {} leaves", cases.len()));
    assert!(pass);
}

#[test]
fn criterion_2_trace_identity() {
    let t0 = Instant::now();
    let mut surfaces: Vec<NamedSurface> = models::registry()
        .iter()
        .map(|e| models::build(&e.name, &Default::default()).unwrap())
        .collect();
    surfaces.extend([
        models::paraboloid(0.25).unwrap(),
        models::paraboloid(3.0).unwrap(),
        models::spheroid(2.0, 0.5).unwrap(),
        models::spheroid_north_normalized(1.5, 0.7).unwrap(),
        models::hyperbolic_paraboloid(0.25).unwrap(),
        models::su2_sphere(0.7).unwrap(),
        models::sl2_plane(1.3).unwrap(),
        models::canonical_exp_surface(4.0, 1.0).unwrap(),
        models::canonical_exp_surface(-4.0, 1.0).unwrap(),
    ]);
    let mut worst = 0.0f64;
    let mut count = 0;
    for s in &surfaces {
        for x in &s.char_points_expected {
            let r = foliation::classify(&s.spec, s.cs(), x).unwrap();
            if r.class == PointClass::Degenerate {
                continue;
            }
            count += 1;
            let sum = r.eigenvalues[0] + r.eigenvalues[1];
            worst = worst.max((sum.re - 1.0).abs()).max(sum.im.abs());
        }
    }
    let pass = count > 0 && worst <= 1e-8 && t0.elapsed().as_secs_f64() < 5.0;
    report("2", pass, t0, format!("{count} points, max |l1 + l2 - 1| = {worst:.2e}"));
    assert!(pass);
}

#[test]
fn criterion_3_operator_convergence() {
    let t0 = Instant::now();
    let a = 1.0;
    let surf = models::paraboloid(a).unwrap();
    let center = models::spiral_leaf(a, 0.0, 3.5).unwrap();
    let radius = 0.4;
    let f = operators::bump(center.coords, radius);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut points = Vec::new();
    while points.len() < 50 {
        let x = center.coords[0] + rng.random_range(-radius..radius);
        let y = center.coords[1] + rng.random_range(-radius..radius);
        let p = hpt([x, y, a * (x * x + y * y)]);
        if p.dist(&center) < 0.9 * radius {
            points.push(p);
        }
    }
    let eps = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5];
    let rep = operators::convergence_study(&surf.spec, surf.cs(), &f, &points, &eps).unwrap();
    let order_ok = rep.empirical_order.iter().all(|q| (0.8..=1.2).contains(q));
    let ratio = rep.max_error_per_eps[4] / rep.max_error_per_eps[0];
    let ratio_ok = ratio <= 1e-4;
    let pass = order_ok && ratio_ok && t0.elapsed().as_secs_f64() < 60.0;
    report(
        "3",
        pass,
        t0,
        format!(
            "orders {:?} in [0.8, 1.2]: {order_ok}; err(1e-5)/err(1e-1) = {ratio:.4e} <= 1e-4: {ratio_ok}",
            rep.empirical_order.iter().map(|q| format!("{q:.4}")).collect::<Vec<_>>()
        ),
    );
    assert!(pass);
}

fn random_surface_points(name: &str, rng: &mut ChaCha8Rng, n: usize) -> (NamedSurface, Vec<ChartPoint>) {
    let mut pts = Vec::with_capacity(n);
    let surf = match name {
        "paraboloid" => models::paraboloid(1.0).unwrap(),
        "spheroid" => models::spheroid(1.0, 1.0).unwrap(),
        "hyperbolic-paraboloid" => models::hyperbolic_paraboloid(1.0).unwrap(),
        "su2-sphere" => models::su2_sphere(1.0).unwrap(),
        "sl2-plane" => models::sl2_plane(1.0).unwrap(),
        _ => unreachable!(),
    };
    while pts.len() < n {
        let phi = rng.random_range(0.0..2.0 * PI);
        let p = match name {
            "paraboloid" => {
                let r = rng.random_range(0.3..1.5);
                hpt([r * phi.cos(), r * phi.sin(), r * r])
            }
            "spheroid" => {
                let th: f64 = rng.random_range(0.4..PI - 0.4);
                hpt([th.sin() * phi.cos(), th.sin() * phi.sin(), th.cos()])
            }
            "hyperbolic-paraboloid" => {
                let (x, y) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                if f64::hypot(x, y) < 0.3 {
                    continue;
                }
                hpt([x, y, x * y])
            }
            "su2-sphere" => models::su2_sphere_point(1.0, rng.random_range(0.4..PI - 0.4), phi).unwrap(),
            "sl2-plane" => models::sl2_plane_point(1.0, rng.random_range(0.3..1.5), phi).unwrap(),
            _ => unreachable!(),
        };
        pts.push(p);
    }
    (surf, pts)
}

#[test]
fn criterion_4_curvature() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let eps = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5];
    let mut worst_res = 0.0f64;
    let mut monotone_fail = 0;
    let mut worst_point = String::new();
    let mut total = 0;
    for name in ["paraboloid", "spheroid", "hyperbolic-paraboloid", "su2-sphere", "sl2-plane"] {
        let (surf, pts) = random_surface_points(name, &mut rng, 100);
        let samples = operators::curvature_sweep(&surf.spec, surf.cs(), &pts, &eps).unwrap();
        for s in &samples {
            total += 1;
            worst_res = worst_res.max(s.riccati_residual.abs());
            let d: Vec<f64> = s.k_eps.iter().map(|k| (k - s.k0).abs()).collect();
            if d.windows(2).any(|w| w[1] > 1.05 * w[0]) {
                monotone_fail += 1;
                worst_point = format!("{name} {:?}: {:?}", s.point.x(), d.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>());
            }
        }
    }
    let pass = worst_res <= 1e-6 && monotone_fail == 0 && t0.elapsed().as_secs_f64() < 60.0;
    report(
        "4",
        pass,
        t0,
        format!(
            "{total} points, max Riccati residual {worst_res:.2e} <= 1e-6: {}; non-monotone |K_eps - K0| \
             over eps = 1e-1..1e-5: {monotone_fail} (last: {worst_point})",
            worst_res <= 1e-6
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_5_expansion() {
    let t0 = Instant::now();
    let mut cases = Vec::new();
    for a in [0.25, 1.0, 3.0] {
        cases.push((format!("focus a={a}"), models::paraboloid(a).unwrap(), hpt([0.5, 0.2, a * 0.29]), 0.5));
    }
    let node = models::hyperbolic_paraboloid(0.25).unwrap();
    cases.push(("node x-axis".into(), node.clone(), hpt([1.0, 0.0, 0.0]), 0.25));
    cases.push(("node y-axis".into(), node.clone(), hpt([0.0, 1.0, 0.0]), 0.75));
    cases.push(("node generic".into(), node, hpt([0.6, 0.6, 0.09]), 0.25));
    let saddle = models::hyperbolic_paraboloid(1.0).unwrap();
    cases.push(("saddle x-axis".into(), saddle.clone(), hpt([1.0, 0.0, 0.0]), -0.5));
    cases.push(("saddle y-axis".into(), saddle, hpt([0.0, 1.0, 0.0]), 1.5));
    let mut worst = 0.0f64;
    let mut lines = Vec::new();
    for (name, surf, start, want) in &cases {
        let x0 = surf.char_points_expected[0];
        let rep = foliation::classify(&surf.spec, surf.cs(), &x0).unwrap();
        let tr = trace_to(surf, start, &x0);
        let lam = foliation::expansion_check(&rep, &tr, surf.cs()).unwrap();
        worst = worst.max((lam - want).abs());
        lines.push(format!("{name} {lam:.5}"));
    }
    let pass = worst <= 0.02 && t0.elapsed().as_secs_f64() < 30.0;
    report("5", pass, t0, format!("max |lambda - expected| = {worst:.2e} [{}]", lines.join(", ")));
    assert!(pass);
}

#[test]
fn criterion_6_accessibility() {
    let t0 = Instant::now();
    let focus = models::paraboloid(1.0).unwrap();
    let node = models::hyperbolic_paraboloid(0.25).unwrap();
    let saddle = models::hyperbolic_paraboloid(1.0).unwrap();
    let cases = [
        ("focus", &focus, [0.5, 0.2, 0.29], Verdict::Inaccessible),
        ("node x-axis", &node, [1.0, 0.0, 0.0], Verdict::Inaccessible),
        ("node y-axis", &node, [0.0, 1.0, 0.0], Verdict::Inaccessible),
        ("node generic", &node, [0.6, 0.6, 0.09], Verdict::Inaccessible),
        ("saddle x-axis", &saddle, [1.0, 0.0, 0.0], Verdict::Accessible),
        ("saddle y-axis", &saddle, [0.0, 1.0, 0.0], Verdict::Accessible),
    ];
    let mut pass = true;
    let mut lines = Vec::new();
    for (name, surf, start, want) in cases {
        let (spec, rep) = traced_leaf_process(surf, &hpt(start), 20.0).unwrap();
        let r = classify_boundary(&spec, Side::Lower, Some(&rep), 0.05).unwrap();
        let ok = r.eigen_verdict == Some(want) && r.numeric_verdict == want && !r.disagreement && !r.unreliable_fit;
        pass &= ok;
        lines.push(format!("{name} {:?} q={:.3}", r.verdict, r.fitted_q));
    }
    pass &= t0.elapsed().as_secs_f64() < 10.0;
    report("6", pass, t0, lines.join(", "));
    assert!(pass);
}

const MASTER_SEED: u64 = 0;

struct Battery {
    bessel3: SimReport,
    saddle: SimReport,
    node: SimReport,
    legendre: SimReport,
    legendre_oracle: SimReport,
}

impl Battery {
    fn all(&self) -> [(&str, &SimReport); 5] {
        [
            ("bessel3", &self.bessel3),
            ("saddle", &self.saddle),
            ("node", &self.node),
            ("legendre", &self.legendre),
            ("legendre-oracle", &self.legendre_oracle),
        ]
    }
}

fn leaf(surf: NamedSurface, start: [f64; 3]) -> LeafDiffusionSpec {
    traced_leaf_process(&surf, &hpt(start), 20.0).unwrap().0
}

fn run_battery(threads: usize) -> Battery {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        let base = SimConfig {
            dt: 1e-4,
            t_max: 10.0,
            n_paths: 10_000,
            kill_radius: 1e-3,
            master_seed: MASTER_SEED,
            s0: 1.0,
        };
        let run = |spec: &LeafDiffusionSpec, cfg: SimConfig| diffusion::run(spec, &cfg).unwrap().0;
        let legendre = reference_process(ReferenceKind::Legendre3, 1.0).unwrap();
        Battery {
            bessel3: run(&reference_process(ReferenceKind::Bessel3, 0.0).unwrap(), base),
            // The leaf is traced from x = 6 so that leaving through the far
            // end, with probability (s0 / 6)^3, stays negligible.
            saddle: run(&leaf(models::hyperbolic_paraboloid(1.0).unwrap(), [6.0, 0.0, 0.0]), SimConfig { s0: 0.5, ..base }),
            node: run(&leaf(models::hyperbolic_paraboloid(0.25).unwrap(), [0.6, 0.6, 0.09]), SimConfig { s0: 0.5, ..base }),
            legendre: run(&legendre, SimConfig { s0: FRAC_PI_2, ..base }),
            legendre_oracle: run(
                &legendre,
                SimConfig { s0: FRAC_PI_2, dt: 1e-5, n_paths: 1000, master_seed: MASTER_SEED + 1, ..base },
            ),
        }
    })
}

fn battery() -> &'static (Battery, f64) {
    static B: OnceLock<(Battery, f64)> = OnceLock::new();
    B.get_or_init(|| {
        let t = Instant::now();
        let b = run_battery(1);
        (b, t.elapsed().as_secs_f64())
    })
}

#[test]
fn criterion_7_monte_carlo() {
    let t0 = Instant::now();
    let (b, secs) = battery();
    let (lo, hi) = b.bessel3.wilson_ci_95;
    let i = lo <= 1e-3 && 1e-3 <= hi;
    let ii = b.saddle.hit_fraction >= 0.99;
    let iii = b.node.hit_fraction <= 0.01;
    let iv = (0..2).all(|k| {
        let (lo, hi) = b.legendre_oracle.wilson_ci_95_by_endpoint[k];
        (lo..=hi).contains(&b.legendre.hit_fraction_by_endpoint[k])
    });
    let pass = i && ii && iii && iv && *secs < 300.0;
    report(
        "7",
        pass,
        t0,
        format!(
            "(i) bessel3 {:.1e} ci [{lo:.2e}, {hi:.2e}]: {i}; (ii) saddle {:.4}: {ii}; (iii) node {:.4}: {iii}; \
             (iv) legendre {:?} oracle ci {:?}: {iv}; battery {secs:.1} s",
            b.bessel3.hit_fraction,
            b.saddle.hit_fraction,
            b.node.hit_fraction,
            b.legendre.hit_fraction_by_endpoint,
            b.legendre_oracle.wilson_ci_95_by_endpoint,
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_8_reproducibility() {
    let t0 = Instant::now();
    let (one, _) = battery();
    let three = run_battery(3);
    let mut differing = Vec::new();
    for ((name, a), (_, b)) in one.all().iter().zip(three.all().iter()) {
        if a.deterministic_json().unwrap() != b.deterministic_json().unwrap() {
            differing.push(*name);
        }
    }
    let pass = differing.is_empty();
    report("8", pass, t0, format!("5 reports, 1 vs 3 threads, differing: {differing:?}"));
    assert!(pass);
}

#[test]
fn criterion_9_model_space_drift() {
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    let mut n = 0;
    for kappa in [-4.0, 0.0, 4.0] {
        let surf = models::canonical_exp_surface(kappa, 1.0).unwrap();
        let target = surf.char_points_expected[0];
        for theta in [0.3, 2.0, 4.4] {
            let start = models::exp_point(&surf.model, 1.4, theta).unwrap();
            let tr = trace_to(&surf, &start, &target);
            let rep = foliation::classify(&surf.spec, surf.cs(), &target).unwrap();
            let spec = LeafDiffusionSpec::from_trace(&tr, &rep, surf.cs()).unwrap();
            let diffusion::DriftModel::Tabulated { g } = &spec.drift else { unreachable!() };
            for (d, gd) in g.x.iter().zip(&g.y) {
                if (0.2..=1.2).contains(d) {
                    n += 1;
                    worst = worst.max((gd / d - models::theorem_drift(kappa, 1.0, *d)).abs());
                }
            }
        }
    }
    let pass = n > 0 && worst <= 1e-4 && t0.elapsed().as_secs_f64() < 60.0;
    report("9", pass, t0, format!("{n} samples on r in [0.2, 1.2], max |b - table| = {worst:.2e}"));
    assert!(pass);
}
