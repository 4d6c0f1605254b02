use std::f64::consts::PI;
use std::path::PathBuf;

use anyhow::{Context, Result};
use foliation_core::diffusion::{self, SimConfig, Side};
use foliation_core::foliation::{self, PointClass, StopRule};
use foliation_core::geometry::{ChartPoint, Vec4};
use foliation_core::models::{self, NamedSurface};
use foliation_core::{io, operators};
use serde_json::json;

use crate::config::{self, RunConfig, SurfaceConfig};
use crate::output::Output;
use crate::{Cli, Command, LeafArgs, SurfaceArgs, UsageError, EXIT_DEGENERATE, EXIT_NUMERICAL};

const DEFAULT_EPS: [f64; 5] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5];
/// Orders computed from errors below this are rounding noise.
const ORDER_NOISE_FLOOR: f64 = 1e-12;
const MIN_ORDER: f64 = 0.5;

pub fn dispatch(cli: Cli) -> Result<u8> {
    let cfg = match &cli.config {
        Some(p) => config::load(p)?,
        None => RunConfig::default(),
    };
    let seed = cli.seed.or(cfg.master_seed).unwrap_or(0);
    let dir = cli.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("foliate-out"));
    match cli.command {
        Command::ListModels => {
            println!("{}", serde_json::to_string_pretty(&models::registry())?);
            Ok(0)
        }
        Command::Classify { surface } => {
            let s = resolve_surface(&cfg, &surface)?;
            classify(&s, output(dir, "classify", seed, &s)?)
        }
        Command::Trace { surface, starts, leaves, radius, step, max_length, direction } => {
            let s = resolve_surface(&cfg, &surface)?;
            let sec = cfg.trace.clone().unwrap_or_default();
            let starts: Vec<Vec<f64>> = if !starts.is_empty() {
                starts.iter().map(|t| config::parse_coords(t)).collect::<Result<_>>()?
            } else {
                sec.starts.clone()
            };
            let opts = TraceOpts {
                starts,
                leaves: leaves.or(sec.leaves),
                radius: radius.or(sec.radius).unwrap_or(0.8),
                step: step.or(sec.step).unwrap_or(0.01),
                max_length: max_length.or(sec.max_length).unwrap_or(5.0),
                direction: direction.or(sec.direction).unwrap_or(1),
            };
            let starts = trace_starts(&s, &opts)?;
            trace(&s, &starts, &opts, output(dir, "trace", seed, &s)?)
        }
        Command::Ops { surface, eps, n_points } => {
            let s = resolve_surface(&cfg, &surface)?;
            let sec = cfg.ops.clone().unwrap_or_default();
            let eps = eps_list(eps.as_deref(), sec.eps.as_deref())?;
            let radius = sec.bump_radius.unwrap_or(0.4);
            if !(radius > 0.0) {
                return Err(UsageError(format!("bump_radius must be positive, got {radius}")).into());
            }
            let center = match &sec.bump_center {
                Some(c) => project(&s, c)?,
                None => offset_point(&s, 0.6, 0.0)?,
            };
            let points = if sec.points.is_empty() {
                bump_points(&s, &center, radius, n_points.or(sec.n_points).unwrap_or(20))?
            } else {
                sec.points.iter().map(|p| project(&s, p)).collect::<Result<_>>()?
            };
            ops(&s, &center, radius, &points, &eps, output(dir, "ops", seed, &s)?)
        }
        Command::Curvature { surface, eps, n_points } => {
            let s = resolve_surface(&cfg, &surface)?;
            let sec = cfg.curvature.clone().unwrap_or_default();
            let eps = eps_list(eps.as_deref(), sec.eps.as_deref())?;
            let points = if sec.points.is_empty() {
                ring_points(&s, n_points.or(sec.n_points).unwrap_or(20), 0.3, 1.2)?
            } else {
                sec.points.iter().map(|p| project(&s, p)).collect::<Result<_>>()?
            };
            let mut out = output(dir, "curvature", seed, &s)?;
            curvature(&s, &points, &eps, &mut out)?;
            out.finish(0)
        }
        Command::Sim { surface, leaf, process, s0, paths, dt, t_max, kill_radius, hit_times } => {
            let sec = cfg.sim.clone().unwrap_or_default();
            let defaults = SimConfig::default();
            let sim = SimConfig {
                dt: dt.or(sec.dt).unwrap_or(defaults.dt),
                t_max: t_max.or(sec.t_max).unwrap_or(defaults.t_max),
                n_paths: paths.or(sec.n_paths).unwrap_or(defaults.n_paths),
                kill_radius: kill_radius.or(sec.kill_radius).unwrap_or(defaults.kill_radius),
                master_seed: seed,
                s0: s0.or(sec.s0).unwrap_or(defaults.s0),
            };
            let hit_times = hit_times || sec.hit_times.unwrap_or(false);
            match process.or(sec.process.clone()) {
                Some(p) => {
                    let kind = config::parse_process(&p)?;
                    let k = surface.k.or(sec.k).unwrap_or(1.0);
                    let spec = diffusion::reference_process(kind, k)?;
                    let mut out = Output::new(dir, "sim", seed)?;
                    out.manifest.params.insert("k".into(), k);
                    simulate(&spec, &sim, hit_times, out)
                }
                None => {
                    let s = resolve_surface(&cfg, &surface)?;
                    let leaf = merge_leaf(&leaf, sec.leaf.as_deref(), sec.start.as_deref(), sec.leaf_distance)?;
                    let start = leaf_start(&s, &leaf)?;
                    let (spec, _) = diffusion::traced_leaf_process(&s, &start, 20.0)?;
                    simulate(&spec, &sim, hit_times, output(dir, "sim", seed, &s)?)
                }
            }
        }
        Command::Boundary { surface, leaf, delta } => {
            let s = resolve_surface(&cfg, &surface)?;
            let sec = cfg.boundary.clone().unwrap_or_default();
            let leaf = merge_leaf(&leaf, sec.leaf.as_deref(), sec.start.as_deref(), sec.leaf_distance)?;
            let delta = delta.or(sec.delta).unwrap_or(0.05);
            boundary(&s, &leaf, delta, output(dir, "boundary", seed, &s)?)
        }
    }
}

fn output(dir: PathBuf, command: &str, seed: u64, s: &NamedSurface) -> Result<Output> {
    let mut out = Output::new(dir, command, seed)?;
    out.manifest.surface = Some(s.name.clone());
    out.manifest.params = s.params.clone();
    Ok(out)
}

fn resolve_surface(cfg: &RunConfig, args: &SurfaceArgs) -> Result<NamedSurface> {
    let mut sc: SurfaceConfig = cfg.surface.clone().unwrap_or_default();
    if let Some(name) = &args.surface {
        if sc.name.as_ref() != Some(name) {
            sc.params.clear();
        }
        sc.name = Some(name.clone());
        sc.custom = None;
    }
    let flags = [("a", args.a), ("c", args.c), ("k", args.k), ("kappa", args.kappa)];
    for (key, v) in flags {
        if let Some(v) = v {
            if sc.custom.is_some() {
                return Err(UsageError(format!("--{key} does not apply to a custom surface")).into());
            }
            sc.params.insert(key.into(), v);
        }
    }
    let s = sc.build()?;
    for w in &s.warnings {
        eprintln!("warning: {w}");
    }
    Ok(s)
}

fn eps_list(flag: Option<&str>, cfg: Option<&[f64]>) -> Result<Vec<f64>> {
    let eps = match (flag, cfg) {
        (Some(f), _) => config::parse_coords(f)?,
        (None, Some(c)) => c.to_vec(),
        (None, None) => DEFAULT_EPS.to_vec(),
    };
    if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0)) || eps.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(UsageError(format!("eps list must be positive and strictly decreasing, got {eps:?}")).into());
    }
    Ok(eps)
}

fn project(s: &NamedSurface, coords: &[f64]) -> Result<ChartPoint> {
    let dim = s.spec.chart.dim();
    if coords.len() != dim {
        return Err(UsageError(format!("point {coords:?} needs {dim} coordinates on this surface")).into());
    }
    let mut raw: Vec4 = [0.0; 4];
    raw[..dim].copy_from_slice(coords);
    Ok(foliation::project_to_surface(&s.spec, &raw)?)
}

/// The characteristic point that leaves, rings and bumps are placed around.
fn anchor(s: &NamedSurface) -> ChartPoint {
    s.char_points_expected.first().copied().unwrap_or_else(|| s.model.identity())
}

/// Projection of `anchor + r (cos t, sin t, 0, 0)` onto the surface.
fn offset_point(s: &NamedSurface, r: f64, t: f64) -> Result<ChartPoint> {
    let mut raw = anchor(s).coords;
    raw[0] += r * t.cos();
    raw[1] += r * t.sin();
    Ok(foliation::project_to_surface(&s.spec, &raw)?)
}

/// Low-discrepancy (R2 sequence) points in the annulus `r_min..r_max` around
/// the anchor, kept only where the surface is clearly non-characteristic.
fn ring_points(s: &NamedSurface, n: usize, r_min: f64, r_max: f64) -> Result<Vec<ChartPoint>> {
    const G1: f64 = 0.754_877_666_246_692_8;
    const G2: f64 = 0.569_840_290_998_053_2;
    let mut pts = Vec::with_capacity(n);
    for j in 1..=20 * n {
        if pts.len() == n {
            break;
        }
        let (u, v) = ((j as f64 * G1).fract(), (j as f64 * G2).fract());
        let Ok(p) = offset_point(s, r_min + (r_max - r_min) * u, 2.0 * PI * v) else { continue };
        if foliation::criterion(&s.spec, s.cs(), &p).is_ok_and(|c| c >= 0.05) {
            pts.push(p);
        }
    }
    if pts.len() < n {
        return Err(UsageError(format!("found only {} of {n} usable sample points", pts.len())).into());
    }
    Ok(pts)
}

fn bump_points(s: &NamedSurface, center: &ChartPoint, radius: f64, n: usize) -> Result<Vec<ChartPoint>> {
    const G1: f64 = 0.754_877_666_246_692_8;
    const G2: f64 = 0.569_840_290_998_053_2;
    let mut pts = Vec::with_capacity(n);
    for j in 1..=20 * n {
        if pts.len() == n {
            break;
        }
        let (u, v) = ((j as f64 * G1).fract(), (j as f64 * G2).fract());
        let r = 0.9 * radius * u.sqrt();
        let mut raw = center.coords;
        raw[0] += r * (2.0 * PI * v).cos();
        raw[1] += r * (2.0 * PI * v).sin();
        let Ok(p) = foliation::project_to_surface(&s.spec, &raw) else { continue };
        if p.dist(center) < 0.9 * radius && foliation::criterion(&s.spec, s.cs(), &p).is_ok_and(|c| c >= 0.05) {
            pts.push(p);
        }
    }
    if pts.len() < n {
        return Err(UsageError(format!("found only {} of {n} usable points inside the bump", pts.len())).into());
    }
    Ok(pts)
}

fn classify(s: &NamedSurface, out: Output) -> Result<u8> {
    let mut out = out;
    let mut seeds = foliation::lattice_seeds(s.spec.chart, s.search_half_width, 7);
    seeds.extend(s.char_points_expected.iter().copied());
    let search = foliation::find_characteristic_points(&s.spec, s.cs(), &seeds);
    let reports = search
        .points
        .iter()
        .map(|p| foliation::classify(&s.spec, s.cs(), p))
        .collect::<foliation_core::Result<Vec<_>>>()?;
    for r in &reports {
        let ev: Vec<String> = r.eigenvalues.iter().map(|z| format!("{:.6}{:+.6}i", z.re, z.im)).collect();
        println!("{:?} at {:?}: eigenvalues [{}]", r.class, r.location.x(), ev.join(", "));
    }
    if reports.is_empty() {
        println!("no characteristic points found");
    }
    out.json(
        "classify.json",
        "characteristic point reports",
        &json!({
            "surface": s.name,
            "params": s.params,
            "points": reports,
            "seeds": seeds.len(),
            "seed_failures": search.failures.len(),
        }),
    )?;
    let degenerate_only = !reports.is_empty() && reports.iter().all(|r| r.class == PointClass::Degenerate);
    out.finish(if degenerate_only { EXIT_DEGENERATE } else { 0 })
}

struct TraceOpts {
    starts: Vec<Vec<f64>>,
    leaves: Option<usize>,
    radius: f64,
    step: f64,
    max_length: f64,
    direction: i8,
}

fn trace_starts(s: &NamedSurface, o: &TraceOpts) -> Result<Vec<Vec<f64>>> {
    if !o.starts.is_empty() {
        return Ok(o.starts.clone());
    }
    match o.leaves {
        Some(n) if n > 0 => (0..n)
            .map(|i| Ok(offset_point(s, o.radius, 2.0 * PI * i as f64 / n as f64)?.x().to_vec()))
            .collect(),
        _ => Err(UsageError("no leaf starts: give --start, --leaves N or trace.starts in the config".into()).into()),
    }
}

fn trace(s: &NamedSurface, starts: &[Vec<f64>], o: &TraceOpts, mut out: Output) -> Result<u8> {
    let stop = StopRule { max_length: o.max_length, ..s.stop };
    let mut summary = Vec::new();
    for (i, start) in starts.iter().enumerate() {
        let res = project(s, start)
            .and_then(|p| Ok(foliation::trace_leaf(&s.spec, s.cs(), &p, o.direction, o.step, stop)?));
        match res {
            Ok(t) => {
                let name = format!("leaf_{i}.csv");
                out.file(&name, "leaf trace: s, coords, b, unit field", |p| t.save_csv(p))?;
                summary.push(json!({
                    "index": i, "start": start, "file": name, "samples": t.len(),
                    "length": t.length(), "direction": t.direction, "terminated_by": t.terminated_by,
                }));
            }
            Err(e) => {
                eprintln!("leaf {i} from {start:?} failed: {e:#}");
                summary.push(json!({ "index": i, "start": start, "error": format!("{e:#}") }));
            }
        }
    }
    let ok = summary.iter().filter(|v| v.get("file").is_some()).count();
    println!("traced {ok} of {} leaves", starts.len());
    out.json("trace.json", "per-leaf summary", &summary)?;
    out.finish(if ok == 0 { EXIT_NUMERICAL } else { 0 })
}

fn curvature(s: &NamedSurface, points: &[ChartPoint], eps: &[f64], out: &mut Output) -> Result<f64> {
    let samples = operators::curvature_sweep(&s.spec, s.cs(), points, eps).context("curvature sweep")?;
    let max_res = samples.iter().map(|c| c.riccati_residual.abs()).fold(0.0, f64::max);
    out.file("curvature.csv", "K_eps per eps, K_0 and Riccati residual per point", |p| {
        io::write_atomic(p, |w| operators::write_curvature_csv(&samples, w))
    })?;
    out.json(
        "curvature.json",
        "curvature summary",
        &json!({ "n_points": samples.len(), "eps": eps, "max_riccati_residual": max_res }),
    )?;
    println!("riccati max residual: {max_res:.3e} over {} points", samples.len());
    Ok(max_res)
}

fn ops(
    s: &NamedSurface,
    center: &ChartPoint,
    radius: f64,
    points: &[ChartPoint],
    eps: &[f64],
    mut out: Output,
) -> Result<u8> {
    let f = operators::bump(center.coords, radius);
    let rep = operators::convergence_study(&s.spec, s.cs(), &f, points, eps).context("convergence study")?;
    let dir = out.dir.clone();
    out.file("convergence.csv", "|Delta_eps f - Delta_0 f| per point and eps", |p| {
        rep.save(p, &dir.join("convergence.json"))
    })?;
    out.manifest.artifacts.push(crate::output::Artifact {
        path: "convergence.json".into(),
        kind: "json".into(),
        description: "max error per eps and empirical orders".into(),
    });
    for (e, m) in rep.eps.iter().zip(&rep.max_error_per_eps) {
        println!("eps {e:.0e}: max error {m:.3e}");
    }
    let orders: Vec<f64> = (1..rep.eps.len())
        .filter(|&i| rep.max_error_per_eps[i] > ORDER_NOISE_FLOOR)
        .map(|i| rep.empirical_order[i - 1])
        .collect();
    println!("empirical orders: {:?}", rep.empirical_order);
    curvature(s, points, eps, &mut out)?;
    if let Some(bad) = orders.iter().find(|o| !(**o >= MIN_ORDER)) {
        eprintln!("empirical order {bad:.3} below {MIN_ORDER}");
        return out.finish(EXIT_NUMERICAL);
    }
    out.finish(0)
}

/// Resolved leaf choice for `sim` and `boundary`.
struct Leaf {
    kind: Option<String>,
    start: Option<Vec<f64>>,
    distance: f64,
}

fn merge_leaf(args: &LeafArgs, leaf: Option<&str>, start: Option<&[f64]>, distance: Option<f64>) -> Result<Leaf> {
    let start = match &args.start {
        Some(s) => Some(config::parse_coords(s)?),
        None => start.map(<[f64]>::to_vec),
    };
    Ok(Leaf {
        kind: args.leaf.clone().or(leaf.map(String::from)),
        start,
        distance: args.leaf_distance.or(distance).unwrap_or(1.0),
    })
}

fn leaf_start(s: &NamedSurface, leaf: &Leaf) -> Result<ChartPoint> {
    if let Some(c) = &leaf.start {
        return project(s, c);
    }
    if s.char_points_expected.is_empty() {
        return Err(UsageError(format!("{} has no characteristic points to diffuse into", s.name)).into());
    }
    if !(leaf.distance > 0.0) {
        return Err(UsageError(format!("leaf distance must be positive, got {}", leaf.distance)).into());
    }
    let angle = match leaf.kind.as_deref().unwrap_or("generic") {
        "x-axis" => 0.0,
        "y-axis" => PI / 2.0,
        "generic" => PI / 4.0,
        other => return Err(UsageError(format!("unknown leaf '{other}' (x-axis, y-axis or generic)")).into()),
    };
    offset_point(s, leaf.distance, angle)
}

fn simulate(spec: &diffusion::LeafDiffusionSpec, cfg: &SimConfig, hit_times: bool, mut out: Output) -> Result<u8> {
    cfg.validate(spec)?;
    let (rep, outcomes) = diffusion::run(spec, cfg)?;
    out.json("sim.json", "simulation report", &rep)?;
    if hit_times {
        out.file("hit_times.csv", "per-path outcome and first-hit time", |p| {
            io::write_atomic(p, |w| diffusion::write_hit_times_csv(&outcomes, w))
        })?;
    }
    println!(
        "{}: hit fraction {:.6} (95% CI [{:.6}, {:.6}]) over {} paths in {:.1} s",
        spec.name, rep.hit_fraction, rep.wilson_ci_95.0, rep.wilson_ci_95.1, cfg.n_paths, rep.wall_time_s
    );
    out.finish(0)
}

fn boundary(s: &NamedSurface, leaf: &Leaf, delta: f64, mut out: Output) -> Result<u8> {
    if !(delta > 0.0) {
        return Err(UsageError(format!("delta must be positive, got {delta}")).into());
    }
    let start = leaf_start(s, leaf)?;
    let (spec, report) = diffusion::traced_leaf_process(s, &start, 20.0)?;
    let b = diffusion::classify_boundary(&spec, Side::Lower, Some(&report), delta)?;
    println!(
        "{:?} ({:?}): lambda {:?}, fitted q {:.4}",
        b.verdict, b.method, b.lambda_exponent, b.fitted_q
    );
    out.json(
        "boundary.json",
        "boundary classification at the characteristic end of the leaf",
        &json!({ "start": start, "characteristic_point": report, "leaf": spec, "boundary": b }),
    )?;
    out.finish(0)
}
