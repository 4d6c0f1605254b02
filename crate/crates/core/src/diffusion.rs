//! One-dimensional leaf diffusions `dS = b(S)/2 dt + dW`.
//!
//! A leaf process lives on an interval whose endpoints are either
//! characteristic points (where it is killed on arrival) or the edge of the
//! traced part of the leaf. Killing is regularized: a path is absorbed once it
//! comes within `kill_radius` of a characteristic endpoint, and between grid
//! times the Brownian-bridge crossing probability is used so that crossings
//! inside a step are not missed.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::foliation::{self, CharacteristicPointReport, LeafTrace, PointClass, StopRule, Termination};
use crate::geometry::{self, ChartPoint, ContactStructure, Vec4};
use crate::models::{self, NamedSurface};
use crate::quadrature;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Horizontal-gradient norm at which leaf traces for diffusion specs stop.
pub const LEAF_CHAR_TOL: f64 = 1e-7;

/// Monotone piecewise-cubic Hermite interpolant (Fritsch-Carlson slopes).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pchip {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub slopes: Vec<f64>,
}

impl Pchip {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(Error::InsufficientSamples(format!("{n} interpolation knots")));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("knots must be strictly increasing".into()));
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let del: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut m = vec![0.0; n];
        if n == 2 {
            m[0] = del[0];
            m[1] = del[0];
        } else {
            for i in 1..n - 1 {
                if del[i - 1] * del[i] > 0.0 {
                    let w1 = 2.0 * h[i] + h[i - 1];
                    let w2 = h[i] + 2.0 * h[i - 1];
                    m[i] = (w1 + w2) / (w1 / del[i - 1] + w2 / del[i]);
                }
            }
            m[0] = end_slope(h[0], h[1], del[0], del[1]);
            m[n - 1] = end_slope(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
        }
        Ok(Pchip { x, y, slopes: m })
    }

    /// Value at `t`, clamped to the end values outside the knot range.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.y[0];
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let i = self.x.partition_point(|&v| v <= t) - 1;
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.y[i] + h10 * h * self.slopes[i] + h01 * self.y[i + 1] + h11 * h * self.slopes[i + 1]
    }
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && m.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        m
    }
}

/// Drift `b(s)` of a leaf process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DriftModel {
    /// `2 / s`.
    Bessel3,
    /// `2k cot(ks)`.
    Legendre3 { k: f64 },
    /// `2k coth(ks)`.
    HyperbolicBessel3 { k: f64 },
    /// `(nu - 1) / s`.
    BesselOrder { nu: f64 },
    /// `g(s) / s` with `g` interpolated from samples of `b(s) s`; below the
    /// first knot `g` is held constant.
    Tabulated { g: Pchip },
}

impl DriftModel {
    #[inline]
    pub fn b(&self, s: f64) -> f64 {
        match self {
            DriftModel::Bessel3 => 2.0 / s,
            DriftModel::Legendre3 { k } => 2.0 * k / (k * s).tan(),
            DriftModel::HyperbolicBessel3 { k } => 2.0 * k / (k * s).tanh(),
            DriftModel::BesselOrder { nu } => (nu - 1.0) / s,
            DriftModel::Tabulated { g } => g.eval(s) / s,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryLabel {
    CharacteristicPoint,
    DomainEdge,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Lower,
    Upper,
}

/// A diffusion on an interval of a leaf.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafDiffusionSpec {
    pub name: String,
    pub drift: DriftModel,
    #[serde(with = "crate::io::extended_pair")]
    pub domain: (f64, f64),
    pub labels: [BoundaryLabel; 2],
    /// Ambient direction in which the leaf enters the lower endpoint, when
    /// the spec comes from a traced leaf.
    pub approach: Option<Vec4>,
}

impl LeafDiffusionSpec {
    pub fn b(&self, s: f64) -> f64 {
        self.drift.b(s)
    }

    /// Drift in the distance `d` from the given endpoint.
    pub fn b_from(&self, side: Side, d: f64) -> f64 {
        match side {
            Side::Lower => self.b(self.domain.0 + d),
            Side::Upper => -self.b(self.domain.1 - d),
        }
    }

    pub fn label(&self, side: Side) -> BoundaryLabel {
        match side {
            Side::Lower => self.labels[0],
            Side::Upper => self.labels[1],
        }
    }

    /// Builds the process on a leaf traced into a characteristic point.
    ///
    /// The coordinate is the arc-length distance `d` to the point, so the
    /// lower endpoint `d = 0` is the characteristic point and the upper one
    /// is the start of the trace.
    pub fn from_trace(
        trace: &LeafTrace,
        report: &CharacteristicPointReport,
        cs: &ContactStructure,
    ) -> Result<Self> {
        if trace.terminated_by != Termination::NearCharacteristicPoint {
            return Err(Error::InvalidParameter("trace does not end at a characteristic point".into()));
        }
        let last = trace.samples.last().expect("nonempty trace");
        let gap = geometry::sub(&last.point.coords, &report.location.coords);
        let c = cs.decompose(&report.location, &gap)?;
        let tail = c[0].hypot(c[1]);
        let sign = -(trace.direction as f64);
        let mut knots: Vec<(f64, f64)> = trace
            .samples
            .iter()
            .map(|sm| {
                let d = last.s - sm.s + tail;
                (d, sign * sm.b * d)
            })
            .collect();
        knots.reverse();
        knots.dedup_by(|a, b| a.0 <= b.0);
        let (x, y): (Vec<f64>, Vec<f64>) = knots.into_iter().unzip();
        let upper = *x.last().expect("knots");
        let approach = geometry::scale(&last.hat_x, trace.direction as f64);
        Ok(LeafDiffusionSpec {
            name: "traced-leaf".into(),
            drift: DriftModel::Tabulated { g: Pchip::new(x, y)? },
            domain: (0.0, upper),
            labels: [BoundaryLabel::CharacteristicPoint, BoundaryLabel::DomainEdge],
            approach: Some(approach),
        })
    }
}

/// Traces the leaf of `surface` through `start` into the characteristic
/// point nearest to it and returns the leaf process with the point's report.
pub fn traced_leaf_process(
    surface: &NamedSurface,
    start: &ChartPoint,
    max_length: f64,
) -> Result<(LeafDiffusionSpec, CharacteristicPointReport)> {
    let cs = surface.cs();
    let target = surface
        .char_points_expected
        .iter()
        .min_by(|a, b| a.dist(start).total_cmp(&b.dist(start)))
        .ok_or_else(|| Error::InvalidParameter(format!("{} has no characteristic points", surface.name)))?;
    let report = foliation::classify(&surface.spec, cs, target)?;
    let stop = StopRule { max_length, char_tol: LEAF_CHAR_TOL, ..surface.stop };
    let trace = foliation::trace_into(&surface.spec, cs, start, target, 0.01, stop)?;
    if trace.terminated_by != Termination::NearCharacteristicPoint {
        return Err(Error::InvalidParameter(format!(
            "leaf through {:?} does not reach the characteristic point within length {max_length}",
            start.x()
        )));
    }
    let mut spec = LeafDiffusionSpec::from_trace(&trace, &report, cs)?;
    spec.name = format!("{}-leaf", surface.name);
    Ok((spec, report))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ReferenceKind {
    Bessel3,
    Legendre3,
    HyperbolicBessel3,
    BesselOrder { nu: f64 },
}

/// Closed-form reference processes from the model-space drift table.
pub fn reference_process(kind: ReferenceKind, k: f64) -> Result<LeafDiffusionSpec> {
    use BoundaryLabel::*;
    let needs_k = matches!(kind, ReferenceKind::Legendre3 | ReferenceKind::HyperbolicBessel3);
    if needs_k && !(k > 0.0 && k.is_finite()) {
        return Err(Error::InvalidParameter(format!("k must be positive, got {k}")));
    }
    let (name, drift, domain, labels) = match kind {
        ReferenceKind::Bessel3 => ("bessel3", DriftModel::Bessel3, (0.0, f64::INFINITY), [CharacteristicPoint, DomainEdge]),
        ReferenceKind::Legendre3 => (
            "legendre3",
            DriftModel::Legendre3 { k },
            (0.0, PI / k),
            [CharacteristicPoint, CharacteristicPoint],
        ),
        ReferenceKind::HyperbolicBessel3 => (
            "hyperbolic-bessel3",
            DriftModel::HyperbolicBessel3 { k },
            (0.0, f64::INFINITY),
            [CharacteristicPoint, DomainEdge],
        ),
        ReferenceKind::BesselOrder { nu } => {
            if !nu.is_finite() {
                return Err(Error::InvalidParameter(format!("order must be finite, got {nu}")));
            }
            ("bessel", DriftModel::BesselOrder { nu }, (0.0, f64::INFINITY), [CharacteristicPoint, DomainEdge])
        }
    };
    Ok(LeafDiffusionSpec { name: name.into(), drift, domain, labels, approach: None })
}

/// `h(r)` with `2 h'(r) / h(r)` equal to the model drift: `r`, `sin(kr)`, `sinh(kr)`.
pub fn weighted_laplacian_h(kappa: f64, k: f64, r: f64) -> Result<f64> {
    let (h, dh) = if kappa == 0.0 {
        (r, 1.0)
    } else if kappa > 0.0 {
        ((k * r).sin(), k * (k * r).cos())
    } else {
        ((k * r).sinh(), k * (k * r).cosh())
    };
    let b = models::theorem_drift(kappa, k, r);
    let lhs = 2.0 * dh / h;
    if !((lhs - b).abs() <= 1e-10 * (1.0 + b.abs())) {
        return Err(Error::Domain(format!("2h'/h = {lhs} differs from b = {b} at r = {r}")));
    }
    Ok(h)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub t_max: f64,
    pub n_paths: usize,
    pub kill_radius: f64,
    pub master_seed: u64,
    /// Starting point in the process coordinate.
    pub s0: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { dt: 1e-4, t_max: 10.0, n_paths: 10_000, kill_radius: 1e-3, master_seed: 0, s0: 1.0 }
    }
}

impl SimConfig {
    pub fn validate(&self, spec: &LeafDiffusionSpec) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return bad(format!("t_max must be positive, got {}", self.t_max));
        }
        if self.n_paths == 0 {
            return bad("n_paths must be at least 1".into());
        }
        if !(self.kill_radius > 0.0) {
            return bad(format!("kill_radius must be positive, got {}", self.kill_radius));
        }
        let (lo, hi) = spec.domain;
        if !(self.s0 > lo && self.s0 < hi) {
            return bad(format!("s0 = {} outside the open domain ({lo}, {hi})", self.s0));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PathOutcome {
    Hit { side: Side, time: f64 },
    Survived,
    ExitedFar { time: f64 },
    Aborted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathStats {
    /// Completed (non-aborted) paths.
    pub n_paths: usize,
    pub n_hit: usize,
    pub n_hit_by_endpoint: [usize; 2],
    pub n_survived: usize,
    pub n_exited_far: usize,
    pub n_aborted: usize,
    pub hit_fraction: f64,
    pub hit_fraction_by_endpoint: [f64; 2],
    pub wilson_ci_95: (f64, f64),
    pub wilson_ci_95_by_endpoint: [(f64, f64); 2],
    pub mean_hit_time: Option<f64>,
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_ci(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let den = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / den;
    let half = z / den * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    let lo = if k == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if k == n { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

impl PathStats {
    pub fn from_outcomes(outcomes: &[PathOutcome]) -> Self {
        let mut by = [0usize; 2];
        let (mut surv, mut far, mut ab) = (0, 0, 0);
        let mut tsum = 0.0;
        for o in outcomes {
            match *o {
                PathOutcome::Hit { side, time } => {
                    by[side as usize] += 1;
                    tsum += time;
                }
                PathOutcome::Survived => surv += 1,
                PathOutcome::ExitedFar { .. } => far += 1,
                PathOutcome::Aborted => ab += 1,
            }
        }
        let n_hit = by[0] + by[1];
        let n = n_hit + surv + far;
        let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
        PathStats {
            n_paths: n,
            n_hit,
            n_hit_by_endpoint: by,
            n_survived: surv,
            n_exited_far: far,
            n_aborted: ab,
            hit_fraction: frac(n_hit),
            hit_fraction_by_endpoint: [frac(by[0]), frac(by[1])],
            wilson_ci_95: wilson_ci(n_hit, n, Z95),
            wilson_ci_95_by_endpoint: [wilson_ci(by[0], n, Z95), wilson_ci(by[1], n, Z95)],
            mean_hit_time: (n_hit > 0).then(|| tsum / n_hit as f64),
        }
    }
}

/// The RNG stream of path `i`: the master seed keys ChaCha8 and `i` selects
/// the stream, so paths are independent of execution order.
pub fn path_rng(master_seed: u64, i: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(i);
    rng
}

/// Probability that a Brownian bridge over `dt` from distance `a` to distance
/// `b` touches the barrier; negligible values are returned as zero.
#[inline]
fn crossing_prob(a: f64, b: f64, dt: f64) -> f64 {
    let e = 2.0 * a * b / dt;
    if e > 40.0 {
        0.0
    } else {
        (-e).exp()
    }
}

/// Barrier distance, in units of the local step's standard deviation, below
/// which steps are refined.
const NEAR_BARRIER: f64 = 10.0;

/// Simulates one path.
pub fn simulate_path(spec: &LeafDiffusionSpec, cfg: &SimConfig, i: u64) -> PathOutcome {
    let mut rng = path_rng(cfg.master_seed, i);
    let (lo, hi) = spec.domain;
    let lower_kill = (spec.labels[0] == BoundaryLabel::CharacteristicPoint).then_some(lo + cfg.kill_radius);
    let upper_kill = (spec.labels[1] == BoundaryLabel::CharacteristicPoint).then_some(hi - cfg.kill_radius);
    let upper_edge = (spec.labels[1] == BoundaryLabel::DomainEdge).then_some(hi);
    let n_steps = (cfg.t_max / cfg.dt).round() as u64;
    let sq = cfg.dt.sqrt();
    let mut s = cfg.s0;
    if lower_kill.is_some_and(|l| s <= l) {
        return PathOutcome::Hit { side: Side::Lower, time: 0.0 };
    }
    if upper_kill.is_some_and(|u| s >= u) {
        return PathOutcome::Hit { side: Side::Upper, time: 0.0 };
    }
    // Within a few increments of a killing barrier the step shrinks so that
    // both the Gaussian increment and the drift displacement stay small
    // against the distance; the floor keeps the barrier reachable.
    let h_min = (cfg.kill_radius * 1e-2).powi(2).min(cfg.dt);
    let near = NEAR_BARRIER * sq;
    let mut t = 0.0;
    for step in 1..=n_steps {
        let t_grid = step as f64 * cfg.dt;
        let mut remaining = cfg.dt;
        while remaining > 0.0 {
            let b = spec.drift.b(s);
            if !b.is_finite() {
                return PathOutcome::Aborted;
            }
            let dist = lower_kill.map_or(f64::INFINITY, |l| s - l).min(upper_kill.map_or(f64::INFINITY, |u| u - s));
            let h = if dist >= near {
                remaining
            } else {
                let local = (dist / NEAR_BARRIER).powi(2).min(dist / (NEAR_BARRIER * b.abs()));
                local.max(h_min).min(remaining)
            };
            let z: f64 = rng.sample(StandardNormal);
            let next = s + 0.5 * b * h + h.sqrt() * z;
            if !next.is_finite() {
                return PathOutcome::Aborted;
            }
            remaining -= h;
            if remaining < 1e-15 * cfg.dt {
                remaining = 0.0;
            }
            let now = if remaining == 0.0 { t_grid } else { t + h };
            t = now;
            if let Some(l) = lower_kill {
                if next <= l {
                    return PathOutcome::Hit { side: Side::Lower, time: now };
                }
                let p = crossing_prob(s - l, next - l, h);
                if p > 0.0 && rng.random::<f64>() < p {
                    return PathOutcome::Hit { side: Side::Lower, time: now };
                }
            }
            if let Some(u) = upper_kill {
                if next >= u {
                    return PathOutcome::Hit { side: Side::Upper, time: now };
                }
                let p = crossing_prob(u - s, u - next, h);
                if p > 0.0 && rng.random::<f64>() < p {
                    return PathOutcome::Hit { side: Side::Upper, time: now };
                }
            }
            if let Some(e) = upper_edge {
                if next >= e {
                    return PathOutcome::ExitedFar { time: now };
                }
            }
            s = next;
        }
    }
    PathOutcome::Survived
}

/// Runs all paths on the current rayon pool and reduces in path order.
pub fn simulate_outcomes(spec: &LeafDiffusionSpec, cfg: &SimConfig) -> Result<Vec<PathOutcome>> {
    cfg.validate(spec)?;
    let outcomes: Vec<PathOutcome> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| simulate_path(spec, cfg, i))
        .collect();
    let aborted = outcomes.iter().filter(|o| matches!(o, PathOutcome::Aborted)).count();
    if aborted * 1000 > cfg.n_paths {
        return Err(Error::TooManyAborts { aborted, total: cfg.n_paths });
    }
    Ok(outcomes)
}

pub fn simulate(spec: &LeafDiffusionSpec, cfg: &SimConfig) -> Result<PathStats> {
    Ok(PathStats::from_outcomes(&simulate_outcomes(spec, cfg)?))
}

/// JSON report of a simulation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub spec: LeafDiffusionSpec,
    pub config: SimConfig,
    pub n_hit: usize,
    pub n_hit_by_endpoint: [usize; 2],
    pub n_survived: usize,
    pub n_exited_far: usize,
    pub n_aborted: usize,
    pub hit_fraction: f64,
    pub hit_fraction_by_endpoint: [f64; 2],
    pub wilson_ci_95: (f64, f64),
    pub wilson_ci_95_by_endpoint: [(f64, f64); 2],
    pub mean_hit_time: Option<f64>,
    pub wall_time_s: f64,
}

impl SimReport {
    /// The report without its wall-clock field, for reproducibility checks.
    pub fn deterministic_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(m) = v.as_object_mut() {
            m.remove("wall_time_s");
        }
        Ok(serde_json::to_string(&v)?)
    }
}

/// Simulates and packages the result with its inputs and timing.
pub fn run(spec: &LeafDiffusionSpec, cfg: &SimConfig) -> Result<(SimReport, Vec<PathOutcome>)> {
    let t0 = Instant::now();
    let outcomes = simulate_outcomes(spec, cfg)?;
    let st = PathStats::from_outcomes(&outcomes);
    let rep = SimReport {
        spec: spec.clone(),
        config: *cfg,
        n_hit: st.n_hit,
        n_hit_by_endpoint: st.n_hit_by_endpoint,
        n_survived: st.n_survived,
        n_exited_far: st.n_exited_far,
        n_aborted: st.n_aborted,
        hit_fraction: st.hit_fraction,
        hit_fraction_by_endpoint: st.hit_fraction_by_endpoint,
        wilson_ci_95: st.wilson_ci_95,
        wilson_ci_95_by_endpoint: st.wilson_ci_95_by_endpoint,
        mean_hit_time: st.mean_hit_time,
        wall_time_s: t0.elapsed().as_secs_f64(),
    };
    Ok((rep, outcomes))
}

/// Per-path first-hit times as CSV (`path, outcome, side, time`).
pub fn write_hit_times_csv<W: std::io::Write>(outcomes: &[PathOutcome], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["path", "outcome", "side", "time"])?;
    for (i, o) in outcomes.iter().enumerate() {
        let (kind, side, time) = match *o {
            PathOutcome::Hit { side, time } => ("hit", format!("{side:?}").to_lowercase(), crate::foliation::fmt17(time)),
            PathOutcome::Survived => ("survived", String::new(), String::new()),
            PathOutcome::ExitedFar { time } => ("exited_far", "upper".into(), crate::foliation::fmt17(time)),
            PathOutcome::Aborted => ("aborted", String::new(), String::new()),
        };
        wr.write_record([i.to_string(), kind.to_string(), side, time])?;
    }
    wr.flush()?;
    Ok(())
}

/// `rho(t) = exp(int_t^delta b)` in the distance from the lower endpoint.
pub fn rho(spec: &LeafDiffusionSpec, t: f64, delta: f64) -> Result<f64> {
    rho_from(spec, Side::Lower, t, delta)
}

/// [`rho`] measured from either endpoint.
pub fn rho_from(spec: &LeafDiffusionSpec, side: Side, t: f64, delta: f64) -> Result<f64> {
    if !(t > 0.0 && t <= delta) {
        return Err(Error::InvalidParameter(format!("need 0 < t <= delta, got t = {t}, delta = {delta}")));
    }
    let len = spec.domain.1 - spec.domain.0;
    if delta >= len {
        return Err(Error::InvalidParameter(format!("delta = {delta} exceeds the domain length {len}")));
    }
    let q = quadrature::integrate(|d| spec.b_from(side, d), t, delta, 1e-12, 1e-300)?;
    Ok(q.value.exp())
}

/// An improper integral that is either finite or divergent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum IntegralValue {
    Finite(f64),
    Divergent,
}

impl IntegralValue {
    pub fn is_finite(&self) -> bool {
        matches!(self, IntegralValue::Finite(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Inaccessible,
    Accessible,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    EigenvalueRule,
    NumericIntegral,
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub verdict: Verdict,
    /// `lambda` in `b ~ 1 / (lambda s)`: the eigenvalue when known, else `1 / q`.
    pub lambda_exponent: f64,
    /// Fitted `q` in `rho(t) ~ t^(-q)`.
    pub fitted_q: f64,
    pub fit_r_squared: f64,
    pub integral_rho: IntegralValue,
    /// `int (1 + |b|/2) / rho`.
    pub integral_test1: Option<IntegralValue>,
    /// `int (1 + |b|/2) s(t) / rho` with `s(t) = int_0^t rho`.
    pub integral_test2: Option<IntegralValue>,
    pub method: Method,
    pub eigen_verdict: Option<Verdict>,
    pub numeric_verdict: Verdict,
    pub unreliable_fit: bool,
    pub disagreement: bool,
}

/// Least-squares slope, intercept and `R^2` of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, my - slope * mx, r2)
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// `int_0^delta f` for `f` with a power-law singularity at 0: the exponent is
/// fitted over `[1e-4, 1e-2] delta`, divergence declared when it is at most
/// `-1 + 0.02`, otherwise quadrature on `[1e-6 delta, delta]` plus the
/// power-law tail.
fn improper_integral<F: Fn(f64) -> Result<f64>>(f: F, delta: f64) -> Result<IntegralValue> {
    let ts = log_grid(1e-4 * delta, 1e-2 * delta, 12);
    let vals = ts.iter().map(|&t| f(t)).collect::<Result<Vec<_>>>()?;
    if vals.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Quadrature("integrand not positive near the endpoint".into()));
    }
    let lx: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let ly: Vec<f64> = vals.iter().map(|v| v.ln()).collect();
    let (p, _, _) = linear_fit(&lx, &ly);
    if p <= -1.0 + 0.02 {
        return Ok(IntegralValue::Divergent);
    }
    let eta = 1e-6 * delta;
    let tail = f(eta)? * eta / (p + 1.0);
    let err = std::cell::RefCell::new(None);
    let body = quadrature::integrate(
        |t| match f(t) {
            Ok(v) => v,
            Err(e) => {
                err.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        },
        eta,
        delta,
        1e-9,
        0.0,
    );
    if let Some(e) = err.into_inner() {
        return Err(e);
    }
    Ok(IntegralValue::Finite(body?.value + tail))
}

/// Eigenvalue governing the approach along `spec`, from a characteristic point report.
pub fn approach_eigenvalue(report: &CharacteristicPointReport, approach: Option<Vec4>) -> Option<f64> {
    match report.class {
        PointClass::EllipticFocus => Some(report.trace / 2.0),
        PointClass::Degenerate => None,
        PointClass::EllipticNode | PointClass::HyperbolicSaddle => {
            let ev = report.real_eigenvalues()?;
            let vecs = report.eigenvectors_ambient?;
            match approach {
                Some(a) => {
                    let na = geometry::norm(&a);
                    let cos = |v: &Vec4| (geometry::dot(v, &a) / na).abs();
                    Some(if cos(&vecs[0]) >= cos(&vecs[1]) { ev[0] } else { ev[1] })
                }
                // A generic leaf of a node leaves along the slower direction.
                None if report.class == PointClass::EllipticNode => Some(ev[0].min(ev[1])),
                None => None,
            }
        }
    }
}

/// Decides whether the process reaches the endpoint `side`.
///
/// The numeric rule fits `log rho(t)` against `log t` over
/// `t in [1e-4, 1e-2] delta`; `int rho` is declared divergent when the fitted
/// exponent `q >= 1 - 0.02`. With a characteristic point report the
/// eigenvalue rule (inaccessible iff `0 < lambda <= 1`) runs as well and any
/// disagreement is flagged.
pub fn classify_boundary(
    spec: &LeafDiffusionSpec,
    side: Side,
    report: Option<&CharacteristicPointReport>,
    delta: f64,
) -> Result<BoundaryReport> {
    if spec.label(side) != BoundaryLabel::CharacteristicPoint {
        return Err(Error::InvalidParameter(format!("{side:?} endpoint is not a characteristic point")));
    }
    let ts = log_grid(1e-4 * delta, 1e-2 * delta, 20);
    let lr = ts.iter().map(|&t| rho_from(spec, side, t, delta).map(f64::ln)).collect::<Result<Vec<_>>>()?;
    let lt: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let (slope, _, r2) = linear_fit(&lt, &lr);
    let q = -slope;
    let divergent = q >= 1.0 - 0.02;
    let numeric_verdict = if divergent { Verdict::Inaccessible } else { Verdict::Accessible };
    let rho_f = |t: f64| rho_from(spec, side, t, delta);
    let (integral_rho, integral_test1, integral_test2) = if divergent {
        (IntegralValue::Divergent, None, None)
    } else {
        let ir = improper_integral(rho_f, delta)?;
        let w = |t: f64| 1.0 + 0.5 * spec.b_from(side, t).abs();
        let t1 = improper_integral(|t| Ok(w(t) / rho_f(t)?), delta)?;
        let s_of = |t: f64| improper_integral(rho_f, t).and_then(|v| match v {
            IntegralValue::Finite(x) => Ok(x),
            IntegralValue::Divergent => Err(Error::Quadrature("s(t) diverges".into())),
        });
        let t2 = improper_integral(|t| Ok(w(t) * s_of(t)? / rho_f(t)?), delta)?;
        (ir, Some(t1), Some(t2))
    };
    let lam = report.and_then(|r| approach_eigenvalue(r, spec.approach));
    let eigen_verdict = lam.map(|l| if l > 0.0 && l <= 1.0 { Verdict::Inaccessible } else { Verdict::Accessible });
    let disagreement = eigen_verdict.is_some_and(|v| v != numeric_verdict);
    Ok(BoundaryReport {
        verdict: eigen_verdict.unwrap_or(numeric_verdict),
        lambda_exponent: lam.unwrap_or(1.0 / q),
        fitted_q: q,
        fit_r_squared: r2,
        integral_rho,
        integral_test1,
        integral_test2,
        method: if eigen_verdict.is_some() { Method::Both } else { Method::NumericIntegral },
        eigen_verdict,
        numeric_verdict,
        unreliable_fit: r2 < 0.999,
        disagreement,
    })
}

/// Finite-horizon hitting probability of the level `r` for Bessel-3 from
/// `s0 > r`: `(r / s0) erfc((s0 - r) / sqrt(2 t))`.
pub fn bessel3_hit_probability(r: f64, s0: f64, t: f64) -> f64 {
    (r / s0) * statrs::function::erf::erfc((s0 - r) / (2.0 * t).sqrt())
}
