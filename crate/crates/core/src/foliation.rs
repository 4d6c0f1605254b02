//! Characteristic points, the unit foliation field and leaf tracing.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    self, apply_jets, decompose_in, ChartId, ChartPoint, ContactStructure, Field, ScalarField, Vec4,
};
use crate::jet::{Jet, MAX_ORDER};

/// Determinant tolerance below which a characteristic point is degenerate.
pub const DEGENERACY_TOL: f64 = 1e-9;
/// Horizontal gradient norm at which tracing stops near a characteristic point.
pub const CHAR_PROXIMITY: f64 = 1e-4;

/// A surface `{u = 0}` in a chart.
#[derive(Clone)]
pub struct SurfaceSpec {
    pub u: Field,
    pub chart: ChartId,
    pub name: String,
}

impl fmt::Debug for SurfaceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SurfaceSpec({}, {})", self.name, self.chart)
    }
}

impl SurfaceSpec {
    pub fn new(name: impl Into<String>, chart: ChartId, u: Field) -> Self {
        SurfaceSpec { u, chart, name: name.into() }
    }

    pub fn u_at(&self, p: &ChartPoint) -> f64 {
        self.u.jet(p.x(), 0).value()
    }

    /// The surface `{-u = 0}`, identical as a set with opposite coorientation.
    pub fn negated(&self) -> SurfaceSpec {
        let u = self.u.clone();
        SurfaceSpec {
            u: Arc::new(Scaled { u, factor: geometry::constant(-1.0) }),
            chart: self.chart,
            name: format!("-({})", self.name),
        }
    }

    /// The surface `{phi * u = 0}` for a nonvanishing `phi`.
    pub fn rescaled(&self, phi: Field) -> SurfaceSpec {
        SurfaceSpec {
            u: Arc::new(Scaled { u: self.u.clone(), factor: phi }),
            chart: self.chart,
            name: format!("phi*({})", self.name),
        }
    }

    /// Minimum gradient norm of `u` over the given points.
    pub fn min_gradient_norm(&self, points: &[ChartPoint]) -> f64 {
        points
            .iter()
            .map(|p| {
                let g = self.u.jet(p.x(), 1).gradient();
                g.iter().map(|v| v * v).sum::<f64>().sqrt()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

struct Scaled {
    u: Field,
    factor: Field,
}

impl ScalarField for Scaled {
    fn jet(&self, p: &[f64], order: usize) -> Jet {
        self.u.jet(p, order) * self.factor.jet(p, order)
    }
}

/// `u / (X0 u)`.
struct Normalized {
    u: Field,
    x0: geometry::VectorField,
}

impl ScalarField for Normalized {
    fn jet(&self, p: &[f64], order: usize) -> Jet {
        if order + 1 > MAX_ORDER {
            return Jet::constant(f64::NAN);
        }
        let u = self.u.jet(p, order + 1);
        let x0u = apply_jets(&self.x0.jets(p, order), &u);
        u.truncate(order) / x0u
    }
}

/// Jets of everything derived from `u` and the frame at a point.
///
/// `u` is expanded to order `n + 1`; all derived quantities carry order `n`.
#[derive(Clone, Debug)]
pub struct SurfaceJets {
    pub order: usize,
    pub u: Jet,
    pub frame: [Vec<Jet>; 3],
    /// `[X1 u, X2 u, X0 u]`.
    pub xu: [Jet; 3],
    /// `sqrt((X1 u)^2 + (X2 u)^2)`.
    pub norm: Jet,
    /// `F1 = alpha X1 + beta X2`.
    pub alpha: Jet,
    pub beta: Jet,
    pub b: Jet,
    pub f1: Vec<Jet>,
    pub jf1: Vec<Jet>,
    pub f2: Vec<Jet>,
}

impl SurfaceJets {
    pub fn at(s: &SurfaceSpec, cs: &ContactStructure, p: &ChartPoint, n: usize) -> Result<Self> {
        if n + 1 > MAX_ORDER {
            return Err(Error::OrderExceeded(n + 1));
        }
        let x = p.x();
        let u = s.u.jet(x, n + 1);
        let frame = cs.frame_jets(x, n);
        let xu = [
            apply_jets(&frame[0], &u),
            apply_jets(&frame[1], &u),
            apply_jets(&frame[2], &u),
        ];
        let norm = (xu[0] * xu[0] + xu[1] * xu[1]).sqrt();
        if !(norm.value() > 1e-12) {
            return Err(Error::CharacteristicPoint(norm.value()));
        }
        let inv = norm.recip();
        let alpha = xu[1] * inv;
        let beta = -xu[0] * inv;
        let b = xu[2] * inv;
        let dim = x.len();
        let f1: Vec<Jet> = (0..dim).map(|k| alpha * frame[0][k] + beta * frame[1][k]).collect();
        let jf1: Vec<Jet> = (0..dim).map(|k| -beta * frame[0][k] + alpha * frame[1][k]).collect();
        let f2: Vec<Jet> = (0..dim).map(|k| b * jf1[k] - frame[2][k]).collect();
        let out = SurfaceJets { order: n, u, frame, xu, norm, alpha, beta, b, f1, jf1, f2 };
        if !(out.u.is_finite() && out.b.is_finite() && out.f2.iter().all(Jet::is_finite)) {
            return Err(Error::Domain(format!("surface jets undefined at {:?}", x)));
        }
        Ok(out)
    }

    pub fn vec(v: &[Jet]) -> Vec4 {
        let mut out = [0.0; 4];
        for (k, j) in v.iter().enumerate() {
            out[k] = j.value();
        }
        out
    }
}

/// `(X1 u, X2 u, X0 u)` at `p`.
pub fn horizontal_gradient(s: &SurfaceSpec, cs: &ContactStructure, p: &ChartPoint) -> Result<[f64; 3]> {
    let u = geometry::eval_jet(&s.u, p, 1)?;
    let f = cs.frame_jets(p.x(), 0);
    let out = [
        apply_jets(&f[0], &u).value(),
        apply_jets(&f[1], &u).value(),
        apply_jets(&f[2], &u).value(),
    ];
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(Error::Domain(format!("frame undefined at {:?}", p.x())))
    }
}

/// `sqrt((X1 u)^2 + (X2 u)^2)` at `p`.
pub fn criterion(s: &SurfaceSpec, cs: &ContactStructure, p: &ChartPoint) -> Result<f64> {
    let g = horizontal_gradient(s, cs, p)?;
    Ok(g[0].hypot(g[1]))
}

/// Outcome of a characteristic-point search.
#[derive(Clone, Debug, Default)]
pub struct CharSearch {
    pub points: Vec<ChartPoint>,
    /// Seeds that did not converge, with the reason.
    pub failures: Vec<(ChartPoint, String)>,
}

/// System `(constraint?, u, X1 u, X2 u)` and its Jacobian.
fn char_system(s: &SurfaceSpec, cs: &ContactStructure, x: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let dim = x.len();
    let u = s.u.jet(x, 2);
    let frame = cs.frame_jets(x, 1);
    let mut rows: Vec<Jet> = Vec::with_capacity(4);
    if let Some(g) = s.chart.constraint(&Jet::seed(x, 1)) {
        rows.push(g);
    }
    rows.push(u.truncate(1));
    rows.push(apply_jets(&frame[0], &u));
    rows.push(apply_jets(&frame[1], &u));
    let r = DVector::from_iterator(rows.len(), rows.iter().map(Jet::value));
    let j = DMatrix::from_fn(rows.len(), dim, |i, k| rows[i].d1(k));
    (r, j)
}

fn char_newton(s: &SurfaceSpec, cs: &ContactStructure, seed: &ChartPoint) -> std::result::Result<ChartPoint, String> {
    let mut x = DVector::from_column_slice(seed.x());
    let (mut r, mut j) = char_system(s, cs, x.as_slice());
    for _ in 0..60 {
        let res = r.amax();
        if !res.is_finite() {
            return Err("non-finite residual".into());
        }
        if res <= 1e-13 {
            break;
        }
        let step = match j.clone().lu().solve(&r) {
            Some(st) if st.iter().all(|v| v.is_finite()) => st,
            _ => return Err("singular Jacobian".into()),
        };
        let mut lambda = 1.0;
        let mut accepted = false;
        while lambda > 1e-6 {
            let trial = &x - &step * lambda;
            let (rt, jt) = char_system(s, cs, trial.as_slice());
            if rt.amax().is_finite() && rt.norm() < (1.0 - 1e-4 * lambda) * r.norm() {
                x = trial;
                r = rt;
                j = jt;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let res = r.amax();
    if res <= 1e-10 {
        ChartPoint::unchecked(x.as_slice(), s.chart).map_err(|e| e.to_string())
    } else {
        Err(format!("residual {res:.3e} after Newton"))
    }
}

/// Newton search for points with `u = X1 u = X2 u = 0`, one run per seed.
pub fn find_characteristic_points(
    s: &SurfaceSpec,
    cs: &ContactStructure,
    seeds: &[ChartPoint],
) -> CharSearch {
    let mut out = CharSearch::default();
    for seed in seeds {
        match char_newton(s, cs, seed) {
            Ok(p) => {
                if !out.points.iter().any(|q| q.dist(&p) <= 1e-6) {
                    out.points.push(p);
                }
            }
            Err(e) => out.failures.push((*seed, e)),
        }
    }
    out.points.sort_by(|a, b| a.coords.partial_cmp(&b.coords).unwrap_or(std::cmp::Ordering::Equal));
    out
}

/// `n^3` lattice seeds over `[-half, half]^3`, lifted onto the chart.
pub fn lattice_seeds(chart: ChartId, half: f64, n: usize) -> Vec<ChartPoint> {
    let grid: Vec<f64> = (0..n)
        .map(|i| if n == 1 { 0.0 } else { -half + 2.0 * half * i as f64 / (n - 1) as f64 })
        .collect();
    let mut out = Vec::new();
    for &a in &grid {
        for &b in &grid {
            for &c in &grid {
                match chart {
                    ChartId::Heisenberg => {
                        out.extend(ChartPoint::new(&[a, b, c], chart));
                    }
                    ChartId::Su2 => {
                        for w in [0.5, -0.5] {
                            let v = [a, b, c, w];
                            let n = geometry::norm(&v);
                            out.extend(ChartPoint::new(&geometry::scale(&v, 1.0 / n), chart));
                        }
                    }
                    ChartId::Sl2 => {
                        if a.abs() > 0.05 {
                            out.extend(ChartPoint::new(&[a, b, c, (1.0 + b * c) / a], chart));
                        }
                    }
                }
            }
        }
    }
    out
}

/// Rescales `u` so that `X0 u = 1` on the surface near `x`.
pub fn normalize_u(s: &SurfaceSpec, cs: &ContactStructure, x: &ChartPoint) -> Result<SurfaceSpec> {
    let [_, _, x0u] = horizontal_gradient(s, cs, x)?;
    if x0u.abs() <= 1e-12 {
        return Err(Error::DivisionByZero(format!("X0 u = {x0u:.3e} at {:?}", x.x())));
    }
    Ok(SurfaceSpec {
        u: Arc::new(Normalized { u: s.u.clone(), x0: cs.x0.clone() }),
        chart: s.chart,
        name: format!("{}/X0u", s.name),
    })
}

/// Second horizontal derivatives `m[i][j] = (X_i X_j u)(x)`.
pub fn horizontal_hessian(s: &SurfaceSpec, cs: &ContactStructure, x: &ChartPoint) -> Result<[[f64; 2]; 2]> {
    let u = geometry::eval_jet(&s.u, x, 2)?;
    let f1 = cs.frame_jets(x.x(), 1);
    let f0 = cs.frame_jets(x.x(), 0);
    let xu = [apply_jets(&f1[0], &u), apply_jets(&f1[1], &u)];
    let m = std::array::from_fn(|i| std::array::from_fn(|j| apply_jets(&f0[i], &xu[j]).value()));
    Ok(m)
}

/// `(Hess u) J = [[X1X2u, -X1X1u], [X2X2u, -X2X1u]]`.
pub fn hess_j(s: &SurfaceSpec, cs: &ContactStructure, x: &ChartPoint) -> Result<[[f64; 2]; 2]> {
    let h = horizontal_hessian(s, cs, x)?;
    Ok([[h[0][1], -h[0][0]], [h[1][1], -h[1][0]]])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointClass {
    EllipticFocus,
    EllipticNode,
    HyperbolicSaddle,
    Degenerate,
}

impl PointClass {
    pub fn is_elliptic(self) -> bool {
        matches!(self, PointClass::EllipticFocus | PointClass::EllipticNode)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CharacteristicPointReport {
    pub location: ChartPoint,
    pub hess_j: [[f64; 2]; 2],
    pub det: f64,
    pub trace: f64,
    pub eigenvalues: [Complex64; 2],
    pub class: PointClass,
    pub normalized: bool,
    /// For real eigenvalues: eigenvector of the linearized foliation field in
    /// frame coordinates `(X1, X2)`, one per eigenvalue.
    pub eigenvectors: Option<[[f64; 2]; 2]>,
    /// The same eigenvectors as ambient vectors.
    pub eigenvectors_ambient: Option<[Vec4; 2]>,
}

impl CharacteristicPointReport {
    /// Real eigenvalues when present.
    pub fn real_eigenvalues(&self) -> Option<[f64; 2]> {
        if self.eigenvalues.iter().all(|z| z.im == 0.0) {
            Some([self.eigenvalues[0].re, self.eigenvalues[1].re])
        } else {
            None
        }
    }
}

/// Normalizes `u` at `x` and classifies the characteristic point.
pub fn classify(s: &SurfaceSpec, cs: &ContactStructure, x: &ChartPoint) -> Result<CharacteristicPointReport> {
    let g = horizontal_gradient(s, cs, x)?;
    let crit = g[0].hypot(g[1]);
    if crit > 1e-8 {
        return Err(Error::NotCharacteristic(crit));
    }
    let sn = normalize_u(s, cs, x)?;
    let m = hess_j(&sn, cs, x)?;
    let mat = Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1]);
    let det = mat.determinant();
    let trace = mat.trace();
    let disc = trace * trace - 4.0 * det;
    let eigenvalues = if disc < 0.0 {
        let im = (-disc).sqrt() / 2.0;
        [Complex64::new(trace / 2.0, im), Complex64::new(trace / 2.0, -im)]
    } else {
        let r = disc.sqrt();
        let (l1, l2) = ((trace - r) / 2.0, (trace + r) / 2.0);
        [Complex64::new(l1, 0.0), Complex64::new(l2, 0.0)]
    };
    let class = if det > DEGENERACY_TOL {
        if disc < 0.0 {
            PointClass::EllipticFocus
        } else {
            PointClass::EllipticNode
        }
    } else if det < -DEGENERACY_TOL {
        PointClass::HyperbolicSaddle
    } else {
        PointClass::Degenerate
    };
    let (eigenvectors, eigenvectors_ambient) = if disc >= 0.0 {
        // The linearized field (X2 u, -X1 u) has matrix transpose(hess_j).
        let h = horizontal_hessian(&sn, cs, x)?;
        let lin = [[h[0][1], h[1][1]], [-h[0][0], -h[1][0]]];
        let vecs: [[f64; 2]; 2] = std::array::from_fn(|i| eigvec2(&lin, eigenvalues[i].re));
        let frame = cs.frame_at(x);
        let amb = std::array::from_fn(|i| {
            let v = geometry::add(
                &geometry::scale(&frame[0], vecs[i][0]),
                &geometry::scale(&frame[1], vecs[i][1]),
            );
            geometry::scale(&v, 1.0 / geometry::norm(&v))
        });
        (Some(vecs), Some(amb))
    } else {
        (None, None)
    };
    Ok(CharacteristicPointReport {
        location: *x,
        hess_j: m,
        det,
        trace,
        eigenvalues,
        class,
        normalized: true,
        eigenvectors,
        eigenvectors_ambient,
    })
}

fn eigvec2(m: &[[f64; 2]; 2], l: f64) -> [f64; 2] {
    let a = [m[0][0] - l, m[0][1]];
    let b = [m[1][0], m[1][1] - l];
    let row = if a[0].hypot(a[1]) >= b[0].hypot(b[1]) { a } else { b };
    let v = if row[0] == 0.0 && row[1] == 0.0 { [1.0, 0.0] } else { [-row[1], row[0]] };
    let n = v[0].hypot(v[1]);
    [v[0] / n, v[1] / n]
}

/// The unit foliation field `((X2 u) X1 - (X1 u) X2) / |(X1 u, X2 u)|`.
pub fn hat_x(s: &SurfaceSpec, cs: &ContactStructure, p: &ChartPoint) -> Result<Vec4> {
    let g = horizontal_gradient(s, cs, p)?;
    let n = g[0].hypot(g[1]);
    if n <= 1e-12 {
        return Err(Error::CharacteristicPoint(n));
    }
    let f = cs.frame_at(p);
    Ok(std::array::from_fn(|k| (g[1] * f[0][k] - g[0] * f[1][k]) / n))
}

/// `b = X0 u / |(X1 u, X2 u)|`, with a tangency check on `b J(X_S) - X0`.
pub fn drift_b(s: &SurfaceSpec, cs: &ContactStructure, p: &ChartPoint) -> Result<f64> {
    let j = SurfaceJets::at(s, cs, p, 0)?;
    let du = j.u.gradient();
    let f2 = SurfaceJets::vec(&j.f2);
    let tang: f64 = f2.iter().zip(&du).map(|(a, b)| a * b).sum();
    let scale = 1.0 + j.xu[2].value().abs();
    if tang.abs() > 1e-8 * scale {
        return Err(Error::Domain(format!("b J(X_S) - X0 not tangent: residual {tang:.3e}")));
    }
    Ok(j.b.value())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    MaxLength,
    NearCharacteristicPoint,
    DomainExit,
}

/// When to stop tracing a leaf.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StopRule {
    pub max_length: f64,
    /// Stop once `|(X1 u, X2 u)|` falls to this value.
    pub char_tol: f64,
    /// Stop once the Euclidean norm of the ambient point exceeds this.
    pub max_radius: f64,
    /// For SL(2,R): stay on the sheet with this sign of `x + w`.
    pub sheet: Option<f64>,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule { max_length: 1.0, char_tol: CHAR_PROXIMITY, max_radius: 1e3, sheet: None }
    }
}

impl StopRule {
    pub fn with_length(max_length: f64) -> Self {
        StopRule { max_length, ..Default::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafSample {
    pub s: f64,
    pub point: ChartPoint,
    pub b: f64,
    pub hat_x: Vec4,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafTrace {
    pub samples: Vec<LeafSample>,
    pub direction: i8,
    pub terminated_by: Termination,
}

/// Gauss-Newton projection onto `{u = 0}` intersected with the chart.
pub fn project_to_surface(s: &SurfaceSpec, raw: &Vec4) -> Result<ChartPoint> {
    let dim = s.chart.dim();
    let mut x = DVector::from_column_slice(&raw[..dim]);
    let mut res = f64::INFINITY;
    for _ in 0..20 {
        let seed = Jet::seed(x.as_slice(), 1);
        let mut rows = vec![s.u.jet(x.as_slice(), 1)];
        if let Some(g) = s.chart.constraint(&seed) {
            rows.push(g);
        }
        let r = DVector::from_iterator(rows.len(), rows.iter().map(Jet::value));
        res = r.amax();
        if !res.is_finite() {
            break;
        }
        if res <= 1e-14 {
            break;
        }
        let j = DMatrix::from_fn(rows.len(), dim, |i, k| rows[i].d1(k));
        let jjt = &j * j.transpose();
        let Some(y) = jjt.lu().solve(&r) else { break };
        let step = j.transpose() * y;
        x -= step;
    }
    if res <= 1e-10 {
        ChartPoint::unchecked(x.as_slice(), s.chart)
    } else {
        Err(Error::ProjectionFailure(res))
    }
}

fn sample(s: &SurfaceSpec, cs: &ContactStructure, p: &ChartPoint, arc: f64) -> Result<(LeafSample, f64)> {
    let j = SurfaceJets::at(s, cs, p, 0)?;
    let sm = LeafSample { s: arc, point: *p, b: j.b.value(), hat_x: SurfaceJets::vec(&j.f1) };
    Ok((sm, j.norm.value()))
}

/// Integrates `direction * X_S` from `start` by RK4 with projection.
///
/// The step is `min(step, 0.05 / |b|)` so that approaches to a characteristic
/// point, where `b` blows up, stay resolved.
pub fn trace_leaf(
    s: &SurfaceSpec,
    cs: &ContactStructure,
    start: &ChartPoint,
    direction: i8,
    step: f64,
    stop: StopRule,
) -> Result<LeafTrace> {
    if direction != 1 && direction != -1 {
        return Err(Error::InvalidParameter(format!("direction must be +1 or -1, got {direction}")));
    }
    if !(step > 0.0) {
        return Err(Error::InvalidParameter(format!("step must be positive, got {step}")));
    }
    let sign = direction as f64;
    let field = |x: &Vec4| -> Result<Vec4> {
        let p = ChartPoint::unchecked(&x[..s.chart.dim()], s.chart)?;
        hat_x(s, cs, &p).map(|v| geometry::scale(&v, sign))
    };
    let start = project_to_surface(s, &start.coords)?;
    let (first, n0) = sample(s, cs, &start, 0.0)?;
    if n0 <= stop.char_tol {
        return Err(Error::CharacteristicPoint(n0));
    }
    let mut samples = vec![first];
    let mut p = start;
    let mut arc = 0.0;
    let mut b = first.b;
    let terminated_by = loop {
        if arc >= stop.max_length - 1e-12 {
            break Termination::MaxLength;
        }
        let mut h = step.min(0.05 / b.abs()).min(stop.max_length - arc);
        let next = loop {
            if h < 1e-12 {
                return Err(Error::StepRejected(arc));
            }
            let x = p.coords;
            let rk = (|| -> Result<Vec4> {
                let k1 = field(&x)?;
                let k2 = field(&geometry::add(&x, &geometry::scale(&k1, h / 2.0)))?;
                let k3 = field(&geometry::add(&x, &geometry::scale(&k2, h / 2.0)))?;
                let k4 = field(&geometry::add(&x, &geometry::scale(&k3, h)))?;
                Ok(std::array::from_fn(|k| {
                    x[k] + h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k])
                }))
            })();
            let raw = match rk {
                Ok(r) => r,
                Err(_) => {
                    h /= 2.0;
                    continue;
                }
            };
            let u = s.u.jet(&raw[..s.chart.dim()], 0).value();
            if !(u.abs() <= 1e-6) {
                h /= 2.0;
                continue;
            }
            break (project_to_surface(s, &raw)?, h);
        };
        let (q, h) = next;
        if geometry::norm(&q.coords) > stop.max_radius {
            break Termination::DomainExit;
        }
        if let Some(sheet) = stop.sheet {
            if (q.coords[0] + q.coords[3]) * sheet <= 0.0 {
                break Termination::DomainExit;
            }
        }
        let (sm, n) = match sample(s, cs, &q, arc + h) {
            Ok(v) => v,
            Err(Error::CharacteristicPoint(_)) => break Termination::NearCharacteristicPoint,
            Err(_) => break Termination::DomainExit,
        };
        arc += h;
        p = q;
        b = sm.b;
        samples.push(sm);
        if n <= stop.char_tol {
            break Termination::NearCharacteristicPoint;
        }
    };
    Ok(LeafTrace { samples, direction, terminated_by })
}

/// Traces the leaf through `start` in whichever direction heads toward `target`.
pub fn trace_into(
    s: &SurfaceSpec,
    cs: &ContactStructure,
    start: &ChartPoint,
    target: &ChartPoint,
    step: f64,
    stop: StopRule,
) -> Result<LeafTrace> {
    let v = hat_x(s, cs, start)?;
    let toward = geometry::dot(&v, &geometry::sub(&target.coords, &start.coords));
    let direction = if toward >= 0.0 { 1 } else { -1 };
    trace_leaf(s, cs, start, direction, step, stop)
}

impl LeafTrace {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.s)
    }

    /// Writes the trace as CSV: `s, coord0.., b, hatX0..`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let dim = self.samples.first().map_or(3, |s| s.point.dim());
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["s".to_string()];
        header.extend((0..dim).map(|k| format!("coord{k}")));
        header.push("b".into());
        header.extend((0..dim).map(|k| format!("hatX{k}")));
        wr.write_record(&header)?;
        for sm in &self.samples {
            let mut rec = vec![fmt17(sm.s)];
            rec.extend(sm.point.x().iter().map(|v| fmt17(*v)));
            rec.push(fmt17(sm.b));
            rec.extend(sm.hat_x[..dim].iter().map(|v| fmt17(*v)));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, |f| self.write_csv(f))
    }

    /// Reads a trace written by [`LeafTrace::write_csv`].
    ///
    /// Direction and termination are not part of the CSV and must be supplied.
    pub fn read_csv<R: std::io::Read>(
        r: R,
        chart: ChartId,
        direction: i8,
        terminated_by: Termination,
    ) -> Result<Self> {
        let dim = chart.dim();
        let mut rd = csv::Reader::from_reader(r);
        let hdr = rd.headers()?.clone();
        if hdr.len() != 2 + 2 * dim || &hdr[0] != "s" {
            return Err(Error::Parse(format!("unexpected leaf CSV header {hdr:?}")));
        }
        let mut samples = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let v: Vec<f64> = rec
                .iter()
                .map(|f| f.trim().parse::<f64>().map_err(|e| Error::Parse(e.to_string())))
                .collect::<Result<_>>()?;
            let point = ChartPoint::unchecked(&v[1..1 + dim], chart)?;
            let mut hat_x = [0.0; 4];
            hat_x[..dim].copy_from_slice(&v[2 + dim..]);
            samples.push(LeafSample { s: v[0], point, b: v[1 + dim], hat_x });
        }
        Ok(LeafTrace { samples, direction, terminated_by })
    }
}

/// Round-trip float formatting with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Fits `lambda` in `b ~ 1 / (lambda s)` from a trace that ends at a
/// characteristic point.
///
/// `s` is the signed flow time of `X_S` from the point, so a leaf leaving the
/// point has `s > 0`. The fit is a quadratic in the distance `d` to the point
/// over `d in [0.01, 0.1]`; its intercept is the limit of `b * d`.
pub fn expansion_check(report: &CharacteristicPointReport, trace: &LeafTrace, cs: &ContactStructure) -> Result<f64> {
    if trace.terminated_by != Termination::NearCharacteristicPoint {
        return Err(Error::InsufficientSamples("trace does not end at a characteristic point".into()));
    }
    let last = trace.samples.last().expect("nonempty trace");
    let gap = geometry::sub(&last.point.coords, &report.location.coords);
    let c = decompose_in(&cs.frame_at(&report.location), &gap)?;
    let tail = c[0].hypot(c[1]);
    if tail > 1e-2 {
        return Err(Error::InsufficientSamples(format!(
            "trace ends {tail:.3e} away from the characteristic point"
        )));
    }
    let s_end = last.s;
    let pts: Vec<(f64, f64)> = trace
        .samples
        .iter()
        .map(|sm| {
            let d = s_end - sm.s + tail;
            (d, sm.b * d)
        })
        .filter(|(d, _)| (0.01..=0.1).contains(d))
        .collect();
    if pts.len() < 8 {
        return Err(Error::InsufficientSamples(format!("{} samples in the fit window", pts.len())));
    }
    let a = DMatrix::from_fn(pts.len(), 3, |i, j| pts[i].0.powi(j as i32));
    let y = DVector::from_iterator(pts.len(), pts.iter().map(|p| p.1));
    let coef = a
        .svd(true, true)
        .solve(&y, 1e-14)
        .map_err(|e| Error::InsufficientSamples(e.to_string()))?;
    let c0 = coef[0];
    Ok(-(trace.direction as f64) / c0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::field;
    use crate::models;

    fn heis() -> ContactStructure {
        models::heisenberg().structure
    }

    fn paraboloid(a: f64) -> SurfaceSpec {
        SurfaceSpec::new("p", ChartId::Heisenberg, field(move |x| x[2] - a * (x[0] * x[0] + x[1] * x[1])))
    }

    fn pt(c: &[f64]) -> ChartPoint {
        ChartPoint::new(c, ChartId::Heisenberg).unwrap()
    }

    #[test]
    fn paraboloid_horizontal_gradient() {
        let a = 0.7;
        let s = paraboloid(a);
        let (x, y) = (0.3, -0.4);
        let p = pt(&[x, y, a * (x * x + y * y)]);
        let g = horizontal_gradient(&s, &heis(), &p).unwrap();
        assert!((g[0] - (-2.0 * a * x - y / 2.0)).abs() < 1e-15);
        assert!((g[1] - (-2.0 * a * y + x / 2.0)).abs() < 1e-15);
        assert!((g[2] - 1.0).abs() < 1e-15);
        let o = horizontal_gradient(&s, &heis(), &pt(&[0.0, 0.0, 0.0])).unwrap();
        assert_eq!(o, [0.0, 0.0, 1.0]);
    }

    #[test]
    fn paraboloid_search_finds_origin_only() {
        let s = paraboloid(1.0);
        let seeds = lattice_seeds(ChartId::Heisenberg, 1.0, 5);
        let found = find_characteristic_points(&s, &heis(), &seeds);
        assert_eq!(found.points.len(), 1);
        assert!(geometry::norm(&found.points[0].coords) < 1e-10);
    }

    #[test]
    fn paraboloid_hess_j_and_focus() {
        let a = 1.0;
        let s = paraboloid(a);
        let o = pt(&[0.0, 0.0, 0.0]);
        let m = hess_j(&s, &heis(), &o).unwrap();
        assert_eq!(m, [[0.5, 2.0 * a], [-2.0 * a, 0.5]]);
        let r = classify(&s, &heis(), &o).unwrap();
        assert_eq!(r.class, PointClass::EllipticFocus);
        assert!((r.eigenvalues[0].im.abs() - 2.0).abs() < 1e-12);
        assert!((r.trace - 1.0).abs() < 1e-12);
    }

    #[test]
    fn classify_rejects_regular_point() {
        let s = paraboloid(1.0);
        let r = classify(&s, &heis(), &pt(&[1.0, 0.0, 1.0]));
        assert!(matches!(r, Err(Error::NotCharacteristic(_))));
    }

    #[test]
    fn hat_x_on_plane_is_radial() {
        let s = paraboloid(0.0);
        let v = hat_x(&s, &heis(), &pt(&[1.0, 0.0, 0.0])).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-15 && v[1].abs() < 1e-15 && v[2].abs() < 1e-15);
        assert!(matches!(hat_x(&s, &heis(), &pt(&[0.0, 0.0, 0.0])), Err(Error::CharacteristicPoint(_))));
    }

    #[test]
    fn drift_on_paraboloid_at_unit_radius() {
        for a in [0.0, 0.25, 1.0] {
            let s = paraboloid(a);
            let b = drift_b(&s, &heis(), &pt(&[1.0, 0.0, a])).unwrap();
            assert!((b - 2.0 / (1.0 + 16.0 * a * a).sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn trace_reverses() {
        let s = paraboloid(0.5);
        let cs = heis();
        let start = pt(&[0.6, 0.2, 0.5 * 0.4]);
        let fwd = trace_leaf(&s, &cs, &start, 1, 1e-3, StopRule::with_length(0.3)).unwrap();
        let end = fwd.samples.last().unwrap().point;
        let back = trace_leaf(&s, &cs, &end, -1, 1e-3, StopRule::with_length(0.3)).unwrap();
        let q = back.samples.last().unwrap().point;
        assert!(q.dist(&start) < 1e-7, "{}", q.dist(&start));
        for sm in &fwd.samples {
            assert!(s.u_at(&sm.point).abs() <= 1e-8);
        }
    }

    #[test]
    fn csv_round_trip() {
        let s = paraboloid(1.0);
        let start = pt(&[0.5, 0.0, 0.25]);
        let t = trace_leaf(&s, &heis(), &start, 1, 1e-2, StopRule::with_length(0.1)).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = LeafTrace::read_csv(&buf[..], ChartId::Heisenberg, 1, t.terminated_by).unwrap();
        assert_eq!(back, t);
    }
}
