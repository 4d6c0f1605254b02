//! Vector fields on charts, Lie brackets and contact structures.
//!
//! Every scalar field is *jet-evaluable*: asked for its Taylor expansion of a
//! given order around a point in ambient coordinates. Derived fields such as
//! `Vf` are again scalar fields, so second and third derivatives along frame
//! vectors come out of the same machinery.
//!
//! The constrained groups SU(2) and SL(2,R) are represented in their ambient
//! R^4 coordinates; [`project_to_chart`] pulls drifting points back onto the
//! constraint set.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::{Jet, MAX_ORDER};

/// Frame determinant below which a frame is treated as singular.
pub const FRAME_SINGULAR_TOL: f64 = 1e-10;
/// Tolerance on the chart constraint for a valid [`ChartPoint`].
pub const CONSTRAINT_TOL: f64 = 1e-10;

/// Ambient vector. Charts of dimension 3 leave the last slot at zero.
pub type Vec4 = [f64; 4];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChartId {
    /// R^3 with coordinates (x, y, z).
    Heisenberg,
    /// Unit sphere x^2 + y^2 + z^2 + w^2 = 1 in R^4.
    Su2,
    /// Hyperboloid xw - yz = 1 in R^4.
    Sl2,
}

impl ChartId {
    pub fn dim(self) -> usize {
        match self {
            ChartId::Heisenberg => 3,
            ChartId::Su2 | ChartId::Sl2 => 4,
        }
    }

    /// Constraint function whose zero set is the chart; `None` for R^3.
    pub fn constraint(self, x: &[Jet]) -> Option<Jet> {
        match self {
            ChartId::Heisenberg => None,
            ChartId::Su2 => Some(x[0] * x[0] + x[1] * x[1] + x[2] * x[2] + x[3] * x[3] - 1.0),
            ChartId::Sl2 => Some(x[0] * x[3] - x[1] * x[2] - 1.0),
        }
    }

    /// Value and gradient of the constraint at `p`.
    pub fn constraint_grad(self, p: &Vec4) -> Option<(f64, Vec4)> {
        let x = Jet::seed(&p[..self.dim()], 1);
        self.constraint(&x).map(|g| (g.value(), g.gradient()))
    }

    pub fn residual(self, p: &Vec4) -> f64 {
        self.constraint_grad(p).map_or(0.0, |(g, _)| g.abs())
    }
}

impl fmt::Display for ChartId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ChartId::Heisenberg => "heisenberg",
            ChartId::Su2 => "su2",
            ChartId::Sl2 => "sl2",
        };
        f.write_str(s)
    }
}

/// A point of a chart in ambient coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    pub coords: Vec4,
    pub chart: ChartId,
    pub constraint_residual: f64,
}

impl ChartPoint {
    /// Validated constructor; rejects points off the constraint set.
    pub fn new(coords: &[f64], chart: ChartId) -> Result<Self> {
        let p = Self::unchecked(coords, chart)?;
        if p.constraint_residual > CONSTRAINT_TOL {
            return Err(Error::Domain(format!(
                "{:?} violates the {chart} constraint by {:.3e}",
                coords,
                p.constraint_residual
            )));
        }
        Ok(p)
    }

    /// Builds a point without enforcing the constraint (residual is recorded).
    pub fn unchecked(coords: &[f64], chart: ChartId) -> Result<Self> {
        if coords.len() != chart.dim() {
            return Err(Error::InvalidParameter(format!(
                "{chart} points have {} coordinates, got {}",
                chart.dim(),
                coords.len()
            )));
        }
        let mut c = [0.0; 4];
        c[..coords.len()].copy_from_slice(coords);
        Ok(ChartPoint { coords: c, chart, constraint_residual: chart.residual(&c) })
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn x(&self) -> &[f64] {
        &self.coords[..self.dim()]
    }

    pub fn dist(&self, other: &ChartPoint) -> f64 {
        norm(&sub(&self.coords, &other.coords))
    }
}

/// A scalar field that can report its Taylor jet at a point.
pub trait ScalarField: Send + Sync {
    /// Taylor expansion around `p` (ambient coordinates) truncated at `order`.
    fn jet(&self, p: &[f64], order: usize) -> Jet;
}

pub type Field = Arc<dyn ScalarField>;

impl fmt::Debug for dyn ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ScalarField")
    }
}

struct ClosureField<F>(F);

impl<F> ScalarField for ClosureField<F>
where
    F: Fn(&[Jet]) -> Jet + Send + Sync,
{
    fn jet(&self, p: &[f64], order: usize) -> Jet {
        if order > MAX_ORDER {
            return Jet::constant(f64::NAN);
        }
        (self.0)(&Jet::seed(p, order))
    }
}

/// Wraps a closure over coordinate jets as a [`Field`].
pub fn field<F>(f: F) -> Field
where
    F: Fn(&[Jet]) -> Jet + Send + Sync + 'static,
{
    Arc::new(ClosureField(f))
}

pub fn constant(v: f64) -> Field {
    field(move |_| Jet::constant(v))
}

/// The field `V f`.
struct Applied {
    v: VectorField,
    f: Field,
}

impl ScalarField for Applied {
    fn jet(&self, p: &[f64], order: usize) -> Jet {
        if order + 1 > MAX_ORDER {
            return Jet::constant(f64::NAN);
        }
        let fj = self.f.jet(p, order + 1);
        let v: Vec<Jet> = self.v.coeffs.iter().map(|c| c.jet(p, order)).collect();
        apply_jets(&v, &fj)
    }
}

/// `f * g` as a field.
pub fn product(f: Field, g: Field) -> Field {
    Arc::new(Binary { f, g, op: |a, b| a * b })
}

/// `f / g` as a field.
pub fn quotient(f: Field, g: Field) -> Field {
    Arc::new(Binary { f, g, op: |a, b| a / b })
}

struct Binary {
    f: Field,
    g: Field,
    op: fn(Jet, Jet) -> Jet,
}

impl ScalarField for Binary {
    fn jet(&self, p: &[f64], order: usize) -> Jet {
        (self.op)(self.f.jet(p, order), self.g.jet(p, order))
    }
}

/// A vector field given by its ambient coefficient functions.
#[derive(Clone)]
pub struct VectorField {
    pub coeffs: Vec<Field>,
    pub label: String,
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VectorField({})", self.label)
    }
}

impl VectorField {
    pub fn new(label: impl Into<String>, coeffs: Vec<Field>) -> Self {
        VectorField { coeffs, label: label.into() }
    }

    /// Field with coefficients computed together from one closure.
    pub fn from_fn<F>(label: impl Into<String>, dim: usize, f: F) -> Self
    where
        F: Fn(&[Jet]) -> Vec<Jet> + Send + Sync + 'static,
    {
        let f = Arc::new(f);
        let coeffs = (0..dim)
            .map(|k| {
                let f = f.clone();
                field(move |x| f(x)[k])
            })
            .collect();
        VectorField::new(label, coeffs)
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn jets(&self, p: &[f64], order: usize) -> Vec<Jet> {
        self.coeffs.iter().map(|c| c.jet(p, order)).collect()
    }

    pub fn at(&self, p: &ChartPoint) -> Vec4 {
        let mut out = [0.0; 4];
        for (k, c) in self.coeffs.iter().enumerate() {
            out[k] = c.jet(p.x(), 0).value();
        }
        out
    }

    /// The derived scalar field `V f`.
    pub fn apply(&self, f: Field) -> Field {
        Arc::new(Applied { v: self.clone(), f })
    }
}

/// `sum_k v^k d_k g` on jets; the result has one order less than `g`.
pub fn apply_jets(v: &[Jet], g: &Jet) -> Jet {
    if g.order() == 0 {
        return Jet::constant(f64::NAN).truncate(0);
    }
    let order = g.order() - 1;
    let mut out = Jet::zero().truncate(order);
    for (k, vk) in v.iter().enumerate() {
        out += vk.truncate(order) * g.derivative(k);
    }
    out
}

/// `[V, W]^k = V^j d_j W^k - W^j d_j V^k` on jets.
pub fn bracket_jets(v: &[Jet], w: &[Jet]) -> Vec<Jet> {
    v.iter()
        .zip(w)
        .map(|(vk, wk)| apply_jets(v, wk) - apply_jets(w, vk))
        .collect()
}

fn finite_or_domain(j: Jet, what: &str, p: &ChartPoint) -> Result<Jet> {
    if j.is_finite() {
        Ok(j)
    } else {
        Err(Error::Domain(format!("{what} undefined at {:?}", p.x())))
    }
}

/// Value, gradient and Hessian (and third derivatives when `order == 3`).
pub fn eval_jet(f: &Field, p: &ChartPoint, order: usize) -> Result<Jet> {
    if order > MAX_ORDER {
        return Err(Error::OrderExceeded(order));
    }
    finite_or_domain(f.jet(p.x(), order), "scalar field", p)
}

/// `(V f)(p)`.
pub fn apply_field(v: &VectorField, f: &Field, p: &ChartPoint) -> Result<f64> {
    let g = eval_jet(f, p, 1)?;
    let vj = v.jets(p.x(), 0);
    let r = apply_jets(&vj, &g).value();
    if r.is_finite() {
        Ok(r)
    } else {
        Err(Error::Domain(format!("{} f undefined at {:?}", v.label, p.x())))
    }
}

/// `[V, W](p)` in ambient coordinates.
pub fn lie_bracket(v: &VectorField, w: &VectorField, p: &ChartPoint) -> Result<Vec4> {
    let vj = v.jets(p.x(), 1);
    let wj = w.jets(p.x(), 1);
    let br = bracket_jets(&vj, &wj);
    let mut out = [0.0; 4];
    for (k, b) in br.iter().enumerate() {
        out[k] = b.value();
    }
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(Error::Domain(format!("[{}, {}] undefined at {:?}", v.label, w.label, p.x())))
    }
}

/// Coefficients of the brackets of a contact frame in that frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureFunctions {
    pub c12_1: f64,
    pub c12_2: f64,
    pub c01_1: f64,
    pub c01_2: f64,
    pub c02_1: f64,
    pub c02_2: f64,
}

/// Frame `(X1, X2, X0)` with optional contact form.
#[derive(Clone, Debug)]
pub struct ContactStructure {
    pub chart: ChartId,
    pub x1: VectorField,
    pub x2: VectorField,
    pub x0: VectorField,
    pub omega: Option<Vec<Field>>,
}

/// Residuals of the contact axioms at a batch of points.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub omega_x0: f64,
    pub d_omega_x0: f64,
    pub omega_bracket: f64,
    pub reeb_component: f64,
    pub tangency: f64,
    pub reconstruction: f64,
}

impl ValidationReport {
    pub fn max(&self) -> f64 {
        [
            self.omega_x0,
            self.d_omega_x0,
            self.omega_bracket,
            self.reeb_component,
            self.tangency,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

impl ContactStructure {
    pub fn frame(&self) -> [&VectorField; 3] {
        [&self.x1, &self.x2, &self.x0]
    }

    /// Frame coefficient jets `[X1, X2, X0]` at `p`.
    pub fn frame_jets(&self, p: &[f64], order: usize) -> [Vec<Jet>; 3] {
        [self.x1.jets(p, order), self.x2.jets(p, order), self.x0.jets(p, order)]
    }

    pub fn frame_at(&self, p: &ChartPoint) -> [Vec4; 3] {
        [self.x1.at(p), self.x2.at(p), self.x0.at(p)]
    }

    /// `sqrt(det G)` for the Euclidean Gram matrix of the frame.
    pub fn frame_determinant(&self, p: &ChartPoint) -> f64 {
        gram_det(&self.frame_at(p)).max(0.0).sqrt()
    }

    /// Coordinates of an ambient vector `v` in the frame, `v = a X1 + b X2 + c X0`.
    pub fn decompose(&self, p: &ChartPoint, v: &Vec4) -> Result<[f64; 3]> {
        decompose_in(&self.frame_at(p), v)
    }

    /// `g_eps(v, w)` for ambient vectors in the span of the frame.
    pub fn g_eps(&self, p: &ChartPoint, eps: f64, v: &Vec4, w: &Vec4) -> Result<f64> {
        let a = self.decompose(p, v)?;
        let b = self.decompose(p, w)?;
        Ok(a[0] * b[0] + a[1] * b[1] + a[2] * b[2] / eps)
    }

    pub fn structure_functions(&self, p: &ChartPoint) -> Result<StructureFunctions> {
        let frame = self.frame_at(p);
        let b12 = lie_bracket(&self.x1, &self.x2, p)?;
        let b01 = lie_bracket(&self.x0, &self.x1, p)?;
        let b02 = lie_bracket(&self.x0, &self.x2, p)?;
        let d12 = decompose_in(&frame, &b12)?;
        let d01 = decompose_in(&frame, &b01)?;
        let d02 = decompose_in(&frame, &b02)?;
        if (d12[2] - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidParameter(format!(
                "X0-component of [X1, X2] is {} at {:?}, expected 1",
                d12[2],
                p.x()
            )));
        }
        Ok(StructureFunctions {
            c12_1: d12[0],
            c12_2: d12[1],
            c01_1: d01[0],
            c01_2: d01[1],
            c02_1: d02[0],
            c02_2: d02[1],
        })
    }

    /// Maximum residual of each contact axiom over `points`.
    pub fn validate(&self, points: &[ChartPoint]) -> Result<ValidationReport> {
        let mut rep = ValidationReport::default();
        for p in points {
            let frame = self.frame_at(p);
            let b12 = lie_bracket(&self.x1, &self.x2, p)?;
            let b01 = lie_bracket(&self.x0, &self.x1, p)?;
            let b02 = lie_bracket(&self.x0, &self.x2, p)?;
            let d12 = decompose_in(&frame, &b12)?;
            let d01 = decompose_in(&frame, &b01)?;
            let d02 = decompose_in(&frame, &b02)?;
            rep.reeb_component = rep.reeb_component.max(d01[2].abs()).max(d02[2].abs());
            for (br, d) in [(b12, d12), (b01, d01), (b02, d02)] {
                let mut rec = [0.0; 4];
                for k in 0..4 {
                    rec[k] = d[0] * frame[0][k] + d[1] * frame[1][k] + d[2] * frame[2][k];
                }
                rep.reconstruction = rep.reconstruction.max(norm(&sub(&rec, &br)));
            }
            if let Some((_, grad)) = self.chart.constraint_grad(&p.coords) {
                for v in &frame {
                    rep.tangency = rep.tangency.max(dot(v, &grad).abs());
                }
            }
            if let Some(omega) = &self.omega {
                let om: Vec<Jet> = omega.iter().map(|o| o.jet(p.x(), 1)).collect();
                let [x1, x2, x0] = self.frame_jets(p.x(), 1);
                let pair = |v: &[Jet]| -> Jet { om.iter().zip(v).map(|(a, b)| *a * *b).sum() };
                let om_x0 = pair(&x0);
                rep.omega_x0 = rep.omega_x0.max((om_x0.value() - 1.0).abs());
                let om_vals: Vec4 = std::array::from_fn(|k| om.get(k).map_or(0.0, |j| j.value()));
                rep.omega_bracket = rep.omega_bracket.max((dot(&om_vals, &b12) - 1.0).abs());
                // d omega(X0, Y) = X0(omega(Y)) - Y(omega(X0)) - omega([X0, Y])
                let x0v: Vec<Jet> = x0.iter().map(|j| j.truncate(0)).collect();
                for (y, br) in [(&x1, b01), (&x2, b02)] {
                    let yv: Vec<Jet> = y.iter().map(|j| j.truncate(0)).collect();
                    let t = apply_jets(&x0v, &pair(y)).value()
                        - apply_jets(&yv, &om_x0).value()
                        - dot(&om_vals, &br);
                    rep.d_omega_x0 = rep.d_omega_x0.max(t.abs());
                }
            }
        }
        Ok(rep)
    }
}

fn gram(frame: &[Vec4; 3]) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| dot(&frame[i], &frame[j])))
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn gram_det(frame: &[Vec4; 3]) -> f64 {
    det3(&gram(frame))
}

/// Solves the 3x3 system `m x = r` by Cramer's rule.
pub fn solve3(m: &[[f64; 3]; 3], r: &[f64; 3]) -> Option<[f64; 3]> {
    let d = det3(m);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    Some(std::array::from_fn(|c| {
        let mut mc = *m;
        for row in 0..3 {
            mc[row][c] = r[row];
        }
        det3(&mc) / d
    }))
}

/// Least-squares coordinates of `v` in a frame of three ambient vectors.
pub fn decompose_in(frame: &[Vec4; 3], v: &Vec4) -> Result<[f64; 3]> {
    let g = gram(frame);
    let det = det3(&g);
    if !(det.max(0.0).sqrt() >= FRAME_SINGULAR_TOL) {
        return Err(Error::SingularFrame(det.max(0.0).sqrt()));
    }
    let rhs = [dot(&frame[0], v), dot(&frame[1], v), dot(&frame[2], v)];
    solve3(&g, &rhs).ok_or(Error::SingularFrame(0.0))
}

fn det3_jet(m: &[[Jet; 3]; 3]) -> Jet {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// [`decompose_in`] on jets: frame coordinates of `v` as functions near the point.
pub fn decompose_jets(frame: &[Vec<Jet>; 3], v: &[Jet]) -> [Jet; 3] {
    let dotj = |a: &[Jet], b: &[Jet]| -> Jet { a.iter().zip(b).map(|(x, y)| *x * *y).sum() };
    let g: [[Jet; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| dotj(&frame[i], &frame[j])));
    let r: [Jet; 3] = std::array::from_fn(|i| dotj(&frame[i], v));
    let d = det3_jet(&g).recip();
    std::array::from_fn(|c| {
        let mut mc = g;
        for row in 0..3 {
            mc[row][c] = r[row];
        }
        det3_jet(&mc) * d
    })
}

/// Newton projection of `raw` onto the chart constraint set.
pub fn project_to_chart(raw: &[f64], chart: ChartId) -> Result<ChartPoint> {
    let mut p = ChartPoint::unchecked(raw, chart)?.coords;
    if chart == ChartId::Heisenberg {
        return ChartPoint::new(&p[..3], chart);
    }
    for _ in 0..20 {
        let (g, grad) = chart.constraint_grad(&p).expect("constrained chart");
        if g.abs() <= 1e-12 {
            return ChartPoint::new(&p, chart);
        }
        let n2 = dot(&grad, &grad);
        if n2 == 0.0 {
            break;
        }
        for k in 0..4 {
            p[k] -= g * grad[k] / n2;
        }
    }
    let r = chart.residual(&p);
    if r <= 1e-12 {
        ChartPoint::new(&p, chart)
    } else {
        Err(Error::NoConvergence(format!("projection onto {chart} left residual {r:.3e}")))
    }
}

pub fn dot(a: &Vec4, b: &Vec4) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &Vec4) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &Vec4, b: &Vec4) -> Vec4 {
    std::array::from_fn(|k| a[k] - b[k])
}

pub fn add(a: &Vec4, b: &Vec4) -> Vec4 {
    std::array::from_fn(|k| a[k] + b[k])
}

pub fn scale(a: &Vec4, s: f64) -> Vec4 {
    std::array::from_fn(|k| a[k] * s)
}
