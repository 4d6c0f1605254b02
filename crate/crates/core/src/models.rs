//! Built-in model geometries and the surfaces studied on them.
//!
//! The three model spaces share the commutation relations
//! `[X1, X2] = X0`, `[X0, X1] = kappa X2`, `[X0, X2] = -kappa X1` with
//! `kappa = 0` (Heisenberg), `4 k^2` (SU(2)) and `-4 k^2` (SL(2,R)).

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::foliation::{SurfaceSpec, StopRule};
use crate::geometry::{self, field, ChartId, ChartPoint, ContactStructure, Field, Vec4, VectorField};
use crate::jet::Jet;
use crate::quadrature;

#[derive(Clone, Debug)]
pub struct ModelSpace {
    pub name: &'static str,
    pub kappa: f64,
    pub k: f64,
    pub structure: ContactStructure,
    pub chart: ChartId,
}

impl ModelSpace {
    /// The group identity in ambient coordinates.
    pub fn identity(&self) -> ChartPoint {
        let c: &[f64] = match self.chart {
            ChartId::Heisenberg => &[0.0, 0.0, 0.0],
            ChartId::Su2 => &[0.0, 0.0, 1.0, 0.0],
            ChartId::Sl2 => &[1.0, 0.0, 0.0, 1.0],
        };
        ChartPoint::new(c, self.chart).expect("identity lies on the chart")
    }

    /// A pseudo-random point of the model, deterministic in `seed`.
    pub fn sample_point(&self, seed: u64) -> ChartPoint {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        match self.chart {
            ChartId::Heisenberg => {
                let c: [f64; 3] = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
                ChartPoint::new(&c, self.chart).expect("R^3")
            }
            ChartId::Su2 => loop {
                let v: Vec4 = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
                let n = geometry::norm(&v);
                if n > 0.1 {
                    break geometry::project_to_chart(&geometry::scale(&v, 1.0 / n), self.chart)
                        .expect("normalized point");
                }
            },
            ChartId::Sl2 => loop {
                let x: f64 = rng.random_range(-2.0..2.0);
                let y: f64 = rng.random_range(-2.0..2.0);
                let z: f64 = rng.random_range(-2.0..2.0);
                if x.abs() > 0.2 {
                    break ChartPoint::new(&[x, y, z, (1.0 + y * z) / x], self.chart)
                        .expect("constructed on the hyperboloid");
                }
            },
        }
    }
}

fn vf(label: &str, dim: usize, f: impl Fn(&[Jet]) -> Vec<Jet> + Send + Sync + 'static) -> VectorField {
    VectorField::from_fn(label, dim, f)
}

/// Heisenberg group: `X1 = d_x - (y/2) d_z`, `X2 = d_y + (x/2) d_z`, `X0 = d_z`.
pub fn heisenberg() -> ModelSpace {
    let c0 = Jet::zero();
    let c1 = Jet::constant(1.0);
    let x1 = vf("X1", 3, move |x| vec![c1, c0, -x[1] * 0.5]);
    let x2 = vf("X2", 3, move |x| vec![c0, c1, x[0] * 0.5]);
    let x0 = vf("X0", 3, move |_| vec![c0, c0, c1]);
    let omega = vec![field(|x| x[1] * 0.5), field(|x| -x[0] * 0.5), geometry::constant(1.0)];
    ModelSpace {
        name: "heisenberg",
        kappa: 0.0,
        k: 0.0,
        structure: ContactStructure { chart: ChartId::Heisenberg, x1, x2, x0, omega: Some(omega) },
        chart: ChartId::Heisenberg,
    }
}

fn check_k(k: f64) -> Result<()> {
    if k > 0.0 && k.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("k must be positive, got {k}")))
    }
}

/// SU(2) as the unit sphere in `(x, y, z, w)`, identity `(0, 0, 1, 0)`.
pub fn su2(k: f64) -> ModelSpace {
    let x1 = vf("X1", 4, move |x| vec![x[2] * k, -x[3] * k, -x[0] * k, x[1] * k]);
    let x2 = vf("X2", 4, move |x| vec![x[3] * k, x[2] * k, -x[1] * k, -x[0] * k]);
    let kk = 2.0 * k * k;
    let x0 = vf("X0", 4, move |x| vec![x[1] * kk, -x[0] * kk, x[3] * kk, -x[2] * kk]);
    let s = 1.0 / kk;
    let omega = vec![
        field(move |x| x[1] * s),
        field(move |x| -x[0] * s),
        field(move |x| x[3] * s),
        field(move |x| -x[2] * s),
    ];
    ModelSpace {
        name: "su2",
        kappa: 4.0 * k * k,
        k,
        structure: ContactStructure { chart: ChartId::Su2, x1, x2, x0, omega: Some(omega) },
        chart: ChartId::Su2,
    }
}

/// SL(2,R) as the hyperboloid `xw - yz = 1`, identity `(1, 0, 0, 1)`.
pub fn sl2(k: f64) -> ModelSpace {
    let x1 = vf("X1", 4, move |x| vec![x[0] * k, -x[1] * k, x[2] * k, -x[3] * k]);
    let x2 = vf("X2", 4, move |x| vec![x[1] * k, x[0] * k, x[3] * k, x[2] * k]);
    let kk = 2.0 * k * k;
    let x0 = vf("X0", 4, move |x| vec![-x[1] * kk, x[0] * kk, -x[3] * kk, x[2] * kk]);
    let s = 1.0 / (4.0 * k * k);
    let omega = vec![
        field(move |x| x[2] * s),
        field(move |x| x[3] * s),
        field(move |x| -x[0] * s),
        field(move |x| -x[1] * s),
    ];
    ModelSpace {
        name: "sl2",
        kappa: -4.0 * k * k,
        k,
        structure: ContactStructure { chart: ChartId::Sl2, x1, x2, x0, omega: Some(omega) },
        chart: ChartId::Sl2,
    }
}

/// Model space for a curvature sign: `kappa > 0` SU(2), `0` Heisenberg, `< 0` SL(2,R).
pub fn model_for_kappa(kappa: f64, k: f64) -> Result<ModelSpace> {
    if kappa == 0.0 {
        return Ok(heisenberg());
    }
    check_k(k)?;
    if (kappa.abs() - 4.0 * k * k).abs() > 1e-12 * kappa.abs() {
        return Err(Error::InvalidParameter(format!("kappa = {kappa} is not +-4k^2 for k = {k}")));
    }
    Ok(if kappa > 0.0 { su2(k) } else { sl2(k) })
}

/// Closed-form drift evaluated from ambient coordinates.
pub type ClosedForm = Arc<dyn Fn(&ChartPoint) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct NamedSurface {
    pub name: String,
    pub spec: SurfaceSpec,
    pub model: ModelSpace,
    pub params: BTreeMap<String, f64>,
    pub closed_form_b: Option<ClosedForm>,
    pub char_points_expected: Vec<ChartPoint>,
    /// Half-width of the default seed box for characteristic-point search.
    pub search_half_width: f64,
    /// Stop rule suitable for tracing leaves of this surface.
    pub stop: StopRule,
    /// Arc-length coordinate from the characteristic point, where known.
    pub radial: Option<Field>,
    pub warnings: Vec<String>,
}

impl fmt::Debug for NamedSurface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NamedSurface")
            .field("name", &self.name)
            .field("params", &self.params)
            .field("char_points_expected", &self.char_points_expected)
            .finish()
    }
}

impl NamedSurface {
    fn new(name: &str, model: ModelSpace, u: Field, params: &[(&str, f64)]) -> Self {
        NamedSurface {
            name: name.to_string(),
            spec: SurfaceSpec::new(name, model.chart, u),
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            model,
            closed_form_b: None,
            char_points_expected: Vec::new(),
            search_half_width: 1.0,
            stop: StopRule::default(),
            radial: None,
            warnings: Vec::new(),
        }
    }

    pub fn cs(&self) -> &ContactStructure {
        &self.model.structure
    }

    pub fn closed_b(&self, p: &ChartPoint) -> Option<f64> {
        self.closed_form_b.as_ref().map(|f| f(p))
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

fn hpt(c: [f64; 3]) -> ChartPoint {
    ChartPoint::new(&c, ChartId::Heisenberg).expect("R^3")
}

/// `u = z - a (x^2 + y^2)` in the Heisenberg group.
pub fn paraboloid(a: f64) -> Result<NamedSurface> {
    if !(a >= 0.0 && a.is_finite()) {
        return Err(Error::InvalidParameter(format!("a must be non-negative, got {a}")));
    }
    let u = field(move |x| x[2] - (x[0] * x[0] + x[1] * x[1]) * a);
    let mut s = NamedSurface::new("paraboloid", heisenberg(), u, &[("a", a)]);
    let q = (1.0 + 16.0 * a * a).sqrt();
    s.closed_form_b = Some(Arc::new(move |p| 2.0 / (p.coords[0].hypot(p.coords[1]) * q)));
    s.char_points_expected = vec![hpt([0.0; 3])];
    s.radial = Some(field(move |x| (x[0] * x[0] + x[1] * x[1]).sqrt() * q));
    Ok(s)
}

/// `u = x^2 + y^2 + z^2 / c^2 - a^2` in the Heisenberg group.
pub fn spheroid(a: f64, c: f64) -> Result<NamedSurface> {
    positive("a", a)?;
    positive("c", c)?;
    let u = field(move |x| x[0] * x[0] + x[1] * x[1] + x[2] * x[2] / (c * c) - a * a);
    let mut s = NamedSurface::new("spheroid", heisenberg(), u, &[("a", a), ("c", c)]);
    s.closed_form_b = Some(Arc::new(move |p| {
        let cos = (p.coords[2] / (a * c)).clamp(-1.0, 1.0);
        let th = cos.acos();
        2.0 / th.tan() / (4.0 * c * c + a * a * cos * cos).sqrt()
    }));
    s.char_points_expected = vec![hpt([0.0, 0.0, -a * c]), hpt([0.0, 0.0, a * c])];
    s.search_half_width = 1.2 * a.max(a * c);
    Ok(s)
}

/// Northern half of the spheroid as `u = z - c sqrt(a^2 - x^2 - y^2)`.
pub fn spheroid_north_normalized(a: f64, c: f64) -> Result<NamedSurface> {
    positive("a", a)?;
    positive("c", c)?;
    let u = field(move |x| x[2] - (a * a - x[0] * x[0] - x[1] * x[1]).sqrt() * c);
    let mut s = NamedSurface::new("spheroid-north", heisenberg(), u, &[("a", a), ("c", c)]);
    s.char_points_expected = vec![hpt([0.0, 0.0, a * c])];
    s.search_half_width = 0.5 * a;
    Ok(s)
}

/// `u = z - a x y` in the Heisenberg group.
pub fn hyperbolic_paraboloid(a: f64) -> Result<NamedSurface> {
    positive("a", a)?;
    let u = field(move |x| x[2] - x[0] * x[1] * a);
    let mut s = NamedSurface::new("hyperbolic-paraboloid", heisenberg(), u, &[("a", a)]);
    // X0 u = 1 and |(X1 u, X2 u)| = |((a + 1/2) y, (1/2 - a) x)|; on the axes this
    // is 1 / ((1/2 +- a) s).
    s.closed_form_b = Some(Arc::new(move |p| {
        let (x, y) = (p.coords[0], p.coords[1]);
        1.0 / ((0.5 + a) * y).hypot((0.5 - a) * x)
    }));
    s.char_points_expected = vec![hpt([0.0; 3])];
    if (a - 0.5).abs() < 1e-12 {
        s.warnings.push("a = 1/2: the y = 0 axis is a line of degenerate characteristic points".into());
    }
    Ok(s)
}

/// Drift along the positive axes of the hyperbolic paraboloid.
pub fn hyperbolic_axis_drift(a: f64, axis: Axis, s: f64) -> f64 {
    match axis {
        Axis::Y => 1.0 / ((0.5 + a) * s),
        Axis::X => 1.0 / ((0.5 - a).abs() * s),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    X,
    Y,
}

/// `u = w` on SU(2).
pub fn su2_sphere(k: f64) -> Result<NamedSurface> {
    check_k(k)?;
    let u = field(|x| x[3]);
    let mut s = NamedSurface::new("su2-sphere", su2(k), u, &[("k", k)]);
    s.closed_form_b = Some(Arc::new(move |p| {
        let th = p.coords[2].clamp(-1.0, 1.0).acos() / k;
        -2.0 * k / (k * th).tan()
    }));
    s.char_points_expected = vec![
        ChartPoint::new(&[0.0, 0.0, -1.0, 0.0], ChartId::Su2)?,
        ChartPoint::new(&[0.0, 0.0, 1.0, 0.0], ChartId::Su2)?,
    ];
    s.radial = Some(field(move |x| x[2].acos() / k));
    Ok(s)
}

/// `u = y - z` on SL(2,R).
pub fn sl2_plane(k: f64) -> Result<NamedSurface> {
    check_k(k)?;
    let u = field(|x| x[1] - x[2]);
    let mut s = NamedSurface::new("sl2-plane", sl2(k), u, &[("k", k)]);
    s.closed_form_b = Some(Arc::new(move |p| {
        let r = ((p.coords[0] + p.coords[3]).abs() / 2.0).max(1.0).acosh() / k;
        2.0 * k / (k * r).tanh()
    }));
    s.char_points_expected = vec![
        ChartPoint::new(&[-1.0, 0.0, 0.0, -1.0], ChartId::Sl2)?,
        ChartPoint::new(&[1.0, 0.0, 0.0, 1.0], ChartId::Sl2)?,
    ];
    s.search_half_width = 1.5;
    s.stop.sheet = Some(1.0);
    s.radial = Some(field(move |x| ((x[0] + x[3]) * 0.5).acosh() / k));
    Ok(s)
}

/// Point of the SL(2,R) upper sheet in the `(r, theta)` coordinates.
pub fn sl2_plane_point(k: f64, r: f64, theta: f64) -> Result<ChartPoint> {
    let (ch, sh) = ((k * r).cosh(), (k * r).sinh());
    let c = [ch + sh * theta.cos(), sh * theta.sin(), sh * theta.sin(), ch - sh * theta.cos()];
    ChartPoint::new(&c, ChartId::Sl2)
}

/// Point of the SU(2) sphere `w = 0` in polar coordinates about `(0, 0, 1, 0)`.
pub fn su2_sphere_point(k: f64, theta: f64, phi: f64) -> Result<ChartPoint> {
    let (st, ct) = (k * theta).sin_cos();
    ChartPoint::new(&[st * phi.cos(), st * phi.sin(), ct, 0.0], ChartId::Su2)
}

/// Drift of the model-space process in the arc length `r` from the identity.
pub fn theorem_drift(kappa: f64, k: f64, r: f64) -> f64 {
    if kappa == 0.0 {
        2.0 / r
    } else if kappa > 0.0 {
        2.0 * k / (k * r).tan()
    } else {
        2.0 * k / (k * r).tanh()
    }
}

/// `exp(r cos(theta) X1 + r sin(theta) X2)` by RK4 on the flow of the
/// left-invariant field from the identity.
pub fn exp_point(model: &ModelSpace, r: f64, theta: f64) -> Result<ChartPoint> {
    let (c, s) = (theta.cos(), theta.sin());
    if model.chart == ChartId::Heisenberg {
        return ChartPoint::new(&[r * c, r * s, 0.0], model.chart);
    }
    let cs = &model.structure;
    let v = |x: &Vec4| -> Vec4 {
        let p = ChartPoint::unchecked(x, model.chart).expect("4 coordinates");
        let (a, b) = (cs.x1.at(&p), cs.x2.at(&p));
        std::array::from_fn(|i| c * a[i] + s * b[i])
    };
    let n = ((r.abs() / 1e-3).ceil() as usize).max(1);
    let h = r / n as f64;
    let mut x = model.identity().coords;
    for _ in 0..n {
        let k1 = v(&x);
        let k2 = v(&geometry::add(&x, &geometry::scale(&k1, h / 2.0)));
        let k3 = v(&geometry::add(&x, &geometry::scale(&k2, h / 2.0)));
        let k4 = v(&geometry::add(&x, &geometry::scale(&k3, h)));
        x = std::array::from_fn(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
        x = geometry::project_to_chart(&x, model.chart)?.coords;
    }
    ChartPoint::new(&x, model.chart)
}

/// The surface ruled by horizontal geodesics through the identity.
///
/// Its defining function is oriented so that the foliation field points away
/// from the identity; the drift then equals [`theorem_drift`] in `r`.
pub fn canonical_exp_surface(kappa: f64, k: f64) -> Result<NamedSurface> {
    let model = model_for_kappa(kappa, k)?;
    let (u, radial): (Field, Field) = match model.chart {
        ChartId::Heisenberg => (field(|x| x[2]), field(|x| (x[0] * x[0] + x[1] * x[1]).sqrt())),
        ChartId::Su2 => (field(|x| -x[3]), field(move |x| x[2].acos() / k)),
        ChartId::Sl2 => (field(|x| x[1] - x[2]), field(move |x| ((x[0] + x[3]) * 0.5).acosh() / k)),
    };
    let mut s = NamedSurface::new("exp-surface", model.clone(), u, &[("kappa", kappa), ("k", k)]);
    let rad = radial.clone();
    s.closed_form_b = Some(Arc::new(move |p| theorem_drift(kappa, k, rad.jet(p.x(), 0).value())));
    s.char_points_expected = vec![model.identity()];
    if model.chart == ChartId::Sl2 {
        s.stop.sheet = Some(1.0);
    }
    s.radial = Some(radial);
    Ok(s)
}

/// Point at arc length `s` on the logarithmic spiral leaf with phase `psi`.
pub fn spiral_leaf(a: f64, psi: f64, s: f64) -> Result<ChartPoint> {
    positive("s", s)?;
    let q = 1.0 + 16.0 * a * a;
    let r = s / q.sqrt();
    let th = 4.0 * a * r.ln() + psi;
    let z = a * s * s / q;
    ChartPoint::new(&[r * th.cos(), r * th.sin(), z], ChartId::Heisenberg)
}

/// `s(theta) = int_0^theta sqrt(4c^2 + a^2 cos^2 t) dt`.
pub fn spheroid_arclength(a: f64, c: f64, theta: f64) -> Result<f64> {
    Ok(quadrature::integrate(
        |t| (4.0 * c * c + a * a * t.cos().powi(2)).sqrt(),
        0.0,
        theta,
        1e-13,
        1e-15,
    )?
    .value)
}

/// Inverse of [`spheroid_arclength`] by bracketed Newton iteration.
pub fn spheroid_arclength_inverse(a: f64, c: f64, s: f64) -> Result<f64> {
    let total = spheroid_arclength(a, c, PI)?;
    if !(0.0..=total).contains(&s) {
        return Err(Error::Domain(format!("arc length {s} outside [0, {total}]")));
    }
    let (mut lo, mut hi) = (0.0, PI);
    let mut th = PI * s / total;
    for _ in 0..100 {
        let f = spheroid_arclength(a, c, th)? - s;
        if f.abs() <= 1e-13 * total.max(1.0) {
            return Ok(th);
        }
        if f > 0.0 {
            hi = th;
        } else {
            lo = th;
        }
        let d = (4.0 * c * c + a * a * th.cos().powi(2)).sqrt();
        let next = th - f / d;
        th = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
    }
    Err(Error::NoConvergence(format!("inverse arc length at s = {s}")))
}

/// Angle between the leaf and the meridian direction on the spheroid.
pub fn loxodrome_angle(a: f64, c: f64, theta: f64) -> f64 {
    let (s, co) = theta.sin_cos();
    let d = (a * a * co * co + a * a * c * c * s * s + 4.0 * c * c).sqrt();
    (-2.0 * c / d).acos()
}

/// Bessel orders of the leaf processes along the `y` and `x` axes.
pub fn axis_bessel_orders(a: f64) -> Result<(f64, f64)> {
    if (a - 0.5).abs() < 1e-12 {
        return Err(Error::InvalidParameter("a = 1/2 is degenerate".into()));
    }
    positive("a", a)?;
    Ok((1.0 + 2.0 / (1.0 + 2.0 * a), 1.0 + 2.0 / (1.0 - 2.0 * a)))
}

/// A surface with user-supplied frame and defining function, each entry an
/// expression in the chart coordinates (see [`crate::expr`]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomSurface {
    pub chart: ChartId,
    pub x1: Vec<String>,
    pub x2: Vec<String>,
    pub x0: Vec<String>,
    pub u: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// Half-width of the seed box for characteristic-point search.
    #[serde(default = "default_half_width")]
    pub search_half_width: f64,
}

fn default_half_width() -> f64 {
    1.0
}

/// Builds a [`CustomSurface`]; characteristic points are located by search.
pub fn custom_surface(def: &CustomSurface) -> Result<NamedSurface> {
    let dim = def.chart.dim();
    let parse_vf = |label: &str, src: &[String]| -> Result<VectorField> {
        if src.len() != dim {
            return Err(Error::InvalidParameter(format!(
                "{label} needs {dim} coefficients on the {} chart, got {}",
                def.chart,
                src.len()
            )));
        }
        let coeffs = src
            .iter()
            .map(|e| crate::expr::parse_field(e, &def.params, dim))
            .collect::<Result<Vec<_>>>()?;
        Ok(VectorField::new(label, coeffs))
    };
    let structure = ContactStructure {
        chart: def.chart,
        x1: parse_vf("X1", &def.x1)?,
        x2: parse_vf("X2", &def.x2)?,
        x0: parse_vf("X0", &def.x0)?,
        omega: None,
    };
    let model = ModelSpace { name: "custom", kappa: f64::NAN, k: f64::NAN, structure, chart: def.chart };
    let u = crate::expr::parse_field(&def.u, &def.params, dim)?;
    let params: Vec<(&str, f64)> = def.params.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    let mut s = NamedSurface::new("custom", model, u, &params);
    s.search_half_width = def.search_half_width;
    let seeds = crate::foliation::lattice_seeds(def.chart, def.search_half_width, 7);
    s.char_points_expected = crate::foliation::find_characteristic_points(&s.spec, s.cs(), &seeds).points;
    Ok(s)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParamSchema {
    pub name: String,
    pub default: f64,
    pub constraint: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub name: String,
    pub model: String,
    pub params: Vec<ParamSchema>,
    pub defining_function: String,
}

fn schema(name: &str, default: f64, constraint: &str) -> ParamSchema {
    ParamSchema { name: name.into(), default, constraint: constraint.into() }
}

/// Built-in surfaces and their parameters.
pub fn registry() -> Vec<RegistryEntry> {
    let e = |name: &str, model: &str, params: Vec<ParamSchema>, u: &str| RegistryEntry {
        name: name.into(),
        model: model.into(),
        params,
        defining_function: u.into(),
    };
    vec![
        e("paraboloid", "heisenberg", vec![schema("a", 1.0, ">= 0")], "z - a*(x^2 + y^2)"),
        e(
            "spheroid",
            "heisenberg",
            vec![schema("a", 1.0, "> 0"), schema("c", 1.0, "> 0")],
            "x^2 + y^2 + z^2/c^2 - a^2",
        ),
        e(
            "spheroid-north",
            "heisenberg",
            vec![schema("a", 1.0, "> 0"), schema("c", 1.0, "> 0")],
            "z - c*sqrt(a^2 - x^2 - y^2)",
        ),
        e("hyperbolic-paraboloid", "heisenberg", vec![schema("a", 1.0, "> 0, != 1/2")], "z - a*x*y"),
        e("su2-sphere", "su2", vec![schema("k", 1.0, "> 0")], "w"),
        e("sl2-plane", "sl2", vec![schema("k", 1.0, "> 0")], "y - z"),
        e(
            "exp-surface",
            "by kappa",
            vec![schema("kappa", 0.0, "0 or +-4k^2"), schema("k", 1.0, "> 0")],
            "exp(r cos(t) X1 + r sin(t) X2)",
        ),
    ]
}

/// Builds a registry surface from a parameter map (missing keys take defaults).
pub fn build(name: &str, params: &BTreeMap<String, f64>) -> Result<NamedSurface> {
    let entry = registry()
        .into_iter()
        .find(|e| e.name == name)
        .ok_or_else(|| Error::InvalidParameter(format!("unknown surface '{name}'")))?;
    for key in params.keys() {
        if !entry.params.iter().any(|p| &p.name == key) {
            return Err(Error::InvalidParameter(format!("surface '{name}' has no parameter '{key}'")));
        }
    }
    let get = |k: &str| {
        params
            .get(k)
            .copied()
            .unwrap_or_else(|| entry.params.iter().find(|p| p.name == k).map_or(0.0, |p| p.default))
    };
    match name {
        "paraboloid" => paraboloid(get("a")),
        "spheroid" => spheroid(get("a"), get("c")),
        "spheroid-north" => spheroid_north_normalized(get("a"), get("c")),
        "hyperbolic-paraboloid" => hyperbolic_paraboloid(get("a")),
        "su2-sphere" => su2_sphere(get("k")),
        "sl2-plane" => sl2_plane(get("k")),
        "exp-surface" => canonical_exp_surface(get("kappa"), get("k")),
        _ => unreachable!("registry and builder disagree"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::foliation::{self, PointClass};

    #[test]
    fn commutation_relations() {
        for m in [heisenberg(), su2(1.0), su2(0.6), sl2(1.0), sl2(1.7)] {
            for i in 0..20 {
                let p = m.sample_point(i);
                let cs = &m.structure;
                let b12 = geometry::lie_bracket(&cs.x1, &cs.x2, &p).unwrap();
                let b01 = geometry::lie_bracket(&cs.x0, &cs.x1, &p).unwrap();
                let b02 = geometry::lie_bracket(&cs.x0, &cs.x2, &p).unwrap();
                let [e1, e2, e0] = cs.frame_at(&p);
                for k in 0..4 {
                    assert!((b12[k] - e0[k]).abs() < 1e-7, "{} [X1,X2]", m.name);
                    assert!((b01[k] - m.kappa * e2[k]).abs() < 1e-7, "{} [X0,X1]", m.name);
                    assert!((b02[k] + m.kappa * e1[k]).abs() < 1e-7, "{} [X0,X2]", m.name);
                }
                let v = cs.validate(&[p]).unwrap();
                assert!(v.max() < 1e-8, "{}: {v:?}", m.name);
            }
        }
    }

    #[test]
    fn spiral_leaf_examples() {
        let p = spiral_leaf(0.0, 0.3, 2.0).unwrap();
        assert!((p.coords[1].atan2(p.coords[0]) - 0.3).abs() < 1e-14);
        let a = 0.7;
        let q = spiral_leaf(a, 0.0, (1.0 + 16.0 * a * a).sqrt()).unwrap();
        assert!((q.coords[0].hypot(q.coords[1]) - 1.0).abs() < 1e-14);
        let s = paraboloid(a).unwrap();
        assert!(s.spec.u_at(&q).abs() < 1e-12);
    }

    #[test]
    fn arclength_examples() {
        assert!((spheroid_arclength(0.0, 1.5, 1.0).unwrap() - 3.0).abs() < 1e-13);
        let s = spheroid_arclength(1.0, 1.0, 2.0).unwrap();
        let th = spheroid_arclength_inverse(1.0, 1.0, s).unwrap();
        assert!((th - 2.0).abs() < 1e-10);
    }

    #[test]
    fn loxodrome_constant_for_unit_c() {
        let target = (-2.0 / 5f64.sqrt()).acos();
        for i in 1..20 {
            let th = PI * i as f64 / 20.0;
            assert!((loxodrome_angle(1.0, 1.0, th) - target).abs() < 1e-14);
        }
        assert!((loxodrome_angle(1.0, 2.0, 0.3) - loxodrome_angle(1.0, 2.0, 1.3)).abs() > 1e-3);
    }

    #[test]
    fn bessel_orders() {
        let (y, x) = axis_bessel_orders(1.0).unwrap();
        assert!((y - 5.0 / 3.0).abs() < 1e-15 && (x + 1.0).abs() < 1e-15);
        let (y, x) = axis_bessel_orders(0.25).unwrap();
        assert!((y - 7.0 / 3.0).abs() < 1e-15 && (x - 5.0).abs() < 1e-15);
        let (y, x) = axis_bessel_orders(1e-9).unwrap();
        assert!((y - 3.0).abs() < 1e-8 && (x - 3.0).abs() < 1e-8);
        assert!(axis_bessel_orders(0.5).is_err());
    }

    #[test]
    fn expected_points_are_characteristic() {
        let surfaces = [
            paraboloid(1.0).unwrap(),
            spheroid(1.0, 1.0).unwrap(),
            spheroid(2.0, 0.5).unwrap(),
            hyperbolic_paraboloid(1.0).unwrap(),
            su2_sphere(1.0).unwrap(),
            sl2_plane(1.0).unwrap(),
        ];
        for s in &surfaces {
            for p in &s.char_points_expected {
                let c = foliation::criterion(&s.spec, s.cs(), p).unwrap();
                assert!(c <= 1e-10, "{}: {c}", s.name);
                assert!(s.spec.u_at(p).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn sl2_coordinates_satisfy_constraint() {
        for (r, th) in [(0.3, 0.1), (1.2, 2.0), (2.5, -1.0)] {
            let p = sl2_plane_point(1.0, r, th).unwrap();
            assert!(p.constraint_residual < 1e-10);
        }
    }

    #[test]
    fn exp_surface_matches_named_surfaces() {
        for kappa in [-4.0, 0.0, 4.0] {
            let s = canonical_exp_surface(kappa, 1.0).unwrap();
            for (r, th) in [(0.3, 0.2), (1.0, 2.5), (1.2, -1.0)] {
                let p = exp_point(&s.model, r, th).unwrap();
                assert!(s.spec.u_at(&p).abs() < 1e-10, "kappa {kappa}");
                let rad = s.radial.as_ref().unwrap().jet(p.x(), 0).value();
                assert!((rad - r).abs() < 1e-9, "kappa {kappa}: {rad} vs {r}");
            }
        }
    }

    #[test]
    fn spheroid_north_normalized_hess() {
        let (a, c) = (1.5, 0.8);
        let s = spheroid_north_normalized(a, c).unwrap();
        let r = foliation::classify(&s.spec, s.cs(), &s.char_points_expected[0]).unwrap();
        assert_eq!(r.class, PointClass::EllipticFocus);
        let m = r.hess_j;
        assert!((m[0][0] - 0.5).abs() < 1e-12 && (m[1][1] - 0.5).abs() < 1e-12);
        assert!((m[0][1] + c / a).abs() < 1e-12 && (m[1][0] - c / a).abs() < 1e-12);
        // The generic spheroid, normalized, has the same horizontal Hessian.
        let g = spheroid(a, c).unwrap();
        let r2 = foliation::classify(&g.spec, g.cs(), &g.char_points_expected[1]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((r2.hess_j[i][j] - m[i][j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn registry_builds_every_entry() {
        for e in registry() {
            let mut params = BTreeMap::new();
            if e.name == "exp-surface" {
                params.insert("kappa".to_string(), 4.0);
            }
            let s = build(&e.name, &params).unwrap();
            assert_eq!(s.name, e.name);
        }
        assert!(build("torus", &BTreeMap::new()).is_err());
        let mut bad = BTreeMap::new();
        bad.insert("q".to_string(), 1.0);
        assert!(build("paraboloid", &bad).is_err());
    }

    #[test]
    fn custom_heisenberg_paraboloid_matches_builtin() {
        let st = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let mut params = BTreeMap::new();
        params.insert("a".to_string(), 1.0);
        let def = CustomSurface {
            chart: ChartId::Heisenberg,
            x1: st(&["1", "0", "-y/2"]),
            x2: st(&["0", "1", "x/2"]),
            x0: st(&["0", "0", "1"]),
            u: "z - a*(x^2 + y^2)".into(),
            params,
            search_half_width: 1.0,
        };
        let c = custom_surface(&def).unwrap();
        assert_eq!(c.char_points_expected.len(), 1);
        assert!(geometry::norm(&c.char_points_expected[0].coords) < 1e-10);
        let b = paraboloid(1.0).unwrap();
        let p = spiral_leaf(1.0, 0.4, 0.7).unwrap();
        let d1 = foliation::drift_b(&c.spec, c.cs(), &p).unwrap();
        let d2 = foliation::drift_b(&b.spec, b.cs(), &p).unwrap();
        assert!((d1 - d2).abs() < 1e-13);
        let bad = CustomSurface { x0: st(&["0", "1"]), ..def };
        assert!(custom_surface(&bad).is_err());
    }
}
