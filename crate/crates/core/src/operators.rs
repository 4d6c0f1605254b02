//! The operators `Delta_eps`, their limit `Delta_0`, and Gaussian curvatures.
//!
//! On `S` minus its characteristic set the frame
//!
//! ```text
//! F1 = X_S,    F2 = b J(F1) - X0
//! ```
//!
//! is `g_eps`-orthogonal with `|F1| = 1` and `|F2|^2 = b^2 + 1/eps`, so
//! `(F1, a_eps F2)` is orthonormal with `a_eps = (b^2 + 1/eps)^(-1/2)`. Both
//! fields are extended off `S` by the same formulas, which is what makes
//! `F2 F2 f` computable from jets.

use std::path::Path;

use nalgebra::{Matrix4x2, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::foliation::{self, fmt17, SurfaceJets, SurfaceSpec};
use crate::geometry::{self, apply_jets, bracket_jets, decompose_jets, ChartPoint, ContactStructure, Field, Vec4};
use crate::jet::Jet;

/// The tangent frame `(F1, F2)` at a point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameF {
    pub f1: Vec4,
    pub f2: Vec4,
}

pub fn frame_f(s: &SurfaceSpec, cs: &ContactStructure, p: &ChartPoint) -> Result<FrameF> {
    let j = SurfaceJets::at(s, cs, p, 0)?;
    let du = j.u.gradient();
    let f1 = SurfaceJets::vec(&j.f1);
    let f2 = SurfaceJets::vec(&j.f2);
    let scale = 1.0 + j.b.value().abs() + geometry::norm(&du);
    for (name, v) in [("F1", &f1), ("F2", &f2)] {
        let t = geometry::dot(v, &du);
        if t.abs() > 1e-9 * scale {
            return Err(Error::Domain(format!("{name} u = {t:.3e}, frame not tangent")));
        }
    }
    Ok(FrameF { f1, f2 })
}

/// `(h(F1), eta(F1))` from brackets: `h = -g([F1, J F1]|_D, F1)` and
/// `eta = -g([X0, F1], F1)`.
pub fn h_eta(s: &SurfaceSpec, cs: &ContactStructure, p: &ChartPoint) -> Result<(f64, f64)> {
    let j = SurfaceJets::at(s, cs, p, 1)?;
    let br = SurfaceJets::vec(&bracket_jets(&j.f1, &j.jf1));
    let c = cs.decompose(p, &br)?;
    let (al, be) = (j.alpha.value(), j.beta.value());
    let h = -(c[0] * al + c[1] * be);
    let x0 = cs.x0.jets(p.x(), 1);
    let br0 = SurfaceJets::vec(&bracket_jets(&x0, &j.f1));
    let c0 = cs.decompose(p, &br0)?;
    let eta = -(c0[0] * al + c0[1] * be);
    Ok((h, eta))
}

/// `(h, eta)` from the structure functions, as an independent route.
pub fn h_eta_structure(s: &SurfaceSpec, cs: &ContactStructure, p: &ChartPoint) -> Result<(f64, f64)> {
    let j = SurfaceJets::at(s, cs, p, 1)?;
    let c = cs.structure_functions(p)?;
    let f10 = j.f1.iter().map(|v| v.truncate(0)).collect::<Vec<_>>();
    let (al, be) = (j.alpha.value(), j.beta.value());
    let f1_al = apply_jets(&f10, &j.alpha).value();
    let f1_be = apply_jets(&f10, &j.beta).value();
    let h = al * f1_be - be * f1_al - al * c.c12_1 - be * c.c12_2;
    let eta = -(al * al * c.c01_1 + al * be * (c.c02_1 + c.c01_2) + be * be * c.c02_2);
    Ok((h, eta))
}

/// `(b1, b2)` with `[F1, F2] = b1 F1 + b2 F2`, by direct least squares.
pub fn bracket_coefficients(s: &SurfaceSpec, cs: &ContactStructure, p: &ChartPoint) -> Result<(f64, f64)> {
    let j = SurfaceJets::at(s, cs, p, 1)?;
    let br = SurfaceJets::vec(&bracket_jets(&j.f1, &j.f2));
    let f1 = SurfaceJets::vec(&j.f1);
    let f2 = SurfaceJets::vec(&j.f2);
    let m = Matrix4x2::from_fn(|i, k| if k == 0 { f1[i] } else { f2[i] });
    let rhs = Vector4::from_column_slice(&br);
    let sol = m
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::Domain(e.to_string()))?;
    Ok((sol[0], sol[1]))
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")))
    }
}

/// `a_eps = (b^2 + 1/eps)^(-1/2)`.
pub fn a_eps(s: &SurfaceSpec, cs: &ContactStructure, p: &ChartPoint, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    let b = foliation::drift_b(s, cs, p)?;
    Ok(a_of_b(b, eps))
}

pub fn a_of_b(b: f64, eps: f64) -> f64 {
    (eps / (eps * b * b + 1.0)).sqrt()
}

/// First and second derivatives of `f` along `F1` and `F2`.
#[derive(Clone, Copy, Debug)]
struct FDerivs {
    b: f64,
    f1b: f64,
    f1f: f64,
    f1f1f: f64,
    f2f: f64,
    f2f2f: f64,
}

fn f_derivs(j: &SurfaceJets, f: &Field, p: &ChartPoint) -> Result<FDerivs> {
    let fj = geometry::eval_jet(f, p, 2)?;
    let f1_0: Vec<Jet> = j.f1.iter().map(|v| v.truncate(0)).collect();
    let f2_0: Vec<Jet> = j.f2.iter().map(|v| v.truncate(0)).collect();
    let f1f = apply_jets(&j.f1, &fj);
    let f2f = apply_jets(&j.f2, &fj);
    let out = FDerivs {
        b: j.b.value(),
        f1b: apply_jets(&f1_0, &j.b).value(),
        f1f: f1f.value(),
        f1f1f: apply_jets(&f1_0, &f1f).value(),
        f2f: f2f.value(),
        f2f2f: apply_jets(&f2_0, &f2f).value(),
    };
    Ok(out)
}

/// `Delta_eps f` on the surface.
pub fn delta_eps(s: &SurfaceSpec, cs: &ContactStructure, f: &Field, p: &ChartPoint, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    let j = SurfaceJets::at(s, cs, p, 1)?;
    let d = f_derivs(&j, f, p)?;
    let (h, eta) = h_eta(s, cs, p)?;
    let a2 = eps / (eps * d.b * d.b + 1.0);
    let q = -eps * d.b * d.f1b / (eps * d.b * d.b + 1.0);
    Ok(d.f1f1f + a2 * d.f2f2f + (d.b - q) * d.f1f - a2 * (d.b * h + eta) * d.f2f)
}

/// `Delta_0 f = X_S X_S f + b X_S f`.
pub fn delta0(s: &SurfaceSpec, cs: &ContactStructure, f: &Field, p: &ChartPoint) -> Result<f64> {
    let j = SurfaceJets::at(s, cs, p, 1)?;
    let d = f_derivs(&j, f, p)?;
    Ok(d.f1f1f + d.b * d.f1f)
}

/// `F2 F2 f`, the term controlling the rate of convergence.
pub fn f2f2(s: &SurfaceSpec, cs: &ContactStructure, f: &Field, p: &ChartPoint) -> Result<f64> {
    let j = SurfaceJets::at(s, cs, p, 1)?;
    Ok(f_derivs(&j, f, p)?.f2f2f)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorSample {
    pub point: ChartPoint,
    pub epsilon: f64,
    pub delta_eps_f: f64,
    pub delta0_f: f64,
    pub error: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub samples: Vec<OperatorSample>,
    pub eps: Vec<f64>,
    pub max_error_per_eps: Vec<f64>,
    /// `log(err_i / err_{i+1}) / log(eps_i / eps_{i+1})` for consecutive `eps`.
    pub empirical_order: Vec<f64>,
}

impl ConvergenceReport {
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "eps": self.eps,
            "max_error_per_eps": self.max_error_per_eps,
            "empirical_order": self.empirical_order,
        })
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let dim = self.samples.first().map_or(3, |s| s.point.dim());
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["eps".to_string()];
        header.extend((0..dim).map(|k| format!("coord{k}")));
        header.extend(["delta_eps", "delta0", "error"].map(String::from));
        wr.write_record(&header)?;
        for s in &self.samples {
            let mut rec = vec![fmt17(s.epsilon)];
            rec.extend(s.point.x().iter().map(|v| fmt17(*v)));
            rec.extend([s.delta_eps_f, s.delta0_f, s.error].map(fmt17));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn save(&self, csv_path: &Path, json_path: &Path) -> Result<()> {
        crate::io::write_atomic(csv_path, |w| self.write_csv(w))?;
        crate::io::write_json(json_path, &self.summary_json())
    }
}

/// `|Delta_eps f - Delta_0 f|` over `points x eps_list`, in parallel.
///
/// Samples are ordered point-major, matching `points` then `eps_list`.
pub fn convergence_study(
    s: &SurfaceSpec,
    cs: &ContactStructure,
    f: &Field,
    points: &[ChartPoint],
    eps_list: &[f64],
) -> Result<ConvergenceReport> {
    if eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidParameter("eps list must be strictly decreasing".into()));
    }
    let samples: Vec<OperatorSample> = points
        .par_iter()
        .map(|p| -> Result<Vec<OperatorSample>> {
            let d0 = delta0(s, cs, f, p)?;
            eps_list
                .iter()
                .map(|&eps| {
                    let de = delta_eps(s, cs, f, p, eps)?;
                    Ok(OperatorSample { point: *p, epsilon: eps, delta_eps_f: de, delta0_f: d0, error: (de - d0).abs() })
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let max_error_per_eps: Vec<f64> = eps_list
        .iter()
        .map(|&e| samples.iter().filter(|s| s.epsilon == e).map(|s| s.error).fold(0.0, f64::max))
        .collect();
    let empirical_order = (1..eps_list.len())
        .map(|i| {
            (max_error_per_eps[i - 1] / max_error_per_eps[i]).ln() / (eps_list[i - 1] / eps_list[i]).ln()
        })
        .collect();
    Ok(ConvergenceReport { samples, eps: eps_list.to_vec(), max_error_per_eps, empirical_order })
}

/// Smooth bump `exp(1 - 1 / (1 - d^2 / R^2))` in ambient distance from `center`,
/// zero for `d >= R`.
pub fn bump(center: Vec4, radius: f64) -> Field {
    geometry::field(move |x| {
        let d2: Jet = x.iter().enumerate().map(|(k, v)| (*v - center[k]).square()).sum();
        let t = d2 / (radius * radius);
        if t.value() >= 1.0 {
            Jet::zero().truncate(x.first().map_or(0, |v| v.order()))
        } else {
            (1.0 - (1.0 - t).recip()).exp()
        }
    })
}

/// Gaussian curvature of `(S, g_eps)`.
///
/// With the orthonormal frame `e1 = F1`, `e2 = a F2` and
/// `[e1, e2] = A e1 + B e2`, `A = a b1`, `B = F1(a)/a - b`,
/// the curvature is `e1(B) - e2(A) - A^2 - B^2`.
pub fn gauss_k(s: &SurfaceSpec, cs: &ContactStructure, p: &ChartPoint, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    let j = SurfaceJets::at(s, cs, p, 2)?;
    let f1_1: Vec<Jet> = j.f1.iter().map(|v| v.truncate(1)).collect();
    let f1_0: Vec<Jet> = j.f1.iter().map(|v| v.truncate(0)).collect();
    let f2_0: Vec<Jet> = j.f2.iter().map(|v| v.truncate(0)).collect();
    let b2 = j.b;
    let b1 = b2.truncate(1);
    let f1b = apply_jets(&f1_1, &b2);
    let den = eps * b1 * b1 + 1.0;
    let q = -(eps * b1 * f1b) / den;
    let big_b = q - b1;
    // b1 (the bracket coefficient) from [F1, F2] in the contact frame.
    let br = bracket_jets(&j.f1, &j.f2);
    let frame1 = [
        j.frame[0].iter().map(|v| v.truncate(1)).collect::<Vec<_>>(),
        j.frame[1].iter().map(|v| v.truncate(1)).collect::<Vec<_>>(),
        j.frame[2].iter().map(|v| v.truncate(1)).collect::<Vec<_>>(),
    ];
    let c = decompose_jets(&frame1, &br);
    let coef1 = j.alpha.truncate(1) * c[0] + j.beta.truncate(1) * c[1];
    let a = (den.recip() * eps).sqrt();
    let big_a = a * coef1;
    let e1_b = apply_jets(&f1_0, &big_b).value();
    let e2_a = a.value() * apply_jets(&f2_0, &big_a).value();
    let k = e1_b - e2_a - big_a.value().powi(2) - big_b.value().powi(2);
    if k.is_finite() {
        Ok(k)
    } else {
        Err(Error::Domain(format!("K_eps undefined at {:?}", p.x())))
    }
}

/// `K_0 = -X_S(b) - b^2`.
pub fn gauss_k0(s: &SurfaceSpec, cs: &ContactStructure, p: &ChartPoint) -> Result<f64> {
    let j = SurfaceJets::at(s, cs, p, 1)?;
    let f1_0: Vec<Jet> = j.f1.iter().map(|v| v.truncate(0)).collect();
    let b = j.b.value();
    Ok(-apply_jets(&f1_0, &j.b).value() - b * b)
}

/// Limit of `K_eps` as `eps -> 0`, Richardson-extrapolated from
/// `eps = 1e-5, 5e-6, 2.5e-6` to cancel the linear and quadratic terms.
pub fn gauss_k_limit(s: &SurfaceSpec, cs: &ContactStructure, p: &ChartPoint) -> Result<f64> {
    let e = 1e-5;
    let k1 = gauss_k(s, cs, p, e)?;
    let k2 = gauss_k(s, cs, p, e / 2.0)?;
    let k4 = gauss_k(s, cs, p, e / 4.0)?;
    Ok((8.0 * k4 - 6.0 * k2 + k1) / 3.0)
}

fn flow(s: &SurfaceSpec, cs: &ContactStructure, p: &ChartPoint, t: f64) -> Result<ChartPoint> {
    let v = |x: &Vec4| -> Result<Vec4> {
        let q = ChartPoint::unchecked(&x[..p.dim()], p.chart)?;
        foliation::hat_x(s, cs, &q)
    };
    let x = p.coords;
    let k1 = v(&x)?;
    let k2 = v(&geometry::add(&x, &geometry::scale(&k1, t / 2.0)))?;
    let k3 = v(&geometry::add(&x, &geometry::scale(&k2, t / 2.0)))?;
    let k4 = v(&geometry::add(&x, &geometry::scale(&k3, t)))?;
    let raw: Vec4 = std::array::from_fn(|i| x[i] + t / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    foliation::project_to_surface(s, &raw)
}

/// `d b / ds` along the leaf through `p`, by Richardson-extrapolated central
/// differences of `b` along the flow of `X_S`.
pub fn leaf_derivative_of_b(s: &SurfaceSpec, cs: &ContactStructure, p: &ChartPoint) -> Result<f64> {
    let b0 = foliation::drift_b(s, cs, p)?;
    let h = 1e-3 / (1.0 + b0.abs());
    let cd = |h: f64| -> Result<f64> {
        let bp = foliation::drift_b(s, cs, &flow(s, cs, p, h)?)?;
        let bm = foliation::drift_b(s, cs, &flow(s, cs, p, -h)?)?;
        Ok((bp - bm) / (2.0 * h))
    };
    let (d1, d2) = (cd(h)?, cd(h / 2.0)?);
    Ok((4.0 * d2 - d1) / 3.0)
}

/// `X_S(b) + b^2 + K_0` with `X_S(b)` from the flow and `K_0` as the limit of
/// the curvatures of `g_eps`; each term is computed independently.
pub fn riccati_residual(s: &SurfaceSpec, cs: &ContactStructure, p: &ChartPoint) -> Result<f64> {
    let bdot = leaf_derivative_of_b(s, cs, p)?;
    let b = foliation::drift_b(s, cs, p)?;
    let k0 = gauss_k_limit(s, cs, p)?;
    Ok(bdot + b * b + k0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvatureSample {
    pub point: ChartPoint,
    pub eps: Vec<f64>,
    pub k_eps: Vec<f64>,
    pub k0: f64,
    pub riccati_residual: f64,
}

pub fn curvature_sample(s: &SurfaceSpec, cs: &ContactStructure, p: &ChartPoint, eps: &[f64]) -> Result<CurvatureSample> {
    let k_eps = eps.iter().map(|&e| gauss_k(s, cs, p, e)).collect::<Result<Vec<_>>>()?;
    Ok(CurvatureSample {
        point: *p,
        eps: eps.to_vec(),
        k_eps,
        k0: gauss_k0(s, cs, p)?,
        riccati_residual: riccati_residual(s, cs, p)?,
    })
}

/// Curvature samples in parallel, in input order.
pub fn curvature_sweep(
    s: &SurfaceSpec,
    cs: &ContactStructure,
    points: &[ChartPoint],
    eps: &[f64],
) -> Result<Vec<CurvatureSample>> {
    points.par_iter().map(|p| curvature_sample(s, cs, p, eps)).collect()
}

pub fn write_curvature_csv<W: std::io::Write>(samples: &[CurvatureSample], w: W) -> Result<()> {
    let dim = samples.first().map_or(3, |s| s.point.dim());
    let mut wr = csv::Writer::from_writer(w);
    let mut header: Vec<String> = (0..dim).map(|k| format!("coord{k}")).collect();
    if let Some(s) = samples.first() {
        header.extend(s.eps.iter().map(|e| format!("K_eps_{e:e}")));
    }
    header.extend(["K0", "residual"].map(String::from));
    wr.write_record(&header)?;
    for s in samples {
        let mut rec: Vec<String> = s.point.x().iter().map(|v| fmt17(*v)).collect();
        rec.extend(s.k_eps.iter().map(|v| fmt17(*v)));
        rec.push(fmt17(s.k0));
        rec.push(fmt17(s.riccati_residual));
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}
