//! Truncated multivariate Taylor jets.
//!
//! A [`Jet`] carries the Taylor coefficients of a scalar function of up to
//! four ambient coordinates, truncated at a runtime order `<= MAX_ORDER`.
//! Arithmetic and the elementary functions propagate the truncated
//! polynomial exactly (up to roundoff), so value, gradient, Hessian and
//! third derivatives of composite expressions come out of a single forward
//! evaluation.
//!
//! Coefficients are stored per monomial `h^m = h0^m0 h1^m1 h2^m2 h3^m3`, so
//! mixed partials such as `d2f/dx dy` and `d2f/dy dx` read the same slot and
//! the Hessian is symmetric by construction.

use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};
use std::sync::LazyLock;

/// Number of ambient variables a jet can depend on.
pub const NVARS: usize = 4;
/// Highest supported truncation order.
pub const MAX_ORDER: usize = 3;
/// Number of monomials of degree `<= MAX_ORDER` in `NVARS` variables.
pub const NCOEF: usize = 35;

struct Tables {
    exps: [[u8; NVARS]; NCOEF],
    degree: [u8; NCOEF],
    index: [[[[u8; 4]; 4]; 4]; 4],
    /// `mul[o]` lists `(i, j, k)` with `deg i + deg j = deg k <= o`.
    mul: [Vec<(u8, u8, u8)>; MAX_ORDER + 1],
}

static TABLES: LazyLock<Tables> = LazyLock::new(|| {
    let mut exps = [[0u8; NVARS]; NCOEF];
    let mut degree = [0u8; NCOEF];
    let mut index = [[[[u8::MAX; 4]; 4]; 4]; 4];
    let mut n = 0;
    for d in 0..=MAX_ORDER as u8 {
        for a in (0..=d).rev() {
            for b in (0..=d - a).rev() {
                for c in (0..=d - a - b).rev() {
                    let e = d - a - b - c;
                    exps[n] = [a, b, c, e];
                    degree[n] = d;
                    index[a as usize][b as usize][c as usize][e as usize] = n as u8;
                    n += 1;
                }
            }
        }
    }
    assert_eq!(n, NCOEF);
    let mut mul: [Vec<(u8, u8, u8)>; MAX_ORDER + 1] = Default::default();
    for i in 0..NCOEF {
        for j in 0..NCOEF {
            let d = degree[i] + degree[j];
            if d as usize > MAX_ORDER {
                continue;
            }
            let s = [
                exps[i][0] + exps[j][0],
                exps[i][1] + exps[j][1],
                exps[i][2] + exps[j][2],
                exps[i][3] + exps[j][3],
            ];
            let k = index[s[0] as usize][s[1] as usize][s[2] as usize][s[3] as usize];
            for (o, list) in mul.iter_mut().enumerate() {
                if d as usize <= o {
                    list.push((i as u8, j as u8, k));
                }
            }
        }
    }
    Tables { exps, degree, index, mul }
});

fn idx(e: [u8; NVARS]) -> usize {
    TABLES.index[e[0] as usize][e[1] as usize][e[2] as usize][e[3] as usize] as usize
}

fn unit(k: usize) -> [u8; NVARS] {
    let mut e = [0; NVARS];
    e[k] = 1;
    e
}

/// Truncated Taylor polynomial of a scalar field around a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    order: u8,
    c: [f64; NCOEF],
}

impl Jet {
    /// A constant. Constants are exact at every order.
    pub fn constant(v: f64) -> Self {
        let mut c = [0.0; NCOEF];
        c[0] = v;
        Jet { order: MAX_ORDER as u8, c }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    /// The coordinate function `x_k` expanded around `v`.
    pub fn variable(v: f64, k: usize, order: usize) -> Self {
        assert!(k < NVARS && order <= MAX_ORDER);
        let mut c = [0.0; NCOEF];
        c[0] = v;
        if order > 0 {
            c[idx(unit(k))] = 1.0;
        }
        Jet { order: order as u8, c }
    }

    /// Coordinate jets for every component of `p`.
    pub fn seed(p: &[f64], order: usize) -> Vec<Jet> {
        p.iter()
            .enumerate()
            .map(|(k, &v)| Jet::variable(v, k, order))
            .collect()
    }

    pub fn order(&self) -> usize {
        self.order as usize
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// First partial derivative `df/dx_k`.
    pub fn d1(&self, k: usize) -> f64 {
        if self.order < 1 {
            return f64::NAN;
        }
        self.c[idx(unit(k))]
    }

    /// Second partial derivative `d2f/dx_i dx_j`.
    pub fn d2(&self, i: usize, j: usize) -> f64 {
        if self.order < 2 {
            return f64::NAN;
        }
        let mut e = unit(i);
        e[j] += 1;
        let w = if i == j { 2.0 } else { 1.0 };
        w * self.c[idx(e)]
    }

    /// Third partial derivative `d3f/dx_i dx_j dx_k`.
    pub fn d3(&self, i: usize, j: usize, k: usize) -> f64 {
        if self.order < 3 {
            return f64::NAN;
        }
        let mut e = unit(i);
        e[j] += 1;
        e[k] += 1;
        let w: f64 = e.iter().map(|&m| factorial(m)).product();
        w * self.c[idx(e)]
    }

    pub fn gradient(&self) -> [f64; NVARS] {
        std::array::from_fn(|k| self.d1(k))
    }

    pub fn hessian(&self) -> [[f64; NVARS]; NVARS] {
        std::array::from_fn(|i| std::array::from_fn(|j| self.d2(i, j)))
    }

    /// Drop all terms above `order`.
    pub fn truncate(&self, order: usize) -> Self {
        if order >= self.order() {
            return *self;
        }
        let t = &*TABLES;
        let mut c = self.c;
        for (n, v) in c.iter_mut().enumerate() {
            if t.degree[n] as usize > order {
                *v = 0.0;
            }
        }
        Jet { order: order as u8, c }
    }

    /// Partial derivative `df/dx_k` as a jet of one lower order.
    pub fn derivative(&self, k: usize) -> Self {
        debug_assert!(self.order > 0, "derivative of an order-0 jet");
        let t = &*TABLES;
        let order = self.order.saturating_sub(1);
        let mut c = [0.0; NCOEF];
        for (n, e) in t.exps.iter().enumerate() {
            if t.degree[n] >= self.order {
                continue;
            }
            let mut up = *e;
            up[k] += 1;
            c[n] = (up[k] as f64) * self.c[idx(up)];
        }
        if self.order == 0 {
            c[0] = f64::NAN;
        }
        Jet { order, c }
    }

    pub fn is_finite(&self) -> bool {
        let t = &*TABLES;
        self.c
            .iter()
            .enumerate()
            .all(|(n, v)| t.degree[n] > self.order || v.is_finite())
    }

    /// `g(self)` given `[g(a), g'(a), g''(a), g'''(a)]` at `a = self.value()`.
    fn compose(&self, d: [f64; 4]) -> Self {
        let mut h = *self;
        h.c[0] = 0.0;
        let mut out = Jet::constant(d[0]);
        out.order = self.order;
        if self.order == 0 {
            return out;
        }
        out += h * d[1];
        if self.order >= 2 {
            let h2 = h * h;
            out += h2 * (d[2] / 2.0);
            if self.order >= 3 {
                out += h2 * h * (d[3] / 6.0);
            }
        }
        out
    }

    pub fn exp(&self) -> Self {
        let e = self.value().exp();
        self.compose([e; 4])
    }

    pub fn ln(&self) -> Self {
        let a = self.value();
        let r = 1.0 / a;
        self.compose([a.ln(), r, -r * r, 2.0 * r * r * r])
    }

    pub fn sqrt(&self) -> Self {
        let a = self.value();
        let s = a.sqrt();
        self.compose([s, 0.5 / s, -0.25 / (s * a), 0.375 / (s * a * a)])
    }

    pub fn recip(&self) -> Self {
        let r = 1.0 / self.value();
        self.compose([r, -r * r, 2.0 * r * r * r, -6.0 * r * r * r * r])
    }

    pub fn sin(&self) -> Self {
        let (s, c) = self.value().sin_cos();
        self.compose([s, c, -s, -c])
    }

    pub fn cos(&self) -> Self {
        let (s, c) = self.value().sin_cos();
        self.compose([c, -s, -c, s])
    }

    pub fn sinh(&self) -> Self {
        let a = self.value();
        let (s, c) = (a.sinh(), a.cosh());
        self.compose([s, c, s, c])
    }

    pub fn cosh(&self) -> Self {
        let a = self.value();
        let (s, c) = (a.sinh(), a.cosh());
        self.compose([c, s, c, s])
    }

    pub fn acos(&self) -> Self {
        let a = self.value();
        let q = 1.0 - a * a;
        let r = q.sqrt();
        self.compose([
            a.acos(),
            -1.0 / r,
            -a / (q * r),
            -(1.0 + 2.0 * a * a) / (q * q * r),
        ])
    }

    pub fn acosh(&self) -> Self {
        let a = self.value();
        let q = a * a - 1.0;
        let r = q.sqrt();
        self.compose([
            a.acosh(),
            1.0 / r,
            -a / (q * r),
            (2.0 * a * a + 1.0) / (q * q * r),
        ])
    }

    pub fn atan(&self) -> Self {
        let a = self.value();
        let q = 1.0 + a * a;
        self.compose([
            a.atan(),
            1.0 / q,
            -2.0 * a / (q * q),
            (6.0 * a * a - 2.0) / (q * q * q),
        ])
    }

    pub fn powi(&self, n: i32) -> Self {
        let a = self.value();
        let mut c = [0.0; 4];
        let mut ff = 1.0;
        for (k, ck) in c.iter_mut().enumerate() {
            // Terms with a vanishing falling factorial stay zero, also at a = 0.
            if ff != 0.0 {
                *ck = ff * a.powi(n - k as i32);
            }
            ff *= (n - k as i32) as f64;
        }
        self.compose(c)
    }

    pub fn powf(&self, p: f64) -> Self {
        let a = self.value();
        self.compose([
            a.powf(p),
            p * a.powf(p - 1.0),
            p * (p - 1.0) * a.powf(p - 2.0),
            p * (p - 1.0) * (p - 2.0) * a.powf(p - 3.0),
        ])
    }

    pub fn square(&self) -> Self {
        *self * *self
    }
}

fn factorial(m: u8) -> f64 {
    (1..=m as u32).map(|v| v as f64).product()
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        let order = self.order.min(o.order);
        let mut out = Jet { order: MAX_ORDER as u8, c: [0.0; NCOEF] };
        for n in 0..NCOEF {
            out.c[n] = self.c[n] + o.c[n];
        }
        out.truncate(order as usize)
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(mut self) -> Jet {
        for v in self.c.iter_mut() {
            *v = -*v;
        }
        self
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let order = self.order.min(o.order);
        let mut c = [0.0; NCOEF];
        for &(i, j, k) in &TABLES.mul[order as usize] {
            c[k as usize] += self.c[i as usize] * o.c[j as usize];
        }
        Jet { order, c }
    }
}

impl Div for Jet {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, o: f64) -> Jet {
        self.c[0] += o;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, o: f64) -> Jet {
        self.c[0] -= o;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(mut self, o: f64) -> Jet {
        for v in self.c.iter_mut() {
            *v *= o;
        }
        self
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    fn div(self, o: f64) -> Jet {
        self * (1.0 / o)
    }
}

impl Add<Jet> for f64 {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        o + self
    }
}

impl Sub<Jet> for f64 {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        (-o) + self
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        o * self
    }
}

impl Div<Jet> for f64 {
    type Output = Jet;
    fn div(self, o: Jet) -> Jet {
        o.recip() * self
    }
}

impl AddAssign for Jet {
    fn add_assign(&mut self, o: Jet) {
        *self = *self + o;
    }
}

impl SubAssign for Jet {
    fn sub_assign(&mut self, o: Jet) {
        *self = *self - o;
    }
}

impl MulAssign for Jet {
    fn mul_assign(&mut self, o: Jet) {
        *self = *self * o;
    }
}

impl std::iter::Sum for Jet {
    fn sum<I: Iterator<Item = Jet>>(iter: I) -> Jet {
        iter.fold(Jet::zero(), |a, b| a + b)
    }
}

impl From<f64> for Jet {
    fn from(v: f64) -> Jet {
        Jet::constant(v)
    }
}
