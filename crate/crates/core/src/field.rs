//! Flow-speed fields `a(p)` with derivative evaluators, sampled class
//! bounds, and manufactured-problem construction.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geom::{ArcPair, Point2};
use crate::potential::{solve_potential, GridSpec};
use crate::scalar::Real;

/// Axis-aligned sampling rectangle.
#[derive(Debug, Clone, Copy)]
pub struct Rect<T> {
    pub x0: T,
    pub x1: T,
    pub y0: T,
    pub y1: T,
}

impl<T: Real> Rect<T> {
    pub fn new(x0: T, x1: T, y0: T, y1: T) -> Self {
        Rect { x0, x1, y0, y1 }
    }
}

/// Truncated Fourier series on a periodic interval, fitted to uniform
/// samples by the discrete transform.
#[derive(Debug, Clone)]
pub struct FourierSeries<T> {
    period: T,
    mean: T,
    cos_coeffs: Vec<T>,
    sin_coeffs: Vec<T>,
}

impl<T: Real> FourierSeries<T> {
    /// Fit to samples at `x_j = j * period / n`, keeping `modes` harmonics.
    pub fn fit(period: T, samples: &[T], modes: usize) -> Self {
        let n = samples.len();
        let nf = T::of_usize(n);
        let mean = samples.iter().copied().sum::<T>() / nf;
        let kmax = modes.min(n / 2);
        let mut cos_coeffs = Vec::with_capacity(kmax);
        let mut sin_coeffs = Vec::with_capacity(kmax);
        for k in 1..=kmax {
            let mut ac = T::zero();
            let mut as_ = T::zero();
            for (j, &s) in samples.iter().enumerate() {
                let ang = T::of(std::f64::consts::TAU) * T::of_usize(k) * T::of_usize(j) / nf;
                ac += s * ang.cos();
                as_ += s * ang.sin();
            }
            cos_coeffs.push(ac * T::of(2.0) / nf);
            sin_coeffs.push(as_ * T::of(2.0) / nf);
        }
        FourierSeries {
            period,
            mean,
            cos_coeffs,
            sin_coeffs,
        }
    }

    pub fn constant(period: T, value: T) -> Self {
        FourierSeries {
            period,
            mean: value,
            cos_coeffs: Vec::new(),
            sin_coeffs: Vec::new(),
        }
    }

    pub fn eval(&self, x: T) -> T {
        let w = T::of(std::f64::consts::TAU) / self.period;
        let mut acc = self.mean;
        for (k, (&c, &s)) in self.cos_coeffs.iter().zip(&self.sin_coeffs).enumerate() {
            let ang = w * T::of_usize(k + 1) * x;
            acc += c * ang.cos() + s * ang.sin();
        }
        acc
    }

    pub fn deriv(&self, x: T) -> T {
        let w = T::of(std::f64::consts::TAU) / self.period;
        let mut acc = T::zero();
        for (k, (&c, &s)) in self.cos_coeffs.iter().zip(&self.sin_coeffs).enumerate() {
            let kw = w * T::of_usize(k + 1);
            let ang = kw * x;
            acc += kw * (s * ang.cos() - c * ang.sin());
        }
        acc
    }
}

/// Bilinear interpolation table over one period in x, for fields loaded
/// from `x,y,a` CSV dumps.
#[derive(Debug, Clone)]
pub struct TabulatedField<T> {
    period: T,
    y0: T,
    y1: T,
    nx: usize,
    ny: usize,
    values: Arc<Vec<T>>,
}

impl<T: Real> TabulatedField<T> {
    pub fn new(period: T, y0: T, y1: T, nx: usize, ny: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != nx * ny || nx < 2 || ny < 2 {
            return Err(Error::SolveFailed("tabulated field shape mismatch".into()));
        }
        if let Some(v) = values.iter().find(|v| !(**v > T::zero())) {
            return Err(Error::NonPositiveField {
                x: f64::NAN,
                y: f64::NAN,
                value: v.f64(),
            });
        }
        Ok(TabulatedField {
            period,
            y0,
            y1,
            nx,
            ny,
            values: Arc::new(values),
        })
    }

    fn eval(&self, p: Point2<T>) -> T {
        let fx = (p.x / self.period).fract();
        let fx = if fx < T::zero() { fx + T::one() } else { fx };
        let gx = fx * T::of_usize(self.nx);
        let i = (gx.floor().f64() as usize).min(self.nx - 1);
        let tx = gx - T::of_usize(i);
        let hy = (self.y1 - self.y0) / T::of_usize(self.ny - 1);
        let gy = ((p.y - self.y0) / hy)
            .max(T::zero())
            .min(T::of_usize(self.ny - 1));
        let j = (gy.floor().f64() as usize).min(self.ny - 2);
        let ty = gy - T::of_usize(j);
        let at = |i: usize, j: usize| self.values[j * self.nx + i % self.nx];
        let v00 = at(i, j);
        let v10 = at(i + 1, j);
        let v01 = at(i, j + 1);
        let v11 = at(i + 1, j + 1);
        let one = T::one();
        (one - tx) * (one - ty) * v00
            + tx * (one - ty) * v10
            + (one - tx) * ty * v01
            + tx * ty * v11
    }
}

/// Parse a tabulated field from CSV rows `x,y,a` on a full rectangular
/// grid.
pub fn tabulated_from_csv<T: Real>(period: T, text: &str) -> Result<TabulatedField<T>> {
    let mut rows: Vec<(f64, f64, f64)> = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('x') {
            continue;
        }
        let mut it = line.split(',');
        let mut parse = |_name: &str| -> Result<f64> {
            it.next()
                .ok_or_else(|| Error::SolveFailed("short row in tabulated field".into()))?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::SolveFailed(format!("bad number in tabulated field: {e}")))
        };
        let x = parse("x")?;
        let y = parse("y")?;
        let a = parse("a")?;
        rows.push((x, y, a));
    }
    if rows.is_empty() {
        return Err(Error::SolveFailed("empty tabulated field".into()));
    }
    let mut xs: Vec<f64> = rows.iter().map(|r| r.0).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let mut ys: Vec<f64> = rows.iter().map(|r| r.1).collect();
    ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ys.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let (nx, ny) = (xs.len(), ys.len());
    if nx * ny != rows.len() {
        return Err(Error::SolveFailed(format!(
            "tabulated field is not a full grid: {} rows vs {}x{}",
            rows.len(),
            nx,
            ny
        )));
    }
    let mut values = vec![T::zero(); nx * ny];
    for (x, y, a) in rows {
        let i = xs.iter().position(|&v| (v - x).abs() < 1e-12).unwrap();
        let j = ys.iter().position(|&v| (v - y).abs() < 1e-12).unwrap();
        values[j * nx + i] = T::of(a);
    }
    TabulatedField::new(period, T::of(ys[0]), T::of(ys[ny - 1]), nx, ny, values)
}

/// Manufactured channel field: boundary-gradient profiles `g1`, `g2` on
/// the generating curves, blended across the channel by normalized
/// vertical position and continued constant along vertical lines beyond.
#[derive(Debug, Clone)]
pub struct BlendedChannel<T> {
    pub g1: FourierSeries<T>,
    pub g2: FourierSeries<T>,
    pub lower: FourierSeries<T>,
    pub upper: FourierSeries<T>,
}

impl<T: Real> BlendedChannel<T> {
    fn eval(&self, p: Point2<T>) -> T {
        let y1 = self.lower.eval(p.x);
        let y2 = self.upper.eval(p.x);
        let t = ((p.y - y1) / (y2 - y1)).max(T::zero()).min(T::one());
        let b = t * t * (T::of(3.0) - T::of(2.0) * t);
        (T::one() - b) * self.g1.eval(p.x) + b * self.g2.eval(p.x)
    }
}

type CustomFn<T> = Arc<dyn Fn(Point2<T>) -> T + Send + Sync>;

/// A positive flow-speed field with gradient and log-Laplacian
/// evaluators. Analytic kinds differentiate exactly; numeric kinds fall
/// back to central differences with step `h_fd`.
#[derive(Clone)]
pub enum FlowSpeed<T> {
    Constant(T),
    /// `cosh(beta * y)`
    CoshY { beta: T },
    /// `exp(q(y))` for a polynomial `q(y) = sum coeffs[k] y^k`
    ExpPolyY { coeffs: Vec<T> },
    /// `1 + amp * sin(waves * 2 pi x / period)`
    SinXFactor { amp: T, waves: i32, period: T },
    Scale { factor: T, inner: Box<FlowSpeed<T>> },
    Product(Box<FlowSpeed<T>>, Box<FlowSpeed<T>>),
    Tabulated { table: TabulatedField<T>, h_fd: T },
    Blended { channel: BlendedChannel<T>, h_fd: T },
    Custom { f: CustomFn<T>, h_fd: T },
}

impl<T: Real> fmt::Debug for FlowSpeed<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowSpeed::Constant(c) => write!(f, "Constant({c})"),
            FlowSpeed::CoshY { beta } => write!(f, "CoshY(beta={beta})"),
            FlowSpeed::ExpPolyY { coeffs } => write!(f, "ExpPolyY({coeffs:?})"),
            FlowSpeed::SinXFactor { amp, waves, .. } => {
                write!(f, "SinXFactor(amp={amp}, waves={waves})")
            }
            FlowSpeed::Scale { factor, inner } => write!(f, "Scale({factor}, {inner:?})"),
            FlowSpeed::Product(a, b) => write!(f, "Product({a:?}, {b:?})"),
            FlowSpeed::Tabulated { .. } => write!(f, "Tabulated"),
            FlowSpeed::Blended { .. } => write!(f, "Blended"),
            FlowSpeed::Custom { .. } => write!(f, "Custom"),
        }
    }
}

impl<T: Real> FlowSpeed<T> {
    /// Wrap an arbitrary positive evaluator; derivatives use central
    /// differences with step `h_fd`.
    pub fn custom(f: impl Fn(Point2<T>) -> T + Send + Sync + 'static, h_fd: T) -> Self {
        FlowSpeed::Custom {
            f: Arc::new(f),
            h_fd,
        }
    }

    pub fn scaled(self, factor: T) -> Self {
        FlowSpeed::Scale {
            factor,
            inner: Box::new(self),
        }
    }

    pub fn product(self, other: FlowSpeed<T>) -> Self {
        FlowSpeed::Product(Box::new(self), Box::new(other))
    }

    pub fn eval(&self, p: Point2<T>) -> T {
        match self {
            FlowSpeed::Constant(c) => *c,
            FlowSpeed::CoshY { beta } => (*beta * p.y).cosh(),
            FlowSpeed::ExpPolyY { coeffs } => {
                let mut q = T::zero();
                let mut pow = T::one();
                for &c in coeffs {
                    q += c * pow;
                    pow *= p.y;
                }
                q.exp()
            }
            FlowSpeed::SinXFactor { amp, waves, period } => {
                T::one()
                    + *amp
                        * (T::of(std::f64::consts::TAU) * T::of(*waves as f64) * p.x / *period)
                            .sin()
            }
            FlowSpeed::Scale { factor, inner } => *factor * inner.eval(p),
            FlowSpeed::Product(a, b) => a.eval(p) * b.eval(p),
            FlowSpeed::Tabulated { table, .. } => table.eval(p),
            FlowSpeed::Blended { channel, .. } => channel.eval(p),
            FlowSpeed::Custom { f, .. } => f(p),
        }
    }

    /// `true` when gradient and log-Laplacian are differentiated exactly.
    pub fn has_analytic_derivatives(&self) -> bool {
        match self {
            FlowSpeed::Constant(_)
            | FlowSpeed::CoshY { .. }
            | FlowSpeed::ExpPolyY { .. }
            | FlowSpeed::SinXFactor { .. } => true,
            FlowSpeed::Scale { inner, .. } => inner.has_analytic_derivatives(),
            FlowSpeed::Product(a, b) => {
                a.has_analytic_derivatives() && b.has_analytic_derivatives()
            }
            _ => false,
        }
    }

    fn fd_step(&self) -> T {
        match self {
            FlowSpeed::Tabulated { h_fd, .. }
            | FlowSpeed::Blended { h_fd, .. }
            | FlowSpeed::Custom { h_fd, .. } => *h_fd,
            FlowSpeed::Scale { inner, .. } => inner.fd_step(),
            FlowSpeed::Product(a, b) => a.fd_step().min(b.fd_step()),
            _ => T::of(1e-4),
        }
    }

    pub fn grad(&self, p: Point2<T>) -> (T, T) {
        match self {
            FlowSpeed::Constant(_) => (T::zero(), T::zero()),
            FlowSpeed::CoshY { beta } => (T::zero(), *beta * (*beta * p.y).sinh()),
            FlowSpeed::ExpPolyY { coeffs } => {
                let a = self.eval(p);
                let mut dq = T::zero();
                let mut pow = T::one();
                for (k, &c) in coeffs.iter().enumerate().skip(1) {
                    dq += T::of_usize(k) * c * pow;
                    pow *= p.y;
                }
                (T::zero(), a * dq)
            }
            FlowSpeed::SinXFactor { amp, waves, period } => {
                let w = T::of(std::f64::consts::TAU) * T::of(*waves as f64) / *period;
                ((*amp) * w * (w * p.x).cos(), T::zero())
            }
            FlowSpeed::Scale { factor, inner } => {
                let (gx, gy) = inner.grad(p);
                (*factor * gx, *factor * gy)
            }
            FlowSpeed::Product(a, b) => {
                let (ax, ay) = a.grad(p);
                let (bx, by) = b.grad(p);
                let (va, vb) = (a.eval(p), b.eval(p));
                (ax * vb + bx * va, ay * vb + by * va)
            }
            _ => {
                let h = self.fd_step();
                let gx = (self.eval(Point2::new(p.x + h, p.y))
                    - self.eval(Point2::new(p.x - h, p.y)))
                    / (T::of(2.0) * h);
                let gy = (self.eval(Point2::new(p.x, p.y + h))
                    - self.eval(Point2::new(p.x, p.y - h)))
                    / (T::of(2.0) * h);
                (gx, gy)
            }
        }
    }

    /// `Delta ln a` at `p`.
    pub fn log_laplacian(&self, p: Point2<T>) -> T {
        match self {
            FlowSpeed::Constant(_) => T::zero(),
            FlowSpeed::CoshY { beta } => {
                let c = (*beta * p.y).cosh();
                *beta * *beta / (c * c)
            }
            FlowSpeed::ExpPolyY { coeffs } => {
                // ln a = q(y); Delta ln a = q''(y).
                let mut ddq = T::zero();
                let mut pow = T::one();
                for (k, &c) in coeffs.iter().enumerate().skip(2) {
                    ddq += T::of_usize(k) * T::of_usize(k - 1) * c * pow;
                    pow *= p.y;
                }
                ddq
            }
            FlowSpeed::SinXFactor { amp, waves, period } => {
                let w = T::of(std::f64::consts::TAU) * T::of(*waves as f64) / *period;
                let s = (w * p.x).sin();
                let fv = T::one() + *amp * s;
                let d1 = *amp * w * (w * p.x).cos();
                let d2 = -*amp * w * w * s;
                (d2 * fv - d1 * d1) / (fv * fv)
            }
            FlowSpeed::Scale { inner, .. } => inner.log_laplacian(p),
            FlowSpeed::Product(a, b) => a.log_laplacian(p) + b.log_laplacian(p),
            _ => {
                let h = self.fd_step();
                let ln = |q: Point2<T>| self.eval(q).ln();
                let c = ln(p);
                (ln(Point2::new(p.x + h, p.y))
                    + ln(Point2::new(p.x - h, p.y))
                    + ln(Point2::new(p.x, p.y + h))
                    + ln(Point2::new(p.x, p.y - h))
                    - T::of(4.0) * c)
                    / (h * h)
            }
        }
    }

    /// Check positivity and x-periodicity on a sample grid.
    pub fn validate(&self, period: T, region: Rect<T>, n: usize) -> Result<()> {
        for j in 0..n {
            for i in 0..n {
                let x = region.x0 + (region.x1 - region.x0) * T::of_usize(i) / T::of_usize(n - 1);
                let y = region.y0 + (region.y1 - region.y0) * T::of_usize(j) / T::of_usize(n - 1);
                let p = Point2::new(x, y);
                let v = self.eval(p);
                if !(v > T::zero()) || !v.is_finite() {
                    return Err(Error::NonPositiveField {
                        x: x.f64(),
                        y: y.f64(),
                        value: v.f64(),
                    });
                }
                let shifted = self.eval(Point2::new(x + period, y));
                let rel = ((shifted - v) / v).abs();
                if rel > T::of(1e-10) {
                    return Err(Error::NotPeriodic(rel.f64()));
                }
            }
        }
        Ok(())
    }
}

/// Sampled class bounds for a field over a rectangle.
#[derive(Debug, Clone, Copy)]
pub struct ClassConstants<T> {
    /// Lower bound of `a`.
    pub a_lo: T,
    /// Upper bound of `a`.
    pub a_hi: T,
    /// Bound on first partial derivatives.
    pub d1_max: T,
    /// Bound on second partial derivatives.
    pub d2_max: T,
    /// Minimum of `Delta ln a`.
    pub log_lap_min: T,
    /// Maximum of `Delta ln a` (used by curvature bounds).
    pub log_lap_max: T,
    /// Maximum steepness `|grad a| / a^2`.
    pub steep: T,
}

/// Sampled extrema of a field and its derivatives over an `n x n` grid on
/// `region`. Deterministic for fixed `n`.
pub fn class_constants<T: Real>(
    a: &FlowSpeed<T>,
    region: Rect<T>,
    n: usize,
) -> Result<ClassConstants<T>> {
    let mut c = ClassConstants {
        a_lo: T::infinity(),
        a_hi: T::neg_infinity(),
        d1_max: T::zero(),
        d2_max: T::zero(),
        log_lap_min: T::infinity(),
        log_lap_max: T::neg_infinity(),
        steep: T::zero(),
    };
    let h2 = {
        // Step for the second-difference estimate of second partials.
        let span = (region.x1 - region.x0).min(region.y1 - region.y0);
        (span * T::of(1e-3)).max(T::of(1e-6))
    };
    for j in 0..n {
        for i in 0..n {
            let x = region.x0 + (region.x1 - region.x0) * T::of_usize(i) / T::of_usize(n - 1);
            let y = region.y0 + (region.y1 - region.y0) * T::of_usize(j) / T::of_usize(n - 1);
            let p = Point2::new(x, y);
            let v = a.eval(p);
            if !(v > T::zero()) {
                return Err(Error::NonPositiveField {
                    x: x.f64(),
                    y: y.f64(),
                    value: v.f64(),
                });
            }
            c.a_lo = c.a_lo.min(v);
            c.a_hi = c.a_hi.max(v);
            let (gx, gy) = a.grad(p);
            c.d1_max = c.d1_max.max(gx.abs()).max(gy.abs());
            let ll = a.log_laplacian(p);
            c.log_lap_min = c.log_lap_min.min(ll);
            c.log_lap_max = c.log_lap_max.max(ll);
            let gnorm = (gx * gx + gy * gy).sqrt();
            c.steep = c.steep.max(gnorm / (v * v));
            // Second partials by central differences of the field.
            let e = |dx: T, dy: T| a.eval(Point2::new(x + dx, y + dy));
            let two = T::of(2.0);
            let axx = (e(h2, T::zero()) - two * v + e(-h2, T::zero())) / (h2 * h2);
            let ayy = (e(T::zero(), h2) - two * v + e(T::zero(), -h2)) / (h2 * h2);
            let axy =
                (e(h2, h2) - e(h2, -h2) - e(-h2, h2) + e(-h2, -h2)) / (T::of(4.0) * h2 * h2);
            c.d2_max = c.d2_max.max(axx.abs()).max(ayy.abs()).max(axy.abs());
        }
    }
    Ok(c)
}

/// A pair of flow-speed fields with scaling factors, sharing period `P`.
#[derive(Clone)]
pub struct FlowSpeedPair<T> {
    pub a1: FlowSpeed<T>,
    pub a2: FlowSpeed<T>,
    pub lambda1: T,
    pub lambda2: T,
    period: T,
    single_field: bool,
}

impl<T: Real> fmt::Debug for FlowSpeedPair<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "FlowSpeedPair(a1={:?}, a2={:?}, lambda=({}, {}), P={})",
            self.a1, self.a2, self.lambda1, self.lambda2, self.period
        )
    }
}

impl<T: Real> FlowSpeedPair<T> {
    pub fn new(a1: FlowSpeed<T>, a2: FlowSpeed<T>, lambda: (T, T), period: T) -> Result<Self> {
        if !(lambda.0 > T::zero() && lambda.1 > T::zero()) {
            return Err(Error::SolveFailed("lambda factors must be positive".into()));
        }
        let probe = Rect::new(T::zero(), period, T::of(-2.0), T::of(2.0));
        a1.validate(period, probe, 9)?;
        a2.validate(period, probe, 9)?;
        Ok(FlowSpeedPair {
            a1,
            a2,
            lambda1: lambda.0,
            lambda2: lambda.1,
            period,
            single_field: false,
        })
    }

    /// Single shared field (the one-field problem).
    pub fn single(a: FlowSpeed<T>, lambda: (T, T), period: T) -> Result<Self> {
        let mut pair = Self::new(a.clone(), a, lambda, period)?;
        pair.single_field = true;
        Ok(pair)
    }

    pub fn period(&self) -> T {
        self.period
    }

    pub fn lambda(&self) -> (T, T) {
        (self.lambda1, self.lambda2)
    }

    /// Same fields at a different scaling vector.
    pub fn with_lambda(&self, lambda: (T, T)) -> Self {
        let mut out = self.clone();
        out.lambda1 = lambda.0;
        out.lambda2 = lambda.1;
        out
    }

    pub fn field(&self, side: usize) -> &FlowSpeed<T> {
        match side {
            1 => &self.a1,
            2 => &self.a2,
            _ => panic!("side must be 1 or 2"),
        }
    }

    pub fn lambda_side(&self, side: usize) -> T {
        match side {
            1 => self.lambda1,
            2 => self.lambda2,
            _ => panic!("side must be 1 or 2"),
        }
    }

    /// Scaled boundary value `lambda_i * a_i(p)`.
    pub fn scaled_eval(&self, side: usize, p: Point2<T>) -> T {
        self.lambda_side(side) * self.field(side).eval(p)
    }

    /// `true` when both sides share one field (built via [`Self::single`]).
    pub fn is_single_field(&self) -> bool {
        self.single_field
    }
}

/// Joint admissible-threshold cap `min(1/2, Alo^2 / (2 A1))` over both
/// fields of a pair; `1/2` when the fields are constant.
pub fn epsilon0<T: Real>(pair: &FlowSpeedPair<T>, region: Rect<T>) -> Result<T> {
    let c1 = class_constants(&pair.a1, region, 64)?;
    let c2 = class_constants(&pair.a2, region, 64)?;
    let a_lo = c1.a_lo.min(c2.a_lo);
    let d1 = c1.d1_max.max(c2.d1_max);
    let half = T::of(0.5);
    if d1 <= T::zero() {
        return Ok(half);
    }
    Ok(half.min(a_lo * a_lo / (T::of(2.0) * d1)))
}

/// Build flow-speed data from a chosen pair's own boundary gradient, so
/// the pair is an exact solution of the returned problem up to
/// discretization error. The boundary profiles are continued constant
/// along vertical lines beyond each curve and blended across the channel.
///
/// The generating pair must be graph-like (single-valued in x).
pub fn manufacture_problem<T: Real>(
    pair: &ArcPair<T>,
    grid: &GridSpec<T>,
) -> Result<FlowSpeedPair<T>> {
    let period = pair.period();
    let u = solve_potential(pair, grid)?;
    let m = 256usize;
    let profile = |samples: Vec<(Point2<T>, T)>| -> Result<FourierSeries<T>> {
        let uniform = resample_profile(period, &samples, m)?;
        Ok(FourierSeries::fit(period, &uniform, m / 6))
    };
    let g1 = profile(u.boundary_gradient(1)?)?;
    let g2 = profile(u.boundary_gradient(2)?)?;
    let curve_series = |arc: &crate::geom::PeriodicArc<T>| -> Result<FourierSeries<T>> {
        let samples: Vec<(Point2<T>, T)> = arc.vertices().iter().map(|&v| (v, v.y)).collect();
        let uniform = resample_profile(period, &samples, m)?;
        Ok(FourierSeries::fit(period, &uniform, m / 6))
    };
    let lower = curve_series(pair.lower())?;
    let upper = curve_series(pair.upper())?;
    let channel = BlendedChannel {
        g1,
        g2,
        lower,
        upper,
    };
    let h_fd = period * T::of(1e-4);
    let a = FlowSpeed::Blended { channel, h_fd };
    let mut fields = FlowSpeedPair::new(a.clone(), a, (T::one(), T::one()), period)?;
    fields.single_field = true;
    Ok(fields)
}

/// Interpolate scattered per-point values onto `m` uniform x-samples,
/// assuming the sample x's wind once around the period (graph-like data).
fn resample_profile<T: Real>(period: T, samples: &[(Point2<T>, T)], m: usize) -> Result<Vec<T>> {
    if samples.len() < 4 {
        return Err(Error::SolveFailed("too few boundary samples".into()));
    }
    let mut pts: Vec<(T, T)> = samples
        .iter()
        .map(|&(p, v)| {
            let fx = (p.x / period).fract();
            let fx = if fx < T::zero() { fx + T::one() } else { fx };
            (fx * period, v)
        })
        .collect();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pts.dedup_by(|a, b| (a.0 - b.0).abs() < period * T::of(1e-12));
    let n = pts.len();
    let mut out = Vec::with_capacity(m);
    let mut k = 0usize;
    for j in 0..m {
        let x = period * T::of_usize(j) / T::of_usize(m);
        while k + 1 < n && pts[k + 1].0 <= x {
            k += 1;
        }
        let (mut x0, mut v0) = pts[k];
        let (x1, v1) = if k + 1 < n {
            pts[k + 1]
        } else {
            (pts[0].0 + period, pts[0].1)
        };
        if x < x0 {
            let last = pts[n - 1];
            x0 = last.0 - period;
            v0 = last.1;
        }
        let t = if x1 > x0 { (x - x0) / (x1 - x0) } else { T::zero() };
        out.push(v0 + t * (v1 - v0));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::PeriodicArc;
    use std::f64::consts::TAU;

    fn unit_rect() -> Rect<f64> {
        Rect::new(0.0, TAU, -1.0, 1.0)
    }

    #[test]
    fn class_constants_unit_field() {
        let a = FlowSpeed::Constant(1.0);
        let c = class_constants(&a, unit_rect(), 33).unwrap();
        assert_eq!(c.a_lo, 1.0);
        assert_eq!(c.a_hi, 1.0);
        assert_eq!(c.d1_max, 0.0);
        assert!(c.d2_max.abs() < 1e-9);
        assert!(c.log_lap_min.abs() < 1e-9 && c.steep.abs() < 1e-9);
    }

    #[test]
    fn class_constants_cosh() {
        let a = FlowSpeed::CoshY { beta: 1.0 };
        let c = class_constants(&a, unit_rect(), 257).unwrap();
        assert!((c.a_lo - 1.0).abs() < 1e-6);
        assert!((c.a_hi - 1.0f64.cosh()).abs() < 1e-4);
        assert!((c.d1_max - 1.0f64.sinh()).abs() < 1e-4);
        // Steepness oracle: maximize tanh(y)*sech(y) by dense scan.
        let mut oracle: f64 = 0.0;
        for k in 0..200001 {
            let y = -1.0 + 2.0 * k as f64 / 200000.0;
            oracle = oracle.max(y.tanh().abs() / y.cosh());
        }
        assert!((oracle - 0.5).abs() < 1e-9, "oracle {oracle}");
        assert!((c.steep - 0.5).abs() < 1e-4, "steep {}", c.steep);
        assert!((c.log_lap_min - 1.0 / 1.0f64.cosh().powi(2)).abs() < 1e-4);
        assert!((c.log_lap_max - 1.0).abs() < 1e-4);
    }

    #[test]
    fn class_constants_scaled_constant() {
        let a = FlowSpeed::Constant(2.0);
        let c = class_constants(&a, unit_rect(), 33).unwrap();
        assert_eq!(c.a_lo, 2.0);
        assert_eq!(c.a_hi, 2.0);
        assert!(c.d1_max == 0.0 && c.steep == 0.0);
    }

    #[test]
    fn rejects_nonpositive_field() {
        let a = FlowSpeed::custom(|p: Point2<f64>| p.y, 1e-4);
        assert!(matches!(
            class_constants(&a, unit_rect(), 17),
            Err(Error::NonPositiveField { .. })
        ));
    }

    #[test]
    fn epsilon0_examples() {
        let ones = FlowSpeedPair::single(FlowSpeed::Constant(1.0), (1.0, 1.0), TAU).unwrap();
        assert_eq!(epsilon0(&ones, unit_rect()).unwrap(), 0.5);

        let cosh = FlowSpeedPair::single(FlowSpeed::CoshY { beta: 1.0 }, (1.0, 1.0), TAU).unwrap();
        let e0 = epsilon0(&cosh, unit_rect()).unwrap();
        assert!((e0 - 1.0 / (2.0 * 1.0f64.sinh())).abs() < 1e-3, "{e0}");

        let twos = FlowSpeedPair::single(FlowSpeed::Constant(2.0), (1.0, 1.0), TAU).unwrap();
        assert_eq!(epsilon0(&twos, unit_rect()).unwrap(), 0.5);
    }

    #[test]
    fn epsilon0_scales_with_field() {
        // Scaling a by kappa scales Alo and A1 by kappa, so the second
        // branch scales by kappa.
        let base = FlowSpeed::CoshY { beta: 1.0 };
        for kappa in [0.5, 2.0] {
            let scaled = FlowSpeedPair::single(base.clone().scaled(kappa), (1.0, 1.0), TAU).unwrap();
            let e = epsilon0(&scaled, unit_rect()).unwrap();
            let expect = (0.5f64).min(kappa / (2.0 * 1.0f64.sinh()));
            assert!((e - expect).abs() < 2e-3, "kappa={kappa}: {e} vs {expect}");
        }
    }

    #[test]
    fn finite_difference_grad_matches_analytic() {
        let analytic = FlowSpeed::CoshY { beta: 1.0 };
        let numeric = FlowSpeed::custom(|p: Point2<f64>| p.y.cosh(), 1e-4);
        let mut worst: f64 = 0.0;
        for k in 0..100 {
            let p = Point2::new(0.05 * k as f64, -1.0 + 0.02 * k as f64);
            let (_, gy_a) = analytic.grad(p);
            let (gx_n, gy_n) = numeric.grad(p);
            let scale = gy_a.abs().max(1.0);
            worst = worst.max((gy_n - gy_a).abs() / scale).max(gx_n.abs() / scale);
        }
        assert!(worst <= 1e-4, "worst rel err {worst}");
    }

    #[test]
    fn log_laplacian_cosh_identity() {
        let a = FlowSpeed::CoshY { beta: 1.0 };
        for k in 0..50 {
            let y = -1.0 + 0.04 * k as f64;
            let p = Point2::new(0.3, y);
            let expect = 1.0 / y.cosh().powi(2);
            assert!((a.log_laplacian(p) - expect).abs() < 1e-6);
        }
        // Numeric fallback agrees too.
        let n = FlowSpeed::custom(|p: Point2<f64>| p.y.cosh(), 1e-4);
        let p = Point2::new(0.3, 0.4);
        assert!((n.log_laplacian(p) - 1.0 / 0.4f64.cosh().powi(2)).abs() < 1e-6);
    }

    #[test]
    fn product_field_derivatives() {
        // cosh(y) * (1 + 0.05 sin x)
        let a = FlowSpeed::CoshY { beta: 1.0 }.product(FlowSpeed::SinXFactor {
            amp: 0.05,
            waves: 1,
            period: TAU,
        });
        let p = Point2::new(0.7, -0.3);
        let v = a.eval(p);
        assert!((v - (-0.3f64).cosh() * (1.0 + 0.05 * 0.7f64.sin())).abs() < 1e-12);
        let (gx, gy) = a.grad(p);
        let h = 1e-6;
        let fd_x = (a.eval(Point2::new(p.x + h, p.y)) - a.eval(Point2::new(p.x - h, p.y)))
            / (2.0 * h);
        let fd_y = (a.eval(Point2::new(p.x, p.y + h)) - a.eval(Point2::new(p.x, p.y - h)))
            / (2.0 * h);
        assert!((gx - fd_x).abs() < 1e-6 && (gy - fd_y).abs() < 1e-6);
    }

    #[test]
    fn periodicity_validation() {
        let bad = FlowSpeed::custom(|p: Point2<f64>| 1.0 + 0.1 * (p.x / 3.0).sin(), 1e-4);
        let r = FlowSpeedPair::single(bad, (1.0, 1.0), TAU);
        assert!(matches!(r, Err(Error::NotPeriodic(_))));
    }

    #[test]
    fn fourier_series_fit_and_derivative() {
        let n = 128;
        let samples: Vec<f64> = (0..n)
            .map(|j| {
                let x = TAU * j as f64 / n as f64;
                1.0 + 0.3 * x.sin() + 0.1 * (2.0 * x).cos()
            })
            .collect();
        let s = FourierSeries::fit(TAU, &samples, 8);
        for k in 0..40 {
            let x = TAU * k as f64 / 40.0;
            let expect = 1.0 + 0.3 * x.sin() + 0.1 * (2.0 * x).cos();
            let dexpect = 0.3 * x.cos() - 0.2 * (2.0 * x).sin();
            assert!((s.eval(x) - expect).abs() < 1e-10);
            assert!((s.deriv(x) - dexpect).abs() < 1e-9);
        }
    }

    #[test]
    fn tabulated_field_interpolates() {
        let mut text = String::new();
        for j in 0..9 {
            for i in 0..17 {
                let x = TAU * i as f64 / 16.0;
                let y = -1.0 + 0.25 * j as f64;
                text.push_str(&format!("{x},{y},{}\n", 2.0 + y));
            }
        }
        let table = tabulated_from_csv::<f64>(TAU, &text).unwrap();
        let f = FlowSpeed::Tabulated { table, h_fd: 1e-3 };
        let v = f.eval(Point2::new(1.0, 0.125));
        assert!((v - 2.125).abs() < 1e-9, "{v}");
    }

    #[test]
    fn manufacture_flat_pair_unit_field() {
        let pair = ArcPair::flat(TAU, 0.0, 1.0, 128).unwrap();
        let grid = GridSpec::new(64, 64, 0.5, 1e-7, 40_000).unwrap();
        let fields = manufacture_problem(&pair, &grid).unwrap();
        for k in 0..32 {
            let x = TAU * k as f64 / 32.0;
            for y in [-0.2, 0.0, 0.31, 0.77, 1.0, 1.3] {
                let v = fields.a1.eval(Point2::new(x, y));
                assert!((v - 1.0).abs() < 5e-4, "a({x},{y}) = {v}");
            }
        }
    }

    #[test]
    fn manufacture_flat_width_two() {
        let pair = ArcPair::flat(TAU, 0.0, 2.0, 128).unwrap();
        let grid = GridSpec::new(64, 64, 0.5, 1e-7, 40_000).unwrap();
        let fields = manufacture_problem(&pair, &grid).unwrap();
        for k in 0..16 {
            let x = TAU * k as f64 / 16.0;
            for y in [0.0, 2.0] {
                let v = fields.a1.eval(Point2::new(x, y));
                assert!((v - 0.5).abs() < 5e-4, "a({x},{y}) = {v}");
            }
        }
    }

    #[test]
    fn manufacture_sinusoidal_residual_shrinks_under_refinement() {
        let pair = ArcPair::new(
            PeriodicArc::from_graph(TAU, 256, |x| 0.1 * x.sin()).unwrap(),
            PeriodicArc::from_graph(TAU, 256, |x| 1.0 + 0.1 * x.sin()).unwrap(),
        )
        .unwrap();
        let residual_at = |n: usize| -> f64 {
            let grid = GridSpec::new(n, n, 0.5, 1e-8, 200_000).unwrap();
            let fields = manufacture_problem(&pair, &grid).unwrap();
            // Re-measure the boundary gradient of the generating pair and
            // compare with the manufactured field on the boundary.
            let u = solve_potential(&pair, &grid).unwrap();
            let mut worst: f64 = 0.0;
            for side in [1usize, 2] {
                for (p, g) in u.boundary_gradient(side).unwrap() {
                    let a = fields.field(side).eval(p);
                    worst = worst.max((g - a).abs());
                }
            }
            worst
        };
        let coarse = residual_at(96);
        let fine = residual_at(192);
        // The generating pair solves the manufactured problem up to
        // discretization error, which shrinks under refinement.
        assert!(fine < 0.02, "fine residual {fine}");
        assert!(fine <= 0.75 * coarse + 1e-4, "coarse {coarse} fine {fine}");
    }
}
