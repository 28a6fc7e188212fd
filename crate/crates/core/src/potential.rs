//! Capacitary potential on the periodic strip between a curve pair:
//! cut-cell Dirichlet Laplace solve, level-curve extraction, and
//! boundary-gradient sampling.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geom::{ArcPair, PeriodicArc, Point2};
use crate::grid::{
    bilinear, classify, extend_into_ghosts, march_level, single_periodic_chain, solve_poisson,
    Classified, NodeStatus, Window,
};
use crate::scalar::Real;

/// Discretization parameters for potential solves.
#[derive(Debug, Clone, Copy)]
pub struct GridSpec<T> {
    pub nx: usize,
    pub ny: usize,
    /// Vertical margin beyond the pair's bounding box.
    pub pad: T,
    /// Scaled infinity-norm residual target.
    pub tol_pde: T,
    pub max_sweeps: usize,
}

impl<T: Real> GridSpec<T> {
    pub fn new(nx: usize, ny: usize, pad: T, tol_pde: T, max_sweeps: usize) -> Result<Self> {
        if nx < 32 || ny < 32 {
            return Err(Error::InvalidGrid(format!("nx, ny must be >= 32, got {nx}x{ny}")));
        }
        if !(tol_pde > T::zero()) || tol_pde > T::of(1e-3) {
            return Err(Error::InvalidGrid(format!(
                "tol_pde must lie in (0, 1e-3], got {tol_pde}"
            )));
        }
        if !(pad > T::zero()) {
            return Err(Error::InvalidGrid("pad must be positive".into()));
        }
        // Red-black sweeps need an even column count across the wrap.
        let nx = nx + nx % 2;
        Ok(GridSpec {
            nx,
            ny,
            pad,
            tol_pde,
            max_sweeps,
        })
    }

    /// Multiply the resolution for refinement studies.
    pub fn scaled(&self, k: usize) -> Self {
        GridSpec {
            nx: self.nx * k,
            ny: self.ny * k,
            ..*self
        }
    }
}

type BoundaryData<T> = Arc<dyn Fn(Point2<T>) -> T + Send + Sync>;

/// One boundary sample with its inward normal and gradient estimate.
#[derive(Debug, Clone, Copy)]
pub struct BoundarySample<T> {
    pub point: Point2<T>,
    /// Unit normal pointing into the stream bed.
    pub inward: (T, T),
    /// One-sided |grad U| estimate at the sample.
    pub grad: T,
}

/// The discrete potential on the strip between a pair, with ghost
/// extension for interpolation and contouring.
#[derive(Clone)]
pub struct PotentialField<T> {
    pair: ArcPair<T>,
    cls: Arc<Classified<T>>,
    u: Arc<Vec<T>>,
    ext: Arc<Vec<T>>,
    g1: BoundaryData<T>,
    g2: BoundaryData<T>,
    pub residual: T,
    pub sweeps: usize,
    pub converged: bool,
}

/// Solve the capacitary potential (`U = 0` on the lower curve, `U = 1` on
/// the upper) on the window spanned by the pair plus padding.
pub fn solve_potential<T: Real>(pair: &ArcPair<T>, grid: &GridSpec<T>) -> Result<PotentialField<T>> {
    let window = window_for(pair, grid);
    solve_in_window(pair, grid, window, None)
}

pub(crate) fn window_for<T: Real>(pair: &ArcPair<T>, grid: &GridSpec<T>) -> Window<T> {
    Window {
        period: pair.period(),
        y_lo: pair.lower().min_y() - grid.pad,
        y_hi: pair.upper().max_y() + grid.pad,
        nx: grid.nx,
        ny: grid.ny,
    }
}

/// Union window of several pairs (used to keep one window across a whole
/// iteration run).
pub(crate) fn window_for_hull<T: Real>(pairs: &[&ArcPair<T>], grid: &GridSpec<T>) -> Window<T> {
    let y_lo = pairs
        .iter()
        .map(|p| p.lower().min_y())
        .fold(T::infinity(), T::min);
    let y_hi = pairs
        .iter()
        .map(|p| p.upper().max_y())
        .fold(T::neg_infinity(), T::max);
    Window {
        period: pairs[0].period(),
        y_lo: y_lo - grid.pad,
        y_hi: y_hi + grid.pad,
        nx: grid.nx,
        ny: grid.ny,
    }
}

pub(crate) fn solve_in_window<T: Real>(
    pair: &ArcPair<T>,
    grid: &GridSpec<T>,
    window: Window<T>,
    warm: Option<&[T]>,
) -> Result<PotentialField<T>> {
    let g1: BoundaryData<T> = Arc::new(|_| T::zero());
    let g2: BoundaryData<T> = Arc::new(|_| T::one());
    solve_with_data(pair, grid, window, g1, g2, Arc::new(|_| T::zero()), warm)
}

pub(crate) fn solve_with_data<T: Real>(
    pair: &ArcPair<T>,
    grid: &GridSpec<T>,
    window: Window<T>,
    g1: BoundaryData<T>,
    g2: BoundaryData<T>,
    source: Arc<dyn Fn(Point2<T>) -> T + Send + Sync>,
    warm: Option<&[T]>,
) -> Result<PotentialField<T>> {
    let gap = pair.min_vertical_gap();
    let cells = gap / window.hy();
    if cells < T::of(8.0) {
        return Err(Error::GapUnresolved {
            cells: cells.f64(),
            need: 8,
        });
    }
    if pair.lower().min_y() <= window.y_lo + window.hy()
        || pair.upper().max_y() >= window.y_hi - window.hy()
    {
        return Err(Error::InvalidGrid(
            "window does not contain the pair with margin".into(),
        ));
    }
    let cls = classify(window, pair.lower(), pair.upper(), &*g1, &*g2);
    let sol = solve_poisson(&cls, &*source, grid.tol_pde, grid.max_sweeps, warm);
    let ext = extend_into_ghosts(&cls, &sol.u);
    Ok(PotentialField {
        pair: pair.clone(),
        cls: Arc::new(cls),
        u: Arc::new(sol.u),
        ext: Arc::new(ext),
        g1,
        g2,
        residual: sol.residual,
        sweeps: sol.sweeps,
        converged: sol.converged,
    })
}

impl<T: Real> PotentialField<T> {
    pub fn pair(&self) -> &ArcPair<T> {
        &self.pair
    }

    pub fn period(&self) -> T {
        self.pair.period()
    }

    /// Largest cell size of the solve window.
    pub fn h_grid(&self) -> T {
        self.cls.window.h_max()
    }

    pub(crate) fn window(&self) -> &Window<T> {
        &self.cls.window
    }

    pub(crate) fn raw_values(&self) -> &[T] {
        &self.u
    }

    /// Bilinear value of the (ghost-extended) potential at `p`.
    pub fn value_at(&self, p: Point2<T>) -> Option<T> {
        bilinear(&self.cls.window, &self.ext, p)
    }

    /// Central-difference gradient of the potential at `p`.
    pub fn grad_at(&self, p: Point2<T>) -> Option<(T, T)> {
        let h = self.cls.window.hx().min(self.cls.window.hy()) * T::of(0.5);
        let vxp = self.value_at(Point2::new(p.x + h, p.y))?;
        let vxm = self.value_at(Point2::new(p.x - h, p.y))?;
        let vyp = self.value_at(Point2::new(p.x, p.y + h))?;
        let vym = self.value_at(Point2::new(p.x, p.y - h))?;
        let two_h = T::of(2.0) * h;
        Some(((vxp - vxm) / two_h, (vyp - vym) / two_h))
    }

    /// Extract the level curve `U = alpha`, `0 < alpha < 1`, as a single
    /// periodic arc resampled to uniform spacing.
    pub fn level_curve(&self, alpha: T) -> Result<PeriodicArc<T>> {
        if !(alpha > T::zero() && alpha < T::one()) {
            return Err(Error::LevelOutOfWindow { level: alpha.f64() });
        }
        let chains = march_level(&self.cls.window, &self.ext, alpha, None);
        let pts = single_periodic_chain(&self.cls.window, chains)?;
        let arc = PeriodicArc::new_dedup(self.period(), pts)?;
        arc.resample(2 * self.cls.window.nx)
    }

    /// Interior classification bounds check: minimum and maximum of U over
    /// interior nodes.
    pub fn interior_range(&self) -> (T, T) {
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for (idx, &s) in self.cls.status.iter().enumerate() {
            if s == NodeStatus::Interior {
                lo = lo.min(self.u[idx]);
                hi = hi.max(self.u[idx]);
            }
        }
        (lo, hi)
    }

    /// Maximum |grad U| over interior nodes at least `margin` away from
    /// both boundaries.
    pub fn max_interior_gradient(&self, margin: T) -> T {
        let w = &self.cls.window;
        let mut worst = T::zero();
        for j in 1..w.ny - 1 {
            for i in 0..w.nx {
                if self.cls.status[w.idx(i, j)] != NodeStatus::Interior {
                    continue;
                }
                let p = Point2::new(w.x(i), w.y(j));
                if self.pair.lower().distance_to(p) < margin
                    || self.pair.upper().distance_to(p) < margin
                {
                    continue;
                }
                if let Some((gx, gy)) = self.grad_at(p) {
                    worst = worst.max((gx * gx + gy * gy).sqrt());
                }
            }
        }
        worst
    }

    /// Boundary samples with inward normals and one-sided quadratic
    /// gradient estimates, on the vertices of side `which` (1 = lower,
    /// 2 = upper).
    pub fn boundary_profile(&self, which: usize) -> Result<Vec<BoundarySample<T>>> {
        let arc = match which {
            1 => self.pair.lower(),
            2 => self.pair.upper(),
            _ => return Err(Error::SolveFailed("side must be 1 or 2".into())),
        };
        let g = match which {
            1 => &self.g1,
            2 => &self.g2,
            _ => unreachable!(),
        };
        let w = &self.cls.window;
        let d = w.h_max() * T::of(1.5);
        let verts = arc.vertices();
        let n = verts.len();
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let prev = if k == 0 {
                verts[n - 1].translated(-arc.period(), T::zero())
            } else {
                verts[k - 1]
            };
            let next = if k + 1 < n {
                verts[k + 1]
            } else {
                verts[0].translated(arc.period(), T::zero())
            };
            let cur = verts[k];
            let mut tx = next.x - prev.x;
            let mut ty = next.y - prev.y;
            let norm = (tx * tx + ty * ty).sqrt();
            if norm < arc.period() * T::of(1e-12) {
                // Degenerate averaged tangent at a sharp vertex: fall back
                // to the outgoing segment direction.
                tx = next.x - cur.x;
                ty = next.y - cur.y;
            }
            let norm = (tx * tx + ty * ty).sqrt();
            let (tx, ty) = (tx / norm, ty / norm);
            // Left normal for the lower curve points into the bed; right
            // normal for the upper curve.
            let inward = if which == 1 { (-ty, tx) } else { (ty, -tx) };
            let p1 = Point2::new(cur.x + inward.0 * d, cur.y + inward.1 * d);
            let p2 = Point2::new(cur.x + inward.0 * d * T::of(2.0), cur.y + inward.1 * d * T::of(2.0));
            let (Some(u1), Some(u2)) = (self.value_at(p1), self.value_at(p2)) else {
                continue;
            };
            let u0 = g(cur);
            let deriv = (T::of(-3.0) * u0 + T::of(4.0) * u1 - u2) / (T::of(2.0) * d);
            out.push(BoundarySample {
                point: cur,
                inward,
                grad: deriv.abs(),
            });
        }
        if out.len() < 4 {
            return Err(Error::SolveFailed(
                "too few boundary samples inside the window".into(),
            ));
        }
        Ok(out)
    }

    /// Boundary points paired with |grad U| estimates.
    pub fn boundary_gradient(&self, which: usize) -> Result<Vec<(Point2<T>, T)>> {
        Ok(self
            .boundary_profile(which)?
            .into_iter()
            .map(|s| (s.point, s.grad))
            .collect())
    }

    /// Discrete flux `integral |grad U| ds` along the level curve at
    /// `alpha` (per period).
    pub fn flux_across_level(&self, alpha: T) -> Result<T> {
        let curve = self.level_curve(alpha)?;
        let verts = curve.vertices();
        let mut acc = T::zero();
        let n = verts.len();
        for k in 0..n {
            let a = verts[k];
            let b = if k + 1 < n {
                verts[k + 1]
            } else {
                verts[0].translated(curve.period(), T::zero())
            };
            let mid = Point2::new((a.x + b.x) * T::of(0.5), (a.y + b.y) * T::of(0.5));
            if let Some((gx, gy)) = self.grad_at(mid) {
                acc += (gx * gx + gy * gy).sqrt() * a.dist(b);
            }
        }
        Ok(acc)
    }

    /// CSV dump `x,y,U` of interior nodes.
    pub fn to_csv(&self) -> String {
        let w = &self.cls.window;
        let mut out = String::from("x,y,U\n");
        for j in 0..w.ny {
            for i in 0..w.nx {
                let idx = w.idx(i, j);
                if self.cls.status[idx] != NodeStatus::Exterior {
                    out.push_str(&format!(
                        "{:.12e},{:.12e},{:.12e}\n",
                        w.x(i).f64(),
                        w.y(j).f64(),
                        self.u[idx].f64()
                    ));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom;
    use std::f64::consts::TAU;

    fn grid64() -> GridSpec<f64> {
        GridSpec::new(64, 64, 0.5, 1e-8, 60_000).unwrap()
    }

    #[test]
    fn flat_pair_linear_potential() {
        let pair = ArcPair::flat(TAU, 0.0, 1.0, 64).unwrap();
        let u = solve_potential(&pair, &grid64()).unwrap();
        assert!(u.converged);
        let mut worst: f64 = 0.0;
        for k in 0..200 {
            let p = Point2::new(TAU * (k % 20) as f64 / 20.0, 0.05 + 0.9 * (k / 20) as f64 / 9.0);
            worst = worst.max((u.value_at(p).unwrap() - p.y).abs());
        }
        assert!(worst < 1e-6, "max |U - y| = {worst}");
    }

    #[test]
    fn flat_pair_width_two() {
        let pair = ArcPair::flat(TAU, 0.0, 2.0, 64).unwrap();
        let u = solve_potential(&pair, &grid64()).unwrap();
        let mut worst: f64 = 0.0;
        for k in 0..100 {
            let p = Point2::new(0.3, 0.1 + 1.8 * k as f64 / 99.0);
            worst = worst.max((u.value_at(p).unwrap() - p.y / 2.0).abs());
        }
        assert!(worst < 1e-6, "max |U - y/2| = {worst}");
    }

    #[test]
    fn grid_refinement_richardson() {
        let pair = geom::ArcPair::new(
            geom::PeriodicArc::flat(TAU, 0.0, 128),
            geom::PeriodicArc::from_graph(TAU, 128, |x| 1.0 + 0.2 * x.sin()).unwrap(),
        )
        .unwrap();
        let probe = Point2::new(0.0, 0.5);
        let v128 = {
            let g = GridSpec::new(128, 128, 0.5, 1e-9, 120_000).unwrap();
            solve_potential(&pair, &g).unwrap().value_at(probe).unwrap()
        };
        let v256 = {
            let g = GridSpec::new(256, 256, 0.5, 1e-9, 240_000).unwrap();
            solve_potential(&pair, &g).unwrap().value_at(probe).unwrap()
        };
        // Second-order scheme: the 128->256 difference bounds the 256
        // error by roughly a third; require agreement within 4x of that.
        let diff = (v128 - v256).abs();
        assert!(diff < 4.0 * 1e-3, "refinement jump {diff}");
    }

    #[test]
    fn gap_resolution_guard() {
        let pair = ArcPair::flat(TAU, 0.0, 0.05, 64).unwrap();
        let r = solve_potential(&pair, &grid64());
        assert!(matches!(r, Err(Error::GapUnresolved { .. })));
    }

    #[test]
    fn level_curve_flat() {
        let pair = ArcPair::flat(TAU, 0.0, 1.0, 64).unwrap();
        let u = solve_potential(&pair, &grid64()).unwrap();
        let c = u.level_curve(0.25).unwrap();
        let h = u.h_grid();
        for v in c.vertices() {
            assert!((v.y - 0.25).abs() < h * h, "y = {}", v.y);
        }
    }

    #[test]
    fn level_curve_requires_inner_alpha() {
        let pair = ArcPair::flat(TAU, 0.0, 1.0, 64).unwrap();
        let u = solve_potential(&pair, &grid64()).unwrap();
        assert!(u.level_curve(0.0).is_err());
        assert!(u.level_curve(1.2).is_err());
    }

    #[test]
    fn level_curve_mirror_symmetry() {
        // The sheared sinusoidal pair maps to itself under
        // (x, y) -> (x + pi, 1 - y); its mid level inherits the symmetry.
        let pair = geom::ArcPair::new(
            geom::PeriodicArc::from_graph(TAU, 256, |x| 0.1 * x.sin()).unwrap(),
            geom::PeriodicArc::from_graph(TAU, 256, |x| 1.0 + 0.1 * x.sin()).unwrap(),
        )
        .unwrap();
        let grid = GridSpec::new(128, 128, 0.5, 1e-9, 120_000).unwrap();
        let u = solve_potential(&pair, &grid).unwrap();
        let mid = u.level_curve(0.5).unwrap();
        // Sample y(x) along the curve and check y(x) + y(x + pi) = 1.
        let y_at = |x: f64| -> f64 {
            let hits = mid.vertical_line_hits(x);
            hits[0]
        };
        let mut worst: f64 = 0.0;
        for k in 0..64 {
            let x = TAU * k as f64 / 64.0;
            worst = worst.max((y_at(x) + y_at(x + std::f64::consts::PI) - 1.0).abs());
        }
        assert!(worst < 1e-3, "symmetry defect {worst}");
    }

    #[test]
    fn harmonic_rescaling_of_level_band() {
        // Re-solving between the eps level and the top reproduces the
        // rescaled potential at probes, within a few grid tolerances.
        let pair = geom::ArcPair::new(
            geom::PeriodicArc::flat(TAU, 0.0, 128),
            geom::PeriodicArc::from_graph(TAU, 128, |x| 1.0 + 0.15 * x.sin()).unwrap(),
        )
        .unwrap();
        let tol_pde = 1e-4;
        let grid = GridSpec::new(128, 128, 0.5, tol_pde, 120_000).unwrap();
        let u = solve_potential(&pair, &grid).unwrap();
        let eps = 0.2;
        let level = u.level_curve(eps).unwrap();
        let sub_pair = geom::ArcPair::new(level, pair.upper().clone()).unwrap();
        let u2 = solve_potential(&sub_pair, &grid).unwrap();
        let mut worst: f64 = 0.0;
        for k in 0..40 {
            let p = Point2::new(TAU * k as f64 / 40.0, 0.55);
            if let (Some(a), Some(b)) = (u.value_at(p), u2.value_at(p)) {
                worst = worst.max((b - (a - eps) / (1.0 - eps)).abs());
            }
        }
        assert!(worst < 5.0 * tol_pde.max(1e-3), "rescaling defect {worst}");
    }

    #[test]
    fn boundary_gradient_flat_strips() {
        for (width, expect) in [(1.0, 1.0), (2.0, 0.5)] {
            let pair = ArcPair::flat(TAU, 0.0, width, 64).unwrap();
            let u = solve_potential(&pair, &grid64()).unwrap();
            for side in [1, 2] {
                for (_, g) in u.boundary_gradient(side).unwrap() {
                    assert!(
                        (g - expect).abs() <= 1e-4 * expect,
                        "side {side} width {width}: {g}"
                    );
                }
            }
        }
    }

    #[test]
    fn maximum_principle() {
        let pair = geom::ArcPair::new(
            geom::PeriodicArc::from_graph(TAU, 128, |x| 0.2 * x.sin()).unwrap(),
            geom::PeriodicArc::from_graph(TAU, 128, |x| 1.3 + 0.2 * (x + 1.0).cos()).unwrap(),
        )
        .unwrap();
        let u = solve_potential(&pair, &grid64()).unwrap();
        let (lo, hi) = u.interior_range();
        assert!(lo >= -1e-7, "min U = {lo}");
        assert!(hi <= 1.0 + 1e-7, "max U = {hi}");
    }

    #[test]
    fn flux_constant_across_levels() {
        let pair = geom::ArcPair::new(
            geom::PeriodicArc::from_graph(TAU, 128, |x| 0.1 * x.sin()).unwrap(),
            geom::PeriodicArc::from_graph(TAU, 128, |x| 1.0 + 0.1 * (x * 2.0).cos()).unwrap(),
        )
        .unwrap();
        let grid = GridSpec::new(128, 128, 0.75, 1e-9, 120_000).unwrap();
        let u = solve_potential(&pair, &grid).unwrap();
        let f25 = u.flux_across_level(0.25).unwrap();
        let f50 = u.flux_across_level(0.5).unwrap();
        let f75 = u.flux_across_level(0.75).unwrap();
        let base = f50;
        for f in [f25, f75] {
            assert!((f - base).abs() / base < 0.01, "{f25} {f50} {f75}");
        }
    }

    #[test]
    fn level_length_interpolation_bound() {
        // Lengths of level curves are convex in the level: the length at
        // eps is below the chord between the boundary and the level at h.
        let pair = geom::ArcPair::new(
            geom::PeriodicArc::from_graph(TAU, 256, |x| 0.15 * x.sin()).unwrap(),
            geom::PeriodicArc::from_graph(TAU, 256, |x| 1.2 + 0.1 * x.cos()).unwrap(),
        )
        .unwrap();
        let grid = GridSpec::new(192, 192, 0.6, 1e-9, 200_000).unwrap();
        let u = solve_potential(&pair, &grid).unwrap();
        let eps = 0.1;
        let h = 0.5;
        let len_gamma = pair.lower().arc_length();
        let len_eps = u.level_curve(eps).unwrap().arc_length();
        let len_h = u.level_curve(h).unwrap().arc_length();
        let bound = (1.0 - eps / h) * len_gamma + (eps / h) * len_h;
        assert!(
            len_eps <= bound * 1.02,
            "len(eps) = {len_eps}, bound = {bound}"
        );
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let pair = ArcPair::flat(TAU, 0.0, 1.0, 64).unwrap();
        let u = solve_potential(&pair, &grid64()).unwrap();
        let csv = u.to_csv();
        assert!(csv.starts_with("x,y,U\n"));
        assert!(csv.lines().count() > 100);
    }
}
