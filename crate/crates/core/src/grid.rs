//! Internal grid machinery: x-periodic Cartesian windows, cut-cell node
//! classification against boundary polylines, red-black SOR for the
//! five-point Laplacian with Shortley-Weller boundary arms, ghost
//! extension, and periodic marching-squares contour extraction.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geom::{PeriodicArc, Point2};
use crate::scalar::Real;

/// An x-periodic rectangular node window. Columns `i = 0..nx` (periodic),
/// rows `j = 0..ny`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Window<T> {
    pub period: T,
    pub y_lo: T,
    pub y_hi: T,
    pub nx: usize,
    pub ny: usize,
}

impl<T: Real> Window<T> {
    pub fn hx(&self) -> T {
        self.period / T::of_usize(self.nx)
    }

    pub fn hy(&self) -> T {
        (self.y_hi - self.y_lo) / T::of_usize(self.ny - 1)
    }

    pub fn h_max(&self) -> T {
        self.hx().max(self.hy())
    }

    pub fn x(&self, i: usize) -> T {
        self.hx() * T::of_usize(i)
    }

    pub fn y(&self, j: usize) -> T {
        self.y_lo + self.hy() * T::of_usize(j)
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn node_count(&self) -> usize {
        self.nx * self.ny
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum NodeStatus {
    Exterior,
    Interior,
    /// Interior node closer than a sliver to the boundary: value pinned.
    Pinned,
}

/// A shortened stencil arm ending on a boundary curve.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Cut<T> {
    /// Arm length as a fraction of the full spacing, in (0, 1].
    pub frac: T,
    /// Dirichlet value at the cut point.
    pub value: T,
}

/// Directions index the `cuts` array: E, W, N, S.
pub(crate) const DIR_E: usize = 0;
pub(crate) const DIR_W: usize = 1;
pub(crate) const DIR_N: usize = 2;
pub(crate) const DIR_S: usize = 3;

pub(crate) struct Classified<T> {
    pub window: Window<T>,
    pub status: Vec<NodeStatus>,
    pub cuts: HashMap<usize, [Option<Cut<T>>; 4]>,
    pub pinned: HashMap<usize, T>,
}

struct CurveHits<T> {
    /// Per column `i`: sorted crossing ordinates of the curve with `x = x_i`.
    col: Vec<Vec<T>>,
    /// Per row `j`: sorted crossing abscissae (mod P) with `y = y_j`.
    row: Vec<Vec<T>>,
}

fn collect_hits<T: Real>(window: &Window<T>, arc: &PeriodicArc<T>) -> CurveHits<T> {
    let nx = window.nx;
    let ny = window.ny;
    let hx = window.hx();
    let hy = window.hy();
    let period = window.period;
    let mut col: Vec<Vec<T>> = vec![Vec::new(); nx];
    let mut row: Vec<Vec<T>> = vec![Vec::new(); ny];
    for (a, b) in arc.segments() {
        // Column crossings: vertical lines x = i * hx (every period copy
        // maps to the same column).
        // Enumerate a superset of candidate lines; the exact half-open
        // check below decides (division rounding must not drop hits).
        let (xmin, xmax) = (a.x.min(b.x), a.x.max(b.x));
        let i_lo = (xmin / hx).ceil().f64() as i64 - 1;
        let i_hi = (xmax / hx).floor().f64() as i64 + 1;
        for ii in i_lo..=i_hi {
            let x = hx * T::of(ii as f64);
            // Half-open in x so shared vertices count once.
            let (lo, hi) = if a.x <= b.x { (a.x, b.x) } else { (b.x, a.x) };
            if !(lo <= x && x < hi) {
                continue;
            }
            let t = (x - a.x) / (b.x - a.x);
            let y = a.y + t * (b.y - a.y);
            let i = ((ii % nx as i64) + nx as i64) as usize % nx;
            col[i].push(y);
        }
        // Row crossings: horizontal lines y = y_lo + j * hy.
        let (ymin, ymax) = (a.y.min(b.y), a.y.max(b.y));
        if ymax > ymin {
            let j_lo = ((ymin - window.y_lo) / hy).ceil().f64() as i64 - 1;
            let j_hi = ((ymax - window.y_lo) / hy).floor().f64() as i64 + 1;
            for jj in j_lo.max(0)..=j_hi.min(ny as i64 - 1) {
                let y = window.y(jj as usize);
                let (lo, hi) = if a.y <= b.y { (a.y, b.y) } else { (b.y, a.y) };
                if !(lo <= y && y < hi) {
                    continue;
                }
                let t = (y - a.y) / (b.y - a.y);
                let x = a.x + t * (b.x - a.x);
                let xm = x - (x / period).floor() * period;
                row[jj as usize].push(xm);
            }
        }
    }
    // Duplicate hits at the same geometric crossing (the closure segment
    // re-entering through the wrap, off by an ulp) would break crossing
    // parity; collapse them.
    let tol_col = hy * T::of(1e-9);
    for c in &mut col {
        c.sort_by(|p, q| p.partial_cmp(q).unwrap());
        c.dedup_by(|a, b| (*a - *b).abs() <= tol_col);
    }
    let tol_row = hx * T::of(1e-9);
    for r in &mut row {
        for v in r.iter_mut() {
            if *v > period - tol_row {
                *v -= period;
            }
        }
        r.sort_by(|p, q| p.partial_cmp(q).unwrap());
        r.dedup_by(|a, b| (*a - *b).abs() <= tol_row);
    }
    CurveHits { col, row }
}

/// Nearest hit strictly within `(from, from + span]` going up, if any.
fn nearest_above<T: Real>(hits: &[T], from: T, span: T) -> Option<T> {
    hits.iter()
        .copied()
        .filter(|&h| h > from && h <= from + span)
        .fold(None, |best: Option<T>, h| match best {
            Some(b) if b <= h => Some(b),
            _ => Some(h),
        })
}

/// Nearest hit strictly within `[from - span, from)` going down, if any.
fn nearest_below<T: Real>(hits: &[T], from: T, span: T) -> Option<T> {
    hits.iter()
        .copied()
        .filter(|&h| h < from && h >= from - span)
        .fold(None, |best: Option<T>, h| match best {
            Some(b) if b >= h => Some(b),
            _ => Some(h),
        })
}

/// Classify nodes of `window` against a lower and an upper curve carrying
/// Dirichlet data, producing Shortley-Weller arms for boundary-adjacent
/// interior nodes.
pub(crate) fn classify<T: Real>(
    window: Window<T>,
    lower: &PeriodicArc<T>,
    upper: &PeriodicArc<T>,
    g_lower: &dyn Fn(Point2<T>) -> T,
    g_upper: &dyn Fn(Point2<T>) -> T,
) -> Classified<T> {
    let nx = window.nx;
    let ny = window.ny;
    let hx = window.hx();
    let hy = window.hy();
    let period = window.period;
    let hits_lo = collect_hits(&window, lower);
    let hits_up = collect_hits(&window, upper);
    let mut status = vec![NodeStatus::Exterior; window.node_count()];

    let mut cuts: HashMap<usize, [Option<Cut<T>>; 4]> = HashMap::new();
    let mut pinned: HashMap<usize, T> = HashMap::new();
    let sliver = T::of(1e-6);
    let tol_on = hy * T::of(1e-9);

    // Interior = above the lower curve (odd crossings below) and below the
    // upper curve (even crossings below). Nodes sitting on a curve are
    // pinned to its Dirichlet value.
    for i in 0..nx {
        let x = window.x(i);
        let cl = &hits_lo.col[i];
        let cu = &hits_up.col[i];
        let mut kl = 0usize;
        let mut ku = 0usize;
        for j in 0..ny {
            let y = window.y(j);
            while kl < cl.len() && cl[kl] < y {
                kl += 1;
            }
            while ku < cu.len() && cu[ku] < y {
                ku += 1;
            }
            let idx = window.idx(i, j);
            let near = |hits: &[T], k: usize| -> bool {
                (k < hits.len() && (hits[k] - y).abs() <= tol_on)
                    || (k > 0 && (hits[k - 1] - y).abs() <= tol_on)
            };
            if near(cl, kl) {
                status[idx] = NodeStatus::Pinned;
                pinned.insert(idx, g_lower(Point2::new(x, y)));
            } else if near(cu, ku) {
                status[idx] = NodeStatus::Pinned;
                pinned.insert(idx, g_upper(Point2::new(x, y)));
            } else if kl % 2 == 1 && ku % 2 == 0 {
                status[idx] = NodeStatus::Interior;
            }
        }
    }

    let row_query = |hits: &CurveHits<T>, j: usize, from: T, dir_east: bool| -> Option<T> {
        // Distance to the nearest row hit within one spacing in x,
        // accounting for the periodic wrap.
        let r = &hits.row[j];
        if r.is_empty() {
            return None;
        }
        let mut best: Option<T> = None;
        for &h in r {
            for shift in [-T::one(), T::zero(), T::one()] {
                let x = h + period * shift;
                let d = if dir_east { x - from } else { from - x };
                if d > T::zero() && d <= hx {
                    best = Some(match best {
                        Some(b) => b.min(d),
                        None => d,
                    });
                }
            }
        }
        best
    };

    for j in 1..ny.saturating_sub(1) {
        for i in 0..nx {
            let idx = window.idx(i, j);
            if status[idx] != NodeStatus::Interior {
                continue;
            }
            let x = window.x(i);
            let y = window.y(j);
            let mut arms: [Option<Cut<T>>; 4] = [None, None, None, None];
            let mut any = false;

            // Vertical arms from column hits of both curves.
            for (hits, g) in [
                (&hits_lo, &g_lower as &&dyn Fn(Point2<T>) -> T),
                (&hits_up, &g_upper),
            ] {
                if let Some(hy_hit) = nearest_above(&hits.col[i], y, hy) {
                    let frac = (hy_hit - y) / hy;
                    let value = g(Point2::new(x, hy_hit));
                    let cand = Cut { frac, value };
                    if arms[DIR_N].map_or(true, |c| cand.frac < c.frac) {
                        arms[DIR_N] = Some(cand);
                        any = true;
                    }
                }
                if let Some(hy_hit) = nearest_below(&hits.col[i], y, hy) {
                    let frac = (y - hy_hit) / hy;
                    let value = g(Point2::new(x, hy_hit));
                    let cand = Cut { frac, value };
                    if arms[DIR_S].map_or(true, |c| cand.frac < c.frac) {
                        arms[DIR_S] = Some(cand);
                        any = true;
                    }
                }
                // Horizontal arms from row hits.
                for (dir, east) in [(DIR_E, true), (DIR_W, false)] {
                    if let Some(d) = row_query(hits, j, x, east) {
                        let frac = d / hx;
                        let hit_x = if east { x + d } else { x - d };
                        let hit_x = hit_x - (hit_x / period).floor() * period;
                        let value = g(Point2::new(hit_x, y));
                        let cand = Cut { frac, value };
                        if arms[dir].map_or(true, |c| cand.frac < c.frac) {
                            arms[dir] = Some(cand);
                            any = true;
                        }
                    }
                }
            }

            // Drop arms whose neighbor is interior anyway (a crossing pair
            // straddles the neighbor, not this edge) -- keep the cut only
            // when the neighbor is not interior OR the cut is genuinely
            // closer than the neighbor.
            let nbr_interior = [
                status[window.idx((i + 1) % nx, j)] == NodeStatus::Interior,
                status[window.idx((i + nx - 1) % nx, j)] == NodeStatus::Interior,
                j + 1 < ny && status[window.idx(i, j + 1)] == NodeStatus::Interior,
                j >= 1 && status[window.idx(i, j - 1)] == NodeStatus::Interior,
            ];
            for dir in 0..4 {
                if arms[dir].is_some() && nbr_interior[dir] {
                    // A curve passes between node and neighbor yet both are
                    // interior: under-resolved sliver. Keep the cut (the
                    // neighbor sees its own), it remains an M-matrix.
                    let frac = arms[dir].unwrap().frac;
                    if frac >= T::one() {
                        arms[dir] = None;
                    }
                }
            }

            if any {
                let min_frac = arms
                    .iter()
                    .flatten()
                    .map(|c| c.frac)
                    .fold(T::infinity(), T::min);
                if min_frac < sliver {
                    let v = arms
                        .iter()
                        .flatten()
                        .min_by(|a, b| a.frac.partial_cmp(&b.frac).unwrap())
                        .unwrap()
                        .value;
                    status[idx] = NodeStatus::Pinned;
                    pinned.insert(idx, v);
                } else if arms.iter().any(Option::is_some) {
                    cuts.insert(idx, arms);
                }
            }

            // Guard: exterior neighbor without a recorded cut (tangency
            // slipped through the hit collection). Synthesize a midpoint cut.
            for dir in 0..4 {
                if arms[dir].is_none() && !nbr_interior[dir] && status[idx] == NodeStatus::Interior {
                    let (px, py, curve_is_lower) = match dir {
                        DIR_E => (x + hx * T::of(0.5), y, y < T::of(0.5) * (window.y_lo + window.y_hi)),
                        DIR_W => (x - hx * T::of(0.5), y, y < T::of(0.5) * (window.y_lo + window.y_hi)),
                        DIR_N => (x, y + hy * T::of(0.5), false),
                        DIR_S => (x, y - hy * T::of(0.5), true),
                        _ => unreachable!(),
                    };
                    // Only synthesize when the neighbor is within the pair's
                    // vertical hull; far-field exterior rows need no arm.
                    let near_lower = lower.distance_to(Point2::new(px, py)) <= hx + hy;
                    let near_upper = upper.distance_to(Point2::new(px, py)) <= hx + hy;
                    if near_lower || near_upper {
                        let use_lower = if near_lower && near_upper {
                            curve_is_lower
                        } else {
                            near_lower
                        };
                        let pxm = px - (px / period).floor() * period;
                        let value = if use_lower {
                            g_lower(Point2::new(pxm, py))
                        } else {
                            g_upper(Point2::new(pxm, py))
                        };
                        let entry = cuts.entry(idx).or_insert([None, None, None, None]);
                        entry[dir] = Some(Cut {
                            frac: T::of(0.5),
                            value,
                        });
                    }
                }
            }
        }
    }

    Classified {
        window,
        status,
        cuts,
        pinned,
    }
}

pub(crate) struct GridSolve<T> {
    pub u: Vec<T>,
    pub residual: T,
    pub sweeps: usize,
    pub converged: bool,
}

/// Red-black SOR for `Delta u = f` with the Shortley-Weller stencil, with
/// a conjugate-gradient (normal equations) fallback if SOR stalls.
pub(crate) fn solve_poisson<T: Real>(
    cls: &Classified<T>,
    source: &dyn Fn(Point2<T>) -> T,
    tol: T,
    max_sweeps: usize,
    warm: Option<&[T]>,
) -> GridSolve<T> {
    let w = &cls.window;
    let (nx, ny) = (w.nx, w.ny);
    let hx = w.hx();
    let hy = w.hy();
    let n = w.node_count();
    let mut u = vec![T::zero(); n];
    if let Some(prev) = warm {
        if prev.len() == n {
            u.copy_from_slice(prev);
        }
    }
    for (&idx, &v) in &cls.pinned {
        u[idx] = v;
    }

    // Precompute per-node stencils for interior nodes.
    // coeffs: [cE, cW, cN, cS], diag, rhs_extra (from cut Dirichlet data).
    let mut active: Vec<usize> = Vec::new();
    let mut stencil: Vec<([T; 4], T, T)> = Vec::with_capacity(n);
    let two = T::of(2.0);
    for j in 0..ny {
        for i in 0..nx {
            let idx = w.idx(i, j);
            if cls.status[idx] != NodeStatus::Interior {
                stencil.push(([T::zero(); 4], T::one(), T::zero()));
                continue;
            }
            active.push(idx);
            let arms = cls.cuts.get(&idx);
            let frac = |dir: usize| -> (T, Option<T>) {
                match arms.and_then(|a| a[dir]) {
                    Some(c) => (c.frac.max(T::of(1e-6)), Some(c.value)),
                    None => (T::one(), None),
                }
            };
            let (fe, ve) = frac(DIR_E);
            let (fw, vw) = frac(DIR_W);
            let (fn_, vn) = frac(DIR_N);
            let (fs, vs) = frac(DIR_S);
            let he = fe * hx;
            let hw = fw * hx;
            let hn = fn_ * hy;
            let hs = fs * hy;
            let ce = two / (he * (he + hw));
            let cw = two / (hw * (he + hw));
            let cn = two / (hn * (hn + hs));
            let cs = two / (hs * (hn + hs));
            let diag = ce + cw + cn + cs;
            let mut rhs_extra = T::zero();
            let p = Point2::new(w.x(i), w.y(j));
            rhs_extra -= source(p);
            if let Some(v) = ve {
                rhs_extra += ce * v;
            }
            if let Some(v) = vw {
                rhs_extra += cw * v;
            }
            if let Some(v) = vn {
                rhs_extra += cn * v;
            }
            if let Some(v) = vs {
                rhs_extra += cs * v;
            }
            stencil.push(([ce, cw, cn, cs], diag, rhs_extra));
        }
    }

    let neighbor_val = |u: &[T], i: usize, j: usize, dir: usize, arms: Option<&[Option<Cut<T>>; 4]>| -> T {
        if let Some(a) = arms {
            if a[dir].is_some() {
                return T::zero(); // contribution folded into rhs_extra
            }
        }
        match dir {
            DIR_E => u[w.idx((i + 1) % nx, j)],
            DIR_W => u[w.idx((i + nx - 1) % nx, j)],
            DIR_N => u[w.idx(i, j + 1)],
            DIR_S => u[w.idx(i, j - 1)],
            _ => unreachable!(),
        }
    };

    // SOR factor from the Jacobi spectral-radius estimate for the window.
    let rho = {
        let pi = std::f64::consts::PI;
        let cx = (pi / nx as f64).cos();
        let cy = (pi / ny as f64).cos();
        let hx2 = hx.f64() * hx.f64();
        let hy2 = hy.f64() * hy.f64();
        (cx * hy2 + cy * hx2) / (hx2 + hy2)
    };
    let omega = T::of(2.0 / (1.0 + (1.0 - rho * rho).sqrt()));

    let residual_norm = |u: &[T]| -> T {
        let mut worst = T::zero();
        for &idx in &active {
            let (i, j) = (idx % nx, idx / nx);
            let (coef, diag, rhs_extra) = stencil[idx];
            let arms = cls.cuts.get(&idx);
            let mut acc = rhs_extra;
            for dir in 0..4 {
                acc += coef[dir] * neighbor_val(u, i, j, dir, arms);
            }
            let r = (acc - diag * u[idx]) / diag;
            worst = worst.max(r.abs());
        }
        worst
    };

    let mut sweeps = 0usize;
    let mut res = residual_norm(&u);
    while res > tol && sweeps < max_sweeps {
        for color in 0..2usize {
            for &idx in &active {
                let (i, j) = (idx % nx, idx / nx);
                if (i + j) % 2 != color {
                    continue;
                }
                let (coef, diag, rhs_extra) = stencil[idx];
                let arms = cls.cuts.get(&idx);
                let mut acc = rhs_extra;
                for dir in 0..4 {
                    acc += coef[dir] * neighbor_val(&u, i, j, dir, arms);
                }
                let gs = acc / diag;
                u[idx] = u[idx] + omega * (gs - u[idx]);
            }
        }
        sweeps += 1;
        if sweeps % 16 == 0 || sweeps == max_sweeps {
            res = residual_norm(&u);
        }
    }
    if res > tol {
        // Conjugate gradient on the normal equations as a fallback.
        let (u2, res2, it2) = cgnr(cls, &stencil, &active, u.clone(), tol, 4 * max_sweeps);
        if res2 < res {
            u = u2;
            res = res2;
            sweeps += it2;
        }
    }
    GridSolve {
        converged: res <= tol,
        u,
        residual: res,
        sweeps,
    }
}

/// Conjugate gradient on `A^T A x = A^T b` for the (mildly nonsymmetric)
/// cut-cell system. Row scaling by the diagonal keeps conditioning sane.
fn cgnr<T: Real>(
    cls: &Classified<T>,
    stencil: &[([T; 4], T, T)],
    active: &[usize],
    mut u: Vec<T>,
    tol: T,
    max_iter: usize,
) -> (Vec<T>, T, usize) {
    let w = &cls.window;
    let nx = w.nx;
    // Assemble scaled rows: (A x - b)/diag per active node.
    struct Row<T> {
        idx: usize,
        cols: [(usize, T); 4],
        ncols: usize,
        rhs: T,
    }
    let mut rows: Vec<Row<T>> = Vec::with_capacity(active.len());
    for &idx in active {
        let (i, j) = (idx % nx, idx / nx);
        let (coef, diag, rhs_extra) = stencil[idx];
        let arms = cls.cuts.get(&idx);
        let mut cols = [(0usize, T::zero()); 4];
        let mut ncols = 0usize;
        let mut push = |c: usize, v: T| {
            cols[ncols] = (c, v);
            ncols += 1;
        };
        let has_cut = |dir: usize| arms.map_or(false, |a| a[dir].is_some());
        if !has_cut(DIR_E) {
            push(w.idx((i + 1) % nx, j), coef[DIR_E] / diag);
        }
        if !has_cut(DIR_W) {
            push(w.idx((i + nx - 1) % nx, j), coef[DIR_W] / diag);
        }
        if !has_cut(DIR_N) {
            push(w.idx(i, j + 1), coef[DIR_N] / diag);
        }
        if !has_cut(DIR_S) {
            push(w.idx(i, j - 1), coef[DIR_S] / diag);
        }
        rows.push(Row {
            idx,
            cols,
            ncols,
            rhs: rhs_extra / diag,
        });
    }
    let n = u.len();
    let apply = |x: &[T], out: &mut Vec<T>| {
        // out = A_scaled x (only active rows meaningful)
        out.clear();
        out.resize(rows.len(), T::zero());
        for (r, row) in rows.iter().enumerate() {
            let mut acc = -x[row.idx];
            for k in 0..row.ncols {
                let (c, v) = row.cols[k];
                // Exterior columns hold zeros; pinned columns constant.
                acc += v * x[c];
            }
            out[r] = acc;
        }
    };
    let apply_t = |r: &[T], out: &mut Vec<T>| {
        out.clear();
        out.resize(n, T::zero());
        for (k, row) in rows.iter().enumerate() {
            let rv = r[k];
            out[row.idx] -= rv;
            for c in 0..row.ncols {
                let (ci, v) = row.cols[c];
                out[ci] += v * rv;
            }
        }
    };
    // b in scaled form: rows store rhs = b/diag with sign such that
    // residual r = b - A x  ==>  r_row = -(apply(x)) - rhs ... careful:
    // apply(x) computes (sum c x - x) ; equation: x = sum c x + rhs ==>
    // residual = sum c x + rhs - x = apply(x) + rhs.
    let mut r_vec = Vec::new();
    apply(&u, &mut r_vec);
    for (k, row) in rows.iter().enumerate() {
        r_vec[k] = r_vec[k] + row.rhs;
    }
    let mut g = Vec::new();
    apply_t(&r_vec, &mut g);
    // Minimize ||A x + b||: direction updates on the normal equations.
    let mut p: Vec<T> = g.clone();
    let mut g_dot = g.iter().map(|&v| v * v).sum::<T>();
    let mut ap = Vec::new();
    let mut it = 0usize;
    let inf_norm = |r: &[T]| r.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
    let mut res = inf_norm(&r_vec);
    while res > tol && it < max_iter && g_dot > T::zero() {
        apply(&p, &mut ap);
        let denom = ap.iter().map(|&v| v * v).sum::<T>();
        if denom <= T::zero() {
            break;
        }
        // r = A x + b decreases along -p when minimizing ||A x + b||^2:
        // step alpha = -<g,p>/||A p||^2, with g = A^T r.
        let alpha = g_dot / denom;
        for (xi, pi) in u.iter_mut().zip(&p) {
            *xi = *xi - *pi * alpha;
        }
        for (ri, api) in r_vec.iter_mut().zip(&ap) {
            *ri = *ri - *api * alpha;
        }
        apply_t(&r_vec, &mut g);
        let g_dot_new = g.iter().map(|&v| v * v).sum::<T>();
        let beta = g_dot_new / g_dot;
        g_dot = g_dot_new;
        for (pi, gi) in p.iter_mut().zip(&g) {
            *pi = *gi + *pi * beta;
        }
        it += 1;
        if it % 32 == 0 {
            res = inf_norm(&r_vec);
        }
    }
    res = inf_norm(&r_vec);
    (u, res, it)
}

/// Extend the solution across the boundary by one ghost ring, quadratic
/// where two interior nodes back the arm, linear otherwise. Far-exterior
/// nodes are NaN.
pub(crate) fn extend_into_ghosts<T: Real>(cls: &Classified<T>, u: &[T]) -> Vec<T> {
    let w = &cls.window;
    let (nx, ny) = (w.nx, w.ny);
    let nan = T::nan();
    let mut ext = vec![nan; u.len()];
    for idx in 0..u.len() {
        match cls.status[idx] {
            NodeStatus::Interior | NodeStatus::Pinned => ext[idx] = u[idx],
            NodeStatus::Exterior => {}
        }
    }
    // For each interior node with a cut arm, extrapolate into the exterior
    // neighbor behind the cut.
    let mut ghost_acc: HashMap<usize, (T, usize)> = HashMap::new();
    for (&idx, arms) in &cls.cuts {
        let (i, j) = (idx % nx, idx / nx);
        for dir in 0..4 {
            let Some(cut) = arms[dir] else { continue };
            let (gi, gj): (isize, isize) = match dir {
                DIR_E => (i as isize + 1, j as isize),
                DIR_W => (i as isize - 1, j as isize),
                DIR_N => (i as isize, j as isize + 1),
                DIR_S => (i as isize, j as isize - 1),
                _ => unreachable!(),
            };
            if gj < 0 || gj >= ny as isize {
                continue;
            }
            let gidx = w.idx(((gi % nx as isize) + nx as isize) as usize % nx, gj as usize);
            if cls.status[gidx] != NodeStatus::Exterior {
                continue;
            }
            // Positions along the arm, measured from the cut point.
            let theta = cut.frac.max(T::of(0.2));
            let d1 = theta; // node, in units of the spacing
            let gb = cut.value;
            let u1 = u[idx];
            // Second interior node along the same line, if present.
            let (i2, j2): (isize, isize) = match dir {
                DIR_E => (i as isize - 1, j as isize),
                DIR_W => (i as isize + 1, j as isize),
                DIR_N => (i as isize, j as isize - 1),
                DIR_S => (i as isize, j as isize + 1),
                _ => unreachable!(),
            };
            let ghost_offset = T::one() - cut.frac;
            let est = if j2 >= 0 && j2 < ny as isize {
                let idx2 = w.idx(((i2 % nx as isize) + nx as isize) as usize % nx, j2 as usize);
                if cls.status[idx2] == NodeStatus::Interior {
                    let d2 = d1 + T::one();
                    let u2 = u[idx2];
                    let c2 = ((u2 - gb) / d2 - (u1 - gb) / d1) / (d2 - d1);
                    let c1 = (u1 - gb) / d1 - c2 * d1;
                    let t = -ghost_offset;
                    gb + c1 * t + c2 * t * t
                } else {
                    gb - (u1 - gb) * (ghost_offset / d1)
                }
            } else {
                gb - (u1 - gb) * (ghost_offset / d1)
            };
            let e = ghost_acc.entry(gidx).or_insert((T::zero(), 0));
            e.0 += est;
            e.1 += 1;
        }
    }
    for (gidx, (sum, cnt)) in ghost_acc {
        ext[gidx] = sum / T::of_usize(cnt);
    }
    ext
}

/// Bilinear interpolation of node values at an arbitrary point; `None`
/// when any participating corner is NaN or the point is outside the
/// window.
pub(crate) fn bilinear<T: Real>(window: &Window<T>, values: &[T], p: Point2<T>) -> Option<T> {
    let hx = window.hx();
    let hy = window.hy();
    let fx = p.x / hx;
    let i0 = fx.floor();
    let tx = fx - i0;
    let mut i = (i0.f64() as i64) % window.nx as i64;
    if i < 0 {
        i += window.nx as i64;
    }
    let i = i as usize;
    let gy = (p.y - window.y_lo) / hy;
    if gy < T::zero() || gy > T::of_usize(window.ny - 1) {
        return None;
    }
    let j = (gy.floor().f64() as usize).min(window.ny - 2);
    let ty = gy - T::of_usize(j);
    let at = |ii: usize, jj: usize| values[window.idx(ii % window.nx, jj)];
    let v00 = at(i, j);
    let v10 = at(i + 1, j);
    let v01 = at(i, j + 1);
    let v11 = at(i + 1, j + 1);
    if !v00.is_finite() || !v10.is_finite() || !v01.is_finite() || !v11.is_finite() {
        return None;
    }
    let one = T::one();
    Some(
        (one - tx) * (one - ty) * v00
            + tx * (one - ty) * v10
            + (one - tx) * ty * v01
            + tx * ty * v11,
    )
}

/// A contour chain on the periodic window.
pub(crate) struct Chain<T> {
    pub points: Vec<Point2<T>>,
    /// Net x-displacement around the chain in periods: +-1 for a periodic
    /// component, 0 for an island.
    pub winding: i32,
    pub length: T,
}

/// March the level set `values = alpha` over cells whose four corners are
/// finite; `keep` (when given) must accept at least one strictly-above
/// corner node of a cell for its segments to be kept.
pub(crate) fn march_level<T: Real>(
    window: &Window<T>,
    values: &[T],
    alpha: T,
    keep: Option<&dyn Fn(usize, usize) -> bool>,
) -> Vec<Chain<T>> {
    let nx = window.nx;
    let ny = window.ny;
    let hx = window.hx();
    let hy = window.hy();
    let period = window.period;
    let mut segments: Vec<(Point2<T>, Point2<T>)> = Vec::new();

    for j in 0..ny - 1 {
        for ic in 0..nx {
            // Cell corners: (ic, j), (ic+1, j), (ic+1, j+1), (ic, j+1);
            // the ic = nx-1 cell wraps to column 0 at x = period.
            let i1 = (ic + 1) % nx;
            let v00 = values[window.idx(ic, j)];
            let v10 = values[window.idx(i1, j)];
            let v01 = values[window.idx(ic, j + 1)];
            let v11 = values[window.idx(i1, j + 1)];
            if !(v00.is_finite() && v10.is_finite() && v01.is_finite() && v11.is_finite()) {
                continue;
            }
            let mut case = 0u8;
            if v00 > alpha {
                case |= 1;
            }
            if v10 > alpha {
                case |= 2;
            }
            if v11 > alpha {
                case |= 4;
            }
            if v01 > alpha {
                case |= 8;
            }
            if case == 0 || case == 15 {
                continue;
            }
            if let Some(keep_fn) = keep {
                let corners = [(ic, j, v00), (i1, j, v10), (i1, j + 1, v11), (ic, j + 1, v01)];
                let any_kept = corners
                    .iter()
                    .any(|&(ci, cj, v)| v > alpha && keep_fn(ci, cj));
                if !any_kept {
                    continue;
                }
            }
            let x0 = hx * T::of_usize(ic);
            let x1 = x0 + hx;
            let y0 = window.y(j);
            let y1 = y0 + hy;
            let interp = |va: T, vb: T| (alpha - va) / (vb - va);
            // Edge points: bottom, right, top, left.
            let pb = Point2::new(x0 + hx * interp(v00, v10), y0);
            let pr = Point2::new(x1, y0 + hy * interp(v10, v11));
            let pt = Point2::new(x0 + hx * interp(v01, v11), y1);
            let pl = Point2::new(x0, y0 + hy * interp(v00, v01));
            match case {
                1 => segments.push((pl, pb)),
                2 => segments.push((pb, pr)),
                3 => segments.push((pl, pr)),
                4 => segments.push((pr, pt)),
                6 => segments.push((pb, pt)),
                7 => segments.push((pl, pt)),
                8 => segments.push((pt, pl)),
                9 => segments.push((pt, pb)),
                11 => segments.push((pt, pr)),
                12 => segments.push((pr, pl)),
                13 => segments.push((pr, pb)),
                14 => segments.push((pb, pl)),
                5 | 10 => {
                    // Saddle: orient by the cell-center average.
                    let center = (v00 + v10 + v01 + v11) * T::of(0.25);
                    let pos = center > alpha;
                    if case == 5 {
                        if pos {
                            segments.push((pl, pt));
                            segments.push((pr, pb));
                        } else {
                            segments.push((pl, pb));
                            segments.push((pr, pt));
                        }
                    } else if pos {
                        segments.push((pb, pr));
                        segments.push((pt, pl));
                    } else {
                        segments.push((pb, pl));
                        segments.push((pt, pr));
                    }
                }
                _ => unreachable!(),
            }
        }
    }

    stitch_chains(window, segments, hx.min(hy) * T::of(1e-6), period)
}

fn stitch_chains<T: Real>(
    window: &Window<T>,
    segments: Vec<(Point2<T>, Point2<T>)>,
    quantum: T,
    period: T,
) -> Vec<Chain<T>> {
    let _ = window;
    let key = |p: Point2<T>| -> (i64, i64) {
        let xm = p.x - (p.x / period).floor() * period;
        // Collapse x ~= period onto x ~= 0.
        let xq = (xm / quantum).round().f64() as i64;
        let pq = (period / quantum).round().f64() as i64;
        let xq = ((xq % pq) + pq) % pq;
        let yq = (p.y / quantum).round().f64() as i64;
        (xq, yq)
    };
    let mut adj: HashMap<(i64, i64), Vec<(usize, bool)>> = HashMap::new();
    for (s, seg) in segments.iter().enumerate() {
        adj.entry(key(seg.0)).or_default().push((s, false));
        adj.entry(key(seg.1)).or_default().push((s, true));
    }
    let mut used = vec![false; segments.len()];
    let mut chains = Vec::new();
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let mut pts: Vec<Point2<T>> = vec![segments[start].0, segments[start].1];
        // Extend forward until closed or stuck.
        loop {
            let tail = *pts.last().unwrap();
            let k = key(tail);
            let next = adj
                .get(&k)
                .and_then(|c| c.iter().find(|&&(s, _)| !used[s]).copied());
            let Some((s, reversed)) = next else { break };
            used[s] = true;
            let (a, b) = segments[s];
            let (enter, exit) = if reversed { (b, a) } else { (a, b) };
            // Keep coordinates continuous: shift exit by the period жump
            // implied by enter vs current tail.
            let shift = ((tail.x - enter.x) / period).round();
            pts.push(Point2::new(exit.x + shift * period, exit.y));
            if key(*pts.last().unwrap()) == key(pts[0]) {
                break;
            }
        }
        // Extend backward for open chains.
        loop {
            if key(*pts.last().unwrap()) == key(pts[0]) && pts.len() > 2 {
                break;
            }
            let head = pts[0];
            let k = key(head);
            let next = adj
                .get(&k)
                .and_then(|c| c.iter().find(|&&(s, _)| !used[s]).copied());
            let Some((s, reversed)) = next else { break };
            used[s] = true;
            let (a, b) = segments[s];
            let (enter, exit) = if reversed { (b, a) } else { (a, b) };
            let shift = ((head.x - enter.x) / period).round();
            pts.insert(0, Point2::new(exit.x + shift * period, exit.y));
        }
        let closed = pts.len() > 2 && key(pts[0]) == key(*pts.last().unwrap());
        if !closed {
            // Dangling fragment (NaN margin); surface as a degenerate chain.
            let length = pts.windows(2).map(|w| w[0].dist(w[1])).sum();
            chains.push(Chain {
                points: pts,
                winding: 99,
                length,
            });
            continue;
        }
        let dx = pts.last().unwrap().x - pts[0].x;
        let winding = (dx / period).round().f64() as i32;
        pts.pop(); // drop duplicate closing point
        let length = {
            let mut acc = T::zero();
            for w2 in pts.windows(2) {
                acc += w2[0].dist(w2[1]);
            }
            acc
        };
        chains.push(Chain {
            points: pts,
            winding,
            length,
        });
    }
    chains
}

/// Per-node side classification against a single arc: `true` when the
/// node lies below the periodically extended curve (even crossing count
/// underneath).
pub(crate) fn below_mask<T: Real>(window: &Window<T>, arc: &PeriodicArc<T>) -> Vec<bool> {
    let hits = collect_hits(window, arc);
    let mut mask = vec![false; window.node_count()];
    for i in 0..window.nx {
        let c = &hits.col[i];
        let mut k = 0usize;
        for j in 0..window.ny {
            let y = window.y(j);
            while k < c.len() && c[k] < y {
                k += 1;
            }
            mask[window.idx(i, j)] = k % 2 == 0;
        }
    }
    mask
}

/// Pick the single periodic chain out of marched components, tolerating
/// short noise islands. Errors with the component count otherwise.
pub(crate) fn single_periodic_chain<T: Real>(
    window: &Window<T>,
    chains: Vec<Chain<T>>,
) -> Result<Vec<Point2<T>>> {
    let noise = window.h_max() * T::of(4.0);
    let mut periodic: Vec<Chain<T>> = Vec::new();
    let mut big_islands = 0usize;
    for c in chains {
        if c.winding.abs() == 1 {
            periodic.push(c);
        } else if c.length > noise {
            big_islands += 1;
        }
    }
    if periodic.len() != 1 || big_islands > 0 {
        return Err(Error::DisconnectedLevelSet {
            components: periodic.len() + big_islands,
        });
    }
    let mut chain = periodic.pop().unwrap();
    // Orient left-to-right.
    if chain.points.last().unwrap().x < chain.points[0].x {
        chain.points.reverse();
    }
    Ok(chain.points)
}
