//! Periodic planar curves, ordering, and geometric functionals.
//!
//! Curves are stored as one-period polylines; the periodic extension is
//! implicit: the vertex list repeats under translation by `(P, 0)`. All
//! predicates consult the two neighboring period copies.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Strictness threshold for curve ordering, as a fraction of the period.
pub const STRICT_CLEARANCE_FRAC: f64 = 1e-9;
/// Segment crossings with separation below this (times the period) are
/// treated as touching, not crossing.
pub const CROSS_TOL_FRAC: f64 = 1e-12;

/// A point in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Point2<T> {
    pub fn new(x: T, y: T) -> Self {
        Point2 { x, y }
    }

    #[inline]
    pub fn dist(self, other: Self) -> T {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    #[inline]
    pub fn translated(self, dx: T, dy: T) -> Self {
        Point2::new(self.x + dx, self.y + dy)
    }
}

/// Result of comparing two periodic arcs in the vertical curve order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveOrder {
    StrictLess,
    WeakLess,
    Equal,
    WeakGreater,
    StrictGreater,
    Incomparable,
}

impl CurveOrder {
    /// `true` for any of Equal / WeakLess / StrictLess.
    pub fn is_le(self) -> bool {
        matches!(
            self,
            CurveOrder::StrictLess | CurveOrder::WeakLess | CurveOrder::Equal
        )
    }

    /// `true` for any of Equal / WeakGreater / StrictGreater.
    pub fn is_ge(self) -> bool {
        matches!(
            self,
            CurveOrder::StrictGreater | CurveOrder::WeakGreater | CurveOrder::Equal
        )
    }
}

/// A P-periodic directed curve, sampled as an ordered polyline over one
/// period, directed from x = -inf to x = +inf.
#[derive(Debug, Clone)]
pub struct PeriodicArc<T> {
    period: T,
    vertices: Vec<Point2<T>>,
}

#[inline]
fn point_segment_distance<T: Real>(p: Point2<T>, a: Point2<T>, b: Point2<T>) -> T {
    let vx = b.x - a.x;
    let vy = b.y - a.y;
    let wx = p.x - a.x;
    let wy = p.y - a.y;
    let len2 = vx * vx + vy * vy;
    if len2 <= T::zero() {
        return p.dist(a);
    }
    let t = ((wx * vx + wy * vy) / len2).max(T::zero()).min(T::one());
    let cx = a.x + t * vx;
    let cy = a.y + t * vy;
    let dx = p.x - cx;
    let dy = p.y - cy;
    (dx * dx + dy * dy).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum SegCross {
    None,
    Touch,
    Proper,
}

/// Classify the intersection of segments (a1,a2) and (b1,b2).
fn segment_cross<T: Real>(
    a1: Point2<T>,
    a2: Point2<T>,
    b1: Point2<T>,
    b2: Point2<T>,
    tol: T,
) -> SegCross {
    let d1x = a2.x - a1.x;
    let d1y = a2.y - a1.y;
    let d2x = b2.x - b1.x;
    let d2y = b2.y - b1.y;
    let denom = d1x * d2y - d1y * d2x;
    let ex = b1.x - a1.x;
    let ey = b1.y - a1.y;
    let s_num = ex * d2y - ey * d2x;
    let t_num = ex * d1y - ey * d1x;
    if denom.abs() <= tol * tol {
        // Near parallel: treat overlap as touching if the segments come
        // within tol of each other.
        let d = point_segment_distance(a1, b1, b2)
            .min(point_segment_distance(a2, b1, b2))
            .min(point_segment_distance(b1, a1, a2))
            .min(point_segment_distance(b2, a1, a2));
        return if d <= tol { SegCross::Touch } else { SegCross::None };
    }
    let s = s_num / denom;
    let t = t_num / denom;
    if s < T::zero() || s > T::one() || t < T::zero() || t > T::one() {
        return SegCross::None;
    }
    // Separation of the crossing point from segment endpoints decides
    // proper crossing vs touching.
    let len1 = (d1x * d1x + d1y * d1y).sqrt();
    let len2 = (d2x * d2x + d2y * d2y).sqrt();
    let end_gap = (s.min(T::one() - s) * len1).min(t.min(T::one() - t) * len2);
    if end_gap <= tol {
        SegCross::Touch
    } else {
        SegCross::Proper
    }
}

impl<T: Real> PeriodicArc<T> {
    /// Build an arc from one period of vertices, validating all invariants.
    pub fn new(period: T, vertices: Vec<Point2<T>>) -> Result<Self> {
        if !(period > T::zero()) || !period.is_finite() {
            return Err(Error::InvalidArc(format!("period must be positive, got {period}")));
        }
        if vertices.len() < 3 {
            return Err(Error::InvalidArc(format!(
                "need at least 3 vertices per period, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArc("non-finite vertex".into()));
        }
        let arc = PeriodicArc { period, vertices };
        let min_seg = arc
            .segments()
            .map(|(a, b)| a.dist(b))
            .fold(T::infinity(), T::min);
        if !(min_seg > T::zero()) {
            return Err(Error::InvalidArc("consecutive vertices coincide".into()));
        }
        if arc.has_self_crossing() {
            return Err(Error::InvalidArc("polyline crosses itself".into()));
        }
        if !arc.winding_is_unit() {
            return Err(Error::InvalidArc(
                "periodic extension does not separate the plane (even vertical crossing count)"
                    .into(),
            ));
        }
        Ok(arc)
    }

    /// Build an arc after dropping near-duplicate consecutive vertices.
    /// Used by contour extraction, where coincident points are expected.
    pub fn new_dedup(period: T, vertices: Vec<Point2<T>>) -> Result<Self> {
        let tol = period * T::of(1e-12);
        let mut out: Vec<Point2<T>> = Vec::with_capacity(vertices.len());
        for v in vertices {
            if out.last().map_or(true, |&l| l.dist(v) > tol) {
                out.push(v);
            }
        }
        // Drop a final vertex that coincides with the first one translated.
        if out.len() >= 2 {
            let first = out[0].translated(period, T::zero());
            if out.last().unwrap().dist(first) <= tol {
                out.pop();
            }
        }
        Self::new(period, out)
    }

    /// Sampled graph of `y = f(x)` over one period.
    pub fn from_graph(period: T, n: usize, f: impl Fn(T) -> T) -> Result<Self> {
        let mut vertices = Vec::with_capacity(n);
        for i in 0..n {
            let x = period * T::of_usize(i) / T::of_usize(n);
            vertices.push(Point2::new(x, f(x)));
        }
        Self::new(period, vertices)
    }

    /// Flat line `y = c`.
    pub fn flat(period: T, c: T, n: usize) -> Self {
        Self::from_graph(period, n, |_| c).expect("flat line is a valid arc")
    }

    pub fn period(&self) -> T {
        self.period
    }

    pub fn vertices(&self) -> &[Point2<T>] {
        &self.vertices
    }

    /// Directed segments of one period, including the closing segment to
    /// the first vertex of the next copy.
    pub fn segments(&self) -> impl Iterator<Item = (Point2<T>, Point2<T>)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| {
            let a = self.vertices[i];
            let b = if i + 1 < n {
                self.vertices[i + 1]
            } else {
                self.vertices[0].translated(self.period, T::zero())
            };
            (a, b)
        })
    }

    pub fn min_y(&self) -> T {
        self.vertices.iter().map(|v| v.y).fold(T::infinity(), T::min)
    }

    pub fn max_y(&self) -> T {
        self.vertices
            .iter()
            .map(|v| v.y)
            .fold(T::neg_infinity(), T::max)
    }

    /// Rigid translation.
    pub fn translated(&self, dx: T, dy: T) -> Self {
        PeriodicArc {
            period: self.period,
            vertices: self.vertices.iter().map(|v| v.translated(dx, dy)).collect(),
        }
    }

    /// Rotate the vertex list so that index `k` becomes the first vertex.
    /// The curve is unchanged as a point set.
    pub fn with_start_index(&self, k: usize) -> Self {
        let n = self.vertices.len();
        let k = k % n;
        let mut vertices = Vec::with_capacity(n);
        for i in 0..n {
            let j = (k + i) % n;
            let mut v = self.vertices[j];
            if k + i >= n {
                v = v.translated(self.period, T::zero());
            }
            vertices.push(v);
        }
        PeriodicArc {
            period: self.period,
            vertices,
        }
    }

    fn has_self_crossing(&self) -> bool {
        let tol = self.period * T::of(CROSS_TOL_FRAC);
        let segs: Vec<(Point2<T>, Point2<T>)> = self.segments().collect();
        let n = segs.len();
        // x-interval pruning: compare each segment against later segments
        // and against the +P copy.
        let shifted = |s: (Point2<T>, Point2<T>), k: T| {
            (
                s.0.translated(self.period * k, T::zero()),
                s.1.translated(self.period * k, T::zero()),
            )
        };
        for i in 0..n {
            let (a1, a2) = segs[i];
            let (alo, ahi) = (a1.x.min(a2.x), a1.x.max(a2.x));
            for (j, &s) in segs.iter().enumerate() {
                for kshift in [0i32, 1] {
                    if kshift == 0 && j <= i {
                        continue;
                    }
                    let adjacent = if kshift == 0 {
                        j == i + 1 || (i == 0 && j == n - 1)
                    } else {
                        (i + 1) % n == j || (j + 1) % n == i || i == j
                    };
                    if adjacent {
                        continue;
                    }
                    let (b1, b2) = shifted(s, T::of(kshift as f64));
                    let (blo, bhi) = (b1.x.min(b2.x), b1.x.max(b2.x));
                    if bhi < alo - tol || blo > ahi + tol {
                        continue;
                    }
                    if segment_cross(a1, a2, b1, b2, tol) == SegCross::Proper {
                        return true;
                    }
                }
            }
        }
        false
    }

    /// The extended arc must cross every vertical line an odd number of
    /// times per period (winding +-1/2 about off-arc points). Checked by
    /// ray casting at a fixed set of sample abscissae.
    fn winding_is_unit(&self) -> bool {
        let x0 = self.vertices[0].x;
        for k in 0..16usize {
            let x = x0 + self.period * T::of((k as f64 + 0.371) / 16.0);
            let crossings = self.vertical_line_hits(x).len();
            if crossings % 2 == 0 {
                return false;
            }
        }
        true
    }

    /// All y-values where the periodically extended arc crosses the
    /// vertical line at `x` (one per proper crossing).
    pub fn vertical_line_hits(&self, x: T) -> Vec<T> {
        let mut hits = Vec::new();
        for kshift in [-1i32, 0, 1] {
            let dx = self.period * T::of(kshift as f64);
            for (a, b) in self.segments() {
                let ax = a.x + dx;
                let bx = b.x + dx;
                // Half-open in x so shared endpoints count once.
                let (lo, hi) = (ax.min(bx), ax.max(bx));
                if lo <= x && x < hi {
                    let t = (x - ax) / (bx - ax);
                    hits.push(a.y + t * (b.y - a.y));
                }
            }
        }
        hits.sort_by(|p, q| p.partial_cmp(q).unwrap());
        hits
    }

    /// `true` when `p` lies strictly below the periodically extended arc
    /// (in its lower complement).
    pub fn is_point_below(&self, p: Point2<T>) -> bool {
        let hits = self.vertical_line_hits(p.x);
        let above = hits.iter().filter(|&&y| y < p.y).count();
        above % 2 == 0
    }

    /// Euclidean arc length of one period.
    pub fn arc_length(&self) -> T {
        self.segments().map(|(a, b)| a.dist(b)).sum()
    }

    /// Total curvature of one period: sum of absolute exterior turning
    /// angles at the vertices.
    pub fn total_curvature(&self) -> T {
        let n = self.vertices.len();
        let mut total = T::zero();
        for i in 0..n {
            let prev = if i == 0 {
                self.vertices[n - 1].translated(-self.period, T::zero())
            } else {
                self.vertices[i - 1]
            };
            let cur = self.vertices[i];
            let next = if i + 1 < n {
                self.vertices[i + 1]
            } else {
                self.vertices[0].translated(self.period, T::zero())
            };
            let ux = cur.x - prev.x;
            let uy = cur.y - prev.y;
            let vx = next.x - cur.x;
            let vy = next.y - cur.y;
            let cross = ux * vy - uy * vx;
            let dot = ux * vx + uy * vy;
            total += cross.atan2(dot).abs();
        }
        total
    }

    /// Minimum Euclidean distance from `p` to the periodically extended
    /// polyline. Exact for polylines.
    pub fn distance_to(&self, p: Point2<T>) -> T {
        // Normalize p into the base window so the -P..+P copies suffice.
        let x0 = self.vertices[0].x;
        let rel = ((p.x - x0) / self.period).floor();
        let p = Point2::new(p.x - rel * self.period, p.y);
        let mut best = T::infinity();
        for kshift in [-1i32, 0, 1] {
            let dx = self.period * T::of(kshift as f64);
            for (a, b) in self.segments() {
                let d = point_segment_distance(
                    p,
                    a.translated(dx, T::zero()),
                    b.translated(dx, T::zero()),
                );
                if d < best {
                    best = d;
                }
            }
        }
        best
    }

    /// Resample to `n` vertices equally spaced in arc length, anchored at
    /// the current first vertex.
    pub fn resample(&self, n: usize) -> Result<Self> {
        if n < 8 {
            return Err(Error::InvalidArc(format!("resample count {n} < 8")));
        }
        let segs: Vec<(Point2<T>, Point2<T>)> = self.segments().collect();
        let mut cum = Vec::with_capacity(segs.len() + 1);
        let mut acc = T::zero();
        cum.push(acc);
        for (a, b) in &segs {
            acc += a.dist(*b);
            cum.push(acc);
        }
        let total = acc;
        let mut vertices = Vec::with_capacity(n);
        let mut seg_idx = 0usize;
        for j in 0..n {
            let target = total * T::of_usize(j) / T::of_usize(n);
            while seg_idx + 1 < segs.len() && cum[seg_idx + 1] < target {
                seg_idx += 1;
            }
            let (a, b) = segs[seg_idx];
            let seg_len = cum[seg_idx + 1] - cum[seg_idx];
            let t = if seg_len > T::zero() {
                (target - cum[seg_idx]) / seg_len
            } else {
                T::zero()
            };
            vertices.push(Point2::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)));
        }
        Self::new_dedup(self.period, vertices)
    }

    /// Detect proper crossings between two arcs (periodic copies included).
    fn crosses(&self, other: &Self) -> bool {
        let tol = self.period * T::of(CROSS_TOL_FRAC);
        let a_segs: Vec<(Point2<T>, Point2<T>)> = self.segments().collect();
        let b_segs: Vec<(Point2<T>, Point2<T>)> = other.segments().collect();
        for &(a1, a2) in &a_segs {
            let (alo, ahi) = (a1.x.min(a2.x), a1.x.max(a2.x));
            for kshift in [-1i32, 0, 1] {
                let dx = self.period * T::of(kshift as f64);
                for &(b1, b2) in &b_segs {
                    let b1 = b1.translated(dx, T::zero());
                    let b2 = b2.translated(dx, T::zero());
                    let (blo, bhi) = (b1.x.min(b2.x), b1.x.max(b2.x));
                    if bhi < alo - tol || blo > ahi + tol {
                        continue;
                    }
                    if segment_cross(a1, a2, b1, b2, tol) == SegCross::Proper {
                        return true;
                    }
                }
            }
        }
        false
    }

    /// Minimum vertical clearance from this arc's vertices up (or down) to
    /// the other arc, with sign: positive when `other` is above.
    fn vertical_gap_to(&self, other: &Self) -> T {
        let mut gap = T::infinity();
        for v in &self.vertices {
            let hits = other.vertical_line_hits(v.x);
            for y in hits {
                let d = y - v.y;
                if d.abs() < gap.abs() {
                    gap = d;
                }
            }
        }
        gap
    }
}

/// Compare two arcs of equal period in the vertical curve order.
pub fn compare<T: Real>(a: &PeriodicArc<T>, b: &PeriodicArc<T>) -> Result<CurveOrder> {
    if (a.period() - b.period()).abs() > a.period() * T::of(1e-12) {
        return Err(Error::PeriodMismatch(a.period().f64(), b.period().f64()));
    }
    let ident_tol = a.period() * T::of(1e-12);
    if hausdorff(a, b)? <= ident_tol {
        return Ok(CurveOrder::Equal);
    }
    if a.crosses(b) {
        return Ok(CurveOrder::Incomparable);
    }
    let strict_tol = a.period() * T::of(STRICT_CLEARANCE_FRAC);
    // Side votes by crossing parity, with the vertical clearance of each
    // vertex to the other curve as the vote's weight.
    let mut le_strength = T::zero(); // strongest evidence for a <= b
    let mut ge_strength = T::zero(); // strongest evidence for a >= b
    let mut le_all = true;
    let mut ge_all = true;
    let mut clearance = T::infinity();
    let mut vote = |le_vote: bool, gap: T| {
        clearance = clearance.min(gap);
        if le_vote {
            le_strength = le_strength.max(gap);
            ge_all = false;
        } else {
            ge_strength = ge_strength.max(gap);
            le_all = false;
        }
    };
    for &v in a.vertices() {
        let gap = b
            .vertical_line_hits(v.x)
            .iter()
            .map(|&y| (y - v.y).abs())
            .fold(T::infinity(), T::min);
        vote(b.is_point_below(v), gap);
    }
    for &w in b.vertices() {
        let gap = a
            .vertical_line_hits(w.x)
            .iter()
            .map(|&y| (y - w.y).abs())
            .fold(T::infinity(), T::min);
        vote(!a.is_point_below(w), gap);
    }
    if le_all {
        if clearance > strict_tol {
            Ok(CurveOrder::StrictLess)
        } else {
            Ok(CurveOrder::WeakLess)
        }
    } else if ge_all {
        if clearance > strict_tol {
            Ok(CurveOrder::StrictGreater)
        } else {
            Ok(CurveOrder::WeakGreater)
        }
    } else {
        // Mixed votes: genuine interleaving when both sides carry real
        // margin; otherwise the curves touch.
        if le_strength > strict_tol && ge_strength > strict_tol {
            Ok(CurveOrder::Incomparable)
        } else if le_strength >= ge_strength {
            Ok(CurveOrder::WeakLess)
        } else {
            Ok(CurveOrder::WeakGreater)
        }
    }
}

/// Symmetric Hausdorff distance over one period, computed on vertex samples.
pub fn hausdorff<T: Real>(a: &PeriodicArc<T>, b: &PeriodicArc<T>) -> Result<T> {
    if (a.period() - b.period()).abs() > a.period() * T::of(1e-12) {
        return Err(Error::PeriodMismatch(a.period().f64(), b.period().f64()));
    }
    let d_ab = a
        .vertices()
        .iter()
        .map(|&v| b.distance_to(v))
        .fold(T::zero(), T::max);
    let d_ba = b
        .vertices()
        .iter()
        .map(|&v| a.distance_to(v))
        .fold(T::zero(), T::max);
    Ok(d_ab.max(d_ba))
}

/// An ordered pair of arcs bounding a periodic strip-like stream bed.
#[derive(Debug, Clone)]
pub struct ArcPair<T> {
    gamma1: PeriodicArc<T>,
    gamma2: PeriodicArc<T>,
}

impl<T: Real> ArcPair<T> {
    pub fn new(gamma1: PeriodicArc<T>, gamma2: PeriodicArc<T>) -> Result<Self> {
        match compare(&gamma1, &gamma2)? {
            CurveOrder::StrictLess => Ok(ArcPair { gamma1, gamma2 }),
            other => Err(Error::NotOrdered(format!(
                "lower curve must be strictly below upper curve, got {other:?}"
            ))),
        }
    }

    /// Flat pair `y = c1`, `y = c2`.
    pub fn flat(period: T, c1: T, c2: T, n: usize) -> Result<Self> {
        Self::new(
            PeriodicArc::flat(period, c1, n),
            PeriodicArc::flat(period, c2, n),
        )
    }

    pub fn lower(&self) -> &PeriodicArc<T> {
        &self.gamma1
    }

    pub fn upper(&self) -> &PeriodicArc<T> {
        &self.gamma2
    }

    pub fn period(&self) -> T {
        self.gamma1.period()
    }

    pub fn translated(&self, dx: T, dy: T) -> Self {
        ArcPair {
            gamma1: self.gamma1.translated(dx, dy),
            gamma2: self.gamma2.translated(dx, dy),
        }
    }

    /// Minimum vertical gap between the two boundary curves.
    pub fn min_vertical_gap(&self) -> T {
        let up = self.gamma1.vertical_gap_to(&self.gamma2);
        let down = -self.gamma2.vertical_gap_to(&self.gamma1);
        up.min(down)
    }

    /// Minimum Euclidean distance between the two boundary curves,
    /// estimated on vertex samples.
    pub fn min_distance(&self) -> T {
        let d1 = self
            .gamma1
            .vertices()
            .iter()
            .map(|&v| self.gamma2.distance_to(v))
            .fold(T::infinity(), T::min);
        let d2 = self
            .gamma2
            .vertices()
            .iter()
            .map(|&v| self.gamma1.distance_to(v))
            .fold(T::infinity(), T::min);
        d1.min(d2)
    }

    /// `true` when `p` lies strictly between the two curves.
    pub fn contains(&self, p: Point2<T>) -> bool {
        !self.gamma1.is_point_below(p) && self.gamma2.is_point_below(p)
    }

    /// Componentwise comparison of two pairs.
    pub fn compare(&self, other: &Self) -> Result<(CurveOrder, CurveOrder)> {
        Ok((
            compare(&self.gamma1, &other.gamma1)?,
            compare(&self.gamma2, &other.gamma2)?,
        ))
    }
}

/// Serialize an arc as CSV: a `# period=<P>` comment, a `t,x,y` header
/// (t = cumulative arc length from the first vertex), one row per vertex.
pub fn arc_to_csv<T: Real>(arc: &PeriodicArc<T>) -> String {
    let mut out = String::new();
    out.push_str(&format!("# period={:.17e}\n", arc.period().f64()));
    out.push_str("t,x,y\n");
    let mut t = 0.0f64;
    let verts = arc.vertices();
    for (i, v) in verts.iter().enumerate() {
        if i > 0 {
            t += verts[i - 1].dist(*v).f64();
        }
        out.push_str(&format!("{:.17e},{:.17e},{:.17e}\n", t, v.x.f64(), v.y.f64()));
    }
    out
}

/// Parse an arc from the CSV format written by [`arc_to_csv`].
pub fn arc_from_csv<T: Real>(text: &str) -> Result<PeriodicArc<T>> {
    let mut period: Option<f64> = None;
    let mut vertices = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(v) = rest.strip_prefix("period=") {
                period = Some(
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::InvalidArc(format!("bad period: {e}")))?,
                );
            }
            continue;
        }
        if line.starts_with('t') {
            continue; // header
        }
        let mut it = line.split(',');
        let _t = it.next();
        let x = it
            .next()
            .ok_or_else(|| Error::InvalidArc("missing x column".into()))?
            .trim()
            .parse::<f64>()
            .map_err(|e| Error::InvalidArc(format!("bad x: {e}")))?;
        let y = it
            .next()
            .ok_or_else(|| Error::InvalidArc("missing y column".into()))?
            .trim()
            .parse::<f64>()
            .map_err(|e| Error::InvalidArc(format!("bad y: {e}")))?;
        vertices.push(Point2::new(T::of(x), T::of(y)));
    }
    let period = period.ok_or_else(|| Error::InvalidArc("missing # period= line".into()))?;
    PeriodicArc::new(T::of(period), vertices)
}
