use super::{BodyError, BodyExpr};
use crate::optim::{bfgs, BfgsOptions};

/// Short scratch vector that stays on the stack for the usual dimensions.
pub(crate) enum Scratch {
    Stack([f64; 16], usize),
    Heap(Vec<f64>),
}

impl Scratch {
    pub(crate) fn zeros(len: usize) -> Self {
        if len <= 16 {
            Scratch::Stack([0.0; 16], len)
        } else {
            Scratch::Heap(vec![0.0; len])
        }
    }
}

impl std::ops::Deref for Scratch {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        match self {
            Scratch::Stack(a, n) => &a[..*n],
            Scratch::Heap(v) => v,
        }
    }
}

impl std::ops::DerefMut for Scratch {
    fn deref_mut(&mut self) -> &mut [f64] {
        match self {
            Scratch::Stack(a, n) => &mut a[..*n],
            Scratch::Heap(v) => v,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(super) fn vertices_symmetric(vertices: &[Vec<f64>]) -> bool {
    vertices.iter().all(|v| {
        let scale = 1.0 + v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        vertices
            .iter()
            .any(|u| u.iter().zip(v).all(|(a, b)| (a + b).abs() <= 1e-12 * scale))
    })
}

/// Index maps of the two factors of a symplectic product inside `R^{2n}`.
fn product_split(left_dim: usize, total: usize) -> (Vec<usize>, Vec<usize>) {
    let n = total / 2;
    let n1 = left_dim / 2;
    let left = (0..n1).chain(n..n + n1).collect();
    let right = (n1..n).chain(n + n1..total).collect();
    (left, right)
}

fn gather(src: &[f64], idx: &[usize]) -> Scratch {
    let mut out = Scratch::zeros(idx.len());
    for (o, &i) in out.iter_mut().zip(idx) {
        *o = src[i];
    }
    out
}

fn scatter(dst: &mut [f64], idx: &[usize], src: &[f64]) {
    for (&i, v) in idx.iter().zip(src) {
        dst[i] = *v;
    }
}

/// Exit parameter of the ray `o + t z` from the ball `|x - c| <= r`.
/// `d = o - c`. Returns `None` when `o` is not interior.
fn ball_exit(d: &[f64], z: &[f64], r: f64) -> Option<f64> {
    let a = dot(z, z);
    let b = dot(d, z);
    let c = dot(d, d) - r * r;
    if c >= 0.0 {
        return None;
    }
    if a == 0.0 {
        return Some(f64::INFINITY);
    }
    let disc = (b * b - a * c).sqrt();
    Some(if b > 0.0 { -c / (b + disc) } else { (disc - b) / a })
}

/// Exit from the box `lo <= x <= hi`; writes the active face normal.
fn cuboid_exit(
    lo: impl Fn(usize) -> f64,
    hi: impl Fn(usize) -> f64,
    o: &[f64],
    z: &[f64],
    normal: &mut [f64],
) -> Result<f64, BodyError> {
    let mut best = f64::INFINITY;
    let mut arg = None;
    for i in 0..o.len() {
        let (l, h) = (lo(i), hi(i));
        if !(o[i] > l && o[i] < h) {
            return Err(BodyError::NotInterior);
        }
        let t = if z[i] > 0.0 {
            (h - o[i]) / z[i]
        } else if z[i] < 0.0 {
            (l - o[i]) / z[i]
        } else {
            continue;
        };
        if t < best {
            best = t;
            arg = Some(i);
        }
    }
    normal.iter_mut().for_each(|v| *v = 0.0);
    if let Some(i) = arg {
        normal[i] = z[i].signum();
    }
    Ok(best)
}

impl BodyExpr {
    /// `h(w)`; a supporting point is written into `s`.
    pub(crate) fn support_into(&self, w: &[f64], s: &mut [f64]) -> Result<f64, BodyError> {
        match self {
            BodyExpr::Ellipsoid { radii } | BodyExpr::Polydisc { radii } => {
                let n = radii.len();
                let polydisc = matches!(self, BodyExpr::Polydisc { .. });
                if polydisc {
                    let mut h = 0.0;
                    for i in 0..n {
                        let m = (w[i] * w[i] + w[n + i] * w[n + i]).sqrt();
                        h += radii[i] * m;
                        let f = if m > 0.0 { radii[i] / m } else { 0.0 };
                        s[i] = f * w[i];
                        s[n + i] = f * w[n + i];
                    }
                    Ok(h)
                } else {
                    let h = (0..n)
                        .map(|i| radii[i] * radii[i] * (w[i] * w[i] + w[n + i] * w[n + i]))
                        .sum::<f64>()
                        .sqrt();
                    for i in 0..n {
                        let f = if h > 0.0 { radii[i] * radii[i] / h } else { 0.0 };
                        s[i] = f * w[i];
                        s[n + i] = f * w[n + i];
                    }
                    Ok(h)
                }
            }
            BodyExpr::AxisEllipsoid { semi_axes } => {
                let h = semi_axes
                    .iter()
                    .zip(w)
                    .map(|(a, x)| a * a * x * x)
                    .sum::<f64>()
                    .sqrt();
                for i in 0..w.len() {
                    s[i] = if h > 0.0 { semi_axes[i] * semi_axes[i] * w[i] / h } else { 0.0 };
                }
                Ok(h)
            }
            BodyExpr::Ball { center, radius } => {
                let m = dot(w, w).sqrt();
                for i in 0..w.len() {
                    s[i] = center[i] + if m > 0.0 { radius * w[i] / m } else { 0.0 };
                }
                Ok(dot(center, w) + radius * m)
            }
            BodyExpr::Box { intervals } => {
                let n = intervals.len();
                let mut h = 0.0;
                for (i, [a, b, c, d]) in intervals.iter().enumerate() {
                    s[i] = if w[i] > 0.0 { *b } else { *a };
                    s[n + i] = if w[n + i] > 0.0 { *d } else { -c };
                    h += w[i] * s[i] + w[n + i] * s[n + i];
                }
                Ok(h)
            }
            BodyExpr::Cuboid { lower, upper } => {
                let mut h = 0.0;
                for i in 0..w.len() {
                    s[i] = if w[i] > 0.0 { upper[i] } else { lower[i] };
                    h += w[i] * s[i];
                }
                Ok(h)
            }
            BodyExpr::VertexPolytope { vertices, .. } => {
                let best = vertices.iter().map(|v| dot(v, w)).fold(f64::NEG_INFINITY, f64::max);
                let scale = dot(w, w).sqrt()
                    * vertices
                        .iter()
                        .map(|v| dot(v, v).sqrt())
                        .fold(0.0f64, f64::max)
                        .max(1.0);
                // lexicographically first among (near-)maximizers
                let mut arg = None::<usize>;
                for (i, v) in vertices.iter().enumerate() {
                    if dot(v, w) >= best - 1e-12 * scale
                        && arg.is_none_or(|a| lex_less(v, &vertices[a]))
                    {
                        arg = Some(i);
                    }
                }
                let arg = arg.unwrap_or(0);
                s.copy_from_slice(&vertices[arg]);
                Ok(dot(&vertices[arg], w))
            }
            BodyExpr::Product { left, right } => {
                let (li, ri) = product_split(left.dim(), w.len());
                let mut total = 0.0;
                for (b, idx) in [(left, &li), (right, &ri)] {
                    let wp = gather(w, idx);
                    let mut sp = Scratch::zeros(idx.len());
                    total += b.support_into(&wp, &mut sp)?;
                    scatter(s, idx, &sp);
                }
                Ok(total)
            }
            BodyExpr::LagrangianProduct { q, p } => {
                let n = q.dim();
                let (sq, sp) = s.split_at_mut(n);
                Ok(q.support_into(&w[..n], sq)? + p.support_into(&w[n..], sp)?)
            }
            BodyExpr::Polar(k) => {
                // h of the polar is the gauge of k
                let o = Scratch::zeros(w.len());
                k.gauge_about_into(&o, w, s).map_err(|e| match e {
                    BodyError::NotInterior => BodyError::OriginNotInterior,
                    other => other,
                })
            }
            BodyExpr::PSum { p, left, right } => {
                let d = w.len();
                let mut sl = Scratch::zeros(d);
                let mut sr = Scratch::zeros(d);
                let hl = left.support_into(w, &mut sl)?;
                let hr = right.support_into(w, &mut sr)?;
                if *p == 1.0 {
                    for i in 0..d {
                        s[i] = sl[i] + sr[i];
                    }
                    return Ok(hl + hr);
                }
                let h = (hl.max(0.0).powf(*p) + hr.max(0.0).powf(*p)).powf(1.0 / p);
                if h <= 0.0 {
                    s.iter_mut().for_each(|v| *v = 0.0);
                    return Ok(0.0);
                }
                let a = (hl / h).powf(p - 1.0);
                let b = (hr / h).powf(p - 1.0);
                for i in 0..d {
                    s[i] = a * sl[i] + b * sr[i];
                }
                Ok(h)
            }
            BodyExpr::Scale { factor, body } => {
                let h = body.support_into(w, s)?;
                s.iter_mut().for_each(|v| *v *= factor);
                Ok(factor * h)
            }
            BodyExpr::Translate { shift, body } => {
                let h = body.support_into(w, s)?;
                for i in 0..w.len() {
                    s[i] += shift[i];
                }
                Ok(h + dot(shift, w))
            }
            BodyExpr::SymmDiff(body) => {
                let d = w.len();
                let mut neg = Scratch::zeros(d);
                for i in 0..d {
                    neg[i] = -w[i];
                }
                let mut sn = Scratch::zeros(d);
                let h1 = body.support_into(w, s)?;
                let h2 = body.support_into(&neg, &mut sn)?;
                for i in 0..d {
                    s[i] -= sn[i];
                }
                Ok(h1 + h2)
            }
        }
    }

    /// Largest `t` with `o + t z` in the body, for interior `o`; an outward
    /// normal at the exit point is written into `normal`.
    pub(crate) fn exit_into(&self, o: &[f64], z: &[f64], normal: &mut [f64]) -> Result<f64, BodyError> {
        match self {
            BodyExpr::Ball { center, radius } => {
                let mut d = Scratch::zeros(o.len());
                for i in 0..o.len() {
                    d[i] = o[i] - center[i];
                }
                let t = ball_exit(&d, z, *radius).ok_or(BodyError::NotInterior)?;
                for i in 0..o.len() {
                    normal[i] = d[i] + if t.is_finite() { t * z[i] } else { 0.0 };
                }
                Ok(t)
            }
            BodyExpr::AxisEllipsoid { semi_axes } => {
                ellipsoid_exit(|i| semi_axes[i], o, z, normal)
            }
            BodyExpr::Ellipsoid { radii } => {
                let n = radii.len();
                ellipsoid_exit(|i| radii[i % n], o, z, normal)
            }
            BodyExpr::Polydisc { radii } => {
                let n = radii.len();
                let mut best = f64::INFINITY;
                let mut arg = None;
                for i in 0..n {
                    let d = [o[i], o[n + i]];
                    let zz = [z[i], z[n + i]];
                    let t = ball_exit(&d, &zz, radii[i]).ok_or(BodyError::NotInterior)?;
                    if t < best {
                        best = t;
                        arg = Some(i);
                    }
                }
                normal.iter_mut().for_each(|v| *v = 0.0);
                if let Some(i) = arg {
                    normal[i] = o[i] + best * z[i];
                    normal[n + i] = o[n + i] + best * z[n + i];
                }
                Ok(best)
            }
            BodyExpr::Box { intervals } => {
                let n = intervals.len();
                cuboid_exit(
                    |i| if i < n { intervals[i][0] } else { -intervals[i - n][2] },
                    |i| if i < n { intervals[i][1] } else { intervals[i - n][3] },
                    o,
                    z,
                    normal,
                )
            }
            BodyExpr::Cuboid { lower, upper } => cuboid_exit(|i| lower[i], |i| upper[i], o, z, normal),
            BodyExpr::VertexPolytope { vertices, .. } => polytope_exit(vertices, o, z, normal),
            BodyExpr::Product { left, right } => {
                let (li, ri) = product_split(left.dim(), o.len());
                let mut best = f64::INFINITY;
                normal.iter_mut().for_each(|v| *v = 0.0);
                let mut nbuf = Scratch::zeros(o.len());
                for (b, idx) in [(left, &li), (right, &ri)] {
                    let (op, zp) = (gather(o, idx), gather(z, idx));
                    let mut np = Scratch::zeros(idx.len());
                    let t = factor_exit(b, &op, &zp, &mut np)?;
                    if t < best {
                        best = t;
                        nbuf.iter_mut().for_each(|v| *v = 0.0);
                        scatter(&mut nbuf, idx, &np);
                    }
                }
                normal.copy_from_slice(&nbuf);
                Ok(best)
            }
            BodyExpr::LagrangianProduct { q, p } => {
                let n = q.dim();
                let mut nq = Scratch::zeros(n);
                let mut np = Scratch::zeros(o.len() - n);
                let tq = factor_exit(q, &o[..n], &z[..n], &mut nq)?;
                let tp = factor_exit(p, &o[n..], &z[n..], &mut np)?;
                normal.iter_mut().for_each(|v| *v = 0.0);
                if tq <= tp {
                    normal[..n].copy_from_slice(&nq);
                    Ok(tq)
                } else {
                    normal[n..].copy_from_slice(&np);
                    Ok(tp)
                }
            }
            BodyExpr::Scale { factor, body } => {
                let d = o.len();
                let mut os = Scratch::zeros(d);
                let mut zs = Scratch::zeros(d);
                for i in 0..d {
                    os[i] = o[i] / factor;
                    zs[i] = z[i] / factor;
                }
                body.exit_into(&os, &zs, normal)
            }
            BodyExpr::Translate { shift, body } => {
                let mut os = Scratch::zeros(o.len());
                for i in 0..o.len() {
                    os[i] = o[i] - shift[i];
                }
                body.exit_into(&os, z, normal)
            }
            BodyExpr::Polar(k) => polar_exit(k, o, z, normal),
            BodyExpr::PSum { .. } | BodyExpr::SymmDiff(_) => self.exit_by_support(o, z, normal),
        }
    }

    /// Gauge of `body - o` at `z` with subgradient in `g`.
    pub(crate) fn gauge_about_into(&self, o: &[f64], z: &[f64], g: &mut [f64]) -> Result<f64, BodyError> {
        if z.iter().all(|v| *v == 0.0) {
            if !self.inside(o, true)? {
                return Err(BodyError::NotInterior);
            }
            g.iter_mut().for_each(|v| *v = 0.0);
            return Ok(0.0);
        }
        let t = self.exit_into(o, z, g)?;
        if !(t > 0.0) {
            return Err(BodyError::NotInterior);
        }
        if t.is_infinite() {
            return Err(BodyError::InvalidParameter("body is unbounded along the ray".into()));
        }
        let j = 1.0 / t;
        let nz = dot(g, z);
        if nz > 0.0 {
            let f = j / nz;
            g.iter_mut().for_each(|v| *v *= f);
        }
        Ok(j)
    }

    /// Exit distance for bodies known through `h` only:
    /// `t = min { h(u) - <o, u> : <z, u> = 1 }`, minimized over the
    /// hyperplane of normals.
    fn exit_by_support(&self, o: &[f64], z: &[f64], normal: &mut [f64]) -> Result<f64, BodyError> {
        let d = o.len();
        let zn2 = dot(z, z);
        if zn2 == 0.0 {
            return Ok(f64::INFINITY);
        }
        let basis = orthogonal_complement(z);
        let base: Vec<f64> = z.iter().map(|v| v / zn2).collect();
        let mut u = vec![0.0; d];
        let mut s = vec![0.0; d];
        let mut err = None;
        let mut objective = |c: &[f64], grad: &mut [f64]| -> f64 {
            u.copy_from_slice(&base);
            for (ci, b) in c.iter().zip(&basis) {
                for i in 0..d {
                    u[i] += ci * b[i];
                }
            }
            match self.support_into(&u, &mut s) {
                Ok(h) => {
                    for (gi, b) in grad.iter_mut().zip(&basis) {
                        *gi = (0..d).map(|i| (s[i] - o[i]) * b[i]).sum();
                    }
                    h - dot(o, &u)
                }
                Err(e) => {
                    err = Some(e);
                    f64::NAN
                }
            }
        };
        let res = bfgs(&mut objective, &vec![0.0; d - 1], BfgsOptions { max_iters: 400, ..Default::default() });
        if let Some(e) = err {
            return Err(e);
        }
        if !(res.f > 0.0) {
            return Err(BodyError::NotInterior);
        }
        normal.copy_from_slice(&base);
        for (ci, b) in res.x.iter().zip(&basis) {
            for i in 0..d {
                normal[i] += ci * b[i];
            }
        }
        Ok(res.f)
    }

    /// Membership, optionally strict.
    pub(crate) fn inside(&self, x: &[f64], strict: bool) -> Result<bool, BodyError> {
        let cmp = |v: f64, bound: f64| if strict { v < bound } else { v <= bound };
        Ok(match self {
            BodyExpr::Ball { center, radius } => {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                cmp(r2, radius * radius)
            }
            BodyExpr::AxisEllipsoid { semi_axes } => {
                cmp(x.iter().zip(semi_axes).map(|(a, s)| (a / s) * (a / s)).sum(), 1.0)
            }
            BodyExpr::Ellipsoid { radii } => {
                let n = radii.len();
                cmp((0..2 * n).map(|i| (x[i] / radii[i % n]).powi(2)).sum(), 1.0)
            }
            BodyExpr::Polydisc { radii } => {
                let n = radii.len();
                (0..n).all(|i| cmp(x[i] * x[i] + x[n + i] * x[n + i], radii[i] * radii[i]))
            }
            BodyExpr::Box { intervals } => {
                let n = intervals.len();
                intervals.iter().enumerate().all(|(i, [a, b, c, d])| {
                    cmp(*a, x[i]) && cmp(x[i], *b) && cmp(-c, x[n + i]) && cmp(x[n + i], *d)
                })
            }
            BodyExpr::Cuboid { lower, upper } => {
                (0..x.len()).all(|i| cmp(lower[i], x[i]) && cmp(x[i], upper[i]))
            }
            BodyExpr::VertexPolytope { vertices, .. } => {
                if strict {
                    let d = x.len();
                    let mut nbuf = vec![0.0; d];
                    let scale = 1.0 + vertices.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
                    for i in 0..d {
                        for sgn in [1.0, -1.0] {
                            let mut e = vec![0.0; d];
                            e[i] = sgn;
                            match polytope_exit(vertices, x, &e, &mut nbuf) {
                                Ok(t) if t > 1e-12 * scale => {}
                                Ok(_) | Err(BodyError::NotInterior) => return Ok(false),
                                Err(e) => return Err(e),
                            }
                        }
                    }
                    true
                } else {
                    polytope_contains(vertices, x)?
                }
            }
            BodyExpr::Product { left, right } => {
                let (li, ri) = product_split(left.dim(), x.len());
                left.inside(&gather(x, &li), strict)? && right.inside(&gather(x, &ri), strict)?
            }
            BodyExpr::LagrangianProduct { q, p } => {
                let n = q.dim();
                q.inside(&x[..n], strict)? && p.inside(&x[n..], strict)?
            }
            BodyExpr::Scale { factor, body } => {
                let xs: Vec<f64> = x.iter().map(|v| v / factor).collect();
                body.inside(&xs, strict)?
            }
            BodyExpr::Translate { shift, body } => {
                let xs: Vec<f64> = x.iter().zip(shift).map(|(a, s)| a - s).collect();
                body.inside(&xs, strict)?
            }
            BodyExpr::Polar(k) => {
                let mut s = vec![0.0; x.len()];
                cmp(k.support_into(x, &mut s)?, 1.0)
            }
            BodyExpr::PSum { .. } | BodyExpr::SymmDiff(_) if x.iter().all(|v| *v == 0.0) => {
                // the gauge at the origin would ask for membership again
                let mut s = vec![0.0; x.len()];
                let mut ok = true;
                for u in super::sample_directions(x.len(), 20 * x.len(), 0x0e1) {
                    ok &= cmp(0.0, self.support_into(&u, &mut s)?);
                }
                ok
            }
            BodyExpr::PSum { .. } | BodyExpr::SymmDiff(_) => {
                let o = vec![0.0; x.len()];
                let mut g = vec![0.0; x.len()];
                cmp(self.gauge_about_into(&o, x, &mut g)?, 1.0)
            }
        })
    }
}

/// Exit distance of one factor of a product; a factor the ray does not
/// move in never bounds it.
fn factor_exit(b: &BodyExpr, o: &[f64], z: &[f64], normal: &mut [f64]) -> Result<f64, BodyError> {
    if z.iter().all(|v| *v == 0.0) {
        normal.iter_mut().for_each(|v| *v = 0.0);
        return Ok(f64::INFINITY);
    }
    b.exit_into(o, z, normal)
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

fn ellipsoid_exit(
    axis: impl Fn(usize) -> f64,
    o: &[f64],
    z: &[f64],
    normal: &mut [f64],
) -> Result<f64, BodyError> {
    let d = o.len();
    let mut os = Scratch::zeros(d);
    let mut zs = Scratch::zeros(d);
    for i in 0..d {
        os[i] = o[i] / axis(i);
        zs[i] = z[i] / axis(i);
    }
    let t = ball_exit(&os, &zs, 1.0).ok_or(BodyError::NotInterior)?;
    for i in 0..d {
        let a = axis(i);
        normal[i] = (o[i] + if t.is_finite() { t * z[i] } else { 0.0 }) / (a * a);
    }
    Ok(t)
}

/// Exit from the polar of `k`: root of `h_k(o + t z) = 1`.
fn polar_exit(k: &BodyExpr, o: &[f64], z: &[f64], normal: &mut [f64]) -> Result<f64, BodyError> {
    let d = o.len();
    let mut y = vec![0.0; d];
    let h_at = |t: f64, y: &mut [f64], s: &mut [f64]| -> Result<f64, BodyError> {
        for i in 0..d {
            y[i] = o[i] + t * z[i];
        }
        k.support_into(y, s)
    };
    if o.iter().all(|v| *v == 0.0) {
        let h = k.support_into(z, normal)?;
        return if h > 0.0 { Ok(1.0 / h) } else { Err(BodyError::NotInterior) };
    }
    if h_at(0.0, &mut y, normal)? >= 1.0 {
        return Err(BodyError::NotInterior);
    }
    let mut hi = 1.0;
    let mut guard = 0;
    while h_at(hi, &mut y, normal)? < 1.0 {
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Ok(f64::INFINITY);
        }
    }
    // Newton from the right stays above the root for a convex increasing map.
    let mut lo = 0.0;
    let mut t = hi;
    for _ in 0..200 {
        let phi = h_at(t, &mut y, normal)? - 1.0;
        if phi.abs() <= 1e-15 {
            break;
        }
        if phi < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let slope = dot(normal, z);
        let next = if slope > 0.0 { t - phi / slope } else { f64::NAN };
        t = if next.is_finite() && next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    h_at(t, &mut y, normal)?;
    Ok(t)
}

/// Orthonormal basis of `z`'s orthogonal complement (Householder).
fn orthogonal_complement(z: &[f64]) -> Vec<Vec<f64>> {
    let d = z.len();
    let zn = dot(z, z).sqrt();
    let e: Vec<f64> = z.iter().map(|v| v / zn).collect();
    // reflector mapping e to -sign(e_0) e_0
    let mut v = e.clone();
    let sgn = if e[0] >= 0.0 { 1.0 } else { -1.0 };
    v[0] += sgn;
    let vv = dot(&v, &v);
    (1..d)
        .map(|col| {
            (0..d)
                .map(|row| {
                    let id = if row == col { 1.0 } else { 0.0 };
                    id - 2.0 * v[row] * v[col] / vv
                })
                .collect()
        })
        .collect()
}

/// `min s - <o, u>` subject to `<v_i, u> <= s` and `<z, u> = 1`.
fn polytope_exit(vertices: &[Vec<f64>], o: &[f64], z: &[f64], normal: &mut [f64]) -> Result<f64, BodyError> {
    use minilp::{ComparisonOp, OptimizationDirection, Problem};
    let d = o.len();
    if z.iter().all(|v| *v == 0.0) {
        return Ok(f64::INFINITY);
    }
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let u: Vec<_> = (0..d)
        .map(|i| lp.add_var(-o[i], (f64::NEG_INFINITY, f64::INFINITY)))
        .collect();
    let s = lp.add_var(1.0, (f64::NEG_INFINITY, f64::INFINITY));
    for v in vertices {
        let mut row: Vec<_> = u.iter().zip(v).map(|(var, c)| (*var, *c)).collect();
        row.push((s, -1.0));
        lp.add_constraint(&row[..], ComparisonOp::Le, 0.0);
    }
    let zrow: Vec<_> = u.iter().zip(z).map(|(var, c)| (*var, *c)).collect();
    lp.add_constraint(&zrow[..], ComparisonOp::Eq, 1.0);
    match lp.solve() {
        Ok(sol) => {
            for i in 0..d {
                normal[i] = sol[u[i]];
            }
            let t = sol.objective();
            if t > 0.0 {
                Ok(t)
            } else {
                Err(BodyError::NotInterior)
            }
        }
        Err(minilp::Error::Unbounded) | Err(minilp::Error::Infeasible) => Err(BodyError::NotInterior),
    }
}

/// Feasibility of `x = sum l_i v_i`, `sum l_i = 1`, `l >= 0`.
fn polytope_contains(vertices: &[Vec<f64>], x: &[f64]) -> Result<bool, BodyError> {
    use minilp::{ComparisonOp, OptimizationDirection, Problem};
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let lam: Vec<_> = vertices.iter().map(|_| lp.add_var(0.0, (0.0, f64::INFINITY))).collect();
    for i in 0..x.len() {
        let row: Vec<_> = lam.iter().zip(vertices).map(|(l, v)| (*l, v[i])).collect();
        lp.add_constraint(&row[..], ComparisonOp::Eq, x[i]);
    }
    let ones: Vec<_> = lam.iter().map(|l| (*l, 1.0)).collect();
    lp.add_constraint(&ones[..], ComparisonOp::Eq, 1.0);
    match lp.solve() {
        Ok(_) => Ok(true),
        Err(minilp::Error::Infeasible) => Ok(false),
        Err(e) => Err(BodyError::Lp(e.to_string())),
    }
}
