use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use super::{Aabb, Membership, PointClass};
use crate::error::{Error, Result};

const MIN_AREA: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Triangle {
    pub vertices: [Point3<f64>; 3],
    pub normal: Vector3<f64>,
}

impl Triangle {
    pub fn area(&self) -> f64 {
        let [a, b, c] = &self.vertices;
        0.5 * (b - a).cross(&(c - a)).norm()
    }
}

/// Triangulated node surface (STL).
///
/// Membership queries cast axis-aligned rays and count crossings. Each axis
/// has a bucket grid over the two transverse coordinates so a ray only visits
/// triangles whose projection overlaps its bucket.
#[derive(Debug, Clone)]
pub struct TriangleSurface {
    triangles: Vec<Triangle>,
    bbox: Aabb,
    watertight: bool,
    ray_index: [AxisBuckets; 3],
}

#[derive(Debug, Clone)]
struct AxisBuckets {
    /// transverse axes (a, b) of rays travelling along `axis`
    a: usize,
    b: usize,
    origin: [f64; 2],
    size: [f64; 2],
    n: [usize; 2],
    buckets: Vec<Vec<u32>>,
}

enum RayOutcome {
    Count(usize),
    OnSurface,
    Degenerate,
}

impl TriangleSurface {
    pub fn from_triangles(raw: Vec<[Point3<f64>; 3]>) -> Result<Self> {
        let mut triangles = Vec::with_capacity(raw.len());
        let mut dropped = 0usize;
        for vertices in raw {
            let [a, b, c] = &vertices;
            let cross = (b - a).cross(&(c - a));
            let area = 0.5 * cross.norm();
            if !(area > MIN_AREA) {
                dropped += 1;
                continue;
            }
            triangles.push(Triangle {
                vertices,
                normal: cross / cross.norm(),
            });
        }
        if dropped > 0 {
            log::warn!("dropped {dropped} degenerate triangle(s) with area <= {MIN_AREA} mm^2");
        }
        if triangles.is_empty() {
            return Err(Error::EmptyGeometry);
        }
        let mut bbox = Aabb::empty();
        for t in &triangles {
            for v in &t.vertices {
                bbox.grow(v);
            }
        }
        let watertight = is_closed(&triangles);
        let ray_index = [0, 1, 2].map(|axis| AxisBuckets::build(&triangles, &bbox, axis));
        Ok(Self {
            triangles,
            bbox,
            watertight,
            ray_index,
        })
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn bounding_box(&self) -> Aabb {
        self.bbox
    }

    pub fn is_watertight(&self) -> bool {
        self.watertight
    }

    pub fn area(&self) -> f64 {
        self.triangles.iter().map(Triangle::area).sum()
    }

    fn tolerance(&self) -> f64 {
        1e-12 * self.bbox.diagonal().max(1.0)
    }

    /// Crossing parity of a ray cast from `p` in the +`axis` direction.
    /// Degenerate hits on edges or vertices are resolved by shifting the ray
    /// sideways by a tiny amount.
    pub fn ray_parity(&self, p: &Point3<f64>, axis: usize) -> Membership {
        const SHIFTS: [[f64; 2]; 6] = [
            [0.0, 0.0],
            [0.707_106_781, 0.318_309_886],
            [-0.577_350_269, 0.816_496_581],
            [0.267_949_192, -0.963_433_852],
            [-0.894_427_191, -0.447_213_595],
            [0.141_421_356, 0.989_949_494],
        ];
        let scale = 1e-9 * self.bbox.diagonal().max(1.0);
        let tol = self.tolerance();
        let mut last = 0usize;
        for (attempt, shift) in SHIFTS.iter().enumerate() {
            let offset = [shift[0] * scale, shift[1] * scale];
            match self.ray_index[axis].cast(&self.triangles, p, offset, tol, attempt == 0) {
                RayOutcome::OnSurface => return Membership::Inside,
                RayOutcome::Count(c) => {
                    return if c % 2 == 1 {
                        Membership::Inside
                    } else {
                        Membership::Outside
                    }
                }
                RayOutcome::Degenerate => last = attempt,
            }
        }
        log::debug!("ray parity stayed degenerate after {} shifts", last + 1);
        match self.ray_index[axis].cast(&self.triangles, p, [0.0, 0.0], tol, false) {
            RayOutcome::Count(c) if c % 2 == 1 => Membership::Inside,
            RayOutcome::OnSurface => Membership::Inside,
            _ => Membership::Outside,
        }
    }

    pub fn classify(&self, p: &Point3<f64>) -> PointClass {
        if !self.bbox.expanded(self.tolerance()).contains(p) {
            return PointClass {
                membership: Membership::Outside,
                fallback: !self.watertight,
            };
        }
        if self.watertight {
            return PointClass {
                membership: self.ray_parity(p, 0),
                fallback: false,
            };
        }
        let votes = (0..3)
            .filter(|&axis| self.ray_parity(p, axis).is_inside())
            .count();
        PointClass {
            membership: if votes >= 2 {
                Membership::Inside
            } else {
                Membership::Outside
            },
            fallback: true,
        }
    }
}

fn on_triangle(t: &Triangle, p: &Point3<f64>, tol: f64) -> bool {
    let [v0, v1, v2] = &t.vertices;
    let n = (v1 - v0).cross(&(v2 - v0));
    let len = n.norm();
    if len == 0.0 || (p - v0).dot(&n).abs() > tol * len {
        return false;
    }
    let inside = |a: &Point3<f64>, b: &Point3<f64>| (b - a).cross(&(p - a)).dot(&n) >= -tol * len;
    inside(v0, v1) && inside(v1, v2) && inside(v2, v0)
}

fn is_closed(triangles: &[Triangle]) -> bool {
    type Key = [u64; 3];
    let key = |p: &Point3<f64>| [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()];
    let mut edges: HashMap<(Key, Key), u32> = HashMap::new();
    for t in triangles {
        for i in 0..3 {
            let a = key(&t.vertices[i]);
            let b = key(&t.vertices[(i + 1) % 3]);
            let e = if a <= b { (a, b) } else { (b, a) };
            *edges.entry(e).or_insert(0) += 1;
        }
    }
    edges.values().all(|&c| c == 2)
}

impl AxisBuckets {
    fn build(triangles: &[Triangle], bbox: &Aabb, axis: usize) -> Self {
        let a = (axis + 1) % 3;
        let b = (axis + 2) % 3;
        let side = ((triangles.len() as f64).sqrt().ceil() as usize).clamp(1, 256);
        let origin = [bbox.min[a], bbox.min[b]];
        let size = [
            ((bbox.max[a] - bbox.min[a]) / side as f64).max(f64::MIN_POSITIVE),
            ((bbox.max[b] - bbox.min[b]) / side as f64).max(f64::MIN_POSITIVE),
        ];
        let n = [side, side];
        let mut buckets = vec![Vec::new(); side * side];
        let mut out = Self {
            a,
            b,
            origin,
            size,
            n,
            buckets: Vec::new(),
        };
        for (ti, t) in triangles.iter().enumerate() {
            let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
            for v in &t.vertices {
                for (k, d) in [a, b].into_iter().enumerate() {
                    lo[k] = lo[k].min(v[d]);
                    hi[k] = hi[k].max(v[d]);
                }
            }
            // one extra bucket on each side absorbs shifted rays near bucket borders
            let i0 = out.bucket_coord(lo[0], 0).saturating_sub(1);
            let i1 = (out.bucket_coord(hi[0], 0) + 1).min(side - 1);
            let j0 = out.bucket_coord(lo[1], 1).saturating_sub(1);
            let j1 = (out.bucket_coord(hi[1], 1) + 1).min(side - 1);
            for i in i0..=i1 {
                for j in j0..=j1 {
                    buckets[i * side + j].push(ti as u32);
                }
            }
        }
        out.buckets = buckets;
        out
    }

    fn bucket_coord(&self, x: f64, k: usize) -> usize {
        let f = ((x - self.origin[k]) / self.size[k]).floor();
        if f <= 0.0 {
            0
        } else {
            (f as usize).min(self.n[k] - 1)
        }
    }

    fn cast(
        &self,
        triangles: &[Triangle],
        p: &Point3<f64>,
        offset: [f64; 2],
        tol: f64,
        detect_surface: bool,
    ) -> RayOutcome {
        let axis = 3 - self.a - self.b;
        let qa = p[self.a] + offset[0];
        let qb = p[self.b] + offset[1];
        let bucket = self.bucket_coord(qa, 0) * self.n[1] + self.bucket_coord(qb, 1);
        let mut count = 0usize;
        let mut degenerate = false;
        for &ti in &self.buckets[bucket] {
            let t = &triangles[ti as usize];
            let [v0, v1, v2] = &t.vertices;
            let pa = [v0[self.a], v1[self.a], v2[self.a]];
            let pb = [v0[self.b], v1[self.b], v2[self.b]];
            let area2 = (pa[1] - pa[0]) * (pb[2] - pb[0]) - (pa[2] - pa[0]) * (pb[1] - pb[0]);
            let scale2 = [
                (pa[1] - pa[0]).hypot(pb[1] - pb[0]),
                (pa[2] - pa[1]).hypot(pb[2] - pb[1]),
                (pa[0] - pa[2]).hypot(pb[0] - pb[2]),
            ];
            let longest = scale2.iter().cloned().fold(0.0, f64::max);
            if area2.abs() <= 1e-14 * longest * longest {
                // parallel to the ray
                if detect_surface && on_triangle(t, p, tol) {
                    return RayOutcome::OnSurface;
                }
                continue;
            }
            let edge = |i: usize, j: usize| (pa[j] - pa[i]) * (qb - pb[i]) - (pb[j] - pb[i]) * (qa - pa[i]);
            let w0 = edge(1, 2);
            let w1 = edge(2, 0);
            let w2 = edge(0, 1);
            let sgn = area2.signum();
            let (w0, w1, w2) = (w0 * sgn, w1 * sgn, w2 * sgn);
            let eps = 1e-12 * longest * longest;
            if w0 < -eps || w1 < -eps || w2 < -eps {
                continue;
            }
            let total = w0 + w1 + w2;
            let hit = (w0 * v0[axis] + w1 * v1[axis] + w2 * v2[axis]) / total;
            let dist = hit - p[axis];
            if detect_surface && dist.abs() <= tol {
                return RayOutcome::OnSurface;
            }
            if w0 <= eps || w1 <= eps || w2 <= eps {
                degenerate = true;
                continue;
            }
            if dist > 0.0 {
                count += 1;
            }
        }
        if degenerate {
            RayOutcome::Degenerate
        } else {
            RayOutcome::Count(count)
        }
    }
}

/// Parses binary or ASCII STL. The format is detected from the content, not
/// from a file extension: binary when the record count in the header matches
/// the payload size, ASCII when the content starts with `solid` and parses.
pub fn load_triangle_surface(bytes: &[u8]) -> Result<TriangleSurface> {
    let binary_size_matches = bytes.len() >= 84 && {
        let n = u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]) as usize;
        84usize.checked_add(n.saturating_mul(50)) == Some(bytes.len())
    };
    let looks_ascii = {
        let start = bytes.iter().position(|c| !c.is_ascii_whitespace()).unwrap_or(0);
        bytes[start..].starts_with(b"solid")
    };
    let triangles = if binary_size_matches {
        parse_binary(bytes)?
    } else if looks_ascii {
        parse_ascii(bytes)?
    } else {
        parse_binary(bytes)?
    };
    if triangles.is_empty() {
        return Err(Error::EmptyGeometry);
    }
    TriangleSurface::from_triangles(triangles)
}

fn parse_binary(bytes: &[u8]) -> Result<Vec<[Point3<f64>; 3]>> {
    if bytes.len() < 84 {
        return Err(Error::StlParse {
            offset: bytes.len(),
            message: "truncated header: a binary STL needs at least 84 bytes".into(),
        });
    }
    let n = u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]) as usize;
    let mut out = Vec::with_capacity(n.min(bytes.len() / 50));
    for i in 0..n {
        let rec = 84 + 50 * i;
        if rec + 50 > bytes.len() {
            return Err(Error::StlParse {
                offset: bytes.len(),
                message: format!("truncated payload: record {i} of {n} incomplete"),
            });
        }
        let f = |k: usize| {
            let o = rec + 4 * k;
            f32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]) as f64
        };
        let vertex = |j: usize| Point3::new(f(3 + 3 * j), f(4 + 3 * j), f(5 + 3 * j));
        out.push([vertex(0), vertex(1), vertex(2)]);
    }
    if 84 + 50 * n != bytes.len() {
        log::warn!(
            "binary STL has {} trailing byte(s) after {n} records",
            bytes.len() - 84 - 50 * n
        );
    }
    Ok(out)
}

fn parse_ascii(bytes: &[u8]) -> Result<Vec<[Point3<f64>; 3]>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::StlParse {
        offset: e.valid_up_to(),
        message: "ASCII STL is not valid UTF-8".into(),
    })?;
    // tokens with their byte offsets
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                tokens.push((s, &text[s..i]));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        tokens.push((s, &text[s..]));
    }

    let mut it = tokens.into_iter().peekable();
    let err = |offset: usize, message: String| Error::StlParse { offset, message };
    let end = text.len();
    match it.next() {
        Some((_, "solid")) => {}
        Some((o, t)) => return Err(err(o, format!("expected `solid`, found `{t}`"))),
        None => return Err(err(0, "empty input".into())),
    }
    // optional name up to the first facet/endsolid
    while let Some(&(_, t)) = it.peek() {
        if t == "facet" || t == "endsolid" {
            break;
        }
        it.next();
    }
    let mut out = Vec::new();
    loop {
        match it.next() {
            Some((_, "endsolid")) => break,
            Some((_, "facet")) => {}
            Some((o, t)) => return Err(err(o, format!("expected `facet` or `endsolid`, found `{t}`"))),
            None => return Err(err(end, "missing `endsolid`".into())),
        }
        expect_word(&mut it, "normal", end)?;
        // normal components are recomputed from the vertices
        for _ in 0..3 {
            number(&mut it, end)?;
        }
        expect_word(&mut it, "outer", end)?;
        expect_word(&mut it, "loop", end)?;
        let mut vs = [Point3::origin(); 3];
        for v in vs.iter_mut() {
            match it.next() {
                Some((_, "vertex")) => {}
                Some((o, t)) => return Err(err(o, format!("expected `vertex`, found `{t}`"))),
                None => return Err(err(end, "truncated: expected `vertex`".into())),
            }
            *v = Point3::new(
                number(&mut it, end)?,
                number(&mut it, end)?,
                number(&mut it, end)?,
            );
        }
        expect_word(&mut it, "endloop", end)?;
        expect_word(&mut it, "endfacet", end)?;
        out.push(vs);
    }
    Ok(out)
}

fn expect_word<'a>(it: &mut impl Iterator<Item = (usize, &'a str)>, word: &str, end: usize) -> Result<()> {
    match it.next() {
        Some((_, t)) if t == word => Ok(()),
        Some((o, t)) => Err(Error::StlParse {
            offset: o,
            message: format!("expected `{word}`, found `{t}`"),
        }),
        None => Err(Error::StlParse {
            offset: end,
            message: format!("truncated: expected `{word}`"),
        }),
    }
}

fn number<'a>(it: &mut impl Iterator<Item = (usize, &'a str)>, end: usize) -> Result<f64> {
    match it.next() {
        Some((o, t)) => t.parse::<f64>().map_err(|_| Error::StlParse {
            offset: o,
            message: format!("expected a number, found `{t}`"),
        }),
        None => Err(Error::StlParse {
            offset: end,
            message: "truncated: expected a number".into(),
        }),
    }
}
