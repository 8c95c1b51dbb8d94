use nalgebra::Vector3;

use super::{MeshError, SegmentMesh};

/// Closest point on triangle `abc` to `p` by Voronoi-region classification.
pub fn closest_point_on_triangle(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> Vector3<f64> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

fn triangle_distance_sq(p: &Vector3<f64>, tri: &[Vector3<f64>; 3]) -> f64 {
    (closest_point_on_triangle(p, &tri[0], &tri[1], &tri[2]) - p).norm_squared()
}

/// Exhaustive scan over every face.
pub fn brute_force_distance(point: &Vector3<f64>, mesh: &SegmentMesh) -> Result<f64, MeshError> {
    if mesh.is_empty() {
        return Err(MeshError::EmptyMesh);
    }
    let best = (0..mesh.face_count())
        .map(|f| triangle_distance_sq(point, &mesh.triangle(f)))
        .fold(f64::INFINITY, f64::min);
    Ok(best.sqrt())
}

#[derive(Debug, Clone, Copy)]
struct Aabb {
    min: Vector3<f64>,
    max: Vector3<f64>,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            min: Vector3::repeat(f64::INFINITY),
            max: Vector3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vector3<f64>) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    fn distance_sq(&self, p: &Vector3<f64>) -> f64 {
        let mut d = 0.0;
        for i in 0..3 {
            let e = (self.min[i] - p[i]).max(0.0).max(p[i] - self.max[i]);
            d += e * e;
        }
        d
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { bounds: Aabb, start: usize, end: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

const LEAF_SIZE: usize = 4;

/// Bounding-volume hierarchy over the triangles of a mesh, built once and
/// queried for exact point distances.
#[derive(Debug, Clone)]
pub struct TriangleBvh {
    triangles: Vec<[Vector3<f64>; 3]>,
    nodes: Vec<Node>,
}

impl TriangleBvh {
    pub fn new(mesh: &SegmentMesh) -> Result<Self, MeshError> {
        if mesh.is_empty() {
            return Err(MeshError::EmptyMesh);
        }
        let mut triangles: Vec<[Vector3<f64>; 3]> = (0..mesh.face_count()).map(|f| mesh.triangle(f)).collect();
        let mut nodes = Vec::with_capacity(2 * triangles.len() / LEAF_SIZE + 1);
        build(&mut triangles, 0, &mut nodes);
        Ok(Self { triangles, nodes })
    }

    pub fn distance(&self, point: &Vector3<f64>) -> f64 {
        let mut best = f64::INFINITY;
        let mut stack = vec![0usize];
        while let Some(idx) = stack.pop() {
            let node = &self.nodes[idx];
            if node.bounds().distance_sq(point) >= best {
                continue;
            }
            match *node {
                Node::Leaf { start, end, .. } => {
                    for tri in &self.triangles[start..end] {
                        best = best.min(triangle_distance_sq(point, tri));
                    }
                }
                Node::Inner { left, right, .. } => {
                    let dl = self.nodes[left].bounds().distance_sq(point);
                    let dr = self.nodes[right].bounds().distance_sq(point);
                    // nearer child on top of the stack
                    if dl < dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        best.sqrt()
    }
}

fn centroid(tri: &[Vector3<f64>; 3]) -> Vector3<f64> {
    (tri[0] + tri[1] + tri[2]) / 3.0
}

fn build(tris: &mut [[Vector3<f64>; 3]], offset: usize, nodes: &mut Vec<Node>) -> usize {
    let mut bounds = Aabb::empty();
    for t in tris.iter() {
        for p in t {
            bounds.grow(p);
        }
    }
    let idx = nodes.len();
    if tris.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            bounds,
            start: offset,
            end: offset + tris.len(),
        });
        return idx;
    }
    let mut cb = Aabb::empty();
    for t in tris.iter() {
        cb.grow(&centroid(t));
    }
    let extent = cb.max - cb.min;
    let axis = extent.imax();
    let mid = tris.len() / 2;
    tris.select_nth_unstable_by(mid, |a, b| centroid(a)[axis].total_cmp(&centroid(b)[axis]));

    nodes.push(Node::Leaf { bounds, start: 0, end: 0 });
    let (lo, hi) = tris.split_at_mut(mid);
    let left = build(lo, offset, nodes);
    let right = build(hi, offset + mid, nodes);
    nodes[idx] = Node::Inner { bounds, left, right };
    idx
}

/// Unsigned distance from `point` to the nearest triangle of `mesh`. Builds
/// a throwaway hierarchy; keep a [`TriangleBvh`] around for repeated queries.
pub fn point_to_mesh_distance(point: &Vector3<f64>, mesh: &SegmentMesh) -> Result<f64, MeshError> {
    Ok(TriangleBvh::new(mesh)?.distance(point))
}
