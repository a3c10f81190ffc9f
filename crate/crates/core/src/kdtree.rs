//! Static 3-d tree for exact nearest-neighbour and radius queries.
//!
//! Ties are resolved towards the lowest point index, which matches a linear
//! scan with strict `<` comparison.

use crate::geometry::Vec3;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[inline]
pub fn dist2(a: &Vec3, b: &Vec3) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    dx * dx + dy * dy + dz * dz
}

impl KdTree {
    pub fn new(points: &[Vec3]) -> Self {
        let mut tree = KdTree {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build(0, points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for &i in &self.order[start..end] {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        let spread = hi - lo;
        let axis = spread.imax();
        if spread[axis] == 0.0 {
            // all points coincide
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = (start + end) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis])
        });
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    /// Index and squared distance of the nearest point.
    pub fn nearest(&self, q: &Vec3) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.nearest_rec(0, q, &mut best);
        Some(best)
    }

    fn nearest_rec(&self, node: usize, q: &Vec3, best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d = dist2(q, &self.points[i]);
                    if d < best.1 || (d == best.1 && i < best.0) {
                        *best = (i, d);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.nearest_rec(near, q, best);
                // `<=` keeps equal-distance candidates with lower indices reachable
                if diff * diff <= best.1 {
                    self.nearest_rec(far, q, best);
                }
            }
        }
    }

    /// The `k` nearest points as `(index, squared distance)`, closest first,
    /// ties by index.
    pub fn k_nearest(&self, q: &Vec3, k: usize) -> Vec<(usize, f64)> {
        let mut best: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
        if k > 0 && !self.points.is_empty() {
            self.knn_rec(0, q, k, &mut best);
        }
        best
    }

    fn knn_rec(&self, node: usize, q: &Vec3, k: usize, best: &mut Vec<(usize, f64)>) {
        let worst = |b: &Vec<(usize, f64)>| if b.len() < k { f64::INFINITY } else { b[k - 1].1 };
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d = dist2(q, &self.points[i]);
                    if best.len() == k {
                        let (wi, wd) = best[k - 1];
                        if d > wd || (d == wd && i > wi) {
                            continue;
                        }
                    }
                    let pos = best.partition_point(|&(j, e)| e < d || (e == d && j < i));
                    best.insert(pos, (i, d));
                    best.truncate(k);
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.knn_rec(near, q, k, best);
                if diff * diff <= worst(best) {
                    self.knn_rec(far, q, k, best);
                }
            }
        }
    }

    /// Indices of all points with squared distance strictly below `r2`,
    /// in ascending index order.
    pub fn within(&self, q: &Vec3, r2: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if !self.points.is_empty() {
            self.within_rec(0, q, r2, &mut out);
        }
        out.sort_unstable();
        out
    }

    fn within_rec(&self, node: usize, q: &Vec3, r2: f64, out: &mut Vec<usize>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if dist2(q, &self.points[i]) < r2 {
                        out.push(i);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.within_rec(near, q, r2, out);
                if diff * diff < r2 {
                    self.within_rec(far, q, r2, out);
                }
            }
        }
    }
}

/// Linear-scan nearest neighbour; the reference the tree must agree with.
pub fn brute_force_nearest(points: &[Vec3], q: &Vec3) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in points.iter().enumerate() {
        let d = dist2(q, p);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
        (0..n)
            .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()))
            .collect()
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1, 2, 9, 50, 300] {
            let pts = random_points(&mut rng, n);
            let tree = KdTree::new(&pts);
            for _ in 0..100 {
                let q = Vec3::new(rng.random(), rng.random(), rng.random()) * 1.2;
                assert_eq!(tree.nearest(&q), brute_force_nearest(&pts, &q));
            }
        }
    }

    #[test]
    fn lattice_with_duplicates() {
        // repeated coordinates and exact duplicates stress the tie rules
        let mut pts = Vec::new();
        for i in 0..6 {
            for j in 0..6 {
                for k in 0..3 {
                    pts.push(Vec3::new(i as f64, j as f64, k as f64) * 0.1);
                }
            }
        }
        pts.extend_from_slice(&pts.clone()[..20]);
        let tree = KdTree::new(&pts);
        for p in &pts {
            let q = p + Vec3::new(0.05, 0.05, 0.0);
            assert_eq!(tree.nearest(&q), brute_force_nearest(&pts, &q));
            assert_eq!(tree.nearest(p), brute_force_nearest(&pts, p));
        }
    }

    #[test]
    fn radius_query_matches_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts = random_points(&mut rng, 400);
        let tree = KdTree::new(&pts);
        for _ in 0..50 {
            let q = Vec3::new(rng.random(), rng.random(), rng.random());
            let expected: Vec<usize> = (0..pts.len()).filter(|&i| dist2(&q, &pts[i]) < 0.02).collect();
            assert_eq!(tree.within(&q, 0.02), expected);
        }
    }

    #[test]
    fn empty_tree() {
        let tree = KdTree::new(&[]);
        assert!(tree.nearest(&Vec3::zeros()).is_none());
        assert!(tree.within(&Vec3::zeros(), 1.0).is_empty());
    }

    #[test]
    fn k_nearest_matches_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<Vec3> = (0..300)
            .map(|_| Vec3::new((rng.random_range(0..8) as f64) * 0.1, rng.random(), 0.0))
            .collect();
        let tree = KdTree::new(&pts);
        for _ in 0..50 {
            let q = Vec3::new(rng.random(), rng.random(), rng.random());
            let mut all: Vec<(usize, f64)> = pts.iter().enumerate().map(|(i, p)| (i, dist2(&q, p))).collect();
            all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
            all.truncate(6);
            assert_eq!(tree.k_nearest(&q, 6), all);
        }
    }
}
