//! Static 3D kd-tree for nearest-neighbour queries.
//!
//! Ties in distance are broken by the lower point index so results agree
//! with an exhaustive scan that does the same.

use nalgebra::Vector3;
use std::cmp::Ordering;

#[derive(Debug, Clone)]
struct Node {
    // Range into `order` covered by this subtree.
    start: usize,
    end: usize,
    axis: usize,
    split: f64,
    left: Option<usize>,
    right: Option<usize>,
}

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vector3<f64>>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist_sq: f64,
}

fn cmp_neighbor(a: &Neighbor, b: &Neighbor) -> Ordering {
    a.dist_sq.total_cmp(&b.dist_sq).then(a.index.cmp(&b.index))
}

impl KdTree {
    pub fn new(points: &[Vector3<f64>]) -> Self {
        let mut tree = Self { points: points.to_vec(), order: (0..points.len()).collect(), nodes: Vec::new() };
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

    pub fn point(&self, index: usize) -> &Vector3<f64> {
        &self.points[index]
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node { start, end, axis: 0, split: 0.0, left: None, right: None });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for &i in &self.order[start..end] {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        let axis = (hi - lo).imax();
        if hi[axis] - lo[axis] <= 0.0 {
            return id;
        }
        let mid = (start + end) / 2;
        let pts = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            pts[a][axis].total_cmp(&pts[b][axis]).then(a.cmp(&b))
        });
        let split = self.points[self.order[mid]][axis];
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        let node = &mut self.nodes[id];
        node.axis = axis;
        node.split = split;
        node.left = Some(left);
        node.right = Some(right);
        id
    }

    /// Nearest point to `query`, or `None` for an empty tree.
    pub fn nearest(&self, query: &Vector3<f64>) -> Option<Neighbor> {
        self.knn(query, 1).into_iter().next()
    }

    /// The `k` nearest points sorted by (distance, index).
    pub fn knn(&self, query: &Vector3<f64>, k: usize) -> Vec<Neighbor> {
        let mut best: Vec<Neighbor> = Vec::with_capacity(k + 1);
        if k == 0 || self.nodes.is_empty() {
            return best;
        }
        self.search(0, query, k, &mut best);
        best
    }

    /// The `k` nearest points excluding `exclude` itself.
    pub fn knn_excluding(&self, query: &Vector3<f64>, k: usize, exclude: usize) -> Vec<Neighbor> {
        let mut v = self.knn(query, k + 1);
        if let Some(pos) = v.iter().position(|n| n.index == exclude) {
            v.remove(pos);
        } else {
            v.truncate(k);
        }
        v
    }

    fn search(&self, node_id: usize, q: &Vector3<f64>, k: usize, best: &mut Vec<Neighbor>) {
        let node = &self.nodes[node_id];
        match (node.left, node.right) {
            (Some(l), Some(r)) => {
                let diff = q[node.axis] - node.split;
                let (first, second) = if diff < 0.0 { (l, r) } else { (r, l) };
                self.search(first, q, k, best);
                let worst = if best.len() < k { f64::INFINITY } else { best[best.len() - 1].dist_sq };
                // `<=` keeps equal-distance candidates with lower indices reachable.
                if diff * diff <= worst {
                    self.search(second, q, k, best);
                }
            }
            _ => {
                for &i in &self.order[node.start..node.end] {
                    let cand = Neighbor { index: i, dist_sq: (self.points[i] - q).norm_squared() };
                    if best.len() < k || cmp_neighbor(&cand, &best[best.len() - 1]) == Ordering::Less {
                        let pos = best.partition_point(|b| cmp_neighbor(b, &cand) == Ordering::Less);
                        best.insert(pos, cand);
                        if best.len() > k {
                            best.pop();
                        }
                    }
                }
            }
        }
    }
}

/// Exhaustive k-nearest scan, used as the reference for [`KdTree`].
pub fn brute_force_knn(points: &[Vector3<f64>], query: &Vector3<f64>, k: usize) -> Vec<Neighbor> {
    let mut all: Vec<Neighbor> = points
        .iter()
        .enumerate()
        .map(|(index, p)| Neighbor { index, dist_sq: (p - query).norm_squared() })
        .collect();
    all.sort_by(cmp_neighbor);
    all.truncate(k);
    all
}
