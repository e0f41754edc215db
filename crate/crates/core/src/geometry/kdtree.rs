//! A small static kd-tree over 3D points.
//!
//! All queries are exact and deterministic: equal distances are broken by
//! the lower point index, and results do not depend on build or thread
//! order. The tree is immutable after construction, so it can be shared
//! freely across parallel loss evaluations.

use nalgebra::Vector3;

#[derive(Debug, Clone)]
pub struct KdTree {
    pts: Vec<Vector3<f64>>,
    /// Permutation of point indices arranged as an implicit binary tree:
    /// the median of a range is the splitting node, halves are subtrees.
    order: Vec<u32>,
}

impl KdTree {
    pub fn build(points: &[Vector3<f64>]) -> Self {
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        if !order.is_empty() {
            build_recursive(points, &mut order, 0);
        }
        KdTree {
            pts: points.to_vec(),
            order,
        }
    }

    pub fn len(&self) -> usize {
        self.pts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pts.is_empty()
    }

    pub fn point(&self, index: usize) -> &Vector3<f64> {
        &self.pts[index]
    }

    /// Index and squared distance of the exact nearest neighbor.
    /// Ties go to the lowest index. Returns `None` for an empty tree.
    pub fn nearest(&self, query: &Vector3<f64>) -> Option<(usize, f64)> {
        if self.pts.is_empty() {
            return None;
        }
        let mut best = (u32::MAX, f64::INFINITY);
        self.nearest_in(query, 0, self.order.len(), 0, &mut best);
        Some((best.0 as usize, best.1))
    }

    fn nearest_in(
        &self,
        query: &Vector3<f64>,
        lo: usize,
        hi: usize,
        depth: usize,
        best: &mut (u32, f64),
    ) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let idx = self.order[mid];
        let p = &self.pts[idx as usize];
        let d2 = (p - query).norm_squared();
        if d2 < best.1 || (d2 == best.1 && idx < best.0) {
            *best = (idx, d2);
        }
        let axis = depth % 3;
        let diff = query[axis] - p[axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.nearest_in(query, near.0, near.1, depth + 1, best);
        // The far side can still hold an equal-distance, lower-index point.
        if diff * diff <= best.1 {
            self.nearest_in(query, far.0, far.1, depth + 1, best);
        }
    }

    /// Indices of the k nearest neighbors, ordered by (distance, index).
    pub fn k_nearest(&self, query: &Vector3<f64>, k: usize) -> Vec<(usize, f64)> {
        let mut heap: Vec<(f64, u32)> = Vec::with_capacity(k + 1);
        if k > 0 && !self.pts.is_empty() {
            self.k_nearest_in(query, 0, self.order.len(), 0, k, &mut heap);
        }
        heap.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        heap.into_iter().map(|(d2, i)| (i as usize, d2)).collect()
    }

    fn k_nearest_in(
        &self,
        query: &Vector3<f64>,
        lo: usize,
        hi: usize,
        depth: usize,
        k: usize,
        heap: &mut Vec<(f64, u32)>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let idx = self.order[mid];
        let p = &self.pts[idx as usize];
        let d2 = (p - query).norm_squared();
        let cand = (d2, idx);
        if heap.len() < k {
            heap.push(cand);
            if heap.len() == k {
                heap.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            }
        } else if lex_less(cand, heap[k - 1]) {
            let pos = heap
                .binary_search_by(|e| {
                    e.0.total_cmp(&cand.0)
                        .then(e.1.cmp(&cand.1))
                })
                .unwrap_or_else(|e| e);
            heap.insert(pos, cand);
            heap.pop();
        }
        let axis = depth % 3;
        let diff = query[axis] - p[axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.k_nearest_in(query, near.0, near.1, depth + 1, k, heap);
        let worst = if heap.len() < k {
            f64::INFINITY
        } else {
            heap[k - 1].0
        };
        if diff * diff <= worst {
            self.k_nearest_in(query, far.0, far.1, depth + 1, k, heap);
        }
    }

    /// Indices of all points within `radius` of the query, sorted by index.
    pub fn within_radius(&self, query: &Vector3<f64>, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if !self.pts.is_empty() && radius >= 0.0 {
            self.radius_in(query, radius * radius, 0, self.order.len(), 0, &mut out);
        }
        out.sort_unstable();
        out
    }

    fn radius_in(
        &self,
        query: &Vector3<f64>,
        r2: f64,
        lo: usize,
        hi: usize,
        depth: usize,
        out: &mut Vec<usize>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let idx = self.order[mid];
        let p = &self.pts[idx as usize];
        if (p - query).norm_squared() <= r2 {
            out.push(idx as usize);
        }
        let axis = depth % 3;
        let diff = query[axis] - p[axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.radius_in(query, r2, near.0, near.1, depth + 1, out);
        if diff * diff <= r2 {
            self.radius_in(query, r2, far.0, far.1, depth + 1, out);
        }
    }
}

fn lex_less(a: (f64, u32), b: (f64, u32)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

fn build_recursive(pts: &[Vector3<f64>], order: &mut [u32], depth: usize) {
    if order.len() <= 1 {
        return;
    }
    let axis = depth % 3;
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        pts[a as usize][axis]
            .total_cmp(&pts[b as usize][axis])
            .then(a.cmp(&b))
    });
    let (left, rest) = order.split_at_mut(mid);
    build_recursive(pts, left, depth + 1);
    build_recursive(pts, &mut rest[1..], depth + 1);
}
