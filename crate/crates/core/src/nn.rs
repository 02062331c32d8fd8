//! Exact kth-nearest-neighbor radii.
//!
//! A static kd-tree is built once per sample; each point then runs a
//! bounded best-first search for its `k` nearest other points. Distances
//! go through [`squared_distance`] on both the tree path and the
//! brute-force oracle, so the two agree bit for bit.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::measures::PointSample;

const LEAF_SIZE: usize = 8;

/// `radii[i]` is the distance from point `i` to its kth-nearest other point.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborRadii {
    k: usize,
    radii: Vec<f64>,
}

impl NeighborRadii {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn get(&self, i: usize) -> f64 {
        self.radii[i]
    }
}

/// Sum of squared coordinate differences, accumulated in axis order.
#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| {
        let d = x - y;
        acc + d * d
    })
}

fn check_order(sample: &PointSample, k: usize) -> Result<()> {
    if k == 0 {
        return Err(invalid("neighbor order k must be at least 1"));
    }
    if k >= sample.len() {
        return Err(invalid(format!(
            "neighbor order k = {k} needs more than {} points",
            sample.len()
        )));
    }
    Ok(())
}

/// All-pairs oracle: for each point, the kth order statistic of its
/// distances to the other points.
pub fn brute_force_radii(sample: &PointSample, k: usize) -> Result<NeighborRadii> {
    check_order(sample, k)?;
    let n = sample.len();
    let mut dist = Vec::with_capacity(n - 1);
    let radii = (0..n)
        .map(|i| {
            dist.clear();
            let p = sample.point(i);
            dist.extend(
                (0..n)
                    .filter(|&j| j != i)
                    .map(|j| squared_distance(p, sample.point(j))),
            );
            let (_, kth, _) = dist.select_nth_unstable_by(k - 1, f64::total_cmp);
            kth.sqrt()
        })
        .collect();
    Ok(NeighborRadii { k, radii })
}

/// Exact kth-nearest-neighbor radii through a kd-tree; queries run in parallel.
pub fn kth_nn_radii(sample: &PointSample, k: usize) -> Result<NeighborRadii> {
    check_order(sample, k)?;
    let tree = KdTree::build(sample);
    let radii = (0..sample.len())
        .into_par_iter()
        .map_init(
            || BinaryHeap::with_capacity(k + 1),
            |heap, i| tree.kth_squared_distance(i, k, heap).sqrt(),
        )
        .collect();
    Ok(NeighborRadii { k, radii })
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    // Max-heap on distance; index breaks ties so the order is total.
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

struct KdTree<'a> {
    sample: &'a PointSample,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> KdTree<'a> {
    fn build(sample: &'a PointSample) -> Self {
        let mut tree = KdTree {
            sample,
            order: (0..sample.len()).collect(),
            nodes: Vec::new(),
        };
        tree.build_node(0, sample.len());
        tree
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let d = self.sample.dim();
        // split the widest axis at the median
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for &i in &self.order[start..end] {
            for (a, &x) in self.sample.point(i).iter().enumerate() {
                lo[a] = lo[a].min(x);
                hi[a] = hi[a].max(x);
            }
        }
        let axis = (0..d)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap_or(0);
        let mid = start + (end - start) / 2;
        let sample = self.sample;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            sample.point(a)[axis].total_cmp(&sample.point(b)[axis])
        });
        let value = sample.point(self.order[mid])[axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    /// Squared distance from point `query` to its kth-nearest other point.
    fn kth_squared_distance(
        &self,
        query: usize,
        k: usize,
        heap: &mut BinaryHeap<Candidate>,
    ) -> f64 {
        heap.clear();
        let q = self.sample.point(query);
        self.search(0, query, q, k, heap);
        heap.peek().map(|c| c.dist2).unwrap_or(f64::INFINITY)
    }

    fn search(
        &self,
        node: usize,
        query: usize,
        q: &[f64],
        k: usize,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &j in &self.order[start..end] {
                    if j == query {
                        continue;
                    }
                    let cand = Candidate {
                        dist2: squared_distance(q, self.sample.point(j)),
                        index: j,
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().expect("heap holds k entries") {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let delta = q[axis] - value;
                let (near, far) = if delta < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, query, q, k, heap);
                // Any point across the plane is at least |delta| away.
                if heap.len() < k || delta * delta <= heap.peek().map_or(f64::INFINITY, |c| c.dist2)
                {
                    self.search(far, query, q, k, heap);
                }
            }
        }
    }
}
