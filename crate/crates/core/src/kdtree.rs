//! Exact nearest-neighbor search over 5-D feature vectors.

use crate::error::{Error, Result};
use crate::image::FeatureVector;

const DIMS: usize = 5;
const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        dim: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Immutable k-d tree answering exact 1-NN queries under the Euclidean
/// metric. Among equidistant points the one inserted first wins.
#[derive(Debug, Clone)]
pub struct FeatureIndex {
    points: Vec<FeatureVector>,
    payloads: Vec<f64>,
    /// Point indices, permuted so every leaf owns a contiguous range.
    order: Vec<usize>,
    nodes: Vec<Node>,
}

/// Result of a nearest-neighbor query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    /// Insertion index of the matched point.
    pub index: usize,
    pub distance_squared: f64,
    pub payload: f64,
}

impl FeatureIndex {
    pub fn build(anchors: &[(FeatureVector, f64)]) -> Result<FeatureIndex> {
        if anchors.is_empty() {
            return Err(Error::invalid("feature index needs at least one point"));
        }
        let mut index = FeatureIndex {
            points: anchors.iter().map(|a| a.0).collect(),
            payloads: anchors.iter().map(|a| a.1).collect(),
            order: (0..anchors.len()).collect(),
            nodes: Vec::new(),
        };
        index.build_node(0, anchors.len());
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, index: usize) -> (FeatureVector, f64) {
        (self.points[index], self.payloads[index])
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let dim = self.widest_dim(start, end);
        let points = &self.points;
        let slice = &mut self.order[start..end];
        let mid = slice.len() / 2;
        slice.select_nth_unstable_by(mid, |&a, &b| points[a].0[dim].total_cmp(&points[b].0[dim]).then(a.cmp(&b)));
        let value = points[slice[mid]].0[dim];
        // placeholder, children are filled in after recursion
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, start + mid);
        let right = self.build_node(start + mid, end);
        self.nodes[id] = Node::Split {
            dim,
            value,
            left,
            right,
        };
        id
    }

    fn widest_dim(&self, start: usize, end: usize) -> usize {
        let mut lo = [f64::INFINITY; DIMS];
        let mut hi = [f64::NEG_INFINITY; DIMS];
        for &i in &self.order[start..end] {
            for d in 0..DIMS {
                lo[d] = lo[d].min(self.points[i].0[d]);
                hi[d] = hi[d].max(self.points[i].0[d]);
            }
        }
        (0..DIMS)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])).then(b.cmp(&a)))
            .expect("DIMS > 0")
    }

    /// Exact nearest stored point to `query`.
    pub fn nearest(&self, query: &FeatureVector) -> Neighbor {
        let mut best = (f64::INFINITY, usize::MAX);
        self.search(0, query, &mut best);
        Neighbor {
            index: best.1,
            distance_squared: best.0,
            payload: self.payloads[best.1],
        }
    }

    fn search(&self, node: usize, q: &FeatureVector, best: &mut (f64, usize)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d = q.distance_squared(&self.points[i]);
                    if d < best.0 || (d == best.0 && i < best.1) {
                        *best = (d, i);
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = q.0[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                // equal distance may still hold an earlier-inserted tie
                if diff * diff <= best.0 {
                    self.search(far, q, best);
                }
            }
        }
    }

    /// Linear scan with the same tie-break; used as a reference.
    pub fn nearest_linear(&self, query: &FeatureVector) -> Neighbor {
        let mut best = (f64::INFINITY, usize::MAX);
        for (i, p) in self.points.iter().enumerate() {
            let d = query.distance_squared(p);
            if d < best.0 {
                best = (d, i);
            }
        }
        Neighbor {
            index: best.1,
            distance_squared: best.0,
            payload: self.payloads[best.1],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_fv(rng: &mut ChaCha8Rng) -> FeatureVector {
        FeatureVector([rng.random(), rng.random(), rng.random(), rng.random::<f64>() * 0.1, rng.random::<f64>() * 0.1])
    }

    #[test]
    fn empty_index_is_error() {
        assert!(FeatureIndex::build(&[]).is_err());
    }

    #[test]
    fn single_anchor_answers_everything() {
        let idx = FeatureIndex::build(&[(FeatureVector([0.1, 0.2, 0.3, 0.0, 0.0]), 0.7)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let n = idx.nearest(&random_fv(&mut rng));
            assert_eq!((n.index, n.payload), (0, 0.7));
        }
    }

    #[test]
    fn self_match_has_zero_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<_> = (0..100).map(|i| (random_fv(&mut rng), i as f64)).collect();
        let idx = FeatureIndex::build(&pts).unwrap();
        for (i, (p, _)) in pts.iter().enumerate() {
            let n = idx.nearest(p);
            assert_eq!(n.index, i);
            assert_eq!(n.distance_squared, 0.0);
        }
    }

    #[test]
    fn matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<_> = (0..200).map(|i| (random_fv(&mut rng), i as f64)).collect();
        let idx = FeatureIndex::build(&pts).unwrap();
        for _ in 0..500 {
            let q = random_fv(&mut rng);
            assert_eq!(idx.nearest(&q), idx.nearest_linear(&q));
        }
    }

    #[test]
    fn duplicates_resolve_to_first_insertion() {
        let p = FeatureVector([0.5, 0.5, 0.5, 0.01, 0.02]);
        let mut pts: Vec<_> = (0..30).map(|i| (FeatureVector([i as f64 / 30.0, 0.1, 0.9, 0.0, 0.0]), 0.0)).collect();
        pts.push((p, 1.0));
        pts.push((p, 2.0));
        pts.push((p, 3.0));
        let idx = FeatureIndex::build(&pts).unwrap();
        let n = idx.nearest(&p);
        assert_eq!((n.index, n.payload), (30, 1.0));
    }
}
