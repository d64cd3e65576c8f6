//! Guttman R-tree with quadratic split over axis-aligned boxes.
//!
//! Leaves hold `(box, id)` pairs. Every internal entry's box is the union of
//! its child's entries, all leaves sit at the same depth and non-root nodes
//! hold between [`MIN_ENTRIES`] and [`MAX_ENTRIES`] entries.

use std::collections::HashMap;

use crate::error::{GmmapError, Result};
use crate::types::Aabb;

pub const MAX_ENTRIES: usize = 8;
pub const MIN_ENTRIES: usize = 2;

#[derive(Debug, Clone, Copy)]
struct Entry {
    bbox: Aabb,
    /// Gaussian id in leaves, node index in internal nodes.
    item: u64,
}

#[derive(Debug, Clone)]
struct Node {
    leaf: bool,
    entries: Vec<Entry>,
}

impl Node {
    fn bbox(&self) -> Option<Aabb> {
        self.entries
            .iter()
            .map(|e| e.bbox)
            .reduce(|a, b| a.union(&b))
    }
}

#[derive(Debug, Clone)]
pub struct RTree {
    nodes: Vec<Node>,
    free_nodes: Vec<usize>,
    root: usize,
    /// Number of node levels; a lone leaf root has height 1.
    height: usize,
    boxes: HashMap<u64, Aabb>,
}

impl Default for RTree {
    fn default() -> Self {
        Self::new()
    }
}

/// Volume with a small pad per axis so flat boxes still compare sensibly.
fn measure(b: &Aabb) -> f64 {
    let e = b.extent();
    (e.x + 1e-9) * (e.y + 1e-9) * (e.z + 1e-9)
}

fn enlargement(b: &Aabb, add: &Aabb) -> f64 {
    measure(&b.union(add)) - measure(b)
}

impl RTree {
    pub fn new() -> Self {
        RTree {
            nodes: vec![Node {
                leaf: true,
                entries: Vec::with_capacity(MAX_ENTRIES + 1),
            }],
            free_nodes: Vec::new(),
            root: 0,
            height: 1,
            boxes: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn contains(&self, id: u64) -> bool {
        self.boxes.contains_key(&id)
    }

    pub fn bbox_of(&self, id: u64) -> Option<Aabb> {
        self.boxes.get(&id).copied()
    }

    /// Bytes held by tree nodes (excluding the id lookup table).
    pub fn node_bytes(&self) -> usize {
        let live = self.nodes.len() - self.free_nodes.len();
        live * (std::mem::size_of::<Node>() + MAX_ENTRIES * std::mem::size_of::<Entry>())
    }

    pub fn insert(&mut self, bbox: Aabb, id: u64) -> Result<()> {
        if self.boxes.contains_key(&id) {
            return Err(GmmapError::DuplicateId(id));
        }
        self.boxes.insert(id, bbox);
        self.insert_entry(Entry { bbox, item: id }, 0);
        Ok(())
    }

    pub fn remove(&mut self, id: u64) -> Result<Aabb> {
        let bbox = self.boxes.remove(&id).ok_or(GmmapError::MissingId(id))?;
        let path = self
            .find_leaf(self.root, &bbox, id)
            .expect("id table and tree out of sync");
        let leaf = *path.last().unwrap();
        self.nodes[leaf].entries.retain(|e| e.item != id);
        self.condense(path);
        Ok(bbox)
    }

    /// Ids of all stored boxes that overlap `query` (touching counts).
    pub fn search_intersecting(&self, query: &Aabb) -> Vec<u64> {
        let mut out = Vec::new();
        let mut stack = vec![self.root];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            for e in node.entries.iter().filter(|e| e.bbox.intersects(query)) {
                if node.leaf {
                    out.push(e.item);
                } else {
                    stack.push(e.item as usize);
                }
            }
        }
        out
    }

    /// Ids of all stored boxes containing `p`.
    pub fn search_point(&self, p: &crate::types::Vec3) -> Vec<u64> {
        let mut out = Vec::new();
        let mut stack = vec![self.root];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            for e in node.entries.iter().filter(|e| e.bbox.contains_point(p)) {
                if node.leaf {
                    out.push(e.item);
                } else {
                    stack.push(e.item as usize);
                }
            }
        }
        out
    }

    /// Union of every stored box, `None` when empty.
    pub fn root_box(&self) -> Option<Aabb> {
        self.nodes[self.root].bbox()
    }

    fn alloc(&mut self, node: Node) -> usize {
        match self.free_nodes.pop() {
            Some(i) => {
                self.nodes[i] = node;
                i
            }
            None => {
                self.nodes.push(node);
                self.nodes.len() - 1
            }
        }
    }

    fn release(&mut self, idx: usize) {
        self.nodes[idx].entries.clear();
        self.free_nodes.push(idx);
    }

    /// Places `entry` in a node `level` levels above the leaves
    /// (0 = leaf), splitting upward as needed.
    fn insert_entry(&mut self, entry: Entry, level: usize) {
        let target_depth = self.height - 1 - level;
        let mut path = vec![self.root];
        for _ in 0..target_depth {
            let node = &self.nodes[*path.last().unwrap()];
            let best = node
                .entries
                .iter()
                .min_by(|a, b| {
                    let ea = enlargement(&a.bbox, &entry.bbox);
                    let eb = enlargement(&b.bbox, &entry.bbox);
                    ea.total_cmp(&eb)
                        .then(measure(&a.bbox).total_cmp(&measure(&b.bbox)))
                })
                .expect("internal node without entries");
            path.push(best.item as usize);
        }

        let target = *path.last().unwrap();
        self.nodes[target].entries.push(entry);

        let mut split: Option<Entry> = None;
        for depth in (0..path.len()).rev() {
            let n = path[depth];
            if let Some(sibling) = split.take() {
                self.nodes[n].entries.push(sibling);
            }
            if self.nodes[n].entries.len() > MAX_ENTRIES {
                let new_idx = self.split_node(n);
                split = Some(Entry {
                    bbox: self.nodes[new_idx].bbox().unwrap(),
                    item: new_idx as u64,
                });
            }
            if depth > 0 {
                let parent = path[depth - 1];
                let bbox = self.nodes[n].bbox().unwrap();
                let slot = self.nodes[parent]
                    .entries
                    .iter_mut()
                    .find(|e| e.item == n as u64)
                    .unwrap();
                slot.bbox = bbox;
            }
        }

        if let Some(sibling) = split {
            let old_root = self.root;
            let root_entry = Entry {
                bbox: self.nodes[old_root].bbox().unwrap(),
                item: old_root as u64,
            };
            let mut entries = Vec::with_capacity(MAX_ENTRIES + 1);
            entries.push(root_entry);
            entries.push(sibling);
            self.root = self.alloc(Node {
                leaf: false,
                entries,
            });
            self.height += 1;
        }
    }

    /// Quadratic split: moves part of node `n`'s entries into a new node,
    /// returning the new node's index.
    fn split_node(&mut self, n: usize) -> usize {
        let leaf = self.nodes[n].leaf;
        let mut pending = std::mem::take(&mut self.nodes[n].entries);

        let (mut s1, mut s2, mut worst) = (0, 1, f64::NEG_INFINITY);
        for i in 0..pending.len() {
            for j in i + 1..pending.len() {
                let d = measure(&pending[i].bbox.union(&pending[j].bbox))
                    - measure(&pending[i].bbox)
                    - measure(&pending[j].bbox);
                if d > worst {
                    worst = d;
                    s1 = i;
                    s2 = j;
                }
            }
        }
        let seed2 = pending.remove(s2);
        let seed1 = pending.remove(s1);
        let mut g1 = vec![seed1];
        let mut g2 = vec![seed2];
        let mut b1 = seed1.bbox;
        let mut b2 = seed2.bbox;

        while !pending.is_empty() {
            if g1.len() + pending.len() == MIN_ENTRIES {
                for e in pending.drain(..) {
                    b1 = b1.union(&e.bbox);
                    g1.push(e);
                }
                break;
            }
            if g2.len() + pending.len() == MIN_ENTRIES {
                for e in pending.drain(..) {
                    b2 = b2.union(&e.bbox);
                    g2.push(e);
                }
                break;
            }
            let (pick, _) = pending
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    let d1 = enlargement(&b1, &e.bbox);
                    let d2 = enlargement(&b2, &e.bbox);
                    (i, (d1 - d2).abs())
                })
                .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
            let e = pending.remove(pick);
            let d1 = enlargement(&b1, &e.bbox);
            let d2 = enlargement(&b2, &e.bbox);
            let to_first = d1
                .total_cmp(&d2)
                .then(measure(&b1).total_cmp(&measure(&b2)))
                .then(g1.len().cmp(&g2.len()))
                .is_le();
            if to_first {
                b1 = b1.union(&e.bbox);
                g1.push(e);
            } else {
                b2 = b2.union(&e.bbox);
                g2.push(e);
            }
        }

        g1.reserve(MAX_ENTRIES + 1 - g1.len().min(MAX_ENTRIES + 1));
        g2.reserve(MAX_ENTRIES + 1 - g2.len().min(MAX_ENTRIES + 1));
        self.nodes[n].entries = g1;
        self.alloc(Node { leaf, entries: g2 })
    }

    /// Path of node indices from `node` down to the leaf holding `id`.
    fn find_leaf(&self, node: usize, bbox: &Aabb, id: u64) -> Option<Vec<usize>> {
        let n = &self.nodes[node];
        if n.leaf {
            return n.entries.iter().any(|e| e.item == id).then(|| vec![node]);
        }
        for e in n.entries.iter().filter(|e| e.bbox.contains(bbox)) {
            if let Some(mut path) = self.find_leaf(e.item as usize, bbox, id) {
                path.insert(0, node);
                return Some(path);
            }
        }
        None
    }

    fn condense(&mut self, path: Vec<usize>) {
        // (entry, level of the node it must live in)
        let mut orphans: Vec<(Entry, usize)> = Vec::new();
        for depth in (1..path.len()).rev() {
            let n = path[depth];
            let parent = path[depth - 1];
            let level = path.len() - 1 - depth;
            if self.nodes[n].entries.len() < MIN_ENTRIES {
                self.nodes[parent].entries.retain(|e| e.item != n as u64);
                orphans.extend(self.nodes[n].entries.iter().map(|e| (*e, level)));
                self.release(n);
            } else {
                let bbox = self.nodes[n].bbox().unwrap();
                if let Some(slot) = self.nodes[parent]
                    .entries
                    .iter_mut()
                    .find(|e| e.item == n as u64)
                {
                    slot.bbox = bbox;
                }
            }
        }
        for (entry, level) in orphans {
            self.insert_entry(entry, level);
        }
        while !self.nodes[self.root].leaf && self.nodes[self.root].entries.len() == 1 {
            let old = self.root;
            self.root = self.nodes[old].entries[0].item as usize;
            self.release(old);
            self.height -= 1;
        }
        if !self.nodes[self.root].leaf && self.nodes[self.root].entries.is_empty() {
            self.nodes[self.root].leaf = true;
            self.height = 1;
        }
    }

    /// Verifies structural invariants; returns a description of the first
    /// violation.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let mut leaf_depth = None;
        let mut count = 0usize;
        let mut stack = vec![(self.root, 0usize)];
        while let Some((n, depth)) = stack.pop() {
            let node = &self.nodes[n];
            if n != self.root && !(MIN_ENTRIES..=MAX_ENTRIES).contains(&node.entries.len()) {
                return Err(format!("node {n} has {} entries", node.entries.len()));
            }
            if node.entries.len() > MAX_ENTRIES {
                return Err(format!("root has {} entries", node.entries.len()));
            }
            if node.leaf {
                match leaf_depth {
                    None => leaf_depth = Some(depth),
                    Some(d) if d != depth => return Err("leaves at unequal depth".into()),
                    _ => {}
                }
                for e in &node.entries {
                    if self.boxes.get(&e.item) != Some(&e.bbox) {
                        return Err(format!("leaf entry {} disagrees with id table", e.item));
                    }
                }
                count += node.entries.len();
            } else {
                for e in &node.entries {
                    let child = &self.nodes[e.item as usize];
                    match child.bbox() {
                        Some(b) if e.bbox.contains(&b) => {}
                        _ => return Err(format!("entry box of node {} does not cover child", e.item)),
                    }
                    stack.push((e.item as usize, depth + 1));
                }
            }
        }
        if leaf_depth.map_or(1, |d| d + 1) != self.height {
            return Err("height bookkeeping is wrong".into());
        }
        if count != self.boxes.len() {
            return Err(format!("{count} leaf entries for {} ids", self.boxes.len()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Vec3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn random_box(rng: &mut ChaCha8Rng) -> Aabb {
        let min = Vec3::new(
            rng.random_range(-10.0..10.0),
            rng.random_range(-10.0..10.0),
            rng.random_range(-10.0..10.0),
        );
        let ext = Vec3::new(
            rng.random_range(0.0..2.0),
            rng.random_range(0.0..2.0),
            rng.random_range(0.0..2.0),
        );
        Aabb::new(min, min + ext)
    }

    fn brute(oracle: &BTreeMap<u64, Aabb>, q: &Aabb) -> Vec<u64> {
        oracle
            .iter()
            .filter(|(_, b)| b.intersects(q))
            .map(|(id, _)| *id)
            .collect()
    }

    fn sorted(mut v: Vec<u64>) -> Vec<u64> {
        v.sort_unstable();
        v
    }

    #[test]
    fn single_box() {
        let mut t = RTree::new();
        let b = Aabb::new(Vec3::zeros(), Vec3::repeat(1.0));
        t.insert(b, 7).unwrap();
        assert_eq!(t.search_intersecting(&b), vec![7]);
        assert_eq!(t.root_box(), Some(b));
        let far = Aabb::new(Vec3::repeat(5.0), Vec3::repeat(6.0));
        assert!(t.search_intersecting(&far).is_empty());
        assert!(matches!(t.insert(b, 7), Err(GmmapError::DuplicateId(7))));
    }

    #[test]
    fn empty_tree() {
        let mut t = RTree::new();
        assert!(t.search_intersecting(&Aabb::universe()).is_empty());
        assert_eq!(t.root_box(), None);
        assert!(matches!(t.remove(3), Err(GmmapError::MissingId(3))));
    }

    #[test]
    fn two_box_root() {
        let mut t = RTree::new();
        t.insert(Aabb::new(Vec3::zeros(), Vec3::repeat(1.0)), 0).unwrap();
        t.insert(Aabb::new(Vec3::new(-1.0, 2.0, 0.5), Vec3::new(0.0, 3.0, 4.0)), 1)
            .unwrap();
        let r = t.root_box().unwrap();
        assert_eq!(r.min, Vec3::new(-1.0, 0.0, 0.0));
        assert_eq!(r.max, Vec3::new(1.0, 3.0, 4.0));
    }

    #[test]
    fn random_inserts_match_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut t = RTree::new();
        let mut oracle = BTreeMap::new();
        for id in 0..100 {
            let b = random_box(&mut rng);
            t.insert(b, id).unwrap();
            oracle.insert(id, b);
        }
        t.check_invariants().unwrap();
        for _ in 0..200 {
            let q = random_box(&mut rng);
            assert_eq!(sorted(t.search_intersecting(&q)), brute(&oracle, &q));
        }
        assert_eq!(sorted(t.search_intersecting(&Aabb::universe())), (0..100).collect::<Vec<_>>());
        let fold = oracle.values().copied().reduce(|a, b| a.union(&b)).unwrap();
        assert_eq!(t.root_box(), Some(fold));
    }

    #[test]
    fn remove_then_query() {
        let mut t = RTree::new();
        let b = Aabb::new(Vec3::zeros(), Vec3::repeat(1.0));
        t.insert(b, 1).unwrap();
        t.remove(1).unwrap();
        assert!(t.search_intersecting(&b).is_empty());
        assert!(t.is_empty());
        assert_eq!(t.root_box(), None);
        t.check_invariants().unwrap();
    }

    #[test]
    fn interleaved_operations_match_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut t = RTree::new();
        let mut oracle = BTreeMap::new();
        let mut next = 0u64;
        for step in 0..1000 {
            if oracle.is_empty() || rng.random_bool(0.6) {
                let b = random_box(&mut rng);
                t.insert(b, next).unwrap();
                oracle.insert(next, b);
                next += 1;
            } else {
                let k = rng.random_range(0..oracle.len());
                let id = *oracle.keys().nth(k).unwrap();
                assert_eq!(t.remove(id).unwrap(), oracle.remove(&id).unwrap());
            }
            if step % 50 == 0 {
                t.check_invariants().unwrap();
            }
            let q = random_box(&mut rng);
            assert_eq!(sorted(t.search_intersecting(&q)), brute(&oracle, &q));
        }
        t.check_invariants().unwrap();
        let n = t.len().max(2) as f64;
        assert!(t.height() <= n.log2().ceil() as usize + 2);
        // Drain everything.
        let ids: Vec<u64> = oracle.keys().copied().collect();
        for id in ids {
            t.remove(id).unwrap();
        }
        t.check_invariants().unwrap();
        assert!(t.is_empty());
        assert_eq!(t.height(), 1);
    }

    #[test]
    fn height_stays_logarithmic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut t = RTree::new();
        for id in 0..5000 {
            t.insert(random_box(&mut rng), id).unwrap();
        }
        t.check_invariants().unwrap();
        assert!(t.height() <= (5000f64).log2().ceil() as usize + 2);
    }

    #[test]
    fn degenerate_boxes_are_indexed() {
        let mut t = RTree::new();
        for id in 0..50 {
            let p = Vec3::new(id as f64, 0.0, 0.0);
            t.insert(Aabb::from_point(p), id).unwrap();
        }
        t.check_invariants().unwrap();
        assert_eq!(t.search_point(&Vec3::new(10.0, 0.0, 0.0)), vec![10]);
    }
}
