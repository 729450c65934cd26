//! Overlap graph and intersection/complement decomposition of instance masks.
//!
//! For an instance mask `e` among same-class neighbours, the intersection
//! layer is `o = e ∩ (∪ others)` and the complement layer is `m = e \ o`.
//! Any single shared pixel counts as overlap.

use std::collections::{BTreeMap, BTreeSet};

use crate::annotation::{CellClass, ImageAnnotation, InstanceAnnotation};
use crate::error::Result;
use crate::raster::BitMask;

/// Undirected graph of instances with at least one shared pixel.
///
/// Edges are stored once under `(min id, max id)`, which makes the graph
/// symmetric by construction.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OverlapGraph {
    nodes: BTreeSet<u64>,
    edges: BTreeMap<(u64, u64), u64>,
}

impl OverlapGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, id: u64) {
        self.nodes.insert(id);
    }

    /// Adds (or overwrites) the edge `{a, b}` with `weight` shared pixels.
    /// Self-loops and zero weights are ignored.
    pub fn add_edge(&mut self, a: u64, b: u64, weight: u64) {
        if a == b || weight == 0 {
            return;
        }
        self.nodes.insert(a);
        self.nodes.insert(b);
        self.edges.insert((a.min(b), a.max(b)), weight);
    }

    pub fn nodes(&self) -> impl Iterator<Item = u64> + '_ {
        self.nodes.iter().copied()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(low id, high id, shared pixels)`, sorted.
    pub fn edges(&self) -> impl Iterator<Item = (u64, u64, u64)> + '_ {
        self.edges.iter().map(|(&(a, b), &w)| (a, b, w))
    }

    pub fn weight(&self, a: u64, b: u64) -> Option<u64> {
        self.edges.get(&(a.min(b), a.max(b))).copied()
    }

    pub fn neighbors(&self, id: u64) -> impl Iterator<Item = u64> + '_ {
        self.edges.keys().filter_map(move |&(a, b)| {
            if a == id {
                Some(b)
            } else if b == id {
                Some(a)
            } else {
                None
            }
        })
    }

    pub fn is_isolated(&self, id: u64) -> bool {
        self.neighbors(id).next().is_none()
    }

    /// Connected components ("clusters"), each sorted, ordered by smallest id.
    pub fn clusters(&self) -> Vec<Vec<u64>> {
        let index: BTreeMap<u64, usize> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, &n)| (n, i))
            .collect();
        let mut parent: Vec<usize> = (0..self.nodes.len()).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for &(a, b) in self.edges.keys() {
            let (ra, rb) = (find(&mut parent, index[&a]), find(&mut parent, index[&b]));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        let mut groups: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
        for (&id, &i) in &index {
            let root = find(&mut parent, i);
            groups.entry(root).or_default().push(id);
        }
        groups.into_values().collect()
    }
}

/// Intersection and complement layers of one instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionLayers {
    pub intersection: BitMask,
    pub complement: BitMask,
}

impl RegionLayers {
    /// Reassembles the instance mask, `o ∪ m`.
    pub fn instance(&self) -> BitMask {
        self.intersection
            .union(&self.complement)
            .expect("layers share dimensions")
    }
}

/// Per-instance layers for one class of one image, plus its overlap graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterDecomposition {
    pub class: CellClass,
    pub layers: BTreeMap<u64, RegionLayers>,
    pub graph: OverlapGraph,
}

impl ClusterDecomposition {
    pub fn get(&self, id: u64) -> Option<&RegionLayers> {
        self.layers.get(&id)
    }

    /// Union of all intersection layers: the pixels covered at least twice.
    pub fn overlap_region(&self, width: usize, height: usize) -> BitMask {
        let mut acc = BitMask::empty(width, height);
        for layers in self.layers.values() {
            acc.union_with(&layers.intersection)
                .expect("layers share image dimensions");
        }
        acc
    }
}

/// Pairwise overlap graph over instances, optionally restricted to one class.
pub fn build_overlap_graph(ann: &ImageAnnotation, class_filter: Option<CellClass>) -> OverlapGraph {
    let selected: Vec<&InstanceAnnotation> = ann
        .instances()
        .iter()
        .filter(|i| class_filter.is_none_or(|c| i.class == c))
        .collect();
    let mut graph = OverlapGraph::new();
    for (i, a) in selected.iter().enumerate() {
        graph.add_node(a.id);
        for b in &selected[i + 1..] {
            if !a.bbox().intersects(&b.bbox()) {
                continue;
            }
            let shared = a
                .mask()
                .intersection_area(b.mask())
                .expect("image annotation guarantees equal dimensions");
            graph.add_edge(a.id, b.id, shared);
        }
    }
    graph
}

/// Splits `target` into `(intersection, complement)` against `others`.
pub fn decompose_instance(
    target: &InstanceAnnotation,
    others: &[InstanceAnnotation],
) -> Result<(BitMask, BitMask)> {
    let e = target.mask();
    let mut covered = BitMask::empty(e.width(), e.height());
    for other in others {
        covered.union_with(other.mask())?;
    }
    let intersection = e.intersect(&covered)?;
    let complement = e.difference(&intersection)?;
    Ok((intersection, complement))
}

/// Decomposes every instance of `class` against the other instances of the same class.
pub fn decompose_image(ann: &ImageAnnotation, class: CellClass) -> ClusterDecomposition {
    let (w, h) = (ann.width(), ann.height());
    // pixels covered by at least one / at least two masks
    let mut once = BitMask::empty(w, h);
    let mut twice = BitMask::empty(w, h);
    for inst in ann.of_class(class) {
        let both = once.intersect(inst.mask()).expect("validated dimensions");
        twice.union_with(&both).expect("validated dimensions");
        once.union_with(inst.mask()).expect("validated dimensions");
    }
    let layers = ann
        .of_class(class)
        .map(|inst| {
            let intersection = inst.mask().intersect(&twice).expect("validated dimensions");
            let complement = inst
                .mask()
                .difference(&twice)
                .expect("validated dimensions");
            (
                inst.id,
                RegionLayers {
                    intersection,
                    complement,
                },
            )
        })
        .collect();
    ClusterDecomposition {
        class,
        layers,
        graph: build_overlap_graph(ann, Some(class)),
    }
}
