//! Colored weighted graphs of crystal networks.
//!
//! A crystal-only setup maps to an undirected graph: one vertex per final
//! path, one edge per crystal, edge endpoints colored by the emission modes
//! and the edge weight carrying the crystal amplitude. Perfect matchings of
//! the graph are exactly the crystal subsets that fire one pair into every
//! detector, so the post-selected collision-free state is read off matching
//! by matching without running the full simulation.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::element::{expand_emission, Bindings, Element};
use crate::engine::ExperimentSetup;
use crate::fock::{InternalMode, ModeLabel, Monomial, Path, PureState, Term};
use crate::fock::OperatorPolynomial;
use crate::{sig9_complex, Error, Result, C64};

/// Undirected edge between vertex indices `u < v`. The endpoint colors are
/// the internal modes the corresponding crystal emits into each path.
#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub color_u: InternalMode,
    pub color_v: InternalMode,
    pub weight: C64,
}

/// A perfect matching, stored as sorted edge indices.
pub type Matching = Vec<usize>;

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ColoredWeightedGraph {
    vertices: Vec<Path>,
    edges: Vec<Edge>,
}

impl ColoredWeightedGraph {
    pub fn new(vertices: Vec<Path>) -> Result<Self> {
        for (i, v) in vertices.iter().enumerate() {
            if vertices[i + 1..].contains(v) {
                return Err(Error::DuplicateVertex(v.clone()));
            }
        }
        Ok(ColoredWeightedGraph {
            vertices,
            edges: Vec::new(),
        })
    }

    pub fn vertices(&self) -> &[Path] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn vertex_index(&self, path: &Path) -> Option<usize> {
        self.vertices.iter().position(|v| v == path)
    }

    /// Adds an edge; endpoints are normalized so the lower index comes
    /// first. Parallel edges are allowed as long as they differ in colors
    /// or weight; an exact duplicate is rejected.
    pub fn add_edge(
        &mut self,
        u: &Path,
        v: &Path,
        color_u: InternalMode,
        color_v: InternalMode,
        weight: C64,
    ) -> Result<()> {
        let ui = self
            .vertex_index(u)
            .ok_or_else(|| Error::UnknownVertex(u.clone()))?;
        let vi = self
            .vertex_index(v)
            .ok_or_else(|| Error::UnknownVertex(v.clone()))?;
        if ui == vi {
            return Err(Error::SelfLoop(u.clone()));
        }
        let (ui, vi, color_u, color_v) = if ui < vi {
            (ui, vi, color_u, color_v)
        } else {
            (vi, ui, color_v, color_u)
        };
        let dup = self.edges.iter().any(|e| {
            e.u == ui && e.v == vi && e.color_u == color_u && e.color_v == color_v
                && e.weight == weight
        });
        if dup {
            return Err(Error::DuplicateEdge(
                self.vertices[ui].clone(),
                self.vertices[vi].clone(),
            ));
        }
        self.edges.push(Edge {
            u: ui,
            v: vi,
            color_u,
            color_v,
            weight,
        });
        Ok(())
    }

    /// Like [`add_edge`](Self::add_edge), but a parallel edge with the same
    /// color pair accumulates into the existing weight instead of being kept
    /// separate. Amplitudes of indistinguishable emissions add, so this is
    /// the right composition rule when translating experiments.
    fn merge_edge(
        &mut self,
        ui: usize,
        vi: usize,
        color_u: InternalMode,
        color_v: InternalMode,
        weight: C64,
    ) {
        debug_assert_ne!(ui, vi);
        let (ui, vi, color_u, color_v) = if ui < vi {
            (ui, vi, color_u, color_v)
        } else {
            (vi, ui, color_v, color_u)
        };
        match self
            .edges
            .iter_mut()
            .find(|e| e.u == ui && e.v == vi && e.color_u == color_u && e.color_v == color_v)
        {
            Some(e) => e.weight += weight,
            None => self.edges.push(Edge {
                u: ui,
                v: vi,
                color_u,
                color_v,
                weight,
            }),
        }
    }

    /// All perfect matchings, each a sorted list of edge indices. Vertices
    /// are paired off starting from the lowest uncovered index, so the
    /// enumeration order is deterministic. Odd vertex counts have none.
    pub fn perfect_matchings(&self) -> Vec<Matching> {
        let n = self.vertices.len();
        if n % 2 == 1 {
            return Vec::new();
        }
        let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, e) in self.edges.iter().enumerate() {
            incident[e.u].push(i);
            incident[e.v].push(i);
        }
        let mut out = Vec::new();
        let mut covered = vec![false; n];
        let mut current = Vec::with_capacity(n / 2);
        self.match_from(&incident, &mut covered, &mut current, &mut out);
        out
    }

    fn match_from(
        &self,
        incident: &[Vec<usize>],
        covered: &mut [bool],
        current: &mut Vec<usize>,
        out: &mut Vec<Matching>,
    ) {
        let Some(lowest) = covered.iter().position(|c| !c) else {
            let mut m = current.clone();
            m.sort_unstable();
            out.push(m);
            return;
        };
        for &ei in &incident[lowest] {
            let e = &self.edges[ei];
            let other = if e.u == lowest { e.v } else { e.u };
            if covered[other] {
                continue;
            }
            covered[lowest] = true;
            covered[other] = true;
            current.push(ei);
            self.match_from(incident, covered, current, out);
            current.pop();
            covered[lowest] = false;
            covered[other] = false;
        }
    }

    /// Product of the edge weights of a matching.
    pub fn matching_weight(&self, matching: &Matching) -> C64 {
        matching
            .iter()
            .map(|&i| self.edges[i].weight)
            .product()
    }

    /// Sum of matching weights over all perfect matchings: the hafnian of
    /// the weighted adjacency matrix.
    pub fn weighted_matching_sum(&self) -> C64 {
        self.perfect_matchings()
            .iter()
            .map(|m| self.matching_weight(m))
            .sum()
    }

    /// The collision-free post-selected state of the network: every perfect
    /// matching deposits its weight on the mode assignment given by its
    /// endpoint colors. Matchings that color the same photon configuration
    /// interfere. The formal order is the matching size (pairs emitted).
    pub fn to_state(&self) -> PureState {
        let n = self.vertices.len();
        let order = (n / 2) as u32;
        let mut poly = OperatorPolynomial::zero(order.max(1));
        for m in self.perfect_matchings() {
            let mut labels = Vec::with_capacity(n);
            for &ei in &m {
                let e = &self.edges[ei];
                labels.push(ModeLabel::new(
                    self.vertices[e.u].clone(),
                    e.color_u.clone(),
                ));
                labels.push(ModeLabel::new(
                    self.vertices[e.v].clone(),
                    e.color_v.clone(),
                ));
            }
            poly.add_term(Term::new(order, Monomial::new(labels)), self.matching_weight(&m));
        }
        PureState { poly }
    }

    /// GraphViz export. Vertices and edges appear in insertion order, and
    /// weights are printed with fixed precision, so the output is byte
    /// stable for a given graph.
    pub fn dot(&self) -> String {
        let mut s = String::from("graph network {\n");
        for v in &self.vertices {
            writeln!(s, "  \"{v}\";").unwrap();
        }
        for e in &self.edges {
            writeln!(
                s,
                "  \"{}\" -- \"{}\" [label=\"{} {}|{}\"];",
                self.vertices[e.u],
                self.vertices[e.v],
                sig9_complex(e.weight),
                e.color_u,
                e.color_v,
            )
            .unwrap();
        }
        s.push_str("}\n");
        s
    }
}

/// See [`ColoredWeightedGraph::to_state`].
pub fn state_from_graph(graph: &ColoredWeightedGraph) -> PureState {
    graph.to_state()
}

/// Translates a crystal network into its graph. Only crystals, phase
/// shifters, mode shifters, and path identifications have a graph meaning;
/// anything else is rejected. Elements act on the edges present when they
/// appear: a phase shifter multiplies the weight of each existing edge with
/// an endpoint on its path (once per endpoint), a mode shifter adds to the
/// endpoint colors, and an identification relabels endpoints. Parallel
/// emissions into the same path pair with the same colors merge by weight
/// addition.
pub fn from_experiment(
    setup: &ExperimentSetup,
    overrides: &Bindings,
) -> Result<ColoredWeightedGraph> {
    setup.validate()?;
    let bindings = setup.bound(overrides)?;

    struct WorkEdge {
        u: Path,
        color_u: InternalMode,
        v: Path,
        color_v: InternalMode,
        weight: C64,
    }
    let mut edges: Vec<WorkEdge> = Vec::new();

    for el in setup.normalized_elements() {
        match el {
            Element::Crystal {
                a,
                b,
                mode_a,
                mode_b,
                gain,
                phase,
            } => {
                if a == b {
                    return Err(Error::CrystalSamePath(a.clone()));
                }
                let w = C64::from_polar(gain.eval(&bindings)?, phase.eval(&bindings)?);
                for (la, ca) in expand_emission(&a, &mode_a) {
                    for (lb, cb) in expand_emission(&b, &mode_b) {
                        edges.push(WorkEdge {
                            u: la.path.clone(),
                            color_u: la.mode.clone(),
                            v: lb.path.clone(),
                            color_v: lb.mode.clone(),
                            weight: w * ca * cb,
                        });
                    }
                }
            }
            Element::Phase { path, phase } => {
                let ph = C64::from_polar(1.0, phase.eval(&bindings)?);
                for e in &mut edges {
                    if e.u == path {
                        e.weight *= ph;
                    }
                    if e.v == path {
                        e.weight *= ph;
                    }
                }
            }
            Element::OamShift { path, delta } => {
                for e in &mut edges {
                    if e.u == path {
                        e.color_u.oam += delta;
                    }
                    if e.v == path {
                        e.color_v.oam += delta;
                    }
                }
            }
            Element::Identify { from, to } => {
                for e in &mut edges {
                    if e.u == from {
                        e.u = to.clone();
                    }
                    if e.v == from {
                        e.v = to.clone();
                    }
                    if e.u == e.v {
                        return Err(Error::SelfLoop(e.u.clone()));
                    }
                }
            }
            other => return Err(Error::UnsupportedElement(other.name())),
        }
    }

    let mut vertex_set: BTreeSet<Path> = setup.detectors.iter().cloned().collect();
    for e in &edges {
        vertex_set.insert(e.u.clone());
        vertex_set.insert(e.v.clone());
    }
    let mut graph = ColoredWeightedGraph::new(vertex_set.into_iter().collect())?;
    for e in edges {
        let ui = graph.vertex_index(&e.u).expect("endpoint was inserted");
        let vi = graph.vertex_index(&e.v).expect("endpoint was inserted");
        graph.merge_edge(ui, vi, e.color_u, e.color_v, e.weight);
    }
    Ok(graph)
}

/// Permanent of a square complex matrix by Ryser's inclusion-exclusion
/// formula. Exponential in the dimension; intended for small matrices.
pub fn permanent(matrix: &[Vec<C64>]) -> C64 {
    let n = matrix.len();
    for row in matrix {
        assert_eq!(row.len(), n, "permanent needs a square matrix");
    }
    if n == 0 {
        return C64::new(1.0, 0.0);
    }
    assert!(n <= 20, "permanent limited to dimension 20");
    let mut total = C64::new(0.0, 0.0);
    for subset in 1u64..(1 << n) {
        let parity = if (n as u32 - subset.count_ones()) % 2 == 0 {
            1.0
        } else {
            -1.0
        };
        let mut prod = C64::new(1.0, 0.0);
        for row in matrix {
            let mut sum = C64::new(0.0, 0.0);
            for (j, a) in row.iter().enumerate() {
                if subset >> j & 1 == 1 {
                    sum += a;
                }
            }
            prod *= sum;
        }
        total += parity * prod;
    }
    total
}

/// Outcome of [`ghz_feasibility_search`].
#[derive(Clone, Debug, PartialEq)]
pub enum Feasibility {
    /// A graph on `n` vertices with exactly `d` perfect matchings, all
    /// pairwise edge-disjoint. `edges` is the witness edge set.
    Feasible {
        n: usize,
        d: usize,
        edges: Vec<(usize, usize)>,
    },
    /// No such graph exists; `searched` counts the edge subsets examined.
    Infeasible { n: usize, d: usize, searched: u64 },
}

/// Exhaustively searches subgraphs of the complete graph on `n` vertices for
/// one with exactly `d` perfect matchings that are pairwise edge-disjoint:
/// the structure a maximally entangled `d`-outcome state on `n` photons
/// requires. `n` must be even and at most `bound` (the search is exponential
/// in `n(n-1)/2`). The scan order is fixed, so the witness is reproducible.
pub fn ghz_feasibility_search(n: usize, d: usize, bound: usize) -> Result<Feasibility> {
    if n == 0 || n % 2 != 0 {
        return Err(Error::invalid(format!(
            "feasibility search needs a positive even vertex count, got {n}"
        )));
    }
    if n > bound {
        return Err(Error::SearchBound(n, bound));
    }
    if d < 2 {
        return Err(Error::invalid(format!(
            "feasibility search needs at least two matchings, got {d}"
        )));
    }
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let pm_masks = complete_matching_masks(n, &pairs);
    let total: u64 = 1u64 << pairs.len();
    let feasible = |mask: u64| -> bool {
        let mut found = 0usize;
        let mut union: u64 = 0;
        for &pm in &pm_masks {
            if pm & mask == pm {
                found += 1;
                if found > d || union & pm != 0 {
                    return false;
                }
                union |= pm;
            }
        }
        found == d
    };
    let hit = (0..total).into_par_iter().find_first(|&mask| feasible(mask));
    Ok(match hit {
        Some(mask) => Feasibility::Feasible {
            n,
            d,
            edges: pairs
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, p)| *p)
                .collect(),
        },
        None => Feasibility::Infeasible {
            n,
            d,
            searched: total,
        },
    })
}

/// Perfect matchings of the complete graph on `n` vertices, as bitmasks over
/// the canonical pair list.
fn complete_matching_masks(n: usize, pairs: &[(usize, usize)]) -> Vec<u64> {
    fn index_of(pairs: &[(usize, usize)], p: (usize, usize)) -> usize {
        pairs.iter().position(|&q| q == p).expect("pair listed")
    }
    fn recurse(
        n: usize,
        pairs: &[(usize, usize)],
        covered: &mut [bool],
        mask: u64,
        out: &mut Vec<u64>,
    ) {
        let Some(lowest) = covered.iter().position(|c| !c) else {
            out.push(mask);
            return;
        };
        for other in lowest + 1..n {
            if covered[other] {
                continue;
            }
            covered[lowest] = true;
            covered[other] = true;
            let bit = 1u64 << index_of(pairs, (lowest, other));
            recurse(n, pairs, covered, mask | bit, out);
            covered[lowest] = false;
            covered[other] = false;
        }
    }
    let mut out = Vec::new();
    recurse(n, pairs, &mut vec![false; n], 0, &mut out);
    out
}

/// A randomly sampled nonlocal network. Every pair of the `n` parties is a
/// potential source; a present edge carries amplitude `edge_amplitude` and
/// an absent one is bookkept with `absent_amplitude` so the two branches of
/// each source stay normalized.
#[derive(Clone, Debug)]
pub struct RandomNetwork {
    pub graph: ColoredWeightedGraph,
    pub edge_amplitude: f64,
    pub absent_amplitude: f64,
}

/// Builds the network on `n` parties with per-edge amplitude `p`. Without a
/// seed every edge of the complete graph is present with weight `p`; with a
/// seed each edge is kept independently with probability `p` (same weight),
/// reproducibly for a given seed value.
pub fn random_network(n: usize, p: f64, seed: Option<u64>) -> Result<RandomNetwork> {
    if n < 2 {
        return Err(Error::invalid(format!(
            "a network needs at least two parties, got {n}"
        )));
    }
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(Error::invalid(format!(
            "edge amplitude must lie in [0, 1], got {p}"
        )));
    }
    let vertices: Vec<Path> = (0..n).map(|i| Path::new(format!("v{i}"))).collect();
    let mut graph = ColoredWeightedGraph::new(vertices.clone())?;
    let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
    for i in 0..n {
        for j in i + 1..n {
            let keep = match &mut rng {
                Some(rng) => rng.gen::<f64>() < p,
                None => true,
            };
            if keep {
                graph.add_edge(
                    &vertices[i],
                    &vertices[j],
                    InternalMode::plain(),
                    InternalMode::plain(),
                    C64::new(p, 0.0),
                )?;
            }
        }
    }
    Ok(RandomNetwork {
        graph,
        edge_amplitude: p,
        absent_amplitude: (1.0 - p * p).max(0.0).sqrt(),
    })
}
