//! Deterministic 2D depiction coordinates (Å).
//!
//! Rings are drawn as regular polygons, fused rings are grown outward from a
//! shared edge, chains zig-zag at 120°, and substituents are spread evenly
//! through the largest free angular gap around their parent. Collisions are
//! resolved by rotating branches in ±10° steps up to ±30°.

use std::collections::{BTreeSet, VecDeque};
use std::f64::consts::PI;

use thiserror::Error;

use crate::molgraph::Molecule;

pub const DEFAULT_BOND_LENGTH: f64 = 1.5;
/// Closest allowed approach of two non-bonded atoms.
pub const MIN_NONBONDED_DISTANCE: f64 = 0.9;
/// Horizontal gap between disconnected fragments.
pub const FRAGMENT_GAP: f64 = 3.0;

const TWEAK_STEPS: [f64; 6] = [10.0, -10.0, 20.0, -20.0, 30.0, -30.0];
const MAX_REPAIR_ROUNDS: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LayoutError {
    #[error("atoms {a} and {b} overlap ({distance:.3} Å apart) and could not be separated")]
    Overlap { a: usize, b: usize, distance: f64 },
}

/// Per-atom (x, y) positions in Å, in the molecule's atom order.
#[derive(Debug, Clone, PartialEq)]
pub struct Coordinates {
    pub points: Vec<[f64; 2]>,
    /// Atoms whose bonds were stretched to close a fused or bridged ring.
    pub relaxed: Vec<bool>,
}

impl Coordinates {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        dist(self.points[i], self.points[j])
    }

    /// (min_x, min_y, max_x, max_y); all zeros when empty.
    pub fn bounding_box(&self) -> (f64, f64, f64, f64) {
        bbox(&self.points)
    }
}

/// Translate the bounding-box center to the origin, then rotate by `angle_deg`
/// counter-clockwise about the origin.
pub fn center_and_rotate(coords: &Coordinates, angle_deg: f64) -> Coordinates {
    let (x0, y0, x1, y1) = coords.bounding_box();
    let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
    let (s, c) = angle_deg.to_radians().sin_cos();
    let points = coords
        .points
        .iter()
        .map(|p| {
            let (x, y) = (p[0] - cx, p[1] - cy);
            [c * x - s * y, s * x + c * y]
        })
        .collect();
    Coordinates {
        points,
        relaxed: coords.relaxed.clone(),
    }
}

pub fn generate_coords(mol: &Molecule, bond_length: f64) -> Result<Coordinates, LayoutError> {
    let n = mol.atoms.len();
    let mut points = vec![[0.0, 0.0]; n];
    let mut relaxed = vec![false; n];
    if n == 0 {
        return Ok(Coordinates { points, relaxed });
    }
    let graph = Graph::new(mol);
    let mut cursor_x: Option<f64> = None;
    for frag in mol.fragments() {
        let placed = layout_fragment(&graph, &frag, bond_length)?;
        let frag_points: Vec<[f64; 2]> = frag.iter().map(|&i| placed.pos[i]).collect();
        let (x0, y0, x1, y1) = bbox(&frag_points);
        let dx = match cursor_x {
            None => 0.0,
            Some(right) => right + FRAGMENT_GAP - x0,
        };
        let dy = if cursor_x.is_none() { 0.0 } else { -(y0 + y1) / 2.0 };
        for &i in &frag {
            points[i] = [placed.pos[i][0] + dx, placed.pos[i][1] + dy];
            relaxed[i] = placed.relaxed[i];
        }
        cursor_x = Some(x1 + dx);
    }
    Ok(Coordinates { points, relaxed })
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn bbox(points: &[[f64; 2]]) -> (f64, f64, f64, f64) {
    if points.is_empty() {
        return (0.0, 0.0, 0.0, 0.0);
    }
    points.iter().fold(
        (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        |(a, b, c, d), p| (a.min(p[0]), b.min(p[1]), c.max(p[0]), d.max(p[1])),
    )
}

fn angle_of(from: [f64; 2], to: [f64; 2]) -> f64 {
    (to[1] - from[1]).atan2(to[0] - from[0])
}

fn step(from: [f64; 2], angle: f64, len: f64) -> [f64; 2] {
    [from[0] + len * angle.cos(), from[1] + len * angle.sin()]
}

fn centroid<'a>(points: impl IntoIterator<Item = &'a [f64; 2]>) -> [f64; 2] {
    let mut s = [0.0, 0.0];
    let mut k = 0.0;
    for p in points {
        s[0] += p[0];
        s[1] += p[1];
        k += 1.0;
    }
    if k > 0.0 {
        [s[0] / k, s[1] / k]
    } else {
        s
    }
}

/// Adjacency plus ring-system decomposition.
struct Graph {
    adj: Vec<Vec<usize>>,
    bonded: BTreeSet<(usize, usize)>,
    system_of: Vec<Option<usize>>,
    systems: Vec<RingSystem>,
}

struct RingSystem {
    atoms: Vec<usize>,
    /// Ring bonds inside the system, as (low, high) atom pairs.
    edges: Vec<(usize, usize)>,
    /// Cycle basis, each ring as an ordered atom cycle.
    rings: Vec<Vec<usize>>,
}

impl Graph {
    fn new(mol: &Molecule) -> Graph {
        let n = mol.atoms.len();
        let mut adj = mol.adjacency();
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        let bonded = mol
            .bonds
            .iter()
            .map(|b| (b.a.min(b.b), b.a.max(b.b)))
            .collect();
        let ring_flags = mol.ring_bond_flags();
        let mut ring_adj = vec![Vec::new(); n];
        for (b, &is_ring) in mol.bonds.iter().zip(&ring_flags) {
            if is_ring {
                ring_adj[b.a].push(b.b);
                ring_adj[b.b].push(b.a);
            }
        }
        for list in &mut ring_adj {
            list.sort_unstable();
        }
        let mut system_of = vec![None; n];
        let mut systems = Vec::new();
        for start in 0..n {
            if system_of[start].is_some() || ring_adj[start].is_empty() {
                continue;
            }
            let id = systems.len();
            let mut atoms = Vec::new();
            let mut stack = vec![start];
            system_of[start] = Some(id);
            while let Some(u) = stack.pop() {
                atoms.push(u);
                for &v in &ring_adj[u] {
                    if system_of[v].is_none() {
                        system_of[v] = Some(id);
                        stack.push(v);
                    }
                }
            }
            atoms.sort_unstable();
            let rings = cycle_basis(&atoms, &ring_adj);
            let edges = atoms
                .iter()
                .flat_map(|&u| ring_adj[u].iter().filter(move |&&v| u < v).map(move |&v| (u, v)))
                .collect();
            systems.push(RingSystem { atoms, edges, rings });
        }
        Graph {
            adj,
            bonded,
            system_of,
            systems,
        }
    }

    fn is_bonded(&self, a: usize, b: usize) -> bool {
        self.bonded.contains(&(a.min(b), a.max(b)))
    }
}

/// Smallest-cycles basis of one ring system: shortest cycle through each ring
/// edge, then a greedy GF(2)-independent selection by size.
fn cycle_basis(atoms: &[usize], ring_adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for &u in atoms {
        for &v in &ring_adj[u] {
            if u < v {
                edges.push((u, v));
            }
        }
    }
    let edge_index = |a: usize, b: usize| {
        let key = (a.min(b), a.max(b));
        edges.binary_search(&key).expect("ring edge")
    };
    let rank_needed = edges.len() + 1 - atoms.len();

    let mut candidates: Vec<Vec<usize>> = Vec::new();
    for &(u, v) in &edges {
        if let Some(path) = shortest_path_avoiding(ring_adj, v, u, (u, v)) {
            candidates.push(path);
        }
    }
    let canon = |c: &Vec<usize>| {
        let mut s = c.clone();
        s.sort_unstable();
        s
    };
    candidates.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| canon(a).cmp(&canon(b))));
    candidates.dedup_by(|a, b| canon(a) == canon(b));

    let words = edges.len().div_ceil(64);
    let mut basis_rows: Vec<Vec<u64>> = Vec::new();
    let mut pivots: Vec<usize> = Vec::new();
    let mut rings = Vec::new();
    for cyc in candidates {
        if rings.len() == rank_needed {
            break;
        }
        let mut row = vec![0u64; words];
        for k in 0..cyc.len() {
            let e = edge_index(cyc[k], cyc[(k + 1) % cyc.len()]);
            row[e / 64] ^= 1 << (e % 64);
        }
        for (r, &p) in basis_rows.iter().zip(&pivots) {
            if row[p / 64] >> (p % 64) & 1 == 1 {
                for w in 0..words {
                    row[w] ^= r[w];
                }
            }
        }
        let Some(p) = (0..edges.len()).find(|&e| row[e / 64] >> (e % 64) & 1 == 1) else {
            continue;
        };
        // keep rows reduced at pivot p
        for r in basis_rows.iter_mut() {
            if r[p / 64] >> (p % 64) & 1 == 1 {
                for w in 0..words {
                    r[w] ^= row[w];
                }
            }
        }
        basis_rows.push(row);
        pivots.push(p);
        rings.push(cyc);
    }
    rings
}

/// BFS path from `from` to `to` that does not use `skip` edge; returned as the
/// atom sequence of the resulting cycle.
fn shortest_path_avoiding(
    adj: &[Vec<usize>],
    from: usize,
    to: usize,
    skip: (usize, usize),
) -> Option<Vec<usize>> {
    let mut prev = std::collections::BTreeMap::new();
    let mut queue = VecDeque::from([from]);
    prev.insert(from, usize::MAX);
    while let Some(u) = queue.pop_front() {
        if u == to {
            let mut path = vec![to];
            let mut cur = to;
            while prev[&cur] != usize::MAX {
                cur = prev[&cur];
                path.push(cur);
            }
            return Some(path);
        }
        for &v in &adj[u] {
            let e = (u.min(v), u.max(v));
            if e == (skip.0.min(skip.1), skip.0.max(skip.1)) || prev.contains_key(&v) {
                continue;
            }
            prev.insert(v, u);
            queue.push_back(v);
        }
    }
    None
}

/// Local coordinates for one ring system, keyed by atom index.
fn place_ring_system(
    sys: &RingSystem,
    n_atoms: usize,
    bond_length: f64,
) -> (Vec<Option<[f64; 2]>>, Vec<bool>) {
    let mut pos: Vec<Option<[f64; 2]>> = vec![None; n_atoms];
    let mut relaxed = vec![false; n_atoms];
    let mut done = vec![false; sys.rings.len()];
    if sys.rings.is_empty() {
        return (pos, relaxed);
    }
    place_polygon(&sys.rings[0], [0.0, 0.0], PI / 2.0, bond_length, &mut pos);
    done[0] = true;

    loop {
        // ring with the most already-placed atoms, earliest on ties
        let next = (0..sys.rings.len())
            .filter(|&r| !done[r])
            .map(|r| (r, sys.rings[r].iter().filter(|&&a| pos[a].is_some()).count()))
            .filter(|&(_, k)| k > 0)
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)));
        let Some((r, shared)) = next else { break };
        done[r] = true;
        let ring = &sys.rings[r];
        let n = ring.len();
        if shared == n {
            continue;
        }
        if shared == 1 {
            // spiro junction: grow the ring away from the placed neighbors
            let k = ring.iter().position(|&a| pos[a].is_some()).unwrap();
            let s = pos[ring[k]].unwrap();
            let nbrs: Vec<[f64; 2]> = sys
                .atoms
                .iter()
                .filter(|&&a| a != ring[k] && pos[a].is_some())
                .map(|&a| pos[a].unwrap())
                .collect();
            let away = angle_of(centroid(&nbrs), s);
            let radius = bond_length / (2.0 * (PI / n as f64).sin());
            let center = step(s, away, radius);
            let rotated: Vec<usize> = (0..n).map(|i| ring[(k + i) % n]).collect();
            place_polygon(&rotated, center, angle_of(center, s), bond_length, &mut pos);
            continue;
        }
        // every run of unplaced atoms is closed along an arc between its anchors
        let placed_ref: Vec<[f64; 2]> = sys.atoms.iter().filter_map(|&a| pos[a]).collect();
        let start = (0..n).find(|&i| pos[ring[i]].is_some()).unwrap();
        let mut i = 0;
        while i < n {
            let idx = (start + i) % n;
            let nxt = (idx + 1) % n;
            if pos[ring[idx]].is_some() && pos[ring[nxt]].is_none() {
                let mut run = Vec::new();
                let mut j = nxt;
                while pos[ring[j]].is_none() {
                    run.push(ring[j]);
                    j = (j + 1) % n;
                }
                let p = pos[ring[idx]].unwrap();
                let q = pos[ring[j]].unwrap();
                // prefer the placed rings that contain both anchors as the inside reference
                let inside: Vec<[f64; 2]> = sys
                    .rings
                    .iter()
                    .enumerate()
                    .filter(|(k, rg)| {
                        *k != r && done[*k] && rg.contains(&ring[idx]) && rg.contains(&ring[j])
                    })
                    .flat_map(|(_, rg)| rg.iter().filter_map(|&a| pos[a]))
                    .collect();
                let reference = if inside.is_empty() {
                    centroid(&placed_ref)
                } else {
                    centroid(&inside)
                };
                let stretched = place_arc(&run, p, q, reference, bond_length, &mut pos);
                if stretched {
                    for &a in &run {
                        relaxed[a] = true;
                    }
                    relaxed[ring[idx]] = true;
                    relaxed[ring[j]] = true;
                }
                i += run.len() + 1;
            } else {
                i += 1;
            }
        }
    }
    if !system_is_clean(sys, &pos, bond_length) {
        relax_system(sys, &mut pos, bond_length);
        for &a in &sys.atoms {
            relaxed[a] = true;
        }
    }
    (pos, relaxed)
}

fn system_is_clean(sys: &RingSystem, pos: &[Option<[f64; 2]>], bond_length: f64) -> bool {
    let at = |a: usize| pos[a].unwrap_or([0.0, 0.0]);
    let bonds_ok = sys.edges.iter().all(|&(a, b)| {
        let d = dist(at(a), at(b));
        (d - bond_length).abs() < 1e-6 || (0.8 * bond_length..=1.2 * bond_length).contains(&d)
    });
    let spread_ok = sys.atoms.iter().enumerate().all(|(k, &a)| {
        sys.atoms[k + 1..].iter().all(|&b| {
            sys.edges.binary_search(&(a.min(b), a.max(b))).is_ok()
                || dist(at(a), at(b)) >= MIN_NONBONDED_DISTANCE
        })
    });
    bonds_ok && spread_ok
}

/// Stress majorization toward topological distances (bond_length per bond),
/// starting from the current placement. Used for cages the arc construction
/// cannot draw without overlaps.
fn relax_system(sys: &RingSystem, pos: &mut [Option<[f64; 2]>], bond_length: f64) {
    let n = sys.atoms.len();
    let local = |a: usize| sys.atoms.binary_search(&a).expect("system atom");
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in &sys.edges {
        adj[local(a)].push(local(b));
        adj[local(b)].push(local(a));
    }
    let mut hops = vec![vec![0usize; n]; n];
    for (src, row) in hops.iter_mut().enumerate() {
        let mut seen = vec![false; n];
        seen[src] = true;
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    row[v] = row[u] + 1;
                    queue.push_back(v);
                }
            }
        }
    }
    let mut x: Vec<[f64; 2]> = sys.atoms.iter().map(|&a| pos[a].unwrap_or([0.0, 0.0])).collect();
    // coincident starts get a deterministic nudge so directions are defined
    for i in 0..n {
        for j in 0..i {
            if dist(x[i], x[j]) < 1e-6 {
                let t = i as f64;
                x[i] = [x[i][0] + 0.1 * t.cos(), x[i][1] + 0.1 * t.sin()];
            }
        }
    }
    for _ in 0..500 {
        for i in 0..n {
            let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
            for j in 0..n {
                if i == j {
                    continue;
                }
                let target = bond_length * hops[i][j] as f64;
                let w = 1.0 / (target * target);
                let d = dist(x[i], x[j]).max(1e-9);
                sx += w * (x[j][0] + target * (x[i][0] - x[j][0]) / d);
                sy += w * (x[j][1] + target * (x[i][1] - x[j][1]) / d);
                sw += w;
            }
            x[i] = [sx / sw, sy / sw];
        }
    }
    // bond springs plus a short-range non-bonded repulsion
    let edges: Vec<(usize, usize)> = sys.edges.iter().map(|&(a, b)| (local(a), local(b))).collect();
    let keep_out = 1.3 / 1.5 * bond_length;
    for iter in 0..20_000 {
        let mut g = vec![[0.0f64; 2]; n];
        for &(a, b) in &edges {
            let r = dist(x[a], x[b]).max(1e-9);
            let f = (r - bond_length) / r;
            for k in 0..2 {
                let d = f * (x[a][k] - x[b][k]);
                g[a][k] += d;
                g[b][k] -= d;
            }
        }
        let mut clean = true;
        for i in 0..n {
            for j in 0..i {
                if hops[i][j] == 1 {
                    continue;
                }
                let r = dist(x[i], x[j]).max(1e-9);
                if r < keep_out {
                    clean &= r >= MIN_NONBONDED_DISTANCE;
                    let f = -4.0 * (keep_out - r) / r;
                    for k in 0..2 {
                        let d = f * (x[i][k] - x[j][k]);
                        g[i][k] += d;
                        g[j][k] -= d;
                    }
                }
            }
        }
        if clean && iter > 0 && edges.iter().all(|&(a, b)| {
            (0.8 * bond_length..=1.2 * bond_length).contains(&dist(x[a], x[b]))
        }) {
            break;
        }
        for i in 0..n {
            x[i][0] -= 0.05 * g[i][0];
            x[i][1] -= 0.05 * g[i][1];
        }
    }
    for (k, &a) in sys.atoms.iter().enumerate() {
        pos[a] = Some(x[k]);
    }
}

/// Regular polygon through `ring` (in order) centered at `center`, first vertex at `phase`.
fn place_polygon(
    ring: &[usize],
    center: [f64; 2],
    phase: f64,
    bond_length: f64,
    pos: &mut [Option<[f64; 2]>],
) {
    let n = ring.len();
    let radius = bond_length / (2.0 * (PI / n as f64).sin());
    for (k, &a) in ring.iter().enumerate() {
        if pos[a].is_none() {
            pos[a] = Some(step(center, phase + 2.0 * PI * k as f64 / n as f64, radius));
        }
    }
}

/// Place `run` on a circular arc from `p` to `q` bulging away from `reference`,
/// with every chord equal to `bond_length` when geometrically possible.
/// Returns true when chords had to be stretched.
fn place_arc(
    run: &[usize],
    p: [f64; 2],
    q: [f64; 2],
    reference: [f64; 2],
    bond_length: f64,
    pos: &mut [Option<[f64; 2]>],
) -> bool {
    let m = run.len();
    let chords = (m + 1) as f64;
    let d = dist(p, q);
    let mid = [(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0];
    // unit normal to pq pointing away from the reference point
    let (ux, uy) = if d > 1e-12 {
        ((q[0] - p[0]) / d, (q[1] - p[1]) / d)
    } else {
        (1.0, 0.0)
    };
    let mut normal = [-uy, ux];
    let side = (mid[0] - reference[0]) * normal[0] + (mid[1] - reference[1]) * normal[1];
    if side < 0.0 {
        normal = [uy, -ux];
    }
    if d >= chords * bond_length * (1.0 - 1e-12) {
        for (k, &a) in run.iter().enumerate() {
            let t = (k + 1) as f64 / chords;
            pos[a] = Some([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
        return (d - chords * bond_length).abs() > 1e-9;
    }
    // chord angle alpha solves L·sin(chords·α/2)/sin(α/2) = d on (0, 2π/chords)
    let span = |alpha: f64| bond_length * (chords * alpha / 2.0).sin() / (alpha / 2.0).sin();
    let (mut lo, mut hi) = (1e-12, 2.0 * PI / chords);
    for _ in 0..200 {
        let midpoint = 0.5 * (lo + hi);
        if span(midpoint) > d {
            lo = midpoint;
        } else {
            hi = midpoint;
        }
    }
    let alpha = 0.5 * (lo + hi);
    let radius = bond_length / (2.0 * (alpha / 2.0).sin());
    let theta = chords * alpha;
    let offset = radius * (theta / 2.0).cos();
    let center = [mid[0] - normal[0] * offset, mid[1] - normal[1] * offset];
    let start = angle_of(center, p);
    // the arc of angle theta from p ends at q in exactly one orientation
    let probe = |sign: f64| dist(step(center, start + sign * theta, radius), q);
    let sign = if (probe(1.0) - probe(-1.0)).abs() < 1e-9 {
        // half-circle: both orientations close, so take the bulge side
        let bulge = [mid[0] + normal[0], mid[1] + normal[1]];
        let mid_of = |sign: f64| dist(step(center, start + sign * theta / 2.0, radius), bulge);
        if mid_of(1.0) <= mid_of(-1.0) { 1.0 } else { -1.0 }
    } else if probe(1.0) < probe(-1.0) {
        1.0
    } else {
        -1.0
    };
    for (k, &a) in run.iter().enumerate() {
        pos[a] = Some(step(center, start + sign * alpha * (k + 1) as f64, radius));
    }
    false
}

struct Placement {
    pos: Vec<[f64; 2]>,
    relaxed: Vec<bool>,
    parent: Vec<Option<usize>>,
}

fn layout_fragment(graph: &Graph, frag: &[usize], bond_length: f64) -> Result<Placement, LayoutError> {
    let n = graph.adj.len();
    let mut tweaks = vec![0.0f64; n];
    let mut placement = place_tree(graph, frag, bond_length, &tweaks);
    let mut collisions = find_collisions(graph, frag, &placement.pos);
    let mut rounds = 0;
    while let Some(&(a, b, d)) = collisions.first() {
        rounds += 1;
        if rounds > MAX_REPAIR_ROUNDS {
            return Err(LayoutError::Overlap { a, b, distance: d });
        }
        let pivots = tree_path(&placement.parent, a, b);
        let mut improved = None;
        'search: for &pivot in &pivots {
            for &delta in &TWEAK_STEPS {
                let mut trial = tweaks.clone();
                trial[pivot] = delta;
                if trial[pivot] == tweaks[pivot] {
                    continue;
                }
                let p = place_tree(graph, frag, bond_length, &trial);
                let c = find_collisions(graph, frag, &p.pos);
                if c.len() < collisions.len() {
                    improved = Some((trial, p, c));
                    break 'search;
                }
            }
        }
        match improved {
            Some((t, p, c)) => {
                tweaks = t;
                placement = p;
                collisions = c;
            }
            None => return Err(LayoutError::Overlap { a, b, distance: d }),
        }
    }
    Ok(placement)
}

/// Atoms on the placement-tree path between `a` and `b`, nearest the common ancestor first.
fn tree_path(parent: &[Option<usize>], a: usize, b: usize) -> Vec<usize> {
    let ancestors = |mut x: usize| {
        let mut v = vec![x];
        while let Some(p) = parent[x] {
            v.push(p);
            x = p;
        }
        v
    };
    let pa = ancestors(a);
    let pb = ancestors(b);
    let common = pa.iter().find(|x| pb.contains(x)).copied();
    let mut path = Vec::new();
    if let Some(c) = common {
        path.push(c);
        let up_a: Vec<usize> = pa.iter().take_while(|&&x| x != c).copied().collect();
        let up_b: Vec<usize> = pb.iter().take_while(|&&x| x != c).copied().collect();
        let (mut ia, mut ib) = (up_a.into_iter().rev(), up_b.into_iter().rev());
        loop {
            let x = ia.next();
            let y = ib.next();
            if x.is_none() && y.is_none() {
                break;
            }
            path.extend(x);
            path.extend(y);
        }
    }
    path
}

fn find_collisions(graph: &Graph, frag: &[usize], pos: &[[f64; 2]]) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for (k, &i) in frag.iter().enumerate() {
        for &j in &frag[k + 1..] {
            if graph.is_bonded(i, j) {
                continue;
            }
            let d = dist(pos[i], pos[j]);
            if d < MIN_NONBONDED_DISTANCE {
                out.push((i, j, d));
            }
        }
    }
    out
}

/// Breadth-first placement of one fragment with per-atom branch rotations.
fn place_tree(graph: &Graph, frag: &[usize], bond_length: f64, tweaks: &[f64]) -> Placement {
    let n = graph.adj.len();
    let mut pos: Vec<Option<[f64; 2]>> = vec![None; n];
    let mut relaxed = vec![false; n];
    let mut parent: Vec<Option<usize>> = vec![None; n];
    let mut turn = vec![1.0f64; n];
    let mut queue = VecDeque::new();

    let root = frag[0];
    match graph.system_of[root] {
        Some(s) => {
            let sys = &graph.systems[s];
            let (local, rel) = place_ring_system(sys, n, bond_length);
            for &a in &sys.atoms {
                pos[a] = local[a];
                relaxed[a] = rel[a];
                if a != root {
                    parent[a] = Some(root);
                }
                queue.push_back(a);
            }
        }
        None => {
            pos[root] = Some([0.0, 0.0]);
            queue.push_back(root);
        }
    }

    while let Some(u) = queue.pop_front() {
        let here = pos[u].expect("queued atoms are placed");
        let unplaced: Vec<usize> = graph.adj[u].iter().copied().filter(|&v| pos[v].is_none()).collect();
        if unplaced.is_empty() {
            continue;
        }
        let placed_dirs: Vec<f64> = graph.adj[u]
            .iter()
            .filter_map(|&v| pos[v].map(|p| angle_of(here, p)))
            .collect();
        let dirs = choose_directions(&placed_dirs, unplaced.len(), turn[u]);
        for (&v, dir) in unplaced.iter().zip(dirs) {
            let dir = dir + tweaks[u].to_radians();
            let target = step(here, dir, bond_length);
            match graph.system_of[v] {
                Some(s) if pos[v].is_none() => {
                    let sys = &graph.systems[s];
                    let (local, rel) = place_ring_system(sys, n, bond_length);
                    let lv = local[v].expect("attach atom is in its system");
                    let ring_nbrs: Vec<[f64; 2]> = graph.adj[v]
                        .iter()
                        .filter(|&&w| graph.system_of[w] == Some(s))
                        .filter_map(|&w| local[w])
                        .collect();
                    let mut inner = centroid(&ring_nbrs);
                    if dist(inner, lv) < 1e-9 {
                        inner = centroid(sys.atoms.iter().filter_map(|&a| local[a].as_ref()));
                    }
                    // rotate so the system's outward direction at v points back at u
                    let outward = angle_of(inner, lv);
                    let rot = (dir + PI) - outward;
                    let (s_, c_) = rot.sin_cos();
                    for &a in &sys.atoms {
                        let p = local[a].expect("system atoms placed");
                        let (x, y) = (p[0] - lv[0], p[1] - lv[1]);
                        pos[a] = Some([target[0] + c_ * x - s_ * y, target[1] + s_ * x + c_ * y]);
                        relaxed[a] = rel[a];
                        parent[a] = Some(if a == v { u } else { v });
                        turn[a] = -turn[u];
                    }
                    for &a in &sys.atoms {
                        queue.push_back(a);
                    }
                }
                _ => {
                    pos[v] = Some(target);
                    parent[v] = Some(u);
                    turn[v] = -turn[u];
                    queue.push_back(v);
                }
            }
        }
    }
    Placement {
        pos: pos.into_iter().map(|p| p.unwrap_or([0.0, 0.0])).collect(),
        relaxed,
        parent,
    }
}

/// Directions (radians) for `count` new neighbors given the directions of the
/// already placed ones.
fn choose_directions(placed: &[f64], count: usize, turn: f64) -> Vec<f64> {
    let tau = 2.0 * PI;
    match placed.len() {
        0 => match count {
            1 => vec![0.0],
            2 => vec![0.0, tau / 3.0],
            _ => (0..count).map(|k| tau * k as f64 / count as f64).collect(),
        },
        1 => {
            let back = placed[0];
            if count == 1 {
                // zig-zag: 120° from the incoming bond, alternating side
                vec![back + PI + turn * PI / 3.0]
            } else {
                let slots = (count + 1) as f64;
                (1..=count).map(|k| back + tau * k as f64 / slots).collect()
            }
        }
        _ => {
            let mut sorted: Vec<f64> = placed.iter().map(|a| a.rem_euclid(tau)).collect();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut best = (0.0, -1.0);
            for k in 0..sorted.len() {
                let a = sorted[k];
                let b = if k + 1 < sorted.len() { sorted[k + 1] } else { sorted[0] + tau };
                if b - a > best.1 + 1e-9 {
                    best = (a, b - a);
                }
            }
            let (start, gap) = best;
            let slots = (count + 1) as f64;
            (1..=count).map(|k| start + gap * k as f64 / slots).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coords(s: &str) -> (Molecule, Coordinates) {
        let m = Molecule::from_smiles(s).unwrap();
        let c = generate_coords(&m, DEFAULT_BOND_LENGTH).unwrap();
        (m, c)
    }

    fn angle_at(c: &Coordinates, a: usize, center: usize, b: usize) -> f64 {
        let p = c.points[center];
        let u = [c.points[a][0] - p[0], c.points[a][1] - p[1]];
        let v = [c.points[b][0] - p[0], c.points[b][1] - p[1]];
        let cos = (u[0] * v[0] + u[1] * v[1]) / (c.distance(a, center) * c.distance(b, center));
        cos.clamp(-1.0, 1.0).acos().to_degrees()
    }

    #[test]
    fn single_atom_at_origin() {
        let (_, c) = coords("C");
        assert_eq!(c.points, vec![[0.0, 0.0]]);
    }

    #[test]
    fn propane_zigzag() {
        let (_, c) = coords("CCC");
        assert!((c.distance(0, 1) - 1.5).abs() < 1e-12);
        assert!((c.distance(1, 2) - 1.5).abs() < 1e-12);
        assert!((angle_at(&c, 0, 1, 2) - 120.0).abs() < 1e-6);
    }

    #[test]
    fn benzene_is_regular_hexagon() {
        let (_, c) = coords("c1ccccc1");
        let center = centroid(&c.points);
        for p in &c.points {
            assert!((dist(*p, center) - 1.5).abs() < 1e-9);
        }
        for i in 0..6 {
            assert!((c.distance(i, (i + 1) % 6) - 1.5).abs() < 1e-9);
        }
    }

    #[test]
    fn naphthalene_hexagons_share_an_edge() {
        let (m, c) = coords("c1ccc2ccccc2c1");
        for b in &m.bonds {
            assert!((c.distance(b.a, b.b) - 1.5).abs() < 1e-6);
        }
        assert!(c.relaxed.iter().all(|r| !r));
        // the two ring centers are one hexagon apothem ×2 apart
        let ring_a: Vec<[f64; 2]> = [0, 1, 2, 3, 8, 9].iter().map(|&i| c.points[i]).collect();
        let ring_b: Vec<[f64; 2]> = [3, 4, 5, 6, 7, 8].iter().map(|&i| c.points[i]).collect();
        let d = dist(centroid(&ring_a), centroid(&ring_b));
        assert!((d - 1.5 * 3f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn substituent_leaves_ring_on_bisector() {
        let (_, c) = coords("Cc1ccccc1");
        assert!((c.distance(0, 1) - 1.5).abs() < 1e-9);
        assert!((angle_at(&c, 0, 1, 2) - 120.0).abs() < 1e-6);
        assert!((angle_at(&c, 0, 1, 6) - 120.0).abs() < 1e-6);
    }

    #[test]
    fn fragments_are_tiled_with_gap() {
        let (_, c) = coords("CC.O");
        let right_of_first = c.points[0][0].max(c.points[1][0]);
        assert!((c.points[2][0] - right_of_first - FRAGMENT_GAP).abs() < 1e-12);
    }

    #[test]
    fn crowded_center_is_valid() {
        for s in ["CC(C)(C)C", "CC(C)(C)C(C)(C)C", "C1CC1C2CC2", "C1CCC2(CC1)CCCC2"] {
            let (m, c) = coords(s);
            for i in 0..m.atoms.len() {
                for j in i + 1..m.atoms.len() {
                    if m.bond_between(i, j).is_none() {
                        assert!(c.distance(i, j) >= MIN_NONBONDED_DISTANCE, "{s}: {i},{j}");
                    }
                }
            }
        }
    }

    #[test]
    fn rotation_is_isometric() {
        let (_, c) = coords("CC(=O)Nc1ccc(O)cc1");
        let r = center_and_rotate(&c, 37.0);
        for i in 0..c.len() {
            for j in 0..c.len() {
                assert!((c.distance(i, j) - r.distance(i, j)).abs() < 1e-9);
            }
        }
        let (x0, y0, x1, y1) = r.bounding_box();
        let z = center_and_rotate(&c, 0.0);
        let (a0, b0, a1, b1) = z.bounding_box();
        assert!((a0 + a1).abs() < 1e-12 && (b0 + b1).abs() < 1e-12);
        assert!(x1 > x0 && y1 > y0);
    }

    #[test]
    fn ethane_rotated_quarter_turn_is_vertical() {
        let (_, c) = coords("CC");
        let r = center_and_rotate(&c, 90.0);
        assert!((r.points[0][0] - r.points[1][0]).abs() < 1e-12);
        assert!(((r.points[0][1] - r.points[1][1]).abs() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn benzene_has_sixfold_symmetry() {
        let (_, c) = coords("c1ccccc1");
        let a = center_and_rotate(&c, 0.0);
        let b = center_and_rotate(&c, 60.0);
        for p in &b.points {
            let nearest = a.points.iter().map(|q| dist(*p, *q)).fold(f64::INFINITY, f64::min);
            assert!(nearest < 1e-9);
        }
    }
}
