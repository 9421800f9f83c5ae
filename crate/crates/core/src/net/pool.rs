//! Edge-collapse pooling over mesh connectivity.

use std::collections::HashMap;
use std::sync::Arc;

use crate::diff::{Real, SparseRows};
use crate::error::{Error, Result};
use crate::mesh::{build_edge_adjacency, Connectivity};

/// Result of one pooling step.
#[derive(Clone, Debug)]
pub struct PoolRecord {
    /// Connectivity after the collapses.
    pub coarse: Arc<Connectivity>,
    /// For each coarse edge, the fine edges whose features it averages.
    pub groups: Vec<Vec<usize>>,
    /// Number of fine edges.
    pub fine_edges: usize,
}

impl PoolRecord {
    /// Record that changes nothing.
    pub fn identity(conn: Arc<Connectivity>) -> Self {
        let e = conn.edge_count();
        PoolRecord {
            coarse: conn,
            groups: (0..e).map(|i| vec![i]).collect(),
            fine_edges: e,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.groups.len() == self.fine_edges && self.groups.iter().enumerate().all(|(i, g)| g == &[i])
    }

    /// `[coarse, fine]` map averaging each group.
    pub fn pool_map<T: Real>(&self) -> SparseRows<T> {
        SparseRows::mean_of_groups(&self.groups, self.fine_edges)
    }

    /// `[fine, coarse]` map: each fine edge takes the mean of the coarse
    /// edges whose groups contain it.
    pub fn unpool_map<T: Real>(&self) -> Result<SparseRows<T>> {
        let mut parents: Vec<Vec<usize>> = vec![Vec::new(); self.fine_edges];
        for (g, members) in self.groups.iter().enumerate() {
            for &m in members {
                parents[m].push(g);
            }
        }
        if let Some(orphan) = parents.iter().position(|p| p.is_empty()) {
            return Err(Error::PartMismatch(format!("fine edge {orphan} has no pooled parent")));
        }
        Ok(SparseRows::mean_of_groups(&parents, self.groups.len()))
    }
}

struct Collapser {
    keys: Vec<(usize, usize)>,
    edge_alive: Vec<bool>,
    members: Vec<Vec<usize>>,
    edge_of: HashMap<(usize, usize), usize>,
    faces: Vec<[usize; 3]>,
    face_alive: Vec<bool>,
    vert_faces: Vec<Vec<usize>>,
    nbrs: Vec<Vec<usize>>,
    boundary: Vec<bool>,
    live_vertices: usize,
    live_edges: usize,
}

fn key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Collapser {
    fn new(conn: &Connectivity) -> Self {
        let nv = conn.vertex_count();
        let mut vert_faces = vec![Vec::new(); nv];
        for (f, tri) in conn.faces().iter().enumerate() {
            for &v in tri {
                vert_faces[v].push(f);
            }
        }
        let mut nbrs = vec![Vec::new(); nv];
        let mut boundary = vec![false; nv];
        let mut edge_of = HashMap::with_capacity(conn.edge_count());
        for (e, &[a, b]) in conn.edges().iter().enumerate() {
            nbrs[a].push(b);
            nbrs[b].push(a);
            edge_of.insert((a, b), e);
            if conn.edge_faces()[e].count() == 1 {
                boundary[a] = true;
                boundary[b] = true;
            }
        }
        Collapser {
            keys: conn.edges().iter().map(|&[a, b]| (a, b)).collect(),
            edge_alive: vec![true; conn.edge_count()],
            members: (0..conn.edge_count()).map(|i| vec![i]).collect(),
            edge_of,
            faces: conn.faces().to_vec(),
            face_alive: vec![true; conn.face_count()],
            vert_faces,
            nbrs,
            boundary,
            live_vertices: nv,
            live_edges: conn.edge_count(),
        }
    }

    /// Collapses edge `e` when the link condition allows it.
    fn try_collapse(&mut self, e: usize) -> bool {
        let (u, v) = self.keys[e];
        if self.boundary[u] || self.boundary[v] || self.live_vertices <= 4 {
            return false;
        }
        let shared: Vec<usize> = self.vert_faces[u]
            .iter()
            .copied()
            .filter(|&f| self.faces[f].contains(&v))
            .collect();
        if shared.len() != 2 {
            return false;
        }
        let opposite = |f: usize| *self.faces[f].iter().find(|&&x| x != u && x != v).unwrap();
        let (a, b) = (opposite(shared[0]), opposite(shared[1]));
        if a == b {
            return false;
        }
        let common = self.nbrs[u].iter().filter(|w| self.nbrs[v].contains(w)).count();
        if common != 2 {
            return false;
        }

        // Merge (v, a) into (u, a) and (v, b) into (u, b); the collapsed edge joins both.
        let collapsed = std::mem::take(&mut self.members[e]);
        for w in [a, b] {
            let gone = self.edge_of.remove(&key(v, w)).expect("edge (v, w) exists");
            let keep = self.edge_of[&key(u, w)];
            let moved = std::mem::take(&mut self.members[gone]);
            self.members[keep].extend(moved);
            self.members[keep].extend(collapsed.iter().copied());
            self.edge_alive[gone] = false;
        }
        self.edge_of.remove(&key(u, v));
        self.edge_alive[e] = false;
        self.live_edges -= 3;

        let v_nbrs = std::mem::take(&mut self.nbrs[v]);
        for &w in &v_nbrs {
            if w == u || w == a || w == b {
                continue;
            }
            let id = self.edge_of.remove(&key(v, w)).expect("edge (v, w) exists");
            self.keys[id] = key(u, w);
            self.edge_of.insert(key(u, w), id);
            self.nbrs[u].push(w);
        }
        for &w in &v_nbrs {
            let list = &mut self.nbrs[w];
            list.retain(|&x| x != v);
            if w != u && !list.contains(&u) {
                list.push(u);
            }
        }
        self.nbrs[u].retain(|&x| x != v);

        for &f in &shared {
            self.face_alive[f] = false;
            for x in self.faces[f] {
                if x != v {
                    self.vert_faces[x].retain(|&g| g != f);
                }
            }
        }
        for f in std::mem::take(&mut self.vert_faces[v]) {
            if !self.face_alive[f] {
                continue;
            }
            for x in self.faces[f].iter_mut() {
                if *x == v {
                    *x = u;
                }
            }
            self.vert_faces[u].push(f);
        }
        self.live_vertices -= 1;
        true
    }
}

/// Collapses edges in increasing `priority` order (ties by index) until at
/// most `target_edges` remain or no legal collapse is left. Collapses that
/// violate the link condition, touch an open boundary or would shrink a
/// component below four vertices are skipped.
pub fn pool_edges(conn: &Arc<Connectivity>, priority: &[f64], target_edges: usize) -> Result<PoolRecord> {
    let ne = conn.edge_count();
    if priority.len() != ne {
        return Err(Error::ShapeMismatch {
            op: "pool_edges",
            left: vec![ne],
            right: vec![priority.len()],
        });
    }
    if target_edges >= ne {
        return Ok(PoolRecord::identity(conn.clone()));
    }
    let mut order: Vec<usize> = (0..ne).collect();
    order.sort_by(|&a, &b| priority[a].total_cmp(&priority[b]).then(a.cmp(&b)));

    let mut st = Collapser::new(conn);
    for &e in &order {
        if st.live_edges <= target_edges {
            break;
        }
        if st.edge_alive[e] {
            st.try_collapse(e);
        }
    }
    if st.live_edges > target_edges {
        log::debug!("pooling stopped at {} edges (target {target_edges})", st.live_edges);
    }

    // Compact to a fresh connectivity and carry each surviving edge's group over.
    let mut remap = vec![usize::MAX; conn.vertex_count()];
    let mut orig = Vec::new();
    let faces: Vec<[usize; 3]> = st
        .faces
        .iter()
        .zip(&st.face_alive)
        .filter(|(_, &a)| a)
        .map(|(f, _)| {
            f.map(|x| {
                if remap[x] == usize::MAX {
                    remap[x] = orig.len();
                    orig.push(x);
                }
                remap[x]
            })
        })
        .collect();
    let coarse = build_edge_adjacency(&faces, orig.len())?;
    let mut groups = Vec::with_capacity(coarse.edge_count());
    for &[a, b] in coarse.edges() {
        let id = st
            .edge_of
            .get(&key(orig[a], orig[b]))
            .copied()
            .ok_or_else(|| Error::Degenerate("pooled edge lost its record".into()))?;
        let mut g = st.members[id].clone();
        g.sort_unstable();
        g.dedup();
        groups.push(g);
    }
    if groups.len() != st.live_edges {
        return Err(Error::Degenerate(format!(
            "pooled edge count {} disagrees with bookkeeping {}",
            groups.len(),
            st.live_edges
        )));
    }
    Ok(PoolRecord {
        coarse: Arc::new(coarse),
        groups,
        fine_edges: ne,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn identity_when_target_reached() {
        let m = fixtures::icosahedron();
        let rec = pool_edges(m.topology(), &vec![0.0; 30], 30).unwrap();
        assert!(rec.is_identity());
    }

    #[test]
    fn icosahedron_to_24_edges() {
        let m = fixtures::icosahedron();
        let prio: Vec<f64> = (0..30).map(|i| ((i * 7) % 30) as f64).collect();
        let rec = pool_edges(m.topology(), &prio, 24).unwrap();
        let c = &rec.coarse;
        assert_eq!(c.edge_count(), 24);
        assert_eq!(c.euler_characteristic(), 2);
        assert!(c.is_watertight());
        // Every fine edge lands in some group.
        let unpool = rec.unpool_map::<f64>().unwrap();
        assert_eq!(unpool.rows(), 30);
    }

    #[test]
    fn torus_keeps_genus_under_pooling() {
        let m = fixtures::torus(1.0, 0.4, 24, 12);
        let prio: Vec<f64> = (0..m.edge_count()).map(|i| ((i * 37) % 101) as f64).collect();
        let target = m.edge_count() * 4 / 5;
        let rec = pool_edges(m.topology(), &prio, target).unwrap();
        assert!(rec.coarse.edge_count() <= target);
        assert!(rec.coarse.is_watertight());
        assert_eq!(rec.coarse.euler_characteristic(), 0);
    }
}
