//! Maximum bipartite matching by Hopcroft–Karp with an early-exit target.
//!
//! The matcher works against per-row neighbor lists sorted by distance, so a
//! feasibility probe at radius `ε` only adjusts per-row prefix lengths —
//! nothing is rebuilt between probes.

const NONE: u32 = u32::MAX;

/// Distance-sorted adjacency for a bipartite geometric graph on `m × m`
/// points.
pub(crate) struct SortedAdjacency {
    m: usize,
    /// Row-major, each row sorted ascending by distance.
    dist: Vec<f64>,
    /// Neighbor indices aligned with `dist`.
    nbr: Vec<u32>,
}

impl SortedAdjacency {
    /// Build from a row-major distance matrix (consumed).
    pub fn new(m: usize, mut dist: Vec<f64>) -> Self {
        assert_eq!(dist.len(), m * m);
        let mut nbr = vec![0u32; m * m];
        let mut idx: Vec<u32> = (0..m as u32).collect();
        for i in 0..m {
            let row = &mut dist[i * m..(i + 1) * m];
            idx.sort_unstable_by(|&a, &b| row[a as usize].total_cmp(&row[b as usize]));
            let tmp: Vec<f64> = idx.iter().map(|&j| row[j as usize]).collect();
            row.copy_from_slice(&tmp);
            nbr[i * m..(i + 1) * m].copy_from_slice(&idx);
            for (k, v) in idx.iter_mut().enumerate() {
                *v = k as u32;
            }
        }
        SortedAdjacency { m, dist, nbr }
    }

    /// All pairwise distances in `(lo, hi)`, ascending, deduplicated.
    pub fn distances_within(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .dist
            .iter()
            .copied()
            .filter(|&d| d > lo && d < hi)
            .collect();
        out.sort_unstable_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// Per-row neighbor-count prefixes at radius `eps` (closed balls).
    fn prefixes(&self, eps: f64) -> Vec<usize> {
        (0..self.m)
            .map(|i| self.dist[i * self.m..(i + 1) * self.m].partition_point(|&d| d <= eps))
            .collect()
    }

    /// Size of a maximum matching in the `≤ eps` graph, stopping early once
    /// `target` is reached.
    pub fn max_matching(&self, eps: f64, target: usize) -> usize {
        let m = self.m;
        let prefix = self.prefixes(eps);
        let nbrs = |i: usize| &self.nbr[i * m..i * m + prefix[i]];

        let mut match_l = vec![NONE; m];
        let mut match_r = vec![NONE; m];
        let mut matched = 0usize;
        for i in 0..m {
            if matched >= target {
                return matched;
            }
            for &j in nbrs(i) {
                if match_r[j as usize] == NONE {
                    match_l[i] = j;
                    match_r[j as usize] = i as u32;
                    matched += 1;
                    break;
                }
            }
        }

        let mut dist = vec![u32::MAX; m];
        let mut queue = Vec::with_capacity(m);
        while matched < target {
            // BFS layering from unmatched left vertices.
            queue.clear();
            for i in 0..m {
                if match_l[i] == NONE {
                    dist[i] = 0;
                    queue.push(i as u32);
                } else {
                    dist[i] = u32::MAX;
                }
            }
            let mut found = false;
            let mut head = 0;
            while head < queue.len() {
                let i = queue[head] as usize;
                head += 1;
                for &j in nbrs(i) {
                    let owner = match_r[j as usize];
                    if owner == NONE {
                        found = true;
                    } else if dist[owner as usize] == u32::MAX {
                        dist[owner as usize] = dist[i] + 1;
                        queue.push(owner);
                    }
                }
            }
            if !found {
                break;
            }
            // Layered DFS augmentation.
            for i in 0..m {
                if match_l[i] == NONE
                    && augment(i, &mut match_l, &mut match_r, &mut dist, &nbrs)
                {
                    matched += 1;
                    if matched >= target {
                        return matched;
                    }
                }
            }
        }
        matched
    }
}

fn augment<'a>(
    i: usize,
    match_l: &mut [u32],
    match_r: &mut [u32],
    dist: &mut [u32],
    nbrs: &impl Fn(usize) -> &'a [u32],
) -> bool {
    for &j in nbrs(i) {
        let owner = match_r[j as usize];
        if owner == NONE
            || (dist[owner as usize] == dist[i] + 1
                && augment(owner as usize, match_l, match_r, dist, nbrs))
        {
            match_l[i] = j;
            match_r[j as usize] = i as u32;
            return true;
        }
    }
    dist[i] = u32::MAX;
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    /// O(m!)-free reference: max matching via simple augmenting search on an
    /// explicit edge set (Kuhn's algorithm).
    fn kuhn(m: usize, edges: &[(usize, usize)]) -> usize {
        let mut adj = vec![Vec::new(); m];
        for &(i, j) in edges {
            adj[i].push(j);
        }
        let mut mr = vec![usize::MAX; m];
        fn try_aug(
            i: usize,
            adj: &[Vec<usize>],
            mr: &mut [usize],
            seen: &mut [bool],
        ) -> bool {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    if mr[j] == usize::MAX || try_aug(mr[j], adj, mr, seen) {
                        mr[j] = i;
                        return true;
                    }
                }
            }
            false
        }
        let mut total = 0;
        for i in 0..m {
            let mut seen = vec![false; m];
            if try_aug(i, &adj, &mut mr, &mut seen) {
                total += 1;
            }
        }
        total
    }

    #[test]
    fn matches_kuhn_on_random_geometric_instances() {
        let mut r = stream(1, "match/kuhn", 0);
        for trial in 0..50 {
            let m = 2 + (trial % 15);
            let pts_a: Vec<f64> = (0..m).map(|_| r.gen()).collect();
            let pts_b: Vec<f64> = (0..m).map(|_| r.gen()).collect();
            let mut dmat = vec![0.0; m * m];
            for i in 0..m {
                for j in 0..m {
                    dmat[i * m + j] = (pts_a[i] - pts_b[j]).abs();
                }
            }
            let adj = SortedAdjacency::new(m, dmat.clone());
            for eps in [0.05, 0.2, 0.5] {
                let edges: Vec<(usize, usize)> = (0..m)
                    .flat_map(|i| (0..m).map(move |j| (i, j)))
                    .filter(|&(i, j)| dmat[i * m + j] <= eps)
                    .collect();
                assert_eq!(adj.max_matching(eps, m), kuhn(m, &edges), "m={m} eps={eps}");
            }
        }
    }

    #[test]
    fn early_exit_respects_target() {
        let m = 6;
        let dmat = vec![0.0; m * m]; // complete zero-distance graph
        let adj = SortedAdjacency::new(m, dmat);
        assert_eq!(adj.max_matching(0.0, 3), 3);
        assert_eq!(adj.max_matching(0.0, m), m);
    }

    #[test]
    fn matching_size_is_monotone_in_radius() {
        let mut r = stream(2, "match/mono", 0);
        let m = 64;
        let mut dmat = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                dmat[i * m + j] = r.gen::<f64>();
            }
        }
        let adj = SortedAdjacency::new(m, dmat);
        let mut prev = 0;
        for k in 0..=20 {
            let eps = k as f64 / 20.0;
            let size = adj.max_matching(eps, m);
            assert!(size >= prev, "matching shrank at eps={eps}");
            prev = size;
        }
        assert_eq!(prev, m);
    }
}
