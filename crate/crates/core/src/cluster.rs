//! DBScan over scan positions and the environment / place-database split.

use std::collections::HashMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::GroundTruth;
use crate::error::{Error, Result};

/// Scans a single location may contribute to the place database.
pub const MAX_PLACE_SCANS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterParams {
    pub eps: f64,
    pub min_pts: usize,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self { eps: 1.0, min_pts: 1 }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) || self.min_pts < 1 {
            return Err(Error::Config(format!(
                "dbscan needs eps > 0 and min_pts >= 1, got eps={} min_pts={}",
                self.eps, self.min_pts
            )));
        }
        Ok(())
    }
}

/// Per-point cluster id (`None` marks noise) with ids contiguous from zero in
/// order of first appearance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    pub labels: Vec<Option<usize>>,
    pub count: usize,
}

impl ClusterAssignment {
    /// Point indices per cluster, ascending within each cluster.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.count];
        for (i, label) in self.labels.iter().enumerate() {
            if let Some(c) = label {
                members[*c].push(i);
            }
        }
        members
    }
}

/// Planar distance within one (building, floor); infinite across them.
pub fn distance(a: &GroundTruth, b: &GroundTruth) -> f64 {
    if a.same_floor(b) {
        a.planar_distance(b)
    } else {
        f64::INFINITY
    }
}

/// Uniform grid over each (building, floor) with cells of side `eps`, so an
/// eps-ball only touches the 3x3 block around a point's cell.
struct GridIndex<'a> {
    points: &'a [GroundTruth],
    eps: f64,
    cells: HashMap<(i32, i32, i64, i64), Vec<usize>>,
}

impl<'a> GridIndex<'a> {
    fn new(points: &'a [GroundTruth], eps: f64) -> Self {
        let mut cells: HashMap<_, Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, eps)).or_default().push(i);
        }
        Self { points, eps, cells }
    }

    fn key(p: &GroundTruth, eps: f64) -> (i32, i32, i64, i64) {
        (
            p.building_id,
            p.floor,
            (p.longitude / eps).floor() as i64,
            (p.latitude / eps).floor() as i64,
        )
    }

    /// All points within `eps` of point `i`, itself included, ascending.
    fn neighbors(&self, i: usize, out: &mut Vec<usize>) {
        out.clear();
        let p = &self.points[i];
        let (b, f, cx, cy) = Self::key(p, self.eps);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(cell) = self.cells.get(&(b, f, cx + dx, cy + dy)) {
                    out.extend(
                        cell.iter()
                            .copied()
                            .filter(|&j| distance(p, &self.points[j]) <= self.eps),
                    );
                }
            }
        }
        out.sort_unstable();
    }
}

/// Standard DBScan: a point is core when its eps-neighborhood (itself
/// included) holds at least `min_pts` points; clusters grow from core points
/// and absorb reachable border points; the rest is noise.
pub fn dbscan(points: &[GroundTruth], params: &ClusterParams) -> Result<ClusterAssignment> {
    params.validate()?;
    let index = GridIndex::new(points, params.eps);
    let mut labels: Vec<Option<usize>> = vec![None; points.len()];
    let mut visited = vec![false; points.len()];
    let mut count = 0;
    let mut neighbors = Vec::new();
    let mut queue = Vec::new();

    for start in 0..points.len() {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        index.neighbors(start, &mut neighbors);
        if neighbors.len() < params.min_pts {
            continue;
        }
        let cluster = count;
        count += 1;
        labels[start] = Some(cluster);
        queue.clear();
        queue.extend(neighbors.iter().copied().filter(|&j| j != start));
        while let Some(j) = queue.pop() {
            if labels[j].is_none() {
                labels[j] = Some(cluster);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            index.neighbors(j, &mut neighbors);
            if neighbors.len() >= params.min_pts {
                queue.extend(neighbors.iter().copied().filter(|&k| !visited[k]));
            }
        }
    }
    Ok(ClusterAssignment { labels, count })
}

/// Environment scans (one per cluster) and place-database scans (up to
/// [`MAX_PLACE_SCANS`] per cluster). Indices refer to the clustered points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitResult {
    pub environment_scans: Vec<usize>,
    pub place_db_scans: Vec<Vec<usize>>,
    pub rng_seed: u64,
}

impl SplitResult {
    pub fn place_db_len(&self) -> usize {
        self.place_db_scans.iter().map(Vec::len).sum()
    }

    /// Writes `record_index,cluster_id,partition` rows, sorted by record index.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut rows: Vec<(usize, usize, &str)> = Vec::new();
        for (cluster, &env) in self.environment_scans.iter().enumerate() {
            rows.push((env, cluster, "env"));
        }
        for (cluster, scans) in self.place_db_scans.iter().enumerate() {
            rows.extend(scans.iter().map(|&i| (i, cluster, "db")));
        }
        rows.sort_unstable();
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record(["record_index", "cluster_id", "partition"])?;
        for (i, c, p) in rows {
            csv.write_record([i.to_string(), c.to_string(), p.to_string()])?;
        }
        csv.flush().map_err(|e| Error::io("<writer>", e))?;
        Ok(())
    }
}

/// Per cluster: one uniformly drawn environment scan, then up to
/// [`MAX_PLACE_SCANS`] of the remaining scans drawn without replacement.
/// Noise points are left out of both partitions.
pub fn split_dataset(assignment: &ClusterAssignment, seed: u64) -> SplitResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut environment_scans = Vec::with_capacity(assignment.count);
    let mut place_db_scans = Vec::with_capacity(assignment.count);
    for mut members in assignment.members() {
        members.shuffle(&mut rng);
        environment_scans.push(members[0]);
        let take = (members.len() - 1).min(MAX_PLACE_SCANS);
        place_db_scans.push(members[1..=take].to_vec());
    }
    SplitResult {
        environment_scans,
        place_db_scans,
        rng_seed: seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn pt(x: f64, y: f64) -> GroundTruth {
        GroundTruth {
            longitude: x,
            latitude: y,
            floor: 0,
            building_id: 0,
        }
    }

    /// Oracle: union-find over the brute-force eps-graph.
    fn components(points: &[GroundTruth], eps: f64) -> Vec<usize> {
        fn find(p: &mut Vec<usize>, x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            let mut x = x;
            while p[x] != r {
                let n = p[x];
                p[x] = r;
                x = n;
            }
            r
        }
        let n = points.len();
        let mut parent: Vec<usize> = (0..n).collect();
        for i in 0..n {
            for j in i + 1..n {
                if distance(&points[i], &points[j]) <= eps {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        (0..n).map(|i| find(&mut parent, i)).collect()
    }

    fn same_partition(a: &[Option<usize>], b: &[usize]) -> bool {
        let n = a.len();
        (0..n).all(|i| (0..n).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
    }

    #[test]
    fn distance_examples() {
        assert_eq!(distance(&pt(1.0, 2.0), &pt(1.0, 2.0)), 0.0);
        assert_eq!(distance(&pt(0.0, 0.0), &pt(3.0, 4.0)), 5.0);
        let mut up = pt(0.0, 0.0);
        up.floor = 1;
        assert_eq!(distance(&pt(0.0, 0.0), &up), f64::INFINITY);
        let mut other = pt(0.0, 0.0);
        other.building_id = 2;
        assert_eq!(distance(&pt(0.0, 0.0), &other), f64::INFINITY);
    }

    #[test]
    fn separated_points_are_singletons() {
        let pts: Vec<_> = (0..5).map(|i| pt(i as f64 * 1.5, 0.0)).collect();
        let a = dbscan(&pts, &ClusterParams::default()).unwrap();
        assert_eq!(a.count, 5);
        assert_eq!(a.labels, (0..5).map(Some).collect::<Vec<_>>());
    }

    #[test]
    fn chain_forms_one_cluster() {
        let pts: Vec<_> = (0..20).map(|i| pt(i as f64 * 0.5, 0.0)).collect();
        let a = dbscan(&pts, &ClusterParams::default()).unwrap();
        assert_eq!(a.count, 1);
        assert!(a.labels.iter().all(|&l| l == Some(0)));
    }

    #[test]
    fn stacked_floors_never_merge() {
        let mut pts = vec![pt(0.0, 0.0), pt(0.0, 0.0)];
        pts[1].floor = 1;
        assert_eq!(dbscan(&pts, &ClusterParams::default()).unwrap().count, 2);
    }

    #[test]
    fn empty_input_has_no_clusters() {
        let a = dbscan(&[], &ClusterParams::default()).unwrap();
        assert_eq!(a.count, 0);
        assert!(a.labels.is_empty());
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(dbscan(&[], &ClusterParams { eps: 0.0, min_pts: 1 }).is_err());
        assert!(dbscan(&[], &ClusterParams { eps: 1.0, min_pts: 0 }).is_err());
    }

    #[test]
    fn noise_and_border_points() {
        // Three tight points, one border point 0.9 m from the edge, one far.
        let pts = vec![pt(0.0, 0.0), pt(0.5, 0.0), pt(1.0, 0.0), pt(1.9, 0.0), pt(10.0, 0.0)];
        let a = dbscan(&pts, &ClusterParams { eps: 1.0, min_pts: 3 }).unwrap();
        assert_eq!(a.count, 1);
        assert_eq!(a.labels, vec![Some(0), Some(0), Some(0), Some(0), None]);
    }

    #[test]
    fn matches_union_find_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<_> = (0..200)
            .map(|_| pt(rng.gen_range(0.0..20.0), rng.gen_range(0.0..20.0)))
            .collect();
        let a = dbscan(&pts, &ClusterParams::default()).unwrap();
        assert!(a.labels.iter().all(Option::is_some));
        assert!(same_partition(&a.labels, &components(&pts, 1.0)));
    }

    #[test]
    fn ordering_invariance_and_eps_monotonicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<_> = (0..150)
            .map(|_| pt(rng.gen_range(0.0..15.0), rng.gen_range(0.0..15.0)))
            .collect();
        let a = dbscan(&pts, &ClusterParams::default()).unwrap();

        let mut perm: Vec<usize> = (0..pts.len()).collect();
        perm.shuffle(&mut rng);
        let shuffled: Vec<_> = perm.iter().map(|&i| pts[i]).collect();
        let b = dbscan(&shuffled, &ClusterParams::default()).unwrap();
        let mut b_orig = vec![None; pts.len()];
        for (k, &i) in perm.iter().enumerate() {
            b_orig[i] = b.labels[k];
        }
        let b_flat: Vec<usize> = b_orig.iter().map(|l| l.unwrap()).collect();
        assert!(same_partition(&a.labels, &b_flat));

        let small = dbscan(&pts, &ClusterParams { eps: 0.6, min_pts: 1 }).unwrap();
        let large = dbscan(&pts, &ClusterParams { eps: 1.5, min_pts: 1 }).unwrap();
        // Every pair together at small eps stays together at larger eps.
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                if small.labels[i] == small.labels[j] {
                    assert_eq!(a.labels[i], a.labels[j]);
                }
                if a.labels[i] == a.labels[j] {
                    assert_eq!(large.labels[i], large.labels[j]);
                }
            }
        }
    }

    fn assignment(sizes: &[usize]) -> ClusterAssignment {
        let mut labels = Vec::new();
        for (c, &s) in sizes.iter().enumerate() {
            labels.extend(std::iter::repeat(Some(c)).take(s));
        }
        ClusterAssignment {
            labels,
            count: sizes.len(),
        }
    }

    #[test]
    fn split_sizes() {
        let a = assignment(&[1, 30, 5]);
        let s = split_dataset(&a, 3);
        assert_eq!(s.environment_scans.len(), 3);
        assert_eq!(s.place_db_scans[0].len(), 0);
        assert_eq!(s.place_db_scans[1].len(), 10);
        assert_eq!(s.place_db_scans[2].len(), 4);

        let mut big: Vec<usize> = s.place_db_scans[1].clone();
        big.push(s.environment_scans[1]);
        big.sort_unstable();
        big.dedup();
        assert_eq!(big.len(), 11);
        assert!(big.iter().all(|&i| a.labels[i] == Some(1)));
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let a = assignment(&[12, 3, 40, 1, 11]);
        let s1 = split_dataset(&a, 42);
        assert_eq!(s1, split_dataset(&a, 42));
        assert_ne!(s1, split_dataset(&a, 43));
        let env: std::collections::HashSet<_> = s1.environment_scans.iter().collect();
        for scans in &s1.place_db_scans {
            assert!(scans.len() <= MAX_PLACE_SCANS);
            assert!(scans.iter().all(|i| !env.contains(i)));
        }
    }

    #[test]
    fn split_csv_rows() {
        let s = split_dataset(&assignment(&[2, 1]), 1);
        let mut out = Vec::new();
        s.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "record_index,cluster_id,partition");
        assert_eq!(lines.len(), 4);
        assert!(lines.contains(&"2,1,env"));
    }
}
