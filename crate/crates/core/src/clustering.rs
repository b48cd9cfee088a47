//! OGP checks, the unique clustering of an OGP set, and shattering verdicts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::landscape::{check_fractions, is_forbidden, is_near, LevelSet};

/// Most forbidden pairs reported as OGP witnesses.
pub const MAX_WITNESSES: usize = 16;

/// Disjoint-set forest with path compression and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(len: usize) -> Self {
        Self {
            parent: (0..len).collect(),
            size: vec![1; len],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    /// Merges the sets of `a` and `b`; returns false if already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OgpCheck {
    pub holds: bool,
    /// Up to [`MAX_WITNESSES`] unordered violating pairs, in member order.
    pub witnesses: Vec<(u64, u64)>,
}

/// Tests the `(ν₁, ν₂)`-OGP: no two members at normalized distance in `(ν₁, ν₂)`.
pub fn check_ogp(set: &LevelSet, nu1: f64, nu2: f64) -> Result<OgpCheck> {
    check_fractions(nu1, nu2)?;
    let n = set.n();
    let m = set.members();
    let per_row: Vec<Vec<(u64, u64)>> = (0..m.len())
        .into_par_iter()
        .map(|i| {
            let a = m[i];
            m[i + 1..]
                .iter()
                .filter(|&&b| is_forbidden((a ^ b).count_ones(), n, nu1, nu2))
                .take(MAX_WITNESSES)
                .map(|&b| (a, b))
                .collect()
        })
        .collect();
    let witnesses: Vec<_> = per_row.into_iter().flatten().take(MAX_WITNESSES).collect();
    Ok(OgpCheck {
        holds: witnesses.is_empty(),
        witnesses,
    })
}

/// Connected components of the graph joining members at distance `≤ ν₁ n`.
///
/// Members are sorted within each component and components by first member.
/// This is the clustering when the OGP holds and a diagnostic partition otherwise.
pub fn components(set: &LevelSet, nu1: f64) -> Result<Vec<Vec<u64>>> {
    if !(nu1 > 0.0 && nu1 < 1.0) {
        return Err(invalid("nu1", format!("{nu1} is not in (0, 1)")));
    }
    let n = set.n();
    let m = set.members();
    let edges: Vec<(usize, usize)> = (0..m.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let a = m[i];
            (i + 1..m.len())
                .filter(move |&j| is_near((a ^ m[j]).count_ones(), n, nu1))
                .map(move |j| (i, j))
        })
        .collect();
    let mut uf = UnionFind::new(m.len());
    for (i, j) in edges {
        uf.union(i, j);
    }
    let mut slot = vec![usize::MAX; m.len()];
    let mut groups: Vec<Vec<u64>> = Vec::new();
    // Members are sorted, so groups come out ordered by first member.
    for (i, &bits) in m.iter().enumerate() {
        let root = uf.find(i);
        if slot[root] == usize::MAX {
            slot[root] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[root]].push(bits);
    }
    Ok(groups)
}

/// A partition of a configuration set into clusters, with its geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub n: usize,
    pub nu1: f64,
    pub nu2: f64,
    pub ogp: bool,
    #[serde(rename = "L")]
    pub num_clusters: usize,
    pub sizes: Vec<usize>,
    /// Largest intra-cluster distance over `n`; zero for singletons.
    pub max_diameter: f64,
    /// Smallest distance between distinct clusters over `n`; absent when `L ≤ 1`.
    pub min_interdistance: Option<f64>,
    pub clusters: Vec<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub witnesses: Vec<(u64, u64)>,
}

impl ClusterReport {
    fn build(n: usize, nu1: f64, nu2: f64, clusters: Vec<Vec<u64>>, check: OgpCheck) -> Self {
        let mut label = Vec::new();
        for (k, c) in clusters.iter().enumerate() {
            label.extend(c.iter().map(|&b| (b, k)));
        }
        let (diam, inter) = label
            .par_iter()
            .enumerate()
            .map(|(i, &(a, ka))| {
                let mut diam = 0u32;
                let mut inter = u32::MAX;
                for &(b, kb) in &label[i + 1..] {
                    let d = (a ^ b).count_ones();
                    if ka == kb {
                        diam = diam.max(d);
                    } else {
                        inter = inter.min(d);
                    }
                }
                (diam, inter)
            })
            .reduce(|| (0, u32::MAX), |x, y| (x.0.max(y.0), x.1.min(y.1)));
        Self {
            n,
            nu1,
            nu2,
            ogp: check.holds,
            num_clusters: clusters.len(),
            sizes: clusters.iter().map(Vec::len).collect(),
            max_diameter: f64::from(diam) / n as f64,
            min_interdistance: (inter != u32::MAX).then(|| f64::from(inter) / n as f64),
            clusters,
            witnesses: check.witnesses,
        }
    }

    /// Component partition reported regardless of whether the OGP holds.
    pub fn diagnostic(set: &LevelSet, nu1: f64, nu2: f64) -> Result<Self> {
        let check = check_ogp(set, nu1, nu2)?;
        let clusters = components(set, nu1)?;
        Ok(Self::build(set.n(), nu1, nu2, clusters, check))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))
    }
}

/// The unique `(ν₁, ν₂)`-clustering of an OGP set.
///
/// Requires `2ν₁ < ν₂`; refuses with the witnesses when the OGP fails.
pub fn cluster(set: &LevelSet, nu1: f64, nu2: f64) -> Result<ClusterReport> {
    check_fractions(nu1, nu2)?;
    if 2.0 * nu1 >= nu2 {
        return Err(Error::Precondition(format!(
            "uniqueness needs 2ν₁ < ν₂, got ν₁ = {nu1}, ν₂ = {nu2}"
        )));
    }
    let check = check_ogp(set, nu1, nu2)?;
    if !check.holds {
        return Err(Error::OgpViolation {
            witnesses: check.witnesses,
        });
    }
    let clusters = components(set, nu1)?;
    Ok(ClusterReport::build(set.n(), nu1, nu2, clusters, check))
}

/// One measured condition of a shattering verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub holds: bool,
    /// Absent when the quantity is undefined (no clusters, or no pair of clusters).
    pub measured: Option<f64>,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShatteringVerdict {
    /// `log₂ L / n ≥ c`.
    pub many_clusters: Condition,
    /// `max diameter ≤ a`.
    pub diameter: Condition,
    /// `min inter-distance ≥ b`; vacuous when `L ≤ 1`.
    pub separation: Condition,
    /// `max cluster mass ≤ e^{−c′ n}`.
    pub subdominant: Condition,
    /// `total mass ≥ 1 − 2^{−n/8}`.
    pub total_mass: Condition,
}

impl ShatteringVerdict {
    pub fn geometry_holds(&self) -> bool {
        self.diameter.holds && self.separation.holds
    }

    pub fn holds(&self) -> bool {
        self.many_clusters.holds && self.geometry_holds() && self.subdominant.holds && self.total_mass.holds
    }
}

/// Checks the four shattering conditions with `a`, `b` as distance fractions.
pub fn shattering_verdict(
    report: &ClusterReport,
    masses: &[f64],
    a: f64,
    b: f64,
    c_exp: f64,
    cprime_exp: f64,
) -> Result<ShatteringVerdict> {
    if masses.len() != report.num_clusters {
        return Err(Error::DimensionMismatch {
            expected: report.num_clusters,
            actual: masses.len(),
        });
    }
    for (name, v) in [("a", a), ("b", b)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(invalid(name, format!("{v} is not in (0, 1)")));
        }
    }
    let n = report.n as f64;
    let log_l = (report.num_clusters > 0).then(|| (report.num_clusters as f64).log2() / n);
    let max_mass = masses.iter().copied().fold(0.0, f64::max);
    let total: f64 = masses.iter().sum();
    let mass_cap = (-cprime_exp * n).exp();
    let total_floor = 1.0 - (-n / 8.0).exp2();
    let tol = crate::landscape::DISTANCE_TOL / n;
    Ok(ShatteringVerdict {
        many_clusters: Condition {
            holds: log_l.is_some_and(|v| v >= c_exp),
            measured: log_l,
            threshold: c_exp,
        },
        diameter: Condition {
            holds: report.max_diameter <= a + tol,
            measured: Some(report.max_diameter),
            threshold: a,
        },
        separation: Condition {
            holds: report.min_interdistance.map_or(true, |d| d >= b - tol),
            measured: report.min_interdistance,
            threshold: b,
        },
        subdominant: Condition {
            holds: max_mass <= mass_cap,
            measured: Some(max_mass),
            threshold: mass_cap,
        },
        total_mass: Condition {
            holds: total >= total_floor,
            measured: Some(total),
            threshold: total_floor,
        },
    })
}
