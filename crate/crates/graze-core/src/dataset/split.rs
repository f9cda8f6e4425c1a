//! Train/validation splitting that never separates sites sharing a spatial
//! cluster (no spatial leakage between the two sides).

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use rand::seq::SliceRandom;

/// Splits sites into train/validation id sets. Whole clusters are assigned
/// to one side; clusters are shuffled by the seed-derived stream and added
/// to the train side until it holds at least `floor(fraction · n)` sites.
/// Both sides are guaranteed non-empty.
pub fn split_train_val(
    sites: &[(u32, u32)], // (site_id, cluster)
    fraction: f64,
    seed: u64,
) -> Result<(Vec<u32>, Vec<u32>)> {
    if sites.len() < 2 {
        return Err(Error::InvalidConfig("split needs at least 2 sites".into()));
    }
    if !(0.0..1.0).contains(&fraction) || fraction == 0.0 {
        return Err(Error::InvalidConfig(format!("split fraction {fraction} outside (0,1)")));
    }

    // Clusters in order of first appearance, each with its member sites.
    let mut order: Vec<u32> = Vec::new();
    let mut members: std::collections::HashMap<u32, Vec<u32>> = std::collections::HashMap::new();
    for &(site, cluster) in sites {
        members.entry(cluster).or_insert_with(|| {
            order.push(cluster);
            Vec::new()
        });
        members.get_mut(&cluster).unwrap().push(site);
    }

    let mut rng = stream_rng(seed, Stream::Split, &[]);
    order.shuffle(&mut rng);

    let target = (fraction * sites.len() as f64).floor() as usize;
    let mut train: Vec<u32> = Vec::new();
    let mut val: Vec<u32> = Vec::new();
    let mut train_clusters: Vec<u32> = Vec::new();
    for cluster in order {
        if train.len() < target {
            train.extend(&members[&cluster]);
            train_clusters.push(cluster);
        } else {
            val.extend(&members[&cluster]);
        }
    }
    // Cluster granularity can leave one side empty; rebalance with the last
    // assigned cluster.
    if val.is_empty() {
        let moved = train_clusters.pop().expect("train held at least one cluster");
        train.retain(|s| !members[&moved].contains(s));
        val.extend(&members[&moved]);
    }
    if train.is_empty() {
        return Err(Error::InvalidConfig(
            "split fraction too small for the cluster granularity".into(),
        ));
    }
    Ok((train, val))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn singleton_sites(n: u32) -> Vec<(u32, u32)> {
        (0..n).map(|i| (i, i)).collect()
    }

    #[test]
    fn sides_are_disjoint_and_cover_everything() {
        let sites = singleton_sites(50);
        let (train, val) = split_train_val(&sites, 0.8, 3).unwrap();
        let mut all: Vec<u32> = train.iter().chain(&val).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
        assert!(train.iter().all(|t| !val.contains(t)));
    }

    #[test]
    fn floor_rule_sizes_with_singleton_clusters() {
        let (train, val) = split_train_val(&singleton_sites(10), 0.8, 5).unwrap();
        assert_eq!(train.len(), 8);
        assert_eq!(val.len(), 2);
        let (train, val) = split_train_val(&singleton_sites(407), 0.8, 5).unwrap();
        assert_eq!(train.len(), (407.0_f64 * 0.8).floor() as usize);
        assert_eq!(val.len(), 407 - train.len());
    }

    #[test]
    fn clusters_never_straddle_the_split() {
        // 12 sites in 4 clusters of 3.
        let sites: Vec<(u32, u32)> = (0..12).map(|i| (i, i / 3)).collect();
        for seed in 0..20 {
            let (train, val) = split_train_val(&sites, 0.7, seed).unwrap();
            for cluster in 0..4u32 {
                let ids: Vec<u32> = (cluster * 3..cluster * 3 + 3).collect();
                let in_train = ids.iter().filter(|i| train.contains(i)).count();
                let in_val = ids.iter().filter(|i| val.contains(i)).count();
                assert!(
                    in_train == 3 && in_val == 0 || in_train == 0 && in_val == 3,
                    "cluster {cluster} straddles the split (seed {seed})"
                );
            }
        }
    }

    #[test]
    fn deterministic_per_seed_and_sensitive_to_it() {
        let sites = singleton_sites(40);
        let a = split_train_val(&sites, 0.8, 9).unwrap();
        let b = split_train_val(&sites, 0.8, 9).unwrap();
        assert_eq!(a, b);
        let c = split_train_val(&sites, 0.8, 10).unwrap();
        assert_ne!(a, c);
        assert_eq!(a.0.len(), c.0.len());
    }

    #[test]
    fn degenerate_inputs_rejected() {
        assert!(split_train_val(&[(0, 0)], 0.8, 1).is_err());
        assert!(split_train_val(&singleton_sites(4), 0.0, 1).is_err());
        assert!(split_train_val(&singleton_sites(4), 1.0, 1).is_err());
    }

    #[test]
    fn one_giant_cluster_still_yields_two_sides() {
        // Everything in one cluster except a lone site.
        let mut sites: Vec<(u32, u32)> = (0..9).map(|i| (i, 0)).collect();
        sites.push((9, 1));
        for seed in 0..10 {
            let (train, val) = split_train_val(&sites, 0.8, seed).unwrap();
            assert!(!train.is_empty() && !val.is_empty(), "seed {seed}");
        }
    }
}
