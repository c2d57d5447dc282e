//! Seeded k-medoids over a precomputed distance matrix.
//!
//! Deliberately the simple randomized variant: start from k seeded random
//! medoids, assign every point to its nearest medoid, then each pass
//! proposes one random in-cluster replacement per cluster and accepts it
//! only if the total assignment cost strictly drops. Stops when a pass
//! changes nothing or after `max_iters` passes. Pruned matrix entries
//! participate through their lower bounds (the conservative substitution),
//! so clustering works on pruned matrices too.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::distance::DistanceMatrix;
use crate::seed::{draw_index, rng_from_seed, sample_indices};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub k: usize,
    /// Matrix row index of each cluster's medoid, by cluster slot.
    pub medoid_indices: Vec<usize>,
    /// Cluster slot of every matrix row.
    pub assignment: Vec<usize>,
    /// Sum of distances from each point to its medoid.
    pub total_cost: f64,
    /// Completed improvement passes.
    pub iterations: usize,
    /// Cost after the initial assignment and after every pass; accepted
    /// swaps only ever lower it, so this is non-increasing.
    pub cost_trace: Vec<f64>,
}

fn assign_all(matrix: &DistanceMatrix, medoids: &[usize]) -> (Vec<usize>, f64) {
    let n = matrix.n();
    let mut assignment = vec![0usize; n];
    let mut cost = 0.0;
    for p in 0..n {
        // A medoid always owns itself, whatever the diagonal values say.
        if let Some(slot) = medoids.iter().position(|&m| m == p) {
            assignment[p] = slot;
            cost += matrix.value(p, p);
            continue;
        }
        let mut best_slot = 0;
        let mut best_key: Option<(f64, &str)> = None;
        for (slot, &m) in medoids.iter().enumerate() {
            let key = (matrix.value(p, m), matrix.ids()[m].as_str());
            // Ties on distance go to the lexicographically smallest medoid id.
            let better = match best_key {
                None => true,
                Some(b) => key.0 < b.0 || (key.0 == b.0 && key.1 < b.1),
            };
            if better {
                best_key = Some(key);
                best_slot = slot;
            }
        }
        assignment[p] = best_slot;
        cost += best_key.expect("k >= 1").0;
    }
    (assignment, cost)
}

/// Cluster the matrix's rows around `k` medoids.
pub fn kmedoids(
    matrix: &DistanceMatrix,
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<ClusterAssignment> {
    let n = matrix.n();
    if n == 0 {
        return Err(Error::EmptyInput {
            what: "distance matrix",
        });
    }
    if k == 0 || k > n {
        return Err(Error::InvalidArgument {
            message: format!("k = {k} must be in 1..={n}"),
        });
    }
    if max_iters == 0 {
        return Err(Error::InvalidArgument {
            message: "max_iters must be positive".into(),
        });
    }

    let mut rng = rng_from_seed(seed);
    let mut medoids = sample_indices(&mut rng, n, k);
    let (mut assignment, mut cost) = assign_all(matrix, &medoids);
    let mut cost_trace = vec![cost];
    let mut iterations = 0;

    while iterations < max_iters {
        let mut changed = false;
        for slot in 0..k {
            let members: Vec<usize> = (0..n)
                .filter(|&p| assignment[p] == slot && p != medoids[slot])
                .collect();
            if members.is_empty() {
                continue;
            }
            let candidate = members[draw_index(&mut rng, members.len())];
            let mut trial = medoids.clone();
            trial[slot] = candidate;
            let (trial_assignment, trial_cost) = assign_all(matrix, &trial);
            if trial_cost < cost {
                medoids = trial;
                assignment = trial_assignment;
                cost = trial_cost;
                changed = true;
            }
        }
        iterations += 1;
        cost_trace.push(cost);
        if !changed {
            break;
        }
    }

    Ok(ClusterAssignment {
        k,
        medoid_indices: medoids,
        assignment,
        total_cost: cost,
        iterations,
        cost_trace,
    })
}

/// Majority labelling of clusters and the induced classification rates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterLabeling {
    /// Majority label per cluster slot; ties and empty clusters go negative.
    pub cluster_labels: Vec<Label>,
    pub true_positive_rate: f64,
    pub false_positive_rate: f64,
    pub accuracy: f64,
}

/// Label each cluster by majority vote of its members' true labels
/// (`labels[i]` belongs to matrix row `i`), then score the corpus as if
/// cluster labels were predictions.
pub fn label_clusters(
    assignment: &ClusterAssignment,
    labels: &[Label],
) -> Result<ClusterLabeling> {
    if labels.len() != assignment.assignment.len() {
        return Err(Error::InvalidArgument {
            message: format!(
                "{} labels for {} clustered points",
                labels.len(),
                assignment.assignment.len()
            ),
        });
    }
    let mut per_cluster = vec![[0u64; 2]; assignment.k];
    for (&slot, &label) in assignment.assignment.iter().zip(labels) {
        match label {
            Label::Negative => per_cluster[slot][0] += 1,
            Label::Positive => per_cluster[slot][1] += 1,
        }
    }
    let cluster_labels: Vec<Label> = per_cluster
        .iter()
        .map(|[neg, pos]| {
            if pos > neg {
                Label::Positive
            } else {
                Label::Negative
            }
        })
        .collect();

    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut total_pos = 0u64;
    let mut total_neg = 0u64;
    for (&slot, &label) in assignment.assignment.iter().zip(labels) {
        let predicted = cluster_labels[slot];
        match label {
            Label::Positive => {
                total_pos += 1;
                if predicted == Label::Positive {
                    tp += 1;
                }
            }
            Label::Negative => {
                total_neg += 1;
                if predicted == Label::Positive {
                    fp += 1;
                }
            }
        }
    }
    let rate = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    Ok(ClusterLabeling {
        cluster_labels,
        true_positive_rate: rate(tp, total_pos),
        false_positive_rate: rate(fp, total_neg),
        accuracy: rate(tp + (total_neg - fp), total_pos + total_neg),
    })
}

/// Write `sample_id,cluster_index,is_medoid` rows in matrix id order.
pub fn write_assignment_csv(
    assignment: &ClusterAssignment,
    matrix: &DistanceMatrix,
    out: &Path,
) -> Result<()> {
    let mut w = csv::Writer::from_path(out)?;
    w.write_record(["sample_id", "cluster_index", "is_medoid"])?;
    for (i, id) in matrix.ids().iter().enumerate() {
        let slot = assignment.assignment[i];
        w.write_record([
            id.as_str(),
            &slot.to_string(),
            if assignment.medoid_indices[slot] == i {
                "true"
            } else {
                "false"
            },
        ])?;
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Dense symmetric matrix with two obvious blobs: rows 0..4 are close
    /// to each other, rows 4..8 are close to each other, cross distances
    /// are large.
    fn two_blob_matrix() -> DistanceMatrix {
        let n = 8;
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    dense[i][j] = 0.01;
                } else if (i < 4) == (j < 4) {
                    dense[i][j] = 0.2 + 0.001 * (i + j) as f64;
                } else {
                    dense[i][j] = 0.95;
                }
            }
        }
        let ids = (0..n).map(|i| format!("p{i}")).collect();
        DistanceMatrix::from_dense(ids, &dense, "test:fp".into()).unwrap()
    }

    #[test]
    fn finds_two_blobs() {
        let matrix = two_blob_matrix();
        let result = kmedoids(&matrix, 2, 7, 100).unwrap();
        let slot0 = result.assignment[0];
        assert!(result.assignment[..4].iter().all(|&s| s == slot0));
        assert!(result.assignment[4..].iter().all(|&s| s != slot0));
    }

    #[test]
    fn cost_trace_never_increases() {
        let matrix = two_blob_matrix();
        for seed in 0..20 {
            let result = kmedoids(&matrix, 3, seed, 50).unwrap();
            for w in result.cost_trace.windows(2) {
                assert!(w[1] <= w[0], "cost rose: {:?}", result.cost_trace);
            }
            assert_eq!(*result.cost_trace.last().unwrap(), result.total_cost);
        }
    }

    #[test]
    fn medoids_own_themselves() {
        let matrix = two_blob_matrix();
        let result = kmedoids(&matrix, 3, 11, 100).unwrap();
        for (slot, &m) in result.medoid_indices.iter().enumerate() {
            assert_eq!(result.assignment[m], slot);
        }
    }

    #[test]
    fn same_seed_same_clustering() {
        let matrix = two_blob_matrix();
        let a = kmedoids(&matrix, 2, 5, 100).unwrap();
        let b = kmedoids(&matrix, 2, 5, 100).unwrap();
        assert_eq!(a.assignment, b.assignment);
        assert_eq!(a.medoid_indices, b.medoid_indices);
        assert_eq!(a.total_cost, b.total_cost);
    }

    #[test]
    fn degenerate_k_equals_n() {
        let matrix = two_blob_matrix();
        let result = kmedoids(&matrix, 8, 3, 10).unwrap();
        // Every point is a medoid; the only cost is the diagonal.
        let expected: f64 = (0..8).map(|i| matrix.value(i, i)).sum();
        assert!((result.total_cost - expected).abs() < 1e-12);
        assert_eq!(result.iterations, 1);
    }

    #[test]
    fn rejects_bad_k() {
        let matrix = two_blob_matrix();
        assert!(kmedoids(&matrix, 0, 1, 10).is_err());
        assert!(kmedoids(&matrix, 9, 1, 10).is_err());
        assert!(kmedoids(&matrix, 2, 1, 0).is_err());
    }

    #[test]
    fn majority_labels_and_tie_goes_negative() {
        let assignment = ClusterAssignment {
            k: 2,
            medoid_indices: vec![0, 3],
            assignment: vec![0, 0, 0, 1, 1, 1, 1],
            total_cost: 0.0,
            iterations: 1,
            cost_trace: vec![0.0],
        };
        // Cluster 0: 2 pos, 1 neg -> positive. Cluster 1: 2/2 tie -> negative.
        let labels = vec![
            Label::Positive,
            Label::Positive,
            Label::Negative,
            Label::Positive,
            Label::Positive,
            Label::Negative,
            Label::Negative,
        ];
        let labeled = label_clusters(&assignment, &labels).unwrap();
        assert_eq!(labeled.cluster_labels, vec![Label::Positive, Label::Negative]);
        // TP: 2 of 4 positives sit in the positive cluster.
        assert!((labeled.true_positive_rate - 0.5).abs() < 1e-12);
        // FP: 1 of 3 negatives sits in the positive cluster.
        assert!((labeled.false_positive_rate - 1.0 / 3.0).abs() < 1e-12);
        assert!((labeled.accuracy - 4.0 / 7.0).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn clustering_invariants(seed in any::<u64>(), k in 1usize..=8) {
            let matrix = two_blob_matrix();
            let result = kmedoids(&matrix, k, seed, 30).unwrap();
            prop_assert_eq!(result.medoid_indices.len(), k);
            prop_assert!(result.assignment.iter().all(|&s| s < k));
            for w in result.cost_trace.windows(2) {
                prop_assert!(w[1] <= w[0]);
            }
            for (slot, &m) in result.medoid_indices.iter().enumerate() {
                prop_assert_eq!(result.assignment[m], slot);
            }
        }
    }
}
