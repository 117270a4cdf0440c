//! Ranking of models across many metrics, summarised per spatial filter.
//!
//! 1. Every metric column is ranked (1 = best), ties sharing the average of
//!    their positions.
//! 2. Ranks are averaged over the metrics that share a filter.
//! 3. The model with the lowest average rank wins that filter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{FilterSpec, LossSpec};
use crate::scores::Orientation;

/// Metric values, one row per model and one column per metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricMatrix {
    pub model_ids: Vec<String>,
    pub metric_specs: Vec<LossSpec>,
    pub values: Vec<Vec<f64>>,
}

impl MetricMatrix {
    pub fn new(model_ids: Vec<String>, metric_specs: Vec<LossSpec>, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != model_ids.len() {
            return Err(Error::Argument(format!(
                "{} value rows for {} models",
                values.len(),
                model_ids.len()
            )));
        }
        for (m, row) in model_ids.iter().zip(&values) {
            if row.len() != metric_specs.len() {
                return Err(Error::Argument(format!(
                    "model '{m}' has {} values for {} metrics",
                    row.len(),
                    metric_specs.len()
                )));
            }
            if let Some(k) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::Argument(format!(
                    "non-finite value {} for model '{m}', metric '{}'",
                    row[k], metric_specs[k]
                )));
            }
        }
        Ok(Self {
            model_ids,
            metric_specs,
            values,
        })
    }

    pub fn n_models(&self) -> usize {
        self.model_ids.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankMatrix {
    pub model_ids: Vec<String>,
    pub metric_specs: Vec<LossSpec>,
    pub ranks: Vec<Vec<f64>>,
}

/// Ranks of one column, lower keys ranking first; ties get average ranks.
pub fn average_ranks(keys: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]));
    let mut ranks = vec![0.0; keys.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && keys[order[j]] == keys[order[i]] {
            j += 1;
        }
        // positions i+1 ..= j share their mean
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

pub fn rank_models(matrix: &MetricMatrix) -> Result<RankMatrix> {
    let checked = MetricMatrix::new(
        matrix.model_ids.clone(),
        matrix.metric_specs.clone(),
        matrix.values.clone(),
    )?;
    let m = checked.n_models();
    let mut ranks = vec![vec![0.0; checked.metric_specs.len()]; m];
    for (k, spec) in checked.metric_specs.iter().enumerate() {
        let keys: Vec<f64> = checked
            .values
            .iter()
            .map(|row| match spec.score.orientation() {
                Orientation::Negative => row[k],
                Orientation::Positive => -row[k],
            })
            .collect();
        for (i, r) in average_ranks(&keys).into_iter().enumerate() {
            ranks[i][k] = r;
        }
    }
    Ok(RankMatrix {
        model_ids: checked.model_ids,
        metric_specs: checked.metric_specs,
        ranks,
    })
}

/// Distinct filters of a metric list, in first-appearance order.
pub fn filters_in_order(specs: &[LossSpec]) -> Vec<FilterSpec> {
    let mut out: Vec<FilterSpec> = Vec::new();
    for s in specs {
        if !out.contains(&s.filter) {
            out.push(s.filter);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryMatrix {
    pub model_ids: Vec<String>,
    pub filters: Vec<FilterSpec>,
    /// Mean rank of each model over the metrics of each filter.
    pub values: Vec<Vec<f64>>,
}

/// Averages ranks over the metrics of each filter in `filters`. Every metric
/// must use one of the listed filters and every listed filter must have at
/// least one metric.
pub fn summary_scores(ranks: &RankMatrix, filters: &[FilterSpec]) -> Result<SummaryMatrix> {
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); filters.len()];
    for (k, spec) in ranks.metric_specs.iter().enumerate() {
        let f = filters
            .iter()
            .position(|f| *f == spec.filter)
            .ok_or_else(|| Error::Argument(format!("metric '{spec}' uses an unlisted filter")))?;
        members[f].push(k);
    }
    if let Some(f) = members.iter().position(|m| m.is_empty()) {
        return Err(Error::Argument(format!("no metrics use filter {}", filters[f])));
    }
    let values = ranks
        .ranks
        .iter()
        .map(|row| {
            members
                .iter()
                .map(|ks| ks.iter().map(|&k| row[k]).sum::<f64>() / ks.len() as f64)
                .collect()
        })
        .collect();
    Ok(SummaryMatrix {
        model_ids: ranks.model_ids.clone(),
        filters: filters.to_vec(),
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Winner {
    pub filter: FilterSpec,
    pub model_id: String,
    pub summary_score: f64,
    /// Other models with the same best summary score.
    pub tied_with: Vec<String>,
}

/// Lowest mean rank per filter; among equal scores the lexicographically
/// smallest model id wins and the others are listed.
pub fn best_per_filter(summary: &SummaryMatrix) -> Vec<Winner> {
    summary
        .filters
        .iter()
        .enumerate()
        .filter_map(|(f, &filter)| {
            let best = summary
                .values
                .iter()
                .map(|row| row[f])
                .min_by(f64::total_cmp)?;
            let mut tied: Vec<&String> = summary
                .model_ids
                .iter()
                .zip(&summary.values)
                .filter(|(_, row)| row[f] == best)
                .map(|(id, _)| id)
                .collect();
            tied.sort();
            let winner = tied.remove(0).clone();
            Some(Winner {
                filter,
                model_id: winner,
                summary_score: best,
                tied_with: tied.into_iter().cloned().collect(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::enumerate_configs;
    use proptest::prelude::*;

    fn spec(id: &str) -> LossSpec {
        id.parse().unwrap()
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("m{i:03}")).collect()
    }

    #[test]
    fn orientation_decides_direction() {
        let specs = vec![spec("brier_nbhd_r0"), spec("fss_nbhd_r0")];
        let m = MetricMatrix::new(ids(3), specs, vec![vec![0.1, 0.9], vec![0.3, 0.5], vec![0.2, 0.7]]).unwrap();
        let r = rank_models(&m).unwrap();
        assert_eq!(r.ranks, vec![vec![1.0, 1.0], vec![3.0, 3.0], vec![2.0, 2.0]]);
    }

    #[test]
    fn ties_share_average_rank() {
        assert_eq!(average_ranks(&[1.0, 1.0, 3.0]), vec![1.5, 1.5, 3.0]);
        assert_eq!(average_ranks(&[5.0; 4]), vec![2.5; 4]);
        let r = average_ranks(&(0..120).map(|i| i as f64).collect::<Vec<_>>());
        assert_eq!((r[0], r[119]), (1.0, 120.0));
    }

    #[test]
    fn non_finite_is_named() {
        let err = MetricMatrix::new(vec!["a".into(), "b".into()], vec![spec("iou_nbhd_r2")], vec![vec![0.1], vec![f64::NAN]])
            .unwrap_err()
            .to_string();
        assert!(err.contains("'b'") && err.contains("iou_nbhd_r2"), "{err}");
    }

    #[test]
    fn one_metric_per_filter_summary_is_the_rank() {
        let specs = vec![spec("brier_nbhd_r1"), spec("brier_F0-0.1")];
        let m = MetricMatrix::new(ids(2), specs.clone(), vec![vec![0.1, 0.3], vec![0.2, 0.1]]).unwrap();
        let r = rank_models(&m).unwrap();
        let s = summary_scores(&r, &filters_in_order(&specs)).unwrap();
        assert_eq!(s.values, r.ranks);
        assert!(summary_scores(&r, &filters_in_order(&specs)[..1]).is_err());
    }

    #[test]
    fn table_enumeration_has_forty_filters() {
        assert_eq!(filters_in_order(&enumerate_configs()).len(), 40);
    }

    #[test]
    fn distinct_winners_and_ties() {
        // model a best on neighbourhood, b best on Fourier, c and d tie on wavelet
        let specs = vec![spec("brier_nbhd_r1"), spec("brier_F0-0.1"), spec("brier_W0-0.1")];
        let vals = vec![
            vec![0.1, 0.5, 0.5],
            vec![0.5, 0.1, 0.5],
            vec![0.5, 0.5, 0.1],
            vec![0.6, 0.6, 0.1],
        ];
        let names: Vec<String> = ["a", "b", "d", "c"].iter().map(|s| s.to_string()).collect();
        let m = MetricMatrix::new(names, specs.clone(), vals).unwrap();
        let s = summary_scores(&rank_models(&m).unwrap(), &filters_in_order(&specs)).unwrap();
        let w = best_per_filter(&s);
        assert_eq!(w.len(), 3);
        assert_eq!((w[0].model_id.as_str(), w[1].model_id.as_str()), ("a", "b"));
        assert_eq!(w[2].model_id, "c");
        assert_eq!(w[2].tied_with, vec!["d".to_string()]);
    }

    proptest! {
        #[test]
        fn rank_sums_and_monotone_invariance(
            m in 1usize..25,
            k in 1usize..6,
            seed in any::<u64>(),
            scale in 0.1f64..10.0,
            shift in -5.0f64..5.0,
        ) {
            let all = enumerate_configs();
            let specs: Vec<LossSpec> = (0..k).map(|i| all[(seed as usize + 37 * i) % all.len()]).collect();
            // coarse values so ties are common
            let vals: Vec<Vec<f64>> = (0..m)
                .map(|i| (0..k).map(|j| ((seed >> ((i * 7 + j * 3) % 60)) % 5) as f64 / 4.0).collect())
                .collect();
            let r = rank_models(&MetricMatrix::new(ids(m), specs.clone(), vals.clone()).unwrap()).unwrap();
            for j in 0..k {
                let sum: f64 = r.ranks.iter().map(|row| row[j]).sum();
                prop_assert_eq!(sum, (m * (m + 1)) as f64 / 2.0);
            }
            let warped: Vec<Vec<f64>> = vals
                .iter()
                .map(|row| row.iter().map(|v| (scale * v + shift).exp()).collect())
                .collect();
            let r2 = rank_models(&MetricMatrix::new(ids(m), specs, warped).unwrap()).unwrap();
            prop_assert_eq!(r.ranks, r2.ranks);
        }

        #[test]
        fn winners_follow_models_under_relabelling(m in 2usize..12, seed in any::<u64>()) {
            let specs = vec![spec("csi_nbhd_r2"), spec("brier_nbhd_r2"), spec("fss_W0-0.2")];
            let vals: Vec<Vec<f64>> = (0..m)
                .map(|i| (0..3).map(|j| ((seed.rotate_left((i * 5 + j) as u32) >> 20) % 1000) as f64 / 1000.0).collect())
                .collect();
            let filters = filters_in_order(&specs);
            let win = |names: Vec<String>, rows: Vec<Vec<f64>>| {
                let mm = MetricMatrix::new(names, specs.clone(), rows).unwrap();
                best_per_filter(&summary_scores(&rank_models(&mm).unwrap(), &filters).unwrap())
            };
            let base = win(ids(m), vals.clone());
            let mut perm: Vec<usize> = (0..m).collect();
            perm.rotate_left((seed % m as u64) as usize);
            let names: Vec<String> = perm.iter().map(|&i| ids(m)[i].clone()).collect();
            let rows: Vec<Vec<f64>> = perm.iter().map(|&i| vals[i].clone()).collect();
            let permuted = win(names, rows);
            prop_assert_eq!(base, permuted);
        }
    }
}
