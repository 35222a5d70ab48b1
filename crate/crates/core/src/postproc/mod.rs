//! Posterior summaries, fitted trajectories, model comparison and PAM
//! clustering of core-1 profiles.

mod layout;
mod pam;
mod summary;
mod trajectories;

pub use layout::{core1_feature_matrix, unflatten_features, FactorLayout};
pub use pam::{
    exhaustive_cost, pam, pam_cluster, pam_multistart, ClusterReport, DistanceMatrix, Metric, PamOptions, PamResult,
    DEFAULT_RESTARTS,
};
pub use summary::{summarize, summarize_columns, Effect, ParamSummary, PosteriorSummary, QUANTILE_RULE};
pub use trajectories::{compare_loglik, fitted_trajectories, posterior_mean_rates, ModelComparison, TrajectoryRow};

/// Linear interpolation between order statistics (R type 7) on sorted data.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type7_quantiles() {
        let xs: alloc::vec::Vec<f64> = (1..=100).map(f64::from).collect();
        // h = 99 * 0.025 = 2.475 -> x[2] + 0.475 * (x[3] - x[2])
        assert!((quantile_sorted(&xs, 0.025) - 3.475).abs() < 1e-12);
        assert!((quantile_sorted(&xs, 0.975) - 97.525).abs() < 1e-12);
        assert_eq!(quantile_sorted(&xs, 0.0), 1.0);
        assert_eq!(quantile_sorted(&xs, 1.0), 100.0);
        assert_eq!(quantile_sorted(&[4.0], 0.3), 4.0);
    }
}
