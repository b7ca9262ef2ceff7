#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "trustnbr/attribution.hpp"
#include "trustnbr/forest.hpp"
#include "trustnbr/retrieval.hpp"

namespace trustnbr {

/// A production instance the model flags positive.
struct Alert {
    InstanceId id = 0;
    std::vector<double> features;
    double model_confidence = 0.0;
    int true_label = 0;  ///< used for scoring only, never for estimating confidence
    ShapVector shap;

    CaseRef ref() const { return {features, shap.phi}; }
};

struct AlertSet {
    std::vector<Alert> alerts;
    double threshold = 0.5;

    std::size_t size() const { return alerts.size(); }
    std::size_t positives() const;
};

/// Production rows with predict_proba >= threshold, with SHAP computed per alert.
/// Throws NoAlertsError when nothing is flagged.
AlertSet build_alert_set(const Forest& f, const Dataset& production, double threshold, const Matrix& background);
/// Same, reusing SHAP vectors already computed for every production row.
AlertSet build_alert_set(const Forest& f, const Dataset& production, double threshold,
                         const ShapMatrix& production_shap);

enum class ConfidenceMode { Unweighted, InverseDistance };

struct ConfidenceEstimate {
    double value = 0.0;
    ConfidenceMode mode = ConfidenceMode::Unweighted;
    std::size_t k_used = 0;
    bool epsilon_applied = false;
};

/// Fraction of positive neighbors.
ConfidenceEstimate unweighted_confidence(std::span<const int> labels);
ConfidenceEstimate unweighted_confidence(const NeighborSet& neighbors, const CaseBase& cb);

/// Inverse-distance weighted fraction of positive neighbors.
///
/// Zero distances are replaced by a tenth of the smallest non-zero distance, so an
/// identical neighbor dominates without silencing the others. If every distance is
/// zero the unweighted estimate is returned.
ConfidenceEstimate weighted_confidence(std::span<const int> labels, std::span<const double> distances);

/// Average precision of `labels` ranked by descending score, ties kept in input order.
double mean_average_precision(std::span<const double> scores, std::span<const int> labels);

/// Visualization distance used by the simulated analyst; Unweighted ignores distances.
enum class VizKind { Features, Shap, GlobalWeighted, LocalWeighted, Unweighted };

inline constexpr VizKind kAllVizKinds[] = {VizKind::Features, VizKind::Shap, VizKind::GlobalWeighted,
                                           VizKind::LocalWeighted, VizKind::Unweighted};

std::string_view to_letter(VizKind kind);
std::optional<VizKind> viz_kind_from_letter(std::string_view letter);
std::optional<DistanceKind> as_distance_kind(VizKind kind);

/// User MAP over the alert set for one (retrieval, visualization, k) setting.
double run_cell(const CaseBase& cb, const AlertSet& alerts, DistanceKind retrieval, VizKind viz, std::size_t k);

struct GridCell {
    DistanceKind retrieval = DistanceKind::Features;
    VizKind viz = VizKind::Unweighted;
    std::size_t k = 1;
    double user_map = 0.0;
};

struct HeatmapCell {
    DistanceKind retrieval = DistanceKind::Features;
    VizKind viz = VizKind::Unweighted;
    double mean_delta = 0.0;  ///< mean over k of (user MAP - model MAP)
};

struct ExperimentGrid {
    std::vector<std::size_t> k_values;
    /// Ordered by retrieval (F,S,G,L), then viz (F,S,G,L,U), then k.
    std::vector<GridCell> cells;
    double model_map = 0.0;
    nlohmann::json manifest;

    const GridCell& cell(DistanceKind retrieval, VizKind viz, std::size_t k_index) const;
    std::vector<HeatmapCell> heatmap() const;
    /// Mean user MAP over k for one combination, restricted to k in [k_lo, k_hi].
    double mean_user_map(DistanceKind retrieval, VizKind viz, std::size_t k_lo, std::size_t k_hi) const;

    /// retrieval,viz,k,user_map,model_map,delta
    std::string grid_csv() const;
    /// retrieval,viz,mean_delta_over_k
    std::string heatmap_csv() const;
    /// k,model_map,<R>/<V>... one column per combination
    std::string curves_csv() const;
};

struct GridConfig {
    std::vector<std::size_t> k_values;
    nlohmann::json manifest = nlohmann::json::object();

    static GridConfig up_to(std::size_t k_max);
};

/// All 4 x 5 combinations over the configured k values. For each alert and retrieval
/// kind the max(k) nearest cases are retrieved once; smaller k use prefixes of that
/// ranking, which is exactly what a separate retrieval would return.
ExperimentGrid run_grid(const CaseBase& cb, const AlertSet& alerts, const GridConfig& config);

struct ClusterSummary {
    std::size_t size = 0;
    double inertia = 0.0;
    double error_rate = 0.0;
};

struct ClusterDiagnostic {
    std::vector<std::size_t> assignment;
    std::vector<ClusterSummary> clusters;
    double inertia = 0.0;
};

/// k-means (k-means++ seeding, Lloyd iterations) over SHAP vectors, reporting the
/// model's error rate inside each cluster.
ClusterDiagnostic shap_cluster_diagnostic(const Matrix& phi, std::span<const int> predicted,
                                          std::span<const int> truth, std::size_t k_clusters,
                                          std::uint64_t seed, int max_iter = 100);

}  // namespace trustnbr
