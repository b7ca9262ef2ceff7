#include "trustnbr/simuser.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "trustnbr/error.hpp"
#include "trustnbr/io.hpp"
#include "trustnbr/rng.hpp"

namespace trustnbr {

std::size_t AlertSet::positives() const {
    return static_cast<std::size_t>(
        std::count_if(alerts.begin(), alerts.end(), [](const Alert& a) { return a.true_label == 1; }));
}

namespace {

AlertSet collect_alerts(const Forest& f, const Dataset& production, double threshold, std::vector<std::size_t>& rows) {
    if (production.size() == 0) throw std::invalid_argument("build_alert_set: empty production set");
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw std::invalid_argument("build_alert_set: threshold outside [0,1]");
    AlertSet set;
    set.threshold = threshold;
    for (std::size_t i = 0; i < production.size(); ++i) {
        const double p = predict_proba(f, production.features.row(i));
        if (p < threshold) continue;
        Alert a;
        a.id = production.ids[i];
        a.features.assign(production.features.row(i).begin(), production.features.row(i).end());
        a.model_confidence = p;
        a.true_label = production.labels[i];
        set.alerts.push_back(std::move(a));
        rows.push_back(i);
    }
    if (set.alerts.empty())
        throw NoAlertsError("no production instance reaches the alert threshold " + format_double(threshold));
    return set;
}

}  // namespace

AlertSet build_alert_set(const Forest& f, const Dataset& production, double threshold, const Matrix& background) {
    std::vector<std::size_t> rows;
    AlertSet set = collect_alerts(f, production, threshold, rows);
    const ShapMatrix shap = shap_for_dataset(f, production.features.select_rows(rows), background);
    for (std::size_t i = 0; i < set.alerts.size(); ++i) set.alerts[i].shap = shap[i];
    return set;
}

AlertSet build_alert_set(const Forest& f, const Dataset& production, double threshold, const ShapMatrix& production_shap) {
    if (production_shap.size() != production.size())
        throw DimensionError("build_alert_set: SHAP rows do not align with production rows");
    std::vector<std::size_t> rows;
    AlertSet set = collect_alerts(f, production, threshold, rows);
    for (std::size_t i = 0; i < set.alerts.size(); ++i) set.alerts[i].shap = production_shap[rows[i]];
    return set;
}

// ---------------------------------------------------------------------------

ConfidenceEstimate unweighted_confidence(std::span<const int> labels) {
    if (labels.empty()) throw std::invalid_argument("unweighted_confidence: empty neighbor set");
    std::size_t pos = 0;
    for (int y : labels) pos += y == 1 ? 1 : 0;
    return {static_cast<double>(pos) / static_cast<double>(labels.size()), ConfidenceMode::Unweighted, labels.size(),
            false};
}

ConfidenceEstimate unweighted_confidence(const NeighborSet& neighbors, const CaseBase& cb) {
    std::vector<int> labels;
    labels.reserve(neighbors.neighbors.size());
    for (const auto& n : neighbors.neighbors) labels.push_back(cb.label(n.index));
    return unweighted_confidence(labels);
}

ConfidenceEstimate weighted_confidence(std::span<const int> labels, std::span<const double> distances) {
    if (labels.empty()) throw std::invalid_argument("weighted_confidence: empty neighbor set");
    if (labels.size() != distances.size()) throw DimensionError("weighted_confidence: labels/distances length mismatch");

    double min_nonzero = std::numeric_limits<double>::infinity();
    bool any_zero = false;
    for (double d : distances) {
        if (!(d >= 0.0)) throw std::invalid_argument("weighted_confidence: negative distance");
        if (d == 0.0)
            any_zero = true;
        else
            min_nonzero = std::min(min_nonzero, d);
    }
    if (std::isinf(min_nonzero)) {
        auto fallback = unweighted_confidence(labels);
        fallback.epsilon_applied = true;
        return fallback;
    }
    const double epsilon = min_nonzero / 10.0;
    const double d_min = any_zero ? epsilon : min_nonzero;

    // Weights d_min / d_j are proportional to 1 / d_j and equal exactly 1 for the
    // closest neighbors, so uniform distances reproduce the unweighted fraction.
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < labels.size(); ++j) {
        const double d = distances[j] == 0.0 ? epsilon : distances[j];
        const double w = d == d_min ? 1.0 : d_min / d;
        den += w;
        if (labels[j] == 1) num += w;
    }
    return {num / den, ConfidenceMode::InverseDistance, labels.size(), any_zero};
}

double mean_average_precision(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw DimensionError("mean_average_precision: length mismatch");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::size_t hits = 0;
    double sum = 0.0;
    for (std::size_t r = 0; r < order.size(); ++r) {
        if (labels[order[r]] != 1) continue;
        ++hits;
        sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
    if (hits == 0) throw std::invalid_argument("mean_average_precision: no positive labels");
    return sum / static_cast<double>(hits);
}

// ---------------------------------------------------------------------------

std::string_view to_letter(VizKind kind) {
    switch (kind) {
        case VizKind::Features: return "F";
        case VizKind::Shap: return "S";
        case VizKind::GlobalWeighted: return "G";
        case VizKind::LocalWeighted: return "L";
        case VizKind::Unweighted: return "U";
    }
    return "?";
}

std::optional<VizKind> viz_kind_from_letter(std::string_view letter) {
    for (auto k : kAllVizKinds)
        if (to_letter(k) == letter) return k;
    return std::nullopt;
}

std::optional<DistanceKind> as_distance_kind(VizKind kind) {
    switch (kind) {
        case VizKind::Features: return DistanceKind::Features;
        case VizKind::Shap: return DistanceKind::Shap;
        case VizKind::GlobalWeighted: return DistanceKind::GlobalWeighted;
        case VizKind::LocalWeighted: return DistanceKind::LocalWeighted;
        case VizKind::Unweighted: return std::nullopt;
    }
    return std::nullopt;
}

namespace {

std::vector<int> alert_labels(const AlertSet& alerts) {
    std::vector<int> y;
    y.reserve(alerts.size());
    for (const auto& a : alerts.alerts) y.push_back(a.true_label);
    return y;
}

// Distances from the alert to each retrieved neighbor under the visualization kind.
std::vector<double> viz_distances(const CaseBase& cb, const Alert& alert, const NeighborSet& ns, VizKind viz) {
    std::vector<double> d;
    d.reserve(ns.neighbors.size());
    const auto kind = *as_distance_kind(viz);
    if (kind == ns.kind) {
        for (const auto& n : ns.neighbors) d.push_back(n.distance);
        return d;
    }
    const DistanceFunction dist(kind, alert.shap.phi, cb.global_importance());
    for (const auto& n : ns.neighbors) d.push_back(dist(alert.ref(), cb.ref(n.index)));
    return d;
}

}  // namespace

double run_cell(const CaseBase& cb, const AlertSet& alerts, DistanceKind retrieval, VizKind viz, std::size_t k) {
    std::vector<double> confidence;
    confidence.reserve(alerts.size());
    for (const auto& alert : alerts.alerts) {
        const NeighborSet ns = retrieve_k_nearest(cb, alert.id, alert.ref(), k, retrieval);
        std::vector<int> labels;
        for (const auto& n : ns.neighbors) labels.push_back(cb.label(n.index));
        if (viz == VizKind::Unweighted) {
            confidence.push_back(unweighted_confidence(labels).value);
        } else {
            const auto d = viz_distances(cb, alert, ns, viz);
            confidence.push_back(weighted_confidence(labels, d).value);
        }
    }
    return mean_average_precision(confidence, alert_labels(alerts));
}

// ---------------------------------------------------------------------------

GridConfig GridConfig::up_to(std::size_t k_max) {
    GridConfig c;
    for (std::size_t k = 1; k <= k_max; ++k) c.k_values.push_back(k);
    return c;
}

namespace {

constexpr std::size_t kRetrievalKinds = 4;
constexpr std::size_t kVizKinds = 5;

std::size_t kind_index(DistanceKind k) { return static_cast<std::size_t>(k); }
std::size_t kind_index(VizKind k) { return static_cast<std::size_t>(k); }

}  // namespace

const GridCell& ExperimentGrid::cell(DistanceKind retrieval, VizKind viz, std::size_t k_index) const {
    return cells.at((kind_index(retrieval) * kVizKinds + kind_index(viz)) * k_values.size() + k_index);
}

double ExperimentGrid::mean_user_map(DistanceKind retrieval, VizKind viz, std::size_t k_lo, std::size_t k_hi) const {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < k_values.size(); ++i) {
        if (k_values[i] < k_lo || k_values[i] > k_hi) continue;
        sum += cell(retrieval, viz, i).user_map;
        ++count;
    }
    if (count == 0) throw std::invalid_argument("mean_user_map: no k values in range");
    return sum / static_cast<double>(count);
}

std::vector<HeatmapCell> ExperimentGrid::heatmap() const {
    std::vector<HeatmapCell> out;
    for (auto r : kAllDistanceKinds) {
        for (auto v : kAllVizKinds) {
            double sum = 0.0;
            for (std::size_t i = 0; i < k_values.size(); ++i) sum += cell(r, v, i).user_map - model_map;
            out.push_back({r, v, sum / static_cast<double>(k_values.size())});
        }
    }
    return out;
}

std::string ExperimentGrid::grid_csv() const {
    std::string out = "retrieval,viz,k,user_map,model_map,delta\n";
    for (const auto& c : cells) {
        out += std::string(to_letter(c.retrieval)) + "," + std::string(to_letter(c.viz)) + "," + std::to_string(c.k) +
               "," + format_double(c.user_map) + "," + format_double(model_map) + "," +
               format_double(c.user_map - model_map) + "\n";
    }
    return out;
}

std::string ExperimentGrid::heatmap_csv() const {
    std::string out = "retrieval,viz,mean_delta_over_k\n";
    for (const auto& h : heatmap())
        out += std::string(to_letter(h.retrieval)) + "," + std::string(to_letter(h.viz)) + "," +
               format_double(h.mean_delta) + "\n";
    return out;
}

std::string ExperimentGrid::curves_csv() const {
    std::string out = "k,model_map";
    for (auto r : kAllDistanceKinds)
        for (auto v : kAllVizKinds) out += "," + std::string(to_letter(r)) + "/" + std::string(to_letter(v));
    out += "\n";
    for (std::size_t i = 0; i < k_values.size(); ++i) {
        out += std::to_string(k_values[i]) + "," + format_double(model_map);
        for (auto r : kAllDistanceKinds)
            for (auto v : kAllVizKinds) out += "," + format_double(cell(r, v, i).user_map);
        out += "\n";
    }
    return out;
}

ExperimentGrid run_grid(const CaseBase& cb, const AlertSet& alerts, const GridConfig& config) {
    if (config.k_values.empty()) throw std::invalid_argument("run_grid: empty k grid");
    for (auto k : config.k_values)
        if (k < 1) throw std::invalid_argument("run_grid: k must be >= 1");
    if (alerts.alerts.empty()) throw NoAlertsError("run_grid: empty alert set");
    const std::size_t k_max = *std::max_element(config.k_values.begin(), config.k_values.end());
    const std::size_t n_k = config.k_values.size();
    const std::size_t n_alerts = alerts.size();
    const std::vector<int> truth = alert_labels(alerts);

    // confidence[alert][(r * 5 + v) * n_k + k_index]
    std::vector<std::vector<double>> confidence(n_alerts, std::vector<double>(kRetrievalKinds * kVizKinds * n_k));
    parallel_for(n_alerts, [&](std::size_t a) {
        const Alert& alert = alerts.alerts[a];
        auto& out = confidence[a];
        for (auto r : kAllDistanceKinds) {
            const NeighborSet ns = retrieve_k_nearest(cb, alert.id, alert.ref(), k_max, r);
            std::vector<int> labels;
            for (const auto& n : ns.neighbors) labels.push_back(cb.label(n.index));
            for (auto v : kAllVizKinds) {
                const std::size_t base = (kind_index(r) * kVizKinds + kind_index(v)) * n_k;
                std::vector<double> d;
                if (v != VizKind::Unweighted) d = viz_distances(cb, alert, ns, v);
                for (std::size_t ki = 0; ki < n_k; ++ki) {
                    const std::size_t k = std::min(config.k_values[ki], labels.size());
                    const std::span<const int> lk(labels.data(), k);
                    out[base + ki] = v == VizKind::Unweighted
                                         ? unweighted_confidence(lk).value
                                         : weighted_confidence(lk, std::span<const double>(d.data(), k)).value;
                }
            }
        }
    });

    ExperimentGrid grid;
    grid.k_values = config.k_values;
    std::vector<double> model_scores;
    for (const auto& a : alerts.alerts) model_scores.push_back(a.model_confidence);
    grid.model_map = mean_average_precision(model_scores, truth);

    std::vector<double> scores(n_alerts);
    for (auto r : kAllDistanceKinds) {
        for (auto v : kAllVizKinds) {
            for (std::size_t ki = 0; ki < n_k; ++ki) {
                const std::size_t col = (kind_index(r) * kVizKinds + kind_index(v)) * n_k + ki;
                for (std::size_t a = 0; a < n_alerts; ++a) scores[a] = confidence[a][col];
                grid.cells.push_back({r, v, config.k_values[ki], mean_average_precision(scores, truth)});
            }
        }
    }

    grid.manifest = config.manifest;
    grid.manifest["k_values"] = config.k_values;
    grid.manifest["alert_count"] = n_alerts;
    grid.manifest["alert_positives"] = alerts.positives();
    grid.manifest["alert_threshold"] = alerts.threshold;
    grid.manifest["case_base_size"] = cb.size();
    grid.manifest["model_map"] = grid.model_map;
    return grid;
}

// ---------------------------------------------------------------------------

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double d = a[j] - b[j];
        s += d * d;
    }
    return s;
}

}  // namespace

ClusterDiagnostic shap_cluster_diagnostic(const Matrix& phi, std::span<const int> predicted, std::span<const int> truth,
                                          std::size_t k_clusters, std::uint64_t seed, int max_iter) {
    const std::size_t n = phi.rows();
    if (k_clusters < 1) throw std::invalid_argument("shap_cluster_diagnostic: k_clusters must be >= 1");
    if (n < k_clusters) throw std::invalid_argument("shap_cluster_diagnostic: fewer rows than clusters");
    if (predicted.size() != n || truth.size() != n)
        throw DimensionError("shap_cluster_diagnostic: predictions/labels do not align with SHAP rows");

    // k-means++ seeding
    Rng rng(seed);
    Matrix centers(0, phi.cols());
    std::vector<char> chosen(n, 0);
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    std::size_t first = rng.uniform_index(n);
    for (std::size_t c = 0; c < k_clusters; ++c) {
        std::size_t pick = first;
        if (c > 0) {
            double total = 0.0;
            for (double v : nearest) total += v;
            if (total > 0.0) {
                double target = rng.uniform() * total;
                pick = n;
                for (std::size_t i = 0; i < n; ++i) {
                    if (nearest[i] <= 0.0) continue;
                    pick = i;
                    target -= nearest[i];
                    if (target < 0.0) break;
                }
            } else {
                pick = static_cast<std::size_t>(std::find(chosen.begin(), chosen.end(), 0) - chosen.begin());
            }
        }
        chosen[pick] = 1;
        centers.append_row(phi.row(pick));
        for (std::size_t i = 0; i < n; ++i)
            nearest[i] = std::min(nearest[i], squared_distance(phi.row(i), centers.row(c)));
    }

    std::vector<std::size_t> assignment(n, 0);
    for (int it = 0; it < max_iter; ++it) {
        bool changed = it == 0;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k_clusters; ++c) {
                const double d = squared_distance(phi.row(i), centers.row(c));
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (assignment[i] != best) changed = true;
            assignment[i] = best;
        }
        if (!changed) break;
        Matrix sums(k_clusters, phi.cols(), 0.0);
        std::vector<std::size_t> counts(k_clusters, 0);
        for (std::size_t i = 0; i < n; ++i) {
            ++counts[assignment[i]];
            auto row = phi.row(i);
            for (std::size_t j = 0; j < phi.cols(); ++j) sums(assignment[i], j) += row[j];
        }
        for (std::size_t c = 0; c < k_clusters; ++c) {
            if (counts[c] == 0) continue;  // empty cluster keeps its center
            for (std::size_t j = 0; j < phi.cols(); ++j) centers(c, j) = sums(c, j) / static_cast<double>(counts[c]);
        }
    }

    ClusterDiagnostic out;
    out.assignment = assignment;
    out.clusters.resize(k_clusters);
    std::vector<std::size_t> errors(k_clusters, 0);
    for (std::size_t i = 0; i < n; ++i) {
        auto& c = out.clusters[assignment[i]];
        ++c.size;
        c.inertia += squared_distance(phi.row(i), centers.row(assignment[i]));
        if (predicted[i] != truth[i]) ++errors[assignment[i]];
    }
    for (std::size_t c = 0; c < k_clusters; ++c) {
        auto& s = out.clusters[c];
        s.error_rate = s.size ? static_cast<double>(errors[c]) / static_cast<double>(s.size) : 0.0;
        out.inertia += s.inertia;
    }
    return out;
}

}  // namespace trustnbr
