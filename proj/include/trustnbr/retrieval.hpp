#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trustnbr/attribution.hpp"
#include "trustnbr/dataset.hpp"

namespace trustnbr {

/// sqrt(sum_j w_j (a_j - b_j)^2). Throws on length mismatch or negative weight.
double weighted_euclidean(std::span<const double> w, std::span<const double> a, std::span<const double> b);

/// The four retrieval/visualization distances.
///   Features        d(1, x_a, x_b)
///   Shap            d(1, phi_a, phi_b)
///   GlobalWeighted  d(|phi| averaged over the case base, x_a, x_b)
///   LocalWeighted   d(|phi_q|, x_a, x_b), q the query being assessed
enum class DistanceKind { Features, Shap, GlobalWeighted, LocalWeighted };

inline constexpr DistanceKind kAllDistanceKinds[] = {DistanceKind::Features, DistanceKind::Shap,
                                                     DistanceKind::GlobalWeighted,
                                                     DistanceKind::LocalWeighted};

/// "F", "S", "G", "L".
std::string_view to_letter(DistanceKind kind);
std::optional<DistanceKind> distance_kind_from_letter(std::string_view letter);

/// Feature and SHAP vectors of one instance, borrowed.
struct CaseRef {
    std::span<const double> features;
    std::span<const double> phi;
};

struct Case {
    InstanceId id = 0;
    std::vector<double> features;
    ShapVector shap;
    int true_label = 0;
    bool label_verified = true;
    std::optional<std::int64_t> timestamp;

    CaseRef ref() const { return {features, shap.phi}; }
};

/// Immutable store of labeled historical instances in flat row-major layout.
class CaseBase {
public:
    CaseBase() = default;
    CaseBase(std::vector<Case> cases, GlobalImportance gi, std::vector<std::string> feature_names = {});

    std::size_t size() const { return ids_.size(); }
    bool empty() const { return ids_.empty(); }
    std::size_t n_features() const { return m_; }

    InstanceId id(std::size_t i) const { return ids_[i]; }
    int label(std::size_t i) const { return labels_[i]; }
    bool label_verified(std::size_t i) const { return verified_[i] != 0; }
    std::span<const double> features(std::size_t i) const { return features_.row(i); }
    std::span<const double> phi(std::size_t i) const { return phi_.row(i); }
    CaseRef ref(std::size_t i) const { return {features(i), phi(i)}; }
    Case case_at(std::size_t i) const;

    const GlobalImportance& global_importance() const { return gi_; }
    const std::vector<std::string>& feature_names() const { return feature_names_; }

    /// Directory container: casebase.json plus raw little-endian matrices.
    void save(const std::filesystem::path& dir) const;
    static CaseBase load(const std::filesystem::path& dir);

private:
    std::size_t m_ = 0;
    std::vector<InstanceId> ids_;
    std::vector<int> labels_;
    std::vector<char> verified_;
    Matrix features_;
    Matrix phi_;
    std::vector<double> base_values_;
    std::vector<double> outputs_;
    GlobalImportance gi_;
    std::vector<std::string> feature_names_;
};

/// A distance of one kind, bound to its weight vector. For LocalWeighted the weights
/// come from the query, and stay fixed for every pair evaluated with this object.
class DistanceFunction {
public:
    DistanceFunction(DistanceKind kind, std::span<const double> query_phi, const GlobalImportance& gi);

    double operator()(CaseRef a, CaseRef b) const;
    DistanceKind kind() const { return kind_; }
    const std::vector<double>& weights() const { return weights_; }

private:
    DistanceKind kind_;
    std::vector<double> weights_;
};

double distance(DistanceKind kind, CaseRef query, CaseRef other, const CaseBase& cb);

/// Case base from the labeled train and test rows. `shap` rows align with train rows
/// followed by test rows.
CaseBase build_case_base(const Dataset& train, const Dataset& test, const ShapMatrix& shap,
                         const GlobalImportance& gi);

struct Neighbor {
    std::size_t index = 0;  ///< row in the case base
    InstanceId id = 0;
    double distance = 0.0;
    friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Ascending by (distance, id).
struct NeighborSet {
    InstanceId query_id = 0;
    DistanceKind kind = DistanceKind::Features;
    std::vector<Neighbor> neighbors;
};

/// Exact k-NN by full scan; returns min(k, |cb|) neighbors.
NeighborSet retrieve_k_nearest(const CaseBase& cb, InstanceId query_id, CaseRef query, std::size_t k,
                               DistanceKind kind);

}  // namespace trustnbr
