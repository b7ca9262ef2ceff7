#include "trustnbr/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "trustnbr/error.hpp"
#include "trustnbr/io.hpp"

namespace trustnbr {

namespace {

// Hot loop shared by every distance evaluation.
double weighted_distance_unchecked(const double* w, const double* a, const double* b, std::size_t m) {
    double sum = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        const double d = a[j] - b[j];
        sum += w[j] * d * d;
    }
    return std::sqrt(sum);
}

}  // namespace

double weighted_euclidean(std::span<const double> w, std::span<const double> a, std::span<const double> b) {
    if (w.size() != a.size() || a.size() != b.size())
        throw DimensionError("weighted_euclidean: length mismatch");
    for (double v : w)
        if (!(v >= 0.0)) throw std::invalid_argument("weighted_euclidean: negative weight");
    return weighted_distance_unchecked(w.data(), a.data(), b.data(), w.size());
}

std::string_view to_letter(DistanceKind kind) {
    switch (kind) {
        case DistanceKind::Features: return "F";
        case DistanceKind::Shap: return "S";
        case DistanceKind::GlobalWeighted: return "G";
        case DistanceKind::LocalWeighted: return "L";
    }
    return "?";
}

std::optional<DistanceKind> distance_kind_from_letter(std::string_view letter) {
    for (auto k : kAllDistanceKinds)
        if (to_letter(k) == letter) return k;
    return std::nullopt;
}

// ---------------------------------------------------------------------------

CaseBase::CaseBase(std::vector<Case> cases, GlobalImportance gi, std::vector<std::string> feature_names)
    : gi_(std::move(gi)), feature_names_(std::move(feature_names)) {
    m_ = cases.empty() ? gi_.weights.size() : cases.front().features.size();
    if (gi_.weights.size() != m_) throw DimensionError("case base: global importance length differs from m");
    if (!feature_names_.empty() && feature_names_.size() != m_)
        throw DimensionError("case base: feature_names length differs from m");
    for (double w : gi_.weights)
        if (!(w >= 0.0)) throw std::invalid_argument("case base: negative global importance");

    features_ = Matrix(0, m_);
    phi_ = Matrix(0, m_);
    std::unordered_set<InstanceId> seen;
    for (auto& c : cases) {
        if (c.features.size() != m_ || c.shap.phi.size() != m_)
            throw DimensionError("case base: case " + std::to_string(c.id) + " has inconsistent dimension");
        if (c.true_label != 0 && c.true_label != 1) throw DataError("case base: non-binary label");
        if (!seen.insert(c.id).second) throw DataError("case base: duplicate instance id " + std::to_string(c.id));
        ids_.push_back(c.id);
        labels_.push_back(c.true_label);
        verified_.push_back(c.label_verified ? 1 : 0);
        features_.append_row(c.features);
        phi_.append_row(c.shap.phi);
        base_values_.push_back(c.shap.base_value);
        outputs_.push_back(c.shap.model_output);
    }
}

Case CaseBase::case_at(std::size_t i) const {
    Case c;
    c.id = ids_[i];
    c.features.assign(features(i).begin(), features(i).end());
    c.shap.phi.assign(phi(i).begin(), phi(i).end());
    c.shap.base_value = base_values_[i];
    c.shap.model_output = outputs_[i];
    c.true_label = labels_[i];
    c.label_verified = verified_[i] != 0;
    return c;
}

namespace {
constexpr int kCaseBaseVersion = 1;
}

void CaseBase::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    nlohmann::json matrices = nlohmann::json::object();
    auto put = [&](const std::string& name, const std::vector<double>& values) {
        const auto file = name + ".f64";
        write_doubles(dir / file, values);
        matrices[name] = {{"file", file}, {"sha256", sha256_file(dir / file)}};
    };
    put("features", features_.values());
    put("phi", phi_.values());
    put("base_values", base_values_);
    put("model_outputs", outputs_);

    std::vector<int> verified(verified_.begin(), verified_.end());
    nlohmann::json j = {{"format", "trustnbr-casebase"},
                        {"version", kCaseBaseVersion},
                        {"n", size()},
                        {"m", m_},
                        {"feature_names", feature_names_},
                        {"ids", ids_},
                        {"labels", labels_},
                        {"label_verified", verified},
                        {"global_importance", gi_.weights},
                        {"matrices", matrices}};
    write_file_atomic(dir / "casebase.json", j.dump(1) + "\n");
}

CaseBase CaseBase::load(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "casebase.json";
    if (!std::filesystem::exists(manifest_path)) throw DataError("missing artifact: " + manifest_path.string());
    try {
        const auto j = nlohmann::json::parse(read_file(manifest_path));
        if (j.at("format") != "trustnbr-casebase") throw FormatError("case base: not a case base container");
        if (j.at("version").get<int>() != kCaseBaseVersion) throw FormatError("case base: version mismatch");
        const auto n = j.at("n").get<std::size_t>();
        const auto m = j.at("m").get<std::size_t>();
        auto read = [&](const std::string& name, std::size_t count) {
            const auto& entry = j.at("matrices").at(name);
            const auto path = dir / entry.at("file").get<std::string>();
            if (sha256_file(path) != entry.at("sha256").get<std::string>())
                throw FormatError("case base: checksum mismatch for " + path.filename().string());
            return read_doubles(path, count);
        };

        CaseBase cb;
        cb.m_ = m;
        cb.ids_ = j.at("ids").get<std::vector<InstanceId>>();
        cb.labels_ = j.at("labels").get<std::vector<int>>();
        for (int v : j.at("label_verified").get<std::vector<int>>()) cb.verified_.push_back(v ? 1 : 0);
        cb.gi_.weights = j.at("global_importance").get<std::vector<double>>();
        cb.feature_names_ = j.at("feature_names").get<std::vector<std::string>>();
        if (cb.ids_.size() != n || cb.labels_.size() != n || cb.verified_.size() != n || cb.gi_.weights.size() != m)
            throw FormatError("case base: array lengths disagree with n/m");
        cb.features_ = Matrix(n, m);
        cb.features_.values() = read("features", n * m);
        cb.phi_ = Matrix(n, m);
        cb.phi_.values() = read("phi", n * m);
        cb.base_values_ = read("base_values", n);
        cb.outputs_ = read("model_outputs", n);
        return cb;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("case base: ") + e.what());
    }
}

// ---------------------------------------------------------------------------

DistanceFunction::DistanceFunction(DistanceKind kind, std::span<const double> query_phi, const GlobalImportance& gi)
    : kind_(kind) {
    const std::size_t m = gi.weights.size();
    switch (kind) {
        case DistanceKind::Features:
        case DistanceKind::Shap:
            weights_.assign(m, 1.0);
            break;
        case DistanceKind::GlobalWeighted:
            weights_ = gi.weights;
            break;
        case DistanceKind::LocalWeighted:
            if (query_phi.size() != m) throw DimensionError("distance: query SHAP length differs from m");
            weights_.resize(m);
            for (std::size_t j = 0; j < m; ++j) weights_[j] = std::abs(query_phi[j]);
            break;
    }
    for (double w : weights_)
        if (!(w >= 0.0)) throw std::invalid_argument("distance: negative weight");
}

double DistanceFunction::operator()(CaseRef a, CaseRef b) const {
    const bool on_phi = kind_ == DistanceKind::Shap;
    auto va = on_phi ? a.phi : a.features;
    auto vb = on_phi ? b.phi : b.features;
    if (va.size() != weights_.size() || vb.size() != weights_.size())
        throw DimensionError("distance: vector length differs from m");
    return weighted_distance_unchecked(weights_.data(), va.data(), vb.data(), weights_.size());
}

double distance(DistanceKind kind, CaseRef query, CaseRef other, const CaseBase& cb) {
    return DistanceFunction(kind, query.phi, cb.global_importance())(query, other);
}

CaseBase build_case_base(const Dataset& train, const Dataset& test, const ShapMatrix& shap, const GlobalImportance& gi) {
    if (shap.size() != train.size() + test.size())
        throw DimensionError("build_case_base: " + std::to_string(shap.size()) + " SHAP rows for " +
                             std::to_string(train.size() + test.size()) + " labeled instances");
    if (test.size() > 0 && test.n_features() != train.n_features())
        throw DimensionError("build_case_base: train/test feature counts differ");
    std::vector<Case> cases;
    cases.reserve(shap.size());
    std::size_t s = 0;
    for (const Dataset* part : {&train, &test}) {
        for (std::size_t i = 0; i < part->size(); ++i, ++s) {
            Case c;
            c.id = part->ids[i];
            c.features.assign(part->features.row(i).begin(), part->features.row(i).end());
            c.shap = shap[s];
            c.true_label = part->labels[i];
            c.label_verified = true;
            cases.push_back(std::move(c));
        }
    }
    return CaseBase(std::move(cases), gi, train.feature_names);
}

NeighborSet retrieve_k_nearest(const CaseBase& cb, InstanceId query_id, CaseRef query, std::size_t k, DistanceKind kind) {
    if (k < 1) throw std::invalid_argument("retrieve_k_nearest: k must be >= 1");
    if (cb.empty()) throw std::invalid_argument("retrieve_k_nearest: empty case base");
    const DistanceFunction dist(kind, query.phi, cb.global_importance());

    std::vector<Neighbor> all(cb.size());
    for (std::size_t i = 0; i < cb.size(); ++i) all[i] = {i, cb.id(i), dist(query, cb.ref(i))};
    auto closer = [](const Neighbor& a, const Neighbor& b) {
        return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
    };
    const std::size_t keep = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(), closer);
    all.resize(keep);
    return {query_id, kind, std::move(all)};
}

}  // namespace trustnbr
