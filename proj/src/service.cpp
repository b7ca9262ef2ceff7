#include "trustnbr/service.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <numeric>

#include <httplib.h>

#include "trustnbr/embed.hpp"
#include "trustnbr/error.hpp"
#include "trustnbr/io.hpp"

namespace trustnbr {

std::shared_ptr<const Session> Session::load(const std::filesystem::path& dir) {
    for (const char* required : {"manifest.json", "forest.json", "production.csv", "shap.json", "shap_production.f64",
                                 "casebase/casebase.json"}) {
        if (!std::filesystem::exists(dir / required))
            throw DataError("missing artifact: " + (dir / required).string());
    }
    const ArtifactDir artifacts(dir);
    auto s = std::make_shared<Session>();
    s->forest = artifacts.load_forest();
    s->case_base = artifacts.load_casebase();
    s->alerts = artifacts.load_alerts();
    s->feature_names = s->case_base.feature_names();
    if (s->feature_names.empty())
        for (std::size_t j = 0; j < s->case_base.n_features(); ++j) s->feature_names.push_back("x" + std::to_string(j));
    return s;
}

const Alert* Session::find_alert(InstanceId id) const {
    for (const auto& a : alerts.alerts)
        if (a.id == id) return &a;
    return nullptr;
}

namespace {

ApiResponse error_response(int status, const std::string& message) {
    return {status, {{"error", message}, {"status", status}}};
}

std::optional<std::string> param(const QueryParams& params, const std::string& key) {
    auto it = params.find(key);
    if (it == params.end()) return std::nullopt;
    return it->second;
}

template <typename T>
std::optional<T> parse_int(const std::string& s) {
    T v{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

std::string_view state_name(int s) {
    static constexpr std::string_view kNames[] = {"pending", "running", "ready", "failed"};
    return kNames[s];
}

std::uint64_t embedding_seed(InstanceId id, std::size_t k, std::string_view retrieval, std::string_view viz) {
    const std::string key = std::to_string(id) + "|" + std::to_string(k) + "|" + std::string(retrieval) + "|" +
                            std::string(viz);
    const std::string hex = sha256_hex(key);
    return std::stoull(hex.substr(0, 16), nullptr, 16);
}

}  // namespace

Service::Service(Options options) : options_(std::move(options)) {
    if (options_.data_dir.empty()) {
        const char* env = std::getenv("TRUSTNBR_DATA_DIR");
        options_.data_dir = env && *env ? std::filesystem::path(env) : std::filesystem::path("trustnbr-data");
    }
}

Service::~Service() { wait_for_builds(); }

void Service::wait_for_builds() {
    std::vector<std::jthread> pending;
    {
        std::lock_guard lock(mutex_);
        pending.swap(builders_);
    }
    pending.clear();  // joins
}

void Service::set_default_session(std::shared_ptr<const Session> session) {
    std::lock_guard lock(mutex_);
    default_session_ = std::move(session);
}

std::shared_ptr<const Session> Service::resolve(const QueryParams& params, ApiResponse& error) const {
    std::lock_guard lock(mutex_);
    if (auto id = param(params, "session")) {
        auto it = sessions_.find(*id);
        if (it == sessions_.end()) {
            error = error_response(404, "unknown session " + *id);
            return nullptr;
        }
        if (!it->second.session) {
            error = error_response(503, "session " + *id + " is not ready");
            return nullptr;
        }
        return it->second.session;
    }
    if (default_session_) return default_session_;
    const Entry* latest = nullptr;
    for (const auto& [_, e] : sessions_)
        if (e.session && (!latest || e.ready_order > latest->ready_order)) latest = &e;
    if (latest) return latest->session;
    error = error_response(503, "no session loaded");
    return nullptr;
}

ApiResponse Service::list_alerts(const QueryParams& params) const {
    ApiResponse err;
    auto session = resolve(params, err);
    if (!session) return err;

    const auto page = parse_int<std::size_t>(param(params, "page").value_or("1"));
    const auto page_size = parse_int<std::size_t>(param(params, "page_size").value_or("50"));
    if (!page || *page < 1) return error_response(400, "page must be an integer >= 1");
    if (!page_size || *page_size < 1 || *page_size > 1000) return error_response(400, "page_size must be in [1, 1000]");
    const std::string sort = param(params, "sort").value_or("confidence");
    if (sort != "confidence" && sort != "confidence_asc" && sort != "id")
        return error_response(400, "sort must be one of confidence, confidence_asc, id");

    std::vector<const Alert*> order;
    for (const auto& a : session->alerts.alerts) order.push_back(&a);
    std::stable_sort(order.begin(), order.end(), [&](const Alert* a, const Alert* b) {
        if (sort == "id") return a->id < b->id;
        if (a->model_confidence != b->model_confidence)
            return sort == "confidence" ? a->model_confidence > b->model_confidence
                                        : a->model_confidence < b->model_confidence;
        return a->id < b->id;
    });

    nlohmann::json items = nlohmann::json::array();
    const std::size_t begin = (*page - 1) * *page_size;
    for (std::size_t i = begin; i < order.size() && i < begin + *page_size; ++i)
        items.push_back({{"id", order[i]->id}, {"model_confidence", order[i]->model_confidence}, {"timestamp", nullptr}});
    return {200, {{"items", items}, {"page", *page}, {"page_size", *page_size}, {"total", order.size()}, {"sort", sort}}};
}

ApiResponse Service::get_alert(const std::string& id, const QueryParams& params) const {
    ApiResponse err;
    auto session = resolve(params, err);
    if (!session) return err;
    const auto parsed = parse_int<InstanceId>(id);
    const Alert* alert = parsed ? session->find_alert(*parsed) : nullptr;
    if (!alert) return error_response(404, "unknown alert " + id);

    const std::size_t m = alert->features.size();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return std::abs(alert->shap.phi[a]) > std::abs(alert->shap.phi[b]); });
    nlohmann::json bars = nlohmann::json::array();
    for (auto j : order)
        bars.push_back({{"feature", session->feature_names[j]}, {"phi", alert->shap.phi[j]}, {"value", alert->features[j]}});
    nlohmann::json features = nlohmann::json::array();
    for (std::size_t j = 0; j < m; ++j) features.push_back({{"name", session->feature_names[j]}, {"value", alert->features[j]}});

    return {200,
            {{"id", alert->id},
             {"model_confidence", alert->model_confidence},
             {"base_value", alert->shap.base_value},
             {"shap", bars},
             {"features", features},
             {"timestamp", nullptr}}};
}

ApiResponse Service::neighborhood(const std::string& id, const QueryParams& params) const {
    ApiResponse err;
    auto session = resolve(params, err);
    if (!session) return err;

    const auto k = parse_int<std::size_t>(param(params, "k").value_or("10"));
    if (!k || *k < 1 || *k > kMaxNeighbors) return error_response(400, "k must be an integer in [1, 500]");
    const std::string retrieval_letter = param(params, "retrieval").value_or("S");
    const std::string viz_letter = param(params, "viz").value_or("S");
    const auto retrieval = distance_kind_from_letter(retrieval_letter);
    const auto viz = distance_kind_from_letter(viz_letter);
    if (!retrieval) return error_response(400, "retrieval must be one of F, S, G, L");
    if (!viz) return error_response(400, "viz must be one of F, S, G, L");

    const auto parsed = parse_int<InstanceId>(id);
    const Alert* alert = parsed ? session->find_alert(*parsed) : nullptr;
    if (!alert) return error_response(404, "unknown alert " + id);

    const CaseBase& cb = session->case_base;
    const NeighborSet ns = retrieve_k_nearest(cb, alert->id, alert->ref(), *k, *retrieval);
    std::vector<CaseRef> items = {alert->ref()};
    for (const auto& n : ns.neighbors) items.push_back(cb.ref(n.index));
    const DistanceFunction viz_dist(*viz, alert->shap.phi, cb.global_importance());
    const DistanceMatrix dm = pairwise_distances(items, viz_dist);
    const Embedding2D emb = mds_embed(dm, embedding_seed(alert->id, *k, retrieval_letter, viz_letter));

    nlohmann::json points = nlohmann::json::array();
    points.push_back({{"id", alert->id},
                      {"x", emb.coords(0, 0)},
                      {"y", emb.coords(0, 1)},
                      {"is_query", true},
                      {"true_label", nullptr},
                      {"label_verified", nullptr},
                      {"retrieval_distance", 0.0},
                      {"viz_distance_to_query", 0.0}});
    for (std::size_t i = 0; i < ns.neighbors.size(); ++i) {
        const auto& n = ns.neighbors[i];
        points.push_back({{"id", n.id},
                          {"x", emb.coords(i + 1, 0)},
                          {"y", emb.coords(i + 1, 1)},
                          {"is_query", false},
                          {"true_label", cb.label(n.index)},
                          {"label_verified", cb.label_verified(n.index)},
                          {"retrieval_distance", n.distance},
                          {"viz_distance_to_query", dm(0, i + 1)}});
    }
    return {200,
            {{"alert_id", alert->id},
             {"k", *k},
             {"retrieval", retrieval_letter},
             {"viz", viz_letter},
             {"stress", emb.stress},
             {"converged", emb.converged},
             {"points", points}}};
}

ApiResponse Service::create_session(const std::string& body) {
    nlohmann::json req;
    try {
        req = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception&) {
        return error_response(400, "request body must be JSON");
    }
    if (!req.is_object() || !req.contains("dataset") || !req["dataset"].is_string())
        return error_response(400, "body must contain \"dataset\": <csv path>");
    PipelineConfig config;
    try {
        config = PipelineConfig::from_json(req.value("config", nlohmann::json::object()));
        if (req.contains("label")) config.label_column = req.at("label").get<std::string>();
    } catch (const std::exception& e) {
        return error_response(400, e.what());
    }
    const std::filesystem::path csv = std::filesystem::absolute(req["dataset"].get<std::string>()).lexically_normal();
    const nlohmann::json identity = {{"dataset", csv.string()}, {"config", config.to_json()}};
    const std::string id = sha256_hex(identity.dump()).substr(0, 16);

    std::lock_guard lock(mutex_);
    auto [it, inserted] = sessions_.try_emplace(id);
    if (inserted) builders_.emplace_back([this, id, csv, config] { build(id, csv, config); });
    return {202, {{"session_id", id}, {"status", state_name(static_cast<int>(it->second.state))}}};
}

void Service::build(std::string id, std::filesystem::path csv, PipelineConfig config) {
    {
        std::lock_guard lock(mutex_);
        sessions_[id].state = BuildState::Running;
    }
    try {
        const auto dir = options_.data_dir / "sessions" / id;
        ArtifactDir artifacts(dir);
        artifacts.prepare(csv, config);
        artifacts.train();
        artifacts.explain();
        artifacts.casebase();
        auto session = Session::load(dir);
        std::lock_guard lock(mutex_);
        auto& e = sessions_[id];
        e.session = std::move(session);
        e.state = BuildState::Ready;
        e.ready_order = ++ready_counter_;
    } catch (const std::exception& ex) {
        std::lock_guard lock(mutex_);
        auto& e = sessions_[id];
        e.state = BuildState::Failed;
        e.message = ex.what();
    }
}

ApiResponse Service::session_status(const std::string& id) const {
    std::lock_guard lock(mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) return error_response(404, "unknown session " + id);
    nlohmann::json body = {{"session_id", id}, {"status", state_name(static_cast<int>(it->second.state))}};
    if (it->second.state == BuildState::Failed) body["message"] = it->second.message;
    if (it->second.session) body["alerts"] = it->second.session->alerts.size();
    return {200, body};
}

ApiResponse Service::debug_truth(const std::string& id, const QueryParams& params) const {
    if (!options_.debug_truth) return error_response(404, "not found");
    ApiResponse err;
    auto session = resolve(params, err);
    if (!session) return err;
    const auto parsed = parse_int<InstanceId>(id);
    const Alert* alert = parsed ? session->find_alert(*parsed) : nullptr;
    if (!alert) return error_response(404, "unknown alert " + id);
    return {200, {{"id", alert->id}, {"true_label", alert->true_label}}};
}

void Service::mount(httplib::Server& server) {
    auto reply = [](httplib::Response& res, const ApiResponse& r) {
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    auto params_of = [](const httplib::Request& req) { return QueryParams(req.params.begin(), req.params.end()); };

    server.Get("/v1/alerts", [=, this](const httplib::Request& req, httplib::Response& res) {
        reply(res, list_alerts(params_of(req)));
    });
    server.Get(R"(/v1/alerts/([^/]+))", [=, this](const httplib::Request& req, httplib::Response& res) {
        reply(res, get_alert(req.matches[1], params_of(req)));
    });
    server.Get(R"(/v1/alerts/([^/]+)/neighborhood)", [=, this](const httplib::Request& req, httplib::Response& res) {
        reply(res, neighborhood(req.matches[1], params_of(req)));
    });
    server.Post("/v1/sessions", [=, this](const httplib::Request& req, httplib::Response& res) {
        reply(res, create_session(req.body));
    });
    server.Get(R"(/v1/sessions/([^/]+)/status)", [=, this](const httplib::Request& req, httplib::Response& res) {
        reply(res, session_status(req.matches[1]));
    });
    server.Get(R"(/v1/debug/truth/([^/]+))", [=, this](const httplib::Request& req, httplib::Response& res) {
        reply(res, debug_truth(req.matches[1], params_of(req)));
    });
    server.set_error_handler([=](const httplib::Request&, httplib::Response& res) {
        if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
        reply(res, error_response(res.status, res.status == 404 ? "not found" : "request failed"));
        return httplib::Server::HandlerResponse::Handled;
    });
    server.set_exception_handler([=](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "internal error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            what = e.what();
        } catch (...) {
        }
        reply(res, error_response(500, what));
    });
}

}  // namespace trustnbr
