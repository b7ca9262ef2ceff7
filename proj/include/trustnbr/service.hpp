#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include <json.hpp>

#include "trustnbr/forest.hpp"
#include "trustnbr/pipeline.hpp"
#include "trustnbr/retrieval.hpp"
#include "trustnbr/simuser.hpp"

namespace httplib {
class Server;
}

namespace trustnbr {

/// Loaded, immutable artifacts behind the read endpoints.
struct Session {
    Forest forest;
    CaseBase case_base;
    AlertSet alerts;
    std::vector<std::string> feature_names;

    /// Throws DataError naming the first missing artifact.
    static std::shared_ptr<const Session> load(const std::filesystem::path& dir);

    const Alert* find_alert(InstanceId id) const;
};

struct ApiResponse {
    int status = 200;
    nlohmann::json body;
};

using QueryParams = std::multimap<std::string, std::string>;

inline constexpr std::size_t kMaxNeighbors = 500;

/// JSON API for the analyst dashboard, versioned under /v1.
///
///   GET  /v1/alerts                          ?page=&page_size=&sort=&session=
///   GET  /v1/alerts/{id}
///   GET  /v1/alerts/{id}/neighborhood        ?k=&retrieval=&viz=&session=
///   POST /v1/sessions                        {"dataset": path, "config": {...}}
///   GET  /v1/sessions/{id}/status
///   GET  /v1/debug/truth/{id}                only with debug_truth enabled
///
/// Handlers are plain member functions so they can be exercised without a socket;
/// mount() binds them to an httplib server.
class Service {
public:
    struct Options {
        bool debug_truth = false;
        /// Session artifact cache; empty means $TRUSTNBR_DATA_DIR, else ./trustnbr-data.
        std::filesystem::path data_dir;
    };

    explicit Service(Options options);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    void set_default_session(std::shared_ptr<const Session> session);

    ApiResponse list_alerts(const QueryParams& params) const;
    ApiResponse get_alert(const std::string& id, const QueryParams& params) const;
    ApiResponse neighborhood(const std::string& id, const QueryParams& params) const;
    ApiResponse create_session(const std::string& body);
    ApiResponse session_status(const std::string& id) const;
    ApiResponse debug_truth(const std::string& id, const QueryParams& params) const;

    /// Blocks until every background session build has finished.
    void wait_for_builds();

    void mount(httplib::Server& server);

private:
    enum class BuildState { Pending, Running, Ready, Failed };
    struct Entry {
        BuildState state = BuildState::Pending;
        std::string message;
        std::shared_ptr<const Session> session;
        std::uint64_t ready_order = 0;
    };

    std::shared_ptr<const Session> resolve(const QueryParams& params, ApiResponse& error) const;
    void build(std::string id, std::filesystem::path csv, PipelineConfig config);

    Options options_;
    mutable std::mutex mutex_;
    std::shared_ptr<const Session> default_session_;
    std::map<std::string, Entry> sessions_;
    std::uint64_t ready_counter_ = 0;
    std::vector<std::jthread> builders_;
};

}  // namespace trustnbr
