#include "trustnbr/pipeline.hpp"

#include <cmath>

#include "trustnbr/error.hpp"
#include "trustnbr/io.hpp"

namespace trustnbr {

nlohmann::json PipelineConfig::to_json() const {
    nlohmann::json j = {{"label_column", label_column},
                        {"id_column", id_column ? nlohmann::json(*id_column) : nlohmann::json(nullptr)},
                        {"impute_missing", impute_missing},
                        {"split_fractions", {fractions.train, fractions.test, fractions.production}},
                        {"split_seed", split_seed},
                        {"forest", trustnbr::to_json(forest)},
                        {"train_seed", train_seed},
                        {"background_size", background_size},
                        {"background_seed", background_seed},
                        {"threshold", threshold},
                        {"k_max", k_max}};
    return j;
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
    PipelineConfig c;
    try {
        c.label_column = j.value("label_column", c.label_column);
        if (j.contains("id_column") && !j.at("id_column").is_null()) c.id_column = j.at("id_column").get<std::string>();
        c.impute_missing = j.value("impute_missing", c.impute_missing);
        if (j.contains("split_fractions")) {
            const auto f = j.at("split_fractions").get<std::vector<double>>();
            if (f.size() != 3) throw std::invalid_argument("split_fractions must have three entries");
            c.fractions = {f[0], f[1], f[2]};
        }
        c.split_seed = j.value("split_seed", c.split_seed);
        if (j.contains("forest")) c.forest = forest_params_from_json(j.at("forest"));
        c.train_seed = j.value("train_seed", c.train_seed);
        c.background_size = j.value("background_size", c.background_size);
        c.background_seed = j.value("background_seed", c.background_seed);
        c.threshold = j.value("threshold", c.threshold);
        c.k_max = j.value("k_max", c.k_max);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("config: ") + e.what());
    }
    const auto& f = c.fractions;
    if (!(f.train > 0 && f.test > 0 && f.production > 0) || std::abs(f.train + f.test + f.production - 1.0) > 1e-9)
        throw std::invalid_argument("config: split fractions must be positive and sum to 1");
    if (!(c.threshold >= 0.0 && c.threshold <= 1.0)) throw std::invalid_argument("config: threshold outside [0,1]");
    if (c.k_max < 1) throw std::invalid_argument("config: k_max must be >= 1");
    if (c.background_size < 1) throw std::invalid_argument("config: background_size must be >= 1");
    if (c.forest.n_trees < 1 || c.forest.max_depth < 0 || c.forest.min_leaf < 1)
        throw std::invalid_argument("config: invalid forest parameters");
    return c;
}

// ---------------------------------------------------------------------------

namespace {

const std::vector<std::string> kParts = {"train", "test", "production"};

void write_shap(const std::filesystem::path& path, const ShapMatrix& shap, std::size_t m) {
    std::vector<double> flat;
    flat.reserve(shap.size() * (m + 2));
    for (const auto& s : shap) {
        flat.insert(flat.end(), s.phi.begin(), s.phi.end());
        flat.push_back(s.base_value);
        flat.push_back(s.model_output);
    }
    write_doubles(path, flat);
}

ShapMatrix read_shap(const std::filesystem::path& path, std::size_t rows, std::size_t m) {
    const auto flat = read_doubles(path, rows * (m + 2));
    ShapMatrix out(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        const double* r = flat.data() + i * (m + 2);
        out[i].phi.assign(r, r + m);
        out[i].base_value = r[m];
        out[i].model_output = r[m + 1];
    }
    return out;
}

}  // namespace

ArtifactDir::ArtifactDir(std::filesystem::path dir) : dir_(std::move(dir)) {}

nlohmann::json ArtifactDir::manifest() const {
    const auto path = file("manifest.json");
    if (!std::filesystem::exists(path)) return nlohmann::json::object();
    try {
        return nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("manifest.json: ") + e.what());
    }
}

void ArtifactDir::save_manifest(const nlohmann::json& m) const { write_file_atomic(file("manifest.json"), m.dump(2) + "\n"); }

PipelineConfig ArtifactDir::config() const {
    const auto m = manifest();
    if (!m.contains("config")) throw DataError("missing artifact: manifest.json (run prepare first)");
    return PipelineConfig::from_json(m.at("config"));
}

StepOutcome ArtifactDir::run_step(const std::string& name, const std::vector<std::string>& inputs,
                                  const std::vector<std::string>& outputs, const nlohmann::json& params,
                                  const std::function<void()>& body) {
    nlohmann::json m = manifest();
    nlohmann::json& steps = m["steps"];
    if (!steps.is_object()) steps = nlohmann::json::object();

    nlohmann::json input_hashes = nlohmann::json::object();
    for (const auto& in : inputs) {
        if (!std::filesystem::exists(file(in))) throw DataError("missing artifact: " + in);
        std::optional<std::string> recorded;
        for (const auto& [step, rec] : steps.items())
            if (step != name && rec.contains("outputs") && rec["outputs"].contains(in))
                recorded = rec["outputs"][in].get<std::string>();
        if (!recorded) throw DataError("missing artifact: " + in + " has no producing step in the manifest");
        const std::string actual = sha256_file(file(in));
        if (actual != *recorded) throw StaleArtifactError("stale upstream artifact: " + in + " hash mismatch");
        input_hashes[in] = actual;
    }

    if (steps.contains(name)) {
        const auto& prev = steps[name];
        bool fresh = prev.value("inputs", nlohmann::json()) == input_hashes && prev.value("params", nlohmann::json()) == params;
        for (const auto& out : outputs) {
            if (!fresh) break;
            fresh = std::filesystem::exists(file(out)) && prev["outputs"].contains(out) &&
                    prev["outputs"][out] == sha256_file(file(out));
        }
        if (fresh) return StepOutcome::Cached;
    }

    body();

    nlohmann::json output_hashes = nlohmann::json::object();
    for (const auto& out : outputs) output_hashes[out] = sha256_file(file(out));
    m = manifest();
    m["steps"][name] = {{"inputs", input_hashes}, {"outputs", output_hashes}, {"params", params}};
    save_manifest(m);
    return StepOutcome::Ran;
}

StepOutcome ArtifactDir::prepare(const std::filesystem::path& csv, const PipelineConfig& config) {
    if (!std::filesystem::exists(csv)) throw DataError("csv: missing file " + csv.string());
    const std::string raw = read_file(csv);
    const std::string dataset_hash = sha256_hex(raw);
    std::filesystem::create_directories(dir_);

    nlohmann::json dataset_info;
    const nlohmann::json params = {{"config", config.to_json()}, {"dataset_sha256", dataset_hash}};
    const std::vector<std::string> outputs = {"split.json", "normalizer.json", "train.csv", "test.csv", "production.csv"};
    auto outcome = run_step("prepare", {}, outputs, params, [&] {
        CsvOptions opts;
        opts.id_column = config.id_column;
        opts.impute_missing = config.impute_missing;
        const Dataset d = parse_csv(raw, config.label_column, opts);
        const SplitDataset split = split_three_way(d, config.fractions, config.split_seed);
        const Normalizer norm = Normalizer::fit(split.train);
        write_file_atomic(file("split.json"), split_manifest(split).dump() + "\n");
        write_file_atomic(file("normalizer.json"), norm.to_json().dump() + "\n");
        write_file_atomic(file("train.csv"), to_csv(norm.apply(split.train)));
        write_file_atomic(file("test.csv"), to_csv(norm.apply(split.test)));
        write_file_atomic(file("production.csv"), to_csv(norm.apply(split.production)));
        dataset_info = {{"file", csv.filename().string()},
                        {"sha256", dataset_hash},
                        {"rows", d.size()},
                        {"features", d.n_features()},
                        {"positives", d.positives()},
                        {"feature_names", d.feature_names}};
    });

    auto m = manifest();
    m["tool"] = "trustnbr";
    m["tool_version"] = kToolVersion;
    m["config"] = config.to_json();
    if (!dataset_info.is_null()) m["dataset"] = dataset_info;
    save_manifest(m);
    return outcome;
}

Dataset ArtifactDir::load_part(const std::string& part) const {
    const auto path = file(part + ".csv");
    if (!std::filesystem::exists(path)) throw DataError("missing artifact: " + part + ".csv");
    CsvOptions opts;
    opts.id_column = "id";
    return parse_csv(read_file(path), "label", opts);
}

Forest ArtifactDir::load_forest() const {
    const auto path = file("forest.json");
    if (!std::filesystem::exists(path)) throw DataError("missing artifact: forest.json");
    return deserialize_forest(read_file(path));
}

StepOutcome ArtifactDir::train() {
    const PipelineConfig c = config();
    const nlohmann::json params = {{"forest", trustnbr::to_json(c.forest)}, {"train_seed", c.train_seed}};
    return run_step("train", {"train.csv"}, {"forest.json"}, params, [&] {
        const Forest f = train_forest(load_part("train"), c.forest, c.train_seed);
        write_file_atomic(file("forest.json"), serialize_forest(f));
    });
}

StepOutcome ArtifactDir::explain() {
    const PipelineConfig c = config();
    const nlohmann::json params = {{"background_size", c.background_size},
                                   {"background_seed", c.background_seed},
                                   {"method", "interventional-tree-shap"}};
    return run_step(
        "explain", {"forest.json", "train.csv", "test.csv", "production.csv"},
        {"shap.json", "background.f64", "shap_cases.f64", "shap_production.f64"}, params, [&] {
            const Forest f = load_forest();
            const Dataset train = load_part("train");
            const Dataset test = load_part("test");
            const Dataset production = load_part("production");
            const Matrix background = select_background(train, c.background_size, c.background_seed);

            Matrix cases = train.features;
            for (std::size_t i = 0; i < test.size(); ++i) cases.append_row(test.features.row(i));
            const std::size_t m = f.n_features;
            write_doubles(file("background.f64"), background.values());
            write_shap(file("shap_cases.f64"), shap_for_dataset(f, cases, background), m);
            write_shap(file("shap_production.f64"), shap_for_dataset(f, production.features, background), m);
            const nlohmann::json meta = {{"format", "trustnbr-shap"},
                                         {"version", 1},
                                         {"m", m},
                                         {"layout", "rows of [phi_1..phi_m, base_value, model_output]"},
                                         {"background_rows", background.rows()},
                                         {"case_rows", cases.rows()},
                                         {"production_rows", production.size()}};
            write_file_atomic(file("shap.json"), meta.dump(2) + "\n");
        });
}

Matrix ArtifactDir::load_background() const {
    const auto meta = nlohmann::json::parse(read_file(file("shap.json")));
    const auto rows = meta.at("background_rows").get<std::size_t>();
    const auto m = meta.at("m").get<std::size_t>();
    Matrix bg(rows, m);
    bg.values() = read_doubles(file("background.f64"), rows * m);
    return bg;
}

ShapMatrix ArtifactDir::load_shap(const std::string& which) const {
    if (!std::filesystem::exists(file("shap.json"))) throw DataError("missing artifact: shap.json");
    const auto meta = nlohmann::json::parse(read_file(file("shap.json")));
    const auto m = meta.at("m").get<std::size_t>();
    const auto rows = meta.at(which == "cases" ? "case_rows" : "production_rows").get<std::size_t>();
    return read_shap(file("shap_" + which + ".f64"), rows, m);
}

StepOutcome ArtifactDir::casebase() {
    return run_step("casebase", {"train.csv", "test.csv", "shap_cases.f64"}, {"casebase/casebase.json"},
                    nlohmann::json::object(), [&] {
                        const Dataset train = load_part("train");
                        const Dataset test = load_part("test");
                        const ShapMatrix shap = load_shap("cases");
                        // Global importance over the training rows only.
                        const ShapMatrix train_shap(shap.begin(), shap.begin() + static_cast<std::ptrdiff_t>(train.size()));
                        const CaseBase cb = build_case_base(train, test, shap, global_importance(train_shap));
                        cb.save(file("casebase"));
                    });
}

CaseBase ArtifactDir::load_casebase() const { return CaseBase::load(file("casebase")); }

AlertSet ArtifactDir::load_alerts() const {
    const PipelineConfig c = config();
    return build_alert_set(load_forest(), load_part("production"), c.threshold, load_shap("production"));
}

StepOutcome ArtifactDir::experiment(std::optional<std::size_t> k_max) {
    const PipelineConfig c = config();
    const std::size_t kmax = k_max.value_or(c.k_max);
    if (kmax < 1) throw std::invalid_argument("experiment: k-max must be >= 1");
    const nlohmann::json params = {{"k_max", kmax}, {"threshold", c.threshold}};
    return run_step(
        "experiment", {"forest.json", "production.csv", "shap_production.f64", "casebase/casebase.json"},
        {"grid.csv", "heatmap.csv", "curves.csv", "experiment.json"}, params, [&] {
            const CaseBase cb = load_casebase();
            const AlertSet alerts = load_alerts();
            const auto m = manifest();
            GridConfig grid_config = GridConfig::up_to(kmax);
            grid_config.manifest = {{"tool", "trustnbr"},
                                    {"tool_version", kToolVersion},
                                    {"config", m.at("config")},
                                    {"dataset", m.value("dataset", nlohmann::json::object())}};
            const ExperimentGrid grid = run_grid(cb, alerts, grid_config);

            nlohmann::json heat = nlohmann::json::array();
            for (const auto& h : grid.heatmap())
                heat.push_back({{"retrieval", to_letter(h.retrieval)}, {"viz", to_letter(h.viz)}, {"mean_delta", h.mean_delta}});
            nlohmann::json report = grid.manifest;
            report["heatmap"] = heat;
            report["k_max"] = kmax;

            write_file_atomic(file("grid.csv"), grid.grid_csv());
            write_file_atomic(file("heatmap.csv"), grid.heatmap_csv());
            write_file_atomic(file("curves.csv"), grid.curves_csv());
            write_file_atomic(file("experiment.json"), report.dump(2) + "\n");
        });
}

}  // namespace trustnbr
