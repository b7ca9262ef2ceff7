// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any fails.
//
// Usage: trustnbr_acceptance [phoneme.csv]
// Without an argument the bundled data/phoneme.csv is used; if that is missing the
// trend checks fall back to the synthetic surrogate.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "support.hpp"
#include "trustnbr/embed.hpp"
#include "trustnbr/io.hpp"
#include "trustnbr/pipeline.hpp"
#include "trustnbr/simuser.hpp"

using namespace trustnbr;
using testsupport::TempDir;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void criterion(const std::string& name, const std::function<Outcome()>& check) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = check();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failures;
    char timing[32];
    std::snprintf(timing, sizeof timing, "%.1fs", secs);
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << " (" << timing << "): " << o.detail << std::endl;
}

double elapsed_since(std::chrono::steady_clock::time_point t) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

// Runs every pipeline step into `dir`.
ArtifactDir run_chain(const std::filesystem::path& dir, const std::filesystem::path& csv, const PipelineConfig& config) {
    ArtifactDir run(dir);
    run.prepare(csv, config);
    run.train();
    run.explain();
    run.casebase();
    run.experiment();
    return run;
}

std::vector<std::vector<std::string>> read_rows(const std::filesystem::path& csv) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(read_file(csv));
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

Outcome shap_oracle() {
    Rng rng(2024);
    const auto start = std::chrono::steady_clock::now();
    std::size_t triples = 0;
    double worst = 0.0;
    for (int t = 0; t < 120; ++t) {
        const std::size_t m = 1 + rng.uniform_index(8);
        const auto d = testsupport::random_dataset(60 + rng.uniform_index(200), m, 7000 + t);
        ForestParams p;
        p.n_trees = 1 + static_cast<int>(rng.uniform_index(20));
        p.max_depth = 1 + static_cast<int>(rng.uniform_index(8));
        const auto f = train_forest(d, p, t);
        const auto bg = testsupport::random_matrix(1 + rng.uniform_index(32), m, rng);
        const auto x = testsupport::random_matrix(1, m, rng);
        const auto fast = tree_shap(f, x.row(0), bg);
        const auto brute = brute_force_shapley(f, x.row(0), bg);
        const auto oracle = testsupport::oracle_shapley(f, x.row(0), bg);
        for (std::size_t j = 0; j < m; ++j) {
            worst = std::max(worst, std::abs(fast.phi[j] - brute.phi[j]));
            worst = std::max(worst, std::abs(fast.phi[j] - oracle[j]));
        }
        ++triples;
    }
    const double secs = elapsed_since(start);
    return {worst <= 1e-9 && triples >= 100 && secs < 120.0,
            std::to_string(triples) + " triples, max |diff| " + fmt(worst) + ", " + fmt(secs) + "s"};
}

Outcome local_accuracy(const ArtifactDir& run) {
    const auto cb = run.load_casebase();
    const auto forest = run.load_forest();
    double worst = 0.0;
    for (std::size_t i = 0; i < cb.size(); ++i) {
        const auto c = cb.case_at(i);
        const double total = c.shap.base_value + std::accumulate(c.shap.phi.begin(), c.shap.phi.end(), 0.0);
        worst = std::max(worst, std::abs(total - predict_proba(forest, c.features)));
    }
    return {worst <= 1e-9 && cb.size() > 0, std::to_string(cb.size()) + " cases, max |base+sum(phi)-f(x)| " + fmt(worst)};
}

Outcome retrieval_oracle() {
    Rng rng(99);
    std::size_t checks = 0, mismatches = 0;
    const std::size_t sizes[] = {37, 400, 1500, 5000};
    for (std::size_t si = 0; si < 4; ++si) {
        for (bool ties : {false, true}) {
            const std::size_t n = sizes[si], m = 2 + rng.uniform_index(7);
            const auto cb = testsupport::random_case_base(n, m, 300 + si * 2 + ties, ties);
            const auto queries = testsupport::random_case_base(4, m, 800 + si * 2 + ties, ties);
            for (std::size_t qi = 0; qi < queries.size(); ++qi)
                for (auto kind : kAllDistanceKinds)
                    for (std::size_t k : {std::size_t{1}, std::size_t{5}, std::size_t{50}, n}) {
                        const auto got = retrieve_k_nearest(cb, queries.id(qi), queries.ref(qi), k, kind);
                        mismatches += got.neighbors != testsupport::oracle_knn(cb, queries.ref(qi), k, kind);
                        ++checks;
                    }
        }
    }
    return {mismatches == 0, std::to_string(checks) + " queries over case bases up to 5000, " +
                                 std::to_string(mismatches) + " mismatches"};
}

DistanceMatrix from_points(const std::vector<std::vector<double>>& pts) {
    Matrix m(pts.size(), pts.size());
    const std::vector<double> ones(pts[0].size(), 1.0);
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = 0; j < pts.size(); ++j) m(i, j) = testsupport::oracle_distance(ones, pts[i], pts[j]);
    return DistanceMatrix(m);
}

Outcome mds() {
    Rng rng(5);
    std::size_t increases = 0, steps = 0;
    for (int t = 0; t < 50; ++t) {
        const std::size_t n = 3 + rng.uniform_index(40);
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) m(i, j) = m(j, i) = rng.uniform(0.0, 5.0);
        const auto e = mds_embed(DistanceMatrix(m), t, 300, 0.0);
        for (std::size_t i = 1; i < e.raw_stress_history.size(); ++i) {
            ++steps;
            increases += e.raw_stress_history[i] > e.raw_stress_history[i - 1] * (1.0 + 1e-12);
        }
    }
    const double h = std::sqrt(3.0) / 2.0;
    const double tri = mds_embed(from_points({{0, 0}, {1, 0}, {0.5, h}}), 1).stress;
    const double square = mds_embed(from_points({{0, 0}, {1, 0}, {1, 1}, {0, 1}}), 1).stress;
    return {increases == 0 && tri < 1e-6 && square < 1e-6,
            std::to_string(steps) + " iterations on 50 matrices, " + std::to_string(increases) +
                " increases; triangle stress " + fmt(tri) + ", square stress " + fmt(square)};
}

Outcome confidence_cases() {
    const double unweighted = unweighted_confidence(std::vector<int>{1, 1, 0, 1}).value;
    const double weighted = weighted_confidence(std::vector<int>{1, 0}, std::vector<double>{1, 3}).value;
    Rng rng(1);
    std::size_t unequal = 0;
    for (int t = 0; t < 1000; ++t) {
        const std::size_t k = 1 + rng.uniform_index(100);
        std::vector<int> y(k);
        for (int& v : y) v = static_cast<int>(rng.uniform_index(2));
        const std::vector<double> d(k, rng.uniform(1e-6, 1e3));
        unequal += weighted_confidence(y, d).value != unweighted_confidence(y).value;
    }
    return {unweighted == 0.75 && std::abs(weighted - 0.75) < 1e-15 && unequal == 0,
            "[1,1,0,1] -> " + fmt(unweighted) + ", [1,0]/[1,3] -> " + fmt(weighted) + ", equal-distance mismatches " +
                std::to_string(unequal) + "/1000"};
}

Outcome map_oracle() {
    Rng rng(17);
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const std::size_t n = 1 + rng.uniform_index(200);
        std::vector<double> s(n);
        std::vector<int> y(n);
        const bool coarse = t % 2 == 0;
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = coarse ? static_cast<double>(rng.uniform_index(5)) / 4.0 : rng.uniform();
            y[i] = static_cast<int>(rng.uniform_index(2));
        }
        y[rng.uniform_index(n)] = 1;
        worst = std::max(worst, std::abs(mean_average_precision(s, y) - testsupport::oracle_average_precision(s, y)));
    }
    const double hand = mean_average_precision(std::vector<double>{0.9, 0.8, 0.1}, std::vector<int>{1, 0, 1});
    return {worst <= 1e-12 && std::abs(hand - 5.0 / 6.0) < 1e-15,
            "1000 vectors, max |diff| " + fmt(worst) + "; hand case " + format_double(hand)};
}

Outcome grid_shape(const std::filesystem::path& a, const std::filesystem::path& b, std::size_t k_max) {
    const auto rows = read_rows(a / "grid.csv");
    const std::size_t expected = 4 * 5 * k_max;
    bool constant = true;
    for (std::size_t i = 2; i < rows.size(); ++i) constant &= rows[i][4] == rows[1][4];
    std::set<std::string> combos;
    for (std::size_t i = 1; i < rows.size(); ++i) combos.insert(rows[i][0] + "/" + rows[i][1]);
    bool identical = true;
    for (const char* f : {"grid.csv", "heatmap.csv", "curves.csv", "experiment.json"})
        identical &= read_file(a / f) == read_file(b / f);
    return {rows.size() == expected + 1 && combos.size() == 20 && constant && identical,
            std::to_string(rows.size() - 1) + " rows (expected " + std::to_string(expected) + "), " +
                std::to_string(combos.size()) + " combinations, model MAP " + (constant ? "constant" : "varies") +
                ", rerun " + (identical ? "bit-identical" : "differs")};
}

struct TrendRun {
    std::filesystem::path dir;
    std::string label;
    double seconds = 0.0;
};

// Mean user MAP over k for each (retrieval, viz), from the heatmap deltas.
std::map<std::string, double> mean_delta(const std::filesystem::path& dir) {
    std::map<std::string, double> out;
    const auto rows = read_rows(dir / "heatmap.csv");
    for (std::size_t i = 1; i < rows.size(); ++i) out[rows[i][0] + "/" + rows[i][1]] = std::stod(rows[i][2]);
    return out;
}

Outcome unweighted_is_worst(const TrendRun& run) {
    const auto delta = mean_delta(run.dir);
    std::size_t clean_rows = 0, violated_cells = 0;
    std::string detail;
    for (const char* r : {"F", "S", "G", "L"}) {
        std::size_t violations = 0;
        for (const char* v : {"F", "S", "G", "L"})
            violations += delta.at(std::string(r) + "/U") > delta.at(std::string(r) + "/" + v);
        clean_rows += violations == 0;
        violated_cells += violations;
        detail += std::string(" ") + r + ":" + std::to_string(violations);
    }
    const bool pass = (clean_rows >= 3 || violated_cells <= 1) && run.seconds <= 900.0;
    return {pass, run.label + ", retrieval kinds with U lowest " + std::to_string(clean_rows) +
                      "/4, violated cells per retrieval" + detail + ", chain " + fmt(run.seconds) + "s"};
}

Outcome minimum_neighbors(const TrendRun& run) {
    const auto rows = read_rows(run.dir / "curves.csv");
    const auto& header = rows[0];
    bool pass = rows.size() >= 101;
    std::string detail = run.label + ", d_S retrieval k=1 vs mean k in [20,100]:";
    for (const char* v : {"F", "S", "G", "L", "U"}) {
        const auto col = static_cast<std::size_t>(
            std::find(header.begin(), header.end(), std::string("S/") + v) - header.begin());
        const double k1 = std::stod(rows[1][col]);
        double mean = 0.0;
        for (std::size_t k = 20; k <= 100; ++k) mean += std::stod(rows[k][col]);
        mean /= 81.0;
        pass &= k1 < mean;
        detail += std::string(" ") + v + " " + fmt(k1) + "<" + fmt(mean);
    }
    return {pass, detail};
}

}  // namespace

int main(int argc, char** argv) {
    std::filesystem::path phoneme = argc > 1 ? argv[1] : TRUSTNBR_PHONEME_CSV;
    TempDir work;

    criterion("shap-oracle-equivalence", shap_oracle);

    // 1,000-row synthetic chain, run twice into separate directories.
    const auto synth_csv = work / "synthetic.csv";
    write_file_atomic(synth_csv, to_csv(make_phoneme_surrogate(1000, 31)));
    PipelineConfig small;
    small.id_column = "id";
    small.k_max = 50;
    std::optional<ArtifactDir> first;
    std::string chain_error;
    try {
        first = run_chain(work / "synthetic-a", synth_csv, small);
        run_chain(work / "synthetic-b", synth_csv, small);
    } catch (const std::exception& e) {
        chain_error = e.what();
    }
    criterion("local-accuracy", [&] {
        if (!first) return Outcome{false, "pipeline failed: " + chain_error};
        return local_accuracy(*first);
    });
    criterion("retrieval-oracle", retrieval_oracle);
    criterion("mds-monotone-and-exact", mds);
    criterion("confidence-unit-cases", confidence_cases);
    criterion("map-oracle", map_oracle);
    criterion("grid-shape-and-determinism", [&] {
        if (!first) return Outcome{false, "pipeline failed: " + chain_error};
        return grid_shape(work / "synthetic-a", work / "synthetic-b", small.k_max);
    });

    TrendRun trend;
    PipelineConfig full;
    full.k_max = 100;
    std::filesystem::path trend_csv = phoneme;
    trend.label = "Phoneme (" + phoneme.filename().string() + ")";
    if (!std::filesystem::exists(phoneme)) {
        trend_csv = work / "surrogate.csv";
        write_file_atomic(trend_csv, to_csv(make_phoneme_surrogate(5404, 1)));
        full.id_column = "id";
        trend.label = "synthetic surrogate (Phoneme CSV not found)";
    }
    trend.dir = work / "trend";
    std::string trend_error;
    const auto start = std::chrono::steady_clock::now();
    try {
        run_chain(trend.dir, trend_csv, full);
    } catch (const std::exception& e) {
        trend_error = e.what();
    }
    trend.seconds = elapsed_since(start);
    criterion("trend-unweighted-worst", [&] {
        if (!trend_error.empty()) return Outcome{false, "pipeline failed: " + trend_error};
        return unweighted_is_worst(trend);
    });
    criterion("trend-minimum-neighbors", [&] {
        if (!trend_error.empty()) return Outcome{false, "pipeline failed: " + trend_error};
        return minimum_neighbors(trend);
    });

    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
