// Command-line driver for the stepwise pipeline:
//   trustnbr synth | prepare | train | explain | casebase | experiment | serve
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.

#include <atomic>
#include <csignal>
#include <iostream>
#include <thread>

#include <sys/socket.h>

#include <CLI11.hpp>
#include <httplib.h>

#include "trustnbr/dataset.hpp"
#include "trustnbr/error.hpp"
#include "trustnbr/io.hpp"
#include "trustnbr/pipeline.hpp"
#include "trustnbr/service.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitInternal = 3;

void report(const std::string& step, trustnbr::StepOutcome outcome) {
    std::cout << step << ": " << (outcome == trustnbr::StepOutcome::Cached ? "up to date (cached)" : "done") << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Case-based trust assessment for classifier alerts"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Write the five-feature synthetic benchmark as CSV");
    std::string synth_out;
    std::size_t synth_rows = 5404;
    std::uint64_t synth_seed = 1;
    synth->add_option("out", synth_out, "Output CSV path")->required();
    synth->add_option("--rows", synth_rows, "Number of rows");
    synth->add_option("--seed", synth_seed, "Generator seed");

    // prepare
    auto* prepare = app.add_subcommand("prepare", "Split, normalize and start a run directory");
    std::string csv, out_dir;
    trustnbr::PipelineConfig config;
    std::vector<double> fractions;
    std::string id_column;
    prepare->add_option("csv", csv, "Input CSV with a header row")->required();
    prepare->add_option("--label", config.label_column, "Binary label column")->required();
    prepare->add_option("--out", out_dir, "Run directory")->required();
    prepare->add_option("--id-column", id_column, "Integer instance id column");
    prepare->add_flag("--impute", config.impute_missing, "Mean-impute missing cells instead of rejecting them");
    prepare->add_option("--fractions", fractions, "train,test,production fractions")->delimiter(',')->expected(3);
    prepare->add_option("--split-seed", config.split_seed);
    prepare->add_option("--trees", config.forest.n_trees);
    prepare->add_option("--max-depth", config.forest.max_depth);
    prepare->add_option("--min-leaf", config.forest.min_leaf);
    prepare->add_option("--features-per-split", config.forest.features_per_split, "0 = ceil(sqrt(m))");
    prepare->add_option("--train-seed", config.train_seed);
    prepare->add_option("--background-size", config.background_size, "SHAP background rows");
    prepare->add_option("--background-seed", config.background_seed);
    prepare->add_option("--threshold", config.threshold, "Alert threshold on the model confidence");
    prepare->add_option("--k-max", config.k_max, "Largest k in the experiment grid");

    std::string step_dir;
    auto* train = app.add_subcommand("train", "Train the random forest");
    train->add_option("dir", step_dir, "Run directory")->required();
    auto* explain = app.add_subcommand("explain", "Compute SHAP vectors for cases and production rows");
    explain->add_option("dir", step_dir, "Run directory")->required();
    auto* casebase = app.add_subcommand("casebase", "Build the case base container");
    casebase->add_option("dir", step_dir, "Run directory")->required();

    auto* experiment = app.add_subcommand("experiment", "Run the simulated-user grid");
    std::optional<std::size_t> k_max;
    experiment->add_option("dir", step_dir, "Run directory")->required();
    experiment->add_option("--k-max", k_max, "Largest k (overrides the prepared config)");

    auto* serve = app.add_subcommand("serve", "Serve the dashboard API for a run directory");
    int port = 8080;
    std::string host = "0.0.0.0";
    bool debug_truth = false;
    serve->add_option("dir", step_dir, "Run directory")->required();
    serve->add_option("--port", port);
    serve->add_option("--host", host);
    serve->add_flag("--debug-truth", debug_truth, "Enable /v1/debug/truth/{id}");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    try {
        if (*synth) {
            const auto d = trustnbr::make_phoneme_surrogate(synth_rows, synth_seed);
            trustnbr::write_file_atomic(synth_out, trustnbr::to_csv(d, "label"));
            std::cout << "wrote " << d.size() << " rows to " << synth_out << "\n";
        } else if (*prepare) {
            if (!fractions.empty()) config.fractions = {fractions[0], fractions[1], fractions[2]};
            if (!id_column.empty()) config.id_column = id_column;
            config = trustnbr::PipelineConfig::from_json(config.to_json());
            report("prepare", trustnbr::ArtifactDir(out_dir).prepare(csv, config));
        } else if (*train) {
            report("train", trustnbr::ArtifactDir(step_dir).train());
        } else if (*explain) {
            report("explain", trustnbr::ArtifactDir(step_dir).explain());
        } else if (*casebase) {
            report("casebase", trustnbr::ArtifactDir(step_dir).casebase());
        } else if (*experiment) {
            trustnbr::ArtifactDir dir(step_dir);
            report("experiment", dir.experiment(k_max));
            std::cout << "wrote grid.csv, heatmap.csv, curves.csv, experiment.json in " << step_dir << "\n";
        } else if (*serve) {
            trustnbr::Service service({debug_truth, {}});
            service.set_default_session(trustnbr::Session::load(step_dir));
            httplib::Server server;
            service.mount(server);
            // httplib's default sets SO_REUSEPORT, which lets a second server share a busy port.
            server.set_socket_options([](int sock) {
                int yes = 1;
                ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
            });
            if (!server.bind_to_port(host, port)) {
                std::cerr << "error: cannot listen on " << host << ":" << port << " (port in use?)\n";
                return kExitData;
            }

            sigset_t stop_signals;
            sigemptyset(&stop_signals);
            sigaddset(&stop_signals, SIGINT);
            sigaddset(&stop_signals, SIGTERM);
            pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);
            std::atomic<bool> signalled{false};
            std::jthread stopper([&] {
                int sig = 0;
                sigwait(&stop_signals, &sig);
                signalled = true;
                server.stop();
            });

            std::cout << "serving " << step_dir << " on http://" << host << ":" << port << "/v1\n" << std::flush;
            server.listen_after_bind();
            if (!signalled) pthread_kill(stopper.native_handle(), SIGTERM);
        }
    } catch (const trustnbr::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const trustnbr::FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const trustnbr::StaleArtifactError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const trustnbr::NoAlertsError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
    return 0;
}
