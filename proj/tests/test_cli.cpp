#include <gtest/gtest.h>

#include <chrono>
#include <cstdio>
#include <thread>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>

#include <httplib.h>

#include "support.hpp"
#include "trustnbr/io.hpp"

extern char** environ;

using testsupport::TempDir;

namespace {

struct Result {
    int code = -1;
    std::string output;
};

// Runs the CLI through the shell, capturing stdout and stderr together.
Result run(const std::string& args) {
    const std::string cmd = std::string(TRUSTNBR_CLI) + " " + args + " 2>&1";
    Result r;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) return r;
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) r.output.append(buf, n);
    const int status = ::pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string quoted(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

// Binds port 0, reads back the chosen port and releases it again.
int free_port() {
    const int sock = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    socklen_t len = sizeof addr;
    int port = -1;
    if (::bind(sock, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0 &&
        ::getsockname(sock, reinterpret_cast<sockaddr*>(&addr), &len) == 0)
        port = ntohs(addr.sin_port);
    ::close(sock);
    return port;
}

class Child {
public:
    explicit Child(std::vector<std::string> args) {
        std::vector<char*> argv;
        for (auto& a : args) argv.push_back(a.data());
        argv.push_back(nullptr);
        if (::posix_spawn(&pid_, argv[0], nullptr, nullptr, argv.data(), environ) != 0) pid_ = -1;
    }
    ~Child() {
        if (pid_ > 0) {
            ::kill(pid_, SIGTERM);
            int status = 0;
            ::waitpid(pid_, &status, 0);
        }
    }
    bool started() const { return pid_ > 0; }

private:
    pid_t pid_ = -1;
};

class CliChain : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = new TempDir;
        const auto csv = *dir_ / "bench.csv";
        ASSERT_EQ(run("synth " + quoted(csv) + " --rows 500 --seed 3").code, 0);
        const auto out = quoted(*dir_ / "run");
        ASSERT_EQ(run("prepare " + quoted(csv) + " --label label --id-column id --trees 15 --background-size 16 --k-max 5 --out " + out).code, 0);
        for (const char* step : {"train", "explain", "casebase", "experiment"})
            ASSERT_EQ(run(std::string(step) + " " + out).code, 0) << step;
    }
    static void TearDownTestSuite() { delete dir_; }
    static TempDir* dir_;
};

TempDir* CliChain::dir_ = nullptr;

}  // namespace

TEST(Cli, UsageErrors) {
    EXPECT_EQ(run("").code, 1);
    EXPECT_EQ(run("frobnicate").code, 1);
    EXPECT_EQ(run("prepare").code, 1);
    EXPECT_EQ(run("--help").code, 0);
}

TEST(Cli, MissingLabelColumnIsNamed) {
    TempDir dir;
    trustnbr::write_file_atomic(dir / "d.csv", "a,b\n1,0\n2,1\n");
    const auto r = run("prepare " + quoted(dir / "d.csv") + " --label target --out " + quoted(dir / "out"));
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.output.find("'target'"), std::string::npos) << r.output;
}

TEST(Cli, UnpreparedDirectory) {
    TempDir dir;
    const auto train = run("train " + quoted(dir.path()));
    EXPECT_EQ(train.code, 2);
    EXPECT_NE(train.output.find("missing artifact"), std::string::npos) << train.output;
    const auto serve = run("serve " + quoted(dir.path()) + " --port " + std::to_string(free_port()));
    EXPECT_EQ(serve.code, 2);
    EXPECT_NE(serve.output.find("missing artifact"), std::string::npos) << serve.output;
    EXPECT_NE(serve.output.find("manifest.json"), std::string::npos) << serve.output;
}

TEST_F(CliChain, ArtifactsAndCaching) {
    const auto run_dir = dir_->path() / "run";
    for (const char* f : {"split.json", "normalizer.json", "forest.json", "shap.json", "casebase/casebase.json", "grid.csv",
                          "heatmap.csv", "curves.csv", "experiment.json", "manifest.json"})
        EXPECT_TRUE(std::filesystem::exists(run_dir / f)) << f;
    const auto again = run("train " + quoted(run_dir));
    EXPECT_EQ(again.code, 0);
    EXPECT_NE(again.output.find("cached"), std::string::npos) << again.output;
    const auto heat = trustnbr::read_file(run_dir / "heatmap.csv");
    EXPECT_EQ(std::count(heat.begin(), heat.end(), '\n'), 21);
}

TEST_F(CliChain, ServeAnswersAndRejectsOccupiedPort) {
    const int port = free_port();
    Child server({TRUSTNBR_CLI, "serve", (dir_->path() / "run").string(), "--host", "127.0.0.1", "--port",
                  std::to_string(port)});
    ASSERT_TRUE(server.started());
    httplib::Client client("127.0.0.1", port);
    client.set_read_timeout(10, 0);
    httplib::Result res;
    for (int attempt = 0; attempt < 100 && !res; ++attempt) {
        res = client.Get("/v1/alerts");
        if (!res) std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);

    const auto clash = run("serve " + quoted(dir_->path() / "run") + " --host 127.0.0.1 --port " + std::to_string(port));
    EXPECT_EQ(clash.code, 2);
    EXPECT_NE(clash.output.find("cannot listen"), std::string::npos) << clash.output;
}
