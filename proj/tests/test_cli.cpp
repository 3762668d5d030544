#include "cred/crt1.hpp"

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

namespace {

namespace fs = std::filesystem;

struct Run {
    int status = -1;
    std::string out;
};

Run cli(const std::string& args) {
    const std::string cmd = std::string(CRED_CLI_PATH) + " " + args + " 2>&1";
    Run r;
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    char buf[512];
    while (fgets(buf, sizeof buf, p)) r.out += buf;
    const int raw = pclose(p);
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    return r;
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("cred_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::size_t count(const std::string& s, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1)) ++n;
    return n;
}

}  // namespace

TEST_CASE("budget prints component rows") {
    const auto r = cli("budget --variant default --resolution 800x1280");
    CHECK(r.status == 0);
    for (const char* c : {"backbone", "encoder", "decoder", "cram", "osma", "total"}) CHECK(count(r.out, c) >= 1);

    const auto csv = cli("budget --variant default,dc,dcx025,oo --resolution 800x1280 --csv");
    CHECK(csv.status == 0);
    CHECK(count(csv.out, "\n") == 1 + 4 * 6);
}

TEST_CASE("usage errors exit 2") {
    CHECK(cli("budget --bogus").status == 2);
    CHECK(cli("").status == 2);
    CHECK(cli("frobnicate").status == 2);
    CHECK(cli("budget --variant nope").status == 2);
    CHECK(cli("budget --resolution 65x64").status == 2);

    const auto dir = scratch("config");
    std::ofstream(dir / "bad.json") << R"({"detr": {"heads": 5}})";
    const auto r = cli("--config " + (dir / "bad.json").string() + " budget");
    CHECK(r.status == 2);
    CHECK(r.out.find("detr.heads") != std::string::npos);
    CHECK(cli("--config " + (dir / "missing.json").string() + " budget").status == 2);
    fs::remove_all(dir);
}

TEST_CASE("goldens round trip and detect drift") {
    const auto dir = scratch("goldens");
    const std::string g = "--goldens " + dir.string();
    CHECK(cli("forward --write-goldens " + g).status == 0);
    CHECK(fs::exists(dir / "boxes.crt1"));
    CHECK(cli("forward --check-goldens " + g).status == 0);

    auto t = cred::crt1::load(dir / "boxes.crt1");
    std::vector<double> v(t.data().begin(), t.data().end());
    v[0] += 1e-3;
    cred::crt1::save(dir / "boxes.crt1", cred::Tensor::from(t.shape(), v));
    const auto r = cli("forward --check-goldens " + g);
    CHECK(r.status == 1);
    CHECK(r.out.find("boxes") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("train-toy is reproducible and eval-toy reads its checkpoint") {
    const auto dir = scratch("train");
    auto run = [&](const std::string& tag) {
        return cli("--seed 7 train-toy --steps 3 --checkpoint " + (dir / ("ckpt_" + tag)).string() + " --metrics " +
                   (dir / ("m_" + tag + ".jsonl")).string());
    };
    const auto a = run("a"), b = run("b");
    CHECK(a.status == 0);
    const auto final_line = [](const std::string& out) {
        const auto at = out.find("final loss");
        return at == std::string::npos ? std::string() : out.substr(at, out.find('\n', at) - at);
    };
    CHECK_FALSE(final_line(a.out).empty());
    CHECK(final_line(a.out) == final_line(b.out));
    std::ifstream m(dir / "m_a.jsonl");
    std::string line;
    std::size_t lines = 0;
    while (std::getline(m, line)) ++lines;
    CHECK(lines == 3);

    CHECK(cli("--seed 7 eval-toy --checkpoint " + (dir / "ckpt_a").string()).status == 0);
    CHECK(cli("--seed 7 eval-toy --min-recall 1.1 --checkpoint " + (dir / "ckpt_a").string()).status == 1);
    fs::remove_all(dir);
}
