#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>

#include "simeval/backends.hpp"
#include "simeval/error.hpp"
#include "simeval/json_io.hpp"
#include "simeval/pipeline.hpp"
#include "support.hpp"

using namespace simeval;
namespace fs = std::filesystem;

namespace {

// Copies the fixture corpus and configs so outputs land in a scratch directory.
fs::path stage_fixture(const testing::TempDir& dir) {
    for (const char* f : {"dialogues.jsonl", "backends.toml", "pipeline.toml"})
        fs::copy_file(testing::fixture(f), dir / f);
    return dir / "pipeline.toml";
}

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string(SIMEVAL_CLI) + " " + args + " >" + log.string() + " 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("manifest sidecars decide whether a stage is cached") {
    testing::TempDir dir("manifest");
    const auto in = dir / "in.txt";
    const auto out = dir / "out.txt";
    testing::spit(in, "input");
    testing::spit(out, "output");
    CHECK(file_sha256(in) == sha256_hex("input"));
    CHECK(manifest_path_for(out) == dir / "out.txt.manifest.json");
    CHECK_FALSE(outputs_up_to_date("cmd", "h", {in}, {out}));

    RunManifest m;
    m.command = "cmd";
    m.config_hash = "h";
    m.inputs[in.string()] = file_sha256(in);
    m.outputs[out.string()] = file_sha256(out);
    write_manifests(m);
    CHECK(fs::exists(manifest_path_for(out)));
    CHECK(manifest_from_json(to_json(m)).outputs == m.outputs);
    CHECK(outputs_up_to_date("cmd", "h", {in}, {out}));
    CHECK_FALSE(outputs_up_to_date("cmd", "other", {in}, {out}));
    CHECK_FALSE(outputs_up_to_date("other", "h", {in}, {out}));

    testing::spit(in, "changed input");
    CHECK_FALSE(outputs_up_to_date("cmd", "h", {in}, {out}));
    testing::spit(in, "input");
    testing::spit(out, "tampered");
    CHECK_FALSE(outputs_up_to_date("cmd", "h", {in}, {out}));
}

TEST_CASE("pipeline runs every stage, then reuses outputs") {
    testing::TempDir dir("pipeline");
    const auto cfg = stage_fixture(dir);
    std::vector<std::string> lines;
    auto first = run_pipeline(cfg, [&](const std::string& l) { lines.push_back(l); });
    REQUIRE(first.stages.size() == 5);
    for (const auto& [name, r] : first.stages) {
        CHECK_FALSE(r.cached);
        for (const auto& o : r.outputs) CHECK_MESSAGE(fs::exists(o), o.string());
    }
    const auto out = dir / "out";
    for (const char* f : {"annotations.jsonl", "candidates.jsonl", "reports.jsonl", "boundaries.json", "pairs.jsonl"})
        CHECK_MESSAGE(fs::exists(out / f), f);
    CHECK(read_jsonl(out / "candidates.jsonl").size() > 0);
    const auto reports = testing::slurp(out / "reports.jsonl");

    auto second = run_pipeline(cfg);
    for (const auto& [name, r] : second.stages) CHECK_MESSAGE(r.cached, name);
    CHECK(testing::slurp(out / "reports.jsonl") == reports);

    fs::remove_all(out);
    run_pipeline(cfg);
    CHECK(testing::slurp(out / "reports.jsonl") == reports);
}

TEST_CASE("a failing stage is named") {
    testing::TempDir dir("stage-error");
    const auto cfg = stage_fixture(dir);
    testing::spit(cfg, "[pipeline]\ncorpus = \"missing.jsonl\"\nstages = [\"annotate\"]\n");
    try {
        run_pipeline(cfg);
        FAIL("expected StageError");
    } catch (const StageError& e) {
        CHECK(e.stage == "annotate");
    }
    testing::spit(cfg, "[pipeline]\ncorpus = \"dialogues.jsonl\"\nstages = [\"evaluate\"]\n");
    CHECK_THROWS_AS(run_pipeline(cfg), StageError);
    testing::spit(cfg, "[pipeline]\ncorpus = \"dialogues.jsonl\"\nstages = [\"train\"]\n");
    CHECK_THROWS_AS(run_pipeline(cfg), ParseError);
}

TEST_CASE("validate reports rejections and statistics") {
    auto s = run_validate(testing::fixture("dialogues.jsonl"), std::nullopt);
    CHECK(s.loaded == 5);
    CHECK(s.rejected.empty());
    testing::TempDir dir("validate");
    auto lines = testing::slurp(testing::fixture("dialogues.jsonl"));
    testing::spit(dir / "bad.jsonl", lines + "{\"id\": \"broken\"}\n");
    auto bad = run_validate(dir / "bad.jsonl", std::nullopt);
    CHECK(bad.loaded == 5);
    REQUIRE(bad.rejected.size() == 1);
    CHECK(bad.rejected[0].line == 6);
}

TEST_CASE("command-line exit codes") {
    testing::TempDir dir("cli");
    const auto log = dir / "log.txt";
    CHECK(run_cli("--version", log) == 0);
    CHECK(run_cli("", log) == 2);
    CHECK(run_cli("frobnicate", log) == 2);
    CHECK(run_cli("pairs --reports r.jsonl", log) == 2);
    CHECK(run_cli("validate " + testing::fixture("dialogues.jsonl").string(), log) == 0);
    CHECK(testing::slurp(log).find("5") != std::string::npos);
    CHECK(run_cli("validate " + (dir / "absent.jsonl").string(), log) == 1);
    CHECK_FALSE(testing::slurp(log).empty());

    testing::spit(dir / "bad.jsonl", testing::slurp(testing::fixture("dialogues.jsonl")) + "not json\n");
    CHECK(run_cli("validate " + (dir / "bad.jsonl").string() + " --out " + (dir / "v.json").string(), log) == 1);
    CHECK(fs::exists(dir / "v.json"));
    CHECK(fs::exists(manifest_path_for(dir / "v.json")));

    const auto cfg = stage_fixture(dir);
    CHECK(run_cli("run " + cfg.string(), log) == 0);
    CHECK(fs::exists(dir / "out" / "pairs.jsonl"));
    CHECK(run_cli("run " + cfg.string(), log) == 0);
    CHECK(testing::slurp(log).find("cached") != std::string::npos);
}
