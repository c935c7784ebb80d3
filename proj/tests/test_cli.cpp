// SPDX-License-Identifier: Apache-2.0
//
// End-to-end runs of the command-line tool on a miniature configuration.
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <map>
#include <string>

#include <fmt/core.h>

#include "support.hpp"

namespace fs = std::filesystem;

namespace {

const char* kConfig = R"({
  "seed": 17,
  "intrinsics": {"fx": 27.5, "fy": 27.5, "cx": 8, "cy": 8, "width": 16, "height": 16},
  "synth": {"n_source": 12, "n_target": 4},
  "field": {"resolutions": [4, 8], "features": 3, "density_hidden": [8], "density_features": 4,
            "color_hidden": [8], "appearance_dim": 3, "sh_degree": 1},
  "nerf": {"iterations": 6, "rays_per_batch": 64, "eval_every": 3, "n_samples": 8},
  "augment": {"n_nerf": 3, "n_samples": 8},
  "probe": {"seeds": 2, "steps": 5, "batch_size": 4, "hidden": [8], "input_side": 8},
  "report": {"diversity_draws": 3, "diversity_poses": 2}
})";

// Runs the tool with the given arguments; returns its exit status.
int run(const std::string& args, const std::string& env = "") {
  const std::string cmd = fmt::format("{} '{}' {} > /dev/null 2>&1", env, NERFAUG_CLI_PATH, args);
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

fs::path write_config(const fs::path& dir) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << kConfig;
  return p;
}

int pipeline(const fs::path& config, const fs::path& ws, const std::string& env = "") {
  const std::string base = fmt::format("--config '{}' -w '{}' ", config.string(), ws.string());
  for (const char* stage : {"synth-gen", "nerf-train", "augment", "probe-ab", "report"}) {
    const int rc = run(base + stage, env);
    if (rc != 0) return rc;
  }
  return 0;
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = test::slurp(e.path());
  }
  return files;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("full pipeline is byte-deterministic across runs and thread counts") {
  const fs::path dir = test::scratch("cli_det");
  const fs::path config = write_config(dir);
  REQUIRE(pipeline(config, dir / "a", "NERFAUG_THREADS=1") == 0);
  REQUIRE(pipeline(config, dir / "b", "NERFAUG_THREADS=3") == 0);
  const auto a = tree(dir / "a"), b = tree(dir / "b");
  CHECK(a.size() == b.size());
  for (const auto& [name, bytes] : a) {
    INFO(name);
    REQUIRE(b.count(name) == 1);
    CHECK(bytes == b.at(name));
  }
  CHECK(a.count("augment/contact_sheet.png") == 1);
  CHECK(a.count("report/report.txt") == 1);
  CHECK(a.count("report/alpha_sweep.png") == 1);
  CHECK(a.count("probe/ab_report.csv") == 1);
  CHECK(a.count("nerf/field.ckpt") == 1);

  // Rerunning the report in place rewrites the same bytes.
  const std::string report = a.at("report/report.txt");
  REQUIRE(run(fmt::format("--config '{}' -w '{}' report", config.string(), (dir / "a").string())) == 0);
  CHECK(test::slurp(dir / "a" / "report" / "report.txt") == report);
}

TEST_CASE("augment counts with and without texture randomization") {
  const fs::path dir = test::scratch("cli_count");
  const fs::path config = write_config(dir);
  const std::string base = fmt::format("--config '{}' -w '{}' ", config.string(), (dir / "w").string());
  REQUIRE(run(base + "synth-gen") == 0);
  REQUIRE(run(base + "nerf-train") == 0);
  auto count = [&]() {
    int n = 0;
    for (const auto& e : fs::directory_iterator(dir / "w" / "augment" / "images")) n += e.is_regular_file();
    return n;
  };
  REQUIRE(run(base + "augment --n-nerf 4") == 0);
  CHECK(count() == 8);
  fs::remove_all(dir / "w" / "augment");
  fs::remove_all(dir / "w" / "train");
  REQUIRE(run(base + "augment --n-nerf 4 --no-texture") == 0);
  CHECK(count() == 4);
  CHECK(fs::exists(dir / "w" / "augment" / "contact_sheet.png"));
}

TEST_CASE("paused training resumes to the uninterrupted result") {
  const fs::path dir = test::scratch("cli_resume");
  const fs::path config = write_config(dir);
  const std::string a = fmt::format("--config '{}' -w '{}' ", config.string(), (dir / "a").string());
  const std::string b = fmt::format("--config '{}' -w '{}' ", config.string(), (dir / "b").string());
  REQUIRE(run(a + "synth-gen") == 0);
  REQUIRE(run(a + "nerf-train") == 0);
  REQUIRE(run(b + "synth-gen") == 0);
  REQUIRE(run(b + "nerf-train --pause-at 4") == 0);
  CHECK(test::slurp(dir / "a" / "nerf" / "field.ckpt") != test::slurp(dir / "b" / "nerf" / "field.ckpt"));
  REQUIRE(run(b + "nerf-train --resume") == 0);
  for (const char* f : {"nerf/field.ckpt", "nerf/state.bin", "nerf/train_log.csv"}) {
    INFO(f);
    CHECK(test::slurp(dir / "a" / f) == test::slurp(dir / "b" / f));
  }
}

TEST_CASE("nerf-render writes an image") {
  const fs::path dir = test::scratch("cli_render");
  const fs::path config = write_config(dir);
  const std::string base = fmt::format("--config '{}' -w '{}' ", config.string(), (dir / "w").string());
  REQUIRE(run(base + "synth-gen") == 0);
  REQUIRE(run(base + "nerf-train") == 0);
  const fs::path out = dir / "r.png";
  CHECK(run(base + fmt::format("nerf-render --record 2 --embedding 1 --embedding-j 3 --alpha -2 -o '{}'",
                               out.string())) == 0);
  CHECK(fs::exists(out));
  CHECK(run(base + "nerf-render --pose 1,0,0,0,0,0,3 --embedding 99 -o '" + out.string() + "'") == 2);
  CHECK(run(base + "nerf-render --pose 1,0,0 -o '" + out.string() + "'") == 2);
}

TEST_CASE("exit codes") {
  const fs::path dir = test::scratch("cli_exit");
  const fs::path config = write_config(dir);
  CHECK(run("--help") == 0);
  CHECK(run("") == 2);
  CHECK(run("no-such-command") == 2);
  CHECK(run("synth-gen --n-source notanumber -w '" + (dir / "w").string() + "'") == 2);
  CHECK(run("synth-gen") == 2);  // no workspace
  CHECK(run(fmt::format("--config '{}' -w '{}' synth-gen", config.string(),
                        (dir / "missing" / "parent" / "w").string())) != 0);
  CHECK_FALSE(fs::exists(dir / "missing"));
  CHECK(run(fmt::format("--config '{}' synth-gen", (dir / "nope.json").string())) == 2);
  std::ofstream(dir / "bad.json") << R"({"nerf": {"iterationz": 3}})";
  CHECK(run(fmt::format("--config '{}' -w '{}' synth-gen", (dir / "bad.json").string(), (dir / "w").string())) == 2);
  // Later stages without their inputs are data errors.
  CHECK(run(fmt::format("--config '{}' -w '{}' nerf-train", config.string(), (dir / "w2").string())) == 3);
  CHECK(run(fmt::format("--config '{}' -w '{}' augment", config.string(), (dir / "w3").string())) == 3);
  CHECK(run(fmt::format("--config '{}' -w '{}' probe-ab", config.string(), (dir / "w4").string())) == 3);
}

TEST_CASE("corrupt manifest is a data error") {
  const fs::path dir = test::scratch("cli_corrupt");
  const fs::path config = write_config(dir);
  const std::string base = fmt::format("--config '{}' -w '{}' ", config.string(), (dir / "w").string());
  REQUIRE(run(base + "synth-gen") == 0);
  std::ofstream(dir / "w" / "synth" / "source" / "manifest.json", std::ios::trunc) << "{\"version\": 1, \"rec";
  CHECK(run(base + "nerf-train") == 3);
}

}  // TEST_SUITE
