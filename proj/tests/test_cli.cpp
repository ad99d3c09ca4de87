#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "safeedit/cli.hpp"
#include "safeedit/config.hpp"
#include "safeedit/run_store.hpp"
#include "safeedit/sha256.hpp"
#include "safeedit/types.hpp"
#include "test_util.hpp"

#include <fstream>
#include <map>

using namespace safeedit;
using testutil::TempDir;

namespace {

void write_file(const std::filesystem::path &path, const std::string &content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
}

std::string policies_path() {
  return (std::filesystem::path(SAFEEDIT_SOURCE_DIR) /
          "data/default_policies.json")
      .string();
}

} // namespace

TEST_CASE("unknown subcommand exits with usage code 2") {
  CHECK(cli_dispatch({"frobnicate"}) == 2);
  CHECK(cli_dispatch({}) == 2);
}

TEST_CASE("--help exits zero") {
  CHECK(cli_dispatch({"--help"}) == 0);
}

TEST_CASE("validate passes clean datasets and fails dirty ones") {
  TempDir dir("cli-validate");
  auto clean = dir.path() / "clean.records";
  {
    std::ofstream out(clean);
    out << encode_instance(testutil::make_instance("v1", 1, true)) << "\n";
    out << encode_instance(testutil::make_instance("v2", 0, true)) << "\n";
  }
  CHECK(cli_dispatch({"validate", "--dataset", clean.string()}) == 0);

  auto dirty = dir.path() / "dirty.records";
  {
    EditInstance bad = testutil::make_instance("v3", 0, true);
    bad.rounds[0].refined_prompt = "x";
    std::ofstream out(dirty);
    out << encode_instance(bad) << "\n";
  }
  CHECK(cli_dispatch({"validate", "--dataset", dirty.string()}) == 1);
  CHECK(cli_dispatch({"validate", "--dataset", "/nonexistent"}) == 1);
}

TEST_CASE("edit runs twenty mock instances end to end") {
  TempDir dir("cli-edit");
  auto prompts = dir.path() / "prompts.jsonl";
  std::string body;
  for (int i = 0; i < 20; ++i) {
    char idbuf[8];
    std::snprintf(idbuf, sizeof(idbuf), "%03d", i);
    body += std::string("{\"id\": \"cli-") + idbuf +
            "\", \"text\": \"street scene " + std::to_string(i) +
            "\", \"category\": \"violence\"}\n";
  }
  write_file(prompts, body);

  std::string store_dir = (dir.path() / "store").string();
  int rc = cli_dispatch({"edit", "--prompts", prompts.string(), "--store",
                         store_dir, "--policies", policies_path(),
                         "--max-rounds", "4", "--budget", "3", "--run-id",
                         "cli-run"});
  CHECK(rc == 0);

  RunStore store{std::filesystem::path(store_dir)};
  REQUIRE(store.has_run("cli-run"));
  RunManifest manifest = store.read_manifest("cli-run");
  CHECK(manifest.statuses.size() == 20);
  CHECK(manifest.failed_count() == 0);
  CHECK_FALSE(manifest.interrupted);
  CHECK(std::filesystem::exists(store.run_dir("cli-run") / "dataset.records"));

  // The emitted dataset validates cleanly through the CLI as well.
  auto records = store.run_dir("cli-run") / "dataset.records";
  CHECK(cli_dispatch({"validate", "--dataset", records.string()}) == 0);
}

TEST_CASE("export and eval and report run over a recorded run") {
  TempDir dir("cli-pipeline");
  auto prompts = dir.path() / "prompts.jsonl";
  write_file(prompts,
             "{\"id\": \"a\", \"text\": \"harbor at noon\", \"category\": \"safe\"}\n"
             "{\"id\": \"b\", \"text\": \"street fight\", \"category\": \"violence\"}\n"
             "{\"id\": \"c\", \"text\": \"muddy carnival\", \"category\": \"shocking\"}\n");
  std::string store_dir = (dir.path() / "store").string();
  REQUIRE(cli_dispatch({"edit", "--prompts", prompts.string(), "--store",
                        store_dir, "--policies", policies_path(), "--run-id",
                        "pipe"}) == 0);

  auto corpus = dir.path() / "corpus.records";
  CHECK(cli_dispatch({"export", "--store", store_dir, "--run", "pipe", "--out",
                      corpus.string(), "--variant", "standard"}) == 0);
  CHECK(std::filesystem::exists(corpus));
  CHECK(std::filesystem::exists(dir.path() / "corpus.records.manifest.json"));

  auto eval_dir = dir.path() / "eval";
  CHECK(cli_dispatch({"eval", "--store", store_dir, "--run", "pipe", "--out",
                      eval_dir.string(), "--policies", policies_path()}) == 0);
  CHECK(std::filesystem::exists(eval_dir / "eval.json"));
  CHECK(std::filesystem::exists(eval_dir / "clip.series"));

  auto report_dir = dir.path() / "report";
  CHECK(cli_dispatch({"report", "--eval", eval_dir.string(), "--out",
                      report_dir.string()}) == 0);
  CHECK(std::filesystem::exists(report_dir / "metrics.tsv"));
  CHECK(std::filesystem::exists(report_dir / "summary.json"));
}

TEST_CASE("config file drives loop parameters and profiles") {
  TempDir dir("cli-config");
  write_file(dir.path() / "config.json", R"({
    "profiles": {
      "mymock": {
        "judge": {"kind": "mock", "salt": 9},
        "generator": {"kind": "mock", "salt": 9}
      }
    },
    "loop": {"max_rounds": 3, "budget": 2, "seed": 77,
             "fail_policy": "accept_last_image"},
    "workers": 1
  })");
  Config config = Config::load(dir.path() / "config.json");
  CHECK(config.loop.max_rounds == 3);
  CHECK(config.loop.classification_round_budget == 2);
  CHECK(config.loop.generation_seed == 77);
  CHECK(config.workers == 1);
  CHECK(config.has_profile("mymock"));
  CHECK_FALSE(config.has_profile("other"));

  auto snapshot = config.snapshot("mymock", "abc123");
  CHECK(snapshot.at("policy_sha256") == "abc123");
  CHECK(snapshot.at("loop").at("seed") == 77);
  CHECK(snapshot.dump().find("api_key\":") == std::string::npos);

  auto prompts = dir.path() / "p.jsonl";
  write_file(prompts, "{\"id\": \"x\", \"text\": \"rainy alley\", \"category\": \"hate\"}\n");
  std::string store_dir = (dir.path() / "store").string();
  CHECK(cli_dispatch({"edit", "--prompts", prompts.string(), "--store",
                      store_dir, "--config",
                      (dir.path() / "config.json").string(), "--backend",
                      "mymock", "--policies", policies_path(), "--run-id",
                      "cfg-run", "--max-rounds", "3", "--budget", "2"}) == 0);
  RunStore store{std::filesystem::path(store_dir)};
  CHECK(store.read_manifest("cfg-run").config_snapshot.at("profile") ==
        "mymock");
}

TEST_CASE("edit imports initial images from a directory when present") {
  TempDir dir("cli-images");
  auto prompts = dir.path() / "p.jsonl";
  write_file(prompts,
             "{\"id\": \"img-a\", \"text\": \"prompt a\", \"category\": \"violence\"}\n"
             "{\"id\": \"img-b\", \"text\": \"prompt b\", \"category\": \"violence\"}\n");
  auto images = dir.path() / "images";
  std::filesystem::create_directories(images);
  // One pre-rendered PPM for img-a; img-b falls back to generation.
  std::string ppm = "P6\n2 1\n255\n";
  ppm += std::string("\x10\x20\x30\x40\x50\x60", 6);
  write_file(images / "img-a.ppm", ppm);

  std::string store_dir = (dir.path() / "store").string();
  REQUIRE(cli_dispatch({"edit", "--prompts", prompts.string(), "--images",
                        images.string(), "--store", store_dir, "--policies",
                        policies_path(), "--run-id", "img-run"}) == 0);
  RunStore store{std::filesystem::path(store_dir)};
  RunManifest manifest = store.read_manifest("img-run");
  std::map<std::string, ImageRef> initials;
  for (const auto &[prompt, image] : manifest.dataset) {
    initials[prompt.id] = image;
  }
  std::vector<std::uint8_t> expected(ppm.begin(), ppm.end());
  CHECK(initials.at("img-a").digest == sha256_hex(expected));
  CHECK(initials.at("img-a").width == 2);
  CHECK(initials.at("img-b").digest != initials.at("img-a").digest);
}

TEST_CASE("synthesize runs against the shipped example manifest") {
  TempDir dir("cli-synth");
  std::string manifest =
      (std::filesystem::path(SAFEEDIT_SOURCE_DIR) / "data/examples/sources.json")
          .string();
  std::string store_dir = (dir.path() / "store").string();
  REQUIRE(cli_dispatch({"synthesize", "--manifest", manifest, "--store",
                        store_dir, "--policies", policies_path(), "--run-id",
                        "ex-synth"}) == 0);
  RunStore store{std::filesystem::path(store_dir)};
  RunManifest m = store.read_manifest("ex-synth");
  CHECK(m.statuses.size() == 10); // 6 unsafe + 4 safe example prompts
  CHECK(std::filesystem::exists(store.run_dir("ex-synth") / "dataset.records"));
  CHECK(std::filesystem::exists(store.run_dir("ex-synth") / "stats.json"));
  auto records = store.run_dir("ex-synth") / "dataset.records";
  CHECK(cli_dispatch({"validate", "--dataset", records.string()}) == 0);
}

TEST_CASE("missing profile or policy file is a runtime error") {
  TempDir dir("cli-bad");
  auto prompts = dir.path() / "p.jsonl";
  write_file(prompts, "{\"id\": \"x\", \"text\": \"t\"}\n");
  CHECK(cli_dispatch({"edit", "--prompts", prompts.string(), "--store",
                      (dir.path() / "s").string(), "--backend", "nope",
                      "--policies", policies_path()}) == 1);
  CHECK(cli_dispatch({"edit", "--prompts", prompts.string(), "--store",
                      (dir.path() / "s2").string()}) == 1);
}
