#include "safeedit/cli.hpp"

#include "safeedit/config.hpp"
#include "safeedit/edit_loop.hpp"
#include "safeedit/errors.hpp"
#include "safeedit/eval.hpp"
#include "safeedit/run_store.hpp"
#include "safeedit/sha256.hpp"
#include "safeedit/synthesis.hpp"
#include "safeedit/training_export.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

namespace safeedit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOptions {
  std::string store_dir;
  std::string config_path;
  std::string profile = "mock";
  std::string policies_path;
};

void add_common(CLI::App *cmd, CommonOptions &opts) {
  cmd->add_option("--store", opts.store_dir, "Run store root directory")
      ->required();
  cmd->add_option("--config", opts.config_path, "Configuration file");
  cmd->add_option("--backend,--profile", opts.profile,
                  "Backend profile name (default: mock)");
  cmd->add_option("--policies", opts.policies_path, "Content policy file");
}

struct Session {
  Config config;
  PolicySet policies;
  std::string policy_sha;
  RunStore store;
  BackendSet backends;
};

std::string file_sha256(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return sha256_hex(buf.str());
}

Session open_session(const CommonOptions &opts) {
  Config config = opts.config_path.empty() ? Config::defaults()
                                           : Config::load(opts.config_path);
  fs::path policy_path = opts.policies_path.empty()
                             ? config.policy_file
                             : fs::path(opts.policies_path);
  if (policy_path.empty()) {
    throw ConfigError("no policy file: pass --policies or set policy_file in "
                      "the config");
  }
  RunStore store{fs::path(opts.store_dir)};
  BackendSet backends = build_backends(config, opts.profile, store);
  return Session{std::move(config), load_policies(policy_path),
                 file_sha256(policy_path), std::move(store),
                 std::move(backends)};
}

std::string derive_run_id(const std::string &prefix, const json &snapshot,
                          const std::vector<PromptRecord> &records) {
  Sha256 h;
  h.update(snapshot.dump());
  for (const PromptRecord &r : records) {
    h.update(r.id);
    h.update("\x1f");
    h.update(r.text);
    h.update("\x1e");
  }
  return prefix + "-" + h.finish_hex().substr(0, 12);
}

void write_dataset_records(RunStore &store, const std::string &run_id) {
  std::vector<EditInstance> instances = load_run_instances(store, run_id);
  fs::path path = store.run_dir(run_id) / "dataset.records";
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    for (const EditInstance &inst : instances) {
      out << encode_instance(inst) << "\n";
    }
  }
  fs::rename(tmp, path);

  DatasetStats stats = dataset_stats(instances);
  std::ofstream out(store.run_dir(run_id) / "stats.json", std::ios::trunc);
  out << to_json_report(stats).dump(2) << "\n";
}

int report_batch(const BatchResult &result) {
  std::cout << "run " << result.manifest.run_id << ": "
            << result.completed << " completed, " << result.failed
            << " failed" << (result.interrupted ? " (interrupted)" : "")
            << "\n";
  for (const auto &[id, st] : result.manifest.statuses) {
    if (st.terminal == Terminal::Failed) {
      std::cout << "  failed: " << id << " ("
                << st.failure_reason.value_or("unknown") << ")\n";
    }
  }
  if (result.interrupted) return 1;
  return result.failed == 0 ? 0 : 1;
}

// -- subcommand bodies -------------------------------------------------------

int run_validate(const std::string &dataset_path, int max_rounds) {
  std::ifstream in(dataset_path, std::ios::binary);
  if (!in) {
    std::cerr << "cannot open " << dataset_path << "\n";
    return 1;
  }
  std::size_t line_no = 0, bad = 0, total = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ++total;
    try {
      EditInstance inst = decode_instance(line);
      auto violations = validate_instance(inst, max_rounds);
      if (!violations.empty()) {
        ++bad;
        for (const Violation &v : violations) {
          std::cout << dataset_path << ":" << line_no << ": " << v.describe()
                    << "\n";
        }
      }
    } catch (const std::exception &e) {
      ++bad;
      std::cout << dataset_path << ":" << line_no << ": " << e.what() << "\n";
    }
  }
  std::cout << total << " instances, " << bad << " invalid\n";
  return bad == 0 ? 0 : 1;
}

int run_synthesize(const CommonOptions &opts, const std::string &manifest_path,
                   int max_rounds, std::string run_id, bool resume,
                   std::uint64_t call_budget) {
  Session session = open_session(opts);
  session.config.loop.max_rounds = max_rounds;
  session.config.loop.classification_round_budget =
      std::min(session.config.loop.classification_round_budget, max_rounds);

  IngestReport ingest = ingest_prompts(load_source_manifest(manifest_path));
  for (const IngestIssue &issue : ingest.issues) {
    std::cerr << "ingest: " << to_string(issue.source) << " row " << issue.row
              << ": " << issue.reason << "\n";
  }
  std::cout << "ingested " << ingest.records.size() << " records ("
            << ingest.dropped_duplicates() << " duplicates dropped, "
            << ingest.issues.size() << " issues)\n";

  json snapshot = session.config.snapshot(opts.profile, session.policy_sha);
  if (run_id.empty()) {
    run_id = derive_run_id("synth", snapshot, ingest.records);
  }

  SeedImageResult seeds =
      generate_seed_images(ingest.records, *session.backends.generator,
                           session.config.loop.generation_seed, session.store,
                           run_id);
  std::cout << "seed images: " << seeds.generated << " generated, "
            << seeds.reused << " reused, " << seeds.failures.size()
            << " failed\n";

  BatchOptions batch;
  batch.workers = session.config.workers;
  batch.resume = resume;
  batch.logical_clock = session.backends.deterministic;
  batch.judge_call_budget = call_budget;
  BatchResult result = batch_edit(
      session.store, run_id, seeds.pairs, session.config.loop,
      *session.backends.judge, *session.backends.generator, session.policies,
      batch, snapshot);

  if (!result.interrupted) write_dataset_records(session.store, run_id);
  return report_batch(result);
}

int run_edit(const CommonOptions &opts, const std::string &prompts_path,
             const std::string &images_dir, int max_rounds, int budget,
             std::string run_id, bool resume, std::uint64_t call_budget) {
  Session session = open_session(opts);
  session.config.loop.max_rounds = max_rounds;
  session.config.loop.classification_round_budget = budget;

  std::vector<PromptRecord> records = load_prompt_records(prompts_path);
  json snapshot = session.config.snapshot(opts.profile, session.policy_sha);
  if (run_id.empty()) run_id = derive_run_id("edit", snapshot, records);

  // Initial images: a file named <id>.<ext> under --images wins; anything
  // missing is generated from the prompt.
  std::vector<std::pair<PromptRecord, ImageRef>> dataset;
  std::size_t imported = 0;
  SeedImageResult generated;
  std::vector<PromptRecord> missing;
  for (const PromptRecord &record : records) {
    bool found = false;
    if (!images_dir.empty()) {
      for (const char *ext : {".ppm", ".png", ".img"}) {
        fs::path p = fs::path(images_dir) / (record.id + ext);
        if (!fs::exists(p)) continue;
        std::ifstream in(p, std::ios::binary);
        std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
        dataset.emplace_back(record, session.store.put_image(bytes));
        ++imported;
        found = true;
        break;
      }
    }
    if (!found) missing.push_back(record);
  }
  if (!missing.empty()) {
    generated = generate_seed_images(missing, *session.backends.generator,
                                     session.config.loop.generation_seed,
                                     session.store, run_id);
    for (auto &pair : generated.pairs) dataset.push_back(std::move(pair));
  }
  std::cout << "images: " << imported << " imported, " << generated.generated
            << " generated, " << generated.reused << " reused\n";

  BatchOptions batch;
  batch.workers = session.config.workers;
  batch.resume = resume;
  batch.logical_clock = session.backends.deterministic;
  batch.judge_call_budget = call_budget;
  BatchResult result = batch_edit(
      session.store, run_id, dataset, session.config.loop,
      *session.backends.judge, *session.backends.generator, session.policies,
      batch, snapshot);

  if (!result.interrupted) write_dataset_records(session.store, run_id);
  return report_batch(result);
}

int run_export(const CommonOptions &opts, const std::string &run_id,
               const std::string &variant_name, const std::string &out_path,
               bool drop_trailing_unsafe) {
  RunStore store{fs::path(opts.store_dir)};
  TemplateVariant variant = parse_template_variant(variant_name);
  std::vector<EditInstance> instances =
      load_run_instances(store, run_id, /*include_failed=*/true);
  CorpusOptions options;
  options.drop_trailing_unsafe = drop_trailing_unsafe;
  CorpusManifest manifest = export_corpus(instances, variant, out_path, options);
  std::cout << "exported " << manifest.pair_count << " pairs from "
            << manifest.instance_count << " instances ("
            << manifest.skipped_failed << " failed skipped, "
            << manifest.dropped_trailing_pairs << " trailing pairs dropped)\n";
  return 0;
}

int run_eval(const CommonOptions &opts, const std::string &run_id, int budget,
             const std::string &metrics_csv, std::string out_dir) {
  Session session = open_session(opts);
  if (out_dir.empty()) {
    out_dir = (session.store.run_dir(run_id) / "eval").string();
  }
  RunEval eval = evaluate_run(session.store, run_id, budget,
                              session.backends.eval_backends());

  // Keep only the requested metrics in the persisted evaluation.
  if (!metrics_csv.empty()) {
    std::map<Metric, ScoreSeries> kept;
    bool keep_safety = false;
    std::stringstream ss(metrics_csv);
    std::string name;
    while (std::getline(ss, name, ',')) {
      if (name.empty()) continue;
      Metric m = parse_metric(name);
      if (m == Metric::Safety) {
        keep_safety = true;
        continue;
      }
      auto it = eval.series.find(m);
      if (it == eval.series.end() || it->second.values.empty()) {
        std::cerr << "MissingMetric(" << name << ") for run " << run_id << "\n";
        continue;
      }
      kept[m] = it->second;
    }
    eval.series = std::move(kept);
    if (!keep_safety) eval.safety_labels.clear();
  }

  save_run_eval(eval, out_dir);
  std::cout << "evaluated run " << run_id << " -> " << out_dir << "\n";
  return 0;
}

int run_report(const std::vector<std::string> &eval_dirs,
               const std::string &metrics_csv, const std::string &out_dir) {
  std::vector<RunEval> runs;
  runs.reserve(eval_dirs.size());
  for (const std::string &dir : eval_dirs) {
    runs.push_back(load_run_eval(dir));
  }
  std::vector<Metric> metrics;
  std::stringstream ss(metrics_csv);
  std::string name;
  while (std::getline(ss, name, ',')) {
    if (!name.empty()) metrics.push_back(parse_metric(name));
  }
  MetricReport report = build_report(runs, metrics, out_dir);
  for (const std::string &note : report.notes) {
    std::cerr << note << "\n";
  }
  std::cout << "report for " << report.rows.size() << " runs -> " << out_dir
            << "\n";
  return 0;
}

} // namespace

int cli_dispatch(const std::vector<std::string> &args) {
  CLI::App app{"Post-hoc multi-round safety editing pipeline"};
  app.require_subcommand(1);

  // validate
  auto *validate = app.add_subcommand("validate", "Check a dataset records file");
  std::string dataset_path;
  int validate_max_rounds = 4;
  validate->add_option("--dataset", dataset_path, "Instance records file")
      ->required();
  validate->add_option("--max-rounds", validate_max_rounds, "Round ceiling");

  // synthesize
  auto *synthesize =
      app.add_subcommand("synthesize", "Build a multi-round editing dataset");
  CommonOptions synth_opts;
  add_common(synthesize, synth_opts);
  std::string manifest_path, synth_run_id;
  int synth_max_rounds = 4;
  bool synth_resume = false;
  std::uint64_t synth_call_budget = 0;
  synthesize->add_option("--manifest", manifest_path, "Source manifest file")
      ->required();
  synthesize->add_option("--max-rounds", synth_max_rounds, "Round ceiling");
  synthesize->add_option("--run-id", synth_run_id, "Run id (derived if absent)");
  synthesize->add_flag("--resume", synth_resume, "Resume an interrupted run");
  synthesize->add_option("--call-budget", synth_call_budget,
                         "Stop after this many judge calls (0 = unlimited)");

  // edit
  auto *edit = app.add_subcommand("edit", "Run the safety-editing loop");
  CommonOptions edit_opts;
  add_common(edit, edit_opts);
  std::string prompts_path, images_dir, edit_run_id;
  int edit_max_rounds = 4, edit_budget = 3;
  bool edit_resume = false;
  std::uint64_t edit_call_budget = 0;
  edit->add_option("--prompts", prompts_path, "Prompts file (jsonl or csv)")
      ->required();
  edit->add_option("--images", images_dir, "Directory of initial images");
  edit->add_option("--max-rounds", edit_max_rounds, "Round ceiling");
  edit->add_option("--budget", edit_budget, "Classification round budget");
  edit->add_option("--run-id", edit_run_id, "Run id (derived if absent)");
  edit->add_flag("--resume", edit_resume, "Resume an interrupted run");
  edit->add_option("--call-budget", edit_call_budget,
                   "Stop after this many judge calls (0 = unlimited)");

  // export
  auto *export_cmd =
      app.add_subcommand("export", "Export training pairs from a run");
  CommonOptions export_opts;
  std::string export_run_id, export_variant = "standard", export_out;
  bool drop_trailing = false;
  export_cmd->add_option("--store", export_opts.store_dir, "Run store root")
      ->required();
  export_cmd->add_option("--run", export_run_id, "Run id")->required();
  export_cmd->add_option("--variant", export_variant,
                         "standard|prompt_aware|no_thought|round1_trunc|round2_trunc");
  export_cmd->add_option("--out", export_out, "Output corpus file")->required();
  export_cmd->add_flag("--drop-trailing-unsafe", drop_trailing,
                       "Drop the final pair of budget-exhausted instances");

  // eval
  auto *eval_cmd = app.add_subcommand("eval", "Score a recorded run");
  CommonOptions eval_opts;
  add_common(eval_cmd, eval_opts);
  std::string eval_run_id, eval_metrics = "clip,aesthetic,lpips,hp,uia,safety",
                           eval_out;
  int eval_budget = 3;
  eval_cmd->add_option("--run", eval_run_id, "Run id")->required();
  eval_cmd->add_option("--budget", eval_budget, "Classification round budget");
  eval_cmd->add_option("--metrics", eval_metrics, "Comma-separated metrics");
  eval_cmd->add_option("--out", eval_out, "Output directory");

  // report
  auto *report_cmd =
      app.add_subcommand("report", "Aggregate evaluations into report tables");
  std::vector<std::string> report_eval_dirs;
  std::string report_metrics = "clip,aesthetic,lpips,hp,uia,safety", report_out;
  report_cmd->add_option("--eval", report_eval_dirs, "Evaluation directory")
      ->required();
  report_cmd->add_option("--metrics", report_metrics, "Comma-separated metrics");
  report_cmd->add_option("--out", report_out, "Output directory")->required();

  std::vector<const char *> argv;
  argv.push_back("safeedit");
  for (const std::string &arg : args) argv.push_back(arg.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp &e) {
    app.exit(e);
    return 0;
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return 2;
  }

  try {
    if (validate->parsed()) {
      return run_validate(dataset_path, validate_max_rounds);
    }
    if (synthesize->parsed()) {
      return run_synthesize(synth_opts, manifest_path, synth_max_rounds,
                            synth_run_id, synth_resume, synth_call_budget);
    }
    if (edit->parsed()) {
      return run_edit(edit_opts, prompts_path, images_dir, edit_max_rounds,
                      edit_budget, edit_run_id, edit_resume, edit_call_budget);
    }
    if (export_cmd->parsed()) {
      return run_export(export_opts, export_run_id, export_variant, export_out,
                        drop_trailing);
    }
    if (eval_cmd->parsed()) {
      return run_eval(eval_opts, eval_run_id, eval_budget, eval_metrics,
                      eval_out);
    }
    if (report_cmd->parsed()) {
      return run_report(report_eval_dirs, report_metrics, report_out);
    }
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

} // namespace safeedit
