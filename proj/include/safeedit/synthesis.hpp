#pragma once
// Dataset construction: prompt ingestion with source-label remapping,
// seed-image generation, multi-round automatic annotation, and corpus
// statistics.
//
// Source files are consumed through per-source column mappings (CSV or
// JSONL), since the upstream datasets all use different layouts.

#include "safeedit/backends.hpp"
#include "safeedit/edit_loop.hpp"
#include "safeedit/run_store.hpp"
#include "safeedit/types.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace safeedit {

struct SourceSpec {
  PromptSource source = PromptSource::User;
  std::filesystem::path path;
  std::string format;      // "csv" or "jsonl"; inferred from extension if empty
  std::string text_field;  // column/key holding the prompt text
  std::string label_field; // column/key holding the category label; may be ""
  std::size_t count_cap = 0; // 0 = take everything
};

struct SourceManifest {
  std::vector<SourceSpec> entries;
  CategoryRemap remap = default_source_remap();
};

SourceManifest load_source_manifest(const std::filesystem::path &path);

struct IngestIssue {
  PromptSource source = PromptSource::User;
  std::size_t row = 0; // 1-based data row
  std::string reason;
};

struct SourceCounters {
  std::size_t rows_in = 0;
  std::size_t records_out = 0;
  std::size_t dropped_duplicates = 0;
  std::size_t failed = 0;
};

struct IngestReport {
  std::vector<PromptRecord> records;
  std::vector<IngestIssue> issues;
  std::map<PromptSource, SourceCounters> per_source;

  std::size_t rows_in() const;
  std::size_t dropped_duplicates() const;
};

// Reads every source; HPDv2 records are forced safe, labels go through the
// manifest remap, duplicate texts within a source are dropped with a
// warning, and unknown labels surface per-record without aborting.
IngestReport ingest_prompts(const SourceManifest &manifest);

// Loads a simple prompts file for the edit pipeline: JSONL objects with
// id/text/category (id autogenerated, category defaults to safe) or a CSV
// with those column names.
std::vector<PromptRecord> load_prompt_records(const std::filesystem::path &path);

struct SeedImageResult {
  std::vector<std::pair<PromptRecord, ImageRef>> pairs;
  std::size_t generated = 0;
  std::size_t reused = 0; // records already present in the seed index
  std::vector<IngestIssue> failures;
};

// One image per record, persisted content-addressed and tracked in
// runs/<run_id>/seed_images.jsonl so interrupted passes resume without
// regenerating completed records.
SeedImageResult generate_seed_images(const std::vector<PromptRecord> &records,
                                     GeneratorBackend &gen,
                                     std::uint64_t seed, RunStore &store,
                                     const std::string &run_id);

// Identical loop semantics to EditLoop::run with the synthesis template
// set: unsafe categories use the rule-scoped template, safe prompts get the
// binary accept/reject template whose reject re-enters with the unchanged
// prompt and a fresh generation seed.
EditInstance synthesize_instance(const std::pair<PromptRecord, ImageRef> &pair,
                                 JudgeBackend &judge, GeneratorBackend &gen,
                                 const PolicySet &policies, RunStore &store,
                                 const std::string &run_id, int max_rounds = 4);

struct RoundHistogram {
  std::map<int, std::size_t> counts;
  std::size_t total = 0;

  void add(int round_count);
  bool operator==(const RoundHistogram &) const = default;
};

struct DatasetStats {
  RoundHistogram all;         // every instance given
  RoundHistogram unsafe_only; // instances with an unsafe prompt category
  std::map<Category, std::size_t> per_category;
  std::size_t safe_total = 0;
  std::size_t safe_accept_immediate = 0; // safe prompts accepted at round 1
};

DatasetStats dataset_stats(const std::vector<EditInstance> &instances);

nlohmann::json to_json_report(const DatasetStats &stats);

} // namespace safeedit
