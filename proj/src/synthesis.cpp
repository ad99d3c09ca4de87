#include "safeedit/synthesis.hpp"

#include "safeedit/errors.hpp"
#include "safeedit/sha256.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace safeedit {

namespace fs = std::filesystem;
using nlohmann::json;

SourceManifest load_source_manifest(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UnreadableSourceError(path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception &e) {
    throw Error("malformed source manifest: " + std::string(e.what()));
  }

  SourceManifest manifest;
  for (const auto &entry : j.at("entries")) {
    SourceSpec spec;
    spec.source = parse_prompt_source(entry.at("source").get<std::string>());
    fs::path p = entry.at("path").get<std::string>();
    // Relative source paths resolve against the manifest's directory.
    spec.path = p.is_absolute() ? p : path.parent_path() / p;
    if (entry.contains("format")) spec.format = entry.at("format").get<std::string>();
    spec.text_field = entry.at("text_field").get<std::string>();
    if (entry.contains("label_field")) {
      spec.label_field = entry.at("label_field").get<std::string>();
    }
    if (entry.contains("count_cap")) {
      spec.count_cap = entry.at("count_cap").get<std::size_t>();
    }
    manifest.entries.push_back(std::move(spec));
  }
  if (j.contains("remap")) {
    manifest.remap = default_source_remap();
    for (const auto &[label, category] : j.at("remap").items()) {
      manifest.remap[normalize_label(label)] =
          parse_category(category.get<std::string>());
    }
  }
  return manifest;
}

namespace {

// Minimal CSV with quoted-field support; returns rows of cells.
std::vector<std::vector<std::string>> parse_csv(const std::string &content) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string cell;
  bool quoted = false;
  std::size_t i = 0;
  auto end_cell = [&] {
    row.push_back(cell);
    cell.clear();
  };
  auto end_row = [&] {
    end_cell();
    rows.push_back(row);
    row.clear();
  };
  while (i < content.size()) {
    char c = content[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      end_cell();
    } else if (c == '\n') {
      if (!cell.empty() || !row.empty()) end_row();
    } else if (c != '\r') {
      cell.push_back(c);
    }
    ++i;
  }
  if (!cell.empty() || !row.empty()) end_row();
  return rows;
}

std::string source_id_prefix(PromptSource s) {
  switch (s) {
  case PromptSource::T2ISafety:
    return "t2i";
  case PromptSource::P4D:
    return "p4d";
  case PromptSource::CoPro:
    return "copro";
  case PromptSource::HPDv2:
    return "hpd";
  case PromptSource::User:
    return "user";
  }
  return "user";
}

struct RawRow {
  std::string text;
  std::string label;
  bool ok = true;
  std::string error;
};

std::vector<RawRow> read_source_rows(const SourceSpec &spec) {
  std::ifstream in(spec.path, std::ios::binary);
  if (!in) throw UnreadableSourceError(spec.path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string content = buf.str();

  std::string format = spec.format;
  if (format.empty()) {
    std::string ext = spec.path.extension().string();
    format = ext == ".csv" ? "csv" : "jsonl";
  }

  std::vector<RawRow> rows;
  if (format == "csv") {
    auto cells = parse_csv(content);
    if (cells.empty()) return rows;
    const auto &header = cells.front();
    auto column_of = [&](const std::string &name) -> int {
      for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == name) return static_cast<int>(c);
      }
      return -1;
    };
    int text_col = column_of(spec.text_field);
    int label_col = spec.label_field.empty() ? -1 : column_of(spec.label_field);
    if (text_col < 0) {
      throw UnreadableSourceError(spec.path.string() + ": no column \"" +
                                  spec.text_field + "\"");
    }
    for (std::size_t r = 1; r < cells.size(); ++r) {
      RawRow row;
      const auto &line = cells[r];
      if (text_col >= static_cast<int>(line.size())) {
        row.ok = false;
        row.error = "short row";
      } else {
        row.text = line[static_cast<std::size_t>(text_col)];
        if (label_col >= 0 && label_col < static_cast<int>(line.size())) {
          row.label = line[static_cast<std::size_t>(label_col)];
        }
      }
      rows.push_back(std::move(row));
    }
  } else if (format == "jsonl") {
    std::istringstream lines(content);
    std::string line;
    while (std::getline(lines, line)) {
      if (line.empty()) continue;
      RawRow row;
      try {
        json j = json::parse(line);
        row.text = j.at(spec.text_field).get<std::string>();
        if (!spec.label_field.empty() && j.contains(spec.label_field)) {
          row.label = j.at(spec.label_field).get<std::string>();
        }
      } catch (const json::exception &e) {
        row.ok = false;
        row.error = e.what();
      }
      rows.push_back(std::move(row));
    }
  } else {
    throw UnreadableSourceError(spec.path.string() + ": unknown format " +
                                format);
  }
  return rows;
}

} // namespace

std::size_t IngestReport::rows_in() const {
  std::size_t n = 0;
  for (const auto &[s, c] : per_source) n += c.rows_in;
  return n;
}

std::size_t IngestReport::dropped_duplicates() const {
  std::size_t n = 0;
  for (const auto &[s, c] : per_source) n += c.dropped_duplicates;
  return n;
}

IngestReport ingest_prompts(const SourceManifest &manifest) {
  IngestReport report;
  for (const SourceSpec &spec : manifest.entries) {
    SourceCounters &counters = report.per_source[spec.source];
    std::vector<RawRow> rows = read_source_rows(spec);
    std::set<std::string> seen_texts;
    std::size_t taken = 0;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (spec.count_cap > 0 && taken >= spec.count_cap) break;
      ++counters.rows_in;
      const RawRow &row = rows[r];
      std::size_t data_row = r + 1;
      if (!row.ok) {
        ++counters.failed;
        report.issues.push_back({spec.source, data_row, row.error});
        continue;
      }
      if (row.text.empty()) {
        ++counters.failed;
        report.issues.push_back({spec.source, data_row, "empty prompt text"});
        continue;
      }
      if (!seen_texts.insert(row.text).second) {
        ++counters.dropped_duplicates;
        report.issues.push_back(
            {spec.source, data_row, "duplicate prompt text (dropped)"});
        continue;
      }

      PromptRecord record;
      record.source = spec.source;
      record.text = row.text;
      char idbuf[16];
      std::snprintf(idbuf, sizeof(idbuf), "%06zu", data_row);
      record.id = source_id_prefix(spec.source) + "-" + idbuf;
      if (spec.source == PromptSource::HPDv2) {
        record.category = Category::Safe;
        if (!row.label.empty()) record.original_label = row.label;
      } else if (spec.label_field.empty()) {
        record.category = Category::Safe;
      } else {
        record.original_label = row.label;
        try {
          record.category = parse_category(row.label, manifest.remap);
        } catch (const UnknownCategoryError &e) {
          ++counters.failed;
          report.issues.push_back({spec.source, data_row, e.what()});
          continue;
        }
      }
      ++counters.records_out;
      ++taken;
      report.records.push_back(std::move(record));
    }
  }
  return report;
}

std::vector<PromptRecord> load_prompt_records(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UnreadableSourceError(path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string content = buf.str();

  std::vector<PromptRecord> records;
  auto finish_record = [&](PromptRecord record, std::size_t row) {
    if (record.id.empty()) {
      char idbuf[16];
      std::snprintf(idbuf, sizeof(idbuf), "%06zu", row);
      record.id = "p-" + std::string(idbuf);
    }
    records.push_back(std::move(record));
  };

  if (path.extension() == ".csv") {
    auto cells = parse_csv(content);
    if (cells.empty()) return records;
    const auto &header = cells.front();
    auto column_of = [&](const std::string &name) -> int {
      for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == name) return static_cast<int>(c);
      }
      return -1;
    };
    int id_col = column_of("id"), text_col = column_of("text"),
        cat_col = column_of("category");
    if (text_col < 0) {
      throw UnreadableSourceError(path.string() + ": no \"text\" column");
    }
    for (std::size_t r = 1; r < cells.size(); ++r) {
      const auto &line = cells[r];
      auto cell = [&](int c) -> std::string {
        return c >= 0 && c < static_cast<int>(line.size())
                   ? line[static_cast<std::size_t>(c)]
                   : std::string{};
      };
      PromptRecord record;
      record.id = cell(id_col);
      record.text = cell(text_col);
      std::string cat = cell(cat_col);
      record.category = cat.empty() ? Category::Safe : parse_category(cat);
      finish_record(std::move(record), r);
    }
  } else {
    std::istringstream lines(content);
    std::string line;
    std::size_t row = 0;
    while (std::getline(lines, line)) {
      if (line.empty()) continue;
      ++row;
      json j = json::parse(line);
      PromptRecord record;
      record.id = j.value("id", std::string{});
      record.text = j.at("text").get<std::string>();
      if (j.contains("category")) {
        record.category = parse_category(j.at("category").get<std::string>());
      }
      if (j.contains("source")) {
        record.source = parse_prompt_source(j.at("source").get<std::string>());
      }
      finish_record(std::move(record), row);
    }
  }
  return records;
}

// -- seed images -------------------------------------------------------------

SeedImageResult generate_seed_images(const std::vector<PromptRecord> &records,
                                     GeneratorBackend &gen, std::uint64_t seed,
                                     RunStore &store,
                                     const std::string &run_id) {
  fs::path dir = store.run_dir(run_id);
  fs::create_directories(dir);
  fs::path index_path = dir / "seed_images.jsonl";

  std::map<std::string, ImageRef> done;
  if (fs::exists(index_path)) {
    std::ifstream in(index_path, std::ios::binary);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        json j = json::parse(line);
        done[j.at("record_id").get<std::string>()] =
            j.at("image").get<ImageRef>();
      } catch (const json::exception &) {
        break; // torn tail; everything after is regenerated
      }
    }
  }

  SeedImageResult result;
  std::ofstream out(index_path, std::ios::binary | std::ios::app);
  for (const PromptRecord &record : records) {
    auto it = done.find(record.id);
    if (it != done.end()) {
      ++result.reused;
      result.pairs.emplace_back(record, it->second);
      continue;
    }
    std::uint64_t record_seed = round_generation_seed(seed, record.id, 0);
    try {
      ImageRef ref = store.put_image(gen.generate(record.text, record_seed));
      out << json{{"record_id", record.id}, {"image", ref}}.dump() << "\n";
      out.flush();
      ++result.generated;
      result.pairs.emplace_back(record, std::move(ref));
    } catch (const Error &e) {
      result.failures.push_back({record.source, 0, record.id + ": " + e.what()});
    }
  }
  return result;
}

EditInstance synthesize_instance(const std::pair<PromptRecord, ImageRef> &pair,
                                 JudgeBackend &judge, GeneratorBackend &gen,
                                 const PolicySet &policies, RunStore &store,
                                 const std::string &run_id, int max_rounds) {
  LoopConfig cfg;
  cfg.max_rounds = max_rounds;
  cfg.classification_round_budget = std::min(3, max_rounds);
  EditLoop loop(cfg, judge, gen, policies, store, run_id);
  return loop.run(pair.first, pair.second).instance;
}

// -- statistics ---------------------------------------------------------------

void RoundHistogram::add(int round_count) {
  ++counts[round_count];
  ++total;
}

DatasetStats dataset_stats(const std::vector<EditInstance> &instances) {
  DatasetStats stats;
  for (const EditInstance &inst : instances) {
    stats.all.add(inst.round_count);
    ++stats.per_category[inst.prompt.category];
    if (inst.prompt.category == Category::Safe) {
      ++stats.safe_total;
      if (inst.round_count == 1 && inst.terminal == Terminal::Accepted) {
        ++stats.safe_accept_immediate;
      }
    } else {
      stats.unsafe_only.add(inst.round_count);
    }
  }
  return stats;
}

json to_json_report(const DatasetStats &stats) {
  auto hist = [](const RoundHistogram &h) {
    json counts = json::object();
    for (const auto &[rounds, n] : h.counts) {
      counts[std::to_string(rounds)] = n;
    }
    return json{{"counts", counts}, {"total", h.total}};
  };
  json per_category = json::object();
  for (const auto &[category, n] : stats.per_category) {
    per_category[std::string(to_string(category))] = n;
  }
  return json{{"all", hist(stats.all)},
              {"unsafe_only", hist(stats.unsafe_only)},
              {"per_category", per_category},
              {"safe_total", stats.safe_total},
              {"safe_accept_immediate", stats.safe_accept_immediate}};
}

} // namespace safeedit
