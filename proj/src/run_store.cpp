#include "safeedit/run_store.hpp"

#include "safeedit/errors.hpp"
#include "safeedit/image_io.hpp"
#include "safeedit/sha256.hpp"

#include <json.hpp>

#include <cctype>
#include <span>
#include <system_error>

namespace safeedit {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fs_safe_id(const std::string &id) {
  bool clean = !id.empty() && id.size() <= 120;
  std::string sanitized;
  sanitized.reserve(id.size());
  for (char ch : id) {
    bool ok = std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' ||
              ch == '_' || ch == '.';
    if (!ok) clean = false;
    sanitized.push_back(ok ? ch : '_');
  }
  if (clean) return sanitized;
  if (sanitized.size() > 80) sanitized.resize(80);
  return sanitized + "-" + sha256_hex(id).substr(0, 12);
}

RunStore::RunStore(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_ / "objects");
  fs::create_directories(root_ / "runs");
}

fs::path RunStore::object_path(const std::string &digest) const {
  if (digest.size() < 3) throw StoreError("bad digest: " + digest);
  return root_ / "objects" / digest.substr(0, 2) / digest;
}

ImageRef RunStore::put_image(const std::vector<std::uint8_t> &bytes) {
  ImageRef ref;
  ref.digest = sha256_hex(bytes);
  fs::path path = object_path(ref.digest);
  ref.uri = "objects/" + ref.digest.substr(0, 2) + "/" + ref.digest;
  if (auto size = probe_image_size(std::span<const std::uint8_t>(bytes))) {
    ref.width = size->width;
    ref.height = size->height;
  }
  if (fs::exists(path)) return ref; // dedupe

  fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw StoreError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char *>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw StoreError("short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec && !fs::exists(path)) {
    throw StoreError("rename failed: " + ec.message());
  }
  return ref;
}

std::vector<std::uint8_t> RunStore::get_image(const std::string &digest) const {
  fs::path path = object_path(digest);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StoreError("no stored object for digest " + digest);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

bool RunStore::has_image(const std::string &digest) const {
  return fs::exists(object_path(digest));
}

std::size_t RunStore::object_count() const {
  std::size_t n = 0;
  for (const auto &entry : fs::recursive_directory_iterator(root_ / "objects")) {
    if (entry.is_regular_file() &&
        entry.path().extension() != ".tmp") {
      ++n;
    }
  }
  return n;
}

bool RunStore::has_run(const std::string &run_id) const {
  return fs::exists(run_dir(run_id) / "manifest.json");
}

fs::path RunStore::run_dir(const std::string &run_id) const {
  return root_ / "runs" / fs_safe_id(run_id);
}

void RunStore::write_manifest(const RunManifest &manifest) {
  fs::path dir = run_dir(manifest.run_id);
  fs::create_directories(dir);
  fs::path path = dir / "manifest.json";
  fs::path tmp = dir / "manifest.json.tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw StoreError("cannot write " + tmp.string());
    out << json(manifest).dump(2) << "\n";
    out.flush();
    if (!out) throw StoreError("short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw StoreError("rename failed: " + ec.message());
}

RunManifest RunStore::read_manifest(const std::string &run_id) const {
  fs::path path = run_dir(run_id) / "manifest.json";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UnknownRunError(run_id);
  json j;
  try {
    in >> j;
    return j.get<RunManifest>();
  } catch (const json::exception &e) {
    throw StoreError("manifest for " + run_id + " is unreadable: " + e.what());
  }
}

std::vector<std::string> RunStore::list_runs() const {
  std::vector<std::string> out;
  fs::path runs = root_ / "runs";
  if (!fs::exists(runs)) return out;
  for (const auto &entry : fs::directory_iterator(runs)) {
    if (entry.is_directory() && fs::exists(entry.path() / "manifest.json")) {
      out.push_back(entry.path().filename().string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

fs::path RunStore::instance_log_path(const std::string &run_id,
                                     const std::string &instance_id) const {
  return run_dir(run_id) / "instances" / (fs_safe_id(instance_id) + ".jsonl");
}

RunStore::PersistedInstance
RunStore::replay_log(const fs::path &path, std::uintmax_t *good_bytes) {
  PersistedInstance state;
  if (good_bytes) *good_bytes = 0;
  std::ifstream in(path, std::ios::binary);
  if (!in) return state;

  std::string content((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  while (pos < content.size()) {
    std::size_t nl = content.find('\n', pos);
    if (nl == std::string::npos) break; // torn tail, uncommitted
    std::string line = content.substr(pos, nl - pos);
    json j;
    try {
      j = json::parse(line);
      std::string type = j.at("type").get<std::string>();
      if (type == "round") {
        if (state.terminal) break; // nothing may follow a terminal record
        EditRound round = j.at("round").get<EditRound>();
        if (round.index != static_cast<int>(state.rounds.size()) + 1) break;
        state.rounds.push_back(std::move(round));
      } else if (type == "terminal") {
        if (state.terminal) break;
        state.terminal = parse_terminal(j.at("terminal").get<std::string>());
        state.round_count = j.at("round_count").get<int>();
        if (j.contains("served_image")) {
          state.served_image = j.at("served_image").get<std::string>();
        }
        if (j.contains("failure_reason")) {
          state.failure_reason = j.at("failure_reason").get<std::string>();
        }
      } else {
        break;
      }
    } catch (const std::exception &) {
      break; // unparseable line: treat as uncommitted
    }
    pos = nl + 1;
    if (good_bytes) *good_bytes = pos;
  }
  return state;
}

RunStore::InstanceLog::InstanceLog(fs::path path, PersistedInstance state)
    : path_(std::move(path)), state_(std::move(state)) {
  out_.open(path_, std::ios::binary | std::ios::app);
  if (!out_) throw StoreError("cannot open log " + path_.string());
}

void RunStore::InstanceLog::append_line(const std::string &line) {
  out_ << line << "\n";
  out_.flush();
  if (!out_) throw StoreError("failed appending to " + path_.string());
}

void RunStore::InstanceLog::append_round(const EditRound &round) {
  if (state_.terminal) {
    throw StoreError("instance log already has a terminal record");
  }
  if (round.index != static_cast<int>(state_.rounds.size()) + 1) {
    throw StoreError("round slot " + std::to_string(round.index) +
                     " is not the next uncommitted slot");
  }
  append_line(json{{"type", "round"}, {"round", round}}.dump());
  state_.rounds.push_back(round);
}

void RunStore::InstanceLog::append_terminal(
    Terminal terminal, int round_count,
    const std::optional<std::string> &served_image,
    const std::optional<std::string> &failure_reason) {
  if (state_.terminal) {
    throw StoreError("instance log already has a terminal record");
  }
  json j{{"type", "terminal"},
         {"terminal", to_string(terminal)},
         {"round_count", round_count}};
  if (served_image) j["served_image"] = *served_image;
  if (failure_reason) j["failure_reason"] = *failure_reason;
  append_line(j.dump());
  state_.terminal = terminal;
  state_.round_count = round_count;
  state_.served_image = served_image;
  state_.failure_reason = failure_reason;
}

RunStore::InstanceLog
RunStore::open_instance_log(const std::string &run_id,
                            const std::string &instance_id) {
  fs::path path = instance_log_path(run_id, instance_id);
  fs::create_directories(path.parent_path());
  std::uintmax_t good_bytes = 0;
  PersistedInstance state = replay_log(path, &good_bytes);
  if (fs::exists(path) && fs::file_size(path) != good_bytes) {
    // Discard the torn tail; committed records stay untouched.
    fs::resize_file(path, good_bytes);
  }
  return InstanceLog(path, std::move(state));
}

std::optional<RunStore::PersistedInstance>
RunStore::read_instance_log(const std::string &run_id,
                            const std::string &instance_id) const {
  fs::path path = instance_log_path(run_id, instance_id);
  if (!fs::exists(path)) return std::nullopt;
  return replay_log(path, nullptr);
}

void RunStore::append_raw_response(const std::string &run_id,
                                   const std::string &instance_id,
                                   int round_index, int attempt,
                                   const std::string &raw) {
  fs::path path = run_dir(run_id) / "instances" /
                  (fs_safe_id(instance_id) + ".raw.jsonl");
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw StoreError("cannot open raw log " + path.string());
  out << json{{"round", round_index}, {"attempt", attempt}, {"raw", raw}}.dump()
      << "\n";
  out.flush();
}

std::uint64_t RunStore::committed_record_count(const std::string &run_id) const {
  fs::path dir = run_dir(run_id) / "instances";
  if (!fs::exists(dir)) return 0;
  std::uint64_t total = 0;
  for (const auto &entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (entry.path().string().ends_with(".raw.jsonl")) continue;
    PersistedInstance st = replay_log(entry.path(), nullptr);
    total += st.rounds.size() + (st.terminal ? 1 : 0);
  }
  return total;
}

} // namespace safeedit
