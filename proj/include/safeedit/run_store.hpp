#pragma once
// Persistent run store shared by every pipeline.
//
// Layout under the root:
//   objects/<aa>/<digest>          content-addressed image bytes
//   runs/<run_id>/manifest.json    run manifest (atomic tmp+rename)
//   runs/<run_id>/instances/<id>.jsonl   append-only per-instance log
//   runs/<run_id>/<name>           auxiliary run files (seed images, evals)
//
// A log line is committed once it is fully written and newline-terminated;
// a torn tail from a crash is discarded on reopen, committed lines are
// never rewritten. Writing the same image bytes twice stores one object.

#include "safeedit/types.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace safeedit {

// Filesystem-safe instance id: unsafe characters are replaced and a short
// digest suffix keeps distinct ids distinct.
std::string fs_safe_id(const std::string &id);

class RunStore {
public:
  explicit RunStore(std::filesystem::path root);

  const std::filesystem::path &root() const { return root_; }

  // -- content-addressed images ------------------------------------------
  ImageRef put_image(const std::vector<std::uint8_t> &bytes);
  std::vector<std::uint8_t> get_image(const std::string &digest) const;
  bool has_image(const std::string &digest) const;
  std::size_t object_count() const;

  // -- runs ----------------------------------------------------------------
  bool has_run(const std::string &run_id) const;
  std::filesystem::path run_dir(const std::string &run_id) const;
  void write_manifest(const RunManifest &manifest);
  RunManifest read_manifest(const std::string &run_id) const; // UnknownRunError
  std::vector<std::string> list_runs() const;

  // -- instance logs --------------------------------------------------------
  struct PersistedInstance {
    std::vector<EditRound> rounds;
    std::optional<Terminal> terminal;
    int round_count = 0;
    std::optional<std::string> failure_reason;
    std::optional<std::string> served_image;

    bool complete() const { return terminal.has_value(); }
  };

  class InstanceLog {
  public:
    // Rounds committed so far (tail-repaired on open).
    const PersistedInstance &state() const { return state_; }

    // Appends round state_.rounds.size()+1; any other index is a slot
    // violation and throws StoreError.
    void append_round(const EditRound &round);
    void append_terminal(Terminal terminal, int round_count,
                         const std::optional<std::string> &served_image,
                         const std::optional<std::string> &failure_reason);

  private:
    friend class RunStore;
    InstanceLog(std::filesystem::path path, PersistedInstance state);
    void append_line(const std::string &line);

    std::filesystem::path path_;
    PersistedInstance state_;
    std::ofstream out_;
  };

  InstanceLog open_instance_log(const std::string &run_id,
                                const std::string &instance_id);
  std::optional<PersistedInstance>
  read_instance_log(const std::string &run_id,
                    const std::string &instance_id) const;

  // Raw-response audit trail, appended before any response is parsed so the
  // pipeline state stays reconstructible offline. Keyed by (round, attempt).
  void append_raw_response(const std::string &run_id,
                           const std::string &instance_id, int round_index,
                           int attempt, const std::string &raw);

  // Total committed log records in a run; doubles as the logical clock.
  std::uint64_t committed_record_count(const std::string &run_id) const;

private:
  std::filesystem::path object_path(const std::string &digest) const;
  std::filesystem::path instance_log_path(const std::string &run_id,
                                          const std::string &instance_id) const;
  static PersistedInstance replay_log(const std::filesystem::path &path,
                                      std::uintmax_t *good_bytes);

  std::filesystem::path root_;
};

} // namespace safeedit
