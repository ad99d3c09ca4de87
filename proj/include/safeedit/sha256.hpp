#pragma once
// Streaming SHA-256 used for content addressing and deterministic mocks.

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace safeedit {

class Sha256 {
public:
  Sha256() { reset(); }

  void reset();
  void update(const void *data, std::size_t len);
  void update(std::string_view s) { update(s.data(), s.size()); }
  void update(const std::vector<std::uint8_t> &v) { update(v.data(), v.size()); }

  // Finalizes and returns the 32-byte digest. The object must be reset()
  // before reuse.
  std::array<std::uint8_t, 32> finish();

  std::string finish_hex();

private:
  void process_block(const std::uint8_t *block);

  std::array<std::uint32_t, 8> state_{};
  std::array<std::uint8_t, 64> buffer_{};
  std::uint64_t total_len_ = 0;
  std::size_t buffer_len_ = 0;
};

std::string sha256_hex(std::string_view data);
std::string sha256_hex(const std::vector<std::uint8_t> &data);

// First 8 bytes of SHA-256(data) as an integer. Deterministic across
// platforms; used to derive mock behavior and per-round seeds.
std::uint64_t sha256_prefix64(std::string_view data);

} // namespace safeedit
