#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace timaudit {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// ---- hashing -------------------------------------------------------------

// Hex-encoded SHA-256 of arbitrary bytes.  Used for cache keys and artifact
// digests, so the output must be identical across platforms.
std::string sha256_hex(std::string_view bytes);

// FNV-1a 64-bit, for cheap deterministic seeding (not collision resistant).
constexpr std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// ---- deterministic randomness ---------------------------------------------

// splitmix64: tiny, fully specified generator.  std::shuffle and
// uniform_int_distribution are implementation-defined, so everything that
// must replay byte-identically across platforms goes through this.
class DetRng {
  public:
    explicit DetRng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Unbiased value in [0, bound) via rejection sampling.
    std::uint64_t bounded(std::uint64_t bound);

    bool coin() { return next() & 1ull; }

  private:
    std::uint64_t state_;
};

// In-place Fisher-Yates with DetRng; deterministic for a given seed.
template <typename T>
void det_shuffle(std::vector<T>& items, DetRng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.bounded(i));
        std::swap(items[i - 1], items[j]);
    }
}

// ---- strings ---------------------------------------------------------------

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);
bool starts_with_icase(std::string_view text, std::string_view prefix);

// Lowercase and strip terminal punctuation (.,;:!?) plus surrounding
// whitespace; the normalization applied before phrase similarity.
std::string normalize_phrase(std::string_view s);

std::vector<std::string> split_lines(std::string_view text);

// ---- files -----------------------------------------------------------------

std::string read_file(const fs::path& path);

// Write via temp file + rename so readers never observe partial content.
void write_file_atomic(const fs::path& path, std::string_view content);

// One JSON document per line.  Parse errors carry the 1-based line number.
std::vector<json> read_jsonl(const fs::path& path);
void write_jsonl(const fs::path& path, const std::vector<json>& records);

std::string sha256_file(const fs::path& path);

}  // namespace timaudit
