#include "timaudit/util.hpp"

#include <openssl/evp.h>

#include <cctype>
#include <fstream>
#include <sstream>

#include "timaudit/errors.hpp"

namespace timaudit {

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (ctx == nullptr ||
        EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
        EVP_MD_CTX_free(ctx);
        raise(errc::io_failure, "SHA-256 digest failed");
    }
    EVP_MD_CTX_free(ctx);
    static const char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

std::uint64_t DetRng::bounded(std::uint64_t bound) {
    if (bound == 0) raise(errc::precondition, "bounded(0)");
    // Rejection sampling over the top of the range keeps the draw unbiased
    // without implementation-defined division tricks.
    std::uint64_t threshold = (~bound + 1) % bound;  // 2^64 mod bound
    for (;;) {
        std::uint64_t r = next();
        if (r >= threshold) return r % bound;
    }
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return out;
}

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

bool starts_with_icase(std::string_view text, std::string_view prefix) {
    if (text.size() < prefix.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(text[i])) !=
            std::tolower(static_cast<unsigned char>(prefix[i]))) {
            return false;
        }
    }
    return true;
}

std::string normalize_phrase(std::string_view s) {
    std::string t = trim(s);
    while (!t.empty()) {
        char c = t.back();
        if (c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?' ||
            std::isspace(static_cast<unsigned char>(c))) {
            t.pop_back();
        } else {
            break;
        }
    }
    return to_lower(t);
}

std::vector<std::string> split_lines(std::string_view text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t nl = text.find('\n', start);
        if (nl == std::string_view::npos) {
            lines.emplace_back(text.substr(start));
            break;
        }
        lines.emplace_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    return lines;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(errc::io_failure, "cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) raise(errc::io_failure, "read failed: " + path.string());
    return buf.str();
}

void write_file_atomic(const fs::path& path, std::string_view content) {
    fs::path dir = path.parent_path();
    if (!dir.empty()) fs::create_directories(dir);
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) raise(errc::io_failure, "cannot create " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) raise(errc::io_failure, "write failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        raise(errc::io_failure,
              "rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
    }
}

std::vector<json> read_jsonl(const fs::path& path) {
    std::string content = read_file(path);
    std::vector<json> records;
    std::size_t lineno = 0;
    std::size_t start = 0;
    while (start < content.size()) {
        std::size_t nl = content.find('\n', start);
        std::string_view line(content.data() + start,
                              (nl == std::string::npos ? content.size() : nl) - start);
        ++lineno;
        start = (nl == std::string::npos) ? content.size() : nl + 1;
        std::string trimmed = trim(line);
        if (trimmed.empty()) continue;
        json rec = json::parse(trimmed, nullptr, false);
        if (rec.is_discarded()) {
            raise(errc::malformed_record,
                  path.string() + ":" + std::to_string(lineno) + ": invalid JSON");
        }
        records.push_back(std::move(rec));
    }
    return records;
}

void write_jsonl(const fs::path& path, const std::vector<json>& records) {
    std::string out;
    for (const json& rec : records) {
        out += rec.dump();
        out += '\n';
    }
    write_file_atomic(path, out);
}

std::string sha256_file(const fs::path& path) {
    return sha256_hex(read_file(path));
}

}  // namespace timaudit
