#include "timaudit/code_analysis.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <unordered_map>

#include "timaudit/errors.hpp"

namespace timaudit::code_analysis {

// ---- complexity profile --------------------------------------------------------

double ComplexityProfile::mean_loc() const {
    if (loc_per_block.empty()) return 0.0;
    double s = 0;
    for (int v : loc_per_block) s += v;
    return s / static_cast<double>(loc_per_block.size());
}

double ComplexityProfile::mean_cc() const {
    if (cc_per_block.empty()) return 0.0;
    double s = 0;
    for (int v : cc_per_block) s += v;
    return s / static_cast<double>(cc_per_block.size());
}

json ComplexityProfile::to_json() const {
    return json{{"schema_version", corpus::kSchemaVersion},
                {"problem_id", problem_id},
                {"model_id", model_id},
                {"variant", corpus::to_string(variant)},
                {"tool_calls", tool_calls},
                {"loc_per_block", loc_per_block},
                {"cc_per_block", cc_per_block}};
}

ComplexityProfile ComplexityProfile::from_json(const json& j) {
    ComplexityProfile p;
    p.problem_id = j.at("problem_id").get<std::string>();
    p.model_id = j.at("model_id").get<std::string>();
    p.variant = corpus::variant_from_string(j.at("variant").get<std::string>());
    p.tool_calls = j.at("tool_calls").get<int>();
    p.loc_per_block = j.at("loc_per_block").get<std::vector<int>>();
    p.cc_per_block = j.at("cc_per_block").get<std::vector<int>>();
    return p;
}

int count_tool_calls(const corpus::Transcript& t) {
    return corpus::count_code_segments(t);
}

int lines_of_code(const std::string& code) {
    int n = 0;
    for (const std::string& line : split_lines(code)) {
        if (!trim(line).empty()) ++n;
    }
    return n;
}

// ---- cyclomatic complexity lexer -------------------------------------------------

namespace {

bool ident_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}
bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

bool is_string_prefix(std::string_view s) {
    if (s.empty() || s.size() > 2) return false;
    for (char c : s) {
        char l = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        if (l != 'r' && l != 'b' && l != 'f' && l != 'u') return false;
    }
    return true;
}

// Consumes a string literal starting at the opening quote; returns the index
// one past the closing quote.  Backslash escapes the next character even in
// raw literals (that is how termination scanning works in the language).
std::size_t consume_string(const std::string& s, std::size_t i) {
    char quote = s[i];
    bool triple = i + 2 < s.size() && s[i + 1] == quote && s[i + 2] == quote;
    std::size_t pos = i + (triple ? 3 : 1);
    while (pos < s.size()) {
        char c = s[pos];
        if (c == '\\') {
            pos += 2;
            continue;
        }
        if (triple) {
            if (c == quote && pos + 2 < s.size() && s[pos + 1] == quote &&
                s[pos + 2] == quote) {
                return pos + 3;
            }
            ++pos;
        } else {
            if (c == quote) return pos + 1;
            if (c == '\n') break;  // unterminated single-line literal
            ++pos;
        }
    }
    raise(errc::lex_failure, "unterminated string literal");
}

}  // namespace

int cyclomatic_complexity(const std::string& code) {
    int decisions = 0;
    bool at_line_start = true;  // only whitespace seen since the last newline
    std::size_t i = 0;
    const std::size_t n = code.size();
    while (i < n) {
        char c = code[i];
        if (c == '\n') {
            at_line_start = true;
            ++i;
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        if (c == '#') {
            while (i < n && code[i] != '\n') ++i;
            continue;
        }
        if (c == '\'' || c == '"') {
            i = consume_string(code, i);
            at_line_start = false;
            continue;
        }
        if (ident_start(c)) {
            std::size_t start = i;
            while (i < n && ident_char(code[i])) ++i;
            std::string_view word(code.data() + start, i - start);
            // a short prefix glued to a quote is a string prefix, not a name
            if (i < n && (code[i] == '\'' || code[i] == '"') && is_string_prefix(word)) {
                i = consume_string(code, i);
                at_line_start = false;
                continue;
            }
            if (word == "if" || word == "elif" || word == "for" || word == "while" ||
                word == "except" || word == "and" || word == "or" || word == "assert") {
                ++decisions;
            } else if (word == "case" && at_line_start) {
                ++decisions;
            }
            at_line_start = false;
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            // numbers may embed letters (hex, exponents); never identifiers
            while (i < n && (ident_char(code[i]) || code[i] == '.')) ++i;
            at_line_start = false;
            continue;
        }
        at_line_start = false;
        ++i;
    }
    return 1 + decisions;
}

ComplexityProfile profile_transcript(const corpus::Transcript& t) {
    ComplexityProfile p;
    p.problem_id = t.problem_id;
    p.model_id = t.model_id;
    p.variant = t.variant;
    p.tool_calls = count_tool_calls(t);
    for (const corpus::Segment& s : t.segments) {
        if (s.kind != corpus::SegmentKind::Code) continue;
        p.loc_per_block.push_back(lines_of_code(s.body));
        p.cc_per_block.push_back(cyclomatic_complexity(s.body));
    }
    return p;
}

// ---- Ratcliff/Obershelp matcher ----------------------------------------------------

namespace {

// Port of the difflib longest-match recursion (autojunk off).  Ties resolve
// to the earliest position in a, then earliest in b, which the strict `>`
// comparison guarantees given ascending scan order.
class SeqMatcher {
  public:
    SeqMatcher(std::string_view a, std::string_view b) : a_(a), b_(b) {
        for (std::size_t j = 0; j < b_.size(); ++j) {
            b2j_[static_cast<unsigned char>(b_[j])].push_back(j);
        }
    }

    std::size_t total_matched() {
        std::size_t m = 0;
        std::vector<std::array<std::size_t, 4>> queue;
        queue.push_back({0, a_.size(), 0, b_.size()});
        while (!queue.empty()) {
            auto [alo, ahi, blo, bhi] = queue.back();
            queue.pop_back();
            auto [bi, bj, size] = find_longest(alo, ahi, blo, bhi);
            if (size == 0) continue;
            m += size;
            if (alo < bi && blo < bj) queue.push_back({alo, bi, blo, bj});
            if (bi + size < ahi && bj + size < bhi) {
                queue.push_back({bi + size, ahi, bj + size, bhi});
            }
        }
        return m;
    }

  private:
    std::tuple<std::size_t, std::size_t, std::size_t> find_longest(std::size_t alo,
                                                                   std::size_t ahi,
                                                                   std::size_t blo,
                                                                   std::size_t bhi) {
        std::size_t besti = alo, bestj = blo, bestsize = 0;
        std::unordered_map<std::size_t, std::size_t> j2len;
        std::unordered_map<std::size_t, std::size_t> newj2len;
        for (std::size_t i = alo; i < ahi; ++i) {
            newj2len.clear();
            const auto& positions = b2j_[static_cast<unsigned char>(a_[i])];
            for (std::size_t j : positions) {
                if (j < blo) continue;
                if (j >= bhi) break;
                std::size_t k = 1;
                if (j > 0) {
                    auto it = j2len.find(j - 1);
                    if (it != j2len.end()) k = it->second + 1;
                }
                newj2len[j] = k;
                if (k > bestsize) {
                    besti = i - k + 1;
                    bestj = j - k + 1;
                    bestsize = k;
                }
            }
            j2len.swap(newj2len);
        }
        return {besti, bestj, bestsize};
    }

    std::string_view a_;
    std::string_view b_;
    std::array<std::vector<std::size_t>, 256> b2j_;
};

}  // namespace

double similarity(std::string_view a, std::string_view b) {
    std::size_t total = a.size() + b.size();
    if (total == 0) return 1.0;
    SeqMatcher sm(a, b);
    return 2.0 * static_cast<double>(sm.total_matched()) / static_cast<double>(total);
}

// ---- clustering -----------------------------------------------------------------

std::vector<PhraseCluster> cluster_phrases(const std::vector<std::string>& phrases,
                                           double threshold) {
    std::vector<PhraseCluster> clusters;
    for (const std::string& raw : phrases) {
        std::string norm = normalize_phrase(raw);
        bool placed = false;
        for (PhraseCluster& c : clusters) {
            if (similarity(norm, c.representative) >= threshold) {
                c.members.push_back(raw);
                placed = true;
                break;
            }
        }
        if (!placed) {
            clusters.push_back(PhraseCluster{norm, {raw}});
        }
    }
    return clusters;
}

// ---- lexicon ---------------------------------------------------------------------

PrecursorLexicon PrecursorLexicon::parse(const std::string& text) {
    PrecursorLexicon lex;
    int lineno = 0;
    for (const std::string& line : split_lines(text)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::size_t tab = line.find('\t');
        if (tab == std::string::npos) {
            raise(errc::malformed_record,
                  "lexicon line " + std::to_string(lineno) + " has no tab separator");
        }
        LexiconEntry e;
        e.category = trim(line.substr(0, tab));
        e.phrase = trim(line.substr(tab + 1));
        if (e.category.empty() || e.phrase.empty()) {
            raise(errc::malformed_record,
                  "lexicon line " + std::to_string(lineno) + " is incomplete");
        }
        lex.entries.push_back(std::move(e));
    }
    return lex;
}

PrecursorLexicon PrecursorLexicon::load(const fs::path& path) {
    return parse(read_file(path));
}

void PrecursorLexicon::save(const fs::path& path) const {
    std::string out;
    for (const LexiconEntry& e : entries) {
        out += e.category;
        out += '\t';
        out += e.phrase;
        out += '\n';
    }
    write_file_atomic(path, out);
}

PrecursorLexicon default_lexicon() {
    PrecursorLexicon lex;
    auto add = [&](const char* cat, const char* phrase) {
        lex.entries.push_back(LexiconEntry{cat, phrase});
    };
    add("numerical_checking", "one checks numerically");
    add("numerical_checking", "let's verify numerically");
    add("numerical_checking", "numerical optimization");
    add("numerical_checking", "numerical computation");
    add("numerical_checking", "numerical evaluation");
    add("numerical_checking", "numerical solve");
    add("code_verification", "let's double-check with code");
    add("code_verification", "use python to analyze");
    add("code_verification", "implement a better approach and verify");
    add("code_verification", "symbolic computation to verify analytical results");
    add("code_verification", "after simplification");
    add("code_verification", "analytically confirm");
    add("approximation_convergence", "results seem to be converging");
    add("approximation_convergence", "numeric approximation converges to");
    add("approximation_convergence", "evaluate the sum numerically for a few terms");
    add("approximation_convergence", "verify this pattern");
    add("approximation_convergence", "visual verification");
    add("approximation_convergence", "logic is working");
    add("systematic_search", "let's check more values systematically");
    add("systematic_search", "use code to check possible values");
    add("systematic_search", "exhaustive check up to");
    add("systematic_search", "systematically compute possible values with code");
    return lex;
}

// ---- precursor detection ------------------------------------------------------------

json PrecursorMatch::to_json() const {
    return json{{"segment_ordinal", segment_ordinal},
                {"window", window},
                {"phrase", phrase},
                {"category", category},
                {"score", score}};
}

PrecursorMatch PrecursorMatch::from_json(const json& j) {
    PrecursorMatch m;
    m.segment_ordinal = j.at("segment_ordinal").get<int>();
    m.window = j.at("window").get<std::string>();
    m.phrase = j.at("phrase").get<std::string>();
    m.category = j.at("category").get<std::string>();
    m.score = j.at("score").get<double>();
    return m;
}

namespace {

std::vector<std::string> split_sentences(const std::string& text) {
    std::vector<std::string> sentences;
    std::string current;
    for (char c : text) {
        if (c == '.' || c == '!' || c == '?' || c == '\n') {
            if (!trim(current).empty()) sentences.push_back(current);
            current.clear();
        } else {
            current += c;
        }
    }
    if (!trim(current).empty()) sentences.push_back(current);
    return sentences;
}

std::vector<std::string> split_words(const std::string& sentence) {
    std::vector<std::string> words;
    std::string current;
    for (char c : sentence) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!current.empty()) {
                words.push_back(current);
                current.clear();
            }
        } else {
            current += c;
        }
    }
    if (!current.empty()) words.push_back(current);
    return words;
}

int word_count(const std::string& phrase) {
    return static_cast<int>(split_words(phrase).size());
}

}  // namespace

std::vector<PrecursorMatch> detect_precursors(const corpus::Transcript& t,
                                              const PrecursorLexicon& lexicon,
                                              double threshold) {
    struct Prepared {
        const LexiconEntry* entry;
        std::string norm;
        int words;
    };
    std::vector<Prepared> prepared;
    prepared.reserve(lexicon.entries.size());
    for (const LexiconEntry& e : lexicon.entries) {
        prepared.push_back(Prepared{&e, normalize_phrase(e.phrase), word_count(e.phrase)});
    }

    std::vector<PrecursorMatch> matches;
    for (const corpus::Segment& seg : t.segments) {
        if (seg.kind != corpus::SegmentKind::Text) continue;
        // best window per lexicon phrase within this segment
        std::vector<PrecursorMatch> best(prepared.size());
        std::vector<bool> hit(prepared.size(), false);
        for (const std::string& sentence : split_sentences(seg.body)) {
            std::vector<std::string> words = split_words(sentence);
            for (std::size_t pi = 0; pi < prepared.size(); ++pi) {
                const Prepared& p = prepared[pi];
                for (int len = std::max(1, p.words - 1); len <= p.words + 1; ++len) {
                    if (static_cast<std::size_t>(len) > words.size()) break;
                    for (std::size_t start = 0;
                         start + static_cast<std::size_t>(len) <= words.size(); ++start) {
                        std::string window;
                        for (int w = 0; w < len; ++w) {
                            if (w) window += ' ';
                            window += words[start + w];
                        }
                        double score = similarity(normalize_phrase(window), p.norm);
                        if (score >= threshold &&
                            (!hit[pi] || score > best[pi].score)) {
                            hit[pi] = true;
                            best[pi] = PrecursorMatch{seg.ordinal, window,
                                                      p.entry->phrase,
                                                      p.entry->category, score};
                        }
                    }
                }
            }
        }
        for (std::size_t pi = 0; pi < prepared.size(); ++pi) {
            if (hit[pi]) matches.push_back(best[pi]);
        }
    }
    return matches;
}

json PrecursorRecord::to_json() const {
    json ms = json::array();
    for (const PrecursorMatch& m : matches) ms.push_back(m.to_json());
    return json{{"schema_version", corpus::kSchemaVersion},
                {"problem_id", problem_id},
                {"model_id", model_id},
                {"variant", corpus::to_string(variant)},
                {"matches", ms}};
}

PrecursorRecord PrecursorRecord::from_json(const json& j) {
    PrecursorRecord r;
    r.problem_id = j.at("problem_id").get<std::string>();
    r.model_id = j.at("model_id").get<std::string>();
    r.variant = corpus::variant_from_string(j.at("variant").get<std::string>());
    for (const json& m : j.at("matches")) {
        r.matches.push_back(PrecursorMatch::from_json(m));
    }
    return r;
}

}  // namespace timaudit::code_analysis
