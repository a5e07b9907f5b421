#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace timaudit {

// Failure categories surfaced by the library.  Callers that need to branch
// on a failure (CLI exit codes, retry loops, tests) match on the code; the
// message carries the specifics.
enum class errc {
    // record and file handling
    io_failure,
    malformed_record,
    schema_violation,
    orphan_output,
    empty_corpus,
    missing_artifact,
    // judge gateway
    judge_unavailable,
    prm_unavailable,
    rate_limited,
    replay_miss,
    // verdict parsing and validation
    unparsable_verdict,
    inconsistent_winner,
    index_out_of_range,
    empty_gold,
    length_mismatch,
    // metric aggregation
    empty_input,
    mixed_threshold,
    incomplete_run,
    join_failure,
    missing_profile,
    missing_verdict,
    // statistics
    degenerate_variance,
    domain_error,
    insufficient_data,
    // forge
    no_eligible_span,
    correctness_gate_failed,
    span_mismatch,
    // code analysis
    lex_failure,
    // configuration / misuse
    config_error,
    precondition,
};

std::string_view errc_name(errc code);

class Error : public std::runtime_error {
  public:
    Error(errc code, const std::string& message)
        : std::runtime_error(std::string(errc_name(code)) + ": " + message),
          code_(code) {}

    errc code() const { return code_; }

  private:
    errc code_;
};

[[noreturn]] inline void raise(errc code, const std::string& message) {
    throw Error(code, message);
}

}  // namespace timaudit
