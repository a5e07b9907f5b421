#include "timaudit/errors.hpp"

namespace timaudit {

std::string_view errc_name(errc code) {
    switch (code) {
        case errc::io_failure: return "IoFailure";
        case errc::malformed_record: return "MalformedRecord";
        case errc::schema_violation: return "SchemaViolation";
        case errc::orphan_output: return "OrphanOutput";
        case errc::empty_corpus: return "EmptyCorpus";
        case errc::missing_artifact: return "MissingArtifact";
        case errc::judge_unavailable: return "JudgeUnavailable";
        case errc::prm_unavailable: return "PrmUnavailable";
        case errc::rate_limited: return "RateLimited";
        case errc::replay_miss: return "ReplayMiss";
        case errc::unparsable_verdict: return "UnparsableVerdict";
        case errc::inconsistent_winner: return "InconsistentWinner";
        case errc::index_out_of_range: return "IndexOutOfRange";
        case errc::empty_gold: return "EmptyGold";
        case errc::length_mismatch: return "LengthMismatch";
        case errc::empty_input: return "EmptyInput";
        case errc::mixed_threshold: return "MixedThreshold";
        case errc::incomplete_run: return "IncompleteRun";
        case errc::join_failure: return "JoinFailure";
        case errc::missing_profile: return "MissingProfile";
        case errc::missing_verdict: return "MissingVerdict";
        case errc::degenerate_variance: return "DegenerateVariance";
        case errc::domain_error: return "DomainError";
        case errc::insufficient_data: return "InsufficientData";
        case errc::no_eligible_span: return "NoEligibleSpan";
        case errc::correctness_gate_failed: return "CorrectnessGateFailed";
        case errc::span_mismatch: return "SpanMismatch";
        case errc::lex_failure: return "LexFailure";
        case errc::config_error: return "ConfigError";
        case errc::precondition: return "Precondition";
    }
    return "UnknownError";
}

}  // namespace timaudit
