#pragma once

#include <stdexcept>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

namespace maptter {

enum class Errc {
  // corpus store
  unknown_article,
  malformed_record,
  empty_selection,
  unknown_project,
  // annotation workflow
  no_comments,
  stale_guidelines_version,
  unknown_round,
  unknown_comment,
  unknown_annotator,
  round_closed,
  incomplete_round,
  degenerate_agreement,
  not_a_disagreement,
  incomplete_adjudication,
  empty_class,
  // featurization / classifiers
  empty_corpus,
  single_class,
  k_too_large,
  dimension_mismatch,
  // evaluation
  bad_k,
  empty_matrix,
  fold_too_small,
  missing_cell,
  // cycle engine
  illegal_transition,
  max_rounds_exceeded,
  aborted_by_operator,
  // plumbing
  invalid_argument,
  parse_error,
  io_error,
  store_corrupt,
  bind_failure,
  unauthorized,
  not_found,
};

inline const char* errc_name(Errc code) {
  switch (code) {
    case Errc::unknown_article: return "UnknownArticle";
    case Errc::malformed_record: return "MalformedRecord";
    case Errc::empty_selection: return "EmptySelection";
    case Errc::unknown_project: return "UnknownProject";
    case Errc::no_comments: return "NoComments";
    case Errc::stale_guidelines_version: return "StaleGuidelinesVersion";
    case Errc::unknown_round: return "UnknownRound";
    case Errc::unknown_comment: return "UnknownComment";
    case Errc::unknown_annotator: return "UnknownAnnotator";
    case Errc::round_closed: return "RoundClosed";
    case Errc::incomplete_round: return "IncompleteRound";
    case Errc::degenerate_agreement: return "DegenerateAgreement";
    case Errc::not_a_disagreement: return "NotADisagreement";
    case Errc::incomplete_adjudication: return "IncompleteAdjudication";
    case Errc::empty_class: return "EmptyClass";
    case Errc::empty_corpus: return "EmptyCorpus";
    case Errc::single_class: return "SingleClass";
    case Errc::k_too_large: return "KTooLarge";
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::bad_k: return "BadK";
    case Errc::empty_matrix: return "EmptyMatrix";
    case Errc::fold_too_small: return "FoldTooSmall";
    case Errc::missing_cell: return "MissingCell";
    case Errc::illegal_transition: return "IllegalTransition";
    case Errc::max_rounds_exceeded: return "MaxRoundsExceeded";
    case Errc::aborted_by_operator: return "AbortedByOperator";
    case Errc::invalid_argument: return "InvalidArgument";
    case Errc::parse_error: return "ParseError";
    case Errc::io_error: return "IoError";
    case Errc::store_corrupt: return "StoreCorrupt";
    case Errc::bind_failure: return "BindFailure";
    case Errc::unauthorized: return "Unauthorized";
    case Errc::not_found: return "NotFound";
  }
  return "Unknown";
}

/// Domain error carrying a stable code and an optional JSON payload.
/// The service serializes it as {code, message, details}.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message, nlohmann::json details = nlohmann::json::object())
      : std::runtime_error(message), code_(code), details_(std::move(details)) {}

  Errc code() const noexcept { return code_; }
  const char* name() const noexcept { return errc_name(code_); }
  const nlohmann::json& details() const noexcept { return details_; }

 private:
  Errc code_;
  nlohmann::json details_;
};

}  // namespace maptter
