#pragma once

// Drives one pass of the cycle for a project: open the annotation round,
// collect labels, gate on agreement, adjudicate, build the gold standard,
// run the experiment grid and let the operator accept or revise.

#include <optional>
#include <string>

#include "maptter/annotation.hpp"
#include "maptter/cycle_engine.hpp"
#include "maptter/evaluation.hpp"
#include "maptter/experiment_config.hpp"
#include "maptter/workbench.hpp"

namespace maptter::cycle {

struct RoundConfig {
  annotation::Guidelines guidelines;
  corpus::CommentSelector selector;
  std::array<std::string, 2> annotators{"A1", "A2"};
  uint64_t balance_seed = 0;
  ExperimentConfig experiment = ExperimentConfig::defaults();
};

/// The humans in the loop. Returning nullopt from annotate() pauses the
/// run; the round stays open and a later run_round() resumes it.
class RoundDriver {
 public:
  virtual ~RoundDriver() = default;
  virtual std::optional<Label> annotate(const std::string& annotator_id, const NextItem& item) = 0;
  virtual annotation::Decision adjudicate(const annotation::Disagreement& item) = 0;
  /// Operator verdict on the evaluation: true = results sufficient.
  virtual bool accept(const eval::EvaluationReport& report) = 0;
};

struct RoundReport {
  std::string round_id;
  annotation::IAAResult iaa;
  GateDecision gate = GateDecision::proceed;
  std::optional<annotation::GoldCorpus> gold;
  std::string experiment_id;
  std::optional<eval::EvaluationReport> report;
  CycleState state;
};

inline RoundReport run_round(Workbench& bench, const std::string& project_id, const RoundConfig& config,
                             RoundDriver& driver) {
  CycleState state = bench.cycle_state(project_id);
  RoundReport out;
  if (state.phase == Phase::Model) {
    auto& round = bench.open_round(project_id, config.guidelines, config.selector, config.annotators);
    out.round_id = round.id();
    state = bench.cycle_event(project_id, {EventKind::annotate, std::nullopt, out.round_id});
  } else if (state.phase == Phase::Annotate) {
    out.round_id = state.history.back().event.payload_ref;
  } else {
    throw Error(Errc::illegal_transition, std::string("run_round needs phase Model or Annotate, not ") +
                                              to_string(state.phase),
                {{"phase", to_string(state.phase)}});
  }

  auto& round = bench.round(out.round_id);
  for (const auto& annotator : round.annotators()) {
    while (auto item = bench.next_item(out.round_id, annotator)) {
      const auto label = driver.annotate(annotator, *item);
      if (!label) {
        throw Error(Errc::aborted_by_operator, "annotation paused in round " + out.round_id,
                    {{"round_id", out.round_id}, {"annotator_id", annotator}});
      }
      bench.record_annotation(out.round_id, annotator, item->comment_id, *label);
    }
  }
  round.close();

  out.iaa = bench.iaa(out.round_id);
  out.gate = iaa_gate(state.previous_iaa, out.iaa.kappa);
  state = bench.cycle_event(project_id, {EventKind::iaa, out.iaa.kappa, out.round_id});
  if (out.gate == GateDecision::return_to_model) {
    out.state = state;
    return out;
  }

  for (const auto& d : bench.disagreements(out.round_id)) {
    bench.adjudicate(out.round_id, d.comment_id, driver.adjudicate(d));
  }
  out.gold = bench.build_gold(out.round_id, config.balance_seed);
  bench.cycle_event(project_id, {EventKind::process, std::nullopt, "gold:" + out.round_id});

  out.experiment_id =
      bench.start_experiment(project_id, bench.gold_documents(out.round_id), config.experiment, out.round_id, false);
  const auto record = bench.experiment(out.experiment_id);
  if (record.status != ExperimentStatus::done) {
    throw Error(Errc::invalid_argument, "experiment " + out.experiment_id + " failed: " + record.error_message,
                {{"code", record.error_code}});
  }
  out.report = record.report;
  bench.cycle_event(project_id, {EventKind::evaluate, std::nullopt, out.experiment_id});

  if (driver.accept(*out.report)) {
    state = bench.cycle_event(project_id, {EventKind::accept, std::nullopt, out.experiment_id});
  } else {
    bench.cycle_event(project_id, {EventKind::revise, std::nullopt, out.experiment_id});
    state = bench.cycle_event(project_id, {EventKind::remodel, std::nullopt, out.round_id});
  }
  out.state = state;
  return out;
}

}  // namespace maptter::cycle
