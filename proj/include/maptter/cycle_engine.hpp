#pragma once

// The annotation cycle as an event-sourced state machine:
//
//   Model -> Annotate -> Process -> TrainTest -> Evaluate -> Done
//              |  ^                                 |
//              v  | (IAA did not improve)           v
//            Model                               Revise -> Model (next round)

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "maptter/error.hpp"
#include "maptter/util.hpp"

namespace maptter::cycle {

using nlohmann::json;

enum class Phase { Model, Annotate, Process, TrainTest, Evaluate, Revise, Done };

inline const char* to_string(Phase phase) {
  switch (phase) {
    case Phase::Model: return "Model";
    case Phase::Annotate: return "Annotate";
    case Phase::Process: return "Process";
    case Phase::TrainTest: return "TrainTest";
    case Phase::Evaluate: return "Evaluate";
    case Phase::Revise: return "Revise";
    case Phase::Done: return "Done";
  }
  return "?";
}

inline Phase parse_phase(std::string_view text) {
  for (Phase p : {Phase::Model, Phase::Annotate, Phase::Process, Phase::TrainTest, Phase::Evaluate, Phase::Revise,
                  Phase::Done}) {
    if (text == to_string(p)) return p;
  }
  throw Error(Errc::parse_error, "unknown phase '" + std::string(text) + "'");
}

enum class EventKind { annotate, iaa, process, evaluate, accept, revise, remodel };

inline const char* to_string(EventKind kind) {
  switch (kind) {
    case EventKind::annotate: return "annotate";
    case EventKind::iaa: return "iaa";
    case EventKind::process: return "process";
    case EventKind::evaluate: return "evaluate";
    case EventKind::accept: return "accept";
    case EventKind::revise: return "revise";
    case EventKind::remodel: return "remodel";
  }
  return "?";
}

inline EventKind parse_event_kind(std::string_view text) {
  for (EventKind k : {EventKind::annotate, EventKind::iaa, EventKind::process, EventKind::evaluate, EventKind::accept,
                      EventKind::revise, EventKind::remodel}) {
    if (text == to_string(k)) return k;
  }
  throw Error(Errc::parse_error, "unknown cycle event '" + std::string(text) + "'");
}

struct Event {
  EventKind kind = EventKind::annotate;
  std::optional<double> kappa;  // required for EventKind::iaa
  std::string payload_ref;      // id of the artifact the step produced (round, gold, experiment)
};

struct Transition {
  std::string ts;
  Phase from = Phase::Model;
  Phase to = Phase::Model;
  Event event;
};

enum class GateDecision { proceed, return_to_model };

/// Round 1 always proceeds; afterwards agreement must strictly improve.
inline GateDecision iaa_gate(std::optional<double> previous_iaa, double new_iaa) {
  if (!previous_iaa) return GateDecision::proceed;
  return new_iaa > *previous_iaa ? GateDecision::proceed : GateDecision::return_to_model;
}

inline constexpr int kDefaultMaxRounds = 10;

struct CycleState {
  Phase phase = Phase::Model;
  int round_number = 1;
  std::optional<double> current_iaa;
  std::optional<double> previous_iaa;  // accepted IAA of the previous round
  int max_rounds = kDefaultMaxRounds;
  std::vector<Transition> history;
};

namespace detail {

[[noreturn]] inline void illegal(Phase phase, EventKind event) {
  throw Error(Errc::illegal_transition,
              std::string("event '") + to_string(event) + "' is not legal in phase " + to_string(phase),
              {{"phase", to_string(phase)}, {"event", to_string(event)}});
}

}  // namespace detail

/// Pure transition function; the input state is left untouched.
inline CycleState advance(const CycleState& state, const Event& event, std::string ts = {}) {
  CycleState next = state;
  switch (state.phase) {
    case Phase::Model:
      if (event.kind != EventKind::annotate) detail::illegal(state.phase, event.kind);
      next.phase = Phase::Annotate;
      break;
    case Phase::Annotate: {
      if (event.kind != EventKind::iaa) detail::illegal(state.phase, event.kind);
      if (!event.kappa) throw Error(Errc::invalid_argument, "iaa event needs a kappa value");
      next.current_iaa = event.kappa;
      next.phase = iaa_gate(state.previous_iaa, *event.kappa) == GateDecision::proceed ? Phase::Process : Phase::Model;
      break;
    }
    case Phase::Process:
      if (event.kind != EventKind::process) detail::illegal(state.phase, event.kind);
      next.phase = Phase::TrainTest;
      break;
    case Phase::TrainTest:
      if (event.kind != EventKind::evaluate) detail::illegal(state.phase, event.kind);
      next.phase = Phase::Evaluate;
      break;
    case Phase::Evaluate:
      if (event.kind == EventKind::accept) {
        next.phase = Phase::Done;
      } else if (event.kind == EventKind::revise) {
        next.phase = Phase::Revise;
      } else {
        detail::illegal(state.phase, event.kind);
      }
      break;
    case Phase::Revise:
      if (event.kind != EventKind::remodel) detail::illegal(state.phase, event.kind);
      if (state.round_number >= state.max_rounds) {
        throw Error(Errc::max_rounds_exceeded, "round limit " + std::to_string(state.max_rounds) + " reached",
                    {{"max_rounds", state.max_rounds}});
      }
      next.phase = Phase::Model;
      next.round_number = state.round_number + 1;
      next.previous_iaa = state.current_iaa;
      next.current_iaa.reset();
      break;
    case Phase::Done:
      detail::illegal(state.phase, event.kind);
  }
  next.history.push_back(Transition{std::move(ts), state.phase, next.phase, event});
  return next;
}

/// Rebuilds a state by re-applying the logged events, checking each
/// recorded target phase along the way.
inline CycleState replay(const std::vector<Transition>& history, int max_rounds = kDefaultMaxRounds) {
  CycleState state;
  state.max_rounds = max_rounds;
  for (const auto& t : history) {
    if (t.from != state.phase) throw Error(Errc::store_corrupt, "history does not chain at " + t.ts);
    state = advance(state, t.event, t.ts);
    if (state.phase != t.to) throw Error(Errc::store_corrupt, "history target phase mismatch at " + t.ts);
  }
  return state;
}

inline json to_json(const Transition& t) {
  json j{{"ts", t.ts},
         {"phase_from", to_string(t.from)},
         {"phase_to", to_string(t.to)},
         {"payload_ref", t.event.payload_ref},
         {"event", to_string(t.event.kind)}};
  if (t.event.kappa) j["kappa"] = format_double17(*t.event.kappa);
  return j;
}

inline Transition transition_from_json(const json& j) {
  try {
    Transition t;
    t.ts = j.at("ts").get<std::string>();
    t.from = parse_phase(j.at("phase_from").get<std::string>());
    t.to = parse_phase(j.at("phase_to").get<std::string>());
    t.event.kind = parse_event_kind(j.at("event").get<std::string>());
    t.event.payload_ref = j.at("payload_ref").get<std::string>();
    if (j.contains("kappa")) t.event.kappa = parse_double(j["kappa"].get<std::string>());
    return t;
  } catch (const json::exception& e) {
    throw Error(Errc::store_corrupt, std::string("bad history entry: ") + e.what());
  }
}

inline json to_json(const CycleState& s) {
  json j{{"phase", to_string(s.phase)}, {"round_number", s.round_number}, {"max_rounds", s.max_rounds}};
  j["current_iaa"] = s.current_iaa ? json(*s.current_iaa) : json(nullptr);
  j["previous_iaa"] = s.previous_iaa ? json(*s.previous_iaa) : json(nullptr);
  j["history"] = json::array();
  for (const auto& t : s.history) j["history"].push_back(to_json(t));
  return j;
}

/// Append-only JSONL transition log: {ts, phase_from, phase_to, payload_ref, event[, kappa]}.
class HistoryLog {
 public:
  explicit HistoryLog(std::filesystem::path path) : path_(std::move(path)) {}

  const std::filesystem::path& path() const { return path_; }

  void append(const Transition& t) const {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    if (!out) throw Error(Errc::io_error, "cannot append to " + path_.string());
    out << to_json(t).dump() << '\n';
    out.flush();
    if (!out) throw Error(Errc::io_error, "write to " + path_.string() + " failed");
  }

  std::vector<Transition> load() const {
    std::vector<Transition> out;
    if (!std::filesystem::exists(path_)) return out;
    for (const auto& line : split_lines(read_file(path_))) {
      if (trim(line).empty()) continue;
      try {
        out.push_back(transition_from_json(json::parse(line)));
      } catch (const json::exception& e) {
        throw Error(Errc::store_corrupt, std::string("bad history line: ") + e.what());
      }
    }
    return out;
  }

 private:
  std::filesystem::path path_;
};

}  // namespace maptter::cycle
