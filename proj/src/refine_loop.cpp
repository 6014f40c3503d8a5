#include "storypipe/refine_loop.hpp"

#include <json.hpp>

#include <algorithm>

#include "storypipe/errors.hpp"
#include "storypipe/util.hpp"

namespace storypipe::loop {

using ojson = nlohmann::ordered_json;

namespace {

ojson asset_json(const AssetRef& ref) {
  ojson node;
  node["id"] = ref.id;
  node["kind"] = ref.kind;
  node["uri"] = ref.uri;
  if (ref.duration_seconds) node["duration_seconds"] = *ref.duration_seconds;
  return node;
}

ojson response_json(const ProviderResponse& response) {
  ojson node;
  node["text"] = response.text;
  if (response.asset) node["asset"] = asset_json(*response.asset);
  node["metadata"] = ojson::object();
  for (const auto& [key, value] : response.metadata) node["metadata"][key] = value;
  return node;
}

ojson prompt_json(const PromptSpec& prompt) {
  ojson node;
  node["kind"] = prompt.kind;
  node["body"] = prompt.body;
  node["attachments"] = ojson::array();
  for (const AssetRef& ref : prompt.attachments) node["attachments"].push_back(asset_json(ref));
  node["metadata"] = ojson::object();
  for (const auto& [key, value] : prompt.metadata) node["metadata"][key] = value;
  return node;
}

ojson feedback_json(const Feedback& feedback) {
  ojson node;
  node["reviewer_id"] = feedback.reviewer_id;
  node["verdict"] = feedback.approve ? "approve" : "revise";
  node["findings"] = ojson::array();
  for (const Finding& finding : feedback.findings) {
    ojson f;
    f["rule_id"] = finding.rule_id;
    if (finding.shot_index) f["shot_index"] = *finding.shot_index;
    f["message"] = finding.message;
    node["findings"].push_back(std::move(f));
  }
  node["scores"] = ojson::object();
  for (const auto& [axis, value] : feedback.scores) node["scores"][axis] = value;
  return node;
}

// Score used to rank iterations when the budget runs out. Scored feedback
// averages its entries; bare verdicts rank approvals above revisions with
// fewer findings.
double fallback_score(const Feedback& feedback) {
  if (!feedback.scores.empty()) {
    double sum = 0.0;
    for (const auto& [axis, value] : feedback.scores) sum += value;
    return sum / static_cast<double>(feedback.scores.size());
  }
  if (feedback.approve) return 1.0;
  return 1.0 / (1.0 + static_cast<double>(feedback.findings.size()));
}

double iteration_score(const std::vector<Feedback>& feedback) {
  if (feedback.empty()) return 0.0;
  double sum = 0.0;
  for (const Feedback& f : feedback) sum += fallback_score(f);
  return sum / static_cast<double>(feedback.size());
}

}  // namespace

std::string LoopTrace::serialize() const {
  ojson doc;
  doc["schema_version"] = 1;
  doc["stage"] = stage;
  doc["loop_id"] = loop_id;
  doc["outcome"] = outcome;
  doc["final_iteration"] = final_iteration;
  doc["final"] = response_json(final);
  doc["warnings"] = warnings;
  doc["iterations"] = ojson::array();
  for (const IterationRecord& record : records) {
    ojson node;
    node["iteration"] = record.iteration;
    node["prompt"] = prompt_json(record.prompt);
    node["candidates"] = ojson::array();
    for (const CandidateRecord& candidate : record.candidates) {
      ojson c;
      c["pool_index"] = candidate.pool_index;
      c["response"] = response_json(candidate.response);
      node["candidates"].push_back(std::move(c));
    }
    node["skipped"] = record.skipped;
    node["feedback"] = ojson::array();
    for (const Feedback& f : record.feedback) node["feedback"].push_back(feedback_json(f));
    node["selected_index"] = record.selected_index;
    node["aggregate_score"] = record.aggregate_score;
    doc["iterations"].push_back(std::move(node));
  }
  return doc.dump(2) + "\n";
}

double aggregate_scores(const std::vector<Feedback>& feedback,
                        const std::vector<std::string>& axes) {
  return aggregate_scores(feedback, axes, {});
}

double aggregate_scores(const std::vector<Feedback>& feedback,
                        const std::vector<std::string>& axes,
                        const std::map<std::string, double>& axis_weights) {
  if (feedback.empty() || axes.empty()) throw EmptyInput("aggregate over no scores");
  double weighted_sum = 0.0;
  double weight_total = 0.0;
  for (const Feedback& f : feedback) {
    for (const std::string& axis : axes) {
      auto it = f.scores.find(axis);
      if (it == f.scores.end()) {
        throw MissingAxis("feedback from '" + f.reviewer_id + "' lacks axis '" + axis + "'");
      }
      auto w = axis_weights.find(axis);
      double weight = w == axis_weights.end() ? 1.0 : w->second;
      weighted_sum += it->second * weight;
      weight_total += weight;
    }
  }
  return weighted_sum / weight_total;
}

size_t argmax_first(const std::vector<double>& values) {
  if (values.empty()) throw EmptyInput("argmax over empty list");
  size_t best = 0;
  for (size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

LoopTrace run_loop(const Generator& generator, const std::vector<Examiner>& examiners,
                   const Refiner& refiner, PromptSpec p1, const LoopConfig& cfg) {
  if (cfg.max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
  if (examiners.empty()) throw ConfigError("loop '" + cfg.loop_id + "' has no examiners");

  LoopTrace trace;
  trace.stage = cfg.stage;
  trace.loop_id = cfg.loop_id;

  PromptSpec prompt = std::move(p1);
  for (int i = 1; i <= cfg.max_iterations; ++i) {
    IterationRecord record;
    record.iteration = i;
    record.prompt = prompt;

    ProviderResponse candidate;
    try {
      candidate = generator(prompt, i);
    } catch (const ProviderError& e) {
      throw ProviderError(e.kind(), "loop '" + cfg.loop_id + "' iteration " +
                                        std::to_string(i) + ": " + e.what());
    }
    record.candidates.push_back({0, candidate});

    bool all_approve = true;
    for (const Examiner& examiner : examiners) {
      Feedback feedback = examiner(candidate, i);
      validate_feedback(feedback);
      all_approve = all_approve && feedback.approve;
      record.feedback.push_back(std::move(feedback));
    }
    record.selected_index = 0;
    record.aggregate_score = iteration_score(record.feedback);
    trace.records.push_back(record);

    if (all_approve) {
      trace.outcome = "consensus";
      trace.final = candidate;
      trace.final_iteration = i;
      return trace;
    }
    if (i < cfg.max_iterations) {
      prompt = refiner(prompt, record.feedback, i);
    }
  }

  trace.outcome = "budget-exhausted";
  if (!cfg.emit_best_on_exhaustion) {
    throw BudgetExhausted("loop '" + cfg.loop_id + "' exhausted " +
                          std::to_string(cfg.max_iterations) + " iterations without consensus");
  }
  std::vector<double> scores;
  scores.reserve(trace.records.size());
  for (const IterationRecord& record : trace.records) scores.push_back(record.aggregate_score);
  size_t best = argmax_first(scores);
  trace.final = trace.records[best].candidates[0].response;
  trace.final_iteration = trace.records[best].iteration;
  trace.warnings.push_back("budget exhausted after " + std::to_string(cfg.max_iterations) +
                           " iterations; emitting best candidate from iteration " +
                           std::to_string(trace.final_iteration));
  return trace;
}

LoopTrace run_pooled_loop(const std::vector<Generator>& pool, const PoolEvaluator& evaluator,
                          const Refiner& refiner, PromptSpec p1, const LoopConfig& cfg) {
  if (cfg.max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
  if (pool.empty()) throw ConfigError("loop '" + cfg.loop_id + "' has an empty pool");
  if (cfg.axes.empty()) throw ConfigError("pooled loop '" + cfg.loop_id + "' has no score axes");

  LoopTrace trace;
  trace.stage = cfg.stage;
  trace.loop_id = cfg.loop_id;

  PromptSpec prompt = std::move(p1);
  for (int i = 1; i <= cfg.max_iterations; ++i) {
    IterationRecord record;
    record.iteration = i;
    record.prompt = prompt;

    std::string first_error;
    for (size_t k = 0; k < pool.size(); ++k) {
      try {
        ProviderResponse response = pool[k](prompt, i);
        record.candidates.push_back({static_cast<int>(k), std::move(response)});
      } catch (const ProviderError& e) {
        record.skipped.push_back(static_cast<int>(k));
        if (first_error.empty()) first_error = e.what();
      }
    }
    if (record.candidates.empty()) {
      throw ProviderError(ProviderError::Kind::unavailable,
                          "loop '" + cfg.loop_id + "' iteration " + std::to_string(i) +
                              ": every pool member failed (" + first_error + ")");
    }

    record.feedback = evaluator(record.candidates, i);
    if (record.feedback.size() != record.candidates.size()) {
      throw Error("evaluator returned " + std::to_string(record.feedback.size()) +
                  " feedback entries for " + std::to_string(record.candidates.size()) +
                  " candidates");
    }
    std::vector<double> scores;
    scores.reserve(record.feedback.size());
    for (const Feedback& f : record.feedback) {
      validate_feedback(f);
      scores.push_back(aggregate_scores({f}, cfg.axes));
    }
    record.selected_index = static_cast<int>(argmax_first(scores));
    record.aggregate_score = scores[static_cast<size_t>(record.selected_index)];
    trace.records.push_back(record);

    const Feedback& selected_feedback = record.feedback[static_cast<size_t>(record.selected_index)];
    bool clears_threshold = true;
    for (const std::string& axis : cfg.axes) {
      if (selected_feedback.scores.at(axis) < cfg.early_exit_threshold) {
        clears_threshold = false;
        break;
      }
    }
    bool approved = selected_feedback.approve || clears_threshold;

    if (approved || i == cfg.max_iterations) {
      trace.outcome = approved ? "consensus" : "budget-exhausted";
      trace.final =
          record.candidates[static_cast<size_t>(record.selected_index)].response;
      trace.final_iteration = i;
      if (!approved) {
        if (!cfg.emit_best_on_exhaustion) {
          throw BudgetExhausted("loop '" + cfg.loop_id + "' exhausted " +
                                std::to_string(cfg.max_iterations) +
                                " iterations without an approved candidate");
        }
        trace.warnings.push_back("budget exhausted after " +
                                 std::to_string(cfg.max_iterations) +
                                 " iterations; emitting the last selected candidate");
      }
      return trace;
    }
    prompt = refiner(prompt, {selected_feedback}, i);
  }
  return trace;  // unreachable; the loop always returns from its last iteration
}

}  // namespace storypipe::loop
