#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "storypipe/schema.hpp"

namespace storypipe::loop {

// Settings for one generate -> examine -> refine loop.
struct LoopConfig {
  int max_iterations = 4;
  std::string consensus = "all-approve";
  int pool_size = 1;
  std::string guideline_id;              // which guide the examiners enforce
  std::vector<std::string> axes;         // score axes for pooled evaluation
  double early_exit_threshold = 0.9;     // pooled: approve when every axis clears this
  bool emit_best_on_exhaustion = true;   // otherwise throw BudgetExhausted
  std::string stage;                     // trace label, e.g. "script" or "keyframes[2]"
  std::string loop_id;                   // trace file stem
};

// One surviving candidate from a pool fan-out.
struct CandidateRecord {
  int pool_index = 0;
  ProviderResponse response;
};

struct IterationRecord {
  int iteration = 0;
  PromptSpec prompt;
  std::vector<CandidateRecord> candidates;
  std::vector<int> skipped;      // pool indices whose member failed
  std::vector<Feedback> feedback;
  int selected_index = 0;        // position within `candidates`
  double aggregate_score = 0.0;  // score of the selected candidate
};

struct LoopTrace {
  std::string stage;
  std::string loop_id;
  std::vector<IterationRecord> records;
  std::string outcome;  // "consensus" | "budget-exhausted"
  ProviderResponse final;
  int final_iteration = 0;  // iteration whose candidate became final
  std::vector<std::string> warnings;

  bool consensus() const { return outcome == "consensus"; }
  int iterations() const { return static_cast<int>(records.size()); }
  // Canonical JSON rendering; identical traces serialize to identical bytes.
  std::string serialize() const;
};

using Generator = std::function<ProviderResponse(const PromptSpec&, int iteration)>;
using Examiner = std::function<Feedback(const ProviderResponse&, int iteration)>;
using Refiner =
    std::function<PromptSpec(const PromptSpec&, const std::vector<Feedback>&, int iteration)>;
// Scores each surviving candidate of one fan-out; must return one Feedback
// per candidate, aligned by position, each carrying every configured axis.
using PoolEvaluator =
    std::function<std::vector<Feedback>(const std::vector<CandidateRecord>&, int iteration)>;

// Single-candidate loop: generate, collect every examiner's feedback, stop
// on unanimous approval, otherwise refine the prompt and retry until the
// budget runs out. On exhaustion the best-scoring candidate seen so far is
// emitted (with a warning) unless the config says to fail instead.
LoopTrace run_loop(const Generator& generator, const std::vector<Examiner>& examiners,
                   const Refiner& refiner, PromptSpec p1, const LoopConfig& cfg);

// Pooled best-of-k loop: fan the prompt out to every pool member, score the
// survivors on the configured axes, keep the argmax (ties go to the lowest
// pool index). Ends early when the selected candidate clears the approval
// threshold on every axis; otherwise the refined prompt feeds the next
// fan-out and the last selected candidate wins.
LoopTrace run_pooled_loop(const std::vector<Generator>& pool, const PoolEvaluator& evaluator,
                          const Refiner& refiner, PromptSpec p1, const LoopConfig& cfg);

// Unweighted mean over every (feedback, axis) entry; MissingAxis when any
// feedback lacks one of the requested axes.
double aggregate_scores(const std::vector<Feedback>& feedback,
                        const std::vector<std::string>& axes);

// Weighted variant; weights default to 1 for axes not listed.
double aggregate_scores(const std::vector<Feedback>& feedback,
                        const std::vector<std::string>& axes,
                        const std::map<std::string, double>& axis_weights);

// First index holding the maximum value; the pooled tie-break rule.
size_t argmax_first(const std::vector<double>& values);

}  // namespace storypipe::loop
