#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "egoqa/answer_class.hpp"
#include "egoqa/reasoning.hpp"

namespace egoqa {

struct EvalConfig {
  double tau = 0.80;
  int bootstrap_samples = 1000;
  std::uint64_t seed = 0;
  ClassTaxonomy taxonomy = ClassTaxonomy::defaults();

  void validate() const;  // ConfigError unless 0 < tau <= 1 and samples >= 1
};

inline const std::vector<double> kDefaultTaus = {0.70, 0.75, 0.80, 0.85, 0.90};

// Lowercase, strip punctuation, collapse whitespace, trim. Handles UTF-8:
// fullwidth ASCII folds to ASCII, Latin-1 capitals are lowercased, Unicode
// spaces become spaces and Unicode punctuation is dropped. Combining marks
// are kept as they are (no canonical decomposition).
std::string normalize_text(std::string_view s);

// Levenshtein distance over Unicode code points.
std::size_t edit_distance(std::string_view a, std::string_view b);

// 1 - edit_distance / max length (code points); 1 when both are empty.
// Inputs are compared as given; normalize first.
double string_similarity(std::string_view a, std::string_view b);

// Per pair: similarity(normalize(pred), normalize(gt)) > tau.
std::vector<bool> em_correct(std::span<const std::string> predictions, std::span<const std::string> ground_truths,
                             double tau);
// Fraction correct; 0.0 on an empty set.
double em_at_tau(std::span<const std::string> predictions, std::span<const std::string> ground_truths, double tau);

std::map<double, double> tau_sweep(std::span<const std::string> predictions,
                                   std::span<const std::string> ground_truths,
                                   const std::vector<double>& taus = kDefaultTaus);

AnswerClass classify_answer(std::string_view text, const EvalConfig& config = {});

struct ClassScores {
  AnswerClass label;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

// rows: ground-truth classes in taxonomy order; columns: the same classes
// followed by Unparsed.
struct ConfusionMatrix {
  std::vector<AnswerClass> labels;
  std::vector<std::vector<std::size_t>> counts;
};

struct F1Report {
  std::vector<ClassScores> per_class;  // taxonomy order
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;
  ConfusionMatrix confusion;
};

// Unparsed (and any label outside the taxonomy) is a prediction that is wrong
// for every class. Ground truth must be a taxonomy class. Classes with no
// support score F1 = 0 and still count toward the macro mean.
F1Report f1_report(std::span<const AnswerClass> predictions, std::span<const AnswerClass> ground_truths,
                   const ClassTaxonomy& taxonomy = ClassTaxonomy::defaults());
double macro_f1(std::span<const AnswerClass> predictions, std::span<const AnswerClass> ground_truths,
                const ClassTaxonomy& taxonomy = ClassTaxonomy::defaults());
double weighted_f1(std::span<const AnswerClass> predictions, std::span<const AnswerClass> ground_truths,
                   const ClassTaxonomy& taxonomy = ClassTaxonomy::defaults());

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  friend bool operator==(const Interval&, const Interval&) = default;
};

// Percentile bootstrap of the mean, nearest-rank 2.5th and 97.5th percentiles.
// Resample b draws from its own stream derive_seed(seed, b).
Interval bootstrap_ci(std::span<const int> correct, int samples, std::uint64_t seed);

// Metrics over one subset of questions.
struct BucketMetrics {
  std::string bucket;
  std::size_t n = 0;
  double em_at_tau = 0.0;
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;
};

struct ConsistencyStats {
  std::size_t consistent = 0;
  std::size_t inconsistent = 0;
  double inconsistency_ratio = 0.0;
  std::vector<BucketMetrics> buckets;  // overall, consistent, inconsistent
};

struct LatencyRow {
  std::string method;  // "<retrieval>/<reasoning>"
  std::size_t n = 0;
  double retrieval_s = 0.0;
  double captioning_s = 0.0;
  double reasoning_s = 0.0;
  double total_s = 0.0;
};

// Class used for F1 after the EM gate: the predicted class when it matches the
// ground truth and the clause clears tau, Unparsed when the class matches but
// the clause does not, and the predicted class otherwise. Failed questions
// are Unparsed.
AnswerClass effective_class(const QuestionTrace& trace, const EvalConfig& config);

BucketMetrics bucket_metrics(const std::string& name, std::span<const QuestionTrace> traces,
                             const EvalConfig& config);
ConsistencyStats consistency_breakdown(std::span<const QuestionTrace> traces, const EvalConfig& config = {});
// One row per method, in order of first appearance.
std::vector<LatencyRow> latency_report(std::span<const QuestionTrace> traces);

struct EvalReport {
  std::size_t n_questions = 0;
  std::size_t n_failed = 0;
  double tau = 0.8;
  double em_at_tau = 0.0;
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;
  std::vector<ClassScores> per_class;
  ConfusionMatrix confusion;
  Interval ci95;
  std::map<double, double> tau_sweep;
  ConsistencyStats consistency;
  std::vector<LatencyRow> latency;
  std::vector<std::string> warnings;
};

EvalReport evaluate(std::span<const QuestionTrace> traces, const EvalConfig& config = {},
                    const std::vector<double>& taus = kDefaultTaus);

std::string format_report(const EvalReport& report);
// One JSON object per line: {"metric", "bucket", "value"}.
void write_report_records(const EvalReport& report, std::ostream& out);
std::string format_latency_table(const std::vector<LatencyRow>& rows);

}  // namespace egoqa
