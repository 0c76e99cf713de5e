#include <algorithm>

#include "egoqa/errors.hpp"
#include "egoqa/eval.hpp"
#include "egoqa/rng.hpp"

namespace egoqa {

void EvalConfig::validate() const {
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("tau must be in (0, 1]");
  if (bootstrap_samples < 1) throw ConfigError("bootstrap_samples must be >= 1");
}

std::vector<bool> em_correct(std::span<const std::string> predictions, std::span<const std::string> ground_truths,
                             double tau) {
  if (predictions.size() != ground_truths.size())
    throw InputError("em_at_tau: " + std::to_string(predictions.size()) + " predictions for " +
                     std::to_string(ground_truths.size()) + " ground truths");
  std::vector<bool> out(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    out[i] = string_similarity(normalize_text(predictions[i]), normalize_text(ground_truths[i])) > tau;
  }
  return out;
}

double em_at_tau(std::span<const std::string> predictions, std::span<const std::string> ground_truths, double tau) {
  const auto hits = em_correct(predictions, ground_truths, tau);
  if (hits.empty()) return 0.0;
  return static_cast<double>(std::count(hits.begin(), hits.end(), true)) / static_cast<double>(hits.size());
}

std::map<double, double> tau_sweep(std::span<const std::string> predictions,
                                   std::span<const std::string> ground_truths, const std::vector<double>& taus) {
  if (taus.empty()) throw InputError("tau_sweep: no thresholds given");
  if (predictions.size() != ground_truths.size()) throw InputError("tau_sweep: length mismatch");
  // Similarities once, thresholds after: the sweep is monotone by construction.
  std::vector<double> sims(predictions.size());
  for (std::size_t i = 0; i < sims.size(); ++i)
    sims[i] = string_similarity(normalize_text(predictions[i]), normalize_text(ground_truths[i]));
  std::map<double, double> out;
  for (double tau : taus) {
    if (sims.empty()) {
      out[tau] = 0.0;
      continue;
    }
    const auto n = std::count_if(sims.begin(), sims.end(), [&](double s) { return s > tau; });
    out[tau] = static_cast<double>(n) / static_cast<double>(sims.size());
  }
  return out;
}

AnswerClass classify_answer(std::string_view text, const EvalConfig& config) {
  return parse_answer(text, config.taxonomy).label;
}

F1Report f1_report(std::span<const AnswerClass> predictions, std::span<const AnswerClass> ground_truths,
                   const ClassTaxonomy& taxonomy) {
  if (predictions.size() != ground_truths.size())
    throw InputError("f1: " + std::to_string(predictions.size()) + " predictions for " +
                     std::to_string(ground_truths.size()) + " ground truths");
  const std::size_t n = taxonomy.size();
  F1Report r;
  for (const auto& c : taxonomy.classes()) r.confusion.labels.push_back(c.label);
  r.confusion.counts.assign(n, std::vector<std::size_t>(n + 1, 0));
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto g = taxonomy.index_of(ground_truths[i]);
    if (!g) throw InputError("f1: ground truth '" + ground_truths[i].token() + "' is not a known class");
    const auto p = taxonomy.index_of(predictions[i]);
    r.confusion.counts[*g][p ? *p : n] += 1;
  }
  std::size_t total = 0;
  for (std::size_t c = 0; c < n; ++c) {
    ClassScores s;
    s.label = r.confusion.labels[c];
    std::size_t predicted = 0;
    for (std::size_t g = 0; g < n; ++g) predicted += r.confusion.counts[g][c];
    for (std::size_t p = 0; p <= n; ++p) s.support += r.confusion.counts[c][p];
    const double tp = static_cast<double>(r.confusion.counts[c][c]);
    s.precision = predicted ? tp / static_cast<double>(predicted) : 0.0;
    s.recall = s.support ? tp / static_cast<double>(s.support) : 0.0;
    s.f1 = (s.precision + s.recall) > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    total += s.support;
    r.per_class.push_back(s);
  }
  for (const auto& s : r.per_class) {
    r.macro_f1 += s.f1 / static_cast<double>(n);
    if (total) r.weighted_f1 += s.f1 * static_cast<double>(s.support) / static_cast<double>(total);
  }
  return r;
}

double macro_f1(std::span<const AnswerClass> predictions, std::span<const AnswerClass> ground_truths,
                const ClassTaxonomy& taxonomy) {
  return f1_report(predictions, ground_truths, taxonomy).macro_f1;
}

double weighted_f1(std::span<const AnswerClass> predictions, std::span<const AnswerClass> ground_truths,
                   const ClassTaxonomy& taxonomy) {
  return f1_report(predictions, ground_truths, taxonomy).weighted_f1;
}

Interval bootstrap_ci(std::span<const int> correct, int samples, std::uint64_t seed) {
  if (correct.empty()) throw InputError("bootstrap_ci: empty input");
  if (samples < 1) throw InputError("bootstrap_ci: samples must be >= 1");
  const auto n = correct.size();
  std::vector<double> means(static_cast<std::size_t>(samples));
  for (std::size_t b = 0; b < means.size(); ++b) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(b)));
    long hits = 0;
    for (std::size_t i = 0; i < n; ++i) hits += correct[rng.below(n)] ? 1 : 0;
    means[b] = static_cast<double>(hits) / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  // Nearest rank: the ceil(p * B)-th smallest value, p in permille.
  const auto B = means.size();
  auto rank = [&](std::size_t permille) {
    const std::size_t r = (permille * B + 999) / 1000;
    return means[std::clamp<std::size_t>(r, 1, B) - 1];
  };
  return {rank(25), rank(975)};
}

AnswerClass effective_class(const QuestionTrace& trace, const EvalConfig& config) {
  if (trace.failed()) return AnswerClass::unparsed();
  const auto& pred = trace.answer.predicted_class;
  if (pred != trace.question.ground_truth_class) return pred;
  const double sim = string_similarity(normalize_text(trace.answer.judgment_clause),
                                       normalize_text(trace.question.ground_truth_text));
  return sim > config.tau ? pred : AnswerClass::unparsed();
}

BucketMetrics bucket_metrics(const std::string& name, std::span<const QuestionTrace> traces,
                             const EvalConfig& config) {
  BucketMetrics m;
  m.bucket = name;
  m.n = traces.size();
  std::vector<std::string> preds, gts;
  std::vector<AnswerClass> pc, gc;
  for (const auto& t : traces) {
    preds.push_back(t.failed() ? std::string() : t.answer.judgment_clause);
    gts.push_back(t.question.ground_truth_text);
    pc.push_back(effective_class(t, config));
    gc.push_back(t.question.ground_truth_class);
  }
  m.em_at_tau = em_at_tau(preds, gts, config.tau);
  if (!traces.empty()) {
    const auto f = f1_report(pc, gc, config.taxonomy);
    m.macro_f1 = f.macro_f1;
    m.weighted_f1 = f.weighted_f1;
  }
  return m;
}

ConsistencyStats consistency_breakdown(std::span<const QuestionTrace> traces, const EvalConfig& config) {
  ConsistencyStats s;
  std::vector<QuestionTrace> yes, no;
  for (const auto& t : traces) {
    if (t.failed()) continue;
    (t.answer.consistent ? yes : no).push_back(t);
  }
  s.consistent = yes.size();
  s.inconsistent = no.size();
  const auto answered = yes.size() + no.size();
  s.inconsistency_ratio = answered ? static_cast<double>(no.size()) / static_cast<double>(answered) : 0.0;
  s.buckets.push_back(bucket_metrics("overall", traces, config));
  s.buckets.push_back(bucket_metrics("consistent", yes, config));
  s.buckets.push_back(bucket_metrics("inconsistent", no, config));
  return s;
}

std::vector<LatencyRow> latency_report(std::span<const QuestionTrace> traces) {
  std::vector<LatencyRow> rows;
  for (const auto& t : traces) {
    if (t.failed()) continue;
    const auto method = t.retrieval_method + "/" + t.reasoning_method;
    auto it = std::find_if(rows.begin(), rows.end(), [&](const LatencyRow& r) { return r.method == method; });
    if (it == rows.end()) {
      rows.push_back({method});
      it = std::prev(rows.end());
    }
    it->n += 1;
    it->retrieval_s += t.latency.retrieval_s;
    it->captioning_s += t.latency.captioning_s;
    it->reasoning_s += t.latency.reasoning_s;
    it->total_s += t.latency.total_s;
  }
  for (auto& r : rows) {
    const auto n = static_cast<double>(r.n);
    r.retrieval_s /= n;
    r.captioning_s /= n;
    r.reasoning_s /= n;
    r.total_s /= n;
  }
  return rows;
}

EvalReport evaluate(std::span<const QuestionTrace> traces, const EvalConfig& config,
                    const std::vector<double>& taus) {
  config.validate();
  EvalReport r;
  r.tau = config.tau;
  r.n_questions = traces.size();
  if (traces.empty()) {
    r.warnings.push_back("empty evaluation set; metrics reported as 0");
    r.consistency = consistency_breakdown(traces, config);
    return r;
  }
  std::vector<std::string> preds, gts;
  std::vector<AnswerClass> pc, gc;
  std::vector<int> correct;
  for (const auto& t : traces) {
    if (t.failed()) r.n_failed += 1;
    preds.push_back(t.failed() ? std::string() : t.answer.judgment_clause);
    gts.push_back(t.question.ground_truth_text);
    pc.push_back(effective_class(t, config));
    gc.push_back(t.question.ground_truth_class);
  }
  for (bool hit : em_correct(preds, gts, config.tau)) correct.push_back(hit ? 1 : 0);
  r.em_at_tau = em_at_tau(preds, gts, config.tau);
  auto f = f1_report(pc, gc, config.taxonomy);
  r.macro_f1 = f.macro_f1;
  r.weighted_f1 = f.weighted_f1;
  r.per_class = std::move(f.per_class);
  r.confusion = std::move(f.confusion);
  r.ci95 = bootstrap_ci(correct, config.bootstrap_samples, derive_seed(config.seed, "bootstrap"));
  r.tau_sweep = tau_sweep(preds, gts, taus);
  r.consistency = consistency_breakdown(traces, config);
  r.latency = latency_report(traces);
  if (r.n_failed) r.warnings.push_back(std::to_string(r.n_failed) + " question(s) failed and count as wrong");
  return r;
}

}  // namespace egoqa
