#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

#include "egoqa/eval.hpp"

namespace egoqa {

namespace {

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

void record(std::ostream& out, const std::string& metric, const std::string& bucket, const nlohmann::json& value) {
  nlohmann::ordered_json j;
  j["metric"] = metric;
  j["bucket"] = bucket;
  j["value"] = value;
  out << j.dump() << '\n';
}

}  // namespace

std::string format_latency_table(const std::vector<LatencyRow>& rows) {
  std::ostringstream out;
  out << pad("method", 28) << pad("n", 6) << pad("retrieval_s", 14) << pad("captioning_s", 14)
      << pad("reasoning_s", 14) << "total_s\n";
  for (const auto& r : rows) {
    out << pad(r.method, 28) << pad(std::to_string(r.n), 6) << pad(fixed(r.retrieval_s), 14)
        << pad(fixed(r.captioning_s), 14) << pad(fixed(r.reasoning_s), 14) << fixed(r.total_s) << '\n';
  }
  return out.str();
}

std::string format_report(const EvalReport& r) {
  std::ostringstream out;
  out << "questions: " << r.n_questions << " (failed: " << r.n_failed << ")\n";
  out << "EM@" << fixed(r.tau, 2) << ": " << fixed(r.em_at_tau) << "  CI95 [" << fixed(r.ci95.lo) << ", "
      << fixed(r.ci95.hi) << "]\n";
  out << "macro-F1: " << fixed(r.macro_f1) << "  weighted-F1: " << fixed(r.weighted_f1) << "\n\n";

  out << pad("class", 16) << pad("precision", 12) << pad("recall", 12) << pad("f1", 12) << "support\n";
  for (const auto& c : r.per_class) {
    out << pad(c.label.token(), 16) << pad(fixed(c.precision), 12) << pad(fixed(c.recall), 12)
        << pad(fixed(c.f1), 12) << c.support << '\n';
  }

  out << "\nconfusion (rows: truth, columns: prediction)\n" << pad("", 16);
  for (const auto& l : r.confusion.labels) out << pad(l.token(), 16);
  out << "unparsed\n";
  for (std::size_t g = 0; g < r.confusion.counts.size(); ++g) {
    out << pad(r.confusion.labels[g].token(), 16);
    for (std::size_t p = 0; p < r.confusion.counts[g].size(); ++p) {
      const auto cell = std::to_string(r.confusion.counts[g][p]);
      out << (p + 1 < r.confusion.counts[g].size() ? pad(cell, 16) : cell);
    }
    out << '\n';
  }

  out << "\ntau sweep\n";
  for (const auto& [tau, em] : r.tau_sweep) out << "  EM@" << fixed(tau, 2) << " = " << fixed(em) << '\n';

  out << "\nconsistency: " << r.consistency.consistent << " consistent, " << r.consistency.inconsistent
      << " inconsistent (ratio " << fixed(r.consistency.inconsistency_ratio) << ")\n";
  out << pad("bucket", 16) << pad("n", 6) << pad("EM", 10) << pad("macro-F1", 10) << "weighted-F1\n";
  for (const auto& b : r.consistency.buckets) {
    out << pad(b.bucket, 16) << pad(std::to_string(b.n), 6) << pad(fixed(b.em_at_tau), 10)
        << pad(fixed(b.macro_f1), 10) << fixed(b.weighted_f1) << '\n';
  }

  out << "\nlatency (mean seconds per question)\n" << format_latency_table(r.latency);
  for (const auto& w : r.warnings) out << "warning: " << w << '\n';
  return out.str();
}

void write_report_records(const EvalReport& r, std::ostream& out) {
  record(out, "n_questions", "overall", r.n_questions);
  record(out, "n_failed", "overall", r.n_failed);
  record(out, "em_at_tau", "overall", r.em_at_tau);
  record(out, "tau", "overall", r.tau);
  record(out, "macro_f1", "overall", r.macro_f1);
  record(out, "weighted_f1", "overall", r.weighted_f1);
  record(out, "ci95_lo", "overall", r.ci95.lo);
  record(out, "ci95_hi", "overall", r.ci95.hi);
  for (const auto& c : r.per_class) {
    record(out, "precision", c.label.token(), c.precision);
    record(out, "recall", c.label.token(), c.recall);
    record(out, "f1", c.label.token(), c.f1);
    record(out, "support", c.label.token(), c.support);
  }
  nlohmann::json grid = nlohmann::json::array();
  for (const auto& row : r.confusion.counts) grid.push_back(row);
  record(out, "confusion", "overall", grid);
  for (const auto& [tau, em] : r.tau_sweep) {
    char name[32];
    std::snprintf(name, sizeof name, "em_at_%.2f", tau);
    record(out, name, "tau_sweep", em);
  }
  record(out, "consistent", "overall", r.consistency.consistent);
  record(out, "inconsistent", "overall", r.consistency.inconsistent);
  record(out, "inconsistency_ratio", "overall", r.consistency.inconsistency_ratio);
  for (const auto& b : r.consistency.buckets) {
    const auto bucket = "consistency/" + b.bucket;
    record(out, "n", bucket, b.n);
    record(out, "em_at_tau", bucket, b.em_at_tau);
    record(out, "macro_f1", bucket, b.macro_f1);
    record(out, "weighted_f1", bucket, b.weighted_f1);
  }
  for (const auto& l : r.latency) {
    const auto bucket = "latency/" + l.method;
    record(out, "n", bucket, l.n);
    record(out, "retrieval_s", bucket, l.retrieval_s);
    record(out, "captioning_s", bucket, l.captioning_s);
    record(out, "reasoning_s", bucket, l.reasoning_s);
    record(out, "total_s", bucket, l.total_s);
  }
  for (const auto& w : r.warnings) record(out, "warning", "overall", w);
}

}  // namespace egoqa
