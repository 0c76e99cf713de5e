#include "egoqa/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <set>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "common/jsonl.hpp"
#include "common/parallel.hpp"
#include "egoqa/embedding.hpp"
#include "egoqa/errors.hpp"
#include "egoqa/eval.hpp"
#include "egoqa/reasoning.hpp"
#include "egoqa/rng.hpp"
#include "egoqa/synthetic.hpp"

namespace egoqa {

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

// Raw command-line values; only options actually given override the config.
struct Flags {
  std::string config;
  std::uint64_t seed = 0;
  std::string provider;
  std::string script;
  std::string record_script;
  std::string retrieval;
  std::string reasoning;
  std::size_t k = 3;
  double tau = 0.8;
  std::size_t parallel = 4;
  std::string out;
  std::string data;
  std::string prompts;
  bool zero_shot = false;
  std::string sidecar;
  std::string trace;
  double duration = 60.0;
  int objects = 10;
  int disappear = 4;
  std::vector<std::string> methods;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string provider = "http";
  std::string script;
  std::string record_script;
  RetrievalMethod retrieval = RetrievalMethod::Hierarchical;
  ReasoningMethod reasoning = ReasoningMethod::ObjChangeVR;
  RetrievalConfig retrieval_config;
  CotScOptions cot_sc;
  EvalConfig eval;
  std::size_t parallel = 4;
  fs::path out = "out";
  fs::path data = ".";
  GatewayConfig gateway;
  std::string sidecar_url;
  std::string prompts_dir;
  bool zero_shot = false;

  ojson to_json() const {
    ojson j;
    j["seed"] = seed;
    j["provider"] = provider;
    j["script"] = script;
    j["retrieval"] = to_string(retrieval);
    j["reasoning"] = to_string(reasoning);
    j["k"] = retrieval_config.k;
    j["tau"] = eval.tau;
    j["parallel"] = parallel;
    j["out"] = out.string();
    j["data"] = data.string();
    j["prompts_dir"] = prompts_dir;
    j["zero_shot"] = zero_shot;
    j["sidecar_url"] = sidecar_url;
    j["retrieval_config"] = {{"alpha", retrieval_config.alpha}, {"beta", retrieval_config.beta},
                             {"min_o", retrieval_config.min_o}, {"cap_o", retrieval_config.cap_o},
                             {"min_p", retrieval_config.min_p}, {"cap_p", retrieval_config.cap_p},
                             {"w_p", retrieval_config.w_p},     {"w_o", retrieval_config.w_o}};
    j["cot_sc"] = {{"samples", cot_sc.samples}, {"temperature", cot_sc.temperature}};
    j["eval"] = {{"bootstrap_samples", eval.bootstrap_samples}};
    j["gateway"] = gateway.to_json();
    return j;
  }
};

const std::vector<std::string> kProviders = {"http", "scripted", "oracle"};

void check_provider(const std::string& p) {
  if (std::find(kProviders.begin(), kProviders.end(), p) == kProviders.end())
    throw ConfigError("unknown provider '" + p + "' (expected http, scripted or oracle)");
}

void apply_env(RunConfig& c) {
  auto env = [](const char* name) -> std::optional<std::string> {
    const char* v = std::getenv(name);
    if (v == nullptr || *v == '\0') return std::nullopt;
    return std::string(v);
  };
  if (auto v = env("EGOQA_PROVIDER")) c.provider = *v;
  if (auto v = env("EGOQA_SEED")) {
    try {
      c.seed = std::stoull(*v);
    } catch (const std::exception&) {
      throw ConfigError("EGOQA_SEED is not an integer: " + *v);
    }
  }
  if (auto v = env("EGOQA_BASE_URL")) c.gateway.base_url = *v;
  if (auto v = env("EGOQA_MODEL")) c.gateway.model_id = *v;
  if (auto v = env("EGOQA_SIDECAR_URL")) c.sidecar_url = *v;
}

void apply_config_file(RunConfig& c, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("bad config " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config " + path.string() + " is not a JSON object");
  static const std::set<std::string> known = {"seed",        "provider",   "script",   "retrieval", "reasoning",
                                              "k",           "tau",        "parallel", "out",       "data",
                                              "prompts_dir", "zero_shot",  "sidecar_url", "retrieval_config",
                                              "cot_sc",      "eval",       "gateway"};
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown config key '" + key + "' in " + path.string());
  }
  try {
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("provider")) c.provider = j["provider"].get<std::string>();
    if (j.contains("script")) c.script = j["script"].get<std::string>();
    if (j.contains("retrieval")) c.retrieval = parse_retrieval_method(j["retrieval"].get<std::string>());
    if (j.contains("reasoning")) c.reasoning = parse_reasoning_method(j["reasoning"].get<std::string>());
    if (j.contains("k")) c.retrieval_config.k = j["k"].get<std::size_t>();
    if (j.contains("tau")) c.eval.tau = j["tau"].get<double>();
    if (j.contains("parallel")) c.parallel = j["parallel"].get<std::size_t>();
    if (j.contains("out")) c.out = j["out"].get<std::string>();
    if (j.contains("data")) c.data = j["data"].get<std::string>();
    if (j.contains("prompts_dir")) c.prompts_dir = j["prompts_dir"].get<std::string>();
    if (j.contains("zero_shot")) c.zero_shot = j["zero_shot"].get<bool>();
    if (j.contains("sidecar_url")) c.sidecar_url = j["sidecar_url"].get<std::string>();
    if (j.contains("retrieval_config")) {
      const auto& r = j["retrieval_config"];
      auto& rc = c.retrieval_config;
      rc.alpha = r.value("alpha", rc.alpha);
      rc.beta = r.value("beta", rc.beta);
      rc.min_o = r.value("min_o", rc.min_o);
      rc.cap_o = r.value("cap_o", rc.cap_o);
      rc.min_p = r.value("min_p", rc.min_p);
      rc.cap_p = r.value("cap_p", rc.cap_p);
      rc.w_p = r.value("w_p", rc.w_p);
      rc.w_o = r.value("w_o", rc.w_o);
    }
    if (j.contains("cot_sc")) {
      c.cot_sc.samples = j["cot_sc"].value("samples", c.cot_sc.samples);
      c.cot_sc.temperature = j["cot_sc"].value("temperature", c.cot_sc.temperature);
    }
    if (j.contains("eval")) c.eval.bootstrap_samples = j["eval"].value("bootstrap_samples", c.eval.bootstrap_samples);
    if (j.contains("gateway")) c.gateway = GatewayConfig::from_json(j["gateway"], c.gateway);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad value in config " + path.string() + ": " + e.what());
  }
}

// Shared options, registered on every subcommand.
struct SharedOptions {
  CLI::Option* config = nullptr;
  CLI::Option* seed = nullptr;
  CLI::Option* provider = nullptr;
  CLI::Option* script = nullptr;
  CLI::Option* retrieval = nullptr;
  CLI::Option* reasoning = nullptr;
  CLI::Option* k = nullptr;
  CLI::Option* tau = nullptr;
  CLI::Option* parallel = nullptr;
  CLI::Option* out = nullptr;
  CLI::Option* data = nullptr;
  CLI::Option* prompts = nullptr;
  CLI::Option* zero_shot = nullptr;
  CLI::Option* sidecar = nullptr;
};

SharedOptions add_shared(CLI::App& cmd, Flags& f) {
  SharedOptions o;
  o.config = cmd.add_option("--config", f.config, "JSON config file");
  o.seed = cmd.add_option("--seed", f.seed, "root seed");
  o.provider = cmd.add_option("--provider", f.provider, "http, scripted or oracle");
  o.script = cmd.add_option("--script", f.script, "scripted responses, JSON {fingerprint: text}");
  o.retrieval = cmd.add_option("--retrieval", f.retrieval, "hierarchical, viewpoint, image_embed, caption_embed");
  o.reasoning = cmd.add_option("--reasoning", f.reasoning, "objchangevr, cot_sc, single_pass");
  o.k = cmd.add_option("--k", f.k, "retrieved frames per question");
  o.tau = cmd.add_option("--tau", f.tau, "EM similarity threshold");
  o.parallel = cmd.add_option("--parallel", f.parallel, "questions in flight");
  o.out = cmd.add_option("--out", f.out, "output directory");
  o.data = cmd.add_option("--data", f.data, "dataset directory (poses.jsonl, frames.jsonl, images/, questions.jsonl)");
  o.prompts = cmd.add_option("--prompts", f.prompts, "directory overriding prompt templates");
  o.zero_shot = cmd.add_flag("--zero-shot", f.zero_shot, "drop few-shot exemplars");
  o.sidecar = cmd.add_option("--sidecar", f.sidecar, "embedding sidecar base URL");
  return o;
}

RunConfig resolve(const Flags& f, const SharedOptions& o) {
  RunConfig c;
  apply_env(c);
  if (o.config->count()) apply_config_file(c, f.config);
  if (o.seed->count()) c.seed = f.seed;
  if (o.provider->count()) c.provider = f.provider;
  if (o.script->count()) c.script = f.script;
  if (o.retrieval->count()) c.retrieval = parse_retrieval_method(f.retrieval);
  if (o.reasoning->count()) c.reasoning = parse_reasoning_method(f.reasoning);
  if (o.k->count()) c.retrieval_config.k = f.k;
  if (o.tau->count()) c.eval.tau = f.tau;
  if (o.parallel->count()) c.parallel = f.parallel;
  if (o.out->count()) c.out = f.out;
  if (o.data->count()) c.data = f.data;
  if (o.prompts->count()) c.prompts_dir = f.prompts;
  if (o.zero_shot->count()) c.zero_shot = f.zero_shot;
  if (o.sidecar->count()) c.sidecar_url = f.sidecar;
  c.record_script = f.record_script;
  check_provider(c.provider);
  if (c.parallel < 1) throw ConfigError("--parallel must be >= 1");
  c.eval.seed = c.seed;
  c.cot_sc.seed = derive_seed(c.seed, "cot_sc");
  c.eval.validate();
  c.retrieval_config.validate();
  return c;
}

struct Dataset {
  FrameHistory history;
  std::size_t pose_count = 0;
  std::vector<Question> questions;
};

Dataset load_dataset(const fs::path& dir, const ClassTaxonomy& taxonomy) {
  Dataset d;
  d.history = load_trajectory(dir / "poses.jsonl", dir / "frames.jsonl", dir / "images");
  d.pose_count = load_pose_track(dir / "poses.jsonl").size();
  d.questions = load_questions(dir / "questions.jsonl", d.history, taxonomy);
  for (const auto& q : d.questions) {
    if (parse_answer(q.ground_truth_text, taxonomy).label.is_unparsed())
      throw DatasetError("question " + q.id + ": ground truth text '" + q.ground_truth_text +
                         "' does not name a class");
  }
  return d;
}

// Records every exchange as {fingerprint: text} for later scripted runs.
class RecordingProvider final : public ModelProvider {
 public:
  explicit RecordingProvider(ModelProvider& inner) : inner_(inner) {}
  ChatResponse send(const ChatRequest& request) override {
    auto resp = inner_.send(request);
    std::lock_guard lock(mu_);
    script_[request_fingerprint(request)] = resp.text;
    return resp;
  }
  void save(const fs::path& path) const {
    std::lock_guard lock(mu_);
    auto out = detail::open_for_write(path);
    out << nlohmann::json(script_).dump(2) << '\n';
  }

 private:
  ModelProvider& inner_;
  mutable std::mutex mu_;
  std::map<std::string, std::string> script_;
};

// Provider, clock and retrieval services for one run.
struct Backends {
  std::unique_ptr<ModelProvider> provider;
  std::unique_ptr<RecordingProvider> recorder;
  std::shared_ptr<Clock> clock;
  std::shared_ptr<EmbeddingProvider> embeddings;
  std::unique_ptr<FrameCaptioner> captioner;
  PromptLibrary prompts;

  ModelProvider& active() { return recorder ? static_cast<ModelProvider&>(*recorder) : *provider; }
};

Backends make_backends(const RunConfig& c, const Dataset& d, RetrievalMethod retrieval, bool wall_clock,
                       std::ostream& err) {
  Backends b;
  if (c.provider == "oracle") {
    b.provider = geometric_oracle_provider(SyntheticWorld::load(c.data / "world.json"), d.history);
  } else if (c.provider == "scripted") {
    if (c.script.empty()) throw ConfigError("--provider scripted needs --script");
    b.provider = std::make_unique<ScriptedProvider>(ScriptedProvider::from_file(c.script));
  } else {
    b.provider = make_http_provider(c.gateway);
  }
  if (!c.record_script.empty()) b.recorder = std::make_unique<RecordingProvider>(*b.provider);
  // Mock runs use a clock that never moves, so traces are reproducible.
  if (wall_clock || c.provider == "http") {
    b.clock = std::make_shared<SystemClock>();
  } else {
    b.clock = std::make_shared<VirtualClock>();
  }
  b.prompts = c.prompts_dir.empty() ? PromptLibrary::builtin() : PromptLibrary::from_directory(c.prompts_dir);
  if (c.zero_shot) b.prompts = b.prompts.zero_shot();

  if (retrieval == RetrievalMethod::ImageEmbed || retrieval == RetrievalMethod::CaptionEmbed) {
    if (!c.sidecar_url.empty()) {
      b.embeddings = std::make_shared<CachingEmbeddingProvider>(std::make_shared<SidecarEmbeddingClient>(c.sidecar_url));
    } else {
      err << "note: no embedding sidecar configured; using hash stub embeddings\n";
      b.embeddings = std::make_shared<HashEmbeddingProvider>();
    }
  }
  return b;
}

ModelSettings model_settings(const RunConfig& c) {
  ModelSettings s;
  s.model_id = c.gateway.model_id;
  return s;
}

// Answers all questions with up to `parallel` in flight. Traces reach `sink`
// in question order as soon as their predecessors are done.
std::vector<QuestionTrace> run_questions(const Dataset& d, const PipelineConfig& pipeline, const RunConfig& c,
                                         Backends& b, RetrievalMethod retrieval,
                                         const std::function<void(const QuestionTrace&)>& sink) {
  ReasoningContext ctx{b.active(), b.prompts, c.eval.taxonomy, model_settings(c), c.parallel};
  if (retrieval == RetrievalMethod::CaptionEmbed) {
    b.captioner = std::make_unique<FrameCaptioner>(b.active(), model_settings(c),
                                                   b.prompts.get("caption").render({}));
  }
  PipelineServices services{b.embeddings.get(), b.captioner.get(), b.clock.get()};

  const auto n = d.questions.size();
  std::vector<QuestionTrace> traces(n);
  std::vector<bool> done(n, false);
  std::size_t next_out = 0;
  std::mutex mu;
  detail::parallel_for(n, c.parallel, [&](std::size_t i) {
    auto t = run_question(d.questions[i], d.history, pipeline, ctx, services);
    std::lock_guard lock(mu);
    traces[i] = std::move(t);
    done[i] = true;
    while (next_out < n && done[next_out]) sink(traces[next_out++]);
  });
  return traces;
}

PipelineConfig pipeline_for(const RunConfig& c, RetrievalMethod r, ReasoningMethod m) {
  PipelineConfig p;
  p.retrieval = r;
  p.reasoning = m;
  p.retrieval_config = c.retrieval_config;
  p.cot_sc = c.cot_sc;
  p.validate();
  return p;
}

void print_config(const RunConfig& c, std::ostream& err) { err << "effective config: " << c.to_json().dump() << '\n'; }

// ------------------------------------------------------------------ commands

int cmd_ingest(const RunConfig& c, std::ostream& out) {
  const auto d = load_dataset(c.data, c.eval.taxonomy);
  out << d.history.size() << " frames, " << d.pose_count << " poses, " << d.questions.size() << " questions\n";
  return kExitOk;
}

int cmd_answer(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const auto d = load_dataset(c.data, c.eval.taxonomy);
  const auto pipeline = pipeline_for(c, c.retrieval, c.reasoning);
  auto b = make_backends(c, d, c.retrieval, false, err);

  const auto trace_path = c.out / "trace.jsonl";
  auto trace_out = detail::open_for_write(trace_path);
  const auto traces = run_questions(d, pipeline, c, b, c.retrieval, [&](const QuestionTrace& t) {
    write_trace_line(t, trace_out);
    if (t.failed()) err << "question " << t.question.id << " failed: " << t.error << '\n';
  });
  trace_out.close();
  if (b.recorder) b.recorder->save(c.record_script);

  const auto report = evaluate(traces, c.eval);
  std::size_t failed = report.n_failed;
  char line[160];
  std::snprintf(line, sizeof line, "answered %zu/%zu questions\nEM@%.2f = %.4f\nmacro-F1 = %.4f\nweighted-F1 = %.4f\n",
                traces.size() - failed, traces.size(), report.tau, report.em_at_tau, report.macro_f1,
                report.weighted_f1);
  out << line << "trace: " << trace_path.string() << '\n';
  {
    auto summary = detail::open_for_write(c.out / "summary.jsonl");
    write_report_records(report, summary);
  }
  return failed ? kExitPartial : kExitOk;
}

int cmd_evaluate(const RunConfig& c, const std::string& trace_flag, std::ostream& out) {
  const fs::path trace_path = trace_flag.empty() ? c.out / "trace.jsonl" : fs::path(trace_flag);
  if (!fs::exists(trace_path)) throw InputError("trace file not found: " + trace_path.string());
  const auto traces = load_traces(trace_path, c.eval.taxonomy);
  const auto report = evaluate(traces, c.eval);
  const auto text = format_report(report);
  out << text;
  auto txt = detail::open_for_write(c.out / "report.txt");
  txt << text;
  auto records = detail::open_for_write(c.out / "report.jsonl");
  write_report_records(report, records);
  return kExitOk;
}

int cmd_synth(const RunConfig& c, const Flags& f, std::ostream& out) {
  const auto fx = generate_fixture(c.seed, f.duration, f.objects, f.disappear);
  write_fixture(fx, c.out);
  out << "wrote " << fx.trajectory.frames.size() << " frames, " << fx.trajectory.poses.size() << " poses, "
      << fx.questions.size() << " questions to " << c.out.string() << '\n';
  return kExitOk;
}

const std::vector<std::string> kBenchDefaults = {
    "caption_embed/single_pass", "image_embed/objchangevr", "viewpoint/objchangevr",
    "hierarchical/cot_sc",       "hierarchical/single_pass", "hierarchical/objchangevr"};

int cmd_bench(const RunConfig& c, const Flags& f, std::ostream& out, std::ostream& err) {
  const auto d = load_dataset(c.data, c.eval.taxonomy);
  const auto& methods = f.methods.empty() ? kBenchDefaults : f.methods;
  std::vector<std::pair<RetrievalMethod, ReasoningMethod>> parsed;
  for (const auto& m : methods) {
    const auto slash = m.find('/');
    if (slash == std::string::npos) throw ConfigError("method '" + m + "' is not <retrieval>/<reasoning>");
    parsed.emplace_back(parse_retrieval_method(m.substr(0, slash)), parse_reasoning_method(m.substr(slash + 1)));
    pipeline_for(c, parsed.back().first, parsed.back().second);
  }
  std::vector<LatencyRow> rows;
  std::size_t failed = 0;
  for (const auto& [r, m] : parsed) {
    auto b = make_backends(c, d, r, true, err);
    const auto traces = run_questions(d, pipeline_for(c, r, m), c, b, r, [](const QuestionTrace&) {});
    for (const auto& t : traces) {
      if (t.failed()) {
        ++failed;
        err << to_string(r) << "/" << to_string(m) << " question " << t.question.id << " failed: " << t.error
            << '\n';
      }
    }
    auto row = latency_report(traces);
    if (row.empty()) row.push_back({std::string(to_string(r)) + "/" + std::string(to_string(m))});
    rows.push_back(row.front());
  }
  out << format_latency_table(rows);
  auto records = detail::open_for_write(c.out / "latency.jsonl");
  for (const auto& r : rows) {
    ojson j;
    j["method"] = r.method;
    j["n"] = r.n;
    j["retrieval_s"] = r.retrieval_s;
    j["captioning_s"] = r.captioning_s;
    j["reasoning_s"] = r.reasoning_s;
    j["total_s"] = r.total_s;
    records << j.dump() << '\n';
  }
  return failed ? kExitPartial : kExitOk;
}

}  // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Object state change question answering over egocentric frame sequences", "egoqa"};
  app.require_subcommand(1);
  Flags f;

  auto* ingest = app.add_subcommand("ingest", "validate a trajectory and question set");
  auto* answer = app.add_subcommand("answer", "answer every question and write a trace");
  auto* evaluate_cmd = app.add_subcommand("evaluate", "score a trace file");
  auto* synth = app.add_subcommand("synth", "write a synthetic fixture directory");
  auto* bench = app.add_subcommand("bench-latency", "time retrieval and reasoning per method");

  std::map<CLI::App*, SharedOptions> shared;
  for (auto* cmd : {ingest, answer, evaluate_cmd, synth, bench}) shared[cmd] = add_shared(*cmd, f);
  answer->add_option("--record-script", f.record_script, "save every exchange as a script for --provider scripted");
  evaluate_cmd->add_option("--trace", f.trace, "trace file (default <out>/trace.jsonl)");
  synth->add_option("--duration", f.duration, "seconds")->check(CLI::PositiveNumber);
  synth->add_option("--objects", f.objects, "real objects")->check(CLI::NonNegativeNumber);
  synth->add_option("--disappear", f.disappear, "objects that vanish")->check(CLI::NonNegativeNumber);
  bench->add_option("--methods", f.methods, "<retrieval>/<reasoning> pairs")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  CLI::App* cmd = app.get_subcommands().front();
  try {
    const RunConfig c = resolve(f, shared.at(cmd));
    print_config(c, err);
    if (cmd == ingest) return cmd_ingest(c, out);
    if (cmd == answer) return cmd_answer(c, out, err);
    if (cmd == evaluate_cmd) return cmd_evaluate(c, f.trace, out);
    if (cmd == synth) return cmd_synth(c, f, out);
    return cmd_bench(c, f, out, err);
  } catch (const GatewayError& e) {
    // Only whole-run failures get here (bad credentials, unreachable sidecar).
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<std::string> storage;
  storage.reserve(args.size() + 1);
  storage.push_back("egoqa");
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  argv.push_back(nullptr);
  return run_cli(static_cast<int>(storage.size()), argv.data(), out, err);
}

}  // namespace egoqa
