#include "egoqa/embedding.hpp"

#include <cmath>

#include <httplib.h>

#include "../common/parallel.hpp"
#include "egoqa/digest.hpp"
#include "egoqa/errors.hpp"

namespace egoqa {

// ------------------------------------------------------------------ stub

namespace {

std::vector<double> hash_vector(std::string_view payload) {
  const auto hex = sha256_hex(payload);
  std::vector<double> v(HashEmbeddingProvider::kDimension);
  for (std::size_t i = 0; i < v.size(); ++i) {
    // 4 bytes of digest per component, mapped to [-1, 1].
    const auto word = std::stoul(hex.substr(i * 8, 8), nullptr, 16);
    v[i] = static_cast<double>(word) / 2147483647.5 - 1.0;
  }
  if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; })) v[0] = 1.0;
  return v;
}

}  // namespace

std::vector<double> HashEmbeddingProvider::embed_image(std::string_view bytes) { return hash_vector(bytes); }
std::vector<double> HashEmbeddingProvider::embed_text(std::string_view text) { return hash_vector(text); }

// ------------------------------------------------------------------ sidecar

SidecarEmbeddingClient::SidecarEmbeddingClient(std::string base_url, double timeout_s)
    : base_url_(std::move(base_url)), timeout_s_(timeout_s) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

namespace {

httplib::Client make_client(const std::string& base_url, double timeout_s) {
  httplib::Client client(base_url);
  const auto secs = static_cast<time_t>(timeout_s);
  client.set_connection_timeout(secs, 0);
  client.set_read_timeout(secs, 0);
  return client;
}

}  // namespace

void SidecarEmbeddingClient::fetch_health() {
  auto client = make_client(base_url_, timeout_s_);
  auto res = client.Get("/health");
  if (!res) throw GatewayError("embedding sidecar unreachable: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw GatewayError("embedding sidecar not ready (HTTP " + std::to_string(res->status) + ")");
  try {
    const auto j = nlohmann::json::parse(res->body);
    dimension_ = j.at("dimension").get<std::size_t>();
    model_name_ = j.at("model_name").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(std::string("bad /health body: ") + e.what());
  }
}

std::size_t SidecarEmbeddingClient::dimension() {
  std::lock_guard lock(mu_);
  if (dimension_ == 0) fetch_health();
  return dimension_;
}

std::string SidecarEmbeddingClient::model_name() {
  std::lock_guard lock(mu_);
  if (dimension_ == 0) fetch_health();
  return model_name_;
}

std::vector<double> SidecarEmbeddingClient::embed(std::string_view kind, const std::string& payload) {
  const std::size_t expected = dimension();
  auto client = make_client(base_url_, timeout_s_);
  const nlohmann::json body = {{"kind", kind}, {"payload", payload}};
  auto res = client.Post("/embed", body.dump(), "application/json");
  if (!res) throw GatewayError("embedding sidecar unreachable: " + httplib::to_string(res.error()));
  if (res->status != 200) {
    throw ProtocolError("embedding sidecar returned HTTP " + std::to_string(res->status) + ": " +
                            res->body.substr(0, 256),
                        res->status);
  }
  try {
    const auto j = nlohmann::json::parse(res->body);
    auto v = j.at("vector").get<std::vector<double>>();
    if (v.size() != expected)
      throw DecodeError("embedding has dimension " + std::to_string(v.size()) + ", expected " +
                        std::to_string(expected));
    return v;
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(std::string("bad /embed body: ") + e.what());
  }
}

std::vector<double> SidecarEmbeddingClient::embed_image(std::string_view bytes) {
  return embed("image", base64_encode(bytes));
}

std::vector<double> SidecarEmbeddingClient::embed_text(std::string_view text) {
  return embed("text", std::string(text));
}

// ------------------------------------------------------------------ caching

std::vector<double> CachingEmbeddingProvider::lookup(const std::string& key,
                                                     const std::function<std::vector<double>()>& compute) {
  {
    std::lock_guard lock(mu_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  auto v = compute();
  std::lock_guard lock(mu_);
  return cache_.emplace(key, std::move(v)).first->second;
}

std::vector<double> CachingEmbeddingProvider::embed_image(std::string_view bytes) {
  return lookup("image:" + sha256_hex(bytes), [&] { return inner_->embed_image(bytes); });
}

std::vector<double> CachingEmbeddingProvider::embed_text(std::string_view text) {
  return lookup("text:" + sha256_hex(text), [&] { return inner_->embed_text(text); });
}

std::size_t CachingEmbeddingProvider::cache_size() const {
  std::lock_guard lock(mu_);
  return cache_.size();
}

// ------------------------------------------------------------------ captions

FrameCaptioner::FrameCaptioner(ModelProvider& provider, ModelSettings settings, std::string instruction)
    : provider_(provider), settings_(std::move(settings)), instruction_(std::move(instruction)) {}

std::string FrameCaptioner::caption(const Frame& frame, const std::string& tag_prefix) {
  const auto bytes = frame.image.load();
  const auto key = sha256_hex(*bytes);
  {
    std::lock_guard lock(mu_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  ChatRequest req;
  req.model_id = settings_.model_id;
  req.temperature = settings_.temperature;
  req.max_tokens = settings_.max_tokens;
  req.request_tag = tag_prefix + "frame=" + frame.id + ";caption";
  ChatMessage msg;
  msg.parts.push_back(ContentPart::make_text(instruction_));
  msg.parts.push_back(ContentPart::make_image(bytes, frame.image.mime()));
  req.messages.push_back(std::move(msg));
  std::string text;
  try {
    text = provider_.send(req).text;
  } catch (const FrameGatewayError&) {
    throw;
  } catch (const std::exception& e) {
    throw FrameGatewayError(frame.id, std::string("captioning failed: ") + e.what());
  }
  std::lock_guard lock(mu_);
  ++calls_;
  return cache_.emplace(key, std::move(text)).first->second;
}

std::size_t FrameCaptioner::calls_made() const {
  std::lock_guard lock(mu_);
  return calls_;
}

// ------------------------------------------------------------------ retrieval

RetrievalResult embedding_retrieve_image(const FrameHistory& history, const Frame& current, std::size_t k,
                                         EmbeddingProvider& provider, ParallelOptions options) {
  if (k < 1) throw InputError("embedding_retrieve_image: k must be >= 1");
  detail::require_not_in_history(history, current);
  std::vector<double> query;
  try {
    query = provider.embed_image(*current.image.load());
  } catch (const std::exception& e) {
    throw FrameGatewayError(current.id, std::string("embedding failed: ") + e.what());
  }

  const std::size_t n = history.size();
  std::vector<double> sim(n);
  detail::parallel_for(n, options.parallelism, [&](std::size_t i) {
    std::vector<double> v;
    try {
      v = provider.embed_image(*history[i].image.load());
    } catch (const std::exception& e) {
      throw FrameGatewayError(history[i].id, std::string("embedding failed: ") + e.what());
    }
    sim[i] = cosine_similarity(query, v);
  });

  RetrievalResult result;
  result.diagnostics.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    result.diagnostics[i] = {history[i].id,
                             history[i].timestamp,
                             position_distance(history[i].pose, current.pose),
                             orientation_distance(history[i].pose, current.pose),
                             sim[i],
                             0};
  }
  for (auto i : detail::best_n_chronological(history, sim, k, /*higher_is_better=*/true)) {
    result.diagnostics[i].stage = 3;
    result.selected.push_back(history[i].id);
  }
  result.stage_sizes = {n, n, result.selected.size()};
  return result;
}

CaptionRetrieval embedding_retrieve_caption(const FrameHistory& history, const Question& question,
                                            std::size_t k, EmbeddingProvider& provider,
                                            FrameCaptioner& captioner, ParallelOptions options,
                                            const std::string& tag_prefix) {
  if (k < 1) throw InputError("embedding_retrieve_caption: k must be >= 1");
  const std::size_t n = history.size();
  std::vector<std::string> captions(n);
  detail::parallel_for(n, options.parallelism,
                       [&](std::size_t i) { captions[i] = captioner.caption(history[i], tag_prefix); });

  const auto query = provider.embed_text(question.text);
  std::vector<double> sim(n);
  detail::parallel_for(n, options.parallelism, [&](std::size_t i) {
    std::vector<double> v;
    try {
      v = provider.embed_text(captions[i]);
    } catch (const std::exception& e) {
      throw FrameGatewayError(history[i].id, std::string("caption embedding failed: ") + e.what());
    }
    sim[i] = cosine_similarity(query, v);
  });

  CaptionRetrieval out;
  auto& result = out.frames;
  result.diagnostics.resize(n);
  const Frame* current = history.find(question.current_frame_id);
  for (std::size_t i = 0; i < n; ++i) {
    result.diagnostics[i] = {history[i].id, history[i].timestamp, 0.0, 0.0, sim[i], 0};
    if (current != nullptr) {
      result.diagnostics[i].position_distance = position_distance(history[i].pose, current->pose);
      result.diagnostics[i].orientation_distance = orientation_distance(history[i].pose, current->pose);
    }
  }
  for (auto i : detail::best_n_chronological(history, sim, k, /*higher_is_better=*/true)) {
    result.diagnostics[i].stage = 3;
    result.selected.push_back(history[i].id);
    out.captions.push_back(captions[i]);
  }
  result.stage_sizes = {n, n, result.selected.size()};
  return out;
}

}  // namespace egoqa
