#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "egoqa/gateway.hpp"
#include "egoqa/retrieval.hpp"
#include "egoqa/trajectory.hpp"

namespace egoqa {

// Joint image/text embedding space. Implementations must be safe for
// concurrent calls.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::size_t dimension() = 0;
  virtual std::string model_name() = 0;
  virtual std::vector<double> embed_image(std::string_view bytes) = 0;
  virtual std::vector<double> embed_text(std::string_view text) = 0;
};

// Deterministic stub: 8 values derived from a SHA-256 of the payload. Equal
// payloads give equal vectors; text and image inputs hash alike.
class HashEmbeddingProvider final : public EmbeddingProvider {
 public:
  static constexpr std::size_t kDimension = 8;
  std::size_t dimension() override { return kDimension; }
  std::string model_name() override { return "hash-stub-8"; }
  std::vector<double> embed_image(std::string_view bytes) override;
  std::vector<double> embed_text(std::string_view text) override;
};

// Client for the embedding sidecar: POST {base}/embed, GET {base}/health.
class SidecarEmbeddingClient final : public EmbeddingProvider {
 public:
  SidecarEmbeddingClient(std::string base_url, double timeout_s = 30.0);
  std::size_t dimension() override;
  std::string model_name() override;
  std::vector<double> embed_image(std::string_view bytes) override;
  std::vector<double> embed_text(std::string_view text) override;

 private:
  void fetch_health();
  std::vector<double> embed(std::string_view kind, const std::string& payload);

  std::string base_url_;
  double timeout_s_;
  std::mutex mu_;
  std::size_t dimension_ = 0;
  std::string model_name_;
};

// Memoizes embeddings by content digest so repeated runs reuse vectors.
class CachingEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit CachingEmbeddingProvider(std::shared_ptr<EmbeddingProvider> inner) : inner_(std::move(inner)) {}
  std::size_t dimension() override { return inner_->dimension(); }
  std::string model_name() override { return inner_->model_name(); }
  std::vector<double> embed_image(std::string_view bytes) override;
  std::vector<double> embed_text(std::string_view text) override;
  std::size_t cache_size() const;

 private:
  std::vector<double> lookup(const std::string& key, const std::function<std::vector<double>()>& compute);

  std::shared_ptr<EmbeddingProvider> inner_;
  mutable std::mutex mu_;
  std::map<std::string, std::vector<double>> cache_;
};

struct ModelSettings {
  std::string model_id = "gpt-4o";
  double temperature = 0.0;
  int max_tokens = 512;
};

// Captions frames through a chat model. Captions are cached by image digest,
// so a frame is captioned at most once per captioner and re-runs are stable.
class FrameCaptioner {
 public:
  FrameCaptioner(ModelProvider& provider, ModelSettings settings, std::string instruction);

  // tag_prefix is prepended to the request tag ("...;frame=<id>;caption").
  std::string caption(const Frame& frame, const std::string& tag_prefix = "");
  std::size_t calls_made() const;

 private:
  ModelProvider& provider_;
  ModelSettings settings_;
  std::string instruction_;
  mutable std::mutex mu_;
  std::map<std::string, std::string> cache_;
  std::size_t calls_ = 0;
};

struct ParallelOptions {
  std::size_t parallelism = 4;
};

// Ranks history frames by cosine similarity to the current frame's embedding
// and keeps the k best, returned chronologically. Ties go to earlier frames.
RetrievalResult embedding_retrieve_image(const FrameHistory& history, const Frame& current, std::size_t k,
                                         EmbeddingProvider& provider, ParallelOptions options = {});

struct CaptionRetrieval {
  std::vector<std::string> captions;  // aligned with frames.selected
  RetrievalResult frames;
};

// Captions every history frame, ranks captions by cosine similarity to the
// question text embedding, keeps the k best (chronological order).
CaptionRetrieval embedding_retrieve_caption(const FrameHistory& history, const Question& question,
                                            std::size_t k, EmbeddingProvider& provider,
                                            FrameCaptioner& captioner, ParallelOptions options = {},
                                            const std::string& tag_prefix = "");

}  // namespace egoqa
