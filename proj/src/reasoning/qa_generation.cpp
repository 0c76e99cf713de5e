#include <algorithm>

#include "egoqa/errors.hpp"
#include "egoqa/reasoning.hpp"

namespace egoqa {

std::vector<QaPair> generate_qa_pairs(const Frame& previous, const Frame& current, const ReasoningContext& ctx) {
  for (const Frame* f : {&previous, &current}) {
    if (f->image.empty()) throw InputError("frame " + f->id + " has no image");
  }
  ChatMessage msg;
  msg.parts.push_back(ContentPart::make_text(ctx.prompts.get("generate_qa").render({})));
  msg.parts.push_back(ContentPart::make_image(previous.image.load(), previous.image.mime()));
  msg.parts.push_back(ContentPart::make_image(current.image.load(), current.image.mime()));
  ChatRequest req;
  req.model_id = ctx.settings.model_id;
  req.messages.push_back(std::move(msg));
  req.temperature = ctx.settings.temperature;
  // Ten pairs need more room than a single answer.
  req.max_tokens = std::max(ctx.settings.max_tokens, 1024);
  req.request_tag = RequestTag{}.set("prev", previous.id).set("cur", current.id).set("generate_qa").str();
  const auto resp = ctx.provider.send(req);
  return parse_qa_pairs(resp.text, 10, ctx.taxonomy);
}

}  // namespace egoqa
