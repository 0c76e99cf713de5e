#include <cstdio>

#include "egoqa/digest.hpp"
#include "egoqa/errors.hpp"
#include "egoqa/gateway.hpp"

namespace egoqa {

using nlohmann::ordered_json;

std::string_view to_string(Role r) {
  switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

ContentPart ContentPart::make_text(std::string text) {
  ContentPart p;
  p.kind = Kind::Text;
  p.text = std::move(text);
  return p;
}

ContentPart ContentPart::make_image(std::shared_ptr<const std::string> bytes, std::string mime) {
  ContentPart p;
  p.kind = Kind::Image;
  p.image = std::move(bytes);
  p.mime = std::move(mime);
  return p;
}

void ChatRequest::validate() const {
  bool has_user = false;
  for (const auto& m : messages) {
    if (m.role == Role::User) has_user = true;
    for (const auto& p : m.parts) {
      if (p.is_image() && m.role != Role::User)
        throw InputError("chat request: image parts are only allowed in user messages");
      if (p.is_image() && (!p.image || p.image->empty()))
        throw DegenerateInputError("chat request: empty image part");
    }
  }
  if (!has_user) throw InputError("chat request: needs at least one user message");
  if (temperature < 0.0) throw InputError("chat request: temperature must be >= 0");
  if (max_tokens < 1) throw InputError("chat request: max_tokens must be >= 1");
}

std::string ChatRequest::joined_text() const {
  std::string out;
  for (const auto& m : messages) {
    for (const auto& p : m.parts) {
      if (p.is_image()) continue;
      if (!out.empty()) out.push_back('\n');
      out += p.text;
    }
  }
  return out;
}

std::size_t ChatRequest::image_count() const {
  std::size_t n = 0;
  for (const auto& m : messages)
    for (const auto& p : m.parts) n += p.is_image() ? 1 : 0;
  return n;
}

std::string encode_image(std::string_view bytes, std::string_view mime) {
  if (bytes.empty()) throw DegenerateInputError("encode_image: empty payload");
  std::string out = "data:";
  out += mime;
  out += ";base64,";
  out += base64_encode(bytes);
  return out;
}

std::string serialize_request(const ChatRequest& request) {
  ordered_json messages = ordered_json::array();
  for (const auto& m : request.messages) {
    ordered_json content = ordered_json::array();
    for (const auto& p : m.parts) {
      ordered_json part;
      if (p.is_image()) {
        part["type"] = "image_url";
        part["image_url"] = {{"url", encode_image(*p.image, p.mime)}};
      } else {
        part["type"] = "text";
        part["text"] = p.text;
      }
      content.push_back(std::move(part));
    }
    ordered_json msg;
    msg["role"] = to_string(m.role);
    msg["content"] = std::move(content);
    messages.push_back(std::move(msg));
  }
  ordered_json body;
  body["model"] = request.model_id;
  body["messages"] = std::move(messages);
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_tokens;
  return body.dump();
}

std::string request_fingerprint(const ChatRequest& request) {
  std::string canon;
  canon += "model\x1f" + request.model_id + "\x1e";
  char temp[64];
  std::snprintf(temp, sizeof temp, "%.17g", request.temperature);
  canon += "temperature\x1f";
  canon += temp;
  canon += "\x1e";
  for (const auto& m : request.messages) {
    canon += "role\x1f";
    canon += to_string(m.role);
    canon += "\x1e";
    for (const auto& p : m.parts) {
      if (p.is_image()) {
        canon += "image\x1f" + p.mime + "\x1f" + sha256_hex(*p.image) + "\x1e";
      } else {
        canon += "text\x1f" + std::to_string(p.text.size()) + "\x1f" + p.text + "\x1e";
      }
    }
  }
  return sha256_hex(canon).substr(0, 16);
}

ChatResponse decode_response(std::string_view body) {
  ChatResponse r;
  try {
    const auto j = nlohmann::json::parse(body);
    const auto& content = j.at("choices").at(0).at("message").at("content");
    if (content.is_string()) {
      r.text = content.get<std::string>();
    } else if (content.is_array()) {
      for (const auto& part : content) {
        if (part.value("type", "") == "text") r.text += part.at("text").get<std::string>();
      }
    } else if (!content.is_null()) {
      throw DecodeError("response content has unexpected type");
    }
    if (j.contains("usage") && j["usage"].is_object()) {
      TokenUsage u;
      u.prompt = j["usage"].value("prompt_tokens", 0L);
      u.completion = j["usage"].value("completion_tokens", 0L);
      r.usage = u;
    }
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(std::string("malformed chat response: ") + e.what());
  }
  return r;
}

}  // namespace egoqa
