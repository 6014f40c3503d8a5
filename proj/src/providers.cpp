#include "storypipe/providers.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <thread>

#include "storypipe/errors.hpp"
#include "storypipe/guidelines.hpp"
#include "storypipe/mock_world.hpp"
#include "storypipe/util.hpp"

// Transport adapter for http-backed providers lives at the bottom of this
// file; everything above is backend-independent plumbing.
#define CPPHTTPLIB_NO_EXCEPTIONS
#include <httplib.h>

namespace storypipe::providers {

using ojson = nlohmann::ordered_json;

std::string RequestContext::key() const {
  std::string stage_token = stage;
  if (!item.empty()) stage_token += "[" + item + "]";
  return stage_token + "/" + role + "/" + std::to_string(iteration) + "/" +
         std::to_string(candidate);
}

RequestContext context_from(const PromptSpec& request) {
  RequestContext ctx;
  auto get = [&request](const char* key) -> std::string {
    auto it = request.metadata.find(key);
    return it == request.metadata.end() ? std::string() : it->second;
  };
  ctx.stage = get("_stage");
  ctx.role = get("_role");
  ctx.item = get("_item");
  std::string iteration = get("_iteration");
  std::string candidate = get("_candidate");
  ctx.iteration = iteration.empty() ? 1 : std::stoi(iteration);
  ctx.candidate = candidate.empty() ? 0 : std::stoi(candidate);
  return ctx;
}

void stamp_context(PromptSpec& request, const RequestContext& ctx) {
  request.metadata["_stage"] = ctx.stage;
  request.metadata["_role"] = ctx.role;
  if (!ctx.item.empty()) request.metadata["_item"] = ctx.item;
  request.metadata["_iteration"] = std::to_string(ctx.iteration);
  request.metadata["_candidate"] = std::to_string(ctx.candidate);
}

namespace {

double json_number(const std::string& text) {
  ojson value = ojson::parse(text, nullptr, false);
  if (value.is_discarded() || !value.is_number()) {
    throw SchemaError("expected a numeric string, got '" + text + "'");
  }
  return value.get<double>();
}

ScenarioEntry entry_from_json(const ojson& node, const std::string& key) {
  if (!node.is_object()) throw SchemaError("scenario entry '" + key + "' must be an object");
  ScenarioEntry entry;
  for (auto it = node.begin(); it != node.end(); ++it) {
    const std::string& field = it.key();
    if (field == "text") {
      entry.text = it->get<std::string>();
    } else if (field == "asset_id") {
      entry.asset_id = it->get<std::string>();
    } else if (field == "asset_kind") {
      entry.asset_kind = it->get<std::string>();
    } else if (field == "duration_seconds") {
      entry.duration_seconds = it->get<double>();
    } else if (field == "defect") {
      entry.defect = it->get<std::string>();
    } else if (field == "scores") {
      for (auto s = it->begin(); s != it->end(); ++s) {
        entry.scores[s.key()] = s->get<double>();
      }
    } else if (field == "verdict") {
      entry.verdict = it->get<std::string>();
    } else if (field == "fail") {
      entry.fail = it->get<std::string>();
    } else {
      throw SchemaError("scenario entry '" + key + "' has unknown field '" + field + "'");
    }
  }
  return entry;
}

}  // namespace

MockScenario MockScenario::parse(std::string_view json_text) {
  ojson doc = ojson::parse(json_text, nullptr, false);
  if (doc.is_discarded()) throw SchemaError("scenario file is not valid JSON");
  if (!doc.is_object()) throw SchemaError("scenario document must be an object");
  MockScenario scenario;
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const std::string& key = it.key();
    if (key == "schema_version") {
      if (!it->is_number_integer() || it->get<int>() != 1) {
        throw SchemaError("scenario has unsupported schema_version");
      }
    } else if (key == "mode") {
      scenario.mode = it->get<std::string>();
      if (scenario.mode != "loose" && scenario.mode != "strict") {
        throw SchemaError("scenario mode must be 'loose' or 'strict'");
      }
    } else if (key == "cooperative") {
      scenario.cooperative = it->get<bool>();
    } else if (key == "subtitle_refiner_policy") {
      scenario.subtitle_refiner_policy = it->get<std::string>();
    } else if (key == "characters") {
      scenario.default_character_count = it->get<int>();
    } else if (key == "defects") {
      for (auto d = it->begin(); d != it->end(); ++d) {
        const std::string& field = d.key();
        if (field == "shot_element_omission") scenario.defects.shot_element_omission = d->get<double>();
        else if (field == "voice_plan_defect") scenario.defects.voice_plan_defect = d->get<double>();
        else if (field == "oversized_subtitle") scenario.defects.oversized_subtitle = d->get<double>();
        else if (field == "naturalness_defect") scenario.defects.naturalness_defect = d->get<double>();
        else if (field == "script_defect_rule") scenario.defects.script_defect_rule = d->get<std::string>();
        else throw SchemaError("scenario defects has unknown field '" + field + "'");
      }
    } else if (key == "entries") {
      for (auto e = it->begin(); e != it->end(); ++e) {
        scenario.entries[e.key()] = entry_from_json(*e, e.key());
      }
    } else {
      throw SchemaError("scenario document has unknown key '" + key + "'");
    }
  }
  return scenario;
}

MockScenario MockScenario::load(const std::filesystem::path& path) {
  return parse(util::read_file(path));
}

std::string MockScenario::serialize() const {
  ojson doc;
  doc["schema_version"] = 1;
  doc["mode"] = mode;
  doc["cooperative"] = cooperative;
  doc["subtitle_refiner_policy"] = subtitle_refiner_policy;
  doc["characters"] = default_character_count;
  ojson defects_node;
  defects_node["shot_element_omission"] = defects.shot_element_omission;
  defects_node["voice_plan_defect"] = defects.voice_plan_defect;
  defects_node["oversized_subtitle"] = defects.oversized_subtitle;
  defects_node["naturalness_defect"] = defects.naturalness_defect;
  if (defects.script_defect_rule) defects_node["script_defect_rule"] = *defects.script_defect_rule;
  doc["defects"] = std::move(defects_node);
  ojson entries_node = ojson::object();
  for (const auto& [key, entry] : entries) {
    ojson node = ojson::object();
    if (entry.text) node["text"] = *entry.text;
    if (entry.asset_id) node["asset_id"] = *entry.asset_id;
    if (entry.asset_kind) node["asset_kind"] = *entry.asset_kind;
    if (entry.duration_seconds) node["duration_seconds"] = *entry.duration_seconds;
    if (entry.defect) node["defect"] = *entry.defect;
    if (!entry.scores.empty()) {
      ojson scores = ojson::object();
      for (const auto& [axis, value] : entry.scores) scores[axis] = value;
      node["scores"] = std::move(scores);
    }
    if (entry.verdict) node["verdict"] = *entry.verdict;
    if (entry.fail) node["fail"] = *entry.fail;
    entries_node[key] = std::move(node);
  }
  doc["entries"] = std::move(entries_node);
  return doc.dump(2) + "\n";
}

const ScenarioEntry* MockScenario::find(const RequestContext& ctx) const {
  auto exact = entries.find(ctx.key());
  if (exact != entries.end()) return &exact->second;
  if (!ctx.item.empty()) {
    RequestContext bare = ctx;
    bare.item.clear();
    auto fallback = entries.find(bare.key());
    if (fallback != entries.end()) return &fallback->second;
  }
  return nullptr;
}

void CallLog::append(CallRecord record) {
  std::lock_guard<std::mutex> lock(mutex_);
  record.id = "call-" + util::zero_pad(static_cast<int>(++counter_), 6);
  if (path_) {
    ojson line;
    line["id"] = record.id;
    line["key"] = record.key;
    line["request_digest"] = record.request_digest;
    line["response_digest"] = record.response_digest;
    line["latency_ms"] = record.latency_ms;
    std::ofstream out(*path_, std::ios::app);
    out << line.dump() << "\n";
  }
  records_.push_back(std::move(record));
}

std::vector<CallRecord> CallLog::records() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return records_;
}

namespace {

std::string request_digest(const PromptSpec& request) {
  ojson doc;
  doc["kind"] = request.kind;
  doc["body"] = request.body;
  doc["attachments"] = ojson::array();
  for (const AssetRef& ref : request.attachments) doc["attachments"].push_back(ref.id);
  doc["metadata"] = ojson::object();
  for (const auto& [key, value] : request.metadata) doc["metadata"][key] = value;
  return "sha256:" + util::sha256_hex(doc.dump());
}

std::string response_digest(const ProviderResponse& response) {
  ojson doc;
  doc["text"] = response.text;
  doc["asset_id"] = response.asset ? response.asset->id : "";
  doc["metadata"] = ojson::object();
  for (const auto& [key, value] : response.metadata) doc["metadata"][key] = value;
  return "sha256:" + util::sha256_hex(doc.dump());
}

ProviderError::Kind error_kind(const std::string& token) {
  if (token == "timeout") return ProviderError::Kind::timeout;
  if (token == "malformed-response") return ProviderError::Kind::malformed_response;
  if (token == "refused") return ProviderError::Kind::refused;
  return ProviderError::Kind::unavailable;
}

AssetRef make_asset(const std::string& kind, const std::string& bytes,
                    std::optional<double> duration, const std::optional<std::string>& id_override) {
  AssetRef ref;
  ref.kind = kind;
  ref.id = id_override ? *id_override : "sha256:" + util::sha256_hex(bytes);
  ref.duration_seconds = duration;
  return ref;
}

std::vector<std::string> split_csv(const std::string& joined) {
  std::vector<std::string> out;
  size_t start = 0;
  while (start <= joined.size()) {
    size_t comma = joined.find(',', start);
    std::string token =
        joined.substr(start, comma == std::string::npos ? comma : comma - start);
    if (!token.empty()) out.push_back(std::move(token));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

double metadata_number(const PromptSpec& request, const char* key, double fallback) {
  auto it = request.metadata.find(key);
  if (it == request.metadata.end()) return fallback;
  return json_number(it->second);
}

ProviderResponse invoke_mock(const ProviderDescriptor& descriptor, const MockScenario& scenario,
                             const MockWorldConfig& world, const PromptSpec& request,
                             uint64_t seed) {
  RequestContext ctx = context_from(request);
  const ScenarioEntry* entry = scenario.find(ctx);
  if (!entry && scenario.mode == "strict") {
    throw MissingScenarioEntry("no scenario entry for key '" + ctx.key() + "'");
  }
  if (entry && entry->fail) {
    throw ProviderError(error_kind(*entry->fail),
                        "scenario directs '" + ctx.key() + "' to fail: " + *entry->fail);
  }
  std::set<std::string> fixes = mockworld::parse_fixes(request);

  ProviderResponse response;
  if (ctx.role == "refiner") {
    if (ctx.stage == "audio_fit") {
      double clip = metadata_number(request, "_clip_seconds", world.clip_seconds);
      response.text = entry && entry->text
                          ? *entry->text
                          : mockworld::shorten_subtitle(scenario.subtitle_refiner_policy,
                                                        request.body, clip, world.slack_seconds,
                                                        world.speech_rate_wpm);
    } else {
      response.text = entry && entry->text ? *entry->text
                                           : mockworld::make_refined_body(request, ctx.iteration);
    }
    return response;
  }

  if (ctx.role == "evaluator") {
    auto axes_meta = request.metadata.find("_axes");
    std::vector<std::string> axes =
        axes_meta == request.metadata.end() ? std::vector<std::string>{}
                                            : split_csv(axes_meta->second);
    auto quality = request.metadata.find("_quality");
    std::map<std::string, double> scores = mockworld::evaluate_scores(
        world, ctx, axes, quality == request.metadata.end() ? "" : quality->second);
    if (entry) {
      for (const auto& [axis, value] : entry->scores) scores[axis] = value;
    }
    for (const auto& [axis, value] : scores) {
      response.metadata["score:" + axis] = ojson(value).dump();
    }
    if (entry && entry->verdict) response.metadata["verdict"] = *entry->verdict;
    return response;
  }

  if (ctx.role.rfind("examiner", 0) == 0 || ctx.role == "alignment") {
    response.metadata["verdict"] = entry && entry->verdict ? *entry->verdict : "approve";
    if (entry) {
      for (const auto& [axis, value] : entry->scores) {
        response.metadata["score:" + axis] = ojson(value).dump();
      }
    }
    return response;
  }

  // Generator roles, dispatched by stage and request kind.
  if (ctx.stage == "script") {
    response.text = entry && entry->text ? *entry->text
                                         : mockworld::make_script_text(world, scenario, fixes);
    return response;
  }
  if (ctx.stage == "shot_design") {
    response.text = entry && entry->text ? *entry->text
                                         : mockworld::make_designs_text(world, scenario, fixes);
    return response;
  }
  if (ctx.stage == "voice") {
    response.text = entry && entry->text
                        ? *entry->text
                        : mockworld::make_voice_plan_text(world, scenario, fixes);
    return response;
  }
  if (request.kind == "t2a") {
    double duration = entry && entry->duration_seconds
                          ? *entry->duration_seconds
                          : guidelines::estimate_speech_seconds(request.body,
                                                                world.speech_rate_wpm);
    uint64_t payload_seed = util::derive_seed(
        world.run_seed, {"audio", ctx.stage, ctx.item, std::to_string(ctx.iteration)});
    response.asset_bytes = mockworld::make_audio_bytes(payload_seed, duration);
    response.asset = make_asset("audio", response.asset_bytes, duration,
                                entry ? entry->asset_id : std::nullopt);
    return response;
  }
  if (request.kind == "t2i") {
    uint64_t payload_seed = util::derive_seed(
        world.run_seed, {"image", ctx.stage, ctx.item, std::to_string(ctx.iteration),
                         std::to_string(ctx.candidate), descriptor.id});
    response.asset_bytes = mockworld::make_image_bytes(payload_seed);
    response.asset = make_asset("image", response.asset_bytes, std::nullopt,
                                entry ? entry->asset_id : std::nullopt);
    bool injected = entry && entry->defect && *entry->defect == "naturalness";
    bool rolled = ctx.stage == "keyframes" &&
                  mockworld::defect_roll(world, "naturalness", ctx.item,
                                         scenario.defects.naturalness_defect);
    if (injected || (rolled && !(scenario.cooperative &&
                                 mockworld::has_fix(fixes, "naturalness")))) {
      response.metadata["quality"] = "low-naturalness";
    }
    return response;
  }
  if (request.kind == "i2v") {
    double duration =
        entry && entry->duration_seconds ? *entry->duration_seconds : world.clip_seconds;
    uint64_t payload_seed = util::derive_seed(
        world.run_seed, {"video", ctx.stage, ctx.item, std::to_string(ctx.iteration),
                         std::to_string(ctx.candidate), descriptor.id});
    response.asset_bytes = mockworld::make_video_bytes(payload_seed, duration);
    response.asset = make_asset("video", response.asset_bytes, duration,
                                entry ? entry->asset_id : std::nullopt);
    return response;
  }

  // Generic text capability (e.g. caption generation).
  if (entry && entry->text) {
    response.text = *entry->text;
  } else {
    response.text = request.body;
  }
  (void)seed;
  return response;
}

struct Endpoint {
  std::string host_port;  // scheme://host:port
  std::string path;
};

Endpoint split_endpoint(const std::string& url) {
  size_t scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("endpoint must be a full URL: " + url);
  size_t path_start = url.find('/', scheme + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

ProviderResponse parse_http_body(const std::string& body) {
  ojson doc = ojson::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw ProviderError(ProviderError::Kind::malformed_response,
                        "provider returned a non-JSON body");
  }
  ProviderResponse response;
  if (doc.contains("text")) response.text = doc["text"].get<std::string>();
  if (doc.contains("asset")) {
    const ojson& node = doc["asset"];
    if (!node.is_object() || !node.contains("kind")) {
      throw ProviderError(ProviderError::Kind::malformed_response,
                          "provider asset block is malformed");
    }
    if (node.contains("bytes_base64")) {
      response.asset_bytes = util::base64_decode(node["bytes_base64"].get<std::string>());
    }
    std::optional<double> duration;
    if (node.contains("duration_seconds")) duration = node["duration_seconds"].get<double>();
    std::optional<std::string> id_override;
    if (node.contains("id")) id_override = node["id"].get<std::string>();
    response.asset = make_asset(node["kind"].get<std::string>(), response.asset_bytes, duration,
                                id_override);
  }
  if (doc.contains("scores")) {
    for (auto it = doc["scores"].begin(); it != doc["scores"].end(); ++it) {
      response.metadata["score:" + it.key()] = ojson(it->get<double>()).dump();
    }
  }
  if (doc.contains("verdict")) response.metadata["verdict"] = doc["verdict"].get<std::string>();
  if (!doc.contains("text") && !doc.contains("asset") && !doc.contains("scores") &&
      !doc.contains("verdict")) {
    throw ProviderError(ProviderError::Kind::malformed_response,
                        "provider response carries neither text, asset, scores, nor verdict");
  }
  return response;
}

int config_int(const ProviderDescriptor& descriptor, const char* key, int fallback) {
  auto it = descriptor.config.find(key);
  return it == descriptor.config.end() ? fallback : std::stoi(it->second);
}

ProviderResponse invoke_http(const ProviderDescriptor& descriptor, const PromptSpec& request,
                             uint64_t seed) {
  auto endpoint_it = descriptor.config.find("endpoint");
  if (endpoint_it == descriptor.config.end()) {
    throw ConfigError("http provider '" + descriptor.id + "' has no endpoint");
  }
  Endpoint endpoint = split_endpoint(endpoint_it->second);
  int timeout_ms = config_int(descriptor, "timeout_ms", 5000);
  int retries = config_int(descriptor, "retries", 3);
  int backoff_base_ms = config_int(descriptor, "backoff_base_ms", 1000);

  ojson payload;
  payload["kind"] = request.kind;
  payload["body"] = request.body;
  payload["attachments"] = ojson::array();
  for (const AssetRef& ref : request.attachments) {
    ojson node;
    node["id"] = ref.id;
    node["kind"] = ref.kind;
    if (ref.duration_seconds) node["duration_seconds"] = *ref.duration_seconds;
    payload["attachments"].push_back(std::move(node));
  }
  payload["metadata"] = ojson::object();
  for (const auto& [key, value] : request.metadata) payload["metadata"][key] = value;
  payload["seed"] = seed;
  std::string body = payload.dump();

  httplib::Client client(endpoint.host_port);
  client.set_connection_timeout(0, timeout_ms * 1000);
  client.set_read_timeout(timeout_ms / 1000, (timeout_ms % 1000) * 1000);

  for (int attempt = 0; attempt <= retries; ++attempt) {
    if (attempt > 0) {
      double jitter =
          0.5 + 0.5 * util::unit_interval(util::derive_seed(seed, {"retry", std::to_string(attempt)}));
      auto delay = std::chrono::milliseconds(
          static_cast<int64_t>(backoff_base_ms * (1 << (attempt - 1)) * jitter));
      std::this_thread::sleep_for(delay);
    }
    httplib::Result result = client.Post(endpoint.path, body, "application/json");
    if (!result) continue;  // transport failure: retry
    if (result->status < 200 || result->status >= 300) {
      throw ProviderError(ProviderError::Kind::refused,
                          "provider '" + descriptor.id + "' answered HTTP " +
                              std::to_string(result->status));
    }
    return parse_http_body(result->body);
  }
  throw ProviderError(ProviderError::Kind::timeout,
                      "provider '" + descriptor.id + "' unreachable after " +
                          std::to_string(retries + 1) + " attempts");
}

}  // namespace

ProviderResponse invoke(const ProviderDescriptor& descriptor, const MockScenario& scenario,
                        const MockWorldConfig& world, const PromptSpec& request, uint64_t seed) {
  validate_prompt_spec(request);
  if (descriptor.backend == "mock") return invoke_mock(descriptor, scenario, world, request, seed);
  if (descriptor.backend == "http") return invoke_http(descriptor, request, seed);
  throw ConfigError("provider '" + descriptor.id + "' has unknown backend '" +
                    descriptor.backend + "'");
}

ProviderHub::ProviderHub(std::vector<ProviderDescriptor> descriptors, MockScenario scenario,
                         MockWorldConfig world, CallLog* log)
    : descriptors_(std::move(descriptors)),
      scenario_(std::move(scenario)),
      world_(std::move(world)),
      log_(log) {
  std::set<std::string> ids;
  std::map<std::string, std::set<int>> orders;
  for (const ProviderDescriptor& d : descriptors_) {
    if (!ids.insert(d.id).second) throw ConfigError("duplicate provider id '" + d.id + "'");
    if (!orders[d.capability].insert(d.pool_order).second) {
      throw ConfigError("duplicate pool_order " + std::to_string(d.pool_order) +
                        " within capability '" + d.capability + "'");
    }
  }
}

const ProviderDescriptor& ProviderHub::descriptor(const std::string& id) const {
  for (const ProviderDescriptor& d : descriptors_) {
    if (d.id == id) return d;
  }
  throw ConfigError("no provider with id '" + id + "'");
}

std::vector<ProviderDescriptor> ProviderHub::pool(const std::string& capability) const {
  std::vector<ProviderDescriptor> members;
  for (const ProviderDescriptor& d : descriptors_) {
    if (d.capability == capability) members.push_back(d);
  }
  std::sort(members.begin(), members.end(),
            [](const ProviderDescriptor& a, const ProviderDescriptor& b) {
              return a.pool_order < b.pool_order;
            });
  return members;
}

ProviderResponse ProviderHub::call(const std::string& provider_id, const PromptSpec& request,
                                   uint64_t seed) {
  const ProviderDescriptor& d = descriptor(provider_id);
  RequestContext ctx = context_from(request);
  auto start = std::chrono::steady_clock::now();
  auto elapsed_ms = [&start]() {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
        .count();
  };
  try {
    ProviderResponse response = invoke(d, scenario_, world_, request, seed);
    if (log_) {
      log_->append({"", provider_id + " " + ctx.key(), request_digest(request),
                    response_digest(response), elapsed_ms()});
    }
    return response;
  } catch (const Error& e) {
    if (log_) {
      log_->append({"", provider_id + " " + ctx.key(), request_digest(request),
                    "error:" + std::string(e.what()), elapsed_ms()});
    }
    throw;
  }
}

AssetRef ProviderHub::train_adapter(const std::string& provider_id,
                                    const std::vector<AssetRef>& images,
                                    const std::vector<std::string>& captions,
                                    const std::vector<std::string>& image_payloads, uint64_t seed,
                                    std::string* adapter_payload_out) {
  if (images.empty() || images.size() != captions.size()) {
    throw LengthMismatch("adapter training needs matching non-empty images and captions; got " +
                         std::to_string(images.size()) + " images and " +
                         std::to_string(captions.size()) + " captions");
  }
  const ProviderDescriptor& d = descriptor(provider_id);
  (void)image_payloads;

  if (d.backend == "mock") {
    ojson manifest;
    manifest["type"] = "adapter-stub";
    manifest["image_hashes"] = ojson::array();
    for (const AssetRef& ref : images) manifest["image_hashes"].push_back(ref.id);
    manifest["caption_hashes"] = ojson::array();
    for (const std::string& caption : captions) {
      manifest["caption_hashes"].push_back("sha256:" + util::sha256_hex(caption));
    }
    std::string payload = manifest.dump(2) + "\n";
    AssetRef adapter;
    adapter.kind = "model-adapter";
    adapter.id = "sha256:" + util::sha256_hex(payload);
    if (adapter_payload_out) *adapter_payload_out = payload;
    if (log_) {
      PromptSpec pseudo;
      pseudo.kind = "text";
      pseudo.body = "train adapter over " + std::to_string(images.size()) + " frames";
      RequestContext ctx{"characters", "adapter", "", 1, 0};
      stamp_context(pseudo, ctx);
      log_->append({"", provider_id + " " + ctx.key(), request_digest(pseudo),
                    "sha256:" + util::sha256_hex(payload), 0.0});
    }
    return adapter;
  }

  // http: submit the job, then poll until the service reports completion.
  auto endpoint_it = d.config.find("endpoint");
  if (endpoint_it == d.config.end()) {
    throw ConfigError("adapter provider '" + d.id + "' has no endpoint");
  }
  Endpoint endpoint = split_endpoint(endpoint_it->second);
  httplib::Client client(endpoint.host_port);
  int timeout_ms = config_int(d, "timeout_ms", 5000);
  client.set_read_timeout(timeout_ms / 1000, (timeout_ms % 1000) * 1000);
  ojson payload;
  payload["images"] = ojson::array();
  for (const AssetRef& ref : images) payload["images"].push_back(ref.id);
  payload["captions"] = captions;
  payload["seed"] = seed;
  httplib::Result result = client.Post(endpoint.path, payload.dump(), "application/json");
  if (!result) {
    throw ProviderError(ProviderError::Kind::timeout,
                        "adapter provider '" + d.id + "' unreachable");
  }
  ojson doc = ojson::parse(result->body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw ProviderError(ProviderError::Kind::malformed_response,
                        "adapter provider returned a non-JSON body");
  }
  int poll_ms = config_int(d, "poll_ms", 100);
  int poll_limit = config_int(d, "poll_limit", 50);
  for (int polls = 0; doc.value("status", "done") == "pending"; ++polls) {
    if (polls >= poll_limit) {
      throw ProviderError(ProviderError::Kind::timeout, "adapter training never completed");
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(poll_ms));
    std::string job = doc.value("job", "");
    httplib::Result poll = client.Get((endpoint.path + "/" + job).c_str());
    if (!poll) {
      throw ProviderError(ProviderError::Kind::timeout, "adapter poll unreachable");
    }
    doc = ojson::parse(poll->body, nullptr, false);
    if (doc.is_discarded()) {
      throw ProviderError(ProviderError::Kind::malformed_response, "adapter poll body invalid");
    }
  }
  if (!doc.contains("asset") || !doc["asset"].is_object()) {
    throw ProviderError(ProviderError::Kind::malformed_response,
                        "adapter response lacks an asset block");
  }
  const ojson& node = doc["asset"];
  AssetRef adapter;
  adapter.kind = "model-adapter";
  adapter.id = node.value("id", "");
  if (adapter_payload_out && node.contains("bytes_base64")) {
    *adapter_payload_out = util::base64_decode(node["bytes_base64"].get<std::string>());
  }
  return adapter;
}

Feedback mock_examiner(const MockScenario& scenario, const RequestContext& ctx,
                       const ProviderResponse& artifact, const GuidelineSet& guide,
                       const ExaminerEnv& env) {
  const ScenarioEntry* entry = scenario.find(ctx);
  if (!entry && scenario.mode == "strict") {
    throw MissingScenarioEntry("no scenario entry for examiner key '" + ctx.key() + "'");
  }
  Feedback feedback;
  feedback.reviewer_id = guide.id + "-reviewer";

  if (entry && (entry->verdict || !entry->scores.empty())) {
    feedback.scores = entry->scores;
    feedback.approve = entry->verdict && *entry->verdict == "approve";
    validate_feedback(feedback);
    return feedback;
  }

  std::vector<Finding> findings;
  if (guide.id == "structure") {
    findings = guidelines::check_structure(parse_script(artifact.text));
  } else if (guide.id == "content") {
    guidelines::CheckConfig config;
    config.conjunction_markers = env.conjunction_markers;
    config.fine_detail_denylist = env.fine_detail_denylist;
    findings = guidelines::check_content(parse_script(artifact.text), config);
  } else if (guide.id == "style") {
    findings = guidelines::check_style(parse_script(artifact.text), env.n_expected);
  } else if (guide.id == "shot") {
    for (const ShotDesign& design : parse_shot_designs(artifact.text)) {
      for (Finding& f : guidelines::check_shot_design(design)) findings.push_back(std::move(f));
    }
    guidelines::sort_findings(findings);
  } else if (guide.id == "voice") {
    findings = guidelines::check_voice_plan(parse_voice_plan(artifact.text), env.music_catalog,
                                            env.emotion_vocab);
  } else {
    throw ConfigError("no rule-backed examiner for guide '" + guide.id + "'");
  }
  feedback.findings = std::move(findings);
  feedback.approve = feedback.findings.empty();
  return feedback;
}

}  // namespace storypipe::providers
