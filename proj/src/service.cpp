// Copyright 2026 The motret Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "motret/service.hpp"

#include <fstream>
#include <iostream>
#include <set>

#include <httplib.h>

#include "motret/errors.hpp"
#include "motret/pipeline.hpp"

namespace motret {

using nlohmann::json;

ServiceConfig service_config_from_json(const json& j,
                                       const std::filesystem::path& base_dir) {
  static const std::set<std::string> known{
      "motion_checkpoint", "text_checkpoint", "index",       "manifest",
      "host",              "port",            "default_k",   "max_query_length"};
  if (!j.is_object()) throw InvalidArgument("service config must be an object");
  for (const auto& [key, _] : j.items())
    if (!known.contains(key))
      throw InvalidArgument("unknown service config key '" + key + "'");

  ServiceConfig c;
  auto path = [&](const char* key, bool required) {
    if (!j.contains(key)) {
      if (required)
        throw InvalidArgument(std::string("service config needs '") + key + "'");
      return std::filesystem::path{};
    }
    std::filesystem::path p = j.at(key).get<std::string>();
    if (p.is_relative()) p = base_dir / p;
    if (!std::filesystem::exists(p))
      throw InvalidArgument(std::string(key) + " not found: " + p.string());
    return p;
  };
  try {
    c.motion_checkpoint = path("motion_checkpoint", true);
    c.text_checkpoint = path("text_checkpoint", true);
    c.index = path("index", true);
    c.manifest = path("manifest", false);
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    c.default_k = j.value("default_k", c.default_k);
    c.max_query_length = j.value("max_query_length", c.max_query_length);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("bad service config: ") + e.what());
  }
  if (c.default_k < 1) throw InvalidArgument("default_k must be >= 1");
  if (c.max_query_length < 1)
    throw InvalidArgument("max_query_length must be >= 1");
  return c;
}

ServiceConfig load_service_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open service config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidArgument("cannot parse " + path.string() + ": " + e.what());
  }
  return service_config_from_json(j, path.parent_path());
}

QueryService::QueryService(RetrievalModel model, TextInputSource text,
                           std::shared_ptr<const EmbeddingStore> index,
                           std::optional<DatasetManifest> manifest,
                           int default_k, int max_query_length)
    : model_(std::move(model)),
      text_(std::move(text)),
      index_(std::move(index)),
      manifest_(std::move(manifest)),
      default_k_(default_k),
      max_query_length_(max_query_length) {
  if (!text_.supports_free_text())
    throw InvalidArgument("the service needs a text path that accepts free text");
  const auto current = index_.current();
  if (!current->empty() && current->dim() != model_.config().d_common)
    throw ShapeError("index dimension " + std::to_string(current->dim()) +
                     " does not match the model's common space " +
                     std::to_string(model_.config().d_common));
  if (manifest_)
    for (const ManifestEntry& e : manifest_->entries)
      entries_[e.motion_id] = &e;
}

std::unique_ptr<QueryService> QueryService::from_config(const ServiceConfig& c) {
  LoadedModel loaded = load_model(c.motion_checkpoint, c.text_checkpoint);
  if (!loaded.text_source)
    throw InvalidArgument(
        "model was trained on precomputed text embeddings and cannot embed "
        "free-text queries");
  auto index =
      std::make_shared<const EmbeddingStore>(EmbeddingStore::load(c.index));
  std::optional<DatasetManifest> manifest;
  if (!c.manifest.empty()) manifest = load_manifest(c.manifest);
  return std::make_unique<QueryService>(
      std::move(loaded.model), std::move(*loaded.text_source), std::move(index),
      std::move(manifest), c.default_k, c.max_query_length);
}

namespace {

ServiceResponse error(int status, const std::string& message) {
  return {status, {{"error", message}}};
}

}  // namespace

ServiceResponse QueryService::query(const std::string& request_body) const {
  json req;
  try {
    req = json::parse(request_body);
  } catch (const json::exception&) {
    return error(400, "request body must be JSON");
  }
  if (!req.is_object() || !req.contains("text") || !req.at("text").is_string())
    return error(400, "request needs a string field 'text'");
  const std::string text = req.at("text").get<std::string>();
  if (static_cast<int>(text.size()) > max_query_length_)
    return error(400, "query longer than " + std::to_string(max_query_length_) +
                          " bytes");
  int k = default_k_;
  if (req.contains("k")) {
    if (!req.at("k").is_number_integer())
      return error(400, "'k' must be an integer");
    k = req.at("k").get<int>();
  }
  if (k < 1) return error(400, "'k' must be >= 1");

  RowVector q;
  try {
    q = encode_query(model_, text_, text);
  } catch (const InvalidArgument& e) {
    return error(400, e.what());
  }
  const auto index = index_.current();
  const RankedList ranked = knn_query(
      *index, std::span(q.data(), static_cast<std::size_t>(q.size())), k);
  json results = json::array();
  for (std::size_t i = 0; i < ranked.hits.size(); ++i)
    results.push_back({{"motion_id", ranked.hits[i].motion_id},
                       {"score", ranked.hits[i].score},
                       {"rank", i + 1}});
  return {200, {{"results", results}}};
}

ServiceResponse QueryService::motion(const std::string& motion_id) const {
  const auto it = entries_.find(motion_id);
  if (it == entries_.end())
    return error(404, "unknown motion '" + motion_id + "'");
  const SkeletonSequence seq = load_motion(manifest_->motion_path(*it->second),
                                           manifest_->topology, motion_id);
  json frames = json::array();
  for (int t = 0; t < seq.length(); ++t) {
    json joints = json::array();
    for (int j = 0; j < seq.joint_count(); ++j)
      joints.push_back({seq.at(t, j, 6), seq.at(t, j, 7), seq.at(t, j, 8)});
    frames.push_back(std::move(joints));
  }
  return {200, {{"motion_id", motion_id},
                {"fps", seq.fps},
                {"joints", std::move(frames)}}};
}

ServiceResponse QueryService::health() const {
  return {200, {{"status", "ok"}, {"index_size", index_.current()->size()}}};
}

void QueryService::replace_index(std::shared_ptr<const EmbeddingStore> next) {
  if (!next->empty() && next->dim() != model_.config().d_common)
    throw ShapeError("index dimension does not match the model");
  index_.replace(std::move(next));
}

void QueryService::attach(httplib::Server& server) const {
  auto reply = [](httplib::Response& res, const ServiceResponse& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
  server.Post("/query", [this, reply](const httplib::Request& req,
                                      httplib::Response& res) {
    reply(res, query(req.body));
  });
  server.Get(R"(/motions/([^/]+))", [this, reply](const httplib::Request& req,
                                                  httplib::Response& res) {
    reply(res, motion(req.matches[1]));
  });
  server.Get("/health", [this, reply](const httplib::Request&,
                                      httplib::Response& res) {
    reply(res, health());
  });
  server.set_exception_handler([](const httplib::Request&,
                                  httplib::Response& res, std::exception_ptr ep) {
    std::string message = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      message = e.what();
    } catch (...) {
    }
    res.status = 500;
    res.set_content(json{{"error", message}}.dump(), "application/json");
  });
}

void serve(const ServiceConfig& config) {
  const auto service = QueryService::from_config(config);
  httplib::Server server;
  service->attach(server);
  std::cerr << "serving " << service->health().body.at("index_size")
            << " motions on " << config.host << ":" << config.port << "\n";
  if (!server.listen(config.host, config.port))
    throw std::runtime_error("cannot listen on " + config.host + ":" +
                             std::to_string(config.port));
}

}  // namespace motret
