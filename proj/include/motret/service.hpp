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

#pragma once

// HTTP query service over a trained model and an index snapshot.
//
//   POST /query         {"text": str, "k": int?} -> {"results": [...]}
//   GET  /motions/{id}  {"motion_id", "fps", "joints": [frame][joint][xyz]}
//   GET  /health        {"status": "ok", "index_size": n}

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "motret/checkpoint.hpp"
#include "motret/motion_data.hpp"
#include "motret/retrieval_index.hpp"

namespace httplib {
class Server;
}

namespace motret {

struct ServiceConfig {
  std::filesystem::path motion_checkpoint;
  std::filesystem::path text_checkpoint;
  std::filesystem::path index;
  /// Dataset manifest used to serve motions for playback; optional.
  std::filesystem::path manifest;
  std::string host = "127.0.0.1";
  int port = 8080;
  int default_k = 10;
  int max_query_length = 512;
};

/// Relative paths resolve against `base_dir`. Throws InvalidArgument on
/// unknown keys, and when a referenced file does not exist.
ServiceConfig service_config_from_json(const nlohmann::json& j,
                                       const std::filesystem::path& base_dir);
ServiceConfig load_service_config(const std::filesystem::path& path);

struct ServiceResponse {
  int status = 200;
  nlohmann::json body;
};

/// Request handlers, independent of the transport. Safe to call from many
/// threads at once.
class QueryService {
 public:
  QueryService(RetrievalModel model, TextInputSource text,
               std::shared_ptr<const EmbeddingStore> index,
               std::optional<DatasetManifest> manifest = std::nullopt,
               int default_k = 10, int max_query_length = 512);
  static std::unique_ptr<QueryService> from_config(const ServiceConfig& c);

  ServiceResponse query(const std::string& request_body) const;
  ServiceResponse motion(const std::string& motion_id) const;
  ServiceResponse health() const;

  /// Swaps in a new index snapshot; in-flight queries finish on the old one.
  void replace_index(std::shared_ptr<const EmbeddingStore> next);

  /// Registers the three endpoints on `server`.
  void attach(httplib::Server& server) const;

 private:
  RetrievalModel model_;
  TextInputSource text_;
  SnapshotHolder index_;
  std::optional<DatasetManifest> manifest_;
  std::map<std::string, const ManifestEntry*> entries_;
  int default_k_;
  int max_query_length_;
};

/// Blocks serving `config` until the process is stopped.
void serve(const ServiceConfig& config);

}  // namespace motret
