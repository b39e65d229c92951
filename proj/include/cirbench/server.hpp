/*
 * Copyright 2026 The cirbench Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef CIRBENCH_SERVER_HPP_
#define CIRBENCH_SERVER_HPP_

#include <cstdint>
#include <cstdio>
#include <string>
#include <utility>

#include <httplib.h>
#include <json.hpp>

#include "cirbench/dataset.hpp"
#include "cirbench/error.hpp"
#include "cirbench/eval.hpp"
#include "cirbench/metrics.hpp"

namespace cirbench {

/// FNV-1a 64 of a byte string.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Content hash of the canonical serialization, as 16 hex digits.
inline std::string dataset_fingerprint(const DatasetFile& dataset) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(serialize_dataset(dataset, false))));
  return buf;
}

struct ServiceResponse {
  int status = 200;
  std::string body;
};

/// Stateless scoring service over an immutable gold split. The handlers are
/// plain functions so they can be exercised without a socket.
class EvaluationService {
 public:
  explicit EvaluationService(DatasetFile gold, EvalOptions options = {})
      : gold_(std::move(gold)), options_(std::move(options)), fingerprint_(dataset_fingerprint(gold_)) {}

  const DatasetFile& gold() const { return gold_; }
  const std::string& fingerprint() const { return fingerprint_; }

  ServiceResponse health() const {
    nlohmann::ordered_json j;
    j["status"] = "ok";
    j["split"] = to_string(gold_.split);
    j["pairs"] = gold_.records.size();
    j["fingerprint"] = fingerprint_;
    return {200, j.dump()};
  }

  ServiceResponse submit(const std::string& body) const {
    try {
      const auto submission = submission_from_json(nlohmann::json::parse(body));
      if (parse_split(submission.split) != gold_.split) {
        return error(422, "submission is for split '" + submission.split + "', server holds '" +
                              std::string(to_string(gold_.split)) + "'", {});
      }
      const auto report = score_submission(gold_, submission, options_);
      return {200, report_to_json(report).dump()};
    } catch (const SubmissionError& e) {
      return error(422, e.what(), e.pair_ids());
    } catch (const nlohmann::json::exception& e) {
      return error(400, std::string("malformed JSON: ") + e.what(), {});
    } catch (const Error& e) {
      return error(400, e.what(), {});
    }
  }

  static ServiceResponse error(int status, const std::string& message, const std::vector<std::uint64_t>& ids) {
    nlohmann::ordered_json j;
    j["error"] = message;
    j["pair_ids"] = ids;
    return {status, j.dump()};
  }

 private:
  DatasetFile gold_;
  EvalOptions options_;
  std::string fingerprint_;
};

/// HTTP front end: POST /v1/submit, GET /v1/health.
class EvaluationServer {
 public:
  static constexpr std::size_t kDefaultMaxBody = 64u << 20;

  explicit EvaluationServer(const EvaluationService& service, std::size_t max_body = kDefaultMaxBody)
      : service_(service) {
    server_.set_payload_max_length(max_body);
    server_.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
      reply(res, service_.health());
    });
    server_.Post("/v1/submit", [this](const httplib::Request& req, httplib::Response& res) {
      reply(res, service_.submit(req.body));
    });
    server_.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (!res.body.empty()) return;
      std::string msg = res.status == 413 ? "request body too large" : "not found";
      reply(res, EvaluationService::error(res.status, msg, {}));
    });
  }

  EvaluationServer(const EvaluationServer&) = delete;
  EvaluationServer& operator=(const EvaluationServer&) = delete;

  /// Binds without serving; port 0 picks a free port. Returns the port.
  int bind(const std::string& host, int port) {
    const int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
    return bound;
  }

  /// Blocks until stop() is called.
  bool listen() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() { server_.wait_until_ready(); }

 private:
  static void reply(httplib::Response& res, const ServiceResponse& r) {
    res.status = r.status;
    res.set_content(r.body, "application/json");
  }

  const EvaluationService& service_;
  httplib::Server server_;
};

}  // namespace cirbench

#endif  // CIRBENCH_SERVER_HPP_
