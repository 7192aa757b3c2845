/*
 * Copyright 2026 The rankreward Authors.
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

// Queue of pending rating requests shared between the online loop and HTTP
// handlers, and the HTTP front end that exposes it.
//
//   GET  /status                  run status and current classes
//   GET  /requests                pending requests (without trajectories)
//   GET  /requests/{id}           one request with its replay payload
//   POST /requests/{id}/rating    {"class_index": k}
//   POST /requests/{id}/skip
//
// Resolved or unknown ids answer 409, bad class indices 422.

#pragma once

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "rankreward/dataset.hpp"
#include "rankreward/errors.hpp"
#include "rankreward/teacher.hpp"

namespace rankreward {

inline constexpr const char* kRatingSchema = "rankreward.rating/v1";

enum class Resolution { pending, rated, skipped, timed_out };

inline std::string_view to_string(Resolution r) {
  switch (r) {
    case Resolution::pending: return "pending";
    case Resolution::rated: return "rated";
    case Resolution::skipped: return "skipped";
    case Resolution::timed_out: return "timed_out";
  }
  return "pending";
}

struct RatingRequest {
  std::uint64_t id = 0;
  std::uint64_t session = 0;
  Trajectory segment;
  std::vector<ClassDescriptor> classes;
  nlohmann::json render_hints;
  std::int64_t issued_at_ms = 0;
  Resolution resolution = Resolution::pending;
  int class_index = -1;
};

enum class SubmitStatus { accepted, conflict, invalid };

struct RunStatus {
  std::size_t episode = 0;
  std::size_t env_steps = 0;
  std::size_t budget_used = 0;
  std::size_t budget_remaining = 0;
  std::vector<ClassDescriptor> classes;
  bool finished = false;
};

inline nlohmann::json descriptor_to_json(const ClassDescriptor& d) {
  nlohmann::json j = {{"index", d.index}, {"label", d.label}, {"lower", d.lower}};
  if (std::isfinite(d.upper)) {
    j["upper"] = d.upper;
  } else {
    j["upper"] = nullptr;
  }
  return j;
}

inline nlohmann::json descriptors_to_json(const std::vector<ClassDescriptor>& ds) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& d : ds) a.push_back(descriptor_to_json(d));
  return a;
}

class RatingQueue {
 public:
  // Opens a session with one request per segment. Throws StateError while
  // an earlier session still has unresolved requests.
  std::vector<std::uint64_t> enqueue(const std::vector<Trajectory>& segments, std::vector<ClassDescriptor> classes,
                                     nlohmann::json render_hints = nlohmann::json::object()) {
    std::lock_guard<std::mutex> lock(mu_);
    if (session_open_) throw StateError("enqueue: previous rating session is unresolved");
    ++session_;
    session_open_ = true;
    current_.clear();
    const auto now = std::chrono::duration_cast<std::chrono::milliseconds>(
                         std::chrono::system_clock::now().time_since_epoch())
                         .count();
    std::vector<std::uint64_t> ids;
    for (const Trajectory& s : segments) {
      RatingRequest r;
      r.id = next_id_++;
      r.session = session_;
      r.segment = s;
      r.segment.true_rewards.clear();
      r.classes = classes;
      r.render_hints = render_hints;
      r.issued_at_ms = now;
      const std::uint64_t id = r.id;
      requests_[id] = std::move(r);
      current_.push_back(id);
      ids.push_back(id);
    }
    if (current_.empty()) session_open_ = false;
    notify_locked();
    return ids;
  }

  SubmitStatus submit_rating(std::uint64_t id, int class_index) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = requests_.find(id);
    if (it == requests_.end() || it->second.resolution != Resolution::pending) return SubmitStatus::conflict;
    if (class_index < 0 || class_index >= static_cast<int>(it->second.classes.size())) return SubmitStatus::invalid;
    it->second.resolution = Resolution::rated;
    it->second.class_index = class_index;
    notify_locked();
    return SubmitStatus::accepted;
  }

  SubmitStatus skip(std::uint64_t id) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = requests_.find(id);
    if (it == requests_.end() || it->second.resolution != Resolution::pending) return SubmitStatus::conflict;
    it->second.resolution = Resolution::skipped;
    notify_locked();
    return SubmitStatus::accepted;
  }

  // Blocks until every request of the open session is resolved or the
  // timeout passes; unresolved ones become timed-out skips. Closes the
  // session and returns its requests in issue order.
  std::vector<RatingRequest> wait_session(std::chrono::milliseconds timeout) {
    std::unique_lock<std::mutex> lock(mu_);
    if (!session_open_) return {};
    cv_.wait_for(lock, timeout, [&] { return all_resolved_locked(); });
    std::vector<RatingRequest> out;
    for (std::uint64_t id : current_) {
      RatingRequest& r = requests_[id];
      if (r.resolution == Resolution::pending) r.resolution = Resolution::timed_out;
      out.push_back(r);
    }
    session_open_ = false;
    current_.clear();
    return out;
  }

  std::vector<RatingRequest> pending() const {
    std::lock_guard<std::mutex> lock(mu_);
    std::vector<RatingRequest> out;
    for (std::uint64_t id : current_) {
      const RatingRequest& r = requests_.at(id);
      if (r.resolution == Resolution::pending) out.push_back(r);
    }
    return out;
  }

  std::optional<RatingRequest> find(std::uint64_t id) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = requests_.find(id);
    if (it == requests_.end()) return std::nullopt;
    return it->second;
  }

  bool session_open() const {
    std::lock_guard<std::mutex> lock(mu_);
    return session_open_;
  }

  void set_status(RunStatus s) {
    std::lock_guard<std::mutex> lock(mu_);
    status_ = std::move(s);
    notify_locked();
  }

  RunStatus status() const {
    std::lock_guard<std::mutex> lock(mu_);
    return status_;
  }

  // Waits until a session with pending requests is open (used by scripted
  // raters and tests).
  bool wait_for_requests(std::chrono::milliseconds timeout) const {
    std::unique_lock<std::mutex> lock(mu_);
    return cv_.wait_for(lock, timeout, [&] { return session_open_ && !all_resolved_locked(); });
  }

 private:
  bool all_resolved_locked() const {
    for (std::uint64_t id : current_) {
      if (requests_.at(id).resolution == Resolution::pending) return false;
    }
    return true;
  }
  void notify_locked() { cv_.notify_all(); }

  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::map<std::uint64_t, RatingRequest> requests_;
  std::vector<std::uint64_t> current_;
  std::uint64_t next_id_ = 1;
  std::uint64_t session_ = 0;
  bool session_open_ = false;
  RunStatus status_;
};

inline nlohmann::json request_summary_json(const RatingRequest& r) {
  return {{"id", r.id},
          {"session", r.session},
          {"issued_at_ms", r.issued_at_ms},
          {"length", r.segment.size()},
          {"status", std::string(to_string(r.resolution))}};
}

inline nlohmann::json request_json(const RatingRequest& r) {
  nlohmann::json j = request_summary_json(r);
  j["classes"] = descriptors_to_json(r.classes);
  j["render_hints"] = r.render_hints;
  j["segment"] = trajectory_to_json(r.segment, false);
  if (r.resolution == Resolution::rated) j["class_index"] = r.class_index;
  return j;
}

inline nlohmann::json status_json(const RunStatus& s, bool session_open, std::size_t pending) {
  return {{"episode", s.episode},
          {"env_steps", s.env_steps},
          {"budget_used", s.budget_used},
          {"budget_remaining", s.budget_remaining},
          {"classes", descriptors_to_json(s.classes)},
          {"finished", s.finished},
          {"session_open", session_open},
          {"pending", pending}};
}

// HTTP front end over a RatingQueue, served from a background thread.
class RatingServer {
 public:
  explicit RatingServer(RatingQueue& queue) : queue_(queue) { routes(); }
  ~RatingServer() { stop(); }
  RatingServer(const RatingServer&) = delete;
  RatingServer& operator=(const RatingServer&) = delete;

  // Binds and starts serving; port 0 picks a free port. Returns the port.
  int start(const std::string& host, int port) {
    int bound = port;
    if (port == 0) {
      bound = server_.bind_to_any_port(host);
    } else if (!server_.bind_to_port(host, port)) {
      bound = -1;
    }
    if (bound < 0) throw IoError(host + ":" + std::to_string(port), "cannot bind rating service");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return bound;
  }

  void stop() {
    if (thread_.joinable()) {
      server_.stop();
      thread_.join();
    }
  }

 private:
  static void reply(httplib::Response& res, int status, nlohmann::json body) {
    body["schema"] = kRatingSchema;
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static std::optional<std::uint64_t> parse_id(const std::string& s) {
    try {
      std::size_t pos = 0;
      const unsigned long long v = std::stoull(s, &pos);
      if (pos != s.size()) return std::nullopt;
      return static_cast<std::uint64_t>(v);
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }

  void routes() {
    // httplib defaults to SO_REUSEPORT, which lets a second service share
    // an occupied port silently.
    server_.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
    server_.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                 {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                 {"Access-Control-Allow-Headers", "Content-Type"}});
    server_.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server_.Get("/status", [this](const httplib::Request&, httplib::Response& res) {
      reply(res, 200, status_json(queue_.status(), queue_.session_open(), queue_.pending().size()));
    });

    server_.Get("/requests", [this](const httplib::Request&, httplib::Response& res) {
      nlohmann::json list = nlohmann::json::array();
      for (const RatingRequest& r : queue_.pending()) list.push_back(request_summary_json(r));
      reply(res, 200, {{"requests", list}});
    });

    server_.Get(R"(/requests/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
      const auto id = parse_id(req.matches[1]);
      const auto r = id ? queue_.find(*id) : std::nullopt;
      if (!r) return reply(res, 404, {{"error", "unknown request"}});
      reply(res, 200, request_json(*r));
    });

    server_.Post(R"(/requests/(\d+)/rating)", [this](const httplib::Request& req, httplib::Response& res) {
      const auto id = parse_id(req.matches[1]);
      if (!id) return reply(res, 409, {{"error", "unknown request"}});
      int k = -1;
      try {
        const auto body = nlohmann::json::parse(req.body);
        if (!body.contains("class_index") || !body["class_index"].is_number_integer()) {
          return reply(res, 422, {{"error", "body must hold an integer class_index"}});
        }
        k = body["class_index"].get<int>();
      } catch (const nlohmann::json::exception&) {
        return reply(res, 422, {{"error", "malformed JSON body"}});
      }
      switch (queue_.submit_rating(*id, k)) {
        case SubmitStatus::accepted: return reply(res, 200, {{"id", *id}, {"status", "rated"}, {"class_index", k}});
        case SubmitStatus::conflict: return reply(res, 409, {{"error", "request unknown or already resolved"}});
        case SubmitStatus::invalid: return reply(res, 422, {{"error", "class_index outside the active classes"}});
      }
    });

    server_.Post(R"(/requests/(\d+)/skip)", [this](const httplib::Request& req, httplib::Response& res) {
      const auto id = parse_id(req.matches[1]);
      if (!id || queue_.skip(*id) != SubmitStatus::accepted) {
        return reply(res, 409, {{"error", "request unknown or already resolved"}});
      }
      reply(res, 200, {{"id", *id}, {"status", "skipped"}});
    });
  }

  RatingQueue& queue_;
  httplib::Server server_;
  std::thread thread_;
};

}  // namespace rankreward
