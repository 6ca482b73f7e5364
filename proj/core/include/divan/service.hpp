#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "divan/pipeline.hpp"

namespace divan {

enum class JobState { queued, running, done, failed };

std::string to_string(JobState state);

struct JobStatus {
  std::string id;
  JobState state = JobState::queued;
  std::string stage;  // failing stage, or the running one
  std::string error;
  bool cache_hit = false;

  nlohmann::json to_json() const;
};

/// Runs pipeline jobs one at a time on a single worker thread.
class JobQueue {
 public:
  JobQueue(std::filesystem::path root, std::size_t threads = 0);
  ~JobQueue();
  JobQueue(const JobQueue&) = delete;
  JobQueue& operator=(const JobQueue&) = delete;

  // Validates and enqueues. A request whose job already finished is reported done without running.
  JobStatus submit(JobRequest request);
  std::optional<JobStatus> status(const std::string& id) const;
  std::vector<JobStatus> list() const;
  void wait_idle();

 private:
  struct State;
  std::unique_ptr<State> state_;
};

struct ServiceOptions {
  std::filesystem::path root;
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::size_t threads = 0;
};

/// The JSON/PNG API over a job root (<root>/jobs/<job id>/...).
class Service {
 public:
  explicit Service(ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds and serves on a background thread; returns the bound port.
  int start();
  // Binds and serves on the calling thread until stop().
  void run();
  void stop();

  JobQueue& jobs();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace divan
