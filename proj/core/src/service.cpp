#include "divan/service.hpp"

#include <condition_variable>
#include <deque>
#include <map>
#include <mutex>
#include <regex>
#include <thread>

#include <httplib.h>

#include "binary_io.hpp"
#include "divan/error.hpp"

namespace divan {

namespace fs = std::filesystem;

std::string to_string(JobState state) {
  switch (state) {
    case JobState::queued:
      return "queued";
    case JobState::running:
      return "running";
    case JobState::done:
      return "done";
    case JobState::failed:
      return "failed";
  }
  return "unknown";
}

nlohmann::json JobStatus::to_json() const {
  auto json = nlohmann::json{{"id", id}, {"state", divan::to_string(state)}, {"cache_hit", cache_hit}};
  json["stage"] = stage.empty() ? nlohmann::json{} : nlohmann::json(stage);
  json["error"] = error.empty() ? nlohmann::json{} : nlohmann::json(error);
  if (state == JobState::done) {
    json["manifest"] = "/api/manifest/" + id;
  }
  return json;
}

namespace {

JobStatus status_of(std::string id, JobState state = JobState::queued) {
  auto status = JobStatus{};
  status.id = std::move(id);
  status.state = state;
  return status;
}

bool finished_on_disk(const fs::path& root, const std::string& job) {
  const auto path = job_dir(root, job) / "manifest.json";
  if (!fs::exists(path)) {
    return false;
  }
  try {
    return nlohmann::json::parse(detail::read_text(path)).value("complete", false);
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace

struct JobQueue::State {
  fs::path root;
  std::size_t threads = 0;
  mutable std::mutex mutex;
  std::condition_variable wake;
  std::condition_variable idle;
  std::map<std::string, JobStatus> jobs;
  std::deque<std::pair<std::string, JobRequest>> pending;
  bool busy = false;
  bool stopping = false;
  std::thread worker;

  void loop() {
    auto lock = std::unique_lock{mutex};
    while (true) {
      wake.wait(lock, [&] { return stopping || !pending.empty(); });
      if (stopping) {
        return;
      }
      auto [id, request] = std::move(pending.front());
      pending.pop_front();
      busy = true;
      jobs[id].state = JobState::running;
      lock.unlock();

      auto status = status_of(id);
      try {
        const auto result = run_pipeline(request, root, threads);
        status.state = JobState::done;
        status.cache_hit = result.cache_hit;
      } catch (const StageError& e) {
        status.state = JobState::failed;
        status.stage = e.stage();
        status.error = e.what();
      } catch (const std::exception& e) {
        status.state = JobState::failed;
        status.error = e.what();
      }

      lock.lock();
      jobs[id] = std::move(status);
      busy = false;
      if (pending.empty()) {
        idle.notify_all();
      }
    }
  }
};

JobQueue::JobQueue(fs::path root, std::size_t threads) : state_(std::make_unique<State>()) {
  state_->root = std::move(root);
  state_->threads = threads;
  state_->worker = std::thread([s = state_.get()] { s->loop(); });
}

JobQueue::~JobQueue() {
  {
    const auto lock = std::lock_guard{state_->mutex};
    state_->stopping = true;
  }
  state_->wake.notify_all();
  state_->worker.join();
}

JobStatus JobQueue::submit(JobRequest request) {
  if (request.dataset.is_relative()) {
    request.dataset = state_->root / request.dataset;
  }
  const auto id = job_id(request);
  const auto lock = std::lock_guard{state_->mutex};
  if (const auto it = state_->jobs.find(id);
      it != state_->jobs.end() && it->second.state != JobState::failed) {
    auto status = it->second;
    status.cache_hit = status.state == JobState::done;
    return status;
  }
  if (finished_on_disk(state_->root, id)) {
    auto status = status_of(id, JobState::done);
    status.cache_hit = true;
    return state_->jobs[id] = status;
  }
  state_->jobs[id] = status_of(id);
  state_->pending.emplace_back(id, std::move(request));
  state_->wake.notify_one();
  return state_->jobs[id];
}

std::optional<JobStatus> JobQueue::status(const std::string& id) const {
  {
    const auto lock = std::lock_guard{state_->mutex};
    if (const auto it = state_->jobs.find(id); it != state_->jobs.end()) {
      return it->second;
    }
  }
  // Jobs finished by an earlier process or the CLI.
  if (finished_on_disk(state_->root, id)) {
    return status_of(id, JobState::done);
  }
  return std::nullopt;
}

std::vector<JobStatus> JobQueue::list() const {
  const auto lock = std::lock_guard{state_->mutex};
  auto out = std::vector<JobStatus>{};
  for (const auto& [id, status] : state_->jobs) {
    out.push_back(status);
  }
  return out;
}

void JobQueue::wait_idle() {
  auto lock = std::unique_lock{state_->mutex};
  state_->idle.wait(lock, [&] { return state_->pending.empty() && !state_->busy; });
}

namespace {

const auto kJobPattern = std::string{"([0-9a-f]{16})"};
const auto kImagePattern = kJobPattern + "-(t[0-9]+-[0-9]+-[0-9]+_z[0-9]+_[0-9]+-[0-9]+)";

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", message}});
}

bool send_file(httplib::Response& res, const fs::path& path, const char* type) {
  if (!fs::is_regular_file(path)) {
    return false;
  }
  res.status = 200;
  res.set_content(detail::read_text(path), type);
  return true;
}

nlohmann::json list_datasets(const fs::path& root) {
  auto out = nlohmann::json::array();
  const auto dir = root / "datasets";
  if (!fs::is_directory(dir)) {
    return out;
  }
  auto entries = std::vector<fs::path>{};
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (fs::exists(entry.path() / "header.json")) {
      entries.push_back(entry.path());
    }
  }
  std::sort(entries.begin(), entries.end());
  for (const auto& path : entries) {
    const auto header = nlohmann::json::parse(detail::read_text(path / "header.json"));
    auto dims = nlohmann::json::array();
    for (const auto& d : header.at("dimensions")) {
      dims.push_back({{"id", d.at("id")}, {"name", d.at("name")}});
    }
    auto columns = nlohmann::json::array();
    for (const auto& c : header.at("columns")) {
      columns.push_back({{"name", c.at("name")}, {"kind", c.at("kind")}});
    }
    out.push_back({{"name", path.filename().string()},
                   {"dataset", (fs::path{"datasets"} / path.filename()).generic_string()},
                   {"rows", header.at("row_count")},
                   {"dimensions", dims},
                   {"columns", columns}});
  }
  return out;
}

}  // namespace

struct Service::Impl {
  ServiceOptions options;
  JobQueue queue;
  httplib::Server server;
  std::thread thread;

  explicit Impl(ServiceOptions o) : options(std::move(o)), queue(options.root, options.threads) { routes(); }

  fs::path job_path(const std::string& job) const { return job_dir(options.root, job); }

  void routes() {
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        send_error(res, 500, e.what());
      }
    });
    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) {
        send_error(res, res.status, res.status == 404 ? "not found" : "request failed");
      }
    });

    server.Get("/api/manifest/" + kJobPattern, [this](const httplib::Request& req, httplib::Response& res) {
      if (!send_file(res, job_path(req.matches[1]) / "manifest.json", "application/json")) {
        send_error(res, 404, "unknown job " + req.matches[1].str());
      }
    });

    server.Get("/api/images/" + kImagePattern, [this](const httplib::Request& req, httplib::Response& res) {
      const auto id = req.matches[0].str().substr(std::string{"/api/images/"}.size());
      if (!send_file(res, job_path(req.matches[1]) / "images" / (id + ".png"), "image/png")) {
        send_error(res, 404, "unknown image " + id);
      }
    });

    server.Get("/api/images/" + kImagePattern + "/meta", [this](const httplib::Request& req, httplib::Response& res) {
      const auto id = req.matches[1].str() + "-" + req.matches[2].str();
      if (!send_file(res, job_path(req.matches[1]) / "images" / (id + ".json"), "application/json")) {
        send_error(res, 404, "unknown image " + id);
      }
    });

    server.Get("/api/bins/" + kJobPattern + "/([0-9]+)", [this](const httplib::Request& req, httplib::Response& res) {
      const auto dim = static_cast<DimensionId>(std::stoul(req.matches[2]));
      if (!send_file(res, bounds_file(job_path(req.matches[1]) / "binned", dim), "application/json")) {
        send_error(res, 404, "no bins for dimension " + req.matches[2].str() + " in job " + req.matches[1].str());
      }
    });

    server.Post("/api/jobs", [this](const httplib::Request& req, httplib::Response& res) {
      auto status = JobStatus{};
      try {
        status = queue.submit(JobRequest::from_json(nlohmann::json::parse(req.body)));
      } catch (const std::exception& e) {
        send_error(res, 400, e.what());
        return;
      }
      send_json(res, status.state == JobState::done ? 200 : 202, status.to_json());
    });

    server.Get("/api/jobs/" + kJobPattern, [this](const httplib::Request& req, httplib::Response& res) {
      if (const auto status = queue.status(req.matches[1])) {
        send_json(res, 200, status->to_json());
      } else {
        send_error(res, 404, "unknown job " + req.matches[1].str());
      }
    });

    server.Get("/api/jobs", [this](const httplib::Request&, httplib::Response& res) {
      auto out = nlohmann::json::array();
      for (const auto& status : queue.list()) {
        out.push_back(status.to_json());
      }
      send_json(res, 200, out);
    });

    server.Get("/api/datasets", [this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, list_datasets(options.root));
    });
  }

  int bind() {
    const auto port = options.port == 0 ? server.bind_to_any_port(options.host)
                                        : (server.bind_to_port(options.host, options.port) ? options.port : -1);
    if (port < 0) {
      throw Error("cannot bind " + options.host + ":" + std::to_string(options.port));
    }
    return port;
  }
};

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

Service::~Service() { stop(); }

int Service::start() {
  const auto port = impl_->bind();
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port;
}

void Service::run() {
  impl_->bind();
  impl_->server.listen_after_bind();
}

void Service::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) {
    impl_->thread.join();
  }
}

JobQueue& Service::jobs() { return impl_->queue; }

}  // namespace divan
