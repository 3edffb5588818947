#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "facepose/engine/checkpoint.hpp"
#include "facepose/service/api.hpp"
#include "facepose/synthetic.hpp"

namespace facepose::service {

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::filesystem::path data_dir = "facepose-data";  // artifacts/, jobs/ and library/ live here unless overridden
    std::filesystem::path artifact_dir;
    std::filesystem::path job_dir;
    std::filesystem::path library_dir;
    std::filesystem::path weights;  // checkpoint; empty = untrained toy model
    std::size_t upload_limit = 100u * 1024u * 1024u;
    int workers = 1;
    double lease_seconds = 60.0;
    std::size_t max_frames = 2400;
    std::string encoder = "auto";
    bool seed_library = true;  // populate an empty library with the built-in sequences

    std::filesystem::path artifacts_path() const { return artifact_dir.empty() ? data_dir / "artifacts" : artifact_dir; }
    std::filesystem::path jobs_path() const { return job_dir.empty() ? data_dir / "jobs" : job_dir; }
    std::filesystem::path library_path() const { return library_dir.empty() ? data_dir / "library" : library_dir; }
};

inline ServiceConfig service_config_from_json(const nlohmann::json& j) {
    ServiceConfig c;
    try {
        c.host = j.value("host", c.host);
        c.port = j.value("port", c.port);
        c.data_dir = j.value("data_dir", c.data_dir.string());
        c.artifact_dir = j.value("artifact_dir", std::string());
        c.job_dir = j.value("job_dir", std::string());
        c.library_dir = j.value("library_dir", std::string());
        c.weights = j.value("weights", std::string());
        c.upload_limit = j.value("upload_limit", c.upload_limit);
        c.workers = j.value("workers", c.workers);
        c.lease_seconds = j.value("lease_seconds", c.lease_seconds);
        c.max_frames = j.value("max_frames", c.max_frames);
        c.encoder = j.value("encoder", c.encoder);
        c.seed_library = j.value("seed_library", c.seed_library);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::BadConfig, std::string("service config: ") + e.what());
    }
    if (c.workers < 0 || c.port < 0 || c.port > 65535 || !(c.lease_seconds > 0.0)) fail(ErrorCode::BadConfig, "service config out of range");
    encoder_from_string(c.encoder);
    return c;
}

inline ServiceConfig load_service_config(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    try {
        return service_config_from_json(nlohmann::json::parse(bytes.begin(), bytes.end()));
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorCode::BadConfig, "cannot parse " + path.string() + ": " + e.what());
    }
}

/// Stores, workers and HTTP server wired together. Each worker owns its own
/// engine instance.
class Service {
public:
    explicit Service(ServiceConfig config, VideoGenerator generator = {})
        : config_(std::move(config)),
          artifacts_(config_.artifacts_path()),
          jobs_(config_.jobs_path()),
          library_(config_.library_path()),
          detector_(std::make_shared<pose::BlobFaceDetector>()),
          generator_(std::move(generator)),
          ctx_{jobs_, artifacts_, library_, *detector_, {config_.upload_limit, config_.max_frames}} {
        if (config_.seed_library && library_.list().empty()) {
            for (const auto& [id, seq] : synthetic::builtin_library()) library_.add(id, seq);
        }
        install_routes(server_, ctx_);
    }

    ~Service() { stop(); }

    /// Starts the workers and binds the listener; port 0 picks a free port.
    int start() {
        for (int i = 0; i < config_.workers; ++i) {
            WorkerOptions opts{"worker-" + std::to_string(i), config_.lease_seconds, config_.max_frames, encoder_from_string(config_.encoder)};
            auto worker = std::make_shared<Worker>(jobs_, artifacts_, generator_ ? generator_ : make_engine_generator(), opts);
            threads_.emplace_back([worker](std::stop_token st) { worker->run(st); });
        }
        port_ = config_.port == 0 ? server_.bind_to_any_port(config_.host) : (server_.bind_to_port(config_.host, config_.port) ? config_.port : -1);
        if (port_ < 0) fail(ErrorCode::IoError, "cannot bind " + config_.host + ":" + std::to_string(config_.port));
        listener_ = std::jthread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return port_;
    }

    void stop() {
        server_.stop();
        if (listener_.joinable()) listener_.join();
        for (auto& t : threads_) t.request_stop();
        threads_.clear();
    }

    int port() const { return port_; }
    ArtifactStore& artifacts() { return artifacts_; }
    FileJobStore& jobs() { return jobs_; }
    pose::PoseLibrary& library() { return library_; }

private:
    VideoGenerator make_engine_generator() const {
        std::shared_ptr<const engine::Model<float>> model =
            config_.weights.empty() ? std::make_shared<engine::Model<float>>(engine::EngineConfig::toy())
                                    : std::shared_ptr<const engine::Model<float>>(engine::load_checkpoint<float>(config_.weights));
        return engine_generator<float>(model, detector_);
    }

    ServiceConfig config_;
    ArtifactStore artifacts_;
    FileJobStore jobs_;
    pose::PoseLibrary library_;
    std::shared_ptr<const pose::LandmarkDetector> detector_;
    VideoGenerator generator_;
    ApiContext ctx_;
    httplib::Server server_;
    std::vector<std::jthread> threads_;
    std::jthread listener_;
    int port_ = -1;
};

} // namespace facepose::service
