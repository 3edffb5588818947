#pragma once

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "facepose/errors.hpp"
#include "facepose/png_io.hpp"

namespace facepose::service {

/// Seconds since the epoch; injectable so lease expiry can be tested.
using Clock = std::function<double()>;

inline double system_now() {
    return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
}

enum class JobStatus { Queued, Running, Succeeded, Failed };

inline std::string to_string(JobStatus s) {
    switch (s) {
        case JobStatus::Queued: return "queued";
        case JobStatus::Running: return "running";
        case JobStatus::Succeeded: return "succeeded";
        case JobStatus::Failed: return "failed";
    }
    return "unknown";
}

inline JobStatus status_from_string(const std::string& s) {
    if (s == "queued") return JobStatus::Queued;
    if (s == "running") return JobStatus::Running;
    if (s == "succeeded") return JobStatus::Succeeded;
    if (s == "failed") return JobStatus::Failed;
    fail(ErrorCode::ParseError, "unknown job status '" + s + "'");
}

inline bool is_terminal(JobStatus s) { return s == JobStatus::Succeeded || s == JobStatus::Failed; }

/// Output resolution and rate. Defaults: 512×512 at 24 fps.
struct JobParams {
    int width = 512;
    int height = 512;
    double fps = 24.0;
    std::uint64_t seed = 0;
};

/// Partially specified params as submitted; unset fields take the defaults.
struct JobParamsRequest {
    std::optional<int> width, height;
    std::optional<double> fps;
    std::optional<std::uint64_t> seed;

    JobParams resolve() const {
        JobParams p;
        if (width) p.width = *width;
        if (height) p.height = *height;
        if (fps) p.fps = *fps;
        if (seed) p.seed = *seed;
        if (p.width < 8 || p.height < 8 || p.width > 4096 || p.height > 4096) fail(ErrorCode::BadCanvas, "width/height must be in [8, 4096]");
        if (!(p.fps > 0.0) || p.fps > 240.0) fail(ErrorCode::BadFps, "fps must be in (0, 240]");
        return p;
    }
};

struct ResultMeta {
    std::size_t frames = 0;
    double fps = 0.0;
    int width = 0;
    int height = 0;
    double duration_s = 0.0;
    std::string media_type;
};

struct GenerationJob {
    std::string id;
    std::uint64_t seq = 0;  // creation order
    double created_at = 0.0;
    double updated_at = 0.0;
    JobStatus status = JobStatus::Queued;
    std::string reference_ref;  // artifact id of the reference PNG
    std::string pose_ref;       // artifact id of the pose JSON
    std::string pose_source;    // as submitted, e.g. "library:wave"
    JobParams params;
    std::optional<std::string> result_ref;
    std::optional<ResultMeta> result;
    std::optional<std::string> error;
    // lease bookkeeping
    std::string lease_owner;
    double lease_expires = 0.0;
    int attempts = 0;
    std::vector<std::string> history;  // statuses entered, in order

    std::string lease_token() const { return lease_owner + "#" + std::to_string(attempts); }
};

inline nlohmann::json to_json(const GenerationJob& j) {
    nlohmann::json out{{"id", j.id},
                       {"seq", j.seq},
                       {"created_at", j.created_at},
                       {"updated_at", j.updated_at},
                       {"status", to_string(j.status)},
                       {"reference_ref", j.reference_ref},
                       {"pose_ref", j.pose_ref},
                       {"pose_source", j.pose_source},
                       {"params", {{"width", j.params.width}, {"height", j.params.height}, {"fps", j.params.fps}, {"seed", j.params.seed}}},
                       {"lease_owner", j.lease_owner},
                       {"lease_expires", j.lease_expires},
                       {"attempts", j.attempts},
                       {"history", j.history}};
    if (j.result_ref) out["result_ref"] = *j.result_ref;
    if (j.result) {
        out["result"] = {{"frames", j.result->frames},         {"fps", j.result->fps},
                         {"width", j.result->width},           {"height", j.result->height},
                         {"duration_s", j.result->duration_s}, {"media_type", j.result->media_type}};
    }
    if (j.error) out["error"] = *j.error;
    return out;
}

inline GenerationJob job_from_json(const nlohmann::json& in) {
    GenerationJob j;
    j.id = in.at("id").get<std::string>();
    j.seq = in.value("seq", std::uint64_t{0});
    j.created_at = in.at("created_at").get<double>();
    j.updated_at = in.value("updated_at", j.created_at);
    j.status = status_from_string(in.at("status").get<std::string>());
    j.reference_ref = in.at("reference_ref").get<std::string>();
    j.pose_ref = in.at("pose_ref").get<std::string>();
    j.pose_source = in.value("pose_source", std::string());
    const auto& p = in.at("params");
    j.params = {p.at("width").get<int>(), p.at("height").get<int>(), p.at("fps").get<double>(), p.at("seed").get<std::uint64_t>()};
    if (in.contains("result_ref")) j.result_ref = in["result_ref"].get<std::string>();
    if (in.contains("result")) {
        const auto& r = in["result"];
        j.result = ResultMeta{r.at("frames").get<std::size_t>(), r.at("fps").get<double>(), r.at("width").get<int>(),
                              r.at("height").get<int>(), r.at("duration_s").get<double>(), r.value("media_type", std::string())};
    }
    if (in.contains("error")) j.error = in["error"].get<std::string>();
    j.lease_owner = in.value("lease_owner", std::string());
    j.lease_expires = in.value("lease_expires", 0.0);
    j.attempts = in.value("attempts", 0);
    j.history = in.value("history", std::vector<std::string>{});
    return j;
}

/// Durable job records with atomic state transitions. Completion calls are
/// compare-and-swap on the lease token, so a worker whose lease was taken over
/// cannot finalize the job a second time.
class JobStore {
public:
    virtual ~JobStore() = default;
    virtual GenerationJob create(const std::string& reference_ref, const std::string& pose_ref, const std::string& pose_source,
                                 const JobParams& params) = 0;
    virtual std::optional<GenerationJob> get(const std::string& id) const = 0;
    virtual std::vector<GenerationJob> list() const = 0;
    /// Oldest queued job, or a running job whose lease has expired.
    virtual std::optional<GenerationJob> claim(const std::string& worker, double lease_seconds) = 0;
    virtual bool renew(const std::string& id, const std::string& token, double lease_seconds) = 0;
    virtual bool succeed(const std::string& id, const std::string& token, const std::string& result_ref, const ResultMeta& meta) = 0;
    virtual bool fail_job(const std::string& id, const std::string& token, const std::string& error) = 0;
};

/// One JSON file per job under `dir`. An advisory file lock plus an in-process
/// mutex serialize read-modify-write cycles, so several store instances over the
/// same directory (e.g. after a restart) stay consistent.
class FileJobStore final : public JobStore {
public:
    /// A running job whose lease expires after `max_attempts` claims is failed
    /// instead of being handed out again.
    explicit FileJobStore(std::filesystem::path dir, Clock clock = system_now, int max_attempts = 3)
        : dir_(std::move(dir)), clock_(std::move(clock)), max_attempts_(max_attempts) {
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (ec) fail(ErrorCode::IoError, "cannot create job dir " + dir_.string());
    }

    GenerationJob create(const std::string& reference_ref, const std::string& pose_ref, const std::string& pose_source,
                         const JobParams& params) override {
        Locked lock(*this);
        GenerationJob j;
        j.id = new_id();
        for (const auto& other : read_all()) j.seq = std::max(j.seq, other.seq);
        j.seq += 1;
        j.created_at = j.updated_at = clock_();
        j.reference_ref = reference_ref;
        j.pose_ref = pose_ref;
        j.pose_source = pose_source;
        j.params = params;
        j.history = {"queued"};
        write(j);
        return j;
    }

    std::optional<GenerationJob> get(const std::string& id) const override {
        if (!valid_id(id)) return std::nullopt;
        Locked lock(*this);
        return read(id);
    }

    std::vector<GenerationJob> list() const override {
        Locked lock(*this);
        return read_all();
    }

    std::optional<GenerationJob> claim(const std::string& worker, double lease_seconds) override {
        Locked lock(*this);
        const double now = clock_();
        auto jobs = read_all();
        for (auto& j : jobs) {
            const bool fresh = j.status == JobStatus::Queued;
            const bool stale = j.status == JobStatus::Running && j.lease_expires <= now;
            if (!fresh && !stale) continue;
            if (stale && j.attempts >= max_attempts_) {
                j.status = JobStatus::Failed;
                j.error = "worker lease expired " + std::to_string(j.attempts) + " times";
                j.history.push_back("failed");
                j.lease_expires = 0.0;
                j.updated_at = now;
                write(j);
                continue;
            }
            if (fresh) j.history.push_back("running");
            j.status = JobStatus::Running;
            j.lease_owner = worker;
            j.lease_expires = now + lease_seconds;
            j.attempts += 1;
            j.updated_at = now;
            write(j);
            return j;
        }
        return std::nullopt;
    }

    bool renew(const std::string& id, const std::string& token, double lease_seconds) override {
        Locked lock(*this);
        auto j = read(id);
        if (!j || j->status != JobStatus::Running || j->lease_token() != token) return false;
        j->lease_expires = clock_() + lease_seconds;
        write(*j);
        return true;
    }

    bool succeed(const std::string& id, const std::string& token, const std::string& result_ref, const ResultMeta& meta) override {
        return finish(id, token, [&](GenerationJob& j) {
            j.status = JobStatus::Succeeded;
            j.result_ref = result_ref;
            j.result = meta;
        });
    }

    bool fail_job(const std::string& id, const std::string& token, const std::string& error) override {
        return finish(id, token, [&](GenerationJob& j) {
            j.status = JobStatus::Failed;
            j.error = error;
        });
    }

    static bool valid_id(const std::string& id) {
        return !id.empty() && id.size() <= 64 && id.find_first_not_of("0123456789abcdef") == std::string::npos;
    }

private:
    // Holds the in-process mutex and an exclusive flock on <dir>/.lock.
    class Locked {
    public:
        explicit Locked(const FileJobStore& s) : guard_(s.mutex_) {
            fd_ = ::open((s.dir_ / ".lock").c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
            if (fd_ < 0 || ::flock(fd_, LOCK_EX) != 0) fail(ErrorCode::IoError, "cannot lock job store");
        }
        ~Locked() {
            ::flock(fd_, LOCK_UN);
            ::close(fd_);
        }
        Locked(const Locked&) = delete;
        Locked& operator=(const Locked&) = delete;

    private:
        std::lock_guard<std::mutex> guard_;
        int fd_ = -1;
    };

    template <class Fn>
    bool finish(const std::string& id, const std::string& token, Fn&& apply) {
        Locked lock(*this);
        auto j = read(id);
        if (!j || j->status != JobStatus::Running || j->lease_token() != token) return false;
        apply(*j);
        j->history.push_back(to_string(j->status));
        j->lease_expires = 0.0;
        j->updated_at = clock_();
        write(*j);
        return true;
    }

    std::filesystem::path path_for(const std::string& id) const { return dir_ / (id + ".json"); }

    std::optional<GenerationJob> read(const std::string& id) const {
        const auto path = path_for(id);
        if (!std::filesystem::exists(path)) return std::nullopt;
        const auto bytes = read_file_bytes(path);
        try {
            return job_from_json(nlohmann::json::parse(bytes.begin(), bytes.end()));
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::IoError, "corrupt job record " + id + ": " + e.what());
        }
    }

    std::vector<GenerationJob> read_all() const {
        std::vector<GenerationJob> out;
        for (const auto& e : std::filesystem::directory_iterator(dir_)) {
            const auto name = e.path().filename().string();
            if (!name.ends_with(".json")) continue;
            if (auto j = read(name.substr(0, name.size() - 5))) out.push_back(std::move(*j));
        }
        std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
            return a.seq != b.seq ? a.seq < b.seq : a.id < b.id;
        });
        return out;
    }

    void write(const GenerationJob& j) const {
        const std::string text = to_json(j).dump(2);
        auto tmp = path_for(j.id);
        tmp += ".tmp";
        write_file_bytes(tmp, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
        std::filesystem::rename(tmp, path_for(j.id));
    }

    std::string new_id() {
        static thread_local std::mt19937_64 rng(std::random_device{}());
        static constexpr char kHex[] = "0123456789abcdef";
        for (;;) {
            std::string id(16, '0');
            auto v = rng();
            for (auto& ch : id) {
                ch = kHex[v & 15];
                v >>= 4;
            }
            if (!std::filesystem::exists(path_for(id))) return id;
        }
    }

    std::filesystem::path dir_;
    Clock clock_;
    int max_attempts_ = 3;
    mutable std::mutex mutex_;
};

} // namespace facepose::service
