#pragma once

#include <charconv>
#include <memory>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "facepose/pose/audio.hpp"
#include "facepose/pose/extract.hpp"
#include "facepose/pose/library.hpp"
#include "facepose/service/worker.hpp"

namespace facepose::service {

inline int http_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidImage:
        case ErrorCode::BadCanvas:
        case ErrorCode::BadFps:
        case ErrorCode::ParseError:
            return 400;
        case ErrorCode::NotFound:
        case ErrorCode::UnknownLibraryId:
            return 404;
        case ErrorCode::TooLarge:
            return 413;
        case ErrorCode::NoFace:
        case ErrorCode::PoseExtractionFailed:
        case ErrorCode::UndecodableMedia:
        case ErrorCode::DetectorFailure:
        case ErrorCode::EmptyVideo:
        case ErrorCode::EmptyAudio:
        case ErrorCode::BadSampleRate:
            return 422;
        default:
            return 500;
    }
}

struct ApiOptions {
    std::size_t upload_limit = 100u * 1024u * 1024u;
    std::size_t max_frames = 2400;
};

/// Everything the handlers touch. Owned elsewhere; must outlive the server.
struct ApiContext {
    JobStore& jobs;
    ArtifactStore& artifacts;
    pose::PoseLibrary& library;
    const pose::LandmarkDetector& detector;
    ApiOptions options{};
};

nlohmann::json openapi_document();

namespace detail {

inline void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

inline void send_error(httplib::Response& res, int status, std::string_view name, const std::string& message) {
    send_json(res, status, {{"error", name}, {"message", message}});
}

inline void send_error(httplib::Response& res, const Error& e) {
    send_error(res, http_status(e.code()), e.name(), e.what());
}

inline std::optional<std::string> field(const httplib::Request& req, const std::string& name) {
    if (req.has_file(name)) return req.get_file_value(name).content;
    if (req.has_param(name)) return req.get_param_value(name);
    return std::nullopt;
}

inline std::span<const std::uint8_t> as_bytes(const std::string& s) {
    return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

template <class T>
std::optional<T> parse_number(const std::optional<std::string>& s, const char* name) {
    if (!s || s->empty()) return std::nullopt;
    T v{};
    const auto [ptr, ec] = std::from_chars(s->data(), s->data() + s->size(), v);
    if (ec != std::errc() || ptr != s->data() + s->size()) fail(ErrorCode::ParseError, std::string("bad value for '") + name + "'");
    return v;
}

inline nlohmann::json job_view(const GenerationJob& j) {
    nlohmann::json out{{"id", j.id},
                       {"status", to_string(j.status)},
                       {"created_at", j.created_at},
                       {"updated_at", j.updated_at},
                       {"pose_source", j.pose_source},
                       {"params", {{"width", j.params.width}, {"height", j.params.height}, {"fps", j.params.fps}, {"seed", j.params.seed}}}};
    if (j.status == JobStatus::Succeeded && j.result) {
        out["result_url"] = "/api/jobs/" + j.id + "/result";
        out["result"] = {{"frames", j.result->frames},         {"fps", j.result->fps},
                         {"width", j.result->width},           {"height", j.result->height},
                         {"duration_s", j.result->duration_s}, {"media_type", j.result->media_type}};
    }
    if (j.error) out["error"] = *j.error;
    return out;
}

inline nlohmann::json pose_summary(const std::string& id, const pose::PoseSequence& seq) {
    return {{"id", id}, {"frames", seq.frames.size()}, {"fps", seq.fps}, {"duration_s", seq.duration_s()}};
}

} // namespace detail

/// Stores a pose sequence as an artifact; returns its id.
inline std::string store_pose(ArtifactStore& artifacts, const pose::PoseSequence& seq) {
    const auto text = pose::to_json(seq);
    return artifacts.put(detail::as_bytes(text), std::string(kPoseMediaType)).id;
}

inline pose::PoseSequence load_stored_pose(const ArtifactStore& artifacts, const std::string& id) {
    if (!ArtifactStore::valid_id(id) || !artifacts.contains(id) || artifacts.meta(id).media_type != kPoseMediaType) {
        fail(ErrorCode::NotFound, "no stored pose '" + id + "'");
    }
    const auto bytes = artifacts.get(id);
    return pose::from_json(std::string(bytes.begin(), bytes.end()));
}

inline pose::PoseSequence pose_from_video_upload(const std::string& bytes, const pose::LandmarkDetector& detector) {
    const auto video = decode_video(detail::as_bytes(bytes));
    return pose::extract_pose_from_video(video.frames, video.fps, detector);
}

inline pose::PoseSequence pose_from_audio_upload(const std::string& bytes) {
    const auto audio = decode_wav(detail::as_bytes(bytes));
    return pose::pose_from_audio(audio.samples, audio.sample_rate);
}

/// Registers the /api routes on `server`.
inline void install_routes(httplib::Server& server, ApiContext& ctx) {
    using namespace detail;
    server.set_payload_max_length(ctx.options.upload_limit);

    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const Error& e) {
            send_error(res, e);
        } catch (const std::exception& e) {
            send_error(res, 500, "InternalError", e.what());
        }
    });
    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (!res.body.empty()) return;
        if (res.status == 413) send_error(res, 413, "TooLarge", "upload exceeds the configured limit");
        else if (res.status == 404) send_error(res, 404, "NotFound", "no such endpoint");
    });

    server.Get("/api/spec", [](const httplib::Request&, httplib::Response& res) { send_json(res, 200, openapi_document()); });
    server.Get("/api/health", [](const httplib::Request&, httplib::Response& res) { send_json(res, 200, {{"status", "ok"}}); });

    server.Get("/api/pose-library", [&ctx](const httplib::Request&, httplib::Response& res) {
        auto out = nlohmann::json::array();
        for (const auto& e : ctx.library.list()) out.push_back({{"id", e.id}, {"name", e.name}, {"duration_s", e.duration_s}, {"fps", e.fps}});
        send_json(res, 200, out);
    });
    server.Get(R"(/api/pose-library/([A-Za-z0-9_-]+))", [&ctx](const httplib::Request& req, httplib::Response& res) {
        res.set_content(pose::to_json(ctx.library.get(req.matches[1])), "application/json");
    });
    server.Get(R"(/api/pose/([0-9a-f]+))", [&ctx](const httplib::Request& req, httplib::Response& res) {
        res.set_content(pose::to_json(load_stored_pose(ctx.artifacts, req.matches[1])), "application/json");
    });

    server.Post("/api/pose/extract", [&ctx](const httplib::Request& req, httplib::Response& res) {
        const auto video = field(req, "video");
        if (!video) return send_error(res, 400, "ParseError", "multipart field 'video' is required");
        const auto seq = pose_from_video_upload(*video, ctx.detector);
        send_json(res, 201, pose_summary(store_pose(ctx.artifacts, seq), seq));
    });
    server.Post("/api/pose/from-audio", [&ctx](const httplib::Request& req, httplib::Response& res) {
        const auto audio = field(req, "audio");
        if (!audio) return send_error(res, 400, "ParseError", "multipart field 'audio' is required");
        const auto seq = pose_from_audio_upload(*audio);
        send_json(res, 201, pose_summary(store_pose(ctx.artifacts, seq), seq));
    });

    server.Post("/api/jobs", [&ctx](const httplib::Request& req, httplib::Response& res) {
        const auto reference = field(req, "reference");
        if (!reference) return send_error(res, 400, "InvalidImage", "multipart field 'reference' is required");
        const Image image = decode_png(as_bytes(*reference));
        if (!ctx.detector.detect(image)) return send_error(res, 422, "NoFace", "no face found in the reference image");

        JobParamsRequest request;
        request.width = parse_number<int>(field(req, "width"), "width");
        request.height = parse_number<int>(field(req, "height"), "height");
        request.fps = parse_number<double>(field(req, "fps"), "fps");
        request.seed = parse_number<std::uint64_t>(field(req, "seed"), "seed");
        const JobParams params = request.resolve();

        const std::string source = field(req, "pose_source").value_or("");
        pose::PoseSequence seq;
        if (source.starts_with("library:")) {
            const auto id = source.substr(8);
            if (!ctx.library.contains(id)) return send_error(res, 404, "UnknownLibraryId", "no library sequence '" + id + "'");
            seq = ctx.library.get(id);
        } else if (source.starts_with("pose:")) {
            seq = load_stored_pose(ctx.artifacts, source.substr(5));
        } else if (source == "video" || source == "audio") {
            const auto upload = field(req, source);
            if (!upload) return send_error(res, 400, "ParseError", "multipart field '" + source + "' is required");
            try {
                seq = source == "video" ? pose_from_video_upload(*upload, ctx.detector) : pose_from_audio_upload(*upload);
            } catch (const Error& e) {
                return send_error(res, 422, "PoseExtractionFailed", e.what());
            }
        } else {
            return send_error(res, 400, "ParseError", "pose_source must be library:<id>, pose:<id>, video or audio");
        }
        const auto frames = pose::resample_pose(seq, params.fps).frames.size();
        if (frames > ctx.options.max_frames) {
            return send_error(res, 413, "TooLarge",
                              std::to_string(frames) + " frames exceeds the limit of " + std::to_string(ctx.options.max_frames));
        }
        const auto reference_ref = ctx.artifacts.put(encode_png(image), std::string(kPngMediaType)).id;
        const auto job = ctx.jobs.create(reference_ref, store_pose(ctx.artifacts, seq), source, params);
        send_json(res, 202, {{"id", job.id}, {"status", to_string(job.status)}, {"url", "/api/jobs/" + job.id}});
    });

    server.Get("/api/jobs", [&ctx](const httplib::Request&, httplib::Response& res) {
        auto out = nlohmann::json::array();
        for (const auto& j : ctx.jobs.list()) out.push_back(job_view(j));
        send_json(res, 200, out);
    });
    server.Get(R"(/api/jobs/([0-9a-f]+))", [&ctx](const httplib::Request& req, httplib::Response& res) {
        const auto job = ctx.jobs.get(req.matches[1]);
        if (!job) return send_error(res, 404, "NotFound", "no job '" + std::string(req.matches[1]) + "'");
        send_json(res, 200, job_view(*job));
    });
    server.Get(R"(/api/jobs/([0-9a-f]+)/result)", [&ctx](const httplib::Request& req, httplib::Response& res) {
        const auto job = ctx.jobs.get(req.matches[1]);
        if (!job) return send_error(res, 404, "NotFound", "no job '" + std::string(req.matches[1]) + "'");
        if (job->status != JobStatus::Succeeded || !job->result_ref) return send_error(res, 404, "NotFound", "job has no result yet");
        const auto bytes = ctx.artifacts.get(*job->result_ref);
        res.set_content(std::string(bytes.begin(), bytes.end()), ctx.artifacts.meta(*job->result_ref).media_type);
    });
}

inline nlohmann::json openapi_document() {
    const nlohmann::json error_ref = {{"$ref", "#/components/schemas/Error"}};
    auto err = [&](const char* text) {
        return nlohmann::json{{"description", text}, {"content", {{"application/json", {{"schema", error_ref}}}}}};
    };
    auto ok = [](const char* text, const char* schema) {
        return nlohmann::json{{"description", text},
                              {"content", {{"application/json", {{"schema", {{"$ref", std::string("#/components/schemas/") + schema}}}}}}}};
    };
    auto upload = [](const char* field) {
        return nlohmann::json{
            {"required", true},
            {"content",
             {{"multipart/form-data",
               {{"schema", {{"type", "object"}, {"required", {field}}, {"properties", {{field, {{"type", "string"}, {"format", "binary"}}}}}}}}}}}};
    };
    nlohmann::json doc;
    doc["openapi"] = "3.0.3";
    doc["info"] = {{"title", "facepose API"}, {"version", "1.0.0"}};
    doc["paths"]["/api/jobs"]["post"] = {
        {"summary", "Submit a generation job"},
        {"requestBody",
         {{"required", true},
          {"content",
           {{"multipart/form-data",
             {{"schema",
               {{"type", "object"},
                {"required", {"reference", "pose_source"}},
                {"properties",
                 {{"reference", {{"type", "string"}, {"format", "binary"}, {"description", "PNG reference face"}}},
                  {"pose_source", {{"type", "string"}, {"description", "library:<id>, pose:<id>, video or audio"}}},
                  {"video", {{"type", "string"}, {"format", "binary"}}},
                  {"audio", {{"type", "string"}, {"format", "binary"}}},
                  {"width", {{"type", "integer"}, {"default", 512}}},
                  {"height", {{"type", "integer"}, {"default", 512}}},
                  {"fps", {{"type", "number"}, {"default", 24}}},
                  {"seed", {{"type", "integer"}, {"default", 0}}}}}}}}}}}}},
        {"responses",
         {{"202", ok("Job queued", "JobAccepted")},
          {"400", err("InvalidImage or bad parameters")},
          {"404", err("UnknownLibraryId or unknown pose id")},
          {"413", err("TooLarge")},
          {"422", err("NoFace or PoseExtractionFailed")}}}};
    doc["paths"]["/api/jobs"]["get"] = {{"summary", "List jobs"}, {"responses", {{"200", {{"description", "Job records"}}}}}};
    doc["paths"]["/api/jobs/{id}"]["get"] = {
        {"summary", "Job record"},
        {"parameters", {{{"name", "id"}, {"in", "path"}, {"required", true}, {"schema", {{"type", "string"}}}}}},
        {"responses", {{"200", ok("Current job record", "Job")}, {"404", err("Unknown job")}}}};
    doc["paths"]["/api/jobs/{id}/result"]["get"] = {
        {"summary", "Download the result video"},
        {"parameters", {{{"name", "id"}, {"in", "path"}, {"required", true}, {"schema", {{"type", "string"}}}}}},
        {"responses", {{"200", {{"description", "Video bytes (video/mp4 or raw frames archive)"}}}, {"404", err("Unknown job or no result")}}}};
    doc["paths"]["/api/pose-library"]["get"] = {{"summary", "List library pose sequences"},
                                                {"responses", {{"200", {{"description", "Array of {id, name, duration_s, fps}"}}}}}};
    doc["paths"]["/api/pose-library/{id}"]["get"] = {
        {"summary", "Library pose sequence"},
        {"parameters", {{{"name", "id"}, {"in", "path"}, {"required", true}, {"schema", {{"type", "string"}}}}}},
        {"responses", {{"200", {{"description", "Pose JSON"}}}, {"404", err("Unknown id")}}}};
    doc["paths"]["/api/pose/{id}"]["get"] = {
        {"summary", "Stored pose sequence"},
        {"parameters", {{{"name", "id"}, {"in", "path"}, {"required", true}, {"schema", {{"type", "string"}}}}}},
        {"responses", {{"200", {{"description", "Pose JSON"}}}, {"404", err("Unknown id")}}}};
    doc["paths"]["/api/pose/extract"]["post"] = {
        {"summary", "Extract a pose sequence from an uploaded video"},
        {"requestBody", upload("video")},
        {"responses",
         {{"201", ok("Stored pose", "PoseSummary")}, {"413", err("TooLarge")}, {"422", err("UndecodableMedia or DetectorFailure")}}}};
    doc["paths"]["/api/pose/from-audio"]["post"] = {
        {"summary", "Predict a pose sequence from uploaded WAV audio"},
        {"requestBody", upload("audio")},
        {"responses", {{"201", ok("Stored pose", "PoseSummary")}, {"413", err("TooLarge")}, {"422", err("UndecodableMedia")}}}};
    doc["paths"]["/api/spec"]["get"] = {{"summary", "This document"}, {"responses", {{"200", {{"description", "OpenAPI document"}}}}}};
    doc["components"]["schemas"] = {
        {"Error", {{"type", "object"}, {"properties", {{"error", {{"type", "string"}}}, {"message", {{"type", "string"}}}}}}},
        {"JobAccepted",
         {{"type", "object"}, {"properties", {{"id", {{"type", "string"}}}, {"status", {{"type", "string"}}}, {"url", {{"type", "string"}}}}}}},
        {"PoseSummary",
         {{"type", "object"},
          {"properties",
           {{"id", {{"type", "string"}}}, {"frames", {{"type", "integer"}}}, {"fps", {{"type", "number"}}}, {"duration_s", {{"type", "number"}}}}}}},
        {"Job",
         {{"type", "object"},
          {"properties",
           {{"id", {{"type", "string"}}},
            {"status", {{"type", "string"}, {"enum", {"queued", "running", "succeeded", "failed"}}}},
            {"created_at", {{"type", "number"}}},
            {"pose_source", {{"type", "string"}}},
            {"params", {{"type", "object"}}},
            {"result_url", {{"type", "string"}}},
            {"result",
             {{"type", "object"},
              {"properties",
               {{"frames", {{"type", "integer"}}},
                {"fps", {{"type", "number"}}},
                {"width", {{"type", "integer"}}},
                {"height", {{"type", "integer"}}},
                {"duration_s", {{"type", "number"}}}}}}},
            {"error", {{"type", "string"}}}}}}}};
    return doc;
}

} // namespace facepose::service
