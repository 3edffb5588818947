#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <thread>

#include "facepose/service/service.hpp"
#include "facepose/synthetic.hpp"
#include "support.hpp"

using namespace facepose;
using namespace facepose::service;
using facepose::testing::TempDir;
using json = nlohmann::json;

namespace {

/// Manually advanced clock for lease tests.
struct FakeClock {
    std::shared_ptr<std::atomic<double>> now = std::make_shared<std::atomic<double>>(1000.0);
    Clock fn() const {
        return [n = now] { return n->load(); };
    }
    void advance(double s) const { *now = *now + s; }
};

/// Flat frames whose colour encodes the frame index; cheap and deterministic.
VideoGenerator stub_generator() {
    return [](const Image&, const pose::PoseSequence& seq, const JobParams& params, const std::function<void()>& heartbeat) {
        Frames out;
        for (std::size_t i = 0; i < seq.frames.size(); ++i) {
            out.emplace_back(params.width, params.height, 3, static_cast<float>(i % 10) / 10.0f);
            if (i % 8 == 7) heartbeat();
        }
        return out;
    };
}

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }
std::string string_of(const std::vector<std::uint8_t>& b) { return {b.begin(), b.end()}; }

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no facepose::Error thrown";
    return ErrorCode::IoError;
}

struct Stores {
    TempDir dir{"svc"};
    FakeClock clock;
    ArtifactStore artifacts{dir / "artifacts"};
    FileJobStore jobs{dir / "jobs", clock.fn()};

    GenerationJob submit(std::size_t frames = 12, JobParams params = {16, 16, 24.0, 0}) {
        const auto ref = artifacts.put(encode_png(synthetic::reference_face(32)), std::string(kPngMediaType)).id;
        auto seq = synthetic::talking_face_clip(frames, 32).poses;
        return jobs.create(ref, store_pose(artifacts, seq), "pose", params);
    }

    std::size_t video_artifacts() const {
        std::size_t n = 0;
        for (const auto& m : artifacts.list()) n += m.media_type == kRawVideoMediaType || m.media_type == kMp4MediaType;
        return n;
    }
};

std::size_t terminal_entries(const GenerationJob& j) {
    std::size_t n = 0;
    for (const auto& h : j.history) n += h == "succeeded" || h == "failed";
    return n;
}

} // namespace

// ---------------------------------------------------------------- media

TEST(Media, WavRoundTripPcm16) {
    std::vector<float> samples(800);
    for (std::size_t i = 0; i < samples.size(); ++i) samples[i] = 0.5f * std::sin(static_cast<float>(i) * 0.05f);
    const auto audio = decode_wav(encode_wav(samples, 16000));
    EXPECT_EQ(audio.sample_rate, 16000);
    ASSERT_EQ(audio.samples.size(), samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) ASSERT_NEAR(audio.samples[i], samples[i], 1.0 / 32767.0);
}

TEST(Media, WavRejectsGarbage) {
    EXPECT_EQ(code_of([] { decode_wav(bytes_of("RIFF....WAVEjunk")); }), ErrorCode::UndecodableMedia);
    EXPECT_EQ(code_of([] { decode_wav(bytes_of("hello")); }), ErrorCode::UndecodableMedia);
}

TEST(Media, RawVideoRoundTripAndProbe) {
    Frames frames;
    for (int i = 0; i < 5; ++i) frames.emplace_back(7, 3, 3, static_cast<float>(i) * 0.25f);
    const auto bytes = encode_raw_video(frames, 12.5);
    const auto info = probe_raw_video(bytes);
    EXPECT_EQ(info.width, 7);
    EXPECT_EQ(info.height, 3);
    EXPECT_EQ(info.frames, 5u);
    EXPECT_DOUBLE_EQ(info.duration_s(), 5 / 12.5);
    const auto video = decode_video(bytes);
    ASSERT_EQ(video.frames.size(), 5u);
    EXPECT_FLOAT_EQ(video.frames[4].at(6, 2, 1), 1.0f);
    EXPECT_FLOAT_EQ(video.frames[2].at(0, 0, 0), 128.0f / 255.0f);  // 8-bit quantized
}

TEST(Media, RawVideoRejectsCorruption) {
    const auto good = encode_raw_video(Frames(2, Image(4, 4, 3, 0.5f)), 24.0);
    auto truncated = good;
    truncated.resize(truncated.size() - 1);
    EXPECT_EQ(code_of([&] { decode_video(truncated); }), ErrorCode::UndecodableMedia);
    EXPECT_EQ(code_of([&] { decode_video(bytes_of("not a video at all")); }), ErrorCode::UndecodableMedia);
}

TEST(Media, EncodeVideoErrors) {
    EXPECT_EQ(code_of([] { encode_video({}, 24.0, EncoderChoice::Raw); }), ErrorCode::EncodeFailed);
    EXPECT_EQ(code_of([] { encode_video(Frames{Image(4, 4, 3)}, 0.0, EncoderChoice::Raw); }), ErrorCode::EncodeFailed);
    EXPECT_EQ(code_of([] { encode_video(Frames{Image(4, 4, 3), Image(5, 4, 3)}, 24.0, EncoderChoice::Raw); }), ErrorCode::EncodeFailed);
    const auto v = encode_video(Frames(3, Image(4, 4, 3)), 24.0, EncoderChoice::Raw);
    EXPECT_EQ(v.media_type, kRawVideoMediaType);
    if (!find_ffmpeg()) {
        EXPECT_EQ(code_of([] { encode_video(Frames{Image(4, 4, 3)}, 24.0, EncoderChoice::Ffmpeg); }), ErrorCode::EncoderUnavailable);
        EXPECT_EQ(encode_video(Frames{Image(4, 4, 3)}, 24.0, EncoderChoice::Auto).media_type, kRawVideoMediaType);
    }
    EXPECT_THROW(encoder_from_string("h265"), Error);
}

// ---------------------------------------------------------------- artifacts

TEST(Artifacts, ContentAddressedAndDeduplicated) {
    TempDir dir("art");
    ArtifactStore store(dir.path());
    const auto a = store.put(bytes_of("hello"), "text/plain");
    EXPECT_EQ(a.id, "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824");
    EXPECT_EQ(a.size, 5u);
    const auto b = store.put(bytes_of("hello"), "text/plain");
    EXPECT_EQ(a.id, b.id);
    store.put(bytes_of("world"), "text/plain");
    EXPECT_EQ(store.list().size(), 2u);
    EXPECT_EQ(string_of(store.get(a.id)), "hello");
    EXPECT_EQ(store.meta(a.id).media_type, "text/plain");
    EXPECT_EQ(code_of([&] { store.get(std::string(64, '0')); }), ErrorCode::NotFound);
    EXPECT_FALSE(ArtifactStore::valid_id("../etc/passwd"));
}

TEST(Artifacts, CorruptionDetected) {
    TempDir dir("art");
    ArtifactStore store(dir.path());
    const auto a = store.put(bytes_of("payload"), "text/plain");
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir.path())) {
        if (e.is_regular_file() && e.path().filename().string().starts_with(a.id) && e.path().extension() != ".json") {
            write_file_bytes(e.path(), bytes_of("tampered"));
        }
    }
    EXPECT_EQ(code_of([&] { store.get(a.id); }), ErrorCode::IoError);
}

// ---------------------------------------------------------------- job store

TEST(JobStore, ParamsResolveToPlatformDefaults) {
    const auto p = JobParamsRequest{}.resolve();
    EXPECT_EQ(p.width, 512);
    EXPECT_EQ(p.height, 512);
    EXPECT_DOUBLE_EQ(p.fps, 24.0);
    EXPECT_EQ(JobParamsRequest{.width = 64}.resolve().height, 512);
    EXPECT_EQ(code_of([] { JobParamsRequest{.width = 4}.resolve(); }), ErrorCode::BadCanvas);
    EXPECT_EQ(code_of([] { JobParamsRequest{.fps = 0.0}.resolve(); }), ErrorCode::BadFps);
    EXPECT_EQ(code_of([] { JobParamsRequest{.fps = 1000.0}.resolve(); }), ErrorCode::BadFps);
}

TEST(JobStore, StateMachine) {
    Stores s;
    const auto job = s.submit();
    EXPECT_EQ(job.status, JobStatus::Queued);
    const auto claimed = s.jobs.claim("w1", 30);
    ASSERT_TRUE(claimed);
    EXPECT_EQ(claimed->id, job.id);
    EXPECT_EQ(claimed->status, JobStatus::Running);
    EXPECT_FALSE(s.jobs.claim("w2", 30));  // leased
    EXPECT_FALSE(s.jobs.succeed(job.id, "w2#1", "x", {}));
    EXPECT_TRUE(s.jobs.succeed(job.id, claimed->lease_token(), "x", {.frames = 3}));
    EXPECT_FALSE(s.jobs.fail_job(job.id, claimed->lease_token(), "late"));  // terminal is final
    const auto done = s.jobs.get(job.id);
    EXPECT_EQ(done->status, JobStatus::Succeeded);
    EXPECT_EQ(done->history, (std::vector<std::string>{"queued", "running", "succeeded"}));
    EXPECT_FALSE(s.jobs.get("nothex"));
}

TEST(JobStore, ClaimsInCreationOrderAndPersists) {
    Stores s;
    const auto a = s.submit(), b = s.submit();
    EXPECT_EQ(s.jobs.claim("w", 30)->id, a.id);
    EXPECT_EQ(s.jobs.claim("w", 30)->id, b.id);
    FileJobStore reopened(s.dir / "jobs", s.clock.fn());
    EXPECT_EQ(reopened.list().size(), 2u);
    EXPECT_EQ(reopened.get(a.id)->status, JobStatus::Running);
}

TEST(JobStore, ExpiredLeaseIsReclaimedAndStaleTokenLoses) {
    Stores s;
    const auto job = s.submit();
    const auto first = s.jobs.claim("w1", 10);
    s.clock.advance(5);
    EXPECT_TRUE(s.jobs.renew(job.id, first->lease_token(), 10));
    s.clock.advance(9);
    EXPECT_FALSE(s.jobs.claim("w2", 10));  // renewal pushed expiry out
    s.clock.advance(2);
    const auto second = s.jobs.claim("w2", 10);
    ASSERT_TRUE(second);
    EXPECT_EQ(second->attempts, 2);
    EXPECT_FALSE(s.jobs.renew(job.id, first->lease_token(), 10));
    EXPECT_FALSE(s.jobs.succeed(job.id, first->lease_token(), "x", {}));
    EXPECT_TRUE(s.jobs.succeed(job.id, second->lease_token(), "y", {}));
    EXPECT_EQ(*s.jobs.get(job.id)->result_ref, "y");
}

TEST(JobStore, GivesUpAfterMaxAttempts) {
    Stores s;
    const auto job = s.submit();
    for (int i = 0; i < 3; ++i) {
        ASSERT_TRUE(s.jobs.claim("w", 1));
        s.clock.advance(2);
    }
    EXPECT_FALSE(s.jobs.claim("w", 1));
    const auto j = s.jobs.get(job.id);
    EXPECT_EQ(j->status, JobStatus::Failed);
    EXPECT_EQ(terminal_entries(*j), 1u);
}

TEST(JobStore, JsonRoundTrip) {
    Stores s;
    auto j = s.submit();
    j.result = ResultMeta{4, 24.0, 16, 16, 4 / 24.0, "video/mp4"};
    j.result_ref = "abc";
    j.error = "none";
    const auto back = job_from_json(to_json(j));
    EXPECT_EQ(back.id, j.id);
    EXPECT_EQ(back.history, j.history);
    EXPECT_EQ(back.result->frames, 4u);
    EXPECT_EQ(*back.result_ref, "abc");
    EXPECT_EQ(back.params.width, 16);
}

// ---------------------------------------------------------------- worker

TEST(WorkerTest, CompletesJobWithDurationMetadata) {
    Stores s;
    const auto job = s.submit(48);
    Worker w(s.jobs, s.artifacts, stub_generator(), {.id = "w", .encoder = EncoderChoice::Raw});
    EXPECT_TRUE(w.run_once());
    EXPECT_FALSE(w.run_once());
    const auto done = s.jobs.get(job.id);
    ASSERT_EQ(done->status, JobStatus::Succeeded);
    EXPECT_EQ(done->result->frames, 48u);
    EXPECT_DOUBLE_EQ(done->result->duration_s, 2.0);
    const auto info = probe_raw_video(s.artifacts.get(*done->result_ref));
    EXPECT_EQ(info.frames, 48u);
    EXPECT_EQ(info.width, 16);
    EXPECT_DOUBLE_EQ(info.duration_s(), done->result->duration_s);
}

TEST(WorkerTest, ResamplesPoseToJobFps) {
    Stores s;
    const auto job = s.submit(24, {16, 16, 12.0, 0});  // 1 s of 24 fps poses at 12 fps
    Worker w(s.jobs, s.artifacts, stub_generator(), {.encoder = EncoderChoice::Raw});
    w.run_once();
    const auto done = s.jobs.get(job.id);
    EXPECT_EQ(done->result->frames, 12u);
    EXPECT_DOUBLE_EQ(done->result->duration_s, 1.0);
}

TEST(WorkerTest, GeneratorFailureFailsJobOnce) {
    Stores s;
    const auto job = s.submit();
    Worker w(s.jobs, s.artifacts,
             [](const Image&, const pose::PoseSequence&, const JobParams&, const std::function<void()>&) -> Frames {
                 fail(ErrorCode::NoFace, "no face found in the reference image");
             },
             {.encoder = EncoderChoice::Raw});
    w.run_once();
    const auto j = s.jobs.get(job.id);
    EXPECT_EQ(j->status, JobStatus::Failed);
    EXPECT_NE(j->error->find("no face"), std::string::npos);
    EXPECT_EQ(terminal_entries(*j), 1u);
    EXPECT_EQ(s.video_artifacts(), 0u);
}

TEST(WorkerTest, FrameLimitFailsJob) {
    Stores s;
    const auto job = s.submit(20);
    Worker w(s.jobs, s.artifacts, stub_generator(), {.max_frames = 10, .encoder = EncoderChoice::Raw});
    w.run_once();
    EXPECT_EQ(s.jobs.get(job.id)->status, JobStatus::Failed);
}

class CrashInjection : public ::testing::TestWithParam<CrashPoint> {};

TEST_P(CrashInjection, ExactlyOneTerminalTransitionAndOneArtifact) {
    Stores s;
    const auto job = s.submit(30);
    Worker crashing(s.jobs, s.artifacts, stub_generator(), {.id = "a", .lease_seconds = 10, .encoder = EncoderChoice::Raw});
    Worker healthy(s.jobs, s.artifacts, stub_generator(), {.id = "b", .lease_seconds = 10, .encoder = EncoderChoice::Raw});
    EXPECT_THROW(crashing.run_once(GetParam()), InjectedCrash);
    EXPECT_EQ(s.jobs.get(job.id)->status, JobStatus::Running);
    EXPECT_FALSE(healthy.run_once());  // lease still held by the dead worker
    s.clock.advance(11);
    EXPECT_TRUE(healthy.run_once());
    EXPECT_FALSE(healthy.run_once());

    const auto done = s.jobs.get(job.id);
    ASSERT_EQ(done->status, JobStatus::Succeeded);
    EXPECT_EQ(terminal_entries(*done), 1u);
    EXPECT_EQ(done->attempts, 2);
    EXPECT_EQ(s.video_artifacts(), 1u);
    EXPECT_DOUBLE_EQ(done->result->duration_s, 30 / 24.0);
    EXPECT_EQ(probe_raw_video(s.artifacts.get(*done->result_ref)).frames, 30u);
}

INSTANTIATE_TEST_SUITE_P(Points, CrashInjection,
                         ::testing::Values(CrashPoint::AfterClaim, CrashPoint::AfterGenerate, CrashPoint::AfterStore));

TEST(WorkerTest, ConcurrentWorkersProcessEachJobOnce) {
    Stores s;
    std::vector<std::string> ids;
    for (int i = 0; i < 6; ++i) ids.push_back(s.submit(4 + static_cast<std::size_t>(i)).id);
    std::vector<std::jthread> threads;
    for (int k = 0; k < 3; ++k) {
        threads.emplace_back([&s, k] {
            Worker w(s.jobs, s.artifacts, stub_generator(), {.id = "w" + std::to_string(k), .encoder = EncoderChoice::Raw});
            while (w.run_once()) {
            }
        });
    }
    threads.clear();
    for (const auto& id : ids) {
        const auto j = s.jobs.get(id);
        EXPECT_EQ(j->status, JobStatus::Succeeded);
        EXPECT_EQ(j->attempts, 1);
        EXPECT_EQ(terminal_entries(*j), 1u);
    }
    EXPECT_EQ(s.video_artifacts(), 6u);
}

// ---------------------------------------------------------------- REST API

namespace {

class Api : public ::testing::Test {
protected:
    void SetUp() override {
        start([](ServiceConfig&) {});
    }

    void start(const std::function<void(ServiceConfig&)>& tweak) {
        service_.reset();
        ServiceConfig cfg;
        cfg.port = 0;
        cfg.data_dir = dir_ / ("data" + std::to_string(++restarts_));
        cfg.encoder = "raw";
        cfg.workers = 1;
        tweak(cfg);
        service_ = std::make_unique<Service>(cfg, stub_generator());
        client_ = std::make_unique<httplib::Client>("127.0.0.1", service_->start());
        client_->set_read_timeout(30, 0);
    }

    httplib::Result submit(httplib::MultipartFormDataItems items) { return client_->Post("/api/jobs", items); }

    static httplib::MultipartFormDataItems job_form(const std::string& source, const Image& reference = synthetic::reference_face(64)) {
        const auto png = encode_png(reference);
        return {{"reference", std::string(png.begin(), png.end()), "ref.png", "image/png"}, {"pose_source", source, "", ""}};
    }

    json wait_for(const std::string& id) {
        for (int i = 0; i < 300; ++i) {
            auto j = json::parse(client_->Get("/api/jobs/" + id)->body);
            if (j["status"] == "succeeded" || j["status"] == "failed") return j;
            std::this_thread::sleep_for(std::chrono::milliseconds(50));
        }
        ADD_FAILURE() << "job " << id << " did not finish";
        return {};
    }

    TempDir dir_{"api"};
    int restarts_ = 0;
    std::unique_ptr<Service> service_;
    std::unique_ptr<httplib::Client> client_;
};

} // namespace

TEST_F(Api, HealthSpecAndLibrary) {
    EXPECT_EQ(client_->Get("/api/health")->status, 200);
    const auto spec = json::parse(client_->Get("/api/spec")->body);
    EXPECT_EQ(spec["openapi"], "3.0.3");
    EXPECT_TRUE(spec["paths"].contains("/api/jobs"));
    const auto lib = json::parse(client_->Get("/api/pose-library")->body);
    ASSERT_EQ(lib.size(), 3u);
    EXPECT_EQ(lib[0]["id"], "nod");
    EXPECT_DOUBLE_EQ(lib[0]["duration_s"].get<double>(), 2.0);
    const auto talk = pose::from_json(client_->Get("/api/pose-library/talk")->body);
    EXPECT_EQ(talk.frames.size(), 48u);
    const auto missing = client_->Get("/api/pose-library/nope");
    EXPECT_EQ(missing->status, 404);
    EXPECT_EQ(json::parse(missing->body)["error"], "NotFound");
}

TEST_F(Api, JobLifecycleWithLibraryPose) {
    auto form = job_form("library:talk");
    form.push_back({"width", "64", "", ""});
    form.push_back({"height", "48", "", ""});
    const auto res = submit(form);
    ASSERT_EQ(res->status, 202) << res->body;
    const auto body = json::parse(res->body);
    EXPECT_EQ(body["status"], "queued");
    const auto done = wait_for(body["id"]);
    ASSERT_EQ(done["status"], "succeeded") << done.dump();
    EXPECT_EQ(done["result"]["frames"], 48);
    EXPECT_DOUBLE_EQ(done["result"]["duration_s"].get<double>(), 2.0);
    EXPECT_EQ(done["params"]["fps"], 24.0);
    const auto video = client_->Get(done["result_url"].get<std::string>());
    ASSERT_EQ(video->status, 200);
    EXPECT_EQ(video->get_header_value("Content-Type"), kRawVideoMediaType);
    const auto info = probe_raw_video(bytes_of(video->body));
    EXPECT_EQ(info.width, 64);
    EXPECT_EQ(info.height, 48);
    EXPECT_DOUBLE_EQ(info.duration_s(), 2.0);
    EXPECT_EQ(json::parse(client_->Get("/api/jobs")->body).size(), 1u);
}

TEST_F(Api, UnsetParamsUseDefaults) {
    start([](ServiceConfig& c) { c.workers = 0; });
    const auto res = submit(job_form("library:nod"));
    ASSERT_EQ(res->status, 202);
    const auto job = json::parse(client_->Get("/api/jobs/" + json::parse(res->body)["id"].get<std::string>())->body);
    EXPECT_EQ(job["params"]["width"], 512);
    EXPECT_EQ(job["params"]["height"], 512);
    EXPECT_EQ(job["params"]["fps"], 24.0);
    EXPECT_EQ(job["status"], "queued");
}

TEST_F(Api, SubmissionErrors) {
    auto no_face = submit(job_form("library:talk", Image(64, 64, 3, 0.0f)));
    EXPECT_EQ(no_face->status, 422);
    EXPECT_EQ(json::parse(no_face->body)["error"], "NoFace");

    auto unknown = submit(job_form("library:missing"));
    EXPECT_EQ(unknown->status, 404);
    EXPECT_EQ(json::parse(unknown->body)["error"], "UnknownLibraryId");

    auto bad_png = submit({{"reference", "not a png", "r.png", "image/png"}, {"pose_source", "library:talk", "", ""}});
    EXPECT_EQ(bad_png->status, 400);
    EXPECT_EQ(json::parse(bad_png->body)["error"], "InvalidImage");

    auto missing_ref = submit({{"pose_source", "library:talk", "", ""}});
    EXPECT_EQ(missing_ref->status, 400);

    auto bad_source = submit(job_form("somewhere"));
    EXPECT_EQ(bad_source->status, 400);

    auto form = job_form("library:talk");
    form.push_back({"fps", "0", "", ""});
    EXPECT_EQ(json::parse(submit(form)->body)["error"], "BadFps");

    auto corrupt = job_form("video");
    corrupt.push_back({"video", "garbage bytes", "v.bin", "application/octet-stream"});
    const auto r = submit(corrupt);
    EXPECT_EQ(r->status, 422);
    EXPECT_EQ(json::parse(r->body)["error"], "PoseExtractionFailed");

    EXPECT_EQ(client_->Get("/api/jobs/" + std::string(32, 'a'))->status, 404);
    EXPECT_EQ(client_->Get("/api/jobs/" + std::string(32, 'a') + "/result")->status, 404);
}

TEST_F(Api, FrameCapReturns413) {
    start([](ServiceConfig& c) { c.max_frames = 30; });
    const auto res = submit(job_form("library:talk"));
    EXPECT_EQ(res->status, 413);
    EXPECT_EQ(json::parse(res->body)["error"], "TooLarge");
}

TEST_F(Api, UploadLimitReturns413) {
    start([](ServiceConfig& c) { c.upload_limit = 64 * 1024; });
    auto form = job_form("audio");
    form.push_back({"audio", std::string(200 * 1024, 'x'), "a.wav", "audio/wav"});
    EXPECT_EQ(submit(form)->status, 413);
}

TEST_F(Api, PoseFromAudioAndReuse) {
    const auto wav = encode_wav(std::vector<float>(16000, 0.0f), 16000);
    const auto res = client_->Post("/api/pose/from-audio", httplib::MultipartFormDataItems{{"audio", string_of(wav), "a.wav", "audio/wav"}});
    ASSERT_EQ(res->status, 201) << res->body;
    const auto body = json::parse(res->body);
    EXPECT_EQ(body["frames"], 24);
    EXPECT_DOUBLE_EQ(body["duration_s"].get<double>(), 1.0);
    const auto id = body["id"].get<std::string>();
    EXPECT_EQ(pose::from_json(client_->Get("/api/pose/" + id)->body).frames.size(), 24u);

    auto form = job_form("pose:" + id);
    form.push_back({"width", "32", "", ""});
    form.push_back({"height", "32", "", ""});
    const auto job = submit(form);
    ASSERT_EQ(job->status, 202);
    const auto done = wait_for(json::parse(job->body)["id"]);
    EXPECT_EQ(done["result"]["frames"], 24);
}

TEST_F(Api, PoseExtractFromRawVideo) {
    const auto clip = synthetic::talking_face_clip(6, 64);
    const auto res = client_->Post("/api/pose/extract",
                                   httplib::MultipartFormDataItems{{"video", string_of(encode_raw_video(clip.frames, 24.0)), "v.rawv", ""}});
    ASSERT_EQ(res->status, 201) << res->body;
    EXPECT_EQ(json::parse(res->body)["frames"], 6);

    const auto bad = client_->Post("/api/pose/extract", httplib::MultipartFormDataItems{{"video", "corrupt", "v.mp4", ""}});
    EXPECT_EQ(bad->status, 422);
    EXPECT_EQ(json::parse(bad->body)["error"], "UndecodableMedia");
}

TEST_F(Api, JobsSurviveRestart) {
    start([](ServiceConfig& c) {
        c.workers = 0;
        c.data_dir = c.data_dir.parent_path() / "shared";
    });
    const auto id = json::parse(submit(job_form("library:nod"))->body)["id"].get<std::string>();
    start([](ServiceConfig& c) { c.data_dir = c.data_dir.parent_path() / "shared"; });
    EXPECT_EQ(wait_for(id)["status"], "succeeded");
}

TEST(ServiceConfigTest, ParsesAndValidates) {
    const auto c = service_config_from_json(json{{"port", 9000}, {"data_dir", "/tmp/x"}, {"max_frames", 100}});
    EXPECT_EQ(c.port, 9000);
    EXPECT_EQ(c.jobs_path(), std::filesystem::path("/tmp/x/jobs"));
    EXPECT_EQ(c.max_frames, 100u);
    EXPECT_EQ(code_of([] { service_config_from_json(json{{"port", -1}}); }), ErrorCode::BadConfig);
    EXPECT_EQ(code_of([] { service_config_from_json(json{{"encoder", "h265"}}); }), ErrorCode::BadConfig);
    EXPECT_EQ(code_of([] { service_config_from_json(json{{"workers", "two"}}); }), ErrorCode::BadConfig);
}
