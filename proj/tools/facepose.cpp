// facepose command-line tool: training, offline generation, pose utilities, serving.
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <random>
#include <thread>

#include <CLI11.hpp>

#include "facepose/engine/checkpoint.hpp"
#include "facepose/engine/dataset.hpp"
#include "facepose/engine/generate.hpp"
#include "facepose/service/service.hpp"

using namespace facepose;

namespace {

constexpr int kUsage = 1;
constexpr int kFailure = 2;

struct TrainArgs {
    std::string config, data, out, log;
    long steps = 500;
    double lr = 3e-3;
    std::uint64_t seed = 0;
};

int cmd_train(const TrainArgs& a) {
    const auto config = engine::load_config(a.config);
    const auto clips = engine::load_training_clips(a.data, config.image_size);
    const auto samples = engine::all_train_samples(clips, config);
    engine::Model<float> model(config);
    engine::Trainer<float> trainer(model, {.lr = a.lr, .clip_norm = 1.0}, a.seed);

    const std::string log_path = a.log.empty() ? a.out + ".loss.csv" : a.log;
    std::ofstream log(log_path, std::ios::trunc);
    if (!log) fail(ErrorCode::IoError, "cannot write " + log_path);
    std::mt19937_64 pick(a.seed ^ 0x5eedULL);
    std::uniform_int_distribution<std::size_t> which(0, samples.size() - 1);
    for (long step = 1; step <= a.steps; ++step) {
        const float loss = trainer.step(samples[which(pick)]);
        std::cout << step << "," << loss << "\n";
        log << step << "," << loss << "\n";
    }
    std::cout.flush();
    engine::save_checkpoint(model, a.out);
    return 0;
}

struct InferArgs {
    std::string ref, pose, ckpt, out, debug_latents, library = "facepose-data/library", encoder = "auto";
    std::optional<std::uint64_t> seed;
};

int cmd_infer(const InferArgs& a) {
    const auto model = engine::load_checkpoint<float>(a.ckpt);
    const Image reference = read_png(a.ref);
    const pose::PoseSequence seq =
        std::filesystem::is_regular_file(a.pose) ? pose::load_pose(a.pose) : pose::PoseLibrary(a.library).get(a.pose);
    engine::GenerateOptions opts;
    opts.seed = a.seed;
    const auto result = engine::generate_video(*model, reference, seq, pose::BlobFaceDetector{}, opts);
    if (!a.debug_latents.empty()) engine::dump_latents(result.clip_latents, a.debug_latents);
    const auto video = service::encode_video(result.frames, seq.fps, service::encoder_from_string(a.encoder));
    write_file_bytes(a.out, video.bytes);
    std::cerr << "wrote " << result.frames.size() << " frames (" << video.media_type << ") to " << a.out << "\n";
    return 0;
}

int cmd_pose_extract(const std::string& video_path, const std::string& out) {
    const auto video = service::decode_video(read_file_bytes(video_path));
    pose::save_pose(pose::extract_pose_from_video(video.frames, video.fps, pose::BlobFaceDetector{}), out);
    return 0;
}

int cmd_pose_render(const std::string& pose_path, const std::string& out_dir, int width, int height) {
    const auto seq = pose::load_pose(pose_path);
    std::filesystem::create_directories(out_dir);
    const int w = width > 0 ? width : seq.width, h = height > 0 ? height : seq.height;
    for (std::size_t i = 0; i < seq.frames.size(); ++i) {
        write_png(std::filesystem::path(out_dir) / engine::frame_file_name(i), pose::render_pose_map(seq.frames[i], w, h));
    }
    return 0;
}

int cmd_pose_from_audio(const std::string& audio_path, const std::string& out) {
    const auto audio = service::decode_wav(read_file_bytes(audio_path));
    pose::save_pose(pose::pose_from_audio(audio.samples, audio.sample_rate), out);
    return 0;
}

std::atomic<bool> g_stop{false};

int cmd_serve(const std::string& config_path) {
    service::Service svc(service::load_service_config(config_path));
    const int port = svc.start();
    std::cerr << "listening on port " << port << "\n";
    std::signal(SIGINT, [](int) { g_stop = true; });
    std::signal(SIGTERM, [](int) { g_stop = true; });
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));
    svc.stop();
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"facepose: pose-driven face animation"};
    app.require_subcommand(1);

    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "Train a model on a frame-directory dataset");
    train_cmd->add_option("--config", train.config, "EngineConfig JSON")->required();
    train_cmd->add_option("--data", train.data, "Dataset directory")->required();
    train_cmd->add_option("--steps", train.steps, "Optimizer steps")->check(CLI::NonNegativeNumber);
    train_cmd->add_option("--out", train.out, "Checkpoint path")->required();
    train_cmd->add_option("--lr", train.lr, "Learning rate")->check(CLI::PositiveNumber);
    train_cmd->add_option("--log", train.log, "Loss CSV path (default <out>.loss.csv)");
    train_cmd->add_option("--seed", train.seed, "Sampling seed");

    InferArgs infer;
    auto* infer_cmd = app.add_subcommand("infer", "Animate a reference image with a pose sequence");
    infer_cmd->add_option("--ref", infer.ref, "Reference PNG")->required();
    infer_cmd->add_option("--pose", infer.pose, "Pose file or library id")->required();
    infer_cmd->add_option("--ckpt", infer.ckpt, "Checkpoint")->required();
    infer_cmd->add_option("--out", infer.out, "Output video")->required();
    infer_cmd->add_option("--seed", infer.seed, "Sampling seed (default: config seed)");
    infer_cmd->add_option("--debug-latents", infer.debug_latents, "Write final per-clip latents here");
    infer_cmd->add_option("--library", infer.library, "Pose library directory");
    infer_cmd->add_option("--encoder", infer.encoder, "auto | ffmpeg | raw")->check(CLI::IsMember({"auto", "ffmpeg", "raw"}));

    auto* pose_cmd = app.add_subcommand("pose", "Pose utilities");
    pose_cmd->require_subcommand(1);
    std::string video, audio, pose_in, out, out_dir;
    int width = 0, height = 0;
    auto* extract_cmd = pose_cmd->add_subcommand("extract", "Extract landmarks from a video");
    extract_cmd->add_option("--video", video, "Raw frames video")->required();
    extract_cmd->add_option("--out", out, "Pose file")->required();
    auto* render_cmd = pose_cmd->add_subcommand("render", "Render pose maps as PNGs");
    render_cmd->add_option("--pose", pose_in, "Pose file")->required();
    render_cmd->add_option("--out-dir", out_dir, "Output directory")->required();
    render_cmd->add_option("--width", width, "Canvas width (default: sequence width)");
    render_cmd->add_option("--height", height, "Canvas height (default: sequence height)");
    auto* audio_cmd = pose_cmd->add_subcommand("from-audio", "Predict a pose sequence from WAV audio");
    audio_cmd->add_option("--audio", audio, "WAV file")->required();
    audio_cmd->add_option("--out", out, "Pose file")->required();

    std::string serve_config;
    auto* serve_cmd = app.add_subcommand("serve", "Run the REST service");
    serve_cmd->add_option("--config", serve_config, "Service config JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return kUsage;
    }

    try {
        if (*train_cmd) return cmd_train(train);
        if (*infer_cmd) return cmd_infer(infer);
        if (*extract_cmd) return cmd_pose_extract(video, out);
        if (*render_cmd) return cmd_pose_render(pose_in, out_dir, width, height);
        if (*audio_cmd) return cmd_pose_from_audio(audio, out);
        if (*serve_cmd) return cmd_serve(serve_config);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
    return kUsage;
}
