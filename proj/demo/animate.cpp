// Trains a toy model briefly on a synthetic talking-face clip, then animates a
// reference face with the built-in "talk" sequence.
//
//   facepose_demo [out_dir] [train_steps]

#include <iostream>

#include "facepose/engine/generate.hpp"
#include "facepose/engine/train.hpp"
#include "facepose/service/media.hpp"
#include "facepose/synthetic.hpp"

using namespace facepose;

int main(int argc, char** argv) {
    const std::filesystem::path out_dir = argc > 1 ? argv[1] : "demo-out";
    const int steps = argc > 2 ? std::atoi(argv[2]) : 150;
    std::filesystem::create_directories(out_dir);

    const auto config = engine::EngineConfig::toy();
    engine::Model<float> model(config);
    const auto clip = synthetic::talking_face_clip(static_cast<std::size_t>(config.clip_len + config.n_motion), config.image_size);
    const auto sample = engine::make_train_sample(clip.frames, clip.poses, static_cast<std::size_t>(config.n_motion), config);
    engine::Trainer<float> trainer(model);
    for (int s = 1; s <= steps; ++s) {
        const float loss = trainer.step(sample);
        if (s == 1 || s % 25 == 0) std::cout << "step " << s << " loss " << loss << "\n";
    }

    const auto library = synthetic::builtin_library();
    const auto& talk = library[1].second;
    const auto result = engine::generate_video(model, synthetic::reference_face(config.image_size), talk, pose::BlobFaceDetector{});
    for (std::size_t i = 0; i < result.frames.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%05zu.png", i);
        write_png(out_dir / name, result.frames[i]);
    }
    const auto video = service::encode_video(result.frames, talk.fps);
    write_file_bytes(out_dir / (video.media_type == service::kMp4MediaType ? "talk.mp4" : "talk.rawv"), video.bytes);
    std::cout << "wrote " << result.frames.size() << " frames to " << out_dir << "\n";
}
