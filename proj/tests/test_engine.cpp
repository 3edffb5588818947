#include <gtest/gtest.h>

#include <chrono>
#include <fstream>
#include <random>

#include "facepose/engine/checkpoint.hpp"
#include "facepose/engine/dataset.hpp"
#include "facepose/engine/generate.hpp"
#include "facepose/synthetic.hpp"
#include "support.hpp"

using namespace facepose;
using namespace facepose::engine;
using facepose::testing::TempDir;

namespace {

EngineConfig fast_toy(int sample_steps = 2) {
    auto c = EngineConfig::toy();
    c.sample_steps = sample_steps;
    return c;
}

pose::PoseSequence moving_sequence(std::size_t n) {
    const auto clip = synthetic::talking_face_clip(n, 64);
    return clip.poses;
}

/// Gives every UNet weight a nonzero value so eps_pred depends on its input.
template <class S>
void perturb_unet(const Model<S>& model, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 0.05);
    for (auto [name, p] : model.trainable()) {
        if (!name.starts_with("unet.")) continue;
        for (auto& v : p.mutable_value()) v += static_cast<S>(g(rng));
    }
}

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no facepose::Error thrown";
    return ErrorCode::IoError;
}

} // namespace

// ---------------------------------------------------------------- schedule

TEST(Schedule, MatchesBruteForceProduct) {
    const auto s = make_schedule(1000, 8.5e-4, 1.2e-2);
    ASSERT_EQ(s.steps(), 1000);
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        long double prod = 1.0L;
        for (int i = 0; i <= t; ++i) prod *= 1.0L - (8.5e-4L + (1.2e-2L - 8.5e-4L) * i / 999.0L);
        worst = std::max(worst, std::abs(static_cast<double>(prod) - s.alpha_bar[static_cast<std::size_t>(t)]));
    }
    EXPECT_LE(worst, 1e-12);
    EXPECT_DOUBLE_EQ(s.betas.front(), 8.5e-4);
    EXPECT_DOUBLE_EQ(s.betas.back(), 1.2e-2);
}

TEST(Schedule, AlphaBarStrictlyDecreasing) {
    const auto s = make_schedule(1000, 8.5e-4, 1.2e-2);
    for (std::size_t t = 1; t < s.alpha_bar.size(); ++t) ASSERT_LT(s.alpha_bar[t], s.alpha_bar[t - 1]);
    EXPECT_GT(s.alpha_bar.back(), 0.0);
}

TEST(Schedule, FromBetaTable) {
    const std::vector<double> betas{0.1, 0.2, 0.5};
    const auto s = make_schedule(betas);
    EXPECT_DOUBLE_EQ(s.alpha_bar[2], 0.9 * 0.8 * 0.5);
    EXPECT_EQ(code_of([] { make_schedule(std::vector<double>{}); }), ErrorCode::BadSchedule);
    EXPECT_EQ(code_of([] { make_schedule(10, 0.2, 0.1); }), ErrorCode::BadSchedule);
    EXPECT_EQ(code_of([] { make_schedule(0, 0.1, 0.2); }), ErrorCode::BadSchedule);
}

TEST(Schedule, SamplingTimesteps) {
    const auto ts = sampling_timesteps(1000, 25);
    ASSERT_EQ(ts.size(), 25u);
    EXPECT_EQ(ts.front(), 999);
    EXPECT_EQ(ts[1], 959);
    EXPECT_EQ(ts.back(), 39);
    EXPECT_EQ(sampling_timesteps(10, 10), (std::vector<int>{9, 8, 7, 6, 5, 4, 3, 2, 1, 0}));
    EXPECT_THROW(sampling_timesteps(10, 11), Error);
    EXPECT_THROW(sampling_timesteps(10, 0), Error);
}

TEST(Ddim, OracleEpsRecoversX0) {
    const auto s = make_schedule(1000, 8.5e-4, 1.2e-2);
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_int_distribution<int> pick_t(0, 999);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<float> x0(48 * 16 * 16), eps(x0.size());
        for (auto& v : x0) v = static_cast<float>(g(rng));
        for (auto& v : eps) v = static_cast<float>(g(rng));
        const int t = pick_t(rng);
        const auto xt = add_noise<float>(x0, eps, t, s);
        const auto rec = ddim_step<float>(xt, eps, t, -1, s);
        for (std::size_t i = 0; i < x0.size(); ++i) worst = std::max(worst, static_cast<double>(std::abs(rec[i] - x0[i])));
    }
    EXPECT_LE(worst, 1e-5);
}

TEST(Ddim, IntermediateStepIsDeterministicReprojection) {
    const auto s = make_schedule(1000, 8.5e-4, 1.2e-2);
    const std::vector<double> x0{0.5, -1.0}, eps{0.3, 0.7};
    const auto xt = add_noise<double>(x0, eps, 800, s);
    const auto x_prev = ddim_step<double>(xt, eps, 800, 400, s);
    const auto expected = add_noise<double>(x0, eps, 400, s);
    for (int i = 0; i < 2; ++i) EXPECT_NEAR(x_prev[i], expected[i], 1e-12);
}

TEST(Ddim, RejectsBadSteps) {
    const auto s = make_schedule(10, 0.01, 0.02);
    const std::vector<float> v{1.0f};
    EXPECT_EQ(code_of([&] { ddim_step<float>(v, v, 10, 5, s); }), ErrorCode::BadStep);
    EXPECT_EQ(code_of([&] { ddim_step<float>(v, v, -1, -1, s); }), ErrorCode::BadStep);
    EXPECT_EQ(code_of([&] { ddim_step<float>(v, v, 5, 5, s); }), ErrorCode::BadStepOrder);
    EXPECT_EQ(code_of([&] { ddim_step<float>(v, v, 5, -2, s); }), ErrorCode::BadStepOrder);
    EXPECT_EQ(code_of([&] { add_noise<float>(v, v, 10, s); }), ErrorCode::BadStep);
}

// ---------------------------------------------------------------- codec and config

TEST(Codec, SpaceToChannelRoundTripIsBitExact) {
    SpaceToChannelCodec<float> codec(4);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    std::vector<float> px(2 * 3 * 64 * 64);
    for (auto& v : px) v = u(rng);
    const auto x = ag::Var<float>::constant({2, 3, 64, 64}, px);
    const auto z = codec.encode(x);
    EXPECT_EQ(z.shape(), (ag::Shape{2, 48, 16, 16}));
    EXPECT_EQ(codec.decode(z).value(), px);
    // latent channel (c, dy, dx) holds pixel (c, 4y+dy, 4x+dx)
    EXPECT_EQ(z.value()[((0 * 48 + (1 * 16 + 2 * 4 + 3)) * 16 + 5) * 16 + 7], px[(1 * 64 + 4 * 5 + 2) * 64 + 4 * 7 + 3]);
    EXPECT_THROW(codec.encode(ag::Var<float>::zeros({1, 3, 62, 64})), Error);
}

TEST(Codec, LearnedAutoencoderFitsSmallSet) {
    ConvAutoencoder<float> codec(4, 8, 1);
    const auto clip = synthetic::talking_face_clip(2, 16);
    const double mse = codec.fit(clip.frames, 400);
    EXPECT_LT(mse, 1e-2);
}

TEST(Config, JsonRoundTripAndValidation) {
    auto c = EngineConfig::toy();
    c.seed = 99;
    c.n_motion = 4;
    EXPECT_EQ(config_from_json(to_json(c)), c);
    EXPECT_EQ(config_from_json(nlohmann::json{{"profile", "toy"}}), EngineConfig::toy());
    EXPECT_EQ(code_of([] { config_from_json(nlohmann::json{{"profile", "toy"}, {"n_motion", 3}}); }), ErrorCode::BadConfig);
    EXPECT_EQ(code_of([] { config_from_json(nlohmann::json{{"profile", "toy"}, {"latent_channels", 4}}); }), ErrorCode::BadConfig);
    EXPECT_EQ(code_of([] { config_from_json(nlohmann::json{{"clip_len", "eight"}}); }), ErrorCode::BadConfig);
    EXPECT_EQ(code_of([] { config_from_json(nlohmann::json{{"sample_steps", 2000}}); }), ErrorCode::BadConfig);
}

TEST(Config, DefaultProfileIs512At24) {
    const EngineConfig c;
    EXPECT_EQ(c.image_size, 512);
    EXPECT_EQ(c.fps_out, 24);
    EXPECT_EQ(c.latent_size(), 64);
}

// ---------------------------------------------------------------- conditioning shapes

TEST(Shapes, ReferenceNetChannelsPerMotionCount) {
    const auto ref = synthetic::reference_face(64);
    for (int n : {0, 1, 2, 4}) {
        auto cfg = EngineConfig::toy();
        cfg.n_motion = n;
        Model<float> model(cfg);
        EXPECT_EQ(model.reference_net().in_channels, 48 * (n + 1));
        conditioning::MotionWindow w;
        w.frames.assign(static_cast<std::size_t>(n), ref);
        const auto feats = model.reference_features(conditioning::stack_reference(ref, w));
        ASSERT_EQ(feats.size(), 2u);
        EXPECT_EQ(feats[0].shape(), (ag::Shape{1, cfg.base_channels, 16, 16}));
        EXPECT_EQ(feats[1].shape(), (ag::Shape{1, 2 * cfg.base_channels, 8, 8}));
        for (int m : {0, 1, 2, 4}) {
            if (m == n) continue;
            conditioning::MotionWindow wrong;
            wrong.frames.assign(static_cast<std::size_t>(m), ref);
            EXPECT_EQ(code_of([&] { model.reference_features(conditioning::stack_reference(ref, wrong)); }), ErrorCode::ShapeMismatch);
        }
    }
}

TEST(Shapes, GuiderOutputsMatchLatent) {
    Model<float> model(EngineConfig::toy());
    const Frames maps(3, pose::render_pose_map(pose::neutral_face68(), 64, 64));
    EXPECT_EQ(model.pose_guide(maps).shape(), (ag::Shape{3, 48, 16, 16}));
    EXPECT_EQ(model.encode_frames(maps).shape(), (ag::Shape{3, 48, 16, 16}));
    EXPECT_EQ(model.facemask_guide(maps[0]).shape(), (ag::Shape{1, 48, 16, 16}));
    EXPECT_EQ(code_of([&] { model.pose_guide(Frames{Image(32, 32, 3)}); }), ErrorCode::ShapeMismatch);
}

TEST(Shapes, DenoiseRejectsMismatchedInputs) {
    Model<float> model(EngineConfig::toy());
    TrainSample s = make_train_sample(synthetic::talking_face_clip(8, 64).frames, moving_sequence(8), 0, model.config());
    auto bundle = build_bundle(model, s);
    const auto x = ag::Var<float>::zeros({8, 48, 16, 16});
    EXPECT_EQ(model.denoise(x, 10, bundle).shape(), x.shape());
    EXPECT_EQ(code_of([&] { model.denoise(ag::Var<float>::zeros({7, 48, 16, 16}), 10, bundle); }), ErrorCode::ShapeMismatch);
    EXPECT_EQ(code_of([&] { model.denoise(x, 1000, bundle); }), ErrorCode::BadStep);
}

// ---------------------------------------------------------------- zero-init neutrality

TEST(ZeroInit, GuidersAreNeutralAtInit) {
    Model<float> model(EngineConfig::toy());
    perturb_unet(model, 5);
    const auto clip = synthetic::talking_face_clip(16, 64);
    TrainSample s = make_train_sample(clip.frames, clip.poses, 0, model.config());
    const auto bundle = build_bundle(model, s);

    std::mt19937_64 rng(1);
    std::normal_distribution<float> g;
    std::vector<float> xv(8 * 48 * 16 * 16);
    for (auto& v : xv) v = g(rng);
    const auto x = ag::Var<float>::constant({8, 48, 16, 16}, xv);
    const auto base = model.denoise(x, 500, bundle).value();

    auto b2 = bundle;
    Frames other;
    for (std::size_t i = 8; i < 16; ++i) other.push_back(pose::render_pose_map(clip.poses.frames[i], 64, 64));
    b2.pose_latents = model.pose_guide(other);
    b2.facemask_latents = model.facemask_guide(conditioning::mask_reference(s.reference, conditioning::constant_mask(64, 64, 1)));
    EXPECT_EQ(model.denoise(x, 500, b2).value(), base);

    // sanity: the perturbed UNet is not input-independent
    auto b3 = bundle;
    b3.image_embedding = ag::Var<float>::constant(bundle.image_embedding.shape(), std::vector<float>(bundle.image_embedding.size(), 1.0f));
    EXPECT_NE(model.denoise(x, 500, b3).value(), base);
}

TEST(ZeroInit, FreshModelPredictsZeroNoise) {
    Model<float> model(EngineConfig::toy());
    const auto clip = synthetic::talking_face_clip(8, 64);
    const auto bundle = build_bundle(model, make_train_sample(clip.frames, clip.poses, 0, model.config()));
    const auto eps = model.denoise(ag::Var<float>::zeros({8, 48, 16, 16}), 3, bundle);
    for (float v : eps.value()) ASSERT_EQ(v, 0.0f);
}

// ---------------------------------------------------------------- temporal attention

TEST(Temporal, FramePermutationEquivariance) {
    Model<double> model(facepose::testing::tiny_config());
    perturb_unet(model, 11);
    const auto clip = synthetic::talking_face_clip(3, 16);
    const auto bundle = build_bundle(model, make_train_sample(clip.frames, clip.poses, 0, model.config()));
    const int lc = model.config().latent_channels, h = model.latent_size();
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g;
    std::vector<double> xv(static_cast<std::size_t>(3 * lc * h * h));
    for (auto& v : xv) v = g(rng);
    const std::size_t fs = xv.size() / 3;
    // pose latents are zero, so permuting noisy frames is the only frame-dependent input
    const auto out = model.denoise(ag::Var<double>::constant({3, lc, h, h}, xv), 100, bundle).value();
    std::vector<double> perm(xv.size());
    const int order[3] = {2, 0, 1};
    for (int f = 0; f < 3; ++f) std::copy_n(xv.begin() + order[f] * fs, fs, perm.begin() + f * fs);
    const auto out_p = model.denoise(ag::Var<double>::constant({3, lc, h, h}, perm), 100, bundle).value();
    for (int f = 0; f < 3; ++f)
        for (std::size_t i = 0; i < fs; ++i) ASSERT_NEAR(out_p[f * fs + i], out[order[f] * fs + i], 1e-10);
}

TEST(Temporal, SingleFrameEqualsIdentityMix) {
    Model<double> model(facepose::testing::tiny_config());
    perturb_unet(model, 12);
    auto clip = synthetic::talking_face_clip(3, 16);
    auto s = make_train_sample(clip.frames, clip.poses, 0, model.config());
    s.pose_maps.resize(1);
    const auto bundle = build_bundle(model, s);
    const int lc = model.config().latent_channels, h = model.latent_size();
    std::vector<double> xv(static_cast<std::size_t>(lc * h * h), 0.3);
    const auto x = ag::Var<double>::constant({1, lc, h, h}, xv);
    const auto a = model.denoise(x, 50, bundle).value();
    const auto b = model.denoise(x, 50, bundle, {.temporal_mix = ag::AttentionMix::Identity}).value();
    for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i], 1e-12);
}

// ---------------------------------------------------------------- training

TEST(Training, SampleUsesPrecedingFramesAsMotion) {
    const auto clip = synthetic::talking_face_clip(12, 64);
    const auto cfg = EngineConfig::toy();
    const auto s = make_train_sample(clip.frames, clip.poses, 3, cfg);
    ASSERT_EQ(s.motion.size(), 2u);
    EXPECT_EQ(s.motion.frames[0], clip.frames[1]);
    EXPECT_EQ(s.motion.frames[1], clip.frames[2]);
    EXPECT_EQ(s.target.front(), clip.frames[3]);
    EXPECT_EQ(s.target.size(), 8u);
    const auto cold = make_train_sample(clip.frames, clip.poses, 1, cfg);
    EXPECT_EQ(cold.motion.frames[0], clip.frames[0]);
    EXPECT_EQ(cold.motion.frames[1], clip.frames[0]);
    EXPECT_EQ(code_of([&] { make_train_sample(clip.frames, clip.poses, 5, cfg); }), ErrorCode::OutOfRange);
}

TEST(Training, PerfectPredictorHasZeroLoss) {
    const auto s = make_schedule(1000, 8.5e-4, 1.2e-2);
    std::vector<double> x0{0.1, 0.2, -0.3}, eps{1.0, -0.5, 0.25};
    const auto x0v = ag::Var<double>::constant({3}, x0);
    const auto loss = diffusion_loss<double>([&](const ag::Var<double>& x_t, int) { return ag::Var<double>::constant(x_t.shape(), eps); },
                                             x0v, eps, 321, s);
    EXPECT_EQ(loss.item(), 0.0);
}

TEST(Training, FirstStepLossNearUnitAndDecreases) {
    auto cfg = EngineConfig::toy();
    Model<float> model(cfg);
    Trainer<float> trainer(model, {.lr = 3e-3, .clip_norm = 1.0}, 1);
    const auto clip = synthetic::talking_face_clip(8, 64);
    const auto sample = make_train_sample(clip.frames, clip.poses, 0, cfg);
    const std::vector<int> probes{100, 400, 700};
    const float before = trainer.evaluate(sample, probes);
    EXPECT_NEAR(before, 1.0, 0.05);  // zero-init output: eps_pred = 0
    for (int i = 0; i < 30; ++i) trainer.step(sample);
    EXPECT_LT(trainer.evaluate(sample, probes), before);
    EXPECT_EQ(trainer.steps_taken(), 30);
}

TEST(Training, DatasetRoundTrip) {
    TempDir dir("data");
    const auto clip = synthetic::talking_face_clip(10, 32);
    save_training_clip(dir.path(), "b", clip.frames, clip.poses);
    save_training_clip(dir.path(), "a", Frames(clip.frames.begin(), clip.frames.begin() + 4),
                       pose::PoseSequence{clip.poses.schema_id, clip.poses.fps, 32, 32,
                                          std::vector<pose::PoseFrame>(clip.poses.frames.begin(), clip.poses.frames.begin() + 4)});
    const auto clips = load_training_clips(dir.path(), 64);
    ASSERT_EQ(clips.size(), 2u);
    EXPECT_EQ(clips[0].name, "a");
    EXPECT_EQ(clips[1].frames.size(), 10u);
    EXPECT_EQ(clips[1].frames[0].width, 64);
    // 8-frame windows: none from "a", three from "b"
    EXPECT_EQ(all_train_samples(clips, EngineConfig::toy()).size(), 3u);
    EXPECT_EQ(code_of([&] { load_training_clips(dir / "missing", 64); }), ErrorCode::IoError);
}

// ---------------------------------------------------------------- generation

TEST(Generate, StitchingCarriesPriorClipTail) {
    Model<float> model(fast_toy());
    const auto ref = synthetic::reference_face(64);
    for (std::size_t len : {8u, 24u, 50u}) {
        const auto result = generate_video(model, ref, moving_sequence(len), pose::BlobFaceDetector{});
        ASSERT_EQ(result.frames.size(), len);
        const std::size_t clips = (len + 7) / 8;
        ASSERT_EQ(result.motion_windows.size(), clips);
        EXPECT_EQ(result.clip_ranges.back().second, len);
        for (const auto& f : result.motion_windows[0].frames) EXPECT_EQ(f, resize_bilinear(ref, 64, 64));
        for (std::size_t k = 1; k < clips; ++k) {
            const auto& w = result.motion_windows[k].frames;
            ASSERT_EQ(w.size(), 2u);
            EXPECT_EQ(w[0], result.frames[8 * k - 2]);
            EXPECT_EQ(w[1], result.frames[8 * k - 1]);
        }
        EXPECT_EQ(result.clip_latents.back().frames, static_cast<int>(len - 8 * (clips - 1)));
    }
}

TEST(Generate, SeededRunsAreBitIdentical) {
    Model<float> model(fast_toy());
    perturb_unet(model, 3);
    const auto ref = synthetic::reference_face(64);
    const auto seq = moving_sequence(12);
    TempDir dir("det");
    GenerateOptions opts;
    opts.seed = 42;
    dump_latents(generate_video(model, ref, seq, pose::BlobFaceDetector{}, opts).clip_latents, dir / "a.bin");
    dump_latents(generate_video(model, ref, seq, pose::BlobFaceDetector{}, opts).clip_latents, dir / "b.bin");
    EXPECT_EQ(read_file_bytes(dir / "a.bin"), read_file_bytes(dir / "b.bin"));
    opts.seed = 43;
    dump_latents(generate_video(model, ref, seq, pose::BlobFaceDetector{}, opts).clip_latents, dir / "c.bin");
    EXPECT_NE(read_file_bytes(dir / "a.bin"), read_file_bytes(dir / "c.bin"));
}

TEST(Generate, NoFaceAndEmptySequence) {
    Model<float> model(fast_toy());
    EXPECT_EQ(code_of([&] { generate_video(model, Image(64, 64, 3, 0.0f), moving_sequence(4), pose::BlobFaceDetector{}); }),
              ErrorCode::NoFace);
    pose::PoseSequence empty;
    EXPECT_EQ(code_of([&] { generate_video(model, synthetic::reference_face(64), empty, pose::BlobFaceDetector{}); }),
              ErrorCode::BadConfig);
}

TEST(Generate, ClipNoiseDependsOnSeedAndIndex) {
    EXPECT_EQ(clip_noise(1, 0, 16), clip_noise(1, 0, 16));
    EXPECT_NE(clip_noise(1, 0, 16), clip_noise(1, 1, 16));
    EXPECT_NE(clip_noise(1, 0, 16), clip_noise(2, 0, 16));
}

// ---------------------------------------------------------------- checkpoints

TEST(Checkpoint, RoundTripPreservesEveryTensor) {
    TempDir dir("ckpt");
    auto cfg = EngineConfig::toy();
    cfg.seed = 17;
    Model<float> model(cfg);
    perturb_unet(model, 9);
    save_checkpoint(model, dir / "m.ckpt");
    const auto loaded = load_checkpoint<float>(dir / "m.ckpt");
    EXPECT_EQ(loaded->config(), cfg);
    const auto a = model.named_params(), b = loaded->named_params();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].first, b[i].first);
        EXPECT_EQ(a[i].second.value(), b[i].second.value()) << a[i].first;
    }
}

TEST(Checkpoint, CorruptFilesRejected) {
    TempDir dir("ckpt");
    Model<float> model(EngineConfig::toy());
    save_checkpoint(model, dir / "m.ckpt");
    auto bytes = read_file_bytes(dir / "m.ckpt");
    write_file_bytes(dir / "trunc.ckpt", std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + static_cast<long>(bytes.size() / 2)));
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    write_file_bytes(dir / "magic.ckpt", bad_magic);
    EXPECT_EQ(code_of([&] { load_checkpoint<float>(dir / "trunc.ckpt"); }), ErrorCode::BadCheckpoint);
    EXPECT_EQ(code_of([&] { load_checkpoint<float>(dir / "magic.ckpt"); }), ErrorCode::BadCheckpoint);
    EXPECT_EQ(code_of([&] { load_checkpoint<float>(dir / "none.ckpt"); }), ErrorCode::BadCheckpoint);
}
