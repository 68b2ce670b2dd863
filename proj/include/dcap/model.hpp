#pragma once

// The decoder: a frozen geometric encoder stub produces six camera tokens;
// a learnable rear-camera query aggregates them through camera
// cross-attention (CCA); the fused token attends over ego-motion-aligned
// historical tokens (CTA); an AdaLN-modulated refinement stack with a
// quaternion pose head iteratively regresses the rear camera pose in the
// tractor frame. Gate heads and the final pose-head layer start at zero, so
// the untrained model reproduces the static-calibration baseline exactly.

#include <deque>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcap/dataset.hpp"
#include "dcap/errors.hpp"
#include "dcap/geom.hpp"
#include "dcap/kinematics.hpp"
#include "dcap/nn/ops.hpp"
#include "dcap/nn/optim.hpp"
#include "dcap/nn/tensor.hpp"
#include "dcap/util.hpp"

namespace dcap {

inline constexpr int kCheckpointFormatVersion = 1;
inline constexpr int kRearTokenIndex = 3;  // position of `rear` in kCameraOrder
inline constexpr int kPoseVecSize = 7;     // tx ty tz qw qx qy qz

struct ModelConfig {
    int d = 64;
    int heads = 4;
    int n_refine_blocks = 2;  // L
    int refine_steps = 3;     // paper-fixed default
    int queue_len = 3;        // paper-fixed default
    double w_trans = 1.0;
    double w_rot = 1.0;
    double lr = 1e-4;
    int batch = 4;
    int epochs = 24;
    int landmark_count = 16;  // K
    double encoder_noise_sigma = 0.01;
    std::uint64_t seed = 0;
    bool use_cca = true;
    bool use_cta = true;
};

inline nlohmann::json config_to_json(const ModelConfig& c) {
    return {{"d", c.d},
            {"heads", c.heads},
            {"n_refine_blocks", c.n_refine_blocks},
            {"refine_steps", c.refine_steps},
            {"queue_len", c.queue_len},
            {"w_trans", c.w_trans},
            {"w_rot", c.w_rot},
            {"lr", c.lr},
            {"batch", c.batch},
            {"epochs", c.epochs},
            {"landmark_count", c.landmark_count},
            {"encoder_noise_sigma", c.encoder_noise_sigma},
            {"seed", c.seed},
            {"use_cca", c.use_cca},
            {"use_cta", c.use_cta}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.d = j.at("d").get<int>();
    c.heads = j.at("heads").get<int>();
    c.n_refine_blocks = j.at("n_refine_blocks").get<int>();
    c.refine_steps = j.at("refine_steps").get<int>();
    c.queue_len = j.at("queue_len").get<int>();
    c.w_trans = j.at("w_trans").get<double>();
    c.w_rot = j.at("w_rot").get<double>();
    c.lr = j.at("lr").get<double>();
    c.batch = j.at("batch").get<int>();
    c.epochs = j.at("epochs").get<int>();
    c.landmark_count = j.at("landmark_count").get<int>();
    c.encoder_noise_sigma = j.at("encoder_noise_sigma").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.use_cca = j.at("use_cca").get<bool>();
    c.use_cta = j.at("use_cta").get<bool>();
    return c;
}

// ---------------------------------------------------------------------------
// Encoder stub: deterministic geometric features through a fixed random
// projection. Stands in for the frozen image backbone; never trained.

struct EncoderStub {
    int d = 0;
    int k = 0;  // landmark count
    std::vector<Vec3> landmarks;      // fixed world points, seeded per corpus
    std::vector<double> projection;   // [d x (6 + 2k)], row-major, frozen
    double noise_sigma = 0.0;
    std::uint64_t noise_seed = 0;

    int feature_dim() const { return 6 + 2 * k; }
};

inline std::vector<Vec3> generate_landmarks(std::uint64_t seed, int count) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> xy(-250.0, 250.0);
    std::uniform_real_distribution<double> z(2.0, 20.0);
    std::vector<Vec3> pts;
    pts.reserve(count);
    for (int i = 0; i < count; ++i) pts.push_back({xy(rng), xy(rng), z(rng)});
    return pts;
}

inline EncoderStub make_encoder(const ModelConfig& cfg, std::uint64_t landmark_seed,
                                std::uint64_t projection_seed, std::uint64_t noise_seed) {
    EncoderStub enc;
    enc.d = cfg.d;
    enc.k = cfg.landmark_count;
    enc.landmarks = generate_landmarks(landmark_seed, cfg.landmark_count);
    enc.noise_sigma = cfg.encoder_noise_sigma;
    enc.noise_seed = noise_seed;
    std::mt19937_64 rng(projection_seed);
    std::normal_distribution<double> n(0.0, 1.0 / std::sqrt(static_cast<double>(enc.feature_dim())));
    enc.projection.resize(static_cast<std::size_t>(cfg.d) * enc.feature_dim());
    for (double& v : enc.projection) v = n(rng);
    return enc;
}

// token_i = tanh(M phi_i): phi_i concatenates a camera one-hot with bearing
// angles and inverse distances from camera i's true pose to the landmarks
// (plus observation noise). Returns a [6, d] constant tensor.
inline nn::Tensor encode_views(const FrameRecord& frame, const EncoderStub& enc,
                               std::uint64_t stream_salt) {
    const int f = enc.feature_dim();
    std::vector<double> tokens(6 * static_cast<std::size_t>(enc.d), 0.0);
    std::vector<double> phi(f, 0.0);
    for (int c = 0; c < 6; ++c) {
        const Pose& cam = frame.gt_extrinsics.at(kCameraOrder[c]);
        Pose world_to_cam = inverse(cam);
        std::fill(phi.begin(), phi.end(), 0.0);
        phi[c] = 1.0;
        for (int l = 0; l < enc.k; ++l) {
            Vec3 p = world_to_cam.apply(enc.landmarks[l]);
            phi[6 + 2 * l] = std::atan2(p.y, p.x);
            phi[6 + 2 * l + 1] = 1.0 / std::max(norm(p), 0.1);
        }
        if (enc.noise_sigma > 0.0) {
            std::mt19937_64 rng(mix_seed(mix_seed(enc.noise_seed, stream_salt),
                                         static_cast<std::uint64_t>(frame.timestamp_us) * 8 + c));
            std::normal_distribution<double> noise(0.0, enc.noise_sigma);
            for (int j = 6; j < f; ++j) phi[j] += noise(rng);
        }
        for (int r = 0; r < enc.d; ++r) {
            const double* row = enc.projection.data() + static_cast<std::size_t>(r) * f;
            double s = 0.0;
            for (int j = 0; j < f; ++j) s += row[j] * phi[j];
            tokens[static_cast<std::size_t>(c) * enc.d + r] = std::tanh(s);
        }
    }
    return nn::Tensor::from({6, enc.d}, std::move(tokens));
}

// ---------------------------------------------------------------------------
// Temporal queue: bounded FIFO of (global token, ego pose); per-sequence
// state, cleared at sequence boundaries.

struct QueueEntry {
    nn::Tensor token;  // post-CTA global token, [1, d]
    Pose ego_pose;
};

struct TemporalQueue {
    std::deque<QueueEntry> entries;
    int cap = 3;

    void push(nn::Tensor token, const Pose& ego) {
        entries.push_back({std::move(token), ego});
        while (static_cast<int>(entries.size()) > cap) entries.pop_front();
    }
    void clear() { entries.clear(); }
    int size() const { return static_cast<int>(entries.size()); }
};

// ---------------------------------------------------------------------------
// Parameters.

struct DcapParams {
    nn::Tensor query;      // [1, d] learnable rear-camera query
    nn::Tensor pos_embed;  // [6, d] camera-index embeddings
    nn::MhaParams cca;
    nn::MhaParams cta;
    nn::Tensor align_w;  // [3, d]
    nn::Tensor align_b;  // [1, d]
    nn::Tensor embed_w;  // [7, d] pose-embedding projection
    nn::Tensor embed_b;  // [1, d]
    struct Block {
        nn::Tensor alpha_w, alpha_b;  // [d,d], [1,d]
        nn::Tensor beta_w, beta_b;
        nn::Tensor gamma_w, gamma_b;  // zero-init: the gate starts closed
    };
    std::vector<Block> blocks;
    nn::Tensor head_w1, head_b1;  // [d,d], [1,d]
    nn::Tensor head_w2, head_b2;  // [d,7], [1,7]; zero-init: deltas start at 0
};

inline nn::MhaParams register_mha(nn::ParamStore& store, const std::string& prefix, int d) {
    nn::MhaParams p;
    p.wq = store.add_weight(prefix + ".wq", d, d);
    p.wk = store.add_weight(prefix + ".wk", d, d);
    p.wv = store.add_weight(prefix + ".wv", d, d);
    p.wo = store.add_weight(prefix + ".wo", d, d);
    p.bq = store.add_zeros(prefix + ".bq", 1, d);
    p.bk = store.add_zeros(prefix + ".bk", 1, d);
    p.bv = store.add_zeros(prefix + ".bv", 1, d);
    p.bo = store.add_zeros(prefix + ".bo", 1, d);
    return p;
}

inline DcapParams register_params(nn::ParamStore& store, const ModelConfig& cfg) {
    DcapParams p;
    const int d = cfg.d;
    if (cfg.use_cca) {
        p.query = store.add_weight("query", 1, d);
        p.pos_embed = store.add_weight("pos_embed", 6, d);
        p.cca = register_mha(store, "cca", d);
    }
    if (cfg.use_cta) {
        p.cta = register_mha(store, "cta", d);
        p.align_w = store.add_weight("align.w", 3, d);
        p.align_b = store.add_zeros("align.b", 1, d);
    }
    p.embed_w = store.add_weight("embed.w", kPoseVecSize, d);
    p.embed_b = store.add_zeros("embed.b", 1, d);
    for (int i = 0; i < cfg.n_refine_blocks; ++i) {
        std::string prefix = "refine" + std::to_string(i);
        DcapParams::Block b;
        b.alpha_w = store.add_weight(prefix + ".alpha.w", d, d);
        b.alpha_b = store.add_zeros(prefix + ".alpha.b", 1, d);
        b.beta_w = store.add_weight(prefix + ".beta.w", d, d);
        b.beta_b = store.add_zeros(prefix + ".beta.b", 1, d);
        b.gamma_w = store.add_zeros(prefix + ".gamma.w", d, d);
        b.gamma_b = store.add_zeros(prefix + ".gamma.b", 1, d);
        p.blocks.push_back(b);
    }
    p.head_w1 = store.add_weight("head.w1", d, d);
    p.head_b1 = store.add_zeros("head.b1", 1, d);
    p.head_w2 = store.add_zeros("head.w2", d, kPoseVecSize);
    p.head_b2 = store.add_zeros("head.b2", 1, kPoseVecSize);
    return p;
}

// ---------------------------------------------------------------------------

struct PoseEstimate {
    Pose pose;                // final estimate, rear camera in the tractor frame
    std::vector<Pose> trace;  // per refinement step
};

struct ForwardResult {
    nn::Tensor t;  // [1, 3]
    nn::Tensor q;  // [1, 4] unit quaternion
    PoseEstimate estimate;
};

class DcapModel {
  public:
    explicit DcapModel(const ModelConfig& cfg)
        : cfg_(cfg),
          store_(mix_seed(cfg.seed, 1)),
          encoder_(make_encoder(cfg, mix_seed(cfg.seed, 3), mix_seed(cfg.seed, 2),
                                mix_seed(cfg.seed, 4))) {
        params_ = register_params(store_, cfg_);
    }

    const ModelConfig& config() const { return cfg_; }
    nn::ParamStore& store() { return store_; }
    const nn::ParamStore& store() const { return store_; }
    const EncoderStub& encoder() const { return encoder_; }
    EncoderStub& encoder() { return encoder_; }
    const DcapParams& params() const { return params_; }

    // Q' = MHA(Q, {T_i + pos_i}, {T_i + pos_i}) + T_rear. With CCA disabled
    // the raw rear token passes through untouched.
    nn::Tensor cca(const nn::Tensor& tokens) const {
        nn::Tensor rear = nn::slice_rows(tokens, kRearTokenIndex, kRearTokenIndex + 1);
        if (!cfg_.use_cca) return rear;
        nn::Tensor keys = nn::add(tokens, params_.pos_embed);
        return nn::add(nn::mha(params_.query, keys, keys, params_.cca, cfg_.heads), rear);
    }

    // T~ = G + W_delta^T dp + b_delta, with dp = (dx, dy, dpsi) of the
    // current ego pose relative to the entry's, in the earlier ego frame.
    nn::Tensor align_history(const QueueEntry& entry, const Pose& ego_now) const {
        Pose rel = relative_transform(ego_now, entry.ego_pose);
        nn::Tensor dp = nn::Tensor::from(
            {1, 3}, {rel.translation.x, rel.translation.y, rel.rotation.yaw()});
        return nn::add(entry.token, nn::linear(dp, params_.align_w, params_.align_b));
    }

    // G' = G + MHA(G, {T~}, {T~}); an empty queue falls back to attending
    // over G itself. With CTA disabled G passes through and the queue is
    // never consulted.
    nn::Tensor cta(const nn::Tensor& g, const TemporalQueue& queue, const Pose& ego_now) const {
        if (!cfg_.use_cta) return g;
        nn::Tensor keys;
        if (queue.entries.empty()) {
            keys = g;
        } else {
            std::vector<nn::Tensor> aligned;
            aligned.reserve(queue.entries.size());
            for (const QueueEntry& e : queue.entries) aligned.push_back(align_history(e, ego_now));
            keys = aligned.size() == 1 ? aligned[0] : nn::concat_rows(aligned);
        }
        return nn::add(g, nn::mha(g, keys, keys, params_.cta, cfg_.heads));
    }

    // Three iterative refinement steps. Each step embeds the current pose,
    // modulates G' through the AdaLN blocks and applies the predicted
    // (delta t, delta q); the delta quaternion is normalized before the
    // Hamilton product so a zero delta leaves the pose bit-identical.
    ForwardResult refine_pose(const nn::Tensor& g_prime, const Pose& init) const {
        ForwardResult r;
        r.t = nn::Tensor::from({1, 3}, {init.translation.x, init.translation.y, init.translation.z});
        r.q = nn::Tensor::from(
            {1, 4}, {init.rotation.w, init.rotation.x, init.rotation.y, init.rotation.z});
        nn::Tensor quat_identity = nn::Tensor::from({1, 4}, {1.0, 0.0, 0.0, 0.0});

        for (int s = 0; s < cfg_.refine_steps; ++s) {
            nn::Tensor pose_vec = nn::concat_cols({r.t, r.q});
            nn::Tensor e = nn::linear(pose_vec, params_.embed_w, params_.embed_b);
            nn::Tensor x = g_prime;
            for (const DcapParams::Block& blk : params_.blocks) {
                nn::Tensor alpha = nn::linear(e, blk.alpha_w, blk.alpha_b);
                nn::Tensor beta = nn::linear(e, blk.beta_w, blk.beta_b);
                nn::Tensor gamma = nn::linear(e, blk.gamma_w, blk.gamma_b);
                nn::Tensor mod = nn::add(
                    nn::mul(nn::layer_norm_last(x), nn::add_scalar(beta, 1.0)), alpha);
                x = nn::add(nn::mul(gamma, mod), x);
            }
            nn::Tensor hidden = nn::tanh(nn::linear(x, params_.head_w1, params_.head_b1));
            nn::Tensor delta = nn::linear(hidden, params_.head_w2, params_.head_b2);
            r.t = nn::add(r.t, nn::slice_cols(delta, 0, 3));
            nn::Tensor dq = nn::add(nn::slice_cols(delta, 3, 7), quat_identity);
            r.q = nn::quat_mul(r.q, nn::l2_normalize_rows(dq));

            for (double v : r.t.values())
                if (!std::isfinite(v))
                    throw NonFiniteActivation("non-finite translation at refinement step " +
                                              std::to_string(s));
            for (double v : r.q.values())
                if (!std::isfinite(v))
                    throw NonFiniteActivation("non-finite quaternion at refinement step " +
                                              std::to_string(s));
            r.estimate.trace.push_back(pose_from_tensors(r.t, r.q));
        }
        r.estimate.pose = r.estimate.trace.back();
        return r;
    }

    // Full per-frame pass; pushes the post-CTA global token into the queue.
    ForwardResult forward(const FrameRecord& frame, TemporalQueue& queue, const RigGeometry& rig,
                          std::uint64_t stream_salt) const {
        nn::Tensor tokens = encode_views(frame, encoder_, stream_salt);
        nn::Tensor g = cca(tokens);
        nn::Tensor g_prime = cta(g, queue, frame.ego_pose);
        Pose init = rig.nominal_camera_in_tractor(CameraId::rear);
        ForwardResult r = refine_pose(g_prime, init);
        queue.push(g_prime, frame.ego_pose);
        return r;
    }

    // L = w_trans * sum|t - t*| + w_rot * sum|q - sigma q*| with the sign
    // sigma resolving the quaternion double cover.
    nn::Tensor loss(const ForwardResult& r, const Pose& gt) const {
        nn::Tensor t_gt = nn::Tensor::from(
            {1, 3}, {gt.translation.x, gt.translation.y, gt.translation.z});
        const Quat& qg = gt.rotation;
        double dotv = r.q.values()[0] * qg.w + r.q.values()[1] * qg.x + r.q.values()[2] * qg.y +
                      r.q.values()[3] * qg.z;
        double sigma = dotv >= 0.0 ? 1.0 : -1.0;
        nn::Tensor q_gt =
            nn::Tensor::from({1, 4}, {sigma * qg.w, sigma * qg.x, sigma * qg.y, sigma * qg.z});
        nn::Tensor l_trans = nn::sum(nn::abs(nn::sub(r.t, t_gt)));
        nn::Tensor l_rot = nn::sum(nn::abs(nn::sub(r.q, q_gt)));
        return nn::add(nn::scale(l_trans, cfg_.w_trans), nn::scale(l_rot, cfg_.w_rot));
    }

    static Pose pose_from_tensors(const nn::Tensor& t, const nn::Tensor& q) {
        return {{q.values()[0], q.values()[1], q.values()[2], q.values()[3]},
                {t.values()[0], t.values()[1], t.values()[2]}};
    }

  private:
    ModelConfig cfg_;
    nn::ParamStore store_;
    EncoderStub encoder_;
    DcapParams params_;
};

// Ground-truth rear camera pose in the tractor body frame; the regression
// target and the quantity every method is evaluated on.
inline Pose gt_rear_in_tractor(const FrameRecord& f) {
    return relative_transform(f.gt_extrinsics.at(CameraId::rear), f.ego_pose);
}

// ---------------------------------------------------------------------------
// Training and evaluation.

struct FrameEval {
    std::string sequence_id;
    std::int64_t frame_index = 0;
    ScenarioKind scenario = ScenarioKind::straight;
    Pose pred;  // rear camera in tractor frame
    PoseError error;
};

struct TrainReport {
    std::vector<double> epoch_mean_losses;
    double initial_batch_loss = 0.0;
};

struct Window {
    std::size_t seq = 0;
    std::size_t start = 0;
};

inline constexpr int kWindowFrames = 3;  // three consecutive frames per sample

inline std::vector<Window> training_windows(const std::vector<Sequence>& seqs) {
    std::vector<Window> w;
    for (std::size_t s = 0; s < seqs.size(); ++s) {
        if (seqs[s].frames.size() < kWindowFrames) continue;
        for (std::size_t k = 0; k + kWindowFrames <= seqs[s].frames.size(); ++k)
            w.push_back({s, k});
    }
    return w;
}

// Runs one window (fresh queue, frames in order) and returns the loss at the
// final frame.
inline nn::Tensor window_loss(const DcapModel& model, const Sequence& seq, std::size_t start) {
    TemporalQueue queue;
    queue.cap = model.config().queue_len;
    std::uint64_t salt = hash_string(seq.manifest.sequence_id);
    nn::Tensor loss;
    for (int j = 0; j < kWindowFrames; ++j) {
        const FrameRecord& frame = seq.frames[start + j];
        ForwardResult r = model.forward(frame, queue, seq.rig, salt);
        if (j == kWindowFrames - 1) loss = model.loss(r, gt_rear_in_tractor(frame));
    }
    return loss;
}

inline TrainReport train(DcapModel& model, const std::vector<Sequence>& train_seqs) {
    const ModelConfig& cfg = model.config();
    std::vector<Window> windows = training_windows(train_seqs);
    if (windows.empty()) throw EmptySplit("no training windows: sequences missing or too short");

    nn::AdamState adam;
    adam.lr = cfg.lr;
    TrainReport report;
    bool first_batch = true;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::mt19937_64 rng(mix_seed(cfg.seed, 100 + static_cast<std::uint64_t>(epoch)));
        std::shuffle(windows.begin(), windows.end(), rng);

        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t at = 0; at < windows.size(); at += cfg.batch) {
            std::size_t take = std::min<std::size_t>(cfg.batch, windows.size() - at);
            model.store().zero_grads();
            nn::Tensor batch_loss;
            for (std::size_t b = 0; b < take; ++b) {
                const Window& w = windows[at + b];
                nn::Tensor l = window_loss(model, train_seqs[w.seq], w.start);
                batch_loss = b == 0 ? l : nn::add(batch_loss, l);
            }
            batch_loss = nn::scale(batch_loss, 1.0 / static_cast<double>(take));
            if (first_batch) {
                report.initial_batch_loss = batch_loss.value();
                first_batch = false;
            }
            nn::backward(batch_loss);
            nn::adam_step(model.store(), adam);
            epoch_loss += batch_loss.value();
            ++batches;
        }
        report.epoch_mean_losses.push_back(epoch_loss / static_cast<double>(batches));
    }
    return report;
}

// Streams each sequence once in temporal order with a persistent queue.
inline std::vector<FrameEval> evaluate(const DcapModel& model,
                                       const std::vector<Sequence>& seqs) {
    nn::NoGradGuard no_grad;
    std::vector<FrameEval> out;
    for (const Sequence& seq : seqs) {
        TemporalQueue queue;
        queue.cap = model.config().queue_len;
        std::uint64_t salt = hash_string(seq.manifest.sequence_id);
        for (std::size_t k = 0; k < seq.frames.size(); ++k) {
            const FrameRecord& frame = seq.frames[k];
            ForwardResult r = model.forward(frame, queue, seq.rig, salt);
            FrameEval fe;
            fe.sequence_id = seq.manifest.sequence_id;
            fe.frame_index = static_cast<std::int64_t>(k);
            fe.scenario = frame.scenario_kind;
            fe.pred = r.estimate.pose;
            fe.error = pose_error(fe.pred, gt_rear_in_tractor(frame));
            out.push_back(std::move(fe));
        }
    }
    return out;
}

// Static-calibration baseline: the nominal rear-camera extrinsic, evaluated
// per frame against the articulated ground truth.
inline std::vector<FrameEval> evaluate_static(const std::vector<Sequence>& seqs) {
    std::vector<FrameEval> out;
    for (const Sequence& seq : seqs) {
        Pose nominal = seq.rig.nominal_camera_in_tractor(CameraId::rear);
        for (std::size_t k = 0; k < seq.frames.size(); ++k) {
            FrameEval fe;
            fe.sequence_id = seq.manifest.sequence_id;
            fe.frame_index = static_cast<std::int64_t>(k);
            fe.scenario = seq.frames[k].scenario_kind;
            fe.pred = nominal;
            fe.error = pose_error(nominal, gt_rear_in_tractor(seq.frames[k]));
            out.push_back(std::move(fe));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoints: every named parameter as a flat array, plus the config, the
// landmark set, and the seeds needed to rebuild the frozen encoder.

inline void save_checkpoint(const DcapModel& model, const std::filesystem::path& path) {
    nlohmann::json j;
    j["format_version"] = kCheckpointFormatVersion;
    j["config"] = config_to_json(model.config());
    nlohmann::json landmarks = nlohmann::json::array();
    for (const Vec3& p : model.encoder().landmarks)
        landmarks.push_back(nlohmann::json::array({p.x, p.y, p.z}));
    j["landmarks"] = landmarks;
    j["encoder_noise_seed"] = model.encoder().noise_seed;
    j["encoder_projection"] = model.encoder().projection;
    nlohmann::json params;
    for (const auto& [name, t] : model.store().items()) params[name] = t.values();
    j["params"] = params;
    std::ofstream f(path);
    if (!f) throw Error("cannot write checkpoint " + path.string());
    f << j.dump() << '\n';
}

inline DcapModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open checkpoint " + path.string());
    nlohmann::json j = nlohmann::json::parse(f);
    if (j.at("format_version").get<int>() != kCheckpointFormatVersion)
        throw CheckpointMismatch("checkpoint format version mismatch");
    DcapModel model(config_from_json(j.at("config")));
    // Frozen encoder state is stored verbatim.
    auto& enc = model.encoder();
    enc.landmarks.clear();
    for (const auto& p : j.at("landmarks"))
        enc.landmarks.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
    if (static_cast<int>(enc.landmarks.size()) != model.config().landmark_count)
        throw CheckpointMismatch("landmark count does not match config");
    enc.noise_seed = j.at("encoder_noise_seed").get<std::uint64_t>();
    enc.projection = j.at("encoder_projection").get<std::vector<double>>();
    if (enc.projection.size() !=
        static_cast<std::size_t>(model.config().d) * enc.feature_dim())
        throw CheckpointMismatch("encoder projection size does not match config");

    const auto& params = j.at("params");
    for (const auto& [name, t] : model.store().items()) {
        if (!params.contains(name)) throw CheckpointMismatch("checkpoint lacks parameter " + name);
        std::vector<double> vals = params.at(name).get<std::vector<double>>();
        if (vals.size() != t.size())
            throw CheckpointMismatch("parameter " + name + " has wrong size");
        t.values() = std::move(vals);
    }
    return model;
}

// ---------------------------------------------------------------------------
// End-to-end gradient fidelity check of the decoder on a seeded three-frame
// window from a turning scenario.

inline double decoder_grad_check(const ModelConfig& cfg, int n_coords = 200, double eps = 1e-4) {
    RigGeometry rig = RigGeometry::standard();
    ScenarioSpec spec;
    spec.kind = ScenarioKind::u_turn;
    spec.duration_s = 8.0;
    spec.seed = 71;
    Sequence seq = build_records(generate(spec, rig), rig, "grad_check_seq");

    DcapModel model(cfg);
    // A window in the middle of the turn, where articulation is active.
    const std::size_t start = 40;
    auto f = [&]() { return window_loss(model, seq, start); };
    return nn::grad_check(f, model.store(), eps, n_coords, mix_seed(cfg.seed, 9));
}

}  // namespace dcap
