#pragma once

// Record-level dataset layer: an nuScenes-like layout at desk scale. Each
// sequence is a directory holding `manifest.json` (header document) and
// `frames.ndrec` (one text record per frame, fixed field order, 17
// significant digits so serialization is canonical and diff-able).

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcap/errors.hpp"
#include "dcap/geom.hpp"
#include "dcap/kinematics.hpp"
#include "dcap/util.hpp"

namespace dcap {

inline constexpr int kDatasetFormatVersion = 1;
inline constexpr std::int64_t kFramePeriodUs = 100000;  // 10 Hz

struct BoxAnnotation {
    Vec3 center;            // meters, world frame
    Vec3 size;              // (w, l, h), meters
    Quat orientation;
    std::int64_t track_id = 0;  // stable across frames of a sequence
};

struct FrameRecord {
    std::int64_t timestamp_us = 0;
    Pose ego_pose;      // tractor body, world frame
    Pose trailer_pose;  // trailer body, world frame
    std::map<CameraId, Pose> gt_extrinsics;  // all six cameras, world frame
    Vec3 gnss_tractor, gnss_trailer;         // noisy positions
    double heading_tractor = 0.0, heading_trailer = 0.0;  // noisy yaw, wrapped
    ScenarioKind scenario_kind = ScenarioKind::straight;
    std::vector<BoxAnnotation> boxes;
};

struct NoiseInfo {
    double sigma_pos = 0.0;      // meters, per axis
    double sigma_heading = 0.0;  // radians
    std::uint64_t seed = 0;
};

struct SequenceManifest {
    int format_version = kDatasetFormatVersion;
    std::string sequence_id;
    ScenarioSpec spec;  // echo of the generating scenario
    std::uint64_t seed = 0;
    std::int64_t frame_count = 0;
    std::optional<NoiseInfo> sensor_noise;
};

struct Sequence {
    SequenceManifest manifest;
    RigGeometry rig;
    std::vector<FrameRecord> frames;
};

// ---------------------------------------------------------------------------
// JSON echoes for manifest documents.

inline nlohmann::json pose_to_json(const Pose& p) {
    return nlohmann::json::array({p.rotation.w, p.rotation.x, p.rotation.y, p.rotation.z,
                                  p.translation.x, p.translation.y, p.translation.z});
}

inline Pose pose_from_json(const nlohmann::json& j) {
    return {{j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(),
             j.at(3).get<double>()},
            {j.at(4).get<double>(), j.at(5).get<double>(), j.at(6).get<double>()}};
}

inline nlohmann::json rig_to_json(const RigGeometry& rig) {
    nlohmann::json j;
    j["hitch_length_d"] = rig.hitch_length_d;
    j["hitch_offset"] = rig.hitch_offset;
    j["jackknife_limit"] = rig.jackknife_limit;
    j["camera_meta"] = {{"width", rig.camera_meta.width},
                        {"height", rig.camera_meta.height},
                        {"fov_deg", rig.camera_meta.fov_deg}};
    nlohmann::json mounts;
    for (const auto& [id, m] : rig.camera_mounts)
        mounts[camera_name(id)] = {{"parent", m.parent == Body::tractor ? "tractor" : "trailer"},
                                   {"pose", pose_to_json(m.pose)}};
    j["camera_mounts"] = mounts;
    j["intra_rear_left"] = pose_to_json(rig.intra_rear_left);
    j["intra_rear_right"] = pose_to_json(rig.intra_rear_right);
    return j;
}

inline RigGeometry rig_from_json(const nlohmann::json& j) {
    RigGeometry rig;
    rig.hitch_length_d = j.at("hitch_length_d").get<double>();
    rig.hitch_offset = j.at("hitch_offset").get<double>();
    rig.jackknife_limit = j.at("jackknife_limit").get<double>();
    rig.camera_meta.width = j.at("camera_meta").at("width").get<int>();
    rig.camera_meta.height = j.at("camera_meta").at("height").get<int>();
    rig.camera_meta.fov_deg = j.at("camera_meta").at("fov_deg").get<double>();
    for (const auto& [name, m] : j.at("camera_mounts").items()) {
        RigGeometry::Mount mount;
        mount.parent = m.at("parent").get<std::string>() == "tractor" ? Body::tractor : Body::trailer;
        mount.pose = pose_from_json(m.at("pose"));
        rig.camera_mounts[camera_from_name(name)] = mount;
    }
    rig.intra_rear_left = pose_from_json(j.at("intra_rear_left"));
    rig.intra_rear_right = pose_from_json(j.at("intra_rear_right"));
    return rig;
}

inline nlohmann::json spec_to_json(const ScenarioSpec& s) {
    return {{"kind", scenario_name(s.kind)},
            {"duration_s", s.duration_s},
            {"rate_hz", s.rate_hz},
            {"seed", s.seed},
            {"params",
             {{"speed", s.params.speed},
              {"turn_radius", s.params.turn_radius},
              {"heading_change", s.params.heading_change},
              {"lane_offset", s.params.lane_offset},
              {"trailer_pitch_amp", s.params.trailer_pitch_amp}}}};
}

inline ScenarioSpec spec_from_json(const nlohmann::json& j) {
    ScenarioSpec s;
    s.kind = scenario_from_name(j.at("kind").get<std::string>());
    s.duration_s = j.at("duration_s").get<double>();
    s.rate_hz = j.at("rate_hz").get<int>();
    s.seed = j.at("seed").get<std::uint64_t>();
    const auto& p = j.at("params");
    s.params.speed = p.at("speed").get<double>();
    s.params.turn_radius = p.at("turn_radius").get<double>();
    s.params.heading_change = p.at("heading_change").get<double>();
    s.params.lane_offset = p.at("lane_offset").get<double>();
    s.params.trailer_pitch_amp = p.at("trailer_pitch_amp").get<double>();
    return s;
}

// ---------------------------------------------------------------------------
// Frame line records.

namespace detail {

inline void put_pose(std::string& line, const Pose& p) {
    line += ' ';
    line += pose_to_string(p);
}

inline void put_real(std::string& line, double v) {
    line += ' ';
    line += format_real(v);
}

struct TokenReader {
    const std::vector<std::string>& toks;
    size_t i = 0;
    double real() { return parse_real(toks.at(i++)); }
    long long integer() { return parse_int(toks.at(i++)); }
    std::string str() { return toks.at(i++); }
    Pose pose() {
        Quat q{real(), real(), real(), real()};
        Vec3 t{real(), real(), real()};
        return {q, t};
    }
};

}  // namespace detail

inline std::string frame_to_line(const FrameRecord& f) {
    std::string line = std::to_string(f.timestamp_us);
    detail::put_pose(line, f.ego_pose);
    detail::put_pose(line, f.trailer_pose);
    for (CameraId id : kCameraOrder) detail::put_pose(line, f.gt_extrinsics.at(id));
    detail::put_real(line, f.gnss_tractor.x);
    detail::put_real(line, f.gnss_tractor.y);
    detail::put_real(line, f.gnss_tractor.z);
    detail::put_real(line, f.gnss_trailer.x);
    detail::put_real(line, f.gnss_trailer.y);
    detail::put_real(line, f.gnss_trailer.z);
    detail::put_real(line, f.heading_tractor);
    detail::put_real(line, f.heading_trailer);
    line += ' ';
    line += scenario_name(f.scenario_kind);
    line += ' ';
    line += std::to_string(f.boxes.size());
    for (const BoxAnnotation& b : f.boxes) {
        detail::put_real(line, b.center.x);
        detail::put_real(line, b.center.y);
        detail::put_real(line, b.center.z);
        detail::put_real(line, b.size.x);
        detail::put_real(line, b.size.y);
        detail::put_real(line, b.size.z);
        detail::put_real(line, b.orientation.w);
        detail::put_real(line, b.orientation.x);
        detail::put_real(line, b.orientation.y);
        detail::put_real(line, b.orientation.z);
        line += ' ';
        line += std::to_string(b.track_id);
    }
    return line;
}

inline FrameRecord frame_from_line(const std::string& line, long line_no) {
    std::vector<std::string> toks;
    std::istringstream in(line);
    std::string t;
    while (in >> t) toks.push_back(t);
    try {
        detail::TokenReader r{toks};
        FrameRecord f;
        f.timestamp_us = r.integer();
        f.ego_pose = r.pose();
        f.trailer_pose = r.pose();
        for (CameraId id : kCameraOrder) f.gt_extrinsics[id] = r.pose();
        f.gnss_tractor = {r.real(), r.real(), r.real()};
        f.gnss_trailer = {r.real(), r.real(), r.real()};
        f.heading_tractor = r.real();
        f.heading_trailer = r.real();
        f.scenario_kind = scenario_from_name(r.str());
        long long n_boxes = r.integer();
        for (long long i = 0; i < n_boxes; ++i) {
            BoxAnnotation b;
            b.center = {r.real(), r.real(), r.real()};
            b.size = {r.real(), r.real(), r.real()};
            b.orientation = {r.real(), r.real(), r.real(), r.real()};
            b.track_id = r.integer();
            f.boxes.push_back(b);
        }
        if (r.i != toks.size()) throw Error("trailing tokens");
        return f;
    } catch (const std::exception& e) {
        throw CorruptRecord(std::string("bad frame record: ") + e.what(), line_no);
    }
}

// ---------------------------------------------------------------------------
// Sequence <-> directory.

inline void write_sequence(const Sequence& seq, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json j;
    j["format_version"] = seq.manifest.format_version;
    j["sequence_id"] = seq.manifest.sequence_id;
    j["seed"] = seq.manifest.seed;
    j["frame_count"] = static_cast<std::int64_t>(seq.frames.size());
    j["scenario"] = spec_to_json(seq.manifest.spec);
    j["rig"] = rig_to_json(seq.rig);
    if (seq.manifest.sensor_noise) {
        j["sensor_noise"] = {{"sigma_pos", seq.manifest.sensor_noise->sigma_pos},
                             {"sigma_heading", seq.manifest.sensor_noise->sigma_heading},
                             {"seed", seq.manifest.sensor_noise->seed}};
    }
    std::ofstream mf(dir / "manifest.json");
    mf << j.dump(2) << '\n';

    std::ofstream rf(dir / "frames.ndrec");
    for (const FrameRecord& f : seq.frames) rf << frame_to_line(f) << '\n';
}

inline Sequence read_sequence(const std::filesystem::path& dir) {
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw Error("cannot open " + (dir / "manifest.json").string());
    nlohmann::json j = nlohmann::json::parse(mf);

    Sequence seq;
    seq.manifest.format_version = j.at("format_version").get<int>();
    if (seq.manifest.format_version != kDatasetFormatVersion)
        throw FormatVersionMismatch("sequence format version " +
                                    std::to_string(seq.manifest.format_version) + ", expected " +
                                    std::to_string(kDatasetFormatVersion));
    seq.manifest.sequence_id = j.at("sequence_id").get<std::string>();
    seq.manifest.seed = j.at("seed").get<std::uint64_t>();
    seq.manifest.frame_count = j.at("frame_count").get<std::int64_t>();
    seq.manifest.spec = spec_from_json(j.at("scenario"));
    seq.rig = rig_from_json(j.at("rig"));
    if (j.contains("sensor_noise")) {
        NoiseInfo n;
        n.sigma_pos = j["sensor_noise"].at("sigma_pos").get<double>();
        n.sigma_heading = j["sensor_noise"].at("sigma_heading").get<double>();
        n.seed = j["sensor_noise"].at("seed").get<std::uint64_t>();
        seq.manifest.sensor_noise = n;
    }

    std::ifstream rf(dir / "frames.ndrec");
    if (!rf) throw Error("cannot open " + (dir / "frames.ndrec").string());
    std::string line;
    long line_no = 0;
    std::int64_t prev_ts = -1;
    while (std::getline(rf, line)) {
        ++line_no;
        if (line.empty()) continue;
        FrameRecord f = frame_from_line(line, line_no);
        if (prev_ts >= 0 && f.timestamp_us != prev_ts + kFramePeriodUs)
            throw CorruptRecord("timestamp not spaced " + std::to_string(kFramePeriodUs) + "us",
                                line_no);
        prev_ts = f.timestamp_us;
        seq.frames.push_back(std::move(f));
    }
    if (static_cast<std::int64_t>(seq.frames.size()) != seq.manifest.frame_count)
        throw CorruptRecord("manifest frame_count " + std::to_string(seq.manifest.frame_count) +
                                " but file has " + std::to_string(seq.frames.size()),
                            line_no);
    return seq;
}

// ---------------------------------------------------------------------------
// Building records from simulator output.

// Optional constant-velocity box agents; schema coverage only.
inline std::vector<BoxAnnotation> box_agents_at(int n_boxes, double t, std::uint64_t seed) {
    std::mt19937_64 rng(mix_seed(seed, 0xB0E5ULL));
    std::uniform_real_distribution<double> pos(-40.0, 40.0);
    std::uniform_real_distribution<double> vel(-8.0, 8.0);
    std::uniform_real_distribution<double> dim(0.5, 2.5);
    std::uniform_real_distribution<double> yaw(-kPi, kPi);
    std::vector<BoxAnnotation> boxes;
    for (int i = 0; i < n_boxes; ++i) {
        Vec3 p0{pos(rng), pos(rng), 0.0};
        Vec3 v{vel(rng), vel(rng), 0.0};
        BoxAnnotation b;
        b.center = p0 + v * t;
        b.size = {dim(rng), dim(rng) + 2.0, dim(rng)};
        b.orientation = Quat::from_yaw(yaw(rng));
        b.track_id = i;
        boxes.push_back(b);
    }
    return boxes;
}

inline Sequence build_records(const SimSequence& sim, const RigGeometry& rig,
                              const std::string& sequence_id, int n_boxes = 0) {
    Sequence seq;
    seq.manifest.sequence_id = sequence_id;
    seq.manifest.spec = sim.spec;
    seq.manifest.seed = sim.spec.seed;
    seq.manifest.frame_count = static_cast<std::int64_t>(sim.frames.size());
    seq.rig = rig;
    seq.frames.reserve(sim.frames.size());
    for (size_t k = 0; k < sim.frames.size(); ++k) {
        const SimFrame& sf = sim.frames[k];
        FrameRecord f;
        f.timestamp_us = static_cast<std::int64_t>(k) * kFramePeriodUs;
        f.ego_pose = sf.state.tractor_pose();
        f.trailer_pose = sf.state.trailer_pose(rig, sf.trailer_pitch);
        f.gt_extrinsics = sf.extrinsics;
        // Sensor fields mirror the truth until noise is injected.
        f.gnss_tractor = f.ego_pose.translation;
        f.gnss_trailer = f.trailer_pose.translation;
        f.heading_tractor = wrap_angle(sf.state.psi_tractor);
        f.heading_trailer = wrap_angle(sf.state.psi_trailer);
        f.scenario_kind = sim.spec.kind;
        if (n_boxes > 0) f.boxes = box_agents_at(n_boxes, sf.t, sim.spec.seed);
        seq.frames.push_back(std::move(f));
    }
    return seq;
}

// Adds iid Gaussian noise to the GNSS/heading fields; ground truth untouched.
inline Sequence inject_sensor_noise(const Sequence& in, double sigma_pos, double sigma_heading,
                                    std::uint64_t seed) {
    if (sigma_pos < 0.0 || sigma_heading < 0.0) throw Error("noise sigmas must be >= 0");
    Sequence out = in;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> pos_noise(0.0, sigma_pos);
    std::normal_distribution<double> head_noise(0.0, sigma_heading);
    auto draw = [&](std::normal_distribution<double>& d, double sigma) {
        return sigma == 0.0 ? 0.0 : d(rng);
    };
    for (FrameRecord& f : out.frames) {
        f.gnss_tractor = f.ego_pose.translation +
                         Vec3{draw(pos_noise, sigma_pos), draw(pos_noise, sigma_pos),
                              draw(pos_noise, sigma_pos)};
        f.gnss_trailer = f.trailer_pose.translation +
                         Vec3{draw(pos_noise, sigma_pos), draw(pos_noise, sigma_pos),
                              draw(pos_noise, sigma_pos)};
        f.heading_tractor = wrap_angle(f.ego_pose.rotation.yaw() + draw(head_noise, sigma_heading));
        f.heading_trailer =
            wrap_angle(f.trailer_pose.rotation.yaw() + draw(head_noise, sigma_heading));
    }
    out.manifest.sensor_noise = NoiseInfo{sigma_pos, sigma_heading, seed};
    return out;
}

// ---------------------------------------------------------------------------
// Train/validation split at sequence granularity.

struct Split {
    std::vector<std::string> train_ids;
    std::vector<std::string> val_ids;
};

inline Split split_train_val(std::vector<std::string> ids, double ratio, std::uint64_t seed) {
    if (ids.size() < 2) throw TooFewSequences("need at least 2 sequences to split");
    if (!(ratio > 0.0 && ratio < 1.0)) throw Error("split ratio must be in (0, 1)");
    std::mt19937_64 rng(seed);
    std::shuffle(ids.begin(), ids.end(), rng);
    size_t n_train = static_cast<size_t>(std::lround(ratio * static_cast<double>(ids.size())));
    Split s;
    s.train_ids.assign(ids.begin(), ids.begin() + n_train);
    s.val_ids.assign(ids.begin() + n_train, ids.end());
    std::sort(s.train_ids.begin(), s.train_ids.end());
    std::sort(s.val_ids.begin(), s.val_ids.end());
    return s;
}

// ---------------------------------------------------------------------------
// Corpus directory: corpus.json listing the member sequences.

struct CorpusInfo {
    int format_version = kDatasetFormatVersion;
    std::uint64_t seed = 0;
    std::vector<std::string> sequence_ids;
};

inline void write_corpus_info(const CorpusInfo& info, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json j;
    j["format_version"] = info.format_version;
    j["seed"] = info.seed;
    j["sequences"] = info.sequence_ids;
    std::ofstream f(dir / "corpus.json");
    f << j.dump(2) << '\n';
}

inline CorpusInfo read_corpus_info(const std::filesystem::path& dir) {
    std::ifstream f(dir / "corpus.json");
    if (!f) throw Error("cannot open " + (dir / "corpus.json").string());
    nlohmann::json j = nlohmann::json::parse(f);
    CorpusInfo info;
    info.format_version = j.at("format_version").get<int>();
    if (info.format_version != kDatasetFormatVersion)
        throw FormatVersionMismatch("corpus format version mismatch");
    info.seed = j.at("seed").get<std::uint64_t>();
    info.sequence_ids = j.at("sequences").get<std::vector<std::string>>();
    return info;
}

inline void write_split(const Split& s, const std::filesystem::path& path) {
    nlohmann::json j;
    j["train"] = s.train_ids;
    j["val"] = s.val_ids;
    std::ofstream f(path);
    f << j.dump(2) << '\n';
}

inline Split read_split(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open " + path.string());
    nlohmann::json j = nlohmann::json::parse(f);
    Split s;
    s.train_ids = j.at("train").get<std::vector<std::string>>();
    s.val_ids = j.at("val").get<std::vector<std::string>>();
    return s;
}

}  // namespace dcap
