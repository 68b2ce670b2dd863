#pragma once

// Planar kinematic single-track tractor-trailer simulator. The tractor is a
// unicycle driven by (v, omega); the trailer heading follows
//   psi_trailer' = (v / d) * sin(phi),   phi = psi_tractor - psi_trailer,
// which has the analytic steady state phi* = arcsin(omega * d / v) used as a
// test oracle. Integration is explicit Euler with 10 substeps per frame.

#include <array>
#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "dcap/errors.hpp"
#include "dcap/geom.hpp"
#include "dcap/util.hpp"

namespace dcap {

enum class CameraId { front, front_left, front_right, rear, rear_left, rear_right };

inline constexpr std::array<CameraId, 6> kCameraOrder = {
    CameraId::front,     CameraId::front_left, CameraId::front_right,
    CameraId::rear,      CameraId::rear_left,  CameraId::rear_right};

inline const char* camera_name(CameraId id) {
    switch (id) {
        case CameraId::front: return "front";
        case CameraId::front_left: return "front_left";
        case CameraId::front_right: return "front_right";
        case CameraId::rear: return "rear";
        case CameraId::rear_left: return "rear_left";
        case CameraId::rear_right: return "rear_right";
    }
    return "?";
}

inline CameraId camera_from_name(const std::string& s) {
    for (CameraId id : kCameraOrder)
        if (s == camera_name(id)) return id;
    throw Error("unknown camera id: " + s);
}

inline bool is_trailer_camera(CameraId id) {
    return id == CameraId::rear || id == CameraId::rear_left || id == CameraId::rear_right;
}

enum class Body { tractor, trailer };

struct CameraMeta {
    int width = 1600;
    int height = 900;
    double fov_deg = 110.0;
};

struct RigGeometry {
    double hitch_length_d = 8.0;   // hitch point to trailer axle, meters
    double hitch_offset = 1.5;     // tractor origin to hitch point, along -x
    double jackknife_limit = 1.31; // |phi| beyond this throws

    struct Mount {
        Body parent;
        Pose pose;  // camera pose in the parent body frame
    };
    std::map<CameraId, Mount> camera_mounts;
    Pose intra_rear_left;   // rear -> rear_left, fixed
    Pose intra_rear_right;  // rear -> rear_right, fixed
    CameraMeta camera_meta;

    // Trailer body pose in the tractor frame when phi = 0.
    Pose nominal_trailer_in_tractor() const {
        return {Quat::identity(), {-(hitch_offset + hitch_length_d), 0.0, 0.0}};
    }

    Pose nominal_camera_in_tractor(CameraId id) const {
        const Mount& m = camera_mounts.at(id);
        if (m.parent == Body::tractor) return m.pose;
        return compose(nominal_trailer_in_tractor(), m.pose);
    }

    static RigGeometry standard() {
        RigGeometry rig;
        auto yaw_mount = [](double x, double y, double z, double yaw) {
            return Pose{Quat::from_yaw(yaw), {x, y, z}};
        };
        rig.camera_mounts[CameraId::front] = {Body::tractor, yaw_mount(1.8, 0.0, 2.6, 0.0)};
        rig.camera_mounts[CameraId::front_left] = {Body::tractor, yaw_mount(1.6, 1.1, 2.6, kPi / 3)};
        rig.camera_mounts[CameraId::front_right] = {Body::tractor, yaw_mount(1.6, -1.1, 2.6, -kPi / 3)};
        // Trailer origin sits at the axle; the rear face is 2.5 m behind it,
        // cameras 4 m above ground.
        rig.camera_mounts[CameraId::rear] = {Body::trailer, yaw_mount(-2.5, 0.0, 4.0, kPi)};
        rig.camera_mounts[CameraId::rear_left] = {Body::trailer, yaw_mount(-2.3, 1.25, 4.0, 2 * kPi / 3)};
        rig.camera_mounts[CameraId::rear_right] = {Body::trailer, yaw_mount(-2.3, -1.25, 4.0, -2 * kPi / 3)};
        const Pose& rear = rig.camera_mounts[CameraId::rear].pose;
        rig.intra_rear_left = relative_transform(rig.camera_mounts[CameraId::rear_left].pose, rear);
        rig.intra_rear_right = relative_transform(rig.camera_mounts[CameraId::rear_right].pose, rear);
        return rig;
    }
};

struct TruckState {
    double x = 0.0, y = 0.0;     // tractor origin, world frame
    double psi_tractor = 0.0;    // unwrapped headings; phi is wrapped on use
    double psi_trailer = 0.0;
    double speed_v = 0.0;

    double articulation() const { return wrap_angle(psi_tractor - psi_trailer); }

    Pose tractor_pose() const { return Pose::from_yaw(psi_tractor, {x, y, 0.0}); }

    Vec3 hitch_point(const RigGeometry& rig) const {
        return tractor_pose().apply({-rig.hitch_offset, 0.0, 0.0});
    }

    Vec3 trailer_origin(const RigGeometry& rig) const {
        Vec3 h = hitch_point(rig);
        return {h.x - rig.hitch_length_d * std::cos(psi_trailer),
                h.y - rig.hitch_length_d * std::sin(psi_trailer), 0.0};
    }

    Pose trailer_pose(const RigGeometry& rig, double pitch = 0.0) const {
        Quat rot = Quat::from_yaw(psi_trailer);
        if (pitch != 0.0) rot = (rot * Quat::from_axis_angle({0, 1, 0}, pitch)).normalized();
        return {rot, trailer_origin(rig)};
    }
};

struct Control {
    double v = 0.0;      // m/s
    double omega = 0.0;  // rad/s
};

inline constexpr int kStepSubdivisions = 10;

inline TruckState step(const TruckState& s, const Control& u, double dt, const RigGeometry& rig) {
    TruckState n = s;
    const double h = dt / kStepSubdivisions;
    for (int i = 0; i < kStepSubdivisions; ++i) {
        double phi = wrap_angle(n.psi_tractor - n.psi_trailer);
        double dx = u.v * std::cos(n.psi_tractor);
        double dy = u.v * std::sin(n.psi_tractor);
        double dpsi_r = (u.v / rig.hitch_length_d) * std::sin(phi);
        n.x += dx * h;
        n.y += dy * h;
        n.psi_tractor += u.omega * h;
        n.psi_trailer += dpsi_r * h;
    }
    n.speed_v = u.v;
    if (std::abs(n.articulation()) > rig.jackknife_limit)
        throw JackknifeExceeded("articulation angle " + format_real(n.articulation()) +
                                " exceeds limit " + format_real(rig.jackknife_limit));
    return n;
}

inline std::map<CameraId, Pose> camera_extrinsics(const TruckState& s, const RigGeometry& rig,
                                                  double trailer_pitch = 0.0) {
    std::map<CameraId, Pose> out;
    Pose tractor = s.tractor_pose();
    Pose trailer = s.trailer_pose(rig, trailer_pitch);
    for (const auto& [id, mount] : rig.camera_mounts)
        out[id] = compose(mount.parent == Body::tractor ? tractor : trailer, mount.pose);
    return out;
}

enum class ScenarioKind {
    straight,
    single_turn,
    long_curve,
    turn_sequence,
    u_turn,
    lane_change,
    roundabout
};

inline constexpr std::array<ScenarioKind, 7> kScenarioOrder = {
    ScenarioKind::straight,    ScenarioKind::single_turn,  ScenarioKind::long_curve,
    ScenarioKind::turn_sequence, ScenarioKind::u_turn,     ScenarioKind::lane_change,
    ScenarioKind::roundabout};

inline const char* scenario_name(ScenarioKind k) {
    switch (k) {
        case ScenarioKind::straight: return "straight";
        case ScenarioKind::single_turn: return "single_turn";
        case ScenarioKind::long_curve: return "long_curve";
        case ScenarioKind::turn_sequence: return "turn_sequence";
        case ScenarioKind::u_turn: return "u_turn";
        case ScenarioKind::lane_change: return "lane_change";
        case ScenarioKind::roundabout: return "roundabout";
    }
    return "?";
}

inline ScenarioKind scenario_from_name(const std::string& s) {
    for (ScenarioKind k : kScenarioOrder)
        if (s == scenario_name(k)) return k;
    throw Error("unknown scenario kind: " + s);
}

inline bool is_turning(ScenarioKind k) { return k != ScenarioKind::straight; }

struct ScenarioParams {
    double speed = 0.0;            // m/s; 0 means draw from the seed
    double turn_radius = 0.0;      // m
    double heading_change = 0.0;   // rad (magnitude; sign drawn)
    double lane_offset = 0.0;      // m
    double trailer_pitch_amp = 0.0;  // rad, sinusoidal pitch toggle (off by default)
};

struct ScenarioSpec {
    ScenarioKind kind = ScenarioKind::straight;
    double duration_s = 20.0;
    int rate_hz = 10;  // fixed by the recording format
    std::uint64_t seed = 0;
    ScenarioParams params;

    int frame_count() const { return static_cast<int>(std::lround(duration_s * rate_hz)); }
};

struct SimFrame {
    TruckState state;
    double t = 0.0;
    double trailer_pitch = 0.0;
    std::map<CameraId, Pose> extrinsics;
};

struct SimSequence {
    ScenarioSpec spec;
    std::vector<SimFrame> frames;
};

namespace detail {

inline double draw(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int sign_draw(std::mt19937_64& rng) {
    return std::uniform_int_distribution<int>(0, 1)(rng) ? 1 : -1;
}

// Append a constant-rate turn covering `dpsi` radians, quantized to whole
// frames with omega adjusted so the integrated heading change is exact.
inline void push_turn(std::vector<Control>& prof, double v, double dpsi, double omega_mag,
                      double dt) {
    if (dpsi == 0.0 || omega_mag <= 0.0) return;
    int n = std::max(1, static_cast<int>(std::lround(std::abs(dpsi) / (omega_mag * dt))));
    double omega = dpsi / (n * dt);
    for (int i = 0; i < n; ++i) prof.push_back({v, omega});
}

inline void push_straight(std::vector<Control>& prof, double v, int n) {
    for (int i = 0; i < n; ++i) prof.push_back({v, 0.0});
}

}  // namespace detail

// Per-frame control profile for a scenario; deterministic given the spec.
inline std::vector<Control> control_profile(const ScenarioSpec& spec, const RigGeometry& rig) {
    std::mt19937_64 rng(spec.seed);
    const double dt = 1.0 / spec.rate_hz;
    const int n = spec.frame_count();
    std::vector<Control> prof;
    prof.reserve(n);

    // Radii below d / sin(0.9 * limit) would jackknife at steady state.
    const double min_radius = rig.hitch_length_d / std::sin(0.9 * rig.jackknife_limit) + 1.0;
    auto radius = [&](double lo, double hi) {
        double r = spec.params.turn_radius > 0.0 ? spec.params.turn_radius : detail::draw(rng, lo, hi);
        return std::max(r, min_radius);
    };
    auto speed = [&](double lo, double hi) {
        return spec.params.speed > 0.0 ? spec.params.speed : detail::draw(rng, lo, hi);
    };

    switch (spec.kind) {
        case ScenarioKind::straight: {
            detail::push_straight(prof, speed(10.0, 25.0), n);
            break;
        }
        case ScenarioKind::single_turn: {
            double v = speed(6.0, 10.0);
            double r = radius(15.0, 30.0);
            double dpsi = spec.params.heading_change > 0.0 ? spec.params.heading_change
                                                           : detail::draw(rng, kPi / 3, kPi / 2);
            dpsi *= detail::sign_draw(rng);
            detail::push_straight(prof, v, n / 5);
            detail::push_turn(prof, v, dpsi, v / r, dt);
            break;
        }
        case ScenarioKind::long_curve: {
            double v = speed(10.0, 15.0);
            double r = radius(60.0, 120.0);
            double omega = detail::sign_draw(rng) * v / r;
            detail::push_straight(prof, v, n / 10);
            while (static_cast<int>(prof.size()) < n) prof.push_back({v, omega});
            break;
        }
        case ScenarioKind::turn_sequence: {
            double v = speed(6.0, 10.0);
            int sgn = detail::sign_draw(rng);
            for (int k = 0; k < 3; ++k) {
                double r = radius(15.0, 25.0);
                double dpsi = sgn * detail::draw(rng, kPi / 4, kPi / 2);
                detail::push_straight(prof, v, n / 10);
                detail::push_turn(prof, v, dpsi, v / r, dt);
                sgn = -sgn;
            }
            break;
        }
        case ScenarioKind::u_turn: {
            double v = speed(5.0, 7.0);
            double r = radius(10.0, 14.0);
            double dpsi = kPi * detail::sign_draw(rng);
            detail::push_straight(prof, v, n * 3 / 20);
            detail::push_turn(prof, v, dpsi, v / r, dt);
            break;
        }
        case ScenarioKind::lane_change: {
            double v = speed(12.0, 18.0);
            double offset = spec.params.lane_offset > 0.0 ? spec.params.lane_offset : 3.5;
            double t_seg = 2.0;
            int n_seg = static_cast<int>(std::lround(t_seg / dt));
            double omega = offset / (v * t_seg * t_seg);
            detail::push_straight(prof, v, n / 5);
            for (int i = 0; i < n_seg; ++i) prof.push_back({v, omega});
            for (int i = 0; i < n_seg; ++i) prof.push_back({v, -omega});
            break;
        }
        case ScenarioKind::roundabout: {
            double v = speed(5.0, 8.0);
            double r = radius(18.0, 25.0);
            double dpsi = detail::sign_draw(rng) * detail::draw(rng, 3 * kPi / 4, 3 * kPi / 2);
            detail::push_straight(prof, v, n * 3 / 20);
            detail::push_turn(prof, v, dpsi, v / r, dt);
            break;
        }
    }

    // Pad with straight driving at the entry speed, or truncate.
    double v_pad = prof.empty() ? 10.0 : prof.back().v;
    while (static_cast<int>(prof.size()) < n) prof.push_back({v_pad, 0.0});
    prof.resize(n);
    return prof;
}

// Deterministic 10 Hz sequence for one scenario.
inline SimSequence generate(const ScenarioSpec& spec, const RigGeometry& rig) {
    const double dt = 1.0 / spec.rate_hz;
    std::vector<Control> prof = control_profile(spec, rig);
    const int n = spec.frame_count();

    SimSequence seq;
    seq.spec = spec;
    seq.frames.reserve(n);

    TruckState state;
    state.speed_v = prof.empty() ? 0.0 : prof[0].v;
    for (int k = 0; k < n; ++k) {
        if (k > 0) state = step(state, prof[k - 1], dt, rig);
        SimFrame f;
        f.state = state;
        f.t = k * dt;
        if (spec.params.trailer_pitch_amp != 0.0)
            f.trailer_pitch = spec.params.trailer_pitch_amp * std::sin(2.0 * kPi * f.t / 4.0);
        f.extrinsics = camera_extrinsics(state, rig, f.trailer_pitch);
        seq.frames.push_back(std::move(f));
    }
    return seq;
}

using ScenarioMix = std::map<ScenarioKind, double>;

// Fractions matching the reported corpus composition: 62.1% straight, the
// remaining 37.9% split across turning maneuvers.
inline ScenarioMix paper_mix() {
    ScenarioMix m;
    const double turning = 0.379;
    // Shares within the turning subset (normalized).
    const double shares[] = {23.8, 32.4, 19.0, 9.6, 8.2, 7.1};  // single, long, seq, u, lane, round
    double total = 0.0;
    for (double s : shares) total += s;
    m[ScenarioKind::straight] = 1.0 - turning;
    m[ScenarioKind::single_turn] = turning * shares[0] / total;
    m[ScenarioKind::long_curve] = turning * shares[1] / total;
    m[ScenarioKind::turn_sequence] = turning * shares[2] / total;
    m[ScenarioKind::u_turn] = turning * shares[3] / total;
    m[ScenarioKind::lane_change] = turning * shares[4] / total;
    m[ScenarioKind::roundabout] = turning * shares[5] / total;
    return m;
}

inline double default_duration(ScenarioKind k) {
    switch (k) {
        case ScenarioKind::straight: return 20.0;
        case ScenarioKind::single_turn: return 20.0;
        case ScenarioKind::long_curve: return 25.0;
        case ScenarioKind::turn_sequence: return 30.0;
        case ScenarioKind::u_turn: return 20.0;
        case ScenarioKind::lane_change: return 15.0;
        case ScenarioKind::roundabout: return 25.0;
    }
    return 20.0;
}

// Largest-remainder apportionment of n sequences across the mix, then a
// seeded arrangement. Counts match the mix within +-1 per category.
inline std::vector<ScenarioSpec> plan_corpus(int n_sequences, const ScenarioMix& mix,
                                             std::uint64_t seed) {
    if (n_sequences < 1) throw InvalidMix("n_sequences must be >= 1");
    double total = 0.0;
    for (const auto& [k, p] : mix) {
        if (p < 0.0) throw InvalidMix("negative proportion for " + std::string(scenario_name(k)));
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-6)
        throw InvalidMix("mix proportions sum to " + format_real(total) + ", expected 1");

    std::vector<std::pair<ScenarioKind, double>> want;  // kind, fractional remainder
    std::vector<ScenarioKind> kinds;
    int assigned = 0;
    for (ScenarioKind k : kScenarioOrder) {
        auto it = mix.find(k);
        if (it == mix.end() || it->second == 0.0) continue;
        double exact = it->second * n_sequences;
        int base = static_cast<int>(std::floor(exact));
        for (int i = 0; i < base; ++i) kinds.push_back(k);
        assigned += base;
        want.emplace_back(k, exact - base);
    }
    std::stable_sort(want.begin(), want.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    for (int i = 0; assigned < n_sequences; ++i, ++assigned)
        kinds.push_back(want[i % want.size()].first);

    std::mt19937_64 rng(mix_seed(seed, 0xC0DE5EEDULL));
    std::shuffle(kinds.begin(), kinds.end(), rng);

    std::vector<ScenarioSpec> specs;
    specs.reserve(n_sequences);
    for (int i = 0; i < n_sequences; ++i) {
        ScenarioSpec s;
        s.kind = kinds[i];
        s.duration_s = default_duration(s.kind);
        s.seed = mix_seed(seed, static_cast<std::uint64_t>(i) + 1);
        specs.push_back(s);
    }
    return specs;
}

inline std::vector<SimSequence> generate_corpus(int n_sequences, const ScenarioMix& mix,
                                                std::uint64_t seed, const RigGeometry& rig) {
    std::vector<SimSequence> out;
    for (const ScenarioSpec& spec : plan_corpus(n_sequences, mix, seed))
        out.push_back(generate(spec, rig));
    return out;
}

}  // namespace dcap
