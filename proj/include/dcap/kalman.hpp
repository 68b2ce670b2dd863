#pragma once

// GNSS-IMU extended Kalman filter baseline. State is planar:
// [x_t, y_t, psi_t, x_r, y_r, psi_r] for the tractor (t) and trailer (r)
// bodies. The predict step uses the same coupled kinematic trailer model as
// the simulator (10 Euler substeps per frame) with the Jacobian chained
// analytically across substeps; the update is a direct linear observation of
// all six components with Joseph-form covariance.

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "dcap/dataset.hpp"
#include "dcap/errors.hpp"
#include "dcap/geom.hpp"
#include "dcap/kinematics.hpp"
#include "dcap/util.hpp"

namespace dcap {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

struct KfState {
    Vec6 mean = Vec6::Zero();
    Mat6 covariance = Mat6::Identity();
};

struct KfConfig {
    double q_pos = 0.01;        // position process noise spectral density, m^2/s
    double q_psi = 0.025;       // heading process noise spectral density, rad^2/s
    double sigma_pos = 0.020;   // GNSS sigma per axis, m
    double sigma_heading = 0.0349;  // heading sigma, rad (2 deg)
    double dt = 0.1;
};

struct KfMeasurement {
    Vec3 gnss_tractor;
    Vec3 gnss_trailer;
    double heading_tractor = 0.0;
    double heading_trailer = 0.0;
};

namespace detail {

// One Euler substep of the mean together with its Jacobian.
inline void kf_substep(Vec6& x, Mat6& a, double v, double omega, double ell, double d, double h) {
    const double psi_t = x[2], psi_r = x[5];
    const double cpt = std::cos(psi_t), spt = std::sin(psi_t);
    const double cpr = std::cos(psi_r), spr = std::sin(psi_r);
    const double phi = wrap_angle(psi_t - psi_r);
    const double dpsi_r = (v / d) * std::sin(phi);
    const double dcos = v * std::cos(phi);  // d * d(dpsi_r)/d(psi_t)

    a.setIdentity();
    a(0, 2) = -v * spt * h;
    a(1, 2) = v * cpt * h;
    a(3, 2) = (-v * spt + omega * ell * cpt + dcos * spr) * h;
    a(3, 5) = (-dcos * spr + d * dpsi_r * cpr) * h;
    a(4, 2) = (v * cpt + omega * ell * spt - dcos * cpr) * h;
    a(4, 5) = (dcos * cpr + d * dpsi_r * spr) * h;
    a(5, 2) = (v / d) * std::cos(phi) * h;
    a(5, 5) = 1.0 - (v / d) * std::cos(phi) * h;

    x[0] += v * cpt * h;
    x[1] += v * spt * h;
    x[2] += omega * h;
    x[3] += (v * cpt + omega * ell * spt + d * dpsi_r * spr) * h;
    x[4] += (v * spt - omega * ell * cpt - d * dpsi_r * cpr) * h;
    x[5] += dpsi_r * h;
}

}  // namespace detail

// Mean propagation and the chained transition Jacobian for a full frame.
inline std::pair<Vec6, Mat6> kf_transition(const Vec6& mean, const Control& u,
                                           const RigGeometry& rig, double dt) {
    Vec6 x = mean;
    Mat6 f = Mat6::Identity();
    Mat6 a;
    const double h = dt / kStepSubdivisions;
    for (int i = 0; i < kStepSubdivisions; ++i) {
        detail::kf_substep(x, a, u.v, u.omega, rig.hitch_offset, rig.hitch_length_d, h);
        f = a * f;
    }
    return {x, f};
}

inline KfState kf_predict(const KfState& s, const Control& u, const RigGeometry& rig,
                          const KfConfig& cfg) {
    auto [x, f] = kf_transition(s.mean, u, rig, cfg.dt);
    x[2] = wrap_angle(x[2]);
    x[5] = wrap_angle(x[5]);

    Mat6 q = Mat6::Zero();
    q.diagonal() << cfg.q_pos * cfg.dt, cfg.q_pos * cfg.dt, cfg.q_psi * cfg.dt, cfg.q_pos * cfg.dt,
        cfg.q_pos * cfg.dt, cfg.q_psi * cfg.dt;

    KfState out;
    out.mean = x;
    out.covariance = f * s.covariance * f.transpose() + q;
    out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
    return out;
}

inline KfState kf_update(const KfState& s, const KfMeasurement& z, const KfConfig& cfg) {
    // Measurement order: [gx_t, gy_t, gx_r, gy_r, head_t, head_r].
    Mat6 h = Mat6::Zero();
    h(0, 0) = 1;
    h(1, 1) = 1;
    h(2, 3) = 1;
    h(3, 4) = 1;
    h(4, 2) = 1;
    h(5, 5) = 1;

    Vec6 zv;
    zv << z.gnss_tractor.x, z.gnss_tractor.y, z.gnss_trailer.x, z.gnss_trailer.y,
        z.heading_tractor, z.heading_trailer;

    const double rp = std::max(cfg.sigma_pos * cfg.sigma_pos, 1e-12);
    const double rh = std::max(cfg.sigma_heading * cfg.sigma_heading, 1e-12);
    Mat6 r = Mat6::Zero();
    r.diagonal() << rp, rp, rp, rp, rh, rh;

    Vec6 innov = zv - h * s.mean;
    innov[4] = wrap_angle(innov[4]);
    innov[5] = wrap_angle(innov[5]);

    Mat6 sm = h * s.covariance * h.transpose() + r;
    Mat6 k = sm.llt().solve(h * s.covariance).transpose();

    KfState out;
    out.mean = s.mean + k * innov;
    out.mean[2] = wrap_angle(out.mean[2]);
    out.mean[5] = wrap_angle(out.mean[5]);
    Mat6 ikh = Mat6::Identity() - k * h;
    out.covariance = ikh * s.covariance * ikh.transpose() + k * r * k.transpose();
    out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
    return out;
}

struct KfOutput {
    std::vector<KfState> states;        // posterior per frame
    std::vector<Pose> rear_world;       // rear camera pose, world frame
    std::vector<Pose> rear_in_tractor;  // rear camera pose in the filtered tractor frame
};

// Runs the filter over a noise-injected sequence. Controls (v, omega) are
// dead-reckoned from consecutive GNSS/heading measurements; no ground-truth
// field is consulted.
inline KfOutput run_kf(const Sequence& seq, const RigGeometry& rig, const KfConfig& cfg) {
    if (!seq.manifest.sensor_noise)
        throw MissingSensorFields("sequence " + seq.manifest.sequence_id +
                                  " has no injected sensor readings");
    KfOutput out;
    if (seq.frames.empty()) return out;

    auto emit = [&](const KfState& s) {
        Pose tractor_est = Pose::from_yaw(s.mean[2], {s.mean[0], s.mean[1], 0.0});
        Pose trailer_est = Pose::from_yaw(s.mean[5], {s.mean[3], s.mean[4], 0.0});
        Pose rear = compose(trailer_est, rig.camera_mounts.at(CameraId::rear).pose);
        out.states.push_back(s);
        out.rear_world.push_back(rear);
        out.rear_in_tractor.push_back(relative_transform(rear, tractor_est));
    };

    const FrameRecord& f0 = seq.frames.front();
    KfState s;
    s.mean << f0.gnss_tractor.x, f0.gnss_tractor.y, f0.heading_tractor, f0.gnss_trailer.x,
        f0.gnss_trailer.y, f0.heading_trailer;
    s.covariance = Mat6::Zero();
    s.covariance.diagonal() << 1.0, 1.0, 0.1, 1.0, 1.0, 0.1;
    emit(s);

    for (size_t k = 1; k < seq.frames.size(); ++k) {
        const FrameRecord& prev = seq.frames[k - 1];
        const FrameRecord& cur = seq.frames[k];
        double dx = cur.gnss_tractor.x - prev.gnss_tractor.x;
        double dy = cur.gnss_tractor.y - prev.gnss_tractor.y;
        Control u;
        u.v = std::sqrt(dx * dx + dy * dy) / cfg.dt;
        u.omega = wrap_angle(cur.heading_tractor - prev.heading_tractor) / cfg.dt;

        s = kf_predict(s, u, rig, cfg);
        s = kf_update(s, {cur.gnss_tractor, cur.gnss_trailer, cur.heading_tractor,
                          cur.heading_trailer}, cfg);
        emit(s);
    }
    return out;
}

}  // namespace dcap
