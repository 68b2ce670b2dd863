#pragma once

// Metric-scale recovery for similarity-equivariant pose predictors. Given
// per-camera predictions that are correct only up to a global scale, the
// per-frame least-squares scalar
//     s = (t*)^T t_hat / (t_hat^T t_hat)
// aligns the predicted front->rear relative translation with its ground
// truth; trailer-camera poses are rebuilt with rescaled translations and
// mapped back to the world frame through the ground-truth front extrinsic.
// Rotations pass through unscaled. Frames whose predicted baseline norm
// falls below the threshold are discarded.

#include <map>

#include "dcap/errors.hpp"
#include "dcap/geom.hpp"
#include "dcap/kinematics.hpp"

namespace dcap {

inline constexpr double kDefaultBaselineThreshold = 1e-6;  // on ||t_hat||^2, m^2

struct ScaledPrediction {
    std::map<CameraId, Pose> poses;  // arbitrary-scale frame
    std::int64_t frame_index = 0;
};

struct ScaleResult {
    double s = 0.0;
    bool discarded = false;
    std::map<CameraId, Pose> metric_poses;  // trailer cameras, world frame
};

// Closed-form minimizer of ||t_star - s * t_hat||^2.
inline double estimate_scale(const Vec3& t_star, const Vec3& t_hat,
                             double threshold = kDefaultBaselineThreshold) {
    double denom = dot(t_hat, t_hat);
    if (denom < threshold)
        throw DegenerateBaseline("predicted baseline norm^2 " + format_real(denom) +
                                 " below threshold " + format_real(threshold));
    return dot(t_star, t_hat) / denom;
}

inline ScaleResult recover_metric_trailer_poses(const ScaledPrediction& pred, const Pose& gt_front,
                                                const Pose& gt_rear,
                                                double threshold = kDefaultBaselineThreshold) {
    auto it_front = pred.poses.find(CameraId::front);
    if (it_front == pred.poses.end()) throw Error("prediction lacks the front camera");
    auto it_rear = pred.poses.find(CameraId::rear);
    if (it_rear == pred.poses.end()) throw Error("prediction lacks the rear camera");

    Pose rel_hat = relative_transform(it_front->second, it_rear->second);   // T_hat_{F->B}
    Pose rel_star = relative_transform(gt_front, gt_rear);                  // T*_{F->B}

    ScaleResult out;
    try {
        out.s = estimate_scale(rel_star.translation, rel_hat.translation, threshold);
    } catch (const DegenerateBaseline&) {
        out.discarded = true;
        return out;
    }

    for (const auto& [cam, pose_hat] : pred.poses) {
        if (!is_trailer_camera(cam)) continue;
        Pose rel_j = relative_transform(it_front->second, pose_hat);  // T_hat_{F->j}
        Pose metric_rel{rel_j.rotation, rel_j.translation * out.s};   // rescale translation only
        out.metric_poses[cam] = compose(gt_front, inverse(metric_rel));
    }
    return out;
}

}  // namespace dcap
