#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <random>

#include "dcap/geom.hpp"

using namespace dcap;

namespace {

// Independent oracle: 4x4 homogeneous matrices multiplied with plain loops.
using Mat4 = std::array<std::array<double, 4>, 4>;

Mat4 to_homogeneous(const Pose& p) {
    Mat3 r = p.rotation.to_matrix();
    Mat4 h{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) h[i][j] = r(i, j);
    h[0][3] = p.translation.x;
    h[1][3] = p.translation.y;
    h[2][3] = p.translation.z;
    h[3][3] = 1.0;
    return h;
}

Mat4 matmul4(const Mat4& a, const Mat4& b) {
    Mat4 c{};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            for (int k = 0; k < 4; ++k) c[i][j] += a[i][k] * b[k][j];
    return c;
}

double max_abs_diff(const Mat4& a, const Mat4& b) {
    double m = 0.0;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) m = std::max(m, std::abs(a[i][j] - b[i][j]));
    return m;
}

Quat random_rotation(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Quat q{n(rng), n(rng), n(rng), n(rng)};
    return q.normalized();
}

Pose random_pose(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    return {random_rotation(rng), {u(rng), u(rng), u(rng)}};
}

Vec3 random_unit(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Vec3 v{n(rng), n(rng), n(rng)};
    double k = norm(v);
    return v * (1.0 / k);
}

}  // namespace

TEST_CASE("compose: identity and inverse") {
    Pose i = Pose::identity();
    Pose c = compose(i, i);
    CHECK(c.translation.x == 0.0);
    CHECK(c.rotation.w == Catch::Approx(1.0));

    std::mt19937_64 rng(7);
    for (int k = 0; k < 20; ++k) {
        Pose p = random_pose(rng);
        Pose r = compose(p, inverse(p));
        CHECK(rra(r.rotation, Quat::identity()) < 1e-9);
        CHECK(norm(r.translation) < 1e-9);
    }
}

TEST_CASE("compose matches homogeneous matrix product oracle") {
    std::mt19937_64 rng(42);
    for (int k = 0; k < 50; ++k) {
        Pose p = random_pose(rng);
        Pose q = random_pose(rng);
        Mat4 expected = matmul4(to_homogeneous(p), to_homogeneous(q));
        Mat4 got = to_homogeneous(compose(p, q));
        CHECK(max_abs_diff(expected, got) < 1e-9);
    }
}

TEST_CASE("compose is associative") {
    std::mt19937_64 rng(99);
    for (int k = 0; k < 30; ++k) {
        Pose a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
        Mat4 l = to_homogeneous(compose(compose(a, b), c));
        Mat4 r = to_homogeneous(compose(a, compose(b, c)));
        CHECK(max_abs_diff(l, r) < 1e-9);
    }
}

TEST_CASE("relative_transform") {
    std::mt19937_64 rng(3);
    Pose p = random_pose(rng);
    Pose r = relative_transform(p, p);
    CHECK(norm(r.translation) < 1e-12);
    CHECK(rra(r.rotation, Quat::identity()) < 1e-12);

    Pose front{Quat::identity(), {1, 0, 0}};
    Pose rel = relative_transform(front, Pose::identity());
    CHECK(rel.translation.x == Catch::Approx(1.0));
    CHECK(rel.translation.y == Catch::Approx(0.0).margin(1e-15));

    for (int k = 0; k < 30; ++k) {
        Pose f = random_pose(rng), b = random_pose(rng);
        // Oracle: inv(B) * F as homogeneous matrices.
        Pose binv = inverse(b);
        Mat4 expected = matmul4(to_homogeneous(binv), to_homogeneous(f));
        CHECK(max_abs_diff(expected, to_homogeneous(relative_transform(f, b))) < 1e-9);
    }
}

TEST_CASE("rra analytic cases") {
    Quat r = Quat::from_axis_angle({0, 0, 1}, 0.83);
    CHECK(rra(r, r) == 0.0);

    // Rotation about z by pi/2 vs identity: trace = 1, arccos(0) = pi/2.
    Quat rz = Quat::from_axis_angle({0, 0, 1}, kPi / 2);
    CHECK(rra(rz, Quat::identity()) == Catch::Approx(kPi / 2).margin(1e-9));
}

TEST_CASE("rra recovers axis-angle construction") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> ang(1e-3, kPi - 1e-3);
    for (int k = 0; k < 50; ++k) {
        Quat base = random_rotation(rng);
        double theta = ang(rng);
        Quat hat = base * Quat::from_axis_angle(random_unit(rng), theta);
        CHECK(rra(hat, base) == Catch::Approx(theta).margin(1e-9));
    }
}

TEST_CASE("rra symmetry and bi-invariance") {
    std::mt19937_64 rng(5);
    for (int k = 0; k < 30; ++k) {
        Quat a = random_rotation(rng), b = random_rotation(rng), c = random_rotation(rng);
        CHECK(rra(a, b) == Catch::Approx(rra(b, a)).margin(1e-12));
        CHECK(rra(c * a, c * b) == Catch::Approx(rra(a, b)).margin(1e-9));
        CHECK(rra(a * c, b * c) == Catch::Approx(rra(a, b)).margin(1e-9));
    }
}

TEST_CASE("translation_error") {
    PoseError z = translation_error({1, 2, 3}, {1, 2, 3});
    CHECK(z.delta_t == 0.0);
    CHECK(z.delta_x == 0.0);

    PoseError e = translation_error({1, 2, 2}, {0, 0, 0});
    CHECK(e.delta_t == Catch::Approx(3.0));
    CHECK(e.delta_x == Catch::Approx(1.0));
    CHECK(e.delta_y == Catch::Approx(2.0));
    CHECK(e.delta_z == Catch::Approx(2.0));

    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-50.0, 50.0);
    for (int k = 0; k < 50; ++k) {
        Vec3 a{u(rng), u(rng), u(rng)}, b{u(rng), u(rng), u(rng)};
        PoseError pe = translation_error(a, b);
        // Elementwise oracle.
        double dx = std::abs(a.x - b.x), dy = std::abs(a.y - b.y), dz = std::abs(a.z - b.z);
        double dt = std::sqrt(dx * dx + dy * dy + dz * dz);
        CHECK(pe.delta_t == Catch::Approx(dt).margin(1e-12));
        // Norm inequalities from the definition.
        CHECK(pe.delta_t <= dx + dy + dz + 1e-12);
        CHECK(pe.delta_t >= std::max({dx, dy, dz}) - 1e-12);
    }
}

TEST_CASE("propagate_rig round trip") {
    Pose rear{Quat::from_axis_angle({0, 1, 0}, 0.4), {5, -2, 4}};
    CHECK(max_abs_diff(to_homogeneous(propagate_rig(rear, Pose::identity())), to_homogeneous(rear)) == 0.0);

    std::mt19937_64 rng(8);
    for (int k = 0; k < 20; ++k) {
        Pose r = random_pose(rng);
        Pose intra = random_pose(rng);
        Pose sibling = propagate_rig(r, intra);
        Pose recovered = relative_transform(sibling, r);
        CHECK(max_abs_diff(to_homogeneous(recovered), to_homogeneous(intra)) < 1e-9);
    }
}

TEST_CASE("quaternion matrix round trip preserves rotation") {
    std::mt19937_64 rng(77);
    for (int k = 0; k < 100; ++k) {
        Quat q = random_rotation(rng);
        Quat back = Quat::from_matrix(q.to_matrix());
        CHECK(rra(q, back) < 1e-9);
        CHECK(back.w >= 0.0);  // canonical sign
        CHECK(std::abs(back.norm2() - 1.0) < 1e-9);
    }
}

TEST_CASE("double cover: q and -q share a rotation matrix") {
    std::mt19937_64 rng(13);
    Quat q = random_rotation(rng);
    Quat n{-q.w, -q.x, -q.y, -q.z};
    Mat3 a = q.to_matrix(), b = n.to_matrix();
    for (int i = 0; i < 9; ++i) CHECK(a.m[i] == Catch::Approx(b.m[i]).margin(1e-15));
}

TEST_CASE("pose serialization round trip is exact") {
    std::mt19937_64 rng(21);
    Pose p = random_pose(rng);
    std::string s = pose_to_string(p);
    // Parse the 7 fields back.
    std::array<double, 7> vals{};
    size_t pos = 0;
    for (int i = 0; i < 7; ++i) {
        size_t next = s.find(' ', pos);
        std::string_view tok(s.data() + pos, (next == std::string::npos ? s.size() : next) - pos);
        vals[i] = parse_real(tok);
        pos = next + 1;
    }
    CHECK(vals[0] == p.rotation.w);
    CHECK(vals[1] == p.rotation.x);
    CHECK(vals[2] == p.rotation.y);
    CHECK(vals[3] == p.rotation.z);
    CHECK(vals[4] == p.translation.x);
    CHECK(vals[5] == p.translation.y);
    CHECK(vals[6] == p.translation.z);
}
