#include "nsqkd/squash.hpp"

#include <gtest/gtest.h>

using namespace nsqkd;

TEST(Squash, KrausCountAtCutoffTwo) {
    const auto map = build_squashing_map(2);
    EXPECT_EQ(map.kraus.size(), 4u);
}

TEST(Squash, KrausCountGrowsWithCutoff) {
    // one vacuum operator plus ceil(n/2) * (floor(n/2)+1) per photon number
    for (int c = 1; c <= 8; ++c) {
        size_t want = 1;
        for (int n = 1; n <= c; ++n) want += static_cast<size_t>((n + 1) / 2 * (n / 2 + 1));
        EXPECT_EQ(build_squashing_map(c).kraus.size(), want) << "cutoff " << c;
    }
}

TEST(Squash, RejectsZeroCutoff) { EXPECT_THROW(build_squashing_map(0), std::invalid_argument); }

TEST(Squash, CompletenessOnPhysicalSubspace) {
    for (int c : {2, 4, 6}) {
        const auto map = build_squashing_map(c);
        const Mat sum = squash_completeness(map);
        const Mat phys = physical_projector(map.space());
        EXPECT_LE((sum - phys).cwiseAbs().maxCoeff(), 1e-12) << "cutoff " << c;
    }
}

TEST(Squash, VacuumGoesToNoClick) {
    const auto map = build_squashing_map(3);
    const FockSpace s = map.space();
    Mat rho = Mat::Zero(s.dim(), s.dim());
    rho(0, 0) = 1;
    const auto out = apply_squash(map, DensityOperator(rho, s.layout()));
    EXPECT_NEAR(out.data(0, 0).real(), 1, 1e-15);
}

TEST(Squash, SinglePhotonInSignalMode) {
    const auto map = build_squashing_map(2);
    const FockSpace s = map.space();
    Mat rho = Mat::Zero(s.dim(), s.dim());
    rho(s.index(1, 0), s.index(1, 0)) = 1;
    const auto out = apply_squash(map, DensityOperator(rho, s.layout()));
    EXPECT_NEAR(out.data.trace().real(), 1, 1e-14);
    EXPECT_NEAR(out.data(0, 0).real(), 0, 1e-15);
}

TEST(Squash, TargetPovmIsComplete) {
    const auto t = target_povm();
    EXPECT_LE((t.n0 + t.n1 + t.n_bot - Mat::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Squash, LayoutMismatch) {
    const auto map = build_squashing_map(2);
    EXPECT_THROW(apply_squash(map, DensityOperator(Mat(Mat::Identity(4, 4) / 4.0), {2, 2})), std::invalid_argument);
}

TEST(Squash, VerifiedAtDefaultCutoff) {
    const auto rep = verify_squashing(build_squashing_map(6), 200, 1e-9);
    EXPECT_TRUE(rep.ok()) << rep.violated;
    EXPECT_LE(rep.stats_residual, 1e-10);
    EXPECT_LE(rep.exhaustive_residual, 1e-10);
    EXPECT_LE(rep.ns_residual, 1e-10);
    EXPECT_LE(rep.tp_residual, 1e-10);
}

TEST(Squash, VerifiedAcrossCutoffs) {
    for (int c = 1; c <= 5; ++c) {
        const auto rep = verify_squashing(build_squashing_map(c), 40, 1e-9, 100 + c);
        EXPECT_TRUE(rep.ok()) << "cutoff " << c << ": " << rep.violated;
    }
}

// A squash that also reads the reference mode parity leaks S-dependence into R'.
TEST(Squash, DetectsBrokenMap) {
    auto map = build_squashing_map(3);
    for (auto& b : map.kraus)
        if (b.photons == 2) b.op *= 1.1;
    const auto rep = verify_squashing(map, 20, 1e-9);
    EXPECT_FALSE(rep.ok());
    EXPECT_NE(rep.violated.find("trace-preservation"), std::string::npos);
}
