#include "nsqkd/causal.hpp"

#include <gtest/gtest.h>

using namespace nsqkd;

TEST(Choi, IdentityIsMaximallyEntangled) {
    const auto c = choi_of_channel(identity_channel({2}));
    Vec phi = Vec::Zero(4);
    phi(0) = phi(3) = 1 / std::sqrt(2.0);
    EXPECT_LE((c.state.data - phi * phi.adjoint()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Choi, UnitTraceAndPositive) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto ch = random_channel({2, 2}, {2, 2}, 3, seed);
        EXPECT_LE(ch.completeness_residual(), 1e-12);
        const auto c = choi_of_channel(ch);
        EXPECT_NEAR(c.state.trace(), 1, 1e-12);
        EXPECT_GE(min_eigenvalue(c.state.data), -1e-12);
    }
}

TEST(Choi, RoundTrip) {
    Rng rng(31);
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto ch = random_channel({2, 2}, {2, 2}, 2, seed);
        const auto c = choi_of_channel(ch);
        const auto back = channel_from_choi(c);
        EXPECT_LE(back.completeness_residual(), 1e-10);
        const auto apply = channel_of_choi(c);
        for (int i = 0; i < 5; ++i) {
            const Mat rho = random_density(4, rng);
            EXPECT_LE((apply(rho) - ch.apply(rho)).cwiseAbs().maxCoeff(), 1e-12);
            EXPECT_LE((back.apply(rho) - ch.apply(rho)).cwiseAbs().maxCoeff(), 1e-10);
        }
    }
}

TEST(Choi, WrongKrausShape) {
    QuantumChannel ch{{Mat::Identity(3, 2)}, {2}, {2}};
    EXPECT_THROW(choi_of_channel(ch), std::invalid_argument);
}

TEST(RandomChannel, RejectsTooSmallEnvironment) {
    EXPECT_THROW(random_channel({4}, {2}, 1, 1), std::invalid_argument);
}

TEST(NonSignalling, PlantedChannelPassesChoiTest) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto c = choi_of_channel(planted_ns_channel(seed));
        const auto r = check_ns_choi(c, 0, 1, 1e-9);
        EXPECT_TRUE(r.pass) << "seed " << seed << " residual " << r.residual;
    }
}

TEST(NonSignalling, PlantedChannelPassesOperationalTest) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto r = check_ns_operational(planted_ns_channel(seed), 0, 1, 50, 1e-9, seed);
        EXPECT_TRUE(r.pass) << "seed " << seed << " deviation " << r.max_deviation;
    }
}

TEST(NonSignalling, PlantedChannelMaySignalTheOtherWay) {
    int signalling = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed)
        signalling += !check_ns_choi(choi_of_channel(planted_ns_channel(seed)), 1, 0, 1e-6).pass;
    EXPECT_GT(signalling, 0);
}

TEST(NonSignalling, SwapSignals) {
    const auto ch = swap_channel();
    const auto r = check_ns_choi(choi_of_channel(ch), 0, 1, 1e-9);
    EXPECT_FALSE(r.pass);
    EXPECT_NEAR(r.residual, 1.5, 1e-12);
    EXPECT_FALSE(check_ns_operational(ch, 0, 1, 20, 1e-6).pass);
}

TEST(NonSignalling, IdentityDoesNotSignalAcross) {
    const auto c = choi_of_channel(identity_channel({2, 2}));
    EXPECT_TRUE(check_ns_choi(c, 0, 1, 1e-12).pass);
    EXPECT_TRUE(check_ns_choi(c, 1, 0, 1e-12).pass);
    EXPECT_FALSE(check_ns_choi(c, 0, 0, 1e-6).pass);
}

TEST(NonSignalling, TestsAgreeOnRandomChannels) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto ch = random_channel({2, 2}, {2, 2}, 2, 1000 + seed);
        const bool choi = check_ns_choi(choi_of_channel(ch), 0, 1, 1e-6).pass;
        const bool op = check_ns_operational(ch, 0, 1, 30, 1e-6, seed).pass;
        EXPECT_EQ(choi, op) << "seed " << seed;
        EXPECT_FALSE(choi);
    }
}

TEST(NonSignalling, BadLabels) {
    const auto c = choi_of_channel(identity_channel({2, 2}));
    EXPECT_THROW(check_ns_choi(c, 2, 0, 1e-9), std::out_of_range);
    EXPECT_THROW(check_ns_operational(identity_channel({2, 2}), 0, 5, 1, 1e-9), std::out_of_range);
}
