#include "nsqkd/optics.hpp"
#include "nsqkd/random.hpp"

#include <gtest/gtest.h>

using namespace nsqkd;

namespace {

double sum(const HonestStatistics& p) { return p.p_corr + p.p_err + p.p_bot; }

// Photon-number expectation of a two-mode pure state.
double total_photons(const Vec& v, const FockSpace& s) {
    double n = 0;
    for (int a = 0; a <= s.cutoff; ++a)
        for (int b = 0; b <= s.cutoff; ++b) n += (a + b) * std::norm(v(s.index(a, b)));
    return n;
}

}  // namespace

TEST(Coherent, VacuumHasNoTail) {
    const auto c = coherent_state(0.0);
    EXPECT_NEAR(std::abs(c.state.amplitudes(0)), 1, 1e-16);
    EXPECT_EQ(c.tail_mass, 0);
    EXPECT_FALSE(c.over_budget);
}

// The Poisson tail beyond six photons at mean 0.2025 is 2.32e-9: the truncation
// budget of 1e-8 holds, a 1e-9 budget does not.
TEST(Coherent, TailMassAtDefaultCutoff) {
    const auto c = coherent_state(0.45, {6, 1});
    EXPECT_NEAR(c.tail_mass, 2.32115e-9, 1e-13);
    EXPECT_FALSE(c.over_budget);
    EXPECT_TRUE(coherent_state(0.45, {6, 1}, 1e-9).over_budget);
    EXPECT_LT(coherent_state(0.45, {7, 1}).tail_mass, 1e-9);
}

TEST(Coherent, VacuumOverlap) {
    for (double a : {0.1, 0.45, 0.7}) {
        const auto c = coherent_state(a, {12, 1});
        const double untruncated = std::norm(c.state.amplitudes(0)) * (1 - c.tail_mass);
        EXPECT_NEAR(untruncated, std::exp(-a * a), 1e-12);
    }
}

TEST(BeamSplitter, VacuumStaysVacuum) {
    const FockSpace s{4, 2};
    Vec v = Vec::Zero(s.dim());
    v(0) = 1;
    const auto out = beam_splitter(PureState{v, s.layout()}, s);
    EXPECT_NEAR(std::abs(out.amplitudes(0)), 1, 1e-15);
}

TEST(BeamSplitter, SinglePhotonSplits) {
    const FockSpace s{3, 2};
    Vec v = Vec::Zero(s.dim());
    v(s.index(1, 0)) = 1;
    const auto out = beam_splitter(PureState{v, s.layout()}, s);
    EXPECT_NEAR(out.amplitudes(s.index(1, 0)).real(), 1 / std::sqrt(2.0), 1e-15);
    EXPECT_NEAR(out.amplitudes(s.index(0, 1)).real(), 1 / std::sqrt(2.0), 1e-15);
    EXPECT_NEAR(out.amplitudes.norm(), 1, 1e-15);
}

TEST(BeamSplitter, CoherentPairs) {
    const FockSpace one{14, 1}, two{14, 2};
    const cplx a(0.45, 0.1), b(-0.2, 0.3);
    const Vec in = kron(coherent_state(a, one).state.amplitudes, coherent_state(b, one).state.amplitudes);
    const auto out = beam_splitter(PureState{in, two.layout()}, two);
    const Vec want = kron(coherent_state((a + b) / std::sqrt(2.0), one).state.amplitudes,
                          coherent_state((a - b) / std::sqrt(2.0), one).state.amplitudes);
    EXPECT_LE((out.amplitudes - want).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(BeamSplitter, ConservesPhotonNumber) {
    const FockSpace s{5, 2};
    Rng rng(21);
    const Mat phys = physical_projector(s);
    for (int i = 0; i < 20; ++i) {
        Vec v = phys * random_pure(s.dim(), rng);
        v.normalize();
        const auto out = beam_splitter(PureState{v, s.layout()}, s);
        EXPECT_NEAR(total_photons(out.amplitudes, s), total_photons(v, s), 1e-10);
    }
}

TEST(BeamSplitter, SelfInverseOnPhysicalBlocks) {
    const FockSpace s{6, 2};
    const Mat b = beam_splitter_matrix(s);
    const Mat p = physical_projector(s);
    EXPECT_LE((b * b * p - p).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((b.adjoint() * b * p - p).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(BeamSplitter, CutoffMismatch) {
    const FockSpace s{3, 2};
    const PureState wrong{Vec::Zero(25), {5, 5}};
    EXPECT_THROW(beam_splitter(wrong, s), std::invalid_argument);
}

TEST(Detector, Completeness) {
    const FockSpace s{6, 2};
    const auto p = detector_povm(s);
    const Mat id = Mat::Identity(s.dim(), s.dim());
    EXPECT_LE((p.m0 + p.m1 + p.m_bot - id).cwiseAbs().maxCoeff(), 1e-13);
    EXPECT_LE((p.raw0 + p.raw1 + p.raw_dc + p.raw_bot - id).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Detector, CoherentInFirstPort) {
    const FockSpace one{12, 1}, two{12, 2};
    const double a = 0.45;
    const Vec in = kron(coherent_state(std::sqrt(2.0) * a, one).state.amplitudes,
                        coherent_state(0.0, one).state.amplitudes);
    const auto p = detector_povm(two);
    const Mat rho = in * in.adjoint();
    EXPECT_NEAR((p.m0 * rho).trace().real(), 1 - std::exp(-2 * a * a), 1e-10);
    EXPECT_NEAR((p.m1 * rho).trace().real(), 0, 1e-15);
    EXPECT_NEAR((p.m_bot * rho).trace().real(), std::exp(-2 * a * a), 1e-10);
}

TEST(Detector, DoubleClickSplitsEvenly) {
    const FockSpace s{3, 2};
    const auto p = detector_povm(s);
    const int i = s.index(1, 1);
    EXPECT_DOUBLE_EQ(p.m0(i, i).real(), 0.5);
    EXPECT_DOUBLE_EQ(p.m1(i, i).real(), 0.5);
}

TEST(Loss, Transmittance) {
    EXPECT_EQ(apply_loss(0.45, 1.0), cplx(0.45));
    EXPECT_EQ(apply_loss(0.45, 0.0), cplx(0.0));
    EXPECT_NEAR(apply_loss(0.45, 0.1).real(), 0.142302, 1e-6);
    EXPECT_THROW(apply_loss(0.45, 1.2), std::domain_error);
    EXPECT_THROW(apply_loss(0.45, -0.1), std::domain_error);
}

TEST(HonestStatistics, RelativisticLossless) {
    const auto p = honest_statistics_relativistic(0.45, 1.0, 0.0);
    EXPECT_NEAR(p.p_bot, 0.666976, 1e-6);
    EXPECT_NEAR(p.p_corr, 0.333024, 1e-6);
    EXPECT_EQ(p.p_err, 0);
}

TEST(HonestStatistics, RelativisticLossy) {
    const auto p = honest_statistics_relativistic(0.45, 0.1, 0.05);
    EXPECT_NEAR(p.p_bot, 0.960310, 1e-6);
    EXPECT_NEAR(p.p_err, 0.0019845, 1e-7);
    EXPECT_NEAR(p.p_corr, 0.0377063, 1e-7);
    EXPECT_EQ(honest_statistics_relativistic(0.45, 0.0, 0.1).p_bot, 1.0);
}

TEST(HonestStatistics, RejectsDomainViolations) {
    EXPECT_THROW(honest_statistics_relativistic(0.45, 1.5, 0), std::domain_error);
    EXPECT_THROW(honest_statistics_relativistic(0.45, 1, -0.1), std::domain_error);
    EXPECT_THROW(honest_statistics_dps(0.45, 1, 1.1), std::domain_error);
}

TEST(HonestStatistics, Dps) {
    EXPECT_NEAR(honest_statistics_dps(0.45, 1.0, 0).p_bot, 0.816686, 1e-6);
    EXPECT_EQ(honest_statistics_dps(0.45, 0.0, 0).p_bot, 1.0);
    EXPECT_EQ(honest_statistics_dps(0.45, 0.3, 0).p_err, 0.0);
}

TEST(HonestStatistics, DpsMatchesFockSimulation) {
    for (double eta : {1.0, 0.3, 0.05})
        for (double a : {0.3, 0.45, 0.6})
            EXPECT_NEAR(dps_no_click_fock(a, eta), honest_statistics_dps(a, eta, 0).p_bot, 1e-6);
}

TEST(HonestStatistics, RelativisticMatchesFockPipeline) {
    const FockSpace one{8, 1}, two{8, 2};
    const auto povm = detector_povm(two);
    for (double eta : {1.0, 0.1}) {
        const double a = 0.45;
        const cplx s = apply_loss(a, eta);
        const Vec in = kron(coherent_state(s, one).state.amplitudes, coherent_state(s, one).state.amplitudes);
        const auto out = beam_splitter(PureState{in, two.layout()}, two);
        const Mat rho = out.amplitudes * out.amplitudes.adjoint();
        const auto p = honest_statistics_relativistic(a, eta, 0);
        EXPECT_NEAR((povm.m_bot * rho).trace().real(), p.p_bot, 1e-6);
        EXPECT_NEAR((povm.m0 * rho).trace().real(), p.p_corr, 1e-6);
    }
}

TEST(HonestStatistics, SumToOne) {
    Rng rng(22);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < 100; ++i) {
        const double a = u(rng), eta = u(rng), q = u(rng);
        EXPECT_NEAR(sum(honest_statistics_relativistic(a, eta, q)), 1, 1e-12);
        EXPECT_NEAR(sum(honest_statistics_dps(a, eta, q)), 1, 1e-12);
    }
}
