#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "madp/diffusion.hpp"
#include "madp/rng.hpp"

using namespace madp::diffusion;
using madp::nd::DenseArray;
using madp::nd::Parameter;
using madp::nd::Rng;
using madp::nd::StateEntry;
using madp::nd::Tape;

namespace {

constexpr double kPi = 3.14159265358979323846;

NoiseSchedule flat_schedule(int H, double beta, double eta = 1.0) {
    NoiseSchedule s;
    s.steps = H;
    s.beta.assign(static_cast<std::size_t>(H), beta);
    s.delta = 1.0 / H;
    s.eta = eta;
    return s;
}

ScoreFn stationary_score(double eta) {
    const double inv_eta2 = 1.0 / (eta * eta);
    return [inv_eta2](const DenseArray& a, double) {
        DenseArray f(a.shape());
        for (std::size_t i = 0; i < a.size(); ++i) f[i] = -a[i] * inv_eta2;
        return f;
    };
}

double log_normal_1d(double x, double mean, double var) {
    const double d = x - mean;
    return -0.5 * std::log(2.0 * kPi * var) - 0.5 * d * d / var;
}

} // namespace

TEST_CASE("cosine schedule with H=1 lands on the midpoint of the range") {
    NoiseSchedule s = cosine_schedule(1, 0.2, 0.6, 1.0);
    REQUIRE(s.beta.size() == 1);
    CHECK(s.beta[0] == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(s.delta == 1.0);
}

TEST_CASE("cosine schedule H=8 first entry matches the closed form") {
    const double bmin = 1e-3, bmax = 0.9999;
    NoiseSchedule s = cosine_schedule(8, bmin, bmax, 1.0);
    const double expect = bmin + (bmax - bmin) * 0.5 * (1.0 - std::cos(kPi / 16.0));
    CHECK(s.beta[0] == doctest::Approx(expect).epsilon(1e-12));
    CHECK(s.delta == doctest::Approx(0.125).epsilon(1e-15));
}

TEST_CASE("cosine schedule is strictly increasing and stays inside the range") {
    for (int H : {2, 5, 8, 64}) {
        NoiseSchedule s = cosine_schedule(H, 1e-3, 0.9999, 1.0);
        for (int h = 2; h <= H; ++h) CHECK(s.beta_at(h) > s.beta_at(h - 1));
        CHECK(s.beta.front() >= 1e-3);
        CHECK(s.beta.back() <= 0.9999);
        for (int h = 1; h <= H; ++h) CHECK(s.beta_at(h) * s.delta < 1.0);
    }
}

TEST_CASE("cosine schedule rejects bad parameters") {
    CHECK_THROWS(cosine_schedule(0, 1e-3, 0.9, 1.0));   // H < 1
    CHECK_THROWS(cosine_schedule(8, 0.0, 0.9, 1.0));    // beta_min not positive
    CHECK_THROWS(cosine_schedule(8, 0.5, 0.2, 1.0));    // unordered endpoints
    CHECK_THROWS(cosine_schedule(1, 0.5, 1.5, 1.0));    // beta_max*delta >= 1
    CHECK_THROWS(cosine_schedule(8, 1e-3, 0.9, 0.0));   // eta must be positive
}

TEST_CASE("prior with eta=0 is the zero vector") {
    Rng rng(9);
    DenseArray a = sample_prior(3, 4, 0.0, rng);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == 0.0);
}

TEST_CASE("prior moments match N(0, eta^2) over 1e5 draws") {
    const double eta = 0.7;
    const std::size_t n = 100000;
    Rng rng(10);
    DenseArray a = sample_prior(n, 1, eta, rng);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += a[i];
    mean /= n;
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (a[i] - mean) * (a[i] - mean);
    var /= n;
    CHECK(std::abs(mean) < 3.0 * eta / std::sqrt(static_cast<double>(n)));
    CHECK(std::abs(var - eta * eta) < 0.02 * eta * eta);
}

TEST_CASE("prior draws are deterministic for a fixed seed") {
    Rng r1(42), r2(42);
    DenseArray a = sample_prior(5, 3, 1.0, r1);
    DenseArray b = sample_prior(5, 3, 1.0, r2);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("forward step mean map: beta*delta=0.1 sends 1 to 0.9") {
    NoiseSchedule s = flat_schedule(1, 0.1); // delta = 1 -> beta*delta = 0.1
    DenseArray a({1, 1}, {1.0});
    DenseArray eps({1, 1}, {0.0});
    DenseArray out = forward_step_with_noise(a, 1, s, eps);
    CHECK(out[0] == doctest::Approx(0.9).epsilon(1e-15));

    DenseArray zero({1, 1}, {0.0});
    CHECK(forward_step_with_noise(zero, 1, s, eps)[0] == 0.0);
}

TEST_CASE("forward step conditional variance is 2*eta^2*beta*delta within 2%") {
    NoiseSchedule s = flat_schedule(4, 0.3, 0.8); // var = 2*0.64*0.3*0.25 = 0.096
    const std::size_t n = 100000;
    Rng rng(11);
    DenseArray a({n, 1});
    a.fill(0.5);
    DenseArray out = forward_step(a, 2, s, rng);
    const double expect_mean = (1.0 - 0.3 * 0.25) * 0.5;
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += out[i];
    mean /= n;
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (out[i] - mean) * (out[i] - mean);
    var /= n;
    const double expect_var = s.step_var(2);
    CHECK(std::abs(mean - expect_mean) < 4.0 * std::sqrt(expect_var / n));
    CHECK(std::abs(var - expect_var) < 0.02 * expect_var);
}

TEST_CASE("reverse step with zero score expands by 1+beta*delta") {
    NoiseSchedule s = flat_schedule(1, 0.1);
    ScoreFn zero_score = [](const DenseArray& a, double) { return DenseArray(a.shape()); };
    DenseArray a({1, 1}, {1.0});
    DenseArray xi({1, 1}, {0.0});
    DenseArray out = reverse_step(a, 1, s, zero_score, xi);
    CHECK(out[0] == doctest::Approx(1.1).epsilon(1e-15));
}

TEST_CASE("reverse step with the stationary score mirrors the forward mean map") {
    for (double eta : {1.0, 0.6}) {
        NoiseSchedule s = flat_schedule(2, 0.25, eta);
        DenseArray a({2, 2}, {1.0, -0.5, 0.3, 2.0});
        DenseArray xi({2, 2});
        DenseArray out = reverse_step(a, 1, s, stationary_score(eta), xi);
        const double c = 1.0 - 0.25 * s.delta; // beta*a - 2*beta*a = -beta*a
        for (std::size_t i = 0; i < a.size(); ++i)
            CHECK(out[i] == doctest::Approx(c * a[i]).epsilon(1e-14));
    }
}

TEST_CASE("reverse step is a deterministic function of the supplied noise") {
    NoiseSchedule s = flat_schedule(3, 0.2);
    Rng rng(12);
    DenseArray a({2, 3}), xi({2, 3});
    rng.fill_normal(a);
    rng.fill_normal(xi);
    DenseArray o1 = reverse_step(a, 2, s, stationary_score(1.0), xi);
    DenseArray o2 = reverse_step(a, 2, s, stationary_score(1.0), xi);
    for (std::size_t i = 0; i < o1.size(); ++i) CHECK(o1[i] == o2[i]);
}

TEST_CASE("reverse step aborts on a non-finite score") {
    NoiseSchedule s = flat_schedule(1, 0.1);
    ScoreFn bad = [](const DenseArray& a, double) {
        DenseArray f(a.shape());
        f[0] = std::nan("");
        return f;
    };
    DenseArray a({1, 1}, {1.0});
    DenseArray xi({1, 1}, {0.0});
    CHECK_THROWS(reverse_step(a, 1, s, bad, xi));
}

TEST_CASE("a sampled chain stores H+1 iterates and H noises") {
    NoiseSchedule s = cosine_schedule(8, 1e-3, 0.9999, 1.0);
    Rng rng(13);
    DenseArray states({2, 3});
    rng.fill_normal(states);
    DiffusionTrajectory traj = sample_chain(s, states, 2, stationary_score(1.0), rng);
    CHECK(traj.chain.size() == 9);
    CHECK(traj.noises.size() == 8);
    CHECK(traj.action().rows() == 2);
    CHECK(traj.action().cols() == 2);
}

TEST_CASE("stationary-score chains keep the prior standard deviation") {
    const double eta = 1.0;
    NoiseSchedule s = cosine_schedule(64, 1e-3, 0.9999, eta);
    Rng rng(14);
    const std::size_t n = 10000;
    DenseArray states({n, 1});
    DiffusionTrajectory traj = sample_chain(s, states, 1, stationary_score(eta), rng);
    const DenseArray& a0 = traj.action();
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += a0[i];
    mean /= n;
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (a0[i] - mean) * (a0[i] - mean);
    var /= n;
    CHECK(std::abs(std::sqrt(var) - eta) < 0.05 * eta);
}

TEST_CASE("replaying stored noises reproduces the chain bitwise") {
    NoiseSchedule s = cosine_schedule(8, 1e-3, 0.9999, 1.0);
    Rng rng(15);
    DenseArray states({3, 2});
    rng.fill_normal(states);
    ScoreFn f = [](const DenseArray& a, double t) {
        DenseArray out(a.shape());
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = -0.8 * a[i] + 0.1 * t;
        return out;
    };
    DiffusionTrajectory traj = sample_chain(s, states, 2, f, rng);
    std::vector<DenseArray> replay = replay_chain(traj, f);
    REQUIRE(replay.size() == traj.chain.size());
    for (std::size_t k = 0; k < replay.size(); ++k)
        for (std::size_t i = 0; i < replay[k].size(); ++i)
            CHECK(replay[k][i] == traj.chain[k][i]);
}

TEST_CASE("gaussian log density pins: standard normal at the mean and one sigma out") {
    DenseArray x({1, 1}, {0.0});
    DenseArray mean({1, 1}, {0.0});
    DenseArray lp = gaussian_log_density(x, mean, 1.0);
    CHECK(lp[0] == doctest::Approx(-0.9189385).epsilon(1e-6));
    CHECK(lp[0] == doctest::Approx(-0.5 * std::log(2.0 * kPi)).epsilon(1e-15));

    DenseArray x1({1, 1}, {1.0});
    DenseArray lp1 = gaussian_log_density(x1, mean, 1.0);
    CHECK(lp1[0] == doctest::Approx(-0.9189385 - 0.5).epsilon(1e-6));
}

TEST_CASE("batched gaussian log density sums per-coordinate 1-d terms") {
    Rng rng(16);
    DenseArray x({4, 3}), mean({4, 3});
    rng.fill_normal(x);
    rng.fill_normal(mean);
    const double var = 0.37;
    DenseArray lp = gaussian_log_density(x, mean, var);
    for (std::size_t r = 0; r < 4; ++r) {
        double expect = 0.0;
        for (std::size_t c = 0; c < 3; ++c)
            expect += log_normal_1d(x[r * 3 + c], mean[r * 3 + c], var);
        CHECK(lp[r] == doctest::Approx(expect).epsilon(1e-12));
    }
    CHECK_THROWS(gaussian_log_density(x, mean, 0.0));
    CHECK_THROWS(gaussian_log_density(x, mean, -1.0));
}

TEST_CASE("H=1 entropy surrogate matches the hand-expanded three-term form") {
    NoiseSchedule s = flat_schedule(1, 0.3, 0.9); // delta=1
    Rng rng(17);
    DenseArray states({2, 2});
    rng.fill_normal(states);
    ScoreFn f = [](const DenseArray& a, double t) {
        DenseArray out(a.shape());
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = -0.5 * a[i] + 0.2 * t;
        return out;
    };
    DiffusionTrajectory traj = sample_chain(s, states, 2, f, rng);
    DenseArray l = elbo_entropy(traj, s, f);

    const DenseArray& a1 = traj.chain[0]; // a_H = a_1
    const DenseArray& a0 = traj.chain[1];
    const double var = 2.0 * 0.9 * 0.9 * 0.3 * 1.0;
    const double beta = 0.3;
    DenseArray fscore = f(a1, 1.0);
    for (std::size_t r = 0; r < 2; ++r) {
        double fwd = 0.0, rev = 0.0, prior = 0.0;
        for (std::size_t c = 0; c < 2; ++c) {
            const double a1v = a1[r * 2 + c], a0v = a0[r * 2 + c];
            fwd += log_normal_1d(a1v, (1.0 - beta) * a0v, var);
            const double rev_mean =
                a1v + (beta * a1v + 2.0 * 0.9 * 0.9 * beta * fscore[r * 2 + c]) * 1.0;
            rev += log_normal_1d(a0v, rev_mean, var);
            prior += log_normal_1d(a1v, 0.0, 0.9 * 0.9);
        }
        CHECK(l[r] == doctest::Approx(fwd - prior - rev).epsilon(1e-12));
    }
}

TEST_CASE("entropy surrogate rejects a mismatched schedule") {
    NoiseSchedule s = cosine_schedule(4, 1e-3, 0.9, 1.0);
    NoiseSchedule other = cosine_schedule(4, 1e-3, 0.8, 1.0);
    Rng rng(18);
    DenseArray states({1, 1});
    DiffusionTrajectory traj = sample_chain(s, states, 1, stationary_score(1.0), rng);
    CHECK_THROWS(elbo_entropy(traj, other, stationary_score(1.0)));
}

TEST_CASE("stationary-score surrogate lower-bounds the analytic gaussian entropy") {
    // d=2, eta=1: differential entropy = log(2*pi*e) ~ 2.83788
    const double analytic = std::log(2.0 * kPi * std::exp(1.0));
    NoiseSchedule s = cosine_schedule(64, 1e-3, 0.9999, 1.0);
    Rng rng(19);
    const std::size_t n = 10000;
    DenseArray states({n, 1});
    DiffusionTrajectory traj = sample_chain(s, states, 2, stationary_score(1.0), rng);
    DenseArray l = elbo_entropy(traj, s, stationary_score(1.0));
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += l[i];
    mean /= n;
    double sd = 0.0;
    for (std::size_t i = 0; i < n; ++i) sd += (l[i] - mean) * (l[i] - mean);
    sd = std::sqrt(sd / n);
    const double stderr_mean = sd / std::sqrt(static_cast<double>(n));
    CHECK(mean <= analytic + 3.0 * stderr_mean); // lower-bound property
    CHECK(mean > 0.9 * analytic);                // within 10% below for H=64
}

TEST_CASE("independent coordinates contribute additively to the surrogate") {
    NoiseSchedule s = cosine_schedule(8, 1e-3, 0.9999, 1.0);
    Rng rng(20);
    DenseArray states({3, 1});
    rng.fill_normal(states);
    ScoreFn f = stationary_score(1.0); // acts coordinatewise
    DiffusionTrajectory joint = sample_chain(s, states, 2, f, rng);

    auto column = [](const DenseArray& m, std::size_t c) {
        DenseArray out({m.rows(), 1});
        for (std::size_t r = 0; r < m.rows(); ++r) out[r] = m[r * m.cols() + c];
        return out;
    };
    DenseArray l_joint = elbo_entropy(joint, s, f);
    DenseArray sum({3});
    for (std::size_t c = 0; c < 2; ++c) {
        DiffusionTrajectory part;
        part.states = joint.states;
        part.schedule = s;
        for (const DenseArray& m : joint.chain) part.chain.push_back(column(m, c));
        for (const DenseArray& m : joint.noises) part.noises.push_back(column(m, c));
        DenseArray l = elbo_entropy(part, s, f);
        for (std::size_t r = 0; r < 3; ++r) sum[r] += l[r];
    }
    for (std::size_t r = 0; r < 3; ++r)
        CHECK(l_joint[r] == doctest::Approx(sum[r]).epsilon(1e-12));
}

TEST_CASE("score network: tape-recorded output equals the gradient-free pass") {
    NoiseSchedule s = cosine_schedule(8, 1e-3, 0.9999, 1.0);
    Rng rng(21);
    ScorePolicy pol(0, 3, 2, {16, 16}, 8, s, "pol", rng);
    DenseArray a({4, 2}), st({4, 3});
    rng.fill_normal(a);
    rng.fill_normal(st);
    DenseArray direct = pol.score(a, st, 0.5);
    Tape t;
    madp::nd::Node n = pol.score_node(t, t.constant(a), t.constant(st), 0.5);
    const DenseArray& taped = t.value(n);
    REQUIRE(taped.size() == direct.size());
    for (std::size_t i = 0; i < direct.size(); ++i)
        CHECK(taped[i] == doctest::Approx(direct[i]).epsilon(1e-14));
}

TEST_CASE("policy-sampled chains agree between the callback and policy overloads") {
    NoiseSchedule s = cosine_schedule(4, 1e-3, 0.9, 1.0);
    Rng r1(22), r2(22);
    ScorePolicy pol(0, 2, 1, {8}, 4, s, "pol", r1);
    Rng c1(5), c2(5);
    DenseArray states({2, 2}, {0.1, -0.2, 0.3, 0.4});
    DiffusionTrajectory t1 = sample_chain(s, states, pol, c1);
    DiffusionTrajectory t2 = sample_chain(
        s, states, 1,
        [&](const DenseArray& a, double t) { return pol.score(a, states, t); }, c2);
    REQUIRE(t1.chain.size() == t2.chain.size());
    for (std::size_t k = 0; k < t1.chain.size(); ++k)
        for (std::size_t i = 0; i < t1.chain[k].size(); ++i)
            CHECK(t1.chain[k][i] == t2.chain[k][i]);
}

TEST_CASE("blend_from with rho=0 copies the source parameters bitwise") {
    NoiseSchedule s = cosine_schedule(4, 1e-3, 0.9, 1.0);
    Rng r1(23), r2(24);
    ScorePolicy a(0, 2, 1, {8}, 4, s, "a", r1);
    ScorePolicy b(0, 2, 1, {8}, 4, s, "b", r2);
    b.blend_from(a, 0.0);
    std::vector<Parameter*> pa, pb;
    std::vector<StateEntry> sa, sb;
    a.collect(pa, sa);
    b.collect(pb, sb);
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i)
        for (std::size_t j = 0; j < pa[i]->value.size(); ++j)
            CHECK(pa[i]->value[j] == pb[i]->value[j]);
}

TEST_CASE("taped entropy surrogate matches the gradient-free value and action") {
    NoiseSchedule s = cosine_schedule(4, 1e-3, 0.9, 1.0);
    Rng rng(25);
    ScorePolicy pol(0, 2, 2, {12}, 4, s, "pol", rng);
    DenseArray states({3, 2});
    rng.fill_normal(states);
    Rng chain_rng(7);
    DiffusionTrajectory traj = sample_chain(s, states, pol, chain_rng);
    DenseArray l = elbo_entropy(traj, pol);

    Tape t;
    ElboNodes nodes = elbo_entropy_node(t, pol, traj);
    const DenseArray& taped = t.value(nodes.elbo);
    REQUIRE(taped.rows() == 3);
    for (std::size_t r = 0; r < 3; ++r)
        CHECK(taped[r] == doctest::Approx(l[r]).epsilon(1e-12));
    const DenseArray& act = t.value(nodes.action);
    for (std::size_t i = 0; i < act.size(); ++i)
        CHECK(act[i] == doctest::Approx(traj.action()[i]).epsilon(1e-14));
}

TEST_CASE("surrogate gradients match finite differences on a 1-d, H=2 policy") {
    NoiseSchedule s = cosine_schedule(2, 0.05, 0.4, 1.0);
    Rng rng(26);
    ScorePolicy pol(0, 1, 1, {4}, 2, s, "pol", rng);
    DenseArray states({2, 1}, {0.3, -0.6});
    Rng chain_rng(8);
    DiffusionTrajectory traj = sample_chain(s, states, pol, chain_rng);

    std::vector<Parameter*> params;
    std::vector<StateEntry> state;
    pol.collect(params, state);

    auto loss_value = [&]() {
        Tape t;
        ElboNodes nodes = elbo_entropy_node(t, pol, traj);
        return t.value(t.sum_all(nodes.elbo))[0];
    };
    {
        Tape t;
        ElboNodes nodes = elbo_entropy_node(t, pol, traj);
        t.backward(t.sum_all(nodes.elbo));
    }
    const double h = 1e-5;
    for (Parameter* p : params) {
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double keep = p->value[i];
            p->value[i] = keep + h;
            const double up = loss_value();
            p->value[i] = keep - h;
            const double dn = loss_value();
            p->value[i] = keep;
            const double fd = (up - dn) / (2 * h);
            const double an = p->grad[i];
            const double denom = std::max({std::abs(fd), std::abs(an), 1e-7});
            CHECK(std::abs(fd - an) / denom < 1e-4);
        }
        p->grad.fill(0.0);
    }
}
