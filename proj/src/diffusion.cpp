#include "madp/diffusion.hpp"

#include <cmath>
#include <stdexcept>

namespace madp::diffusion {

namespace {

constexpr double kPi = 3.1415926535897932384626433832795;
constexpr double kTwoPi = 6.283185307179586476925286766559;

void check_schedule_match(const DiffusionTrajectory& traj, const NoiseSchedule& sched,
                          const char* what) {
    if (!(traj.schedule == sched))
        throw std::invalid_argument(std::string(what) +
                                    ": trajectory was sampled under a different schedule");
}

} // namespace

NoiseSchedule cosine_schedule(int H, double beta_min, double beta_max, double eta) {
    if (H < 1) throw std::invalid_argument("cosine_schedule: H must be >= 1");
    if (!(beta_min > 0.0) || !(beta_min < beta_max))
        throw std::invalid_argument("cosine_schedule: need 0 < beta_min < beta_max");
    if (!(eta > 0.0)) throw std::invalid_argument("cosine_schedule: eta must be positive");
    NoiseSchedule s;
    s.steps = H;
    s.delta = 1.0 / static_cast<double>(H);
    s.eta = eta;
    if (!(beta_max * s.delta < 1.0))
        throw std::invalid_argument(
            "cosine_schedule: beta_max*delta must stay below 1 (forward mean coefficient)");
    s.beta.resize(static_cast<std::size_t>(H));
    for (int h = 1; h <= H; ++h) {
        const double phase = kPi * (static_cast<double>(h) - 0.5) / static_cast<double>(H);
        s.beta[static_cast<std::size_t>(h - 1)] =
            beta_min + (beta_max - beta_min) * 0.5 * (1.0 - std::cos(phase));
    }
    return s;
}

ScorePolicy::ScorePolicy(int agent_id, std::size_t state_dim, std::size_t action_dim,
                         const std::vector<std::size_t>& hidden, std::size_t temb_dim,
                         NoiseSchedule schedule, const std::string& prefix, Rng& rng)
    : agent_id_(agent_id),
      state_dim_(state_dim),
      action_dim_(action_dim),
      temb_dim_(temb_dim),
      schedule_(std::move(schedule)),
      net_(action_dim + state_dim + temb_dim, hidden, action_dim, nd::Activation::gelu, prefix,
           rng) {}

namespace {

DenseArray tile_rows(const DenseArray& row, std::size_t rows) {
    DenseArray out({rows, row.size()});
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < row.size(); ++j) out[i * row.size() + j] = row[j];
    return out;
}

DenseArray concat_cols3(const DenseArray& a, const DenseArray& b, const DenseArray& c) {
    const std::size_t rows = a.rows();
    const std::size_t cols = a.cols() + b.cols() + c.cols();
    DenseArray out({rows, cols});
    for (std::size_t i = 0; i < rows; ++i) {
        std::size_t off = 0;
        for (std::size_t j = 0; j < a.cols(); ++j) out[i * cols + off++] = a.at(i, j);
        for (std::size_t j = 0; j < b.cols(); ++j) out[i * cols + off++] = b.at(i, j);
        for (std::size_t j = 0; j < c.cols(); ++j) out[i * cols + off++] = c.at(i, j);
    }
    return out;
}

} // namespace

DenseArray ScorePolicy::score(const DenseArray& a, const DenseArray& s, double t) const {
    if (a.rank() != 2 || a.cols() != action_dim_)
        throw std::invalid_argument("ScorePolicy::score: bad action shape " + a.shape_str());
    if (s.rank() != 2 || s.cols() != state_dim_ || s.rows() != a.rows())
        throw std::invalid_argument("ScorePolicy::score: bad state shape " + s.shape_str());
    const DenseArray temb = tile_rows(nd::fourier_time_embedding(t, temb_dim_), a.rows());
    return net_.forward(concat_cols3(a, s, temb));
}

Node ScorePolicy::score_node(Tape& tape, Node a, Node s_node, double t) const {
    const std::size_t rows = tape.value(a).rows();
    Node temb = tape.constant(tile_rows(nd::fourier_time_embedding(t, temb_dim_), rows));
    Node x = tape.concat_cols({a, s_node, temb});
    return net_.apply(tape, x);
}

void ScorePolicy::collect(std::vector<Parameter*>& params, std::vector<StateEntry>& state) {
    net_.collect(params, state);
}

void ScorePolicy::blend_from(const ScorePolicy& src, double rho) {
    if (net_.layers.size() != src.net_.layers.size())
        throw std::invalid_argument("ScorePolicy::blend_from: architecture mismatch");
    for (std::size_t l = 0; l < net_.layers.size(); ++l) {
        auto blend = [rho](DenseArray& dst, const DenseArray& from) {
            nd::require_same_shape(dst, from, "ScorePolicy::blend_from");
            for (std::size_t i = 0; i < dst.size(); ++i)
                dst[i] = rho * dst[i] + (1.0 - rho) * from[i];
        };
        blend(net_.layers[l].w.value, src.net_.layers[l].w.value);
        blend(net_.layers[l].b.value, src.net_.layers[l].b.value);
    }
}

DenseArray sample_prior(std::size_t batch, std::size_t action_dim, double eta, Rng& rng) {
    DenseArray a({batch, action_dim});
    rng.fill_normal(a, eta);
    return a;
}

DenseArray forward_step(const DenseArray& a, int h, const NoiseSchedule& sched, Rng& rng) {
    DenseArray eps(a.shape());
    rng.fill_normal(eps, std::sqrt(sched.step_var(h)));
    return forward_step_with_noise(a, h, sched, eps);
}

DenseArray forward_step_with_noise(const DenseArray& a, int h, const NoiseSchedule& sched,
                                   const DenseArray& eps) {
    if (h < 1 || h > sched.steps) throw std::invalid_argument("forward_step: h out of range");
    nd::require_same_shape(a, eps, "forward_step");
    const double c = sched.mean_coef(h);
    DenseArray out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = c * a[i] + eps[i];
    return out;
}

DenseArray reverse_step(const DenseArray& a, int h, const NoiseSchedule& sched,
                        const ScoreFn& score, const DenseArray& xi) {
    if (h < 1 || h > sched.steps) throw std::invalid_argument("reverse_step: h out of range");
    nd::require_same_shape(a, xi, "reverse_step");
    const double beta = sched.beta_at(h);
    const double t = sched.time_at(h);
    const DenseArray f = score(a, t);
    if (!f.all_finite())
        throw std::runtime_error("reverse_step: non-finite score output at grid step " +
                                 std::to_string(h));
    nd::require_same_shape(a, f, "reverse_step score output");
    const double two_eta2 = 2.0 * sched.eta * sched.eta;
    DenseArray out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i)
        out[i] = a[i] + (beta * a[i] + two_eta2 * beta * f[i]) * sched.delta + xi[i];
    return out;
}

DiffusionTrajectory sample_chain(const NoiseSchedule& sched, const DenseArray& states,
                                 std::size_t action_dim, const ScoreFn& score, Rng& rng) {
    if (states.rank() != 2)
        throw std::invalid_argument("sample_chain: states must be a [B,S] batch");
    const std::size_t batch = states.rows();
    DiffusionTrajectory traj;
    traj.states = states;
    traj.schedule = sched;
    traj.chain.reserve(static_cast<std::size_t>(sched.steps) + 1);
    traj.noises.reserve(static_cast<std::size_t>(sched.steps));
    traj.chain.push_back(sample_prior(batch, action_dim, sched.eta, rng));
    for (int h = sched.steps; h >= 1; --h) {
        DenseArray xi({batch, action_dim});
        rng.fill_normal(xi, std::sqrt(sched.step_var(h)));
        traj.chain.push_back(reverse_step(traj.chain.back(), h, sched, score, xi));
        traj.noises.push_back(std::move(xi));
    }
    return traj;
}

DiffusionTrajectory sample_chain(const NoiseSchedule& sched, const DenseArray& states,
                                 const ScorePolicy& policy, Rng& rng) {
    if (!(policy.schedule() == sched))
        throw std::invalid_argument("sample_chain: policy carries a different schedule");
    const DenseArray& s = states;
    return sample_chain(
        sched, states, policy.action_dim(),
        [&policy, &s](const DenseArray& a, double t) { return policy.score(a, s, t); }, rng);
}

std::vector<DenseArray> replay_chain(const DiffusionTrajectory& traj, const ScoreFn& score) {
    std::vector<DenseArray> chain;
    chain.reserve(traj.chain.size());
    chain.push_back(traj.prior_draw());
    for (int h = traj.schedule.steps; h >= 1; --h) {
        const DenseArray& xi = traj.noises[static_cast<std::size_t>(traj.schedule.steps - h)];
        chain.push_back(reverse_step(chain.back(), h, traj.schedule, score, xi));
    }
    return chain;
}

DenseArray gaussian_log_density(const DenseArray& x, const DenseArray& mean, double var) {
    if (!(var > 0.0)) throw std::invalid_argument("gaussian_log_density: var must be positive");
    nd::require_same_shape(x, mean, "gaussian_log_density");
    const std::size_t rows = x.rows(), cols = x.cols();
    DenseArray out({rows});
    const double log_norm = -0.5 * static_cast<double>(cols) * std::log(kTwoPi * var);
    for (std::size_t i = 0; i < rows; ++i) {
        double q = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            const double d = x[i * cols + j] - mean[i * cols + j];
            q += d * d;
        }
        out[i] = log_norm - 0.5 * q / var;
    }
    return out;
}

DenseArray elbo_entropy(const DiffusionTrajectory& traj, const NoiseSchedule& sched,
                        const ScoreFn& score) {
    check_schedule_match(traj, sched, "elbo_entropy");
    const std::size_t batch = traj.states.rows();
    const int H = sched.steps;
    DenseArray l({batch});

    // - log N(a_H; 0, eta^2 I)
    const DenseArray zero(traj.prior_draw().shape());
    const DenseArray prior_lp =
        gaussian_log_density(traj.prior_draw(), zero, sched.eta * sched.eta);
    for (std::size_t i = 0; i < batch; ++i) l[i] = -prior_lp[i];

    const double two_eta2 = 2.0 * sched.eta * sched.eta;
    for (int h = H; h >= 1; --h) {
        // chain index: a_h is chain[H-h], a_{h-1} is chain[H-h+1]
        const DenseArray& a_h = traj.chain[static_cast<std::size_t>(H - h)];
        const DenseArray& a_prev = traj.chain[static_cast<std::size_t>(H - h + 1)];
        const double var = sched.step_var(h);
        const double beta = sched.beta_at(h);

        // forward kernel across step h: N(a_h; (1-beta*delta) a_{h-1}, var)
        DenseArray fwd_mean(a_prev.shape());
        const double c = sched.mean_coef(h);
        for (std::size_t i = 0; i < fwd_mean.size(); ++i) fwd_mean[i] = c * a_prev[i];
        const DenseArray fwd_lp = gaussian_log_density(a_h, fwd_mean, var);

        // reverse kernel: N(a_{h-1}; a_h + (beta a_h + 2 eta^2 beta f)(delta), var)
        const DenseArray f = score(a_h, sched.time_at(h));
        DenseArray rev_mean(a_h.shape());
        for (std::size_t i = 0; i < rev_mean.size(); ++i)
            rev_mean[i] = a_h[i] + (beta * a_h[i] + two_eta2 * beta * f[i]) * sched.delta;
        const DenseArray rev_lp = gaussian_log_density(a_prev, rev_mean, var);

        for (std::size_t i = 0; i < batch; ++i) l[i] += fwd_lp[i] - rev_lp[i];
    }
    return l;
}

DenseArray elbo_entropy(const DiffusionTrajectory& traj, const ScorePolicy& policy) {
    const DenseArray& s = traj.states;
    return elbo_entropy(traj, policy.schedule(),
                        [&policy, &s](const DenseArray& a, double t) {
                            return policy.score(a, s, t);
                        });
}

ElboNodes elbo_entropy_node(Tape& tape, const ScorePolicy& policy,
                            const DiffusionTrajectory& traj) {
    check_schedule_match(traj, policy.schedule(), "elbo_entropy_node");
    const NoiseSchedule& sched = policy.schedule();
    const int H = sched.steps;
    const double eta2 = sched.eta * sched.eta;
    const double two_eta2 = 2.0 * eta2;

    Node s_node = tape.constant(traj.states);
    Node a = tape.constant(traj.prior_draw());
    Node zero = tape.constant(DenseArray(traj.prior_draw().shape()));
    Node prior_lp = tape.gaussian_log_density(a, zero, eta2);
    Node neg = tape.scale(prior_lp, -1.0);
    Node l = neg; // [B,1]

    for (int h = H; h >= 1; --h) {
        const double beta = sched.beta_at(h);
        const double var = sched.step_var(h);
        const DenseArray& xi = traj.noises[static_cast<std::size_t>(H - h)];

        Node f = policy.score_node(tape, a, s_node, sched.time_at(h));
        if (!tape.value(f).all_finite())
            throw std::runtime_error("elbo_entropy_node: non-finite score at grid step " +
                                     std::to_string(h));
        // rev_mean = a + (beta*a + 2 eta^2 beta f) * delta
        Node rev_mean = tape.add(tape.scale(a, 1.0 + beta * sched.delta),
                                 tape.scale(f, two_eta2 * beta * sched.delta));
        Node a_prev = tape.add(rev_mean, tape.constant(xi));

        // fwd: N(a_h; (1-beta*delta) a_{h-1}, var); rev: N(a_{h-1}; rev_mean, var)
        Node fwd_lp = tape.gaussian_log_density(a, tape.scale(a_prev, sched.mean_coef(h)), var);
        Node rev_lp = tape.gaussian_log_density(a_prev, rev_mean, var);
        l = tape.add(l, tape.sub(fwd_lp, rev_lp));
        a = a_prev;
    }
    return ElboNodes{l, a, prior_lp};
}

} // namespace madp::diffusion
