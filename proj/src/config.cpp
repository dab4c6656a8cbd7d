#include "madp/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace madp::train {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(int line, const std::string& msg) {
    throw ConfigError("config line " + std::to_string(line) + ": " + msg);
}

double parse_num(const std::string& v, int line) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) fail(line, "trailing characters in number '" + v + "'");
        return x;
    } catch (const ConfigError&) {
        throw;
    } catch (...) {
        fail(line, "cannot parse number '" + v + "'");
    }
}

long parse_long(const std::string& v, int line) {
    const double x = parse_num(v, line);
    const long l = static_cast<long>(x);
    if (static_cast<double>(l) != x) fail(line, "expected an integer, got '" + v + "'");
    return l;
}

bool parse_bool(const std::string& v, int line) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    fail(line, "expected true/false, got '" + v + "'");
}

std::vector<std::size_t> parse_widths(const std::string& v, int line) {
    std::vector<std::size_t> out;
    std::stringstream ss(v);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        const long w = parse_long(trim(tok), line);
        if (w < 1) fail(line, "layer width must be positive");
        out.push_back(static_cast<std::size_t>(w));
    }
    if (out.empty()) fail(line, "expected a comma-separated width list");
    return out;
}

} // namespace

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    TrainerConfig& tr = cfg.trainer;

    using Setter = std::function<void(const std::string&, int)>;
    const std::map<std::string, Setter> keys = {
        {"seed",
         [&](const std::string& v, int ln) {
             const long s = parse_long(v, ln);
             if (s < 0) fail(ln, "seed must be non-negative");
             cfg.seed = static_cast<std::uint64_t>(s);
             cfg.seed_set = true;
         }},
        {"episodes",
         [&](const std::string& v, int ln) {
             cfg.episodes = parse_long(v, ln);
             if (cfg.episodes < 0) fail(ln, "episodes must be non-negative");
         }},
        {"out", [&](const std::string& v, int) { cfg.out_dir = v; }},
        {"parallel_kernels",
         [&](const std::string& v, int ln) { cfg.parallel_kernels = parse_bool(v, ln); }},

        {"env.name", [&](const std::string& v, int) { cfg.env_name = v; }},
        {"env.n_agents",
         [&](const std::string& v, int ln) {
             cfg.n_agents = static_cast<int>(parse_long(v, ln));
             if (cfg.n_agents < 1) fail(ln, "env.n_agents must be >= 1");
         }},
        {"env.episode_length",
         [&](const std::string& v, int ln) {
             cfg.episode_length = static_cast<int>(parse_long(v, ln));
             if (cfg.episode_length < 1) fail(ln, "env.episode_length must be >= 1");
         }},
        {"env.coverage_dim_i",
         [&](const std::string& v, int ln) {
             cfg.coverage_dim_i = static_cast<std::size_t>(parse_long(v, ln));
         }},
        {"env.coverage_dim_j",
         [&](const std::string& v, int ln) {
             cfg.coverage_dim_j = static_cast<std::size_t>(parse_long(v, ln));
         }},
        {"env.coverage_lo_i", [&](const std::string& v, int ln) { cfg.coverage_lo_i = parse_num(v, ln); }},
        {"env.coverage_hi_i", [&](const std::string& v, int ln) { cfg.coverage_hi_i = parse_num(v, ln); }},
        {"env.coverage_lo_j", [&](const std::string& v, int ln) { cfg.coverage_lo_j = parse_num(v, ln); }},
        {"env.coverage_hi_j", [&](const std::string& v, int ln) { cfg.coverage_hi_j = parse_num(v, ln); }},
        {"env.coverage_cell",
         [&](const std::string& v, int ln) {
             cfg.coverage_cell = parse_num(v, ln);
             if (!(cfg.coverage_cell > 0.0)) fail(ln, "env.coverage_cell must be positive");
         }},

        {"eval.interval",
         [&](const std::string& v, int ln) {
             cfg.eval_interval = parse_long(v, ln);
             if (cfg.eval_interval < 1) fail(ln, "eval.interval must be >= 1");
         }},
        {"eval.episodes",
         [&](const std::string& v, int ln) {
             cfg.eval_episodes = static_cast<int>(parse_long(v, ln));
             if (cfg.eval_episodes < 1) fail(ln, "eval.episodes must be >= 1");
         }},

        {"trainer.warmup_steps",
         [&](const std::string& v, int ln) {
             tr.warmup_steps = parse_long(v, ln);
             if (tr.warmup_steps < 0) fail(ln, "trainer.warmup_steps must be non-negative");
         }},
        {"trainer.learning_starts",
         [&](const std::string& v, int ln) {
             tr.learning_starts = parse_long(v, ln);
             if (tr.learning_starts < 0) fail(ln, "trainer.learning_starts must be non-negative");
         }},
        {"trainer.rho",
         [&](const std::string& v, int ln) {
             tr.rho = parse_num(v, ln);
             if (tr.rho < 0.0 || tr.rho > 1.0) fail(ln, "trainer.rho must be in [0, 1]");
         }},
        {"trainer.gamma",
         [&](const std::string& v, int ln) {
             tr.gamma = parse_num(v, ln);
             if (tr.gamma < 0.0 || tr.gamma >= 1.0) fail(ln, "trainer.gamma must be in [0, 1)");
         }},
        {"trainer.policy_delay",
         [&](const std::string& v, int ln) {
             tr.policy_delay = static_cast<int>(parse_long(v, ln));
             if (tr.policy_delay < 1) fail(ln, "trainer.policy_delay must be >= 1");
         }},
        {"trainer.batch_size",
         [&](const std::string& v, int ln) {
             const long b = parse_long(v, ln);
             if (b < 2) fail(ln, "trainer.batch_size must be >= 2 (batch normalization)");
             tr.batch_size = static_cast<std::size_t>(b);
         }},
        {"trainer.buffer_capacity",
         [&](const std::string& v, int ln) {
             const long c = parse_long(v, ln);
             if (c < 1) fail(ln, "trainer.buffer_capacity must be positive");
             tr.buffer_capacity = static_cast<std::size_t>(c);
         }},
        {"trainer.updates_per_episode",
         [&](const std::string& v, int ln) {
             tr.updates_per_episode = static_cast<int>(parse_long(v, ln));
             if (tr.updates_per_episode < 1) fail(ln, "trainer.updates_per_episode must be >= 1");
         }},
        {"trainer.bootstrap_time_limit",
         [&](const std::string& v, int ln) { tr.bootstrap_time_limit = parse_bool(v, ln); }},
        {"trainer.alpha_init",
         [&](const std::string& v, int ln) {
             tr.alpha_init = parse_num(v, ln);
             if (!(tr.alpha_init > 0.0)) fail(ln, "trainer.alpha_init must be positive");
         }},
        {"trainer.target_entropy",
         [&](const std::string& v, int ln) {
             if (v == "auto")
                 tr.target_entropy = std::numeric_limits<double>::quiet_NaN();
             else
                 tr.target_entropy = parse_num(v, ln);
         }},
        {"trainer.n_atoms",
         [&](const std::string& v, int ln) {
             tr.n_atoms = static_cast<int>(parse_long(v, ln));
             if (tr.n_atoms < 2) fail(ln, "trainer.n_atoms must be >= 2");
         }},
        {"trainer.v_max",
         [&](const std::string& v, int ln) {
             tr.v_max = parse_num(v, ln);
             if (!(tr.v_max > 0.0)) fail(ln, "trainer.v_max must be positive");
         }},
        {"trainer.xi", [&](const std::string& v, int ln) { tr.xi = parse_num(v, ln); }},
        {"trainer.critic_hidden",
         [&](const std::string& v, int ln) {
             tr.critic_hidden = parse_widths(v, ln);
             if (tr.critic_hidden.size() != 2) fail(ln, "trainer.critic_hidden needs 2 widths");
         }},
        {"trainer.bn_momentum",
         [&](const std::string& v, int ln) {
             tr.bn_momentum = parse_num(v, ln);
             if (tr.bn_momentum <= 0.0 || tr.bn_momentum >= 1.0)
                 fail(ln, "trainer.bn_momentum must be in (0, 1)");
         }},
        {"trainer.bn_warmup_steps",
         [&](const std::string& v, int ln) {
             tr.bn_warmup_steps = parse_num(v, ln);
             if (tr.bn_warmup_steps < 0.0) fail(ln, "trainer.bn_warmup_steps must be >= 0");
         }},
        {"trainer.diffusion_steps",
         [&](const std::string& v, int ln) {
             tr.diffusion_steps = static_cast<int>(parse_long(v, ln));
             if (tr.diffusion_steps < 1) fail(ln, "trainer.diffusion_steps must be >= 1");
         }},
        {"trainer.beta_min",
         [&](const std::string& v, int ln) {
             tr.beta_min = parse_num(v, ln);
             if (!(tr.beta_min > 0.0)) fail(ln, "trainer.beta_min must be positive");
         }},
        {"trainer.beta_max",
         [&](const std::string& v, int ln) { tr.beta_max = parse_num(v, ln); }},
        {"trainer.eta",
         [&](const std::string& v, int ln) {
             tr.eta = parse_num(v, ln);
             if (!(tr.eta > 0.0)) fail(ln, "trainer.eta must be positive");
         }},
        {"trainer.policy_hidden",
         [&](const std::string& v, int ln) { tr.policy_hidden = parse_widths(v, ln); }},
        {"trainer.time_embed_dim",
         [&](const std::string& v, int ln) {
             const long d = parse_long(v, ln);
             if (d < 2 || d % 2 != 0) fail(ln, "trainer.time_embed_dim must be even and >= 2");
             tr.time_embed_dim = static_cast<std::size_t>(d);
         }},
        {"trainer.lr",
         [&](const std::string& v, int ln) {
             tr.lr = parse_num(v, ln);
             if (!(tr.lr > 0.0)) fail(ln, "trainer.lr must be positive");
         }},
        {"trainer.lr_alpha",
         [&](const std::string& v, int ln) {
             if (v == "auto")
                 tr.lr_alpha = -1.0;
             else {
                 tr.lr_alpha = parse_num(v, ln);
                 if (!(tr.lr_alpha > 0.0)) fail(ln, "trainer.lr_alpha must be positive or auto");
             }
         }},
        {"trainer.adam_beta1",
         [&](const std::string& v, int ln) {
             tr.adam_beta1 = parse_num(v, ln);
             if (tr.adam_beta1 < 0.0 || tr.adam_beta1 >= 1.0)
                 fail(ln, "trainer.adam_beta1 must be in [0, 1)");
         }},
        {"trainer.adam_beta2",
         [&](const std::string& v, int ln) {
             tr.adam_beta2 = parse_num(v, ln);
             if (tr.adam_beta2 < 0.0 || tr.adam_beta2 >= 1.0)
                 fail(ln, "trainer.adam_beta2 must be in [0, 1)");
         }},
        {"trainer.clip_norm",
         [&](const std::string& v, int ln) { tr.clip_norm = parse_num(v, ln); }},
    };

    std::stringstream ss(text);
    std::string line;
    int ln = 0;
    while (std::getline(ss, line)) {
        ++ln;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos) fail(ln, "expected 'key = value'");
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty()) fail(ln, "empty key");
        const auto it = keys.find(key);
        if (it == keys.end()) fail(ln, "unknown key '" + key + "'");
        it->second(value, ln);
    }

    if (!cfg.seed_set) throw ConfigError("config: mandatory key 'seed' is missing");
    if (!(tr.beta_min < tr.beta_max))
        throw ConfigError("config: trainer.beta_min must be below trainer.beta_max");
    if (!(tr.beta_max / static_cast<double>(tr.diffusion_steps) < 1.0))
        throw ConfigError("config: trainer.beta_max/diffusion_steps must stay below 1");
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

namespace {

std::string num(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

std::string widths(const std::vector<std::size_t>& w) {
    std::string s;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(w[i]);
    }
    return s;
}

} // namespace

std::string render_config(const RunConfig& cfg) {
    const TrainerConfig& tr = cfg.trainer;
    std::ostringstream os;
    os << "seed = " << cfg.seed << "\n";
    os << "episodes = " << cfg.episodes << "\n";
    os << "out = " << cfg.out_dir << "\n";
    os << "parallel_kernels = " << (cfg.parallel_kernels ? "true" : "false") << "\n";
    os << "env.name = " << cfg.env_name << "\n";
    os << "env.n_agents = " << cfg.n_agents << "\n";
    os << "env.episode_length = " << cfg.episode_length << "\n";
    os << "env.coverage_dim_i = " << cfg.coverage_dim_i << "\n";
    os << "env.coverage_dim_j = " << cfg.coverage_dim_j << "\n";
    os << "env.coverage_lo_i = " << num(cfg.coverage_lo_i) << "\n";
    os << "env.coverage_hi_i = " << num(cfg.coverage_hi_i) << "\n";
    os << "env.coverage_lo_j = " << num(cfg.coverage_lo_j) << "\n";
    os << "env.coverage_hi_j = " << num(cfg.coverage_hi_j) << "\n";
    os << "env.coverage_cell = " << num(cfg.coverage_cell) << "\n";
    os << "eval.interval = " << cfg.eval_interval << "\n";
    os << "eval.episodes = " << cfg.eval_episodes << "\n";
    os << "trainer.warmup_steps = " << tr.warmup_steps << "\n";
    os << "trainer.learning_starts = " << tr.learning_starts << "\n";
    os << "trainer.rho = " << num(tr.rho) << "\n";
    os << "trainer.gamma = " << num(tr.gamma) << "\n";
    os << "trainer.policy_delay = " << tr.policy_delay << "\n";
    os << "trainer.batch_size = " << tr.batch_size << "\n";
    os << "trainer.buffer_capacity = " << tr.buffer_capacity << "\n";
    os << "trainer.updates_per_episode = " << tr.updates_per_episode << "\n";
    os << "trainer.bootstrap_time_limit = " << (tr.bootstrap_time_limit ? "true" : "false")
       << "\n";
    os << "trainer.alpha_init = " << num(tr.alpha_init) << "\n";
    os << "trainer.target_entropy = "
       << (std::isnan(tr.target_entropy) ? std::string("auto") : num(tr.target_entropy)) << "\n";
    os << "trainer.n_atoms = " << tr.n_atoms << "\n";
    os << "trainer.v_max = " << num(tr.v_max) << "\n";
    os << "trainer.xi = " << num(tr.xi) << "\n";
    os << "trainer.critic_hidden = " << widths(tr.critic_hidden) << "\n";
    os << "trainer.bn_momentum = " << num(tr.bn_momentum) << "\n";
    os << "trainer.bn_warmup_steps = " << num(tr.bn_warmup_steps) << "\n";
    os << "trainer.diffusion_steps = " << tr.diffusion_steps << "\n";
    os << "trainer.beta_min = " << num(tr.beta_min) << "\n";
    os << "trainer.beta_max = " << num(tr.beta_max) << "\n";
    os << "trainer.eta = " << num(tr.eta) << "\n";
    os << "trainer.policy_hidden = " << widths(tr.policy_hidden) << "\n";
    os << "trainer.time_embed_dim = " << tr.time_embed_dim << "\n";
    os << "trainer.lr = " << num(tr.lr) << "\n";
    os << "trainer.lr_alpha = " << (tr.lr_alpha > 0.0 ? num(tr.lr_alpha) : std::string("auto"))
       << "\n";
    os << "trainer.adam_beta1 = " << num(tr.adam_beta1) << "\n";
    os << "trainer.adam_beta2 = " << num(tr.adam_beta2) << "\n";
    os << "trainer.clip_norm = " << num(tr.clip_norm) << "\n";
    return os.str();
}

} // namespace madp::train
