#include "tgd/harness.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "tgd/oracle.hpp"
#include "tgd/parallel.hpp"

namespace tgd::harness {

using nlohmann::json;

namespace {

// Root stream ids. Cell streams hang off kTagCells; everything realized in
// build_problem has its own branch so adding draws to one never shifts
// another.
constexpr std::uint64_t kTagPrior = 0xA001;
constexpr std::uint64_t kTagCondition = 0xA002;
constexpr std::uint64_t kTagProjections = 0xA003;
constexpr std::uint64_t kTagOracle = 0xA004;
constexpr std::uint64_t kTagOracleFloor = 0xA005;
constexpr std::uint64_t kTagCells = 0xA006;
// Within-run id for the equal-weight pooling resample; ids 1..5 belong to the
// sampler's phases.
constexpr std::uint64_t kPoolStreamId = 6;

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
    throw std::invalid_argument("config." + path + ": " + msg);
}

void check_keys(const json& j, const std::string& path,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object()) fail(path, "expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                known = true;
                break;
            }
        if (!known) fail(path, "unknown key '" + it.key() + "'");
    }
}

double get_double(const json& j, const std::string& path, const char* key, double def) {
    if (!j.contains(key)) return def;
    if (!j[key].is_number()) fail(path + "." + key, "expected a number");
    return j[key].get<double>();
}

std::size_t get_size(const json& j, const std::string& path, const char* key,
                     std::size_t def) {
    if (!j.contains(key)) return def;
    if (!j[key].is_number_unsigned()) fail(path + "." + key, "expected a non-negative integer");
    return j[key].get<std::size_t>();
}

int get_int(const json& j, const std::string& path, const char* key, int def) {
    if (!j.contains(key)) return def;
    if (!j[key].is_number_integer()) fail(path + "." + key, "expected an integer");
    return j[key].get<int>();
}

std::string get_string(const json& j, const std::string& path, const char* key,
                       const std::string& def) {
    if (!j.contains(key)) return def;
    if (!j[key].is_string()) fail(path + "." + key, "expected a string");
    return j[key].get<std::string>();
}

bool get_bool(const json& j, const std::string& path, const char* key, bool def) {
    if (!j.contains(key)) return def;
    if (!j[key].is_boolean()) fail(path + "." + key, "expected a boolean");
    return j[key].get<bool>();
}

GridSpec parse_grid(const json& j, const std::string& path) {
    check_keys(j, path, {"points", "s_max", "s_min", "curvature"});
    GridSpec g;
    g.points = get_size(j, path, "points", g.points);
    g.s_max = get_double(j, path, "s_max", g.s_max);
    g.s_min = get_double(j, path, "s_min", g.s_min);
    g.curvature = get_double(j, path, "curvature", g.curvature);
    return g;
}

LangevinConfig parse_langevin(const json& j, const std::string& path) {
    check_keys(j, path, {"n_steps", "step_init", "step_final", "r_scale", "metropolis"});
    LangevinConfig l;
    l.n_steps = get_int(j, path, "n_steps", l.n_steps);
    l.step_init = get_double(j, path, "step_init", l.step_init);
    l.step_final = get_double(j, path, "step_final", l.step_final);
    l.r_scale = get_double(j, path, "r_scale", l.r_scale);
    l.metropolis = get_bool(j, path, "metropolis", l.metropolis);
    return l;
}

MethodSpec parse_method(const json& j, const std::string& path) {
    check_keys(j, path,
               {"name", "sampler", "module", "inner_steps", "inner_s_min", "inner_curvature",
                "gamma", "guidance_clip", "rho", "nu", "tempering", "resample", "langevin",
                "grid"});
    MethodSpec m;
    m.name = get_string(j, path, "name", "");
    m.sampler = get_string(j, path, "sampler", m.sampler);
    m.module = get_string(j, path, "module", m.module);
    m.inner_steps = get_int(j, path, "inner_steps", m.inner_steps);
    m.inner_s_min = get_double(j, path, "inner_s_min", m.inner_s_min);
    m.inner_curvature = get_double(j, path, "inner_curvature", m.inner_curvature);
    m.gamma = get_double(j, path, "gamma", m.gamma);
    m.guidance_clip = get_double(j, path, "guidance_clip", m.guidance_clip);
    m.rho = get_double(j, path, "rho", m.rho);
    m.nu = get_double(j, path, "nu", m.nu);
    if (j.contains("tempering")) {
        const auto& t = j["tempering"];
        const std::string tp = path + ".tempering";
        check_keys(t, tp, {"kind", "lambda_start", "alpha"});
        m.tempering.kind = get_string(t, tp, "kind", m.tempering.kind);
        m.tempering.lambda_start = get_double(t, tp, "lambda_start", m.tempering.lambda_start);
        m.tempering.alpha = get_double(t, tp, "alpha", m.tempering.alpha);
    }
    if (j.contains("resample")) {
        const auto& r = j["resample"];
        const std::string rp = path + ".resample";
        check_keys(r, rp, {"scheme", "trigger", "ess_fraction"});
        m.resample.scheme = get_string(r, rp, "scheme", m.resample.scheme);
        m.resample.trigger = get_string(r, rp, "trigger", m.resample.trigger);
        m.resample.ess_fraction = get_double(r, rp, "ess_fraction", m.resample.ess_fraction);
    }
    if (j.contains("langevin")) m.langevin = parse_langevin(j["langevin"], path + ".langevin");
    if (j.contains("grid")) m.grid = parse_grid(j["grid"], path + ".grid");
    return m;
}

json grid_to_json(const GridSpec& g) {
    return json{{"points", g.points},
                {"s_max", g.s_max},
                {"s_min", g.s_min},
                {"curvature", g.curvature}};
}

json method_to_json(const MethodSpec& m) {
    json j{{"name", m.name},
           {"sampler", m.sampler},
           {"module", m.module},
           {"inner_steps", m.inner_steps},
           {"inner_s_min", m.inner_s_min},
           {"inner_curvature", m.inner_curvature},
           {"gamma", m.gamma},
           {"guidance_clip", m.guidance_clip},
           {"rho", m.rho},
           {"nu", m.nu},
           {"tempering",
            {{"kind", m.tempering.kind},
             {"lambda_start", m.tempering.lambda_start},
             {"alpha", m.tempering.alpha}}},
           {"resample",
            {{"scheme", m.resample.scheme},
             {"trigger", m.resample.trigger},
             {"ess_fraction", m.resample.ess_fraction}}},
           {"langevin",
            {{"n_steps", m.langevin.n_steps},
             {"step_init", m.langevin.step_init},
             {"step_final", m.langevin.step_final},
             {"r_scale", m.langevin.r_scale},
             {"metropolis", m.langevin.metropolis}}}};
    if (m.grid) j["grid"] = grid_to_json(*m.grid);
    return j;
}

NoiseSchedule realize_grid(const GridSpec& g) {
    return edm_noise_grid(g.points, g.s_max, g.s_min, g.curvature);
}

TemperingSchedule realize_tempering(const TemperSpec& t, const NoiseSchedule& grid) {
    if (t.kind == "uniform") return uniform_tempering(grid.stage_count(), t.lambda_start);
    if (t.kind == "noise") return noise_dependent_tempering(grid, t.lambda_start, t.alpha);
    throw std::invalid_argument("tempering kind must be 'uniform' or 'noise'");
}

ModuleKind module_kind(const std::string& s) {
    if (s == "uncond") return ModuleKind::Uncond;
    if (s == "dps") return ModuleKind::Dps;
    if (s == "mpgd") return ModuleKind::Mpgd;
    if (s == "daps") return ModuleKind::Daps;
    if (s == "hybrid") return ModuleKind::Hybrid;
    if (s == "exact") return ModuleKind::Exact;
    throw std::invalid_argument("unknown module '" + s + "'");
}

ResamplePolicy resample_policy(const ResampleSpec& r) {
    ResamplePolicy p;
    if (r.scheme == "systematic")
        p.scheme = ResampleScheme::Systematic;
    else if (r.scheme == "multinomial")
        p.scheme = ResampleScheme::Multinomial;
    else if (r.scheme == "none")
        p.scheme = ResampleScheme::None;
    else
        throw std::invalid_argument("unknown resample scheme '" + r.scheme + "'");
    if (r.trigger == "always")
        p.trigger = ResampleTrigger::Always;
    else if (r.trigger == "never")
        p.trigger = ResampleTrigger::Never;
    else if (r.trigger == "ess")
        p.trigger = ResampleTrigger::EssThreshold;
    else
        throw std::invalid_argument("unknown resample trigger '" + r.trigger + "'");
    p.ess_fraction = r.ess_fraction;
    return p;
}

ModuleConfig module_config(const MethodSpec& m) {
    ModuleConfig mc;
    mc.kind = module_kind(m.module);
    mc.inner_steps = m.inner_steps;
    mc.inner_s_min = m.inner_s_min;
    mc.inner_curvature = m.inner_curvature;
    mc.gamma = m.gamma;
    mc.guidance_clip = m.guidance_clip;
    mc.nu = m.nu;
    mc.langevin = m.langevin;
    return mc;
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_ms(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

std::string hash_hex(std::uint64_t h) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// Exact posterior draws for the masked linear operator: conjugate per kept
// coordinate, prior elsewhere.
std::vector<Vec> mask_posterior_samples(const GaussianMixturePrior& prior,
                                        const LinearMaskObservation& obs, std::size_t count,
                                        RngStream& rng) {
    const auto& mask = obs.mask();
    const Vec& y = obs.data();
    const double tau2 = prior.tau * prior.tau;
    const double sig2 = obs.noise_std() * obs.noise_std();
    const double vp = 1.0 / (1.0 / tau2 + 1.0 / sig2);
    const double sd_kept = std::sqrt(vp);

    const std::size_t K = prior.components();
    std::vector<double> logw(K);
    for (std::size_t k = 0; k < K; ++k) {
        double lw = std::log(prior.weights[k]);
        std::size_t q = 0;
        for (std::size_t j = 0; j < mask.size(); ++j)
            if (mask[j]) lw += log_normal_pdf(y[q++], prior.means[k][j], tau2 + sig2);
        logw[k] = lw;
    }
    normalize_log_weights(logw);
    std::vector<double> w(K);
    for (std::size_t k = 0; k < K; ++k) w[k] = std::exp(logw[k]);

    std::vector<Vec> out(count, Vec(prior.dim));
    for (auto& x : out) {
        const std::size_t k = sample_categorical(w, rng);
        std::size_t q = 0;
        for (std::size_t j = 0; j < prior.dim; ++j) {
            if (mask[j]) {
                const double m = vp * (prior.means[k][j] / tau2 + y[q] / sig2);
                x[j] = m + sd_kept * rng.normal();
                ++q;
            } else {
                x[j] = prior.means[k][j] + prior.tau * rng.normal();
            }
        }
    }
    return out;
}

}  // namespace

RunConfig config_from_json(const json& j) {
    check_keys(j, "<root>",
               {"experiment", "seed", "out_dir", "format", "threads", "conditions",
                "repetitions", "prior", "observation", "noise_grid", "metric", "particles",
                "methods"});
    RunConfig c;
    c.experiment = get_string(j, "<root>", "experiment", c.experiment);
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned()) fail("seed", "expected a non-negative integer");
        c.seed = j["seed"].get<std::uint64_t>();
    }
    c.out_dir = get_string(j, "<root>", "out_dir", c.out_dir);
    c.format = get_string(j, "<root>", "format", c.format);
    c.threads = get_int(j, "<root>", "threads", c.threads);
    c.conditions = get_size(j, "<root>", "conditions", c.conditions);
    c.repetitions = get_size(j, "<root>", "repetitions", c.repetitions);

    if (j.contains("prior")) {
        const auto& p = j["prior"];
        check_keys(p, "prior", {"dim", "components", "tau", "margin", "means", "weights"});
        c.prior.dim = get_size(p, "prior", "dim", c.prior.dim);
        c.prior.components = get_size(p, "prior", "components", c.prior.components);
        c.prior.tau = get_double(p, "prior", "tau", c.prior.tau);
        c.prior.margin = get_double(p, "prior", "margin", c.prior.margin);
        if (p.contains("means")) {
            if (!p["means"].is_array()) fail("prior.means", "expected an array of points");
            for (const auto& row : p["means"]) {
                if (!row.is_array()) fail("prior.means", "expected an array of points");
                c.prior.means.push_back(row.get<Vec>());
            }
        }
        if (p.contains("weights")) {
            if (!p["weights"].is_array()) fail("prior.weights", "expected an array of numbers");
            c.prior.weights = p["weights"].get<std::vector<double>>();
        }
    }
    if (j.contains("observation")) {
        const auto& o = j["observation"];
        check_keys(o, "observation", {"operator", "sigma_y", "mask"});
        c.observation.op = get_string(o, "observation", "operator", c.observation.op);
        c.observation.sigma_y = get_double(o, "observation", "sigma_y", c.observation.sigma_y);
        if (o.contains("mask")) {
            if (!o["mask"].is_array()) fail("observation.mask", "expected an array of 0/1");
            for (const auto& b : o["mask"]) {
                if (!b.is_number_integer()) fail("observation.mask", "expected an array of 0/1");
                c.observation.mask.push_back(b.get<int>() ? 1 : 0);
            }
        }
    }
    if (j.contains("noise_grid")) c.noise_grid = parse_grid(j["noise_grid"], "noise_grid");
    if (j.contains("metric")) {
        const auto& m = j["metric"];
        check_keys(m, "metric", {"projections", "order", "pool_target"});
        c.metric.projections = get_size(m, "metric", "projections", c.metric.projections);
        c.metric.order = get_int(m, "metric", "order", c.metric.order);
        c.metric.pool_target = get_size(m, "metric", "pool_target", c.metric.pool_target);
    }
    if (j.contains("particles")) {
        if (!j["particles"].is_array()) fail("particles", "expected an array of integers");
        c.particles.clear();
        for (const auto& n : j["particles"]) {
            if (!n.is_number_unsigned() || n.get<std::size_t>() == 0)
                fail("particles", "entries must be positive integers");
            c.particles.push_back(n.get<std::size_t>());
        }
    }
    if (j.contains("methods")) {
        if (!j["methods"].is_array()) fail("methods", "expected an array");
        c.methods.clear();
        std::size_t i = 0;
        for (const auto& m : j["methods"])
            c.methods.push_back(parse_method(m, "methods[" + std::to_string(i++) + "]"));
    }
    validate_config(c);
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::invalid_argument("config parse error in " + path + ": " + e.what());
    }
    return config_from_json(j);
}

json config_to_json(const RunConfig& c) {
    json prior{{"dim", c.prior.dim},
               {"components", c.prior.components},
               {"tau", c.prior.tau},
               {"margin", c.prior.margin}};
    if (!c.prior.means.empty()) prior["means"] = c.prior.means;
    if (!c.prior.weights.empty()) prior["weights"] = c.prior.weights;
    json obs{{"operator", c.observation.op}, {"sigma_y", c.observation.sigma_y}};
    if (!c.observation.mask.empty()) {
        json m = json::array();
        for (auto b : c.observation.mask) m.push_back(static_cast<int>(b));
        obs["mask"] = m;
    }
    json methods = json::array();
    for (const auto& m : c.methods) methods.push_back(method_to_json(m));
    return json{{"experiment", c.experiment},
                {"seed", c.seed},
                {"out_dir", c.out_dir},
                {"format", c.format},
                {"threads", c.threads},
                {"conditions", c.conditions},
                {"repetitions", c.repetitions},
                {"prior", prior},
                {"observation", obs},
                {"noise_grid", grid_to_json(c.noise_grid)},
                {"metric",
                 {{"projections", c.metric.projections},
                  {"order", c.metric.order},
                  {"pool_target", c.metric.pool_target}}},
                {"particles", c.particles},
                {"methods", methods}};
}

std::uint64_t config_hash(const RunConfig& cfg) {
    const std::string dump = config_to_json(cfg).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : dump) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

void validate_config(const RunConfig& c) {
    if (c.conditions == 0) fail("conditions", "must be >= 1");
    if (c.repetitions == 0) fail("repetitions", "must be >= 1");
    if (c.format != "csv" && c.format != "jsonl") fail("format", "must be 'csv' or 'jsonl'");
    if (c.threads < 0) fail("threads", "must be >= 0");
    if (c.particles.empty()) fail("particles", "must be nonempty");

    if (c.prior.dim == 0) fail("prior.dim", "must be >= 1");
    if (c.prior.components == 0) fail("prior.components", "must be >= 1");
    if (!(c.prior.tau > 0.0)) fail("prior.tau", "must be positive");
    if (!(c.prior.margin >= 0.0 && c.prior.margin < 1.0)) fail("prior.margin", "must lie in [0, 1)");
    if (!c.prior.means.empty()) {
        if (c.prior.means.size() != c.prior.components)
            fail("prior.means", "count must equal prior.components");
        for (const auto& m : c.prior.means)
            if (m.size() != c.prior.dim) fail("prior.means", "each mean needs prior.dim entries");
    }
    if (!c.prior.weights.empty() && c.prior.weights.size() != c.prior.components)
        fail("prior.weights", "count must equal prior.components");

    if (c.observation.op != "abs" && c.observation.op != "mask")
        fail("observation.operator", "must be 'abs' or 'mask'");
    if (!(c.observation.sigma_y > 0.0)) fail("observation.sigma_y", "must be positive");
    if (c.observation.op == "mask") {
        if (c.observation.mask.size() != c.prior.dim)
            fail("observation.mask", "length must equal prior.dim");
        if (std::count(c.observation.mask.begin(), c.observation.mask.end(), 1) == 0)
            fail("observation.mask", "must keep at least one coordinate");
    } else if (!c.observation.mask.empty()) {
        fail("observation.mask", "only valid with operator 'mask'");
    }

    if (c.metric.projections == 0) fail("metric.projections", "must be >= 1");
    if (c.metric.order != 1 && c.metric.order != 2) fail("metric.order", "must be 1 or 2");
    if (c.metric.pool_target == 0) fail("metric.pool_target", "must be >= 1");

    try {
        realize_grid(c.noise_grid);
    } catch (const std::exception& e) {
        fail("noise_grid", e.what());
    }

    if (c.methods.empty()) fail("methods", "must be nonempty");
    std::set<std::string> names;
    for (std::size_t i = 0; i < c.methods.size(); ++i) {
        const auto& m = c.methods[i];
        const std::string path = "methods[" + std::to_string(i) + "]";
        if (m.name.empty()) fail(path + ".name", "must be nonempty");
        // Names become CSV fields and meta.json keys; keep them identifier-like.
        if (std::any_of(m.name.begin(), m.name.end(), [](char ch) {
                return !std::isalnum(static_cast<unsigned char>(ch)) && ch != '_' && ch != '-';
            }))
            fail(path + ".name", "must contain only letters, digits, '_' or '-'");
        if (!names.insert(m.name).second) fail(path + ".name", "duplicate method name");
        if (m.sampler != "tgd" && m.sampler != "atgd")
            fail(path + ".sampler", "must be 'tgd' or 'atgd'");
        try {
            module_kind(m.module);
        } catch (const std::exception& e) {
            fail(path + ".module", e.what());
        }
        if (m.module == "exact" && c.observation.op != "abs")
            fail(path + ".module", "exact module requires the 'abs' operator");
        if (m.inner_steps < 1) fail(path + ".inner_steps", "must be >= 1");
        if (!(m.inner_s_min > 0.0)) fail(path + ".inner_s_min", "must be positive");
        if (!(m.inner_curvature > 0.0)) fail(path + ".inner_curvature", "must be positive");
        if (!(m.gamma >= 0.0)) fail(path + ".gamma", "must be >= 0");
        if (!(m.rho >= 0.0 && m.rho <= 1.0)) fail(path + ".rho", "must lie in [0, 1]");
        if (!(m.nu >= 0.0 && m.nu <= 1.0)) fail(path + ".nu", "must lie in [0, 1]");
        if (m.tempering.kind != "uniform" && m.tempering.kind != "noise")
            fail(path + ".tempering.kind", "must be 'uniform' or 'noise'");
        if (!(m.tempering.lambda_start >= 0.0 && m.tempering.lambda_start <= 1.0))
            fail(path + ".tempering.lambda_start", "must lie in [0, 1]");
        if (!(m.tempering.alpha > 0.0)) fail(path + ".tempering.alpha", "must be positive");
        try {
            resample_policy(m.resample);
        } catch (const std::exception& e) {
            fail(path + ".resample", e.what());
        }
        if (!(m.resample.ess_fraction > 0.0 && m.resample.ess_fraction <= 1.0))
            fail(path + ".resample.ess_fraction", "must lie in (0, 1]");
        if (m.langevin.n_steps < 0) fail(path + ".langevin.n_steps", "must be >= 0");
        if (!(m.langevin.step_init > 0.0) || !(m.langevin.step_final > 0.0))
            fail(path + ".langevin", "step sizes must be positive");
        if (!(m.langevin.r_scale > 0.0)) fail(path + ".langevin.r_scale", "must be positive");
        if (m.grid) {
            try {
                realize_grid(*m.grid);
            } catch (const std::exception& e) {
                fail(path + ".grid", e.what());
            }
        }
    }
}

std::vector<Vec> oracle_samples(const GaussianMixturePrior& prior, const Observation& obs,
                                std::size_t count, RngStream& rng) {
    if (const auto* abs_obs = dynamic_cast<const AbsValueObservation*>(&obs)) {
        const auto post = build_sign_branch_posterior(prior, abs_obs->data(), abs_obs->noise_std());
        return sample_many(post, count, rng);
    }
    if (const auto* mask_obs = dynamic_cast<const LinearMaskObservation*>(&obs)) {
        return mask_posterior_samples(prior, *mask_obs, count, rng);
    }
    throw std::invalid_argument("oracle_samples: no exact posterior for this operator");
}

Problem build_problem(const RunConfig& cfg) {
    validate_config(cfg);
    Problem pb;

    std::vector<Vec> means = cfg.prior.means;
    if (means.empty()) {
        RngStream r(derive_key(cfg.seed, kTagPrior));
        means = sample_prior_means(cfg.prior.dim, cfg.prior.components, cfg.prior.margin, r);
    }
    std::vector<double> w = cfg.prior.weights;
    if (w.empty())
        w.assign(cfg.prior.components, 1.0 / static_cast<double>(cfg.prior.components));
    pb.prior = make_mixture(cfg.prior.dim, std::move(w), std::move(means), cfg.prior.tau);

    const std::uint64_t cond_root = derive_key(cfg.seed, kTagCondition);
    for (std::size_t c = 0; c < cfg.conditions; ++c) {
        RngStream r(derive_key(cond_root, c));
        Condition cond;
        cond.x0_true = sample(pb.prior, r);
        std::unique_ptr<Observation> obs;
        if (cfg.observation.op == "abs") {
            Vec y(cond.x0_true.size());
            for (std::size_t j = 0; j < y.size(); ++j)
                y[j] = std::fabs(cond.x0_true[j]) + cfg.observation.sigma_y * r.normal();
            cond.y = y;
            obs = std::make_unique<AbsValueObservation>(std::move(y), cfg.observation.sigma_y);
        } else {
            Vec y;
            for (std::size_t j = 0; j < cond.x0_true.size(); ++j)
                if (cfg.observation.mask[j])
                    y.push_back(cond.x0_true[j] + cfg.observation.sigma_y * r.normal());
            cond.y = y;
            obs = std::make_unique<LinearMaskObservation>(cfg.observation.mask, std::move(y),
                                                          cfg.observation.sigma_y);
        }
        pb.conditions.push_back(std::move(cond));
        pb.observations.push_back(std::move(obs));
    }

    RngStream pr(derive_key(cfg.seed, kTagProjections));
    pb.projections = projection_directions(cfg.metric.projections, cfg.prior.dim, pr);

    const std::uint64_t oracle_root = derive_key(cfg.seed, kTagOracle);
    const std::uint64_t floor_root = derive_key(cfg.seed, kTagOracleFloor);
    pb.oracle.resize(cfg.conditions);
    pb.oracle_floor.resize(cfg.conditions);
    for (std::size_t c = 0; c < cfg.conditions; ++c) {
        RngStream r1(derive_key(oracle_root, c));
        pb.oracle[c].points =
            oracle_samples(pb.prior, *pb.observations[c], cfg.metric.pool_target, r1);
        RngStream r2(derive_key(floor_root, c));
        SampleSet alt;
        alt.points = oracle_samples(pb.prior, *pb.observations[c], cfg.metric.pool_target, r2);
        RngStream dummy(derive_key(floor_root, c + 0x5EED));
        pb.oracle_floor[c] = max_sliced_wasserstein(pb.oracle[c], alt, pb.projections,
                                                    cfg.metric.order, dummy);
    }
    return pb;
}

namespace {

struct CellJob {
    std::size_t method = 0;
    std::size_t n_particles = 0;
    std::size_t condition = 0;
    std::size_t repetition = 0;
};

CellResult run_cell(const RunConfig& cfg, const Problem& pb, const CellJob& job,
                    std::vector<std::string>* trace_lines) {
    const MethodSpec& m = cfg.methods[job.method];
    const Observation& obs = *pb.observations[job.condition];

    CellResult out;
    out.condition = job.condition;
    out.method = m.name;
    out.n_particles = job.n_particles;
    out.repetition = job.repetition;
    const std::uint64_t cell_seed = derive_key(
        derive_key(derive_key(derive_key(derive_key(cfg.seed, kTagCells), job.method),
                              job.condition),
                   job.n_particles),
        job.repetition);
    out.seed = cell_seed;

    const auto t0 = std::chrono::steady_clock::now();
    try {
        const NoiseSchedule grid = realize_grid(m.grid ? *m.grid : cfg.noise_grid);
        const TemperingSchedule temper = realize_tempering(m.tempering, grid);
        const Reconstructor module = make_reconstructor(pb.prior, obs, module_config(m));
        const ResamplePolicy policy = resample_policy(m.resample);
        const std::size_t target = cfg.metric.pool_target;

        SampleSet pooled;
        pooled.points.reserve(target + job.n_particles);
        std::size_t runs = 0;
        double ess_sum = 0.0;

        std::size_t current_run = 0;
        TraceFn trace_fn;
        const TraceFn* trace_ptr = nullptr;
        if (trace_lines) {
            trace_fn = [&](const StageTrace& t) {
                json line{{"method", m.name},
                          {"condition", job.condition},
                          {"n_particles", job.n_particles},
                          {"repetition", job.repetition},
                          {"run", current_run},
                          {"stage", t.stage},
                          {"s", t.s},
                          {"lambda", t.lambda},
                          {"ess", t.ess_before},
                          {"resampled", t.resampled},
                          {"loglik_mean", t.loglik_mean},
                          {"loglik_max", t.loglik_max}};
                trace_lines->push_back(line.dump());
            };
            trace_ptr = &trace_fn;
        }

        if (m.sampler == "tgd") {
            while (pooled.points.size() < target) {
                const std::uint64_t run_master = derive_key(cell_seed, runs);
                current_run = runs;
                ParticleEnsemble ens =
                    run_tgd(pb.prior, obs, job.n_particles, grid, temper, module, policy,
                            run_master, trace_ptr);
                ess_sum += ess(ens);
                ++runs;
                std::vector<double> w(ens.size());
                double sum = 0.0;
                for (std::size_t i = 0; i < ens.size(); ++i) {
                    w[i] = std::exp(ens.log_w[i]);
                    sum += w[i];
                }
                for (double& v : w) v /= sum;
                RngStream pool_rng(derive_key(run_master, kPoolStreamId));
                const auto idx = systematic_indices(w, pool_rng.u01());
                for (std::size_t i : idx) pooled.points.push_back(ens.x0[i]);
            }
            pooled.points.resize(target);
            out.ess_final = ess_sum / static_cast<double>(runs);
        } else {
            for (std::size_t j = 0; j < target; ++j) {
                current_run = j;
                pooled.points.push_back(run_atgd(pb.prior, obs, job.n_particles, grid, temper,
                                                 module, policy, m.rho,
                                                 derive_key(cell_seed, j), trace_ptr));
            }
            runs = target;
            out.ess_final = 1.0;
        }

        RngStream metric_rng(derive_key(cell_seed, 0xD157));
        const SlicedDistances d = sliced_wasserstein(pooled, pb.oracle[job.condition],
                                                     pb.projections, cfg.metric.order,
                                                     metric_rng);
        out.swd = d.max;
        out.mean_swd = d.mean;
        out.samples_pooled = pooled.points.size();
    } catch (const std::exception& e) {
        out.failed = true;
        out.error = e.what();
        out.swd = std::numeric_limits<double>::quiet_NaN();
        out.mean_swd = std::numeric_limits<double>::quiet_NaN();
        out.ess_final = std::numeric_limits<double>::quiet_NaN();
        out.samples_pooled = 0;
    }
    const auto t1 = std::chrono::steady_clock::now();
    out.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    return out;
}

}  // namespace

std::vector<CellResult> run_sweep(const RunConfig& cfg, const Problem& pb, TraceSink* trace) {
    std::vector<CellJob> jobs;
    for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi)
        for (std::size_t n : cfg.particles)
            for (std::size_t c = 0; c < cfg.conditions; ++c)
                for (std::size_t rep = 0; rep < cfg.repetitions; ++rep)
                    jobs.push_back(CellJob{mi, n, c, rep});

    std::vector<CellResult> results(jobs.size());
    std::vector<std::vector<std::string>> traces(trace ? jobs.size() : 0);
    parallel_for(jobs.size(), [&](std::size_t i) {
        results[i] = run_cell(cfg, pb, jobs[i], trace ? &traces[i] : nullptr);
    });
    if (trace)
        for (const auto& cell : traces)
            for (const auto& line : cell) trace->line(line);
    return results;
}

std::vector<AggregateRow> aggregate(const std::vector<CellResult>& cells) {
    // Group by (method, N); average repetitions within a condition, then mean
    // and standard error across conditions.
    std::vector<std::pair<std::string, std::size_t>> order;
    std::map<std::pair<std::string, std::size_t>, std::map<std::size_t, std::vector<double>>>
        groups;
    for (const auto& c : cells) {
        if (c.failed) continue;
        const auto key = std::make_pair(c.method, c.n_particles);
        if (groups.find(key) == groups.end()) order.push_back(key);
        groups[key][c.condition].push_back(c.swd);
    }
    std::vector<AggregateRow> rows;
    for (const auto& key : order) {
        const auto& per_cond = groups[key];
        std::vector<double> cond_means;
        for (const auto& [cond, vals] : per_cond) {
            double s = 0.0;
            for (double v : vals) s += v;
            cond_means.push_back(s / static_cast<double>(vals.size()));
        }
        AggregateRow row;
        row.method = key.first;
        row.n_particles = key.second;
        row.n_conditions = cond_means.size();
        double mean = 0.0;
        for (double v : cond_means) mean += v;
        mean /= static_cast<double>(cond_means.size());
        row.mean_swd = mean;
        if (cond_means.size() > 1) {
            double ss = 0.0;
            for (double v : cond_means) ss += (v - mean) * (v - mean);
            row.stderr_swd = std::sqrt(ss / static_cast<double>(cond_means.size() - 1) /
                                       static_cast<double>(cond_means.size()));
        }
        rows.push_back(row);
    }
    return rows;
}

void write_aggregate_csv(const std::vector<AggregateRow>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "method,n_particles,mean_swd,stderr_swd,n_conditions\n";
    for (const auto& r : rows)
        out << r.method << ',' << r.n_particles << ',' << fmt_double(r.mean_swd) << ','
            << fmt_double(r.stderr_swd) << ',' << r.n_conditions << '\n';
}

void emit_results(const RunConfig& cfg, const Problem& pb,
                  const std::vector<CellResult>& cells, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const std::string hash = hash_hex(config_hash(cfg));

    if (cfg.format == "csv") {
        std::ofstream out(fs::path(out_dir) / "results.csv", std::ios::binary);
        if (!out) throw std::runtime_error("cannot write results.csv");
        out << "condition_id,method,n_particles,repetition,swd,mean_swd,ess_final,"
               "samples_pooled,wall_ms,seed,config_hash\n";
        for (const auto& c : cells)
            out << c.condition << ',' << c.method << ',' << c.n_particles << ','
                << c.repetition << ',' << fmt_double(c.swd) << ',' << fmt_double(c.mean_swd)
                << ',' << fmt_double(c.ess_final) << ',' << c.samples_pooled << ','
                << fmt_ms(c.wall_ms) << ',' << c.seed << ',' << hash << '\n';
    } else {
        std::ofstream out(fs::path(out_dir) / "results.jsonl", std::ios::binary);
        if (!out) throw std::runtime_error("cannot write results.jsonl");
        for (const auto& c : cells) {
            json row{{"condition_id", c.condition},
                     {"method", c.method},
                     {"n_particles", c.n_particles},
                     {"repetition", c.repetition},
                     {"swd", c.swd},
                     {"mean_swd", c.mean_swd},
                     {"ess_final", c.ess_final},
                     {"samples_pooled", c.samples_pooled},
                     {"wall_ms", c.wall_ms},
                     {"seed", c.seed},
                     {"config_hash", hash}};
            if (c.failed) {
                row["failed"] = true;
                row["error"] = c.error;
            }
            out << row.dump() << '\n';
        }
    }

    write_aggregate_csv(aggregate(cells), (fs::path(out_dir) / "aggregate.csv").string());

    json meta;
    meta["format_version"] = 1;
    meta["config"] = config_to_json(cfg);
    meta["config_hash"] = hash;
    meta["prior"] = {{"weights", pb.prior.weights},
                     {"means", pb.prior.means},
                     {"tau", pb.prior.tau}};
    json conds = json::array();
    for (std::size_t c = 0; c < pb.conditions.size(); ++c)
        conds.push_back({{"condition_id", c},
                         {"x0_true", pb.conditions[c].x0_true},
                         {"y", pb.conditions[c].y},
                         {"oracle_floor_swd", pb.oracle_floor[c]}});
    meta["conditions"] = conds;
    json scheds = json::object();
    for (const auto& m : cfg.methods) {
        const NoiseSchedule grid = realize_grid(m.grid ? *m.grid : cfg.noise_grid);
        const TemperingSchedule temper = realize_tempering(m.tempering, grid);
        scheds[m.name] = {{"levels", grid.levels}, {"exponents", temper.exponents}};
    }
    meta["schedules"] = scheds;
    json failures = json::array();
    for (const auto& c : cells)
        if (c.failed)
            failures.push_back({{"condition_id", c.condition},
                                {"method", c.method},
                                {"n_particles", c.n_particles},
                                {"repetition", c.repetition},
                                {"error", c.error}});
    meta["failures"] = failures;
    meta["pooling"] = "equal-weight systematic resample per run, truncated to pool_target";

    std::ofstream out(fs::path(out_dir) / "meta.json", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write meta.json");
    out << meta.dump(2) << '\n';
}

std::vector<CellResult> read_results_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty results file: " + path);
    const std::string expected =
        "condition_id,method,n_particles,repetition,swd,mean_swd,ess_final,samples_pooled,"
        "wall_ms,seed,config_hash";
    if (line != expected) throw std::runtime_error("unrecognized results header in " + path);
    std::vector<CellResult> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) f.push_back(tok);
        if (f.size() != 11) throw std::runtime_error("malformed results row: " + line);
        CellResult c;
        c.condition = std::stoull(f[0]);
        c.method = f[1];
        c.n_particles = std::stoull(f[2]);
        c.repetition = std::stoull(f[3]);
        c.swd = std::stod(f[4]);
        c.mean_swd = std::stod(f[5]);
        c.ess_final = std::stod(f[6]);
        c.samples_pooled = std::stoull(f[7]);
        c.wall_ms = std::stod(f[8]);
        c.seed = std::stoull(f[9]);
        c.failed = std::isnan(c.swd);
        rows.push_back(std::move(c));
    }
    return rows;
}

RunConfig default_config() {
    RunConfig c;
    c.experiment = "toy2d";
    c.seed = 20250801;

    MethodSpec tgd;
    tgd.name = "tgd";
    tgd.sampler = "tgd";
    tgd.module = "dps";
    tgd.inner_steps = 1;

    MethodSpec ideal = tgd;
    ideal.name = "ideal_tgd";
    ideal.module = "exact";

    MethodSpec atgd = tgd;
    atgd.name = "atgd";
    atgd.sampler = "atgd";
    atgd.rho = 0.5;

    MethodSpec dps;
    dps.name = "dps";
    dps.sampler = "tgd";
    dps.module = "dps";
    dps.inner_steps = 20;
    dps.grid = GridSpec{1, 80.0, 0.002, 7.0};
    dps.resample.trigger = "never";

    // Same outer grid and one-step module as tgd, but the exponent is pinned
    // at 1 everywhere, so weighting is trivial and nothing resamples: pure
    // repeated reconstruct/re-noise.
    MethodSpec dps_daps;
    dps_daps.name = "dps_daps";
    dps_daps.sampler = "tgd";
    dps_daps.module = "dps";
    dps_daps.inner_steps = 1;
    dps_daps.tempering.lambda_start = 1.0;
    dps_daps.resample.trigger = "never";

    c.methods = {tgd, ideal, atgd, dps, dps_daps};
    return c;
}

}  // namespace tgd::harness
