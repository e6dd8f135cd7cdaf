#include "hiercva/config.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "hiercva/errors.hpp"

namespace hiercva {

using nlohmann::json;

namespace {

VasicekParams vasicek_from(const json& j) {
    VasicekParams p;
    p.a = j.at("a").get<double>();
    p.b = j.at("b").get<double>();
    p.sigma = j.at("sigma").get<double>();
    p.r0 = j.at("r0").get<double>();
    return p;
}

CirParams cir_from(const json& j) {
    CirParams p;
    p.alpha = j.at("alpha").get<double>();
    p.delta = j.at("delta").get<double>();
    p.nu = j.at("nu").get<double>();
    p.gamma0 = j.at("gamma0").get<double>();
    return p;
}

json vasicek_to(const VasicekParams& p) {
    return json{{"a", p.a}, {"b", p.b}, {"sigma", p.sigma}, {"r0", p.r0}};
}

json cir_to(const CirParams& p) {
    return json{{"alpha", p.alpha}, {"delta", p.delta}, {"nu", p.nu}, {"gamma0", p.gamma0}};
}

}  // namespace

PipelineConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw config_error(std::string("config: invalid JSON: ") + e.what());
    }
    PipelineConfig cfg;
    try {
        cfg.seed = j.value("seed", 0ULL);
        cfg.output_dir = j.value("output_dir", std::string("out"));

        const json& jm = j.at("model");
        for (const auto& je : jm.at("economies")) {
            cfg.model.rates.push_back(vasicek_from(je));
            if (cfg.model.rates.size() > 1) {
                const json& jfx = je.at("fx");
                FxParams f;
                f.sigma = jfx.at("sigma").get<double>();
                f.rho = jfx.at("rho").get<double>();
                f.chi0 = jfx.at("chi0").get<double>();
                cfg.model.fx.push_back(f);
            }
        }
        cfg.model.credit.push_back(cir_from(jm.at("bank")));
        for (const auto& jc : jm.at("clients")) cfg.model.credit.push_back(cir_from(jc));
        if (jm.contains("brownian_correlation") && !jm["brownian_correlation"].is_null()) {
            for (const auto& row : jm["brownian_correlation"])
                for (const auto& v : row)
                    cfg.model.brownian_correlation.push_back(v.get<double>());
        }

        const json& jg = j.at("grid");
        cfg.grid.n_steps = jg.at("pricing_steps").get<int>();
        cfg.grid.substeps = jg.value("substeps", 1);
        cfg.grid.dt = jg.value("dt_years", 1.0);

        if (j.contains("book")) {
            const json& jb = j["book"];
            if (jb.contains("file")) {
                cfg.book.from_file = true;
                cfg.book.file = jb["file"].get<std::string>();
            } else if (jb.contains("generate")) {
                const json& gg = jb["generate"];
                cfg.book.gen.count = gg.value("count", 10);
                cfg.book.gen.notional_min = gg.value("notional_min", 1.0);
                cfg.book.gen.notional_max = gg.value("notional_max", 100.0);
            }
        }

        if (j.contains("simulation")) {
            cfg.sim.paths = j["simulation"].value("paths", 256);
            cfg.sim.replicas = j["simulation"].value("replicas", 1);
        }

        if (j.contains("training")) {
            const json& jt = j["training"];
            cfg.training.base.epochs = jt.value("epochs", 8);
            cfg.training.base.n_batches = jt.value("batches", 32);
            cfg.training.base.learning_rate = jt.value("learning_rate", 0.001);
            cfg.training.base.adam = jt.value("optimizer", std::string("adam")) == "adam";
            cfg.training.base.hidden_layers = jt.value("hidden_layers", 2);
            cfg.training.base.width = jt.value("width", 64);
            cfg.training.base.activation =
                activation_from_string(jt.value("activation", std::string("tanh")));
            cfg.training.base.ridge = jt.value("ridge", 1e-8);
            cfg.training.label_kind = jt.value("label_kind", std::string("defaults"));
            cfg.training.collect_qr_trace = jt.value("collect_qr_trace", false);
        }
        cfg.training.base.seed = cfg.seed;

        if (j.contains("validation")) {
            const json& jv = j["validation"];
            cfg.validation.twin = jv.value("twin", true);
            cfg.validation.nested = jv.value("nested", false);
            cfg.validation.inner_paths = jv.value("inner_paths", 0);
            cfg.validation.paths = jv.value("paths", 512);
            cfg.validation.nested_states = jv.value("nested_states", 128);
            if (jv.contains("steps"))
                for (const auto& s : jv["steps"]) cfg.validation.steps.push_back(s.get<int>());
        }

        if (j.contains("planner")) {
            const json& jp = j["planner"];
            cfg.planner.budget = jp.value("budget", 0.0);
            if (jp.contains("bounds")) {
                const json& jb = jp["bounds"];
                cfg.planner.has_bounds = true;
                BoundParams& b = cfg.planner.bounds;
                b.b1 = jb.value("b1", 0.0);
                b.b2 = jb.value("b2", 0.0);
                b.l1 = jb.value("l1", 0.0);
                b.l2 = jb.value("l2", 0.0);
                b.l_bar = jb.value("l_bar", 0.0);
                b.l_prime = jb.value("l_prime", 0.0);
                b.diameter = jb.value("diameter", 0.0);
                b.dim = jb.value("dim", 1LL);
                b.epsilon = jb.value("epsilon", 0.0);
                b.delta = jb.value("delta", 0.0);
                b.alpha = jb.value("alpha", 0.0);
                b.u = jb.value("u", 0.5);
            }
        }

        if (j.contains("ard")) {
            const json& ja = j["ard"];
            cfg.ard.dgp_draws = ja.value("dgp_draws", 60);
            cfg.ard.paths_per_draw = ja.value("paths_per_draw", 128);
            cfg.ard.subsamples = ja.value("subsamples", 10);
            cfg.ard.fraction = ja.value("fraction", 0.8);
            cfg.ard.restarts = ja.value("restarts", 8);
            cfg.ard.aggregate_families = ja.value("aggregate_families", true);
            if (ja.contains("prior")) {
                const json& jp = ja["prior"];
                cfg.ard.prior.vol_lo = jp.value("vol_lo", 0.5);
                cfg.ard.prior.vol_hi = jp.value("vol_hi", 1.5);
                cfg.ard.prior.level_lo = jp.value("level_lo", 0.5);
                cfg.ard.prior.level_hi = jp.value("level_hi", 2.0);
                cfg.ard.prior.speed_lo = jp.value("speed_lo", 0.5);
                cfg.ard.prior.speed_hi = jp.value("speed_hi", 1.5);
            }
        }
    } catch (const json::exception& e) {
        throw config_error(std::string("config: ") + e.what());
    }
    return cfg;
}

PipelineConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config(text);
}

void PipelineConfig::validate() const {
    model.validate();
    grid.validate();
    if (book.from_file && !std::filesystem::exists(book.file))
        throw config_error("config: book file does not exist: " + book.file);
    if (sim.paths < 1 || sim.replicas < 1)
        throw config_error("config: simulation paths and replicas must be >= 1");
    const long long total = static_cast<long long>(sim.paths) * sim.replicas;
    if (total % training.base.n_batches != 0)
        throw config_error("config: batch count must divide M*N");
    if (training.label_kind != "defaults" && training.label_kind != "intensity")
        throw config_error("config: label_kind must be 'defaults' or 'intensity'");
    for (int s : validation.steps)
        if (s < 1 || s > grid.n_steps)
            throw config_error("config: validation steps must lie in {1..n}");
    if (planner.has_bounds) planner.bounds.validate();
}

std::vector<int> PipelineConfig::validation_steps() const {
    if (!validation.steps.empty()) return validation.steps;
    const int n = grid.n_steps;
    std::vector<int> steps{std::max(1, n / 4), std::max(1, n / 2), std::max(1, (3 * n) / 4)};
    steps.erase(std::unique(steps.begin(), steps.end()), steps.end());
    return steps;
}

std::string dump_config(const PipelineConfig& cfg) {
    json jm;
    json economies = json::array();
    for (int e = 0; e < cfg.model.n_economies(); ++e) {
        json je = vasicek_to(cfg.model.rates[e]);
        if (e > 0) {
            const FxParams& f = cfg.model.fx[e - 1];
            je["fx"] = json{{"sigma", f.sigma}, {"rho", f.rho}, {"chi0", f.chi0}};
        }
        economies.push_back(je);
    }
    jm["economies"] = economies;
    jm["bank"] = cir_to(cfg.model.credit[0]);
    json clients = json::array();
    for (std::size_t c = 1; c < cfg.model.credit.size(); ++c)
        clients.push_back(cir_to(cfg.model.credit[c]));
    jm["clients"] = clients;
    if (!cfg.model.brownian_correlation.empty()) {
        const int d = cfg.model.n_factors();
        json rows = json::array();
        for (int i = 0; i < d; ++i) {
            json row = json::array();
            for (int k = 0; k < d; ++k) row.push_back(cfg.model.brownian_correlation[i * d + k]);
            rows.push_back(row);
        }
        jm["brownian_correlation"] = rows;
    }

    json j{
        {"seed", cfg.seed},
        {"output_dir", cfg.output_dir},
        {"model", jm},
        {"grid",
         {{"pricing_steps", cfg.grid.n_steps},
          {"substeps", cfg.grid.substeps},
          {"dt_years", cfg.grid.dt}}},
        {"simulation", {{"paths", cfg.sim.paths}, {"replicas", cfg.sim.replicas}}},
        {"training",
         {{"epochs", cfg.training.base.epochs},
          {"batches", cfg.training.base.n_batches},
          {"learning_rate", cfg.training.base.learning_rate},
          {"optimizer", cfg.training.base.adam ? "adam" : "sgd"},
          {"hidden_layers", cfg.training.base.hidden_layers},
          {"width", cfg.training.base.width},
          {"activation", to_string(cfg.training.base.activation)},
          {"ridge", cfg.training.base.ridge},
          {"label_kind", cfg.training.label_kind},
          {"collect_qr_trace", cfg.training.collect_qr_trace}}},
        {"validation",
         {{"twin", cfg.validation.twin},
          {"nested", cfg.validation.nested},
          {"inner_paths", cfg.validation.inner_paths},
          {"paths", cfg.validation.paths},
          {"nested_states", cfg.validation.nested_states},
          {"steps", cfg.validation.steps}}},
    };
    if (cfg.book.from_file)
        j["book"] = json{{"file", cfg.book.file}};
    else
        j["book"] = json{{"generate",
                          {{"count", cfg.book.gen.count},
                           {"notional_min", cfg.book.gen.notional_min},
                           {"notional_max", cfg.book.gen.notional_max}}}};
    j["planner"] = json{{"budget", cfg.planner.budget}};
    j["ard"] = json{{"dgp_draws", cfg.ard.dgp_draws},
                    {"paths_per_draw", cfg.ard.paths_per_draw},
                    {"subsamples", cfg.ard.subsamples},
                    {"fraction", cfg.ard.fraction},
                    {"restarts", cfg.ard.restarts},
                    {"aggregate_families", cfg.ard.aggregate_families}};
    return j.dump(2);
}

std::string config_hash(const PipelineConfig& cfg) {
    // The hash identifies the experiment; where the artifacts land does not
    // change the results.
    PipelineConfig canonical = cfg;
    canonical.output_dir.clear();
    const std::string text = dump_config(canonical);
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace hiercva
