#include "rre/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <memory>
#include <fstream>

#include <json.hpp>

#include "rre/checkpoint.hpp"
#include "rre/errors.hpp"
#include "rre/log.hpp"

namespace rre::cli {

namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

data::RawSeries load_series(const RunConfig& cfg) {
    if (cfg.source == "csv") return data::load_csv(cfg.csv_path, cfg.target);
    return data::make_synthetic(cfg.synth);
}

struct SeedResult {
    double mse = 0.0;
    double mae = 0.0;
};

void write_log_csv(const std::string& path, const trainer::TrainLog& log) {
    std::ofstream os(path);
    if (!os) throw TrainingError("cannot write training log: " + path);
    os << "round,epoch,phase,train_loss,val_loss,mean_reward\n";
    os.precision(17);
    for (const auto& row : log) {
        os << row.round << "," << row.epoch << "," << row.phase << "," << row.train_loss << ","
           << row.val_loss << "," << row.mean_reward << "\n";
    }
}

ParamStore make_meta_store(const RunConfig& cfg, const env::EnvConfig& env_cfg,
                           const agent::AgentConfig& agent_cfg, int target, bool use_policy) {
    ParamStore meta;
    auto put = [&meta](const std::string& name, double v) {
        meta.add(name, Tensor::scalar(v));
    };
    put("meta.cell", static_cast<double>(static_cast<int>(env_cfg.cell)));
    put("meta.d_in", env_cfg.d_in);
    put("meta.d_h", env_cfg.d_h);
    put("meta.horizon", env_cfg.horizon);
    put("meta.K", env_cfg.skip_window);
    put("meta.alpha", env_cfg.alpha);
    put("meta.c", env_cfg.c);
    put("meta.T", cfg.T);
    put("meta.target", target);
    put("meta.use_policy", use_policy ? 1.0 : 0.0);
    put("meta.agent_d_e", agent_cfg.d_e);
    put("meta.agent_layers", agent_cfg.layers);
    put("meta.agent_heads", agent_cfg.heads);
    put("meta.agent_ff", agent_cfg.ff);
    put("meta.agent_dropout", agent_cfg.dropout);
    return meta;
}

ParamStore make_scaler_store(const data::Scaler& scaler) {
    ParamStore s;
    s.add("scaler.min", Tensor::vector(std::vector<double>(scaler.min.begin(), scaler.min.end())));
    s.add("scaler.max", Tensor::vector(std::vector<double>(scaler.max.begin(), scaler.max.end())));
    return s;
}

SeedResult run_one_seed(const RunConfig& cfg0, const env::CellKind cell, std::uint64_t seed,
                        const data::RawSeries& series, const std::string& out_prefix,
                        bool write_artifacts) {
    RunConfig cfg = cfg0;
    cfg.env.cell = cell;
    cfg.env.d_in = series.dims();
    cfg.agent.d_in = series.dims();
    cfg.train.seed = seed;
    cfg.agent.validate();

    trainer::Dataset ds = trainer::prepare_dataset(series, cfg.T, cfg.H);

    SeedResult out;
    trainer::TrainLog log;
    ParamStore env_params;
    agent::AgentParams agent_params;
    bool use_policy = false;

    if (cfg.mode == Mode::Rre) {
        trainer::CoEvolveResult res =
            trainer::co_evolve(ds, cfg.env, cfg.agent, cfg.dts, cfg.ppo, cfg.train);
        env_params = std::move(res.env_params);
        agent_params = std::move(res.agent_params);
        use_policy = res.use_policy;
        log = std::move(res.log);
    } else {
        trainer::BaselineResult res =
            trainer::train_baseline(ds, cfg.env, cfg.train, cfg.mode == Mode::NaiveLast);
        env_params = std::move(res.env_params);
        log = std::move(res.log);
    }

    trainer::TestMetrics metrics;
    if (use_policy) {
        trainer::PolicyActionProvider provider(agent_params.policy, cfg.agent);
        metrics = trainer::evaluate_test(env_params, cfg.env, ds, provider);
    } else {
        trainer::FixedActionProvider provider(cfg.T, false);
        metrics = trainer::evaluate_test(env_params, cfg.env, ds, provider);
    }
    out.mse = metrics.mse;
    out.mae = metrics.mae;

    if (write_artifacts) {
        write_log_csv(out_prefix + "_log.csv", log);
        ParamStore meta = make_meta_store(cfg, cfg.env, cfg.agent, ds.target, use_policy);
        ParamStore scaler = make_scaler_store(ds.scaler);
        std::vector<std::pair<std::string, const ParamStore*>> sections;
        sections.emplace_back("meta", &meta);
        sections.emplace_back("scaler", &scaler);
        sections.emplace_back("env", &env_params);
        if (cfg.mode == Mode::Rre) {
            sections.emplace_back("policy", &agent_params.policy);
            sections.emplace_back("value", &agent_params.value);
        }
        save_checkpoint(out_prefix + ".rrec", sections);
    }
    return out;
}

ordered_json metric_block(const std::vector<double>& values) {
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    const double std_dev = values.size() > 1 ? std::sqrt(var / static_cast<double>(values.size() - 1)) : 0.0;
    ordered_json block;
    block["mean"] = mean;
    block["std"] = std_dev;
    block["per_seed"] = values;
    return block;
}

}  // namespace

double improvement_pct(double baseline, double ours) {
    if (baseline == 0.0) return 0.0;
    return (baseline - ours) / baseline * 100.0;
}

std::string run_train(const RunConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    data::RawSeries series = load_series(cfg);

    std::vector<double> mses, maes;
    for (std::uint64_t seed : cfg.seeds) {
        const std::string prefix =
            cfg.out_dir + "/" + to_string(cfg.mode) + "_seed" + std::to_string(seed);
        SeedResult r = run_one_seed(cfg, cfg.env.cell, seed, series, prefix, true);
        mses.push_back(r.mse);
        maes.push_back(r.mae);
        logging::info("seed " + std::to_string(seed) + ": test mse " + std::to_string(r.mse) +
                      ", mae " + std::to_string(r.mae));
    }

    ordered_json doc;
    doc["mode"] = to_string(cfg.mode);
    doc["cell"] = env::to_string(cfg.env.cell);
    ordered_json seeds = ordered_json::array();
    for (auto s : cfg.seeds) seeds.push_back(s);
    doc["seeds"] = seeds;
    doc["mse"] = metric_block(mses);
    doc["mae"] = metric_block(maes);
    const std::string text = doc.dump(2) + "\n";
    std::ofstream os(cfg.out_dir + "/metrics.json", std::ios::trunc);
    os << text;
    return text;
}

std::string run_bench(const RunConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    data::RawSeries series = load_series(cfg);

    struct Row {
        std::string backbone;
        std::string mode;
        std::uint64_t seed;
        double mse, mae;
    };
    std::vector<Row> rows;
    const std::vector<Mode> modes = {Mode::NaiveAll, Mode::NaiveLast, Mode::Rre};
    for (env::CellKind cell : cfg.cells) {
        for (Mode mode : modes) {
            for (std::uint64_t seed : cfg.seeds) {
                RunConfig c = cfg;
                c.mode = mode;
                SeedResult r = run_one_seed(c, cell, seed, series, "", false);
                rows.push_back({env::to_string(cell), to_string(mode), seed, r.mse, r.mae});
            }
        }
    }
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        if (a.backbone != b.backbone) return a.backbone < b.backbone;
        if (a.mode != b.mode) return a.mode < b.mode;
        return a.seed < b.seed;
    });

    std::ostringstream os;
    os.precision(17);
    os << "backbone,mode,seed,mse,mae,improvement_mse_pct,improvement_mae_pct\n";
    for (env::CellKind cell : cfg.cells) {
        const std::string backbone = env::to_string(cell);
        auto mode_mean = [&](const std::string& mode, double Row::*field) {
            double sum = 0.0;
            int n = 0;
            for (const auto& r : rows) {
                if (r.backbone == backbone && r.mode == mode) {
                    sum += r.*field;
                    ++n;
                }
            }
            return sum / std::max(1, n);
        };
        const double rre_mse = mode_mean("rre", &Row::mse);
        const double rre_mae = mode_mean("rre", &Row::mae);
        for (const auto& r : rows) {
            if (r.backbone != backbone) continue;
            os << r.backbone << "," << r.mode << "," << r.seed << "," << r.mse << "," << r.mae
               << ",,\n";
        }
        for (const std::string& mode : {std::string("naive-all"), std::string("naive-last"),
                                        std::string("rre")}) {
            const double m_mse = mode_mean(mode, &Row::mse);
            const double m_mae = mode_mean(mode, &Row::mae);
            os << backbone << "," << mode << ",mean," << m_mse << "," << m_mae << ","
               << improvement_pct(m_mse, rre_mse) << "," << improvement_pct(m_mae, rre_mae)
               << "\n";
        }
    }
    const std::string text = os.str();
    std::ofstream f(cfg.out_dir + "/bench.csv", std::ios::trunc);
    f << text;
    return text;
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed_override) {
    try {
        RunConfig cfg = load_config(config_path);
        if (seed_override) cfg.seeds = {*seed_override};
        run_train(cfg);
        return kExitOk;
    } catch (const ConfigError& e) {
        logging::error(e.what());
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
}

int cmd_bench(const std::string& config_path) {
    try {
        RunConfig cfg = load_config(config_path);
        run_bench(cfg);
        return kExitOk;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
}

int cmd_infer(const std::string& checkpoint_path, const std::string& input_csv,
              const std::string& output_csv) {
    try {
        auto sections = load_checkpoint(checkpoint_path);
        auto need = [&](const char* name) -> ParamStore& {
            auto it = sections.find(name);
            if (it == sections.end()) {
                throw CheckpointError(std::string("checkpoint lacks section ") + name);
            }
            return it->second;
        };
        ParamStore& meta = need("meta");
        ParamStore& scaler_store = need("scaler");
        ParamStore& env_params = need("env");

        env::EnvConfig env_cfg;
        env_cfg.cell = static_cast<env::CellKind>(static_cast<int>(meta.value("meta.cell").item()));
        env_cfg.d_in = static_cast<int>(meta.value("meta.d_in").item());
        env_cfg.d_h = static_cast<int>(meta.value("meta.d_h").item());
        env_cfg.horizon = static_cast<int>(meta.value("meta.horizon").item());
        env_cfg.skip_window = static_cast<int>(meta.value("meta.K").item());
        env_cfg.alpha = meta.value("meta.alpha").item();
        env_cfg.c = meta.value("meta.c").item();
        const int T = static_cast<int>(meta.value("meta.T").item());
        const int target = static_cast<int>(meta.value("meta.target").item());
        const bool use_policy = meta.value("meta.use_policy").item() != 0.0;

        data::Scaler scaler;
        {
            const Tensor& mn = scaler_store.value("scaler.min");
            const Tensor& mx = scaler_store.value("scaler.max");
            scaler.min.assign(mn.data(), mn.data() + mn.size());
            scaler.max.assign(mx.data(), mx.data() + mx.size());
        }

        data::RawSeries input = data::load_csv(input_csv);
        if (input.dims() != env_cfg.d_in) {
            throw ShapeError("input CSV has " + std::to_string(input.dims()) +
                             " variables, checkpoint expects " + std::to_string(env_cfg.d_in));
        }
        if (input.steps() < T) {
            throw ShapeError("input CSV needs at least T=" + std::to_string(T) + " rows");
        }
        Tensor scaled = scaler.transform(input.values);

        agent::AgentConfig agent_cfg;
        std::unique_ptr<trainer::ActionProvider> provider;
        if (use_policy) {
            agent_cfg.d_e = static_cast<int>(meta.value("meta.agent_d_e").item());
            agent_cfg.layers = static_cast<int>(meta.value("meta.agent_layers").item());
            agent_cfg.heads = static_cast<int>(meta.value("meta.agent_heads").item());
            agent_cfg.ff = static_cast<int>(meta.value("meta.agent_ff").item());
            agent_cfg.dropout = meta.value("meta.agent_dropout").item();
            agent_cfg.skip_window = env_cfg.skip_window;
            agent_cfg.d_h = env_cfg.d_h;
            agent_cfg.d_in = env_cfg.d_in;
            provider = std::make_unique<trainer::PolicyActionProvider>(need("policy"), agent_cfg);
        } else {
            provider = std::make_unique<trainer::FixedActionProvider>(T, false);
        }

        std::ofstream pred_os(output_csv, std::ios::trunc);
        if (!pred_os) throw TrainingError("cannot write predictions: " + output_csv);
        pred_os.precision(17);
        for (int h = 1; h <= env_cfg.horizon; ++h) {
            pred_os << (h > 1 ? "," : "") << "h" << h;
        }
        pred_os << "\n";

        const std::string action_csv = output_csv + ".actions.csv";
        std::ofstream act_os(action_csv, std::ios::trunc);
        act_os << "t,u,k\n";

        const int n_windows = input.steps() - T + 1;
        for (int w = 0; w < n_windows; ++w) {
            std::vector<double> vals;
            vals.reserve(static_cast<size_t>(T) * env_cfg.d_in);
            for (int r = w; r < w + T; ++r) {
                for (int c = 0; c < env_cfg.d_in; ++c) vals.push_back(scaled.at(r, c));
            }
            Tensor X = Tensor::matrix(T, env_cfg.d_in, std::move(vals));
            std::vector<env::Action> actions;
            Tensor pred = trainer::infer_scaled(env_params, env_cfg, X, *provider, &actions);
            for (int h = 0; h < pred.size(); ++h) {
                pred_os << (h > 0 ? "," : "") << scaler.inverse_value(pred[h], target);
            }
            pred_os << "\n";
            for (size_t t = 0; t < actions.size(); ++t) {
                act_os << (t + 1) << "," << actions[t].u << "," << actions[t].k << "\n";
            }
        }
        return kExitOk;
    } catch (const CheckpointError& e) {
        std::fprintf(stderr, "checkpoint error: %s\n", e.what());
        return kExitCheckpoint;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
}

int cmd_synth(const std::string& out_csv, int steps, double noise_frac, std::uint64_t seed) {
    try {
        data::SynthConfig cfg;
        cfg.steps = steps;
        cfg.noise_frac = noise_frac;
        cfg.seed = seed;
        data::RawSeries series = data::make_synthetic(cfg);
        data::write_csv(out_csv, series);
        return kExitOk;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
}

}  // namespace rre::cli
