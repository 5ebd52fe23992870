#include "rre/config.hpp"

#include <fstream>
#include <sstream>

#include "rre/errors.hpp"

namespace rre::cli {

Mode mode_from_string(const std::string& s) {
    if (s == "rre") return Mode::Rre;
    if (s == "naive-all") return Mode::NaiveAll;
    if (s == "naive-last") return Mode::NaiveLast;
    throw ConfigError("unknown mode: " + s);
}

std::string to_string(Mode m) {
    switch (m) {
        case Mode::Rre: return "rre";
        case Mode::NaiveAll: return "naive-all";
        case Mode::NaiveLast: return "naive-last";
    }
    return "?";
}

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

int to_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        int r = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return r;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' expects an integer, got '" + v + "'");
    }
}

double to_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return r;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' expects a number, got '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("key '" + key + "' expects true/false, got '" + v + "'");
}

std::vector<std::string> split_commas(const std::string& v) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : v) {
        if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(trim(cur));
    return out;
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("bad section header at line " + std::to_string(lineno));
            section = line.substr(1, line.size() - 2);
            if (section != "data" && section != "env" && section != "agent" && section != "dts" &&
                section != "ppo" && section != "train" && section != "run") {
                throw ConfigError("unknown section [" + section + "]");
            }
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("expected key = value at line " + std::to_string(lineno));
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (section.empty()) throw ConfigError("key '" + key + "' outside any section");

        if (section == "data") {
            if (key == "source") {
                if (val != "synth" && val != "csv") throw ConfigError("data source must be synth or csv");
                cfg.source = val;
            } else if (key == "csv") {
                cfg.csv_path = val;
            } else if (key == "target") {
                cfg.target = val;
            } else if (key == "T") {
                cfg.T = to_int(key, val);
            } else if (key == "H") {
                cfg.H = to_int(key, val);
            } else if (key == "synth_steps") {
                cfg.synth.steps = to_int(key, val);
            } else if (key == "synth_noise_frac") {
                cfg.synth.noise_frac = to_double(key, val);
            } else if (key == "synth_noise_amp") {
                cfg.synth.noise_amp = to_double(key, val);
            } else if (key == "synth_obs_noise") {
                cfg.synth.obs_noise = to_double(key, val);
            } else if (key == "synth_lag") {
                cfg.synth.lag = to_int(key, val);
            } else if (key == "synth_seed") {
                cfg.synth.seed = static_cast<std::uint64_t>(to_int(key, val));
            } else {
                throw ConfigError("unknown key '" + key + "' in section [data]");
            }
        } else if (section == "env") {
            if (key == "cell") {
                cfg.env.cell = env::cell_kind_from_string(val);
            } else if (key == "d_h") {
                cfg.env.d_h = to_int(key, val);
            } else if (key == "K") {
                cfg.env.skip_window = to_int(key, val);
            } else if (key == "alpha") {
                cfg.env.alpha = to_double(key, val);
            } else if (key == "c") {
                cfg.env.c = to_double(key, val);
            } else {
                throw ConfigError("unknown key '" + key + "' in section [env]");
            }
        } else if (section == "agent") {
            if (key == "d_e") {
                cfg.agent.d_e = to_int(key, val);
            } else if (key == "layers") {
                cfg.agent.layers = to_int(key, val);
            } else if (key == "heads") {
                cfg.agent.heads = to_int(key, val);
            } else if (key == "ff") {
                cfg.agent.ff = to_int(key, val);
            } else if (key == "dropout") {
                cfg.agent.dropout = to_double(key, val);
            } else {
                throw ConfigError("unknown key '" + key + "' in section [agent]");
            }
        } else if (section == "dts") {
            if (key == "beta") {
                cfg.dts.beta = to_double(key, val);
            } else if (key == "lambda_min") {
                cfg.dts.lambda_min = to_double(key, val);
            } else if (key == "lambda_max") {
                cfg.dts.lambda_max = to_double(key, val);
            } else if (key == "mu") {
                cfg.dts.mu = to_double(key, val);
            } else if (key == "omega") {
                cfg.dts.omega = to_int(key, val);
            } else if (key == "minibatch") {
                cfg.dts.minibatch = to_int(key, val);
            } else {
                throw ConfigError("unknown key '" + key + "' in section [dts]");
            }
        } else if (section == "ppo") {
            if (key == "clip") {
                cfg.ppo.clip = to_double(key, val);
            } else if (key == "gamma") {
                cfg.ppo.gamma = to_double(key, val);
            } else if (key == "lr_policy") {
                cfg.ppo.lr_policy = to_double(key, val);
            } else if (key == "lr_value") {
                cfg.ppo.lr_value = to_double(key, val);
            } else if (key == "agent_epochs") {
                cfg.ppo.agent_epochs = to_int(key, val);
            } else {
                throw ConfigError("unknown key '" + key + "' in section [ppo]");
            }
        } else if (section == "train") {
            if (key == "rounds") {
                cfg.train.rounds = to_int(key, val);
            } else if (key == "env_epochs") {
                cfg.train.env_epochs = to_int(key, val);
            } else if (key == "pretrain_epochs") {
                cfg.train.pretrain_epochs = to_int(key, val);
            } else if (key == "pretrain_patience") {
                cfg.train.pretrain_patience = to_int(key, val);
            } else if (key == "env_patience") {
                cfg.train.env_patience = to_int(key, val);
            } else if (key == "round_patience") {
                cfg.train.round_patience = to_int(key, val);
            } else if (key == "min_improvement") {
                cfg.train.min_improvement = to_double(key, val);
            } else if (key == "batch_size") {
                cfg.train.batch_size = to_int(key, val);
            } else if (key == "lr_env") {
                cfg.train.lr_env = to_double(key, val);
            } else if (key == "stochastic_inference") {
                cfg.train.stochastic_inference = to_bool(key, val);
            } else {
                throw ConfigError("unknown key '" + key + "' in section [train]");
            }
        } else if (section == "run") {
            if (key == "mode") {
                cfg.mode = mode_from_string(val);
            } else if (key == "out") {
                cfg.out_dir = val;
            } else if (key == "seeds") {
                cfg.seeds.clear();
                for (const auto& s : split_commas(val)) {
                    cfg.seeds.push_back(static_cast<std::uint64_t>(to_int(key, s)));
                }
                if (cfg.seeds.empty()) throw ConfigError("seeds list is empty");
            } else if (key == "cells") {
                cfg.cells.clear();
                for (const auto& s : split_commas(val)) {
                    cfg.cells.push_back(env::cell_kind_from_string(s));
                }
            } else {
                throw ConfigError("unknown key '" + key + "' in section [run]");
            }
        }
    }
    cfg.finalize();
    return cfg;
}

void RunConfig::finalize() {
    if (source == "csv" && csv_path.empty()) throw ConfigError("csv source needs a csv path");
    if (T < 1 || H < 1) throw ConfigError("T and H must be positive");
    env.horizon = H;
    dts.alpha = env.alpha;      // shared reward sensitivity
    dts.gamma = ppo.gamma;      // shared discount
    agent.skip_window = env.skip_window;
    agent.d_h = env.d_h;
    // agent.d_in is set once the data dimensionality is known
    env.validate();
    dts.validate();
    ppo.validate();
    train.validate();
    if (out_dir.empty()) throw ConfigError("output directory must not be empty");
}

RunConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_config_text(ss.str());
}

}  // namespace rre::cli
