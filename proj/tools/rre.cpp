// Command-line front end: train / infer / bench / synth.

#include <CLI11.hpp>

#include "rre/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Reinforced recurrent encoder forecaster"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;

    auto* train = app.add_subcommand("train", "Train per the config and write metrics");
    train->add_option("--config", config_path, "run configuration file")->required();
    auto* seed_opt = train->add_option("--seed", seed, "override the config seed list");

    std::string checkpoint, input_csv, output_csv;
    auto* infer = app.add_subcommand("infer", "Predict from a trained checkpoint");
    infer->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    infer->add_option("--input", input_csv, "input CSV (original scale)")->required();
    infer->add_option("--output", output_csv, "prediction CSV to write")->required();

    std::string bench_config;
    auto* bench = app.add_subcommand("bench", "Compare rre against the naive baselines");
    bench->add_option("--config", bench_config, "run configuration file")->required();

    std::string synth_out;
    int synth_steps = 2000;
    double synth_noise = 0.25;
    std::uint64_t synth_seed = 1;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset CSV");
    synth->add_option("--out", synth_out, "output CSV path")->required();
    synth->add_option("--steps", synth_steps, "number of time steps");
    synth->add_option("--noise-frac", synth_noise, "fraction of corrupted steps");
    synth->add_option("--seed", synth_seed, "generator seed");

    CLI11_PARSE(app, argc, argv);
    seed_set = seed_opt->count() > 0;

    if (train->parsed()) {
        return rre::cli::cmd_train(config_path,
                                   seed_set ? std::optional<std::uint64_t>(seed) : std::nullopt);
    }
    if (infer->parsed()) {
        return rre::cli::cmd_infer(checkpoint, input_csv, output_csv);
    }
    if (bench->parsed()) {
        return rre::cli::cmd_bench(bench_config);
    }
    if (synth->parsed()) {
        return rre::cli::cmd_synth(synth_out, synth_steps, synth_noise, synth_seed);
    }
    return rre::cli::kExitRuntime;
}
