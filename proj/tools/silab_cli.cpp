#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "silab/harness.hpp"

int main(int argc, char** argv) {
    CLI::App app{"silab: scale-invariant training laboratory"};
    app.require_subcommand(1);

    std::vector<std::string> scopes;
    auto* verify = app.add_subcommand("verify", "run the verification suites");
    verify->add_option("--scope", scopes,
                       "scopes to run (default all): core_tensor si_losses optimizers "
                       "homogeneity clipstats sinet harness");

    std::string train_config;
    auto* train = app.add_subcommand("train", "run one configured training");
    train->add_option("--config", train_config, "experiment config file")->required();

    std::string sweep_config, scales_csv;
    auto* sweep = app.add_subcommand("sweep", "init-scale x optimizer-variant sweep");
    sweep->add_option("--config", sweep_config, "experiment config file")->required();
    sweep->add_option("--scales", scales_csv, "comma-separated init scales")->required();

    std::string dist_path;
    double clip_c = 2.0;
    auto* clip = app.add_subcommand("clipstats", "clipped-mean statistics of a distribution");
    clip->add_option("--dist", dist_path, "value,weight CSV file")->required();
    clip->add_option("--c", clip_c, "clip factor C > 1")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (verify->parsed()) return silab::cmd_verify(scopes);
        if (train->parsed()) {
            auto cfg = silab::load_config(train_config);
            auto summary = silab::cmd_train(cfg);
            std::cout << summary.to_json();
            return summary.diverged ? 2 : 0;
        }
        if (sweep->parsed()) {
            auto cfg = silab::load_config(sweep_config);
            std::vector<double> scales;
            std::stringstream ss(scales_csv);
            std::string tok;
            while (std::getline(ss, tok, ',')) scales.push_back(std::stod(tok));
            std::cout << silab::cmd_sweep(cfg, scales);
            return 0;
        }
        if (clip->parsed()) {
            std::cout << silab::cmd_clipstats(dist_path, clip_c);
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
