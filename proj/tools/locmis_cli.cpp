#include "locmis/experiment.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <map>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

std::string dashed(std::string key) {
    for (auto& c : key)
        if (c == '_') c = '-';
    return key;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Offline policy selection with locally misspecified dynamics models"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "run an experiment and write CSV reports");
    std::string config_path;
    run->add_option("--config", config_path, "flat key=value config file");
    std::map<std::string, std::string> overrides;
    for (const auto& [key, help] : locmis::config_schema()) {
        std::string names = "--" + key;
        if (dashed(key) != key) names += ",--" + dashed(key);
        run->add_option(names, overrides[key], help);
    }

    auto* keys = app.add_subcommand("keys", "list configuration keys");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    if (keys->parsed()) {
        for (const auto& [key, help] : locmis::config_schema()) std::cout << key << "\t" << help << '\n';
        return kExitOk;
    }

    try {
        locmis::ExperimentConfig cfg;
        if (const char* env = std::getenv("LOCMIS_OUTPUT_DIR"); env && *env) cfg.output = env;
        if (!config_path.empty()) locmis::apply_config_file(cfg, config_path);
        for (const auto& [key, help] : locmis::config_schema()) {
            auto* opt = run->get_option("--" + key);
            if (opt->count() > 0) locmis::apply_setting(cfg, key, overrides[key]);
        }
        locmis::validate(cfg);
        const auto result = locmis::run_experiment(cfg);
        std::cout << "method,policy_id,model_id,label,eta_true\n";
        for (const auto& r : result.summary)
            std::cout << r.method << ',' << r.policy_id << ',' << r.model_id << ',' << r.label << ','
                      << locmis::format_double(r.eta_true) << '\n';
        for (const auto& f : result.files) std::cerr << "wrote " << f << '\n';
        return kExitOk;
    } catch (const locmis::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const locmis::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const locmis::InvalidArgument& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return kExitConfig;
    }
}
