#include <algorithm>
#include <future>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "mixsched/errors.hpp"
#include "mixsched/experiment.hpp"

namespace {

enum ExitCode { kOk = 0, kConfigError = 1, kRuntimeError = 2, kCheckFailed = 3 };

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::string out_dir;
};

mixsched::ExperimentConfig load(const std::string& path, const Overrides& overrides)
{
    auto config = mixsched::load_experiment(path);
    if (overrides.seed)
        config.seed = *overrides.seed;
    if (!overrides.out_dir.empty())
        config.out_dir = std::filesystem::path(overrides.out_dir) / config.name;
    return config;
}

template <typename Body>
int guarded(Body&& body, std::ostream& err)
{
    try {
        return body();
    } catch (const mixsched::ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kRuntimeError;
    }
}

int run_one(const std::string& path, const Overrides& overrides, std::ostream& log)
{
    return guarded(
        [&] {
            const auto config = load(path, overrides);
            const auto result = mixsched::run_experiment(config);
            log << config.name << ": final mixture " << result.summary["final_mixture"].dump()
                << ", value " << result.summary["final_value"].get<double>() << '\n';
            return static_cast<int>(kOk);
        },
        log);
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Softmax mixtures of queue scheduling controllers learned by policy gradient"};
    app.require_subcommand(1);

    Overrides overrides;
    std::uint64_t seed = 0;
    unsigned jobs = 1;
    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--seed", seed, "override the config seed");
        cmd->add_option("--out-dir", overrides.out_dir, "write artifacts under <dir>/<experiment name>");
    };

    std::vector<std::string> run_configs;
    auto* run = app.add_subcommand("run", "run one or more experiment configs");
    run->add_option("configs", run_configs, "experiment config files")->required();
    run->add_option("--jobs", jobs, "configs to run concurrently")->check(CLI::PositiveNumber);
    add_common(run);

    std::string config_path;
    auto* verify = app.add_subcommand("verify-bound", "exact-gradient run plus the convergence-rate check");
    verify->add_option("config", config_path)->required();
    add_common(verify);

    auto* compare = app.add_subcommand("compare", "exact discounted backlog of base controllers, LQF and the learned mixture");
    compare->add_option("config", config_path)->required();
    add_common(compare);

    app.add_subcommand("list-controllers", "print the accepted controller tags");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kConfigError;
    }
    for (auto* cmd : {run, verify, compare}) {
        if (cmd->count("--seed"))
            overrides.seed = seed;
    }

    if (app.got_subcommand("list-controllers")) {
        for (const auto& [tag, description] : mixsched::known_controller_tags())
            std::cout << tag << "\t" << description << '\n';
        return kOk;
    }

    if (app.got_subcommand(run)) {
        int status = kOk;
        for (std::size_t first = 0; first < run_configs.size(); first += jobs) {
            const std::size_t last = std::min(run_configs.size(), first + jobs);
            std::vector<std::future<std::pair<int, std::string>>> batch;
            for (std::size_t i = first; i < last; ++i) {
                batch.push_back(std::async(std::launch::async, [&, i] {
                    std::ostringstream log;
                    const int code = run_one(run_configs[i], overrides, log);
                    return std::make_pair(code, log.str());
                }));
            }
            for (auto& f : batch) {
                auto [code, text] = f.get();
                (code == kOk ? std::cout : std::cerr) << text;
                status = std::max(status, code);
            }
        }
        return status;
    }

    if (app.got_subcommand(verify)) {
        return guarded(
            [&] {
                const auto config = load(config_path, overrides);
                const auto report = mixsched::verify_bound(config);
                std::size_t failures = 0;
                for (const auto& row : report.rows)
                    failures += row.pass ? 0 : 1;
                std::cout << config.name << ": c = " << report.c
                          << ", ||d*/mu||_inf = " << report.visitation_ratio
                          << ", ||1/mu||_inf = " << report.inverse_mu << '\n'
                          << "bound " << (report.all_pass ? "holds" : "violated") << " at "
                          << report.rows.size() - failures << "/" << report.rows.size() << " iterations\n";
                return static_cast<int>(report.all_pass ? kOk : kCheckFailed);
            },
            std::cerr);
    }

    return guarded(
        [&] {
            const auto config = load(config_path, overrides);
            const auto result = mixsched::compare_values(config);
            std::cout << "policy\tvalue\tdiscounted_backlog\n";
            for (const auto& row : result.rows)
                std::cout << row.policy << '\t' << row.value << '\t' << -row.value << '\n';
            return static_cast<int>(kOk);
        },
        std::cerr);
}
