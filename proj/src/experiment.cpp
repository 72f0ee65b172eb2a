#include "mixsched/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string_view>

#include <yaml-cpp/yaml.h>

#include "mixsched/errors.hpp"

namespace mixsched {

namespace {

class Reader {
public:
    explicit Reader(std::string source) : source_(std::move(source)) {}

    [[noreturn]] void fail(const YAML::Node& node, const std::string& message) const
    {
        std::ostringstream out;
        out << source_;
        const auto mark = node.Mark();
        if (mark.line >= 0)
            out << ":" << mark.line + 1;
        out << ": " << message;
        throw ConfigError(out.str());
    }

    void require_map(const YAML::Node& node, std::string_view section) const
    {
        if (!node.IsMap())
            fail(node, "'" + std::string(section) + "' must be a mapping");
    }

    void check_keys(const YAML::Node& node, std::string_view section,
                    std::initializer_list<std::string_view> allowed) const
    {
        require_map(node, section);
        for (const auto& kv : node) {
            const auto key = kv.first.as<std::string>();
            if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
                fail(kv.first, "unknown key '" + key + "' in " + std::string(section));
        }
    }

    template <typename T>
    T get(const YAML::Node& node, std::string_view what) const
    {
        try {
            return node.as<T>();
        } catch (const YAML::Exception&) {
            fail(node, "invalid value for '" + std::string(what) + "'");
        }
    }

    std::vector<double> rates(const YAML::Node& node, std::string_view what) const
    {
        if (!node.IsSequence() || node.size() == 0)
            fail(node, "'" + std::string(what) + "' must be a nonempty list of rates");
        std::vector<double> out;
        for (const auto& x : node)
            out.push_back(get<double>(x, what));
        return out;
    }

private:
    std::string source_;
};

void write_double(std::ostream& out, double v)
{
    std::ostringstream s;
    s.precision(12);
    s << v;
    out << s.str();
}

void field(std::ostream& out, double v)
{
    out << ',';
    write_double(out, v);
}

std::filesystem::path ensure_out_dir(const ExperimentConfig& config)
{
    auto dir = config.out_dir.empty() ? std::filesystem::path("runs") / config.name : config.out_dir;
    std::filesystem::create_directories(dir);
    return dir;
}

std::ofstream open_output(const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    return out;
}

RolloutEnv rollout_env(const ExperimentConfig& config)
{
    return {config.network, config.initial};
}

PGConfig seeded_pg(const ExperimentConfig& config)
{
    PGConfig pg = config.pg;
    pg.seed = config.seed;
    pg.gradest.seed = config.seed;
    pg.schedule = config.schedule;
    return pg;
}

// Network with the rates in force at the end of the run.
NetworkConfig final_network(const ExperimentConfig& config)
{
    NetworkConfig net = config.network;
    if (config.schedule)
        net.arrival_rates = config.schedule->segments().back().rates;
    return net;
}

nlohmann::json mixture_json(const std::vector<std::string>& tags, const std::vector<double>& probs)
{
    nlohmann::json out = nlohmann::json::object();
    for (std::size_t m = 0; m < tags.size(); ++m)
        out[tags[m]] = probs[m];
    return out;
}

} // namespace

ExperimentConfig parse_experiment(const std::string& yaml_text, const std::string& source_name)
{
    Reader reader(source_name);
    YAML::Node root;
    try {
        root = YAML::Load(yaml_text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError(source_name + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
    }
    reader.check_keys(root, "experiment",
                      {"name", "seed", "network", "initial", "controllers", "method", "pg", "outputs", "checks",
                       "stability"});

    ExperimentConfig config;
    if (!root["name"])
        reader.fail(root, "missing 'name'");
    config.name = reader.get<std::string>(root["name"], "name");
    if (root["seed"])
        config.seed = reader.get<std::uint64_t>(root["seed"], "seed");

    // network
    const auto net = root["network"];
    if (!net)
        reader.fail(root, "missing 'network'");
    reader.check_keys(net, "network", {"arrival_rates", "discount", "cap", "schedule"});
    if (net["schedule"]) {
        const auto sched = net["schedule"];
        if (!sched.IsSequence() || sched.size() == 0)
            reader.fail(sched, "'schedule' must be a nonempty list");
        std::vector<ArrivalSchedule::Segment> segments;
        for (const auto& seg : sched) {
            reader.check_keys(seg, "schedule segment", {"start", "rates"});
            if (!seg["start"] || !seg["rates"])
                reader.fail(seg, "schedule segments need 'start' and 'rates'");
            segments.push_back({reader.get<long>(seg["start"], "start"), reader.rates(seg["rates"], "rates")});
        }
        try {
            config.schedule = ArrivalSchedule(segments);
        } catch (const ContractViolation& e) {
            reader.fail(sched, e.what());
        }
    }
    if (net["arrival_rates"])
        config.network.arrival_rates = reader.rates(net["arrival_rates"], "arrival_rates");
    else if (config.schedule)
        config.network.arrival_rates = config.schedule->segments().front().rates;
    else
        reader.fail(net, "missing 'arrival_rates'");
    if (config.schedule && config.schedule->segments().front().rates.size() != config.network.n_queues())
        reader.fail(net, "schedule and arrival_rates disagree on the number of queues");
    if (net["discount"])
        config.network.discount = reader.get<double>(net["discount"], "discount");
    config.network.cap = 20;
    if (net["cap"]) {
        if (net["cap"].IsScalar() && net["cap"].Scalar() == "none")
            config.network.cap.reset();
        else
            config.network.cap = reader.get<int>(net["cap"], "cap");
    }
    try {
        config.network.validate();
        if (config.schedule) {
            for (const auto& seg : config.schedule->segments()) {
                NetworkConfig probe = config.network;
                probe.arrival_rates = seg.rates;
                probe.validate();
            }
        }
    } catch (const ContractViolation& e) {
        reader.fail(net, e.what());
    }

    // controllers
    const auto ctrl = root["controllers"];
    if (!ctrl || !ctrl.IsSequence() || ctrl.size() == 0)
        reader.fail(ctrl ? ctrl : root, "'controllers' must be a nonempty list of tags");
    for (const auto& tag : ctrl) {
        const auto text = reader.get<std::string>(tag, "controllers");
        try {
            const auto k = Controller::from_tag(text);
            if (k.kind() == Controller::Kind::ServeFixed && k.queue() >= config.network.n_queues())
                reader.fail(tag, "controller '" + text + "' refers to a queue the network lacks");
        } catch (const ContractViolation& e) {
            reader.fail(tag, e.what());
        }
        config.controllers.push_back(text);
    }

    // initial distribution
    config.initial_label = "uniform";
    if (root["initial"]) {
        const auto init = root["initial"];
        if (init.IsScalar()) {
            config.initial_label = init.Scalar();
            if (config.initial_label != "uniform" && config.initial_label != "empty")
                reader.fail(init, "'initial' must be 'uniform', 'empty' or a list of queue lengths");
        } else if (init.IsSequence()) {
            QueueState s;
            for (const auto& q : init)
                s.lengths.push_back(reader.get<int>(q, "initial"));
            if (s.size() != config.network.n_queues())
                reader.fail(init, "initial state length does not match the number of queues");
            for (int q : s.lengths) {
                if (q < 0 || (config.network.cap && q > *config.network.cap))
                    reader.fail(init, "initial state outside the truncated state space");
            }
            config.initial = InitialDistribution::point(s);
            config.initial_label = "state";
        } else {
            reader.fail(init, "'initial' must be 'uniform', 'empty' or a list of queue lengths");
        }
    }
    if (config.initial_label == "uniform") {
        if (!config.network.cap)
            reader.fail(root, "a uniform initial distribution needs a cap");
        config.initial = InitialDistribution::uniform(config.network);
    } else if (config.initial_label == "empty") {
        config.initial = InitialDistribution::point(QueueState::empty(config.network.n_queues()));
    }

    // method
    config.pg.source = GradientSource::Exact;
    if (const auto method = root["method"]) {
        reader.check_keys(method, "method",
                          {"gradient", "alpha", "runs", "rollouts", "horizon", "tail", "two_point", "threads"});
        if (method["gradient"]) {
            const auto g = reader.get<std::string>(method["gradient"], "gradient");
            if (g == "exact")
                config.pg.source = GradientSource::Exact;
            else if (g == "gradest")
                config.pg.source = GradientSource::GradEst;
            else
                reader.fail(method["gradient"], "'gradient' must be 'exact' or 'gradest'");
        }
        auto& ge = config.pg.gradest;
        if (method["alpha"])
            ge.alpha = reader.get<double>(method["alpha"], "alpha");
        if (method["runs"])
            ge.n_runs = reader.get<int>(method["runs"], "runs");
        if (method["rollouts"])
            ge.n_rollouts = reader.get<int>(method["rollouts"], "rollouts");
        if (method["horizon"]) {
            if (method["horizon"].Scalar() != "auto")
                ge.horizon = reader.get<int>(method["horizon"], "horizon");
        }
        if (method["tail"])
            ge.tail = reader.get<double>(method["tail"], "tail");
        if (method["two_point"])
            ge.two_point = reader.get<bool>(method["two_point"], "two_point");
        if (method["threads"])
            ge.threads = reader.get<unsigned>(method["threads"], "threads");
        try {
            if (config.pg.source == GradientSource::GradEst) {
                ge.validate();
                if (!ge.horizon && !config.network.cap)
                    throw ContractViolation("uncapped networks need an explicit rollout horizon");
            }
        } catch (const ContractViolation& e) {
            reader.fail(method, e.what());
        }
    }
    if (config.pg.source == GradientSource::Exact && !config.network.cap)
        reader.fail(root, "exact gradients need a truncation cap");

    // pg
    config.pg.learning_rate.reset();
    if (config.pg.source == GradientSource::GradEst)
        config.pg.learning_rate = 0.05;
    if (const auto pg = root["pg"]) {
        reader.check_keys(pg, "pg", {"learning_rate", "iterations", "initial_theta"});
        if (pg["learning_rate"]) {
            if (pg["learning_rate"].IsScalar() && pg["learning_rate"].Scalar() == "theorem")
                config.pg.learning_rate.reset();
            else
                config.pg.learning_rate = reader.get<double>(pg["learning_rate"], "learning_rate");
        }
        if (pg["iterations"])
            config.pg.iterations = reader.get<int>(pg["iterations"], "iterations");
        if (pg["initial_theta"])
            config.pg.initial_theta = reader.get<double>(pg["initial_theta"], "initial_theta");
        try {
            config.pg.validate();
        } catch (const ContractViolation& e) {
            reader.fail(pg, e.what());
        }
    }

    // outputs
    if (const auto outputs = root["outputs"]) {
        reader.check_keys(outputs, "outputs", {"dir", "trace", "evaluation_dump"});
        if (outputs["dir"])
            config.out_dir = reader.get<std::string>(outputs["dir"], "dir");
        if (outputs["trace"])
            config.write_trace = reader.get<bool>(outputs["trace"], "trace");
        if (outputs["evaluation_dump"])
            config.dump_evaluation = reader.get<bool>(outputs["evaluation_dump"], "evaluation_dump");
    }

    if (const auto checks = root["checks"]) {
        reader.check_keys(checks, "checks", {"grid_resolution"});
        if (checks["grid_resolution"]) {
            config.grid_resolution = reader.get<double>(checks["grid_resolution"], "grid_resolution");
            if (!(config.grid_resolution > 0.0 && config.grid_resolution <= 1.0))
                reader.fail(checks["grid_resolution"], "'grid_resolution' must lie in (0,1]");
        }
    }

    if (const auto stab = root["stability"]) {
        reader.check_keys(stab, "stability", {"slots", "probes"});
        if (!stab["slots"])
            reader.fail(stab, "missing 'slots'");
        config.stability_slots = reader.get<long>(stab["slots"], "slots");
        if (config.stability_slots < 2)
            reader.fail(stab["slots"], "'slots' must be at least 2");
        if (const auto probes = stab["probes"]) {
            if (!probes.IsSequence())
                reader.fail(probes, "'probes' must be a list");
            for (const auto& p : probes) {
                reader.check_keys(p, "stability probe", {"name", "weights"});
                if (!p["name"] || !p["weights"])
                    reader.fail(p, "probes need 'name' and 'weights'");
                StabilityProbeSpec spec{reader.get<std::string>(p["name"], "name"),
                                        reader.rates(p["weights"], "weights")};
                double total = 0.0;
                for (double w : spec.weights) {
                    if (w < 0.0)
                        reader.fail(p["weights"], "probe weights must be nonnegative");
                    total += w;
                }
                if (spec.weights.size() != config.controllers.size() || std::abs(total - 1.0) > 1e-9)
                    reader.fail(p["weights"], "probe weights must be a distribution over the controllers");
                config.stability_probes.push_back(std::move(spec));
            }
        }
    }
    return config;
}

ExperimentConfig load_experiment(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError(path.string() + ": cannot open config file");
    std::ostringstream text;
    text << in.rdbuf();
    return parse_experiment(text.str(), path.string());
}

std::string metrics_header(std::size_t n_controllers, std::size_t n_queues)
{
    std::string header = "t";
    for (std::size_t m = 0; m < n_controllers; ++m)
        header += ",pi_" + std::to_string(m + 1);
    header += ",value";
    for (std::size_t i = 0; i < n_queues; ++i)
        header += ",mean_backlog_" + std::to_string(i + 1);
    return header;
}

std::vector<MetricsRow> metrics_rows(const RunTrace& trace)
{
    std::vector<MetricsRow> rows;
    rows.reserve(trace.records.size());
    for (const auto& r : trace.records)
        rows.push_back({r.t, r.probs, r.value, r.mean_backlog});
    return rows;
}

ExperimentResult run_experiment(const ExperimentConfig& config)
{
    const auto controllers = controllers_from_tags(config.controllers);
    const auto dir = ensure_out_dir(config);

    ExperimentResult result;
    result.trace = run_pg(rollout_env(config), controllers, seeded_pg(config));
    const auto& trace = result.trace;

    {
        auto out = open_output(dir / "metrics.csv");
        out << metrics_header(controllers.size(), config.network.n_queues()) << '\n';
        for (const auto& row : metrics_rows(trace)) {
            out << row.t;
            for (double p : row.probs)
                field(out, p);
            field(out, row.value);
            for (double b : row.mean_backlog)
                field(out, b);
            out << '\n';
        }
    }
    {
        std::vector<double> wall_ms;
        for (const auto& r : trace.records)
            wall_ms.push_back(r.wall_ms);
        open_output(dir / "timing.json") << nlohmann::json{{"wall_ms", wall_ms}}.dump() << '\n';
    }
    if (config.write_trace) {
        auto out = open_output(dir / "trace.csv");
        out << "t";
        for (std::size_t m = 0; m < controllers.size(); ++m)
            out << ",theta_" << m + 1;
        for (std::size_t m = 0; m < controllers.size(); ++m)
            out << ",pi_" << m + 1;
        out << ",value,value_exact,gradient_norm";
        for (std::size_t i = 0; i < config.network.n_queues(); ++i)
            out << ",lambda_" << i + 1;
        out << '\n';
        for (const auto& r : trace.records) {
            out << r.t;
            for (double x : r.theta)
                field(out, x);
            for (double x : r.probs)
                field(out, x);
            field(out, r.value);
            out << ',' << (r.value_exact ? 1 : 0) << ',';
            write_double(out, r.gradient_norm);
            for (double x : r.arrival_rates)
                field(out, x);
            out << '\n';
        }
    }

    const auto& last = trace.records.back();
    auto& summary = result.summary;
    summary["name"] = config.name;
    summary["seed"] = config.seed;
    summary["controllers"] = config.controllers;
    summary["gradient"] = config.pg.source == GradientSource::Exact ? "exact" : "gradest";
    summary["iterations"] = config.pg.iterations;
    summary["final_theta"] = last.theta;
    summary["final_mixture"] = mixture_json(config.controllers, last.probs);
    summary["final_value"] = last.value;
    summary["final_value_exact"] = last.value_exact;
    summary["final_discounted_backlog"] = -last.value;

    const auto net = final_network(config);
    if (net.cap && controllers.size() <= 3) {
        const auto model = build_model(net);
        const auto mu = to_vector(model, config.initial);
        const auto best = best_in_class(model, controllers, mu, config.grid_resolution);
        summary["best_in_class"] = {{"mixture", mixture_json(config.controllers, best.mixture.probs)},
                                    {"value", best.value},
                                    {"grid_value", best.grid_value},
                                    {"grid_resolution", config.grid_resolution}};
        if (config.dump_evaluation) {
            const auto base = controller_policies(model, controllers);
            const auto eval = evaluate_policy(model, mixture_policy(model, base, MixtureDistribution{last.probs}), mu);
            write_evaluation_csv(dir / "evaluation.csv", model, eval);
        }
    }

    if (config.stability_slots > 0) {
        NetworkConfig open = net;
        open.cap.reset();
        auto probes = config.stability_probes;
        probes.push_back({"learned", last.probs});
        auto out = open_output(dir / "stability.csv");
        out << "probe";
        for (std::size_t i = 0; i < open.n_queues(); ++i)
            out << ",mean_backlog_" << i + 1;
        for (std::size_t i = 0; i < open.n_queues(); ++i)
            out << ",drift_" << i + 1;
        out << ",total_drift,mean_total_backlog\n";
        nlohmann::json stability = nlohmann::json::array();
        for (std::size_t k = 0; k < probes.size(); ++k) {
            const auto report = stability_probe(MixtureDistribution{probes[k].weights}, controllers, open,
                                                config.stability_slots, QueueState::empty(open.n_queues()),
                                                config.seed + k);
            out << probes[k].name;
            for (double x : report.mean_backlog)
                field(out, x);
            for (double x : report.queue_drift)
                field(out, x);
            field(out, report.total_drift);
            field(out, report.mean_total_backlog);
            out << '\n';
            stability.push_back({{"probe", probes[k].name},
                                 {"queue_drift", report.queue_drift},
                                 {"total_drift", report.total_drift},
                                 {"mean_total_backlog", report.mean_total_backlog}});
        }
        summary["stability"] = stability;
    }

    auto out = open_output(dir / "summary.json");
    out << summary.dump(2) << '\n';
    return result;
}

ComparisonResult compare_values(const ExperimentConfig& config, const RunTrace& trace)
{
    const auto controllers = controllers_from_tags(config.controllers);
    const auto net = final_network(config);
    if (!net.cap)
        throw ConfigError(config.name + ": value comparison needs a truncation cap");
    const auto model = build_model(net);
    const auto mu = to_vector(model, config.initial);

    ComparisonResult result;
    result.best_base_value = -std::numeric_limits<double>::infinity();
    bool has_lqf = false;
    for (const auto& k : controllers) {
        const double v = evaluate_policy(model, controller_policy(model, k), mu).value_at(mu);
        result.rows.push_back({k.tag(), v});
        result.best_base_value = std::max(result.best_base_value, v);
        if (k.kind() == Controller::Kind::LongestQueueFirst) {
            has_lqf = true;
            result.lqf_value = v;
        }
    }
    if (!has_lqf) {
        result.lqf_value = evaluate_policy(model, controller_policy(model, Controller::longest_queue_first()), mu)
                               .value_at(mu);
        result.rows.push_back({"lqf", result.lqf_value});
    }
    const auto base = controller_policies(model, controllers);
    result.learned_value = mixture_value(model, base, MixtureDistribution{trace.records.back().probs}, mu);
    result.rows.push_back({"learned", result.learned_value});
    result.learned_beats_base = result.learned_value >= result.best_base_value - 1e-9 * std::abs(result.best_base_value);

    const auto dir = ensure_out_dir(config);
    auto out = open_output(dir / "compare.csv");
    out << "policy,value,discounted_backlog\n";
    for (const auto& row : result.rows) {
        out << row.policy << ',';
        write_double(out, row.value);
        out << ',';
        write_double(out, -row.value);
        out << '\n';
    }
    return result;
}

ComparisonResult compare_values(const ExperimentConfig& config)
{
    const auto run = run_experiment(config);
    return compare_values(config, run.trace);
}

BoundReport verify_bound(const ExperimentConfig& config)
{
    if (config.pg.source != GradientSource::Exact)
        throw ConfigError(config.name + ": the bound check needs 'gradient: exact'");
    if (config.schedule && config.schedule->segments().size() > 1)
        throw ConfigError(config.name + ": the bound check needs constant arrival rates");
    const auto controllers = controllers_from_tags(config.controllers);
    const auto run = run_experiment(config);
    const auto model = build_model(config.network);
    const auto mu = to_vector(model, config.initial);
    const auto report = check_theorem_bound(run.trace, model, controllers, mu, config.grid_resolution);

    const auto dir = ensure_out_dir(config);
    {
        auto out = open_output(dir / "bound.csv");
        out << "t,suboptimality,bound,pass\n";
        for (const auto& row : report.rows) {
            out << row.t << ',';
            write_double(out, row.suboptimality);
            out << ',';
            if (row.defined)
                write_double(out, row.bound);
            else
                out << "undefined";
            out << ',' << (row.pass ? 1 : 0) << '\n';
        }
    }
    nlohmann::json summary;
    summary["name"] = config.name;
    summary["pass"] = report.all_pass;
    summary["optimal_mixture"] = mixture_json(config.controllers, report.optimal.probs);
    summary["optimal_value"] = report.optimal_value;
    summary["c"] = report.c;
    summary["visitation_ratio_inf_norm"] = report.visitation_ratio;
    summary["inverse_mu_inf_norm"] = report.inverse_mu;
    summary["smoothness_factor"] = report.smoothness_factor;
    summary["learning_rate"] = config.pg.learning_rate ? *config.pg.learning_rate
                                                       : theorem_learning_rate(config.network.discount);
    summary["iterations"] = report.rows.size();
    summary["notes"] = report.notes;
    auto out = open_output(dir / "bound_summary.json");
    out << summary.dump(2) << '\n';
    return report;
}

} // namespace mixsched
