#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "atm/harness.hpp"
#include "atm/hitl.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kUsage = 1;
constexpr int kScenario = 2;
constexpr int kRuntime = 3;

void write_json(const fs::path& path, const nlohmann::json& doc) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << doc.dump(2) << "\n";
}

void print_report(const atm::MetricsReport& m) {
    std::cout << "episodes " << m.total << " (valid " << m.valid << ", discarded " << m.discarded
              << ", failed " << m.failed << ")\n"
              << "TP " << m.tp << "  FP " << m.fp << "  TN " << m.tn << "  FN " << m.fn << "\n"
              << "accuracy " << m.accuracy << "  fp_rate " << m.fp_rate << "  fn_rate " << m.fn_rate << "\n"
              << "precision " << m.precision << "  recall " << m.recall << "  F1 " << m.f1 << "  F2 " << m.f2
              << "\n"
              << "detected_and_action_rate " << m.detected_and_action_rate << "  effective_intervention_rate "
              << m.effective_intervention_rate << "\n"
              << "reaction " << m.reaction_mean * 1000.0 << " ms +- " << m.reaction_std * 1000.0 << " ms over "
              << m.reaction_count << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Simulated theory-of-mind risk detection and intervention"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "JSON config overriding atm.*, nav.*, perception.* keys")
        ->check(CLI::ExistingFile);

    std::string scenario_path;
    std::size_t episodes = 180;
    std::uint64_t master_seed = 1;
    double pos_sigma = -1.0;
    double size_sigma = -1.0;
    std::string out_dir = "results";
    bool serial = false;
    auto* run = app.add_subcommand("run", "Batch experiment over sampled scenario variants");
    run->add_option("--scenario", scenario_path, "Scenario file")->required();
    run->add_option("--episodes", episodes, "Number of episodes")->check(CLI::PositiveNumber);
    run->add_option("--master-seed", master_seed, "Master seed");
    run->add_option("--pos-sigma", pos_sigma, "Detection position noise (m)")->check(CLI::NonNegativeNumber);
    run->add_option("--size-sigma", size_sigma, "Detection size noise")->check(CLI::NonNegativeNumber);
    run->add_option("--out", out_dir, "Output directory");
    run->add_flag("--serial", serial, "Run episodes on one thread");

    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string trace_out = "trace.json";
    auto* trace = app.add_subcommand("trace", "Single episode with simulation traces and memory dumps");
    trace->add_option("--scenario", scenario_path, "Scenario file")->required();
    trace->add_option("--seed", seed, "Episode seed; the scenario is sampled with it")
        ->each([&](const std::string&) { seed_set = true; });
    trace->add_option("--out", trace_out, "Trace file");

    int port = 8765;
    std::string static_dir;
    auto* serve = app.add_subcommand("serve", "Live human-in-the-loop session over WebSocket");
    serve->add_option("--scenario", scenario_path, "Scenario file")->required();
    serve->add_option("--port", port, "TCP port")->check(CLI::Range(0, 65535));
    serve->add_option("--static", static_dir, "Directory of client assets to serve over HTTP");

    std::string results_in;
    auto* metrics = app.add_subcommand("metrics", "Recompute the report from a results file");
    metrics->add_option("--in", results_in, "results.csv")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kUsage;
    }

    atm::HarnessConfig config;
    try {
        if (!config_path.empty()) config = atm::load_config_file(config_path);
        if (pos_sigma >= 0.0) config.perception.noise.pos_sigma = pos_sigma;
        if (size_sigma >= 0.0) config.perception.noise.size_inflation_sigma = size_sigma;
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kUsage;
    }

    atm::Scenario scenario;
    if (!metrics->parsed()) {
        try {
            scenario = atm::load_scenario_file(scenario_path);
        } catch (const std::exception& e) {
            std::cerr << "scenario error: " << e.what() << "\n";
            return kScenario;
        }
    }

    try {
        if (run->parsed()) {
            const auto t0 = std::chrono::steady_clock::now();
            const auto results = serial ? atm::run_batch_serial(scenario, episodes, master_seed, config)
                                        : atm::run_batch(scenario, episodes, master_seed, config);
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            fs::create_directories(out_dir);
            atm::write_results_csv((fs::path(out_dir) / "results.csv").string(), results);
            atm::write_timings_csv((fs::path(out_dir) / "timings.csv").string(), results);
            const auto report = atm::compute_metrics(results);
            write_json(fs::path(out_dir) / "metrics.json", atm::metrics_to_json(report));
            print_report(report);
            std::cout << "wall time " << secs << " s\n";
        } else if (trace->parsed()) {
            atm::Scenario sc = seed_set ? atm::sample_scenario(scenario, seed) : scenario;
            if (seed_set) sc.seed = seed;
            atm::EpisodeTrace tr;
            const auto r = atm::run_episode(sc, config, &tr);
            nlohmann::json doc;
            doc["scenario"] = atm::scenario_to_json(sc);
            doc["result"] = {{"seed", r.seed},
                             {"discarded", r.discarded},
                             {"truth_collision", r.truth_collision},
                             {"predicted_risky", r.predicted_risky},
                             {"action_found", r.action_found},
                             {"reaction_time", r.reaction_time ? nlohmann::json(*r.reaction_time) : nlohmann::json()},
                             {"selected_target",
                              r.selected_target ? nlohmann::json(*r.selected_target) : nlohmann::json()},
                             {"final_person_collided", r.final_person_collided},
                             {"failed", r.failed}};
            doc["records"] = std::move(tr.records);
            write_json(trace_out, doc);
            std::cout << doc["result"].dump() << "\n";
        } else if (serve->parsed()) {
            atm::HitlServer server(scenario, config, static_cast<unsigned short>(port), static_dir);
            std::cout << "serving on port " << server.port() << std::endl;
            server.run();
        } else if (metrics->parsed()) {
            auto results = atm::read_results_csv(results_in);
            const fs::path timings = fs::path(results_in).parent_path() / "timings.csv";
            if (fs::exists(timings)) atm::merge_timings_csv(timings.string(), results);
            const auto report = atm::compute_metrics(results);
            print_report(report);
            std::cout << atm::metrics_to_json(report).dump(2) << "\n";
        }
    } catch (const atm::ScenarioError& e) {
        std::cerr << "scenario error: " << e.what() << "\n";
        return kScenario;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntime;
    }
    return 0;
}
