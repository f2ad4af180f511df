#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include <mle/export.hpp>
#include <mle/orchestrator.hpp>

namespace {

    constexpr int exit_ok = 0;
    constexpr int exit_config = 2;
    constexpr int exit_runtime = 3;

    mle::RobotGenome read_robot_genome(const std::filesystem::path& path)
    {
        std::ifstream in(path);
        if (!in)
            throw mle::LoadError("cannot open genome file " + path.string());
        mle::json j;
        try {
            j = mle::json::parse(in);
        }
        catch (const mle::json::exception& e) {
            throw mle::LoadError(path.string() + ": " + e.what());
        }
        // Accept either a bare genome or an archive bin entry wrapping one.
        if (j.is_object() && j.contains("genome") && !j.contains("body"))
            j = j.at("genome");
        try {
            return j.get<mle::RobotGenome>();
        }
        catch (const mle::json::exception& e) {
            throw mle::LoadError(path.string() + ": not a robot genome: " + e.what());
        }
    }

    void write_file(const std::filesystem::path& path, const std::string& text)
    {
        if (path.has_parent_path())
            std::filesystem::create_directories(path.parent_path());
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out)
            throw mle::Error("cannot write " + path.string());
        out << text;
    }

    template <typename Archive>
    void export_archive(const Archive& archive, const std::string& format, const std::filesystem::path& out)
    {
        if (format != "csv")
            throw mle::ConfigError("unsupported export format '" + format + "' (only csv)");
        if (out.has_parent_path())
            std::filesystem::create_directories(out.parent_path());
        mle::export_heatmap(archive, out);
    }

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Multi-level evolution of materials, components and robots"};
    app.require_subcommand(1);

    std::string config_path, out_dir, run_dir, level, process, format = "csv", out_path, genome_path, fidelity, trajectory_path;
    std::optional<std::uint64_t> seed;

    auto* init = app.add_subcommand("init", "bootstrap and seed the archives, write initial snapshots");
    init->add_option("--config", config_path, "TOML config")->required();
    init->add_option("--out", out_dir, "output directory")->required();

    auto* run = app.add_subcommand("run", "run a full experiment");
    run->add_option("--config", config_path, "TOML config")->required();
    run->add_option("--out", out_dir, "output directory")->required();
    run->add_option("--seed", seed, "override the config seed");

    auto* exp = app.add_subcommand("export", "export a 2-D archive as a fitness heatmap");
    exp->add_option("--run", run_dir, "run directory")->required();
    exp->add_option("--level", level, "material, component or robot")->required();
    exp->add_option("--process", process, "process id")->required();
    exp->add_option("--format", format, "output format")->default_val("csv");
    exp->add_option("--out", out_path, "output CSV path")->required();

    auto* replay = app.add_subcommand("replay", "re-simulate one robot and write its trajectory");
    replay->add_option("--run", run_dir, "run directory")->required();
    replay->add_option("--genome", genome_path, "robot genome JSON")->required();
    replay->add_option("--fidelity", fidelity, "real or virtual")->required();
    replay->add_option("--trajectory", trajectory_path, "output CSV path")->required();

    auto* metrics = app.add_subcommand("metrics", "print per-archive metrics as JSON");
    metrics->add_option("--run", run_dir, "run directory")->required();

    try {
        app.parse(argc, argv);
    }
    catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    }
    catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_config;
    }

    try {
        if (*init) {
            mle::Experiment ex(mle::load_config(config_path));
            ex.initialize();
            ex.save_state(out_dir);
            std::cout << ex.report().dump(2) << "\n";
        }
        else if (*run) {
            auto config = mle::load_config(config_path);
            if (seed)
                config.seed = *seed;
            std::cout << mle::run_experiment(config, out_dir).dump(2) << "\n";
        }
        else if (*exp) {
            const auto ex = mle::Experiment::load_state(run_dir);
            const auto lvl = mle::level_from_string(level);
            if (lvl == mle::Level::Material) {
                int id = 0;
                try {
                    id = std::stoi(process);
                }
                catch (const std::exception&) {
                    throw mle::ConfigError("material process must be an integer id, got '" + process + "'");
                }
                const auto it = ex.materials().find(id);
                if (it == ex.materials().end())
                    throw mle::ConfigError("no material process " + process);
                export_archive(it->second, format, out_path);
            }
            else if (lvl == mle::Level::Component) {
                export_archive(ex.components().at(mle::component_class_from_string(process)), format, out_path);
            }
            else {
                if (process != mle::robot_process)
                    throw mle::ConfigError("robot archive process is " + mle::robot_process + ", got '" + process + "'");
                export_archive(ex.robots(), format, out_path);
            }
        }
        else if (*replay) {
            const auto ex = mle::Experiment::load_state(run_dir);
            const auto f = mle::fidelity_from_string(fidelity);
            const auto genome = read_robot_genome(genome_path);
            const auto ctx = ex.context();
            const auto robot = mle::express_for_simulation(genome, ctx);
            std::vector<mle::TrajectorySample> samples;
            mle::SimOptions opts;
            opts.trajectory = &samples;
            mle::json result = {{"fidelity", mle::to_string(f)}, {"genome_hash", mle::genome_hash_of(genome)}};
            try {
                const auto sim = mle::simulate(robot.model, ctx.sim(f), opts);
                result["fitness"] = sim.fitness;
                result["mean_speed"] = sim.mean_speed;
                result["diverged"] = false;
            }
            catch (const mle::DivergedError& e) {
                result["fitness"] = mle::diverged_fitness;
                result["diverged"] = true;
                result["message"] = e.what();
            }
            write_file(trajectory_path, mle::trajectory_csv(samples));
            std::cout << result.dump(2) << "\n";
        }
        else if (*metrics) {
            const auto ex = mle::Experiment::load_state(run_dir);
            std::cout << ex.archive_metrics_json().dump(2) << "\n";
        }
    }
    catch (const mle::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return exit_config;
    }
    catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_runtime;
    }
    return exit_ok;
}
