#pragma once

#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "archive.hpp"
#include "common.hpp"
#include "rng.hpp"

namespace mle {

    /// Four synthetic process parameters, each in [0, 1]:
    /// composition, porosity, cure, additive.
    struct MaterialGenome {
        int process_id = 0;
        std::array<double, 4> g{};

        double composition() const { return g[0]; }
        double porosity() const { return g[1]; }
        double cure() const { return g[2]; }
        double additive() const { return g[3]; }

        friend bool operator==(const MaterialGenome&, const MaterialGenome&) = default;
    };

    struct MaterialPhenotype {
        double density = 0.0;        // kg/m^3
        double stiffness = 0.0;      // N/m
        double damping_ratio = 0.0;  // dimensionless
        double actuation_gain = 0.0; // [0, 1]
        double sensitivity = 0.0;    // [0, 1]
        double unit_cost = 0.0;      // cost per unit volume, >= 1

        friend bool operator==(const MaterialPhenotype&, const MaterialPhenotype&) = default;
    };

    /// Per-process scaling of density and stiffness.
    struct MaterialProcess {
        double alpha_rho = 1.0;
        double alpha_k = 1.0;
    };

    using ProcessTable = std::map<int, MaterialProcess>;

    inline ProcessTable default_process_table() { return {{0, {1.0, 1.0}}, {1, {0.6, 1.3}}}; }

    struct MaterialMutation {
        double prob = 0.5;
        double sigma = 0.1;
    };

    inline constexpr double min_log_stiffness = 2.0;
    inline constexpr double max_log_stiffness = 6.0;

    inline MaterialPhenotype express_material(const MaterialGenome& genome, const ProcessTable& table)
    {
        auto it = table.find(genome.process_id);
        if (it == table.end())
            throw ConfigError("unknown material process " + std::to_string(genome.process_id));
        const auto [alpha_rho, alpha_k] = it->second;
        std::array<double, 4> g;
        for (std::size_t i = 0; i < 4; ++i)
            g[i] = clamp(genome.g[i], 0.0, 1.0);

        MaterialPhenotype p;
        p.density = 300.0 + 1700.0 * alpha_rho * g[0] * (1.0 - 0.5 * g[1]);
        const double log_k = clamp(2.0 + 4.0 * alpha_k * g[0] * g[2], min_log_stiffness, max_log_stiffness);
        p.stiffness = std::pow(10.0, log_k);
        p.damping_ratio = 0.05 + 0.5 * g[1];
        p.actuation_gain = g[3] * (1.0 - g[2]);
        p.sensitivity = g[1] * g[3];
        p.unit_cost = 1.0 + 10.0 * g[2] + 5.0 * g[3] + 2.0 * g[0];
        return p;
    }

    /// Archive features: (log10 stiffness, density).
    inline std::vector<double> material_features(const MaterialPhenotype& p) { return {std::log10(p.stiffness), p.density}; }

    inline double material_fitness(const MaterialPhenotype& p) { return -p.unit_cost; }

    inline FeatureSpec default_material_spec() { return FeatureSpec({{2.0, 6.0, 10}, {300.0, 2000.0, 10}}); }

    inline MaterialGenome mutate_material(const MaterialGenome& genome, Rng& rng, const MaterialMutation& m = {})
    {
        MaterialGenome child = genome;
        for (auto& gi : child.g)
            if (rng.bernoulli(m.prob))
                gi = clamp(gi + rng.normal(0.0, m.sigma), 0.0, 1.0);
        return child;
    }

    // Seed set of "known" materials: the row-major 4x4 lattice over
    // (composition, cure) in thirds. The first pass uses porosity = additive =
    // 0.5; each further pass over the lattice alternates 0.25 and 0.75.
    inline std::vector<MaterialGenome> bootstrap_materials(int process_id, int n)
    {
        std::vector<MaterialGenome> out;
        for (int i = 0; i < n; ++i) {
            const int cell = i % 16;
            const int pass = i / 16;
            const double side = pass == 0 ? 0.5 : (pass % 2 == 1 ? 0.25 : 0.75);
            MaterialGenome g;
            g.process_id = process_id;
            g.g = {(cell / 4) / 3.0, side, (cell % 4) / 3.0, side};
            out.push_back(g);
        }
        return out;
    }

    inline void to_json(nlohmann::json& j, const MaterialGenome& g) { j = {{"process", g.process_id}, {"g", g.g}}; }

    inline void from_json(const nlohmann::json& j, MaterialGenome& g)
    {
        g.process_id = j.at("process").get<int>();
        g.g = j.at("g").get<std::array<double, 4>>();
    }

    inline void to_json(nlohmann::json& j, const MaterialPhenotype& p)
    {
        j = {{"density", p.density},
            {"stiffness", p.stiffness},
            {"damping_ratio", p.damping_ratio},
            {"actuation_gain", p.actuation_gain},
            {"sensitivity", p.sensitivity},
            {"unit_cost", p.unit_cost}};
    }

    inline void from_json(const nlohmann::json& j, MaterialPhenotype& p)
    {
        p.density = j.at("density").get<double>();
        p.stiffness = j.at("stiffness").get<double>();
        p.damping_ratio = j.at("damping_ratio").get<double>();
        p.actuation_gain = j.at("actuation_gain").get<double>();
        p.sensitivity = j.at("sensitivity").get<double>();
        p.unit_cost = j.at("unit_cost").get<double>();
    }

    using MaterialArchive = Archive<MaterialGenome, MaterialPhenotype>;
    using MaterialArchives = std::map<int, MaterialArchive>;

} // namespace mle
