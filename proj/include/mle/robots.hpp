#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "archive.hpp"
#include "components.hpp"
#include "cppn.hpp"

namespace mle {

    struct ComponentPointer {
        ComponentClass cls = ComponentClass::Structure;
        std::array<int, 2> bin{};
        friend bool operator==(const ComponentPointer&, const ComponentPointer&) = default;
    };

    struct Controller {
        static constexpr double omega_min = 0.5, omega_max = 4.0; // Hz
        static constexpr double amplitude_min = 0.0, amplitude_max = 1.0;
        static constexpr double gain_min = -1.0, gain_max = 1.0;

        double omega = 1.0;
        double amplitude = 0.5;
        double feedback_gain = 0.0;

        Controller clamped() const
        {
            return {clamp(omega, omega_min, omega_max), clamp(amplitude, amplitude_min, amplitude_max),
                clamp(feedback_gain, gain_min, gain_max)};
        }

        friend bool operator==(const Controller&, const Controller&) = default;
    };

    // Body CPPN outputs, in order.
    namespace body_output {
        inline constexpr int occupancy = 0;
        inline constexpr int structure = 1;
        inline constexpr int actuator = 2;
        inline constexpr int sensor = 3;
        inline constexpr int pointer_i = 4;
        inline constexpr int pointer_j = 5;
        inline constexpr int phase = 6;
        inline constexpr int count = 7;
    } // namespace body_output

    struct RobotGenome {
        Cppn body;
        Controller controller;
        friend bool operator==(const RobotGenome&, const RobotGenome&) = default;
    };

    inline constexpr int body_lattice = 6;

    struct BodyCell {
        bool occupied = false;
        ComponentPointer pointer;
        double phase = 0.0; // radians
        friend bool operator==(const BodyCell&, const BodyCell&) = default;
    };

    struct BodyPlan {
        std::array<BodyCell, body_lattice * body_lattice> cells{}; // row-major, row 0 at the bottom
        double sensor_quality = 0.0;

        BodyCell& at(int col, int row) { return cells[static_cast<std::size_t>(row * body_lattice + col)]; }
        const BodyCell& at(int col, int row) const { return cells[static_cast<std::size_t>(row * body_lattice + col)]; }

        int occupied_count() const
        {
            int n = 0;
            for (const auto& c : cells)
                n += c.occupied;
            return n;
        }

        friend bool operator==(const BodyPlan&, const BodyPlan&) = default;
    };

    struct RobotDescriptor {
        int cell_count = 0;
        double actuator_fraction = 0.0;

        std::vector<double> features() const { return {static_cast<double>(cell_count), actuator_fraction}; }
    };

    inline FeatureSpec default_robot_spec() { return FeatureSpec({{1.0, 36.0, 12}, {0.0, 1.0, 10}}); }

    /// Map a CPPN output in [-1, 1] onto [0, bins).
    inline int pointer_coordinate(double p, int bins)
    {
        const double u = clamp((p + 1.0) / 2.0, 0.0, 1.0);
        return clamp(static_cast<int>(std::floor(u * bins)), 0, bins - 1);
    }

    inline ComponentClass argmax_class(double s, double a, double n)
    {
        // ties go structure > actuator > sensor
        if (s >= a && s >= n)
            return ComponentClass::Structure;
        if (a >= n)
            return ComponentClass::Actuator;
        return ComponentClass::Sensor;
    }

    /// Keep only the largest 4-connected occupied region. On a size tie the
    /// region holding the lexicographically smallest (row, col) cell wins.
    /// Cells are row-major: mask[row * width + col].
    inline std::vector<bool> largest_region(const std::vector<bool>& mask, int width, int height)
    {
        std::vector<int> label(mask.size(), -1);
        std::vector<int> sizes;
        for (int start = 0; start < width * height; ++start) {
            if (!mask[static_cast<std::size_t>(start)] || label[static_cast<std::size_t>(start)] >= 0)
                continue;
            const int id = static_cast<int>(sizes.size());
            int size = 0;
            std::vector<int> stack{start};
            label[static_cast<std::size_t>(start)] = id;
            while (!stack.empty()) {
                const int c = stack.back();
                stack.pop_back();
                ++size;
                const int row = c / width, col = c % width;
                const int nbrs[4][2] = {{col - 1, row}, {col + 1, row}, {col, row - 1}, {col, row + 1}};
                for (const auto& [nc, nr] : nbrs) {
                    if (nc < 0 || nr < 0 || nc >= width || nr >= height)
                        continue;
                    const auto n = static_cast<std::size_t>(nr * width + nc);
                    if (mask[n] && label[n] < 0) {
                        label[n] = id;
                        stack.push_back(static_cast<int>(n));
                    }
                }
            }
            sizes.push_back(size);
        }
        std::vector<bool> keep(mask.size(), false);
        if (sizes.empty())
            return keep;
        int best = 0;
        for (int i = 1; i < static_cast<int>(sizes.size()); ++i)
            if (sizes[static_cast<std::size_t>(i)] > sizes[static_cast<std::size_t>(best)])
                best = i;
        for (std::size_t i = 0; i < mask.size(); ++i)
            keep[i] = label[i] == best;
        return keep;
    }

    inline const ComponentArchive& component_archive_for(const ComponentArchives& archives, ComponentClass cls)
    {
        auto it = archives.find(cls);
        if (it == archives.end() || it->second.empty())
            throw UnresolvedPointerError("no occupied " + std::string(to_string(cls)) + " components to point at");
        return it->second;
    }

    struct ResolvedComponent {
        ComponentClass cls = ComponentClass::Structure;
        BinIndex bin;
        ComponentPhenotype phenotype;
    };

    /// Resolved component per cell (row-major), empty for vacant cells.
    inline std::vector<std::optional<ResolvedComponent>> resolve_body(const BodyPlan& plan, const ComponentArchives& archives)
    {
        std::vector<std::optional<ResolvedComponent>> out(plan.cells.size());
        for (std::size_t i = 0; i < plan.cells.size(); ++i) {
            const auto& cell = plan.cells[i];
            if (!cell.occupied)
                continue;
            const auto& archive = component_archive_for(archives, cell.pointer.cls);
            auto [bin, elite] = resolve_bin(archive, BinIndex{cell.pointer.bin[0], cell.pointer.bin[1]});
            out[i] = ResolvedComponent{cell.pointer.cls, bin, elite->phenotype};
        }
        return out;
    }

    inline BodyPlan express_robot(const RobotGenome& genome, const ComponentArchives& archives)
    {
        for (auto cls : all_component_classes)
            component_archive_for(archives, cls); // throws on an empty class archive

        const auto lat = query_lattice(genome.body, body_lattice, body_lattice);
        BodyPlan plan;
        std::vector<bool> mask(plan.cells.size(), false);
        for (int row = 0; row < body_lattice; ++row)
            for (int col = 0; col < body_lattice; ++col) {
                const auto& out = lat.at(col, row);
                auto& cell = plan.at(col, row);
                cell.pointer.cls = argmax_class(out[body_output::structure], out[body_output::actuator], out[body_output::sensor]);
                const auto& spec = archives.at(cell.pointer.cls).spec();
                cell.pointer.bin = {pointer_coordinate(out[body_output::pointer_i], spec.dims[0].bins),
                    pointer_coordinate(out[body_output::pointer_j], spec.dims[1].bins)};
                cell.phase = std::numbers::pi * out[body_output::phase];
                mask[static_cast<std::size_t>(row * body_lattice + col)] = out[body_output::occupancy] > 0.0;
            }

        const auto keep = largest_region(mask, body_lattice, body_lattice);
        bool any = false;
        for (std::size_t i = 0; i < plan.cells.size(); ++i) {
            plan.cells[i].occupied = keep[i];
            any = any || keep[i];
        }
        if (!any) {
            auto& cell = plan.at(2, 2);
            cell.occupied = true;
            cell.pointer = {ComponentClass::Structure, {0, 0}};
        }

        const auto resolved = resolve_body(plan, archives);
        double q = 0.0;
        int sensors = 0;
        for (const auto& r : resolved)
            if (r && r->cls == ComponentClass::Sensor) {
                q += r->phenotype.sensor_quality;
                ++sensors;
            }
        plan.sensor_quality = sensors > 0 ? q / sensors : 0.0;
        return plan;
    }

    inline RobotDescriptor descriptor(const BodyPlan& plan)
    {
        RobotDescriptor d;
        int actuators = 0;
        for (const auto& c : plan.cells)
            if (c.occupied) {
                ++d.cell_count;
                actuators += c.pointer.cls == ComponentClass::Actuator;
            }
        d.actuator_fraction = d.cell_count > 0 ? static_cast<double>(actuators) / d.cell_count : 0.0;
        return d;
    }

    struct RobotMutation {
        double controller_prob = 0.5;
        double controller_sigma = 0.1; // fraction of each parameter's range

        static RobotMutation none() { return {0.0, 0.0}; }
    };

    inline RobotGenome random_robot(Rng& rng)
    {
        RobotGenome g;
        g.body = Cppn::random(4, body_output::count, rng);
        g.controller.omega = rng.uniform(Controller::omega_min, Controller::omega_max);
        g.controller.amplitude = rng.uniform(Controller::amplitude_min, Controller::amplitude_max);
        g.controller.feedback_gain = rng.uniform(Controller::gain_min, Controller::gain_max);
        return g;
    }

    inline RobotGenome mutate_robot(const RobotGenome& genome, Rng& rng, const RobotMutation& rates = {},
        const CppnMutationRates& cppn_rates = {})
    {
        RobotGenome child = genome;
        child.body = mutate(genome.body, rng, cppn_rates);
        auto perturb = [&](double& v, double lo, double hi) {
            if (rng.bernoulli(rates.controller_prob))
                v = clamp(v + rng.normal(0.0, rates.controller_sigma * (hi - lo)), lo, hi);
        };
        perturb(child.controller.omega, Controller::omega_min, Controller::omega_max);
        perturb(child.controller.amplitude, Controller::amplitude_min, Controller::amplitude_max);
        perturb(child.controller.feedback_gain, Controller::gain_min, Controller::gain_max);
        return child;
    }

    inline void to_json(nlohmann::json& j, const Controller& c)
    {
        j = {{"omega", c.omega}, {"amplitude", c.amplitude}, {"feedback_gain", c.feedback_gain}};
    }

    inline void from_json(const nlohmann::json& j, Controller& c)
    {
        c = Controller{j.at("omega").get<double>(), j.at("amplitude").get<double>(), j.at("feedback_gain").get<double>()}.clamped();
    }

    inline void to_json(nlohmann::json& j, const RobotGenome& g) { j = {{"body", g.body}, {"controller", g.controller}}; }

    inline void from_json(const nlohmann::json& j, RobotGenome& g)
    {
        g.body = j.at("body").get<Cppn>();
        if (g.body.input_arity() != 4 || g.body.output_arity() != body_output::count)
            throw LoadError("robot body cppn must have 4 inputs and 7 outputs");
        g.controller = j.at("controller").get<Controller>();
    }

    inline nlohmann::json body_plan_to_json(const BodyPlan& plan)
    {
        nlohmann::json cells = nlohmann::json::array();
        for (int row = 0; row < body_lattice; ++row)
            for (int col = 0; col < body_lattice; ++col) {
                const auto& c = plan.at(col, row);
                if (!c.occupied)
                    continue;
                cells.push_back({{"col", col},
                    {"row", row},
                    {"class", to_string(c.pointer.cls)},
                    {"bin", c.pointer.bin},
                    {"phase", c.phase}});
            }
        return {{"lattice", body_lattice}, {"cells", cells}, {"sensor_quality", plan.sensor_quality}};
    }

    /// What the robot archive caches per elite: the descriptor and the
    /// auxiliary behaviour measure from the run that produced its fitness.
    struct RobotSummary {
        int cell_count = 0;
        double actuator_fraction = 0.0;
        double mean_speed = 0.0;
        friend bool operator==(const RobotSummary&, const RobotSummary&) = default;
    };

    inline void to_json(nlohmann::json& j, const RobotSummary& s)
    {
        j = {{"cell_count", s.cell_count}, {"actuator_fraction", s.actuator_fraction}, {"mean_speed", s.mean_speed}};
    }

    inline void from_json(const nlohmann::json& j, RobotSummary& s)
    {
        s.cell_count = j.at("cell_count").get<int>();
        s.actuator_fraction = j.at("actuator_fraction").get<double>();
        s.mean_speed = j.at("mean_speed").get<double>();
    }

    using RobotArchive = Archive<RobotGenome, RobotSummary>;

} // namespace mle
