#pragma once

#include <algorithm>
#include <optional>
#include <vector>

#include "components.hpp"
#include "materials.hpp"
#include "physics.hpp"
#include "robots.hpp"

namespace mle {

    /// Fitness recorded for a simulation that blew up.
    inline constexpr double diverged_fitness = -1e6;

    struct ComponentRef {
        ComponentClass cls = ComponentClass::Structure;
        BinIndex bin;
        auto operator<=>(const ComponentRef&) const = default;
    };

    /// Everything an evaluation reads besides the genome. Archives are
    /// borrowed snapshots and must outlive the call.
    struct EvaluationContext {
        ProcessTable processes = default_process_table();
        const MaterialArchives* materials = nullptr;
        const ComponentArchives* components = nullptr;
        ComponentLayout layout;
        SimConfig real = SimConfig::real();
        SimConfig virtual_sim = SimConfig::virtual_();

        const SimConfig& sim(Fidelity f) const { return f == Fidelity::Real ? real : virtual_sim; }
    };

    template <typename Phenotype>
    struct Evaluation {
        double fitness = 0.0;
        std::vector<double> features;
        std::vector<double> descriptor;
        Phenotype phenotype{};
        bool valid = true;    // component class validity
        bool diverged = false; // robot simulation exploded
    };

    // Material and component evaluation is closed-form and identical at both
    // fidelities; the argument is accepted so every level has the same shape.
    inline Evaluation<MaterialPhenotype> evaluate(const MaterialGenome& genome, Fidelity, const EvaluationContext& ctx)
    {
        Evaluation<MaterialPhenotype> ev;
        ev.phenotype = express_material(genome, ctx.processes);
        ev.fitness = material_fitness(ev.phenotype);
        ev.features = material_features(ev.phenotype);
        ev.descriptor = ev.features;
        return ev;
    }

    inline Evaluation<ComponentPhenotype> evaluate(const ComponentGenome& genome, Fidelity, const EvaluationContext& ctx,
        std::vector<MaterialRef>* refs = nullptr)
    {
        if (!ctx.materials)
            throw UnresolvedPointerError("component evaluation without material archives");
        Evaluation<ComponentPhenotype> ev;
        ev.phenotype = express_component(genome, *ctx.materials, ctx.layout, refs);
        ev.fitness = component_fitness(ev.phenotype);
        ev.features = component_features(ev.phenotype);
        ev.descriptor = ev.features;
        ev.valid = ev.phenotype.valid_for_class;
        return ev;
    }

    /// Component bins a robot resolves to, deduplicated and ordered.
    inline std::vector<ComponentRef> component_refs(const std::vector<std::optional<ResolvedComponent>>& resolved)
    {
        std::vector<ComponentRef> refs;
        for (const auto& r : resolved)
            if (r)
                refs.push_back({r->cls, r->bin});
        std::sort(refs.begin(), refs.end());
        refs.erase(std::unique(refs.begin(), refs.end()), refs.end());
        return refs;
    }

    struct ExpressedRobot {
        BodyPlan plan;
        std::vector<std::optional<ResolvedComponent>> resolved;
        SpringMassModel model;
    };

    inline ExpressedRobot express_for_simulation(const RobotGenome& genome, const EvaluationContext& ctx)
    {
        if (!ctx.components)
            throw UnresolvedPointerError("robot evaluation without component archives");
        ExpressedRobot out;
        out.plan = express_robot(genome, *ctx.components);
        out.resolved = resolve_body(out.plan, *ctx.components);
        out.model = build_model(out.plan, out.resolved, genome.controller, ctx.layout.cells());
        return out;
    }

    inline Evaluation<RobotSummary> evaluate(const RobotGenome& genome, Fidelity fidelity, const EvaluationContext& ctx,
        std::vector<ComponentRef>* refs = nullptr)
    {
        const auto robot = express_for_simulation(genome, ctx);
        if (refs)
            *refs = component_refs(robot.resolved);

        const auto desc = descriptor(robot.plan);
        Evaluation<RobotSummary> ev;
        ev.phenotype.cell_count = desc.cell_count;
        ev.phenotype.actuator_fraction = desc.actuator_fraction;
        ev.features = desc.features();
        try {
            const auto sim = simulate(robot.model, ctx.sim(fidelity));
            ev.fitness = sim.fitness;
            ev.phenotype.mean_speed = sim.mean_speed;
        } catch (const DivergedError&) {
            ev.fitness = diverged_fitness;
            ev.diverged = true;
        }
        ev.descriptor = {ev.features[0], ev.features[1], ev.phenotype.mean_speed};
        return ev;
    }

} // namespace mle
