#pragma once

#include <utility>
#include <vector>

#include <mle/components.hpp>
#include <mle/cppn.hpp>
#include <mle/materials.hpp>
#include <mle/robots.hpp>

namespace fixture {

    using namespace mle;

    /// Lattice-query CPPN whose outputs ignore position: output o is
    /// 2*sigmoid(w[o]) - 1, so its sign is the sign of w[o].
    inline Cppn constant_cppn(const std::vector<double>& w)
    {
        std::vector<CppnNode> nodes;
        for (int i = 0; i < 4; ++i)
            nodes.push_back({i, Activation::Linear});
        std::vector<CppnConnection> conns;
        for (std::size_t o = 0; o < w.size(); ++o) {
            nodes.push_back({4 + static_cast<int>(o), Activation::Linear});
            conns.push_back({3, 4 + static_cast<int>(o), w[o]});
        }
        return Cppn(4, static_cast<int>(w.size()), std::move(nodes), std::move(conns));
    }

    inline MaterialPhenotype material(double rho, double k, double c, double a, double s, double cost)
    {
        return {rho, k, c, a, s, cost};
    }

    inline void place(MaterialArchives& archives, int process, BinIndex bin, const MaterialPhenotype& p, std::uint64_t id = 0)
    {
        auto [it, fresh] = archives.try_emplace(process, default_material_spec(), Level::Material, std::to_string(process));
        Elite<MaterialGenome, MaterialPhenotype> e;
        e.genome.process_id = process;
        e.phenotype = p;
        e.fitness = -p.unit_cost;
        e.features = material_features(p);
        e.eval_id = id;
        it->second.assign(bin, e);
    }

    inline void place(ComponentArchives& archives, ComponentClass cls, BinIndex bin, const ComponentPhenotype& p, std::uint64_t id = 0)
    {
        auto [it, fresh] = archives.try_emplace(cls, default_component_spec(), Level::Component, std::string(to_string(cls)));
        Elite<ComponentGenome, ComponentPhenotype> e;
        e.genome.cls = cls;
        e.genome.geometry = constant_cppn({1.0, -1.0});
        e.phenotype = p;
        e.fitness = -p.cost;
        e.features = component_features(p);
        e.eval_id = id;
        it->second.assign(bin, e);
    }

    inline ComponentPhenotype component(double mass, double k, double c, double act, double sense)
    {
        ComponentPhenotype p;
        p.lattice = 4;
        p.slots.assign(16, 0);
        p.mass = mass;
        p.mean_stiffness = k;
        p.mean_damping = c;
        p.actuation_capability = act;
        p.sensor_quality = sense;
        p.cost = 16.0;
        p.valid_for_class = true;
        return p;
    }

    /// One elite per class at bin (0, 0), all with the same mechanics.
    inline ComponentArchives uniform_components(const ComponentPhenotype& p)
    {
        ComponentArchives archives;
        for (auto cls : all_component_classes)
            place(archives, cls, {0, 0}, p);
        return archives;
    }

    /// Body-CPPN outputs: occupancy, class scores, pointers, phase.
    inline Cppn constant_body(double occupancy, ComponentClass cls, double phase_w = 0.0)
    {
        std::vector<double> w(body_output::count, -1.0);
        w[body_output::occupancy] = occupancy;
        w[body_output::structure + static_cast<int>(cls)] = 1.0;
        w[body_output::pointer_i] = -3.0;
        w[body_output::pointer_j] = -3.0;
        w[body_output::phase] = phase_w;
        return constant_cppn(w);
    }

} // namespace fixture
