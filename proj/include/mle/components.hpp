#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "archive.hpp"
#include "cppn.hpp"
#include "materials.hpp"

namespace mle {

    enum class ComponentClass { Structure, Actuator, Sensor };

    inline constexpr ComponentClass all_component_classes[] = {ComponentClass::Structure, ComponentClass::Actuator, ComponentClass::Sensor};

    inline std::string_view to_string(ComponentClass c)
    {
        switch (c) {
        case ComponentClass::Structure:
            return "structure";
        case ComponentClass::Actuator:
            return "actuator";
        case ComponentClass::Sensor:
            return "sensor";
        }
        return "?";
    }

    inline ComponentClass component_class_from_string(std::string_view s)
    {
        for (auto c : all_component_classes)
            if (to_string(c) == s)
                return c;
        throw ConfigError("unknown component class '" + std::string(s) + "'");
    }

    // Returns the bin a pointer actually lands on: the target if occupied,
    // otherwise the nearest occupied bin (Euclidean over index vectors, ties to
    // the lexicographically smallest index).
    template <typename G, typename P>
    std::pair<BinIndex, const Elite<G, P>*> resolve_bin(const Archive<G, P>& archive, const BinIndex& target)
    {
        if (archive.empty())
            throw UnresolvedPointerError("pointer into empty " + std::string(to_string(archive.level())) + " archive '"
                + archive.process() + "'");
        if (const auto* e = archive.find(target))
            return {target, e};
        long best = std::numeric_limits<long>::max();
        const typename Archive<G, P>::bins_t::value_type* hit = nullptr;
        for (const auto& entry : archive.bins()) {
            long d2 = 0;
            for (std::size_t i = 0; i < target.size(); ++i) {
                const long diff = entry.first[i] - target[i];
                d2 += diff * diff;
            }
            if (d2 < best) { // strict: first (lexicographically smallest) wins ties
                best = d2;
                hit = &entry;
            }
        }
        return {hit->first, &hit->second};
    }

    struct MaterialPointer {
        int process_id = 0;
        std::array<int, 2> bin{};
        friend bool operator==(const MaterialPointer&, const MaterialPointer&) = default;
    };

    inline constexpr std::size_t component_slots = 2;

    struct ComponentGenome {
        ComponentClass cls = ComponentClass::Structure;
        Cppn geometry; // 4 inputs, outputs (occupancy, slot selector)
        std::array<MaterialPointer, component_slots> pointers{};
        friend bool operator==(const ComponentGenome&, const ComponentGenome&) = default;
    };

    struct ComponentLayout {
        int lattice = 4;
        double cell_size = 0.1; // m
        double min_actuation = 0.05;
        double min_sensor_quality = 0.05;

        double cell_volume() const { return cell_size * cell_size * cell_size; }
        int cells() const { return lattice * lattice; }
    };

    struct ComponentPhenotype {
        int lattice = 0;
        std::vector<int> slots; // row-major; -1 = empty, else slot index
        double mass = 0.0;
        double mean_stiffness = 0.0;
        double mean_damping = 0.0;
        double actuation_capability = 0.0;
        double sensor_quality = 0.0;
        double cost = 0.0;
        bool valid_for_class = false;

        int occupied_cells() const
        {
            int n = 0;
            for (int s : slots)
                n += s >= 0;
            return n;
        }

        friend bool operator==(const ComponentPhenotype&, const ComponentPhenotype&) = default;
    };

    /// A resolved lower-level bin one of this component depends on.
    struct MaterialRef {
        int process_id = 0;
        BinIndex bin;
        auto operator<=>(const MaterialRef&) const = default;
    };

    inline MaterialPointer random_material_pointer(const MaterialArchives& materials, Rng& rng)
    {
        std::vector<std::pair<int, const BinIndex*>> occupied;
        for (const auto& [pid, archive] : materials)
            for (const auto& [bin, e] : archive.bins())
                occupied.push_back({pid, &bin});
        if (occupied.empty())
            throw UnresolvedPointerError("no occupied material bins to point at");
        const auto& [pid, bin] = occupied[rng.below(occupied.size())];
        return {pid, {(*bin)[0], (*bin)[1]}};
    }

    inline ComponentGenome random_component(ComponentClass cls, const MaterialArchives& materials, Rng& rng)
    {
        ComponentGenome g;
        g.cls = cls;
        g.geometry = Cppn::random(4, 2, rng);
        for (auto& p : g.pointers)
            p = random_material_pointer(materials, rng);
        return g;
    }

    inline const MaterialArchive& material_archive_for(const MaterialArchives& materials, int process_id)
    {
        auto it = materials.find(process_id);
        if (it == materials.end())
            throw UnresolvedPointerError("pointer to unknown material process " + std::to_string(process_id));
        return it->second;
    }

    /// Occupancy/slot lattice from the geometry CPPN. Never empty: if nothing
    /// is occupied the centre cell is forced on with slot 0.
    inline std::vector<int> component_slots_lattice(const Cppn& geometry, const ComponentLayout& layout)
    {
        const auto lat = query_lattice(geometry, layout.lattice, layout.lattice);
        std::vector<int> slots(static_cast<std::size_t>(layout.cells()), -1);
        bool any = false;
        for (int row = 0; row < layout.lattice; ++row)
            for (int col = 0; col < layout.lattice; ++col) {
                const auto& out = lat.at(col, row);
                if (out[0] > 0.0) {
                    slots[static_cast<std::size_t>(row * layout.lattice + col)] = out[1] <= 0.0 ? 0 : 1;
                    any = true;
                }
            }
        if (!any) {
            const int c = (layout.lattice - 1) / 2;
            slots[static_cast<std::size_t>(c * layout.lattice + c)] = 0;
        }
        return slots;
    }

    /// Fill the aggregate fields of `ph` from its slot lattice: volume-weighted
    /// means of stiffness, damping and sensitivity, max actuation, summed mass
    /// and cost.
    inline void aggregate_component(ComponentPhenotype& ph, const std::array<MaterialPhenotype, component_slots>& mat, ComponentClass cls,
        const ComponentLayout& layout)
    {
        ph.mass = 0.0;
        ph.actuation_capability = 0.0;
        ph.cost = 0.0;
        const double v0 = layout.cell_volume();
        double volume = 0.0;
        double stiffness = 0.0;
        double damping = 0.0;
        double sensing = 0.0;
        for (int s : ph.slots) {
            if (s < 0)
                continue;
            const auto& m = mat[static_cast<std::size_t>(s)];
            volume += v0;
            ph.mass += m.density * v0;
            stiffness += m.stiffness * v0;
            damping += m.damping_ratio * v0;
            sensing += m.sensitivity * v0;
            ph.actuation_capability = std::max(ph.actuation_capability, m.actuation_gain);
            ph.cost += m.unit_cost * v0 * 1e3;
        }
        ph.mean_stiffness = stiffness / volume;
        ph.mean_damping = damping / volume;
        ph.sensor_quality = sensing / volume;

        switch (cls) {
        case ComponentClass::Structure:
            ph.valid_for_class = true;
            break;
        case ComponentClass::Actuator:
            ph.valid_for_class = ph.actuation_capability >= layout.min_actuation;
            break;
        case ComponentClass::Sensor:
            ph.valid_for_class = ph.sensor_quality >= layout.min_sensor_quality;
            break;
        }
    }

    inline ComponentPhenotype express_component(const ComponentGenome& genome, const MaterialArchives& materials,
        const ComponentLayout& layout = {}, std::vector<MaterialRef>* resolved = nullptr)
    {
        ComponentPhenotype ph;
        ph.lattice = layout.lattice;
        ph.slots = component_slots_lattice(genome.geometry, layout);

        std::array<bool, component_slots> used{};
        for (int s : ph.slots)
            if (s >= 0)
                used[static_cast<std::size_t>(s)] = true;

        std::array<MaterialPhenotype, component_slots> mat{};
        std::set<MaterialRef> refs;
        for (std::size_t s = 0; s < component_slots; ++s) {
            if (!used[s])
                continue;
            const auto& ptr = genome.pointers[s];
            const auto& archive = material_archive_for(materials, ptr.process_id);
            auto [bin, elite] = resolve_bin(archive, BinIndex{ptr.bin[0], ptr.bin[1]});
            mat[s] = elite->phenotype;
            refs.insert({ptr.process_id, bin});
        }
        if (resolved)
            resolved->assign(refs.begin(), refs.end());

        aggregate_component(ph, mat, genome.cls, layout);
        return ph;
    }

    /// Archive features: (mass, log10 mean stiffness).
    inline std::vector<double> component_features(const ComponentPhenotype& p) { return {p.mass, std::log10(p.mean_stiffness)}; }

    inline double component_fitness(const ComponentPhenotype& p) { return -p.cost; }

    inline FeatureSpec default_component_spec() { return FeatureSpec({{0.0, 32.0, 10}, {2.0, 6.0, 10}}); }

    struct ComponentMutation {
        double geometry = 0.7;
        double pointer = 0.3;
    };

    inline ComponentGenome mutate_component(const ComponentGenome& genome, Rng& rng, const MaterialArchives& materials,
        const ComponentMutation& rates = {}, const CppnMutationRates& cppn_rates = {})
    {
        ComponentGenome child = genome;
        if (rng.bernoulli(rates.geometry))
            child.geometry = mutate(genome.geometry, rng, cppn_rates);
        for (auto& p : child.pointers) {
            if (!rng.bernoulli(rates.pointer))
                continue;
            auto it = materials.find(p.process_id);
            for (std::size_t d = 0; d < 2; ++d) {
                const int hi = it == materials.end() ? p.bin[d] : it->second.spec().dims[d].bins - 1;
                p.bin[d] = clamp(p.bin[d] + static_cast<int>(rng.integer(-1, 1)), 0, std::max(hi, 0));
            }
        }
        return child;
    }

    inline void to_json(nlohmann::json& j, const ComponentGenome& g)
    {
        nlohmann::json ptrs = nlohmann::json::array();
        for (const auto& p : g.pointers)
            ptrs.push_back({{"process", p.process_id}, {"i", p.bin[0]}, {"j", p.bin[1]}});
        j = {{"class", to_string(g.cls)}, {"geometry", g.geometry}, {"pointers", ptrs}};
    }

    inline void from_json(const nlohmann::json& j, ComponentGenome& g)
    {
        g.cls = component_class_from_string(j.at("class").get<std::string>());
        g.geometry = j.at("geometry").get<Cppn>();
        const auto& ptrs = j.at("pointers");
        if (ptrs.size() != component_slots)
            throw LoadError("component genome must have exactly " + std::to_string(component_slots) + " pointers");
        for (std::size_t s = 0; s < component_slots; ++s)
            g.pointers[s] = {ptrs[s].at("process").get<int>(), {ptrs[s].at("i").get<int>(), ptrs[s].at("j").get<int>()}};
    }

    inline void to_json(nlohmann::json& j, const ComponentPhenotype& p)
    {
        j = {{"lattice", p.lattice},
            {"slots", p.slots},
            {"mass", p.mass},
            {"mean_stiffness", p.mean_stiffness},
            {"mean_damping", p.mean_damping},
            {"actuation_capability", p.actuation_capability},
            {"sensor_quality", p.sensor_quality},
            {"cost", p.cost},
            {"valid_for_class", p.valid_for_class}};
    }

    inline void from_json(const nlohmann::json& j, ComponentPhenotype& p)
    {
        p.lattice = j.at("lattice").get<int>();
        p.slots = j.at("slots").get<std::vector<int>>();
        p.mass = j.at("mass").get<double>();
        p.mean_stiffness = j.at("mean_stiffness").get<double>();
        p.mean_damping = j.at("mean_damping").get<double>();
        p.actuation_capability = j.at("actuation_capability").get<double>();
        p.sensor_quality = j.at("sensor_quality").get<double>();
        p.cost = j.at("cost").get<double>();
        p.valid_for_class = j.at("valid_for_class").get<bool>();
    }

    using ComponentArchive = Archive<ComponentGenome, ComponentPhenotype>;
    using ComponentArchives = std::map<ComponentClass, ComponentArchive>;

} // namespace mle
