#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>

#include <json.hpp>
#include <toml.hpp>

#include "archive.hpp"
#include "common.hpp"
#include "components.hpp"
#include "cppn.hpp"
#include "materials.hpp"
#include "physics.hpp"
#include "robots.hpp"

namespace mle {

    struct Budgets {
        long material = 2000;
        long component = 2000;
        long robot = 2000;
        long fine = 100;

        long of(Level level) const
        {
            switch (level) {
            case Level::Material:
                return material;
            case Level::Component:
                return component;
            case Level::Robot:
                return robot;
            }
            return 0;
        }
    };

    struct ExperimentConfig {
        std::uint64_t seed = 1;
        Budgets budgets;
        std::optional<long> fine_per_tranche; // default: fine / number of tranches, rounded up
        long promote_interval = 50;           // robot iterations per promotion tranche
        std::array<double, 3> schedule_weights{2.0, 3.0, 5.0}; // material, component, robot

        int bootstrap_materials = 16;
        int seed_components = 20;
        int seed_robots = 20;
        int seed_retries = 10;

        ProcessTable processes = default_process_table();
        FeatureSpec material_spec = default_material_spec();
        FeatureSpec component_spec = default_component_spec();
        FeatureSpec robot_spec = default_robot_spec();

        CppnMutationRates cppn_mutation;
        MaterialMutation material_mutation;
        ComponentMutation component_mutation;
        RobotMutation robot_mutation;
        ComponentLayout layout;

        SimConfig sim_real = SimConfig::real();
        SimConfig sim_virtual = SimConfig::virtual_();

        int knn_k = 5;
        double gap_prior = 0.1;

        std::string output_dir = "out";
        bool record_wallclock = false;

        long tranche_budget() const
        {
            if (fine_per_tranche)
                return *fine_per_tranche;
            const long tranches = std::max(1L, budgets.robot / std::max(1L, promote_interval));
            return (budgets.fine + tranches - 1) / tranches;
        }

        void validate() const
        {
            if (budgets.material < 0 || budgets.component < 0 || budgets.robot < 0 || budgets.fine < 0)
                throw ConfigError("budgets must be >= 0");
            if (fine_per_tranche && *fine_per_tranche < 0)
                throw ConfigError("budgets.fine_per_tranche must be >= 0");
            if (promote_interval < 1)
                throw ConfigError("budgets.promote_interval must be >= 1");
            for (double w : schedule_weights)
                if (!(w > 0.0))
                    throw ConfigError("schedule weights must be > 0");
            if (bootstrap_materials < 1 || seed_components < 1 || seed_robots < 1 || seed_retries < 1)
                throw ConfigError("bootstrap/seed sizes must be >= 1");
            if (processes.empty())
                throw ConfigError("at least one material process is required");
            material_spec.validate();
            component_spec.validate();
            robot_spec.validate();
            for (const auto* s : {&material_spec, &component_spec, &robot_spec})
                if (s->dim_count() != 2)
                    throw ConfigError("level archives are two-dimensional");
            if (layout.lattice < 1 || !(layout.cell_size > 0.0))
                throw ConfigError("component lattice must be >= 1 and cell size > 0");
            sim_real.validate();
            sim_virtual.validate();
            if (knn_k < 1)
                throw ConfigError("hybrid.k must be >= 1");
            if (!(gap_prior >= 0.0))
                throw ConfigError("hybrid.gap_prior must be >= 0");
        }
    };

    namespace detail {

        // Reads a TOML table and remembers which keys were consumed, so
        // anything left over can be reported as unknown.
        class TableReader {
        public:
            TableReader(const toml::table& table, std::string path) : _table(table), _path(std::move(path)) {}

            ~TableReader() = default;
            TableReader(const TableReader&) = delete;
            TableReader& operator=(const TableReader&) = delete;

            template <typename T>
            void read(std::string_view key, T& out)
            {
                const toml::node* node = _table.get(key);
                if (!node)
                    return;
                _used.insert(std::string(key));
                if constexpr (std::is_same_v<T, bool>) {
                    auto v = node->value_exact<bool>();
                    if (!v)
                        fail(key, "a boolean");
                    out = *v;
                }
                else if constexpr (std::is_same_v<T, std::string>) {
                    auto v = node->value_exact<std::string>();
                    if (!v)
                        fail(key, "a string");
                    out = *v;
                }
                else if constexpr (std::is_floating_point_v<T>) {
                    auto v = node->value<double>();
                    if (!v || !(node->is_integer() || node->is_floating_point()))
                        fail(key, "a number");
                    out = static_cast<T>(*v);
                }
                else {
                    auto v = node->value_exact<std::int64_t>();
                    if (!v)
                        fail(key, "an integer");
                    out = static_cast<T>(*v);
                }
            }

            template <typename T>
            void read(std::string_view key, std::optional<T>& out)
            {
                if (!_table.get(key))
                    return;
                T v{};
                read(key, v);
                out = v;
            }

            std::vector<double> read_numbers(std::string_view key)
            {
                const toml::node* node = _table.get(key);
                if (!node)
                    return {};
                _used.insert(std::string(key));
                const auto* arr = node->as_array();
                if (!arr)
                    fail(key, "an array of numbers");
                std::vector<double> out;
                for (const auto& el : *arr) {
                    auto v = el.value<double>();
                    if (!v || !(el.is_integer() || el.is_floating_point()))
                        fail(key, "an array of numbers");
                    out.push_back(*v);
                }
                return out;
            }

            const toml::table* table(std::string_view key)
            {
                const toml::node* node = _table.get(key);
                if (!node)
                    return nullptr;
                _used.insert(std::string(key));
                const auto* t = node->as_table();
                if (!t)
                    fail(key, "a table");
                return t;
            }

            std::string child_path(std::string_view key) const { return _path.empty() ? std::string(key) : _path + "." + std::string(key); }

            const toml::table& raw() const { return _table; }

            void mark_used(std::string_view key) { _used.insert(std::string(key)); }

            void finish() const
            {
                for (const auto& [k, v] : _table)
                    if (!_used.count(std::string(k.str())))
                        throw ConfigError("unknown config key '" + child_path(k.str()) + "'");
            }

        private:
            [[noreturn]] void fail(std::string_view key, std::string_view expected) const
            {
                throw ConfigError("config key '" + child_path(key) + "' must be " + std::string(expected));
            }

            const toml::table& _table;
            std::string _path;
            std::set<std::string> _used;
        };

        inline void read_spec(TableReader& parent, std::string_view key, FeatureSpec& spec)
        {
            const auto* t = parent.table(key);
            if (!t)
                return;
            TableReader r(*t, parent.child_path(key));
            auto lower = r.read_numbers("lower");
            auto upper = r.read_numbers("upper");
            auto bins = r.read_numbers("bins");
            r.finish();
            const std::size_t n = spec.dim_count();
            if (lower.empty())
                for (const auto& d : spec.dims)
                    lower.push_back(d.lower);
            if (upper.empty())
                for (const auto& d : spec.dims)
                    upper.push_back(d.upper);
            if (bins.empty())
                for (const auto& d : spec.dims)
                    bins.push_back(d.bins);
            if (lower.size() != n || upper.size() != n || bins.size() != n)
                throw ConfigError("archive." + std::string(key) + " needs " + std::to_string(n) + " entries in lower/upper/bins");
            std::vector<FeatureSpec::Dim> dims;
            for (std::size_t i = 0; i < n; ++i) {
                if (bins[i] != static_cast<int>(bins[i]))
                    throw ConfigError("archive." + std::string(key) + ".bins must be integers");
                dims.push_back({lower[i], upper[i], static_cast<int>(bins[i])});
            }
            try {
                spec = FeatureSpec(std::move(dims));
            }
            catch (const ConfigError& e) {
                throw ConfigError("archive." + std::string(key) + ": " + e.what());
            }
        }

        inline void read_sim(TableReader& parent, std::string_view key, SimConfig& sim)
        {
            const auto* t = parent.table(key);
            if (!t)
                return;
            TableReader r(*t, parent.child_path(key));
            r.read("dt", sim.dt);
            r.read("duration", sim.duration);
            r.finish();
        }

    } // namespace detail

    inline ExperimentConfig parse_config(std::string_view text, std::string_view source = "<config>")
    {
        toml::table root;
        try {
            root = toml::parse(text, source);
        }
        catch (const toml::parse_error& e) {
            std::ostringstream msg;
            msg << source << ": " << e.description() << " (line " << e.source().begin.line << ")";
            throw ConfigError(msg.str());
        }

        ExperimentConfig cfg;
        detail::TableReader top(root, "");
        std::int64_t seed = static_cast<std::int64_t>(cfg.seed);
        top.read("seed", seed);
        cfg.seed = static_cast<std::uint64_t>(seed);

        if (const auto* t = top.table("budgets")) {
            detail::TableReader r(*t, "budgets");
            r.read("material", cfg.budgets.material);
            r.read("component", cfg.budgets.component);
            r.read("robot", cfg.budgets.robot);
            r.read("fine", cfg.budgets.fine);
            r.read("fine_per_tranche", cfg.fine_per_tranche);
            r.read("promote_interval", cfg.promote_interval);
            r.finish();
        }
        if (const auto* t = top.table("schedule")) {
            detail::TableReader r(*t, "schedule");
            r.read("material", cfg.schedule_weights[0]);
            r.read("component", cfg.schedule_weights[1]);
            r.read("robot", cfg.schedule_weights[2]);
            r.finish();
        }
        if (const auto* t = top.table("bootstrap")) {
            detail::TableReader r(*t, "bootstrap");
            r.read("materials", cfg.bootstrap_materials);
            r.read("components", cfg.seed_components);
            r.read("robots", cfg.seed_robots);
            r.read("retries", cfg.seed_retries);
            r.finish();
        }
        if (const auto* t = top.table("processes")) {
            detail::TableReader r(*t, "processes");
            if (const auto* mt = r.table("material")) {
                detail::TableReader mr(*mt, "processes.material");
                ProcessTable table;
                for (const auto& [key, node] : *mt) {
                    const std::string name(key.str());
                    int id = 0;
                    try {
                        std::size_t used = 0;
                        id = std::stoi(name, &used);
                        if (used != name.size() || id < 0)
                            throw std::invalid_argument(name);
                    }
                    catch (const std::exception&) {
                        throw ConfigError("material process id '" + name + "' must be a non-negative integer");
                    }
                    const auto* pt = mr.table(name);
                    if (!pt)
                        continue;
                    detail::TableReader pr(*pt, mr.child_path(name));
                    MaterialProcess p;
                    pr.read("alpha_rho", p.alpha_rho);
                    pr.read("alpha_k", p.alpha_k);
                    pr.finish();
                    if (!(p.alpha_rho > 0.0) || !(p.alpha_k > 0.0))
                        throw ConfigError("material process " + name + " needs positive alpha_rho and alpha_k");
                    table[id] = p;
                }
                mr.finish();
                cfg.processes = std::move(table);
            }
            r.finish();
        }
        if (const auto* t = top.table("archive")) {
            detail::TableReader r(*t, "archive");
            detail::read_spec(r, "material", cfg.material_spec);
            detail::read_spec(r, "component", cfg.component_spec);
            detail::read_spec(r, "robot", cfg.robot_spec);
            r.finish();
        }
        if (const auto* t = top.table("mutation")) {
            detail::TableReader r(*t, "mutation");
            if (const auto* c = r.table("cppn")) {
                detail::TableReader cr(*c, "mutation.cppn");
                cr.read("weight_prob", cfg.cppn_mutation.weight_prob);
                cr.read("weight_sigma", cfg.cppn_mutation.weight_sigma);
                cr.read("add_connection", cfg.cppn_mutation.add_connection);
                cr.read("add_node", cfg.cppn_mutation.add_node);
                cr.read("change_activation", cfg.cppn_mutation.change_activation);
                cr.finish();
            }
            if (const auto* c = r.table("material")) {
                detail::TableReader cr(*c, "mutation.material");
                cr.read("prob", cfg.material_mutation.prob);
                cr.read("sigma", cfg.material_mutation.sigma);
                cr.finish();
            }
            if (const auto* c = r.table("component")) {
                detail::TableReader cr(*c, "mutation.component");
                cr.read("geometry", cfg.component_mutation.geometry);
                cr.read("pointer", cfg.component_mutation.pointer);
                cr.finish();
            }
            if (const auto* c = r.table("robot")) {
                detail::TableReader cr(*c, "mutation.robot");
                cr.read("controller_prob", cfg.robot_mutation.controller_prob);
                cr.read("controller_sigma", cfg.robot_mutation.controller_sigma);
                cr.finish();
            }
            r.finish();
        }
        if (const auto* t = top.table("component")) {
            detail::TableReader r(*t, "component");
            r.read("lattice", cfg.layout.lattice);
            r.read("cell_size", cfg.layout.cell_size);
            r.read("min_actuation", cfg.layout.min_actuation);
            r.read("min_sensor_quality", cfg.layout.min_sensor_quality);
            r.finish();
        }
        if (const auto* t = top.table("sim")) {
            detail::TableReader r(*t, "sim");
            double gravity = cfg.sim_real.gravity, kg = cfg.sim_real.ground_stiffness, cg = cfg.sim_real.ground_damping,
                   mu = cfg.sim_real.friction_mu;
            r.read("gravity", gravity);
            r.read("ground_stiffness", kg);
            r.read("ground_damping", cg);
            r.read("friction_mu", mu);
            for (auto* s : {&cfg.sim_real, &cfg.sim_virtual}) {
                s->gravity = gravity;
                s->ground_stiffness = kg;
                s->ground_damping = cg;
                s->friction_mu = mu;
            }
            detail::read_sim(r, "real", cfg.sim_real);
            detail::read_sim(r, "virtual", cfg.sim_virtual);
            r.finish();
        }
        if (const auto* t = top.table("hybrid")) {
            detail::TableReader r(*t, "hybrid");
            r.read("k", cfg.knn_k);
            r.read("gap_prior", cfg.gap_prior);
            r.finish();
        }
        if (const auto* t = top.table("output")) {
            detail::TableReader r(*t, "output");
            r.read("dir", cfg.output_dir);
            r.read("wallclock", cfg.record_wallclock);
            r.finish();
        }
        top.finish();
        cfg.validate();
        return cfg;
    }

    inline ExperimentConfig load_config(const std::filesystem::path& path)
    {
        std::ifstream in(path);
        if (!in)
            throw ConfigError("cannot open config file " + path.string());
        std::stringstream ss;
        ss << in.rdbuf();
        return parse_config(ss.str(), path.string());
    }

    // ---- JSON form, embedded in saved state so a run directory is self-contained.

    inline json config_to_json(const ExperimentConfig& c)
    {
        json processes = json::object();
        for (const auto& [id, p] : c.processes)
            processes[std::to_string(id)] = {{"alpha_rho", p.alpha_rho}, {"alpha_k", p.alpha_k}};
        auto sim = [](const SimConfig& s) {
            return json{{"dt", s.dt}, {"duration", s.duration}, {"gravity", s.gravity}, {"ground_stiffness", s.ground_stiffness},
                {"ground_damping", s.ground_damping}, {"friction_mu", s.friction_mu}};
        };
        return {
            {"seed", c.seed},
            {"budgets", {{"material", c.budgets.material}, {"component", c.budgets.component}, {"robot", c.budgets.robot}, {"fine", c.budgets.fine}}},
            {"fine_per_tranche", c.fine_per_tranche ? json(*c.fine_per_tranche) : json(nullptr)},
            {"promote_interval", c.promote_interval},
            {"schedule_weights", c.schedule_weights},
            {"bootstrap", {{"materials", c.bootstrap_materials}, {"components", c.seed_components}, {"robots", c.seed_robots}, {"retries", c.seed_retries}}},
            {"processes", processes},
            {"archive", {{"material", spec_to_json(c.material_spec)}, {"component", spec_to_json(c.component_spec)}, {"robot", spec_to_json(c.robot_spec)}}},
            {"mutation",
                {{"cppn",
                     {{"weight_prob", c.cppn_mutation.weight_prob}, {"weight_sigma", c.cppn_mutation.weight_sigma},
                         {"add_connection", c.cppn_mutation.add_connection}, {"add_node", c.cppn_mutation.add_node},
                         {"change_activation", c.cppn_mutation.change_activation}}},
                    {"material", {{"prob", c.material_mutation.prob}, {"sigma", c.material_mutation.sigma}}},
                    {"component", {{"geometry", c.component_mutation.geometry}, {"pointer", c.component_mutation.pointer}}},
                    {"robot", {{"controller_prob", c.robot_mutation.controller_prob}, {"controller_sigma", c.robot_mutation.controller_sigma}}}}},
            {"component",
                {{"lattice", c.layout.lattice}, {"cell_size", c.layout.cell_size}, {"min_actuation", c.layout.min_actuation},
                    {"min_sensor_quality", c.layout.min_sensor_quality}}},
            {"sim", {{"real", sim(c.sim_real)}, {"virtual", sim(c.sim_virtual)}}},
            {"hybrid", {{"k", c.knn_k}, {"gap_prior", c.gap_prior}}},
            {"output", {{"dir", c.output_dir}, {"wallclock", c.record_wallclock}}},
        };
    }

    inline ExperimentConfig config_from_json(const json& j)
    {
        ExperimentConfig c;
        c.seed = j.at("seed").get<std::uint64_t>();
        const auto& b = j.at("budgets");
        c.budgets = {b.at("material").get<long>(), b.at("component").get<long>(), b.at("robot").get<long>(), b.at("fine").get<long>()};
        const auto& fpt = j.at("fine_per_tranche");
        c.fine_per_tranche = fpt.is_null() ? std::nullopt : std::optional<long>(fpt.get<long>());
        c.promote_interval = j.at("promote_interval").get<long>();
        c.schedule_weights = j.at("schedule_weights").get<std::array<double, 3>>();
        const auto& bs = j.at("bootstrap");
        c.bootstrap_materials = bs.at("materials").get<int>();
        c.seed_components = bs.at("components").get<int>();
        c.seed_robots = bs.at("robots").get<int>();
        c.seed_retries = bs.at("retries").get<int>();
        c.processes.clear();
        for (const auto& [id, p] : j.at("processes").items())
            c.processes[std::stoi(id)] = {p.at("alpha_rho").get<double>(), p.at("alpha_k").get<double>()};
        const auto& a = j.at("archive");
        c.material_spec = spec_from_json(a.at("material"));
        c.component_spec = spec_from_json(a.at("component"));
        c.robot_spec = spec_from_json(a.at("robot"));
        const auto& m = j.at("mutation");
        const auto& mc = m.at("cppn");
        c.cppn_mutation = {mc.at("weight_prob").get<double>(), mc.at("weight_sigma").get<double>(), mc.at("add_connection").get<double>(),
            mc.at("add_node").get<double>(), mc.at("change_activation").get<double>()};
        c.material_mutation = {m.at("material").at("prob").get<double>(), m.at("material").at("sigma").get<double>()};
        c.component_mutation = {m.at("component").at("geometry").get<double>(), m.at("component").at("pointer").get<double>()};
        c.robot_mutation = {m.at("robot").at("controller_prob").get<double>(), m.at("robot").at("controller_sigma").get<double>()};
        const auto& comp = j.at("component");
        c.layout = {comp.at("lattice").get<int>(), comp.at("cell_size").get<double>(), comp.at("min_actuation").get<double>(),
            comp.at("min_sensor_quality").get<double>()};
        auto sim = [](const json& s) {
            return SimConfig{s.at("dt").get<double>(), s.at("duration").get<double>(), s.at("gravity").get<double>(),
                s.at("ground_stiffness").get<double>(), s.at("ground_damping").get<double>(), s.at("friction_mu").get<double>()};
        };
        c.sim_real = sim(j.at("sim").at("real"));
        c.sim_virtual = sim(j.at("sim").at("virtual"));
        c.knn_k = j.at("hybrid").at("k").get<int>();
        c.gap_prior = j.at("hybrid").at("gap_prior").get<double>();
        c.output_dir = j.at("output").at("dir").get<std::string>();
        c.record_wallclock = j.at("output").at("wallclock").get<bool>();
        c.validate();
        return c;
    }

} // namespace mle
