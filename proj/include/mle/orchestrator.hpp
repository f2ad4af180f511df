#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "archive.hpp"
#include "common.hpp"
#include "components.hpp"
#include "config.hpp"
#include "evaluation.hpp"
#include "hybrid.hpp"
#include "materials.hpp"
#include "rng.hpp"
#include "robots.hpp"

namespace mle {

    /// Address of one elite: (level, process, bin).
    struct EliteRef {
        Level level = Level::Material;
        std::string process;
        BinIndex bin;
        auto operator<=>(const EliteRef&) const = default;
    };

    inline json to_json_ref(const EliteRef& r) { return {{"level", to_string(r.level)}, {"process", r.process}, {"bin", r.bin}}; }

    // Reverse pointer map: lower-level bin -> upper-level elites that resolve
    // a pointer to it.
    class DependencyIndex {
    public:
        using map_t = std::map<EliteRef, std::set<EliteRef>>;

        void add(const EliteRef& target, const EliteRef& dependent) { _deps[target].insert(dependent); }

        const std::set<EliteRef>& dependents(const EliteRef& target) const
        {
            static const std::set<EliteRef> none;
            auto it = _deps.find(target);
            return it == _deps.end() ? none : it->second;
        }

        void remove_dependent(const EliteRef& dependent)
        {
            for (auto it = _deps.begin(); it != _deps.end();) {
                it->second.erase(dependent);
                it = it->second.empty() ? _deps.erase(it) : std::next(it);
            }
        }

        void merge(const DependencyIndex& other)
        {
            for (const auto& [k, v] : other._deps)
                _deps[k].insert(v.begin(), v.end());
        }

        const map_t& map() const { return _deps; }

        friend bool operator==(const DependencyIndex&, const DependencyIndex&) = default;

    private:
        map_t _deps;
    };

    /// Everything transitively depending on `changed` (not including it).
    inline std::set<EliteRef> cascade_invalidate(const EliteRef& changed, const DependencyIndex& index)
    {
        std::set<EliteRef> stale;
        std::vector<EliteRef> frontier{changed};
        while (!frontier.empty()) {
            const EliteRef cur = frontier.back();
            frontier.pop_back();
            for (const auto& dep : index.dependents(cur))
                if (stale.insert(dep).second)
                    frontier.push_back(dep);
        }
        return stale;
    }

    inline std::string process_name(int material_process) { return std::to_string(material_process); }
    inline std::string process_name(ComponentClass cls) { return std::string(to_string(cls)); }
    inline const std::string robot_process = "0";

    // One multi-level run: material, component and robot archives evolved by
    // the select -> mutate -> evaluate -> insert loop, with cascading
    // re-evaluation when a lower-level bin changes and periodic promotion of
    // robots to the fine evaluator.
    //
    // Single-threaded; every archive mutation goes through this object.
    class Experiment {
    public:
        struct PendingCandidate {
            json genome;
            std::string hash;
            double fitness_virtual = 0.0;
            std::vector<double> features;
            std::uint64_t eval_id = 0;
        };

        explicit Experiment(ExperimentConfig config)
            : _config(std::move(config)), _rng(_config.seed),
              _predictor(_config.robot_spec, _config.knn_k, _config.gap_prior)
        {
            _config.validate();
            for (const auto& [id, p] : _config.processes)
                _materials.emplace(id, MaterialArchive(_config.material_spec, Level::Material, process_name(id)));
            for (auto cls : all_component_classes)
                _components.emplace(cls, ComponentArchive(_config.component_spec, Level::Component, process_name(cls)));
            _robots = RobotArchive(_config.robot_spec, Level::Robot, robot_process);
        }

        const ExperimentConfig& config() const { return _config; }
        const MaterialArchives& materials() const { return _materials; }
        MaterialArchives& materials() { return _materials; }
        const ComponentArchives& components() const { return _components; }
        ComponentArchives& components() { return _components; }
        const RobotArchive& robots() const { return _robots; }
        RobotArchive& robots() { return _robots; }
        const std::vector<json>& eval_log() const { return _log; }
        const TransferabilityPredictor& predictor() const { return _predictor; }
        const std::map<std::string, EvalRecord>& records() const { return _records; }
        const DependencyIndex& dependency_index() const { return _index; }
        const Rng& rng() const { return _rng; }
        long consumed(Level level) const { return _consumed[static_cast<std::size_t>(level)]; }
        long fine_consumed() const { return _fine_consumed; }
        long robot_iterations() const { return _robot_iterations; }
        long removed_elites() const { return _removed; }
        bool initialized() const { return _initialized; }

        EvaluationContext context() const
        {
            EvaluationContext ctx;
            ctx.processes = _config.processes;
            ctx.materials = &_materials;
            ctx.components = &_components;
            ctx.layout = _config.layout;
            ctx.real = _config.sim_real;
            ctx.virtual_sim = _config.sim_virtual;
            return ctx;
        }

        // Bootstrap the materials, then seed components and robots with random
        // genomes pointing at occupied bins.
        void initialize()
        {
            if (_initialized)
                return;
            const auto ctx = context();

            for (auto& [pid, archive] : _materials)
                for (const auto& g : bootstrap_materials(pid, _config.bootstrap_materials)) {
                    const auto ev = evaluate(g, Fidelity::Virtual, ctx);
                    const auto outcome = archive.try_insert(make_elite(g, ev, Fidelity::Virtual));
                    log_eval(Level::Material, archive.process(), json(g), Fidelity::Virtual, ev, "seed", std::nullopt, to_string(outcome));
                }

            for (auto& [cls, archive] : _components) {
                for (int round = 0; round < _config.seed_retries && archive.empty(); ++round)
                    for (int n = 0; n < _config.seed_components; ++n) {
                        const auto g = with_retries([&] { return random_component(cls, _materials, _rng); });
                        const auto ev = evaluate(g, Fidelity::Virtual, ctx);
                        std::string outcome = "invalid";
                        if (ev.valid)
                            outcome = to_string(archive.try_insert(make_elite(g, ev, Fidelity::Virtual)));
                        log_eval(Level::Component, archive.process(), json(g), Fidelity::Virtual, ev, "seed", std::nullopt, outcome);
                    }
                if (archive.empty())
                    throw Error("could not seed the " + archive.process() + " component archive after "
                        + std::to_string(_config.seed_retries) + " rounds");
            }

            for (int n = 0; n < _config.seed_robots; ++n) {
                const auto g = random_robot(_rng);
                const auto ev = with_retries([&] { return evaluate(g, Fidelity::Virtual, ctx); });
                const auto outcome = insert_with_provenance(_robots, make_elite(g, ev, Fidelity::Virtual), _predictor);
                log_eval(Level::Robot, robot_process, json(g), Fidelity::Virtual, ev, "seed", std::nullopt, to_string(outcome));
            }

            _index = build_dependency_index();
            _seed_metrics = archive_metrics_json();
            _initialized = true;
        }

        bool finished() const
        {
            for (auto level : {Level::Material, Level::Component, Level::Robot})
                if (consumed(level) < _config.budgets.of(level))
                    return false;
            return true;
        }

        /// One loop iteration at the level picked by the scheduler. Returns
        /// false when every level budget is spent.
        bool step()
        {
            if (!_initialized)
                initialize();
            const auto level = next_level();
            if (!level)
                return false;
            switch (*level) {
            case Level::Material:
                iterate_material();
                break;
            case Level::Component:
                iterate_component();
                break;
            case Level::Robot:
                iterate_robot();
                break;
            }
            ++_consumed[static_cast<std::size_t>(*level)];
            if (*level == Level::Robot) {
                ++_robot_iterations;
                if (_robot_iterations % _config.promote_interval == 0)
                    promote_tranche();
            }
            return true;
        }

        /// Run until the budgets are spent or `max_iterations` steps were taken.
        long run(std::optional<long> max_iterations = std::nullopt)
        {
            if (!_initialized)
                initialize();
            long n = 0;
            while ((!max_iterations || n < *max_iterations) && step())
                ++n;
            return n;
        }

        DependencyIndex build_dependency_index() const
        {
            DependencyIndex index;
            const auto ctx = context();
            for (const auto& [cls, archive] : _components)
                for (const auto& [bin, e] : archive.bins()) {
                    std::vector<MaterialRef> refs;
                    try {
                        express_component(e.genome, _materials, _config.layout, &refs);
                    }
                    catch (const UnresolvedPointerError&) {
                        continue;
                    }
                    for (const auto& r : refs)
                        index.add({Level::Material, process_name(r.process_id), r.bin}, {Level::Component, archive.process(), bin});
                }
            for (const auto& [bin, e] : _robots.bins()) {
                std::vector<ComponentRef> refs;
                try {
                    const auto plan = express_robot(e.genome, _components);
                    refs = component_refs(resolve_body(plan, _components));
                }
                catch (const UnresolvedPointerError&) {
                    continue;
                }
                for (const auto& r : refs)
                    index.add({Level::Component, process_name(r.cls), r.bin}, {Level::Robot, robot_process, bin});
            }
            return index;
        }

        /// Apply the consequences of bin `changed` getting a new occupant:
        /// mark dependents stale (transitively) and re-evaluate them.
        /// `before` is the dependency index from before the change.
        std::set<EliteRef> cascade(const EliteRef& changed, const DependencyIndex& before)
        {
            DependencyIndex merged = before;
            merged.merge(build_dependency_index());
            auto stale = cascade_invalidate(changed, merged);
            mark_stale(stale);
            resweep_stale();
            _index = build_dependency_index();
            return stale;
        }

        void mark_stale(const std::set<EliteRef>& refs)
        {
            for (const auto& r : refs) {
                if (r.level == Level::Component) {
                    if (auto* e = _components.at(component_class_from_string(r.process)).find(r.bin))
                        e->stale = true;
                }
                else if (r.level == Level::Robot) {
                    if (auto* e = _robots.find(r.bin))
                        e->stale = true;
                }
            }
        }

        // Re-express and re-evaluate every stale elite, components first. An
        // elite whose features now fall in another bin moves there only if it
        // wins that bin; otherwise it stays put with its new values.
        long resweep_stale()
        {
            long count = 0;
            const auto ctx = context();
            std::set<EliteRef> changed;

            for (auto& [cls, archive] : _components) {
                for (const auto& bin : stale_bins(archive)) {
                    auto* cur = archive.find(bin);
                    if (!cur || !cur->stale)
                        continue;
                    auto elite = *cur;
                    Evaluation<ComponentPhenotype> ev;
                    try {
                        ev = evaluate(elite.genome, elite.provenance, ctx);
                    }
                    catch (const UnresolvedPointerError&) {
                        if (remove_elite(archive, bin))
                            changed.insert({Level::Component, archive.process(), bin});
                        continue;
                    }
                    ++count;
                    elite.eval_id = _next_eval_id;
                    if (!ev.valid) {
                        log_eval(Level::Component, archive.process(), json(elite.genome), elite.provenance, ev, "resweep", std::nullopt, "invalid");
                        if (!remove_elite(archive, bin)) {
                            refresh(elite, ev);
                            archive.assign(bin, elite);
                        }
                        changed.insert({Level::Component, archive.process(), bin});
                        continue;
                    }
                    refresh(elite, ev);
                    const auto fidelity = elite.provenance;
                    const auto hash = genome_hash_of(elite.genome);
                    const auto moved = rebin(archive, bin, std::move(elite), [&](auto& a, auto e) { return a.try_insert(std::move(e)); });
                    log_eval(Level::Component, archive.process(), hash, fidelity, ev, "resweep", std::nullopt, moved.first);
                    changed.insert({Level::Component, archive.process(), bin});
                    changed.insert({Level::Component, archive.process(), moved.second});
                }
            }

            if (!changed.empty()) {
                DependencyIndex merged = _index;
                merged.merge(build_dependency_index());
                std::set<EliteRef> robots;
                for (const auto& c : changed)
                    for (const auto& dep : merged.dependents(c))
                        robots.insert(dep);
                mark_stale(robots);
            }

            for (const auto& bin : stale_bins(_robots)) {
                auto* cur = _robots.find(bin);
                if (!cur || !cur->stale)
                    continue;
                auto elite = *cur;
                Fidelity fidelity = elite.provenance;
                if (fidelity == Fidelity::Real && _fine_consumed >= _config.budgets.fine)
                    fidelity = Fidelity::Virtual; // fine budget spent: demote
                Evaluation<RobotSummary> ev;
                try {
                    ev = evaluate(elite.genome, fidelity, ctx);
                }
                catch (const UnresolvedPointerError&) {
                    remove_elite(_robots, bin);
                    continue;
                }
                ++count;
                if (fidelity == Fidelity::Real)
                    ++_fine_consumed;
                elite.eval_id = _next_eval_id;
                elite.provenance = fidelity;
                const std::string hash = genome_hash_of(elite.genome);
                refresh(elite, ev);
                const auto moved = rebin(_robots, bin, std::move(elite),
                    [&](auto& a, auto e) { return insert_with_provenance(a, std::move(e), _predictor); });
                if (fidelity == Fidelity::Real) {
                    auto& rec = record_for(hash, ev.features);
                    rec.fitness_real = ev.fitness;
                    rec.eval_ids.push_back(_next_eval_id);
                }
                log_eval(Level::Robot, robot_process, hash, fidelity, ev, "resweep", std::nullopt, moved.first);
            }
            return count;
        }

        json archive_metrics_json() const
        {
            json out = json::array();
            auto add = [&](const auto& archive) {
                const auto m = archive.metrics();
                out.push_back({{"level", to_string(archive.level())},
                    {"process", archive.process()},
                    {"coverage", m.coverage},
                    {"qd_score", m.qd_score},
                    {"best_fitness", m.best_fitness ? json(*m.best_fitness) : json(nullptr)},
                    {"occupied", m.occupied},
                    {"total", m.total}});
            };
            for (const auto& [pid, a] : _materials)
                add(a);
            for (const auto& [cls, a] : _components)
                add(a);
            add(_robots);
            return out;
        }

        json report() const
        {
            json evals = json::object();
            json phases = json::object();
            for (auto level : {Level::Material, Level::Component, Level::Robot})
                evals[std::string(to_string(level))] = {{"virtual", 0}, {"real", 0}};
            for (const auto* p : {"seed", "iterate", "promote", "resweep"})
                phases[p] = 0;
            for (const auto& e : _log) {
                auto& slot = evals[e.at("level").get<std::string>()][e.at("fidelity").get<std::string>()];
                slot = slot.get<long>() + 1;
                auto& ph = phases[e.at("phase").get<std::string>()];
                ph = ph.get<long>() + 1;
            }
            const auto& b = _config.budgets;
            return {
                {"seed", _config.seed},
                {"archives", archive_metrics_json()},
                {"seed_archives", _seed_metrics},
                {"evaluations", evals},
                {"evaluations_by_phase", phases},
                {"budgets",
                    {{"material", {{"budget", b.material}, {"consumed", consumed(Level::Material)}}},
                        {"component", {{"budget", b.component}, {"consumed", consumed(Level::Component)}}},
                        {"robot", {{"budget", b.robot}, {"consumed", consumed(Level::Robot)}}},
                        {"fine", {{"budget", b.fine}, {"consumed", _fine_consumed}}}}},
                {"robot_iterations", _robot_iterations},
                {"removed_elites", _removed},
                {"transferability_samples", _predictor.samples().size()},
            };
        }

        // ---- persistence ----------------------------------------------------

        static std::string archive_file(Level level, const std::string& process)
        {
            return std::string(to_string(level)) + "_" + process + ".json";
        }

        void save_state(const std::filesystem::path& dir) const
        {
            namespace fs = std::filesystem;
            fs::create_directories(dir / "archives");
            json files = json::array();
            auto write_archive = [&](const auto& archive) {
                const auto name = archive_file(archive.level(), archive.process());
                write_text(dir / "archives" / name, archive_to_json(archive).dump(2) + "\n");
                files.push_back(name);
            };
            for (const auto& [pid, a] : _materials)
                write_archive(a);
            for (const auto& [cls, a] : _components)
                write_archive(a);
            write_archive(_robots);

            std::string log;
            for (const auto& e : _log)
                log += e.dump() + "\n";
            write_text(dir / "eval_log.jsonl", log);

            json pending = json::array();
            for (const auto& p : _pending)
                pending.push_back({{"genome", p.genome}, {"hash", p.hash}, {"fitness_virtual", p.fitness_virtual}, {"features", p.features},
                    {"eval_id", p.eval_id}});
            json samples = json::array();
            for (const auto& s : _predictor.samples())
                samples.push_back({{"descriptor", s.descriptor}, {"gap", s.gap}});
            json records = json::array();
            for (const auto& [h, r] : _records)
                records.push_back(r);

            const json state = {
                {"config", config_to_json(_config)},
                {"initialized", _initialized},
                {"archives", files},
                {"rng", _rng.state()},
                {"schedule_current", _schedule_current},
                {"consumed", _consumed},
                {"fine_consumed", _fine_consumed},
                {"robot_iterations", _robot_iterations},
                {"next_eval_id", _next_eval_id},
                {"removed", _removed},
                {"pending", pending},
                {"transferability", samples},
                {"records", records},
                {"seed_metrics", _seed_metrics},
            };
            write_text(dir / "state.json", state.dump(2) + "\n");
            write_text(dir / "report.json", report().dump(2) + "\n");
        }

        static Experiment load_state(const std::filesystem::path& dir)
        {
            namespace fs = std::filesystem;
            const auto state = read_json(dir / "state.json");
            try {
                Experiment ex(config_from_json(state.at("config")));
                ex._initialized = state.at("initialized").get<bool>();
                for (const auto& name : state.at("archives")) {
                    const auto path = dir / "archives" / name.get<std::string>();
                    const auto j = read_json(path);
                    try {
                        const auto level = level_from_string(j.at("level").get<std::string>());
                        const auto process = j.at("process").get<std::string>();
                        if (level == Level::Material)
                            ex._materials.at(std::stoi(process)) = archive_from_json<MaterialGenome, MaterialPhenotype>(j);
                        else if (level == Level::Component)
                            ex._components.at(component_class_from_string(process)) = archive_from_json<ComponentGenome, ComponentPhenotype>(j);
                        else
                            ex._robots = archive_from_json<RobotGenome, RobotSummary>(j);
                    }
                    catch (const std::exception& e) {
                        throw LoadError(path.string() + ": " + e.what());
                    }
                }
                ex._rng.set_state(state.at("rng").get<Rng::State>());
                ex._schedule_current = state.at("schedule_current").get<std::array<double, 3>>();
                ex._consumed = state.at("consumed").get<std::array<long, 3>>();
                ex._fine_consumed = state.at("fine_consumed").get<long>();
                ex._robot_iterations = state.at("robot_iterations").get<long>();
                ex._next_eval_id = state.at("next_eval_id").get<std::uint64_t>();
                ex._removed = state.at("removed").get<long>();
                for (const auto& p : state.at("pending"))
                    ex._pending.push_back({p.at("genome"), p.at("hash").get<std::string>(), p.at("fitness_virtual").get<double>(),
                        p.at("features").get<std::vector<double>>(), p.at("eval_id").get<std::uint64_t>()});
                for (const auto& s : state.at("transferability"))
                    ex._predictor.add(s.at("descriptor").get<std::vector<double>>(), s.at("gap").get<double>());
                for (const auto& r : state.at("records")) {
                    auto rec = r.get<EvalRecord>();
                    ex._records[rec.genome_hash] = rec;
                }
                ex._seed_metrics = state.at("seed_metrics");

                const auto log_path = dir / "eval_log.jsonl";
                std::ifstream in(log_path);
                if (!in)
                    throw LoadError("cannot open " + log_path.string());
                std::string line;
                while (std::getline(in, line))
                    if (!line.empty())
                        ex._log.push_back(json::parse(line));

                ex._index = ex.build_dependency_index();
                return ex;
            }
            catch (const LoadError&) {
                throw;
            }
            catch (const std::exception& e) {
                throw LoadError((dir / "state.json").string() + ": " + e.what());
            }
        }

    private:
        template <typename G, typename Ev>
        Elite<G, decltype(Ev::phenotype)> make_elite(const G& genome, const Ev& ev, Fidelity fidelity)
        {
            Elite<G, decltype(Ev::phenotype)> e;
            e.genome = genome;
            e.phenotype = ev.phenotype;
            e.fitness = ev.fitness;
            e.features = ev.features;
            e.provenance = fidelity;
            e.eval_id = _next_eval_id; // the id log_eval is about to hand out
            return e;
        }

        template <typename E, typename Ev>
        static void refresh(E& elite, const Ev& ev)
        {
            elite.phenotype = ev.phenotype;
            elite.fitness = ev.fitness;
            elite.features = ev.features;
            elite.stale = false;
        }

        template <typename F>
        std::invoke_result_t<F&> with_retries(F&& f)
        {
            for (int attempt = 1;; ++attempt) {
                try {
                    return f();
                }
                catch (const UnresolvedPointerError& e) {
                    if (attempt >= _config.seed_retries)
                        throw Error(std::string("seeding failed after ") + std::to_string(attempt) + " attempts: " + e.what());
                }
            }
        }

        template <typename A>
        static std::vector<BinIndex> stale_bins(const A& archive)
        {
            std::vector<BinIndex> out;
            for (const auto& [bin, e] : archive.bins())
                if (e.stale)
                    out.push_back(bin);
            return out;
        }

        // Vacate a bin unless it is the archive's last occupant.
        template <typename A>
        bool remove_elite(A& archive, const BinIndex& bin)
        {
            if (archive.size() <= 1)
                return false;
            archive.erase(bin);
            ++_removed;
            return true;
        }

        /// Place a refreshed elite: same bin -> overwrite; new bin -> move if
        /// `insert` accepts it, else keep it in the old bin. Returns the
        /// outcome label and the bin the elite ended up in.
        template <typename A, typename E, typename Insert>
        std::pair<std::string, BinIndex> rebin(A& archive, const BinIndex& old_bin, E elite, Insert&& insert)
        {
            const BinIndex target = archive.bin_of(elite.features);
            if (target == old_bin) {
                archive.assign(old_bin, std::move(elite));
                return {"updated", old_bin};
            }
            auto kept = elite;
            const auto outcome = insert(archive, std::move(elite));
            if (outcome != InsertOutcome::Rejected) {
                archive.erase(old_bin);
                return {"moved", target};
            }
            archive.assign(old_bin, std::move(kept));
            return {"kept", old_bin};
        }

        std::optional<Level> next_level()
        {
            constexpr std::array<Level, 3> levels{Level::Material, Level::Component, Level::Robot};
            double total = 0.0;
            for (std::size_t i = 0; i < 3; ++i)
                if (consumed(levels[i]) < _config.budgets.of(levels[i]))
                    total += _config.schedule_weights[i];
            if (total == 0.0)
                return std::nullopt;
            std::optional<std::size_t> best;
            for (std::size_t i = 0; i < 3; ++i) {
                if (consumed(levels[i]) >= _config.budgets.of(levels[i]))
                    continue;
                _schedule_current[i] += _config.schedule_weights[i];
                if (!best || _schedule_current[i] > _schedule_current[*best])
                    best = i;
            }
            _schedule_current[*best] -= total;
            return levels[*best];
        }

        template <typename Map>
        auto& pick_nonempty(Map& archives)
        {
            std::vector<typename Map::mapped_type*> live;
            for (auto& [k, a] : archives)
                if (!a.empty())
                    live.push_back(&a);
            if (live.empty())
                throw EmptyArchiveError("no occupied archive to select from");
            return *live[_rng.below(live.size())];
        }

        void iterate_material()
        {
            auto& archive = pick_nonempty(_materials);
            const auto& parent = archive.select_random_occupied(_rng);
            const auto parent_id = parent.eval_id;
            const auto child = mutate_material(parent.genome, _rng, _config.material_mutation);
            const auto ev = evaluate(child, Fidelity::Virtual, context());
            const auto bin = archive.bin_of(ev.features);
            const auto before = _index;
            const auto outcome = archive.try_insert(make_elite(child, ev, Fidelity::Virtual));
            log_eval(Level::Material, archive.process(), json(child), Fidelity::Virtual, ev, "iterate", parent_id, to_string(outcome));
            if (outcome != InsertOutcome::Rejected)
                cascade({Level::Material, archive.process(), bin}, before);
        }

        void iterate_component()
        {
            auto& archive = pick_nonempty(_components);
            const auto& parent = archive.select_random_occupied(_rng);
            const auto parent_id = parent.eval_id;
            const auto child = mutate_component(parent.genome, _rng, _materials, _config.component_mutation, _config.cppn_mutation);
            const auto ev = evaluate(child, Fidelity::Virtual, context());
            std::string label = "invalid";
            std::optional<InsertOutcome> outcome;
            const auto bin = archive.bin_of(ev.features);
            const auto before = _index;
            if (ev.valid) {
                outcome = archive.try_insert(make_elite(child, ev, Fidelity::Virtual));
                label = to_string(*outcome);
            }
            log_eval(Level::Component, archive.process(), json(child), Fidelity::Virtual, ev, "iterate", parent_id, label);
            if (outcome && *outcome != InsertOutcome::Rejected)
                cascade({Level::Component, archive.process(), bin}, before);
        }

        void iterate_robot()
        {
            const auto& parent = _robots.select_random_occupied(_rng);
            const auto parent_id = parent.eval_id;
            const auto child = mutate_robot(parent.genome, _rng, _config.robot_mutation, _config.cppn_mutation);
            const auto ev = evaluate(child, Fidelity::Virtual, context());
            const auto outcome = insert_with_provenance(_robots, make_elite(child, ev, Fidelity::Virtual), _predictor);
            if (outcome != InsertOutcome::Rejected)
                reindex_robot(_robots.bin_of(ev.features));
            const json genome = child;
            const auto hash = genome_hash(genome);
            const auto id = _next_eval_id;
            log_eval(Level::Robot, robot_process, hash, Fidelity::Virtual, ev, "iterate", parent_id, to_string(outcome));
            if (!ev.diverged)
                _pending.push_back({genome, hash, ev.fitness, ev.features, id});
        }

        void promote_tranche()
        {
            const long budget = std::min(_config.tranche_budget(), _config.budgets.fine - _fine_consumed);
            std::vector<PromotionCandidate> cands;
            for (const auto& p : _pending)
                cands.push_back({p.hash, p.fitness_virtual, p.features});
            const auto chosen = promote(cands, _predictor, budget);
            const auto ctx = context();
            for (std::size_t idx : chosen) {
                const auto& p = _pending[idx];
                const auto genome = p.genome.get<RobotGenome>();
                const auto ev = evaluate(genome, Fidelity::Real, ctx);
                ++_fine_consumed;
                auto& rec = record_for(p.hash, p.features);
                rec.fitness_virtual = p.fitness_virtual;
                rec.fitness_real = ev.fitness;
                rec.eval_ids.push_back(p.eval_id);
                rec.eval_ids.push_back(_next_eval_id);
                if (!ev.diverged)
                    _predictor.add(ev.features, ev.fitness - p.fitness_virtual);
                const auto outcome = insert_with_provenance(_robots, make_elite(genome, ev, Fidelity::Real), _predictor);
                if (outcome != InsertOutcome::Rejected)
                    reindex_robot(_robots.bin_of(ev.features));
                log_eval(Level::Robot, robot_process, p.hash, Fidelity::Real, ev, "promote", p.eval_id, to_string(outcome));
            }
            _pending.clear();
        }

        // Keep the index in step with a robot bin whose occupant may have changed.
        void reindex_robot(const BinIndex& bin)
        {
            const EliteRef self{Level::Robot, robot_process, bin};
            _index.remove_dependent(self);
            const auto* e = _robots.find(bin);
            if (!e)
                return;
            try {
                const auto plan = express_robot(e->genome, _components);
                for (const auto& r : component_refs(resolve_body(plan, _components)))
                    _index.add({Level::Component, process_name(r.cls), r.bin}, self);
            }
            catch (const UnresolvedPointerError&) {
            }
        }

        EvalRecord& record_for(const std::string& hash, const std::vector<double>& descriptor)
        {
            auto& rec = _records[hash];
            if (rec.genome_hash.empty()) {
                rec.genome_hash = hash;
                rec.level = Level::Robot;
                rec.process = robot_process;
                rec.descriptor = descriptor;
            }
            return rec;
        }

        template <typename Ev>
        void log_eval(Level level, const std::string& process, const json& genome, Fidelity fidelity, const Ev& ev, std::string_view phase,
            std::optional<std::uint64_t> parent, std::string_view outcome)
        {
            log_eval(level, process, genome_hash(genome), fidelity, ev, phase, parent, outcome);
        }

        template <typename Ev>
        void log_eval(Level level, const std::string& process, const std::string& hash, Fidelity fidelity, const Ev& ev,
            std::string_view phase, std::optional<std::uint64_t> parent, std::string_view outcome)
        {
            double wallclock = 0.0;
            if (_config.record_wallclock) {
                const auto now = std::chrono::steady_clock::now();
                if (_last_log_time)
                    wallclock = std::chrono::duration<double, std::milli>(now - *_last_log_time).count();
                _last_log_time = now;
            }
            _log.push_back({{"eval_id", _next_eval_id},
                {"level", to_string(level)},
                {"process", process},
                {"genome_hash", hash},
                {"fidelity", to_string(fidelity)},
                {"fitness", ev.fitness},
                {"features", ev.features},
                {"descriptor", ev.descriptor},
                {"wallclock_ms", wallclock},
                {"phase", phase},
                {"parent", parent ? json(*parent) : json(nullptr)},
                {"outcome", outcome}});
            ++_next_eval_id;
        }

        static void write_text(const std::filesystem::path& path, const std::string& text)
        {
            std::ofstream out(path, std::ios::binary | std::ios::trunc);
            if (!out)
                throw Error("cannot write " + path.string());
            out << text;
        }

        static json read_json(const std::filesystem::path& path)
        {
            std::ifstream in(path);
            if (!in)
                throw LoadError("cannot open " + path.string());
            try {
                return json::parse(in);
            }
            catch (const json::exception& e) {
                throw LoadError(path.string() + ": " + e.what());
            }
        }

        ExperimentConfig _config;
        Rng _rng;
        MaterialArchives _materials;
        ComponentArchives _components;
        RobotArchive _robots;
        TransferabilityPredictor _predictor;
        std::map<std::string, EvalRecord> _records;
        std::vector<PendingCandidate> _pending;
        DependencyIndex _index;
        std::vector<json> _log;
        json _seed_metrics = json::array();

        std::array<double, 3> _schedule_current{};
        std::array<long, 3> _consumed{};
        long _fine_consumed = 0;
        long _robot_iterations = 0;
        long _removed = 0;
        std::uint64_t _next_eval_id = 0;
        bool _initialized = false;
        std::optional<std::chrono::steady_clock::time_point> _last_log_time;
    };

    /// Initialise, run to budget exhaustion, write everything to `out_dir`.
    inline json run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir)
    {
        Experiment ex(config);
        ex.initialize();
        ex.run();
        ex.save_state(out_dir);
        return ex.report();
    }

} // namespace mle
