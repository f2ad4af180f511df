// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <queue>
#include <sstream>
#include <string>
#include <vector>

#include <mle/export.hpp>
#include <mle/orchestrator.hpp>

using namespace mle;
namespace fs = std::filesystem;

namespace {

    using Clock = std::chrono::steady_clock;

    double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

    struct Check {
        bool ok = true;
        std::string detail;

        void require(bool cond, const std::string& what)
        {
            if (!cond && ok) {
                ok = false;
                detail = what;
            }
        }
    };

    std::string read_file(const fs::path& p)
    {
        std::ifstream in(p, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    std::map<std::string, std::string> saved_files(const fs::path& dir)
    {
        std::map<std::string, std::string> out;
        for (const auto& e : fs::recursive_directory_iterator(dir))
            if (e.is_regular_file())
                out[fs::relative(e.path(), dir).string()] = read_file(e.path());
        return out;
    }

    fs::path fresh_dir(const std::string& name)
    {
        const auto dir = fs::temp_directory_path() / ("mle_acceptance_" + name);
        fs::remove_all(dir);
        fs::create_directories(dir);
        return dir;
    }

    std::string fmt(const char* f, double a, double b = 0.0)
    {
        char buf[160];
        std::snprintf(buf, sizeof buf, f, a, b);
        return buf;
    }

    // ---- 1 ------------------------------------------------------------------

    Check archive_laws()
    {
        Check c;
        const auto t0 = Clock::now();
        Archive<int> a(FeatureSpec({{0.0, 1.0, 20}, {0.0, 1.0, 20}}), Level::Material, "laws");
        std::map<BinIndex, double> best;
        Rng rng(11);
        double last_coverage = 0.0;
        for (int i = 0; i < 1000000; ++i) {
            Elite<int> e;
            e.genome = i;
            e.features = {rng.uniform(-0.1, 1.1), rng.uniform(-0.1, 1.1)};
            e.fitness = std::round(rng.normal(0.0, 1.0) * 20.0) / 20.0; // coarse grid forces ties
            const auto bin = a.bin_of(e.features);
            const auto it = best.find(bin);
            const auto outcome = a.try_insert(e);
            if (it == best.end()) {
                c.require(outcome == InsertOutcome::NewBin, "empty bin not filled");
                best[bin] = e.fitness;
            }
            else if (e.fitness > it->second) {
                c.require(outcome == InsertOutcome::Improved, "better candidate rejected");
                it->second = e.fitness;
            }
            else {
                c.require(outcome == InsertOutcome::Rejected, e.fitness == it->second ? "tie accepted" : "worse candidate accepted");
            }
            c.require(a.find(bin)->fitness == best[bin], "per-bin fitness diverged from the shadow map");
            const double cov = a.metrics().coverage;
            c.require(cov >= last_coverage, "coverage decreased");
            last_coverage = cov;
        }
        const double s = seconds_since(t0);
        c.require(s < 10.0, fmt("took %.1f s", s));
        if (c.ok)
            c.detail = fmt("10^6 inserts in %.2f s, coverage %.3f", s, last_coverage);
        return c;
    }

    // ---- 2 and 7 ------------------------------------------------------------

    struct Runs {
        fs::path a, b;
        double seconds_a = 0.0, seconds_b = 0.0;
        json report;
    };

    Runs two_default_runs()
    {
        Runs r;
        r.a = fresh_dir("run_a");
        r.b = fresh_dir("run_b");
        auto t0 = Clock::now();
        r.report = run_experiment(ExperimentConfig{}, r.a);
        r.seconds_a = seconds_since(t0);
        t0 = Clock::now();
        run_experiment(ExperimentConfig{}, r.b);
        r.seconds_b = seconds_since(t0);
        return r;
    }

    Check determinism(const Runs& runs)
    {
        Check c;
        c.require(saved_files(runs.a) == saved_files(runs.b), "two runs with the same seed differ");
        c.require(runs.seconds_a < 300.0 && runs.seconds_b < 300.0, fmt("runs took %.0f s and %.0f s", runs.seconds_a, runs.seconds_b));

        const auto mid = fresh_dir("mid"), resumed = fresh_dir("resumed");
        Experiment first(ExperimentConfig{});
        first.run(3000);
        first.save_state(mid);
        auto second = Experiment::load_state(mid);
        second.run();
        second.save_state(resumed);
        c.require(saved_files(resumed) == saved_files(runs.a), "save/load mid-run changed the outcome");
        if (c.ok)
            c.detail = fmt("byte-identical; runs %.1f s and %.1f s; mid-run reload identical", runs.seconds_a, runs.seconds_b);
        return c;
    }

    Check default_run_progress(const Runs& runs)
    {
        Check c;
        const auto& rep = runs.report;
        const auto robot_metrics = [](const json& list) {
            for (const auto& m : list)
                if (m.at("level") == "robot")
                    return m;
            return json();
        };
        const auto seeded = robot_metrics(rep.at("seed_archives"));
        const auto final_ = robot_metrics(rep.at("archives"));
        const double cov0 = seeded.at("coverage").get<double>(), cov1 = final_.at("coverage").get<double>();
        const double best = final_.at("best_fitness").get<double>();
        c.require(cov1 > cov0, fmt("robot coverage %.4f did not exceed post-seed %.4f", cov1, cov0));
        c.require(best > 0.0, fmt("best robot fitness %.4f", best));

        const fs::path golden = fs::path(MLE_GOLDEN_DIR) / "default_report.json";
        const auto text = read_file(runs.a / "report.json");
        std::string note;
        if (!fs::exists(golden)) {
            std::ofstream(golden, std::ios::binary) << text;
            note = ", golden written";
        }
        else {
            c.require(read_file(golden) == text, "report differs from golden " + golden.string());
        }
        if (c.ok)
            c.detail = fmt("robot coverage %.4f -> %.4f", cov0, cov1) + fmt(", best fitness %.4f m", best) + note;
        return c;
    }

    // ---- 3 ------------------------------------------------------------------

    // Worst gap to the per-bin optimum after one 50k-iteration run, or 1 if a bin stays empty.
    double illumination_run(std::uint64_t seed)
    {
        using Genome = std::vector<double>;
        Archive<Genome> a(FeatureSpec({{0.0, 1.0, 10}, {0.0, 1.0, 10}}), Level::Material, "toy");
        Rng rng(seed);
        auto evaluate = [](const Genome& g) {
            Elite<Genome> e;
            e.genome = g;
            e.features = g;
            e.fitness = -((g[0] - 0.5) * (g[0] - 0.5) + (g[1] - 0.5) * (g[1] - 0.5));
            return e;
        };
        for (int i = 0; i < 20; ++i)
            a.try_insert(evaluate({rng.uniform(), rng.uniform()}));
        for (int i = 0; i < 50000; ++i) {
            // One gene, step size log-uniform between the precision target and the bin width.
            Genome child = a.select_random_occupied(rng).genome;
            const double sigma = std::pow(10.0, rng.uniform(-4.0, -1.0));
            auto& x = child[rng.below(2)];
            x = clamp(x + rng.normal(0.0, sigma), 0.0, 1.0);
            a.try_insert(evaluate(child));
        }
        double worst = 0.0;
        for (int i = 0; i < 10; ++i)
            for (int j = 0; j < 10; ++j) {
                // Optimum: (0.5, 0.5) projected onto the bin.
                const double x = clamp(0.5, i / 10.0, (i + 1) / 10.0), y = clamp(0.5, j / 10.0, (j + 1) / 10.0);
                const double opt = -((x - 0.5) * (x - 0.5) + (y - 0.5) * (y - 0.5));
                const auto* e = a.find(BinIndex{i, j});
                worst = std::max(worst, e ? opt - e->fitness : 1.0);
            }
        return worst;
    }

    Check illumination()
    {
        Check c;
        int passed = 0;
        double worst = 0.0;
        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
            const double w = illumination_run(seed);
            passed += w <= 1e-3;
            worst = std::max(worst, w);
        }
        c.require(passed == 10, std::to_string(passed) + "/10 seeds met full coverage and 1e-3; worst gap " + fmt("%.2e", worst));
        if (c.ok)
            c.detail = fmt("10/10 seeds at full coverage, worst gap to the bin optimum %.2e", worst);
        return c;
    }

    // ---- 4 ------------------------------------------------------------------

    SpringMassModel reference_body(double amplitude, double mass = 4.8)
    {
        ComponentPhenotype p;
        p.lattice = 4;
        p.slots.assign(16, 0);
        p.mass = mass;
        p.mean_stiffness = 1e4;
        p.mean_damping = 0.2;
        p.actuation_capability = 0.8;
        p.sensor_quality = 0.3;
        p.cost = 16.0;
        p.valid_for_class = true;
        BodyPlan plan;
        std::vector<std::optional<ResolvedComponent>> resolved(36);
        for (int r = 0; r < 3; ++r)
            for (int col = 0; col < 5; ++col) {
                auto& cell = plan.at(col, r);
                const auto cls = col % 2 ? ComponentClass::Actuator : ComponentClass::Structure;
                cell.occupied = true;
                cell.pointer.cls = cls;
                cell.phase = 0.6 * col;
                resolved[static_cast<std::size_t>(r * 6 + col)] = ResolvedComponent{cls, {0, 0}, p};
            }
        Controller ctrl;
        ctrl.amplitude = amplitude;
        ctrl.feedback_gain = 0.0;
        ctrl.omega = 2.0;
        return build_model(plan, resolved, ctrl);
    }

    Check physics()
    {
        Check c;
        // Largest per-interval energy rise after first contact, relative to the previous sample.
        auto worst_rise = [](const SpringMassModel& m, bool in_contact) {
            const auto r = simulate(m, SimConfig::real());
            const auto& e = r.energy_trace;
            double worst = 0.0;
            for (std::size_t i = 1; i < e.size(); ++i) {
                in_contact = in_contact || e[i] < 0.999 * e[0];
                if (in_contact)
                    worst = std::max(worst, (e[i] - e[i - 1]) / std::abs(e[i - 1]));
            }
            return worst;
        };
        // Bodies as built rest on the ground, so contact starts at t = 0.
        double rise = 0.0;
        for (double mass : {1.0, 4.8})
            rise = std::max(rise, worst_rise(reference_body(0.0, mass), true));
        c.require(rise <= 0.01, fmt("energy rose by %.3f%% in one interval", 100.0 * rise));
        // Reported only: a 5 cm drop stores energy in the ground penalty, which the energy measure leaves out.
        auto dropped = reference_body(0.0);
        for (auto& m : dropped.masses)
            m.position.y += 0.05;
        const double drop_rise = worst_rise(dropped, false);

        const auto rest = simulate(reference_body(0.0), SimConfig::real());
        c.require(std::abs(rest.fitness) < 1e-3, fmt("passive drift %.2e m", rest.fitness));

        const auto moving = reference_body(1.0);
        const auto base = simulate(moving, SimConfig::real());
        bool exact = true;
        for (double dx : {0.37, -5.0, 123.456}) {
            auto shifted = moving;
            shifted.translate(dx);
            const auto r = simulate(shifted, SimConfig::real());
            exact = exact && r.fitness == base.fitness;
        }
        c.require(exact, "translated body gave a different fitness");

        Rng rng(13);
        double extreme = 0.0;
        for (int i = 0; i < 1000000; ++i) {
            Controller ctrl;
            ctrl.omega = rng.uniform(0.5, 4.0);
            ctrl.amplitude = rng.uniform();
            ctrl.feedback_gain = rng.uniform(-1.0, 1.0);
            const double s = drive(rng.uniform(0.0, 5.0), {rng.uniform(), rng.uniform(-3.2, 3.2)}, ctrl, rng.uniform(), rng.normal(0.0, 50.0));
            extreme = std::max(extreme, std::abs(s));
        }
        c.require(extreme <= 0.5, fmt("strain %.3f exceeded the clamp", extreme));
        if (c.ok)
            c.detail = fmt("max interval energy rise %.3f%% (5 cm drop: %.2f%%)", 100.0 * rise, 100.0 * drop_rise) + fmt(", passive drift %.1e m", std::abs(rest.fitness))
                + fmt(", translation exact, max |strain| %.3f", extreme);
        return c;
    }

    // ---- 5 ------------------------------------------------------------------

    Check cascade_checks()
    {
        Check c;
        ExperimentConfig cfg;
        cfg.budgets = {0, 0, 0, 0};
        Experiment ex(cfg);
        ex.initialize();
        std::optional<EliteRef> target;
        for (const auto& [t, deps] : ex.dependency_index().map())
            if (t.level == Level::Material && !deps.empty()) {
                target = t;
                break;
            }
        c.require(target.has_value(), "no referenced material bin");
        if (!target)
            return c;
        const auto deps = ex.dependency_index().dependents(*target);
        const auto components_before = ex.components();
        const auto robots_before = ex.robots();
        auto& archive = ex.materials().at(std::stoi(target->process));
        auto cheaper = *archive.find(target->bin);
        cheaper.phenotype.unit_cost *= 0.5;
        cheaper.fitness = -cheaper.phenotype.unit_cost;
        const auto before = ex.dependency_index();
        c.require(archive.try_insert(cheaper) == InsertOutcome::Improved, "cheaper material not accepted");
        ex.cascade(*target, before);
        for (const auto& d : deps) {
            const auto cls = component_class_from_string(d.process);
            const auto& old_e = *components_before.at(cls).find(d.bin);
            const auto* now = ex.components().at(cls).find(d.bin);
            c.require(now != nullptr, "dependent component vanished");
            if (!now)
                continue;
            c.require(now->fitness > old_e.fitness, "component fitness did not improve");
            auto x = old_e.phenotype, y = now->phenotype;
            x.cost = y.cost = 0.0;
            c.require(x == y, "non-cost phenotype changed");
        }
        double worst = 0.0;
        for (const auto& [bin, e] : robots_before.bins()) {
            const auto* now = ex.robots().find(bin);
            c.require(now != nullptr, "robot vanished");
            if (now)
                worst = std::max(worst, std::abs(now->fitness - e.fitness));
        }
        c.require(worst <= 1e-9, fmt("robot fitness moved by %.2e", worst));

        // Stale sets against brute-force reachability.
        Rng rng(17);
        int fixtures = 0;
        for (int trial = 0; trial < 100; ++trial, ++fixtures) {
            std::vector<EliteRef> nodes;
            for (int i = 0; i < 5; ++i)
                nodes.push_back({Level::Material, std::to_string(i % 2), {i, 0}});
            for (int i = 0; i < 8; ++i)
                nodes.push_back({Level::Component, std::string(to_string(all_component_classes[static_cast<std::size_t>(i % 3)])), {i, 1}});
            for (int i = 0; i < 10; ++i)
                nodes.push_back({Level::Robot, robot_process, {i, 2}});
            const std::size_t n = nodes.size();
            std::vector<std::vector<std::size_t>> adj(n);
            DependencyIndex idx;
            for (std::size_t a = 0; a < n; ++a)
                for (std::size_t b = 0; b < n; ++b)
                    if (static_cast<int>(nodes[b].level) == static_cast<int>(nodes[a].level) + 1 && rng.bernoulli(0.25)) {
                        idx.add(nodes[a], nodes[b]);
                        adj[a].push_back(b);
                    }
            for (std::size_t s = 0; s < n; ++s) {
                std::vector<bool> seen(n, false);
                std::function<void(std::size_t)> dfs = [&](std::size_t u) {
                    for (auto v : adj[u])
                        if (!seen[v]) {
                            seen[v] = true;
                            dfs(v);
                        }
                };
                dfs(s);
                std::set<EliteRef> expected;
                for (std::size_t v = 0; v < n; ++v)
                    if (seen[v])
                        expected.insert(nodes[v]);
                c.require(cascade_invalidate(nodes[s], idx) == expected, "stale set differs from reachability");
            }
        }
        if (c.ok)
            c.detail = std::to_string(deps.size()) + " dependent components cheaper, robots unchanged (max " + fmt("%.1e", worst) + "), "
                + std::to_string(fixtures) + " reachability fixtures agree";
        return c;
    }

    // ---- 6 ------------------------------------------------------------------

    Check hybrid(const Runs& runs)
    {
        Check c;
        auto ex = Experiment::load_state(runs.a);
        long real_entries = 0;
        for (const auto& e : ex.eval_log())
            real_entries += e.at("fidelity") == "real";
        const long fine = ex.config().budgets.fine;
        c.require(real_entries <= fine, std::to_string(real_entries) + " fine evaluations exceed the budget");
        int real_elites = 0;
        for (const auto& [bin, e] : ex.robots().bins()) {
            if (e.provenance != Fidelity::Real)
                continue;
            ++real_elites;
            const auto it = ex.records().find(genome_hash_of(e.genome));
            c.require(it != ex.records().end() && it->second.fitness_real == e.fitness, "real elite without a matching real fitness record");
        }

        // Held-out comparison on designs drawn from the final robot archive
        // and their mutants, each evaluated at both fidelities.
        const auto ctx = ex.context();
        Rng rng(19);
        std::vector<std::pair<std::vector<double>, double>> pairs;
        std::vector<RobotGenome> pool;
        for (const auto& [bin, e] : ex.robots().bins())
            pool.push_back(e.genome);
        for (int attempt = 0; attempt < 2000 && pairs.size() < 300; ++attempt) {
            auto g = pool[rng.below(pool.size())];
            if (attempt >= static_cast<int>(pool.size()))
                g = mutate_robot(g, rng);
            const auto v = evaluate(g, Fidelity::Virtual, ctx);
            const auto r = evaluate(g, Fidelity::Real, ctx);
            if (v.diverged || r.diverged)
                continue;
            pairs.push_back({r.features, std::abs(r.fitness - v.fitness)});
        }
        for (std::size_t i = pairs.size(); i > 1; --i) // random split
            std::swap(pairs[i - 1], pairs[rng.below(i)]);
        const std::size_t held = std::max<std::size_t>(50, pairs.size() / 3);
        c.require(pairs.size() >= held + 20, "not enough non-diverged pairs");
        if (!c.ok)
            return c;
        TransferabilityPredictor knn(ex.config().robot_spec, ex.config().knn_k, ex.config().gap_prior);
        double mean = 0.0;
        const std::size_t train = pairs.size() - held;
        for (std::size_t i = 0; i < train; ++i) {
            knn.add(pairs[i].first, pairs[i].second);
            mean += pairs[i].second / static_cast<double>(train);
        }
        double knn_err = 0.0, mean_err = 0.0;
        for (std::size_t i = train; i < pairs.size(); ++i) {
            knn_err += std::abs(knn.predict(pairs[i].first) - pairs[i].second);
            mean_err += std::abs(mean - pairs[i].second);
        }
        knn_err /= static_cast<double>(held);
        mean_err /= static_cast<double>(held);
        c.require(knn_err < mean_err, fmt("kNN MAE %.4f not below constant-mean MAE %.4f", knn_err, mean_err));
        if (c.ok)
            c.detail = std::to_string(real_entries) + "/" + std::to_string(fine) + " fine evaluations, " + std::to_string(real_elites)
                + " real elites recorded, kNN MAE " + fmt("%.4f vs mean %.4f", knn_err, mean_err) + " on " + std::to_string(held) + " held-out pairs";
        return c;
    }

    // ---- 8 ------------------------------------------------------------------

    Check oracles()
    {
        Check c;
        Rng rng(23);
        auto random_material = [&] {
            return MaterialPhenotype{rng.uniform(300, 2000), std::pow(10.0, rng.uniform(2, 6)), rng.uniform(0.05, 0.55), rng.uniform(), rng.uniform(),
                rng.uniform(1, 18)};
        };
        const ComponentLayout layout;
        const double v0 = std::pow(layout.cell_size, 3);
        for (int t = 0; t < 1000; ++t) {
            std::array<MaterialPhenotype, 2> mats{random_material(), random_material()};
            ComponentPhenotype p;
            p.lattice = 4;
            const auto pattern = 1 + rng.below(65535);
            for (int i = 0; i < 16; ++i)
                p.slots.push_back((pattern >> i) & 1 ? static_cast<int>(rng.below(2)) : -1);
            aggregate_component(p, mats, ComponentClass::Actuator, layout);
            double mass = 0, k = 0, damp = 0, act = 0, sens = 0, cost = 0;
            int n = 0;
            for (int s : p.slots)
                if (s >= 0) {
                    const auto& m = mats[static_cast<std::size_t>(s)];
                    ++n;
                    mass += m.density * v0;
                    k += m.stiffness;
                    damp += m.damping_ratio;
                    sens += m.sensitivity;
                    act = std::max(act, m.actuation_gain);
                    cost += m.unit_cost * v0 * 1000.0;
                }
            auto near = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); };
            c.require(near(p.mass, mass) && near(p.mean_stiffness, k / n) && near(p.mean_damping, damp / n) && near(p.sensor_quality, sens / n)
                    && near(p.actuation_capability, act) && near(p.cost, cost),
                "aggregation differs from the brute-force oracle");
        }

        for (int t = 0; t < 1000; ++t) {
            const int w = 1 + static_cast<int>(rng.below(10)), h = 1 + static_cast<int>(rng.below(10));
            const double density = rng.uniform(0.1, 0.9);
            std::vector<bool> mask(static_cast<std::size_t>(w * h));
            for (std::size_t i = 0; i < mask.size(); ++i)
                mask[i] = rng.bernoulli(density);
            // Reference flood fill in row-major scan order; the first region of maximal size wins.
            std::vector<int> label(mask.size(), -1);
            std::vector<int> sizes;
            for (int start = 0; start < w * h; ++start) {
                if (!mask[static_cast<std::size_t>(start)] || label[static_cast<std::size_t>(start)] >= 0)
                    continue;
                const int id = static_cast<int>(sizes.size());
                sizes.push_back(0);
                std::queue<int> q;
                q.push(start);
                label[static_cast<std::size_t>(start)] = id;
                while (!q.empty()) {
                    const int u = q.front();
                    q.pop();
                    ++sizes.back();
                    const int r = u / w, col = u % w;
                    const int nbr[4][2] = {{r - 1, col}, {r + 1, col}, {r, col - 1}, {r, col + 1}};
                    for (const auto& nb : nbr) {
                        if (nb[0] < 0 || nb[0] >= h || nb[1] < 0 || nb[1] >= w)
                            continue;
                        const auto v = static_cast<std::size_t>(nb[0] * w + nb[1]);
                        if (mask[v] && label[v] < 0) {
                            label[v] = id;
                            q.push(static_cast<int>(v));
                        }
                    }
                }
            }
            std::vector<bool> expected(mask.size(), false);
            if (!sizes.empty()) {
                const int keep = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
                for (std::size_t i = 0; i < mask.size(); ++i)
                    expected[i] = label[i] == keep;
            }
            c.require(largest_region(mask, w, h) == expected, "largest region differs from the flood-fill reference");
        }
        if (c.ok)
            c.detail = "1000 aggregation fixtures and 1000 lattices agree";
        return c;
    }

} // namespace

int main()
{
    int failures = 0;
    auto report = [&](int n, const char* name, const Check& c) {
        std::printf("%s %d %s: %s\n", c.ok ? "PASS" : "FAIL", n, name, c.detail.c_str());
        std::fflush(stdout);
        failures += !c.ok;
    };
    auto guarded = [](auto&& f) {
        try {
            return f();
        }
        catch (const std::exception& e) {
            Check c;
            c.ok = false;
            c.detail = std::string("exception: ") + e.what();
            return c;
        }
    };

    report(1, "archive laws", guarded(archive_laws));
    std::optional<Runs> runs;
    try {
        runs = two_default_runs();
    }
    catch (const std::exception& e) {
        std::printf("default runs failed: %s\n", e.what());
    }
    const Check no_runs{false, "default runs did not complete"};
    report(2, "determinism", runs ? guarded([&] { return determinism(*runs); }) : no_runs);
    report(3, "illumination", guarded(illumination));
    report(4, "physics", guarded(physics));
    report(5, "cascade", guarded(cascade_checks));
    report(6, "hybrid accounting", runs ? guarded([&] { return hybrid(*runs); }) : no_runs);
    report(7, "default run progress", runs ? guarded([&] { return default_run_progress(*runs); }) : no_runs);
    report(8, "oracles", guarded(oracles));
    return failures == 0 ? 0 : 1;
}
