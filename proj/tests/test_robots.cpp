#include <numeric>
#include <queue>
#include <set>

#include <gtest/gtest.h>

#include <mle/rng.hpp>
#include <mle/robots.hpp>

#include "fixtures.hpp"

using namespace mle;

namespace {

    // Union-find labelling: an independent connected-components oracle.
    std::vector<bool> oracle_largest(const std::vector<bool>& mask, int w, int h)
    {
        std::vector<int> parent(mask.size());
        std::iota(parent.begin(), parent.end(), 0);
        auto find = [&](int x) {
            while (parent[static_cast<std::size_t>(x)] != x)
                x = parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
            return x;
        };
        auto unite = [&](int a, int b) {
            a = find(a);
            b = find(b);
            if (a != b)
                parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b); // root = smallest cell
        };
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                const int i = r * w + c;
                if (!mask[static_cast<std::size_t>(i)])
                    continue;
                if (c + 1 < w && mask[static_cast<std::size_t>(i + 1)])
                    unite(i, i + 1);
                if (r + 1 < h && mask[static_cast<std::size_t>(i + w)])
                    unite(i, i + w);
            }
        std::map<int, int> size;
        for (int i = 0; i < w * h; ++i)
            if (mask[static_cast<std::size_t>(i)])
                ++size[find(i)];
        int best_root = -1, best_size = 0;
        for (const auto& [root, n] : size) // roots ascending, so ties keep the smallest cell
            if (n > best_size) {
                best_size = n;
                best_root = root;
            }
        std::vector<bool> keep(mask.size(), false);
        for (int i = 0; i < w * h; ++i)
            keep[static_cast<std::size_t>(i)] = mask[static_cast<std::size_t>(i)] && find(i) == best_root;
        return keep;
    }

    bool connected(const BodyPlan& plan)
    {
        int start = -1, total = 0;
        for (int i = 0; i < 36; ++i)
            if (plan.cells[static_cast<std::size_t>(i)].occupied) {
                ++total;
                if (start < 0)
                    start = i;
            }
        if (start < 0)
            return false;
        std::set<int> seen{start};
        std::queue<int> q;
        q.push(start);
        while (!q.empty()) {
            const int c = q.front();
            q.pop();
            const int r = c / 6, col = c % 6;
            for (auto [dc, dr] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
                const int nc = col + dc, nr = r + dr;
                if (nc < 0 || nr < 0 || nc >= 6 || nr >= 6)
                    continue;
                const int n = nr * 6 + nc;
                if (plan.cells[static_cast<std::size_t>(n)].occupied && seen.insert(n).second)
                    q.push(n);
            }
        }
        return static_cast<int>(seen.size()) == total;
    }

    ComponentArchives archives() { return fixture::uniform_components(fixture::component(4.8, 1e4, 0.2, 0.5, 0.5)); }

} // namespace

TEST(ExpressRobot, ConstantStructureBody)
{
    RobotGenome g;
    g.body = fixture::constant_body(1.0, ComponentClass::Structure);
    const auto plan = express_robot(g, archives());
    EXPECT_EQ(plan.occupied_count(), 36);
    EXPECT_TRUE(connected(plan));
    for (const auto& c : plan.cells)
        EXPECT_EQ(c.pointer.cls, ComponentClass::Structure);
    const auto d = descriptor(plan);
    EXPECT_EQ(d.cell_count, 36);
    EXPECT_EQ(d.actuator_fraction, 0.0);
}

TEST(ExpressRobot, EmptyBodyForcesSingleStructureCell)
{
    RobotGenome g;
    g.body = fixture::constant_body(-1.0, ComponentClass::Actuator);
    const auto plan = express_robot(g, archives());
    EXPECT_EQ(plan.occupied_count(), 1);
    EXPECT_TRUE(plan.at(2, 2).occupied);
    EXPECT_EQ(plan.at(2, 2).pointer.cls, ComponentClass::Structure);
    EXPECT_EQ(plan.at(2, 2).pointer.bin, (std::array<int, 2>{0, 0}));
    const auto d = descriptor(plan);
    EXPECT_EQ(d.cell_count, 1);
    EXPECT_EQ(d.actuator_fraction, 0.0);
}

TEST(ExpressRobot, AllActuatorBody)
{
    RobotGenome g;
    g.body = fixture::constant_body(1.0, ComponentClass::Actuator);
    const auto d = descriptor(express_robot(g, archives()));
    EXPECT_EQ(d.cell_count, 36);
    EXPECT_EQ(d.actuator_fraction, 1.0);
}

TEST(ExpressRobot, SensorQualityIsMeanOverSensorCells)
{
    RobotGenome g;
    g.body = fixture::constant_body(1.0, ComponentClass::Sensor);
    EXPECT_EQ(express_robot(g, archives()).sensor_quality, 0.5);
    g.body = fixture::constant_body(1.0, ComponentClass::Structure);
    EXPECT_EQ(express_robot(g, archives()).sensor_quality, 0.0);
}

TEST(ExpressRobot, PhaseScaledByPi)
{
    RobotGenome g;
    g.body = fixture::constant_body(1.0, ComponentClass::Structure, 0.8);
    const auto plan = express_robot(g, archives());
    EXPECT_NEAR(plan.at(0, 0).phase, std::numbers::pi * (2.0 / (1.0 + std::exp(-0.8)) - 1.0), 1e-12);
}

TEST(ExpressRobot, EmptyClassArchiveIsUnresolved)
{
    auto a = archives();
    a.at(ComponentClass::Sensor) = ComponentArchive(default_component_spec(), Level::Component, "sensor");
    RobotGenome g;
    g.body = fixture::constant_body(1.0, ComponentClass::Structure);
    EXPECT_THROW(express_robot(g, a), UnresolvedPointerError);
}

TEST(ExpressRobot, InvariantsOverRandomGenomes)
{
    Rng rng(3);
    const auto a = archives();
    for (int t = 0; t < 3000; ++t) {
        auto g = random_robot(rng);
        for (int k = 0; k < static_cast<int>(rng.below(6)); ++k)
            g = mutate_robot(g, rng);
        const auto plan = express_robot(g, a);
        ASSERT_GE(plan.occupied_count(), 1);
        ASSERT_TRUE(connected(plan));
        for (const auto& c : plan.cells) {
            ASSERT_GE(c.phase, -std::numbers::pi);
            ASSERT_LE(c.phase, std::numbers::pi);
        }
        const auto d = descriptor(plan);
        ASSERT_GE(d.actuator_fraction, 0.0);
        ASSERT_LE(d.actuator_fraction, 1.0);
        EXPECT_EQ(express_robot(g, a), plan);
    }
}

TEST(Descriptor, CountsActuators)
{
    BodyPlan plan;
    for (int i = 0; i < 10; ++i) {
        plan.cells[static_cast<std::size_t>(i)].occupied = true;
        plan.cells[static_cast<std::size_t>(i)].pointer.cls = i < 4 ? ComponentClass::Actuator : ComponentClass::Structure;
    }
    const auto d = descriptor(plan);
    EXPECT_EQ(d.cell_count, 10);
    EXPECT_DOUBLE_EQ(d.actuator_fraction, 0.4);
}

TEST(PointerCoordinate, SurjectiveAndBounded)
{
    for (int bins : {1, 3, 10}) {
        std::set<int> hit;
        for (int i = 0; i <= 10000; ++i) {
            const int c = pointer_coordinate(-1.0 + 2.0 * i / 10000.0, bins);
            ASSERT_GE(c, 0);
            ASSERT_LT(c, bins);
            hit.insert(c);
        }
        EXPECT_EQ(static_cast<int>(hit.size()), bins);
    }
}

TEST(ArgmaxClass, TieOrder)
{
    EXPECT_EQ(argmax_class(0.5, 0.5, 0.5), ComponentClass::Structure);
    EXPECT_EQ(argmax_class(0.1, 0.5, 0.5), ComponentClass::Actuator);
    EXPECT_EQ(argmax_class(0.1, 0.2, 0.5), ComponentClass::Sensor);
}

TEST(LargestRegion, FiveBeatsThree)
{
    // Row-major 6x6: a 5-cell L shape and a separate 3-cell bar.
    std::vector<bool> mask(36, false);
    for (int i : {0, 1, 2, 6, 12})
        mask[static_cast<std::size_t>(i)] = true;
    for (int i : {33, 34, 35})
        mask[static_cast<std::size_t>(i)] = true;
    const auto keep = largest_region(mask, 6, 6);
    EXPECT_EQ(keep, oracle_largest(mask, 6, 6));
    EXPECT_EQ(std::count(keep.begin(), keep.end(), true), 5);
    EXPECT_FALSE(keep[33]);
}

TEST(LargestRegion, TieKeepsRegionWithSmallestCell)
{
    std::vector<bool> mask(36, false);
    for (int i : {30, 31}) // later region
        mask[static_cast<std::size_t>(i)] = true;
    for (int i : {4, 5}) // earlier region
        mask[static_cast<std::size_t>(i)] = true;
    const auto keep = largest_region(mask, 6, 6);
    EXPECT_TRUE(keep[4]);
    EXPECT_FALSE(keep[30]);
}

TEST(LargestRegion, MatchesUnionFindOracle)
{
    Rng rng(5);
    for (int t = 0; t < 1000; ++t) {
        const int w = 1 + static_cast<int>(rng.below(8)), h = 1 + static_cast<int>(rng.below(8));
        const double density = rng.uniform(0.1, 0.9);
        std::vector<bool> mask(static_cast<std::size_t>(w * h));
        for (std::size_t i = 0; i < mask.size(); ++i)
            mask[i] = rng.bernoulli(density);
        ASSERT_EQ(largest_region(mask, w, h), oracle_largest(mask, w, h));
    }
}

TEST(MutateRobot, ZeroRatesIsIdentity)
{
    Rng rng(7);
    const auto g = random_robot(rng);
    for (int i = 0; i < 100; ++i) {
        const auto c = mutate_robot(g, rng, RobotMutation::none(), CppnMutationRates::none());
        EXPECT_EQ(c.body, g.body);
        EXPECT_EQ(c.controller.omega, g.controller.omega);
        EXPECT_EQ(c.controller.amplitude, g.controller.amplitude);
        EXPECT_EQ(c.controller.feedback_gain, g.controller.feedback_gain);
    }
}

TEST(MutateRobot, ControllerStaysInRange)
{
    Rng rng(11);
    auto g = random_robot(rng);
    for (int i = 0; i < 10000; ++i) {
        g = mutate_robot(g, rng, {1.0, 0.3}, CppnMutationRates::none());
        ASSERT_GE(g.controller.omega, 0.5);
        ASSERT_LE(g.controller.omega, 4.0);
        ASSERT_GE(g.controller.amplitude, 0.0);
        ASSERT_LE(g.controller.amplitude, 1.0);
        ASSERT_GE(g.controller.feedback_gain, -1.0);
        ASSERT_LE(g.controller.feedback_gain, 1.0);
    }
}

TEST(MutateRobot, SeededReproducibility)
{
    Rng a(13), b(13);
    auto ga = random_robot(a), gb = random_robot(b);
    for (int i = 0; i < 200; ++i) {
        ga = mutate_robot(ga, a);
        gb = mutate_robot(gb, b);
    }
    EXPECT_EQ(nlohmann::json(ga).dump(), nlohmann::json(gb).dump());
}

TEST(RobotJson, RoundTripAndShape)
{
    Rng rng(17);
    const auto g = random_robot(rng);
    const nlohmann::json j = g;
    EXPECT_EQ(nlohmann::json(j.get<RobotGenome>()).dump(), j.dump());
    for (const char* k : {"omega", "amplitude", "feedback_gain"})
        EXPECT_TRUE(j.at("controller").contains(k));
    auto bad = j;
    bad["body"]["outputs"] = 2;
    EXPECT_ANY_THROW(bad.get<RobotGenome>());
}
