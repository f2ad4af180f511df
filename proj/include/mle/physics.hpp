#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "common.hpp"
#include "components.hpp"
#include "robots.hpp"

namespace mle {

    struct Vec2 {
        double x = 0.0;
        double y = 0.0;

        Vec2& operator+=(Vec2 o)
        {
            x += o.x;
            y += o.y;
            return *this;
        }
        Vec2& operator-=(Vec2 o)
        {
            x -= o.x;
            y -= o.y;
            return *this;
        }
        friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
        friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
        friend Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.y}; }
        friend bool operator==(Vec2, Vec2) = default;
        double dot(Vec2 o) const { return x * o.x + y * o.y; }
        double norm() const { return std::sqrt(x * x + y * y); }
    };

    struct PointMass {
        Vec2 position;
        Vec2 velocity;
        double mass = 0.0;
    };

    struct Actuation {
        double gain = 0.0;
        double phase = 0.0;
    };

    struct Spring {
        int a = 0;
        int b = 0;
        double rest_length = 0.0;
        double stiffness = 0.0;
        double damping = 0.0; // N*s/m
        std::optional<Actuation> actuation;
    };

    // Mass positions are relative to a horizontal frame origin `frame_x`, so
    // translating a body is exact: only the frame moves.
    struct SpringMassModel {
        std::vector<PointMass> masses;
        std::vector<Spring> springs;
        double sensor_quality = 0.0;
        Controller controller;
        double frame_x = 0.0;

        void translate(double dx) { frame_x += dx; }

        double total_mass() const
        {
            double m = 0.0;
            for (const auto& p : masses)
                m += p.mass;
            return m;
        }

        Vec2 com() const
        {
            Vec2 c;
            double m = 0.0;
            for (const auto& p : masses) {
                c += p.mass * p.position;
                m += p.mass;
            }
            return (1.0 / m) * c;
        }

        Vec2 com_velocity() const
        {
            Vec2 c;
            double m = 0.0;
            for (const auto& p : masses) {
                c += p.mass * p.velocity;
                m += p.mass;
            }
            return (1.0 / m) * c;
        }
    };

    struct SimConfig {
        double dt = 1e-3;
        double duration = 5.0;
        double gravity = 9.81;
        double ground_stiffness = 1e4;
        double ground_damping = 10.0;
        double friction_mu = 1.0;

        static SimConfig real() { return {1e-3, 5.0}; }
        static SimConfig virtual_() { return {5e-3, 5.0}; }
        static SimConfig for_fidelity(Fidelity f) { return f == Fidelity::Real ? real() : virtual_(); }

        void validate() const
        {
            if (!(dt > 0.0) || !(dt <= duration))
                throw ConfigError("simulation needs 0 < dt <= duration");
            if (!(gravity >= 0.0) || !(ground_stiffness > 0.0) || !(ground_damping >= 0.0) || !(friction_mu >= 0.0))
                throw ConfigError("simulation ground/gravity parameters out of range");
        }
    };

    inline constexpr double robot_cell_size = 0.1; // m
    inline constexpr double diagonal_stiffness_factor = 0.5;

    // Spring network for a body plan. Corner masses are shared between
    // adjacent cells and a shared edge is a single spring; its stiffness and
    // damping ratio are the mean over the cells that contribute it, and its
    // actuation comes from the first actuator cell (row-major) that owns it.
    inline SpringMassModel build_model(const BodyPlan& plan, std::span<const std::optional<ResolvedComponent>> resolved,
        const Controller& controller, int component_cells = 16)
    {
        if (resolved.size() != plan.cells.size())
            throw DimensionError("resolved component list does not match the body lattice");
        constexpr int nodes_per_side = body_lattice + 1;
        auto node_key = [](int col, int row) { return row * nodes_per_side + col; };

        std::map<int, double> node_mass; // ordered by key = row-major node order
        for (int row = 0; row < body_lattice; ++row)
            for (int col = 0; col < body_lattice; ++col) {
                const auto i = static_cast<std::size_t>(row * body_lattice + col);
                if (!plan.cells[i].occupied)
                    continue;
                if (!resolved[i])
                    throw UnresolvedPointerError("occupied body cell without a resolved component");
                const double corner = resolved[i]->phenotype.mass / component_cells / 4.0;
                node_mass[node_key(col, row)] += corner;
                node_mass[node_key(col + 1, row)] += corner;
                node_mass[node_key(col, row + 1)] += corner;
                node_mass[node_key(col + 1, row + 1)] += corner;
            }

        SpringMassModel model;
        model.controller = controller.clamped();
        model.sensor_quality = plan.sensor_quality;
        std::map<int, int> node_index;
        int min_row = nodes_per_side;
        for (const auto& [key, m] : node_mass)
            min_row = std::min(min_row, key / nodes_per_side);
        for (const auto& [key, m] : node_mass) {
            const int col = key % nodes_per_side, row = key / nodes_per_side;
            node_index[key] = static_cast<int>(model.masses.size());
            model.masses.push_back({{col * robot_cell_size, (row - min_row) * robot_cell_size}, {}, m});
        }

        struct Accum {
            int a, b;
            double rest;
            double k_sum = 0.0;
            double c_sum = 0.0;
            int count = 0;
            std::optional<Actuation> act;
        };
        std::vector<Accum> accum;
        std::map<std::pair<int, int>, std::size_t> edge_slot;
        const double diag = robot_cell_size * std::numbers::sqrt2;

        for (int row = 0; row < body_lattice; ++row)
            for (int col = 0; col < body_lattice; ++col) {
                const auto i = static_cast<std::size_t>(row * body_lattice + col);
                if (!plan.cells[i].occupied)
                    continue;
                const auto& comp = resolved[i]->phenotype;
                const bool actuated = resolved[i]->cls == ComponentClass::Actuator;
                const int n00 = node_index.at(node_key(col, row));
                const int n10 = node_index.at(node_key(col + 1, row));
                const int n01 = node_index.at(node_key(col, row + 1));
                const int n11 = node_index.at(node_key(col + 1, row + 1));
                const std::tuple<int, int, double, double> edges[6] = {
                    {n00, n10, robot_cell_size, 1.0},
                    {n01, n11, robot_cell_size, 1.0},
                    {n00, n01, robot_cell_size, 1.0},
                    {n10, n11, robot_cell_size, 1.0},
                    {n00, n11, diag, diagonal_stiffness_factor},
                    {n10, n01, diag, diagonal_stiffness_factor},
                };
                for (const auto& [a, b, rest, kf] : edges) {
                    const std::pair<int, int> key{std::min(a, b), std::max(a, b)};
                    auto [it, fresh] = edge_slot.emplace(key, accum.size());
                    if (fresh)
                        accum.push_back({key.first, key.second, rest, 0.0, 0.0, 0, std::nullopt});
                    auto& s = accum[it->second];
                    s.k_sum += kf * comp.mean_stiffness;
                    s.c_sum += comp.mean_damping;
                    ++s.count;
                    if (actuated && !s.act)
                        s.act = Actuation{comp.actuation_capability, plan.cells[i].phase};
                }
            }

        for (const auto& s : accum) {
            Spring sp;
            sp.a = s.a;
            sp.b = s.b;
            sp.rest_length = s.rest;
            sp.stiffness = s.k_sum / s.count;
            const double ratio = s.c_sum / s.count;
            const double m_local = 0.5 * (model.masses[static_cast<std::size_t>(s.a)].mass + model.masses[static_cast<std::size_t>(s.b)].mass);
            sp.damping = 2.0 * ratio * std::sqrt(sp.stiffness * m_local);
            sp.actuation = s.act;
            model.springs.push_back(sp);
        }
        return model;
    }

    inline constexpr double max_strain = 0.5;
    inline constexpr double drive_scale = 0.3;

    /// Actuation strain of one spring at time t. vy_com is the body's vertical
    /// centre-of-mass velocity, the only sensed signal.
    inline double drive(double t, const Actuation& act, const Controller& ctrl, double sensor_quality, double vy_com)
    {
        double feedback = 0.0;
        if (sensor_quality > 0.0)
            feedback = clamp(ctrl.feedback_gain * sensor_quality * vy_com / 1.0, -max_strain, max_strain);
        const double open_loop = drive_scale * act.gain * ctrl.amplitude * std::sin(ctrl.omega * 2.0 * std::numbers::pi * t + act.phase);
        return clamp(open_loop + feedback, -max_strain, max_strain);
    }

    /// Kinetic + elastic (against unactuated rest length) + gravitational
    /// potential, with y = 0 at the ground.
    inline double mechanical_energy(const SpringMassModel& model, double gravity = 9.81)
    {
        double e = 0.0;
        for (const auto& p : model.masses)
            e += 0.5 * p.mass * p.velocity.dot(p.velocity) + p.mass * gravity * p.position.y;
        for (const auto& s : model.springs) {
            const double stretch = (model.masses[static_cast<std::size_t>(s.b)].position - model.masses[static_cast<std::size_t>(s.a)].position).norm() - s.rest_length;
            e += 0.5 * s.stiffness * stretch * stretch;
        }
        return e;
    }

    struct TrajectorySample {
        double t = 0.0;
        double x = 0.0;
        double y = 0.0;
        double energy = 0.0;
    };

    struct SimResult {
        double fitness = 0.0;        // x_com(T) - x_com(0), m
        double mean_speed = 0.0;     // mean |v_com|, m/s
        double final_com_x = 0.0;
        std::vector<double> energy_trace; // J, 10 Hz including t = 0
    };

    struct SimOptions {
        std::vector<TrajectorySample>* trajectory = nullptr; // 100 Hz when set
        SpringMassModel* final_state = nullptr;
    };

    // Thresholds past which a run counts as numerically exploded.
    inline constexpr double divergence_speed = 100.0;     // m/s
    inline constexpr double divergence_distance = 1000.0; // m

    // Semi-implicit Euler on flat ground. The state is integrated relative to
    // the leftmost initial mass so that translating the model changes nothing
    // but the reported absolute positions.
    inline SimResult simulate(SpringMassModel model, const SimConfig& config, const SimOptions& options = {})
    {
        config.validate();
        if (model.masses.empty())
            throw EvaluationError("cannot simulate a model without masses");
        for (const auto& p : model.masses)
            if (!(p.mass > 0.0))
                throw EvaluationError("point mass must be positive");
        for (const auto& s : model.springs)
            if (!(s.stiffness > 0.0))
                throw EvaluationError("spring stiffness must be positive");

        double origin = model.masses.front().position.x;
        for (const auto& p : model.masses)
            origin = std::min(origin, p.position.x);
        for (auto& p : model.masses)
            p.position.x -= origin;

        const double dt = config.dt;
        const auto steps = static_cast<long>(std::llround(config.duration / dt));
        const long energy_every = std::max(1L, std::lround(0.1 / dt));
        const long trajectory_every = std::max(1L, std::lround(0.01 / dt));
        const double total_mass = model.total_mass();
        const std::size_t n = model.masses.size();
        std::vector<Vec2> force(n);

        auto com_x = [&] {
            double s = 0.0;
            for (const auto& p : model.masses)
                s += p.mass * p.position.x;
            return s / total_mass;
        };
        auto sample = [&](long step) {
            const double t = static_cast<double>(step) * dt;
            if (options.trajectory && step % trajectory_every == 0) {
                const Vec2 c = model.com();
                options.trajectory->push_back({t, model.frame_x + (origin + c.x), c.y, mechanical_energy(model, config.gravity)});
            }
        };

        SimResult result;
        const double x0 = com_x();
        result.energy_trace.push_back(mechanical_energy(model, config.gravity));
        sample(0);

        double speed_sum = 0.0;
        for (long step = 0; step < steps; ++step) {
            const double t = static_cast<double>(step) * dt;
            const double vy_com = model.com_velocity().y;

            for (std::size_t i = 0; i < n; ++i)
                force[i] = {0.0, -model.masses[i].mass * config.gravity};

            for (const auto& s : model.springs) {
                auto& pa = model.masses[static_cast<std::size_t>(s.a)];
                auto& pb = model.masses[static_cast<std::size_t>(s.b)];
                double rest = s.rest_length;
                if (s.actuation)
                    rest *= 1.0 + drive(t, *s.actuation, model.controller, model.sensor_quality, vy_com);
                const Vec2 d = pb.position - pa.position;
                const double len = d.norm();
                if (len < 1e-12)
                    continue;
                const Vec2 u = (1.0 / len) * d;
                const double magnitude = s.stiffness * (len - rest) + s.damping * (pb.velocity - pa.velocity).dot(u);
                const Vec2 f = magnitude * u;
                force[static_cast<std::size_t>(s.a)] += f;
                force[static_cast<std::size_t>(s.b)] -= f;
            }

            for (std::size_t i = 0; i < n; ++i) {
                auto& p = model.masses[i];
                if (p.position.y >= 0.0)
                    continue;
                const double normal = std::max(0.0, -config.ground_stiffness * p.position.y - config.ground_damping * p.velocity.y);
                force[i].y += normal;
                // Coulomb friction: the force that would stop tangential slip this
                // step, limited to mu * N.
                const double limit = config.friction_mu * normal;
                const double wanted = -p.mass * p.velocity.x / dt - force[i].x;
                force[i].x += clamp(wanted, -limit, limit);
            }

            for (std::size_t i = 0; i < n; ++i) {
                auto& p = model.masses[i];
                p.velocity += (dt / p.mass) * force[i];
                p.position += dt * p.velocity;
                if (!std::isfinite(p.position.x) || !std::isfinite(p.position.y) || !std::isfinite(p.velocity.x)
                    || !std::isfinite(p.velocity.y) || p.velocity.norm() > divergence_speed
                    || std::abs(p.position.x) > divergence_distance || std::abs(p.position.y) > divergence_distance)
                    throw DivergedError("simulation diverged at t = " + std::to_string(t + dt) + " s");
            }

            speed_sum += model.com_velocity().norm();
            const long done = step + 1;
            if (done % energy_every == 0)
                result.energy_trace.push_back(mechanical_energy(model, config.gravity));
            sample(done);
        }

        const double x1 = com_x();
        result.fitness = x1 - x0;
        result.final_com_x = model.frame_x + (origin + x1);
        result.mean_speed = steps > 0 ? speed_sum / static_cast<double>(steps) : 0.0;
        if (options.final_state) {
            *options.final_state = model;
            for (auto& p : options.final_state->masses)
                p.position.x += origin;
        }
        return result;
    }

    /// Trajectory CSV: header `t,x,y,energy`, one row per sample.
    inline std::string trajectory_csv(std::span<const TrajectorySample> samples)
    {
        std::string out = "t,x,y,energy\n";
        char buf[160];
        for (const auto& s : samples) {
            std::snprintf(buf, sizeof buf, "%.3f,%.17g,%.17g,%.17g\n", s.t, s.x, s.y, s.energy);
            out += buf;
        }
        return out;
    }

} // namespace mle
