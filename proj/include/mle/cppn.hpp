#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "common.hpp"
#include "rng.hpp"

namespace mle {

    enum class Activation { Linear, Sigmoid, Sine, Gaussian, Absolute };

    inline constexpr Activation all_activations[] = {
        Activation::Linear, Activation::Sigmoid, Activation::Sine, Activation::Gaussian, Activation::Absolute};

    inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

    inline double activate(Activation a, double x)
    {
        switch (a) {
        case Activation::Linear:
            return x;
        case Activation::Sigmoid:
            return sigmoid(x);
        case Activation::Sine:
            return std::sin(x);
        case Activation::Gaussian:
            return std::exp(-x * x);
        case Activation::Absolute:
            return std::abs(x);
        }
        return x;
    }

    NLOHMANN_JSON_SERIALIZE_ENUM(Activation,
        {{Activation::Linear, "linear"},
            {Activation::Sigmoid, "sigmoid"},
            {Activation::Sine, "sine"},
            {Activation::Gaussian, "gaussian"},
            {Activation::Absolute, "absolute"}})

    struct CppnNode {
        int id = 0;
        Activation activation = Activation::Linear;
        friend bool operator==(const CppnNode&, const CppnNode&) = default;
    };

    struct CppnConnection {
        int from = 0;
        int to = 0;
        double weight = 0.0;
        friend bool operator==(const CppnConnection&, const CppnConnection&) = default;
    };

    struct CppnMutationRates {
        double weight_prob = 0.8;
        double weight_sigma = 0.2;
        double add_connection = 0.1;
        double add_node = 0.05;
        double change_activation = 0.05;

        static CppnMutationRates none() { return {0.0, 0.0, 0.0, 0.0, 0.0}; }
    };

    inline constexpr double cppn_weight_limit = 3.0;

    // Feed-forward CPPN. Node ids: inputs are [0, inputs), outputs are
    // [inputs, inputs + outputs), hidden nodes follow. Input nodes carry the
    // raw input; every other node applies its activation to the weighted sum
    // of its predecessors. Outputs are squashed to [-1, 1] by 2*sigmoid(x)-1.
    //
    // Immutable after construction: mutate() returns a new net.
    class Cppn {
    public:
        Cppn() = default;

        Cppn(int inputs, int outputs, std::vector<CppnNode> nodes, std::vector<CppnConnection> connections)
            : _inputs(inputs), _outputs(outputs), _nodes(std::move(nodes)), _connections(std::move(connections))
        {
            build();
        }

        /// Inputs fully connected to outputs, no hidden nodes, weights U(-1, 1),
        /// output activations drawn uniformly from the activation set.
        static Cppn random(int inputs, int outputs, Rng& rng)
        {
            std::vector<CppnNode> nodes;
            for (int i = 0; i < inputs; ++i)
                nodes.push_back({i, Activation::Linear});
            for (int o = 0; o < outputs; ++o)
                nodes.push_back({inputs + o, random_activation(rng)});
            std::vector<CppnConnection> conns;
            for (int o = 0; o < outputs; ++o)
                for (int i = 0; i < inputs; ++i)
                    conns.push_back({i, inputs + o, rng.uniform(-1.0, 1.0)});
            return Cppn(inputs, outputs, std::move(nodes), std::move(conns));
        }

        int input_arity() const { return _inputs; }
        int output_arity() const { return _outputs; }
        const std::vector<CppnNode>& nodes() const { return _nodes; }
        const std::vector<CppnConnection>& connections() const { return _connections; }

        bool is_input(int id) const { return id >= 0 && id < _inputs; }
        bool is_output(int id) const { return id >= _inputs && id < _inputs + _outputs; }
        bool is_hidden(int id) const { return id >= _inputs + _outputs; }

        std::vector<double> eval(std::span<const double> inputs) const
        {
            if (static_cast<int>(inputs.size()) != _inputs)
                throw DimensionError("cppn expects " + std::to_string(_inputs) + " inputs, got " + std::to_string(inputs.size()));
            std::vector<double> value(_nodes.size(), 0.0);
            for (std::size_t pos : _order) {
                const auto& node = _nodes[pos];
                if (is_input(node.id)) {
                    value[pos] = inputs[static_cast<std::size_t>(node.id)];
                    continue;
                }
                double sum = 0.0;
                for (const auto& [src, w] : _incoming[pos])
                    sum += w * value[src];
                value[pos] = activate(node.activation, sum);
            }
            std::vector<double> out(static_cast<std::size_t>(_outputs));
            for (int o = 0; o < _outputs; ++o)
                out[static_cast<std::size_t>(o)] = 2.0 * sigmoid(value[_pos.at(_inputs + o)]) - 1.0;
            return out;
        }

        /// True when `to` can reach `from` through existing connections, i.e.
        /// adding from->to would close a cycle.
        bool would_cycle(int from, int to) const
        {
            if (from == to)
                return true;
            std::vector<int> stack{to};
            std::set<int> seen{to};
            while (!stack.empty()) {
                int n = stack.back();
                stack.pop_back();
                for (const auto& c : _connections) {
                    if (c.from != n)
                        continue;
                    if (c.to == from)
                        return true;
                    if (seen.insert(c.to).second)
                        stack.push_back(c.to);
                }
            }
            return false;
        }

        int next_node_id() const
        {
            int m = _inputs + _outputs - 1;
            for (const auto& n : _nodes)
                m = std::max(m, n.id);
            return m + 1;
        }

        friend bool operator==(const Cppn& a, const Cppn& b)
        {
            return a._inputs == b._inputs && a._outputs == b._outputs && a._nodes == b._nodes && a._connections == b._connections;
        }

        static Activation random_activation(Rng& rng)
        {
            return all_activations[rng.below(std::size(all_activations))];
        }

    private:
        void build()
        {
            if (_inputs < 1 || _outputs < 1)
                throw DimensionError("cppn needs at least one input and one output");
            _pos.clear();
            for (std::size_t i = 0; i < _nodes.size(); ++i)
                if (!_pos.emplace(_nodes[i].id, i).second)
                    throw EvaluationError("duplicate cppn node id " + std::to_string(_nodes[i].id));
            for (int id = 0; id < _inputs + _outputs; ++id)
                if (!_pos.count(id))
                    throw EvaluationError("cppn is missing input/output node " + std::to_string(id));

            _incoming.assign(_nodes.size(), {});
            std::vector<int> indegree(_nodes.size(), 0);
            std::vector<std::vector<std::size_t>> outgoing(_nodes.size());
            for (auto& c : _connections) {
                auto f = _pos.find(c.from);
                auto t = _pos.find(c.to);
                if (f == _pos.end() || t == _pos.end())
                    throw EvaluationError("cppn connection references an unknown node");
                if (is_input(c.to))
                    throw EvaluationError("cppn connection targets an input node");
                c.weight = clamp(c.weight, -cppn_weight_limit, cppn_weight_limit);
                _incoming[t->second].push_back({f->second, c.weight});
                outgoing[f->second].push_back(t->second);
                ++indegree[t->second];
            }

            // Kahn's algorithm, smallest node id first so the order is canonical.
            std::priority_queue<std::pair<int, std::size_t>, std::vector<std::pair<int, std::size_t>>, std::greater<>> ready;
            for (std::size_t i = 0; i < _nodes.size(); ++i)
                if (indegree[i] == 0)
                    ready.push({_nodes[i].id, i});
            _order.clear();
            while (!ready.empty()) {
                auto [id, pos] = ready.top();
                ready.pop();
                _order.push_back(pos);
                for (std::size_t nxt : outgoing[pos])
                    if (--indegree[nxt] == 0)
                        ready.push({_nodes[nxt].id, nxt});
            }
            if (_order.size() != _nodes.size())
                throw EvaluationError("cppn connection graph contains a cycle");
        }

        int _inputs = 0;
        int _outputs = 0;
        std::vector<CppnNode> _nodes;
        std::vector<CppnConnection> _connections;

        std::map<int, std::size_t> _pos;
        std::vector<std::vector<std::pair<std::size_t, double>>> _incoming;
        std::vector<std::size_t> _order;
    };

    inline Cppn mutate(const Cppn& net, Rng& rng, const CppnMutationRates& rates)
    {
        auto nodes = net.nodes();
        auto conns = net.connections();

        for (auto& c : conns)
            if (rng.bernoulli(rates.weight_prob))
                c.weight = clamp(c.weight + rng.normal(0.0, rates.weight_sigma), -cppn_weight_limit, cppn_weight_limit);

        if (rng.bernoulli(rates.add_connection)) {
            std::set<std::pair<int, int>> existing;
            for (const auto& c : conns)
                existing.insert({c.from, c.to});
            std::vector<int> ids;
            for (const auto& n : nodes)
                ids.push_back(n.id);
            std::sort(ids.begin(), ids.end());
            std::vector<std::pair<int, int>> candidates;
            for (int from : ids) {
                if (net.is_output(from))
                    continue;
                for (int to : ids) {
                    if (net.is_input(to) || existing.count({from, to}) || net.would_cycle(from, to))
                        continue;
                    candidates.push_back({from, to});
                }
            }
            if (!candidates.empty()) {
                auto [from, to] = candidates[rng.below(candidates.size())];
                conns.push_back({from, to, rng.uniform(-1.0, 1.0)});
            }
        }

        if (rng.bernoulli(rates.add_node) && !conns.empty()) {
            const std::size_t split = rng.below(conns.size());
            const CppnConnection old = conns[split];
            int id = net.next_node_id();
            for (const auto& c : conns)
                id = std::max(id, std::max(c.from, c.to) + 1);
            nodes.push_back({id, Cppn::random_activation(rng)});
            conns.erase(conns.begin() + static_cast<std::ptrdiff_t>(split));
            conns.push_back({old.from, id, 1.0});
            conns.push_back({id, old.to, old.weight});
        }

        if (rng.bernoulli(rates.change_activation)) {
            std::vector<std::size_t> hidden;
            for (std::size_t i = 0; i < nodes.size(); ++i)
                if (net.is_hidden(nodes[i].id))
                    hidden.push_back(i);
            if (!hidden.empty())
                nodes[hidden[rng.below(hidden.size())]].activation = Cppn::random_activation(rng);
        }

        return Cppn(net.input_arity(), net.output_arity(), std::move(nodes), std::move(conns));
    }

    /// width x height grid of CPPN outputs; cell (col, row).
    struct CppnLattice {
        int width = 0;
        int height = 0;
        std::vector<std::vector<double>> cells; // row-major

        const std::vector<double>& at(int col, int row) const
        {
            return cells[static_cast<std::size_t>(row * width + col)];
        }
    };

    /// Coordinate of lattice column/row `i` of `n`, spread over [-1, 1].
    /// Written with an exact integer numerator so mirrored cells get exactly
    /// negated coordinates.
    inline double lattice_coordinate(int i, int n)
    {
        if (n <= 1)
            return 0.0;
        return static_cast<double>(2 * i - (n - 1)) / static_cast<double>(n - 1);
    }

    inline CppnLattice query_lattice(const Cppn& net, int width, int height)
    {
        if (width < 1 || height < 1)
            throw DimensionError("lattice dimensions must be >= 1");
        if (net.input_arity() != 4)
            throw DimensionError("lattice queries need a 4-input cppn (x, y, r, bias)");
        CppnLattice lat{width, height, {}};
        lat.cells.reserve(static_cast<std::size_t>(width * height));
        for (int row = 0; row < height; ++row) {
            const double y = lattice_coordinate(row, height);
            for (int col = 0; col < width; ++col) {
                const double x = lattice_coordinate(col, width);
                const double in[4] = {x, y, std::sqrt(x * x + y * y), 1.0};
                lat.cells.push_back(net.eval(in));
            }
        }
        return lat;
    }

    inline void to_json(nlohmann::json& j, const Cppn& net)
    {
        nlohmann::json nodes = nlohmann::json::array();
        for (const auto& n : net.nodes())
            nodes.push_back({{"id", n.id}, {"activation", n.activation}});
        nlohmann::json conns = nlohmann::json::array();
        for (const auto& c : net.connections())
            conns.push_back({{"from", c.from}, {"to", c.to}, {"weight", c.weight}});
        j = {{"nodes", nodes}, {"connections", conns}, {"inputs", net.input_arity()}, {"outputs", net.output_arity()}};
    }

    inline void from_json(const nlohmann::json& j, Cppn& net)
    {
        std::vector<CppnNode> nodes;
        for (const auto& n : j.at("nodes"))
            nodes.push_back({n.at("id").get<int>(), n.at("activation").get<Activation>()});
        std::vector<CppnConnection> conns;
        for (const auto& c : j.at("connections"))
            conns.push_back({c.at("from").get<int>(), c.at("to").get<int>(), c.at("weight").get<double>()});
        net = Cppn(j.at("inputs").get<int>(), j.at("outputs").get<int>(), std::move(nodes), std::move(conns));
    }

} // namespace mle
