#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "archive.hpp"
#include "common.hpp"

namespace mle {

    /// Canonical form: nlohmann's default object type keeps keys sorted, and
    /// numbers print in their shortest round-trip form.
    inline std::string canonical_json(const json& j) { return j.dump(); }

    inline std::string genome_hash(const json& genome) { return hex64(fnv1a64(canonical_json(genome))); }

    template <typename Genome>
    std::string genome_hash_of(const Genome& genome)
    {
        return genome_hash(json(genome));
    }

    /// One genome's evaluation history across fidelities.
    struct EvalRecord {
        std::string genome_hash;
        Level level = Level::Robot;
        std::string process;
        std::vector<double> descriptor;
        std::optional<double> fitness_virtual;
        std::optional<double> fitness_real;
        std::vector<std::uint64_t> eval_ids;
    };

    inline void to_json(json& j, const EvalRecord& r)
    {
        j = {{"genome_hash", r.genome_hash},
            {"level", to_string(r.level)},
            {"process", r.process},
            {"descriptor", r.descriptor},
            {"fitness_virtual", r.fitness_virtual ? json(*r.fitness_virtual) : json(nullptr)},
            {"fitness_real", r.fitness_real ? json(*r.fitness_real) : json(nullptr)},
            {"eval_ids", r.eval_ids}};
    }

    inline void from_json(const json& j, EvalRecord& r)
    {
        r.genome_hash = j.at("genome_hash").get<std::string>();
        r.level = level_from_string(j.at("level").get<std::string>());
        r.process = j.at("process").get<std::string>();
        r.descriptor = j.at("descriptor").get<std::vector<double>>();
        const auto& fv = j.at("fitness_virtual");
        const auto& fr = j.at("fitness_real");
        r.fitness_virtual = fv.is_null() ? std::nullopt : std::optional<double>(fv.get<double>());
        r.fitness_real = fr.is_null() ? std::nullopt : std::optional<double>(fr.get<double>());
        r.eval_ids = j.at("eval_ids").get<std::vector<std::uint64_t>>();
    }

    // k-nearest-neighbour estimate of |fitness_real - fitness_virtual| for a
    // design, from designs evaluated at both fidelities. Descriptors are
    // normalised per dimension to [0, 1] by the archive bounds before taking
    // Euclidean distances.
    class TransferabilityPredictor {
    public:
        struct Sample {
            std::vector<double> descriptor;
            double gap = 0.0;
        };

        TransferabilityPredictor() = default;
        TransferabilityPredictor(FeatureSpec bounds, int k = 5, double prior = 0.1)
            : _bounds(std::move(bounds)), _k(k), _prior(prior)
        {
        }

        void add(std::vector<double> descriptor, double gap)
        {
            if (descriptor.size() != _bounds.dim_count())
                throw DimensionError("transferability sample has the wrong descriptor length");
            _samples.push_back({std::move(descriptor), std::abs(gap)});
        }

        double predict(std::span<const double> descriptor) const
        {
            if (_samples.empty())
                return _prior;
            if (descriptor.size() != _bounds.dim_count())
                throw DimensionError("transferability query has the wrong descriptor length");
            const auto q = normalise(descriptor);
            std::vector<std::pair<double, std::size_t>> dist;
            dist.reserve(_samples.size());
            for (std::size_t i = 0; i < _samples.size(); ++i) {
                const auto s = normalise(_samples[i].descriptor);
                double d2 = 0.0;
                for (std::size_t d = 0; d < s.size(); ++d)
                    d2 += (s[d] - q[d]) * (s[d] - q[d]);
                dist.push_back({d2, i});
            }
            const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(std::max(_k, 1)), dist.size());
            std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
            double sum = 0.0;
            for (std::size_t i = 0; i < k; ++i)
                sum += _samples[dist[i].second].gap;
            return sum / static_cast<double>(k);
        }

        const std::vector<Sample>& samples() const { return _samples; }
        const FeatureSpec& bounds() const { return _bounds; }
        int k() const { return _k; }
        double prior() const { return _prior; }

    private:
        std::vector<double> normalise(std::span<const double> x) const
        {
            std::vector<double> out(x.size());
            for (std::size_t d = 0; d < x.size(); ++d) {
                const auto& dim = _bounds.dims[d];
                out[d] = clamp((x[d] - dim.lower) / (dim.upper - dim.lower), 0.0, 1.0);
            }
            return out;
        }

        FeatureSpec _bounds;
        int _k = 5;
        double _prior = 0.1;
        std::vector<Sample> _samples;
    };

    struct PromotionCandidate {
        std::string genome_hash;
        double fitness_virtual = 0.0;
        std::vector<double> descriptor;
    };

    /// Indices of the candidates to re-evaluate at the fine fidelity: best
    /// gap-penalised virtual fitness first, ties by genome hash.
    inline std::vector<std::size_t> promote(std::span<const PromotionCandidate> candidates, const TransferabilityPredictor& predictor,
        long fine_budget)
    {
        if (fine_budget <= 0 || candidates.empty())
            return {};
        struct Scored {
            double score;
            std::size_t index;
        };
        std::vector<Scored> scored;
        for (std::size_t i = 0; i < candidates.size(); ++i)
            scored.push_back({candidates[i].fitness_virtual - predictor.predict(candidates[i].descriptor), i});
        std::stable_sort(scored.begin(), scored.end(), [&](const Scored& a, const Scored& b) {
            if (a.score != b.score)
                return a.score > b.score;
            return candidates[a.index].genome_hash < candidates[b.index].genome_hash;
        });
        const auto n = std::min<std::size_t>(static_cast<std::size_t>(fine_budget), scored.size());
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < n; ++i)
            out.push_back(scored[i].index);
        return out;
    }

    // Insertion that respects provenance. A real-provenance incumbent can be
    // displaced by a real candidate with higher fitness, or by a virtual
    // candidate that beats it by more than the predicted fidelity gap. A real
    // evaluation of the same genome as a virtual incumbent replaces it
    // outright. Everything else follows the plain archive rule.
    template <typename G, typename P>
    InsertOutcome insert_with_provenance(Archive<G, P>& archive, Elite<G, P> candidate, const TransferabilityPredictor& predictor)
    {
        if (!std::isfinite(candidate.fitness))
            throw EvaluationError("candidate fitness is not finite");
        const BinIndex bin = archive.bin_of(candidate.features);
        const auto* incumbent = archive.find(bin);
        if (!incumbent)
            return archive.try_insert(std::move(candidate));

        if (incumbent->provenance == Fidelity::Real) {
            if (candidate.provenance == Fidelity::Real)
                return archive.try_insert(std::move(candidate));
            const double margin = predictor.predict(candidate.features);
            if (candidate.fitness > incumbent->fitness + margin) {
                archive.assign(bin, std::move(candidate));
                return InsertOutcome::Improved;
            }
            return InsertOutcome::Rejected;
        }

        if (candidate.provenance == Fidelity::Real && genome_hash_of(incumbent->genome) == genome_hash_of(candidate.genome)) {
            archive.assign(bin, std::move(candidate));
            return InsertOutcome::Improved;
        }
        return archive.try_insert(std::move(candidate));
    }

} // namespace mle
