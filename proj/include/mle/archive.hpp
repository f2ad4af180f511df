#pragma once

#include <cmath>
#include <cstdint>
#include <iterator>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <json.hpp>

#include "common.hpp"
#include "rng.hpp"

namespace mle {

    using json = nlohmann::json;

    /// Axis-aligned grid over a feature space.
    struct FeatureSpec {
        struct Dim {
            double lower = 0.0;
            double upper = 1.0;
            int bins = 1;
        };

        std::vector<Dim> dims;

        FeatureSpec() = default;
        explicit FeatureSpec(std::vector<Dim> d) : dims(std::move(d)) { validate(); }

        std::size_t dim_count() const { return dims.size(); }

        std::size_t total_bins() const
        {
            std::size_t n = 1;
            for (const auto& d : dims)
                n *= static_cast<std::size_t>(d.bins);
            return n;
        }

        void validate() const
        {
            if (dims.empty())
                throw ConfigError("feature spec needs at least one dimension");
            for (const auto& d : dims) {
                if (!(d.lower < d.upper))
                    throw ConfigError("feature spec bound lower must be < upper");
                if (d.bins < 1)
                    throw ConfigError("feature spec needs >= 1 bin per dimension");
            }
        }

        bool contains(std::span<const int> index) const
        {
            if (index.size() != dims.size())
                return false;
            for (std::size_t d = 0; d < dims.size(); ++d)
                if (index[d] < 0 || index[d] >= dims[d].bins)
                    return false;
            return true;
        }

        friend bool operator==(const FeatureSpec& a, const FeatureSpec& b)
        {
            if (a.dims.size() != b.dims.size())
                return false;
            for (std::size_t i = 0; i < a.dims.size(); ++i)
                if (a.dims[i].lower != b.dims[i].lower || a.dims[i].upper != b.dims[i].upper || a.dims[i].bins != b.dims[i].bins)
                    return false;
            return true;
        }
    };

    using BinIndex = std::vector<int>;

    inline double clamp_feature(double f, const FeatureSpec::Dim& d) { return clamp(f, d.lower, d.upper); }

    /// Discretise a feature vector. Out-of-range values are clamped; the upper
    /// bound lands in the last bin.
    inline BinIndex bin_index(std::span<const double> features, const FeatureSpec& spec)
    {
        if (features.size() != spec.dim_count())
            throw DimensionError("feature vector has " + std::to_string(features.size()) + " entries, spec has "
                + std::to_string(spec.dim_count()) + " dimensions");
        BinIndex idx(features.size());
        for (std::size_t d = 0; d < features.size(); ++d) {
            const auto& dim = spec.dims[d];
            if (!std::isfinite(features[d]))
                throw EvaluationError("non-finite feature value");
            const double f = clamp_feature(features[d], dim);
            int i = static_cast<int>(std::floor((f - dim.lower) / (dim.upper - dim.lower) * dim.bins));
            idx[d] = clamp(i, 0, dim.bins - 1);
        }
        return idx;
    }

    /// Placeholder phenotype for archives that don't cache one.
    struct NoPhenotype {
        friend bool operator==(const NoPhenotype&, const NoPhenotype&) = default;
    };

    template <typename Genome, typename Phenotype = NoPhenotype>
    struct Elite {
        Genome genome{};
        Phenotype phenotype{};
        double fitness = 0.0;
        std::vector<double> features;
        Fidelity provenance = Fidelity::Virtual;
        bool stale = false;
        std::uint64_t eval_id = 0;
    };

    enum class InsertOutcome { NewBin, Improved, Rejected };

    inline std::string_view to_string(InsertOutcome o)
    {
        switch (o) {
        case InsertOutcome::NewBin:
            return "new_bin";
        case InsertOutcome::Improved:
            return "improved";
        case InsertOutcome::Rejected:
            return "rejected";
        }
        return "?";
    }

    struct ArchiveMetrics {
        double coverage = 0.0;
        double qd_score = 0.0;
        std::optional<double> best_fitness; // empty archive has no best
        std::size_t occupied = 0;
        std::size_t total = 0;
    };

    // Illumination archive: one elite per bin of an n-dimensional grid.
    //
    // Single writer. Bins live in a std::map keyed by the index vector, so
    // iteration (and therefore selection and serialisation) is in
    // lexicographic index order.
    template <typename Genome, typename Phenotype = NoPhenotype>
    class Archive {
    public:
        using elite_t = Elite<Genome, Phenotype>;
        using bins_t = std::map<BinIndex, elite_t>;

        Archive() = default;
        Archive(FeatureSpec spec, Level level, std::string process)
            : _spec(std::move(spec)), _level(level), _process(std::move(process))
        {
            _spec.validate();
        }

        const FeatureSpec& spec() const { return _spec; }
        Level level() const { return _level; }
        const std::string& process() const { return _process; }

        const bins_t& bins() const { return _bins; }
        std::size_t size() const { return _bins.size(); }
        bool empty() const { return _bins.empty(); }

        /// Lowest fitness ever stored in this archive; the QD-score baseline.
        std::optional<double> min_fitness_observed() const { return _min_fitness; }

        const elite_t* find(const BinIndex& bin) const
        {
            auto it = _bins.find(bin);
            return it == _bins.end() ? nullptr : &it->second;
        }

        elite_t* find(const BinIndex& bin)
        {
            auto it = _bins.find(bin);
            return it == _bins.end() ? nullptr : &it->second;
        }

        BinIndex bin_of(std::span<const double> features) const { return bin_index(features, _spec); }

        InsertOutcome try_insert(elite_t candidate)
        {
            check_candidate(candidate);
            clamp_features(candidate.features);
            const BinIndex bin = bin_index(candidate.features, _spec);
            auto it = _bins.find(bin);
            if (it == _bins.end()) {
                observe(candidate.fitness);
                _bins.emplace(bin, std::move(candidate));
                return InsertOutcome::NewBin;
            }
            if (candidate.fitness > it->second.fitness) {
                observe(candidate.fitness);
                it->second = std::move(candidate);
                return InsertOutcome::Improved;
            }
            return InsertOutcome::Rejected;
        }

        /// Unconditional write, bypassing elitism. Reserved for cascade
        /// re-evaluation, which may lower an elite's fitness in place.
        void assign(const BinIndex& bin, elite_t elite)
        {
            if (!_spec.contains(bin))
                throw DimensionError("bin index outside archive spec");
            check_candidate(elite);
            clamp_features(elite.features);
            observe(elite.fitness);
            _bins[bin] = std::move(elite);
        }

        /// Vacate a bin. Only cascade re-binning calls this.
        bool erase(const BinIndex& bin) { return _bins.erase(bin) > 0; }

        const elite_t& select_random_occupied(Rng& rng) const
        {
            if (_bins.empty())
                throw EmptyArchiveError("cannot select from empty " + std::string(to_string(_level)) + " archive '" + _process + "'");
            auto it = _bins.begin();
            std::advance(it, static_cast<std::ptrdiff_t>(rng.below(_bins.size())));
            return it->second;
        }

        ArchiveMetrics metrics() const
        {
            ArchiveMetrics m;
            m.total = _spec.total_bins();
            m.occupied = _bins.size();
            m.coverage = static_cast<double>(m.occupied) / static_cast<double>(m.total);
            if (_bins.empty())
                return m;
            const double base = _min_fitness.value_or(0.0);
            double best = -std::numeric_limits<double>::infinity();
            for (const auto& [bin, e] : _bins) {
                m.qd_score += e.fitness - base;
                best = std::max(best, e.fitness);
            }
            m.best_fitness = best;
            return m;
        }

        void restore_min_fitness(std::optional<double> v) { _min_fitness = v; }

    private:
        void check_candidate(const elite_t& c) const
        {
            if (!std::isfinite(c.fitness))
                throw EvaluationError("candidate fitness is not finite");
            if (c.features.size() != _spec.dim_count())
                throw DimensionError("candidate has " + std::to_string(c.features.size()) + " features, archive expects "
                    + std::to_string(_spec.dim_count()));
            for (double f : c.features)
                if (!std::isfinite(f))
                    throw EvaluationError("candidate feature is not finite");
        }

        void clamp_features(std::vector<double>& features) const
        {
            for (std::size_t d = 0; d < features.size(); ++d)
                features[d] = clamp_feature(features[d], _spec.dims[d]);
        }

        void observe(double fitness)
        {
            if (!_min_fitness || fitness < *_min_fitness)
                _min_fitness = fitness;
        }

        FeatureSpec _spec;
        Level _level = Level::Material;
        std::string _process;
        bins_t _bins;
        std::optional<double> _min_fitness;
    };

    // ---- JSON -------------------------------------------------------------

    inline void to_json(json& j, const NoPhenotype&) { j = nullptr; }
    inline void from_json(const json&, NoPhenotype&) {}

    inline json spec_to_json(const FeatureSpec& spec)
    {
        json bounds = json::array();
        json bins = json::array();
        for (const auto& d : spec.dims) {
            bounds.push_back({d.lower, d.upper});
            bins.push_back(d.bins);
        }
        return {{"bounds", bounds}, {"bins_per_dim", bins}};
    }

    inline FeatureSpec spec_from_json(const json& j)
    {
        const auto& bounds = j.at("bounds");
        const auto& bins = j.at("bins_per_dim");
        if (bounds.size() != bins.size())
            throw LoadError("spec bounds/bins_per_dim length mismatch");
        std::vector<FeatureSpec::Dim> dims;
        for (std::size_t i = 0; i < bounds.size(); ++i)
            dims.push_back({bounds[i].at(0).get<double>(), bounds[i].at(1).get<double>(), bins[i].get<int>()});
        return FeatureSpec(std::move(dims));
    }

    template <typename Genome, typename Phenotype>
    json archive_to_json(const Archive<Genome, Phenotype>& archive)
    {
        json bins = json::array();
        for (const auto& [index, e] : archive.bins()) {
            json b = {
                {"index", index},
                {"fitness", e.fitness},
                {"features", e.features},
                {"provenance", to_string(e.provenance)},
                {"stale", e.stale},
                {"eval_id", e.eval_id},
                {"genome", e.genome},
            };
            if constexpr (!std::is_same_v<Phenotype, NoPhenotype>)
                b["phenotype"] = e.phenotype;
            bins.push_back(std::move(b));
        }
        json j = {
            {"level", to_string(archive.level())},
            {"process", archive.process()},
            {"spec", spec_to_json(archive.spec())},
            {"bins", std::move(bins)},
        };
        if (auto m = archive.min_fitness_observed())
            j["min_fitness_observed"] = *m;
        else
            j["min_fitness_observed"] = nullptr;
        return j;
    }

    template <typename Genome, typename Phenotype>
    Archive<Genome, Phenotype> archive_from_json(const json& j)
    {
        Archive<Genome, Phenotype> archive(spec_from_json(j.at("spec")), level_from_string(j.at("level").get<std::string>()),
            j.at("process").get<std::string>());
        for (const auto& b : j.at("bins")) {
            Elite<Genome, Phenotype> e;
            e.fitness = b.at("fitness").get<double>();
            e.features = b.at("features").get<std::vector<double>>();
            e.provenance = fidelity_from_string(b.at("provenance").get<std::string>());
            e.stale = b.at("stale").get<bool>();
            e.eval_id = b.at("eval_id").get<std::uint64_t>();
            e.genome = b.at("genome").get<Genome>();
            if constexpr (!std::is_same_v<Phenotype, NoPhenotype>)
                e.phenotype = b.at("phenotype").get<Phenotype>();
            archive.assign(b.at("index").get<BinIndex>(), std::move(e));
        }
        const auto& m = j.at("min_fitness_observed");
        archive.restore_min_fitness(m.is_null() ? std::nullopt : std::optional<double>(m.get<double>()));
        return archive;
    }

} // namespace mle
