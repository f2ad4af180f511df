// Fills a 10x10 archive on a toy problem and prints the fitness grid.
#include <iostream>
#include <vector>

#include <mle/archive.hpp>
#include <mle/export.hpp>
#include <mle/rng.hpp>

int main()
{
    using Genome = std::vector<double>;
    mle::FeatureSpec spec({{0.0, 1.0, 10}, {0.0, 1.0, 10}});
    mle::Archive<Genome> archive(spec, mle::Level::Material, "toy");
    mle::Rng rng(7);

    auto evaluate = [](const Genome& g) {
        mle::Elite<Genome> e;
        e.genome = g;
        e.features = g;
        e.fitness = -((g[0] - 0.5) * (g[0] - 0.5) + (g[1] - 0.5) * (g[1] - 0.5));
        return e;
    };

    for (int i = 0; i < 20; ++i)
        archive.try_insert(evaluate({rng.uniform(), rng.uniform()}));
    for (int i = 0; i < 20000; ++i) {
        Genome child = archive.select_random_occupied(rng).genome;
        for (auto& x : child)
            x = mle::clamp(x + rng.normal(0.0, 0.1), 0.0, 1.0);
        archive.try_insert(evaluate(child));
    }

    const auto m = archive.metrics();
    std::cout << "coverage " << m.coverage << ", best " << *m.best_fitness << "\n";
    std::cout << mle::heatmap_csv(archive);
}
