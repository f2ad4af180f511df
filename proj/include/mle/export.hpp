#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "archive.hpp"
#include "common.hpp"

namespace mle {

    namespace detail {
        inline std::string number(double v) { return json(v).dump(); }
    } // namespace detail

    /// Fitness grid of a 2-D archive: rows are dim-0 bins, columns dim-1
    /// bins, both ascending. The header row and first column hold bin lower
    /// bounds; vacant bins are empty strings.
    template <typename G, typename P>
    std::string heatmap_csv(const Archive<G, P>& archive)
    {
        const auto& spec = archive.spec();
        if (spec.dim_count() != 2)
            throw UnsupportedExportError("heatmap export needs a 2-D archive, got " + std::to_string(spec.dim_count()) + " dimensions");
        const auto lower = [&](std::size_t d, int i) {
            const auto& dim = spec.dims[d];
            return dim.lower + (dim.upper - dim.lower) * i / dim.bins;
        };
        std::string out;
        for (int j = 0; j < spec.dims[1].bins; ++j)
            out += "," + detail::number(lower(1, j));
        out += "\n";
        for (int i = 0; i < spec.dims[0].bins; ++i) {
            out += detail::number(lower(0, i));
            for (int j = 0; j < spec.dims[1].bins; ++j) {
                out += ",";
                if (const auto* e = archive.find(BinIndex{i, j}))
                    out += detail::number(e->fitness);
            }
            out += "\n";
        }
        return out;
    }

    template <typename G, typename P>
    void export_heatmap(const Archive<G, P>& archive, const std::filesystem::path& path)
    {
        const auto csv = heatmap_csv(archive);
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out)
            throw Error("cannot write " + path.string());
        out << csv;
    }

} // namespace mle
