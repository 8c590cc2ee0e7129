#pragma once

// Reference subset search for the exhaustive topology adaptation, written
// against plain std::vector arithmetic and independent of the library's
// enumeration. Candidates are visited by increasing size and, within a
// size, in lexicographic order of their sorted member lists; the first
// strict minimum of |e| wins.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace gridest::oracle {

struct BruteForceChoice {
    std::vector<std::size_t> positions;  // positions within the neighborhood
    std::vector<double> estimate;
    double error = 0.0;
};

/// `weights[j]` and `psi[j]` belong to the j-th neighborhood member,
/// `h` and `z` to the bus doing the search.
inline BruteForceChoice brute_force_desta(std::vector<double> const& weights,
                                          std::vector<std::vector<double>> const& psi, std::vector<double> const& h,
                                          double z, bool renormalize) {
    std::size_t const t = weights.size();
    std::size_t const dim = h.size();
    BruteForceChoice best;
    bool have = false;

    for (std::size_t r = 1; r <= t; ++r) {
        // selector with r leading ones walks combinations in lexicographic order
        std::vector<bool> selector(t, false);
        std::fill(selector.begin(), selector.begin() + static_cast<std::ptrdiff_t>(r), true);
        do {
            std::vector<std::size_t> members;
            for (std::size_t j = 0; j < t; ++j) {
                if (selector[j]) members.push_back(j);
            }
            double total = 0.0;
            for (auto j : members) total += weights[j];
            if (renormalize && total <= 0.0) continue;

            std::vector<double> v(dim, 0.0);
            for (auto j : members) {
                double const w = renormalize ? weights[j] / total : weights[j];
                for (std::size_t d = 0; d < dim; ++d) v[d] += w * psi[j][d];
            }
            double fit = 0.0;
            for (std::size_t d = 0; d < dim; ++d) fit += h[d] * v[d];
            double const e = z - fit;
            if (!have || std::abs(e) < std::abs(best.error)) {
                best = {members, v, e};
                have = true;
            }
        } while (std::prev_permutation(selector.begin(), selector.end()));
    }
    return best;
}

}  // namespace gridest::oracle
