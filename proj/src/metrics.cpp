#include "tgd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "tgd/parallel.hpp"

namespace tgd {

double wasserstein_1d(const std::vector<double>& a_sorted,
                      const std::vector<double>& b_sorted, int order) {
    if (a_sorted.empty() || a_sorted.size() != b_sorted.size())
        throw std::invalid_argument("wasserstein_1d: inputs must be nonempty and equal-size");
    if (order != 1 && order != 2) throw std::invalid_argument("wasserstein_1d: order must be 1 or 2");
    double acc = 0.0;
    for (std::size_t i = 0; i < a_sorted.size(); ++i) {
        const double d = std::fabs(a_sorted[i] - b_sorted[i]);
        acc += (order == 1) ? d : d * d;
    }
    acc /= static_cast<double>(a_sorted.size());
    return (order == 1) ? acc : std::sqrt(acc);
}

std::vector<Vec> projection_directions(std::size_t count, std::size_t dim, RngStream& rng) {
    if (dim == 0) throw std::invalid_argument("projection_directions: dim must be >= 1");
    std::vector<Vec> dirs(count, Vec(dim));
    for (auto& d : dirs) {
        double n = 0.0;
        do {
            rng.fill_normal(d);
            n = norm(d);
        } while (n < 1e-12);
        for (double& c : d) c /= n;
    }
    return dirs;
}

namespace {

bool uniform_weights(const std::vector<double>& w) {
    if (w.empty()) return true;
    for (double v : w)
        if (v != w.front()) return false;
    return true;
}

std::vector<std::size_t> comb_indices(const std::vector<double>& weights, std::size_t m,
                                      double u) {
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw std::invalid_argument("sample weights must be >= 0");
        total += w;
    }
    if (!(total > 0.0)) throw std::invalid_argument("sample weights sum to zero");
    std::vector<std::size_t> idx(m);
    double cum = weights[0];
    std::size_t j = 0;
    for (std::size_t i = 0; i < m; ++i) {
        const double pos = (static_cast<double>(i) + u) / static_cast<double>(m) * total;
        while (pos >= cum && j + 1 < weights.size()) cum += weights[++j];
        idx[i] = j;
    }
    return idx;
}

// Equal-size uniform clouds for projection. Weighted inputs are resampled to
// equal weights; the larger cloud is then subsampled without replacement.
// Inputs already in that form pass through untouched and draw nothing.
std::vector<const Vec*> reduce_cloud(const SampleSet& s, std::size_t target, RngStream& rng) {
    if (s.points.empty()) throw std::invalid_argument("sliced distance: empty sample set");
    if (!s.weights.empty()) {
        if (s.weights.size() != s.points.size())
            throw std::invalid_argument("sliced distance: weights misaligned with points");
        double total = 0.0;
        for (double w : s.weights) {
            if (!(w >= 0.0)) throw std::invalid_argument("sample weights must be >= 0");
            total += w;
        }
        if (!(total > 0.0)) throw std::invalid_argument("sample weights sum to zero");
    }

    std::vector<const Vec*> view;
    if (!s.weights.empty() && !uniform_weights(s.weights)) {
        const auto idx = comb_indices(s.weights, target, rng.u01());
        view.reserve(target);
        for (std::size_t i : idx) view.push_back(&s.points[i]);
        return view;
    }
    view.reserve(s.points.size());
    for (const auto& p : s.points) view.push_back(&p);
    if (view.size() > target) {
        std::vector<std::size_t> perm(view.size());
        std::iota(perm.begin(), perm.end(), 0);
        for (std::size_t i = 0; i < target; ++i) {
            const std::size_t j =
                i + static_cast<std::size_t>(rng.u01() * static_cast<double>(perm.size() - i));
            std::swap(perm[i], perm[std::min(j, perm.size() - 1)]);
        }
        std::vector<const Vec*> sub(target);
        for (std::size_t i = 0; i < target; ++i) sub[i] = view[perm[i]];
        return sub;
    }
    return view;
}

void project_sorted(const std::vector<const Vec*>& cloud, const Vec& dir,
                    std::vector<double>& out) {
    out.resize(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) out[i] = dot(*cloud[i], dir);
    std::sort(out.begin(), out.end());
}

}  // namespace

SlicedDistances sliced_wasserstein(const SampleSet& a, const SampleSet& b,
                                   const std::vector<Vec>& directions, int order,
                                   RngStream& rng) {
    if (directions.empty())
        throw std::invalid_argument("sliced_wasserstein: need at least one direction");
    const std::size_t target = std::min(a.points.size(), b.points.size());
    const auto ca = reduce_cloud(a, target, rng);
    const auto cb = reduce_cloud(b, target, rng);

    std::vector<double> per_dir(directions.size());
    parallel_for(directions.size(), [&](std::size_t d) {
        std::vector<double> pa, pb;
        project_sorted(ca, directions[d], pa);
        project_sorted(cb, directions[d], pb);
        per_dir[d] = wasserstein_1d(pa, pb, order);
    });
    SlicedDistances out;
    double sum = 0.0;
    for (double v : per_dir) {
        out.max = std::max(out.max, v);
        sum += v;
    }
    out.mean = sum / static_cast<double>(per_dir.size());
    return out;
}

double max_sliced_wasserstein(const SampleSet& a, const SampleSet& b,
                              const std::vector<Vec>& directions, int order, RngStream& rng) {
    return sliced_wasserstein(a, b, directions, order, rng).max;
}

double mean_sliced_wasserstein(const SampleSet& a, const SampleSet& b,
                               const std::vector<Vec>& directions, int order, RngStream& rng) {
    return sliced_wasserstein(a, b, directions, order, rng).mean;
}

double max_sliced_wasserstein(const SampleSet& a, const SampleSet& b,
                              std::size_t n_projections, int order, RngStream& rng) {
    if (a.points.empty()) throw std::invalid_argument("sliced distance: empty sample set");
    const auto dirs = projection_directions(n_projections, a.points.front().size(), rng);
    return max_sliced_wasserstein(a, b, dirs, order, rng);
}

}  // namespace tgd
