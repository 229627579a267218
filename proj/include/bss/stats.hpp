#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

namespace bss {

struct BoxStats {
    double min = 0, q1 = 0, median = 0, q3 = 0, max = 0, mean = 0;
    std::size_t n = 0;
};

/// Linear-interpolation quantile of sorted data (the "type 7" rule).
inline double quantile_sorted(const std::vector<double>& s, double p) {
    if (s.empty()) return 0.0;
    double pos = p * (s.size() - 1);
    auto lo = static_cast<std::size_t>(std::floor(pos));
    auto hi = std::min(lo + 1, s.size() - 1);
    return s[lo] + (pos - lo) * (s[hi] - s[lo]);
}

inline BoxStats box_stats(std::vector<double> v) {
    BoxStats b;
    b.n = v.size();
    if (v.empty()) return b;
    std::sort(v.begin(), v.end());
    b.min = v.front();
    b.max = v.back();
    b.q1 = quantile_sorted(v, 0.25);
    b.median = quantile_sorted(v, 0.5);
    b.q3 = quantile_sorted(v, 0.75);
    double s = 0;
    for (double x : v) s += x;
    b.mean = s / v.size();
    return b;
}

}  // namespace bss
