#include "shellac/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <array>

namespace shellac {

namespace {

// Orbit generators (barycentric). Weights are not transcribed: the symmetric
// point set determines them uniquely, so they are recovered at build time by
// solving the moment-matching system and verified to machine precision.
using Orbit = std::vector<std::pair<double, double>>;  // (v, w) members

Orbit center_orbit() { return {{1.0 / 3.0, 1.0 / 3.0}}; }

// permutations of (a, b, b)
Orbit orbit3(double a) {
    const double b = 0.5 * (1.0 - a);
    return {{b, b}, {a, b}, {b, a}};  // (v,w) = (b1,b2) of perms of bary (a,b,b)
}

// permutations of (a, b, c)
Orbit orbit6(double a, double b) {
    const double c = 1.0 - a - b;
    return {{b, c}, {a, c}, {a, b}, {c, b}, {c, a}, {b, a}};
}

std::vector<QuadPoint> build_rule(int degree) {
    std::vector<Orbit> orbits;
    switch (degree) {
        case 2:
            orbits.push_back(orbit3(2.0 / 3.0));
            break;
        case 4:
            orbits.push_back(orbit3(0.108103018168070));
            orbits.push_back(orbit3(0.816847572980459));
            break;
        case 5:
            orbits.push_back(center_orbit());
            orbits.push_back(orbit3(0.059715871789770));
            orbits.push_back(orbit3(0.797426985353087));
            break;
        case 8:
            orbits.push_back(center_orbit());
            orbits.push_back(orbit3(0.081414823414554));
            orbits.push_back(orbit3(0.658861384496480));
            orbits.push_back(orbit3(0.898905543365938));
            orbits.push_back(orbit6(0.008394777409958, 0.263112829634638));
            break;
        case 10:
            orbits.push_back(center_orbit());
            orbits.push_back(orbit3(0.028844733232685));
            orbits.push_back(orbit3(0.781036849029926));
            orbits.push_back(orbit6(0.141707219414880, 0.307939838764121));
            orbits.push_back(orbit6(0.025003534762686, 0.246672560639903));
            orbits.push_back(orbit6(0.009540815400299, 0.066803251012200));
            break;
        default:
            throw Error("triangle_rule: no rule of degree " + std::to_string(degree));
    }

    // moment matching: sum_o w_o sum_{p in o} v^i w^j = i! j! / (i+j+2)!
    const int no = static_cast<int>(orbits.size());
    std::vector<std::array<int, 2>> monomials;
    for (int i = 0; i <= degree; ++i)
        for (int j = 0; i + j <= degree; ++j) monomials.push_back({i, j});
    Eigen::MatrixXd M(monomials.size(), no);
    Eigen::VectorXd rhs(monomials.size());
    for (size_t r = 0; r < monomials.size(); ++r) {
        const int i = monomials[r][0], j = monomials[r][1];
        for (int o = 0; o < no; ++o) {
            double s = 0;
            for (const auto& [v, w] : orbits[o]) s += std::pow(v, i) * std::pow(w, j);
            M(r, o) = s;
        }
        double ex = 1.0;
        for (int k = 1; k <= i; ++k) ex *= k;
        for (int k = 1; k <= j; ++k) ex *= k;
        for (int k = 1; k <= i + j + 2; ++k) ex /= k;
        rhs(r) = ex;
    }
    const Eigen::VectorXd w = M.colPivHouseholderQr().solve(rhs);
    if ((M * w - rhs).norm() > 1e-13) {
        throw Error("triangle_rule: degree " + std::to_string(degree) + " orbit points inconsistent");
    }

    std::vector<QuadPoint> rule;
    for (int o = 0; o < no; ++o) {
        for (const auto& [v, ww] : orbits[o]) rule.push_back({v, ww, w(o)});
    }
    return rule;
}

}  // namespace

const std::vector<QuadPoint>& triangle_rule(int degree) {
    static std::mutex mu;
    static std::map<int, std::vector<QuadPoint>> cache;
    if (degree > 10) throw Error("triangle_rule: degree > 10 unavailable");
    const int d = degree <= 2 ? 2 : degree <= 4 ? 4 : degree <= 5 ? 5 : degree <= 8 ? 8 : 10;
    std::scoped_lock lock(mu);
    auto it = cache.find(d);
    if (it == cache.end()) it = cache.emplace(d, build_rule(d)).first;
    return it->second;
}

int doubled_degree(int degree) { return degree <= 4 ? 8 : 10; }

std::vector<double> gauss_legendre_nodes(int n) {
    std::vector<double> x(n);
    for (int i = 0; i < n; ++i) {
        // Newton on P_n with Chebyshev start, standard interval [-1,1]
        double t = std::cos(kPi * (i + 0.75) / (n + 0.5));
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = t;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2 * k - 1) * t * p1 - (k - 1) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            const double dp = n * (t * p1 - p0) / (t * t - 1.0);
            const double dt = p1 / dp;
            t -= dt;
            if (std::abs(dt) < 1e-15) break;
        }
        x[i] = 0.5 * (1.0 - t);  // map to (0,1), ascending
    }
    return x;
}

std::vector<double> gauss_legendre_weights(int n) {
    const auto nodes = gauss_legendre_nodes(n);
    std::vector<double> w(n);
    for (int i = 0; i < n; ++i) {
        const double t = 1.0 - 2.0 * nodes[i];
        double p0 = 1.0, p1 = t;
        for (int k = 2; k <= n; ++k) {
            const double p2 = ((2 * k - 1) * t * p1 - (k - 1) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        const double dp = n * (t * p1 - p0) / (t * t - 1.0);
        w[i] = 1.0 / ((1.0 - t * t) * dp * dp);  // already halved: sums to 1 on (0,1)
    }
    return w;
}

std::vector<QuadPoint> duffy_rule(int corner, int n1d) {
    const auto xs = gauss_legendre_nodes(n1d);
    const auto ws = gauss_legendre_weights(n1d);
    std::vector<QuadPoint> pts;
    pts.reserve(n1d * n1d);
    for (int i = 0; i < n1d; ++i) {
        for (int j = 0; j < n1d; ++j) {
            const double s = xs[i], t = xs[j];
            // cluster at barycentric corner 0, then rotate labels
            const double b0 = 1.0 - s;
            const double b1 = s * (1.0 - t);
            const double b2 = s * t;
            double v, w;
            switch (corner) {
                case 0: v = b1; w = b2; break;
                case 1: v = b0; w = b1; break;
                case 2: v = b2; w = b0; break;
                default: throw Error("duffy_rule: corner out of range");
            }
            pts.push_back({v, w, ws[i] * ws[j] * s});
        }
    }
    return pts;
}

}  // namespace shellac
