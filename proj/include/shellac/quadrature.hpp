#pragma once

#include <vector>

#include "shellac/core.hpp"

namespace shellac {

// Quadrature point on the reference triangle {v,w >= 0, v+w <= 1}.
// Weights include the reference area: sum(weight) = 1/2, so
// integral over T of f dv dw = sum_i weight_i f(v_i, w_i).
struct QuadPoint {
    double v, w, weight;
};

// Symmetric interior rule (Dunavant) exact for polynomials of the given total
// degree. Available degrees: 2, 4, 5, 8, 10; requests in between round up.
const std::vector<QuadPoint>& triangle_rule(int degree);

// Next rule up from `degree`, for two-rule convergence checks.
int doubled_degree(int degree);

std::vector<double> gauss_legendre_nodes(int n);    // on (0,1)
std::vector<double> gauss_legendre_weights(int n);  // sum = 1

// Tensor Duffy rule clustering integration points toward the given corner
// (0,1,2) of the reference triangle; the transform jacobian regularizes 1/r
// singularities at that corner. n1d^2 points.
std::vector<QuadPoint> duffy_rule(int corner, int n1d);

}  // namespace shellac
