#pragma once

#include <cstddef>
#include <vector>

namespace lmpseq {

/// A quadrature rule stored as paired nodes and weights.
struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;

    std::size_t size() const { return nodes.size(); }
};

/// Gauss-Hermite rule transformed to standard-normal expectations:
/// E[f(Z)] ~ sum_i w_i f(x_i) with Z ~ N(0,1) and sum_i w_i = 1.
///
/// Nodes are exactly +/- paired and weights renormalized, so symmetric
/// integrands keep their symmetry to the last bit.
QuadratureRule gauss_hermite_normal(std::size_t n);

/// Gauss-Legendre rule on [-1,1].
QuadratureRule gauss_legendre(std::size_t n);

} // namespace lmpseq
