#pragma once

// Laplacian-based graph convolutions written two ways: the dense matrix
// formula and the equivalent message passing form. The two paths share no
// code beyond the eigendecomposition, so each checks the other.

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "mpnn/random.hpp"

namespace mpnn::spectral {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { kRelu, kIdentity };

Matrix activate(const Matrix& x, Activation act);

/// L = I - D^-1/2 W D^-1/2. Isolated nodes contribute a zero row of the
/// normalized adjacency. Throws ContractError if W is not square/symmetric.
Matrix normalized_laplacian(const Matrix& w);

struct Eigenbasis {
  Vector values;  // ascending
  Matrix vectors;  // columns, first nonzero component of each positive
};

Eigenbasis eigenbasis(const Matrix& symmetric);

struct SpectralLayer {
  Matrix adjacency;  // N x N
  std::size_t d_in = 0;
  std::size_t d_out = 0;
  /// filters[i * d_out + j] is the diagonal of F_ij, length N.
  std::vector<Vector> filters;
  Activation activation = Activation::kRelu;

  Eigenbasis basis;  // of the normalized Laplacian

  /// Validates shapes and computes the eigenbasis.
  static SpectralLayer make(Matrix adjacency, std::size_t d_in, std::size_t d_out,
                            std::vector<Vector> filters,
                            Activation activation = Activation::kRelu);
  std::size_t num_nodes() const { return static_cast<std::size_t>(adjacency.rows()); }
};

/// y_j = act(sum_i V F_ij V^T x_i), with x_i the i-th column of x [N x d_in].
Matrix spectral_layer_dense(const Matrix& x, const SpectralLayer& layer);

/// Per-pair coefficient matrices Lt(v,w) [d_in x d_out] with entries
/// (V F_ij V^T)_vw; the message to v is sum_w Lt(v,w)^T h_w and the update
/// is act(m_v).
Matrix spectral_pair_matrix(const SpectralLayer& layer, std::size_t v, std::size_t w);
Matrix spectral_as_mpnn(const Matrix& x, const SpectralLayer& layer);

struct GcnLayer {
  Matrix adjacency;  // A without self loops
  Matrix weight;  // D x D'
  Activation activation = Activation::kRelu;
};

/// A + I.
Matrix with_self_loops(const Matrix& a);
/// c_vw = At_vw / sqrt(deg v * deg w) over At = A + I.
Matrix gcn_coefficients(const Matrix& a);
/// act(Dt^-1/2 At Dt^-1/2 H W) by matrix products.
Matrix gcn_dense(const Matrix& h, const GcnLayer& layer);
/// m_v = sum_w c_vw h_w over neighbours (self loop included), then
/// act(W^T m_v) per node.
Matrix gcn_as_mpnn(const Matrix& h, const GcnLayer& layer);

/// Symmetric 0/1 adjacency with edge probability p and zero diagonal.
Matrix random_adjacency(Rng& rng, std::size_t n, double p);
Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols);

struct EquivalenceReport {
  std::size_t graphs = 0;
  double spectral_max_dev = 0.0;
  double gcn_max_dev = 0.0;
};

/// Random graphs with 1..max_nodes nodes and feature widths 1..max_dim.
EquivalenceReport check_equivalence(std::uint64_t seed, std::size_t graphs = 100,
                                    std::size_t max_nodes = 8, std::size_t max_dim = 4);

}  // namespace mpnn::spectral
