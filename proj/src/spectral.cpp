#include "mpnn/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mpnn/errors.hpp"

namespace mpnn::spectral {

namespace {

void require_symmetric(const Matrix& w, const char* what) {
  if (w.rows() != w.cols()) {
    throw ContractError(std::string(what) + " must be square, got " +
                        std::to_string(w.rows()) + "x" + std::to_string(w.cols()));
  }
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < w.cols(); ++j) {
      if (w(i, j) != w(j, i)) {
        throw ContractError(std::string(what) + " is not symmetric at (" +
                            std::to_string(i) + "," + std::to_string(j) + ")");
      }
    }
  }
}

double act1(double v, Activation act) {
  return act == Activation::kRelu ? std::max(v, 0.0) : v;
}

}  // namespace

Matrix activate(const Matrix& x, Activation act) {
  return x.unaryExpr([act](double v) { return act1(v, act); });
}

Matrix normalized_laplacian(const Matrix& w) {
  require_symmetric(w, "adjacency");
  const Eigen::Index n = w.rows();
  Vector inv_sqrt(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double deg = w.row(i).sum();
    inv_sqrt(i) = deg > 0.0 ? 1.0 / std::sqrt(deg) : 0.0;
  }
  Matrix l = Matrix::Identity(n, n);
  l -= inv_sqrt.asDiagonal() * w * inv_sqrt.asDiagonal();
  return l;
}

Eigenbasis eigenbasis(const Matrix& symmetric) {
  require_symmetric(symmetric, "matrix");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetric);
  if (solver.info() != Eigen::Success) throw Error("eigendecomposition did not converge");
  Eigenbasis b{solver.eigenvalues(), solver.eigenvectors()};
  for (Eigen::Index c = 0; c < b.vectors.cols(); ++c) {
    for (Eigen::Index r = 0; r < b.vectors.rows(); ++r) {
      const double v = b.vectors(r, c);
      if (std::abs(v) > 1e-12) {
        if (v < 0) b.vectors.col(c) *= -1.0;
        break;
      }
    }
  }
  return b;
}

SpectralLayer SpectralLayer::make(Matrix adjacency, std::size_t d_in, std::size_t d_out,
                                  std::vector<Vector> filters, Activation activation) {
  SpectralLayer layer;
  layer.basis = eigenbasis(normalized_laplacian(adjacency));
  const auto n = adjacency.rows();
  if (d_in == 0 || d_out == 0) throw DimensionError("spectral layer widths must be positive");
  if (filters.size() != d_in * d_out) {
    throw DimensionError("expected " + std::to_string(d_in * d_out) + " filters, got " +
                         std::to_string(filters.size()));
  }
  for (const Vector& f : filters) {
    if (f.size() != n) throw DimensionError("filter diagonal length must equal N");
  }
  layer.adjacency = std::move(adjacency);
  layer.d_in = d_in;
  layer.d_out = d_out;
  layer.filters = std::move(filters);
  layer.activation = activation;
  return layer;
}

Matrix spectral_layer_dense(const Matrix& x, const SpectralLayer& layer) {
  const Eigen::Index n = static_cast<Eigen::Index>(layer.num_nodes());
  if (x.rows() != n || x.cols() != static_cast<Eigen::Index>(layer.d_in)) {
    throw DimensionError("spectral input must be N x d_in");
  }
  const Matrix& v = layer.basis.vectors;
  Matrix y = Matrix::Zero(n, static_cast<Eigen::Index>(layer.d_out));
  for (std::size_t j = 0; j < layer.d_out; ++j) {
    for (std::size_t i = 0; i < layer.d_in; ++i) {
      const Vector& f = layer.filters[i * layer.d_out + j];
      y.col(static_cast<Eigen::Index>(j)) +=
          v * (f.asDiagonal() * (v.transpose() * x.col(static_cast<Eigen::Index>(i))));
    }
  }
  return activate(y, layer.activation);
}

Matrix spectral_pair_matrix(const SpectralLayer& layer, std::size_t v, std::size_t w) {
  const Matrix& vec = layer.basis.vectors;
  const std::size_t n = layer.num_nodes();
  Matrix lt(static_cast<Eigen::Index>(layer.d_in), static_cast<Eigen::Index>(layer.d_out));
  for (std::size_t i = 0; i < layer.d_in; ++i) {
    for (std::size_t j = 0; j < layer.d_out; ++j) {
      const Vector& f = layer.filters[i * layer.d_out + j];
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        acc += vec(static_cast<Eigen::Index>(v), kk) * f(kk) *
               vec(static_cast<Eigen::Index>(w), kk);
      }
      lt(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = acc;
    }
  }
  return lt;
}

Matrix spectral_as_mpnn(const Matrix& x, const SpectralLayer& layer) {
  const std::size_t n = layer.num_nodes();
  if (x.rows() != static_cast<Eigen::Index>(n) ||
      x.cols() != static_cast<Eigen::Index>(layer.d_in)) {
    throw DimensionError("spectral input must be N x d_in");
  }
  Matrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(layer.d_out));
  for (std::size_t v = 0; v < n; ++v) {
    std::vector<double> m(layer.d_out, 0.0);
    // The spectral filter couples every pair, so every node is a neighbour.
    for (std::size_t w = 0; w < n; ++w) {
      const Matrix lt = spectral_pair_matrix(layer, v, w);
      for (std::size_t j = 0; j < layer.d_out; ++j) {
        for (std::size_t i = 0; i < layer.d_in; ++i) {
          m[j] += lt(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) *
                  x(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(i));
        }
      }
    }
    for (std::size_t j = 0; j < layer.d_out; ++j) {
      out(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(j)) =
          act1(m[j], layer.activation);
    }
  }
  return out;
}

Matrix with_self_loops(const Matrix& a) {
  require_symmetric(a, "adjacency");
  return a + Matrix::Identity(a.rows(), a.cols());
}

Matrix gcn_coefficients(const Matrix& a) {
  const Matrix at = with_self_loops(a);
  const Eigen::Index n = at.rows();
  Vector deg = at.rowwise().sum();
  Matrix c(n, n);
  for (Eigen::Index v = 0; v < n; ++v) {
    for (Eigen::Index w = 0; w < n; ++w) c(v, w) = at(v, w) / std::sqrt(deg(v) * deg(w));
  }
  return c;
}

Matrix gcn_dense(const Matrix& h, const GcnLayer& layer) {
  const Matrix at = with_self_loops(layer.adjacency);
  if (h.rows() != at.rows() || h.cols() != layer.weight.rows()) {
    throw DimensionError("gcn input must be N x D with W of shape D x D'");
  }
  const Vector d_inv_sqrt = at.rowwise().sum().cwiseSqrt().cwiseInverse();
  const Matrix norm = d_inv_sqrt.asDiagonal() * at * d_inv_sqrt.asDiagonal();
  return activate(norm * h * layer.weight, layer.activation);
}

Matrix gcn_as_mpnn(const Matrix& h, const GcnLayer& layer) {
  const Matrix c = gcn_coefficients(layer.adjacency);
  const Eigen::Index n = c.rows();
  if (h.rows() != n || h.cols() != layer.weight.rows()) {
    throw DimensionError("gcn input must be N x D with W of shape D x D'");
  }
  const Eigen::Index d_in = h.cols();
  const Eigen::Index d_out = layer.weight.cols();
  Matrix out(n, d_out);
  std::vector<double> m(static_cast<std::size_t>(d_in));
  for (Eigen::Index v = 0; v < n; ++v) {
    std::fill(m.begin(), m.end(), 0.0);
    for (Eigen::Index w = 0; w < n; ++w) {
      if (v != w && layer.adjacency(v, w) == 0.0) continue;
      for (Eigen::Index i = 0; i < d_in; ++i) m[static_cast<std::size_t>(i)] += c(v, w) * h(w, i);
    }
    for (Eigen::Index j = 0; j < d_out; ++j) {
      double acc = 0.0;
      for (Eigen::Index i = 0; i < d_in; ++i) {
        acc += layer.weight(i, j) * m[static_cast<std::size_t>(i)];
      }
      out(v, j) = act1(acc, layer.activation);
    }
  }
  return out;
}

Matrix random_adjacency(Rng& rng, std::size_t n, double p) {
  const auto nn = static_cast<Eigen::Index>(n);
  Matrix a = Matrix::Zero(nn, nn);
  for (Eigen::Index i = 0; i < nn; ++i) {
    for (Eigen::Index j = i + 1; j < nn; ++j) {
      if (rng.bernoulli(p)) a(i, j) = a(j, i) = 1.0;
    }
  }
  return a;
}

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-1.0, 1.0);
  }
  return m;
}

EquivalenceReport check_equivalence(std::uint64_t seed, std::size_t graphs,
                                    std::size_t max_nodes, std::size_t max_dim) {
  Rng rng(seed);
  EquivalenceReport report;
  for (std::size_t g = 0; g < graphs; ++g) {
    const std::size_t n = 1 + rng.index(max_nodes);
    const std::size_t d1 = 1 + rng.index(max_dim);
    const std::size_t d2 = 1 + rng.index(max_dim);
    const Activation act = rng.bernoulli(0.5) ? Activation::kRelu : Activation::kIdentity;
    const Matrix a = random_adjacency(rng, n, 0.5);

    std::vector<Vector> filters;
    for (std::size_t f = 0; f < d1 * d2; ++f) {
      filters.push_back(random_matrix(rng, n, 1).col(0));
    }
    const SpectralLayer layer = SpectralLayer::make(a, d1, d2, std::move(filters), act);
    const Matrix x = random_matrix(rng, n, d1);
    report.spectral_max_dev =
        std::max(report.spectral_max_dev, (spectral_layer_dense(x, layer) -
                                           spectral_as_mpnn(x, layer))
                                              .cwiseAbs()
                                              .maxCoeff());

    const GcnLayer gcn{a, random_matrix(rng, d1, d2), act};
    report.gcn_max_dev = std::max(
        report.gcn_max_dev, (gcn_dense(x, gcn) - gcn_as_mpnn(x, gcn)).cwiseAbs().maxCoeff());
    ++report.graphs;
  }
  return report;
}

}  // namespace mpnn::spectral
