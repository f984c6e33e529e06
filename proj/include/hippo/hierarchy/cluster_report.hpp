#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hippo/hierarchy/tree.hpp"
#include "hippo/numcore/tensor.hpp"

namespace hippo {

struct ClusterRow {
  std::string id;
  double pc1 = 0.0;
  double pc2 = 0.0;
  std::string label;
};

struct ClusterReport {
  std::vector<ClusterRow> rows;
  std::optional<double> silhouette;  // nullopt when undefined
};

// Mean silhouette coefficient with Euclidean distances. Singleton clusters
// score 0. Undefined with fewer than two labels, with every sample in its own
// cluster, or when all embeddings coincide.
inline std::optional<double> silhouette_score(const Tensor& x, const std::vector<std::string>& labels) {
  const std::size_t n = x.rows(), d = x.cols();
  if (labels.size() != n) throw ShapeError("silhouette: one label per row is required");
  std::map<std::string, std::size_t> cluster_of;
  for (const auto& l : labels) cluster_of.emplace(l, cluster_of.size());
  const std::size_t k = cluster_of.size();
  if (k < 2 || k == n) return std::nullopt;

  std::vector<double> dist(n * n, 0.0);
  double max_dist = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += (x[i * d + c] - x[j * d + c]) * (x[i * d + c] - x[j * d + c]);
      dist[i * n + j] = dist[j * n + i] = std::sqrt(s);
      max_dist = std::max(max_dist, dist[i * n + j]);
    }
  if (max_dist == 0.0) return std::nullopt;

  std::vector<std::size_t> cl(n), sizes(k, 0);
  for (std::size_t i = 0; i < n; ++i) ++sizes[cl[i] = cluster_of.at(labels[i])];
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (sizes[cl[i]] == 1) continue;
    std::vector<double> sum(k, 0.0);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) sum[cl[j]] += dist[i * n + j];
    const double a = sum[cl[i]] / double(sizes[cl[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c)
      if (c != cl[i]) b = std::min(b, sum[c] / double(sizes[c]));
    const double m = std::max(a, b);
    total += m > 0.0 ? (b - a) / m : 0.0;
  }
  return total / double(n);
}

// Projects rows onto the top two principal components. Each component's
// sign makes its largest-magnitude loading positive.
inline std::vector<std::pair<double, double>> pca_2d(const Tensor& x) {
  const std::size_t n = x.rows(), d = x.cols();
  if (n < 2) throw ValidationError("PCA needs at least two samples");
  Eigen::MatrixXd m(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) m(Eigen::Index(i), Eigen::Index(j)) = x[i * d + j];
  const Eigen::RowVectorXd mu = m.colwise().mean();
  m.rowwise() -= mu;
  const Eigen::MatrixXd cov = (m.transpose() * m) / double(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::Index dims = Eigen::Index(d);
  Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(dims, 2);
  for (Eigen::Index c = 0; c < std::min<Eigen::Index>(2, dims); ++c) {
    Eigen::VectorXd v = eig.eigenvectors().col(dims - 1 - c);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    basis.col(c) = v;
  }
  const Eigen::MatrixXd proj = m * basis;
  std::vector<std::pair<double, double>> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = {proj(Eigen::Index(i), 0), proj(Eigen::Index(i), 1)};
  return out;
}

// PCA coordinates plus the silhouette of the level-`level` labels, for
// plotting embedding structure outside this library.
inline ClusterReport embedding_cluster_report(const Tensor& embeddings, const std::vector<std::string>& ids,
                                              const HierarchyTree& tree, std::size_t level) {
  if (ids.size() != embeddings.rows()) throw ShapeError("cluster report: one id per embedding row is required");
  if (ids.size() < 2) throw ValidationError("cluster report needs at least two samples");
  std::vector<std::string> labels;
  for (const auto& id : ids) labels.push_back(tree.node_name(level, tree.ancestor(id, level)));
  const auto coords = pca_2d(embeddings);
  ClusterReport report;
  for (std::size_t i = 0; i < ids.size(); ++i)
    report.rows.push_back(ClusterRow{ids[i], coords[i].first, coords[i].second, labels[i]});
  report.silhouette = silhouette_score(embeddings, labels);
  return report;
}

inline std::string cluster_report_csv(const ClusterReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "id,pc1,pc2,label\n";
  for (const auto& r : report.rows) out << r.id << ',' << r.pc1 << ',' << r.pc2 << ',' << r.label << '\n';
  return out.str();
}

}  // namespace hippo
