#pragma once

#include "secc/linalg.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace secc {

// Features used for clustering, one row per target sample.
struct FeatureTable {
    std::vector<Vec> rows;
    std::vector<int> ids; // parallel to rows, unique

    int size() const { return static_cast<int>(rows.size()); }
    int dim() const { return rows.empty() ? 0 : static_cast<int>(rows[0].size()); }
    void validate() const;
};

// Category-agnostic clusters over target features. Centroids are exact
// member means; rho is the softmax temperature shared with the clustering
// branch.
struct ClusterModel {
    std::vector<Vec> centroids;
    std::map<int, int> assignment; // sample id -> cluster index
    int K = 0;
    double rho = 10.0;
    double inertia = 0.0;
    std::vector<double> inertia_trace; // one entry per Lloyd iteration

    int dim() const { return centroids.empty() ? 0 : static_cast<int>(centroids[0].size()); }
    void validate() const;
};

constexpr int kKmeansDefaultMaxIter = 200;
constexpr double kKmeansDefaultTol = 1e-10;
constexpr double kDefaultRho = 10.0;

// Lloyd's algorithm with k-means++ seeding. Empty clusters are repaired by
// donating the point currently farthest from its centroid.
ClusterModel kmeans(const FeatureTable& table, int K, std::uint64_t seed,
                    int max_iter = kKmeansDefaultMaxIter, double tol = kKmeansDefaultTol,
                    double rho = kDefaultRho);

// Softmax over rho-scaled cosine similarities to each centroid.
Vec inherent_distribution(const Vec& x, const ClusterModel& model);

// K x K matrix of pairwise centroid cosines; unit diagonal.
Matrix centroid_cosine_matrix(const ClusterModel& model);

// Gap statistic over uniform box references; returns the smallest K in
// [k_min, k_max] with Gap(K) >= Gap(K+1) - s_{K+1}, else k_max.
int select_k_gap(const FeatureTable& table, int k_min, int k_max, int n_refs, std::uint64_t seed);

// Re-clusters new features with the model's K and rho.
ClusterModel refresh_clusters(const ClusterModel& model, const FeatureTable& new_table,
                              std::uint64_t seed, int max_iter = kKmeansDefaultMaxIter,
                              double tol = kKmeansDefaultTol);

// Text round-trip: `K d_feat rho`, K centroid lines, then `id k` pairs.
void save_cluster_model(const ClusterModel& model, const std::string& path);
ClusterModel load_cluster_model(const std::string& path);

} // namespace secc
