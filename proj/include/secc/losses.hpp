#pragma once

#include "secc/linalg.hpp"

#include <vector>

namespace secc {

// Probabilities are clamped here before any logarithm.
constexpr double kProbFloor = 1e-12;

// Supervised cross entropy -log p_y.
double cross_entropy(const Vec& p, int y);
Vec cross_entropy_grad_p(const Vec& p, int y);

// Squared Euclidean distance between the student and teacher class
// distributions.
double self_ensembling_loss(const Vec& p_s, const Vec& p_t);
Vec self_ensembling_grad_ps(const Vec& p_s, const Vec& p_t);

// Shannon entropy of a class distribution, with 0 log 0 = 0.
double conditional_entropy(const Vec& p);
Vec conditional_entropy_grad(const Vec& p);

// KL(p_tilde || p); p_tilde is the fixed supervision side.
double kl_cluster_loss(const Vec& p_tilde, const Vec& p);
Vec kl_cluster_grad_p(const Vec& p_tilde, const Vec& p);
Vec kl_cluster_grad_p_tilde(const Vec& p_tilde, const Vec& p);

// Sum over all ordered row pairs of |cos(W_k, W_k') - centroid_cos(k, k')|.
double inter_cluster_constraint(const Matrix& w, const Matrix& centroid_cos);
Matrix inter_cluster_constraint_grad_w(const Matrix& w, const Matrix& centroid_cos);

// Jensen-Shannon MI surrogates over discriminator scores: mean of
// -softplus(-v) over positives minus mean of softplus(v) over negatives.
double mi_global_objective(const std::vector<double>& pos_scores,
                           const std::vector<double>& neg_scores);
void mi_global_grads(const std::vector<double>& pos_scores, const std::vector<double>& neg_scores,
                     Vec& d_pos, Vec& d_neg);

// Local form: each score is replaced by the spatial mean of the per-location
// softplus expression over the H*H score map.
double mi_local_objective(const std::vector<Vec>& pos_maps, const std::vector<Vec>& neg_maps);
void mi_local_grads(const std::vector<Vec>& pos_maps, const std::vector<Vec>& neg_maps,
                    std::vector<Vec>& d_pos, std::vector<Vec>& d_neg);

double mim_objective(double l_g, double l_l, double alpha);

double softplus(double x);
double sigmoid(double x);

// Every term of the training objective plus their composition.
struct LossBreakdown {
    double l_cse = 0.0;
    double l_se = 0.0;
    double l_cde = 0.0;
    double l_kl = 0.0;
    double l_constraint = 0.0;
    double l_g_jsd = 0.0;
    double l_l_jsd = 0.0;
    double l_mim = 0.0;
    double total = 0.0;
};

// total = (l_cse + l_se + l_cde) + (l_kl + l_constraint) - beta * l_mim.
// Stores the result in parts.total and returns it.
double total_loss(LossBreakdown& parts, double beta);

} // namespace secc
