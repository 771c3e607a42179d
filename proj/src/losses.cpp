#include "secc/losses.hpp"

#include "secc/errors.hpp"

#include <cmath>

namespace secc {

namespace {

// Loss inputs arrive from softmax layers or finite-difference probes, so the
// normalization check is loose on purpose.
void check_normalized(const Vec& p, const char* what) {
    double s = 0.0;
    for (double v : p) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError(std::string(what) + ": entries must be finite and nonnegative");
        s += v;
    }
    if (std::abs(s - 1.0) > 1e-3) throw ValidationError(std::string(what) + ": distribution does not sum to 1");
}

} // namespace

double softplus(double x) {
    // log(1 + e^x) without overflow for large |x|.
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

double sigmoid(double x) {
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double cross_entropy(const Vec& p, int y) {
    check_normalized(p, "cross_entropy");
    if (y < 0 || y >= static_cast<int>(p.size())) throw ValidationError("cross_entropy: class id out of range");
    return -std::log(std::max(p[y], kProbFloor));
}

Vec cross_entropy_grad_p(const Vec& p, int y) {
    if (y < 0 || y >= static_cast<int>(p.size())) throw ValidationError("cross_entropy: class id out of range");
    Vec g(p.size(), 0.0);
    g[y] = -1.0 / std::max(p[y], kProbFloor);
    return g;
}

double self_ensembling_loss(const Vec& p_s, const Vec& p_t) {
    if (p_s.size() != p_t.size()) throw ValidationError("self_ensembling_loss: length mismatch");
    double s = 0.0;
    for (size_t i = 0; i < p_s.size(); ++i) {
        const double d = p_s[i] - p_t[i];
        s += d * d;
    }
    return s;
}

Vec self_ensembling_grad_ps(const Vec& p_s, const Vec& p_t) {
    if (p_s.size() != p_t.size()) throw ValidationError("self_ensembling_loss: length mismatch");
    Vec g(p_s.size());
    for (size_t i = 0; i < p_s.size(); ++i) g[i] = 2.0 * (p_s[i] - p_t[i]);
    return g;
}

double conditional_entropy(const Vec& p) {
    check_normalized(p, "conditional_entropy");
    double h = 0.0;
    for (double v : p) {
        if (v > 0.0) h -= v * std::log(v);
    }
    return h;
}

Vec conditional_entropy_grad(const Vec& p) {
    Vec g(p.size());
    for (size_t i = 0; i < p.size(); ++i) g[i] = -(std::log(std::max(p[i], kProbFloor)) + 1.0);
    return g;
}

double kl_cluster_loss(const Vec& p_tilde, const Vec& p) {
    if (p_tilde.size() != p.size()) throw ValidationError("kl_cluster_loss: length mismatch");
    check_normalized(p_tilde, "kl_cluster_loss");
    check_normalized(p, "kl_cluster_loss");
    double kl = 0.0;
    for (size_t k = 0; k < p.size(); ++k) {
        if (p_tilde[k] > 0.0) kl += p_tilde[k] * std::log(p_tilde[k] / std::max(p[k], kProbFloor));
    }
    return kl;
}

Vec kl_cluster_grad_p(const Vec& p_tilde, const Vec& p) {
    Vec g(p.size());
    for (size_t k = 0; k < p.size(); ++k) g[k] = -p_tilde[k] / std::max(p[k], kProbFloor);
    return g;
}

Vec kl_cluster_grad_p_tilde(const Vec& p_tilde, const Vec& p) {
    Vec g(p.size());
    for (size_t k = 0; k < p.size(); ++k) {
        g[k] = std::log(std::max(p_tilde[k], kProbFloor) / std::max(p[k], kProbFloor)) + 1.0;
    }
    return g;
}

double inter_cluster_constraint(const Matrix& w, const Matrix& centroid_cos) {
    const int K = w.rows;
    if (centroid_cos.rows != K || centroid_cos.cols != K) {
        throw ValidationError("inter_cluster_constraint: centroid matrix shape mismatch");
    }
    double total = 0.0;
    for (int k = 0; k < K; ++k) {
        for (int j = 0; j < K; ++j) {
            const double cw = (k == j) ? 1.0 : cosine(w.row_ptr(k), w.row_ptr(j), w.cols);
            total += std::abs(cw - centroid_cos.at(k, j));
        }
    }
    return total;
}

Matrix inter_cluster_constraint_grad_w(const Matrix& w, const Matrix& centroid_cos) {
    const int K = w.rows;
    const int M = w.cols;
    Matrix g(K, M, 0.0);
    std::vector<double> norms(static_cast<size_t>(K));
    for (int k = 0; k < K; ++k) {
        norms[k] = norm(w.row_ptr(k), M);
        if (norms[k] == 0.0) throw ValidationError("inter_cluster_constraint: zero W row");
    }
    // Ordered pairs (k, j), k != j; diagonal terms are identically zero.
    for (int k = 0; k < K; ++k) {
        for (int j = 0; j < K; ++j) {
            if (k == j) continue;
            const double c = cosine(w.row_ptr(k), w.row_ptr(j), M);
            const double diff = c - centroid_cos.at(k, j);
            if (diff == 0.0) continue;
            const double sgn = diff > 0.0 ? 1.0 : -1.0;
            const double* wk = w.row_ptr(k);
            const double* wj = w.row_ptr(j);
            double* gk = g.row_ptr(k);
            double* gj = g.row_ptr(j);
            for (int m = 0; m < M; ++m) {
                gk[m] += sgn * (wj[m] / (norms[k] * norms[j]) - c * wk[m] / (norms[k] * norms[k]));
                gj[m] += sgn * (wk[m] / (norms[k] * norms[j]) - c * wj[m] / (norms[j] * norms[j]));
            }
        }
    }
    return g;
}

double mi_global_objective(const std::vector<double>& pos_scores,
                           const std::vector<double>& neg_scores) {
    if (pos_scores.empty()) throw ValidationError("mi_global_objective: no positive scores");
    if (neg_scores.empty()) throw MiBatchTooSmallError();
    double pos = 0.0;
    for (double v : pos_scores) pos += -softplus(-v);
    double neg = 0.0;
    for (double v : neg_scores) neg += softplus(v);
    return pos / pos_scores.size() - neg / neg_scores.size();
}

void mi_global_grads(const std::vector<double>& pos_scores, const std::vector<double>& neg_scores,
                     Vec& d_pos, Vec& d_neg) {
    d_pos.assign(pos_scores.size(), 0.0);
    d_neg.assign(neg_scores.size(), 0.0);
    for (size_t i = 0; i < pos_scores.size(); ++i) d_pos[i] = sigmoid(-pos_scores[i]) / pos_scores.size();
    for (size_t i = 0; i < neg_scores.size(); ++i) d_neg[i] = -sigmoid(neg_scores[i]) / neg_scores.size();
}

double mi_local_objective(const std::vector<Vec>& pos_maps, const std::vector<Vec>& neg_maps) {
    if (pos_maps.empty()) throw ValidationError("mi_local_objective: no positive maps");
    if (neg_maps.empty()) throw MiBatchTooSmallError();
    const size_t cells = pos_maps[0].size();
    auto spatial_mean = [cells](const Vec& map, double sign) {
        if (map.size() != cells) throw ValidationError("mi_local_objective: map shape mismatch");
        double s = 0.0;
        for (double v : map) s += softplus(sign * v);
        return s / static_cast<double>(map.size());
    };
    double pos = 0.0;
    for (const Vec& m : pos_maps) pos += -spatial_mean(m, -1.0);
    double neg = 0.0;
    for (const Vec& m : neg_maps) neg += spatial_mean(m, 1.0);
    return pos / pos_maps.size() - neg / neg_maps.size();
}

void mi_local_grads(const std::vector<Vec>& pos_maps, const std::vector<Vec>& neg_maps,
                    std::vector<Vec>& d_pos, std::vector<Vec>& d_neg) {
    d_pos.assign(pos_maps.size(), Vec());
    d_neg.assign(neg_maps.size(), Vec());
    for (size_t i = 0; i < pos_maps.size(); ++i) {
        const Vec& m = pos_maps[i];
        Vec g(m.size());
        const double scale = 1.0 / (static_cast<double>(m.size()) * pos_maps.size());
        for (size_t c = 0; c < m.size(); ++c) g[c] = sigmoid(-m[c]) * scale;
        d_pos[i] = std::move(g);
    }
    for (size_t i = 0; i < neg_maps.size(); ++i) {
        const Vec& m = neg_maps[i];
        Vec g(m.size());
        const double scale = 1.0 / (static_cast<double>(m.size()) * neg_maps.size());
        for (size_t c = 0; c < m.size(); ++c) g[c] = -sigmoid(m[c]) * scale;
        d_neg[i] = std::move(g);
    }
}

double mim_objective(double l_g, double l_l, double alpha) { return alpha * l_g + l_l; }

double total_loss(LossBreakdown& parts, double beta) {
    parts.total = (parts.l_cse + parts.l_se + parts.l_cde) + (parts.l_kl + parts.l_constraint) -
                  beta * parts.l_mim;
    return parts.total;
}

} // namespace secc
