#include "secc/clustering.hpp"

#include "secc/errors.hpp"
#include "secc/random.hpp"
#include "secc/textio.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

namespace secc {

namespace {

double sq_dist(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

// k-means++: first centroid uniform, then D^2-weighted picks.
std::vector<Vec> kmeanspp_seed(const FeatureTable& table, int K, RandomStream& rng) {
    const int n = table.size();
    std::vector<Vec> centroids;
    centroids.push_back(table.rows[rng.uniform_int(n)]);

    std::vector<double> d2(static_cast<size_t>(n));
    while (static_cast<int>(centroids.size()) < K) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const Vec& c : centroids) best = std::min(best, sq_dist(table.rows[i], c));
            d2[i] = best;
            total += best;
        }
        int pick;
        if (total <= 0.0) {
            pick = rng.uniform_int(n); // all points coincide with chosen centroids
        } else {
            const double u = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (int i = 0; i < n; ++i) {
                acc += d2[i];
                if (u < acc) {
                    pick = i;
                    break;
                }
            }
        }
        centroids.push_back(table.rows[pick]);
    }
    return centroids;
}

} // namespace

void FeatureTable::validate() const {
    if (rows.size() != ids.size()) throw ValidationError("FeatureTable: rows and ids must be parallel");
    std::set<int> seen;
    const int d = dim();
    for (size_t i = 0; i < rows.size(); ++i) {
        if (static_cast<int>(rows[i].size()) != d) throw ValidationError("FeatureTable: ragged rows");
        if (!all_finite(rows[i])) throw ValidationError("FeatureTable: non-finite feature");
        if (!seen.insert(ids[i]).second) throw ValidationError("FeatureTable: duplicate sample id");
    }
}

void ClusterModel::validate() const {
    if (K != static_cast<int>(centroids.size())) throw ValidationError("ClusterModel: K mismatch");
    if (!(rho > 0.0)) throw ValidationError("ClusterModel: rho must be positive");
    for (const Vec& c : centroids) {
        if (norm(c) == 0.0) throw ValidationError("ClusterModel: zero centroid cannot feed cosine similarity");
    }
    for (const auto& [id, k] : assignment) {
        (void)id;
        if (k < 0 || k >= K) throw ValidationError("ClusterModel: assignment index out of range");
    }
}

ClusterModel kmeans(const FeatureTable& table, int K, std::uint64_t seed, int max_iter, double tol,
                    double rho) {
    table.validate();
    const int n = table.size();
    if (K < 1) throw ValidationError("kmeans: K must be >= 1");
    if (K > n) throw ValidationError("kmeans: K exceeds the number of rows");
    if (max_iter < 1) throw ValidationError("kmeans: max_iter must be >= 1");
    if (!(rho > 0.0)) throw ValidationError("kmeans: rho must be positive");

    RandomStream rng(RandomStream::mix(seed, 0xC1));
    std::vector<Vec> centroids = kmeanspp_seed(table, K, rng);
    std::vector<int> assign(static_cast<size_t>(n), 0);

    ClusterModel model;
    model.K = K;
    model.rho = rho;

    for (int iter = 0; iter < max_iter; ++iter) {
        // Assignment: nearest centroid, ties to the lowest index.
        for (int i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            int best_k = 0;
            for (int k = 0; k < K; ++k) {
                const double d = sq_dist(table.rows[i], centroids[k]);
                if (d < best) {
                    best = d;
                    best_k = k;
                }
            }
            assign[i] = best_k;
        }

        // Repair empty clusters with the globally farthest point.
        std::vector<int> counts(static_cast<size_t>(K), 0);
        for (int i = 0; i < n; ++i) counts[assign[i]]++;
        std::vector<bool> moved(static_cast<size_t>(n), false);
        for (int k = 0; k < K; ++k) {
            if (counts[k] > 0) continue;
            double worst = -1.0;
            int worst_i = -1;
            for (int i = 0; i < n; ++i) {
                if (moved[i] || counts[assign[i]] <= 1) continue;
                const double d = sq_dist(table.rows[i], centroids[assign[i]]);
                if (d > worst) {
                    worst = d;
                    worst_i = i;
                }
            }
            if (worst_i < 0) throw InternalError("kmeans: cannot repair empty cluster");
            counts[assign[worst_i]]--;
            assign[worst_i] = k;
            counts[k] = 1;
            moved[worst_i] = true;
            centroids[k] = table.rows[worst_i];
        }

        // Update step: centroids become exact member means.
        std::vector<Vec> next(static_cast<size_t>(K), Vec(static_cast<size_t>(table.dim()), 0.0));
        std::fill(counts.begin(), counts.end(), 0);
        for (int i = 0; i < n; ++i) {
            axpy(1.0, table.rows[i], next[assign[i]]);
            counts[assign[i]]++;
        }
        double shift = 0.0;
        for (int k = 0; k < K; ++k) {
            for (double& v : next[k]) v /= counts[k];
            shift = std::max(shift, std::sqrt(sq_dist(next[k], centroids[k])));
            centroids[k] = next[k];
        }

        double inertia = 0.0;
        for (int i = 0; i < n; ++i) inertia += sq_dist(table.rows[i], centroids[assign[i]]);
        model.inertia_trace.push_back(inertia);
        model.inertia = inertia;

        if (shift <= tol) break;
    }

    for (const Vec& c : centroids) {
        if (norm(c) == 0.0) {
            throw InternalError("kmeans: zero-norm centroid after convergence cannot feed cosine similarity");
        }
    }
    model.centroids = std::move(centroids);
    for (int i = 0; i < n; ++i) model.assignment[table.ids[i]] = assign[i];
    model.validate();
    return model;
}

Vec inherent_distribution(const Vec& x, const ClusterModel& model) {
    if (norm(x) == 0.0) throw ValidationError("inherent_distribution: zero feature vector");
    if (static_cast<int>(x.size()) != model.dim()) {
        throw ValidationError("inherent_distribution: dimension mismatch");
    }
    Vec scores(static_cast<size_t>(model.K));
    for (int k = 0; k < model.K; ++k) scores[k] = model.rho * cosine(x, model.centroids[k]);
    return softmax(scores);
}

Matrix centroid_cosine_matrix(const ClusterModel& model) {
    const int K = model.K;
    Matrix m(K, K, 0.0);
    for (int k = 0; k < K; ++k) {
        m.at(k, k) = 1.0;
        for (int j = k + 1; j < K; ++j) {
            const double c = cosine(model.centroids[k], model.centroids[j]);
            m.at(k, j) = c;
            m.at(j, k) = c;
        }
    }
    return m;
}

int select_k_gap(const FeatureTable& table, int k_min, int k_max, int n_refs, std::uint64_t seed) {
    table.validate();
    if (k_min < 1 || k_min > k_max || k_max > table.size()) {
        throw ValidationError("select_k_gap: need 1 <= k_min <= k_max <= #rows");
    }
    if (n_refs < 1) throw ValidationError("select_k_gap: n_refs must be >= 1");
    if (k_min == k_max) return k_min;

    const int d = table.dim();
    Vec lo(static_cast<size_t>(d), std::numeric_limits<double>::infinity());
    Vec hi(static_cast<size_t>(d), -std::numeric_limits<double>::infinity());
    for (const Vec& row : table.rows) {
        for (int j = 0; j < d; ++j) {
            lo[j] = std::min(lo[j], row[j]);
            hi[j] = std::max(hi[j], row[j]);
        }
    }

    auto log_inertia = [](double w) { return std::log(std::max(w, 1e-300)); };

    const int m = k_max - k_min + 1;
    Vec gap(static_cast<size_t>(m), 0.0);
    Vec s(static_cast<size_t>(m), 0.0);
    for (int k = k_min; k <= k_max; ++k) {
        const double log_wk = log_inertia(kmeans(table, k, RandomStream::mix(seed, k)).inertia);
        Vec log_ref(static_cast<size_t>(n_refs), 0.0);
        for (int b = 0; b < n_refs; ++b) {
            RandomStream rng(RandomStream::mix(RandomStream::mix(seed, 0xFE0F), RandomStream::mix(k, b)));
            FeatureTable ref;
            for (int i = 0; i < table.size(); ++i) {
                Vec row(static_cast<size_t>(d));
                for (int j = 0; j < d; ++j) row[j] = rng.uniform(lo[j], hi[j]);
                ref.rows.push_back(std::move(row));
                ref.ids.push_back(i);
            }
            log_ref[b] = log_inertia(kmeans(ref, k, RandomStream::mix(seed, RandomStream::mix(k, 1000 + b))).inertia);
        }
        double mean_ref = 0.0;
        for (double v : log_ref) mean_ref += v;
        mean_ref /= n_refs;
        double var = 0.0;
        for (double v : log_ref) var += (v - mean_ref) * (v - mean_ref);
        const double sd = std::sqrt(var / n_refs);
        const int idx = k - k_min;
        gap[idx] = mean_ref - log_wk;
        s[idx] = sd * std::sqrt(1.0 + 1.0 / n_refs);
    }

    for (int k = k_min; k < k_max; ++k) {
        const int idx = k - k_min;
        if (gap[idx] >= gap[idx + 1] - s[idx + 1]) return k;
    }
    return k_max;
}

ClusterModel refresh_clusters(const ClusterModel& model, const FeatureTable& new_table,
                              std::uint64_t seed, int max_iter, double tol) {
    if (new_table.size() == 0) throw ValidationError("refresh_clusters: empty feature table");
    return kmeans(new_table, model.K, seed, max_iter, tol, model.rho);
}

void save_cluster_model(const ClusterModel& model, const std::string& path) {
    std::ostringstream out;
    out << model.K << ' ' << model.dim() << ' ' << fmt17(model.rho) << '\n';
    for (const Vec& c : model.centroids) {
        for (size_t j = 0; j < c.size(); ++j) out << (j ? " " : "") << fmt17(c[j]);
        out << '\n';
    }
    for (const auto& [id, k] : model.assignment) out << id << ' ' << k << '\n';
    write_text_file(path, out.str());
}

ClusterModel load_cluster_model(const std::string& path) {
    std::istringstream in(read_text_file(path));
    ClusterModel model;
    int d = 0;
    if (!(in >> model.K >> d >> model.rho)) throw ValidationError("cluster model file: bad header");
    model.centroids.assign(static_cast<size_t>(model.K), Vec(static_cast<size_t>(d)));
    for (int k = 0; k < model.K; ++k) {
        for (int j = 0; j < d; ++j) {
            if (!(in >> model.centroids[k][j])) throw ValidationError("cluster model file: short centroid");
        }
    }
    int id = 0, k = 0;
    while (in >> id >> k) model.assignment[id] = k;
    model.validate();
    return model;
}

} // namespace secc
