#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "secc/errors.hpp"
#include "secc/losses.hpp"
#include "secc/random.hpp"

#include "helpers.hpp"

#include <cmath>

using namespace secc;
using testutil::close;
using testutil::random_simplex;

TEST_CASE("cross entropy: one-hot, uniform, hand value") {
    CHECK(close(cross_entropy({0.0, 1.0, 0.0}, 1), 0.0, 1e-12));
    CHECK(close(cross_entropy({0.25, 0.25, 0.25, 0.25}, 2), std::log(4.0), 1e-12));
    CHECK(close(cross_entropy({0.7, 0.3}, 1), 1.2039728043259361, 1e-12));
    CHECK_THROWS_AS(cross_entropy({0.5, 0.5}, 2), ValidationError);
    CHECK_THROWS_AS(cross_entropy({0.5, 0.5}, -1), ValidationError);
}

TEST_CASE("self-ensembling loss: zero at match, hand values") {
    CHECK(self_ensembling_loss({0.2, 0.8}, {0.2, 0.8}) == 0.0);
    CHECK(close(self_ensembling_loss({1.0, 0.0}, {0.0, 1.0}), 2.0, 1e-12));
    CHECK(close(self_ensembling_loss({0.6, 0.4}, {0.5, 0.5}), 0.02, 1e-12));
    CHECK_THROWS_AS(self_ensembling_loss({0.5, 0.5}, {1.0}), ValidationError);
}

TEST_CASE("conditional entropy: one-hot, uniform, hand value") {
    CHECK(conditional_entropy({1.0, 0.0, 0.0}) == 0.0);
    CHECK(close(conditional_entropy({0.25, 0.25, 0.25, 0.25}), std::log(4.0), 1e-12));
    CHECK(close(conditional_entropy({0.9, 0.1}), 0.32508297339144833, 1e-10));
}

TEST_CASE("KL cluster loss: zero at match, hand value, nonnegativity fuzz") {
    CHECK(kl_cluster_loss({0.3, 0.7}, {0.3, 0.7}) == 0.0);
    // 0.5 log(0.5/0.9) + 0.5 log(0.5/0.1) = 0.5 log(25/9)
    CHECK(close(kl_cluster_loss({0.5, 0.5}, {0.9, 0.1}), 0.51082562376599072, 1e-10));

    RandomStream rng(31);
    for (int i = 0; i < 1000; ++i) {
        const int n = 2 + rng.uniform_int(6);
        const Vec p = random_simplex(n, rng);
        const Vec q = random_simplex(n, rng);
        CHECK(kl_cluster_loss(p, q) >= -1e-12);
    }
}

TEST_CASE("inter-cluster constraint: match, scale invariance, hand enumeration") {
    Matrix centroid_cos(2, 2, 0.0);
    centroid_cos.at(0, 0) = centroid_cos.at(1, 1) = 1.0;
    const double c = 1.0 / std::sqrt(5.0); // cos((1,0), (1,2))
    centroid_cos.at(0, 1) = centroid_cos.at(1, 0) = c;

    Matrix w(2, 2, 0.0);
    w.at(0, 0) = 1.0;
    w.at(1, 0) = 1.0;
    w.at(1, 1) = 2.0;
    CHECK(close(inter_cluster_constraint(w, centroid_cos), 0.0, 1e-12));

    // Doubling the rows changes nothing.
    Matrix w2 = w;
    for (double& v : w2.data) v *= 2.0;
    CHECK(close(inter_cluster_constraint(w2, centroid_cos), 0.0, 1e-12));

    // Orthogonal rows vs parallel centroids: two ordered off-diagonal terms.
    Matrix ortho(2, 2, 0.0);
    ortho.at(0, 0) = 1.0;
    ortho.at(1, 1) = 1.0;
    Matrix parallel(2, 2, 1.0);
    CHECK(close(inter_cluster_constraint(ortho, parallel), 2.0, 1e-12));
}

TEST_CASE("MI global objective: zeros, saturation, hand softplus values") {
    CHECK(close(mi_global_objective({0.0}, {0.0}), -2.0 * std::log(2.0), 1e-12));
    CHECK(close(mi_global_objective({50.0}, {-50.0}), 0.0, 1e-12));
    // -softplus(-1) - softplus(1)
    CHECK(close(mi_global_objective({1.0}, {1.0}), -1.6265233750364456, 1e-10));
    CHECK_THROWS_AS(mi_global_objective({1.0}, {}), MiBatchTooSmallError);
}

TEST_CASE("MI local objective: zeros, H=1 equivalence, constant maps") {
    const Vec zeros4(4, 0.0);
    CHECK(close(mi_local_objective({zeros4}, {zeros4}), -2.0 * std::log(2.0), 1e-12));

    // H = 1 reduces to the global objective on the single scores.
    CHECK(close(mi_local_objective({{0.7}}, {{-0.3}}), mi_global_objective({0.7}, {-0.3}), 1e-15));

    const Vec ones4(4, 1.0);
    CHECK(close(mi_local_objective({ones4}, {ones4}), -1.6265233750364456, 1e-10));
    CHECK_THROWS_AS(mi_local_objective({ones4}, {}), MiBatchTooSmallError);
}

TEST_CASE("MI monotonicity: increasing in positives, decreasing in negatives") {
    RandomStream rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> pos{rng.normal(), rng.normal()};
        std::vector<double> neg{rng.normal(), rng.normal()};
        const double base = mi_global_objective(pos, neg);
        std::vector<double> pos_up = pos;
        pos_up[trial % 2] += 1e-4;
        CHECK(mi_global_objective(pos_up, neg) > base);
        std::vector<double> neg_up = neg;
        neg_up[trial % 2] += 1e-4;
        CHECK(mi_global_objective(pos, neg_up) < base);
    }
}

TEST_CASE("MIM combination and the alpha=5 hand value") {
    CHECK(mim_objective(-1.0, 0.5, 0.0) == 0.5);
    CHECK(close(mim_objective(3.0, 3.0, 1.0), 6.0, 1e-15));
    CHECK(close(mim_objective(-1.3863, -1.6265, 5.0), -8.5580, 1e-10));
}

TEST_CASE("total loss composition") {
    LossBreakdown parts;
    CHECK(total_loss(parts, 0.5) == 0.0);

    parts.l_cse = 0.4;
    parts.l_se = 0.35;
    parts.l_cde = 0.25; // l_sec = 1.0
    parts.l_kl = 0.3;
    parts.l_constraint = 0.2; // kl block = 0.5
    parts.l_mim = 2.0;
    CHECK(close(total_loss(parts, 0.01), 1.48, 1e-12));
    CHECK(close(parts.total,
                (parts.l_cse + parts.l_se + parts.l_cde) + (parts.l_kl + parts.l_constraint) -
                    0.01 * parts.l_mim,
                1e-10));

    // Disabling the cluster and MI blocks reduces the total to the
    // self-ensembling composite alone.
    LossBreakdown ablated;
    ablated.l_cse = 0.4;
    ablated.l_se = 0.35;
    ablated.l_cde = 0.25;
    CHECK(close(total_loss(ablated, 0.01), 1.0, 1e-12));
}

TEST_CASE("nonnegativity fuzz for entropy-like losses") {
    RandomStream rng(77);
    for (int i = 0; i < 1000; ++i) {
        const int n = 2 + rng.uniform_int(5);
        const Vec p = random_simplex(n, rng);
        const Vec q = random_simplex(n, rng);
        CHECK(cross_entropy(p, rng.uniform_int(n)) >= 0.0);
        CHECK(conditional_entropy(p) >= 0.0);
        CHECK(self_ensembling_loss(p, q) >= 0.0);
    }
    RandomStream wrng(78);
    for (int i = 0; i < 200; ++i) {
        Matrix w(3, 4);
        for (double& v : w.data) v = wrng.normal();
        Matrix cc(3, 3, 0.0);
        for (int a = 0; a < 3; ++a) cc.at(a, a) = 1.0;
        for (int a = 0; a < 3; ++a) {
            for (int b = a + 1; b < 3; ++b) {
                const double v = std::cos(wrng.uniform(0.0, 3.14159));
                cc.at(a, b) = cc.at(b, a) = v;
            }
        }
        CHECK(inter_cluster_constraint(w, cc) >= 0.0);
    }
}
