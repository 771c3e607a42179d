#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "secc/errors.hpp"
#include "secc/eval.hpp"
#include "secc/random.hpp"

#include "helpers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace secc;
using testutil::close;

namespace {

ClassPartition two_known() {
    ClassPartition p;
    p.known = {0, 1};
    p.unknown_target = {2, 3};
    p.n_total_classes = 3;
    return p;
}

// A model whose classifier is rigged to produce a chosen distribution is
// overkill for metric tests; metrics operate on prediction vectors directly.

ModelState reject_model(int n_known) {
    BackboneSpec spec;
    spec.input_dim = 2;
    spec.hidden_widths = {8, 8};
    spec.H = 2;
    spec.D0 = 2;
    spec.M = 4;
    spec.D1 = 3;
    spec.N = n_known;
    spec.K = 2;
    spec.disc_hidden = 4;
    ModelState model;
    model.spec = spec;
    model.student = init_student(spec, 77);
    model.teacher = make_teacher(model.student);
    return model;
}

} // namespace

TEST_CASE("office metrics: perfect, hand count, all-unknown edge") {
    const ClassPartition part = two_known();
    const int U = part.unknown_eval_id();

    OfficeMetrics perfect = office_metrics({0, 1, U}, {0, 1, U}, part);
    CHECK(perfect.os == 1.0);
    CHECK(perfect.os_star == 1.0);

    // labels [k1,k1,U,U], preds [k1,k2,U,k1] -> OS 0.5, OS* 0.5
    OfficeMetrics hand = office_metrics({0, 1, U, 0}, {0, 0, U, U}, part);
    CHECK(close(hand.os, 0.5, 1e-12));
    CHECK(close(hand.os_star, 0.5, 1e-12));

    OfficeMetrics edge = office_metrics({U, U}, {U, U}, part);
    CHECK(edge.os == 1.0);
    CHECK_FALSE(edge.os_star_defined);
    CHECK(std::isnan(edge.os_star));

    CHECK_THROWS_AS(office_metrics({}, {}, part), ValidationError);
}

TEST_CASE("visda metrics: perfect, equal-count hand case, macro vs micro gap") {
    const ClassPartition part = two_known();
    const int U = part.unknown_eval_id();

    VisdaMetrics perfect = visda_metrics({0, 1, U}, {0, 1, U}, part);
    CHECK(perfect.knwn == 1.0);
    CHECK(perfect.mean == 1.0);
    CHECK(perfect.overall == 1.0);

    // Class 0 accuracy 1.0, class 1 accuracy 0.0 (equal counts), unknown 1.0:
    // Knwn 0.5, Mean 2/3, Overall 2/3.
    std::vector<int> truths{0, 0, 1, 1, U, U};
    std::vector<int> preds{0, 0, 0, 0, U, U};
    VisdaMetrics hand = visda_metrics(preds, truths, part);
    CHECK(close(hand.knwn, 0.5, 1e-12));
    CHECK(close(hand.mean, 2.0 / 3.0, 1e-12));
    CHECK(close(hand.overall, 2.0 / 3.0, 1e-12));

    // Imbalanced known classes: accuracies 1.0 (10 samples) and 0.0 (90):
    // Knwn 0.5 but Overall 0.1.
    std::vector<int> t2, p2;
    for (int i = 0; i < 10; ++i) {
        t2.push_back(0);
        p2.push_back(0);
    }
    for (int i = 0; i < 90; ++i) {
        t2.push_back(1);
        p2.push_back(0);
    }
    VisdaMetrics imb = visda_metrics(p2, t2, part);
    CHECK(close(imb.knwn, 0.5, 1e-12));
    CHECK(close(imb.overall, 0.1, 1e-12));
    CHECK(imb.skipped_classes == std::vector<int>{U});
}

TEST_CASE("confusion matrix: perfect, single sample, row-sum recount fuzz") {
    Matrix perfect = confusion({0, 0, 1, 2}, {0, 0, 1, 2}, 3);
    CHECK(perfect.at(0, 0) == 2.0);
    CHECK(perfect.at(1, 1) == 1.0);
    CHECK(perfect.at(2, 2) == 1.0);
    CHECK(perfect.at(0, 1) == 0.0);

    Matrix single = confusion({1}, {0}, 2);
    CHECK(single.at(0, 1) == 1.0);
    CHECK(single.at(0, 0) + single.at(1, 0) + single.at(1, 1) == 0.0);

    RandomStream rng(5);
    for (int fuzz = 0; fuzz < 50; ++fuzz) {
        const int n_cls = 2 + rng.uniform_int(4);
        const int n = 1 + rng.uniform_int(60);
        std::vector<int> truths(static_cast<size_t>(n)), preds(static_cast<size_t>(n));
        std::vector<int> hist(static_cast<size_t>(n_cls), 0);
        for (int i = 0; i < n; ++i) {
            truths[i] = rng.uniform_int(n_cls);
            preds[i] = rng.uniform_int(n_cls);
            hist[truths[i]]++;
        }
        const Matrix m = confusion(preds, truths, n_cls);
        for (int r = 0; r < n_cls; ++r) {
            double row_sum = 0.0;
            for (int c = 0; c < n_cls; ++c) row_sum += m.at(r, c);
            CHECK(row_sum == static_cast<double>(hist[r]));
        }
    }
    CHECK_THROWS_AS(confusion({5}, {0}, 2), ValidationError);
}

TEST_CASE("full report ties overall to the confusion trace and is order invariant") {
    const ClassPartition part = two_known();
    const int U = part.unknown_eval_id();
    RandomStream rng(8);
    std::vector<int> truths, preds;
    for (int i = 0; i < 80; ++i) {
        truths.push_back(rng.uniform_int(3) == 2 ? U : rng.uniform_int(2));
        preds.push_back(rng.uniform_int(3));
    }
    const MetricsReport r = full_report(preds, truths, part);
    double trace = 0.0, total = 0.0;
    for (int i = 0; i <= U; ++i) {
        for (int j = 0; j <= U; ++j) total += r.confusion.at(i, j);
        trace += r.confusion.at(i, i);
    }
    CHECK(close(r.overall, trace / total, 1e-12));
    CHECK(r.os >= 0.0);
    CHECK(r.os <= 1.0);
    CHECK(r.mean >= 0.0);
    CHECK(r.mean <= 1.0);

    // Permuting the sample order leaves every metric unchanged.
    std::vector<size_t> order(truths.size());
    std::iota(order.begin(), order.end(), 0);
    RandomStream shuffle_rng(13);
    for (size_t i = order.size() - 1; i > 0; --i) {
        std::swap(order[i], order[shuffle_rng.uniform_int(static_cast<int>(i) + 1)]);
    }
    std::vector<int> t2, p2;
    for (size_t i : order) {
        t2.push_back(truths[i]);
        p2.push_back(preds[i]);
    }
    const MetricsReport r2 = full_report(p2, t2, part);
    CHECK(r2.os == r.os);
    CHECK(r2.os_star == r.os_star);
    CHECK(r2.knwn == r.knwn);
    CHECK(r2.mean == r.mean);
    CHECK(r2.overall == r.overall);
}

TEST_CASE("predict: rejection thresholds and mode/head mismatches") {
    ClassPartition part;
    part.known = {0, 1};
    part.unknown_target = {2};
    part.n_total_classes = 3;
    const ModelState model = reject_model(2);
    const int U = part.unknown_eval_id();

    RandomStream rng(3);
    std::vector<Vec> probes;
    for (int i = 0; i < 40; ++i) probes.push_back({rng.normal(), rng.normal()});

    // Threshold 0 never rejects and matches the closed argmax.
    for (const Vec& x : probes) {
        const int open0 = predict(model, x, PredictMode::OpenReject, 0.0, part);
        const int closed = predict(model, x, PredictMode::Closed, 0.0, part);
        CHECK(open0 == closed);
        CHECK(open0 < U);
    }

    // Rejections grow monotonically with the threshold.
    int prev_rejections = -1;
    for (double thr : {0.0, 0.3, 0.5, 0.7, 0.9, 1.01}) {
        int rejections = 0;
        for (const Vec& x : probes) {
            if (predict(model, x, PredictMode::OpenReject, thr, part) == U) ++rejections;
        }
        CHECK(rejections >= prev_rejections);
        prev_rejections = rejections;
    }
    CHECK(prev_rejections == static_cast<int>(probes.size())); // threshold > 1 rejects all

    // This head has n_known outputs: OPEN_NCLASS requires n_known + 1.
    CHECK_THROWS_AS(predict(model, probes[0], PredictMode::OpenNClass, 0.5, part), ValidationError);
    const ModelState open_model = reject_model(3);
    CHECK_THROWS_AS(predict(open_model, probes[0], PredictMode::OpenReject, 0.5, part),
                    ValidationError);
}

TEST_CASE("predict hand cases via a rigged classifier") {
    // Zero backbone output except bias lets the classifier bias dictate p.
    ModelState model = reject_model(2);
    for (Affine& layer : model.student.shared.hidden) {
        layer.w.fill(0.0);
        std::fill(layer.b.begin(), layer.b.end(), 0.0);
    }
    model.student.shared.pool_proj.w.fill(0.0);
    std::fill(model.student.shared.pool_proj.b.begin(), model.student.shared.pool_proj.b.end(), 0.0);
    model.student.shared.classifier.w.fill(0.0);
    ClassPartition part;
    part.known = {0, 1};
    part.unknown_target = {2};
    part.n_total_classes = 3;

    // p = softmax(b): choose b for p = [0.6, 0.4].
    model.student.shared.classifier.b = {std::log(0.6), std::log(0.4)};
    CHECK(predict(model, {0.0, 0.0}, PredictMode::OpenReject, 0.5, part) == 0);

    // p = [0.45, 0.55] with threshold 0.6 -> unknown.
    model.student.shared.classifier.b = {std::log(0.45), std::log(0.55)};
    CHECK(predict(model, {0.0, 0.0}, PredictMode::OpenReject, 0.6, part) ==
          part.unknown_eval_id());
}

TEST_CASE("project_2d: axis-aligned data, duplicates, rank-2 reconstruction") {
    // Exactly axis-aligned 2-D data (zero xy covariance) with var(x) > var(y):
    // the projection reproduces the centered data.
    std::vector<Vec> data{{0.0, 0.0}, {4.0, 1.0}, {8.0, 1.0}, {12.0, 0.0}};
    const auto proj = project_2d(data);
    Vec mean{6.0, 0.5};
    for (size_t i = 0; i < data.size(); ++i) {
        CHECK(close(proj[i][0], data[i][0] - mean[0], 1e-9));
        CHECK(close(proj[i][1], data[i][1] - mean[1], 1e-9));
    }

    // Duplicated dataset gives pairwise identical projections.
    std::vector<Vec> doubled = data;
    doubled.insert(doubled.end(), data.begin(), data.end());
    const auto proj2 = project_2d(doubled);
    for (size_t i = 0; i < data.size(); ++i) {
        CHECK(close(proj2[i][0], proj2[i + data.size()][0], 1e-9));
        CHECK(close(proj2[i][1], proj2[i + data.size()][1], 1e-9));
    }

    // Random rank-2 data in 6 dimensions: the projection preserves all
    // variance. Oracle: compare against the exact reconstruction residual.
    RandomStream rng(21);
    Vec b1(6), b2(6);
    for (double& v : b1) v = rng.normal();
    for (double& v : b2) v = rng.normal();
    std::vector<Vec> rank2;
    for (int i = 0; i < 40; ++i) {
        const double a = rng.normal(), b = rng.normal();
        Vec x(6, 0.0);
        for (int j = 0; j < 6; ++j) x[j] = a * b1[j] + b * b2[j];
        rank2.push_back(std::move(x));
    }
    const auto p2 = project_2d(rank2);
    double total_var = 0.0;
    Vec mean6(6, 0.0);
    for (const Vec& x : rank2) axpy(1.0, x, mean6);
    for (double& v : mean6) v /= rank2.size();
    for (const Vec& x : rank2) {
        for (int j = 0; j < 6; ++j) total_var += (x[j] - mean6[j]) * (x[j] - mean6[j]);
    }
    double proj_var = 0.0;
    for (const auto& q : p2) proj_var += q[0] * q[0] + q[1] * q[1];
    CHECK(close(proj_var / total_var, 1.0, 1e-9));

    // Rank-0 input: all projections are zero.
    std::vector<Vec> constant(5, Vec{3.0, 3.0, 3.0});
    for (const auto& q : project_2d(constant)) {
        CHECK(q[0] == 0.0);
        CHECK(q[1] == 0.0);
    }

    CHECK_THROWS_AS(project_2d({Vec{1.0, 2.0}}), ValidationError);
}

TEST_CASE("closed-set target: OS, OS* and Overall coincide") {
    ClassPartition part;
    part.known = {0, 1, 2};
    part.n_total_classes = 4; // unknown slot exists but is unpopulated
    RandomStream rng(17);
    std::vector<int> truths, preds;
    for (int i = 0; i < 60; ++i) {
        truths.push_back(rng.uniform_int(3));
        preds.push_back(rng.uniform_int(3));
    }
    const MetricsReport r = full_report(preds, truths, part);
    CHECK(r.os == r.os_star);
    CHECK(r.os == r.overall);
}

TEST_CASE("metrics csv round-trips") {
    const ClassPartition part = two_known();
    const int U = part.unknown_eval_id();
    const MetricsReport r = full_report({0, 1, U, 0, 1}, {0, 1, U, U, 0}, part);
    const std::string text = metrics_to_csv(r);
    const MetricsReport back = metrics_from_csv(text);
    CHECK(back.os == r.os);
    CHECK(back.os_star == r.os_star);
    CHECK(back.knwn == r.knwn);
    CHECK(back.mean == r.mean);
    CHECK(back.overall == r.overall);
    CHECK(back.os_macro == r.os_macro);
    CHECK(back.per_class == r.per_class);
    CHECK(back.confusion.data == r.confusion.data);
}
