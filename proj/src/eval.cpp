#include "secc/eval.hpp"

#include "secc/errors.hpp"
#include "secc/textio.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace secc {

namespace {

int argmax_lowest(const Vec& p, int limit) {
    int best = 0;
    for (int i = 1; i < limit; ++i) {
        if (p[i] > p[best]) best = i;
    }
    return best;
}

// Jacobi eigendecomposition of a symmetric matrix. Returns eigenvalues and
// column eigenvectors; plenty at desk-scale dimensions.
void jacobi_eigen(Matrix a, Vec& values, Matrix& vectors) {
    const int n = a.rows;
    vectors = Matrix(n, n, 0.0);
    for (int i = 0; i < n; ++i) vectors.at(i, i) = 1.0;

    for (int sweep = 0; sweep < 200; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) off += a.at(p, q) * a.at(p, q);
        }
        if (off < 1e-24) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = a.at(p, q);
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int i = 0; i < n; ++i) {
                    const double aip = a.at(i, p), aiq = a.at(i, q);
                    a.at(i, p) = c * aip - s * aiq;
                    a.at(i, q) = s * aip + c * aiq;
                }
                for (int i = 0; i < n; ++i) {
                    const double api = a.at(p, i), aqi = a.at(q, i);
                    a.at(p, i) = c * api - s * aqi;
                    a.at(q, i) = s * api + c * aqi;
                }
                for (int i = 0; i < n; ++i) {
                    const double vip = vectors.at(i, p), viq = vectors.at(i, q);
                    vectors.at(i, p) = c * vip - s * viq;
                    vectors.at(i, q) = s * vip + c * viq;
                }
            }
        }
    }
    values.assign(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) values[i] = a.at(i, i);
}

} // namespace

Vec ModelState::standardize(const Vec& x) const {
    if (input_mean.empty()) return x;
    if (input_mean.size() != x.size() || input_scale.size() != x.size()) {
        throw ValidationError("ModelState: input transform dimension mismatch");
    }
    Vec out(x.size());
    for (size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - input_mean[i]) / input_scale[i];
    return out;
}

int predict(const ModelState& model, const Vec& features, PredictMode mode, double threshold,
            const ClassPartition& partition) {
    const int nk = partition.n_known();
    if (mode == PredictMode::OpenNClass && model.spec.N != nk + 1) {
        throw ValidationError("predict: OPEN_NCLASS needs the N-way head including the unknown class");
    }
    if (mode == PredictMode::OpenReject && model.spec.N != nk) {
        throw ValidationError("predict: OPEN_REJECT needs the (N-1)-way known-class head");
    }
    const Vec p = forward_shared(model.student.shared, model.spec, model.standardize(features)).p_cls;
    switch (mode) {
        case PredictMode::Closed:
        case PredictMode::OpenNClass:
            return argmax_lowest(p, model.spec.N);
        case PredictMode::OpenReject: {
            const int best = argmax_lowest(p, nk);
            return p[best] < threshold ? partition.unknown_eval_id() : best;
        }
    }
    throw InternalError("predict: unreachable");
}

std::vector<int> predict_all(const ModelState& model, const std::vector<Sample>& samples,
                             PredictMode mode, double threshold, const ClassPartition& partition) {
    std::vector<int> preds;
    preds.reserve(samples.size());
    for (const Sample& s : samples) preds.push_back(predict(model, s.features, mode, threshold, partition));
    return preds;
}

Matrix confusion(const std::vector<int>& preds, const std::vector<int>& truths, int n_classes) {
    if (preds.size() != truths.size()) throw ValidationError("confusion: length mismatch");
    Matrix m(n_classes, n_classes, 0.0);
    for (size_t i = 0; i < preds.size(); ++i) {
        if (truths[i] < 0 || truths[i] >= n_classes || preds[i] < 0 || preds[i] >= n_classes) {
            throw ValidationError("confusion: class id out of range");
        }
        m.at(truths[i], preds[i]) += 1.0;
    }
    return m;
}

OfficeMetrics office_metrics(const std::vector<int>& preds, const std::vector<int>& truths,
                             const ClassPartition& partition) {
    if (preds.size() != truths.size()) throw ValidationError("office_metrics: length mismatch");
    if (preds.empty()) throw ValidationError("office_metrics: empty target set");
    const int nk = partition.n_known();
    OfficeMetrics out;
    int correct = 0, known_total = 0, known_correct = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] == truths[i]) ++correct;
        if (truths[i] < nk) {
            ++known_total;
            if (preds[i] == truths[i]) ++known_correct;
        }
    }
    out.os = static_cast<double>(correct) / preds.size();
    if (known_total == 0) {
        out.os_star = std::numeric_limits<double>::quiet_NaN();
        out.os_star_defined = false;
    } else {
        out.os_star = static_cast<double>(known_correct) / known_total;
    }
    return out;
}

VisdaMetrics visda_metrics(const std::vector<int>& preds, const std::vector<int>& truths,
                           const ClassPartition& partition) {
    if (preds.size() != truths.size()) throw ValidationError("visda_metrics: length mismatch");
    if (preds.empty()) throw ValidationError("visda_metrics: empty target set");
    const int nk = partition.n_known();
    VisdaMetrics out;
    std::vector<int> count(static_cast<size_t>(nk) + 1, 0);
    std::vector<int> hit(static_cast<size_t>(nk) + 1, 0);
    int correct = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
        ++count[truths[i]];
        if (preds[i] == truths[i]) {
            ++hit[truths[i]];
            ++correct;
        }
    }
    double known_sum = 0.0, all_sum = 0.0;
    int known_n = 0, all_n = 0;
    for (int c = 0; c <= nk; ++c) {
        if (count[c] == 0) {
            out.skipped_classes.push_back(c);
            continue;
        }
        const double acc = static_cast<double>(hit[c]) / count[c];
        out.per_class[c] = acc;
        all_sum += acc;
        ++all_n;
        if (c < nk) {
            known_sum += acc;
            ++known_n;
        }
    }
    out.knwn = known_n > 0 ? known_sum / known_n : std::numeric_limits<double>::quiet_NaN();
    out.mean = all_n > 0 ? all_sum / all_n : std::numeric_limits<double>::quiet_NaN();
    out.overall = static_cast<double>(correct) / preds.size();
    return out;
}

MetricsReport full_report(const std::vector<int>& preds, const std::vector<int>& truths,
                          const ClassPartition& partition) {
    MetricsReport r;
    const OfficeMetrics om = office_metrics(preds, truths, partition);
    const VisdaMetrics vm = visda_metrics(preds, truths, partition);
    r.os = om.os;
    r.os_star = om.os_star;
    r.os_star_defined = om.os_star_defined;
    r.knwn = vm.knwn;
    r.mean = vm.mean;
    r.overall = vm.overall;
    r.os_macro = vm.mean;
    r.per_class = vm.per_class;
    r.skipped_classes = vm.skipped_classes;
    r.confusion = confusion(preds, truths, partition.n_known() + 1);
    return r;
}

MetricsReport evaluate_model(const ModelState& model, const OpenSetTask& task, PredictMode mode,
                             double threshold) {
    const std::vector<int> preds = predict_all(model, task.target, mode, threshold, task.partition);
    std::vector<int> truths;
    truths.reserve(task.target.size());
    for (int t : task.target_truth_for_eval()) truths.push_back(task.partition.to_eval(t));
    return full_report(preds, truths, task.partition);
}

std::vector<std::array<double, 2>> project_2d(const std::vector<Vec>& features) {
    if (features.size() < 2) throw ValidationError("project_2d: need at least two samples");
    const int d = static_cast<int>(features[0].size());
    if (d < 2) throw ValidationError("project_2d: need feature dimension >= 2");

    Vec mean(static_cast<size_t>(d), 0.0);
    for (const Vec& f : features) axpy(1.0, f, mean);
    for (double& v : mean) v /= static_cast<double>(features.size());

    Matrix cov(d, d, 0.0);
    for (const Vec& f : features) {
        for (int i = 0; i < d; ++i) {
            const double fi = f[i] - mean[i];
            for (int j = i; j < d; ++j) cov.at(i, j) += fi * (f[j] - mean[j]);
        }
    }
    for (int i = 0; i < d; ++i) {
        for (int j = i; j < d; ++j) {
            cov.at(i, j) /= static_cast<double>(features.size());
            cov.at(j, i) = cov.at(i, j);
        }
    }

    Vec values;
    Matrix vectors;
    jacobi_eigen(cov, values, vectors);

    // Two largest eigenvalues; ties resolved by lower column index.
    int i1 = 0;
    for (int i = 1; i < d; ++i) {
        if (values[i] > values[i1]) i1 = i;
    }
    int i2 = (i1 == 0) ? 1 : 0;
    for (int i = 0; i < d; ++i) {
        if (i != i1 && values[i] > values[i2]) i2 = i;
    }

    auto component = [&](int col) {
        Vec v(static_cast<size_t>(d));
        for (int i = 0; i < d; ++i) v[i] = vectors.at(i, col);
        for (int i = 0; i < d; ++i) {
            if (std::abs(v[i]) > 1e-12) {
                if (v[i] < 0.0) {
                    for (double& x : v) x = -x;
                }
                break;
            }
        }
        return v;
    };
    const Vec v1 = component(i1);
    const Vec v2 = component(i2);

    std::vector<std::array<double, 2>> out;
    out.reserve(features.size());
    for (const Vec& f : features) {
        Vec centered(static_cast<size_t>(d));
        for (int i = 0; i < d; ++i) centered[i] = f[i] - mean[i];
        out.push_back({dot(centered, v1), dot(centered, v2)});
    }
    return out;
}

std::string metrics_to_csv(const MetricsReport& report) {
    std::ostringstream out;
    out << "metric,value\n";
    out << "os," << fmt17(report.os) << '\n';
    out << "os_star," << fmt17(report.os_star) << '\n';
    out << "os_star_defined," << (report.os_star_defined ? 1 : 0) << '\n';
    out << "knwn," << fmt17(report.knwn) << '\n';
    out << "mean," << fmt17(report.mean) << '\n';
    out << "overall," << fmt17(report.overall) << '\n';
    out << "os_macro," << fmt17(report.os_macro) << '\n';
    for (const auto& [c, acc] : report.per_class) {
        out << "class_" << c << ',' << fmt17(acc) << '\n';
    }
    out << "confusion\n";
    for (int r = 0; r < report.confusion.rows; ++r) {
        for (int c = 0; c < report.confusion.cols; ++c) {
            out << (c ? "," : "") << static_cast<long>(report.confusion.at(r, c));
        }
        out << '\n';
    }
    return out.str();
}

MetricsReport metrics_from_csv(const std::string& text) {
    MetricsReport r;
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "metric,value") {
        throw ValidationError("metrics csv: missing header");
    }
    std::vector<Vec> confusion_rows;
    bool in_confusion = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line == "confusion") {
            in_confusion = true;
            continue;
        }
        const auto parts = split(line, ',');
        if (in_confusion) {
            Vec row;
            for (const std::string& p : parts) row.push_back(parse_double(p, "confusion"));
            confusion_rows.push_back(std::move(row));
            continue;
        }
        if (parts.size() != 2) throw ValidationError("metrics csv: malformed row");
        const std::string& key = parts[0];
        if (key == "os") r.os = parse_double(parts[1], key);
        else if (key == "os_star") r.os_star = parse_double(parts[1], key);
        else if (key == "os_star_defined") r.os_star_defined = parse_long(parts[1], key) != 0;
        else if (key == "knwn") r.knwn = parse_double(parts[1], key);
        else if (key == "mean") r.mean = parse_double(parts[1], key);
        else if (key == "overall") r.overall = parse_double(parts[1], key);
        else if (key == "os_macro") r.os_macro = parse_double(parts[1], key);
        else if (key.rfind("class_", 0) == 0) {
            r.per_class[static_cast<int>(parse_long(key.substr(6), key))] = parse_double(parts[1], key);
        } else {
            throw ValidationError("metrics csv: unknown key " + key);
        }
    }
    const int n = static_cast<int>(confusion_rows.size());
    r.confusion = Matrix(n, n, 0.0);
    for (int i = 0; i < n; ++i) {
        if (static_cast<int>(confusion_rows[i].size()) != n) {
            throw ValidationError("metrics csv: ragged confusion block");
        }
        for (int j = 0; j < n; ++j) r.confusion.at(i, j) = confusion_rows[i][j];
    }
    return r;
}

} // namespace secc
