#pragma once

#include "secc/datagen.hpp"
#include "secc/linalg.hpp"
#include "secc/network.hpp"

#include <array>
#include <map>
#include <string>
#include <vector>

namespace secc {

enum class PredictMode { Closed, OpenNClass, OpenReject };

// Student, teacher and their shape contract, as produced by the trainer.
// input_mean/input_scale hold the fixed per-coordinate standardization
// applied before every forward pass; empty vectors mean identity.
struct ModelState {
    BackboneSpec spec;
    StudentParams student;
    TeacherParams teacher;
    Vec input_mean;
    Vec input_scale;

    Vec standardize(const Vec& x) const;
};

// All open-set and closed-set rates. Class-averaged values exclude classes
// with no target samples (listed in skipped_classes); os_star is NaN with
// os_star_defined = false when no known target samples exist.
struct MetricsReport {
    double os = 0.0;
    double os_star = 0.0;
    double knwn = 0.0;
    double mean = 0.0;
    double overall = 0.0;
    double os_macro = 0.0; // class-averaged OS variant
    bool os_star_defined = true;
    std::map<int, double> per_class; // eval-space class id -> accuracy
    std::vector<int> skipped_classes;
    Matrix confusion; // N x N, rows true, cols predicted
};

// Prediction in evaluation space: 0..n_known-1 or the unknown id n_known.
// Closed and OpenNClass take the argmax of the student head; OpenReject
// takes the argmax over the known head and rejects below `threshold`.
int predict(const ModelState& model, const Vec& features, PredictMode mode, double threshold,
            const ClassPartition& partition);

std::vector<int> predict_all(const ModelState& model, const std::vector<Sample>& samples,
                             PredictMode mode, double threshold, const ClassPartition& partition);

// preds and truths live in evaluation space.
Matrix confusion(const std::vector<int>& preds, const std::vector<int>& truths, int n_classes);

struct OfficeMetrics {
    double os = 0.0;
    double os_star = 0.0;
    bool os_star_defined = true;
};
OfficeMetrics office_metrics(const std::vector<int>& preds, const std::vector<int>& truths,
                             const ClassPartition& partition);

struct VisdaMetrics {
    double knwn = 0.0;
    double mean = 0.0;
    double overall = 0.0;
    std::map<int, double> per_class;
    std::vector<int> skipped_classes;
};
VisdaMetrics visda_metrics(const std::vector<int>& preds, const std::vector<int>& truths,
                           const ClassPartition& partition);

MetricsReport full_report(const std::vector<int>& preds, const std::vector<int>& truths,
                          const ClassPartition& partition);

// Evaluates the student on the task's target set using its hidden labels.
MetricsReport evaluate_model(const ModelState& model, const OpenSetTask& task, PredictMode mode,
                             double threshold);

// Mean-centered projection onto the top two principal directions, sign fixed
// so the first nonzero loading of each direction is positive.
std::vector<std::array<double, 2>> project_2d(const std::vector<Vec>& features);

std::string metrics_to_csv(const MetricsReport& report);
MetricsReport metrics_from_csv(const std::string& text);

} // namespace secc
