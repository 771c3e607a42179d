#pragma once

#include "secc/clustering.hpp"
#include "secc/datagen.hpp"
#include "secc/eval.hpp"
#include "secc/losses.hpp"
#include "secc/network.hpp"
#include "secc/random.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace secc {

enum class EvalModeChoice { Auto, Closed, OpenNClass, OpenReject };

struct TrainConfig {
    double lr = 0.001;   // paper defaults
    int batch_size = 56; // paper defaults
    int epochs = 10;
    double momentum = 0.0;
    double ema_decay = 0.99;
    double rho = 10.0;
    double alpha = 1.0;
    double beta = 1e-3;

    // Cluster count; 0 selects K via the gap statistic over
    // [k_auto_min, k_auto_max] with k_auto_refs references.
    int K = 0;
    int k_auto_min = 1;
    int k_auto_max = 10;
    int k_auto_refs = 10;
    int refresh_interval = 0; // epochs; 0 disables cluster refresh

    bool use_se = true; // self-ensembling consistency (off = source-only regime)
    bool use_cde = true;
    bool use_kl = true;
    bool use_mim = true;
    bool unknown_source_present = false; // resolved from the task in setup()
    bool aug_source = true; // apply the perturbation to source samples too

    double constraint_weight = 1.0; // multiplier on the inter-cluster term

    std::uint64_t seed = 0;
    AugConfig aug{0.1, 0.0, 0.05};
    BackboneSpec net; // input_dim, N and K are resolved in setup()

    int cluster_projection_dim = 0; // 0 clusters raw features

    EvalModeChoice eval_mode = EvalModeChoice::Auto;
    double reject_threshold = 0.5;

    int checkpoint_interval = 0; // epochs; 0 disables checkpoints
    std::string checkpoint_dir;

    void validate() const;
};

struct HistoryEntry {
    long step = 0;
    LossBreakdown loss;
    std::optional<MetricsReport> metrics; // filled at epoch ends
};

struct TrainState {
    ModelState model;
    ClusterModel clusters;
    Matrix centroid_cos;
    std::vector<Vec> inherent; // fixed P~ per target index
    long step = 0;
    std::vector<HistoryEntry> history;
    RandomStream rng{0};
    TrainConfig cfg; // resolved copy
    std::optional<StudentParams> velocity; // momentum buffer
};

// Clusters the target features, resolves K, initializes the student from the
// seed and the teacher as an exact copy of the shared parts.
TrainState setup(const OpenSetTask& task, const TrainConfig& cfg);

// Perturbed batch views, drawn source first, then student/teacher pairs
// per target sample. Source views are the raw samples when aug_source is off.
struct BatchViews {
    std::vector<Sample> source;
    std::vector<Sample> student_view;
    std::vector<Sample> teacher_view;
};
BatchViews make_views(const OpenSetTask& task, const std::vector<int>& src_idx,
                      const std::vector<int>& tgt_idx, const AugConfig& aug, bool aug_source,
                      RandomStream& rng);

// Full objective on one batch pair; accumulates analytic gradients of every
// student-side parameter when `grads` is non-null. Pure given its inputs.
LossBreakdown evaluate_batch(const TrainState& state, const OpenSetTask& task,
                             const std::vector<int>& src_idx, const std::vector<int>& tgt_idx,
                             const BatchViews& views, StudentParams* grads);

// One descent update of all student-side parameters plus the teacher EMA.
LossBreakdown train_step(TrainState& state, const OpenSetTask& task,
                         const std::vector<int>& src_idx, const std::vector<int>& tgt_idx);

std::pair<TrainState, MetricsReport> train(const OpenSetTask& task, const TrainConfig& cfg);

// The cumulative ablation ladder, in order: SE, +CE, +KL, SE-CC.
std::vector<std::pair<std::string, TrainConfig>> ablation_configs(const TrainConfig& base);

// All target-side losses disabled; the classifier sees source data only.
TrainConfig source_only_config(const TrainConfig& base);

// Maps a raw source label onto the classifier head.
int head_label(const ClassPartition& partition, int label);

PredictMode resolve_eval_mode(const TrainConfig& cfg, const ClassPartition& partition);

std::string history_to_csv(const std::vector<HistoryEntry>& history);

} // namespace secc
