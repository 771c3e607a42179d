#pragma once

#include "secc/linalg.hpp"
#include "secc/random.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace secc {

// Trainer-visible label of an unlabeled target sample.
constexpr int kUnlabeled = -1;

enum class Domain { Source, Target };

struct Sample {
    Vec features;
    int label = kUnlabeled; // class id, or kUnlabeled for target samples
    Domain domain = Domain::Source;
};

// Known / unknown class split. N counts the known classes plus the single
// aggregated "unknown" evaluation class.
struct ClassPartition {
    std::vector<int> known;
    std::vector<int> unknown_source;
    std::vector<int> unknown_target;
    int n_total_classes = 0; // |known| + 1

    bool is_known(int label) const;
    int n_known() const { return static_cast<int>(known.size()); }
    // Index of the aggregated unknown class in evaluation space.
    int unknown_eval_id() const { return n_known(); }
    // Maps a raw class id onto evaluation space: known ids keep their index
    // in `known`, everything else collapses onto the unknown id.
    int to_eval(int label) const;
    void validate() const;
};

// Domain shift applied to target draws: rotation in the first two
// coordinates, then translation, then additive isotropic noise.
struct ShiftSpec {
    double rotation_deg = 0.0;
    Vec translation;      // length d, or empty for zero
    double noise_std = 0.0;
};

struct GeneratorSpec {
    int d = 2;
    int classes_known = 2;
    int classes_unk_src = 0;
    int classes_unk_tgt = 0;
    int samples_per_class = 20;
    ShiftSpec shift;

    // Known and unknown-target means sit on concentric rings in the first
    // two coordinates (at most four classes per ring, consecutive ids on
    // different rings, radii growing geometrically from `spread` by
    // `ring_growth`, seeded global rotation plus per-class angular jitter),
    // which keeps every target blob nearest its own source blob under a
    // rotation of up to ~45 degrees. With unk_tgt_offset > 0 the
    // unknown-target means instead sit tangentially beside the first known
    // blobs at that distance. Unknown-source means fill the space in
    // between, kept `unk_src_clearance` away from ring blobs and their
    // shifted images. Blob draws are isotropic Gaussians of std blob_std.
    double spread = 2.0;
    double ring_growth = 2.2;
    double blob_std = 0.5;
    double angle_jitter_deg = 8.0;
    double unk_src_clearance = 1.4; // min distance of filler blobs from ring blobs
    double unk_tgt_offset = 0.0;    // > 0 places unknown-target blobs as tangential
                                    // satellites of the first known blobs instead
                                    // of on their own ring slots
    double paired_filler_dist = 0.0; // > 0 pins one unknown-source blob radially
                                     // outward of each satellite's shifted position

    // Per-class target sample count for unknown-target classes;
    // 0 means samples_per_class (the 1:1 default regime).
    int unk_tgt_samples_per_class = 0;

    // Fixes the class layout across task seeds (the desk analogue of a
    // benchmark with one fixed category set); -1 derives it from the task
    // seed so every seed gets fresh geometry.
    long long layout_seed = -1;

    int n_total() const { return classes_known + classes_unk_src + classes_unk_tgt; }
    void validate() const;
};

// Sets unknown-target per-class counts so that target unknown samples
// outnumber target known samples ten to one.
void apply_visda_ratio(GeneratorSpec& spec);

// Stochastic perturbation used for the two student/teacher views:
// additive Gaussian noise, per-coordinate sign flip, multiplicative jitter.
struct AugConfig {
    double noise_std = 0.0;
    double flip_prob = 0.0;
    double scale_jitter = 0.0;
    void validate() const;
};

class OpenSetTask {
public:
    std::vector<Sample> source;
    std::vector<Sample> target;   // labels are kUnlabeled
    ClassPartition partition;
    std::uint64_t seed = 0;

    // Ground-truth target labels, retained for evaluation only. The
    // optimization path never touches these.
    const std::vector<int>& target_truth_for_eval() const { return target_truth_; }

    void validate() const;

private:
    std::vector<int> target_truth_;

    friend OpenSetTask make_open_set_task(const GeneratorSpec&, std::uint64_t);
    friend OpenSetTask load_task(const std::string&);
};

OpenSetTask make_open_set_task(const GeneratorSpec& spec, std::uint64_t seed);

Sample perturb(const Sample& x, const AugConfig& cfg, RandomStream& rng);

// One shuffled epoch over [0, n) as index batches; the final short batch is kept.
std::vector<std::vector<int>> epoch_batches(int n, int batch_size, RandomStream& rng);

// Text round-trip. Header `d N_known N_unk_src N_unk_tgt seed`, then one
// line per sample: `domain label f_1 ... f_d`. Target lines carry the
// hidden evaluation label (-1 when absent); the loaded trainer view of a
// target sample is always unlabeled.
void save_task(const OpenSetTask& task, const std::string& path);
OpenSetTask load_task(const std::string& path);

} // namespace secc
