#include "secc/datagen.hpp"

#include "secc/errors.hpp"
#include "secc/textio.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace secc {

namespace {

constexpr double kPi = 3.14159265358979323846;

void rotate2(Vec& x, double deg) {
    const double a = deg * kPi / 180.0;
    const double c = std::cos(a), s = std::sin(a);
    const double x0 = x[0], x1 = x[1];
    x[0] = c * x0 - s * x1;
    x[1] = s * x0 + c * x1;
}

std::vector<Vec> place_class_means(const GeneratorSpec& spec, RandomStream& mean_rng) {
    // Classes that appear in the target domain (known and unknown-target)
    // sit on interleaved concentric rings: consecutive ring classes cycle
    // through the rings, so angular neighbours live at well-separated radii
    // and the shift rotation cannot carry one target blob onto another
    // class's source blob. Unknown-source classes never appear in the
    // target, so they fill the space in between, kept clear of the ring
    // means and of where the shift moves them.
    const int nk = spec.classes_known;
    const int nus = spec.classes_unk_src;
    const int nut = spec.classes_unk_tgt;
    const bool satellites = spec.unk_tgt_offset > 0.0 && nut <= nk;
    const int n_ring = nk + (satellites ? 0 : nut);
    const double global_offset = mean_rng.uniform(0.0, 2.0 * kPi);

    // Known classes fill the inner rings four at a time; unknown-target
    // classes start on their own ring above them. The shift rotation moves a
    // blob along its ring by an arc that grows with the radius, so knowns
    // stay near their own slots while unknown-target blobs land well away
    // from every source blob.
    auto ring_position = [&](int ring, int slot, double jitter) {
        const double radius = spec.spread * std::pow(spec.ring_growth, ring);
        const double angle =
            global_offset + (2.0 * kPi / 4.0) * slot + (kPi / 4.0) * (ring % 2) + jitter;
        Vec mean(static_cast<size_t>(spec.d), 0.0);
        mean[0] = radius * std::cos(angle);
        mean[1] = radius * std::sin(angle);
        return mean;
    };

    std::vector<Vec> ring_means;
    double outer_radius = 0.0;
    const int unk_ring_start = (nk + 3) / 4;
    for (int i = 0; i < n_ring; ++i) {
        const bool is_unknown = i >= nk;
        const int ring = is_unknown ? unk_ring_start + (i - nk) / 4 : i / 4;
        const int slot = is_unknown ? (i - nk) % 4 : i % 4;
        const double jitter = mean_rng.uniform(-1.0, 1.0) * spec.angle_jitter_deg * kPi / 180.0;
        outer_radius = std::max(outer_radius, spec.spread * std::pow(spec.ring_growth, ring));
        ring_means.push_back(ring_position(ring, slot, jitter));
    }

    if (satellites) {
        // Tangential satellites of the first known blobs, side chosen by the
        // layout stream. A tangential offset keeps the satellite at a
        // different angle from its host, so the cosine structure over
        // centroids can tell them apart.
        for (int u = 0; u < nut; ++u) {
            const Vec& host = ring_means[u];
            const double r = std::sqrt(host[0] * host[0] + host[1] * host[1]);
            const double side = mean_rng.uniform() < 0.5 ? 1.0 : -1.0;
            Vec mean = host;
            mean[0] += side * spec.unk_tgt_offset * (-host[1] / r);
            mean[1] += side * spec.unk_tgt_offset * (host[0] / r);
            ring_means.push_back(std::move(mean));
        }
    }

    // Exclusion set: ring means plus their post-shift images.
    std::vector<Vec> keep_clear = ring_means;
    for (const Vec& m : ring_means) {
        Vec shifted = m;
        rotate2(shifted, spec.shift.rotation_deg);
        if (!spec.shift.translation.empty()) {
            for (size_t j = 0; j < shifted.size(); ++j) shifted[j] += spec.shift.translation[j];
        }
        keep_clear.push_back(std::move(shifted));
    }

    const double clearance = spec.unk_src_clearance;
    const double box = std::max((outer_radius + clearance) * 1.25, spec.spread);
    std::vector<Vec> filler_means;

    // Paired fillers sit at the same origin angle as each satellite's
    // shifted image but farther out, so the unknown class owns that angular
    // direction while the Euclidean neighbourhood still belongs to the host.
    int paired = 0;
    if (satellites && spec.paired_filler_dist > 0.0) {
        paired = std::min(nut, nus);
        for (int u = 0; u < paired; ++u) {
            Vec shifted = ring_means[nk + u];
            rotate2(shifted, spec.shift.rotation_deg);
            if (!spec.shift.translation.empty()) {
                for (size_t j = 0; j < shifted.size(); ++j) shifted[j] += spec.shift.translation[j];
            }
            const double r = std::sqrt(shifted[0] * shifted[0] + shifted[1] * shifted[1]);
            Vec filler = shifted;
            const double scale = (r + spec.paired_filler_dist) / r;
            filler[0] *= scale;
            filler[1] *= scale;
            keep_clear.push_back(filler);
            filler_means.push_back(std::move(filler));
        }
    }

    for (int u = paired; u < nus; ++u) {
        Vec mean(static_cast<size_t>(spec.d), 0.0);
        bool placed = false;
        for (int attempt = 0; attempt < 50000 && !placed; ++attempt) {
            for (double& v : mean) v = mean_rng.uniform(-box, box);
            placed = true;
            for (const Vec& other : keep_clear) {
                double d2 = 0.0;
                for (size_t j = 0; j < mean.size(); ++j) {
                    const double diff = mean[j] - other[j];
                    d2 += diff * diff;
                }
                if (d2 < clearance * clearance) {
                    placed = false;
                    break;
                }
            }
        }
        if (!placed) {
            throw ValidationError(
                "make_open_set_task: cannot place unknown-source means; lower unk_src_clearance");
        }
        keep_clear.push_back(mean);
        filler_means.push_back(std::move(mean));
    }

    // Assemble in class-id order: known, unknown-source, unknown-target.
    std::vector<Vec> means(ring_means.begin(), ring_means.begin() + nk);
    means.insert(means.end(), filler_means.begin(), filler_means.end());
    means.insert(means.end(), ring_means.begin() + nk, ring_means.end());
    return means;
}

Vec draw_blob_point(const Vec& mean, double std, RandomStream& rng) {
    Vec x(mean.size());
    for (size_t i = 0; i < mean.size(); ++i) x[i] = mean[i] + std * rng.normal();
    return x;
}

void apply_shift(Vec& x, const ShiftSpec& shift, RandomStream& rng) {
    if (shift.rotation_deg != 0.0) {
        const double a = shift.rotation_deg * kPi / 180.0;
        const double c = std::cos(a), s = std::sin(a);
        const double x0 = x[0], x1 = x[1];
        x[0] = c * x0 - s * x1;
        x[1] = s * x0 + c * x1;
    }
    if (!shift.translation.empty()) {
        for (size_t i = 0; i < x.size(); ++i) x[i] += shift.translation[i];
    }
    if (shift.noise_std > 0.0) {
        for (double& v : x) v += shift.noise_std * rng.normal();
    }
}

} // namespace

bool ClassPartition::is_known(int label) const {
    return std::find(known.begin(), known.end(), label) != known.end();
}

int ClassPartition::to_eval(int label) const {
    for (size_t i = 0; i < known.size(); ++i) {
        if (known[i] == label) return static_cast<int>(i);
    }
    return unknown_eval_id();
}

void ClassPartition::validate() const {
    auto overlaps = [](const std::vector<int>& a, const std::vector<int>& b) {
        for (int x : a) {
            if (std::find(b.begin(), b.end(), x) != b.end()) return true;
        }
        return false;
    };
    if (overlaps(known, unknown_source) || overlaps(known, unknown_target) ||
        overlaps(unknown_source, unknown_target)) {
        throw ValidationError("ClassPartition: class sets must be pairwise disjoint");
    }
    if (n_total_classes != n_known() + 1) {
        throw ValidationError("ClassPartition: N must equal |known| + 1");
    }
}

void GeneratorSpec::validate() const {
    if (d < 2) throw ValidationError("GeneratorSpec: d must be >= 2");
    if (classes_known < 1) throw ValidationError("GeneratorSpec: classes_known must be >= 1");
    if (classes_unk_src < 0 || classes_unk_tgt < 0) {
        throw ValidationError("GeneratorSpec: class counts must be nonnegative");
    }
    if (samples_per_class < 2) throw ValidationError("GeneratorSpec: samples_per_class must be >= 2");
    if (unk_tgt_samples_per_class < 0) {
        throw ValidationError("GeneratorSpec: unk_tgt_samples_per_class must be >= 0");
    }
    if (!shift.translation.empty() && static_cast<int>(shift.translation.size()) != d) {
        throw ValidationError("GeneratorSpec: translation must have length d");
    }
    if (shift.noise_std < 0.0) throw ValidationError("GeneratorSpec: shift noise_std must be >= 0");
    if (blob_std <= 0.0) throw ValidationError("GeneratorSpec: blob_std must be > 0");
    if (spread <= 0.0 || ring_growth < 1.0) throw ValidationError("GeneratorSpec: spread must be positive and ring_growth >= 1");
}

void apply_visda_ratio(GeneratorSpec& spec) {
    if (spec.classes_unk_tgt < 1) throw ValidationError("visda ratio needs at least one unknown-target class");
    const int known_total = spec.classes_known * spec.samples_per_class;
    spec.unk_tgt_samples_per_class =
        std::max(1, (10 * known_total + spec.classes_unk_tgt - 1) / spec.classes_unk_tgt);
}

void AugConfig::validate() const {
    if (!(noise_std >= 0.0) || !(scale_jitter >= 0.0)) {
        throw ValidationError("AugConfig: noise_std and scale_jitter must be nonnegative");
    }
    if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) {
        throw ValidationError("AugConfig: flip_prob must lie in [0,1]");
    }
}

void OpenSetTask::validate() const {
    partition.validate();
    for (const Sample& s : source) {
        if (s.domain != Domain::Source || s.label == kUnlabeled) {
            throw ValidationError("OpenSetTask: source samples must be labeled");
        }
        if (!partition.is_known(s.label) &&
            std::find(partition.unknown_source.begin(), partition.unknown_source.end(), s.label) ==
                partition.unknown_source.end()) {
            throw ValidationError("OpenSetTask: source label outside known + unknown_source");
        }
        if (!all_finite(s.features)) throw ValidationError("OpenSetTask: non-finite source feature");
    }
    if (target_truth_.size() != target.size()) {
        throw ValidationError("OpenSetTask: target truth length mismatch");
    }
    for (size_t i = 0; i < target.size(); ++i) {
        const Sample& s = target[i];
        if (s.domain != Domain::Target || s.label != kUnlabeled) {
            throw ValidationError("OpenSetTask: target samples must be unlabeled");
        }
        const int truth = target_truth_[i];
        if (truth != kUnlabeled && !partition.is_known(truth) &&
            std::find(partition.unknown_target.begin(), partition.unknown_target.end(), truth) ==
                partition.unknown_target.end()) {
            throw ValidationError("OpenSetTask: target truth outside known + unknown_target");
        }
        if (!all_finite(s.features)) throw ValidationError("OpenSetTask: non-finite target feature");
    }
}

OpenSetTask make_open_set_task(const GeneratorSpec& spec, std::uint64_t seed) {
    spec.validate();

    OpenSetTask task;
    task.seed = seed;
    const int nk = spec.classes_known;
    const int nus = spec.classes_unk_src;
    const int nut = spec.classes_unk_tgt;

    for (int c = 0; c < nk; ++c) task.partition.known.push_back(c);
    for (int c = 0; c < nus; ++c) task.partition.unknown_source.push_back(nk + c);
    for (int c = 0; c < nut; ++c) task.partition.unknown_target.push_back(nk + nus + c);
    task.partition.n_total_classes = nk + 1;

    RandomStream root(seed);
    RandomStream mean_rng = spec.layout_seed >= 0
                                ? RandomStream(RandomStream::mix(static_cast<std::uint64_t>(spec.layout_seed), 0xA11CE5))
                                : root.substream(0xA11CE5);
    const std::vector<Vec> means = place_class_means(spec, mean_rng);

    // Source: known then unknown-source classes, fixed order.
    for (int c = 0; c < nk + nus; ++c) {
        RandomStream rng = root.substream(RandomStream::mix(1, c));
        for (int i = 0; i < spec.samples_per_class; ++i) {
            task.source.push_back(Sample{draw_blob_point(means[c], spec.blob_std, rng), c, Domain::Source});
        }
    }

    // Target: fresh draws from known and unknown-target generators, shifted.
    const int unk_count = spec.unk_tgt_samples_per_class > 0 ? spec.unk_tgt_samples_per_class
                                                             : spec.samples_per_class;
    auto emit_target_class = [&](int c, int count) {
        RandomStream rng = root.substream(RandomStream::mix(2, c));
        for (int i = 0; i < count; ++i) {
            Vec x = draw_blob_point(means[c], spec.blob_std, rng);
            apply_shift(x, spec.shift, rng);
            task.target.push_back(Sample{std::move(x), kUnlabeled, Domain::Target});
            task.target_truth_.push_back(c);
        }
    };
    for (int c = 0; c < nk; ++c) emit_target_class(c, spec.samples_per_class);
    for (int c = nk + nus; c < spec.n_total(); ++c) emit_target_class(c, unk_count);

    task.validate();
    return task;
}

Sample perturb(const Sample& x, const AugConfig& cfg, RandomStream& rng) {
    cfg.validate();
    Sample out = x;
    for (double& v : out.features) v += cfg.noise_std * rng.normal();
    for (double& v : out.features) {
        if (rng.uniform() < cfg.flip_prob) v = -v;
    }
    const double scale = 1.0 + cfg.scale_jitter * (2.0 * rng.uniform() - 1.0);
    for (double& v : out.features) v *= scale;
    return out;
}

std::vector<std::vector<int>> epoch_batches(int n, int batch_size, RandomStream& rng) {
    if (batch_size < 1) throw ValidationError("epoch_batches: batch_size must be >= 1");
    std::vector<int> order(static_cast<size_t>(std::max(n, 0)));
    std::iota(order.begin(), order.end(), 0);
    for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(i + 1)]);

    std::vector<std::vector<int>> batches;
    for (int start = 0; start < n; start += batch_size) {
        const int end = std::min(n, start + batch_size);
        batches.emplace_back(order.begin() + start, order.begin() + end);
    }
    return batches;
}

void save_task(const OpenSetTask& task, const std::string& path) {
    std::ostringstream out;
    out << task.partition.n_known() << ' ' << task.partition.unknown_source.size() << ' '
        << task.partition.unknown_target.size() << ' ' << task.seed << '\n';
    // First header field is d; rewrite with the actual layout below.
    std::ostringstream head;
    const int d = task.source.empty() ? (task.target.empty() ? 0 : static_cast<int>(task.target[0].features.size()))
                                      : static_cast<int>(task.source[0].features.size());
    head << d << ' ' << out.str();

    std::ostringstream body;
    auto emit = [&](const Sample& s, int label) {
        body << (s.domain == Domain::Source ? 'S' : 'T') << ' ' << label;
        for (double f : s.features) body << ' ' << fmt17(f);
        body << '\n';
    };
    for (const Sample& s : task.source) emit(s, s.label);
    const auto& truth = task.target_truth_for_eval();
    for (size_t i = 0; i < task.target.size(); ++i) emit(task.target[i], truth[i]);

    write_text_file(path, head.str() + body.str());
}

OpenSetTask load_task(const std::string& path) {
    std::istringstream in(read_text_file(path));
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("task file is empty: " + path);
    std::istringstream head(line);
    int d = 0, nk = 0, nus = 0, nut = 0;
    std::uint64_t seed = 0;
    if (!(head >> d >> nk >> nus >> nut >> seed)) {
        throw ValidationError("task file has a malformed header: " + path);
    }

    OpenSetTask task;
    task.seed = seed;
    for (int c = 0; c < nk; ++c) task.partition.known.push_back(c);
    for (int c = 0; c < nus; ++c) task.partition.unknown_source.push_back(nk + c);
    for (int c = 0; c < nut; ++c) task.partition.unknown_target.push_back(nk + nus + c);
    task.partition.n_total_classes = nk + 1;

    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        char dom = 0;
        int label = 0;
        if (!(row >> dom >> label)) throw ValidationError("task file has a malformed sample line");
        Vec f(static_cast<size_t>(d));
        for (int i = 0; i < d; ++i) {
            if (!(row >> f[i])) throw ValidationError("task file sample line is short");
        }
        if (dom == 'S') {
            task.source.push_back(Sample{std::move(f), label, Domain::Source});
        } else if (dom == 'T') {
            task.target.push_back(Sample{std::move(f), kUnlabeled, Domain::Target});
            task.target_truth_.push_back(label);
        } else {
            throw ValidationError("task file has an unknown domain tag");
        }
    }
    task.validate();
    return task;
}

} // namespace secc
