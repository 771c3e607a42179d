#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "secc/datagen.hpp"
#include "secc/errors.hpp"

#include "helpers.hpp"

#include <cstdio>
#include <filesystem>
#include <map>
#include <set>

using namespace secc;

namespace {

GeneratorSpec small_spec() {
    GeneratorSpec spec;
    spec.d = 2;
    spec.classes_known = 3;
    spec.classes_unk_src = 1;
    spec.classes_unk_tgt = 2;
    spec.samples_per_class = 10;
    return spec;
}

bool tasks_equal(const OpenSetTask& a, const OpenSetTask& b) {
    if (a.source.size() != b.source.size() || a.target.size() != b.target.size()) return false;
    for (size_t i = 0; i < a.source.size(); ++i) {
        if (a.source[i].label != b.source[i].label) return false;
        if (a.source[i].features != b.source[i].features) return false;
    }
    for (size_t i = 0; i < a.target.size(); ++i) {
        if (a.target[i].features != b.target[i].features) return false;
    }
    return a.target_truth_for_eval() == b.target_truth_for_eval();
}

} // namespace

TEST_CASE("identity shift keeps class-conditional distributions aligned") {
    GeneratorSpec spec = small_spec();
    spec.shift = ShiftSpec{0.0, {}, 0.0};
    const OpenSetTask task = make_open_set_task(spec, 11);

    // Same class generators, same substreams: with a no-op shift the known
    // target blobs coincide with what a source re-draw of that class yields.
    // Check per-class means agree within blob noise.
    for (int c = 0; c < spec.classes_known; ++c) {
        Vec src_mean(2, 0.0), tgt_mean(2, 0.0);
        int ns = 0, nt = 0;
        for (const Sample& s : task.source) {
            if (s.label == c) {
                axpy(1.0, s.features, src_mean);
                ++ns;
            }
        }
        const auto& truth = task.target_truth_for_eval();
        for (size_t i = 0; i < task.target.size(); ++i) {
            if (truth[i] == c) {
                axpy(1.0, task.target[i].features, tgt_mean);
                ++nt;
            }
        }
        REQUIRE(ns > 0);
        REQUIRE(nt > 0);
        for (int j = 0; j < 2; ++j) {
            CHECK(std::abs(src_mean[j] / ns - tgt_mean[j] / nt) < 4.0 * spec.blob_std);
        }
    }
}

TEST_CASE("closed-set degenerate case has no unknown classes") {
    GeneratorSpec spec = small_spec();
    spec.classes_unk_src = 0;
    spec.classes_unk_tgt = 0;
    const OpenSetTask task = make_open_set_task(spec, 5);
    CHECK(task.partition.unknown_source.empty());
    CHECK(task.partition.unknown_target.empty());
    CHECK(task.partition.n_total_classes == spec.classes_known + 1);
    for (int truth : task.target_truth_for_eval()) CHECK(task.partition.is_known(truth));
}

TEST_CASE("regeneration from the same seed is identical") {
    GeneratorSpec spec;
    spec.d = 2;
    spec.classes_known = 6;
    spec.classes_unk_src = 0;
    spec.classes_unk_tgt = 3;
    spec.samples_per_class = 50;
    spec.shift.rotation_deg = 30.0;
    const OpenSetTask a = make_open_set_task(spec, 7);
    const OpenSetTask b = make_open_set_task(spec, 7);
    CHECK(tasks_equal(a, b));
    const OpenSetTask c = make_open_set_task(spec, 8);
    CHECK_FALSE(tasks_equal(a, c));
}

TEST_CASE("class balance: every class has the configured count per domain") {
    GeneratorSpec spec = small_spec();
    const OpenSetTask task = make_open_set_task(spec, 3);
    std::map<int, int> src_count, tgt_count;
    for (const Sample& s : task.source) src_count[s.label]++;
    for (int t : task.target_truth_for_eval()) tgt_count[t]++;
    for (int c : task.partition.known) {
        CHECK(src_count[c] == spec.samples_per_class);
        CHECK(tgt_count[c] == spec.samples_per_class);
    }
    for (int c : task.partition.unknown_source) CHECK(src_count[c] == spec.samples_per_class);
    for (int c : task.partition.unknown_target) CHECK(tgt_count[c] == spec.samples_per_class);
}

TEST_CASE("visda ratio preset yields 1:10 known-to-unknown target samples") {
    GeneratorSpec spec = small_spec();
    apply_visda_ratio(spec);
    const OpenSetTask task = make_open_set_task(spec, 3);
    int known = 0, unknown = 0;
    for (int t : task.target_truth_for_eval()) {
        if (task.partition.is_known(t)) ++known;
        else ++unknown;
    }
    CHECK(unknown >= 10 * known);
    CHECK(unknown <= 10 * known + spec.classes_unk_tgt);
}

TEST_CASE("generator validation rejects bad specs") {
    GeneratorSpec spec = small_spec();
    spec.d = 1;
    CHECK_THROWS_AS(make_open_set_task(spec, 1), ValidationError);
    spec = small_spec();
    spec.samples_per_class = 1;
    CHECK_THROWS_AS(make_open_set_task(spec, 1), ValidationError);
    spec = small_spec();
    spec.classes_known = 0;
    CHECK_THROWS_AS(make_open_set_task(spec, 1), ValidationError);
}

TEST_CASE("perturb with all-zero config is the identity") {
    RandomStream rng(5);
    Sample s{{1.5, -2.25, 0.75}, 2, Domain::Source};
    const Sample out = perturb(s, AugConfig{0.0, 0.0, 0.0}, rng);
    CHECK(out.features == s.features);
    CHECK(out.label == s.label);
    CHECK(out.domain == s.domain);
}

TEST_CASE("perturb is stochastic across draws and replayable by seed") {
    const AugConfig cfg{0.3, 0.1, 0.1};
    Sample s{{1.0, 2.0}, kUnlabeled, Domain::Target};
    RandomStream rng(42);
    const Sample a = perturb(s, cfg, rng);
    const Sample b = perturb(s, cfg, rng);
    CHECK(a.features != b.features);

    RandomStream replay(42);
    const Sample a2 = perturb(s, cfg, replay);
    CHECK(a.features == a2.features);
}

TEST_CASE("perturb leaves the input unmodified") {
    const AugConfig cfg{1.0, 0.5, 0.5};
    const Sample s{{3.0, 4.0}, 1, Domain::Source};
    const Vec before = s.features;
    RandomStream rng(9);
    (void)perturb(s, cfg, rng);
    CHECK(s.features == before);
}

TEST_CASE("epoch batches: sizes, permutation, replay") {
    RandomStream rng(3);
    const auto batches = epoch_batches(10, 3, rng);
    REQUIRE(batches.size() == 4);
    CHECK(batches[0].size() == 3);
    CHECK(batches[1].size() == 3);
    CHECK(batches[2].size() == 3);
    CHECK(batches[3].size() == 1);

    std::set<int> seen;
    for (const auto& b : batches) seen.insert(b.begin(), b.end());
    CHECK(seen.size() == 10);

    RandomStream rng_a(17), rng_b(17);
    CHECK(epoch_batches(25, 4, rng_a) == epoch_batches(25, 4, rng_b));

    RandomStream rng_c(1);
    const auto single = epoch_batches(6, 6, rng_c);
    REQUIRE(single.size() == 1);
    std::set<int> perm(single[0].begin(), single[0].end());
    CHECK(perm.size() == 6);

    RandomStream rng_d(1);
    CHECK(epoch_batches(0, 4, rng_d).empty());
}

TEST_CASE("task save/load round-trips losslessly") {
    GeneratorSpec spec = small_spec();
    spec.shift.rotation_deg = 15.0;
    spec.shift.translation = {0.25, -0.5};
    spec.shift.noise_std = 0.05;
    const OpenSetTask task = make_open_set_task(spec, 21);

    const std::string path =
        (std::filesystem::temp_directory_path() / "secc_task_roundtrip.txt").string();
    save_task(task, path);
    const OpenSetTask loaded = load_task(path);
    CHECK(tasks_equal(task, loaded));
    CHECK(loaded.partition.known == task.partition.known);
    CHECK(loaded.partition.unknown_source == task.partition.unknown_source);
    CHECK(loaded.partition.unknown_target == task.partition.unknown_target);
    CHECK(loaded.seed == task.seed);
    for (const Sample& s : loaded.target) CHECK(s.label == kUnlabeled);
    std::remove(path.c_str());
}
