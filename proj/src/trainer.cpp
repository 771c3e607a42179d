#include "secc/trainer.hpp"

#include "secc/errors.hpp"
#include "secc/textio.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

namespace secc {

namespace {

constexpr std::uint64_t kTagGap = 0x6A9;
constexpr std::uint64_t kTagKmeans = 0x41F;
constexpr std::uint64_t kTagInit = 0x171;
constexpr std::uint64_t kTagLoop = 0x700;
constexpr std::uint64_t kTagProj = 0x9D0;
constexpr std::uint64_t kTagRefresh = 0x5EF;

Matrix projection_matrix(int out_dim, int in_dim, std::uint64_t seed) {
    RandomStream rng(RandomStream::mix(seed, kTagProj));
    Matrix p(out_dim, in_dim);
    const double scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
    for (double& v : p.data) v = scale * rng.normal();
    return p;
}

FeatureTable clustering_features(const OpenSetTask& task, const TrainConfig& cfg) {
    FeatureTable table;
    table.rows.reserve(task.target.size());
    table.ids.reserve(task.target.size());
    if (cfg.cluster_projection_dim > 0) {
        const Matrix p = projection_matrix(cfg.cluster_projection_dim,
                                           static_cast<int>(task.target[0].features.size()), cfg.seed);
        for (size_t i = 0; i < task.target.size(); ++i) {
            table.rows.push_back(matvec(p, task.target[i].features));
            table.ids.push_back(static_cast<int>(i));
        }
    } else {
        for (size_t i = 0; i < task.target.size(); ++i) {
            table.rows.push_back(task.target[i].features);
            table.ids.push_back(static_cast<int>(i));
        }
    }
    return table;
}

void rebuild_inherent(TrainState& state, const FeatureTable& table) {
    state.centroid_cos = centroid_cosine_matrix(state.clusters);
    state.inherent.assign(table.rows.size(), Vec());
    for (size_t i = 0; i < table.rows.size(); ++i) {
        state.inherent[table.ids[i]] = inherent_distribution(table.rows[i], state.clusters);
    }
}

void sgd_update(TrainState& state, StudentParams& grads) {
    const TrainConfig& cfg = state.cfg;
    StudentParams& params = state.model.student;
    auto ps = student_tensors(params);
    auto gs = student_tensors(grads);
    if (cfg.momentum > 0.0) {
        if (!state.velocity) state.velocity = zeroed_like(params);
        auto vs = student_tensors(*state.velocity);
        for (size_t t = 0; t < ps.size(); ++t) {
            Vec& p = *ps[t].data;
            Vec& v = *vs[t].data;
            const Vec& g = *gs[t].data;
            for (size_t i = 0; i < p.size(); ++i) {
                v[i] = cfg.momentum * v[i] + g[i];
                p[i] -= cfg.lr * v[i];
            }
        }
    } else {
        for (size_t t = 0; t < ps.size(); ++t) {
            Vec& p = *ps[t].data;
            const Vec& g = *gs[t].data;
            for (size_t i = 0; i < p.size(); ++i) p[i] -= cfg.lr * g[i];
        }
    }
}

void check_finite(const LossBreakdown& b) {
    const std::pair<const char*, double> terms[] = {
        {"l_cse", b.l_cse},       {"l_se", b.l_se},   {"l_cde", b.l_cde},
        {"l_kl", b.l_kl},         {"l_constraint", b.l_constraint},
        {"l_g_jsd", b.l_g_jsd},   {"l_l_jsd", b.l_l_jsd},
        {"l_mim", b.l_mim},       {"total", b.total},
    };
    for (const auto& [name, value] : terms) {
        if (!std::isfinite(value)) {
            throw TrainAbortError(name, std::string("non-finite loss term: ") + name);
        }
    }
}

} // namespace

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw ValidationError("TrainConfig: lr must be positive");
    if (batch_size < 1) throw ValidationError("TrainConfig: batch_size must be >= 1");
    if (epochs < 0) throw ValidationError("TrainConfig: epochs must be >= 0");
    if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw ValidationError("TrainConfig: ema_decay must lie in [0, 1)");
    if (!(rho > 0.0)) throw ValidationError("TrainConfig: rho must be positive");
    if (K < 0) throw ValidationError("TrainConfig: K must be >= 0 (0 = auto)");
    if (K == 0 && !(1 <= k_auto_min && k_auto_min <= k_auto_max)) {
        throw ValidationError("TrainConfig: bad gap-statistic range");
    }
    if (refresh_interval < 0) throw ValidationError("TrainConfig: refresh_interval must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("TrainConfig: momentum must lie in [0, 1)");
    if (!(constraint_weight >= 0.0)) throw ValidationError("TrainConfig: constraint_weight must be >= 0");
    aug.validate();
}

int head_label(const ClassPartition& partition, int label) {
    const int nk = partition.n_known();
    for (int i = 0; i < nk; ++i) {
        if (partition.known[i] == label) return i;
    }
    return nk; // aggregated unknown class, trained from unknown-source samples
}

PredictMode resolve_eval_mode(const TrainConfig& cfg, const ClassPartition& partition) {
    switch (cfg.eval_mode) {
        case EvalModeChoice::Closed: return PredictMode::Closed;
        case EvalModeChoice::OpenNClass: return PredictMode::OpenNClass;
        case EvalModeChoice::OpenReject: return PredictMode::OpenReject;
        case EvalModeChoice::Auto: break;
    }
    if (partition.unknown_target.empty() && partition.unknown_source.empty()) {
        return PredictMode::Closed;
    }
    return partition.unknown_source.empty() ? PredictMode::OpenReject : PredictMode::OpenNClass;
}

TrainState setup(const OpenSetTask& task, const TrainConfig& cfg) {
    task.validate();
    cfg.validate();
    if (task.target.empty()) throw ValidationError("setup: task has no target samples");
    if (task.source.empty()) throw ValidationError("setup: task has no source samples");

    TrainState state;
    state.cfg = cfg;
    state.cfg.unknown_source_present = !task.partition.unknown_source.empty();

    const FeatureTable table = clustering_features(task, state.cfg);
    int K = cfg.K;
    if (K == 0) {
        K = select_k_gap(table, cfg.k_auto_min, std::min(cfg.k_auto_max, table.size()),
                         cfg.k_auto_refs, RandomStream::mix(cfg.seed, kTagGap));
    }
    state.clusters = kmeans(table, K, RandomStream::mix(cfg.seed, kTagKmeans),
                            kKmeansDefaultMaxIter, kKmeansDefaultTol, cfg.rho);
    rebuild_inherent(state, table);

    BackboneSpec spec = cfg.net;
    spec.input_dim = static_cast<int>(task.target[0].features.size());
    spec.N = task.partition.n_known() + (state.cfg.unknown_source_present ? 1 : 0);
    spec.K = K;
    spec.validate();

    state.model.spec = spec;
    state.model.student = init_student(spec, RandomStream::mix(cfg.seed, kTagInit));
    state.model.teacher = make_teacher(state.model.student);

    // Fixed input standardization from all features (labels unused): keeps
    // pre-activation and bias gradients on comparable scales.
    const int d = spec.input_dim;
    Vec mean(static_cast<size_t>(d), 0.0);
    Vec var(static_cast<size_t>(d), 0.0);
    const double n_all = static_cast<double>(task.source.size() + task.target.size());
    auto accumulate = [&](const std::vector<Sample>& samples) {
        for (const Sample& s : samples) {
            for (int j = 0; j < d; ++j) mean[j] += s.features[j];
        }
    };
    accumulate(task.source);
    accumulate(task.target);
    for (double& v : mean) v /= n_all;
    auto accumulate_var = [&](const std::vector<Sample>& samples) {
        for (const Sample& s : samples) {
            for (int j = 0; j < d; ++j) {
                const double diff = s.features[j] - mean[j];
                var[j] += diff * diff;
            }
        }
    };
    accumulate_var(task.source);
    accumulate_var(task.target);
    state.model.input_mean = mean;
    state.model.input_scale.assign(static_cast<size_t>(d), 1.0);
    for (int j = 0; j < d; ++j) {
        const double sd = std::sqrt(var[j] / n_all);
        state.model.input_scale[j] = sd > 1e-12 ? sd : 1.0;
    }

    state.rng = RandomStream(RandomStream::mix(cfg.seed, kTagLoop));
    return state;
}

BatchViews make_views(const OpenSetTask& task, const std::vector<int>& src_idx,
                      const std::vector<int>& tgt_idx, const AugConfig& aug, bool aug_source,
                      RandomStream& rng) {
    BatchViews views;
    views.source.reserve(src_idx.size());
    for (int idx : src_idx) {
        views.source.push_back(aug_source ? perturb(task.source[idx], aug, rng)
                                          : task.source[idx]);
    }
    views.student_view.reserve(tgt_idx.size());
    views.teacher_view.reserve(tgt_idx.size());
    for (int idx : tgt_idx) {
        views.student_view.push_back(perturb(task.target[idx], aug, rng));
        views.teacher_view.push_back(perturb(task.target[idx], aug, rng));
    }
    return views;
}

LossBreakdown evaluate_batch(const TrainState& state, const OpenSetTask& task,
                             const std::vector<int>& src_idx, const std::vector<int>& tgt_idx,
                             const BatchViews& views, StudentParams* grads) {
    const TrainConfig& cfg = state.cfg;
    const BackboneSpec& spec = state.model.spec;
    const StudentParams& student = state.model.student;
    if (src_idx.empty()) throw ValidationError("evaluate_batch: empty source batch");

    LossBreakdown out;
    const double n_src = static_cast<double>(src_idx.size());

    // Source pathway: supervised cross entropy.
    for (size_t si = 0; si < src_idx.size(); ++si) {
        const Sample& s = views.source[si];
        const StudentCache cache = forward_student_cache(
            student, spec, cfg.rho, state.model.standardize(s.features), false);
        const int y = head_label(task.partition, s.label);
        out.l_cse += cross_entropy(cache.shared.p_cls, y) / n_src;
        if (grads) {
            Vec d_p = cross_entropy_grad_p(cache.shared.p_cls, y);
            for (double& v : d_p) v /= n_src;
            StudentAdjoints adj;
            adj.d_p_cls = &d_p;
            student_backward(student, spec, cfg.rho, cache, adj, *grads);
        }
    }

    const bool any_target = cfg.use_se || cfg.use_cde || cfg.use_kl || cfg.use_mim;
    if (!any_target || tgt_idx.empty()) {
        total_loss(out, cfg.beta);
        return out;
    }
    const int n = static_cast<int>(tgt_idx.size());
    if (cfg.use_mim && n < 2) throw MiBatchTooSmallError();

    // Target pathway: forward every student view once, then accumulate the
    // adjoints of each active loss before a single backward per sample.
    std::vector<StudentCache> caches;
    caches.reserve(tgt_idx.size());
    for (const Sample& s : views.student_view) {
        caches.push_back(
            forward_student_cache(student, spec, cfg.rho, state.model.standardize(s.features), true));
    }

    std::vector<Vec> d_p_cls(tgt_idx.size(), Vec(static_cast<size_t>(spec.N), 0.0));
    std::vector<Vec> d_p_clu(tgt_idx.size(), Vec(static_cast<size_t>(spec.K), 0.0));
    std::vector<Vec> d_global(tgt_idx.size(), Vec(static_cast<size_t>(spec.D1), 0.0));
    std::vector<Matrix> d_map(tgt_idx.size(), Matrix(spec.map_cells(), spec.D0, 0.0));
    bool mim_used = false;

    if (cfg.use_se) {
        for (int j = 0; j < n; ++j) {
            const Vec p_t = forward_teacher(state.model.teacher, spec,
                                            state.model.standardize(views.teacher_view[j].features));
            const Vec& p_s = caches[j].shared.p_cls;
            out.l_se += self_ensembling_loss(p_s, p_t) / n;
            if (grads) axpy(1.0 / n, self_ensembling_grad_ps(p_s, p_t), d_p_cls[j]);
        }
    }

    if (cfg.use_cde) {
        for (int j = 0; j < n; ++j) {
            const Vec& p_s = caches[j].shared.p_cls;
            out.l_cde += conditional_entropy(p_s) / n;
            if (grads) axpy(1.0 / n, conditional_entropy_grad(p_s), d_p_cls[j]);
        }
    }

    if (cfg.use_kl) {
        for (int j = 0; j < n; ++j) {
            const Vec& p_tilde = state.inherent[tgt_idx[j]];
            const Vec& p_clu = caches[j].p_clu;
            out.l_kl += kl_cluster_loss(p_tilde, p_clu) / n;
            if (grads) axpy(1.0 / n, kl_cluster_grad_p(p_tilde, p_clu), d_p_clu[j]);
        }
        out.l_constraint =
            cfg.constraint_weight * inter_cluster_constraint(student.cluster_w, state.centroid_cos);
        if (grads) {
            const Matrix gw = inter_cluster_constraint_grad_w(student.cluster_w, state.centroid_cos);
            for (size_t i = 0; i < gw.data.size(); ++i) {
                grads->cluster_w.data[i] += cfg.constraint_weight * gw.data[i];
            }
        }
    }

    if (cfg.use_mim) {
        mim_used = true;
        // Negatives pair each sample's distributions with the features of the
        // next sample in the batch (cyclic shift).
        std::vector<double> pos_g(tgt_idx.size()), neg_g(tgt_idx.size());
        std::vector<Vec> pos_l(tgt_idx.size()), neg_l(tgt_idx.size());
        std::vector<MlpCache> pos_g_cache(tgt_idx.size()), neg_g_cache(tgt_idx.size());
        std::vector<LocalDiscCache> pos_l_cache(tgt_idx.size()), neg_l_cache(tgt_idx.size());
        for (int j = 0; j < n; ++j) {
            const int h = (j + 1) % n;
            pos_g[j] = mi_global_disc(student.gdisc, caches[j].global_feat, caches[j].shared.p_cls,
                                      caches[j].p_clu, grads ? &pos_g_cache[j] : nullptr);
            neg_g[j] = mi_global_disc(student.gdisc, caches[h].global_feat, caches[j].shared.p_cls,
                                      caches[j].p_clu, grads ? &neg_g_cache[j] : nullptr);
            pos_l[j] = mi_local_disc(student.ldisc, caches[j].shared.feature_map,
                                     caches[j].shared.p_cls, caches[j].p_clu,
                                     grads ? &pos_l_cache[j] : nullptr);
            neg_l[j] = mi_local_disc(student.ldisc, caches[h].shared.feature_map,
                                     caches[j].shared.p_cls, caches[j].p_clu,
                                     grads ? &neg_l_cache[j] : nullptr);
        }
        out.l_g_jsd = mi_global_objective(pos_g, neg_g);
        out.l_l_jsd = mi_local_objective(pos_l, neg_l);
        out.l_mim = mim_objective(out.l_g_jsd, out.l_l_jsd, cfg.alpha);

        if (grads) {
            // The MIM block enters the total as -beta * (alpha*l_g + l_l).
            const double coef_g = -cfg.beta * cfg.alpha;
            const double coef_l = -cfg.beta;
            Vec dg_pos, dg_neg;
            mi_global_grads(pos_g, neg_g, dg_pos, dg_neg);
            std::vector<Vec> dl_pos, dl_neg;
            mi_local_grads(pos_l, neg_l, dl_pos, dl_neg);
            for (int j = 0; j < n; ++j) {
                const int h = (j + 1) % n;
                Vec d_in;
                mi_global_disc_backward(student.gdisc, pos_g_cache[j], coef_g * dg_pos[j],
                                        grads->gdisc, d_in);
                for (int i = 0; i < spec.D1; ++i) d_global[j][i] += d_in[i];
                for (int i = 0; i < spec.N; ++i) d_p_cls[j][i] += d_in[spec.D1 + i];
                for (int i = 0; i < spec.K; ++i) d_p_clu[j][i] += d_in[spec.D1 + spec.N + i];

                mi_global_disc_backward(student.gdisc, neg_g_cache[j], coef_g * dg_neg[j],
                                        grads->gdisc, d_in);
                for (int i = 0; i < spec.D1; ++i) d_global[h][i] += d_in[i];
                for (int i = 0; i < spec.N; ++i) d_p_cls[j][i] += d_in[spec.D1 + i];
                for (int i = 0; i < spec.K; ++i) d_p_clu[j][i] += d_in[spec.D1 + spec.N + i];

                Vec d_scores = dl_pos[j];
                for (double& v : d_scores) v *= coef_l;
                mi_local_disc_backward(student.ldisc, spec, pos_l_cache[j], d_scores, grads->ldisc,
                                       d_map[j], d_p_cls[j], d_p_clu[j]);

                d_scores = dl_neg[j];
                for (double& v : d_scores) v *= coef_l;
                mi_local_disc_backward(student.ldisc, spec, neg_l_cache[j], d_scores, grads->ldisc,
                                       d_map[h], d_p_cls[j], d_p_clu[j]);
            }
        }
    }

    if (grads) {
        const bool kl_or_mim = cfg.use_kl || mim_used;
        for (int j = 0; j < n; ++j) {
            StudentAdjoints adj;
            adj.d_p_cls = &d_p_cls[j];
            if (kl_or_mim) adj.d_p_clu = &d_p_clu[j];
            if (mim_used) {
                adj.d_global = &d_global[j];
                adj.d_map = &d_map[j];
            }
            student_backward(student, spec, cfg.rho, caches[j], adj, *grads);
        }
    }

    total_loss(out, cfg.beta);
    return out;
}

LossBreakdown train_step(TrainState& state, const OpenSetTask& task,
                         const std::vector<int>& src_idx, const std::vector<int>& tgt_idx) {
    const TrainConfig& cfg = state.cfg;
    const bool any_target = cfg.use_se || cfg.use_cde || cfg.use_kl || cfg.use_mim;
    BatchViews views = make_views(task, src_idx, any_target ? tgt_idx : std::vector<int>{},
                                  cfg.aug, cfg.aug_source, state.rng);

    StudentParams grads = zeroed_like(state.model.student);
    const LossBreakdown breakdown = evaluate_batch(state, task, src_idx, tgt_idx, views, &grads);
    check_finite(breakdown);

    sgd_update(state, grads);
    ema_update(state.model.teacher, state.model.student, cfg.ema_decay);

    state.step += 1;
    state.history.push_back(HistoryEntry{state.step, breakdown, std::nullopt});
    return breakdown;
}

std::pair<TrainState, MetricsReport> train(const OpenSetTask& task, const TrainConfig& cfg) {
    TrainState state = setup(task, cfg);
    const PredictMode mode = resolve_eval_mode(state.cfg, task.partition);

    MetricsReport report =
        evaluate_model(state.model, task, mode, state.cfg.reject_threshold);

    const int n_src = static_cast<int>(task.source.size());
    const int n_tgt = static_cast<int>(task.target.size());
    for (int epoch = 0; epoch < state.cfg.epochs; ++epoch) {
        const auto src_batches = epoch_batches(n_src, state.cfg.batch_size, state.rng);
        const auto tgt_batches = epoch_batches(n_tgt, state.cfg.batch_size, state.rng);
        const size_t steps = std::max(src_batches.size(), tgt_batches.size());
        for (size_t s = 0; s < steps; ++s) {
            train_step(state, task, src_batches[s % src_batches.size()],
                       tgt_batches[s % tgt_batches.size()]);
        }

        if (state.cfg.refresh_interval > 0 && (epoch + 1) % state.cfg.refresh_interval == 0 &&
            epoch + 1 < state.cfg.epochs) {
            FeatureTable learnt;
            learnt.rows.reserve(task.target.size());
            learnt.ids.reserve(task.target.size());
            for (size_t i = 0; i < task.target.size(); ++i) {
                learnt.rows.push_back(
                    forward_shared(state.model.student.shared, state.model.spec,
                                   state.model.standardize(task.target[i].features))
                        .pooled);
                learnt.ids.push_back(static_cast<int>(i));
            }
            state.clusters = refresh_clusters(state.clusters, learnt,
                                              RandomStream::mix(state.cfg.seed, RandomStream::mix(kTagRefresh, epoch)));
            rebuild_inherent(state, learnt);
        }

        report = evaluate_model(state.model, task, mode, state.cfg.reject_threshold);
        if (!state.history.empty()) state.history.back().metrics = report;

        if (state.cfg.checkpoint_interval > 0 && !state.cfg.checkpoint_dir.empty() &&
            (epoch + 1) % state.cfg.checkpoint_interval == 0) {
            std::filesystem::create_directories(state.cfg.checkpoint_dir);
            save_checkpoint(state.model.student, state.model.teacher,
                            state.cfg.checkpoint_dir + "/checkpoint_epoch" + std::to_string(epoch + 1) + ".txt");
        }
    }
    return {std::move(state), report};
}

std::vector<std::pair<std::string, TrainConfig>> ablation_configs(const TrainConfig& base) {
    base.validate();
    std::vector<std::pair<std::string, TrainConfig>> out;
    TrainConfig se = base;
    se.use_se = true;
    se.use_cde = false;
    se.use_kl = false;
    se.use_mim = false;
    out.emplace_back("SE", se);

    TrainConfig ce = se;
    ce.use_cde = true;
    out.emplace_back("+CE", ce);

    TrainConfig kl = ce;
    kl.use_kl = true;
    out.emplace_back("+KL", kl);

    TrainConfig full = kl;
    full.use_mim = true;
    out.emplace_back("SE-CC", full);
    return out;
}

TrainConfig source_only_config(const TrainConfig& base) {
    TrainConfig cfg = base;
    cfg.use_se = false;
    cfg.use_cde = false;
    cfg.use_kl = false;
    cfg.use_mim = false;
    return cfg;
}

std::string history_to_csv(const std::vector<HistoryEntry>& history) {
    std::ostringstream out;
    out << "step,l_cse,l_se,l_cde,l_kl,l_constraint,l_g_jsd,l_l_jsd,l_mim,total\n";
    for (const HistoryEntry& h : history) {
        const LossBreakdown& b = h.loss;
        out << h.step << ',' << fmt17(b.l_cse) << ',' << fmt17(b.l_se) << ',' << fmt17(b.l_cde)
            << ',' << fmt17(b.l_kl) << ',' << fmt17(b.l_constraint) << ',' << fmt17(b.l_g_jsd)
            << ',' << fmt17(b.l_l_jsd) << ',' << fmt17(b.l_mim) << ',' << fmt17(b.total) << '\n';
    }
    return out.str();
}

} // namespace secc
