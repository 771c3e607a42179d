#include "secc/network.hpp"

#include "secc/errors.hpp"
#include "secc/random.hpp"
#include "secc/textio.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace secc {

namespace {

double ramp(double x) { return x > 0.0 ? x : 0.0; }

Vec affine_forward(const Affine& layer, const Vec& x) {
    Vec y = matvec(layer.w, x);
    for (size_t i = 0; i < y.size(); ++i) y[i] += layer.b[i];
    return y;
}

Affine make_affine(int out_dim, int in_dim, RandomStream& rng) {
    Affine a;
    a.w = Matrix(out_dim, in_dim);
    a.b.assign(static_cast<size_t>(out_dim), 0.0);
    const double bound = std::sqrt(6.0 / (in_dim + out_dim));
    for (double& v : a.w.data) v = rng.uniform(-bound, bound);
    // Small nonzero biases keep pre-activations off the exact ramp kink even
    // when a whole upstream layer goes dead for some input.
    for (double& v : a.b) v = rng.uniform(-0.05, 0.05);
    return a;
}

// Shared three-layer scorer used by both discriminators.
double scorer_forward(const std::vector<Affine>& layers, Vec in, MlpCache* cache) {
    if (cache) cache->in = in;
    Vec h = std::move(in);
    for (size_t l = 0; l + 1 < layers.size(); ++l) {
        Vec pre = affine_forward(layers[l], h);
        if (cache) cache->pre.push_back(pre);
        for (double& v : pre) v = ramp(v);
        if (cache) cache->act.push_back(pre);
        h = std::move(pre);
    }
    const Vec out = affine_forward(layers.back(), h);
    if (cache) cache->out = out[0];
    return out[0];
}

void scorer_backward(const std::vector<Affine>& layers, const MlpCache& cache, double d_out,
                     std::vector<Affine>& grads, Vec& d_in) {
    const size_t last = layers.size() - 1;
    Vec d_act(static_cast<size_t>(layers[last].w.cols), 0.0);
    // Output layer.
    {
        const Vec& prev = cache.act.back();
        for (int c = 0; c < layers[last].w.cols; ++c) {
            grads[last].w.at(0, c) += d_out * prev[c];
            d_act[c] = d_out * layers[last].w.at(0, c);
        }
        grads[last].b[0] += d_out;
    }
    for (int l = static_cast<int>(last) - 1; l >= 0; --l) {
        Vec d_pre = d_act;
        for (size_t i = 0; i < d_pre.size(); ++i) {
            if (cache.pre[l][i] <= 0.0) d_pre[i] = 0.0;
        }
        const Vec& prev = (l == 0) ? cache.in : cache.act[l - 1];
        outer_acc(grads[l].w, d_pre, prev);
        axpy(1.0, d_pre, grads[l].b);
        d_act = matvec_t(layers[l].w, d_pre);
    }
    d_in = std::move(d_act);
}

Vec concat3(const Vec& a, const Vec& b, const Vec& c) {
    Vec out;
    out.reserve(a.size() + b.size() + c.size());
    out.insert(out.end(), a.begin(), a.end());
    out.insert(out.end(), b.begin(), b.end());
    out.insert(out.end(), c.begin(), c.end());
    return out;
}

} // namespace

void BackboneSpec::validate() const {
    if (input_dim < 1) throw ValidationError("BackboneSpec: input_dim must be >= 1");
    if (hidden_widths.empty()) throw ValidationError("BackboneSpec: at least one hidden layer required");
    for (int w : hidden_widths) {
        if (w < 1) throw ValidationError("BackboneSpec: hidden widths must be >= 1");
    }
    if (H < 1 || D0 < 1 || M < 1 || D1 < 1 || disc_hidden < 1) {
        throw ValidationError("BackboneSpec: H, D0, M, D1, disc_hidden must be >= 1");
    }
    if (hidden_widths.back() != H * H * D0) {
        throw ValidationError("BackboneSpec: last hidden width must equal H*H*D0");
    }
    if (N < 1) throw ValidationError("BackboneSpec: N must be >= 1");
    if (K < 1) throw ValidationError("BackboneSpec: K must be >= 1");
}

SharedCache forward_shared(const SharedParams& params, const BackboneSpec& spec, const Vec& x) {
    if (static_cast<int>(x.size()) != spec.input_dim) {
        throw ValidationError("forward: input dimension mismatch");
    }
    SharedCache cache;
    cache.input = x;
    Vec h = x;
    for (const Affine& layer : params.hidden) {
        Vec pre = affine_forward(layer, h);
        cache.pre.push_back(pre);
        for (double& v : pre) v = ramp(v);
        cache.act.push_back(pre);
        h = pre;
    }

    const int cells = spec.map_cells();
    cache.feature_map = Matrix(cells, spec.D0);
    for (int r = 0; r < cells; ++r) {
        for (int c = 0; c < spec.D0; ++c) cache.feature_map.at(r, c) = h[static_cast<size_t>(r) * spec.D0 + c];
    }

    cache.avg.assign(static_cast<size_t>(spec.D0), 0.0);
    for (int r = 0; r < cells; ++r) {
        for (int c = 0; c < spec.D0; ++c) cache.avg[c] += cache.feature_map.at(r, c);
    }
    for (double& v : cache.avg) v /= cells;

    cache.pooled = affine_forward(params.pool_proj, cache.avg);
    cache.logits = affine_forward(params.classifier, cache.pooled);
    cache.p_cls = softmax(cache.logits);
    return cache;
}

Vec cluster_branch(const Vec& pooled, const Matrix& w, double rho) {
    if (static_cast<int>(pooled.size()) != w.cols) throw ValidationError("cluster_branch: dimension mismatch");
    if (norm(pooled) == 0.0) throw ValidationError("cluster_branch: zero pooled vector");
    Vec scores(static_cast<size_t>(w.rows));
    for (int k = 0; k < w.rows; ++k) {
        if (norm(w.row_ptr(k), w.cols) == 0.0) throw ValidationError("cluster_branch: zero W row");
        scores[k] = rho * cosine(pooled.data(), w.row_ptr(k), w.cols);
    }
    return softmax(scores);
}

void cluster_branch_backward(const Vec& pooled, const Matrix& w, double rho, const Vec& p,
                             const Vec& d_p, Vec& d_pooled_acc, Matrix& d_w_acc) {
    const int K = w.rows;
    const int M = w.cols;
    const Vec d_s = softmax_vjp(p, d_p);
    const double nx = norm(pooled);
    for (int k = 0; k < K; ++k) {
        const double* wk = w.row_ptr(k);
        const double nw = norm(wk, M);
        const double c = dot(pooled.data(), wk, M) / (nx * nw);
        const double coef = d_s[k] * rho;
        double* gw = d_w_acc.row_ptr(k);
        for (int m = 0; m < M; ++m) {
            d_pooled_acc[m] += coef * (wk[m] / (nx * nw) - c * pooled[m] / (nx * nx));
            gw[m] += coef * (pooled[m] / (nx * nw) - c * wk[m] / (nw * nw));
        }
    }
}

Vec mi_global_encode(const Matrix& feature_map, const Conv3x3& conv, const BackboneSpec& spec) {
    if (feature_map.rows != spec.map_cells() || feature_map.cols != spec.D0) {
        throw ValidationError("mi_global_encode: feature map shape mismatch");
    }
    const int H = spec.H;
    Vec g(static_cast<size_t>(spec.D1), 0.0);
    for (int f = 0; f < spec.D1; ++f) {
        double acc = 0.0;
        for (int i = 0; i < H; ++i) {
            for (int j = 0; j < H; ++j) {
                double v = conv.b[f];
                for (int c = 0; c < spec.D0; ++c) {
                    for (int ky = 0; ky < 3; ++ky) {
                        const int si = i + ky - 1;
                        if (si < 0 || si >= H) continue;
                        for (int kx = 0; kx < 3; ++kx) {
                            const int sj = j + kx - 1;
                            if (sj < 0 || sj >= H) continue;
                            v += conv.w.at(f, c * 9 + ky * 3 + kx) * feature_map.at(si * H + sj, c);
                        }
                    }
                }
                acc += v;
            }
        }
        g[f] = acc / spec.map_cells();
    }
    return g;
}

StudentCache forward_student_cache(const StudentParams& params, const BackboneSpec& spec,
                                   double rho, const Vec& x, bool with_extras) {
    StudentCache cache;
    cache.shared = forward_shared(params.shared, spec, x);
    if (with_extras) {
        cache.has_extras = true;
        cache.p_clu = cluster_branch(cache.shared.pooled, params.cluster_w, rho);
        cache.global_feat = mi_global_encode(cache.shared.feature_map, params.mi_conv, spec);
    }
    return cache;
}

StudentOutputs forward_student(const StudentParams& params, const BackboneSpec& spec, double rho,
                               const Vec& x) {
    StudentCache cache = forward_student_cache(params, spec, rho, x, true);
    StudentOutputs out;
    out.feature_map = std::move(cache.shared.feature_map);
    out.pooled = std::move(cache.shared.pooled);
    out.p_cls = std::move(cache.shared.p_cls);
    out.p_clu = std::move(cache.p_clu);
    out.global_feat = std::move(cache.global_feat);
    return out;
}

Vec forward_teacher(const TeacherParams& params, const BackboneSpec& spec, const Vec& x) {
    return forward_shared(params.shared, spec, x).p_cls;
}

double mi_global_disc(const std::vector<Affine>& layers, const Vec& g, const Vec& p_cls,
                      const Vec& p_clu, MlpCache* cache) {
    Vec in = concat3(g, p_cls, p_clu);
    if (static_cast<int>(in.size()) != layers[0].w.cols) {
        throw ValidationError("mi_global_disc: input dimension mismatch");
    }
    return scorer_forward(layers, std::move(in), cache);
}

Vec mi_local_disc(const std::vector<Affine>& layers, const Matrix& feature_map, const Vec& p_cls,
                  const Vec& p_clu, LocalDiscCache* cache) {
    Vec scores(static_cast<size_t>(feature_map.rows));
    for (int r = 0; r < feature_map.rows; ++r) {
        Vec in = concat3(feature_map.row(r), p_cls, p_clu);
        if (static_cast<int>(in.size()) != layers[0].w.cols) {
            throw ValidationError("mi_local_disc: input dimension mismatch");
        }
        MlpCache local;
        scores[r] = scorer_forward(layers, std::move(in), cache ? &local : nullptr);
        if (cache) cache->loc.push_back(std::move(local));
    }
    return scores;
}

void mi_global_disc_backward(const std::vector<Affine>& layers, const MlpCache& cache, double d_out,
                             std::vector<Affine>& grads, Vec& d_in) {
    scorer_backward(layers, cache, d_out, grads, d_in);
}

void mi_local_disc_backward(const std::vector<Affine>& layers, const BackboneSpec& spec,
                            const LocalDiscCache& cache, const Vec& d_scores,
                            std::vector<Affine>& grads, Matrix& d_map_acc, Vec& d_p_cls_acc,
                            Vec& d_p_clu_acc) {
    for (int r = 0; r < static_cast<int>(cache.loc.size()); ++r) {
        if (d_scores[r] == 0.0) continue;
        Vec d_in;
        scorer_backward(layers, cache.loc[r], d_scores[r], grads, d_in);
        for (int c = 0; c < spec.D0; ++c) d_map_acc.at(r, c) += d_in[c];
        for (int i = 0; i < spec.N; ++i) d_p_cls_acc[i] += d_in[spec.D0 + i];
        for (int k = 0; k < spec.K; ++k) d_p_clu_acc[k] += d_in[spec.D0 + spec.N + k];
    }
}

void student_backward(const StudentParams& params, const BackboneSpec& spec, double rho,
                      const StudentCache& cache, const StudentAdjoints& adj, StudentParams& grads) {
    const int cells = spec.map_cells();
    Vec d_pooled(static_cast<size_t>(spec.M), 0.0);
    Matrix d_map(cells, spec.D0, 0.0);
    if (adj.d_map) {
        for (size_t i = 0; i < d_map.data.size(); ++i) d_map.data[i] = adj.d_map->data[i];
    }

    if (adj.d_p_cls) {
        const Vec d_logits = softmax_vjp(cache.shared.p_cls, *adj.d_p_cls);
        outer_acc(grads.shared.classifier.w, d_logits, cache.shared.pooled);
        axpy(1.0, d_logits, grads.shared.classifier.b);
        const Vec back = matvec_t(params.shared.classifier.w, d_logits);
        axpy(1.0, back, d_pooled);
    }

    if (adj.d_p_clu) {
        cluster_branch_backward(cache.shared.pooled, params.cluster_w, rho, cache.p_clu,
                                *adj.d_p_clu, d_pooled, grads.cluster_w);
    }

    if (adj.d_global) {
        // Average pooling spreads the adjoint uniformly over locations, then
        // the convolution transposes back onto the map.
        const int H = spec.H;
        for (int f = 0; f < spec.D1; ++f) {
            const double d_cell = (*adj.d_global)[f] / cells;
            if (d_cell == 0.0) continue;
            for (int i = 0; i < H; ++i) {
                for (int j = 0; j < H; ++j) {
                    grads.mi_conv.b[f] += d_cell;
                    for (int c = 0; c < spec.D0; ++c) {
                        for (int ky = 0; ky < 3; ++ky) {
                            const int si = i + ky - 1;
                            if (si < 0 || si >= H) continue;
                            for (int kx = 0; kx < 3; ++kx) {
                                const int sj = j + kx - 1;
                                if (sj < 0 || sj >= H) continue;
                                const int col = c * 9 + ky * 3 + kx;
                                grads.mi_conv.w.at(f, col) += d_cell * cache.shared.feature_map.at(si * H + sj, c);
                                d_map.at(si * H + sj, c) += d_cell * params.mi_conv.w.at(f, col);
                            }
                        }
                    }
                }
            }
        }
    }

    // Pooled projection and spatial average.
    outer_acc(grads.shared.pool_proj.w, d_pooled, cache.shared.avg);
    axpy(1.0, d_pooled, grads.shared.pool_proj.b);
    const Vec d_avg = matvec_t(params.shared.pool_proj.w, d_pooled);
    for (int r = 0; r < cells; ++r) {
        for (int c = 0; c < spec.D0; ++c) d_map.at(r, c) += d_avg[c] / cells;
    }

    // Un-reshape and walk the MLP stack backwards.
    const int n_layers = static_cast<int>(params.shared.hidden.size());
    Vec d_act(static_cast<size_t>(spec.hidden_widths.back()), 0.0);
    for (int r = 0; r < cells; ++r) {
        for (int c = 0; c < spec.D0; ++c) d_act[static_cast<size_t>(r) * spec.D0 + c] = d_map.at(r, c);
    }
    for (int l = n_layers - 1; l >= 0; --l) {
        Vec d_pre = d_act;
        for (size_t i = 0; i < d_pre.size(); ++i) {
            if (cache.shared.pre[l][i] <= 0.0) d_pre[i] = 0.0;
        }
        const Vec& prev = (l == 0) ? cache.shared.input : cache.shared.act[l - 1];
        outer_acc(grads.shared.hidden[l].w, d_pre, prev);
        axpy(1.0, d_pre, grads.shared.hidden[l].b);
        if (l > 0) d_act = matvec_t(params.shared.hidden[l].w, d_pre);
    }
}

StudentParams init_student(const BackboneSpec& spec, std::uint64_t seed) {
    spec.validate();
    RandomStream root(RandomStream::mix(seed, 0x9E77));
    StudentParams p;
    int in_dim = spec.input_dim;
    int tag = 0;
    for (int w : spec.hidden_widths) {
        RandomStream rng = root.substream(tag++);
        p.shared.hidden.push_back(make_affine(w, in_dim, rng));
        in_dim = w;
    }
    {
        RandomStream rng = root.substream(tag++);
        p.shared.pool_proj = make_affine(spec.M, spec.D0, rng);
    }
    {
        RandomStream rng = root.substream(tag++);
        p.shared.classifier = make_affine(spec.N, spec.M, rng);
    }
    {
        RandomStream rng = root.substream(tag++);
        p.cluster_w = Matrix(spec.K, spec.M);
        const double bound = std::sqrt(6.0 / (spec.M + spec.K));
        for (double& v : p.cluster_w.data) v = rng.uniform(-bound, bound);
    }
    {
        RandomStream rng = root.substream(tag++);
        p.mi_conv.w = Matrix(spec.D1, spec.D0 * 9);
        p.mi_conv.b.assign(static_cast<size_t>(spec.D1), 0.0);
        for (double& v : p.mi_conv.b) v = rng.uniform(-0.05, 0.05);
        const double bound = std::sqrt(6.0 / (spec.D0 * 9 + spec.D1));
        for (double& v : p.mi_conv.w.data) v = rng.uniform(-bound, bound);
    }
    const int g_in = spec.D1 + spec.N + spec.K;
    const int l_in = spec.D0 + spec.N + spec.K;
    {
        RandomStream rng = root.substream(tag++);
        p.gdisc.push_back(make_affine(spec.disc_hidden, g_in, rng));
        p.gdisc.push_back(make_affine(spec.disc_hidden, spec.disc_hidden, rng));
        p.gdisc.push_back(make_affine(1, spec.disc_hidden, rng));
    }
    {
        RandomStream rng = root.substream(tag++);
        p.ldisc.push_back(make_affine(spec.disc_hidden, l_in, rng));
        p.ldisc.push_back(make_affine(spec.disc_hidden, spec.disc_hidden, rng));
        p.ldisc.push_back(make_affine(1, spec.disc_hidden, rng));
    }
    return p;
}

TeacherParams make_teacher(const StudentParams& student) { return TeacherParams{student.shared}; }

namespace {

void zero_affines(std::vector<Affine>& layers) {
    for (Affine& a : layers) {
        a.w.fill(0.0);
        std::fill(a.b.begin(), a.b.end(), 0.0);
    }
}

} // namespace

StudentParams zeroed_like(const StudentParams& params) {
    StudentParams g = params;
    zero_affines(g.shared.hidden);
    g.shared.pool_proj.w.fill(0.0);
    std::fill(g.shared.pool_proj.b.begin(), g.shared.pool_proj.b.end(), 0.0);
    g.shared.classifier.w.fill(0.0);
    std::fill(g.shared.classifier.b.begin(), g.shared.classifier.b.end(), 0.0);
    g.cluster_w.fill(0.0);
    g.mi_conv.w.fill(0.0);
    std::fill(g.mi_conv.b.begin(), g.mi_conv.b.end(), 0.0);
    zero_affines(g.gdisc);
    zero_affines(g.ldisc);
    return g;
}

namespace {

std::vector<TensorRef> shared_tensors(SharedParams& p, const std::string& prefix) {
    std::vector<TensorRef> out;
    for (size_t l = 0; l < p.hidden.size(); ++l) {
        const std::string base = prefix + "hidden" + std::to_string(l);
        out.push_back({base + ".w", &p.hidden[l].w.data, {p.hidden[l].w.rows, p.hidden[l].w.cols}});
        out.push_back({base + ".b", &p.hidden[l].b, {static_cast<int>(p.hidden[l].b.size())}});
    }
    out.push_back({prefix + "pool_proj.w", &p.pool_proj.w.data, {p.pool_proj.w.rows, p.pool_proj.w.cols}});
    out.push_back({prefix + "pool_proj.b", &p.pool_proj.b, {static_cast<int>(p.pool_proj.b.size())}});
    out.push_back({prefix + "classifier.w", &p.classifier.w.data, {p.classifier.w.rows, p.classifier.w.cols}});
    out.push_back({prefix + "classifier.b", &p.classifier.b, {static_cast<int>(p.classifier.b.size())}});
    return out;
}

void append_disc(std::vector<TensorRef>& out, std::vector<Affine>& layers, const std::string& prefix) {
    for (size_t l = 0; l < layers.size(); ++l) {
        const std::string base = prefix + std::to_string(l);
        out.push_back({base + ".w", &layers[l].w.data, {layers[l].w.rows, layers[l].w.cols}});
        out.push_back({base + ".b", &layers[l].b, {static_cast<int>(layers[l].b.size())}});
    }
}

} // namespace

std::vector<TensorRef> student_tensors(StudentParams& p) {
    std::vector<TensorRef> out = shared_tensors(p.shared, "student.");
    out.push_back({"student.cluster_w", &p.cluster_w.data, {p.cluster_w.rows, p.cluster_w.cols}});
    out.push_back({"student.mi_conv.w", &p.mi_conv.w.data, {p.mi_conv.w.rows, p.mi_conv.w.cols}});
    out.push_back({"student.mi_conv.b", &p.mi_conv.b, {static_cast<int>(p.mi_conv.b.size())}});
    append_disc(out, p.gdisc, "student.gdisc");
    append_disc(out, p.ldisc, "student.ldisc");
    return out;
}

std::vector<TensorRef> teacher_tensors(TeacherParams& p) {
    return shared_tensors(p.shared, "teacher.");
}

namespace {

void ema_vec(Vec& t, const Vec& s, double decay) {
    if (t.size() != s.size()) throw ValidationError("ema_update: shape mismatch");
    for (size_t j = 0; j < t.size(); ++j) t[j] = decay * t[j] + (1.0 - decay) * s[j];
}

void ema_affine(Affine& t, const Affine& s, double decay) {
    if (!t.w.same_shape(s.w)) throw ValidationError("ema_update: shape mismatch");
    ema_vec(t.w.data, s.w.data, decay);
    ema_vec(t.b, s.b, decay);
}

} // namespace

void ema_update(TeacherParams& teacher, const StudentParams& student, double decay) {
    if (!(decay >= 0.0 && decay < 1.0)) throw ValidationError("ema_update: decay must lie in [0, 1)");
    if (teacher.shared.hidden.size() != student.shared.hidden.size()) {
        throw ValidationError("ema_update: layer count mismatch");
    }
    for (size_t l = 0; l < teacher.shared.hidden.size(); ++l) {
        ema_affine(teacher.shared.hidden[l], student.shared.hidden[l], decay);
    }
    ema_affine(teacher.shared.pool_proj, student.shared.pool_proj, decay);
    ema_affine(teacher.shared.classifier, student.shared.classifier, decay);
}

void save_checkpoint(StudentParams& student, TeacherParams& teacher, const std::string& path) {
    std::ostringstream out;
    auto emit = [&out](const std::vector<TensorRef>& tensors) {
        for (const TensorRef& t : tensors) {
            out << t.name << ' ' << t.shape.size();
            for (int d : t.shape) out << ' ' << d;
            for (double v : *t.data) out << ' ' << fmt17(v);
            out << '\n';
        }
    };
    emit(student_tensors(student));
    emit(teacher_tensors(teacher));
    write_text_file(path, out.str());
}

void load_checkpoint(StudentParams& student, TeacherParams& teacher, const BackboneSpec& spec,
                     const std::string& path) {
    spec.validate();
    std::map<std::string, TensorRef> by_name;
    for (TensorRef& t : student_tensors(student)) by_name.emplace(t.name, t);
    for (TensorRef& t : teacher_tensors(teacher)) by_name.emplace(t.name, t);

    std::istringstream in(read_text_file(path));
    std::string line;
    size_t loaded = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string name;
        size_t ndim = 0;
        if (!(row >> name >> ndim)) throw ValidationError("checkpoint: malformed record");
        std::vector<int> shape(ndim);
        size_t count = 1;
        for (size_t i = 0; i < ndim; ++i) {
            if (!(row >> shape[i])) throw ValidationError("checkpoint: malformed shape");
            count *= static_cast<size_t>(shape[i]);
        }
        auto it = by_name.find(name);
        if (it == by_name.end()) throw ValidationError("checkpoint: unexpected tensor " + name);
        if (shape != it->second.shape) throw ValidationError("checkpoint: shape mismatch for " + name);
        Vec& dst = *it->second.data;
        if (dst.size() != count) throw ValidationError("checkpoint: element count mismatch for " + name);
        for (size_t i = 0; i < count; ++i) {
            if (!(row >> dst[i])) throw ValidationError("checkpoint: short record for " + name);
        }
        ++loaded;
    }
    if (loaded != by_name.size()) throw ValidationError("checkpoint: missing tensors");
}

} // namespace secc
