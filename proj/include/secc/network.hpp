#pragma once

#include "secc/linalg.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace secc {

// Shapes of the desk-scale architecture. The backbone is a fully connected
// stack whose last layer is reshaped into an H x H x D0 feature map; pooled
// features have dimension M, the global MI feature D1. N is the classifier
// head size and K the cluster count.
struct BackboneSpec {
    int input_dim = 2;
    std::vector<int> hidden_widths{64, 64};
    int H = 2;
    int D0 = 16;
    int M = 32;
    int D1 = 16;
    int N = 0;
    int K = 0;
    int disc_hidden = 32;

    int map_cells() const { return H * H; }
    void validate() const;
};

struct Affine {
    Matrix w;
    Vec b;
};

// Parameters shared by student and teacher: the MLP stack, the pooled
// projection and the classification branch.
struct SharedParams {
    std::vector<Affine> hidden; // input_dim -> hidden_widths
    Affine pool_proj;           // D0 -> M
    Affine classifier;          // M -> N
};

// 3x3 same-padded convolution D0 -> D1 over the H x H map.
// Weight layout: row f, column c*9 + (ky*3 + kx).
struct Conv3x3 {
    Matrix w;
    Vec b;
};

struct StudentParams {
    SharedParams shared;
    Matrix cluster_w;          // K x M, every row nonzero
    Conv3x3 mi_conv;
    std::vector<Affine> gdisc; // (D1+N+K) -> dh -> dh -> 1
    std::vector<Affine> ldisc; // (D0+N+K) -> dh -> dh -> 1, applied per location
};

struct TeacherParams {
    SharedParams shared;
};

struct StudentOutputs {
    Matrix feature_map; // (H*H) x D0
    Vec pooled;         // M
    Vec p_cls;          // N
    Vec p_clu;          // K
    Vec global_feat;    // D1
};

// Activations retained for the backward pass.
struct SharedCache {
    Vec input;
    std::vector<Vec> pre; // per hidden layer, pre-activation
    std::vector<Vec> act; // per hidden layer, post-ramp
    Matrix feature_map;
    Vec avg;    // D0 spatial average
    Vec pooled; // M
    Vec logits; // N
    Vec p_cls;  // N
};

struct StudentCache {
    SharedCache shared;
    bool has_extras = false;
    Vec p_clu;       // K
    Matrix conv_out; // (H*H) x D1
    Vec global_feat; // D1
};

struct MlpCache {
    Vec in;
    std::vector<Vec> pre;
    std::vector<Vec> act;
    double out = 0.0;
};

struct LocalDiscCache {
    std::vector<MlpCache> loc; // one per spatial location
};

// ---- forward ----

SharedCache forward_shared(const SharedParams& params, const BackboneSpec& spec, const Vec& x);

// with_extras = false skips the clustering branch and MI encoder (enough for
// the source cross-entropy path).
StudentCache forward_student_cache(const StudentParams& params, const BackboneSpec& spec,
                                   double rho, const Vec& x, bool with_extras = true);

StudentOutputs forward_student(const StudentParams& params, const BackboneSpec& spec, double rho,
                               const Vec& x);

Vec forward_teacher(const TeacherParams& params, const BackboneSpec& spec, const Vec& x);

// Cosine softmax of Eq-style modified softmax layers: softmax over
// rho * cos(x, w_k).
Vec cluster_branch(const Vec& pooled, const Matrix& w, double rho);
void cluster_branch_backward(const Vec& pooled, const Matrix& w, double rho, const Vec& p,
                             const Vec& d_p, Vec& d_pooled_acc, Matrix& d_w_acc);

// 3x3 same convolution plus global average pooling -> D1 vector.
Vec mi_global_encode(const Matrix& feature_map, const Conv3x3& conv, const BackboneSpec& spec);

double mi_global_disc(const std::vector<Affine>& layers, const Vec& g, const Vec& p_cls,
                      const Vec& p_clu, MlpCache* cache = nullptr);

// Returns the H*H score map (flattened row-major).
Vec mi_local_disc(const std::vector<Affine>& layers, const Matrix& feature_map, const Vec& p_cls,
                  const Vec& p_clu, LocalDiscCache* cache = nullptr);

// ---- backward ----

struct StudentAdjoints {
    const Vec* d_p_cls = nullptr;    // N
    const Vec* d_p_clu = nullptr;    // K
    const Vec* d_global = nullptr;   // D1
    const Matrix* d_map = nullptr;   // (H*H) x D0 adjoint applied directly to the map
};

void student_backward(const StudentParams& params, const BackboneSpec& spec, double rho,
                      const StudentCache& cache, const StudentAdjoints& adj, StudentParams& grads);

void mi_global_disc_backward(const std::vector<Affine>& layers, const MlpCache& cache, double d_out,
                             std::vector<Affine>& grads, Vec& d_in);

void mi_local_disc_backward(const std::vector<Affine>& layers, const BackboneSpec& spec,
                            const LocalDiscCache& cache, const Vec& d_scores,
                            std::vector<Affine>& grads, Matrix& d_map_acc, Vec& d_p_cls_acc,
                            Vec& d_p_clu_acc);

// ---- parameters ----

StudentParams init_student(const BackboneSpec& spec, std::uint64_t seed);
TeacherParams make_teacher(const StudentParams& student);
StudentParams zeroed_like(const StudentParams& params);

// w_T <- decay * w_T + (1 - decay) * w_S on the shared parts.
void ema_update(TeacherParams& teacher, const StudentParams& student, double decay);

struct TensorRef {
    std::string name;
    Vec* data;
    std::vector<int> shape;
};

std::vector<TensorRef> student_tensors(StudentParams& params);
std::vector<TensorRef> teacher_tensors(TeacherParams& params);

// Text checkpoint: one `name shape... : values...` record per tensor.
void save_checkpoint(StudentParams& student, TeacherParams& teacher, const std::string& path);
void load_checkpoint(StudentParams& student, TeacherParams& teacher, const BackboneSpec& spec,
                     const std::string& path);

} // namespace secc
