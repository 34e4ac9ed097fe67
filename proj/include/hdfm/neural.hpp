// Copyright (c) 2026 the hdfm authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hdfm/linalg.hpp"
#include "hdfm/path.hpp"

namespace hdfm {

// Fully-connected ReLU network with sinusoidal time conditioning, an optional
// learned class embedding (plus a null class for classifier-free guidance),
// and a selectable prediction head. Gradients are hand-written reverse mode;
// the x and eps heads backpropagate through the dissipation operator, whose
// adjoint is the operator itself (it is diagonal in an orthonormal basis).

// What the network output means.
enum class Head { X_PRED, V_PRED, EPS_PRED };

const char* head_name(Head head);
Head head_from_name(const std::string& name);

struct MlpConfig {
  std::uint32_t data_dim = 0;
  std::vector<std::uint32_t> hidden = {256, 256, 256, 256, 256};
  Head head = Head::X_PRED;
  std::uint32_t time_embed_dim = 32;  // even; sin/cos pairs
  std::uint32_t num_classes = 0;      // 0 = unconditional
  std::uint32_t class_embed_dim = 16;
  std::uint64_t init_seed = 0;

  bool conditional() const { return num_classes > 0; }
  std::uint32_t input_dim() const {
    return data_dim + time_embed_dim + (conditional() ? class_embed_dim : 0);
  }
  void validate() const;
};

struct ParamBlock {
  std::string name;
  Mat value;
};

// Parameter layout: layer{i}.weight (out x in), layer{i}.bias (1 x out) for
// each hidden layer, then out.weight / out.bias, then class.embed
// ((num_classes + 1) x class_embed_dim, last row = null class) when
// conditional. Gradient and optimizer buffers mirror this order.
struct MlpModel {
  MlpConfig cfg;
  std::vector<ParamBlock> params;

  std::size_t layer_count() const { return cfg.hidden.size(); }
  std::size_t weight_index(std::size_t layer) const { return 2 * layer; }
  std::size_t bias_index(std::size_t layer) const { return 2 * layer + 1; }
  std::size_t out_weight_index() const { return 2 * layer_count(); }
  std::size_t out_bias_index() const { return 2 * layer_count() + 1; }
  std::size_t embed_index() const { return 2 * layer_count() + 2; }

  std::size_t param_count() const;
};

// Deterministic He-style initialization from cfg.init_seed; each block draws
// from its own derived stream so adding a block never shifts the others.
MlpModel make_mlp(const MlpConfig& cfg);

// Zero gradient (or optimizer moment) buffers shaped like the model.
std::vector<Mat> make_param_buffers(const MlpModel& m);

// Interleaved sin/cos features with geometrically spaced frequencies from 1
// to 1000 cycles; out must hold dim values, dim even.
void time_features(double t, std::uint32_t dim, double* out);

// Writes the network input row [z | time features | class embedding]; y maps
// to the null-class row when absent (the unconditional branch). Throws on an
// out-of-range class id.
void fill_input_row(const MlpModel& m, const double* z, double t,
                    std::optional<std::uint32_t> y, double* row);

struct Activations {
  Mat input;             // B x input_dim
  std::vector<Mat> pre;  // pre-ReLU, B x width per hidden layer
  std::vector<Mat> post; // post-ReLU
  Mat out;               // B x data_dim
};

void mlp_forward(const MlpModel& m, const Mat& input, Activations& acts,
                 std::uint32_t workers = 1);

// The sampling decomposition v = v_base - delta. v_base carries the
// interpolation term, delta the dissipation correction, so guidance and the
// beta fusion can act on them separately.
struct VelocityParts {
  GridField v_base;
  GridField delta;
};

// Maps a head output at state (z, t) to the two velocity components.
//   X_PRED   u = dissipated head output; v_base = (u - z)/s, delta = lap u.
//   EPS_PRED u recovered from z = t u + (1-t) eps; then as X_PRED.
//   V_PRED   v_base = head output, delta = 0.
// NOISE_FM skips the dissipation (u = raw endpoint estimate, delta = 0);
// PURE_BLUR puts everything into delta: v_base = 0, delta = lap(u)/max(t,
// t_floor), and rejects EPS_PRED (the blur path has no noise to predict).
VelocityParts assemble_velocity_parts(Head head, const GridField& head_out,
                                      const GridField& z, double t,
                                      const HeatSchedule& sched,
                                      PathKind kind = PathKind::HDFM);

// Model abstraction the sampler integrates against; lets tests swap the
// network for closed-form oracles.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual Head head() const = 0;
  virtual bool conditional() const = 0;
  virtual std::vector<std::uint32_t> data_dims() const = 0;
  virtual GridField predict(const GridField& z, double t,
                            std::optional<std::uint32_t> y) const = 0;
};

class MlpPredictor : public Predictor {
 public:
  MlpPredictor(const MlpModel& m, std::vector<std::uint32_t> field_dims);
  Head head() const override { return model_.cfg.head; }
  bool conditional() const override { return model_.cfg.conditional(); }
  std::vector<std::uint32_t> data_dims() const override { return field_dims_; }
  GridField predict(const GridField& z, double t,
                    std::optional<std::uint32_t> y) const override;
  const MlpModel& model() const { return model_; }

 private:
  MlpModel model_;
  std::vector<std::uint32_t> field_dims_;
};

// Closed-form predictor for tests and oracle sampling runs.
class FnPredictor : public Predictor {
 public:
  using Fn = std::function<GridField(const GridField&, double,
                                     std::optional<std::uint32_t>)>;
  FnPredictor(Head head, std::vector<std::uint32_t> dims, Fn fn)
      : head_(head), dims_(std::move(dims)), fn_(std::move(fn)) {}
  Head head() const override { return head_; }
  bool conditional() const override { return false; }
  std::vector<std::uint32_t> data_dims() const override { return dims_; }
  GridField predict(const GridField& z, double t,
                    std::optional<std::uint32_t> y) const override {
    return fn_(z, t, y);
  }

 private:
  Head head_;
  std::vector<std::uint32_t> dims_;
  Fn fn_;
};

// X-head predictor that always answers with the true sample.
FnPredictor oracle_x_predictor(const GridField& x);

// Full velocity v = v_base - delta for one state.
GridField predict_velocity(const Predictor& pred, const GridField& z, double t,
                           std::optional<std::uint32_t> y,
                           const HeatSchedule& sched,
                           PathKind kind = PathKind::HDFM);

enum class LrSchedule { CONSTANT, LINEAR };

struct TrainConfig {
  double lr = 1e-3;
  LrSchedule lr_schedule = LrSchedule::CONSTANT;
  std::uint32_t batch = 64;
  std::uint32_t steps = 1;
  double sigma = 1.0;        // prior scale of the noise draw e
  double label_drop = 0.1;   // chance a label trains the null class
  TimeScheme time_scheme = TimeScheme::UNIFORM;
  PathKind kind = PathKind::HDFM;
  double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
  double lambda_ls = 0.0;    // LayerSync weight; 0 disables the term
  std::uint32_t ls_weak = 1, ls_strong = 4;  // hidden-layer indices
  double divergence_abort = 1e6;
  std::uint64_t seed = 0;
  std::uint32_t log_every = 100;
  std::uint32_t workers = 1;

  void validate(std::size_t n_hidden) const;
};

struct LossReport {
  long long step = 0;
  double velocity = 0.0;   // per-element mean squared velocity error
  double layersync = 0.0;
  double total = 0.0;      // velocity + lambda_ls * layersync, exactly
  double grad_norm = 0.0;  // l2 over all blocks; 0 when gradients not asked
};

// Velocity regression loss (optionally plus LayerSync) over one batch, with
// reverse-mode gradients accumulated into grads when non-null. All samples
// must share shape and path kind. Throws on a non-finite loss.
LossReport loss_and_grad(const MlpModel& m,
                         const std::vector<PathSample>& batch,
                         const TrainConfig& cfg, const HeatSchedule& sched,
                         std::vector<Mat>* grads, long long step = 0);

// Cosine misalignment between a weak hidden layer and a gradient-detached
// strong one: 1 - mean row cosine. When d_weak_post is non-null the gradient
// of this term alone is added into it (nothing flows into the strong branch).
double layersync_loss(const Activations& acts, std::uint32_t weak,
                      std::uint32_t strong, const MlpModel& m,
                      Mat* d_weak_post);

struct AdamState {
  std::vector<Mat> m1, m2;
  long long step = 0;
};

AdamState make_adam_state(const MlpModel& m);
void adam_update(MlpModel& m, const std::vector<Mat>& grads, AdamState& st,
                 const TrainConfig& cfg, double lr_now);

// Stream of training examples. draw() fills x (shape dims()) and an optional
// class label.
class DataSource {
 public:
  virtual ~DataSource() = default;
  virtual std::vector<std::uint32_t> dims() const = 0;
  virtual void draw(Rng& rng, GridField& x,
                    std::optional<std::uint32_t>& label) const = 0;
};

// Runs the optimizer loop; deterministic given cfg.seed. Returns one report
// per step. Aborts with a diagnostic when the loss exceeds divergence_abort.
std::vector<LossReport> train(MlpModel& m, const DataSource& data,
                              const TrainConfig& cfg,
                              const HeatSchedule& sched);

// Checkpoint directory: manifest.txt (key = value) plus one float64 tensor
// file per parameter block.
void save_checkpoint(const std::string& dir, const MlpModel& m,
                     const HeatSchedule& sched,
                     const std::vector<std::uint32_t>& field_dims);

struct Checkpoint {
  MlpModel model;
  HeatSchedule sched;
  std::vector<std::uint32_t> field_dims;
};

Checkpoint load_checkpoint(const std::string& dir);

}  // namespace hdfm
