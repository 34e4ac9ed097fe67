// Copyright (c) 2026 the hdfm authors
// SPDX-License-Identifier: Apache-2.0
#include "hdfm/neural.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <stdexcept>

#include "hdfm/errors.hpp"
#include "hdfm/kvfile.hpp"
#include "hdfm/tensor_io.hpp"

namespace hdfm {

namespace {

// out = in * w^T + broadcast bias. Rows are chunked across workers; every
// element is one fixed ascending dot, so the result does not depend on the
// worker count.
void affine_rows(const Mat& in, const Mat& w, const Mat& bias, Mat& out,
                 unsigned workers) {
  if (in.cols != w.cols || bias.cols != w.rows)
    throw std::invalid_argument("affine_rows: shape mismatch");
  out = Mat(in.rows, w.rows);
  parallel_for(in.rows, workers, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t r = lo; r < hi; ++r) {
      const double* ir = in.row(r);
      double* orow = out.row(r);
      for (std::size_t j = 0; j < w.rows; ++j) {
        const double* wr = w.row(j);
        double s = bias.v[j];
        for (std::size_t l = 0; l < w.cols; ++l) s += ir[l] * wr[l];
        orow[j] = s;
      }
    }
  });
}

void column_sums(const Mat& src, Mat& out) {
  out = Mat(1, src.cols);
  for (std::size_t b = 0; b < src.rows; ++b) {
    const double* r = src.row(b);
    for (std::size_t j = 0; j < src.cols; ++j) out.v[j] += r[j];
  }
}

std::string join_u32(const std::vector<std::uint32_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

std::vector<std::uint32_t> parse_u32_list(const std::string& s,
                                          const std::string& what) {
  std::vector<std::uint32_t> out;
  for (const std::string& part : split(s, ',')) {
    const long long v = parse_int(trim(part), what);
    if (v < 1 || v > 0xffffffffll)
      throw ValidationError(what + ": entry out of range: " + part);
    out.push_back(static_cast<std::uint32_t>(v));
  }
  return out;
}

}  // namespace

const char* head_name(Head head) {
  switch (head) {
    case Head::X_PRED: return "x";
    case Head::V_PRED: return "v";
    case Head::EPS_PRED: return "eps";
  }
  throw std::invalid_argument("unknown head");
}

Head head_from_name(const std::string& name) {
  if (name == "x") return Head::X_PRED;
  if (name == "v") return Head::V_PRED;
  if (name == "eps") return Head::EPS_PRED;
  throw std::invalid_argument("unknown prediction head: " + name);
}

void MlpConfig::validate() const {
  if (data_dim == 0) throw std::invalid_argument("model data_dim must be positive");
  if (hidden.empty()) throw std::invalid_argument("model needs at least one hidden layer");
  for (std::uint32_t w : hidden)
    if (w == 0) throw std::invalid_argument("hidden layer width must be positive");
  if (time_embed_dim < 2 || time_embed_dim % 2 != 0)
    throw std::invalid_argument("time_embed_dim must be even and at least 2");
  if (conditional() && class_embed_dim == 0)
    throw std::invalid_argument("class_embed_dim must be positive for a conditional model");
}

std::size_t MlpModel::param_count() const {
  std::size_t n = 0;
  for (const ParamBlock& b : params) n += b.value.v.size();
  return n;
}

MlpModel make_mlp(const MlpConfig& cfg) {
  cfg.validate();
  MlpModel m;
  m.cfg = cfg;
  // Each block gets its own stream keyed by block index, so widths can be
  // retuned without reshuffling unrelated blocks.
  auto add = [&m, &cfg](const std::string& name, std::size_t rows,
                        std::size_t cols, double scale) {
    ParamBlock b{name, Mat(rows, cols)};
    if (scale > 0.0) {
      Rng rng(Rng::mix(cfg.init_seed, static_cast<std::uint64_t>(m.params.size())));
      for (double& x : b.value.v) x = scale * rng.normal();
    }
    m.params.push_back(std::move(b));
  };
  std::uint32_t in = cfg.input_dim();
  for (std::size_t l = 0; l < cfg.hidden.size(); ++l) {
    const std::uint32_t w = cfg.hidden[l];
    add("layer" + std::to_string(l) + ".weight", w, in, std::sqrt(2.0 / in));
    add("layer" + std::to_string(l) + ".bias", 1, w, 0.0);
    in = w;
  }
  add("out.weight", cfg.data_dim, in, std::sqrt(1.0 / in));
  add("out.bias", 1, cfg.data_dim, 0.0);
  if (cfg.conditional()) add("class.embed", cfg.num_classes + 1, cfg.class_embed_dim, 0.1);
  return m;
}

std::vector<Mat> make_param_buffers(const MlpModel& m) {
  std::vector<Mat> out;
  out.reserve(m.params.size());
  for (const ParamBlock& b : m.params) out.emplace_back(b.value.rows, b.value.cols);
  return out;
}

void time_features(double t, std::uint32_t dim, double* out) {
  if (dim < 2 || dim % 2 != 0)
    throw std::invalid_argument("time embedding width must be even and at least 2");
  const std::uint32_t half = dim / 2;
  for (std::uint32_t i = 0; i < half; ++i) {
    const double f = (half == 1)
                         ? 1.0
                         : std::exp(std::log(1000.0) * i / (half - 1.0));
    const double a = 2.0 * std::numbers::pi * f * t;
    out[2 * i] = std::sin(a);
    out[2 * i + 1] = std::cos(a);
  }
}

void fill_input_row(const MlpModel& m, const double* z, double t,
                    std::optional<std::uint32_t> y, double* row) {
  const std::uint32_t d = m.cfg.data_dim;
  std::copy(z, z + d, row);
  time_features(t, m.cfg.time_embed_dim, row + d);
  if (!m.cfg.conditional()) return;
  std::uint32_t r = m.cfg.num_classes;  // null class
  if (y) {
    if (*y >= m.cfg.num_classes)
      throw std::invalid_argument("class id " + std::to_string(*y) +
                                  " out of range (num_classes " +
                                  std::to_string(m.cfg.num_classes) + ")");
    r = *y;
  }
  const Mat& emb = m.params[m.embed_index()].value;
  std::copy(emb.row(r), emb.row(r) + m.cfg.class_embed_dim,
            row + d + m.cfg.time_embed_dim);
}

void mlp_forward(const MlpModel& m, const Mat& input, Activations& acts,
                 std::uint32_t workers) {
  if (input.cols != m.cfg.input_dim())
    throw std::invalid_argument("mlp_forward: input width mismatch");
  const std::size_t L = m.layer_count();
  acts.input = input;
  acts.pre.resize(L);
  acts.post.resize(L);
  const Mat* prev = &acts.input;
  for (std::size_t l = 0; l < L; ++l) {
    affine_rows(*prev, m.params[m.weight_index(l)].value,
                m.params[m.bias_index(l)].value, acts.pre[l], workers);
    acts.post[l] = acts.pre[l];
    for (double& x : acts.post[l].v) x = x > 0.0 ? x : 0.0;
    prev = &acts.post[l];
  }
  affine_rows(*prev, m.params[m.out_weight_index()].value,
              m.params[m.out_bias_index()].value, acts.out, workers);
}

VelocityParts assemble_velocity_parts(Head head, const GridField& head_out,
                                      const GridField& z, double t,
                                      const HeatSchedule& sched,
                                      PathKind kind) {
  require_same_shape(head_out, z, "assemble_velocity_parts");
  sched.require_compatible(z);
  const double tc = sched.clamp_t(t);
  const double sden = sched.s(t);
  const std::size_t n = z.size();
  VelocityParts parts{GridField::zeros_like(z), GridField::zeros_like(z)};

  if (head == Head::V_PRED) {
    parts.v_base = head_out;  // the network already answers in velocity units
    return parts;
  }
  if (kind == PathKind::PURE_BLUR) {
    if (head == Head::EPS_PRED)
      throw std::invalid_argument("eps head is undefined on the pure blur path");
    HeatEndpoint he = heat_endpoint(head_out, t, sched);
    for (std::size_t i = 0; i < n; ++i) parts.delta[i] = he.lap[i] / tc;
    return parts;
  }

  // Endpoint estimate u from the head output.
  GridField uhat(z.dims());
  if (head == Head::X_PRED) {
    uhat = head_out;
  } else {
    for (std::size_t i = 0; i < n; ++i)
      uhat[i] = (z[i] - (1.0 - t) * head_out[i]) / tc;
  }

  if (kind == PathKind::NOISE_FM) {
    for (std::size_t i = 0; i < n; ++i)
      parts.v_base[i] = (uhat[i] - z[i]) / sden;
    return parts;
  }
  // X predicts the pre-dissipation sample, so run the operator; the eps head
  // already reconstructs the dissipated endpoint, so only the Laplacian is
  // needed (heat time zero keeps the field and differentiates it).
  HeatEndpoint he = (head == Head::X_PRED) ? heat_endpoint(uhat, t, sched)
                                           : heat_endpoint(uhat, 1.0, sched);
  for (std::size_t i = 0; i < n; ++i)
    parts.v_base[i] = (he.u[i] - z[i]) / sden;
  parts.delta = std::move(he.lap);
  return parts;
}

MlpPredictor::MlpPredictor(const MlpModel& m, std::vector<std::uint32_t> field_dims)
    : model_(m), field_dims_(std::move(field_dims)) {
  model_.cfg.validate();
  if (element_count(field_dims_) != model_.cfg.data_dim)
    throw std::invalid_argument("field shape " + shape_string(field_dims_) +
                                " does not match model width " +
                                std::to_string(model_.cfg.data_dim));
}

GridField MlpPredictor::predict(const GridField& z, double t,
                                std::optional<std::uint32_t> y) const {
  if (z.dims() != field_dims_)
    throw std::invalid_argument("predict: field shape " + shape_string(z.dims()) +
                                " does not match model shape " +
                                shape_string(field_dims_));
  Mat input(1, model_.cfg.input_dim());
  fill_input_row(model_, z.data(), t, y, input.row(0));
  Activations acts;
  mlp_forward(model_, input, acts, 1);
  GridField out(field_dims_);
  std::copy(acts.out.row(0), acts.out.row(0) + out.size(), out.data());
  return out;
}

FnPredictor oracle_x_predictor(const GridField& x) {
  GridField copy = x;
  return FnPredictor(Head::X_PRED, x.dims(),
                     [copy](const GridField&, double,
                            std::optional<std::uint32_t>) { return copy; });
}

GridField predict_velocity(const Predictor& pred, const GridField& z, double t,
                           std::optional<std::uint32_t> y,
                           const HeatSchedule& sched, PathKind kind) {
  GridField out = pred.predict(z, t, y);
  VelocityParts parts = assemble_velocity_parts(pred.head(), out, z, t, sched, kind);
  GridField v(z.dims());
  for (std::size_t i = 0; i < z.size(); ++i)
    v[i] = parts.v_base[i] - parts.delta[i];
  return v;
}

void TrainConfig::validate(std::size_t n_hidden) const {
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (steps < 1) throw std::invalid_argument("step budget must be at least 1");
  if (batch < 1) throw std::invalid_argument("batch size must be at least 1");
  if (!(sigma > 0.0)) throw std::invalid_argument("noise scale must be positive");
  if (!(label_drop >= 0.0 && label_drop <= 1.0))
    throw std::invalid_argument("label_drop must lie in [0, 1]");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) ||
      !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw std::invalid_argument("adam decay rates must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw std::invalid_argument("adam_eps must be positive");
  if (!(lambda_ls >= 0.0))
    throw std::invalid_argument("layersync weight must be nonnegative");
  if (lambda_ls > 0.0 && !(ls_weak < ls_strong && ls_strong < n_hidden))
    throw std::invalid_argument(
        "layersync needs hidden layer indices weak < strong < depth");
  if (!(divergence_abort > 0.0))
    throw std::invalid_argument("divergence_abort must be positive");
}

double layersync_loss(const Activations& acts, std::uint32_t weak,
                      std::uint32_t strong, const MlpModel& m,
                      Mat* d_weak_post) {
  if (!(weak < strong && strong < acts.post.size()))
    throw std::invalid_argument(
        "layersync needs hidden layer indices weak < strong < depth");
  const Mat& wk = acts.post[weak];
  const Mat& st = acts.post[strong];
  const std::size_t B = wk.rows;
  if (d_weak_post && (d_weak_post->rows != wk.rows || d_weak_post->cols != wk.cols))
    throw std::invalid_argument("layersync gradient buffer shape mismatch");

  // Unequal widths compare through a fixed random projection; it is part of
  // the loss definition, not a trained parameter.
  const Mat* target = &st;
  Mat projected(0, 0);
  if (st.cols != wk.cols) {
    Mat proj(wk.cols, st.cols);
    Rng rng(Rng::mix(m.cfg.init_seed, 0x4c53));
    const double scale = 1.0 / std::sqrt(static_cast<double>(st.cols));
    for (double& x : proj.v) x = scale * rng.normal();
    matmul_abt(st, proj, projected);
    target = &projected;
  }

  double mean_cos = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    const double* w = wk.row(b);
    const double* s = target->row(b);
    double ws = 0.0, ww = 0.0, ss = 0.0;
    for (std::size_t j = 0; j < wk.cols; ++j) {
      ws += w[j] * s[j];
      ww += w[j] * w[j];
      ss += s[j] * s[j];
    }
    if (ww == 0.0 || ss == 0.0) continue;  // dead row: cosine 0, no gradient
    const double nw = std::sqrt(ww);
    const double ns = std::sqrt(ss);
    const double c = ws / (nw * ns);
    mean_cos += c;
    if (d_weak_post) {
      double* dw = d_weak_post->row(b);
      const double inv = 1.0 / (nw * ns);
      for (std::size_t j = 0; j < wk.cols; ++j)
        dw[j] += -(s[j] * inv - c * w[j] / ww) / static_cast<double>(B);
    }
  }
  return 1.0 - mean_cos / static_cast<double>(B);
}

LossReport loss_and_grad(const MlpModel& m,
                         const std::vector<PathSample>& batch,
                         const TrainConfig& cfg, const HeatSchedule& sched,
                         std::vector<Mat>* grads, long long step) {
  if (batch.empty()) throw std::invalid_argument("loss_and_grad: empty batch");
  const std::size_t B = batch.size();
  const std::vector<std::uint32_t>& dims = batch[0].z.dims();
  const std::size_t n = batch[0].z.size();
  if (n != m.cfg.data_dim)
    throw std::invalid_argument("batch field shape " + shape_string(dims) +
                                " does not match model width " +
                                std::to_string(m.cfg.data_dim));
  const PathKind kind = batch[0].kind;
  const Head head = m.cfg.head;
  if (head == Head::EPS_PRED && kind == PathKind::PURE_BLUR)
    throw std::invalid_argument("eps head is undefined on the pure blur path");
  for (const PathSample& ps : batch) {
    require_same_shape(ps.z, batch[0].z, "loss_and_grad");
    if (ps.kind != kind)
      throw std::invalid_argument("loss_and_grad: mixed path kinds in one batch");
  }
  sched.require_compatible(batch[0].z);

  Mat input(B, m.cfg.input_dim());
  std::vector<std::size_t> embed_rows(m.cfg.conditional() ? B : 0);
  for (std::size_t b = 0; b < B; ++b) {
    fill_input_row(m, batch[b].z.data(), batch[b].t, batch[b].label, input.row(b));
    if (m.cfg.conditional())
      embed_rows[b] = batch[b].label ? *batch[b].label : m.cfg.num_classes;
  }
  Activations acts;
  mlp_forward(m, input, acts, cfg.workers);

  const double inv_tot = 1.0 / (static_cast<double>(B) * static_cast<double>(n));
  double vel_raw = 0.0;
  Mat dout(B, n);

  // The velocity residual and its pullback to the head output. 1-D batches
  // run the dissipation as whole-batch matrix work; higher ranks go through
  // the per-sample operator. Both compute identical values.
  const bool rank1 = dims.size() == 1;
  std::vector<double> taus(B), sdens(B), tcs(B);
  for (std::size_t b = 0; b < B; ++b) {
    taus[b] = sched.tau(batch[b].t);
    sdens[b] = sched.s(batch[b].t);
    tcs[b] = sched.clamp_t(batch[b].t);
  }

  auto residual_row = [&](std::size_t b, const double* vb, const double* dl) {
    const PathSample& ps = batch[b];
    double acc = 0.0;
    double* g = dout.row(b);
    for (std::size_t i = 0; i < n; ++i) {
      const double vhat = vb[i] - dl[i];
      const double r = vhat - ps.v_star[i];
      acc += r * r;
      g[i] = 2.0 * r * inv_tot;
    }
    vel_raw += acc;
  };

  if (head == Head::V_PRED) {
    const GridField zeros(dims);
    for (std::size_t b = 0; b < B; ++b)
      residual_row(b, acts.out.row(b), zeros.data());
    // dL/dout is the residual gradient itself; dout already holds it.
  } else if (rank1) {
    Mat z(B, n), vb(B, n), dl(B, n);
    for (std::size_t b = 0; b < B; ++b)
      std::copy(batch[b].z.data(), batch[b].z.data() + n, z.row(b));
    Mat uhat(B, n);
    if (head == Head::X_PRED) {
      uhat = acts.out;
    } else {
      for (std::size_t b = 0; b < B; ++b) {
        const double t = batch[b].t;
        const double* zr = z.row(b);
        const double* er = acts.out.row(b);
        double* ur = uhat.row(b);
        for (std::size_t i = 0; i < n; ++i)
          ur[i] = (zr[i] - (1.0 - t) * er[i]) / tcs[b];
      }
    }
    Mat hu(0, 0), hlap(0, 0);
    if (kind == PathKind::NOISE_FM) {
      for (std::size_t b = 0; b < B; ++b) {
        const double* ur = uhat.row(b);
        const double* zr = z.row(b);
        double* vr = vb.row(b);
        for (std::size_t i = 0; i < n; ++i) vr[i] = (ur[i] - zr[i]) / sdens[b];
      }
    } else {
      std::vector<double> op_taus = taus;
      if (head == Head::EPS_PRED) std::fill(op_taus.begin(), op_taus.end(), 0.0);
      heat_rows(uhat, op_taus, sched.eigen, hu, hlap);
      if (kind == PathKind::PURE_BLUR) {
        for (std::size_t b = 0; b < B; ++b) {
          const double* lr = hlap.row(b);
          double* dr = dl.row(b);
          for (std::size_t i = 0; i < n; ++i) dr[i] = lr[i] / tcs[b];
        }
      } else {
        for (std::size_t b = 0; b < B; ++b) {
          const double* ur = hu.row(b);
          const double* zr = z.row(b);
          double* vr = vb.row(b);
          for (std::size_t i = 0; i < n; ++i) vr[i] = (ur[i] - zr[i]) / sdens[b];
        }
        dl = hlap;
      }
    }
    for (std::size_t b = 0; b < B; ++b) residual_row(b, vb.row(b), dl.row(b));

    // Pull dL/dvhat back to the head output; the dissipation is self-adjoint,
    // so the backward pass reuses the forward operator on the gradient rows.
    if (kind == PathKind::NOISE_FM) {
      for (std::size_t b = 0; b < B; ++b) {
        double* g = dout.row(b);
        if (head == Head::X_PRED) {
          for (std::size_t i = 0; i < n; ++i) g[i] = g[i] / sdens[b];
        } else {
          const double fac = -((1.0 - batch[b].t) / tcs[b]);
          for (std::size_t i = 0; i < n; ++i) g[i] = fac * (g[i] / sdens[b]);
        }
      }
    } else {
      std::vector<double> op_taus = taus;
      if (head == Head::EPS_PRED) std::fill(op_taus.begin(), op_taus.end(), 0.0);
      Mat gu(0, 0), glap(0, 0);
      heat_rows(dout, op_taus, sched.eigen, gu, glap);
      for (std::size_t b = 0; b < B; ++b) {
        double* g = dout.row(b);
        const double* ur = gu.row(b);
        const double* lr = glap.row(b);
        if (kind == PathKind::PURE_BLUR) {
          for (std::size_t i = 0; i < n; ++i) g[i] = 0.0 - lr[i] / tcs[b];
        } else if (head == Head::X_PRED) {
          for (std::size_t i = 0; i < n; ++i) g[i] = ur[i] / sdens[b] - lr[i];
        } else {
          const double fac = -((1.0 - batch[b].t) / tcs[b]);
          for (std::size_t i = 0; i < n; ++i) g[i] = fac * (g[i] / sdens[b] - lr[i]);
        }
      }
    }
  } else {
    for (std::size_t b = 0; b < B; ++b) {
      const PathSample& ps = batch[b];
      GridField head_out(dims);
      std::copy(acts.out.row(b), acts.out.row(b) + n, head_out.data());
      VelocityParts parts =
          assemble_velocity_parts(head, head_out, ps.z, ps.t, sched, kind);
      residual_row(b, parts.v_base.data(), parts.delta.data());
      GridField g(dims);
      std::copy(dout.row(b), dout.row(b) + n, g.data());
      double* gr = dout.row(b);
      if (kind == PathKind::NOISE_FM) {
        if (head == Head::X_PRED) {
          for (std::size_t i = 0; i < n; ++i) gr[i] = g[i] / sdens[b];
        } else {
          const double fac = -((1.0 - ps.t) / tcs[b]);
          for (std::size_t i = 0; i < n; ++i) gr[i] = fac * (g[i] / sdens[b]);
        }
      } else {
        HeatEndpoint heg = (head == Head::EPS_PRED)
                               ? heat_endpoint(g, 1.0, sched)
                               : heat_endpoint(g, ps.t, sched);
        if (kind == PathKind::PURE_BLUR) {
          for (std::size_t i = 0; i < n; ++i) gr[i] = 0.0 - heg.lap[i] / tcs[b];
        } else if (head == Head::X_PRED) {
          for (std::size_t i = 0; i < n; ++i)
            gr[i] = heg.u[i] / sdens[b] - heg.lap[i];
        } else {
          const double fac = -((1.0 - ps.t) / tcs[b]);
          for (std::size_t i = 0; i < n; ++i)
            gr[i] = fac * (g[i] / sdens[b] - heg.lap[i]);
        }
      }
    }
  }

  LossReport rep;
  rep.step = step;
  rep.velocity = vel_raw * inv_tot;

  Mat dls(0, 0);
  if (cfg.lambda_ls > 0.0) {
    cfg.validate(m.layer_count());
    if (grads) dls = Mat(B, m.cfg.hidden[cfg.ls_weak]);
    rep.layersync = layersync_loss(acts, cfg.ls_weak, cfg.ls_strong, m,
                                   grads ? &dls : nullptr);
  }
  rep.total = rep.velocity + cfg.lambda_ls * rep.layersync;
  if (!std::isfinite(rep.total))
    throw ValidationError("loss is not finite at step " + std::to_string(step));

  if (!grads) return rep;
  if (grads->size() != m.params.size())
    throw std::invalid_argument("gradient buffer count mismatch");
  for (std::size_t i = 0; i < grads->size(); ++i) {
    const Mat& p = m.params[i].value;
    if ((*grads)[i].rows != p.rows || (*grads)[i].cols != p.cols)
      throw std::invalid_argument("gradient buffer shape mismatch: " + m.params[i].name);
    (*grads)[i].fill(0.0);
  }

  const std::size_t L = m.layer_count();
  matmul_atb(dout, acts.post[L - 1], (*grads)[m.out_weight_index()]);
  column_sums(dout, (*grads)[m.out_bias_index()]);
  Mat dpost(0, 0);
  matmul_ab(dout, m.params[m.out_weight_index()].value, dpost);
  for (std::size_t li = L; li-- > 0;) {
    if (cfg.lambda_ls > 0.0 && li == cfg.ls_weak)
      for (std::size_t i = 0; i < dpost.v.size(); ++i)
        dpost.v[i] += cfg.lambda_ls * dls.v[i];
    Mat dpre = std::move(dpost);
    const Mat& pre = acts.pre[li];
    for (std::size_t i = 0; i < dpre.v.size(); ++i)
      if (!(pre.v[i] > 0.0)) dpre.v[i] = 0.0;
    matmul_atb(dpre, li > 0 ? acts.post[li - 1] : acts.input,
               (*grads)[m.weight_index(li)]);
    column_sums(dpre, (*grads)[m.bias_index(li)]);
    if (li > 0) {
      matmul_ab(dpre, m.params[m.weight_index(li)].value, dpost);
    } else if (m.cfg.conditional()) {
      Mat dinput(0, 0);
      matmul_ab(dpre, m.params[m.weight_index(0)].value, dinput);
      Mat& demb = (*grads)[m.embed_index()];
      const std::size_t off = m.cfg.data_dim + m.cfg.time_embed_dim;
      for (std::size_t b = 0; b < B; ++b) {
        const double* dr = dinput.row(b) + off;
        double* er = demb.row(embed_rows[b]);
        for (std::uint32_t j = 0; j < m.cfg.class_embed_dim; ++j) er[j] += dr[j];
      }
    }
  }

  double sq = 0.0;
  for (const Mat& g : *grads)
    for (double v : g.v) sq += v * v;
  rep.grad_norm = std::sqrt(sq);
  return rep;
}

AdamState make_adam_state(const MlpModel& m) {
  AdamState st;
  st.m1 = make_param_buffers(m);
  st.m2 = make_param_buffers(m);
  return st;
}

void adam_update(MlpModel& m, const std::vector<Mat>& grads, AdamState& st,
                 const TrainConfig& cfg, double lr_now) {
  if (grads.size() != m.params.size() || st.m1.size() != m.params.size())
    throw std::invalid_argument("adam_update: buffer count mismatch");
  st.step += 1;
  const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    Mat& p = m.params[i].value;
    const Mat& g = grads[i];
    Mat& m1 = st.m1[i];
    Mat& m2 = st.m2[i];
    if (g.rows != p.rows || g.cols != p.cols)
      throw std::invalid_argument("adam_update: gradient shape mismatch: " +
                                  m.params[i].name);
    for (std::size_t j = 0; j < p.v.size(); ++j) {
      m1.v[j] = cfg.adam_beta1 * m1.v[j] + (1.0 - cfg.adam_beta1) * g.v[j];
      m2.v[j] = cfg.adam_beta2 * m2.v[j] + (1.0 - cfg.adam_beta2) * g.v[j] * g.v[j];
      p.v[j] -= lr_now * (m1.v[j] / c1) / (std::sqrt(m2.v[j] / c2) + cfg.adam_eps);
    }
  }
}

std::vector<LossReport> train(MlpModel& m, const DataSource& data,
                              const TrainConfig& cfg,
                              const HeatSchedule& sched) {
  m.cfg.validate();
  cfg.validate(m.layer_count());
  const std::vector<std::uint32_t> dims = data.dims();
  if (element_count(dims) != m.cfg.data_dim)
    throw std::invalid_argument("data source shape " + shape_string(dims) +
                                " does not match model width " +
                                std::to_string(m.cfg.data_dim));
  sched.require_compatible(GridField(dims));

  Rng rng(cfg.seed);
  std::vector<Mat> grads = make_param_buffers(m);
  AdamState st = make_adam_state(m);
  std::vector<LossReport> reports;
  reports.reserve(cfg.steps);

  std::vector<GridField> xs(cfg.batch, GridField(dims));
  std::vector<double> ts(cfg.batch);
  std::vector<GridField> es;
  std::vector<std::optional<std::uint32_t>> labels(cfg.batch);
  for (std::uint32_t step = 0; step < cfg.steps; ++step) {
    es.clear();
    for (std::uint32_t b = 0; b < cfg.batch; ++b) {
      data.draw(rng, xs[b], labels[b]);
      ts[b] = draw_time(rng, sched, cfg.time_scheme);
      es.push_back(normal_field(rng, dims, cfg.sigma));
      if (labels[b] && m.cfg.conditional() && cfg.label_drop > 0.0 &&
          rng.uniform() < cfg.label_drop)
        labels[b].reset();
    }
    const std::vector<PathSample> batch =
        sample_path_batch(xs, ts, es, sched, cfg.kind, labels);
    double lr_now = cfg.lr;
    if (cfg.lr_schedule == LrSchedule::LINEAR)
      lr_now = cfg.lr * (1.0 - static_cast<double>(step) / cfg.steps);
    LossReport rep = loss_and_grad(m, batch, cfg, sched, &grads, step);
    if (rep.total > cfg.divergence_abort)
      throw ValidationError("training diverged at step " + std::to_string(step) +
                            ": loss " + format_double(rep.total));
    adam_update(m, grads, st, cfg, lr_now);
    reports.push_back(rep);
  }
  return reports;
}

void save_checkpoint(const std::string& dir, const MlpModel& m,
                     const HeatSchedule& sched,
                     const std::vector<std::uint32_t>& field_dims) {
  m.cfg.validate();
  if (element_count(field_dims) != m.cfg.data_dim)
    throw std::invalid_argument("field shape " + shape_string(field_dims) +
                                " does not match model width " +
                                std::to_string(m.cfg.data_dim));
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir);

  KvFile kv;
  kv.set("format", "hdfm-checkpoint-1");
  kv.set("head", head_name(m.cfg.head));
  kv.set("data_dim", std::to_string(m.cfg.data_dim));
  kv.set("hidden", join_u32(m.cfg.hidden));
  kv.set("time_embed_dim", std::to_string(m.cfg.time_embed_dim));
  kv.set("num_classes", std::to_string(m.cfg.num_classes));
  kv.set("class_embed_dim", std::to_string(m.cfg.class_embed_dim));
  kv.set("init_seed", std::to_string(m.cfg.init_seed));
  kv.set("field_dims", join_u32(field_dims));
  kv.set("blur_strength", format_double(sched.eigen.blur_strength));
  kv.set("t_floor", format_double(sched.t_floor));
  kv.set("s_eps", format_double(sched.s_eps));
  std::string blocks;
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    if (i) blocks += ',';
    blocks += m.params[i].name;
  }
  kv.set("blocks", blocks);
  write_kv_file(dir + "/manifest.txt", kv);

  for (const ParamBlock& b : m.params) {
    GridField t({static_cast<std::uint32_t>(b.value.rows),
                 static_cast<std::uint32_t>(b.value.cols)},
                b.value.v);
    write_tensor(dir + "/" + b.name + ".hdt", t, false);
  }
}

Checkpoint load_checkpoint(const std::string& dir) {
  const std::string mpath = dir + "/manifest.txt";
  KvFile kv = read_kv_file(mpath);
  static const char* known[] = {
      "format", "head", "data_dim", "hidden", "time_embed_dim", "num_classes",
      "class_embed_dim", "init_seed", "field_dims", "blur_strength", "t_floor",
      "s_eps", "blocks"};
  for (const auto& [k, v] : kv.pairs) {
    bool ok = false;
    for (const char* name : known) ok = ok || k == name;
    if (!ok) throw ValidationError(mpath + ": unknown key: " + k);
  }
  if (kv.get("format") != "hdfm-checkpoint-1")
    throw ValidationError(mpath + ": unsupported format " + kv.get("format"));

  MlpConfig cfg;
  cfg.head = head_from_name(kv.get("head"));
  cfg.data_dim = static_cast<std::uint32_t>(parse_int(kv.get("data_dim"), "data_dim"));
  cfg.hidden = parse_u32_list(kv.get("hidden"), "hidden");
  cfg.time_embed_dim =
      static_cast<std::uint32_t>(parse_int(kv.get("time_embed_dim"), "time_embed_dim"));
  cfg.num_classes =
      static_cast<std::uint32_t>(parse_int(kv.get("num_classes"), "num_classes"));
  cfg.class_embed_dim =
      static_cast<std::uint32_t>(parse_int(kv.get("class_embed_dim"), "class_embed_dim"));
  cfg.init_seed = static_cast<std::uint64_t>(parse_int(kv.get("init_seed"), "init_seed"));
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ValidationError(mpath + ": " + e.what());
  }

  Checkpoint out{make_mlp(cfg), HeatSchedule{}, parse_u32_list(kv.get("field_dims"), "field_dims")};
  if (element_count(out.field_dims) != cfg.data_dim)
    throw ValidationError(mpath + ": field_dims do not match data_dim");
  try {
    out.sched = make_schedule(out.field_dims,
                              parse_double(kv.get("blur_strength"), "blur_strength"),
                              parse_double(kv.get("t_floor"), "t_floor"),
                              parse_double(kv.get("s_eps"), "s_eps"));
  } catch (const std::invalid_argument& e) {
    throw ValidationError(mpath + ": " + e.what());
  }

  std::string expect;
  for (std::size_t i = 0; i < out.model.params.size(); ++i) {
    if (i) expect += ',';
    expect += out.model.params[i].name;
  }
  if (kv.get("blocks") != expect)
    throw ValidationError(mpath + ": block list does not match the declared model");

  for (ParamBlock& b : out.model.params) {
    const GridField t = read_tensor(dir + "/" + b.name + ".hdt");
    if (t.ndim() != 2 || t.dims()[0] != b.value.rows || t.dims()[1] != b.value.cols)
      throw ValidationError(dir + "/" + b.name + ".hdt: shape " +
                            shape_string(t.dims()) + " does not match block");
    b.value.v = t.values();
  }
  return out;
}

}  // namespace hdfm
