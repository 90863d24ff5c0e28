#include "rfp/nn/kernels.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <limits>

#include "rfp/errors.hpp"
#include "rfp/parallel.hpp"

namespace rfp::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

struct ConvDims {
  int batch, in_c, in_h, in_w;
  int out_c, group_in, group_out;
  int kh, kw;
  ConvGeometry geo;
  std::int64_t col_rows, col_cols;
};

ConvDims conv_dims(const Tensord& x, const Tensord& w, const ConvSpec& spec) {
  require(x.rank() == 4, "conv2d input must be rank 4, got " + std::to_string(x.rank()));
  require(w.rank() == 4, "conv2d weights must be rank 4");
  ConvDims d;
  d.batch = x.extent(0);
  d.in_c = x.extent(1);
  d.in_h = x.extent(2);
  d.in_w = x.extent(3);
  d.out_c = w.extent(0);
  d.kh = w.extent(2);
  d.kw = w.extent(3);
  require(spec.kh == d.kh && spec.kw == d.kw, "conv spec kernel does not match weight extents");
  require(spec.groups >= 1, "conv groups must be >= 1");
  require(d.in_c % spec.groups == 0,
          "input channels " + std::to_string(d.in_c) + " not divisible by groups " +
              std::to_string(spec.groups));
  require(d.out_c % spec.groups == 0,
          "output channels " + std::to_string(d.out_c) + " not divisible by groups " +
              std::to_string(spec.groups));
  d.group_in = d.in_c / spec.groups;
  d.group_out = d.out_c / spec.groups;
  require(w.extent(1) == d.group_in, "weight channel extent " + std::to_string(w.extent(1)) +
                                         " does not match input channels per group " +
                                         std::to_string(d.group_in));
  d.geo = conv_geometry(d.in_h, d.in_w, spec);
  d.col_rows = static_cast<std::int64_t>(d.group_in) * d.kh * d.kw;
  d.col_cols = static_cast<std::int64_t>(d.geo.out_h) * d.geo.out_w;
  return d;
}

bool pointwise(const ConvSpec& spec, const ConvDims& d) {
  return spec.kh == 1 && spec.kw == 1 && spec.stride_h == 1 && spec.stride_w == 1 &&
         d.geo.pad_top == 0 && d.geo.pad_left == 0;
}

/// col(r, ho*Wo+wo) = x(group_base + r/(kh*kw), ho*sh - pt + i, wo*sw - pl + j)
void im2col(const double* xs, const ConvDims& d, const ConvSpec& spec, int group, double* col) {
  const int kh = d.kh, kw = d.kw;
  const int out_h = d.geo.out_h, out_w = d.geo.out_w;
  const std::int64_t plane = static_cast<std::int64_t>(d.in_h) * d.in_w;
  for (int r = 0; r < d.col_rows; ++r) {
    const int c_local = r / (kh * kw);
    const int i = (r / kw) % kh;
    const int j = r % kw;
    const double* src = xs + (static_cast<std::int64_t>(group) * d.group_in + c_local) * plane;
    double* dst = col + static_cast<std::int64_t>(r) * d.col_cols;
    for (int ho = 0; ho < out_h; ++ho) {
      const int h = ho * spec.stride_h - d.geo.pad_top + i;
      double* row = dst + static_cast<std::int64_t>(ho) * out_w;
      if (h < 0 || h >= d.in_h) {
        std::memset(row, 0, sizeof(double) * static_cast<std::size_t>(out_w));
        continue;
      }
      if (spec.stride_w == 1) {
        // contiguous span of valid columns
        int wo_lo = std::max(0, d.geo.pad_left - j);
        int wo_hi = std::min(out_w, d.in_w + d.geo.pad_left - j);
        if (wo_lo > 0) std::memset(row, 0, sizeof(double) * static_cast<std::size_t>(wo_lo));
        if (wo_hi > wo_lo)
          std::memcpy(row + wo_lo, src + static_cast<std::int64_t>(h) * d.in_w + wo_lo - d.geo.pad_left + j,
                      sizeof(double) * static_cast<std::size_t>(wo_hi - wo_lo));
        if (wo_hi < out_w)
          std::memset(row + std::max(wo_hi, wo_lo), 0,
                      sizeof(double) * static_cast<std::size_t>(out_w - std::max(wo_hi, wo_lo)));
      } else {
        for (int wo = 0; wo < out_w; ++wo) {
          const int wi = wo * spec.stride_w - d.geo.pad_left + j;
          row[wo] = (wi >= 0 && wi < d.in_w) ? src[static_cast<std::int64_t>(h) * d.in_w + wi] : 0.0;
        }
      }
    }
  }
}

void col2im_accumulate(const double* col, const ConvDims& d, const ConvSpec& spec, int group,
                       double* dxs) {
  const int kh = d.kh, kw = d.kw;
  const int out_h = d.geo.out_h, out_w = d.geo.out_w;
  const std::int64_t plane = static_cast<std::int64_t>(d.in_h) * d.in_w;
  for (int r = 0; r < d.col_rows; ++r) {
    const int c_local = r / (kh * kw);
    const int i = (r / kw) % kh;
    const int j = r % kw;
    double* dst = dxs + (static_cast<std::int64_t>(group) * d.group_in + c_local) * plane;
    const double* src = col + static_cast<std::int64_t>(r) * d.col_cols;
    for (int ho = 0; ho < out_h; ++ho) {
      const int h = ho * spec.stride_h - d.geo.pad_top + i;
      if (h < 0 || h >= d.in_h) continue;
      const double* row = src + static_cast<std::int64_t>(ho) * out_w;
      for (int wo = 0; wo < out_w; ++wo) {
        const int wi = wo * spec.stride_w - d.geo.pad_left + j;
        if (wi >= 0 && wi < d.in_w) dst[static_cast<std::int64_t>(h) * d.in_w + wi] += row[wo];
      }
    }
  }
}

struct BnDims {
  int batch, channels;
  std::int64_t spatial, per_channel_count;
};

BnDims bn_dims(const Tensord& x, const Tensord& gamma, const Tensord& beta) {
  require(x.rank() == 2 || x.rank() == 4, "batch_norm expects rank-2 or rank-4 input");
  BnDims d;
  d.batch = x.extent(0);
  d.channels = x.extent(1);
  d.spatial = x.size() / (static_cast<std::int64_t>(d.batch) * d.channels);
  d.per_channel_count = static_cast<std::int64_t>(d.batch) * d.spatial;
  require(gamma.size() == d.channels && beta.size() == d.channels,
          "batch_norm gamma/beta must have one entry per channel");
  return d;
}

}  // namespace

ConvGeometry conv_geometry(int in_h, int in_w, const ConvSpec& spec) {
  if (spec.stride_h < 1 || spec.stride_w < 1) throw ShapeError("conv stride must be >= 1");
  ConvGeometry g;
  if (spec.padding == Padding::valid) {
    if (spec.kh > in_h || spec.kw > in_w)
      throw ShapeError("kernel " + std::to_string(spec.kh) + "x" + std::to_string(spec.kw) +
                       " does not fit input " + std::to_string(in_h) + "x" + std::to_string(in_w));
    g.out_h = (in_h - spec.kh) / spec.stride_h + 1;
    g.out_w = (in_w - spec.kw) / spec.stride_w + 1;
  } else {
    g.out_h = (in_h + spec.stride_h - 1) / spec.stride_h;
    g.out_w = (in_w + spec.stride_w - 1) / spec.stride_w;
    int pad_h = std::max(0, (g.out_h - 1) * spec.stride_h + spec.kh - in_h);
    int pad_w = std::max(0, (g.out_w - 1) * spec.stride_w + spec.kw - in_w);
    g.pad_top = pad_h / 2;
    g.pad_left = pad_w / 2;
  }
  if (g.out_h <= 0 || g.out_w <= 0) throw ShapeError("convolution output would be empty");
  return g;
}

Tensord conv2d_forward(const Tensord& x, const Tensord& w, const Tensord* bias,
                       const ConvSpec& spec) {
  ConvDims d = conv_dims(x, w, spec);
  if (bias) require(bias->size() == d.out_c, "conv bias must have one entry per output channel");
  Tensord y({d.batch, d.out_c, d.geo.out_h, d.geo.out_w});

  const std::int64_t x_stride = static_cast<std::int64_t>(d.in_c) * d.in_h * d.in_w;
  const std::int64_t y_stride = static_cast<std::int64_t>(d.out_c) * d.col_cols;
  const bool pw = pointwise(spec, d);

  ThreadPool::instance().for_shards(d.batch, [&](int, std::int64_t b0, std::int64_t b1) {
    std::vector<double> col;
    if (!pw) col.resize(static_cast<std::size_t>(d.col_rows * d.col_cols));
    for (std::int64_t b = b0; b < b1; ++b) {
      const double* xs = x.data() + b * x_stride;
      double* ys = y.data() + b * y_stride;
      for (int g = 0; g < spec.groups; ++g) {
        ConstMatMap wg(w.data() + static_cast<std::int64_t>(g) * d.group_out * d.col_rows,
                       d.group_out, d.col_rows);
        MatMap yg(ys + static_cast<std::int64_t>(g) * d.group_out * d.col_cols, d.group_out,
                  d.col_cols);
        if (pw) {
          ConstMatMap xg(xs + static_cast<std::int64_t>(g) * d.group_in * d.col_cols, d.group_in,
                         d.col_cols);
          yg.noalias() = wg * xg;
        } else {
          im2col(xs, d, spec, g, col.data());
          ConstMatMap cg(col.data(), d.col_rows, d.col_cols);
          yg.noalias() = wg * cg;
        }
      }
      if (bias) {
        for (int c = 0; c < d.out_c; ++c) {
          double* row = ys + static_cast<std::int64_t>(c) * d.col_cols;
          const double bv = (*bias)[c];
          for (std::int64_t i = 0; i < d.col_cols; ++i) row[i] += bv;
        }
      }
    }
  });
  return y;
}

void conv2d_backward(const Tensord& x, const Tensord& w, const ConvSpec& spec, const Tensord& dy,
                     Tensord* dx, Tensord* dw, Tensord* db) {
  ConvDims d = conv_dims(x, w, spec);
  require(dy.rank() == 4 && dy.extent(0) == d.batch && dy.extent(1) == d.out_c &&
              dy.extent(2) == d.geo.out_h && dy.extent(3) == d.geo.out_w,
          "conv backward output-gradient shape mismatch");

  const std::int64_t x_stride = static_cast<std::int64_t>(d.in_c) * d.in_h * d.in_w;
  const std::int64_t y_stride = static_cast<std::int64_t>(d.out_c) * d.col_cols;
  const bool pw = pointwise(spec, d);
  const int shards = kShards;

  // per-shard accumulators keep the reduction order fixed
  std::vector<std::vector<double>> dw_part, db_part;
  if (dw) dw_part.assign(shards, std::vector<double>(static_cast<std::size_t>(w.size()), 0.0));
  if (db) db_part.assign(shards, std::vector<double>(static_cast<std::size_t>(d.out_c), 0.0));

  ThreadPool::instance().for_shards(
      d.batch,
      [&](int shard, std::int64_t b0, std::int64_t b1) {
        std::vector<double> col, dcol;
        if (!pw) {
          if (dw) col.resize(static_cast<std::size_t>(d.col_rows * d.col_cols));
          if (dx) dcol.resize(static_cast<std::size_t>(d.col_rows * d.col_cols));
        }
        for (std::int64_t b = b0; b < b1; ++b) {
          const double* xs = x.data() + b * x_stride;
          const double* dys = dy.data() + b * y_stride;
          for (int g = 0; g < spec.groups; ++g) {
            ConstMatMap wg(w.data() + static_cast<std::int64_t>(g) * d.group_out * d.col_rows,
                           d.group_out, d.col_rows);
            ConstMatMap dyg(dys + static_cast<std::int64_t>(g) * d.group_out * d.col_cols,
                            d.group_out, d.col_cols);
            if (dw) {
              MatMap dwg(dw_part[shard].data() +
                             static_cast<std::int64_t>(g) * d.group_out * d.col_rows,
                         d.group_out, d.col_rows);
              if (pw) {
                ConstMatMap xg(xs + static_cast<std::int64_t>(g) * d.group_in * d.col_cols,
                               d.group_in, d.col_cols);
                dwg.noalias() += dyg * xg.transpose();
              } else {
                im2col(xs, d, spec, g, col.data());
                ConstMatMap cg(col.data(), d.col_rows, d.col_cols);
                dwg.noalias() += dyg * cg.transpose();
              }
            }
            if (dx) {
              double* dxs = dx->data() + b * x_stride;
              if (pw) {
                MatMap dxg(dxs + static_cast<std::int64_t>(g) * d.group_in * d.col_cols,
                           d.group_in, d.col_cols);
                dxg.noalias() += wg.transpose() * dyg;
              } else {
                MatMap dcg(dcol.data(), d.col_rows, d.col_cols);
                dcg.noalias() = wg.transpose() * dyg;
                col2im_accumulate(dcol.data(), d, spec, g, dxs);
              }
            }
          }
          if (db) {
            for (int c = 0; c < d.out_c; ++c) {
              const double* row = dys + static_cast<std::int64_t>(c) * d.col_cols;
              double acc = 0.0;
              for (std::int64_t i = 0; i < d.col_cols; ++i) acc += row[i];
              db_part[shard][static_cast<std::size_t>(c)] += acc;
            }
          }
        }
      },
      shards);

  if (dw) {
    for (int s = 0; s < shards; ++s)
      dw->as_vector() += Eigen::Map<const Eigen::VectorXd>(dw_part[s].data(), w.size());
  }
  if (db) {
    for (int s = 0; s < shards; ++s)
      db->as_vector() += Eigen::Map<const Eigen::VectorXd>(db_part[s].data(), d.out_c);
  }
}

Tensord dense_forward(const Tensord& x, const Tensord& w, const Tensord* bias) {
  require(x.rank() == 2 && w.rank() == 2, "dense expects rank-2 input and weights");
  const int batch = x.extent(0), in_d = x.extent(1), out_d = w.extent(1);
  require(w.extent(0) == in_d, "dense input width " + std::to_string(in_d) +
                                   " does not match weight rows " + std::to_string(w.extent(0)));
  if (bias) require(bias->size() == out_d, "dense bias length mismatch");
  Tensord y({batch, out_d});
  ConstMatMap wm(w.data(), in_d, out_d);
  ThreadPool::instance().for_shards(batch, [&](int, std::int64_t b0, std::int64_t b1) {
    if (b0 >= b1) return;
    ConstMatMap xb(x.data() + b0 * in_d, b1 - b0, in_d);
    MatMap yb(y.data() + b0 * out_d, b1 - b0, out_d);
    yb.noalias() = xb * wm;
    if (bias) yb.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias->data(), out_d);
  });
  return y;
}

void dense_backward(const Tensord& x, const Tensord& w, const Tensord& dy, Tensord* dx,
                    Tensord* dw, Tensord* db) {
  const int batch = x.extent(0), in_d = x.extent(1), out_d = w.extent(1);
  require(dy.rank() == 2 && dy.extent(0) == batch && dy.extent(1) == out_d,
          "dense backward output-gradient shape mismatch");
  ConstMatMap wm(w.data(), in_d, out_d);
  const int shards = kShards;
  std::vector<RowMat> dw_part;
  std::vector<Eigen::VectorXd> db_part;
  if (dw) dw_part.assign(shards, RowMat::Zero(in_d, out_d));
  if (db) db_part.assign(shards, Eigen::VectorXd::Zero(out_d));

  ThreadPool::instance().for_shards(
      batch,
      [&](int shard, std::int64_t b0, std::int64_t b1) {
        if (b0 >= b1) return;
        ConstMatMap dyb(dy.data() + b0 * out_d, b1 - b0, out_d);
        ConstMatMap xb(x.data() + b0 * in_d, b1 - b0, in_d);
        if (dx) {
          MatMap dxb(dx->data() + b0 * in_d, b1 - b0, in_d);
          dxb.noalias() += dyb * wm.transpose();
        }
        if (dw) dw_part[shard].noalias() += xb.transpose() * dyb;
        if (db) db_part[shard].noalias() += dyb.colwise().sum().transpose();
      },
      shards);

  if (dw) {
    MatMap dwm(dw->data(), in_d, out_d);
    for (int s = 0; s < shards; ++s) dwm += dw_part[s];
  }
  if (db) {
    for (int s = 0; s < shards; ++s) db->as_vector() += db_part[s];
  }
}

Tensord batchnorm_forward(const Tensord& x, const Tensord& gamma, const Tensord& beta, Mode mode,
                          double eps, double momentum, Tensord& running_mean,
                          Tensord& running_var, BnBatchStats* stats) {
  BnDims d = bn_dims(x, gamma, beta);
  require(running_mean.size() == d.channels && running_var.size() == d.channels,
          "batch_norm running statistics must have one entry per channel");
  Tensord y(x.shape());

  std::vector<double> mean(static_cast<std::size_t>(d.channels));
  std::vector<double> inv_std(static_cast<std::size_t>(d.channels));

  if (mode == Mode::train) {
    const int shards = kShards;
    std::vector<std::vector<double>> sum_part(shards),
        sq_part(shards);
    for (int s = 0; s < shards; ++s) {
      sum_part[s].assign(static_cast<std::size_t>(d.channels), 0.0);
      sq_part[s].assign(static_cast<std::size_t>(d.channels), 0.0);
    }
    ThreadPool::instance().for_shards(
        d.batch,
        [&](int shard, std::int64_t b0, std::int64_t b1) {
          for (std::int64_t b = b0; b < b1; ++b) {
            for (int c = 0; c < d.channels; ++c) {
              const double* p = x.data() + (b * d.channels + c) * d.spatial;
              double s1 = 0.0, s2 = 0.0;
              for (std::int64_t i = 0; i < d.spatial; ++i) {
                s1 += p[i];
                s2 += p[i] * p[i];
              }
              sum_part[shard][static_cast<std::size_t>(c)] += s1;
              sq_part[shard][static_cast<std::size_t>(c)] += s2;
            }
          }
        },
        shards);
    const double count = static_cast<double>(d.per_channel_count);
    for (int c = 0; c < d.channels; ++c) {
      double s1 = 0.0, s2 = 0.0;
      for (int s = 0; s < shards; ++s) {
        s1 += sum_part[s][static_cast<std::size_t>(c)];
        s2 += sq_part[s][static_cast<std::size_t>(c)];
      }
      const double mu = s1 / count;
      double var = s2 / count - mu * mu;
      if (var < 0.0) var = 0.0;  // cancellation guard
      mean[static_cast<std::size_t>(c)] = mu;
      inv_std[static_cast<std::size_t>(c)] = 1.0 / std::sqrt(var + eps);
      running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mu;
      running_var[c] = (1.0 - momentum) * running_var[c] + momentum * var;
    }
  } else {
    for (int c = 0; c < d.channels; ++c) {
      mean[static_cast<std::size_t>(c)] = running_mean[c];
      inv_std[static_cast<std::size_t>(c)] = 1.0 / std::sqrt(running_var[c] + eps);
    }
  }

  ThreadPool::instance().for_shards(d.batch, [&](int, std::int64_t b0, std::int64_t b1) {
    for (std::int64_t b = b0; b < b1; ++b) {
      for (int c = 0; c < d.channels; ++c) {
        const double* p = x.data() + (b * d.channels + c) * d.spatial;
        double* q = y.data() + (b * d.channels + c) * d.spatial;
        const double scale = gamma[c] * inv_std[static_cast<std::size_t>(c)];
        const double shift = beta[c] - mean[static_cast<std::size_t>(c)] * scale;
        for (std::int64_t i = 0; i < d.spatial; ++i) q[i] = p[i] * scale + shift;
      }
    }
  });

  if (stats) {
    stats->mean = std::move(mean);
    stats->inv_std = std::move(inv_std);
  }
  return y;
}

void batchnorm_backward(const Tensord& x, const Tensord& gamma, const BnBatchStats& stats,
                        const Tensord& dy, Tensord* dx, Tensord* dgamma, Tensord* dbeta) {
  Tensord beta_dummy = Tensord::zeros({gamma.extent(0)});
  BnDims d = bn_dims(x, gamma, beta_dummy);
  require(dy.same_shape(x), "batch_norm backward gradient shape mismatch");
  const int shards = kShards;

  std::vector<std::vector<double>> s1_part(shards), s2_part(shards);
  for (int s = 0; s < shards; ++s) {
    s1_part[s].assign(static_cast<std::size_t>(d.channels), 0.0);
    s2_part[s].assign(static_cast<std::size_t>(d.channels), 0.0);
  }
  ThreadPool::instance().for_shards(
      d.batch,
      [&](int shard, std::int64_t b0, std::int64_t b1) {
        for (std::int64_t b = b0; b < b1; ++b) {
          for (int c = 0; c < d.channels; ++c) {
            const std::size_t cc = static_cast<std::size_t>(c);
            const double* px = x.data() + (b * d.channels + c) * d.spatial;
            const double* pdy = dy.data() + (b * d.channels + c) * d.spatial;
            double a1 = 0.0, a2 = 0.0;
            for (std::int64_t i = 0; i < d.spatial; ++i) {
              a1 += pdy[i];
              a2 += pdy[i] * (px[i] - stats.mean[cc]) * stats.inv_std[cc];
            }
            s1_part[shard][cc] += a1;
            s2_part[shard][cc] += a2;
          }
        }
      },
      shards);

  std::vector<double> s1(static_cast<std::size_t>(d.channels), 0.0),
      s2(static_cast<std::size_t>(d.channels), 0.0);
  for (int c = 0; c < d.channels; ++c) {
    for (int s = 0; s < shards; ++s) {
      s1[static_cast<std::size_t>(c)] += s1_part[s][static_cast<std::size_t>(c)];
      s2[static_cast<std::size_t>(c)] += s2_part[s][static_cast<std::size_t>(c)];
    }
  }
  if (dgamma)
    for (int c = 0; c < d.channels; ++c) (*dgamma)[c] += s2[static_cast<std::size_t>(c)];
  if (dbeta)
    for (int c = 0; c < d.channels; ++c) (*dbeta)[c] += s1[static_cast<std::size_t>(c)];

  if (dx) {
    const double count = static_cast<double>(d.per_channel_count);
    ThreadPool::instance().for_shards(d.batch, [&](int, std::int64_t b0, std::int64_t b1) {
      for (std::int64_t b = b0; b < b1; ++b) {
        for (int c = 0; c < d.channels; ++c) {
          const std::size_t cc = static_cast<std::size_t>(c);
          const double* px = x.data() + (b * d.channels + c) * d.spatial;
          const double* pdy = dy.data() + (b * d.channels + c) * d.spatial;
          double* pdx = dx->data() + (b * d.channels + c) * d.spatial;
          const double g = gamma[c] * stats.inv_std[cc];
          const double m1 = s1[cc] / count;
          const double m2 = s2[cc] / count;
          for (std::int64_t i = 0; i < d.spatial; ++i) {
            const double xhat = (px[i] - stats.mean[cc]) * stats.inv_std[cc];
            pdx[i] += g * (pdy[i] - m1 - xhat * m2);
          }
        }
      }
    });
  }
}

Tensord relu_forward(const Tensord& x) {
  Tensord y(x.shape());
  ThreadPool::instance().for_shards(x.size(), [&](int, std::int64_t i0, std::int64_t i1) {
    for (std::int64_t i = i0; i < i1; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  });
  return y;
}

void relu_backward(const Tensord& x, const Tensord& dy, Tensord& dx_accum) {
  ThreadPool::instance().for_shards(x.size(), [&](int, std::int64_t i0, std::int64_t i1) {
    for (std::int64_t i = i0; i < i1; ++i)
      if (x[i] > 0.0) dx_accum[i] += dy[i];
  });
}

Tensord sigmoid_forward(const Tensord& x) {
  Tensord y(x.shape());
  constexpr double lo = std::numeric_limits<double>::denorm_min();
  const double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  ThreadPool::instance().for_shards(x.size(), [&](int, std::int64_t i0, std::int64_t i1) {
    for (std::int64_t i = i0; i < i1; ++i) {
      const double v = x[i];
      double s;
      if (v >= 0.0) {
        s = 1.0 / (1.0 + std::exp(-v));
      } else {
        const double e = std::exp(v);
        s = e / (1.0 + e);
      }
      if (s >= 1.0) s = hi;
      if (s <= 0.0) s = lo;
      y[i] = s;
    }
  });
  return y;
}

void sigmoid_backward(const Tensord& y, const Tensord& dy, Tensord& dx_accum) {
  ThreadPool::instance().for_shards(y.size(), [&](int, std::int64_t i0, std::int64_t i1) {
    for (std::int64_t i = i0; i < i1; ++i) dx_accum[i] += dy[i] * y[i] * (1.0 - y[i]);
  });
}

void channel_pool_forward(const Tensord& x, Tensord& avg, Tensord& mx, std::vector<int>& argmax) {
  if (x.rank() != 4) throw ShapeError("channel_pool expects rank-4 input");
  const int batch = x.extent(0), channels = x.extent(1);
  const std::int64_t spatial = static_cast<std::int64_t>(x.extent(2)) * x.extent(3);
  avg = Tensord({batch, 1, x.extent(2), x.extent(3)});
  mx = Tensord({batch, 1, x.extent(2), x.extent(3)});
  argmax.assign(static_cast<std::size_t>(batch * spatial), 0);
  ThreadPool::instance().for_shards(batch, [&](int, std::int64_t b0, std::int64_t b1) {
    for (std::int64_t b = b0; b < b1; ++b) {
      const double* base = x.data() + b * channels * spatial;
      double* pa = avg.data() + b * spatial;
      double* pm = mx.data() + b * spatial;
      int* pi = argmax.data() + b * spatial;
      for (std::int64_t i = 0; i < spatial; ++i) {
        double sum = base[i];
        double best = base[i];
        int best_c = 0;
        for (int c = 1; c < channels; ++c) {
          const double v = base[c * spatial + i];
          sum += v;
          if (v > best) {
            best = v;
            best_c = c;
          }
        }
        pa[i] = sum / channels;
        pm[i] = best;
        pi[i] = best_c;
      }
    }
  });
}

Tensord concat_channels_forward(const std::vector<const Tensord*>& parts) {
  if (parts.empty()) throw UsageError("concat needs at least one input");
  const Tensord& first = *parts.front();
  if (first.rank() != 4) throw ShapeError("concat expects rank-4 inputs");
  int channels = 0;
  for (const Tensord* p : parts) {
    if (p->rank() != 4 || p->extent(0) != first.extent(0) || p->extent(2) != first.extent(2) ||
        p->extent(3) != first.extent(3))
      throw ShapeError("concat inputs must agree on batch and spatial extents");
    channels += p->extent(1);
  }
  const int batch = first.extent(0);
  const std::int64_t spatial = static_cast<std::int64_t>(first.extent(2)) * first.extent(3);
  Tensord y({batch, channels, first.extent(2), first.extent(3)});
  ThreadPool::instance().for_shards(batch, [&](int, std::int64_t b0, std::int64_t b1) {
    for (std::int64_t b = b0; b < b1; ++b) {
      double* dst = y.data() + b * channels * spatial;
      for (const Tensord* p : parts) {
        const std::int64_t n = static_cast<std::int64_t>(p->extent(1)) * spatial;
        std::memcpy(dst, p->data() + b * n, sizeof(double) * static_cast<std::size_t>(n));
        dst += n;
      }
    }
  });
  return y;
}

Tensord broadcast_mul_forward(const Tensord& mask, const Tensord& x) {
  if (mask.rank() != 4 || x.rank() != 4 || mask.extent(1) != 1 ||
      mask.extent(0) != x.extent(0) || mask.extent(2) != x.extent(2) ||
      mask.extent(3) != x.extent(3))
    throw ShapeError("broadcast_mul expects mask [B,1,H,W] matching x [B,C,H,W]");
  const int batch = x.extent(0), channels = x.extent(1);
  const std::int64_t spatial = static_cast<std::int64_t>(x.extent(2)) * x.extent(3);
  Tensord y(x.shape());
  ThreadPool::instance().for_shards(batch, [&](int, std::int64_t b0, std::int64_t b1) {
    for (std::int64_t b = b0; b < b1; ++b) {
      const double* pm = mask.data() + b * spatial;
      for (int c = 0; c < channels; ++c) {
        const double* px = x.data() + (b * channels + c) * spatial;
        double* py = y.data() + (b * channels + c) * spatial;
        for (std::int64_t i = 0; i < spatial; ++i) py[i] = px[i] * pm[i];
      }
    }
  });
  return y;
}

ResamplePlan make_resample_plan(int in_h, int in_w, int out_h, int out_w) {
  auto axis = [](int in, int out) {
    std::vector<std::vector<std::pair<int, double>>> map(static_cast<std::size_t>(out));
    const double box = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
      const double lo = o * box, hi = (o + 1) * box;
      for (int i = static_cast<int>(std::floor(lo)); i < in; ++i) {
        const double overlap = std::min(hi, static_cast<double>(i + 1)) - std::max(lo, static_cast<double>(i));
        if (overlap <= 1e-12) {
          if (static_cast<double>(i) >= hi) break;
          continue;
        }
        map[static_cast<std::size_t>(o)].emplace_back(i, overlap / box);
      }
    }
    return map;
  };
  ResamplePlan plan;
  plan.rows = axis(in_h, out_h);
  plan.cols = axis(in_w, out_w);
  return plan;
}

Tensord area_resize_forward(const Tensord& x, const ResamplePlan& plan, int out_h, int out_w) {
  if (x.rank() != 4) throw ShapeError("area_resize expects rank-4 input");
  const int batch = x.extent(0), channels = x.extent(1), in_w = x.extent(3);
  Tensord y({batch, channels, out_h, out_w});
  const std::int64_t in_plane = static_cast<std::int64_t>(x.extent(2)) * in_w;
  const std::int64_t out_plane = static_cast<std::int64_t>(out_h) * out_w;
  ThreadPool::instance().for_shards(batch, [&](int, std::int64_t b0, std::int64_t b1) {
    for (std::int64_t b = b0; b < b1; ++b) {
      for (int c = 0; c < channels; ++c) {
        const double* px = x.data() + (b * channels + c) * in_plane;
        double* py = y.data() + (b * channels + c) * out_plane;
        for (int oh = 0; oh < out_h; ++oh) {
          for (int ow = 0; ow < out_w; ++ow) {
            double acc = 0.0;
            for (const auto& [ih, wh] : plan.rows[static_cast<std::size_t>(oh)])
              for (const auto& [iw, ww] : plan.cols[static_cast<std::size_t>(ow)])
                acc += wh * ww * px[static_cast<std::int64_t>(ih) * in_w + iw];
            py[static_cast<std::int64_t>(oh) * out_w + ow] = acc;
          }
        }
      }
    }
  });
  return y;
}

void area_resize_backward(const Tensord& dy, const ResamplePlan& plan, Tensord& dx_accum) {
  const int batch = dx_accum.extent(0), channels = dx_accum.extent(1), in_w = dx_accum.extent(3);
  const int out_h = dy.extent(2), out_w = dy.extent(3);
  const std::int64_t in_plane = static_cast<std::int64_t>(dx_accum.extent(2)) * in_w;
  const std::int64_t out_plane = static_cast<std::int64_t>(out_h) * out_w;
  ThreadPool::instance().for_shards(batch, [&](int, std::int64_t b0, std::int64_t b1) {
    for (std::int64_t b = b0; b < b1; ++b) {
      for (int c = 0; c < channels; ++c) {
        const double* pdy = dy.data() + (b * channels + c) * out_plane;
        double* pdx = dx_accum.data() + (b * channels + c) * in_plane;
        for (int oh = 0; oh < out_h; ++oh) {
          for (int ow = 0; ow < out_w; ++ow) {
            const double g = pdy[static_cast<std::int64_t>(oh) * out_w + ow];
            for (const auto& [ih, wh] : plan.rows[static_cast<std::size_t>(oh)])
              for (const auto& [iw, ww] : plan.cols[static_cast<std::size_t>(ow)])
                pdx[static_cast<std::int64_t>(ih) * in_w + iw] += wh * ww * g;
          }
        }
      }
    }
  });
}

Tensord global_avg_pool_forward(const Tensord& x) {
  if (x.rank() != 4) throw ShapeError("global_avg_pool expects rank-4 input");
  const int batch = x.extent(0), channels = x.extent(1);
  const std::int64_t spatial = static_cast<std::int64_t>(x.extent(2)) * x.extent(3);
  Tensord y({batch, channels});
  ThreadPool::instance().for_shards(batch, [&](int, std::int64_t b0, std::int64_t b1) {
    for (std::int64_t b = b0; b < b1; ++b) {
      for (int c = 0; c < channels; ++c) {
        const double* p = x.data() + (b * channels + c) * spatial;
        double acc = 0.0;
        for (std::int64_t i = 0; i < spatial; ++i) acc += p[i];
        y[b * channels + c] = acc / static_cast<double>(spatial);
      }
    }
  });
  return y;
}

double softmax_cross_entropy(const Tensord& logits, const std::vector<int>& labels,
                             Tensord* grad) {
  if (logits.rank() != 2) throw ShapeError("cross-entropy expects rank-2 logits");
  const int batch = logits.extent(0), classes = logits.extent(1);
  if (static_cast<int>(labels.size()) != batch)
    throw ShapeError("label count does not match batch size");
  for (int b = 0; b < batch; ++b)
    if (labels[static_cast<std::size_t>(b)] < 0 || labels[static_cast<std::size_t>(b)] >= classes)
      throw LabelError("label " + std::to_string(labels[static_cast<std::size_t>(b)]) +
                       " outside [0, " + std::to_string(classes) + ")");
  if (grad && !grad->same_shape(logits)) *grad = Tensord(logits.shape());

  double total = 0.0;
  for (int b = 0; b < batch; ++b) {
    const double* row = logits.data() + static_cast<std::int64_t>(b) * classes;
    double mx = row[0];
    for (int c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
    double sum = 0.0;
    for (int c = 0; c < classes; ++c) sum += std::exp(row[c] - mx);
    const int y = labels[static_cast<std::size_t>(b)];
    total += std::log(sum) - (row[y] - mx);
    if (grad) {
      double* g = grad->data() + static_cast<std::int64_t>(b) * classes;
      for (int c = 0; c < classes; ++c)
        g[c] = std::exp(row[c] - mx) / sum / static_cast<double>(batch);
      g[y] -= 1.0 / static_cast<double>(batch);
    }
  }
  return total / static_cast<double>(batch);
}

Tensord softmax(const Tensord& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax expects rank-2 logits");
  const int batch = logits.extent(0), classes = logits.extent(1);
  Tensord p(logits.shape());
  for (int b = 0; b < batch; ++b) {
    const double* row = logits.data() + static_cast<std::int64_t>(b) * classes;
    double* q = p.data() + static_cast<std::int64_t>(b) * classes;
    double mx = row[0];
    for (int c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
    double sum = 0.0;
    for (int c = 0; c < classes; ++c) {
      q[c] = std::exp(row[c] - mx);
      sum += q[c];
    }
    for (int c = 0; c < classes; ++c) q[c] /= sum;
  }
  return p;
}

}  // namespace rfp::nn
