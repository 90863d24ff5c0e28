#pragma once

#include <vector>

#include "rfp/tensor.hpp"

namespace rfp::nn {

using rfp::Tensord;

enum class Mode { train, infer };
enum class Padding { valid, same };

struct ConvSpec {
  int kh = 1, kw = 1;
  int stride_h = 1, stride_w = 1;
  Padding padding = Padding::valid;
  int groups = 1;
};

struct ConvGeometry {
  int pad_top = 0, pad_left = 0;
  int out_h = 0, out_w = 0;
};

/// Output extents and padding for an input plane; throws ShapeError when the
/// kernel does not fit or the output would be empty.
ConvGeometry conv_geometry(int in_h, int in_w, const ConvSpec& spec);

/// Cross-correlation over [B,C,H,W] with weights [C_out, C_in/G, kh, kw] and
/// optional bias [C_out]. Grouped when spec.groups > 1 (channel counts must
/// divide evenly).
Tensord conv2d_forward(const Tensord& x, const Tensord& w, const Tensord* bias,
                       const ConvSpec& spec);

/// Accumulates input/weight/bias gradients for conv2d_forward. Any of the
/// destinations may be null to skip that path.
void conv2d_backward(const Tensord& x, const Tensord& w, const ConvSpec& spec, const Tensord& dy,
                     Tensord* dx, Tensord* dw, Tensord* db);

/// Affine map y = x.W + b over [B,D] with weights [D,D'].
Tensord dense_forward(const Tensord& x, const Tensord& w, const Tensord* bias);
void dense_backward(const Tensord& x, const Tensord& w, const Tensord& dy, Tensord* dx,
                    Tensord* dw, Tensord* db);

/// Per-channel batch statistics captured by the train-mode forward pass,
/// needed for the backward pass.
struct BnBatchStats {
  std::vector<double> mean;
  std::vector<double> inv_std;
};

/// Channel-axis batch normalization over rank-2 [B,C] or rank-4 [B,C,H,W]
/// tensors. Train mode normalizes by batch statistics and folds them into
/// the running estimates; infer mode reads the running estimates and leaves
/// them untouched.
Tensord batchnorm_forward(const Tensord& x, const Tensord& gamma, const Tensord& beta, Mode mode,
                          double eps, double momentum, Tensord& running_mean,
                          Tensord& running_var, BnBatchStats* stats);
void batchnorm_backward(const Tensord& x, const Tensord& gamma, const BnBatchStats& stats,
                        const Tensord& dy, Tensord* dx, Tensord* dgamma, Tensord* dbeta);

Tensord relu_forward(const Tensord& x);
void relu_backward(const Tensord& x, const Tensord& dy, Tensord& dx_accum);

/// Numerically stable logistic; outputs are clamped into the open interval
/// (0,1) at the representable boundary.
Tensord sigmoid_forward(const Tensord& x);
void sigmoid_backward(const Tensord& y, const Tensord& dy, Tensord& dx_accum);

/// Channel-axis average and max over [B,C,H,W], spatial layout preserved.
/// argmax records the winning channel per (b,h,w) cell, lowest index on ties.
void channel_pool_forward(const Tensord& x, Tensord& avg, Tensord& mx,
                          std::vector<int>& argmax);

Tensord concat_channels_forward(const std::vector<const Tensord*>& parts);

/// mask [B,1,H,W] broadcast-multiplied over all channels of x [B,C,H,W].
Tensord broadcast_mul_forward(const Tensord& mask, const Tensord& x);

/// Box-overlap average resampling of the spatial plane to (out_h, out_w).
/// Every output cell averages the input region it covers, with fractional
/// boundary weights; a fixed sparse linear map, so the backward pass is its
/// transpose.
struct ResamplePlan {
  std::vector<std::vector<std::pair<int, double>>> rows, cols;
};
ResamplePlan make_resample_plan(int in_h, int in_w, int out_h, int out_w);
Tensord area_resize_forward(const Tensord& x, const ResamplePlan& plan, int out_h, int out_w);
void area_resize_backward(const Tensord& dy, const ResamplePlan& plan, Tensord& dx_accum);

Tensord global_avg_pool_forward(const Tensord& x);  // [B,C,H,W] -> [B,C]

/// Mean over the batch of -log softmax(logits)[label], stabilized by
/// max-subtraction. grad, when non-null, receives (softmax - onehot)/B.
/// Throws LabelError for labels outside [0, N).
double softmax_cross_entropy(const Tensord& logits, const std::vector<int>& labels,
                             Tensord* grad);

/// Row-wise softmax probabilities of [B,N] logits.
Tensord softmax(const Tensord& logits);

}  // namespace rfp::nn
