// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#include "adapterforge/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "adapterforge/error.hpp"

namespace adapterforge {

ChannelAffine ChannelAffine::identity(int channels) {
  ChannelAffine a;
  a.channels = channels;
  a.matrix.assign(static_cast<std::size_t>(channels) * channels, 0.0);
  a.bias.assign(static_cast<std::size_t>(channels), 0.0);
  for (int i = 0; i < channels; ++i) a.at(i, i) = 1.0;
  return a;
}

ChannelAffine compose(const ChannelAffine& outer, const ChannelAffine& inner) {
  if (outer.channels != inner.channels) throw Error(ErrorKind::kDimension, "compose: channel mismatch");
  const int c = outer.channels;
  ChannelAffine r;
  r.channels = c;
  r.matrix.assign(static_cast<std::size_t>(c) * c, 0.0);
  r.bias = outer.bias;
  for (int o = 0; o < c; ++o) {
    for (int m = 0; m < c; ++m) {
      const double w = outer.at(o, m);
      r.bias[o] += w * inner.bias[m];
      for (int i = 0; i < c; ++i) r.at(o, i) += w * inner.at(m, i);
    }
  }
  return r;
}

ChannelAffine bn_as_affine(const BatchNormParams& bn) {
  const int c = bn.channels();
  ChannelAffine a = ChannelAffine::identity(c);
  for (int i = 0; i < c; ++i) {
    const double s = std::sqrt(static_cast<double>(bn.running_var[i]) + static_cast<double>(bn.eps));
    const double scale = static_cast<double>(bn.gamma[i]) / s;
    a.at(i, i) = scale;
    a.bias[i] = static_cast<double>(bn.beta[i]) - scale * bn.running_mean[i];
  }
  return a;
}

ChannelAffine conv1x1_as_affine(const ConvParams& conv) {
  if (conv.kernel() != 1 || conv.c_in() != conv.c_out()) {
    throw Error(ErrorKind::kDimension, "expected a square 1x1 convolution");
  }
  const int c = conv.c_out();
  ChannelAffine a;
  a.channels = c;
  a.matrix.assign(conv.weight.data().begin(), conv.weight.data().end());
  a.bias.assign(static_cast<std::size_t>(c), 0.0);
  if (conv.bias) {
    for (int i = 0; i < c; ++i) a.bias[i] = (*conv.bias)[i];
  }
  return a;
}

ChannelAffine fuse_step1(const Adapter& adapter) {
  if (!is_fusable(adapter.design)) {
    throw Error(ErrorKind::kUnsupportedFusion,
                std::string("adapter design ") + to_string(adapter.design) + " contains a nonlinearity");
  }
  const int c = adapter.channels();
  ChannelAffine path = ChannelAffine::identity(c);
  switch (adapter.design) {
    case AdapterDesign::kBnConv:
      path = compose(conv1x1_as_affine(adapter.convs[0]), bn_as_affine(adapter.bns[0]));
      break;
    case AdapterDesign::kConvBn:
      path = compose(bn_as_affine(adapter.bns[0]), conv1x1_as_affine(adapter.convs[0]));
      break;
    case AdapterDesign::kBnConvBnConv: {
      const ChannelAffine first = compose(conv1x1_as_affine(adapter.convs[0]), bn_as_affine(adapter.bns[0]));
      const ChannelAffine second = compose(conv1x1_as_affine(adapter.convs[1]), bn_as_affine(adapter.bns[1]));
      path = compose(second, first);
      break;
    }
    case AdapterDesign::kBnReluConv:
      break;
  }
  for (int i = 0; i < c; ++i) path.at(i, i) += 1.0;  // residual
  return path;
}

ChannelAffine fuse_step2(const ChannelAffine& w1b1, const BatchNormParams& host_bn) {
  if (host_bn.channels() != w1b1.channels) {
    throw Error(ErrorKind::kDimension, "fuse_step2: channel mismatch");
  }
  const int c = w1b1.channels;
  ChannelAffine r = w1b1;
  for (int o = 0; o < c; ++o) {
    const double s = std::sqrt(static_cast<double>(host_bn.running_var[o]) + static_cast<double>(host_bn.eps));
    const double g = host_bn.gamma[o];
    for (int m = 0; m < c; ++m) r.at(o, m) = g / s * w1b1.at(o, m);
    r.bias[o] = g * (w1b1.bias[o] - host_bn.running_mean[o]) / s + host_bn.beta[o];
  }
  return r;
}

FusedLayer fuse_step3(const ConvParams& host_conv, const ChannelAffine& w2b2, int source_layer_id) {
  const Shape ws = host_conv.weight.shape();
  if (ws.n != w2b2.channels) {
    throw Error(ErrorKind::kDimension, "fuse_step3: host conv has " + std::to_string(ws.n) +
                                           " outputs, mixing expects " + std::to_string(w2b2.channels));
  }
  const int c_out = ws.n;
  const std::size_t filter = static_cast<std::size_t>(ws.c) * ws.h * ws.w;
  FusedLayer out;
  out.source_layer_id = source_layer_id;
  out.conv.stride = host_conv.stride;
  out.conv.padding = host_conv.padding;
  out.conv.weight = Tensor(ws);
  out.conv.bias = Tensor::vector(static_cast<std::size_t>(c_out), 0.0f);
  std::vector<double> acc(filter);
  for (int o = 0; o < c_out; ++o) {
    std::fill(acc.begin(), acc.end(), 0.0);
    double b = w2b2.bias[o];
    for (int m = 0; m < c_out; ++m) {
      const double w = w2b2.at(o, m);
      const float* src = host_conv.weight.ptr() + static_cast<std::size_t>(m) * filter;
      for (std::size_t k = 0; k < filter; ++k) acc[k] += w * src[k];
      if (host_conv.bias) b += w * (*host_conv.bias)[m];
    }
    float* dst = out.conv.weight.ptr() + static_cast<std::size_t>(o) * filter;
    for (std::size_t k = 0; k < filter; ++k) dst[k] = static_cast<float>(acc[k]);
    (*out.conv.bias)[o] = static_cast<float>(b);
  }
  return out;
}

MicroUNet fuse_model(const MicroUNet& model, const AdapterSet& adapters,
                     const std::optional<std::vector<int>>& layer_ids) {
  if (model.any_fused()) throw Error(ErrorKind::kState, "model is already fused");
  adapters.validate(model);
  const std::vector<int> absorb = layer_ids.value_or(adapters.layer_ids());
  for (int id : absorb) {
    const Adapter* a = adapters.find(id);
    if (a == nullptr) throw Error(ErrorKind::kConfiguration, "no adapter on layer " + std::to_string(id));
    if (!is_fusable(a->design)) {
      throw Error(ErrorKind::kUnsupportedFusion,
                  std::string("adapter design ") + to_string(a->design) + " contains a nonlinearity");
    }
  }
  MicroUNet fused = model;
  for (const LayerSpec& s : model.layers()) {
    if (s.kind != LayerKind::kConv3x3 || !s.followed_by_bn) continue;
    const LayerParams& p = model.params(s.id);
    ChannelAffine step1 = ChannelAffine::identity(s.c_out);
    if (std::find(absorb.begin(), absorb.end(), s.id) != absorb.end()) {
      step1 = fuse_step1(*adapters.find(s.id));
    }
    const ChannelAffine step2 = fuse_step2(step1, *p.bn);
    fused.mark_fused(s.id, fuse_step3(p.conv, step2, s.id).conv);
  }
  return fused;
}

}  // namespace adapterforge
