#pragma once

#include <string>

#include "ndvg/canonical.hpp"
#include "ndvg/deformation.hpp"

namespace ndvg {

template <typename T>
struct Model {
  DeformationField<T> deform;
  CanonicalField<T> canonical;

  Stage stage() const { return canonical.stage; }

  template <typename U>
  Model<U> cast() const {
    Model<U> m;
    m.deform.grid = deform.grid.template cast<U>();
    m.deform.net = deform.net.template cast<U>();
    m.deform.t_can = U(deform.t_can);
    m.deform.pos_enc = deform.pos_enc;
    m.deform.time_enc = deform.time_enc;
    m.canonical.density_grid = canonical.density_grid.template cast<U>();
    m.canonical.color_grid = canonical.color_grid.template cast<U>();
    if (canonical.color_net) m.canonical.color_net = canonical.color_net->template cast<U>();
    m.canonical.density_shift = U(canonical.density_shift);
    m.canonical.stage = canonical.stage;
    m.canonical.pos_enc = canonical.pos_enc;
    m.canonical.dir_enc = canonical.dir_enc;
    return m;
  }
};

// Flat view of one learnable tensor, used by the optimizer and checkpoints.
template <typename T>
struct ParamTensor {
  std::string name;
  T* values = nullptr;
  T* grads = nullptr;
  size_t size = 0;
  bool is_mlp = false;  // learning-rate group selector
  std::vector<long long> shape;
};

template <typename T>
inline void append_mlp_tensors(MlpParams<T>& net, const std::string& prefix,
                               std::vector<ParamTensor<T>>& out) {
  for (size_t l = 0; l < net.layers.size(); ++l) {
    auto& layer = net.layers[l];
    out.push_back({prefix + "." + std::to_string(l) + ".W", layer.W.data(), layer.gW.data(),
                   size_t(layer.W.size()), true,
                   {layer.W.rows(), layer.W.cols()}});
    out.push_back({prefix + "." + std::to_string(l) + ".b", layer.b.data(), layer.gb.data(),
                   size_t(layer.b.size()), true, {layer.b.size()}});
  }
}

template <typename T>
inline std::vector<ParamTensor<T>> param_tensors(Model<T>& m) {
  std::vector<ParamTensor<T>> out;
  auto add_grid = [&out](DenseGrid<T>& g, const std::string& name) {
    out.push_back({name, g.values.data(), g.grads.data(), g.values.size(), false,
                   {g.res[0], g.res[1], g.res[2], g.channels}});
  };
  add_grid(m.deform.grid, "deform.grid");
  append_mlp_tensors(m.deform.net, "deform.net", out);
  add_grid(m.canonical.density_grid, "canonical.density_grid");
  add_grid(m.canonical.color_grid, "canonical.color_grid");
  if (m.canonical.color_net) append_mlp_tensors(*m.canonical.color_net, "canonical.color_net", out);
  return out;
}

template <typename T>
inline void zero_all_grads(Model<T>& m) {
  m.deform.grid.zero_grads();
  m.deform.net.zero_grads();
  m.canonical.density_grid.zero_grads();
  m.canonical.color_grid.zero_grads();
  if (m.canonical.color_net) m.canonical.color_net->zero_grads();
}

}  // namespace ndvg
