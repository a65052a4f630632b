#pragma once

#include <random>

#include "ndvg/common.hpp"

namespace ndvg {

enum class Activation { None, Relu, Sigmoid };

template <typename T>
struct MlpLayer {
  MatX<T> W;   // (out, in)
  VecX<T> b;   // (out)
  MatX<T> gW;
  VecX<T> gb;
};

// Affine + ReLU stack with per-output head activations on the final layer.
template <typename T>
struct MlpParams {
  std::vector<MlpLayer<T>> layers;
  std::vector<Activation> head;  // one entry per final-layer output

  int in_dim() const { return int(layers.front().W.cols()); }
  int out_dim() const { return int(layers.back().W.rows()); }
  void zero_grads() {
    for (auto& l : layers) {
      l.gW.setZero();
      l.gb.setZero();
    }
  }

  template <typename U>
  MlpParams<U> cast() const {
    MlpParams<U> out;
    out.head = head;
    for (const auto& l : layers) {
      MlpLayer<U> m;
      m.W = l.W.template cast<U>();
      m.b = l.b.template cast<U>();
      m.gW = MatX<U>::Zero(l.W.rows(), l.W.cols());
      m.gb = VecX<U>::Zero(l.b.size());
      out.layers.push_back(std::move(m));
    }
    return out;
  }
};

// Pre-activations per layer plus the stack input, batched column-wise.
template <typename T>
struct MlpCache {
  MatX<T> input;           // (in, B)
  std::vector<MatX<T>> z;  // per layer (out_l, B)
};

template <typename T>
inline MatX<T> mlp_forward(const MlpParams<T>& params, const MatX<T>& X,
                           MlpCache<T>* cache = nullptr) {
  check(int(X.rows()) == params.in_dim(), "mlp input dimension mismatch");
  const int L = int(params.layers.size());
  if (cache) {
    cache->input = X;
    cache->z.resize(L);
  }
  MatX<T> a = X;
  for (int l = 0; l < L; ++l) {
    MatX<T> z = (params.layers[l].W * a).colwise() + params.layers[l].b;
    if (cache) cache->z[l] = z;
    if (l + 1 < L) {
      a = z.cwiseMax(T(0));
    } else {
      a = std::move(z);
      for (int r = 0; r < a.rows(); ++r) {
        if (params.head[r] == Activation::Sigmoid)
          for (int c = 0; c < a.cols(); ++c) a(r, c) = sigmoid(a(r, c));
      }
    }
  }
  return a;
}

template <typename T>
inline VecX<T> mlp_forward(const MlpParams<T>& params, const VecX<T>& x,
                           MlpCache<T>* cache = nullptr) {
  MatX<T> X = x;
  return mlp_forward(params, X, cache).col(0);
}

// Accumulates parameter gradients and returns the gradient w.r.t. the input.
template <typename T>
inline MatX<T> mlp_backward(MlpParams<T>& params, const MlpCache<T>& cache,
                            const MatX<T>& upstream) {
  const int L = int(params.layers.size());
  MatX<T> dz = upstream;
  for (int r = 0; r < dz.rows(); ++r) {
    if (params.head[r] == Activation::Sigmoid)
      for (int c = 0; c < dz.cols(); ++c) {
        const T s = sigmoid(cache.z[L - 1](r, c));
        dz(r, c) *= s * (T(1) - s);
      }
  }
  for (int l = L - 1; l >= 0; --l) {
    if (l == 0) {
      params.layers[l].gW.noalias() += dz * cache.input.transpose();
    } else {
      MatX<T> a = cache.z[l - 1].cwiseMax(T(0));
      params.layers[l].gW.noalias() += dz * a.transpose();
    }
    params.layers[l].gb += dz.rowwise().sum();
    if (l == 0) break;
    MatX<T> da = params.layers[l].W.transpose() * dz;
    dz = (cache.z[l - 1].array() > T(0)).template cast<T>() * da.array();
  }
  return params.layers[0].W.transpose() * dz;
}

template <typename T>
inline VecX<T> mlp_backward(MlpParams<T>& params, const MlpCache<T>& cache,
                            const VecX<T>& upstream) {
  MatX<T> U = upstream;
  return mlp_backward(params, cache, U).col(0);
}

// Uniform fan-in initialization, drawn at double precision so the same seed
// produces matching parameters across scalar instantiations.
template <typename T>
inline MlpParams<T> make_mlp(int in_dim, int width, int num_layers, int out_dim,
                             std::vector<Activation> head, uint32_t seed) {
  check(num_layers >= 1, "mlp needs at least one layer");
  check(int(head.size()) == out_dim, "head spec size must equal output dim");
  std::mt19937 rng(seed);
  MlpParams<T> p;
  p.head = std::move(head);
  for (int l = 0; l < num_layers; ++l) {
    const int in = (l == 0) ? in_dim : width;
    const int out = (l + 1 == num_layers) ? out_dim : width;
    MlpLayer<T> layer;
    layer.W.resize(out, in);
    layer.b.resize(out);
    const double bound = 1.0 / std::sqrt(double(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) layer.W(r, c) = T(dist(rng));
    for (int r = 0; r < out; ++r) layer.b(r) = T(dist(rng));
    layer.gW = MatX<T>::Zero(out, in);
    layer.gb = VecX<T>::Zero(out);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

// Deformation decoder: 4 affine layers of width 64 mapping the concatenated
// (encoded position, encoded time, grid feature) input to a linear 3-vector
// offset and a sigmoid occlusion weight. The offset head starts at zero so
// the field begins as the identity; the occlusion bias starts high so the
// gate begins nearly open.
template <typename T>
inline MlpParams<T> make_deform_net(int in_dim, uint32_t seed) {
  MlpParams<T> p = make_mlp<T>(in_dim, 64, 4, 4,
                               {Activation::None, Activation::None, Activation::None,
                                Activation::Sigmoid},
                               seed);
  auto& last = p.layers.back();
  for (int r = 0; r < 3; ++r) {
    last.W.row(r).setZero();
    last.b(r) = T(0);
  }
  last.b(3) = T(3);
  return p;
}

// Color decoder: 3 affine layers of width 128, sigmoid RGB output.
template <typename T>
inline MlpParams<T> make_color_net(int in_dim, uint32_t seed) {
  return make_mlp<T>(in_dim, 128, 3, 3,
                     {Activation::Sigmoid, Activation::Sigmoid, Activation::Sigmoid}, seed);
}

}  // namespace ndvg
