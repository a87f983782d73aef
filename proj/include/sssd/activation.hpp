#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace sssd {

enum class Activation { gelu, silu, identity };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::gelu: return "gelu";
    case Activation::silu: return "silu";
    case Activation::identity: return "identity";
  }
  return "?";
}

inline Activation parse_activation(const std::string& s) {
  if (s == "gelu") return Activation::gelu;
  if (s == "silu") return Activation::silu;
  if (s == "identity") return Activation::identity;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

template <class S>
S sigmoid(S x) {
  return S(1) / (S(1) + std::exp(-x));
}

template <class S>
S activate(Activation a, S x) {
  switch (a) {
    case Activation::gelu: return S(0.5) * x * (S(1) + std::erf(x * S(M_SQRT1_2)));
    case Activation::silu: return x * sigmoid(x);
    case Activation::identity: return x;
  }
  return x;
}

template <class S>
S activate_grad(Activation a, S x) {
  switch (a) {
    case Activation::gelu: {
      const S cdf = S(0.5) * (S(1) + std::erf(x * S(M_SQRT1_2)));
      const S pdf = std::exp(S(-0.5) * x * x) * S(0.3989422804014327);
      return cdf + x * pdf;
    }
    case Activation::silu: {
      const S s = sigmoid(x);
      return s * (S(1) + x * (S(1) - s));
    }
    case Activation::identity: return S(1);
  }
  return S(1);
}

template <class T>
T apply_activation(Activation a, const T& x) {
  using S = typename T::Scalar;
  return x.unaryExpr([a](S v) { return activate(a, v); });
}

template <class T>
T activation_grad(Activation a, const T& x) {
  using S = typename T::Scalar;
  return x.unaryExpr([a](S v) { return activate_grad(a, v); });
}

}  // namespace sssd
