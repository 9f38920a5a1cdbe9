// Named parameter map with per-parameter Adam state and a flat binary
// checkpoint format:
//   magic "GPIT", version u32, count u32, then per entry:
//   name_len u32, name bytes, rank u32, dims u32[rank], payload f64[] (LE).
// Optimiser moments are stored as extra entries under the "opt." prefix so a
// checkpoint round-trips byte-identically through save -> load -> save.
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "gpit/tape.hpp"
#include "gpit/tensor.hpp"

namespace gpit {

template <class S>
using GradMapT = std::map<std::string, MatX<S>>;
using GradMap = GradMapT<double>;

template <class S>
using BindingsT = std::map<std::string, VarT<S>>;
using Bindings = BindingsT<double>;

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_f64(std::ostream& os, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline double read_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

}  // namespace detail

template <class S>
struct AdamStateT {
  MatX<S> m;
  MatX<S> v;
  long step = 0;
  bool initialised = false;
};

template <class S>
class ParamStoreT {
 public:
  TensorT<S>& add(const std::string& name, TensorT<S> t) {
    if (name.empty() || name.rfind("opt.", 0) == 0)
      throw std::invalid_argument("ParamStore: reserved or empty name '" + name + "'");
    if (params_.count(name)) throw std::invalid_argument("ParamStore: duplicate name '" + name + "'");
    t.requires_grad = true;
    return params_.emplace(name, std::move(t)).first->second;
  }

  bool has(const std::string& name) const { return params_.count(name) != 0; }

  TensorT<S>& at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::invalid_argument("ParamStore: unknown parameter '" + name + "'");
    return it->second;
  }
  const TensorT<S>& at(const std::string& name) const {
    return const_cast<ParamStoreT*>(this)->at(name);
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& kv : params_) out.push_back(kv.first);
    return out;
  }

  size_t size() const { return params_.size(); }

  Index coordinate_count() const {
    Index n = 0;
    for (const auto& kv : params_) n += kv.second.size();
    return n;
  }

  VarT<S> bind(TapeT<S>& tape, const std::string& name) { return tape.leaf(at(name)); }

  BindingsT<S> bind_all(TapeT<S>& tape) {
    BindingsT<S> out;
    for (auto& kv : params_) out.emplace(kv.first, tape.leaf(kv.second));
    return out;
  }

  // Standard Adam with bias correction; one step over every gradient entry.
  void adam_step(const GradMapT<S>& grads, S lr, S beta1, S beta2, S eps) {
    for (const auto& kv : grads) {
      auto it = params_.find(kv.first);
      if (it == params_.end())
        throw std::invalid_argument("adam_step: gradient for unknown parameter '" + kv.first + "'");
      TensorT<S>& p = it->second;
      const MatX<S>& g = kv.second;
      if (g.rows() != p.rows() || g.cols() != p.cols())
        throw std::invalid_argument("adam_step: gradient shape mismatch for '" + kv.first + "'");
      AdamStateT<S>& st = opt_[kv.first];
      if (!st.initialised) {
        st.m = MatX<S>::Zero(p.rows(), p.cols());
        st.v = MatX<S>::Zero(p.rows(), p.cols());
        st.initialised = true;
      }
      st.step += 1;
      st.m = beta1 * st.m + (S(1) - beta1) * g;
      st.v = beta2 * st.v + (S(1) - beta2) * g.cwiseProduct(g);
      const S bc1 = S(1) - std::pow(beta1, static_cast<S>(st.step));
      const S bc2 = S(1) - std::pow(beta2, static_cast<S>(st.step));
      MatX<S> mhat = st.m / bc1;
      MatX<S> vhat = st.v / bc2;
      p.mat() -= lr * (mhat.array() / (vhat.array().sqrt() + eps)).matrix();
      if (!p.all_finite())
        throw std::runtime_error("adam_step: parameter '" + kv.first + "' became non-finite");
    }
  }

  const AdamStateT<S>* adam_state(const std::string& name) const {
    auto it = opt_.find(name);
    return it == opt_.end() ? nullptr : &it->second;
  }

  void save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
    // Entry map is assembled first so the file is sorted by name.
    std::map<std::string, std::pair<int, const MatX<S>*>> entries;
    std::map<std::string, MatX<S>> scratch;  // owns synthesised step-count tensors
    for (const auto& kv : params_)
      entries.emplace(kv.first, std::make_pair(kv.second.rank(), &kv.second.mat()));
    for (const auto& kv : opt_) {
      if (!kv.second.initialised) continue;
      const TensorT<S>& p = params_.at(kv.first);
      entries.emplace("opt.m." + kv.first, std::make_pair(p.rank(), &kv.second.m));
      entries.emplace("opt.v." + kv.first, std::make_pair(p.rank(), &kv.second.v));
      scratch.emplace("opt.t." + kv.first,
                      MatX<S>::Constant(1, 1, static_cast<S>(kv.second.step)));
    }
    for (const auto& kv : scratch) entries.emplace(kv.first, std::make_pair(0, &kv.second));

    os.write("GPIT", 4);
    detail::write_u32(os, 1u);
    detail::write_u32(os, static_cast<std::uint32_t>(entries.size()));
    for (const auto& kv : entries) {
      detail::write_u32(os, static_cast<std::uint32_t>(kv.first.size()));
      os.write(kv.first.data(), static_cast<std::streamsize>(kv.first.size()));
      const int rank = kv.second.first;
      const MatX<S>& m = *kv.second.second;
      detail::write_u32(os, static_cast<std::uint32_t>(rank));
      if (rank == 1) {
        detail::write_u32(os, static_cast<std::uint32_t>(m.cols()));
      } else if (rank == 2) {
        detail::write_u32(os, static_cast<std::uint32_t>(m.rows()));
        detail::write_u32(os, static_cast<std::uint32_t>(m.cols()));
      }
      for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c) detail::write_f64(os, m(r, c));
    }
    if (!os) throw std::runtime_error("checkpoint: write to '" + path + "' failed");
  }

  static ParamStoreT load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != "GPIT")
      throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
    const std::uint32_t version = detail::read_u32(is);
    if (version != 1u)
      throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    const std::uint32_t count = detail::read_u32(is);

    ParamStoreT out;
    std::map<std::string, TensorT<S>> raw;
    for (std::uint32_t e = 0; e < count; ++e) {
      const std::uint32_t name_len = detail::read_u32(is);
      std::string name(name_len, '\0');
      is.read(name.data(), name_len);
      if (!is) throw std::runtime_error("checkpoint: truncated file");
      const std::uint32_t rank = detail::read_u32(is);
      if (rank > 2) throw std::runtime_error("checkpoint: unsupported rank for '" + name + "'");
      Index rows = 1, cols = 1;
      if (rank == 1) {
        cols = static_cast<Index>(detail::read_u32(is));
      } else if (rank == 2) {
        rows = static_cast<Index>(detail::read_u32(is));
        cols = static_cast<Index>(detail::read_u32(is));
      }
      TensorT<S> t = TensorT<S>::from_rank(static_cast<int>(rank), rows, cols);
      for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < cols; ++c) t(r, c) = detail::read_f64(is);
      raw.emplace(std::move(name), std::move(t));
    }

    for (auto& kv : raw)
      if (kv.first.rfind("opt.", 0) != 0) out.add(kv.first, kv.second);
    for (auto& kv : raw) {
      if (kv.first.rfind("opt.", 0) != 0) continue;
      const std::string rest = kv.first.substr(4);
      if (rest.size() < 3 || rest[1] != '.')
        throw std::runtime_error("checkpoint: malformed optimiser entry '" + kv.first + "'");
      const char kind = rest[0];
      const std::string pname = rest.substr(2);
      if (!out.has(pname))
        throw std::runtime_error("checkpoint: optimiser state for unknown parameter '" + pname + "'");
      AdamStateT<S>& st = out.opt_[pname];
      st.initialised = true;
      if (kind == 'm') st.m = kv.second.mat();
      else if (kind == 'v') st.v = kv.second.mat();
      else if (kind == 't') st.step = static_cast<long>(kv.second.mat()(0, 0));
      else throw std::runtime_error("checkpoint: malformed optimiser entry '" + kv.first + "'");
    }
    return out;
  }

 private:
  std::map<std::string, TensorT<S>> params_;
  std::map<std::string, AdamStateT<S>> opt_;
};

using ParamStore = ParamStoreT<double>;

// Runs the reverse sweep and collects gradients for the given bindings.
template <class S>
GradMapT<S> reverse_backward(TapeT<S>& tape, VarT<S> loss, const BindingsT<S>& bindings) {
  tape.backward(loss);
  GradMapT<S> grads;
  for (const auto& kv : bindings)
    if (tape.needs_grad(kv.second)) grads.emplace(kv.first, tape.grad(kv.second));
  return grads;
}

template <class S>
void adam_step(ParamStoreT<S>& store, const GradMapT<S>& grads, S lr, S beta1, S beta2, S eps) {
  store.adam_step(grads, lr, beta1, beta2, eps);
}

}  // namespace gpit
