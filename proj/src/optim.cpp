#include "ssetm/optim.hpp"

#include <cmath>

#include "ssetm/errors.hpp"

namespace ssetm {

Optimizer::Kind Optimizer::kind_from_string(const std::string& name) {
  if (name == "sgd") return Kind::sgd_momentum;
  if (name == "adam") return Kind::adam;
  throw ConfigError("unknown optimizer '" + name + "' (expected sgd or adam)");
}

Optimizer::Optimizer(Kind kind, double momentum, double weight_decay,
                     double beta1, double beta2, double eps)
    : kind_(kind),
      momentum_(momentum),
      weight_decay_(weight_decay),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps) {}

Optimizer Optimizer::from_config(const TrainConfig& tc) {
  return Optimizer(kind_from_string(tc.optimizer), tc.momentum,
                   tc.weight_decay, tc.adam_beta1, tc.adam_beta2, tc.adam_eps);
}

void Optimizer::bind(const ParamList& params) {
  if (!bound_) {
    v_.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i)
      v_[i].assign(static_cast<size_t>(params[i].second.numel()), 0.0);
    if (kind_ == Kind::adam) {
      m_.resize(params.size());
      for (size_t i = 0; i < params.size(); ++i)
        m_[i].assign(static_cast<size_t>(params[i].second.numel()), 0.0);
    }
    bound_ = true;
    return;
  }
  if (v_.size() != params.size())
    throw ContractError("optimizer bound to " + std::to_string(v_.size()) +
                        " parameters, got " + std::to_string(params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    if (v_[i].size() != static_cast<size_t>(params[i].second.numel()))
      throw ContractError("optimizer buffer shape mismatch for parameter '" +
                          params[i].first + "'");
  }
}

void Optimizer::step(ParamList& params, double lr) {
  bind(params);
  ++t_;
  if (kind_ == Kind::sgd_momentum) {
    for (size_t i = 0; i < params.size(); ++i) {
      Tensor& p = params[i].second;
      auto pv = p.values_mut();
      auto g = p.grad();
      std::vector<double>& v = v_[i];
      for (size_t k = 0; k < v.size(); ++k) {
        double gp = (g.empty() ? 0.0 : g[k]) + weight_decay_ * pv[k];
        v[k] = momentum_ * v[k] + gp;
        pv[k] -= lr * v[k];
      }
    }
    return;
  }
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i].second;
    auto pv = p.values_mut();
    auto g = p.grad();
    std::vector<double>& m = m_[i];
    std::vector<double>& v = v_[i];
    for (size_t k = 0; k < m.size(); ++k) {
      double gp = (g.empty() ? 0.0 : g[k]) + weight_decay_ * pv[k];
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * gp;
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * gp * gp;
      double mh = m[k] / bc1;
      double vh = v[k] / bc2;
      pv[k] -= lr * mh / (std::sqrt(vh) + eps_);
    }
  }
}

Optimizer::Snapshot Optimizer::snapshot() const {
  Snapshot s;
  s.kind = static_cast<uint32_t>(kind_);
  s.t = t_;
  if (kind_ == Kind::sgd_momentum) {
    s.slots = v_;
  } else {
    s.slots.reserve(m_.size() * 2);
    for (size_t i = 0; i < m_.size(); ++i) {
      s.slots.push_back(m_[i]);
      s.slots.push_back(v_[i]);
    }
  }
  return s;
}

void Optimizer::restore(const Snapshot& s) {
  if (s.kind != static_cast<uint32_t>(kind_))
    throw ContractError("optimizer state kind does not match this optimizer");
  t_ = s.t;
  if (kind_ == Kind::sgd_momentum) {
    v_ = s.slots;
    bound_ = !v_.empty();
    return;
  }
  if (s.slots.size() % 2 != 0)
    throw ContractError("adam state must hold two slots per parameter");
  m_.clear();
  v_.clear();
  for (size_t i = 0; i < s.slots.size(); i += 2) {
    m_.push_back(s.slots[i]);
    v_.push_back(s.slots[i + 1]);
  }
  bound_ = !m_.empty();
}

}  // namespace ssetm
