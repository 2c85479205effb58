#include "octasam/optim.hpp"

#include <cmath>

#include "octasam/errors.hpp"

namespace octasam::optim {

void AdamWConfig::validate() const {
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("AdamW betas must be in [0, 1)");
    if (!(eps > 0.0)) throw ConfigError("AdamW eps must be positive");
    if (!(weight_decay >= 0.0)) throw ConfigError("AdamW weight_decay must be non-negative");
}

AdamW::AdamW(std::vector<nn::NamedParam> params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    cfg_.validate();
    for (const auto& p : params_) {
        m_.push_back(ag::Matrix::Zero(p.var.rows(), p.var.cols()));
        v_.push_back(ag::Matrix::Zero(p.var.rows(), p.var.cols()));
    }
}

void AdamW::step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        nn::Var p = params_[i].var;
        const auto& g = p.grad();
        if (g.size() == 0) continue;
        m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
        v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
        auto& w = p.mutable_value();
        w *= 1.0 - lr * cfg_.weight_decay;
        w.array() -= lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + cfg_.eps);
    }
}

void AdamW::zero_grad() {
    for (auto& p : params_) p.var.zero_grad();
}

}  // namespace octasam::optim
