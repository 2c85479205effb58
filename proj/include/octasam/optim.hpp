#pragma once

#include <vector>

#include "octasam/backbone.hpp"

namespace octasam::optim {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;

    void validate() const;
};

/// Decoupled weight decay Adam over a fixed parameter list.
class AdamW {
public:
    AdamW(std::vector<nn::NamedParam> params, AdamWConfig cfg = {});

    /// Applies one update using the accumulated gradients; parameters without a gradient
    /// are skipped. Does not clear gradients.
    void step(double lr);
    void zero_grad();
    long steps() const { return t_; }
    const std::vector<nn::NamedParam>& parameters() const { return params_; }

private:
    std::vector<nn::NamedParam> params_;
    AdamWConfig cfg_;
    std::vector<ag::Matrix> m_, v_;
    long t_ = 0;
};

}  // namespace octasam::optim
