#pragma once

// Concrete model classes behind the Regressor interface. Internal to the
// library; tests and callers go through the public accessors.

#include <vector>

#include "etax/learners.hpp"
#include "tree_builder.hpp"

namespace etax::learners::detail {

class ForestModel final : public Regressor {
public:
    ForestModel(RegressorSpec spec, std::vector<int> mask_cols, std::size_t input_width,
                std::vector<Tree> trees)
        : Regressor(std::move(spec), std::move(mask_cols), input_width), trees_(std::move(trees)) {}

    double predict_masked_row(std::span<const double> masked) const override {
        double sum = 0.0;
        for (const Tree& t : trees_) sum += t.route(masked);
        return sum / static_cast<double>(trees_.size());
    }

    json to_json() const override;
    static std::unique_ptr<Regressor> load(const json& j);

    const std::vector<Tree>& trees() const { return trees_; }

private:
    std::vector<Tree> trees_;
};

class BoostModel final : public Regressor {
public:
    BoostModel(RegressorSpec spec, std::vector<int> mask_cols, std::size_t input_width,
               double base_score, std::vector<Tree> trees)
        : Regressor(std::move(spec), std::move(mask_cols), input_width), base_score_(base_score),
          trees_(std::move(trees)) {}

    double predict_masked_row(std::span<const double> masked) const override {
        double sum = base_score_;
        for (const Tree& t : trees_) sum += t.route(masked);
        return sum;
    }

    json to_json() const override;
    static std::unique_ptr<Regressor> load(const json& j);

    double base_score() const { return base_score_; }

private:
    double base_score_ = 0.0;
    std::vector<Tree> trees_;  // leaf values carry the learning rate already
};

struct DenseLayer {
    int in = 0, out = 0;
    std::vector<double> w;  // out x in, row-major
    std::vector<double> b;  // out
};

class NetModel final : public Regressor {
public:
    NetModel(RegressorSpec spec, std::vector<int> mask_cols, std::size_t input_width,
             std::vector<DenseLayer> layers, std::vector<double> x_mean, std::vector<double> x_std,
             double y_mean, double y_std, NetTrainingInfo info)
        : Regressor(std::move(spec), std::move(mask_cols), input_width), layers_(std::move(layers)),
          x_mean_(std::move(x_mean)), x_std_(std::move(x_std)), y_mean_(y_mean), y_std_(y_std),
          info_(std::move(info)) {}

    double predict_masked_row(std::span<const double> masked) const override;

    json to_json() const override;
    static std::unique_ptr<Regressor> load(const json& j);

    const NetTrainingInfo& info() const { return info_; }
    std::vector<DenseLayer>& layers() { return layers_; }
    const std::vector<DenseLayer>& layers() const { return layers_; }
    std::span<const double> x_mean() const { return x_mean_; }
    std::span<const double> x_std() const { return x_std_; }
    double y_mean() const { return y_mean_; }
    double y_std() const { return y_std_; }

private:
    std::vector<DenseLayer> layers_;
    std::vector<double> x_mean_, x_std_;
    double y_mean_ = 0.0, y_std_ = 1.0;
    NetTrainingInfo info_;
};

class LinearModel final : public Regressor {
public:
    LinearModel(RegressorSpec spec, std::vector<int> mask_cols, std::size_t input_width,
                std::vector<double> coef, double intercept, bool ridge_fallback, double condition,
                double ridge_used)
        : Regressor(std::move(spec), std::move(mask_cols), input_width), coef_(std::move(coef)),
          intercept_(intercept), ridge_fallback_(ridge_fallback), condition_(condition),
          ridge_used_(ridge_used) {}

    double predict_masked_row(std::span<const double> masked) const override {
        double s = intercept_;
        for (std::size_t i = 0; i < coef_.size(); ++i) s += coef_[i] * masked[i];
        return s;
    }

    json to_json() const override;
    static std::unique_ptr<Regressor> load(const json& j);

    const std::vector<double>& coef() const { return coef_; }
    double intercept() const { return intercept_; }
    bool ridge_fallback() const { return ridge_fallback_; }

private:
    std::vector<double> coef_;
    double intercept_ = 0.0;
    bool ridge_fallback_ = false;
    double condition_ = 0.0;
    double ridge_used_ = 0.0;
};

// Shared helpers.
std::vector<int> resolve_mask(std::vector<std::string>& mask_names,
                              const std::vector<std::string>& schema_names);
Matrix gather_columns(const Matrix& X, const std::vector<int>& cols);
json tree_to_json(const Tree& tree);
Tree tree_from_json(const json& j);

}  // namespace etax::learners::detail
