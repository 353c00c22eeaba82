#include <cmath>

#include "etax/linalg.hpp"
#include "models_detail.hpp"

namespace etax::learners {

namespace detail {

json LinearModel::to_json() const {
    json j = header_json("linear");
    j["coef"] = coef_;
    j["intercept"] = intercept_;
    j["ridge_fallback"] = ridge_fallback_;
    j["condition"] = condition_;
    j["ridge_used"] = ridge_used_;
    return j;
}

std::unique_ptr<Regressor> LinearModel::load(const json& j) {
    RegressorSpec spec = RegressorSpec::from_json(j.at("spec"));
    return std::make_unique<LinearModel>(
        std::move(spec), j.at("mask_cols").get<std::vector<int>>(),
        j.at("input_width").get<std::size_t>(), j.at("coef").get<std::vector<double>>(),
        j.at("intercept").get<double>(), j.at("ridge_fallback").get<bool>(),
        j.at("condition").get<double>(), j.at("ridge_used").get<double>());
}

}  // namespace detail

using namespace detail;

std::unique_ptr<Regressor> fit_mlr(const Dataset& train,
                                   const std::vector<std::string>& schema_names,
                                   const RegressorSpec& spec_in) {
    RegressorSpec spec = spec_in;
    const auto& cfg = std::get<LinearConfig>(spec.params);
    const std::vector<int> mask_cols = resolve_mask(spec.mask, schema_names);
    const Matrix Xm = gather_columns(train.X, mask_cols);
    const std::size_t n = Xm.rows();
    const std::size_t m = Xm.cols();
    if (n <= m) throw Error("linear: need more rows than coefficients");

    // normal equations over [x, 1]
    const std::size_t p = m + 1;
    Matrix a(p, p, 0.0);
    std::vector<double> b(p, 0.0);
    std::vector<double> row(p, 1.0);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < m; ++c) row[c] = Xm(r, c);
        for (std::size_t i = 0; i < p; ++i) {
            for (std::size_t j = i; j < p; ++j) a(i, j) += row[i] * row[j];
            b[i] += row[i] * train.y[r];
        }
    }
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < i; ++j) a(i, j) = a(j, i);

    const double condition = linalg::condition_number_sym(a);
    bool fallback = !(condition <= cfg.condition_limit);
    double ridge_used = 0.0;
    std::vector<double> beta;

    auto try_solve = [&](double ridge) {
        Matrix ar = a;
        for (std::size_t i = 0; i < p; ++i) ar(i, i) += ridge;
        return linalg::cholesky_solve(ar, b, beta);
    };

    if (!fallback && try_solve(0.0)) {
        // plain least squares succeeded
    } else {
        fallback = true;
        double ridge = cfg.ridge;
        bool solved = false;
        for (int attempt = 0; attempt < 24 && !solved; ++attempt, ridge *= 10.0)
            if (try_solve(ridge)) {
                solved = true;
                ridge_used = ridge;
            }
        if (!solved) throw Error("linear: normal equations unsolvable even with ridge fallback");
    }

    std::vector<double> coef(beta.begin(), beta.begin() + static_cast<std::ptrdiff_t>(m));
    const double intercept = beta[m];
    auto model = std::make_unique<LinearModel>(std::move(spec), mask_cols, train.X.cols(),
                                               std::move(coef), intercept, fallback, condition,
                                               ridge_used);
    model->bind_schema(schema_names);
    return model;
}

}  // namespace etax::learners
