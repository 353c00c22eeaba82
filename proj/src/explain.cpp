#include "etax/explain.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "etax/linalg.hpp"

namespace etax::explain {

BatchFn make_model_fn(const learners::Regressor& model) {
    return [&model](const Matrix& X, std::span<double> out) { model.predict_masked(X, out); };
}

double eval_one(const BatchFn& f, std::span<const double> x) {
    Matrix one(1, x.size());
    std::copy(x.begin(), x.end(), one.row(0).begin());
    double out = 0.0;
    f(one, std::span<double>(&out, 1));
    return out;
}

json Explanation::to_json() const {
    json j;
    j["method"] = method;
    j["sample_id"] = sample_id;
    if (base_value) j["base_value"] = *base_value;
    json feats = json::array();
    for (std::size_t i = 0; i < feature_names.size(); ++i) {
        json e;
        e["name"] = feature_names[i];
        e["value"] = values[i];
        e["attribution"] = attributions[i];
        if (coefficients) e["coefficient"] = (*coefficients)[i];
        feats.push_back(e);
    }
    j["features"] = feats;
    return j;
}

Explanation Explanation::from_json(const json& j) {
    Explanation e;
    e.method = j.at("method").get<std::string>();
    e.sample_id = j.at("sample_id").get<std::int64_t>();
    if (j.contains("base_value")) e.base_value = j.at("base_value").get<double>();
    bool any_coef = false;
    for (const auto& f : j.at("features")) {
        e.feature_names.push_back(f.at("name").get<std::string>());
        e.values.push_back(f.at("value").get<double>());
        e.attributions.push_back(f.at("attribution").get<double>());
        if (f.contains("coefficient")) any_coef = true;
    }
    if (any_coef) {
        std::vector<double> coefs;
        for (const auto& f : j.at("features")) coefs.push_back(f.value("coefficient", 0.0));
        e.coefficients = std::move(coefs);
    }
    return e;
}

// ---------------------------------------------------------------------------
// BackgroundSet
// ---------------------------------------------------------------------------

namespace {

void column_stats(const Matrix& pop, std::vector<double>& mean, std::vector<double>& stddev,
                  std::vector<double>& q25, std::vector<double>& q50, std::vector<double>& q75) {
    const std::size_t n = pop.rows(), m = pop.cols();
    if (n == 0) throw Error("background population is empty");
    mean.assign(m, 0.0);
    stddev.assign(m, 0.0);
    q25.assign(m, 0.0);
    q50.assign(m, 0.0);
    q75.assign(m, 0.0);
    std::vector<double> col(n);
    for (std::size_t c = 0; c < m; ++c) {
        double s = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            col[r] = pop(r, c);
            s += col[r];
        }
        mean[c] = s / static_cast<double>(n);
        double var = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            const double d = col[r] - mean[c];
            var += d * d;
        }
        stddev[c] = std::sqrt(var / static_cast<double>(n));
        std::sort(col.begin(), col.end());
        auto quant = [&](double q) {
            const double pos = q * static_cast<double>(n - 1);
            const auto lo = static_cast<std::size_t>(std::floor(pos));
            const auto hi = std::min(n - 1, lo + 1);
            const double frac = pos - std::floor(pos);
            return col[lo] * (1.0 - frac) + col[hi] * frac;
        };
        q25[c] = quant(0.25);
        q50[c] = quant(0.50);
        q75[c] = quant(0.75);
    }
}

}  // namespace

BackgroundSet BackgroundSet::build(const Matrix& population, std::size_t k, std::uint64_t seed) {
    if (population.rows() == 0) throw Error("background population is empty");
    k = std::min(k, population.rows());
    if (k == 0) throw Error("background needs at least one row");
    Rng rng(mix_seed(seed, 0xb6));
    const std::vector<int> picks = rng.sample_indices(population.rows(), k);
    BackgroundSet b;
    b.rows = Matrix(k, population.cols());
    for (std::size_t i = 0; i < picks.size(); ++i) {
        const auto src = population.row(static_cast<std::size_t>(picks[i]));
        std::copy(src.begin(), src.end(), b.rows.row(i).begin());
    }
    column_stats(population, b.mean, b.stddev, b.q25, b.q50, b.q75);
    return b;
}

BackgroundSet BackgroundSet::from_rows(Matrix rows) {
    BackgroundSet b;
    column_stats(rows, b.mean, b.stddev, b.q25, b.q50, b.q75);
    b.rows = std::move(rows);
    return b;
}

BackgroundSet BackgroundSet::project(const std::vector<int>& cols) const {
    BackgroundSet b;
    b.rows = Matrix(rows.rows(), cols.size());
    for (std::size_t r = 0; r < rows.rows(); ++r)
        for (std::size_t i = 0; i < cols.size(); ++i)
            b.rows(r, i) = rows(r, static_cast<std::size_t>(cols[i]));
    auto pick = [&](const std::vector<double>& src) {
        std::vector<double> out(cols.size());
        for (std::size_t i = 0; i < cols.size(); ++i) out[i] = src[static_cast<std::size_t>(cols[i])];
        return out;
    };
    b.mean = pick(mean);
    b.stddev = pick(stddev);
    b.q25 = pick(q25);
    b.q50 = pick(q50);
    b.q75 = pick(q75);
    return b;
}

// ---------------------------------------------------------------------------
// LIME
// ---------------------------------------------------------------------------

Explanation lime_explain(const BatchFn& f, std::span<const double> x, const BackgroundSet& background,
                         const LimeConfig& config, std::uint64_t seed,
                         const std::vector<std::string>& feature_names, std::int64_t sample_id) {
    const std::size_t m = x.size();
    if (background.width() != m || feature_names.size() != m)
        throw Error("lime_explain: dimension mismatch");
    if (config.n_samples < static_cast<int>(m) + 2)
        throw Error("lime_explain: n_samples must be at least m + 2");

    const auto n = static_cast<std::size_t>(config.n_samples);
    const double kw = config.kernel_width > 0.0 ? config.kernel_width
                                                : 0.75 * std::sqrt(static_cast<double>(m));

    std::vector<double> sigma(m);
    for (std::size_t j = 0; j < m; ++j) sigma[j] = background.stddev[j] > 1e-12 ? background.stddev[j] : 1.0;

    // perturbations around x, scaled per feature by the background spread
    Rng rng(mix_seed(seed, 0x11e));
    Matrix Z(n, m);
    std::vector<double> weight(n);
    for (std::size_t i = 0; i < n; ++i) {
        double d2 = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            const double u = rng.normal();
            Z(i, j) = x[j] + sigma[j] * u;
            d2 += u * u;
        }
        weight[i] = std::exp(-d2 / (kw * kw));
    }

    const double weight_sum = std::accumulate(weight.begin(), weight.end(), 0.0);
    if (!(weight_sum > 1e-12 * static_cast<double>(n)))
        throw Error("lime_explain: kernel weights vanished; increase kernel_width");

    std::vector<double> fz(n);
    f(Z, fz);

    // weighted ridge on standardized offsets from the background mean; the
    // intercept is not penalized
    const std::size_t p = m + 1;
    Matrix a(p, p, 0.0);
    std::vector<double> rhs(p, 0.0);
    std::vector<double> u(p, 1.0);  // u[m] = intercept column
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) u[j] = (Z(i, j) - background.mean[j]) / sigma[j];
        const double w = weight[i];
        for (std::size_t a_i = 0; a_i < p; ++a_i) {
            for (std::size_t a_j = a_i; a_j < p; ++a_j) a(a_i, a_j) += w * u[a_i] * u[a_j];
            rhs[a_i] += w * u[a_i] * fz[i];
        }
    }
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < i; ++j) a(i, j) = a(j, i);
    for (std::size_t j = 0; j < m; ++j) a(j, j) += config.ridge;

    std::vector<double> beta;
    if (!linalg::cholesky_solve(a, rhs, beta)) {
        for (std::size_t j = 0; j < p; ++j) a(j, j) += 1e-8;
        beta = linalg::lu_solve(a, rhs);
    }

    Explanation e;
    e.method = "lime";
    e.sample_id = sample_id;
    e.feature_names = feature_names;
    e.values.assign(x.begin(), x.end());
    e.attributions.resize(m);
    std::vector<double> coefs(m);
    for (std::size_t j = 0; j < m; ++j) {
        coefs[j] = beta[j] / sigma[j];  // slope per raw unit
        e.attributions[j] = coefs[j] * (x[j] - background.mean[j]);
    }
    e.coefficients = std::move(coefs);
    return e;
}

// ---------------------------------------------------------------------------
// Kernel SHAP
// ---------------------------------------------------------------------------

namespace {

// Coalition values under interventional masking: absent features take the
// background row's values and the model output is averaged over the
// background. Evaluation is chunked to bound the scratch matrix.
class CoalitionEvaluator {
public:
    CoalitionEvaluator(const BatchFn& f, std::span<const double> x, const BackgroundSet& bg)
        : f_(f), x_(x), bg_(bg) {}

    std::vector<double> evaluate(const std::vector<std::uint64_t>& masks) const {
        const std::size_t m = x_.size();
        const std::size_t k = bg_.size();
        std::vector<double> values(masks.size(), 0.0);

        const std::size_t chunk_rows = std::max<std::size_t>(k, 65536 / std::max<std::size_t>(1, m));
        const std::size_t coalitions_per_chunk = std::max<std::size_t>(1, chunk_rows / k);

        std::vector<double> out;
        for (std::size_t start = 0; start < masks.size(); start += coalitions_per_chunk) {
            const std::size_t stop = std::min(masks.size(), start + coalitions_per_chunk);
            Matrix Z((stop - start) * k, m);
            for (std::size_t c = start; c < stop; ++c) {
                const std::uint64_t mask = masks[c];
                for (std::size_t b = 0; b < k; ++b) {
                    auto row = Z.row((c - start) * k + b);
                    const auto bg_row = bg_.rows.row(b);
                    for (std::size_t j = 0; j < m; ++j)
                        row[j] = (mask >> j & 1ULL) ? x_[j] : bg_row[j];
                }
            }
            out.assign(Z.rows(), 0.0);
            f_(Z, out);
            for (std::size_t c = start; c < stop; ++c) {
                double s = 0.0;
                for (std::size_t b = 0; b < k; ++b) s += out[(c - start) * k + b];
                values[c] = s / static_cast<double>(k);
            }
        }
        return values;
    }

private:
    const BatchFn& f_;
    std::span<const double> x_;
    const BackgroundSet& bg_;
};

double shapley_kernel_weight(std::size_t m, std::size_t s) {
    // (m - 1) / (C(m, s) * s * (m - s))
    double comb = 1.0;
    for (std::size_t i = 1; i <= s; ++i)
        comb *= static_cast<double>(m - i + 1) / static_cast<double>(i);
    return static_cast<double>(m - 1) / (comb * static_cast<double>(s) * static_cast<double>(m - s));
}

// Weighted least squares over coalition indicators with the efficiency
// constraint folded in by eliminating the last feature.
std::vector<double> solve_constrained_wls(const std::vector<std::uint64_t>& masks,
                                          const std::vector<double>& weights,
                                          const std::vector<double>& values, double base,
                                          double fx, std::size_t m) {
    const double delta = fx - base;
    if (m == 1) return {delta};

    const std::size_t q = m - 1;
    Matrix a(q, q, 0.0);
    std::vector<double> rhs(q, 0.0);
    std::vector<double> z(q, 0.0);
    for (std::size_t i = 0; i < masks.size(); ++i) {
        const std::uint64_t mask = masks[i];
        const double last = (mask >> (m - 1)) & 1ULL ? 1.0 : 0.0;
        for (std::size_t j = 0; j < q; ++j) z[j] = ((mask >> j & 1ULL) ? 1.0 : 0.0) - last;
        const double u = (values[i] - base) - last * delta;
        const double w = weights[i];
        for (std::size_t r = 0; r < q; ++r) {
            if (z[r] == 0.0) continue;
            for (std::size_t c = r; c < q; ++c) a(r, c) += w * z[r] * z[c];
            rhs[r] += w * z[r] * u;
        }
    }
    for (std::size_t r = 0; r < q; ++r)
        for (std::size_t c = 0; c < r; ++c) a(r, c) = a(c, r);

    std::vector<double> phi_head;
    if (!linalg::cholesky_solve(a, rhs, phi_head)) {
        for (std::size_t r = 0; r < q; ++r) a(r, r) += 1e-10;
        phi_head = linalg::lu_solve(a, rhs);
    }

    std::vector<double> phi(m, 0.0);
    double head_sum = 0.0;
    for (std::size_t j = 0; j < q; ++j) {
        phi[j] = phi_head[j];
        head_sum += phi_head[j];
    }
    phi[m - 1] = delta - head_sum;
    return phi;
}

}  // namespace

Explanation kernel_shap(const BatchFn& f, std::span<const double> x, const BackgroundSet& background,
                        const ShapConfig& config, std::uint64_t seed,
                        const std::vector<std::string>& feature_names, std::int64_t sample_id) {
    const std::size_t m = x.size();
    if (m == 0) throw Error("kernel_shap: no features");
    if (m > 63) throw Error("kernel_shap: more than 63 features is unsupported");
    if (background.width() != m || feature_names.size() != m)
        throw Error("kernel_shap: dimension mismatch");

    CoalitionEvaluator evaluator(f, x, background);
    const double fx = eval_one(f, x);
    const double base = evaluator.evaluate({0ULL})[0];

    const bool exact = m <= 12 && config.n_coalitions >= (1 << m);

    std::vector<std::uint64_t> masks;
    std::vector<double> weights;
    if (m == 1) {
        // single player: efficiency fixes everything
    } else if (exact) {
        std::vector<double> weight_by_size(m);
        for (std::size_t s = 1; s < m; ++s) weight_by_size[s] = shapley_kernel_weight(m, s);
        const std::uint64_t full = (1ULL << m) - 1;
        for (std::uint64_t mask = 1; mask < full; ++mask) {
            masks.push_back(mask);
            weights.push_back(weight_by_size[static_cast<std::size_t>(std::popcount(mask))]);
        }
    } else {
        if (config.n_coalitions < static_cast<int>(m) + 2)
            throw Error("kernel_shap: n_coalitions must be at least m + 2 in sampling mode");
        // sample sizes with probability proportional to the total kernel mass
        // of that size, then a uniform subset; complements are paired in
        std::vector<double> size_mass(m, 0.0);
        double mass_total = 0.0;
        for (std::size_t s = 1; s < m; ++s) {
            size_mass[s] = static_cast<double>(m - 1) / (static_cast<double>(s) *
                                                         static_cast<double>(m - s));
            mass_total += size_mass[s];
        }
        Rng rng(mix_seed(seed, 0x5a9));
        std::map<std::uint64_t, double> counts;
        const auto budget = static_cast<std::size_t>(config.n_coalitions);
        std::vector<int> pool(m);
        std::iota(pool.begin(), pool.end(), 0);
        const std::uint64_t full = (1ULL << m) - 1;
        std::size_t drawn = 0;
        while (drawn < budget) {
            double pick = rng.uniform() * mass_total;
            std::size_t s = 1;
            for (; s + 1 < m; ++s) {
                if (pick < size_mass[s]) break;
                pick -= size_mass[s];
            }
            std::uint64_t mask = 0;
            for (int idx : rng.sample_indices(m, s)) mask |= 1ULL << idx;
            counts[mask] += 1.0;
            ++drawn;
            if (drawn < budget) {
                counts[full ^ mask] += 1.0;
                ++drawn;
            }
        }
        for (const auto& [mask, count] : counts) {
            masks.push_back(mask);
            weights.push_back(count);
        }
    }

    const std::vector<double> values = evaluator.evaluate(masks);
    std::vector<double> phi = solve_constrained_wls(masks, weights, values, base, fx, m);

    Explanation e;
    e.method = exact || m == 1 ? "shap-exact" : "shap";
    e.sample_id = sample_id;
    e.base_value = base;
    e.feature_names = feature_names;
    e.values.assign(x.begin(), x.end());
    e.attributions = std::move(phi);
    return e;
}

Explanation exact_shap_oracle(const BatchFn& f, std::span<const double> x,
                              const BackgroundSet& background,
                              const std::vector<std::string>& feature_names,
                              std::int64_t sample_id) {
    const std::size_t m = x.size();
    if (m == 0) throw Error("exact_shap_oracle: no features");
    if (m > 12)
        throw Error("exact_shap_oracle: refused for m = " + std::to_string(m) + " (would need " +
                    std::to_string((1ULL << m) * m) + " weighted differences over " +
                    std::to_string((1ULL << m) * background.size()) + " model evaluations)");
    if (background.width() != m || feature_names.size() != m)
        throw Error("exact_shap_oracle: dimension mismatch");

    // value of every coalition, computed independently of the WLS path
    const std::size_t n_masks = 1ULL << m;
    std::vector<double> v(n_masks, 0.0);
    {
        Matrix Z(background.size(), m);
        std::vector<double> out(background.size());
        for (std::uint64_t mask = 0; mask < n_masks; ++mask) {
            for (std::size_t b = 0; b < background.size(); ++b) {
                auto row = Z.row(b);
                const auto bg_row = background.rows.row(b);
                for (std::size_t j = 0; j < m; ++j)
                    row[j] = (mask >> j & 1ULL) ? x[j] : bg_row[j];
            }
            f(Z, out);
            double s = 0.0;
            for (double o : out) s += o;
            v[mask] = s / static_cast<double>(background.size());
        }
    }

    // |S|! (m - |S| - 1)! / m!
    std::vector<double> fact(m + 1, 1.0);
    for (std::size_t i = 1; i <= m; ++i) fact[i] = fact[i - 1] * static_cast<double>(i);
    std::vector<double> weight_by_size(m, 0.0);
    for (std::size_t s = 0; s < m; ++s) weight_by_size[s] = fact[s] * fact[m - s - 1] / fact[m];

    std::vector<double> phi(m, 0.0);
    for (std::uint64_t mask = 0; mask < n_masks; ++mask) {
        const auto s = static_cast<std::size_t>(std::popcount(mask));
        if (s == m) continue;
        const double w = weight_by_size[s];
        for (std::size_t i = 0; i < m; ++i) {
            if (mask >> i & 1ULL) continue;
            phi[i] += w * (v[mask | (1ULL << i)] - v[mask]);
        }
    }

    Explanation e;
    e.method = "shap-exact-oracle";
    e.sample_id = sample_id;
    e.base_value = v[0];
    e.feature_names = feature_names;
    e.values.assign(x.begin(), x.end());
    e.attributions = std::move(phi);
    return e;
}

std::string explanation_csv_header() { return "sample,method,model,feature,value,attribution\n"; }

void append_explanation_csv(std::string& out, const Explanation& e, const std::string& model) {
    for (std::size_t i = 0; i < e.feature_names.size(); ++i) {
        out += std::to_string(e.sample_id);
        out += ',';
        out += e.method;
        out += ',';
        out += model;
        out += ',';
        out += e.feature_names[i];
        out += ',';
        out += format_double(e.values[i]);
        out += ',';
        out += format_double(e.attributions[i]);
        out += '\n';
    }
}

}  // namespace etax::explain
