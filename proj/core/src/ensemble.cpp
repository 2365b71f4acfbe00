#include "yieldcast/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "yieldcast/common.hpp"
#include "yieldcast/csv.hpp"
#include "yieldcast/metrics.hpp"

namespace yieldcast {

using nlohmann::json;

void EnsembleWeights::validate() const {
    if (weights.size() == 0) throw Error("ensemble weights are empty");
    if (!learner_names.empty() && learner_names.size() != static_cast<std::size_t>(weights.size())) {
        throw Error("ensemble weights and learner names differ in length");
    }
    if ((weights.array() < 0.0).any() || !weights.allFinite()) throw Error("ensemble weights must be finite and >= 0");
    const double sum = compensated_sum({weights.data(), static_cast<std::size_t>(weights.size())});
    if (std::abs(sum - 1.0) > 1e-12) throw Error("ensemble weights must sum to 1");
}

double ensemble_mse(const Eigen::MatrixXd& predictions, const Eigen::VectorXd& truth, const Eigen::VectorXd& w) {
    if (predictions.cols() != w.size() || predictions.rows() != truth.size()) {
        throw Error("ensemble_mse: dimension mismatch");
    }
    if (truth.size() == 0) throw Error("ensemble_mse: no rows");
    return (truth - predictions * w).squaredNorm() / static_cast<double>(truth.size());
}

double ensemble_mse(const OobMatrix& oob, const EnsembleWeights& w) {
    return ensemble_mse(oob.predictions, oob.truth, w.weights);
}

Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v) {
    const auto k = v.size();
    std::vector<double> u(v.data(), v.data() + k);
    std::sort(u.begin(), u.end(), std::greater<>());
    double cumulative = 0.0;
    double theta = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
        cumulative += u[static_cast<std::size_t>(j)];
        const double t = (cumulative - 1.0) / static_cast<double>(j + 1);
        if (u[static_cast<std::size_t>(j)] - t > 0.0) theta = t;
    }
    return (v.array() - theta).cwiseMax(0.0).matrix();
}

namespace {

// Objective in error form: with sum(w) = 1, y - P w = -E w where E = P - y.
double quad(const Eigen::MatrixXd& q, const Eigen::VectorXd& w) { return w.dot(q * w); }

// Exact minimizer of w' Q w subject to sum(w) = 1 with w_j = 0 off `support`.
// Returns false when the system is inconsistent or the result is infeasible.
bool solve_on_support(const Eigen::MatrixXd& q, const std::vector<Eigen::Index>& support, Eigen::VectorXd& w) {
    const auto s = static_cast<Eigen::Index>(support.size());
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(s + 1, s + 1);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(s + 1);
    for (Eigen::Index a = 0; a < s; ++a) {
        for (Eigen::Index b = 0; b < s; ++b) kkt(a, b) = 2.0 * q(support[a], support[b]);
        kkt(a, s) = 1.0;
        kkt(s, a) = 1.0;
    }
    rhs(s) = 1.0;
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(kkt);
    const Eigen::VectorXd sol = cod.solve(rhs);
    if (!sol.allFinite() || (kkt * sol - rhs).lpNorm<Eigen::Infinity>() > 1e-9 * (1.0 + kkt.lpNorm<Eigen::Infinity>())) {
        return false;
    }
    w = Eigen::VectorXd::Zero(q.rows());
    for (Eigen::Index a = 0; a < s; ++a) {
        if (sol(a) < 0.0) return false;
        w(support[a]) = sol(a);
    }
    const double sum = w.sum();
    if (!(sum > 0.0)) return false;
    w /= sum;
    return true;
}

}  // namespace

QpResult solve_optimal_weights_detailed(const OobMatrix& oob, const QpOptions& opts) {
    const Eigen::Index n = oob.predictions.rows();
    const Eigen::Index k = oob.predictions.cols();
    if (n < 1 || k < 1) throw Error("optimal weights need at least one row and one learner");
    if (oob.truth.size() != n) throw Error("out-of-bag truth length mismatch");
    if (!oob.predictions.allFinite() || !oob.truth.allFinite()) throw Error("non-finite out-of-bag predictions");

    const Eigen::MatrixXd errors = oob.predictions.colwise() - oob.truth;
    const Eigen::MatrixXd q = errors.transpose() * errors / static_cast<double>(n);

    QpResult result;
    result.weights.learner_names = oob.learner_names;
    if (k == 1) {
        result.weights.weights = Eigen::VectorXd::Ones(1);
        result.objective = ensemble_mse(oob, result.weights);
        return result;
    }

    const double lipschitz = 2.0 * Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(q, Eigen::EigenvaluesOnly)
                                       .eigenvalues()
                                       .maxCoeff();
    Eigen::VectorXd w = Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k));
    double f = quad(q, w);
    if (lipschitz > 0.0) {
        for (std::size_t it = 0; it < opts.max_iter; ++it) {
            const Eigen::VectorXd grad = 2.0 * (q * w);
            const Eigen::VectorXd next = project_to_simplex(w - grad / lipschitz);
            const double f_next = quad(q, next);
            result.iterations = it + 1;
            const double change = std::abs(f - f_next);
            w = next;
            const double f_prev = f;
            f = f_next;
            if (f == 0.0 || change <= opts.tol * std::abs(f_prev)) break;
        }
    }

    // Exact polish: the optimum is the equality-constrained minimizer on its
    // support, so try every support for small k and keep the best KKT point.
    if (k <= 12) {
        Eigen::VectorXd best;
        double best_f = std::numeric_limits<double>::infinity();
        std::vector<Eigen::Index> support;
        Eigen::VectorXd candidate;
        for (std::uint32_t mask = 1; mask < (1u << k); ++mask) {
            support.clear();
            for (Eigen::Index j = 0; j < k; ++j) {
                if (mask & (1u << j)) support.push_back(j);
            }
            if (!solve_on_support(q, support, candidate)) continue;
            const double fc = quad(q, candidate);
            if (fc < best_f) {
                best = candidate;
                best_f = fc;
            }
        }
        if (best.size() == k && best_f <= f * (1.0 + 1e-9) + 1e-300) w = best;
    }

    w = w.cwiseMax(0.0);
    w /= w.sum();
    result.weights.weights = w;
    result.objective = ensemble_mse(oob, result.weights);
    return result;
}

EnsembleWeights solve_optimal_weights(const OobMatrix& oob, const QpOptions& opts) {
    return solve_optimal_weights_detailed(oob, opts).weights;
}

EnsembleWeights average_weights(std::size_t k, std::vector<std::string> names) {
    if (k < 1) throw Error("average ensemble needs k >= 1");
    if (!names.empty() && names.size() != k) throw Error("average_weights: name count differs from k");
    return {Eigen::VectorXd::Constant(static_cast<Eigen::Index>(k), 1.0 / static_cast<double>(k)), std::move(names)};
}

EnsembleWeights ewa_weights(std::span<const double> errors, double temperature, std::vector<std::string> names) {
    if (!(temperature > 0.0)) throw Error("EWA temperature must be positive");
    if (errors.empty()) throw Error("EWA needs at least one error");
    if (!names.empty() && names.size() != errors.size()) throw Error("ewa_weights: name count differs from errors");
    for (double e : errors) {
        if (!std::isfinite(e)) throw Error("EWA errors must be finite");
    }
    const double min_error = *std::min_element(errors.begin(), errors.end());
    Eigen::VectorXd w(static_cast<Eigen::Index>(errors.size()));
    for (std::size_t j = 0; j < errors.size(); ++j) {
        w(static_cast<Eigen::Index>(j)) = std::exp(-temperature * (errors[j] - min_error));
    }
    w /= w.sum();
    return {std::move(w), std::move(names)};
}

std::vector<double> oob_errors(const OobMatrix& oob, bool raw) {
    std::vector<double> out;
    std::vector<double> truth(oob.truth.data(), oob.truth.data() + oob.truth.size());
    for (Eigen::Index j = 0; j < oob.predictions.cols(); ++j) {
        std::vector<double> pred(oob.predictions.col(j).data(), oob.predictions.col(j).data() + oob.predictions.rows());
        out.push_back(raw ? rmse(truth, pred) : rrmse(truth, pred));
    }
    return out;
}

Eigen::VectorXd combine(const EnsembleWeights& w, const Eigen::MatrixXd& base_predictions) {
    if (base_predictions.cols() != w.weights.size()) {
        throw Error("combine: " + std::to_string(base_predictions.cols()) + " prediction columns but " +
                    std::to_string(w.weights.size()) + " weights");
    }
    return base_predictions * w.weights;
}

std::string weights_to_csv(const EnsembleWeights& w, double oob_mse) {
    std::string out = "learner,weight\n";
    for (Eigen::Index j = 0; j < w.weights.size(); ++j) {
        const auto name = w.learner_names.empty() ? "learner" + std::to_string(j)
                                                  : w.learner_names[static_cast<std::size_t>(j)];
        out += csv_line({name, format_double(w.weights(j))});
    }
    out += csv_line({"#oob_mse", format_double(oob_mse)});
    return out;
}

EnsembleWeights weights_from_csv(std::string_view text) {
    const auto table = parse_csv(text);
    if (table.header != std::vector<std::string>{"learner", "weight"}) throw Error("weights table needs learner,weight");
    EnsembleWeights w;
    std::vector<double> values;
    for (const auto& row : table.rows) {
        if (!row[0].empty() && row[0].front() == '#') continue;
        w.learner_names.push_back(row[0]);
        values.push_back(parse_double(row[1]));
    }
    w.weights = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
    w.validate();
    return w;
}

// ---------------------------------------------------------------------------
// Stacking

StackedModel fit_stacked(const OobMatrix& oob, const LearnerSpec& level2, std::vector<FittedModel> bases) {
    if (bases.size() != oob.n_learners()) throw Error("stacking: base model count differs from out-of-bag columns");
    if (oob.n_rows() == 0) throw Error("stacking: empty out-of-bag matrix");
    StackedModel m;
    m.bases = std::move(bases);
    m.base_names = oob.learner_names;
    try {
        m.level2 = fit(level2, oob.predictions, oob.truth, oob.learner_names);
    } catch (const std::exception& e) {
        throw Error(std::string("level-2 fit failed: ") + e.what());
    }
    return m;
}

StackedModel fit_stacked(const OobMatrix& oob, const LearnerSpec& level2, const Dataset& train,
                         std::span<const LearnerSpec> base_specs) {
    if (base_specs.size() != oob.n_learners()) throw Error("stacking: base spec count differs from out-of-bag columns");
    std::vector<FittedModel> bases(base_specs.size());
    parallel_for(base_specs.size(), [&](std::size_t j) { bases[j] = fit(base_specs[j], train); });
    return fit_stacked(oob, level2, std::move(bases));
}

Eigen::MatrixXd base_predictions(std::span<const FittedModel> bases, const Dataset& d) {
    Eigen::MatrixXd p(static_cast<Eigen::Index>(d.n_rows()), static_cast<Eigen::Index>(bases.size()));
    for (std::size_t j = 0; j < bases.size(); ++j) p.col(static_cast<Eigen::Index>(j)) = predict(bases[j], d);
    return p;
}

Eigen::VectorXd predict_stacked(const StackedModel& m, const Dataset& d) {
    const Eigen::MatrixXd p = base_predictions(m.bases, d);
    return predict(m.level2, p, m.base_names);
}

std::string stacked_to_json(const StackedModel& m) {
    json j;
    j["format"] = "yieldcast.stacked";
    j["version"] = 1;
    j["base_names"] = m.base_names;
    j["bases"] = json::array();
    for (const auto& b : m.bases) j["bases"].push_back(json::parse(model_to_json(b)));
    j["level2"] = json::parse(model_to_json(m.level2));
    return j.dump(1) + "\n";
}

StackedModel stacked_from_json(std::string_view text) {
    const auto j = json::parse(text);
    if (j.value("format", "") != "yieldcast.stacked") throw Error("not a stacked model document");
    StackedModel m;
    m.base_names = j.at("base_names").get<std::vector<std::string>>();
    for (const auto& b : j.at("bases")) m.bases.push_back(model_from_json(b.dump()));
    m.level2 = model_from_json(j.at("level2").dump());
    if (m.level2.feature_names != m.base_names) throw Error("level-2 inputs do not match base names");
    return m;
}

}  // namespace yieldcast
