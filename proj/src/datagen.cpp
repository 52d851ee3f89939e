#include "ital/datagen.hpp"

#include "ital/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace ital {

void SyntheticTaskSpec::validate() const {
    if (const auto* r = std::get_if<RegressionTask>(&task)) {
        if (r->dim < 1 || r->count < 1) throw ConfigError("regression task needs dim >= 1 and count >= 1");
        return;
    }
    const auto& c = std::get<GaussianClassesTask>(task);
    if (c.dim < 1 || c.count < 1) throw ConfigError("classification task needs dim >= 1 and count >= 1");
    if (c.classes < 2) throw ConfigError("classification task needs K >= 2");
    if (c.count % c.classes != 0) throw ConfigError("count must be divisible by the number of classes");
    if (!(c.variance > 0)) throw ConfigError("cluster variance must be positive");
    if (!(c.center_scale > 0)) throw ConfigError("center scale must be positive");
}

SyntheticTask gen_regression(const SyntheticTaskSpec& spec) {
    spec.validate();
    const auto& task = std::get<RegressionTask>(spec.task);
    Rng rng = make_stream(spec.seed, Stream::Data);

    SyntheticTask out;
    out.omega_star = Params(1, task.dim + 1);
    for (Eigen::Index j = 0; j <= task.dim; ++j) out.omega_star(0, j) = uniform(rng, -1, 1);
    out.data.dim = task.dim;
    out.data.examples.reserve(static_cast<std::size_t>(task.count));
    const LossSpec loss = LossSpec::squared();
    for (int i = 0; i < task.count; ++i) {
        TeachingExample ex{Vector(task.dim), 0};
        for (int j = 0; j < task.dim; ++j) ex.features(j) = uniform(rng, -1, 1);
        ex.label = logits(loss, out.omega_star, ex)(0);
        out.data.examples.push_back(std::move(ex));
    }
    return out;
}

SyntheticTask gen_classification(const SyntheticTaskSpec& spec) {
    spec.validate();
    const auto& task = std::get<GaussianClassesTask>(spec.task);
    Rng rng = make_stream(spec.seed, Stream::Data);
    std::normal_distribution<double> normal(0.0, std::sqrt(task.variance));

    Matrix centers(task.classes, task.dim);
    for (Eigen::Index i = 0; i < centers.size(); ++i) centers.data()[i] = uniform(rng, -1, 1) * task.center_scale;

    SyntheticTask out;
    out.data.dim = task.dim;
    out.data.classes = task.classes;
    const int per_class = task.count / task.classes;
    for (int k = 0; k < task.classes; ++k) {
        for (int i = 0; i < per_class; ++i) {
            TeachingExample ex{Vector(task.dim), static_cast<double>(k)};
            for (int j = 0; j < task.dim; ++j) ex.features(j) = centers(k, j) + normal(rng);
            out.data.examples.push_back(std::move(ex));
        }
    }
    const double lambda = task.fit_lambda < 0 ? 1.0 / task.count : task.fit_lambda;
    out.omega_star = fit_multinomial_logistic(out.data.examples, task.dim, task.classes, lambda).params;
    return out;
}

SyntheticTask generate(const SyntheticTaskSpec& spec) {
    return std::holds_alternative<RegressionTask>(spec.task) ? gen_regression(spec) : gen_classification(spec);
}

namespace {

struct Objective {
    double value = 0;
    Params grad;
};

Objective logistic_objective(const Matrix& x, const std::vector<int>& labels, const Params& p, double lambda,
                             Matrix* probs) {
    const Eigen::Index n = x.rows();
    const Eigen::Index d = p.cols() - 1;
    Matrix z = x * p.transpose();  // n x K
    Objective out;
    Matrix dz(n, p.rows());
    for (Eigen::Index i = 0; i < n; ++i) {
        const double top = z.row(i).maxCoeff();
        const double lse = top + std::log((z.row(i).array() - top).exp().sum());
        out.value += lse - z(i, labels[static_cast<std::size_t>(i)]);
        dz.row(i) = (z.row(i).array() - lse).exp();
    }
    if (probs) *probs = dz;
    for (Eigen::Index i = 0; i < n; ++i) dz(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
    out.value /= static_cast<double>(n);
    out.grad = dz.transpose() * x / static_cast<double>(n);
    out.value += 0.5 * lambda * p.leftCols(d).squaredNorm();
    out.grad.leftCols(d) += lambda * p.leftCols(d);
    return out;
}

} // namespace

LogisticFit fit_multinomial_logistic(const std::vector<TeachingExample>& examples, int dim, int classes,
                                     double lambda, double tol, std::size_t max_iterations) {
    if (examples.empty()) throw ShapeError("cannot fit on an empty dataset");
    const LossSpec spec = LossSpec::cross_entropy(classes, lambda);
    const Eigen::Index n = static_cast<Eigen::Index>(examples.size());
    const Eigen::Index cols = dim + 1;
    const Eigen::Index flat = classes * cols;

    Matrix x(n, cols);
    std::vector<int> labels(examples.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& ex = examples[static_cast<std::size_t>(i)];
        check_shapes(spec, zero_params(spec, dim), ex);
        x.row(i).head(dim) = ex.features.transpose();
        x(i, dim) = 1.0;
        labels[static_cast<std::size_t>(i)] = ex.class_index();
    }

    LogisticFit fit;
    fit.params = zero_params(spec, dim);
    Matrix probs;
    Objective cur = logistic_objective(x, labels, fit.params, lambda, &probs);
    double damping = 1e-6;
    for (std::size_t it = 0; it < max_iterations; ++it) {
        fit.grad_norm = cur.grad.norm();
        fit.objective = cur.value;
        fit.iterations = it;
        if (fit.grad_norm < tol) return fit;

        // Hessian of the mean cross-entropy: kron(diag(p) - p p^T, x x^T)
        // averaged over examples, assembled block by block.
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(flat, flat);
        for (int k = 0; k < classes; ++k) {
            for (int l = k; l < classes; ++l) {
                Eigen::VectorXd a = -probs.col(k).cwiseProduct(probs.col(l));
                if (k == l) a += probs.col(k);
                const Eigen::MatrixXd block = x.transpose() * a.asDiagonal() * x / static_cast<double>(n);
                h.block(k * cols, l * cols, cols, cols) = block;
                if (l != k) h.block(l * cols, k * cols, cols, cols) = block.transpose();
            }
        }
        for (int k = 0; k < classes; ++k)
            for (Eigen::Index j = 0; j < dim; ++j) h(k * cols + j, k * cols + j) += lambda;

        const Eigen::Map<const Eigen::VectorXd> g(cur.grad.data(), flat);
        bool accepted = false;
        for (int attempt = 0; attempt < 40 && !accepted; ++attempt) {
            Eigen::MatrixXd damped = h;
            damped.diagonal().array() += damping;
            const Eigen::VectorXd step = damped.ldlt().solve(-g);
            Params trial = fit.params;
            Eigen::Map<Eigen::VectorXd>(trial.data(), flat) += step;
            Matrix trial_probs;
            Objective next = logistic_objective(x, labels, trial, lambda, &trial_probs);
            if (std::isfinite(next.value) && next.value <= cur.value + 1e-4 * g.dot(step)) {
                fit.params = std::move(trial);
                cur = std::move(next);
                probs = std::move(trial_probs);
                damping = std::max(damping * 0.1, 1e-12);
                accepted = true;
            } else {
                damping *= 10;
            }
        }
        if (!accepted) break;
    }
    fit.grad_norm = cur.grad.norm();
    if (fit.grad_norm < tol) return fit;
    throw ConvergenceError("multinomial logistic fit did not converge", fit.grad_norm, max_iterations);
}

std::pair<std::vector<TeachingExample>, std::vector<TeachingExample>>
split_holdout(std::vector<TeachingExample> examples, double fraction, Rng& rng) {
    if (!(fraction >= 0 && fraction < 1)) throw ConfigError("held-out fraction must lie in [0, 1)");
    for (std::size_t i = examples.size(); i > 1; --i) {
        const std::size_t j = std::uniform_int_distribution<std::size_t>(0, i - 1)(rng);
        std::swap(examples[i - 1], examples[j]);
    }
    const auto held = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(examples.size())));
    std::vector<TeachingExample> test(examples.end() - static_cast<std::ptrdiff_t>(held), examples.end());
    examples.resize(examples.size() - held);
    return {std::move(examples), std::move(test)};
}

Vector FeatureMap::to_teacher(const Vector& x) const {
    if (x.size() != p.rows()) throw ShapeError("feature length does not match the feature map");
    return p.transpose() * x;
}

Vector FeatureMap::to_learner(const Vector& x) const {
    if (x.size() != p.rows()) throw ShapeError("feature length does not match the feature map");
    return p * x;
}

Params FeatureMap::params_to_teacher(const Params& nu) const {
    if (nu.cols() != p.rows() + 1) throw ShapeError("parameter width does not match the feature map");
    Params out = nu;
    out.leftCols(p.rows()) = nu.leftCols(p.rows()) * p;
    return out;
}

Params FeatureMap::params_to_learner(const Params& w) const {
    if (w.cols() != p.rows() + 1) throw ShapeError("parameter width does not match the feature map");
    Params out = w;
    out.leftCols(p.rows()) = w.leftCols(p.rows()) * p.transpose();
    return out;
}

std::vector<TeachingExample> FeatureMap::examples_to_teacher(const std::vector<TeachingExample>& examples) const {
    std::vector<TeachingExample> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) out.push_back({to_teacher(ex.features), ex.label});
    return out;
}

FeatureMap make_feature_map(int dim, Rng& rng) {
    if (dim < 1) throw ConfigError("feature map dimension must be positive");
    std::normal_distribution<double> normal;
    Eigen::MatrixXd g(dim, dim);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = normal(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ();
    const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int j = 0; j < dim; ++j)
        if (r(j, j) < 0) q.col(j) = -q.col(j);
    return FeatureMap{q};
}

namespace {

double parse_number(std::string_view tok, std::size_t line) {
    while (!tok.empty() && (tok.front() == ' ' || tok.front() == '\t')) tok.remove_prefix(1);
    while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\t' || tok.back() == '\r')) tok.remove_suffix(1);
    double v = 0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size() || tok.empty())
        throw ParseError("bad number '" + std::string(tok) + "'", line);
    if (!std::isfinite(v)) throw ParseError("non-finite value", line);
    return v;
}

long parse_header_field(const std::string& header, const std::string& key, std::size_t line) {
    const auto pos = header.find(key + "=");
    if (pos == std::string::npos) throw ParseError("header is missing " + key + "=", line);
    std::size_t used = 0;
    try {
        const long v = std::stol(header.substr(pos + key.size() + 1), &used);
        if (v < 0) throw ParseError("negative " + key + " in header", line);
        return v;
    } catch (const std::logic_error&) {
        throw ParseError("bad " + key + " in header", line);
    }
}

} // namespace

Dataset read_feature_dataset(std::istream& in) {
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw ParseError("empty feature file", 0);
    ++lineno;
    if (line.rfind("#", 0) != 0) throw ParseError("expected header '# d=<d> K=<K> n=<n>'", lineno);
    Dataset data;
    data.dim = static_cast<int>(parse_header_field(line, "d", lineno));
    data.classes = static_cast<int>(parse_header_field(line, "K", lineno));
    const long n = parse_header_field(line, "n", lineno);
    if (data.dim < 1) throw ParseError("header d must be positive", lineno);
    if (data.classes == 1) throw ParseError("header K must be 0 (regression) or at least 2", lineno);
    data.examples.reserve(static_cast<std::size_t>(n));

    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        TeachingExample ex{Vector(data.dim), 0};
        std::string_view rest(line);
        int field = 0;
        while (true) {
            const auto comma = rest.find(',');
            const std::string_view tok = rest.substr(0, comma);
            if (field > data.dim)
                throw ParseError("expected " + std::to_string(data.dim) + " features, found more", lineno);
            const double v = parse_number(tok, lineno);
            if (field == 0) ex.label = v;
            else ex.features(field - 1) = v;
            ++field;
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        if (field != data.dim + 1)
            throw ParseError("expected " + std::to_string(data.dim) + " features, found " + std::to_string(field - 1),
                             lineno);
        if (data.classes > 0 && (ex.label < 0 || ex.label >= data.classes || ex.label != std::floor(ex.label)))
            throw ParseError("label outside [0, " + std::to_string(data.classes) + ")", lineno);
        data.examples.push_back(std::move(ex));
    }
    if (static_cast<long>(data.examples.size()) != n)
        throw ParseError("header declares n=" + std::to_string(n) + " but file has " +
                             std::to_string(data.examples.size()) + " examples",
                         lineno);
    return data;
}

Dataset load_feature_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open feature file " + path);
    return read_feature_dataset(in);
}

void write_feature_dataset(std::ostream& out, const Dataset& data) {
    out << "# d=" << data.dim << " K=" << data.classes << " n=" << data.examples.size() << '\n';
    out.precision(17);
    for (const auto& ex : data.examples) {
        if (ex.features.size() != data.dim) throw ShapeError("example dimension differs from dataset");
        out << ex.label;
        for (Eigen::Index j = 0; j < ex.features.size(); ++j) out << ',' << ex.features(j);
        out << '\n';
    }
}

void save_feature_dataset(const std::string& path, const Dataset& data) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write feature file " + path);
    write_feature_dataset(out, data);
    if (!out) throw ConfigError("failed writing " + path);
}

} // namespace ital
