#include "weakgas/observables.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

namespace weakgas {

namespace {

const double kBumpFloor = std::exp(-18.0);

double positive(double x)
{
    return x > 0.0 ? x : 0.0;
}

double negative(double x)
{
    return x < 0.0 ? -x : 0.0;
}

// oriented integral from a to b, to about tol times the integral of |f|
template <class F>
double integrate(const F& f, double a, double b, double tol = 1e-13)
{
    if (a == b) return 0.0;
    double sign = 1.0;
    if (a > b) {
        std::swap(a, b);
        sign = -1.0;
    }
    // one GK21 panel; Boost reports the non-adaptive error in [-1, 1] units
    auto panel = [&](double lo, double hi, double& error, double* l1 = nullptr) {
        double value = boost::math::quadrature::gauss_kronrod<double, 21>::integrate(f, lo, hi, 0, 0.0, &error, l1);
        error *= 0.5 * (hi - lo);
        return value;
    };
    double err = 0.0, l1 = 0.0;
    double whole = panel(a, b, err, &l1);
    // Bisection against an absolute budget. A purely relative tolerance cannot
    // be met where the integrand carries rounding noise near its zeros.
    auto refine = [&](auto&& self, double lo, double hi, double value, double error, double budget,
                      int depth) -> double {
        if (error <= budget || depth == 0) return value;
        double mid = 0.5 * (lo + hi), e1 = 0.0, e2 = 0.0;
        double left = panel(lo, mid, e1);
        double right = panel(mid, hi, e2);
        return self(self, lo, mid, left, e1, 0.5 * budget, depth - 1) +
               self(self, mid, hi, right, e2, 0.5 * budget, depth - 1);
    };
    return sign * refine(refine, a, b, whole, err, tol * l1 + 1e-14 * ((b - a) + l1), 30);
}

// oriented integral of part(g): split at the sign changes of g so that the
// quadrature never sees the kink of the positive or negative part
template <class G>
double integrate_part(double (*part)(double), const G& g, double a, double b)
{
    if (a == b) return 0.0;
    double sign = 1.0;
    if (a > b) {
        std::swap(a, b);
        sign = -1.0;
    }
    constexpr int cells = 32;
    std::vector<double> cuts{a};
    double left = a, g_left = g(a);
    for (int k = 1; k <= cells; ++k) {
        double right = k == cells ? b : a + (b - a) * k / cells;
        double g_right = g(right);
        if ((g_left < 0.0 && g_right > 0.0) || (g_left > 0.0 && g_right < 0.0)) {
            auto root = boost::math::tools::bisect([&](double t) { return g(t); }, left, right,
                                                   boost::math::tools::eps_tolerance<double>(52));
            cuts.push_back(0.5 * (root.first + root.second));
        }
        left = right;
        g_left = g_right;
    }
    cuts.push_back(b);
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        // g keeps its sign on a piece; a vanishing part integrates to zero exactly
        if (part(g(0.5 * (cuts[k] + cuts[k + 1]))) == 0.0) continue;
        acc += integrate([&](double t) { return part(g(t)); }, cuts[k], cuts[k + 1]);
    }
    return sign * acc;
}

}  // namespace

//---------------------------------------------------------------------------//
// Bumps and test functions
//---------------------------------------------------------------------------//

double Bump::operator()(const Point& x) const
{
    switch (kind) {
        case BumpKind::gaussian_bump: {
            double r = norm(x - center);
            if (r >= 6.0 * width) return 0.0;
            return amplitude * positive(std::exp(-0.5 * r * r / (width * width)) - kBumpFloor);
        }
        case BumpKind::plateau_ramp: {
            double r = sup_norm(x - center);
            if (r <= width) return amplitude;
            if (ramp <= 0.0 || r >= width + ramp) return 0.0;
            return amplitude * (width + ramp - r) / ramp;
        }
    }
    return 0.0;
}

double Bump::support_radius() const
{
    return kind == BumpKind::gaussian_bump ? 6.0 * width : width + ramp;
}

TestFunction TestFunction::gaussian_bump(int dim, const Point& center, double width, double amplitude)
{
    check_dimension(dim);
    if (!(width > 0.0)) throw std::invalid_argument("gaussian bump width must be positive");
    TestFunction f(dim);
    f.terms_.push_back({BumpKind::gaussian_bump, center, width, 0.0, amplitude});
    return f;
}

TestFunction TestFunction::plateau_ramp(int dim, const Point& center, double radius, double ramp, double amplitude)
{
    check_dimension(dim);
    if (radius < 0.0 || ramp < 0.0 || radius + ramp <= 0.0)
        throw std::invalid_argument("plateau test function needs radius, ramp >= 0 and positive support");
    TestFunction f(dim);
    f.terms_.push_back({BumpKind::plateau_ramp, center, radius, ramp, amplitude});
    return f;
}

double TestFunction::operator()(const Point& x) const
{
    double acc = 0.0;
    for (const auto& t : terms_) acc += t(x);
    return acc;
}

bool TestFunction::sign_certificate() const
{
    return std::all_of(terms_.begin(), terms_.end(), [](const Bump& b) { return b.amplitude >= 0.0; });
}

double TestFunction::sup_bound() const
{
    double acc = 0.0;
    for (const auto& t : terms_) acc += std::abs(t.amplitude);
    return acc;
}

Box TestFunction::support() const
{
    if (terms_.empty()) return Box::cube(dim_, {}, 0.0);
    Box box = Box::cube(dim_, terms_.front().center, terms_.front().support_radius());
    for (const auto& t : terms_) box = box.united(Box::cube(dim_, t.center, t.support_radius()));
    return box;
}

std::vector<double> TestFunction::breakpoints(int axis) const
{
    std::vector<double> out;
    for (const auto& t : terms_) {
        double c = t.center[axis];
        out.push_back(c - t.support_radius());
        out.push_back(c + t.support_radius());
        if (t.kind == BumpKind::plateau_ramp) {
            out.push_back(c - t.width);
            out.push_back(c + t.width);
        }
    }
    return out;
}

TestFunction TestFunction::operator+(const TestFunction& other) const
{
    if (other.dim_ != dim_ && !other.is_zero() && !is_zero())
        throw std::invalid_argument("test functions of different dimension");
    TestFunction out = is_zero() ? TestFunction(other.dim_) : *this;
    out.terms_.insert(out.terms_.end(), other.terms_.begin(), other.terms_.end());
    return out;
}

TestFunction TestFunction::scaled(double c) const
{
    TestFunction out(dim_);
    if (c == 0.0) return out;
    out.terms_ = terms_;
    for (auto& t : out.terms_) t.amplitude *= c;
    return out;
}

TestFunction TestFunction::shifted(const Point& t) const
{
    TestFunction out = *this;
    for (auto& b : out.terms_) b.center = b.center + t;
    return out;
}

TestFunction TestFunction::positive_part() const
{
    TestFunction out(dim_);
    for (const auto& t : terms_)
        if (t.amplitude > 0.0) out.terms_.push_back(t);
    return out;
}

TestFunction TestFunction::negative_part() const
{
    TestFunction out(dim_);
    for (auto t : terms_) {
        if (t.amplitude < 0.0) {
            t.amplitude = -t.amplitude;
            out.terms_.push_back(t);
        }
    }
    return out;
}

//---------------------------------------------------------------------------//
// Outer functions
//---------------------------------------------------------------------------//

std::string to_string(OuterKind kind)
{
    switch (kind) {
        case OuterKind::linear: return "linear";
        case OuterKind::exp_product: return "exp_product";
        case OuterKind::smooth_max: return "smooth_max";
        case OuterKind::smooth_min: return "smooth_min";
        case OuterKind::positive_power: return "positive_power";
        case OuterKind::product: return "product";
        case OuterKind::cosine: return "cosine";
        case OuterKind::sine: return "sine";
        case OuterKind::decomposed_part: return "decomposed_part";
    }
    return "?";
}

OuterKind outer_kind_from_string(const std::string& name)
{
    for (auto k : {OuterKind::linear, OuterKind::exp_product, OuterKind::smooth_max, OuterKind::smooth_min,
                   OuterKind::positive_power, OuterKind::product, OuterKind::cosine, OuterKind::sine})
        if (to_string(k) == name) return k;
    throw std::invalid_argument("unknown outer function '" + name + "'");
}

OuterFunction::OuterFunction(OuterKind kind, int arity, std::vector<double> params, double constant)
    : kind_(kind), arity_(arity), params_(std::move(params)), constant_(constant)
{
    if (arity < 1) throw std::invalid_argument("outer function needs at least one argument");
    for (double p : params_)
        if (!std::isfinite(p)) throw std::invalid_argument("outer function parameters must be finite");
}

OuterFunction OuterFunction::linear(std::vector<double> coeffs, double constant)
{
    int n = static_cast<int>(coeffs.size());
    return OuterFunction(OuterKind::linear, n, std::move(coeffs), constant);
}

OuterFunction OuterFunction::exp_product(std::vector<double> rates, double factor)
{
    int n = static_cast<int>(rates.size());
    return OuterFunction(OuterKind::exp_product, n, std::move(rates), factor);
}

OuterFunction OuterFunction::smooth_max(int arity, double sharpness)
{
    if (!(sharpness > 0.0)) throw std::invalid_argument("smooth max sharpness must be positive");
    return OuterFunction(OuterKind::smooth_max, arity, {sharpness});
}

OuterFunction OuterFunction::smooth_min(int arity, double sharpness)
{
    if (!(sharpness > 0.0)) throw std::invalid_argument("smooth min sharpness must be positive");
    return OuterFunction(OuterKind::smooth_min, arity, {sharpness});
}

OuterFunction OuterFunction::positive_power(double power)
{
    if (!(power >= 1.0)) throw std::invalid_argument("positive power exponent must be >= 1");
    return OuterFunction(OuterKind::positive_power, 1, {power});
}

OuterFunction OuterFunction::product(int arity)
{
    return OuterFunction(OuterKind::product, arity, {});
}

OuterFunction OuterFunction::cosine(std::vector<double> freqs)
{
    int n = static_cast<int>(freqs.size());
    return OuterFunction(OuterKind::cosine, n, std::move(freqs));
}

OuterFunction OuterFunction::sine(std::vector<double> freqs)
{
    int n = static_cast<int>(freqs.size());
    return OuterFunction(OuterKind::sine, n, std::move(freqs));
}

namespace {

// softmax weights of t * x, stable
std::vector<double> softmax(std::span<const double> x, double t)
{
    double m = -std::numeric_limits<double>::infinity();
    for (double v : x) m = std::max(m, t * v);
    std::vector<double> p(x.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) sum += p[i] = std::exp(t * x[i] - m);
    for (auto& v : p) v /= sum;
    return p;
}

double log_sum_exp(std::span<const double> x, double t)
{
    double m = -std::numeric_limits<double>::infinity();
    for (double v : x) m = std::max(m, t * v);
    double sum = 0.0;
    for (double v : x) sum += std::exp(t * v - m);
    return m + std::log(sum);
}

double dot(const std::vector<double>& a, std::span<const double> x)
{
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * x[i];
    return acc;
}

}  // namespace

double OuterFunction::value(std::span<const double> x) const
{
    if (static_cast<int>(x.size()) != arity_) throw std::invalid_argument("outer function called with wrong arity");
    switch (kind_) {
        case OuterKind::linear: return constant_ + dot(params_, x);
        case OuterKind::exp_product: return constant_ * std::exp(dot(params_, x));
        case OuterKind::smooth_max: return log_sum_exp(x, params_[0]) / params_[0];
        case OuterKind::smooth_min: return -log_sum_exp(x, -params_[0]) / params_[0];
        case OuterKind::positive_power: return std::pow(positive(x[0]), params_[0]);
        case OuterKind::product:
            return std::accumulate(x.begin(), x.end(), 1.0, std::multiplies<>());
        case OuterKind::cosine: return std::cos(dot(params_, x));
        case OuterKind::sine: return std::sin(dot(params_, x));
        case OuterKind::decomposed_part: return decomposed_value(x);
    }
    return 0.0;
}

double OuterFunction::partial(int i, std::span<const double> x) const
{
    switch (kind_) {
        case OuterKind::linear: return params_[i];
        case OuterKind::exp_product: return params_[i] * value(x);
        case OuterKind::smooth_max: return softmax(x, params_[0])[i];
        case OuterKind::smooth_min: return softmax(x, -params_[0])[i];
        case OuterKind::positive_power: {
            double p = params_[0];
            return x[0] > 0.0 ? p * std::pow(x[0], p - 1.0) : 0.0;
        }
        case OuterKind::product: {
            double acc = 1.0;
            for (int j = 0; j < arity_; ++j)
                if (j != i) acc *= x[j];
            return acc;
        }
        case OuterKind::cosine: return -params_[i] * std::sin(dot(params_, x));
        case OuterKind::sine: return params_[i] * std::cos(dot(params_, x));
        case OuterKind::decomposed_part: return decomposed_partial(i, x);
    }
    return 0.0;
}

double OuterFunction::mixed_partial(std::span<const double> x) const
{
    if (arity_ != 2) throw std::invalid_argument("mixed partial needs exactly two arguments");
    switch (kind_) {
        case OuterKind::linear: return 0.0;
        case OuterKind::exp_product: return params_[0] * params_[1] * value(x);
        case OuterKind::smooth_max: {
            auto p = softmax(x, params_[0]);
            return -params_[0] * p[0] * p[1];
        }
        case OuterKind::smooth_min: {
            auto p = softmax(x, -params_[0]);
            return params_[0] * p[0] * p[1];
        }
        case OuterKind::positive_power: return 0.0;
        case OuterKind::product: return 1.0;
        case OuterKind::cosine: return -params_[0] * params_[1] * std::cos(dot(params_, x));
        case OuterKind::sine: return -params_[0] * params_[1] * std::sin(dot(params_, x));
        case OuterKind::decomposed_part: break;
    }
    throw std::invalid_argument("mixed partial not available for decomposed parts");
}

bool OuterFunction::monotone() const
{
    switch (kind_) {
        case OuterKind::linear:
            return std::all_of(params_.begin(), params_.end(), [](double c) { return c >= 0.0; });
        case OuterKind::exp_product:
            return constant_ >= 0.0 && std::all_of(params_.begin(), params_.end(), [](double k) { return k >= 0.0; });
        case OuterKind::smooth_max:
        case OuterKind::smooth_min:
        case OuterKind::positive_power:
        case OuterKind::decomposed_part: return true;
        case OuterKind::product:
        case OuterKind::cosine:
        case OuterKind::sine: return false;
    }
    return false;
}

ExpBound OuterFunction::bound() const
{
    switch (kind_) {
        case OuterKind::linear: {
            double K = std::abs(constant_);
            for (double c : params_) K += std::abs(c);
            return {K, 1.0};
        }
        case OuterKind::exp_product: {
            double kappa = 0.0;
            for (double k : params_) kappa = std::max(kappa, std::abs(k));
            return {std::abs(constant_), kappa};
        }
        case OuterKind::smooth_max:
        case OuterKind::smooth_min: return {1.0 + std::log(static_cast<double>(arity_)) / params_[0], 1.0};
        case OuterKind::positive_power: return {std::pow(params_[0] / std::exp(1.0), params_[0]), 1.0};
        case OuterKind::product: return {1.0, 1.0};
        case OuterKind::cosine:
        case OuterKind::sine: return {1.0, 0.0};
        case OuterKind::decomposed_part: break;
    }
    return {std::numeric_limits<double>::infinity(), 0.0};
}

std::string OuterFunction::name() const
{
    if (kind_ == OuterKind::decomposed_part) return parent_->name() + (upper_ ? "+" : "-");
    return to_string(kind_);
}

// H+(x) = H(a) + int_a^x (H')+          (one argument)
// H+(x, y) = H(a) + int (d1 H)+(s, a2) ds + int (d2 H)+(a1, t) dt + int int (d12 H)+
// and H- the same with negative parts and no constant.
double OuterFunction::decomposed_value(std::span<const double> x) const
{
    const OuterFunction& H = *parent_;
    auto part = upper_ ? positive : negative;
    const auto& a = base_;
    if (arity_ == 1) {
        double acc = integrate_part(
            part,
            [&](double s) {
                double arg[1] = {s};
                return H.partial(0, arg);
            },
            a[0], x[0]);
        return (upper_ ? H.value(a) : 0.0) + acc;
    }
    double acc = upper_ ? H.value(a) : 0.0;
    acc += integrate_part(
        part,
        [&](double s) {
            double arg[2] = {s, a[1]};
            return H.partial(0, arg);
        },
        a[0], x[0]);
    acc += integrate_part(
        part,
        [&](double t) {
            double arg[2] = {a[0], t};
            return H.partial(1, arg);
        },
        a[1], x[1]);
    acc += integrate(
        [&](double s) {
            return integrate_part(
                part,
                [&](double t) {
                    double arg[2] = {s, t};
                    return H.mixed_partial(arg);
                },
                a[1], x[1]);
        },
        a[0], x[0], 1e-10);
    return acc;
}

double OuterFunction::decomposed_partial(int i, std::span<const double> x) const
{
    const OuterFunction& H = *parent_;
    auto part = upper_ ? positive : negative;
    const auto& a = base_;
    if (arity_ == 1) return part(H.partial(0, x));
    int j = 1 - i;
    double edge[2];
    edge[i] = x[i];
    edge[j] = a[j];
    double acc = part(H.partial(i, edge));
    acc += integrate_part(
        part,
        [&](double t) {
            double arg[2];
            arg[i] = x[i];
            arg[j] = t;
            return H.mixed_partial(arg);
        },
        a[j], x[j]);
    return acc;
}

std::pair<OuterFunction, OuterFunction> decompose(const OuterFunction& h, std::vector<double> base)
{
    if (h.arity_ > 2) throw std::invalid_argument("decomposition supports at most two arguments");
    if (h.kind_ == OuterKind::decomposed_part) throw std::invalid_argument("cannot decompose a decomposed part");
    if (base.empty()) base.assign(h.arity_, 0.0);
    if (static_cast<int>(base.size()) != h.arity_) throw std::invalid_argument("base point has the wrong arity");
    auto parent = std::make_shared<const OuterFunction>(h);
    OuterFunction up(OuterKind::decomposed_part, h.arity_, {});
    up.parent_ = parent;
    up.base_ = base;
    OuterFunction down = up;
    down.upper_ = false;
    return {up, down};
}

//---------------------------------------------------------------------------//
// Observables
//---------------------------------------------------------------------------//

std::string to_string(PairingMode mode)
{
    switch (mode) {
        case PairingMode::signed_charge: return "signed";
        case PairingMode::positive_charges: return "positive";
        case PairingMode::negative_charges: return "negative";
    }
    return "?";
}

PairingMode pairing_mode_from_string(const std::string& name)
{
    if (name == "signed") return PairingMode::signed_charge;
    if (name == "positive") return PairingMode::positive_charges;
    if (name == "negative") return PairingMode::negative_charges;
    throw std::invalid_argument("unknown pairing mode '" + name + "'");
}

double ObservableArgument::pair(const Configuration& cfg) const
{
    double acc = 0.0;
    for (const auto& p : cfg.particles()) {
        if (mode == PairingMode::positive_charges && p.charge < 0.0) continue;
        if (mode == PairingMode::negative_charges && p.charge > 0.0) continue;
        acc += p.charge * h(p.position);
    }
    return acc;
}

Observable::Observable(std::string name, std::vector<ObservableArgument> args, OuterFunction outer)
    : name_(std::move(name)), args_(std::move(args)), outer_(std::move(outer))
{
    if (static_cast<int>(args_.size()) != outer_.arity())
        throw std::invalid_argument("observable '" + name_ + "': " + std::to_string(args_.size()) +
                                    " test functions for an outer function of arity " +
                                    std::to_string(outer_.arity()));
}

namespace {

std::vector<ObservableArgument> signed_args(std::vector<TestFunction> hs)
{
    std::vector<ObservableArgument> args;
    for (auto& h : hs) args.push_back({std::move(h), PairingMode::signed_charge});
    return args;
}

}  // namespace

Observable::Observable(std::string name, std::vector<TestFunction> hs, OuterFunction outer)
    : Observable(std::move(name), signed_args(std::move(hs)), std::move(outer))
{
}

std::vector<double> Observable::pairings(const Configuration& cfg) const
{
    std::vector<double> x;
    x.reserve(args_.size());
    for (const auto& a : args_) x.push_back(a.pair(cfg));
    return x;
}

double Observable::evaluate(const Configuration& cfg) const
{
    return outer_.value(pairings(cfg));
}

bool Observable::monotone() const
{
    if (!outer_.monotone()) return false;
    return std::all_of(args_.begin(), args_.end(), [](const ObservableArgument& a) { return a.h.sign_certificate(); });
}

TestFunction Observable::bound_test_function() const
{
    TestFunction acc(args_.empty() ? 1 : args_.front().h.dim());
    for (const auto& a : args_) acc = acc + a.h.abs_terms();
    return acc.scaled(bound().kappa);
}

std::pair<Observable, Observable> decompose(const Observable& obs, std::vector<double> base)
{
    auto [up, down] = decompose(obs.outer(), std::move(base));
    std::vector<ObservableArgument> args(obs.arguments().begin(), obs.arguments().end());
    return {Observable(obs.name() + "+", args, up), Observable(obs.name() + "-", args, down)};
}

}  // namespace weakgas
