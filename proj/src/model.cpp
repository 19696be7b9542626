#include "weakgas/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace weakgas {

namespace {

void require(bool ok, const std::string& what)
{
    if (!ok) throw std::invalid_argument(what);
}

// Integral of a radial profile over the ball of radius `range`, split at the
// kinks of the profile so each Gauss-Kronrod panel sees a smooth integrand.
template <class F>
double radial_l1(int dim, double range, std::vector<double> breaks, const F& profile)
{
    breaks.push_back(0.0);
    breaks.push_back(range);
    std::sort(breaks.begin(), breaks.end());
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
        double a = std::max(0.0, breaks[i]);
        double b = std::min(range, breaks[i + 1]);
        if (b <= a) continue;
        auto integrand = [&](double r) { return dim == 1 ? 2.0 * profile(r) : 2.0 * std::numbers::pi * r * profile(r); };
        total += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, a, b, 12, 1e-14);
    }
    return total;
}

}  // namespace

//---------------------------------------------------------------------------//
// Kernel
//---------------------------------------------------------------------------//

std::string to_string(KernelKind kind)
{
    switch (kind) {
        case KernelKind::gaussian: return "gaussian";
        case KernelKind::tent: return "tent";
        case KernelKind::smoothed_ball: return "smoothed_ball";
    }
    return "?";
}

KernelKind kernel_kind_from_string(const std::string& name)
{
    if (name == "gaussian") return KernelKind::gaussian;
    if (name == "tent") return KernelKind::tent;
    if (name == "smoothed_ball" || name == "ball-indicator-smoothed") return KernelKind::smoothed_ball;
    throw std::invalid_argument("unknown kernel kind '" + name + "'");
}

Kernel::Kernel() = default;

Kernel Kernel::gaussian(int dim, double sigma, double range)
{
    check_dimension(dim);
    require(sigma > 0.0 && std::isfinite(sigma), "gaussian width must be positive");
    if (range == 0.0) range = 8.0 * sigma;
    require(range > 0.0 && std::isfinite(range), "gaussian truncation range must be positive");
    Kernel k;
    k.kind_ = KernelKind::gaussian;
    k.dim_ = dim;
    k.width_ = sigma;
    k.height_ = std::pow(2.0 * std::numbers::pi * sigma * sigma, -0.5 * dim);
    k.range_ = range;
    k.l1_norm_ = k.compute_l1();
    return k;
}

Kernel Kernel::tent(int dim, double radius, double height)
{
    check_dimension(dim);
    require(radius > 0.0 && height > 0.0, "tent kernel needs positive radius and height");
    Kernel k;
    k.kind_ = KernelKind::tent;
    k.dim_ = dim;
    k.width_ = radius;
    k.height_ = height;
    k.range_ = radius;
    k.l1_norm_ = k.compute_l1();
    return k;
}

Kernel Kernel::smoothed_ball(int dim, double radius, double ramp, double height)
{
    check_dimension(dim);
    require(radius > 0.0 && ramp > 0.0 && height > 0.0, "smoothed ball needs positive radius, ramp and height");
    Kernel k;
    k.kind_ = KernelKind::smoothed_ball;
    k.dim_ = dim;
    k.width_ = radius;
    k.ramp_ = ramp;
    k.height_ = height;
    k.range_ = radius + ramp;
    k.l1_norm_ = k.compute_l1();
    return k;
}

double Kernel::profile(double r) const
{
    switch (kind_) {
        case KernelKind::gaussian: return height_ * std::exp(-0.5 * r * r / (width_ * width_));
        case KernelKind::tent: return r >= width_ ? 0.0 : height_ * (1.0 - r / width_);
        case KernelKind::smoothed_ball:
            if (r <= width_) return height_;
            if (r >= width_ + ramp_) return 0.0;
            return height_ * (1.0 - (r - width_) / ramp_);
    }
    return 0.0;
}

double Kernel::radial(double r) const
{
    if (r > range_) return 0.0;
    double value = profile(r);
    for (const auto& [start, end] : tapers_) {
        if (r >= end) return 0.0;
        if (r > start) value *= (end - r) / (end - start);
    }
    return value;
}

double Kernel::untruncated_l1_norm() const
{
    const double pi = std::numbers::pi;
    switch (kind_) {
        case KernelKind::gaussian: return 1.0;
        case KernelKind::tent: return dim_ == 1 ? height_ * width_ : height_ * pi * width_ * width_ / 3.0;
        case KernelKind::smoothed_ball: {
            double a = width_, w = ramp_;
            return dim_ == 1 ? height_ * (2.0 * a + w) : 2.0 * pi * height_ * (0.5 * a * a + 0.5 * a * w + w * w / 6.0);
        }
    }
    return 0.0;
}

double Kernel::compute_l1() const
{
    if (!tapered()) {
        if (kind_ != KernelKind::gaussian) return untruncated_l1_norm();
        double s = width_;
        if (dim_ == 1) return std::erf(range_ / (s * std::numbers::sqrt2));
        return -std::expm1(-0.5 * range_ * range_ / (s * s));
    }
    std::vector<double> breaks;
    if (kind_ != KernelKind::gaussian) breaks.push_back(width_);
    if (kind_ == KernelKind::smoothed_ball) breaks.push_back(width_ + ramp_);
    for (const auto& [start, end] : tapers_) {
        breaks.push_back(start);
        breaks.push_back(end);
    }
    return radial_l1(dim_, range_, breaks, [this](double r) { return radial(r); });
}

std::string Kernel::name() const
{
    std::string s = to_string(kind_);
    if (tapered()) s += "(truncated)";
    return s;
}

KernelTruncation truncate_kernel(const Kernel& kernel, double radius)
{
    require(radius > 0.0, "truncation radius must be positive");
    if (radius >= kernel.range()) return {kernel, 0.0};
    Kernel out = kernel;
    out.tapers_.emplace_back(0.95 * radius, radius);
    out.range_ = radius;
    out.l1_norm_ = out.compute_l1();
    // the truncated kernel is pointwise below the input, so the L1 distance is a difference of norms
    return {out, std::max(0.0, kernel.l1_norm() - out.l1_norm())};
}

//---------------------------------------------------------------------------//
// ChargeLaw
//---------------------------------------------------------------------------//

ChargeLaw::ChargeLaw() : ChargeLaw({{1.0, 1.0}}) {}

ChargeLaw::ChargeLaw(std::vector<ChargeAtom> atoms, double bound) : atoms_(std::move(atoms))
{
    require(!atoms_.empty(), "charge law needs at least one atom");
    double total = 0.0, max_abs = 0.0;
    for (const auto& a : atoms_) {
        require(std::isfinite(a.charge) && a.charge != 0.0, "charge law atoms must be finite and nonzero");
        require(a.weight > 0.0 && std::isfinite(a.weight), "charge law weights must be positive");
        total += a.weight;
        max_abs = std::max(max_abs, std::abs(a.charge));
    }
    require(std::abs(total - 1.0) <= 1e-9, "charge law weights must sum to 1 (got " + std::to_string(total) + ")");
    for (auto& a : atoms_) a.weight /= total;
    if (bound == 0.0) bound = max_abs;
    require(bound >= max_abs, "charge bound C is smaller than the largest |charge|");
    bound_ = bound;
    double acc = 0.0;
    for (const auto& a : atoms_) cumulative_.push_back(acc += a.weight);
    cumulative_.back() = 1.0;
}

double ChargeLaw::mean() const
{
    return expectation([](double s) { return s; });
}

double ChargeLaw::weight_of(double charge) const
{
    for (const auto& a : atoms_)
        if (a.charge == charge) return a.weight;
    return 0.0;
}

std::size_t ChargeLaw::sample_index(Rng& rng) const
{
    double u = uniform01(rng);
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    return std::min<std::size_t>(it - cumulative_.begin(), atoms_.size() - 1);
}

//---------------------------------------------------------------------------//
// EnergyDensity
//---------------------------------------------------------------------------//

struct EnergyDensity::Table {
    boost::math::interpolators::cardinal_cubic_b_spline<double> spline;
    double lo = 0.0;
    double hi = 0.0;
    double at_zero = 0.0;
    double lo_value = 0.0, lo_slope = 0.0;
    double hi_value = 0.0, hi_slope = 0.0;
};

EnergyDensity EnergyDensity::zero()
{
    return EnergyDensity{};
}

EnergyDensity EnergyDensity::linear(double b)
{
    require(std::isfinite(b), "linear slope must be finite");
    return zero().shifted(b);
}

EnergyDensity EnergyDensity::logcosh(double strength)
{
    require(strength > 0.0 && std::isfinite(strength), "energy strength must be positive");
    EnergyDensity e;
    e.kind_ = EnergyKind::logcosh;
    e.scale_ = strength;
    e.base_lo_ = -strength;
    e.base_hi_ = strength;
    return e;
}

EnergyDensity EnergyDensity::logcosh_gauged(double strength)
{
    return logcosh(strength).shifted(strength);
}

EnergyDensity EnergyDensity::sqrt_saturating(double strength)
{
    EnergyDensity e = logcosh(strength);
    e.kind_ = EnergyKind::sqrt_saturating;
    return e;
}

EnergyDensity EnergyDensity::sqrt_saturating_gauged(double strength)
{
    return sqrt_saturating(strength).shifted(strength);
}

EnergyDensity EnergyDensity::tabulated(double phi_min, double step, std::vector<double> samples, bool require_concave)
{
    require(samples.size() >= 5, "tabulated energy needs at least 5 samples");
    require(step > 0.0, "tabulated energy step must be positive");
    double phi_max = phi_min + step * static_cast<double>(samples.size() - 1);
    require(phi_min <= 0.0 && phi_max >= 0.0, "tabulated energy range must contain 0");
    for (double v : samples) require(std::isfinite(v), "tabulated energy samples must be finite");

    // Fourth-order one-sided end slopes. Boost's default end estimate bends
    // the spline upward at the right end of a concave table.
    const auto& t = samples;
    const std::size_t n = t.size();
    double left = (-25 * t[0] + 48 * t[1] - 36 * t[2] + 16 * t[3] - 3 * t[4]) / (12 * step);
    double right = (25 * t[n - 1] - 48 * t[n - 2] + 36 * t[n - 3] - 16 * t[n - 4] + 3 * t[n - 5]) / (12 * step);
    auto table = std::make_shared<Table>(Table{boost::math::interpolators::cardinal_cubic_b_spline<double>(
                                                   samples.data(), n, phi_min, step, left, right),
                                               phi_min, phi_max});
    table->at_zero = table->spline(0.0);
    table->lo_value = table->spline(phi_min);
    table->lo_slope = table->spline.prime(phi_min);
    table->hi_value = table->spline(phi_max);
    table->hi_slope = table->spline.prime(phi_max);

    EnergyDensity e;
    e.kind_ = EnergyKind::tabulated;
    e.table_ = table;
    e.base_lo_ = std::min(table->lo_slope, table->hi_slope);
    e.base_hi_ = std::max(table->lo_slope, table->hi_slope);
    // Spline end conditions leave curvature of order 1e-9 near the table
    // ends, so positive curvature counts only relative to the table's scale.
    constexpr int scan = 20000;
    double max_second = 0.0, max_curl = 0.0;
    for (int i = 0; i <= scan; ++i) {
        double phi = phi_min + (phi_max - phi_min) * i / scan;
        double d1 = table->spline.prime(phi);
        double d2 = table->spline.double_prime(phi);
        e.base_lo_ = std::min(e.base_lo_, d1);
        e.base_hi_ = std::max(e.base_hi_, d1);
        max_second = std::max(max_second, std::abs(d2));
        max_curl = std::max(max_curl, d2);
    }
    bool concave = max_curl <= std::max(1e-12, 1e-6 * max_second);
    if (require_concave && !concave) throw std::invalid_argument("tabulated energy density is not concave");
    e.concave_ = concave;
    return e;
}

double EnergyDensity::base(double phi) const
{
    switch (kind_) {
        case EnergyKind::zero:
        case EnergyKind::linear: return 0.0;
        case EnergyKind::logcosh: {
            double a = std::abs(phi);
            return -(a + std::log1p(std::exp(-2.0 * a)) - std::numbers::ln2);
        }
        case EnergyKind::sqrt_saturating: return 1.0 - std::hypot(1.0, phi);
        case EnergyKind::tabulated: {
            const Table& t = *table_;
            if (phi < t.lo) return t.lo_value + t.lo_slope * (phi - t.lo) - t.at_zero;
            if (phi > t.hi) return t.hi_value + t.hi_slope * (phi - t.hi) - t.at_zero;
            return t.spline(phi) - t.at_zero;
        }
    }
    return 0.0;
}

double EnergyDensity::base_first(double phi) const
{
    switch (kind_) {
        case EnergyKind::zero:
        case EnergyKind::linear: return 0.0;
        case EnergyKind::logcosh: return -std::tanh(phi);
        case EnergyKind::sqrt_saturating: return -phi / std::hypot(1.0, phi);
        case EnergyKind::tabulated: {
            const Table& t = *table_;
            if (phi < t.lo) return t.lo_slope;
            if (phi > t.hi) return t.hi_slope;
            return t.spline.prime(phi);
        }
    }
    return 0.0;
}

double EnergyDensity::base_second(double phi) const
{
    switch (kind_) {
        case EnergyKind::zero:
        case EnergyKind::linear: return 0.0;
        case EnergyKind::logcosh: {
            double c = std::cosh(phi);
            return -1.0 / (c * c);
        }
        case EnergyKind::sqrt_saturating: {
            double q = 1.0 + phi * phi;
            return -1.0 / (q * std::sqrt(q));
        }
        case EnergyKind::tabulated: {
            const Table& t = *table_;
            if (phi < t.lo || phi > t.hi) return 0.0;
            return t.spline.double_prime(phi);
        }
    }
    return 0.0;
}

double EnergyDensity::value(double phi) const
{
    return scale_ * base(phi) - shift_ * phi;
}

double EnergyDensity::first(double phi) const
{
    return scale_ * base_first(phi) - shift_;
}

double EnergyDensity::second(double phi) const
{
    return scale_ * base_second(phi);
}

double EnergyDensity::slope_bound() const
{
    return std::max(std::abs(min_slope()), std::abs(max_slope()));
}

std::string EnergyDensity::name() const
{
    switch (kind_) {
        case EnergyKind::zero:
        case EnergyKind::linear: return shift_ == 0.0 ? "zero" : "linear";
        case EnergyKind::logcosh:
            return shift_ == 0.0 ? "logcosh" : (shift_ == scale_ ? "logcosh_gauged" : "logcosh_shifted");
        case EnergyKind::sqrt_saturating:
            return shift_ == 0.0 ? "sqrt_saturating"
                                 : (shift_ == scale_ ? "sqrt_saturating_gauged" : "sqrt_saturating_shifted");
        case EnergyKind::tabulated: return concave_ ? "tabulated" : "tabulated_nonconcave";
    }
    return "?";
}

EnergyDensity EnergyDensity::shifted(double b) const
{
    EnergyDensity e = *this;
    e.shift_ += b;
    if (e.kind_ == EnergyKind::zero && e.shift_ != 0.0) e.kind_ = EnergyKind::linear;
    return e;
}

EnergyDensity EnergyDensity::interpolated(double alpha, double b) const
{
    require(alpha >= 0.0 && alpha <= 1.0, "interpolation parameter must lie in [0, 1]");
    EnergyDensity e = *this;
    e.scale_ = alpha * scale_;
    e.base_lo_ = alpha * base_lo_;
    e.base_hi_ = alpha * base_hi_;
    e.shift_ = alpha * shift_ + (1.0 - alpha) * b;
    if (alpha == 0.0) {
        e.kind_ = e.shift_ == 0.0 ? EnergyKind::zero : EnergyKind::linear;
        e.table_.reset();
        e.scale_ = 1.0;
        e.concave_ = true;
    }
    return e;
}

EnergyDensity EnergyDensity::alpha_derivative(double b) const
{
    return shifted(-b);
}

//---------------------------------------------------------------------------//
// CutoffFunction
//---------------------------------------------------------------------------//

CutoffFunction::CutoffFunction() = default;

CutoffFunction::CutoffFunction(int dim, double plateau_radius, double ramp_width, double height, double beta,
                               Point center)
    : dim_(dim), plateau_(plateau_radius), ramp_(ramp_width), height_(height), beta_(beta), center_(center)
{
    check_dimension(dim);
    require(plateau_radius >= 0.0, "cutoff plateau radius must be nonnegative");
    require(ramp_width > 0.0, "cutoff ramp width must be positive");
    require(beta > 0.0, "beta must be positive");
    require(height > 0.0 && height <= beta, "cutoff height must lie in (0, beta]");
    for (int k = dim; k < kMaxDim; ++k) require(center[k] == 0.0, "cutoff center has extra coordinates");
}

double CutoffFunction::operator()(const Point& x) const
{
    double r = sup_norm(x - center_);
    if (r <= plateau_) return height_;
    double t = (plateau_ + ramp_ - r) / ramp_;
    return t <= 0.0 ? 0.0 : height_ * t;
}

double CutoffFunction::l1_norm() const
{
    double p = plateau_, w = ramp_;
    if (dim_ == 1) return height_ * (2.0 * p + w);
    return height_ * (4.0 * p * p + 4.0 * p * w + 4.0 * w * w / 3.0);
}

CutoffFunction CutoffFunction::with_plateau(double plateau_radius) const
{
    return CutoffFunction(dim_, plateau_radius, ramp_, height_, beta_, center_);
}

CutoffFunction CutoffFunction::shifted(const Point& t) const
{
    return CutoffFunction(dim_, plateau_, ramp_, height_, beta_, center_ + t);
}

//---------------------------------------------------------------------------//
// ModelSpec and gauge replacement
//---------------------------------------------------------------------------//

void ModelSpec::validate() const
{
    check_dimension(dim);
    require(kernel.dim() == dim, "kernel dimension does not match the model dimension");
    require(cutoff.dim() == dim, "cutoff dimension does not match the model dimension");
    require(activity >= 0.0 && std::isfinite(activity), "activity must be nonnegative");
    require(std::isfinite(energy.slope_bound()), "energy density must have bounded slope");
    require(energy.value(0.0) == 0.0, "energy density must vanish at 0");
}

GaugedModel gauge_transform(const EnergyDensity& energy, const ChargeLaw& law, double activity, double b, double beta,
                            double kernel_l1)
{
    if (b < energy.slope_bound() - 1e-12)
        throw std::invalid_argument("gauge shift b = " + std::to_string(b) + " is below sup|v'| = " +
                                    std::to_string(energy.slope_bound()));
    double t = b * beta * kernel_l1;
    std::vector<ChargeAtom> atoms;
    double norm = 0.0;
    for (const auto& a : law.atoms()) {
        double w = a.weight * std::exp(-a.charge * t);
        atoms.push_back({a.charge, w});
        norm += w;
    }
    for (auto& a : atoms) a.weight /= norm;
    return {energy.shifted(b), ChargeLaw(std::move(atoms), law.bound()), activity * norm};
}

ModelSpec gauge_transform(const ModelSpec& model, double b)
{
    auto g = gauge_transform(model.energy, model.charge_law, model.activity, b, model.beta(), model.kernel.l1_norm());
    ModelSpec out = model;
    out.energy = g.energy;
    out.charge_law = g.charge_law;
    out.activity = g.activity;
    return out;
}

}  // namespace weakgas
