#include "weakgas/oracles.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace weakgas {

namespace {

std::vector<double> pieces(double lo, double hi, std::vector<double> breaks)
{
    breaks.push_back(lo);
    breaks.push_back(hi);
    std::erase_if(breaks, [&](double b) { return b < lo || b > hi; });
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
    return breaks;
}

template <class F>
double integrate_pieces(const std::vector<double>& cuts, const F& f, double tol)
{
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        if (cuts[i + 1] <= cuts[i]) continue;
        acc += boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, cuts[i], cuts[i + 1], 10, tol);
    }
    return acc;
}

Box domain(const TestFunction& h, const TestFunction& f)
{
    if (h.is_zero()) return f.support();
    if (f.is_zero()) return h.support();
    return h.support().united(f.support());
}

std::vector<double> joined(std::vector<double> a, const std::vector<double>& b)
{
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

// kinks of the quadrature convolution G*g along axis 0 (d = 1)
std::vector<double> convolution_breaks(const ModelSpec& model, const QuadratureGrid& grid)
{
    std::vector<double> out;
    if (grid.dim() != 1) return out;
    std::vector<double> offsets{0.0, -model.kernel.range(), model.kernel.range()};
    if (model.kernel.kind() == KernelKind::smoothed_ball) {
        offsets.push_back(-model.kernel.width());
        offsets.push_back(model.kernel.width());
    }
    for (std::size_t n = 0; n < grid.size(); ++n) {
        double x = grid.node(n)[0];
        for (double o : offsets) out.push_back(x + o);
    }
    return out;
}

}  // namespace

double integrate_box(const Box& box, const std::function<double(const Point&)>& f, const std::vector<double>& breaks0,
                     const std::vector<double>& breaks1, double tol)
{
    auto cuts0 = pieces(box.lo[0], box.hi[0], breaks0);
    if (box.dim == 1) return integrate_pieces(cuts0, [&](double x) { return f(Point{x, 0.0}); }, tol);
    auto cuts1 = pieces(box.lo[1], box.hi[1], breaks1);
    return integrate_pieces(
        cuts1,
        [&](double y) { return integrate_pieces(cuts0, [&](double x) { return f(Point{x, y}); }, tol); }, tol);
}

std::complex<double> free_laplace_oracle(const ModelSpec& model, const TestFunction& h, const TestFunction& f,
                                         std::complex<double> c)
{
    if ((h.is_zero() && f.is_zero()) || model.activity == 0.0) return 1.0;
    Box box = domain(h, f);
    auto atoms = model.charge_law.atoms();
    auto integrand = [&](const Point& y) {
        std::complex<double> acc = 0.0;
        double hy = h(y), fy = f(y);
        for (const auto& a : atoms) acc += a.weight * (std::exp(std::abs(a.charge) * hy + c * a.charge * fy) - 1.0);
        return acc;
    };
    auto b0 = joined(h.breakpoints(0), f.breakpoints(0));
    std::vector<double> b1;
    if (model.dim == 2) b1 = joined(h.breakpoints(1), f.breakpoints(1));
    double re = integrate_box(box, [&](const Point& y) { return integrand(y).real(); }, b0, b1);
    double im = c.imag() == 0.0 ? 0.0 : integrate_box(box, [&](const Point& y) { return integrand(y).imag(); }, b0, b1);
    return std::exp(model.activity * std::complex<double>(re, im));
}

double free_laplace_oracle(const ModelSpec& model, const TestFunction& h, const TestFunction& f)
{
    return free_laplace_oracle(model, h, f, 1.0).real();
}

std::complex<double> free_char_oracle(const ModelSpec& model, const TestFunction& f)
{
    if (f.is_zero() || model.activity == 0.0) return 1.0;
    auto atoms = model.charge_law.atoms();
    auto b0 = f.breakpoints(0);
    std::vector<double> b1;
    if (model.dim == 2) b1 = f.breakpoints(1);
    double re = integrate_box(
        f.support(),
        [&](const Point& y) {
            double acc = 0.0, fy = f(y);
            for (const auto& a : atoms) acc += a.weight * (std::cos(a.charge * fy) - 1.0);
            return acc;
        },
        b0, b1);
    double im = integrate_box(
        f.support(),
        [&](const Point& y) {
            double acc = 0.0, fy = f(y);
            for (const auto& a : atoms) acc += a.weight * std::sin(a.charge * fy);
            return acc;
        },
        b0, b1);
    double z = model.activity;
    return std::exp(z * re) * std::complex<double>(std::cos(z * im), std::sin(z * im));
}

double tilted_laplace_oracle(const ModelSpec& model, const QuadratureGrid& grid, double b, const TestFunction& h,
                             const TestFunction& f)
{
    if ((h.is_zero() && f.is_zero()) || model.activity == 0.0) return 1.0;
    CutoffConvolution conv(model.kernel, model.cutoff, grid);
    auto atoms = model.charge_law.atoms();
    auto b0 = joined(joined(h.breakpoints(0), f.breakpoints(0)), convolution_breaks(model, grid));
    std::vector<double> b1;
    if (model.dim == 2) b1 = joined(h.breakpoints(1), f.breakpoints(1));
    double integral = integrate_box(
        domain(h, f),
        [&](const Point& y) {
            double hy = h(y), fy = f(y), cy = b * conv(y), acc = 0.0;
            for (const auto& a : atoms)
                acc += a.weight * std::exp(a.charge * cy) * std::expm1(std::abs(a.charge) * hy + a.charge * fy);
            return acc;
        },
        b0, b1);
    return std::exp(model.activity * integral);
}

double tilted_bound_oracle(const ModelSpec& model, const QuadratureGrid& grid, double b, const TestFunction& h,
                           double K)
{
    return K * tilted_laplace_oracle(model, grid, b, h, TestFunction(model.dim));
}

double uniform_bound(const ModelSpec& model, double b, const TestFunction& h, double K)
{
    if (h.is_zero()) return K;
    double C = model.charge_law.bound();
    auto b0 = h.breakpoints(0);
    std::vector<double> b1;
    if (model.dim == 2) b1 = h.breakpoints(1);
    double integral = integrate_box(h.support(), [&](const Point& y) { return std::expm1(C * h(y)); }, b0, b1);
    double tilt = std::exp(C * b * model.beta() * model.kernel.l1_norm());
    return K * std::exp(model.activity * integral * tilt);
}

double tilted_charge_density(const ModelSpec& model, const CutoffConvolution& conv, double b, const Point& y)
{
    double cy = b * conv(y);
    return model.activity * model.charge_law.expectation([&](double s) { return s * std::exp(s * cy); });
}

double free_mean_pairing(const ModelSpec& model, const TestFunction& h)
{
    if (h.is_zero()) return 0.0;
    std::vector<double> b1;
    if (model.dim == 2) b1 = h.breakpoints(1);
    double integral = integrate_box(h.support(), [&](const Point& y) { return h(y); }, h.breakpoints(0), b1);
    return model.activity * model.charge_law.mean() * integral;
}

}  // namespace weakgas
