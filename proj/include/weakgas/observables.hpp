#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "weakgas/configuration.hpp"

namespace weakgas {

//---------------------------------------------------------------------------//
// Test functions
//---------------------------------------------------------------------------//

enum class BumpKind { gaussian_bump, plateau_ramp };

/*!
 * One compactly supported term of a test function.
 *
 *   gaussian_bump: amplitude * max(0, exp(-r^2 / 2w^2) - exp(-18)), zero for r >= 6w
 *   plateau_ramp:  amplitude on the sup-norm cube of radius `width`, linear ramp
 *                  of length `ramp` to 0 (ramp = 0 gives the closed indicator)
 */
struct Bump {
    BumpKind kind = BumpKind::gaussian_bump;
    Point center{};
    double width = 1.0;
    double ramp = 0.0;
    double amplitude = 1.0;

    double operator()(const Point& x) const;
    double support_radius() const;
};

/// Finite sum of bumps. Scaling and shifting act on the terms, so the
/// positive and negative parts below are the termwise split f = f+ - f-.
class TestFunction
{
  public:
    TestFunction() = default;
    explicit TestFunction(int dim) : dim_(dim) {}

    static TestFunction gaussian_bump(int dim, const Point& center, double width, double amplitude = 1.0);
    static TestFunction plateau_ramp(int dim, const Point& center, double radius, double ramp, double amplitude = 1.0);

    double operator()(const Point& x) const;

    int dim() const { return dim_; }
    std::span<const Bump> terms() const { return terms_; }
    bool is_zero() const { return terms_.empty(); }
    //! h >= 0 guaranteed by construction
    bool sign_certificate() const;
    //! sum of |amplitudes|, an upper bound for sup |h|
    double sup_bound() const;
    //! bounding box of the support (empty terms give a degenerate box at 0)
    Box support() const;
    //! kink locations along an axis, for piecewise quadrature
    std::vector<double> breakpoints(int axis) const;

    TestFunction operator+(const TestFunction& other) const;
    TestFunction scaled(double c) const;
    TestFunction shifted(const Point& t) const;
    TestFunction positive_part() const;
    TestFunction negative_part() const;
    TestFunction abs_terms() const { return positive_part() + negative_part(); }

  private:
    int dim_ = 1;
    std::vector<Bump> terms_;
};

//---------------------------------------------------------------------------//
// Outer functions
//---------------------------------------------------------------------------//

enum class OuterKind {
    linear,           // c0 + sum c_i x_i
    exp_product,      // c * exp(sum k_i x_i)
    smooth_max,       // (1/t) log sum exp(t x_i)
    smooth_min,       // -(1/t) log sum exp(-t x_i)
    positive_power,   // max(x, 0)^p, one argument
    product,          // prod x_i
    cosine,           // cos(sum a_i x_i)
    sine,             // sin(sum a_i x_i)
    decomposed_part,  // increasing part H+ or H- of another outer function
};

std::string to_string(OuterKind kind);
OuterKind outer_kind_from_string(const std::string& name);

/// |H(x)| <= K exp(kappa * sum |x_i|)
struct ExpBound {
    double K = 0.0;
    double kappa = 0.0;
};

/// Registry function H with analytic first partials and, for two arguments,
/// the mixed partial. Monotonicity is registry metadata, not inspected.
class OuterFunction
{
  public:
    static OuterFunction linear(std::vector<double> coeffs, double constant = 0.0);
    static OuterFunction exp_product(std::vector<double> rates, double factor = 1.0);
    static OuterFunction smooth_max(int arity, double sharpness = 1.0);
    static OuterFunction smooth_min(int arity, double sharpness = 1.0);
    static OuterFunction positive_power(double power);
    static OuterFunction product(int arity);
    static OuterFunction cosine(std::vector<double> freqs);
    static OuterFunction sine(std::vector<double> freqs);

    OuterKind kind() const { return kind_; }
    int arity() const { return arity_; }
    const std::vector<double>& params() const { return params_; }
    double constant() const { return constant_; }

    double value(std::span<const double> x) const;
    double partial(int i, std::span<const double> x) const;
    //! d^2 H / dx_0 dx_1, two-argument functions only
    double mixed_partial(std::span<const double> x) const;

    //! all partial derivatives >= 0 everywhere (registry metadata)
    bool monotone() const;
    //! for decomposed parts, monotonicity holds for arguments >= base point
    const std::vector<double>& monotone_from() const { return base_; }
    ExpBound bound() const;
    std::string name() const;

    /// (H+, H-) with H = H+ - H-, both with nonnegative partials on
    /// [base, inf)^n. Supports one or two arguments.
    friend std::pair<OuterFunction, OuterFunction> decompose(const OuterFunction& h, std::vector<double> base);

  private:
    OuterFunction(OuterKind kind, int arity, std::vector<double> params, double constant = 0.0);
    double decomposed_value(std::span<const double> x) const;
    double decomposed_partial(int i, std::span<const double> x) const;

    OuterKind kind_ = OuterKind::linear;
    int arity_ = 1;
    std::vector<double> params_;
    double constant_ = 0.0;
    // decomposed parts
    std::shared_ptr<const OuterFunction> parent_;
    bool upper_ = true;
    std::vector<double> base_;
};

std::pair<OuterFunction, OuterFunction> decompose(const OuterFunction& h, std::vector<double> base = {});

//---------------------------------------------------------------------------//
// Observables
//---------------------------------------------------------------------------//

/// Which charges enter <eta, h>. The non-signed modes are increasing in the
/// order of signed measures for h >= 0 as well.
enum class PairingMode { signed_charge, positive_charges, negative_charges };

std::string to_string(PairingMode mode);
PairingMode pairing_mode_from_string(const std::string& name);

struct ObservableArgument {
    TestFunction h;
    PairingMode mode = PairingMode::signed_charge;

    double pair(const Configuration& cfg) const;
};

/// F(eta) = H(<eta, h_1>, ..., <eta, h_n>)
class Observable
{
  public:
    Observable(std::string name, std::vector<ObservableArgument> args, OuterFunction outer);
    Observable(std::string name, std::vector<TestFunction> hs, OuterFunction outer);

    const std::string& name() const { return name_; }
    std::span<const ObservableArgument> arguments() const { return args_; }
    const OuterFunction& outer() const { return outer_; }
    int arity() const { return static_cast<int>(args_.size()); }

    std::vector<double> pairings(const Configuration& cfg) const;
    double evaluate(const Configuration& cfg) const;
    double operator()(const Configuration& cfg) const { return evaluate(cfg); }

    bool monotone() const;
    ExpBound bound() const { return outer_.bound(); }
    //! h with |F(eta)| <= K exp(<|eta|, h>)
    TestFunction bound_test_function() const;

  private:
    std::string name_;
    std::vector<ObservableArgument> args_;
    OuterFunction outer_;
};

/// F = F+ - F-, both increasing. Errors for more than two arguments.
std::pair<Observable, Observable> decompose(const Observable& obs, std::vector<double> base = {});

}  // namespace weakgas
