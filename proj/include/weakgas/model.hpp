#pragma once

#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "weakgas/geometry.hpp"

namespace weakgas {

//---------------------------------------------------------------------------//
// Kernel
//---------------------------------------------------------------------------//

enum class KernelKind { gaussian, tent, smoothed_ball };

struct KernelTruncation;

std::string to_string(KernelKind kind);
KernelKind kernel_kind_from_string(const std::string& name);

/*!
 * Symmetric, non-negative, radial interaction kernel with finite range.
 *
 * The radial profile is one of
 *   - gaussian:      (2 pi sigma^2)^{-d/2} exp(-r^2 / (2 sigma^2)), cut at `range`
 *   - tent:          height * max(0, 1 - r / radius)
 *   - smoothed_ball: height on [0, radius], linear ramp to 0 on [radius, radius + ramp]
 *
 * Truncation (see truncate_kernel) multiplies the profile by linear tapers, so
 * every kernel evaluates to exactly zero beyond range().
 */
class Kernel
{
  public:
    Kernel();

    static Kernel gaussian(int dim, double sigma, double range = 0.0);
    static Kernel tent(int dim, double radius, double height = 1.0);
    static Kernel smoothed_ball(int dim, double radius, double ramp, double height = 1.0);

    double operator()(const Point& x) const { return radial(norm(x)); }
    double radial(double r) const;

    KernelKind kind() const { return kind_; }
    int dim() const { return dim_; }
    //! sigma for gaussians, radius otherwise
    double width() const { return width_; }
    double height() const { return height_; }
    double ramp() const { return ramp_; }
    double range() const { return range_; }
    double l1_norm() const { return l1_norm_; }
    //! L1 norm of the profile with no range cut or taper applied
    double untruncated_l1_norm() const;
    bool tapered() const { return !tapers_.empty(); }
    std::string name() const;

  private:
    friend KernelTruncation truncate_kernel(const Kernel& kernel, double radius);
    double profile(double r) const;
    double compute_l1() const;

    KernelKind kind_ = KernelKind::tent;
    int dim_ = 1;
    double width_ = 1.0;
    double height_ = 1.0;
    double ramp_ = 0.0;
    double range_ = 1.0;
    // (start, end) pairs: factor falls linearly from 1 at start to 0 at end
    std::vector<std::pair<double, double>> tapers_;
    double l1_norm_ = 1.0;
};

struct KernelTruncation {
    Kernel kernel;
    double l1_error = 0.0;  //!< ||G - G_trunc||_1
};

/// Cuts the kernel to `radius` with a linear taper over the last 5% of the radius.
KernelTruncation truncate_kernel(const Kernel& kernel, double radius);

//---------------------------------------------------------------------------//
// Charge law
//---------------------------------------------------------------------------//

struct ChargeAtom {
    double charge = 1.0;
    double weight = 1.0;
};

/// Finitely supported probability law of particle charges, with no atom at zero.
class ChargeLaw
{
  public:
    ChargeLaw();
    explicit ChargeLaw(std::vector<ChargeAtom> atoms, double bound = 0.0);

    static ChargeLaw unit() { return ChargeLaw({{1.0, 1.0}}); }
    static ChargeLaw rademacher() { return ChargeLaw({{-1.0, 0.5}, {1.0, 0.5}}); }

    std::span<const ChargeAtom> atoms() const { return atoms_; }
    std::size_t size() const { return atoms_.size(); }
    //! C with supp r in [-C, C]
    double bound() const { return bound_; }
    double mean() const;
    double weight_of(double charge) const;

    std::size_t sample_index(Rng& rng) const;
    double sample(Rng& rng) const { return atoms_[sample_index(rng)].charge; }

    template <class F>
    auto expectation(F&& f) const
    {
        decltype(f(1.0) * 1.0) acc{};
        for (const auto& a : atoms_) acc += a.weight * f(a.charge);
        return acc;
    }

  private:
    std::vector<ChargeAtom> atoms_;
    std::vector<double> cumulative_;
    double bound_ = 1.0;
};

//---------------------------------------------------------------------------//
// Energy density
//---------------------------------------------------------------------------//

enum class EnergyKind { zero, linear, logcosh, sqrt_saturating, tabulated };

/*!
 * C^2 energy density v with v(0) = 0 and bounded first derivative.
 *
 * Every density is stored as v(phi) = scale * base(phi) - shift * phi, which
 * makes the gauge replacement and the interpolated family closed operations:
 *   zero:            base = 0
 *   logcosh:         base = -log cosh(phi)
 *   sqrt_saturating: base = 1 - sqrt(1 + phi^2)
 *   tabulated:       base = cubic B-spline through samples, extended linearly
 */
class EnergyDensity
{
  public:
    EnergyDensity() = default;

    static EnergyDensity zero();
    //! v(phi) = -b phi
    static EnergyDensity linear(double b);
    static EnergyDensity logcosh(double strength = 1.0);
    //! -k log cosh(phi) - k phi, slope bound 2k, monotonically falling
    static EnergyDensity logcosh_gauged(double strength = 1.0);
    static EnergyDensity sqrt_saturating(double strength = 1.0);
    //! k (1 - sqrt(1 + phi^2)) - k phi, slope bound 2k, monotonically falling
    static EnergyDensity sqrt_saturating_gauged(double strength = 1.0);
    /// Samples v at phi_min + i * step. Rejects non-concave tables unless
    /// `require_concave` is false (used for negative controls).
    static EnergyDensity tabulated(double phi_min, double step, std::vector<double> samples,
                                   bool require_concave = true);

    double value(double phi) const;
    double first(double phi) const;
    double second(double phi) const;
    double operator()(double phi) const { return value(phi); }

    EnergyKind kind() const { return kind_; }
    double scale() const { return scale_; }
    double shift() const { return shift_; }
    //! b = sup |v'|
    double slope_bound() const;
    double min_slope() const { return base_lo_ - shift_; }
    double max_slope() const { return base_hi_ - shift_; }
    bool monotone_falling() const { return max_slope() <= 0.0; }
    bool concave() const { return concave_; }
    std::string name() const;

    //! v(phi) - b phi
    EnergyDensity shifted(double b) const;
    //! alpha v(phi) - (1 - alpha) b phi
    EnergyDensity interpolated(double alpha, double b) const;
    //! v(phi) + b phi, the alpha-derivative of the interpolated density
    EnergyDensity alpha_derivative(double b) const;

  private:
    struct Table;

    double base(double phi) const;
    double base_first(double phi) const;
    double base_second(double phi) const;

    EnergyKind kind_ = EnergyKind::zero;
    double scale_ = 1.0;
    double shift_ = 0.0;
    double base_lo_ = 0.0;  // range of scale * base'
    double base_hi_ = 0.0;
    bool concave_ = true;
    std::shared_ptr<const Table> table_;
};

//---------------------------------------------------------------------------//
// Cutoff
//---------------------------------------------------------------------------//

/// Piecewise-linear plateau in the sup-norm: height on the plateau, linear
/// ramp to zero, 0 <= g <= beta everywhere.
class CutoffFunction
{
  public:
    CutoffFunction();
    CutoffFunction(int dim, double plateau_radius, double ramp_width, double height, double beta,
                   Point center = {});

    double operator()(const Point& x) const;

    int dim() const { return dim_; }
    double plateau_radius() const { return plateau_; }
    double ramp_width() const { return ramp_; }
    double height() const { return height_; }
    double beta() const { return beta_; }
    const Point& center() const { return center_; }
    double support_radius() const { return plateau_ + ramp_; }
    Box support() const { return Box::cube(dim_, center_, support_radius()); }
    //! integral of g
    double l1_norm() const;

    CutoffFunction with_plateau(double plateau_radius) const;
    CutoffFunction shifted(const Point& t) const;

  private:
    int dim_ = 1;
    double plateau_ = 1.0;
    double ramp_ = 0.5;
    double height_ = 1.0;
    double beta_ = 1.0;
    Point center_{};
};

//---------------------------------------------------------------------------//
// Model
//---------------------------------------------------------------------------//

struct ModelSpec {
    int dim = 1;
    Kernel kernel;
    ChargeLaw charge_law;
    EnergyDensity energy;
    double activity = 1.0;
    CutoffFunction cutoff;

    double beta() const { return cutoff.beta(); }
    double slope_bound() const { return energy.slope_bound(); }
    //! supp g dilated by the kernel range; particles outside never change U_g
    Box window() const { return cutoff.support().dilated(kernel.range()); }

    /// Throws std::invalid_argument on any violated invariant.
    void validate() const;
};

struct GaugedModel {
    EnergyDensity energy;
    ChargeLaw charge_law;
    double activity = 0.0;
};

/// Moves the linear part b*phi of the energy into the charge law and the
/// activity, so that the returned density is monotonically falling.
GaugedModel gauge_transform(const EnergyDensity& energy, const ChargeLaw& law, double activity, double b,
                            double beta, double kernel_l1);

ModelSpec gauge_transform(const ModelSpec& model, double b);

}  // namespace weakgas
