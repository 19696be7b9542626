#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "weakgas/configuration.hpp"
#include "weakgas/observables.hpp"

namespace weakgas {

/// Sites lambda * i, i in a rectangular index block, with half-open cells
/// [lambda (i - 1/2), lambda (i + 1/2)). Sites are ordered by (i_1, i_0)
/// lexicographically, so nested windows list shared sites in the same order.
class LatticeWindow
{
  public:
    using Index = std::array<int, kMaxDim>;

    LatticeWindow() = default;
    LatticeWindow(int dim, double spacing, Index first, Index count);

    //! smallest window whose cells cover `box`
    static LatticeWindow covering(int dim, double spacing, const Box& box);

    int dim() const { return dim_; }
    double spacing() const { return spacing_; }
    std::size_t size() const { return size_; }
    Index first() const { return first_; }
    Index count() const { return count_; }

    Index site(std::size_t j) const;
    Point center(std::size_t j) const;
    Box cell(std::size_t j) const;
    //! union of all cells
    Box box() const;
    double cell_volume() const { return std::pow(spacing_, dim_); }
    //! site whose half-open cell holds x
    std::optional<std::size_t> locate(const Point& x) const;

  private:
    int dim_ = 1;
    double spacing_ = 1.0;
    Index first_{0, 0};
    Index count_{1, 1};
    std::size_t size_ = 1;
};

struct LatticeConfiguration {
    LatticeWindow window;
    std::vector<double> values;  //!< eta_j, total charge in cell j
};

/// Cell charge sums. Particles outside the lattice box are dropped, which
/// makes discretize(cfg, small window) the restriction eta_Lambda.
LatticeConfiguration discretize(const Configuration& cfg, const LatticeWindow& window);

/// lambda^{-d} (G * 1_{cell})(x) by the 4^d-point sub-cell midpoint rule
double smeared_kernel(const Kernel& kernel, const LatticeWindow& window, std::size_t site, const Point& x);

/// phi^lambda(x) = sum_j eta_j lambda^{-d} (G * 1_{cell j})(x)
double lattice_field(const LatticeConfiguration& lat, const Kernel& kernel, const Point& x);

/// lambda^{-d} int_{cell j} h for every site, so <eta^lambda, h> = sum_j c_j eta_j
std::vector<double> lattice_pairing_coefficients(const LatticeWindow& window, const TestFunction& h);
double lattice_pairing(const LatticeConfiguration& lat, const TestFunction& h);

struct MixedPartial {
    double value = 0.0;      //!< quadrature of d^2 U / d eta_j d eta_l
    double fd = 0.0;         //!< centered finite difference of the lattice energy
    double tolerance = 0.0;  //!< max(1e-6, 1e-4 |value|)
    bool consistent() const { return std::abs(value - fd) <= tolerance; }
};

/// Lattice energy U_g^lambda on a fixed window, with the smeared kernel
/// cached per (site, quadrature node).
class LatticeEnergy
{
  public:
    LatticeEnergy(const ModelSpec& model, const LatticeWindow& window, const QuadratureGrid& grid);
    LatticeEnergy(const ModelSpec& model, const EnergyDensity& v, const LatticeWindow& window,
                  const QuadratureGrid& grid);

    const LatticeWindow& window() const { return window_; }
    const QuadratureGrid& grid() const { return grid_; }
    const EnergyDensity& density() const { return v_; }

    std::vector<double> node_field(std::span<const double> eta) const;
    double energy(std::span<const double> eta) const;
    double energy_from_field(std::span<const double> phi) const;
    //! U(eta + dq e_j) - U(eta) given the node field of eta
    double delta(std::span<const double> phi, std::size_t j, double dq) const;
    void apply(std::vector<double>& phi, std::size_t j, double dq) const;

    /// Off-diagonal second derivative; throws for j == l.
    MixedPartial mixed_partial(std::span<const double> eta, std::size_t j, std::size_t l) const;

    struct NodeWeight {
        std::size_t node;
        double k;  //!< lambda^{-d} (G * 1_{cell})(x_node)
    };
    std::span<const NodeWeight> site_nodes(std::size_t j) const { return sites_[j]; }

  private:
    EnergyDensity v_;
    LatticeWindow window_;
    QuadratureGrid grid_;
    std::vector<double> weights_;
    std::vector<std::vector<NodeWeight>> sites_;
};

double lattice_energy(const LatticeConfiguration& lat, const ModelSpec& model, const QuadratureGrid& grid);

/// Single-site law: charge of a Poisson(z lambda^d) number of independent
/// r-distributed charges, truncated at n_max particles.
struct SiteLaw {
    std::vector<double> values;  //!< increasing
    std::vector<double> probs;   //!< sum = 1 - tail
    int n_max = 0;
    double mean_count = 0.0;     //!< z lambda^d
    double tail = 0.0;           //!< P(Poisson(z lambda^d) > n_max)

    double prob_of(double value) const;
};

SiteLaw site_law(double z, double spacing, int dim, const ChargeLaw& law, int n_max);

/// Lattice observable H(sum_j c_1j eta_j, ..., sum_j c_nj eta_j).
class LatticeObservable
{
  public:
    LatticeObservable(std::string name, std::vector<std::vector<double>> coeffs, OuterFunction outer);
    //! signed pairings of `obs` with the cells of `window`
    static LatticeObservable from(const Observable& obs, const LatticeWindow& window);

    const std::string& name() const { return name_; }
    double evaluate(std::span<const double> eta) const;
    bool monotone() const;

  private:
    std::string name_;
    std::vector<std::vector<double>> coeffs_;
    OuterFunction outer_;
};

struct EnumerationOptions {
    int n_max = 5;
    double budget = 1e7;
    int workers = 1;
    //! index pairs whose covariance is reported; empty means all i < k
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

struct PairCovariance {
    std::size_t first = 0;
    std::size_t second = 0;
    double covariance = 0.0;
    double truncation_error = 0.0;  //!< certified slack for the pass check
};

struct EnumerationResult {
    std::vector<double> expectations;
    std::vector<double> sup_abs;  //!< max |F_k| over the truncated state space
    std::vector<PairCovariance> covariances;
    double log_partition = 0.0;   //!< log Xi of the truncated lattice measure
    double omitted_mass = 0.0;    //!< 1 - prod_j (1 - tail_j)
    double states = 0.0;
    SiteLaw site;
};

/// Exact expectations under the truncated lattice measure
/// prod_j rho(d eta_j) e^{-U(eta)} / Xi. Throws std::length_error when the
/// number of states exceeds the budget.
EnumerationResult enumerate_lattice(const ModelSpec& model, const LatticeWindow& window, const QuadratureGrid& grid,
                                    const std::vector<LatticeObservable>& observables, const EnumerationOptions& opt);

}  // namespace weakgas
