#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "weakgas/model.hpp"

namespace weakgas {

struct Particle {
    Point position{};
    double charge = 1.0;
};

/// Finite charged point configuration inside a window. Particle order is
/// insertion order; erase keeps the relative order of the rest.
class Configuration
{
  public:
    Configuration() = default;
    explicit Configuration(Box window) : window_(window) {}

    const Box& window() const { return window_; }
    int dim() const { return window_.dim; }
    std::span<const Particle> particles() const { return particles_; }
    const Particle& operator[](std::size_t i) const { return particles_[i]; }
    std::size_t size() const { return particles_.size(); }
    bool empty() const { return particles_.empty(); }

    void insert(const Point& position, double charge);
    void insert(const Particle& p) { insert(p.position, p.charge); }
    void erase(std::size_t index);
    void set_charge(std::size_t index, double charge);
    void set_position(std::size_t index, const Point& position);
    void clear() { particles_.clear(); }

    //! sum of |s_j|
    double total_variation() const;
    //! particles and window moved by t
    Configuration translated(const Point& t) const;
    //! particles inside `box`, with `box` as the new window
    Configuration restricted(const Box& box) const;

  private:
    Box window_;
    std::vector<Particle> particles_;
};

/// phi(x) = sum_j s_j G(x - y_j)
double field_at(const Configuration& cfg, const Kernel& kernel, const Point& x);

template <class H>
double pairing(const Configuration& cfg, const H& h)
{
    double acc = 0.0;
    for (const auto& p : cfg.particles()) acc += p.charge * h(p.position);
    return acc;
}

template <class H>
double abs_pairing(const Configuration& cfg, const H& h)
{
    double acc = 0.0;
    for (const auto& p : cfg.particles()) acc += std::abs(p.charge) * h(p.position);
    return acc;
}

void write_csv(std::ostream& out, const Configuration& cfg);
Configuration read_csv(std::istream& in, const Box& window);

//---------------------------------------------------------------------------//
// Quadrature grid
//---------------------------------------------------------------------------//

/// Midpoint-rule grid: the box is split into n_k = ceil(extent_k / h) equal
/// cells per axis, one node at the center of each cell.
class QuadratureGrid
{
  public:
    QuadratureGrid() = default;
    QuadratureGrid(const Box& box, double target_spacing);

    //! grid covering supp g, spacing defaults to min(kernel width, ramp width) / 8
    static QuadratureGrid for_model(const ModelSpec& model, double target_spacing = 0.0);
    static double default_spacing(const ModelSpec& model);

    int dim() const { return box_.dim; }
    const Box& box() const { return box_; }
    std::size_t size() const { return size_; }
    int count(int axis) const { return counts_[axis]; }
    double spacing(int axis) const { return spacing_[axis]; }
    double cell_volume() const { return cell_volume_; }
    Point node(std::size_t index) const;

    /// Calls f(index, node) for every node within Euclidean distance r of x,
    /// in increasing index order.
    template <class F>
    void for_nodes_near(const Point& x, double r, F&& f) const;

  private:
    std::pair<int, int> axis_range(int axis, double lo, double hi) const;

    Box box_;
    std::array<int, kMaxDim> counts_{1, 1};
    Point spacing_{1.0, 1.0};
    double cell_volume_ = 1.0;
    std::size_t size_ = 0;
};

template <class F>
void QuadratureGrid::for_nodes_near(const Point& x, double r, F&& f) const
{
    auto [i0, i1] = axis_range(0, x[0] - r, x[0] + r);
    if (i0 > i1) return;
    if (dim() == 1) {
        for (int i = i0; i <= i1; ++i) {
            Point p{box_.lo[0] + (i + 0.5) * spacing_[0], 0.0};
            if (std::abs(p[0] - x[0]) <= r) f(static_cast<std::size_t>(i), p);
        }
        return;
    }
    auto [k0, k1] = axis_range(1, x[1] - r, x[1] + r);
    for (int k = k0; k <= k1; ++k) {
        double yk = box_.lo[1] + (k + 0.5) * spacing_[1];
        for (int i = i0; i <= i1; ++i) {
            Point p{box_.lo[0] + (i + 0.5) * spacing_[0], yk};
            if (norm(p - x) <= r) f(static_cast<std::size_t>(k) * counts_[0] + i, p);
        }
    }
}

//---------------------------------------------------------------------------//
// Energy
//---------------------------------------------------------------------------//

/// Node weights g(x_n) h^d of the midpoint rule for the cutoff of a model.
std::vector<double> cutoff_weights(const CutoffFunction& cutoff, const QuadratureGrid& grid);

/// (G * g)(y) evaluated with the same midpoint rule as the energy, so that
/// the linear-density identity U = -b sum_j s_j (G*g)(y_j) holds exactly.
class CutoffConvolution
{
  public:
    CutoffConvolution(const Kernel& kernel, const CutoffFunction& cutoff, const QuadratureGrid& grid);

    double operator()(const Point& y) const;

  private:
    Kernel kernel_;
    QuadratureGrid grid_;
    std::vector<double> weights_;
};

/// U_g(eta) = h^d sum_n v(phi(x_n)) g(x_n)
double energy(const Configuration& cfg, const ModelSpec& model, const QuadratureGrid& grid);
double energy(const Configuration& cfg, const ModelSpec& model, const EnergyDensity& v, const QuadratureGrid& grid);

struct Insertion {
    Particle particle;
};
struct Removal {
    std::size_t index = 0;
};
using ParticleChange = std::variant<Insertion, Removal>;

/// U_g(cfg') - U_g(cfg) evaluated only at nodes within kernel range of the
/// changed particle. Throws std::out_of_range for a bad removal index.
double energy_delta(const Configuration& cfg, const ParticleChange& change, const ModelSpec& model,
                    const QuadratureGrid& grid);

/// b * sum_j |s_j| (G*g)(y_j)
double stability_bound(const Configuration& cfg, const ModelSpec& model, const QuadratureGrid& grid);

/// Node field phi and energy kept in sync with a configuration under local
/// charge changes. A change list describes adding charge dq at position y;
/// a move is two entries, a recharge one.
class FieldState
{
  public:
    struct Change {
        Point position{};
        double dq = 0.0;
    };

    FieldState(const Kernel& kernel, const EnergyDensity& v, const CutoffFunction& cutoff, const QuadratureGrid& grid);

    void reset(const Configuration& cfg);
    double energy() const { return energy_; }
    const EnergyDensity& density() const { return v_; }

    //! energy difference of the pending change; leaves the state untouched
    double propose(std::span<const Change> changes);
    //! applies the last proposed change
    void accept();

  private:
    void clear_pending();

    Kernel kernel_;
    EnergyDensity v_;
    QuadratureGrid grid_;
    std::vector<double> weights_;
    std::vector<double> phi_;
    std::vector<double> scratch_;
    std::vector<unsigned char> marked_;
    std::vector<std::size_t> touched_;
    double energy_ = 0.0;
    double pending_ = 0.0;
};

}  // namespace weakgas
