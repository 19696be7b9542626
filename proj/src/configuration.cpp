#include "weakgas/configuration.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace weakgas {

//---------------------------------------------------------------------------//
// Configuration
//---------------------------------------------------------------------------//

void Configuration::insert(const Point& position, double charge)
{
    if (charge == 0.0 || !std::isfinite(charge)) throw std::invalid_argument("particle charge must be finite and nonzero");
    if (!window_.contains(position)) throw std::invalid_argument("particle position outside the window");
    particles_.push_back({position, charge});
}

void Configuration::erase(std::size_t index)
{
    if (index >= particles_.size()) throw std::out_of_range("particle index out of range");
    particles_.erase(particles_.begin() + static_cast<std::ptrdiff_t>(index));
}

void Configuration::set_charge(std::size_t index, double charge)
{
    if (index >= particles_.size()) throw std::out_of_range("particle index out of range");
    if (charge == 0.0) throw std::invalid_argument("particle charge must be nonzero");
    particles_[index].charge = charge;
}

void Configuration::set_position(std::size_t index, const Point& position)
{
    if (index >= particles_.size()) throw std::out_of_range("particle index out of range");
    if (!window_.contains(position)) throw std::invalid_argument("particle position outside the window");
    particles_[index].position = position;
}

double Configuration::total_variation() const
{
    double acc = 0.0;
    for (const auto& p : particles_) acc += std::abs(p.charge);
    return acc;
}

Configuration Configuration::translated(const Point& t) const
{
    Configuration out(window_.shifted(t));
    out.particles_.reserve(particles_.size());
    for (const auto& p : particles_) out.particles_.push_back({p.position + t, p.charge});
    return out;
}

Configuration Configuration::restricted(const Box& box) const
{
    Configuration out(box);
    for (const auto& p : particles_)
        if (box.contains(p.position)) out.particles_.push_back(p);
    return out;
}

double field_at(const Configuration& cfg, const Kernel& kernel, const Point& x)
{
    double phi = 0.0;
    for (const auto& p : cfg.particles()) phi += p.charge * kernel(x - p.position);
    return phi;
}

void write_csv(std::ostream& out, const Configuration& cfg)
{
    for (int k = 0; k < cfg.dim(); ++k) out << "x" << k + 1 << ",";
    out << "charge\n";
    out.precision(17);
    for (const auto& p : cfg.particles()) {
        for (int k = 0; k < cfg.dim(); ++k) out << p.position[k] << ",";
        out << p.charge << "\n";
    }
}

Configuration read_csv(std::istream& in, const Box& window)
{
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("empty configuration file");
    std::string expected;
    for (int k = 0; k < window.dim; ++k) expected += "x" + std::to_string(k + 1) + ",";
    expected += "charge";
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != expected) throw std::invalid_argument("configuration header must be '" + expected + "'");
    Configuration cfg(window);
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> values;
        while (std::getline(ss, cell, ',')) values.push_back(std::stod(cell));
        if (static_cast<int>(values.size()) != window.dim + 1)
            throw std::invalid_argument("row " + std::to_string(row) + " has the wrong number of columns");
        Point p{};
        for (int k = 0; k < window.dim; ++k) p[k] = values[k];
        cfg.insert(p, values.back());
    }
    return cfg;
}

//---------------------------------------------------------------------------//
// QuadratureGrid
//---------------------------------------------------------------------------//

QuadratureGrid::QuadratureGrid(const Box& box, double target_spacing) : box_(box)
{
    check_dimension(box.dim);
    if (!(target_spacing > 0.0)) throw std::invalid_argument("quadrature spacing must be positive");
    size_ = 1;
    cell_volume_ = 1.0;
    for (int k = 0; k < box.dim; ++k) {
        double extent = box.extent(k);
        if (!(extent > 0.0)) throw std::invalid_argument("quadrature box must have positive extent");
        counts_[k] = std::max(1, static_cast<int>(std::ceil(extent / target_spacing - 1e-9)));
        spacing_[k] = extent / counts_[k];
        cell_volume_ *= spacing_[k];
        size_ *= static_cast<std::size_t>(counts_[k]);
    }
}

double QuadratureGrid::default_spacing(const ModelSpec& model)
{
    return std::min(model.kernel.width(), model.cutoff.ramp_width()) / 8.0;
}

QuadratureGrid QuadratureGrid::for_model(const ModelSpec& model, double target_spacing)
{
    if (target_spacing <= 0.0) target_spacing = default_spacing(model);
    return QuadratureGrid(model.cutoff.support(), target_spacing);
}

Point QuadratureGrid::node(std::size_t index) const
{
    Point p{};
    std::size_t i = index % static_cast<std::size_t>(counts_[0]);
    p[0] = box_.lo[0] + (static_cast<double>(i) + 0.5) * spacing_[0];
    if (dim() == 2) {
        std::size_t k = index / static_cast<std::size_t>(counts_[0]);
        p[1] = box_.lo[1] + (static_cast<double>(k) + 0.5) * spacing_[1];
    }
    return p;
}

std::pair<int, int> QuadratureGrid::axis_range(int axis, double lo, double hi) const
{
    double h = spacing_[axis];
    double a = std::ceil((lo - box_.lo[axis]) / h - 0.5);
    double b = std::floor((hi - box_.lo[axis]) / h - 0.5);
    a = std::max(a, 0.0);
    b = std::min(b, static_cast<double>(counts_[axis] - 1));
    if (a > b) return {1, 0};
    return {static_cast<int>(a), static_cast<int>(b)};
}

//---------------------------------------------------------------------------//
// Energy
//---------------------------------------------------------------------------//

std::vector<double> cutoff_weights(const CutoffFunction& cutoff, const QuadratureGrid& grid)
{
    std::vector<double> w(grid.size());
    for (std::size_t n = 0; n < w.size(); ++n) w[n] = cutoff(grid.node(n)) * grid.cell_volume();
    return w;
}

CutoffConvolution::CutoffConvolution(const Kernel& kernel, const CutoffFunction& cutoff, const QuadratureGrid& grid)
    : kernel_(kernel), grid_(grid), weights_(cutoff_weights(cutoff, grid))
{
}

double CutoffConvolution::operator()(const Point& y) const
{
    double acc = 0.0;
    grid_.for_nodes_near(y, kernel_.range(), [&](std::size_t n, const Point& x) { acc += weights_[n] * kernel_(x - y); });
    return acc;
}

namespace {

std::vector<double> node_field(const Configuration& cfg, const Kernel& kernel, const QuadratureGrid& grid)
{
    std::vector<double> phi(grid.size(), 0.0);
    for (const auto& p : cfg.particles()) {
        grid.for_nodes_near(p.position, kernel.range(),
                            [&](std::size_t n, const Point& x) { phi[n] += p.charge * kernel(x - p.position); });
    }
    return phi;
}

double weighted_sum(const std::vector<double>& phi, const std::vector<double>& w, const EnergyDensity& v)
{
    double acc = 0.0;
    for (std::size_t n = 0; n < phi.size(); ++n)
        if (w[n] != 0.0) acc += w[n] * v(phi[n]);
    return acc;
}

}  // namespace

double energy(const Configuration& cfg, const ModelSpec& model, const EnergyDensity& v, const QuadratureGrid& grid)
{
    if (v.kind() == EnergyKind::zero && v.shift() == 0.0) return 0.0;
    return weighted_sum(node_field(cfg, model.kernel, grid), cutoff_weights(model.cutoff, grid), v);
}

double energy(const Configuration& cfg, const ModelSpec& model, const QuadratureGrid& grid)
{
    return energy(cfg, model, model.energy, grid);
}

double energy_delta(const Configuration& cfg, const ParticleChange& change, const ModelSpec& model,
                    const QuadratureGrid& grid)
{
    Particle moved;
    double sign = 1.0;
    if (const auto* ins = std::get_if<Insertion>(&change)) {
        moved = ins->particle;
    } else {
        std::size_t i = std::get<Removal>(change).index;
        if (i >= cfg.size()) throw std::out_of_range("removal index " + std::to_string(i) + " out of range");
        moved = cfg[i];
        sign = -1.0;
    }
    const Kernel& G = model.kernel;
    double delta = 0.0;
    grid.for_nodes_near(moved.position, G.range(), [&](std::size_t, const Point& x) {
        double w = model.cutoff(x) * grid.cell_volume();
        if (w == 0.0) return;
        double phi = field_at(cfg, G, x);
        delta += w * (model.energy(phi + sign * moved.charge * G(x - moved.position)) - model.energy(phi));
    });
    return delta;
}

double stability_bound(const Configuration& cfg, const ModelSpec& model, const QuadratureGrid& grid)
{
    if (cfg.empty()) return 0.0;
    CutoffConvolution conv(model.kernel, model.cutoff, grid);
    double acc = 0.0;
    for (const auto& p : cfg.particles()) acc += std::abs(p.charge) * conv(p.position);
    return model.slope_bound() * acc;
}

//---------------------------------------------------------------------------//
// FieldState
//---------------------------------------------------------------------------//

FieldState::FieldState(const Kernel& kernel, const EnergyDensity& v, const CutoffFunction& cutoff,
                       const QuadratureGrid& grid)
    : kernel_(kernel), v_(v), grid_(grid), weights_(cutoff_weights(cutoff, grid)), phi_(grid.size(), 0.0),
      scratch_(grid.size(), 0.0), marked_(grid.size(), 0)
{
}

void FieldState::reset(const Configuration& cfg)
{
    phi_ = node_field(cfg, kernel_, grid_);
    energy_ = weighted_sum(phi_, weights_, v_);
    clear_pending();
}

double FieldState::propose(std::span<const Change> changes)
{
    clear_pending();
    for (const auto& c : changes) {
        grid_.for_nodes_near(c.position, kernel_.range(), [&](std::size_t n, const Point& x) {
            if (weights_[n] == 0.0) return;
            double d = c.dq * kernel_(x - c.position);
            if (d == 0.0) return;
            if (!marked_[n]) {
                marked_[n] = 1;
                touched_.push_back(n);
            }
            scratch_[n] += d;
        });
    }
    std::sort(touched_.begin(), touched_.end());
    double delta = 0.0;
    for (auto n : touched_) delta += weights_[n] * (v_(phi_[n] + scratch_[n]) - v_(phi_[n]));
    pending_ = delta;
    return delta;
}

void FieldState::accept()
{
    for (auto n : touched_) phi_[n] += scratch_[n];
    energy_ += pending_;
    clear_pending();
}

void FieldState::clear_pending()
{
    for (auto n : touched_) {
        scratch_[n] = 0.0;
        marked_[n] = 0;
    }
    touched_.clear();
    pending_ = 0.0;
}

}  // namespace weakgas
