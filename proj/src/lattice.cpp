#include "weakgas/lattice.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <thread>

#include <boost/math/special_functions/gamma.hpp>

#include "weakgas/oracles.hpp"

namespace weakgas {

//---------------------------------------------------------------------------//
// LatticeWindow
//---------------------------------------------------------------------------//

LatticeWindow::LatticeWindow(int dim, double spacing, Index first, Index count)
    : dim_(dim), spacing_(spacing), first_(first), count_(count)
{
    check_dimension(dim);
    if (!(spacing > 0.0)) throw std::invalid_argument("lattice spacing must be positive");
    size_ = 1;
    for (int k = 0; k < kMaxDim; ++k) {
        if (k >= dim) {
            first_[k] = 0;
            count_[k] = 1;
        }
        if (count_[k] < 1) throw std::invalid_argument("lattice window needs at least one site per axis");
        size_ *= static_cast<std::size_t>(count_[k]);
    }
}

LatticeWindow LatticeWindow::covering(int dim, double spacing, const Box& box)
{
    Index first{0, 0}, count{1, 1};
    for (int k = 0; k < dim; ++k) {
        int lo = static_cast<int>(std::floor(box.lo[k] / spacing + 0.5));
        int hi = static_cast<int>(std::floor(box.hi[k] / spacing + 0.5));
        first[k] = lo;
        count[k] = hi - lo + 1;
    }
    return LatticeWindow(dim, spacing, first, count);
}

LatticeWindow::Index LatticeWindow::site(std::size_t j) const
{
    Index i{0, 0};
    i[0] = first_[0] + static_cast<int>(j % static_cast<std::size_t>(count_[0]));
    i[1] = first_[1] + static_cast<int>(j / static_cast<std::size_t>(count_[0]));
    return i;
}

Point LatticeWindow::center(std::size_t j) const
{
    Index i = site(j);
    Point p{};
    for (int k = 0; k < dim_; ++k) p[k] = spacing_ * i[k];
    return p;
}

Box LatticeWindow::cell(std::size_t j) const
{
    return Box::cube(dim_, center(j), 0.5 * spacing_);
}

Box LatticeWindow::box() const
{
    Box b{dim_, {}, {}};
    for (int k = 0; k < dim_; ++k) {
        b.lo[k] = spacing_ * (first_[k] - 0.5);
        b.hi[k] = spacing_ * (first_[k] + count_[k] - 0.5);
    }
    return b;
}

std::optional<std::size_t> LatticeWindow::locate(const Point& x) const
{
    std::size_t j = 0, stride = 1;
    for (int k = 0; k < dim_; ++k) {
        int i = static_cast<int>(std::floor(x[k] / spacing_ + 0.5)) - first_[k];
        if (i < 0 || i >= count_[k]) return std::nullopt;
        j += stride * static_cast<std::size_t>(i);
        stride *= static_cast<std::size_t>(count_[k]);
    }
    return j;
}

//---------------------------------------------------------------------------//
// Discretization and lattice field
//---------------------------------------------------------------------------//

LatticeConfiguration discretize(const Configuration& cfg, const LatticeWindow& window)
{
    LatticeConfiguration lat{window, std::vector<double>(window.size(), 0.0)};
    for (const auto& p : cfg.particles())
        if (auto j = window.locate(p.position)) lat.values[*j] += p.charge;
    return lat;
}

double smeared_kernel(const Kernel& kernel, const LatticeWindow& window, std::size_t site, const Point& x)
{
    constexpr int sub = 4;
    Box c = window.cell(site);
    double step = window.spacing() / sub;
    double acc = 0.0;
    if (window.dim() == 1) {
        for (int a = 0; a < sub; ++a) acc += kernel(x - Point{c.lo[0] + (a + 0.5) * step, 0.0});
        return acc / sub;
    }
    for (int b = 0; b < sub; ++b)
        for (int a = 0; a < sub; ++a)
            acc += kernel(x - Point{c.lo[0] + (a + 0.5) * step, c.lo[1] + (b + 0.5) * step});
    return acc / (sub * sub);
}

double lattice_field(const LatticeConfiguration& lat, const Kernel& kernel, const Point& x)
{
    double phi = 0.0;
    for (std::size_t j = 0; j < lat.values.size(); ++j)
        if (lat.values[j] != 0.0) phi += lat.values[j] * smeared_kernel(kernel, lat.window, j, x);
    return phi;
}

std::vector<double> lattice_pairing_coefficients(const LatticeWindow& window, const TestFunction& h)
{
    std::vector<double> c(window.size(), 0.0);
    if (h.is_zero()) return c;
    Box support = h.support();
    auto b0 = h.breakpoints(0);
    auto b1 = window.dim() == 2 ? h.breakpoints(1) : std::vector<double>{};
    for (std::size_t j = 0; j < c.size(); ++j) {
        Box cell = window.cell(j);
        bool overlap = true;
        for (int k = 0; k < window.dim(); ++k)
            overlap = overlap && cell.hi[k] > support.lo[k] && cell.lo[k] < support.hi[k];
        if (!overlap) continue;
        c[j] = integrate_box(cell, [&](const Point& y) { return h(y); }, b0, b1) / window.cell_volume();
    }
    return c;
}

double lattice_pairing(const LatticeConfiguration& lat, const TestFunction& h)
{
    auto c = lattice_pairing_coefficients(lat.window, h);
    double acc = 0.0;
    for (std::size_t j = 0; j < c.size(); ++j) acc += c[j] * lat.values[j];
    return acc;
}

//---------------------------------------------------------------------------//
// LatticeEnergy
//---------------------------------------------------------------------------//

LatticeEnergy::LatticeEnergy(const ModelSpec& model, const LatticeWindow& window, const QuadratureGrid& grid)
    : LatticeEnergy(model, model.energy, window, grid)
{
}

LatticeEnergy::LatticeEnergy(const ModelSpec& model, const EnergyDensity& v, const LatticeWindow& window,
                             const QuadratureGrid& grid)
    : v_(v), window_(window), grid_(grid), weights_(cutoff_weights(model.cutoff, grid)), sites_(window.size())
{
    double reach = model.kernel.range() + 0.5 * window.spacing() * std::sqrt(static_cast<double>(window.dim()));
    for (std::size_t j = 0; j < window.size(); ++j) {
        grid.for_nodes_near(window.center(j), reach, [&](std::size_t n, const Point& x) {
            if (weights_[n] == 0.0) return;
            double k = smeared_kernel(model.kernel, window, j, x);
            if (k != 0.0) sites_[j].push_back({n, k});
        });
    }
}

std::vector<double> LatticeEnergy::node_field(std::span<const double> eta) const
{
    if (eta.size() != sites_.size()) throw std::invalid_argument("lattice state has the wrong number of sites");
    std::vector<double> phi(grid_.size(), 0.0);
    for (std::size_t j = 0; j < sites_.size(); ++j) {
        if (eta[j] == 0.0) continue;
        for (const auto& nw : sites_[j]) phi[nw.node] += eta[j] * nw.k;
    }
    return phi;
}

double LatticeEnergy::energy_from_field(std::span<const double> phi) const
{
    double acc = 0.0;
    for (std::size_t n = 0; n < phi.size(); ++n)
        if (weights_[n] != 0.0) acc += weights_[n] * v_(phi[n]);
    return acc;
}

double LatticeEnergy::energy(std::span<const double> eta) const
{
    return energy_from_field(node_field(eta));
}

double LatticeEnergy::delta(std::span<const double> phi, std::size_t j, double dq) const
{
    double acc = 0.0;
    for (const auto& nw : sites_[j]) {
        double p = phi[nw.node];
        acc += weights_[nw.node] * (v_(p + dq * nw.k) - v_(p));
    }
    return acc;
}

void LatticeEnergy::apply(std::vector<double>& phi, std::size_t j, double dq) const
{
    for (const auto& nw : sites_[j]) phi[nw.node] += dq * nw.k;
}

MixedPartial LatticeEnergy::mixed_partial(std::span<const double> eta, std::size_t j, std::size_t l) const
{
    if (j == l) throw std::invalid_argument("mixed partial needs two distinct sites");
    if (j >= sites_.size() || l >= sites_.size()) throw std::out_of_range("site index out of range");
    auto phi = node_field(eta);
    double hj = 1e-4 * std::max(1.0, std::abs(eta[j]));
    double hl = 1e-4 * std::max(1.0, std::abs(eta[l]));

    MixedPartial out;
    const auto& a = sites_[j];
    const auto& b = sites_[l];
    std::size_t ia = 0, ib = 0;
    double fd = 0.0;
    // merge of the two node lists; nodes touched by one site only give zero
    while (ia < a.size() && ib < b.size()) {
        if (a[ia].node < b[ib].node) {
            ++ia;
        } else if (b[ib].node < a[ia].node) {
            ++ib;
        } else {
            std::size_t n = a[ia].node;
            double w = weights_[n], p = phi[n], kj = a[ia].k, kl = b[ib].k;
            out.value += w * v_.second(p) * kj * kl;
            double dj = hj * kj, dl = hl * kl;
            fd += w * (v_(p + dj + dl) - v_(p + dj - dl) - v_(p - dj + dl) + v_(p - dj - dl));
            ++ia;
            ++ib;
        }
    }
    out.fd = fd / (4.0 * hj * hl);
    out.tolerance = std::max(1e-6, 1e-4 * std::abs(out.value));
    return out;
}

double lattice_energy(const LatticeConfiguration& lat, const ModelSpec& model, const QuadratureGrid& grid)
{
    return LatticeEnergy(model, lat.window, grid).energy(lat.values);
}

//---------------------------------------------------------------------------//
// Site law
//---------------------------------------------------------------------------//

double SiteLaw::prob_of(double value) const
{
    auto it = std::lower_bound(values.begin(), values.end(), value - 1e-9);
    if (it == values.end() || std::abs(*it - value) > 1e-9) return 0.0;
    return probs[static_cast<std::size_t>(it - values.begin())];
}

SiteLaw site_law(double z, double spacing, int dim, const ChargeLaw& law, int n_max)
{
    if (n_max < 0) throw std::invalid_argument("n_max must be nonnegative");
    if (z < 0.0) throw std::invalid_argument("activity must be nonnegative");
    SiteLaw out;
    out.n_max = n_max;
    out.mean_count = z * std::pow(spacing, dim);
    double mu = out.mean_count;
    out.tail = mu == 0.0 ? 0.0 : boost::math::gamma_p(n_max + 1.0, mu);

    // r^{*n} keyed by the rounded charge so equal sums from different orders merge
    using Dist = std::map<long long, std::pair<double, double>>;
    Dist conv{{0, {0.0, 1.0}}};
    Dist total;
    double pois = std::exp(-mu);
    for (int n = 0; n <= n_max; ++n) {
        if (n > 0) {
            pois *= mu / n;
            Dist next;
            for (const auto& [key, vp] : conv) {
                for (const auto& a : law.atoms()) {
                    double v = vp.first + a.charge;
                    auto& slot = next[std::llround(v * 1e9)];
                    slot.first = v;
                    slot.second += vp.second * a.weight;
                }
            }
            conv = std::move(next);
        }
        if (pois == 0.0) break;
        for (const auto& [key, vp] : conv) {
            auto& slot = total[key];
            slot.first = vp.first;
            slot.second += pois * vp.second;
        }
    }
    for (const auto& [key, vp] : total) {
        out.values.push_back(vp.first);
        out.probs.push_back(vp.second);
    }
    return out;
}

//---------------------------------------------------------------------------//
// Lattice observables and enumeration
//---------------------------------------------------------------------------//

LatticeObservable::LatticeObservable(std::string name, std::vector<std::vector<double>> coeffs, OuterFunction outer)
    : name_(std::move(name)), coeffs_(std::move(coeffs)), outer_(std::move(outer))
{
    if (static_cast<int>(coeffs_.size()) != outer_.arity())
        throw std::invalid_argument("lattice observable '" + name_ + "' has the wrong number of coefficient rows");
}

LatticeObservable LatticeObservable::from(const Observable& obs, const LatticeWindow& window)
{
    std::vector<std::vector<double>> coeffs;
    for (const auto& a : obs.arguments()) {
        if (a.mode != PairingMode::signed_charge)
            throw std::invalid_argument("lattice observables support signed pairings only");
        coeffs.push_back(lattice_pairing_coefficients(window, a.h));
    }
    return LatticeObservable(obs.name(), std::move(coeffs), obs.outer());
}

double LatticeObservable::evaluate(std::span<const double> eta) const
{
    std::vector<double> x(coeffs_.size(), 0.0);
    for (std::size_t i = 0; i < coeffs_.size(); ++i) {
        if (coeffs_[i].size() != eta.size()) throw std::invalid_argument("lattice observable window mismatch");
        for (std::size_t j = 0; j < eta.size(); ++j) x[i] += coeffs_[i][j] * eta[j];
    }
    return outer_.value(x);
}

bool LatticeObservable::monotone() const
{
    if (!outer_.monotone()) return false;
    for (const auto& row : coeffs_)
        for (double c : row)
            if (c < 0.0) return false;
    return true;
}

namespace {

// weighted sums kept relative to exp(shift) so large weights cannot overflow
struct Accumulator {
    double shift = -std::numeric_limits<double>::infinity();
    double Z = 0.0;
    std::vector<double> first;
    std::vector<double> second;
    std::vector<double> sup;

    Accumulator(std::size_t k, std::size_t pairs) : first(k, 0.0), second(pairs, 0.0), sup(k, 0.0) {}

    void rescale(double to)
    {
        if (to <= shift) return;
        double f = std::isinf(shift) ? 0.0 : std::exp(shift - to);
        Z *= f;
        for (auto& v : first) v *= f;
        for (auto& v : second) v *= f;
        shift = to;
    }

    void merge(const Accumulator& o)
    {
        if (o.Z == 0.0) return;
        rescale(o.shift);
        double f = std::exp(o.shift - shift);
        Z += f * o.Z;
        for (std::size_t i = 0; i < first.size(); ++i) first[i] += f * o.first[i];
        for (std::size_t i = 0; i < second.size(); ++i) second[i] += f * o.second[i];
        for (std::size_t i = 0; i < sup.size(); ++i) sup[i] = std::max(sup[i], o.sup[i]);
    }
};

}  // namespace

EnumerationResult enumerate_lattice(const ModelSpec& model, const LatticeWindow& window, const QuadratureGrid& grid,
                                    const std::vector<LatticeObservable>& observables, const EnumerationOptions& opt)
{
    EnumerationResult out;
    out.site = site_law(model.activity, window.spacing(), window.dim(), model.charge_law, opt.n_max);
    const SiteLaw& site = out.site;
    const std::size_t m = window.size();
    const std::size_t K = site.values.size();
    out.states = std::pow(static_cast<double>(K), static_cast<double>(m));
    if (out.states > opt.budget)
        throw std::length_error("lattice enumeration needs " + std::to_string(out.states) +
                                " states, budget is " + std::to_string(opt.budget));

    auto pairs = opt.pairs;
    if (pairs.empty())
        for (std::size_t i = 0; i < observables.size(); ++i)
            for (std::size_t k = i + 1; k < observables.size(); ++k) pairs.emplace_back(i, k);
    for (const auto& [a, b] : pairs)
        if (a >= observables.size() || b >= observables.size()) throw std::out_of_range("observable pair index");

    LatticeEnergy U(model, window, grid);
    std::vector<double> log_prob(K);
    for (std::size_t k = 0; k < K; ++k) log_prob[k] = std::log(site.probs[k]);

    // one task per value of the leading site; partial sums merged in task order
    std::vector<Accumulator> parts(K, Accumulator(observables.size(), pairs.size()));
    std::size_t inner = 1;
    for (std::size_t j = 1; j < m; ++j) inner *= K;

    auto run_task = [&](std::size_t lead) {
        Accumulator& acc = parts[lead];
        std::vector<std::size_t> digit(m, 0);
        digit[0] = lead;
        std::vector<double> eta(m), F(observables.size());
        for (std::size_t s = 0; s < inner; ++s) {
            std::size_t rest = s;
            for (std::size_t j = m; j-- > 1;) {
                digit[j] = rest % K;
                rest /= K;
            }
            double logw = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                eta[j] = site.values[digit[j]];
                logw += log_prob[digit[j]];
            }
            logw -= U.energy(eta);
            acc.rescale(logw);
            double w = std::exp(logw - acc.shift);
            acc.Z += w;
            for (std::size_t i = 0; i < F.size(); ++i) {
                F[i] = observables[i].evaluate(eta);
                acc.first[i] += w * F[i];
                acc.sup[i] = std::max(acc.sup[i], std::abs(F[i]));
            }
            for (std::size_t p = 0; p < pairs.size(); ++p) acc.second[p] += w * F[pairs[p].first] * F[pairs[p].second];
        }
    };

    int workers = std::max(1, std::min<int>(opt.workers, static_cast<int>(K)));
    if (workers == 1) {
        for (std::size_t lead = 0; lead < K; ++lead) run_task(lead);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t lead; (lead = next++) < K;) run_task(lead);
            });
        for (auto& t : pool) t.join();
    }

    Accumulator total(observables.size(), pairs.size());
    for (const auto& p : parts) total.merge(p);

    out.log_partition = total.shift + std::log(total.Z);
    out.omitted_mass = 1.0 - std::pow(1.0 - site.tail, static_cast<double>(m));
    out.sup_abs = total.sup;
    for (std::size_t i = 0; i < observables.size(); ++i) out.expectations.push_back(total.first[i] / total.Z);
    const double eps = std::numeric_limits<double>::epsilon();
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        auto [a, b] = pairs[p];
        PairCovariance c;
        c.first = a;
        c.second = b;
        c.covariance = total.second[p] / total.Z - out.expectations[a] * out.expectations[b];
        double scale = total.sup[a] * total.sup[b];
        c.truncation_error = 2.0 * out.omitted_mass * scale + 4.0 * eps * out.states * scale;
        out.covariances.push_back(c);
    }
    return out;
}

}  // namespace weakgas
