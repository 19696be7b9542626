#include "weakgas/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <mutex>
#include <thread>

namespace weakgas {

void ProposalMix::validate() const
{
    for (double p : {birth, death, move, recharge})
        if (p < 0.0) throw std::invalid_argument("proposal probabilities must be nonnegative");
    if (std::abs(birth + death + move + recharge - 1.0) > 1e-12)
        throw std::invalid_argument("proposal probabilities must sum to 1");
    if (birth != death) throw std::invalid_argument("birth and death probabilities must be equal");
}

std::uint64_t SamplerParams::burn() const
{
    return burn_in < 0 ? sweeps / 5 : static_cast<std::uint64_t>(burn_in);
}

std::uint64_t SamplerParams::thin() const
{
    if (thinning > 0) return thinning;
    std::uint64_t kept = sweeps > burn() ? sweeps - burn() : 0;
    return std::max<std::uint64_t>(1, (kept + 99999) / 100000);
}

void SamplerParams::validate() const
{
    mix.validate();
    if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("alpha must lie in [0, 1]");
    if (burn() >= sweeps) throw std::invalid_argument("burn-in must be shorter than the run");
    if (move_scale < 0.0) throw std::invalid_argument("move scale must be nonnegative");
}

Configuration sample_free(const ModelSpec& model, const Box& window, Rng& rng)
{
    Configuration cfg(window);
    double mean = model.activity * window.volume();
    if (mean <= 0.0) return cfg;
    std::poisson_distribution<long> count(mean);
    long n = count(rng);
    for (long i = 0; i < n; ++i) {
        Point y = window.sample(rng);
        cfg.insert(y, model.charge_law.sample(rng));
    }
    return cfg;
}

//---------------------------------------------------------------------------//
// GibbsChain
//---------------------------------------------------------------------------//

GibbsChain::GibbsChain(const ModelSpec& model, const QuadratureGrid& grid, const SamplerParams& params,
                       std::uint64_t stream)
    : GibbsChain(model, grid, params, stream, Configuration(model.window()))
{
}

GibbsChain::GibbsChain(const ModelSpec& model, const QuadratureGrid& grid, const SamplerParams& params,
                       std::uint64_t stream, Configuration initial)
    : model_(model), grid_(grid), params_(params), window_(model.window()), rng_(make_rng(params.seed, stream)),
      cfg_(std::move(initial)),
      field_(model.kernel, model.energy.interpolated(params.alpha, model.slope_bound()), model.cutoff, grid),
      conv_(model.kernel, model.cutoff, grid)
{
    params_.validate();
    if (!window_.contains(cfg_.window())) throw std::invalid_argument("initial configuration lies outside the window");
    cfg_ = cfg_.restricted(window_);
    window_volume_ = window_.volume();
    move_scale_ = params.move_scale > 0.0 ? params.move_scale : 0.5 * model.kernel.width();
    field_.reset(cfg_);
    if (params_.track_stability) {
        for (const auto& p : cfg_.particles()) {
            particle_conv_.push_back(conv_(p.position));
            weighted_conv_ += std::abs(p.charge) * particle_conv_.back();
        }
        check_stability();
    }
}

Proposal GibbsChain::draw_proposal()
{
    const auto& mix = params_.mix;
    double u = uniform01(rng_);
    Proposal p;
    if (u < mix.birth) {
        p.kind = MoveKind::birth;
    } else if (u < mix.birth + mix.death) {
        p.kind = MoveKind::death;
    } else if (u < mix.birth + mix.death + mix.move) {
        p.kind = MoveKind::move;
    } else {
        p.kind = MoveKind::recharge;
    }
    std::size_t n = cfg_.size();
    switch (p.kind) {
        case MoveKind::birth:
            p.position = window_.sample(rng_);
            p.charge = model_.charge_law.sample(rng_);
            break;
        case MoveKind::death:
            if (n > 0) p.index = std::min(n - 1, static_cast<std::size_t>(uniform01(rng_) * n));
            break;
        case MoveKind::move:
            if (n > 0) {
                p.index = std::min(n - 1, static_cast<std::size_t>(uniform01(rng_) * n));
                Point y = cfg_[p.index].position;
                for (int k = 0; k < window_.dim; ++k) {
                    double x = y[k] + move_scale_ * normal_(rng_);
                    double lo = window_.lo[k], hi = window_.hi[k], L = hi - lo;
                    // reflect into [lo, hi]
                    double t = std::fmod(x - lo, 2.0 * L);
                    if (t < 0.0) t += 2.0 * L;
                    y[k] = t <= L ? lo + t : hi - (t - L);
                }
                p.position = y;
            }
            break;
        case MoveKind::recharge:
            if (n > 0) {
                p.index = std::min(n - 1, static_cast<std::size_t>(uniform01(rng_) * n));
                p.charge = model_.charge_law.sample(rng_);
            }
            break;
    }
    return p;
}

void GibbsChain::build_changes(const Proposal& p)
{
    changes_.clear();
    switch (p.kind) {
        case MoveKind::birth: changes_.push_back({p.position, p.charge}); break;
        case MoveKind::death: changes_.push_back({cfg_[p.index].position, -cfg_[p.index].charge}); break;
        case MoveKind::move:
            changes_.push_back({cfg_[p.index].position, -cfg_[p.index].charge});
            changes_.push_back({p.position, cfg_[p.index].charge});
            break;
        case MoveKind::recharge:
            changes_.push_back({cfg_[p.index].position, p.charge - cfg_[p.index].charge});
            break;
    }
}

double GibbsChain::log_acceptance_ratio(const Proposal& p)
{
    const double n = static_cast<double>(cfg_.size());
    const double ninf = -std::numeric_limits<double>::infinity();
    if (p.kind != MoveKind::birth && cfg_.empty()) return ninf;
    if (p.kind != MoveKind::birth && p.index >= cfg_.size()) throw std::out_of_range("proposal index out of range");
    if (p.kind == MoveKind::birth && model_.activity == 0.0) return ninf;
    if (p.kind == MoveKind::recharge && p.charge == cfg_[p.index].charge) {
        pending_delta_ = 0.0;
        return 0.0;
    }
    build_changes(p);
    pending_delta_ = field_.propose(changes_);
    double zW = model_.activity * window_volume_;
    switch (p.kind) {
        case MoveKind::birth: return std::log(zW / (n + 1.0)) - pending_delta_;
        case MoveKind::death: return std::log(n / zW) - pending_delta_;
        case MoveKind::move:
        case MoveKind::recharge: return -pending_delta_;
    }
    return ninf;
}

void GibbsChain::commit(const Proposal& p)
{
    if (p.kind == MoveKind::recharge && p.charge == cfg_[p.index].charge) return;
    field_.accept();
    double old_conv = 0.0;
    if (params_.track_stability && p.kind != MoveKind::birth) old_conv = particle_conv_[p.index];
    switch (p.kind) {
        case MoveKind::birth:
            cfg_.insert(p.position, p.charge);
            if (params_.track_stability) {
                particle_conv_.push_back(conv_(p.position));
                weighted_conv_ += std::abs(p.charge) * particle_conv_.back();
            }
            break;
        case MoveKind::death:
            if (params_.track_stability) {
                weighted_conv_ -= std::abs(cfg_[p.index].charge) * old_conv;
                particle_conv_.erase(particle_conv_.begin() + static_cast<std::ptrdiff_t>(p.index));
            }
            cfg_.erase(p.index);
            break;
        case MoveKind::move:
            if (params_.track_stability) {
                double c = conv_(p.position);
                weighted_conv_ += std::abs(cfg_[p.index].charge) * (c - old_conv);
                particle_conv_[p.index] = c;
            }
            cfg_.set_position(p.index, p.position);
            break;
        case MoveKind::recharge:
            if (params_.track_stability)
                weighted_conv_ += (std::abs(p.charge) - std::abs(cfg_[p.index].charge)) * old_conv;
            cfg_.set_charge(p.index, p.charge);
            break;
    }
}

bool GibbsChain::apply(const Proposal& p, double u)
{
    auto k = static_cast<std::size_t>(p.kind);
    ++counts_.proposed[k];
    double lr = log_acceptance_ratio(p);
    bool accept = std::log(u) < lr;
    if (accept) {
        commit(p);
        ++counts_.accepted[k];
        if (params_.track_stability) check_stability();
    }
    ++steps_;
    if (params_.verify_every > 0 && steps_ % params_.verify_every == 0) verify();
    return accept;
}

bool GibbsChain::step()
{
    Proposal p = draw_proposal();
    return apply(p, uniform01(rng_));
}

void GibbsChain::verify()
{
    double cached = field_.energy();
    field_.reset(cfg_);
    double drift = std::abs(cached - field_.energy());
    max_drift_ = std::max(max_drift_, drift);
    if (drift > 1e-8)
        throw std::runtime_error("cached energy drifted by " + std::to_string(drift) + " after " +
                                 std::to_string(steps_) + " steps");
    if (params_.track_stability) {
        weighted_conv_ = 0.0;
        for (std::size_t i = 0; i < cfg_.size(); ++i) weighted_conv_ += std::abs(cfg_[i].charge) * particle_conv_[i];
    }
}

void GibbsChain::check_stability()
{
    double bound = field_.density().slope_bound() * weighted_conv_;
    max_excess_ = std::max(max_excess_, std::abs(field_.energy()) - bound);
    ++stability_checks_;
}

//---------------------------------------------------------------------------//
// Runs
//---------------------------------------------------------------------------//

ChainOutput run_chain(const ModelSpec& model, const QuadratureGrid& grid, const SamplerParams& params,
                      const std::vector<Quantity>& quantities, std::uint64_t replica, const SampleSink& sink)
{
    GibbsChain chain(model, grid, params, replica);
    ChainOutput out;
    out.series.resize(quantities.size());
    const std::uint64_t burn = params.burn(), thin = params.thin();
    std::vector<double> values(quantities.size());
    for (std::uint64_t s = 1; s <= params.sweeps; ++s) {
        chain.step();
        if (s <= burn || (s - burn) % thin != 0) continue;
        const auto& cfg = chain.configuration();
        for (std::size_t q = 0; q < quantities.size(); ++q) out.series[q].push_back(values[q] = quantities[q](cfg));
        out.n_particles.push_back(static_cast<double>(cfg.size()));
        out.energy.push_back(chain.energy());
        if (sink) sink(s, cfg, chain.energy(), values);
    }
    chain.verify();
    out.counts = chain.counts();
    out.max_energy_drift = chain.max_energy_drift();
    out.max_stability_excess = chain.max_stability_excess();
    out.stability_checks = chain.stability_checks();
    return out;
}

std::vector<ChainOutput> run_replicas(const ModelSpec& model, const QuadratureGrid& grid, const SamplerParams& params,
                                      const std::vector<Quantity>& quantities, int replicas, int workers)
{
    if (replicas < 1) throw std::invalid_argument("need at least one replica");
    std::vector<ChainOutput> out(static_cast<std::size_t>(replicas));
    workers = std::max(1, std::min(workers, replicas));
    if (workers == 1) {
        for (int r = 0; r < replicas; ++r) out[r] = run_chain(model, grid, params, quantities, r);
        return out;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (int r; (r = next++) < replicas;) {
                try {
                    out[r] = run_chain(model, grid, params, quantities, r);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
    return out;
}

InterpolatedEnergy interpolated_energy(const Configuration& cfg, const ModelSpec& model, const QuadratureGrid& grid,
                                       double alpha, double b)
{
    return {energy(cfg, model, model.energy.interpolated(alpha, b), grid),
            energy(cfg, model, model.energy.alpha_derivative(b), grid)};
}

//---------------------------------------------------------------------------//
// Tilted free gas
//---------------------------------------------------------------------------//

TiltedFreeSampler::TiltedFreeSampler(const ModelSpec& model, const QuadratureGrid& grid, const Box& window, double b)
    : model_(model), window_(window), b_(b), conv_(model.kernel, model.cutoff, grid)
{
    if (b < 0.0) throw std::invalid_argument("tilt must be nonnegative");
    // the quadrature convolution can exceed beta ||G||_1 by its discretization error
    exponent_bound_ = model.charge_law.bound() * b * model.beta() * model.kernel.l1_norm() * 1.05;
    dominating_ = model.activity * std::exp(exponent_bound_);
}

Configuration TiltedFreeSampler::sample(Rng& rng) const
{
    Configuration cfg(window_);
    double mean = dominating_ * window_.volume();
    if (mean <= 0.0) return cfg;
    std::poisson_distribution<long> count(mean);
    long n = count(rng);
    for (long i = 0; i < n; ++i) {
        Point y = window_.sample(rng);
        double s = model_.charge_law.sample(rng);
        double u = uniform01(rng);
        if (b_ == 0.0) {
            cfg.insert(y, s);
            continue;
        }
        double log_keep = s * b_ * conv_(y) - exponent_bound_;
        if (log_keep > 0.0) throw std::runtime_error("tilted sampler: dominating rate is too small");
        if (u < std::exp(log_keep)) cfg.insert(y, s);
    }
    return cfg;
}

//---------------------------------------------------------------------------//
// LatticeChain
//---------------------------------------------------------------------------//

LatticeChain::LatticeChain(const ModelSpec& model, const LatticeWindow& window, const QuadratureGrid& grid, int n_max,
                           std::uint64_t seed, std::uint64_t stream)
    : U_(model, window, grid), law_(model.charge_law), n_max_(n_max),
      mu_(model.activity * window.cell_volume()), rng_(make_rng(seed, stream)),
      counts_(window.size(), std::vector<int>(model.charge_law.size(), 0)), totals_(window.size(), 0),
      eta_(window.size(), 0.0)
{
    if (n_max < 0) throw std::invalid_argument("n_max must be nonnegative");
    phi_ = U_.node_field(eta_);
    energy_ = U_.energy_from_field(phi_);
}

bool LatticeChain::step()
{
    ++steps_;
    std::size_t j = std::min(eta_.size() - 1, static_cast<std::size_t>(uniform01(rng_) * eta_.size()));
    bool add = uniform01(rng_) < 0.5;
    bool accepted = false;
    if (add) {
        std::size_t i = law_.sample_index(rng_);
        double u = uniform01(rng_);
        if (totals_[j] < n_max_ && mu_ > 0.0) {
            double s = law_.atoms()[i].charge;
            double dU = U_.delta(phi_, j, s);
            if (std::log(u) < std::log(mu_ / (totals_[j] + 1)) - dU) {
                U_.apply(phi_, j, s);
                eta_[j] += s;
                ++counts_[j][i];
                ++totals_[j];
                energy_ += dU;
                accepted = true;
            }
        }
    } else {
        double pick = uniform01(rng_);
        double u = uniform01(rng_);
        if (totals_[j] > 0) {
            // uniformly chosen atom at the site
            int target = std::min(totals_[j] - 1, static_cast<int>(pick * totals_[j]));
            std::size_t i = 0;
            for (int seen = counts_[j][0]; seen <= target; seen += counts_[j][++i]) {}
            double s = law_.atoms()[i].charge;
            double dU = U_.delta(phi_, j, -s);
            if (std::log(u) < std::log(totals_[j] / mu_) - dU) {
                U_.apply(phi_, j, -s);
                eta_[j] -= s;
                --counts_[j][i];
                --totals_[j];
                energy_ += dU;
                accepted = true;
            }
        }
    }
    if (steps_ % 10000 == 0) {
        // rebuild from the atom counts so charge sums do not accumulate rounding
        for (std::size_t k = 0; k < eta_.size(); ++k) {
            eta_[k] = 0.0;
            for (std::size_t i = 0; i < counts_[k].size(); ++i) eta_[k] += counts_[k][i] * law_.atoms()[i].charge;
        }
        phi_ = U_.node_field(eta_);
        energy_ = U_.energy_from_field(phi_);
    }
    return accepted;
}

}  // namespace weakgas
