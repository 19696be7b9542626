#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "weakgas/configuration.hpp"
#include "weakgas/lattice.hpp"

namespace weakgas {

struct ProposalMix {
    double birth = 0.3;
    double death = 0.3;
    double move = 0.3;
    double recharge = 0.1;

    void validate() const;
};

struct SamplerParams {
    std::uint64_t sweeps = 100000;  //!< total Metropolis-Hastings steps
    std::int64_t burn_in = -1;      //!< -1: 20% of sweeps
    std::uint64_t thinning = 0;     //!< 0: keep at most 1e5 samples
    ProposalMix mix;
    double alpha = 1.0;
    std::uint64_t seed = 1;
    double move_scale = 0.0;        //!< 0: kernel width / 2
    std::uint64_t verify_every = 10000;
    bool track_stability = false;

    std::uint64_t burn() const;
    std::uint64_t thin() const;
    void validate() const;
};

/// Exact draw of the marked Poisson gas (activity z, charge law r) on a window.
Configuration sample_free(const ModelSpec& model, const Box& window, Rng& rng);

enum class MoveKind { birth, death, move, recharge };

struct Proposal {
    MoveKind kind = MoveKind::birth;
    std::size_t index = 0;  //!< particle for death, move, recharge
    Point position{};       //!< new position for birth and move
    double charge = 0.0;    //!< new charge for birth and recharge
};

struct AcceptanceCounts {
    std::array<std::uint64_t, 4> proposed{};
    std::array<std::uint64_t, 4> accepted{};
};

/// Grand-canonical birth/death/move/recharge Metropolis-Hastings chain for
/// the Gibbs measure with density alpha v(phi) - (1 - alpha) b phi on the
/// window supp g + supp G. Births append, deaths keep the order of the rest.
class GibbsChain
{
  public:
    GibbsChain(const ModelSpec& model, const QuadratureGrid& grid, const SamplerParams& params,
               std::uint64_t stream = 0);
    GibbsChain(const ModelSpec& model, const QuadratureGrid& grid, const SamplerParams& params, std::uint64_t stream,
               Configuration initial);

    const Configuration& configuration() const { return cfg_; }
    double energy() const { return field_.energy(); }
    std::uint64_t steps() const { return steps_; }
    const Box& window() const { return window_; }
    const EnergyDensity& density() const { return field_.density(); }
    const AcceptanceCounts& counts() const { return counts_; }

    Proposal draw_proposal();
    /// log of the Metropolis-Hastings ratio; -inf for impossible moves
    double log_acceptance_ratio(const Proposal& p);
    //! accept iff log(u) < log ratio
    bool apply(const Proposal& p, double u);
    bool step();

    /// Recomputes the energy from scratch; throws if the cached value drifted by more than 1e-8.
    void verify();
    double max_energy_drift() const { return max_drift_; }
    //! largest |U| - b sum |s_j| (G*g)(y_j) seen so far (tracking only)
    double max_stability_excess() const { return max_excess_; }
    std::uint64_t stability_checks() const { return stability_checks_; }

  private:
    void build_changes(const Proposal& p);
    void commit(const Proposal& p);
    void check_stability();

    ModelSpec model_;
    QuadratureGrid grid_;
    SamplerParams params_;
    Box window_;
    double window_volume_ = 0.0;
    double move_scale_ = 0.0;
    Rng rng_;
    std::normal_distribution<double> normal_;
    Configuration cfg_;
    FieldState field_;
    CutoffConvolution conv_;
    std::vector<FieldState::Change> changes_;
    std::uint64_t steps_ = 0;
    AcceptanceCounts counts_;
    double pending_delta_ = 0.0;
    double max_drift_ = 0.0;
    // stability tracking
    std::vector<double> particle_conv_;
    double weighted_conv_ = 0.0;
    double max_excess_ = -std::numeric_limits<double>::infinity();
    std::uint64_t stability_checks_ = 0;
};

using Quantity = std::function<double(const Configuration&)>;

struct ChainOutput {
    std::vector<std::vector<double>> series;  //!< one thinned stream per quantity
    std::vector<double> n_particles;
    std::vector<double> energy;
    AcceptanceCounts counts;
    double max_energy_drift = 0.0;
    double max_stability_excess = 0.0;
    std::uint64_t stability_checks = 0;
};

/// Callback for every stored sample: (step, configuration, energy, quantity values).
using SampleSink = std::function<void(std::uint64_t, const Configuration&, double, const std::vector<double>&)>;

ChainOutput run_chain(const ModelSpec& model, const QuadratureGrid& grid, const SamplerParams& params,
                      const std::vector<Quantity>& quantities, std::uint64_t replica = 0, const SampleSink& sink = {});

/// Independent replicas with sub-streams 0..replicas-1, run on up to
/// `workers` threads. The result does not depend on the worker count.
std::vector<ChainOutput> run_replicas(const ModelSpec& model, const QuadratureGrid& grid, const SamplerParams& params,
                                      const std::vector<Quantity>& quantities, int replicas, int workers);

struct InterpolatedEnergy {
    double value = 0.0;       //!< U for alpha v(phi) - (1 - alpha) b phi
    double derivative = 0.0;  //!< U for v(phi) + b phi
};

InterpolatedEnergy interpolated_energy(const Configuration& cfg, const ModelSpec& model, const QuadratureGrid& grid,
                                       double alpha, double b);

/// Exact sampler for the marked Poisson process with intensity
/// z e^{s b (G*g)(y)} dr(s) dy, by thinning a homogeneous dominating process.
class TiltedFreeSampler
{
  public:
    TiltedFreeSampler(const ModelSpec& model, const QuadratureGrid& grid, const Box& window, double b);

    Configuration sample(Rng& rng) const;
    double dominating_activity() const { return dominating_; }
    const CutoffConvolution& convolution() const { return conv_; }

  private:
    ModelSpec model_;
    Box window_;
    double b_ = 0.0;
    double exponent_bound_ = 0.0;  //!< C b sup (G*g)
    double dominating_ = 0.0;
    CutoffConvolution conv_;
};

/// Single-site chain for the truncated lattice measure. The state is the
/// number of atoms of each charge at each site; a step adds one atom drawn
/// from r or removes a uniformly chosen one.
class LatticeChain
{
  public:
    LatticeChain(const ModelSpec& model, const LatticeWindow& window, const QuadratureGrid& grid, int n_max,
                 std::uint64_t seed, std::uint64_t stream = 0);

    bool step();
    const std::vector<double>& eta() const { return eta_; }
    double energy() const { return energy_; }
    std::uint64_t steps() const { return steps_; }
    const LatticeEnergy& lattice_energy() const { return U_; }

  private:
    LatticeEnergy U_;
    ChargeLaw law_;
    int n_max_;
    double mu_;
    Rng rng_;
    std::vector<std::vector<int>> counts_;
    std::vector<int> totals_;
    std::vector<double> eta_;
    std::vector<double> phi_;
    double energy_ = 0.0;
    std::uint64_t steps_ = 0;
};

}  // namespace weakgas
