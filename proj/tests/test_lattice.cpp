#include <doctest.h>

#include <cmath>
#include <map>

#include "generators.hpp"
#include "weakgas/lattice.hpp"

using namespace weakgas;

namespace {

double binom(int n, int k)
{
    return std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0));
}

// P(eta_j = k) for Rademacher charges, all particle numbers up to n_max
double rademacher_site_prob(double mu, int k, int n_max)
{
    double acc = 0.0;
    for (int n = std::abs(k); n <= n_max; n += 2) acc += gen::poisson_pmf(mu, n) * binom(n, (n + k) / 2) / std::pow(2.0, n);
    return acc;
}

LatticeConfiguration random_state(gen::Gen& g, const LatticeWindow& w, double amp)
{
    LatticeConfiguration lat{w, std::vector<double>(w.size())};
    for (auto& v : lat.values) v = g.coin(0.3) ? 0.0 : g.uniform(-amp, amp);
    return lat;
}

}  // namespace

TEST_CASE("lattice window geometry")
{
    LatticeWindow w(2, 0.5, {-2, 1}, {4, 3});
    CHECK(w.size() == 12);
    CHECK(w.cell_volume() == 0.25);
    // ordering by (i1, i0)
    CHECK(w.site(0) == LatticeWindow::Index{-2, 1});
    CHECK(w.site(1) == LatticeWindow::Index{-1, 1});
    CHECK(w.site(4) == LatticeWindow::Index{-2, 2});
    Box b = w.box();
    CHECK(b.lo[0] == doctest::Approx(-1.25));
    // site i covers [(i - 1/2) spacing, (i + 1/2) spacing]
    CHECK(b.lo[1] == doctest::Approx(0.25));
    CHECK(b.hi[1] == doctest::Approx(1.75));
    CHECK(b.volume() == doctest::Approx(w.size() * w.cell_volume()));

    // cells partition the box: every sampled point lies in exactly one cell
    gen::Gen g(9);
    for (int t = 0; t < 3000; ++t) {
        Point x = g.point(b);
        if (x[0] == b.hi[0] || x[1] == b.hi[1]) continue;
        int hits = 0;
        for (std::size_t j = 0; j < w.size(); ++j) {
            Box c = w.cell(j);
            bool in = x[0] >= c.lo[0] && x[0] < c.hi[0] && x[1] >= c.lo[1] && x[1] < c.hi[1];
            if (in) {
                ++hits;
                CHECK(w.locate(x) == j);
            }
        }
        CHECK(hits == 1);
    }
    // half-open convention: the lower face belongs to the cell
    CHECK(w.locate(w.cell(5).lo) == 5u);

    LatticeWindow cov = LatticeWindow::covering(1, 0.3, Box::cube(1, {}, 1.0));
    CHECK(cov.box().contains(Box::cube(1, {}, 1.0)));
}

TEST_CASE("discretize examples")
{
    LatticeWindow w(1, 1.0, {-2, 0}, {5, 1});
    Configuration cfg(Box::cube(1, {}, 2.5));
    auto lat = discretize(cfg, w);
    CHECK(std::all_of(lat.values.begin(), lat.values.end(), [](double v) { return v == 0.0; }));

    cfg.insert(Point{1.2, 0}, 0.7);
    lat = discretize(cfg, w);
    for (std::size_t j = 0; j < w.size(); ++j) CHECK(lat.values[j] == (j == 3 ? 0.7 : 0.0));

    Configuration pair(Box::cube(1, {}, 2.5));
    pair.insert(Point{-0.9, 0}, 1.0);
    pair.insert(Point{-1.2, 0}, -1.0);
    lat = discretize(pair, w);
    CHECK(lat.values[1] == 0.0);

    gen::Gen g(10);
    for (int t = 0; t < 200; ++t) {
        ChargeLaw law = gen::charge_law(g);
        auto c = gen::configuration(g, Box::cube(1, {}, 2.49), law, 10);
        auto l = discretize(c, w);
        double abs_sum = 0.0;
        for (double v : l.values) abs_sum += std::abs(v);
        CHECK(abs_sum <= c.size() * law.bound() + 1e-12);
    }
}

TEST_CASE("lattice field and energy")
{
    ModelSpec m = gen::default_model();
    QuadratureGrid grid = QuadratureGrid::for_model(m);
    LatticeWindow w = LatticeWindow::covering(1, 0.5, m.window());
    LatticeConfiguration zero{w, std::vector<double>(w.size(), 0.0)};
    CHECK(lattice_field(zero, m.kernel, Point{0.4, 0}) == 0.0);
    CHECK(lattice_energy(zero, m, grid) == 0.0);

    SUBCASE("single particle: lattice field approaches the continuum field as lambda shrinks")
    {
        Configuration cfg(m.window());
        cfg.insert(Point{0.23, 0}, 1.0);
        std::vector<double> errors;
        for (double lambda : {0.4, 0.2, 0.1, 0.05, 0.025}) {
            auto lat = discretize(cfg, LatticeWindow::covering(1, lambda, m.window()));
            double err = 0.0;
            for (double x = -1.5; x <= 1.5; x += 0.05)
                err = std::max(err, std::abs(lattice_field(lat, m.kernel, Point{x, 0}) - field_at(cfg, m.kernel, Point{x, 0})));
            errors.push_back(err);
        }
        for (std::size_t i = 1; i < errors.size(); ++i) CHECK(errors[i] < errors[i - 1]);
        CHECK(errors.back() < 0.05);
    }
    SUBCASE("smeared kernel matches an independent cell average")
    {
        for (std::size_t j = 0; j < w.size(); j += 3) {
            Box c = w.cell(j);
            for (double x = -1.0; x <= 1.0; x += 0.3) {
                double avg = gen::simpson([&](double y) { return m.kernel(Point{x - y, 0}); }, c.lo[0], c.hi[0], 2000) /
                             w.cell_volume();
                // 4-point sub-cell midpoint rule against a fine Simpson integral
                CHECK(smeared_kernel(m.kernel, w, j, Point{x, 0}) == doctest::Approx(avg).epsilon(0.02).scale(1.0));
            }
        }
    }
    SUBCASE("linear density: lattice energy is a sum of cell integrals")
    {
        ModelSpec lin = gen::default_model(EnergyDensity::linear(0.6));
        gen::Gen g(12);
        for (int t = 0; t < 10; ++t) {
            auto lat = random_state(g, w, 2.0);
            double ref = 0.0;
            for (std::size_t j = 0; j < w.size(); ++j) {
                double cell_int = 0.0;
                for (std::size_t n = 0; n < grid.size(); ++n) {
                    Point x = grid.node(n);
                    cell_int += smeared_kernel(lin.kernel, w, j, x) * lin.cutoff(x);
                }
                ref += lat.values[j] * cell_int * grid.cell_volume();
            }
            CHECK(lattice_energy(lat, lin, grid) == doctest::Approx(-0.6 * ref).epsilon(1e-10).scale(1.0));
        }
    }
}

TEST_CASE("LatticeEnergy incremental updates")
{
    ModelSpec m = gen::model(2, Kernel::tent(2, 1.0), EnergyDensity::logcosh_gauged(), ChargeLaw::rademacher(), 1.0,
                             0.8, 0.4);
    QuadratureGrid grid = QuadratureGrid::for_model(m, 0.1);
    LatticeWindow w = LatticeWindow::covering(2, 0.6, m.window());
    LatticeEnergy U(m, w, grid);
    gen::Gen g(13);
    auto lat = random_state(g, w, 1.5);
    auto phi = U.node_field(lat.values);
    CHECK(U.energy_from_field(phi) == doctest::Approx(U.energy(lat.values)).epsilon(1e-13));
    for (int t = 0; t < 100; ++t) {
        std::size_t j = static_cast<std::size_t>(g.integer(0, static_cast<int>(w.size()) - 1));
        double dq = g.uniform(-1, 1);
        double before = U.energy(lat.values);
        double d = U.delta(phi, j, dq);
        U.apply(phi, j, dq);
        lat.values[j] += dq;
        CHECK(d == doctest::Approx(U.energy(lat.values) - before).epsilon(1e-10).scale(1.0));
    }
}

TEST_CASE("site law examples")
{
    SUBCASE("zero mean count is a point mass")
    {
        SiteLaw s = site_law(0.0, 1.0, 1, ChargeLaw::rademacher(), 5);
        REQUIRE(s.values.size() == 1);
        CHECK(s.values[0] == 0.0);
        CHECK(s.probs[0] == 1.0);
        CHECK(s.tail == 0.0);
    }
    SUBCASE("unit charges give a truncated Poisson law")
    {
        const double z = 1.3, lambda = 0.7;
        for (int d : {1, 2}) {
            double mu = z * std::pow(lambda, d);
            SiteLaw s = site_law(z, lambda, d, ChargeLaw::unit(), 6);
            REQUIRE(s.values.size() == 7);
            CHECK(s.mean_count == doctest::Approx(mu));
            for (int n = 0; n <= 6; ++n) {
                CHECK(s.values[n] == n);
                CHECK(s.probs[n] == doctest::Approx(gen::poisson_pmf(mu, n)).epsilon(1e-13));
            }
        }
    }
    SUBCASE("Rademacher charges against the binomial formula")
    {
        const double mu = 1.7;
        SiteLaw s = site_law(mu, 1.0, 1, ChargeLaw::rademacher(), 5);
        for (int k = -5; k <= 5; ++k) CHECK(s.prob_of(k) == doctest::Approx(rademacher_site_prob(mu, k, 5)).epsilon(1e-12));
        // compound sums sampled directly
        Rng rng = make_rng(99);
        std::poisson_distribution<int> count(mu);
        std::map<int, int> hist;
        const int draws = 200000;
        int kept = 0;
        for (int i = 0; i < draws; ++i) {
            int n = count(rng);
            if (n > 5) continue;
            int sum = 0;
            for (int a = 0; a < n; ++a) sum += ChargeLaw::rademacher().sample(rng) > 0 ? 1 : -1;
            ++hist[sum];
            ++kept;
        }
        for (int k = -5; k <= 5; ++k) {
            double p = s.prob_of(k) / (1.0 - s.tail);
            double se = std::sqrt(p * (1 - p) / kept);
            CHECK(std::abs(hist[k] / double(kept) - p) <= 4.0 * se + 1e-12);
        }
    }
    SUBCASE("tail equals the missing probability")
    {
        gen::Gen g(14);
        for (int t = 0; t < 100; ++t) {
            ChargeLaw law = gen::charge_law(g);
            SiteLaw s = site_law(g.uniform(0.0, 3.0), g.uniform(0.2, 1.5), g.integer(1, 2), law, g.integer(0, 6));
            double total = 0.0;
            for (double p : s.probs) total += p;
            CHECK(std::abs(1.0 - total - s.tail) <= 1e-12);
            CHECK(std::is_sorted(s.values.begin(), s.values.end()));
        }
    }
}

TEST_CASE("logarithmic FKG criterion")
{
    SUBCASE("linear density has zero mixed partials")
    {
        ModelSpec m = gen::default_model(EnergyDensity::linear(1.0));
        QuadratureGrid grid = QuadratureGrid::for_model(m);
        LatticeEnergy U(m, LatticeWindow::covering(1, 0.5, m.window()), grid);
        std::vector<double> eta(U.window().size(), 0.7);
        CHECK(U.mixed_partial(eta, 2, 3).value == 0.0);
    }
    SUBCASE("diagonal is rejected")
    {
        ModelSpec m = gen::default_model();
        LatticeEnergy U(m, LatticeWindow::covering(1, 0.5, m.window()), QuadratureGrid::for_model(m));
        std::vector<double> eta(U.window().size(), 0.0);
        CHECK_THROWS(U.mixed_partial(eta, 1, 1));
    }
    SUBCASE("every concave density gives nonpositive, finite-difference consistent partials")
    {
        gen::Gen g(15);
        for (const auto& v : gen::concave_densities()) {
            CAPTURE(v.name());
            ModelSpec m = gen::default_model(v);
            QuadratureGrid grid = QuadratureGrid::for_model(m);
            LatticeEnergy U(m, LatticeWindow::covering(1, 0.5, m.window()), grid);
            double worst = -INFINITY;
            int inconsistent = 0;
            for (int s = 0; s < 100; ++s) {
                auto lat = random_state(g, U.window(), 3.0);
                std::size_t j = static_cast<std::size_t>(g.integer(0, static_cast<int>(U.window().size()) - 1));
                std::size_t l = j;
                while (l == j) l = static_cast<std::size_t>(g.integer(0, static_cast<int>(U.window().size()) - 1));
                auto mp = U.mixed_partial(lat.values, j, l);
                worst = std::max(worst, mp.value);
                inconsistent += !mp.consistent();
            }
            CHECK(worst <= 1e-12);
            CHECK(inconsistent == 0);
        }
    }
    SUBCASE("convex control has a positive witness")
    {
        ModelSpec m = gen::default_model(gen::convex_density());
        m.charge_law = ChargeLaw::unit();
        LatticeEnergy U(m, LatticeWindow(1, 1.0, {0, 0}, {2, 1}), QuadratureGrid::for_model(m));
        auto mp = U.mixed_partial(std::vector<double>{1.0, 1.0}, 0, 1);
        CHECK(mp.value > 0.0);
        CHECK(mp.consistent());
    }
}

TEST_CASE("lattice pairing converges as lambda halves")
{
    gen::Gen g(16);
    ModelSpec m = gen::default_model();
    for (int t = 0; t < 5; ++t) {
        auto cfg = gen::configuration(g, m.window(), m.charge_law, 10);
        TestFunction h = gen::nonneg_test_function(g, 1, Box::cube(1, {}, 1.5));
        double exact = pairing(cfg, h);
        // A cell average lies between the min and max of h on the cell, so the
        // error is at most sum |s_j| osc(h, cell of x_j). Signed errors cancel,
        // so the error itself need not fall at every halving.
        double err = 0.0;
        for (double lambda : {0.2, 0.1, 0.05, 0.025, 0.0125}) {
            CAPTURE(lambda);
            LatticeWindow w = LatticeWindow::covering(1, lambda, m.window());
            err = std::abs(lattice_pairing(discretize(cfg, w), h) - exact);
            double bound = 0.0;
            for (const auto& p : cfg.particles()) {
                auto j = w.locate(p.position);
                REQUIRE(j.has_value());
                Box c = w.cell(*j);
                double lo = h(Point{c.lo[0], 0}), hi = lo;
                for (int k = 1; k <= 400; ++k) {
                    double v = h(Point{c.lo[0] + (c.hi[0] - c.lo[0]) * k / 400, 0});
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
                // a jump closer than one sample step to the cell edge is missed
                bound += std::abs(p.charge) * (hi - lo + h.sup_bound() / 400);
            }
            CHECK(err <= bound + 1e-12);
        }
        CHECK(err < 0.02 * (1.0 + std::abs(exact)));
    }
    // coefficients are cell averages of h
    TestFunction h = TestFunction::plateau_ramp(1, {}, 0.5, 0.0);
    LatticeWindow w(1, 0.25, {-4, 0}, {9, 1});
    auto c = lattice_pairing_coefficients(w, h);
    CHECK(c[4] == doctest::Approx(1.0));
    CHECK(c[0] == doctest::Approx(0.0));
    // cell [0.375, 0.625) is half covered
    CHECK(c[6] == doctest::Approx(0.5));
}

TEST_CASE("enumeration oracle")
{
    SUBCASE("free lattice: site expectations are truncated compound-Poisson means")
    {
        ChargeLaw law({{-1.0, 0.3}, {0.5, 0.2}, {2.0, 0.5}});
        ModelSpec m = gen::model(1, Kernel::tent(1, 1.0), EnergyDensity::zero(), law, 0.8);
        QuadratureGrid grid = QuadratureGrid::for_model(m);
        LatticeWindow w(1, 1.0, {0, 0}, {2, 1});
        std::vector<LatticeObservable> obs{
            LatticeObservable("eta0", {{1.0, 0.0}}, OuterFunction::linear({1.0})),
            LatticeObservable("eta1", {{0.0, 1.0}}, OuterFunction::linear({1.0}))};
        EnumerationOptions opt;
        opt.n_max = 4;
        auto res = enumerate_lattice(m, w, grid, obs, opt);
        double mu = 0.8, num = 0.0, den = 0.0;
        for (int n = 0; n <= 4; ++n) {
            num += gen::poisson_pmf(mu, n) * n * law.mean();
            den += gen::poisson_pmf(mu, n);
        }
        CHECK(res.expectations[0] == doctest::Approx(num / den).epsilon(1e-12));
        CHECK(res.expectations[1] == doctest::Approx(num / den).epsilon(1e-12));
        // independence of the two sites
        CHECK(std::abs(res.covariances[0].covariance) <= 1e-12);
        CHECK(res.omitted_mass == doctest::Approx(1.0 - den * den).epsilon(1e-12));
        CHECK(res.log_partition == doctest::Approx(2.0 * std::log(den)).epsilon(1e-12));
    }
    SUBCASE("single site: monotone functions are positively correlated")
    {
        for (const auto& v : gen::concave_densities()) {
            ModelSpec m = gen::default_model(v);
            LatticeWindow w(1, 1.0, {0, 0}, {1, 1});
            std::vector<LatticeObservable> obs{
                LatticeObservable("id", {{1.0}}, OuterFunction::linear({1.0})),
                LatticeObservable("exp", {{1.0}}, OuterFunction::exp_product({0.5})),
                LatticeObservable("pos", {{1.0}}, OuterFunction::positive_power(2.0))};
            auto res = enumerate_lattice(m, w, QuadratureGrid::for_model(m), obs, {});
            for (const auto& c : res.covariances) CHECK(c.covariance >= 0.0);
        }
    }
    SUBCASE("two sites with concave density satisfy FKG up to the certified slack")
    {
        for (const auto& v : gen::concave_densities()) {
            CAPTURE(v.name());
            ModelSpec m = gen::default_model(v);
            LatticeWindow w(1, 1.0, {0, 0}, {2, 1});
            std::vector<LatticeObservable> obs{
                LatticeObservable("e0", {{1.0, 0.0}}, OuterFunction::linear({1.0})),
                LatticeObservable("e1", {{0.0, 1.0}}, OuterFunction::linear({1.0})),
                LatticeObservable("max", {{1.0, 0.0}, {0.0, 1.0}}, OuterFunction::smooth_max(2, 2.0)),
                LatticeObservable("pos1", {{0.0, 1.0}}, OuterFunction::positive_power(1.5))};
            auto res = enumerate_lattice(m, w, QuadratureGrid::for_model(m), obs, {});
            CHECK(res.covariances.size() == 6);
            for (const auto& c : res.covariances) CHECK(c.covariance >= -c.truncation_error);
        }
    }
    SUBCASE("convex control violates FKG")
    {
        ModelSpec m = gen::default_model(gen::convex_density());
        m.charge_law = ChargeLaw::unit();
        m.activity = 0.5;
        LatticeWindow w(1, 1.0, {0, 0}, {2, 1});
        std::vector<LatticeObservable> obs{LatticeObservable("e0", {{1.0, 0.0}}, OuterFunction::linear({1.0})),
                                           LatticeObservable("e1", {{0.0, 1.0}}, OuterFunction::linear({1.0}))};
        auto res = enumerate_lattice(m, w, QuadratureGrid::for_model(m), obs, {});
        CHECK(res.covariances[0].covariance < -res.covariances[0].truncation_error);
    }
    SUBCASE("budget")
    {
        ModelSpec m = gen::default_model();
        EnumerationOptions opt;
        opt.budget = 100;
        CHECK_THROWS_AS(enumerate_lattice(m, LatticeWindow(1, 1.0, {0, 0}, {3, 1}), QuadratureGrid::for_model(m), {}, opt),
                        std::length_error);
    }
    SUBCASE("worker count does not change the result")
    {
        ModelSpec m = gen::default_model();
        LatticeWindow w(1, 1.0, {-1, 0}, {3, 1});
        std::vector<LatticeObservable> obs{LatticeObservable("e0", {{1.0, 0.0, 0.0}}, OuterFunction::linear({1.0})),
                                           LatticeObservable("e2", {{0.0, 0.0, 1.0}}, OuterFunction::exp_product({0.3}))};
        EnumerationOptions a, b;
        a.n_max = b.n_max = 4;
        b.workers = 3;
        auto ra = enumerate_lattice(m, w, QuadratureGrid::for_model(m), obs, a);
        auto rb = enumerate_lattice(m, w, QuadratureGrid::for_model(m), obs, b);
        CHECK(ra.expectations == rb.expectations);
        CHECK(ra.covariances[0].covariance == rb.covariances[0].covariance);
    }
}
