#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "generators.hpp"
#include "weakgas/configuration.hpp"
#include "weakgas/oracles.hpp"

using namespace weakgas;

namespace {

// (G*g)(y) by a direct sum over the grid nodes: the same midpoint rule as the
// energy, written out here without the library's node iterators
double node_convolution(const ModelSpec& m, const QuadratureGrid& grid, const Point& y)
{
    double acc = 0.0;
    for (std::size_t n = 0; n < grid.size(); ++n) {
        Point x = grid.node(n);
        acc += m.kernel(x - y) * m.cutoff(x);
    }
    return acc * grid.cell_volume();
}

double brute_energy(const Configuration& cfg, const ModelSpec& m, const QuadratureGrid& grid)
{
    double acc = 0.0;
    for (std::size_t n = 0; n < grid.size(); ++n) {
        Point x = grid.node(n);
        double phi = 0.0;
        for (const auto& p : cfg.particles()) phi += p.charge * m.kernel(x - p.position);
        acc += m.energy(phi) * m.cutoff(x);
    }
    return acc * grid.cell_volume();
}

}  // namespace

TEST_CASE("field_at examples")
{
    Kernel G = Kernel::tent(1, 1.0);
    Configuration cfg(Box::cube(1, {}, 5.0));
    CHECK(field_at(cfg, G, Point{0.3, 0}) == 0.0);
    cfg.insert(Point{0.5, 0}, 1.0);
    for (double x = -1.0; x <= 2.0; x += 0.1) CHECK(field_at(cfg, G, Point{x, 0}) == G(Point{x - 0.5, 0}));
    cfg.insert(Point{0.5, 0}, -1.0);
    for (double x = -1.0; x <= 2.0; x += 0.1) CHECK(field_at(cfg, G, Point{x, 0}) == 0.0);
}

TEST_CASE("pairing examples")
{
    Configuration cfg(Box::cube(1, {}, 2.0));
    auto one = [](const Point&) { return 1.0; };
    CHECK(pairing(cfg, one) == 0.0);
    cfg.insert(Point{0.1, 0}, 1.0);
    cfg.insert(Point{-0.4, 0}, 1.0);
    cfg.insert(Point{1.2, 0}, -1.0);
    CHECK(pairing(cfg, one) == 1.0);
    CHECK(abs_pairing(cfg, one) == 3.0);

    gen::Gen g(11);
    Box w = Box::cube(2, {}, 2.0);
    for (int t = 0; t < 500; ++t) {
        auto c = gen::configuration(g, w, gen::charge_law(g), 12);
        TestFunction h = gen::nonneg_test_function(g, 2, w);
        CHECK(pairing(c, h) <= abs_pairing(c, h) + 1e-14);
    }
}

TEST_CASE("energy examples")
{
    ModelSpec m = gen::default_model();
    QuadratureGrid grid = QuadratureGrid::for_model(m);
    Configuration empty(m.window());
    CHECK(energy(empty, m, grid) == 0.0);

    gen::Gen g(5);
    ModelSpec free = gen::default_model(EnergyDensity::zero());
    for (int t = 0; t < 20; ++t) CHECK(energy(gen::configuration(g, m.window(), m.charge_law, 15), free, grid) == 0.0);
}

TEST_CASE("energy matches a brute-force node sum")
{
    gen::Gen g(6);
    for (int d : {1, 2}) {
        for (const auto& v : gen::concave_densities()) {
            ModelSpec m = gen::model(d, d == 1 ? Kernel::tent(1, 1.0) : Kernel::gaussian(2, 0.4, 1.2), v,
                                     gen::charge_law(g), 1.0, 1.0, 0.5);
            QuadratureGrid grid = QuadratureGrid::for_model(m, d == 1 ? 0.0 : 0.1);
            for (int t = 0; t < 5; ++t) {
                auto cfg = gen::configuration(g, m.window(), m.charge_law, 10);
                double ref = brute_energy(cfg, m, grid);
                CHECK(energy(cfg, m, grid) == doctest::Approx(ref).epsilon(1e-11).scale(1.0));
            }
        }
    }
}

TEST_CASE("linear density: energy equals -b sum s_j (G*g)(y_j)")
{
    gen::Gen g(8);
    for (int d : {1, 2}) {
        ModelSpec m = gen::model(d, Kernel::tent(d, 1.0), EnergyDensity::linear(0.7), gen::charge_law(g), 1.0, 1.0,
                                 0.5);
        QuadratureGrid grid = QuadratureGrid::for_model(m, d == 1 ? 0.0 : 0.1);
        CutoffConvolution conv(m.kernel, m.cutoff, grid);
        for (int t = 0; t < 10; ++t) {
            auto cfg = gen::configuration(g, m.window(), m.charge_law, 8);
            double u = energy(cfg, m, grid);
            double direct = 0.0, lib = 0.0;
            for (const auto& p : cfg.particles()) {
                direct += p.charge * node_convolution(m, grid, p.position);
                lib += p.charge * conv(p.position);
            }
            CHECK(u == doctest::Approx(-0.7 * direct).epsilon(1e-8).scale(1.0));
            CHECK(u == doctest::Approx(-0.7 * lib).epsilon(1e-12).scale(1.0));
        }
    }
    // the node rule approximates the continuous convolution to O(h^2)
    ModelSpec m = gen::model(1, Kernel::tent(1, 1.0), EnergyDensity::linear(1.0));
    QuadratureGrid grid = QuadratureGrid::for_model(m, 0.01);
    CutoffConvolution conv(m.kernel, m.cutoff, grid);
    for (double y : {-2.9, -2.2, 0.0, 1.7, 2.6}) {
        double exact = integrate_box(m.cutoff.support(),
                                     [&](const Point& x) { return m.kernel(x - Point{y, 0}) * m.cutoff(x); },
                                     {y - 1.0, y, y + 1.0, -2.0, 2.0});
        CHECK(conv(Point{y, 0}) == doctest::Approx(exact).epsilon(1e-4));
    }
}

TEST_CASE("energy_delta")
{
    ModelSpec m = gen::default_model();
    QuadratureGrid grid = QuadratureGrid::for_model(m);
    Configuration cfg(m.window());

    SUBCASE("insertion into the empty configuration is the singleton energy")
    {
        Particle p{{0.3, 0}, 1.0};
        Configuration single = cfg;
        single.insert(p);
        CHECK(energy_delta(cfg, Insertion{p}, m, grid) == doctest::Approx(energy(single, m, grid)).epsilon(1e-12));
    }
    SUBCASE("insertion far from the cutoff support changes nothing")
    {
        Configuration wide(Box::cube(1, {}, 20.0));
        wide.insert(Point{0.1, 0}, 1.0);
        CHECK(energy_delta(wide, Insertion{{{10.0, 0}, 1.0}}, m, grid) == 0.0);
        CHECK(energy_delta(wide, Insertion{{{3.5, 0}, -1.0}}, m, grid) == 0.0);
    }
    SUBCASE("bad removal index")
    {
        CHECK_THROWS_AS(energy_delta(cfg, Removal{0}, m, grid), std::out_of_range);
    }
    SUBCASE("random insert/remove pairs")
    {
        gen::Gen g(21);
        for (int t = 0; t < 300; ++t) {
            CAPTURE(t);
            auto c = gen::configuration(g, m.window(), m.charge_law, 15);
            Particle p{g.point(m.window()), m.charge_law.sample(g.rng)};
            double up = energy_delta(c, Insertion{p}, m, grid);
            Configuration c2 = c;
            c2.insert(p);
            double down = energy_delta(c2, Removal{c2.size() - 1}, m, grid);
            CHECK(std::abs(up + down) <= 1e-10);
            CHECK(up == doctest::Approx(energy(c2, m, grid) - energy(c, m, grid)).epsilon(1e-10).scale(1.0));
            if (!c.empty()) {
                std::size_t i = static_cast<std::size_t>(g.integer(0, static_cast<int>(c.size()) - 1));
                Configuration c3 = c;
                c3.erase(i);
                CHECK(energy_delta(c, Removal{i}, m, grid) ==
                      doctest::Approx(energy(c3, m, grid) - energy(c, m, grid)).epsilon(1e-10).scale(1.0));
            }
        }
    }
}

TEST_CASE("FieldState tracks proposals and accepts")
{
    gen::Gen g(33);
    for (int d : {1, 2}) {
        ModelSpec m = gen::model(d, Kernel::tent(d, 1.0), EnergyDensity::sqrt_saturating_gauged(), gen::charge_law(g),
                                 1.0, 1.0, 0.5);
        QuadratureGrid grid = QuadratureGrid::for_model(m, d == 1 ? 0.0 : 0.1);
        auto cfg = gen::configuration(g, m.window(), m.charge_law, 10);
        FieldState fs(m.kernel, m.energy, m.cutoff, grid);
        fs.reset(cfg);
        CHECK(fs.energy() == doctest::Approx(energy(cfg, m, grid)).epsilon(1e-12).scale(1.0));
        for (int t = 0; t < 200; ++t) {
            Particle p{g.point(m.window()), m.charge_law.sample(g.rng)};
            std::vector<FieldState::Change> ch{{p.position, p.charge}};
            Configuration next = cfg;
            next.insert(p);
            if (!cfg.empty() && g.coin()) {
                // a move: remove one particle and insert elsewhere
                std::size_t i = static_cast<std::size_t>(g.integer(0, static_cast<int>(cfg.size()) - 1));
                ch = {{cfg[i].position, -cfg[i].charge}, {p.position, cfg[i].charge}};
                next = cfg;
                next.set_position(i, p.position);
            }
            double dU = fs.propose(ch);
            CHECK(dU == doctest::Approx(energy(next, m, grid) - energy(cfg, m, grid)).epsilon(1e-10).scale(1.0));
            if (g.coin()) {
                fs.accept();
                cfg = next;
            }
            CHECK(fs.energy() == doctest::Approx(energy(cfg, m, grid)).epsilon(1e-10).scale(1.0));
        }
    }
}

TEST_CASE("stability bound")
{
    ModelSpec lin = gen::model(1, Kernel::tent(1, 1.0), EnergyDensity::linear(0.9), ChargeLaw::unit());
    QuadratureGrid grid = QuadratureGrid::for_model(lin);
    Configuration empty(lin.window());
    CHECK(stability_bound(empty, lin, grid) == 0.0);

    gen::Gen g(44);
    for (int t = 0; t < 20; ++t) {
        auto cfg = gen::configuration(g, lin.window(), lin.charge_law, 12);
        CHECK(stability_bound(cfg, lin, grid) == doctest::Approx(std::abs(energy(cfg, lin, grid))).epsilon(1e-12));
    }
}

TEST_CASE("pathwise stability over random configurations")
{
    gen::Gen g(55);
    for (const auto& v : gen::concave_densities()) {
        CAPTURE(v.name());
        ModelSpec m = gen::model(1, Kernel::tent(1, 1.0), v, ChargeLaw::rademacher());
        QuadratureGrid grid = QuadratureGrid::for_model(m);
        double worst = -INFINITY;
        for (int t = 0; t < 1000; ++t) {
            ChargeLaw law = t % 2 ? ChargeLaw::rademacher() : gen::charge_law(g);
            m.charge_law = law;
            auto cfg = gen::configuration(g, m.window(), law, 30);
            worst = std::max(worst, std::abs(energy(cfg, m, grid)) - stability_bound(cfg, m, grid));
        }
        CHECK(worst <= 1e-6);
    }
}

TEST_CASE("energy is invariant under permutation of the particle list")
{
    gen::Gen g(66);
    ModelSpec m = gen::default_model(EnergyDensity::sqrt_saturating_gauged());
    QuadratureGrid grid = QuadratureGrid::for_model(m);
    for (int t = 0; t < 50; ++t) {
        auto cfg = gen::configuration(g, m.window(), m.charge_law, 20);
        std::vector<Particle> ps(cfg.particles().begin(), cfg.particles().end());
        std::shuffle(ps.begin(), ps.end(), g.rng);
        Configuration perm(cfg.window());
        for (const auto& p : ps) perm.insert(p);
        CHECK(energy(perm, m, grid) == doctest::Approx(energy(cfg, m, grid)).epsilon(1e-12).scale(1.0));
    }
}

TEST_CASE("joint translation of particles and cutoff leaves the energy unchanged")
{
    gen::Gen g(77);
    for (int d : {1, 2}) {
        ModelSpec m = gen::model(d, Kernel::tent(d, 1.0), EnergyDensity::logcosh_gauged(), ChargeLaw::rademacher(),
                                 1.0, 1.0, 0.5);
        QuadratureGrid grid = QuadratureGrid::for_model(m, d == 1 ? 0.0 : 0.1);
        for (int t = 0; t < 20; ++t) {
            Point shift{g.uniform(-3, 3), d == 2 ? g.uniform(-3, 3) : 0.0};
            ModelSpec ms = m;
            ms.cutoff = m.cutoff.shifted(shift);
            QuadratureGrid gs = QuadratureGrid::for_model(ms, d == 1 ? 0.0 : 0.1);
            auto cfg = gen::configuration(g, m.window(), m.charge_law, 12);
            CHECK(energy(cfg.translated(shift), ms, gs) ==
                  doctest::Approx(energy(cfg, m, grid)).epsilon(1e-9).scale(1.0));
        }
    }
}

TEST_CASE("midpoint rule converges at second order")
{
    // smooth integrand: gaussian kernel; the cutoff kinks sit on cell faces
    ModelSpec m = gen::model(1, Kernel::gaussian(1, 0.4, 2.0), EnergyDensity::logcosh_gauged(), ChargeLaw::unit(),
                             1.0, 2.0, 0.5);
    Configuration cfg(m.window());
    cfg.insert(Point{-1.3, 0}, 1.0);
    cfg.insert(Point{0.2, 0}, 1.0);
    cfg.insert(Point{0.9, 0}, 1.0);
    std::vector<double> u;
    for (double h : {0.1, 0.05, 0.025, 0.0125}) u.push_back(energy(cfg, m, QuadratureGrid(m.cutoff.support(), h)));
    double r1 = (u[0] - u[1]) / (u[1] - u[2]);
    double r2 = (u[1] - u[2]) / (u[2] - u[3]);
    CHECK(r1 == doctest::Approx(4.0).epsilon(0.15));
    CHECK(r2 == doctest::Approx(4.0).epsilon(0.15));
}

TEST_CASE("quadrature grid covers the cutoff support")
{
    ModelSpec m = gen::model(2, Kernel::tent(2, 0.8), EnergyDensity::logcosh_gauged(), ChargeLaw::unit(), 1.0, 1.3,
                             0.4);
    QuadratureGrid grid = QuadratureGrid::for_model(m);
    CHECK(grid.box().contains(m.cutoff.support()));
    CHECK(grid.spacing(0) <= QuadratureGrid::default_spacing(m) + 1e-15);
    CHECK(grid.size() == static_cast<std::size_t>(grid.count(0) * grid.count(1)));
    CHECK(QuadratureGrid::default_spacing(m) == doctest::Approx(std::min(0.8, 0.4) / 8));

    // for_nodes_near visits exactly the nodes within r
    Point x{0.37, -0.52};
    std::size_t visited = 0, expected = 0;
    grid.for_nodes_near(x, 0.6, [&](std::size_t i, const Point& p) {
        ++visited;
        CHECK(norm(grid.node(i) - p) < 1e-12);
    });
    for (std::size_t i = 0; i < grid.size(); ++i) expected += norm(grid.node(i) - x) <= 0.6;
    CHECK(visited == expected);
}

TEST_CASE("configuration CSV round trip")
{
    gen::Gen g(88);
    Box w = Box::cube(2, {}, 3.0);
    auto cfg = gen::configuration(g, w, gen::charge_law(g), 20);
    std::stringstream ss;
    write_csv(ss, cfg);
    std::string header;
    std::getline(std::stringstream(ss.str()), header);
    CHECK(header == "x1,x2,charge");
    Configuration back = read_csv(ss, w);
    REQUIRE(back.size() == cfg.size());
    for (std::size_t i = 0; i < cfg.size(); ++i) {
        CHECK(back[i].position == cfg[i].position);
        CHECK(back[i].charge == cfg[i].charge);
    }
}

TEST_CASE("configuration rejects particles outside the window")
{
    Configuration cfg(Box::cube(1, {}, 1.0));
    CHECK_THROWS(cfg.insert(Point{1.5, 0}, 1.0));
    CHECK_THROWS(cfg.insert(Point{0.5, 0}, 0.0));
}
