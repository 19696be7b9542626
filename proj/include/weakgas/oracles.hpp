#pragma once

#include <complex>
#include <functional>
#include <vector>

#include "weakgas/configuration.hpp"
#include "weakgas/observables.hpp"

namespace weakgas {

/// Integral of f over `box`, split at the given breakpoints per axis and
/// integrated piecewise with adaptive Gauss-Kronrod (nested in d = 2).
double integrate_box(const Box& box, const std::function<double(const Point&)>& f,
                     const std::vector<double>& breaks0 = {}, const std::vector<double>& breaks1 = {},
                     double tol = 1e-12);

/// Closed forms for the marked Poisson gas of activity z and charge law r.
///
///   free Laplace:  E exp(<|eta|, h> + c <eta, f>) = exp(z int sum_i p_i [e^{|s_i| h + c s_i f} - 1] dy)
///   free char.:    E exp(i <eta, f>) = exp(z int sum_i p_i [e^{i s_i f} - 1] dy)
///
/// Only z, r and the dimension of the model are used.
double free_laplace_oracle(const ModelSpec& model, const TestFunction& h, const TestFunction& f);
std::complex<double> free_laplace_oracle(const ModelSpec& model, const TestFunction& h, const TestFunction& f,
                                         std::complex<double> c);
std::complex<double> free_char_oracle(const ModelSpec& model, const TestFunction& f);

/// Laplace functional of the tilted free gas, the marked Poisson process with
/// intensity z e^{s b (G*g)(y)} dr(s) dy, where G*g uses the energy quadrature:
///   exp(z int sum_i p_i e^{s_i b (G*g)} [e^{|s_i| h + s_i f} - 1] dy)
double tilted_laplace_oracle(const ModelSpec& model, const QuadratureGrid& grid, double b, const TestFunction& h,
                             const TestFunction& f);

/// M = K * E_tilted exp(<|eta|, h>), the bound for observables with |F| <= K e^{<|eta|, h>}.
double tilted_bound_oracle(const ModelSpec& model, const QuadratureGrid& grid, double b, const TestFunction& h,
                           double K);

/// K exp(z int (e^{C h} - 1) dy * e^{C b beta ||G||_1}), a bound depending on
/// the cutoff only through beta.
double uniform_bound(const ModelSpec& model, double b, const TestFunction& h, double K);

/// z sum_i s_i p_i e^{s_i b (G*g)(y)}, the mean charge density of the tilted gas.
double tilted_charge_density(const ModelSpec& model, const CutoffConvolution& conv, double b, const Point& y);

/// Mean of <eta, h> under the free gas: z E_r[s] int h.
double free_mean_pairing(const ModelSpec& model, const TestFunction& h);

}  // namespace weakgas
