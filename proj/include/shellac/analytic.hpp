#pragma once

#include <vector>

#include "shellac/core.hpp"

namespace shellac {

// Spherical Bessel/Hankel functions and Legendre polynomials; orders needed
// here stay below ~ kr + 60 where upward/downward recurrences are reliable.
double spherical_bessel_j(int n, double x);
double spherical_bessel_y(int n, double x);
Complex spherical_hankel1(int n, double x);
// derivative identity f' = f_{n-1} - (n+1)/x f_n
double spherical_bessel_j_deriv(int n, double x);
double spherical_bessel_y_deriv(int n, double x);
Complex spherical_hankel1_deriv(int n, double x);
double legendre_p(int n, double x);

// Batch evaluation 0..n_max (cheaper and used by the series).
std::vector<double> spherical_bessel_j_all(int n_max, double x);
std::vector<double> spherical_bessel_y_all(int n_max, double x);

struct FluidProperties {
    double rho = 1000.0;  // kg/m^3
    double c = 1482.0;    // m/s
};

struct SolidProperties {
    double rho = 7860.0;   // kg/m^3
    double E = 210e9;      // Pa
    double nu = 0.3;
};

// Plane-wave scattering by a thin elastic spherical shell.
// `a` is the sphere diameter (the convention the normalized wavenumber labels
// follow: ka = k * a). The classical series internally uses the shell radius
// a/2 in every Bessel-argument / impedance slot; set use_radius_in_series =
// false to reproduce the source text literally (diameter in those slots),
// which does not match the coupled solution and exists for comparison only.
struct SphereScatterParams {
    double a = 1.0;    // sphere diameter (m)
    double h = 0.05;   // shell thickness (m)
    FluidProperties fluid;
    SolidProperties solid;
    double p0 = 1.0;   // incident amplitude (Pa)
    double k = 10.0;   // wavenumber (1/m)
    int first_mode = 0;        // series lower limit (0 standard; 1 as printed in the source)
    bool use_radius_in_series = true;
    int n_trunc = -1;          // -1: ceil(k*a) + 40

    double omega() const { return k * fluid.c; }
    double series_radius() const { return use_radius_in_series ? 0.5 * a : a; }
};

double compressional_speed(const SolidProperties& mat);

// Quartic dispersion relation for the shell: roots (Omega_n^(1), Omega_n^(2))
// sorted ascending. Throws if a root is non-physical (negative Omega^2), as
// happens for n = 0.
struct NaturalFrequencies {
    double omega1, omega2;
};
NaturalFrequencies natural_frequencies(int n, const SphereScatterParams& p);

// In-vacuo shell impedance Z_n and specific acoustic impedance z_n at the
// driving frequency of p.k.
struct ModalImpedance {
    Complex Z_n, z_n;
};
ModalImpedance modal_impedances(int n, const SphereScatterParams& p);

enum class PressureMode { Rigid, ElasticOnly, Total };

// Series evaluation of the pressure at polar point (r, theta), theta measured
// from the incidence direction. Rigid: p_inc + p_scat; Total adds p_ela.
Complex sphere_pressure(const SphereScatterParams& p, double r, double theta, PressureMode mode);

// Full sample circle at radius r: theta_i = 2 pi i / count.
std::vector<Complex> sphere_pressure_circle(const SphereScatterParams& p, double r, int count,
                                            PressureMode mode);

}  // namespace shellac
