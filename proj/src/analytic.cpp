#include "shellac/analytic.hpp"

#include <cmath>

namespace shellac {

namespace {

constexpr Complex kI{0.0, 1.0};

}  // namespace

std::vector<double> spherical_bessel_j_all(int n_max, double x) {
    std::vector<double> j(n_max + 1, 0.0);
    if (x == 0.0) {
        j[0] = 1.0;
        return j;
    }
    if (n_max == 0) {
        j[0] = std::sin(x) / x;
        return j;
    }
    // Miller downward recurrence with normalization by j0; the start order
    // must clear both the requested order and the argument.
    const int base = std::max(n_max, static_cast<int>(std::ceil(x)));
    const int start = base + 20 + static_cast<int>(std::sqrt(40.0 * (base + 1)));
    double fp = 0.0, f = 1e-300;
    std::vector<double> tmp(n_max + 1, 0.0);
    for (int n = start; n >= 1; --n) {
        const double fm = (2.0 * n + 1.0) / x * f - fp;
        fp = f;
        f = fm;
        if (n - 1 <= n_max) tmp[n - 1] = f;
        if (std::abs(f) > 1e280) {  // rescale to avoid overflow
            const double s = 1e-280;
            f *= s;
            fp *= s;
            for (double& t : tmp) t *= s;
        }
    }
    const double j0 = std::sin(x) / x;
    const double scale = j0 / tmp[0];
    for (int n = 0; n <= n_max; ++n) j[n] = tmp[n] * scale;
    return j;
}

std::vector<double> spherical_bessel_y_all(int n_max, double x) {
    if (x <= 0.0) throw Error("spherical_bessel_y: x must be positive");
    std::vector<double> y(n_max + 1);
    y[0] = -std::cos(x) / x;
    if (n_max >= 1) y[1] = -std::cos(x) / (x * x) - std::sin(x) / x;
    for (int n = 1; n < n_max; ++n) {
        y[n + 1] = (2.0 * n + 1.0) / x * y[n] - y[n - 1];
        if (std::abs(y[n + 1]) > 1e290) {
            throw Error("spherical_bessel_y: overflow at order " + std::to_string(n + 1));
        }
    }
    return y;
}

double spherical_bessel_j(int n, double x) { return spherical_bessel_j_all(n, x)[n]; }
double spherical_bessel_y(int n, double x) { return spherical_bessel_y_all(n, x)[n]; }

Complex spherical_hankel1(int n, double x) {
    return {spherical_bessel_j(n, x), spherical_bessel_y(n, x)};
}

double spherical_bessel_j_deriv(int n, double x) {
    if (n == 0) return -spherical_bessel_j(1, x);
    const auto j = spherical_bessel_j_all(n, x);
    return j[n - 1] - (n + 1.0) / x * j[n];
}

double spherical_bessel_y_deriv(int n, double x) {
    if (n == 0) return -spherical_bessel_y(1, x);
    const auto y = spherical_bessel_y_all(n, x);
    return y[n - 1] - (n + 1.0) / x * y[n];
}

Complex spherical_hankel1_deriv(int n, double x) {
    return {spherical_bessel_j_deriv(n, x), spherical_bessel_y_deriv(n, x)};
}

double legendre_p(int n, double x) {
    double p0 = 1.0;
    if (n == 0) return p0;
    double p1 = x;
    for (int k = 1; k < n; ++k) {
        const double p2 = ((2.0 * k + 1.0) * x * p1 - k * p0) / (k + 1.0);
        p0 = p1;
        p1 = p2;
    }
    return p1;
}

double compressional_speed(const SolidProperties& mat) {
    if (mat.nu < 0.0 || mat.nu >= 1.0) throw Error("compressional_speed: Poisson ratio out of range");
    return std::sqrt(mat.E / ((1.0 - mat.nu * mat.nu) * mat.rho));
}

namespace {

// Quadratic in X = Omega^2: X^2 - b X + c = 0 coefficients of the shell
// dispersion relation at mode n.
void dispersion_coeffs(int n, const SphereScatterParams& p, double& b, double& c) {
    const double a = p.series_radius();
    const double nu = p.solid.nu;
    const double lam = static_cast<double>(n) * (n + 1.0);
    const double beta2 = p.h * p.h / (12.0 * a * a);
    b = 1.0 + 3.0 * nu + lam - beta2 * (1.0 - nu - lam * lam - nu * lam);
    c = (lam - 2.0) * (1.0 - nu * nu) +
        beta2 * (lam * lam * lam - 4.0 * lam * lam + lam * (5.0 - nu * nu) - 2.0 * (1.0 - nu * nu));
}

}  // namespace

NaturalFrequencies natural_frequencies(int n, const SphereScatterParams& p) {
    double b, c;
    dispersion_coeffs(n, p, b, c);
    const double disc = b * b - 4.0 * c;
    if (disc < 0.0) throw Error("natural_frequencies: negative discriminant (unphysical parameters)");
    const double sq = std::sqrt(disc);
    // stable quadratic formula for X^2 - bX + c (b > 0 for physical modes)
    const double x2 = 0.5 * (b + sq);
    const double x1 = x2 == 0.0 ? 0.0 : c / x2;
    if (x1 < -1e-12 * std::max(1.0, std::abs(b)) || x2 < 0.0) {
        throw Error("natural_frequencies: negative Omega^2 root at mode " + std::to_string(n));
    }
    return {std::sqrt(std::max(x1, 0.0)), std::sqrt(x2)};
}

ModalImpedance modal_impedances(int n, const SphereScatterParams& p) {
    if (p.k <= 0.0) throw Error("modal_impedances: wavenumber must be positive");
    const double a = p.series_radius();
    const double omega = p.omega();
    const double cp = compressional_speed(p.solid);
    const double Omega = omega * a / cp;
    const double nu = p.solid.nu;
    const double lam = static_cast<double>(n) * (n + 1.0);
    const double beta2 = p.h * p.h / (12.0 * a * a);

    double b, c;
    dispersion_coeffs(n, p, b, c);
    const double X = Omega * Omega;
    const double numer = (X * X - b * X + c);  // = (X - O1^2)(X - O2^2)
    const double denom = X - (1.0 + beta2) * (nu + lam - 1.0);
    if (std::abs(denom) < 1e-12 * std::max(1.0, std::abs(X))) {
        throw Error("modal_impedances: impedance pole at mode " + std::to_string(n));
    }
    ModalImpedance out;
    out.Z_n = -kI * (p.solid.rho * cp / Omega) * (p.h / a) * (numer / denom);

    const double x = p.k * a;
    const Complex h = spherical_hankel1(n, x);
    const Complex hp = spherical_hankel1_deriv(n, x);
    if (std::abs(hp) < 1e-300) throw Error("modal_impedances: h_n'(ka) underflow at mode " + std::to_string(n));
    out.z_n = kI * p.fluid.rho * p.fluid.c * h / hp;
    return out;
}

Complex sphere_pressure(const SphereScatterParams& p, double r, double theta, PressureMode mode) {
    const double a = p.series_radius();
    if (r < a * (1.0 - 1e-12)) throw Error("sphere_pressure: sample point inside the shell");
    const double x = p.k * a;    // surface argument
    const double xr = p.k * r;   // field argument
    const int n_max = p.n_trunc > 0 ? p.n_trunc : static_cast<int>(std::ceil(p.k * p.a)) + 40;

    const auto ja = spherical_bessel_j_all(n_max + 1, x);
    const auto ya = spherical_bessel_y_all(n_max + 1, x);
    const auto jr = spherical_bessel_j_all(n_max + 1, xr);
    const auto yr = spherical_bessel_y_all(n_max + 1, xr);

    const double ct = std::cos(theta);
    const double rhoc = p.fluid.rho * p.fluid.c;

    Complex scat = 0.0, ela = 0.0;
    Complex in = std::pow(kI, p.first_mode);  // running i^n
    int converged_run = 0;
    for (int n = p.first_mode; n <= n_max; ++n) {
        const double jp = (n == 0 ? -ja[1] : ja[n - 1] - (n + 1.0) / x * ja[n]);
        const double yp = (n == 0 ? -ya[1] : ya[n - 1] - (n + 1.0) / x * ya[n]);
        const Complex hs{ja[n], ya[n]};
        const Complex hps{jp, yp};
        const Complex hr{jr[n], yr[n]};
        const double Pn = legendre_p(n, ct);
        const double cn = 2.0 * n + 1.0;

        const Complex term_scat = -in * cn * (jp / hps) * Pn * hr;
        Complex term_ela = 0.0;
        if (mode != PressureMode::Rigid) {
            const auto z = modal_impedances(n, p);
            term_ela = in * cn * rhoc / ((z.Z_n + z.z_n) * (x * hps) * (x * hps)) * Pn * hr;
        }
        scat += term_scat;
        ela += term_ela;

        const double tmag = std::abs(term_scat) + std::abs(term_ela);
        const double smag = std::abs(scat) + std::abs(ela);
        if (n > x && tmag <= 1e-12 * smag) {
            if (++converged_run >= 3) break;
        } else {
            converged_run = 0;
        }
        if (n == n_max) {
            throw Error("sphere_pressure: series not converged at n_trunc (last term " + std::to_string(tmag) + ")");
        }
        in *= kI;
    }

    // incidence along +x; theta measured from the incidence direction
    const Complex pinc = p.p0 * std::exp(kI * (p.k * r * ct));
    Complex total = p.p0 * scat;
    if (mode == PressureMode::ElasticOnly) return p.p0 * ela;
    if (mode == PressureMode::Total) total += p.p0 * ela;
    return total + pinc;
}

std::vector<Complex> sphere_pressure_circle(const SphereScatterParams& p, double r, int count,
                                            PressureMode mode) {
    std::vector<Complex> out(count);
    for (int i = 0; i < count; ++i) {
        out[i] = sphere_pressure(p, r, 2.0 * kPi * i / count, mode);
    }
    return out;
}

}  // namespace shellac
