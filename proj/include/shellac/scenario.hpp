#pragma once

#include <optional>
#include <string>

#include "shellac/analytic.hpp"
#include "shellac/coupling.hpp"
#include "shellac/hmatrix.hpp"
#include "shellac/meshio.hpp"

namespace shellac {

// Scenario description, parsed from the sectioned key = value text format
// documented in the README.
struct Scenario {
    enum class MeshSource { GeneratedSphere, File };
    enum class FitTarget { None, Sphere };
    enum class StudyKind { Rigid, Coupled, AnalyticOnly };

    MeshSource mesh_source = MeshSource::GeneratedSphere;
    int sphere_level = 3;
    std::string mesh_path;
    FitTarget fit = FitTarget::Sphere;
    double fit_radius = 0.5;
    Vec3 fit_center = Vec3::Zero();

    ShellMaterial material;
    FluidProperties fluid;

    double ka = 10.0;          // k * (1 m reference diameter); k wins if set
    std::optional<double> k_override;
    Vec3 direction{1, 0, 0};
    double amplitude = 1.0;

    StudyKind kind = StudyKind::Coupled;
    Complex admittance{0.0, 0.0};

    double sample_radius = 5.0;
    int sample_count = 0;  // 0: 360 scaled to >= 12 per wavelength of arc

    bool dense = true;
    double epsilon = 1e-6;
    double gmres_tol = 1e-8;
    int gmres_restart = 100;
    int gmres_max_iterations = 1000;

    double wavenumber() const { return k_override ? *k_override : ka; }
    int effective_sample_count() const;
    void validate() const;
};

Scenario parse_scenario_text(const std::string& text, const std::string& origin = "<memory>");
Scenario load_scenario(const std::string& path);

struct ResultBundle {
    std::vector<double> theta;       // [0, 2 pi)
    std::vector<Complex> pressure;   // sampled total pressure
    std::vector<double> magnitude;   // |p| per angle

    // surface fields, one value per control vertex
    std::vector<double> surface_re_p, surface_abs_p, surface_abs_u;
    std::vector<double> surface_re_ux, surface_re_uy, surface_re_uz;

    double elements_per_wavelength = 0.0;
    bool resolution_warning = false;    // < 6 elements per wavelength
    int gmres_iterations = 0;
    double gmres_residual = 0.0;
    std::optional<double> max_pointwise_error;  // vs analytic oracle when defined
    double assemble_seconds = 0.0;
    double solve_seconds = 0.0;
    std::size_t operator_bytes = 0;
    double compression_ratio = 1.0;     // compressed storage / dense
};

// max_s | |p_h(s)| - |p(s)| | / |p(s)|
double compute_max_pointwise_error(const std::vector<Complex>& numeric,
                                   const std::vector<Complex>& oracle);

// Runs a scenario; when output_dir is non-empty writes profile.csv,
// surface.vtk and run_metadata.txt there. Deterministic for a fixed scenario
// and seed.
ResultBundle run_scenario(const Scenario& sc, const std::string& output_dir = "",
                          unsigned seed = 0);

// H-matrix diagnostics for the scenario's operator: block structure CSV plus
// a stats summary returned as text.
std::string run_hmatrix_diagnostics(const Scenario& sc, const std::string& output_dir);

}  // namespace shellac
