#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "shellac/scenario.hpp"

using namespace shellac;

namespace {

void ensure_dir(const std::string& dir) {
    if (!dir.empty()) std::filesystem::create_directories(dir);
}

int cmd_run(const std::string& scenario_path, const std::string& output_dir, bool force_dense,
            bool force_compressed, double epsilon, unsigned seed) {
    Scenario sc = load_scenario(scenario_path);
    if (force_dense) sc.dense = true;
    if (force_compressed) sc.dense = false;
    if (epsilon > 0.0) sc.epsilon = epsilon;
    ensure_dir(output_dir);

    const ResultBundle out = run_scenario(sc, output_dir, seed);
    std::cout << "samples: " << out.theta.size() << "\n";
    std::cout << "elements per wavelength: " << out.elements_per_wavelength << "\n";
    if (out.resolution_warning) {
        std::cout << "warning: fewer than 6 elements per wavelength\n";
    }
    if (out.gmres_iterations > 0) {
        std::cout << "gmres: " << out.gmres_iterations << " iterations, residual "
                  << out.gmres_residual << "\n";
    }
    std::cout << "assembly " << out.assemble_seconds << " s, solve " << out.solve_seconds << " s\n";
    if (out.max_pointwise_error) {
        std::cout << "max pointwise error vs series: " << 100.0 * *out.max_pointwise_error << " %\n";
    }
    if (!output_dir.empty()) {
        std::cout << "wrote " << output_dir << "/profile.csv, surface.vtk, run_metadata.txt\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"coupled subdivision FEM/BEM structural-acoustic solver"};
    app.require_subcommand(1);

    // run
    std::string scenario_path, output_dir;
    bool force_dense = false, force_compressed = false;
    double epsilon = -1.0;
    unsigned seed = 0;
    auto* run = app.add_subcommand("run", "run a scenario file");
    run->add_option("scenario", scenario_path, "scenario file")->required();
    run->add_option("--output-dir", output_dir, "directory for CSV/VTK/metadata outputs");
    run->add_flag("--dense", force_dense, "force dense operators");
    run->add_flag("--compressed", force_compressed, "force compressed operators");
    run->add_option("--epsilon", epsilon, "compression tolerance override");
    run->add_option("--seed", seed, "run seed recorded in the metadata");

    // mesh gen|fit|info
    auto* mesh = app.add_subcommand("mesh", "mesh utilities");
    mesh->require_subcommand(1);
    int level = 3;
    double radius = 0.5;
    bool fit_flag = false;
    std::string mesh_out, mesh_in;
    auto* gen = mesh->add_subcommand("gen", "generate an icosahedron-derived sphere control mesh");
    gen->add_option("--level", level, "subdivision levels (V = 10*4^l + 2)");
    gen->add_option("--radius", radius, "sphere radius");
    gen->add_flag("--fit", fit_flag, "L2-fit the limit surface to the sphere");
    gen->add_option("-o,--output", mesh_out, "output OFF/OBJ path")->required();
    auto* fit = mesh->add_subcommand("fit", "L2-fit a control mesh to a sphere");
    fit->add_option("input", mesh_in, "input OFF/OBJ")->required();
    fit->add_option("--radius", radius, "target sphere radius");
    fit->add_option("-o,--output", mesh_out, "output OFF/OBJ path")->required();
    auto* info = mesh->add_subcommand("info", "print mesh statistics");
    info->add_option("input", mesh_in, "input OFF/OBJ")->required();

    // analytic
    auto* analytic = app.add_subcommand("analytic", "evaluate the elastic-sphere series");
    double ka = 10.0, h = 0.05, sradius = 5.0;
    int count = 360;
    std::string mode = "total", csv_out;
    analytic->add_option("--ka", ka, "normalized wavenumber (diameter convention)");
    analytic->add_option("--thickness", h, "shell thickness (m)");
    analytic->add_option("--radius", sradius, "sample circle radius");
    analytic->add_option("--count", count, "sample count");
    analytic->add_option("--mode", mode, "total | rigid | elastic");
    analytic->add_option("-o,--output", csv_out, "CSV output path");

    // hmatrix-diag
    auto* hdiag = app.add_subcommand("hmatrix-diag", "compression diagnostics for a scenario");
    std::string hscenario, houtput;
    double heps = -1.0;
    hdiag->add_option("scenario", hscenario, "scenario file")->required();
    hdiag->add_option("--output-dir", houtput, "directory for the block-structure CSV");
    hdiag->add_option("--epsilon", heps, "compression tolerance override");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return cmd_run(scenario_path, output_dir, force_dense, force_compressed, epsilon, seed);
        if (*gen) {
            ControlMesh m = make_sphere_control_mesh(level, radius);
            if (fit_flag) m = l2_fit_to_target(m, sphere_target(Vec3::Zero(), radius));
            save_mesh(m, mesh_out);
            std::cout << "wrote " << mesh_out << " (V=" << m.vertex_count() << ", F=" << m.triangle_count() << ")\n";
            return 0;
        }
        if (*fit) {
            ControlMesh m = load_mesh(mesh_in);
            m.ensure_outward_orientation();
            m = l2_fit_to_target(m, sphere_target(Vec3::Zero(), radius));
            save_mesh(m, mesh_out);
            std::cout << "wrote " << mesh_out << "\n";
            return 0;
        }
        if (*info) {
            ControlMesh m = load_mesh(mesh_in);
            std::cout << "vertices:  " << m.vertex_count() << "\n";
            std::cout << "triangles: " << m.triangle_count() << "\n";
            std::cout << "edges:     " << m.edge_count() << "\n";
            std::cout << "genus:     " << m.genus() << "\n";
            int irregular = 0;
            for (int v = 0; v < m.vertex_count(); ++v) irregular += m.valence(v) != 6;
            std::cout << "irregular vertices: " << irregular << "\n";
            std::cout << "signed volume: " << m.signed_volume() << "\n";
            return 0;
        }
        if (*analytic) {
            SphereScatterParams params;
            params.k = ka;  // diameter 1 m
            params.h = h;
            PressureMode pmode = PressureMode::Total;
            if (mode == "rigid") pmode = PressureMode::Rigid;
            else if (mode == "elastic") pmode = PressureMode::ElasticOnly;
            else if (mode != "total") throw Error("analytic: unknown mode " + mode);
            std::ostream* os = &std::cout;
            std::ofstream file;
            if (!csv_out.empty()) {
                file.open(csv_out);
                if (!file) throw Error("cannot write " + csv_out);
                os = &file;
            }
            os->precision(17);
            *os << "theta_rad,re_p,im_p,abs_p\n";
            for (int i = 0; i < count; ++i) {
                const double th = 2.0 * kPi * i / count;
                const Complex p = sphere_pressure(params, sradius, th, pmode);
                *os << th << "," << p.real() << "," << p.imag() << "," << std::abs(p) << "\n";
            }
            return 0;
        }
        if (*hdiag) {
            Scenario sc = load_scenario(hscenario);
            if (heps > 0.0) sc.epsilon = heps;
            ensure_dir(houtput);
            std::cout << run_hmatrix_diagnostics(sc, houtput);
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
