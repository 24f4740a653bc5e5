#include "shellac/scenario.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace shellac {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct KeyValue {
    std::map<std::string, std::string> entries;  // "section.key" -> value
    std::string origin;

    bool has(const std::string& key) const { return entries.count(key) > 0; }
    std::string get(const std::string& key, const std::string& fallback) const {
        auto it = entries.find(key);
        return it == entries.end() ? fallback : it->second;
    }
    double num(const std::string& key, double fallback) const {
        auto it = entries.find(key);
        if (it == entries.end()) return fallback;
        try {
            std::size_t pos = 0;
            const double v = std::stod(it->second, &pos);
            while (pos < it->second.size() && std::isspace(static_cast<unsigned char>(it->second[pos]))) ++pos;
            if (pos != it->second.size()) throw std::invalid_argument("trailing");
            return v;
        } catch (const std::exception&) {
            throw Error(origin + ": bad numeric value for '" + key + "': " + it->second);
        }
    }
    Vec3 vec(const std::string& key, const Vec3& fallback) const {
        auto it = entries.find(key);
        if (it == entries.end()) return fallback;
        std::istringstream ls(it->second);
        Vec3 v;
        if (!(ls >> v[0] >> v[1] >> v[2])) {
            throw Error(origin + ": bad vector value for '" + key + "'");
        }
        return v;
    }
};

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

KeyValue parse_key_values(const std::string& text, const std::string& origin) {
    KeyValue kv;
    kv.origin = origin;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw Error(origin + ":" + std::to_string(lineno) + ": unterminated section header");
            }
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw Error(origin + ":" + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw Error(origin + ":" + std::to_string(lineno) + ": empty key");
        }
        if (section.empty()) {
            throw Error(origin + ":" + std::to_string(lineno) + ": key outside any [section]");
        }
        kv.entries[section + "." + key] = value;
    }
    return kv;
}

}  // namespace

int Scenario::effective_sample_count() const {
    if (sample_count > 0) return sample_count;
    const int per_wave = static_cast<int>(std::ceil(12.0 * wavenumber() * sample_radius));
    return std::max(360, per_wave);
}

void Scenario::validate() const {
    if (wavenumber() <= 0.0) throw Error("scenario: ka (or k) must be positive");
    if (mesh_source == MeshSource::File && mesh_path.empty()) {
        throw Error("scenario: mesh source is a file but no path given");
    }
    if (sample_radius <= 0.0) throw Error("scenario: sampling radius must be positive");
    material.validate();
    if (std::abs(direction.norm() - 1.0) > 1e-9) {
        throw Error("scenario: wave direction must be a unit vector");
    }
}

Scenario parse_scenario_text(const std::string& text, const std::string& origin) {
    const KeyValue kv = parse_key_values(text, origin);
    Scenario sc;

    const std::string source = kv.get("mesh.source", "sphere");
    if (source == "sphere") {
        sc.mesh_source = Scenario::MeshSource::GeneratedSphere;
    } else if (source == "file") {
        sc.mesh_source = Scenario::MeshSource::File;
    } else {
        throw Error(origin + ": mesh.source must be 'sphere' or 'file'");
    }
    sc.sphere_level = static_cast<int>(kv.num("mesh.level", 3));
    sc.mesh_path = kv.get("mesh.path", "");
    const std::string fit = kv.get("mesh.fit", source == "sphere" ? "sphere" : "none");
    if (fit == "none") {
        sc.fit = Scenario::FitTarget::None;
    } else if (fit == "sphere") {
        sc.fit = Scenario::FitTarget::Sphere;
    } else {
        throw Error(origin + ": mesh.fit must be 'none' or 'sphere'");
    }
    sc.fit_radius = kv.num("mesh.fit_radius", 0.5);
    sc.fit_center = kv.vec("mesh.fit_center", Vec3::Zero());

    sc.material.E = kv.num("material.E", 210e9);
    sc.material.nu = kv.num("material.nu", 0.3);
    sc.material.rho = kv.num("material.rho_s", 7860.0);
    sc.material.h = kv.num("material.h", 0.05);
    sc.material.c1 = kv.num("material.c1", 0.0);
    sc.material.c2 = kv.num("material.c2", 0.0);

    sc.fluid.rho = kv.num("fluid.rho_f", 1000.0);
    sc.fluid.c = kv.num("fluid.c", 1482.0);

    sc.ka = kv.num("wave.ka", 10.0);
    if (kv.has("wave.k")) sc.k_override = kv.num("wave.k", 0.0);
    sc.direction = kv.vec("wave.direction", Vec3(1, 0, 0)).normalized();
    sc.amplitude = kv.num("wave.amplitude", 1.0);

    const std::string kind = kv.get("study.kind", "coupled");
    if (kind == "rigid") {
        sc.kind = Scenario::StudyKind::Rigid;
    } else if (kind == "coupled") {
        sc.kind = Scenario::StudyKind::Coupled;
    } else if (kind == "analytic") {
        sc.kind = Scenario::StudyKind::AnalyticOnly;
    } else {
        throw Error(origin + ": study.kind must be rigid | coupled | analytic");
    }
    sc.admittance = Complex(kv.num("study.admittance_re", 0.0), kv.num("study.admittance_im", 0.0));

    sc.sample_radius = kv.num("sampling.radius", 5.0);
    sc.sample_count = static_cast<int>(kv.num("sampling.count", 0));

    const std::string dense = kv.get("solver.dense", "true");
    sc.dense = dense == "true" || dense == "1" || dense == "yes";
    sc.epsilon = kv.num("solver.epsilon", 1e-6);
    sc.gmres_tol = kv.num("solver.gmres_tol", 1e-8);
    sc.gmres_restart = static_cast<int>(kv.num("solver.gmres_restart", 100));
    sc.gmres_max_iterations = static_cast<int>(kv.num("solver.gmres_max_iterations", 1000));

    sc.validate();
    return sc;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open scenario " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_scenario_text(buf.str(), path);
}

double compute_max_pointwise_error(const std::vector<Complex>& numeric,
                                   const std::vector<Complex>& oracle) {
    if (numeric.size() != oracle.size()) {
        throw Error("compute_max_pointwise_error: sample sets differ in size");
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
        const double ref = std::abs(oracle[i]);
        if (ref == 0.0) {
            throw Error("compute_max_pointwise_error: oracle vanishes at sample " +
                        std::to_string(i) + "; relocate the sample");
        }
        worst = std::max(worst, std::abs(std::abs(numeric[i]) - ref) / ref);
    }
    return worst;
}

namespace {

ControlMesh build_scenario_mesh(const Scenario& sc) {
    ControlMesh mesh = sc.mesh_source == Scenario::MeshSource::GeneratedSphere
                           ? make_sphere_control_mesh(sc.sphere_level, sc.fit_radius)
                           : load_mesh(sc.mesh_path);
    mesh.ensure_outward_orientation();
    if (sc.fit == Scenario::FitTarget::Sphere) {
        mesh = l2_fit_to_target(mesh, sphere_target(sc.fit_center, sc.fit_radius));
    }
    return mesh;
}

void write_outputs(const Scenario& sc, const std::string& dir, unsigned seed,
                   const ResultBundle& out, const SubdivisionSurface* surf) {
    if (dir.empty()) return;
    {
        std::ofstream csv(dir + "/profile.csv");
        if (!csv) throw Error("cannot write " + dir + "/profile.csv");
        csv << "theta_rad,re_p,im_p,abs_p\n";
        csv.precision(17);
        for (std::size_t i = 0; i < out.theta.size(); ++i) {
            csv << out.theta[i] << "," << out.pressure[i].real() << "," << out.pressure[i].imag()
                << "," << out.magnitude[i] << "\n";
        }
    }
    if (surf) {
        std::vector<VtkPointData> fields;
        fields.push_back({"re_p", out.surface_re_p});
        fields.push_back({"abs_p", out.surface_abs_p});
        fields.push_back({"abs_u", out.surface_abs_u});
        fields.push_back({"re_ux", out.surface_re_ux});
        fields.push_back({"re_uy", out.surface_re_uy});
        fields.push_back({"re_uz", out.surface_re_uz});
        save_vtk_surface(*surf, dir + "/surface.vtk", fields);
    }
    {
        std::ofstream meta(dir + "/run_metadata.txt");
        meta.precision(12);
        meta << "k = " << sc.wavenumber() << "\n";
        meta << "ka = " << sc.wavenumber() << "  # reference diameter 1 m\n";
        meta << "seed = " << seed << "\n";
        meta << "samples = " << out.theta.size() << "\n";
        meta << "elements_per_wavelength = " << out.elements_per_wavelength << "\n";
        if (out.resolution_warning) {
            meta << "warning = fewer than 6 elements per wavelength\n";
        }
        meta << "gmres_iterations = " << out.gmres_iterations << "\n";
        meta << "gmres_residual = " << out.gmres_residual << "\n";
        meta << "assemble_seconds = " << out.assemble_seconds << "\n";
        meta << "solve_seconds = " << out.solve_seconds << "\n";
        meta << "operator_bytes = " << out.operator_bytes << "\n";
        meta << "compression_ratio = " << out.compression_ratio << "\n";
        if (out.max_pointwise_error) {
            meta << "max_pointwise_error = " << *out.max_pointwise_error << "\n";
        }
    }
}

}  // namespace

ResultBundle run_scenario(const Scenario& sc, const std::string& output_dir, unsigned seed) {
    sc.validate();
    ResultBundle out;
    const double k = sc.wavenumber();
    const int nsamp = sc.effective_sample_count();
    out.theta.resize(nsamp);
    for (int i = 0; i < nsamp; ++i) out.theta[i] = 2.0 * kPi * i / nsamp;

    // analytic oracle availability: generated sphere fitted to itself
    const bool oracle_defined = sc.mesh_source == Scenario::MeshSource::GeneratedSphere &&
                                sc.fit == Scenario::FitTarget::Sphere &&
                                sc.fit_center.isZero(0.0);
    SphereScatterParams params;
    params.a = 2.0 * sc.fit_radius;
    params.h = sc.material.h;
    params.fluid = sc.fluid;
    params.solid.E = sc.material.E;
    params.solid.nu = sc.material.nu;
    params.solid.rho = sc.material.rho;
    params.p0 = sc.amplitude;
    params.k = k;

    if (sc.kind == Scenario::StudyKind::AnalyticOnly) {
        if (!oracle_defined && sc.mesh_source != Scenario::MeshSource::GeneratedSphere) {
            throw Error("analytic study requires the generated-sphere scenario");
        }
        out.pressure.resize(nsamp);
        for (int i = 0; i < nsamp; ++i) {
            out.pressure[i] = sphere_pressure(params, sc.sample_radius, out.theta[i], PressureMode::Total);
        }
        out.magnitude.resize(nsamp);
        for (int i = 0; i < nsamp; ++i) out.magnitude[i] = std::abs(out.pressure[i]);
        write_outputs(sc, output_dir, seed, out, nullptr);
        return out;
    }

    const auto t0 = Clock::now();
    const ControlMesh mesh = build_scenario_mesh(sc);
    SubdivisionSurface surf(mesh);
    BemAssembler bem(surf);
    const int n = bem.size();

    WaveContext ctx;
    ctx.k = k;
    ctx.c = sc.fluid.c;
    ctx.rho_f = sc.fluid.rho;
    ctx.amplitude = sc.amplitude;
    ctx.direction = sc.direction;

    out.elements_per_wavelength = (2.0 * kPi / k) / bem.mean_edge_length();
    out.resolution_warning = out.elements_per_wavelength < 6.0;

    // operators (dense or compressed)
    Eigen::MatrixXcd Hd, Gd;
    std::unique_ptr<Eigen::PartialPivLU<Eigen::MatrixXcd>> hd_lu;
    std::optional<ClusterTree> tree;
    std::optional<HMatrix> Hc, Gc;
    std::unique_ptr<HluPreconditioner> hlu;

    CoupledOperators ops;
    ops.size = n;
    ops.rho_f = sc.fluid.rho;
    ops.omega = ctx.omega();
    ops.y_factor = AdmittanceModel{sc.admittance}.y_factor(ctx.omega(), sc.fluid.rho);

    if (sc.dense) {
        bem.assemble(ctx, &Hd, &Gd);
        hd_lu = std::make_unique<Eigen::PartialPivLU<Eigen::MatrixXcd>>(Hd);
        ops.apply_H = [&Hd](const Eigen::VectorXcd& v) { return (Hd * v).eval(); };
        ops.apply_G = [&Gd](const Eigen::VectorXcd& v) { return (Gd * v).eval(); };
        ops.precond = [&hd_lu](const Eigen::VectorXcd& v) { return hd_lu->solve(v).eval(); };
        out.operator_bytes = 2 * sizeof(Complex) * static_cast<std::size_t>(n) * n;
        out.compression_ratio = 1.0;
    } else {
        tree = build_cluster_tree(bem.collocation().points, basis_support_boxes(bem), 32);
        HMatrixOptions hopts;
        hopts.eps = sc.epsilon;
        Hc = build_hmatrix(*tree, bem_h_oracle(bem, ctx), hopts);
        Gc = build_hmatrix(*tree, bem_g_oracle(bem, ctx), hopts);
        hlu = std::make_unique<HluPreconditioner>(*Hc);
        ops.apply_H = [&Hc](const Eigen::VectorXcd& v) { return Hc->matvec(v); };
        ops.apply_G = [&Gc](const Eigen::VectorXcd& v) { return Gc->matvec(v); };
        ops.precond = [&hlu](const Eigen::VectorXcd& v) { return hlu->solve(v); };
        out.operator_bytes = sizeof(Complex) * (Hc->stored_scalars() + Gc->stored_scalars());
        out.compression_ratio = 0.5 * (Hc->compression_ratio() + Gc->compression_ratio());
    }
    out.assemble_seconds = seconds_since(t0);

    const auto t1 = Clock::now();
    const Eigen::VectorXcd pinc = bem.incident_vector(ctx);
    Eigen::VectorXcd p(n), q(n), u;
    if (sc.kind == Scenario::StudyKind::Rigid) {
        // acoustically hard: q = 0, H p = p_inc
        q = Eigen::VectorXcd::Zero(n);
        u = Eigen::VectorXcd::Zero(3 * n);
        if (sc.dense) {
            p = hd_lu->solve(pinc);
        } else {
            GmresOptions gopts;
            gopts.tol = sc.gmres_tol;
            gopts.restart = sc.gmres_restart;
            gopts.max_iterations = sc.gmres_max_iterations;
            Eigen::VectorXcd x;
            const GmresResult res = gmres(ops.apply_H, ops.precond, pinc, x, gopts);
            if (!res.converged) throw Error("rigid solve: GMRES did not converge");
            p = x;
            out.gmres_iterations = res.iterations;
            out.gmres_residual = res.residual;
        }
    } else {
        const TransferOperators transfer = build_transfer(surf, bem.collocation());
        const SparseReal K = assemble_stiffness(surf, sc.material);
        const SparseReal M = assemble_mass(surf, sc.material);
        const ShellOperator shell(K, M, sc.material, ctx.omega());
        ops.transfer = &transfer;
        ops.shell = &shell;
        GmresOptions gopts;
        gopts.tol = sc.gmres_tol;
        gopts.restart = sc.gmres_restart;
        gopts.max_iterations = sc.gmres_max_iterations;
        const CoupledState state = solve_coupled(ops, pinc, Eigen::VectorXcd(), gopts);
        p = state.p;
        q = state.q;
        u = state.u;
        out.gmres_iterations = state.iterations;
        out.gmres_residual = state.residual;
    }
    out.solve_seconds = seconds_since(t1);

    // far-field samples on the x-y circle
    std::vector<Vec3> pts(nsamp);
    for (int i = 0; i < nsamp; ++i) {
        pts[i] = Vec3(sc.sample_radius * std::cos(out.theta[i]),
                      sc.sample_radius * std::sin(out.theta[i]), 0.0);
    }
    const auto ext = bem.exterior_pressure(ctx, p, q, pts);
    out.pressure = ext.values;
    out.magnitude.resize(nsamp);
    for (int i = 0; i < nsamp; ++i) out.magnitude[i] = std::abs(out.pressure[i]);

    // surface fields at the collocation points (basis-weighted trace)
    out.surface_re_p.resize(n);
    out.surface_abs_p.resize(n);
    out.surface_abs_u.resize(n);
    out.surface_re_ux.resize(n);
    out.surface_re_uy.resize(n);
    out.surface_re_uz.resize(n);
    for (int v = 0; v < n; ++v) {
        const PatchBasis basis = surf.vertex_limit_basis(v);
        Complex pv = 0.0;
        Eigen::Vector3cd uv = Eigen::Vector3cd::Zero();
        for (int a = 0; a < basis.n_v; ++a) {
            pv += basis.values[a] * p(basis.vertices[a]);
            for (int i = 0; i < 3; ++i) uv(i) += basis.values[a] * u(3 * basis.vertices[a] + i);
        }
        out.surface_re_p[v] = pv.real();
        out.surface_abs_p[v] = std::abs(pv);
        out.surface_abs_u[v] = uv.norm();
        out.surface_re_ux[v] = uv(0).real();
        out.surface_re_uy[v] = uv(1).real();
        out.surface_re_uz[v] = uv(2).real();
    }

    if (oracle_defined) {
        std::vector<Complex> ref(nsamp);
        const PressureMode mode =
            sc.kind == Scenario::StudyKind::Rigid ? PressureMode::Rigid : PressureMode::Total;
        // theta in the series is measured from the incidence direction
        for (int i = 0; i < nsamp; ++i) {
            const double ct = sc.direction.dot(pts[i]) / pts[i].norm();
            ref[i] = sphere_pressure(params, sc.sample_radius, std::acos(std::clamp(ct, -1.0, 1.0)),
                                     mode);
        }
        out.max_pointwise_error = compute_max_pointwise_error(out.pressure, ref);
    }

    write_outputs(sc, output_dir, seed, out, &surf);
    return out;
}

std::string run_hmatrix_diagnostics(const Scenario& sc, const std::string& output_dir) {
    sc.validate();
    const ControlMesh mesh = build_scenario_mesh(sc);
    SubdivisionSurface surf(mesh);
    BemAssembler bem(surf);
    WaveContext ctx;
    ctx.k = sc.wavenumber();
    ctx.c = sc.fluid.c;
    ctx.rho_f = sc.fluid.rho;
    ctx.direction = sc.direction;

    const ClusterTree tree = build_cluster_tree(bem.collocation().points, basis_support_boxes(bem), 32);
    HMatrixOptions hopts;
    hopts.eps = sc.epsilon;
    const HMatrix h = build_hmatrix(tree, bem_h_oracle(bem, ctx), hopts);
    if (!output_dir.empty()) h.dump_structure_csv(output_dir + "/hmatrix_blocks.csv");

    std::ostringstream os;
    os << "collocation points: " << bem.size() << "\n";
    os << "tree depth: " << tree.depth() << ", max leaf: " << tree.max_leaf_size() << "\n";
    os << "blocks: " << h.admissible_blocks() << " low-rank, " << h.dense_blocks() << " dense\n";
    os << "stored scalars: " << h.stored_scalars() << " (" << 100.0 * h.compression_ratio()
       << "% of dense)\n";
    return os.str();
}

}  // namespace shellac
