#include "shellac/meshio.hpp"

#include <Eigen/SparseCholesky>

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "shellac/quadrature.hpp"

namespace shellac {

namespace {

std::string lowercase_ext(const std::string& path) {
    const auto dot = path.find_last_of('.');
    if (dot == std::string::npos) return "";
    std::string ext = path.substr(dot + 1);
    for (char& c : ext) c = static_cast<char>(std::tolower(c));
    return ext;
}

[[noreturn]] void parse_fail(const std::string& path, int line, const std::string& msg) {
    std::ostringstream os;
    os << path << ":" << line << ": " << msg;
    throw Error(os.str());
}

ControlMesh load_off(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    std::string token;
    int lineno = 0;
    auto next_line = [&](std::string& out) {
        while (std::getline(in, out)) {
            ++lineno;
            const auto hash = out.find('#');
            if (hash != std::string::npos) out.erase(hash);
            if (out.find_first_not_of(" \t\r\n") != std::string::npos) return true;
        }
        return false;
    };
    std::string line;
    if (!next_line(line)) parse_fail(path, lineno, "empty OFF file");
    {
        std::istringstream ls(line);
        ls >> token;
        if (token != "OFF") parse_fail(path, lineno, "missing OFF header");
    }
    if (!next_line(line)) parse_fail(path, lineno, "missing count line");
    int nv = 0, nf = 0, ne = 0;
    {
        std::istringstream ls(line);
        if (!(ls >> nv >> nf >> ne)) parse_fail(path, lineno, "bad count line");
    }
    std::vector<Vec3> verts(nv);
    for (int i = 0; i < nv; ++i) {
        if (!next_line(line)) parse_fail(path, lineno, "unexpected end of vertex list");
        std::istringstream ls(line);
        if (!(ls >> verts[i][0] >> verts[i][1] >> verts[i][2])) {
            parse_fail(path, lineno, "bad vertex line");
        }
    }
    std::vector<std::array<int, 3>> tris(nf);
    for (int i = 0; i < nf; ++i) {
        if (!next_line(line)) parse_fail(path, lineno, "unexpected end of face list");
        std::istringstream ls(line);
        int cnt = 0;
        if (!(ls >> cnt)) parse_fail(path, lineno, "bad face line");
        if (cnt != 3) {
            parse_fail(path, lineno,
                       "face " + std::to_string(i) + " has " + std::to_string(cnt) + " vertices; triangles only");
        }
        if (!(ls >> tris[i][0] >> tris[i][1] >> tris[i][2])) parse_fail(path, lineno, "bad face indices");
    }
    try {
        return ControlMesh(std::move(verts), std::move(tris));
    } catch (const Error& e) {
        throw Error(path + ": " + e.what());
    }
}

ControlMesh load_obj(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    std::vector<Vec3> verts;
    std::vector<std::array<int, 3>> tris;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag) || tag[0] == '#') continue;
        if (tag == "v") {
            Vec3 p;
            if (!(ls >> p[0] >> p[1] >> p[2])) parse_fail(path, lineno, "bad vertex");
            verts.push_back(p);
        } else if (tag == "f") {
            std::vector<int> idx;
            std::string item;
            while (ls >> item) {
                // accept v, v/vt, v/vt/vn, v//vn
                const auto slash = item.find('/');
                idx.push_back(std::stoi(item.substr(0, slash)));
            }
            if (idx.size() != 3) {
                parse_fail(path, lineno, "face with " + std::to_string(idx.size()) + " vertices; triangles only");
            }
            std::array<int, 3> t{};
            for (int k = 0; k < 3; ++k) {
                const int raw = idx[k];
                t[k] = raw > 0 ? raw - 1 : static_cast<int>(verts.size()) + raw;
            }
            tris.push_back(t);
        }
    }
    try {
        return ControlMesh(std::move(verts), std::move(tris));
    } catch (const Error& e) {
        throw Error(path + ": " + e.what());
    }
}

void save_off(const ControlMesh& mesh, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << "OFF\n" << mesh.vertex_count() << " " << mesh.triangle_count() << " " << mesh.edge_count() << "\n";
    out.precision(17);
    for (const auto& p : mesh.vertices) out << p[0] << " " << p[1] << " " << p[2] << "\n";
    for (const auto& t : mesh.triangles) out << "3 " << t[0] << " " << t[1] << " " << t[2] << "\n";
}

void save_obj(const ControlMesh& mesh, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out.precision(17);
    for (const auto& p : mesh.vertices) out << "v " << p[0] << " " << p[1] << " " << p[2] << "\n";
    for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << " " << t[1] + 1 << " " << t[2] + 1 << "\n";
}

}  // namespace

TargetSurface sphere_target(const Vec3& center, double radius) {
    TargetSurface t;
    t.project = [center, radius](const Vec3& x) {
        const Vec3 d = x - center;
        const double n = d.norm();
        if (n < 1e-300) return Vec3(center + Vec3(radius, 0, 0));
        return Vec3(center + (radius / n) * d);
    };
    return t;
}

ControlMesh load_mesh(const std::string& path) {
    const std::string ext = lowercase_ext(path);
    if (ext == "off") return load_off(path);
    if (ext == "obj") return load_obj(path);
    throw Error("load_mesh: unsupported extension ." + ext + " (OFF/OBJ only)");
}

void save_mesh(const ControlMesh& mesh, const std::string& path) {
    const std::string ext = lowercase_ext(path);
    if (ext == "off") return save_off(mesh, path);
    if (ext == "obj") return save_obj(mesh, path);
    throw Error("save_mesh: unsupported extension ." + ext + " (OFF/OBJ only)");
}

void save_vtk_surface(const SubdivisionSurface& surf, const std::string& path,
                      const std::vector<VtkPointData>& fields) {
    const ControlMesh& mesh = surf.mesh();
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out.precision(12);
    out << "# vtk DataFile Version 3.0\nlimit surface\nASCII\nDATASET POLYDATA\n";
    out << "POINTS " << mesh.vertex_count() << " double\n";
    for (int v = 0; v < mesh.vertex_count(); ++v) {
        const Vec3 x = surf.vertex_limit_position(v);
        out << x[0] << " " << x[1] << " " << x[2] << "\n";
    }
    out << "POLYGONS " << mesh.triangle_count() << " " << 4 * mesh.triangle_count() << "\n";
    for (const auto& t : mesh.triangles) out << "3 " << t[0] << " " << t[1] << " " << t[2] << "\n";
    if (!fields.empty()) {
        out << "POINT_DATA " << mesh.vertex_count() << "\n";
        for (const auto& f : fields) {
            if (static_cast<int>(f.values.size()) != mesh.vertex_count()) {
                throw Error("save_vtk_surface: field " + f.name + " has wrong size");
            }
            out << "SCALARS " << f.name << " double 1\nLOOKUP_TABLE default\n";
            for (double x : f.values) out << x << "\n";
        }
    }
}

ControlMesh make_sphere_control_mesh(int levels, double radius) {
    if (levels < 0) throw Error("make_sphere_control_mesh: levels must be >= 0");
    ControlMesh mesh = make_icosahedron(radius);
    for (int l = 0; l < levels; ++l) {
        mesh = loop_subdivide(mesh);
        for (auto& p : mesh.vertices) p *= radius / p.norm();
        mesh.finalize();
    }
    return mesh;
}

GeometryErrorReport geometry_error(const ControlMesh& mesh, const TargetSurface& target, int quad_degree) {
    if (quad_degree < 5) quad_degree = 5;  // 7-point rule minimum
    SubdivisionSurface surf(mesh);
    const auto& rule = triangle_rule(quad_degree);
    GeometryErrorReport rep;
    rep.element_contrib.assign(mesh.triangle_count(), 0.0);
    double num = 0.0, den = 0.0;
    for (int e = 0; e < mesh.triangle_count(); ++e) {
        double local = 0.0;
        for (const auto& qp : rule) {
            const PatchBasis basis = surf.evaluate_basis({e, qp.v, qp.w}, 1);
            Vec3 x = Vec3::Zero(), a1 = Vec3::Zero(), a2 = Vec3::Zero();
            for (int a = 0; a < basis.n_v; ++a) {
                const Vec3& P = mesh.vertices[basis.vertices[a]];
                x += basis.values[a] * P;
                a1 += basis.d1[a][0] * P;
                a2 += basis.d1[a][1] * P;
            }
            const double jac = a1.cross(a2).norm();
            const Vec3 proj = target.project(x);
            local += qp.weight * jac * (x - proj).squaredNorm();
            den += qp.weight * jac * proj.squaredNorm();
        }
        rep.element_contrib[e] = local;
        num += local;
    }
    rep.eps_g = std::sqrt(num / den);
    return rep;
}

ControlMesh l2_fit_to_target(const ControlMesh& mesh, const TargetSurface& target,
                             int iterations, int quad_degree) {
    if (quad_degree < 5) quad_degree = 5;
    const int nv = mesh.vertex_count();
    ControlMesh current = mesh;
    const double eps_in = geometry_error(mesh, target, quad_degree).eps_g;

    for (int it = 0; it < iterations; ++it) {
        SubdivisionSurface surf(current);
        const auto& rule = triangle_rule(quad_degree);

        std::vector<Eigen::Triplet<double>> trips;
        Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(nv, 3);
        for (int e = 0; e < current.triangle_count(); ++e) {
            for (const auto& qp : rule) {
                const PatchBasis basis = surf.evaluate_basis({e, qp.v, qp.w}, 1);
                Vec3 x = Vec3::Zero(), a1 = Vec3::Zero(), a2 = Vec3::Zero();
                for (int a = 0; a < basis.n_v; ++a) {
                    const Vec3& P = current.vertices[basis.vertices[a]];
                    x += basis.values[a] * P;
                    a1 += basis.d1[a][0] * P;
                    a2 += basis.d1[a][1] * P;
                }
                const double wj = qp.weight * a1.cross(a2).norm();
                const Vec3 y = target.project(x);
                for (int a = 0; a < basis.n_v; ++a) {
                    const int ga = basis.vertices[a];
                    rhs.row(ga) += wj * basis.values[a] * y.transpose();
                    for (int b = 0; b < basis.n_v; ++b) {
                        trips.emplace_back(ga, basis.vertices[b], wj * basis.values[a] * basis.values[b]);
                    }
                }
            }
        }
        Eigen::SparseMatrix<double> gram(nv, nv);
        gram.setFromTriplets(trips.begin(), trips.end());
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(gram);
        if (solver.info() != Eigen::Success) {
            throw Error("l2_fit_to_target: singular normal matrix (degenerate mesh)");
        }
        const Eigen::MatrixXd sol = solver.solve(rhs);
        for (int v = 0; v < nv; ++v) current.vertices[v] = sol.row(v).transpose();
        current.finalize();
    }

    const double eps_out = geometry_error(current, target, quad_degree).eps_g;
    if (eps_out > eps_in * (1.0 + 1e-9)) {
        throw Error("l2_fit_to_target: geometry error increased (fit diverged)");
    }
    return current;
}

}  // namespace shellac
