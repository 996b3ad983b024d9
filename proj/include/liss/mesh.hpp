#pragma once

#include "liss/ris_core.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace liss {

enum class BoundaryTag { GammaD, GammaN, Gamma1, Gamma2 };

inline std::string_view tag_name(BoundaryTag tag)
{
    switch (tag) {
    case BoundaryTag::GammaD: return "GammaD";
    case BoundaryTag::GammaN: return "GammaN";
    case BoundaryTag::Gamma1: return "Gamma1";
    case BoundaryTag::Gamma2: return "Gamma2";
    }
    return "?";
}

inline BoundaryTag parse_tag(std::string_view name)
{
    if (name == "GammaD") return BoundaryTag::GammaD;
    if (name == "GammaN") return BoundaryTag::GammaN;
    if (name == "Gamma1") return BoundaryTag::Gamma1;
    if (name == "Gamma2") return BoundaryTag::Gamma2;
    throw InputError("unknown boundary tag '" + std::string(name) + "'");
}

struct Point {
    double x = 0.0;
    double y = 0.0;
};

struct BoundaryEdge {
    std::array<int, 2> nodes{};
    BoundaryTag tag = BoundaryTag::GammaN;
};

/// Planar P1 triangulation in mm with tagged boundary edges.
struct Mesh {
    std::vector<Point> nodes;
    std::vector<std::array<int, 3>> triangles;
    std::vector<BoundaryEdge> boundary;

    int node_count() const { return static_cast<int>(nodes.size()); }
    int triangle_count() const { return static_cast<int>(triangles.size()); }

    double signed_area(int tri) const
    {
        const auto& t = triangles[static_cast<std::size_t>(tri)];
        const Point& a = nodes[static_cast<std::size_t>(t[0])];
        const Point& b = nodes[static_cast<std::size_t>(t[1])];
        const Point& c = nodes[static_cast<std::size_t>(t[2])];
        return 0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
    }

    double total_area() const
    {
        double area = 0.0;
        for (int t = 0; t < triangle_count(); ++t) {
            area += signed_area(t);
        }
        return area;
    }

    Point centroid(int tri) const
    {
        const auto& t = triangles[static_cast<std::size_t>(tri)];
        Point c;
        for (int v : t) {
            c.x += nodes[static_cast<std::size_t>(v)].x / 3.0;
            c.y += nodes[static_cast<std::size_t>(v)].y / 3.0;
        }
        return c;
    }

    bool has_tag(BoundaryTag tag) const
    {
        return std::any_of(boundary.begin(), boundary.end(), [tag](const BoundaryEdge& e) { return e.tag == tag; });
    }

    /// Sorted, deduplicated nodes touched by edges carrying tag.
    std::vector<int> tagged_nodes(BoundaryTag tag) const
    {
        std::vector<int> out;
        for (const auto& e : boundary) {
            if (e.tag == tag) {
                out.push_back(e.nodes[0]);
                out.push_back(e.nodes[1]);
            }
        }
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    double max_edge_length() const
    {
        double h = 0.0;
        for (const auto& t : triangles) {
            for (int k = 0; k < 3; ++k) {
                const Point& a = nodes[static_cast<std::size_t>(t[static_cast<std::size_t>(k)])];
                const Point& b = nodes[static_cast<std::size_t>(t[static_cast<std::size_t>((k + 1) % 3)])];
                h = std::max(h, std::hypot(b.x - a.x, b.y - a.y));
            }
        }
        return h;
    }
};

struct MeshQuality {
    double min_angle_deg = 180.0;
    double min_area = 0.0;
    bool positive_orientation = true;
    bool boundary_closed = true;
};

/// Orientation, minimum angle and boundary-loop closure.
/// Boundary edges must match the set of triangle edges used by exactly one
/// triangle, and every boundary node must have even degree in the edge graph.
inline MeshQuality inspect_mesh(const Mesh& mesh)
{
    MeshQuality q;
    q.min_area = std::numeric_limits<double>::infinity();
    std::map<std::pair<int, int>, int> edge_use;
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        const double area = mesh.signed_area(t);
        q.min_area = std::min(q.min_area, area);
        if (!(area > 0.0)) {
            q.positive_orientation = false;
        }
        const auto& tri = mesh.triangles[static_cast<std::size_t>(t)];
        for (int k = 0; k < 3; ++k) {
            const int a = tri[static_cast<std::size_t>(k)];
            const int b = tri[static_cast<std::size_t>((k + 1) % 3)];
            const int c = tri[static_cast<std::size_t>((k + 2) % 3)];
            edge_use[{std::min(a, b), std::max(a, b)}] += 1;
            const Point& pa = mesh.nodes[static_cast<std::size_t>(a)];
            const Point& pb = mesh.nodes[static_cast<std::size_t>(b)];
            const Point& pc = mesh.nodes[static_cast<std::size_t>(c)];
            const double ux = pb.x - pa.x, uy = pb.y - pa.y;
            const double vx = pc.x - pa.x, vy = pc.y - pa.y;
            const double cosang = (ux * vx + uy * vy) / (std::hypot(ux, uy) * std::hypot(vx, vy));
            const double ang = std::acos(std::clamp(cosang, -1.0, 1.0)) * 180.0 / std::numbers::pi;
            q.min_angle_deg = std::min(q.min_angle_deg, ang);
        }
    }
    std::map<std::pair<int, int>, int> bnd;
    std::map<int, int> degree;
    for (const auto& e : mesh.boundary) {
        bnd[{std::min(e.nodes[0], e.nodes[1]), std::max(e.nodes[0], e.nodes[1])}] += 1;
        degree[e.nodes[0]] += 1;
        degree[e.nodes[1]] += 1;
    }
    for (const auto& [edge, count] : edge_use) {
        const bool on_boundary = count == 1;
        const auto it = bnd.find(edge);
        const bool tagged = it != bnd.end() && it->second == 1;
        if (on_boundary != tagged) {
            q.boundary_closed = false;
        }
    }
    if (bnd.size() != mesh.boundary.size()) {
        q.boundary_closed = false;
    }
    for (const auto& [node, d] : degree) {
        if (d % 2 != 0) {
            q.boundary_closed = false;
        }
    }
    return q;
}

namespace detail {

/// Builds a structured mesh from an (nx+1) x (ny+1) lattice of points,
/// splitting each quad along the diagonal that gives the better minimum angle.
inline Mesh lattice_mesh(const std::vector<std::vector<Point>>& grid)
{
    Mesh mesh;
    const int nx = static_cast<int>(grid.size()) - 1;
    const int ny = static_cast<int>(grid.front().size()) - 1;
    auto id = [ny](int i, int j) { return i * (ny + 1) + j; };
    for (int i = 0; i <= nx; ++i) {
        for (int j = 0; j <= ny; ++j) {
            mesh.nodes.push_back(grid[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
        }
    }
    auto dist2 = [&](int a, int b) {
        const Point& p = mesh.nodes[static_cast<std::size_t>(a)];
        const Point& q = mesh.nodes[static_cast<std::size_t>(b)];
        return (p.x - q.x) * (p.x - q.x) + (p.y - q.y) * (p.y - q.y);
    };
    for (int i = 0; i < nx; ++i) {
        for (int j = 0; j < ny; ++j) {
            const int a = id(i, j), b = id(i + 1, j), c = id(i + 1, j + 1), d = id(i, j + 1);
            if (dist2(a, c) <= dist2(b, d)) {
                mesh.triangles.push_back({a, b, c});
                mesh.triangles.push_back({a, c, d});
            } else {
                mesh.triangles.push_back({a, b, d});
                mesh.triangles.push_back({b, c, d});
            }
        }
    }
    for (auto& t : mesh.triangles) {
        const int idx = static_cast<int>(&t - mesh.triangles.data());
        if (mesh.signed_area(idx) < 0.0) {
            std::swap(t[1], t[2]);
        }
    }
    return mesh;
}

inline int segments_for(double length, double spacing)
{
    return std::max(1, static_cast<int>(std::ceil(length / spacing - 1e-9)));
}

}  // namespace detail

/// Quarter of the pre-cracked brick: [0,100] x [0,40]; the crack face is
/// {0} x [0,16], the symmetry lines are Gamma1 = {0} x [16,40] and
/// Gamma2 = [0,100] x {40}, and the loaded end is GammaD = {100} x [0,40].
/// Quads of side <= h/sqrt(2) are split so that every edge is <= h.
inline Mesh generate_mesh_example1(double h)
{
    constexpr double a = 100.0, b = 40.0, c = 16.0;
    if (!(h > 0.0)) {
        throw InputError("generate_mesh_example1: h must be positive");
    }
    if (h > c) {
        throw InputError("generate_mesh_example1: h exceeds the 16 mm crack ligament");
    }
    const double spacing = h / std::numbers::sqrt2;
    const int nx = detail::segments_for(a, spacing);
    const int ny_low = detail::segments_for(c, spacing);
    const int ny_up = detail::segments_for(b - c, spacing);
    std::vector<double> ys;
    for (int j = 0; j <= ny_low; ++j) ys.push_back(c * j / ny_low);
    for (int j = 1; j <= ny_up; ++j) ys.push_back(c + (b - c) * j / ny_up);
    std::vector<std::vector<Point>> grid(static_cast<std::size_t>(nx + 1));
    for (int i = 0; i <= nx; ++i) {
        for (double y : ys) {
            grid[static_cast<std::size_t>(i)].push_back({a * i / nx, y});
        }
    }
    Mesh mesh = detail::lattice_mesh(grid);
    const int ny = static_cast<int>(ys.size()) - 1;
    auto id = [ny](int i, int j) { return i * (ny + 1) + j; };
    for (int i = 0; i < nx; ++i) {
        mesh.boundary.push_back({{id(i, 0), id(i + 1, 0)}, BoundaryTag::GammaN});
        mesh.boundary.push_back({{id(i + 1, ny), id(i, ny)}, BoundaryTag::Gamma2});
    }
    for (int j = 0; j < ny; ++j) {
        mesh.boundary.push_back({{id(nx, j), id(nx, j + 1)}, BoundaryTag::GammaD});
        const BoundaryTag left = j < ny_low ? BoundaryTag::GammaN : BoundaryTag::Gamma1;
        mesh.boundary.push_back({{id(0, j + 1), id(0, j)}, left});
    }
    return mesh;
}

/// Quarter of the brick with a circular hole: [0,100]^2 minus the disc of
/// radius 50 at the origin. Gamma1 = {0} x [50,100], Gamma2 = [50,100] x {0},
/// GammaD = [0,100] x {100}; the arc and the right edge are GammaN.
/// Transfinite lattice between the arc and the outer boundary (right edge
/// followed by the top edge), uniform in the outer arclength.
inline Mesh generate_mesh_example2(double h)
{
    constexpr double a = 100.0, r = 50.0;
    if (!(h > 0.0)) {
        throw InputError("generate_mesh_example2: h must be positive");
    }
    if (!(h < r / 2.0)) {
        throw InputError("generate_mesh_example2: h must be below r/2 = 25 mm");
    }
    const double spacing = h / std::numbers::sqrt2;
    int nt = detail::segments_for(2.0 * a, spacing);
    if (nt % 2 != 0) ++nt;
    const int nr = detail::segments_for(std::hypot(a, a) - r, spacing);
    std::vector<std::vector<Point>> grid(static_cast<std::size_t>(nt + 1));
    for (int i = 0; i <= nt; ++i) {
        const double p = static_cast<double>(i) / nt;
        const double theta = p * std::numbers::pi / 2.0;
        const Point inner{r * std::cos(theta), r * std::sin(theta)};
        Point outer;
        if (2 * i <= nt) {
            outer = {a, 2.0 * a * p};
        } else {
            outer = {a - 2.0 * a * (p - 0.5), a};
        }
        if (i == nt) {
            outer = {0.0, a};
        }
        if (i == 0) {
            outer = {a, 0.0};
        }
        for (int j = 0; j <= nr; ++j) {
            const double w = static_cast<double>(j) / nr;
            Point pt{(1.0 - w) * inner.x + w * outer.x, (1.0 - w) * inner.y + w * outer.y};
            if (i == nt) pt.x = 0.0;
            if (i == 0) pt.y = 0.0;
            grid[static_cast<std::size_t>(i)].push_back(pt);
        }
    }
    Mesh mesh = detail::lattice_mesh(grid);
    auto id = [nr](int i, int j) { return i * (nr + 1) + j; };
    for (int j = 0; j < nr; ++j) {
        mesh.boundary.push_back({{id(0, j), id(0, j + 1)}, BoundaryTag::Gamma2});
        mesh.boundary.push_back({{id(nt, j + 1), id(nt, j)}, BoundaryTag::Gamma1});
    }
    for (int i = 0; i < nt; ++i) {
        mesh.boundary.push_back({{id(i + 1, 0), id(i, 0)}, BoundaryTag::GammaN});
        const BoundaryTag outer = 2 * i < nt ? BoundaryTag::GammaN : BoundaryTag::GammaD;
        mesh.boundary.push_back({{id(i, nr), id(i + 1, nr)}, outer});
    }
    return mesh;
}

namespace detail {

inline std::string format_double(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double parse_double(std::string_view token)
{
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc() || ptr != token.data() + token.size()) {
        throw InputError("cannot parse number '" + std::string(token) + "'");
    }
    return value;
}

}  // namespace detail

/// ASCII mesh format: `nodes N`, N lines `x y`; `triangles M`, M lines
/// `i j k` (0-based); `boundary B`, B lines `i j TAG`.
inline void write_mesh(std::ostream& out, const Mesh& mesh)
{
    out << "nodes " << mesh.nodes.size() << '\n';
    for (const auto& p : mesh.nodes) {
        out << detail::format_double(p.x) << ' ' << detail::format_double(p.y) << '\n';
    }
    out << "triangles " << mesh.triangles.size() << '\n';
    for (const auto& t : mesh.triangles) {
        out << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
    }
    out << "boundary " << mesh.boundary.size() << '\n';
    for (const auto& e : mesh.boundary) {
        out << e.nodes[0] << ' ' << e.nodes[1] << ' ' << tag_name(e.tag) << '\n';
    }
}

inline Mesh read_mesh(std::istream& in)
{
    Mesh mesh;
    auto expect_header = [&in](const char* keyword) {
        std::string word;
        long long count = -1;
        if (!(in >> word >> count) || word != keyword || count < 0) {
            throw InputError(std::string("mesh file: expected '") + keyword + " <count>'");
        }
        return static_cast<std::size_t>(count);
    };
    const std::size_t n = expect_header("nodes");
    mesh.nodes.resize(n);
    for (auto& p : mesh.nodes) {
        std::string xs, ys;
        if (!(in >> xs >> ys)) throw InputError("mesh file: truncated node block");
        p = {detail::parse_double(xs), detail::parse_double(ys)};
    }
    const std::size_t m = expect_header("triangles");
    mesh.triangles.resize(m);
    for (auto& t : mesh.triangles) {
        if (!(in >> t[0] >> t[1] >> t[2])) throw InputError("mesh file: truncated triangle block");
        for (int v : t) {
            if (v < 0 || static_cast<std::size_t>(v) >= n) throw InputError("mesh file: node index out of range");
        }
    }
    const std::size_t b = expect_header("boundary");
    mesh.boundary.resize(b);
    for (auto& e : mesh.boundary) {
        std::string tag;
        if (!(in >> e.nodes[0] >> e.nodes[1] >> tag)) throw InputError("mesh file: truncated boundary block");
        for (int v : e.nodes) {
            if (v < 0 || static_cast<std::size_t>(v) >= n) throw InputError("mesh file: node index out of range");
        }
        e.tag = parse_tag(tag);
    }
    return mesh;
}

inline void save_mesh(const std::string& path, const Mesh& mesh)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    write_mesh(out, mesh);
}

inline Mesh load_mesh(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open mesh file '" + path + "'");
    return read_mesh(in);
}

/// Value of a P1 field at p; points outside the mesh take the nearest
/// triangle's extrapolated value.
inline double evaluate_p1(const Mesh& mesh, const Vector& field, Point p)
{
    double best_violation = std::numeric_limits<double>::infinity();
    double best_value = 0.0;
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        const auto& tri = mesh.triangles[static_cast<std::size_t>(t)];
        const Point& a = mesh.nodes[static_cast<std::size_t>(tri[0])];
        const Point& b = mesh.nodes[static_cast<std::size_t>(tri[1])];
        const Point& c = mesh.nodes[static_cast<std::size_t>(tri[2])];
        const double det = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
        const double l1 = ((p.x - a.x) * (c.y - a.y) - (c.x - a.x) * (p.y - a.y)) / det;
        const double l2 = ((b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y)) / det;
        const double l0 = 1.0 - l1 - l2;
        const double violation = std::max({0.0, -l0, -l1, -l2});
        if (violation < best_violation) {
            best_violation = violation;
            best_value = l0 * field[tri[0]] + l1 * field[tri[1]] + l2 * field[tri[2]];
            if (violation == 0.0) break;
        }
    }
    return best_value;
}

}  // namespace liss
