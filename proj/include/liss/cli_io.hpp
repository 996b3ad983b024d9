#pragma once

#include "liss/bench_oracle.hpp"
#include "liss/damage_model.hpp"
#include "liss/liss_driver.hpp"
#include "liss/mesh.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace liss {

/// Invalid or inconsistent configuration (exit code 1).
class ConfigError : public InputError {
public:
    using InputError::InputError;
};

/// File system or format failure (exit code 3).
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ExitCode { ok = 0, config = 1, solver = 2, io = 3, verify_failed = 4 };

/// Maps an exception escaping a command to its process exit code.
inline ExitCode exit_code_for(const std::exception& e)
{
    if (dynamic_cast<const IoError*>(&e) != nullptr) return ExitCode::io;
    if (dynamic_cast<const InputError*>(&e) != nullptr) return ExitCode::config;
    return ExitCode::solver;
}

enum class Example { example1, example2, scalar_convex, scalar_nonconvex, mesh_file };

inline std::string_view example_name(Example e)
{
    switch (e) {
    case Example::example1: return "example1";
    case Example::example2: return "example2";
    case Example::scalar_convex: return "scalar_convex";
    case Example::scalar_nonconvex: return "scalar_nonconvex";
    case Example::mesh_file: return "mesh_file";
    }
    return "?";
}

struct RunConfig {
    Example example = Example::example1;
    double h = 10.0;
    std::string mesh_file;
    /// Boundary data for mesh_file runs: example1 or example2.
    std::string dirichlet = "example1";

    double kappa = 0.1;
    /// Young's modulus in GPa as configured; the model works in MPa.
    double youngs_gpa = 18.0;
    double poisson = 0.2;
    double reg_alpha = 1.0;
    double softening_eps = 0.01;
    bool plane_strain = true;

    double stiffness = 1.0;
    double z0 = 0.0;
    double load_offset = 0.0;
    double load_rate = 1.0;

    double tau = 0.1;
    double end_time = 16.0;

    ConstraintVariant variant = ConstraintVariant::ball;
    double abs_tol = 1e-10;
    int max_iters = 30;
    double descent_tol = 1e-12;

    std::string output_dir = "output";
    int vtk_stride = 10;

    unsigned seed = 7;
    int fd_states = 20;

    bool is_scalar() const { return example == Example::scalar_convex || example == Example::scalar_nonconvex; }
    double youngs_mpa() const { return 1000.0 * youngs_gpa; }
};

namespace detail {

struct KeyInfo {
    const char* section;
    const char* key;
};

inline const std::vector<KeyInfo>& known_keys()
{
    static const std::vector<KeyInfo> keys{
        {"problem", "example"},   {"problem", "h"},          {"problem", "mesh_file"},  {"problem", "dirichlet"},
        {"material", "kappa"},    {"material", "E"},         {"material", "nu"},        {"material", "alpha"},
        {"material", "eps_g"},    {"material", "plane_strain"},
        {"scalar", "a"},          {"scalar", "z0"},          {"scalar", "load_offset"}, {"scalar", "load_rate"},
        {"time", "tau"},          {"time", "T"},
        {"solver", "variant"},    {"solver", "abs_tol"},     {"solver", "max_iters"},   {"solver", "descent_tol"},
        {"output", "dir"},        {"output", "vtk_stride"},
        {"verify", "seed"},       {"verify", "fd_states"},
    };
    return keys;
}

inline std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

class ConfigReader {
public:
    explicit ConfigReader(std::map<std::string, std::string> values) : values_(std::move(values)) {}

    bool has(const std::string& path) const { return values_.count(path) != 0; }

    std::optional<std::string> text(const std::string& path) const
    {
        const auto it = values_.find(path);
        if (it == values_.end()) return std::nullopt;
        return it->second;
    }

    std::optional<double> number(const std::string& path) const
    {
        const auto v = text(path);
        if (!v) return std::nullopt;
        try {
            const double x = parse_double(*v);
            if (!std::isfinite(x)) throw InputError("not finite");
            return x;
        } catch (const InputError&) {
            throw ConfigError(path + ": expected a number, got '" + *v + "'");
        }
    }

    std::optional<int> integer(const std::string& path) const
    {
        const auto x = number(path);
        if (!x) return std::nullopt;
        if (*x != std::floor(*x) || std::abs(*x) > 1e9) throw ConfigError(path + ": expected an integer");
        return static_cast<int>(*x);
    }

    std::optional<bool> boolean(const std::string& path) const
    {
        const auto v = text(path);
        if (!v) return std::nullopt;
        if (*v == "true" || *v == "1" || *v == "yes") return true;
        if (*v == "false" || *v == "0" || *v == "no") return false;
        throw ConfigError(path + ": expected true or false, got '" + *v + "'");
    }

private:
    std::map<std::string, std::string> values_;
};

inline void require_positive(double v, const char* path)
{
    if (!(v > 0.0)) throw ConfigError(std::string(path) + ": must be positive");
}

}  // namespace detail

/// Parses the sectioned key = value format. Unknown sections or keys,
/// malformed values and non-positive physical parameters are rejected with
/// the offending `section.key` in the message. LISS_OUTPUT_DIR, if set,
/// replaces output.dir.
inline RunConfig parse_config_text(const std::string& text, const std::string& source = "<config>")
{
    boost::property_tree::ptree tree;
    std::istringstream in(text);
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(source + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
    }
    std::map<std::string, std::string> values;
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty()) {
            throw ConfigError(source + ": key '" + section + "' outside of a section");
        }
        const bool known_section = std::any_of(detail::known_keys().begin(), detail::known_keys().end(),
                                               [&](const detail::KeyInfo& k) { return section == k.section; });
        if (!known_section) throw ConfigError(source + ": unknown section [" + section + "]");
        for (const auto& [key, leaf] : body) {
            const std::string path = section + "." + key;
            const bool known = std::any_of(detail::known_keys().begin(), detail::known_keys().end(),
                                           [&](const detail::KeyInfo& k) { return section == k.section && key == k.key; });
            if (!known) throw ConfigError(source + ": unknown key " + path);
            values[path] = detail::trim(leaf.data());
        }
    }
    const detail::ConfigReader r(std::move(values));

    RunConfig c;
    if (const auto ex = r.text("problem.example")) {
        if (*ex == "example1") c.example = Example::example1;
        else if (*ex == "example2") c.example = Example::example2;
        else if (*ex == "scalar_convex") c.example = Example::scalar_convex;
        else if (*ex == "scalar_nonconvex") c.example = Example::scalar_nonconvex;
        else if (*ex == "mesh_file") c.example = Example::mesh_file;
        else throw ConfigError("problem.example: unknown example '" + *ex + "'");
    }
    // Per-example defaults; explicit keys override them below.
    if (c.example == Example::scalar_convex) {
        c.kappa = 0.5;
        c.tau = 0.01;
        c.end_time = 2.0;
    } else if (c.example == Example::scalar_nonconvex) {
        c.kappa = 0.05;
        c.tau = 0.005;
        c.end_time = 1.0;
        c.variant = ConstraintVariant::box;
    }

    c.h = r.number("problem.h").value_or(c.h);
    c.mesh_file = r.text("problem.mesh_file").value_or(c.mesh_file);
    c.dirichlet = r.text("problem.dirichlet").value_or(c.dirichlet);
    c.kappa = r.number("material.kappa").value_or(c.kappa);
    c.youngs_gpa = r.number("material.E").value_or(c.youngs_gpa);
    c.poisson = r.number("material.nu").value_or(c.poisson);
    c.reg_alpha = r.number("material.alpha").value_or(c.reg_alpha);
    c.softening_eps = r.number("material.eps_g").value_or(c.softening_eps);
    c.plane_strain = r.boolean("material.plane_strain").value_or(c.plane_strain);
    c.stiffness = r.number("scalar.a").value_or(c.stiffness);
    c.z0 = r.number("scalar.z0").value_or(c.z0);
    c.load_offset = r.number("scalar.load_offset").value_or(c.load_offset);
    c.load_rate = r.number("scalar.load_rate").value_or(c.load_rate);
    c.tau = r.number("time.tau").value_or(c.tau);
    c.end_time = r.number("time.T").value_or(c.end_time);
    if (const auto v = r.text("solver.variant")) {
        if (*v == "ball") c.variant = ConstraintVariant::ball;
        else if (*v == "box") c.variant = ConstraintVariant::box;
        else throw ConfigError("solver.variant: expected ball or box, got '" + *v + "'");
    }
    c.abs_tol = r.number("solver.abs_tol").value_or(c.abs_tol);
    c.max_iters = r.integer("solver.max_iters").value_or(c.max_iters);
    c.descent_tol = r.number("solver.descent_tol").value_or(c.descent_tol);
    c.output_dir = r.text("output.dir").value_or(c.output_dir);
    c.vtk_stride = r.integer("output.vtk_stride").value_or(c.vtk_stride);
    if (const auto seed = r.integer("verify.seed")) {
        if (*seed < 0) throw ConfigError("verify.seed: must be nonnegative");
        c.seed = static_cast<unsigned>(*seed);
    }
    c.fd_states = r.integer("verify.fd_states").value_or(c.fd_states);

    if (const char* env = std::getenv("LISS_OUTPUT_DIR"); env != nullptr && *env != '\0') c.output_dir = env;

    detail::require_positive(c.h, "problem.h");
    detail::require_positive(c.kappa, "material.kappa");
    detail::require_positive(c.youngs_gpa, "material.E");
    detail::require_positive(c.poisson, "material.nu");
    if (!(c.poisson < 0.5)) throw ConfigError("material.nu: must be below 0.5");
    detail::require_positive(c.reg_alpha, "material.alpha");
    detail::require_positive(c.softening_eps, "material.eps_g");
    detail::require_positive(c.stiffness, "scalar.a");
    detail::require_positive(c.tau, "time.tau");
    detail::require_positive(c.end_time, "time.T");
    if (c.tau > c.end_time) throw ConfigError("time.tau: must not exceed time.T");
    detail::require_positive(c.abs_tol, "solver.abs_tol");
    if (c.max_iters <= 0) throw ConfigError("solver.max_iters: must be positive");
    if (!(c.descent_tol >= 0.0)) throw ConfigError("solver.descent_tol: must be nonnegative");
    if (c.vtk_stride <= 0) throw ConfigError("output.vtk_stride: must be positive");
    if (c.fd_states <= 0) throw ConfigError("verify.fd_states: must be positive");
    if (c.output_dir.empty()) throw ConfigError("output.dir: must not be empty");
    if (c.example == Example::mesh_file && c.mesh_file.empty()) {
        throw ConfigError("problem.mesh_file: required for example = mesh_file");
    }
    if (c.dirichlet != "example1" && c.dirichlet != "example2") {
        throw ConfigError("problem.dirichlet: expected example1 or example2, got '" + c.dirichlet + "'");
    }
    if (c.example == Example::scalar_convex && c.load_rate < 0.0) {
        throw ConfigError("scalar.load_rate: the convex oracle needs a nondecreasing load");
    }
    return c;
}

inline RunConfig parse_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), path);
}

/// Config echo in the input format.
inline std::string describe_config(const RunConfig& c)
{
    using detail::format_double;
    std::ostringstream o;
    o << "[problem]\nexample = " << example_name(c.example) << "\nh = " << format_double(c.h) << '\n';
    if (!c.mesh_file.empty()) o << "mesh_file = " << c.mesh_file << '\n';
    o << "dirichlet = " << c.dirichlet << '\n';
    o << "[material]\nkappa = " << format_double(c.kappa) << "\nE = " << format_double(c.youngs_gpa)
      << "\nnu = " << format_double(c.poisson) << "\nalpha = " << format_double(c.reg_alpha)
      << "\neps_g = " << format_double(c.softening_eps) << "\nplane_strain = " << (c.plane_strain ? "true" : "false")
      << '\n';
    o << "[scalar]\na = " << format_double(c.stiffness) << "\nz0 = " << format_double(c.z0)
      << "\nload_offset = " << format_double(c.load_offset) << "\nload_rate = " << format_double(c.load_rate) << '\n';
    o << "[time]\ntau = " << format_double(c.tau) << "\nT = " << format_double(c.end_time) << '\n';
    o << "[solver]\nvariant = " << (c.variant == ConstraintVariant::ball ? "ball" : "box")
      << "\nabs_tol = " << format_double(c.abs_tol) << "\nmax_iters = " << c.max_iters
      << "\ndescent_tol = " << format_double(c.descent_tol) << '\n';
    o << "[output]\ndir = " << c.output_dir << "\nvtk_stride = " << c.vtk_stride << '\n';
    o << "[verify]\nseed = " << c.seed << "\nfd_states = " << c.fd_states << '\n';
    return o.str();
}

/// The problem a configuration describes, with its initial state.
class Model {
public:
    explicit Model(const RunConfig& c) : config_(c)
    {
        if (c.example == Example::scalar_convex) {
            scalar_ = std::make_unique<ScalarRis>(
                ScalarRis::convex(c.stiffness, c.kappa, AffineLoad{c.load_offset, c.load_rate}, Cone::one_sided));
            return;
        }
        if (c.example == Example::scalar_nonconvex) {
            scalar_ = std::make_unique<ScalarRis>(
                ScalarRis::double_well(c.kappa, AffineLoad{c.load_offset, c.load_rate}, Cone::two_sided));
            return;
        }
        DamageParameters p;
        p.law = ElasticLaw::from_gpa(c.youngs_gpa, c.poisson, c.plane_strain);
        p.reg_alpha = c.reg_alpha;
        p.kappa = c.kappa;
        p.softening_eps = c.softening_eps;
        p.end_time = c.end_time;
        damage_ = std::make_unique<DamageProblem>(build_mesh(c), profile(c), p);
    }

    static Mesh build_mesh(const RunConfig& c)
    {
        switch (c.example) {
        case Example::example1: return generate_mesh_example1(c.h);
        case Example::example2: return generate_mesh_example2(c.h);
        case Example::mesh_file:
            try {
                return load_mesh(c.mesh_file);
            } catch (const std::exception& e) {
                throw IoError(std::string("problem.mesh_file: ") + e.what());
            }
        default: throw ConfigError("problem.example: " + std::string(example_name(c.example)) + " has no mesh");
        }
    }

    static DirichletProfile profile(const RunConfig& c)
    {
        if (c.example == Example::example2) return dirichlet_example2();
        if (c.example == Example::mesh_file && c.dirichlet == "example2") return dirichlet_example2();
        return dirichlet_example1();
    }

    const RunConfig& config() const { return config_; }
    const RisProblem& problem() const
    {
        if (damage_) return *damage_;
        return *scalar_;
    }
    const DamageProblem* damage() const { return damage_.get(); }
    const ScalarRis* scalar() const { return scalar_.get(); }

    Vector initial_state() const
    {
        if (scalar_) return Vector::Constant(1, config_.z0);
        return Vector::Zero(damage_->size());
    }

    LissOptions liss_options() const
    {
        LissOptions o;
        o.ssn.variant = config_.variant;
        o.ssn.abs_tol = config_.abs_tol;
        o.ssn.max_iters = config_.max_iters;
        o.ssn.descent_tol = config_.descent_tol;
        return o;
    }

private:
    RunConfig config_;
    std::unique_ptr<DamageProblem> damage_;
    std::unique_ptr<ScalarRis> scalar_;
};

/// Boundary displacement and reaction (damage model) or load and state
/// (scalar oracle) at one step.
struct ForceSample {
    double t = 0.0;
    double displacement = 0.0;
    double force = 0.0;
};

inline std::vector<ForceSample> force_history(const Model& model, const Trajectory& traj)
{
    std::vector<ForceSample> out;
    out.reserve(traj.steps.size());
    for (const auto& st : traj.steps) {
        ForceSample f;
        f.t = st.t;
        if (const ScalarRis* s = model.scalar()) {
            f.displacement = s->load()(st.t);
            f.force = st.z[0];
        } else {
            const DamageProblem& d = *model.damage();
            const DofConstraints& dc = d.constraints();
            const Vector lift = d.lift(st.t);
            f.displacement = dc.pulled_dofs.empty() ? 0.0 : lift[dc.pulled_dofs.front()];
            const Vector w = expand_free(st.inner, dc) + lift;
            f.force = reaction_force_residual(assemble_elasticity(d.mesh(), st.z, d.softening(), d.parameters().law), w, dc);
        }
        out.push_back(f);
    }
    return out;
}

inline std::string csv_row(std::initializer_list<double> values)
{
    std::string row;
    bool first = true;
    for (double v : values) {
        if (!first) row += ',';
        row += detail::format_double(v);
        first = false;
    }
    return row;
}

inline void write_steps_csv(std::ostream& out, const Trajectory& traj, const EnergyIdentityReport& energy)
{
    out << "k,s_k,t_k,dz_v,lambda,dist,diss_inc,energy,energy_residual_cum,newton_iters,descent_flagged\n";
    for (std::size_t k = 0; k < traj.steps.size(); ++k) {
        const auto& st = traj.steps[k];
        const double cum = k == 0 ? 0.0 : energy.cumulative[k - 1];
        out << st.k << ',' << csv_row({st.s, st.t, st.dz_norm, st.lambda, st.dist, st.diss, st.energy, cum}) << ','
            << st.newton_iters << ',' << (st.descent_flagged ? 1 : 0) << '\n';
    }
}

inline void write_force_csv(std::ostream& out, const std::vector<ForceSample>& samples, bool scalar)
{
    out << (scalar ? "t,load,state\n" : "t,displacement,force\n");
    for (const auto& f : samples) out << csv_row({f.t, f.displacement, f.force}) << '\n';
}

inline void write_t_of_s_csv(std::ostream& out, const Trajectory& traj)
{
    out << "s,t_hat\n";
    for (const auto& st : traj.steps) out << csv_row({st.s, st.t}) << '\n';
}

/// Legacy ASCII VTK 3.0 unstructured grid of triangles (cell type 5) with
/// point data `damage` and `displacement` on the undeformed mesh.
inline void write_vtk(std::ostream& out, const Mesh& mesh, const Vector& damage, const Vector& displacement,
                      const std::string& title = "liss damage field")
{
    using detail::format_double;
    require_same_size(damage.size(), mesh.node_count(), "write_vtk damage");
    require_same_size(displacement.size(), 2 * mesh.node_count(), "write_vtk displacement");
    const auto nn = static_cast<std::size_t>(mesh.node_count());
    const auto nt = static_cast<std::size_t>(mesh.triangle_count());
    out << "# vtk DataFile Version 3.0\n" << title << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
    out << "POINTS " << nn << " double\n";
    for (const auto& p : mesh.nodes) out << format_double(p.x) << ' ' << format_double(p.y) << " 0\n";
    out << "CELLS " << nt << ' ' << 4 * nt << '\n';
    for (const auto& t : mesh.triangles) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
    out << "CELL_TYPES " << nt << '\n';
    for (std::size_t i = 0; i < nt; ++i) out << "5\n";
    out << "POINT_DATA " << nn << "\nSCALARS damage double 1\nLOOKUP_TABLE default\n";
    for (std::size_t i = 0; i < nn; ++i) out << format_double(damage[static_cast<Index>(i)]) << '\n';
    out << "VECTORS displacement double\n";
    for (std::size_t i = 0; i < nn; ++i) {
        const auto j = static_cast<Index>(2 * i);
        out << format_double(displacement[j]) << ' ' << format_double(displacement[j + 1]) << " 0\n";
    }
}

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    return out;
}

inline void finish(std::ofstream& out, const std::filesystem::path& path)
{
    out.flush();
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

inline std::filesystem::path prepare_dir(const std::string& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
    return dir;
}

inline std::string step_line(const LissStep& st)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, "k=%d s=%.6g t=%.6g dz=%.3e lambda=%.3e dist=%.3e iters=%d attempts=%d start=%s%s",
                  st.k, st.s, st.t, st.dz_norm, st.lambda, st.dist, st.newton_iters, st.attempts,
                  start_name(st.start), st.descent_flagged ? " FLAGGED" : "");
    return buf;
}

}  // namespace detail

struct RunResult {
    Trajectory trajectory;
    EnergyIdentityReport energy;
    AprioriReport apriori;
    std::vector<ForceSample> forces;
};

/// Runs LISS for a configuration. With write_outputs the CSV, VTK and log
/// files go to config.output_dir.
inline RunResult execute_run(const Model& model, bool write_outputs, std::ostream* progress = nullptr)
{
    const RunConfig& c = model.config();
    std::filesystem::path dir;
    std::ofstream log;
    if (write_outputs) {
        dir = detail::prepare_dir(c.output_dir);
        log = detail::open_output(dir / "run.log");
        log << "# config\n" << describe_config(c) << "# steps\n";
    }
    LissOptions opts = model.liss_options();
    opts.on_step = [&](const LissStep& st) {
        if (write_outputs) log << detail::step_line(st) << '\n';
        if (progress != nullptr && st.k % 50 == 0) *progress << detail::step_line(st) << '\n';
    };
    RunResult res;
    res.trajectory = run(model.problem(), model.initial_state(), c.tau, c.end_time, opts);
    const Trajectory& traj = res.trajectory;
    res.energy = energy_identity_report(traj, model.problem());
    res.apriori = apriori_report(traj, model.problem());
    res.forces = force_history(model, traj);
    if (!write_outputs) return res;

    {
        auto out = detail::open_output(dir / "steps.csv");
        write_steps_csv(out, traj, res.energy);
        detail::finish(out, dir / "steps.csv");
    }
    {
        auto out = detail::open_output(dir / "force_displacement.csv");
        write_force_csv(out, res.forces, model.scalar() != nullptr);
        detail::finish(out, dir / "force_displacement.csv");
    }
    {
        auto out = detail::open_output(dir / "t_of_s.csv");
        write_t_of_s_csv(out, traj);
        detail::finish(out, dir / "t_of_s.csv");
    }
    if (const DamageProblem* d = model.damage()) {
        for (const auto& st : traj.steps) {
            if (st.k % c.vtk_stride != 0 && st.k != traj.last_index()) continue;
            char name[32];
            std::snprintf(name, sizeof name, "fields_%04d.vtk", st.k);
            auto out = detail::open_output(dir / name);
            write_vtk(out, d->mesh(), st.z, expand_free(st.inner, d->constraints()) + d->lift(st.t));
            detail::finish(out, dir / name);
        }
    }
    using detail::format_double;
    const auto& a = res.apriori;
    log << "# a priori\n"
        << "steps = " << traj.last_index() << "\nartificial_end = " << format_double(traj.artificial_end)
        << "\ntotal_dissipation = " << format_double(a.total_dissipation)
        << "\ntotal_variation = " << format_double(a.total_variation)
        << "\nsum_dz_z_squared = " << format_double(a.sum_dz_z_squared)
        << "\nsum_dz_z_squared_over_tau = " << format_double(a.sum_dz_z_squared_over_tau)
        << "\nmax_dist = " << format_double(a.max_dist) << "\nmax_z_norm = " << format_double(a.max_z_norm)
        << "\nenergy_residual = " << format_double(res.energy.final_residual)
        << "\ndescent_flagged = " << traj.descent_flagged_count() << '\n';
    detail::finish(log, dir / "run.log");
    return res;
}

inline RunResult run_command(const RunConfig& c, std::ostream& console)
{
    const Model model(c);
    RunResult res = execute_run(model, true, &console);
    const auto& traj = res.trajectory;
    console << "steps " << traj.last_index() << ", t_N = " << detail::format_double(traj.final_step().t)
            << ", S = " << detail::format_double(traj.artificial_end) << ", outputs in " << c.output_dir << '\n';
    return res;
}

// ----------------------------------------------------------------- studies

enum class StudyKind { tau, h };

struct StudyLevel {
    double tau = 0.0;
    double h = 0.0;
    int nodes = 0;
    int steps = 0;
    double artificial_end = 0.0;
    double final_z_max = 0.0;
    double peak_force = 0.0;
    double peak_force_t = 0.0;
    AprioriReport apriori;
    double energy_residual = 0.0;
    int descent_flagged = 0;
    double l2_diff_prev = std::numeric_limits<double>::quiet_NaN();
    double l2_rel_diff_prev = std::numeric_limits<double>::quiet_NaN();
    double peak_force_rel_diff_prev = std::numeric_limits<double>::quiet_NaN();
    double play_error = std::numeric_limits<double>::quiet_NaN();
    double rate = std::numeric_limits<double>::quiet_NaN();
    double plateau_extent = std::numeric_limits<double>::quiet_NaN();
    double plateau_diff_prev = std::numeric_limits<double>::quiet_NaN();
};

struct StudyResult {
    StudyKind kind = StudyKind::tau;
    std::vector<StudyLevel> levels;
    bool apriori_bounded = true;
};

inline void write_study_csv(std::ostream& out, const StudyResult& study)
{
    out << "level,tau,h,nodes,steps,artificial_end,final_z_max,peak_force,peak_force_t,total_dissipation,"
           "total_variation,dz_z2_over_tau,energy_residual,l2_diff_prev,l2_rel_diff_prev,peak_force_rel_diff_prev,"
           "play_error,rate,plateau_extent,plateau_diff_prev,descent_flagged\n";
    for (std::size_t i = 0; i < study.levels.size(); ++i) {
        const auto& l = study.levels[i];
        out << i << ','
            << csv_row({l.tau, l.h}) << ',' << l.nodes << ',' << l.steps << ','
            << csv_row({l.artificial_end, l.final_z_max, l.peak_force, l.peak_force_t, l.apriori.total_dissipation,
                        l.apriori.total_variation, l.apriori.sum_dz_z_squared_over_tau, l.energy_residual,
                        l.l2_diff_prev, l.l2_rel_diff_prev, l.peak_force_rel_diff_prev, l.play_error, l.rate,
                        l.plateau_extent, l.plateau_diff_prev})
            << ',' << l.descent_flagged << '\n';
    }
}

/// Refinement study over step sizes or mesh sizes. Levels run concurrently
/// (each run sequential, state isolated per level) when workers > 1; the
/// rows are ordered as given. Damage fields are compared on the coarsest
/// mesh of the family by P1 interpolation.
inline StudyResult study_command(const RunConfig& base, StudyKind kind, const std::vector<double>& values,
                                 std::ostream& console, unsigned workers = 1)
{
    if (values.size() < 2) throw ConfigError("study: need at least two refinement levels");
    if (kind == StudyKind::h && (base.is_scalar() || base.example == Example::mesh_file)) {
        throw ConfigError("study: --h-list needs a generated mesh (example1 or example2)");
    }
    for (double v : values) {
        if (!(v > 0.0)) throw ConfigError("study: refinement values must be positive");
    }
    std::vector<RunConfig> configs;
    for (double v : values) {
        RunConfig c = base;
        (kind == StudyKind::tau ? c.tau : c.h) = v;
        if (c.tau > c.end_time) throw ConfigError("study: tau must not exceed time.T");
        configs.push_back(c);
    }
    struct Finished {
        RunResult result;
        std::optional<Mesh> mesh;
    };
    auto run_level = [](const RunConfig& c) {
        const Model model(c);
        Finished f{execute_run(model, false), std::nullopt};
        if (model.damage() != nullptr) f.mesh = model.damage()->mesh();
        return f;
    };
    std::vector<Finished> done;
    if (workers <= 1) {
        for (const auto& c : configs) {
            done.push_back(run_level(c));
            console << "level " << done.size() << "/" << configs.size() << " done\n";
        }
    } else {
        std::vector<std::future<Finished>> pending;
        std::size_t next = 0;
        while (next < configs.size() || !pending.empty()) {
            while (next < configs.size() && pending.size() < workers) {
                pending.push_back(std::async(std::launch::async, run_level, std::cref(configs[next])));
                ++next;
            }
            done.push_back(pending.front().get());
            pending.erase(pending.begin());
            console << "level " << done.size() << "/" << configs.size() << " done\n";
        }
    }

    StudyResult study;
    study.kind = kind;
    const Mesh* coarse = nullptr;
    SparseMatrix coarse_mass;
    for (auto& f : done) {
        if (f.mesh && (coarse == nullptr || f.mesh->node_count() < coarse->node_count())) coarse = &*f.mesh;
    }
    if (coarse != nullptr) coarse_mass = assemble_mass(*coarse);
    auto on_coarse = [&](const Finished& f) {
        const Vector& z = f.result.trajectory.final_step().z;
        if (f.mesh->node_count() == coarse->node_count()) return z;
        Vector out(coarse->node_count());
        for (int i = 0; i < coarse->node_count(); ++i) {
            out[i] = evaluate_p1(*f.mesh, z, coarse->nodes[static_cast<std::size_t>(i)]);
        }
        return out;
    };
    std::vector<AprioriReport> family;
    std::optional<Vector> prev_field;
    for (std::size_t i = 0; i < done.size(); ++i) {
        const auto& f = done[i];
        const auto& traj = f.result.trajectory;
        StudyLevel l;
        l.tau = configs[i].tau;
        l.h = f.mesh ? configs[i].h : std::numeric_limits<double>::quiet_NaN();
        l.nodes = f.mesh ? f.mesh->node_count() : 1;
        l.steps = traj.last_index();
        l.artificial_end = traj.artificial_end;
        l.final_z_max = traj.final_step().z.maxCoeff();
        l.apriori = f.result.apriori;
        l.energy_residual = f.result.energy.final_residual;
        l.descent_flagged = traj.descent_flagged_count();
        family.push_back(l.apriori);
        if (f.mesh) {
            const auto peak = std::max_element(f.result.forces.begin(), f.result.forces.end(),
                                               [](const ForceSample& a, const ForceSample& b) { return a.force < b.force; });
            l.peak_force = peak->force;
            l.peak_force_t = peak->t;
            const Vector field = on_coarse(f);
            if (prev_field) {
                const Vector d = field - *prev_field;
                l.l2_diff_prev = std::sqrt(std::max(0.0, d.dot(coarse_mass * d)));
                const double ref = std::sqrt(std::max(0.0, prev_field->dot(coarse_mass * *prev_field)));
                l.l2_rel_diff_prev = ref > 0.0 ? l.l2_diff_prev / ref : l.l2_diff_prev;
                const double pf = study.levels.back().peak_force;
                l.peak_force_rel_diff_prev = std::abs(l.peak_force - pf) / std::max(std::abs(pf), 1e-300);
            }
            prev_field = field;
        } else {
            l.final_z_max = traj.final_step().z[0];
            l.peak_force = std::numeric_limits<double>::quiet_NaN();
            l.peak_force_t = std::numeric_limits<double>::quiet_NaN();
            const Model model(configs[i]);
            if (model.scalar()->is_convex()) {
                l.play_error = play_error(traj, *model.scalar());
                if (!study.levels.empty()) {
                    const auto& p = study.levels.back();
                    if (p.play_error > 0.0 && l.play_error > 0.0 && p.tau != l.tau) {
                        l.rate = std::log(p.play_error / l.play_error) / std::log(p.tau / l.tau);
                    }
                }
            } else if (const auto pl = longest_plateau(traj)) {
                l.plateau_extent = pl->extent();
                if (!study.levels.empty()) l.plateau_diff_prev = std::abs(l.plateau_extent - study.levels.back().plateau_extent);
            }
        }
        study.levels.push_back(l);
    }
    study.apriori_bounded = apriori_family_bounded(family);

    const auto dir = detail::prepare_dir(base.output_dir);
    auto out = detail::open_output(dir / "study.csv");
    write_study_csv(out, study);
    detail::finish(out, dir / "study.csv");
    console << "study.csv written to " << base.output_dir << " (a priori family "
            << (study.apriori_bounded ? "bounded" : "NOT bounded") << ")\n";
    return study;
}

// ------------------------------------------------------------------ verify

struct VerifyCheck {
    std::string name;
    bool pass = false;
    double value = 0.0;
    double tol = 0.0;
    std::string detail;
};

struct VerifyResult {
    std::vector<VerifyCheck> checks;
    bool all_passed() const
    {
        return std::all_of(checks.begin(), checks.end(), [](const VerifyCheck& c) { return c.pass; });
    }
};

namespace detail {

/// Largest residual of K w on interior free DOFs for an affine w, relative
/// to |K| |w|: a constant-strain field is in equilibrium on any patch.
inline double patch_test_residual(const Mesh& mesh, const ElasticLaw& law)
{
    const SparseMatrix k = assemble_elasticity(mesh, Vector::Zero(mesh.node_count()),
                                               Softening::exponential(0.0), law);
    Vector w(2 * mesh.node_count());
    for (int i = 0; i < mesh.node_count(); ++i) {
        const Point& p = mesh.nodes[static_cast<std::size_t>(i)];
        w[2 * i] = 1e-3 * p.x + 2e-3 * p.y + 0.5;
        w[2 * i + 1] = -3e-3 * p.x + 1e-3 * p.y - 0.25;
    }
    std::vector<char> on_boundary(static_cast<std::size_t>(mesh.node_count()), 0);
    for (const auto& e : mesh.boundary) {
        on_boundary[static_cast<std::size_t>(e.nodes[0])] = 1;
        on_boundary[static_cast<std::size_t>(e.nodes[1])] = 1;
    }
    const Vector r = k * w;
    double worst = 0.0;
    for (int i = 0; i < mesh.node_count(); ++i) {
        if (on_boundary[static_cast<std::size_t>(i)]) continue;
        worst = std::max({worst, std::abs(r[2 * i]), std::abs(r[2 * i + 1])});
    }
    const double scale = k.coeffs().cwiseAbs().maxCoeff() * w.cwiseAbs().maxCoeff();
    return worst / scale;
}

}  // namespace detail

/// Property suite: assembly oracles (damage model only), finite-difference
/// derivative checks on seeded random states, then one LISS run checked for
/// the time update, complementarity, the optimality relations and flagged
/// steps. The energy residual is reported.
inline VerifyResult verify_command(const RunConfig& c, std::ostream& jsonl)
{
    const Model model(c);
    const RisProblem& problem = model.problem();
    VerifyResult res;
    auto add = [&](VerifyCheck chk) {
        nlohmann::json j{{"check", chk.name}, {"pass", chk.pass}, {"value", chk.value}, {"tol", chk.tol}};
        if (!chk.detail.empty()) j["detail"] = chk.detail;
        jsonl << j.dump() << '\n';
        res.checks.push_back(std::move(chk));
    };

    if (const DamageProblem* d = model.damage()) {
        const Mesh& mesh = d->mesh();
        const MeshQuality q = inspect_mesh(mesh);
        add({"mesh_quality", q.positive_orientation && q.boundary_closed && q.min_angle_deg > 10.0, q.min_angle_deg,
             10.0, "minimum angle in degrees"});
        const double area = mesh.total_area();
        const double mass_total = Vector::Ones(mesh.node_count()).dot(d->mass() * Vector::Ones(mesh.node_count()));
        const double mass_err = std::abs(mass_total - area) / area;
        add({"mass_total_area", mass_err <= 1e-12, mass_err, 1e-12, "1^T M 1 against |Omega|"});
        const double lap = (d->laplace() * Vector::Ones(mesh.node_count())).cwiseAbs().maxCoeff()
                           / d->laplace().coeffs().cwiseAbs().maxCoeff();
        add({"laplace_constants", lap <= 1e-12, lap, 1e-12, "A 1 = 0"});
        const double patch = detail::patch_test_residual(mesh, d->parameters().law);
        add({"patch_test", patch <= 1e-12, patch, 1e-12, "interior residual of an affine displacement"});
    }

    std::mt19937 rng(c.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double grad_worst = 0.0, hess_worst = 0.0;
    for (int i = 0; i < c.fd_states; ++i) {
        Vector z(problem.size()), v(problem.size());
        for (Index j = 0; j < z.size(); ++j) z[j] = (model.scalar() ? 3.0 : 2.0) * unit(rng);
        for (Index j = 0; j < v.size(); ++j) v[j] = 2.0 * unit(rng) - 1.0;
        const double t = c.end_time * unit(rng);
        const DerivativeCheck dc = check_derivatives(problem, t, z, v);
        grad_worst = std::max(grad_worst, dc.gradient_error);
        hess_worst = std::max(hess_worst, dc.hessian_error);
    }
    add({"gradient_fd", grad_worst <= 1e-5, grad_worst, 1e-5, std::to_string(c.fd_states) + " random states"});
    add({"hessian_action_fd", hess_worst <= 1e-4, hess_worst, 1e-4, std::to_string(c.fd_states) + " random states"});

    RunResult run_res;
    try {
        run_res = execute_run(model, false);
    } catch (const std::exception& e) {
        add({"liss_run", false, 0.0, 0.0, e.what()});
        return res;
    }
    const Trajectory& traj = run_res.trajectory;
    add({"liss_run", true, static_cast<double>(traj.last_index()), 0.0, "steps"});

    double update_worst = 0.0, radius_worst = 0.0;
    bool reaches_end = traj.final_step().t >= c.end_time;
    for (std::size_t k = 1; k < traj.steps.size(); ++k) {
        const auto& a = traj.steps[k - 1];
        const auto& b = traj.steps[k];
        update_worst = std::max(update_worst, std::abs(b.t - a.t + b.dz_norm - c.tau) / std::max(c.tau, std::abs(b.t)));
        radius_worst = std::max(radius_worst, (b.dz_norm - c.tau) / c.tau);
    }
    add({"time_update_exact", update_worst <= 1e-14, update_worst, 1e-14, "t_k - t_{k-1} + |dz| = tau, relative to max(tau, |t_k|)"});
    add({"step_within_radius", radius_worst <= 1e-10, radius_worst, 1e-10, "|dz| <= tau"});
    add({"reaches_end_time", reaches_end, traj.final_step().t, c.end_time, "t_N >= T"});

    const ComplementarityReport comp = complementarity_report(traj);
    add({"complementarity", comp.ok, std::max({-comp.min_time_rate, comp.max_sum_defect, comp.max_scaled_product}),
         1e-8, "min time rate, sum defect and scaled product"});
    const OptimalityReport opt = optimality_report(traj, problem, 1e-8, 100, c.seed);
    add({"optimality_relations", opt.ok, opt.max_violation, 1e-8, "four relations, 100 random directions per step"});
    const int flagged = traj.descent_flagged_count();
    add({"descent_flagged", flagged == 0, static_cast<double>(flagged), 0.0, "steps accepted without descent"});
    add({"energy_residual", std::isfinite(run_res.energy.final_residual), run_res.energy.final_residual, 0.0,
         "cumulative discrete energy residual (reported)"});

    if (const ScalarRis* s = model.scalar(); s != nullptr && s->is_convex()) {
        const double err = std::abs(traj.final_step().z[0] - play_exact(*s, c.z0, traj.final_step().t));
        add({"play_operator_final", err <= 2.0 * c.tau, err, 2.0 * c.tau, "closed-form play operator at t_N"});
    }

    int failed = 0;
    for (const auto& chk : res.checks) failed += chk.pass ? 0 : 1;
    jsonl << nlohmann::json{{"summary", "verify"},
                            {"example", std::string(example_name(c.example))},
                            {"passed", static_cast<int>(res.checks.size()) - failed},
                            {"failed", failed}}
                 .dump()
          << '\n';
    return res;
}

/// Writes the configured mesh to path: VTK if the name ends in .vtk, the
/// text mesh format otherwise.
inline void mesh_command(const RunConfig& c, const std::string& path, std::ostream& console)
{
    if (c.is_scalar()) throw ConfigError("mesh: example " + std::string(example_name(c.example)) + " has no mesh");
    const Mesh mesh = Model::build_mesh(c);
    const MeshQuality q = inspect_mesh(mesh);
    const std::filesystem::path p(path);
    if (p.has_parent_path()) detail::prepare_dir(p.parent_path().string());
    auto out = detail::open_output(p);
    if (p.extension() == ".vtk") {
        write_vtk(out, mesh, Vector::Zero(mesh.node_count()), Vector::Zero(2 * mesh.node_count()), "liss mesh");
    } else {
        write_mesh(out, mesh);
    }
    detail::finish(out, p);
    char buf[160];
    std::snprintf(buf, sizeof buf, "%d nodes, %d triangles, h_max = %.4g, min angle = %.2f deg\n", mesh.node_count(),
                  mesh.triangle_count(), mesh.max_edge_length(), q.min_angle_deg);
    console << buf;
}

}  // namespace liss
