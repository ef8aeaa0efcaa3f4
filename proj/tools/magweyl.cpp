// magweyl command line: classify | compare | study | dynamics | export
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "magweyl/dynamics.hpp"
#include "magweyl/lab.hpp"

using namespace magweyl;

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    bool no_timing = false;
};

StudyConfig study_config(const Globals& g) {
    StudyConfig c = g.config.empty() ? parse_config("{}") : load_config(g.config);
    if (g.seed) c.seed = *g.seed;
    if (g.threads) c.threads = *g.threads;
    if (g.no_timing) c.no_timing = true;
    validate(c);
    return c;
}

ParamMap parse_params(const std::vector<std::string>& kv) {
    ParamMap p;
    for (const auto& s : kv) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("--param expects key=value, got '" + s + "'");
        try {
            p[s.substr(0, eq)] = std::stod(s.substr(eq + 1));
        } catch (const std::exception&) {
            throw ConfigError("--param value for '" + s.substr(0, eq) + "' is not a number");
        }
    }
    return p;
}

json regime_json(const RegimeReport& r) {
    json j = {{"d", r.d}, {"mu", r.mu}, {"h", r.h}, {"mu1", r.mu1}, {"mu2", r.mu2},
              {"regime", to_string(r.regime)}, {"eps", r.eps}};
    j["nbar"] = r.nbar ? json(*r.nbar) : json(nullptr);
    if (r.d == 3) {
        j["rho1"] = r.rho1;
        j["rho2"] = r.rho2;
        j["inner_edge"] = r.inner_edge;
    }
    return j;
}

void emit(const ScalingStudyResult& r, const StudyConfig& c) {
    if (!c.csv_path.empty()) export_result(r, "csv", c.csv_path);
    if (!c.json_path.empty()) export_result(r, "json", c.json_path);
    if (c.csv_path.empty() && c.json_path.empty()) write_csv(r.rows, std::cout);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Magnetic Schrodinger spectral laboratory"};
    app.set_help_flag("--help", "print help");  // keep -h free for the semiclassical parameter
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config, "JSON configuration file (MAGWEYL_* environment overrides apply)");
    app.add_option("--seed", g.seed, "RNG seed");
    app.add_option("--threads", g.threads, "worker threads for studies");
    app.add_flag("--no-timing", g.no_timing, "write 0 in the seconds column");

    auto* classify = app.add_subcommand("classify", "print the field-strength regime report");
    int d = 2;
    double mu = 0, h = 0;
    RegimeOptions ro;
    classify->add_option("--d", d, "dimension (2 or 3)");
    classify->add_option("--mu", mu)->required();
    classify->add_option("--h", h)->required();
    classify->add_option("--C1", ro.C1);
    classify->add_option("--C2", ro.C2);
    classify->add_option("--tau", ro.tau);
    classify->add_option("--V-ref", ro.V_ref);

    auto* compare = app.add_subcommand("compare", "one eigensolve against the semiclassical expressions");
    std::optional<double> cmu, ch;
    compare->add_option("--mu", cmu, "override the first configured pair");
    compare->add_option("--h", ch);

    auto* study = app.add_subcommand("study", "scaling study over the configured (mu, h) pairs");

    auto* dyn = app.add_subcommand("dynamics", "integrate the classical flow and write a trajectory CSV");
    std::string scenario = "landau_flat", out;
    std::vector<std::string> params;
    std::vector<double> x0{1, 1, 0}, p0{1, 0, 0};
    double T = 1, dt = 0.001;
    dyn->add_option("--scenario", scenario);
    dyn->add_option("--param", params, "scenario parameter key=value (repeatable)");
    dyn->add_option("--x", x0, "start position")->expected(2, 3);
    dyn->add_option("--p", p0, "start kinetic momentum xi - mu A")->expected(2, 3);
    dyn->add_option("--T", T);
    dyn->add_option("--dt", dt);
    dyn->add_option("--out", out, "CSV path (default stdout)");

    auto* exp = app.add_subcommand("export", "convert a saved JSON study result");
    std::string input, format = "csv", target;
    exp->add_option("--input", input)->required();
    exp->add_option("--format", format)->check(CLI::IsMember({"csv", "json"}));
    exp->add_option("--out", target)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*classify) {
            std::cout << regime_json(classify_regime(d, mu, h, ro)).dump(2) << '\n';
        } else if (*compare) {
            StudyConfig c = study_config(g);
            auto pairs = c.resolved_pairs();
            if (pairs.empty() && !(cmu && ch)) throw ConfigError("compare needs a (mu, h) pair: config pairs or --mu/--h");
            const double m = cmu ? *cmu : pairs.front().first, hh = ch ? *ch : pairs.front().second;
            Row r = compare_once(c, m, hh);
            write_csv({r}, std::cout);
            if (!r.note.empty()) std::cerr << "note: " << r.note << '\n';
        } else if (*study) {
            StudyConfig c = study_config(g);
            auto r = run_scaling_study(c);
            emit(r, c);
            for (const auto& f : r.fits) {
                std::cerr << f.quantity << " vs " << f.variable << ": ";
                if (f.points < 4)
                    std::cerr << f.note << '\n';
                else
                    std::cerr << "slope " << f.slope << " +- " << 2 * f.stderr_slope << ", predicted "
                              << (f.predicted ? std::to_string(*f.predicted) : std::string("none")) << '\n';
            }
        } else if (*dyn) {
            ProblemSpec s = make_scenario(scenario, parse_params(params));
            PhasePoint z;
            for (std::size_t k = 0; k < x0.size(); ++k) z.x[k] = x0[k];
            Vec3 p = Vec3::Zero();
            for (std::size_t k = 0; k < p0.size(); ++k) p[k] = p0[k];
            z.xi = p + s.mu * s.coeffs.A(z.x);
            auto tr = integrate_flow(s, z, T, dt);
            if (out.empty()) {
                write_trajectory_csv(tr, std::cout);
            } else {
                std::ostringstream os;
                write_trajectory_csv(tr, os);
                write_file(out, os.str());
            }
            std::cerr << "energy drift " << tr.energy_drift() << '\n';
        } else if (*exp) {
            std::ifstream in(input);
            if (!in) throw ConfigError("cannot open " + input);
            json j = json::parse(in, nullptr, false);
            if (j.is_discarded()) throw ConfigError(input + " is not valid JSON");
            export_result(result_from_json(j), format, target);
        }
    } catch (const SolverError& e) {
        std::cerr << "solver error: " << e.what() << '\n';
        return 3;
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
