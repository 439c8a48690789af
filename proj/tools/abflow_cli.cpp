// SPDX-License-Identifier: Apache-2.0
// Command-line front end: bridge solves, one-matrix equilibria, the coupled
// models, the finite-N references and input validation. Every subcommand
// prints a JSON summary (with the seed and a hash of the configuration) to
// stdout; bulk data goes to CSV files when requested.
//
// Exit codes: 0 success, 2 invalid input, 1 runtime failure.
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "abflow/eulerflow.hpp"
#include "abflow/freeconv.hpp"
#include "abflow/grid.hpp"
#include "abflow/measures.hpp"
#include "abflow/models.hpp"
#include "abflow/rmt.hpp"

using nlohmann::json;
using namespace abflow;

namespace {

std::string config_hash(const json& j) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016zx", std::hash<std::string>{}(j.dump()));
    return buf;
}

Grid cells_of(const SpaceTimeGrid& g) {
    return Grid::uniform(g.center(0), g.center(g.nx - 1), g.nx);
}

// Measure spec: "semicircle:VAR[:CENTER]", "bump:CENTER:HALFWIDTH",
// "uniform:A:B" or "csv:PATH".
GridMeasure parse_measure(const std::string& spec, const Grid& g) {
    std::vector<std::string> parts;
    std::stringstream ss(spec);
    for (std::string tok; std::getline(ss, tok, ':');) parts.push_back(tok);
    if (parts.empty()) throw CLI::ValidationError("measure", "empty measure spec");
    const auto num = [&](std::size_t k) { return std::stod(parts.at(k)); };
    if (parts[0] == "semicircle")
        return GridMeasure::semicircle(num(1), g, parts.size() > 2 ? num(2) : 0.0);
    if (parts[0] == "bump") return GridMeasure::bump(num(1), num(2), g);
    if (parts[0] == "uniform") return GridMeasure::uniform_density(num(1), num(2), g);
    if (parts[0] == "csv") {
        std::string path = parts[1];
        for (std::size_t k = 2; k < parts.size(); ++k) path += ":" + parts[k];
        GridMeasure m = GridMeasure::load_csv(path);
        return GridMeasure(g, resample_to_cells(m, SpaceTimeGrid{g.size(), 3, g.a() - 0.5 * g.spacing(),
                                                                 g.b() + 0.5 * g.spacing()}));
    }
    throw CLI::ValidationError("measure", "unknown measure kind: " + parts[0]);
}

void emit(const json& j) { std::cout << j.dump(2) << std::endl; }

void save_measure(const GridMeasure& m, const std::string& path) {
    if (!path.empty()) m.save_csv(path);
}

json model_summary(const ModelSpec& spec, const ModelResult& r) {
    json j = json::parse(r.to_json());
    j["config"] = json::parse(spec.to_json());
    j["config_hash"] = config_hash(j["config"]);
    j["seed"] = spec.seed;
    return j;
}

ModelSpec spec_from_cli(ModelKind kind, const std::string& spec_file,
                        const std::vector<double>& pot, std::size_t q, std::size_t lattice,
                        std::size_t nx, std::size_t nt, double span, std::uint64_t seed) {
    ModelSpec s;
    if (!spec_file.empty()) {
        std::ifstream in(spec_file);
        if (!in) throw CLI::ValidationError("--spec", "cannot open " + spec_file);
        std::stringstream ss;
        ss << in.rdbuf();
        s = ModelSpec::from_json(ss.str());
    } else {
        s.kind = kind;
        s.potentials = {Polynomial(pot)};
        s.q = q;
        s.lattice_size = lattice;
        s.nx = nx;
        s.nt = nt;
        s.span = span;
        s.seed = seed;
        s.validate();
    }
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"large-N coupled-matrix models via entropic bridge flows"};
    app.require_subcommand(1);

    // Common grid / solver knobs.
    std::size_t nx = 96, nt = 24;
    double span = 2.6;
    std::uint64_t seed = 0;
    std::vector<double> pot = {0.0, 0.0, 0.5, 0.0, 0.25};
    std::string spec_file, out_csv, out_csv_b, flow_csv;

    // bridge
    auto* cb = app.add_subcommand("bridge", "solve the two-marginal bridge problem");
    std::string mu0_spec = "semicircle:0.5", mu1_spec = "semicircle:1.0";
    double beta = 2.0, gap_tol = 1e-3;
    cb->add_option("--mu0", mu0_spec, "left marginal (semicircle:v[:c] | bump:c:w | uniform:a:b | csv:path)");
    cb->add_option("--mu1", mu1_spec, "right marginal");
    cb->add_option("--nx", nx);
    cb->add_option("--nt", nt);
    cb->add_option("--span", span, "space domain is [-span, span]");
    cb->add_option("--beta", beta);
    cb->add_option("--gap-tol", gap_tol, "relative certificate gap target");
    cb->add_option("--flow-csv", flow_csv, "write the full space-time flow as CSV");

    // onematrix
    auto* co = app.add_subcommand("onematrix", "one-matrix equilibrium measure");
    double obeta = 2.0;
    std::size_t onodes = 601;
    double ospan = 2.6;
    co->add_option("--beta", obeta);
    co->add_option("--potential", pot, "ascending coefficients of V");
    co->add_option("--nodes", onodes);
    co->add_option("--span", ospan);
    co->add_option("--out-csv", out_csv, "write the equilibrium density");

    // models
    std::size_t q = 3, lattice = 1;
    auto add_model_opts = [&](CLI::App* c) {
        c->add_option("--spec", spec_file, "model spec as JSON (overrides the flags)");
        c->add_option("--potential", pot, "ascending coefficients, shared by all sites");
        c->add_option("--nx", nx);
        c->add_option("--nt", nt);
        c->add_option("--span", span);
        c->add_option("--seed", seed, "0 = deterministic init, else randomized restart");
        c->add_option("--out-csv", out_csv, "write the first site measure");
        c->add_option("--out-csv-b", out_csv_b, "write the second site measure");
    };
    auto* ci = app.add_subcommand("ising", "two coupled matrices");
    add_model_opts(ci);
    auto* cc = app.add_subcommand("chain", "open chain of q matrices");
    add_model_opts(cc);
    cc->add_option("--q", q, "number of sites");
    auto* cp = app.add_subcommand("potts", "q-state star coupling");
    add_model_opts(cp);
    cp->add_option("--q", q, "number of sites");
    std::size_t starts = 1;
    cp->add_option("--multistart", starts, "random restarts (distinct optima reported)");
    auto* cq = app.add_subcommand("qcd1", "periodic one-site loop model");
    add_model_opts(cq);
    cq->add_option("--lattice-size", lattice, "ring length");

    // hciz
    auto* ch = app.add_subcommand("hciz", "finite-N spherical integral (exact and MC)");
    std::vector<double> a_eigs, b_eigs;
    std::size_t mc_samples = 0;
    std::uint64_t mc_seed = 7;
    ch->add_option("--a", a_eigs, "eigenvalues of A")->required();
    ch->add_option("--b", b_eigs, "eigenvalues of B")->required();
    ch->add_option("--mc-samples", mc_samples, "also run the Monte Carlo estimate");
    ch->add_option("--mc-seed", mc_seed);

    // gibbs
    auto* cg = app.add_subcommand("gibbs", "Metropolis sampling of the coupled pair");
    GibbsOptions gopts;
    cg->add_option("--n", gopts.n, "matrix size");
    cg->add_option("--sweeps", gopts.n_sweeps);
    cg->add_option("--burnin", gopts.burnin);
    cg->add_option("--thin", gopts.thin);
    cg->add_option("--coupling", gopts.coupling);
    cg->add_option("--seed", gopts.seed);
    cg->add_option("--potential", pot, "shared site potential");
    cg->add_option("--out-csv", out_csv, "histogram of site-A eigenvalues");
    cg->add_option("--out-csv-b", out_csv_b, "histogram of site-B eigenvalues");
    std::size_t nbins = 48;
    cg->add_option("--bins", nbins);

    // bridge-mc
    auto* cm = app.add_subcommand("bridge-mc", "hermitian bridge spectra by sampling");
    std::string mu0_mc = "bump:0:0.5";
    std::size_t mc_n = 64, mc_draws = 400;
    std::vector<double> times = {0.25, 0.5, 0.75};
    std::string hist_prefix;
    cm->add_option("--mu0", mu0_mc, "pinned left endpoint");
    cm->add_option("--n", mc_n, "matrix size");
    cm->add_option("--samples", mc_draws);
    cm->add_option("--times", times, "interior times in (0, 1]");
    cm->add_option("--bins", nbins);
    cm->add_option("--seed", mc_seed);
    cm->add_option("--hist-prefix", hist_prefix, "write one histogram CSV per time");

    // validate
    auto* cv = app.add_subcommand("validate", "validate a model spec JSON file");
    cv->add_option("--spec", spec_file, "path to the JSON spec")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) ? 2 : 0;
    }

    try {
        if (cb->parsed()) {
            const SpaceTimeGrid g{nx, nt, -span, span};
            const Grid cg_ = cells_of(g);
            BridgeOptions o;
            o.beta = beta;
            o.gap_tol = gap_tol;
            const BridgeResult r = solve_bridge(parse_measure(mu0_spec, cg_),
                                                parse_measure(mu1_spec, cg_), g, o);
            json j = json::parse(r.to_json());
            j["config"] = {{"mu0", mu0_spec}, {"mu1", mu1_spec}, {"nx", nx}, {"nt", nt},
                           {"span", span},    {"beta", beta},    {"gap_tol", gap_tol}};
            j["config_hash"] = config_hash(j["config"]);
            emit(j);
            if (!flow_csv.empty()) r.flow.save_csv(flow_csv);
        } else if (co->parsed()) {
            const EquilibriumResult r =
                equilibrium_one_matrix(obeta, Polynomial(pot), Grid::uniform(-ospan, ospan, onodes));
            json j = {{"energy", r.energy},
                      {"residual", r.residual},
                      {"iterations", r.iterations},
                      {"config", {{"beta", obeta}, {"potential", pot}, {"nodes", onodes}, {"span", ospan}}}};
            j["config_hash"] = config_hash(j["config"]);
            emit(j);
            save_measure(r.minimizer, out_csv);
        } else if (ci->parsed() || cc->parsed() || cp->parsed() || cq->parsed()) {
            const ModelKind kind = ci->parsed()   ? ModelKind::Ising
                                   : cc->parsed() ? ModelKind::Chain
                                   : cp->parsed() ? ModelKind::Potts
                                                  : ModelKind::QCD1;
            const ModelSpec s = spec_from_cli(kind, spec_file, pot, q, lattice, nx, nt, span, seed);
            if (cp->parsed() && starts > 1) {
                const auto all = solve_potts_multistart(s, starts);
                json arr = json::array();
                for (const auto& r : all) arr.push_back(model_summary(s, r));
                emit(arr);
                if (!all.empty()) save_measure(all.front().measures[0], out_csv);
            } else {
                const ModelResult r = kind == ModelKind::Ising   ? solve_ising(s)
                                      : kind == ModelKind::Chain ? solve_chain(s)
                                      : kind == ModelKind::Potts ? solve_potts(s)
                                                                 : solve_qcd1(s);
                emit(model_summary(s, r));
                save_measure(r.measures[0], out_csv);
                if (r.measures.size() > 1) save_measure(r.measures[1], out_csv_b);
            }
        } else if (ch->parsed()) {
            json j = {{"exact", hciz_exact(a_eigs, b_eigs)},
                      {"config", {{"a", a_eigs}, {"b", b_eigs}}}};
            if (mc_samples > 0) {
                const McEstimate mc = hciz_mc(a_eigs, b_eigs, mc_samples, mc_seed);
                j["mc"] = json::parse(mc.to_json());
            }
            j["config_hash"] = config_hash(j["config"]);
            emit(j);
        } else if (cg->parsed()) {
            const Polynomial P(pot);
            const GibbsResult r = gibbs_two_matrix(P, P, gopts);
            json j = {{"acceptance", r.acceptance},
                      {"n_pooled", r.n_pooled},
                      {"seed", gopts.seed},
                      {"config",
                       {{"n", gopts.n}, {"sweeps", gopts.n_sweeps}, {"burnin", gopts.burnin},
                        {"thin", gopts.thin}, {"coupling", gopts.coupling}, {"potential", pot}}}};
            j["config_hash"] = config_hash(j["config"]);
            emit(j);
            if (!out_csv.empty()) histogram_from_samples(r.eigs_a, nbins).save_csv(out_csv);
            if (!out_csv_b.empty()) histogram_from_samples(r.eigs_b, nbins).save_csv(out_csv_b);
        } else if (cm->parsed()) {
            const Grid fine = Grid::uniform(-2.0, 2.0, 801);
            const GridMeasure mu0 = parse_measure(mu0_mc, fine);
            const auto hists = matrix_bridge_sampler(mu0, mc_n, times, mc_draws, nbins, mc_seed);
            json j = {{"seed", mc_seed},
                      {"config",
                       {{"mu0", mu0_mc}, {"n", mc_n}, {"samples", mc_draws}, {"times", times},
                        {"bins", nbins}}}};
            j["config_hash"] = config_hash(j["config"]);
            emit(j);
            for (std::size_t k = 0; k < hists.size() && !hist_prefix.empty(); ++k) {
                std::ostringstream os;
                os << hist_prefix << "_t" << times[k] << ".csv";
                hists[k].save_csv(os.str());
            }
        } else if (cv->parsed()) {
            std::ifstream in(spec_file);
            if (!in) {
                std::fprintf(stderr, "cannot open %s\n", spec_file.c_str());
                return 2;
            }
            std::stringstream ss;
            ss << in.rdbuf();
            try {
                const ModelSpec s = ModelSpec::from_json(ss.str());
                emit(json::parse(s.to_json()));
            } catch (const std::exception& e) {
                std::fprintf(stderr, "invalid spec: %s\n", e.what());
                return 2;
            }
        }
    } catch (const CLI::ValidationError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "invalid input: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
