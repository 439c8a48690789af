// SPDX-License-Identifier: Apache-2.0
// Coupled-matrix models: Ising pair, Potts star, open chain and the D=1
// periodic lattice model, solved by block minimization over site measures
// with one bridge solve per coupling edge.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "abflow/eulerflow.hpp"
#include "abflow/grid.hpp"
#include "abflow/polynomial.hpp"

namespace abflow {

enum class ModelKind { Ising, Potts, Chain, QCD1 };

std::string to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);

struct ModelSpec {
    ModelKind kind = ModelKind::Ising;
    double beta = 2.0;                    // 1 (real symmetric) or 2 (hermitian)
    std::vector<Polynomial> potentials;   // P1,P2 | P1..Pq | single P
    std::size_t q = 2;                    // Potts / chain site count
    std::size_t lattice_size = 1;         // QCD1 periodic ring length

    // Discretization of every bridge and site measure.
    std::size_t nx = 96;
    std::size_t nt = 24;
    double span = 2.6;                    // densities live on [-span, span]

    // Outer solver controls.
    double tol = 1e-6;                    // relative objective stall tolerance
    std::size_t max_outer = 400;
    // 0: deterministic centered initialization; nonzero: randomized
    // shift/width restart (the basis of the multistart and the
    // reproducibility checks).
    std::uint64_t seed = 0;

    static ModelSpec from_json(const std::string& text);
    std::string to_json() const;
    void validate() const;

    std::size_t n_sites() const;
    // Coupling edges (a, b): the bridge runs from site a (t=0) to site b (t=1).
    std::vector<std::pair<std::size_t, std::size_t>> edges() const;
};

struct ModelResult {
    std::vector<GridMeasure> measures;    // one per site
    std::vector<BridgeResult> flows;      // one per coupling edge
    double free_energy = 0.0;
    std::vector<double> sd_residuals;     // per site: max weak-stationarity residual
    std::map<std::string, double> diagnostics;
    std::string note;                     // e.g. "local optimum" for q > 3 Potts

    std::string to_json() const;
};

ModelResult solve_ising(const ModelSpec& spec);
ModelResult solve_chain(const ModelSpec& spec);
ModelResult solve_potts(const ModelSpec& spec);
// Potts with several random initializations; distinct local optima only.
std::vector<ModelResult> solve_potts_multistart(const ModelSpec& spec, std::size_t n_seeds);
ModelResult solve_qcd1(const ModelSpec& spec);

// Moment envelope |int x^p dmu| <= R^p C_p (C_p the Catalan numbers): the
// minimal feasible R, the implied support bound R + 4, and whether the given
// R satisfies the envelope for all p <= max_p.
struct CatalanReport {
    double min_R = 0.0;
    double support_bound = 0.0;
    bool ok = true;
    std::vector<double> moments_abs;      // |a_p| for p = 0..max_p
};
CatalanReport catalan_envelope(const GridMeasure& mu, double R, std::size_t max_p);

}  // namespace abflow
