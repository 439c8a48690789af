// SPDX-License-Identifier: Apache-2.0
// Real polynomials in ascending-coefficient form, with the quartic-growth check
// required of model potentials.
#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace abflow {

struct Polynomial {
    std::vector<double> coeffs;  // coeffs[k] multiplies x^k

    Polynomial() = default;
    explicit Polynomial(std::vector<double> c) : coeffs(std::move(c)) { trim(); }

    void trim() {
        while (coeffs.size() > 1 && coeffs.back() == 0.0) coeffs.pop_back();
        if (coeffs.empty()) coeffs.push_back(0.0);
    }
    std::size_t degree() const { return coeffs.size() - 1; }
    double leading() const { return coeffs.back(); }

    double operator()(double x) const {
        double v = 0.0;
        for (std::size_t k = coeffs.size(); k-- > 0;) v = v * x + coeffs[k];
        return v;
    }
    Polynomial derivative() const {
        if (coeffs.size() <= 1) return Polynomial({0.0});
        std::vector<double> d(coeffs.size() - 1);
        for (std::size_t k = 1; k < coeffs.size(); ++k) d[k - 1] = coeffs[k] * double(k);
        return Polynomial(std::move(d));
    }

    // Even degree >= 4 with positive leading coefficient.
    bool quartic_growth() const {
        return degree() >= 4 && degree() % 2 == 0 && leading() > 0.0;
    }
    void require_quartic_growth(const char* who) const {
        if (!quartic_growth())
            throw std::invalid_argument(std::string(who) +
                ": potential must have even degree >= 4 with positive leading coefficient");
    }
};

}  // namespace abflow
