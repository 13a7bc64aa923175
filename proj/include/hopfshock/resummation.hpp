#pragma once

// Right inverses (Id - S)^{-1} of divergence-form sources as conditionally
// convergent Neumann series, cancellation-resummed kernel tails and the
// quadrature (continuization) remainders that control them.

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "hopfshock/error.hpp"
#include "hopfshock/kernels.hpp"
#include "hopfshock/spaces.hpp"

namespace hopfshock {

enum class ContinuizationOrder { None, Trapezoid, Simpson };

/// One application of a transverse one-step operator S plus the discrete
/// derivative used to form N₂ = ∂_x n.
struct TransverseOperator {
    std::string name;
    Grid1D grid{1.0, 3};
    std::size_t components = 1;
    double period = 1.0;
    std::function<GridFunction(const GridFunction&)> apply;
    std::function<GridFunction(const GridFunction&)> dx;
    bool requires_projection = false;  // a crossing pair is present
    bool has_projection = false;       // S already contains the transverse projection
};

/// Conservative second-order central difference with zero values beyond the grid.
GridFunction central_dx(const GridFunction& f);

/// Convolution with the normalized moving heat kernel (4πT)^{-1/2} e^{-(x-y-aT)²/4T}
/// on the grid, with everything leaving the grid absorbed. A semigroup in T.
TransverseOperator heat_model_operator(const Grid1D& grid, double a, double T);

struct LedgerRecord {
    std::size_t j = 0;
    double increment_norm = 0.0;  // ‖S^j N₂‖_{B1}
    double mass = 0.0;            // ∫ (partial sum through j) dx
};

struct SeriesLedger {
    ContinuizationOrder order = ContinuizationOrder::None;
    std::vector<LedgerRecord> records;
    std::vector<std::size_t> snapshot_index;  // dyadic j at which partial sums are kept
    std::vector<GridFunction> snapshots;
    std::vector<double> block_increments;     // ‖S_{2N} - S_N‖_{B1} for N = 1, 2, 4, ...
    double envelope_constant = 0.0;           // C in C (NT)^{-1/4}
    double envelope_exponent = 0.0;           // fitted exponent over mass-conserving blocks
    double residual = std::numeric_limits<double>::quiet_NaN();  // ‖(Id-S)b - N₂‖_{B1}

    std::string to_csv() const;
};

class SeriesError : public Error {
public:
    SeriesError(ErrorKind kind, const std::string& what, SeriesLedger ledger)
        : Error(kind, what), ledger_(std::move(ledger)) {}
    const SeriesLedger& ledger() const noexcept { return ledger_; }

private:
    SeriesLedger ledger_;
};

struct NaiveSum {
    std::vector<double> norms;       // ‖∂_y^α k(·,jT)‖_{B1}, j = 1..N
    std::vector<double> cumulative;  // partial sums of norms
    double growth_exponent = 0.0;    // slope of log(S_{2N} - S_N) against log N
};

/// Cumulative Σ_{j≤N'} ‖∂_y^α k(·,jT;y)‖_{B1}. The growth exponent is read
/// from dyadic differences, which removes the convergent constant in the
/// p-series asymptotics.
NaiveSum naive_sum_norms(const ModelKernel& k, int alpha, double T, std::size_t N, const Grid1D& grid);

enum class TailMode { Raw, Cancelled };

struct TailResult {
    GridFunction column;
    double t_max = 0.0;           // where the time quadrature stopped
    double tail_estimate = 0.0;   // envelope-predicted ‖·‖ beyond t_max
};

/// Column x ↦ ∫_T^{upper} ∂_y k(x,t;y) dt. Cancelled mode uses K_y = a^{-1}(K_t - K_yy)
/// for K and direct quadrature for J; raw mode refuses upper = ∞.
TailResult resummed_tail(const ModelKernel& k, double T, double upper, TailMode mode, double y, const Grid1D& grid,
                         double tol = 1e-10);

struct ContinuizationResult {
    ContinuizationOrder order;
    std::vector<std::size_t> n_values;
    std::vector<double> theta_norms;      // ‖θ_N‖_{B1}: discrete sum minus T^{-1}-scaled integral
    std::vector<double> tail_norms;       // Σ of local rule-block remainder norms over [NT, cNT], c = tail_factor
    std::vector<double> remainder_times;  // t at which the remainder integrand is sampled
    std::vector<double> remainder_norms;  // ‖K_ytt‖ (trapezoid) or ‖K_ytttt‖ (simpson)
    double integrand_exponent = 0.0;
    double tail_exponent = 0.0;
};

/// θ_N = T Σ_j w_j K_y(·,jT;y) - ∫_T^{NT} K_y dt for the chosen rule weights w_j.
ContinuizationResult continuization_error(const ModelKernel& k, double T, const std::vector<std::size_t>& n_values,
                                          ContinuizationOrder order, const Grid1D& grid, double y = 0.0,
                                          std::size_t tail_factor = 8);

struct InverseOptions {
    double tol = 1e-9;           // increment tolerance
    double verify_tol = 1e-6;    // defining-equation residual
    std::size_t max_terms = 20000;
    bool envelope_check = true;  // false: raw tolerance only
    ContinuizationOrder order = ContinuizationOrder::Trapezoid;
};

struct InverseResult {
    GridFunction b;
    SeriesLedger ledger;
};

/// b = Σ_j S^j ∂_x n, verified by ‖(Id - S)b - ∂_x n‖_{B1} ≤ verify_tol.
InverseResult apply_right_inverse(const TransverseOperator& op, const GridFunction& n_density,
                                  const InverseOptions& opt = {});

/// Same series for a source already in derivative form: b = Σ_j S^j N₂.
InverseResult apply_right_inverse_source(const TransverseOperator& op, const GridFunction& source,
                                         const InverseOptions& opt = {});

struct LipschitzReport {
    std::vector<double> deltas;
    std::vector<double> b_quotients;       // ‖b(ε+δ) - b(ε)‖_{B1}/δ
    std::vector<double> kernel_quotients;  // same for the resummed kernel column
};

/// Finite-difference Lipschitz quotients of the right inverse in the parameter.
LipschitzReport lipschitz_in_parameter(const std::function<TransverseOperator(double)>& family,
                                       const GridFunction& n_density, double eps0, const std::vector<double>& deltas,
                                       const InverseOptions& opt = {});

}  // namespace hopfshock
