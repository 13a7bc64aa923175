#include "hopfshock/resummation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <boost/math/quadrature/gauss.hpp>

namespace hopfshock {

GridFunction central_dx(const GridFunction& f) {
    GridFunction out(f.grid, f.components);
    const std::size_t N = f.grid.size();
    const double inv = 1.0 / (2.0 * f.grid.spacing());
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t c = 0; c < f.components; ++c) {
            const double right = i + 1 < N ? f.at(i + 1, c) : 0.0;
            const double left = i > 0 ? f.at(i - 1, c) : 0.0;
            out.at(i, c) = (right - left) * inv;
        }
    return out;
}

TransverseOperator heat_model_operator(const Grid1D& grid, double a, double T) {
    require(T > 0.0, ErrorKind::Domain, "model operator needs T > 0");
    require(a != 0.0, ErrorKind::Argument, "model operator needs a nonzero speed");
    const double h = grid.spacing();
    const double radius = std::sqrt(4.0 * T * 42.0);  // kernel below e^{-42} beyond this
    const auto lo = static_cast<long>(std::floor((a * T - radius) / h));
    const auto hi = static_cast<long>(std::ceil((a * T + radius) / h));
    std::vector<double> band;
    for (long k = lo; k <= hi; ++k) {
        const double xi = static_cast<double>(k) * h - a * T;
        band.push_back(h * std::exp(-xi * xi / (4.0 * T)) / std::sqrt(4.0 * std::numbers::pi * T));
    }
    TransverseOperator op;
    op.name = "heat_model";
    op.grid = grid;
    op.period = T;
    op.dx = central_dx;
    op.apply = [band, lo, grid](const GridFunction& f) {
        GridFunction out(grid, f.components);
        const auto N = static_cast<long>(grid.size());
        for (long j = 0; j < N; ++j) {
            for (std::size_t c = 0; c < f.components; ++c) {
                const double fj = f.at(static_cast<std::size_t>(j), c);
                if (fj == 0.0) continue;
                // out_i += band[i - j - lo] f_j
                const long i0 = std::max(0L, j + lo);
                const long i1 = std::min(N - 1, j + lo + static_cast<long>(band.size()) - 1);
                for (long i = i0; i <= i1; ++i)
                    out.at(static_cast<std::size_t>(i), c) += band[static_cast<std::size_t>(i - j - lo)] * fj;
            }
        }
        return out;
    };
    return op;
}

std::string SeriesLedger::to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "j,increment_norm,mass\n";
    for (const auto& r : records) os << r.j << ',' << r.increment_norm << ',' << r.mass << '\n';
    return os.str();
}

namespace {

double total_mass(const GridFunction& f) {
    double m = 0.0;
    for (std::size_t c = 0; c < f.components; ++c) m += integral(f, c);
    return m;
}

double l1_total(const GridFunction& f) {
    double m = 0.0;
    for (std::size_t c = 0; c < f.components; ++c) m += norm_l1(f.component(c));
    return m;
}

bool is_power_of_two(std::size_t n) { return n && !(n & (n - 1)); }

void gaussian_grid_check(const ModelKernel& k, double y, double t_max, const Grid1D& grid) {
    if (k.mode != KernelMode::GaussianK) return;
    const double reach = std::abs(y + k.a * t_max) + 8.0 * std::sqrt(t_max);
    require(reach <= grid.half_width(), ErrorKind::DomainTooSmall, "kernel signal leaves the grid");
}

// col += w * ∂_t^β ∂_y^α k(x_i, t; y), restricted to where a Gaussian kernel is non-negligible
void accumulate(Vec& col, const ModelKernel& k, int alpha, int beta, double w, double t, double y, const Grid1D& g) {
    std::size_t i0 = 0, i1 = g.size() - 1;
    if (k.mode == KernelMode::GaussianK) {
        const double c = y + k.a * t, r = 12.0 * std::sqrt(t) + 2.0;
        const double lo = (c - r + g.half_width()) / g.spacing(), hi = (c + r + g.half_width()) / g.spacing();
        if (hi < 0 || lo > static_cast<double>(g.size() - 1)) return;
        i0 = static_cast<std::size_t>(std::max(0.0, std::floor(lo)));
        i1 = static_cast<std::size_t>(std::min(static_cast<double>(g.size() - 1), std::ceil(hi)));
    }
    for (std::size_t i = i0; i <= i1; ++i)
        col[static_cast<Eigen::Index>(i)] += w * kernel_derivative(k, alpha, beta, g.x(i), t, y);
}

// ∫_{t0}^{t1} of a column-valued integrand by 20-point Gauss-Legendre on `pieces` sub-panels.
void integrate_panel(Vec& col, const ModelKernel& k, int alpha, int beta, double scale, double t0, double t1,
                     double y, const Grid1D& g, int pieces) {
    using GL = boost::math::quadrature::gauss<double, 20>;
    const auto& xs = GL::abscissa();
    const auto& ws = GL::weights();
    const double dt = (t1 - t0) / pieces;
    for (int p = 0; p < pieces; ++p) {
        const double a0 = t0 + p * dt, mid = a0 + 0.5 * dt, half = 0.5 * dt;
        for (std::size_t q = 0; q < xs.size(); ++q) {
            const double w = scale * ws[q] * half;
            if (xs[q] == 0.0) {
                accumulate(col, k, alpha, beta, w, mid, y, g);
            } else {
                accumulate(col, k, alpha, beta, w, mid - half * xs[q], y, g);
                accumulate(col, k, alpha, beta, w, mid + half * xs[q], y, g);
            }
        }
    }
}

// Panel boundaries from T to `upper`, no wider than the kernel's time footprint.
std::vector<double> time_panels(double T, double upper, double a) {
    std::vector<double> edges{T};
    while (edges.back() < upper) {
        const double t = edges.back();
        const double width = std::min(0.25 * t, std::max(0.05, 1.5 * std::sqrt(t) / std::abs(a)));
        edges.push_back(std::min(upper, t + width));
    }
    return edges;
}

}  // namespace

NaiveSum naive_sum_norms(const ModelKernel& k, int alpha, double T, std::size_t N, const Grid1D& grid) {
    require(T >= 1.0, ErrorKind::Argument, "naive sums need T >= 1");
    require(N >= 16, ErrorKind::Argument, "naive sums need N >= 16");
    if (k.mode == KernelMode::GaussianK) {
        const double tail = std::erfc(grid.half_width() / (2.0 * std::sqrt(T * static_cast<double>(N))));
        require(tail <= 1e-6, ErrorKind::DomainTooSmall, "grid too small for the largest time");
    }
    NaiveSum out;
    double acc = 0.0;
    for (std::size_t j = 1; j <= N; ++j) {
        out.norms.push_back(kernel_norm(k, alpha, 0, NormKind::B1, T * static_cast<double>(j), grid));
        acc += out.norms.back();
        out.cumulative.push_back(acc);
    }
    std::vector<double> lx, ly;
    for (std::size_t n = 8; 2 * n <= N; n *= 2) {
        lx.push_back(std::log(static_cast<double>(n)));
        ly.push_back(std::log(out.cumulative[2 * n - 1] - out.cumulative[n - 1]));
    }
    require(lx.size() >= 2, ErrorKind::Argument, "not enough dyadic blocks for a growth fit");
    out.growth_exponent = fit_line(lx, ly).slope;
    return out;
}

TailResult resummed_tail(const ModelKernel& k, double T, double upper, TailMode mode, double y, const Grid1D& grid,
                         double tol) {
    k.validate();
    require(T > 0.0 && upper > T, ErrorKind::Argument, "tail needs 0 < T < upper");
    const bool infinite = !std::isfinite(upper);
    if (mode == TailMode::Raw)
        require(!infinite, ErrorKind::Argument,
                "raw tail to infinity is not absolutely convergent; use the cancelled mode");
    TailResult out{GridFunction(grid), upper, 0.0};
    Vec col = Vec::Zero(static_cast<Eigen::Index>(grid.size()));

    double t_end = upper;
    if (infinite) {
        if (k.mode == KernelMode::GaussianK) {
            // the Gaussian has left the grid with a 12-width margin
            t_end = T;
            while (std::abs(y + k.a * t_end) < grid.half_width() + 12.0 * std::sqrt(t_end) + 2.0) t_end *= 1.1;
        } else {
            // J_y(x,t;y) ∝ e^{-(y+at)²/4t}/√t: stop once it is below tol
            t_end = std::max(T, -y / k.a);
            while (std::exp(-(y + k.a * t_end) * (y + k.a * t_end) / (4 * t_end)) > 1e-3 * tol) t_end *= 1.1;
        }
        out.t_max = t_end;
    }
    const auto edges = time_panels(T, t_end, k.a);
    if (k.mode == KernelMode::GaussianK && mode == TailMode::Cancelled) {
        const double ia = 1.0 / k.a;
        accumulate(col, k, 0, 0, -ia, T, y, grid);
        if (!infinite) accumulate(col, k, 0, 0, ia, upper, y, grid);
        for (std::size_t p = 0; p + 1 < edges.size(); ++p)
            integrate_panel(col, k, 2, 0, -ia, edges[p], edges[p + 1], y, grid, 1);
        if (infinite) {
            // ∫_{t_max}^∞ ‖K_yy‖ dt with ‖K_yy(t)‖ = c t^{-5/4}
            const Grid1D comoving(std::max(40.0, 14.0 * std::sqrt(t_end)), 2001);
            const double c = kernel_norm(k, 2, 0, NormKind::B1, t_end, comoving) * std::pow(t_end, 1.25);
            out.tail_estimate = 4.0 * c * std::pow(t_end, -0.25) / std::abs(k.a);
        }
    } else {
        for (std::size_t p = 0; p + 1 < edges.size(); ++p)
            integrate_panel(col, k, 1, 0, 1.0, edges[p], edges[p + 1], y, grid, 1);
    }
    out.column.values = col;
    return out;
}

ContinuizationResult continuization_error(const ModelKernel& k, double T, const std::vector<std::size_t>& n_values,
                                          ContinuizationOrder order, const Grid1D& grid, double y,
                                          std::size_t tail_factor) {
    k.validate();
    require(!n_values.empty(), ErrorKind::Argument, "need at least one N");
    require(tail_factor >= 2, ErrorKind::Argument, "tail factor must be >= 2");
    for (auto n : n_values) {
        require(n >= 8, ErrorKind::Argument, "continuization needs N >= 8");
        require(order != ContinuizationOrder::Simpson || n % 2 == 0, ErrorKind::Argument,
                "simpson continuization needs an even panel count");
    }
    const std::size_t n_top = *std::max_element(n_values.begin(), n_values.end()) * tail_factor;
    gaussian_grid_check(k, y, T * static_cast<double>(n_top + 1), grid);

    // θ_N for N panels on [T, (N+1)T]: nodes t_j = jT, j = 1..N+1
    auto node_weight = [&](std::size_t j, std::size_t N) {
        switch (order) {
            case ContinuizationOrder::None: return j <= N ? 1.0 : 0.0;
            case ContinuizationOrder::Trapezoid: return (j == 1 || j == N + 1) ? 0.5 : 1.0;
            case ContinuizationOrder::Simpson:
                if (j == 1 || j == N + 1) return 1.0 / 3.0;
                return (j % 2 == 0) ? 4.0 / 3.0 : 2.0 / 3.0;
        }
        return 0.0;
    };
    auto theta = [&](std::size_t N) {
        Vec col = Vec::Zero(static_cast<Eigen::Index>(grid.size()));
        for (std::size_t j = 1; j <= N + 1; ++j) {
            const double w = node_weight(j, N);
            if (w != 0.0) accumulate(col, k, 1, 0, w, T * static_cast<double>(j), y, grid);
        }
        for (std::size_t j = 1; j <= N; ++j)
            integrate_panel(col, k, 1, 0, -1.0 / T, T * static_cast<double>(j), T * static_cast<double>(j + 1), y,
                            grid, 2);
        return col;
    };

    // local remainder of one rule block (one panel, or a panel pair for simpson) starting at node j
    const std::size_t span = order == ContinuizationOrder::Simpson ? 2 : 1;
    auto block_norm = [&](std::size_t j) {
        Vec col = Vec::Zero(static_cast<Eigen::Index>(grid.size()));
        const double t0 = T * static_cast<double>(j);
        if (order == ContinuizationOrder::Simpson) {
            accumulate(col, k, 1, 0, 1.0 / 3.0, t0, y, grid);
            accumulate(col, k, 1, 0, 4.0 / 3.0, t0 + T, y, grid);
            accumulate(col, k, 1, 0, 1.0 / 3.0, t0 + 2 * T, y, grid);
        } else if (order == ContinuizationOrder::Trapezoid) {
            accumulate(col, k, 1, 0, 0.5, t0, y, grid);
            accumulate(col, k, 1, 0, 0.5, t0 + T, y, grid);
        } else {
            accumulate(col, k, 1, 0, 1.0, t0, y, grid);
        }
        for (std::size_t p = 0; p < span; ++p)
            integrate_panel(col, k, 1, 0, -1.0 / T, t0 + T * static_cast<double>(p), t0 + T * static_cast<double>(p + 1),
                            y, grid, 2);
        return l2_norm(grid, 1, col);
    };
    std::vector<double> blocks(n_top + 2, 0.0);
    for (std::size_t j = 1; j + span <= n_top + 1; j += span) blocks[j] = block_norm(j);

    ContinuizationResult out;
    out.order = order;
    const int beta = order == ContinuizationOrder::Simpson ? 4 : (order == ContinuizationOrder::Trapezoid ? 2 : 0);
    const Grid1D comoving(std::max(40.0, 14.0 * std::sqrt(T * static_cast<double>(n_top))), 4001);
    for (auto N : n_values) {
        out.n_values.push_back(N);
        out.theta_norms.push_back(l2_norm(grid, 1, theta(N)));
        double tail = 0.0;
        for (std::size_t j = N + 1; j + span <= N * tail_factor + 1; j += span) tail += blocks[j];
        out.tail_norms.push_back(tail);
        const double t = T * static_cast<double>(N);
        out.remainder_times.push_back(t);
        out.remainder_norms.push_back(kernel_norm(k, 1, beta, NormKind::B1, t, comoving));
    }
    if (out.n_values.size() >= 2) {
        out.integrand_exponent = fit_power_law(out.remainder_times, out.remainder_norms).exponent;
        std::vector<double> nt;
        for (auto N : out.n_values) nt.push_back(T * static_cast<double>(N));
        out.tail_exponent = fit_power_law(nt, out.tail_norms).exponent;
    }
    return out;
}

namespace {

InverseResult sum_series(const TransverseOperator& op, const GridFunction& N2, double n_l1, const InverseOptions& opt) {
    require(opt.tol > 0 && opt.verify_tol > 0, ErrorKind::Argument, "tolerances must be positive");
    if (op.requires_projection && !op.has_projection)
        fail(ErrorKind::Configuration, "operator with a crossing pair needs the transverse projection");

    InverseResult res{GridFunction(op.grid, op.components), {}};
    auto& ledger = res.ledger;
    ledger.order = opt.order;
    const double T = op.period;

    GridFunction term = N2;
    GridFunction& b = res.b;
    bool converged = false;
    for (std::size_t j = 0; j < opt.max_terms; ++j) {
        b.values += term.values;
        const double inc = norm_b1(term);
        ledger.records.push_back({j, inc, total_mass(b)});
        const std::size_t count = j + 1;  // b = S_count
        if (is_power_of_two(count)) {
            ledger.snapshot_index.push_back(count);
            ledger.snapshots.push_back(b);
            const auto m = ledger.snapshots.size();
            if (m >= 2) {
                const auto& s2 = ledger.snapshots[m - 1];
                const auto& s1 = ledger.snapshots[m - 2];
                ledger.block_increments.push_back(l2_norm(op.grid, op.components, Vec(s2.values - s1.values)));
            }
        }
        if (inc < opt.tol) {
            bool ok = true;
            if (opt.envelope_check) {
                // fit C (NT)^{-1/4} on blocks that still conserve mass, then require
                // no later block to sit more than a factor 10 above it
                std::vector<double> nt, v;
                for (std::size_t q = 1; q < ledger.block_increments.size(); ++q) {
                    const std::size_t n2 = ledger.snapshot_index[q + 1];
                    if (std::abs(total_mass(ledger.snapshots[q + 1])) > 1e-8 * n_l1) break;
                    nt.push_back(T * static_cast<double>(n2 / 2));
                    v.push_back(ledger.block_increments[q]);
                }
                if (nt.size() >= 2) {
                    const auto fit = fit_power_law(nt, v);
                    ledger.envelope_exponent = fit.exponent;
                    double c = 0.0;
                    for (std::size_t q = 0; q < nt.size(); ++q) c = std::max(c, v[q] * std::pow(nt[q], 0.25));
                    ledger.envelope_constant = c;
                    for (std::size_t q = 0; q < ledger.block_increments.size(); ++q) {
                        const double n_half = T * static_cast<double>(ledger.snapshot_index[q + 1] / 2);
                        if (ledger.block_increments[q] > 10.0 * c * std::pow(n_half, -0.25)) ok = false;
                    }
                }
            }
            if (ok) {
                converged = true;
                break;
            }
        }
        term = op.apply(term);
    }
    if (!converged)
        throw SeriesError(ErrorKind::Nonconvergence, "Neumann series increments not Cauchy within max_terms", ledger);
    const GridFunction Sb = op.apply(b);
    ledger.residual = l2_norm(op.grid, op.components, Vec(b.values - Sb.values - N2.values));
    if (!(ledger.residual <= opt.verify_tol))
        throw SeriesError(ErrorKind::Nonconvergence, "right inverse fails its defining equation", ledger);
    return res;
}

}  // namespace

InverseResult apply_right_inverse(const TransverseOperator& op, const GridFunction& n_density,
                                  const InverseOptions& opt) {
    require(n_density.grid == op.grid && n_density.components == op.components, ErrorKind::Dimension,
            "density does not live on the operator's grid");
    return sum_series(op, op.dx(n_density), std::max(l1_total(n_density), 1e-300), opt);
}

InverseResult apply_right_inverse_source(const TransverseOperator& op, const GridFunction& source,
                                         const InverseOptions& opt) {
    require(source.grid == op.grid && source.components == op.components, ErrorKind::Dimension,
            "source does not live on the operator's grid");
    return sum_series(op, source, std::max(l1_total(source), 1e-300), opt);
}

LipschitzReport lipschitz_in_parameter(const std::function<TransverseOperator(double)>& family,
                                       const GridFunction& n_density, double eps0, const std::vector<double>& deltas,
                                       const InverseOptions& opt) {
    LipschitzReport rep;
    const auto op0 = family(eps0);
    const auto b0 = apply_right_inverse(op0, n_density, opt).b;
    GridFunction delta(n_density.grid, n_density.components);
    delta.at(n_density.grid.center_index(), 0) = 1.0 / n_density.grid.spacing();
    const auto k0 = apply_right_inverse(op0, delta, opt).b;
    for (double d : deltas) {
        require(d != 0.0, ErrorKind::Argument, "parameter step must be nonzero");
        const auto op = family(eps0 + d);
        const auto b = apply_right_inverse(op, n_density, opt).b;
        const auto kk = apply_right_inverse(op, delta, opt).b;
        rep.deltas.push_back(d);
        rep.b_quotients.push_back(l2_norm(b.grid, b.components, Vec(b.values - b0.values)) / std::abs(d));
        rep.kernel_quotients.push_back(l2_norm(kk.grid, kk.components, Vec(kk.values - k0.values)) / std::abs(d));
    }
    return rep;
}

}  // namespace hopfshock
