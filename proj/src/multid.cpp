#include "hopfshock/multid.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>

#include <Eigen/Eigenvalues>
#include <fftw3.h>
#include <fmt/format.h>
#include <json.hpp>

#include "hopfshock/error.hpp"
#include "hopfshock/svg.hpp"

namespace hopfshock {

namespace {

// FFTW's planner is not thread-safe; execution is.
std::mutex& fftw_planner_mutex() {
    static std::mutex mu;
    return mu;
}

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

CVec central_dx_complex(const Grid1D& g, std::size_t n, const CVec& f) {
    const Vec re = central_dx(GridFunction(g, n, Vec(f.real()))).values;
    const Vec im = central_dx(GridFunction(g, n, Vec(f.imag()))).values;
    return re.cast<Complex>() + Complex(0, 1) * im.cast<Complex>();
}

bool is_zero_mode(const Mode& xi, std::size_t dims) {
    for (std::size_t j = 0; j < dims; ++j)
        if (xi[j] != 0) return false;
    return true;
}

Mode negate(const Mode& xi) { return {-xi[0], -xi[1]}; }

// First nonzero entry positive: one representative of each ±ξ pair.
bool leading_positive(const Mode& xi, std::size_t dims) {
    for (std::size_t j = 0; j < dims; ++j)
        if (xi[j] != 0) return xi[j] > 0;
    return false;
}

// Real diagonalizability of M: real spectrum and a well-conditioned eigenbasis.
bool real_semisimple(const Mat& M) {
    Eigen::EigenSolver<Mat> es(M);
    if (es.info() != Eigen::Success) return false;
    const double scale = std::max(1.0, M.norm());
    if (es.eigenvalues().imag().cwiseAbs().maxCoeff() > 1e-10 * scale) return false;
    const Eigen::JacobiSVD<Eigen::MatrixXcd> svd(es.eigenvectors());
    const auto& s = svd.singularValues();
    return s(s.size() - 1) > 1e-8 * s(0);
}

Vec project_out(const Projectors& P, const Vec& x) { return P.pi_tilde(x) - P.pi_zero(x); }

CVec project_out(const Projectors& P, const CVec& x) {
    const Vec re = project_out(P, Vec(x.real())), im = project_out(P, Vec(x.imag()));
    return re.cast<Complex>() + Complex(0, 1) * im.cast<Complex>();
}

Projectors zero_mode_projectors(const TransverseModeFamily& fam) {
    if (fam.L0.U.cols() > 0) {
        const auto pair = crossing_pair(fam.L0);
        return projections(fam.L0, &pair, fam.profile, fam.flux);
    }
    return projections(fam.L0, nullptr, fam.profile, fam.flux);
}

}  // namespace

double mode_norm2(const Mode& xi, std::size_t dims) {
    double s = 0.0;
    for (std::size_t j = 0; j < dims; ++j) s += static_cast<double>(xi[j]) * xi[j];
    return s;
}

// ------------------------------------------------------------ mode family

bool TransverseModeFamily::has_transverse_flux() const {
    for (const auto& Aj : A)
        for (const auto& m : Aj)
            if (m.cwiseAbs().maxCoeff() != 0.0) return true;
    return false;
}

ComplexLinearOperator TransverseModeFamily::mode(const Mode& xi) const {
    const std::size_t n = profile.dim;
    const std::size_t N = profile.grid.size();
    ComplexLinearOperator out;
    out.grid = L0.grid;
    out.components = L0.components;
    out.eps = L0.eps;
    out.order = L0.order;
    out.closure = L0.closure;
    out.bandwidth = L0.bandwidth;
    out.U = L0.U.cast<Complex>();
    out.V = L0.V.cast<Complex>();
    const double k2 = mode_norm2(xi, transverse_dim);
    std::vector<Eigen::Triplet<Complex>> trip;
    for (int r = 0; r < L0.band.outerSize(); ++r)
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(L0.band, r); it; ++it)
            trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), Complex(it.value()));
    for (std::size_t i = 0; i < N; ++i) {
        Eigen::MatrixXcd B = Eigen::MatrixXcd::Zero(idx(n), idx(n));
        for (std::size_t j = 0; j < transverse_dim; ++j)
            if (xi[j] != 0) B -= Complex(0, xi[j]) * A[j][i].cast<Complex>();
        for (std::size_t r = 0; r < n; ++r) {
            B(idx(r), idx(r)) -= k2;
            for (std::size_t c = 0; c < n; ++c)
                if (B(idx(r), idx(c)) != Complex(0.0))
                    trip.emplace_back(static_cast<int>(i * n + r), static_cast<int>(i * n + c), B(idx(r), idx(c)));
        }
    }
    out.band.resize(L0.band.rows(), L0.band.cols());
    out.band.setFromTriplets(trip.begin(), trip.end());
    return out;
}

DiscreteLinearOperator TransverseModeFamily::real_mode(const Mode& xi) const {
    if (is_zero_mode(xi, transverse_dim)) return L0;
    require(!has_transverse_flux(), ErrorKind::Argument, "L_ξ is complex when a transverse flux is present");
    DiscreteLinearOperator out = L0;
    Eigen::SparseMatrix<double, Eigen::RowMajor> I(L0.band.rows(), L0.band.cols());
    I.setIdentity();
    out.band = L0.band - mode_norm2(xi, transverse_dim) * I;
    return out;
}

TransverseModeFamily assemble_mode_family(const ShockProfile& profile, const FluxFamily& flux,
                                          const std::vector<FluxFamily>& transverse, const LinopOptions& linop,
                                          int xi_max) {
    require(!transverse.empty() && transverse.size() <= 2, ErrorKind::Configuration,
            "only rectangular tori with one or two transverse directions are supported");
    require(xi_max >= 1, ErrorKind::Argument, "mode cutoff must be at least 1");
    TransverseModeFamily fam;
    fam.transverse_dim = transverse.size();
    fam.xi_max = xi_max;
    fam.eps = profile.eps;
    fam.flux = flux;
    fam.transverse = transverse;
    fam.profile = profile;
    fam.L0 = assemble_L(profile, flux, linop);
    for (const auto& Fj : transverse) {
        require(Fj.dim == profile.dim, ErrorKind::Dimension, "transverse flux dimension differs");
        fam.A.push_back(profile_jacobians(profile, Fj));
    }

    // hyperbolicity of every real direction at both endstates
    for (const Vec* u : {&profile.u_minus, &profile.u_plus}) {
        const Mat A1 = flux.jacobian(profile.eps, *u);
        std::vector<Mat> Aj;
        for (const auto& Fj : transverse) Aj.push_back(Fj.jacobian(profile.eps, *u));
        for (int s = 0; s < 64; ++s) {
            const double th = std::numbers::pi * s / 64.0;
            Mat M = std::cos(th) * A1;
            if (fam.transverse_dim == 1) {
                M += std::sin(th) * Aj[0];
            } else {
                for (int q = 0; q < 8; ++q) {
                    const double ph = std::numbers::pi * q / 8.0;
                    const Mat M2 = M + std::sin(th) * (std::cos(ph) * Aj[0] + std::sin(ph) * Aj[1]);
                    if (!real_semisimple(M2))
                        fail(ErrorKind::SpectralAssumption, "transverse symbol not real semisimple at an endstate");
                }
                continue;
            }
            if (!real_semisimple(M))
                fail(ErrorKind::SpectralAssumption, "transverse symbol not real semisimple at an endstate");
        }
    }

    double eta = std::numeric_limits<double>::infinity();
    const Mode unit[] = {{1, 0}, {0, 1}, {1, 1}};
    for (const auto& xi : unit) {
        if (fam.transverse_dim == 1 && xi[1] != 0) continue;
        eta = std::min(eta, -dispersion_max_real(fam, xi) / mode_norm2(xi, fam.transverse_dim));
    }
    fam.eta = eta;
    return fam;
}

double dispersion_max_real(const TransverseModeFamily& fam, const Mode& xi, double zeta_max, std::size_t samples) {
    require(samples >= 2, ErrorKind::Argument, "need at least two ζ samples");
    const auto& p = fam.profile;
    const double k2 = mode_norm2(xi, fam.transverse_dim);
    double best = -std::numeric_limits<double>::infinity();
    for (const Vec* u : {&p.u_minus, &p.u_plus}) {
        const Mat A1 = fam.flux.jacobian(p.eps, *u);
        Mat At = Mat::Zero(A1.rows(), A1.cols());
        for (std::size_t j = 0; j < fam.transverse_dim; ++j)
            At += static_cast<double>(xi[j]) * fam.transverse[j].jacobian(p.eps, *u);
        for (std::size_t s = 0; s < samples; ++s) {
            const double z = -zeta_max + 2.0 * zeta_max * static_cast<double>(s) / static_cast<double>(samples - 1);
            const Eigen::MatrixXcd M = Complex(0, -1) * (z * A1 + At).cast<Complex>();
            const Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(M);
            best = std::max(best, es.eigenvalues().real().maxCoeff() - z * z - k2);
        }
    }
    return best;
}

GapFit gap_decay(const TransverseModeFamily& fam, const Mode& xi, const CVec& f, double t0, double t1,
                 std::size_t steps) {
    require(t1 > t0 && t0 >= 0.0, ErrorKind::Argument, "need 0 ≤ t0 < t1");
    require(steps >= 4, ErrorKind::Argument, "too few steps");
    for (std::size_t j = 0; j < fam.transverse_dim; ++j)
        require(std::abs(xi[j]) <= fam.xi_max, ErrorKind::Argument, "mode beyond the cutoff");
    const Grid1D& g = fam.profile.grid;
    const std::size_t n = fam.profile.dim;
    require(f.size() == static_cast<Eigen::Index>(g.size() * n), ErrorKind::Dimension, "initial data has the wrong size");

    const bool zero = is_zero_mode(xi, fam.transverse_dim);
    std::optional<Projectors> proj;
    if (zero) proj = zero_mode_projectors(fam);
    const auto L = fam.mode(xi);
    const double dt = t1 / static_cast<double>(steps);
    const ShiftedSolver<Complex> solver(L, Complex(1.0), Complex(-0.5 * dt));

    GapFit fit;
    fit.xi = xi;
    fit.predicted = fam.eta * mode_norm2(xi, fam.transverse_dim);
    CVec u = proj ? project_out(*proj, f) : f;
    for (std::size_t k = 1; k <= steps; ++k) {
        if (k <= 1) {
            // Rannacher start: two implicit-Euler half steps
            u = solver.solve(solver.solve(u));
        } else {
            u = solver.solve(CVec(u + 0.5 * dt * L.apply(u)));
        }
        if (proj) u = project_out(*proj, u);
        const double t = static_cast<double>(k) * dt;
        if (t >= t0 - 1e-12) {
            fit.t.push_back(t);
            fit.norm.push_back(x1_norm(g, n, u));
        }
    }
    std::vector<double> lg(fit.norm.size());
    for (std::size_t k = 0; k < lg.size(); ++k) lg[k] = std::log(std::max(fit.norm[k], 1e-300));
    fit.rate = -fit_line(fit.t, lg).slope;
    return fit;
}

// ------------------------------------------------------------ cylinder fields

CylinderField::CylinderField(Grid1D grid, std::size_t components, std::size_t transverse_dim, int xi_max,
                             bool hermitian)
    : grid_(std::move(grid)), n_(components), dims_(transverse_dim), K_(xi_max), hermitian_(hermitian) {
    require(dims_ == 1 || dims_ == 2, ErrorKind::Configuration, "one or two transverse directions");
    require(K_ >= 0, ErrorKind::Argument, "negative mode cutoff");
    std::size_t m = 1;
    for (std::size_t j = 0; j < dims_; ++j) m *= static_cast<std::size_t>(2 * K_ + 1);
    coef_.assign(m, CVec::Zero(idx(grid_.size() * n_)));
}

std::size_t CylinderField::index(const Mode& xi) const {
    std::size_t k = 0, stride = 1;
    for (std::size_t j = 0; j < dims_; ++j) {
        require(std::abs(xi[j]) <= K_, ErrorKind::Argument, "mode beyond the cutoff");
        k += static_cast<std::size_t>(xi[j] + K_) * stride;
        stride *= static_cast<std::size_t>(2 * K_ + 1);
    }
    return k;
}

Mode CylinderField::mode_at(std::size_t index) const {
    Mode xi{0, 0};
    for (std::size_t j = 0; j < dims_; ++j) {
        xi[j] = static_cast<int>(index % static_cast<std::size_t>(2 * K_ + 1)) - K_;
        index /= static_cast<std::size_t>(2 * K_ + 1);
    }
    return xi;
}

double CylinderField::hermitian_defect() const {
    double d = 0.0;
    for (std::size_t k = 0; k < coef_.size(); ++k) {
        const CVec& other = coef_[index(negate(mode_at(k)))];
        d = std::max(d, (coef_[k] - other.conjugate()).cwiseAbs().maxCoeff());
    }
    return d;
}

namespace {

// Batched complex transform over the transverse directions, one batch per
// (node, component). sign = FFTW_BACKWARD synthesizes, FFTW_FORWARD analyzes.
void transverse_dft(fftw_complex* data, std::size_t batches, std::size_t dims, std::size_t P, int sign) {
    const int np = static_cast<int>(P);
    const int nn[2] = {np, np};
    const int total = dims == 1 ? np : np * np;
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(fftw_planner_mutex());
        plan = fftw_plan_many_dft(static_cast<int>(dims), nn, static_cast<int>(batches), data, nullptr, 1, total, data,
                                  nullptr, 1, total, sign, FFTW_ESTIMATE);
    }
    require(plan != nullptr, ErrorKind::Numerical, "FFTW plan creation failed");
    fftw_execute(plan);
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
}

std::size_t wrap(int k, std::size_t P) {
    const int p = static_cast<int>(P);
    return static_cast<std::size_t>(((k % p) + p) % p);
}

}  // namespace

std::vector<CVec> CylinderField::to_physical(std::size_t P) const {
    require(P >= static_cast<std::size_t>(2 * K_ + 1), ErrorKind::Argument, "too few transverse points for the modes");
    const std::size_t batches = grid_.size() * n_;
    const std::size_t total = dims_ == 1 ? P : P * P;
    auto* buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * batches * total));
    std::fill_n(reinterpret_cast<double*>(buf), 2 * batches * total, 0.0);
    for (std::size_t k = 0; k < coef_.size(); ++k) {
        const Mode xi = mode_at(k);
        const std::size_t t = dims_ == 1 ? wrap(xi[0], P) : wrap(xi[0], P) * P + wrap(xi[1], P);
        for (std::size_t m = 0; m < batches; ++m) {
            buf[m * total + t][0] = coef_[k][idx(m)].real();
            buf[m * total + t][1] = coef_[k][idx(m)].imag();
        }
    }
    transverse_dft(buf, batches, dims_, P, FFTW_BACKWARD);
    std::vector<CVec> out(total, CVec(idx(batches)));
    for (std::size_t m = 0; m < batches; ++m)
        for (std::size_t t = 0; t < total; ++t) out[t][idx(m)] = Complex(buf[m * total + t][0], buf[m * total + t][1]);
    fftw_free(buf);
    return out;
}

CylinderField CylinderField::from_physical(const std::vector<CVec>& samples, std::size_t P, const Grid1D& grid,
                                           std::size_t components, std::size_t transverse_dim, int xi_max) {
    CylinderField out(grid, components, transverse_dim, xi_max);
    require(P >= static_cast<std::size_t>(2 * xi_max + 1), ErrorKind::Argument, "too few transverse points");
    const std::size_t batches = grid.size() * components;
    const std::size_t total = transverse_dim == 1 ? P : P * P;
    require(samples.size() == total, ErrorKind::Dimension, "sample count does not match P^{d-1}");
    auto* buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * batches * total));
    bool real = true;
    for (std::size_t t = 0; t < total; ++t) {
        require(samples[t].size() == static_cast<Eigen::Index>(batches), ErrorKind::Dimension, "sample has wrong size");
        for (std::size_t m = 0; m < batches; ++m) {
            buf[m * total + t][0] = samples[t][idx(m)].real();
            buf[m * total + t][1] = samples[t][idx(m)].imag();
            if (samples[t][idx(m)].imag() != 0.0) real = false;
        }
    }
    transverse_dft(buf, batches, transverse_dim, P, FFTW_FORWARD);
    const double scale = 1.0 / static_cast<double>(total);
    for (std::size_t k = 0; k < out.modes(); ++k) {
        const Mode xi = out.mode_at(k);
        const std::size_t t = transverse_dim == 1 ? wrap(xi[0], P) : wrap(xi[0], P) * P + wrap(xi[1], P);
        for (std::size_t m = 0; m < batches; ++m)
            out.coef_[k][idx(m)] = scale * Complex(buf[m * total + t][0], buf[m * total + t][1]);
    }
    fftw_free(buf);
    out.hermitian_ = real;
    return out;
}

// ------------------------------------------------------------ mode-wise right inverse

TransverseOperator zero_mode_operator(const TransverseModeFamily& fam, double T, std::size_t substeps) {
    require(T > 0 && substeps >= 1, ErrorKind::Argument, "need a positive time and step count");
    auto proj = std::make_shared<const Projectors>(zero_mode_projectors(fam));
    auto stepper = std::make_shared<const SemigroupStepper>(fam.L0, T / static_cast<double>(substeps));
    TransverseOperator op;
    op.name = "mode_zero";
    op.grid = fam.profile.grid;
    op.components = fam.profile.dim;
    op.period = T;
    op.apply = [proj, stepper, substeps](const GridFunction& f) {
        Vec y = project_out(*proj, f.values);
        const Vec none;
        for (std::size_t k = 0; k < substeps; ++k) y = proj->pi_tilde(stepper->cn_step(y, none));
        return GridFunction(f.grid, f.components, y);
    };
    op.dx = central_dx;
    op.requires_projection = proj->has_pair;
    op.has_projection = true;
    return op;
}

MultidInverse multid_right_inverse(const TransverseModeFamily& fam, const CylinderField& n_density, double T, double tol,
                                   const InverseOptions& zero_opt, std::size_t substeps) {
    require(tol > 0 && T > 0, ErrorKind::Argument, "tolerance and period must be positive");
    require(n_density.transverse_dim() == fam.transverse_dim && n_density.grid() == fam.profile.grid &&
                n_density.components() == fam.profile.dim,
            ErrorKind::Dimension, "density does not match the family");
    require(n_density.xi_max() <= fam.xi_max, ErrorKind::Argument, "density has modes beyond the family cutoff");
    const Grid1D& g = fam.profile.grid;
    const std::size_t n = fam.profile.dim;
    const std::size_t dims = fam.transverse_dim;
    MultidInverse res{CylinderField(g, n, dims, n_density.xi_max(), n_density.hermitian()), {}, {}, 0.0};

    // ξ = 0: real and imaginary parts through the resummed 1-D series
    const Mode zero{0, 0};
    const CVec& n0 = n_density[zero];
    if (n0.cwiseAbs().maxCoeff() > 0.0) {
        const auto op = zero_mode_operator(fam, T, substeps);
        CVec b0 = CVec::Zero(n0.size());
        const Vec re = n0.real(), im = n0.imag();
        if (re.cwiseAbs().maxCoeff() > 0.0) {
            auto r = apply_right_inverse(op, GridFunction(g, n, re), zero_opt);
            b0 += r.b.values.cast<Complex>();
            res.zero_ledger = std::move(r.ledger);
        }
        if (im.cwiseAbs().maxCoeff() > 0.0)
            b0 += Complex(0, 1) * apply_right_inverse(op, GridFunction(g, n, im), zero_opt).b.values.cast<Complex>();
        res.b[zero] = b0;
    }

    // ξ ≠ 0: geometric sums, in mode order
    const double dt = T / static_cast<double>(substeps);
    double sup_src = 0.0, tails = 0.0;
    for (std::size_t k = 0; k < n_density.modes(); ++k) {
        const Mode xi = n_density.mode_at(k);
        if (is_zero_mode(xi, dims)) continue;
        const bool mirror = n_density.hermitian() && !leading_positive(xi, dims);
        ModeLedger led;
        led.xi = xi;
        const CVec src = central_dx_complex(g, n, n_density.at(k));
        sup_src = std::max(sup_src, x1_norm(g, n, src));
        if (mirror) {
            // filled from +ξ below; the ledger mirrors it
            res.ledgers.push_back(led);
            continue;
        }
        if (src.cwiseAbs().maxCoeff() > 0.0) {
            const auto L = fam.mode(xi);
            const ShiftedSolver<Complex> solver(L, Complex(1.0), Complex(-0.5 * dt));
            auto S = [&](CVec y) {
                for (std::size_t s = 0; s < substeps; ++s) y = solver.solve(CVec(y + 0.5 * dt * L.apply(y)));
                return y;
            };
            CVec term = src, sum = src;
            led.increments.push_back(l2_norm(g, n, term));
            while (led.increments.back() > tol) {
                require(led.increments.size() < 10000, ErrorKind::Nonconvergence,
                        fmt::format("mode ({}, {}) series did not reach the tolerance", xi[0], xi[1]));
                term = S(term);
                sum += term;
                led.increments.push_back(l2_norm(g, n, term));
            }
            led.terms = led.increments.size();
            if (led.increments.size() >= 2)
                led.contraction = led.increments.back() / led.increments[led.increments.size() - 2];
            led.tail_norm = x1_norm(g, n, sum);
            res.b.at(k) = sum;
        }
        res.ledgers.push_back(led);
    }
    if (n_density.hermitian()) {
        for (std::size_t k = 0; k < n_density.modes(); ++k) {
            const Mode xi = n_density.mode_at(k);
            if (is_zero_mode(xi, dims) || leading_positive(xi, dims)) continue;
            const std::size_t kp = res.b.index(negate(xi));
            res.b.at(k) = res.b.at(kp).conjugate();
        }
        for (auto& led : res.ledgers) {
            if (leading_positive(led.xi, dims)) continue;
            for (const auto& other : res.ledgers)
                if (other.xi == negate(led.xi)) {
                    const Mode keep = led.xi;
                    led = other;
                    led.xi = keep;
                }
        }
    }
    for (const auto& led : res.ledgers) tails += led.tail_norm;
    res.tail_constant = sup_src > 0 ? tails / sup_src : 0.0;
    return res;
}

// ------------------------------------------------------------ cylinder system

struct CylinderSystem::Plans {
    fftw_plan synth = nullptr;
    fftw_plan anal = nullptr;
    ~Plans() {
        std::lock_guard<std::mutex> lock(fftw_planner_mutex());
        if (synth) fftw_destroy_plan(synth);
        if (anal) fftw_destroy_plan(anal);
    }
};

namespace {

// Per-mode Crank-Nicolson; holds no reference to the system.
class CylinderStepper : public LinearStepper {
public:
    CylinderStepper(const std::vector<DiscreteLinearOperator>& L, std::size_t n, double dt)
        : n_(n), C_(n * L.size()), N_(L.front().grid.size()) {
        for (const auto& Lk : L) steps_.emplace_back(Lk, dt);
    }
    Vec cn_step(const Vec& v, const Vec& forcing) const override {
        Vec out(v.size());
        const Vec none;
        for (std::size_t k = 0; k < steps_.size(); ++k) {
            const Vec g = forcing.size() ? block(forcing, k) : none;
            const Vec r = steps_[k].cn_step(block(v, k), g);
            for (std::size_t i = 0; i < N_; ++i) out.segment(idx(i * C_ + k * n_), idx(n_)) = r.segment(idx(i * n_), idx(n_));
        }
        return out;
    }

private:
    Vec block(const Vec& u, std::size_t k) const {
        Vec b(idx(N_ * n_));
        for (std::size_t i = 0; i < N_; ++i) b.segment(idx(i * n_), idx(n_)) = u.segment(idx(i * C_ + k * n_), idx(n_));
        return b;
    }
    std::size_t n_, C_, N_;
    std::vector<SemigroupStepper> steps_;
};

}  // namespace

CylinderSystem::CylinderSystem(const FluxFamily& f, ShockProfile p, const CylinderOptions& opt,
                               const SpectralPair* seed)
    : flux(f), eps(p.eps), profile(std::move(p)), K(opt.xi_max), kstar(opt.crossing_mode) {
    require(K >= 0 && kstar >= 0 && kstar <= K, ErrorKind::Argument, "crossing mode outside 0..K");
    const std::size_t n = profile.dim;
    const std::size_t N = profile.grid.size();
    jac = profile_jacobians(profile, flux);
    flux_bar.reserve(N);
    for (std::size_t i = 0; i < N; ++i) flux_bar.push_back(flux.flux(eps, profile.state(i)));

    auto base = assemble_divergence_operator(profile.grid, n, jac, opt.order);
    base.eps = eps;
    Eigen::SparseMatrix<double, Eigen::RowMajor> I(base.band.rows(), base.band.cols());
    I.setIdentity();
    for (int k = 0; k <= K; ++k) {
        DiscreteLinearOperator Lk = base;
        if (k > 0) Lk.band = base.band - static_cast<double>(k * k) * I;
        if (k == kstar) plant_pair(Lk, profile, opt.planted);
        L.push_back(std::move(Lk));
    }
    const auto& Lc = L[static_cast<std::size_t>(kstar)];
    pair_ = seed ? track_pair(Lc, *seed) : crossing_pair(Lc);
    require(pair_.residual <= 1e-8, ErrorKind::Numerical, "crossing pair not resolved");
    require(pair_.unstable_others.empty(), ErrorKind::SpectralAssumption, "other unstable eigenvalues in the crossing mode");
    phi = pair_.phi;
    phi_left = pair_.phi_left;
    zero_proj = projections(L[0], kstar == 0 ? &pair_ : nullptr, profile, flux);

    // DCT-I collocation with 3/2 padding: products of two degree-K cosine
    // polynomials alias only into modes above K
    P = static_cast<std::size_t>(3 * K / 2 + 2);
    plans_ = std::make_shared<Plans>();
    const int np = static_cast<int>(P);
    const int howmany = static_cast<int>(N * n);
    const fftw_r2r_kind kind = FFTW_REDFT00;
    auto* a = static_cast<double*>(fftw_malloc(sizeof(double) * N * n * P));
    auto* b = static_cast<double*>(fftw_malloc(sizeof(double) * N * n * P));
    {
        std::lock_guard<std::mutex> lock(fftw_planner_mutex());
        plans_->synth = fftw_plan_many_r2r(1, &np, howmany, a, nullptr, 1, np, b, nullptr, 1, np, &kind, FFTW_ESTIMATE);
        plans_->anal = fftw_plan_many_r2r(1, &np, howmany, a, nullptr, 1, np, b, nullptr, 1, np, &kind, FFTW_ESTIMATE);
    }
    fftw_free(a);
    fftw_free(b);
    require(plans_->synth && plans_->anal, ErrorKind::Numerical, "FFTW plan creation failed");
}

Vec CylinderSystem::block(const Vec& u, int k) const {
    const std::size_t n = profile.dim, C = components(), N = profile.grid.size();
    Vec out(idx(N * n));
    for (std::size_t i = 0; i < N; ++i) out.segment(idx(i * n), idx(n)) = u.segment(idx(i * C + static_cast<std::size_t>(k) * n), idx(n));
    return out;
}

void CylinderSystem::set_block(Vec& u, int k, const Vec& f) const {
    const std::size_t n = profile.dim, C = components(), N = profile.grid.size();
    for (std::size_t i = 0; i < N; ++i) u.segment(idx(i * C + static_cast<std::size_t>(k) * n), idx(n)) = f.segment(idx(i * n), idx(n));
}

Vec CylinderSystem::synthesize(const Vec& u) const {
    const std::size_t n = profile.dim, C = components(), N = profile.grid.size();
    auto* in = static_cast<double*>(fftw_malloc(sizeof(double) * N * n * P));
    auto* out = static_cast<double*>(fftw_malloc(sizeof(double) * N * n * P));
    std::fill_n(in, N * n * P, 0.0);
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t c = 0; c < n; ++c)
            for (int k = 0; k <= K; ++k) {
                const double v = u[idx(i * C + static_cast<std::size_t>(k) * n + c)];
                in[(i * n + c) * P + static_cast<std::size_t>(k)] = k == 0 ? v : 0.5 * v;
            }
    fftw_execute_r2r(plans_->synth, in, out);
    Vec y = Eigen::Map<Vec>(out, idx(N * n * P));
    fftw_free(in);
    fftw_free(out);
    return y;
}

Vec CylinderSystem::analyze(const Vec& samples) const {
    const std::size_t n = profile.dim, C = components(), N = profile.grid.size();
    require(samples.size() == idx(N * n * P), ErrorKind::Dimension, "sample array has the wrong size");
    auto* in = static_cast<double*>(fftw_malloc(sizeof(double) * N * n * P));
    auto* out = static_cast<double*>(fftw_malloc(sizeof(double) * N * n * P));
    std::copy_n(samples.data(), N * n * P, in);
    fftw_execute_r2r(plans_->anal, in, out);
    const double s = 1.0 / static_cast<double>(P - 1);
    Vec u(idx(N * C));
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t c = 0; c < n; ++c)
            for (int k = 0; k <= K; ++k) {
                const double z = out[(i * n + c) * P + static_cast<std::size_t>(k)];
                u[idx(i * C + static_cast<std::size_t>(k) * n + c)] = k == 0 ? 0.5 * s * z : s * z;
            }
    fftw_free(in);
    fftw_free(out);
    return u;
}

Complex CylinderSystem::coordinate(const Vec& f) const {
    const Vec fk = block(f, kstar);
    return 2.0 * profile.grid.spacing() * (phi_left.array() * fk.array().cast<Complex>()).sum();
}

Vec CylinderSystem::from_coordinate(Complex w) const {
    Vec u = Vec::Zero(idx(size()));
    set_block(u, kstar, Vec((w * phi).real()));
    return u;
}

Vec CylinderSystem::pi_zero(const Vec& f) const {
    Vec u = Vec::Zero(f.size());
    set_block(u, 0, zero_proj.pi_zero(block(f, 0)));
    return u;
}

double CylinderSystem::zero_coordinate(const Vec& f) const {
    return inner(profile.grid, zero_proj.zero_left, block(f, 0));
}

Vec CylinderSystem::forcing(const Vec& u) const {
    const std::size_t n = profile.dim, N = profile.grid.size();
    const Vec y = synthesize(u);
    Vec q(y.size());
    Vec loc(idx(n));
    for (std::size_t i = 0; i < N; ++i) {
        const Vec ub = profile.state(i);
        for (std::size_t j = 0; j < P; ++j) {
            for (std::size_t c = 0; c < n; ++c) loc[idx(c)] = y[idx((i * n + c) * P + j)];
            const Vec qi = -flux.flux(eps, Vec(ub + loc)) + flux_bar[i] + jac[i] * loc;
            for (std::size_t c = 0; c < n; ++c) q[idx((i * n + c) * P + j)] = qi[idx(c)];
        }
    }
    return apply_dx(profile.grid, components(), analyze(q), L[0].order);
}

std::shared_ptr<const LinearStepper> CylinderSystem::stepper(double dt) const {
    return std::make_shared<CylinderStepper>(L, profile.dim, dt);
}

Vec CylinderSystem::background() const {
    Vec u = Vec::Zero(idx(size()));
    set_block(u, 0, profile.values.values);
    return u;
}

Vec CylinderSystem::far_left() const {
    Vec v = Vec::Zero(idx(components()));
    v.head(idx(profile.dim)) = profile.u_minus;
    return v;
}

Vec CylinderSystem::far_right() const {
    Vec v = Vec::Zero(idx(components()));
    v.head(idx(profile.dim)) = profile.u_plus;
    return v;
}

PoincareSystem assemble_cylinder_poincare(const FluxFamily& flux, const CylinderOptions& opt) {
    DynamicsFactory make = [flux, opt](double eps, const SpectralPair* seed) -> std::shared_ptr<const SplitDynamics> {
        return std::make_shared<CylinderSystem>(flux, solve_profile(flux, eps, opt.grid), opt, seed);
    };
    return assemble_poincare(fmt::format("cylinder_{}_k{}", flux.name, opt.crossing_mode), std::move(make), opt.flow,
                             opt.series);
}

// ------------------------------------------------------------ cylinder orbits

CylinderOrbit multid_orbit(const PoincareSystem& ps, double a, const OrbitOptions& opt) {
    CylinderOrbit co;
    co.orbit = find_periodic_orbit(ps, a, opt);
    const auto sys = std::dynamic_pointer_cast<const CylinderSystem>(ps.context->at(co.orbit.eps));
    require(sys != nullptr, ErrorKind::Argument, "not a cylinder Poincaré system");
    co.xi_max = sys->K;
    co.crossing_mode = sys->kstar;
    const std::size_t n = sys->profile.dim, N = sys->profile.grid.size(), P = sys->P;
    const Grid1D& g = sys->profile.grid;

    // least squares on {cos k*x₂, sin k*x₂} at the collocation points
    const double ks = static_cast<double>(sys->kstar);
    Mat B(idx(P), sys->kstar == 0 ? 1 : 2);
    for (std::size_t j = 0; j < P; ++j) {
        const double x2 = std::numbers::pi * static_cast<double>(j) / static_cast<double>(P - 1);
        B(idx(j), 0) = std::cos(ks * x2);
        if (sys->kstar != 0) B(idx(j), 1) = std::sin(ks * x2);
    }
    const Mat Bpinv = B.completeOrthogonalDecomposition().pseudoInverse();
    co.mode_energy.assign(static_cast<std::size_t>(sys->K + 1), 0.0);
    for (const auto& u : co.orbit.snapshots) {
        const Vec y = sys->synthesize(u);
        double res2 = 0.0, tot2 = 0.0;
        for (std::size_t m = 0; m < N * n; ++m) {
            const Vec col = y.segment(idx(m * P), idx(P));
            const Vec r = col - B * (Bpinv * col);
            res2 += r.squaredNorm();
            tot2 += col.squaredNorm();
        }
        if (tot2 > 0) co.cosine_fit_residual = std::max(co.cosine_fit_residual, std::sqrt(res2 / tot2));
        for (int k = 0; k <= sys->K; ++k) {
            const Vec bk = sys->block(u, k);
            co.mode_energy[static_cast<std::size_t>(k)] =
                std::max(co.mode_energy[static_cast<std::size_t>(k)], l2_norm(g, n, bk));
            if (2 * k > sys->K) co.tail_max = std::max(co.tail_max, bk.cwiseAbs().maxCoeff());
        }
    }
    co.tail_ok = co.tail_max <= 1e-10;
    return co;
}

std::string CylinderOrbit::to_json() const {
    auto j = nlohmann::json::parse(orbit.to_json());
    j["xi_max"] = xi_max;
    j["crossing_mode"] = crossing_mode;
    j["cosine_fit_residual"] = cosine_fit_residual;
    j["mode_energy"] = mode_energy;
    j["tail_max"] = tail_max;
    j["tail_ok"] = tail_ok;
    return j.dump();
}

std::string CylinderOrbit::mode_energy_csv() const {
    std::string s = "k,energy\n";
    for (std::size_t k = 0; k < mode_energy.size(); ++k) s += fmt::format("{},{:.17g}\n", k, mode_energy[k]);
    return s;
}

std::string CylinderOrbit::frame_svg(std::size_t frame, std::size_t component, std::size_t transverse_points) const {
    require(frame < orbit.snapshots.size(), ErrorKind::Argument, "frame out of range");
    const std::size_t C = orbit.components;
    const std::size_t modes = static_cast<std::size_t>(xi_max + 1);
    const std::size_t n = C / modes;
    require(component < n, ErrorKind::Argument, "component out of range");
    const Vec& u = orbit.snapshots[frame];
    const std::size_t N = orbit.grid.size();
    const std::size_t stride = std::max<std::size_t>(1, N / 300);
    const std::size_t cols = (N + stride - 1) / stride;
    std::vector<double> vals;
    vals.reserve(transverse_points * cols);
    for (std::size_t r = 0; r < transverse_points; ++r) {
        const double x2 = 2.0 * std::numbers::pi * static_cast<double>(r) / static_cast<double>(transverse_points);
        for (std::size_t i = 0; i < N; i += stride) {
            double s = 0.0;
            for (std::size_t k = 0; k < modes; ++k)
                s += u[idx(i * C + k * n + component)] * std::cos(static_cast<double>(k) * x2);
            vals.push_back(s);
        }
    }
    return svg::heatmap({fmt::format("u - ubar, component {}, t = {:.4f}", component, orbit.snapshot_t[frame]), "x1", "x2"},
                        vals, transverse_points, cols, -orbit.grid.half_width(), orbit.grid.half_width(), 0.0,
                        2.0 * std::numbers::pi);
}

}  // namespace hopfshock
